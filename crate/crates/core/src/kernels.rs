//! Hot inner loops, compiled for several x86 vector widths and picked at
//! runtime. Every variant runs the same scalar operation sequence (no FMA
//! contraction), so results are bit-identical whichever one is chosen.

use std::sync::OnceLock;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Level {
    Baseline,
    #[cfg(target_arch = "x86_64")]
    Avx2,
    #[cfg(target_arch = "x86_64")]
    Avx512,
}

fn level() -> Level {
    static LEVEL: OnceLock<Level> = OnceLock::new();
    *LEVEL.get_or_init(|| {
        #[cfg(target_arch = "x86_64")]
        {
            if std::env::var_os("GCPSIM_NO_SIMD").is_none() {
                if is_x86_feature_detected!("avx512f") {
                    return Level::Avx512;
                }
                if is_x86_feature_detected!("avx2") {
                    return Level::Avx2;
                }
            }
        }
        Level::Baseline
    })
}

macro_rules! multiversion {
    ($(#[$meta:meta])* pub(crate) fn $name:ident($($arg:ident: $ty:ty),* $(,)?) $body:block) => {
        $(#[$meta])*
        pub(crate) fn $name($($arg: $ty),*) {
            #[inline(always)]
            fn body($($arg: $ty),*) $body

            #[cfg(target_arch = "x86_64")]
            #[target_feature(enable = "avx2")]
            unsafe fn avx2($($arg: $ty),*) {
                body($($arg),*)
            }

            #[cfg(target_arch = "x86_64")]
            #[target_feature(enable = "avx512f")]
            unsafe fn avx512($($arg: $ty),*) {
                body($($arg),*)
            }

            match level() {
                Level::Baseline => body($($arg),*),
                // SAFETY: the level is only selected after runtime detection.
                #[cfg(target_arch = "x86_64")]
                Level::Avx2 => unsafe { avx2($($arg),*) },
                #[cfg(target_arch = "x86_64")]
                Level::Avx512 => unsafe { avx512($($arg),*) },
            }
        }
    };
}

multiversion! {
    /// `o += sign·(t·a)` elementwise on split complex vectors, where the
    /// caller has already applied `sign` to `ai` (so `sign = −1` yields
    /// `conj(t)·conj(a′)`).
    pub(crate) fn complex_axpy(o_re: &mut [f64], o_im: &mut [f64], t_re: &[f64], t_im: &[f64], ar: f64, ai: f64, sign: f64) {
        let n = o_re.len();
        let (o_im, t_re, t_im) = (&mut o_im[..n], &t_re[..n], &t_im[..n]);
        for i in 0..n {
            let (tr, ti) = (t_re[i], t_im[i]);
            o_re[i] += tr * ar - ti * ai;
            o_im[i] += sign * (tr * ai + ti * ar);
        }
    }
}

multiversion! {
    /// `f *= 1 + p·z` elementwise on split complex vectors.
    pub(crate) fn complex_mul_affine(f_re: &mut [f64], f_im: &mut [f64], z_re: &[f64], z_im: &[f64], pr: f64, pi: f64) {
        let n = f_re.len();
        let (f_im, z_re, z_im) = (&mut f_im[..n], &z_re[..n], &z_im[..n]);
        for k in 0..n {
            let a = 1.0 + pr * z_re[k] - pi * z_im[k];
            let b = pr * z_im[k] + pi * z_re[k];
            let (x, y) = (f_re[k], f_im[k]);
            f_re[k] = x * a - y * b;
            f_im[k] = x * b + y * a;
        }
    }
}
