use gcpsim::network::generate_haar_unitary;

/// E|U₀₀|² = 1/M for Haar unitaries, within five standard errors.
fn check_first_moment(m: usize, draws: u64) {
    let samples: Vec<f64> = (0..draws)
        .map(|seed| generate_haar_unitary(m, 90_000 + seed).unwrap().entries()[(0, 0)].norm_sqr())
        .collect();
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let expected = 1.0 / m as f64;
    assert!(
        (mean - expected).abs() < 5.0 * se,
        "M={m}: mean {mean} vs {expected} (se {se})"
    );
}

#[test]
fn mean_squared_modulus_m2() {
    check_first_moment(2, 10_000);
}

#[test]
fn mean_squared_modulus_m10() {
    check_first_moment(10, 10_000);
}

#[test]
fn mean_squared_modulus_m50() {
    check_first_moment(50, 10_000);
}

#[test]
fn off_diagonal_entries_share_the_moment() {
    // |U_ij|² is Beta(1, M−1) for every entry: variance (M−1)/(M²(M+1))
    let m = 10;
    let draws = 10_000u64;
    let samples: Vec<f64> = (0..draws)
        .map(|s| generate_haar_unitary(m, 7_000 + s).unwrap().entries()[(3, 8)].norm_sqr())
        .collect();
    let n = draws as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let mf = m as f64;
    let exact_var = (mf - 1.0) / (mf * mf * (mf + 1.0));
    assert!((mean - 1.0 / mf).abs() < 5.0 * (exact_var / n).sqrt());
    // sample variance of a Beta variable: loose 10% check
    assert!(
        (var / exact_var - 1.0).abs() < 0.1,
        "variance {var} vs {exact_var}"
    );
}
