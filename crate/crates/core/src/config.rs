//! Run configuration, read from TOML.
//!
//! ```toml
//! ensembles = 1200000
//! blocks = 100
//! outputs = "out"
//!
//! [state]
//! kind = "thermal"
//! r = 1.0            # scalar broadcast over `modes`, or a list
//! epsilon = 0.0
//! modes = 20
//!
//! [network]
//! haar_seed = 42     # or matrix_file = "T.json"
//! t = 0.5
//!
//! [gcp]
//! d = 1
//!
//! [seeds]
//! ensemble = 1
//! faker = 2
//! partition = 3
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gcp::{partition_modes, GcpSpec, DEFAULT_BLOCKS};
use crate::network::{generate_haar_unitary, make_transmission, TransmissionMatrix};
use crate::sampler::Representation;
use crate::states::{
    derive_moments, is_classical, GaussianInputSpec, GaussianModeMoments, StateKind,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Squeezing {
    Scalar(f64),
    List(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub kind: StateKind,
    pub r: Squeezing,
    #[serde(default)]
    pub epsilon: f64,
    pub modes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photons: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub haar_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix_file: Option<PathBuf>,
    #[serde(default = "one")]
    pub t: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GcpConfig {
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsets: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation_seed: Option<u64>,
    #[serde(default = "default_permutation_tests")]
    pub n_permutation_tests: usize,
}

fn default_d() -> usize {
    1
}

fn default_permutation_tests() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    pub ensemble: u64,
    pub faker: u64,
    pub partition: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Experimental pattern file for `compare` and `permtest`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patterns: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepresentationChoice {
    /// Diagonal P when every input mode is classical, positive P otherwise.
    #[default]
    Auto,
    PositiveP,
    DiagonalP,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub ensembles: usize,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    /// Classical patterns generated by `fake` (defaults to `ensembles`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fake_patterns: Option<usize>,
    #[serde(default)]
    pub representation: RepresentationChoice,
    #[serde(default = "default_outputs", skip_serializing)]
    pub outputs: PathBuf,
    pub state: StateConfig,
    pub network: NetworkConfig,
    #[serde(default = "default_gcp")]
    pub gcp: GcpConfig,
    pub seeds: SeedConfig,
    #[serde(default = "default_data")]
    pub data: DataConfig,
}

fn default_blocks() -> usize {
    DEFAULT_BLOCKS
}

fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

fn default_gcp() -> GcpConfig {
    GcpConfig {
        d: 1,
        subsets: None,
        permutation_seed: None,
        n_permutation_tests: default_permutation_tests(),
    }
}

fn default_data() -> DataConfig {
    DataConfig { patterns: None }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.network.matrix_file.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.data.patterns.as_mut() {
            resolve(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.network.haar_seed, &self.network.matrix_file) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "network takes either haar_seed or matrix_file, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "network needs haar_seed or matrix_file".into(),
                ))
            }
            (None, Some(p)) if !p.exists() => {
                return Err(Error::Config(format!(
                    "matrix file {} does not exist",
                    p.display()
                )))
            }
            _ => {}
        }
        if let Some(p) = &self.data.patterns {
            if !p.exists() {
                return Err(Error::Config(format!(
                    "pattern file {} does not exist",
                    p.display()
                )));
            }
        }
        if self.ensembles == 0 {
            return Err(Error::Config("ensembles must be positive".into()));
        }
        if self.gcp.subsets.is_some() && self.gcp.permutation_seed.is_some() {
            return Err(Error::Config(
                "gcp takes either subsets or permutation_seed, not both".into(),
            ));
        }
        self.input_spec().validate()
    }

    /// Applies `key=value` seed overrides (`ensemble`, `faker`, `partition`, `haar`).
    pub fn apply_seed_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| {
            Error::Config(format!("seed override '{assignment}' is not KEY=VALUE"))
        })?;
        let value: u64 = value.trim().parse().map_err(|_| {
            Error::Config(format!(
                "seed override '{assignment}' needs an unsigned integer"
            ))
        })?;
        match key.trim() {
            "ensemble" => self.seeds.ensemble = value,
            "faker" => self.seeds.faker = value,
            "partition" => self.seeds.partition = value,
            "haar" => {
                if self.network.matrix_file.is_some() {
                    return Err(Error::Config(
                        "haar seed override conflicts with matrix_file".into(),
                    ));
                }
                self.network.haar_seed = Some(value);
            }
            other => return Err(Error::Config(format!("unknown seed '{other}'"))),
        }
        Ok(())
    }

    pub fn input_spec(&self) -> GaussianInputSpec {
        let r = match &self.state.r {
            Squeezing::Scalar(r) => vec![*r; self.state.modes],
            Squeezing::List(v) => v.clone(),
        };
        GaussianInputSpec {
            kind: self.state.kind,
            r,
            epsilon: self.state.epsilon,
            modes: self.state.modes,
            photons: self.state.photons.clone(),
        }
    }

    pub fn moments(&self) -> Result<GaussianModeMoments> {
        derive_moments(&self.input_spec())
    }

    pub fn transmission(&self) -> Result<TransmissionMatrix> {
        let t = match (&self.network.haar_seed, &self.network.matrix_file) {
            (Some(seed), _) => make_transmission(
                &generate_haar_unitary(self.state.modes, *seed)?,
                self.network.t,
            )?,
            (None, Some(path)) => {
                let base = crate::io::read_matrix(path)?;
                if self.network.t == 1.0 {
                    base
                } else {
                    base.attenuate(self.network.t)?
                }
            }
            (None, None) => {
                return Err(Error::Config(
                    "network needs haar_seed or matrix_file".into(),
                ))
            }
        };
        if t.dim_in() != self.state.modes {
            return Err(Error::Config(format!(
                "network has {} inputs but the state has {} modes",
                t.dim_in(),
                self.state.modes
            )));
        }
        Ok(t)
    }

    pub fn representation(&self, moments: &GaussianModeMoments) -> Representation {
        match self.representation {
            RepresentationChoice::PositiveP => Representation::PositiveP,
            RepresentationChoice::DiagonalP => Representation::DiagonalP,
            RepresentationChoice::Auto => {
                if is_classical(moments).into_iter().all(|c| c) {
                    Representation::DiagonalP
                } else {
                    Representation::PositiveP
                }
            }
        }
    }

    /// Subset partition of the output modes.
    pub fn gcp_spec(&self, output_modes: usize) -> Result<GcpSpec> {
        match &self.gcp.subsets {
            Some(s) => GcpSpec::new(output_modes, s.clone()),
            None => partition_modes(output_modes, self.gcp.d, self.gcp.permutation_seed),
        }
    }

    pub fn fake_patterns(&self) -> usize {
        self.fake_patterns.unwrap_or(self.ensembles)
    }

    /// SHA-256 of the canonical effective configuration. The output
    /// directory is excluded so identical runs hash identically.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
ensembles = 1000
blocks = 10
outputs = "somewhere"

[state]
kind = "thermal"
r = 1.0
modes = 4

[network]
haar_seed = 42
t = 0.5

[gcp]
d = 2

[seeds]
ensemble = 1
faker = 2
partition = 3
"#;

    #[test]
    fn parses_and_broadcasts() {
        let cfg = RunConfig::from_toml(BASIC).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.input_spec().r, vec![1.0; 4]);
        assert_eq!(
            cfg.gcp_spec(4).unwrap().subsets(),
            &[vec![0, 1], vec![2, 3]]
        );
        assert_eq!(cfg.fake_patterns(), 1000);
        let m = cfg.moments().unwrap();
        assert_eq!(cfg.representation(&m), Representation::DiagonalP);
        assert_eq!(cfg.transmission().unwrap().dim_out(), 4);
    }

    #[test]
    fn hash_ignores_output_dir_but_not_seeds() {
        let a = RunConfig::from_toml(BASIC).unwrap();
        let mut b = a.clone();
        b.outputs = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.apply_seed_override("ensemble=9").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(b.seeds.ensemble, 9);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(RunConfig::from_toml("ensembles = 1").is_err());
        let unknown = BASIC.replace("blocks = 10", "blocks = 10\nbogus = 1");
        assert!(RunConfig::from_toml(&unknown).is_err());
        let mut cfg = RunConfig::from_toml(BASIC).unwrap();
        cfg.network.matrix_file = Some(PathBuf::from("/nonexistent/T.json"));
        assert!(cfg.validate().is_err());
        cfg.network.haar_seed = None;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::from_toml(BASIC).unwrap();
        assert!(cfg.apply_seed_override("ensemble").is_err());
        assert!(cfg.apply_seed_override("colour=3").is_err());
        assert!(cfg.apply_seed_override("faker=-1").is_err());
    }

    #[test]
    fn list_squeezing_with_vacuum_padding() {
        let text = BASIC
            .replace("r = 1.0", "r = [0.5, 0.5]")
            .replace("kind = \"thermal\"", "kind = \"pure_squeezed\"");
        let cfg = RunConfig::from_toml(&text).unwrap();
        let m = cfg.moments().unwrap();
        assert_eq!(m.n()[3], 0.0);
        assert_eq!(cfg.representation(&m), Representation::PositiveP);
    }
}
