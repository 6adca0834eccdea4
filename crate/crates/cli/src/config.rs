//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Keys may appear at most once per file. Command-line flags are applied
//! after the file and win.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use qmeas_core::sampling::{Binning, DeviceNoise, Tolerances};
use qmeas_core::state::{PhysicalUnits, ELECTRON_MASS_SI, HBAR_SI};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitsPreset {
    Natural,
    Si,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSource {
    Harmonic,
    /// CSV with header `x,V` on a uniform grid.
    Table(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservableChoice {
    Hamiltonian,
    Position,
    Momentum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateChoice {
    /// The chosen eigenstate itself.
    In,
    /// Its image through the measurement channel.
    Pd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetChoice {
    /// Spectral for the Hamiltonian, density draws for position.
    Auto,
    Spectral,
    Position,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub units: UnitsPreset,
    pub hbar: Option<f64>,
    pub mass: Option<f64>,
    pub omega: Option<f64>,
    pub grid_n: usize,
    pub domain: f64,
    pub potential: PotentialSource,
    pub k: usize,
    pub state: usize,
    pub observable: ObservableChoice,
    pub gamma: f64,
    pub lambda: Option<f64>,
    pub kernel_file: Option<PathBuf>,
    pub n_samples: usize,
    pub seed: u64,
    pub noise: f64,
    pub target: TargetChoice,
    pub k_max: usize,
    pub truth: StateChoice,
    pub against: StateChoice,
    pub tolerance_mean: f64,
    pub tolerance_dev: f64,
    pub tolerance_abs: f64,
    pub binning: Binning,
    pub gammas: Vec<f64>,
    pub trials: usize,
    pub sizes: Vec<usize>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let tol = Tolerances::default();
        RunConfig {
            units: UnitsPreset::Natural,
            hbar: None,
            mass: None,
            omega: None,
            grid_n: 2048,
            domain: 12.0,
            potential: PotentialSource::Harmonic,
            k: 5,
            state: 0,
            observable: ObservableChoice::Hamiltonian,
            gamma: 0.0,
            lambda: None,
            kernel_file: None,
            n_samples: 100_000,
            seed: 0,
            noise: 0.0,
            target: TargetChoice::Auto,
            k_max: 40,
            truth: StateChoice::Pd,
            against: StateChoice::Pd,
            tolerance_mean: tol.mean_rel,
            tolerance_dev: tol.dev_rel,
            tolerance_abs: tol.abs_threshold,
            binning: Binning::FreedmanDiaconis,
            gammas: vec![0.1, 0.5, 1.0, 2.0],
            trials: 10_000,
            sizes: vec![1, 10, 100, 1000],
            out: None,
        }
    }
}

/// Default SI angular frequency (rad/s) when only `units = si` is given.
pub const SI_DEFAULT_OMEGA: f64 = 1.0e15;

pub const KEYS: [&str; 28] = [
    "units",
    "hbar",
    "mass",
    "omega",
    "grid_n",
    "domain",
    "potential",
    "k",
    "state",
    "observable",
    "gamma",
    "lambda",
    "kernel_file",
    "n_samples",
    "seed",
    "noise",
    "target",
    "k_max",
    "truth",
    "against",
    "tolerance_mean",
    "tolerance_dev",
    "tolerance_abs",
    "binning",
    "gammas",
    "trials",
    "sizes",
    "out",
];

fn bad(key: &str, value: &str, why: &str) -> CliError {
    CliError::Config(format!("{key} = {value:?}: {why}"))
}

fn parse_f64(key: &str, value: &str) -> Result<f64, CliError> {
    let v: f64 = value.parse().map_err(|_| bad(key, value, "expected a number"))?;
    if !v.is_finite() {
        return Err(bad(key, value, "must be finite"));
    }
    Ok(v)
}

fn non_negative(key: &str, value: &str) -> Result<f64, CliError> {
    let v = parse_f64(key, value)?;
    if v < 0.0 {
        return Err(bad(key, value, "must be >= 0"));
    }
    Ok(v)
}

fn positive(key: &str, value: &str) -> Result<f64, CliError> {
    let v = parse_f64(key, value)?;
    if v <= 0.0 {
        return Err(bad(key, value, "must be > 0"));
    }
    Ok(v)
}

fn count(key: &str, value: &str, min: usize) -> Result<usize, CliError> {
    let v: usize = value.parse().map_err(|_| bad(key, value, "expected a non-negative integer"))?;
    if v < min {
        return Err(bad(key, value, &format!("must be >= {min}")));
    }
    Ok(v)
}

fn state_choice(key: &str, value: &str) -> Result<StateChoice, CliError> {
    match value {
        "in" => Ok(StateChoice::In),
        "pd" => Ok(StateChoice::Pd),
        _ => Err(bad(key, value, "expected in|pd")),
    }
}

fn list<T>(key: &str, value: &str, item: impl Fn(&str) -> Result<T, CliError>) -> Result<Vec<T>, CliError> {
    let items = value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(item).collect::<Result<Vec<_>, _>>()?;
    if items.is_empty() {
        return Err(bad(key, value, "expected a comma-separated list"));
    }
    Ok(items)
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        match key {
            "units" => {
                self.units = match value {
                    "natural" => UnitsPreset::Natural,
                    "si" => UnitsPreset::Si,
                    _ => return Err(bad(key, value, "expected natural|si")),
                }
            }
            "hbar" => self.hbar = Some(positive(key, value)?),
            "mass" => self.mass = Some(positive(key, value)?),
            "omega" => self.omega = Some(positive(key, value)?),
            "grid_n" => self.grid_n = count(key, value, 8)?,
            "domain" => self.domain = positive(key, value)?,
            "potential" => {
                self.potential = match value {
                    "harmonic" => PotentialSource::Harmonic,
                    "" => return Err(bad(key, value, "expected harmonic or a file path")),
                    path => PotentialSource::Table(PathBuf::from(path)),
                }
            }
            "k" => self.k = count(key, value, 1)?,
            "state" => self.state = count(key, value, 0)?,
            "observable" => {
                self.observable = match value {
                    "hamiltonian" | "energy" => ObservableChoice::Hamiltonian,
                    "position" => ObservableChoice::Position,
                    "momentum" => ObservableChoice::Momentum,
                    _ => return Err(bad(key, value, "expected hamiltonian|position|momentum")),
                }
            }
            "gamma" => self.gamma = non_negative(key, value)?,
            "lambda" => self.lambda = Some(non_negative(key, value)?),
            "kernel_file" => self.kernel_file = (!value.is_empty()).then(|| PathBuf::from(value)),
            "n_samples" => self.n_samples = count(key, value, 1)?,
            "seed" => self.seed = value.parse().map_err(|_| bad(key, value, "expected an unsigned 64-bit integer"))?,
            "noise" => self.noise = non_negative(key, value)?,
            "target" => {
                self.target = match value {
                    "auto" => TargetChoice::Auto,
                    "spectral" => TargetChoice::Spectral,
                    "position" => TargetChoice::Position,
                    _ => return Err(bad(key, value, "expected auto|spectral|position")),
                }
            }
            "k_max" => self.k_max = count(key, value, 1)?,
            "truth" => self.truth = state_choice(key, value)?,
            "against" => self.against = state_choice(key, value)?,
            "tolerance_mean" => self.tolerance_mean = positive(key, value)?,
            "tolerance_dev" => self.tolerance_dev = positive(key, value)?,
            "tolerance_abs" => self.tolerance_abs = non_negative(key, value)?,
            "binning" => {
                self.binning = match value {
                    "fd" | "freedman-diaconis" => Binning::FreedmanDiaconis,
                    "distinct" => Binning::Distinct,
                    _ => Binning::Width(positive(key, value).map_err(|_| bad(key, value, "expected fd|distinct|<width>"))?),
                }
            }
            "gammas" => self.gammas = list(key, value, |s| non_negative(key, s))?,
            "trials" => self.trials = count(key, value, qmeas_core::sampling::MIN_TRIALS)?,
            "sizes" => self.sizes = list(key, value, |s| count(key, s, 1))?,
            "out" => self.out = (!value.is_empty()).then(|| PathBuf::from(value)),
            _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses the text of a config file on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim();
            if seen.insert(key.to_string(), lineno + 1).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key {key:?}", lineno + 1)));
            }
            cfg.set(key, value).map_err(|e| CliError::Config(format!("line {}: {}", lineno + 1, e.message())))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn physical_units(&self) -> Result<PhysicalUnits, CliError> {
        let (hbar, mass, omega) = match self.units {
            UnitsPreset::Natural => (1.0, 1.0, 1.0),
            UnitsPreset::Si => (HBAR_SI, ELECTRON_MASS_SI, SI_DEFAULT_OMEGA),
        };
        PhysicalUnits::new(self.hbar.unwrap_or(hbar), self.mass.unwrap_or(mass), self.omega.unwrap_or(omega))
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn noise_model(&self) -> DeviceNoise {
        if self.noise > 0.0 {
            DeviceNoise::AdditiveGaussian { width: self.noise }
        } else {
            DeviceNoise::None
        }
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances { mean_rel: self.tolerance_mean, dev_rel: self.tolerance_dev, abs_threshold: self.tolerance_abs }
    }

    pub fn lambda_width(&self) -> f64 {
        self.lambda.unwrap_or(self.gamma)
    }

    /// One `key=value` line per key in [`KEYS`] order, with referenced files
    /// replaced by the SHA-256 of their contents. The output directory is
    /// excluded so that relocating results does not change the hash.
    pub fn canonical(&self) -> Result<String, CliError> {
        let file_digest = |p: &Path| -> Result<String, CliError> {
            let bytes = std::fs::read(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            Ok(format!("sha256:{}", hex::encode(Sha256::digest(&bytes))))
        };
        let join = |xs: Vec<String>| xs.join(",");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let mut s = String::new();
        for key in KEYS {
            let value = match key {
                "units" => match self.units {
                    UnitsPreset::Natural => "natural".into(),
                    UnitsPreset::Si => "si".into(),
                },
                "hbar" => opt(self.hbar),
                "mass" => opt(self.mass),
                "omega" => opt(self.omega),
                "grid_n" => self.grid_n.to_string(),
                "domain" => format!("{:e}", self.domain),
                "potential" => match &self.potential {
                    PotentialSource::Harmonic => "harmonic".into(),
                    PotentialSource::Table(p) => file_digest(p)?,
                },
                "k" => self.k.to_string(),
                "state" => self.state.to_string(),
                "observable" => format!("{:?}", self.observable).to_lowercase(),
                "gamma" => format!("{:e}", self.gamma),
                "lambda" => opt(self.lambda),
                "kernel_file" => match &self.kernel_file {
                    Some(p) => file_digest(p)?,
                    None => String::new(),
                },
                "n_samples" => self.n_samples.to_string(),
                "seed" => self.seed.to_string(),
                "noise" => format!("{:e}", self.noise),
                "target" => format!("{:?}", self.target).to_lowercase(),
                "k_max" => self.k_max.to_string(),
                "truth" => format!("{:?}", self.truth).to_lowercase(),
                "against" => format!("{:?}", self.against).to_lowercase(),
                "tolerance_mean" => format!("{:e}", self.tolerance_mean),
                "tolerance_dev" => format!("{:e}", self.tolerance_dev),
                "tolerance_abs" => format!("{:e}", self.tolerance_abs),
                "binning" => match self.binning {
                    Binning::FreedmanDiaconis => "fd".into(),
                    Binning::Distinct => "distinct".into(),
                    Binning::Width(w) => format!("{w:e}"),
                },
                "gammas" => join(self.gammas.iter().map(|g| format!("{g:e}")).collect()),
                "trials" => self.trials.to_string(),
                "sizes" => join(self.sizes.iter().map(|n| n.to_string()).collect()),
                "out" => continue,
                _ => unreachable!("every key is listed"),
            };
            writeln!(s, "{key}={value}").expect("writing to a String");
        }
        Ok(s)
    }

    pub fn config_hash(&self) -> Result<String, CliError> {
        Ok(hex::encode(Sha256::digest(self.canonical()?.as_bytes())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let cfg = RunConfig::parse("# run\n\ngamma = 1.5  # width\nseed=7\nunits = natural\n").unwrap();
        assert_eq!(cfg.gamma, 1.5);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.grid_n, 2048);
    }

    #[test]
    fn rejects_malformed_input() {
        for text in ["gamma", "gamma = -1", "nope = 1", "gamma = 1\ngamma = 2", "grid_n = 4", "units = cgs", "trials = 5"] {
            assert!(matches!(RunConfig::parse(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn lists() {
        let cfg = RunConfig::parse("gammas = 0, 0.5 ,1\nsizes = 1,10").unwrap();
        assert_eq!(cfg.gammas, vec![0.0, 0.5, 1.0]);
        assert_eq!(cfg.sizes, vec![1, 10]);
    }

    #[test]
    fn hash_ignores_output_dir_and_formatting() {
        let a = RunConfig::parse("gamma = 1\nout = a").unwrap();
        let b = RunConfig::parse("gamma=1.0\nout = b\n# other").unwrap();
        assert_eq!(a.config_hash().unwrap(), b.config_hash().unwrap());
        let c = RunConfig::parse("gamma = 1\nseed = 1").unwrap();
        assert_ne!(a.config_hash().unwrap(), c.config_hash().unwrap());
        assert_eq!(a.config_hash().unwrap().len(), 64);
    }

    #[test]
    fn every_key_is_settable() {
        let mut cfg = RunConfig::default();
        let samples = [
            ("units", "si"), ("hbar", "1"), ("mass", "1"), ("omega", "1"), ("grid_n", "64"), ("domain", "8"),
            ("potential", "harmonic"), ("k", "3"), ("state", "1"), ("observable", "position"), ("gamma", "0.2"),
            ("lambda", "0.3"), ("kernel_file", ""), ("n_samples", "10"), ("seed", "3"), ("noise", "0.1"),
            ("target", "spectral"), ("k_max", "4"), ("truth", "in"), ("against", "in"), ("tolerance_mean", "0.1"),
            ("tolerance_dev", "0.2"), ("tolerance_abs", "0.01"), ("binning", "0.5"), ("gammas", "1,2"),
            ("trials", "100"), ("sizes", "1,2"), ("out", "x"),
        ];
        assert_eq!(samples.len(), KEYS.len());
        for (k, v) in samples {
            cfg.set(k, v).unwrap();
        }
        assert!(cfg.canonical().unwrap().lines().count() == KEYS.len() - 1);
    }
}
