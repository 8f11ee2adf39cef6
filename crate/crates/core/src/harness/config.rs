//! Flat `key = value` experiment configuration.
//!
//! ```text
//! target.spectrum = 4 1
//! target.rotation_seed = 7
//! init.kind = identity
//! alphas = 1e-3 1e-6
//! epsilon = 0.5
//! grid.kind = log
//! grid.start = 1e-2
//! grid.stop = 1e3
//! grid.points = 200
//! outputs = out
//! oracle = false
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    File(PathBuf),
    Spectrum {
        spectrum: Vec<f64>,
        rotation_seed: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    Identity,
    File(PathBuf),
    /// Diagonal of `Σ²_{U₀}` in the target's eigenbasis.
    Spectral(Vec<f64>),
    /// I.i.d. standard normal `rows × cols` shape.
    Random { rows: usize, cols: usize, seed: u64 },
    /// `I + amplitude · (G + Gᵀ)/2` with `G` seeded standard normal.
    PerturbedIdentity { amplitude: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    Log { start: f64, stop: f64, points: usize },
    Linear { start: f64, stop: f64, points: usize },
    AutoFromSchedule { samples_per_interval: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub target: TargetSpec,
    pub zero_threshold: Option<f64>,
    pub init: InitSpec,
    pub rank_tolerance: Option<f64>,
    pub alphas: Vec<f64>,
    pub epsilon: f64,
    pub grid: GridSpec,
    pub outputs: PathBuf,
    pub oracle: bool,
    pub oracle_rel_tol: f64,
    pub oracle_abs_tol: f64,
    pub verify_samples: usize,
    pub workers: Option<usize>,
}

const KNOWN_KEYS: &[&str] = &[
    "target.file",
    "target.spectrum",
    "target.rotation_seed",
    "target.zero_threshold",
    "init.kind",
    "init.file",
    "init.sigma0",
    "init.rows",
    "init.cols",
    "init.seed",
    "init.amplitude",
    "init.rank_tolerance",
    "alphas",
    "epsilon",
    "grid.kind",
    "grid.start",
    "grid.stop",
    "grid.points",
    "grid.samples_per_interval",
    "outputs",
    "oracle",
    "oracle.rel_tol",
    "oracle.abs_tol",
    "verify.samples_per_interval",
    "workers",
];

fn invalid(msg: impl Into<String>) -> Error {
    Error::ConfigInvalid(msg.into())
}

struct Entries {
    map: BTreeMap<String, String>,
    base: PathBuf,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.raw(key).ok_or_else(|| invalid(format!("missing key {key}")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| invalid(format!("{key}: {e}"))))
            .transpose()
    }

    fn floats(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.raw(key)
            .map(|v| {
                v.split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|e| invalid(format!("{key}: {e}"))))
                    .collect()
            })
            .transpose()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(|v| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                self.base.join(p)
            }
        })
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("line {}: expected key = value", lineno + 1)))?;
            let k = k.trim().to_string();
            if !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(invalid(format!("line {}: unknown key {k}", lineno + 1)));
            }
            if map.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(invalid(format!("line {}: duplicate key {k}", lineno + 1)));
            }
        }
        let e = Entries {
            map,
            base: base.to_path_buf(),
        };

        let target = match (e.path("target.file"), e.floats("target.spectrum")?) {
            (Some(p), None) => TargetSpec::File(p),
            (None, Some(spectrum)) => TargetSpec::Spectrum {
                spectrum,
                rotation_seed: e.parse("target.rotation_seed")?,
            },
            _ => return Err(invalid("exactly one of target.file, target.spectrum is required")),
        };

        let init = match e.raw("init.kind").unwrap_or("identity") {
            "identity" => InitSpec::Identity,
            "file" => InitSpec::File(
                e.path("init.file")
                    .ok_or_else(|| invalid("init.kind = file needs init.file"))?,
            ),
            "spectral" => InitSpec::Spectral(
                e.floats("init.sigma0")?
                    .ok_or_else(|| invalid("init.kind = spectral needs init.sigma0"))?,
            ),
            "random" => InitSpec::Random {
                rows: e.parse("init.rows")?.ok_or_else(|| invalid("missing init.rows"))?,
                cols: e.parse("init.cols")?.ok_or_else(|| invalid("missing init.cols"))?,
                seed: e.parse("init.seed")?.ok_or_else(|| invalid("missing init.seed"))?,
            },
            "perturbed_identity" => InitSpec::PerturbedIdentity {
                amplitude: e
                    .parse("init.amplitude")?
                    .ok_or_else(|| invalid("missing init.amplitude"))?,
                seed: e.parse("init.seed")?.ok_or_else(|| invalid("missing init.seed"))?,
            },
            other => return Err(invalid(format!("unknown init.kind {other}"))),
        };

        let alphas = e
            .floats("alphas")?
            .ok_or_else(|| invalid("missing key alphas"))?;
        if alphas.is_empty() || alphas.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(invalid("alphas must be a nonempty list of positive numbers"));
        }
        let epsilon: f64 = e.required("epsilon")?.parse().map_err(|err| invalid(format!("epsilon: {err}")))?;
        if !(epsilon > 0.0) {
            return Err(invalid("epsilon must be positive"));
        }

        let grid = match e.raw("grid.kind").unwrap_or("log") {
            kind @ ("log" | "linear") => {
                let start: f64 = e.parse("grid.start")?.ok_or_else(|| invalid("missing grid.start"))?;
                let stop: f64 = e.parse("grid.stop")?.ok_or_else(|| invalid("missing grid.stop"))?;
                let points: usize = e.parse("grid.points")?.ok_or_else(|| invalid("missing grid.points"))?;
                if !(start < stop) || points < 2 || start < 0.0 {
                    return Err(invalid("grid needs 0 <= start < stop and points >= 2"));
                }
                if kind == "log" {
                    if start <= 0.0 {
                        return Err(invalid("log grid needs start > 0"));
                    }
                    GridSpec::Log { start, stop, points }
                } else {
                    GridSpec::Linear { start, stop, points }
                }
            }
            "auto" => {
                let samples_per_interval = e.parse("grid.samples_per_interval")?.unwrap_or(64);
                if samples_per_interval < 2 {
                    return Err(invalid("grid.samples_per_interval must be >= 2"));
                }
                GridSpec::AutoFromSchedule { samples_per_interval }
            }
            other => return Err(invalid(format!("unknown grid.kind {other}"))),
        };

        let workers: Option<usize> = e.parse("workers")?;
        if workers == Some(0) {
            return Err(invalid("workers must be positive"));
        }
        let verify_samples = e.parse("verify.samples_per_interval")?.unwrap_or(crate::schedule::DEFAULT_SAMPLES);
        if verify_samples == 0 {
            return Err(invalid("verify.samples_per_interval must be positive"));
        }

        Ok(Self {
            target,
            zero_threshold: e.parse("target.zero_threshold")?,
            init,
            rank_tolerance: e.parse("init.rank_tolerance")?,
            alphas,
            epsilon,
            grid,
            outputs: e.path("outputs").unwrap_or_else(|| base.join("out")),
            oracle: e.parse("oracle")?.unwrap_or(false),
            oracle_rel_tol: e.parse("oracle.rel_tol")?.unwrap_or(1e-9),
            oracle_abs_tol: e.parse("oracle.abs_tol")?.unwrap_or(1e-12),
            verify_samples,
            workers,
        })
    }
}
