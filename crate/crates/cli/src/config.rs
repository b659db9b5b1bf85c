//! Experiment configuration: a flat `key = value` file merged with flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;
use weakmeter::meter::{Basis, GaussianMeter, NoiseKind, NoiseModel};
use weakmeter::oracle::{GridParams, DEFAULT_QUAD_POINTS};
use weakmeter::quantum::{Observable, SystemState, TwoStateVector};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Distribution,
    SnrCurve,
    Montecarlo,
    Validity,
    Backaction,
}

impl FromStr for Mode {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        <Mode as clap::ValueEnum>::from_str(s.trim(), true).map_err(|_| CliError::Config(format!("unknown mode '{s}'")))
    }
}

/// `none`, `q:WIDTH` or `p:WIDTH`.
pub fn parse_noise(s: &str) -> Result<NoiseModel, CliError> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("none") {
        return Ok(NoiseModel::none());
    }
    let (kind, width) = s
        .split_once(':')
        .ok_or_else(|| CliError::Config(format!("noise '{s}' is not none, q:WIDTH or p:WIDTH")))?;
    let kind = match kind.trim().to_ascii_lowercase().as_str() {
        "q" => NoiseKind::QShift,
        "p" => NoiseKind::PShift,
        other => return Err(CliError::Config(format!("unknown noise kind '{other}'"))),
    };
    let width: f64 = parse_num("noise width", width)?;
    Ok(NoiseModel::new(kind, width)?)
}

pub fn parse_basis(s: &str) -> Result<Basis, CliError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "q" => Ok(Basis::Q),
        "p" => Ok(Basis::P),
        other => Err(CliError::Config(format!("readout must be q or p, got '{other}'"))),
    }
}

/// Comma-separated list of reals; an empty string is an empty list.
pub fn parse_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| parse_num("sweep", t))
        .collect()
}

fn parse_num<T: FromStr>(key: &str, s: &str) -> Result<T, CliError> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse '{}'", s.trim())))
}

fn parse_complex(s: &str) -> Result<Complex64, CliError> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    t.parse()
        .map_err(|_| CliError::Config(format!("cannot parse complex literal '{}'", s.trim())))
}

fn parse_vector(s: &str) -> Result<Vec<Complex64>, CliError> {
    s.split(',').map(parse_complex).collect()
}

/// Rows separated by `;`, entries by `,`.
fn parse_matrix(s: &str) -> Result<Vec<Vec<Complex64>>, CliError> {
    s.split(';').filter(|r| !r.trim().is_empty()).map(parse_vector).collect()
}

/// Every setting, each optional; filled from the file and then from flags.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    pub mode: Option<Mode>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub w: Option<f64>,
    pub k: Option<f64>,
    pub delta: Option<f64>,
    pub delta_t: Option<f64>,
    pub noise: Option<NoiseModel>,
    pub readout: Option<Basis>,
    pub sweep: Option<Vec<f64>>,
    pub runs: Option<u64>,
    pub grid_points: Option<usize>,
    pub grid_half_width: Option<f64>,
    pub quad_points: Option<usize>,
    pub p0: Option<f64>,
    pub threshold: Option<f64>,
    pub threads: Option<usize>,
    pub pre: Option<Vec<Complex64>>,
    pub post: Option<Vec<Complex64>>,
    pub observable: Option<Vec<Vec<Complex64>>>,
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut s = Settings::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim().replace('-', "_");
            let v = value.trim();
            match key.as_str() {
                "mode" => s.mode = Some(v.parse()?),
                "out" => s.out = Some(PathBuf::from(v)),
                "seed" => s.seed = Some(parse_num(&key, v)?),
                "w" => s.w = Some(parse_num(&key, v)?),
                "k" => s.k = Some(parse_num(&key, v)?),
                "delta" => s.delta = Some(parse_num(&key, v)?),
                "delta_t" => s.delta_t = Some(parse_num(&key, v)?),
                "noise" => s.noise = Some(parse_noise(v)?),
                "readout" => s.readout = Some(parse_basis(v)?),
                "sweep" => s.sweep = Some(parse_list(v)?),
                "runs" => s.runs = Some(parse_num(&key, v)?),
                "grid_points" => s.grid_points = Some(parse_num(&key, v)?),
                "grid_half_width" => s.grid_half_width = Some(parse_num(&key, v)?),
                "quad_points" => s.quad_points = Some(parse_num(&key, v)?),
                "p0" => s.p0 = Some(parse_num(&key, v)?),
                "threshold" => s.threshold = Some(parse_num(&key, v)?),
                "threads" => s.threads = Some(parse_num(&key, v)?),
                "pre" => s.pre = Some(parse_vector(v)?),
                "post" => s.post = Some(parse_vector(v)?),
                "observable" => s.observable = Some(parse_matrix(v)?),
                other => return Err(CliError::Config(format!("line {}: unknown key '{other}'", lineno + 1))),
            }
        }
        Ok(s)
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(self, over: Settings) -> Settings {
        Settings {
            mode: over.mode.or(self.mode),
            out: over.out.or(self.out),
            seed: over.seed.or(self.seed),
            w: over.w.or(self.w),
            k: over.k.or(self.k),
            delta: over.delta.or(self.delta),
            delta_t: over.delta_t.or(self.delta_t),
            noise: over.noise.or(self.noise),
            readout: over.readout.or(self.readout),
            sweep: over.sweep.or(self.sweep),
            runs: over.runs.or(self.runs),
            grid_points: over.grid_points.or(self.grid_points),
            grid_half_width: over.grid_half_width.or(self.grid_half_width),
            quad_points: over.quad_points.or(self.quad_points),
            p0: over.p0.or(self.p0),
            threshold: over.threshold.or(self.threshold),
            threads: over.threads.or(self.threads),
            pre: over.pre.or(self.pre),
            post: over.post.or(self.post),
            observable: over.observable.or(self.observable),
        }
    }
}

/// The measured system: the built-in qubit example or explicit states.
#[derive(Debug, Clone)]
pub struct System {
    pub tsv: TwoStateVector,
    pub obs: Observable,
    /// Set for the built-in example with `C_w = i·w`.
    pub w: Option<f64>,
}

/// Validated configuration of one invocation.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub k: f64,
    pub delta: f64,
    pub delta_t: Option<f64>,
    pub noise: NoiseModel,
    pub readout: Basis,
    pub sweep: Option<Vec<f64>>,
    pub runs: u64,
    pub grid: GridParams,
    pub quad_points: usize,
    pub p0: f64,
    pub threshold: f64,
    pub threads: Option<usize>,
    w: Option<f64>,
    pre: Option<Vec<Complex64>>,
    post: Option<Vec<Complex64>>,
    observable: Option<Vec<Vec<Complex64>>>,
}

pub const DEFAULT_RUNS: u64 = 1_000_000;
pub const DEFAULT_SEED: u64 = 1;

impl ExperimentConfig {
    pub fn from_settings(s: Settings) -> Result<Self, CliError> {
        let mode = s.mode.ok_or_else(|| CliError::Config("no mode given".into()))?;
        let k = s.k.ok_or_else(|| CliError::Config("k is required".into()))?;
        if !k.is_finite() {
            return Err(CliError::Config("k must be finite".into()));
        }
        let delta = s.delta.unwrap_or(1.0);
        GaussianMeter::new(delta)?;
        if let Some(dt) = s.delta_t {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(CliError::Config(format!("delta-t must be positive, got {dt}")));
            }
        }
        let runs = s.runs.unwrap_or(DEFAULT_RUNS);
        if runs == 0 {
            return Err(CliError::Config("runs must be at least 1".into()));
        }
        if s.threads == Some(0) {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        let explicit = s.pre.is_some() || s.post.is_some() || s.observable.is_some();
        if explicit && s.w.is_some() {
            return Err(CliError::Config("give either w or pre/post/observable, not both".into()));
        }
        if !explicit && s.w.is_none() {
            return Err(CliError::Config("w (or pre, post and observable) is required".into()));
        }
        if explicit && (s.pre.is_none() || s.post.is_none() || s.observable.is_none()) {
            return Err(CliError::Config("pre, post and observable must all be given".into()));
        }
        let config = Self {
            mode,
            out: s.out,
            seed: s.seed.unwrap_or(DEFAULT_SEED),
            k,
            delta,
            delta_t: s.delta_t,
            noise: s.noise.unwrap_or_else(NoiseModel::none),
            readout: s.readout.unwrap_or(Basis::P),
            sweep: s.sweep,
            runs,
            grid: GridParams {
                n_points: s.grid_points,
                half_width: s.grid_half_width,
            },
            quad_points: s.quad_points.unwrap_or(DEFAULT_QUAD_POINTS),
            p0: s.p0.unwrap_or(1.0),
            threshold: s.threshold.unwrap_or(weakmeter::analytic::DEFAULT_VALIDITY_THRESHOLD),
            threads: s.threads,
            w: s.w,
            pre: s.pre,
            post: s.post,
            observable: s.observable,
        };
        config.system()?;
        Ok(config)
    }

    pub fn meter(&self) -> GaussianMeter {
        GaussianMeter::new(self.delta).expect("validated")
    }

    pub fn system(&self) -> Result<System, CliError> {
        if let Some(w) = self.w {
            let (tsv, obs) = TwoStateVector::qubit_example(w);
            return Ok(System { tsv, obs, w: Some(w) });
        }
        let pre = SystemState::new(self.pre.clone().expect("validated"))?;
        let post = SystemState::new(self.post.clone().expect("validated"))?;
        let obs = Observable::from_rows(self.observable.as_ref().expect("validated"))?;
        Ok(System {
            tsv: TwoStateVector::new(pre, post)?,
            obs,
            w: None,
        })
    }

    /// Noise models of the sweep points: the sweep replaces the width of
    /// the configured noise kind (P shift when none is configured).
    pub fn sweep_noises(&self) -> Result<Vec<NoiseModel>, CliError> {
        match &self.sweep {
            None => Ok(vec![self.noise]),
            Some(values) => {
                if values.is_empty() {
                    return Err(CliError::Config("sweep list is empty".into()));
                }
                let kind = match self.noise.kind() {
                    NoiseKind::None => NoiseKind::PShift,
                    kind => kind,
                };
                values.iter().map(|&v| Ok(NoiseModel::new(kind, v)?)).collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_literals() {
        assert_eq!(parse_noise("none").unwrap(), NoiseModel::none());
        assert_eq!(parse_noise("p:1").unwrap(), NoiseModel::p_shift(1.0).unwrap());
        assert_eq!(parse_noise("Q:0.5").unwrap(), NoiseModel::q_shift(0.5).unwrap());
        assert!(parse_noise("p:-1").is_err());
        assert!(parse_noise("x:1").is_err());
        assert!(parse_noise("p").is_err());
    }

    #[test]
    fn complex_literals() {
        assert_eq!(parse_complex("1+2i").unwrap(), Complex64::new(1.0, 2.0));
        assert_eq!(parse_complex(" -0.5 - 1i ").unwrap(), Complex64::new(-0.5, -1.0));
        assert_eq!(parse_complex("3").unwrap(), Complex64::new(3.0, 0.0));
        assert_eq!(parse_complex("-2i").unwrap(), Complex64::new(0.0, -2.0));
        let m = parse_matrix("1, 0; 0, -1").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[1][1], Complex64::new(-1.0, 0.0));
    }

    #[test]
    fn file_parsing_and_overlay() {
        let s = Settings::parse("mode = validity\nw = 8 # comment\nk=0.01\nnoise = p:1\n").unwrap();
        assert_eq!(s.mode, Some(Mode::Validity));
        let flags = Settings {
            k: Some(0.02),
            ..Default::default()
        };
        let merged = s.overlay(flags);
        assert_eq!(merged.k, Some(0.02));
        assert_eq!(merged.w, Some(8.0));
        assert!(Settings::parse("bogus = 1").is_err());
        assert!(Settings::parse("w 8").is_err());
        assert!(Settings::parse("mode = sideways").is_err());
    }

    #[test]
    fn explicit_system() {
        let s = Settings::parse(
            "mode = validity\nk = 0.01\npre = 3, -2\npost = 1, 1\nobservable = 1, 0; 0, -1\n",
        )
        .unwrap();
        let c = ExperimentConfig::from_settings(s).unwrap();
        let sys = c.system().unwrap();
        let cw = sys.tsv.weak_value(&sys.obs).unwrap();
        assert!((cw - Complex64::new(5.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn missing_and_conflicting_fields() {
        let base = "mode = validity\nk = 0.01\n";
        assert!(ExperimentConfig::from_settings(Settings::parse(base).unwrap()).is_err());
        let both = format!("{base}w = 1\npre = 1, 0\npost = 1, 1\nobservable = 1, 0; 0, -1\n");
        assert!(ExperimentConfig::from_settings(Settings::parse(&both).unwrap()).is_err());
        let partial = format!("{base}pre = 1, 0\n");
        assert!(ExperimentConfig::from_settings(Settings::parse(&partial).unwrap()).is_err());
        let zero = format!("{base}w = 1\nruns = 0\n");
        assert!(ExperimentConfig::from_settings(Settings::parse(&zero).unwrap()).is_err());
    }

    #[test]
    fn sweep_kind_follows_noise() {
        let s = Settings::parse("mode = snr-curve\nw = 8\nk = 0.01\nnoise = q:0\nsweep = 0, 1, 4\n").unwrap();
        let c = ExperimentConfig::from_settings(s).unwrap();
        let n = c.sweep_noises().unwrap();
        assert_eq!(n.len(), 3);
        assert!(n.iter().all(|m| m.kind() == NoiseKind::QShift));
        let s = Settings::parse("mode = snr-curve\nw = 8\nk = 0.01\nsweep = \n").unwrap();
        let c = ExperimentConfig::from_settings(s).unwrap();
        assert!(c.sweep_noises().is_err());
    }
}
