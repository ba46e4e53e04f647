//! Flat `key = value` run configuration.
//!
//! One setting per line; `#` starts a comment. Unknown keys, repeated keys
//! and malformed values are errors that carry the line number. Overrides
//! from the command line use the same syntax and report line 0.

use std::collections::BTreeSet;
use std::path::PathBuf;

use num_complex::Complex64;
use qjump::models::{DriveRamp, ModelParams};
use qjump::{Error, Result};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Jc,
    Kerr,
    Empty,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Initial {
    Vacuum,
    Coherent,
    Superposition,
    /// Meter states `√w |b₁⟩|α₁⟩ + √(1−w) |b₂⟩|α₂⟩` for projective readout.
    Meters,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub model: Model,
    pub g: f64,
    pub epsilon: f64,
    pub delta_omega: f64,
    pub gamma: f64,
    pub n_bar: f64,
    pub eta: f64,
    pub chi_ratio: Option<f64>,
    pub epsilon_ramp_start: Option<f64>,
    pub epsilon_ramp_stop: Option<f64>,
    pub ramp_duration: Option<f64>,

    pub l_max: usize,
    pub dt: Option<f64>,
    pub t_final: f64,
    pub seed: u64,
    pub n_traj: usize,
    pub workers: usize,
    pub sample_every: usize,
    pub snapshot_times: Vec<f64>,

    pub initial: Initial,
    pub alpha1: Option<(f64, f64)>,
    pub alpha2: Option<(f64, f64)>,
    pub meter_weight: f64,
    pub tol: f64,
    pub nu_steps: usize,
    pub grid_half_width: f64,
    pub grid_points: usize,
    pub record: Option<PathBuf>,
    pub window_start: Option<f64>,
    pub window_stop: Option<f64>,

    pub out_dir: Option<PathBuf>,
    pub formats: Vec<String>,

    #[serde(skip)]
    set: BTreeSet<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: Model::Jc,
            g: 0.0,
            epsilon: 0.0,
            delta_omega: 0.0,
            gamma: 0.0,
            n_bar: 0.0,
            eta: 1.0,
            chi_ratio: None,
            epsilon_ramp_start: None,
            epsilon_ramp_stop: None,
            ramp_duration: None,
            l_max: 25,
            dt: None,
            t_final: 10.0,
            seed: 1,
            n_traj: 1,
            workers: 0,
            sample_every: 10,
            snapshot_times: Vec::new(),
            initial: Initial::Vacuum,
            alpha1: None,
            alpha2: None,
            meter_weight: 0.5,
            tol: 1e-9,
            nu_steps: 10_000,
            grid_half_width: 6.0,
            grid_points: 121,
            record: None,
            window_start: None,
            window_stop: None,
            out_dir: None,
            formats: vec!["jsonl".into(), "csv".into()],
            set: BTreeSet::new(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "model",
    "g",
    "epsilon",
    "delta_omega",
    "gamma",
    "n_bar",
    "eta",
    "chi_ratio",
    "epsilon_ramp_start",
    "epsilon_ramp_stop",
    "ramp_duration",
    "l_max",
    "dt",
    "t_final",
    "seed",
    "n_traj",
    "workers",
    "sample_every",
    "snapshot_times",
    "initial",
    "alpha1",
    "alpha2",
    "meter_weight",
    "tol",
    "nu_steps",
    "grid_half_width",
    "grid_points",
    "record",
    "window_start",
    "window_stop",
    "out_dir",
    "formats",
];

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config { line, msg: msg.into() }
}

fn real(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|_| err(line, format!("{key}: '{v}' is not a number")))?;
    if !x.is_finite() {
        return Err(err(line, format!("{key}: value must be finite")));
    }
    Ok(x)
}

fn nonneg(line: usize, key: &str, v: &str) -> Result<f64> {
    let x = real(line, key, v)?;
    if x < 0.0 {
        return Err(err(line, format!("{key} must be non-negative")));
    }
    Ok(x)
}

fn int<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| err(line, format!("{key}: '{v}' is not a non-negative integer")))
}

/// Parses `1.7-5.15i`, `-2i`, `3`, or `re,im`.
pub fn parse_complex(s: &str) -> Option<Complex64> {
    let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if let Some((a, b)) = s.split_once(',') {
        return Some(Complex64::new(a.parse().ok()?, b.parse().ok()?));
    }
    let Some(body) = s.strip_suffix(['i', 'j']) else {
        return Some(Complex64::new(s.parse().ok()?, 0.0));
    };
    // split at the last sign that is not part of an exponent
    let bytes = body.as_bytes();
    let mut cut = None;
    for k in (1..bytes.len()).rev() {
        if (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E') {
            cut = Some(k);
            break;
        }
    }
    let im = |t: &str| -> Option<f64> {
        match t {
            "" | "+" => Some(1.0),
            "-" => Some(-1.0),
            _ => t.parse().ok(),
        }
    };
    match cut {
        Some(k) => Some(Complex64::new(body[..k].parse().ok()?, im(&body[k..])?)),
        None => Some(Complex64::new(0.0, im(body)?)),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| err(i + 1, format!("expected key = value, got '{line}'")))?;
            let k = k.trim();
            if cfg.set.contains(k) {
                return Err(err(i + 1, format!("key '{k}' given twice")));
            }
            cfg.set(k, v.trim(), i + 1)?;
        }
        Ok(cfg)
    }

    /// Applies a `key=value` override from the command line.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv.split_once('=').ok_or_else(|| err(0, format!("override '{kv}' is not key=value")))?;
        self.set(k.trim(), v.trim(), 0)
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.set.contains(key)
    }

    pub fn set(&mut self, key: &str, v: &str, line: usize) -> Result<()> {
        match key {
            "model" => {
                self.model = match v {
                    "jc" => Model::Jc,
                    "kerr" => Model::Kerr,
                    "empty" => Model::Empty,
                    _ => return Err(err(line, format!("model must be jc, kerr or empty, got '{v}'"))),
                }
            }
            "g" => self.g = nonneg(line, key, v)?,
            "epsilon" => self.epsilon = nonneg(line, key, v)?,
            "delta_omega" => self.delta_omega = real(line, key, v)?,
            "gamma" => self.gamma = nonneg(line, key, v)?,
            "n_bar" => self.n_bar = nonneg(line, key, v)?,
            "eta" => {
                let x = real(line, key, v)?;
                if !(0.0..=1.0).contains(&x) {
                    return Err(err(line, "eta must lie in [0, 1]"));
                }
                self.eta = x;
            }
            "chi_ratio" => {
                let x = real(line, key, v)?;
                if x <= 0.0 {
                    return Err(err(line, "chi_ratio must be positive"));
                }
                self.chi_ratio = Some(x);
            }
            "epsilon_ramp_start" => self.epsilon_ramp_start = Some(nonneg(line, key, v)?),
            "epsilon_ramp_stop" => self.epsilon_ramp_stop = Some(nonneg(line, key, v)?),
            "ramp_duration" => {
                let x = real(line, key, v)?;
                if x <= 0.0 {
                    return Err(err(line, "ramp_duration must be positive"));
                }
                self.ramp_duration = Some(x);
            }
            "l_max" => self.l_max = int(line, key, v)?,
            "dt" => {
                let x = real(line, key, v)?;
                if x <= 0.0 {
                    return Err(err(line, "dt must be positive"));
                }
                self.dt = Some(x);
            }
            "t_final" => self.t_final = nonneg(line, key, v)?,
            "seed" => self.seed = int(line, key, v)?,
            "n_traj" => self.n_traj = int(line, key, v)?,
            "workers" => self.workers = int(line, key, v)?,
            "sample_every" => self.sample_every = int(line, key, v)?,
            "snapshot_times" => {
                self.snapshot_times = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| nonneg(line, key, s))
                    .collect::<Result<_>>()?
            }
            "initial" => {
                self.initial = match v {
                    "vacuum" => Initial::Vacuum,
                    "coherent" => Initial::Coherent,
                    "superposition" => Initial::Superposition,
                    "meters" => Initial::Meters,
                    _ => return Err(err(line, format!("unknown initial state '{v}'"))),
                }
            }
            "alpha1" | "alpha2" => {
                let c = parse_complex(v).ok_or_else(|| err(line, format!("{key}: '{v}' is not a complex number")))?;
                let c = Some((c.re, c.im));
                if key == "alpha1" {
                    self.alpha1 = c;
                } else {
                    self.alpha2 = c;
                }
            }
            "meter_weight" => {
                let x = real(line, key, v)?;
                if !(0.0..=1.0).contains(&x) {
                    return Err(err(line, "meter_weight must lie in [0, 1]"));
                }
                self.meter_weight = x;
            }
            "tol" => self.tol = nonneg(line, key, v)?,
            "nu_steps" => self.nu_steps = int(line, key, v)?,
            "grid_half_width" => self.grid_half_width = nonneg(line, key, v)?,
            "grid_points" => self.grid_points = int(line, key, v)?,
            "record" => self.record = Some(PathBuf::from(v)),
            "window_start" => self.window_start = Some(real(line, key, v)?),
            "window_stop" => self.window_stop = Some(real(line, key, v)?),
            "out_dir" => self.out_dir = Some(PathBuf::from(v)),
            "formats" => self.formats = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
            _ => return Err(err(line, format!("unknown key '{key}' (known keys: {})", KEYS.join(", ")))),
        }
        self.set.insert(key.to_string());
        Ok(())
    }

    /// Cross-key checks; run before any computation.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(err(0, m));
        match self.model {
            Model::Jc => {
                if self.is_set("chi_ratio") {
                    return bad("chi_ratio applies to model = kerr only");
                }
            }
            Model::Kerr => {
                if self.is_set("g") || self.is_set("gamma") {
                    return bad("g and gamma apply to model = jc only");
                }
                if self.chi_ratio.is_none() {
                    return bad("model = kerr needs chi_ratio (kappa/chi)");
                }
            }
            Model::Empty => {
                if self.is_set("g") || self.is_set("gamma") || self.is_set("chi_ratio") {
                    return bad("g, gamma and chi_ratio do not apply to model = empty");
                }
            }
        }
        let ramp = [self.epsilon_ramp_start, self.epsilon_ramp_stop, self.ramp_duration];
        if ramp.iter().any(Option::is_some) && !ramp.iter().all(Option::is_some) {
            return bad("a drive ramp needs epsilon_ramp_start, epsilon_ramp_stop and ramp_duration");
        }
        if self.l_max < 1 {
            return bad("l_max must be at least 1");
        }
        if self.n_traj == 0 || self.sample_every == 0 || self.nu_steps == 0 {
            return bad("n_traj, sample_every and nu_steps must be positive");
        }
        if self.grid_points < 2 || self.grid_half_width <= 0.0 {
            return bad("grid needs grid_points >= 2 and grid_half_width > 0");
        }
        match self.initial {
            Initial::Vacuum => {}
            Initial::Coherent => {
                if self.alpha1.is_none() {
                    return bad("initial = coherent needs alpha1");
                }
            }
            Initial::Superposition | Initial::Meters => {
                if self.alpha1.is_none() || self.alpha2.is_none() {
                    return bad("this initial state needs alpha1 and alpha2");
                }
            }
        }
        self.params()?.validate()
    }

    pub fn params(&self) -> Result<ModelParams<f64>> {
        let mut p = match self.model {
            Model::Jc => ModelParams::jaynes_cummings(self.g, self.epsilon, self.delta_omega).with_gamma(self.gamma),
            Model::Kerr => ModelParams::kerr(self.chi_ratio.unwrap_or(1.0), self.epsilon, self.delta_omega),
            Model::Empty => ModelParams::empty_cavity(self.epsilon, self.delta_omega),
        }
        .with_thermal(self.n_bar, self.eta);
        if let (Some(start), Some(stop), Some(duration)) =
            (self.epsilon_ramp_start, self.epsilon_ramp_stop, self.ramp_duration)
        {
            p = p.with_ramp(DriveRamp { start, stop, duration });
        }
        Ok(p)
    }

    /// Time step: the configured value, else 0.002 (JC and empty cavity)
    /// or 0.0075 (Kerr).
    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(match self.model {
            Model::Kerr => 0.0075,
            _ => 0.002,
        })
    }

    pub fn alpha1(&self) -> Option<Complex64> {
        self.alpha1.map(|(r, i)| Complex64::new(r, i))
    }

    pub fn alpha2(&self) -> Option<Complex64> {
        self.alpha2.map(|(r, i)| Complex64::new(r, i))
    }

    /// Canonical JSON used for content addressing.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("serialisable")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_figure_style_config() {
        let c = RunConfig::parse(
            "# bistability\nmodel = jc\ng = 25\nepsilon = 5.3\ndelta_omega = -8\nl_max = 25 # truncation\nsnapshot_times = 1, 2.5\n",
        )
        .unwrap();
        assert_eq!(c.g, 25.0);
        assert_eq!(c.delta_omega, -8.0);
        assert_eq!(c.snapshot_times, vec![1.0, 2.5]);
        assert_eq!(c.dt(), 0.002);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_key_reports_line() {
        match RunConfig::parse("g = 1\nepsilonn = 2\n") {
            Err(Error::Config { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("epsilonn"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_and_malformed_values_fail() {
        assert!(RunConfig::parse("g = 1\ng = 2\n").is_err());
        assert!(RunConfig::parse("g = -1\n").is_err());
        assert!(RunConfig::parse("eta = 1.5\n").is_err());
        assert!(RunConfig::parse("seed = x\n").is_err());
        assert!(RunConfig::parse("just a line\n").is_err());
    }

    #[test]
    fn cross_key_validation() {
        let c = RunConfig::parse("model = kerr\nepsilon = 1\n").unwrap();
        assert!(c.validate().is_err());
        let c = RunConfig::parse("model = kerr\nchi_ratio = 2\ng = 1\n").unwrap();
        assert!(c.validate().is_err());
        let c = RunConfig::parse("epsilon_ramp_start = 0\n").unwrap();
        assert!(c.validate().is_err());
        let c = RunConfig::parse("initial = superposition\nalpha1 = 1+2i\n").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn overrides_use_same_rules() {
        let mut c = RunConfig::default();
        c.apply_override("g=3").unwrap();
        assert_eq!(c.g, 3.0);
        assert!(c.apply_override("nope=1").is_err());
        assert!(c.apply_override("g").is_err());
    }

    #[test]
    fn complex_literals() {
        let z = |s| parse_complex(s).unwrap();
        assert_eq!(z("1.7-5.15i"), Complex64::new(1.7, -5.15));
        assert_eq!(z("-2.25-0.2i"), Complex64::new(-2.25, -0.2));
        assert_eq!(z("3"), Complex64::new(3.0, 0.0));
        assert_eq!(z("-i"), Complex64::new(0.0, -1.0));
        assert_eq!(z("1e-3+2e+1i"), Complex64::new(1e-3, 20.0));
        assert_eq!(z("0.5, -1"), Complex64::new(0.5, -1.0));
        assert!(parse_complex("abc").is_none());
    }
}
