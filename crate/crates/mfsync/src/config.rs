//! Run configuration: one TOML document with a section per subcommand.

use std::fmt;

use mfsync_core::fpf::{FilterConfig, FpfExperiment, ObservationFn};
use mfsync_core::learning::LearningConfig;
use mfsync_core::model::{CostSpec, ModelParams};
use mfsync_core::oracles::OracleCompareConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Simulate,
    Spectrum,
    Bifurcation,
    Learn,
    Fpf,
    OracleCompare,
}

impl Subcommand {
    pub fn as_str(self) -> &'static str {
        match self {
            Subcommand::Simulate => "simulate",
            Subcommand::Spectrum => "spectrum",
            Subcommand::Bifurcation => "bifurcation",
            Subcommand::Learn => "learn",
            Subcommand::Fpf => "fpf",
            Subcommand::OracleCompare => "oracle-compare",
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub simulate: SimulateSection,
    pub spectrum: SpectrumSection,
    pub bifurcation: BifurcationSection,
    pub learn: LearnSection,
    pub fpf: FpfSection,
    pub oracle_compare: OracleCompareSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// When set, the subcommand on the command line must match.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subcommand: Option<Subcommand>,
    /// TOML integers are signed, so seeds above `i64::MAX` are not
    /// representable in a document.
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    /// Steps between recorded rows.
    pub record_stride: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            subcommand: None,
            seed: 0,
            out: None,
            record_stride: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlKind {
    Free,
    Kuramoto,
    Parameterized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub n: usize,
    pub sigma_sq: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub penalty: f64,
    pub epsilon: f64,
    pub wave_speed: f64,
    pub dt: f64,
    pub horizon: f64,
    pub control: ControlKind,
    /// Common policy of every oscillator under `control = "parameterized"`.
    pub amplitude: f64,
    pub phase: f64,
    /// Write the per-oscillator trajectory file.
    pub trajectory: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        let p = ModelParams::default();
        Self {
            n: p.n,
            sigma_sq: 0.1,
            gamma: p.gamma,
            kappa: p.kappa,
            penalty: p.penalty,
            epsilon: p.epsilon,
            wave_speed: p.wave_speed,
            dt: p.dt,
            horizon: 500.0,
            control: ControlKind::Kuramoto,
            amplitude: 0.0,
            phase: 0.0,
            trajectory: true,
        }
    }
}

impl SimulateSection {
    pub fn model_params(&self) -> ModelParams {
        ModelParams {
            sigma: self.sigma_sq.sqrt(),
            gamma: self.gamma,
            penalty: self.penalty,
            kappa: self.kappa,
            epsilon: self.epsilon,
            wave_speed: self.wave_speed,
            n: self.n,
            dt: self.dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub sigma_sq: f64,
    pub gamma: f64,
    pub k: i32,
    /// Fourier coefficients `C₀, C₁, …` of the interaction cost.
    pub cost: Vec<f64>,
    /// Continuation grid; both default to the automatic range.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_min: Option<f64>,
    /// Also classify this penalty.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub penalty: Option<f64>,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            sigma_sq: 0.1,
            gamma: 0.05,
            k: 1,
            cost: CostSpec::kuramoto().fourier,
            r_max: None,
            r_min: None,
            penalty: None,
        }
    }
}

impl SpectrumSection {
    pub fn model_params(&self) -> ModelParams {
        ModelParams {
            gamma: self.gamma,
            ..ModelParams::default().with_sigma_sq(self.sigma_sq)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BifurcationSection {
    pub sigma_sq: f64,
    pub gammas: Vec<f64>,
    pub k: i32,
    pub cost: Vec<f64>,
}

impl Default for BifurcationSection {
    fn default() -> Self {
        Self {
            sigma_sq: 0.1,
            gammas: vec![0.0, 0.01, 0.02, 0.05, 0.1],
            k: 1,
            cost: CostSpec::kuramoto().fourier,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialPolicy {
    #[serde(rename = "A")]
    pub amplitude: f64,
    pub zeta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnSection {
    pub n: usize,
    /// Natural frequency of the learning oscillator.
    pub omega1: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub epsilon: f64,
    pub penalty: f64,
    pub horizon: f64,
    pub dt: f64,
    pub initial: InitialPolicy,
    /// Vector field of the single-oscillator learning ODE on a grid.
    pub portrait: bool,
    pub portrait_omega: f64,
    pub portrait_amplitude: [f64; 2],
    pub portrait_points: [usize; 2],
}

impl Default for LearnSection {
    fn default() -> Self {
        let c = LearningConfig::default();
        Self {
            n: c.n,
            omega1: c.omega1,
            gamma: c.gamma,
            sigma: c.sigma,
            kappa: c.kappa,
            epsilon: c.epsilon,
            penalty: c.penalty,
            horizon: c.horizon,
            dt: c.dt,
            initial: InitialPolicy {
                amplitude: c.initial_amplitude,
                zeta: c.initial_phase,
            },
            portrait: true,
            portrait_omega: 1.0,
            portrait_amplitude: [-10.0, 10.0],
            portrait_points: [41, 41],
        }
    }
}

impl LearnSection {
    pub fn learning_config(&self, seed: u64, record_stride: usize) -> LearningConfig {
        LearningConfig {
            n: self.n,
            omega1: self.omega1,
            gamma: self.gamma,
            sigma: self.sigma,
            kappa: self.kappa,
            epsilon: self.epsilon,
            penalty: self.penalty,
            horizon: self.horizon,
            dt: self.dt,
            initial_amplitude: self.initial.amplitude,
            initial_phase: self.initial.zeta,
            seed,
            record_stride,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FpfSection {
    pub omega0: f64,
    pub theta0: f64,
    pub sigma: f64,
    pub sigma_b: f64,
    pub gamma_f: f64,
    pub n: usize,
    pub dt: f64,
    pub horizon: f64,
    /// `h(θ) = cos(θ − h_shift)`.
    pub h_shift: f64,
    pub transient_fraction: f64,
    pub snapshot_times: Vec<f64>,
    pub bins: usize,
}

impl Default for FpfSection {
    fn default() -> Self {
        let f = FilterConfig::default();
        Self {
            omega0: f.omega0,
            theta0: f.theta0,
            sigma: f.sigma,
            sigma_b: f.sigma_b,
            gamma_f: f.gamma_f,
            n: f.n,
            dt: f.dt,
            horizon: 100.0,
            h_shift: 0.0,
            transient_fraction: 0.25,
            snapshot_times: vec![0.0, 2.0, 50.0, 100.0],
            bins: 64,
        }
    }
}

impl FpfSection {
    pub fn filter(&self) -> FilterConfig {
        FilterConfig {
            omega0: self.omega0,
            theta0: self.theta0,
            sigma: self.sigma,
            sigma_b: self.sigma_b,
            gamma_f: self.gamma_f,
            n: self.n,
            dt: self.dt,
            h: ObservationFn::Cos { shift: self.h_shift },
        }
    }

    pub fn experiment(&self, seed: u64) -> FpfExperiment {
        FpfExperiment {
            filter: self.filter(),
            horizon: self.horizon,
            seed,
            transient_fraction: self.transient_fraction,
            snapshot_times: self.snapshot_times.clone(),
            histogram_bins: self.bins,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleCompareSection {
    pub omega0: f64,
    pub theta0: f64,
    pub sigma: f64,
    pub sigma_b: f64,
    pub gamma_f: f64,
    pub n: usize,
    pub dt: f64,
    pub horizon: f64,
    pub h_shift: f64,
    pub grid_points: usize,
    pub bins: usize,
    pub sample_stride: usize,
}

impl Default for OracleCompareSection {
    fn default() -> Self {
        let c = OracleCompareConfig::default();
        Self {
            omega0: c.filter.omega0,
            theta0: c.filter.theta0,
            sigma: c.filter.sigma,
            sigma_b: c.filter.sigma_b,
            gamma_f: c.filter.gamma_f,
            n: c.filter.n,
            dt: c.filter.dt,
            horizon: c.horizon,
            h_shift: 0.0,
            grid_points: c.grid_points,
            bins: c.bins,
            sample_stride: c.sample_stride,
        }
    }
}

impl OracleCompareSection {
    pub fn compare_config(&self, seed: u64) -> OracleCompareConfig {
        OracleCompareConfig {
            filter: FilterConfig {
                omega0: self.omega0,
                theta0: self.theta0,
                sigma: self.sigma,
                sigma_b: self.sigma_b,
                gamma_f: self.gamma_f,
                n: self.n,
                dt: self.dt,
                h: ObservationFn::Cos { shift: self.h_shift },
            },
            horizon: self.horizon,
            seed,
            grid_points: self.grid_points,
            bins: self.bins,
            sample_stride: self.sample_stride,
        }
    }
}

/// Configuration error with the offending line when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line of `key = …` inside `[section]`, for errors found after parsing.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            continue;
        }
        let name = line.split('=').next().unwrap_or("").trim();
        if current == section && name == key {
            return Some(i + 1);
        }
    }
    None
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError {
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    config.validate().map_err(|(section, key, message)| ConfigError {
        line: locate(text, section, key),
        message: format!("[{section}] {key}: {message}"),
    })?;
    Ok(config)
}

/// TOML text that [`parse_config`] maps back to `config`.
pub fn print_config(config: &ExperimentConfig) -> String {
    toml::to_string(config).expect("configuration is always serializable")
}

type Invalid = (&'static str, &'static str, String);

fn check(ok: bool, section: &'static str, key: &'static str, why: &str) -> Result<(), Invalid> {
    if ok {
        Ok(())
    } else {
        Err((section, key, why.to_string()))
    }
}

fn core_error(section: &'static str, err: mfsync_core::Error) -> Invalid {
    let key = match &err {
        mfsync_core::Error::InvalidParameter { name, .. } => match *name {
            "sigma" => "sigma",
            "gamma" => "gamma",
            "R" => "penalty",
            "kappa" => "kappa",
            "epsilon" => "epsilon",
            "wave_speed" => "wave_speed",
            "N" => "n",
            "dt" => "dt",
            "T" => "horizon",
            "sigma_B" => "sigma_b",
            "gamma_f" => "gamma_f",
            "omega0" => "omega0",
            other => other,
        },
        _ => "",
    };
    (section, key, err.to_string())
}

impl ExperimentConfig {
    fn validate(&self) -> Result<(), Invalid> {
        check(self.run.record_stride > 0, "run", "record_stride", "must be at least 1")?;

        let s = &self.simulate;
        check(s.sigma_sq > 0.0 && s.sigma_sq.is_finite(), "simulate", "sigma_sq", "must be positive")?;
        check(s.horizon > 0.0 && s.horizon.is_finite(), "simulate", "horizon", "must be positive")?;
        s.model_params().validate().map_err(|e| core_error("simulate", e))?;

        let sp = &self.spectrum;
        check(sp.sigma_sq > 0.0 && sp.sigma_sq.is_finite(), "spectrum", "sigma_sq", "must be positive")?;
        check(sp.gamma >= 0.0 && sp.gamma.is_finite(), "spectrum", "gamma", "must be non-negative")?;
        check(sp.k != 0, "spectrum", "k", "harmonic must be nonzero")?;
        check(!sp.cost.is_empty(), "spectrum", "cost", "needs at least C0")?;
        if let (Some(hi), Some(lo)) = (sp.r_max, sp.r_min) {
            check(hi > lo && lo > 0.0, "spectrum", "r_min", "need 0 < r_min < r_max")?;
        }
        for (key, v) in [("r_max", sp.r_max), ("r_min", sp.r_min), ("penalty", sp.penalty)] {
            if let Some(v) = v {
                check(v > 0.0 && v.is_finite(), "spectrum", key, "must be positive")?;
            }
        }

        let b = &self.bifurcation;
        check(b.sigma_sq > 0.0 && b.sigma_sq.is_finite(), "bifurcation", "sigma_sq", "must be positive")?;
        check(
            b.gammas.iter().all(|g| *g >= 0.0 && g.is_finite()),
            "bifurcation",
            "gammas",
            "must be non-negative",
        )?;
        check(b.k != 0, "bifurcation", "k", "harmonic must be nonzero")?;

        let l = &self.learn;
        l.learning_config(0, 1).validate().map_err(|e| core_error("learn", e))?;
        check(
            l.portrait_amplitude[0] < l.portrait_amplitude[1],
            "learn",
            "portrait_amplitude",
            "range must be increasing",
        )?;

        let f = &self.fpf;
        f.filter().validate().map_err(|e| core_error("fpf", e))?;
        check(f.horizon > 0.0 && f.horizon.is_finite(), "fpf", "horizon", "must be positive")?;
        check(
            (0.0..1.0).contains(&f.transient_fraction),
            "fpf",
            "transient_fraction",
            "must lie in [0, 1)",
        )?;
        check(f.bins > 0, "fpf", "bins", "must be at least 1")?;
        check(
            f.snapshot_times.iter().all(|t| (0.0..=f.horizon).contains(t)),
            "fpf",
            "snapshot_times",
            "must lie in [0, horizon]",
        )?;

        let o = &self.oracle_compare;
        o.compare_config(0).filter.validate().map_err(|e| core_error("oracle-compare", e))?;
        check(o.horizon > 0.0 && o.horizon.is_finite(), "oracle-compare", "horizon", "must be positive")?;
        check(o.grid_points >= 3, "oracle-compare", "grid_points", "need at least 3")?;
        check(o.bins > 0, "oracle-compare", "bins", "must be at least 1")?;
        check(o.sample_stride > 0, "oracle-compare", "sample_stride", "must be at least 1")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), ExperimentConfig::default());
        let c = ExperimentConfig::default();
        assert_eq!(c.simulate.n, 200);
        assert_eq!(c.simulate.sigma_sq, 0.1);
        assert_eq!(c.simulate.gamma, 0.05);
        assert_eq!(c.fpf.n, 1000);
    }

    #[test]
    fn synchrony_regime() {
        let c = parse_config("[simulate]\nkappa = 1\n").unwrap();
        assert_eq!(c.simulate.kappa, 1.0);
        assert_eq!(c.simulate.control, ControlKind::Kuramoto);
    }

    #[test]
    fn negative_coupling_is_rejected_with_its_line() {
        let e = parse_config("[run]\nseed = 3\n\n[simulate]\nkappa = -1\n").unwrap_err();
        assert_eq!(e.line, Some(5));
        assert!(e.message.contains("kappa"), "{e}");
    }

    #[test]
    fn unknown_key_reports_line() {
        let e = parse_config("[fpf]\nn = 10\nsigmab = 0.1\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.message.contains("sigmab"), "{e}");
    }

    #[test]
    fn type_mismatch_reports_line() {
        let e = parse_config("[learn]\n\nn = \"many\"\n").unwrap_err();
        assert_eq!(e.line, Some(3));
    }

    #[test]
    fn partial_initial_policy_is_missing_a_key() {
        let e = parse_config("[learn]\nn = 50\n[learn.initial]\nA = 2.0\n").unwrap_err();
        assert!(e.message.contains("zeta"), "{e}");
        assert!(e.line.is_some());
        let c = parse_config("[learn.initial]\nA = 2.0\nzeta = 0.5\n").unwrap();
        assert_eq!(c.learn.initial, InitialPolicy { amplitude: 2.0, zeta: 0.5 });
    }

    #[test]
    fn oracle_section_uses_its_hyphenated_name() {
        let c = parse_config("[oracle-compare]\ngrid_points = 256\n").unwrap();
        assert_eq!(c.oracle_compare.grid_points, 256);
    }

    #[test]
    fn print_then_parse_is_identity() {
        let mut c = ExperimentConfig::default();
        c.run.subcommand = Some(Subcommand::OracleCompare);
        c.run.seed = i64::MAX as u64;
        c.spectrum.r_max = Some(123.456);
        c.simulate.control = ControlKind::Parameterized;
        c.learn.initial.zeta = PI;
        assert_eq!(parse_config(&print_config(&c)).unwrap(), c);
    }
}
