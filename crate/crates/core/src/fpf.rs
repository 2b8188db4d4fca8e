//! Feedback particle filter for a phase oscillator observed through
//! `dZ = h(θ) dt + dW`.
//!
//! Particles are coupled oscillators
//! `dθ_i = ω_i dt + σ_B dξ_i + K(θ_i) ∘ (dZ − ½(h(θ_i) + ĥ) dt)`; the gain is
//! the Galerkin approximation `K(θ) = −κ₁ sin θ + κ₂ cos θ` of the
//! density-weighted Poisson equation, recomputed every step from the cloud.

use alloc::vec::Vec;
use num_traits::Float;

use crate::model::{angle_difference, circular_mean, wrap, Moments, MIN_RESULTANT};
use crate::rng::{RandomStream, StreamFamily};
use crate::{Error, Result, TAU};

/// Observation function `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObservationFn {
    /// `h(θ) = cos(θ − shift)`.
    Cos { shift: f64 },
    /// `h(θ) = c`; carries no information.
    Constant(f64),
}

impl Default for ObservationFn {
    fn default() -> Self {
        ObservationFn::Cos { shift: 0.0 }
    }
}

impl ObservationFn {
    #[inline]
    pub fn eval(&self, theta: f64) -> f64 {
        match *self {
            ObservationFn::Cos { shift } => (theta - shift).cos(),
            ObservationFn::Constant(c) => c,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    /// Frequency of the hidden oscillator.
    pub omega0: f64,
    /// Initial phase of the hidden oscillator.
    pub theta0: f64,
    /// Signal noise σ.
    pub sigma: f64,
    /// Particle process noise σ_B.
    pub sigma_b: f64,
    /// Particle frequencies are uniform on `[ω₀ − γ_f, ω₀ + γ_f]`.
    pub gamma_f: f64,
    pub n: usize,
    pub dt: f64,
    pub h: ObservationFn,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            omega0: 1.0,
            theta0: 0.0,
            sigma: 0.0,
            sigma_b: 0.1,
            gamma_f: 0.5,
            n: 1000,
            dt: 0.01,
            h: ObservationFn::default(),
        }
    }
}

impl FilterConfig {
    /// Matched configuration under which the filter is exact in the
    /// mean-field limit: `σ_B = σ` and every particle at `ω₀`.
    pub fn matched(sigma: f64) -> Self {
        Self {
            sigma,
            sigma_b: sigma,
            gamma_f: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason| Err(Error::InvalidParameter { name, reason });
        if !(self.omega0.is_finite() && self.theta0.is_finite()) {
            return bad("omega0", "must be finite");
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return bad("sigma", "must be non-negative and finite");
        }
        if !(self.sigma_b.is_finite() && self.sigma_b >= 0.0) {
            return bad("sigma_B", "must be non-negative and finite");
        }
        if !(self.gamma_f.is_finite() && self.gamma_f >= 0.0) {
            return bad("gamma_f", "must be non-negative and finite");
        }
        if self.n < 2 {
            return bad("N", "need at least two particles");
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt", "must be positive and finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    phases: Vec<f64>,
    frequencies: Vec<f64>,
    time: f64,
}

impl ParticleCloud {
    pub fn new(phases: Vec<f64>, frequencies: Vec<f64>) -> Result<Self> {
        if phases.len() != frequencies.len() {
            return Err(Error::LengthMismatch {
                expected: phases.len(),
                actual: frequencies.len(),
            });
        }
        let phases = phases
            .into_iter()
            .map(crate::model::wrap_phase)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            phases,
            frequencies,
            time: 0.0,
        })
    }

    /// Phases i.i.d. uniform on the circle, frequencies i.i.d. uniform on
    /// `[ω₀ − γ_f, ω₀ + γ_f]`.
    pub fn uniform(config: &FilterConfig, seed: u64) -> Self {
        let n = config.n as u64;
        let phases = (0..n)
            .map(|i| RandomStream::of(seed, StreamFamily::InitialPhase, i).uniform_in(0.0, TAU))
            .collect();
        let g = config.gamma_f;
        let frequencies = (0..n)
            .map(|i| {
                let u = RandomStream::of(seed, StreamFamily::Frequency, i).uniform();
                if g == 0.0 {
                    config.omega0
                } else {
                    config.omega0 - g + 2.0 * g * u
                }
            })
            .collect();
        Self {
            phases,
            frequencies,
            time: 0.0,
        }
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }
}

/// Coefficients of `K(θ) = −κ₁ sin θ + κ₂ cos θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainCoeffs {
    pub kappa1: f64,
    pub kappa2: f64,
    /// Condition number of the 2×2 Galerkin matrix.
    pub condition: f64,
    /// Set when the matrix was Tikhonov-regularized (near-degenerate cloud).
    pub regularized: bool,
}

impl GainCoeffs {
    #[inline]
    pub fn gain(&self, theta: f64) -> f64 {
        -self.kappa1 * theta.sin() + self.kappa2 * theta.cos()
    }
}

/// Condition number above which the Galerkin matrix is regularized.
pub const MAX_CONDITION: f64 = 1e8;
/// Tikhonov parameter.
pub const TIKHONOV: f64 = 1e-8;

/// Galerkin gain from the empirical measure of `phases` with basis
/// `{cos, sin}`: solves `A κ = b`,
/// `A_kl = (1/N) Σ ψ'_k ψ'_l`, `b_k = (1/N) Σ (h − ĥ) ψ_k`.
pub fn galerkin_gain(phases: &[f64], h: &ObservationFn) -> Result<GainCoeffs> {
    let n = phases.len();
    if n < 2 {
        return Err(Error::InvalidParameter {
            name: "N",
            reason: "need at least two particles",
        });
    }
    let inv = 1.0 / n as f64;
    let h_hat = phases.iter().map(|&t| h.eval(t)).sum::<f64>() * inv;
    let (mut ss, mut sc, mut cc, mut bc, mut bs) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &t in phases {
        let (s, c) = t.sin_cos();
        let e = h.eval(t) - h_hat;
        ss += s * s;
        sc += s * c;
        cc += c * c;
        bc += e * c;
        bs += e * s;
    }
    // ψ₁ = cos, ψ₂ = sin, so ψ'₁ = −sin and ψ'₂ = cos.
    let (a11, a12, a22) = (ss * inv, -sc * inv, cc * inv);
    let (b1, b2) = (bc * inv, bs * inv);

    let tr = a11 + a22;
    let det = a11 * a22 - a12 * a12;
    let disc = (0.25 * (a11 - a22) * (a11 - a22) + a12 * a12).sqrt();
    let (lmax, lmin) = (0.5 * tr + disc, 0.5 * tr - disc);
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    let regularized = !(condition <= MAX_CONDITION);
    let (r11, r22, det) = if regularized {
        let (r11, r22) = (a11 + TIKHONOV, a22 + TIKHONOV);
        (r11, r22, r11 * r22 - a12 * a12)
    } else {
        (a11, a22, det)
    };
    Ok(GainCoeffs {
        kappa1: (r22 * b1 - a12 * b2) / det,
        kappa2: (r11 * b2 - a12 * b1) / det,
        condition,
        regularized,
    })
}

/// Hidden phase path and its observation increments.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPath {
    /// `dZ_k` over `[t_k, t_{k+1})`.
    pub increments: Vec<f64>,
    /// `θ(t_k)` for `k = 0 … len`.
    pub true_phases: Vec<f64>,
    pub dt: f64,
    pub seed: u64,
}

impl ObservationPath {
    pub fn steps(&self) -> usize {
        self.increments.len()
    }
}

/// Simulates the signal by Euler–Maruyama and emits
/// `dZ_k = h(θ(t_k)) dt + √dt w_k`.
pub fn synthesize_observations(config: &FilterConfig, horizon: f64, seed: u64) -> Result<ObservationPath> {
    config.validate()?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidParameter {
            name: "T",
            reason: "must be positive and finite",
        });
    }
    let dt = config.dt;
    let steps = (horizon / dt).round() as usize;
    let sq = dt.sqrt();
    let mut signal = RandomStream::of(seed, StreamFamily::Signal, 0);
    let mut obs = RandomStream::of(seed, StreamFamily::Observation, 0);
    let mut true_phases = Vec::with_capacity(steps + 1);
    let mut increments = Vec::with_capacity(steps);
    let mut theta = wrap(config.theta0);
    true_phases.push(theta);
    for k in 0..steps {
        increments.push(config.h.eval(theta) * dt + sq * obs.normal());
        let xi = signal.normal();
        theta = if config.sigma == 0.0 {
            // Noise-free phase: evaluate θ₀ + ω₀ t directly.
            wrap(config.theta0 + config.omega0 * (k + 1) as f64 * dt)
        } else {
            wrap(theta + config.omega0 * dt + config.sigma * sq * xi)
        };
        true_phases.push(theta);
    }
    Ok(ObservationPath {
        increments,
        true_phases,
        dt,
        seed,
    })
}

/// One filter step with observation increment `dz`.
///
/// The Stratonovich product is treated by Heun's method on the gain term:
/// `I(θ) = dz − ½(h(θ) + ĥ) dt`, predictor `θ̃ = θ + K(θ) I(θ)`, and the
/// update uses `½(K(θ) I(θ) + K(θ̃) I(θ̃))`. Drift and process noise are
/// Itô–Euler. Returns the gain used.
pub fn fpf_step(
    cloud: &mut ParticleCloud,
    dz: f64,
    config: &FilterConfig,
    noise: &mut [RandomStream],
) -> Result<GainCoeffs> {
    if noise.len() != cloud.len() {
        return Err(Error::LengthMismatch {
            expected: cloud.len(),
            actual: noise.len(),
        });
    }
    let gain = galerkin_gain(&cloud.phases, &config.h)?;
    let h = &config.h;
    let h_hat = cloud.phases.iter().map(|&t| h.eval(t)).sum::<f64>() / cloud.len() as f64;
    let dt = config.dt;
    let amp = config.sigma_b * dt.sqrt();
    for ((theta, &omega), rng) in cloud
        .phases
        .iter_mut()
        .zip(&cloud.frequencies)
        .zip(noise.iter_mut())
    {
        let t = *theta;
        let i0 = dz - 0.5 * (h.eval(t) + h_hat) * dt;
        let k0 = gain.gain(t) * i0;
        let pred = t + k0;
        let i1 = dz - 0.5 * (h.eval(pred) + h_hat) * dt;
        let k1 = gain.gain(pred) * i1;
        let xi = rng.normal();
        *theta = wrap(t + omega * dt + amp * xi + 0.5 * (k0 + k1));
    }
    cloud.time += dt;
    Ok(gain)
}

/// Circular mean and circular standard deviation `sqrt(−2 ln r)`.
pub fn estimate(phases: &[f64]) -> Result<(f64, f64)> {
    let mean = circular_mean(phases)?;
    let r = Moments::of(phases).resultant().min(1.0);
    if r <= MIN_RESULTANT {
        return Err(Error::UndefinedMean { resultant: r });
    }
    Ok((mean, (-2.0 * r.ln()).max(0.0).sqrt()))
}

/// Normalized histogram of phases (densities on `bins` equal arcs starting
/// at `origin`).
pub fn phase_histogram(phases: &[f64], bins: usize, origin: f64) -> Vec<f64> {
    let mut counts = alloc::vec![0.0; bins];
    let width = TAU / bins as f64;
    for &t in phases {
        let b = ((wrap(t - origin) / width) as usize).min(bins - 1);
        counts[b] += 1.0;
    }
    let scale = 1.0 / (phases.len() as f64 * width);
    counts.iter_mut().for_each(|c| *c *= scale);
    counts
}

/// Tracking experiment: filter run on a synthesized path.
#[derive(Debug, Clone, PartialEq)]
pub struct FpfExperiment {
    pub filter: FilterConfig,
    pub horizon: f64,
    pub seed: u64,
    /// Fraction of the horizon discarded before computing the RMSE.
    pub transient_fraction: f64,
    /// Times at which particle histograms are stored.
    pub snapshot_times: Vec<f64>,
    pub histogram_bins: usize,
}

impl Default for FpfExperiment {
    fn default() -> Self {
        Self {
            filter: FilterConfig::default(),
            horizon: 100.0,
            seed: 0,
            transient_fraction: 0.25,
            snapshot_times: Vec::new(),
            histogram_bins: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramSnapshot {
    pub t: f64,
    pub density: Vec<f64>,
}

/// Per-step record of a tracking run; index `k` refers to `t_k`, the gain
/// and increment columns to the step leaving `t_k` (zero on the last row).
#[derive(Debug, Clone, PartialEq)]
pub struct FpfRun {
    pub t: Vec<f64>,
    pub theta_true: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub spread: Vec<f64>,
    pub kappa1: Vec<f64>,
    pub kappa2: Vec<f64>,
    pub dz: Vec<f64>,
    pub snapshots: Vec<HistogramSnapshot>,
    /// Circular RMSE of `θ̂ − θ` after the transient.
    pub rmse: f64,
    /// Steps whose gain needed regularization.
    pub regularized_steps: usize,
}

pub fn run_fpf_experiment(exp: &FpfExperiment) -> Result<FpfRun> {
    let cfg = &exp.filter;
    let path = synthesize_observations(cfg, exp.horizon, exp.seed)?;
    let mut cloud = ParticleCloud::uniform(cfg, exp.seed);
    let mut noise = RandomStream::family(exp.seed, StreamFamily::Noise, cfg.n);
    let steps = path.steps();
    let mut run = FpfRun {
        t: Vec::with_capacity(steps + 1),
        theta_true: Vec::with_capacity(steps + 1),
        theta_hat: Vec::with_capacity(steps + 1),
        spread: Vec::with_capacity(steps + 1),
        kappa1: Vec::with_capacity(steps + 1),
        kappa2: Vec::with_capacity(steps + 1),
        dz: Vec::with_capacity(steps + 1),
        snapshots: Vec::new(),
        rmse: 0.0,
        regularized_steps: 0,
    };
    let snapshot_steps: Vec<usize> = exp
        .snapshot_times
        .iter()
        .map(|&t| ((t / cfg.dt).round() as usize).min(steps))
        .collect();
    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        let (hat, spread) = estimate(cloud.phases())?;
        run.t.push(t);
        run.theta_true.push(path.true_phases[k]);
        run.theta_hat.push(hat);
        run.spread.push(spread);
        for (&s, &ts) in snapshot_steps.iter().zip(&exp.snapshot_times) {
            if s == k {
                run.snapshots.push(HistogramSnapshot {
                    t: ts,
                    density: phase_histogram(cloud.phases(), exp.histogram_bins, 0.0),
                });
            }
        }
        if k == steps {
            run.kappa1.push(0.0);
            run.kappa2.push(0.0);
            run.dz.push(0.0);
            break;
        }
        let dz = path.increments[k];
        let gain = fpf_step(&mut cloud, dz, cfg, &mut noise)?;
        run.regularized_steps += gain.regularized as usize;
        run.kappa1.push(gain.kappa1);
        run.kappa2.push(gain.kappa2);
        run.dz.push(dz);
    }
    let start = (exp.transient_fraction * steps as f64).ceil() as usize;
    let window = &run.theta_hat[start..];
    let sq: f64 = window
        .iter()
        .zip(&run.theta_true[start..])
        .map(|(&a, &b)| angle_difference(a, b).powi(2))
        .sum();
    run.rmse = (sq / window.len() as f64).sqrt();
    Ok(run)
}
