//! Controlled phase-oscillator populations.
//!
//! Each oscillator follows the Itô SDE
//! `dθ_i = (ω_i + u_i) dt + σ dξ_i (mod 2π)` and is integrated with
//! Euler–Maruyama, controls being evaluated at the start of the step.

use alloc::vec::Vec;
use num_traits::Float;

use crate::learning::PolicyParams;
use crate::rng::{RandomStream, StreamFamily};
use crate::{Error, Result, TAU};

/// Physical and population constants shared by the simulation, spectral and
/// learning code.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Noise amplitude σ.
    pub sigma: f64,
    /// Half-width γ of the frequency support `[1-γ, 1+γ]`.
    pub gamma: f64,
    /// Control penalty R.
    pub penalty: f64,
    /// Kuramoto coupling κ.
    pub kappa: f64,
    /// Learning rate ε.
    pub epsilon: f64,
    /// Traveling-wave speed `a`.
    pub wave_speed: f64,
    /// Population size N.
    pub n: usize,
    /// Integration step.
    pub dt: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            sigma: 0.1.sqrt(),
            gamma: 0.05,
            penalty: 10.0,
            kappa: 1.0,
            epsilon: 1.0,
            wave_speed: 1.0,
            n: 200,
            dt: 0.01,
        }
    }
}

impl ModelParams {
    pub fn sigma_sq(&self) -> f64 {
        self.sigma * self.sigma
    }

    /// σ²/2, the diffusion coefficient of the phase.
    pub fn diffusion(&self) -> f64 {
        0.5 * self.sigma_sq()
    }

    pub fn with_sigma_sq(mut self, sigma_sq: f64) -> Self {
        self.sigma = sigma_sq.sqrt();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason| Err(Error::InvalidParameter { name, reason });
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad("sigma", "must be positive and finite");
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad("gamma", "must be non-negative and finite");
        }
        if !(self.penalty.is_finite() && self.penalty > 0.0) {
            return bad("R", "must be positive and finite");
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return bad("kappa", "coupling must be non-negative (attractive convention)");
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return bad("epsilon", "must be non-negative and finite");
        }
        if !self.wave_speed.is_finite() {
            return bad("wave_speed", "must be finite");
        }
        if self.gamma == 0.0 && self.wave_speed != 1.0 {
            return bad("wave_speed", "a homogeneous population (gamma = 0) has wave speed 1");
        }
        if self.n == 0 {
            return bad("N", "population must be non-empty");
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt", "must be positive and finite");
        }
        Ok(())
    }
}

/// Uniform frequency density on `Ω = [1-γ, 1+γ]` (a point mass at 1 when
/// `γ = 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyDistribution {
    pub gamma: f64,
}

impl FrequencyDistribution {
    pub fn new(gamma: f64) -> Self {
        Self { gamma }
    }

    pub fn support(&self) -> (f64, f64) {
        (1.0 - self.gamma, 1.0 + self.gamma)
    }

    /// Density `g(ω)`; for `γ = 0` this is the point-mass indicator.
    pub fn density(&self, omega: f64) -> f64 {
        let (lo, hi) = self.support();
        if omega < lo || omega > hi {
            0.0
        } else if self.gamma == 0.0 {
            1.0
        } else {
            1.0 / (2.0 * self.gamma)
        }
    }

    pub fn sample(&self, rng: &mut RandomStream) -> f64 {
        let u = rng.uniform();
        if self.gamma == 0.0 {
            1.0
        } else {
            1.0 - self.gamma + 2.0 * self.gamma * u
        }
    }
}

/// `n` i.i.d. frequencies uniform on `[1-γ, 1+γ]`, oscillator `i` drawing
/// from its own frequency stream.
pub fn sample_frequencies(gamma: f64, n: usize, seed: u64) -> Vec<f64> {
    let dist = FrequencyDistribution::new(gamma);
    (0..n as u64)
        .map(|i| dist.sample(&mut RandomStream::of(seed, StreamFamily::Frequency, i)))
        .collect()
}

/// Reduces an angle to `[0, 2π)`.
pub fn wrap_phase(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFiniteAngle(x));
    }
    Ok(wrap(x))
}

#[inline]
pub(crate) fn wrap(x: f64) -> f64 {
    let mut r = x % TAU;
    if r < 0.0 {
        r += TAU;
    }
    if r >= TAU {
        r = 0.0;
    }
    r
}

/// Signed difference `a - b` reduced to `(-π, π]`.
pub fn angle_difference(a: f64, b: f64) -> f64 {
    let d = wrap(a - b);
    if d > core::f64::consts::PI {
        d - TAU
    } else {
        d
    }
}

/// Finite-N population state.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEnsemble {
    phases: Vec<f64>,
    frequencies: Vec<f64>,
    time: f64,
}

impl PhaseEnsemble {
    /// Builds an ensemble at `t = 0`; phases are wrapped to `[0, 2π)`.
    pub fn new(phases: Vec<f64>, frequencies: Vec<f64>) -> Result<Self> {
        if phases.len() != frequencies.len() {
            return Err(Error::LengthMismatch {
                expected: phases.len(),
                actual: frequencies.len(),
            });
        }
        if phases.is_empty() {
            return Err(Error::InvalidParameter {
                name: "N",
                reason: "population must be non-empty",
            });
        }
        let phases = phases.into_iter().map(wrap_phase).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            phases,
            frequencies,
            time: 0.0,
        })
    }

    /// Identical oscillators (`ω = 1`) at the given phases.
    pub fn homogeneous(phases: Vec<f64>) -> Result<Self> {
        let n = phases.len();
        Self::new(phases, alloc::vec![1.0; n])
    }

    /// Phases i.i.d. uniform on the circle, frequencies i.i.d. uniform on
    /// `[1-γ, 1+γ]`.
    pub fn random(n: usize, gamma: f64, seed: u64) -> Result<Self> {
        let phases = (0..n as u64)
            .map(|i| RandomStream::of(seed, StreamFamily::InitialPhase, i).uniform_in(0.0, TAU))
            .collect();
        Self::new(phases, sample_frequencies(gamma, n, seed))
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

    /// Copy with every phase shifted by `shift`.
    pub fn rotated(&self, shift: f64) -> Self {
        Self {
            phases: self.phases.iter().map(|&p| wrap(p + shift)).collect(),
            frequencies: self.frequencies.clone(),
            time: self.time,
        }
    }

    /// Copy with oscillators reordered so that entry `k` is old entry
    /// `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            phases: order.iter().map(|&k| self.phases[k]).collect(),
            frequencies: order.iter().map(|&k| self.frequencies[k]).collect(),
            time: self.time,
        }
    }

    pub fn moments(&self) -> Moments {
        Moments::of(&self.phases)
    }
}

/// First circular moments `(mean cos θ, mean sin θ)` of a phase sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub cos: f64,
    pub sin: f64,
}

impl Moments {
    pub fn of(phases: &[f64]) -> Self {
        if phases.is_empty() {
            return Self { cos: 0.0, sin: 0.0 };
        }
        let (c, s) = phases
            .iter()
            .fold((0.0, 0.0), |(c, s), &p| (c + p.cos(), s + p.sin()));
        let inv = 1.0 / phases.len() as f64;
        Self {
            cos: c * inv,
            sin: s * inv,
        }
    }

    pub fn resultant(&self) -> f64 {
        self.cos.hypot(self.sin)
    }
}

/// Kuramoto control `u_i = -(κ/N) Σ_j sin(θ_i - θ_j)`.
pub fn kuramoto_control(i: usize, ensemble: &PhaseEnsemble, kappa: f64) -> f64 {
    let theta_i = ensemble.phases[i];
    let sum: f64 = ensemble.phases.iter().map(|&t| (theta_i - t).sin()).sum();
    -kappa * sum / ensemble.len() as f64
}

/// Parameterized control `u_i = -(A_i / (R N)) Σ_j sin(θ_i - θ_j - ζ_i)`.
pub fn parameterized_control(
    i: usize,
    ensemble: &PhaseEnsemble,
    policy: &PolicyParams,
    penalty: f64,
) -> f64 {
    let theta_i = ensemble.phases[i];
    let (a, zeta) = (policy.amplitude[i], policy.phase[i]);
    let sum: f64 = ensemble
        .phases
        .iter()
        .map(|&t| (theta_i - t - zeta).sin())
        .sum();
    -a * sum / (penalty * ensemble.len() as f64)
}

/// Same value as [`parameterized_control`] computed from the population
/// moments in O(1).
#[inline]
pub fn parameterized_control_from_moments(
    theta: f64,
    amplitude: f64,
    phase: f64,
    penalty: f64,
    m: Moments,
) -> f64 {
    let x = theta - phase;
    -(amplitude / penalty) * (x.sin() * m.cos - x.cos() * m.sin)
}

/// Control law applied by every oscillator of a [`Simulator`].
#[derive(Debug, Clone, PartialEq)]
pub enum ControlLaw {
    Free,
    Kuramoto { kappa: f64 },
    Parameterized { policy: PolicyParams, penalty: f64 },
}

impl ControlLaw {
    /// Controls for all oscillators: one reduction over the population, then
    /// independent per-oscillator evaluations.
    pub fn evaluate(&self, ensemble: &PhaseEnsemble, out: &mut Vec<f64>) {
        out.clear();
        let m = ensemble.moments();
        match self {
            ControlLaw::Free => out.resize(ensemble.len(), 0.0),
            ControlLaw::Kuramoto { kappa } => out.extend(
                ensemble
                    .phases
                    .iter()
                    .map(|&t| parameterized_control_from_moments(t, *kappa, 0.0, 1.0, m)),
            ),
            ControlLaw::Parameterized { policy, penalty } => out.extend(
                ensemble
                    .phases
                    .iter()
                    .zip(policy.amplitude.iter().zip(&policy.phase))
                    .map(|(&t, (&a, &z))| parameterized_control_from_moments(t, a, z, *penalty, m)),
            ),
        }
    }
}

/// One Euler–Maruyama step:
/// `θ_i ← wrap(θ_i + (ω_i + u_i) dt + σ √dt ξ_i)`, `ξ_i` drawn from `noise[i]`.
pub fn em_step(
    ensemble: &mut PhaseEnsemble,
    controls: &[f64],
    params: &ModelParams,
    noise: &mut [RandomStream],
) -> Result<()> {
    let n = ensemble.len();
    if controls.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: controls.len(),
        });
    }
    if noise.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: noise.len(),
        });
    }
    let dt = params.dt;
    let amp = params.sigma * dt.sqrt();
    for (((theta, &omega), &u), rng) in ensemble
        .phases
        .iter_mut()
        .zip(&ensemble.frequencies)
        .zip(controls)
        .zip(noise.iter_mut())
    {
        let xi = rng.normal();
        *theta = wrap(*theta + (omega + u) * dt + amp * xi);
    }
    ensemble.time += dt;
    Ok(())
}

/// Squared order parameter `Γ²_N = (mean sin θ)² + (mean cos θ)²`.
pub fn order_parameter_sq(phases: &[f64]) -> f64 {
    let m = Moments::of(phases);
    (m.cos * m.cos + m.sin * m.sin).min(1.0)
}

/// Resultant lengths at or below this are treated as degenerate.
pub const MIN_RESULTANT: f64 = 1e-12;

/// Direction of the mean phasor, in `[0, 2π)`.
pub fn circular_mean(phases: &[f64]) -> Result<f64> {
    let m = Moments::of(phases);
    let r = m.resultant();
    if phases.is_empty() || r <= MIN_RESULTANT {
        return Err(Error::UndefinedMean { resultant: r });
    }
    Ok(wrap(m.sin.atan2(m.cos)))
}

/// Even, spatially invariant interaction cost
/// `c•(θ) = C₀ + Σ_{k≥1} C_k cos(kθ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    /// `C₀, C₁, C₂, …`
    pub fourier: Vec<f64>,
}

impl Default for CostSpec {
    fn default() -> Self {
        Self::kuramoto()
    }
}

impl CostSpec {
    /// `c•(θ) = ½ sin²(θ/2)`: `C₀ = 1/4`, `C₁ = -1/4`.
    pub fn kuramoto() -> Self {
        Self {
            fourier: alloc::vec![0.25, -0.25],
        }
    }

    pub fn coefficient(&self, k: usize) -> f64 {
        self.fourier.get(k).copied().unwrap_or(0.0)
    }

    pub fn evaluate(&self, theta: f64) -> f64 {
        self.fourier
            .iter()
            .enumerate()
            .map(|(k, &c)| c * (k as f64 * theta).cos())
            .sum()
    }

    /// True when no harmonic beyond the first is present.
    pub fn is_first_harmonic(&self) -> bool {
        self.fourier.iter().skip(2).all(|&c| c == 0.0)
    }

    /// `(1/N) Σ_j c•(θ - θ_j)` from per-harmonic moments of the population.
    fn population_average(&self, theta: f64, harmonics: &[Moments]) -> f64 {
        self.coefficient(0)
            + harmonics
                .iter()
                .enumerate()
                .map(|(k, m)| {
                    let kt = (k + 1) as f64 * theta;
                    self.coefficient(k + 1) * (kt.cos() * m.cos + kt.sin() * m.sin)
                })
                .sum::<f64>()
    }
}

/// Per-oscillator time-averaged cost split into its two terms.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCost {
    /// Time average of `(1/N) Σ_j c•(θ_i - θ_j)`.
    pub interaction: Vec<f64>,
    /// Time average of `(R/2) u_i²`.
    pub control: Vec<f64>,
}

impl EmpiricalCost {
    pub fn total(&self) -> Vec<f64> {
        self.interaction
            .iter()
            .zip(&self.control)
            .map(|(a, b)| a + b)
            .collect()
    }
}

/// Left-endpoint Riemann average of the game cost over a recorded history.
///
/// `phases[k]` and `controls[k]` are the state and the control applied on
/// the k-th interval of a uniform time grid, so the horizon average reduces
/// to the sample mean.
pub fn empirical_cost(
    phases: &[Vec<f64>],
    controls: &[Vec<f64>],
    penalty: f64,
    cost: &CostSpec,
) -> Result<EmpiricalCost> {
    if phases.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if controls.len() != phases.len() {
        return Err(Error::LengthMismatch {
            expected: phases.len(),
            actual: controls.len(),
        });
    }
    let n = phases[0].len();
    if n == 0 {
        return Err(Error::EmptyTrajectory);
    }
    let kmax = cost.fourier.len().saturating_sub(1);
    let mut interaction = alloc::vec![0.0; n];
    let mut control = alloc::vec![0.0; n];
    let mut harmonics = Vec::with_capacity(kmax);
    for (snapshot, u) in phases.iter().zip(controls) {
        if snapshot.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: snapshot.len(),
            });
        }
        if u.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: u.len(),
            });
        }
        harmonics.clear();
        for k in 1..=kmax {
            let kf = k as f64;
            let (c, s) = snapshot.iter().fold((0.0, 0.0), |(c, s), &t| {
                (c + (kf * t).cos(), s + (kf * t).sin())
            });
            harmonics.push(Moments {
                cos: c / n as f64,
                sin: s / n as f64,
            });
        }
        for i in 0..n {
            interaction[i] += cost.population_average(snapshot[i], &harmonics);
            control[i] += 0.5 * penalty * u[i] * u[i];
        }
    }
    let inv = 1.0 / phases.len() as f64;
    interaction.iter_mut().for_each(|x| *x *= inv);
    control.iter_mut().for_each(|x| *x *= inv);
    Ok(EmpiricalCost {
        interaction,
        control,
    })
}

/// Euler–Maruyama driver owning the population and its noise streams.
#[derive(Debug, Clone)]
pub struct Simulator {
    ensemble: PhaseEnsemble,
    noise: Vec<RandomStream>,
    params: ModelParams,
    law: ControlLaw,
    controls: Vec<f64>,
}

impl Simulator {
    /// Random initial population drawn from `seed`.
    pub fn new(params: ModelParams, law: ControlLaw, seed: u64) -> Result<Self> {
        params.validate()?;
        let ensemble = PhaseEnsemble::random(params.n, params.gamma, seed)?;
        Self::with_ensemble(ensemble, params, law, seed)
    }

    pub fn with_ensemble(
        ensemble: PhaseEnsemble,
        params: ModelParams,
        law: ControlLaw,
        seed: u64,
    ) -> Result<Self> {
        if let ControlLaw::Parameterized { policy, .. } = &law {
            if policy.len() != ensemble.len() {
                return Err(Error::LengthMismatch {
                    expected: ensemble.len(),
                    actual: policy.len(),
                });
            }
        }
        let noise = RandomStream::family(seed, StreamFamily::Noise, ensemble.len());
        Ok(Self {
            ensemble,
            noise,
            params,
            law,
            controls: Vec::new(),
        })
    }

    pub fn ensemble(&self) -> &PhaseEnsemble {
        &self.ensemble
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Controls the next step will apply.
    pub fn current_controls(&mut self) -> &[f64] {
        self.law.evaluate(&self.ensemble, &mut self.controls);
        &self.controls
    }

    pub fn step(&mut self) -> Result<()> {
        self.law.evaluate(&self.ensemble, &mut self.controls);
        em_step(&mut self.ensemble, &self.controls, &self.params, &mut self.noise)
    }

    /// Runs `steps` steps. Every `stride` steps (starting with step 0) the
    /// observer sees the state at the start of the step and the controls
    /// applied on it.
    pub fn run<F>(&mut self, steps: usize, stride: usize, mut observer: F) -> Result<()>
    where
        F: FnMut(&PhaseEnsemble, &[f64]),
    {
        let stride = stride.max(1);
        for k in 0..steps {
            self.law.evaluate(&self.ensemble, &mut self.controls);
            if k % stride == 0 {
                observer(&self.ensemble, &self.controls);
            }
            em_step(&mut self.ensemble, &self.controls, &self.params, &mut self.noise)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use core::f64::consts::PI;
    use proptest::prelude::*;

    #[test]
    fn degenerate_frequency_interval_gives_ones() {
        assert_eq!(sample_frequencies(0.0, 5, 123), alloc::vec![1.0; 5]);
    }

    #[test]
    fn frequency_sample_mean_within_moment_bound() {
        let (gamma, n) = (0.1, 10_000);
        let f = sample_frequencies(gamma, n, 5);
        let mean = f.iter().sum::<f64>() / n as f64;
        let bound = 3.0 * (2.0 * gamma / 12f64.sqrt()) / (n as f64).sqrt();
        assert!((mean - 1.0).abs() < bound, "mean {mean}, bound {bound}");
        assert!(f.iter().all(|&w| (0.9..=1.1).contains(&w)));
    }

    #[test]
    fn frequency_sampling_is_deterministic_and_prefix_stable() {
        let a = sample_frequencies(0.05, 3, 99);
        assert_eq!(a, sample_frequencies(0.05, 3, 99));
        // Oscillator i keeps its frequency when N grows.
        assert_eq!(&sample_frequencies(0.05, 10, 99)[..3], &a[..]);
    }

    #[test]
    fn wrap_phase_examples() {
        assert_eq!(wrap_phase(0.0).unwrap(), 0.0);
        assert_eq!(wrap_phase(TAU).unwrap(), 0.0);
        assert_abs_diff_eq!(wrap_phase(6.3).unwrap(), 6.3 - TAU, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_phase(6.3).unwrap(), 0.016815, epsilon = 1e-6);
        assert_abs_diff_eq!(wrap_phase(-0.5).unwrap(), TAU - 0.5, epsilon = 1e-15);
        assert!(wrap_phase(f64::NAN).is_err());
        assert!(wrap_phase(f64::INFINITY).is_err());
        // Tiny negative values must not round up to 2π.
        let w = wrap_phase(-1e-18).unwrap();
        assert!((0.0..TAU).contains(&w));
    }

    #[test]
    fn kuramoto_control_examples() {
        let same = PhaseEnsemble::homogeneous(alloc::vec![1.3; 4]).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(kuramoto_control(i, &same, 2.0), 0.0, epsilon = 1e-15);
        }
        let two = PhaseEnsemble::homogeneous(alloc::vec![0.0, PI / 2.0]).unwrap();
        assert_abs_diff_eq!(kuramoto_control(0, &two, 1.0), 0.5, epsilon = 1e-15);
        let spread =
            PhaseEnsemble::homogeneous(alloc::vec![0.0, PI / 2.0, PI, 3.0 * PI / 2.0]).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(kuramoto_control(i, &spread, 1.0), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn parameterized_control_examples() {
        let ens = PhaseEnsemble::random(7, 0.05, 3).unwrap();
        let zero = PolicyParams::uniform(7, 0.0, 1.2);
        assert_eq!(parameterized_control(2, &ens, &zero, 3.0), 0.0);

        let (kappa, r) = (0.7, 4.0);
        let kura = PolicyParams::uniform(7, kappa * r, 0.0);
        for i in 0..7 {
            assert_abs_diff_eq!(
                parameterized_control(i, &ens, &kura, r),
                kuramoto_control(i, &ens, kappa),
                epsilon = 1e-14
            );
        }

        let two = PhaseEnsemble::homogeneous(alloc::vec![0.0, 0.0]).unwrap();
        let r = 2.5;
        let policy = PolicyParams::new(alloc::vec![r, 0.0], alloc::vec![PI / 2.0, 0.0]);
        assert_abs_diff_eq!(parameterized_control(0, &two, &policy, r), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn parameterized_control_half_amplitude_example() {
        // Two co-located oscillators: each term is sin(-π/2), so u = A/R.
        let two = PhaseEnsemble::homogeneous(alloc::vec![0.0, 0.0]).unwrap();
        let policy = PolicyParams::new(alloc::vec![0.5, 0.0], alloc::vec![PI / 2.0, 0.0]);
        assert_abs_diff_eq!(parameterized_control(0, &two, &policy, 1.0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn moment_controls_match_direct_sums() {
        let ens = PhaseEnsemble::random(50, 0.1, 11).unwrap();
        let mut out = Vec::new();
        ControlLaw::Kuramoto { kappa: 0.8 }.evaluate(&ens, &mut out);
        for (i, &u) in out.iter().enumerate() {
            assert_abs_diff_eq!(u, kuramoto_control(i, &ens, 0.8), epsilon = 1e-13);
        }
        let policy = PolicyParams::new(
            (0..50).map(|i| 0.1 * i as f64).collect(),
            (0..50).map(|i| 0.3 * i as f64 % TAU).collect(),
        );
        ControlLaw::Parameterized { policy: policy.clone(), penalty: 2.0 }.evaluate(&ens, &mut out);
        for (i, &u) in out.iter().enumerate() {
            assert_abs_diff_eq!(u, parameterized_control(i, &ens, &policy, 2.0), epsilon = 1e-13);
        }
    }

    fn deterministic(sigma: f64, dt: f64) -> ModelParams {
        ModelParams {
            sigma,
            dt,
            n: 1,
            ..ModelParams::default()
        }
    }

    #[test]
    fn em_step_deterministic_drift() {
        let mut noise = RandomStream::family(0, StreamFamily::Noise, 1);
        let mut ens = PhaseEnsemble::homogeneous(alloc::vec![0.0]).unwrap();
        em_step(&mut ens, &[0.0], &deterministic(0.0, 0.1), &mut noise).unwrap();
        assert_abs_diff_eq!(ens.phases()[0], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(ens.time(), 0.1, epsilon = 1e-15);

        let mut ens = PhaseEnsemble::homogeneous(alloc::vec![6.2]).unwrap();
        em_step(&mut ens, &[0.0], &deterministic(0.0, 0.1), &mut noise).unwrap();
        assert_abs_diff_eq!(ens.phases()[0], 6.3 - TAU, epsilon = 1e-14);
    }

    #[test]
    fn em_step_increment_variance() {
        let (sigma, dt, n) = (0.1, 0.01, 10_000);
        let params = ModelParams {
            sigma,
            dt,
            n,
            ..ModelParams::default()
        };
        let mut noise = RandomStream::family(42, StreamFamily::Noise, n);
        let mut ens = PhaseEnsemble::new(alloc::vec![PI; n], alloc::vec![0.0; n]).unwrap();
        em_step(&mut ens, &alloc::vec![0.0; n], &params, &mut noise).unwrap();
        let inc: Vec<f64> = ens.phases().iter().map(|&p| p - PI).collect();
        let mean = inc.iter().sum::<f64>() / n as f64;
        let var = inc.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let target = sigma * sigma * dt;
        assert!((var / target - 1.0).abs() < 0.1, "var {var} vs {target}");
    }

    #[test]
    fn em_step_rejects_misaligned_inputs() {
        let mut noise = RandomStream::family(0, StreamFamily::Noise, 2);
        let mut ens = PhaseEnsemble::homogeneous(alloc::vec![0.0, 1.0]).unwrap();
        let p = ModelParams::default();
        assert!(em_step(&mut ens, &[0.0], &p, &mut noise).is_err());
        assert!(em_step(&mut ens, &[0.0, 0.0], &p, &mut noise[..1]).is_err());
    }

    #[test]
    fn order_parameter_examples() {
        assert_abs_diff_eq!(order_parameter_sq(&[0.7; 5]), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(order_parameter_sq(&[0.0, PI]), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(order_parameter_sq(&[0.0, PI / 2.0]), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn circular_mean_examples() {
        assert_abs_diff_eq!(circular_mean(&[PI / 2.0, PI / 2.0]).unwrap(), PI / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(circular_mean(&[0.0, PI / 2.0]).unwrap(), PI / 4.0, epsilon = 1e-15);
        assert!(matches!(circular_mean(&[0.0, PI]), Err(Error::UndefinedMean { .. })));
        assert!(circular_mean(&[]).is_err());
    }

    #[test]
    fn cost_spec_default_matches_half_sin_squared() {
        let c = CostSpec::kuramoto();
        for k in 0..20 {
            let t = 0.37 * k as f64;
            assert_abs_diff_eq!(c.evaluate(t), 0.5 * (t / 2.0).sin().powi(2), epsilon = 1e-15);
        }
        assert!(c.is_first_harmonic());
        assert_eq!(c.coefficient(5), 0.0);
    }

    #[test]
    fn empirical_cost_of_synchronous_uncontrolled_history_is_zero() {
        let snap = alloc::vec![alloc::vec![1.1; 4]; 10];
        let u = alloc::vec![alloc::vec![0.0; 4]; 10];
        let c = empirical_cost(&snap, &u, 3.0, &CostSpec::kuramoto()).unwrap();
        for x in c.total() {
            assert_abs_diff_eq!(x, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn empirical_cost_control_term_is_linear_in_penalty() {
        let ens = PhaseEnsemble::random(6, 0.05, 1).unwrap();
        let snap = alloc::vec![ens.phases().to_vec(); 3];
        let u: Vec<Vec<f64>> = (0..3)
            .map(|k| (0..6).map(|i| 0.1 * (i + k) as f64 - 0.2).collect())
            .collect();
        let a = empirical_cost(&snap, &u, 1.5, &CostSpec::kuramoto()).unwrap();
        let b = empirical_cost(&snap, &u, 3.0, &CostSpec::kuramoto()).unwrap();
        for i in 0..6 {
            assert_eq!(b.control[i], 2.0 * a.control[i]);
            assert_eq!(b.interaction[i], a.interaction[i]);
        }
    }

    #[test]
    fn empirical_cost_matches_direct_pairwise_sum() {
        let ens = PhaseEnsemble::random(9, 0.05, 8).unwrap();
        let snap = alloc::vec![ens.phases().to_vec()];
        let u = alloc::vec![alloc::vec![0.0; 9]];
        let cost = CostSpec {
            fourier: alloc::vec![0.3, -0.1, 0.05],
        };
        let c = empirical_cost(&snap, &u, 1.0, &cost).unwrap();
        for i in 0..9 {
            let direct: f64 = ens
                .phases()
                .iter()
                .map(|&t| cost.evaluate(ens.phases()[i] - t))
                .sum::<f64>()
                / 9.0;
            assert_abs_diff_eq!(c.interaction[i], direct, epsilon = 1e-14);
        }
    }

    #[test]
    fn empirical_cost_rejects_empty_and_misaligned() {
        assert_eq!(
            empirical_cost(&[], &[], 1.0, &CostSpec::kuramoto()),
            Err(Error::EmptyTrajectory)
        );
        let snap = alloc::vec![alloc::vec![0.0; 2]; 2];
        assert!(empirical_cost(&snap, &snap[..1], 1.0, &CostSpec::kuramoto()).is_err());
    }

    #[test]
    fn uncontrolled_population_cost_approaches_incoherent_value() {
        // Free oscillators decorrelate, so each pays (N-1)/N · 1/4 on average.
        let params = ModelParams {
            n: 10,
            ..ModelParams::default()
        };
        let mut sim = Simulator::new(params, ControlLaw::Free, 2024).unwrap();
        let mut snaps = Vec::new();
        let mut us = Vec::new();
        sim.run(200_000, 10, |e, u| {
            snaps.push(e.phases().to_vec());
            us.push(u.to_vec());
        })
        .unwrap();
        let c = empirical_cost(&snaps, &us, 10.0, &CostSpec::kuramoto()).unwrap();
        let target = 9.0 / 10.0 * 0.25;
        let mean = c.total().iter().sum::<f64>() / 10.0;
        assert!((mean / target - 1.0).abs() < 0.05, "mean {mean} target {target}");
        for x in c.total() {
            assert!((x / target - 1.0).abs() < 0.15, "{x}");
        }
    }

    #[test]
    fn zero_noise_zero_control_conserves_phase_differences() {
        let n = 5;
        let params = ModelParams {
            sigma: 1.0,
            n,
            ..ModelParams::default()
        };
        let phases: Vec<f64> = (0..n).map(|i| 0.9 * i as f64).collect();
        let mut ens = PhaseEnsemble::homogeneous(phases.clone()).unwrap();
        let mut noise = RandomStream::family(0, StreamFamily::Noise, n);
        let p0 = ModelParams { sigma: 0.0, ..params };
        let u = alloc::vec![0.0; n];
        for _ in 0..100_000 {
            em_step(&mut ens, &u, &p0, &mut noise).unwrap();
        }
        for i in 1..n {
            let d0 = angle_difference(phases[i], phases[0]);
            let d = angle_difference(ens.phases()[i], ens.phases()[0]);
            assert!((d - d0).abs() < 1e-9, "{d} vs {d0}");
        }
    }

    #[test]
    fn simulation_is_bitwise_reproducible() {
        let params = ModelParams {
            n: 30,
            ..ModelParams::default()
        };
        let run = || {
            let mut sim = Simulator::new(params.clone(), ControlLaw::Kuramoto { kappa: 1.0 }, 77).unwrap();
            sim.run(500, 1, |_, _| {}).unwrap();
            sim.ensemble().phases().to_vec()
        };
        let (a, b) = (run(), run());
        assert_eq!(
            a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn model_params_validation() {
        assert!(ModelParams::default().validate().is_ok());
        let bad = [
            ModelParams { sigma: 0.0, ..Default::default() },
            ModelParams { penalty: -1.0, ..Default::default() },
            ModelParams { n: 0, ..Default::default() },
            ModelParams { dt: 0.0, ..Default::default() },
            ModelParams { gamma: -0.1, ..Default::default() },
            ModelParams { kappa: -1.0, ..Default::default() },
            ModelParams { gamma: 0.0, wave_speed: 1.2, ..Default::default() },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }

    proptest! {
        #[test]
        fn wrap_is_idempotent_and_in_range(x in -1e6f64..1e6) {
            let w = wrap_phase(x).unwrap();
            prop_assert!((0.0..TAU).contains(&w));
            prop_assert_eq!(wrap_phase(w).unwrap(), w);
            let k = ((x - w) / TAU).round();
            prop_assert!((x - w - k * TAU).abs() < 1e-9 * (1.0 + x.abs()));
        }

        #[test]
        fn order_parameter_bounded_and_rotation_invariant(
            phases in proptest::collection::vec(0.0f64..TAU, 1..40),
            shift in -10.0f64..10.0,
        ) {
            let g = order_parameter_sq(&phases);
            prop_assert!((0.0..=1.0).contains(&g));
            let rotated: Vec<f64> = phases.iter().map(|&p| wrap(p + shift)).collect();
            prop_assert!((order_parameter_sq(&rotated) - g).abs() < 1e-12);
        }

        #[test]
        fn controls_rotation_invariant_and_relabel_equivariant(
            phases in proptest::collection::vec(0.0f64..TAU, 2..30),
            shift in -10.0f64..10.0,
            kappa in 0.0f64..3.0,
            zeta in 0.0f64..TAU,
            amp in -5.0f64..5.0,
        ) {
            let n = phases.len();
            let ens = PhaseEnsemble::homogeneous(phases).unwrap();
            let rot = ens.rotated(shift);
            let order: Vec<usize> = (0..n).rev().collect();
            let perm = ens.permuted(&order);
            let policy = PolicyParams::uniform(n, amp, zeta);
            for i in 0..n {
                let u = kuramoto_control(i, &ens, kappa);
                prop_assert!((kuramoto_control(i, &rot, kappa) - u).abs() < 1e-12);
                prop_assert!((kuramoto_control(n - 1 - i, &perm, kappa) - u).abs() < 1e-12);
                let v = parameterized_control(i, &ens, &policy, 2.0);
                prop_assert!((parameterized_control(i, &rot, &policy, 2.0) - v).abs() < 1e-12);
                prop_assert!((parameterized_control(n - 1 - i, &perm, &policy, 2.0) - v).abs() < 1e-12);
            }
        }
    }
}
