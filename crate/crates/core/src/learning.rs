//! First-harmonic approximate dynamic programming for the oscillator game.
//!
//! The relative value function is searched in the class
//! `h₀(θ) = −A [P_c cos(θ−ζ) + P_s sin(θ−ζ)]`, the mean-field form of the
//! Kuramoto-type law `u = −(A/R)(1/N) Σ_j sin(θ − θ_j − ζ)`; for a
//! population phasor `(P_c, P_s) = (1, 0)` it is `−A cos(θ−ζ)`. Its Galerkin
//! loss `E(A, ζ) = ⟨L,cos⟩² + ⟨L,sin⟩²` equals
//! `π² P² |−1/4 + A e^{−iζ}(σ²/2 − i(ω−a))|²` with `P² = P_c² + P_s²`.

use alloc::vec::Vec;
use num_complex::Complex64;
use num_traits::Float;

use crate::model::{
    parameterized_control_from_moments, sample_frequencies, wrap, wrap_phase, CostSpec,
    ModelParams, Moments, PhaseEnsemble,
};
use crate::rng::{RandomStream, StreamFamily};
use crate::{Error, Result, TAU};

/// Per-oscillator amplitudes `A_i` and phase offsets `ζ_i ∈ [0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub amplitude: Vec<f64>,
    pub phase: Vec<f64>,
}

impl PolicyParams {
    /// Phases are wrapped to `[0, 2π)`; both vectors must have equal length.
    pub fn new(amplitude: Vec<f64>, phase: Vec<f64>) -> Self {
        assert_eq!(amplitude.len(), phase.len(), "amplitude/phase length mismatch");
        Self {
            amplitude,
            phase: phase.into_iter().map(wrap).collect(),
        }
    }

    pub fn uniform(n: usize, amplitude: f64, phase: f64) -> Self {
        Self::new(alloc::vec![amplitude; n], alloc::vec![phase; n])
    }

    pub fn len(&self) -> usize {
        self.amplitude.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitude.is_empty()
    }

    pub fn get(&self, i: usize) -> (f64, f64) {
        (self.amplitude[i], self.phase[i])
    }
}

/// First circular moments `P_c`, `P_s` of the population density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstHarmonic {
    pub pc: f64,
    pub ps: f64,
}

impl FirstHarmonic {
    pub fn new(pc: f64, ps: f64) -> Result<Self> {
        if !(pc.is_finite() && ps.is_finite()) || pc * pc + ps * ps > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter {
                name: "(Pc, Ps)",
                reason: "must satisfy Pc² + Ps² ≤ 1",
            });
        }
        Ok(Self { pc, ps })
    }

    /// Incoherent (uniform) density.
    pub fn uniform() -> Self {
        Self { pc: 0.0, ps: 0.0 }
    }

    pub fn of_phases(phases: &[f64]) -> Self {
        let m = Moments::of(phases);
        Self { pc: m.cos, ps: m.sin }
    }

    pub fn magnitude_sq(&self) -> f64 {
        self.pc * self.pc + self.ps * self.ps
    }
}

/// Mean-field cost `c̄(θ) = C₀ + C₁ (P_c cos θ + P_s sin θ)`.
pub fn mean_field_cost_bar(theta: f64, harmonic: FirstHarmonic, cost: &CostSpec) -> Result<f64> {
    if !cost.is_first_harmonic() {
        return Err(Error::UnsupportedCost);
    }
    Ok(cost.coefficient(0)
        + cost.coefficient(1) * (harmonic.pc * theta.cos() + harmonic.ps * theta.sin()))
}

/// Galerkin-optimal parameters and the resulting average cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GalerkinSolution {
    pub a_star: f64,
    pub zeta_star: f64,
    pub eta: f64,
}

fn drift_and_diffusion(omega: f64, params: &ModelParams) -> (f64, f64) {
    (omega - params.wave_speed, params.diffusion())
}

/// `(A*, ζ*)` for unit wave speed: `ζ*` solves
/// `(ω−1) cos ζ + (σ²/2) sin ζ = 0` on the branch with
/// `A* = 1/(4 sqrt((ω−1)² + (σ²/2)²)) > 0`.
pub fn galerkin_params_closed(omega: f64, sigma: f64) -> (f64, f64) {
    closed_form(omega - 1.0, 0.5 * sigma * sigma)
}

fn closed_form(d: f64, s: f64) -> (f64, f64) {
    let rho = d.hypot(s);
    (0.25 / rho, wrap((-d).atan2(s)))
}

/// Closed-form optimum in the frame of `params.wave_speed`, with its
/// average cost under the population moments `harmonic`.
pub fn galerkin_solution(
    omega: f64,
    params: &ModelParams,
    harmonic: FirstHarmonic,
    cost: &CostSpec,
) -> Result<GalerkinSolution> {
    let (d, s) = drift_and_diffusion(omega, params);
    let (a_star, zeta_star) = closed_form(d, s);
    let grid = uniform_theta_grid(LOSS_GRID);
    let h = minimized_hamiltonian(&grid, a_star, zeta_star, omega, harmonic, params, cost)?;
    let eta = h.iter().sum::<f64>() / h.len() as f64;
    Ok(GalerkinSolution {
        a_star,
        zeta_star,
        eta,
    })
}

/// Points of the uniform periodic θ grid used for η and the loss.
pub const LOSS_GRID: usize = 256;

pub fn uniform_theta_grid(m: usize) -> Vec<f64> {
    (0..m).map(|i| TAU * i as f64 / m as f64).collect()
}

fn minimized_hamiltonian(
    theta: &[f64],
    amplitude: f64,
    zeta: f64,
    omega: f64,
    harmonic: FirstHarmonic,
    params: &ModelParams,
    cost: &CostSpec,
) -> Result<Vec<f64>> {
    if theta.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let (d, s) = drift_and_diffusion(omega, params);
    let r = params.penalty;
    theta
        .iter()
        .map(|&t| {
            let x = t - zeta;
            let (sx, cx) = (x.sin(), x.cos());
            // h = -A(Pc cos x + Ps sin x)
            let dh = amplitude * (harmonic.pc * sx - harmonic.ps * cx);
            let d2h = amplitude * (harmonic.pc * cx + harmonic.ps * sx);
            Ok(mean_field_cost_bar(t, harmonic, cost)? + d * dh - dh * dh / (2.0 * r) + s * d2h)
        })
        .collect()
}

/// Pointwise Bellman error `L(θ) = H̱₀(θ) − η` on `theta_grid`, `η` being
/// the grid average of `H̱₀` (the trapezoid rule on a uniform periodic
/// grid).
pub fn bellman_error(
    theta_grid: &[f64],
    alpha: (f64, f64),
    omega: f64,
    harmonic: FirstHarmonic,
    params: &ModelParams,
    cost: &CostSpec,
) -> Result<Vec<f64>> {
    let mut h = minimized_hamiltonian(theta_grid, alpha.0, alpha.1, omega, harmonic, params, cost)?;
    let eta = h.iter().sum::<f64>() / h.len() as f64;
    h.iter_mut().for_each(|x| *x -= eta);
    Ok(h)
}

/// Trapezoid approximations of `∫ L cos θ dθ` and `∫ L sin θ dθ` for `L`
/// sampled on the uniform grid `θ_m = 2πm/M`.
pub fn galerkin_projections(values: &[f64]) -> Result<(f64, f64)> {
    let m = values.len();
    if m < 16 {
        return Err(Error::InvalidParameter {
            name: "theta_grid",
            reason: "needs at least 16 points",
        });
    }
    let dtheta = TAU / m as f64;
    let (c, s) = values.iter().enumerate().fold((0.0, 0.0), |(c, s), (i, &v)| {
        let t = i as f64 * dtheta;
        (c + v * t.cos(), s + v * t.sin())
    });
    Ok((c * dtheta, s * dtheta))
}

/// Galerkin loss `⟨L,cos⟩² + ⟨L,sin⟩²`, assembled from the Bellman error on
/// a [`LOSS_GRID`]-point grid.
pub fn galerkin_loss(
    amplitude: f64,
    zeta: f64,
    omega: f64,
    params: &ModelParams,
    harmonic: FirstHarmonic,
) -> Result<f64> {
    let grid = uniform_theta_grid(LOSS_GRID);
    let l = bellman_error(&grid, (amplitude, zeta), omega, harmonic, params, &CostSpec::kuramoto())?;
    let (c, s) = galerkin_projections(&l)?;
    Ok(c * c + s * s)
}

/// `(∂E/∂A, ∂E/∂ζ)`:
///
/// ```text
/// ∂E/∂A = (π²/2) P² {4A[(ω−1)² + (σ²/2)²] + [(ω−1) sin ζ − (σ²/2) cos ζ]}
/// ∂E/∂ζ = (π²/2) P² A [(ω−1) cos ζ + (σ²/2) sin ζ]
/// ```
///
/// with `ω − 1` read as `ω − a`.
pub fn loss_gradient(
    amplitude: f64,
    zeta: f64,
    omega: f64,
    params: &ModelParams,
    harmonic: FirstHarmonic,
) -> (f64, f64) {
    let scale = 0.5 * core::f64::consts::PI.powi(2) * harmonic.magnitude_sq();
    let (ga, gz) = unit_gradient(amplitude, zeta, omega, params);
    (scale * ga, scale * gz)
}

/// The braces of the gradient (no `(π²/2)P²` prefactor).
fn unit_gradient(amplitude: f64, zeta: f64, omega: f64, params: &ModelParams) -> (f64, f64) {
    let (d, s) = drift_and_diffusion(omega, params);
    let (sz, cz) = (zeta.sin(), zeta.cos());
    (
        4.0 * amplitude * (d * d + s * s) + (d * sz - s * cz),
        amplitude * (d * cz + s * sz),
    )
}

/// Right-hand side of the learning ODE for one oscillator:
/// `(dA/dt, dζ/dt) = −ε Γ² (unit gradient)`.
pub fn learning_rhs(
    amplitude: f64,
    zeta: f64,
    omega: f64,
    gamma_sq: f64,
    params: &ModelParams,
) -> (f64, f64) {
    let (ga, gz) = unit_gradient(amplitude, zeta, omega, params);
    let rate = params.epsilon * gamma_sq;
    (-rate * ga, -rate * gz)
}

/// Parameters of every learning oscillator together with the clock.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningState {
    pub policy: PolicyParams,
    pub time: f64,
}

/// One explicit Euler step of the learning ODE for all oscillators,
/// `omegas[i]` being the frequency of oscillator `i`.
pub fn learning_ode_step(
    state: &mut LearningState,
    gamma_sq: f64,
    omegas: &[f64],
    params: &ModelParams,
    dt: f64,
) -> Result<()> {
    if omegas.len() != state.policy.len() {
        return Err(Error::LengthMismatch {
            expected: state.policy.len(),
            actual: omegas.len(),
        });
    }
    if gamma_sq != 0.0 && params.epsilon != 0.0 {
        for (i, &w) in omegas.iter().enumerate() {
            let (a, z) = state.policy.get(i);
            let (da, dz) = learning_rhs(a, z, w, gamma_sq, params);
            state.policy.amplitude[i] = a + dt * da;
            state.policy.phase[i] = wrap_phase(z + dt * dz)?;
        }
    }
    state.time += dt;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Attracting,
    Unstable,
    Marginal,
}

/// One of the four equilibria `ᾱ⁽¹⁾ … ᾱ⁽⁴⁾` of the learning ODE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    /// 1 to 4.
    pub label: u8,
    pub amplitude: f64,
    pub phase: f64,
    /// Jacobian of the right-hand side for `εΓ² = 1`.
    pub jacobian: [[f64; 2]; 2],
    pub eigenvalues: [Complex64; 2],
    pub stability: Stability,
}

/// Equilibria `(A*, ζ*)`, `(−A*, ζ*−π)`, `(0, ζ*−π/2)`, `(0, ζ*+π/2)` with
/// their linearization. The classification does not depend on `εΓ² > 0`.
pub fn equilibria(omega: f64, params: &ModelParams) -> [Equilibrium; 4] {
    let (d, s) = drift_and_diffusion(omega, params);
    let (a_star, z_star) = closed_form(d, s);
    let half_pi = core::f64::consts::FRAC_PI_2;
    let points = [
        (a_star, z_star),
        (-a_star, z_star - 2.0 * half_pi),
        (0.0, z_star - half_pi),
        (0.0, z_star + half_pi),
    ];
    let mut out = [Equilibrium {
        label: 0,
        amplitude: 0.0,
        phase: 0.0,
        jacobian: [[0.0; 2]; 2],
        eigenvalues: [Complex64::new(0.0, 0.0); 2],
        stability: Stability::Marginal,
    }; 4];
    for (k, &(a, z)) in points.iter().enumerate() {
        let (sz, cz) = (z.sin(), z.cos());
        let u = s * cz - d * sz;
        let v = d * cz + s * sz;
        let rho_sq = d * d + s * s;
        let jac = [[-4.0 * rho_sq, -v], [-v, -a * u]];
        let eigenvalues = eigenvalues_2x2(jac);
        let max_re = eigenvalues[0].re.max(eigenvalues[1].re);
        let stability = if max_re < -1e-12 {
            Stability::Attracting
        } else if max_re > 1e-12 {
            Stability::Unstable
        } else {
            Stability::Marginal
        };
        out[k] = Equilibrium {
            label: k as u8 + 1,
            amplitude: a,
            phase: wrap(z),
            jacobian: jac,
            eigenvalues,
            stability,
        };
    }
    out
}

fn eigenvalues_2x2(m: [[f64; 2]; 2]) -> [Complex64; 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = Complex64::new(0.25 * tr * tr - det, 0.0).sqrt();
    [Complex64::new(0.5 * tr, 0.0) + disc, Complex64::new(0.5 * tr, 0.0) - disc]
}

/// Signed circular distance between two angles, in `[0, π]`.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = wrap(a - b);
    d.min(TAU - d)
}

/// Neighborhood of the attracting pair used to call a run converged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighborhood {
    /// Allowed `|A − Ā|` as a fraction of `A*`.
    pub amplitude_rel: f64,
    /// Allowed circular distance `|ζ − ζ̄|`, radians.
    pub phase_abs: f64,
}

impl Default for Neighborhood {
    fn default() -> Self {
        Self {
            amplitude_rel: 0.05,
            phase_abs: 0.05 * core::f64::consts::PI,
        }
    }
}

impl Neighborhood {
    /// Whether `(a, z)` lies near `ᾱ⁽¹⁾` or `ᾱ⁽²⁾` of `eq`.
    pub fn contains(&self, eq: &[Equilibrium; 4], a: f64, z: f64) -> bool {
        eq[..2].iter().any(|e| {
            (a - e.amplitude).abs() <= self.amplitude_rel * eq[0].amplitude
                && circular_distance(z, e.phase) <= self.phase_abs
        })
    }
}

/// Setup of the `N`-oscillator experiment in which oscillator 1 learns
/// while the others apply Kuramoto control.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningConfig {
    pub n: usize,
    pub omega1: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub epsilon: f64,
    pub penalty: f64,
    pub horizon: f64,
    pub dt: f64,
    pub initial_amplitude: f64,
    pub initial_phase: f64,
    pub seed: u64,
    pub record_stride: usize,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            n: 200,
            omega1: 1.1,
            gamma: 0.1,
            sigma: 0.1,
            kappa: 1.0,
            epsilon: 10.0,
            penalty: 10.0,
            horizon: 100.0,
            dt: 0.01,
            initial_amplitude: 1.0,
            initial_phase: core::f64::consts::PI,
            seed: 0,
            record_stride: 10,
        }
    }
}

impl LearningConfig {
    pub fn model_params(&self) -> ModelParams {
        ModelParams {
            sigma: self.sigma,
            gamma: self.gamma,
            penalty: self.penalty,
            kappa: self.kappa,
            epsilon: self.epsilon,
            wave_speed: 1.0,
            n: self.n,
            dt: self.dt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_params().validate()?;
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidParameter {
                name: "T",
                reason: "must be positive and finite",
            });
        }
        if !(self.initial_amplitude.is_finite() && self.initial_phase.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "initial",
                reason: "A and zeta must be finite",
            });
        }
        Ok(())
    }
}

/// Recorded trajectory of oscillator 1's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningRun {
    pub t: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub phase: Vec<f64>,
    pub gamma_sq: Vec<f64>,
    pub equilibria: [Equilibrium; 4],
    /// Start of the final stretch spent inside the default
    /// [`Neighborhood`], checked every step; `None` if the run ends outside.
    pub settling_time: Option<f64>,
}

pub fn run_learning_experiment(config: &LearningConfig) -> Result<LearningRun> {
    config.validate()?;
    let params = config.model_params();
    let n = config.n;
    let mut omegas = sample_frequencies(config.gamma, n, config.seed);
    omegas[0] = config.omega1;
    let phases = (0..n as u64)
        .map(|i| RandomStream::of(config.seed, StreamFamily::InitialPhase, i).uniform_in(0.0, TAU))
        .collect();
    let mut ensemble = PhaseEnsemble::new(phases, omegas.clone())?;
    let mut noise = RandomStream::family(config.seed, StreamFamily::Noise, n);
    let eq = equilibria(config.omega1, &params);
    let hood = Neighborhood::default();

    let steps = (config.horizon / config.dt).round() as usize;
    let stride = config.record_stride.max(1);
    let mut run = LearningRun {
        t: Vec::new(),
        amplitude: Vec::new(),
        phase: Vec::new(),
        gamma_sq: Vec::new(),
        equilibria: eq,
        settling_time: None,
    };
    let (mut a, mut z) = (config.initial_amplitude, wrap_phase(config.initial_phase)?);
    let mut inside_since = hood.contains(&eq, a, z).then_some(0.0);
    let mut controls = alloc::vec![0.0; n];
    for k in 0..=steps {
        let t = k as f64 * config.dt;
        let m = ensemble.moments();
        let g2 = (m.cos * m.cos + m.sin * m.sin).min(1.0);
        if k % stride == 0 || k == steps {
            run.t.push(t);
            run.amplitude.push(a);
            run.phase.push(z);
            run.gamma_sq.push(g2);
        }
        if k == steps {
            break;
        }
        let th = ensemble.phases();
        controls[0] = parameterized_control_from_moments(th[0], a, z, config.penalty, m);
        for i in 1..n {
            controls[i] = parameterized_control_from_moments(th[i], config.kappa, 0.0, 1.0, m);
        }
        let (da, dz) = learning_rhs(a, z, config.omega1, g2, &params);
        a += config.dt * da;
        z = wrap(z + config.dt * dz);
        crate::model::em_step(&mut ensemble, &controls, &params, &mut noise)?;
        let t_next = (k + 1) as f64 * config.dt;
        if hood.contains(&eq, a, z) {
            inside_since.get_or_insert(t_next);
        } else {
            inside_since = None;
        }
    }
    run.settling_time = inside_since;
    Ok(run)
}

/// Learning-ODE vector field on an `(A, ζ)` grid, for `Γ² = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortraitPoint {
    pub amplitude: f64,
    pub phase: f64,
    pub d_amplitude: f64,
    pub d_phase: f64,
}

pub fn phase_portrait(
    omega: f64,
    params: &ModelParams,
    amplitude_range: (f64, f64),
    amplitude_points: usize,
    phase_points: usize,
) -> Vec<PortraitPoint> {
    let (lo, hi) = amplitude_range;
    let na = amplitude_points.max(2);
    let mut out = Vec::with_capacity(na * phase_points);
    for i in 0..na {
        let a = lo + (hi - lo) * i as f64 / (na - 1) as f64;
        for j in 0..phase_points {
            let z = TAU * j as f64 / phase_points as f64;
            let (da, dz) = learning_rhs(a, z, omega, 1.0, params);
            out.push(PortraitPoint {
                amplitude: a,
                phase: z,
                d_amplitude: da,
                d_phase: dz,
            });
        }
    }
    out
}
