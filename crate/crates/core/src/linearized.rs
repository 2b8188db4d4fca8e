//! Initial-value problem for the mean-field game linearized about
//! incoherence.
//!
//! With `p̃ = Σ_k P_k(t, ω) e^{ikθ}` and `h̃` likewise, each harmonic obeys
//!
//! ```text
//! dH_k/dt = (σ²k²/2 − ikω) H_k − π C_|k| ⟨P_k⟩
//! dP_k/dt = −k²/(2πR) H_k + (−σ²k²/2 − ikω) P_k
//! ```
//!
//! where `⟨·⟩` integrates against `g`. `H` is a backward (anti-diffusive)
//! variable, so the solution is the bounded one: the initial `P_k = q_k` is
//! expanded on eigenmodes whose eigenvalues have non-positive real part and
//! `H_k(0)` follows from that expansion.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_traits::Float;

use crate::model::{CostSpec, ModelParams};
use crate::quadrature::OmegaGrid;
use crate::{Error, Result, TAU};

/// Real initial perturbation sampled on a uniform θ grid for each node of an
/// ω quadrature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    theta_points: usize,
    omega: OmegaGrid,
    /// `values[j * theta_points + m] = q(θ_m, ω_j)`.
    values: Vec<f64>,
}

impl Perturbation {
    pub fn from_fn<F: Fn(f64, f64) -> f64>(theta_points: usize, omega: OmegaGrid, f: F) -> Self {
        let dtheta = TAU / theta_points as f64;
        let values = omega
            .nodes
            .iter()
            .flat_map(|&w| (0..theta_points).map(move |m| (m, w)))
            .map(|(m, w)| f(m as f64 * dtheta, w))
            .collect();
        Self {
            theta_points,
            omega,
            values,
        }
    }

    /// `q(θ, ω) = cos θ`.
    pub fn first_harmonic(theta_points: usize, omega: OmegaGrid) -> Self {
        Self::from_fn(theta_points, omega, |t, _| t.cos())
    }

    pub fn theta_points(&self) -> usize {
        self.theta_points
    }

    pub fn omega_grid(&self) -> &OmegaGrid {
        &self.omega
    }

    pub fn value(&self, omega_node: usize, theta_index: usize) -> f64 {
        self.values[omega_node * self.theta_points + theta_index]
    }

    /// Rejects data whose θ-mean is non-zero at some ω node.
    pub fn check_zero_mean(&self) -> Result<()> {
        let scale = self.values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        for (node, row) in self.values.chunks(self.theta_points).enumerate() {
            let mean = row.iter().sum::<f64>() / self.theta_points as f64;
            if mean.abs() > 1e-10 * scale {
                return Err(Error::NonZeroMean { node, mean });
            }
        }
        Ok(())
    }

    /// `q_k(ω_j) = (1/M) Σ_m q(θ_m, ω_j) e^{-ikθ_m}` for every node.
    fn fourier(&self, k: usize) -> Vec<Complex64> {
        let m = self.theta_points;
        let dtheta = TAU / m as f64;
        let basis: Vec<Complex64> = (0..m)
            .map(|i| Complex64::from_polar(1.0, -(k as f64) * i as f64 * dtheta))
            .collect();
        self.values
            .chunks(m)
            .map(|row| {
                row.iter()
                    .zip(&basis)
                    .map(|(&v, &e)| e * v)
                    .sum::<Complex64>()
                    / m as f64
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedConfig {
    /// Harmonics `1..=k_max` are evolved (negative ones by conjugation).
    pub k_max: usize,
    pub omega_nodes: usize,
    pub theta_points: usize,
    /// Spacing of the returned norm samples.
    pub sample_dt: f64,
    /// Eigenmodes with real part below this are kept in the bounded
    /// solution.
    pub admissible_tol: f64,
}

impl Default for LinearizedConfig {
    fn default() -> Self {
        Self {
            k_max: 8,
            omega_nodes: 101,
            theta_points: 64,
            sample_dt: 0.5,
            admissible_tol: 1e-9,
        }
    }
}

/// `‖p̃(·, t)‖_H` sampled in time.
#[derive(Debug, Clone, PartialEq)]
pub struct NormHistory {
    pub t: Vec<f64>,
    pub norm: Vec<f64>,
}

impl NormHistory {
    pub fn initial(&self) -> f64 {
        self.norm.first().copied().unwrap_or(0.0)
    }

    pub fn last(&self) -> f64 {
        self.norm.last().copied().unwrap_or(0.0)
    }

    /// Norms divided by the initial norm (zeros if that vanishes).
    pub fn relative(&self) -> Vec<f64> {
        let n0 = self.initial();
        self.norm
            .iter()
            .map(|&n| if n0 > 0.0 { n / n0 } else { 0.0 })
            .collect()
    }

    /// Largest norm over the last `fraction` of the horizon, relative to the
    /// initial norm. Undamped oscillating solutions beat, so decay is
    /// judged on this envelope rather than on a single sample.
    pub fn trailing_envelope(&self, fraction: f64) -> f64 {
        let t_end = self.t.last().copied().unwrap_or(0.0);
        let cut = t_end * (1.0 - fraction);
        self.t
            .iter()
            .zip(self.relative())
            .filter(|(&t, _)| t >= cut)
            .map(|(_, r)| r)
            .fold(0.0, f64::max)
    }
}

/// Evolution of one harmonic as a superposition `Σ_m c_m e^{λ_m t} v_m` of
/// eigenmodes, or as independent decaying exponentials when the cost does
/// not couple it.
enum ModeSolution {
    Free {
        rates: Vec<Complex64>,
        initial: Vec<Complex64>,
    },
    Coupled {
        eigenvalues: Vec<Complex64>,
        /// `vectors[m]` holds the P-part of mode `m`.
        vectors: Vec<Vec<Complex64>>,
        coefficients: Vec<Complex64>,
    },
}

impl ModeSolution {
    /// `Σ_j W_j |P_k(t, ω_j)|²`.
    fn weighted_energy(&self, t: f64, weights: &[f64]) -> f64 {
        match self {
            ModeSolution::Free { rates, initial } => rates
                .iter()
                .zip(initial)
                .zip(weights)
                .map(|((&r, &q), &w)| w * ((r * t).exp() * q).norm_sqr())
                .sum(),
            ModeSolution::Coupled {
                eigenvalues,
                vectors,
                coefficients,
            } => {
                let amps: Vec<Complex64> = eigenvalues
                    .iter()
                    .zip(coefficients)
                    .map(|(&l, &c)| c * (l * t).exp())
                    .collect();
                weights
                    .iter()
                    .enumerate()
                    .map(|(j, &w)| {
                        let p: Complex64 = vectors.iter().zip(&amps).map(|(v, &a)| v[j] * a).sum();
                        w * p.norm_sqr()
                    })
                    .sum()
            }
        }
    }
}

/// Evolves the bounded solution of the linearized problem from
/// `p̃(·, 0) = q` and samples `‖p̃(·, t)‖_H` on `[0, horizon]`.
pub fn linearized_ivp_evolve(
    q: &Perturbation,
    penalty: f64,
    params: &ModelParams,
    cost: &CostSpec,
    horizon: f64,
    config: &LinearizedConfig,
) -> Result<NormHistory> {
    q.check_zero_mean()?;
    if !(penalty.is_finite() && penalty > 0.0) {
        return Err(Error::InvalidParameter {
            name: "R",
            reason: "must be positive and finite",
        });
    }
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "T",
            reason: "must be non-negative and finite",
        });
    }
    if !(config.sample_dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "sample_dt",
            reason: "must be positive",
        });
    }
    if 2 * config.k_max >= q.theta_points {
        return Err(Error::InvalidParameter {
            name: "theta_points",
            reason: "must exceed twice the largest harmonic",
        });
    }
    let s = params.diffusion();
    let omega = &q.omega;
    let modes = (1..=config.k_max)
        .map(|k| {
            let qk = q.fourier(k);
            let c = cost.coefficient(k);
            if c == 0.0 || qk.iter().all(|z| z.norm() == 0.0) {
                let kf = k as f64;
                let rates = omega
                    .nodes
                    .iter()
                    .map(|&w| Complex64::new(-s * kf * kf, -kf * w))
                    .collect();
                Ok(ModeSolution::Free { rates, initial: qk })
            } else {
                coupled_mode(k, c, penalty, s, omega, &qk, config.admissible_tol)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let steps = (horizon / config.sample_dt).ceil() as usize;
    let mut t = Vec::with_capacity(steps + 1);
    let mut norm = Vec::with_capacity(steps + 1);
    for n in 0..=steps {
        let tn = (n as f64 * config.sample_dt).min(horizon);
        let energy: f64 = modes.iter().map(|m| m.weighted_energy(tn, &omega.weights)).sum();
        // Harmonic -k mirrors +k for real data.
        t.push(tn);
        norm.push((TAU * 2.0 * energy).sqrt());
    }
    Ok(NormHistory { t, norm })
}

fn coupled_mode(
    k: usize,
    c: f64,
    penalty: f64,
    s: f64,
    omega: &OmegaGrid,
    qk: &[Complex64],
    admissible_tol: f64,
) -> Result<ModeSolution> {
    let m = omega.len();
    let kf = k as f64;
    let a: Vec<Complex64> = omega.nodes.iter().map(|&w| Complex64::new(s * kf * kf, -kf * w)).collect();
    let b: Vec<Complex64> = omega.nodes.iter().map(|&w| Complex64::new(-s * kf * kf, -kf * w)).collect();
    let kappa = kf * kf / (TAU * penalty);
    let pi_c = core::f64::consts::PI * c;

    let mut mat = DMatrix::<Complex64>::zeros(2 * m, 2 * m);
    for j in 0..m {
        mat[(j, j)] = a[j];
        mat[(m + j, m + j)] = b[j];
        mat[(m + j, j)] = Complex64::new(-kappa, 0.0);
        for (l, &w) in omega.weights.iter().enumerate() {
            mat[(j, m + l)] = Complex64::new(-pi_c * w, 0.0);
        }
    }
    let eig = mat
        .schur()
        .eigenvalues()
        .ok_or(Error::LinearAlgebra("Schur decomposition did not converge"))?;

    // Each eigenvalue solves 1 = πCκ Σ W_j / ((λ-a_j)(λ-b_j)); polish it
    // there, then its P-part is P_j ∝ 1/((λ-a_j)(λ-b_j)).
    let secular = |l: Complex64| {
        let mut f = Complex64::new(-1.0, 0.0);
        let mut df = Complex64::new(0.0, 0.0);
        for ((&aj, &bj), &w) in a.iter().zip(&b).zip(&omega.weights) {
            let (x, y) = (l - aj, l - bj);
            let inv = (x * y).inv();
            f += inv * (pi_c * kappa * w);
            df -= (x + y) * inv * inv * (pi_c * kappa * w);
        }
        (f, df)
    };
    let mut eigenvalues = Vec::new();
    let mut vectors = Vec::new();
    for &l0 in eig.iter() {
        let mut l = l0;
        for _ in 0..20 {
            let (f, df) = secular(l);
            let step = f / df;
            if !(step.re.is_finite() && step.im.is_finite()) {
                break;
            }
            let candidate = l - step;
            if (candidate - l0).norm() > 1e-6 * (1.0 + l0.norm()) {
                break;
            }
            l = candidate;
            if step.norm() < 1e-15 * (1.0 + l.norm()) {
                break;
            }
        }
        if l.re >= admissible_tol {
            continue;
        }
        let mut v: Vec<Complex64> = a
            .iter()
            .zip(&b)
            .map(|(&aj, &bj)| ((l - aj) * (l - bj)).inv())
            .collect();
        let scale = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::LinearAlgebra("degenerate eigenvector"));
        }
        v.iter_mut().for_each(|z| *z /= scale);
        eigenvalues.push(l);
        vectors.push(v);
    }
    if eigenvalues.is_empty() {
        return Err(Error::LinearAlgebra("no admissible eigenmodes"));
    }

    let basis = DMatrix::from_fn(m, eigenvalues.len(), |j, col| vectors[col][j]);
    let rhs = DVector::from_column_slice(qk);
    let svd = basis.svd(true, true);
    let coefficients = svd
        .solve(&rhs, 1e-12)
        .map_err(Error::LinearAlgebra)?
        .iter()
        .copied()
        .collect();
    Ok(ModeSolution::Coupled {
        eigenvalues,
        vectors,
        coefficients,
    })
}
