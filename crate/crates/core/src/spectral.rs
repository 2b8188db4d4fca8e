//! Spectrum of the mean-field game linearized about the incoherence
//! solution.
//!
//! For harmonic `k` the continuous spectrum is the pair of segments
//! `±σ²k²/2 − ikω`, `ω ∈ Ω`, and the discrete spectrum is the zero set of
//!
//! ```text
//! F_k(λ; R) = C_|k| k²/(2R) ∫ g(ω) dω / [(λ − σ²k²/2 + ikω)(λ + σ²k²/2 + ikω)] − 1.
//! ```
//!
//! Discrete eigenvalues are followed in `R` by damped Newton continuation;
//! the critical penalty `R_c` is where the two paths of `k = ±1` meet on
//! the imaginary axis.

use alloc::vec::Vec;
use num_complex::Complex64;
use num_traits::Float;

use crate::linearized::NormHistory;
use crate::model::{CostSpec, ModelParams};
use crate::quadrature::gauss_legendre;
use crate::{Error, Result};

/// Nodes per Gauss–Legendre panel of the characteristic integral.
pub const FIXED_NODES: usize = 64;
/// Ratio between consecutive penalties of a continuation grid.
pub const GRID_RATIO: f64 = 0.98;
/// Residual a located eigenvalue must satisfy.
pub const ROOT_TOLERANCE: f64 = 1e-8;
/// Real parts below this count as "on the imaginary axis".
pub const COLLISION_TOLERANCE: f64 = 1e-6;

// A panel is accepted once the nearest integrand pole lies outside the
// Bernstein ellipse of this parameter (error ~ ρ^-128 ≈ 1e-15).
const PANEL_RHO: f64 = 1.3;
const MAX_PANEL_DEPTH: u32 = 60;
const MIN_POLE_DISTANCE: f64 = 1e-12;
const SEED_INSET: f64 = 1e-3;
const FINE_SCAN: usize = 256;

/// One branch `{±σ²k²/2 − ikω : ω ∈ Ω}` of the continuous spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumSegment {
    pub harmonic: i32,
    pub real_part: f64,
    /// `(min, max)` of the imaginary parts.
    pub imag_range: (f64, f64),
}

impl SpectrumSegment {
    pub fn endpoints(&self) -> (Complex64, Complex64) {
        (
            Complex64::new(self.real_part, self.imag_range.0),
            Complex64::new(self.real_part, self.imag_range.1),
        )
    }

    /// Euclidean distance from `lambda` to the segment.
    pub fn distance(&self, lambda: Complex64) -> f64 {
        let (lo, hi) = self.imag_range;
        let dy = if lambda.im < lo {
            lo - lambda.im
        } else if lambda.im > hi {
            lambda.im - hi
        } else {
            0.0
        };
        (lambda.re - self.real_part).hypot(dy)
    }
}

/// Both continuous-spectrum segments of harmonic `k`, right one first.
pub fn continuous_spectrum(k: i32, sigma: f64, gamma: f64) -> Result<[SpectrumSegment; 2]> {
    if k == 0 {
        return Err(Error::ZeroHarmonic);
    }
    let kf = k as f64;
    let re = 0.5 * sigma * sigma * kf * kf;
    let (a, b) = (-kf * (1.0 - gamma), -kf * (1.0 + gamma));
    let imag_range = (a.min(b), a.max(b));
    Ok([
        SpectrumSegment {
            harmonic: k,
            real_part: re,
            imag_range,
        },
        SpectrumSegment {
            harmonic: k,
            real_part: -re,
            imag_range,
        },
    ])
}

/// `F_k(·; R)` for a fixed harmonic, penalty and population.
#[derive(Debug, Clone)]
pub struct CharacteristicEquation {
    k: i32,
    penalty: f64,
    diffusion: f64,
    coefficient: f64,
    gamma: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl CharacteristicEquation {
    pub fn new(k: i32, penalty: f64, params: &ModelParams, cost: &CostSpec) -> Result<Self> {
        if k == 0 {
            return Err(Error::ZeroHarmonic);
        }
        let coefficient = cost.coefficient(k.unsigned_abs() as usize);
        if coefficient == 0.0 {
            return Err(Error::EmptyDiscreteSpectrum(k.unsigned_abs()));
        }
        if !(penalty.is_finite() && penalty > 0.0) {
            return Err(Error::InvalidParameter {
                name: "R",
                reason: "must be positive and finite",
            });
        }
        if !(params.gamma.is_finite() && params.gamma >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: "must be non-negative and finite",
            });
        }
        let (nodes, weights) = gauss_legendre(FIXED_NODES);
        Ok(Self {
            k,
            penalty,
            diffusion: params.diffusion(),
            coefficient,
            gamma: params.gamma,
            nodes,
            weights,
        })
    }

    pub fn harmonic(&self) -> i32 {
        self.k
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    /// Same equation at another penalty.
    pub fn with_penalty(&self, penalty: f64) -> Self {
        Self {
            penalty,
            ..self.clone()
        }
    }

    /// `C_|k| k² / (2R)`.
    pub fn prefactor(&self) -> f64 {
        let kf = self.k as f64;
        self.coefficient * kf * kf / (2.0 * self.penalty)
    }

    pub fn segments(&self) -> [SpectrumSegment; 2] {
        let kf = self.k as f64;
        let re = self.diffusion * kf * kf;
        let (a, b) = (-kf * (1.0 - self.gamma), -kf * (1.0 + self.gamma));
        let seg = |real_part| SpectrumSegment {
            harmonic: self.k,
            real_part,
            imag_range: (a.min(b), a.max(b)),
        };
        [seg(re), seg(-re)]
    }

    /// Distance from `lambda` to the nearer continuous-spectrum segment.
    pub fn pole_distance(&self, lambda: Complex64) -> f64 {
        let [a, b] = self.segments();
        a.distance(lambda).min(b.distance(lambda))
    }

    pub fn residual(&self, lambda: Complex64) -> Result<Complex64> {
        Ok(self.residual_with_derivative(lambda)?.0)
    }

    /// `(F(λ), F'(λ))`.
    pub fn residual_with_derivative(&self, lambda: Complex64) -> Result<(Complex64, Complex64)> {
        let (i0, i1) = self.integral(lambda)?;
        let c = self.prefactor();
        Ok((i0 * c - 1.0, i1 * c))
    }

    /// `∫ g/(AB) dω` and its λ-derivative `−∫ g (A+B)/(AB)² dω`.
    pub fn integral(&self, lambda: Complex64) -> Result<(Complex64, Complex64)> {
        let distance = self.pole_distance(lambda);
        if !(distance >= MIN_POLE_DISTANCE) {
            return Err(Error::OnContinuousSpectrum { distance });
        }
        if self.gamma == 0.0 {
            return Ok(self.integrand(lambda, 1.0));
        }
        let kf = self.k as f64;
        let sk2 = self.diffusion * kf * kf;
        // Both factors vanish at the same real frequency; the nearer pole
        // dictates how finely Ω is split.
        let omega0 = -lambda.im / kf;
        let depth_im = (sk2 - lambda.re).abs().min((sk2 + lambda.re).abs()) / kf.abs();
        let pole = Complex64::new(omega0, depth_im);

        let (lo, hi) = (1.0 - self.gamma, 1.0 + self.gamma);
        let mut acc = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        let mut stack = alloc::vec![(lo, hi, 0u32)];
        while let Some((a, b, depth)) = stack.pop() {
            if depth >= MAX_PANEL_DEPTH || ellipse_parameter(pole, a, b) >= PANEL_RHO {
                let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
                for (&x, &w) in self.nodes.iter().zip(&self.weights) {
                    let (f, df) = self.integrand(lambda, mid + half * x);
                    acc.0 += f * (w * half);
                    acc.1 += df * (w * half);
                }
                continue;
            }
            let margin = 1e-3 * (b - a);
            let split = if omega0 > a + margin && omega0 < b - margin {
                omega0
            } else {
                0.5 * (a + b)
            };
            stack.push((a, split, depth + 1));
            stack.push((split, b, depth + 1));
        }
        let g = 1.0 / (2.0 * self.gamma);
        Ok((acc.0 * g, acc.1 * g))
    }

    #[inline]
    fn integrand(&self, lambda: Complex64, omega: f64) -> (Complex64, Complex64) {
        let kf = self.k as f64;
        let sk2 = self.diffusion * kf * kf;
        let shift = Complex64::new(0.0, kf * omega);
        let a = lambda - sk2 + shift;
        let b = lambda + sk2 + shift;
        let inv = (a * b).inv();
        (inv, -(a + b) * inv * inv)
    }

    /// Damped Newton from `seed`; `None` unless `|F| < ROOT_TOLERANCE`.
    pub fn newton(&self, seed: Complex64) -> Option<Complex64> {
        let mut z = seed;
        let (mut f, mut df) = self.residual_with_derivative(z).ok()?;
        for _ in 0..100 {
            if f.norm() < 1e-14 {
                break;
            }
            let step = f / df;
            if !(step.re.is_finite() && step.im.is_finite()) {
                break;
            }
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-10 {
                let trial = z - step * t;
                if let Ok((ft, dft)) = self.residual_with_derivative(trial) {
                    if ft.norm() < f.norm() {
                        z = trial;
                        f = ft;
                        df = dft;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted || (step * t).norm() < 1e-15 * (1.0 + z.norm()) {
                break;
            }
        }
        (f.norm() < ROOT_TOLERANCE).then_some(z)
    }
}

/// Bernstein-ellipse parameter of `pole` relative to `[a, b]`.
fn ellipse_parameter(pole: Complex64, a: f64, b: f64) -> f64 {
    let z = (pole * 2.0 - (a + b)) / (b - a);
    let w = (z * z - 1.0).sqrt();
    (z + w).norm().max((z - w).norm())
}

/// `F_k(λ; R)` evaluated with panelled 64-node Gauss–Legendre quadrature.
pub fn characteristic_residual(
    lambda: Complex64,
    penalty: f64,
    k: i32,
    params: &ModelParams,
    cost: &CostSpec,
) -> Result<Complex64> {
    CharacteristicEquation::new(k, penalty, params, cost)?.residual(lambda)
}

/// `atan(x)/x`, continuous at 0.
fn atan_over_x(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 3.0 + x2 * x2 / 5.0
    } else {
        x.atan() / x
    }
}

/// Closed-form `R_c(γ)` for the default cost and uniform `g`:
/// `1/(2σ⁴)` at `γ = 0`, `(1/(4σ²γ)) atan(2γ/σ²)` otherwise.
pub fn critical_r_closed(gamma: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    atan_over_x(2.0 * gamma / s2) / (2.0 * s2 * s2)
}

/// Critical Kuramoto coupling `κ_c(γ) = 2γ / atan(2γ/σ²)` (σ² at `γ = 0`).
pub fn critical_kappa(gamma: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    s2 / atan_over_x(2.0 * gamma / s2)
}

/// Penalty at which `F_k(−ik; R) = 0`, i.e. where the symmetric pair of a
/// uniform population would meet at `−ik`. Used to scale R-grids.
pub fn collision_scale(k: i32, params: &ModelParams, cost: &CostSpec) -> Result<f64> {
    let eq = CharacteristicEquation::new(k, 1.0, params, cost)?;
    let kf = k as f64;
    let sk2 = params.diffusion() * kf * kf;
    // ∫ g dω / ((ik(ω-1))² - s²k⁴) = -(1/k²) ∫ g / ((ω-1)² + s²k²)
    let j = if params.gamma == 0.0 {
        1.0 / (sk2 * sk2)
    } else {
        let g = params.gamma;
        let a = sk2 / kf.abs();
        atan_over_x(g / a) / (a * a)
    } / (kf * kf);
    Ok((eq.coefficient * kf * kf * j / 2.0).abs())
}

/// One located eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenSample {
    pub r: f64,
    pub lambda: Complex64,
    /// `|F(λ)|` at the returned root.
    pub residual: f64,
}

/// A discrete eigenvalue followed along a decreasing R-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPath {
    pub harmonic: i32,
    pub samples: Vec<EigenSample>,
    /// Where the pair meets on the imaginary axis, if the grid crosses it.
    pub critical_r: Option<f64>,
}

fn sample(eq: &CharacteristicEquation, lambda: Complex64) -> EigenSample {
    let residual = eq.residual(lambda).map(|f| f.norm()).unwrap_or(f64::INFINITY);
    EigenSample {
        r: eq.penalty,
        lambda,
        residual,
    }
}

fn pair_seeds(eq: &CharacteristicEquation) -> [Complex64; 2] {
    let kf = eq.k as f64;
    let re = eq.diffusion * kf * kf * (1.0 - SEED_INSET);
    [Complex64::new(re, -kf), Complex64::new(-re, -kf)]
}

fn solve_pair_from_seeds(eq: &CharacteristicEquation) -> Option<[Complex64; 2]> {
    let [s0, s1] = pair_seeds(eq);
    let a = eq.newton(s0)?;
    let b = eq.newton(s1)?;
    distinct(a, b).then_some([a, b])
}

fn distinct(a: Complex64, b: Complex64) -> bool {
    (a - b).norm() > 1e-9 * (1.0 + a.norm())
}

/// Continues the pair from `prev` to the penalty of `eq`. When plain
/// continuation fails or merges the pair, the previous offset from the
/// pair's midpoint is turned by 90° and used as a seed, which carries the
/// paths through a collision.
fn continue_pair(eq: &CharacteristicEquation, prev: [Complex64; 2]) -> Option<[Complex64; 2]> {
    let direct = (|| {
        let a = eq.newton(prev[0])?;
        let b = eq.newton(prev[1])?;
        distinct(a, b).then_some([a, b])
    })();
    if direct.is_some() {
        return direct;
    }
    let c = (prev[0] + prev[1]) * 0.5;
    let u = (prev[0] - c) * Complex64::new(0.0, 1.0);
    let a = eq.newton(c + u)?;
    let b = eq.newton(c - u)?;
    distinct(a, b).then_some([a, b])
}

fn max_abs_re(pair: &[Complex64; 2]) -> f64 {
    pair[0].re.abs().max(pair[1].re.abs())
}

/// Locates the discrete pair of harmonic `k` along `r_grid` (strictly
/// decreasing). The first penalty is solved from the seeds `±σ²k²/2 − ik`
/// and every later one by continuation.
pub fn discrete_eigenpath(
    k: i32,
    r_grid: &[f64],
    params: &ModelParams,
    cost: &CostSpec,
) -> Result<[EigenPath; 2]> {
    let first = *r_grid.first().ok_or(Error::EmptyGrid)?;
    if r_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter {
            name: "R_grid",
            reason: "must be strictly decreasing",
        });
    }
    let base = CharacteristicEquation::new(k, first, params, cost)?;
    let mut pair = solve_pair_from_seeds(&base).ok_or(Error::PathLost {
        r: first,
        last_r: None,
    })?;
    let mut paths = [0, 1].map(|j| EigenPath {
        harmonic: k,
        samples: alloc::vec![sample(&base, pair[j])],
        critical_r: None,
    });
    let mut critical = None;
    for w in r_grid.windows(2) {
        let (r_prev, r) = (w[0], w[1]);
        let eq = base.with_penalty(r);
        let next = continue_pair(&eq, pair).ok_or(Error::PathLost {
            r,
            last_r: Some(r_prev),
        })?;
        if critical.is_none()
            && max_abs_re(&pair) > COLLISION_TOLERANCE
            && max_abs_re(&next) <= COLLISION_TOLERANCE
        {
            critical = Some(refine_collision(&base, r_prev, pair[0], r)?);
        }
        pair = next;
        for j in 0..2 {
            paths[j].samples.push(sample(&eq, pair[j]));
        }
    }
    for p in paths.iter_mut() {
        p.critical_r = critical;
    }
    Ok(paths)
}

// Roots with |Re λ| at or below this are treated as having met on the axis
// while bisecting. Near the double root Newton resolves Re λ to ~1e-9.
const BISECTION_CLASSIFY: f64 = 1e-8;

/// Bisects `[r_lo, r_hi]` for the collision penalty. `lambda_hi` is a root
/// at `r_hi` off the imaginary axis; a penalty is "above" the collision when
/// Newton started there finds such a root.
fn refine_collision(
    base: &CharacteristicEquation,
    mut r_hi: f64,
    mut lambda_hi: Complex64,
    mut r_lo: f64,
) -> Result<f64> {
    for _ in 0..200 {
        if r_hi - r_lo <= 1e-4 * r_hi && lambda_hi.re.abs() < COLLISION_TOLERANCE {
            break;
        }
        let mid = 0.5 * (r_hi + r_lo);
        if mid <= r_lo || mid >= r_hi {
            break;
        }
        match base.with_penalty(mid).newton(lambda_hi) {
            Some(z) if z.re.abs() > BISECTION_CLASSIFY => {
                r_hi = mid;
                lambda_hi = z;
            }
            _ => r_lo = mid,
        }
    }
    if lambda_hi.re.abs() >= COLLISION_TOLERANCE {
        return Err(Error::NoCollision {
            r_min: r_lo,
            r_max: r_hi,
        });
    }
    Ok(0.5 * (r_hi + r_lo))
}

/// Largest penalty (up to `10 ×` [`collision_scale`]) at which the seeded
/// pair exists, together with the pair.
///
/// Scans down by [`GRID_RATIO`]; when the scan starts above the largest
/// penalty admitting discrete eigenvalues, that penalty is refined by
/// bisection so the pair starts next to the continuous spectrum.
pub fn acquire_pair(
    k: i32,
    params: &ModelParams,
    cost: &CostSpec,
) -> Result<(f64, [Complex64; 2])> {
    let scale = collision_scale(k, params, cost)?;
    let top = 10.0 * scale;
    let floor = 1e-3 * scale;
    let base = CharacteristicEquation::new(k, top, params, cost)?;
    let try_at = |r: f64| solve_pair_from_seeds(&base.with_penalty(r));

    let mut found = None;
    let mut failed_above = None;
    let mut r = top;
    while r > scale {
        if let Some(pair) = try_at(r) {
            found = Some((r, pair));
            break;
        }
        failed_above = Some(r);
        r *= GRID_RATIO;
    }
    if found.is_none() {
        // For symmetric g the pair lives between the collision scale and a
        // maximal penalty that can sit within one coarse step of it.
        let hi = failed_above.unwrap_or(top);
        for j in 1..=FINE_SCAN {
            let r = hi * (scale / hi).powf(j as f64 / FINE_SCAN as f64);
            if let Some(pair) = try_at(r) {
                found = Some((r, pair));
                break;
            }
            failed_above = Some(r);
        }
    }
    if found.is_none() {
        r = scale * GRID_RATIO;
        while r > floor {
            if let Some(pair) = try_at(r) {
                found = Some((r, pair));
                break;
            }
            failed_above = Some(r);
            r *= GRID_RATIO;
        }
    }
    let (mut r_ok, mut pair) = found.ok_or(Error::PathLost { r, last_r: None })?;
    if let Some(mut r_bad) = failed_above {
        for _ in 0..16 {
            let mid = 0.5 * (r_ok + r_bad);
            match try_at(mid) {
                Some(p) => {
                    r_ok = mid;
                    pair = p;
                }
                None => r_bad = mid,
            }
        }
    }
    Ok((r_ok, pair))
}

/// Default continuation grid: from [`acquire_pair`]'s start down to a
/// quarter of the collision scale, ratio [`GRID_RATIO`].
pub fn default_r_grid(k: i32, params: &ModelParams, cost: &CostSpec) -> Result<Vec<f64>> {
    let (start, _) = acquire_pair(k, params, cost)?;
    let stop = 0.25 * collision_scale(k, params, cost)?;
    Ok(geometric_grid(start, stop))
}

/// `start, start·0.98, …` while above `stop`.
pub fn geometric_grid(start: f64, stop: f64) -> Vec<f64> {
    let mut grid = Vec::new();
    let mut r = start;
    while r > stop {
        grid.push(r);
        r *= GRID_RATIO;
    }
    grid
}

/// Numerically located penalty where the discrete pair of harmonic `k`
/// reaches the imaginary axis.
pub fn critical_r_numeric(gamma: f64, sigma: f64, k: i32, cost: &CostSpec) -> Result<f64> {
    let params = ModelParams {
        sigma,
        gamma,
        ..ModelParams::default()
    };
    let (start, mut pair) = acquire_pair(k, &params, cost)?;
    let base = CharacteristicEquation::new(k, start, &params, cost)?;
    let floor = 1e-3 * collision_scale(k, &params, cost)?;
    let mut r = start;
    while r > floor {
        let next_r = r * GRID_RATIO;
        let eq = base.with_penalty(next_r);
        match eq.newton(pair[0]).filter(|z| z.re.abs() > BISECTION_CLASSIFY) {
            Some(z) => {
                pair = [z, Complex64::new(-z.re, z.im)];
                r = next_r;
            }
            _ => return refine_collision(&base, r, pair[0], next_r),
        }
    }
    Err(Error::NoCollision {
        r_min: floor,
        r_max: start,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    IncoherenceStable,
    Marginal,
    Synchrony,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::IncoherenceStable => "incoherence-stable",
            Verdict::Marginal => "marginal",
            Verdict::Synchrony => "synchrony",
        }
    }
}

/// Linear stability of incoherence at one penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub r: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub critical_r: f64,
    pub verdict: Verdict,
    /// Largest real part of the located first-harmonic pair; `None` when
    /// `R` lies above the range where discrete eigenvalues exist.
    pub max_real_part: Option<f64>,
    pub norm_history: Option<NormHistory>,
}

/// Relative band around `R_c` reported as marginal.
pub const MARGINAL_BAND: f64 = 1e-3;

pub fn stability_report(penalty: f64, params: &ModelParams, cost: &CostSpec) -> Result<StabilityReport> {
    let critical_r = critical_r_numeric(params.gamma, params.sigma, 1, cost)?;
    let verdict = if (penalty - critical_r).abs() <= MARGINAL_BAND * critical_r {
        Verdict::Marginal
    } else if penalty > critical_r {
        Verdict::IncoherenceStable
    } else {
        Verdict::Synchrony
    };
    let (start, _) = acquire_pair(1, params, cost)?;
    let max_real_part = if penalty > start {
        None
    } else {
        let mut grid = geometric_grid(start, penalty);
        grid.push(penalty);
        let paths = discrete_eigenpath(1, &grid, params, cost)?;
        paths
            .iter()
            .map(|p| p.samples.last().map(|s| s.lambda.re).unwrap_or(f64::NEG_INFINITY))
            .reduce(f64::max)
    };
    Ok(StabilityReport {
        r: penalty,
        gamma: params.gamma,
        sigma: params.sigma,
        critical_r,
        verdict,
        max_real_part,
        norm_history: None,
    })
}
