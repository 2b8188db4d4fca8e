//! Brute-force references used to cross-check the fast paths.
//!
//! * [`KsGridFilter`]: the Kushner–Stratonovich equation for a noisy phase
//!   oscillator on a uniform periodic grid, in a frame rotating at `ω₀`.
//! * [`poisson_gain_grid`]: the exact filter gain `−(p K)' = (h − ĥ) p`
//!   by two periodic antiderivatives.
//! * [`adaptive_characteristic_integral`]: the characteristic integral by
//!   globally adaptive Gauss–Kronrod (7, 15) quadrature.

use alloc::vec::Vec;
use num_complex::Complex64;
use num_traits::Float;

use crate::fpf::{synthesize_observations, ParticleCloud, FilterConfig, ObservationFn};
use crate::model::{wrap, CostSpec, ModelParams};
use crate::rng::{RandomStream, StreamFamily};
use crate::{Error, Result, TAU};

/// Density samples on `M` equally spaced points `origin + mΔθ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub values: Vec<f64>,
    pub origin: f64,
}

impl GridDensity {
    pub fn uniform(m: usize) -> Self {
        Self {
            values: alloc::vec![1.0 / TAU; m],
            origin: 0.0,
        }
    }

    /// Samples `f` on the grid and normalizes.
    pub fn from_fn(m: usize, origin: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::EmptyGrid);
        }
        let dtheta = TAU / m as f64;
        let values = (0..m).map(|i| f(origin + i as f64 * dtheta)).collect();
        let mut d = Self { values, origin };
        d.normalize();
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dtheta(&self) -> f64 {
        TAU / self.values.len() as f64
    }

    pub fn theta(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.dtheta()
    }

    /// `∫ p dθ` by the periodic trapezoidal rule.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dtheta()
    }

    pub fn normalize(&mut self) {
        let m = self.mass();
        self.values.iter_mut().for_each(|v| *v /= m);
    }

    /// Probability of each of `bins` equal arcs starting at `bin_origin`;
    /// grid point `i` carries mass `p_i Δθ` into the arc containing it.
    pub fn bin_masses(&self, bins: usize, bin_origin: f64) -> Vec<f64> {
        let mut out = alloc::vec![0.0; bins];
        let width = TAU / bins as f64;
        let dtheta = self.dtheta();
        for (i, &v) in self.values.iter().enumerate() {
            let b = ((wrap(self.theta(i) - bin_origin) / width) as usize).min(bins - 1);
            out[b] += v * dtheta;
        }
        out
    }

    /// Stratified draw of `n` points: `u_i = (i + U_i)/n` pushed through the
    /// inverse CDF of the piecewise-constant density (grid point `i` owns the
    /// cell of width `Δθ` centred on it).
    pub fn stratified_sample(&self, n: usize, rng: &mut RandomStream) -> Vec<f64> {
        let dtheta = self.dtheta();
        let total: f64 = self.values.iter().sum();
        let mut cdf = Vec::with_capacity(self.len() + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        for &v in &self.values {
            acc += v / total;
            cdf.push(acc);
        }
        let start = self.origin - 0.5 * dtheta;
        let mut cell = 0;
        (0..n)
            .map(|i| {
                let u = ((i as f64 + rng.uniform()) / n as f64).min(1.0);
                while cell + 1 < self.len() && cdf[cell + 1] < u {
                    cell += 1;
                }
                let width = cdf[cell + 1] - cdf[cell];
                let frac = if width > 0.0 { (u - cdf[cell]) / width } else { 0.5 };
                wrap(start + (cell as f64 + frac.clamp(0.0, 1.0)) * dtheta)
            })
            .collect()
    }
}

/// Probability masses of particles on `bins` equal arcs starting at
/// `bin_origin`.
pub fn particle_bin_masses(phases: &[f64], bins: usize, bin_origin: f64) -> Vec<f64> {
    let mut out = alloc::vec![0.0; bins];
    let width = TAU / bins as f64;
    let w = 1.0 / phases.len() as f64;
    for &t in phases {
        let b = ((wrap(t - bin_origin) / width) as usize).min(bins - 1);
        out[b] += w;
    }
    out
}

/// `½ Σ |p_i − q_i|` between two probability vectors.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            actual: q.len(),
        });
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Largest grid size admitted by the explicit diffusion step.
pub fn max_grid_points(sigma: f64, dt: f64) -> usize {
    (TAU / (2.0 * sigma * sigma * dt).sqrt()).floor() as usize
}

/// Grid Kushner–Stratonovich filter for `dθ = ω₀ dt + σ dB`,
/// `dZ = h(θ) dt + dW`.
///
/// The density is stored in the co-rotating coordinate `φ = θ − ω₀t` on the
/// cell centres `φ_m = (m + ½)Δθ`, which removes the transport term. A step
/// multiplies by `1 + (h − ĥ)(dZ − ĥ dt)` (clipped at zero and
/// renormalized) and then applies one explicit central-difference diffusion
/// step.
#[derive(Debug, Clone)]
pub struct KsGridFilter {
    values: Vec<f64>,
    scratch: Vec<f64>,
    omega0: f64,
    dt: f64,
    diffusion_number: f64,
    h: ObservationFn,
    time: f64,
}

impl KsGridFilter {
    /// Starts from the uniform density.
    pub fn new(m: usize, config: &FilterConfig) -> Result<Self> {
        config.validate()?;
        if m < 3 {
            return Err(Error::EmptyGrid);
        }
        let dtheta = TAU / m as f64;
        let ratio = config.sigma * config.sigma * config.dt / (dtheta * dtheta);
        if ratio > 0.5 {
            return Err(Error::CflViolation {
                ratio,
                max_grid: max_grid_points(config.sigma, config.dt),
            });
        }
        Ok(Self {
            values: alloc::vec![1.0 / TAU; m],
            scratch: alloc::vec![0.0; m],
            omega0: config.omega0,
            dt: config.dt,
            diffusion_number: 0.5 * ratio,
            h: config.h,
            time: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    fn dtheta(&self) -> f64 {
        TAU / self.values.len() as f64
    }

    /// Density in the rotating frame (`origin = Δθ/2`).
    pub fn rotating_density(&self) -> GridDensity {
        GridDensity {
            values: self.values.clone(),
            origin: 0.5 * self.dtheta(),
        }
    }

    /// Density in the original coordinate.
    pub fn density(&self) -> GridDensity {
        GridDensity {
            values: self.values.clone(),
            origin: wrap(0.5 * self.dtheta() + self.omega0 * self.time),
        }
    }

    /// Observation update with increment `dz`, then diffusion.
    pub fn step(&mut self, dz: f64) {
        let m = self.values.len();
        let dtheta = self.dtheta();
        let shift = 0.5 * dtheta + self.omega0 * self.time;
        for (i, s) in self.scratch.iter_mut().enumerate() {
            *s = self.h.eval(shift + i as f64 * dtheta);
        }
        let h_hat = self.values.iter().zip(&self.scratch).map(|(p, h)| p * h).sum::<f64>() * dtheta;
        let innovation = dz - h_hat * self.dt;
        for (p, &h) in self.values.iter_mut().zip(&self.scratch) {
            *p = (*p * (1.0 + (h - h_hat) * innovation)).max(0.0);
        }
        renormalize(&mut self.values, dtheta);

        let d = self.diffusion_number;
        if d > 0.0 {
            for i in 0..m {
                let left = self.values[(i + m - 1) % m];
                let right = self.values[(i + 1) % m];
                self.scratch[i] = self.values[i] + d * (left - 2.0 * self.values[i] + right);
            }
            core::mem::swap(&mut self.values, &mut self.scratch);
            renormalize(&mut self.values, dtheta);
        }
        self.time += self.dt;
    }

    /// Diffusion step alone; returns the mass afterwards without
    /// renormalizing.
    pub fn diffuse_unnormalized(&mut self) -> f64 {
        let m = self.values.len();
        let d = self.diffusion_number;
        for i in 0..m {
            let left = self.values[(i + m - 1) % m];
            let right = self.values[(i + 1) % m];
            self.scratch[i] = self.values[i] + d * (left - 2.0 * self.values[i] + right);
        }
        core::mem::swap(&mut self.values, &mut self.scratch);
        self.values.iter().sum::<f64>() * self.dtheta()
    }
}

fn renormalize(values: &mut [f64], dtheta: f64) {
    let mass = values.iter().sum::<f64>() * dtheta;
    values.iter_mut().for_each(|v| *v /= mass);
}

/// Runs the grid filter over `increments`, keeping the density (in the
/// original coordinate) every `stride` steps, starting with `t = 0`.
pub fn ks_grid_filter(
    increments: &[f64],
    config: &FilterConfig,
    m: usize,
    stride: usize,
) -> Result<Vec<(f64, GridDensity)>> {
    let stride = stride.max(1);
    let mut filter = KsGridFilter::new(m, config)?;
    let mut out = alloc::vec![(0.0, filter.density())];
    for (k, &dz) in increments.iter().enumerate() {
        filter.step(dz);
        if (k + 1) % stride == 0 {
            out.push((filter.time(), filter.density()));
        }
    }
    Ok(out)
}

/// Smallest density value accepted by [`poisson_gain_grid`].
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Exact gain on the grid of a density.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonGain {
    pub theta: Vec<f64>,
    /// `K = φ'`.
    pub gain: Vec<f64>,
    /// Zero-mean potential `φ`.
    pub potential: Vec<f64>,
    pub h_hat: f64,
}

impl PoissonGain {
    /// `(κ₁, κ₂)` with `K ≈ −κ₁ sin θ + κ₂ cos θ` (Fourier coefficients).
    pub fn first_harmonic(&self) -> (f64, f64) {
        let dtheta = TAU / self.gain.len() as f64;
        let (mut s, mut c) = (0.0, 0.0);
        for (&t, &k) in self.theta.iter().zip(&self.gain) {
            s += k * t.sin();
            c += k * t.cos();
        }
        let scale = dtheta / core::f64::consts::PI;
        (-s * scale, c * scale)
    }
}

/// Fourth-order periodic cumulative integral, starting at 0.
fn periodic_antiderivative(f: &[f64], dtheta: f64) -> Vec<f64> {
    let m = f.len();
    let at = |i: isize| f[i.rem_euclid(m as isize) as usize];
    let mut out = Vec::with_capacity(m);
    let mut acc = 0.0;
    out.push(0.0);
    for i in 0..m as isize - 1 {
        acc += dtheta / 24.0 * (-at(i - 1) + 13.0 * at(i) + 13.0 * at(i + 1) - at(i + 2));
        out.push(acc);
    }
    out
}

/// Solves `−(p φ')' = (h − ĥ) p` on the circle for a strictly positive grid
/// density.
///
/// With `F` the antiderivative of `(h − ĥ)p`, `p φ' = c − F`, and `c` is fixed
/// by periodicity of `φ`: `c = ∫F/p / ∫1/p`.
pub fn poisson_gain_grid(density: &GridDensity, h: &ObservationFn) -> Result<PoissonGain> {
    let m = density.len();
    if m < 4 {
        return Err(Error::EmptyGrid);
    }
    if let Some((index, &value)) = density
        .values
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v > DENSITY_FLOOR))
    {
        return Err(Error::UnsupportedDensity { index, value });
    }
    let dtheta = density.dtheta();
    let mass = density.mass();
    let p: Vec<f64> = density.values.iter().map(|v| v / mass).collect();
    let theta: Vec<f64> = (0..m).map(|i| density.theta(i)).collect();
    let hv: Vec<f64> = theta.iter().map(|&t| h.eval(t)).collect();
    let h_hat = p.iter().zip(&hv).map(|(a, b)| a * b).sum::<f64>() * dtheta;
    let f: Vec<f64> = p.iter().zip(&hv).map(|(pi, hi)| (hi - h_hat) * pi).collect();
    let big_f = periodic_antiderivative(&f, dtheta);
    let (num, den) = big_f
        .iter()
        .zip(&p)
        .fold((0.0, 0.0), |(a, b), (fi, pi)| (a + fi / pi, b + 1.0 / pi));
    let c = num / den;
    let gain: Vec<f64> = big_f.iter().zip(&p).map(|(fi, pi)| (c - fi) / pi).collect();
    let mut potential = periodic_antiderivative(&gain, dtheta);
    let mean = potential.iter().sum::<f64>() / m as f64;
    potential.iter_mut().for_each(|v| *v -= mean);
    Ok(PoissonGain {
        theta,
        gain,
        potential,
        h_hat,
    })
}

/// Largest grid residual of `−(pK)' − (h − ĥ)p` with a fourth-order central
/// difference.
pub fn poisson_residual(density: &GridDensity, h: &ObservationFn, solution: &PoissonGain) -> f64 {
    let m = density.len();
    let dtheta = density.dtheta();
    let mass = density.mass();
    let flux: Vec<f64> = density
        .values
        .iter()
        .zip(&solution.gain)
        .map(|(p, k)| p / mass * k)
        .collect();
    let at = |i: isize| flux[i.rem_euclid(m as isize) as usize];
    (0..m as isize)
        .map(|i| {
            let d = (-at(i + 2) + 8.0 * at(i + 1) - 8.0 * at(i - 1) + at(i - 2)) / (12.0 * dtheta);
            let rhs = (h.eval(solution.theta[i as usize]) - solution.h_hat) * density.values[i as usize] / mass;
            (-d - rhs).abs()
        })
        .fold(0.0, f64::max)
}

/// Absolute tolerance of [`adaptive_characteristic_integral`], relative to
/// `max(1, |I|)`.
pub const ADAPTIVE_TOLERANCE: f64 = 1e-12;
/// Closest approach to the continuous spectrum the adaptive oracle accepts.
pub const ADAPTIVE_POLE_DISTANCE: f64 = 1e-6;
const MAX_SUBINTERVALS: usize = 20_000;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Kronrod estimate and `|Kronrod − Gauss|` on `[a, b]`.
fn gk15(f: &impl Fn(f64) -> Complex64, a: f64, b: f64) -> (Complex64, f64) {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let centre = f(mid);
    let mut kronrod = centre * WGK[7];
    let mut gauss = centre * WG[3];
    for j in 0..7 {
        let x = half * XGK[j];
        let pair = f(mid - x) + f(mid + x);
        kronrod += pair * WGK[j];
        if j % 2 == 1 {
            gauss += pair * WG[j / 2];
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).norm())
}

/// Globally adaptive G7K15 integral of a complex function on `[a, b]`.
pub fn adaptive_gk15(f: impl Fn(f64) -> Complex64, a: f64, b: f64, tol: f64) -> Result<Complex64> {
    let mut intervals = alloc::vec![{
        let (v, e) = gk15(&f, a, b);
        (a, b, v, e)
    }];
    loop {
        let total: Complex64 = intervals.iter().map(|iv| iv.2).sum();
        let err: f64 = intervals.iter().map(|iv| iv.3).sum();
        if err <= tol * total.norm().max(1.0) {
            return Ok(total);
        }
        if intervals.len() >= MAX_SUBINTERVALS {
            return Err(Error::QuadratureFailed { estimate: err });
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, iv)| if iv.3 > acc.1 { (i, iv.3) } else { acc });
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            return Err(Error::QuadratureFailed { estimate: err });
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

/// Characteristic residual
/// `C_|k| k²/(2R) ∫ g(ω) dω / ((λ − sk² + ikω)(λ + sk² + ikω)) − 1`,
/// `s = σ²/2`, `g` uniform on `[1 − γ, 1 + γ]`, by adaptive quadrature.
pub fn adaptive_characteristic_integral(
    lambda: Complex64,
    penalty: f64,
    k: i32,
    params: &ModelParams,
    cost: &CostSpec,
) -> Result<Complex64> {
    if k == 0 {
        return Err(Error::ZeroHarmonic);
    }
    let c = cost.coefficient(k.unsigned_abs() as usize);
    if c == 0.0 {
        return Err(Error::EmptyDiscreteSpectrum(k.unsigned_abs()));
    }
    if !(penalty > 0.0 && penalty.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "R",
            reason: "must be positive and finite",
        });
    }
    let kf = k as f64;
    let sk2 = 0.5 * params.sigma * params.sigma * kf * kf;
    let gamma = params.gamma;
    // Distance to {±sk² − ikω : |ω − 1| ≤ γ}.
    let (lo, hi) = (1.0 - gamma, 1.0 + gamma);
    let omega_star = (-lambda.im / kf).clamp(lo, hi);
    let distance = [sk2, -sk2]
        .iter()
        .map(|&re| (lambda - Complex64::new(re, -kf * omega_star)).norm())
        .fold(f64::INFINITY, f64::min);
    if distance < ADAPTIVE_POLE_DISTANCE {
        return Err(Error::PoleProximity { distance });
    }
    let integrand = |omega: f64| {
        let ikw = Complex64::new(0.0, kf * omega);
        ((lambda - sk2 + ikw) * (lambda + sk2 + ikw)).inv()
    };
    let integral = if gamma == 0.0 {
        integrand(1.0)
    } else {
        adaptive_gk15(|w| integrand(w) / (2.0 * gamma), lo, hi, ADAPTIVE_TOLERANCE)?
    };
    Ok(integral * (c * kf * kf / (2.0 * penalty)) - 1.0)
}

/// Matched filter against the grid oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCompareConfig {
    pub filter: FilterConfig,
    pub horizon: f64,
    pub seed: u64,
    pub grid_points: usize,
    pub bins: usize,
    /// Steps between TV evaluations.
    pub sample_stride: usize,
}

impl Default for OracleCompareConfig {
    fn default() -> Self {
        Self {
            filter: FilterConfig::matched(0.1),
            horizon: 100.0,
            seed: 0,
            grid_points: 384,
            bins: 64,
            sample_stride: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub t: Vec<f64>,
    pub tv: Vec<f64>,
    /// Time average of `tv`.
    pub mean_tv: f64,
    /// Final particle and oracle bin masses (co-rotating frame).
    pub final_particles: Vec<f64>,
    pub final_oracle: Vec<f64>,
}

/// Runs the particle filter and the grid oracle on the same observation
/// path from a uniform prior and records the TV distance between the
/// particle histogram and the binned oracle density in the co-rotating
/// frame.
pub fn compare_with_oracle(cfg: &OracleCompareConfig) -> Result<OracleComparison> {
    let fc = &cfg.filter;
    if cfg.bins == 0 {
        return Err(Error::EmptyGrid);
    }
    let path = synthesize_observations(fc, cfg.horizon, cfg.seed)?;
    let mut oracle = KsGridFilter::new(cfg.grid_points, fc)?;
    let mut cloud = ParticleCloud::uniform(fc, cfg.seed);
    let mut noise = RandomStream::family(cfg.seed, StreamFamily::Noise, fc.n);
    let stride = cfg.sample_stride.max(1);
    let mut t = Vec::new();
    let mut tv = Vec::new();
    let mut sample = |time: f64, cloud: &ParticleCloud, oracle: &KsGridFilter| -> Result<(Vec<f64>, Vec<f64>)> {
        let particles = particle_bin_masses(cloud.phases(), cfg.bins, fc.omega0 * time);
        let grid = oracle.rotating_density().bin_masses(cfg.bins, 0.0);
        t.push(time);
        tv.push(tv_distance(&particles, &grid)?);
        Ok((particles, grid))
    };
    let mut last = sample(0.0, &cloud, &oracle)?;
    for (k, &dz) in path.increments.iter().enumerate() {
        crate::fpf::fpf_step(&mut cloud, dz, fc, &mut noise)?;
        oracle.step(dz);
        if (k + 1) % stride == 0 {
            last = sample((k + 1) as f64 * fc.dt, &cloud, &oracle)?;
        }
    }
    let mean_tv = tv.iter().sum::<f64>() / tv.len() as f64;
    Ok(OracleComparison {
        t,
        tv,
        mean_tv,
        final_particles: last.0,
        final_oracle: last.1,
    })
}
