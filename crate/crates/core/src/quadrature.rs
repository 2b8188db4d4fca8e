//! Gauss–Legendre rules and the ω-grid used for integrals against the
//! frequency density `g`.

use alloc::vec::Vec;
use num_traits::Float;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
///
/// Nodes come from Newton iteration on the three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let mut nodes = alloc::vec![0.0; n];
    let mut weights = alloc::vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Quadrature for `∫_Ω f(ω) g(ω) dω` with `g` uniform on `Ω = [1-γ, 1+γ]`.
///
/// For `γ = 0` the density is a point mass and the rule has the single node
/// `ω = 1`. Weights always sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl OmegaGrid {
    pub fn uniform(gamma: f64, n: usize) -> Self {
        if gamma == 0.0 {
            return Self {
                nodes: alloc::vec![1.0],
                weights: alloc::vec![1.0],
            };
        }
        let (x, w) = gauss_legendre(n);
        Self {
            nodes: x.iter().map(|&xi| 1.0 + gamma * xi).collect(),
            weights: w.iter().map(|&wi| 0.5 * wi).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        // Exact up to degree 15.
        for deg in 0..16u32 {
            let q: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.powi(deg as i32)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-13, "deg {deg}: {q} vs {exact}");
        }
    }

    #[test]
    fn weights_sum_to_two_and_nodes_sorted() {
        for n in [1, 2, 5, 64, 101] {
            let (x, w) = gauss_legendre(n);
            let s: f64 = w.iter().sum();
            assert!((s - 2.0).abs() < 1e-12, "n={n} sum={s}");
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn omega_grid_is_a_probability_rule() {
        let g = OmegaGrid::uniform(0.1, 64);
        let total: f64 = g.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
        let mean: f64 = g.iter().map(|(w, p)| w * p).sum();
        assert!((mean - 1.0).abs() < 1e-13);
        let var: f64 = g.iter().map(|(w, p)| (w - 1.0).powi(2) * p).sum();
        assert!((var - 0.01 / 3.0).abs() < 1e-13);
        assert_eq!(OmegaGrid::uniform(0.0, 64).nodes, alloc::vec![1.0]);
    }
}
