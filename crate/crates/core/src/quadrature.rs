//! Gauss-Legendre rules and equispaced Lagrange bases on the unit interval.

use std::f64::consts::PI;

/// Gauss-Legendre rule with `n` points mapped to `[0, 1]`, nodes ascending.
/// Exact for polynomials of degree `2n - 1`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "a quadrature rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, refined by Newton on P_n
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
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
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // x is the i-th largest root on [-1, 1]
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        nodes[i] = 0.5 * (1.0 - x);
        weights[n - 1 - i] = 0.5 * w;
        weights[i] = 0.5 * w;
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

/// Lagrange polynomials of a given degree on the equispaced nodes
/// `0, 1/p, ..., 1`.
#[derive(Debug, Clone)]
pub struct LagrangeBasis1d {
    nodes: Vec<f64>,
}

impl LagrangeBasis1d {
    pub fn new(degree: usize) -> Self {
        assert!(degree >= 1);
        let nodes = (0..=degree).map(|i| i as f64 / degree as f64).collect();
        Self { nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn value(&self, i: usize, x: f64) -> f64 {
        let xi = self.nodes[i];
        self.nodes
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i)
            .map(|(_, &xk)| (x - xk) / (xi - xk))
            .product()
    }

    pub fn derivative(&self, i: usize, x: f64) -> f64 {
        let xi = self.nodes[i];
        let mut sum = 0.0;
        for (k, &xk) in self.nodes.iter().enumerate() {
            if k == i {
                continue;
            }
            let mut term = 1.0 / (xi - xk);
            for (l, &xl) in self.nodes.iter().enumerate() {
                if l != i && l != k {
                    term *= (x - xl) / (xi - xl);
                }
            }
            sum += term;
        }
        sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_integrates_monomials_exactly() {
        for n in 1..=8 {
            let (x, w) = gauss_legendre_unit(n);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(x.windows(2).all(|p| p[0] < p[1]));
            for deg in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = 1.0 / (deg as f64 + 1.0);
                assert!((q - exact).abs() < 1e-14, "n={n} deg={deg}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn lagrange_is_nodal_and_sums_to_one() {
        for p in 1..=4 {
            let b = LagrangeBasis1d::new(p);
            for (j, &xj) in b.nodes().iter().enumerate() {
                for i in 0..b.len() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((b.value(i, xj) - expect).abs() < 1e-14);
                }
            }
            for &x in &[0.13, 0.5, 0.77] {
                let s: f64 = (0..b.len()).map(|i| b.value(i, x)).sum();
                let ds: f64 = (0..b.len()).map(|i| b.derivative(i, x)).sum();
                assert!((s - 1.0).abs() < 1e-13);
                assert!(ds.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lagrange_derivative_matches_central_difference() {
        let b = LagrangeBasis1d::new(3);
        let h = 1e-6;
        for i in 0..4 {
            let x = 0.37;
            let fd = (b.value(i, x + h) - b.value(i, x - h)) / (2.0 * h);
            assert!((fd - b.derivative(i, x)).abs() < 1e-8);
        }
    }
}
