//! Gauss-Legendre rules on intervals and axis-aligned boxes.

use crate::geometry::Point;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
///
/// Nodes come from Newton iteration on the Legendre recurrence, so any
/// order is available; the results are accurate to a few ulps.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
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

/// Gauss rule mapped onto `[a, b]`.
pub fn gauss_interval(a: f64, b: f64, n: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.iter()
        .zip(&w)
        .map(|(&xi, &wi)| (mid + half * xi, half * wi))
        .collect()
}

/// Tensor Gauss rule on the box `[lo, hi]` over the first `dim` axes.
/// Axes with `lo[i] == hi[i]` beyond `dim` are carried through unchanged.
pub fn gauss_box(lo: &Point, hi: &Point, dim: usize, n: usize) -> Vec<(Point, f64)> {
    let mut out = vec![(*lo, 1.0)];
    for axis in 0..dim {
        let rule = gauss_interval(lo[axis], hi[axis], n);
        let mut next = Vec::with_capacity(out.len() * n);
        for (p, w) in &out {
            for &(x, wx) in &rule {
                let mut q = *p;
                q[axis] = x;
                next.push((q, w * wx));
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_integrate_polynomials_exactly() {
        for n in 1..=8 {
            let (x, w) = gauss_legendre(n);
            let sum_w: f64 = w.iter().sum();
            assert!((sum_w - 2.0).abs() < 1e-14);
            // degree 2n-1 is integrated exactly
            let deg = 2 * n - 1;
            let approx: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((approx - exact).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn interval_rule_maps_measure() {
        let r = gauss_interval(0.5, 2.0, 4);
        let s: f64 = r.iter().map(|(x, w)| w * x * x * x).sum();
        assert!((s - (2f64.powi(4) - 0.5f64.powi(4)) / 4.0).abs() < 1e-13);
    }

    #[test]
    fn box_rule_integrates_bilinear() {
        let q = gauss_box(&[0.0, 1.0, 0.0], &[2.0, 3.0, 0.0], 2, 2);
        let s: f64 = q.iter().map(|(p, w)| w * p[0] * p[1]).sum();
        assert!((s - 2.0 * 4.0).abs() < 1e-13);
    }
}
