//! Small quadrature and linear-algebra helpers shared by the operator code.

use crate::real::{lit, Real};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// End weights of the fourth-order Gregory rule; interior weights are 1.
pub const GREGORY_END: [f64; 3] = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];

/// Closed Newton-Cotes weights for short panels, unit spacing.
fn newton_cotes(count: usize) -> &'static [f64] {
    match count {
        1 => &[0.0],
        2 => &[0.5, 0.5],
        3 => &[1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0],
        4 => &[3.0 / 8.0, 9.0 / 8.0, 9.0 / 8.0, 3.0 / 8.0],
        5 => &[14.0 / 45.0, 64.0 / 45.0, 24.0 / 45.0, 64.0 / 45.0, 14.0 / 45.0],
        _ => unreachable!(),
    }
}

/// Weights for `count` equispaced samples with unit spacing.
pub fn gregory_weights<F: Real>(count: usize) -> Vec<F> {
    if count == 0 {
        return Vec::new();
    }
    if count < 6 {
        return newton_cotes(count).iter().map(|&w| lit(w)).collect();
    }
    let mut w = vec![F::one(); count];
    for k in 0..3 {
        w[k] = lit(GREGORY_END[k]);
        w[count - 1 - k] = lit(GREGORY_END[k]);
    }
    w
}

/// Integral of equispaced samples with spacing `h`.
pub fn gregory_sum<F: Real>(vals: &[F], h: F) -> F {
    let n = vals.len();
    if n < 6 {
        return if n == 0 {
            F::zero()
        } else {
            vals.iter().zip(newton_cotes(n)).map(|(&v, &w)| v * lit(w)).sum::<F>() * h
        };
    }
    let mut s: F = vals.iter().copied().sum();
    for k in 0..3 {
        let c: F = lit(GREGORY_END[k] - 1.0);
        s = s + c * (vals[k] + vals[n - 1 - k]);
    }
    s * h
}

/// Reverse cumulative integral: `out[j] = ∫ from node j to the last node`, spacing `h`.
/// Trapezoid increments with Gregory corrections at the fixed right end and the moving left end.
pub fn reverse_cumulative<F: Real>(vals: &[F], h: F) -> Vec<F> {
    let n = vals.len();
    let mut out = vec![F::zero(); n];
    if n < 2 {
        return out;
    }
    let half: F = lit(0.5);
    let mut trap = vec![F::zero(); n];
    for j in (0..n - 1).rev() {
        trap[j] = trap[j + 1] + half * (vals[j] + vals[j + 1]);
    }
    let c = [lit::<F>(-1.0 / 8.0), lit::<F>(1.0 / 6.0), lit::<F>(-1.0 / 24.0)];
    for j in 0..n {
        let len = n - 1 - j;
        out[j] = if len == 1 && n >= 4 {
            // cubic through the last four samples
            let (gx, gw) = gauss_legendre(2);
            let mut acc = F::zero();
            for (t, w) in gx.iter().zip(&gw) {
                let l = lagrange4::<F>(lit(1.5 + 0.5 * t));
                acc = acc + lit::<F>(0.5 * w) * (l[0] * vals[n - 4] + l[1] * vals[n - 3] + l[2] * vals[n - 2] + l[3] * vals[n - 1]);
            }
            acc * h
        } else if len >= 5 {
            // trapezoid plus endpoint corrections on both sides
            let left = c[0] * vals[j] + c[1] * vals[j + 1] + c[2] * vals[j + 2];
            let right = c[0] * vals[n - 1] + c[1] * vals[n - 2] + c[2] * vals[n - 3];
            (trap[j] + left + right) * h
        } else {
            gregory_sum(&vals[j..], h)
        };
    }
    out
}

/// Cubic Lagrange weights on nodes `-1, 0, 1, 2` at offset `t`.
#[inline(always)]
pub fn lagrange4<F: Real>(t: F) -> [F; 4] {
    let one = F::one();
    let two = one + one;
    let six: F = lit(6.0);
    let tp = t + one;
    let tm = t - one;
    let tmm = t - two;
    [
        -t * tm * tmm / six,
        tp * tm * tmm / two,
        -tp * t * tmm / two,
        tp * t * tm / six,
    ]
}

/// Dense Gaussian elimination with partial pivoting. Returns `None` for singular systems.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Ordinary least squares for `y ≈ a + b x`. Returns `(a, b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - b * mx, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gregory_is_exact_for_cubics() {
        for n in 3..20 {
            let h = 1.0 / (n - 1) as f64;
            let v: Vec<f64> = (0..n).map(|i| (i as f64 * h).powi(3)).collect();
            let s = gregory_sum(&v, h);
            assert!((s - 0.25).abs() < 1e-13, "n = {n}: {s}");
            let w: Vec<f64> = gregory_weights(n);
            let s2: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() * h;
            assert!((s - s2).abs() < 1e-14);
        }
    }

    #[test]
    fn reverse_cumulative_matches_direct() {
        let n = 40;
        let h = 0.05;
        let v: Vec<f64> = (0..n).map(|i| (i as f64 * h).powi(3) - 2.0 * i as f64 * h).collect();
        let c = reverse_cumulative(&v, h);
        let a = (n - 1) as f64 * h;
        for (j, cj) in c.iter().enumerate() {
            let x = j as f64 * h;
            let exact = (a.powi(4) - x.powi(4)) / 4.0 - (a * a - x * x);
            assert!((cj - exact).abs() < 1e-12, "{j}");
        }
    }

    #[test]
    fn lagrange_weights_reproduce_cubics() {
        for &t in &[0.0, 0.3, 0.77, 1.0] {
            let w = lagrange4(t);
            let p = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x * x;
            let v = w[0] * p(-1.0) + w[1] * p(0.0) + w[2] * p(1.0) + w[3] * p(2.0);
            assert!((v - p(t)).abs() < 1e-14);
        }
    }
}
