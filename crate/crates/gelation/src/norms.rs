//! Weighted space-time functionals, windowed fractional derivatives and tail fits.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::coagops::Profile;
use crate::error::{Error, Result};
use crate::model::{cutoff_eta, smoothstep, Field, LogGrid, Trajectory};
use crate::quadrature::linear_fit;
use crate::real::{to_f64, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailModel {
    OneTerm,
    /// Fixed exponents `-p0`, `-p1`; amplitudes fitted by linear least squares.
    TwoTerm { p0: f64, p1: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub amplitude: f64,
    pub exponent: f64,
    pub second_amplitude: Option<f64>,
    pub r_squared: f64,
}

/// Fits the far field of `f` on `[x_lo, x_hi]`.
pub fn tail_fit<F: Real>(f: &Field<F>, x_lo: f64, x_hi: f64, model: TailModel) -> Result<TailFit> {
    let g = &f.grid;
    if x_lo < to_f64(g.x_min()) * (1.0 - 1e-12) || x_hi > to_f64(g.x_max()) * (1.0 + 1e-12) || x_lo >= x_hi {
        return Err(Error::Domain(format!("fit window [{x_lo:e}, {x_hi:e}] outside the grid")));
    }
    let (x, v): (Vec<f64>, Vec<f64>) = g
        .nodes()
        .iter()
        .zip(&f.values)
        .map(|(a, b)| (to_f64(*a), to_f64(*b)))
        .filter(|(a, _)| *a >= x_lo * (1.0 - 1e-12) && *a <= x_hi * (1.0 + 1e-12))
        .unzip();
    if x.len() < 16 {
        return Err(Error::Underresolved(format!("fit window holds {} nodes, need 16", x.len())));
    }
    match model {
        TailModel::OneTerm => {
            if v.iter().any(|&t| t <= 0.0) {
                return Err(Error::Extraction("nonpositive samples in a log-log fit window".into()));
            }
            let lx: Vec<f64> = x.iter().map(|t| t.ln()).collect();
            let ly: Vec<f64> = v.iter().map(|t| t.ln()).collect();
            let (a, b) = linear_fit(&lx, &ly);
            let my = ly.iter().sum::<f64>() / ly.len() as f64;
            let ss_tot: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
            let ss_res: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - a - b * x).powi(2)).sum();
            let r2 = if ss_tot <= 1e-28 * ly.len() as f64 { 1.0 } else { 1.0 - ss_res / ss_tot };
            Ok(TailFit { amplitude: a.exp(), exponent: b, second_amplitude: None, r_squared: r2 })
        }
        TailModel::TwoTerm { p0, p1 } => {
            // g = x^{p0} f = c0 + c1 x^{p0 - p1}
            let gv: Vec<f64> = x.iter().zip(&v).map(|(x, v)| v * x.powf(p0)).collect();
            let bv: Vec<f64> = x.iter().map(|x| x.powf(p0 - p1)).collect();
            let n = x.len() as f64;
            let (sb, sbb) = (bv.iter().sum::<f64>(), bv.iter().map(|b| b * b).sum::<f64>());
            let (sg, sbg) = (gv.iter().sum::<f64>(), bv.iter().zip(&gv).map(|(b, g)| b * g).sum::<f64>());
            let det = n * sbb - sb * sb;
            if det.abs() < 1e-300 {
                return Err(Error::Extraction("degenerate two-term design".into()));
            }
            let c0 = (sbb * sg - sb * sbg) / det;
            let c1 = (n * sbg - sb * sg) / det;
            let ss_res: f64 = gv.iter().zip(&bv).map(|(g, b)| (g - c0 - c1 * b).powi(2)).sum();
            let ss: f64 = gv.iter().map(|g| g * g).sum();
            let r2 = if ss == 0.0 { 1.0 } else { 1.0 - ss_res / ss };
            Ok(TailFit { amplitude: c0, exponent: -p0, second_amplitude: Some(c1), r_squared: r2 })
        }
    }
}

/// `|k|^σ` applied spectrally to uniform samples with spacing `dx`.
pub fn frac_deriv(samples: &[f64], dx: f64, sigma: f64) -> Result<Vec<f64>> {
    if samples.len() < 64 {
        return Err(Error::Underresolved(format!("{} samples in a derivative window, need 64", samples.len())));
    }
    if !(0.0..2.0).contains(&sigma) {
        return Err(Error::param("sigma", format!("{sigma} outside [0, 2)")));
    }
    let n = (2 * samples.len()).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(n, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (m, c) in buf.iter_mut().enumerate() {
        let mm = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
        let k = 2.0 * std::f64::consts::PI * mm / (n as f64 * dx);
        let w = if sigma == 0.0 { 1.0 } else { k.abs().powf(sigma) };
        *c *= w / n as f64;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    Ok(buf[..samples.len()].iter().map(|c| c.re).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalKind {
    N2sigma,
    M2sigma,
    Ninf,
    Minf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    YqpSigma,
    Xqp,
    TripleQp,
    TripleSigma,
    ZFull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowValue {
    pub t0: Option<f64>,
    pub r: Option<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub kind: String,
    pub value: f64,
    /// `(t0, R)` of the window attaining the value, where meaningful.
    pub window: Option<(Option<f64>, f64)>,
    pub details: Vec<WindowValue>,
}

/// Samples per `R` used when resampling a window `(0, 4R)`.
const PER_R: usize = 256;

/// Trajectory in `f64` with a cached interpolant per time slice.
struct Sampler {
    times: Vec<f64>,
    grid: Arc<LogGrid<f64>>,
    slices: Vec<Vec<f64>>,
}

impl Sampler {
    fn new<F: Real>(traj: &Trajectory<F>) -> Result<Self> {
        let g = traj.grid();
        let nodes: Vec<f64> = g.nodes().iter().map(|&x| to_f64(x)).collect();
        let grid = Arc::new(LogGrid::from_nodes(&nodes)?);
        Ok(Sampler {
            times: traj.times.iter().map(|&t| to_f64(t)).collect(),
            grid,
            slices: traj.slices.iter().map(|s| s.values.iter().map(|&v| to_f64(v)).collect()).collect(),
        })
    }

    fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    fn at_time(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        if t <= self.times[0] || n == 1 {
            return self.slices[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.slices[n - 1].clone();
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        self.slices[k].iter().zip(&self.slices[k + 1]).map(|(a, b)| a + w * (b - a)).collect()
    }

    fn profile(&self, vals: &[f64]) -> Profile<f64> {
        Profile::new(self.grid.x_min().ln(), self.grid.log_step(), vals, 0.0, None)
    }

    fn check_window(&self, r: f64) -> Result<()> {
        let (a, b) = (self.grid.x_min(), self.grid.x_max());
        if r / 8.0 < a * (1.0 - 1e-12) || 4.0 * r > b * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("window R = {r:e} needs ({:e}, {:e}) inside the grid", r / 8.0, 4.0 * r)));
        }
        Ok(())
    }

    /// `η(x/R) f(x)` on `x = j R / PER_R`, `j = 0..4 PER_R`.
    fn window(&self, vals: &[f64], r: f64) -> Vec<f64> {
        let p = self.profile(vals);
        let dx = r / PER_R as f64;
        (0..=4 * PER_R)
            .map(|j| {
                let x = j as f64 * dx;
                let e = cutoff_eta(x / r).unwrap();
                if e == 0.0 {
                    0.0
                } else {
                    e * p.at(x)
                }
            })
            .collect()
    }

    /// Time nodes of `[t0, t1]` including the clipped endpoints.
    fn time_nodes(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut ts = vec![t0];
        ts.extend(self.times.iter().copied().filter(|&t| t > t0 && t < t1));
        if t1 > t0 {
            ts.push(t1);
        }
        ts
    }
}

fn trapezoid(ts: &[f64], vs: &[f64]) -> f64 {
    ts.windows(2).zip(vs.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

/// `‖D^σ f‖²_{L²(R/2,2R)}` from a window of samples.
fn window_l2_sq(w: &[f64], r: f64, sigma: f64) -> Result<f64> {
    let dx = r / PER_R as f64;
    let d = if sigma == 0.0 { w.to_vec() } else { frac_deriv(w, dx, sigma)? };
    let seg = &d[PER_R / 2..=2 * PER_R];
    let sq: Vec<f64> = seg.iter().map(|v| v * v).collect();
    Ok(crate::quadrature::gregory_sum(&sq, dx))
}

fn window_sup_sq(w: &[f64]) -> f64 {
    w[PER_R / 2..=2 * PER_R].iter().fold(0.0f64, |m, v| m.max(v.abs())).powi(2)
}

fn local_value(s: &Sampler, kind: LocalKind, t0: f64, r: f64, sigma: f64, lambda: f64) -> Result<f64> {
    s.check_window(r)?;
    let kappa = (lambda - 1.0) / 2.0;
    let tt = s.horizon();
    let (a, b) = match kind {
        LocalKind::N2sigma | LocalKind::Ninf => (t0, (t0 + r.powf(-kappa)).min(tt)),
        LocalKind::M2sigma | LocalKind::Minf => (0.0, tt),
    };
    let ts = s.time_nodes(a, b);
    let mut vals = Vec::with_capacity(ts.len());
    for &t in &ts {
        let w = s.window(&s.at_time(t), r);
        vals.push(match kind {
            LocalKind::N2sigma | LocalKind::M2sigma => window_l2_sq(&w, r, sigma)?,
            LocalKind::Ninf | LocalKind::Minf => window_sup_sq(&w),
        });
    }
    let integral = trapezoid(&ts, &vals);
    let pre = match kind {
        LocalKind::N2sigma => r.powf(kappa + 2.0 * sigma - 1.0),
        LocalKind::M2sigma => r.powf(2.0 * sigma - 1.0),
        LocalKind::Ninf => r.powf(kappa),
        LocalKind::Minf => 1.0,
    };
    Ok((pre * integral).max(0.0).sqrt())
}

/// One of the four local functionals on the window `(R/2, 2R)` starting at `t0`.
pub fn local_norm<F: Real>(
    traj: &Trajectory<F>,
    kind: LocalKind,
    t0: f64,
    r: f64,
    sigma: f64,
    lambda: f64,
) -> Result<NormReport> {
    if !(r > 0.0) {
        return Err(Error::param("R", "must be positive"));
    }
    let s = Sampler::new(traj)?;
    if t0 < 0.0 || t0 > s.horizon() {
        return Err(Error::param("t0", format!("{t0} outside [0, T]")));
    }
    let v = local_value(&s, kind, t0, r, sigma, lambda)?;
    Ok(NormReport {
        kind: format!("{kind:?}"),
        value: v,
        window: Some((Some(t0), r)),
        details: vec![WindowValue { t0: Some(t0), r: Some(r), value: v }],
    })
}

/// Dyadic `R` values whose windows fit in the grid.
fn r_ladder(g: &LogGrid<f64>) -> Vec<f64> {
    let (a, b) = (g.x_min(), g.x_max());
    (-60..60).map(|j| 2f64.powi(j)).filter(|&r| r / 8.0 >= a && 4.0 * r <= b).collect()
}

struct Sup {
    value: f64,
    at: Option<(Option<f64>, f64)>,
    details: Vec<WindowValue>,
}

impl Sup {
    fn new() -> Self {
        Sup { value: 0.0, at: None, details: Vec::new() }
    }
    fn push(&mut self, t0: Option<f64>, r: f64, v: f64) {
        self.details.push(WindowValue { t0, r: Some(r), value: v });
        if v > self.value || self.at.is_none() {
            self.value = self.value.max(v);
            self.at = Some((t0, r));
        }
    }
}

fn sup_small_r(s: &Sampler, kind: LocalKind, q: f64, sigma: f64, lambda: f64) -> Result<Sup> {
    let mut out = Sup::new();
    for r in r_ladder(&s.grid).into_iter().filter(|&r| r <= 1.0) {
        let v = r.powf(q) * local_value(s, kind, 0.0, r, sigma, lambda)?;
        out.push(None, r, v);
    }
    Ok(out)
}

fn t0_ladder(s: &Sampler) -> Vec<f64> {
    let n = s.times.len();
    if n == 1 {
        return vec![0.0];
    }
    s.times[..n - 1].to_vec()
}

fn sup_large_r(s: &Sampler, kind: LocalKind, p: f64, sigma: f64, lambda: f64) -> Result<Sup> {
    let mut out = Sup::new();
    for r in r_ladder(&s.grid).into_iter().filter(|&r| r >= 1.0) {
        for &t0 in &t0_ladder(s) {
            let v = r.powf(p) * local_value(s, kind, t0, r, sigma, lambda)?;
            out.push(Some(t0), r, v);
        }
    }
    Ok(out)
}

fn triple_pointwise(s: &Sampler, q: f64, p: f64) -> f64 {
    let x = s.grid.nodes();
    s.slices
        .iter()
        .map(|v| {
            let (mut a, mut b) = (0.0f64, 0.0f64);
            for (x, v) in x.iter().zip(v) {
                if *x <= 1.0 {
                    a = a.max(x.powf(q) * v.abs());
                } else {
                    b = b.max(x.powf(p) * v.abs());
                }
            }
            a + b
        })
        .fold(0.0, f64::max)
}

fn y_norm(s: &Sampler, q: f64, p: f64, sigma: f64, lambda: f64) -> Result<Sup> {
    let parts = [
        sup_small_r(s, LocalKind::M2sigma, q, 0.0, lambda)?,
        sup_small_r(s, LocalKind::M2sigma, q, sigma, lambda)?,
        sup_large_r(s, LocalKind::N2sigma, p, 0.0, lambda)?,
        sup_large_r(s, LocalKind::N2sigma, p, sigma, lambda)?,
    ];
    let mut out = Sup::new();
    for part in parts {
        out.value += part.value;
        out.details.extend(part.details);
        if out.at.is_none() {
            out.at = part.at;
        }
    }
    Ok(out)
}

fn x_norm(s: &Sampler, q: f64, p: f64, lambda: f64) -> Result<Sup> {
    let a = sup_small_r(s, LocalKind::Minf, q, 0.0, lambda)?;
    let b = sup_large_r(s, LocalKind::Ninf, p, 0.0, lambda)?;
    let mut out = Sup::new();
    out.value = a.value + b.value;
    out.at = b.at.or(a.at);
    out.details = a.details;
    out.details.extend(b.details);
    Ok(out)
}

/// `L²(0,T; H^σ(0,2))`, with the slice extended smoothly past `x = 2`.
fn l2_h_sigma(s: &Sampler, sigma: f64) -> Result<f64> {
    let n = 1024;
    let dx = 4.0 / n as f64;
    let i2 = n / 2;
    let xmin = s.grid.x_min();
    let mut vals = Vec::with_capacity(s.times.len());
    for v in &s.slices {
        let p = s.profile(v);
        let w: Vec<f64> = (0..=n)
            .map(|j| {
                let x = j as f64 * dx;
                if x < xmin {
                    0.0
                } else {
                    (1.0 - smoothstep((x - 2.0) / 2.0)) * p.at(x)
                }
            })
            .collect();
        let d = frac_deriv(&w, dx, sigma)?;
        let sq0: Vec<f64> = w[..=i2].iter().map(|v| v * v).collect();
        let sq1: Vec<f64> = d[..=i2].iter().map(|v| v * v).collect();
        vals.push(crate::quadrature::gregory_sum(&sq0, dx) + crate::quadrature::gregory_sum(&sq1, dx));
    }
    Ok(trapezoid(&s.times, &vals).max(0.0).sqrt())
}

/// Fourier-weighted seminorm over rescaled space-time windows.
fn z_seminorm(s: &Sampler, p: f64, sigma: f64, lambda: f64) -> Result<Sup> {
    let kappa = (lambda - 1.0) / 2.0;
    let tt = s.horizon();
    let nx = 512usize;
    let len = 4.5;
    let dx = len / nx as f64;
    let nfft = 2 * nx;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(nfft);
    let mut out = Sup::new();
    for r in r_ladder(&s.grid).into_iter().filter(|&r| r >= 1.0) {
        if 4.5 * r > s.grid.x_max() {
            continue;
        }
        let q = |k: f64| (1.0 + k.abs().powf(2.0 * sigma)) * (1.0 + k.abs().min(r));
        for &t0 in &t0_ladder(s) {
            let th_max = ((tt - t0) * r.powf(kappa)).min(1.0);
            let ths: Vec<f64> = s.time_nodes(t0, t0 + th_max * r.powf(-kappa)).iter().map(|t| (t - t0) * r.powf(kappa)).collect();
            let mut vals = Vec::with_capacity(ths.len());
            for &th in &ths {
                let prof = s.profile(&s.at_time(t0 + th * r.powf(-kappa)));
                let mut buf: Vec<Complex<f64>> = (0..nfft)
                    .map(|j| {
                        let xx = j as f64 * dx;
                        let e = if j < nx { cutoff_eta(xx).unwrap() } else { 0.0 };
                        Complex::new(if e == 0.0 { 0.0 } else { e * prof.at(r * xx) }, 0.0)
                    })
                    .collect();
                fft.process(&mut buf);
                let dk = 2.0 * std::f64::consts::PI / (nfft as f64 * dx);
                let norm = dx * dx / (2.0 * std::f64::consts::PI);
                let acc: f64 = buf
                    .iter()
                    .enumerate()
                    .map(|(m, c)| {
                        let mm = if m <= nfft / 2 { m as f64 } else { m as f64 - nfft as f64 };
                        c.norm_sqr() * norm * q(mm * dk) * dk
                    })
                    .sum();
                vals.push(acc);
            }
            let v = r.powf(p) * trapezoid(&ths, &vals).max(0.0).sqrt();
            out.push(Some(t0), r, v);
        }
    }
    Ok(out)
}

/// Global functionals, suprema taken over dyadic `R` and the trajectory's `t0` values.
pub fn space_norm<F: Real>(
    traj: &Trajectory<F>,
    kind: SpaceKind,
    q: f64,
    p: f64,
    sigma: f64,
    lambda: f64,
) -> Result<NormReport> {
    let s = Sampler::new(traj)?;
    let sup = match kind {
        SpaceKind::TripleQp => Sup { value: triple_pointwise(&s, q, p), at: None, details: Vec::new() },
        SpaceKind::Xqp => x_norm(&s, q, p, lambda)?,
        SpaceKind::YqpSigma => y_norm(&s, q, p, sigma, lambda)?,
        SpaceKind::TripleSigma => {
            let mut y = y_norm(&s, q, p, sigma, lambda)?;
            y.value += triple_pointwise(&s, q, p);
            y
        }
        SpaceKind::ZFull => {
            let mut z = z_seminorm(&s, p, sigma, lambda)?;
            let y = y_norm(&s, q, p, sigma, lambda)?;
            z.value += l2_h_sigma(&s, sigma)? + triple_pointwise(&s, q, p) + y.value;
            z.details.extend(y.details);
            z
        }
    };
    if !sup.value.is_finite() {
        return Err(Error::NonFinite { stage: "norm".into(), node: 0, x: f64::NAN });
    }
    Ok(NormReport { kind: format!("{kind:?}"), value: sup.value, window: sup.at, details: sup.details })
}

/// `W_R(ξ) = min{√|ξ|, √R}`
pub fn w_weight(xi: f64, r: f64) -> f64 {
    xi.abs().sqrt().min(r.sqrt())
}

/// Largest `C` with `|W_R(ξ) - W_R(η)| = C |ξ-η|/|η| W_R(η)` over the given pairs (`η ≠ 0`, `ξ ≠ η`).
pub fn w_weight_audit(r: f64, pairs: &[(f64, f64)]) -> f64 {
    pairs
        .iter()
        .filter(|(xi, eta)| *eta != 0.0 && xi != eta)
        .map(|&(xi, eta)| {
            let lhs = (w_weight(xi, r) - w_weight(eta, r)).abs();
            let rhs = (xi - eta).abs() / eta.abs() * w_weight(eta, r);
            lhs / rhs
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_fit_exact_models() {
        let g = Arc::new(LogGrid::new(1.0 / 64.0, 16384.0, 1024).unwrap());
        let f = Field::from_fn(g.clone(), |x: f64| 3.0 * x.powf(-2.25));
        let t = tail_fit(&f, 100.0, 10000.0, TailModel::OneTerm).unwrap();
        assert!((t.amplitude - 3.0).abs() < 1e-10 && (t.exponent + 2.25).abs() < 1e-10);
        let f = Field::from_fn(g, |x: f64| 3.0 * x.powf(-2.25) + x.powf(-2.5));
        let t = tail_fit(&f, 100.0, 10000.0, TailModel::TwoTerm { p0: 2.25, p1: 2.5 }).unwrap();
        assert!((t.amplitude - 3.0).abs() < 1e-8 && (t.second_amplitude.unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn frac_deriv_of_tone() {
        let n = 4096;
        let dx = 0.01;
        let k = 5.0;
        let s: Vec<f64> = (0..n)
            .map(|j| {
                let x = j as f64 * dx;
                let taper = (std::f64::consts::PI * j as f64 / (n - 1) as f64).sin().powi(2);
                taper * (k * x).sin()
            })
            .collect();
        for sigma in [0.5, 1.5] {
            let d = frac_deriv(&s, dx, sigma).unwrap();
            let num: f64 = d[n / 4..3 * n / 4].iter().map(|v| v * v).sum::<f64>().sqrt();
            let den: f64 = s[n / 4..3 * n / 4].iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((num / den / k.powf(sigma) - 1.0).abs() < 0.02);
        }
        let d0 = frac_deriv(&s, dx, 0.0).unwrap();
        assert!(d0.iter().zip(&s).all(|(a, b)| (a - b).abs() < 1e-10));
        assert!(frac_deriv(&s[..32], dx, 1.0).is_err());
    }

    #[test]
    fn weight_audit() {
        let mut pairs = Vec::new();
        for i in 0..100 {
            for j in 0..100 {
                pairs.push((-50.0 + i as f64 * 1.01, -50.0 + j as f64 * 1.01 + 0.005));
            }
        }
        assert!(w_weight_audit(10.0, &pairs) <= 2.0);
    }
}
