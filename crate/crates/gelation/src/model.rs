//! Parameters, log grids, cutoffs and initial data.

use std::fmt;
use std::io::{Read, Write};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, linear_fit};
use crate::real::{lit, to_f64, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<F> {
    pub lambda: F,
    pub sigma: F,
    pub delta: F,
    pub delta_bar: F,
    pub d1: F,
    pub d2: F,
    pub b: F,
    /// Horizon in rescaled time τ.
    pub t_horizon: F,
}

impl<F: Real> ModelParams<F> {
    /// Defaults for a given λ: δ = 0.8·min(r, (2-λ)/2), δ̄ = 0.75·δ.
    pub fn with_lambda(lambda: F) -> Result<Self> {
        let l = to_f64(lambda);
        if !(l > 1.0 && l < 2.0) {
            return Err(Error::param("lambda", format!("{l} violates 1 < lambda < 2")));
        }
        let r = (l - 1.0) / 2.0;
        let delta = 0.8 * r.min((2.0 - l) / 2.0);
        let p = ModelParams {
            lambda,
            sigma: lit(1.5),
            delta: lit(delta),
            delta_bar: lit(0.75 * delta),
            d1: F::one(),
            d2: lit(0.25),
            b: lit(0.05),
            t_horizon: lit(0.05),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let l = to_f64(self.lambda);
        let fin = |name: &str, v: F| -> Result<f64> {
            let v = to_f64(v);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::param(name, "not finite"))
            }
        };
        fin("lambda", self.lambda)?;
        if !(l > 1.0 && l < 2.0) {
            return Err(Error::param("lambda", format!("{l} violates 1 < lambda < 2")));
        }
        let s = fin("sigma", self.sigma)?;
        if !(s > 1.0 && s < 2.0) {
            return Err(Error::param("sigma", format!("{s} violates 1 < sigma < 2")));
        }
        let r = (l - 1.0) / 2.0;
        let d = fin("delta", self.delta)?;
        let dmax = r.min((2.0 - l) / 2.0);
        if !(d > 0.0 && d < dmax) {
            return Err(Error::param("delta", format!("{d} violates 0 < delta < {dmax}")));
        }
        let db = fin("delta_bar", self.delta_bar)?;
        if !(db > 0.0 && db < r.min(d)) {
            return Err(Error::param("delta_bar", format!("{db} violates 0 < delta_bar < {}", r.min(d))));
        }
        if fin("d1", self.d1)? <= 0.0 {
            return Err(Error::param("d1", "must be positive"));
        }
        fin("d2", self.d2)?;
        if fin("b", self.b)? < 0.0 {
            return Err(Error::param("b", "must be nonnegative"));
        }
        if fin("t_horizon", self.t_horizon)? <= 0.0 {
            return Err(Error::param("t_horizon", "must be positive"));
        }
        Ok(())
    }

    /// r = (λ-1)/2, also the time-scaling exponent of the local clock.
    pub fn r(&self) -> F {
        (self.lambda - F::one()) / lit(2.0)
    }

    /// Tail exponent (3+λ)/2 of the stationary power law.
    pub fn tail_exponent(&self) -> F {
        (lit::<F>(3.0) + self.lambda) / lit(2.0)
    }

    pub fn p_bar(&self) -> F {
        self.tail_exponent() + self.delta_bar
    }
}

/// Geometric grid `x_i = x_min · ρ^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogGrid<F> {
    x_min: F,
    x_max: F,
    log_step: F,
    nodes: Vec<F>,
}

impl<F: Real> LogGrid<F> {
    pub fn new(x_min: F, x_max: F, n_nodes: usize) -> Result<Self> {
        let (a, b) = (to_f64(x_min), to_f64(x_max));
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::param("x_min", format!("{a} must be positive")));
        }
        if a >= 0.125 {
            return Err(Error::param("x_min", format!("{a} must be below 1/8")));
        }
        if !(b > 4.0 && b.is_finite()) {
            return Err(Error::param("x_max", format!("{b} must exceed 4")));
        }
        if n_nodes < 16 {
            return Err(Error::param("n_nodes", format!("{n_nodes} is too small (need >= 16)")));
        }
        let h = (b / a).ln() / (n_nodes - 1) as f64;
        let mut nodes: Vec<F> = (0..n_nodes).map(|i| lit(a * (h * i as f64).exp())).collect();
        nodes[0] = x_min;
        nodes[n_nodes - 1] = x_max;
        Ok(LogGrid { x_min, x_max, log_step: lit(h), nodes })
    }

    /// Rebuilds a grid from node values, checking the geometric progression.
    pub fn from_nodes(nodes: &[F]) -> Result<Self> {
        let n = nodes.len();
        if n < 16 {
            return Err(Error::param("grid", "need at least 16 nodes"));
        }
        let g = Self::new(nodes[0], nodes[n - 1], n)?;
        for (a, b) in g.nodes.iter().zip(nodes) {
            if (to_f64(*a) / to_f64(*b) - 1.0).abs() > 1e-9 {
                return Err(Error::param("grid", "nodes are not a geometric progression"));
            }
        }
        Ok(g)
    }

    pub fn x_min(&self) -> F {
        self.x_min
    }
    pub fn x_max(&self) -> F {
        self.x_max
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    pub fn nodes(&self) -> &[F] {
        &self.nodes
    }
    /// Spacing in `ln x`.
    pub fn log_step(&self) -> F {
        self.log_step
    }
    /// Nodes per decade.
    pub fn density(&self) -> f64 {
        std::f64::consts::LN_10 / to_f64(self.log_step)
    }
}

/// Values on a grid at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<F> {
    pub grid: Arc<LogGrid<F>>,
    pub values: Vec<F>,
}

impl<F: Real> Field<F> {
    pub fn new(grid: Arc<LogGrid<F>>, values: Vec<F>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Domain(format!(
                "field has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { stage: "field".into(), node: i, x: to_f64(grid.nodes[i]) });
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: Arc<LogGrid<F>>) -> Self {
        let n = grid.len();
        Field { grid, values: vec![F::zero(); n] }
    }

    pub fn from_fn(grid: Arc<LogGrid<F>>, f: impl Fn(F) -> F) -> Self {
        let values = grid.nodes.iter().map(|&x| f(x)).collect();
        Field { grid, values }
    }

    pub fn nodes(&self) -> &[F] {
        self.grid.nodes()
    }

    pub fn scaled(&self, a: F) -> Self {
        Field { grid: self.grid.clone(), values: self.values.iter().map(|&v| a * v).collect() }
    }

    /// `self + a·other`
    pub fn axpy(&self, a: F, other: &Field<F>) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(&u, &v)| u + a * v).collect();
        Field { grid: self.grid.clone(), values }
    }

    pub fn max_abs(&self) -> F {
        self.values.iter().fold(F::zero(), |m, v| m.max(v.abs()))
    }
}

/// Time-indexed fields on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<F> {
    pub times: Vec<F>,
    pub slices: Vec<Field<F>>,
}

impl<F: Real> Trajectory<F> {
    pub fn new(times: Vec<F>, slices: Vec<Field<F>>) -> Result<Self> {
        if times.is_empty() || times.len() != slices.len() {
            return Err(Error::Domain("trajectory needs one slice per time".into()));
        }
        if times[0] != F::zero() {
            return Err(Error::Domain("trajectory must start at time 0".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("trajectory times must increase".into()));
        }
        let g = &slices[0].grid;
        if slices.iter().any(|s| !Arc::ptr_eq(&s.grid, g) && *s.grid != **g) {
            return Err(Error::Domain("trajectory slices must share one grid".into()));
        }
        Ok(Trajectory { times, slices })
    }

    pub fn grid(&self) -> &Arc<LogGrid<F>> {
        &self.slices[0].grid
    }

    /// Linear interpolation in time, clamped to the stored range.
    pub fn at_time(&self, t: F) -> Vec<F> {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.slices[0].values.clone();
        }
        if t >= self.times[n - 1] {
            return self.slices[n - 1].values.clone();
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        self.slices[k]
            .values
            .iter()
            .zip(&self.slices[k + 1].values)
            .map(|(&a, &b)| a + w * (b - a))
            .collect()
    }

    /// Writes `tau,x,f` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["tau", "x", "f"])?;
        for (t, s) in self.times.iter().zip(&self.slices) {
            for (x, v) in s.grid.nodes().iter().zip(&s.values) {
                wr.write_record([
                    format!("{:.16e}", to_f64(*t)),
                    format!("{:.16e}", to_f64(*x)),
                    format!("{:.16e}", to_f64(*v)),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let hdr = rd.headers()?.clone();
        if hdr.iter().collect::<Vec<_>>() != ["tau", "x", "f"] {
            return Err(Error::Domain("expected header tau,x,f".into()));
        }
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let p = |i: usize| -> Result<f64> {
                rec[i].trim().parse::<f64>().map_err(|e| Error::Domain(format!("bad number: {e}")))
            };
            rows.push((p(0)?, p(1)?, p(2)?));
        }
        let mut times: Vec<f64> = Vec::new();
        for r in &rows {
            if times.last() != Some(&r.0) {
                times.push(r.0);
            }
        }
        let nt = times.len();
        if nt == 0 || rows.len() % nt != 0 {
            return Err(Error::Domain("ragged trajectory csv".into()));
        }
        let nx = rows.len() / nt;
        let xs: Vec<F> = rows[..nx].iter().map(|r| lit(r.1)).collect();
        let grid = Arc::new(LogGrid::from_nodes(&xs)?);
        let mut slices = Vec::with_capacity(nt);
        for k in 0..nt {
            let vals = rows[k * nx..(k + 1) * nx].iter().map(|r| lit(r.2)).collect();
            slices.push(Field::new(grid.clone(), vals)?);
        }
        Trajectory::new(times.into_iter().map(lit).collect(), slices)
    }
}

fn bump_integrand(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        (-1.0 / (s * (1.0 - s))).exp()
    }
}

fn bump_integral(a: f64, b: f64) -> f64 {
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let (x, w) = GL.get_or_init(|| gauss_legendre(20));
    let panels = 8;
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(w) {
            s += wi * bump_integrand(c + 0.5 * h * xi);
        }
    }
    0.5 * h * s
}

/// Smoothstep `S(t) = ∫₀ᵗ e^{-1/(s(1-s))} ds / ∫₀¹ …`, clamped to `[0, 1]`.
pub fn smoothstep(t: f64) -> f64 {
    static NORM: OnceLock<f64> = OnceLock::new();
    let z = *NORM.get_or_init(|| 2.0 * bump_integral(0.0, 0.5));
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else if t <= 0.5 {
        bump_integral(0.0, t) / z
    } else {
        1.0 - bump_integral(0.0, 1.0 - t) / z
    }
}

/// ξ: 0 on [0, 1/2], 1 on [1, ∞).
pub fn cutoff_xi<F: Real>(x: F) -> Result<F> {
    let v = to_f64(x);
    if !(v >= 0.0) {
        return Err(Error::Domain(format!("cutoff_xi at x = {v}")));
    }
    Ok(lit(smoothstep(2.0 * v - 1.0)))
}

/// η: 1 on [1/4, 3], 0 outside (1/8, 4).
pub fn cutoff_eta<F: Real>(x: F) -> Result<F> {
    let v = to_f64(x);
    if !(v >= 0.0) {
        return Err(Error::Domain(format!("cutoff_eta at x = {v}")));
    }
    let e = if v <= 0.25 {
        smoothstep(8.0 * (v - 0.125))
    } else if v <= 3.0 {
        1.0
    } else {
        1.0 - smoothstep(v - 3.0)
    };
    Ok(lit(e))
}

/// Choice of the remainder `f₃` in the initial datum.
#[derive(Clone, Default)]
pub enum RemainderMode {
    /// `B (1+x)^{-((3+λ)/2 + r + δ)}`
    #[default]
    Default,
    Zero,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for RemainderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RemainderMode::Default => write!(f, "Default"),
            RemainderMode::Zero => write!(f, "Zero"),
            RemainderMode::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// `D₁ x^{-(3+λ)/2}` without the cutoff.
pub fn pure_power<F: Real>(params: &ModelParams<F>, grid: Arc<LogGrid<F>>) -> Field<F> {
    let p = params.tail_exponent();
    Field::from_fn(grid, |x| params.d1 * x.powf(-p))
}

/// `f₀ = f₁ + f₂ + f₃` sampled on the grid.
pub fn initial_data<F: Real>(
    params: &ModelParams<F>,
    grid: Arc<LogGrid<F>>,
    mode: &RemainderMode,
) -> Result<Field<F>> {
    params.validate()?;
    let p1 = to_f64(params.tail_exponent());
    let r = to_f64(params.r());
    let p3 = p1 + r + to_f64(params.delta);
    let (d1, d2, b) = (to_f64(params.d1), to_f64(params.d2), to_f64(params.b));
    if let RemainderMode::Custom(f3) = mode {
        validate_remainder(f3.as_ref(), p3, to_f64(grid.x_max()))?;
    }
    let mut vals = Vec::with_capacity(grid.len());
    for &xf in grid.nodes() {
        let x = to_f64(xf);
        let xi = smoothstep(2.0 * x - 1.0);
        let f12 = if xi > 0.0 { xi * (d1 * x.powf(-p1) + d2 * x.powf(-p1 - r)) } else { 0.0 };
        let f3 = match mode {
            RemainderMode::Default => b * (1.0 + x).powf(-p3),
            RemainderMode::Zero => 0.0,
            RemainderMode::Custom(f) => f(x),
        };
        vals.push(lit(f12 + f3));
    }
    Field::new(grid, vals)
}

/// Checks that `(1+x)^{p+k} |f₃^{(k)}|`, k = 0..3, does not grow along the grid range.
fn validate_remainder(f3: &(dyn Fn(f64) -> f64 + Send + Sync), p: f64, x_max: f64) -> Result<()> {
    let n = 400;
    let (a, b) = (1e-2f64.ln(), x_max.ln());
    let mut lo = [0.0f64; 4];
    let mut hi = [0.0f64; 4];
    for i in 0..n {
        let x = (a + (b - a) * i as f64 / (n - 1) as f64).exp();
        let e = 1e-3 * x;
        let v: Vec<f64> = (-2..=2).map(|k| f3(x + k as f64 * e)).collect();
        if v.iter().any(|t| !t.is_finite()) {
            return Err(Error::param("remainder", format!("custom remainder not finite near x = {x:e}")));
        }
        let d = [
            v[2],
            (v[3] - v[1]) / (2.0 * e),
            (v[3] - 2.0 * v[2] + v[1]) / (e * e),
            (v[4] - 2.0 * v[3] + 2.0 * v[1] - v[0]) / (2.0 * e * e * e),
        ];
        for k in 0..4 {
            let w = d[k].abs() * (1.0 + x).powf(p + k as f64);
            if i < n / 2 {
                lo[k] = lo[k].max(w);
            } else {
                hi[k] = hi[k].max(w);
            }
        }
    }
    for k in 0..4 {
        if hi[k] > 10.0 * lo[k].max(f64::MIN_POSITIVE) && hi[k] > 1e-300 {
            return Err(Error::param(
                "remainder",
                format!("custom remainder violates the decay bound for derivative order {k}"),
            ));
        }
    }
    Ok(())
}

/// Log-log regression exponent of `|v|` against `x` restricted to `[a, b]`.
pub fn loglog_slope<F: Real>(x: &[F], v: &[F], a: f64, b: f64) -> f64 {
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(v)
        .filter(|(x, v)| {
            let x = to_f64(**x);
            x >= a && x <= b && to_f64(**v) != 0.0
        })
        .map(|(x, v)| (to_f64(*x).ln(), to_f64(*v).abs().ln()))
        .unzip();
    linear_fit(&lx, &ly).1
}
