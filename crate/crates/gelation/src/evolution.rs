//! Linear evolution `h_τ = 𝓛[h] + μ`, the ψ/w construction and the Duhamel representation.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coagops::CoagOps;
use crate::error::{Error, Result};
use crate::mellin::{GKernelTable, MellinEngine, ThetaTable};
use crate::model::{Field, LogGrid, Trajectory};
use crate::norms::{tail_fit, TailFit, TailModel};
use crate::real::{lit, to_f64, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Rk4,
    Rk23Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearSolveSpec {
    pub dt_init: f64,
    pub dt_min: f64,
    pub rtol: f64,
    pub scheme: Scheme,
    /// Upper bound on `dt · ρ(𝓛)` per step.
    pub stiffness_guard: f64,
}

impl Default for LinearSolveSpec {
    fn default() -> Self {
        LinearSolveSpec { dt_init: 1e-2, dt_min: 1e-9, rtol: 1e-6, scheme: Scheme::Rk4, stiffness_guard: 2.0 }
    }
}

impl LinearSolveSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_min > 0.0) {
            return Err(Error::param("solver.dt_min", "must be positive"));
        }
        if !(self.dt_init >= self.dt_min) {
            return Err(Error::param("solver.dt_init", "must be at least dt_min"));
        }
        if !(1e-12..=1e-2).contains(&self.rtol) {
            return Err(Error::param("solver.rtol", format!("{} outside [1e-12, 1e-2]", self.rtol)));
        }
        if !(self.stiffness_guard > 0.0 && self.stiffness_guard <= 2.5) {
            return Err(Error::param("solver.stiffness_guard", "must lie in (0, 2.5]"));
        }
        Ok(())
    }
}

/// Right-hand side of an explicit system.
pub trait OdeSystem<F: Real>: Sync {
    fn rhs(&self, t: F, y: &[F]) -> Result<Vec<F>>;
    /// Rejects a trial state; the step is retried with half the step size.
    fn admissible(&self, _y: &[F]) -> bool {
        true
    }
    /// Upper bound for the spectral radius near `y`.
    fn rate(&self, y: &[F]) -> F;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub steps: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub min_dt: f64,
}

fn lincomb<F: Real>(y: &[F], terms: &[(F, &[F])]) -> Vec<F> {
    let mut out = y.to_vec();
    for (c, v) in terms {
        for (o, &x) in out.iter_mut().zip(v.iter()) {
            *o = *o + *c * x;
        }
    }
    out
}

fn finite<F: Real>(y: &[F]) -> bool {
    y.iter().all(|v| v.is_finite())
}

/// Integrates from `times[0]` through every output time. Returns the states at `times`.
pub fn integrate<F: Real, S: OdeSystem<F>>(
    sys: &S,
    y0: Vec<F>,
    times: &[F],
    spec: &LinearSolveSpec,
) -> Result<(Vec<Vec<F>>, StepStats)> {
    spec.validate()?;
    let mut stats = StepStats { min_dt: f64::INFINITY, ..Default::default() };
    let mut out = vec![y0.clone()];
    let mut y = y0;
    let mut t = times[0];
    let guard: F = lit(spec.stiffness_guard);
    let mut dt: F = lit(spec.dt_init);
    let half: F = lit(0.5);
    for &t_next in &times[1..] {
        let rate = sys.rate(&y).max(lit(1e-12));
        let cap = guard / rate;
        match spec.scheme {
            Scheme::Rk4 => {
                let mut h = lit::<F>(spec.dt_init).min(cap);
                loop {
                    let span = t_next - t;
                    let m = (span / h).ceil().to_usize().unwrap().max(1);
                    let hs = span / lit(m as f64);
                    let mut yy = y.clone();
                    let mut tt = t;
                    let mut ok = true;
                    for _ in 0..m {
                        let k1 = sys.rhs(tt, &yy)?;
                        let k2 = sys.rhs(tt + half * hs, &lincomb(&yy, &[(half * hs, &k1)]))?;
                        let k3 = sys.rhs(tt + half * hs, &lincomb(&yy, &[(half * hs, &k2)]))?;
                        let k4 = sys.rhs(tt + hs, &lincomb(&yy, &[(hs, &k3)]))?;
                        stats.rhs_evals += 4;
                        let s6 = hs / lit(6.0);
                        let s3 = hs / lit(3.0);
                        yy = lincomb(&yy, &[(s6, &k1), (s3, &k2), (s3, &k3), (s6, &k4)]);
                        tt = tt + hs;
                        stats.steps += 1;
                        if !finite(&yy) || !sys.admissible(&yy) {
                            ok = false;
                            break;
                        }
                    }
                    stats.min_dt = stats.min_dt.min(to_f64(hs));
                    if ok {
                        y = yy;
                        break;
                    }
                    stats.rejected += 1;
                    h = hs * half;
                    if to_f64(h) < spec.dt_min {
                        return Err(Error::StepUnderflow { t: to_f64(tt), dt: to_f64(h) });
                    }
                }
                t = t_next;
            }
            Scheme::Rk23Adaptive => {
                let rtol: F = lit(spec.rtol);
                let mut k1 = sys.rhs(t, &y)?;
                stats.rhs_evals += 1;
                while t < t_next {
                    dt = dt.min(cap);
                    let last = t + dt >= t_next;
                    let h = if last { t_next - t } else { dt };
                    let k2 = sys.rhs(t + half * h, &lincomb(&y, &[(half * h, &k1)]))?;
                    let c34: F = lit(0.75);
                    let k3 = sys.rhs(t + c34 * h, &lincomb(&y, &[(c34 * h, &k2)]))?;
                    let (b1, b2, b3): (F, F, F) = (lit(2.0 / 9.0), lit(1.0 / 3.0), lit(4.0 / 9.0));
                    let yn = lincomb(&y, &[(b1 * h, &k1), (b2 * h, &k2), (b3 * h, &k3)]);
                    let k4 = sys.rhs(t + h, &yn)?;
                    stats.rhs_evals += 3;
                    let (e1, e2, e3, e4): (F, F, F, F) =
                        (lit(-5.0 / 72.0), lit(1.0 / 12.0), lit(1.0 / 9.0), lit(-1.0 / 8.0));
                    let scale = y.iter().fold(F::zero(), |m, v| m.max(v.abs()));
                    let atol = rtol * scale * lit(1e-6) + lit(1e-300);
                    let mut err = F::zero();
                    for i in 0..y.len() {
                        let e = h * (e1 * k1[i] + e2 * k2[i] + e3 * k3[i] + e4 * k4[i]);
                        let sc = atol + rtol * y[i].abs().max(yn[i].abs());
                        err = err.max(e.abs() / sc);
                    }
                    let good = finite(&yn) && err <= F::one() && sys.admissible(&yn);
                    let fac = if err > F::zero() && err.is_finite() {
                        (lit::<F>(0.9) * err.powf(lit(-1.0 / 3.0))).min(lit(5.0)).max(lit(0.2))
                    } else if err.is_finite() {
                        lit(5.0)
                    } else {
                        lit(0.2)
                    };
                    if good {
                        t = t + h;
                        y = yn;
                        k1 = k4;
                        stats.steps += 1;
                        stats.min_dt = stats.min_dt.min(to_f64(h));
                        if !last {
                            dt = h * fac;
                        }
                    } else {
                        stats.rejected += 1;
                        dt = h * fac.min(half);
                        if to_f64(dt) < spec.dt_min {
                            return Err(Error::StepUnderflow { t: to_f64(t), dt: to_f64(dt) });
                        }
                    }
                }
                t = t_next;
            }
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}

/// Spectral radius estimate by power iteration in the sup norm.
///
/// Uses the mean growth rate over the second half of the iterations, so transient
/// growth of a non-normal operator does not inflate the estimate.
pub fn power_iteration<F: Real>(n: usize, iters: usize, apply: impl Fn(&[F]) -> Result<Vec<F>>) -> Result<F> {
    let mut v: Vec<F> = (0..n)
        .map(|i| {
            let s = if i % 2 == 0 { F::one() } else { -F::one() };
            s * (F::one() + lit::<F>(i as f64 / n as f64))
        })
        .collect();
    let mut logs = Vec::with_capacity(iters);
    for _ in 0..iters {
        let nv = v.iter().fold(F::zero(), |m, x| m.max(x.abs()));
        let w = apply(&v)?;
        let nw = w.iter().fold(F::zero(), |m, x| m.max(x.abs()));
        if nw == F::zero() || !nw.is_finite() {
            break;
        }
        logs.push(to_f64(nw / nv).ln());
        v = w.into_iter().map(|x| x / nw).collect();
    }
    if logs.is_empty() {
        return Ok(F::zero());
    }
    let tail = &logs[logs.len() / 2..];
    Ok(lit((tail.iter().sum::<f64>() / tail.len() as f64).exp()))
}

/// Generator of a linear evolution.
#[derive(Debug, Clone, Copy)]
pub enum Generator<'a, F> {
    /// `𝓛_{f₀}`
    Linearized(&'a Field<F>),
    /// Linearisation about the pure power law.
    Model,
}

/// Linear evolution operator with a cached stiffness estimate.
pub struct LinearEvolution<'a, F: Real> {
    pub ops: &'a CoagOps<F>,
    pub gen: Generator<'a, F>,
    pub rate: F,
}

impl<'a, F: Real> LinearEvolution<'a, F> {
    pub fn new(ops: &'a CoagOps<F>, gen: Generator<'a, F>) -> Result<Self> {
        let mut le = LinearEvolution { ops, gen, rate: F::zero() };
        let n = ops.grid().len();
        // the loss-rate bound overshoots the spectral radius by 10-700x on wide grids
        le.rate = power_iteration(n, 40, |v| le.apply_vec(v))? * lit(1.25);
        Ok(le)
    }

    pub fn apply(&self, h: &Field<F>) -> Result<Field<F>> {
        match self.gen {
            Generator::Linearized(f0) => self.ops.eval_lf0(f0, h),
            Generator::Model => self.ops.eval_l(h),
        }
    }

    fn apply_vec(&self, v: &[F]) -> Result<Vec<F>> {
        let f = Field { grid: self.ops.grid().clone(), values: v.to_vec() };
        Ok(self.apply(&f)?.values)
    }

    /// Solves `h' = 𝓛h + μ(τ)`, `h(0) = h0`, reporting `h` (and `∫h` when asked) at `times`.
    pub fn solve(
        &self,
        h0: Option<&Field<F>>,
        mu: &(dyn Fn(F) -> Vec<F> + Sync),
        times: &[F],
        spec: &LinearSolveSpec,
        with_integral: bool,
    ) -> Result<(Trajectory<F>, Option<Trajectory<F>>, StepStats)> {
        if times.is_empty() || times[0] != F::zero() {
            return Err(Error::Domain("solve times must start at 0".into()));
        }
        let n = self.ops.grid().len();
        let mut y0 = match h0 {
            Some(h) => h.values.clone(),
            None => vec![F::zero(); n],
        };
        if with_integral {
            y0.extend(std::iter::repeat_n(F::zero(), n));
        }
        let sys = LinSys { ev: self, mu, n, with_integral };
        let (states, stats) = integrate(&sys, y0, times, spec)?;
        let grid = self.ops.grid().clone();
        let mk = |range: std::ops::Range<usize>| -> Result<Trajectory<F>> {
            let slices = states.iter().map(|s| Field::new(grid.clone(), s[range.clone()].to_vec())).collect::<Result<Vec<_>>>()?;
            Trajectory::new(times.to_vec(), slices)
        };
        let h = mk(0..n)?;
        let ih = if with_integral { Some(mk(n..2 * n)?) } else { None };
        Ok((h, ih, stats))
    }
}

struct LinSys<'a, 'b, F: Real> {
    ev: &'b LinearEvolution<'a, F>,
    mu: &'b (dyn Fn(F) -> Vec<F> + Sync),
    n: usize,
    with_integral: bool,
}

impl<F: Real> OdeSystem<F> for LinSys<'_, '_, F> {
    fn rhs(&self, t: F, y: &[F]) -> Result<Vec<F>> {
        let mut d = self.ev.apply_vec(&y[..self.n])?;
        let m = (self.mu)(t);
        if !m.is_empty() {
            for (a, b) in d.iter_mut().zip(m) {
                *a = *a + b;
            }
        }
        if self.with_integral {
            d.extend_from_slice(&y[..self.n]);
        }
        Ok(d)
    }
    fn rate(&self, _y: &[F]) -> F {
        self.ev.rate
    }
}

/// Source sampled on a trajectory, linear in time between samples.
pub fn source_from<F: Real>(mu: &Trajectory<F>) -> impl Fn(F) -> Vec<F> + Sync + '_ {
    move |t| mu.at_time(t)
}

/// `h_τ = 𝓛_{f₀}[h] + μ`, `h(0) = 0`, sampled at `mu.times`.
pub fn solve_linear<F: Real>(
    ops: &CoagOps<F>,
    f0: &Field<F>,
    mu: &Trajectory<F>,
    spec: &LinearSolveSpec,
) -> Result<Trajectory<F>> {
    let ev = LinearEvolution::new(ops, Generator::Linearized(f0))?;
    let src = source_from(mu);
    Ok(ev.solve(None, &src, &mu.times, spec, false)?.0)
}

/// Tail window `[x_max/100, x_max/10]` used for amplitude extraction.
pub fn tail_window<F: Real>(grid: &LogGrid<F>) -> (f64, f64) {
    let b = to_f64(grid.x_max());
    (b / 100.0, b / 10.0)
}

/// Two-term model with exponents `(3+λ)/2` and `(3+λ)/2 + δ̄`.
pub fn two_term(lambda: f64, delta_bar: f64) -> TailModel {
    let p = (3.0 + lambda) / 2.0;
    TailModel::TwoTerm { p0: p, p1: p + delta_bar }
}

fn extract<F: Real>(f: &Field<F>, model: TailModel, what: &str) -> Result<TailFit> {
    let (a, b) = tail_window(&f.grid);
    let fit = tail_fit(f, a, b, model)?;
    if fit.r_squared < 0.99 {
        return Err(Error::Extraction(format!("{what}: R² = {:.4} below 0.99", fit.r_squared)));
    }
    Ok(fit)
}

/// ψ with `ψ_τ = 𝓛_{f₀}[ψ]`, `ψ(0) = f₀`, and its tail amplitude.
#[derive(Debug, Clone)]
pub struct PsiSolution<F: Real> {
    pub psi: Trajectory<F>,
    pub w: Trajectory<F>,
    /// `∫₀^τ w`
    pub iw: Trajectory<F>,
    pub a_path: Vec<F>,
    /// Tail coefficient of `𝓛_{f₀}[f₀]`.
    pub k_coeff: F,
    /// Amplitude rate `da/dτ = K + 𝒲_W(τ)`.
    pub cal_w: Vec<F>,
    /// `ψ - a ξ x^{-(3+λ)/2}`
    pub r2: Trajectory<F>,
    pub stats: StepStats,
}

#[derive(Debug, Clone, Copy)]
pub struct PsiOptions {
    pub lambda: f64,
    pub delta_bar: f64,
    /// Tail amplitude of `f₀` that normalises `a(0) = 1`.
    pub d1: f64,
}

/// Builds ψ through `W_τ = 𝓛W + 𝓛[𝓛f₀]`, `ψ = f₀ + τ 𝓛f₀ + ∫W`.
pub fn solve_psi<F: Real>(
    ev: &LinearEvolution<'_, F>,
    f0: &Field<F>,
    times: &[F],
    spec: &LinearSolveSpec,
    opts: PsiOptions,
) -> Result<PsiSolution<F>> {
    let lf0 = ev.apply(f0)?;
    let llf0 = ev.apply(&lf0)?;
    let src = |_t: F| llf0.values.clone();
    let (wsol, iwsol, stats) = ev.solve(None, &src, times, spec, true)?;
    let iwsol = iwsol.unwrap();
    let model = two_term(opts.lambda, opts.delta_bar);
    let d1: F = lit(opts.d1);
    let k = lit::<F>(extract(&lf0, model, "tail of 𝓛f₀")?.amplitude) / d1;
    let grid = f0.grid.clone();
    let p = lit::<F>((3.0 + opts.lambda) / 2.0);
    let xi: Vec<F> = grid.nodes().iter().map(|&x| crate::model::cutoff_xi(x).unwrap()).collect();
    let mut a_path = Vec::with_capacity(times.len());
    let mut cal_w = Vec::with_capacity(times.len());
    let (mut psi, mut w, mut r2) = (Vec::new(), Vec::new(), Vec::new());
    for (j, &t) in times.iter().enumerate() {
        let wf = &wsol.slices[j];
        let iw = &iwsol.slices[j];
        let ww = lit::<F>(extract(wf, model, "tail of W")?.amplitude) / d1;
        let iwa = lit::<F>(extract(iw, model, "tail of ∫W")?.amplitude) / d1;
        let a = F::one() + k * t + iwa;
        a_path.push(a);
        cal_w.push(k + ww);
        let pv: Vec<F> = (0..grid.len()).map(|i| f0.values[i] + t * lf0.values[i] + iw.values[i]).collect();
        let rv: Vec<F> = (0..grid.len()).map(|i| pv[i] - a * d1 * xi[i] * grid.nodes()[i].powf(-p)).collect();
        let wv: Vec<F> = (0..grid.len()).map(|i| lf0.values[i] + wf.values[i]).collect();
        psi.push(Field::new(grid.clone(), pv)?);
        r2.push(Field::new(grid.clone(), rv)?);
        w.push(Field::new(grid.clone(), wv)?);
    }
    a_path[0] = F::one();
    Ok(PsiSolution {
        psi: Trajectory::new(times.to_vec(), psi)?,
        w: Trajectory::new(times.to_vec(), w)?,
        iw: iwsol,
        a_path,
        k_coeff: k,
        cal_w,
        r2: Trajectory::new(times.to_vec(), r2)?,
        stats,
    })
}

/// Uniform ladder `0, T/m, …, T`.
pub fn uniform_ladder<F: Real>(t: F, m: usize) -> Vec<F> {
    (0..=m).map(|j| t * lit(j as f64 / m as f64)).collect()
}

pub(crate) fn shared_grid<F: Real>(a: &Arc<LogGrid<F>>, b: &Arc<LogGrid<F>>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// Tabulated kernels for the Duhamel sum `J` and the amplitude functional `I`.
#[derive(Debug, Clone)]
pub struct Duhamel {
    /// Absent for tables built by [`Duhamel::amplitude_only`].
    pub kernel: Option<GKernelTable>,
    pub theta: ThetaTable,
    pub opts: DuhamelOptions,
    kappa: f64,
    p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DuhamelOptions {
    /// Table rows per decade of local time.
    pub per_decade: usize,
    /// Gaussian mollifier width in `ln x` applied to `g`.
    pub smoothing: f64,
    /// Sub-intervals per trajectory interval in the `I` time quadrature.
    pub theta_substeps: usize,
}

impl Default for DuhamelOptions {
    fn default() -> Self {
        DuhamelOptions { per_decade: 12, smoothing: 0.02, theta_substeps: 8 }
    }
}

impl Duhamel {
    /// Tables for local times `(τ-s) x₀^{(λ-1)/2}` with `τ-s ∈ [ds_min, t_max]` and `x₀` on `grid`.
    pub fn new(engine: &MellinEngine, grid: &LogGrid<f64>, ds_min: f64, t_max: f64, opts: DuhamelOptions) -> Result<Self> {
        Self::build(engine, grid, ds_min, t_max, opts, true)
    }

    /// Only the `Θ` table, enough for [`Duhamel::i_functional`].
    pub fn amplitude_only(engine: &MellinEngine, grid: &LogGrid<f64>, ds_min: f64, t_max: f64, opts: DuhamelOptions) -> Result<Self> {
        Self::build(engine, grid, ds_min, t_max, opts, false)
    }

    fn build(engine: &MellinEngine, grid: &LogGrid<f64>, ds_min: f64, t_max: f64, opts: DuhamelOptions, with_kernel: bool) -> Result<Self> {
        if !(ds_min > 0.0 && t_max > ds_min) {
            return Err(Error::Domain(format!("Duhamel tables need 0 < ds_min < t_max, got {ds_min}, {t_max}")));
        }
        if opts.per_decade < 2 || opts.theta_substeps == 0 || !(opts.smoothing > 0.0) {
            return Err(Error::param("duhamel", "needs per_decade ≥ 2, theta_substeps ≥ 1, smoothing > 0"));
        }
        let kappa = engine.kappa;
        let lo = ds_min * grid.x_min().powf(kappa) / opts.theta_substeps as f64;
        let hi = t_max * grid.x_max().powf(kappa);
        let span = (grid.x_max() / grid.x_min()).ln() + 1.0;
        let kernel = if with_kernel {
            Some(GKernelTable::new(engine, lo, hi, opts.per_decade, span, opts.smoothing)?)
        } else {
            None
        };
        let theta = ThetaTable::new(engine, lo, hi, 4 * opts.per_decade)?;
        Ok(Duhamel { kernel, theta, opts, kappa, p: engine.xs })
    }

    /// Trajectory nodes in `[0, τ]` with `τ` appended when it is not a node.
    fn s_nodes(f: &Trajectory<f64>, tau: f64) -> Result<Vec<f64>> {
        let t_end = *f.times.last().unwrap();
        if !(tau >= 0.0 && tau <= t_end * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!("τ = {tau} outside the source range [0, {t_end}]")));
        }
        let mut s: Vec<f64> = f.times.iter().copied().filter(|&t| t < tau).collect();
        s.push(tau);
        Ok(s)
    }

    /// `J(τ,x) = ∫₀^τ ds ∫ g((τ-s)x₀^{(λ-1)/2}, x/x₀, 1) F(s,x₀) dx₀/x₀`.
    ///
    /// Trapezoid in `s` on the source's time nodes; the `s = τ` end uses `g → δ`.
    pub fn eval(&self, f: &Trajectory<f64>, tau: f64) -> Result<Field<f64>> {
        let kernel = self.kernel.as_ref().ok_or_else(|| Error::Domain("Duhamel tables were built without the g kernel".into()))?;
        let grid = f.grid().clone();
        let n = grid.len();
        let s = Self::s_nodes(f, tau)?;
        let mut out = vec![0.0; n];
        if s.len() < 2 {
            return Field::new(grid, out);
        }
        let h = grid.log_step();
        let wx: Vec<f64> = crate::quadrature::gregory_weights::<f64>(n).into_iter().map(|w| w * h).collect();
        let lx: Vec<f64> = grid.nodes().iter().map(|x| x.ln()).collect();
        let xk: Vec<f64> = grid.nodes().iter().map(|x| x.powf(self.kappa)).collect();
        let m = s.len();
        for k in 0..m {
            let ws = match k {
                0 => 0.5 * (s[1] - s[0]),
                _ if k == m - 1 => 0.5 * (s[k] - s[k - 1]),
                _ => 0.5 * (s[k + 1] - s[k - 1]),
            };
            let src = f.at_time(s[k]);
            if k == m - 1 {
                for (o, v) in out.iter_mut().zip(&src) {
                    *o += ws * v;
                }
                continue;
            }
            let dt = tau - s[k];
            let active: Vec<usize> = (0..n).filter(|&j| src[j] != 0.0).collect();
            let rows: Vec<(usize, usize, f64)> = active.iter().map(|&j| kernel.locate(dt * xk[j])).collect();
            let add: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut acc = 0.0;
                    for (&j, &(a, b, w)) in active.iter().zip(&rows) {
                        let d = lx[i] - lx[j];
                        let g = if w == 0.0 {
                            kernel.rows[a].at(d)
                        } else {
                            kernel.rows[a].at(d) * (1.0 - w) + kernel.rows[b].at(d) * w
                        };
                        acc += g * src[j] * wx[j];
                    }
                    acc
                })
                .collect();
            for (o, v) in out.iter_mut().zip(add) {
                *o += ws * v;
            }
        }
        Field::new(grid, out)
    }

    /// `I(τ;F) = ∫dx₀/x₀ ∫₀^τ ds F(s,x₀) Θ((τ-s)x₀^{(λ-1)/2}) x₀^{(3+λ)/2}`.
    ///
    /// Composite Simpson in `s` with `F` linear between its nodes.
    pub fn i_functional(&self, f: &Trajectory<f64>, tau: f64) -> Result<f64> {
        let s = Self::s_nodes(f, tau)?;
        if s.len() < 2 {
            return Ok(0.0);
        }
        let grid = f.grid();
        let n = grid.len();
        let h = grid.log_step();
        let wx: Vec<f64> = crate::quadrature::gregory_weights::<f64>(n).into_iter().map(|w| w * h).collect();
        let xk: Vec<f64> = grid.nodes().iter().map(|x| x.powf(self.kappa)).collect();
        let xp: Vec<f64> = grid.nodes().iter().map(|x| x.powf(self.p)).collect();
        let q = 2 * self.opts.theta_substeps;
        let mut total = 0.0;
        for k in 0..s.len() - 1 {
            let (a, b) = (s[k], s[k + 1]);
            let d = (b - a) / q as f64;
            for l in 0..=q {
                let c = if l == 0 || l == q { 1.0 } else if l % 2 == 1 { 4.0 } else { 2.0 };
                let sl = a + l as f64 * d;
                let src = f.at_time(sl);
                let dt = tau - sl;
                let v: f64 = (0..n).map(|j| if src[j] == 0.0 { 0.0 } else { src[j] * self.theta.at(dt * xk[j]) * xp[j] * wx[j] }).sum();
                total += c * d / 3.0 * v;
            }
        }
        Ok(total)
    }
}

/// One-off `J(τ,·)`; builds the kernel tables for the source's grid and time range.
pub fn duhamel_eval(f: &Trajectory<f64>, tau: f64, engine: &MellinEngine) -> Result<Field<f64>> {
    let d = Duhamel::new(engine, f.grid(), min_gap(&f.times), tau.max(min_gap(&f.times) * 2.0), DuhamelOptions::default())?;
    d.eval(f, tau)
}

/// One-off `I(τ;F)`.
pub fn i_functional(tau: f64, f: &Trajectory<f64>, engine: &MellinEngine) -> Result<f64> {
    let d = Duhamel::amplitude_only(engine, f.grid(), min_gap(&f.times), tau.max(min_gap(&f.times) * 2.0), DuhamelOptions::default())?;
    d.i_functional(f, tau)
}

fn min_gap(t: &[f64]) -> f64 {
    t.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min).min(1.0)
}
