//! Direct nonlinear solver for `∂f/∂t = Q[f]` with gel-flux accounting.

use serde::{Deserialize, Serialize};

use crate::coagops::{moment, CoagOps, Kernel};
use crate::error::{Error, Result};
use crate::evolution::{integrate, tail_window, LinearSolveSpec, OdeSystem, StepStats};
use crate::model::{Field, Trajectory};
use crate::norms::{tail_fit, TailModel};
use crate::real::{lit, to_f64, Real};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GelDiagnostics {
    pub times: Vec<f64>,
    pub mass_m1: Vec<f64>,
    pub gel_flux: Vec<f64>,
    pub tail_amp: Vec<f64>,
    pub tail_exp: Vec<f64>,
}

impl GelDiagnostics {
    /// Rows `t,m1,gel_flux,tail_amp,tail_exp`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "m1", "gel_flux", "tail_amp", "tail_exp"])?;
        for i in 0..self.times.len() {
            wr.write_record(
                [self.times[i], self.mass_m1[i], self.gel_flux[i], self.tail_amp[i], self.tail_exp[i]]
                    .iter()
                    .map(|v| format!("{v:.16e}")),
            )?;
        }
        wr.flush()?;
        Ok(())
    }

    /// First time at which `M₁` has dropped by `frac`, by linear interpolation.
    pub fn onset(&self, frac: f64) -> Option<f64> {
        let m0 = self.mass_m1[0];
        let target = m0 * (1.0 - frac);
        for i in 1..self.times.len() {
            if self.mass_m1[i] <= target {
                let (a, b) = (self.mass_m1[i - 1], self.mass_m1[i]);
                let w = (a - target) / (a - b);
                return Some(self.times[i - 1] + w * (self.times[i] - self.times[i - 1]));
            }
        }
        None
    }
}

#[derive(Debug, Clone)]
pub struct DirectRun<F: Real> {
    pub trajectory: Trajectory<F>,
    pub diagnostics: GelDiagnostics,
    /// `∫₀^t gel_flux`
    pub gel_integral: Vec<f64>,
    /// `max_t |M₁(t) + ∫gel_flux - M₁(0)| / M₁(0)`
    pub budget_defect: f64,
    /// Output intervals over which `∫f` failed to decrease.
    pub number_density_violations: usize,
    pub stats: StepStats,
}

/// `∫₀^{x_max} x f dx`, the mass still inside the box.
pub fn box_mass<F: Real>(f: &Field<F>) -> F {
    let m = moment(f, F::one());
    m.value - m.high_closure
}

/// Mass flux leaving `[0, x_max]` through pairs whose merged size exceeds the box.
pub fn gel_flux<F: Real>(ops: &CoagOps<F>, f: &Field<F>) -> Result<F> {
    ops.gel_flux(f)
}

struct Sys<'a, F: Real> {
    ops: &'a CoagOps<F>,
    n: usize,
}

impl<F: Real> Sys<'_, F> {
    fn field(&self, y: &[F]) -> Field<F> {
        Field { grid: self.ops.grid().clone(), values: y[..self.n].to_vec() }
    }
}

impl<F: Real> OdeSystem<F> for Sys<'_, F> {
    fn rhs(&self, _t: F, y: &[F]) -> Result<Vec<F>> {
        let f = self.field(y);
        let mut d = self.ops.eval_q(&f)?.values;
        d.push(self.ops.gel_flux(&f)?);
        Ok(d)
    }
    fn admissible(&self, y: &[F]) -> bool {
        let m = y[..self.n].iter().fold(F::zero(), |m, v| m.max(*v));
        let floor = -m * lit(1e-10);
        y[..self.n].iter().all(|v| *v >= floor)
    }
    fn rate(&self, y: &[F]) -> F {
        // loss rate bound plus margin for the nonlocal gain part
        self.ops.loss_rate_bound(&self.field(y)) * lit(1.25)
    }
}

/// Integrates `∂f/∂t = Q[f]` from `f0`, reporting at `times` (starting at 0).
pub fn simulate_direct<F: Real>(
    ops: &CoagOps<F>,
    f0: &Field<F>,
    times: &[F],
    spec: &LinearSolveSpec,
) -> Result<DirectRun<F>> {
    if times.is_empty() || times[0] != F::zero() {
        return Err(Error::Domain("output times must start at 0".into()));
    }
    let n = f0.values.len();
    let sys = Sys { ops, n };
    let mut y0 = f0.values.clone();
    y0.push(F::zero());
    let (states, stats) = integrate(&sys, y0, times, spec)?;
    let grid = ops.grid().clone();
    let slices: Vec<Field<F>> =
        states.iter().map(|s| Field::new(grid.clone(), s[..n].to_vec())).collect::<Result<_>>()?;
    let gel_integral: Vec<f64> = states.iter().map(|s| to_f64(s[n])).collect();
    let mut diag = GelDiagnostics::default();
    let power = matches!(ops.kernel(), Kernel::Power { .. });
    let (wa, wb) = tail_window(&grid);
    let mut violations = 0;
    let mut prev_m0 = f64::INFINITY;
    for (t, f) in times.iter().zip(&slices) {
        diag.times.push(to_f64(*t));
        diag.mass_m1.push(to_f64(box_mass(f)));
        diag.gel_flux.push(to_f64(ops.gel_flux(f)?));
        let (amp, ex) = if power {
            match tail_fit(f, wa, wb, TailModel::OneTerm) {
                Ok(fit) => (fit.amplitude, fit.exponent),
                Err(_) => (f64::NAN, f64::NAN),
            }
        } else {
            (f64::NAN, f64::NAN)
        };
        diag.tail_amp.push(amp);
        diag.tail_exp.push(ex);
        let m0 = to_f64(moment(f, F::zero()).value);
        if m0 > prev_m0 {
            violations += 1;
        }
        prev_m0 = m0;
    }
    let m10 = diag.mass_m1[0];
    let budget_defect = diag
        .mass_m1
        .iter()
        .zip(&gel_integral)
        .map(|(m, g)| (m + g - m10).abs() / m10.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    Ok(DirectRun {
        trajectory: Trajectory::new(times.to_vec(), slices)?,
        diagnostics: diag,
        gel_integral,
        budget_defect,
        number_density_violations: violations,
        stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareMetric {
    /// `max_t ‖a - b‖∞ / max(‖a‖∞, ‖b‖∞)`
    LinfRel,
    /// `max_t |M₁(a) - M₁(b)| / max(M₁(a), M₁(b))`
    L1Mass,
}

/// Discrepancy between trajectories on the union of their time ladders within the common range.
pub fn compare<F: Real>(a: &Trajectory<F>, b: &Trajectory<F>, metric: CompareMetric) -> Result<f64> {
    if !crate::evolution::shared_grid(a.grid(), b.grid()) {
        return Err(Error::Domain("trajectories live on different grids".into()));
    }
    let lo = to_f64(a.times[0]).max(to_f64(b.times[0]));
    let hi = to_f64(*a.times.last().unwrap()).min(to_f64(*b.times.last().unwrap()));
    if hi < lo {
        return Err(Error::Domain("trajectories have disjoint time ranges".into()));
    }
    let mut ts: Vec<f64> = a.times.iter().chain(&b.times).map(|&t| to_f64(t)).filter(|&t| t >= lo && t <= hi).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let grid = a.grid().clone();
    let mut worst = 0.0f64;
    for t in ts {
        let fa = a.at_time(lit(t));
        let fb = b.at_time(lit(t));
        let d = match metric {
            CompareMetric::LinfRel => {
                let num = fa.iter().zip(&fb).fold(0.0f64, |m, (x, y)| m.max(to_f64(*x - *y).abs()));
                let den = fa.iter().chain(&fb).fold(0.0f64, |m, x| m.max(to_f64(*x).abs()));
                if den == 0.0 {
                    0.0
                } else {
                    num / den
                }
            }
            CompareMetric::L1Mass => {
                let ma = to_f64(moment(&Field { grid: grid.clone(), values: fa }, F::one()).value);
                let mb = to_f64(moment(&Field { grid: grid.clone(), values: fb }, F::one()).value);
                let den = ma.abs().max(mb.abs());
                if den == 0.0 {
                    0.0
                } else {
                    (ma - mb).abs() / den
                }
            }
        };
        worst = worst.max(d);
    }
    Ok(worst)
}
