//! Fixed-point construction of a gelling solution: h̃₁ and its amplitude 𝒢,
//! h̃₂ from the ψ/w pair, the Volterra equation for Λ, the map 𝒯 and Picard iteration.

use serde::{Deserialize, Serialize};

use crate::coagops::{moment, CoagOps};
use crate::directsim::GelDiagnostics;
use crate::error::{Error, Result};
use crate::evolution::{
    solve_psi, source_from, tail_window, two_term, uniform_ladder, Generator, LinearEvolution, LinearSolveSpec,
    PsiOptions, PsiSolution, StepStats,
};
use crate::model::{cutoff_xi, Field, ModelParams, Trajectory};
use crate::norms::{space_norm, tail_fit, SpaceKind};
use crate::real::{lit, to_f64, Real};

/// Amplitude Λ(τ) with the data of its Volterra equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudePath<F> {
    pub taus: Vec<F>,
    pub lambda_vals: Vec<F>,
    pub a_vals: Vec<F>,
    pub cal_w_vals: Vec<F>,
    pub cal_g_vals: Vec<F>,
}

impl<F: Real> AmplitudePath<F> {
    /// Rows `tau,Lambda,a,calW,calG`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["tau", "Lambda", "a", "calW", "calG"])?;
        for i in 0..self.taus.len() {
            wr.write_record(
                [self.taus[i], self.lambda_vals[i], self.a_vals[i], self.cal_w_vals[i], self.cal_g_vals[i]]
                    .iter()
                    .map(|v| format!("{:.16e}", to_f64(*v))),
            )?;
        }
        wr.flush()?;
        Ok(())
    }

    /// `t(τ) = ∫₀^τ dς/Λ(ς)` on the ladder (trapezoid).
    pub fn time_map(&self) -> Vec<F> {
        let mut t = vec![F::zero(); self.taus.len()];
        for k in 1..t.len() {
            let d = self.taus[k] - self.taus[k - 1];
            t[k] = t[k - 1] + d * lit(0.5) * (self.lambda_vals[k].recip() + self.lambda_vals[k - 1].recip());
        }
        t
    }
}

fn uniform_step<F: Real>(taus: &[F]) -> Result<F> {
    if taus.len() < 2 || taus[0] != F::zero() {
        return Err(Error::Domain("τ ladder must start at 0 and have at least two nodes".into()));
    }
    let d = taus[1] - taus[0];
    // ladder rounding grows with the node count
    let tol = (4.0 * to_f64(F::epsilon()) * taus.len() as f64).max(1e-9);
    for w in taus.windows(2) {
        if to_f64((w[1] - w[0] - d).abs()) > tol * to_f64(d) {
            return Err(Error::Domain("τ ladder is not uniform".into()));
        }
    }
    Ok(d)
}

/// Solves `Λ(τ) = 𝒢(τ) + a(τ) - ∫₀^τ 𝒲(τ-s)Λ(s) ds` by trapezoidal marching on a uniform ladder.
pub fn solve_volterra<F: Real>(taus: &[F], a: &[F], cal_w: &[F], cal_g: &[F]) -> Result<AmplitudePath<F>> {
    let n = taus.len();
    if a.len() != n || cal_w.len() != n || cal_g.len() != n {
        return Err(Error::Domain("Volterra data are not sampled on the τ ladder".into()));
    }
    let d = uniform_step(taus)?;
    if to_f64((a[0] - F::one()).abs()) > 1e-12 {
        return Err(Error::Domain(format!("a(0) = {} must equal 1", a[0])));
    }
    let half: F = lit(0.5);
    let mut lam = Vec::with_capacity(n);
    lam.push(cal_g[0] + a[0]);
    for m in 1..n {
        let mut conv = half * cal_w[m] * lam[0];
        for k in 1..m {
            conv = conv + cal_w[m - k] * lam[k];
        }
        lam.push((cal_g[m] + a[m] - d * conv) / (F::one() + d * half * cal_w[0]));
    }
    for (k, l) in lam.iter().enumerate() {
        let dev = to_f64((*l - F::one()).abs());
        if !dev.is_finite() || dev > 0.5 {
            return Err(Error::Admissibility(format!(
                "|Λ - 1| = {dev:.3e} at τ = {}; shrink the horizon",
                taus[k]
            )));
        }
    }
    Ok(AmplitudePath {
        taus: taus.to_vec(),
        lambda_vals: lam,
        a_vals: a.to_vec(),
        cal_w_vals: cal_w.to_vec(),
        cal_g_vals: cal_g.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedPointOptions {
    /// Intervals on the τ ladder.
    pub steps: usize,
    /// Ball radius in units of D₁.
    pub rho0: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub inner_tol: f64,
    pub inner_max: usize,
    /// Evaluate the Y norm of the fixed point (slow).
    pub report_y_norm: bool,
    pub solver: LinearSolveSpec,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            steps: 40,
            rho0: 0.1,
            tol: 1e-6,
            max_iter: 30,
            inner_tol: 1e-10,
            inner_max: 50,
            report_y_norm: false,
            solver: LinearSolveSpec::default(),
        }
    }
}

impl FixedPointOptions {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::param("construct.steps", "need at least 2 intervals"));
        }
        if !(self.rho0 > 0.0) {
            return Err(Error::param("construct.rho0", "must be positive"));
        }
        if !(self.tol > 0.0 && self.inner_tol > 0.0) {
            return Err(Error::param("construct.tol", "tolerances must be positive"));
        }
        if self.max_iter == 0 || self.inner_max == 0 {
            return Err(Error::param("construct.max_iter", "must be positive"));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardReport {
    pub iterates: usize,
    /// `|||h_{k+1} - h_k|||` per iteration.
    pub delta_norms: Vec<f64>,
    /// Geometric mean of the delta ratios after the first iteration.
    pub theta_est: f64,
    pub converged: bool,
    /// X-norm proxy of each output, compared with ρ₀.
    pub ball_norms: Vec<f64>,
    pub rho0: f64,
    /// Every iterate stayed inside the ball of radius ρ₀.
    pub in_ball: bool,
    /// Inner Λ/𝒢 sweeps per application of 𝒯.
    pub inner_sweeps: Vec<usize>,
    pub y_norm: Option<f64>,
    /// Relative size of the `𝓛_{f₀} - L` correction in the amplitude rate, `max|K| / max|𝒲|`.
    pub correction_share: f64,
}

/// Output of [`Construction::build_h1`].
#[derive(Debug, Clone)]
pub struct H1 {
    pub h1: Trajectory<f64>,
    pub cal_g: Vec<f64>,
    /// `h̃₁ - 𝒢 D₁ ξ x^{-(3+λ)/2}`
    pub r1: Trajectory<f64>,
    pub stats: StepStats,
}

/// Everything 𝒯 needs that does not depend on h.
pub struct Construction<'a> {
    pub ops: &'a CoagOps<f64>,
    pub params: ModelParams<f64>,
    pub f0: &'a Field<f64>,
    pub ev: LinearEvolution<'a, f64>,
    pub taus: Vec<f64>,
    pub psi: PsiSolution<f64>,
    pub qf0: Field<f64>,
    /// Fitted tail amplitude of f₀, the unit for all amplitudes.
    pub d1: f64,
    pub opts: FixedPointOptions,
    xi_power: Vec<f64>,
}

/// `max|½𝓛_{f₀}[f₀] - Q[f₀]| / max|Q[f₀]|`, failing above `tol`.
pub fn audit_identity<F: Real>(ops: &CoagOps<F>, f0: &Field<F>, tol: f64) -> Result<f64> {
    let q = ops.eval_q(f0)?;
    let l = ops.eval_lf0(f0, f0)?;
    let num = q.values.iter().zip(&l.values).fold(0.0f64, |m, (a, b)| m.max(to_f64(*b * lit(0.5) - *a).abs()));
    let den = to_f64(q.max_abs());
    let rel = if den == 0.0 { num } else { num / den };
    if !(rel <= tol) {
        return Err(Error::Audit(format!("½𝓛f₀[f₀] vs Q[f₀]: relative {rel:.3e} above {tol:.1e}")));
    }
    Ok(rel)
}

fn diff(a: &Trajectory<f64>, b: &Trajectory<f64>) -> Result<Trajectory<f64>> {
    let slices = a.slices.iter().zip(&b.slices).map(|(x, y)| x.axpy(-1.0, y)).collect();
    Trajectory::new(a.times.clone(), slices)
}

impl<'a> Construction<'a> {
    pub fn new(
        ops: &'a CoagOps<f64>,
        params: ModelParams<f64>,
        f0: &'a Field<f64>,
        opts: FixedPointOptions,
    ) -> Result<Self> {
        params.validate()?;
        opts.validate()?;
        audit_identity(ops, f0, 1e-8)?;
        let grid = ops.grid().clone();
        let (wa, wb) = tail_window(&grid);
        let model = two_term(params.lambda, params.delta_bar);
        let d1 = tail_fit(f0, wa, wb, model)?.amplitude;
        if !(d1 > 0.0) {
            return Err(Error::Extraction(format!("tail amplitude of f₀ is {d1}")));
        }
        let ev = LinearEvolution::new(ops, Generator::Linearized(f0))?;
        let taus = uniform_ladder(params.t_horizon, opts.steps);
        let psi = solve_psi(
            &ev,
            f0,
            &taus,
            &opts.solver,
            PsiOptions { lambda: params.lambda, delta_bar: params.delta_bar, d1 },
        )?;
        let qf0 = ops.eval_q(f0)?;
        let p = params.tail_exponent();
        let xi_power = grid.nodes().iter().map(|&x| cutoff_xi(x).unwrap() * x.powf(-p)).collect();
        Ok(Construction { ops, params, f0, ev, taus, psi, qf0, d1, opts, xi_power })
    }

    /// `|||·|||_{3/2, p̄}`, the stopping-rule norm.
    pub fn sup_norm(&self, h: &Trajectory<f64>) -> Result<f64> {
        Ok(space_norm(h, SpaceKind::TripleQp, 1.5, self.params.p_bar(), self.params.sigma, self.params.lambda)?.value)
    }

    /// `‖·‖_{X_{3/2, p̄}}`, the ball-membership proxy.
    pub fn ball_norm(&self, h: &Trajectory<f64>) -> Result<f64> {
        Ok(space_norm(h, SpaceKind::Xqp, 1.5, self.params.p_bar(), self.params.sigma, self.params.lambda)?.value)
    }

    pub fn zero(&self) -> Result<Trajectory<f64>> {
        let z = Field::zeros(self.ops.grid().clone());
        Trajectory::new(self.taus.clone(), vec![z; self.taus.len()])
    }

    fn check_ladder(&self, h: &Trajectory<f64>) -> Result<()> {
        if h.times.len() != self.taus.len() || h.times.iter().zip(&self.taus).any(|(a, b)| (a - b).abs() > 1e-14) {
            return Err(Error::Domain("trajectory is not sampled on the construction's τ ladder".into()));
        }
        if !crate::evolution::shared_grid(h.grid(), self.ops.grid()) {
            return Err(Error::Domain("trajectory lives on a different grid".into()));
        }
        Ok(())
    }

    fn q_slices(&self, h: &Trajectory<f64>) -> Result<Vec<Field<f64>>> {
        h.slices.iter().map(|s| self.ops.eval_q(s)).collect()
    }

    /// h̃₁ with source `Q[h]/Λ + ΛQ[f₀]`, its amplitude 𝒢 and remainder r₁.
    pub fn build_h1(&self, h: &Trajectory<f64>, lam: &[f64]) -> Result<H1> {
        self.check_ladder(h)?;
        let qh = self.q_slices(h)?;
        self.h1_from(&qh, lam)
    }

    fn h1_from(&self, qh: &[Field<f64>], lam: &[f64]) -> Result<H1> {
        if lam.len() != self.taus.len() {
            return Err(Error::Domain("Λ is not sampled on the τ ladder".into()));
        }
        let mu: Vec<Field<f64>> =
            qh.iter().zip(lam).map(|(q, &l)| q.scaled(1.0 / l).axpy(l, &self.qf0)).collect();
        let mu = Trajectory::new(self.taus.clone(), mu)?;
        let (h1, _, stats) = self.ev.solve(None, &source_from(&mu), &self.taus, &self.opts.solver, false)?;
        let grid = self.ops.grid().clone();
        let (wa, wb) = tail_window(&grid);
        let model = two_term(self.params.lambda, self.params.delta_bar);
        let mut cal_g = vec![0.0; self.taus.len()];
        let mut r1 = Vec::with_capacity(self.taus.len());
        for (k, s) in h1.slices.iter().enumerate() {
            if k > 0 {
                let fit = tail_fit(s, wa, wb, model)?;
                if fit.r_squared < 0.99 {
                    return Err(Error::Extraction(format!(
                        "tail of h̃₁ at τ = {}: R² = {:.4}",
                        self.taus[k], fit.r_squared
                    )));
                }
                cal_g[k] = fit.amplitude / self.d1;
            }
            let v = s.values.iter().zip(&self.xi_power).map(|(v, e)| v - cal_g[k] * self.d1 * e).collect();
            r1.push(Field::new(grid.clone(), v)?);
        }
        Ok(H1 { h1, cal_g, r1: Trajectory::new(self.taus.clone(), r1)?, stats })
    }

    /// `h̃₂ = -Λf₀ + ψ - ∫₀^τ w(τ-s)Λ(s) ds`, trapezoid in s.
    pub fn build_h2(&self, lam: &[f64]) -> Result<Trajectory<f64>> {
        if lam.len() != self.taus.len() || self.psi.psi.times.len() != self.taus.len() {
            return Err(Error::Domain("τ ladders of Λ and ψ do not match".into()));
        }
        let d = uniform_step(&self.taus)?;
        let n = self.ops.grid().len();
        let w = &self.psi.w.slices;
        let mut out = Vec::with_capacity(lam.len());
        for m in 0..lam.len() {
            let mut v: Vec<f64> = (0..n).map(|i| self.psi.psi.slices[m].values[i] - lam[m] * self.f0.values[i]).collect();
            if m > 0 {
                for k in 0..=m {
                    let c = if k == 0 || k == m { 0.5 } else { 1.0 } * d * lam[k];
                    let wk = &w[m - k].values;
                    for i in 0..n {
                        v[i] -= c * wk[i];
                    }
                }
            }
            out.push(Field::new(self.ops.grid().clone(), v)?);
        }
        Trajectory::new(self.taus.clone(), out)
    }

    /// 𝒯[h] with Λ seeded at 1.
    pub fn t_operator(&self, h: &Trajectory<f64>) -> Result<(Trajectory<f64>, AmplitudePath<f64>, usize)> {
        self.check_ladder(h)?;
        self.t_seeded(h, vec![1.0; self.taus.len()])
    }

    fn t_seeded(&self, h: &Trajectory<f64>, mut lam: Vec<f64>) -> Result<(Trajectory<f64>, AmplitudePath<f64>, usize)> {
        let qh = self.q_slices(h)?;
        for sweep in 1..=self.opts.inner_max {
            let h1 = self.h1_from(&qh, &lam)?;
            let path = solve_volterra(&self.taus, &self.psi.a_path, &self.psi.cal_w, &h1.cal_g)?;
            let change = path.lambda_vals.iter().zip(&lam).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            lam.clone_from(&path.lambda_vals);
            if change < self.opts.inner_tol {
                let h2 = self.build_h2(&path.lambda_vals)?;
                let slices = h1.h1.slices.iter().zip(&h2.slices).map(|(a, b)| a.axpy(1.0, b)).collect();
                return Ok((Trajectory::new(self.taus.clone(), slices)?, path, sweep));
            }
        }
        Err(Error::NoConvergence(format!("Λ/𝒢 sweeps exceeded {}", self.opts.inner_max)))
    }

    /// Iterates `h ← 𝒯[h]` from `h = 0`.
    pub fn picard_solve(&self) -> Result<(Trajectory<f64>, AmplitudePath<f64>, PicardReport)> {
        let rho = self.opts.rho0 * self.d1;
        let mut h = self.zero()?;
        let mut lam = vec![1.0; self.taus.len()];
        let mut report = PicardReport {
            iterates: 0,
            delta_norms: Vec::new(),
            theta_est: f64::NAN,
            converged: false,
            ball_norms: Vec::new(),
            rho0: rho,
            in_ball: true,
            inner_sweeps: Vec::new(),
            y_norm: None,
            correction_share: {
                let k = self.psi.k_coeff.abs();
                k / self.psi.cal_w.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE)
            },
        };
        for _ in 0..self.opts.max_iter {
            let (hn, path, sweeps) = self.t_seeded(&h, lam.clone())?;
            let delta = self.sup_norm(&diff(&hn, &h)?)?;
            let size = self.ball_norm(&hn)?;
            report.iterates += 1;
            report.delta_norms.push(delta);
            report.ball_norms.push(size);
            report.in_ball &= size <= rho;
            report.inner_sweeps.push(sweeps);
            report.theta_est = theta(&report.delta_norms);
            h = hn;
            lam = path.lambda_vals.clone();
            if delta <= self.opts.tol {
                report.converged = report.iterates < 3 || report.theta_est < 1.0;
                if self.opts.report_y_norm {
                    let y = space_norm(&h, SpaceKind::YqpSigma, 1.5, self.params.p_bar(), self.params.sigma, self.params.lambda)?;
                    report.y_norm = Some(y.value);
                }
                return Ok((h, path, report));
            }
        }
        Err(Error::NoConvergence(format!(
            "Picard: {} iterations, last delta {:.3e}, θ ≈ {:.3}; shrink the horizon",
            report.iterates,
            report.delta_norms.last().copied().unwrap_or(f64::NAN),
            report.theta_est
        )))
    }

    /// `f = Λf₀ + h` on the t ladder given by `t(τ) = ∫dς/Λ`.
    pub fn assemble_solution(
        &self,
        h: &Trajectory<f64>,
        path: &AmplitudePath<f64>,
    ) -> Result<(Trajectory<f64>, GelDiagnostics)> {
        self.check_ladder(h)?;
        let t = path.time_map();
        let slices: Vec<Field<f64>> =
            h.slices.iter().zip(&path.lambda_vals).map(|(s, &l)| s.axpy(l, self.f0)).collect();
        let f = Trajectory::new(t.clone(), slices)?;
        let mut diag = GelDiagnostics { times: t.clone(), ..Default::default() };
        let (wa, wb) = tail_window(self.ops.grid());
        let model = two_term(self.params.lambda, self.params.delta_bar);
        for s in &f.slices {
            diag.mass_m1.push(moment(s, 1.0).value);
            diag.tail_amp.push(tail_fit(s, wa, wb, model)?.amplitude);
            diag.tail_exp.push(-self.params.tail_exponent());
        }
        diag.gel_flux = derivative(&t, &diag.mass_m1).into_iter().map(|d| -d).collect();
        Ok((f, diag))
    }
}

fn theta(d: &[f64]) -> f64 {
    if d.len() < 3 || d[1] <= 0.0 {
        return f64::NAN;
    }
    let last = *d.last().unwrap();
    if last <= 0.0 {
        return 0.0;
    }
    (last / d[1]).powf(1.0 / (d.len() - 2) as f64)
}

/// Three-point derivative on a non-uniform ladder, one-sided at the ends.
pub fn derivative(t: &[f64], v: &[f64]) -> Vec<f64> {
    let n = t.len();
    if n < 2 {
        return vec![0.0; n];
    }
    if n == 2 {
        let d = (v[1] - v[0]) / (t[1] - t[0]);
        return vec![d, d];
    }
    (0..n)
        .map(|k| {
            if k == 0 {
                let (h0, h1) = (t[1] - t[0], t[2] - t[1]);
                -(2.0 * h0 + h1) / (h0 * (h0 + h1)) * v[0] + (h0 + h1) / (h0 * h1) * v[1] - h0 / (h1 * (h0 + h1)) * v[2]
            } else if k == n - 1 {
                let (h0, h1) = (t[k - 1] - t[k - 2], t[k] - t[k - 1]);
                h1 / (h0 * (h0 + h1)) * v[k - 2] - (h0 + h1) / (h0 * h1) * v[k - 1] + (2.0 * h1 + h0) / (h1 * (h0 + h1)) * v[k]
            } else {
                let (h0, h1) = (t[k] - t[k - 1], t[k + 1] - t[k]);
                (-h1 / (h0 * (h0 + h1))) * v[k - 1] + ((h1 - h0) / (h0 * h1)) * v[k] + (h0 / (h1 * (h0 + h1))) * v[k + 1]
            }
        })
        .collect()
}

/// `|||f_t - Q[f]||| / |||Q[f]|||` at interior nodes with `t ≥ t_from` and `x ≤ x_hi`, weights `x^{3/2}` below 1 and `x^{p}` above.
/// The top nodes are excluded because the discrete `Q` loses the far-field partners at the box edge.
pub fn equation_residual(ops: &CoagOps<f64>, f: &Trajectory<f64>, t_from: f64, p: f64, x_hi: f64) -> Result<Vec<(f64, f64)>> {
    let x = ops.grid().nodes();
    let top = x.iter().take_while(|&&v| v <= x_hi).count();
    if top == 0 {
        return Err(Error::Domain(format!("residual cut {x_hi} lies below the grid")));
    }
    let w: Vec<f64> = x.iter().map(|&x| if x <= 1.0 { x.powf(1.5) } else { x.powf(p) }).collect();
    let t = &f.times;
    let mut out = Vec::new();
    for k in 1..t.len().saturating_sub(1) {
        if t[k] < t_from {
            continue;
        }
        let q = ops.eval_q(&f.slices[k])?;
        let (h0, h1) = (t[k] - t[k - 1], t[k + 1] - t[k]);
        let (c0, c1, c2) = (-h1 / (h0 * (h0 + h1)), (h1 - h0) / (h0 * h1), h0 / (h1 * (h0 + h1)));
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for i in 0..top {
            let ft = c0 * f.slices[k - 1].values[i] + c1 * f.slices[k].values[i] + c2 * f.slices[k + 1].values[i];
            num = num.max(w[i] * (ft - q.values[i]).abs());
            den = den.max(w[i] * q.values[i].abs());
        }
        out.push((t[k], num / den.max(f64::MIN_POSITIVE)));
    }
    Ok(out)
}
