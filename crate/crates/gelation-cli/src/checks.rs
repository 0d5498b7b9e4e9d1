//! Quick identity checks behind `gelation validate`, on small grids.

use std::sync::Arc;

use gelation::coagops::{CoagOps, Kernel, QuadratureSpec};
use gelation::directsim::simulate_direct;
use gelation::evolution::{two_term, uniform_ladder, LinearSolveSpec};
use gelation::gelfix::{audit_identity, derivative, solve_volterra};
use gelation::mellin::psi_profile;
use gelation::model::{initial_data, Field, LogGrid, ModelParams, RemainderMode, Trajectory};
use gelation::norms::{local_norm, space_norm, tail_fit, w_weight_audit, LocalKind, SpaceKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::run::Log;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

type Outcome = gelation::Result<(bool, String)>;

fn grid(n: usize) -> gelation::Result<Arc<LogGrid<f64>>> {
    LogGrid::new(1.0 / 64.0, 16384.0, n).map(Arc::new)
}

fn power_ops(lambda: f64, n: usize) -> gelation::Result<CoagOps<f64>> {
    CoagOps::new(grid(n)?, Kernel::Power { lambda }, QuadratureSpec::default())
}

fn annihilation(lambda: f64) -> Outcome {
    let p = (3.0 + lambda) / 2.0;
    let r = (lambda - 1.0) / 2.0;
    let ops = power_ops(lambda, 2048)?;
    let f = Field::from_fn(ops.grid().clone(), |x: f64| x.powf(-p));
    let l = ops.eval_lf0(&f, &f)?;
    let worst = ops
        .grid()
        .nodes()
        .iter()
        .zip(&l.values)
        .filter(|(x, _)| **x >= 1.0 && **x <= 100.0)
        .map(|(x, v)| x.powf(p + r) * v.abs())
        .fold(0.0, f64::max);
    Ok((worst <= 1e-3, format!("weighted residual {worst:.2e} on [1, 100]")))
}

fn operator_identity(p: &ModelParams<f64>) -> Outcome {
    let ops = power_ops(p.lambda, 1024)?;
    let f0 = initial_data(p, ops.grid().clone(), &RemainderMode::Default)?;
    let rel = audit_identity(&ops, &f0, 1e-8)?;
    Ok((true, format!("relative L∞ {rel:.2e}")))
}

fn bracket() -> Outcome {
    let g = grid(2048)?;
    let ops = CoagOps::new(g.clone(), Kernel::Power { lambda: 1.5 }, QuadratureSpec::default())?;
    let u = Field::from_fn(g.clone(), |x: f64| x.powf(-1.5));
    let b = ops.half_bracket(&u, &u)?;
    let worst = g
        .nodes()
        .iter()
        .zip(&b.values)
        .filter(|(x, _)| **x >= 1.0 && **x <= 100.0)
        .map(|(x, v)| (v / (2f64.powf(1.5) * x.powi(-2)) - 1.0).abs())
        .fold(0.0, f64::max);
    Ok((worst <= 1e-6, format!("max relative error {worst:.2e} on [1, 100]")))
}

fn linearisation_kills_power_law() -> Outcome {
    let ops = power_ops(1.5, 2048)?;
    let h = Field::from_fn(ops.grid().clone(), |x: f64| x.powf(-2.25));
    let l = ops.eval_l(&h)?;
    let worst = ops
        .grid()
        .nodes()
        .iter()
        .zip(&l.values)
        .filter(|(x, _)| **x >= 1.0 && **x <= 100.0)
        .map(|(x, v)| x.powf(2.5) * v.abs())
        .fold(0.0, f64::max);
    Ok((worst <= 1e-3, format!("weighted residual {worst:.2e} on [1, 100]")))
}

fn constant_kernel() -> gelation::Result<(f64, f64)> {
    let g = Arc::new(LogGrid::new(1e-4, 200.0, 512)?);
    let ops = CoagOps::new(g.clone(), Kernel::Constant { c: 2.0 }, QuadratureSpec::default())?;
    let f0 = Field::from_fn(g.clone(), |x: f64| (-x).exp());
    let spec = LinearSolveSpec { dt_init: 0.01, ..Default::default() };
    let run = simulate_direct(&ops, &f0, &[0.0, 0.5, 1.0], &spec)?;
    let f1 = run.trajectory.slices.last().unwrap();
    let err = g
        .nodes()
        .iter()
        .zip(&f1.values)
        .filter(|(x, _)| **x >= 0.1 && **x <= 20.0)
        .map(|(x, v)| (v / (0.25 * (-x / 2.0).exp()) - 1.0).abs())
        .fold(0.0, f64::max);
    let m = &run.diagnostics.mass_m1;
    Ok((err, (m.last().unwrap() - m[0]).abs() / m[0]))
}

fn gel_flux_positive(p: &ModelParams<f64>) -> Outcome {
    let ops = power_ops(p.lambda, 1024)?;
    let f0 = initial_data(p, ops.grid().clone(), &RemainderMode::Default)?;
    let q = ops.gel_flux(&f0)?;
    Ok((q > 0.0, format!("gel flux of f₀ {q:.4}")))
}

fn gel_flux_compact() -> Outcome {
    let ops = power_ops(1.5, 1024)?;
    let cut = ops.grid().x_max() / 4.0;
    let f = Field::from_fn(ops.grid().clone(), |x: f64| if x < cut / 2.0 { (-x).exp() } else { 0.0 });
    let q = ops.gel_flux(&f)?;
    Ok((q.abs() <= 1e-14, format!("gel flux {q:.2e}")))
}

fn boundary_profile() -> Outcome {
    let exact = 2.0 / std::f64::consts::PI * (-std::f64::consts::PI).exp();
    let rel = (psi_profile(1.0) - exact).abs() / exact;
    let neg = [-1.0, -5.0, f64::NEG_INFINITY].iter().all(|&c| psi_profile(c) == 0.0);
    Ok((rel <= 1e-10 && neg, format!("Ψ(1) relative error {rel:.1e}, zero for χ < 0: {neg}")))
}

fn volterra_decay() -> Outcome {
    let m = 1000;
    let t: Vec<f64> = uniform_ladder(0.2, m);
    let path = solve_volterra(&t, &vec![1.0; m + 1], &vec![1.0; m + 1], &vec![0.0; m + 1])?;
    let err = t.iter().zip(&path.lambda_vals).map(|(t, l)| (l - (-t).exp()).abs()).fold(0.0, f64::max);
    Ok((err <= 1e-6, format!("max error against e^(-τ) {err:.2e}")))
}

fn volterra_order() -> Outcome {
    let err = |m: usize| -> gelation::Result<f64> {
        let t: Vec<f64> = uniform_ladder(1.0, m);
        let w: Vec<f64> = t.iter().map(|s| (-s).exp()).collect();
        let g: Vec<f64> = t.iter().map(|s| s.sin()).collect();
        let path = solve_volterra(&t, &vec![1.0; m + 1], &w, &g)?;
        Ok(*path.lambda_vals.last().unwrap())
    };
    let (a, b, c) = (err(50)?, err(100)?, err(200)?);
    let ratio = (a - b) / (b - c);
    Ok(((ratio - 4.0).abs() <= 0.2, format!("self-convergence ratio {ratio:.3} (second order gives 4)")))
}

fn unit_field_norm() -> Outcome {
    let g = Arc::new(LogGrid::new(1e-2, 1e4, 600)?);
    let one = Field::from_fn(g.clone(), |_| 1.0);
    let traj = Trajectory::new(vec![0.0, 2.0], vec![one.clone(), one])?;
    let mut worst = 0.0f64;
    for r in [1.0, 8.0, 100.0] {
        let v = local_norm(&traj, LocalKind::N2sigma, 0.5, r, 0.0, 1.5)?.value;
        worst = worst.max((v - 1.5f64.sqrt()).abs());
    }
    Ok((worst <= 1e-9, format!("max |N - √(3/2)| {worst:.1e}")))
}

fn w_weight() -> Outcome {
    let lattice: Vec<f64> = (0..100).map(|i| -50.0 + i as f64 + 0.5).collect();
    let pairs: Vec<(f64, f64)> = lattice.iter().flat_map(|&a| lattice.iter().map(move |&b| (a, b))).collect();
    let c = [1.0, 10.0, 100.0].iter().map(|&r| w_weight_audit(r, &pairs)).fold(0.0, f64::max);
    Ok((c <= 2.0, format!("C = {c:.3}")))
}

fn homogeneity(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Arc::new(LogGrid::new(1e-2, 1e4, 400)?);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let c: [f64; 3] = [rng.gen_range(0.5..2.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..3.0)];
        let f = Field::from_fn(g.clone(), |x: f64| (c[0] + c[1] * (x.ln() - c[2]).sin()) * x.powf(-1.5));
        let a = rng.gen_range(-3.0..3.0);
        let traj = Trajectory::new(vec![0.0, 1.0], vec![f.clone(), f.clone()])?;
        let scaled = Trajectory::new(vec![0.0, 1.0], vec![f.scaled(a), f.scaled(a)])?;
        let n1 = space_norm(&traj, SpaceKind::TripleQp, 1.5, 2.4, 1.5, 1.5)?.value;
        let n2 = space_norm(&scaled, SpaceKind::TripleQp, 1.5, 2.4, 1.5, 1.5)?.value;
        worst = worst.max((n2 - a.abs() * n1).abs() / n1);
    }
    Ok((worst <= 1e-9, format!("relative defect {worst:.1e} (seed {seed})")))
}

fn tail_fit_recovers_amplitudes() -> Outcome {
    let g = grid(2048)?;
    let f = Field::from_fn(g.clone(), |x: f64| 0.7 * x.powf(-2.25) - 0.3 * x.powf(-2.4));
    let fit = tail_fit(&f, 163.84, 1638.4, two_term(1.5, 0.15))?;
    let e0 = (fit.amplitude - 0.7).abs();
    let e1 = (fit.second_amplitude.unwrap_or(f64::NAN) + 0.3).abs();
    Ok((e0 <= 1e-8 && e1 <= 1e-8, format!("amplitude errors {e0:.1e}, {e1:.1e}")))
}

fn derivative_quadratic() -> Outcome {
    let t: Vec<f64> = (0..12).map(|k| (k as f64 * 0.3).powf(1.3)).collect();
    let v: Vec<f64> = t.iter().map(|s| 2.0 - s + 0.5 * s * s).collect();
    let d = derivative(&t, &v);
    let err = t.iter().zip(&d).map(|(s, d)| (d - (s - 1.0)).abs()).fold(0.0, f64::max);
    Ok((err <= 1e-10, format!("max error {err:.1e}")))
}

fn csv_round_trip(p: &ModelParams<f64>) -> Outcome {
    let g = grid(256)?;
    let f0 = initial_data(p, g.clone(), &RemainderMode::Default)?;
    let traj = Trajectory::new(vec![0.0, 0.1], vec![f0.clone(), f0.scaled(0.5)])?;
    let mut buf = Vec::new();
    traj.write_csv(&mut buf)?;
    let back: Trajectory<f64> = Trajectory::read_csv(buf.as_slice())?;
    let same = back.times == traj.times && back.slices.iter().zip(&traj.slices).all(|(a, b)| a.values == b.values);
    let detail = if same { "tau,x,f round trip is bit-exact" } else { "round trip changed the data" };
    Ok((same, detail.to_string()))
}

pub fn run_all(cfg: &RunConfig, log: Log) -> Vec<CheckResult> {
    let params = cfg.model_params().unwrap_or_else(|_| ModelParams::with_lambda(1.5).expect("default λ"));
    let seed = cfg.seed;
    let checks: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("power-law annihilation λ=1.2", Box::new(|| annihilation(1.2))),
        ("power-law annihilation λ=1.5", Box::new(|| annihilation(1.5))),
        ("power-law annihilation λ=1.8", Box::new(|| annihilation(1.8))),
        ("½𝓛_f0[f0] = Q[f0]", Box::new(|| operator_identity(&params))),
        ("bracket closed form", Box::new(bracket)),
        ("L annihilates the power law", Box::new(linearisation_kills_power_law)),
        (
            "constant kernel closed form",
            Box::new(|| constant_kernel().map(|(e, d)| (e <= 1e-3 && d <= 1e-6, format!("relative L∞ {e:.2e}, M1 drift {d:.2e}")))),
        ),
        ("gel flux of f₀ positive", Box::new(|| gel_flux_positive(&params))),
        ("no flux from compact data", Box::new(gel_flux_compact)),
        ("Ψ(1) and Ψ(χ<0)", Box::new(boundary_profile)),
        ("Volterra e^(-τ)", Box::new(volterra_decay)),
        ("Volterra second order", Box::new(volterra_order)),
        ("N(1) = √(3/2)", Box::new(unit_field_norm)),
        ("W_R inequality", Box::new(w_weight)),
        ("norm homogeneity", Box::new(move || homogeneity(seed))),
        ("two-term tail fit", Box::new(tail_fit_recovers_amplitudes)),
        ("three-point derivative", Box::new(derivative_quadratic)),
        ("trajectory CSV round trip", Box::new(|| csv_round_trip(&params))),
    ];
    checks
        .into_iter()
        .map(|(name, f)| {
            log.info(format!("check: {name}"));
            let (pass, detail) = match f() {
                Ok(r) => r,
                Err(e) => (false, e.to_string()),
            };
            CheckResult { name: name.to_string(), pass, detail }
        })
        .collect()
}
