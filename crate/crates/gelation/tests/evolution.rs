use std::sync::{Arc, OnceLock};

use gelation::coagops::{CoagOps, Kernel, QuadratureSpec};
use gelation::evolution::{
    i_functional, solve_linear, solve_psi, source_from, uniform_ladder, Duhamel, DuhamelOptions, Generator,
    LinearEvolution, LinearSolveSpec, PsiOptions,
};
use gelation::mellin::{MellinEngine, MellinOptions};
use gelation::model::{cutoff_xi, initial_data, pure_power, Field, LogGrid, ModelParams, RemainderMode, Trajectory};
use proptest::prelude::*;

fn engine() -> &'static MellinEngine {
    static E: OnceLock<MellinEngine> = OnceLock::new();
    E.get_or_init(|| MellinEngine::new(1.5, MellinOptions::default()).unwrap())
}

fn wide_grid() -> Arc<LogGrid<f64>> {
    static G: OnceLock<Arc<LogGrid<f64>>> = OnceLock::new();
    G.get_or_init(|| Arc::new(LogGrid::new(1e-3, 1e5, 1100).unwrap())).clone()
}

fn tables() -> &'static Duhamel {
    static D: OnceLock<Duhamel> = OnceLock::new();
    D.get_or_init(|| Duhamel::new(engine(), &wide_grid(), 0.05, 1.0, DuhamelOptions::default()).unwrap())
}

fn bump(g: &Arc<LogGrid<f64>>, at: f64, w: f64) -> Field<f64> {
    Field::from_fn(g.clone(), |x: f64| (-((x / at).ln()).powi(2) / (2.0 * w * w)).exp() / x)
}

fn constant_source(f: &Field<f64>, times: &[f64]) -> Trajectory<f64> {
    Trajectory::new(times.to_vec(), times.iter().map(|_| f.clone()).collect()).unwrap()
}

/// `∫|a-b| x dx / ∫|b| x dx` over `[lo, hi]`.
fn mass_l1(g: &LogGrid<f64>, a: &[f64], b: &[f64], lo: f64, hi: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (k, x) in g.nodes().iter().enumerate() {
        if *x >= lo && *x <= hi {
            num += (a[k] - b[k]).abs() * x * x;
            den += b[k].abs() * x * x;
        }
    }
    num / den
}

fn small_ops() -> CoagOps<f64> {
    let g = Arc::new(LogGrid::new(1.0 / 64.0, 4096.0, 512).unwrap());
    CoagOps::new(g, Kernel::Power { lambda: 1.5 }, QuadratureSpec::default()).unwrap()
}

#[test]
fn zero_source_gives_zero() {
    let ops = small_ops();
    let p = ModelParams::with_lambda(1.5).unwrap();
    let f0 = initial_data(&p, ops.grid().clone(), &RemainderMode::Default).unwrap();
    let times = uniform_ladder(0.05, 5);
    let mu = constant_source(&Field::zeros(ops.grid().clone()), &times);
    let h = solve_linear(&ops, &f0, &mu, &LinearSolveSpec::default()).unwrap();
    assert!(h.slices.iter().all(|s| s.values.iter().all(|v| *v == 0.0)));
    let g = wide_grid();
    let z = constant_source(&Field::zeros(g.clone()), &uniform_ladder(0.5, 10));
    assert!(tables().eval(&z, 0.5).unwrap().values.iter().all(|v| *v == 0.0));
    assert_eq!(tables().i_functional(&z, 0.5).unwrap(), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]
    #[test]
    fn solve_linear_superposes(a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let ops = small_ops();
        let g = ops.grid().clone();
        let p = ModelParams::with_lambda(1.5).unwrap();
        let f0 = initial_data(&p, g.clone(), &RemainderMode::Default).unwrap();
        let times = uniform_ladder(0.02, 4);
        let (u, v) = (bump(&g, 1.0, 0.2), bump(&g, 10.0, 0.3));
        let spec = LinearSolveSpec::default();
        let hu = solve_linear(&ops, &f0, &constant_source(&u, &times), &spec).unwrap();
        let hv = solve_linear(&ops, &f0, &constant_source(&v, &times), &spec).unwrap();
        let hw = solve_linear(&ops, &f0, &constant_source(&u.scaled(a).axpy(b, &v), &times), &spec).unwrap();
        let last = times.len() - 1;
        let scale = hw.slices[last].max_abs().max(1e-300);
        for i in 0..g.len() {
            let want = a * hu.slices[last].values[i] + b * hv.slices[last].values[i];
            prop_assert!((hw.slices[last].values[i] - want).abs() <= 1e-9 * scale.max(want.abs()));
        }
    }
}

#[test]
fn impulse_source_reproduces_fundamental_solution() {
    let g = wide_grid();
    let x0: f64 = 4.0;
    let eps = 0.01;
    let b = bump(&g, x0, 0.03);
    let mass: f64 = b.values.iter().zip(g.nodes()).map(|(v, x)| v * x * g.log_step()).sum();
    // triangle in time of area eps/2 at s = 0
    let times = vec![0.0, eps, 0.5];
    let slices = vec![b.clone(), Field::zeros(g.clone()), Field::zeros(g.clone())];
    let src = Trajectory::new(times, slices).unwrap();
    let tau = 0.5;
    let j = tables().eval(&src, tau).unwrap();
    let kappa = engine().kappa;
    let tab = engine().g_table(tau * x0.powf(kappa), 14.0, 0.0).unwrap();
    let want: Vec<f64> = g.nodes().iter().map(|x| 0.5 * eps * mass * tab.at((x / x0).ln()) / x0).collect();
    let err = mass_l1(&g, &j.values, &want, 4e-2, 4e2);
    assert!(err < 0.05, "relative L¹ {err}");
}

#[test]
fn duhamel_agrees_with_time_domain_solve() {
    let g = wide_grid();
    let ops = CoagOps::new(g.clone(), Kernel::Power { lambda: 1.5 }, QuadratureSpec::default()).unwrap();
    let times = uniform_ladder(1.0, 20);
    let src = constant_source(&bump(&g, 1.0, 0.1), &times);
    let j = tables().eval(&src, 1.0).unwrap();
    // 𝓛 about the sampled pure power law equals L up to quadrature error
    let p = ModelParams::with_lambda(1.5).unwrap();
    let f0 = pure_power(&p, g.clone());
    let td = solve_linear(&ops, &f0, &src, &LinearSolveSpec::default()).unwrap();
    let err = mass_l1(&g, &j.values, &td.slices[20].values, 1e-2, 1e2);
    assert!(err < 0.05, "Duhamel vs solve_linear: {err}");
    let ev = LinearEvolution::new(&ops, Generator::Model).unwrap();
    let (tm, _, _) = ev.solve(None, &source_from(&src), &times, &LinearSolveSpec::default(), false).unwrap();
    let err_model = mass_l1(&g, &j.values, &tm.slices[20].values, 1e-2, 1e2);
    assert!(err_model < 0.02, "Duhamel vs model solve: {err_model}");
}

#[test]
fn duhamel_tail_plateau_matches_amplitude_functional() {
    let g = wide_grid();
    let times = uniform_ladder(1.0, 20);
    let src = constant_source(&bump(&g, 1.0, 0.1), &times);
    let j = tables().eval(&src, 1.0).unwrap();
    let i = tables().i_functional(&src, 1.0).unwrap();
    let k = g.nodes().iter().position(|x| *x >= 1e3).unwrap();
    let x = g.nodes()[k];
    let plateau = j.values[k] * x.powf(engine().xs);
    assert!((plateau / i - 1.0).abs() < 0.05, "plateau {plateau} vs I {i}");
}

fn x_norm_source() -> (Arc<LogGrid<f64>>, Trajectory<f64>, Duhamel) {
    let g = Arc::new(LogGrid::new(1e-2, 1e8, 1200).unwrap());
    let f = Field::from_fn(g.clone(), |x: f64| cutoff_xi(x).unwrap() * x.powf(-2.15));
    let times = uniform_ladder(0.4, 64);
    let d = Duhamel::amplitude_only(engine(), &g, 0.4 / 64.0, 0.4, DuhamelOptions::default()).unwrap();
    (g, constant_source(&f, &times), d)
}

#[test]
fn amplitude_functional_time_scaling() {
    // F = ξ x^{-(2+δ̄)} with δ̄ = 0.15 has unit X-norm; exponent 2δ̄/(λ-1) = 0.6
    let (_, src, d) = x_norm_source();
    let c: Vec<f64> = [0.025, 0.05, 0.1, 0.2, 0.4].iter().map(|&t| d.i_functional(&src, t).unwrap() / t.powf(0.6)).collect();
    let (lo, hi) = c.iter().fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
    assert!(lo > 0.0 && hi / lo < 1.5, "{c:?}");
}

#[test]
fn amplitude_functional_hoelder() {
    let (_, src, d) = x_norm_source();
    let consts: Vec<f64> = [4usize, 8, 16]
        .iter()
        .map(|&m| {
            let dt = 0.4 / m as f64;
            let v: Vec<f64> = (0..=m).map(|k| d.i_functional(&src, k as f64 * dt).unwrap()).collect();
            v.windows(2).map(|w| (w[1] - w[0]).abs() / dt.powf(0.6)).fold(0.0, f64::max)
        })
        .collect();
    // the constant must not grow as the step halves
    assert!(consts.windows(2).all(|w| w[1] <= 1.1 * w[0]), "{consts:?}");
}

#[test]
fn one_off_helpers_agree_with_tables() {
    let g = Arc::new(LogGrid::new(1e-2, 1e4, 400).unwrap());
    let times = uniform_ladder(0.2, 4);
    let src = constant_source(&bump(&g, 1.0, 0.2), &times);
    let d = Duhamel::amplitude_only(engine(), &g, 0.05, 0.2, DuhamelOptions::default()).unwrap();
    let a = d.i_functional(&src, 0.2).unwrap();
    let b = i_functional(0.2, &src, engine()).unwrap();
    assert!((a - b).abs() <= 1e-12 * a.abs());
    assert!(d.eval(&src, 0.2).is_err());
}

#[test]
fn psi_amplitude_rate_matches_tail_of_w() {
    let g = Arc::new(LogGrid::new(1.0 / 64.0, 16384.0, 1024).unwrap());
    let ops = CoagOps::new(g.clone(), Kernel::Power { lambda: 1.5 }, QuadratureSpec::default()).unwrap();
    let p = ModelParams::with_lambda(1.5).unwrap();
    let f0 = initial_data(&p, g.clone(), &RemainderMode::Default).unwrap();
    let ev = LinearEvolution::new(&ops, Generator::Linearized(&f0)).unwrap();
    let times = uniform_ladder(0.05, 10);
    let opts = PsiOptions { lambda: 1.5, delta_bar: p.delta_bar, d1: p.d1 };
    let sol = solve_psi(&ev, &f0, &times, &LinearSolveSpec::default(), opts).unwrap();
    assert_eq!(sol.a_path[0], 1.0);
    for k in 1..times.len() {
        let da = (sol.a_path[k] - sol.a_path[k - 1]) / (times[k] - times[k - 1]);
        let mid = 0.5 * (sol.cal_w[k] + sol.cal_w[k - 1]);
        assert!((da - mid).abs() <= 1e-3 * sol.cal_w[0].abs().max(1.0), "step {k}: {da} vs {mid}");
    }
    // ψ(0) = f₀
    assert_eq!(sol.psi.slices[0].values, f0.values);
}
