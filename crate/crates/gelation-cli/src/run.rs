//! The pipelines behind each subcommand. Each writes its artifacts plus `manifest.json`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gelation::coagops::Kernel;
use gelation::directsim::simulate_direct;
use gelation::gelfix::{equation_residual, Construction};
use gelation::mellin::MellinEngine;
use gelation::model::{initial_data, pure_power, Field, RemainderMode, Trajectory};
use gelation::norms::{local_norm, space_norm};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::checks;
use crate::config::{InitialChoice, KernelChoice, Pipeline, RunConfig};
use crate::error::CliError;
use crate::svg::{Plot, Series};

#[derive(Debug, Clone, Copy)]
pub struct Log {
    pub verbose: bool,
}

impl Log {
    pub fn info(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// Output directory plus the list of files written to it.
pub struct Out {
    dir: PathBuf,
    files: Vec<String>,
}

impl Out {
    pub fn new(dir: &Path) -> Result<Out, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Output { path: dir.to_path_buf(), source })?;
        Ok(Out { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.path(name);
        let f = File::create(&path).map_err(|source| CliError::Output { path, source })?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    /// Runs a library writer; library I/O errors count as output failures.
    fn with<T>(&mut self, name: &str, w: impl FnOnce(&mut BufWriter<File>) -> gelation::Result<T>) -> Result<T, CliError> {
        let mut f = self.create(name)?;
        let v = w(&mut f).map_err(|e| self.io_err(name, e.to_string()))?;
        f.flush().map_err(|source| CliError::Output { path: self.path(name), source })?;
        Ok(v)
    }

    fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let mut f = self.create(name)?;
        f.write_all(body.as_bytes()).and_then(|_| f.flush()).map_err(|source| CliError::Output { path: self.path(name), source })
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<(), CliError> {
        let s = serde_json::to_string_pretty(v).expect("serialisable");
        self.text(name, &(s + "\n"))
    }

    fn rows(&mut self, name: &str, header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
        let mut s = String::from(header);
        s.push('\n');
        for r in rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:.16e}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        self.text(name, &s)
    }

    fn plot(&mut self, name: &str, p: Plot) -> Result<(), CliError> {
        self.text(name, &p.render())
    }

    fn io_err(&self, name: &str, msg: String) -> CliError {
        CliError::Output { path: self.path(name), source: std::io::Error::other(msg) }
    }

    /// Writes `manifest.json` with the resolved config, the outputs and a summary.
    pub fn finish(mut self, command: &str, cfg: &RunConfig, summary: Value) -> Result<Value, CliError> {
        let mut files = self.files.clone();
        files.push("manifest.json".into());
        let m = json!({ "command": command, "config": cfg, "outputs": files, "summary": summary });
        self.json("manifest.json", &m)?;
        Ok(summary)
    }
}

fn series(label: &str, x: &[f64], y: &[f64]) -> Series {
    Series { label: label.into(), points: x.iter().copied().zip(y.iter().copied()).collect() }
}

fn m1_plot(t: &[f64], m1: &[f64]) -> Plot {
    Plot {
        title: "Mass in the box".into(),
        x_label: "t".into(),
        y_label: "M1".into(),
        log_x: false,
        log_y: true,
        series: vec![series("M1", t, m1)],
    }
}

fn tail_plot(t: &[f64], amp: &[f64]) -> Plot {
    let a: Vec<f64> = amp.iter().map(|v| v.abs()).collect();
    Plot {
        title: "Fitted tail amplitude".into(),
        x_label: "t".into(),
        y_label: "|amplitude|".into(),
        log_x: false,
        log_y: true,
        series: vec![series("leading amplitude", t, &a)],
    }
}

fn linspace(end: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| end * k as f64 / (n - 1) as f64).collect()
}

pub fn simulate(cfg: &RunConfig, dir: &Path, log: Log) -> Result<Value, CliError> {
    let p = cfg.model_params()?;
    let kernel = match cfg.simulate.kernel {
        KernelChoice::Power => Kernel::Power { lambda: p.lambda },
        KernelChoice::Constant { c } => Kernel::Constant { c },
        KernelChoice::Multiplicative => Kernel::Multiplicative,
    };
    let ops = cfg.ops(kernel)?;
    let grid = ops.grid().clone();
    let f0 = match cfg.simulate.initial {
        InitialChoice::Model => initial_data(&p, grid, &RemainderMode::Default)?,
        InitialChoice::ModelNoRemainder => initial_data(&p, grid, &RemainderMode::Zero)?,
        InitialChoice::PurePower => pure_power(&p, grid),
        InitialChoice::Exponential => Field::from_fn(grid, |x: f64| (-x).exp()),
    };
    let times = linspace(cfg.simulate.t_end, cfg.simulate.outputs);
    log.info(format!("simulate: {:?} kernel, {} nodes, t_end {}", cfg.simulate.kernel, cfg.grid.nodes, cfg.simulate.t_end));
    let run = simulate_direct(&ops, &f0, &times, &cfg.solver)?;
    log.info(format!("simulate: {} steps, budget defect {:.2e}", run.stats.steps, run.budget_defect));
    let mut out = Out::new(dir)?;
    out.with("trajectory.csv", |w| run.trajectory.write_csv(w))?;
    out.with("gel.csv", |w| run.diagnostics.write_csv(w))?;
    let d = &run.diagnostics;
    out.plot("m1.svg", m1_plot(&d.times, &d.mass_m1))?;
    out.plot("tail.svg", tail_plot(&d.times, &d.tail_amp))?;
    let summary = json!({
        "steps": run.stats,
        "budget_defect": run.budget_defect,
        "number_density_violations": run.number_density_violations,
        "m1_start": d.mass_m1.first(),
        "m1_end": d.mass_m1.last(),
        "gel_flux_start": d.gel_flux.first(),
        "gel_integral_end": run.gel_integral.last(),
    });
    out.finish("simulate", cfg, summary)
}

pub fn construct(cfg: &RunConfig, dir: &Path, log: Log) -> Result<Value, CliError> {
    let p = cfg.model_params()?;
    let ops = cfg.ops(Kernel::Power { lambda: p.lambda })?;
    let f0 = initial_data(&p, ops.grid().clone(), &RemainderMode::Default)?;
    log.info(format!("construct: λ = {}, T = {}, {} steps", p.lambda, p.t_horizon, cfg.construct.steps));
    let c = Construction::new(&ops, p, &f0, cfg.construct)?;
    let (h, path, report) = c.picard_solve()?;
    log.info(format!("construct: {} Picard iterations, θ ≈ {:.3}", report.iterates, report.theta_est));
    let (f, diag) = c.assemble_solution(&h, &path)?;
    let x_max = ops.grid().x_max();
    let resid = equation_residual(&ops, &f, 0.0, p.p_bar(), x_max / 10.0)?;
    let mut out = Out::new(dir)?;
    out.with("solution.csv", |w| f.write_csv(w))?;
    out.with("perturbation.csv", |w| h.write_csv(w))?;
    out.with("amplitude.csv", |w| path.write_csv(w))?;
    out.with("gel.csv", |w| diag.write_csv(w))?;
    out.rows("residual.csv", "t,residual", resid.iter().map(|r| vec![r.0, r.1]))?;
    out.json("picard.json", &report)?;
    out.plot("m1.svg", m1_plot(&diag.times, &diag.mass_m1))?;
    out.plot("tail.svg", tail_plot(&diag.times, &diag.tail_amp))?;
    out.plot(
        "lambda.svg",
        Plot {
            title: "Amplitude".into(),
            x_label: "tau".into(),
            y_label: "Lambda".into(),
            log_x: false,
            log_y: false,
            series: vec![series("Lambda", &path.taus, &path.lambda_vals)],
        },
    )?;
    let summary = json!({
        "iterates": report.iterates,
        "theta": report.theta_est,
        "in_ball": report.in_ball,
        "lambda_end": path.lambda_vals.last(),
        "t_end": f.times.last(),
        "d1_fitted": c.d1,
        "max_residual": resid.iter().map(|r| r.1).fold(0.0, f64::max),
    });
    out.finish("construct", cfg, summary)
}

pub fn fundsol(cfg: &RunConfig, dir: &Path, log: Log) -> Result<Value, CliError> {
    let p = cfg.model_params()?;
    let fc = &cfg.fundsol;
    let engine = MellinEngine::new(p.lambda, cfg.contour)?;
    log.info(format!("fundsol: contour step {:.3e}", engine.step()));
    let decades = (fc.theta_tau_max / fc.theta_tau_min).log10();
    let n = (decades * fc.per_decade as f64).ceil().max(1.0) as usize;
    let taus: Vec<f64> = (0..=n).map(|k| fc.theta_tau_min * 10f64.powf(decades * k as f64 / n as f64)).collect();
    let theta: Vec<f64> = taus.iter().map(|t| engine.theta(*t)).collect::<gelation::Result<_>>()?;
    let mut out = Out::new(dir)?;
    out.rows("theta.csv", "tau,theta", taus.iter().zip(&theta).map(|(t, v)| vec![*t, *v]))?;
    let mut rows = Vec::new();
    let mut g_series = Vec::new();
    for &tau in &fc.taus {
        let table = engine.g_table(tau, fc.x_span, fc.smoothing)?;
        let pts: Vec<(f64, f64)> =
            table.values.iter().enumerate().map(|(i, v)| ((table.x_start + i as f64 * table.dx).exp(), *v)).collect();
        rows.extend(pts.iter().map(|(x, v)| vec![tau, *x, *v]));
        let stride = (pts.len() / 1500).max(1);
        g_series.push(Series { label: format!("tau = {tau}"), points: pts.into_iter().step_by(stride).collect() });
    }
    out.rows("g.csv", "tau,x,g", rows)?;
    out.json("contour.json", &engine.diagnostics())?;
    let abs: Vec<f64> = theta.iter().map(|v| v.abs()).collect();
    out.plot(
        "theta.svg",
        Plot {
            title: "Boundary amplitude".into(),
            x_label: "tau".into(),
            y_label: "|Theta|".into(),
            log_x: true,
            log_y: true,
            series: vec![series("|Theta|", &taus, &abs)],
        },
    )?;
    out.plot(
        "g.svg",
        Plot { title: "Fundamental solution".into(), x_label: "x".into(), y_label: "g".into(), log_x: true, log_y: false, series: g_series },
    )?;
    let summary = json!({ "theta_points": taus.len(), "tables": fc.taus, "step": engine.step() });
    out.finish("fundsol", cfg, summary)
}

pub fn norms(cfg: &RunConfig, dir: &Path, log: Log) -> Result<Value, CliError> {
    let p = cfg.model_params()?;
    let nc = &cfg.norms;
    let input = nc.input.as_ref().ok_or_else(|| CliError::config("norms.input", "a trajectory CSV is required"))?;
    let file = File::open(input).map_err(|e| CliError::config("norms.input", format!("{}: {e}", input.display())))?;
    let traj: Trajectory<f64> = Trajectory::read_csv(file).map_err(|e| CliError::config("norms.input", e.to_string()))?;
    let q = nc.q;
    let pw = nc.p.unwrap_or(p.p_bar());
    let sigma = nc.sigma.unwrap_or(p.sigma);
    log.info(format!("norms: {} slices, q = {q}, p = {pw}, σ = {sigma}", traj.times.len()));
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for kind in &nc.space {
        let r = space_norm(&traj, *kind, q, pw, sigma, p.lambda)?;
        rows.push(format!("{kind:?},,,{:.16e}", r.value));
        reports.push(r);
    }
    for kind in &nc.local {
        for &(t0, big_r) in &nc.windows {
            let r = local_norm(&traj, *kind, t0, big_r, sigma, p.lambda)?;
            rows.push(format!("{kind:?},{t0:e},{big_r:e},{:.16e}", r.value));
            reports.push(r);
        }
    }
    let mut out = Out::new(dir)?;
    out.text("norms.csv", &format!("kind,t0,R,value\n{}\n", rows.join("\n")))?;
    out.json("norms.json", &reports)?;
    let summary = json!({ "evaluated": reports.len() });
    out.finish("norms", cfg, summary)
}

pub fn validate(cfg: &RunConfig, dir: &Path, log: Log) -> Result<Value, CliError> {
    let results = checks::run_all(cfg, log);
    let failed = results.iter().filter(|r| !r.pass).count();
    for r in &results {
        println!("{} {}: {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    println!("{} of {} checks passed", results.len() - failed, results.len());
    let mut out = Out::new(dir)?;
    out.json("validate.json", &results)?;
    let summary = json!({ "checks": results.len(), "failed": failed });
    out.finish("validate", cfg, summary)?;
    if failed > 0 {
        return Err(CliError::Checks { failed, total: results.len() });
    }
    Ok(json!({ "checks": results.len() }))
}

#[derive(Debug, Serialize)]
struct SweepRow {
    lambda: f64,
    dir: String,
    ok: bool,
    error: Option<String>,
    summary: Value,
}

/// Runs the chosen pipeline once per λ; `raw` is the config before resolution.
pub fn sweep(raw: &RunConfig, dir: &Path, log: Log) -> Result<Value, CliError> {
    let sc = &raw.sweep;
    let rows: Vec<SweepRow> = sc
        .lambdas
        .par_iter()
        .map(|&lambda| {
            let sub = format!("lambda_{lambda}");
            let mut c = raw.clone();
            c.params.lambda = lambda;
            let res = c.resolve().and_then(|c| {
                let d = dir.join(&sub);
                match sc.pipeline {
                    Pipeline::Simulate => simulate(&c, &d, log),
                    Pipeline::Construct => construct(&c, &d, log),
                    Pipeline::Fundsol => fundsol(&c, &d, log),
                }
            });
            log.info(format!("sweep: λ = {lambda} {}", if res.is_ok() { "done" } else { "failed" }));
            match res {
                Ok(summary) => SweepRow { lambda, dir: sub, ok: true, error: None, summary },
                Err(e) => SweepRow { lambda, dir: sub, ok: false, error: Some(e.to_string()), summary: Value::Null },
            }
        })
        .collect();
    let failed = rows.iter().filter(|r| !r.ok).count();
    for r in &rows {
        match &r.error {
            None => println!("λ = {}: ok ({})", r.lambda, r.dir),
            Some(e) => println!("λ = {}: {e}", r.lambda),
        }
    }
    let mut out = Out::new(dir)?;
    out.json("sweep.json", &rows)?;
    let resolved = raw.resolve()?;
    out.finish("sweep", &resolved, json!({ "runs": rows.len(), "failed": failed }))?;
    if failed > 0 {
        return Err(CliError::Sweep { failed, total: rows.len() });
    }
    Ok(json!({ "runs": rows.len() }))
}
