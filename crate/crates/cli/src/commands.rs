use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use ncm_core::checks;
use ncm_core::cvstem::{dataset_from_samples, line_search_each, pooled_alpha, AlphaPoint, LineSearchResult};
use ncm_core::dynamics::{system_by_name, DynamicalSystem, Trajectory};
use ncm_core::experiments::{
    design_controller, design_estimator, estimation_scenario, run_control, run_estimation, sample_initial_conditions,
    sample_trajectories, ControlDesign, ControllerMethod, EstimatorMethod,
};
use ncm_core::metric::{write_samples_csv, MetricDataset};
use ncm_core::neural::{load_checkpoint, save_checkpoint, train, DeepLstmModel, TrainConfig, TrainReport};
use serde::Serialize;

use crate::config::{ControlCommandConfig, EstimateConfig, PlanConfig, SampleConfig, TrainCommandConfig};
use crate::error::{require, CliError, CliResult};

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn system(name: &str) -> CliResult<Box<dyn DynamicalSystem>> {
    system_by_name(name).map_err(|e| CliError::Config(e.to_string()))
}

fn load_model(path: &Path) -> CliResult<DeepLstmModel> {
    require("checkpoint", path)?;
    Ok(load_checkpoint(File::open(path)?)?)
}

fn write_curve(path: &Path, curve: &[AlphaPoint]) -> CliResult<()> {
    let mut w = create(path)?;
    writeln!(w, "alpha,status,objective,chi,nu")?;
    for p in curve {
        writeln!(w, "{},{},{},{},{}", p.alpha, p.status, p.objective, p.chi, p.nu)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TrajectoryReport {
    trajectory: usize,
    alpha_star: f64,
    j_star: f64,
    chi: f64,
    nu: f64,
}

#[derive(Serialize)]
struct SampleReport {
    system: String,
    variant: String,
    trajectories: Vec<TrajectoryReport>,
    /// `max_s J*(α*(x_s), x_s)` over the successful trajectories.
    j_star_cv: f64,
    pooled_alpha: Option<f64>,
    pooled_objective: Option<f64>,
    dataset_rows: usize,
}

#[derive(Serialize)]
struct Failure {
    trajectory: usize,
    class: String,
    message: String,
}

pub fn sample(cfg: &SampleConfig) -> CliResult<()> {
    cfg.validate()?;
    let sys = system(&cfg.system)?;
    let trajs: Vec<Trajectory> = if cfg.trajectory_files.is_empty() {
        let n = sys.state_dim();
        let (lo, hi) = match &cfg.initial_box {
            Some(b) => (b.lo.clone(), b.hi.clone()),
            None => (vec![-10.0; n], vec![10.0; n]),
        };
        if lo.len() != n {
            return Err(CliError::Config(format!("initial_box must have {n} entries per bound")));
        }
        let x0s = sample_initial_conditions(cfg.trajectories, &lo, &hi, cfg.seed)?;
        sample_trajectories(sys.as_ref(), &x0s, cfg.dt, cfg.steps, cfg.substeps)?
    } else {
        cfg.trajectory_files
            .iter()
            .map(|p| Ok(Trajectory::read_csv(File::open(p)?)?))
            .collect::<CliResult<_>>()?
    };
    let cv = cfg.cvstem();
    let results = line_search_each(&trajs, sys.as_ref(), &cv);
    let out = &cfg.out;
    let mut ok: Vec<(usize, LineSearchResult)> = Vec::new();
    let mut failures = Vec::new();
    for (s, (tr, r)) in trajs.iter().zip(results).enumerate() {
        tr.write_csv(create(&out.join(format!("trajectories/trajectory_{s:03}.csv")))?)?;
        match r {
            Ok(r) => {
                write_curve(&out.join(format!("curves/trajectory_{s:03}.csv")), &r.curve)?;
                ok.push((s, r));
            }
            Err(e) => failures.push(Failure {
                trajectory: s,
                class: e.class().into(),
                message: e.to_string(),
            }),
        }
    }
    let mut ds = dataset_from_samples(sys.state_dim(), ok.iter().map(|(_, r)| r.samples.as_slice()))?;
    for row in &mut ds.rows {
        row.trajectory = ok[row.trajectory].0;
    }
    ds.write_csv(create(&out.join("dataset.csv"))?)?;
    let curves: Vec<&[AlphaPoint]> = ok.iter().map(|(_, r)| r.curve.as_slice()).collect();
    let pooled = pooled_alpha(&curves);
    let report = SampleReport {
        system: sys.name().to_string(),
        variant: format!("{:?}", cfg.variant).to_lowercase(),
        trajectories: ok
            .iter()
            .map(|(s, r)| TrajectoryReport {
                trajectory: *s,
                alpha_star: r.alpha_star,
                j_star: r.j_star,
                chi: r.optimum().chi,
                nu: r.optimum().nu,
            })
            .collect(),
        j_star_cv: ok.iter().map(|(_, r)| r.j_star).fold(f64::NEG_INFINITY, f64::max),
        pooled_alpha: pooled.map(|p| p.0),
        pooled_objective: pooled.map(|p| p.1),
        dataset_rows: ds.rows.len(),
    };
    write_json(&out.join("report.json"), &report)?;
    for t in &report.trajectories {
        println!("trajectory {:3}: alpha* {} J* {:.6}", t.trajectory, t.alpha_star, t.j_star);
    }
    println!("J*_CV {:.6}", report.j_star_cv);
    if let Some((a, j)) = pooled {
        println!("pooled alpha {a} (mean J {j:.6})");
    }
    if !failures.is_empty() {
        let manifest = out.join("failures.json");
        let total = trajs.len();
        let failed = failures.len();
        write_json(&manifest, &failures)?;
        return Err(CliError::Partial { failed, total, manifest });
    }
    Ok(())
}

fn write_history(path: &Path, report: &TrainReport) -> CliResult<()> {
    let mut w = create(path)?;
    writeln!(w, "epoch,train_mse,test_mse")?;
    for e in &report.history {
        writeln!(w, "{},{},{}", e.epoch, e.train_mse, e.test_mse)?;
    }
    w.flush()?;
    Ok(())
}

pub fn train_cmd(cfg: &TrainCommandConfig) -> CliResult<()> {
    require("dataset", &cfg.dataset)?;
    let ds = MetricDataset::read_csv(File::open(&cfg.dataset)?)?;
    let out = &cfg.out;
    if let Some(grid) = &cfg.grid {
        let mut w = create(&out.join("grid.csv"))?;
        writeln!(w, "layers,hidden,params,epochs,final_train_mse,final_test_mse")?;
        for &layers in &grid.layers {
            for &hidden in &grid.hidden {
                let tc = TrainConfig {
                    layers,
                    hidden,
                    ..cfg.train.clone()
                };
                let (model, report) = train(&ds, &tc)?;
                let last = report.history.last();
                writeln!(
                    w,
                    "{layers},{hidden},{},{},{},{}",
                    model.num_params(),
                    report.history.len(),
                    last.map_or(f64::NAN, |e| e.train_mse),
                    report.final_test_mse()
                )?;
                println!("layers {layers} hidden {hidden}: test MSE {:.4e}", report.final_test_mse());
            }
        }
        w.flush()?;
        return Ok(());
    }
    let (model, report) = train(&ds, &cfg.train)?;
    let mut w = create(&out.join("checkpoint.json"))?;
    save_checkpoint(&model, &mut w)?;
    w.flush()?;
    write_history(&out.join("history.csv"), &report)?;
    write_json(&out.join("report.json"), &report)?;
    println!(
        "trained {} epochs: test MSE {:.4e}{}",
        report.history.len(),
        report.final_test_mse(),
        if report.stopped_early { " (early stop)" } else { "" }
    );
    Ok(())
}

#[derive(Serialize)]
struct EstimatorDesignReport<'a> {
    seed: u64,
    alpha_star: f64,
    j_star: f64,
    chi: f64,
    nu: f64,
    gamma: f64,
    steady_state_bound: f64,
    curve: &'a [AlphaPoint],
}

pub fn estimate(cfg: &EstimateConfig) -> CliResult<()> {
    let sys = system(&cfg.system)?;
    let model = if cfg.methods.contains(&EstimatorMethod::Ncm) {
        let path = cfg
            .checkpoint
            .as_ref()
            .ok_or_else(|| CliError::Config("method ncm needs a checkpoint".into()))?;
        Some(load_model(path)?)
    } else {
        None
    };
    let ec = &cfg.estimation;
    let scenario = estimation_scenario(sys.as_ref(), ec, cfg.seed)?;
    let design = design_estimator(sys.as_ref(), &scenario.plant, ec)?;
    let out = &cfg.out;
    let ls = &design.line_search;
    write_json(
        &out.join("design.json"),
        &EstimatorDesignReport {
            seed: cfg.seed,
            alpha_star: ls.alpha_star,
            j_star: ls.j_star,
            chi: ls.optimum().chi,
            nu: ls.optimum().nu,
            gamma: design.bound.gamma,
            steady_state_bound: design.bound.steady_state(),
            curve: &ls.curve,
        },
    )?;
    write_samples_csv(&ls.samples, create(&out.join("metric_samples.csv"))?)?;
    println!(
        "alpha* {} chi {:.4} nu {:.4} steady-state bound {:.4}",
        ls.alpha_star,
        ls.optimum().chi,
        ls.optimum().nu,
        design.bound.steady_state()
    );
    for &m in &cfg.methods {
        let run = run_estimation(sys.as_ref(), ec, &scenario, &design, m, model.as_ref())?;
        let dir = out.join(m.to_string());
        run.write_csv(create(&dir.join("run.csv"))?)?;
        let mut w = create(&dir.join("summary.txt"))?;
        run.write_summary(&mut w)?;
        w.flush()?;
        println!(
            "{m}: steady-state smoothed error mean {:.4} max {:.4}",
            run.steady_state_error(),
            run.steady_state_max()
        );
    }
    Ok(())
}

pub fn plan(cfg: &PlanConfig) -> CliResult<()> {
    let sys = system(&cfg.system)?;
    let design = design_controller(sys.as_ref(), &cfg.control)?;
    design.write_dir(&cfg.out)?;
    println!(
        "plan effort {:.6} terminal error {:.3e}; chi {:.4} nu {:.4} tube {:.4}; clearance beyond tube {:.4} ({} replans)",
        design.plan.effort,
        design.plan.terminal_error,
        design.chi,
        design.nu,
        design.tube_radius,
        design.plan.min_clearance,
        design.replans
    );
    Ok(())
}

pub fn control(cfg: &ControlCommandConfig) -> CliResult<()> {
    let sys = system(&cfg.system)?;
    require("plan directory", &cfg.design)?;
    let design = ControlDesign::read_dir(&cfg.design)?;
    let model = if cfg.methods.contains(&ControllerMethod::Ncm) {
        let path = cfg
            .checkpoint
            .as_ref()
            .ok_or_else(|| CliError::Config("method ncm needs a checkpoint".into()))?;
        Some(load_model(path)?)
    } else {
        None
    };
    for &m in &cfg.methods {
        let run = run_control(sys.as_ref(), &cfg.control, &design, m, model.as_ref(), cfg.seed)?;
        let dir = cfg.out.join(m.to_string());
        run.write_csv(create(&dir.join("run.csv"))?)?;
        let mut w = create(&dir.join("summary.txt"))?;
        run.write_summary(&mut w)?;
        w.flush()?;
        println!(
            "{m}: max deviation {:.4} (tube {:.4}), violations {}, effort {:.4}, inputs [{:.4}, {:.4}]",
            run.max_deviation(),
            run.tube_radius,
            run.violation_count(),
            run.effort,
            run.min_input,
            run.max_input
        );
    }
    Ok(())
}

pub fn check() -> CliResult<()> {
    let outcomes = checks::run_all();
    for c in &outcomes {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = outcomes.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::Checks { failed });
    }
    Ok(())
}
