//! Subcommand implementations.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use greedy_route::grf::{generate_dataset, load_dataset, save_dataset, Dataset};
use greedy_route::metrics::mean_and_se;
use greedy_route::neural::{LstmRouter, ModelCheckpoint, NeuralSolver};
use greedy_route::routing::{run_hybrid, Ensemble, RouteTrace, RunOptions};
use greedy_route::theory::{verify_theory, TheorySuite};
use greedy_route::training::{epoch_log_csv, evaluate, train_deeponet, train_router, Evaluation};
use greedy_route::Error;

use crate::config::{ExperimentConfig, Split};
use crate::error::CliError;

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn core_io(path: &Path, e: Error) -> CliError {
    match e {
        Error::Io(io) => CliError::io(path, io),
        other => CliError::Core(other),
    }
}

/// Loads a split from the data directory, or regenerates it from the seed
/// when the default directory holds no file.
fn dataset(cfg: &ExperimentConfig, split: Split) -> Result<Dataset, CliError> {
    let path = cfg.data_dir().join(format!("{}.grds", split.name()));
    if path.exists() {
        let ds = load_dataset(&path).map_err(|e| core_io(&path, e))?;
        if ds.grid != cfg.grid()? || ds.kind != cfg.kind() {
            return Err(CliError::Config(format!(
                "{} was generated for {} on {}, not for the configured problem",
                path.display(),
                ds.kind.name(),
                ds.grid
            )));
        }
        return Ok(ds);
    }
    if cfg.data.dir.is_some() {
        return Err(CliError::Config(format!("dataset {} does not exist; run generate-data", path.display())));
    }
    let count = match split {
        Split::Train => cfg.data.train,
        Split::Val => cfg.data.val,
        Split::Test => cfg.data.test,
    };
    Ok(generate_dataset(&cfg.grf(split)?, count, cfg.kind())?)
}

fn head(ds: &Dataset, n: usize) -> Dataset {
    ds.split_at(n.min(ds.len())).0
}

fn load_checkpoint(path: &Path, producer: &'static str) -> Result<ModelCheckpoint, CliError> {
    if !path.exists() {
        return Err(CliError::MissingCheckpoint(path.to_path_buf(), producer));
    }
    ModelCheckpoint::load(path).map_err(|e| core_io(path, e))
}

fn ensemble(cfg: &ExperimentConfig) -> Result<Ensemble, CliError> {
    if cfg.ensemble.is_empty() {
        return Err(CliError::Config("the [[ensemble]] list is empty".into()));
    }
    let surrogate = if cfg.needs_surrogate() {
        let model = load_checkpoint(&cfg.surrogate_path(), "train-deeponet")?.into_deeponet()?;
        Some(Arc::new(NeuralSolver::new(model, cfg.grid()?)?))
    } else {
        None
    };
    Ok(Ensemble::from_specs(cfg.operator()?, &cfg.ensemble, surrogate)?)
}

fn router(cfg: &ExperimentConfig) -> Result<Arc<LstmRouter>, CliError> {
    Ok(Arc::new(load_checkpoint(&cfg.router_path(), "train-router")?.into_router()?))
}

fn run_options(cfg: &ExperimentConfig) -> RunOptions {
    RunOptions { record_costs: cfg.metrics.record_costs, modes: cfg.metrics.modes.clone() }
}

pub fn generate_data(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dir = cfg.data_dir();
    create_dir(&dir)?;
    for (split, count) in [(Split::Train, cfg.data.train), (Split::Val, cfg.data.val), (Split::Test, cfg.data.test)] {
        let ds = generate_dataset(&cfg.grf(split)?, count, cfg.kind())?;
        let path = dir.join(format!("{}.grds", split.name()));
        save_dataset(&ds, &path).map_err(|e| core_io(&path, e))?;
        println!("wrote {} samples to {}", ds.len(), path.display());
    }
    Ok(())
}

pub fn train_surrogate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let train = dataset(cfg, Split::Train)?;
    let val = dataset(cfg, Split::Val)?;
    let out = train_deeponet(&train, &val, cfg.deeponet_arch()?, &cfg.train_config(&cfg.surrogate.train))?;
    let path = cfg.surrogate_path();
    write(&path, out.best.to_bytes())?;
    write(&cfg.out.join("deeponet_log.csv"), epoch_log_csv(&out.log))?;
    let best = &out.log[out.best_epoch - 1];
    println!(
        "best epoch {} (relative validation MSE {:.3e}); checkpoint {}",
        out.best_epoch,
        best.val_loss,
        path.display()
    );
    Ok(())
}

pub fn train_routing(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let ens = ensemble(cfg)?;
    let train = head(&dataset(cfg, Split::Train)?, cfg.router.trajectories);
    let val = head(&dataset(cfg, Split::Val)?, cfg.router.val_trajectories);
    let out = train_router(
        &ens,
        &train,
        &val,
        cfg.router_arch()?,
        &cfg.train_config(&cfg.router.train),
        cfg.router.steps.unwrap_or(cfg.steps),
    )?;
    let path = cfg.router_path();
    write(&path, out.best.to_bytes())?;
    write(&cfg.out.join("router_log.csv"), epoch_log_csv(&out.log))?;
    let best = &out.log[out.best_epoch - 1];
    println!("best epoch {} (validation loss {:.4}); checkpoint {}", out.best_epoch, best.val_loss, path.display());
    Ok(())
}

fn modes_csv(trace: &RouteTrace, modes: &[usize]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["step".to_string()];
    header.extend(modes.iter().map(|m| format!("mode_{m}")));
    w.write_record(&header).map_err(csv_err)?;
    for (t, row) in trace.mode_errors.iter().flatten().enumerate().skip(1) {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| CliError::Config(e.to_string()))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::io(Path::new("<csv>"), std::io::Error::other(e))
}

pub fn run(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let spec = cfg.policies.get(cfg.run.policy).ok_or_else(|| {
        CliError::Config(format!("run.policy = {} but only {} policies are listed", cfg.run.policy, cfg.policies.len()))
    })?;
    let ens = ensemble(cfg)?;
    let router = if spec.is_learned() { Some(router(cfg)?) } else { None };
    let test = dataset(cfg, Split::Test)?;
    let sample = test.samples.get(cfg.run.instance).ok_or_else(|| {
        CliError::Config(format!("run.instance = {} but the test set has {} samples", cfg.run.instance, test.len()))
    })?;
    let opts = run_options(cfg);
    let result = run_hybrid(&ens, &spec.resolve(router.as_ref()), &sample.f, spec.steps(cfg.steps), &opts);
    let (trace, failure) = match result {
        Ok(t) => (t, None),
        Err(Error::DivergedIterate { step, trace }) => {
            let t = (*trace).clone();
            (t, Some(Error::DivergedIterate { step, trace }))
        }
        Err(e) => return Err(e.into()),
    };
    write(&cfg.out.join("trace.csv"), trace.to_csv())?;
    if !opts.modes.is_empty() {
        write(&cfg.out.join("trace_modes.csv"), modes_csv(&trace, &opts.modes)?)?;
    }
    if let Some(e) = failure {
        return Err(CliError::Policy { policy: spec.label(&ens), source: e });
    }
    println!(
        "{}: final error {:e}, error AUC {:e}; trace {}",
        spec.label(&ens),
        trace.final_error(),
        trace.errors.iter().skip(1).sum::<f64>(),
        cfg.out.join("trace.csv").display()
    );
    Ok(())
}

/// Table rows and CSV summaries of one `compare`.
pub struct Comparison {
    pub rows: Vec<(String, Evaluation)>,
}

impl Comparison {
    pub fn table(&self) -> String {
        let width = self.rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(6).max(6);
        let mut out = format!("{:<width$}  {:>22}  {:>22}\n", "policy", "final error (x1e-3)", "error AUC (x1e-3)");
        for (label, ev) in &self.rows {
            let cell = |(m, s): (f64, f64)| format!("{:.3} ± {:.3}", m * 1e3, s * 1e3);
            out.push_str(&format!("{:<width$}  {:>22}  {:>22}\n", label, cell(ev.final_error), cell(ev.error_auc)));
        }
        out
    }

    pub fn instances_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "policy",
            "instance",
            "final_error",
            "error_auc",
            "error_auc_squared",
            "final_residual",
            "residual_auc_squared",
        ])
        .map_err(csv_err)?;
        for (label, ev) in &self.rows {
            for (i, m) in ev.per_instance.iter().enumerate() {
                w.write_record([
                    label.clone(),
                    i.to_string(),
                    m.final_error.to_string(),
                    m.error_auc.to_string(),
                    m.error_auc_squared.to_string(),
                    m.final_residual.to_string(),
                    m.residual_auc_squared.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.into_inner().map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn summary_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "policy",
            "final_error_mean",
            "final_error_se",
            "error_auc_mean",
            "error_auc_se",
            "error_auc_squared_mean",
            "error_auc_squared_se",
            "final_residual_mean",
            "final_residual_se",
            "residual_auc_squared_mean",
            "residual_auc_squared_se",
        ])
        .map_err(csv_err)?;
        for (label, ev) in &self.rows {
            let stat = |g: fn(&greedy_route::metrics::RunMetrics) -> f64| {
                mean_and_se(&ev.per_instance.iter().map(g).collect::<Vec<_>>())
            };
            let cols = [
                stat(|m| m.final_error),
                stat(|m| m.error_auc),
                stat(|m| m.error_auc_squared),
                stat(|m| m.final_residual),
                stat(|m| m.residual_auc_squared),
            ];
            let mut rec = vec![label.clone()];
            for (m, s) in cols {
                rec.push(m.to_string());
                rec.push(s.to_string());
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| CliError::Config(e.to_string()))
    }
}

pub fn compare(cfg: &ExperimentConfig) -> Result<(), CliError> {
    if cfg.policies.is_empty() {
        return Err(CliError::Config("compare needs at least one [[policies]] entry".into()));
    }
    let ens = ensemble(cfg)?;
    let router = if cfg.policies.iter().any(|p| p.is_learned()) { Some(router(cfg)?) } else { None };
    let test = dataset(cfg, Split::Test)?;
    let opts = run_options(cfg);
    let mut rows = Vec::with_capacity(cfg.policies.len());
    for spec in &cfg.policies {
        let label = spec.label(&ens);
        let ev = evaluate(&ens, &spec.resolve(router.as_ref()), &test, spec.steps(cfg.steps), &opts)
            .map_err(|e| CliError::Policy { policy: label.clone(), source: e })?;
        rows.push((label, ev));
    }
    let cmp = Comparison { rows };
    let table = cmp.table();
    write(&cfg.out.join("compare_instances.csv"), cmp.instances_csv()?)?;
    write(&cfg.out.join("compare_summary.csv"), cmp.summary_csv()?)?;
    write(&cfg.out.join("compare_table.txt"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn verify(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let suite = TheorySuite { seed: cfg.seed.wrapping_add(cfg.theory.seed), ..cfg.theory.clone() };
    let reports = verify_theory(&suite)?;
    let json = serde_json::to_string_pretty(&reports).map_err(|e| CliError::Config(e.to_string()))?;
    write(&cfg.out.join("theory.json"), json + "\n")?;
    for r in &reports {
        let status = if r.passed() {
            "ok"
        } else if r.premises {
            "VIOLATED"
        } else {
            "violated (premises not met)"
        };
        println!(
            "{:<28} premises={:<5} trials={:<6} violations={:<4} {status}",
            r.name, r.premises, r.trials, r.violations
        );
    }
    if reports.iter().any(|r| r.premises && !r.passed()) {
        eprintln!("warning: a check failed although its premises hold; see {}", cfg.out.join("theory.json").display());
    }
    Ok(())
}
