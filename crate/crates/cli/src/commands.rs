use std::path::{Path, PathBuf};

use serde::Serialize;
use sosrec::io::{ensure_dir, read_json, write_curve_csv, write_json, write_matrix_slice};
use sosrec::operator::{train, Checkpoint, DeepONet, init_model};
use sosrec::pipeline::{
    self, evaluate, generate_datasets, min_r2, path_errors, read_manifest, read_split, run_experiment,
    write_evaluation, write_loss_history, ExperimentConfig, Mode, PathError, Split,
};
use sosrec::renewal::{build_kernel_clock_reset, solve_markov_renewal, KernelMatrix, KernelSpec, SolveDiagnostics};
use sosrec::sos::{assemble_functionality, build_equal_impact_f, estimate_recovery_curve_mc, exact_recovery_curve_independent};
use sosrec::{
    Error, FunctionalityVector, InitialStateVector, RecoveryFunctionSet, Result, StateSpace,
};

use crate::config::{KernelSource, SimulateConfig, SolveConfig};

/// Exact curves are written alongside the simulation up to this many systems.
const EXACT_MAX_SYSTEMS: usize = 12;

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn parse_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    toml::from_str(&read_text(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn functionality(values: Option<Vec<f64>>, space: Option<&StateSpace>, n_states: usize) -> Result<Option<FunctionalityVector>> {
    let f = match (values, space) {
        (Some(v), _) => FunctionalityVector::new(v)?,
        (None, Some(s)) => build_equal_impact_f(s),
        (None, None) => return Ok(None),
    };
    if f.len() != n_states {
        return Err(Error::Config(format!(
            "functionality has {} entries for {n_states} states",
            f.len()
        )));
    }
    Ok(Some(f))
}

#[derive(Serialize)]
struct SimulateManifest<'a> {
    command: &'a str,
    seed: u64,
    n_systems: usize,
    n_realizations: usize,
    n_points: usize,
    files: Vec<String>,
}

pub fn simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg: SimulateConfig = parse_toml(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let set = RecoveryFunctionSet::new(cfg.systems.clone())?;
    let grid = cfg.grid.build()?;
    if cfg.n_realizations == 0 {
        return Err(Error::Config("n_realizations must be at least 1".into()));
    }
    let space = StateSpace::new(set.n_systems())?;
    let f = functionality(cfg.functionality.clone(), Some(&space), space.n_states())?.expect("equal impact");
    let init = InitialStateVector::all_down(space.n_states());

    let curve = estimate_recovery_curve_mc(&set, &space, &f, &init, &grid, cfg.n_realizations, cfg.seed)?;
    ensure_dir(out)?;
    write_curve_csv(&out.join("curve.csv"), &curve)?;
    let mut files = vec!["curve.csv".to_string()];
    if set.n_systems() <= EXACT_MAX_SYSTEMS {
        let exact = exact_recovery_curve_independent(&set, &space, &f, &grid)?;
        write_curve_csv(&out.join("exact.csv"), &exact)?;
        files.push("exact.csv".into());
    }
    write_json(
        &out.join("manifest.json"),
        &SimulateManifest {
            command: "simulate",
            seed: cfg.seed,
            n_systems: set.n_systems(),
            n_realizations: cfg.n_realizations,
            n_points: grid.len(),
            files,
        },
    )?;
    log::info!("wrote {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct Slice {
    time: f64,
    index: usize,
    file: String,
}

#[derive(Serialize)]
struct SolveManifest {
    command: &'static str,
    n_states: usize,
    dt: f64,
    n_points: usize,
    slices: Vec<Slice>,
    curve: Option<String>,
    diagnostics: SolveDiagnostics,
}

fn load_kernel(source: &KernelSource, config: &Path) -> Result<(KernelMatrix, Option<StateSpace>)> {
    match source {
        KernelSource::ClockReset { systems } => {
            let set = RecoveryFunctionSet::new(systems.clone())?;
            let space = StateSpace::new(set.n_systems())?;
            Ok((build_kernel_clock_reset(&set, &space)?, Some(space)))
        }
        KernelSource::File { path } => {
            let path = config.parent().unwrap_or(Path::new(".")).join(path);
            let spec: KernelSpec = read_json(&path)?;
            let kernel = spec.build()?;
            Ok((kernel, subset_space(spec.n_states)))
        }
        KernelSource::Explicit(spec) => Ok((spec.build()?, subset_space(spec.n_states))),
    }
}

/// Subset state space when `n_states` is a power of two, so the default
/// equal-impact functionality has a meaning.
fn subset_space(n_states: usize) -> Option<StateSpace> {
    if n_states.is_power_of_two() && n_states > 1 {
        StateSpace::new(n_states.trailing_zeros() as usize).ok()
    } else {
        None
    }
}

pub fn solve(config: &Path, out: &Path) -> Result<()> {
    let cfg: SolveConfig = parse_toml(config)?;
    let grid = cfg.grid.build()?;
    let dt = grid.step().expect("uniform grid");
    let (kernel, space) = load_kernel(&cfg.kernel, config)?;
    let n = kernel.n_states();
    let f = functionality(cfg.functionality.clone(), space.as_ref(), n)?;
    let init = match cfg.initial.clone() {
        Some(p) => InitialStateVector::new(p)?,
        None => InitialStateVector::concentrated(n, 0),
    };
    if init.len() != n {
        return Err(Error::Config(format!("initial has {} entries for {n} states", init.len())));
    }

    let r = solve_markov_renewal(&kernel, &grid)?;
    ensure_dir(out)?;
    let mut slices = Vec::new();
    for &t in &cfg.slices {
        let index = grid.nearest_index(t);
        let file = format!("r_slice_{index:06}.csv");
        write_matrix_slice(&out.join(&file), &r, index)?;
        slices.push(Slice {
            time: grid.times()[index],
            index,
            file,
        });
    }
    let curve = match &f {
        Some(f) => {
            write_curve_csv(&out.join("curve.csv"), &assemble_functionality(&init, &r, f)?)?;
            Some("curve.csv".to_string())
        }
        None => None,
    };
    write_json(
        &out.join("manifest.json"),
        &SolveManifest {
            command: "solve",
            n_states: n,
            dt,
            n_points: grid.len(),
            slices,
            curve,
            diagnostics: r.diagnostics(),
        },
    )?;
    log::info!("wrote {}", out.display());
    Ok(())
}

pub fn experiment_config(config: Option<&Path>, out: &Path, mode: Option<Mode>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = match config {
        Some(p) => ExperimentConfig::from_toml_str(&read_text(p)?)?,
        None => {
            let saved = out.join("config.toml");
            match mode {
                Some(m) => ExperimentConfig::preset(m),
                None if saved.is_file() => ExperimentConfig::from_toml_str(&read_text(&saved)?)?,
                None => ExperimentConfig::identical(),
            }
        }
    };
    if let Some(m) = mode {
        if config.is_some() && cfg.mode != m {
            return Err(Error::Config(format!(
                "config mode {} does not match requested {}",
                cfg.mode.as_str(),
                m.as_str()
            )));
        }
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_config(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    std::fs::write(out.join("config.toml"), cfg.to_toml_string()?).map_err(|e| Error::Io {
        path: out.join("config.toml"),
        source: e,
    })
}

pub fn gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    write_config(cfg, out)?;
    let (train, test) = generate_datasets(cfg, out)?;
    log::info!(
        "wrote {} train and {} test samples to {}",
        train.dataset.n_samples(),
        test.dataset.n_samples(),
        out.join("datasets").display()
    );
    Ok(())
}

fn datasets_dir(out: &Path) -> PathBuf {
    out.join("datasets")
}

pub fn train_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let dir = datasets_dir(out);
    let manifest = read_manifest(&dir)?;
    let train_data = read_split(&dir, Split::Train, &manifest.encoding)?;
    let test_data = read_split(&dir, Split::Test, &manifest.encoding)?;
    let test = (test_data.dataset.n_samples() > 0).then_some(&test_data.dataset);
    let model = init_model(manifest.encoding.clone(), &cfg.network, cfg.seed)?;
    let outcome = match train(model, &train_data.dataset, test, &cfg.training) {
        Ok(o) => o,
        Err(Error::Diverged { iteration, history }) => {
            write_loss_history(&out.join("loss_history.csv"), &history)?;
            return Err(Error::Diverged { iteration, history });
        }
        Err(e) => return Err(e),
    };
    write_json(&out.join("checkpoint.json"), &outcome.model.to_checkpoint())?;
    write_loss_history(&out.join("loss_history.csv"), &outcome.history)?;
    if let Some(r) = outcome.history.final_record() {
        log::info!(
            "final train loss {:.3e}, best iteration {}",
            r.train_loss,
            outcome.best_iteration
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalSummary {
    n_samples: usize,
    n_pairs: usize,
    mse: f64,
    r2: f64,
    max_path_error: Option<f64>,
    path_errors: Vec<PathError>,
}

pub fn eval_cmd(out: &Path) -> Result<()> {
    let ck: Checkpoint = read_json(&out.join("checkpoint.json"))?;
    let model = DeepONet::from_checkpoint(&ck)?;
    let dir = datasets_dir(out);
    let test = read_split(&dir, Split::Test, model.encoding())?;
    let report = evaluate(&model, &test.dataset)?;
    write_evaluation(out, &report)?;
    let errors = path_errors(&model, &test)?;
    let summary = EvalSummary {
        n_samples: test.dataset.n_samples(),
        n_pairs: test.dataset.n_pairs(),
        mse: report.mse,
        r2: report.r2,
        max_path_error: errors.iter().map(|p| p.max_abs_error).reduce(f64::max),
        path_errors: errors,
    };
    write_json(&out.join("evaluation.json"), &summary)?;
    println!("test MSE {:.4e}  R² {:.4}", summary.mse, summary.r2);
    Ok(())
}

pub fn reproduce(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let outcome = run_experiment(cfg, out)?;
    let r = &outcome.report;
    let fmt = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |x| format!("{x:.prec$e}"));
    println!("experiment        {}", cfg.mode.as_str());
    println!("seed              {}", r.seed);
    println!("train / test      {} / {}", r.n_train, r.n_test);
    println!("final train loss  {}", fmt(r.final_train_loss, 3));
    println!("final test loss   {}", fmt(r.final_test_loss, 3));
    println!("best train loss   {}", fmt(r.best_train_loss, 3));
    println!(
        "test R²           {}  (threshold {:.2})",
        r.test_r2.map_or("-".into(), |x| format!("{x:.4}")),
        min_r2(cfg.mode)
    );
    println!(
        "max path error    {}  (threshold {:.2})",
        r.max_path_error.map_or("-".into(), |x| format!("{x:.4}")),
        pipeline::MAX_PATH_ERROR
    );
    println!("artifacts         {}", out.display());
    Ok(())
}
