use std::fmt;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde_json::{json, Value};

use repcorr::io::{load_bundle, load_components, read_matrix, save_bundle, save_components, source_hash, write_front_csv, write_matrix};
use repcorr::oracle::{self, MinimizeOptions, Objective};
use repcorr::pipeline::{self, Aggregation, Evaluation};
use repcorr::synthetic::{evaluate_accuracy, ScenarioSpec};
use repcorr::{linalg, relative_beta, single_task_corrector, Bundle, ComponentSet, Config, Error, Preference, SquareMap};

use crate::{AssembleArgs, Cli, Command, EvalArgs, PrecomputeArgs, ServeArgs, SweepArgs, SynthArgs, VerifyArgs};

/// Largest distance of a preference's sum from 1 that is still normalized
/// rather than rejected.
pub const PREFERENCE_SUM_TOLERANCE: f64 = 1e-3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type Outcome = Result<(), CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn run(cli: &Cli) -> Outcome {
    let json = cli.json;
    match &cli.command {
        Command::Synth(a) => synth(a, json),
        Command::Precompute(a) => precompute(a, json),
        Command::Assemble(a) => assemble(a, json),
        Command::Eval(a) => eval(a, json),
        Command::Sweep(a) => sweep(a, json),
        Command::Verify(a) => verify(a, json),
        Command::Serve(a) => serve(a),
    }
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

/// Parses `p1,p2,...`: nonnegative weights over `tasks` tasks whose sum is
/// within [`PREFERENCE_SUM_TOLERANCE`] of one, normalized exactly.
pub fn parse_preference(s: &str, tasks: usize) -> Result<Preference, CliError> {
    let weights = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| usage(format!("preference entry `{x}` is not a number"))))
        .collect::<Result<Vec<_>, _>>()?;
    if weights.len() != tasks {
        return Err(usage(format!("preference has {} entries for {tasks} tasks", weights.len())));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(usage("preference weights must be finite and nonnegative"));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > PREFERENCE_SUM_TOLERANCE {
        return Err(usage(format!("preference sums to {sum}, expected 1 within {PREFERENCE_SUM_TOLERANCE}")));
    }
    Preference::new(weights).map_err(|e| usage(e.to_string()))
}

fn parse_indices(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|_| usage(format!("subset entry `{x}` is not a task index"))))
        .collect()
}

fn check_beta(beta: f64) -> Outcome {
    if beta.is_finite() && beta >= 0.0 {
        Ok(())
    } else {
        Err(usage(format!("beta must be finite and nonnegative, got {beta}")))
    }
}

/// Loads a bundle and the cache computed from it.
fn load_pair(bundle: &Path, components: &Path) -> Result<(Bundle, ComponentSet), CliError> {
    let bundle = load_bundle(bundle)?;
    let set = load_components(components, Some(&source_hash(&bundle.tasks)?))?;
    pipeline::check_compatible(&bundle, &set)?;
    Ok((bundle, set))
}

fn relative_residual(w: &SquareMap, task: &repcorr::TaskData) -> f64 {
    let wz = linalg::matmul(w.as_mat(), task.z_mtl.as_mat());
    linalg::frobenius_distance(wz.as_ref(), task.z_ind.as_mat()) / linalg::frobenius(task.z_ind.as_mat())
}

fn synth(a: &SynthArgs, json: bool) -> Outcome {
    if !(a.noise.is_finite() && a.noise >= 0.0) {
        return Err(usage(format!("noise must be finite and nonnegative, got {}", a.noise)));
    }
    check_beta(a.beta)?;
    let spec = ScenarioSpec::new(
        a.tasks as usize,
        a.d_in as usize,
        a.d_rep as usize,
        a.classes as usize,
        a.n as usize,
        a.noise,
        a.seed,
    );
    let scenario = spec.generate()?;
    let bundle = scenario.to_bundle(a.beta)?;
    let manifest = save_bundle(&bundle, &a.out)?;
    let mut rows = Vec::new();
    for task in &bundle.tasks {
        let merged = evaluate_accuracy(&task.z_mtl, task.head.as_ref().unwrap(), task.labels.as_ref().unwrap())?;
        rows.push(json!({ "id": task.id, "expert_acc": task.expert_acc, "merged_acc": merged }));
    }
    if json {
        print_json(&json!({ "manifest": manifest, "tasks": rows }));
    } else {
        println!("wrote {}", manifest.display());
        for r in &rows {
            println!("{}  expert {}  merged {}", r["id"].as_str().unwrap(), r["expert_acc"], r["merged_acc"]);
        }
    }
    Ok(())
}

fn precompute(a: &PrecomputeArgs, json: bool) -> Outcome {
    if let Some(b) = a.beta {
        check_beta(b)?;
    }
    let bundle = load_bundle(&a.bundle)?;
    let given = a.beta.unwrap_or(bundle.beta);
    let beta = if a.beta_relative {
        relative_beta(given, &bundle.tasks)?
    } else {
        given
    };
    let cfg = Config::new(beta)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs as usize)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let start = Instant::now();
    let set = pool.install(|| repcorr::precompute_components(&bundle.tasks, cfg))?;
    let wall = start.elapsed().as_secs_f64();
    save_components(&set, &a.out, &source_hash(&bundle.tasks)?)?;

    let identity = SquareMap::identity(bundle.d_rep);
    let rows: Vec<Value> = bundle
        .tasks
        .iter()
        .zip(set.tasks())
        .map(|(task, (_, comp))| {
            json!({
                "id": task.id,
                "residual": relative_residual(comp.w_hat(), task),
                "uncorrected_residual": relative_residual(&identity, task),
            })
        })
        .collect();
    if json {
        print_json(&json!({ "beta": beta, "wall_s": wall, "out": a.out, "tasks": rows }));
    } else {
        println!("beta {beta}");
        for r in &rows {
            println!(
                "{}  relative residual {} (uncorrected {})",
                r["id"].as_str().unwrap(),
                r["residual"],
                r["uncorrected_residual"]
            );
        }
        println!("precompute wall time {wall:.3} s");
    }
    Ok(())
}

fn assemble(a: &AssembleArgs, json: bool) -> Outcome {
    let set = load_components(&a.components, None)?;
    let p = parse_preference(&a.pref, set.len())?;
    let how = if a.naive { Aggregation::Naive } else { Aggregation::Pareto };
    let start = Instant::now();
    let w = pipeline::assemble(&set, &p, how)?;
    let latency_ms = start.elapsed().as_secs_f64() * 1e3;
    write_matrix(&a.out, w.as_mat())?;
    if json {
        print_json(&json!({
            "preference": p.weights(),
            "naive": a.naive,
            "latency_ms": latency_ms,
            "corrector_norm": w.frobenius_norm(),
            "out": a.out,
        }));
    } else {
        println!("wrote {}", a.out.display());
        println!("assembly latency {latency_ms:.3} ms");
    }
    Ok(())
}

fn evaluation_json(e: &Evaluation) -> Value {
    json!({
        "preference": e.preference.weights(),
        "per_task": e.per_task.iter().map(|s| json!({
            "id": s.id,
            "acc": s.acc,
            "normalized_acc": s.normalized_acc,
        })).collect::<Vec<_>>(),
        "uniformity": e.uniformity,
    })
}

fn eval(a: &EvalArgs, json: bool) -> Outcome {
    let (bundle, w) = match (&a.w, &a.components) {
        (Some(path), _) => {
            let bundle = load_bundle(&a.bundle)?;
            let w = SquareMap::new(read_matrix(path)?)?;
            (bundle, w)
        }
        (None, Some(dir)) => {
            let (bundle, set) = load_pair(&a.bundle, dir)?;
            let p = parse_preference(&a.pref, bundle.len())?;
            let w = repcorr::assemble_pareto(&set, &p)?;
            (bundle, w)
        }
        (None, None) => return Err(usage("either --components or --w is required")),
    };
    let p = parse_preference(&a.pref, bundle.len())?;
    let experts = pipeline::expert_accuracies(&bundle)?;
    let e = pipeline::evaluate_corrector(&bundle, &experts, &w, &p)?;
    if json {
        print_json(&evaluation_json(&e));
    } else {
        for s in &e.per_task {
            println!("{}  acc {}  normalized {}", s.id, s.acc, s.normalized_acc);
        }
        println!("uniformity {}", e.uniformity);
    }
    Ok(())
}

fn sweep(a: &SweepArgs, json: bool) -> Outcome {
    if !(0.0..=1.0).contains(&a.subset_mass) {
        return Err(usage(format!("--subset-mass {} outside [0, 1]", a.subset_mass)));
    }
    let subset = a.subset.as_deref().map(parse_indices).transpose()?;
    let (bundle, set) = load_pair(&a.bundle, &a.components)?;
    let prefs = pipeline::sweep_preferences(bundle.len(), a.resolution as usize, subset.as_deref().map(|s| (s, a.subset_mass)))
        .map_err(|e| usage(e.to_string()))?;
    let how = if a.naive { Aggregation::Naive } else { Aggregation::Pareto };
    let result = pipeline::sweep(&bundle, &set, &prefs, how)?;
    write_front_csv(&result.front, &a.out)?;
    if json {
        print_json(&json!({
            "points": result.evaluations.len(),
            "hv": result.hypervolume,
            "mean_uniformity": result.mean_uniformity,
            "out": a.out,
        }));
    } else {
        println!("wrote {} preferences to {}", result.evaluations.len(), a.out.display());
        println!("hypervolume {}", result.hypervolume);
        println!("mean uniformity {}", result.mean_uniformity);
    }
    Ok(())
}

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

impl Check {
    fn new(name: &'static str, pass: bool, detail: String) -> Self {
        Self { name, pass, detail }
    }

    fn failed(name: &'static str, e: &Error) -> Self {
        Self::new(name, false, e.to_string())
    }
}

/// Runs every check that applies; a failure in one step skips the steps
/// that depend on it.
fn verify_checks(a: &VerifyArgs, checks: &mut Vec<Check>) -> Outcome {
    let bundle = load_bundle(&a.bundle)?;
    let p = parse_preference(&a.pref, bundle.len())?;
    let hash = source_hash(&bundle.tasks)?;
    let set = match load_components(&a.components, Some(&hash)).and_then(|s| pipeline::check_compatible(&bundle, &s).map(|()| s)) {
        Ok(s) => {
            checks.push(Check::new("cache", true, format!("{} tasks, hashes match", s.len())));
            s
        }
        Err(e) => {
            checks.push(Check::failed("cache", &e));
            return Ok(());
        }
    };
    let beta = set.beta();

    let mut worst: f64 = 0.0;
    let mut refit_ok = true;
    for (task, (_, cached)) in bundle.tasks.iter().zip(set.tasks()) {
        match single_task_corrector(&task.z_ind, &task.z_mtl, Config::new(beta)?) {
            Ok(fresh) => worst = worst.max(fresh.w_hat().distance(cached.w_hat()) / (1.0 + cached.w_hat().frobenius_norm())),
            Err(e) => {
                checks.push(Check::failed("refit", &e.for_task(&task.id)));
                refit_ok = false;
                break;
            }
        }
    }
    if refit_ok {
        checks.push(Check::new("refit", worst <= 1e-8, format!("max relative gap to cached corrector {worst:.2e}")));
    }

    let w = match repcorr::assemble_pareto(&set, &p) {
        Ok(w) => w,
        Err(e) => {
            checks.push(Check::failed("assemble", &e));
            return Ok(());
        }
    };
    let scale = 1.0 + w.frobenius_norm();

    match oracle::direct_pareto(&bundle.tasks, &p, beta) {
        Ok(direct) => {
            let gap = w.distance(&direct);
            checks.push(Check::new("direct formula", gap <= 1e-8 * scale, format!("Frobenius gap {gap:.2e}")));
        }
        Err(e) => checks.push(Check::failed("direct formula", &e)),
    }

    let objective = Objective::new(&bundle.tasks, &p, beta)?;
    let grad = objective.gradient(&w)?.frobenius_norm();
    checks.push(Check::new("gradient", grad <= 1e-6 * scale, format!("norm {grad:.2e}, bound {:.2e}", 1e-6 * scale)));

    let zero = SquareMap::new(repcorr::faer::Mat::zeros(w.dim(), w.dim()))?;
    let g0 = objective.gradient(&zero)?.frobenius_norm();
    let opts = MinimizeOptions {
        tol: 1e-12 * g0.max(1.0),
        ..MinimizeOptions::default()
    };
    match oracle::minimize(&bundle.tasks, &p, beta, &opts).and_then(|r| {
        r.check()?;
        Ok(r)
    }) {
        Ok(report) => {
            let dist = w.distance(&report.w_star);
            let loss = objective.loss(&w)?;
            let gap = (loss - report.final_loss).abs();
            let pass = dist <= 1e-6 && gap <= 1e-9 * loss.abs().max(1.0);
            checks.push(Check::new(
                "oracle",
                pass,
                format!("distance {dist:.2e}, loss gap {gap:.2e} after {} iterations", report.iterations),
            ));
        }
        Err(e) => checks.push(Check::failed("oracle", &e)),
    }

    match oracle::find_dominating_perturbation(&objective, &w, a.samples, &[1e-2, 1e-1], 1e-9, a.seed)? {
        None => checks.push(Check::new("pareto", true, format!("no dominating perturbation in {} directions", a.samples))),
        Some(d) => checks.push(Check::new(
            "pareto",
            false,
            format!("direction {} at step {} dominates every task", d.sample, d.epsilon),
        )),
    }
    Ok(())
}

fn verify(a: &VerifyArgs, json: bool) -> Outcome {
    let mut checks = Vec::new();
    verify_checks(a, &mut checks)?;
    let failed = checks.iter().filter(|c| !c.pass).count();
    if json {
        print_json(&json!({
            "pass": failed == 0,
            "checks": checks.iter().map(|c| json!({ "name": c.name, "pass": c.pass, "detail": c.detail })).collect::<Vec<_>>(),
        }));
    } else {
        for c in &checks {
            println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
    }
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("{failed} of {} checks failed", checks.len())))
    }
}

fn serve(a: &ServeArgs) -> Outcome {
    let session = repcorr_service::Session::load(&a.bundle, &a.components)?;
    let addr = std::net::SocketAddr::new(a.host, a.port);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    eprintln!("listening on http://{addr}");
    runtime
        .block_on(repcorr_service::serve(Arc::new(session), addr))
        .map_err(|e| CliError::Runtime(format!("{addr}: {e}")))
}
