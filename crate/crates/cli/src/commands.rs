use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use kqrk_core::bounds::{build_report, ReportInputs, RobustParams, SigmaSetting};
use kqrk_core::experiments::{emit, render_files, run_experiment, ExperimentResult, ExperimentSpec, Figure, Profile};
use kqrk_core::io::{
    load_problem, read_json, save_problem, sha256_file, write_json, BundleManifest, MANIFEST_FILE, RUN_MANIFEST_FILE,
};
use kqrk_core::linalg::inf_norm;
use kqrk_core::solvers::{horizon_estimate, run, write_trace_csv, InitPolicy, LinearSystem, Method, ResidualUpdate, SolverConfig};
use kqrk_core::sysgen::{generate, min_beta, Ensemble, GenSpec};
use kqrk_core::{Error, Fraction, Result, RunManifest};

use crate::{BoundsArgs, Cli, Command, ExperimentArgs, GenArgs, SolveArgs, VerifyArgs, VERSION};

pub fn dispatch(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidSpec("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidSpec(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Solve(a) => solve(a),
        Command::Bounds(a) => bounds(a),
        Command::Experiment(a) => experiment(a),
        Command::Verify(a) => verify(a),
    }
}

/// Resolves a level so that `level * m` is an integer, snapping to the
/// nearest feasible value if needed and recording the change.
fn level(flag: &str, raw: &str, m: usize, min_count: usize, snapped: &mut Vec<String>) -> Result<Fraction> {
    let exact = raw.parse::<Fraction>().ok();
    if let Some(f) = exact {
        if f.count(m).is_ok() && f.count(m)? >= min_count {
            return Ok(f);
        }
    }
    let value = match exact {
        Some(f) => f.to_f64(),
        None => raw
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidSpec(format!("--{flag}: cannot parse {raw:?} as a number")))?,
    };
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::InvalidSpec(format!("--{flag}: {value} must lie in [0, 1]")));
    }
    let snap = Fraction::snap(value, m, min_count)?;
    let msg = format!(
        "--{flag}: {flag}·m must be integer (m = {m}); nearest feasible {flag} = {:.4} ({snap})",
        snap.to_f64()
    );
    eprintln!("note: {msg}");
    snapped.push(msg);
    Ok(snap)
}

fn manifest(subcommand: &str, params: serde_json::Value, seeds: Vec<u64>, snapped: Vec<String>, inputs: Vec<PathBuf>) -> RunManifest {
    RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        build: VERSION.to_string(),
        subcommand: subcommand.to_string(),
        params,
        seeds,
        snapped,
        inputs,
        outputs: BTreeMap::new(),
        wall_clock_seconds: None,
    }
}

fn finish_manifest(mut m: RunManifest, dir: &Path, files: &[&str], start: Instant) -> Result<()> {
    for f in files {
        m.outputs.insert(f.to_string(), sha256_file(&dir.join(f))?);
    }
    m.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
    write_json(&dir.join(RUN_MANIFEST_FILE), &m)
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn gen(a: GenArgs) -> Result<()> {
    let start = Instant::now();
    let mut snapped = Vec::new();
    if a.n == 0 || a.m < a.n {
        return Err(Error::InvalidSpec(format!("need m >= n >= 1, got --m {} --n {}", a.m, a.n)));
    }
    let beta = level("beta", &a.beta, a.m, 0, &mut snapped)?;
    let spec = GenSpec {
        ensemble: a.ensemble.parse::<Ensemble>()?,
        corruption_scale: a.scale,
        noise_stddev: a.noise,
        disjoint_support: a.disjoint,
        signed_corruption: a.signed,
        ..GenSpec::new(a.m, a.n, beta, a.seed)
    };
    let problem = generate(&spec)?;
    let bundle = save_problem(&a.out, &problem, Some(&spec))?;
    let mut files: Vec<&str> = bundle.checksums.keys().map(String::as_str).collect();
    files.push(MANIFEST_FILE);
    let m = manifest("gen", json!({ "spec": spec, "out": a.out }), vec![a.seed], snapped, Vec::new());
    finish_manifest(m, &a.out, &files, start)?;
    println!(
        "wrote {}x{} problem to {} (beta = {beta}, {} corrupted rows)",
        a.m,
        a.n,
        a.out.display(),
        bundle.norms.xi_support
    );
    Ok(())
}

fn solve(a: SolveArgs) -> Result<()> {
    let start = Instant::now();
    let (problem, _) = load_problem(&a.problem)?;
    let m = problem.m();
    let method: Method = a.method.parse()?;
    let mut snapped = Vec::new();
    let q = match method {
        Method::Rk => Fraction::ONE,
        _ => level("q", &a.q, m, 1, &mut snapped)?,
    };
    let q0 = match method {
        Method::Dqrk => level("q0", &a.q0, m, 1, &mut snapped)?,
        _ => Fraction::ZERO,
    };
    let mut cfg = SolverConfig::for_method(method, q0, q, a.iters, a.seed).with_diagnostics(a.diagnostics);
    if a.incremental {
        cfg = cfg.with_residual_update(ResidualUpdate::Incremental);
    }
    match a.init.as_deref() {
        None => {}
        Some("zero") => cfg = cfg.with_init(InitPolicy::Zero),
        Some("project-first") => cfg = cfg.with_init(InitPolicy::ProjectFirst),
        Some(other) => return Err(Error::InvalidSpec(format!("--init must be zero or project-first, got {other:?}"))),
    }
    let trace = run(LinearSystem::from(&problem), &cfg)?;
    let out_dir = parent_dir(&a.trace);
    fs::create_dir_all(&out_dir)?;
    write_trace_csv(&trace, fs::File::create(&a.trace)?)?;

    let final_err = trace.sq_errors.as_ref().and_then(|s| s.last().copied());
    println!("method {method}, {} iterations", a.iters);
    if let Some(e) = final_err {
        println!("final squared error {e:.6e}");
    }
    if a.window <= a.iters {
        println!("horizon estimate (last {}) {:.6e}", a.window, horizon_estimate(&trace, a.window)?.value);
    }
    if let Some(d) = &trace.diagnostics {
        let bad = d.iter().filter(|d| !d.holds()).count();
        println!("quantile diagnostics: {bad} violations over {} iterates", d.len());
    }
    let trace_name = a
        .trace
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .ok_or_else(|| Error::InvalidSpec("--trace must name a file".into()))?;
    let params = json!({ "config": cfg, "problem": a.problem, "trace": a.trace, "window": a.window });
    let man = manifest("solve", params, vec![a.seed], snapped, vec![a.problem.clone()]);
    finish_manifest(man, &out_dir, &[trace_name.as_str()], start)
}

fn bounds(a: BoundsArgs) -> Result<()> {
    let start = Instant::now();
    let (problem, _) = load_problem(&a.problem)?;
    let m = problem.m();
    let mut snapped = Vec::new();
    let beta = match &a.beta {
        Some(b) => level("beta", b, m, 0, &mut snapped)?,
        None => {
            let b = min_beta(&problem.xi);
            eprintln!("note: --beta not given; using the smallest level consistent with xi, beta = {b}");
            b
        }
    };
    let q = level("q", &a.q, m, 1, &mut snapped)?;
    let params = match &a.q0 {
        Some(q0) => RobustParams::dqrk(beta, level("q0", q0, m, 1, &mut snapped)?, q)?,
        None => RobustParams::qrk(beta, q)?,
    };
    let setting = SigmaSetting::parse(&a.sigma_mode, a.seed)?;
    let on_plane = match a.init.as_str() {
        "project-first" => true,
        "zero" => false,
        other => return Err(Error::InvalidSpec(format!("--init must be zero or project-first, got {other:?}"))),
    };
    let eps = problem.epsilon();
    let inputs = ReportInputs {
        epsilon: Some(&eps),
        eta_inf: Some(inf_norm(&problem.eta)),
        x0_on_hyperplane: params.q0.map(|_| on_plane),
    };
    let report = build_report(&problem.system, &params, setting, inputs)?;
    let out_dir = parent_dir(&a.out);
    fs::create_dir_all(&out_dir)?;
    write_json(&a.out, &report)?;
    println!(
        "{}: C = {:.6e} ({:?}), alternative C = {:.6e} ({:?})",
        report.method,
        report.rate_original.constant(),
        report.rate_original.condition.satisfied,
        report.rate_alternative.constant(),
        report.rate_alternative.condition.satisfied
    );
    if let Some(h) = &report.error_horizon {
        match h.horizon {
            Some(v) => println!("error horizon {v:.6e}"),
            None => println!("error horizon undefined (C <= 0)"),
        }
    }
    let name = a.out.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let man = manifest(
        "bounds",
        json!({ "params": params, "sigma_mode": setting, "problem": a.problem, "out": a.out }),
        vec![a.seed],
        snapped,
        vec![a.problem.clone()],
    );
    finish_manifest(man, &out_dir, &[name.as_str()], start)
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let start = Instant::now();
    let figure: Figure = a.figure.parse()?;
    let profile = if a.paper { Profile::Paper } else { Profile::Desk };
    let mut spec = ExperimentSpec::new(figure, profile);
    spec.seed = a.seed;
    if let Some(v) = a.m {
        spec.m = v;
    }
    if let Some(v) = a.n {
        spec.n = v;
    }
    let mut snapped = Vec::new();
    if let Some(b) = &a.beta {
        spec.beta = level("beta", b, spec.m, 0, &mut snapped)?;
    }
    if let Some(q) = &a.q {
        spec.q = level("q", q, spec.m, 1, &mut snapped)?;
    }
    if let Some(q0) = &a.q0 {
        spec.q0 = level("q0", q0, spec.m, 1, &mut snapped)?;
    }
    if let Some(v) = a.iters {
        spec.iterations = v;
    }
    if let Some(v) = a.trials {
        spec.trials = v;
    }
    if let Some(v) = a.scales {
        spec.scales = v;
    }
    if let Some(v) = a.scale {
        spec.corruption_scale = v;
    }
    if let Some(v) = a.noise {
        spec.noise_stddev = v;
    }
    if let Some(ms) = &a.methods {
        spec.methods = ms.iter().map(|s| s.parse()).collect::<Result<Vec<Method>>>()?;
    }
    if let Some(v) = a.band_seeds {
        spec.band_seeds = v;
    }
    if a.full_residuals {
        spec.residual_update = ResidualUpdate::Full;
    }
    spec.validate()?;
    eprintln!("{figure}: m = {}, n = {}, {} iterations", spec.m, spec.n, spec.iterations);
    let result = run_experiment(&spec)?;
    let sums = emit(&result, &a.out)?;
    print_summary(&result);
    let files: Vec<&str> = sums.keys().map(String::as_str).collect();
    let man = manifest("experiment", json!({ "spec": spec, "out": a.out }), vec![a.seed], snapped, Vec::new());
    finish_manifest(man, &a.out, &files, start)
}

fn print_summary(r: &ExperimentResult) {
    for set in &r.curves {
        let hs: Vec<String> = set
            .curves
            .iter()
            .map(|c| format!("{} {:.3e}", c.method, c.horizon))
            .collect();
        println!("{}: horizons {}", set.ensemble.name(), hs.join(", "));
    }
    if let Some(s) = &r.fig3 {
        println!("{} points", r.points.len());
        if let Some(v) = s.rk_spearman {
            println!("spearman(scale, rk horizon) = {v:.4}");
        }
        if let Some(v) = s.dqrk_spread {
            println!("dqrk horizon max/min over scales = {v:.3}");
        }
    }
    eprintln!("done in {:.1} s", r.wall_clock_seconds);
}

fn verify_problem(dir: &Path) -> Result<()> {
    let (problem, bundle) = load_problem(dir)?;
    let (beta, disjoint) = match &bundle.spec {
        Some(s) => (Some(s.beta), s.disjoint_support),
        None => (None, false),
    };
    problem.check_invariants(beta, disjoint)?;
    println!("{}: problem bundle ok ({}x{})", dir.display(), problem.m(), problem.n());
    Ok(())
}

/// Checks a directory's manifests: recorded checksums, then the content of
/// `manifest.json` (problem bundle or experiment result).
fn verify_dir(dir: &Path, explicit: Option<&Path>) -> Result<()> {
    let run_path = explicit
        .filter(|p| p.file_name().is_some_and(|f| f != MANIFEST_FILE))
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dir.join(RUN_MANIFEST_FILE));
    let mut checked = false;
    if run_path.exists() {
        let m: RunManifest = read_json(&run_path)?;
        m.verify(dir)?;
        println!("{}: {} outputs match their checksums", run_path.display(), m.outputs.len());
        checked = true;
    }
    let content = dir.join(MANIFEST_FILE);
    if content.exists() {
        let value: serde_json::Value = read_json(&content)?;
        if value.get("checksums").is_some() {
            let _: BundleManifest = serde_json::from_value(value)?;
            verify_problem(dir)?;
        } else {
            let result: ExperimentResult = serde_json::from_value(value)?;
            for (name, bytes) in render_files(&result)? {
                let on_disk = fs::read(dir.join(&name))?;
                if on_disk != bytes {
                    return Err(Error::Checksum(format!("{name} differs from the result it was rendered from")));
                }
            }
            println!("{}: experiment files reproduce from the manifest", dir.display());
        }
        checked = true;
    }
    if !checked {
        return Err(Error::InvalidSpec(format!("no manifest found in {}", dir.display())));
    }
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<()> {
    if let Some(p) = &a.problem {
        verify_problem(p)?;
    }
    if let Some(m) = &a.manifest {
        if m.is_dir() {
            verify_dir(m, None)?;
        } else {
            verify_dir(&parent_dir(m), Some(m))?;
        }
    }
    Ok(())
}
