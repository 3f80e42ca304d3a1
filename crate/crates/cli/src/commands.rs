use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::Serialize;
use serde_json::json;

use minvol_nmf::evaluation::{bss_eval, count_zero_sources, match_factors, synth_scattered_instance};
use minvol_nmf::export::{write_matrix_csv, write_trace_csv};
use minvol_nmf::separation;
use minvol_nmf::signal::{read_wav, write_wav};
use minvol_nmf::solver::{solve, IterationTrace, SolverConfig, Variant, ZERO_ROW_THRESHOLD};

use crate::args::{BenchArgs, Command, EvalArgs, ReplayArgs, SeparateArgs, SynthArgs};
use crate::error::CliError;
use crate::manifest::{hash_file, RunManifest};

/// Runs `command` and returns the text to print on stdout.
pub fn run(command: &Command) -> Result<String, CliError> {
    match command {
        Command::Separate(a) => separate(a),
        Command::SynthDemo(a) => synth_demo(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
        Command::Replay(a) => replay(a),
    }
}

fn pretty(value: &impl Serialize) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(value)?)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}

fn emit_matrix(manifest: &mut RunManifest, dir: &Path, name: String, m: &Array2<f64>) -> Result<(), CliError> {
    write_matrix_csv(dir.join(&name), m)?;
    manifest.outputs.push(name);
    Ok(())
}

fn emit_trace(manifest: &mut RunManifest, dir: &Path, trace: &IterationTrace) -> Result<(), CliError> {
    write_trace_csv(dir.join("trace.csv"), trace)?;
    manifest.outputs.push("trace.csv".into());
    Ok(())
}

fn separate(args: &SeparateArgs) -> Result<String, CliError> {
    let cfg = args.solver.config()?;
    let window = args.window_spec()?;
    let mut recorded = args.clone();
    let mut manifest = RunManifest::new(Command::Separate(args.clone()));
    recorded.input = manifest.add_input(&args.input)?;
    manifest.command = Command::Separate(recorded);
    manifest.solver = Some(cfg.clone());
    manifest.window = Some(window);

    let mixture = manifest.time("read", || read_wav(&args.input))?;
    let res = manifest.time("separate", || separation::separate(&mixture, window, &cfg))?;
    let out = &args.out;
    create_dir(out)?;
    let start = Instant::now();
    for (k, source) in res.sources.iter().enumerate() {
        let name = format!("source_{k}.wav");
        write_wav(out.join(&name), source)?;
        manifest.outputs.push(name);
    }
    emit_matrix(&mut manifest, out, "W.csv".into(), &res.factors.w)?;
    emit_matrix(&mut manifest, out, "H.csv".into(), &res.factors.h)?;
    for (k, mask) in res.masks.masks().iter().enumerate() {
        emit_matrix(&mut manifest, out, format!("masks_{k}.csv"), mask)?;
    }
    emit_trace(&mut manifest, out, &res.trace)?;
    manifest.timings.insert("write".into(), start.elapsed().as_secs_f64());
    manifest.write(out)?;

    pretty(&json!({
        "out": out,
        "rank": cfg.rank,
        "lambda": res.trace.penalty_weight,
        "final_objective": res.trace.final_objective(),
        "zeroed_sources": res.zeroed_sources,
        "line_search_exhausted": res.line_search_exhausted(),
    }))
}

fn synth_demo(args: &SynthArgs) -> Result<String, CliError> {
    let cfg = args.solver.config()?;
    let true_rank = args.true_rank.unwrap_or(cfg.rank);
    let mut manifest = RunManifest::new(Command::SynthDemo(args.clone()));
    manifest.solver = Some(cfg.clone());

    let inst = manifest.time("generate", || synth_scattered_instance(args.f, args.n, true_rank, cfg.seed, args.noise))?;
    let (fp, trace) = manifest.time("solve", || solve(&inst.v, &cfg))?;
    let matched = match_factors(&fp.w, &inst.w_true)?;
    let zero_sources = count_zero_sources(&fp.h, ZERO_ROW_THRESHOLD);

    let out = &args.out;
    create_dir(out)?;
    emit_matrix(&mut manifest, out, "W.csv".into(), &fp.w)?;
    emit_matrix(&mut manifest, out, "H.csv".into(), &fp.h)?;
    emit_trace(&mut manifest, out, &trace)?;
    manifest.write(out)?;

    pretty(&json!({
        "f": args.f,
        "n": args.n,
        "rank": cfg.rank,
        "true_rank": true_rank,
        "seed": cfg.seed,
        "noise": args.noise,
        "variant": cfg.variant.to_string(),
        "lambda": trace.penalty_weight,
        "relative_error": matched.relative_error,
        "permutation": matched.permutation,
        "zero_sources": zero_sources,
        "final_objective": trace.final_objective(),
    }))
}

fn eval(args: &EvalArgs) -> Result<String, CliError> {
    if args.estimates.len() != args.references.len() {
        return Err(CliError::Usage(format!(
            "{} estimates but {} references",
            args.estimates.len(),
            args.references.len()
        )));
    }
    let mut manifest = RunManifest::new(Command::Eval(args.clone()));
    let mut recorded = args.clone();
    let mut load = |paths: &[PathBuf], slot: &mut Vec<PathBuf>| -> Result<Vec<_>, CliError> {
        slot.clear();
        paths
            .iter()
            .map(|p| {
                slot.push(manifest.add_input(p)?);
                Ok(read_wav(p)?)
            })
            .collect()
    };
    let estimates = load(&args.estimates, &mut recorded.estimates)?;
    let references = load(&args.references, &mut recorded.references)?;
    manifest.command = Command::Eval(recorded);

    let metrics = manifest.time("bss_eval", || bss_eval(&estimates, &references))?;
    let records = metrics.records();
    let out = &args.out;
    create_dir(out)?;
    fs::write(out.join("metrics.json"), pretty(&records)? + "\n")?;
    manifest.outputs.push("metrics.json".into());
    manifest.write(out)?;
    pretty(&records)
}

#[derive(Debug, Serialize)]
struct BenchRow {
    f: usize,
    n: usize,
    k: usize,
    variant: String,
    iters: usize,
    mean_secs: f64,
    std_secs: f64,
}

fn bench(args: &BenchArgs) -> Result<String, CliError> {
    let mut manifest = RunManifest::new(Command::Bench(args.clone()));
    let mut rows = Vec::new();
    let start = Instant::now();
    for size in &args.sizes {
        let inst = synth_scattered_instance(size.f, size.n, size.k, args.seed, 0.1)?;
        for variant in [Variant::Baseline, Variant::MinVol, Variant::Sparse] {
            let cfg = SolverConfig::new(size.k)
                .with_variant(variant)
                .with_lambda(args.lambda)
                .with_sparse_weight(args.mu)
                .with_max_iters(args.iters)
                .with_seed(args.seed);
            cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let times: Vec<f64> = (0..args.repeats)
                .map(|_| {
                    let t = Instant::now();
                    solve(&inst.v, &cfg).map(|_| t.elapsed().as_secs_f64())
                })
                .collect::<Result<_, _>>()?;
            let mean = times.iter().sum::<f64>() / times.len() as f64;
            let var = if times.len() > 1 {
                times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (times.len() - 1) as f64
            } else {
                0.0
            };
            rows.push(BenchRow { f: size.f, n: size.n, k: size.k, variant: variant.to_string(), iters: args.iters, mean_secs: mean, std_secs: var.sqrt() });
        }
    }
    manifest.timings.insert("bench".into(), start.elapsed().as_secs_f64());
    let out = &args.out;
    create_dir(out)?;
    fs::write(out.join("bench.json"), pretty(&rows)? + "\n")?;
    manifest.outputs.push("bench.json".into());
    manifest.write(out)?;

    let mut text = format!("{:>6} {:>6} {:>4}  {:<9} {:>22}\n", "F", "N", "K", "variant", "time (s)");
    for r in &rows {
        text += &format!("{:>6} {:>6} {:>4}  {:<9} {:>10.4} ± {:.4}\n", r.f, r.n, r.k, r.variant, r.mean_secs, r.std_secs);
    }
    Ok(text.trim_end().to_string())
}

fn replay(args: &ReplayArgs) -> Result<String, CliError> {
    let manifest = RunManifest::read(&args.manifest)?;
    let source_dir = args.manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let target = args.out.clone().unwrap_or_else(|| source_dir.join("replay"));
    for (path, recorded) in &manifest.input_hashes {
        if hash_file(Path::new(path))? != *recorded {
            return Err(CliError::Runtime(format!("input {path} changed since the recorded run")));
        }
    }
    let mut command = manifest.command.clone();
    match &mut command {
        Command::Separate(a) => a.out = target.clone(),
        Command::SynthDemo(a) => a.out = target.clone(),
        Command::Eval(a) => a.out = target.clone(),
        Command::Bench(a) => a.out = target.clone(),
        Command::Replay(_) => return Err(CliError::Runtime("a replay manifest cannot be replayed".into())),
    }
    run(&command)?;

    let (mut compared, mut mismatched) = (Vec::new(), Vec::new());
    for name in manifest.outputs.iter().filter(|n| n.ends_with(".csv")) {
        let original = fs::read(source_dir.join(name))?;
        let again = fs::read(target.join(name))?;
        if original != again {
            mismatched.push(name.clone());
        }
        compared.push(name.clone());
    }
    if !mismatched.is_empty() {
        return Err(CliError::Runtime(format!("replayed artifacts differ: {}", mismatched.join(", "))));
    }
    pretty(&json!({ "identical": true, "compared": compared, "out": target }))
}
