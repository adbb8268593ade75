use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use log::info;
use wmf_lab_core::eval::{
    evaluate, make_split, preprocess, read_manifest, write_manifest, EvalSplit, Preprocessed, Role,
};
use wmf_lab_core::experiment::{
    emit_report, export_pairs, ingest as ingest_file, report_rows, run_paired, run_sweep,
    IngestOptions, MetricSummary, ReportRow, SweepResult, SweepSpec,
};
use wmf_lab_core::parallel;
use wmf_lab_core::train::{fit, load_model, save_model, ModelKind};
use wmf_lab_core::verify::{run_verify, CheckGroup, VerifyOptions};

use crate::config::ExperimentConfig;
use crate::CommonArgs;

/// Config file (or defaults) with command-line overrides applied.
pub fn resolve(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = args.seed {
        cfg.run.seed = v;
    }
    if let Some(v) = args.model {
        cfg.model.kind = v;
    }
    if let Some(v) = args.rank {
        cfg.model.rank = v;
    }
    if let Some(v) = &args.alpha {
        cfg.sweep.alpha = v.0.clone();
    }
    if let Some(v) = &args.lambda {
        cfg.sweep.lambda = v.0.clone();
    }
    if let Some(v) = args.threads {
        cfg.run.threads = v;
    }
    if let Some(v) = &args.out {
        cfg.run.out = v.clone();
    }
    if let Some(v) = args.format {
        cfg.run.format = v;
    }
    if let Some(v) = args.max_users {
        cfg.data.max_users = Some(v);
    }
    if let Some(v) = args.max_items {
        cfg.data.max_items = Some(v);
    }
    if let Some(v) = &args.input {
        cfg.data.path = Some(v.clone());
    }
    if let Some(v) = args.input_format {
        cfg.data.format = v;
    }
    if let Some(v) = &args.manifest {
        cfg.split.manifest = Some(v.clone());
    }
    cfg.validate()?;
    parallel::init_threads(cfg.run.threads)
        .map_err(|e| anyhow!("configuring {} threads: {e}", cfg.run.threads))?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.run.out)
        .with_context(|| format!("creating {}", cfg.run.out.display()))?;
    Ok(&cfg.run.out)
}

fn load_data(cfg: &ExperimentConfig) -> Result<Preprocessed> {
    let path = cfg
        .data
        .path
        .as_ref()
        .ok_or_else(|| anyhow!("no input file: pass --input or set [data] path"))?;
    let opts = IngestOptions {
        format: cfg.data.format,
        error_budget: cfg.data.error_budget,
    };
    let raw = ingest_file(path, &opts).with_context(|| format!("ingesting {}", path.display()))?;
    let data = preprocess(&raw.records, &cfg.split_spec(), &cfg.subsample())?;
    info!(
        "{}: {} records ({} skipped) -> {} users x {} items, {} positives",
        path.display(),
        raw.records.len(),
        raw.skipped.len(),
        data.matrix.n_users(),
        data.matrix.n_items(),
        data.matrix.nnz()
    );
    Ok(data)
}

fn load_split(cfg: &ExperimentConfig, data: &Preprocessed) -> Result<EvalSplit> {
    let split = match &cfg.split.manifest {
        Some(p) => {
            let f = File::open(p).with_context(|| format!("opening manifest {}", p.display()))?;
            read_manifest(BufReader::new(f), data)?
        }
        None => make_split(&data.matrix, &cfg.split_spec())?,
    };
    info!(
        "split: {} training users x {} items, {} validation and {} test users",
        split.train.n_users(),
        split.train.n_items(),
        split.val.len(),
        split.test.len()
    );
    Ok(split)
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    f(&mut w)?;
    w.flush()?;
    info!("wrote {}", path.display());
    Ok(())
}

pub fn ingest(args: &CommonArgs) -> Result<bool> {
    let cfg = resolve(args)?;
    let data = load_data(&cfg)?;
    let dir = out_dir(&cfg)?;
    write_file(&dir.join("interactions.txt"), |w| {
        Ok(export_pairs(w, &data)?)
    })?;
    println!(
        "users {}\nitems {}\npositives {}",
        data.matrix.n_users(),
        data.matrix.n_items(),
        data.matrix.nnz()
    );
    Ok(true)
}

pub fn split(args: &CommonArgs) -> Result<bool> {
    let cfg = resolve(args)?;
    let data = load_data(&cfg)?;
    let split = load_split(&cfg, &data)?;
    let dir = out_dir(&cfg)?;
    write_file(&dir.join("split.manifest"), |w| {
        Ok(write_manifest(w, &split, &data)?)
    })?;
    println!(
        "train_users {}\ntrain_items {}\nval_users {}\ntest_users {}",
        split.train.n_users(),
        split.train.n_items(),
        split.val.len(),
        split.test.len()
    );
    Ok(true)
}

pub fn train(args: &CommonArgs) -> Result<bool> {
    let cfg = resolve(args)?;
    let data = load_data(&cfg)?;
    let split = load_split(&cfg, &data)?;
    let (alpha, lambda) = (cfg.sweep.alpha[0], cfg.sweep.lambda[0]);
    let start = Instant::now();
    let (model, stats) = fit(
        &split.train,
        cfg.model.kind,
        cfg.model.rank,
        alpha,
        lambda,
        &cfg.train_config(),
    )?;
    info!(
        "trained {} (alpha {alpha}, lambda {lambda}) in {:.2}s: {} alternations, {} PCG iterations",
        cfg.model.kind,
        start.elapsed().as_secs_f64(),
        stats.alternations,
        stats.pcg_iterations
    );
    for (label, res) in &stats.unconverged {
        log::warn!("{label}: PCG stopped at the iteration cap with residual {res:.3e}");
    }
    let dir = out_dir(&cfg)?;
    let path = dir.join("model.bin");
    save_model(&path, &model)?;
    if let Some(obj) = stats.objective_history.last() {
        println!("objective {obj}");
    }
    println!("model {}", path.display());
    Ok(true)
}

fn summary_row(
    kind: ModelKind,
    rank: usize,
    alpha: f64,
    lambda: f64,
    m: &MetricSummary,
) -> ReportRow {
    ReportRow {
        model: kind.to_string(),
        rank,
        alpha,
        lambda,
        recall_at_20: m.recall_at_20,
        recall_at_50: m.recall_at_50,
        ndcg_at_100: m.ndcg_at_100,
        se_recall_20: m.se_recall_20,
        se_recall_50: m.se_recall_50,
        se_ndcg_100: m.se_ndcg_100,
    }
}

pub fn eval(args: &CommonArgs, model_file: &Path, role: Role) -> Result<bool> {
    let mut cfg = resolve(args)?;
    let data = load_data(&cfg)?;
    let split = load_split(&cfg, &data)?;
    let model =
        load_model(model_file).with_context(|| format!("loading {}", model_file.display()))?;
    if model.n_items() != split.train.n_items() {
        bail!(
            "model has {} items but the split's training matrix has {}; was it trained on this split?",
            model.n_items(),
            split.train.n_items()
        );
    }
    let report = evaluate(&model, &split, role)?;
    let h = model.hyper();
    let row = summary_row(
        model.kind(),
        h.rank,
        h.alpha,
        h.lambda,
        &MetricSummary::from(&report),
    );
    // Report the settings the model was trained with, not the command-line defaults.
    cfg.model.kind = model.kind();
    cfg.model.rank = h.rank;
    cfg.sweep.alpha = vec![h.alpha];
    cfg.sweep.lambda = vec![h.lambda];
    let settings = cfg.settings()?;
    let mut stdout = std::io::stdout().lock();
    emit_report(
        &mut stdout,
        std::slice::from_ref(&row),
        &settings,
        cfg.run.format,
    )?;
    let dir = out_dir(&cfg)?;
    let path = dir.join(format!(
        "eval-{}.{}",
        role.name(),
        cfg.run.format.extension()
    ));
    write_file(&path, |w| {
        Ok(emit_report(w, &[row], &settings, cfg.run.format)?)
    })?;
    Ok(true)
}

fn write_outputs(cfg: &ExperimentConfig, results: &[SweepResult]) -> Result<Vec<ReportRow>> {
    let dir = out_dir(cfg)?;
    let rows = report_rows(results);
    let settings = cfg.settings()?;
    write_file(
        &dir.join(format!("report.{}", cfg.run.format.extension())),
        |w| Ok(emit_report(w, &rows, &settings, cfg.run.format)?),
    )?;
    write_file(&dir.join("config.resolved.toml"), |w| {
        Ok(w.write_all(cfg.to_toml()?.as_bytes())?)
    })?;
    Ok(rows)
}

pub fn sweep(args: &CommonArgs, paired: bool, no_expand: bool) -> Result<bool> {
    let mut cfg = resolve(args)?;
    cfg.sweep.paired |= paired;
    if no_expand {
        cfg.sweep.expand = false;
    }
    let data = load_data(&cfg)?;
    let split = load_split(&cfg, &data)?;
    let spec = SweepSpec {
        kind: cfg.model.kind,
        rank: cfg.model.rank,
        alphas: cfg.sweep.alpha.clone(),
        lambdas: cfg.sweep.lambda.clone(),
        expand: cfg.sweep.expand,
        workers: cfg.sweep.workers,
        train: cfg.train_config(),
    };
    let start = Instant::now();
    let results: Vec<SweepResult> = if cfg.sweep.paired {
        let p = run_paired(&split, &spec)?;
        p.weighted.into_iter().chain([p.unweighted]).collect()
    } else {
        vec![run_sweep(&split, &spec)?]
    };
    info!("sweep finished in {:.1}s", start.elapsed().as_secs_f64());
    for r in &results {
        for e in &r.expansions {
            info!("{}: {e}", r.kind);
        }
        for c in r.cells.iter().filter(|c| c.error.is_some()) {
            log::warn!(
                "{} alpha={} lambda={}: {}",
                r.kind,
                c.alpha,
                c.lambda,
                c.error.as_deref().unwrap_or("")
            );
        }
    }
    let dir = out_dir(&cfg)?;
    write_file(&dir.join("cells.jsonl"), |w| {
        for r in &results {
            for c in &r.cells {
                serde_json::to_writer(
                    &mut *w,
                    &serde_json::json!({ "model": r.kind, "rank": r.rank, "cell": c }),
                )?;
                writeln!(w)?;
            }
        }
        Ok(())
    })?;
    write_file(&dir.join("sweep.json"), |w| {
        Ok(serde_json::to_writer_pretty(w, &results)?)
    })?;
    let rows = write_outputs(&cfg, &results)?;
    let mut stdout = std::io::stdout().lock();
    emit_report(
        &mut stdout,
        &rows,
        &[],
        wmf_lab_core::experiment::ReportFormat::Table,
    )?;
    Ok(!rows.is_empty())
}

pub fn report(args: &CommonArgs, from: Option<&Path>) -> Result<bool> {
    let mut cfg = resolve(args)?;
    let from = match from {
        Some(p) => p.to_path_buf(),
        None => cfg.run.out.join("sweep.json"),
    };
    let from = from.as_path();
    // Settings come from the sweep's own resolved config when it is alongside.
    let saved = from.with_file_name("config.resolved.toml");
    if args.config.is_none() && saved.is_file() {
        let mut sweep_cfg = ExperimentConfig::load(&saved)?;
        sweep_cfg.run.format = cfg.run.format;
        sweep_cfg.run.out = cfg.run.out.clone();
        cfg = sweep_cfg;
    }
    let text = fs::read_to_string(from).with_context(|| format!("reading {}", from.display()))?;
    let results: Vec<SweepResult> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", from.display()))?;
    let rows = report_rows(&results);
    let mut stdout = std::io::stdout().lock();
    emit_report(&mut stdout, &rows, &cfg.settings()?, cfg.run.format)?;
    if args.out.is_some() {
        write_outputs(&cfg, &results)?;
    }
    Ok(true)
}

pub fn verify(args: &CommonArgs, filter: Option<&str>, instances: usize) -> Result<bool> {
    let cfg = resolve(args)?;
    let groups = filter
        .map(|f| {
            f.split(',')
                .map(|g| g.trim().parse::<CheckGroup>())
                .collect::<std::result::Result<Vec<_>, _>>()
        })
        .transpose()?
        .unwrap_or_default();
    let report = run_verify(&VerifyOptions {
        groups,
        seed: cfg.run.seed,
        instances,
        ..VerifyOptions::default()
    });
    print!("{}", report.render_table());
    let passed = report.passed();
    println!(
        "{}",
        if passed {
            "verify: PASS"
        } else {
            "verify: FAIL"
        }
    );
    Ok(passed)
}
