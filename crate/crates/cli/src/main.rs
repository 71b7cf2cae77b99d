use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use fgp::attention::export_attention_heatmap;
use fgp::dataset::{
    generate_synthetic_world, get_model, load_dataset, Checkpoint, Dataset, SyntheticWorldSpec,
};
use fgp::pipeline::{
    build_semantic, parse_topk, run_ablation, sweep_csv, sweep_hyperparams, train_pipeline,
    AblationVariant, EvalMode, PipelineConfig,
};
use fgp::{FgpError, Result};

const CHECKPOINT_FILE: &str = "model.fgpc";
const METADATA_FILE: &str = "run.json";

/// Zero-shot classification by fine-grained graph propagation.
#[derive(Debug, Parser)]
#[command(name = "fgp", version)]
struct Cli {
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic compositional dataset.
    GenData(GenData),
    /// Embed and cluster phrases; write centroids and per-class partitions.
    Cluster(Cluster),
    /// Run the full training pipeline and write a checkpoint.
    Train(Train),
    /// Score the test split with a checkpoint.
    Eval(Eval),
    /// Train and evaluate one ablation variant (or all of them).
    Ablate(Ablate),
    /// Grid over K and GCN depth; writes sweep.csv.
    Sweep(Sweep),
    /// Attention heatmaps (CSV and PGM) for test samples.
    ExportAttn(ExportAttn),
}

#[derive(Debug, Args)]
struct Common {
    /// Output directory; every file the command writes goes here.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// JSON file of flat dotted config keys.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Config override `key=value`, applied after the file. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct GenData {
    #[arg(short, long, default_value = "data")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    attributes: usize,
    #[arg(long, default_value_t = 3)]
    values: usize,
    #[arg(long, default_value_t = 18)]
    seen: usize,
    #[arg(long, default_value_t = 6)]
    unseen: usize,
    #[arg(long, default_value_t = 40)]
    samples: usize,
    #[arg(long, default_value_t = 2)]
    regions_per_attribute: usize,
    #[arg(long, default_value_t = 2.0)]
    signal: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
}

#[derive(Debug, Args)]
struct Cluster {
    /// Dataset manifest.
    #[arg(short, long)]
    manifest: PathBuf,
    /// Number of centroids.
    #[arg(short, long)]
    k: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Train {
    #[arg(short, long)]
    manifest: PathBuf,
    /// Skip attention fine-tuning; fit only the classifier bank.
    #[arg(long)]
    skip_stage1: bool,
    /// Skip adapter fine-tuning after propagation.
    #[arg(long)]
    skip_stage2: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Eval {
    #[arg(short, long)]
    manifest: PathBuf,
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// zsl (unseen classes) or gzsl (all classes).
    #[arg(long, default_value = "zsl")]
    mode: String,
    /// Comma-separated k list.
    #[arg(long, default_value = "1,2,5,10,20")]
    topk: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Ablate {
    #[arg(short, long)]
    manifest: PathBuf,
    /// FULL, NO_SC_LOSS, NO_GLOBAL, NO_SC_NO_GLOBAL, GLOBAL_ONLY (aliases L, G, LG, F) or all.
    #[arg(long, default_value = "all")]
    variant: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Sweep {
    #[arg(short, long)]
    manifest: PathBuf,
    /// Values of K, e.g. "1,2,3" or "1-5".
    #[arg(long, default_value = "1-5")]
    k_range: String,
    /// GCN depths, same syntax.
    #[arg(long, default_value = "1-3")]
    l_range: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct ExportAttn {
    #[arg(short, long)]
    manifest: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Comma-separated sample ids from the test split.
    #[arg(long)]
    samples: String,
    #[arg(long, default_value_t = 0)]
    channel: usize,
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

impl Common {
    fn config(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        self.apply(&mut c)?;
        Ok(c)
    }

    fn apply(&self, c: &mut PipelineConfig) -> Result<()> {
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| FgpError::validation(format!("override {o:?} is not key=value")))?;
            c.set(k.trim(), &parse_value(v.trim()))?;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c.validate()
    }
}

/// `"1,3,5"` or `"2-4"` (inclusive), mixed freely.
fn parse_range(text: &str) -> Result<Vec<usize>> {
    let bad = || FgpError::validation(format!("bad range {text:?}"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) =
                    (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

fn parse_ids(text: &str) -> Result<Vec<u32>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| FgpError::validation(format!("bad sample id {s:?}")))
        })
        .collect()
}

struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| FgpError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let p = self.dir.join(name);
        fs::write(&p, bytes).map_err(|e| FgpError::io(&p, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json(&mut self, name: &str, v: &Value) -> Result<()> {
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        self.write(name, s)
    }

    /// Run metadata, always the last file written.
    fn finish(mut self, command: &str, config: Value, seeds: Value, inputs: Value) -> Result<()> {
        let mut outputs = self.written.clone();
        outputs.push(METADATA_FILE.to_string());
        let meta = json!({
            "command": command,
            "versions": { "fgp": env!("CARGO_PKG_VERSION") },
            "seeds": seeds,
            "inputs": inputs,
            "config": config,
            "outputs": outputs,
        });
        self.json(METADATA_FILE, &meta)
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn load(manifest: &Path) -> Result<Dataset> {
    let ds = load_dataset(manifest)?;
    log::info!(
        "{}: {} classes ({} seen), {} train / {} test samples",
        manifest.display(),
        ds.classes.len(),
        ds.num_seen,
        ds.train.len(),
        ds.test.len()
    );
    Ok(ds)
}

fn config_value(c: &PipelineConfig) -> Value {
    Value::Object(c.to_flat().into_iter().collect())
}

fn gen_data(a: &GenData) -> Result<()> {
    let spec = SyntheticWorldSpec {
        attributes: a.attributes,
        values: a.values,
        seen_classes: a.seen,
        unseen_classes: a.unseen,
        samples_per_class: a.samples,
        regions_per_attribute: a.regions_per_attribute,
        signal_strength: a.signal,
        noise: a.noise,
        seed: a.seed,
        ..SyntheticWorldSpec::default()
    };
    let world = generate_synthetic_world(&spec)?;
    let mut out = Outputs::new(&a.out)?;
    for (name, bytes) in &world.files {
        out.write(name, bytes)?;
    }
    let spec_json = json!({
        "attributes": spec.attributes,
        "values": spec.values,
        "seen_classes": spec.seen_classes,
        "unseen_classes": spec.unseen_classes,
        "samples_per_class": spec.samples_per_class,
        "regions_per_attribute": spec.regions_per_attribute,
        "signal_strength": spec.signal_strength,
        "noise": spec.noise,
        "grid": [spec.grid.0, spec.grid.1],
        "feature_dim": spec.feature_dim,
        "word_dim": spec.word_dim,
    });
    println!(
        "wrote {} classes to {}",
        world.tuples.len(),
        a.out.display()
    );
    out.finish(
        "gen-data",
        spec_json,
        json!({ "world": spec.seed }),
        json!({}),
    )
}

fn cluster(a: &Cluster) -> Result<()> {
    let mut config = a.common.config()?;
    if let Some(k) = a.k {
        config.k = k;
        config.validate()?;
    }
    if config.k == 0 {
        return Err(FgpError::validation("cluster needs k >= 1"));
    }
    let ds = load(&a.manifest)?;
    let sem = build_semantic(&config, &ds)?;
    let cents = sem.centroids.as_ref().expect("k >= 1");
    let mut out = Outputs::new(&a.common.out)?;
    out.json(
        "centroids.json",
        &json!({
            "k": cents.k(),
            "seed": cents.seed,
            "objective": cents.objective(),
            "iterations": cents.iterations,
            "objective_trace": cents.objective_trace,
            "centroids": cents.centroids.row_iter().collect::<Vec<_>>(),
        }),
    )?;
    let partitions: Vec<Value> = ds
        .classes
        .iter()
        .zip(&sem.partitions.classes)
        .zip(&sem.phrases)
        .map(|((c, p), phrases)| {
            let channels: Vec<Vec<&str>> = p
                .members
                .iter()
                .map(|m| m.iter().map(|&i| phrases[i].text.as_str()).collect())
                .collect();
            json!({
                "class_id": c.id,
                "name": c.name,
                "seen": c.seen,
                "channels": channels,
                "fallback": p.fallback,
                "calibration": sem.calibration.row(ds.class_index(c.id).expect("listed")),
            })
        })
        .collect();
    out.json("partitions.json", &Value::Array(partitions))?;
    println!("k = {}, objective {:.6}", cents.k(), cents.objective());
    out.finish(
        "cluster",
        config_value(&config),
        json!({ "kmeans": config.seed }),
        json!({ "manifest": path_str(&a.manifest) }),
    )
}

fn train(a: &Train) -> Result<()> {
    let mut config = a.common.config()?;
    config.stage1.skip |= a.skip_stage1;
    config.stage2.skip |= a.skip_stage2;
    let ds = load(&a.manifest)?;
    let run = train_pipeline(&config, &ds)?;
    let mut out = Outputs::new(&a.common.out)?;
    out.write(CHECKPOINT_FILE, run.checkpoint(&config).encode())?;
    out.json(
        "curves.json",
        &json!({
            "stage1": run.stage1_curve,
            "gcn": run.gcn_curve,
            "stage2": run.stage2_curve,
        }),
    )?;
    println!(
        "trained: stage 1 {} epochs, gcn {} epochs, stage 2 {} epochs",
        run.stage1_curve.len(),
        run.gcn_curve.len(),
        run.stage2_curve.len()
    );
    out.finish(
        "train",
        config_value(&config),
        json!({ "base": config.seed }),
        json!({ "manifest": path_str(&a.manifest) }),
    )
}

fn checkpoint_config(ck: &Checkpoint) -> Result<PipelineConfig> {
    if ck.contains("config") {
        PipelineConfig::from_json(ck.text("config")?)
    } else {
        Ok(PipelineConfig::default())
    }
}

fn eval(a: &Eval) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let model = get_model(&ck)?;
    let mut config = checkpoint_config(&ck)?;
    if let Some(p) = &a.common.config {
        config.apply_json(&fs::read_to_string(p).map_err(|e| FgpError::io(p, e))?)?;
    }
    a.common.apply(&mut config)?;
    config.eval_mode = EvalMode::parse(&a.mode)?;
    config.topk = parse_topk(&a.topk)?;
    config.validate()?;
    let ds = load(&a.manifest)?;
    let report = fgp::pipeline::evaluate(
        &model,
        &ds,
        config.eval_mode,
        &config.topk,
        config.seed,
        config.to_flat(),
    )?;
    let mut out = Outputs::new(&a.common.out)?;
    out.write("report.json", report.to_json())?;
    for h in &report.hits {
        println!("hit@{:<3} {:.4}", h.k, h.rate);
    }
    out.finish(
        "eval",
        config_value(&config),
        json!({ "base": config.seed }),
        json!({ "manifest": path_str(&a.manifest), "checkpoint": path_str(&a.checkpoint) }),
    )
}

fn ablate(a: &Ablate) -> Result<()> {
    let config = a.common.config()?;
    let variants: Vec<AblationVariant> = if a.variant.eq_ignore_ascii_case("all") {
        AblationVariant::ALL.to_vec()
    } else {
        a.variant
            .split(',')
            .map(|v| v.trim().parse())
            .collect::<Result<_>>()?
    };
    let ds = load(&a.manifest)?;
    let mut out = Outputs::new(&a.common.out)?;
    let mut table = String::from("variant");
    for k in &config.topk {
        table.push_str(&format!(",hit{k}"));
    }
    table.push('\n');
    for v in variants {
        let (run, report) = run_ablation(v, &config, &ds)?;
        let stem = v.name().to_ascii_lowercase();
        out.write(&format!("{stem}.report.json"), report.to_json())?;
        out.write(
            &format!("{stem}.fgpc"),
            run.checkpoint(&v.apply(&config)).encode(),
        )?;
        table.push_str(v.name());
        for h in &report.hits {
            table.push_str(&format!(",{}", h.rate));
        }
        table.push('\n');
        println!(
            "{:<16} hit@1 {:.4}",
            v.name(),
            report.hit(1).unwrap_or(f64::NAN)
        );
    }
    out.write("ablation.csv", table)?;
    out.finish(
        "ablate",
        config_value(&config),
        json!({ "base": config.seed }),
        json!({ "manifest": path_str(&a.manifest), "variant": a.variant }),
    )
}

fn sweep(a: &Sweep) -> Result<()> {
    let config = a.common.config()?;
    let ks = parse_range(&a.k_range)?;
    let ls = parse_range(&a.l_range)?;
    let ds = load(&a.manifest)?;
    let cells = sweep_hyperparams(&ks, &ls, &config, &ds)?;
    let csv = sweep_csv(&cells);
    print!("{csv}");
    let mut out = Outputs::new(&a.common.out)?;
    out.write("sweep.csv", csv)?;
    out.finish(
        "sweep",
        config_value(&config),
        json!({ "base": config.seed }),
        json!({ "manifest": path_str(&a.manifest), "k_range": ks, "l_range": ls }),
    )
}

fn export_attn(a: &ExportAttn) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let model = get_model(&ck)?;
    let ids = parse_ids(&a.samples)?;
    if ids.is_empty() {
        return Err(FgpError::validation("no sample ids given"));
    }
    let ds = load(&a.manifest)?;
    let mut out = Outputs::new(&a.out)?;
    for id in &ids {
        let sample = ds
            .test
            .iter()
            .find(|s| s.grid.sample_id == *id)
            .ok_or_else(|| FgpError::validation(format!("test split has no sample {id}")))?;
        let f = model.features(&sample.grid)?;
        let stem = format!("sample{id}_channel{}", a.channel);
        export_attention_heatmap(&f, a.channel, &out.dir.join(&stem))?;
        out.written.push(format!("{stem}.csv"));
        out.written.push(format!("{stem}.pgm"));
    }
    println!("wrote {} heatmaps to {}", ids.len(), a.out.display());
    out.finish(
        "export-attn",
        config_value(&checkpoint_config(&ck)?),
        json!({}),
        json!({
            "manifest": path_str(&a.manifest),
            "checkpoint": path_str(&a.checkpoint),
            "samples": ids,
            "channel": a.channel,
        }),
    )
}

fn exit_code(e: &FgpError) -> u8 {
    match e {
        _ if e.is_numeric() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Cluster(a) => cluster(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
        Command::Sweep(a) => sweep(a),
        Command::ExportAttn(a) => export_attn(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
