//! `attribench` command-line driver.
//!
//! Every subcommand works inside an output directory (`--out`, default
//! `out`): `gen-data` writes `dataset.bin`, `train` reads it and writes
//! `model.bin`, and the remaining commands read both. `--data` and `--model`
//! point elsewhere when needed.

pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use attribench::attrib::{explain, load_attribution, save_attribution, AttributionMap, Method};
use attribench::codec::write_atomic;
use attribench::metrics::{evaluate_all, ClassSelection, EvaluationReport};
use attribench::nn::{load_model, save_model, ModelSpec};
use attribench::render::{colormap, render_for_method, render_heatmap, write_pgm, write_ppm, HeatmapImage};
use attribench::rng::derive_seed;
use attribench::synth::{
    evaluate_classifier, generate_dataset, label_cooccurrence, load_dataset, save_dataset, split_validation, train,
    ClassifierMetrics, Motif, SampleRecord,
};
use attribench::Network;
use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;

/// Prints to stdout, ignoring a closed pipe.
fn say(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().write_all(text.as_bytes());
}

macro_rules! say {
    ($($arg:tt)*) => {
        say(&format!("{}\n", format_args!($($arg)*)))
    };
}

#[derive(Parser, Debug)]
#[command(name = "attribench", version, about = "Attribution benchmark on a synthetic multi-label task")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct Inputs {
    /// Dataset container; defaults to OUT/dataset.bin.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model container; defaults to OUT/model.bin.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic dataset.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train the classifier on the first 80% of the dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Explain one sample with one or more methods.
    Explain {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        /// Comma-separated method ids; defaults to the configured list.
        #[arg(long)]
        methods: Option<String>,
        /// Sample id (e.g. s001600) or index.
        #[arg(long)]
        sample: String,
        /// Class to explain; defaults to every predicted class.
        #[arg(long)]
        class: Option<usize>,
    },
    /// Run the metric benchmark on the test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        methods: Option<String>,
        /// Evaluate only this sample.
        #[arg(long)]
        sample: Option<String>,
        /// Explain this class instead of the predicted ones.
        #[arg(long)]
        class: Option<usize>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Label co-occurrence matrix of the dataset.
    Cooccur {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Render stored attributions to PGM/PPM.
    Render {
        #[command(flatten)]
        common: Common,
        /// Attribution files; defaults to every .atbx under OUT/explain.
        files: Vec<PathBuf>,
    },
}

/// Parses `argv` (program name first) and runs the subcommand. Returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RunConfig::parse(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

impl Inputs {
    fn data(&self, out: &Path) -> PathBuf {
        self.data.clone().unwrap_or_else(|| out.join("dataset.bin"))
    }

    fn model(&self, out: &Path) -> PathBuf {
        self.model.clone().unwrap_or_else(|| out.join("model.bin"))
    }
}

/// First 80% for training and validation, the rest for testing.
pub fn split_test(samples: &[SampleRecord]) -> (&[SampleRecord], &[SampleRecord]) {
    samples.split_at(samples.len() * 4 / 5)
}

fn read_dataset(path: &Path) -> Result<Vec<SampleRecord>> {
    load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn read_model(path: &Path) -> Result<Network> {
    let (spec, weights) = load_model(path).with_context(|| format!("loading model {}", path.display()))?;
    Ok(Network::new(spec, weights)?)
}

fn find_sample<'a>(samples: &'a [SampleRecord], key: &str) -> Result<(usize, &'a SampleRecord)> {
    if let Some(found) = samples.iter().enumerate().find(|(_, s)| s.sample_id == key) {
        return Ok(found);
    }
    match key.parse::<usize>() {
        Ok(i) if i < samples.len() => Ok((i, &samples[i])),
        _ => bail!("no sample '{key}' in a dataset of {}", samples.len()),
    }
}

fn heatmap_for(map: &AttributionMap) -> Result<HeatmapImage> {
    Ok(match map.method_id.parse::<Method>() {
        Ok(m) => render_for_method(map, m)?,
        Err(_) => render_heatmap(map, false)?,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData { common } => gen_data(&common),
        Command::Train { common, inputs } => train_cmd(&common, &inputs),
        Command::Explain {
            common,
            inputs,
            methods,
            sample,
            class,
        } => explain_cmd(&common, &inputs, methods.as_deref(), &sample, class),
        Command::Evaluate {
            common,
            inputs,
            methods,
            sample,
            class,
            jobs,
        } => evaluate_cmd(&common, &inputs, methods.as_deref(), sample.as_deref(), class, jobs),
        Command::Cooccur { common, data } => cooccur_cmd(&common, data),
        Command::Render { common, files } => render_cmd(&common, files),
    }
}

fn gen_data(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let samples = generate_dataset(&cfg.data)?;
    let path = common.out.join("dataset.bin");
    save_dataset(&samples, &path)?;
    say!("wrote {} samples to {}", samples.len(), path.display());
    Ok(())
}

pub fn classifier_csv(m: &ClassifierMetrics) -> String {
    let mut s = String::from("class,precision,recall,f1\n");
    for (k, c) in m.per_class.iter().enumerate() {
        let name = Motif::ALL.get(k).map_or("?", |m| m.name());
        writeln!(s, "{k}:{name},{},{},{}", c.precision, c.recall, c.f1).unwrap();
    }
    writeln!(s, "micro,{},{},{}", m.micro.precision, m.micro.recall, m.micro.f1).unwrap();
    writeln!(s, "macro,{},{},{}", m.macro_.precision, m.macro_.recall, m.macro_.f1).unwrap();
    s
}

fn train_cmd(common: &Common, inputs: &Inputs) -> Result<()> {
    let cfg = load_config(common)?;
    let samples = read_dataset(&inputs.data(&common.out))?;
    let (train_val, test) = split_test(&samples);
    let (train_set, val_set) = split_validation(train_val);
    if test.is_empty() {
        bail!("dataset of {} samples leaves no test split", samples.len());
    }
    let first = &samples[0];
    let (c, h, w) = first.image.chw()?;
    let spec = ModelSpec::default_cnn([c, h, w], first.labels.len())?;
    let start = Instant::now();
    let (weights, log) = train(&spec, &cfg.train, train_set, val_set)?;
    let net = Network::new(spec, weights)?;
    let metrics = evaluate_classifier(&net, test, cfg.eval.threshold)?;
    let model_path = inputs.model(&common.out);
    let (spec, weights) = net.into_parts();
    save_model(&spec, &weights, &model_path)?;
    write_text(&common.out.join("train_log.csv"), &log.to_csv())?;
    write_text(&common.out.join("classifier_metrics.csv"), &classifier_csv(&metrics))?;
    say!(
        "trained {} epochs in {:.1}s (best epoch {}, val loss {:.4}); test micro-F1 {:.4}; wrote {}",
        log.epochs.len() - 1,
        start.elapsed().as_secs_f64(),
        log.best_epoch,
        log.best_val_loss(),
        metrics.micro.f1,
        model_path.display()
    );
    Ok(())
}

fn explain_cmd(
    common: &Common,
    inputs: &Inputs,
    methods: Option<&str>,
    sample: &str,
    class: Option<usize>,
) -> Result<()> {
    let cfg = load_config(common)?;
    let net = read_model(&inputs.model(&common.out))?;
    let samples = read_dataset(&inputs.data(&common.out))?;
    let methods = match methods {
        Some(list) => config::parse_methods(list)?,
        None => cfg.methods.clone(),
    };
    let (index, record) = find_sample(&samples, sample)?;
    let classes = match class {
        Some(k) if k >= net.num_classes() => bail!("class {k} out of range for {} classes", net.num_classes()),
        Some(k) => vec![k],
        None => {
            let p = net.probabilities(&record.image)?;
            let predicted: Vec<usize> = (0..p.len()).filter(|&k| p[k] > cfg.eval.threshold).collect();
            if predicted.is_empty() {
                vec![(0..p.len()).fold(0, |b, k| if p[k] > p[b] { k } else { b })]
            } else {
                predicted
            }
        }
    };
    let mut outputs = Vec::new();
    for &k in &classes {
        let explain_cfg = cfg.eval.explain.reseeded(derive_seed(cfg.seed, &[index as u64, k as u64]));
        for &m in &methods {
            let map = explain(&net, &record.image, k, m, &explain_cfg)
                .with_context(|| format!("{m} on {} class {k}", record.sample_id))?;
            let heat = render_for_method(&map, m)?;
            outputs.push((format!("{}_c{k}_{}", record.sample_id, m.id()), map, heat));
        }
    }
    let dir = common.out.join("explain");
    for (stem, map, heat) in &outputs {
        save_attribution(map, &dir.join(format!("{stem}.atbx")))?;
        write_pgm(heat, &dir.join(format!("{stem}.pgm")))?;
        write_ppm(&colormap(heat)?, &dir.join(format!("{stem}.ppm")))?;
        say!("{stem}: {:.4}s", map.elapsed_seconds);
    }
    Ok(())
}

fn evaluate_cmd(
    common: &Common,
    inputs: &Inputs,
    methods: Option<&str>,
    sample: Option<&str>,
    class: Option<usize>,
    jobs: Option<usize>,
) -> Result<()> {
    let mut cfg = load_config(common)?;
    let net = read_model(&inputs.model(&common.out))?;
    let samples = read_dataset(&inputs.data(&common.out))?;
    if let Some(list) = methods {
        cfg.methods = config::parse_methods(list)?;
    }
    if let Some(k) = class {
        cfg.eval.classes = ClassSelection::Fixed(k);
    }
    if let Some(j) = jobs {
        cfg.eval.jobs = j.max(1);
    }
    let (_, test) = split_test(&samples);
    let slice: Vec<SampleRecord> = match sample {
        Some(key) => vec![find_sample(&samples, key)?.1.clone()],
        None => test.iter().take(cfg.eval_samples).cloned().collect(),
    };
    if slice.is_empty() {
        bail!("no test samples to evaluate");
    }
    let start = Instant::now();
    let report = evaluate_all(&net, &slice, &cfg.methods, &cfg.eval)?;
    for f in &report.failures {
        eprintln!("warning: {} on {} class {}: {}", f.method_id, f.sample_id, f.class_index, f.message);
    }
    if report.records.is_empty() {
        bail!("every evaluation failed ({} failures)", report.failures.len());
    }
    write_report(&common.out, &report, &cfg)?;
    eprintln!(
        "evaluated {} records over {} samples in {:.1}s; {} failures",
        report.records.len(),
        slice.len(),
        start.elapsed().as_secs_f64(),
        report.failures.len()
    );
    say(&report.report_csv());
    Ok(())
}

/// Writes every evaluate artifact. File contents depend only on the
/// report and the config; timing appears only in the time column.
pub fn write_report(out: &Path, report: &EvaluationReport, cfg: &RunConfig) -> Result<()> {
    write_text(&out.join("report.csv"), &report.report_csv())?;
    write_text(&out.join("records.csv"), &report.records_csv())?;
    write_text(&out.join("correlation.csv"), &report.correlation_csv())?;
    write_text(&out.join("failures.csv"), &report.failures_csv())?;
    write_text(&out.join("report_meta.csv"), &report.meta_csv())?;
    write_text(&out.join("config.txt"), &cfg.to_text()?)?;
    for (id, curve) in &report.curves {
        write_text(&out.join(format!("morf_{id}.csv")), &EvaluationReport::morf_csv(curve))?;
    }
    if cfg.write_heatmaps {
        for r in &report.records {
            let path = out
                .join("heatmaps")
                .join(format!("{}_c{}_{}.pgm", r.sample_id, r.class_index, r.method_id));
            write_pgm(&r.heatmap, &path)?;
        }
    }
    Ok(())
}

pub fn cooccurrence_csv(matrix: &[Vec<Option<f64>>]) -> String {
    let mut s = String::from("given");
    for j in 0..matrix.len() {
        write!(s, ",p_{j}").unwrap();
    }
    s.push('\n');
    for (i, row) in matrix.iter().enumerate() {
        write!(s, "{i}").unwrap();
        for v in row {
            s.push(',');
            if let Some(v) = v {
                write!(s, "{v}").unwrap();
            }
        }
        s.push('\n');
    }
    s
}

fn cooccur_cmd(common: &Common, data: Option<PathBuf>) -> Result<()> {
    let path = data.unwrap_or_else(|| common.out.join("dataset.bin"));
    let samples = read_dataset(&path)?;
    let labels: Vec<Vec<bool>> = samples.iter().map(|s| s.labels.clone()).collect();
    let csv = cooccurrence_csv(&label_cooccurrence(&labels)?);
    write_text(&common.out.join("cooccurrence.csv"), &csv)?;
    say(&csv);
    Ok(())
}

fn render_cmd(common: &Common, files: Vec<PathBuf>) -> Result<()> {
    let files = if files.is_empty() {
        let dir = common.out.join("explain");
        let mut found: Vec<PathBuf> = std::fs::read_dir(&dir)
            .with_context(|| format!("listing {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "atbx"))
            .collect();
        found.sort();
        found
    } else {
        files
    };
    if files.is_empty() {
        bail!("no attribution files to render");
    }
    let mut rendered = Vec::new();
    for path in &files {
        let map = load_attribution(path).with_context(|| format!("loading {}", path.display()))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "attribution".into());
        rendered.push((stem, heatmap_for(&map)?));
    }
    let dir = common.out.join("rendered");
    for (stem, heat) in &rendered {
        write_pgm(heat, &dir.join(format!("{stem}.pgm")))?;
        write_ppm(&colormap(heat)?, &dir.join(format!("{stem}.ppm")))?;
        say!("{}", dir.join(format!("{stem}.pgm")).display());
    }
    Ok(())
}
