use std::fmt::Write as _;

use rayon::prelude::*;

use super::{file_size_proxy, max_sensitivity, mean_curve, morf_curve, pearson, random_attribution};
use super::{MorfConfig, MorfCurve, SensitivityConfig, DEFLATE_LEVEL};
use crate::attrib::{explain, AttributionMap, ExplainConfig, Method};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::render::{render_for_method, render_heatmap, HeatmapImage};
use crate::rng::{derive_seed, tag};
use crate::synth::SampleRecord;

/// Which classes of each sample get explained.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassSelection {
    /// Classes whose probability exceeds the threshold.
    Predicted,
    /// The single most probable class.
    Top,
    All,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub explain: ExplainConfig,
    pub sensitivity: SensitivityConfig,
    pub morf: MorfConfig,
    /// Max-Sensitivity re-runs the explainer per perturbation and dominates
    /// the cost; disabled runs leave the column empty.
    pub compute_sensitivity: bool,
    pub threshold: f64,
    pub classes: ClassSelection,
    /// Adds a row for the uniform-random attribution baseline.
    pub include_random: bool,
    pub seed: u64,
    /// Worker threads; results do not depend on this.
    pub jobs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            explain: ExplainConfig::default(),
            sensitivity: SensitivityConfig::default(),
            morf: MorfConfig::default(),
            compute_sensitivity: true,
            threshold: 0.5,
            classes: ClassSelection::Predicted,
            include_random: true,
            seed: 0,
            jobs: 1,
        }
    }
}

/// Metrics of one `(method, sample, class)` evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMetrics {
    pub method_id: String,
    pub sample_id: String,
    pub class_index: usize,
    pub max_sensitivity: Option<f64>,
    pub auc_morf: f64,
    pub auc_morf_normalized: f64,
    pub file_size_bytes: usize,
    pub computation_time_seconds: f64,
    pub curve: MorfCurve,
    /// The rendered heatmap the file size was measured on.
    pub heatmap: HeatmapImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method_id: String,
    pub evaluations: usize,
    pub max_sensitivity_mean: Option<f64>,
    pub auc_morf_mean: f64,
    pub auc_morf_normalized_mean: f64,
    pub file_size_bytes_mean: f64,
    pub computation_time_seconds_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub method_id: String,
    pub sample_id: String,
    pub class_index: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub rows: Vec<ReportRow>,
    pub records: Vec<SampleMetrics>,
    /// Mean MoRF curve per method, in row order.
    pub curves: Vec<(String, MorfCurve)>,
    pub failures: Vec<Failure>,
    pub meta: Vec<(String, String)>,
}

#[derive(Clone, Copy)]
enum Explainer {
    Method(Method),
    Random,
}

impl Explainer {
    fn id(self) -> &'static str {
        match self {
            Explainer::Method(m) => m.id(),
            Explainer::Random => "random",
        }
    }
}

fn selected_classes(net: &Network, sample: &SampleRecord, cfg: &EvalConfig) -> Result<Vec<usize>> {
    Ok(match cfg.classes {
        ClassSelection::All => (0..net.num_classes()).collect(),
        ClassSelection::Fixed(k) => vec![k],
        ClassSelection::Top => {
            let p = net.probabilities(&sample.image)?;
            let best = (0..p.len()).fold(0, |b, k| if p[k] > p[b] { k } else { b });
            vec![best]
        }
        ClassSelection::Predicted => {
            let p = net.probabilities(&sample.image)?;
            (0..net.num_classes()).filter(|&k| p[k] > cfg.threshold).collect()
        }
    })
}

/// Explanation, Max-Sensitivity, MoRF and file size for one triple.
fn evaluate_one(
    net: &Network,
    sample: &SampleRecord,
    sample_index: usize,
    class: usize,
    explainer: Explainer,
    cfg: &EvalConfig,
) -> Result<SampleMetrics> {
    let task_seed = derive_seed(cfg.seed, &[sample_index as u64, class as u64]);
    let explain_cfg = cfg.explain.reseeded(task_seed);
    let (_, h, w) = sample.image.chw()?;
    let random_seed = derive_seed(task_seed, &[tag("random")]);
    let run = |x: &crate::tensor::Tensor| -> Result<AttributionMap> {
        match explainer {
            Explainer::Method(m) => explain(net, x, class, m, &explain_cfg),
            Explainer::Random => Ok(random_attribution(h, w, random_seed)),
        }
    };
    let start = std::time::Instant::now();
    let map = run(&sample.image)?;
    let elapsed = match explainer {
        Explainer::Method(_) => map.elapsed_seconds,
        Explainer::Random => start.elapsed().as_secs_f64(),
    };
    let sens_cfg = SensitivityConfig {
        seed: derive_seed(task_seed, &[tag("sensitivity")]),
        ..cfg.sensitivity.clone()
    };
    let max_sens = if cfg.compute_sensitivity {
        Some(max_sensitivity(|x| run(x)?.pixel_scores(), &sample.image, &sens_cfg)?)
    } else {
        None
    };
    let curve = morf_curve(net, &sample.image, class, &map, &cfg.morf)?;
    let heatmap = match explainer {
        Explainer::Method(m) => render_for_method(&map, m)?,
        Explainer::Random => render_heatmap(&map, false)?,
    };
    Ok(SampleMetrics {
        method_id: explainer.id().to_string(),
        sample_id: sample.sample_id.clone(),
        class_index: class,
        max_sensitivity: max_sens,
        auc_morf: curve.auc,
        auc_morf_normalized: curve.auc_normalized,
        file_size_bytes: file_size_proxy(&heatmap)?,
        computation_time_seconds: elapsed,
        curve,
        heatmap,
    })
}

/// Runs every method on every selected `(sample, class)` pair and
/// aggregates per-method means. Failures are recorded, not fatal.
pub fn evaluate_all(
    net: &Network,
    samples: &[SampleRecord],
    methods: &[Method],
    cfg: &EvalConfig,
) -> Result<EvaluationReport> {
    if samples.is_empty() {
        return Err(Error::Config("evaluation slice is empty".into()));
    }
    if methods.is_empty() && !cfg.include_random {
        return Err(Error::Config("no methods to evaluate".into()));
    }
    let mut explainers: Vec<Explainer> = methods.iter().map(|&m| Explainer::Method(m)).collect();
    if cfg.include_random {
        explainers.push(Explainer::Random);
    }
    let mut tasks = Vec::new();
    for (e_idx, _) in explainers.iter().enumerate() {
        for (s_idx, sample) in samples.iter().enumerate() {
            for class in selected_classes(net, sample, cfg)? {
                tasks.push((e_idx, s_idx, class));
            }
        }
    }
    let run = |&(e, s, class): &(usize, usize, usize)| evaluate_one(net, &samples[s], s, class, explainers[e], cfg);
    let results: Vec<Result<SampleMetrics>> = if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| tasks.par_iter().map(run).collect())
    } else {
        tasks.iter().map(run).collect()
    };

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (&(e, s, class), result) in tasks.iter().zip(results) {
        match result {
            Ok(m) => records.push(m),
            Err(err) => failures.push(Failure {
                method_id: explainers[e].id().to_string(),
                sample_id: samples[s].sample_id.clone(),
                class_index: class,
                message: err.to_string(),
            }),
        }
    }

    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for e in &explainers {
        let mine: Vec<&SampleMetrics> = records.iter().filter(|r| r.method_id == e.id()).collect();
        if mine.is_empty() {
            continue;
        }
        let n = mine.len() as f64;
        let mean = |f: fn(&SampleMetrics) -> f64| mine.iter().map(|r| f(r)).sum::<f64>() / n;
        rows.push(ReportRow {
            method_id: e.id().to_string(),
            evaluations: mine.len(),
            max_sensitivity_mean: mine
                .iter()
                .map(|r| r.max_sensitivity)
                .sum::<Option<f64>>()
                .map(|t| t / n),
            auc_morf_mean: mean(|r| r.auc_morf),
            auc_morf_normalized_mean: mean(|r| r.auc_morf_normalized),
            file_size_bytes_mean: mean(|r| r.file_size_bytes as f64),
            computation_time_seconds_mean: mean(|r| r.computation_time_seconds),
        });
        let owned: Vec<MorfCurve> = mine.iter().map(|r| r.curve.clone()).collect();
        curves.push((e.id().to_string(), mean_curve(&owned)?));
    }

    let meta = vec![
        ("samples".to_string(), samples.len().to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
        ("threshold".to_string(), cfg.threshold.to_string()),
        (
            "file_size".to_string(),
            format!("raw deflate level {DEFLATE_LEVEL} of the 8-bit grayscale heatmap, in place of JPEG size"),
        ),
        (
            "max_sensitivity".to_string(),
            format!(
                "uniform l-inf ball, radius {}, {} samples, unnormalised Frobenius distance",
                cfg.sensitivity.radius.map_or("0.02*range".to_string(), |r| r.to_string()),
                cfg.sensitivity.num_samples
            ),
        ),
        (
            "morf".to_string(),
            format!(
                "remove {} of remaining per round for {} rounds then all, nearest-pixel imputation, sigmoid probability",
                cfg.morf.removal_fraction, cfg.morf.max_iters
            ),
        ),
        ("lime_kernel".to_string(), "exp(-||x-h(z)||^2 / (kernel_width^2 * D))".to_string()),
    ];
    Ok(EvaluationReport {
        rows,
        records,
        curves,
        failures,
        meta,
    })
}

impl EvaluationReport {
    pub fn row(&self, method_id: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method_id == method_id)
    }

    pub fn report_csv(&self) -> String {
        let mut s =
            String::from("method,max_sensitivity,auc_morf,auc_morf_normalized,file_size_bytes,computation_time_seconds\n");
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{},{}",
                r.method_id,
                opt(r.max_sensitivity_mean),
                r.auc_morf_mean,
                r.auc_morf_normalized_mean,
                r.file_size_bytes_mean,
                r.computation_time_seconds_mean
            )
            .unwrap();
        }
        s
    }

    pub fn records_csv(&self) -> String {
        let mut s = String::from(
            "method,sample_id,class,max_sensitivity,auc_morf,auc_morf_normalized,file_size_bytes,computation_time_seconds\n",
        );
        for r in &self.records {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.method_id,
                r.sample_id,
                r.class_index,
                opt(r.max_sensitivity),
                r.auc_morf,
                r.auc_morf_normalized,
                r.file_size_bytes,
                r.computation_time_seconds
            )
            .unwrap();
        }
        s
    }

    pub fn morf_csv(curve: &MorfCurve) -> String {
        let mut s = String::from("fraction,mean_score\n");
        for (f, v) in &curve.checkpoints {
            writeln!(s, "{f},{v}").unwrap();
        }
        s
    }

    /// Pairwise Pearson correlation of the per-method means of the
    /// deterministic metrics. Pairs that cannot be computed (fewer than
    /// three methods, zero variance) carry empty `r` and `p_value`.
    pub fn correlation_csv(&self) -> String {
        let cols: [(&str, fn(&ReportRow) -> f64); 3] = [
            ("max_sensitivity", |r| r.max_sensitivity_mean.unwrap_or(f64::NAN)),
            ("auc_morf", |r| r.auc_morf_mean),
            ("file_size_bytes", |r| r.file_size_bytes_mean),
        ];
        let mut s = String::from("metric_x,metric_y,r,p_value,n\n");
        for i in 0..cols.len() {
            for j in i + 1..cols.len() {
                let xs: Vec<f64> = self.rows.iter().map(cols[i].1).collect();
                let ys: Vec<f64> = self.rows.iter().map(cols[j].1).collect();
                let finite = xs.iter().chain(&ys).all(|v| v.is_finite());
                let (r, p) = match pearson(&xs, &ys) {
                    Ok((r, p)) if finite => (r.to_string(), p.to_string()),
                    _ => (String::new(), String::new()),
                };
                writeln!(s, "{},{},{r},{p},{}", cols[i].0, cols[j].0, xs.len()).unwrap();
            }
        }
        s
    }

    pub fn failures_csv(&self) -> String {
        let mut s = String::from("method,sample_id,class,error\n");
        for f in &self.failures {
            writeln!(s, "{},{},{},\"{}\"", f.method_id, f.sample_id, f.class_index, f.message.replace('"', "'")).unwrap();
        }
        s
    }

    pub fn meta_csv(&self) -> String {
        let mut s = String::from("key,value\n");
        for (k, v) in &self.meta {
            writeln!(s, "{k},\"{v}\"").unwrap();
        }
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}
