//! Flat `key = value` run configuration.
//!
//! The first non-comment line must be the version marker
//! `attribench-config 1`. Lines starting with `#` are comments. Unknown or
//! repeated keys are errors. Keys not given keep their defaults.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use attribench::attrib::{BaselineSpec, Method};
use attribench::metrics::{ClassSelection, EvalConfig};
use attribench::synth::{DatasetConfig, TrainConfig};

pub const CONFIG_HEADER: &str = "attribench-config 1";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Master seed; copied into the dataset, training and evaluation seeds.
    pub seed: u64,
    pub data: DatasetConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub methods: Vec<Method>,
    /// How many test-split samples `evaluate` uses, from the start.
    pub eval_samples: usize,
    pub write_heatmaps: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = Self {
            seed: 0,
            data: DatasetConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            methods: Method::ALL.to_vec(),
            eval_samples: 50,
            write_heatmaps: true,
        };
        cfg.set_seed(0);
        cfg
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| anyhow!("{key}: cannot parse '{v}': {e}"))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => bail!("{key}: expected true or false, got '{v}'"),
    }
}

fn parse_pair(key: &str, v: &str) -> Result<(usize, usize)> {
    let (a, b) = v.split_once('x').ok_or_else(|| anyhow!("{key}: expected HxW, got '{v}'"))?;
    Ok((parse_num(key, a)?, parse_num(key, b)?))
}

fn parse_auto(key: &str, v: &str) -> Result<Option<f64>> {
    if v == "auto" {
        Ok(None)
    } else {
        parse_num(key, v).map(Some)
    }
}

fn show_auto(v: Option<f64>) -> String {
    v.map_or("auto".into(), |v| v.to_string())
}

fn parse_baseline(key: &str, v: &str) -> Result<BaselineSpec> {
    let parts: Vec<&str> = v.split_whitespace().collect();
    match parts[..] {
        ["zero"] => Ok(BaselineSpec::Zero),
        ["blur", sigma, kernel] => Ok(BaselineSpec::Blur {
            sigma: parse_num(key, sigma)?,
            kernel_size: parse_num(key, kernel)?,
        }),
        _ => bail!("{key}: expected 'zero' or 'blur SIGMA KERNEL', got '{v}'"),
    }
}

fn show_baseline(b: &BaselineSpec) -> Result<String> {
    match b {
        BaselineSpec::Zero => Ok("zero".into()),
        BaselineSpec::Blur { sigma, kernel_size } => Ok(format!("blur {sigma} {kernel_size}")),
        BaselineSpec::Custom(_) => bail!("custom baselines cannot be written to a config file"),
    }
}

pub fn parse_methods(v: &str) -> Result<Vec<Method>> {
    let methods = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Method>().map_err(|e| anyhow!("{e}")))
        .collect::<Result<Vec<_>>>()?;
    if methods.is_empty() {
        bail!("method list is empty");
    }
    Ok(methods)
}

pub fn parse_classes(v: &str) -> Result<ClassSelection> {
    Ok(match v {
        "predicted" => ClassSelection::Predicted,
        "top" => ClassSelection::Top,
        "all" => ClassSelection::All,
        k => ClassSelection::Fixed(parse_num("eval.classes", k)?),
    })
}

fn show_classes(c: &ClassSelection) -> String {
    match c {
        ClassSelection::Predicted => "predicted".into(),
        ClassSelection::Top => "top".into(),
        ClassSelection::All => "all".into(),
        ClassSelection::Fixed(k) => k.to_string(),
    }
}

impl RunConfig {
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.data.seed = seed;
        self.train.seed = seed;
        self.eval.seed = seed;
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let ex = &mut self.eval.explain;
        match key {
            "seed" => self.set_seed(parse_num(key, v)?),
            "data.num_samples" => self.data.num_samples = parse_num(key, v)?,
            "data.channels" => self.data.image_size[0] = parse_num(key, v)?,
            "data.height" => self.data.image_size[1] = parse_num(key, v)?,
            "data.width" => self.data.image_size[2] = parse_num(key, v)?,
            "data.num_classes" => self.data.num_classes = parse_num(key, v)?,
            "data.noise_std" => self.data.noise_std = parse_num(key, v)?,
            "train.learning_rate" => self.train.learning_rate = parse_num(key, v)?,
            "train.batch_size" => self.train.batch_size = parse_num(key, v)?,
            "train.max_epochs" => self.train.max_epochs = parse_num(key, v)?,
            "train.plateau_patience" => self.train.plateau_patience = parse_num(key, v)?,
            "train.plateau_factor" => self.train.plateau_factor = parse_num(key, v)?,
            "train.early_stop_patience" => self.train.early_stop_patience = parse_num(key, v)?,
            "train.augment" => self.train.augment = parse_bool(key, v)?,
            "methods" => self.methods = parse_methods(v)?,
            "eval.samples" => self.eval_samples = parse_num(key, v)?,
            "eval.classes" => self.eval.classes = parse_classes(v)?,
            "eval.threshold" => self.eval.threshold = parse_num(key, v)?,
            "eval.include_random" => self.eval.include_random = parse_bool(key, v)?,
            "eval.sensitivity" => self.eval.compute_sensitivity = parse_bool(key, v)?,
            "eval.heatmaps" => self.write_heatmaps = parse_bool(key, v)?,
            "sensitivity.radius" => self.eval.sensitivity.radius = parse_auto(key, v)?,
            "sensitivity.samples" => self.eval.sensitivity.num_samples = parse_num(key, v)?,
            "morf.removal_fraction" => self.eval.morf.removal_fraction = parse_num(key, v)?,
            "morf.max_iters" => self.eval.morf.max_iters = parse_num(key, v)?,
            "ig.steps" => ex.integrated_gradients.steps = parse_num(key, v)?,
            "ig.baseline" => ex.integrated_gradients.baseline = parse_baseline(key, v)?,
            "deeplift.baseline" => ex.deeplift_baseline = parse_baseline(key, v)?,
            "occlusion.window" => ex.occlusion.window = parse_pair(key, v)?,
            "occlusion.stride" => ex.occlusion.stride = parse_pair(key, v)?,
            "occlusion.baseline" => ex.occlusion.baseline = parse_baseline(key, v)?,
            "lime.samples" => ex.lime.num_samples = parse_num(key, v)?,
            "lime.ridge_lambda" => ex.lime.ridge_lambda = parse_num(key, v)?,
            "lime.kernel_width" => ex.lime.kernel_width = parse_num(key, v)?,
            "slic.segments" => {
                ex.slic.requested_segments = parse_num(key, v)?;
                ex.lime.num_segments = ex.slic.requested_segments;
            }
            "slic.compactness" => ex.slic.compactness = parse_num(key, v)?,
            "slic.iterations" => ex.slic.iterations = parse_num(key, v)?,
            "smoothgrad.samples" => ex.smoothgrad.num_samples = parse_num(key, v)?,
            "smoothgrad.sigma" => ex.smoothgrad.sigma = parse_auto(key, v)?,
            _ => bail!("unknown config key '{key}'"),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some((_, CONFIG_HEADER)) => {}
            Some((n, l)) => bail!("line {n}: expected '{CONFIG_HEADER}', found '{l}'"),
            None => bail!("config is empty; expected '{CONFIG_HEADER}'"),
        }
        let mut seen = std::collections::HashSet::new();
        for (n, line) in lines {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {n}: expected 'key = value', found '{line}'"))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                bail!("line {n}: key '{k}' given twice");
            }
            cfg.set(k, v).with_context(|| format!("line {n}"))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.train.validate()?;
        if self.eval_samples == 0 {
            bail!("eval.samples must be positive");
        }
        if !(self.eval.morf.removal_fraction > 0.0 && self.eval.morf.removal_fraction < 1.0) {
            bail!("morf.removal_fraction must be in (0, 1)");
        }
        if let ClassSelection::Fixed(k) = self.eval.classes {
            if k >= self.data.num_classes {
                bail!("eval.classes = {k} but the dataset has {} classes", self.data.num_classes);
            }
        }
        Ok(())
    }

    /// Every key with its current value, in file order.
    pub fn to_text(&self) -> Result<String> {
        let ex = &self.eval.explain;
        let methods: Vec<&str> = self.methods.iter().map(|m| m.id()).collect();
        let entries: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("data.num_samples", self.data.num_samples.to_string()),
            ("data.channels", self.data.image_size[0].to_string()),
            ("data.height", self.data.image_size[1].to_string()),
            ("data.width", self.data.image_size[2].to_string()),
            ("data.num_classes", self.data.num_classes.to_string()),
            ("data.noise_std", self.data.noise_std.to_string()),
            ("train.learning_rate", self.train.learning_rate.to_string()),
            ("train.batch_size", self.train.batch_size.to_string()),
            ("train.max_epochs", self.train.max_epochs.to_string()),
            ("train.plateau_patience", self.train.plateau_patience.to_string()),
            ("train.plateau_factor", self.train.plateau_factor.to_string()),
            ("train.early_stop_patience", self.train.early_stop_patience.to_string()),
            ("train.augment", self.train.augment.to_string()),
            ("methods", methods.join(",")),
            ("eval.samples", self.eval_samples.to_string()),
            ("eval.classes", show_classes(&self.eval.classes)),
            ("eval.threshold", self.eval.threshold.to_string()),
            ("eval.include_random", self.eval.include_random.to_string()),
            ("eval.sensitivity", self.eval.compute_sensitivity.to_string()),
            ("eval.heatmaps", self.write_heatmaps.to_string()),
            ("sensitivity.radius", show_auto(self.eval.sensitivity.radius)),
            ("sensitivity.samples", self.eval.sensitivity.num_samples.to_string()),
            ("morf.removal_fraction", self.eval.morf.removal_fraction.to_string()),
            ("morf.max_iters", self.eval.morf.max_iters.to_string()),
            ("ig.steps", ex.integrated_gradients.steps.to_string()),
            ("ig.baseline", show_baseline(&ex.integrated_gradients.baseline)?),
            ("deeplift.baseline", show_baseline(&ex.deeplift_baseline)?),
            ("occlusion.window", format!("{}x{}", ex.occlusion.window.0, ex.occlusion.window.1)),
            ("occlusion.stride", format!("{}x{}", ex.occlusion.stride.0, ex.occlusion.stride.1)),
            ("occlusion.baseline", show_baseline(&ex.occlusion.baseline)?),
            ("lime.samples", ex.lime.num_samples.to_string()),
            ("lime.ridge_lambda", ex.lime.ridge_lambda.to_string()),
            ("lime.kernel_width", ex.lime.kernel_width.to_string()),
            ("slic.segments", ex.slic.requested_segments.to_string()),
            ("slic.compactness", ex.slic.compactness.to_string()),
            ("slic.iterations", ex.slic.iterations.to_string()),
            ("smoothgrad.samples", ex.smoothgrad.num_samples.to_string()),
            ("smoothgrad.sigma", show_auto(ex.smoothgrad.sigma)),
        ];
        let mut s = format!("{CONFIG_HEADER}\n");
        for (k, v) in entries {
            writeln!(s, "{k} = {v}").unwrap();
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_text().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn edited_values_round_trip() {
        let text = "# comment\n\nattribench-config 1\nseed = 7\nmethods = lime, grad_cam\nocclusion.window = 6x4\n\
                    ig.baseline = blur 1.5 5\nsmoothgrad.sigma = 0.2\neval.classes = top\nslic.segments = 32\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!((cfg.data.seed, cfg.train.seed, cfg.eval.seed), (7, 7, 7));
        assert_eq!(cfg.methods, vec![Method::Lime, Method::GradCam]);
        assert_eq!(cfg.eval.explain.occlusion.window, (6, 4));
        assert_eq!(cfg.eval.explain.lime.num_segments, 32);
        assert_eq!(cfg.eval.classes, ClassSelection::Top);
        assert_eq!(RunConfig::parse(&cfg.to_text().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn rejects_malformed_files() {
        for text in [
            "",
            "seed = 1\n",
            "attribench-config 2\n",
            "attribench-config 1\nseed = 1\nseed = 2\n",
            "attribench-config 1\nbogus = 1\n",
            "attribench-config 1\nseed\n",
            "attribench-config 1\nmethods = saliency,nope\n",
            "attribench-config 1\ntrain.augment = yes\n",
            "attribench-config 1\neval.classes = 9\n",
            "attribench-config 1\nocclusion.window = 4\n",
        ] {
            assert!(RunConfig::parse(text).is_err(), "{text:?}");
        }
    }
}
