use std::fmt::Write as _;

use rand::seq::SliceRandom;

use super::augment::Augmentation;
use super::dataset::SampleRecord;
use crate::error::{Error, Result};
use crate::nn::{ModelSpec, Network, WeightStore};
use crate::rng::{derive_seed, rng_from};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub early_stop_patience: usize,
    /// Random quarter turns and flips. Off by default: the horizontal and
    /// vertical stripe motifs are distinguished by orientation alone.
    pub augment: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.3,
            batch_size: 16,
            max_epochs: 30,
            plateau_patience: 2,
            plateau_factor: 0.5,
            early_stop_patience: 5,
            augment: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be ≥ 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return Err(Error::Config("batch_size, max_epochs and patiences must be positive".into()));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::Config(format!("plateau_factor must be in (0, 1), got {}", self.plateau_factor)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub learning_rate: f64,
}

/// Per-epoch losses. Epoch 0 is the untrained initialisation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn best_val_loss(&self) -> f64 {
        self.epochs[self.best_epoch].val_loss
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,learning_rate\n");
        for e in &self.epochs {
            writeln!(s, "{},{:.9},{:.9},{}", e.epoch, e.train_loss, e.val_loss, e.learning_rate).unwrap();
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Improved,
    Continue,
    Stop,
}

/// Reduce-on-plateau learning rate with early stopping on validation loss.
struct Schedule {
    lr: f64,
    best: f64,
    since_improvement: usize,
    plateau: usize,
    plateau_patience: usize,
    plateau_factor: f64,
    early_stop_patience: usize,
}

impl Schedule {
    fn new(cfg: &TrainConfig, initial_loss: f64) -> Self {
        Self {
            lr: cfg.learning_rate,
            best: initial_loss,
            since_improvement: 0,
            plateau: 0,
            plateau_patience: cfg.plateau_patience,
            plateau_factor: cfg.plateau_factor,
            early_stop_patience: cfg.early_stop_patience,
        }
    }

    fn observe(&mut self, loss: f64) -> Step {
        if loss < self.best {
            self.best = loss;
            self.since_improvement = 0;
            self.plateau = 0;
            return Step::Improved;
        }
        self.since_improvement += 1;
        self.plateau += 1;
        if self.since_improvement >= self.early_stop_patience {
            return Step::Stop;
        }
        if self.plateau >= self.plateau_patience {
            self.lr *= self.plateau_factor;
            self.plateau = 0;
        }
        Step::Continue
    }
}

pub fn mean_loss(net: &Network, samples: &[SampleRecord]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let logits = net.logits(&s.image)?;
        total += crate::nn::bce_with_logits(logits.data(), &s.label_vector());
    }
    Ok(total / samples.len() as f64)
}

/// Mini-batch SGD on mean BCE with plateau LR decay and early stopping.
/// Returns the weights of the epoch with the lowest validation loss.
pub fn train(
    spec: &ModelSpec,
    cfg: &TrainConfig,
    train_set: &[SampleRecord],
    val_set: &[SampleRecord],
) -> Result<(WeightStore, TrainLog)> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Config("training and validation splits must be non-empty".into()));
    }
    if let Some(s) = train_set.iter().chain(val_set).find(|s| s.labels.len() != spec.num_classes()) {
        return Err(Error::Shape(format!(
            "sample {} has {} labels, model has {} classes",
            s.sample_id,
            s.labels.len(),
            spec.num_classes()
        )));
    }

    let mut net = Network::new(spec.clone(), WeightStore::init(spec, derive_seed(cfg.seed, &[0x1417])))?;
    let init_val = mean_loss(&net, val_set)?;
    let init_train = mean_loss(&net, train_set)?;
    let mut log = TrainLog {
        epochs: vec![EpochLog {
            epoch: 0,
            train_loss: init_train,
            val_loss: init_val,
            learning_rate: cfg.learning_rate,
        }],
        best_epoch: 0,
    };
    let mut best = net.weights().clone();
    let mut schedule = Schedule::new(cfg, init_val);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng_from(cfg.seed, &[0x5f, epoch as u64]));
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grad = WeightStore::zeros(spec);
            let mut batch_loss = 0.0;
            for &i in batch {
                let s = &train_set[i];
                let image = if cfg.augment {
                    Augmentation::sample(derive_seed(cfg.seed, &[0xa0, epoch as u64, i as u64])).apply(&s.image)?
                } else {
                    s.image.clone()
                };
                let (loss, g) = net.loss_and_grad(&image, &s.label_vector())?;
                batch_loss += loss;
                grad.axpy(1.0, &g)?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "training diverged at epoch {epoch}, batch {b}: loss {batch_loss}"
                )));
            }
            epoch_loss += batch_loss;
            if schedule.lr > 0.0 {
                let mut w = net.weights().clone();
                w.axpy(-schedule.lr / batch.len() as f64, &grad)?;
                net = net.with_weights(w)?;
            }
        }
        let val_loss = mean_loss(&net, val_set)?;
        if !val_loss.is_finite() {
            return Err(Error::Numerical(format!("validation loss is {val_loss} at epoch {epoch}")));
        }
        log.epochs.push(EpochLog {
            epoch,
            train_loss: epoch_loss / train_set.len() as f64,
            val_loss,
            learning_rate: schedule.lr,
        });
        match schedule.observe(val_loss) {
            Step::Improved => {
                best = net.weights().clone();
                log.best_epoch = epoch;
            }
            Step::Stop => break,
            Step::Continue => {}
        }
    }
    Ok((best, log))
}
