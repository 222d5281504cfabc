//! Sum-of-squares regression error, online SGD and CSV ingestion.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backprop::{bp_reg, Gradient};
use crate::network::{forward, init_weights, ActivationKind, ForwardTrace, Topology, WeightVector};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// Input/target pairs sharing one `(n, m)` shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: usize,
    outputs: usize,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, input: Vec<f64>, target: Vec<f64>) -> Result<()> {
        if input.len() != self.inputs {
            return Err(Error::DimensionMismatch {
                what: "sample input",
                expected: self.inputs,
                found: input.len(),
            });
        }
        if target.len() != self.outputs {
            return Err(Error::DimensionMismatch {
                what: "sample target",
                expected: self.outputs,
                found: target.len(),
            });
        }
        self.samples.push(Sample { input, target });
        Ok(())
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn check(&self, t: &Topology) -> Result<()> {
        if self.inputs != t.inputs() {
            return Err(Error::DimensionMismatch {
                what: "dataset inputs",
                expected: t.inputs(),
                found: self.inputs,
            });
        }
        if self.outputs != t.outputs() {
            return Err(Error::DimensionMismatch {
                what: "dataset targets",
                expected: t.outputs(),
                found: self.outputs,
            });
        }
        Ok(())
    }
}

/// Parses comma-separated rows of `n` inputs followed by `m` targets.
///
/// Rows are numbered by their line in `source`; blank lines are skipped.
pub fn load_dataset(source: &str, n: usize, m: usize, has_header: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source.as_bytes());
    let mut ds = Dataset::new(n, m);
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        let row = record.position().map_or(0, |p| p.line());
        if record.len() != n + m {
            return Err(Error::FieldCount {
                row,
                expected: n + m,
                found: record.len(),
            });
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(k, field)| {
                field.parse::<f64>().map_err(|_| Error::NotANumber {
                    row,
                    field: k + 1,
                    value: field.to_owned(),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let target = values[n..].to_vec();
        let mut input = values;
        input.truncate(n);
        ds.push(input, target)?;
    }
    Ok(ds)
}

/// `1/2 sum_o (z_{L,o} - d_o)^2` for one sample.
pub fn error_value(trace: &ForwardTrace, target: &[f64]) -> Result<f64> {
    let y = trace.output();
    if y.len() != target.len() {
        return Err(Error::DimensionMismatch {
            what: "target",
            expected: y.len(),
            found: target.len(),
        });
    }
    Ok(0.5
        * y.iter()
            .zip(target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>())
}

/// Sum of [`error_value`] over the dataset, accumulated in sample order.
pub fn total_error(
    t: &Topology,
    w: &WeightVector,
    ds: &Dataset,
    hidden: ActivationKind,
    output: ActivationKind,
) -> Result<f64> {
    ds.check(t)?;
    ds.samples.iter().try_fold(0.0, |acc, s| {
        let trace = forward(t, w, &s.input, hidden, output)?;
        Ok(acc + error_value(&trace, &s.target)?)
    })
}

/// Gradient of [`total_error`]: the per-sample gradients summed.
pub fn dataset_gradient(
    t: &Topology,
    w: &WeightVector,
    ds: &Dataset,
    hidden: ActivationKind,
    output: ActivationKind,
) -> Result<Gradient> {
    ds.check(t)?;
    let mut total = Gradient::zeros(t);
    for s in &ds.samples {
        total.accumulate(&bp_reg(t, w, &s.input, &s.target, hidden, output)?);
    }
    Ok(total)
}

/// `w - lr * g`.
pub fn sgd_step(w: &WeightVector, g: &Gradient, lr: f64) -> Result<WeightVector> {
    if w.len() != g.len() {
        return Err(Error::DimensionMismatch {
            what: "gradient",
            expected: w.len(),
            found: g.len(),
        });
    }
    let mut next = w.clone();
    for (wk, gk) in next.as_mut_slice().iter_mut().zip(g.as_slice()) {
        *wk -= lr * gk;
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 100,
            seed: 42,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Total error at the end of each epoch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epoch_errors: Vec<f64>,
}

/// Online SGD starting from [`init_weights`] with `cfg.seed`.
///
/// Weights are updated after every sample. With `cfg.shuffle` the visiting
/// order is permuted each epoch by a generator keyed on `(seed, epoch)`.
pub fn train(
    t: &Topology,
    ds: &Dataset,
    cfg: &TrainConfig,
    hidden: ActivationKind,
    output: ActivationKind,
) -> Result<(WeightVector, TrainHistory)> {
    train_from(t, init_weights(t, cfg.seed), ds, cfg, hidden, output)
}

/// Same as [`train`] but starting from the given weights.
pub fn train_from(
    t: &Topology,
    mut w: WeightVector,
    ds: &Dataset,
    cfg: &TrainConfig,
    hidden: ActivationKind,
    output: ActivationKind,
) -> Result<(WeightVector, TrainHistory)> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    ds.check(t)?;
    w.check(t)?;
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut history = TrainHistory::default();
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            // stream 0 is left to weight initialization
            rng.set_stream(epoch as u64 + 1);
            order.shuffle(&mut rng);
        }
        for &k in &order {
            let s = &ds.samples[k];
            let g = bp_reg(t, &w, &s.input, &s.target, hidden, output)?;
            w = sgd_step(&w, &g, cfg.learning_rate)?;
        }
        history
            .epoch_errors
            .push(total_error(t, &w, ds, hidden, output)?);
    }
    Ok((w, history))
}
