//! Network topology, flat weight layout, activations and the forward pass.
//!
//! Layers and neurons are addressed with 1-based indices: layer `0` is the
//! input, layers `1..=L` compute, and neuron `i` of layer `l` is `(l, i)`.
//! Within a neuron's weight block, `j = 0` is the bias and `j = 1..=h_{l-1}`
//! are the incoming connections. Only the flat storage is 0-based.

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Layer widths `h_0 = n, h_1, ..., h_L = m` of a multilayer perceptron.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Topology {
    widths: Vec<usize>,
    // offsets[l] is the flat position of w_{l,1,0}; offsets[L + 1] is the total.
    offsets: Vec<usize>,
}

impl Topology {
    pub fn new(layer_widths: &[usize]) -> Result<Self> {
        if layer_widths.len() < 2 {
            return Err(Error::TooFewLayers(layer_widths.len()));
        }
        if let Some(layer) = layer_widths.iter().position(|&h| h == 0) {
            return Err(Error::EmptyLayer { layer });
        }
        let mut offsets = Vec::with_capacity(layer_widths.len() + 1);
        offsets.push(0);
        let mut total = 0;
        for l in 1..layer_widths.len() {
            offsets.push(total);
            total += (1 + layer_widths[l - 1]) * layer_widths[l];
        }
        offsets.push(total);
        Ok(Self {
            widths: layer_widths.to_vec(),
            offsets,
        })
    }

    /// Number of computing layers `L` (hidden layers plus the output layer).
    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// Width `h_l` of layer `l`, `0 <= l <= L`.
    pub fn width(&self, l: usize) -> usize {
        self.widths[l]
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn inputs(&self) -> usize {
        self.widths[0]
    }

    pub fn outputs(&self) -> usize {
        self.widths[self.layers()]
    }

    /// `sum_{l=1..L} (1 + h_{l-1}) h_l`.
    pub fn weight_count(&self) -> usize {
        self.offsets[self.layers() + 1]
    }

    /// Total number of computing nodes, `sum_{l=1..L} h_l`.
    pub fn node_count(&self) -> usize {
        self.widths[1..].iter().sum()
    }

    /// Flat position of `w_{l,i,j}`.
    pub fn index_of(&self, l: usize, i: usize, j: usize) -> Result<usize> {
        if l == 0 || l > self.layers() || i == 0 || i > self.widths[l] || j > self.widths[l - 1] {
            return Err(Error::IndexOutOfRange { l, i, j });
        }
        Ok(self.flat(l, i, j))
    }

    /// Inverse of [`Topology::index_of`].
    pub fn triple_of(&self, index: usize) -> Result<(usize, usize, usize)> {
        if index >= self.weight_count() {
            return Err(Error::InvalidParameter(format!(
                "flat index {index} exceeds weight count {}",
                self.weight_count()
            )));
        }
        let l = (1..=self.layers())
            .find(|&l| index < self.offsets[l + 1])
            .expect("index below total lies in some layer");
        let stride = 1 + self.widths[l - 1];
        let local = index - self.offsets[l];
        Ok((l, local / stride + 1, local % stride))
    }

    pub(crate) fn flat(&self, l: usize, i: usize, j: usize) -> usize {
        self.offsets[l] + (i - 1) * (1 + self.widths[l - 1]) + j
    }

    /// Flat range holding neuron `(l, i)`'s bias followed by its input weights.
    pub(crate) fn neuron_range(&self, l: usize, i: usize) -> std::ops::Range<usize> {
        let start = self.flat(l, i, 0);
        start..start + 1 + self.widths[l - 1]
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.widths.iter().map(usize::to_string).collect();
        f.write_str(&parts.join("-"))
    }
}

/// Flat weight storage in layer-major, neuron-major, input-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(t: &Topology, values: Vec<f64>) -> Result<Self> {
        if values.len() != t.weight_count() {
            return Err(Error::DimensionMismatch {
                what: "weight vector",
                expected: t.weight_count(),
                found: values.len(),
            });
        }
        Ok(Self(values))
    }

    pub fn zeros(t: &Topology) -> Self {
        Self(vec![0.0; t.weight_count()])
    }

    pub fn get(&self, t: &Topology, l: usize, i: usize, j: usize) -> Result<f64> {
        Ok(self.0[t.index_of(l, i, j)?])
    }

    pub fn set(&mut self, t: &Topology, l: usize, i: usize, j: usize, value: f64) -> Result<()> {
        let k = t.index_of(l, i, j)?;
        self.0[k] = value;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn at(&self, t: &Topology, l: usize, i: usize, j: usize) -> f64 {
        self.0[t.flat(l, i, j)]
    }

    pub(crate) fn check(&self, t: &Topology) -> Result<()> {
        if self.0.len() != t.weight_count() {
            return Err(Error::DimensionMismatch {
                what: "weight vector",
                expected: t.weight_count(),
                found: self.0.len(),
            });
        }
        Ok(())
    }
}

/// Uniform initialization in `[-r, r]` with `r = 1 / sqrt(1 + h_{l-1})`.
///
/// Deterministic for a given seed.
pub fn init_weights(t: &Topology, seed: u64) -> WeightVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(t.weight_count());
    for l in 1..=t.layers() {
        let r = init_bound(t, l);
        let dist = Uniform::new_inclusive(-r, r);
        for _ in 0..(1 + t.width(l - 1)) * t.width(l) {
            values.push(dist.sample(&mut rng));
        }
    }
    WeightVector(values)
}

/// Half-width of the initialization interval for layer `l`.
pub fn init_bound(t: &Topology, l: usize) -> f64 {
    1.0 / ((1 + t.width(l - 1)) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    Identity,
    Sigmoid,
    Tanh,
    /// Derivative at 0 is taken to be 0.
    Relu,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 4] = [
        ActivationKind::Identity,
        ActivationKind::Sigmoid,
        ActivationKind::Tanh,
        ActivationKind::Relu,
    ];

    pub const SMOOTH: [ActivationKind; 3] = [
        ActivationKind::Identity,
        ActivationKind::Sigmoid,
        ActivationKind::Tanh,
    ];

    pub fn activate(self, v: f64) -> f64 {
        match self {
            ActivationKind::Identity => v,
            ActivationKind::Sigmoid => sigmoid(v),
            ActivationKind::Tanh => v.tanh(),
            ActivationKind::Relu => v.max(0.0),
        }
    }

    pub fn activate_prime(self, v: f64) -> f64 {
        match self {
            ActivationKind::Identity => 1.0,
            ActivationKind::Sigmoid => {
                let s = sigmoid(v);
                s * (1.0 - s)
            }
            ActivationKind::Tanh => {
                let t = v.tanh();
                1.0 - t * t
            }
            ActivationKind::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn is_smooth(self) -> bool {
        !matches!(self, ActivationKind::Relu)
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Identity => "identity",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Relu => "relu",
        }
    }
}

fn sigmoid(v: f64) -> f64 {
    // Split by sign so exp never overflows.
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(ActivationKind::Identity),
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            "tanh" => Ok(ActivationKind::Tanh),
            "relu" => Ok(ActivationKind::Relu),
            other => Err(Error::UnknownActivation(other.to_owned())),
        }
    }
}

/// Pre-activations `u_{l,i}` and activations `z_{l,i}` of one forward pass.
///
/// The trace remembers which activations produced it, so `phi'_l(u_{l,i})`
/// is available through [`ForwardTrace::prime`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    hidden: ActivationKind,
    output: ActivationKind,
    // u[0] is empty so that u[l] is layer l.
    u: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn layers(&self) -> usize {
        self.z.len() - 1
    }

    /// `u_{l,i}`, `1 <= l <= L`.
    pub fn u(&self, l: usize, i: usize) -> f64 {
        self.u[l][i - 1]
    }

    /// `z_{l,i}`, `0 <= l <= L`; `z_{0,i}` is the input.
    pub fn z(&self, l: usize, i: usize) -> f64 {
        self.z[l][i - 1]
    }

    pub fn u_layer(&self, l: usize) -> &[f64] {
        &self.u[l]
    }

    pub fn z_layer(&self, l: usize) -> &[f64] {
        &self.z[l]
    }

    pub fn input(&self) -> &[f64] {
        &self.z[0]
    }

    /// Network output `y = z_L`.
    pub fn output(&self) -> &[f64] {
        &self.z[self.layers()]
    }

    pub fn hidden_activation(&self) -> ActivationKind {
        self.hidden
    }

    pub fn output_activation(&self) -> ActivationKind {
        self.output
    }

    /// Activation `phi_l` used by layer `l >= 1`.
    pub fn activation(&self, l: usize) -> ActivationKind {
        if l == self.layers() {
            self.output
        } else {
            self.hidden
        }
    }

    /// `phi'_l(u_{l,i})`.
    pub fn prime(&self, l: usize, i: usize) -> f64 {
        self.activation(l).activate_prime(self.u(l, i))
    }

    /// Smallest `|u_{l,i}|` over all computing nodes.
    pub fn min_abs_preactivation(&self) -> f64 {
        self.u[1..]
            .iter()
            .flatten()
            .fold(f64::INFINITY, |acc, v| acc.min(v.abs()))
    }

    pub(crate) fn check(&self, t: &Topology) -> Result<()> {
        let shape_ok = self.z.len() == t.widths().len()
            && self.z.iter().zip(t.widths()).all(|(z, &h)| z.len() == h)
            && self.u[1..]
                .iter()
                .zip(&t.widths()[1..])
                .all(|(u, &h)| u.len() == h);
        if !shape_ok {
            return Err(Error::InvalidParameter(format!(
                "forward trace shape does not match topology {t}"
            )));
        }
        Ok(())
    }
}

/// Runs the forward pass and records every `u_{l,i}` and `z_{l,i}`.
pub fn forward(
    t: &Topology,
    w: &WeightVector,
    x: &[f64],
    hidden: ActivationKind,
    output: ActivationKind,
) -> Result<ForwardTrace> {
    w.check(t)?;
    if x.len() != t.inputs() {
        return Err(Error::DimensionMismatch {
            what: "input",
            expected: t.inputs(),
            found: x.len(),
        });
    }
    let layers = t.layers();
    let mut u = Vec::with_capacity(layers + 1);
    let mut z = Vec::with_capacity(layers + 1);
    u.push(Vec::new());
    z.push(x.to_vec());
    for l in 1..=layers {
        let phi = if l == layers { output } else { hidden };
        let prev = &z[l - 1];
        let mut u_l = Vec::with_capacity(t.width(l));
        for i in 1..=t.width(l) {
            let block = &w.as_slice()[t.neuron_range(l, i)];
            let sum = block[0]
                + block[1..]
                    .iter()
                    .zip(prev)
                    .map(|(wij, zj)| wij * zj)
                    .sum::<f64>();
            u_l.push(sum);
        }
        let z_l = u_l.iter().map(|&v| phi.activate(v)).collect();
        u.push(u_l);
        z.push(z_l);
    }
    Ok(ForwardTrace {
        hidden,
        output,
        u,
        z,
    })
}
