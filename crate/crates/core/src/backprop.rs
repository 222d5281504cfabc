//! Error coefficients and the regression backpropagation algorithm.
//!
//! With `eps_o = dE/df_o`, the error coefficient of node `(l,i)` is
//! `e_{l,i} = sum_o eps_o phi'_L(u_{L,o}) a(l,i -> L,o)`. It satisfies
//! `e_{l,i} = phi'_l(u_{l,i}) sum_s w_{l+1,s,i} e_{l+1,s}` and gives the
//! gradient directly: `dE/dw_{l,i,0} = e_{l,i}`, `dE/dw_{l,i,j} = e_{l,i} z_{l-1,j}`.

use crate::dac::DacTable;
use crate::network::{forward, ActivationKind, ForwardTrace, Topology, WeightVector};
use crate::{Error, Result};

/// `eps_o`: derivative of the loss with respect to output `o`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonVector(Vec<f64>);

impl EpsilonVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| v * c).collect())
    }
}

/// `e_{l,i}` for every computing node, output layer included.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCoefficients {
    // layers[l] has h_l entries; layers[0] is empty.
    layers: Vec<Vec<f64>>,
}

impl ErrorCoefficients {
    pub fn get(&self, l: usize, i: usize) -> f64 {
        self.layers[l][i - 1]
    }

    pub fn layer(&self, l: usize) -> &[f64] {
        &self.layers[l]
    }

    pub fn layers(&self) -> usize {
        self.layers.len() - 1
    }

    /// All coefficients, layer 1 first.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flatten().copied()
    }
}

/// `dE/dw_{l,i,j}` in the same flat layout as [`WeightVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient(Vec<f64>);

impl Gradient {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(t: &Topology) -> Self {
        Self(vec![0.0; t.weight_count()])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, t: &Topology, l: usize, i: usize, j: usize) -> Result<f64> {
        Ok(self.0[t.index_of(l, i, j)?])
    }

    /// Adds `other` entrywise.
    pub fn accumulate(&mut self, other: &Gradient) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }
}

/// Regression `eps_o = z_{L,o} - d_o`.
pub fn epsilon_regression(output: &[f64], target: &[f64]) -> Result<EpsilonVector> {
    if output.len() != target.len() {
        return Err(Error::DimensionMismatch {
            what: "target",
            expected: output.len(),
            found: target.len(),
        });
    }
    Ok(EpsilonVector(
        output.iter().zip(target).map(|(z, d)| z - d).collect(),
    ))
}

/// `e_{L,o} = eps_o phi'_L(u_{L,o})`.
pub fn output_error_coefficients(eps: &EpsilonVector, trace: &ForwardTrace) -> Result<Vec<f64>> {
    let big_l = trace.layers();
    let m = trace.output().len();
    if eps.len() != m {
        return Err(Error::DimensionMismatch {
            what: "epsilon",
            expected: m,
            found: eps.len(),
        });
    }
    Ok(eps
        .as_slice()
        .iter()
        .enumerate()
        .map(|(k, e)| e * trace.prime(big_l, k + 1))
        .collect())
}

/// Backward sweep from the output-layer coefficients to layer 1.
pub fn backpropagate_error_coefficients(
    t: &Topology,
    w: &WeightVector,
    trace: &ForwardTrace,
    output_coefficients: &[f64],
) -> Result<ErrorCoefficients> {
    backward_sweep(t, w, trace, output_coefficients, 1.0)
}

// `sign` exists so the verification suite can be fed a deliberately broken
// recursion; production callers always pass 1.
pub(crate) fn backward_sweep(
    t: &Topology,
    w: &WeightVector,
    trace: &ForwardTrace,
    output_coefficients: &[f64],
    sign: f64,
) -> Result<ErrorCoefficients> {
    w.check(t)?;
    trace.check(t)?;
    if output_coefficients.len() != t.outputs() {
        return Err(Error::DimensionMismatch {
            what: "output error coefficients",
            expected: t.outputs(),
            found: output_coefficients.len(),
        });
    }
    let big_l = t.layers();
    let mut layers = vec![Vec::new(); big_l + 1];
    layers[big_l] = output_coefficients.to_vec();
    for l in (1..big_l).rev() {
        let next = &layers[l + 1];
        let current = (1..=t.width(l))
            .map(|i| {
                let sum: f64 = next
                    .iter()
                    .enumerate()
                    .map(|(s, e)| w.at(t, l + 1, s + 1, i) * e)
                    .sum();
                sign * trace.prime(l, i) * sum
            })
            .collect();
        layers[l] = current;
    }
    Ok(ErrorCoefficients { layers })
}

/// `e_{l,i} = sum_o eps_o phi'_L(u_{L,o}) a(l,i -> L,o)`, summed term by term.
pub fn error_coefficients_by_definition(
    eps: &EpsilonVector,
    trace: &ForwardTrace,
    table: &DacTable,
) -> Result<ErrorCoefficients> {
    let big_l = trace.layers();
    let m = trace.output().len();
    if eps.len() != m || table.outputs() != m || table.layers() != big_l {
        return Err(Error::DimensionMismatch {
            what: "epsilon / dac table outputs",
            expected: m,
            found: eps.len(),
        });
    }
    let mut layers = vec![Vec::new()];
    for l in 1..=big_l {
        let width = trace.u_layer(l).len();
        let layer = (1..=width)
            .map(|i| {
                (1..=m)
                    .map(|o| eps.as_slice()[o - 1] * trace.prime(big_l, o) * table.get(l, i, o))
                    .sum()
            })
            .collect();
        layers.push(layer);
    }
    Ok(ErrorCoefficients { layers })
}

/// Gradient assembly: `dE/dw_{l,i,0} = e_{l,i}`, `dE/dw_{l,i,j} = e_{l,i} z_{l-1,j}`.
pub fn error_gradient(
    t: &Topology,
    trace: &ForwardTrace,
    e: &ErrorCoefficients,
) -> Result<Gradient> {
    trace.check(t)?;
    let shape_ok =
        e.layers() == t.layers() && (1..=t.layers()).all(|l| e.layer(l).len() == t.width(l));
    if !shape_ok {
        return Err(Error::InvalidParameter(format!(
            "error coefficients do not match topology {t}"
        )));
    }
    let mut g = vec![0.0; t.weight_count()];
    for l in 1..=t.layers() {
        let z_prev = trace.z_layer(l - 1);
        for i in 1..=t.width(l) {
            let e_li = e.get(l, i);
            let block = &mut g[t.neuron_range(l, i)];
            block[0] = e_li;
            for (gj, z) in block[1..].iter_mut().zip(z_prev) {
                *gj = e_li * z;
            }
        }
    }
    Ok(Gradient(g))
}

/// Gradient for an arbitrary loss given its `eps` at the traced point.
pub fn gradient_from_epsilon(
    t: &Topology,
    w: &WeightVector,
    trace: &ForwardTrace,
    eps: &EpsilonVector,
) -> Result<Gradient> {
    let e_out = output_error_coefficients(eps, trace)?;
    let e = backpropagate_error_coefficients(t, w, trace, &e_out)?;
    error_gradient(t, trace, &e)
}

/// Gradient of `E = 1/2 ||f(x; w) - d||^2` with respect to every weight.
///
/// Runs the forward pass, seeds the output layer, sweeps the error
/// coefficients backward, then assembles the gradient, in that order.
pub fn bp_reg(
    t: &Topology,
    w: &WeightVector,
    x: &[f64],
    d: &[f64],
    hidden: ActivationKind,
    output: ActivationKind,
) -> Result<Gradient> {
    let trace = forward(t, w, x, hidden, output)?;
    let eps = epsilon_regression(trace.output(), d)?;
    gradient_from_epsilon(t, w, &trace, &eps)
}
