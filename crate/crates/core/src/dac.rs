//! Derivative amplification coefficients.
//!
//! `a(l,i -> r,t)` is the factor by which a change in the pre-activation of
//! node `(l,i)` shows up in the pre-activation of node `(r,t)`:
//!
//! - `a(l,i -> l,t) = [i == t]`
//! - `a(l,i -> r,t) = sum_j w_{r,t,j} phi'_{r-1}(u_{r-1,j}) a(l,i -> r-1,j)` for `l < r`
//!
//! [`dac_by_definition`] evaluates that recursion literally and is kept as a
//! reference. [`dac_backward_table`] builds all coefficients into the output
//! layer with one backward sweep using
//! `a(l,i -> L,o) = phi'_l(u_{l,i}) sum_s w_{l+1,s,i} a(l+1,s -> L,o)`.

use crate::network::{ForwardTrace, Topology, WeightVector};
use crate::{Error, Result};

/// Coefficients `a(l,i -> L,o)` for every computing node `(l,i)` and output `o`.
#[derive(Debug, Clone, PartialEq)]
pub struct DacTable {
    outputs: usize,
    // layers[l] holds h_l * m values, neuron-major; layers[0] is empty.
    layers: Vec<Vec<f64>>,
}

impl DacTable {
    /// `a(l,i -> L,o)`, all indices 1-based.
    pub fn get(&self, l: usize, i: usize, o: usize) -> f64 {
        self.layers[l][(i - 1) * self.outputs + (o - 1)]
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn layers(&self) -> usize {
        self.layers.len() - 1
    }

    /// Number of node rows, `sum_l h_l`.
    pub fn rows(&self) -> usize {
        self.layers.iter().map(|v| v.len()).sum::<usize>() / self.outputs
    }

    /// Row of coefficients from node `(l,i)` to each output.
    pub fn row(&self, l: usize, i: usize) -> &[f64] {
        let start = (i - 1) * self.outputs;
        &self.layers[l][start..start + self.outputs]
    }

    /// All entries in node order (layer by layer, neuron by neuron), each row
    /// spanning the outputs.
    pub fn entries(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flatten().copied()
    }
}

fn check_inputs(t: &Topology, w: &WeightVector, trace: &ForwardTrace) -> Result<()> {
    w.check(t)?;
    trace.check(t)
}

/// Evaluates `a(l,i -> r,tgt)` straight from the recursive definition.
///
/// Cost grows like the product of the intermediate widths; use it for
/// verification only.
pub fn dac_by_definition(
    t: &Topology,
    w: &WeightVector,
    trace: &ForwardTrace,
    l: usize,
    i: usize,
    r: usize,
    tgt: usize,
) -> Result<f64> {
    check_inputs(t, w, trace)?;
    let valid = (1..=t.layers()).contains(&l)
        && (l..=t.layers()).contains(&r)
        && (1..=t.width(l)).contains(&i)
        && (1..=t.width(r)).contains(&tgt);
    if !valid {
        return Err(Error::NodeOutOfRange(format!(
            "a({l},{i} -> {r},{tgt}) in topology {t}"
        )));
    }
    Ok(definition(t, w, trace, l, i, r, tgt))
}

fn definition(
    t: &Topology,
    w: &WeightVector,
    trace: &ForwardTrace,
    l: usize,
    i: usize,
    r: usize,
    tgt: usize,
) -> f64 {
    if r == l {
        return if i == tgt { 1.0 } else { 0.0 };
    }
    (1..=t.width(r - 1))
        .map(|j| {
            w.at(t, r, tgt, j) * trace.prime(r - 1, j) * definition(t, w, trace, l, i, r - 1, j)
        })
        .sum()
}

/// Full table into the output layer, every entry from [`dac_by_definition`].
pub fn dac_table_by_definition(
    t: &Topology,
    w: &WeightVector,
    trace: &ForwardTrace,
) -> Result<DacTable> {
    check_inputs(t, w, trace)?;
    let big_l = t.layers();
    let m = t.outputs();
    let mut layers = vec![Vec::new()];
    for l in 1..=big_l {
        let mut block = Vec::with_capacity(t.width(l) * m);
        for i in 1..=t.width(l) {
            for o in 1..=m {
                block.push(definition(t, w, trace, l, i, big_l, o));
            }
        }
        layers.push(block);
    }
    Ok(DacTable { outputs: m, layers })
}

/// Builds `a(l,i -> L,o)` for all nodes with a single backward sweep.
pub fn dac_backward_table(
    t: &Topology,
    w: &WeightVector,
    trace: &ForwardTrace,
) -> Result<DacTable> {
    check_inputs(t, w, trace)?;
    let big_l = t.layers();
    let m = t.outputs();
    let mut layers = vec![Vec::new(); big_l + 1];

    let mut seed = vec![0.0; m * m];
    for o in 0..m {
        seed[o * m + o] = 1.0;
    }
    layers[big_l] = seed;

    for l in (1..big_l).rev() {
        let next = &layers[l + 1];
        let mut block = vec![0.0; t.width(l) * m];
        for i in 1..=t.width(l) {
            let row = &mut block[(i - 1) * m..i * m];
            for s in 1..=t.width(l + 1) {
                let w_si = w.at(t, l + 1, s, i);
                let next_row = &next[(s - 1) * m..s * m];
                for (acc, a) in row.iter_mut().zip(next_row) {
                    *acc += w_si * a;
                }
            }
            let prime = trace.prime(l, i);
            row.iter_mut().for_each(|v| *v *= prime);
        }
        layers[l] = block;
    }
    Ok(DacTable { outputs: m, layers })
}

/// `m x weight_count` matrix of output partial derivatives `df_o/dw_{l,i,j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputJacobian {
    outputs: usize,
    weights: usize,
    data: Vec<f64>,
}

impl OutputJacobian {
    pub(crate) fn zeros(outputs: usize, weights: usize) -> Self {
        Self {
            outputs,
            weights,
            data: vec![0.0; outputs * weights],
        }
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> usize {
        self.weights
    }

    /// Row for output `o` (1-based), indexed by flat weight position.
    pub fn row(&self, o: usize) -> &[f64] {
        &self.data[(o - 1) * self.weights..o * self.weights]
    }

    pub(crate) fn row_mut(&mut self, o: usize) -> &mut [f64] {
        &mut self.data[(o - 1) * self.weights..o * self.weights]
    }

    pub fn get(&self, o: usize, flat: usize) -> f64 {
        self.row(o)[flat]
    }
}

/// `df_o/dw_{l,i,j} = phi'_L(u_{L,o}) a(l,i -> L,o) p` with `p = 1` for the bias
/// and `p = z_{l-1,j}` otherwise.
pub fn output_jacobian_wrt_weights(
    t: &Topology,
    trace: &ForwardTrace,
    table: &DacTable,
) -> Result<OutputJacobian> {
    trace.check(t)?;
    if table.layers() != t.layers() || table.outputs() != t.outputs() {
        return Err(Error::InvalidParameter(format!(
            "dac table shape does not match topology {t}"
        )));
    }
    let big_l = t.layers();
    let mut jac = OutputJacobian::zeros(t.outputs(), t.weight_count());
    for o in 1..=t.outputs() {
        let out_prime = trace.prime(big_l, o);
        let row = jac.row_mut(o);
        for l in 1..=big_l {
            let z_prev = trace.z_layer(l - 1);
            for i in 1..=t.width(l) {
                let g = out_prime * table.get(l, i, o);
                let block = &mut row[t.neuron_range(l, i)];
                block[0] = g;
                for (d, z) in block[1..].iter_mut().zip(z_prev) {
                    *d = g * z;
                }
            }
        }
    }
    Ok(jac)
}
