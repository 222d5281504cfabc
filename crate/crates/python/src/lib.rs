use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use dacnet::{ActivationKind, Topology, WeightVector};

fn to_py(err: dacnet::Error) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn activation(name: &str) -> PyResult<ActivationKind> {
    name.parse().map_err(to_py)
}

fn topology(widths: &[usize]) -> PyResult<Topology> {
    Topology::new(widths).map_err(to_py)
}

/// Network output and every intermediate pre-activation / activation.
#[pyclass(name = "ForwardTrace", frozen)]
struct PyForwardTrace {
    inner: dacnet::ForwardTrace,
}

#[pymethods]
impl PyForwardTrace {
    /// `u[l-1]` holds the pre-activations of layer `l`.
    #[getter]
    fn u(&self) -> Vec<Vec<f64>> {
        (1..=self.inner.layers())
            .map(|l| self.inner.u_layer(l).to_vec())
            .collect()
    }

    /// `z[l]` holds the activations of layer `l`; `z[0]` is the input.
    #[getter]
    fn z(&self) -> Vec<Vec<f64>> {
        (0..=self.inner.layers())
            .map(|l| self.inner.z_layer(l).to_vec())
            .collect()
    }

    #[getter]
    fn output(&self) -> Vec<f64> {
        self.inner.output().to_vec()
    }
}

#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: dacnet::Model,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (layers, weights, hidden = "tanh", output = "identity"))]
    fn new(layers: Vec<usize>, weights: Vec<f64>, hidden: &str, output: &str) -> PyResult<Self> {
        let t = topology(&layers)?;
        let w = WeightVector::new(&t, weights).map_err(to_py)?;
        let inner =
            dacnet::Model::new(t, w, activation(hidden)?, activation(output)?).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Fresh model with seeded uniform initial weights.
    #[staticmethod]
    #[pyo3(signature = (layers, seed, hidden = "tanh", output = "identity"))]
    fn random(layers: Vec<usize>, seed: u64, hidden: &str, output: &str) -> PyResult<Self> {
        let t = topology(&layers)?;
        let w = dacnet::init_weights(&t, seed);
        let inner =
            dacnet::Model::new(t, w, activation(hidden)?, activation(output)?).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: dacnet::load_model(text).map_err(to_py)?,
        })
    }

    fn save(&self) -> String {
        dacnet::save_model(&self.inner)
    }

    #[getter]
    fn layers(&self) -> Vec<usize> {
        self.inner.topology.widths().to_vec()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.as_slice().to_vec()
    }

    #[getter]
    fn hidden_activation(&self) -> &'static str {
        self.inner.hidden.name()
    }

    #[getter]
    fn output_activation(&self) -> &'static str {
        self.inner.output.name()
    }

    fn forward(&self, x: Vec<f64>) -> PyResult<PyForwardTrace> {
        Ok(PyForwardTrace {
            inner: self.inner.forward(&x).map_err(to_py)?,
        })
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.predict(&x).map_err(to_py)
    }

    /// Gradient of `1/2 ||f(x) - d||^2` by backpropagation, flat weight order.
    fn gradient(&self, x: Vec<f64>, d: Vec<f64>) -> PyResult<Vec<f64>> {
        let m = &self.inner;
        dacnet::bp_reg(&m.topology, &m.weights, &x, &d, m.hidden, m.output)
            .map(|g| g.into_vec())
            .map_err(to_py)
    }

    #[pyo3(signature = (x, d, step = dacnet::gradcheck::DEFAULT_STEP))]
    fn finite_difference_gradient(
        &self,
        x: Vec<f64>,
        d: Vec<f64>,
        step: f64,
    ) -> PyResult<Vec<f64>> {
        let m = &self.inner;
        dacnet::finite_difference_gradient(
            &m.topology,
            &m.weights,
            &x,
            &d,
            m.hidden,
            m.output,
            step,
        )
        .map(|g| g.into_vec())
        .map_err(to_py)
    }

    /// Error coefficients `e[l-1][i-1]` at sample `(x, d)`.
    fn error_coefficients(&self, x: Vec<f64>, d: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let m = &self.inner;
        let trace = m.forward(&x).map_err(to_py)?;
        let eps = dacnet::epsilon_regression(trace.output(), &d).map_err(to_py)?;
        let seed = dacnet::output_error_coefficients(&eps, &trace).map_err(to_py)?;
        let e = dacnet::backpropagate_error_coefficients(&m.topology, &m.weights, &trace, &seed)
            .map_err(to_py)?;
        Ok((1..=e.layers()).map(|l| e.layer(l).to_vec()).collect())
    }

    /// `table[l-1][i-1][o-1] = a(l,i -> L,o)` from the backward sweep.
    fn dac_table(&self, x: Vec<f64>) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let m = &self.inner;
        let trace = m.forward(&x).map_err(to_py)?;
        let table = dacnet::dac_backward_table(&m.topology, &m.weights, &trace).map_err(to_py)?;
        Ok((1..=m.topology.layers())
            .map(|l| {
                (1..=m.topology.width(l))
                    .map(|i| table.row(l, i).to_vec())
                    .collect()
            })
            .collect())
    }

    /// `a(l,i -> r,t)` evaluated from the recursive definition (1-based).
    fn dac_by_definition(
        &self,
        x: Vec<f64>,
        l: usize,
        i: usize,
        r: usize,
        t: usize,
    ) -> PyResult<f64> {
        let m = &self.inner;
        let trace = m.forward(&x).map_err(to_py)?;
        dacnet::dac_by_definition(&m.topology, &m.weights, &trace, l, i, r, t).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(layers={}, hidden={}, output={})",
            self.inner.topology, self.inner.hidden, self.inner.output
        )
    }
}

#[pyfunction]
fn weight_count(layers: Vec<usize>) -> PyResult<usize> {
    Ok(topology(&layers)?.weight_count())
}

/// Flat position of `w[l,i,j]` (1-based `l`, `i`; `j = 0` is the bias).
#[pyfunction]
fn index_of(layers: Vec<usize>, l: usize, i: usize, j: usize) -> PyResult<usize> {
    topology(&layers)?.index_of(l, i, j).map_err(to_py)
}

#[pyfunction]
fn init_weights(layers: Vec<usize>, seed: u64) -> PyResult<Vec<f64>> {
    Ok(dacnet::init_weights(&topology(&layers)?, seed).into_vec())
}

#[pyfunction]
fn activate(name: &str, v: f64) -> PyResult<f64> {
    Ok(activation(name)?.activate(v))
}

#[pyfunction]
fn activate_prime(name: &str, v: f64) -> PyResult<f64> {
    Ok(activation(name)?.activate_prime(v))
}

/// Parses CSV rows into `(inputs, targets)` pairs.
#[pyfunction]
#[pyo3(signature = (text, n, m, header = false))]
fn load_dataset(
    text: &str,
    n: usize,
    m: usize,
    header: bool,
) -> PyResult<Vec<(Vec<f64>, Vec<f64>)>> {
    let ds = dacnet::load_dataset(text, n, m, header).map_err(to_py)?;
    Ok(ds
        .samples()
        .iter()
        .map(|s| (s.input.clone(), s.target.clone()))
        .collect())
}

/// Online SGD; returns the trained model and the per-epoch total error.
#[pyfunction]
#[pyo3(signature = (
    layers,
    samples,
    learning_rate = 0.01,
    epochs = 100,
    seed = 42,
    shuffle = true,
    hidden = "tanh",
    output = "identity",
))]
#[allow(clippy::too_many_arguments)]
fn train(
    layers: Vec<usize>,
    samples: Vec<(Vec<f64>, Vec<f64>)>,
    learning_rate: f64,
    epochs: usize,
    seed: u64,
    shuffle: bool,
    hidden: &str,
    output: &str,
) -> PyResult<(PyModel, Vec<f64>)> {
    let t = topology(&layers)?;
    let (hidden, output) = (activation(hidden)?, activation(output)?);
    let mut ds = dacnet::Dataset::new(t.inputs(), t.outputs());
    for (x, d) in samples {
        ds.push(x, d).map_err(to_py)?;
    }
    let cfg = dacnet::TrainConfig {
        learning_rate,
        epochs,
        seed,
        shuffle,
    };
    let (w, history) = dacnet::train(&t, &ds, &cfg, hidden, output).map_err(to_py)?;
    let inner = dacnet::Model::new(t, w, hidden, output).map_err(to_py)?;
    Ok((PyModel { inner }, history.epoch_errors))
}

/// Runs the randomized equivalence suite; returns `(passed, report_text)`.
#[pyfunction]
#[pyo3(signature = (max_layers = 4, max_width = 6, trials = 100, seed = 0))]
fn verify(
    max_layers: usize,
    max_width: usize,
    trials: usize,
    seed: u64,
) -> PyResult<(bool, String)> {
    let cfg = dacnet::VerifyConfig {
        max_layers,
        max_width,
        trials,
        seed,
        ..Default::default()
    };
    let report = dacnet::run_verify(&cfg).map_err(to_py)?;
    Ok((report.passed(), report.to_string()))
}

#[pymodule]
#[pyo3(name = "dacnet")]
fn dacnet_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyForwardTrace>()?;
    m.add_function(wrap_pyfunction!(weight_count, m)?)?;
    m.add_function(wrap_pyfunction!(index_of, m)?)?;
    m.add_function(wrap_pyfunction!(init_weights, m)?)?;
    m.add_function(wrap_pyfunction!(activate, m)?)?;
    m.add_function(wrap_pyfunction!(activate_prime, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
