//! Randomized equivalence suite: the efficient backward recursions against
//! their definitional counterparts.

use std::fmt;

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backprop::{
    backpropagate_error_coefficients, bp_reg, epsilon_regression, error_coefficients_by_definition,
    output_error_coefficients, ErrorCoefficients,
};
use crate::dac::{
    dac_backward_table, dac_by_definition, dac_table_by_definition, output_jacobian_wrt_weights,
};
use crate::gradcheck::rel_error;
use crate::network::{forward, ActivationKind, ForwardTrace, Topology, WeightVector};
use crate::{Error, Result};

/// Tolerance for every property in the suite.
pub const EQUIVALENCE_TOL: f64 = 1e-12;

/// Backward error-coefficient recursion under test.
pub type BackwardKernel =
    fn(&Topology, &WeightVector, &ForwardTrace, &[f64]) -> Result<ErrorCoefficients>;

pub const DAC_BACKWARD: &str = "dac backward table = dac definition";
pub const DAC_LAYER_RECURSION: &str = "dac layer recursion (all l < r)";
pub const ERROR_COEFFICIENTS: &str = "error coefficients backward = definition";
pub const JACOBIAN_ASSEMBLY: &str = "bp_reg = eps-weighted output jacobian";
pub const WORKED_2321: &str = "2-3-2-1 worked identity";

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub max_layers: usize,
    pub max_width: usize,
    pub trials: usize,
    pub seed: u64,
    pub activations: Vec<ActivationKind>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            max_layers: 4,
            max_width: 6,
            trials: 100,
            seed: 0,
            activations: ActivationKind::ALL.to_vec(),
        }
    }
}

/// One random network evaluated at one random point.
#[derive(Debug, Clone)]
pub struct Instance {
    pub topology: Topology,
    pub weights: WeightVector,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    pub hidden: ActivationKind,
    pub output: ActivationKind,
}

impl Instance {
    pub fn trace(&self) -> Result<ForwardTrace> {
        forward(
            &self.topology,
            &self.weights,
            &self.input,
            self.hidden,
            self.output,
        )
    }
}

/// Generator for trial `trial` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Random topology with `1..=max_layers` computing layers and widths in
/// `1..=max_width`; weights, input and target uniform in `[-2, 2]`.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    max_layers: usize,
    max_width: usize,
    activations: &[ActivationKind],
) -> Result<Instance> {
    let layers = rng.gen_range(1..=max_layers);
    let widths: Vec<usize> = (0..=layers).map(|_| rng.gen_range(1..=max_width)).collect();
    instance_for(rng, Topology::new(&widths)?, activations)
}

/// Random weights, input, target and activations for a fixed topology.
pub fn instance_for<R: Rng>(
    rng: &mut R,
    topology: Topology,
    activations: &[ActivationKind],
) -> Result<Instance> {
    let hidden = *activations
        .choose(rng)
        .ok_or_else(|| Error::InvalidParameter("no activations to sample from".into()))?;
    let output = *activations.choose(rng).unwrap();
    let dist = Uniform::new_inclusive(-2.0, 2.0);
    let weights: Vec<f64> = (0..topology.weight_count())
        .map(|_| dist.sample(rng))
        .collect();
    let weights = WeightVector::new(&topology, weights)?;
    let input = (0..topology.inputs()).map(|_| dist.sample(rng)).collect();
    let target = (0..topology.outputs()).map(|_| dist.sample(rng)).collect();
    Ok(Instance {
        topology,
        weights,
        input,
        target,
        hidden,
        output,
    })
}

/// Worst entrywise [`rel_error`] between two equal-length sequences.
pub fn max_rel_error(a: impl IntoIterator<Item = f64>, b: impl IntoIterator<Item = f64>) -> f64 {
    a.into_iter()
        .zip(b)
        .map(|(x, y)| rel_error(x, y))
        .fold(0.0, worse)
}

// max that keeps NaN
fn worse(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

pub fn check_dac_backward(inst: &Instance) -> Result<f64> {
    let trace = inst.trace()?;
    let fast = dac_backward_table(&inst.topology, &inst.weights, &trace)?;
    let slow = dac_table_by_definition(&inst.topology, &inst.weights, &trace)?;
    Ok(max_rel_error(fast.entries(), slow.entries()))
}

/// For every `l < r`: `a(l,i -> r,t) = phi'_l(u_{l,i}) sum_s w_{l+1,s,i} a(l+1,s -> r,t)`,
/// both sides by definition.
pub fn check_dac_layer_recursion(inst: &Instance) -> Result<f64> {
    let t = &inst.topology;
    let w = &inst.weights;
    let trace = inst.trace()?;
    let mut worst = 0.0f64;
    for l in 1..t.layers() {
        for r in l + 1..=t.layers() {
            for i in 1..=t.width(l) {
                for tgt in 1..=t.width(r) {
                    let lhs = dac_by_definition(t, w, &trace, l, i, r, tgt)?;
                    let mut sum = 0.0;
                    for s in 1..=t.width(l + 1) {
                        sum += w.get(t, l + 1, s, i)?
                            * dac_by_definition(t, w, &trace, l + 1, s, r, tgt)?;
                    }
                    let rhs = trace.prime(l, i) * sum;
                    worst = worse(worst, rel_error(lhs, rhs));
                }
            }
        }
    }
    Ok(worst)
}

pub fn check_error_coefficients(inst: &Instance, kernel: BackwardKernel) -> Result<f64> {
    let t = &inst.topology;
    let trace = inst.trace()?;
    let eps = epsilon_regression(trace.output(), &inst.target)?;
    let seed = output_error_coefficients(&eps, &trace)?;
    let fast = kernel(t, &inst.weights, &trace, &seed)?;
    let table = dac_table_by_definition(t, &inst.weights, &trace)?;
    let slow = error_coefficients_by_definition(&eps, &trace, &table)?;
    Ok(max_rel_error(fast.values(), slow.values()))
}

/// `bp_reg` against `sum_o eps_o df_o/dw` built from the coefficient table.
pub fn check_jacobian_assembly(inst: &Instance) -> Result<f64> {
    let t = &inst.topology;
    let grad = bp_reg(
        t,
        &inst.weights,
        &inst.input,
        &inst.target,
        inst.hidden,
        inst.output,
    )?;
    let trace = inst.trace()?;
    let eps = epsilon_regression(trace.output(), &inst.target)?;
    let table = dac_backward_table(t, &inst.weights, &trace)?;
    let jac = output_jacobian_wrt_weights(t, &trace, &table)?;
    let mut assembled = vec![0.0; t.weight_count()];
    for (o, e) in eps.as_slice().iter().enumerate() {
        for (acc, d) in assembled.iter_mut().zip(jac.row(o + 1)) {
            *acc += e * d;
        }
    }
    Ok(max_rel_error(grad.as_slice().iter().copied(), assembled))
}

/// `a(1,2 -> 3,1) = phi'_1(u_{1,2}) (w_{2,1,2} a(2,1 -> 3,1) + w_{2,2,2} a(2,2 -> 3,1))`
/// on a 2-3-2-1 network.
pub fn check_worked_2321(inst: &Instance) -> Result<f64> {
    let t = &inst.topology;
    if t.widths() != [2, 3, 2, 1] {
        return Err(Error::InvalidParameter(format!(
            "expected a 2-3-2-1 network, got {t}"
        )));
    }
    let w = &inst.weights;
    let trace = inst.trace()?;
    let lhs = dac_by_definition(t, w, &trace, 1, 2, 3, 1)?;
    let a21 = dac_by_definition(t, w, &trace, 2, 1, 3, 1)?;
    let a22 = dac_by_definition(t, w, &trace, 2, 2, 3, 1)?;
    let rhs = trace.prime(1, 2) * (w.get(t, 2, 1, 2)? * a21 + w.get(t, 2, 2, 2)? * a22);
    let table = dac_backward_table(t, w, &trace)?;
    Ok(rel_error(lhs, rhs).max(rel_error(table.get(1, 2, 1), lhs)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyFailure {
    pub topology: Topology,
    pub seed: u64,
    pub trial: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub instances: usize,
    pub worst_error: f64,
    pub tolerance: f64,
    /// First failing instance, if any.
    pub failure: Option<PropertyFailure>,
}

impl PropertyResult {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

impl fmt::Display for PropertyResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: instances={} worst_rel_error={:e} tol={:e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.instances,
            self.worst_error,
            self.tolerance
        )?;
        if let Some(fail) = &self.failure {
            write!(
                f,
                " first_failure: topology={} seed={} trial={} rel_error={:e}",
                fail.topology, fail.seed, fail.trial, fail.error
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub properties: Vec<PropertyResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(PropertyResult::passed)
    }

    pub fn property(&self, name: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.name == name)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.properties {
            writeln!(f, "{p}")?;
        }
        let failed = self.properties.iter().filter(|p| !p.passed()).count();
        write!(f, "{} properties, {} failed", self.properties.len(), failed)
    }
}

struct Tally {
    name: &'static str,
    instances: usize,
    worst: f64,
    failure: Option<PropertyFailure>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            instances: 0,
            worst: 0.0,
            failure: None,
        }
    }

    fn record(&mut self, err: f64, inst: &Instance, seed: u64, trial: usize) {
        self.instances += 1;
        self.worst = worse(self.worst, err);
        if (err.is_nan() || err > EQUIVALENCE_TOL) && self.failure.is_none() {
            self.failure = Some(PropertyFailure {
                topology: inst.topology.clone(),
                seed,
                trial,
                error: err,
            });
        }
    }

    fn finish(self) -> PropertyResult {
        PropertyResult {
            name: self.name,
            instances: self.instances,
            worst_error: self.worst,
            tolerance: EQUIVALENCE_TOL,
            failure: self.failure,
        }
    }
}

pub fn run_verify(cfg: &VerifyConfig) -> Result<VerifyReport> {
    run_verify_with(cfg, backpropagate_error_coefficients)
}

/// Runs the suite with `kernel` standing in for the backward error-coefficient
/// recursion.
pub fn run_verify_with(cfg: &VerifyConfig, kernel: BackwardKernel) -> Result<VerifyReport> {
    if cfg.max_layers == 0 || cfg.max_width == 0 || cfg.trials == 0 {
        return Err(Error::InvalidParameter(
            "max-layers, max-width and trials must all be at least 1".into(),
        ));
    }
    let mut dac = Tally::new(DAC_BACKWARD);
    let mut recursion = Tally::new(DAC_LAYER_RECURSION);
    let mut coefficients = Tally::new(ERROR_COEFFICIENTS);
    let mut assembly = Tally::new(JACOBIAN_ASSEMBLY);
    let mut worked = Tally::new(WORKED_2321);
    let fixed = Topology::new(&[2, 3, 2, 1])?;

    for trial in 0..cfg.trials {
        let mut rng = trial_rng(cfg.seed, trial);
        let inst = random_instance(&mut rng, cfg.max_layers, cfg.max_width, &cfg.activations)?;
        dac.record(check_dac_backward(&inst)?, &inst, cfg.seed, trial);
        recursion.record(check_dac_layer_recursion(&inst)?, &inst, cfg.seed, trial);
        coefficients.record(
            check_error_coefficients(&inst, kernel)?,
            &inst,
            cfg.seed,
            trial,
        );
        assembly.record(check_jacobian_assembly(&inst)?, &inst, cfg.seed, trial);

        let inst = instance_for(&mut rng, fixed.clone(), &cfg.activations)?;
        worked.record(check_worked_2321(&inst)?, &inst, cfg.seed, trial);
    }

    Ok(VerifyReport {
        properties: vec![
            dac.finish(),
            recursion.finish(),
            coefficients.finish(),
            assembly.finish(),
            worked.finish(),
        ],
    })
}
