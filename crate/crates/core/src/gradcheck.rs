//! Central finite-difference gradients and gradient comparison.

use std::fmt;

use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use crate::backprop::Gradient;
use crate::dac::OutputJacobian;
use crate::network::{forward, init_weights, ActivationKind, Topology, WeightVector};
use crate::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Pre-activations closer than this to 0 make relu gradchecks meaningless.
pub const KINK_MARGIN: f64 = 1e-3;

/// `|a - b| / max(1, |a|, |b|)`.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

fn squared_error(
    t: &Topology,
    w: &WeightVector,
    x: &[f64],
    d: &[f64],
    hidden: ActivationKind,
    output: ActivationKind,
) -> Result<f64> {
    let trace = forward(t, w, x, hidden, output)?;
    if d.len() != t.outputs() {
        return Err(Error::DimensionMismatch {
            what: "target",
            expected: t.outputs(),
            found: d.len(),
        });
    }
    Ok(0.5
        * trace
            .output()
            .iter()
            .zip(d)
            .map(|(y, d)| (y - d) * (y - d))
            .sum::<f64>())
}

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "step must be positive, got {h}"
        )));
    }
    Ok(())
}

/// `[E(w + h e_k) - E(w - h e_k)] / 2h` for every weight `k`.
pub fn finite_difference_gradient(
    t: &Topology,
    w: &WeightVector,
    x: &[f64],
    d: &[f64],
    hidden: ActivationKind,
    output: ActivationKind,
    h: f64,
) -> Result<Gradient> {
    check_step(h)?;
    squared_error(t, w, x, d, hidden, output)?;
    let mut probe = w.clone();
    let mut g = Vec::with_capacity(w.len());
    for k in 0..w.len() {
        let orig = probe.as_slice()[k];
        probe.as_mut_slice()[k] = orig + h;
        let plus = squared_error(t, &probe, x, d, hidden, output)?;
        probe.as_mut_slice()[k] = orig - h;
        let minus = squared_error(t, &probe, x, d, hidden, output)?;
        probe.as_mut_slice()[k] = orig;
        g.push((plus - minus) / (2.0 * h));
    }
    Ok(Gradient::new(g))
}

/// Central differences of each network output `f_o` with respect to every weight.
pub fn finite_difference_output_jacobian(
    t: &Topology,
    w: &WeightVector,
    x: &[f64],
    hidden: ActivationKind,
    output: ActivationKind,
    h: f64,
) -> Result<OutputJacobian> {
    check_step(h)?;
    forward(t, w, x, hidden, output)?;
    let mut jac = OutputJacobian::zeros(t.outputs(), t.weight_count());
    let mut probe = w.clone();
    for k in 0..w.len() {
        let orig = probe.as_slice()[k];
        probe.as_mut_slice()[k] = orig + h;
        let plus = forward(t, &probe, x, hidden, output)?;
        probe.as_mut_slice()[k] = orig - h;
        let minus = forward(t, &probe, x, hidden, output)?;
        probe.as_mut_slice()[k] = orig;
        for o in 1..=t.outputs() {
            jac.row_mut(o)[k] = (plus.output()[o - 1] - minus.output()[o - 1]) / (2.0 * h);
        }
    }
    Ok(jac)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub index: (usize, usize, usize),
    pub a: f64,
    pub b: f64,
    pub rel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub max_relative_error: f64,
    pub worst_index: (usize, usize, usize),
    pub entry_count: usize,
    pub tolerance: f64,
    pub failures: Vec<Mismatch>,
}

impl ComparisonReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (l, i, j) = self.worst_index;
        write!(
            f,
            "{} entries={} max_rel_error={:e} worst=w[{l},{i},{j}] tol={:e} failures={}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.entry_count,
            self.max_relative_error,
            self.tolerance,
            self.failures.len()
        )?;
        for m in &self.failures {
            let (l, i, j) = m.index;
            write!(
                f,
                "\n  w[{l},{i},{j}] a={:?} b={:?} rel={:e}",
                m.a, m.b, m.rel
            )?;
        }
        Ok(())
    }
}

/// Entrywise comparison under [`rel_error`]; an entry fails when its error
/// exceeds `tol`.
pub fn compare_gradients(t: &Topology, a: &[f64], b: &[f64], tol: f64) -> Result<ComparisonReport> {
    if a.len() != b.len() || a.len() != t.weight_count() {
        return Err(Error::DimensionMismatch {
            what: "gradient",
            expected: a.len().max(t.weight_count()),
            found: b.len(),
        });
    }
    let mut report = ComparisonReport {
        max_relative_error: 0.0,
        worst_index: (1, 1, 0),
        entry_count: a.len(),
        tolerance: tol,
        failures: Vec::new(),
    };
    for (k, (&x, &y)) in a.iter().zip(b).enumerate() {
        let rel = rel_error(x, y);
        let index = t.triple_of(k)?;
        // NaN never compares greater, so route it through explicitly.
        if rel > report.max_relative_error || (rel.is_nan() && !report.max_relative_error.is_nan())
        {
            report.max_relative_error = rel;
            report.worst_index = index;
        }
        if rel.is_nan() || rel > tol {
            report.failures.push(Mismatch {
                index,
                a: x,
                b: y,
                rel,
            });
        }
    }
    Ok(report)
}

/// Random weights, input and target for one gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckInstance {
    pub weights: WeightVector,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

const MAX_DRAWS: usize = 10_000;

/// Draws weights (initializer scheme), input and target in `[-1, 1]`.
///
/// When either activation is relu the draw is repeated until every
/// pre-activation is at least [`KINK_MARGIN`] away from 0.
pub fn draw_instance<R: Rng>(
    t: &Topology,
    hidden: ActivationKind,
    output: ActivationKind,
    rng: &mut R,
) -> Result<CheckInstance> {
    let unit = Uniform::new_inclusive(-1.0, 1.0);
    let needs_margin = !(hidden.is_smooth() && output.is_smooth());
    for _ in 0..MAX_DRAWS {
        let weights = init_weights(t, rng.gen());
        let input: Vec<f64> = (0..t.inputs()).map(|_| unit.sample(rng)).collect();
        let target: Vec<f64> = (0..t.outputs()).map(|_| unit.sample(rng)).collect();
        if needs_margin {
            let trace = forward(t, &weights, &input, hidden, output)?;
            if trace.min_abs_preactivation() < KINK_MARGIN {
                continue;
            }
        }
        return Ok(CheckInstance {
            weights,
            input,
            target,
        });
    }
    Err(Error::KinkAvoidance {
        margin: KINK_MARGIN,
        attempts: MAX_DRAWS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ActivationKind::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rel_error_is_absolute_near_zero() {
        assert_eq!(rel_error(0.0, 0.1), 0.1);
        assert_eq!(rel_error(100.0, 101.0), 1.0 / 101.0);
        assert_eq!(rel_error(-2.0, -2.0), 0.0);
    }

    #[test]
    fn compare_examples() {
        let t = Topology::new(&[1, 1]).unwrap();
        let r = compare_gradients(&t, &[1.0, 2.0], &[1.0, 2.0], 1e-6).unwrap();
        assert_eq!(r.max_relative_error, 0.0);
        assert!(r.passed());
        assert_eq!(r.entry_count, 2);

        let r = compare_gradients(&t, &[1.0, 0.0], &[1.0 + 1e-9, 0.0], 1e-6).unwrap();
        assert!(r.passed());

        let r = compare_gradients(&t, &[0.0, 0.0], &[0.1, 0.0], 1e-6).unwrap();
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.failures[0].rel, 0.1);
        assert_eq!(r.failures[0].index, (1, 1, 0));
        assert_eq!(r.worst_index, (1, 1, 0));

        assert!(compare_gradients(&t, &[0.0], &[0.0, 1.0], 1e-6).is_err());
    }

    #[test]
    fn nan_entries_fail() {
        let t = Topology::new(&[1, 1]).unwrap();
        let r = compare_gradients(&t, &[0.0, f64::NAN], &[0.0, 1.0], 1.0).unwrap();
        assert!(!r.passed());
        assert!(r.max_relative_error.is_nan());
        assert_eq!(r.worst_index, (1, 1, 1));
    }

    #[test]
    fn report_rendering() {
        let t = Topology::new(&[1, 1]).unwrap();
        let r = compare_gradients(&t, &[0.0, 0.0], &[0.1, 0.0], 1e-6).unwrap();
        let text = r.to_string();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("FAIL entries=2"));
        assert!(lines[1].contains("w[1,1,0]"));
    }

    #[test]
    fn fd_vanishes_at_exact_fit() {
        let t = Topology::new(&[2, 3, 1]).unwrap();
        let w = init_weights(&t, 17);
        let x = [0.2, -0.6];
        let y = forward(&t, &w, &x, Tanh, Identity)
            .unwrap()
            .output()
            .to_vec();
        let g = finite_difference_gradient(&t, &w, &x, &y, Tanh, Identity, 1e-5).unwrap();
        assert!(g.as_slice().iter().all(|v| v.abs() <= 1e-8));
    }

    #[test]
    fn fd_affine_single_layer() {
        // E = 1/2 sum_o (b_o + sum_j w_oj x_j - d_o)^2, so dE/dw_oj = eps_o x_j.
        let t = Topology::new(&[2, 2]).unwrap();
        let w = WeightVector::new(&t, vec![0.1, 0.2, -0.3, -0.4, 0.5, 0.6]).unwrap();
        let x = [1.5, -2.0];
        let d = [0.25, -1.0];
        let y0 = 0.1 + 0.2 * 1.5 - 0.3 * -2.0;
        let y1 = -0.4 + 0.5 * 1.5 + 0.6 * -2.0;
        let eps = [y0 - d[0], y1 - d[1]];
        let expected = [
            eps[0],
            eps[0] * x[0],
            eps[0] * x[1],
            eps[1],
            eps[1] * x[0],
            eps[1] * x[1],
        ];
        let g = finite_difference_gradient(&t, &w, &x, &d, Tanh, Identity, 1e-5).unwrap();
        for (a, b) in g.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn fd_rejects_bad_step() {
        let t = Topology::new(&[1, 1]).unwrap();
        let w = WeightVector::zeros(&t);
        for h in [0.0, -1e-5, f64::NAN] {
            assert!(finite_difference_gradient(&t, &w, &[1.0], &[0.0], Tanh, Identity, h).is_err());
        }
    }

    #[test]
    fn relu_draws_avoid_the_kink() {
        let t = Topology::new(&[3, 4, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let inst = draw_instance(&t, Relu, Identity, &mut rng).unwrap();
            let trace = forward(&t, &inst.weights, &inst.input, Relu, Identity).unwrap();
            assert!(trace.min_abs_preactivation() >= KINK_MARGIN);
        }
    }
}
