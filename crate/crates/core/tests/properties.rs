use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dacnet::gradcheck::{draw_instance, rel_error};
use dacnet::trainer::dataset_gradient;
use dacnet::verify::{check_dac_layer_recursion, instance_for, max_rel_error};
use dacnet::{
    backpropagate_error_coefficients, bp_reg, compare_gradients, dac_backward_table,
    dac_by_definition, error_gradient, error_value, finite_difference_gradient, forward,
    init_weights, load_model, output_error_coefficients, save_model, sgd_step, total_error, train,
    ActivationKind, Dataset, EpsilonVector, Model, Topology, TrainConfig, WeightVector,
};

fn topology() -> impl Strategy<Value = Topology> {
    prop::collection::vec(1usize..=6, 2..=5).prop_map(|w| Topology::new(&w).unwrap())
}

fn activation() -> impl Strategy<Value = ActivationKind> {
    prop::sample::select(ActivationKind::ALL.to_vec())
}

fn smooth() -> impl Strategy<Value = ActivationKind> {
    prop::sample::select(ActivationKind::SMOOTH.to_vec())
}

/// Bias-free weight matrix of layer `l`, `h_l x h_{l-1}`.
fn weight_matrix(t: &Topology, w: &WeightVector, l: usize) -> Vec<Vec<f64>> {
    (1..=t.width(l))
        .map(|i| {
            (1..=t.width(l - 1))
                .map(|j| w.get(t, l, i, j).unwrap())
                .collect()
        })
        .collect()
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let inner = b.len();
    let cols = b[0].len();
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|c| (0..inner).map(|k| row[k] * b[k][c]).sum())
                .collect()
        })
        .collect()
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|r| (0..n).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn zero_biases(t: &Topology, w: &mut WeightVector) {
    for l in 1..=t.layers() {
        for i in 1..=t.width(l) {
            w.set(t, l, i, 0, 0.0).unwrap();
        }
    }
}

fn unit_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    use rand::Rng;
    (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn index_enumeration_is_a_bijection(t in topology()) {
        let mut seen = vec![false; t.weight_count()];
        for l in 1..=t.layers() {
            for i in 1..=t.width(l) {
                for j in 0..=t.width(l - 1) {
                    let k = t.index_of(l, i, j).unwrap();
                    prop_assert!(!seen[k]);
                    seen[k] = true;
                    prop_assert_eq!(t.triple_of(k).unwrap(), (l, i, j));
                }
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
        let closed_form: usize = (1..=t.layers()).map(|l| (1 + t.width(l - 1)) * t.width(l)).sum();
        prop_assert_eq!(t.weight_count(), closed_form);
    }

    #[test]
    fn trace_satisfies_activation_relation(t in topology(), seed in any::<u64>(), h in activation(), o in activation()) {
        let w = init_weights(&t, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = unit_vec(&mut rng, t.inputs());
        let trace = forward(&t, &w, &x, h, o).unwrap();
        let again = forward(&t, &w, &x, h, o).unwrap();
        prop_assert_eq!(&trace, &again);
        prop_assert_eq!(trace.input(), x.as_slice());
        for l in 1..=t.layers() {
            let phi = if l == t.layers() { o } else { h };
            for i in 1..=t.width(l) {
                prop_assert_eq!(trace.z(l, i).to_bits(), phi.activate(trace.u(l, i)).to_bits());
            }
        }
    }

    #[test]
    fn linear_network_matches_matrix_chain(t in topology(), seed in any::<u64>()) {
        let mut w = init_weights(&t, seed);
        zero_biases(&t, &mut w);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let x = unit_vec(&mut rng, t.inputs());
        let trace = forward(&t, &w, &x, ActivationKind::Identity, ActivationKind::Identity).unwrap();

        let mut chain = identity(t.inputs());
        for l in 1..=t.layers() {
            chain = matmul(&weight_matrix(&t, &w, l), &chain);
        }
        let column: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
        let y: Vec<f64> = matmul(&chain, &column).into_iter().map(|r| r[0]).collect();
        prop_assert!(max_rel_error(trace.output().iter().copied(), y) <= 1e-12);
    }

    #[test]
    fn linear_network_dacs_are_weight_products(t in topology(), seed in any::<u64>()) {
        let w = init_weights(&t, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = unit_vec(&mut rng, t.inputs());
        let trace = forward(&t, &w, &x, ActivationKind::Identity, ActivationKind::Identity).unwrap();
        let table = dac_backward_table(&t, &w, &trace).unwrap();
        let big_l = t.layers();
        for l in 1..=big_l {
            // W_L ... W_{l+1}, an m x h_l matrix
            let mut chain = identity(t.width(l));
            for r in l + 1..=big_l {
                chain = matmul(&weight_matrix(&t, &w, r), &chain);
            }
            for i in 1..=t.width(l) {
                for o in 1..=t.outputs() {
                    prop_assert!(rel_error(table.get(l, i, o), chain[o - 1][i - 1]) <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn dac_recursion_holds_between_any_layers(seed in any::<u64>(), t in topology()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = instance_for(&mut rng, t, &ActivationKind::ALL).unwrap();
        prop_assert!(check_dac_layer_recursion(&inst).unwrap() <= 1e-12);
    }

    #[test]
    fn backward_table_matches_definition(seed in any::<u64>(), t in topology(), h in activation(), o in activation()) {
        let w = init_weights(&t, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = unit_vec(&mut rng, t.inputs());
        let trace = forward(&t, &w, &x, h, o).unwrap();
        let table = dac_backward_table(&t, &w, &trace).unwrap();
        for l in 1..=t.layers() {
            for i in 1..=t.width(l) {
                for out in 1..=t.outputs() {
                    let by_def = dac_by_definition(&t, &w, &trace, l, i, t.layers(), out).unwrap();
                    prop_assert!(rel_error(table.get(l, i, out), by_def) <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn coefficients_and_gradient_are_linear_in_epsilon(
        seed in any::<u64>(),
        t in topology(),
        h in activation(),
        o in activation(),
        c in -4.0f64..4.0,
    ) {
        let w = init_weights(&t, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = unit_vec(&mut rng, t.inputs());
        let eps = EpsilonVector::new(unit_vec(&mut rng, t.outputs()));
        let trace = forward(&t, &w, &x, h, o).unwrap();

        let run = |eps: &EpsilonVector| {
            let seed = output_error_coefficients(eps, &trace).unwrap();
            let e = backpropagate_error_coefficients(&t, &w, &trace, &seed).unwrap();
            let g = error_gradient(&t, &trace, &e).unwrap();
            (e, g)
        };
        let (e1, g1) = run(&eps);
        let (ec, gc) = run(&eps.scaled(c));
        prop_assert!(max_rel_error(e1.values().map(|v| c * v), ec.values()) <= 1e-12);
        prop_assert!(max_rel_error(g1.as_slice().iter().map(|v| c * v), gc.as_slice().iter().copied()) <= 1e-12);
    }

    #[test]
    fn backprop_matches_finite_differences(seed in any::<u64>(), t in topology(), h in activation(), o in activation()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = draw_instance(&t, h, o, &mut rng).unwrap();
        let analytic = bp_reg(&t, &inst.weights, &inst.input, &inst.target, h, o).unwrap();
        let numeric = finite_difference_gradient(&t, &inst.weights, &inst.input, &inst.target, h, o, 1e-5).unwrap();
        let report = compare_gradients(&t, analytic.as_slice(), numeric.as_slice(), 1e-6).unwrap();
        prop_assert!(report.passed(), "{}", report);
    }

    #[test]
    fn comparison_is_symmetric(a in prop::collection::vec(-10.0f64..10.0, 6), b in prop::collection::vec(-10.0f64..10.0, 6), tol in 0.0f64..1.0) {
        let t = Topology::new(&[1, 3]).unwrap();
        let ab = compare_gradients(&t, &a, &b, tol).unwrap();
        let ba = compare_gradients(&t, &b, &a, tol).unwrap();
        prop_assert_eq!(ab.max_relative_error, ba.max_relative_error);
        prop_assert_eq!(ab.worst_index, ba.worst_index);
        prop_assert_eq!(ab.failures.len(), ba.failures.len());
        prop_assert_eq!(ab.failures.is_empty(), ab.max_relative_error <= tol);
    }

    #[test]
    fn small_step_does_not_increase_sample_error(seed in any::<u64>(), t in topology(), h in smooth(), o in smooth()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = draw_instance(&t, h, o, &mut rng).unwrap();
        let before = error_value(&forward(&t, &inst.weights, &inst.input, h, o).unwrap(), &inst.target).unwrap();
        let g = bp_reg(&t, &inst.weights, &inst.input, &inst.target, h, o).unwrap();
        let w2 = sgd_step(&inst.weights, &g, 1e-4).unwrap();
        let after = error_value(&forward(&t, &w2, &inst.input, h, o).unwrap(), &inst.target).unwrap();
        prop_assert!(after <= before, "{after} > {before}");
    }

    #[test]
    fn model_round_trip_is_bit_exact(t in topology(), seed in any::<u64>(), h in activation(), o in activation()) {
        let mut w = init_weights(&t, seed);
        // include awkward magnitudes
        let s = w.as_mut_slice();
        s[0] *= 1e-300;
        if s.len() > 1 { s[1] *= 1e300; }
        let m = Model::new(t, w, h, o).unwrap();
        let back = load_model(&save_model(&m)).unwrap();
        prop_assert_eq!(&back.topology, &m.topology);
        prop_assert_eq!((back.hidden, back.output), (m.hidden, m.output));
        for (a, b) in back.weights.as_slice().iter().zip(m.weights.as_slice()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

#[test]
fn central_difference_error_is_second_order() {
    let t = Topology::new(&[2, 3, 2, 1]).unwrap();
    let mut checked = 0;
    for seed in 0..12u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = instance_for(&mut rng, t.clone(), &[ActivationKind::Tanh]).unwrap();
        let (h, o) = (inst.hidden, inst.output);
        let analytic = bp_reg(&t, &inst.weights, &inst.input, &inst.target, h, o).unwrap();
        let disagreement = |step: f64| {
            let fd = finite_difference_gradient(
                &t,
                &inst.weights,
                &inst.input,
                &inst.target,
                h,
                o,
                step,
            )
            .unwrap();
            fd.as_slice()
                .iter()
                .zip(analytic.as_slice())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let coarse = disagreement(1e-4);
        // Below ~1e-10 rounding noise dominates and there is no h^2 term to see.
        if coarse < 1e-10 {
            continue;
        }
        let ratio = coarse / disagreement(5e-5);
        assert!((2.0..=8.0).contains(&ratio), "seed {seed}: ratio {ratio}");
        checked += 1;
    }
    assert!(
        checked >= 8,
        "only {checked} instances above the rounding floor"
    );
}

#[test]
fn dataset_gradient_is_sum_of_sample_gradients() {
    let t = Topology::new(&[3, 4, 2]).unwrap();
    let (h, o) = (ActivationKind::Sigmoid, ActivationKind::Tanh);
    let w = init_weights(&t, 13);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut ds = Dataset::new(3, 2);
    for _ in 0..7 {
        ds.push(unit_vec(&mut rng, 3), unit_vec(&mut rng, 2))
            .unwrap();
    }
    let total = dataset_gradient(&t, &w, &ds, h, o).unwrap();
    let mut summed = vec![0.0; t.weight_count()];
    for s in ds.samples() {
        let g = bp_reg(&t, &w, &s.input, &s.target, h, o).unwrap();
        for (acc, v) in summed.iter_mut().zip(g.as_slice()) {
            *acc += v;
        }
    }
    assert!(max_rel_error(total.as_slice().iter().copied(), summed) <= 1e-12);

    // central differences of the summed error
    let step = 1e-5;
    let mut probe = w.clone();
    for k in 0..t.weight_count() {
        let orig = probe.as_slice()[k];
        probe.as_mut_slice()[k] = orig + step;
        let plus = total_error(&t, &probe, &ds, h, o).unwrap();
        probe.as_mut_slice()[k] = orig - step;
        let minus = total_error(&t, &probe, &ds, h, o).unwrap();
        probe.as_mut_slice()[k] = orig;
        let fd = (plus - minus) / (2.0 * step);
        assert!(rel_error(fd, total.as_slice()[k]) <= 1e-6, "weight {k}");
    }
}

#[test]
fn training_is_deterministic() {
    let t = Topology::new(&[2, 3, 1]).unwrap();
    let ds = dacnet::load_dataset("0,0,0\n0,1,1\n1,0,1\n1,1,0\n", 2, 1, false).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.1,
        epochs: 50,
        seed: 3,
        shuffle: true,
    };
    let a = train(
        &t,
        &ds,
        &cfg,
        ActivationKind::Tanh,
        ActivationKind::Identity,
    )
    .unwrap();
    let b = train(
        &t,
        &ds,
        &cfg,
        ActivationKind::Tanh,
        ActivationKind::Identity,
    )
    .unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    let unshuffled = TrainConfig {
        shuffle: false,
        ..cfg
    };
    let c = train(
        &t,
        &ds,
        &unshuffled,
        ActivationKind::Tanh,
        ActivationKind::Identity,
    )
    .unwrap();
    assert_ne!(a.0, c.0);
}

#[test]
fn single_sample_affine_fit_converges() {
    // y = b + w x fitted to (x=1, d=2): any b + w = 2 is a least-squares solution.
    let t = Topology::new(&[1, 1]).unwrap();
    let mut ds = Dataset::new(1, 1);
    ds.push(vec![1.0], vec![2.0]).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.1,
        epochs: 200,
        seed: 1,
        shuffle: false,
    };
    let w0 = init_weights(&t, 1);
    let initial =
        total_error(&t, &w0, &ds, ActivationKind::Tanh, ActivationKind::Identity).unwrap();
    let (w, history) = train(
        &t,
        &ds,
        &cfg,
        ActivationKind::Tanh,
        ActivationKind::Identity,
    )
    .unwrap();
    assert_eq!(history.epoch_errors.len(), 200);
    assert!(*history.epoch_errors.last().unwrap() < initial);
    assert!(*history.epoch_errors.last().unwrap() < 1e-12);
    assert!((w.as_slice()[0] + w.as_slice()[1] - 2.0).abs() < 1e-6);
    // residual shrinks by (1 - 2 lr) per step since |(1, x)|^2 = 2
    let r0 = w0.as_slice()[0] + w0.as_slice()[1] - 2.0;
    let expected = 0.5 * (r0 * 0.8f64.powi(200)).powi(2);
    assert!(rel_error(*history.epoch_errors.last().unwrap(), expected) <= 1e-12);
}
