use proptest::prelude::*;
use snapdial::numerics::ops::{self, CrossEntropyKind, CLAMP_EPS};
use snapdial::numerics::{relative_error, Rng, Tensor};

fn v(x: &[f64]) -> Tensor {
    Tensor::vector(x.to_vec()).unwrap()
}

/// Central differences of `f` at `x` against the analytic vector-Jacobian
/// product with upstream gradient `dy`.
fn fd_vjp(x: &[f64], dy: &[f64], f: impl Fn(&[f64]) -> Vec<f64>, eps: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += eps;
            xm[i] -= eps;
            let yp = f(&xp);
            let ym = f(&xm);
            yp.iter()
                .zip(&ym)
                .zip(dy)
                .map(|((a, b), g)| g * (a - b) / (2.0 * eps))
                .sum()
        })
        .collect()
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| relative_error(*x, *y)).fold(0.0, f64::max)
}

#[test]
fn affine_backward_matches_central_differences() {
    let mut rng = Rng::new(7);
    let (m, n) = (4, 5);
    let w = Tensor::uniform(&[m, n], 1.0, &mut rng);
    let x = Tensor::uniform(&[n], 1.0, &mut rng);
    let b = Tensor::uniform(&[m], 1.0, &mut rng);
    let dy = Tensor::uniform(&[m], 1.0, &mut rng);
    let g = ops::affine_backward(&w, &x, true, &dy).unwrap();

    let fx = |xs: &[f64]| ops::affine(&w, &v(xs), Some(&b)).unwrap().into_data();
    let num_dx = fd_vjp(x.data(), dy.data(), fx, 1e-5);
    assert!(max_rel(g.dx.data(), &num_dx) < 1e-6);

    let fw = |ws: &[f64]| {
        let w = Tensor::matrix(m, n, ws.to_vec()).unwrap();
        ops::affine(&w, &x, Some(&b)).unwrap().into_data()
    };
    let num_dw = fd_vjp(w.data(), dy.data(), fw, 1e-5);
    assert!(max_rel(g.dw.data(), &num_dw) < 1e-6);

    let fb = |bs: &[f64]| ops::affine(&w, &x, Some(&v(bs))).unwrap().into_data();
    let num_db = fd_vjp(b.data(), dy.data(), fb, 1e-5);
    assert!(max_rel(g.db.unwrap().data(), &num_db) < 1e-6);
}

#[test]
fn activation_gradients_at_fixed_points() {
    let x = v(&[0.3, -1.2]);
    let dy = v(&[1.0, 1.0]);
    let s = ops::sigmoid(&x);
    let num = fd_vjp(x.data(), dy.data(), |x| ops::sigmoid(&v(x)).into_data(), 1e-5);
    assert!(max_rel(ops::sigmoid_backward(&s, &dy).data(), &num) < 1e-6);
    let t = ops::tanh(&x);
    let num = fd_vjp(x.data(), dy.data(), |x| ops::tanh(&v(x)).into_data(), 1e-5);
    assert!(max_rel(ops::tanh_backward(&t, &dy).data(), &num) < 1e-6);
}

// Frozen from a 40-digit evaluation of exp(x_i) / sum_j exp(x_j).
const SOFTMAX_123: [f64; 3] = [
    0.090030573170380457998,
    0.24472847105479765247,
    0.66524095577482188953,
];

#[test]
fn softmax_matches_high_precision_oracle() {
    let y = ops::softmax(&v(&[1.0, 2.0, 3.0])).unwrap();
    for (a, b) in y.data().iter().zip(SOFTMAX_123) {
        assert!((a - b).abs() < 1e-15, "{a} vs {b}");
    }
}

#[test]
fn categorical_cross_entropy_matches_oracle() {
    let pred = ops::softmax(&v(&[1.0, 2.0, 3.0])).unwrap();
    let ce = ops::cross_entropy(CrossEntropyKind::Categorical, &v(&[0.0, 0.0, 1.0]), &pred, CLAMP_EPS).unwrap();
    assert!((ce - 0.40760596444438030448).abs() < 1e-14);
    let ce = ops::cross_entropy(CrossEntropyKind::Categorical, &v(&[1.0, 0.0, 0.0]), &pred, CLAMP_EPS).unwrap();
    assert!((ce - 2.4076059644443803045).abs() < 1e-14);
}

#[test]
fn cross_entropy_backward_matches_differences() {
    let target = v(&[0.0, 1.0, 0.3]);
    let pred = v(&[0.2, 0.6, 0.45]);
    for kind in [CrossEntropyKind::Binary, CrossEntropyKind::Categorical] {
        let g = ops::cross_entropy_backward(kind, &target, &pred, CLAMP_EPS).unwrap();
        let num = fd_vjp(
            pred.data(),
            &[1.0],
            |p| vec![ops::cross_entropy(kind, &target, &v(p), CLAMP_EPS).unwrap()],
            1e-6,
        );
        assert!(max_rel(g.data(), &num) < 1e-6);
    }
}

fn seeded(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = Rng::new(seed);
    (0..len).map(|_| rng.uniform(-2.0, 2.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn affine_backward_property(seed in 0u64..10_000, m in 1usize..=16, n in 1usize..=16) {
        let w = Tensor::matrix(m, n, seeded(seed, m * n)).unwrap();
        let x = v(&seeded(seed + 1, n));
        let dy = v(&seeded(seed + 2, m));
        let g = ops::affine_backward(&w, &x, false, &dy).unwrap();
        let num = fd_vjp(x.data(), dy.data(), |xs| ops::affine(&w, &v(xs), None).unwrap().into_data(), 1e-5);
        prop_assert!(max_rel(g.dx.data(), &num) < 1e-4);
    }

    #[test]
    fn elementwise_backward_property(seed in 0u64..10_000, n in 1usize..=16) {
        let x = v(&seeded(seed, n));
        let dy = v(&seeded(seed + 7, n));
        let s = ops::sigmoid(&x);
        let num = fd_vjp(x.data(), dy.data(), |x| ops::sigmoid(&v(x)).into_data(), 1e-5);
        prop_assert!(max_rel(ops::sigmoid_backward(&s, &dy).data(), &num) < 1e-4);
        let t = ops::tanh(&x);
        let num = fd_vjp(x.data(), dy.data(), |x| ops::tanh(&v(x)).into_data(), 1e-5);
        prop_assert!(max_rel(ops::tanh_backward(&t, &dy).data(), &num) < 1e-4);
        let y = ops::softmax(&x).unwrap();
        let num = fd_vjp(x.data(), dy.data(), |x| ops::softmax(&v(x)).unwrap().into_data(), 1e-5);
        prop_assert!(max_rel(ops::softmax_backward(&y, &dy).data(), &num) < 1e-4);
    }

    #[test]
    fn softmax_sums_to_one_and_is_permutation_equivariant(
        xs in proptest::collection::vec(-50.0f64..50.0, 1..16),
        rot in 0usize..16,
    ) {
        let y = ops::softmax(&v(&xs)).unwrap();
        let total: f64 = y.data().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(y.data().iter().all(|p| *p > 0.0));
        let k = rot % xs.len();
        let mut rotated = xs.clone();
        rotated.rotate_left(k);
        let yr = ops::softmax(&v(&rotated)).unwrap();
        let mut expect = y.data().to_vec();
        expect.rotate_left(k);
        for (a, b) in yr.data().iter().zip(expect) {
            prop_assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn activations_stay_in_open_ranges(x in -30.0f64..30.0) {
        let s = ops::sigmoid(&v(&[x])).data()[0];
        let t = ops::tanh(&v(&[x * 0.5])).data()[0];
        prop_assert!(s > 0.0 && s < 1.0);
        prop_assert!(t > -1.0 && t < 1.0);
    }
}
