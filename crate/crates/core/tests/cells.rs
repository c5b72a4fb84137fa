//! Cell identities and hand evaluations of the decoder, intent encoder and
//! policy against independent re-implementations.

use proptest::prelude::*;

use snapdial::decoder::{reference_lstm_step, DecoderParams, Variant};
use snapdial::encoder::{IntentNet, Policy, DB_BINS};
use snapdial::numerics::{Parameter, Rng};

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Row `r` of a row-major matrix parameter times `x`.
fn row_dot(p: &Parameter, r: usize, x: &[f64]) -> f64 {
    let cols = p.value.cols();
    p.value.data()[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum()
}

fn uniform_vec(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()
}

/// Straight transcription of the three cell equations.
fn hand_step(p: &DecoderParams, m: &[f64], w: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = p.hidden;
    let x: Vec<f64> = m.iter().chain(w).chain(h).copied().collect();
    let wh: Vec<f64> = w.iter().chain(h).copied().collect();
    let mut h2 = vec![0.0; n];
    let mut c2 = vec![0.0; n];
    for k in 0..n {
        let i = sig(row_dot(&p.w_big, k, &x));
        let f = sig(row_dot(&p.w_big, n + k, &x));
        let o = sig(row_dot(&p.w_big, 2 * n + k, &x));
        match p.variant {
            Variant::Lm => {
                let g = row_dot(&p.w_big, 3 * n + k, &x).tanh();
                c2[k] = f * c[k] + i * g;
                h2[k] = o * c2[k].tanh();
            }
            Variant::Mem => {
                let r = sig(row_dot(&p.w_big, 3 * n + k, &x));
                let g = row_dot(p.w_c.as_ref().unwrap(), k, &wh).tanh();
                c2[k] = f * c[k] + i * g + r * m[k];
                h2[k] = o * c2[k].tanh();
            }
            Variant::Hybrid => {
                let r = sig(row_dot(&p.w_big, 3 * n + k, &x));
                let g = row_dot(p.w_c.as_ref().unwrap(), k, &wh).tanh();
                c2[k] = f * c[k] + i * g;
                h2[k] = o * c2[k].tanh() + r * m[k];
            }
        }
    }
    (h2, c2)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn cells_match_hand_evaluation() {
    let mut rng = Rng::new(11);
    for variant in Variant::ALL {
        for n in [1, 3, 6] {
            let p = DecoderParams::init(variant, n, 7, 0.8, &mut rng);
            let (m, w, h, c) = (
                uniform_vec(n, &mut rng),
                uniform_vec(n, &mut rng),
                uniform_vec(n, &mut rng),
                uniform_vec(n, &mut rng),
            );
            let got = p.step(&m, &w, &h, &c);
            let (h2, c2) = hand_step(&p, &m, &w, &h, &c);
            assert!(max_diff(&got.h, &h2) < 1e-14, "{variant} h");
            assert!(max_diff(&got.c, &c2) < 1e-14, "{variant} c");
        }
    }
}

#[test]
fn output_layer_is_a_softmax_of_an_affine_map() {
    let mut rng = Rng::new(5);
    let p = DecoderParams::init(Variant::Lm, 4, 9, 0.5, &mut rng);
    let h = uniform_vec(4, &mut rng);
    let logits: Vec<f64> = (0..9).map(|v| row_dot(&p.w_out, v, &h) + p.b_out.value.data()[v]).collect();
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    let dist = p.output_dist(&h);
    for (d, l) in dist.iter().zip(&logits) {
        assert!((d - l.exp() / z).abs() < 1e-15);
    }
}

#[test]
fn zero_parameters_give_exact_identities() {
    let n = 5;
    for variant in Variant::ALL {
        let mut p = DecoderParams::init(variant, n, 4, 0.3, &mut Rng::new(2));
        for q in p.params_mut() {
            q.value.fill(0.0);
        }
        let mut rng = Rng::new(3);
        let m = uniform_vec(n, &mut rng);
        let w = uniform_vec(n, &mut rng);
        let zero = vec![0.0; n];
        let s = p.step(&m, &w, &zero, &zero);
        match variant {
            Variant::Lm => assert!(s.h.iter().all(|&x| x == 0.0)),
            Variant::Hybrid => {
                for (h, m) in s.h.iter().zip(&m) {
                    assert_eq!(*h, 0.5 * m);
                }
            }
            Variant::Mem => {
                for (c, m) in s.c.iter().zip(&m) {
                    assert_eq!(*c, 0.5 * m);
                }
            }
        }
    }
}

#[test]
fn mem_and_hybrid_differ_when_conditioned() {
    let n = 4;
    let mut rng = Rng::new(8);
    let mem = DecoderParams::init(Variant::Mem, n, 6, 0.5, &mut Rng::new(1));
    let mut hybrid = mem.clone();
    hybrid.variant = Variant::Hybrid;
    let (m, w, h, c) = (
        uniform_vec(n, &mut rng),
        uniform_vec(n, &mut rng),
        uniform_vec(n, &mut rng),
        uniform_vec(n, &mut rng),
    );
    let a = mem.step(&m, &w, &h, &c);
    let b = hybrid.step(&m, &w, &h, &c);
    assert!(max_diff(&a.h, &b.h) > 1e-3);
    // Same weights and m = 0: both reduce to the same LSTM.
    let zero = vec![0.0; n];
    let a = mem.step(&zero, &w, &h, &c);
    let b = hybrid.step(&zero, &w, &h, &c);
    assert!(max_diff(&a.h, &b.h) < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unconditioned_cells_are_standard_lstms(seed in any::<u64>(), n in 1usize..10, hybrid in any::<bool>()) {
        let variant = if hybrid { Variant::Hybrid } else { Variant::Mem };
        let mut rng = Rng::new(seed);
        let p = DecoderParams::init(variant, n, 3, 1.0, &mut rng);
        let (w, h, c) = (uniform_vec(n, &mut rng), uniform_vec(n, &mut rng), uniform_vec(n, &mut rng));
        let got = p.step(&vec![0.0; n], &w, &h, &c);
        let (h_ref, c_ref) = reference_lstm_step(&p, &w, &h, &c).unwrap();
        prop_assert!(max_diff(&got.h, &h_ref) <= 1e-12);
        prop_assert!(max_diff(&got.c, &c_ref) <= 1e-12);
    }

    #[test]
    fn hidden_state_stays_bounded(seed in any::<u64>(), variant in 0usize..3) {
        // |h| <= 1 for lm and mem; hybrid adds r*m with |m| < 1.
        let variant = Variant::ALL[variant];
        let n = 6;
        let mut rng = Rng::new(seed);
        let p = DecoderParams::init(variant, n, 3, 2.0, &mut rng);
        let m: Vec<f64> = uniform_vec(n, &mut rng);
        let mut h = vec![0.0; n];
        let mut c = vec![0.0; n];
        for _ in 0..5 {
            let w = uniform_vec(n, &mut rng);
            let s = p.step(&m, &w, &h, &c);
            h = s.h;
            c = s.c;
            let bound = if variant == Variant::Hybrid { 2.0 } else { 1.0 };
            prop_assert!(h.iter().all(|x| x.abs() <= bound));
        }
    }
}

/// Standard LSTM with biases over embedded tokens; returns the last `h`.
fn hand_intent(net: &IntentNet, tokens: &[usize]) -> Vec<f64> {
    let n = net.hidden;
    let mut h = vec![0.0; n];
    let mut c = vec![0.0; n];
    for &t in tokens {
        let x: Vec<f64> = net.emb.value.row(t).iter().chain(&h).copied().collect();
        let b = net.b.value.data();
        let mut h2 = vec![0.0; n];
        for k in 0..n {
            let i = sig(row_dot(&net.w, k, &x) + b[k]);
            let f = sig(row_dot(&net.w, n + k, &x) + b[n + k]);
            let o = sig(row_dot(&net.w, 2 * n + k, &x) + b[2 * n + k]);
            let g = (row_dot(&net.w, 3 * n + k, &x) + b[3 * n + k]).tanh();
            c[k] = f * c[k] + i * g;
            h2[k] = o * c[k].tanh();
        }
        h = h2;
    }
    h
}

#[test]
fn intent_encoder_matches_hand_lstm() {
    let mut rng = Rng::new(21);
    let net = IntentNet::init(3, 8, 0.7, &mut rng);
    for tokens in [vec![4], vec![1, 2, 3], vec![7, 7, 0, 5, 2]] {
        let (z, _) = net.encode(&tokens, 0);
        assert!(max_diff(&z, &hand_intent(&net, &tokens)) < 1e-14);
    }
}

#[test]
fn one_token_encoding_in_closed_form() {
    // n = 1, one token: h = o * tanh(i * g) with the gates read off directly.
    let mut net = IntentNet::init(1, 2, 0.5, &mut Rng::new(1));
    net.emb.value.data_mut().copy_from_slice(&[0.5, -1.0]);
    net.w.value.data_mut().copy_from_slice(&[1.0, 0.0, 2.0, 0.0, -1.0, 0.0, 3.0, 0.0]);
    net.b.value.data_mut().copy_from_slice(&[0.1, 0.2, 0.3, 0.4]);
    let (z, _) = net.encode(&[1], 0);
    let e = -1.0;
    let i = sig(1.0 * e + 0.1);
    let o = sig(-1.0 * e + 0.3);
    let g = (3.0 * e + 0.4).tanh();
    assert!((z[0] - o * (i * g).tanh()).abs() < 1e-15);
}

#[test]
fn intent_encoding_depends_on_order() {
    let net = IntentNet::init(6, 10, 0.5, &mut Rng::new(4));
    let (a, _) = net.encode(&[1, 2, 3], 0);
    let (b, _) = net.encode(&[3, 2, 1], 0);
    assert!(max_diff(&a, &b) > 1e-6);
    let (e, _) = net.encode(&[], 9);
    let (n9, _) = net.encode(&[9], 9);
    assert_eq!(e, n9);
}

fn policy_inputs(n: usize, dims: &[usize], rng: &mut Rng) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let z = uniform_vec(n, rng);
    let mut x = vec![0.0; DB_BINS];
    x[rng.below(DB_BINS)] = 1.0;
    let beliefs = dims
        .iter()
        .map(|&d| {
            let raw: Vec<f64> = (0..d).map(|_| rng.next_f64() + 1e-3).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        })
        .collect();
    (z, x, beliefs)
}

fn names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("t{i}")).collect()
}

#[test]
fn fixed_policy_matches_hand_evaluation() {
    let dims = [3, 3, 3, 2, 2];
    let n = 4;
    let mut rng = Rng::new(13);
    let policy = Policy::init(n, &dims, &names(dims.len()), false, 0.6, &mut rng);
    let (z, x, beliefs) = policy_inputs(n, &dims, &mut rng);
    let turn = policy.prepare(&z, &x, &beliefs).unwrap();
    let m = policy.fixed(&turn);
    for k in 0..n {
        let mut pre = row_dot(&policy.w_zm, k, &z) + row_dot(&policy.w_xm, k, &x);
        for (w, p) in policy.w_pm.iter().zip(&beliefs) {
            pre += row_dot(w, k, p);
        }
        assert!((m[k] - pre.tanh()).abs() < 1e-15);
    }
}

/// Sum with Neumaier compensation.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Attention weights recomputed with compensated sums and a log-sum-exp
/// normaliser.
fn careful_alpha(policy: &Policy, z: &[f64], x: &[f64], beliefs: &[Vec<f64>], w: &[f64], h: &[f64]) -> Vec<f64> {
    let a = policy.attention.as_ref().unwrap();
    let n = policy.hidden;
    let v: Vec<f64> = (0..n).map(|k| z[k] + row_dot(&a.p_x, k, x)).collect();
    let scores: Vec<f64> = a
        .w_rp
        .iter()
        .zip(beliefs)
        .map(|(w_rp, p)| {
            compensated_sum((0..n).map(|k| {
                let pre = compensated_sum([
                    row_dot(&a.w_rv, k, &v),
                    row_dot(w_rp, k, p),
                    row_dot(&a.w_rw, k, w),
                    row_dot(&a.w_rh, k, h),
                ]);
                a.r.value.data()[k] * pre.tanh()
            }))
        })
        .collect();
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = top + compensated_sum(scores.iter().map(|s| (s - top).exp())).ln();
    scores.iter().map(|s| (s - lse).exp()).collect()
}

#[test]
fn attention_weights_match_careful_reimplementation() {
    let dims = [3, 3, 3, 2, 2, 2];
    let n = 5;
    for seed in 0..20 {
        let mut rng = Rng::new(seed);
        let policy = Policy::init(n, &dims, &names(dims.len()), true, 1.0, &mut rng);
        let (z, x, beliefs) = policy_inputs(n, &dims, &mut rng);
        let (w, h) = (uniform_vec(n, &mut rng), uniform_vec(n, &mut rng));
        let turn = policy.prepare(&z, &x, &beliefs).unwrap();
        let step = policy.attend(&turn, &w, &h);
        let want = careful_alpha(&policy, &z, &x, &beliefs, &w, &h);
        assert!(max_diff(&step.alpha, &want) < 1e-13, "seed {seed}");
        assert!((step.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // m from the weights.
        for k in 0..n {
            let mut pre = row_dot(&policy.w_zm, k, &z) + row_dot(&policy.w_xm, k, &x);
            for ((wp, p), al) in policy.w_pm.iter().zip(&beliefs).zip(&want) {
                pre += al * row_dot(wp, k, p);
            }
            assert!((step.m[k] - pre.tanh()).abs() < 1e-12);
        }
    }
}

#[test]
fn identical_trackers_get_identical_weights() {
    let dims = [3, 3, 2];
    let n = 4;
    let mut rng = Rng::new(30);
    let mut policy = Policy::init(n, &dims, &names(3), true, 0.8, &mut rng);
    let att = policy.attention.as_mut().unwrap();
    att.w_rp[1].value = att.w_rp[0].value.clone();
    let (z, x, mut beliefs) = policy_inputs(n, &dims, &mut rng);
    beliefs[1] = beliefs[0].clone();
    let (w, h) = (uniform_vec(n, &mut rng), uniform_vec(n, &mut rng));
    let turn = policy.prepare(&z, &x, &beliefs).unwrap();
    let step = policy.attend(&turn, &w, &h);
    assert_eq!(step.alpha[0], step.alpha[1]);
    // Zero scoring vector: uniform attention.
    policy.attention.as_mut().unwrap().r.value.fill(0.0);
    let turn = policy.prepare(&z, &x, &beliefs).unwrap();
    let step = policy.attend(&turn, &w, &h);
    for a in &step.alpha {
        assert!((a - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn policy_rejects_mismatched_inputs() {
    let dims = [3, 2];
    let policy = Policy::init(4, &dims, &names(2), false, 0.3, &mut Rng::new(1));
    let z = vec![0.0; 4];
    let x = vec![0.0; DB_BINS];
    assert!(policy.prepare(&z, &x, &[vec![0.0; 3]]).is_err());
    assert!(policy.prepare(&z, &x, &[vec![0.0; 3], vec![0.0; 3]]).is_err());
    assert!(policy.prepare(&z[..3], &x, &[vec![0.0; 3], vec![0.0; 2]]).is_err());
    assert!(policy.prepare(&z, &x, &[vec![0.0; 3], vec![0.0; 2]]).is_ok());
}
