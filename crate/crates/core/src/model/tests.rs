use super::*;
use crate::numerics::grad_check;
use alloc::string::String;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny() -> CoadConfig {
    CoadConfig {
        window: 16,
        patch: 4,
        hidden: 3,
        bins: 2,
        layers: 1,
        frame_len: 8,
        ..CoadConfig::from_period(4)
    }
}

fn signal(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len)
        .map(|i| (i as f64 * 0.7).sin() + 0.3 * rng.random_range(-1.0..1.0))
        .collect()
}

fn model(config: CoadConfig, seed: u64) -> CoadModel {
    CoadModel::init(config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn replace(params: &CoadParams, list: &[Matrix]) -> CoadParams {
    let mut out = params.clone();
    let mut it = list.iter();
    out.visit_mut(&mut |_, m| *m = it.next().unwrap().clone());
    out
}

/// Checks model gradients against finite differences under a random
/// linear-plus-quadratic loss on `A_c` and `X_r`.
fn check_mode(config: CoadConfig, mask: MaskPlan, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = CoadModel::init(config.clone(), &mut rng).unwrap();
    let x = signal(config.window, &mut rng);
    let u: Vec<f64> = (0..config.prob_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..config.window).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss_of = |r: &ForwardResult| {
        let a: f64 = r.probabilities.combined.iter().zip(&u).map(|(a, b)| a * b).sum();
        let b: f64 = r
            .reconstruction
            .iter()
            .zip(&v)
            .map(|(x, w)| w * x + 0.5 * x * x)
            .sum();
        a + b
    };
    let r = m.forward(&x, &mask).unwrap();
    let d_recon: Vec<f64> = r.reconstruction.iter().zip(&v).map(|(x, w)| w + x).collect();
    let mut grads = m.params.zeros_like();
    m.backward(&r, &u, &d_recon, &mut grads).unwrap();

    let names: Vec<String> = m.params.tensors().into_iter().map(|(n, _)| n).collect();
    let mut flat: Vec<Matrix> = m.params.tensors().into_iter().map(|(_, t)| t.clone()).collect();
    let analytic: Vec<Matrix> = grads.tensors().into_iter().map(|(_, t)| t.clone()).collect();
    let report = grad_check(
        &names,
        &mut flat,
        &analytic,
        |list| {
            let mm = CoadModel::new(config.clone(), replace(&m.params, list)).unwrap();
            loss_of(&mm.forward(&x, &mask).unwrap())
        },
        1e-5,
        1e-4,
    );
    for t in &report.tensors {
        assert!(t.max_rel_error < 1e-4, "{:?}: {} {}", config.fusion, t.name, t.max_rel_error);
    }
    report.max_rel_error()
}

#[test]
fn gradients_default_modes() {
    check_mode(tiny(), MaskPlan::Soft, 1);
    check_mode(tiny(), MaskPlan::Fixed(grating_pattern(4, 1)), 2);
}

#[test]
fn gradients_every_fusion_and_granularity() {
    for fusion in Fusion::ALL {
        for gran in Granularity::ALL {
            let c = CoadConfig {
                fusion: *fusion,
                granularity: *gran,
                ..tiny()
            };
            check_mode(c, MaskPlan::Soft, 3);
        }
    }
}

#[test]
fn gradients_bidirectional_unshared_deep() {
    let c = CoadConfig {
        bidirectional: true,
        share_encoders: false,
        layers: 2,
        fusion: Fusion::FeatGate,
        ..tiny()
    };
    check_mode(c, MaskPlan::Soft, 4);
    let c = CoadConfig {
        bidirectional: true,
        layers: 2,
        ..tiny()
    };
    check_mode(c, MaskPlan::Soft, 5);
}

#[test]
fn zero_time_head_gives_half() {
    let mut m = model(tiny(), 7);
    m.params.time_head.fill(0.0);
    let x = signal(16, &mut ChaCha8Rng::seed_from_u64(0));
    let r = m.infer(&x, &MaskPlan::Soft).unwrap();
    assert!(r.probabilities.time.iter().all(|&a| a == 0.5));
    let again = m.infer(&x, &MaskPlan::Soft).unwrap();
    assert_eq!(r.probabilities, again.probabilities);
    assert_eq!(r.reconstruction, again.reconstruction);
}

/// Independent single-layer GRU over scalar loops.
fn scalar_gru(cell: &crate::numerics::GruCell, inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let h_size = cell.hidden_size();
    let mut h = vec![0.0; h_size];
    let mut out = Vec::new();
    for x in inputs {
        let mut next = vec![0.0; h_size];
        for j in 0..h_size {
            let pre = |g: usize| {
                let row = g * h_size + j;
                let mut s = cell.input_bias[(row, 0)];
                for (k, xv) in x.iter().enumerate() {
                    s += cell.input_weights[(row, k)] * xv;
                }
                s
            };
            let hid = |g: usize| {
                let row = g * h_size + j;
                let mut s = cell.hidden_bias[(row, 0)];
                for (k, hv) in h.iter().enumerate() {
                    s += cell.hidden_weights[(row, k)] * hv;
                }
                s
            };
            let z = 1.0 / (1.0 + (-(pre(0) + hid(0))).exp());
            let r = 1.0 / (1.0 + (-(pre(1) + hid(1))).exp());
            let n = (pre(2) + r * hid(2)).tanh();
            next[j] = (1.0 - z) * n + z * h[j];
        }
        h = next.clone();
        out.push(next);
    }
    out
}

#[test]
fn branches_match_scalar_oracle() {
    let m = model(tiny(), 11);
    let x = signal(16, &mut ChaCha8Rng::seed_from_u64(1));
    let r = m.infer(&x, &MaskPlan::Soft).unwrap();
    let p = &m.params;

    let time_in: Vec<Vec<f64>> = (0..4)
        .map(|j| (0..3).map(|i| (0..4).map(|k| p.time_proj[(i, k)] * x[j * 4 + k]).sum()).collect())
        .collect();
    let hs = scalar_gru(&p.time_gru.layers[0].forward, &time_in);
    for (j, h) in hs.iter().enumerate() {
        let logit: f64 = (0..3).map(|i| p.time_head[(0, i)] * h[i]).sum();
        assert!((r.probabilities.time[j] - 1.0 / (1.0 + (-logit).exp())).abs() < 1e-12);
    }

    let spec = crate::spectral::stft(&x, 2, 8).unwrap();
    let freq_in: Vec<Vec<f64>> = (0..4)
        .map(|j| {
            (0..3)
                .map(|i| {
                    let mut s = 0.0;
                    for q in 0..4 {
                        for ch in 0..4 {
                            s += p.freq_proj[(i, q * 4 + ch)] * spec[(ch, j * 4 + q)];
                        }
                    }
                    s
                })
                .collect()
        })
        .collect();
    let hf = scalar_gru(&p.freq_gru.layers[0].forward, &freq_in);
    for (j, h) in hf.iter().enumerate() {
        let logit: f64 = (0..3).map(|i| p.freq_head[(0, i)] * h[i]).sum();
        assert!((r.probabilities.freq[j] - 1.0 / (1.0 + (-logit).exp())).abs() < 1e-12);
        assert_eq!(r.probabilities.fused[j], r.probabilities.freq[j].max(r.probabilities.time[j]));
    }

    // reconstruction path
    let recon_in: Vec<Vec<f64>> = (0..4)
        .map(|j| {
            let a = r.mask_weights[j];
            (0..3)
                .map(|i| {
                    let proj: f64 = (0..4).map(|k| p.mask_proj[(i, k)] * x[j * 4 + k]).sum();
                    a * p.mask_embedding[(i, j)] + (1.0 - a) * proj
                })
                .collect()
        })
        .collect();
    let hr = scalar_gru(&p.recon_gru.layers[0].forward, &recon_in);
    for (j, h) in hr.iter().enumerate() {
        for q in 0..4 {
            let v: f64 = (0..3).map(|i| p.out_proj[(q, i)] * h[i]).sum();
            assert!((r.reconstruction[j * 4 + q] - v).abs() < 1e-12);
        }
    }
}

#[test]
fn residual_stage_composition() {
    let m = model(tiny(), 12);
    let x = signal(16, &mut ChaCha8Rng::seed_from_u64(2));
    let r = m.infer(&x, &MaskPlan::Soft).unwrap();
    let res = m.residual_classify(&x, &r.reconstruction).unwrap();
    for (a, b) in res.iter().zip(&r.probabilities.residual) {
        assert!((a - b).abs() < 1e-10);
    }
    let same = m.residual_classify(&x, &x).unwrap();
    assert!(same.iter().all(|&a| a == 0.5));
    for i in 0..4 {
        let pc = r.probabilities.combined[i];
        let expect = 0.5 * (r.probabilities.fused[i] + r.probabilities.residual[i]);
        assert_eq!(pc, expect);
    }
}

#[test]
fn mask_endpoints_in_model() {
    let m = model(tiny(), 13);
    let x = signal(16, &mut ChaCha8Rng::seed_from_u64(3));
    let none = m.infer(&x, &MaskPlan::Fixed(vec![0.0; 4])).unwrap();
    let all = m.infer(&x, &MaskPlan::Fixed(vec![1.0; 4])).unwrap();
    let p = &m.params;
    for j in 0..4 {
        let proj = p.mask_proj.matvec(&x[j * 4..j * 4 + 4]);
        for i in 0..3 {
            assert_eq!(none.masked[(i, j)], proj[i]);
            assert_eq!(all.masked[(i, j)], p.mask_embedding[(i, j)]);
        }
    }
}

#[test]
fn mse_reaches_heads_only_through_soft_mask() {
    let m = model(tiny(), 14);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = signal(16, &mut rng);
    let d_recon: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let zero = vec![0.0; 4];
    for (mask, expect_nonzero) in [(MaskPlan::Soft, true), (MaskPlan::Fixed(grating_pattern(4, 0)), false)] {
        let r = m.forward(&x, &mask).unwrap();
        let mut g = m.params.zeros_like();
        m.backward(&r, &zero, &d_recon, &mut g).unwrap();
        let norm = g.time_head.sum_squares() + g.freq_head.sum_squares();
        assert_eq!(norm > 0.0, expect_nonzero);
    }
}

#[test]
fn rejects_wrong_lengths() {
    let m = model(tiny(), 1);
    assert!(m.infer(&[0.0; 15], &MaskPlan::Soft).is_err());
    assert!(m.infer(&[0.0; 16], &MaskPlan::Fixed(vec![1.0; 3])).is_err());
    let r = m.infer(&[0.0; 16], &MaskPlan::Soft).unwrap();
    let mut g = m.params.zeros_like();
    assert!(m.backward(&r, &[0.0; 4], &[0.0; 16], &mut g).is_err());
}

#[test]
fn granularity_mappings() {
    let mut c = tiny();
    c.granularity = Granularity::Step;
    let m = model(c.clone(), 1);
    let probs: Vec<f64> = (0..16).map(|i| i as f64 / 16.0).collect();
    let w = m.patch_weights(&probs);
    assert!((w[0] - 1.5 / 16.0).abs() < 1e-15);
    let mask = [0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0];
    assert_eq!(m.targets(&mask)[5], 1.0);
    c.granularity = Granularity::Window;
    let m = model(c, 1);
    assert_eq!(m.targets(&mask), [1.0]);
    assert_eq!(m.point_probabilities(&[0.3]), [0.3; 16]);
    let m = model(tiny(), 1);
    assert_eq!(m.targets(&mask), [0.0, 1.0, 0.0, 0.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn probabilities_valid(seed in 0u64..10_000, scale in 0.1f64..10.0) {
        let m = model(tiny(), seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let x: Vec<f64> = signal(16, &mut rng).into_iter().map(|v| v * scale).collect();
        let r = m.infer(&x, &MaskPlan::Soft).unwrap();
        let p = &r.probabilities;
        for v in [&p.time, &p.freq, &p.fused, &p.residual, &p.combined] {
            prop_assert!(v.iter().all(|&a| a > 0.0 && a < 1.0));
        }
        for i in 0..4 {
            prop_assert!(p.fused[i] >= p.time[i] && p.fused[i] >= p.freq[i]);
            prop_assert_eq!(fuse(&[p.time[i]], &[p.freq[i]], Fusion::Max)[0], p.fused[i]);
        }
        prop_assert!(r.reconstruction.iter().all(|v| v.is_finite()));
    }
}
