use coad_core::checkpoint::{decode, encode};
use coad_core::data::{parse_ucr, zscore, NormalizationStats};
use coad_core::metrics::evaluate;
use coad_core::model::{CoadConfig, CoadModel, Masking, Scoring};
use coad_core::score::{detect, smooth, DetectOptions};
use coad_core::synth::{gen_periodic, labels_to_text, values_to_text, SynthConfig};
use coad_core::train::{fit, TrainConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small() -> SynthConfig {
    SynthConfig {
        len: 1600,
        split: 800,
        anomalies: vec![coad_core::synth::AnomalySpec {
            kind: coad_core::augment::DistortionKind::UniformReplacement,
            start: 1200,
            end: 1239,
        }],
        ..SynthConfig::default()
    }
}

fn trained(masking: Masking) -> (CoadModel, Vec<f64>, usize) {
    let cfg = small();
    let s = gen_periodic(&cfg).unwrap().series;
    let values = zscore(&s.values, &NormalizationStats::from_train(s.train()));
    let config = CoadConfig {
        masking,
        ..CoadConfig::from_period(50)
    };
    let mut model = CoadModel::init(config, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let train = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let log = fit(&mut model, &values[..cfg.split], 50, &train, &mut |_| {}).unwrap();
    assert_eq!(log.len(), 3);
    assert!(log.iter().all(|r| r.loss.total.is_finite()));
    (model, values, cfg.split)
}

#[test]
fn synth_text_round_trips_through_the_ucr_parser() {
    let cfg = small();
    let syn = gen_periodic(&cfg).unwrap();
    let parsed = parse_ucr(&cfg.file_name(), &values_to_text(&syn.series.values)).unwrap();
    assert_eq!(parsed.split, cfg.split);
    assert_eq!(parsed.values, syn.series.values);
    let labels = parsed.labels.unwrap();
    assert!(labels[1200..=1239].iter().all(|&l| l == 1));
    assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 40);
    assert_eq!(labels_to_text(&labels).lines().count(), cfg.len);
}

#[test]
fn checkpoint_preserves_detection_for_every_masking_mode() {
    for masking in [Masking::Soft, Masking::Hard, Masking::Random, Masking::Grating] {
        let (model, values, split) = trained(masking);
        let restored = decode(&encode(&model).unwrap()).unwrap();
        let opts = DetectOptions::for_model(&model);
        let a = detect(&model, &values, split..values.len(), &opts).unwrap();
        let b = detect(&restored, &values, split..values.len(), &opts).unwrap();
        assert_eq!(a.scores, b.scores, "{masking:?}");
        assert_eq!(a.scores.len(), values.len() - split);
        assert!(a.coverage.iter().all(|&c| c >= 1));
    }
}

#[test]
fn joint_score_adds_a_probability_to_the_error() {
    let (model, values, split) = trained(Masking::Soft);
    let run = |scoring| {
        let opts = DetectOptions {
            scoring,
            smoothing: 1,
            seed: 0,
        };
        detect(&model, &values, split..values.len(), &opts).unwrap().scores
    };
    let (joint, recon, cls) = (run(Scoring::Joint), run(Scoring::ReconOnly), run(Scoring::ClsOnly));
    for i in 0..joint.len() {
        let gap = joint[i] - recon[i];
        assert!((-1e-12..=1.0 + 1e-12).contains(&gap), "{i}: {gap}");
        assert!((0.0..=1.0).contains(&cls[i]));
    }
    let labels = gen_periodic(&small()).unwrap().series.labels.unwrap();
    let r = evaluate("small", &smooth(&joint, 8), &labels[split..]).unwrap();
    for v in r.values() {
        assert!((0.0..=1.0).contains(&v));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn smoothing_preserves_constants_and_bounds(
        xs in prop::collection::vec(-50.0f64..50.0, 1..200),
        w in 1usize..90,
    ) {
        let s = smooth(&xs, w);
        prop_assert_eq!(s.len(), xs.len());
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for v in &s {
            prop_assert!(*v >= lo - 1e-9 && *v <= hi + 1e-9);
        }
        let c = smooth(&vec![xs[0]; xs.len()], w);
        for v in c {
            prop_assert!((v - xs[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn checkpoint_decode_rejects_truncation(cut in 1usize..64) {
        let model = CoadModel::init(CoadConfig::from_period(8), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let bytes = encode(&model).unwrap();
        prop_assert!(decode(&bytes[..bytes.len() - cut]).is_err());
    }
}
