mod common;

use cftc::corpus::normalize_cooccurrence;
use cftc::network::{
    attention_weights, encode_text, extract_li, forward, forward_train, probability_mask_with_noise, threshold_predict,
    MaskConfig, MaskRng, Mode,
};
use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn extract_li_matches_dense_oracle() {
    for seed in 0..50 {
        let inst = common::random_instance(seed);
        let sel: Vec<bool> = (0..inst.params.dims.labels).map(|i| (i + seed as usize) % 2 == 0).collect();
        let fast = extract_li(&sel, inst.normalized.view(), &inst.params);
        let dense = common::dense_extract_li(&sel, &inst.normalized, &inst.params);
        for (a, b) in fast.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-9, "seed {seed}");
        }
    }
}

#[test]
fn label_information_is_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..30 {
        let inst = common::random_instance(seed);
        let l = inst.params.dims.labels;
        let sel: Vec<bool> = (0..l).map(|_| rng.gen_bool(0.5)).collect();
        let mut perm: Vec<usize> = (0..l).collect();
        perm.shuffle(&mut rng);
        let mut p = inst.params.clone();
        for (new, &old) in perm.iter().enumerate() {
            p.label_in.row_mut(new).assign(&inst.params.label_in.row(old));
            p.label_out.row_mut(new).assign(&inst.params.label_out.row(old));
        }
        let sel_p: Vec<bool> = perm.iter().map(|&o| sel[o]).collect();
        let m_p = Array2::from_shape_fn((l, l), |(i, j)| inst.normalized[[perm[i], perm[j]]]);
        let a = extract_li(&sel, inst.normalized.view(), &inst.params);
        let b = extract_li(&sel_p, m_p.view(), &p);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12, "seed {seed}");
        }
    }
}

#[test]
fn override_with_own_prediction_is_identity() {
    for seed in 0..30 {
        let inst = common::random_instance(seed);
        let m = inst.normalized.view();
        let plain = forward(&inst.tokens, m, &inst.params, inst.mu, Mode::Infer, None).unwrap();
        let own = threshold_predict(plain.s_text.view(), inst.mu);
        let again = forward(&inst.tokens, m, &inst.params, inst.mu, Mode::Infer, Some(&own)).unwrap();
        assert_eq!(plain, again);
    }
}

#[test]
fn disabled_masks_keep_text_prediction() {
    for seed in 0..30 {
        let inst = common::random_instance(seed);
        let m = inst.normalized.view();
        let mut rng = MaskRng::new(seed);
        let b = forward_train(&inst.tokens, m, &inst.params, inst.mu, &MaskConfig::disabled(), &mut rng).unwrap();
        assert_eq!(b.selected, threshold_predict(b.s_text.view(), inst.mu));
    }
}

#[test]
fn train_mode_is_deterministic_per_seed() {
    let inst = common::random_instance(4);
    let m = inst.normalized.view();
    let cfg = MaskConfig::default();
    let run = |seed| {
        let mut rng = MaskRng::new(seed);
        (0..20).map(|_| forward_train(&inst.tokens, m, &inst.params, inst.mu, &cfg, &mut rng).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(run(9), run(9));
    let differs = run(9).iter().zip(run(10)).any(|(a, b)| a.selected != b.selected);
    assert!(differs, "different seeds should eventually mask differently");
}

#[test]
fn debias_cancels_counterfactual_between_documents() {
    for seed in 0..30 {
        let inst = common::random_instance(seed);
        let m = inst.normalized.view();
        let given: Vec<bool> = (0..inst.params.dims.labels).map(|i| i % 2 == 1).collect();
        let mut other = inst.tokens.clone();
        other.rotate_left(1);
        other.push(1);
        let a = forward(&inst.tokens, m, &inst.params, inst.mu, Mode::Infer, Some(&given)).unwrap();
        let b = forward(&other, m, &inst.params, inst.mu, Mode::Infer, Some(&given)).unwrap();
        assert_eq!(a.s_counterfactual, b.s_counterfactual);
        for i in 0..given.len() {
            let cd = a.s_debiased[i] - b.s_debiased[i];
            let fused = a.s_fused[i] - b.s_fused[i];
            assert!((cd - fused).abs() <= 1e-12 * (1.0 + fused.abs()), "seed {seed} label {i}");
        }
    }
}

#[test]
fn wrong_length_override_is_a_contract_error() {
    let inst = common::random_instance(1);
    let given = vec![true; inst.params.dims.labels + 1];
    let r = forward(&inst.tokens, inst.normalized.view(), &inst.params, inst.mu, Mode::Infer, Some(&given));
    assert!(matches!(r, Err(cftc::Error::Contract(_))));
}

#[test]
fn out_of_range_token_is_a_contract_error() {
    let inst = common::random_instance(2);
    let r = encode_text(&[inst.params.dims.vocab], &inst.params);
    assert!(matches!(r, Err(cftc::Error::Contract(_))));
}

proptest! {
    #[test]
    fn attention_is_a_distribution(seed in 0u64..1000) {
        let inst = common::random_instance(seed);
        let h = encode_text(&inst.tokens, &inst.params).unwrap();
        let li = extract_li(&vec![true; inst.params.dims.labels], inst.normalized.view(), &inst.params);
        let a = attention_weights(h.view(), li.view(), &inst.params);
        prop_assert!((a.sum() - 1.0).abs() < 1e-9);
        prop_assert!(a.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn probability_mask_stays_in_unit_interval(scores in prop::collection::vec(-30.0f64..30.0, 1..8), g in prop::collection::vec((-3.0f64..8.0, -3.0f64..8.0), 8), tau in 0.1f64..5.0) {
        let s = ndarray::Array1::from(scores);
        let noise: Vec<[f64; 2]> = g.iter().take(s.len()).map(|&(a, b)| [a, b]).collect();
        let p = probability_mask_with_noise(s.view(), tau, &noise);
        for ((&v, &score), n) in p.iter().zip(s.iter()).zip(&noise) {
            prop_assert!((0.0..=1.0).contains(&v));
            // away from saturation the relaxation never rounds to a hard 0 or 1
            let logit = (2.0 * score.abs() + (n[0] - n[1]).abs()) / tau;
            if logit < 30.0 {
                prop_assert!(v > 0.0 && v < 1.0);
            }
        }
    }

    #[test]
    fn bundles_satisfy_debias_identity(seed in 0u64..1000) {
        let inst = common::random_instance(seed);
        let mode = Mode::Train { mask: &inst.mask, noise: &inst.noise };
        let b = forward(&inst.tokens, inst.normalized.view(), &inst.params, inst.mu, mode, None).unwrap();
        for i in 0..b.s_debiased.len() {
            prop_assert_eq!(b.s_debiased[i], b.s_fused[i] - b.s_counterfactual[i]);
        }
        for br in cftc::network::Branch::ALL {
            let p = b.probs(br);
            let y = b.predict(br);
            for (pi, yi) in p.iter().zip(y) {
                prop_assert!(*pi >= 0.0 && *pi <= 1.0);
                prop_assert_eq!(yi, *pi >= b.mu);
            }
        }
    }

    #[test]
    fn symmetric_raw_gives_symmetric_normalized(vals in prop::collection::vec(0.0f64..1.0, 36)) {
        let raw = Array2::from_shape_fn((6, 6), |(i, j)| vals[i.min(j) * 6 + i.max(j)]);
        let n = normalize_cooccurrence(raw.view());
        for i in 0..6 { for j in 0..6 {
            prop_assert!((n[[i, j]] - n[[j, i]]).abs() < 1e-12);
        }}
    }
}
