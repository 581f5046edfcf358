mod common;

use std::f64::consts::TAU;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use steermine::constraint::Constraint;
use steermine::cover::{cover, dl_of, score_and_importance, MetricParams};
use steermine::finetune::{apply_modifications, generate_fine_tuning, super_tactic};
use steermine::miner::{mine_initial, MinerConfig};
use steermine::model::{Tactic, TacticId};
use steermine::projection::{fit_projection, similarity_vector, tactic_distance, top_two, BasisSet};

use common::*;

fn instance(seed: u64) -> (ChaCha8Rng, steermine::model::Dataset, Vec<Tactic>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(1..=3);
    let d = random_dataset(&mut rng, 12, (2, 8), k, 3);
    let n = rng.gen_range(1..6);
    let tactics = (0..n)
        .map(|i| Tactic::new(i as TacticId + 1, pattern_from_data(&mut rng, &d, 3, 0.4)))
        .collect();
    (rng, d, tactics)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cover_usages_match_and_do_not_overlap(seed in any::<u64>()) {
        let (_, d, tactics) = instance(seed);
        let c = cover(&d, &tactics);
        for r in &d.rallies {
            let mut used = vec![false; r.len()];
            for (t, us) in tactics.iter().zip(&c.usages) {
                for u in us.iter().filter(|u| u.rally_id == r.id) {
                    prop_assert!(occurs(&t.pattern, r, u.start - 1));
                    for x in &mut used[u.start - 1..u.start - 1 + t.len()] {
                        prop_assert!(!*x);
                        *x = true;
                    }
                }
            }
        }
        for (f, us) in c.freq.iter().zip(&c.usages) {
            prop_assert_eq!(*f, us.len());
        }
    }

    #[test]
    fn cover_ignores_input_order(seed in any::<u64>()) {
        let (mut rng, d, tactics) = instance(seed);
        let mut shuffled = tactics.clone();
        shuffled.shuffle(&mut rng);
        let a = cover(&d, &tactics);
        let b = cover(&d, &shuffled);
        for (i, t) in tactics.iter().enumerate() {
            let j = shuffled.iter().position(|s| s.id == t.id).unwrap();
            prop_assert_eq!(&a.usages[i], &b.usages[j]);
        }
        let p = MetricParams::default();
        prop_assert_eq!(dl_of(&d, &tactics, &p), dl_of(&d, &shuffled, &p));
    }

    #[test]
    fn score_and_importance_are_differences(seed in any::<u64>(), alpha in 0.2f64..3.0, beta in 0.2f64..3.0) {
        let (_, d, tactics) = instance(seed);
        let mut p = MetricParams::with_weights(alpha, beta);
        p.importance.insert(0, 0.5);
        let (score, importance) = score_and_importance(&d, &tactics, &p);
        let full = dl_of(&d, &tactics, &p);
        prop_assert!((score - (dl_of(&d, &[], &p) - full)).abs() < 1e-9);
        for (i, t) in tactics.iter().enumerate() {
            let rest: Vec<Tactic> = tactics.iter().filter(|u| u.id != t.id).cloned().collect();
            prop_assert!((importance[i] - (dl_of(&d, &rest, &p) - full)).abs() < 1e-9);
        }
    }

    #[test]
    fn distance_is_bounded_symmetric_and_reflexive(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(1..=4);
        let a = random_pattern(&mut rng, k, 3, 6, 0.3);
        let b = random_pattern(&mut rng, k, 3, 6, 0.3);
        let x = tactic_distance(&a, &b);
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert_eq!(x, tactic_distance(&b, &a));
        prop_assert_eq!(tactic_distance(&a, &a), 0.0);
    }

    #[test]
    fn similarity_vectors_have_unit_norm(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(1..=3);
        let basis: Vec<_> = (0..rng.gen_range(2..6)).map(|_| random_pattern(&mut rng, k, 3, 4, 0.3)).collect();
        let names = (0..basis.len()).map(|i| format!("b{i}")).collect();
        let basis = BasisSet::new(basis, names).unwrap();
        let t = random_pattern(&mut rng, k, 3, 4, 0.3);
        let v = similarity_vector(&t, &basis);
        prop_assert!(v.iter().all(|x| *x >= 0.0));
        prop_assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn projected_points_stay_in_their_sector(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(2..=4);
        let tactics: Vec<Tactic> = (0..8)
            .map(|i| Tactic::new(i + 1, random_pattern(&mut rng, k, 3, 4, 0.3)))
            .collect();
        let freqs: Vec<usize> = (0..tactics.len()).map(|_| rng.gen_range(0..20)).collect();
        let basis = BasisSet::from_tactics(&tactics[..3]).unwrap();
        let model = fit_projection(&tactics, &freqs, basis, k).unwrap();
        for t in tactics.iter().chain([&Tactic::new(99, random_pattern(&mut rng, k, 3, 5, 0.3))]) {
            let r = model.radius(&t.pattern);
            prop_assert!(r > 0.0 && r <= 1.0);
            let a = model.angle(&t.pattern);
            let sector = TAU / k as f64;
            let (primary, _) = top_two(&t.pattern.nonnull_per_feature());
            prop_assert!(a >= sector * primary as f64 && a < sector * (primary + 1) as f64);
        }
    }

    #[test]
    fn candidates_replay_from_their_modifications(seed in any::<u64>()) {
        let (mut rng, d, tactics) = instance(seed);
        let ids: Vec<TacticId> = tactics.iter().map(|t| t.id).collect();
        let c = random_local(&mut rng, &ids, d.k());
        let targets: Vec<Tactic> = c.tactics().iter().map(|id| tactics[*id as usize - 1].clone()).collect();
        let mut next_id = 100;
        if let Ok(cands) = generate_fine_tuning(&d, &targets, &c, &mut next_id) {
            for cand in cands {
                let source = &tactics[cand.source as usize - 1].pattern;
                prop_assert_eq!(apply_modifications(source, &cand.modifications), Some(cand.tactic.pattern.clone()));
                prop_assert!(cand.tactic.id >= 100 && cand.tactic.id < next_id);
            }
        }
    }

    #[test]
    fn sup_is_idempotent_and_general(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(1..=3);
        let a = random_pattern(&mut rng, k, 3, 4, 0.3);
        let b = random_pattern(&mut rng, k, 3, 4, 0.3);
        prop_assert_eq!(super_tactic(&[&a, &a]), Some((a.clone(), 0)));
        if let Some((sup, origin)) = super_tactic(&[&a, &b]) {
            for (i, f, v) in sup.slots() {
                prop_assert_eq!(a.get((i as isize + origin) as usize, f), Some(v));
            }
            prop_assert!(sup.nonnull() <= a.nonnull().min(b.nonnull()));
        }
    }

    #[test]
    fn constraints_round_trip_through_json(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_local(&mut rng, &[1, 2, 3], 3);
        let back: Constraint = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        prop_assert_eq!(back, c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mining_is_deterministic_and_never_worse_than_empty(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_dataset(&mut rng, 20, (3, 8), 2, 3);
        let cfg = MinerConfig { seed, max_iterations: 10, candidates_per_iteration: 40, ..MinerConfig::default() };
        let p = MetricParams::default();
        let a = mine_initial(&d, &p, &cfg);
        let b = mine_initial(&d, &p, &cfg);
        prop_assert_eq!(&a.tactics, &b.tactics);
        prop_assert!(dl_of(&d, &a.tactics, &p) <= dl_of(&d, &[], &p));
        let mut ids: Vec<TacticId> = a.tactics.iter().map(|t| t.id).collect();
        ids.dedup();
        prop_assert_eq!(ids.len(), a.tactics.len());
    }
}
