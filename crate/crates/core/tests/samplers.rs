mod common;

use common::{all_pairs, random_instance, tv};
use decipher::corpus::BigramTable;
use decipher::features::{FeatureCounts, WeightVector};
use decipher::loglinear::{exact_forced_expectation, exact_full_expectation, exact_gradient, LogLinearModel};
use decipher::mcmc::{
    build_proposal, build_reverse_proposal, cd_delta, cd_update, gibbs_forced, gibbs_full, imh_posterior,
    imh_reconstruction,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn histogram(samples: &[(usize, usize)], v: usize) -> Vec<usize> {
    let mut h = vec![0; v * v];
    for &(a, b) in samples {
        h[a * v + b] += 1;
    }
    h
}

#[test]
fn gibbs_forced_is_stationary_on_posterior() {
    for seed in 0..5 {
        let inst = random_instance(seed, 3, 4, true);
        let m = &inst.model;
        let prop = build_proposal(&m.weights, &m.space, 0.1).unwrap();
        for (f1, f2, _) in inst.src.iter().take(2) {
            let out = gibbs_forced(m, &prop, (f1, f2), 5000, &mut rng(seed)).unwrap();
            let exact = common::posterior(m, (f1, f2));
            let d = tv(&histogram(&out.samples, 4), &exact);
            assert!(d <= 0.05, "seed {seed}: TV {d}");
        }
    }
}

#[test]
fn gibbs_forced_zero_weights_matches_lm_marginal() {
    let mut inst = random_instance(11, 3, 4, false);
    inst.model.weights = WeightVector::default();
    let m = &inst.model;
    let prop = build_proposal(&m.weights, &m.space, 0.1).unwrap();
    let out = gibbs_forced(m, &prop, (0, 1), 5000, &mut rng(1)).unwrap();
    let exact = common::posterior(m, (0, 1));
    let marginal: Vec<f64> = (0..4).map(|a| (0..4).map(|b| exact[a * 4 + b]).sum()).collect();
    let mut h = vec![0; 4];
    for &(a, _) in &out.samples {
        h[a] += 1;
    }
    assert!(tv(&h, &marginal) <= 0.05);
}

#[test]
fn imh_is_stationary_for_any_backoff() {
    for (seed, pb) in [(0u64, 0.05), (1, 0.1), (2, 0.25), (3, 0.5), (4, 0.1)] {
        let inst = random_instance(seed + 100, 3, 4, true);
        let m = &inst.model;
        let prop = build_proposal(&m.weights, &m.space, pb).unwrap();
        for (f1, f2, _) in inst.src.iter().take(2) {
            let out = imh_posterior(m, &prop, (f1, f2), 20_000, &mut rng(seed)).unwrap();
            let d = tv(&histogram(&out.samples, 4), &common::posterior(m, (f1, f2)));
            assert!(d <= 0.05, "p_b {pb}: TV {d}");
            let rate = out.acceptance_rate.unwrap();
            assert!((0.01..=1.0).contains(&rate), "acceptance {rate}");
        }
    }
}

#[test]
fn imh_rejections_repeat_the_state() {
    let inst = random_instance(5, 3, 4, true);
    let m = &inst.model;
    let prop = build_proposal(&m.weights, &m.space, 0.1).unwrap();
    let out = imh_posterior(m, &prop, (0, 1), 2000, &mut rng(0)).unwrap();
    assert_eq!(out.samples.len(), 2000);
    let rate = out.acceptance_rate.unwrap();
    if rate < 1.0 {
        assert!(out.samples.windows(2).any(|w| w[0] == w[1]));
    }
}

#[test]
fn single_target_word_makes_every_sample_identical() {
    let inst = random_instance(3, 3, 1, true);
    let m = &inst.model;
    let prop = build_proposal(&m.weights, &m.space, 0.1).unwrap();
    let g = gibbs_forced(m, &prop, (0, 1), 50, &mut rng(0)).unwrap();
    assert!(g.samples.iter().all(|&s| s == (0, 0)));
    let i = imh_posterior(m, &prop, (0, 1), 50, &mut rng(0)).unwrap();
    assert!(i.samples.iter().all(|&s| s == (0, 0)));
    assert_eq!(i.acceptance_rate, Some(1.0));
}

#[test]
fn single_source_word_makes_full_samples_identical() {
    let inst = random_instance(3, 1, 3, true);
    let out = gibbs_full(&inst.model, 100, 20, &mut rng(0)).unwrap();
    assert!(out.samples.iter().all(|s| s.source == (0, 0)));
}

#[test]
fn gibbs_full_zero_weights_is_uniform_over_sources() {
    let mut inst = random_instance(8, 4, 3, false);
    inst.model.weights = WeightVector::default();
    let out = gibbs_full(&inst.model, 5000, 20, &mut rng(2)).unwrap();
    let mut h = vec![0; 4];
    for s in &out.samples {
        h[s.source.0] += 1;
    }
    assert!(tv(&h, &[0.25; 4]) <= 0.05);
}

fn sampled_forced(m: &LogLinearModel, src: &BigramTable, n: usize, imh: bool, seed: u64) -> FeatureCounts {
    let prop = build_proposal(&m.weights, &m.space, 0.1).unwrap();
    let mut acc = FeatureCounts::default();
    for (i, (f1, f2, c)) in src.iter().enumerate() {
        let mut r = rng(seed + i as u64);
        let out = if imh {
            imh_posterior(m, &prop, (f1, f2), n, &mut r).unwrap()
        } else {
            gibbs_forced(m, &prop, (f1, f2), n, &mut r).unwrap()
        };
        acc.add_scaled(&out.mean_phi, c as f64);
    }
    acc
}

#[test]
fn sampled_forced_expectation_converges() {
    for seed in 0..4 {
        let inst = random_instance(seed + 200, 3, 4, true);
        let m = &inst.model;
        let exact = exact_forced_expectation(m, &inst.src).unwrap();
        let n = inst.src.total_count() as f64;
        for imh in [false, true] {
            let mut est = sampled_forced(m, &inst.src, 5000, imh, seed);
            est.scale(1.0 / n);
            let mut ex = exact.clone();
            ex.scale(1.0 / n);
            let d = est.linf_distance(&ex);
            assert!(d <= 0.05, "seed {seed} imh {imh}: L-inf {d}");
        }
    }
}

#[test]
fn sampled_full_expectation_converges() {
    for seed in 0..3 {
        let inst = random_instance(seed + 300, 3, 3, true);
        let m = &inst.model;
        let exact = exact_full_expectation(m).unwrap();
        let out = gibbs_full(m, 10_000, 100, &mut rng(seed)).unwrap();
        let d = out.mean_phi.linf_distance(&exact);
        assert!(d <= 0.05, "seed {seed}: L-inf {d}");
    }
}

#[test]
fn reconstruction_zero_weights_is_uniform() {
    let mut inst = random_instance(9, 3, 3, false);
    inst.model.weights = WeightVector::default();
    let m = &inst.model;
    let rev = build_reverse_proposal(&m.weights, &m.space, 0.1).unwrap();
    let mut r = rng(4);
    let mut cur = (0, 0);
    let mut h = vec![0; 9];
    for _ in 0..20_000 {
        cur = imh_reconstruction(m, &rev, (1, 2), cur, &mut r);
        h[cur.0 * 3 + cur.1] += 1;
    }
    assert!(tv(&h, &[1.0 / 9.0; 9]) <= 0.05);
}

#[test]
fn reconstruction_chain_targets_source_conditional() {
    let inst = random_instance(12, 3, 3, true);
    let m = &inst.model;
    let rev = build_reverse_proposal(&m.weights, &m.space, 0.2).unwrap();
    let latent = (0, 2);
    let raw: Vec<f64> = all_pairs(3)
        .into_iter()
        .map(|f| (common::unit_score(m, f.0, latent.0) + common::unit_score(m, f.1, latent.1)).exp())
        .collect();
    let z: f64 = raw.iter().sum();
    let exact: Vec<f64> = raw.iter().map(|x| x / z).collect();
    let mut r = rng(6);
    let mut cur = (1, 1);
    let mut h = vec![0; 9];
    for _ in 0..20_000 {
        cur = imh_reconstruction(m, &rev, latent, cur, &mut r);
        h[cur.0 * 3 + cur.1] += 1;
    }
    assert!(tv(&h, &exact) <= 0.05);
}

#[test]
fn reconstruction_concentrates_on_dominant_source() {
    let mut inst = random_instance(13, 3, 3, false);
    let mut w = WeightVector::default();
    w.translation.insert((2, 0), 12.0);
    w.translation.insert((2, 1), 12.0);
    inst.model.weights = w;
    let m = &inst.model;
    let rev = build_reverse_proposal(&m.weights, &m.space, 0.1).unwrap();
    let mut r = rng(0);
    let mut cur = (0, 0);
    let mut hits = 0;
    for i in 0..2000 {
        cur = imh_reconstruction(m, &rev, (0, 1), cur, &mut r);
        if i >= 100 && cur == (2, 2) {
            hits += 1;
        }
    }
    assert!(hits as f64 / 1900.0 > 0.99);
}

#[test]
fn cd_delta_arithmetic() {
    let inst = random_instance(1, 3, 3, true);
    let space = &inst.model.space;
    assert_eq!(cd_delta(space, (0, 1), (0, 1), (0, 2), 0.5), FeatureCounts::default());
    // source 0 is an ortho match for target 0, source 1 is not
    let d = cd_delta(space, (0, 1), (1, 1), (0, 2), 0.5);
    assert_eq!(d.ortho, 0.5);
    assert_eq!(d.get(0, 0), 0.5);
    assert_eq!(d.get(1, 0), -0.5);
    assert_eq!(d.get(1, 2), 0.0);
    assert!(!d.translation.contains_key(&(1, 2)));
}

#[test]
fn cd_direction_agrees_with_exact_gradient() {
    for seed in 0..3 {
        let inst = random_instance(seed + 400, 3, 3, true);
        let m = &inst.model;
        let fwd = build_proposal(&m.weights, &m.space, 0.1).unwrap();
        let rev = build_reverse_proposal(&m.weights, &m.space, 0.1).unwrap();
        let mut cd = FeatureCounts::default();
        for (i, (f1, f2, c)) in inst.src.iter().enumerate() {
            let est = cd_update(m, &fwd, &rev, (f1, f2), 10_000, 1.0, &mut rng(seed * 31 + i as u64)).unwrap();
            cd.add_scaled(&est.delta, c as f64);
        }
        let g = exact_gradient(m, &inst.src).unwrap();
        assert!(cd.dot(&g) > 0.0, "seed {seed}");
    }
}
