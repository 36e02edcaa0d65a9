mod common;

use std::sync::OnceLock;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use signbow::classifier::{
    classify, hand_log_prob, load_model, save_model, train, Backend, FeatureMask, SignModel, TrainConfig,
};
use signbow::dataset::{Dataset, Hand, HandObservation, Point2, SignSample};
use signbow::hmm::{baum_welch, forward_log_likelihood, init_left_right, DiagGmm, HmmConfig, LeftRightHmm};
use signbow::position::{fit_mixture_em, Gaussian2D, GaussianMixture2D};

fn fixture() -> &'static (Dataset, SignModel) {
    static F: OnceLock<(Dataset, SignModel)> = OnceLock::new();
    F.get_or_init(|| {
        let (_, d) = common::small_set();
        let m = train(&d, &common::small_train_config()).unwrap();
        (d, m)
    })
}

fn random_handshape(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

fn random_observation(rng: &mut ChaCha8Rng, dim: usize) -> HandObservation {
    if rng.random_bool(0.3) {
        HandObservation::absent()
    } else {
        let p = Point2 {
            x: rng.random_range(-80.0..80.0),
            y: rng.random_range(-80.0..80.0),
        };
        HandObservation::present(p, random_handshape(rng, dim))
    }
}

fn score_of(ranking: &[signbow::classifier::ClassScore], id: u32) -> f64 {
    ranking.iter().find(|c| c.class_id == id).unwrap().log_score
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn unused_hand_never_changes_one_handed_scores(idx in 0usize..96, seed in any::<u64>()) {
        let (d, m) = fixture();
        let s = &d.samples[idx % d.samples.len()];
        let base = classify(s, m, FeatureMask::ALL).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mutated = s.clone();
        for f in &mut mutated.frames {
            f.left = random_observation(&mut rng, d.manifest.handshape_dim);
        }
        let after = classify(&mutated, m, FeatureMask::ALL).unwrap();
        for c in m.classes.iter().filter(|c| !c.uses_left) {
            prop_assert_eq!(score_of(&base, c.id).to_bits(), score_of(&after, c.id).to_bits());
        }
    }

    #[test]
    fn mostly_absent_required_hand_is_impossible(idx in 0usize..96, keep_frac in 0.0f64..=0.5) {
        let (d, m) = fixture();
        let mut s = d.samples[idx % d.samples.len()].clone();
        let n = s.frames.len();
        let keep = (keep_frac * n as f64).floor() as usize;
        for (i, f) in s.frames.iter_mut().enumerate() {
            if i >= keep {
                f.right = HandObservation::absent();
            } else if !f.right.present {
                f.right = HandObservation::present(Point2 { x: 0.0, y: 0.0 }, vec![1.0 / d.manifest.handshape_dim as f64; d.manifest.handshape_dim]);
            }
        }
        for c in classify(&s, m, FeatureMask::ALL).unwrap() {
            prop_assert!(c.impossible);
            prop_assert_eq!(c.log_score, f64::NEG_INFINITY);
        }
    }

    #[test]
    fn factor_terms_add_up(idx in 0usize..96) {
        let (d, m) = fixture();
        let s = &d.samples[idx % d.samples.len()];
        for c in &m.classes {
            for hand in [Hand::Left, Hand::Right] {
                let Some(hcm) = c.hand(hand) else { continue };
                if s.present_count(hand) == 0 {
                    continue;
                }
                let all = hand_log_prob(s, hand, hcm, m, FeatureMask::ALL).unwrap();
                let pos = hand_log_prob(s, hand, hcm, m, FeatureMask::POS).unwrap();
                let mov = hand_log_prob(s, hand, hcm, m, FeatureMask::MOV).unwrap();
                let hs = hand_log_prob(s, hand, hcm, m, FeatureMask::HS).unwrap();
                prop_assert_eq!(all.to_bits(), (pos + mov + hs).to_bits());
                let pm = hand_log_prob(s, hand, hcm, m, FeatureMask::POS_MOV).unwrap();
                prop_assert_eq!(pm.to_bits(), (pos + mov).to_bits());
            }
        }
    }

    #[test]
    fn ranking_is_sorted_and_complete(idx in 0usize..96, mask_idx in 0usize..7) {
        let (d, m) = fixture();
        let s = &d.samples[idx % d.samples.len()];
        let r = classify(s, m, FeatureMask::NAMED[mask_idx]).unwrap();
        prop_assert_eq!(r.len(), m.classes.len());
        let mut ids: Vec<u32> = r.iter().map(|c| c.class_id).collect();
        ids.sort_unstable();
        prop_assert_eq!(ids, d.manifest.class_ids());
        for w in r.windows(2) {
            let ordered = (!w[0].impossible && w[1].impossible)
                || (w[0].impossible == w[1].impossible
                    && (w[0].log_score > w[1].log_score
                        || (w[0].log_score == w[1].log_score && w[0].class_id < w[1].class_id)));
            prop_assert!(ordered);
        }
    }
}

/// Adding a common translation to every coordinate, for training and test alike, shifts
/// nothing the model looks at; scores move only by rounding.
#[test]
fn global_translation_leaves_scores_unchanged() {
    let (d, m) = fixture();
    let shift = Point2 { x: 17.25, y: -9.5 };
    let mut moved = d.clone();
    for s in &mut moved.samples {
        for f in &mut s.frames {
            for hand in [Hand::Left, Hand::Right] {
                if let Some(p) = f.hand_mut(hand).pos.as_mut() {
                    *p = *p + shift;
                }
            }
        }
    }
    let m2 = train(&moved, &common::small_train_config()).unwrap();
    let mut agree = 0;
    for (a, b) in d.samples.iter().zip(&moved.samples) {
        let ra = classify(a, m, FeatureMask::ALL).unwrap();
        let rb = classify(b, &m2, FeatureMask::ALL).unwrap();
        if ra[0].class_id == rb[0].class_id {
            agree += 1;
        }
        for c in &ra {
            let other = score_of(&rb, c.class_id);
            if c.impossible {
                assert_eq!(other, f64::NEG_INFINITY);
            } else {
                // a direction sitting exactly on a bin edge may flip; allow that but nothing bigger
                assert!((c.log_score - other).abs() < 0.5, "{} vs {other}", c.log_score);
            }
        }
    }
    assert!(agree as f64 >= 0.98 * d.len() as f64);
}

#[test]
fn training_and_serialization_are_deterministic() {
    let (d, m) = fixture();
    let again = train(d, &common::small_train_config()).unwrap();
    assert_eq!(serde_json::to_string(m).unwrap(), serde_json::to_string(&again).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    save_model(m, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(&loaded, m);
    for s in d.samples.iter().take(20) {
        assert_eq!(classify(s, m, FeatureMask::ALL).unwrap(), classify(s, &loaded, FeatureMask::ALL).unwrap());
    }
    let path2 = dir.path().join("m2.json");
    save_model(&loaded, &path2).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
}

#[test]
fn hmm_model_round_trips() {
    let (d, _) = fixture();
    let cfg = TrainConfig {
        backend: Backend::Hmm,
        hmm: HmmConfig { num_states: 3, max_iters: 5, ..Default::default() },
        ..common::small_train_config()
    };
    let m = train(d, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hmm.json");
    save_model(&m, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded, m);
    let s: &SignSample = &d.samples[0];
    assert_eq!(classify(s, &m, FeatureMask::ALL).unwrap(), classify(s, &loaded, FeatureMask::ALL).unwrap());
}

// ---------------------------------------------------------------------------
// HMM against path enumeration
// ---------------------------------------------------------------------------

fn random_hmm(rng: &mut ChaCha8Rng, states: usize, dim: usize, comps: usize) -> LeftRightHmm {
    let transitions = (0..states)
        .map(|i| {
            let mut row: Vec<f64> = (0..states)
                .map(|j| if j >= i && j - i <= 2 { rng.random_range(0.05..1.0) } else { 0.0 })
                .collect();
            let t: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= t);
            row
        })
        .collect();
    let emissions = (0..states)
        .map(|_| {
            let mut w: Vec<f64> = (0..comps).map(|_| rng.random_range(0.1..1.0)).collect();
            let t: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= t);
            DiagGmm {
                weights: w,
                means: (0..comps).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect(),
                variances: (0..comps).map(|_| (0..dim).map(|_| rng.random_range(0.2..3.0)).collect()).collect(),
            }
        })
        .collect();
    let mut initial = vec![0.0; states];
    initial[0] = 1.0;
    LeftRightHmm { num_states: states, initial, transitions, emissions }
}

/// Mixture density written out directly.
fn density(g: &DiagGmm, x: &[f64]) -> f64 {
    let mut total = 0.0;
    for m in 0..g.weights.len() {
        let mut p = g.weights[m];
        for d in 0..x.len() {
            let v = g.variances[m][d];
            let z = x[d] - g.means[m][d];
            p *= (-z * z / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        }
        total += p;
    }
    total
}

/// Sum over every state path of the joint probability.
fn brute_force_likelihood(seq: &[Vec<f64>], h: &LeftRightHmm) -> f64 {
    let s = h.num_states;
    let t = seq.len();
    let mut total = 0.0;
    let mut path = vec![0usize; t];
    loop {
        let mut p = h.initial[path[0]] * density(&h.emissions[path[0]], &seq[0]);
        for k in 1..t {
            p *= h.transitions[path[k - 1]][path[k]] * density(&h.emissions[path[k]], &seq[k]);
        }
        total += p;
        let mut k = 0;
        loop {
            if k == t {
                return total;
            }
            path[k] += 1;
            if path[k] < s {
                break;
            }
            path[k] = 0;
            k += 1;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_matches_path_enumeration(
        seed in any::<u64>(), states in 1usize..=4, len in 1usize..=6, dim in 1usize..=3, comps in 1usize..=2,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hmm(&mut rng, states, dim, comps);
        let seq: Vec<Vec<f64>> = (0..len).map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let fwd = forward_log_likelihood(&seq, &h).unwrap();
        let brute = brute_force_likelihood(&seq, &h).ln();
        prop_assert!((fwd - brute).abs() <= 1e-9 * brute.abs().max(1.0), "{} vs {}", fwd, brute);
    }

    #[test]
    fn baum_welch_never_decreases(seed in any::<u64>(), states in 1usize..=4, comps in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seqs: Vec<Vec<Vec<f64>>> = (0..6)
            .map(|_| {
                let n = rng.random_range(3..12);
                (0..n).map(|t| vec![t as f64 * 0.3 + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect()
            })
            .collect();
        let cfg = HmmConfig { num_states: states, mixture_components: comps, max_iters: 30, ..Default::default() };
        let init = init_left_right(&seqs, &cfg, seed).unwrap();
        let (_, trace) = baum_welch(&seqs, init, &cfg).unwrap();
        for w in trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-8 * w[0].abs().max(1.0), "{:?}", trace);
        }
    }

    #[test]
    fn mixture_em_never_decreases(seed in any::<u64>(), k in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<Point2> = (0..60)
            .map(|i| {
                let c = (i % 3) as f64 * 6.0;
                Point2 { x: c + rng.random_range(-2.0..2.0), y: rng.random_range(-2.0..2.0) }
            })
            .collect();
        let components = (0..k)
            .map(|j| Gaussian2D { mean: points[j * 7], cov: [[4.0, 0.0], [0.0, 4.0]] })
            .collect();
        let mix = GaussianMixture2D { weights: vec![1.0 / k as f64; k], components };
        let (_, trace) = fit_mixture_em(&points, mix).unwrap();
        for w in trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-8 * w[0].abs().max(1.0), "{:?}", trace);
        }
    }
}
