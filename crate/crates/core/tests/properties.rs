//! Property tests over randomly generated networks, layers and score sets.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use heatlens::explain::{self, target_score, Baseline};
use heatlens::lrp::{self, canonicalize_for_lrp, RuleAssignment};
use heatlens::metrics::{self, ScoredSample};
use heatlens::network;
use heatlens::ops::{self, ConvParams};
use heatlens::oracle;
use heatlens::selftest::{random_input, random_network, smooth_input};
use heatlens::{Tensor, WeightStore};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relevance_is_conserved_without_bias(seed in any::<u64>(), zb in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng, false);
        let w = WeightStore::<f64>::random(&net, rng.gen());
        let x = random_input(&net, &mut rng, 0.0, 1.0);
        let c = net.input_shape()[0];
        let rules = if zb {
            RuleAssignment::standard(&net, 0.0, vec![0.0; c], vec![1.0; c]).unwrap()
        } else {
            RuleAssignment::uniform(&net, 0.0)
        };
        let target = rng.gen_range(0..net.num_classes());
        let trace = lrp::lrp(&net, &w, &x, target, &rules).unwrap();
        let score = target_score(network::forward(&canonicalize_for_lrp(&net), &w, &x).unwrap().scores(), target).unwrap();
        prop_assert!(trace.max_conservation_error() <= 1e-9);
        prop_assert!((trace.pixels().sum_f64() - score).abs() <= 1e-9 * score.abs().max(1e-12));
    }

    #[test]
    fn conv_is_linear_in_its_input(seed in any::<u64>(), a in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, h, w) = (rng.gen_range(1..4), rng.gen_range(3..8), rng.gen_range(3..8));
        let k = Tensor::<f64>::from_fn(&[2, c, 3, 3], |_| rng.gen_range(-1.0..1.0));
        let x = Tensor::<f64>::from_fn(&[c, h, w], |_| rng.gen_range(-1.0..1.0));
        let y = Tensor::<f64>::from_fn(&[c, h, w], |_| rng.gen_range(-1.0..1.0));
        let lhs = ops::conv2d(&x.scale(a).add(&y).unwrap(), &k, None, ConvParams::VGG).unwrap();
        let rhs = ops::conv2d(&x, &k, None, ConvParams::VGG).unwrap().scale(a)
            .add(&ops::conv2d(&y, &k, None, ConvParams::VGG).unwrap()).unwrap();
        prop_assert!(oracle::relative_error(lhs.data(), rhs.data()) <= 1e-12);
    }

    #[test]
    fn gradient_is_the_adjoint_of_the_forward_pass(seed in any::<u64>()) {
        // score(x + t d) - score(x - t d) ~ 2 t <grad, d> away from kinks
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng, true);
        let w = WeightStore::<f64>::random(&net, rng.gen());
        let x = smooth_input(&net, &w, &mut rng, 1e-3).unwrap();
        let d = random_input(&net, &mut rng, -1.0, 1.0);
        let g = network::input_gradient(&net, &w, &x, 0).unwrap();
        let t = 1e-7;
        let s = |p: &Tensor<f64>| target_score(network::forward(&net, &w, p).unwrap().scores(), 0).unwrap();
        let fd = (s(&x.add(&d.scale(t)).unwrap()) - s(&x.sub(&d.scale(t)).unwrap())) / (2.0 * t);
        let dot: f64 = g.data().iter().zip(d.data()).map(|(a, b)| a * b).sum();
        prop_assert!((fd - dot).abs() <= 1e-5 * dot.abs().max(1.0));
    }

    #[test]
    fn occluding_with_the_input_changes_nothing(seed in any::<u64>(), patch in 1usize..5, stride in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng, true);
        let w = WeightStore::<f64>::random(&net, rng.gen());
        let x = random_input(&net, &mut rng, -1.0, 1.0);
        let patch = patch.min(net.input_shape()[1]);
        let occ = explain::occlusion(&net, &w, &x, 0, patch, stride, &Baseline::Tensor(x.clone())).unwrap();
        prop_assert!(occ.pixels.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn auc_reverses_and_ignores_monotone_rescaling(
        raw in prop::collection::vec((any::<bool>(), 0u8..20), 2..80)
    ) {
        prop_assume!(raw.iter().any(|r| r.0) && raw.iter().any(|r| !r.0));
        let samples: Vec<ScoredSample> = raw.iter().map(|&(label, s)| ScoredSample { label, score: s as f64 / 20.0 }).collect();
        let flipped: Vec<ScoredSample> = samples.iter().map(|s| ScoredSample { label: s.label, score: 1.0 - s.score }).collect();
        let squashed: Vec<ScoredSample> = samples.iter().map(|s| ScoredSample { label: s.label, score: s.score.powi(3) }).collect();
        let auc = metrics::roc_auc(&samples).unwrap();
        prop_assert!((auc + metrics::roc_auc(&flipped).unwrap() - 1.0).abs() <= 1e-12);
        prop_assert_eq!(auc, metrics::roc_auc(&squashed).unwrap());
    }

    #[test]
    fn confusion_counts_every_sample_once(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..200)) {
        let truth: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let m = metrics::confusion(&truth, &pred, 4).unwrap();
        prop_assert_eq!(m.counts().to_vec(), oracle::confusion_counts(&truth, &pred, 4));
        let r = metrics::report(&m).unwrap();
        prop_assert!((r.accuracy - m.trace() as f64 / pairs.len() as f64).abs() <= 1e-15);
    }
}
