//! Built-in oracle suites: fast kernels, gradients and relevance rules are
//! checked against the slow references in [`crate::oracle`] on generated
//! instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::lrp::{self, RuleAssignment};
use crate::metrics::{self, round2, ConfusionMatrix};
use crate::network::{self, LayerKind, NetworkBuilder, NetworkDef};
use crate::ops::{self, ConvParams, PoolParams};
use crate::oracle;
use crate::tensor::Tensor;
use crate::weights::WeightStore;

/// Deliberate defects for checking that the suites can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Adds a small offset to one kernel tap on the fast path only.
    PerturbConvKernel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfTestReport {
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl SelfTestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{} {}: {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            ));
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        out.push_str(&format!(
            "{} checks, {} failed (seed {})\n",
            self.checks.len(),
            failed,
            self.seed
        ));
        out
    }
}

/// A small random network: conv, ReLU, optional pooling, then a valid
/// convolution producing the class scores. At most four layers.
pub fn random_network(rng: &mut impl Rng, with_bias: bool) -> NetworkDef {
    let channels = rng.gen_range(1..=3);
    let size = [4usize, 6, 8][rng.gen_range(0..3)];
    let hidden = rng.gen_range(1..=4);
    let kernel = rng.gen_range(1..=3);
    let mut b = NetworkBuilder::new([channels, size, size]).conv(
        "conv1",
        hidden,
        kernel,
        ConvParams::new(1, kernel / 2),
        with_bias,
    );
    let mut spatial = size - kernel + 1 + 2 * (kernel / 2);
    if rng.gen_bool(0.8) {
        b = b.relu("relu1");
    }
    match rng.gen_range(0..3) {
        0 if spatial.is_multiple_of(2) => {
            b = b.maxpool("pool1");
            spatial /= 2;
        }
        1 if spatial.is_multiple_of(2) => {
            b = b.avgpool("pool1");
            spatial /= 2;
        }
        _ => {}
    }
    let classes = rng.gen_range(2..=4);
    let head = rng.gen_range(1..=spatial);
    b.conv("score", classes, head, ConvParams::VALID, with_bias)
        .build((0..classes).map(|i| format!("class{i}")).collect())
        .expect("generated network is valid")
}

pub fn random_input(net: &NetworkDef, rng: &mut impl Rng, low: f64, high: f64) -> Tensor<f64> {
    Tensor::from_fn(&net.input_shape(), |_| rng.gen_range(low..high))
}

/// Draws inputs until the forward pass sits at least `margin` away from any
/// ReLU or max-pool kink, so central differences are meaningful.
pub fn smooth_input(
    net: &NetworkDef,
    weights: &WeightStore<f64>,
    rng: &mut impl Rng,
    margin: f64,
) -> Result<Tensor<f64>> {
    loop {
        let x = random_input(net, rng, -1.0, 1.0);
        let trace = network::forward(net, weights, &x)?;
        if oracle::kink_distance(net, &trace) > margin {
            return Ok(x);
        }
    }
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.to_string(),
        passed,
        detail,
    }
}

fn kernel_check(rng: &mut ChaCha8Rng, fault: Option<Fault>) -> Result<Check> {
    let mut worst = 0.0f64;
    for _ in 0..40 {
        let cin = rng.gen_range(1..=4);
        let cout = rng.gen_range(1..=4);
        let k = rng.gen_range(1..=4);
        let h = rng.gen_range(k..=8);
        let w = rng.gen_range(k..=8);
        let params = ConvParams::new(rng.gen_range(1..=2), rng.gen_range(0..=k / 2));
        let x = Tensor::<f64>::from_fn(&[cin, h, w], |_| rng.gen_range(-1.0..1.0));
        let kernel = Tensor::<f64>::from_fn(&[cout, cin, k, k], |_| rng.gen_range(-1.0..1.0));
        let bias = Tensor::<f64>::from_fn(&[cout], |_| rng.gen_range(-1.0..1.0));
        let mut fast_kernel = kernel.clone();
        if fault == Some(Fault::PerturbConvKernel) {
            fast_kernel.data_mut()[0] += 1e-3;
        }
        let got = ops::conv2d(&x, &fast_kernel, Some(&bias), params)?;
        let want = oracle::conv2d_nested(&x, &kernel, Some(&bias), params);
        worst = worst.max(oracle::relative_error(got.data(), want.data()));
    }
    Ok(check(
        "conv2d vs nested loops",
        worst <= 1e-12,
        format!("max relative error {worst:.3e}"),
    ))
}

fn pool_check(rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut worst = 0.0f64;
    for _ in 0..40 {
        let c = rng.gen_range(1..=4);
        let h = 2 * rng.gen_range(1..=4);
        let w = 2 * rng.gen_range(1..=4);
        let x = Tensor::<f64>::from_fn(&[c, h, w], |_| rng.gen_range(-1.0..1.0));
        let (m, _) = ops::maxpool2d(&x, PoolParams::VGG)?;
        worst = worst.max(oracle::relative_error(
            m.data(),
            oracle::maxpool_scan(&x, PoolParams::VGG).data(),
        ));
        let a = ops::avgpool2d(&x, PoolParams::VGG)?;
        worst = worst.max(oracle::relative_error(
            a.data(),
            oracle::avgpool_scan(&x, PoolParams::VGG).data(),
        ));
    }
    Ok(check(
        "pooling vs window scan",
        worst <= 1e-12,
        format!("max relative error {worst:.3e}"),
    ))
}

fn gradient_check(rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let net = random_network(rng, true);
        let weights = WeightStore::<f64>::random(&net, rng.gen());
        let x = smooth_input(&net, &weights, rng, 1e-3)?;
        let target = rng.gen_range(0..net.num_classes());
        let got = network::input_gradient(&net, &weights, &x, target)?;
        let fd = oracle::finite_difference(&x, 1e-6, |probe| {
            let trace = network::forward(&net, &weights, probe).unwrap();
            crate::explain::target_score(trace.scores(), target).unwrap()
        });
        worst = worst.max(oracle::relative_error(got.data(), fd.data()));
    }
    Ok(check(
        "input gradient vs finite differences",
        worst <= 1e-5,
        format!("max relative error {worst:.3e}"),
    ))
}

fn conservation_check(rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut worst = 0.0f64;
    for i in 0..10 {
        let net = random_network(rng, false);
        let weights = WeightStore::<f64>::random(&net, rng.gen());
        let x = random_input(&net, rng, 0.0, 1.0);
        let target = rng.gen_range(0..net.num_classes());
        let rules = if i % 2 == 0 {
            RuleAssignment::uniform(&net, 0.0)
        } else {
            let c = net.input_shape()[0];
            RuleAssignment::standard(&net, 0.0, vec![0.0; c], vec![1.0; c])?
        };
        let trace = lrp::lrp(&net, &weights, &x, target, &rules)?;
        if trace.target_score().abs() > 1e-9 {
            worst = worst.max(trace.max_conservation_error());
        }
    }
    Ok(check(
        "lrp conservation",
        worst <= 1e-6,
        format!("max relative deviation {worst:.3e}"),
    ))
}

fn metric_check(rng: &mut ChaCha8Rng) -> Result<Check> {
    let fixture = ConfusionMatrix::from_counts(vec![vec![794, 11], vec![96, 709]])?;
    let r = metrics::report(&fixture)?;
    let mut ok = round2(r.classes[0].precision) == 0.89
        && round2(r.classes[1].precision) == 0.98
        && round2(r.classes[0].recall) == 0.99
        && round2(r.classes[1].recall) == 0.88
        && round2(r.accuracy) == 0.93;
    for _ in 0..20 {
        let k = rng.gen_range(2..=4);
        let truth: Vec<usize> = (0..40).map(|_| rng.gen_range(0..k)).collect();
        let pred: Vec<usize> = (0..40).map(|_| rng.gen_range(0..k)).collect();
        let m = metrics::confusion(&truth, &pred, k)?;
        ok &= m.counts() == &oracle::confusion_counts(&truth, &pred, k)[..];
        let r = metrics::report(&m)?;
        ok &= (r.weighted_avg.recall - r.accuracy).abs() <= 1e-12;
        let samples: Vec<metrics::ScoredSample> = truth
            .iter()
            .map(|&t| metrics::ScoredSample {
                label: t == 0,
                score: rng.gen_range(0..5) as f64 / 4.0,
            })
            .collect();
        let labels: Vec<bool> = samples.iter().map(|s| s.label).collect();
        let scores: Vec<f64> = samples.iter().map(|s| s.score).collect();
        if let Ok(auc) = metrics::roc_auc(&samples) {
            ok &= (auc - oracle::auc_pairs(&labels, &scores)).abs() <= 1e-12;
        }
    }
    Ok(check(
        "metric identities",
        ok,
        "table fixture, counting, weighted recall, AUC pairs".into(),
    ))
}

/// Runs every suite; a suite that errors counts as failed.
pub fn run(seed: u64, fault: Option<Fault>) -> SelfTestReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let suites: [(&str, &dyn Fn(&mut ChaCha8Rng) -> Result<Check>); 5] = [
        ("conv2d vs nested loops", &|r| kernel_check(r, fault)),
        ("pooling vs window scan", &pool_check),
        ("input gradient vs finite differences", &gradient_check),
        ("lrp conservation", &conservation_check),
        ("metric identities", &metric_check),
    ];
    let checks = suites
        .iter()
        .map(|(name, f)| f(&mut rng).unwrap_or_else(|e| check(name, false, format!("error: {e}"))))
        .collect();
    SelfTestReport { seed, checks }
}

/// Layer kinds present in a network, for diagnostics.
pub fn describe(net: &NetworkDef) -> String {
    net.layers()
        .iter()
        .map(|l| match l.kind {
            LayerKind::Conv { kernel, .. } => {
                format!("{}:conv{}x{}->{}", l.name, kernel[2], kernel[3], kernel[0])
            }
            ref k => format!("{}:{}", l.name, k.label()),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_run_passes_and_replays() {
        let a = run(7, None);
        assert!(a.passed(), "{}", a.to_text());
        assert_eq!(a, run(7, None));
    }

    #[test]
    fn perturbed_kernel_fails_named_check() {
        let r = run(7, Some(Fault::PerturbConvKernel));
        assert!(!r.passed());
        let failed: Vec<&str> = r
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        assert_eq!(failed, vec!["conv2d vs nested loops"]);
    }

    #[test]
    fn generated_networks_are_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let net = random_network(&mut rng, true);
            assert!(net.layers().len() <= 4, "{}", describe(&net));
        }
    }
}
