//! Quick invariant suite behind the `selftest` verb.

use std::time::Instant;

use plasticity_core::budget::{layer_budgets, plan_targets, BiasSchedule};
use plasticity_core::nn::{softmax_xent, Activation, MaskedNetwork, Mode, RslParams};
use plasticity_core::structural::{grow_step, net2wider_insert, prune_step, seed_grow_masks, GrowOptions};
use plasticity_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::protocol::run_cycle_protocol;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn random_batch(rng: &mut ChaCha8Rng, b: usize, d: usize, classes: usize) -> (Tensor, Vec<usize>) {
    let x = Tensor::from_vec(&[b, d], (0..b * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape");
    let y = (0..b).map(|_| rng.gen_range(0..classes)).collect();
    (x, y)
}

fn loss_of(net: &MaskedNetwork, x: &Tensor, y: &[usize]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (logits, _) = net.forward(x, Mode::Eval, &mut rng).expect("forward");
    softmax_xent(&logits, y).expect("loss").0
}

/// Largest relative error between backprop and central differences.
pub fn max_gradcheck_error(net: &MaskedNetwork, x: &Tensor, y: &[usize], eps: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (logits, cache) = net.forward(x, Mode::Eval, &mut rng).expect("forward");
    let (_, g) = softmax_xent(&logits, y).expect("loss");
    let back = net.backward(&cache, &g, None).expect("backward");
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for (pi, grad) in back.param_grads.iter().enumerate() {
        for k in 0..grad.len() {
            let orig = probe.params()[pi].data()[k];
            probe.params_mut()[pi].data_mut()[k] = orig + eps;
            let up = loss_of(&probe, x, y);
            probe.params_mut()[pi].data_mut()[k] = orig - eps;
            let down = loss_of(&probe, x, y);
            probe.params_mut()[pi].data_mut()[k] = orig;
            let fd = (up - down) / (2.0 * eps);
            let an = grad.data()[k];
            let err = (fd - an).abs() / (fd.abs() + an.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}

fn check_gradients() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rsl = RslParams::new(2.0, 0.8, 0.3, 0.6).expect("valid");
    let mut worst: f64 = 0.0;
    for i in 0..6 {
        let act = if i % 2 == 0 { Activation::Relu } else { Activation::Rsl(rsl) };
        let mut net = MaskedNetwork::mlp(4, &[3, 3], 2, act, i).expect("net");
        // nonzero biases keep pre-activations off the ReLU kink
        for li in 0..3 {
            for v in net.linear_mut(li).bias.data_mut() {
                *v = rng.gen_range(0.05..0.3);
            }
        }
        let (x, y) = random_batch(&mut rng, 3, 4, 2);
        worst = worst.max(max_gradcheck_error(&net, &x, &y, 1e-5));
    }
    (worst <= 1e-4, format!("max relative error {worst:.2e}"))
}

fn check_mask_zeroing() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut net = MaskedNetwork::mlp(6, &[5], 3, Activation::Relu, 1).expect("net");
    net.mask_mut(0).set(2, false);
    let (x, y) = random_batch(&mut rng, 4, 6, 3);
    let (logits, cache) = net.forward(&x, Mode::Eval, &mut rng).expect("forward");
    let (_, g) = softmax_xent(&logits, &y).expect("loss");
    let back = net.backward(&cache, &g, None).expect("backward");
    let out_zero = (0..4).all(|r| cache.output(0).row(r)[2] == 0.0);
    let grad_zero = (0..4).all(|r| back.unit_grads[0].row(r)[2] == 0.0);
    (out_zero && grad_zero, format!("output zero {out_zero}, gradient zero {grad_zero}"))
}

fn check_net2wider() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut net = MaskedNetwork::mlp(8, &[12, 10], 4, Activation::Relu, 2).expect("net");
    for h in 0..2 {
        for j in 4..net.mask(h).len() {
            net.mask_mut(h).set(j, false);
        }
    }
    let (x, _) = random_batch(&mut rng, 16, 8, 4);
    let (before, _) = net.forward(&x, Mode::Eval, &mut rng).expect("forward");
    let mut worst: f64 = 0.0;
    for k in 0..6 {
        let h = k % 2;
        let j = 4 + k / 2;
        let rates = vec![0.5; net.mask(h).len()];
        if net2wider_insert(&mut net, h, &[j], &rates, 0.0, &mut rng).is_err() {
            return (false, "insertion failed".into());
        }
        let (after, _) = net.forward(&x, Mode::Eval, &mut rng).expect("forward");
        worst = worst.max(before.max_abs_diff(&after));
    }
    (worst <= 1e-10, format!("max logit change {worst:.2e}"))
}

fn check_budget_matching() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (x, y) = random_batch(&mut rng, 32, 20, 3);
    for schedule in BiasSchedule::all_named() {
        for c in [0.2, 0.3, 0.4, 0.5] {
            let mut g = MaskedNetwork::mlp(20, &[16, 12, 8], 3, Activation::Relu, 4).expect("net");
            let mut p = g.clone();
            let plan = plan_targets(&layer_budgets(&g), c, &schedule, 5).expect("plan");
            seed_grow_masks(&mut g, &plan, 0.1, &mut rng).expect("seed");
            for t in 1..=5 {
                grow_step(&mut g, &plan, t, &GrowOptions::default(), &x, &y, &mut rng).expect("grow");
                prune_step(&mut p, &plan, t, None).expect("prune");
            }
            let gc: Vec<usize> = g.masks().iter().map(|m| m.active_count()).collect();
            let pc: Vec<usize> = p.masks().iter().map(|m| m.active_count()).collect();
            if gc != pc || gc != plan.unit_targets {
                return (false, format!("{} c={c}: grow {gc:?} prune {pc:?}", schedule.name()));
            }
        }
    }
    (true, "16 plans matched".into())
}

fn check_replay_determinism() -> (bool, String) {
    let dir = std::env::temp_dir().join(format!("plasticity-selftest-{}", std::process::id()));
    let text = r#"
method = "grow"
dataset = "synthetic"
compactness = 0.5
cycles = 3
epochs_per_cycle = 1
[data.synthetic]
shape = [16]
classes = 4
train_per_class = 24
test_per_class = 8
noise = 0.5
seed = 1
[model]
hidden = [12, 10]
[stream]
batch_size = 16
"#;
    let cfg = RunConfig::from_toml_str(text, &[]).expect("selftest config");
    let data = match crate::dataset::load_data(&cfg) {
        Ok(d) => d,
        Err(e) => return (false, e.to_string()),
    };
    let a = run_cycle_protocol(&cfg, &data, 7, &dir.join("a"));
    let b = run_cycle_protocol(&cfg, &data, 7, &dir.join("b"));
    let result = match (a, b) {
        (Ok(a), Ok(b)) => {
            let same = a.checkpoints == b.checkpoints && a.events == b.events;
            let replay = crate::analyze::replay_check(&a).unwrap_or(false);
            (same && replay, format!("deterministic {same}, replay {replay}"))
        }
        (Err(e), _) | (_, Err(e)) => (false, e.to_string()),
    };
    let _ = std::fs::remove_dir_all(&dir);
    result
}

/// Runs every check and returns one result per check.
pub fn run_selftest() -> Vec<CheckResult> {
    let checks: [(&'static str, fn() -> (bool, String)); 5] = [
        ("gradient vs finite differences", check_gradients),
        ("masked units are silent", check_mask_zeroing),
        ("net2wider preserves the function", check_net2wider),
        ("grow and prune budgets match", check_budget_matching),
        ("run determinism and event replay", check_replay_determinism),
    ];
    checks
        .iter()
        .map(|(name, f)| {
            let t = Instant::now();
            let (passed, detail) = f();
            CheckResult {
                name,
                passed,
                detail,
                seconds: t.elapsed().as_secs_f64(),
            }
        })
        .collect()
}
