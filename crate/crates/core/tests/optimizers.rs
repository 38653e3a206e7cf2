use plasticity_core::nn::{softmax_xent, Activation, MaskedNetwork, Mode, UnitMask};
use plasticity_core::optim::{
    adam_step, moment_transplant, newborn_slices, AdamState, OptimizerKind, OptimizerState, TwoSpeed, TwoSpeedConfig,
};
use plasticity_core::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textbook bias-corrected Adam on one scalar.
struct ScalarAdam {
    m: f64,
    v: f64,
    t: i32,
}

impl ScalarAdam {
    fn step(&mut self, w: f64, g: f64, lr: f64, b1: f64, b2: f64, eps: f64) -> f64 {
        self.t += 1;
        self.m = b1 * self.m + (1.0 - b1) * g;
        self.v = b2 * self.v + (1.0 - b2) * g * g;
        let mh = self.m / (1.0 - b1.powi(self.t));
        let vh = self.v / (1.0 - b2.powi(self.t));
        w - lr * mh / (vh.sqrt() + eps)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adam_matches_scalar_oracle(
        init in proptest::collection::vec(-2.0f64..2.0, 5),
        grads in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 5), 10),
        lr in 1e-4f64..0.1,
    ) {
        let mut p = Tensor::from_vec(&[5], init.clone()).unwrap();
        let mut state = AdamState::new(&[vec![5]]);
        let mut oracles: Vec<ScalarAdam> = (0..5).map(|_| ScalarAdam { m: 0.0, v: 0.0, t: 0 }).collect();
        let mut expect = init;
        for g in &grads {
            adam_step(&mut [&mut p], &[Tensor::from_vec(&[5], g.clone()).unwrap()], &mut state, lr).unwrap();
            for k in 0..5 {
                expect[k] = oracles[k].step(expect[k], g[k], lr, 0.9, 0.999, 1e-8);
            }
            for k in 0..5 {
                prop_assert!((p.data()[k] - expect[k]).abs() <= 1e-10);
            }
        }
    }
}

fn train(kind: OptimizerKind, two_speed: Option<TwoSpeedConfig>, steps: usize) -> MaskedNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut net = MaskedNetwork::mlp(6, &[10], 3, Activation::Relu, 8).unwrap();
    net.set_masks(&[UnitMask::from_bits(&[1, 1, 1, 1, 1, 0, 0, 0, 0, 0])]).unwrap();
    let mut opt = OptimizerState::new(kind, &net.param_shapes());
    let mut ts = two_speed.map(|c| TwoSpeed::new(c).unwrap());
    for step in 0..steps {
        if step % 100 == 0 {
            // a birth every 100 steps re-registers slices
            let j = 5 + step / 100 % 5;
            net.mask_mut(0).set(j, true);
            if let Some(ts) = ts.as_mut() {
                ts.register(newborn_slices(&net, 0, j));
            }
        }
        let x = Tensor::from_vec(&[8, 6], (0..48).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let y: Vec<usize> = (0..8).map(|_| rng.gen_range(0..3)).collect();
        let (logits, cache) = net.forward(&x, Mode::Train, &mut rng).unwrap();
        let (_, g) = softmax_xent(&logits, &y).unwrap();
        let back = net.backward(&cache, &g, None).unwrap();
        let mut params = net.params_mut();
        let before = ts.as_ref().map(|t| t.capture(&params));
        opt.step(&mut params, &back.param_grads, 0.01).unwrap();
        if let (Some(t), Some(b)) = (ts.as_mut(), before) {
            t.finish_step(&mut params, b);
        }
    }
    net
}

#[test]
fn two_speed_with_unit_rate_is_bit_identical() {
    for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
        let base = train(kind, None, 500);
        let ts = train(kind, Some(TwoSpeedConfig { r: 1.0, window: 50 }), 500);
        for (a, b) in base.params().iter().zip(ts.params()) {
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let faster = train(kind, Some(TwoSpeedConfig { r: 5.0, window: 50 }), 500);
        assert_ne!(base, faster);
    }
}

#[test]
fn transplant_copies_donor_buffers_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let net = MaskedNetwork::mlp(4, &[6, 5], 3, Activation::Relu, 1).unwrap();
    let mut state = OptimizerState::new(OptimizerKind::Adam, &net.param_shapes());
    if let OptimizerState::Adam(s) = &mut state {
        for t in s.m.iter_mut().chain(s.v.iter_mut()) {
            for v in t.data_mut() {
                *v = rng.gen_range(0.0..1.0);
            }
        }
        s.step = 17;
    }
    for (h, newborn, donor) in [(0, 4, 1), (1, 0, 3)] {
        let original = state.clone();
        moment_transplant(&mut state, &net, h, newborn, donor).unwrap();
        let (OptimizerState::Adam(s), OptimizerState::Adam(o)) = (&state, &original) else { unreachable!() };
        for sl in newborn_slices(&net, h, donor) {
            let dst = sl.with_index(newborn);
            assert_eq!(dst.read(&s.m[sl.param]), sl.read(&s.m[sl.param]));
            assert_eq!(dst.read(&s.v[sl.param]), sl.read(&s.v[sl.param]));
            assert_eq!(sl.read(&s.m[sl.param]), sl.read(&o.m[sl.param]));
        }
        assert_eq!(s.step, 17);
    }
}
