use offroad_core::net::{Architecture, ConvSpec, ObservationBatch, TerrainNet};
use offroad_core::planner::{argmax_first, drive_episode, enumerate_rollouts, expected_return, rollout_returns, select_action, Driver};
use offroad_core::rng::stream;
use offroad_core::sim::generate_world;
use offroad_core::{InputMode, Profile, RunConfig};
use offroad_nn::Tensor;
use proptest::prelude::*;
use rand::Rng;

fn tiny(horizon: usize, classes: usize) -> Architecture {
    Architecture {
        num_classes: classes,
        horizon,
        history: 2,
        ground_hw: (8, 8),
        aerial_hw: (8, 8),
        conv: vec![ConvSpec { channels: 4, kernel: 3, stride: 2, padding: 0 }],
        hidden: 8,
        action_embed: 4,
        mode: InputMode::Fusion,
        dropout: 0.0,
    }
}

fn random_net(arch: &Architecture, seed: u64) -> (TerrainNet, ObservationBatch) {
    let mut net = TerrainNet::init(arch, seed).unwrap();
    let mut rng = stream(seed, "perturb", 0);
    for t in net.tensors_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
    }
    let obs = ObservationBatch {
        ground: Some(Tensor::from_fn(&[1, 8, 8, 6], |_| rng.random_range(0.0..1.0))),
        aerial: Some(Tensor::from_fn(&[1, 8, 8, 6], |_| rng.random_range(0.0..1.0))),
    };
    (net, obs)
}

#[test]
fn enumeration_matches_brute_force_argmax() {
    let values = [-1.0, 0.0, 1.0];
    for seed in 0..100u64 {
        let h = 1 + (seed as usize % 4);
        let (net, obs) = random_net(&tiny(h, 4), seed);
        let candidates = enumerate_rollouts(&values, h);
        let n = candidates.shape()[0];
        let sel = select_action(&net, &obs, candidates.clone(), None).unwrap();
        let mut rng = stream(0, "unused", 0);
        let brute: Vec<f64> = (0..n)
            .map(|k| {
                let a = Tensor::new(&[1, h], candidates.row(k).to_vec()).unwrap();
                let r = net.predict(&obs, &a, false, &mut rng).unwrap();
                expected_return(&r.item(0), 4).unwrap()
            })
            .collect();
        let best = argmax_first(&brute);
        assert_eq!(sel.best, best, "seed {seed}");
        assert_eq!(sel.action, candidates.row(best)[0]);
    }
}

#[test]
fn decreasing_affine_reward_keeps_choice() {
    for seed in 0..20u64 {
        let (net, obs) = random_net(&tiny(4, 3), seed);
        let mut rng = stream(seed, "cand", 0);
        let candidates = Tensor::from_fn(&[64, 4], |_| rng.random_range(-1.0..1.0));
        let sel = select_action(&net, &obs, candidates.clone(), None).unwrap();
        let mut r2 = stream(0, "unused", 0);
        let rollout = net.predict(&obs, &candidates, false, &mut r2).unwrap();
        let alt: Vec<f64> = (0..64)
            .map(|k| rollout.probs.iter().map(|p| p.row(k).iter().enumerate().map(|(j, q)| (5.0 - 2.5 * j as f64) * q).sum::<f64>()).sum())
            .collect();
        assert_eq!(argmax_first(&alt), sel.best);
    }
}

#[test]
fn batched_rows_are_normalized_and_bounded() {
    for seed in 0..20u64 {
        let (net, obs) = random_net(&tiny(4, 4), seed);
        let candidates = enumerate_rollouts(&[-1.0, 0.0, 1.0], 4);
        let mut rng = stream(0, "unused", 0);
        let rollout = net.predict(&ObservationBatch { ground: obs.ground.clone(), aerial: obs.aerial.clone() }, &Tensor::new(&[1, 4], candidates.row(0).to_vec()).unwrap(), false, &mut rng).unwrap();
        for p in &rollout.probs {
            assert!((p.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        let sel = select_action(&net, &obs, candidates, None).unwrap();
        assert!(sel.returns.iter().all(|&r| (0.0..=12.0).contains(&r)));
    }
}

#[test]
fn single_candidate_is_chosen() {
    let (net, obs) = random_net(&tiny(3, 4), 1);
    let sel = select_action(&net, &obs, Tensor::new(&[1, 3], vec![0.4, -0.2, 0.9]).unwrap(), None).unwrap();
    assert_eq!((sel.best, sel.action), (0, 0.4));
}

#[test]
fn veto_prefers_safe_candidates() {
    for seed in 0..10u64 {
        let (net, obs) = random_net(&tiny(3, 3), seed);
        let candidates = enumerate_rollouts(&[-1.0, 0.0, 1.0], 3);
        let mut rng = stream(0, "unused", 0);
        let rollout = net.predict(&ObservationBatch { ground: obs.ground.clone(), aerial: obs.aerial.clone() }, &Tensor::from_fn(&[27, 3], |i| candidates.data()[i]), false, &mut rng).unwrap();
        let thr = 0.4;
        let risky: Vec<bool> = (0..27).map(|k| rollout.probs.iter().any(|p| p.row(k)[2] > thr)).collect();
        let sel = select_action(&net, &obs, candidates, Some(thr)).unwrap();
        if risky.iter().any(|r| !r) {
            assert!(!risky[sel.best], "seed {seed}");
        }
    }
}

#[test]
fn mpc_replay_is_identical() {
    let mut cfg = RunConfig::profile(Profile::Desk);
    cfg.world.width_m = 20.0;
    cfg.world.height_m = 20.0;
    cfg.planner.candidates = 16;
    let world = generate_world(&cfg.world, 4).unwrap();
    let net = TerrainNet::init(&Architecture::from_config(&cfg), 2).unwrap();
    let run = || {
        let mut rng = stream(77, "drive", 0);
        drive_episode(&world, &Driver::Planner(&net), &cfg, (10.0, 10.0, 0.3), 12, &mut rng).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert!(!a.steps.is_empty());
    assert_eq!(a.to_csv().lines().count(), a.steps.len() + 1);
    let svg = a.to_svg(&world);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

fn distribution(c: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, c).prop_filter("non-zero mass", |v| v.iter().sum::<f64>() > 1e-3).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x / s).collect()
    })
}

fn prediction() -> impl Strategy<Value = (usize, Vec<Vec<f64>>)> {
    (2usize..6, 1usize..13).prop_flat_map(|(c, h)| (Just(c), prop::collection::vec(distribution(c), h)))
}

proptest! {
    #[test]
    fn expected_return_is_bounded((c, pred) in prediction()) {
        let v = expected_return(&pred, c).unwrap();
        let top = (pred.len() * (c - 1)) as f64;
        prop_assert!(v >= 0.0 && v <= top + 1e-9, "{v} outside [0, {top}]");
    }

    #[test]
    fn shifting_mass_to_smoother_class_never_lowers_return(
        (c, pred) in prediction(),
        pick in any::<prop::sample::Index>(),
        from in any::<prop::sample::Index>(),
        to in any::<prop::sample::Index>(),
        frac in 0.0f64..1.0,
    ) {
        let i = pick.index(pred.len());
        let (a, b) = (from.index(c), to.index(c));
        let (hi, lo) = (a.max(b), a.min(b));
        let mut shifted = pred.clone();
        let moved = shifted[i][hi] * frac;
        shifted[i][hi] -= moved;
        shifted[i][lo] += moved;
        prop_assert!(expected_return(&shifted, c).unwrap() >= expected_return(&pred, c).unwrap() - 1e-12);
    }

    #[test]
    fn batched_and_single_scoring_agree((c, pred) in prediction()) {
        let probs: Vec<Tensor> = pred.iter().map(|row| Tensor::new(&[1, c], row.clone()).unwrap()).collect();
        let batched = rollout_returns(&offroad_core::net::Rollout { probs }, c).unwrap();
        prop_assert_eq!(batched[0], expected_return(&pred, c).unwrap());
    }
}
