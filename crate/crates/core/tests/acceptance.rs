//! End-to-end acceptance checks, one test per criterion.
//!
//! Criteria 5 to 8 and 10 share one desk-profile pipeline run (two worlds,
//! collection, labeling, three trained models and a policy comparison on the
//! held-out world), built once on first use.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use offroad_core::collect::{build_dataset, collect_episodes, fit_labeler, label_records, split_dataset, SampleIndex};
use offroad_core::dataset::{Dataset, DatasetHeader};
use offroad_core::eval::{compare_policies, emit_report, ComparisonReport};
use offroad_core::labeling::{dft_magnitudes, feature, kmeans_fit, rms, spectral_histogram};
use offroad_core::net::{checkpoint_bytes, Architecture, ConvSpec, ObservationBatch, TerrainNet};
use offroad_core::planner::{argmax_first, enumerate_rollouts, expected_return, select_action, Driver};
use offroad_core::rng::stream;
use offroad_core::sim::{generate_world, synth_vibration, world_bytes, WorldMap};
use offroad_core::train::{horizon_accuracy, majority_baseline, train, AccuracyTable, CurvePoint};
use offroad_core::{InputMode, Profile, RunConfig, TerrainClass};
use offroad_nn::{
    conv2d, conv2d_backward, dense, dense_backward, lstm_step, lstm_step_backward, softmax_cross_entropy, ConvGeometry,
    LstmParams, Tensor,
};
use rand::Rng;

const FD_STEP: f64 = 1e-5;
const FD_TOLERANCE: f64 = 1e-4;
const GRADIENT_SEEDS: u64 = 20;
const BUDGET: Duration = Duration::from_secs(30 * 60);

// ---------------------------------------------------------------------------
// Shared desk pipeline
// ---------------------------------------------------------------------------

struct Trained {
    mode: InputMode,
    net: TerrainNet,
    curve: Vec<CurvePoint>,
    accuracy: AccuracyTable,
}

struct Pipeline {
    cfg: RunConfig,
    models: Vec<Trained>,
    majority: AccuracyTable,
    report: ComparisonReport,
    elapsed: Duration,
}

impl Pipeline {
    fn model(&self, mode: InputMode) -> &Trained {
        self.models.iter().find(|m| m.mode == mode).unwrap()
    }

    fn summary(&self, policy: &str) -> &offroad_core::eval::Summary {
        &self.report.result(policy, "test").unwrap().summary
    }
}

fn run_pipeline() -> Pipeline {
    let start = Instant::now();
    let cfg = RunConfig::profile(Profile::Desk);
    let train_world = generate_world(&cfg.world, cfg.seeds.world_train).unwrap();
    let test_world = generate_world(&cfg.world, cfg.seeds.world_test).unwrap();
    let episodes = collect_episodes(&train_world, &cfg, cfg.seeds.collect).unwrap();
    let header = DatasetHeader::from_config(&cfg, cfg.seeds.world_train, cfg.seeds.collect, cfg.collect.episodes);
    let mut ds = Dataset::from_episodes(header, episodes);
    let labeler = fit_labeler(&ds.records, &cfg, cfg.seeds.labeling).unwrap();
    label_records(&mut ds.records, &labeler, &cfg);
    let samples = build_dataset(&ds.records, cfg.model.history, cfg.model.horizon, cfg.collect.sampling, cfg.collect.sample_spacing_m);
    let (tr, va) = split_dataset(&samples, cfg.train.validation_fraction, cfg.seeds.train);
    let majority = majority_baseline(&ds.label_batch(&va, cfg.model.horizon).unwrap(), cfg.world.num_classes).unwrap();

    let mut models = Vec::new();
    for mode in [InputMode::Fusion, InputMode::GroundOnly, InputMode::AirOnly] {
        let mut arch = Architecture::from_config(&cfg);
        arch.mode = mode;
        let net = TerrainNet::init(&arch, cfg.seeds.train).unwrap();
        let out = train(net, None, &ds, &tr, &va, &cfg.train, cfg.seeds.train).unwrap();
        let accuracy = horizon_accuracy(&out.net, &ds, &va).unwrap();
        models.push(Trained { mode, net: out.net, curve: out.curve, accuracy });
    }

    let mut policies: Vec<(String, Driver)> = models.iter().map(|m| (m.mode.to_string(), Driver::Planner(&m.net))).collect();
    policies.push(("random".into(), Driver::Random));
    let report = compare_policies(&policies, &[("test".into(), &test_world)], &cfg, cfg.eval.episodes, cfg.seeds.eval).unwrap();
    drop(policies);
    let p = Pipeline { cfg, models, majority, report, elapsed: start.elapsed() };
    for r in &p.report.results {
        let s = &r.summary;
        eprintln!("{:12} return {:8.1} ± {:6.1} collisions {:.2} pct {:?}", r.policy, s.mean_return, s.std_return, s.collision_rate, s.class_percentages);
    }
    for m in &p.models {
        eprintln!("{:12} accuracy short {:.4} long {:.4}", m.mode, m.accuracy.short, m.accuracy.long);
    }
    eprintln!("pipeline {:.1} s", p.elapsed.as_secs_f64());
    p
}

fn pipeline() -> &'static Pipeline {
    static P: OnceLock<Pipeline> = OnceLock::new();
    P.get_or_init(run_pipeline)
}

// ---------------------------------------------------------------------------
// 1. Gradient suite
// ---------------------------------------------------------------------------

fn random(shape: &[usize], rng: &mut impl Rng, scale: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale))
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Worst relative error between `analytic` and central differences of `f`
/// over every coordinate of `x`.
fn fd_check(x: &Tensor, analytic: &Tensor, mut f: impl FnMut(&Tensor) -> f64) -> f64 {
    let mut probe = x.clone();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + FD_STEP;
        let up = f(&probe);
        probe.data_mut()[i] = orig - FD_STEP;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        worst = worst.max(rel_err(analytic.data()[i], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

fn conv_error(seed: u64) -> f64 {
    let mut rng = stream(seed, "accept-conv", 0);
    let geom = ConvGeometry { stride: 1 + seed as usize % 2, padding: seed as usize % 2 };
    let x = random(&[2, 6, 6, 2], &mut rng, 1.0);
    let k = random(&[3, 3, 2, 3], &mut rng, 0.5);
    let b = random(&[3], &mut rng, 0.5);
    let proj = random(conv2d(&x, &k, &b, geom).unwrap().shape(), &mut rng, 1.0);
    let g = conv2d_backward(&x, &k, geom, &proj, true).unwrap();
    fd_check(&k, &g.param_grads[0], |v| dot(&conv2d(&x, v, &b, geom).unwrap(), &proj))
        .max(fd_check(&b, &g.param_grads[1], |v| dot(&conv2d(&x, &k, v, geom).unwrap(), &proj)))
        .max(fd_check(&x, g.input_grad.as_ref().unwrap(), |v| dot(&conv2d(v, &k, &b, geom).unwrap(), &proj)))
}

fn dense_error(seed: u64) -> f64 {
    let mut rng = stream(seed, "accept-dense", 0);
    let x = random(&[3, 5], &mut rng, 1.0);
    let w = random(&[5, 4], &mut rng, 1.0);
    let b = random(&[4], &mut rng, 1.0);
    let proj = random(&[3, 4], &mut rng, 1.0);
    let g = dense_backward(&x, &w, &proj, true).unwrap();
    fd_check(&w, &g.param_grads[0], |v| dot(&dense(&x, v, &b).unwrap(), &proj))
        .max(fd_check(&b, &g.param_grads[1], |v| dot(&dense(&x, &w, v).unwrap(), &proj)))
        .max(fd_check(&x, g.input_grad.as_ref().unwrap(), |v| dot(&dense(v, &w, &b).unwrap(), &proj)))
}

fn lstm_error(seed: u64) -> f64 {
    let mut rng = stream(seed, "accept-lstm", 0);
    let (din, dh, rows) = (3, 4, 2);
    let p = LstmParams {
        w_input: random(&[din, 4 * dh], &mut rng, 0.8),
        w_hidden: random(&[dh, 4 * dh], &mut rng, 0.8),
        bias: random(&[4 * dh], &mut rng, 0.5),
    };
    let x = random(&[rows, din], &mut rng, 1.0);
    let h = random(&[rows, dh], &mut rng, 0.9);
    let c = random(&[rows, dh], &mut rng, 1.5);
    let (ph, pc) = (random(&[rows, dh], &mut rng, 1.0), random(&[rows, dh], &mut rng, 1.0));
    let score = |x: &Tensor, h: &Tensor, c: &Tensor, p: &LstmParams| {
        let (hn, cn, _) = lstm_step(x, h, c, p).unwrap();
        dot(&hn, &ph) + dot(&cn, &pc)
    };
    let (_, _, cache) = lstm_step(&x, &h, &c, &p).unwrap();
    let g = lstm_step_backward(&cache, &p, &ph, &pc).unwrap();
    [
        fd_check(&x, &g.x, |v| score(v, &h, &c, &p)),
        fd_check(&h, &g.h, |v| score(&x, v, &c, &p)),
        fd_check(&c, &g.c, |v| score(&x, &h, v, &p)),
        fd_check(&p.w_input, &g.params.w_input, |v| score(&x, &h, &c, &LstmParams { w_input: v.clone(), ..p.clone() })),
        fd_check(&p.w_hidden, &g.params.w_hidden, |v| score(&x, &h, &c, &LstmParams { w_hidden: v.clone(), ..p.clone() })),
        fd_check(&p.bias, &g.params.bias, |v| score(&x, &h, &c, &LstmParams { bias: v.clone(), ..p.clone() })),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

fn softmax_error(seed: u64) -> f64 {
    let mut rng = stream(seed, "accept-softmax", 0);
    let classes = 2 + seed as usize % 4;
    let label = rng.random_range(0..classes);
    let z = random(&[classes], &mut rng, 3.0);
    let ce = softmax_cross_entropy(&z, label).unwrap();
    fd_check(&z, &ce.grad_logits, |v| softmax_cross_entropy(v, label).unwrap().loss)
}

fn tiny_arch(mode: InputMode, horizon: usize, classes: usize) -> Architecture {
    Architecture {
        num_classes: classes,
        horizon,
        history: 1,
        ground_hw: (8, 8),
        aerial_hw: (8, 8),
        conv: vec![
            ConvSpec { channels: 3, kernel: 3, stride: 2, padding: 0 },
            ConvSpec { channels: 2, kernel: 2, stride: 1, padding: 0 },
        ],
        hidden: 8,
        action_embed: 4,
        mode,
        dropout: 0.0,
    }
}

fn batch_loss_error(seed: u64) -> f64 {
    let mode = [InputMode::Fusion, InputMode::GroundOnly, InputMode::AirOnly][seed as usize % 3];
    let mut net = TerrainNet::init(&tiny_arch(mode, 2, 3), seed).unwrap();
    let mut rng = stream(seed, "accept-net", 0);
    for t in net.tensors_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    let obs = ObservationBatch {
        ground: Some(Tensor::from_fn(&[2, 8, 8, 3], |_| rng.random_range(0.0..1.0))),
        aerial: Some(Tensor::from_fn(&[2, 8, 8, 3], |_| rng.random_range(0.0..1.0))),
    };
    let actions = random(&[2, 2], &mut rng, 1.0);
    let labels: Vec<Vec<usize>> = (0..2).map(|_| (0..2).map(|_| rng.random_range(0..3)).collect()).collect();
    let l2 = 1e-3;
    let analytic: Vec<Tensor> = net.batch_loss(&obs, &actions, &labels, l2, false, &mut rng).unwrap().grads.tensors().into_iter().cloned().collect();
    let mut worst: f64 = 0.0;
    for (ti, grad) in analytic.iter().enumerate() {
        for i in 0..grad.len() {
            let orig = net.tensors()[ti].data()[i];
            let mut loss_at = |v: f64| {
                net.tensors_mut()[ti].data_mut()[i] = v;
                net.batch_loss(&obs, &actions, &labels, l2, false, &mut rng).unwrap().loss
            };
            let (up, down) = (loss_at(orig + FD_STEP), loss_at(orig - FD_STEP));
            net.tensors_mut()[ti].data_mut()[i] = orig;
            worst = worst.max(rel_err(grad.data()[i], (up - down) / (2.0 * FD_STEP)));
        }
    }
    worst
}

#[test]
fn criterion_01_gradient_suite() {
    let start = Instant::now();
    type Check = (&'static str, fn(u64) -> f64);
    let checks: [Check; 5] = [
        ("conv2d", conv_error),
        ("dense", dense_error),
        ("lstm_step", lstm_error),
        ("softmax_cross_entropy", softmax_error),
        ("batch_loss", batch_loss_error),
    ];
    for (name, check) in checks {
        for seed in 0..GRADIENT_SEEDS {
            let err = check(seed);
            assert!(err < FD_TOLERANCE, "{name} seed {seed}: relative error {err}");
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(120), "gradient suite took {elapsed:?}");
}

// ---------------------------------------------------------------------------
// 2. Planner oracle
// ---------------------------------------------------------------------------

fn perturbed_net(arch: &Architecture, seed: u64) -> (TerrainNet, ObservationBatch) {
    let mut net = TerrainNet::init(arch, seed).unwrap();
    let mut rng = stream(seed, "accept-perturb", 0);
    for t in net.tensors_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
    }
    let c = 3 * arch.history;
    let obs = ObservationBatch {
        ground: Some(Tensor::from_fn(&[1, 8, 8, c], |_| rng.random_range(0.0..1.0))),
        aerial: Some(Tensor::from_fn(&[1, 8, 8, c], |_| rng.random_range(0.0..1.0))),
    };
    (net, obs)
}

#[test]
fn criterion_02_planner_oracle() {
    let h = 4;
    let candidates = enumerate_rollouts(&[-1.0, 0.0, 1.0], h);
    assert_eq!(candidates.shape(), &[81, h]);
    for seed in 0..100u64 {
        let (net, obs) = perturbed_net(&tiny_arch(InputMode::Fusion, h, 4), 500 + seed);
        let sel = select_action(&net, &obs, candidates.clone(), None).unwrap();
        let mut rng = stream(0, "unused", 0);
        let brute: Vec<f64> = (0..81)
            .map(|k| {
                let a = Tensor::new(&[1, h], candidates.row(k).to_vec()).unwrap();
                expected_return(&net.predict(&obs, &a, false, &mut rng).unwrap().item(0), 4).unwrap()
            })
            .collect();
        let best = argmax_first(&brute);
        assert_eq!(sel.best, best, "seed {seed}");
        assert_eq!(sel.action, candidates.row(best)[0], "seed {seed}");
        assert_eq!(sel.returns[best], brute[best], "seed {seed}");
    }
}

// ---------------------------------------------------------------------------
// 3. Normalization and bounds
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_normalization_and_bounds() {
    for seed in 0..50u64 {
        let h = 1 + seed as usize % 12;
        let c = 2 + seed as usize % 4;
        let (net, obs) = perturbed_net(&tiny_arch(InputMode::Fusion, h, c), 900 + seed);
        let mut rng = stream(seed, "accept-bounds", 0);
        let actions = random(&[16, h], &mut rng, 1.0);
        let tiled = ObservationBatch {
            ground: Some(Tensor::from_fn(&[16, 8, 8, 3], |i| obs.ground.as_ref().unwrap().data()[i % (8 * 8 * 3)])),
            aerial: Some(Tensor::from_fn(&[16, 8, 8, 3], |i| obs.aerial.as_ref().unwrap().data()[i % (8 * 8 * 3)])),
        };
        let r = net.predict(&tiled, &actions, false, &mut rng).unwrap();
        for b in 0..16 {
            let item = r.item(b);
            for row in &item {
                assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
                assert!(row.iter().all(|&p| p >= 0.0));
            }
            let v = expected_return(&item, c).unwrap();
            assert!(v >= 0.0 && v <= (h * (c - 1)) as f64, "{v}");
        }
    }
    let one_hot = |k: usize| -> Vec<f64> { (0..4).map(|j| if j == k { 1.0 } else { 0.0 }).collect() };
    assert_eq!(expected_return(&vec![one_hot(0); 12], 4).unwrap(), 36.0);
    assert_eq!(expected_return(&vec![vec![0.25; 4]; 12], 4).unwrap(), 18.0);
    assert_eq!(expected_return(&vec![one_hot(3); 12], 4).unwrap(), 0.0);
}

// ---------------------------------------------------------------------------
// 4. Labeling fidelity
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_labeling_fidelity() {
    let cfg = RunConfig::profile(Profile::Desk);
    assert!((cfg.vehicle.speed_mps * 3.6 - 6.0).abs() < 1e-12);
    let mut rng = stream(41, "accept-corpus", 0);
    let (mut features, mut truth) = (Vec::new(), Vec::new());
    for i in 0..3000 {
        let class = i % 3;
        let w = synth_vibration(TerrainClass(class as u8), cfg.vehicle.speed_mps, &cfg.imu, &mut rng);
        assert_eq!(w.len(), 20);
        let direct: f64 = dft_magnitudes(&w, cfg.imu.rate_hz).iter().map(|p| p.1).sum();
        let binned: f64 = spectral_histogram(&w, cfg.imu.rate_hz).iter().sum();
        assert!((binned - direct).abs() <= 1e-12 * direct, "mass {binned} vs {direct}");
        features.push(feature(&w, cfg.imu.rate_hz).to_vec());
        truth.push(class);
    }
    let model = kmeans_fit(&features, 3, cfg.seeds.labeling, cfg.labeling.max_iter, cfg.labeling.restarts).unwrap();
    let hits = features.iter().zip(&truth).filter(|(f, &t)| model.assign_class(f).index() == t).count();
    let agreement = hits as f64 / truth.len() as f64;
    assert!(agreement >= 0.9, "agreement {agreement}");

    for amplitude in [0.3, 1.0, 2.5] {
        for freq in [6.0, 12.0, 21.0] {
            let w: Vec<f64> = (0..20).map(|n| amplitude * (std::f64::consts::TAU * freq * n as f64 / 60.0 + 0.3).sin()).collect();
            let expected = amplitude / 2f64.sqrt();
            assert!((rms(&w) - expected).abs() <= 0.05 * expected, "A {amplitude} f {freq}: {}", rms(&w));
        }
    }
}

// ---------------------------------------------------------------------------
// 5 to 8 and 10. Desk pipeline
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_ablation_ordering() {
    let p = pipeline();
    assert!(p.cfg.eval.episodes >= 30);
    let mean = |policy: &str| p.summary(policy).mean_return;
    let (f, g, a, r) = (mean("fusion"), mean("ground_only"), mean("air_only"), mean("random"));
    assert!(f > g && g > a && a > r, "returns fusion {f}, ground_only {g}, air_only {a}, random {r}");
    let sig = p.report.significance.iter().find(|s| s.world == "test").unwrap();
    assert_eq!((sig.policy_a.as_str(), sig.policy_b.as_str()), ("fusion", "ground_only"));
    assert!(sig.test.p_two_sided < 0.05, "rank-sum p {}", sig.test.p_two_sided);
}

/// Share of steps on non-smooth, non-obstacle terrain, in percent.
fn rough_share(pct: &[f64]) -> f64 {
    pct[1..pct.len() - 1].iter().sum()
}

#[test]
fn criterion_06_terrain_quality() {
    let p = pipeline();
    let fusion = &p.summary("fusion").class_percentages;
    let ground = &p.summary("ground_only").class_percentages;
    assert!(fusion[0] >= 85.0, "fusion smooth share {}", fusion[0]);
    assert!(rough_share(fusion) <= 0.5 * rough_share(ground), "rough share fusion {} vs ground_only {}", rough_share(fusion), rough_share(ground));
}

#[test]
fn criterion_07_horizon_accuracy_trend() {
    let p = pipeline();
    let (f, g, a) = (&p.model(InputMode::Fusion).accuracy, &p.model(InputMode::GroundOnly).accuracy, &p.model(InputMode::AirOnly).accuracy);
    let margin = 0.01;
    assert!(g.short >= a.short + margin, "short: ground_only {} vs air_only {}", g.short, a.short);
    assert!(f.short >= g.short.max(a.short) + margin, "short: fusion {} vs {} / {}", f.short, g.short, a.short);
    assert!(f.long >= g.long.max(a.long) + margin, "long: fusion {} vs {} / {}", f.long, g.long, a.long);
}

#[test]
fn criterion_08_training_sanity() {
    let p = pipeline();
    let m = p.model(p.cfg.model.mode);
    let initial = m.curve.first().unwrap();
    assert_eq!(initial.step, 0);
    let best = m.curve.iter().filter(|c| c.step <= 8000).map(|c| c.val_cross_entropy).fold(f64::INFINITY, f64::min);
    assert!(best <= 0.7 * initial.val_cross_entropy, "cross-entropy {} -> {best}", initial.val_cross_entropy);
    let (acc, base) = (m.accuracy.per_step[0], p.majority.per_step[0]);
    assert!(acc >= base + 0.10, "horizon-1 accuracy {acc} vs majority {base}");
}

#[test]
fn criterion_10_desk_budget() {
    let p = pipeline();
    assert!(p.elapsed < BUDGET, "pipeline took {:?}", p.elapsed);
}

// ---------------------------------------------------------------------------
// 9. Determinism
// ---------------------------------------------------------------------------

/// gen-world, collect, label, train 100 steps and evaluate 3 episodes,
/// returning every artifact's bytes.
fn small_pipeline(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut cfg = RunConfig::profile(Profile::Desk);
    cfg.collect.episodes = 12;
    cfg.train.steps = 100;
    cfg.train.eval_interval = 50;
    cfg.eval.episodes = 3;
    let world = generate_world(&cfg.world, cfg.seeds.world_train).unwrap();
    let test_world = generate_world(&cfg.world, cfg.seeds.world_test).unwrap();
    let episodes = collect_episodes(&world, &cfg, cfg.seeds.collect).unwrap();
    let mut ds = Dataset::from_episodes(DatasetHeader::from_config(&cfg, cfg.seeds.world_train, cfg.seeds.collect, cfg.collect.episodes), episodes);
    let raw = ds.to_bytes().unwrap();
    let labeler = fit_labeler(&ds.records, &cfg, cfg.seeds.labeling).unwrap();
    label_records(&mut ds.records, &labeler, &cfg);
    ds.header.labeling_seed = Some(cfg.seeds.labeling);
    let samples: Vec<SampleIndex> = build_dataset(&ds.records, cfg.model.history, cfg.model.horizon, cfg.collect.sampling, cfg.collect.sample_spacing_m);
    let (tr, va) = split_dataset(&samples, cfg.train.validation_fraction, cfg.seeds.train);
    let net = TerrainNet::init(&Architecture::from_config(&cfg), cfg.seeds.train).unwrap();
    let out = train(net, None, &ds, &tr, &va, &cfg.train, cfg.seeds.train).unwrap();
    let worlds: Vec<(String, &WorldMap)> = vec![("test".into(), &test_world)];
    let policies = vec![("fusion".to_string(), Driver::Planner(&out.net)), ("random".to_string(), Driver::Random)];
    let report = compare_policies(&policies, &worlds, &cfg, cfg.eval.episodes, cfg.seeds.eval).unwrap();
    let mut artifacts = vec![
        ("world".to_string(), world_bytes(&world)),
        ("raw".to_string(), raw),
        ("labels".to_string(), labeler.to_text().into_bytes()),
        ("labeled".to_string(), ds.to_bytes().unwrap()),
        ("checkpoint".to_string(), checkpoint_bytes(&out.net, Some(&out.optimizer))),
    ];
    for path in emit_report(&report, &worlds, dir).unwrap() {
        artifacts.push((path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).unwrap()));
    }
    artifacts
}

#[test]
fn criterion_09_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_pipeline(&dir.path().join("a"));
    let b = small_pipeline(&dir.path().join("b"));
    assert_eq!(a.len(), b.len());
    for ((na, ba), (nb, bb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        assert!(ba == bb, "artifact {na} differs between runs");
    }
}
