//! Runs the desk pipeline in memory and prints timings and metrics:
//! world generation, collection, labeling, training of the three input
//! modes, and the policy comparison on the held-out world.
//!
//! `cargo run --release -p offroad-core --example desk_pipeline [steps]`

use std::time::Instant;

use offroad_core::collect::{build_dataset, collect_episodes, fit_labeler, label_records, split_dataset};
use offroad_core::dataset::{Dataset, DatasetHeader};
use offroad_core::eval::compare_policies;
use offroad_core::net::{Architecture, TerrainNet};
use offroad_core::planner::Driver;
use offroad_core::sim::generate_world;
use offroad_core::train::{majority_baseline, train};
use offroad_core::{InputMode, Profile, RunConfig};

fn main() -> offroad_core::Result<()> {
    let mut cfg = RunConfig::profile(Profile::Desk);
    if let Some(steps) = std::env::args().nth(1) {
        cfg.train.steps = steps.parse().expect("step count");
    }
    let t0 = Instant::now();
    let world = generate_world(&cfg.world, cfg.seeds.world_train)?;
    let test_world = generate_world(&cfg.world, cfg.seeds.world_test)?;
    println!("worlds {:.1}s", t0.elapsed().as_secs_f64());

    let t = Instant::now();
    let episodes = collect_episodes(&world, &cfg, cfg.seeds.collect)?;
    let mut ds = Dataset::from_episodes(DatasetHeader::from_config(&cfg, cfg.seeds.world_train, cfg.seeds.collect, cfg.collect.episodes), episodes);
    println!("collect {:.1}s, {} records", t.elapsed().as_secs_f64(), ds.records.len());

    let model = fit_labeler(&ds.records, &cfg, cfg.seeds.labeling)?;
    label_records(&mut ds.records, &model, &cfg);
    let agree = ds.records.iter().filter(|r| r.label == Some(r.true_class)).count();
    println!("label agreement {:.3}", agree as f64 / ds.records.len() as f64);
    let mut counts = vec![0; cfg.world.num_classes];
    for r in &ds.records {
        counts[r.label.unwrap().index()] += 1;
    }
    println!("label counts {counts:?}");

    let samples = build_dataset(&ds.records, cfg.model.history, cfg.model.horizon, cfg.collect.sampling, cfg.collect.sample_spacing_m);
    let (tr, va) = split_dataset(&samples, cfg.train.validation_fraction, cfg.seeds.train);
    println!("samples {} train {} val {}", samples.len(), tr.len(), va.len());
    let labels = ds.label_batch(&va, cfg.model.horizon)?;
    let maj = majority_baseline(&labels, cfg.world.num_classes)?;
    println!("majority h1 {:.3} short {:.3} long {:.3}", maj.per_step[0], maj.short, maj.long);

    let mut nets = Vec::new();
    for mode in [InputMode::Fusion, InputMode::GroundOnly, InputMode::AirOnly] {
        let t = Instant::now();
        let mut arch = Architecture::from_config(&cfg);
        arch.mode = mode;
        let net = TerrainNet::init(&arch, cfg.seeds.train)?;
        let out = train(net, None, &ds, &tr, &va, &cfg.train, cfg.seeds.train)?;
        let first = &out.curve[0];
        let last = out.curve.last().unwrap();
        println!(
            "{mode}: {:.1}s ce {:.3} -> {:.3}  h1 {:.3} short {:.3} long {:.3}",
            t.elapsed().as_secs_f64(),
            first.val_cross_entropy,
            last.val_cross_entropy,
            last.val_accuracy.per_step[0],
            last.val_accuracy.short,
            last.val_accuracy.long
        );
        for p in &out.curve {
            println!("  step {} train {:?} val {:.3} short {:.3}", p.step, p.train_loss, p.val_cross_entropy, p.val_accuracy.short);
        }
        nets.push((mode, out.net));
    }

    let t = Instant::now();
    let mut policies: Vec<(String, Driver)> = nets.iter().map(|(m, n)| (m.to_string(), Driver::Planner(n))).collect();
    policies.push(("random".into(), Driver::Random));
    let report = compare_policies(&policies, &[("test".into(), &test_world)], &cfg, cfg.eval.episodes, cfg.seeds.eval)?;
    println!("eval {:.1}s", t.elapsed().as_secs_f64());
    for r in &report.results {
        let s = &r.summary;
        println!(
            "{:12} return {:8.1} ± {:6.1} steps {:6.1} coll {:.2} pct {:?}",
            r.policy, s.mean_return, s.std_return, s.mean_steps, s.collision_rate,
            s.class_percentages.iter().map(|p| (p * 10.0).round() / 10.0).collect::<Vec<_>>()
        );
    }
    for g in &report.significance {
        println!("{} vs {}: p {:.4} (greater {:.4})", g.policy_a, g.policy_b, g.test.p_two_sided, g.test.p_greater);
    }
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
    Ok(())
}
