//! Closed-loop policy batteries, summary statistics, ablation comparison
//! and report files.
//!
//! Report files written by [`emit_report`]:
//!
//! ```text
//! report.csv        policy,world,metric,value (one row per policy × world × metric)
//! significance.csv  world,policy_a,policy_b,n_a,n_b,u,z,p_two_sided,p_greater
//! accuracy.csv      policy,bucket,value (only when accuracies were attached)
//! traces.csv        policy,world,episode,step,x,y,traversed_class,collided
//! terrain.svg       terrain-percentage bars per policy and world
//! traj_<policy>_<world>.svg  trajectories drawn over the world
//! ```
//!
//! The SVG files are rendered from the CSV files alone.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::collect::sample_spawn;
use crate::config::RunConfig;
use crate::error::{invalid, CoreError, Result};
use crate::planner::{drive_episode, Driver, EpisodeTrace};
use crate::rng::stream;
use crate::sim::WorldMap;
use crate::svg;
use crate::terrain::{reward_map, TerrainClass};
use crate::train::AccuracyTable;

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    pub episode_return: f64,
    pub steps: usize,
    pub collided: bool,
    pub class_counts: Vec<usize>,
}

impl EpisodeStats {
    /// Return and class counts from the simulator classes of a trace; a
    /// collision step counts as one obstacle step.
    pub fn from_trace(trace: &EpisodeTrace, num_classes: usize) -> Result<Self> {
        let mut class_counts = vec![0; num_classes];
        let mut episode_return = 0.0;
        for t in &trace.steps {
            episode_return += reward_map(t.traversed_class, num_classes)?;
            class_counts[t.traversed_class.index()] += 1;
        }
        Ok(Self {
            episode_return,
            steps: trace.steps.len(),
            collided: trace.steps.last().is_some_and(|t| t.collided),
            class_counts,
        })
    }
}

/// `n` episodes, each with its spawn pose and planner stream derived from
/// `(battery_seed, index)`, so every driver faces the same start poses.
pub fn run_policy_battery(
    world: &WorldMap,
    driver: &Driver,
    cfg: &RunConfig,
    battery_seed: u64,
    n: usize,
) -> Result<(Vec<EpisodeStats>, Vec<EpisodeTrace>)> {
    if n == 0 {
        return Err(invalid("a battery needs at least one episode"));
    }
    let runs: Vec<(EpisodeStats, EpisodeTrace)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut spawn_rng = stream(battery_seed, "eval-spawn", i as u64);
            let start = sample_spawn(world, cfg.eval.spawn_clearance_m, &mut spawn_rng)?;
            let mut rng = stream(battery_seed, "eval-episode", i as u64);
            let trace = drive_episode(world, driver, cfg, start, cfg.eval.max_steps, &mut rng)?;
            Ok((EpisodeStats::from_trace(&trace, world.num_classes())?, trace))
        })
        .collect::<Result<_>>()?;
    Ok(runs.into_iter().unzip())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub episodes: usize,
    pub mean_return: f64,
    /// Population standard deviation.
    pub std_return: f64,
    pub mean_steps: f64,
    pub collision_rate: f64,
    /// Share of pooled steps per class, in percent.
    pub class_percentages: Vec<f64>,
}

pub fn summarize(stats: &[EpisodeStats]) -> Result<Summary> {
    if stats.is_empty() {
        return Err(invalid("no episodes to summarize"));
    }
    let n = stats.len() as f64;
    let mean = stats.iter().map(|s| s.episode_return).sum::<f64>() / n;
    let var = stats.iter().map(|s| (s.episode_return - mean).powi(2)).sum::<f64>() / n;
    let c = stats[0].class_counts.len();
    let mut pooled = vec![0usize; c];
    for s in stats {
        for (p, k) in pooled.iter_mut().zip(&s.class_counts) {
            *p += k;
        }
    }
    let total: usize = pooled.iter().sum();
    Ok(Summary {
        episodes: stats.len(),
        mean_return: mean,
        std_return: var.sqrt(),
        mean_steps: stats.iter().map(|s| s.steps as f64).sum::<f64>() / n,
        collision_rate: stats.iter().filter(|s| s.collided).count() as f64 / n,
        class_percentages: pooled.iter().map(|&k| if total == 0 { 0.0 } else { 100.0 * k as f64 / total as f64 }).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankSum {
    pub n_a: usize,
    pub n_b: usize,
    /// Mann-Whitney U of sample `a`.
    pub u: f64,
    pub z: f64,
    pub p_two_sided: f64,
    /// One-sided p for `a` tending to exceed `b`.
    pub p_greater: f64,
}

/// Wilcoxon rank-sum test with mid-ranks and the normal approximation,
/// tie-corrected.
pub fn rank_sum_test(a: &[f64], b: &[f64]) -> Result<RankSum> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("rank-sum test needs two non-empty samples"));
    }
    let mut all: Vec<(f64, bool)> = a.iter().map(|&v| (v, true)).chain(b.iter().map(|&v| (v, false))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = all.len();
    let (mut rank_a, mut tie_term) = (0.0, 0.0);
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        rank_a += mid * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let u = rank_a - na * (na + 1.0) / 2.0;
    let mean = na * nb / 2.0;
    let nn = na + nb;
    let var = na * nb / 12.0 * ((nn + 1.0) - tie_term / (nn * (nn - 1.0)).max(1.0));
    let normal = Normal::standard();
    let (z, p_two, p_greater) = if var > 0.0 {
        let z = (u - mean) / var.sqrt();
        (z, (2.0 * normal.cdf(-z.abs())).min(1.0), normal.cdf(-z))
    } else {
        (0.0, 1.0, 0.5)
    };
    Ok(RankSum {
        n_a: a.len(),
        n_b: b.len(),
        u,
        z,
        p_two_sided: p_two,
        p_greater,
    })
}

#[derive(Debug, Clone)]
pub struct BatteryResult {
    pub policy: String,
    pub world: String,
    pub stats: Vec<EpisodeStats>,
    pub summary: Summary,
    pub traces: Vec<EpisodeTrace>,
}

#[derive(Debug, Clone)]
pub struct Significance {
    pub world: String,
    pub policy_a: String,
    pub policy_b: String,
    pub test: RankSum,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub results: Vec<BatteryResult>,
    pub significance: Vec<Significance>,
    pub accuracy: Vec<(String, AccuracyTable)>,
    pub config_text: String,
}

impl ComparisonReport {
    pub fn result(&self, policy: &str, world: &str) -> Option<&BatteryResult> {
        self.results.iter().find(|r| r.policy == policy && r.world == world)
    }
}

/// Runs every policy on every world with the same battery seed, then tests
/// the first planner against the second on each world.
pub fn compare_policies(
    policies: &[(String, Driver)],
    worlds: &[(String, &WorldMap)],
    cfg: &RunConfig,
    n: usize,
    battery_seed: u64,
) -> Result<ComparisonReport> {
    let nets: Vec<_> = policies
        .iter()
        .filter_map(|(_, d)| match d {
            Driver::Planner(net) => Some(*net),
            Driver::Random => None,
        })
        .collect();
    if nets.windows(2).any(|w| !w[0].arch.same_family(&w[1].arch)) {
        return Err(invalid("compared models must share classes, horizon and history"));
    }
    let mut results = Vec::new();
    for (wname, world) in worlds {
        for (pname, driver) in policies {
            let (stats, traces) = run_policy_battery(world, driver, cfg, battery_seed, n)?;
            results.push(BatteryResult {
                policy: pname.clone(),
                world: wname.clone(),
                summary: summarize(&stats)?,
                stats,
                traces,
            });
        }
    }
    let planned: Vec<&String> = policies.iter().filter(|(_, d)| matches!(d, Driver::Planner(_))).map(|(p, _)| p).collect();
    let mut significance = Vec::new();
    if planned.len() >= 2 {
        for (wname, _) in worlds {
            let returns = |p: &String| -> Vec<f64> {
                results.iter().find(|r| &r.policy == p && &r.world == wname).map(|r| r.stats.iter().map(|s| s.episode_return).collect()).unwrap_or_default()
            };
            significance.push(Significance {
                world: wname.clone(),
                policy_a: planned[0].clone(),
                policy_b: planned[1].clone(),
                test: rank_sum_test(&returns(planned[0]), &returns(planned[1]))?,
            });
        }
    }
    Ok(ComparisonReport {
        results,
        significance,
        accuracy: Vec::new(),
        config_text: cfg.to_text(),
    })
}

/// Metric names in row order for a given class count.
pub fn metric_names(num_classes: usize) -> Vec<String> {
    let mut m: Vec<String> = ["mean_return", "std_return", "mean_steps", "collision_rate"].iter().map(|s| s.to_string()).collect();
    m.extend((0..num_classes).map(|c| format!("pct_class_{c}")));
    m
}

pub fn report_csv(report: &ComparisonReport) -> String {
    let mut s = String::from("policy,world,metric,value\n");
    for r in &report.results {
        let sm = &r.summary;
        let mut values = vec![sm.mean_return, sm.std_return, sm.mean_steps, sm.collision_rate];
        values.extend(&sm.class_percentages);
        for (m, v) in metric_names(sm.class_percentages.len()).iter().zip(values) {
            let _ = writeln!(s, "{},{},{m},{v:.6}", r.policy, r.world);
        }
    }
    s
}

fn significance_csv(report: &ComparisonReport) -> String {
    let mut s = String::from("world,policy_a,policy_b,n_a,n_b,u,z,p_two_sided,p_greater\n");
    for g in &report.significance {
        let t = &g.test;
        let _ = writeln!(s, "{},{},{},{},{},{:.3},{:.6},{:.6e},{:.6e}", g.world, g.policy_a, g.policy_b, t.n_a, t.n_b, t.u, t.z, t.p_two_sided, t.p_greater);
    }
    s
}

fn accuracy_csv(report: &ComparisonReport) -> String {
    let mut s = String::from("policy,bucket,value\n");
    for (p, t) in &report.accuracy {
        let _ = writeln!(s, "{p},short,{:.6}", t.short);
        let _ = writeln!(s, "{p},long,{:.6}", t.long);
        for (i, a) in t.per_step.iter().enumerate() {
            let _ = writeln!(s, "{p},h{},{a:.6}", i + 1);
        }
    }
    s
}

fn traces_csv(report: &ComparisonReport) -> String {
    let mut s = String::from("policy,world,episode,step,x,y,traversed_class,collided\n");
    for r in &report.results {
        for (e, tr) in r.traces.iter().enumerate() {
            for t in &tr.steps {
                let _ = writeln!(s, "{},{},{e},{},{:.4},{:.4},{},{}", r.policy, r.world, t.step, t.x, t.y, t.traversed_class.0, t.collided as u8);
            }
        }
    }
    s
}

fn write_files(dir: &Path, files: Vec<(String, String)>) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    let mut paths = Vec::new();
    for (name, body) in files {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| CoreError::io(&p, e))?;
        paths.push(p);
    }
    Ok(paths)
}

/// Writes the CSV files, then the plots rendered from them, into `dir`.
/// Returns the paths in a fixed order.
pub fn emit_report(report: &ComparisonReport, worlds: &[(String, &WorldMap)], dir: &Path) -> Result<Vec<PathBuf>> {
    let (summary, traces) = (report_csv(report), traces_csv(report));
    let mut files: Vec<(String, String)> = vec![
        (REPORT_CSV.into(), summary.clone()),
        ("significance.csv".into(), significance_csv(report)),
        (TRACES_CSV.into(), traces.clone()),
    ];
    if !report.accuracy.is_empty() {
        files.push(("accuracy.csv".into(), accuracy_csv(report)));
    }
    let mut paths = write_files(dir, files)?;
    paths.extend(render_plots(&summary, &traces, worlds, dir)?);
    Ok(paths)
}

pub const REPORT_CSV: &str = "report.csv";
pub const TRACES_CSV: &str = "traces.csv";

fn csv_rows<'a>(text: &'a str, columns: usize, what: &str) -> Result<Vec<Vec<&'a str>>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let row: Vec<&str> = l.split(',').collect();
            if row.len() == columns {
                Ok(row)
            } else {
                Err(invalid(format!("{what}: expected {columns} columns in `{l}`")))
            }
        })
        .collect()
}

/// Terrain bar chart and per-policy trajectory overlays from the contents
/// of `report.csv` and `traces.csv`.
pub fn render_plots(report_csv: &str, traces_csv: &str, worlds: &[(String, &WorldMap)], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut groups: Vec<(String, String, Vec<f64>)> = Vec::new();
    for row in csv_rows(report_csv, 4, REPORT_CSV)? {
        let Some(class) = row[2].strip_prefix("pct_class_") else {
            continue;
        };
        let class: usize = class.parse().map_err(|_| invalid(format!("bad metric `{}`", row[2])))?;
        let value: f64 = row[3].parse().map_err(|_| invalid(format!("bad value `{}`", row[3])))?;
        let pos = match groups.iter().position(|g| g.0 == row[0] && g.1 == row[1]) {
            Some(p) => p,
            None => {
                groups.push((row[0].to_string(), row[1].to_string(), Vec::new()));
                groups.len() - 1
            }
        };
        let v = &mut groups[pos].2;
        if v.len() <= class {
            v.resize(class + 1, 0.0);
        }
        v[class] = value;
    }
    let c = groups.iter().map(|g| g.2.len()).max().unwrap_or(0);
    let series: Vec<String> = (0..c).map(|k| if k + 1 == c { "obstacle".to_string() } else { format!("class {k}") }).collect();
    let names: Vec<String> = groups.iter().map(|g| format!("{}@{}", g.0, g.1)).collect();
    let values: Vec<Vec<f64>> = groups.iter().map(|g| g.2.clone()).collect();
    let mut files = vec![("terrain.svg".to_string(), svg::bar_chart_svg("Terrain traversed (%)", &names, &series, &values))];

    let rows = csv_rows(traces_csv, 8, TRACES_CSV)?;
    for (policy, wname, _) in &groups {
        let Some((_, world)) = worlds.iter().find(|(n, _)| n == wname) else {
            continue;
        };
        let mut s = svg::world_svg_open(world);
        let mine: Vec<&Vec<&str>> = rows.iter().filter(|r| r[0] == policy && r[1] == wname).collect();
        let mut i = 0;
        while i < mine.len() {
            let mut j = i;
            while j < mine.len() && mine[j][2] == mine[i][2] {
                j += 1;
            }
            let points: Vec<(f64, f64, TerrainClass)> = mine[i..j]
                .iter()
                .map(|r| -> Result<_> {
                    let num = |v: &str| v.parse::<f64>().map_err(|_| invalid(format!("bad number `{v}`")));
                    let class = r[6].parse::<u8>().map_err(|_| invalid(format!("bad class `{}`", r[6])))?;
                    Ok((num(r[4])?, num(r[5])?, TerrainClass(class)))
                })
                .collect::<Result<_>>()?;
            s.push_str(&svg::trajectory_svg(world, &points));
            i = j;
        }
        s.push_str("</svg>\n");
        files.push((format!("traj_{policy}_{wname}.svg"), s));
    }
    write_files(dir, files)
}
