use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use offroad_core::collect::{build_dataset, collect_episodes, fit_labeler, label_records, split_dataset};
use offroad_core::dataset::{Dataset, DatasetHeader};
use offroad_core::eval::{compare_policies, emit_report, render_plots, REPORT_CSV, TRACES_CSV};
use offroad_core::net::{load_checkpoint, save_checkpoint, Architecture, TerrainNet};
use offroad_core::planner::{mpc_drive, Driver};
use offroad_core::provenance::{describe_input, write_manifest, InputRecord};
use offroad_core::sim::{generate_world, load_world, save_world, WorldMap};
use offroad_core::train::{curve_csv, horizon_accuracy, train};
use offroad_core::{CoreError, InputMode, Profile, RunConfig};

const THREADS_ENV: &str = "OFFROAD_THREADS";

#[derive(Parser, Debug)]
#[command(name = "offroad", version, about = "Self-supervised off-road navigation pipeline")]
struct Cli {
    /// TOML file overriding the profile defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for this step, replacing the one in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Default profile, `desk` or `paper`; overrides `profile` in the file.
    #[arg(long, global = true)]
    profile: Option<Profile>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a world map.
    GenWorld {
        #[arg(long)]
        out: PathBuf,
        /// Use the held-out world seed.
        #[arg(long)]
        test: bool,
    },
    /// Drive the exploration policy and record a dataset.
    Collect {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        /// Step cap per episode.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Fit the terrain clusterer and label a dataset.
    Label {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the fitted cluster model as text.
        #[arg(long)]
        clusters: Option<PathBuf>,
    },
    /// Train a terrain predictor on a labeled dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mode: Option<InputMode>,
        /// Optimizer steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Run one planned episode and write its trace as CSV and SVG.
    Drive {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Trace CSV; the SVG goes next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Compare planners (and the random policy) on one or more worlds.
    Eval {
        /// `name=path` or a path (named by its file stem); repeatable.
        #[arg(long = "world", required = true)]
        worlds: Vec<String>,
        /// Checkpoints, named by input mode; the first two are tested
        /// against each other.
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        /// Labeled dataset for validation accuracy per model.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        no_random: bool,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render the plots of an eval directory from its CSV files.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "world")]
        worlds: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got `{v}`");
                return ExitCode::from(1);
            }
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn load_config(cli: &Cli) -> std::result::Result<RunConfig, Failure> {
    let text = match &cli.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?),
        None => None,
    };
    RunConfig::resolve(text.as_deref(), cli.profile).map_err(|e| Failure::Usage(format!("{}{e}", cli.config.as_ref().map_or(String::new(), |p| format!("{}: ", p.display())))))
}

fn input(role: &str, path: &Path) -> std::result::Result<InputRecord, Failure> {
    let (rec, warning) = describe_input(role, path)?;
    if let Some(w) = warning {
        eprintln!("warning: {w}");
    }
    Ok(rec)
}

fn finish(command: &str, artifact: &Path, inputs: Vec<InputRecord>, cfg: &RunConfig) -> Outcome {
    write_manifest(command, artifact, inputs, &cfg.to_text())?;
    println!("wrote {}", artifact.display());
    Ok(())
}

fn named_world(spec: &str) -> std::result::Result<(String, PathBuf), Failure> {
    match spec.split_once('=') {
        Some((n, p)) if !n.is_empty() => Ok((n.to_string(), PathBuf::from(p))),
        Some(_) => Err(Failure::Usage(format!("world `{spec}` has an empty name"))),
        None => {
            let p = PathBuf::from(spec);
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| spec.to_string());
            Ok((name, p))
        }
    }
}

fn load_dataset(path: &Path, cfg: &RunConfig) -> std::result::Result<Dataset, Failure> {
    let ds = Dataset::load(path)?;
    let h = &ds.header;
    if h.num_classes != cfg.world.num_classes
        || h.ground_hw != (cfg.camera.ground_height_px, cfg.camera.ground_width_px)
        || h.aerial_hw != (cfg.camera.aerial_height_px, cfg.camera.aerial_width_px)
        || h.imu_samples != cfg.imu.samples
    {
        return Err(Failure::Data(format!("{}: dataset layout does not match the configuration", path.display())));
    }
    Ok(ds)
}

fn run(cli: Cli) -> Outcome {
    let mut cfg = load_config(&cli)?;
    match &cli.command {
        Command::GenWorld { out, test } => {
            let seed = cli.seed.unwrap_or(if *test { cfg.seeds.world_test } else { cfg.seeds.world_train });
            if *test {
                cfg.seeds.world_test = seed;
            } else {
                cfg.seeds.world_train = seed;
            }
            let world = generate_world(&cfg.world, seed)?;
            save_world(&world, out)?;
            finish("gen-world", out, Vec::new(), &cfg)
        }
        Command::Collect { world, out, episodes, steps } => {
            if let Some(n) = episodes {
                cfg.collect.episodes = *n;
            }
            if let Some(n) = steps {
                cfg.collect.max_steps = *n;
            }
            cfg.seeds.collect = cli.seed.unwrap_or(cfg.seeds.collect);
            let inputs = vec![input("world", world)?];
            let w = load_world(world)?;
            let episodes = collect_episodes(&w, &cfg, cfg.seeds.collect)?;
            let ds = Dataset::from_episodes(DatasetHeader::from_config(&cfg, w.seed, cfg.seeds.collect, cfg.collect.episodes), episodes);
            ds.save(out)?;
            finish("collect", out, inputs, &cfg)
        }
        Command::Label { data, out, clusters } => {
            cfg.seeds.labeling = cli.seed.unwrap_or(cfg.seeds.labeling);
            let inputs = vec![input("dataset", data)?];
            let mut ds = load_dataset(data, &cfg)?;
            let model = fit_labeler(&ds.records, &cfg, cfg.seeds.labeling)?;
            label_records(&mut ds.records, &model, &cfg);
            ds.header.labeling_seed = Some(cfg.seeds.labeling);
            ds.save(out)?;
            if let Some(c) = clusters {
                model.save(c)?;
            }
            finish("label", out, inputs, &cfg)
        }
        Command::Train { data, out, mode, steps } => {
            if let Some(m) = mode {
                cfg.model.mode = *m;
            }
            if let Some(n) = steps {
                cfg.train.steps = *n;
            }
            cfg.seeds.train = cli.seed.unwrap_or(cfg.seeds.train);
            let inputs = vec![input("dataset", data)?];
            let ds = load_dataset(data, &cfg)?;
            if !ds.is_labeled() {
                return Err(Failure::Data(format!("{}: dataset is not labeled; run `offroad label` first", data.display())));
            }
            let samples = build_dataset(&ds.records, cfg.model.history, cfg.model.horizon, cfg.collect.sampling, cfg.collect.sample_spacing_m);
            let (tr, va) = split_dataset(&samples, cfg.train.validation_fraction, cfg.seeds.train);
            println!("{} samples: {} train, {} validation", samples.len(), tr.len(), va.len());
            let net = TerrainNet::init(&Architecture::from_config(&cfg), cfg.seeds.train)?;
            let result = train(net, None, &ds, &tr, &va, &cfg.train, cfg.seeds.train)?;
            if let Some(p) = result.curve.last() {
                println!(
                    "step {}: validation cross-entropy {:.4}, accuracy short {:.3} long {:.3}",
                    p.step, p.val_cross_entropy, p.val_accuracy.short, p.val_accuracy.long
                );
            }
            save_checkpoint(out, &result.net, Some(&result.optimizer))?;
            let mut curve_path = out.as_os_str().to_owned();
            curve_path.push(".curve.csv");
            let curve_path = PathBuf::from(curve_path);
            std::fs::write(&curve_path, curve_csv(&result.curve)).map_err(|e| CoreError::io(&curve_path, e))?;
            finish("train", out, inputs, &cfg)
        }
        Command::Drive { world, model, out, steps } => {
            if let Some(n) = steps {
                cfg.planner.max_steps = *n;
            }
            cfg.seeds.planner = cli.seed.unwrap_or(cfg.seeds.planner);
            let inputs = vec![input("world", world)?, input("model", model)?];
            let w = load_world(world)?;
            let net = load_checkpoint(model)?.net;
            let trace = mpc_drive(&w, &net, &cfg, cfg.seeds.planner)?;
            let svg = out.with_extension("svg");
            trace.save(&w, out, &svg)?;
            let collided = trace.steps.last().is_some_and(|t| t.collided);
            println!("{} steps{}", trace.steps.len(), if collided { ", ended in a collision" } else { "" });
            finish("drive", out, inputs, &cfg)
        }
        Command::Eval { worlds, models, data, no_random, episodes, steps, out } => {
            if let Some(n) = episodes {
                cfg.eval.episodes = *n;
            }
            if let Some(n) = steps {
                cfg.eval.max_steps = *n;
            }
            cfg.seeds.eval = cli.seed.unwrap_or(cfg.seeds.eval);
            let mut inputs = Vec::new();
            let mut loaded: Vec<(String, WorldMap)> = Vec::new();
            for spec in worlds {
                let (name, path) = named_world(spec)?;
                inputs.push(input(&format!("world.{name}"), &path)?);
                loaded.push((name, load_world(&path)?));
            }
            let mut nets: Vec<(String, TerrainNet)> = Vec::new();
            for path in models {
                let net = load_checkpoint(path)?.net;
                let base = net.arch.mode.to_string();
                let mut name = base.clone();
                let mut k = 2;
                while nets.iter().any(|(n, _)| *n == name) {
                    name = format!("{base}{k}");
                    k += 1;
                }
                inputs.push(input(&format!("model.{name}"), path)?);
                nets.push((name, net));
            }
            let mut policies: Vec<(String, Driver)> = nets.iter().map(|(n, net)| (n.clone(), Driver::Planner(net))).collect();
            if !no_random {
                policies.push(("random".into(), Driver::Random));
            }
            let world_refs: Vec<(String, &WorldMap)> = loaded.iter().map(|(n, w)| (n.clone(), w)).collect();
            let mut report = compare_policies(&policies, &world_refs, &cfg, cfg.eval.episodes, cfg.seeds.eval)?;
            if let Some(d) = data {
                inputs.push(input("dataset", d)?);
                let ds = load_dataset(d, &cfg)?;
                let samples = build_dataset(&ds.records, cfg.model.history, cfg.model.horizon, cfg.collect.sampling, cfg.collect.sample_spacing_m);
                let (_, va) = split_dataset(&samples, cfg.train.validation_fraction, cfg.seeds.train);
                for (name, net) in &nets {
                    report.accuracy.push((name.clone(), horizon_accuracy(net, &ds, &va)?));
                }
            }
            for r in &report.results {
                let s = &r.summary;
                println!(
                    "{:<12} {:<8} return {:8.1} ± {:7.1}  collisions {:4.0}%  smooth {:5.1}%",
                    r.policy,
                    r.world,
                    s.mean_return,
                    s.std_return,
                    100.0 * s.collision_rate,
                    s.class_percentages[0]
                );
            }
            emit_report(&report, &world_refs, out)?;
            finish("eval", &out.join(REPORT_CSV), inputs, &cfg)
        }
        Command::Report { input: dir, worlds, out } => {
            let read = |name: &str| -> std::result::Result<String, Failure> {
                let p = dir.join(name);
                std::fs::read_to_string(&p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))
            };
            let (summary, traces) = (read(REPORT_CSV)?, read(TRACES_CSV)?);
            let mut inputs = vec![input("report", &dir.join(REPORT_CSV))?, input("traces", &dir.join(TRACES_CSV))?];
            let mut loaded = Vec::new();
            for spec in worlds {
                let (name, path) = named_world(spec)?;
                inputs.push(input(&format!("world.{name}"), &path)?);
                loaded.push((name, load_world(&path)?));
            }
            let world_refs: Vec<(String, &WorldMap)> = loaded.iter().map(|(n, w)| (n.clone(), w)).collect();
            let paths = render_plots(&summary, &traces, &world_refs, out)?;
            finish("report", &paths[0], inputs, &cfg)
        }
    }
}
