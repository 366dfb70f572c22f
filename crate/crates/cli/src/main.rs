use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use augrank::augment::HueMode;
use augrank::error::{Error, ErrorClass, Result};
use augrank::importance::{
    ablation_csv, block_ablation, importance_csv, probe_importance, render_heatmap, Aggregation, ShareGrid,
};
use augrank::pipeline::{
    check_coverage, extract_features, filter_manifest, generate_pairs, load_datasets, load_manifest, read_pairs,
    run_experiment, AnalyticBackbone, Backbone, ExperimentConfig, PairOptions, SplitFractions,
};
use augrank::probe::{evaluate, train, RankProbe, TrainConfig};
use augrank::{synth, Bundle, TaskKind};

#[derive(Parser)]
#[command(name = "augrank", version, about = "Probe image features for augmentation signals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter a dataset manifest down to usable single-object images.
    Filter {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate ranked augmentation pairs for one task.
    Pairs {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        task: TaskKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        pairing: PairArgs,
    },
    /// Compute baseline features for a pair directory, or check an external bundle.
    #[command(args_conflicts_with_subcommands = true)]
    Features {
        #[command(subcommand)]
        ingest: Option<FeatureCommand>,
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long, value_parser = parse_analytic)]
        backbone: Option<AnalyticBackbone>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a rank probe on the training split.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved probe on both splits.
    Eval {
        #[arg(long)]
        probe: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Per-layer importance of a saved probe.
    Importance {
        #[arg(long)]
        probe: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Only write rows for this aggregation; both by default.
        #[arg(long)]
        mode: Option<Aggregation>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one probe per block and compare accuracies.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Comma-separated block ids; every block by default.
        #[arg(long, value_delimiter = ',')]
        blocks: Vec<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge importance CSVs into one layer x task heatmap.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        importance: Vec<PathBuf>,
        #[arg(long, default_value = "mean")]
        mode: Aggregation,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the whole pipeline from a JSON config; flags override config keys.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<TaskKind>,
        #[arg(long)]
        backbone: Option<Backbone>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        ablation_blocks: Option<Vec<u32>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        pairing: PairArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Write a synthetic single-object dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 224)]
        size: usize,
    },
}

#[derive(Subcommand)]
enum FeatureCommand {
    /// Check that an externally exported bundle covers a pair directory.
    Ingest {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    pairs: PathBuf,
    /// Bundle base path or manifest file.
    #[arg(long)]
    bundle: PathBuf,
}

#[derive(Args, Default)]
struct PairArgs {
    #[arg(long)]
    pairs_per_image: Option<u32>,
    /// Brightness offsets as `lo,hi`.
    #[arg(long, value_parser = parse_range)]
    brightness_range: Option<(f64, f64)>,
    #[arg(long, value_parser = parse_hue_mode)]
    hue_mode: Option<HueMode>,
    #[arg(long)]
    train_fraction: Option<f64>,
}

#[derive(Args, Default)]
struct TrainArgs {
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    train_seed: Option<u64>,
    #[arg(long)]
    no_standardize: bool,
}

impl TrainArgs {
    fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.l2 {
            cfg.l2 = v;
        }
        if let Some(v) = self.momentum {
            cfg.momentum = v;
        }
        if let Some(v) = self.train_seed {
            cfg.seed = v;
        }
        if self.no_standardize {
            cfg.standardize = false;
        }
    }

    fn config(&self) -> TrainConfig {
        let mut cfg = TrainConfig::default();
        self.apply(&mut cfg);
        cfg
    }
}

impl PairArgs {
    fn apply(&self, opts: &mut PairOptions) {
        if let Some(n) = self.pairs_per_image {
            opts.pairs_per_image = n;
        }
        if let Some(r) = self.brightness_range {
            opts.augment.brightness_range = r;
        }
        if let Some(m) = self.hue_mode {
            opts.augment.hue_mode = m;
        }
        if let Some(f) = self.train_fraction {
            opts.split = SplitFractions { train: f, val: 1.0 - f };
        }
    }
}

fn parse_analytic(s: &str) -> std::result::Result<AnalyticBackbone, String> {
    match s {
        "passthrough" => Ok(AnalyticBackbone::Passthrough),
        "dct" => Ok(AnalyticBackbone::Dct),
        _ => Err(format!("`{s}` is not one of passthrough, dct")),
    }
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected `lo,hi`")?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| e.to_string());
    Ok((p(lo)?, p(hi)?))
}

fn parse_hue_mode(s: &str) -> std::result::Result<HueMode, String> {
    match s {
        "signed" => Ok(HueMode::Signed),
        "absolute" => Ok(HueMode::Absolute),
        _ => Err(format!("`{s}` is not one of signed, absolute")),
    }
}

fn print_json(value: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("json value serializes")
    );
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        inner: e,
    })
}

fn task_of(pairs: &Path) -> Result<TaskKind> {
    let (index, _) = read_pairs(pairs)?;
    index
        .first()
        .map(|e| e.task)
        .ok_or_else(|| Error::InvalidArgument(format!("{}: pair index is empty", pairs.display())))
}

fn open_bundle(path: &Path) -> Result<Bundle> {
    Ok(Bundle::open(path)?.strict(true))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Filter { manifest, out } => {
            let s = filter_manifest(&manifest, &out)?;
            eprintln!("accepted {}, rejected {}", s.accepted, s.rejected.len());
        }
        Command::Pairs {
            manifest,
            task,
            seed,
            out,
            pairing,
        } => {
            let mut opts = PairOptions {
                experiment_seed: seed,
                ..Default::default()
            };
            pairing.apply(&mut opts);
            let (records, base) = load_manifest(&manifest)?;
            let index = generate_pairs(&records, &base, task, &opts, &out)?;
            eprintln!("wrote {} pairs to {}", index.len(), out.display());
        }
        Command::Features {
            ingest: Some(FeatureCommand::Ingest { bundle, pairs }),
            ..
        } => {
            let b = open_bundle(&bundle)?;
            let (index, _) = read_pairs(&pairs)?;
            check_coverage(&index, &b)?;
            for i in 0..b.len() {
                b.get_index(i)?;
            }
            eprintln!("bundle covers {} pairs ({} samples)", index.len(), b.len());
        }
        Command::Features {
            ingest: None,
            pairs,
            backbone,
            out,
        } => {
            let (Some(pairs), Some(backbone), Some(out)) = (pairs, backbone, out) else {
                return Err(Error::Config(
                    "features needs --pairs, --backbone and --out (or `features ingest`)".into(),
                ));
            };
            let m = extract_features(&pairs, backbone, &out)?;
            eprintln!("wrote {} samples to {}", m.samples.len(), out.display());
        }
        Command::Train { data, train: t, out } => {
            let cfg = t.config();
            cfg.validate()?;
            let (tr, va) = load_datasets(&data.pairs, &open_bundle(&data.bundle)?)?;
            let (probe, log) = train(&tr, &cfg)?;
            probe.save(&out)?;
            print_json(&serde_json::json!({
                "train_pairs": tr.len(),
                "val_pairs": va.len(),
                "final_loss": log.final_loss,
                "train_accuracy": log.train_accuracy,
                "val_accuracy": evaluate(&probe, &va.pairs)?,
            }));
        }
        Command::Eval { probe, data } => {
            let probe = RankProbe::load(&probe)?;
            let (tr, va) = load_datasets(&data.pairs, &open_bundle(&data.bundle)?)?;
            print_json(&serde_json::json!({
                "train_accuracy": evaluate(&probe, &tr.pairs)?,
                "val_accuracy": evaluate(&probe, &va.pairs)?,
            }));
        }
        Command::Importance { probe, data, mode, out } => {
            let task = task_of(&data.pairs)?;
            let probe = RankProbe::load(&probe)?;
            let (tr, _) = load_datasets(&data.pairs, &open_bundle(&data.bundle)?)?;
            let report = probe_importance(task, &probe, &tr)?;
            let modes = match mode {
                Some(m) => vec![m],
                None => Aggregation::BOTH.to_vec(),
            };
            write_text(&out, &importance_csv(&[report], &modes))?;
        }
        Command::Ablate {
            data,
            train: t,
            blocks,
            out,
        } => {
            let cfg = t.config();
            cfg.validate()?;
            let task = task_of(&data.pairs)?;
            let (tr, va) = load_datasets(&data.pairs, &open_bundle(&data.bundle)?)?;
            let blocks = if blocks.is_empty() { tr.dim_map.blocks() } else { blocks };
            let rows = block_ablation(&tr, &va, &blocks, &cfg)?;
            write_text(&out, &ablation_csv(task, &rows))?;
        }
        Command::Report { importance, mode, out } => {
            let mut grid = ShareGrid::default();
            for path in &importance {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                    path: path.clone(),
                    inner: e,
                })?;
                let part = ShareGrid::from_csv(&text, mode)?;
                for (t, task) in part.tasks.iter().enumerate() {
                    let cells: Vec<(String, f64)> = part
                        .layers
                        .iter()
                        .zip(&part.values)
                        .filter_map(|(l, row)| row[t].map(|v| (l.clone(), v)))
                        .collect();
                    grid.insert(task, &cells);
                }
            }
            render_heatmap(&grid, &out)?;
        }
        Command::Run {
            config,
            dataset,
            tasks,
            backbone,
            seed,
            ablation_blocks,
            out,
            pairing,
            train: t,
        } => {
            let mut cfg = match &config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::default(),
            };
            if let Some(d) = dataset {
                cfg.dataset = d;
            }
            if !tasks.is_empty() {
                cfg.tasks = tasks;
            }
            if let Some(b) = backbone {
                cfg.backbone = b;
            }
            if let Some(s) = seed {
                cfg.experiment_seed = s;
            }
            if ablation_blocks.is_some() {
                cfg.ablation_blocks = ablation_blocks;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let mut opts = PairOptions {
                pairs_per_image: cfg.pairs_per_image,
                augment: cfg.augment.clone(),
                split: cfg.split,
                ..Default::default()
            };
            pairing.apply(&mut opts);
            cfg.pairs_per_image = opts.pairs_per_image;
            cfg.augment = opts.augment;
            cfg.split = opts.split;
            t.apply(&mut cfg.train);

            let report = run_experiment(&cfg)?;
            for row in &report.accuracy {
                println!(
                    "{:<12} train {:.4}  val {:.4}  ({} / {} pairs)",
                    row.task.as_str(),
                    row.train_accuracy,
                    row.val_accuracy,
                    row.train_pairs,
                    row.val_pairs
                );
            }
        }
        Command::Synth { out, count, seed, size } => {
            let manifest = synth::write_dataset(&out, count, seed, size)?;
            eprintln!("wrote {}", manifest.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numerical => 4,
            })
        }
    }
}
