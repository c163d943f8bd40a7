use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use boxfuse_cli::commands::{
    self, check_ratios, parse_noise_profile, parse_weights, BenchArgs, FuseArgs, FuseMethod,
    OptimizeArgs, SweepAxis,
};
use boxfuse_cli::split::SplitSpec;
use boxfuse_cli::synth::{NoiseProfile, SyntheticSpec};
use boxfuse_core::{ConfidenceRescale, DeConfig, FitnessMetric, WbfConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "boxfuse",
    version,
    about = "Weighted boxes fusion with evolved model weights"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic ground truth and detector outputs.
    Synth(SynthCmd),
    /// Fuse several detection files with fixed weights.
    Fuse(FuseCmd),
    /// Score detection files against ground truth.
    Eval(EvalCmd),
    /// Evolve fusion weights on the validation split.
    Optimize(OptimizeCmd),
    /// Repeat optimize over values of NP or G.
    Sweep(SweepCmd),
    /// Time fusion and full runs to estimate scaling.
    Bench(BenchCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Map50,
    Map5095,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rescale {
    MinTOverN,
    TOverN,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Wbf,
    Nms,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Np,
    G,
}

#[derive(Args)]
struct FusionOpts {
    /// A box joins a cluster above this IoU with the cluster's fused box.
    #[arg(long, default_value_t = 0.55)]
    iou_match_thr: f64,
    /// Drop boxes whose confidence is below this before fusing.
    #[arg(long, default_value_t = 0.0)]
    skip_thr: f64,
    #[arg(long, value_enum, default_value_t = Rescale::MinTOverN)]
    rescale: Rescale,
    /// Only cluster boxes of the same category.
    #[arg(long)]
    per_category: bool,
}

impl FusionOpts {
    fn config(&self) -> WbfConfig {
        WbfConfig {
            iou_match_threshold: self.iou_match_thr,
            skip_score_threshold: self.skip_thr,
            category_agnostic_clustering: !self.per_category,
            confidence_rescale: match self.rescale {
                Rescale::MinTOverN => ConfidenceRescale::MinTOverN,
                Rescale::TOverN => ConfidenceRescale::TOverN,
                Rescale::None => ConfidenceRescale::None,
            },
        }
    }
}

#[derive(Args)]
struct OptimizerOpts {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Metric::Map5095)]
    metric: Metric,
    #[arg(long, default_value_t = 10)]
    np: usize,
    #[arg(long, default_value_t = 40)]
    generations: usize,
    /// Threads for fitness evaluation; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Fitness evaluations per generation for the scale-factor local searches.
    #[arg(long, default_value_t = 0)]
    local_search_budget: usize,
    /// Put the one-hot weight vectors into the initial population.
    #[arg(long)]
    include_one_hot_seeding: bool,
    /// Re-evaluate target fitness every generation instead of caching it.
    #[arg(long)]
    reevaluate_targets: bool,
    /// Fraction of images used for validation (ratio split).
    #[arg(long, default_value_t = 0.5)]
    val_ratio: f64,
    /// Seed of the ratio split; defaults to --seed.
    #[arg(long)]
    split_seed: Option<u64>,
    /// JSON file with explicit {"validation": [...], "test": [...]} image ids.
    #[arg(long)]
    split_file: Option<PathBuf>,
}

impl OptimizerOpts {
    fn config(&self) -> DeConfig {
        DeConfig {
            population_size: self.np,
            generations: self.generations,
            fitness_metric: match self.metric {
                Metric::Map50 => FitnessMetric::Map50,
                Metric::Map5095 => FitnessMetric::Map50_95,
            },
            seed: self.seed,
            workers: self.workers,
            local_search_budget: self.local_search_budget,
            one_hot_seeding: self.include_one_hot_seeding,
            reevaluate_targets: self.reevaluate_targets,
            ..DeConfig::default()
        }
    }

    fn split(&self) -> Result<SplitSpec> {
        match &self.split_file {
            Some(p) => SplitSpec::from_file(p),
            None => Ok(SplitSpec::Ratio {
                validation_fraction: self.val_ratio,
                seed: self.split_seed.unwrap_or(self.seed),
            }),
        }
    }
}

#[derive(Args)]
struct SynthCmd {
    #[arg(long, default_value = "synth")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    images: usize,
    #[arg(long, default_value_t = 3)]
    categories: usize,
    /// Detector as name:sigma:miss_rate:fp_rate (repeatable). Defaults to one
    /// clean and two noisy detectors.
    #[arg(long = "model", value_parser = parse_noise_profile)]
    models: Vec<NoiseProfile>,
    /// Full specification as JSON; overrides the other options.
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args)]
struct FuseCmd {
    /// Detections file (repeatable), one per model.
    #[arg(long = "det", required = true)]
    dets: Vec<PathBuf>,
    /// Ground truth; fixes the image list and validates the detections.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Comma-separated weights or a weights.json profile. Defaults to all ones.
    #[arg(long)]
    weights: Option<String>,
    #[arg(long, value_enum, default_value_t = Method::Wbf)]
    method: Method,
    /// IoU above which NMS suppresses a box.
    #[arg(long, default_value_t = 0.5)]
    nms_iou: f64,
    #[command(flatten)]
    fusion: FusionOpts,
    #[arg(long, default_value = "fused")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvalCmd {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long = "det", required = true)]
    dets: Vec<PathBuf>,
    #[arg(long, default_value = "eval")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct OptimizeCmd {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long = "det", required = true)]
    dets: Vec<PathBuf>,
    #[arg(long, default_value = "optimize")]
    out_dir: PathBuf,
    #[command(flatten)]
    optimizer: OptimizerOpts,
    #[command(flatten)]
    fusion: FusionOpts,
}

impl OptimizeCmd {
    fn args(&self) -> Result<OptimizeArgs> {
        Ok(OptimizeArgs {
            gt: self.gt.clone(),
            dets: self.dets.clone(),
            out_dir: self.out_dir.clone(),
            de: self.optimizer.config(),
            wbf: self.fusion.config(),
            split: self.optimizer.split()?,
        })
    }
}

#[derive(Args)]
struct SweepCmd {
    #[command(flatten)]
    run: OptimizeCmd,
    #[arg(long, value_enum)]
    axis: Axis,
    /// Comma-separated values of the swept parameter.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<usize>,
}

#[derive(Args)]
struct BenchCmd {
    /// Box counts for the fusion timing.
    #[arg(long, value_delimiter = ',', default_values_t = [100, 200, 400, 800])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    np: usize,
    #[arg(long, default_value_t = 10)]
    generations: usize,
    #[arg(long, default_value_t = 20)]
    images: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "bench")]
    out_dir: PathBuf,
    /// Exit non-zero unless every G and NP doubling ratio lies in [1.6, 2.6].
    #[arg(long)]
    check: bool,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(c) => {
            let spec = match &c.spec {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
                None => {
                    let mut s = SyntheticSpec {
                        images: c.images,
                        categories: c.categories,
                        seed: c.seed,
                        ..SyntheticSpec::default()
                    };
                    if !c.models.is_empty() {
                        s.models = c.models.clone();
                    }
                    s
                }
            };
            let files = commands::cmd_synth(&spec, &c.out_dir)?;
            println!("wrote {}", files.ground_truth.display());
            for d in &files.detections {
                println!("wrote {}", d.display());
            }
        }
        Command::Fuse(c) => {
            let weights = c
                .weights
                .as_deref()
                .map(parse_weights)
                .transpose()?
                .unwrap_or_default();
            let out = commands::cmd_fuse(&FuseArgs {
                dets: c.dets,
                gt: c.gt,
                weights,
                method: match c.method {
                    Method::Wbf => FuseMethod::Wbf,
                    Method::Nms => FuseMethod::Nms,
                },
                wbf: c.fusion.config(),
                nms_iou: c.nms_iou,
                out_dir: c.out_dir,
            })?;
            println!("wrote {}", out.display());
        }
        Command::Eval(c) => {
            let rows = commands::cmd_eval(&c.gt, &c.dets, &c.out_dir)?;
            print!("{}", boxfuse_cli::report::comparison_table(&rows));
        }
        Command::Optimize(c) => {
            let args = c.args()?;
            let out = commands::cmd_optimize(&args)?;
            print!("{}", commands::summary_text(&out, &args.de));
        }
        Command::Sweep(c) => {
            let args = c.run.args()?;
            let axis = match c.axis {
                Axis::Np => SweepAxis::Np,
                Axis::G => SweepAxis::G,
            };
            let rows = commands::cmd_sweep(&args, axis, &c.values)?;
            print!("{}", commands::sweep_csv(&rows));
        }
        Command::Bench(c) => {
            let report = commands::cmd_bench(&BenchArgs {
                sizes: c.sizes,
                base_np: c.np,
                base_generations: c.generations,
                images: c.images,
                repeats: c.repeats,
                seed: c.seed,
                out_dir: c.out_dir.clone(),
            })?;
            print!(
                "{}",
                std::fs::read_to_string(c.out_dir.join("bench_summary.txt"))?
            );
            if c.check {
                check_ratios(&report, "g", 1.6, 2.6)?;
                check_ratios(&report, "np", 1.6, 2.6)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
