//! The subcommands as library functions. The binary only parses arguments.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use boxfuse_core::de::evaluate_fitness;
use boxfuse_core::{
    evaluate, fuse_runs, run_deihdl, validate_dataset, weighted_boxes_fusion, ConvergenceHistory,
    Dataset, DeConfig, Detection, EvalConfig, FitnessMetric, ImageId, ModelRun, WbfConfig,
};

use crate::coco;
use crate::nms::nms_models;
use crate::profile::{Metadata, WeightProfile};
use crate::report::{comparison_table, EvalSummary};
use crate::split::{split_dataset, SplitSpec};
use crate::synth::{generate, NoiseProfile, SyntheticData, SyntheticSpec};

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Ground truth and one run per detections file. Model names are file stems,
/// suffixed with their position when two files share a stem.
pub fn load_inputs(gt: &Path, dets: &[PathBuf]) -> Result<(Dataset, Vec<ModelRun>)> {
    let ds = coco::load_ground_truth(gt)?;
    let runs = load_runs(dets)?;
    Ok((ds, runs))
}

pub fn load_runs(dets: &[PathBuf]) -> Result<Vec<ModelRun>> {
    let stems: Vec<String> = dets.iter().map(|p| coco::model_name_for(p)).collect();
    dets.iter()
        .enumerate()
        .map(|(i, p)| {
            let mut name = stems[i].clone();
            if stems.iter().filter(|s| **s == name).count() > 1 {
                name = format!("{name}_{}", i + 1);
            }
            Ok(coco::load_detections(p, &name)?)
        })
        .collect()
}

fn ensure_clean(ds: &Dataset, runs: &[ModelRun]) -> Result<()> {
    let report = validate_dataset(ds, runs);
    ensure!(report.is_clean(), "input validation failed:\n{report}");
    Ok(())
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFiles {
    pub ground_truth: PathBuf,
    pub detections: Vec<PathBuf>,
}

pub fn write_synthetic(
    data: &SyntheticData,
    spec: &SyntheticSpec,
    out_dir: &Path,
) -> Result<SynthFiles> {
    create_dir(out_dir)?;
    let gt_path = out_dir.join("gt.json");
    let gt = coco::ground_truth_to_coco(&data.dataset, spec.image_size, spec.image_size);
    write(&gt_path, &serde_json::to_string_pretty(&gt)?)?;
    let mut detections = Vec::new();
    for run in &data.runs {
        let p = out_dir.join(format!("{}.json", run.model_name));
        write(&p, &coco::run_to_json(&run.detections))?;
        detections.push(p);
    }
    write(
        &out_dir.join("spec.json"),
        &serde_json::to_string_pretty(spec)?,
    )?;
    Ok(SynthFiles {
        ground_truth: gt_path,
        detections,
    })
}

pub fn cmd_synth(spec: &SyntheticSpec, out_dir: &Path) -> Result<SynthFiles> {
    let data = generate(spec)?;
    write_synthetic(&data, spec, out_dir)
}

/// Parses `name:sigma:miss:fp` into a noise profile.
pub fn parse_noise_profile(s: &str) -> Result<NoiseProfile> {
    let parts: Vec<&str> = s.split(':').collect();
    ensure!(
        parts.len() == 4,
        "expected name:sigma:miss_rate:fp_rate, got {s:?}"
    );
    let num = |i: usize| -> Result<f64> {
        parts[i]
            .parse()
            .with_context(|| format!("{:?} in {s:?} is not a number", parts[i]))
    };
    Ok(NoiseProfile::noisy(parts[0], num(1)?, num(2)?, num(3)?))
}

// ---------------------------------------------------------------- fuse

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FuseMethod {
    #[default]
    Wbf,
    Nms,
}

#[derive(Debug, Clone)]
pub struct FuseArgs {
    pub dets: Vec<PathBuf>,
    /// Supplies the image list and enables input validation.
    pub gt: Option<PathBuf>,
    /// One weight per model; ignored by NMS.
    pub weights: Vec<f64>,
    pub method: FuseMethod,
    pub wbf: WbfConfig,
    pub nms_iou: f64,
    pub out_dir: PathBuf,
}

/// Weights from a comma-separated list or a weight-profile JSON file.
pub fn parse_weights(s: &str) -> Result<Vec<f64>> {
    let path = Path::new(s);
    if s.ends_with(".json") || path.is_file() {
        return Ok(WeightProfile::load(path)?.weights);
    }
    s.split(',')
        .map(|w| {
            w.trim()
                .parse::<f64>()
                .with_context(|| format!("weight {w:?} is not a number"))
        })
        .collect()
}

pub fn fuse_detections(
    runs: &[ModelRun],
    images: &BTreeSet<ImageId>,
    weights: &[f64],
    method: FuseMethod,
    wbf: &WbfConfig,
    nms_iou: f64,
) -> Result<BTreeMap<ImageId, Vec<Detection>>> {
    match method {
        FuseMethod::Wbf => {
            let fused = fuse_runs(runs, images, weights, wbf)?;
            Ok(fused
                .into_iter()
                .map(|(img, f)| (img, f.into_iter().map(Detection::from).collect()))
                .collect())
        }
        FuseMethod::Nms => Ok(images
            .iter()
            .map(|&img| {
                let per_model: Vec<&[Detection]> = runs.iter().map(|r| r.for_image(img)).collect();
                (img, nms_models(&per_model, nms_iou))
            })
            .collect()),
    }
}

pub fn cmd_fuse(args: &FuseArgs) -> Result<PathBuf> {
    ensure!(
        !args.dets.is_empty(),
        "fuse needs at least one detections file"
    );
    let runs = load_runs(&args.dets)?;
    let weights = if args.weights.is_empty() {
        vec![1.0; runs.len()]
    } else {
        args.weights.clone()
    };
    ensure!(
        weights.len() == runs.len(),
        "{} weights for {} models",
        weights.len(),
        runs.len()
    );
    let images: BTreeSet<ImageId> = match &args.gt {
        Some(gt) => {
            let ds = coco::load_ground_truth(gt)?;
            ensure_clean(&ds, &runs)?;
            ds.images
        }
        None => runs
            .iter()
            .flat_map(|r| r.detections.keys().copied())
            .collect(),
    };
    let fused = fuse_detections(
        &runs,
        &images,
        &weights,
        args.method,
        &args.wbf,
        args.nms_iou,
    )?;
    create_dir(&args.out_dir)?;
    let out = args.out_dir.join("fused.json");
    write(&out, &coco::run_to_json(&fused))?;
    Ok(out)
}

// ---------------------------------------------------------------- eval

pub fn evaluate_named<D: boxfuse_core::ScoredBox<f64>>(
    name: &str,
    dets: &BTreeMap<ImageId, Vec<D>>,
    ds: &Dataset,
) -> Result<EvalSummary> {
    let report = evaluate(dets, ds, &EvalConfig::default())?;
    Ok(EvalSummary::from_report(name, &report))
}

/// Writes `<name>.eval.json` per detections file and `comparison.md`.
pub fn cmd_eval(gt: &Path, dets: &[PathBuf], out_dir: &Path) -> Result<Vec<EvalSummary>> {
    ensure!(!dets.is_empty(), "eval needs at least one detections file");
    let (ds, runs) = load_inputs(gt, dets)?;
    ensure_clean(&ds, &runs)?;
    create_dir(out_dir)?;
    let mut rows = Vec::new();
    for run in &runs {
        let s = evaluate_named(&run.model_name, &run.detections, &ds)?;
        write(
            &out_dir.join(format!("{}.eval.json", run.model_name)),
            &s.to_json(),
        )?;
        rows.push(s);
    }
    write(&out_dir.join("comparison.md"), &comparison_table(&rows))?;
    Ok(rows)
}

// ---------------------------------------------------------------- optimize

#[derive(Debug, Clone)]
pub struct OptimizeArgs {
    pub gt: PathBuf,
    pub dets: Vec<PathBuf>,
    pub out_dir: PathBuf,
    pub de: DeConfig,
    pub wbf: WbfConfig,
    pub split: SplitSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    pub profile: WeightProfile,
    pub history: ConvergenceHistory,
    /// Validation fitness of each one-hot weight vector.
    pub one_hot_fitness: Vec<f64>,
    /// Test-split rows: each model alone, NMS, uniform WBF, optimized WBF.
    pub comparison: Vec<EvalSummary>,
    pub validation_images: usize,
    pub test_images: usize,
}

impl OptimizeOutcome {
    pub fn row(&self, name: &str) -> Option<&EvalSummary> {
        self.comparison.iter().find(|r| r.name == name)
    }
}

pub const OPTIMIZED_ROW: &str = "deihdl";
pub const UNIFORM_ROW: &str = "wbf_uniform";
pub const NMS_ROW: &str = "nms";

fn test_comparison(
    test: &Dataset,
    runs: &[ModelRun],
    weights: &[f64],
    wbf: &WbfConfig,
) -> Result<Vec<EvalSummary>> {
    if test.images.is_empty() {
        return Ok(Vec::new());
    }
    let mut rows = Vec::new();
    for run in runs {
        rows.push(evaluate_named(
            &run.model_name,
            &run.restricted_to(&test.images).detections,
            test,
        )?);
    }
    let nms = fuse_detections(runs, &test.images, weights, FuseMethod::Nms, wbf, 0.5)?;
    rows.push(evaluate_named(NMS_ROW, &nms, test)?);
    let uniform = fuse_runs(runs, &test.images, &vec![1.0; runs.len()], wbf)?;
    rows.push(evaluate_named(UNIFORM_ROW, &uniform, test)?);
    if weights.iter().any(|&w| w > 0.0) {
        let fused = fuse_runs(runs, &test.images, weights, wbf)?;
        rows.push(evaluate_named(OPTIMIZED_ROW, &fused, test)?);
    }
    Ok(rows)
}

/// Runs the optimizer on the validation split and scores the result on the test split.
pub fn optimize(
    ds: &Dataset,
    runs: &[ModelRun],
    split: &SplitSpec,
    de: &DeConfig,
    wbf: &WbfConfig,
) -> Result<OptimizeOutcome> {
    ensure!(
        runs.len() >= 2,
        "optimize needs at least two models, got {}",
        runs.len()
    );
    ensure_clean(ds, runs)?;
    let (val, test) = split_dataset(ds, split)?;
    ensure!(!val.images.is_empty(), "the validation split is empty");
    let (best, history) = run_deihdl(de, &val, runs, wbf)?;
    let val_runs: Vec<ModelRun> = runs.iter().map(|r| r.restricted_to(&val.images)).collect();
    let one_hot_fitness = (0..runs.len())
        .map(|m| {
            let w: Vec<f64> = (0..runs.len())
                .map(|k| f64::from(u8::from(k == m)))
                .collect();
            evaluate_fitness(&w, &val, &val_runs, wbf, de.fitness_metric).map_err(Into::into)
        })
        .collect::<Result<Vec<f64>>>()?;
    let names = runs.iter().map(|r| r.model_name.clone()).collect();
    let profile = WeightProfile::new(names, best.weights.clone(), best.fitness_or_zero(), de, wbf)?;
    let comparison = test_comparison(&test, runs, &best.weights, wbf)?;
    Ok(OptimizeOutcome {
        profile,
        history,
        one_hot_fitness,
        comparison,
        validation_images: val.images.len(),
        test_images: test.images.len(),
    })
}

fn metric_name(m: FitnessMetric) -> &'static str {
    match m {
        FitnessMetric::Map50 => "mAP50",
        FitnessMetric::Map50_95 => "mAP50-95",
    }
}

pub fn summary_text(out: &OptimizeOutcome, de: &DeConfig) -> String {
    let p = &out.profile;
    let mut s = String::new();
    let _ = writeln!(s, "fusion weight optimization");
    let _ = writeln!(
        s,
        "images: {} validation, {} test",
        out.validation_images, out.test_images
    );
    let _ = writeln!(
        s,
        "NP {}  G {}  seed {}  fitness {}",
        de.population_size,
        de.generations,
        de.seed,
        metric_name(de.fitness_metric)
    );
    let _ = writeln!(s, "config fingerprint {}", p.config_fingerprint);
    let _ = writeln!(s, "\nbest weights:");
    for (n, w) in p.model_names.iter().zip(&p.weights) {
        let _ = writeln!(s, "  {n:<20} {w:.6}");
    }
    let _ = writeln!(
        s,
        "validation {}: {:.6} ({:.2}%)",
        metric_name(p.fitness_metric),
        p.fitness,
        p.fitness * 100.0
    );
    let _ = writeln!(
        s,
        "fitness evaluations: {}",
        out.history.total_evaluations()
    );
    if !out.comparison.is_empty() {
        let _ = writeln!(s, "\ntest split:\n{}", comparison_table(&out.comparison));
    }
    s
}

/// Writes weights.json, convergence.csv, summary.txt, test_report.json and
/// comparison.md (all deterministic) plus metadata.json.
pub fn write_optimize_outputs(
    out_dir: &Path,
    out: &OptimizeOutcome,
    de: &DeConfig,
    wallclock_s: f64,
) -> Result<()> {
    create_dir(out_dir)?;
    write(&out_dir.join("weights.json"), &out.profile.to_json())?;
    write(&out_dir.join("convergence.csv"), &out.history.to_csv())?;
    write(&out_dir.join("summary.txt"), &summary_text(out, de))?;
    write(
        &out_dir.join("test_report.json"),
        &serde_json::to_string_pretty(&out.comparison)?,
    )?;
    write(
        &out_dir.join("comparison.md"),
        &comparison_table(&out.comparison),
    )?;
    write(
        &out_dir.join("metadata.json"),
        &serde_json::to_string_pretty(&Metadata::now(wallclock_s))?,
    )?;
    Ok(())
}

pub fn cmd_optimize(args: &OptimizeArgs) -> Result<OptimizeOutcome> {
    let start = Instant::now();
    let (ds, runs) = load_inputs(&args.gt, &args.dets)?;
    let out = optimize(&ds, &runs, &args.split, &args.de, &args.wbf)?;
    write_optimize_outputs(&args.out_dir, &out, &args.de, start.elapsed().as_secs_f64())?;
    Ok(out)
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Np,
    G,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Np => "np",
            SweepAxis::G => "g",
        }
    }

    fn apply(self, base: &DeConfig, value: usize) -> DeConfig {
        match self {
            SweepAxis::Np => DeConfig {
                population_size: value,
                ..base.clone()
            },
            SweepAxis::G => DeConfig {
                generations: value,
                ..base.clone()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: usize,
    pub best_fitness: f64,
    pub wallclock_s: f64,
    pub history: ConvergenceHistory,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("axis,value,best_fitness,wallclock_s\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.12},{:.6}",
            r.axis.name(),
            r.value,
            r.best_fitness,
            r.wallclock_s
        );
    }
    s
}

/// Every value's convergence curve in one long table.
pub fn sweep_curves_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("axis,value,generation,best_fitness,mean_fitness\n");
    for r in rows {
        for g in &r.history.records {
            let _ = writeln!(
                s,
                "{},{},{},{:.12},{:.12}",
                r.axis.name(),
                r.value,
                g.generation,
                g.best_fitness,
                g.mean_fitness
            );
        }
    }
    s
}

/// One optimize run per value of `axis`, everything else fixed. Each run's
/// outputs go to `<out_dir>/<axis>_<value>/`; `sweep.csv` and
/// `sweep_curves.csv` summarise them.
pub fn cmd_sweep(args: &OptimizeArgs, axis: SweepAxis, values: &[usize]) -> Result<Vec<SweepRow>> {
    ensure!(!values.is_empty(), "sweep needs at least one value");
    let (ds, runs) = load_inputs(&args.gt, &args.dets)?;
    create_dir(&args.out_dir)?;
    let mut rows = Vec::new();
    for &v in values {
        let de = axis.apply(&args.de, v);
        let start = Instant::now();
        let out = optimize(&ds, &runs, &args.split, &de, &args.wbf)
            .with_context(|| format!("{} = {v}", axis.name()))?;
        let secs = start.elapsed().as_secs_f64();
        write_optimize_outputs(
            &args.out_dir.join(format!("{}_{v}", axis.name())),
            &out,
            &de,
            secs,
        )?;
        rows.push(SweepRow {
            axis,
            value: v,
            best_fitness: out.profile.fitness,
            wallclock_s: secs,
            history: out.history,
        });
    }
    write(&args.out_dir.join("sweep.csv"), &sweep_csv(&rows))?;
    write(
        &args.out_dir.join("sweep_curves.csv"),
        &sweep_curves_csv(&rows),
    )?;
    Ok(rows)
}

// ---------------------------------------------------------------- bench

#[derive(Debug, Clone)]
pub struct BenchArgs {
    /// Box counts for the fusion timing.
    pub sizes: Vec<usize>,
    pub base_np: usize,
    pub base_generations: usize,
    /// Images in the synthetic validation set used for full runs.
    pub images: usize,
    pub repeats: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for BenchArgs {
    fn default() -> Self {
        Self {
            sizes: vec![100, 200, 400, 800],
            base_np: 10,
            base_generations: 10,
            images: 20,
            repeats: 5,
            seed: 0,
            out_dir: PathBuf::from("bench"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchPoint {
    pub axis: &'static str,
    pub value: usize,
    /// Fastest of the repeats.
    pub wallclock_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub points: Vec<BenchPoint>,
    /// Least-squares slope of log(time) against log(value), per axis.
    pub slopes: BTreeMap<&'static str, f64>,
    /// `t(2v) / t(v)` for consecutive doublings, per axis.
    pub doubling_ratios: BTreeMap<&'static str, Vec<f64>>,
}

/// Runs every job once to warm up, then `repeats` rounds in which each job is
/// timed once, interleaved so that load drift hits all jobs alike. Returns the
/// fastest time per job: interference only ever adds time.
fn time_interleaved(repeats: usize, jobs: &mut [Box<dyn FnMut() + '_>]) -> Vec<f64> {
    for job in jobs.iter_mut() {
        job();
    }
    let mut best = vec![f64::INFINITY; jobs.len()];
    for _ in 0..repeats.max(1) {
        for (k, job) in jobs.iter_mut().enumerate() {
            let t = Instant::now();
            job();
            best[k] = best[k].min(t.elapsed().as_secs_f64());
        }
    }
    best
}

pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// One image with `n` boxes spread over three models.
fn wbf_workload(n: usize, seed: u64) -> Vec<Vec<Detection>> {
    let spec = SyntheticSpec {
        images: 1,
        boxes_per_image: [n, n],
        image_size: 4096.0,
        box_size: [16.0, 64.0],
        max_object_overlap: 1.0,
        models: vec![
            NoiseProfile::noisy("a", 2.0, 0.0, 0.0),
            NoiseProfile::noisy("b", 4.0, 0.0, 0.0),
            NoiseProfile::noisy("c", 6.0, 0.0, 0.0),
        ],
        seed,
        ..SyntheticSpec::default()
    };
    let data = generate(&spec).expect("bench spec is valid");
    // n objects -> 3n boxes; keep n in total
    let mut per_model: Vec<Vec<Detection>> = data
        .runs
        .iter()
        .map(|r| r.for_image(ImageId(0)).to_vec())
        .collect();
    let mut left = n;
    for m in per_model.iter_mut() {
        let keep = left.min(n.div_ceil(3));
        m.truncate(keep);
        left -= keep;
    }
    per_model
}

pub fn cmd_bench(args: &BenchArgs) -> Result<BenchReport> {
    ensure!(!args.sizes.is_empty(), "bench needs at least one size");
    ensure!(
        args.base_np >= 4 && args.base_generations >= 1,
        "base NP must be >= 4 and base G >= 1"
    );
    let wbf = WbfConfig::default();
    let workloads: Vec<Vec<Vec<Detection>>> = args
        .sizes
        .iter()
        .map(|&n| wbf_workload(n, args.seed))
        .collect();
    // enough calls per sample to rise above timer noise
    let inner: Vec<usize> = args
        .sizes
        .iter()
        .map(|&n| (20_000 / n.max(1)).max(1))
        .collect();
    let mut jobs: Vec<Box<dyn FnMut() + '_>> = Vec::new();
    for (work, &reps) in workloads.iter().zip(&inner) {
        jobs.push(Box::new(move || {
            for _ in 0..reps {
                std::hint::black_box(weighted_boxes_fusion(work, &[1.0, 0.8, 0.6], &wbf).unwrap());
            }
        }));
    }
    let times = time_interleaved(args.repeats, &mut jobs);
    drop(jobs);
    let mut points: Vec<BenchPoint> = args
        .sizes
        .iter()
        .zip(times.iter().zip(&inner))
        .map(|(&n, (t, &reps))| BenchPoint {
            axis: "n_b",
            value: n,
            wallclock_s: t / reps as f64,
        })
        .collect();

    let data = generate(&SyntheticSpec::planted(args.images, args.seed))?;
    let base = DeConfig {
        population_size: args.base_np,
        generations: args.base_generations,
        seed: args.seed,
        workers: 1,
        ..DeConfig::default()
    };
    let mut configs: Vec<(&'static str, usize, DeConfig)> = Vec::new();
    for k in [1, 2, 4] {
        let g = args.base_generations * k;
        configs.push((
            "g",
            g,
            DeConfig {
                generations: g,
                ..base.clone()
            },
        ));
    }
    for k in [1, 2, 4] {
        let np = args.base_np * k;
        configs.push((
            "np",
            np,
            DeConfig {
                population_size: np,
                ..base.clone()
            },
        ));
    }
    for (_, _, de) in &configs {
        run_deihdl(de, &data.dataset, &data.runs, &wbf)?;
    }
    let mut jobs: Vec<Box<dyn FnMut() + '_>> = configs
        .iter()
        .map(|(_, _, de)| -> Box<dyn FnMut() + '_> {
            let data = &data;
            let wbf = &wbf;
            Box::new(move || {
                // checked above; a failure here cannot happen
                std::hint::black_box(run_deihdl(de, &data.dataset, &data.runs, wbf).ok());
            })
        })
        .collect();
    let times = time_interleaved(args.repeats, &mut jobs);
    drop(jobs);
    for ((axis, value, _), t) in configs.iter().zip(times) {
        points.push(BenchPoint {
            axis,
            value: *value,
            wallclock_s: t,
        });
    }

    let mut slopes = BTreeMap::new();
    let mut doubling_ratios = BTreeMap::new();
    for axis in ["n_b", "g", "np"] {
        let pts: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| p.axis == axis)
            .map(|p| (p.value as f64, p.wallclock_s))
            .collect();
        if pts.len() >= 2 {
            slopes.insert(axis, log_log_slope(&pts));
        }
        let ratios = pts
            .iter()
            .flat_map(|a| {
                pts.iter()
                    .filter(move |b| b.0 == 2.0 * a.0)
                    .map(move |b| b.1 / a.1)
            })
            .collect();
        doubling_ratios.insert(axis, ratios);
    }
    let report = BenchReport {
        points,
        slopes,
        doubling_ratios,
    };
    write_bench(&args.out_dir, &report)?;
    Ok(report)
}

fn write_bench(dir: &Path, r: &BenchReport) -> Result<()> {
    create_dir(dir)?;
    let mut csv = String::from("axis,value,wallclock_s\n");
    for p in &r.points {
        let _ = writeln!(csv, "{},{},{:.9}", p.axis, p.value, p.wallclock_s);
    }
    write(&dir.join("bench.csv"), &csv)?;
    let mut s = String::new();
    for (axis, slope) in &r.slopes {
        let ratios: Vec<String> = r.doubling_ratios[axis]
            .iter()
            .map(|x| format!("{x:.3}"))
            .collect();
        let _ = writeln!(
            s,
            "{axis}: log-log slope {slope:.3}, doubling ratios [{}]",
            ratios.join(", ")
        );
    }
    write(&dir.join("bench_summary.txt"), &s)?;
    Ok(())
}

/// Fails unless every ratio lies in `[lo, hi]`.
pub fn check_ratios(r: &BenchReport, axis: &str, lo: f64, hi: f64) -> Result<()> {
    let ratios = r
        .doubling_ratios
        .get(axis)
        .map(Vec::as_slice)
        .unwrap_or(&[]);
    if ratios.is_empty() {
        bail!("no doubling measured on axis {axis}");
    }
    for x in ratios {
        ensure!(
            (lo..=hi).contains(x),
            "{axis} doubling ratio {x:.3} outside [{lo}, {hi}]"
        );
    }
    Ok(())
}
