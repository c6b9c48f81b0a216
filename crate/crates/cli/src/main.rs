//! Command-line front end for the foretrack pipeline: generate synthetic
//! scenes, train trajectory predictors, forecast, track detection streams,
//! score results, and run the mode-ablation benchmark.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 failed result check.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use foretrack::geometry::{euclidean, Bounds, Point2, PointSequence};
use foretrack::metrics::{evaluate_tracking, EvalReport, TrajectorySet};
use foretrack::motio::{
    detections_by_frame, dump_config, labeled_entries, parse_mot, resolve_config, write_mot,
    AppConfig, ConfigOverrides, MotRecord, Strictness,
};
use foretrack::predictor::{
    self, build_snapshot, pad_window, Horizon, PredictorModel, TrainOptions, TrainSample,
};
use foretrack::simulator::{generate, standard_benchmark};
use foretrack::tracker::{self, FrameDetections, TrackerMode};

/// Environment variable consulted for the config path when `--config` is
/// not given.
const CONFIG_ENV: &str = "FORETRACK_CONFIG";

#[derive(Debug, Parser)]
#[command(
    name = "foretrack",
    version,
    about = "Prediction-driven multi-object tracking pipeline"
)]
struct Cli {
    /// TOML configuration file; falls back to $FORETRACK_CONFIG, then to
    /// built-in defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Warn about unknown configuration keys instead of failing.
    #[arg(long, global = true)]
    lax_config: bool,

    /// Print the effective configuration as TOML and exit without running
    /// the command.
    #[arg(long, global = true)]
    dump_config: bool,

    /// Override the scene and training seeds.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene: ground truth plus corrupted detections
    Simulate(SimulateArgs),
    /// Train a trajectory predictor on labelled scene files
    Train(TrainArgs),
    /// Forecast each track's next positions from a labelled file
    Predict(PredictArgs),
    /// Run the tracker over a detection file
    Track(TrackArgs),
    /// Score a tracking result against ground truth
    Evaluate(EvaluateArgs),
    /// Run every tracker mode over a frozen benchmark suite
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Ground-truth output file (one row per agent per frame).
    #[arg(long, value_name = "FILE")]
    out_gt: PathBuf,

    /// Detection output file (unlabelled rows).
    #[arg(long, value_name = "FILE")]
    out_det: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Directory of labelled scene files; every *.txt inside is one scene.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,

    /// Which predictor to train.
    #[arg(long, value_name = "short|long", value_parser = parse_horizon)]
    horizon: Horizon,

    /// Checkpoint output file.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,

    /// Loss-curve CSV output; defaults to the checkpoint path with a
    /// .loss.csv extension.
    #[arg(long, value_name = "FILE")]
    loss_curve: Option<PathBuf>,

    /// Hidden state width.
    #[arg(long, value_name = "N")]
    hidden: Option<usize>,

    /// Learning rate.
    #[arg(long, value_name = "R")]
    lr: Option<f64>,

    /// Number of passes over the data.
    #[arg(long, value_name = "E")]
    epochs: Option<usize>,

    /// Mini-batch size.
    #[arg(long, value_name = "B")]
    batch_size: Option<usize>,

    /// Continue training from an existing checkpoint instead of a fresh
    /// initialization.
    #[arg(long, value_name = "FILE")]
    fine_tune: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Labelled input file holding the observed history of each track.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,

    /// Predictor checkpoint (its horizon decides how far ahead).
    #[arg(long, value_name = "FILE")]
    ckpt: PathBuf,

    /// Forecast output file; frames continue past each track's last one.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,

    /// Forecast only this track id.
    #[arg(long, value_name = "ID")]
    id: Option<u32>,

    /// Coordinate bounds used for normalization.
    #[arg(long, value_enum, default_value = "auto")]
    bounds: BoundsChoice,
}

#[derive(Debug, Args)]
struct TrackArgs {
    /// Detection input file.
    #[arg(long, value_name = "FILE")]
    det: PathBuf,

    /// Short-horizon checkpoint (association gates).
    #[arg(long, value_name = "FILE")]
    short: PathBuf,

    /// Long-horizon checkpoint (coasting and merge evidence).
    #[arg(long, value_name = "FILE")]
    long: PathBuf,

    /// Tracking result output file.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,

    /// Tracker variant: T1 associates only, T2 adds the spatial merge test,
    /// T3 the context merge test, T4 requires both.
    #[arg(long, value_name = "T1|T2|T3|T4", value_parser = parse_mode)]
    mode: Option<TrackerMode>,

    #[command(flatten)]
    thresholds: ThresholdArgs,

    /// Nearest-first matching instead of the optimal assignment.
    #[arg(long)]
    greedy: bool,

    /// Coordinate bounds used for normalization.
    #[arg(long, value_enum, default_value = "auto")]
    bounds: BoundsChoice,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Ground-truth file (labelled rows).
    #[arg(long, value_name = "FILE")]
    gt: PathBuf,

    /// Tracking-result file (labelled rows).
    #[arg(long, value_name = "FILE")]
    res: PathBuf,

    /// Match-distance threshold in data units.
    #[arg(long, value_name = "T")]
    threshold: Option<f64>,

    /// Output format: a readable table or key=value lines.
    #[arg(long, value_enum, default_value = "table")]
    format: FormatChoice,
}

#[derive(Debug, Args)]
struct AblateArgs {
    /// Benchmark suite to run.
    #[arg(long, value_enum, default_value = "standard")]
    suite: SuiteChoice,

    /// Short-horizon checkpoint.
    #[arg(long, value_name = "FILE")]
    short: PathBuf,

    /// Long-horizon checkpoint.
    #[arg(long, value_name = "FILE")]
    long: PathBuf,

    /// Match-distance threshold in data units.
    #[arg(long, value_name = "T")]
    threshold: Option<f64>,

    #[command(flatten)]
    thresholds: ThresholdArgs,

    /// Exit with code 3 unless T4 beats T1: MOTA higher by at least 0.05
    /// with fewer identity switches and fewer fragmentations.
    #[arg(long)]
    assert_ordering: bool,
}

/// Tracker thresholds shared by `track` and `ablate`.
#[derive(Debug, Args)]
struct ThresholdArgs {
    /// Association gate (normalized units).
    #[arg(long, value_name = "D")]
    tau_assoc: Option<f64>,

    /// Spatial-dissimilarity merge threshold (normalized units).
    #[arg(long, value_name = "D")]
    tau_sd: Option<f64>,

    /// Context-dissimilarity merge threshold (cosine scale).
    #[arg(long, value_name = "D")]
    tau_cd: Option<f64>,

    /// Frames without a detection before a track is retired.
    #[arg(long, value_name = "N")]
    termination_age: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BoundsChoice {
    /// The configured arena when a config file is in play, inferred
    /// otherwise.
    Auto,
    /// The arena from the configuration.
    Arena,
    /// The tight box around the data, widened by 5% per side.
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatChoice {
    Table,
    Kv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SuiteChoice {
    Standard,
}

fn parse_mode(s: &str) -> Result<TrackerMode, String> {
    TrackerMode::parse(s).ok_or_else(|| format!("expected T1, T2, T3 or T4, got {s:?}"))
}

fn parse_horizon(s: &str) -> Result<Horizon, String> {
    Horizon::parse(s).ok_or_else(|| format!("expected 'short' or 'long', got {s:?}"))
}

/// A result check (loss improvement, mode ordering) failed. Carries its own
/// exit code so scripts can tell "the numbers are bad" from "the run broke".
#[derive(Debug)]
struct CheckFailed(String);

impl fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn main() -> ExitCode {
    // Die quietly when the read end of a pipe goes away (`foretrack ... | head`)
    // instead of panicking on the failed write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<CheckFailed>() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(cli, args),
        Command::Train(args) => cmd_train(cli, args),
        Command::Predict(args) => cmd_predict(cli, args),
        Command::Track(args) => cmd_track(cli, args),
        Command::Evaluate(args) => cmd_evaluate(cli, args),
        Command::Ablate(args) => cmd_ablate(cli, args),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn config_path(cli: &Cli) -> Option<PathBuf> {
    cli.config
        .clone()
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from))
}

/// Resolve defaults, config file and command-line overrides into the
/// effective configuration. Returns `None` when `--dump-config` consumed the
/// invocation.
fn resolve(cli: &Cli, overrides: ConfigOverrides) -> Result<Option<AppConfig>> {
    let path = config_path(cli);
    let strictness = if cli.lax_config {
        Strictness::Lax
    } else {
        Strictness::Strict
    };
    let (config, warnings) = resolve_config(path.as_deref(), strictness, &overrides)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if cli.dump_config {
        print!("{}", dump_config(&config));
        return Ok(None);
    }
    Ok(Some(config))
}

fn read_mot_file(path: &Path) -> Result<Vec<MotRecord>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_mot(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_model(path: &Path) -> Result<PredictorModel> {
    PredictorModel::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn load_model_for(path: &Path, expected: Horizon) -> Result<PredictorModel> {
    let model = load_model(path)?;
    if model.horizon != expected {
        bail!(
            "checkpoint {} holds a {}-horizon predictor, expected {}",
            path.display(),
            model.horizon.as_str(),
            expected.as_str()
        );
    }
    Ok(model)
}

/// Load the short/long pair and adopt their window lengths into the tracker
/// configuration — the checkpoint is authoritative about its architecture.
fn load_model_pair(
    short_path: &Path,
    long_path: &Path,
    config: &mut AppConfig,
) -> Result<(PredictorModel, PredictorModel)> {
    let short = load_model_for(short_path, Horizon::Short)?;
    let long = load_model_for(long_path, Horizon::Long)?;
    let p = &mut config.tracker.predictor;
    p.t_obs_short = short.t_obs();
    p.t_pred_short = short.t_pred();
    p.t_obs_long = long.t_obs();
    p.t_pred_long = long.t_pred();
    Ok((short, long))
}

fn resolve_bounds(
    choice: BoundsChoice,
    have_config_file: bool,
    arena: Bounds,
    points: &[Point2],
) -> Result<Bounds> {
    let use_arena = match choice {
        BoundsChoice::Arena => true,
        BoundsChoice::Infer => false,
        BoundsChoice::Auto => have_config_file,
    };
    let (bounds, source) = if use_arena {
        (arena, "configured arena")
    } else {
        let inferred =
            Bounds::enclosing(points, 0.05).context("inferring bounds from the data")?;
        (inferred, "inferred from the data, 5% margin")
    };
    println!(
        "bounds: [{:.3}, {:.3}]..[{:.3}, {:.3}] ({source})",
        bounds.x_min, bounds.y_min, bounds.x_max, bounds.y_max
    );
    Ok(bounds)
}

fn track_point_records(set: &foretrack::tracker::TrackSet) -> Vec<MotRecord> {
    set.tracks
        .iter()
        .flat_map(|t| {
            t.points
                .iter()
                .map(|&(frame, p)| MotRecord::track_point(frame, t.id, p))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let overrides = ConfigOverrides {
        seed: cli.seed,
        ..Default::default()
    };
    let Some(config) = resolve(cli, overrides)? else {
        return Ok(());
    };
    let (truth, dets) = generate(&config.scene)?;

    let gt: Vec<MotRecord> = truth
        .agents
        .iter()
        .flat_map(|a| {
            a.positions
                .iter()
                .enumerate()
                .map(|(f, p)| MotRecord::track_point(f as i64 + 1, a.id, *p))
        })
        .collect();
    let det: Vec<MotRecord> = dets
        .frames
        .iter()
        .enumerate()
        .flat_map(|(f, frame)| frame.iter().map(move |p| MotRecord::detection(f as i64 + 1, *p)))
        .collect();

    write_file(&args.out_gt, &write_mot(&gt))?;
    write_file(&args.out_det, &write_mot(&det))?;

    let a = &config.scene.arena;
    println!(
        "scene: {} agents, {} frames, arena [{}, {}]..[{}, {}], seed {}",
        truth.agents.len(),
        truth.n_frames,
        a.x_min,
        a.y_min,
        a.x_max,
        a.y_max,
        config.scene.seed
    );
    println!("ground truth: {} points -> {}", gt.len(), args.out_gt.display());
    println!("detections: {} points -> {}", det.len(), args.out_det.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

fn scene_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .txt scene files in {}", dir.display());
    }
    Ok(files)
}

/// Slide windows of `t_obs + t_pred` consecutive frames over every labelled
/// track, normalized into the unit square by the file's own bounds.
/// Neighbour windows come from other tracks observed over the same frames
/// and within `radius` of the subject at the window's last observed frame.
fn training_windows(
    records: &[MotRecord],
    t_obs: usize,
    t_pred: usize,
    radius: f64,
) -> Result<Vec<TrainSample>> {
    let entries: Vec<(u32, i64, Point2)> = labeled_entries(records).collect();
    if entries.is_empty() {
        return Ok(vec![]);
    }
    let points: Vec<Point2> = entries.iter().map(|&(_, _, p)| p).collect();
    let bounds = Bounds::enclosing(&points, 0.05)?;

    let mut tracks: BTreeMap<u32, BTreeMap<i64, Point2>> = BTreeMap::new();
    for (id, frame, p) in entries {
        tracks.entry(id).or_default().insert(frame, bounds.normalize(p));
    }

    let span = (t_obs + t_pred) as i64;
    let mut samples = vec![];
    for (&id, traj) in &tracks {
        for &start in traj.keys() {
            let frames: Vec<i64> = (start..start + span).collect();
            if !frames.iter().all(|f| traj.contains_key(f)) {
                continue;
            }
            let window: Vec<Point2> = frames[..t_obs].iter().map(|f| traj[f]).collect();
            let future: Vec<Point2> = frames[t_obs..].iter().map(|f| traj[f]).collect();
            let anchor = window[t_obs - 1];
            let neighbours: Vec<Vec<Point2>> = tracks
                .iter()
                .filter(|&(&other, _)| other != id)
                .filter_map(|(_, other)| {
                    frames[..t_obs]
                        .iter()
                        .map(|f| other.get(f).copied())
                        .collect::<Option<Vec<Point2>>>()
                })
                .filter(|w| euclidean(anchor, w[t_obs - 1]) <= radius)
                .collect();
            samples.push(TrainSample {
                window,
                neighbours,
                future,
            });
        }
    }
    Ok(samples)
}

fn cmd_train(cli: &Cli, args: &TrainArgs) -> Result<()> {
    let overrides = ConfigOverrides {
        seed: cli.seed,
        hidden_dim: args.hidden,
        lr: args.lr,
        epochs: args.epochs,
        batch_size: args.batch_size,
        ..Default::default()
    };
    let Some(config) = resolve(cli, overrides)? else {
        return Ok(());
    };

    let mut pconfig = config.tracker.predictor;
    let mut init = None;
    if let Some(path) = &args.fine_tune {
        let model = load_model_for(path, args.horizon)?;
        if let Some(h) = args.hidden {
            if h != model.config.hidden_dim {
                bail!(
                    "--hidden {h} conflicts with the checkpoint's hidden_dim {}",
                    model.config.hidden_dim
                );
            }
        }
        pconfig = model.config;
        init = Some(model.params);
    }

    let files = scene_files(&args.data)?;
    let t_obs = pconfig.t_obs(args.horizon);
    let t_pred = pconfig.t_pred(args.horizon);
    let mut samples = vec![];
    for file in &files {
        let records = read_mot_file(file)?;
        let mut scene = training_windows(&records, t_obs, t_pred, pconfig.neighbour_radius)?;
        samples.append(&mut scene);
    }
    if samples.is_empty() {
        bail!(
            "no training windows: no track in {} spans {} consecutive frames",
            args.data.display(),
            t_obs + t_pred
        );
    }

    let opts = TrainOptions {
        lr: config.train.lr,
        epochs: config.train.epochs,
        batch_size: config.train.batch_size,
        seed: config.train.seed,
        init,
    };
    let (params, curve) = predictor::train(&pconfig, args.horizon, &samples, &opts)?;
    let model = PredictorModel {
        config: pconfig,
        horizon: args.horizon,
        params,
    };
    model
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;

    let curve_path = args
        .loss_curve
        .clone()
        .unwrap_or_else(|| args.out.with_extension("loss.csv"));
    let mut csv = String::from("epoch,loss\n");
    for (epoch, loss) in curve.iter().enumerate() {
        let _ = writeln!(csv, "{},{loss}", epoch + 1);
    }
    write_file(&curve_path, &csv)?;

    println!(
        "trained the {}-horizon predictor on {} windows from {} scenes (hidden {}, lr {}, {} epochs)",
        args.horizon.as_str(),
        samples.len(),
        files.len(),
        pconfig.hidden_dim,
        opts.lr,
        opts.epochs
    );
    println!("checkpoint -> {}", args.out.display());
    println!("loss curve -> {}", curve_path.display());
    if let (Some(&first), Some(&last)) = (curve.first(), curve.last()) {
        println!("loss: {first:.6} -> {last:.6}");
        if curve.len() > 1 && last >= first {
            return Err(CheckFailed(format!(
                "training did not improve the loss ({first:.6} -> {last:.6})"
            ))
            .into());
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

fn cmd_predict(cli: &Cli, args: &PredictArgs) -> Result<()> {
    let overrides = ConfigOverrides {
        seed: cli.seed,
        ..Default::default()
    };
    let Some(config) = resolve(cli, overrides)? else {
        return Ok(());
    };
    let model = load_model(&args.ckpt)?;
    let records = read_mot_file(&args.input)?;

    let mut tracks: BTreeMap<u32, Vec<(i64, Point2)>> = BTreeMap::new();
    for (id, frame, p) in labeled_entries(&records) {
        tracks.entry(id).or_default().push((frame, p));
    }
    if tracks.is_empty() {
        bail!("no labelled trajectories in {}", args.input.display());
    }
    if let Some(id) = args.id {
        if !tracks.contains_key(&id) {
            bail!("track {id} does not appear in {}", args.input.display());
        }
    }
    for history in tracks.values_mut() {
        history.sort_by_key(|&(frame, _)| frame);
    }

    let all: Vec<Point2> = tracks.values().flatten().map(|&(_, p)| p).collect();
    let bounds = resolve_bounds(args.bounds, config_path(cli).is_some(), config.scene.arena, &all)?;

    let t_obs = model.t_obs();
    let mut out = vec![];
    let mut forecast = 0usize;
    for (&id, history) in &tracks {
        if args.id.is_some_and(|want| want != id) {
            continue;
        }
        let observed: Vec<Point2> = history.iter().map(|&(_, p)| bounds.normalize(p)).collect();
        let window = pad_window(&observed, t_obs);
        let anchor = *window.last().expect("window is non-empty");
        let neighbours: Vec<Vec<Point2>> = tracks
            .iter()
            .filter(|&(&other, _)| other != id)
            .map(|(_, h)| h.iter().map(|&(_, p)| bounds.normalize(p)).collect::<Vec<_>>())
            .filter(|h| {
                euclidean(anchor, *h.last().expect("history is non-empty"))
                    <= model.config.neighbour_radius
            })
            .map(|h| pad_window(&h, t_obs))
            .collect();

        let last_frame = history.last().expect("history is non-empty").0;
        let trajectory =
            PointSequence::from_start(window.clone(), last_frame - t_obs as i64 + 1)?;
        let snapshot = build_snapshot(&model.config, &model.params, &window, &neighbours)?;
        let prediction = model.predict(&trajectory, &snapshot)?;
        for (k, p) in prediction.positions.points().iter().enumerate() {
            out.push(MotRecord::track_point(
                last_frame + 1 + k as i64,
                id,
                bounds.denormalize(*p),
            ));
        }
        forecast += 1;
    }

    write_file(&args.out, &write_mot(&out))?;
    println!(
        "forecast {} frames ahead for {} tracks ({}-horizon) -> {}",
        model.t_pred(),
        forecast,
        model.horizon.as_str(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// track
// ---------------------------------------------------------------------------

fn cmd_track(cli: &Cli, args: &TrackArgs) -> Result<()> {
    let overrides = ConfigOverrides {
        seed: cli.seed,
        mode: args.mode,
        greedy_assignment: args.greedy.then_some(true),
        tau_assoc: args.thresholds.tau_assoc,
        tau_sd: args.thresholds.tau_sd,
        tau_cd: args.thresholds.tau_cd,
        termination_age: args.thresholds.termination_age,
        ..Default::default()
    };
    let Some(mut config) = resolve(cli, overrides)? else {
        return Ok(());
    };
    let (short, long) = load_model_pair(&args.short, &args.long, &mut config)?;

    let records = read_mot_file(&args.det)?;
    let frames: Vec<FrameDetections> = detections_by_frame(&records)
        .into_iter()
        .map(|(frame, detections)| FrameDetections { frame, detections })
        .collect();
    if frames.is_empty() {
        write_file(&args.out, "")?;
        println!(
            "no detections in {}; wrote an empty result to {}",
            args.det.display(),
            args.out.display()
        );
        return Ok(());
    }

    let all: Vec<Point2> = frames.iter().flat_map(|f| f.detections.iter().copied()).collect();
    let bounds = resolve_bounds(args.bounds, config_path(cli).is_some(), config.scene.arena, &all)?;

    let mode = config.tracker.mode;
    let (set, stats) = tracker::run(&frames, bounds, config.tracker.clone(), short, long)?;
    let out = track_point_records(&set);
    write_file(&args.out, &write_mot(&out))?;

    let matched: usize = stats.iter().map(|s| s.matched).sum();
    let spawned: usize = stats.iter().map(|s| s.spawned).sum();
    let merged: usize = stats.iter().map(|s| s.merged).sum();
    let terminated: usize = stats.iter().map(|s| s.terminated).sum();
    println!(
        "mode {}: {} frames in, {} tracks with {} points -> {}",
        mode.as_str(),
        stats.len(),
        set.tracks.len(),
        out.len(),
        args.out.display()
    );
    println!(
        "associations {matched}, spawns {spawned}, merges {merged}, terminations {terminated}"
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

fn cmd_evaluate(cli: &Cli, args: &EvaluateArgs) -> Result<()> {
    let overrides = ConfigOverrides {
        seed: cli.seed,
        eval_threshold: args.threshold,
        ..Default::default()
    };
    let Some(config) = resolve(cli, overrides)? else {
        return Ok(());
    };
    let gt_records = read_mot_file(&args.gt)?;
    let res_records = read_mot_file(&args.res)?;
    let gt = TrajectorySet::from_entries(labeled_entries(&gt_records))
        .with_context(|| format!("in {}", args.gt.display()))?;
    let res = TrajectorySet::from_entries(labeled_entries(&res_records))
        .with_context(|| format!("in {}", args.res.display()))?;

    if let (Some(gt_min), Some(gt_max), Some(res_min), Some(res_max)) = (
        gt.frames().min(),
        gt.frames().max(),
        res.frames().min(),
        res.frames().max(),
    ) {
        if res_min < gt_min || res_max > gt_max {
            bail!(
                "result covers frames {res_min}..={res_max}, outside the ground truth's {gt_min}..={gt_max}"
            );
        }
    }

    let report = evaluate_tracking(&gt, &res, config.eval.threshold)?;
    match args.format {
        FormatChoice::Table => print!("{}", report.table()),
        FormatChoice::Kv => print!("{}", report.key_values()),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

/// Error counts pooled over every scene of the suite for one tracker mode.
#[derive(Debug, Default)]
struct ModeTotals {
    fp: u64,
    fn_: u64,
    ids: u64,
    frag: u64,
    gt: u64,
    matches: u64,
    motp_weighted: f64,
    mostly_tracked: u64,
    mostly_lost: u64,
    targets: u64,
}

impl ModeTotals {
    fn absorb(&mut self, report: &EvalReport, targets: usize) {
        self.fp += report.false_positives;
        self.fn_ += report.false_negatives;
        self.ids += report.id_switches;
        self.frag += report.fragmentations;
        self.gt += report.gt_total;
        self.matches += report.matches_total;
        self.motp_weighted += report.motp * report.matches_total as f64;
        let n = targets as f64;
        self.mostly_tracked += (report.mostly_tracked_pct / 100.0 * n).round() as u64;
        self.mostly_lost += (report.mostly_lost_pct / 100.0 * n).round() as u64;
        self.targets += targets as u64;
    }

    fn mota(&self) -> f64 {
        1.0 - (self.fp + self.fn_ + self.ids) as f64 / self.gt as f64
    }

    fn motp(&self) -> f64 {
        if self.matches == 0 {
            0.0
        } else {
            self.motp_weighted / self.matches as f64
        }
    }

    fn mostly_tracked_pct(&self) -> f64 {
        100.0 * self.mostly_tracked as f64 / self.targets as f64
    }

    fn mostly_lost_pct(&self) -> f64 {
        100.0 * self.mostly_lost as f64 / self.targets as f64
    }
}

const ALL_MODES: [TrackerMode; 4] = [
    TrackerMode::T1,
    TrackerMode::T2,
    TrackerMode::T3,
    TrackerMode::T4,
];

fn cmd_ablate(cli: &Cli, args: &AblateArgs) -> Result<()> {
    let overrides = ConfigOverrides {
        seed: cli.seed,
        eval_threshold: args.threshold,
        tau_assoc: args.thresholds.tau_assoc,
        tau_sd: args.thresholds.tau_sd,
        tau_cd: args.thresholds.tau_cd,
        termination_age: args.thresholds.termination_age,
        ..Default::default()
    };
    let Some(mut config) = resolve(cli, overrides)? else {
        return Ok(());
    };
    let (short, long) = load_model_pair(&args.short, &args.long, &mut config)?;

    let SuiteChoice::Standard = args.suite;
    let scenes = standard_benchmark();
    let mut totals: Vec<ModeTotals> = ALL_MODES.iter().map(|_| ModeTotals::default()).collect();

    for scene in &scenes {
        let (truth, dets) = generate(&scene.config)?;
        let gt = TrajectorySet::from_entries(truth.agents.iter().flat_map(|a| {
            a.positions
                .iter()
                .enumerate()
                .map(|(f, p)| (a.id, f as i64 + 1, *p))
        }))?;
        let frames: Vec<FrameDetections> = dets
            .frames
            .iter()
            .enumerate()
            .map(|(f, detections)| FrameDetections {
                frame: f as i64 + 1,
                detections: detections.clone(),
            })
            .collect();

        let mut scene_motas = vec![];
        for (mode, total) in ALL_MODES.iter().zip(&mut totals) {
            let mut tracker_config = config.tracker.clone();
            tracker_config.mode = *mode;
            let (set, _) = tracker::run(
                &frames,
                scene.config.arena,
                tracker_config,
                short.clone(),
                long.clone(),
            )?;
            let hyp = TrajectorySet::from_entries(
                set.tracks
                    .iter()
                    .flat_map(|t| t.points.iter().map(|&(f, p)| (t.id, f, p))),
            )?;
            let report = evaluate_tracking(&gt, &hyp, config.eval.threshold)?;
            total.absorb(&report, truth.agents.len());
            scene_motas.push(report.mota);
        }
        println!(
            "scene {:<16} mota {:>7.4} {:>7.4} {:>7.4} {:>7.4}",
            scene.name, scene_motas[0], scene_motas[1], scene_motas[2], scene_motas[3]
        );
    }

    println!(
        "\nsuite standard: {} scenes, {} ground-truth points, match threshold {}",
        scenes.len(),
        totals[0].gt,
        config.eval.threshold
    );
    println!("mode     MOTA    MOTP     IDS    Frag      FP      FN     MT%     ML%");
    for (mode, t) in ALL_MODES.iter().zip(&totals) {
        println!(
            "{:<5} {:>7.4} {:>7.4} {:>7} {:>7} {:>7} {:>7} {:>7.1} {:>7.1}",
            mode.as_str(),
            t.mota(),
            t.motp(),
            t.ids,
            t.frag,
            t.fp,
            t.fn_,
            t.mostly_tracked_pct(),
            t.mostly_lost_pct()
        );
    }

    let (t1, t4) = (&totals[0], &totals[3]);
    let gap = t4.mota() - t1.mota();
    println!(
        "\nordering: MOTA T4-T1 {:+.4} (target >= +0.0500), IDS {} vs {}, Frag {} vs {}",
        gap, t4.ids, t1.ids, t4.frag, t1.frag
    );
    if args.assert_ordering {
        let mut problems = vec![];
        if gap.is_nan() || gap < 0.05 {
            problems.push(format!("MOTA gap {gap:+.4} is below +0.05"));
        }
        if t4.ids >= t1.ids {
            problems.push(format!("IDS did not drop ({} vs {})", t4.ids, t1.ids));
        }
        if t4.frag >= t1.frag {
            problems.push(format!("Frag did not drop ({} vs {})", t4.frag, t1.frag));
        }
        if !problems.is_empty() {
            return Err(CheckFailed(format!(
                "mode ordering check failed: {}",
                problems.join("; ")
            ))
            .into());
        }
        println!("ordering check passed");
    }
    Ok(())
}
