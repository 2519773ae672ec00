//! Command-line front end: generate benchmarks, train gate networks, run
//! searches or baselines, evaluate runs, and sweep the release rate.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use castsearch::controller::StateMode;
use castsearch::dataio::{
    self, Checkpoint, ControllerSpec, CurveRow, RunMeta, CACHE_CHECKPOINT_FILE, TRAIN_LOG_FILE,
    UPDATE_CHECKPOINT_FILE,
};
use castsearch::engine::{
    face_match, run_movie_with_bank, two_step, EngineConfig, FinalizeKind, MovieResult, MovieStream,
};
use castsearch::metrics::{build_report, recall_at_k_curve, EvalReport};
use castsearch::qlearn::{train_agents, TrainConfig};
use castsearch::synth::{generate_synthetic, SyntheticParams};
use castsearch::{Controller, ControllerKind, ManualThresholds};

#[derive(Parser)]
#[command(
    name = "castsearch",
    version,
    about = "Online multi-modal person search over instance streams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic benchmark manifests
    Simulate(SimulateArgs),
    /// Train the update and cache gate networks
    Train(TrainArgs),
    /// Run the online engine or an offline baseline over manifests
    Run(RunArgs),
    /// Score a finished run against its manifests
    Eval(EvalArgs),
    /// Sweep the release rate and tabulate cache behavior
    Sweep(SweepArgs),
    /// Compare one or more evaluation reports side by side
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Directory the manifests are written into
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    movies: usize,
    /// Cast members per movie
    #[arg(long, default_value_t = 6)]
    cast: usize,
    /// Instances per movie
    #[arg(long, default_value_t = 400)]
    instances: usize,
    /// Feature dimension per modality
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Expected noise norm relative to the unit prototypes
    #[arg(long, default_value_t = 0.35)]
    noise: f64,
    /// Per-step prototype drift norm
    #[arg(long, default_value_t = 0.01)]
    drift: f64,
    /// Fraction of instances drawn from outside the cast
    #[arg(long, default_value_t = 0.1)]
    distractors: f64,
    /// Face cosine between a distractor and the cast member it resembles
    #[arg(long, default_value_t = 0.98)]
    distractor_sim: f64,
    /// Presence rates for face, body, audio
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [1.0, 0.9, 0.4])]
    presence: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum StateModeArg {
    Summary,
    Raw,
}

impl From<StateModeArg> for StateMode {
    fn from(v: StateModeArg) -> StateMode {
        match v {
            StateModeArg::Summary => StateMode::Summary,
            StateModeArg::Raw => StateMode::Raw,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Manifest file or directory of manifests
    #[arg(long)]
    data: PathBuf,
    /// Directory for checkpoints and the training log
    #[arg(long)]
    out: PathBuf,
    /// Training config JSON; the flags below override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// SGD steps per agent per movie per epoch
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Hidden layer width
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long, value_enum)]
    state_mode: Option<StateModeArg>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum BaselineArg {
    /// Static portrait matching on the face modality
    FaceMatch,
    /// Offline pass that labels confident faces, then re-scores the rest
    TwoStep,
}

#[derive(Args)]
struct RunArgs {
    /// Manifest file or directory of manifests
    #[arg(long)]
    data: PathBuf,
    /// Run directory to create
    #[arg(long)]
    out: PathBuf,
    /// "manual", "learned", or a controller spec JSON path
    #[arg(long, default_value = "manual", conflicts_with = "baseline")]
    controller: String,
    /// Checkpoint directory for a learned controller
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Update-gate threshold
    #[arg(long)]
    alpha: Option<f64>,
    /// Cache-gate threshold
    #[arg(long)]
    beta: Option<f64>,
    /// Release-gate threshold
    #[arg(long)]
    gamma: Option<f64>,
    /// Release rate per step of cache age
    #[arg(long)]
    tau: Option<f64>,
    /// Memory blend rate
    #[arg(long)]
    mu: Option<f64>,
    /// Disable the uncertain-instance cache
    #[arg(long)]
    no_cache: bool,
    /// Never claim void memory slots from instances
    #[arg(long)]
    no_first_write: bool,
    /// Drop body and audio from instances, keeping faces only
    #[arg(long)]
    face_only: bool,
    /// Run an offline reference method instead of the online engine
    #[arg(long, value_enum)]
    baseline: Option<BaselineArg>,
    /// Face threshold for the two-step labeling pass
    #[arg(long, default_value_t = 0.9)]
    theta1: f64,
    /// Body weight in the two-step re-scoring pass
    #[arg(long, default_value_t = 0.9)]
    body_weight: f64,
    /// Audio weight in the two-step re-scoring pass
    #[arg(long, default_value_t = 0.1)]
    audio_weight: f64,
    /// Also write each movie's final memory bank as JSON
    #[arg(long)]
    snapshot: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Run directory produced by `run`
    #[arg(long)]
    run: PathBuf,
    /// The manifests the run was made from
    #[arg(long)]
    data: PathBuf,
    /// Report JSON output path
    #[arg(long)]
    out: PathBuf,
    /// Also write cumulative recall curves as CSV
    #[arg(long)]
    curves: Option<PathBuf>,
    /// Recall cutoffs
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 3, 5])]
    ks: Vec<usize>,
}

#[derive(Args)]
struct SweepArgs {
    /// Manifest file or directory of manifests
    #[arg(long)]
    data: PathBuf,
    /// CSV output path
    #[arg(long)]
    out: PathBuf,
    /// Release-rate values to sweep
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.04, 0.08, 0.12, 0.16, 0.20])]
    tau: Vec<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Memory blend rate
    #[arg(long)]
    mu: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Evaluation report JSON (repeatable)
    #[arg(long = "eval", required = true)]
    evals: Vec<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => run_simulate(args),
        Command::Train(args) => run_train(args),
        Command::Run(args) => run_run(args),
        Command::Eval(args) => run_eval(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Report(args) => run_report(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let params = SyntheticParams {
        movies: args.movies,
        cast_count: args.cast,
        instances_per_movie: args.instances,
        dim: args.dim,
        noise: args.noise,
        presence: [args.presence[0], args.presence[1], args.presence[2]],
        drift: args.drift,
        distractor_rate: args.distractors,
        distractor_face_sim: args.distractor_sim,
    };
    let movies = generate_synthetic(&params, args.seed)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    for movie in &movies {
        let path = args.out.join(format!("{}.jsonl", movie.movie_id));
        dataio::save_manifest(movie, &path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "wrote {} manifests ({} instances each) to {}",
        movies.len(),
        args.instances,
        args.out.display()
    );
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<()> {
    let movies = dataio::load_movies(&args.data)?;
    let mut config: TrainConfig = match &args.config {
        Some(path) => serde_json::from_slice(
            &fs::read(path).with_context(|| format!("reading {}", path.display()))?,
        )
        .with_context(|| format!("parsing {}", path.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if let Some(v) = args.iterations {
        config.iterations_per_movie = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.hidden {
        config.hidden_dim = v;
    }
    if let Some(v) = args.state_mode {
        config.state_mode = v.into();
    }

    let (update_net, cache_net, log) = train_agents(&movies, &config)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let epoch = config.epochs as u64;
    dataio::save_checkpoint(
        &Checkpoint::from_network(&update_net, config.state_mode, config.seed, epoch),
        &args.out.join(UPDATE_CHECKPOINT_FILE),
    )?;
    dataio::save_checkpoint(
        &Checkpoint::from_network(&cache_net, config.state_mode, config.seed, epoch),
        &args.out.join(CACHE_CHECKPOINT_FILE),
    )?;
    dataio::save_train_log(&log, &args.out.join(TRAIN_LOG_FILE))?;
    let spec = ControllerSpec {
        kind: ControllerKind::Learned,
        alpha: None,
        beta: None,
        gamma: Some(config.gamma),
        tau: Some(config.tau),
        state_mode: Some(config.state_mode),
        checkpoint: Some(args.out.clone()),
    };
    dataio::save_controller_spec(&spec, &args.out.join("controller.json"))?;

    if let Some(last) = log.epochs.last() {
        println!(
            "trained {} epochs on {} movies: losses {:.6}/{:.6}, mean returns {:.3}/{:.3} (update/cache)",
            log.epochs.len(),
            movies.len(),
            last.update_mean_loss,
            last.cache_mean_loss,
            last.update_mean_return,
            last.cache_mean_return,
        );
    }
    println!("checkpoints in {}", args.out.display());
    Ok(())
}

fn thresholds_from_flags(args: &RunArgs, base: ManualThresholds) -> ManualThresholds {
    ManualThresholds {
        alpha: args.alpha.unwrap_or(base.alpha),
        beta: args.beta.unwrap_or(base.beta),
        gamma: args.gamma.unwrap_or(base.gamma),
        tau: args.tau.unwrap_or(base.tau),
    }
}

fn build_controller(args: &RunArgs) -> Result<Controller> {
    let spec = match args.controller.as_str() {
        "manual" => {
            ControllerSpec::manual(thresholds_from_flags(args, ManualThresholds::default()))
        }
        "learned" => {
            let checkpoint = args
                .checkpoint
                .clone()
                .context("--controller learned needs --checkpoint")?;
            let t = thresholds_from_flags(args, ManualThresholds::default());
            ControllerSpec {
                kind: ControllerKind::Learned,
                alpha: None,
                beta: None,
                gamma: Some(t.gamma),
                tau: Some(t.tau),
                state_mode: None,
                checkpoint: Some(checkpoint),
            }
        }
        path => {
            let mut spec = dataio::load_controller_spec(Path::new(path))
                .with_context(|| format!("loading controller spec {path}"))?;
            let t = thresholds_from_flags(args, spec.thresholds());
            spec.alpha = Some(t.alpha);
            spec.beta = Some(t.beta);
            spec.gamma = Some(t.gamma);
            spec.tau = Some(t.tau);
            if args.checkpoint.is_some() {
                spec.checkpoint = args.checkpoint.clone();
            }
            spec
        }
    };
    Ok(spec.build()?)
}

fn run_run(args: RunArgs) -> Result<()> {
    let mut movies = dataio::load_movies(&args.data)?;
    let modalities = if args.face_only {
        [true, false, false]
    } else {
        [true, true, true]
    };
    if args.face_only {
        movies = movies.iter().map(|m| m.masked(modalities)).collect();
    }

    let mut engine = EngineConfig::default();
    if let Some(mu) = args.mu {
        engine.blend_rate = mu;
    }
    if args.no_cache {
        engine.use_cache = false;
    }
    if args.no_first_write {
        engine.first_write = false;
    }

    let mut results: Vec<MovieResult> = Vec::with_capacity(movies.len());
    let mut snapshots = Vec::new();
    match args.baseline {
        Some(BaselineArg::FaceMatch) => {
            for movie in &movies {
                results.push(face_match(movie)?);
            }
        }
        Some(BaselineArg::TwoStep) => {
            let use_audio = args.audio_weight > 0.0;
            for movie in &movies {
                results.push(two_step(
                    movie,
                    use_audio,
                    args.theta1,
                    args.body_weight,
                    args.audio_weight,
                )?);
            }
        }
        None => {
            let mut controller = build_controller(&args)?;
            for movie in &movies {
                let (result, bank) = run_movie_with_bank(movie, &mut controller, &engine)?;
                if args.snapshot {
                    snapshots.push((result.movie_id.clone(), bank.snapshot()));
                }
                results.push(result);
            }
        }
    }

    let offline = results.iter().any(|r| r.offline);
    let mut notes = Vec::new();
    for r in &results {
        for n in &r.notes {
            notes.push(format!("{}: {n}", r.movie_id));
        }
    }
    let meta = RunMeta {
        method: results[0].method.clone(),
        offline,
        engine,
        modalities,
        notes,
    };
    dataio::save_run(&args.out, &meta, &results)?;
    for (movie_id, snap) in &snapshots {
        let path = args.out.join(format!(
            "{}.memory.json",
            dataio::sanitize_file_stem(movie_id)
        ));
        dataio::save_snapshot(snap, &path)?;
    }
    println!(
        "ran {} movies with method {} -> {}",
        results.len(),
        meta.method,
        args.out.display()
    );
    Ok(())
}

fn pair_with_movies<'a>(
    results: &'a [MovieResult],
    movies: &'a [MovieStream],
) -> Result<Vec<(&'a MovieResult, &'a MovieStream)>> {
    let by_id: BTreeMap<&str, &MovieStream> =
        movies.iter().map(|m| (m.movie_id.as_str(), m)).collect();
    results
        .iter()
        .map(|r| {
            by_id
                .get(r.movie_id.as_str())
                .map(|m| (r, *m))
                .with_context(|| format!("run contains {} but the data does not", r.movie_id))
        })
        .collect()
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let (_, results) = dataio::load_run(&args.run)?;
    let movies = dataio::load_movies(&args.data)?;
    let pairs = pair_with_movies(&results, &movies)?;
    let report = build_report(&pairs, &args.ks)?;
    dataio::save_report(&report, &args.out)?;
    if let Some(curves_path) = &args.curves {
        let mut rows: Vec<CurveRow> = Vec::new();
        for (result, movie) in &pairs {
            for &k in &args.ks {
                let points = recall_at_k_curve(&result.trace, movie, k)?;
                rows.extend(dataio::curve_rows(&result.movie_id, k, &points));
            }
        }
        let mut buf = Vec::new();
        dataio::write_curves_csv(&rows, &mut buf)?;
        fs::write(curves_path, buf)
            .with_context(|| format!("writing {}", curves_path.display()))?;
    }
    print_report(&report);
    println!("report saved to {}", args.out.display());
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => "-".to_string(),
    }
}

fn print_report(report: &EvalReport) {
    println!("method {}: {} movies", report.method, report.movie_count);
    println!("  mAP {}", fmt_opt(report.mean_average_precision));
    for (k, v) in &report.recall_at {
        println!("  final R@{k} {}", fmt_opt(*v));
    }
    if let Some(mean) = report.mean_cache_size {
        println!(
            "  cache: mean occupancy {mean:.2}, {} pushes",
            report.total_cache_pushes
        );
    }
    for (name, stat) in &report.update_similarity {
        println!(
            "  update similarity {name}: mean {:.4} sd {:.4} over {} writes",
            stat.mean, stat.std, stat.count
        );
    }
}

#[derive(serde::Serialize)]
struct SweepRow {
    tau: f64,
    mean_occupancy: f64,
    final_occupancy: f64,
    released: u64,
    flushed: u64,
    map: String,
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    if args.tau.is_empty() {
        bail!("--tau needs at least one value");
    }
    let movies = dataio::load_movies(&args.data)?;
    let mut engine = EngineConfig::default();
    if let Some(mu) = args.mu {
        engine.blend_rate = mu;
    }
    let base = ManualThresholds::default();
    let mut rows = Vec::with_capacity(args.tau.len());
    for &tau in &args.tau {
        let thresholds = ManualThresholds {
            alpha: args.alpha.unwrap_or(base.alpha),
            beta: args.beta.unwrap_or(base.beta),
            gamma: args.gamma.unwrap_or(base.gamma),
            tau,
        };
        let mut controller = Controller::manual(thresholds)?;
        let mut results = Vec::with_capacity(movies.len());
        for movie in &movies {
            let (result, _) = run_movie_with_bank(movie, &mut controller, &engine)?;
            results.push(result);
        }
        let mut occupancy_sum = 0.0;
        let mut occupancy_n = 0u64;
        let mut final_sum = 0.0;
        let mut released = 0u64;
        let mut flushed = 0u64;
        for r in &results {
            for p in &r.cache_series {
                occupancy_sum += p.current_size as f64;
                occupancy_n += 1;
            }
            if let Some(last) = r.cache_series.last() {
                final_sum += last.current_size as f64;
            }
            released += r
                .trace
                .finalizations()
                .filter(|f| f.kind == FinalizeKind::Released)
                .count() as u64;
            flushed += r.trace.flushed.len() as u64;
        }
        let pairs = pair_with_movies(&results, &movies)?;
        let report = build_report(&pairs, &[1])?;
        rows.push(SweepRow {
            tau,
            mean_occupancy: if occupancy_n > 0 {
                occupancy_sum / occupancy_n as f64
            } else {
                0.0
            },
            final_occupancy: final_sum / movies.len().max(1) as f64,
            released,
            flushed,
            map: fmt_opt(report.mean_average_precision),
        });
    }

    let mut wtr = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        wtr.serialize(row)?;
    }
    let bytes = wtr.into_inner().context("flushing sweep CSV")?;
    fs::write(&args.out, bytes).with_context(|| format!("writing {}", args.out.display()))?;

    println!("tau      mean_occ  final_occ  released  flushed  mAP");
    for r in &rows {
        println!(
            "{:<8.4} {:<9.2} {:<10.2} {:<9} {:<8} {}",
            r.tau, r.mean_occupancy, r.final_occupancy, r.released, r.flushed, r.map
        );
    }
    println!("sweep saved to {}", args.out.display());
    Ok(())
}

fn run_report(args: ReportArgs) -> Result<()> {
    for path in &args.evals {
        let report =
            dataio::load_report(path).with_context(|| format!("loading {}", path.display()))?;
        print_report(&report);
    }
    Ok(())
}
