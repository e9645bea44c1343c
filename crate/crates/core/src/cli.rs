//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage, 3 configuration or domain error,
//! 4 ingest/IO/format error, 5 numeric error, 6 structural error,
//! 7 an evaluation split scored no comments.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{Config, GnnSection, PredictSection};
use crate::error::{Error, Result};
use crate::estimation::{fit, FitReport};
use crate::eval::{format_grid, run_proportion_sweep, training_pairs, write_grid_csv, write_reports_csv, EvalReport};
use crate::gnn::{train, GnnParams, TraceRow};
use crate::graph::{build_graph, CascadeGraph};
use crate::hawkes::{intensity, EventStream, HawkesParams, Lattice};
use crate::io::{ingest, make_split, save_events, SplitManifest};
use crate::prediction::{predict_counts, Axis, CountForecast, ForecastMode, MonteCarloOptions};
use crate::simulation::{cascade_preset, simulate_topic, StructurePolicy};

pub const EXIT_EMPTY_EVALUATION: i32 = 7;

#[derive(Debug, Parser)]
#[command(name = "opinion-hawkes", version, about = "Hawkes modelling and prediction of comment cascades")]
pub struct Cli {
    /// TOML config file (defaults to $OPINION_HAWKES_CONFIG when set).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit process parameters to an event log.
    Fit(FitArgs),
    /// Generate a synthetic event log.
    Simulate(SimulateArgs),
    /// Forecast per-dimension comment counts for one topic.
    Predict(PredictArgs),
    /// Build the propagation graph of one topic.
    BuildGraph(BuildGraphArgs),
    /// Train the message-passing network.
    TrainGnn(TrainGnnArgs),
    /// Score sentiment and structure prediction over data proportions.
    Evaluate(EvaluateArgs),
    /// Write plot-ready CSV tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub events: PathBuf,
    /// Fitted parameters (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Fit report (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Restrict fitting to the training topics of this split manifest.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Parameters (JSON); omit to use the built-in cascade preset.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Seed for the cascade preset.
    #[arg(long, default_value_t = 0)]
    pub preset_seed: u64,
    /// Write the preset parameters here.
    #[arg(long)]
    pub params_out: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub topics: Option<usize>,
    #[arg(long)]
    pub topic: Option<String>,
    #[arg(long)]
    pub structure_policy: Option<StructurePolicy>,
    #[arg(long)]
    pub max_events: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub events: PathBuf,
    /// Topic to forecast; required when the log holds several.
    #[arg(long)]
    pub topic: Option<String>,
    /// Forecast origin (defaults to the end of the observation window).
    #[arg(long)]
    pub start: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub mode: Option<ForecastMode>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV output (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub topic: Option<String>,
    /// Mark comments after this time as predicted.
    #[arg(long)]
    pub predicted_after: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainGnnArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub events: PathBuf,
    /// Train on the training topics of this manifest (all topics otherwise).
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Checkpoint (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Training trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_cut: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub events: PathBuf,
    /// Comma-separated observed fractions, e.g. `0.15,0.20,0.25`.
    #[arg(long, value_delimiter = ',')]
    pub proportions: Option<Vec<f64>>,
    /// Split manifest; a seeded default split is made when absent.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Fitted parameters; fitted on the training topics when absent.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Network checkpoint; trained on the training topics when absent.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Directory receiving reports.csv, reports.json, grid.csv, summary.txt, split.json.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(subcommand)]
    pub kind: ReportKind,
}

#[derive(Debug, Subcommand)]
pub enum ReportKind {
    /// Intensity of every dimension on a regular time grid.
    Intensity {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        topic: Option<String>,
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Log-likelihood per epoch from a fit report.
    Likelihood {
        #[arg(long)]
        fit_report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Expected counts per dimension, per level and per sentiment class.
    Forecast {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        topic: Option<String>,
        #[arg(long)]
        start: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        mode: Option<ForecastMode>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validation/test grid from evaluation reports.
    Sweep {
        #[arg(long)]
        reports: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.family().exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    let config = Config::load(cli.config.as_deref())?;
    let lattice = config.lattice()?;
    match cli.command {
        Command::Fit(a) => cmd_fit(a, config, lattice),
        Command::Simulate(a) => cmd_simulate(a, config, lattice),
        Command::Predict(a) => cmd_predict(a, config, lattice),
        Command::BuildGraph(a) => cmd_build_graph(a, lattice),
        Command::TrainGnn(a) => cmd_train_gnn(a, config, lattice),
        Command::Evaluate(a) => cmd_evaluate(a, config, lattice),
        Command::Report(a) => cmd_report(a, config, lattice),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn load_params(path: &Path, lattice: Lattice) -> Result<HawkesParams> {
    let p = HawkesParams::load(path)?;
    if p.lattice() != lattice {
        return Err(Error::Config(format!(
            "{}: parameters use a {}x{} lattice, config expects {}x{}",
            path.display(),
            p.lattice().levels,
            p.lattice().sentiments,
            lattice.levels,
            lattice.sentiments
        )));
    }
    Ok(p)
}

fn topic_ids(streams: &[EventStream]) -> Vec<String> {
    streams.iter().map(|s| s.topic().to_string()).collect()
}

fn select_topic(streams: Vec<EventStream>, topic: Option<&str>) -> Result<EventStream> {
    match topic {
        Some(t) => streams
            .into_iter()
            .find(|s| s.topic() == t)
            .ok_or_else(|| Error::Config(format!("topic `{t}` not found in the event log"))),
        None if streams.len() == 1 => Ok(streams.into_iter().next().expect("one stream")),
        None => Err(Error::Config(format!(
            "the event log holds {} topics; choose one with --topic",
            streams.len()
        ))),
    }
}

fn restrict(streams: Vec<EventStream>, keep: &[String]) -> Vec<EventStream> {
    streams.into_iter().filter(|s| keep.iter().any(|k| k == s.topic())).collect()
}

fn cmd_fit(a: FitArgs, config: Config, lattice: Lattice) -> Result<i32> {
    let mut fc = config.fit;
    fc.learning_rate = a.learning_rate.unwrap_or(fc.learning_rate);
    fc.iterations = a.iterations.unwrap_or(fc.iterations);
    fc.batch = a.batch.unwrap_or(fc.batch);
    fc.seed = a.seed.unwrap_or(fc.seed);
    fc.tolerance = a.tolerance.unwrap_or(fc.tolerance);
    let mut streams = ingest(&a.events, lattice)?;
    if let Some(split) = &a.split {
        let m = SplitManifest::load(split)?;
        m.validate(&topic_ids(&streams))?;
        streams = restrict(streams, &m.train);
    }
    let (params, report) = fit(&streams, &fc)?;
    params.save(&a.out)?;
    if let Some(path) = &a.report {
        write_json(&report, path)?;
    }
    println!(
        "log-likelihood {:.6} -> {:.6} after {} epochs (converged: {}, stable: {})",
        report.initial_log_likelihood,
        report.final_log_likelihood,
        report.iterations_run,
        report.converged,
        report.stability.stable
    );
    Ok(0)
}

fn cmd_simulate(a: SimulateArgs, config: Config, lattice: Lattice) -> Result<i32> {
    let mut section = config.simulate;
    let sim = &mut section.sim;
    sim.horizon = a.horizon.unwrap_or(sim.horizon);
    sim.seed = a.seed.unwrap_or(sim.seed);
    sim.max_events = a.max_events.unwrap_or(sim.max_events);
    sim.structure_policy = a.structure_policy.unwrap_or(sim.structure_policy);
    if let Some(t) = a.topic {
        sim.topic = t;
    }
    let topics = a.topics.unwrap_or(section.topics);
    if topics == 0 {
        return Err(Error::domain("topics", "must be >= 1"));
    }
    let params = match &a.params {
        Some(p) => load_params(p, lattice)?,
        None => cascade_preset(lattice, a.preset_seed)?,
    };
    if let Some(path) = &a.params_out {
        params.save(path)?;
    }
    let mut streams = Vec::with_capacity(topics);
    for k in 0..topics {
        let mut cfg = section.sim.clone();
        if topics > 1 {
            cfg.topic = format!("{}{:03}", section.sim.topic, k);
            cfg.seed = section.sim.seed.wrapping_add(k as u64);
        }
        streams.push(simulate_topic(&params, &cfg)?);
    }
    save_events(&streams, &a.out)?;
    let total: usize = streams.iter().map(EventStream::len).sum();
    println!("wrote {total} events in {topics} topic(s) to {}", a.out.display());
    Ok(0)
}

fn forecast_for(params: &HawkesParams, stream: &EventStream, start: Option<f64>, section: &PredictSection) -> Result<CountForecast> {
    let mc = MonteCarloOptions {
        samples: section.samples,
        seed: section.seed,
        ..MonteCarloOptions::default()
    };
    predict_counts(params, stream, start.unwrap_or(stream.horizon()), section.delta, section.mode, mc)
}

fn cmd_predict(a: PredictArgs, config: Config, lattice: Lattice) -> Result<i32> {
    let params = load_params(&a.params, lattice)?;
    let stream = select_topic(ingest(&a.events, lattice)?, a.topic.as_deref())?;
    let mut section = config.predict;
    section.delta = a.delta.unwrap_or(section.delta);
    section.mode = a.mode.unwrap_or(section.mode);
    section.samples = a.samples.unwrap_or(section.samples);
    section.seed = a.seed.unwrap_or(section.seed);
    let f = forecast_for(&params, &stream, a.start, &section)?;
    match &a.out {
        Some(path) => {
            let mut w = create(path)?;
            f.write_csv(&mut w)?;
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        None => f.write_csv(std::io::stdout().lock())?,
    }
    Ok(0)
}

fn cmd_build_graph(a: BuildGraphArgs, lattice: Lattice) -> Result<i32> {
    let params = load_params(&a.params, lattice)?;
    let stream = select_topic(ingest(&a.events, lattice)?, a.topic.as_deref())?;
    let graph = match a.predicted_after {
        None => build_graph(&stream, &params, None)?,
        Some(cut) => {
            let observed = stream.prefix(cut)?;
            let rest = stream.events().iter().filter(|e| e.time > cut).cloned().collect();
            let rest = EventStream::new(stream.topic().to_string(), lattice, rest, stream.horizon())?;
            build_graph(&observed, &params, Some(&rest))?
        }
    };
    graph.save(&a.out)?;
    println!("graph with {} nodes and {} edges written to {}", graph.nodes().len(), graph.edges().len(), a.out.display());
    Ok(0)
}

fn write_trace_csv(trace: &[TraceRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let wrap = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["step", "l_sentiment", "l_struct", "l_total"]).map_err(wrap)?;
    for r in trace {
        w.write_record([r.step.to_string(), r.sentiment.to_string(), r.structure.to_string(), r.total.to_string()])
            .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn train_network(
    streams: &[EventStream],
    params: &HawkesParams,
    section: &GnnSection,
    lattice: Lattice,
) -> Result<(GnnParams, Vec<TraceRow>)> {
    let pairs: Vec<(CascadeGraph, CascadeGraph)> = training_pairs(streams, params, section.train_cut)?;
    let gnn = GnnParams::init(lattice, section.net.clone())?;
    train(&pairs, gnn, &section.train)
}

fn cmd_train_gnn(a: TrainGnnArgs, config: Config, lattice: Lattice) -> Result<i32> {
    let mut section = config.gnn;
    let net = &mut section.net;
    net.d = a.d.unwrap_or(net.d);
    net.steps = a.steps.unwrap_or(net.steps);
    net.lambda1 = a.lambda1.unwrap_or(net.lambda1);
    net.lambda2 = a.lambda2.unwrap_or(net.lambda2);
    net.tau = a.tau.unwrap_or(net.tau);
    net.seed = a.seed.unwrap_or(net.seed);
    section.train.learning_rate = a.learning_rate.unwrap_or(section.train.learning_rate);
    section.train.max_steps = a.max_steps.unwrap_or(section.train.max_steps);
    section.train_cut = a.train_cut.unwrap_or(section.train_cut);
    let params = load_params(&a.params, lattice)?;
    let mut streams = ingest(&a.events, lattice)?;
    if let Some(split) = &a.split {
        let m = SplitManifest::load(split)?;
        m.validate(&topic_ids(&streams))?;
        streams = restrict(streams, &m.train);
    }
    let (gnn, trace) = train_network(&streams, &params, &section, lattice)?;
    gnn.save(&a.out)?;
    if let Some(path) = &a.trace {
        write_trace_csv(&trace, path)?;
    }
    if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
        println!("L_total {:.6} -> {:.6} over {} steps", first.total, last.total, trace.len());
    }
    Ok(0)
}

fn cmd_evaluate(a: EvaluateArgs, config: Config, lattice: Lattice) -> Result<i32> {
    let mut section = config.evaluate;
    section.eval.samples = a.samples.unwrap_or(section.eval.samples);
    section.eval.seed = a.seed.unwrap_or(section.eval.seed);
    section.split_seed = a.split_seed.unwrap_or(section.split_seed);
    let proportions = a.proportions.unwrap_or(section.proportions);

    let streams = ingest(&a.events, lattice)?;
    let ids = topic_ids(&streams);
    let manifest = match &a.split {
        Some(path) => SplitManifest::load(path)?,
        None => make_split(&ids, section.split_seed)?,
    };
    manifest.validate(&ids)?;
    let train_topics = restrict(streams.clone(), &manifest.train);
    let params = match &a.params {
        Some(p) => load_params(p, lattice)?,
        None => fit(&train_topics, &config.fit)?.0,
    };
    let gnn = match &a.checkpoint {
        Some(p) => GnnParams::load(p)?,
        None => train_network(&train_topics, &params, &config.gnn, lattice)?.0,
    };
    let reports = run_proportion_sweep(&streams, &manifest, &proportions, &params, &gnn, &section.eval)?;

    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    manifest.save(&a.out_dir.join("split.json"))?;
    write_json(&reports, &a.out_dir.join("reports.json"))?;
    let path = a.out_dir.join("reports.csv");
    let mut w = create(&path)?;
    write_reports_csv(&reports, &mut w)?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    let path = a.out_dir.join("grid.csv");
    let mut w = create(&path)?;
    write_grid_csv(&reports, &mut w)?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    let summary = format_grid(&reports);
    std::fs::write(a.out_dir.join("summary.txt"), &summary).map_err(|e| Error::io(&a.out_dir, e))?;
    print!("{summary}");

    let empty: Vec<String> = reports
        .iter()
        .filter(|r| r.empty)
        .map(|r| format!("{} at {}", r.split, r.data_proportion))
        .collect();
    if empty.is_empty() {
        Ok(0)
    } else {
        eprintln!("no comments scored for: {}", empty.join(", "));
        Ok(EXIT_EMPTY_EVALUATION)
    }
}

fn cmd_report(a: ReportArgs, config: Config, lattice: Lattice) -> Result<i32> {
    let wrap = |e: csv::Error| Error::Format(e.to_string());
    match a.kind {
        ReportKind::Intensity {
            params,
            events,
            topic,
            points,
            out,
        } => {
            if points < 2 {
                return Err(Error::domain("points", "must be >= 2"));
            }
            let params = load_params(&params, lattice)?;
            let stream = select_topic(ingest(&events, lattice)?, topic.as_deref())?;
            let mut w = csv::Writer::from_writer(create(&out)?);
            w.write_record(["t", "dimension", "level", "sentiment", "intensity"]).map_err(wrap)?;
            for k in 0..points {
                let t = stream.horizon() * k as f64 / (points - 1) as f64;
                for cell in lattice.iter() {
                    let v = intensity(&params, &stream, cell, t)?;
                    w.write_record([
                        t.to_string(),
                        cell.flat.to_string(),
                        cell.level.to_string(),
                        cell.sentiment.to_string(),
                        v.to_string(),
                    ])
                    .map_err(wrap)?;
                }
            }
            w.flush().map_err(|e| Error::io(&out, e))?;
        }
        ReportKind::Likelihood { fit_report, out } => {
            let text = std::fs::read_to_string(&fit_report).map_err(|e| Error::io(&fit_report, e))?;
            let report: FitReport = serde_json::from_str(&text)?;
            let mut w = csv::Writer::from_writer(create(&out)?);
            w.write_record(["epoch", "log_likelihood"]).map_err(wrap)?;
            w.write_record(["0".to_string(), report.initial_log_likelihood.to_string()])
                .map_err(wrap)?;
            for (k, ll) in report.likelihood_trace.iter().enumerate() {
                w.write_record([(k + 1).to_string(), ll.to_string()]).map_err(wrap)?;
            }
            w.flush().map_err(|e| Error::io(&out, e))?;
        }
        ReportKind::Forecast {
            params,
            events,
            topic,
            start,
            delta,
            mode,
            out,
        } => {
            let params = load_params(&params, lattice)?;
            let stream = select_topic(ingest(&events, lattice)?, topic.as_deref())?;
            let mut section = config.predict;
            section.delta = delta.unwrap_or(section.delta);
            section.mode = mode.unwrap_or(section.mode);
            let f = forecast_for(&params, &stream, start, &section)?;
            let mut w = csv::Writer::from_writer(create(&out)?);
            w.write_record(["axis", "index", "expected_count"]).map_err(wrap)?;
            for cell in lattice.iter() {
                w.write_record(["dimension".to_string(), cell.flat.to_string(), f.per_dimension[cell.flat].to_string()])
                    .map_err(wrap)?;
            }
            for (axis, name) in [(Axis::Level, "level"), (Axis::Sentiment, "sentiment")] {
                for (k, v) in f.aggregate(axis).iter().enumerate() {
                    w.write_record([name.to_string(), (k + 1).to_string(), v.to_string()])
                        .map_err(wrap)?;
                }
            }
            w.flush().map_err(|e| Error::io(&out, e))?;
        }
        ReportKind::Sweep { reports, out } => {
            let text = std::fs::read_to_string(&reports).map_err(|e| Error::io(&reports, e))?;
            let reports: Vec<EvalReport> = serde_json::from_str(&text)?;
            let mut w = create(&out)?;
            write_grid_csv(&reports, &mut w)?;
            w.flush().map_err(|e| Error::io(&out, e))?;
        }
    }
    Ok(0)
}
