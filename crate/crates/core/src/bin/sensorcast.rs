//! Command-line front end. Every stage reads and writes plain files, so
//! `detect | correlate | predict | eval score` reproduces `run` exactly.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sensorcast::aging::AgingKind;
use sensorcast::detection::{read_event_table, write_event_table, DetectorKind};
use sensorcast::error::{Error, Result};
use sensorcast::evaluation::{
    emit_plot_points, generate_synthetic, ground_truth_json, read_table, run_sweep, write_table, DataSource,
    Granularity, SweepGrid, SynthConfig,
};
use sensorcast::ingest::{read_stream_table, write_stream_table, IngestOptions};
use sensorcast::pipeline::{
    correlate_stage, detect_stage, predict_stage, run_pipeline, score_stage, InputKind, PipelineConfig,
};

#[derive(Parser)]
#[command(name = "sensorcast", version, about = "Event detection and rule forecasting for sensor streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full chain: detect, correlate, predict, prune, age, score.
    Run {
        #[command(flatten)]
        params: Params,
        /// Numeric table, or an event table with --events.
        #[arg(long)]
        input: PathBuf,
        /// Input is already an event table; skip detection.
        #[arg(long)]
        events: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Numeric table to event table.
    Detect {
        #[command(flatten)]
        params: Params,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Event table to a pattern forest dump.
    Correlate {
        #[command(flatten)]
        params: Params,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Event table to a rules stream and rule pool snapshots.
    Predict {
        #[command(flatten)]
        params: Params,
        #[arg(long)]
        events: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Scoring and parameter sweeps.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// Synthetic data with planted rules.
    Synth {
        /// TOML file with generator settings.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, env = "SENSORCAST_SEED")]
        seed: Option<u64>,
        /// Also write a numeric table.
        #[arg(long)]
        numeric: bool,
        /// Event-free prefix; defaults to 100 with `--numeric` so detector
        /// warm-up sees in-control data.
        #[arg(long)]
        quiet_steps: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Result table to plot-ready CSV files.
    Plotdata {
        #[arg(long)]
        table: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Score a rules stream against the event table it was issued over.
    Score {
        #[command(flatten)]
        params: Params,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a grid of configurations and write a result table.
    Sweep {
        #[command(flatten)]
        params: Params,
        #[arg(long)]
        input: PathBuf,
        /// Input is already an event table.
        #[arg(long)]
        events: bool,
        #[arg(long, value_delimiter = ',')]
        pthr_grid: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        kmax_grid: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        m_grid: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        l_grid: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        detector_grid: Vec<DetectorKind>,
        /// Aging settings as `kind:k`, e.g. `none:0,linear:0.8`.
        #[arg(long, value_delimiter = ',')]
        aging_grid: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Pipeline parameters shared by the stage commands. Flags beat
/// environment variables, which beat the config file.
#[derive(Args, Clone, Default)]
struct Params {
    /// TOML config file.
    #[arg(long, env = "SENSORCAST_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "SENSORCAST_DETECTOR")]
    detector: Option<DetectorKind>,
    #[arg(long = "m", env = "SENSORCAST_M")]
    m: Option<usize>,
    #[arg(long = "l", env = "SENSORCAST_L")]
    l: Option<usize>,
    #[arg(long, env = "SENSORCAST_KMAX")]
    kmax: Option<usize>,
    #[arg(long, env = "SENSORCAST_PTHR")]
    pthr: Option<f64>,
    #[arg(long, env = "SENSORCAST_CANDIDATE_P")]
    candidate_p: Option<f64>,
    #[arg(long, env = "SENSORCAST_AGING")]
    aging: Option<AgingKind>,
    #[arg(long, env = "SENSORCAST_AGING_K")]
    aging_k: Option<f64>,
    #[arg(long, env = "SENSORCAST_AGING_N")]
    aging_n: Option<usize>,
    #[arg(long, env = "SENSORCAST_MEM")]
    mem: Option<u64>,
    #[arg(long, env = "SENSORCAST_CONSTRAINTS")]
    constraints: Option<PathBuf>,
    #[arg(long, env = "SENSORCAST_GRANULARITY")]
    granularity: Option<Granularity>,
    #[arg(long, env = "SENSORCAST_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "SENSORCAST_FILL_FORWARD")]
    fill_forward: bool,
    #[arg(long, env = "SENSORCAST_WINDOW")]
    window: Option<usize>,
    #[arg(long, env = "SENSORCAST_WINDOW_STRIDE")]
    window_stride: Option<usize>,
    #[arg(long, env = "SENSORCAST_SNAPSHOT_EVERY")]
    snapshot_every: Option<u64>,
}

impl Params {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(d) = self.detector {
            cfg.detectors.default.detector = Some(d);
        }
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f.clone() { cfg.$f = v; })*};
        }
        set!(m, l, kmax, pthr, candidate_p, aging, aging_k, mem, granularity, seed, window, snapshot_every);
        if self.aging_n.is_some() {
            cfg.aging_n = self.aging_n;
        }
        if self.constraints.is_some() {
            cfg.constraints = self.constraints.clone();
        }
        if self.window_stride.is_some() {
            cfg.window_stride = self.window_stride;
        }
        if self.fill_forward {
            cfg.fill_forward = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

const NUMERIC_QUIET_STEPS: usize = 100;

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn make_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn parse_aging(text: &str) -> Result<(AgingKind, f64)> {
    let (kind, k) = text.split_once(':').unwrap_or((text, "0"));
    let k = k
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad aging parameter in `{text}`")))?;
    Ok((kind.trim().parse()?, k))
}

fn or_base<T: Clone>(grid: Vec<T>, base: T) -> Vec<T> {
    if grid.is_empty() {
        vec![base]
    } else {
        grid
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            params,
            input,
            events,
            out,
        } => {
            let cfg = params.resolve()?;
            let kind = if events { InputKind::Events } else { InputKind::Numeric };
            let summary = run_pipeline(&cfg, &input, kind, &out)?;
            eprintln!(
                "{} steps, {} rules issued, precision {}",
                summary.steps,
                summary.rules_issued,
                summary.report.precision().map_or("undefined".into(), |p| format!("{p:.4}"))
            );
        }
        Command::Detect { params, input, out } => {
            let cfg = params.resolve()?;
            let steps = detect_stage(&cfg, &input, &out)?;
            eprintln!("{steps} steps");
        }
        Command::Correlate { params, events, out } => {
            let cfg = params.resolve()?;
            let forest = correlate_stage(&cfg, &events, &out)?;
            eprintln!("{} trees, {} nodes", forest.tree_count(), forest.node_count());
        }
        Command::Predict { params, events, out } => {
            let cfg = params.resolve()?;
            let issued = predict_stage(&cfg, &events, &out)?;
            eprintln!("{issued} rules issued");
        }
        Command::Eval {
            command: EvalCommand::Score {
                params,
                events,
                rules,
                out,
            },
        } => {
            let cfg = params.resolve()?;
            let report = score_stage(&cfg, &events, &rules, &out)?;
            eprintln!(
                "precision {}",
                report.precision().map_or("undefined".into(), |p| format!("{p:.4}"))
            );
        }
        Command::Eval {
            command:
                EvalCommand::Sweep {
                    params,
                    input,
                    events,
                    pthr_grid,
                    kmax_grid,
                    m_grid,
                    l_grid,
                    detector_grid,
                    aging_grid,
                    out,
                },
        } => {
            let cfg = params.resolve()?;
            let aging = aging_grid.iter().map(|s| parse_aging(s)).collect::<Result<Vec<_>>>()?;
            let grid = SweepGrid {
                p_thr: or_base(pthr_grid, cfg.pthr),
                kmax: or_base(kmax_grid, cfg.kmax),
                m: or_base(m_grid, cfg.m),
                l: or_base(l_grid, cfg.l),
                detector: or_base(detector_grid, cfg.detectors.default.detector.unwrap_or_default()),
                aging: or_base(aging, (cfg.aging, cfg.aging_k)),
            };
            let rows = if events {
                let (vocab, rows) = read_event_table(&input)?;
                run_sweep(&grid, &cfg, &DataSource::Events(&vocab, &rows))?
            } else {
                let (vocab, rows) = read_stream_table(
                    &input,
                    IngestOptions {
                        fill_forward: cfg.fill_forward,
                    },
                )?;
                run_sweep(&grid, &cfg, &DataSource::Numeric(&vocab, &rows))?
            };
            let mut buf = Vec::new();
            write_table(&mut buf, &rows).map_err(|e| Error::io(&out, e))?;
            fs::write(&out, buf).map_err(|e| Error::io(&out, e))?;
            let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
            eprintln!("{} configurations, {failed} failed", rows.len());
        }
        Command::Synth {
            spec,
            steps,
            seed,
            numeric,
            quiet_steps,
            out,
        } => {
            let mut cfg = match &spec {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                    toml::from_str::<SynthConfig>(&text).map_err(|e| Error::Config(e.to_string()))?
                }
                None => SynthConfig::default(),
            };
            if let Some(s) = steps {
                cfg.steps = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(q) = quiet_steps {
                cfg.quiet_steps = q;
            } else if numeric && spec.is_none() {
                cfg.quiet_steps = NUMERIC_QUIET_STEPS;
            }
            cfg.numeric |= numeric;
            let data = generate_synthetic(&cfg)?;
            make_dir(&out)?;
            let mut buf = Vec::new();
            let events_path = out.join("events.csv");
            write_event_table(&mut buf, &data.vocab, &data.events).map_err(|e| Error::io(&events_path, e))?;
            fs::write(&events_path, buf).map_err(|e| Error::io(&events_path, e))?;
            if let Some(rows) = &data.numeric {
                let path = out.join("numeric.csv");
                let mut buf = Vec::new();
                write_stream_table(&mut buf, &data.vocab, rows).map_err(|e| Error::io(&path, e))?;
                fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
            }
            write_file(&out.join("ground_truth.json"), &ground_truth_json(&cfg, &data))?;
            eprintln!("{} steps, {} planted firings", cfg.steps, data.firings.len());
        }
        Command::Plotdata { table, out } => {
            let text = fs::read_to_string(&table).map_err(|e| Error::io(&table, e))?;
            let files = emit_plot_points(&read_table(&text)?)?;
            make_dir(&out)?;
            for (name, body) in files {
                write_file(&out.join(name), &body)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
