use std::fs;
use std::path::{Path, PathBuf};

use abrlab::abr::AbrKind;
use abrlab::checkpoint::Checkpoint;
use abrlab::config::{parse_strategies, ExperimentConfig};
use abrlab::emulator::qoe_of_log;
use abrlab::energy::session_energy;
use abrlab::experiment::{
    build_report, corpus, env_config, gen_traces, run_comparison, scenario_traces, scenarios, simulate, synthetic_corpus,
    train_predictor, transfer, Engines, SlotForecaster, Split,
};
use abrlab::predictor::{evaluate, score, LstmModel};
use abrlab::rl::train_engines;
use abrlab::trace::{load_trace, minmax_normalize, ThroughputTrace};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "abrlab", version, about = "Energy-aware adaptive bitrate streaming lab")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Global {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write one CSV trace per scenario cell and repetition.
    GenTraces,
    /// Train the source-domain throughput predictor.
    TrainPredictor {
        #[command(flatten)]
        p: PredictorArgs,
    },
    /// Fine-tune the source predictor on target-domain traces.
    FineTune {
        #[command(flatten)]
        p: PredictorArgs,
        /// weight-transfer, last-layer, all-layers or all.
        #[arg(long)]
        strategy: Option<String>,
        /// Source checkpoint (default: <out>/predictor/source.json).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train the buffer and bitrate engines.
    TrainRl {
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Reward |E_policy - E_baseline| instead of the rectified savings.
        #[arg(long)]
        reward_abs: bool,
    },
    /// Play sessions with one policy and store their logs and energy reports.
    Simulate {
        /// bola, rb, fastmpc, robustmpc or rl.
        #[arg(long)]
        abr: String,
        /// Trace CSVs (default: the scenario grid).
        #[arg(long = "trace")]
        traces: Vec<PathBuf>,
        /// Directory holding the RL checkpoints (default: <out>/rl).
        #[arg(long)]
        engines: Option<PathBuf>,
    },
    /// Run every configured policy on every scenario and write the report.
    Compare {
        #[arg(long)]
        engines: Option<PathBuf>,
    },
    /// Rebuild the report from stored session logs.
    Report {
        /// Log directory (default: <out>/logs).
        #[arg(long)]
        logs: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PredictorArgs {
    /// History length H in samples.
    #[arg(long)]
    h: Option<usize>,
    /// Prediction window W in samples.
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Trace CSVs (default: synthetic traces from the config).
    #[arg(long = "trace")]
    traces: Vec<PathBuf>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut cfg = match &cli.global.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.global.seed {
        cfg.seed = s;
        cfg.rl.seed = s;
        cfg.predictor.train.seed = s;
    }
    if let Some(o) = &cli.global.out {
        cfg.out = o.clone();
    }
    match cli.cmd {
        Command::GenTraces => cmd_gen_traces(&cfg),
        Command::TrainPredictor { p } => {
            p.apply(&mut cfg);
            cmd_train_predictor(&cfg, &p.traces)
        }
        Command::FineTune { p, strategy, checkpoint } => {
            p.apply(&mut cfg);
            if let Some(s) = strategy {
                cfg.predictor.strategy = s;
            }
            cmd_fine_tune(&cfg, &p.traces, checkpoint)
        }
        Command::TrainRl { workers, episodes, reward_abs } => {
            if let Some(w) = workers {
                cfg.rl.workers = w;
            }
            if let Some(e) = episodes {
                cfg.rl.episodes = e;
            }
            if reward_abs {
                cfg.rl.env.reward_abs = true;
            }
            cmd_train_rl(&cfg)
        }
        Command::Simulate { abr, traces, engines } => cmd_simulate(&cfg, &abr, &traces, engines),
        Command::Compare { engines } => cmd_compare(&cfg, engines),
        Command::Report { logs } => cmd_report(&cfg, logs),
    }
}

impl PredictorArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(h) = self.h {
            cfg.predictor.history = h;
        }
        if let Some(w) = self.w {
            cfg.predictor.window = w;
        }
        if let Some(e) = self.epochs {
            cfg.predictor.train.epochs = e;
        }
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn load_traces(paths: &[PathBuf]) -> Result<Vec<ThroughputTrace>> {
    paths.iter().map(|p| load_trace(p).with_context(|| format!("loading trace {}", p.display()))).collect()
}

fn cmd_gen_traces(cfg: &ExperimentConfig) -> Result<()> {
    let dir = cfg.out.join("traces");
    let files = gen_traces(cfg, &dir)?;
    println!("wrote {} traces to {}", files.len(), dir.display());
    Ok(())
}

fn cmd_train_predictor(cfg: &ExperimentConfig, traces: &[PathBuf]) -> Result<()> {
    let p = &cfg.predictor;
    let source = if traces.is_empty() {
        synthetic_corpus(&p.source, p.source_traces, cfg.seed, p.history, p.window)?
    } else {
        corpus(&load_traces(traces)?, p.history, p.window)?
    };
    let (model, report) = train_predictor(p, &source, p.train.seed)?;
    let (normalized, _) = minmax_normalize(&source)?;
    let val = &normalized.split(&[0.8, 0.2])[1];
    let (pred, actual) = evaluate(&model, val)?;
    let metrics = score(&pred, &actual)?;
    let dir = cfg.out.join("predictor");
    fs::create_dir_all(&dir)?;
    model.to_checkpoint().save(dir.join("source.json"))?;
    write_json(
        &dir.join("train_metrics.json"),
        &serde_json::json!({ "validation": metrics, "curve": report.curve, "best_epoch": report.best_epoch }),
    )?;
    println!("source model: validation R2 {:.4}, written to {}", metrics.r2, dir.join("source.json").display());
    Ok(())
}

fn cmd_fine_tune(cfg: &ExperimentConfig, traces: &[PathBuf], checkpoint: Option<PathBuf>) -> Result<()> {
    let p = &cfg.predictor;
    let strategies = parse_strategies(&p.strategy)?;
    let dir = cfg.out.join("predictor");
    let ckpt = checkpoint.unwrap_or_else(|| dir.join("source.json"));
    let source = LstmModel::from_checkpoint(&Checkpoint::load(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?)?;
    if source.history != p.history {
        bail!("checkpoint was trained with H={}, but H={} was requested", source.history, p.history);
    }
    let target = if traces.is_empty() {
        synthetic_corpus(&p.target, p.target_traces, cfg.seed.wrapping_add(1), p.history, p.window)?
    } else {
        corpus(&load_traces(traces)?, p.history, p.window)?
    };
    let (report, models) = transfer(&source, &target, &strategies, &p.train)?;
    for (st, m) in &models {
        m.to_checkpoint().save(dir.join(format!("{}.json", st.name())))?;
    }
    write_json(&dir.join("fine_tune_metrics.json"), &report)?;
    println!("{:<16} {:>8} {:>8}", "strategy", "R2", "pearson");
    for r in report.rows.iter().chain(std::iter::once(&report.moving_average)) {
        println!("{:<16} {:>8.4} {:>8}", r.strategy, r.r2, r.pearson.map_or("-".into(), |v| format!("{v:.4}")));
    }
    Ok(())
}

fn cmd_train_rl(cfg: &ExperimentConfig) -> Result<()> {
    let manifest = cfg.manifest.build()?;
    let traces = scenario_traces(cfg, &scenarios(&cfg.grid), Split::Train)?;
    let forecaster = SlotForecaster::from_config(cfg)?;
    let mut spec = cfg.rl;
    spec.env = env_config(cfg);
    let dir = cfg.out.join("rl");
    fs::create_dir_all(&dir)?;
    let mut csv = String::from("engine,episode,trace,steps,reward,actor_loss,critic_loss,entropy\n");
    let trained = train_engines(&manifest, &traces, Some(forecaster.as_dyn()), &spec, |s| {
        csv.push_str(&format!(
            "{:?},{},{},{},{},{},{},{}\n",
            s.engine, s.episode, traces[s.trace].id, s.steps, s.reward, s.actor_loss, s.critic_loss, s.entropy
        ));
        if (s.episode + 1) % 100 == 0 {
            log::info!("{:?} engine: episode {} reward {:.3} entropy {:.3}", s.engine, s.episode + 1, s.reward, s.entropy);
        }
    })?;
    Engines { buffer: trained.buffer, bitrate: trained.bitrate }.save(&dir)?;
    fs::write(dir.join("history.csv"), csv)?;
    println!("trained on {} traces for {} episodes; checkpoints in {}", traces.len(), spec.episodes, dir.display());
    Ok(())
}

fn parse_abr(name: &str) -> Result<AbrKind> {
    AbrKind::parse(name).with_context(|| format!("unknown policy `{name}` (bola, rb, fastmpc, robustmpc, rl)"))
}

fn cmd_simulate(cfg: &ExperimentConfig, abr: &str, traces: &[PathBuf], engines: Option<PathBuf>) -> Result<()> {
    let kind = parse_abr(abr)?;
    let engines = match kind {
        AbrKind::Rl => Some(Engines::load(&engines.unwrap_or_else(|| cfg.out.join("rl")))?),
        _ => None,
    };
    let manifest = cfg.manifest.build()?;
    let traces =
        if traces.is_empty() { scenario_traces(cfg, &scenarios(&cfg.grid), Split::Eval)? } else { load_traces(traces)? };
    let forecaster = SlotForecaster::from_config(cfg)?;
    let env = env_config(cfg);
    let dir = cfg.out.join("simulate").join(kind.name());
    fs::create_dir_all(&dir)?;
    for t in &traces {
        let log = simulate(&manifest, t, kind, cfg.compare.horizon, engines.as_ref(), forecaster.as_dyn(), &env)?;
        let energy = session_energy(&log, &cfg.rrc)?;
        let q = qoe_of_log(&log, env.qoe)?;
        log.save_csv(dir.join(format!("{}.csv", t.id)))?;
        log.save_json(dir.join(format!("{}.json", t.id)))?;
        write_json(&dir.join(format!("{}.energy.json", t.id)), &energy)?;
        println!("{:<28} QoE {:>7.3}  rebuffer {:>6.2} s  energy {:>8.1} J", t.id, q.qoe, q.total_rebuffer, energy.joules_total);
    }
    Ok(())
}

fn cmd_compare(cfg: &ExperimentConfig, engines: Option<PathBuf>) -> Result<()> {
    let kinds = cfg.compare.kinds()?;
    let engines = if kinds.contains(&AbrKind::Rl) {
        match Engines::load(&engines.unwrap_or_else(|| cfg.out.join("rl"))) {
            Ok(e) => Some(e),
            Err(e) => {
                log::warn!("{e}; rl runs will be reported as failed");
                None
            }
        }
    } else {
        None
    };
    let manifest = cfg.manifest.build()?;
    let traces = scenario_traces(cfg, &scenarios(&cfg.grid), Split::Eval)?;
    let forecaster = SlotForecaster::from_config(cfg)?;
    let logs = cfg.out.join("logs");
    if logs.exists() {
        fs::remove_dir_all(&logs).with_context(|| format!("clearing {}", logs.display()))?;
    }
    let env = env_config(cfg);
    let failures =
        run_comparison(&manifest, &traces, &kinds, cfg.compare.horizon, engines.as_ref(), forecaster.as_dyn(), &env, &logs)?;
    if !failures.is_empty() {
        log::warn!("{} runs failed; see the report", failures.len());
    }
    cmd_report(cfg, Some(logs))
}

fn cmd_report(cfg: &ExperimentConfig, logs: Option<PathBuf>) -> Result<()> {
    let logs = logs.unwrap_or_else(|| cfg.out.join("logs"));
    let report = build_report(&logs, &cfg.compare.policies, &cfg.rrc, cfg.rl.env.qoe)?;
    let files = report.write(&cfg.out.join("report"), cfg.compare.svg)?;
    print!("{}", report.to_markdown());
    for f in files {
        log::info!("wrote {}", f.display());
    }
    Ok(())
}
