//! Scenario grid, policy runs and the comparison report.
//!
//! Reports are built only from stored session logs, so `report` can rebuild
//! the same bytes later without re-running anything.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abr::{baseline_policy, AbrKind};
use crate::checkpoint::Checkpoint;
use crate::config::{ExperimentConfig, GridConfig, PredictorConfig};
use crate::emulator::{qoe_of_log, run_session, Forecaster, HarmonicForecaster, QoeParams, SessionLog, VideoManifest};
use crate::energy::{extra_playtime, session_energy, EnergyReport, RrcConfig};
use crate::error::{Error, Result};
use crate::predictor::{
    evaluate, evaluate_baseline, fine_tune, score, train_source, BaselineKind, FineTuneStrategy, LstmModel, TrainConfig, TrainReport,
};
use crate::rl::{ActionMode, EngineKind, EnvConfig, PolicyModel, RlBitrate, RlBuffer};
use crate::trace::{create_samples, generate_synthetic, minmax_normalize, save_trace, SampleSet, SynthConfig, ThroughputTrace};

/// One cell of the scenario grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub load: f64,
    pub volatility: f64,
    pub handover_rate: f64,
}

impl Scenario {
    pub fn synth(&self, base: &SynthConfig, seed: u64) -> SynthConfig {
        SynthConfig {
            mean_throughput: self.load,
            noise_std: self.volatility * self.load,
            handover_rate: self.handover_rate,
            seed,
            ..base.clone()
        }
    }
}

fn level_name(axis: &str, i: usize, n: usize) -> String {
    let names: &[&str] = match n {
        1 => &["mid"],
        2 => &["low", "high"],
        3 => &["low", "mid", "high"],
        _ => &[],
    };
    match names.get(i) {
        Some(s) => format!("{axis}-{s}"),
        None => format!("{axis}{i}"),
    }
}

/// All cells in load-major order.
pub fn scenarios(grid: &GridConfig) -> Vec<Scenario> {
    let mut out = Vec::new();
    for (i, &load) in grid.loads.iter().enumerate() {
        for (j, &volatility) in grid.volatility.iter().enumerate() {
            for (k, &handover_rate) in grid.handover_rates.iter().enumerate() {
                let mut parts = vec![level_name("load", i, grid.loads.len()), level_name("vol", j, grid.volatility.len())];
                if grid.handover_rates.len() > 1 {
                    parts.push(level_name("ho", k, grid.handover_rates.len()));
                }
                out.push(Scenario { name: parts.join("_"), load, volatility, handover_rate });
            }
        }
    }
    out
}

/// Cells at the highest volatility level.
pub fn volatile_scenarios(grid: &GridConfig) -> Vec<Scenario> {
    let top = grid.volatility.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    scenarios(grid).into_iter().filter(|s| s.volatility == top).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Eval,
    Train,
}

/// Trace ids are `<scenario>-r<rep>` (evaluation) or `<scenario>-t<rep>` (training).
pub fn scenario_of(trace_id: &str) -> &str {
    match trace_id.rfind(['-']) {
        Some(i) if trace_id[i + 1..].starts_with(['r', 't']) && trace_id[i + 2..].chars().all(|c| c.is_ascii_digit()) => {
            &trace_id[..i]
        }
        _ => trace_id,
    }
}

fn trace_seed(seed: u64, cell: usize, rep: usize, split: Split) -> u64 {
    let s = match split {
        Split::Eval => 0,
        Split::Train => 1,
    };
    seed.wrapping_mul(1_000_003).wrapping_add((s * 1_000_000 + cell * 1000 + rep) as u64)
}

pub fn scenario_traces(cfg: &ExperimentConfig, cells: &[Scenario], split: Split) -> Result<Vec<ThroughputTrace>> {
    let all = scenarios(&cfg.grid);
    let (reps, tag) = match split {
        Split::Eval => (cfg.grid.traces_per_cell, 'r'),
        Split::Train => (cfg.grid.train_traces_per_cell, 't'),
    };
    let mut out = Vec::new();
    for sc in cells {
        let cell = all.iter().position(|a| a.name == sc.name).unwrap_or(0);
        for rep in 0..reps {
            let mut t = generate_synthetic(&sc.synth(&cfg.synth, trace_seed(cfg.seed, cell, rep, split)))?;
            t.id = format!("{}-{tag}{rep}", sc.name);
            out.push(t);
        }
    }
    Ok(out)
}

/// Write every evaluation trace of the grid as CSV into `dir`.
pub fn gen_traces(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let traces = scenario_traces(cfg, &scenarios(&cfg.grid), Split::Eval)?;
    traces
        .iter()
        .map(|t| {
            let p = dir.join(format!("{}.csv", t.id));
            save_trace(t, &p)?;
            Ok(p)
        })
        .collect()
}

/// Slot forecaster: a stored predictor or the harmonic mean of recent samples.
pub enum SlotForecaster {
    Harmonic(HarmonicForecaster),
    Lstm(LstmModel),
}

impl SlotForecaster {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        match &cfg.predictor.checkpoint {
            Some(p) => Ok(SlotForecaster::Lstm(LstmModel::from_checkpoint(&Checkpoint::load(p)?)?)),
            None => Ok(SlotForecaster::Harmonic(HarmonicForecaster::default())),
        }
    }

    pub fn as_dyn(&self) -> &dyn Forecaster {
        match self {
            SlotForecaster::Harmonic(h) => h,
            SlotForecaster::Lstm(m) => m,
        }
    }
}

/// Trained engines of the cascade.
#[derive(Debug, Clone)]
pub struct Engines {
    pub buffer: PolicyModel,
    pub bitrate: PolicyModel,
}

pub const BUFFER_CHECKPOINT: &str = "buffer.json";
pub const BITRATE_CHECKPOINT: &str = "bitrate.json";

impl Engines {
    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str, kind| -> Result<PolicyModel> {
            let p = dir.join(name);
            if !p.exists() {
                return Err(Error::Invalid(format!("missing RL checkpoint {} (run train-rl first)", p.display())));
            }
            PolicyModel::from_checkpoint(&Checkpoint::load(&p)?, kind)
        };
        Ok(Engines { buffer: read(BUFFER_CHECKPOINT, EngineKind::Buffer)?, bitrate: read(BITRATE_CHECKPOINT, EngineKind::Bitrate)? })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.buffer.to_checkpoint().save(dir.join(BUFFER_CHECKPOINT))?;
        self.bitrate.to_checkpoint().save(dir.join(BITRATE_CHECKPOINT))
    }
}

/// Play one session. Baselines keep the initial cap; `rl` runs the cascade
/// with both engines acting greedily.
pub fn simulate(
    manifest: &VideoManifest,
    trace: &ThroughputTrace,
    kind: AbrKind,
    horizon: usize,
    engines: Option<&Engines>,
    forecaster: &dyn Forecaster,
    env: &EnvConfig,
) -> Result<SessionLog> {
    match kind {
        AbrKind::Rl => {
            let e = engines.ok_or_else(|| Error::Invalid("policy `rl` needs trained engines".into()))?;
            let mut buffer = RlBuffer::new(&e.buffer, ActionMode::Greedy, env, 0);
            let mut bitrate = RlBitrate::new(&e.bitrate, ActionMode::Greedy, 0);
            run_session(manifest, trace, &mut bitrate, Some(&mut buffer), Some(forecaster), &env.session)
        }
        _ => {
            let mut p = baseline_policy(kind, horizon)?;
            run_session(manifest, trace, p.as_mut(), None, Some(forecaster), &env.session)
        }
    }
}

/// Environment settings implied by an experiment config.
pub fn env_config(cfg: &ExperimentConfig) -> EnvConfig {
    EnvConfig { rrc: cfg.rrc, ..cfg.rl.env }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub policy: String,
    pub trace: String,
    pub error: String,
}

pub const FAILURES_FILE: &str = "failures.json";

/// Run every policy on every trace and store the logs under
/// `logs/<policy>/<trace>.json`. Failing cells are recorded and skipped.
#[allow(clippy::too_many_arguments)]
pub fn run_comparison(
    manifest: &VideoManifest,
    traces: &[ThroughputTrace],
    kinds: &[AbrKind],
    horizon: usize,
    engines: Option<&Engines>,
    forecaster: &dyn Forecaster,
    env: &EnvConfig,
    logs: &Path,
) -> Result<Vec<Failure>> {
    let cells: Vec<(AbrKind, &ThroughputTrace)> = kinds.iter().flat_map(|k| traces.iter().map(move |t| (*k, t))).collect();
    let results: Vec<(AbrKind, &ThroughputTrace, Result<SessionLog>)> = cells
        .par_iter()
        .map(|&(k, t)| (k, t, simulate(manifest, t, k, horizon, engines, forecaster, env)))
        .collect();
    let mut failures = Vec::new();
    for (k, t, r) in results {
        match r {
            Ok(log) => {
                let dir = logs.join(k.name());
                fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                log.save_json(dir.join(format!("{}.json", t.id)))?;
            }
            Err(e) => {
                log::warn!("{} on {} failed: {e}", k.name(), t.id);
                failures.push(Failure { policy: k.name().into(), trace: t.id.clone(), error: e.to_string() });
            }
        }
    }
    fs::create_dir_all(logs).map_err(|e| Error::io(logs, e))?;
    let p = logs.join(FAILURES_FILE);
    let text = serde_json::to_string_pretty(&failures).map_err(|e| Error::Invalid(e.to_string()))?;
    fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    Ok(failures)
}

/// Aggregated metrics of one policy over one scenario (or `all`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub policy: String,
    pub scenario: String,
    pub sessions: usize,
    pub qoe: f64,
    pub mean_bitrate: f64,
    /// Mean |ΔR| penalty term.
    pub bitrate_variation: f64,
    pub rebuffer_s: f64,
    pub rebuffer_events: f64,
    pub joules: f64,
    pub duration_s: f64,
    /// Seconds of extra playback relative to the reference policy.
    pub extra_playtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Policy with the highest mean energy; extra playtime is measured against it.
    pub reference: String,
    /// Per-policy aggregates first, then per-scenario rows.
    pub rows: Vec<ReportRow>,
    pub failures: Vec<Failure>,
}

pub const ALL_SCENARIOS: &str = "all";

#[derive(Default, Clone, Copy)]
struct Acc {
    n: usize,
    qoe: f64,
    bitrate: f64,
    variation: f64,
    rebuffer: f64,
    events: f64,
    joules: f64,
    duration: f64,
}

impl Acc {
    fn push(&mut self, log: &SessionLog, energy: &EnergyReport, qoe: QoeParams) -> Result<()> {
        let b = qoe_of_log(log, qoe)?;
        self.n += 1;
        self.qoe += b.qoe;
        self.bitrate += b.mean_bitrate;
        self.variation += b.smoothness_penalty;
        self.rebuffer += b.total_rebuffer;
        self.events += b.rebuffer_events as f64;
        self.joules += energy.joules_total;
        self.duration += energy.duration;
        Ok(())
    }

    fn row(&self, policy: &str, scenario: &str) -> ReportRow {
        let n = self.n.max(1) as f64;
        ReportRow {
            policy: policy.into(),
            scenario: scenario.into(),
            sessions: self.n,
            qoe: self.qoe / n,
            mean_bitrate: self.bitrate / n,
            bitrate_variation: self.variation / n,
            rebuffer_s: self.rebuffer / n,
            rebuffer_events: self.events / n,
            joules: self.joules / n,
            duration_s: self.duration / n,
            extra_playtime_s: 0.0,
        }
    }
}

/// Policy directories under `logs`, in the order given, else sorted by name.
fn policy_dirs(logs: &Path, order: &[String]) -> Result<Vec<String>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(logs).map_err(|e| Error::io(logs, e))? {
        let entry = entry.map_err(|e| Error::io(logs, e))?;
        if entry.path().is_dir() {
            found.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    found.sort();
    let mut out: Vec<String> = order.iter().filter(|p| found.contains(p)).cloned().collect();
    out.extend(found.into_iter().filter(|p| !order.contains(p)));
    Ok(out)
}

/// Build the report from the logs under `logs`.
pub fn build_report(logs: &Path, order: &[String], rrc: &RrcConfig, qoe: QoeParams) -> Result<ComparisonReport> {
    let mut totals: Vec<(String, Acc)> = Vec::new();
    let mut cells: BTreeMap<(String, usize), Acc> = BTreeMap::new();
    let policies = policy_dirs(logs, order)?;
    for (pi, policy) in policies.iter().enumerate() {
        let dir = logs.join(policy);
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let mut total = Acc::default();
        for f in files {
            let log = SessionLog::load_json(&f)?;
            let energy = session_energy(&log, rrc)?;
            total.push(&log, &energy, qoe)?;
            cells.entry((scenario_of(&log.trace_id).to_string(), pi)).or_default().push(&log, &energy, qoe)?;
        }
        totals.push((policy.clone(), total));
    }
    let reference = totals
        .iter()
        .filter(|(_, a)| a.n > 0)
        .fold(None::<(&String, f64)>, |best, (p, a)| {
            let j = a.joules / a.n as f64;
            match best {
                Some((_, bj)) if bj >= j => best,
                _ => Some((p, j)),
            }
        })
        .map(|(p, _)| p.clone())
        .ok_or_else(|| Error::Invalid(format!("no session logs under {}", logs.display())))?;

    let mut rows: Vec<ReportRow> = totals.iter().map(|(p, a)| a.row(p, ALL_SCENARIOS)).collect();
    for ((scenario, pi), acc) in &cells {
        rows.push(acc.row(&policies[*pi], scenario));
    }
    rows[totals.len()..].sort_by(|a, b| {
        let pa = policies.iter().position(|p| *p == a.policy);
        let pb = policies.iter().position(|p| *p == b.policy);
        a.scenario.cmp(&b.scenario).then(pa.cmp(&pb))
    });
    let ref_joules: BTreeMap<String, f64> =
        rows.iter().filter(|r| r.policy == reference).map(|r| (r.scenario.clone(), r.joules)).collect();
    for r in &mut rows {
        if let Some(&e_ref) = ref_joules.get(&r.scenario) {
            r.extra_playtime_s = extra_playtime(e_ref, r.joules, r.duration_s)?;
        }
    }

    let failures = match fs::read_to_string(logs.join(FAILURES_FILE)) {
        Ok(text) => serde_json::from_str(&text).map_err(|e| Error::MalformedLog(e.to_string()))?,
        Err(_) => Vec::new(),
    };
    Ok(ComparisonReport { reference, rows, failures })
}

pub const CSV_HEADER: &str =
    "policy,scenario,sessions,qoe,mean_bitrate_mbps,bitrate_variation,rebuffer_s,rebuffer_events,joules,duration_s,extra_playtime_s";

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.policy,
                r.scenario,
                r.sessions,
                r.qoe,
                r.mean_bitrate,
                r.bitrate_variation,
                r.rebuffer_s,
                r.rebuffer_events,
                r.joules,
                r.duration_s,
                r.extra_playtime_s
            );
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("# Policy comparison\n\n");
        let _ = writeln!(s, "Extra playtime is measured against `{}`, the policy with the highest mean energy.\n", self.reference);
        let table = |s: &mut String, rows: &[&ReportRow], with_scenario: bool| {
            if with_scenario {
                s.push_str("| scenario ");
            }
            s.push_str("| policy | sessions | QoE | bitrate (Mbit/s) | variation | rebuffer (s) | stalls | energy (J) | extra playtime (s) |\n");
            if with_scenario {
                s.push_str("|---");
            }
            s.push_str("|---|---:|---:|---:|---:|---:|---:|---:|---:|\n");
            for r in rows {
                if with_scenario {
                    let _ = write!(s, "| {} ", r.scenario);
                }
                let _ = writeln!(
                    s,
                    "| {} | {} | {:.3} | {:.3} | {:.3} | {:.2} | {:.2} | {:.1} | {:.1} |",
                    r.policy,
                    r.sessions,
                    r.qoe,
                    r.mean_bitrate,
                    r.bitrate_variation,
                    r.rebuffer_s,
                    r.rebuffer_events,
                    r.joules,
                    r.extra_playtime_s
                );
            }
        };
        s.push_str("## All scenarios\n\n");
        let all: Vec<&ReportRow> = self.rows.iter().filter(|r| r.scenario == ALL_SCENARIOS).collect();
        table(&mut s, &all, false);
        s.push_str("\n## Per scenario\n\n");
        let per: Vec<&ReportRow> = self.rows.iter().filter(|r| r.scenario != ALL_SCENARIOS).collect();
        table(&mut s, &per, true);
        if !self.failures.is_empty() {
            s.push_str("\n## Failed runs\n\n");
            for f in &self.failures {
                let _ = writeln!(s, "- `{}` on `{}`: {}", f.policy, f.trace, f.error);
            }
        }
        s
    }

    /// Horizontal bar chart of one per-policy metric.
    pub fn to_svg(&self, metric: &str, value: impl Fn(&ReportRow) -> f64) -> String {
        let rows: Vec<&ReportRow> = self.rows.iter().filter(|r| r.scenario == ALL_SCENARIOS).collect();
        let (bar_h, label_w, plot_w) = (24.0, 110.0, 360.0);
        let height = 40.0 + bar_h * rows.len() as f64;
        let max = rows.iter().map(|r| value(r).abs()).fold(0.0, f64::max).max(1e-12);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" font-family="sans-serif" font-size="12">"#,
            label_w + plot_w + 80.0
        );
        let _ = writeln!(s, r#"<text x="4" y="16" font-weight="bold">{metric}</text>"#);
        for (i, r) in rows.iter().enumerate() {
            let y = 28.0 + bar_h * i as f64;
            let v = value(r);
            let w = plot_w * v.abs() / max;
            let _ = writeln!(s, r#"<text x="4" y="{:.1}">{}</text>"#, y + 15.0, r.policy);
            let _ = writeln!(
                s,
                r##"<rect x="{label_w}" y="{y:.1}" width="{w:.1}" height="{:.1}" fill="{}"/>"##,
                bar_h - 6.0,
                if v < 0.0 { "#c0504d" } else { "#4f81bd" }
            );
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{v:.2}</text>"#, label_w + w + 4.0, y + 15.0);
        }
        s.push_str("</svg>\n");
        s
    }

    /// Write report.md, report.csv and optionally energy.svg / qoe.svg into `dir`.
    pub fn write(&self, dir: &Path, svg: bool) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = vec![
            (dir.join("report.md"), self.to_markdown()),
            (dir.join("report.csv"), self.to_csv()),
        ];
        if svg {
            files.push((dir.join("energy.svg"), self.to_svg("mean energy (J)", |r| r.joules)));
            files.push((dir.join("qoe.svg"), self.to_svg("mean QoE", |r| r.qoe)));
        }
        for (p, text) in &files {
            fs::write(p, text).map_err(|e| Error::io(p, e))?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }
}

/// Windows cut from traces drawn from `base` with seeds `seed * 1000 + k`.
pub fn synthetic_corpus(base: &SynthConfig, traces: usize, seed: u64, history: usize, window: usize) -> Result<SampleSet> {
    let list: Result<Vec<ThroughputTrace>> = (0..traces)
        .map(|k| generate_synthetic(&SynthConfig { seed: seed.wrapping_mul(1000).wrapping_add(k as u64), ..base.clone() }))
        .collect();
    corpus(&list?, history, window)
}

pub fn corpus(traces: &[ThroughputTrace], history: usize, window: usize) -> Result<SampleSet> {
    let mut set = SampleSet::default();
    for t in traces {
        set.extend(create_samples(t, history, window)?)?;
    }
    if set.is_empty() {
        return Err(Error::Invalid(format!("traces too short for H={history} W={window}")));
    }
    Ok(set)
}

/// Train a source model on raw (unnormalized) samples.
pub fn train_predictor(cfg: &PredictorConfig, source: &SampleSet, seed: u64) -> Result<(LstmModel, TrainReport)> {
    let (normalized, _) = minmax_normalize(source)?;
    let mut model = LstmModel::for_traces(&cfg.hidden, cfg.dropout, seed);
    let train = TrainConfig { seed, ..cfg.train.clone() };
    let report = train_source(&mut model, &normalized, &train)?;
    Ok((model, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyMetrics {
    pub strategy: String,
    pub r2: f64,
    pub pearson: Option<f64>,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub rows: Vec<StrategyMetrics>,
    /// Arithmetic moving average on the same test windows.
    pub moving_average: StrategyMetrics,
    pub train_samples: usize,
    pub test_samples: usize,
}

/// Fine-tune `source` on the first 80% of the raw target samples (normalized
/// with the source stats) and score every strategy on the last 20%.
pub fn transfer(
    source: &LstmModel,
    target: &SampleSet,
    strategies: &[FineTuneStrategy],
    train: &TrainConfig,
) -> Result<(TransferReport, Vec<(FineTuneStrategy, LstmModel)>)> {
    let stats = source
        .norm_stats
        .as_ref()
        .ok_or_else(|| Error::Invalid("source model carries no normalization stats".into()))?;
    let parts = stats.apply(target).split(&[0.8, 0.2]);
    let row = |name: &str, p: &[f64], a: &[f64]| -> Result<StrategyMetrics> {
        let m = score(p, a)?;
        Ok(StrategyMetrics { strategy: name.into(), r2: m.r2, pearson: m.pearson, mae: m.mae })
    };
    let (p, a) = evaluate_baseline(BaselineKind::ArithmeticMa, &parts[1])?;
    let moving_average = row("moving-average", &p, &a)?;
    let mut rows = Vec::new();
    let mut models = Vec::new();
    for &st in strategies {
        let ft = fine_tune(source, &parts[0], st, train)?;
        let (p, a) = evaluate(&ft.model, &parts[1])?;
        rows.push(row(st.name(), &p, &a)?);
        models.push((st, ft.model));
    }
    Ok((TransferReport { rows, moving_average, train_samples: parts[0].len(), test_samples: parts[1].len() }, models))
}
