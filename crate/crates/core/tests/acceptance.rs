//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance` runs everything; trailing arguments select
//! criteria by number, e.g. `cargo test --test acceptance -- 8 9`.

mod common;

use std::time::{Duration, Instant};

use abrlab::abr::{baseline_policy, mpc_select, AbrKind, Bola, MpcVariant};
use abrlab::config::{ExperimentConfig, PredictorConfig};
use abrlab::emulator::{
    qoe_of_log, run_session, BitratePolicy, Forecaster, QoeParams, SessionConfig, VideoManifest, LEVELS,
};
use abrlab::energy::{derive_timeline, extra_playtime, session_energy, Dwell, RrcConfig};
use abrlab::experiment::{
    build_report, env_config, run_comparison, scenario_traces, scenarios, simulate, synthetic_corpus, train_predictor,
    transfer, volatile_scenarios, Engines, Split, ALL_SCENARIOS,
};
use abrlab::predictor::{FineTuneStrategy, LstmModel, TrainConfig};
use abrlab::rl::{
    run_episode, train_engines, ActionMode, CapBounds, EngineKind, EnvConfig, NetConfig, PolicyModel, RandomBitrate,
    RandomBuffer, RlBitrate, RlBuffer, TrainSpec,
};
use abrlab::trace::{create_samples, ThroughputTrace};
use common::{ledger_oracle, mpc_oracle, qoe_oracle, random_ctx, random_session, random_trace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(bool, String), String>;

/// (name, download intervals, session end, expected dwell)
type Fixture = (&'static str, Vec<(f64, f64)>, f64, Dwell);

fn run(n: usize, name: &str, limit_s: u64, f: impl FnOnce() -> Check) -> bool {
    let t0 = Instant::now();
    let (pass, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    let elapsed = t0.elapsed();
    let in_time = elapsed <= Duration::from_secs(limit_s);
    let ok = pass && in_time;
    println!(
        "{} [{n}] {name}: {detail} ({:.1} s, limit {limit_s} s{})",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        if in_time { "" } else { ", over the limit" }
    );
    ok
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// 1 -------------------------------------------------------------------------

fn qoe_oracle_check() -> Check {
    let mut worst = 0.0f64;
    for seed in 0..1000u64 {
        let (_, log) = random_session(seed, 1 + (seed % 40) as usize);
        let b: Vec<f64> = log.chunks.iter().map(|c| c.bitrate_mbps).collect();
        let r: Vec<f64> = log.chunks.iter().map(|c| c.rebuffer).collect();
        let got = qoe_of_log(&log, QoeParams::default()).map_err(err)?.qoe;
        worst = worst.max((got - qoe_oracle(&b, &r, 4.3)).abs());
    }
    Ok((worst <= 1e-9, format!("1000 logs, max |diff| {worst:.2e}")))
}

// 2 -------------------------------------------------------------------------

fn mpc_oracle_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let q = QoeParams::default();
    let mut mismatches = 0;
    for k in 0..500 {
        let h = 1 + k % 3;
        let ctx = random_ctx(&mut rng, h);
        let (variant, errors) = if k % 2 == 0 {
            (MpcVariant::Fast, vec![])
        } else {
            (MpcVariant::Robust, (0..rng.gen_range(0..7)).map(|_| rng.gen_range(0.0..0.8)).collect())
        };
        let worst = errors.iter().rev().take(5).cloned().fold(0.0, f64::max);
        let throughput = ctx.predicted_throughput.unwrap() / (1.0 + worst);
        if mpc_select(&ctx, variant, q, &errors).map_err(err)? != mpc_oracle(&ctx, throughput, q.mu) {
            mismatches += 1;
        }
    }
    Ok((mismatches == 0, format!("500 contexts (h = 1..3, fast and robust), {mismatches} mismatches")))
}

// 3 -------------------------------------------------------------------------

struct RandomLevel(ChaCha8Rng);

impl BitratePolicy for RandomLevel {
    fn name(&self) -> &str {
        "random"
    }

    fn select_level(&mut self, _: &abrlab::emulator::ChunkObservation) -> usize {
        self.0.gen_range(0..LEVELS)
    }
}

fn ledger_check() -> Check {
    let kinds = [AbrKind::Bola, AbrKind::RateBased, AbrKind::FastMpc, AbrKind::RobustMpc];
    let mut violations = Vec::new();
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trace = random_trace(&mut rng, 1500);
        let manifest = VideoManifest::synthetic(rng.gen_range(1..40), 8.0, seed).map_err(err)?;
        let cfg = SessionConfig { initial_cap: rng.gen_range(16.0..64.0), slot_len: rng.gen_range(10.0..40.0) };
        let mut policy: Box<dyn BitratePolicy> = match rng.gen_range(0..5) {
            4 => Box::new(RandomLevel(ChaCha8Rng::seed_from_u64(seed))),
            k => baseline_policy(kinds[k], rng.gen_range(1..=5)).map_err(err)?,
        };
        let mut buffer = RandomBuffer { rng: ChaCha8Rng::seed_from_u64(seed + 7), bounds: CapBounds::default() };
        let with_buffer = rng.gen_bool(0.5);
        let log = run_session(&manifest, &trace, policy.as_mut(), with_buffer.then_some(&mut buffer as _), None, &cfg)
            .map_err(err)?;
        if let Err(e) = ledger_oracle(&trace, &log, 1e-9) {
            violations.push(format!("seed {seed}: {e}"));
        }
    }
    Ok((violations.is_empty(), format!("200 sessions, {} violations {:?}", violations.len(), violations.first())))
}

// 4 -------------------------------------------------------------------------

fn energy_fixtures() -> Check {
    let cfg = RrcConfig::default();
    let d = |connected, inactive, idle, promotion| Dwell { connected, inactive, idle, promotion };
    // walked by hand with timers
    // 5 s / 10 s and a 0.05 s promotion taken from the end of the low state
    let fixtures: Vec<Fixture> = vec![
        ("single 8 s download, end 30 s", vec![(0.0, 8.0)], 30.0, d(13.0, 10.0, 7.0, 0.0)),
        ("gap shorter than the inactivity timer", vec![(0.0, 4.0), (6.0, 10.0)], 15.0, d(15.0, 0.0, 0.0, 0.0)),
        ("empty session", vec![], 20.0, d(0.0, 0.0, 20.0, 0.0)),
        ("promotion out of idle", vec![(0.0, 2.0), (20.0, 22.0)], 40.0, d(14.0, 20.0, 5.95, 0.05)),
        ("promotion out of inactive", vec![(0.0, 1.0), (10.0, 11.0)], 20.0, d(12.0, 7.95, 0.0, 0.05)),
        ("first download after an idle start", vec![(5.0, 6.0)], 12.0, d(6.0, 1.0, 4.95, 0.05)),
        ("session ends inside the tail", vec![(0.0, 3.0)], 6.0, d(6.0, 0.0, 0.0, 0.0)),
    ];
    let mut bad = Vec::new();
    for (name, iv, end, want) in &fixtures {
        let tl = derive_timeline(iv, 0.0, *end, &cfg).map_err(err)?;
        let got = tl.dwell;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
        let same = close(got.connected, want.connected)
            && close(got.inactive, want.inactive)
            && close(got.idle, want.idle)
            && close(got.promotion, want.promotion);
        if !same || !close(got.total(), *end) {
            bad.push(format!("{name}: {got:?}"));
        }
    }
    Ok((bad.is_empty(), format!("{} fixtures, {} mismatches {:?}", fixtures.len(), bad.len(), bad.first())))
}

// 5 -------------------------------------------------------------------------

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let scale = a.abs().max(n.abs());
            if scale < 1e-7 {
                0.0
            } else {
                (a - n).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

fn gradient_checks() -> Check {
    let h = 1e-6;
    // recurrent predictor
    let mut model = LstmModel::for_traces(&[4, 3], 0.0, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let seq: Vec<f64> = (0..5 * model.input_dim).map(|_| rng.gen_range(0.0..1.0)).collect();
    let target = 0.4;
    let mut grad = vec![0.0; model.n_params()];
    model.accumulate_gradient(&seq, target, None, &mut grad).map_err(err)?;
    let mut numeric = vec![0.0; model.n_params()];
    for (i, n) in numeric.iter_mut().enumerate() {
        let p = model.params[i];
        model.params[i] = p + h;
        let up = model.accumulate_gradient(&seq, target, None, &mut vec![0.0; grad.len()]).map_err(err)?;
        model.params[i] = p - h;
        let down = model.accumulate_gradient(&seq, target, None, &mut vec![0.0; grad.len()]).map_err(err)?;
        model.params[i] = p;
        *n = (up - down) / (2.0 * h);
    }
    let lstm = rel_err(&grad, &numeric);

    // actor policy gradient with entropy bonus
    let net = NetConfig { filters: 3, kernel: 4, scalar_units: 3, hidden: 5 };
    let policy = PolicyModel::new(EngineKind::Bitrate, &net, 4).map_err(err)?;
    let traj: Vec<(Vec<f64>, usize)> =
        (0..3).map(|k| ((0..policy.input_len()).map(|_| rng.gen_range(0.0..1.0)).collect(), k * 2)).collect();
    let rewards = [0.5, -0.3, 1.1];
    let up = abrlab::rl::train::episode_gradients(&policy, &traj, &rewards, 0.9, 0.3).map_err(err)?;
    let loss = |m: &PolicyModel| abrlab::rl::train::episode_gradients(m, &traj, &rewards, 0.9, 0.3).map(|u| u.actor_loss);
    let mut numeric = vec![0.0; policy.actor.n_params()];
    for (i, n) in numeric.iter_mut().enumerate() {
        let mut a = policy.clone();
        a.actor.params[i] += h;
        let mut b = policy.clone();
        b.actor.params[i] -= h;
        *n = (loss(&a).map_err(err)? - loss(&b).map_err(err)?) / (2.0 * h);
    }
    let actor = rel_err(&up.actor, &numeric);
    Ok((lstm <= 1e-4 && actor <= 1e-4, format!("max relative error: LSTM {lstm:.2e}, actor {actor:.2e}")))
}

// 6, 7 ----------------------------------------------------------------------

struct TransferRun {
    r2: [f64; 3],
    moving_average: f64,
}

fn transfer_run(cfg: &PredictorConfig, seed: u64) -> Result<TransferRun, String> {
    let source = synthetic_corpus(&cfg.source, cfg.source_traces, seed, cfg.history, cfg.window).map_err(err)?;
    let target = synthetic_corpus(&cfg.target, cfg.target_traces, seed + 1, cfg.history, cfg.window).map_err(err)?;
    let (model, _) = train_predictor(cfg, &source, seed).map_err(err)?;
    let (report, _) = transfer(&model, &target, &FineTuneStrategy::ALL, &cfg.train).map_err(err)?;
    let r2 = |s: FineTuneStrategy| report.rows.iter().find(|r| r.strategy == s.name()).map(|r| r.r2).unwrap_or(f64::NAN);
    Ok(TransferRun {
        r2: [
            r2(FineTuneStrategy::WeightTransfer),
            r2(FineTuneStrategy::LastLayerOnly),
            r2(FineTuneStrategy::AllLayers),
        ],
        moving_average: report.moving_average.r2,
    })
}

fn desk_predictor() -> PredictorConfig {
    PredictorConfig { hidden: vec![32, 32], train: TrainConfig { epochs: 12, ..TrainConfig::default() }, ..PredictorConfig::default() }
}

fn predictor_skill() -> Check {
    let r = transfer_run(&desk_predictor(), 1)?;
    let all = r.r2[2];
    Ok((
        all >= r.moving_average + 0.05 && all >= 0.5,
        format!("all-layers R2 {all:.4}, moving average R2 {:.4}", r.moving_average),
    ))
}

fn transfer_ordering() -> Check {
    let cfg = desk_predictor();
    let mut ordered = 0;
    let mut lines = Vec::new();
    for seed in 1..=5 {
        let r = transfer_run(&cfg, seed)?;
        let ok = r.r2[2] >= r.r2[1] && r.r2[1] >= r.r2[0];
        ordered += ok as usize;
        lines.push(format!("seed {seed}: wt {:.3} ll {:.3} all {:.3}", r.r2[0], r.r2[1], r.r2[2]));
    }
    Ok((ordered >= 4, format!("ordered in {ordered}/5 seeds [{}]", lines.join("; "))))
}

// 8, 9 ----------------------------------------------------------------------

/// Engines and forecaster trained once and shared by criteria 8 and 9.
struct Cascade {
    cfg: ExperimentConfig,
    manifest: VideoManifest,
    forecaster: LstmModel,
    engines: Engines,
    env: EnvConfig,
}

fn train_cascade() -> Result<Cascade, String> {
    let mut cfg = ExperimentConfig::default();
    cfg.rl.seed = 1;
    let manifest = cfg.manifest.build().map_err(err)?;
    let train = scenario_traces(&cfg, &scenarios(&cfg.grid), Split::Train).map_err(err)?;
    // slot forecaster: a small recurrent predictor fitted on the training traces
    let p = PredictorConfig { hidden: vec![16], train: TrainConfig { epochs: 4, ..TrainConfig::default() }, ..cfg.predictor.clone() };
    let mut samples = create_samples(&train[0], p.history, p.window).map_err(err)?;
    for t in &train[1..] {
        samples.extend(create_samples(t, p.history, p.window).map_err(err)?).map_err(err)?;
    }
    let (forecaster, _) = train_predictor(&p, &samples, 1).map_err(err)?;
    let env = env_config(&cfg);
    let spec = TrainSpec { env, ..cfg.rl };
    let trained = train_engines(&manifest, &train, Some(&forecaster), &spec, |_| {}).map_err(err)?;
    Ok(Cascade { cfg, manifest, forecaster, engines: Engines { buffer: trained.buffer, bitrate: trained.bitrate }, env })
}

/// One-sided sign test: P(X >= wins) for X ~ Binomial(n, 1/2).
fn sign_test_p(wins: usize, n: usize) -> f64 {
    let mut p = 0.0;
    for k in wins..=n {
        let mut c = 1.0;
        for j in 0..k {
            c = c * (n - j) as f64 / (j + 1) as f64;
        }
        p += c * 0.5f64.powi(n as i32);
    }
    p
}

fn rl_efficacy(c: &Cascade) -> Check {
    let mut cfg = c.cfg.clone();
    cfg.grid.traces_per_cell = 3;
    let mut held_out = scenario_traces(&cfg, &scenarios(&cfg.grid), Split::Eval).map_err(err)?;
    held_out.sort_by_key(|t| t.id.chars().last());
    held_out.truncate(20);
    let norm = c.engines.buffer.reward_norm;
    let fc: &dyn Forecaster = &c.forecaster;
    let (mut wins, mut losses) = (0, 0);
    let (mut rl_total, mut random_total, mut bola_total) = (0.0, 0.0, 0.0);
    for (i, t) in held_out.iter().enumerate() {
        let mut bp = RlBuffer::new(&c.engines.buffer, ActionMode::Greedy, &c.env, 0);
        let mut rp = RlBitrate::new(&c.engines.bitrate, ActionMode::Greedy, 0);
        let rl = run_episode(&c.manifest, t, &mut rp, Some(&mut bp), Some(fc), &c.env, true).map_err(err)?;
        let mut rb = RandomBitrate(ChaCha8Rng::seed_from_u64(1000 + i as u64));
        let mut rbuf = RandomBuffer { rng: ChaCha8Rng::seed_from_u64(2000 + i as u64), bounds: c.env.bounds };
        let random = run_episode(&c.manifest, t, &mut rb, Some(&mut rbuf), Some(fc), &c.env, true).map_err(err)?;
        let bola = run_episode(&c.manifest, t, &mut Bola::default(), None, Some(fc), &c.env, true).map_err(err)?;
        let (a, b) = (rl.total_reward(&norm, &c.env), random.total_reward(&norm, &c.env));
        if a > b {
            wins += 1;
        } else if a < b {
            losses += 1;
        }
        rl_total += a;
        random_total += b;
        bola_total += bola.total_reward(&norm, &c.env);
    }
    let n = held_out.len() as f64;
    let p = sign_test_p(wins, wins + losses);
    Ok((
        p < 0.05 && rl_total > bola_total,
        format!(
            "{} held-out traces, wins {wins} losses {losses}, sign test p = {p:.2e}; mean reward rl {:.3}, random {:.3}, static-cap bola {:.3}",
            held_out.len(),
            rl_total / n,
            random_total / n,
            bola_total / n
        ),
    ))
}

fn energy_direction(c: &Cascade) -> Check {
    let mut cfg = c.cfg.clone();
    cfg.grid.traces_per_cell = 5;
    let traces = scenario_traces(&cfg, &volatile_scenarios(&cfg.grid), Split::Eval).map_err(err)?;
    let mut rows = Vec::new();
    for kind in [AbrKind::Bola, AbrKind::RateBased, AbrKind::FastMpc, AbrKind::RobustMpc, AbrKind::Rl] {
        let (mut q, mut e) = (0.0, 0.0);
        for t in &traces {
            let log = simulate(&c.manifest, t, kind, 5, Some(&c.engines), &c.forecaster, &c.env).map_err(err)?;
            q += qoe_of_log(&log, c.env.qoe).map_err(err)?.qoe;
            e += session_energy(&log, &cfg.rrc).map_err(err)?.joules_total;
        }
        rows.push((kind, q / traces.len() as f64, e / traces.len() as f64));
    }
    let get = |k: AbrKind| rows.iter().find(|r| r.0 == k).copied().unwrap();
    let (_, rl_q, rl_e) = get(AbrKind::Rl);
    let (_, _, rb_e) = get(AbrKind::RateBased);
    let best = rows.iter().filter(|r| r.0 != AbrKind::Rl).map(|r| r.1).fold(f64::MIN, f64::max);
    let saving = 1.0 - rl_e / rb_e;
    let qoe_ok = rl_q >= best - 0.15 * best.abs();
    let table: Vec<String> = rows.iter().map(|(k, q, e)| format!("{} QoE {q:.3} {e:.1} J", k.name())).collect();
    Ok((
        saving >= 0.10 && qoe_ok,
        format!(
            "{} volatile traces; energy {:.1}% below rb; QoE {rl_q:.3} vs best baseline {best:.3} [{}]",
            traces.len(),
            100.0 * saving,
            table.join(", ")
        ),
    ))
}

// 10 ------------------------------------------------------------------------

fn extra_playtime_check() -> Check {
    let fixture = extra_playtime(100.0, 58.0, 100.0).map_err(err)?;
    let cfg = ExperimentConfig::default();
    let manifest = VideoManifest::synthetic(10, 8.0, 1).map_err(err)?;
    let traces = vec![
        ThroughputTrace::constant("flat-r0", 6.0, 1.0, 400).map_err(err)?,
        ThroughputTrace::constant("flat-r1", 3.0, 1.0, 400).map_err(err)?,
    ];
    let dir = tempfile::tempdir().map_err(err)?;
    let logs = dir.path().join("logs");
    let fc = abrlab::emulator::HarmonicForecaster::default();
    let kinds = [AbrKind::Bola, AbrKind::RateBased, AbrKind::RobustMpc];
    run_comparison(&manifest, &traces, &kinds, 5, None, &fc, &env_config(&cfg), &logs).map_err(err)?;
    let report = build_report(&logs, &[], &cfg.rrc, QoeParams::default()).map_err(err)?;
    let reference = report.rows.iter().find(|r| r.policy == report.reference && r.scenario == ALL_SCENARIOS).unwrap();
    let mut exact = true;
    for r in report.rows.iter().filter(|r| r.scenario == ALL_SCENARIOS) {
        let by_hand = (reference.joules - r.joules) / reference.joules * r.duration_s;
        exact &= r.extra_playtime_s == by_hand;
    }
    Ok((
        fixture == 42.0 && exact && reference.extra_playtime_s == 0.0,
        format!("fixture (100 J, 58 J, 100 s) -> {fixture} s; report column matches hand arithmetic: {exact}"),
    ))
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let on = |n: usize| wanted.is_empty() || wanted.contains(&n);
    let mut results = Vec::new();
    if on(1) {
        results.push(run(1, "QoE oracle equivalence", 5, qoe_oracle_check));
    }
    if on(2) {
        results.push(run(2, "MPC oracle equivalence", 10, mpc_oracle_check));
    }
    if on(3) {
        results.push(run(3, "emulator ledger", 30, ledger_check));
    }
    if on(4) {
        results.push(run(4, "RRC energy fixtures", 5, energy_fixtures));
    }
    if on(5) {
        results.push(run(5, "gradient checks", 60, gradient_checks));
    }
    if on(6) {
        results.push(run(6, "predictor skill", 600, predictor_skill));
    }
    if on(7) {
        results.push(run(7, "transfer-learning ordering", 1800, transfer_ordering));
    }
    if on(8) || on(9) {
        let t0 = Instant::now();
        let cascade = train_cascade();
        let train_s = t0.elapsed().as_secs();
        match &cascade {
            Ok(c) => {
                // training time counts against the first criterion that needs it
                let mut budget_8 = 1800;
                if on(8) {
                    budget_8 = 1800u64.saturating_sub(train_s);
                    results.push(run(8, "RL efficacy", budget_8, || rl_efficacy(c)));
                }
                if on(9) {
                    let budget_9 = if on(8) { 900 } else { 900u64.saturating_sub(train_s) };
                    let _ = budget_8;
                    results.push(run(9, "end-to-end energy direction", budget_9, || energy_direction(c)));
                }
            }
            Err(e) => {
                for n in [8, 9].into_iter().filter(|n| on(*n)) {
                    results.push(run(n, "RL training", 1, || Err(e.clone())));
                }
            }
        }
        println!("     (shared cascade training took {train_s} s)");
    }
    if on(10) {
        results.push(run(10, "extra playtime", 1, extra_playtime_check));
    }
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
