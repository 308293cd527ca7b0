//! Command implementations. Each one computes in memory, writes its manifest,
//! then writes its outputs.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use qrlob::engine::{self, SimConfig};
use qrlob::eventlog::LOG_MAGIC;
use qrlob::facts::{build_report, FactReport};
use qrlob::flow::{
    level_stats, parse_stream, reconstruct_flow, sessionize_log, DayFlow, LevelStats, ParseOptions, ReconstructOptions,
    Reconstruction, Session,
};
use qrlob::model::{calibrate_model, Model, ModelVariant};
use qrlob::EventLog;
use rayon::prelude::*;

use crate::config::Config;
use crate::error::CliError;
use crate::manifest::{manifest_path_for_dir, manifest_path_for_file, RunManifest};

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::from(e).context(path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::from(e).context(dir.display()))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::from(e).context(path.display()))
}

pub fn read_log(path: &Path) -> Result<EventLog, CliError> {
    EventLog::read(open(path)?).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn write_log(log: &EventLog, path: &Path) -> Result<(), CliError> {
    let mut out = create(path)?;
    log.write(&mut out).map_err(|e| CliError::from(e).context(path.display()))?;
    out.flush().map_err(|e| CliError::from(e).context(path.display()))
}

pub fn read_model(path: &Path) -> Result<Model, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::from(e).context(path.display()))?;
    Model::from_json(&text).map_err(|e| CliError::from(e).context(path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut out = create(path)?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::from(e).context(path.display()))
}

/// True when the file starts with the event-log magic line.
pub fn is_event_log(path: &Path) -> Result<bool, CliError> {
    let mut first = String::new();
    open(path)?
        .read_line(&mut first)
        .map_err(|e| CliError::from(e).context(path.display()))?;
    Ok(first.trim_end() == LOG_MAGIC)
}

pub fn parse_session(s: &str) -> Result<Session, CliError> {
    Session::parse(s).map_err(|e| CliError::Usage(format!("session: {e}")))
}

fn reconstruct(cfg: &Config, input: &Path) -> Result<Reconstruction, CliError> {
    let popts = ParseOptions {
        tick_size: cfg.ingest.tick_size,
        regression_tolerance_ns: cfg.ingest.regression_tolerance_ns,
    };
    let updates = parse_stream(open(input)?, &popts).map_err(|e| CliError::from(e).context(input.display()))?;
    let ropts = ReconstructOptions {
        depth: cfg.ingest.depth,
        tick_size: cfg.ingest.tick_size,
    };
    reconstruct_flow(&updates, &ropts).map_err(|e| CliError::from(e).context(input.display()))
}

fn describe_reconstruction(r: &Reconstruction) -> String {
    format!(
        "{} snapshots -> {} events, {} reference moves; {} trade lots beyond the best re-labelled as cancels, {} trade lots unmatched\n",
        r.snapshots,
        r.log.summary.events,
        r.log.summary.ref_moves,
        r.market_beyond_best,
        r.unmatched_trade_volume
    )
}

pub fn ingest(cfg: &Config, input: &Path, out: &Path) -> Result<String, CliError> {
    let rec = reconstruct(cfg, input)?;
    let mut m = RunManifest::new("ingest", cfg);
    m.inputs = vec![input.into()];
    m.outputs = vec![out.into()];
    m.write(&manifest_path_for_file(out))?;
    write_log(&rec.log, out)?;
    Ok(describe_reconstruction(&rec))
}

fn days_of(logs: &[EventLog], session: &Session) -> Vec<DayFlow> {
    logs.iter().flat_map(|l| sessionize_log(l, session)).collect()
}

fn common_tick(logs: &[EventLog], inputs: &[PathBuf]) -> Result<f64, CliError> {
    let tick = logs[0].tick_size();
    for (log, path) in logs.iter().zip(inputs).skip(1) {
        if log.tick_size() != tick {
            return Err(CliError::Data(format!(
                "{}: tick size {} differs from {} in {}",
                path.display(),
                log.tick_size(),
                tick,
                inputs[0].display()
            )));
        }
    }
    Ok(tick)
}

pub fn stats_table(days: &[DayFlow], levels: usize) -> Vec<LevelStats> {
    (1..=levels)
        .map(|lvl| level_stats(days.iter().flat_map(|d| d.records.iter().filter_map(|r| r.item.as_order())), lvl))
        .collect()
}

pub fn render_stats(stats: &[LevelStats]) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"));
    let mut s = String::new();
    let _ = writeln!(s, "{:>5} {:>10} {:>10} {:>10} {:>8} {:>10}", "level", "limit", "cancel", "market", "AES", "AIT(ms)");
    for st in stats {
        let _ = writeln!(
            s,
            "{:>5} {:>10} {:>10} {:>10} {:>8} {:>10}",
            st.level,
            st.n_limit,
            st.n_cancel,
            st.n_market,
            opt(st.aes),
            opt(st.ait_ms)
        );
    }
    s
}

fn load_days(cfg: &Config, inputs: &[PathBuf]) -> Result<(Vec<EventLog>, Vec<DayFlow>), CliError> {
    if inputs.is_empty() {
        return Err(CliError::Usage("at least one --input is required".into()));
    }
    let session = parse_session(&cfg.calibrate.session)?;
    let logs = inputs.iter().map(|p| read_log(p)).collect::<Result<Vec<_>, _>>()?;
    let depth = logs.iter().map(EventLog::depth).min().unwrap_or(0);
    if cfg.calibrate.levels == 0 || cfg.calibrate.levels > depth {
        return Err(CliError::Data(format!(
            "--levels {} is outside 1..={depth} (depth of the input logs)",
            cfg.calibrate.levels
        )));
    }
    let days = days_of(&logs, &session);
    if days.iter().all(|d| d.records.is_empty()) {
        return Err(CliError::Data(format!(
            "no events inside the session {}",
            cfg.calibrate.session
        )));
    }
    Ok((logs, days))
}

fn calibrate_days(cfg: &Config, logs: &[EventLog], days: &[DayFlow], inputs: &[PathBuf]) -> Result<(Model, String), CliError> {
    let tick = common_tick(logs, inputs)?;
    let model = calibrate_model(days, &cfg.calibrate_options(tick))?;
    let mut text = render_stats(&stats_table(days, cfg.calibrate.levels));
    let _ = writeln!(text, "variant {}  theta {:.4}  days {}", model.variant, model.theta, days.len());
    Ok((model, text))
}

pub fn analyze(cfg: &Config, inputs: &[PathBuf]) -> Result<String, CliError> {
    let (logs, days) = load_days(cfg, inputs)?;
    let mut text = render_stats(&stats_table(&days, cfg.calibrate.levels));
    let moves: u64 = logs.iter().map(|l| l.summary.ref_moves).sum();
    let _ = writeln!(text, "days {}  reference moves {moves}", days.len());
    Ok(text)
}

pub fn calibrate(cfg: &Config, inputs: &[PathBuf], out: &Path) -> Result<String, CliError> {
    let (logs, days) = load_days(cfg, inputs)?;
    let (model, text) = calibrate_days(cfg, &logs, &days, inputs)?;
    let json = model.to_json()?;
    let mut m = RunManifest::new("calibrate", cfg);
    m.inputs = inputs.to_vec();
    m.outputs = vec![out.into()];
    m.write(&manifest_path_for_file(out))?;
    write_text(out, &json)?;
    Ok(text)
}

/// Output path of replica `seed` when a batch writes several logs.
pub fn replica_path(out: &Path, seed: u64) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("sim");
    let name = match out.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}-{seed}.{ext}"),
        None => format!("{stem}-{seed}"),
    };
    out.with_file_name(name)
}

fn sim_config(cfg: &Config, model: &Model, seed: u64) -> SimConfig {
    let variant = cfg.simulate.variant.unwrap_or(model.variant);
    let mut sc = SimConfig::new(variant, cfg.simulate.horizon_s, seed);
    sc.theta = cfg.simulate.theta;
    sc
}

fn run_batch(cfg: &Config, model: &Model, seeds: &[u64]) -> Result<Vec<(EventLog, f64)>, CliError> {
    if let Some(v) = cfg.simulate.variant {
        model.supports(v)?;
    }
    seeds
        .par_iter()
        .map(|&seed| {
            let t0 = Instant::now();
            let log = engine::run(model, &sim_config(cfg, model, seed))
                .map_err(|e| CliError::from(e).context(format!("seed {seed}")))?;
            Ok((log, t0.elapsed().as_secs_f64()))
        })
        .collect()
}

fn describe_run(seed: u64, log: &EventLog, secs: f64) -> String {
    let s = &log.summary;
    format!(
        "seed {seed}: {} events, {} reference moves, {} clipped, {} dropped in {secs:.2} s\n",
        s.events, s.ref_moves, s.clipped, s.dropped
    )
}

pub fn simulate(cfg: &Config, model_path: &Path, out: &Path) -> Result<String, CliError> {
    if cfg.simulate.runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let model = read_model(model_path)?;
    let seeds: Vec<u64> = (0..cfg.simulate.runs as u64).map(|r| cfg.seed.wrapping_add(r)).collect();
    let runs = run_batch(cfg, &model, &seeds)?;
    let paths: Vec<PathBuf> = if seeds.len() == 1 {
        vec![out.into()]
    } else {
        seeds.iter().map(|&s| replica_path(out, s)).collect()
    };
    let mut m = RunManifest::new("simulate", cfg);
    m.model = Some(model_path.into());
    m.seeds = seeds.clone();
    m.inputs = vec![model_path.into()];
    m.outputs = paths.clone();
    m.write(&manifest_path_for_file(out))?;
    let mut text = String::new();
    for ((seed, (log, secs)), path) in seeds.iter().zip(&runs).zip(&paths) {
        write_log(log, path)?;
        text.push_str(&describe_run(*seed, log, *secs));
    }
    Ok(text)
}

fn score(cfg: &Config, sim: &EventLog, real: &EventLog) -> Result<FactReport, CliError> {
    build_report(sim, real, &cfg.report).map_err(|e| CliError::Usage(format!("report: {e}")))
}

fn write_report(report: &FactReport, dir: &Path) -> Result<(), CliError> {
    report
        .write_dir(dir)
        .map_err(|e| CliError::from(e).context(dir.display()))
}

pub fn report(cfg: &Config, sim_path: &Path, real_path: &Path, out: &Path) -> Result<String, CliError> {
    let sim = read_log(sim_path)?;
    let real = read_log(real_path)?;
    let report = score(cfg, &sim, &real)?;
    let mut m = RunManifest::new("report", cfg);
    m.inputs = vec![sim_path.into(), real_path.into()];
    m.outputs = vec![out.into()];
    m.write(&manifest_path_for_dir(out))?;
    write_report(&report, out)?;
    Ok(report.render_text())
}

/// Raw CSV or event log in, model, simulated log and report out.
pub fn pipeline(cfg: &Config, input: &Path, out: &Path) -> Result<String, CliError> {
    let mut text = String::new();
    let (real, ingested) = if is_event_log(input)? {
        (read_log(input)?, false)
    } else {
        let rec = reconstruct(cfg, input)?;
        text.push_str(&describe_reconstruction(&rec));
        (rec.log, true)
    };
    let inputs = vec![input.to_path_buf()];
    let logs = [real];
    let session = parse_session(&cfg.calibrate.session)?;
    let days = days_of(&logs, &session);
    if days.iter().all(|d| d.records.is_empty()) {
        return Err(CliError::Data(format!("no events inside the session {}", cfg.calibrate.session)));
    }
    if cfg.calibrate.levels == 0 || cfg.calibrate.levels > logs[0].depth() {
        return Err(CliError::Data(format!(
            "--levels {} is outside 1..={}",
            cfg.calibrate.levels,
            logs[0].depth()
        )));
    }
    let (model, stats) = calibrate_days(cfg, &logs, &days, &inputs)?;
    text.push_str(&stats);
    let model_json = model.to_json()?;
    let seed = cfg.seed;
    let (sim, secs) = run_batch(cfg, &model, &[seed])?.pop().expect("one run");
    text.push_str(&describe_run(seed, &sim, secs));
    let report = score(cfg, &sim, &logs[0])?;

    let real_path = out.join("real.log");
    let model_path = out.join("model.json");
    let sim_path = out.join("sim.log");
    let report_dir = out.join("report");
    let mut m = RunManifest::new("pipeline", cfg);
    m.model = Some(model_path.clone());
    m.seeds = vec![seed];
    m.inputs = inputs;
    m.outputs = Vec::new();
    if ingested {
        m.outputs.push(real_path.clone());
    }
    m.outputs.extend([model_path.clone(), sim_path.clone(), report_dir.clone()]);
    m.write(&manifest_path_for_dir(out))?;
    if ingested {
        write_log(&logs[0], &real_path)?;
    }
    write_text(&model_path, &model_json)?;
    write_log(&sim, &sim_path)?;
    write_report(&report, &report_dir)?;
    text.push_str(&report.render_text());
    Ok(text)
}

pub fn parse_variant(s: &str) -> Result<ModelVariant, String> {
    s.parse()
}
