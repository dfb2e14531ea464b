//! The `awml` binary: run, sweep, analyze, and replay subcommands, plus the
//! run-directory artifact formats they share.
//!
//! A run directory holds exactly four artifacts:
//!
//! * `config.toml`: the effective configuration after `--set` overrides.
//! * `metrics.csv`: one row per validation point per behavior.
//! * `events.jsonl`: one object per env step, carrying the observation the
//!   agent acted from, which is what lets `replay` re-verify a run bit for
//!   bit.
//! * `checkpoint/`: final world-model and controller parameters.
//!
//! Analysis never recomputes training; it reads these artifacts back and
//! derives end performance, attention ratios, failure-mode labels, and the
//! early-indicator accuracy curves. Its outputs contain no timestamps, so
//! re-running it over the same runs is byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::curiosity::SignalKind;
use crate::env::behavior::BehaviorKind;
use crate::env::WorldKind;
use crate::harness::{
    self, attention_summary, classify_failure, early_indicator, end_performance, world_scalar,
    GroupLoss, RunOutput, RunSample, StepEvent, ValidationPoint,
};
use crate::numcore::save_checkpoint;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
    #[error("{failed} of {total} sweep cells failed")]
    Partial { failed: usize, total: usize },
}

impl CliError {
    fn runtime(e: impl std::fmt::Display) -> CliError {
        CliError::Runtime(e.to_string())
    }

    /// Exit codes: 2 for unusable input, 1 for failures at runtime.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Runtime(_) | CliError::Partial { .. } => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "awml", about = "Curiosity-driven world-model learning runs and analysis")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute one training run and write its artifacts.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dotted-path override, e.g. --set world_model.lr=5e-4 (repeatable).
        #[arg(long = "set")]
        set: Vec<String>,
        /// Parent directory for the run directory (AWML_OUT wins over this).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a signal x seed grid, one run directory per cell.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set")]
        set: Vec<String>,
        /// Comma-separated signal names, e.g. gamma_progress,random.
        #[arg(long)]
        signals: String,
        /// Comma-separated seeds and half-open ranges, e.g. 0..5,9.
        #[arg(long)]
        seeds: String,
        /// Concurrent runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize every run directory found under DIR.
    Analyze { dir: PathBuf },
    /// Re-simulate a run directory's event log and verify it bit for bit.
    Replay { dir: PathBuf },
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run { config, set, out } => {
            cmd_run(config.as_deref(), &set, out.as_deref()).map(|dir| {
                println!("{}", dir.display());
            })
        }
        Cmd::Sweep { config, set, signals, seeds, jobs, out } => cmd_sweep(
            config.as_deref(),
            &set,
            &parse_signals(&signals).unwrap_or_default(),
            &parse_seeds(&seeds).unwrap_or_default(),
            jobs,
            out.as_deref(),
        ),
        Cmd::Analyze { dir } => cmd_analyze(&dir),
        Cmd::Replay { dir } => cmd_replay(&dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// `AWML_OUT` beats `--out` beats the config's `io.out`.
fn resolve_out(cfg: &RunConfig, flag: Option<&Path>) -> PathBuf {
    if let Ok(v) = std::env::var("AWML_OUT") {
        if !v.is_empty() {
            return PathBuf::from(v);
        }
    }
    flag.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&cfg.io.out))
}

/// Comma-separated seeds; `a..b` spans a half-open range.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    let mut seeds = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((lo, hi)) = part.split_once("..") {
            let lo: u64 = lo.parse().map_err(|_| bad_seed(part))?;
            let hi: u64 = hi.parse().map_err(|_| bad_seed(part))?;
            if lo >= hi {
                return Err(bad_seed(part));
            }
            seeds.extend(lo..hi);
        } else {
            seeds.push(part.parse().map_err(|_| bad_seed(part))?);
        }
    }
    Ok(seeds)
}

fn bad_seed(part: &str) -> CliError {
    CliError::Usage(format!("bad seed spec {part:?}"))
}

pub fn parse_signals(s: &str) -> Result<Vec<SignalKind>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            SignalKind::parse(p).ok_or_else(|| {
                let known: Vec<&str> = SignalKind::ALL.iter().map(|k| k.label()).collect();
                CliError::Usage(format!("unknown signal {p:?}; known: {}", known.join(", ")))
            })
        })
        .collect()
}

/// Creates `{stem}-{timestamp}` under `out`, bumping a suffix on collision.
fn create_run_dir(out: &Path, stem: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(out).map_err(CliError::runtime)?;
    let ts = SystemTime::now().duration_since(UNIX_EPOCH).expect("clock after epoch").as_secs();
    let mut n = 0;
    loop {
        let name =
            if n == 0 { format!("{stem}-{ts}") } else { format!("{stem}-{ts}.{n}") };
        let dir = out.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => n += 1,
            Err(e) => return Err(CliError::runtime(e)),
        }
    }
}

pub fn cmd_run(
    config: Option<&Path>,
    overrides: &[String],
    out_flag: Option<&Path>,
) -> Result<PathBuf, CliError> {
    let cfg = RunConfig::assemble(config, overrides)?;
    let out = resolve_out(&cfg, out_flag);
    let dir = create_run_dir(&out, &cfg.run_stem())?;
    run_into(&cfg, &dir)?;
    Ok(dir)
}

/// Executes one run and writes the four artifacts into `dir`.
fn run_into(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    fs::write(dir.join("config.toml"), cfg.to_toml_string()).map_err(CliError::runtime)?;
    let stem = cfg.run_stem();
    let total = cfg.harness.total_steps;
    let output = harness::run(cfg, &mut |p: &ValidationPoint| {
        eprintln!("[{stem}] step {}/{total} validation {:.6}", p.step, p.scalar);
    })
    .map_err(CliError::runtime)?;
    write_metrics(&dir.join("metrics.csv"), &output.validations)?;
    write_events(&dir.join("events.jsonl"), &output.events)?;
    write_checkpoint(&dir.join("checkpoint"), &output)?;
    Ok(())
}

pub fn write_metrics(path: &Path, validations: &[ValidationPoint]) -> Result<(), CliError> {
    let mut s = String::from("step,behavior,validation_loss\n");
    for v in validations {
        for g in &v.losses {
            s.push_str(&format!("{},{},{}\n", v.step, g.name, g.loss));
        }
    }
    fs::write(path, s).map_err(CliError::runtime)
}

/// Metrics rows regrouped into validation points, in file order.
pub fn read_metrics(path: &Path) -> Result<Vec<(u64, Vec<GroupLoss>)>, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::runtime)?;
    let mut points: Vec<(u64, Vec<GroupLoss>)> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let mut cols = line.split(',');
        let (Some(step), Some(name), Some(loss), None) =
            (cols.next(), cols.next(), cols.next(), cols.next())
        else {
            return Err(CliError::Runtime(format!("metrics line {}: bad column count", i + 1)));
        };
        let step: u64 = step
            .parse()
            .map_err(|_| CliError::Runtime(format!("metrics line {}: bad step", i + 1)))?;
        let loss: f64 = loss
            .parse()
            .map_err(|_| CliError::Runtime(format!("metrics line {}: bad loss", i + 1)))?;
        match points.last_mut() {
            Some((s, losses)) if *s == step => {
                losses.push(GroupLoss { name: name.to_string(), loss })
            }
            _ => points.push((step, vec![GroupLoss { name: name.to_string(), loss }])),
        }
    }
    Ok(points)
}

pub fn write_events(path: &Path, events: &[StepEvent]) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(CliError::runtime)?;
    let mut w = BufWriter::new(file);
    for e in events {
        serde_json::to_writer(&mut w, e).map_err(CliError::runtime)?;
        w.write_all(b"\n").map_err(CliError::runtime)?;
    }
    w.flush().map_err(CliError::runtime)
}

pub fn read_events(path: &Path) -> Result<Vec<StepEvent>, CliError> {
    let file = fs::File::open(path).map_err(CliError::runtime)?;
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(CliError::runtime)?;
        if line.is_empty() {
            continue;
        }
        let e: StepEvent = serde_json::from_str(&line)
            .map_err(|e| CliError::Runtime(format!("events line {}: {e}", i + 1)))?;
        events.push(e);
    }
    Ok(events)
}

fn write_checkpoint(dir: &Path, output: &RunOutput) -> Result<(), CliError> {
    let mut entries: Vec<(String, &crate::numcore::ParamSet)> = output
        .wm
        .param_entries()
        .into_iter()
        .map(|(n, p)| (n, p))
        .collect();
    entries.extend(output.dqn.param_entries());
    let borrowed: Vec<(&str, &crate::numcore::ParamSet)> =
        entries.iter().map(|(n, p)| (n.as_str(), *p)).collect();
    save_checkpoint(dir, &borrowed).map_err(CliError::runtime)
}

pub fn cmd_sweep(
    config: Option<&Path>,
    overrides: &[String],
    signals: &[SignalKind],
    seeds: &[u64],
    jobs: usize,
    out_flag: Option<&Path>,
) -> Result<(), CliError> {
    if signals.is_empty() {
        return Err(CliError::Usage("sweep needs at least one signal".into()));
    }
    if seeds.is_empty() {
        return Err(CliError::Usage("sweep needs at least one seed".into()));
    }
    let base = RunConfig::assemble(config, overrides)?;
    let out = resolve_out(&base, out_flag);
    fs::create_dir_all(&out).map_err(CliError::runtime)?;

    let mut cells = Vec::new();
    for &signal in signals {
        for &seed in seeds {
            cells.push((signal, seed));
        }
    }
    let total = cells.len();

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(SignalKind, u64, Result<PathBuf, String>)>> =
        Mutex::new(Vec::with_capacity(total));
    let workers = jobs.max(1).min(total);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= total {
                    break;
                }
                let (signal, seed) = cells[i];
                let mut cell_overrides = overrides.to_vec();
                cell_overrides.push(format!("curiosity.kind={}", signal.label()));
                cell_overrides.push(format!("seed={seed}"));
                let outcome = RunConfig::assemble(config, &cell_overrides)
                    .map_err(|e| e.to_string())
                    .and_then(|cfg| {
                        let dir = create_run_dir(&out, &cfg.run_stem())
                            .map_err(|e| e.to_string())?;
                        eprintln!("[sweep] {} seed {seed} -> {}", signal.label(), dir.display());
                        run_into(&cfg, &dir).map_err(|e| e.to_string())?;
                        Ok(dir)
                    });
                results.lock().unwrap().push((signal, seed, outcome));
            });
        }
    });

    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(sig, seed, _)| {
        (signals.iter().position(|s| s == sig).unwrap_or(usize::MAX), *seed)
    });
    let mut index = String::from("signal,seed,status,dir\n");
    let mut failed = 0;
    for (signal, seed, outcome) in &results {
        match outcome {
            Ok(dir) => {
                let name = dir.file_name().unwrap_or_default().to_string_lossy();
                index.push_str(&format!("{},{seed},ok,{name}\n", signal.label()));
            }
            Err(e) => {
                failed += 1;
                eprintln!("[sweep] {} seed {seed} failed: {e}", signal.label());
                index.push_str(&format!("{},{seed},failed,\n", signal.label()));
            }
        }
    }
    fs::write(out.join("index.csv"), index).map_err(CliError::runtime)?;
    if failed > 0 {
        return Err(CliError::Partial { failed, total });
    }
    Ok(())
}

/// One completed run loaded back from its directory.
pub struct LoadedRun {
    pub dir: PathBuf,
    pub cfg: RunConfig,
    pub signal: SignalKind,
    pub world: WorldKind,
    pub behavior: BehaviorKind,
    pub seed: u64,
    /// Validation scalar series, recomputed from the per-behavior rows.
    pub scalars: Vec<f64>,
    pub attention: harness::AttentionSummary,
    pub sample: RunSample,
}

/// Reads a run directory's artifacts back into analysis form.
pub fn load_run(dir: &Path) -> Result<LoadedRun, CliError> {
    let cfg = RunConfig::load(&dir.join("config.toml"))?;
    let env = harness::build_env(&cfg).map_err(CliError::runtime)?;
    let groups = env.groups();

    let points = read_metrics(&dir.join("metrics.csv"))?;
    let mut scalars = Vec::with_capacity(points.len());
    for (step, losses) in &points {
        if losses.len() != groups.len()
            || groups.iter().zip(losses).any(|(g, l)| g.name != l.name)
        {
            return Err(CliError::Runtime(format!(
                "{}: metrics rows at step {step} do not match the world's behaviors",
                dir.display()
            )));
        }
        scalars.push(world_scalar(cfg.world.kind, groups, losses));
    }

    let events = read_events(&dir.join("events.jsonl"))?;
    let attention = attention_summary(groups, &events, cfg.harness.attention_window);
    let animate = env.animate_group().clone();
    let noise_ranges: Vec<std::ops::Range<usize>> = groups
        .iter()
        .filter(|g| g.kind == BehaviorKind::Noise)
        .map(|g| g.agent_start..g.agent_start + g.n_agents)
        .collect();
    let anim_visible: Vec<bool> = events
        .iter()
        .map(|e| {
            e.visible_agents
                .iter()
                .any(|&a| a >= animate.agent_start && a < animate.agent_start + animate.n_agents)
        })
        .collect();
    let noise_visible: Vec<bool> = events
        .iter()
        .map(|e| e.visible_agents.iter().any(|&a| noise_ranges.iter().any(|r| r.contains(&a))))
        .collect();

    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        signal: cfg.curiosity.kind,
        world: cfg.world.kind,
        behavior: cfg.world.animate,
        seed: cfg.seed,
        sample: RunSample {
            behavior: cfg.world.animate,
            validate_every: cfg.harness.validate_every,
            scalars: scalars.clone(),
            anim_visible,
            noise_visible,
        },
        cfg,
        scalars,
        attention,
    })
}

/// Run directories under `root`: any directory holding a config echo.
pub fn discover_runs(root: &Path) -> Vec<PathBuf> {
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        if dir.join("config.toml").is_file() && dir.join("metrics.csv").is_file() {
            found.push(dir);
            continue;
        }
        if let Ok(entries) = fs::read_dir(&dir) {
            for e in entries.flatten() {
                let p = e.path();
                if p.is_dir() {
                    stack.push(p);
                }
            }
        }
    }
    found.sort();
    found
}

/// Condition key: runs are only compared within the same world and behavior.
type Condition = (String, String);

pub fn cmd_analyze(root: &Path) -> Result<(), CliError> {
    let dirs = discover_runs(root);
    if dirs.is_empty() {
        return Err(CliError::Usage(format!("no run directories under {}", root.display())));
    }
    let mut runs = Vec::with_capacity(dirs.len());
    for dir in &dirs {
        runs.push(load_run(dir)?);
    }
    runs.sort_by(|a, b| {
        (a.signal.label(), a.world.label(), a.behavior.label(), a.seed, &a.dir).cmp(&(
            b.signal.label(),
            b.world.label(),
            b.behavior.label(),
            b.seed,
            &b.dir,
        ))
    });

    // Random-policy baseline statistics per condition.
    let mut random_perf: BTreeMap<Condition, Vec<f64>> = BTreeMap::new();
    let mut random_ratio: BTreeMap<Condition, Vec<f64>> = BTreeMap::new();
    for r in &runs {
        if r.signal == SignalKind::Random {
            let key = condition(r);
            random_ratio.entry(key.clone()).or_default().push(r.attention.ratio);
            if let Ok(p) = end_performance(&r.scalars) {
                random_perf.entry(key).or_default().push(p);
            }
        }
    }
    if random_perf.is_empty() {
        eprintln!("warning: no Random-policy runs found; performance ratios omitted");
    }

    let mut summary =
        String::from("signal,world,behavior,seed,validations,end_loss,end_performance,\
                      perf_ratio_vs_random,attention_ratio,animate_steps,noise_steps,dir\n");
    for r in &runs {
        let n = r.scalars.len();
        let (end_loss, end_perf, ratio) = match end_performance(&r.scalars) {
            Ok(p) => {
                let tail = &r.scalars[n - 5..];
                let loss = tail.iter().sum::<f64>() / 5.0;
                let vs_random = random_perf.get(&condition(r)).map(|ps| p / mean(ps));
                (format!("{loss}"), format!("{p}"), vs_random.map(|v| format!("{v}")))
            }
            Err(_) => (String::new(), String::new(), None),
        };
        summary.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.signal.label(),
            r.world.label(),
            r.behavior.label(),
            r.seed,
            n,
            end_loss,
            end_perf,
            ratio.unwrap_or_default(),
            csv_f64(r.attention.ratio),
            r.attention.animate_steps,
            r.attention.noise_steps,
            r.dir.file_name().unwrap_or_default().to_string_lossy(),
        ));
    }
    fs::write(root.join("summary.csv"), &summary).map_err(CliError::runtime)?;

    // Failure-mode table: one row per signal within each condition.
    let mut table = String::from("signal,world,behavior,seeds,failure_mode\n");
    let mut by_cell: BTreeMap<(String, Condition), Vec<&LoadedRun>> = BTreeMap::new();
    for r in &runs {
        by_cell.entry((r.signal.label().to_string(), condition(r))).or_default().push(r);
    }
    for ((signal, cond), cell) in &by_cell {
        let ratios: Vec<f64> = cell.iter().map(|r| r.attention.ratio).collect();
        let world = cell[0].world;
        let label = match random_ratio.get(cond) {
            Some(baseline) => match classify_failure(world, &ratios, baseline) {
                Ok(Some(mode)) => mode.label().to_string(),
                Ok(None) => "none".to_string(),
                Err(_) => String::new(),
            },
            None => String::new(),
        };
        table.push_str(&format!(
            "{signal},{},{},{},{label}\n",
            cond.0,
            cond.1,
            cell.len()
        ));
    }
    fs::write(root.join("failure_modes.csv"), &table).map_err(CliError::runtime)?;

    // Early-indicator accuracies per condition, when the population allows.
    let mut indicator = String::from("world,behavior,t,acc_perf,acc_att\n");
    let mut wrote_any = false;
    let mut by_cond: BTreeMap<Condition, Vec<&LoadedRun>> = BTreeMap::new();
    for r in &runs {
        by_cond.entry(condition(r)).or_default().push(r);
    }
    for (cond, cell) in &by_cond {
        let samples: Vec<RunSample> = cell.iter().map(|r| r.sample.clone()).collect();
        match early_indicator(&samples) {
            Ok(points) => {
                for p in points {
                    indicator.push_str(&format!(
                        "{},{},{},{},{}\n",
                        cond.0, cond.1, p.t, p.acc_perf, p.acc_att
                    ));
                    wrote_any = true;
                }
            }
            Err(e) => eprintln!(
                "warning: early indicator skipped for {}/{}: {e}",
                cond.0, cond.1
            ),
        }
    }
    if wrote_any {
        fs::write(root.join("early_indicator.csv"), &indicator).map_err(CliError::runtime)?;
    }

    println!(
        "analyzed {} runs into {}",
        runs.len(),
        root.join("summary.csv").display()
    );
    Ok(())
}

fn condition(r: &LoadedRun) -> Condition {
    (r.world.label().to_string(), r.behavior.label().to_string())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Infinity-safe CSV cell for a ratio.
fn csv_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "inf".to_string()
    }
}

pub fn cmd_replay(dir: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(&dir.join("config.toml"))?;
    let events = read_events(&dir.join("events.jsonl"))?;
    let report = harness::replay_events(&cfg, &events).map_err(CliError::runtime)?;
    if let Some(t) = report.divergence {
        return Err(CliError::Runtime(format!(
            "replay diverged at step {t} after {} verified steps",
            report.steps_checked
        )));
    }
    if report.complete {
        println!("replay ok: {} steps verified", report.steps_checked);
    } else {
        println!(
            "replay ok: {} steps verified (log covers a prefix of the configured {} steps)",
            report.steps_checked, cfg.harness.total_steps
        );
    }
    Ok(())
}
