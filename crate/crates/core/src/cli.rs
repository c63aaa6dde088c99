//! Command-line front end: run campaigns, replay stored records, summarize
//! result directories, and emit a starter configuration file.
//!
//! Exit codes: 0 success, 2 validation/verification failure, 3 I/O failure.

use crate::config::CampaignFile;
use crate::environment::EnvProfile;
use crate::harness::{
    build_comparison, run_experiment_opts, run_goldrun, trace_csv, replay_record, ComparisonTable,
    ExperimentRecord, ExperimentSpec, HarnessError, Outcome, RootCause,
};
use crate::scrub::{decision_log_csv, scrub_log_csv, ScrubPolicyConfig};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|source| CliError::Io { path: parent.to_path_buf(), source })?;
    }
    std::fs::write(path, contents)
        .map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

#[derive(Debug, Parser)]
#[command(
    name = "scrubsim",
    about = "Deterministic fault-injection campaigns comparing FPGA configuration scrubbing policies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Benign,
    Harsh,
    Episodic,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a paired campaign and write per-experiment records plus an
    /// aggregate CSV.
    Run(RunArgs),
    /// Re-execute stored experiment records and verify they reproduce
    /// field for field.
    Replay(ReplayArgs),
    /// Aggregate a directory of records into comparison tables and
    /// histograms.
    Summarize(SummarizeArgs),
    /// Write a fully populated campaign configuration file.
    GenConfig(GenConfigArgs),
}

#[derive(Debug, Parser)]
pub struct RunArgs {
    /// Campaign TOML; built-in defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the campaign's base seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the number of runs per policy.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Worker threads; defaults to the campaign file's setting, then to the
    /// number of cores.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory; defaults to the campaign file's setting, then `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace the campaign's policy list (repeatable). Formats:
    /// no_scrub, blind_full[:period], blind_partial[:period],
    /// readback[:period], secded[:period], budgeted[:window[:k_max]],
    /// fpscrub.
    #[arg(long)]
    pub policy: Vec<String>,
    /// Override the environment profile.
    #[arg(long, value_enum)]
    pub profile: Option<ProfileArg>,
    /// Skip isolation/subset replays for failures.
    #[arg(long)]
    pub no_attribution: bool,
    /// Also write per-run trace, scrub-log, and decision-log CSVs.
    #[arg(long)]
    pub logs: bool,
}

#[derive(Debug, Parser)]
pub struct ReplayArgs {
    /// A record JSON file, or a directory searched recursively.
    pub path: PathBuf,
    /// Rerun each record's experiment under a different policy instead of
    /// verifying it; the result is a new derived record, not a verification.
    #[arg(long)]
    pub policy: Option<String>,
    /// Directory for derived records (with --policy).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct SummarizeArgs {
    /// Directory of record JSON files (searched recursively).
    pub dir: PathBuf,
    /// Optional file to receive the report besides stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
pub struct GenConfigArgs {
    /// Destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse a `--policy` selector such as `blind_full:500` or `budgeted:1000:4`.
pub fn parse_policy(text: &str, spec: &ExperimentSpec) -> Result<ScrubPolicyConfig, CliError> {
    let mut parts = text.split(':');
    let head = parts.next().unwrap_or_default();
    let mut nums = Vec::new();
    for p in parts {
        let n: u64 = p
            .parse()
            .map_err(|_| CliError::Validation(format!("bad policy parameter {p:?} in {text:?}")))?;
        nums.push(n);
    }
    let arg = |i: usize, default: u64| nums.get(i).copied().unwrap_or(default);
    let too_many = |max: usize| {
        if nums.len() > max {
            Err(CliError::Validation(format!("too many parameters in policy {text:?}")))
        } else {
            Ok(())
        }
    };
    let policy = match head {
        "no_scrub" => {
            too_many(0)?;
            ScrubPolicyConfig::NoScrub
        }
        "blind_full" => {
            too_many(1)?;
            ScrubPolicyConfig::PeriodicBlindFull { period: arg(0, 1000) }
        }
        "blind_partial" => {
            too_many(1)?;
            ScrubPolicyConfig::PeriodicBlindPartial {
                period: arg(0, 1000),
                frames: spec.rp_frames(),
            }
        }
        "readback" => {
            too_many(1)?;
            ScrubPolicyConfig::ReadbackCompare { period: arg(0, 1000) }
        }
        "secded" => {
            too_many(1)?;
            ScrubPolicyConfig::SecDedRepair { scan_period: arg(0, 1000) }
        }
        "budgeted" => {
            too_many(2)?;
            ScrubPolicyConfig::Budgeted { window: arg(0, 1000), k_max: arg(1, 4) as usize }
        }
        "fpscrub" => {
            too_many(0)?;
            ScrubPolicyConfig::FpScrub {
                config: crate::predictor::FpScrubConfig::default(),
                frames: spec.rp_frames(),
            }
        }
        other => {
            return Err(CliError::Validation(format!("unknown policy {other:?}")));
        }
    };
    Ok(policy)
}

fn effective_campaign(args: &RunArgs) -> Result<CampaignFile, CliError> {
    let mut campaign = match &args.config {
        Some(path) => CampaignFile::parse(&read_file(path)?)?,
        None => CampaignFile::default(),
    };
    if let Some(seed) = args.seed {
        campaign.campaign.seed_base = seed;
    }
    if let Some(runs) = args.runs {
        campaign.campaign.runs = runs;
    }
    if args.no_attribution {
        campaign.campaign.attribute_root_cause = false;
    }
    if let Some(profile) = args.profile {
        campaign.experiment.env_profile = match profile {
            ProfileArg::Benign => EnvProfile::Benign,
            ProfileArg::Harsh => EnvProfile::Harsh,
            ProfileArg::Episodic => EnvProfile::Episodic {
                bursts: vec![crate::environment::BurstSpec {
                    start: campaign.experiment.duration / 4,
                    end: campaign.experiment.duration / 2,
                    multiplier: 10.0,
                }],
            },
        };
    }
    if !args.policy.is_empty() {
        campaign.policies = args
            .policy
            .iter()
            .map(|p| parse_policy(p, &campaign.experiment))
            .collect::<Result<_, _>>()?;
    }
    campaign.validate()?;
    Ok(campaign)
}

/// Aggregate CSV: one row per experiment, policies in campaign order, seeds
/// ascending, so equal campaigns produce byte-identical files.
pub fn aggregate_csv(per_policy: &[Vec<ExperimentRecord>]) -> String {
    let mut out = String::from(
        "policy,seed,fingerprint,campaign_fingerprint,outcome,first_divergence,\
         faults_applied,root_cause,causal_fault_ids,latency,latency_class,\
         isolated_replays,subset_replays,scrub_actions,port_busy,energy,\
         uncorrectable,latent_mean,trace_crc\n",
    );
    for records in per_policy {
        for r in records {
            let (outcome, first_div) = match r.outcome {
                Outcome::NoFailure => ("no_failure", String::new()),
                Outcome::Failure { first_divergence_tick } => {
                    ("failure", first_divergence_tick.to_string())
                }
            };
            let (cause, causal_ids) = match &r.root_cause {
                None => (String::new(), String::new()),
                Some(RootCause::Single { fault_id }) => {
                    ("single".into(), fault_id.to_string())
                }
                Some(RootCause::Interacting { fault_ids }) => (
                    "interacting".into(),
                    fault_ids
                        .iter()
                        .map(|i| i.to_string())
                        .collect::<Vec<_>>()
                        .join(";"),
                ),
            };
            let (latency, latency_class) = match r.latencies.first() {
                None => (String::new(), String::new()),
                Some(l) => (l.latency.to_string(), format!("{:?}", l.class).to_lowercase()),
            };
            let latent_mean = r
                .scrub
                .mean_latent_residence()
                .map(|m| format!("{m:.3}"))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:08x}",
                r.policy_name,
                r.seed,
                r.fingerprint,
                r.campaign_fingerprint,
                outcome,
                first_div,
                r.applied_faults.len(),
                cause,
                causal_ids,
                latency,
                latency_class,
                r.isolated_replays,
                r.subset_replays,
                r.scrub.total_actions,
                r.scrub.port_busy_total,
                r.scrub.energy_total,
                r.scrub.uncorrectable_events,
                latent_mean,
                r.trace_crc,
            );
        }
    }
    out
}

pub fn render_comparison(table: &ComparisonTable) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:>5} {:>8} {:>8} {:>19} {:>12} {:>12} {:>25}",
        "policy",
        "runs",
        "failures",
        "frac",
        "95% CI",
        "energy",
        "port_busy",
        "fail diff vs baseline"
    );
    for row in &table.rows {
        let diff = match &row.failure_diff_vs_baseline {
            None => "(baseline)".to_string(),
            Some(d) => format!("{:+.4} [{:+.4},{:+.4}]", d.mean, d.ci.0, d.ci.1),
        };
        let _ = writeln!(
            out,
            "{:<24} {:>5} {:>8} {:>8.4} [{:.4},{:.4}] {:>12} {:>12} {:>25}",
            row.policy,
            row.runs,
            row.failures,
            row.failure_fraction,
            row.failure_ci.0,
            row.failure_ci.1,
            row.total_energy,
            row.total_port_busy,
            diff
        );
    }
    out
}

fn indent(text: &str) -> String {
    text.lines().map(|l| format!("  {l}\n")).collect()
}

/// Power-of-two bucket histogram over non-negative integer samples.
pub fn histogram(title: &str, values: &[u64]) -> String {
    let mut out = format!("{title} (n = {})\n", values.len());
    if values.is_empty() {
        return out;
    }
    let max = *values.iter().max().unwrap();
    let mut bounds = vec![(0u64, 1u64)];
    let mut lo = 1u64;
    while lo <= max {
        bounds.push((lo, lo.saturating_mul(2)));
        lo = lo.saturating_mul(2);
    }
    let counts: Vec<usize> = bounds
        .iter()
        .map(|&(a, b)| values.iter().filter(|&&v| v >= a && v < b).count())
        .collect();
    let peak = counts.iter().copied().max().unwrap_or(1).max(1);
    for (&(a, b), &c) in bounds.iter().zip(&counts) {
        let bar = "#".repeat(c * 40 / peak);
        let _ = writeln!(out, "  [{a:>8},{b:>8}) {c:>6} {bar}");
    }
    out
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let campaign = effective_campaign(args)?;
    let out_dir = args
        .out
        .clone()
        .or_else(|| campaign.campaign.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let workers = args.workers.or(campaign.campaign.workers);
    let seeds = campaign.seeds();
    let spec = &campaign.experiment;
    let goldrun = run_goldrun(spec)?;

    let run_all = || -> Result<Vec<Vec<ExperimentRecord>>, HarnessError> {
        let mut per_policy = Vec::new();
        for policy in &campaign.policies {
            let records: Result<Vec<_>, _> = seeds
                .par_iter()
                .map(|&seed| {
                    run_experiment_opts(
                        spec,
                        policy,
                        seed,
                        &goldrun,
                        campaign.campaign.attribute_root_cause,
                        false,
                    )
                    .map(|o| o.record)
                })
                .collect();
            per_policy.push(records?);
        }
        Ok(per_policy)
    };
    let per_policy = match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| CliError::Validation(format!("worker pool: {e}")))?;
            pool.install(run_all)?
        }
        None => run_all()?,
    };

    // Echo the fully materialized configuration next to the results.
    write_file(&out_dir.join("campaign.toml"), &campaign.to_toml())?;
    for (policy, records) in campaign.policies.iter().zip(&per_policy) {
        let dir = out_dir.join("records").join(policy.name());
        for r in records {
            let json = serde_json::to_string_pretty(r).expect("record serializes");
            write_file(&dir.join(format!("seed_{:06}.json", r.seed)), &json)?;
        }
    }
    write_file(&out_dir.join("aggregate.csv"), &aggregate_csv(&per_policy))?;

    // Provenance for files whose pinned CSV formats cannot carry it inline.
    let manifest = serde_json::json!({
        "campaign_fingerprint": crate::harness::campaign_fingerprint(spec),
        "seed_base": campaign.campaign.seed_base,
        "seeds": seeds,
        "policies": campaign.policies.iter().map(|p| p.name()).collect::<Vec<_>>(),
    });
    write_file(
        &out_dir.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;

    if args.logs {
        for policy in &campaign.policies {
            let dir = out_dir.join("logs").join(policy.name());
            for &seed in &seeds {
                let out = run_experiment_opts(spec, policy, seed, &goldrun, false, true)?;
                let base = format!("seed_{seed:06}");
                write_file(
                    &dir.join(format!("{base}_plan.json")),
                    &spec.build_plan(seed)?.to_json_events(),
                )?;
                write_file(
                    &dir.join(format!("{base}_trace.csv")),
                    &trace_csv(spec, &out.rows, Some(&goldrun)),
                )?;
                write_file(&dir.join(format!("{base}_scrub.csv")), &scrub_log_csv(&out.scrub_log))?;
                if !out.decision_log.is_empty() {
                    write_file(
                        &dir.join(format!("{base}_decisions.csv")),
                        &decision_log_csv(&out.decision_log),
                    )?;
                }
            }
        }
    }

    let table = build_comparison(&per_policy)?;
    println!("{}", render_comparison(&table));
    println!("wrote {}", out_dir.display());
    Ok(())
}

fn record_files(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    if path.is_file() {
        files.push(path.to_path_buf());
        return Ok(files);
    }
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = std::fs::read_dir(&dir)
            .map_err(|source| CliError::Io { path: dir.clone(), source })?;
        for entry in entries {
            let entry = entry.map_err(|source| CliError::Io { path: dir.clone(), source })?;
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "json") {
                files.push(p);
            }
        }
    }
    files.sort();
    Ok(files)
}

fn load_record(path: &Path) -> Result<ExperimentRecord, CliError> {
    let text = read_file(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn cmd_replay(args: &ReplayArgs) -> Result<(), CliError> {
    let files = record_files(&args.path)?;
    if files.is_empty() {
        return Err(CliError::Validation(format!(
            "no record files under {}",
            args.path.display()
        )));
    }
    if let Some(policy_text) = &args.policy {
        return replay_derived(&files, policy_text, args.out.as_deref());
    }
    let mut mismatches = 0usize;
    for file in &files {
        let stored = load_record(file)?;
        match replay_record(&stored) {
            Ok(recomputed) if recomputed == stored => {
                println!("ok       {}", file.display());
            }
            Ok(_) => {
                mismatches += 1;
                println!("MISMATCH {}", file.display());
            }
            Err(e) => {
                mismatches += 1;
                println!("ERROR    {}: {e}", file.display());
            }
        }
    }
    println!("{} replayed, {} mismatched", files.len(), mismatches);
    if mismatches > 0 {
        return Err(CliError::Validation(format!("{mismatches} records failed to reproduce")));
    }
    Ok(())
}

/// `replay --policy`: rerun each stored experiment under another policy.
/// The output is a new derived record, not a verification of the original.
fn replay_derived(
    files: &[PathBuf],
    policy_text: &str,
    out: Option<&Path>,
) -> Result<(), CliError> {
    for file in files {
        let stored = load_record(file)?;
        let policy = parse_policy(policy_text, &stored.spec)?;
        let goldrun = run_goldrun(&stored.spec)?;
        let derived =
            run_experiment_opts(&stored.spec, &policy, stored.seed, &goldrun, true, false)?.record;
        println!(
            "derived  {} -> policy {} seed {} {}",
            file.display(),
            derived.policy_name,
            derived.seed,
            match derived.outcome {
                Outcome::NoFailure => "no_failure".to_string(),
                Outcome::Failure { first_divergence_tick } =>
                    format!("failure@{first_divergence_tick}"),
            }
        );
        if let Some(dir) = out {
            let json = serde_json::to_string_pretty(&derived).expect("record serializes");
            write_file(
                &dir.join(format!("derived_{}_seed_{:06}.json", derived.policy_name, derived.seed)),
                &json,
            )?;
        }
    }
    Ok(())
}

fn cmd_summarize(args: &SummarizeArgs) -> Result<(), CliError> {
    let files = record_files(&args.dir)?;
    let mut records = Vec::new();
    for file in &files {
        records.push(load_record(file)?);
    }
    if records.is_empty() {
        return Err(CliError::Validation(format!("no records under {}", args.dir.display())));
    }

    // Mixed directories are grouped into separate campaigns by fingerprint.
    let mut campaigns: BTreeMap<String, BTreeMap<String, Vec<ExperimentRecord>>> = BTreeMap::new();
    for r in records {
        campaigns
            .entry(r.campaign_fingerprint.clone())
            .or_default()
            .entry(r.policy_name.clone())
            .or_default()
            .push(r);
    }

    let mut report = String::new();
    for (fingerprint, mut by_policy) in campaigns {
        let _ = writeln!(report, "campaign {fingerprint}");
        for records in by_policy.values_mut() {
            records.sort_by_key(|r| r.seed);
        }
        let per_policy: Vec<Vec<ExperimentRecord>> = by_policy.values().cloned().collect();
        match build_comparison(&per_policy) {
            Ok(table) => {
                report.push_str(&render_comparison(&table));
            }
            Err(e) => {
                let _ = writeln!(report, "  (not a paired campaign: {e})");
                for records in &per_policy {
                    let s = crate::harness::summarize_policy(records);
                    let _ = writeln!(
                        report,
                        "  {:<24} runs {:>4} failures {:>4}",
                        s.policy, s.runs, s.failures
                    );
                }
            }
        }
        for (name, records) in &by_policy {
            let _ = writeln!(report, "policy {name}");
            // Mean cumulative scrub energy at each decile of the run.
            let deciles = records
                .iter()
                .map(|r| r.scrub.energy_timeline.len())
                .max()
                .unwrap_or(0);
            let series: Vec<String> = (0..deciles)
                .map(|d| {
                    let sum: u64 = records
                        .iter()
                        .map(|r| r.scrub.energy_timeline.get(d).copied().unwrap_or(0))
                        .sum();
                    format!("{:.1}", sum as f64 / records.len() as f64)
                })
                .collect();
            let _ = writeln!(report, "  mean cumulative energy by decile: {}", series.join(","));
            let latencies: Vec<u64> =
                records.iter().flat_map(|r| r.latencies.iter().map(|l| l.latency)).collect();
            let residences: Vec<u64> = records
                .iter()
                .flat_map(|r| r.scrub.latent_residences.iter().copied())
                .collect();
            report.push_str(&indent(&histogram("fault latency (ticks)", &latencies)));
            report.push_str(&indent(&histogram("latent residence (ticks)", &residences)));
        }
        report.push('\n');
    }

    print!("{report}");
    if let Some(out) = &args.out {
        write_file(out, &report)?;
    }
    Ok(())
}

/// The default campaign file with explanatory comments ahead of each
/// section. Comments are injected into the serialized defaults so the two
/// can never drift apart.
pub fn commented_default_config() -> String {
    let mut text = String::from(
        "# scrubsim campaign configuration.\n\
         # Every field below is the built-in default; edit and delete freely.\n\
         # Unknown keys are rejected. Times are in ticks (one control loop\n\
         # iteration at loop_period = 1).\n\n",
    );
    let body = CampaignFile::default().to_toml();
    let mut seen: std::collections::HashSet<&str> = std::collections::HashSet::new();
    for line in body.lines() {
        let comment = match line {
            "[campaign]" => Some("# Orchestration: seeds, run count, and attribution replays."),
            "[experiment]" => {
                Some("# Shared experiment parameters; identical for every policy (paired design).")
            }
            "[experiment.roi]" => {
                Some("# Injection window: the protected module's configuration frames.")
            }
            "[experiment.workload]" => Some("# Square-wave speed setpoint profile."),
            "[experiment.pid]" => {
                Some("# Controller gains and actuation clamp, as raw Q16.16 words.")
            }
            "[experiment.plant]" => Some("# First-order vehicle model v' = a*v + b*u."),
            "[experiment.fault_source]" => {
                Some("# Upset schedule: fixed_count, poisson, explicit, or none.")
            }
            "[experiment.map]" => {
                Some("# Bit-to-behavior sensitivity map: class shares and corruption weights.")
            }
            "[experiment.port_cost]" => Some("# Configuration-port timing and energy model."),
            "[experiment.env_profile]" => Some("# Environment: benign, harsh, or episodic."),
            "[[policies]]" => Some("# Scrub policies to compare; the first is the baseline."),
            _ => None,
        };
        if let Some(c) = comment {
            if seen.insert(line) {
                text.push_str(c);
                text.push('\n');
            }
        }
        text.push_str(line);
        text.push('\n');
    }
    text
}

fn cmd_gen_config(args: &GenConfigArgs) -> Result<(), CliError> {
    let text = commented_default_config();
    match &args.out {
        Some(path) => write_file(path, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Replay(args) => cmd_replay(args),
        Command::Summarize(args) => cmd_summarize(args),
        Command::GenConfig(args) => cmd_gen_config(args),
    }
}
