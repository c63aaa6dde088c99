//! Experiment harness: runs goldruns and fault-injected experiments, classifies
//! failures by exact trace comparison, measures fault latency, attributes root
//! cause via isolation replays, and aggregates policy-comparison metrics.

use crate::config_memory::{BitAddress, ConfigMemory, Dims, random_golden};
use crate::crc::Crc32;
use crate::dut::{plant_step, DutModule, EffectiveDut, PidParams, PlantModel, Workload};
use crate::environment::{generate_trace, EnvError, EnvProfile, EnvironmentTrace};
use crate::fault::{
    generate_plan, poisson_arrival_plan, AppliedFault, FaultError, FaultKind, FaultPlan,
    InjectionRuntime, KindWeights, RegionOfInterest,
};
use crate::scrub::{PolicyRuntime, PortCostModel, ScrubError, ScrubPolicyConfig};
use crate::sensitivity::{
    build_default_map, ElementWeights, MapError, MapFractions, SensitivityMap,
};
use crate::stats;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use thiserror::Error;

pub const RECORD_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Mem(#[from] crate::config_memory::MemError),
    #[error(transparent)]
    Fault(#[from] FaultError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Scrub(#[from] ScrubError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Deterministic sub-seed for a named stream of one experiment.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut h = splitmix64(root);
    for &b in label.as_bytes() {
        h = splitmix64(h ^ b as u64);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum FaultSource {
    None,
    /// The reference campaign shape: a fixed number of upsets in accumulation.
    FixedCount { count: usize, weights: KindWeights, mbe_radius_max: u32 },
    /// Flux-modulated inhomogeneous Poisson arrivals.
    Poisson { base_rate: f64, weights: KindWeights, mbe_radius_max: u32 },
    /// A hand-written schedule for constructed scenarios.
    Explicit { events: Vec<crate::fault::FaultEvent> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapParams {
    pub fractions: MapFractions,
    pub element_weights: ElementWeights,
}

impl Default for MapParams {
    fn default() -> Self {
        MapParams { fractions: MapFractions::default(), element_weights: ElementWeights::default() }
    }
}

/// Everything one experiment needs except the seed and the scrub policy, so
/// paired comparisons share fault plans and environment bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub duration: u64,
    pub frame_count: usize,
    pub frame_size: usize,
    pub roi: RegionOfInterest,
    pub workload: Workload,
    pub pid: PidParams,
    pub plant: PlantModel,
    pub fault_source: FaultSource,
    pub map: MapParams,
    pub port_cost: PortCostModel,
    pub env_profile: EnvProfile,
    pub sensor_cadence: u64,
    /// Controller share of each loop period; the rest is scrub idle time.
    pub compute_fraction: f64,
    /// High/Low latency split; defaults to one workload half-period.
    pub latency_threshold: Option<u64>,
    /// Fixed bit-to-behavior map; when unset, one is derived from the seed.
    pub map_override: Option<SensitivityMap>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            duration: 42_000,
            frame_count: 32,
            frame_size: 128,
            roi: RegionOfInterest { frame_lo: 8, frame_hi: 24, bit_lo: 0, bit_hi: 128 },
            workload: Workload::default(),
            pid: PidParams::default(),
            plant: PlantModel::default(),
            fault_source: FaultSource::FixedCount {
                count: 10,
                weights: KindWeights::sbe_only(),
                mbe_radius_max: 3,
            },
            map: MapParams::default(),
            port_cost: PortCostModel::default(),
            env_profile: EnvProfile::Benign,
            sensor_cadence: 100,
            compute_fraction: 0.1,
            latency_threshold: None,
            map_override: None,
        }
    }
}

impl ExperimentSpec {
    pub fn dims(&self) -> Dims {
        Dims { frame_count: self.frame_count, frame_size: self.frame_size }
    }

    /// Frames of the reconfigurable partition (the region of interest).
    pub fn rp_frames(&self) -> Vec<usize> {
        (self.roi.frame_lo..self.roi.frame_hi).collect()
    }

    pub fn latency_threshold_ticks(&self) -> u64 {
        self.latency_threshold.unwrap_or(self.workload.half_period)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.duration == 0 {
            return Err(HarnessError::Config("duration must be >= 1 tick".into()));
        }
        if self.frame_count == 0 || self.frame_size < 16 {
            return Err(HarnessError::Config(format!(
                "device {}x{} too small",
                self.frame_count, self.frame_size
            )));
        }
        self.roi.validate(self.dims())?;
        if self.sensor_cadence == 0 || self.duration % self.sensor_cadence != 0 {
            return Err(HarnessError::Config(format!(
                "sensor cadence {} must divide duration {}",
                self.sensor_cadence, self.duration
            )));
        }
        if !(0.0..1.0).contains(&self.compute_fraction) {
            return Err(HarnessError::Config(format!(
                "compute_fraction {} outside [0, 1)",
                self.compute_fraction
            )));
        }
        if self.pid.loop_period == 0 || self.pid.u_min >= self.pid.u_max {
            return Err(HarnessError::Config("bad controller parameters".into()));
        }
        if let FaultSource::Poisson { base_rate, .. } = self.fault_source {
            if base_rate < 0.0 {
                return Err(HarnessError::Config("negative base_rate".into()));
            }
        }
        if let Some(map) = &self.map_override {
            if map.roi != self.roi {
                return Err(HarnessError::Config(
                    "map_override region does not match the injection region".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn build_map(&self, seed: u64) -> Result<SensitivityMap, MapError> {
        if let Some(map) = &self.map_override {
            return Ok(map.clone());
        }
        build_default_map(
            derive_seed(seed, "map"),
            self.roi,
            self.map.fractions,
            self.map.element_weights,
        )
    }

    pub fn build_env(&self, seed: u64) -> Result<EnvironmentTrace, EnvError> {
        generate_trace(
            derive_seed(seed, "env"),
            self.duration,
            self.sensor_cadence,
            &self.env_profile,
        )
    }

    pub fn build_plan(&self, seed: u64) -> Result<FaultPlan, HarnessError> {
        let plan_seed = derive_seed(seed, "plan");
        match &self.fault_source {
            FaultSource::None => Ok(FaultPlan::empty(plan_seed)),
            FaultSource::FixedCount { count, weights, mbe_radius_max } => Ok(generate_plan(
                plan_seed,
                *count,
                &self.roi,
                self.duration,
                *weights,
                *mbe_radius_max,
            )?),
            FaultSource::Explicit { events } => {
                let mut events = events.clone();
                events.sort_by_key(|e| (e.trigger_time, e.id));
                for e in &mut events {
                    e.resolve_cells(&self.roi);
                }
                Ok(FaultPlan { seed: plan_seed, weights: KindWeights::sbe_only(), events })
            }
            FaultSource::Poisson { base_rate, weights, mbe_radius_max } => {
                let env = self.build_env(seed)?;
                Ok(poisson_arrival_plan(
                    plan_seed,
                    *base_rate,
                    &env,
                    &self.roi,
                    self.duration,
                    *weights,
                    *mbe_radius_max,
                )?)
            }
        }
    }

    pub fn build_memory(&self, seed: u64) -> Result<ConfigMemory, HarnessError> {
        let image = random_golden(derive_seed(seed, "golden"), self.frame_count, self.frame_size);
        Ok(ConfigMemory::build(self.frame_count, self.frame_size, &image)?)
    }
}

/// Hash of the shared campaign parameters; identical for all policies and
/// seeds of one comparison.
pub fn campaign_fingerprint(spec: &ExperimentSpec) -> String {
    let mut hasher = Sha256::new();
    hasher.update(RECORD_SCHEMA_VERSION.to_le_bytes());
    hasher.update(serde_json::to_vec(spec).expect("spec serializes"));
    hex_prefix(&hasher.finalize())
}

/// Hash pinning one experiment: spec, policy, and seed.
pub fn config_fingerprint(spec: &ExperimentSpec, policy: &ScrubPolicyConfig, seed: u64) -> String {
    let mut hasher = Sha256::new();
    hasher.update(RECORD_SCHEMA_VERSION.to_le_bytes());
    hasher.update(serde_json::to_vec(spec).expect("spec serializes"));
    hasher.update(serde_json::to_vec(policy).expect("policy serializes"));
    hasher.update(seed.to_le_bytes());
    hex_prefix(&hasher.finalize())
}

fn hex_prefix(digest: &[u8]) -> String {
    digest[..16].iter().map(|b| format!("{b:02x}")).collect()
}

/// Fault-free reference trace: one (measured, actuation) word pair per
/// control step.
#[derive(Debug, Clone, PartialEq)]
pub struct Goldrun {
    pub rows: Vec<(u32, u32)>,
}

pub fn run_goldrun(spec: &ExperimentSpec) -> Result<Goldrun, HarnessError> {
    spec.validate()?;
    let steps = spec.duration / spec.pid.loop_period;
    let mut rows = Vec::with_capacity(steps as usize);
    let dut = EffectiveDut::nominal(spec.pid);
    let mut module = DutModule::new();
    let mut plant = spec.plant;
    for step in 0..steps {
        let tick = step * spec.pid.loop_period;
        let sp = spec.workload.setpoint_at(tick);
        let measured = plant.v;
        let u = module.step(&dut, sp, measured);
        plant_step(&mut plant, u);
        rows.push((measured.to_word(), u.to_word()));
    }
    Ok(Goldrun { rows })
}

/// Trace CSV: tick,setpoint,measured_speed,actuation,diverged_flag.
pub fn trace_csv(spec: &ExperimentSpec, rows: &[(u32, u32)], reference: Option<&Goldrun>) -> String {
    use crate::fixed::Fx;
    let mut out = String::from("tick,setpoint,measured_speed,actuation,diverged_flag\n");
    for (i, &(measured, u)) in rows.iter().enumerate() {
        let tick = i as u64 * spec.pid.loop_period;
        let diverged = reference
            .map(|g| g.rows.get(i).map_or(true, |&r| r != (measured, u)))
            .unwrap_or(false);
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            tick,
            spec.workload.setpoint_at(tick),
            Fx::from_word(measured),
            Fx::from_word(u),
            diverged as u8
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    NoFailure,
    Failure { first_divergence_tick: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "cause", rename_all = "snake_case")]
pub enum RootCause {
    Single { fault_id: u64 },
    Interacting { fault_ids: Vec<u64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyClass {
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultLatency {
    pub fault_ids: Vec<u64>,
    pub latency: u64,
    pub class: LatencyClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppliedFaultRecord {
    pub id: u64,
    pub applied_at: u64,
    pub kind: FaultKind,
    pub center: BitAddress,
    pub radius: u32,
    pub cell_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScrubMetrics {
    pub total_actions: u64,
    pub port_busy_total: u64,
    pub energy_total: u64,
    pub uncorrectable_events: u64,
    /// Cumulative scrub energy sampled at each decile of the run, for
    /// energy-over-time reporting without re-simulation.
    pub energy_timeline: Vec<u64>,
    /// Ticks each sensitive flipped bit persisted before a scrub removed it
    /// (or until the end of the run).
    pub latent_residences: Vec<u64>,
}

impl ScrubMetrics {
    pub fn mean_latent_residence(&self) -> Option<f64> {
        if self.latent_residences.is_empty() {
            None
        } else {
            Some(
                self.latent_residences.iter().sum::<u64>() as f64
                    / self.latent_residences.len() as f64,
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub schema_version: u32,
    pub campaign_fingerprint: String,
    pub fingerprint: String,
    pub seed: u64,
    pub policy_name: String,
    pub spec: ExperimentSpec,
    pub policy: ScrubPolicyConfig,
    pub applied_faults: Vec<AppliedFaultRecord>,
    pub trace_crc: u32,
    pub outcome: Outcome,
    pub root_cause: Option<RootCause>,
    pub latencies: Vec<FaultLatency>,
    pub isolated_replays: u64,
    pub subset_replays: u64,
    pub scrub: ScrubMetrics,
}

struct SimResult {
    first_divergence: Option<u64>,
    applied: Vec<AppliedFaultRecord>,
    trace_crc: u32,
    rows: Vec<(u32, u32)>,
    scrub: ScrubMetrics,
    decision_log: Vec<crate::scrub::DecisionRow>,
    scrub_log: Vec<crate::scrub::ScrubAction>,
}

fn policy_window(policy: &ScrubPolicyConfig) -> u64 {
    match policy {
        ScrubPolicyConfig::NoScrub => 1,
        ScrubPolicyConfig::PeriodicBlindFull { period }
        | ScrubPolicyConfig::PeriodicBlindPartial { period, .. }
        | ScrubPolicyConfig::ReadbackCompare { period }
        | ScrubPolicyConfig::SecDedRepair { scan_period: period } => *period,
        ScrubPolicyConfig::Budgeted { window, .. } => *window,
        ScrubPolicyConfig::FpScrub { config, .. } => config.p_min,
    }
}

/// Tick-by-tick simulation of one experiment. Within a tick: sensors are
/// sampled, the scrub policy runs, due faults land (a fault during a frame's
/// write tick lands after the write), then the controller steps.
fn simulate(
    spec: &ExperimentSpec,
    policy: &ScrubPolicyConfig,
    seed: u64,
    plan: &FaultPlan,
    reference: Option<&Goldrun>,
    stop_at_divergence: bool,
    collect_rows: bool,
) -> Result<SimResult, HarnessError> {
    let mut mem = spec.build_memory(seed)?;
    let map = spec.build_map(seed)?;
    let env = spec.build_env(seed)?;
    let mut policy_rt = PolicyRuntime::new(policy.clone(), spec.port_cost, mem.dims())?;
    let idle_window =
        (((1.0 - spec.compute_fraction) * policy_window(policy) as f64).floor() as u64).max(1);

    let mut injector = InjectionRuntime::new();
    let mut effective = EffectiveDut::nominal(spec.pid);
    let mut module = DutModule::new();
    let mut plant = spec.plant;
    let mut crc = Crc32::new();
    let mut rows = Vec::new();
    let mut applied: Vec<AppliedFaultRecord> = Vec::new();
    let mut first_divergence = None;

    // Sensitive flipped bits currently live, with their flip ticks.
    let mut open_flips: HashMap<BitAddress, u64> = HashMap::new();
    let mut residences: Vec<u64> = Vec::new();

    let lp = spec.pid.loop_period;
    let mut tick = 0u64;
    while tick < spec.duration {
        if tick % spec.sensor_cadence == 0 {
            policy_rt.observe_sample(env.read_sensors(tick)?);
        }

        let out = policy_rt.step(&mut mem, tick, idle_window);
        if !out.restored.is_empty() {
            for addr in &out.restored {
                if let Some(t0) = open_flips.remove(addr) {
                    residences.push(tick - t0);
                }
            }
            effective = EffectiveDut::new(spec.pid, map.apply_corruptions(&mem.diff_set()));
        }

        let landed = injector.inject_due(plan, &mut mem, tick)?;
        if !landed.is_empty() {
            for (event, AppliedFault { event_id, applied_at }) in &landed {
                applied.push(AppliedFaultRecord {
                    id: *event_id,
                    applied_at: *applied_at,
                    kind: event.kind,
                    center: event.center,
                    radius: event.radius,
                    cell_count: event.cells.len(),
                });
                for &cell in &event.cells {
                    if map.is_sensitive(cell) {
                        if mem.get_live(cell)? != mem.get_golden(cell)? {
                            open_flips.entry(cell).or_insert(tick);
                        } else {
                            // A second upset restored the bit; no residence.
                            open_flips.remove(&cell);
                        }
                    }
                }
            }
            effective = EffectiveDut::new(spec.pid, map.apply_corruptions(&mem.diff_set()));
        }

        if tick % lp == 0 {
            let sp = spec.workload.setpoint_at(tick);
            let measured = plant.v;
            let u = module.step(&effective, sp, measured);
            plant_step(&mut plant, u);
            policy_rt.observe_io(sp.to_word(), u.to_word(), tick);

            let pair = (measured.to_word(), u.to_word());
            crc.update(&pair.0.to_le_bytes());
            crc.update(&pair.1.to_le_bytes());
            if collect_rows {
                rows.push(pair);
            }
            if first_divergence.is_none() {
                if let Some(gold) = reference {
                    let idx = (tick / lp) as usize;
                    if gold.rows[idx] != pair {
                        first_divergence = Some(tick);
                        if stop_at_divergence {
                            break;
                        }
                    }
                }
            }
        }
        tick += 1;
    }

    // Bits never scrubbed persist to the end of the run.
    for (_, t0) in open_flips {
        residences.push(spec.duration - t0);
    }
    residences.sort_unstable();

    let energy_timeline: Vec<u64> = (1..=10)
        .map(|d| {
            let cutoff = spec.duration * d / 10;
            policy_rt
                .log
                .iter()
                .filter(|a| a.issued_at < cutoff)
                .map(|a| a.energy)
                .sum()
        })
        .collect();

    Ok(SimResult {
        first_divergence,
        applied,
        trace_crc: crc.finalize(),
        rows,
        scrub: ScrubMetrics {
            total_actions: policy_rt.log.len() as u64,
            port_busy_total: policy_rt.total_port_busy(),
            energy_total: policy_rt.total_energy(),
            uncorrectable_events: policy_rt.uncorrectable_events,
            energy_timeline,
            latent_residences: residences,
        },
        decision_log: policy_rt.decision_log.clone(),
        scrub_log: policy_rt.log,
    })
}

/// Full experiment output including side logs not stored in the record.
pub struct ExperimentOutput {
    pub record: ExperimentRecord,
    pub scrub_log: Vec<crate::scrub::ScrubAction>,
    pub decision_log: Vec<crate::scrub::DecisionRow>,
    pub rows: Vec<(u32, u32)>,
}

pub fn run_experiment(
    spec: &ExperimentSpec,
    policy: &ScrubPolicyConfig,
    seed: u64,
    goldrun: &Goldrun,
) -> Result<ExperimentOutput, HarnessError> {
    run_experiment_opts(spec, policy, seed, goldrun, true, false)
}

pub fn run_experiment_opts(
    spec: &ExperimentSpec,
    policy: &ScrubPolicyConfig,
    seed: u64,
    goldrun: &Goldrun,
    attribute: bool,
    collect_rows: bool,
) -> Result<ExperimentOutput, HarnessError> {
    spec.validate()?;
    let plan = spec.build_plan(seed)?;
    let sim = simulate(spec, policy, seed, &plan, Some(goldrun), false, collect_rows)?;

    let outcome = match sim.first_divergence {
        None => Outcome::NoFailure,
        Some(t) => Outcome::Failure { first_divergence_tick: t },
    };

    let mut isolated_replays = 0u64;
    let mut subset_replays = 0u64;
    let mut root_cause = None;
    let mut latencies = Vec::new();

    if attribute {
        if let Outcome::Failure { first_divergence_tick } = outcome {
            let (cause, iso, sub) =
                attribute_root_cause(spec, policy, seed, &plan, &sim.applied, goldrun)?;
            isolated_replays = iso;
            subset_replays = sub;
            latencies = measure_latency(
                spec,
                &cause,
                &sim.applied,
                first_divergence_tick,
            );
            root_cause = Some(cause);
        }
    }

    let record = ExperimentRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        campaign_fingerprint: campaign_fingerprint(spec),
        fingerprint: config_fingerprint(spec, policy, seed),
        seed,
        policy_name: policy.name(),
        spec: spec.clone(),
        policy: policy.clone(),
        applied_faults: sim.applied,
        trace_crc: sim.trace_crc,
        outcome,
        root_cause,
        latencies,
        isolated_replays,
        subset_replays,
        scrub: sim.scrub,
    };
    Ok(ExperimentOutput {
        record,
        scrub_log: sim.scrub_log,
        decision_log: sim.decision_log,
        rows: sim.rows,
    })
}

/// Does a replay with only `ids` active reproduce a failure?
pub fn subset_fails(
    spec: &ExperimentSpec,
    policy: &ScrubPolicyConfig,
    seed: u64,
    plan: &FaultPlan,
    ids: &[u64],
    goldrun: &Goldrun,
) -> Result<bool, HarnessError> {
    let restricted = plan.restricted_to(ids);
    let sim = simulate(spec, policy, seed, &restricted, Some(goldrun), true, false)?;
    Ok(sim.first_divergence.is_some())
}

/// Isolation replays first (exactly one per applied fault), then bounded
/// subset search: pairs, triples, then the full applied set.
pub fn attribute_root_cause(
    spec: &ExperimentSpec,
    policy: &ScrubPolicyConfig,
    seed: u64,
    plan: &FaultPlan,
    applied: &[AppliedFaultRecord],
    goldrun: &Goldrun,
) -> Result<(RootCause, u64, u64), HarnessError> {
    let mut isolated = 0u64;
    let mut failing = Vec::new();
    for fault in applied {
        isolated += 1;
        if subset_fails(spec, policy, seed, plan, &[fault.id], goldrun)? {
            failing.push(fault);
        }
    }
    if let Some(first) = failing.iter().min_by_key(|f| (f.applied_at, f.id)) {
        return Ok((RootCause::Single { fault_id: first.id }, isolated, 0));
    }

    let ids: Vec<u64> = applied.iter().map(|f| f.id).collect();
    let mut subset = 0u64;
    for size in [2usize, 3] {
        if ids.len() < size {
            break;
        }
        for combo in combinations(&ids, size) {
            subset += 1;
            if subset_fails(spec, policy, seed, plan, &combo, goldrun)? {
                return Ok((RootCause::Interacting { fault_ids: combo }, isolated, subset));
            }
        }
    }
    // The full applied set reproduces the failure by determinism.
    Ok((RootCause::Interacting { fault_ids: ids }, isolated, subset))
}

/// k-combinations in ascending id order.
fn combinations(ids: &[u64], k: usize) -> Vec<Vec<u64>> {
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > sorted.len() {
        return out;
    }
    loop {
        out.push(idx.iter().map(|&i| sorted[i]).collect());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + sorted.len() - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Latency of the causal fault (last-applied for an interacting set),
/// classified High above the configured threshold.
pub fn measure_latency(
    spec: &ExperimentSpec,
    cause: &RootCause,
    applied: &[AppliedFaultRecord],
    first_divergence_tick: u64,
) -> Vec<FaultLatency> {
    let applied_at = |id: u64| applied.iter().find(|f| f.id == id).map(|f| f.applied_at);
    let (ids, t_cause) = match cause {
        RootCause::Single { fault_id } => (vec![*fault_id], applied_at(*fault_id)),
        RootCause::Interacting { fault_ids } => {
            let last = fault_ids.iter().filter_map(|&id| applied_at(id)).max();
            (fault_ids.clone(), last)
        }
    };
    let Some(t_cause) = t_cause else {
        return Vec::new();
    };
    debug_assert!(t_cause <= first_divergence_tick, "causal fault applied after divergence");
    let latency = first_divergence_tick.saturating_sub(t_cause);
    let class = if latency > spec.latency_threshold_ticks() {
        LatencyClass::High
    } else {
        LatencyClass::Low
    };
    vec![FaultLatency { fault_ids: ids, latency, class }]
}

/// Replay from a stored record; the recomputed record must match field for
/// field.
pub fn replay_record(stored: &ExperimentRecord) -> Result<ExperimentRecord, HarnessError> {
    if stored.schema_version != RECORD_SCHEMA_VERSION {
        return Err(HarnessError::Config(format!(
            "record schema {} does not match current {}",
            stored.schema_version, RECORD_SCHEMA_VERSION
        )));
    }
    let expect = config_fingerprint(&stored.spec, &stored.policy, stored.seed);
    if expect != stored.fingerprint {
        return Err(HarnessError::Config(format!(
            "fingerprint mismatch: stored {} vs recomputed {}",
            stored.fingerprint, expect
        )));
    }
    let goldrun = run_goldrun(&stored.spec)?;
    let attribute = stored.root_cause.is_some() || stored.outcome == Outcome::NoFailure;
    let out =
        run_experiment_opts(&stored.spec, &stored.policy, stored.seed, &goldrun, attribute, false)?;
    Ok(out.record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDiff {
    pub mean: f64,
    pub ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub runs: u64,
    pub failures: u64,
    pub failure_fraction: f64,
    pub failure_ci: (f64, f64),
    pub mean_latent_residence: f64,
    pub median_latent_residence: f64,
    pub total_energy: u64,
    pub total_port_busy: u64,
    /// Per-seed failure-indicator difference against the first policy.
    pub failure_diff_vs_baseline: Option<PairedDiff>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub baseline: String,
    pub rows: Vec<PolicySummary>,
}

pub fn summarize_policy(records: &[ExperimentRecord]) -> PolicySummary {
    let runs = records.len() as u64;
    let failures =
        records.iter().filter(|r| matches!(r.outcome, Outcome::Failure { .. })).count() as u64;
    let residences: Vec<f64> = records
        .iter()
        .flat_map(|r| r.scrub.latent_residences.iter().map(|&x| x as f64))
        .collect();
    PolicySummary {
        policy: records.first().map(|r| r.policy_name.clone()).unwrap_or_default(),
        runs,
        failures,
        failure_fraction: if runs == 0 { 0.0 } else { failures as f64 / runs as f64 },
        failure_ci: stats::wilson_interval(failures, runs),
        mean_latent_residence: stats::mean(&residences),
        median_latent_residence: stats::median(&residences),
        total_energy: records.iter().map(|r| r.scrub.energy_total).sum(),
        total_port_busy: records.iter().map(|r| r.scrub.port_busy_total).sum(),
        failure_diff_vs_baseline: None,
    }
}

/// Build the comparison table from per-policy record lists sharing the same
/// seed order (paired design). The first policy is the baseline.
pub fn build_comparison(per_policy: &[Vec<ExperimentRecord>]) -> Result<ComparisonTable, HarnessError> {
    let Some(baseline) = per_policy.first() else {
        return Err(HarnessError::Config("no policies to compare".into()));
    };
    for records in per_policy {
        if records.len() != baseline.len() {
            return Err(HarnessError::Config("mismatched campaign sizes across policies".into()));
        }
        for (a, b) in records.iter().zip(baseline.iter()) {
            if a.campaign_fingerprint != b.campaign_fingerprint || a.seed != b.seed {
                return Err(HarnessError::Config(
                    "mismatched campaign parameters across policies".into(),
                ));
            }
        }
    }
    let failed = |r: &ExperimentRecord| matches!(r.outcome, Outcome::Failure { .. }) as i64 as f64;
    let mut rows = Vec::new();
    for (i, records) in per_policy.iter().enumerate() {
        let mut summary = summarize_policy(records);
        if i > 0 {
            let diffs: Vec<f64> = records
                .iter()
                .zip(baseline.iter())
                .map(|(r, b)| failed(r) - failed(b))
                .collect();
            summary.failure_diff_vs_baseline =
                Some(PairedDiff { mean: stats::mean(&diffs), ci: stats::bootstrap_mean_ci(&diffs) });
        }
        rows.push(summary);
    }
    Ok(ComparisonTable {
        baseline: baseline.first().map(|r| r.policy_name.clone()).unwrap_or_default(),
        rows,
    })
}

/// Run every (policy, seed) pair of a paired campaign in parallel and build
/// the comparison table.
pub fn compare_policies(
    spec: &ExperimentSpec,
    policies: &[ScrubPolicyConfig],
    seeds: &[u64],
    attribute: bool,
) -> Result<(Vec<Vec<ExperimentRecord>>, ComparisonTable), HarnessError> {
    spec.validate()?;
    let goldrun = run_goldrun(spec)?;
    let mut per_policy = Vec::with_capacity(policies.len());
    for policy in policies {
        let records: Result<Vec<ExperimentRecord>, HarnessError> = seeds
            .par_iter()
            .map(|&seed| {
                run_experiment_opts(spec, policy, seed, &goldrun, attribute, false)
                    .map(|out| out.record)
            })
            .collect();
        per_policy.push(records?);
    }
    let table = build_comparison(&per_policy)?;
    Ok((per_policy, table))
}
