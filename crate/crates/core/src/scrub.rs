//! Scrub-strategy family behind one policy interface: blind full/partial
//! rewrite, readback-and-compare, SEC-DED guided repair, budgeted degraded-mode
//! recovery, and the failure-prediction scheduler. Every action is charged
//! against a configuration-port time and energy model.

use crate::config_memory::{BitAddress, ConfigMemory, Dims};
use crate::ecc::Decode;
use crate::predictor::{io_monitor, FpScrubConfig, IoCheck, PredictorState};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScrubError {
    #[error("scrub period/window must be >= 1 tick")]
    ZeroPeriod,
    #[error("frame {0} in policy subset is out of device bounds")]
    FrameOutOfBounds(usize),
    #[error("budgeted policy needs k_max >= 1")]
    ZeroBudget,
}

/// Per-frame port timing and energy costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortCostModel {
    pub t_frame_read: u64,
    pub t_frame_write: u64,
    pub energy_read: u64,
    pub energy_write: u64,
}

impl Default for PortCostModel {
    fn default() -> Self {
        PortCostModel { t_frame_read: 1, t_frame_write: 1, energy_read: 1, energy_write: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScrubActionKind {
    FullRestore,
    FrameRestore { frames: Vec<usize> },
    FrameRepair { frame: usize, position: usize },
    ReadOnlyScan { frame_lo: usize, frame_hi: usize },
}

impl ScrubActionKind {
    pub fn label(&self) -> &'static str {
        match self {
            ScrubActionKind::FullRestore => "full_restore",
            ScrubActionKind::FrameRestore { .. } => "frame_restore",
            ScrubActionKind::FrameRepair { .. } => "frame_repair",
            ScrubActionKind::ReadOnlyScan { .. } => "read_only_scan",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScrubAction {
    pub kind: ScrubActionKind,
    pub issued_at: u64,
    pub port_busy: u64,
    pub energy: u64,
    pub frames_touched: usize,
}

/// Which strategy to run and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum ScrubPolicyConfig {
    NoScrub,
    PeriodicBlindFull { period: u64 },
    PeriodicBlindPartial { period: u64, frames: Vec<usize> },
    ReadbackCompare { period: u64 },
    SecDedRepair { scan_period: u64 },
    Budgeted { window: u64, k_max: usize },
    FpScrub { config: FpScrubConfig, frames: Vec<usize> },
}

impl ScrubPolicyConfig {
    pub fn validate(&self, dims: Dims) -> Result<(), ScrubError> {
        let check_frames = |frames: &[usize]| {
            frames
                .iter()
                .find(|&&f| f >= dims.frame_count)
                .map_or(Ok(()), |&f| Err(ScrubError::FrameOutOfBounds(f)))
        };
        match self {
            ScrubPolicyConfig::NoScrub => Ok(()),
            ScrubPolicyConfig::PeriodicBlindFull { period }
            | ScrubPolicyConfig::ReadbackCompare { period }
            | ScrubPolicyConfig::SecDedRepair { scan_period: period } => {
                if *period == 0 {
                    Err(ScrubError::ZeroPeriod)
                } else {
                    Ok(())
                }
            }
            ScrubPolicyConfig::PeriodicBlindPartial { period, frames } => {
                if *period == 0 {
                    return Err(ScrubError::ZeroPeriod);
                }
                check_frames(frames)
            }
            ScrubPolicyConfig::Budgeted { window, k_max } => {
                if *window == 0 {
                    Err(ScrubError::ZeroPeriod)
                } else if *k_max == 0 {
                    Err(ScrubError::ZeroBudget)
                } else {
                    Ok(())
                }
            }
            ScrubPolicyConfig::FpScrub { config, frames } => {
                if config.p_min == 0 || config.p_min > config.p_max {
                    return Err(ScrubError::ZeroPeriod);
                }
                check_frames(frames)
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            ScrubPolicyConfig::NoScrub => "no_scrub".into(),
            ScrubPolicyConfig::PeriodicBlindFull { period } => format!("blind_full_{period}"),
            ScrubPolicyConfig::PeriodicBlindPartial { period, .. } => {
                format!("blind_partial_{period}")
            }
            ScrubPolicyConfig::ReadbackCompare { period } => format!("readback_compare_{period}"),
            ScrubPolicyConfig::SecDedRepair { scan_period } => format!("secded_repair_{scan_period}"),
            ScrubPolicyConfig::Budgeted { window, k_max } => format!("budgeted_{window}_{k_max}"),
            ScrubPolicyConfig::FpScrub { .. } => "fpscrub".into(),
        }
    }
}

/// One row of the fpScrub decision log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub t: u64,
    pub flux_ewma: f64,
    pub temp_ewma: f64,
    pub volt_dev: f64,
    pub score: f64,
    pub period: u64,
    pub trigger_reason: &'static str,
}

/// What one policy step did: the logged actions plus the exact bits restored,
/// for latency accounting by the harness.
#[derive(Debug, Clone, Default)]
pub struct StepOutcome {
    pub actions: Vec<ScrubAction>,
    pub restored: Vec<BitAddress>,
}

/// Mutable policy state bound to one experiment's memory and clock.
#[derive(Debug, Clone)]
pub struct PolicyRuntime {
    config: ScrubPolicyConfig,
    cost: PortCostModel,
    next_due: u64,
    port_free_at: u64,
    budget_queue: VecDeque<usize>,
    queued: Vec<bool>,
    pub predictor: PredictorState,
    violation_pending: bool,
    pub log: Vec<ScrubAction>,
    pub decision_log: Vec<DecisionRow>,
    pub uncorrectable_events: u64,
}

impl PolicyRuntime {
    pub fn new(config: ScrubPolicyConfig, cost: PortCostModel, dims: Dims) -> Result<PolicyRuntime, ScrubError> {
        config.validate(dims)?;
        Ok(PolicyRuntime {
            config,
            cost,
            next_due: 0,
            port_free_at: 0,
            budget_queue: VecDeque::new(),
            queued: vec![false; dims.frame_count],
            predictor: PredictorState::default(),
            violation_pending: false,
            log: Vec::new(),
            decision_log: Vec::new(),
            uncorrectable_events: 0,
        })
    }

    pub fn config(&self) -> &ScrubPolicyConfig {
        &self.config
    }

    /// Feed one tick's DUT interface words to the I/O monitor.
    pub fn observe_io(&mut self, input: u32, output: u32, now: u64) {
        if let ScrubPolicyConfig::FpScrub { config, .. } = &self.config {
            if let IoCheck::Violation { .. } = io_monitor(config, &[(input, output)]) {
                self.violation_pending = true;
                self.predictor.note_violation(config, now);
            }
        }
    }

    /// Feed one sensor sample to the hazard predictor.
    pub fn observe_sample(&mut self, sample: &crate::environment::SensorSample) {
        if let ScrubPolicyConfig::FpScrub { config, .. } = &self.config {
            crate::predictor::update_hazard(config, &mut self.predictor, sample);
        }
    }

    fn emit(&mut self, cursor: &mut u64, kind: ScrubActionKind, out: &mut StepOutcome) {
        let (port_busy, energy, frames_touched) = match &kind {
            ScrubActionKind::FullRestore => {
                let n = self.queued.len() as u64;
                (n * self.cost.t_frame_write, n * self.cost.energy_write, self.queued.len())
            }
            ScrubActionKind::FrameRestore { frames } => {
                let n = frames.len() as u64;
                (n * self.cost.t_frame_write, n * self.cost.energy_write, frames.len())
            }
            ScrubActionKind::FrameRepair { .. } => (
                self.cost.t_frame_read + self.cost.t_frame_write,
                self.cost.energy_read + self.cost.energy_write,
                1,
            ),
            ScrubActionKind::ReadOnlyScan { frame_lo, frame_hi } => {
                let n = (frame_hi - frame_lo) as u64;
                (n * self.cost.t_frame_read, n * self.cost.energy_read, frame_hi - frame_lo)
            }
        };
        let action = ScrubAction { kind, issued_at: *cursor, port_busy, energy, frames_touched };
        *cursor += port_busy;
        self.log.push(action.clone());
        out.actions.push(action);
    }

    fn log_decision(&mut self, now: u64, period: u64, reason: &'static str) {
        let score = self.predictor.last_score;
        self.decision_log.push(DecisionRow {
            t: now,
            flux_ewma: self.predictor.flux_ewma,
            temp_ewma: self.predictor.temp_ewma,
            volt_dev: self.predictor.volt_dev_ewma,
            score: score.map(|s| s.value).unwrap_or(0.0),
            period,
            trigger_reason: reason,
        });
    }

    /// Run the policy at `now` if the port is idle. `idle_window` is the
    /// number of port ticks available before the controller needs the fabric.
    pub fn step(&mut self, mem: &mut ConfigMemory, now: u64, idle_window: u64) -> StepOutcome {
        // The budgeted queue observes dirt arrival order even while waiting.
        if matches!(self.config, ScrubPolicyConfig::Budgeted { .. }) {
            for f in mem.dirty_frames() {
                if !self.queued[f] {
                    self.queued[f] = true;
                    self.budget_queue.push_back(f);
                }
            }
        }
        let mut out = StepOutcome::default();
        if now < self.port_free_at {
            return out;
        }
        let mut cursor = now;
        // Config is cloned so memory mutation can borrow self mutably below.
        match self.config.clone() {
            ScrubPolicyConfig::NoScrub => {}
            ScrubPolicyConfig::PeriodicBlindFull { period } => {
                if now >= self.next_due {
                    out.restored = mem.restore_all();
                    self.emit(&mut cursor, ScrubActionKind::FullRestore, &mut out);
                    self.next_due = now + period;
                }
            }
            ScrubPolicyConfig::PeriodicBlindPartial { period, frames } => {
                if now >= self.next_due {
                    for &f in &frames {
                        out.restored.extend(mem.restore_frame(f).expect("validated frame"));
                    }
                    self.emit(&mut cursor, ScrubActionKind::FrameRestore { frames }, &mut out);
                    self.next_due = now + period;
                }
            }
            ScrubPolicyConfig::ReadbackCompare { period } => {
                if now >= self.next_due {
                    let frame_count = mem.dims().frame_count;
                    self.emit(
                        &mut cursor,
                        ScrubActionKind::ReadOnlyScan { frame_lo: 0, frame_hi: frame_count },
                        &mut out,
                    );
                    let dirty = mem.dirty_frames();
                    if !dirty.is_empty() {
                        for &f in &dirty {
                            out.restored.extend(mem.restore_frame(f).expect("dirty frame"));
                        }
                        self.emit(&mut cursor, ScrubActionKind::FrameRestore { frames: dirty }, &mut out);
                    }
                    self.next_due = now + period;
                }
            }
            ScrubPolicyConfig::SecDedRepair { scan_period } => {
                if now >= self.next_due {
                    let frame_count = mem.dims().frame_count;
                    self.emit(
                        &mut cursor,
                        ScrubActionKind::ReadOnlyScan { frame_lo: 0, frame_hi: frame_count },
                        &mut out,
                    );
                    let layout = mem.ecc_layout();
                    for f in mem.dirty_frames() {
                        let errors = mem.frame_diff_positions(f);
                        match layout.decode_set_positions(&errors) {
                            Decode::Clean => {}
                            Decode::Corrected(pos) => {
                                let addr = BitAddress::new(f, pos);
                                mem.restore_bit(addr).expect("in bounds");
                                out.restored.push(addr);
                                self.emit(
                                    &mut cursor,
                                    ScrubActionKind::FrameRepair { frame: f, position: pos },
                                    &mut out,
                                );
                            }
                            Decode::DetectedUncorrectable => {
                                self.uncorrectable_events += 1;
                                out.restored.extend(mem.restore_frame(f).expect("dirty frame"));
                                self.emit(
                                    &mut cursor,
                                    ScrubActionKind::FrameRestore { frames: vec![f] },
                                    &mut out,
                                );
                            }
                        }
                    }
                    self.next_due = now + scan_period;
                }
            }
            ScrubPolicyConfig::Budgeted { window, k_max } => {
                if now >= self.next_due {
                    let budget = k_max.min((idle_window / self.cost.t_frame_write.max(1)) as usize);
                    let mut written = Vec::new();
                    while written.len() < budget {
                        let Some(f) = self.budget_queue.pop_front() else { break };
                        self.queued[f] = false;
                        if mem.frame_is_dirty(f) {
                            out.restored.extend(mem.restore_frame(f).expect("queued frame"));
                            written.push(f);
                        }
                    }
                    if !written.is_empty() {
                        self.emit(&mut cursor, ScrubActionKind::FrameRestore { frames: written }, &mut out);
                    }
                    self.next_due = now + window;
                }
            }
            ScrubPolicyConfig::FpScrub { config, frames } => {
                if self.violation_pending {
                    self.violation_pending = false;
                    let (lo, hi) = frame_span(&frames);
                    self.emit(
                        &mut cursor,
                        ScrubActionKind::ReadOnlyScan { frame_lo: lo, frame_hi: hi },
                        &mut out,
                    );
                    let dirty: Vec<usize> =
                        frames.iter().copied().filter(|&f| mem.frame_is_dirty(f)).collect();
                    if !dirty.is_empty() {
                        for &f in &dirty {
                            out.restored.extend(mem.restore_frame(f).expect("dirty frame"));
                        }
                        self.emit(&mut cursor, ScrubActionKind::FrameRestore { frames: dirty }, &mut out);
                    }
                    let period = self.predictor.current_period(&config, now);
                    self.log_decision(now, period, "io_violation");
                } else if now >= self.next_due {
                    for &f in &frames {
                        out.restored.extend(mem.restore_frame(f).expect("validated frame"));
                    }
                    self.emit(&mut cursor, ScrubActionKind::FrameRestore { frames }, &mut out);
                    let period = self.predictor.current_period(&config, now);
                    self.next_due = now + period;
                    self.log_decision(now, period, "schedule");
                }
            }
        }
        self.port_free_at = cursor;
        out
    }

    pub fn total_energy(&self) -> u64 {
        self.log.iter().map(|a| a.energy).sum()
    }

    pub fn total_port_busy(&self) -> u64 {
        self.log.iter().map(|a| a.port_busy).sum()
    }
}

fn frame_span(frames: &[usize]) -> (usize, usize) {
    let lo = frames.iter().copied().min().unwrap_or(0);
    let hi = frames.iter().copied().max().map(|m| m + 1).unwrap_or(0);
    (lo, hi)
}

/// Closed-form degraded-mode progress: dirty frames remaining after `windows`
/// recovery windows with `k_per_window` rewrites each.
pub fn budgeted_progress(dirty_frames: u64, k_per_window: u64, windows: u64) -> u64 {
    dirty_frames.saturating_sub(k_per_window.saturating_mul(windows))
}

/// Scrub log CSV: issued_at,kind,frames_touched,port_busy,energy.
pub fn scrub_log_csv(log: &[ScrubAction]) -> String {
    let mut out = String::from("issued_at,kind,frames_touched,port_busy,energy\n");
    for a in log {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            a.issued_at,
            a.kind.label(),
            a.frames_touched,
            a.port_busy,
            a.energy
        ));
    }
    out
}

/// Decision log CSV: t,flux_ewma,temp_ewma,volt_dev,score,period,trigger_reason.
pub fn decision_log_csv(log: &[DecisionRow]) -> String {
    let mut out = String::from("t,flux_ewma,temp_ewma,volt_dev,score,period,trigger_reason\n");
    for r in log {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.t, r.flux_ewma, r.temp_ewma, r.volt_dev, r.score, r.period, r.trigger_reason
        ));
    }
    out
}
