//! Upset generation and scheduling: single-bit, double-adjacent, and circular
//! multi-bit events, drawn deterministically from a seed and applied to the
//! configuration memory at their trigger ticks.

use crate::config_memory::{BitAddress, ConfigMemory, Dims, MemError};
use crate::environment::EnvironmentTrace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FaultError {
    #[error("region of interest is empty or out of device bounds")]
    BadRoi,
    #[error("kind weights are all zero")]
    ZeroWeights,
    #[error("duration must be >= 1 when events are requested")]
    ZeroDuration,
    #[error("mbe_radius_max must be >= 1 when MBE weight is nonzero")]
    ZeroRadius,
    #[error("double-adjacent events need a bit range of at least 2")]
    RoiTooNarrow,
    #[error("negative flux sample in arrival trace")]
    NegativeFlux,
    #[error(transparent)]
    Mem(#[from] MemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    Sbe,
    DoubleAdjacent,
    Mbe,
}

/// The frame/bit window a campaign is allowed to corrupt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionOfInterest {
    pub frame_lo: usize,
    pub frame_hi: usize,
    pub bit_lo: usize,
    pub bit_hi: usize,
}

impl RegionOfInterest {
    pub fn full(dims: Dims) -> RegionOfInterest {
        RegionOfInterest { frame_lo: 0, frame_hi: dims.frame_count, bit_lo: 0, bit_hi: dims.frame_size }
    }

    pub fn validate(&self, dims: Dims) -> Result<(), FaultError> {
        if self.frame_lo >= self.frame_hi
            || self.bit_lo >= self.bit_hi
            || self.frame_hi > dims.frame_count
            || self.bit_hi > dims.frame_size
        {
            return Err(FaultError::BadRoi);
        }
        Ok(())
    }

    pub fn contains(&self, a: BitAddress) -> bool {
        (self.frame_lo..self.frame_hi).contains(&a.frame)
            && (self.bit_lo..self.bit_hi).contains(&a.bit)
    }

    pub fn bit_count(&self) -> usize {
        (self.frame_hi - self.frame_lo) * (self.bit_hi - self.bit_lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindWeights {
    pub sbe: u32,
    pub double_adjacent: u32,
    pub mbe: u32,
}

impl Default for KindWeights {
    /// The observed single-to-multi upset ratio, roughly 20:1.
    fn default() -> Self {
        KindWeights { sbe: 20, double_adjacent: 0, mbe: 1 }
    }
}

impl KindWeights {
    pub fn sbe_only() -> Self {
        KindWeights { sbe: 1, double_adjacent: 0, mbe: 0 }
    }

    fn total(&self) -> u64 {
        self.sbe as u64 + self.double_adjacent as u64 + self.mbe as u64
    }

    fn draw(&self, rng: &mut ChaCha12Rng) -> FaultKind {
        let x = rng.gen_range(0..self.total());
        if x < self.sbe as u64 {
            FaultKind::Sbe
        } else if x < self.sbe as u64 + self.double_adjacent as u64 {
            FaultKind::DoubleAdjacent
        } else {
            FaultKind::Mbe
        }
    }
}

/// One fully specified upset. `cells` is derived from (kind, center, radius)
/// and the region of interest, and is not part of the wire format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub id: u64,
    pub trigger_time: u64,
    pub kind: FaultKind,
    pub center: BitAddress,
    pub radius: u32,
    #[serde(skip)]
    pub cells: Vec<BitAddress>,
}

impl FaultEvent {
    pub fn resolve_cells(&mut self, roi: &RegionOfInterest) {
        self.cells = match self.kind {
            FaultKind::Sbe => vec![self.center],
            FaultKind::DoubleAdjacent => {
                let neighbor = if self.center.bit + 1 < roi.bit_hi {
                    BitAddress::new(self.center.frame, self.center.bit + 1)
                } else {
                    BitAddress::new(self.center.frame, self.center.bit - 1)
                };
                vec![self.center, neighbor]
            }
            FaultKind::Mbe => resolve_mbe_cells(self.center, self.radius, roi),
        };
    }
}

/// A deterministic, pre-resolved injection schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultPlan {
    pub seed: u64,
    pub weights: KindWeights,
    pub events: Vec<FaultEvent>,
}

impl FaultPlan {
    pub fn empty(seed: u64) -> FaultPlan {
        FaultPlan { seed, weights: KindWeights::default(), events: Vec::new() }
    }

    /// Campaign replay format: a JSON array of events.
    pub fn to_json_events(&self) -> String {
        serde_json::to_string_pretty(&self.events).expect("plan serializes")
    }

    pub fn from_json_events(
        text: &str,
        seed: u64,
        weights: KindWeights,
        roi: &RegionOfInterest,
    ) -> Result<FaultPlan, serde_json::Error> {
        let mut events: Vec<FaultEvent> = serde_json::from_str(text)?;
        for e in &mut events {
            e.resolve_cells(roi);
        }
        Ok(FaultPlan { seed, weights, events })
    }

    /// Keep only the listed event ids; used by isolation replays.
    pub fn restricted_to(&self, ids: &[u64]) -> FaultPlan {
        FaultPlan {
            seed: self.seed,
            weights: self.weights,
            events: self.events.iter().filter(|e| ids.contains(&e.id)).cloned().collect(),
        }
    }
}

/// All grid cells within Euclidean distance `radius` of `center`, clipped to
/// the region of interest; the circle may span multiple frames.
pub fn resolve_mbe_cells(
    center: BitAddress,
    radius: u32,
    roi: &RegionOfInterest,
) -> Vec<BitAddress> {
    let r = radius as i64;
    let mut cells = Vec::new();
    for df in -r..=r {
        let f = center.frame as i64 + df;
        if f < roi.frame_lo as i64 || f >= roi.frame_hi as i64 {
            continue;
        }
        for db in -r..=r {
            let b = center.bit as i64 + db;
            if b < roi.bit_lo as i64 || b >= roi.bit_hi as i64 {
                continue;
            }
            if df * df + db * db <= r * r {
                cells.push(BitAddress::new(f as usize, b as usize));
            }
        }
    }
    cells
}

fn draw_event(
    rng: &mut ChaCha12Rng,
    trigger_time: u64,
    roi: &RegionOfInterest,
    weights: &KindWeights,
    mbe_radius_max: u32,
) -> FaultEvent {
    let kind = weights.draw(rng);
    let center = BitAddress::new(
        rng.gen_range(roi.frame_lo..roi.frame_hi),
        rng.gen_range(roi.bit_lo..roi.bit_hi),
    );
    let radius = match kind {
        FaultKind::Mbe => rng.gen_range(1..=mbe_radius_max),
        _ => 0,
    };
    let mut event = FaultEvent { id: 0, trigger_time, kind, center, radius, cells: Vec::new() };
    event.resolve_cells(roi);
    event
}

fn validate_params(
    count_nonzero: bool,
    roi: &RegionOfInterest,
    duration: u64,
    weights: &KindWeights,
    mbe_radius_max: u32,
) -> Result<(), FaultError> {
    if roi.frame_lo >= roi.frame_hi || roi.bit_lo >= roi.bit_hi {
        return Err(FaultError::BadRoi);
    }
    if weights.total() == 0 {
        return Err(FaultError::ZeroWeights);
    }
    if count_nonzero && duration == 0 {
        return Err(FaultError::ZeroDuration);
    }
    if weights.mbe > 0 && mbe_radius_max == 0 {
        return Err(FaultError::ZeroRadius);
    }
    if weights.double_adjacent > 0 && roi.bit_hi - roi.bit_lo < 2 {
        return Err(FaultError::RoiTooNarrow);
    }
    Ok(())
}

fn finalize_plan(mut events: Vec<FaultEvent>, seed: u64, weights: KindWeights) -> FaultPlan {
    events.sort_by_key(|e| e.trigger_time);
    for (i, e) in events.iter_mut().enumerate() {
        e.id = i as u64;
    }
    FaultPlan { seed, weights, events }
}

/// Fixed-count plan: `count` events with triggers uniform over [0, duration).
pub fn generate_plan(
    seed: u64,
    count: usize,
    roi: &RegionOfInterest,
    duration: u64,
    weights: KindWeights,
    mbe_radius_max: u32,
) -> Result<FaultPlan, FaultError> {
    validate_params(count > 0, roi, duration, &weights, mbe_radius_max)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let events = (0..count)
        .map(|_| {
            let trigger = rng.gen_range(0..duration.max(1));
            draw_event(&mut rng, trigger, roi, &weights, mbe_radius_max)
        })
        .collect();
    Ok(finalize_plan(events, seed, weights))
}

/// Inhomogeneous Poisson arrivals via thinning: the instantaneous rate is
/// `base_rate * flux(t) / FLUX_REF`.
pub fn poisson_arrival_plan(
    seed: u64,
    base_rate: f64,
    flux_trace: &EnvironmentTrace,
    roi: &RegionOfInterest,
    duration: u64,
    weights: KindWeights,
    mbe_radius_max: u32,
) -> Result<FaultPlan, FaultError> {
    validate_params(false, roi, duration, &weights, mbe_radius_max)?;
    if flux_trace.samples.iter().any(|s| s.flux < 0.0) {
        return Err(FaultError::NegativeFlux);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let rate_max = base_rate * flux_trace.max_flux() / crate::environment::FLUX_REF;
    let mut events = Vec::new();
    if rate_max > 0.0 {
        let mut t = 0.0f64;
        loop {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            t += -u.ln() / rate_max;
            if t >= duration as f64 {
                break;
            }
            let tick = t as u64;
            let accept_p = base_rate * flux_trace.flux_at(tick)
                / (crate::environment::FLUX_REF * rate_max);
            if rng.gen_range(0.0..1.0) < accept_p {
                events.push(draw_event(&mut rng, tick, roi, &weights, mbe_radius_max));
            }
        }
    }
    Ok(finalize_plan(events, seed, weights))
}

/// Tracks which plan events have been applied to a memory.
#[derive(Debug, Clone, Default)]
pub struct InjectionRuntime {
    next: usize,
}

/// An event together with the tick at which it actually landed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppliedFault {
    pub event_id: u64,
    pub applied_at: u64,
}

impl InjectionRuntime {
    pub fn new() -> InjectionRuntime {
        InjectionRuntime { next: 0 }
    }

    /// Flip the cells of every not-yet-applied event with trigger_time <= now.
    /// Each event lands atomically within this call.
    pub fn inject_due<'p>(
        &mut self,
        plan: &'p FaultPlan,
        mem: &mut ConfigMemory,
        now: u64,
    ) -> Result<Vec<(&'p FaultEvent, AppliedFault)>, MemError> {
        let mut applied = Vec::new();
        while self.next < plan.events.len() && plan.events[self.next].trigger_time <= now {
            let event = &plan.events[self.next];
            mem.flip_bits(&event.cells)?;
            applied.push((event, AppliedFault { event_id: event.id, applied_at: now }));
            self.next += 1;
        }
        Ok(applied)
    }

    pub fn pending(&self, plan: &FaultPlan) -> usize {
        plan.events.len() - self.next
    }
}
