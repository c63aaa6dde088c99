//! Per-bit sensitivity map: binds configuration-memory cells in the
//! reconfigurable partition to behavioral corruption semantics of the DUT.
//!
//! Classification uses one independent hash stream per cell, so maps built
//! from the same seed with increasing sensitive fractions are nested: every
//! bit sensitive at fraction f1 stays sensitive at any f2 > f1.

use crate::config_memory::BitAddress;
use crate::dut::Corruptions;
use crate::fault::RegionOfInterest;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("class fractions sum to {0}, expected 1.0")]
    BadFractions(f64),
    #[error("element weights are all zero")]
    ZeroElementWeights,
}

/// What a flipped sensitive bit does to the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitiveElement {
    KpBit(u8),
    KiBit(u8),
    KdBit(u8),
    AccStuck,
    ErrPathStuckLow,
    OutForce(u8),
    RoutingSwap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellClass {
    Unused,
    NonSensitive,
    Sensitive(SensitiveElement),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapFractions {
    pub unused: f64,
    pub non_sensitive: f64,
    pub sensitive: f64,
}

impl Default for MapFractions {
    fn default() -> Self {
        MapFractions { unused: 0.4, non_sensitive: 0.5, sensitive: 0.1 }
    }
}

impl MapFractions {
    pub fn all_sensitive() -> Self {
        MapFractions { unused: 0.0, non_sensitive: 0.0, sensitive: 1.0 }
    }

    pub fn with_sensitive(sensitive: f64) -> Self {
        let rest = 1.0 - sensitive;
        MapFractions { unused: rest * 4.0 / 9.0, non_sensitive: rest * 5.0 / 9.0, sensitive }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementWeights {
    pub gain_bit: u32,
    pub acc_stuck: u32,
    pub err_path: u32,
    pub out_force: u32,
    pub routing_swap: u32,
}

impl Default for ElementWeights {
    fn default() -> Self {
        ElementWeights { gain_bit: 60, acc_stuck: 10, err_path: 10, out_force: 15, routing_swap: 5 }
    }
}

impl ElementWeights {
    fn total(&self) -> u64 {
        self.gain_bit as u64
            + self.acc_stuck as u64
            + self.err_path as u64
            + self.out_force as u64
            + self.routing_swap as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityMap {
    pub seed: u64,
    pub roi: RegionOfInterest,
    pub fractions: MapFractions,
    cells: Vec<CellClass>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapStats {
    pub total: usize,
    pub unused: usize,
    pub non_sensitive: usize,
    pub sensitive: usize,
    pub sensitive_fraction: f64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent unit-interval draw per (seed, cell, stream).
fn unit(seed: u64, cell: u64, stream: u64) -> f64 {
    let h = splitmix64(seed ^ splitmix64(cell.wrapping_add(1) ^ stream.wrapping_mul(0xA5A5_A5A5)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn draw_u64(seed: u64, cell: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(cell.wrapping_add(1) ^ stream.wrapping_mul(0x5A5A_5A5B)))
}

pub fn build_default_map(
    seed: u64,
    roi: RegionOfInterest,
    fractions: MapFractions,
    weights: ElementWeights,
) -> Result<SensitivityMap, MapError> {
    let sum = fractions.unused + fractions.non_sensitive + fractions.sensitive;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(MapError::BadFractions(sum));
    }
    if weights.total() == 0 {
        return Err(MapError::ZeroElementWeights);
    }
    let bit_span = roi.bit_hi - roi.bit_lo;
    let n = (roi.frame_hi - roi.frame_lo) * bit_span;
    let mut cells = Vec::with_capacity(n);
    for idx in 0..n as u64 {
        let u1 = unit(seed, idx, 1);
        let class = if u1 < fractions.sensitive {
            CellClass::Sensitive(draw_element(seed, idx, weights))
        } else {
            let rest = fractions.unused + fractions.non_sensitive;
            let unused_share = if rest > 0.0 { fractions.unused / rest } else { 0.0 };
            if unit(seed, idx, 2) < unused_share {
                CellClass::Unused
            } else {
                CellClass::NonSensitive
            }
        };
        cells.push(class);
    }
    Ok(SensitivityMap { seed, roi, fractions, cells })
}

fn draw_element(seed: u64, idx: u64, w: ElementWeights) -> SensitiveElement {
    let x = draw_u64(seed, idx, 3) % w.total();
    let bit = (draw_u64(seed, idx, 4) % 32) as u8;
    let mut hi = w.gain_bit as u64;
    if x < hi {
        return match draw_u64(seed, idx, 5) % 3 {
            0 => SensitiveElement::KpBit(bit),
            1 => SensitiveElement::KiBit(bit),
            _ => SensitiveElement::KdBit(bit),
        };
    }
    hi += w.acc_stuck as u64;
    if x < hi {
        return SensitiveElement::AccStuck;
    }
    hi += w.err_path as u64;
    if x < hi {
        return SensitiveElement::ErrPathStuckLow;
    }
    hi += w.out_force as u64;
    if x < hi {
        return SensitiveElement::OutForce(bit);
    }
    SensitiveElement::RoutingSwap
}

impl SensitivityMap {
    /// Map with every cell given an explicit class; for constructed scenarios.
    pub fn explicit(roi: RegionOfInterest, cells: Vec<CellClass>) -> SensitivityMap {
        assert_eq!(cells.len(), roi.bit_count());
        SensitivityMap { seed: 0, roi, fractions: MapFractions::default(), cells }
    }

    pub fn classify(&self, addr: BitAddress) -> CellClass {
        if !self.roi.contains(addr) {
            return CellClass::Unused;
        }
        let bit_span = self.roi.bit_hi - self.roi.bit_lo;
        let idx = (addr.frame - self.roi.frame_lo) * bit_span + (addr.bit - self.roi.bit_lo);
        self.cells[idx]
    }

    pub fn is_sensitive(&self, addr: BitAddress) -> bool {
        matches!(self.classify(addr), CellClass::Sensitive(_))
    }

    pub fn stats(&self) -> MapStats {
        let mut s = MapStats {
            total: self.cells.len(),
            unused: 0,
            non_sensitive: 0,
            sensitive: 0,
            sensitive_fraction: 0.0,
        };
        for c in &self.cells {
            match c {
                CellClass::Unused => s.unused += 1,
                CellClass::NonSensitive => s.non_sensitive += 1,
                CellClass::Sensitive(_) => s.sensitive += 1,
            }
        }
        s.sensitive_fraction = s.sensitive as f64 / s.total.max(1) as f64;
        s
    }

    /// Translate the current diff set into active corruptions. Distinct cells
    /// bound to the same element apply it once: effects compose, never cancel.
    pub fn apply_corruptions(&self, diff: &[BitAddress]) -> Corruptions {
        let mut elements = BTreeSet::new();
        for &addr in diff {
            if let CellClass::Sensitive(el) = self.classify(addr) {
                elements.insert(el);
            }
        }
        let mut c = Corruptions::default();
        for el in elements {
            match el {
                SensitiveElement::KpBit(j) => c.kp_flip_mask ^= 1 << (j & 31),
                SensitiveElement::KiBit(j) => c.ki_flip_mask ^= 1 << (j & 31),
                SensitiveElement::KdBit(j) => c.kd_flip_mask ^= 1 << (j & 31),
                SensitiveElement::AccStuck => c.acc_stuck = true,
                SensitiveElement::ErrPathStuckLow => c.err_stuck_low = true,
                SensitiveElement::OutForce(j) => c.out_force_mask |= 1 << (j & 31),
                SensitiveElement::RoutingSwap => c.routing_swap = true,
            }
        }
        c
    }
}
