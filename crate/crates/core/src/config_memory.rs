//! FPGA configuration memory model: addressable frames of bits with an
//! immutable golden image, incremental diff tracking, per-frame SEC-DED and a
//! device-wide CRC.

use crate::crc::Crc32;
use crate::ecc::{EccError, EccLayout};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_FRAME_SIZE: usize = 1312;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MemError {
    #[error("frame index {index} out of range (frame_count {frame_count})")]
    FrameOutOfRange { index: usize, frame_count: usize },
    #[error("bit address ({frame},{bit}) out of range ({frame_count}x{frame_size})")]
    BitOutOfRange { frame: usize, bit: usize, frame_count: usize, frame_size: usize },
    #[error("golden image has {got} bits, expected {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("golden image file has {got} bytes, expected {want}")]
    FileLength { got: usize, want: usize },
    #[error(transparent)]
    Ecc(#[from] EccError),
}

/// Device geometry: frames are columns, bits run top to bottom within a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub frame_count: usize,
    pub frame_size: usize,
}

impl Dims {
    pub fn total_bits(&self) -> usize {
        self.frame_count * self.frame_size
    }

    pub fn contains(&self, addr: BitAddress) -> bool {
        addr.frame < self.frame_count && addr.bit < self.frame_size
    }
}

/// Index of one configuration frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrameAddress(pub usize);

impl FrameAddress {
    pub fn checked(index: usize, frame_count: usize) -> Result<FrameAddress, MemError> {
        if index < frame_count {
            Ok(FrameAddress(index))
        } else {
            Err(MemError::FrameOutOfRange { index, frame_count })
        }
    }
}

/// One bit cell in the frame grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BitAddress {
    pub frame: usize,
    pub bit: usize,
}

impl BitAddress {
    pub fn new(frame: usize, bit: usize) -> BitAddress {
        BitAddress { frame, bit }
    }

    pub fn checked(frame: usize, bit: usize, dims: Dims) -> Result<BitAddress, MemError> {
        let addr = BitAddress { frame, bit };
        if dims.contains(addr) {
            Ok(addr)
        } else {
            Err(MemError::BitOutOfRange {
                frame,
                bit,
                frame_count: dims.frame_count,
                frame_size: dims.frame_size,
            })
        }
    }
}

/// Live and golden bit matrices with per-frame dirty counters.
#[derive(Debug, Clone)]
pub struct ConfigMemory {
    dims: Dims,
    ecc: EccLayout,
    words_per_frame: usize,
    live: Vec<u64>,
    golden: Vec<u64>,
    frame_diff: Vec<u32>,
    total_diff: u64,
}

impl ConfigMemory {
    /// Build from a flat golden image, frame-major. Live starts as a copy.
    pub fn build(
        frame_count: usize,
        frame_size: usize,
        golden_image: &[bool],
    ) -> Result<ConfigMemory, MemError> {
        let dims = Dims { frame_count, frame_size };
        if golden_image.len() != dims.total_bits() {
            return Err(MemError::DimensionMismatch {
                got: golden_image.len(),
                want: dims.total_bits(),
            });
        }
        let ecc = EccLayout::new(frame_size)?;
        let words_per_frame = frame_size.div_ceil(64);
        let mut golden = vec![0u64; frame_count * words_per_frame];
        for (i, &bit) in golden_image.iter().enumerate() {
            if bit {
                let frame = i / frame_size;
                let pos = i % frame_size;
                golden[frame * words_per_frame + pos / 64] |= 1u64 << (pos % 64);
            }
        }
        Ok(ConfigMemory {
            dims,
            ecc,
            words_per_frame,
            live: golden.clone(),
            golden,
            frame_diff: vec![0; frame_count],
            total_diff: 0,
        })
    }

    pub fn build_zero(frame_count: usize, frame_size: usize) -> Result<ConfigMemory, MemError> {
        let image = vec![false; frame_count * frame_size];
        ConfigMemory::build(frame_count, frame_size, &image)
    }

    /// Unpack a raw golden image file: frame-major, packed 8 bits per byte,
    /// little-endian within each byte.
    pub fn build_from_packed(
        frame_count: usize,
        frame_size: usize,
        bytes: &[u8],
    ) -> Result<ConfigMemory, MemError> {
        let total = frame_count * frame_size;
        let want = total.div_ceil(8);
        if bytes.len() != want {
            return Err(MemError::FileLength { got: bytes.len(), want });
        }
        let image: Vec<bool> = (0..total).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect();
        ConfigMemory::build(frame_count, frame_size, &image)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn ecc_layout(&self) -> EccLayout {
        self.ecc
    }

    pub fn get_live(&self, addr: BitAddress) -> Result<bool, MemError> {
        self.check(addr)?;
        let w = addr.frame * self.words_per_frame + addr.bit / 64;
        Ok(self.live[w] >> (addr.bit % 64) & 1 == 1)
    }

    pub fn get_golden(&self, addr: BitAddress) -> Result<bool, MemError> {
        self.check(addr)?;
        let w = addr.frame * self.words_per_frame + addr.bit / 64;
        Ok(self.golden[w] >> (addr.bit % 64) & 1 == 1)
    }

    fn check(&self, addr: BitAddress) -> Result<(), MemError> {
        if self.dims.contains(addr) {
            Ok(())
        } else {
            Err(MemError::BitOutOfRange {
                frame: addr.frame,
                bit: addr.bit,
                frame_count: self.dims.frame_count,
                frame_size: self.dims.frame_size,
            })
        }
    }

    /// Invert each target bit in the live image; returns the full diff set
    /// versus golden after the flips. All-or-nothing on a bad address.
    pub fn flip_bits(&mut self, targets: &[BitAddress]) -> Result<Vec<BitAddress>, MemError> {
        for &t in targets {
            self.check(t)?;
        }
        for &t in targets {
            let w = t.frame * self.words_per_frame + t.bit / 64;
            let mask = 1u64 << (t.bit % 64);
            self.live[w] ^= mask;
            let was_diff = (self.live[w] ^ self.golden[w]) & mask == 0;
            if was_diff {
                // Flip removed a difference.
                self.frame_diff[t.frame] -= 1;
                self.total_diff -= 1;
            } else {
                self.frame_diff[t.frame] += 1;
                self.total_diff += 1;
            }
        }
        Ok(self.diff_set())
    }

    /// Number of live bits differing from golden.
    pub fn hamming_distance(&self) -> u64 {
        self.total_diff
    }

    pub fn frame_is_dirty(&self, frame: usize) -> bool {
        self.frame_diff[frame] > 0
    }

    pub fn dirty_frames(&self) -> Vec<usize> {
        (0..self.dims.frame_count).filter(|&f| self.frame_diff[f] > 0).collect()
    }

    /// Bit positions within `frame` that differ from golden, ascending.
    pub fn frame_diff_positions(&self, frame: usize) -> Vec<usize> {
        let mut out = Vec::new();
        if self.frame_diff[frame] == 0 {
            return out;
        }
        let base = frame * self.words_per_frame;
        for w in 0..self.words_per_frame {
            let mut x = self.live[base + w] ^ self.golden[base + w];
            while x != 0 {
                let b = x.trailing_zeros() as usize;
                out.push(w * 64 + b);
                x &= x - 1;
            }
        }
        out
    }

    /// All differing bits, sorted by (frame, bit).
    pub fn diff_set(&self) -> Vec<BitAddress> {
        let mut out = Vec::with_capacity(self.total_diff as usize);
        for frame in 0..self.dims.frame_count {
            for bit in self.frame_diff_positions(frame) {
                out.push(BitAddress { frame, bit });
            }
        }
        out
    }

    /// Rewrite one frame from golden; returns the bit addresses restored.
    pub fn restore_frame(&mut self, frame: usize) -> Result<Vec<BitAddress>, MemError> {
        FrameAddress::checked(frame, self.dims.frame_count)?;
        let restored: Vec<BitAddress> = self
            .frame_diff_positions(frame)
            .into_iter()
            .map(|bit| BitAddress { frame, bit })
            .collect();
        let base = frame * self.words_per_frame;
        self.live[base..base + self.words_per_frame]
            .copy_from_slice(&self.golden[base..base + self.words_per_frame]);
        self.total_diff -= self.frame_diff[frame] as u64;
        self.frame_diff[frame] = 0;
        Ok(restored)
    }

    /// Restore a single bit to its golden value (read-modify-write repair).
    pub fn restore_bit(&mut self, addr: BitAddress) -> Result<(), MemError> {
        self.check(addr)?;
        let w = addr.frame * self.words_per_frame + addr.bit / 64;
        let mask = 1u64 << (addr.bit % 64);
        if (self.live[w] ^ self.golden[w]) & mask != 0 {
            self.live[w] ^= mask;
            self.frame_diff[addr.frame] -= 1;
            self.total_diff -= 1;
        }
        Ok(())
    }

    pub fn restore_all(&mut self) -> Vec<BitAddress> {
        let restored = self.diff_set();
        self.live.copy_from_slice(&self.golden);
        self.frame_diff.fill(0);
        self.total_diff = 0;
        restored
    }

    /// CRC-32 over the packed live image, frame-major bit order.
    pub fn device_crc(&self) -> u32 {
        self.crc_of(&self.live)
    }

    pub fn golden_crc(&self) -> u32 {
        self.crc_of(&self.golden)
    }

    fn crc_of(&self, words: &[u64]) -> u32 {
        let mut crc = Crc32::new();
        crc.update(&self.pack(words));
        crc.finalize()
    }

    /// Pack frame-major, bit 0 of frame 0 first, little-endian within byte.
    fn pack(&self, words: &[u64]) -> Vec<u8> {
        let total = self.dims.total_bits();
        let mut bytes = vec![0u8; total.div_ceil(8)];
        let mut idx = 0usize;
        for frame in 0..self.dims.frame_count {
            let base = frame * self.words_per_frame;
            for bit in 0..self.dims.frame_size {
                if words[base + bit / 64] >> (bit % 64) & 1 == 1 {
                    bytes[idx / 8] |= 1 << (idx % 8);
                }
                idx += 1;
            }
        }
        bytes
    }

    pub fn golden_packed(&self) -> Vec<u8> {
        self.pack(&self.golden)
    }

    pub fn live_packed(&self) -> Vec<u8> {
        self.pack(&self.live)
    }
}

/// Seeded random golden image, for hermetic experiment setup.
pub fn random_golden(seed: u64, frame_count: usize, frame_size: usize) -> Vec<bool> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..frame_count * frame_size).map(|_| rng.gen()).collect()
}
