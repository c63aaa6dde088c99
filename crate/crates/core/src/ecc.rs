//! Per-frame SEC-DED code: extended Hamming with check bits at power-of-two
//! positions and one overall parity bit at position 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EccError {
    #[error("frame size {0} too small for a SEC-DED layout (minimum 16)")]
    FrameTooSmall(usize),
    #[error("payload length {got} does not match layout payload_bits {want}")]
    PayloadLength { got: usize, want: usize },
    #[error("frame length {got} does not match layout frame_size {want}")]
    FrameLength { got: usize, want: usize },
}

/// Outcome of decoding one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decode {
    Clean,
    /// Single-bit error at the given frame position, fixable in place.
    Corrected(usize),
    DetectedUncorrectable,
}

/// Bit layout of one frame: `frame_size = payload_bits + check_bits`, where
/// `check_bits` counts the Hamming positions plus the overall parity bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EccLayout {
    pub frame_size: usize,
    pub payload_bits: usize,
    pub check_bits: usize,
}

impl EccLayout {
    pub fn new(frame_size: usize) -> Result<EccLayout, EccError> {
        if frame_size < 16 {
            return Err(EccError::FrameTooSmall(frame_size));
        }
        // Hamming check positions are the powers of two in 1..frame_size.
        let hamming_checks = (usize::BITS - (frame_size - 1).leading_zeros()) as usize;
        let check_bits = hamming_checks + 1;
        debug_assert!(1usize << (check_bits - 1) >= frame_size);
        Ok(EccLayout {
            frame_size,
            payload_bits: frame_size - check_bits,
            check_bits,
        })
    }

    fn is_check_position(pos: usize) -> bool {
        pos == 0 || pos.is_power_of_two()
    }

    /// Encode a payload into a frame with consistent check and parity bits.
    pub fn encode(&self, payload: &[bool]) -> Result<Vec<bool>, EccError> {
        if payload.len() != self.payload_bits {
            return Err(EccError::PayloadLength { got: payload.len(), want: self.payload_bits });
        }
        let mut frame = vec![false; self.frame_size];
        let mut src = payload.iter();
        for pos in 1..self.frame_size {
            if !Self::is_check_position(pos) {
                frame[pos] = *src.next().expect("payload_bits matches data positions");
            }
        }
        // Hamming check bits zero the syndrome.
        let mut syndrome = 0usize;
        for (pos, &bit) in frame.iter().enumerate() {
            if bit {
                syndrome ^= pos;
            }
        }
        let mut k = 1usize;
        while k < self.frame_size {
            if syndrome & k != 0 {
                frame[k] = true;
            }
            k <<= 1;
        }
        // Overall parity makes the total bit count even.
        let ones = frame.iter().filter(|&&b| b).count();
        frame[0] = ones % 2 == 1;
        Ok(frame)
    }

    pub fn decode(&self, frame: &[bool]) -> Result<Decode, EccError> {
        if frame.len() != self.frame_size {
            return Err(EccError::FrameLength { got: frame.len(), want: self.frame_size });
        }
        let set: Vec<usize> =
            frame.iter().enumerate().filter_map(|(i, &b)| b.then_some(i)).collect();
        Ok(self.decode_set_positions(&set))
    }

    /// Decode from the list of set positions of `frame XOR reference`, where
    /// the reference is any consistent codeword. The all-zero frame is a
    /// codeword, so this doubles as a decoder for raw error vectors.
    pub fn decode_set_positions(&self, set_positions: &[usize]) -> Decode {
        let mut syndrome = 0usize;
        for &pos in set_positions {
            syndrome ^= pos;
        }
        let parity_odd = set_positions.len() % 2 == 1;
        match (syndrome, parity_odd) {
            (0, false) => Decode::Clean,
            // Odd error count: a single-bit fix, provided the syndrome points
            // inside the frame (a syndrome of 0 means the parity bit itself).
            (s, true) if s < self.frame_size => Decode::Corrected(s),
            _ => Decode::DetectedUncorrectable,
        }
    }
}
