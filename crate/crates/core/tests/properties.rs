//! Randomized invariant checks over the numeric and memory primitives.

use proptest::prelude::*;
use scrubsim::config_memory::{BitAddress, ConfigMemory};
use scrubsim::crc::{crc32, Crc32};
use scrubsim::ecc::{Decode, EccLayout};
use scrubsim::fixed::Fx;
use scrubsim::predictor::{schedule_period, FpScrubConfig};
use scrubsim::scrub::{PolicyRuntime, PortCostModel, ScrubPolicyConfig};

proptest! {
    /// A corrupted codeword with one flipped bit always decodes back to the
    /// flipped position, for several layout sizes.
    #[test]
    fn ecc_single_flip_round_trip(
        frame_size in prop::sample::select(vec![32usize, 64, 256]),
        payload_seed in any::<u64>(),
        pos_frac in 0.0f64..1.0,
    ) {
        let layout = EccLayout::new(frame_size).unwrap();
        let payload: Vec<bool> = {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(payload_seed);
            (0..layout.payload_bits).map(|_| rng.gen_bool(0.5)).collect()
        };
        let code = layout.encode(&payload).unwrap();
        prop_assert_eq!(layout.decode(&code).unwrap(), Decode::Clean);
        let pos = ((pos_frac * frame_size as f64) as usize).min(frame_size - 1);
        let mut bad = code;
        bad[pos] = !bad[pos];
        prop_assert_eq!(layout.decode(&bad).unwrap(), Decode::Corrected(pos));
    }

    /// Flipping the same bit list twice restores the golden image, and the
    /// reported distance equals the surviving flip set.
    #[test]
    fn flip_involution(
        seed in any::<u64>(),
        flips in prop::collection::vec((0usize..8, 0usize..32), 0..40),
    ) {
        let image = scrubsim::config_memory::random_golden(seed, 8, 32);
        let mut mem = ConfigMemory::build(8, 32, &image).unwrap();
        let addrs: Vec<BitAddress> =
            flips.iter().map(|&(f, b)| BitAddress::new(f, b)).collect();
        mem.flip_bits(&addrs).unwrap();
        let mut odd = std::collections::BTreeSet::new();
        for a in &addrs {
            if !odd.remove(&(a.frame, a.bit)) {
                odd.insert((a.frame, a.bit));
            }
        }
        prop_assert_eq!(mem.hamming_distance(), odd.len() as u64);
        mem.flip_bits(&addrs).unwrap();
        prop_assert_eq!(mem.hamming_distance(), 0);
        prop_assert_eq!(mem.device_crc(), mem.golden_crc());
    }

    /// Saturating Q16.16 arithmetic stays within one LSB of clamped real
    /// arithmetic.
    #[test]
    fn fixed_point_tracks_reals(a in -30000.0f64..30000.0, b in -30000.0f64..30000.0) {
        let lsb = 1.0 / 65536.0;
        let fa = Fx::from_f64(a);
        let fb = Fx::from_f64(b);
        let max = i32::MAX as f64 / 65536.0;
        let min = i32::MIN as f64 / 65536.0;
        let sum = (fa.to_f64() + fb.to_f64()).clamp(min, max);
        prop_assert!((fa.add(fb).to_f64() - sum).abs() <= lsb);
        let prod = (fa.to_f64() * fb.to_f64()).clamp(min, max);
        prop_assert!((fa.mul(fb).to_f64() - prod).abs() <= lsb.max(prod.abs() * 1e-9));
    }

    /// The hazard-to-period map never increases with the score and always
    /// lands inside the configured bounds.
    #[test]
    fn period_schedule_monotone(
        p_min in 1u64..1000,
        span in 1u64..100_000,
        theta_low in 0.0f64..5.0,
        width in 0.1f64..10.0,
        scores in prop::collection::vec(0.0f64..20.0, 2..20),
    ) {
        let cfg = FpScrubConfig {
            p_min,
            p_max: p_min + span,
            theta_low,
            theta_high: theta_low + width,
            ..FpScrubConfig::default()
        };
        let mut sorted = scores;
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut prev = u64::MAX;
        for s in sorted {
            let p = schedule_period(&cfg, s);
            prop_assert!((cfg.p_min..=cfg.p_max).contains(&p));
            prop_assert!(p <= prev);
            prev = p;
        }
    }

    /// No scrub policy ever moves memory further from golden.
    #[test]
    fn scrub_steps_never_regress(
        seed in any::<u64>(),
        flips in prop::collection::vec((0usize..8, 0usize..32), 1..30),
        policy_idx in 0usize..6,
        steps in 1u64..40,
    ) {
        let image = scrubsim::config_memory::random_golden(seed, 8, 32);
        let mut mem = ConfigMemory::build(8, 32, &image).unwrap();
        let addrs: Vec<BitAddress> =
            flips.iter().map(|&(f, b)| BitAddress::new(f, b)).collect();
        mem.flip_bits(&addrs).unwrap();
        let policy = match policy_idx {
            0 => ScrubPolicyConfig::NoScrub,
            1 => ScrubPolicyConfig::PeriodicBlindFull { period: 5 },
            2 => ScrubPolicyConfig::PeriodicBlindPartial { period: 5, frames: vec![0, 3, 7] },
            3 => ScrubPolicyConfig::ReadbackCompare { period: 5 },
            4 => ScrubPolicyConfig::SecDedRepair { scan_period: 5 },
            _ => ScrubPolicyConfig::Budgeted { window: 5, k_max: 2 },
        };
        let mut rt = PolicyRuntime::new(policy, PortCostModel::default(), mem.dims()).unwrap();
        let mut prev = mem.hamming_distance();
        for t in 0..steps {
            rt.step(&mut mem, t, 4);
            let d = mem.hamming_distance();
            prop_assert!(d <= prev, "distance rose from {} to {} at t={}", prev, d, t);
            prev = d;
        }
    }

    /// Streamed CRC equals the one-shot CRC for any chunking of the input.
    #[test]
    fn crc_chunking_invariant(data in prop::collection::vec(any::<u8>(), 0..200), cut in any::<prop::sample::Index>()) {
        let split = if data.is_empty() { 0 } else { cut.index(data.len()) };
        let mut streamed = Crc32::new();
        streamed.update(&data[..split]);
        streamed.update(&data[split..]);
        prop_assert_eq!(streamed.finalize(), crc32(&data));
    }
}
