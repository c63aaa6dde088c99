//! End-to-end acceptance checks for the simulator. Each test covers one
//! numbered criterion and prints a single pass/fail line; run with
//! `cargo test --test acceptance -- --nocapture` to see the lines even on
//! success.

use scrubsim::config_memory::BitAddress;
use scrubsim::dut::{PidParams, PlantModel, ReferenceLoop, Workload};
use scrubsim::ecc::{Decode, EccLayout};
use scrubsim::environment::EnvProfile;
use scrubsim::fault::{
    generate_plan, resolve_mbe_cells, FaultEvent, FaultKind, KindWeights, RegionOfInterest,
};
use scrubsim::fixed::Fx;
use scrubsim::harness::{
    compare_policies, run_experiment_opts, run_goldrun, subset_fails, ExperimentSpec, FaultSource,
    Outcome, RootCause,
};
use scrubsim::predictor::FpScrubConfig;
use scrubsim::scrub::{
    budgeted_progress, scrub_log_csv, PolicyRuntime, PortCostModel, ScrubActionKind,
    ScrubPolicyConfig,
};
use scrubsim::sensitivity::{CellClass, MapFractions, SensitiveElement, SensitivityMap};
use scrubsim::stats::wilson_interval;
use std::panic::AssertUnwindSafe;
use std::time::Instant;

/// Maximum per-sample gap between the fixed-point loop and its
/// double-precision twin (criterion 8).
const FIXED_POINT_TOLERANCE: f64 = 1.0 / 1024.0;

fn criterion(number: u32, name: &str, body: impl FnOnce()) {
    let result = std::panic::catch_unwind(AssertUnwindSafe(body));
    let verdict = if result.is_ok() { "PASS" } else { "FAIL" };
    println!("acceptance {number} ({name}): {verdict}");
    if let Err(panic) = result {
        std::panic::resume_unwind(panic);
    }
}

fn rng_bits(seed: u64, n: usize) -> Vec<bool> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_bool(0.5)).collect()
}

#[test]
fn criterion_1_ecc_soundness() {
    criterion(1, "SEC-DED soundness", || {
        let start = Instant::now();

        let small = EccLayout::new(32).unwrap();
        for f in 0..256u64 {
            let code = small.encode(&rng_bits(f, small.payload_bits)).unwrap();
            for pos in 0..32 {
                let mut bad = code.clone();
                bad[pos] = !bad[pos];
                assert_eq!(
                    small.decode(&bad).unwrap(),
                    Decode::Corrected(pos),
                    "frame {f} single flip at {pos}"
                );
            }
        }
        for f in 0..32u64 {
            let code = small.encode(&rng_bits(1000 + f, small.payload_bits)).unwrap();
            for i in 0..32 {
                for j in i + 1..32 {
                    let mut bad = code.clone();
                    bad[i] = !bad[i];
                    bad[j] = !bad[j];
                    assert_eq!(
                        small.decode(&bad).unwrap(),
                        Decode::DetectedUncorrectable,
                        "frame {f} double flip at ({i},{j})"
                    );
                }
            }
        }

        let big = EccLayout::new(1312).unwrap();
        let frames: Vec<Vec<bool>> = (0..64u64)
            .map(|f| big.encode(&rng_bits(2000 + f, big.payload_bits)).unwrap())
            .collect();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for case in 0..10_000usize {
            let code = &frames[case % frames.len()];
            let pos = rng.gen_range(0..1312);
            let mut bad = code.clone();
            bad[pos] = !bad[pos];
            assert_eq!(big.decode(&bad).unwrap(), Decode::Corrected(pos), "case {case}");
        }
        for case in 0..10_000usize {
            let code = &frames[case % frames.len()];
            let i = rng.gen_range(0..1312);
            let j = loop {
                let j = rng.gen_range(0..1312);
                if j != i {
                    break j;
                }
            };
            let mut bad = code.clone();
            bad[i] = !bad[i];
            bad[j] = !bad[j];
            assert_eq!(big.decode(&bad).unwrap(), Decode::DetectedUncorrectable, "case {case}");
        }

        assert!(start.elapsed().as_secs() < 10, "took {:?}", start.elapsed());
    });
}

#[test]
fn criterion_2_fault_model_statistics() {
    criterion(2, "fault-model statistics", || {
        let start = Instant::now();

        let roi = RegionOfInterest { frame_lo: 0, frame_hi: 64, bit_lo: 0, bit_hi: 1024 };
        let weights = KindWeights { sbe: 20, double_adjacent: 0, mbe: 1 };
        let plan = generate_plan(7, 100_000, &roi, 1_000_000, weights, 3).unwrap();
        let sbe = plan.events.iter().filter(|e| e.kind == FaultKind::Sbe).count();
        let fraction = sbe as f64 / plan.events.len() as f64;
        let expected = 20.0 / 21.0;
        assert!(
            (fraction - expected).abs() < 0.01,
            "single-bit fraction {fraction:.4} vs {expected:.4}"
        );

        let grid = RegionOfInterest { frame_lo: 0, frame_hi: 16, bit_lo: 0, bit_hi: 16 };
        for frame in 0..16usize {
            for bit in 0..16usize {
                for radius in 1u32..=4 {
                    let center = BitAddress::new(frame, bit);
                    let got = resolve_mbe_cells(center, radius, &grid);
                    let mut expected = Vec::new();
                    let r = radius as i64;
                    for f in 0..16i64 {
                        for b in 0..16i64 {
                            let df = f - frame as i64;
                            let db = b - bit as i64;
                            if df * df + db * db <= r * r {
                                expected.push(BitAddress::new(f as usize, b as usize));
                            }
                        }
                    }
                    let mut got_sorted = got.clone();
                    got_sorted.sort_by_key(|a| (a.frame, a.bit));
                    assert_eq!(got_sorted, expected, "center {center:?} radius {radius}");
                }
            }
        }

        assert!(start.elapsed().as_secs() < 5, "took {:?}", start.elapsed());
    });
}

/// A scenario where two gain-word flips are each masked by actuation
/// saturation but zero the proportional gain together: kp = 3.0 with flips
/// at bits 17 (-2.0) and 16 (-1.0), a huge constant setpoint, and a plant
/// too weak to ever close the error.
fn interacting_pair_spec() -> ExperimentSpec {
    let roi = RegionOfInterest { frame_lo: 4, frame_hi: 5, bit_lo: 0, bit_hi: 64 };
    let mut cells = vec![CellClass::NonSensitive; 64];
    cells[0] = CellClass::Sensitive(SensitiveElement::KpBit(17));
    cells[1] = CellClass::Sensitive(SensitiveElement::KpBit(16));
    let sbe = |id: u64, trigger_time: u64, bit: usize| FaultEvent {
        id,
        trigger_time,
        kind: FaultKind::Sbe,
        center: BitAddress::new(4, bit),
        radius: 0,
        cells: Vec::new(),
    };
    ExperimentSpec {
        duration: 6000,
        frame_count: 16,
        frame_size: 64,
        roi,
        workload: Workload { low_setpoint: 1000.0, high_setpoint: 1000.0, half_period: 3000 },
        pid: PidParams {
            kp: Fx::from_f64(3.0),
            ki: Fx::ZERO,
            kd: Fx::ZERO,
            u_min: Fx::from_int(-10),
            u_max: Fx::from_int(10),
            loop_period: 1,
        },
        plant: PlantModel { a: Fx::from_f64(0.96875), b: Fx::from_f64(0.0001), v: Fx::ZERO },
        fault_source: FaultSource::Explicit { events: vec![sbe(0, 1000, 0), sbe(1, 2000, 1)] },
        map_override: Some(SensitivityMap::explicit(roi, cells)),
        ..ExperimentSpec::default()
    }
}

#[test]
fn criterion_3_campaign_shape() {
    criterion(3, "campaign shape and root-cause classification", || {
        let start = Instant::now();
        let spec = ExperimentSpec::default();
        let goldrun = run_goldrun(&spec).unwrap();
        let seeds: Vec<u64> = (1..=1000).collect();

        // (a) reference-shaped campaign with attribution.
        let records: Vec<_> = seeds
            .iter()
            .map(|&s| {
                run_experiment_opts(&spec, &ScrubPolicyConfig::NoScrub, s, &goldrun, true, false)
                    .unwrap()
                    .record
            })
            .collect();
        let failures =
            records.iter().filter(|r| matches!(r.outcome, Outcome::Failure { .. })).count();
        let (lo, hi) = wilson_interval(failures as u64, records.len() as u64);
        println!(
            "  campaign: {failures}/1000 failures, fraction {:.3}, 95% CI [{lo:.3},{hi:.3}]",
            failures as f64 / 1000.0
        );
        assert!(failures > 0, "campaign produced no failures to classify");

        // (b) failure fraction is monotone in the sensitive-bit share;
        // an all-benign map yields exactly zero failures.
        let mut fractions = Vec::new();
        for sensitive in [0.0, 0.1, 0.5, 1.0] {
            let mut s = spec.clone();
            s.map.fractions = MapFractions::with_sensitive(sensitive);
            let n = seeds
                .iter()
                .filter(|&&seed| {
                    let r = run_experiment_opts(
                        &s,
                        &ScrubPolicyConfig::NoScrub,
                        seed,
                        &goldrun,
                        false,
                        false,
                    )
                    .unwrap()
                    .record;
                    matches!(r.outcome, Outcome::Failure { .. })
                })
                .count();
            fractions.push(n);
        }
        println!("  failures by sensitive share 0/10/50/100%: {fractions:?}");
        assert_eq!(fractions[0], 0, "a map with no sensitive bits must never fail");
        assert!(
            fractions.windows(2).all(|w| w[0] <= w[1]),
            "failure count must not decrease with sensitivity: {fractions:?}"
        );

        // (c) every single-cause verdict is backed by a reproducing isolated
        // replay, and a constructed mutually masking pair is Interacting.
        let mut singles = 0;
        let mut interacting = 0;
        for r in &records {
            match &r.root_cause {
                Some(RootCause::Single { fault_id }) => {
                    singles += 1;
                    let plan = spec.build_plan(r.seed).unwrap();
                    assert!(
                        subset_fails(
                            &spec,
                            &ScrubPolicyConfig::NoScrub,
                            r.seed,
                            &plan,
                            &[*fault_id],
                            &goldrun
                        )
                        .unwrap(),
                        "seed {}: isolated replay of fault {fault_id} did not fail",
                        r.seed
                    );
                }
                Some(RootCause::Interacting { .. }) => interacting += 1,
                None => {}
            }
        }
        println!("  root causes: {singles} single, {interacting} interacting");
        assert!(singles > 0);
        assert_eq!(singles + interacting, failures);

        let pair = interacting_pair_spec();
        let pair_gold = run_goldrun(&pair).unwrap();
        let out = run_experiment_opts(&pair, &ScrubPolicyConfig::NoScrub, 1, &pair_gold, true, false)
            .unwrap();
        assert!(matches!(out.record.outcome, Outcome::Failure { .. }));
        assert_eq!(
            out.record.root_cause,
            Some(RootCause::Interacting { fault_ids: vec![0, 1] }),
            "mutually masking pair must be classified as interacting"
        );
        assert_eq!(out.record.isolated_replays, 2);

        assert!(start.elapsed().as_secs() < 300, "took {:?}", start.elapsed());
    });
}

#[test]
fn criterion_4_scrub_policy_dominance() {
    criterion(4, "blind-scrub dominance and readback write-minimality", || {
        let spec = ExperimentSpec::default();
        let seeds: Vec<u64> = (1..=200).collect();
        let policies =
            [ScrubPolicyConfig::NoScrub, ScrubPolicyConfig::PeriodicBlindFull { period: 100 }];
        let (per_policy, table) = compare_policies(&spec, &policies, &seeds, false).unwrap();

        let failed = |r: &scrubsim::harness::ExperimentRecord| {
            matches!(r.outcome, Outcome::Failure { .. })
        };
        for (no_scrub, blind) in per_policy[0].iter().zip(&per_policy[1]) {
            assert!(
                !failed(blind) || failed(no_scrub),
                "seed {}: scrubbed run failed where unscrubbed run did not",
                no_scrub.seed
            );
        }
        println!(
            "  failure fractions: no_scrub {:.3}, blind_full {:.3}",
            table.rows[0].failure_fraction, table.rows[1].failure_fraction
        );

        // Residence bound: scrub period plus the time a full rewrite occupies
        // the configuration port.
        let full_scrub_port = spec.frame_count as u64 * PortCostModel::default().t_frame_write;
        let bound = (100 + full_scrub_port) as f64;
        let mean = table.rows[1].mean_latent_residence;
        println!("  mean latent residence {mean:.1} ticks (bound {bound})");
        assert!(mean < bound, "mean latent residence {mean} >= {bound}");

        // Readback-compare restores exactly the dirty frames, verified
        // against an independent shadow replay of each experiment.
        let policy = ScrubPolicyConfig::ReadbackCompare { period: 100 };
        let goldrun = run_goldrun(&spec).unwrap();
        for &seed in &seeds[..50] {
            let out =
                run_experiment_opts(&spec, &policy, seed, &goldrun, false, false).unwrap();
            let mut shadow = spec.build_memory(seed).unwrap();
            let plan = spec.build_plan(seed).unwrap();
            let mut injector = scrubsim::fault::InjectionRuntime::new();
            let mut actions = out.scrub_log.iter().peekable();
            for tick in 0..spec.duration {
                if actions
                    .peek()
                    .is_some_and(|a| a.issued_at == tick)
                {
                    let scan = actions.next().unwrap();
                    assert!(
                        matches!(scan.kind, ScrubActionKind::ReadOnlyScan { .. }),
                        "seed {seed}: step at {tick} did not begin with a scan"
                    );
                    let dirty = shadow.dirty_frames();
                    if dirty.is_empty() {
                        assert!(
                            !actions.peek().is_some_and(|a| matches!(
                                a.kind,
                                ScrubActionKind::FrameRestore { .. }
                            ) && a.issued_at < tick + scan.port_busy + 1),
                            "seed {seed}: wrote frames while memory was clean"
                        );
                    } else {
                        let restore = actions.next().expect("restore follows scan");
                        let ScrubActionKind::FrameRestore { frames } = &restore.kind else {
                            panic!("seed {seed}: expected a frame restore at {tick}");
                        };
                        assert_eq!(
                            frames, &dirty,
                            "seed {seed}: restored frames differ from the dirty set"
                        );
                        for &f in frames {
                            shadow.restore_frame(f).unwrap();
                        }
                    }
                }
                injector.inject_due(&plan, &mut shadow, tick).unwrap();
            }
            assert!(actions.next().is_none(), "seed {seed}: unconsumed scrub actions");
        }
    });
}

#[test]
fn criterion_5_prediction_scrubbing() {
    criterion(5, "failure-prediction scrubbing claims", || {
        let protected: Vec<usize> = ExperimentSpec::default().rp_frames();
        let base = ExperimentSpec {
            fault_source: FaultSource::Poisson {
                base_rate: 1e-5,
                weights: KindWeights::sbe_only(),
                mbe_radius_max: 3,
            },
            ..ExperimentSpec::default()
        };
        let blind = ScrubPolicyConfig::PeriodicBlindPartial {
            period: FpScrubConfig::default().p_min,
            frames: protected.clone(),
        };
        let fp = ScrubPolicyConfig::FpScrub {
            config: FpScrubConfig::default(),
            frames: protected.clone(),
        };
        let seeds: Vec<u64> = (1..=200).collect();

        // Quiet conditions: large energy savings without a detectable
        // reliability cost.
        let (_, benign) =
            compare_policies(&base, &[blind.clone(), fp.clone()], &seeds, false).unwrap();
        let (e_blind, e_fp) = (benign.rows[0].total_energy, benign.rows[1].total_energy);
        println!("  benign energy: periodic {e_blind}, predictive {e_fp}");
        assert!(
            4 * e_fp <= e_blind,
            "predictive energy {e_fp} exceeds 25% of periodic {e_blind}"
        );
        let diff = benign.rows[1].failure_diff_vs_baseline.as_ref().unwrap();
        println!(
            "  benign paired failure diff {:+.4} CI [{:+.4},{:+.4}]",
            diff.mean, diff.ci.0, diff.ci.1
        );
        assert!(
            diff.ci.0 <= 0.0 && 0.0 <= diff.ci.1,
            "benign failure difference CI excludes zero"
        );

        // Hostile conditions: protection converges to the aggressive
        // periodic schedule.
        let harsh = ExperimentSpec { env_profile: EnvProfile::Harsh, ..base.clone() };
        let (_, harsh_table) =
            compare_policies(&harsh, &[blind.clone(), fp.clone()], &seeds, false).unwrap();
        let diff = harsh_table.rows[1].failure_diff_vs_baseline.as_ref().unwrap();
        println!(
            "  harsh fractions: periodic {:.3}, predictive {:.3}, diff CI [{:+.4},{:+.4}]",
            harsh_table.rows[0].failure_fraction,
            harsh_table.rows[1].failure_fraction,
            diff.ci.0,
            diff.ci.1
        );
        assert!(
            diff.ci.0 <= 0.0 && 0.0 <= diff.ci.1,
            "harsh failure difference CI excludes zero"
        );

        // Degenerate thresholds reduce the predictor to the fixed schedule,
        // scrub log for scrub log.
        let pinned = ScrubPolicyConfig::FpScrub {
            config: FpScrubConfig { theta_low: 0.0, theta_high: 0.0, ..FpScrubConfig::default() },
            frames: protected.clone(),
        };
        let goldrun = run_goldrun(&base).unwrap();
        for seed in 1..=5 {
            let a = run_experiment_opts(&base, &blind, seed, &goldrun, false, false).unwrap();
            let b = run_experiment_opts(&base, &pinned, seed, &goldrun, false, false).unwrap();
            assert_eq!(
                scrub_log_csv(&a.scrub_log),
                scrub_log_csv(&b.scrub_log),
                "seed {seed}: fallback scrub log differs from the periodic one"
            );
        }
    });
}

#[test]
fn criterion_6_budgeted_recovery() {
    criterion(6, "budgeted degraded-mode recovery", || {
        let image = scrubsim::config_memory::random_golden(9, 16, 32);
        let mut mem = scrubsim::config_memory::ConfigMemory::build(16, 32, &image).unwrap();
        for f in 0..10 {
            mem.flip_bits(&[BitAddress::new(f, 3)]).unwrap();
        }
        assert_eq!(mem.dirty_frames().len(), 10);

        let policy = ScrubPolicyConfig::Budgeted { window: 100, k_max: 3 };
        let mut rt = PolicyRuntime::new(policy, PortCostModel::default(), mem.dims()).unwrap();
        let mut counts = Vec::new();
        for w in 0..4u64 {
            rt.step(&mut mem, w * 100, 90);
            counts.push(mem.dirty_frames().len() as u64);
        }
        assert_eq!(counts, vec![7, 4, 1, 0]);
        for (w, &c) in counts.iter().enumerate() {
            assert_eq!(c, budgeted_progress(10, 3, w as u64 + 1));
        }
        assert_eq!(mem.hamming_distance(), 0, "memory must match the boot image exactly");
        assert_eq!(mem.device_crc(), mem.golden_crc());
    });
}

#[test]
fn criterion_7_end_to_end_determinism() {
    criterion(7, "end-to-end determinism", || {
        let bin = env!("CARGO_BIN_EXE_scrubsim");
        let dir = tempfile::tempdir().unwrap();
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        for out in [&out_a, &out_b] {
            let status = std::process::Command::new(bin)
                .args([
                    "run",
                    "--runs",
                    "50",
                    "--seed",
                    "1",
                    "--no-attribution",
                    "--policy",
                    "no_scrub",
                    "--policy",
                    "blind_full:1000",
                    "--out",
                ])
                .arg(out)
                .stdout(std::process::Stdio::null())
                .status()
                .unwrap();
            assert!(status.success());
        }
        let a = std::fs::read(out_a.join("aggregate.csv")).unwrap();
        let b = std::fs::read(out_b.join("aggregate.csv")).unwrap();
        assert_eq!(a, b, "aggregate CSVs differ between identical runs");

        let output = std::process::Command::new(bin)
            .arg("replay")
            .arg(out_a.join("records"))
            .output()
            .unwrap();
        assert!(output.status.success(), "replay verification failed");
        let stdout = String::from_utf8_lossy(&output.stdout);
        assert!(
            stdout.contains("100 replayed, 0 mismatched"),
            "expected 100 clean replays, got: {}",
            stdout.lines().last().unwrap_or_default()
        );
    });
}

#[test]
fn criterion_8_fixed_point_fidelity() {
    criterion(8, "fixed-point fidelity", || {
        let spec = ExperimentSpec::default();
        let goldrun = run_goldrun(&spec).unwrap();
        let mut reference = ReferenceLoop::from_fixed(&spec.pid, &spec.plant);
        let mut worst: f64 = 0.0;
        for (i, &(measured, u)) in goldrun.rows.iter().enumerate() {
            let tick = i as u64 * spec.pid.loop_period;
            let dv = (Fx::from_word(measured).to_f64() - reference.v).abs();
            let (ru, _) = reference.step(spec.workload.setpoint_at_f64(tick));
            let du = (Fx::from_word(u).to_f64() - ru).abs();
            worst = worst.max(dv).max(du);
            assert!(
                dv < FIXED_POINT_TOLERANCE && du < FIXED_POINT_TOLERANCE,
                "tick {tick}: speed gap {dv:.2e}, actuation gap {du:.2e}"
            );
        }
        println!("  worst per-sample gap {worst:.2e} (tolerance {FIXED_POINT_TOLERANCE:.2e})");
    });
}
