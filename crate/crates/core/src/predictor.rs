//! Failure-prediction scrub scheduling: an EWMA hazard score over sensor
//! inputs mapped to a scrub period, plus bounded-range monitoring of the
//! protected module's I/O words. The predictor is deliberately simple; a
//! learned model can replace `update_hazard` behind the same state shape.

use crate::environment::{SensorSample, FLUX_REF, NOMINAL_VOLTAGES, TEMP_BASE};
use crate::fixed::Fx;
use serde::{Deserialize, Serialize};

/// Expected ranges for the 32-bit DUT interface words, as Q16.16 values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IoBounds {
    pub input_min: Fx,
    pub input_max: Fx,
    pub output_min: Fx,
    pub output_max: Fx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpScrubConfig {
    pub w_f: f64,
    pub w_t: f64,
    pub w_v: f64,
    /// EWMA factor per sensor sample; 1.0 means no memory.
    pub alpha: f64,
    pub p_min: u64,
    pub p_max: u64,
    pub theta_low: f64,
    pub theta_high: f64,
    pub t_base: f64,
    pub t_span: f64,
    /// None disables interface monitoring.
    pub io_bounds: Option<IoBounds>,
    /// Ticks the period stays clamped to p_min after an I/O violation.
    pub cooldown: u64,
}

impl Default for FpScrubConfig {
    fn default() -> Self {
        FpScrubConfig {
            w_f: 1.0,
            w_t: 0.5,
            w_v: 2.0,
            alpha: 0.1,
            p_min: 100,
            p_max: 10_000,
            theta_low: 1.5,
            theta_high: 6.0,
            t_base: TEMP_BASE,
            t_span: 85.0,
            io_bounds: None,
            cooldown: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardScore {
    pub value: f64,
    pub flux_term: f64,
    pub temp_term: f64,
    pub voltage_term: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IoCheck {
    InRange,
    Violation { word: u32, is_output: bool },
}

/// EWMA state plus the violation cooldown clock.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PredictorState {
    pub flux_ewma: f64,
    pub temp_ewma: f64,
    pub volt_dev_ewma: f64,
    initialized: bool,
    pub cooldown_until: u64,
    pub last_score: Option<HazardScore>,
}

fn voltage_deviation(sample: &SensorSample) -> f64 {
    if sample.converter_voltages.is_empty() {
        return 0.0;
    }
    let sum: f64 = sample
        .converter_voltages
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let nom = NOMINAL_VOLTAGES.get(i).copied().unwrap_or(1.0);
            (v - nom).abs() / nom
        })
        .sum();
    sum / sample.converter_voltages.len() as f64
}

pub fn update_hazard(
    cfg: &FpScrubConfig,
    state: &mut PredictorState,
    sample: &SensorSample,
) -> HazardScore {
    let volt_dev = voltage_deviation(sample);
    if state.initialized {
        let a = cfg.alpha;
        state.flux_ewma = a * sample.flux + (1.0 - a) * state.flux_ewma;
        state.temp_ewma = a * sample.temperature + (1.0 - a) * state.temp_ewma;
        state.volt_dev_ewma = a * volt_dev + (1.0 - a) * state.volt_dev_ewma;
    } else {
        state.flux_ewma = sample.flux;
        state.temp_ewma = sample.temperature;
        state.volt_dev_ewma = volt_dev;
        state.initialized = true;
    }
    let flux_term = cfg.w_f * state.flux_ewma / FLUX_REF;
    let temp_term = cfg.w_t * (state.temp_ewma - cfg.t_base).max(0.0) / cfg.t_span;
    let voltage_term = cfg.w_v * state.volt_dev_ewma;
    let score =
        HazardScore { value: flux_term + temp_term + voltage_term, flux_term, temp_term, voltage_term };
    state.last_score = Some(score);
    score
}

/// Map a hazard score to a scrub period: p_max at or below theta_low, p_min at
/// or above theta_high, log-linear in between. Monotone non-increasing.
pub fn schedule_period(cfg: &FpScrubConfig, score: f64) -> u64 {
    if score <= cfg.theta_low || cfg.theta_high <= cfg.theta_low {
        if score >= cfg.theta_high {
            return cfg.p_min;
        }
        return cfg.p_max;
    }
    if score >= cfg.theta_high {
        return cfg.p_min;
    }
    let frac = (score - cfg.theta_low) / (cfg.theta_high - cfg.theta_low);
    let log_p = (cfg.p_max as f64).ln() + frac * ((cfg.p_min as f64).ln() - (cfg.p_max as f64).ln());
    (log_p.exp().round() as u64).clamp(cfg.p_min, cfg.p_max)
}

/// Range-check a window of interface word pairs (input, output).
pub fn io_monitor(cfg: &FpScrubConfig, window: &[(u32, u32)]) -> IoCheck {
    let Some(b) = cfg.io_bounds else {
        return IoCheck::InRange;
    };
    for &(input, output) in window {
        let i = Fx::from_word(input);
        if i < b.input_min || i > b.input_max {
            return IoCheck::Violation { word: input, is_output: false };
        }
        let o = Fx::from_word(output);
        if o < b.output_min || o > b.output_max {
            return IoCheck::Violation { word: output, is_output: true };
        }
    }
    IoCheck::InRange
}

impl PredictorState {
    /// Current scheduled period, honoring the post-violation cooldown.
    pub fn current_period(&self, cfg: &FpScrubConfig, now: u64) -> u64 {
        if now < self.cooldown_until {
            return cfg.p_min;
        }
        let score = self.last_score.map(|s| s.value).unwrap_or(0.0);
        schedule_period(cfg, score)
    }

    pub fn note_violation(&mut self, cfg: &FpScrubConfig, now: u64) {
        self.cooldown_until = self.cooldown_until.max(now + cfg.cooldown);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn benign_sample(t: u64) -> SensorSample {
        SensorSample {
            t,
            temperature: TEMP_BASE,
            converter_voltages: NOMINAL_VOLTAGES.to_vec(),
            flux: 1.0,
            humidity: None,
            pressure: None,
        }
    }

    #[test]
    fn benign_steady_state_score_is_flux_weight() {
        let cfg = FpScrubConfig::default();
        let mut state = PredictorState::default();
        for t in 0..50 {
            let s = update_hazard(&cfg, &mut state, &benign_sample(t));
            assert!((s.value - cfg.w_f).abs() < 1e-12);
        }
    }

    #[test]
    fn flux_step_converges_upward() {
        let cfg = FpScrubConfig::default();
        let mut state = PredictorState::default();
        update_hazard(&cfg, &mut state, &benign_sample(0));
        let mut prev = cfg.w_f;
        let mut sample = benign_sample(1);
        sample.flux = 10.0;
        for _ in 0..200 {
            let s = update_hazard(&cfg, &mut state, &sample);
            assert!(s.value > prev, "score must increase monotonically toward the new level");
            prev = s.value;
        }
        // EWMA closed form converges to the stepped input.
        assert!((prev - 10.0 * cfg.w_f).abs() < 0.01);
    }

    #[test]
    fn alpha_one_has_no_memory() {
        let cfg = FpScrubConfig { alpha: 1.0, ..FpScrubConfig::default() };
        let mut state = PredictorState::default();
        let mut hot = benign_sample(0);
        hot.flux = 7.0;
        update_hazard(&cfg, &mut state, &hot);
        let s = update_hazard(&cfg, &mut state, &benign_sample(1));
        assert!((s.value - cfg.w_f).abs() < 1e-12);
    }

    #[test]
    fn period_endpoints() {
        let cfg = FpScrubConfig::default();
        assert_eq!(schedule_period(&cfg, 0.0), cfg.p_max);
        assert_eq!(schedule_period(&cfg, cfg.theta_low), cfg.p_max);
        assert_eq!(schedule_period(&cfg, cfg.theta_high), cfg.p_min);
        assert_eq!(schedule_period(&cfg, 100.0), cfg.p_min);
    }

    #[test]
    fn midpoint_is_geometric_mean() {
        let cfg = FpScrubConfig::default();
        let mid = (cfg.theta_low + cfg.theta_high) / 2.0;
        let want = ((cfg.p_min as f64) * (cfg.p_max as f64)).sqrt().round() as u64;
        assert_eq!(schedule_period(&cfg, mid), want);
    }

    #[test]
    fn period_is_monotone_and_bounded() {
        let cfg = FpScrubConfig::default();
        let mut prev = u64::MAX;
        for i in 0..200 {
            let score = i as f64 * 0.05;
            let p = schedule_period(&cfg, score);
            assert!(p <= prev);
            assert!((cfg.p_min..=cfg.p_max).contains(&p));
            prev = p;
        }
    }

    #[test]
    fn degenerate_thresholds_pin_p_min() {
        let cfg = FpScrubConfig { theta_low: 0.0, theta_high: 0.0, ..FpScrubConfig::default() };
        for score in [0.0, 0.5, 3.0] {
            assert_eq!(schedule_period(&cfg, score), cfg.p_min);
        }
    }

    #[test]
    fn io_monitor_checks_bounds() {
        let bounds = IoBounds {
            input_min: Fx::from_int(-1000),
            input_max: Fx::from_int(1000),
            output_min: Fx::from_int(-100),
            output_max: Fx::from_int(100),
        };
        let cfg = FpScrubConfig { io_bounds: Some(bounds), ..FpScrubConfig::default() };
        assert_eq!(io_monitor(&cfg, &[]), IoCheck::InRange);
        let ok = (Fx::from_int(20).to_word(), Fx::from_int(50).to_word());
        assert_eq!(io_monitor(&cfg, &[ok]), IoCheck::InRange);
        // A forced high output bit lands far outside the actuation range.
        let forced = Fx::from_word(Fx::from_int(50).to_word() | 1 << 30);
        let bad = (ok.0, forced.to_word());
        assert!(matches!(io_monitor(&cfg, &[ok, bad]), IoCheck::Violation { is_output: true, .. }));
    }

    #[test]
    fn no_bounds_means_no_monitoring() {
        let cfg = FpScrubConfig::default();
        assert_eq!(io_monitor(&cfg, &[(u32::MAX, u32::MAX)]), IoCheck::InRange);
    }

    #[test]
    fn cooldown_clamps_period() {
        let cfg = FpScrubConfig::default();
        let mut state = PredictorState::default();
        for t in 0..20 {
            update_hazard(&cfg, &mut state, &benign_sample(t));
        }
        assert_eq!(state.current_period(&cfg, 100), cfg.p_max);
        state.note_violation(&cfg, 100);
        assert_eq!(state.current_period(&cfg, 100), cfg.p_min);
        assert_eq!(state.current_period(&cfg, 100 + cfg.cooldown - 1), cfg.p_min);
        assert_eq!(state.current_period(&cfg, 100 + cfg.cooldown), cfg.p_max);
    }
}
