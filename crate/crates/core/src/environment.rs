//! Simulated device and environment sensor feeds: die temperature, DC-DC
//! converter voltages, and an external radiation-flux series. The flux series
//! is the common signal driving both upset arrivals and the failure-prediction
//! scrubber.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FLUX_REF: f64 = 1.0;
pub const TEMP_MIN: f64 = -55.0;
pub const TEMP_MAX: f64 = 125.0;
pub const TEMP_BASE: f64 = 40.0;
/// Steady-state temperature rise per unit of flux above baseline.
pub const TEMP_FLUX_COUPLING: f64 = 2.0;
pub const NOMINAL_VOLTAGES: [f64; 3] = [1.0, 2.5, 3.3];

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("cadence {cadence} must be >= 1 and divide duration {duration}")]
    BadCadence { duration: u64, cadence: u64 },
    #[error("burst window [{start},{end}) is empty or outside the trace")]
    BadBurst { start: u64, end: u64 },
    #[error("burst multiplier {0} must be positive")]
    BadMultiplier(f64),
    #[error("time {now} outside trace span {span}")]
    OutOfSpan { now: u64, span: u64 },
    #[error("sample at t={t} violates physical bounds: {what}")]
    BoundsViolation { t: u64, what: String },
    #[error("trace file parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSample {
    pub t: u64,
    pub temperature: f64,
    pub converter_voltages: Vec<f64>,
    /// Normalized particle flux; 1.0 is the quiet-sky reference.
    pub flux: f64,
    pub humidity: Option<f64>,
    pub pressure: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstSpec {
    pub start: u64,
    pub end: u64,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvProfile {
    /// Quiet conditions, flux near the reference.
    Benign,
    /// Sustained high flux, roughly ten times the reference.
    Harsh,
    /// Quiet baseline with multiplier bursts.
    Episodic { bursts: Vec<BurstSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentTrace {
    pub seed: u64,
    pub duration: u64,
    pub cadence: u64,
    pub samples: Vec<SensorSample>,
    pub burst_episodes: Vec<BurstSpec>,
}

pub fn generate_trace(
    seed: u64,
    duration: u64,
    cadence: u64,
    profile: &EnvProfile,
) -> Result<EnvironmentTrace, EnvError> {
    if cadence == 0 || duration < cadence || duration % cadence != 0 {
        return Err(EnvError::BadCadence { duration, cadence });
    }
    let bursts = match profile {
        EnvProfile::Episodic { bursts } => {
            for b in bursts {
                if b.start >= b.end || b.end > duration {
                    return Err(EnvError::BadBurst { start: b.start, end: b.end });
                }
                if b.multiplier <= 0.0 {
                    return Err(EnvError::BadMultiplier(b.multiplier));
                }
            }
            bursts.clone()
        }
        _ => Vec::new(),
    };

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n = duration / cadence;
    let mut samples = Vec::with_capacity(n as usize);
    let mut temp = TEMP_BASE;
    for i in 0..n {
        let t = i * cadence;
        let base_flux = match profile {
            EnvProfile::Benign => 1.0 + rng.gen_range(-0.15..0.15),
            EnvProfile::Harsh => 10.0 + rng.gen_range(-1.0..1.0),
            EnvProfile::Episodic { .. } => 1.0 + rng.gen_range(-0.15..0.15),
        };
        let mult = bursts
            .iter()
            .filter(|b| t >= b.start && t < b.end)
            .map(|b| b.multiplier)
            .product::<f64>();
        let flux = (base_flux * mult).max(0.0);

        // Temperature random-walks toward a flux-coupled target.
        let target = TEMP_BASE + TEMP_FLUX_COUPLING * (flux - FLUX_REF).max(0.0);
        temp += 0.05 * (target - temp) + rng.gen_range(-0.2..0.2);
        temp = temp.clamp(TEMP_MIN, TEMP_MAX);

        let converter_voltages = NOMINAL_VOLTAGES
            .iter()
            .map(|&nom| {
                let mut v = nom * (1.0 + rng.gen_range(-0.01..0.01));
                // High flux occasionally dips the rails.
                if flux > 5.0 && rng.gen_bool(0.2) {
                    v *= 1.0 - rng.gen_range(0.02..0.10);
                }
                v.clamp(nom * 0.8, nom * 1.2)
            })
            .collect();

        samples.push(SensorSample {
            t,
            temperature: temp,
            converter_voltages,
            flux,
            humidity: Some(45.0 + rng.gen_range(-5.0..5.0)),
            pressure: Some(1013.0 + rng.gen_range(-10.0..10.0)),
        });
    }
    Ok(EnvironmentTrace { seed, duration, cadence, samples, burst_episodes: bursts })
}

impl EnvironmentTrace {
    /// Latest sample at or before `now` (zero-order hold); a tick exactly on a
    /// cadence boundary returns the boundary sample.
    pub fn read_sensors(&self, now: u64) -> Result<&SensorSample, EnvError> {
        if now >= self.duration {
            return Err(EnvError::OutOfSpan { now, span: self.duration });
        }
        Ok(&self.samples[(now / self.cadence) as usize])
    }

    pub fn flux_at(&self, now: u64) -> f64 {
        let idx = ((now / self.cadence) as usize).min(self.samples.len().saturating_sub(1));
        self.samples[idx].flux
    }

    pub fn max_flux(&self) -> f64 {
        self.samples.iter().map(|s| s.flux).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,temperature,v0,v1,v2,flux,humidity,pressure\n");
        for s in &self.samples {
            let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                s.t,
                s.temperature,
                s.converter_voltages[0],
                s.converter_voltages[1],
                s.converter_voltages[2],
                s.flux,
                fmt_opt(s.humidity),
                fmt_opt(s.pressure)
            ));
        }
        out
    }

    /// Parse a trace file, validating cadence regularity and physical bounds.
    pub fn from_csv(text: &str, seed: u64) -> Result<EnvironmentTrace, EnvError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| EnvError::Parse("empty file".into()))?;
        if header != "t,temperature,v0,v1,v2,flux,humidity,pressure" {
            return Err(EnvError::Parse(format!("unexpected header: {header}")));
        }
        let mut samples = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 8 {
                return Err(EnvError::Parse(format!("line {}: expected 8 columns", lineno + 2)));
            }
            let num = |i: usize| -> Result<f64, EnvError> {
                cols[i]
                    .parse()
                    .map_err(|_| EnvError::Parse(format!("line {}: bad number", lineno + 2)))
            };
            let opt = |i: usize| -> Result<Option<f64>, EnvError> {
                if cols[i].is_empty() { Ok(None) } else { num(i).map(Some) }
            };
            samples.push(SensorSample {
                t: cols[0]
                    .parse()
                    .map_err(|_| EnvError::Parse(format!("line {}: bad tick", lineno + 2)))?,
                temperature: num(1)?,
                converter_voltages: vec![num(2)?, num(3)?, num(4)?],
                flux: num(5)?,
                humidity: opt(6)?,
                pressure: opt(7)?,
            });
        }
        if samples.is_empty() {
            return Err(EnvError::Parse("no samples".into()));
        }
        let cadence = if samples.len() > 1 { samples[1].t - samples[0].t } else { samples[0].t.max(1) };
        for (i, s) in samples.iter().enumerate() {
            if s.t != i as u64 * cadence {
                return Err(EnvError::Parse(format!("irregular cadence at t={}", s.t)));
            }
            validate_bounds(s)?;
        }
        let duration = samples.len() as u64 * cadence;
        Ok(EnvironmentTrace { seed, duration, cadence, samples, burst_episodes: Vec::new() })
    }
}

pub fn validate_bounds(s: &SensorSample) -> Result<(), EnvError> {
    if !(TEMP_MIN..=TEMP_MAX).contains(&s.temperature) {
        return Err(EnvError::BoundsViolation {
            t: s.t,
            what: format!("temperature {}", s.temperature),
        });
    }
    if s.flux < 0.0 {
        return Err(EnvError::BoundsViolation { t: s.t, what: format!("flux {}", s.flux) });
    }
    for (i, &v) in s.converter_voltages.iter().enumerate() {
        let nom = NOMINAL_VOLTAGES.get(i).copied().unwrap_or(1.0);
        if v < nom * 0.8 || v > nom * 1.2 {
            return Err(EnvError::BoundsViolation { t: s.t, what: format!("v{i} = {v}") });
        }
    }
    Ok(())
}
