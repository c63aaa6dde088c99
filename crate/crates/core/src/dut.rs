//! Device under test: a discrete-time PID cruise controller with a simulated
//! first-order vehicle plant, in saturating Q16.16 arithmetic. A matching
//! double-precision model serves as the numerics oracle.

use crate::fixed::Fx;
use serde::{Deserialize, Serialize};

/// Controller gains and actuation limits. A PI configuration (kd = 0) is the
/// campaign default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidParams {
    pub kp: Fx,
    pub ki: Fx,
    pub kd: Fx,
    pub u_min: Fx,
    pub u_max: Fx,
    pub loop_period: u64,
}

impl Default for PidParams {
    fn default() -> Self {
        PidParams {
            kp: Fx::from_f64(2.0),
            ki: Fx::from_f64(0.03125),
            kd: Fx::ZERO,
            u_min: Fx::from_int(-100),
            u_max: Fx::from_int(100),
            loop_period: 1,
        }
    }
}

/// First-order plant v[k+1] = a*v[k] + b*u[k]. Defaults are exact in Q16.16
/// with b/(1-a) = 1, so steady-state speed equals steady actuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantModel {
    pub a: Fx,
    pub b: Fx,
    pub v: Fx,
}

impl Default for PlantModel {
    fn default() -> Self {
        PlantModel { a: Fx::from_f64(0.96875), b: Fx::from_f64(0.03125), v: Fx::ZERO }
    }
}

pub fn plant_step(plant: &mut PlantModel, u: Fx) -> Fx {
    plant.v = plant.a.mul(plant.v).add(plant.b.mul(u));
    plant.v
}

/// Integrator and previous-error state of the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PidState {
    pub acc: Fx,
    pub e_prev: Fx,
}

/// The 32-bit I/O interface of the controller module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DutInterface {
    pub input: u32,
    pub output: u32,
    pub enable: bool,
    pub reset: bool,
}

/// Behavioral corruptions currently active, derived from the live-vs-golden
/// diff through the sensitivity map. Composes onto nominal parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Corruptions {
    pub kp_flip_mask: u32,
    pub ki_flip_mask: u32,
    pub kd_flip_mask: u32,
    pub acc_stuck: bool,
    pub err_stuck_low: bool,
    pub out_force_mask: u32,
    pub routing_swap: bool,
}

impl Corruptions {
    pub fn is_nominal(&self) -> bool {
        *self == Corruptions::default()
    }
}

/// Nominal parameters with the current corruption set applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveDut {
    pub params: PidParams,
    pub corruptions: Corruptions,
}

impl EffectiveDut {
    pub fn new(nominal: PidParams, corruptions: Corruptions) -> EffectiveDut {
        let mut params = nominal;
        params.kp = Fx::from_word(params.kp.to_word() ^ corruptions.kp_flip_mask);
        params.ki = Fx::from_word(params.ki.to_word() ^ corruptions.ki_flip_mask);
        params.kd = Fx::from_word(params.kd.to_word() ^ corruptions.kd_flip_mask);
        EffectiveDut { params, corruptions }
    }

    pub fn nominal(params: PidParams) -> EffectiveDut {
        EffectiveDut::new(params, Corruptions::default())
    }
}

/// One controller step: u = clamp(kp*e + ki*sum(e) + kd*(e - e_prev)), with
/// integrator hold while the output clamps (anti-windup).
pub fn pid_step(dut: &EffectiveDut, state: &mut PidState, setpoint: Fx, measured: Fx) -> Fx {
    let c = &dut.corruptions;
    let (sp, ms) = if c.routing_swap { (measured, setpoint) } else { (setpoint, measured) };
    let e = if c.err_stuck_low { Fx::ZERO } else { sp.sub(ms) };
    let acc_next = state.acc.add(e);
    let p = &dut.params;
    let u_raw = p
        .kp
        .mul(e)
        .add(p.ki.mul(acc_next))
        .add(p.kd.mul(e.sub(state.e_prev)));
    let clamped = u_raw > p.u_max || u_raw < p.u_min;
    let u = u_raw.clamp(p.u_min, p.u_max);
    if !clamped && !c.acc_stuck {
        state.acc = acc_next;
    }
    state.e_prev = e;
    Fx::from_word(u.to_word() | c.out_force_mask)
}

/// Periodic square wave setpoint between two cruise speeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub low_setpoint: f64,
    pub high_setpoint: f64,
    pub half_period: u64,
}

impl Default for Workload {
    fn default() -> Self {
        Workload { low_setpoint: 10.0, high_setpoint: 20.0, half_period: 3000 }
    }
}

impl Workload {
    pub fn setpoint_at(&self, tick: u64) -> Fx {
        if (tick / self.half_period) % 2 == 0 {
            Fx::from_f64(self.low_setpoint)
        } else {
            Fx::from_f64(self.high_setpoint)
        }
    }

    pub fn setpoint_at_f64(&self, tick: u64) -> f64 {
        self.setpoint_at(tick).to_f64()
    }
}

/// The controller module seen through its 32-bit interface, with enable and
/// reset line semantics: reset zeroes the integrator and previous-error state
/// on the next step, disable holds the last output.
#[derive(Debug, Clone)]
pub struct DutModule {
    pub state: PidState,
    pub iface: DutInterface,
}

impl DutModule {
    pub fn new() -> DutModule {
        DutModule {
            state: PidState::default(),
            iface: DutInterface { input: 0, output: 0, enable: true, reset: false },
        }
    }

    pub fn step(&mut self, dut: &EffectiveDut, setpoint: Fx, measured: Fx) -> Fx {
        self.iface.input = setpoint.to_word();
        if !self.iface.enable {
            return Fx::from_word(self.iface.output);
        }
        if self.iface.reset {
            self.state = PidState::default();
            self.iface.reset = false;
        }
        let u = pid_step(dut, &mut self.state, setpoint, measured);
        self.iface.output = u.to_word();
        u
    }
}

impl Default for DutModule {
    fn default() -> Self {
        DutModule::new()
    }
}

/// Double-precision twin of the fixed-point loop, same structure and
/// anti-windup rule, used to bound fixed-point drift.
#[derive(Debug, Clone)]
pub struct ReferenceLoop {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub a: f64,
    pub b: f64,
    pub v: f64,
    pub acc: f64,
    pub e_prev: f64,
}

impl ReferenceLoop {
    pub fn from_fixed(params: &PidParams, plant: &PlantModel) -> ReferenceLoop {
        ReferenceLoop {
            kp: params.kp.to_f64(),
            ki: params.ki.to_f64(),
            kd: params.kd.to_f64(),
            u_min: params.u_min.to_f64(),
            u_max: params.u_max.to_f64(),
            a: plant.a.to_f64(),
            b: plant.b.to_f64(),
            v: plant.v.to_f64(),
            acc: 0.0,
            e_prev: 0.0,
        }
    }

    /// Advance one tick; returns (actuation, speed).
    pub fn step(&mut self, setpoint: f64) -> (f64, f64) {
        let e = setpoint - self.v;
        let acc_next = self.acc + e;
        let u_raw = self.kp * e + self.ki * acc_next + self.kd * (e - self.e_prev);
        let clamped = u_raw > self.u_max || u_raw < self.u_min;
        let u = u_raw.clamp(self.u_min, self.u_max);
        if !clamped {
            self.acc = acc_next;
        }
        self.e_prev = e;
        self.v = self.a * self.v + self.b * u;
        (u, self.v)
    }
}
