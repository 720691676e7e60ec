//! Yaw-rate PI, one-sided slip PID, electronic-differential voltage split and
//! the stage that merges driver demand, traction cuts and fuzzy corrections.

use serde::{Deserialize, Serialize};

use crate::fis::FisOutput;
use crate::plant::VehicleParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    #[serde(default)]
    pub kd: f64,
    pub out_lo: f64,
    pub out_hi: f64,
}

impl PidGains {
    pub fn validate(&self, name: &str) -> Result<(), String> {
        if !(self.out_lo < self.out_hi) {
            return Err(format!("control.{name}: out_lo must be < out_hi"));
        }
        if [self.kp, self.ki, self.kd].iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(format!("control.{name}: gains must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Discrete PID with conditional-integration anti-windup: the integral is
/// not advanced on a step whose output saturates in the direction the error
/// is pushing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pid {
    pub gains: PidGains,
    pub integ: f64,
    pub prev_err: Option<f64>,
    /// bounds on `ki * integ`
    integ_lo: f64,
    integ_hi: f64,
    /// when false the integral is only bounded, never frozen
    conditional: bool,
}

impl Pid {
    pub fn new(gains: PidGains) -> Self {
        Self::with_integral_bounds(gains, gains.out_lo, gains.out_hi)
    }

    fn with_integral_bounds(gains: PidGains, lo: f64, hi: f64) -> Self {
        Self { gains, integ: 0.0, prev_err: None, integ_lo: lo, integ_hi: hi, conditional: true }
    }

    pub fn step(&mut self, err: f64, dt: f64) -> f64 {
        debug_assert!(dt > 0.0);
        let g = self.gains;
        let deriv = self.prev_err.map_or(0.0, |p| (err - p) / dt);
        self.prev_err = Some(err);
        let mut integ = self.integ + err * dt;
        if g.ki > 0.0 {
            integ = integ.clamp(self.integ_lo / g.ki, self.integ_hi / g.ki);
        }
        let raw = g.kp * err + g.ki * integ + g.kd * deriv;
        let winding_up = self.conditional && ((raw > g.out_hi && err > 0.0) || (raw < g.out_lo && err < 0.0));
        if winding_up {
            let held = g.kp * err + g.ki * self.integ + g.kd * deriv;
            held.clamp(g.out_lo, g.out_hi)
        } else {
            self.integ = integ;
            raw.clamp(g.out_lo, g.out_hi)
        }
    }
}

/// Yaw-rate loop: returns the corrective yaw moment request, N m.
pub fn yaw_pi_step(pid: &mut Pid, gamma_err: f64, dt: f64) -> f64 {
    pid.step(gamma_err, dt)
}

/// Slip limiter. Acts only against excess slip: its output and its integral
/// are never positive. Below the reference it outputs nothing while any
/// stored cut unwinds. The bound on the integral is its anti-windup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipLimiter {
    pub pid: Pid,
}

impl SlipLimiter {
    pub fn new(gains: PidGains) -> Self {
        let hi = gains.out_hi.min(0.0);
        let mut pid = Pid::with_integral_bounds(PidGains { out_hi: hi, ..gains }, gains.out_lo, 0.0);
        pid.conditional = false;
        Self { pid }
    }
}

/// Voltage adjustment (<= 0) from the slip error `lambda_ref - lambda_hat`;
/// exactly zero at or below the reference.
pub fn slip_pid_step(lim: &mut SlipLimiter, lambda_hat: f64, lambda_ref: f64, dt: f64) -> f64 {
    let out = lim.pid.step(lambda_ref - lambda_hat, dt).min(0.0);
    if lambda_hat <= lambda_ref {
        0.0
    } else {
        out
    }
}

/// Left/right voltages of an electronic differential. With turning radius
/// `R = L / tan(delta)` the wheels sit at `R + w/2` and `R - w/2`, so each
/// side gets `V (1 +- w tan(delta) / (2 L))`. Written in terms of
/// `tan(delta)` the straight-ahead case needs no special handling.
pub fn differential_split(v_cmd: f64, delta: f64, params: &VehicleParams) -> (f64, f64) {
    let d = v_cmd * params.track * delta.tan() / (2.0 * params.wheelbase());
    (v_cmd + d, v_cmd - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionMode {
    /// `V_i (1 + k v_corr_i)`
    Multiplicative,
    /// `V_i + k v_corr_i V_max`
    Additive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCommand {
    pub v_left: f64,
    pub v_right: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlParams {
    pub v_max: f64,
    pub lambda_ref: f64,
    pub k_fis: f64,
    pub correction_mode: CorrectionMode,
    #[serde(deserialize_with = "yaw_pi_gains")]
    pub yaw_pi: PidGains,
    #[serde(deserialize_with = "slip_pid_gains")]
    pub slip_pid: PidGains,
    /// zero-throttle floor as a fraction of `v_max` (double lane change only)
    pub floor_fraction: f64,
    /// raise the floor to each motor's back-EMF so it coasts rather than brakes
    pub floor_tracks_back_emf: bool,
    /// on the track, hold each command at least at its motor's back-EMF
    pub track_coast_floor: bool,
}

const YAW_PI: PidGains = PidGains { kp: 200.0, ki: 50.0, kd: 0.0, out_lo: -2000.0, out_hi: 2000.0 };
const SLIP_PID: PidGains = PidGains { kp: 20.0, ki: 40.0, kd: 0.0, out_lo: -48.0, out_hi: 0.0 };

/// Gain table where every key may be omitted.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialGains {
    kp: Option<f64>,
    ki: Option<f64>,
    kd: Option<f64>,
    out_lo: Option<f64>,
    out_hi: Option<f64>,
}

impl PartialGains {
    fn over(self, d: PidGains) -> PidGains {
        PidGains {
            kp: self.kp.unwrap_or(d.kp),
            ki: self.ki.unwrap_or(d.ki),
            kd: self.kd.unwrap_or(d.kd),
            out_lo: self.out_lo.unwrap_or(d.out_lo),
            out_hi: self.out_hi.unwrap_or(d.out_hi),
        }
    }
}

fn yaw_pi_gains<'de, D: serde::Deserializer<'de>>(d: D) -> Result<PidGains, D::Error> {
    Ok(PartialGains::deserialize(d)?.over(YAW_PI))
}

fn slip_pid_gains<'de, D: serde::Deserializer<'de>>(d: D) -> Result<PidGains, D::Error> {
    Ok(PartialGains::deserialize(d)?.over(SLIP_PID))
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            v_max: 48.0,
            lambda_ref: 0.07,
            k_fis: 0.17,
            correction_mode: CorrectionMode::Multiplicative,
            yaw_pi: YAW_PI,
            slip_pid: SLIP_PID,
            floor_fraction: 0.05,
            floor_tracks_back_emf: true,
            track_coast_floor: true,
        }
    }
}

impl ControlParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.v_max > 0.0) {
            return Err("control.v_max must be > 0".into());
        }
        if !(self.lambda_ref > 0.0 && self.lambda_ref < 1.0) {
            return Err("control.lambda_ref must lie in (0, 1)".into());
        }
        if !(self.k_fis >= 0.0 && self.k_fis.is_finite()) {
            return Err("control.k_fis must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.floor_fraction) {
            return Err("control.floor_fraction must lie in [0, 1]".into());
        }
        self.yaw_pi.validate("yaw_pi")?;
        self.slip_pid.validate("slip_pid")?;
        if self.slip_pid.out_lo >= 0.0 {
            return Err("control.slip_pid.out_lo must be < 0".into());
        }
        Ok(())
    }
}

/// Inputs of the final command stage besides the controller parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Demand {
    /// driver throttle in `[0, 1]`
    pub throttle: f64,
    pub delta: f64,
    pub fis: FisOutput,
    /// traction cuts `[left, right]`, V (<= 0)
    pub dv_traction: [f64; 2],
    /// per-side lower bound on the split voltage, V
    pub floor: [f64; 2],
}

pub fn compose_commands(d: &Demand, p: &ControlParams, vehicle: &VehicleParams) -> ControlCommand {
    let base = d.throttle.clamp(0.0, 1.0) * p.v_max;
    let (l, r) = differential_split(base, d.delta, vehicle);
    let correct = |v: f64, floor: f64, corr: f64, dv: f64| {
        let v = v.max(floor);
        let v = match p.correction_mode {
            CorrectionMode::Multiplicative => v * (1.0 + p.k_fis * corr),
            CorrectionMode::Additive => v + p.k_fis * corr * p.v_max,
        };
        (v + dv).clamp(0.0, p.v_max)
    };
    ControlCommand {
        v_left: correct(l, d.floor[0], d.fis.v_corr_l, d.dv_traction[0]),
        v_right: correct(r, d.floor[1], d.fis.v_corr_r, d.dv_traction[1]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gains(kp: f64, ki: f64, kd: f64) -> PidGains {
        PidGains { kp, ki, kd, out_lo: -100.0, out_hi: 100.0 }
    }

    fn demand(throttle: f64, delta: f64, l: f64, r: f64) -> Demand {
        Demand { throttle, delta, fis: FisOutput { v_corr_l: l, v_corr_r: r }, dv_traction: [0.0; 2], floor: [0.0; 2] }
    }

    #[test]
    fn straight_split_is_even() {
        assert_eq!(differential_split(37.5, 0.0, &VehicleParams::default()), (37.5, 37.5));
    }

    #[test]
    fn split_hand_values() {
        let p = VehicleParams::default();
        let r = p.wheelbase() / 0.1f64.tan();
        assert!((r - 15.249).abs() < 1e-3);
        let (l, rr) = differential_split(100.0, 0.1, &p);
        let oracle_l = 100.0 * (r + 0.6) / r;
        let oracle_r = 100.0 * (r - 0.6) / r;
        assert!((l - oracle_l).abs() < 1e-9 && (rr - oracle_r).abs() < 1e-9);
        assert!((l - 103.93).abs() < 5e-3 && (rr - 96.07).abs() < 5e-3);
    }

    #[test]
    fn pi_zero_error_zero_output() {
        let mut pid = Pid::new(gains(200.0, 50.0, 0.0));
        assert_eq!(yaw_pi_step(&mut pid, 0.0, 0.005), 0.0);
    }

    #[test]
    fn pi_constant_error_closed_form() {
        let (kp, ki, e, dt) = (3.0, 2.0, 0.4, 0.01);
        let mut pid = Pid::new(gains(kp, ki, 0.0));
        for n in 1..=50 {
            let out = pid.step(e, dt);
            let expect = kp * e + ki * e * n as f64 * dt;
            assert!((out - expect).abs() < 1e-12, "{n}");
        }
    }

    #[test]
    fn saturation_freezes_integral() {
        let mut pid = Pid::new(PidGains { kp: 10.0, ki: 5.0, kd: 0.0, out_lo: -1.0, out_hi: 1.0 });
        let a = pid.step(1.0, 0.01);
        let integ = pid.integ;
        let b = pid.step(1.0, 0.01);
        assert_eq!(a, 1.0);
        assert_eq!(a, b);
        assert_eq!(pid.integ, integ);
        // reversing the error is allowed to integrate immediately
        pid.step(-0.01, 0.01);
        assert!(pid.integ < integ);
    }

    #[test]
    fn integral_respects_output_bounds() {
        let mut pid = Pid::new(PidGains { kp: 0.0, ki: 5.0, kd: 0.0, out_lo: -1.0, out_hi: 1.0 });
        for _ in 0..1000 {
            pid.step(0.3, 0.01);
        }
        assert!(pid.gains.ki * pid.integ <= 1.0 + 1e-12);
    }

    #[test]
    fn slip_at_reference_no_action() {
        let mut lim = SlipLimiter::new(PidGains { kp: 50.0, ki: 10.0, kd: 0.0, out_lo: -48.0, out_hi: 0.0 });
        assert_eq!(slip_pid_step(&mut lim, 0.1, 0.1, 0.005), 0.0);
    }

    #[test]
    fn slip_excess_proportional_cut() {
        let mut lim = SlipLimiter::new(PidGains { kp: 50.0, ki: 0.0, kd: 0.0, out_lo: -48.0, out_hi: 0.0 });
        let dv = slip_pid_step(&mut lim, 0.2, 0.1, 0.005);
        assert!((dv + 5.0).abs() < 1e-12, "{dv}");
    }

    #[test]
    fn slip_below_reference_is_ignored() {
        let mut lim = SlipLimiter::new(PidGains { kp: 50.0, ki: 10.0, kd: 0.0, out_lo: -48.0, out_hi: 0.0 });
        let before = lim.pid.integ;
        assert_eq!(slip_pid_step(&mut lim, 0.02, 0.1, 0.005), 0.0);
        assert_eq!(lim.pid.integ, before);
    }

    #[test]
    fn stored_cut_unwinds_below_reference() {
        let mut lim = SlipLimiter::new(PidGains { kp: 50.0, ki: 100.0, kd: 0.0, out_lo: -48.0, out_hi: 0.0 });
        for _ in 0..20 {
            slip_pid_step(&mut lim, 0.3, 0.1, 0.005);
        }
        let stored = lim.pid.integ;
        assert!(stored < 0.0);
        assert_eq!(slip_pid_step(&mut lim, 0.05, 0.1, 0.005), 0.0);
        assert!(lim.pid.integ > stored && lim.pid.integ <= 0.0);
    }

    #[test]
    fn zero_throttle_zero_command_without_floor() {
        let c = compose_commands(&demand(0.0, 0.05, 0.8, -0.8), &ControlParams::default(), &VehicleParams::default());
        assert_eq!((c.v_left, c.v_right), (0.0, 0.0));
    }

    #[test]
    fn floor_lets_corrections_act_at_zero_throttle() {
        let mut d = demand(0.0, 0.0, 0.5, -0.5);
        d.floor = [10.0, 10.0];
        let c = compose_commands(&d, &ControlParams::default(), &VehicleParams::default());
        assert!(c.v_left > 10.0 && c.v_right < 10.0);
    }

    #[test]
    fn disabled_corrections_give_pure_split() {
        let p = ControlParams { k_fis: 0.0, ..ControlParams::default() };
        let v = VehicleParams::default();
        let c = compose_commands(&demand(0.5, 0.08, 0.9, -0.9), &p, &v);
        let (l, r) = differential_split(24.0, 0.08, &v);
        assert_eq!((c.v_left, c.v_right), (l, r));
    }

    #[test]
    fn multiplicative_correction_difference() {
        let p = ControlParams { k_fis: 0.4, v_max: 100.0, ..ControlParams::default() };
        let c = compose_commands(&demand(0.4, 0.0, 0.5, -0.5), &p, &VehicleParams::default());
        assert!((c.v_left - 48.0).abs() < 1e-12 && (c.v_right - 32.0).abs() < 1e-12);
        assert!((c.v_left - c.v_right - 16.0).abs() < 1e-12);
        let p = ControlParams { k_fis: 0.4, v_max: 45.0, ..ControlParams::default() };
        let c = compose_commands(&demand(40.0 / 45.0, 0.0, 0.5, -0.5), &p, &VehicleParams::default());
        assert_eq!(c.v_left, 45.0);
    }

    #[test]
    fn additive_mode_scales_with_v_max() {
        let p = ControlParams { k_fis: 0.25, correction_mode: CorrectionMode::Additive, ..ControlParams::default() };
        let c = compose_commands(&demand(0.5, 0.0, 0.5, 0.0), &p, &VehicleParams::default());
        assert!((c.v_left - (24.0 + 0.125 * 48.0)).abs() < 1e-12);
        assert_eq!(c.v_right, 24.0);
    }

    proptest! {
        #[test]
        fn split_preserves_mean(v in 0.0f64..100.0, delta in -1.2f64..1.2) {
            let (l, r) = differential_split(v, delta, &VehicleParams::default());
            prop_assert!((l + r - 2.0 * v).abs() <= 4.0 * f64::EPSILON * v.max(1.0) * (1.0 + delta.tan().abs()));
        }

        #[test]
        fn commands_within_bounds(
            t in -0.5f64..1.5, delta in -0.5f64..0.5,
            l in -1.0f64..1.0, r in -1.0f64..1.0,
            dvl in -60.0f64..0.0, dvr in -60.0f64..0.0,
            k in 0.0f64..2.0,
        ) {
            let p = ControlParams { k_fis: k, ..ControlParams::default() };
            let mut d = demand(t, delta, l, r);
            d.dv_traction = [dvl, dvr];
            let c = compose_commands(&d, &p, &VehicleParams::default());
            prop_assert!((0.0..=p.v_max).contains(&c.v_left));
            prop_assert!((0.0..=p.v_max).contains(&c.v_right));
        }
    }
}
