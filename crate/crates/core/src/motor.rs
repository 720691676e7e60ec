//! DC-equivalent drive motor: `J w' = Kt I - Kf w - T_L`, `L I' = -R I - Kb w + V`.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotorParams {
    /// rotor inertia, kg m^2
    pub rotor_inertia: f64,
    /// N m / A
    pub torque_constant: f64,
    /// viscous friction, N m s / rad
    pub viscous_friction: f64,
    /// back-EMF constant, V s / rad
    pub back_emf: f64,
    /// winding resistance, ohm
    pub resistance: f64,
    /// winding inductance, H
    pub inductance: f64,
    /// Coulomb friction, N m
    pub coulomb_friction: f64,
    /// Recorded for completeness; the DC-equivalent model does not use it.
    pub pole_pairs: u32,
}

impl Default for MotorParams {
    fn default() -> Self {
        Self {
            rotor_inertia: 1.26e-2,
            torque_constant: 0.5,
            viscous_friction: 0.01,
            back_emf: 0.04,
            resistance: 7.0e-3,
            inductance: 7.6e-5,
            coulomb_friction: 0.5,
            pole_pairs: 10,
        }
    }
}

impl MotorParams {
    /// Rotor plus wheel inertia referred to the motor shaft.
    pub fn combined_inertia(&self, wheel_inertia: f64, gear_ratio: f64) -> f64 {
        self.rotor_inertia + wheel_inertia / (gear_ratio * gear_ratio)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in [
            ("rotor_inertia", self.rotor_inertia),
            ("torque_constant", self.torque_constant),
            ("viscous_friction", self.viscous_friction),
            ("back_emf", self.back_emf),
            ("resistance", self.resistance),
            ("inductance", self.inductance),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::InvalidParam(format!("motor.{name} must be > 0")));
            }
        }
        if !(self.coulomb_friction >= 0.0) {
            return Err(ModelError::InvalidParam("motor.coulomb_friction must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MotorState {
    pub omega_m: f64,
    pub current: f64,
}

/// Returns `(d omega_m / dt, d current / dt)`. `inertia` is the combined
/// inertia seen by the shaft.
pub fn motor_derivatives(
    state: &MotorState,
    v_cmd: f64,
    load_torque: f64,
    params: &MotorParams,
    inertia: f64,
) -> (f64, f64) {
    let domega =
        (params.torque_constant * state.current - params.viscous_friction * state.omega_m - load_torque) / inertia;
    let dcurrent = (-params.resistance * state.current - params.back_emf * state.omega_m + v_cmd) / params.inductance;
    (domega, dcurrent)
}

/// Coulomb friction with a narrow linear band around zero speed.
pub fn coulomb_torque(omega_m: f64, f_c: f64) -> f64 {
    const BAND: f64 = 1e-3;
    f_c * (omega_m / BAND).clamp(-1.0, 1.0)
}

/// Shaft load torque: Coulomb friction plus the tire force referred through the gear.
pub fn load_torque(omega_m: f64, fx: f64, wheel_radius: f64, gear_ratio: f64, f_c: f64) -> f64 {
    coulomb_torque(omega_m, f_c) + wheel_radius * fx / gear_ratio
}

/// Motor speed at which back-EMF balances `v_cmd` with zero current.
pub fn no_load_speed(v_cmd: f64, params: &MotorParams) -> f64 {
    v_cmd / params.back_emf
}
