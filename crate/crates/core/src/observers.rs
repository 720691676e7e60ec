//! Reaction-torque observer and the slip-ratio estimator built on it.
//!
//! The disturbance observer never differentiates the speed signal. Since
//! `Q(s) s J = J wc (1 - Q(s))`, the estimate
//! `T_D = Q [Kt I - Kf w] - J wc (w - Q w)`
//! equals `Q (Kt I - Kf w - s J w)` exactly in the Laplace domain.

use serde::{Deserialize, Serialize};

use crate::filter::LowPass;
use crate::plant::VehicleParams;

/// Nominal velocity dynamics `Jn w' = Ktn I - Kfn w - T_D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NominalPlant {
    pub inertia: f64,
    pub torque_constant: f64,
    pub viscous_friction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceObserver {
    pub omega_c: f64,
    drive: LowPass,
    speed: LowPass,
    pub t_d_hat: f64,
}

impl DisturbanceObserver {
    pub fn new(omega_c: f64) -> Self {
        Self { omega_c, drive: LowPass::new(omega_c), speed: LowPass::new(omega_c), t_d_hat: 0.0 }
    }

    /// Observer already converged on a constant operating point.
    pub fn settled(omega_c: f64, current: f64, omega_m: f64, plant: &NominalPlant) -> Self {
        let drive = plant.torque_constant * current - plant.viscous_friction * omega_m;
        Self {
            omega_c,
            drive: LowPass::settled(omega_c, drive),
            speed: LowPass::settled(omega_c, omega_m),
            t_d_hat: drive,
        }
    }

    /// Low-pass filtered motor speed `Q w`.
    pub fn filtered_speed(&self) -> f64 {
        self.speed.state
    }

    pub fn step(&mut self, current: f64, omega_m: f64, dt: f64, plant: &NominalPlant) -> f64 {
        debug_assert!(dt > 0.0 && dt * self.omega_c < 2.0);
        if self.speed.is_fresh() {
            // no speed history yet: do not read the first sample as a jump
            self.speed = LowPass::settled(self.omega_c, omega_m);
        }
        let drive = self.drive.step(plant.torque_constant * current - plant.viscous_friction * omega_m, dt);
        let speed = self.speed.step(omega_m, dt);
        self.t_d_hat = drive - plant.inertia * self.omega_c * (omega_m - speed);
        self.t_d_hat
    }
}

/// Load torque minus Coulomb friction.
pub fn reaction_torque(t_d_hat: f64, coulomb_friction: f64) -> f64 {
    t_d_hat - coulomb_friction
}

/// Slip-ratio estimator driven by motor speed and estimated reaction torque.
///
/// Differentiating `lambda = (V_w - V) / V_w` with `V_w = r w_m / G` and
/// `M V' = F_d - F_dr`, `F_d = G T_R / r`, gives
///
/// `lambda' = (1 - lambda) w_m'/w_m - G (F_d - F_dr) / (M r w_m)`.
///
/// The homogeneous term is integrated exactly over the step (through the
/// ratio `w_m / (w_m + w_m' dt)`), the forcing term explicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipEstimator {
    pub lambda_hat: f64,
    /// driving resistance currently assumed by the estimator, N
    pub f_dr_hat: f64,
    /// below this motor speed the estimate is held
    pub omega_min: f64,
}

pub const MAX_SLIP_ESTIMATE: f64 = 0.999;

impl SlipEstimator {
    pub fn new(lambda0: f64, omega_min: f64) -> Self {
        Self { lambda_hat: lambda0.clamp(0.0, MAX_SLIP_ESTIMATE), f_dr_hat: 0.0, omega_min }
    }

    /// Vehicle speed implied by the current slip estimate and motor speed.
    pub fn speed_estimate(&self, omega_m: f64, params: &VehicleParams) -> f64 {
        (1.0 - self.lambda_hat) * params.wheel_radius * omega_m / params.gear_ratio
    }

    /// `t_r_hat` is the reaction torque of all motors driving the mass `M`
    /// (sum over the axle for the axle-level estimate).
    pub fn step(&mut self, omega_m: f64, domega_m: f64, t_r_hat: f64, dt: f64, params: &VehicleParams) -> f64 {
        debug_assert!(dt > 0.0);
        let next = omega_m + domega_m * dt;
        if omega_m <= self.omega_min || next <= self.omega_min {
            return self.lambda_hat;
        }
        let drive_force = params.gear_ratio * t_r_hat / params.wheel_radius;
        let wheel_speed_next = params.wheel_radius * next / params.gear_ratio;
        let lambda = 1.0
            - (1.0 - self.lambda_hat) * omega_m / next
            - dt * (drive_force - self.f_dr_hat) / (params.mass * wheel_speed_next);
        self.lambda_hat = if lambda.is_finite() { lambda.clamp(0.0, MAX_SLIP_ESTIMATE) } else { self.lambda_hat };
        self.lambda_hat
    }
}
