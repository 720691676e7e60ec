//! Twin-track planar vehicle model with simplified magic-formula tires.
//!
//! Axis convention: body `x` points forward, body `y` points to the right and
//! yaw is positive clockwise seen from above (a right turn). Steering `delta`
//! is positive to the right. Following the controller literature this model
//! is built around, `v` is the *longitudinal* and `u` the *lateral* velocity.
//! Global coordinates use the same handedness: `psi` is measured from the
//! global X axis towards the global Y axis.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// kg m^2
    pub yaw_inertia: f64,
    /// CoG to front axle, m
    pub lf: f64,
    /// CoG to rear axle, m
    pub lr: f64,
    /// track width, m
    pub track: f64,
    /// wheel spin inertia, kg m^2
    pub wheel_inertia: f64,
    /// m
    pub wheel_radius: f64,
    /// motor turns per wheel turn
    pub gear_ratio: f64,
    /// m
    pub cg_height: f64,
    /// m^2
    pub drag_area: f64,
    /// kg m^-3
    pub air_density: f64,
    pub gravity: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 260.0,
            yaw_inertia: 60.0,
            lf: 0.83,
            lr: 0.7,
            track: 1.2,
            wheel_inertia: 0.23,
            wheel_radius: 0.23,
            gear_ratio: 4.0,
            cg_height: 0.30,
            drag_area: 1.0,
            air_density: 1.2,
            gravity: 9.81,
        }
    }
}

impl VehicleParams {
    pub fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }

    pub fn drag(&self, v: f64) -> f64 {
        0.5 * self.air_density * self.drag_area * v * v.abs()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("mass", self.mass),
            ("yaw_inertia", self.yaw_inertia),
            ("lf", self.lf),
            ("lr", self.lr),
            ("track", self.track),
            ("wheel_inertia", self.wheel_inertia),
            ("wheel_radius", self.wheel_radius),
            ("gravity", self.gravity),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::InvalidParam(format!("vehicle.{name} must be > 0")));
            }
        }
        if !(self.gear_ratio >= 1.0) {
            return Err(ModelError::InvalidParam("vehicle.gear_ratio must be >= 1".into()));
        }
        if !(self.cg_height >= 0.0 && self.drag_area >= 0.0 && self.air_density >= 0.0) {
            return Err(ModelError::InvalidParam("vehicle.cg_height, drag_area and air_density must be >= 0".into()));
        }
        Ok(())
    }
}

/// Pure-slip magic-formula coefficients for one axle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TireParams {
    pub mu: f64,
    pub bx: f64,
    pub cx: f64,
    pub by: f64,
    pub cy: f64,
}

impl Default for TireParams {
    fn default() -> Self {
        Self { mu: 1.4, bx: 12.0, cx: 1.6, by: 10.0, cy: 1.5 }
    }
}

impl TireParams {
    /// Linear-region cornering stiffness at load `fz`, N/rad.
    pub fn cornering_stiffness(&self, fz: f64) -> f64 {
        self.mu * fz * self.by * self.cy
    }

    fn validate(&self, axle: &str) -> Result<(), ModelError> {
        for (name, value) in [("mu", self.mu), ("bx", self.bx), ("cx", self.cx), ("by", self.by), ("cy", self.cy)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::InvalidParam(format!("tires.{axle}.{name} must be > 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tires {
    pub front: TireParams,
    pub rear: TireParams,
    /// Lower bound on the speed used to normalise slip ratio and slip angle.
    /// Regularises the tire model near standstill.
    pub slip_speed_floor: f64,
}

impl Default for Tires {
    fn default() -> Self {
        Self { front: TireParams::default(), rear: TireParams::default(), slip_speed_floor: 1.0 }
    }
}

impl Tires {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.front.validate("front")?;
        self.rear.validate("rear")?;
        if !(self.slip_speed_floor > 0.0) {
            return Err(ModelError::InvalidParam("tires.slip_speed_floor must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    /// longitudinal velocity
    pub v: f64,
    /// lateral velocity
    pub u: f64,
    pub gamma: f64,
    pub omega_rl: f64,
    pub omega_rr: f64,
}

impl VehicleState {
    pub fn body_slip_angle(&self) -> f64 {
        self.u.atan2(self.v)
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.psi, self.v, self.u, self.gamma, self.omega_rl, self.omega_rr]
            .iter()
            .all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TireForce {
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
}

/// Wheel order used throughout: front-left, front-right, rear-left, rear-right.
pub const FL: usize = 0;
pub const FR: usize = 1;
pub const RL: usize = 2;
pub const RR: usize = 3;

/// Combined-slip tire force. Pure-slip magic-formula curves are scaled
/// radially onto the friction circle `mu * fz` when their resultant exceeds it.
pub fn tire_force(lambda: f64, alpha: f64, fz: f64, params: &TireParams) -> Result<(f64, f64), ModelError> {
    if fz < 0.0 {
        return Err(ModelError::NegativeLoad(fz));
    }
    let peak = params.mu * fz;
    let fx0 = peak * (params.cx * (params.bx * lambda).atan()).sin();
    let fy0 = peak * (params.cy * (params.by * alpha).atan()).sin();
    let mag = fx0.hypot(fy0);
    if mag > peak && mag > 0.0 {
        let k = peak / mag;
        Ok((fx0 * k, fy0 * k))
    } else {
        Ok((fx0, fy0))
    }
}

/// Quasi-static normal loads `[fl, fr, rl, rr]` for body accelerations
/// `ax` (forward) and `ay` (rightward).
pub fn normal_loads(ax: f64, ay: f64, params: &VehicleParams) -> [f64; 4] {
    let l = params.wheelbase();
    let w = params.mass * params.gravity;
    let front_static = 0.5 * w * params.lr / l;
    let rear_static = 0.5 * w * params.lf / l;
    let long = params.mass * ax * params.cg_height / (2.0 * l);
    let lat = params.mass * ay * params.cg_height / (2.0 * params.track);
    // rightward acceleration loads the left (outer) wheels
    [
        (front_static - long + lat).max(0.0),
        (front_static - long - lat).max(0.0),
        (rear_static + long + lat).max(0.0),
        (rear_static + long - lat).max(0.0),
    ]
}

/// Body-frame position of each wheel contact patch.
pub fn wheel_positions(params: &VehicleParams) -> [(f64, f64); 4] {
    let hw = 0.5 * params.track;
    [(params.lf, -hw), (params.lf, hw), (-params.lr, -hw), (-params.lr, hw)]
}

/// Everything the tire layer produces for one state evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct WheelForces {
    pub tires: [TireForce; 4],
    /// slip ratio per wheel (front wheels roll freely)
    pub slip: [f64; 4],
    /// slip angle per wheel, positive angle gives positive (rightward) force
    pub alpha: [f64; 4],
    /// body-frame accelerations consistent with the forces, used for load transfer
    pub ax: f64,
    pub ay: f64,
    /// summed body-frame force and yaw moment
    pub fx_body: f64,
    pub fy_body: f64,
    pub mz: f64,
}

fn eval_tires(
    state: &VehicleState,
    delta: f64,
    loads: &[f64; 4],
    params: &VehicleParams,
    tires: &Tires,
) -> Result<WheelForces, ModelError> {
    let pos = wheel_positions(params);
    let omegas = [None, None, Some(state.omega_rl), Some(state.omega_rr)];
    let mut out = WheelForces::default();
    for i in 0..4 {
        let (px, py) = pos[i];
        let steer = if i < 2 { delta } else { 0.0 };
        let (s, c) = steer.sin_cos();
        // contact-point velocity in body axes
        let vx = state.v - state.gamma * py;
        let vy = state.u + state.gamma * px;
        let vxw = vx * c + vy * s;
        let vyw = -vx * s + vy * c;
        let floor = tires.slip_speed_floor;
        let alpha = -(vyw / vxw.abs().max(floor)).atan();
        let lambda = match omegas[i] {
            Some(omega) => {
                let vw = params.wheel_radius * omega;
                (vw - vxw) / vw.abs().max(vxw.abs()).max(floor)
            }
            None => 0.0,
        };
        let tp = if i < 2 { &tires.front } else { &tires.rear };
        let (fx, fy) = tire_force(lambda, alpha, loads[i], tp)?;
        let fxb = fx * c - fy * s;
        let fyb = fx * s + fy * c;
        out.tires[i] = TireForce { fx, fy, fz: loads[i] };
        out.slip[i] = lambda;
        out.alpha[i] = alpha;
        out.fx_body += fxb;
        out.fy_body += fyb;
        out.mz += px * fyb - py * fxb;
    }
    let drag = params.drag(state.v);
    out.ax = (out.fx_body - drag) / params.mass;
    out.ay = out.fy_body / params.mass;
    Ok(out)
}

/// Tire forces with load transfer resolved by fixed-point iteration on the
/// body accelerations (two passes from the static split).
pub fn wheel_forces(
    state: &VehicleState,
    delta: f64,
    params: &VehicleParams,
    tires: &Tires,
) -> Result<WheelForces, ModelError> {
    let mut ax = 0.0;
    let mut ay = 0.0;
    let mut forces = WheelForces::default();
    for _ in 0..3 {
        let loads = normal_loads(ax, ay, params);
        forces = eval_tires(state, delta, &loads, params, tires)?;
        ax = forces.ax;
        ay = forces.ay;
    }
    Ok(forces)
}

/// Rigid-body derivatives given already-evaluated tire forces. The wheel spin
/// entries are left at zero; callers fill them from their drive model.
pub fn body_derivatives(state: &VehicleState, forces: &WheelForces, params: &VehicleParams) -> VehicleState {
    let (sp, cp) = state.psi.sin_cos();
    VehicleState {
        x: state.v * cp - state.u * sp,
        y: state.v * sp + state.u * cp,
        psi: state.gamma,
        v: forces.ax + state.gamma * state.u,
        u: forces.ay - state.gamma * state.v,
        gamma: forces.mz / params.yaw_inertia,
        omega_rl: 0.0,
        omega_rr: 0.0,
    }
}

/// Full state derivative with rear wheel drive torques applied directly at
/// the wheels (`J_w * domega = T - r * Fx`).
pub fn vehicle_derivatives(
    state: &VehicleState,
    delta: f64,
    torque_rl: f64,
    torque_rr: f64,
    params: &VehicleParams,
    tires: &Tires,
) -> Result<VehicleState, ModelError> {
    let forces = wheel_forces(state, delta, params, tires)?;
    let mut d = body_derivatives(state, &forces, params);
    d.omega_rl = (torque_rl - params.wheel_radius * forces.tires[RL].fx) / params.wheel_inertia;
    d.omega_rr = (torque_rr - params.wheel_radius * forces.tires[RR].fx) / params.wheel_inertia;
    if d.is_finite() {
        Ok(d)
    } else {
        Err(ModelError::NonFinite("vehicle_derivatives"))
    }
}

/// Axle-level slip ratio from rear wheel speeds and longitudinal speed:
/// `(V_w - V) / V_w` with `V_w` the mean rear wheel surface speed.
/// Returns zero below `min_wheel_speed`.
pub fn axle_slip_ratio(state: &VehicleState, params: &VehicleParams, min_wheel_speed: f64) -> f64 {
    let vw = 0.5 * params.wheel_radius * (state.omega_rl + state.omega_rr);
    if vw <= min_wheel_speed {
        0.0
    } else {
        (vw - state.v) / vw
    }
}
