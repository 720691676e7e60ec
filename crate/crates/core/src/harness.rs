//! Closed-loop simulation: plant and motors integrated at a fixed step,
//! estimators and controllers updated once per step, every step logged.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::Vector2;

use crate::config::{ScenarioKind, SimConfig};
use crate::control::{compose_commands, slip_pid_step, yaw_pi_step, ControlParams, Demand, Pid, SlipLimiter};
use crate::error::{ConfigError, ModelError, SimError};
use crate::estimation::{desired_yaw_rate, lateral_forces, remove_drive_moment, SlipAngleObserver, StiffnessEstimate};
use crate::filter::{FilteredDerivative, LowPass};
use crate::fis::{Fis, FisOutput};
use crate::integrate::rk3_step;
use crate::metrics::{compute_metrics, Metrics};
use crate::motor::{load_torque, motor_derivatives, MotorState};
use crate::observers::{reaction_torque, DisturbanceObserver, NominalPlant, SlipEstimator};
use crate::plant::{axle_slip_ratio, body_derivatives, wheel_forces, VehicleState, WheelForces, FL, FR, RL, RR};
use crate::scenarios::{dlc_path, Driver, LanePath, ReferencePath, SpeedPolicy};

macro_rules! record {
    ($($(#[$doc:meta])* $field:ident),* $(,)?) => {
        /// One logged step. Column order of `states.csv` follows field order.
        #[derive(Debug, Clone, Copy, Default, PartialEq)]
        pub struct Record {
            $($(#[$doc])* pub $field: f64,)*
        }

        impl Record {
            pub const COLUMNS: &'static [&'static str] = &[$(stringify!($field)),*];

            pub fn values(&self) -> Vec<f64> {
                vec![$(self.$field),*]
            }

            pub fn from_values(v: &[f64]) -> Option<Self> {
                if v.len() != Self::COLUMNS.len() {
                    return None;
                }
                let mut it = v.iter().copied();
                Some(Self { $($field: it.next()?,)* })
            }
        }
    };
}

record!(
    t,
    x,
    y,
    psi,
    v,
    u,
    gamma,
    omega_rl,
    omega_rr,
    omega_m_l,
    current_l,
    omega_m_r,
    current_r,
    delta,
    throttle,
    /// axle slip ratio from the plant
    lambda_true,
    lambda_hat,
    /// vehicle speed reconstructed by the slip estimator
    v_hat,
    /// reaction torque of both motors from the tire forces, N m
    t_r_true,
    t_r_hat,
    beta,
    beta_hat,
    gamma_des,
    gamma_err,
    /// linear-region per-wheel cornering stiffness at the current loads
    cf_true,
    cr_true,
    cf_hat,
    cr_hat,
    v_corr_l,
    v_corr_r,
    /// yaw-moment request of the yaw-rate PI, N m
    n_z,
    dv_traction,
    v_cmd_l,
    v_cmd_r,
    lateral_error,
    /// 1 once the end of the reference path has been passed
    finished,
    /// 1 inside a cone lane of the lane change, else 0
    in_gate,
    lane_margin,
    /// largest tire force over its friction limit
    friction_use,
);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimLog {
    pub records: Vec<Record>,
}

impl SimLog {
    /// Time the vehicle passed the end of the reference path.
    pub fn completion_time(&self) -> Option<f64> {
        self.records.iter().find(|r| r.finished > 0.5).map(|r| r.t)
    }

    pub fn column(&self, f: impl Fn(&Record) -> f64) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", Record::COLUMNS.join(","))?;
        let mut line = String::new();
        for r in &self.records {
            line.clear();
            for (i, v) in r.values().iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                write!(line, "{v}").expect("writing to a string");
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv(r: impl BufRead) -> Result<Self, String> {
        let mut lines = r.lines();
        let header = lines.next().ok_or("empty states file")?.map_err(|e| e.to_string())?;
        if header.trim() != Record::COLUMNS.join(",") {
            return Err("states file header does not match the expected columns".into());
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| format!("line {}: {e}", i + 2))?;
            records.push(Record::from_values(&vals).ok_or_else(|| format!("line {}: wrong column count", i + 2))?);
        }
        Ok(Self { records })
    }
}

/// Integrated state: body plus speed and current of each rear motor.
const N_STATE: usize = 10;

fn pack(v: &VehicleState, m: &[MotorState; 2]) -> [f64; N_STATE] {
    [v.x, v.y, v.psi, v.v, v.u, v.gamma, m[0].omega_m, m[0].current, m[1].omega_m, m[1].current]
}

fn unpack(y: &[f64; N_STATE], gear: f64) -> (VehicleState, [MotorState; 2]) {
    let motors = [MotorState { omega_m: y[6], current: y[7] }, MotorState { omega_m: y[8], current: y[9] }];
    let vehicle = VehicleState {
        x: y[0],
        y: y[1],
        psi: y[2],
        v: y[3],
        u: y[4],
        gamma: y[5],
        omega_rl: y[6] / gear,
        omega_rr: y[8] / gear,
    };
    (vehicle, motors)
}

/// Everything that evolves during a run.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub cfg: SimConfig,
    pub step: usize,
    pub vehicle: VehicleState,
    pub motors: [MotorState; 2],
    pub path: ReferencePath,
    pub lane: Option<LanePath>,
    fis: Fis,
    driver: Driver,
    nominal: NominalPlant,
    dob: [DisturbanceObserver; 2],
    wheel_speed: FilteredDerivative,
    slip: SlipEstimator,
    rls: StiffnessEstimate,
    beta_obs: SlipAngleObserver,
    beta_rate: FilteredDerivative,
    gamma_rate: FilteredDerivative,
    fis_error: LowPass,
    yaw_pi: Pid,
    slip_lim: SlipLimiter,
    delta: f64,
    v_cmd: [f64; 2],
    diff_moment: f64,
    pub completion_time: Option<f64>,
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let vp = cfg.vehicle;
        let mp = cfg.motor;
        let inertia = mp.combined_inertia(vp.wheel_inertia, vp.gear_ratio);
        let nominal =
            NominalPlant { inertia, torque_constant: mp.torque_constant, viscous_friction: mp.viscous_friction };
        let (path, lane, policy, v0) = match cfg.sim.scenario {
            ScenarioKind::Track => {
                let track = cfg.build_track()?;
                (ReferencePath::from_track(&track), None, SpeedPolicy::Track, cfg.sim.initial_speed)
            }
            ScenarioKind::Dlc => {
                let lane = dlc_path(&cfg.dlc).map_err(ConfigError::Invalid)?;
                let speed = cfg.sim.speed_kmh / 3.6;
                let policy = SpeedPolicy::LaneChange { speed, release_x: lane.entry_gate() };
                (ReferencePath::from_lane(&lane), Some(lane), policy, speed)
            }
        };
        let omega0 = v0 * vp.gear_ratio / vp.wheel_radius;
        // motors start in equilibrium with the aerodynamic drag at the initial speed
        let torque0 = vp.wheel_radius * 0.5 * vp.drag(v0) / vp.gear_ratio;
        let current0 = if v0 > 0.0 {
            (torque0 + mp.viscous_friction * omega0 + mp.coulomb_friction) / mp.torque_constant
        } else {
            0.0
        };
        let motor0 = MotorState { omega_m: omega0, current: current0 };
        let v_cmd0 = if v0 > 0.0 { mp.resistance * current0 + mp.back_emf * omega0 } else { 0.0 };
        let vehicle = VehicleState {
            v: v0,
            omega_rl: omega0 / vp.gear_ratio,
            omega_rr: omega0 / vp.gear_ratio,
            ..Default::default()
        };
        let throttle_per_speed = mp.back_emf * vp.gear_ratio / (vp.wheel_radius * cfg.control.v_max);
        let driver = Driver::new(cfg.driver, policy, throttle_per_speed, vp.wheelbase());
        let q = cfg.observers.q_cutoff;
        let fc = cfg.estimation.filter_cutoff;
        Ok(Self {
            fis: Fis::new(&cfg.fis).map_err(ConfigError::Invalid)?,
            driver,
            nominal,
            dob: [DisturbanceObserver::settled(q, current0, omega0, &nominal); 2],
            wheel_speed: FilteredDerivative::settled(q, omega0),
            slip: SlipEstimator::new(0.0, cfg.observers.omega_min),
            rls: StiffnessEstimate::new(&cfg.estimation),
            beta_obs: SlipAngleObserver::new(cfg.estimation.poles),
            beta_rate: FilteredDerivative::settled(fc, 0.0),
            gamma_rate: FilteredDerivative::settled(fc, 0.0),
            fis_error: LowPass::settled(cfg.fis.yaw_error_cutoff, 0.0),
            yaw_pi: Pid::new(cfg.control.yaw_pi),
            slip_lim: SlipLimiter::new(cfg.control.slip_pid),
            delta: 0.0,
            v_cmd: [v_cmd0; 2],
            diff_moment: 0.0,
            completion_time: None,
            step: 0,
            vehicle,
            motors: [motor0; 2],
            path,
            lane,
            cfg,
        })
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.cfg.sim.dt
    }

    /// Number of controller steps the configured duration covers.
    pub fn total_steps(&self) -> usize {
        (self.cfg.sim.duration / self.cfg.sim.dt + 1e-9).floor() as usize
    }

    /// Run the controller at the current state, log it, then advance the
    /// plant by one step.
    pub fn advance(&mut self) -> Result<Record, SimError> {
        let record = self.control_step().map_err(|source| SimError::Numerical { step: self.step, source })?;
        self.integrate().map_err(|source| SimError::Numerical { step: self.step, source })?;
        self.step += 1;
        Ok(record)
    }

    fn control_step(&mut self) -> Result<Record, ModelError> {
        let cfg = &self.cfg;
        let vp = &cfg.vehicle;
        let dt = cfg.sim.dt;
        let t = self.time();

        // driver acts on what it sees of the vehicle
        let drive = self.driver.step(&self.vehicle, &self.path, dt);
        if drive.finished && self.completion_time.is_none() {
            self.completion_time = Some(t);
        }
        let throttle = if self.completion_time.is_some() { 0.0 } else { drive.throttle };
        let delta = drive.delta;
        self.delta = delta;

        // measurements: yaw rate, lateral acceleration, motor speeds and currents
        let truth = wheel_forces(&self.vehicle, delta, vp, &cfg.tires)?;
        let gamma = self.vehicle.gamma;
        let a_y = truth.ay;

        // reaction-torque observers
        let t_r_hat: [f64; 2] = std::array::from_fn(|i| {
            let t_d = self.dob[i].step(self.motors[i].current, self.motors[i].omega_m, dt, &self.nominal);
            reaction_torque(t_d, cfg.motor.coulomb_friction)
        });
        let t_r_sum = t_r_hat[0] + t_r_hat[1];
        let drive_force = |tr: f64| vp.gear_ratio * tr / vp.wheel_radius;
        self.diff_moment = 0.5 * vp.track * (drive_force(t_r_hat[0]) - drive_force(t_r_hat[1]));

        // slip estimator on the axle-mean motor speed
        let omega_mean = 0.5 * (self.motors[0].omega_m + self.motors[1].omega_m);
        let omega_prev = self.wheel_speed.value();
        let domega = self.wheel_speed.step(omega_mean, dt);
        let v_hat_prev = self.slip.speed_estimate(omega_prev, vp);
        let y_hat = lateral_forces(
            v_hat_prev,
            self.beta_rate.derivative,
            gamma,
            self.gamma_rate.derivative,
            delta,
            vp,
            cfg.estimation.v_min,
        );
        let front_drag = y_hat.map_or(0.0, |f| remove_drive_moment(f, self.diff_moment, vp).0 * delta.sin());
        let lateral_drag = -vp.mass * gamma * v_hat_prev * self.beta_obs.beta_hat.tan();
        self.slip.f_dr_hat = vp.drag(v_hat_prev) + front_drag + lateral_drag;
        let lambda_hat = self.slip.step(omega_prev, domega, t_r_sum, dt, vp);
        let v_hat = self.slip.speed_estimate(self.wheel_speed.value(), vp);

        // body slip observer then stiffness update
        let v_min = cfg.estimation.v_min;
        let theta = self.rls.theta;
        if v_hat > v_min {
            self.beta_obs.step(Vector2::new(gamma, a_y), Vector2::new(delta, self.diff_moment), &theta, v_hat, dt, vp);
        }
        self.beta_rate.step(self.beta_obs.beta_hat, dt);
        self.gamma_rate.step(gamma, dt);
        if let Some(forces) =
            lateral_forces(v_hat, self.beta_rate.derivative, gamma, self.gamma_rate.derivative, delta, vp, v_min)
        {
            let forces = remove_drive_moment(forces, self.diff_moment, vp);
            self.rls.step(forces, self.beta_obs.beta_hat, gamma, v_hat, delta, dt, vp, v_min);
        }
        let theta = self.rls.theta;

        // yaw reference
        let reference = desired_yaw_rate(v_hat.max(0.0), delta, &theta, vp);
        let gamma_err = gamma - reference.gamma_des;

        // integration layer and controllers
        let cp: &ControlParams = &cfg.control;
        let n_z = yaw_pi_step(&mut self.yaw_pi, gamma_err, dt);
        let (fis_out, dv, k_fis) = if cfg.sim.fis {
            let dv = slip_pid_step(&mut self.slip_lim, lambda_hat, cp.lambda_ref, dt);
            let e = self.fis_error.step(gamma_err, dt);
            (self.fis.evaluate(lambda_hat, e), dv, cp.k_fis)
        } else {
            (FisOutput::default(), 0.0, 0.0)
        };
        let back_emf = [cfg.motor.back_emf * self.motors[0].omega_m, cfg.motor.back_emf * self.motors[1].omega_m];
        let floor = if self.lane.is_some() && throttle == 0.0 {
            let f = cp.floor_fraction * cp.v_max;
            let emf = |i: usize| if cp.floor_tracks_back_emf { back_emf[i] } else { 0.0 };
            [f.max(emf(0)), f.max(emf(1))]
        } else if self.lane.is_none() && cp.track_coast_floor {
            back_emf
        } else {
            [0.0; 2]
        };
        let params = ControlParams { k_fis, ..*cp };
        let cmd = compose_commands(&Demand { throttle, delta, fis: fis_out, dv_traction: [dv; 2], floor }, &params, vp);
        self.v_cmd = [cmd.v_left, cmd.v_right];

        // ground truth for the log
        let lambda_true = axle_slip_ratio(&self.vehicle, vp, cfg.tires.slip_speed_floor);
        let t_r_true = vp.wheel_radius / vp.gear_ratio * (truth.tires[RL].fx + truth.tires[RR].fx);
        let stiff = |i: usize, j: usize, tp: &crate::plant::TireParams| {
            0.5 * (tp.cornering_stiffness(truth.tires[i].fz) + tp.cornering_stiffness(truth.tires[j].fz))
        };
        let (in_gate, lane_margin) =
            match self.lane.as_ref().and_then(|l| l.lane_margin(self.vehicle.x, self.vehicle.y)) {
                Some(m) => (1.0, m),
                None => (0.0, 0.0),
            };
        let m = &self.motors;
        let s = &self.vehicle;
        Ok(Record {
            t,
            x: s.x,
            y: s.y,
            psi: s.psi,
            v: s.v,
            u: s.u,
            gamma: s.gamma,
            omega_rl: s.omega_rl,
            omega_rr: s.omega_rr,
            omega_m_l: m[0].omega_m,
            current_l: m[0].current,
            omega_m_r: m[1].omega_m,
            current_r: m[1].current,
            delta,
            throttle,
            lambda_true,
            lambda_hat,
            v_hat,
            t_r_true,
            t_r_hat: t_r_sum,
            beta: s.body_slip_angle(),
            beta_hat: self.beta_obs.beta_hat,
            gamma_des: reference.gamma_des,
            gamma_err,
            cf_true: stiff(FL, FR, &cfg.tires.front),
            cr_true: stiff(RL, RR, &cfg.tires.rear),
            cf_hat: theta[0],
            cr_hat: theta[1],
            v_corr_l: fis_out.v_corr_l,
            v_corr_r: fis_out.v_corr_r,
            n_z,
            dv_traction: dv,
            v_cmd_l: cmd.v_left,
            v_cmd_r: cmd.v_right,
            lateral_error: drive.lateral_error,
            finished: if self.completion_time.is_some() { 1.0 } else { 0.0 },
            in_gate,
            lane_margin,
            friction_use: friction_use(&truth, &self.cfg),
        })
    }

    fn integrate(&mut self) -> Result<(), ModelError> {
        let cfg = &self.cfg;
        let n = cfg.sim.plant_substeps as usize;
        let h = cfg.sim.dt / n as f64;
        let gear = cfg.vehicle.gear_ratio;
        let inertia = self.nominal.inertia;
        let regen = cfg.observers.regenerative_drive;
        let (delta, v_cmd) = (self.delta, self.v_cmd);
        let mut y = pack(&self.vehicle, &self.motors);
        for k in 0..n {
            y = rk3_step(k as f64 * h, &y, h, |_, y| {
                let (vehicle, motors) = unpack(y, gear);
                let forces = wheel_forces(&vehicle, delta, &cfg.vehicle, &cfg.tires)?;
                let body = body_derivatives(&vehicle, &forces, &cfg.vehicle);
                let mut dy = pack(&body, &[MotorState::default(); 2]);
                for (i, wheel) in [RL, RR].into_iter().enumerate() {
                    let tl = load_torque(
                        motors[i].omega_m,
                        forces.tires[wheel].fx,
                        cfg.vehicle.wheel_radius,
                        gear,
                        cfg.motor.coulomb_friction,
                    );
                    let (dw, mut di) = motor_derivatives(&motors[i], v_cmd[i], tl, &cfg.motor, inertia);
                    // a one-quadrant drive cannot drive the current negative
                    if !regen && motors[i].current <= 0.0 && di < 0.0 {
                        di = 0.0;
                    }
                    dy[6 + 2 * i] = dw;
                    dy[7 + 2 * i] = di;
                }
                if dy.iter().all(|d| d.is_finite()) {
                    Ok(dy)
                } else {
                    Err(ModelError::NonFinite("plant derivatives"))
                }
            })?;
            if !regen {
                y[7] = y[7].max(0.0);
                y[9] = y[9].max(0.0);
            }
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(ModelError::NonFinite("plant state"));
        }
        let (vehicle, motors) = unpack(&y, gear);
        self.vehicle = vehicle;
        self.motors = motors;
        Ok(())
    }
}

fn friction_use(f: &WheelForces, cfg: &SimConfig) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, t) in f.tires.iter().enumerate() {
        let mu = if i < 2 { cfg.tires.front.mu } else { cfg.tires.rear.mu };
        let limit = mu * t.fz;
        let used = t.fx.hypot(t.fy);
        if limit > 0.0 {
            worst = worst.max(used / limit);
        } else if used > 0.0 {
            worst = f64::INFINITY;
        }
    }
    worst
}

pub fn run_scenario(cfg: &SimConfig) -> Result<SimLog, SimError> {
    let mut sim = Simulation::new(cfg.clone())?;
    let n = sim.total_steps();
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        records.push(sim.advance()?);
    }
    Ok(SimLog { records })
}

/// Write `states.csv` and `metrics.txt` into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, log: &SimLog, metrics: &Metrics) -> Result<(), SimError> {
    std::fs::create_dir_all(dir)?;
    let f = std::fs::File::create(dir.join("states.csv"))?;
    let mut w = std::io::BufWriter::new(f);
    log.write_csv(&mut w)?;
    w.flush()?;
    std::fs::write(dir.join("metrics.txt"), metrics.to_key_values())?;
    Ok(())
}

/// Run a configuration and write its outputs.
pub fn run_to_dir(cfg: &SimConfig, dir: &Path) -> Result<(SimLog, Metrics), SimError> {
    let log = run_scenario(cfg)?;
    let metrics = compute_metrics(&log);
    write_outputs(dir, &log, &metrics)?;
    Ok((log, metrics))
}
