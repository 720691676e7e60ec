//! Simulation configuration: one TOML table per module, every field optional
//! with the built-in default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::ControlParams;
use crate::error::ConfigError;
use crate::estimation::EstimationParams;
use crate::fis::{Fis, FisParams};
use crate::motor::MotorParams;
use crate::plant::{Tires, VehicleParams};
use crate::scenarios::{dlc_path, load_track, DlcGeometry, DriverParams, SyntheticTrack, Track};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Track,
    Dlc,
}

impl std::str::FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "track" => Ok(ScenarioKind::Track),
            "dlc" => Ok(ScenarioKind::Dlc),
            other => Err(format!("unknown scenario {other:?} (expected track or dlc)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub scenario: ScenarioKind,
    /// test speed of the double lane change, km/h
    pub speed_kmh: f64,
    pub fis: bool,
    /// controller and logging step, s
    pub dt: f64,
    /// simulated time, s
    pub duration: f64,
    /// plant integration steps per controller step
    pub plant_substeps: u32,
    /// initial forward speed on the track, m/s
    pub initial_speed: f64,
    pub seed: u64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::Track,
            speed_kmh: 40.0,
            fis: true,
            dt: 0.005,
            duration: 30.0,
            plant_substeps: 10,
            initial_speed: 5.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObserverParams {
    /// Q-filter cutoff of the reaction-torque observer, rad/s
    pub q_cutoff: f64,
    /// slip estimation holds below this motor speed, rad/s
    pub omega_min: f64,
    /// the motor drive can push current back into the supply
    pub regenerative_drive: bool,
}

impl Default for ObserverParams {
    fn default() -> Self {
        Self { q_cutoff: 300.0, omega_min: 20.0, regenerative_drive: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct TrackSection {
    /// curvature CSV; the synthetic segment is used when absent
    pub file: Option<PathBuf>,
    pub synthetic: SyntheticTrack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub sim: SimSection,
    pub vehicle: VehicleParams,
    pub tires: Tires,
    pub motor: MotorParams,
    pub observers: ObserverParams,
    pub estimation: EstimationParams,
    pub fis: FisParams,
    pub control: ControlParams,
    pub driver: DriverParams,
    pub track: TrackSection,
    pub dlc: DlcGeometry,
}

fn read_error(path: &Path, source: std::io::Error) -> ConfigError {
    ConfigError::Io { path: path.display().to_string(), source }
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative track paths are resolved against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| read_error(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(file), Some(dir)) = (cfg.track.file.as_ref(), path.parent()) {
            if file.is_relative() {
                cfg.track.file = Some(dir.join(file));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.sim;
        if !(s.dt > 0.0 && s.dt.is_finite()) {
            return Err(invalid("sim.dt must be > 0"));
        }
        if !(s.duration >= 0.0 && s.duration.is_finite()) {
            return Err(invalid("sim.duration must be >= 0"));
        }
        if s.plant_substeps == 0 {
            return Err(invalid("sim.plant_substeps must be >= 1"));
        }
        if s.scenario == ScenarioKind::Dlc && !(s.speed_kmh > 0.0 && s.speed_kmh.is_finite()) {
            return Err(invalid("sim.speed_kmh must be > 0 for the double lane change"));
        }
        if !(s.initial_speed >= 0.0 && s.initial_speed.is_finite()) {
            return Err(invalid("sim.initial_speed must be >= 0"));
        }
        let o = &self.observers;
        if !(o.q_cutoff > 0.0 && o.omega_min > 0.0) {
            return Err(invalid("observers.q_cutoff and observers.omega_min must be > 0"));
        }
        if s.dt * o.q_cutoff >= 2.0 || s.dt * self.estimation.filter_cutoff >= 2.0 {
            return Err(invalid("sim.dt times the filter cutoffs must stay below 2"));
        }
        self.vehicle.validate().map_err(|e| invalid(e.to_string()))?;
        self.tires.validate().map_err(|e| invalid(e.to_string()))?;
        self.motor.validate().map_err(|e| invalid(e.to_string()))?;
        self.estimation.validate().map_err(invalid)?;
        Fis::new(&self.fis).map_err(invalid)?;
        self.control.validate().map_err(invalid)?;
        self.driver.validate().map_err(invalid)?;
        dlc_path(&self.dlc).map_err(invalid)?;
        Ok(())
    }

    /// The track selected by the `[track]` table.
    pub fn build_track(&self) -> Result<Track, ConfigError> {
        match &self.track.file {
            Some(path) => {
                let f = std::fs::File::open(path).map_err(|e| read_error(path, e))?;
                Ok(load_track(std::io::BufReader::new(f))?)
            }
            None => Ok(self.track.synthetic.build()?),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}
