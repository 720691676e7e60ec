use std::f64::consts::PI;

use edtsc::config::{ScenarioKind, SimConfig};
use edtsc::harness::run_scenario;
use edtsc::metrics::pearson;
use edtsc::observers::{DisturbanceObserver, NominalPlant};

/// Yaw rate above the reference must shift voltage to the right motor, which
/// in this frame turns the car back.
#[test]
fn fis_corrections_oppose_the_yaw_error() {
    let mut cfg = SimConfig::default();
    cfg.sim.scenario = ScenarioKind::Track;
    cfg.sim.duration = 22.0;
    let log = run_scenario(&cfg).unwrap();
    let (err, split): (Vec<f64>, Vec<f64>) =
        log.records.iter().filter(|r| r.v_corr_l != r.v_corr_r).map(|r| (r.gamma_err, r.v_corr_l - r.v_corr_r)).unzip();
    assert!(err.len() > 1000, "{}", err.len());
    let c = pearson(&err, &split).unwrap();
    assert!(c < -0.5, "{c}");
}

struct Chirp {
    f0: f64,
    rate: f64,
}

impl Chirp {
    fn phase(&self, t: f64) -> f64 {
        2.0 * PI * (self.f0 * t + 0.5 * self.rate * t * t)
    }
    fn omega(&self, t: f64) -> f64 {
        100.0 + 20.0 * self.phase(t).sin()
    }
    fn domega(&self, t: f64) -> f64 {
        20.0 * self.phase(t).cos() * 2.0 * PI * (self.f0 + self.rate * t)
    }
    fn current(&self, t: f64) -> f64 {
        10.0 + 3.0 * (0.7 * self.phase(t)).cos()
    }
}

/// `Q [Kt I - Kf w - J w']` with the analytic speed derivative, integrated
/// finely with RK4 and sampled every `dt`.
fn derivative_form(chirp: &Chirp, p: &NominalPlant, wc: f64, dt: f64, n: usize) -> Vec<f64> {
    let u = |t: f64| {
        p.torque_constant * chirp.current(t) - p.viscous_friction * chirp.omega(t) - p.inertia * chirp.domega(t)
    };
    let f = |t: f64, z: f64| wc * (u(t) - z);
    let sub = 100;
    let h = dt / sub as f64;
    let mut z = 0.0;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        for j in 0..sub {
            let t = k as f64 * dt + j as f64 * h;
            let k1 = f(t, z);
            let k2 = f(t + 0.5 * h, z + 0.5 * h * k1);
            let k3 = f(t + 0.5 * h, z + 0.5 * h * k2);
            let k4 = f(t + h, z + h * k3);
            z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out.push(z);
    }
    out
}

fn worst_gap(dt: f64) -> f64 {
    let plant = NominalPlant { inertia: 0.026975, torque_constant: 0.5, viscous_friction: 0.01 };
    let chirp = Chirp { f0: 1.0, rate: 20.0 };
    let wc = 50.0;
    let n = (1.0 / dt) as usize;
    let reference = derivative_form(&chirp, &plant, wc, dt, n);
    let mut obs = DisturbanceObserver::new(wc);
    obs.step(chirp.current(0.0), chirp.omega(0.0), dt, &plant);
    // skip the first few time constants, where the two start-ups differ
    let settle = (5.0 / wc / dt) as usize;
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (k, r) in reference.iter().enumerate() {
        let t = (k + 1) as f64 * dt;
        let est = obs.step(chirp.current(t), chirp.omega(t), dt, &plant);
        if k >= settle {
            worst = worst.max((est - r).abs());
            scale = scale.max(r.abs());
        }
    }
    worst / scale
}

#[test]
fn derivative_free_observer_matches_derivative_form_on_a_chirp() {
    let coarse = worst_gap(1e-3);
    let fine = worst_gap(1e-4);
    assert!(coarse < 1e-2, "{coarse}");
    assert!(fine < 1e-3, "{fine}");
    assert!(fine < coarse / 5.0, "{fine} vs {coarse}");
}
