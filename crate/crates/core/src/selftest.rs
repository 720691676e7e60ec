//! Randomised property checks behind `edtsc selftest`. Every check compares a
//! library routine against a brute-force or textbook oracle and reports the
//! worst deviation it saw.

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::differential_split;
use crate::estimation::{lateral_model, pole_placement_gain, EstimationParams, StiffnessEstimate};
use crate::fis::Fis;
use crate::observers::{DisturbanceObserver, NominalPlant};
use crate::plant::VehicleParams;

pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, worst: f64, tol: f64) -> CheckResult {
    CheckResult { name, passed: worst <= tol, detail: format!("worst {worst:.3e}, tolerance {tol:.1e}") }
}

pub fn run_all() -> Vec<CheckResult> {
    let seed = 0x5eed;
    vec![
        check("differential split mean", differential_identity(seed, 10_000), 1.0),
        check("rls vs batch least squares", rls_vs_batch(seed, 200), 1e-6),
        check("observer pole placement", pole_placement(seed, 100), 1e-6),
        check("mamdani closed-form centroid", mamdani_grid(100, 10_000), 1e-3),
        check("disturbance observer dc", dob_dc_error(50.0, 0.005), 0.01),
        check("disturbance observer time constant", dob_rise_time_error(50.0, 0.005), 1.0),
    ]
}

/// Worst `|V_l + V_r - 2 V|` in units of the rounding bound of the split,
/// together with exact equality of both sides at zero steer (a mismatch
/// there returns infinity).
pub fn differential_identity(seed: u64, n: usize) -> f64 {
    let p = VehicleParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let v: f64 = rng.gen_range(0.0..100.0);
        let delta: f64 = rng.gen_range(-0.6..0.6);
        let (l, r) = differential_split(v, delta, &p);
        let bound = 4.0 * f64::EPSILON * l.abs().max(r.abs()).max(v);
        if bound > 0.0 {
            worst = worst.max((l + r - 2.0 * v).abs() / bound);
        }
        let (l0, r0) = differential_split(v, 0.0, &p);
        if l0 != r0 || l0 != v {
            return f64::INFINITY;
        }
    }
    worst
}

/// Relative gap between RLS under a diffuse prior and the batch fit on
/// noise-free data.
pub fn rls_vs_batch(seed: u64, n: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = Vector2::new(rng.gen_range(8e3..3e4), rng.gen_range(8e3..3e4));
    let params = EstimationParams {
        theta0: [1e4, 1e4],
        cov0: 1e12,
        force_sigma: 1.0,
        c_min: 1.0,
        c_max: 1e7,
        ..Default::default()
    };
    let mut rls = StiffnessEstimate::new(&params);
    let (mut sxx, mut sxy) = (Vector2::zeros(), Vector2::zeros());
    for _ in 0..n {
        let x = Vector2::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
        let y = x.component_mul(&truth);
        rls.update(&Matrix2::from_diagonal(&x), &y);
        sxx += x.component_mul(&x);
        sxy += x.component_mul(&y);
    }
    let batch = sxy.component_div(&sxx);
    (rls.theta - batch).abs().component_div(&batch.abs()).max()
}

/// Worst distance between the eigenvalues of `A - K C` and the requested
/// poles over random stiffnesses, speeds and pole pairs.
pub fn pole_placement(seed: u64, n: usize) -> f64 {
    let p = VehicleParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let theta = Vector2::new(rng.gen_range(5e3..5e4), rng.gen_range(5e3..5e4));
        let v = rng.gen_range(2.0..40.0);
        let mut poles = [rng.gen_range(-40.0..-2.0), rng.gen_range(-40.0..-2.0)];
        let model = lateral_model(&theta, v, &p);
        let Some(k) = pole_placement_gain(&model, poles) else {
            return f64::INFINITY;
        };
        let m = model.a - k * model.c;
        // roots of s^2 - tr s + det
        let (tr, det) = (m.trace(), m.determinant());
        let disc = tr * tr - 4.0 * det;
        if disc < -1e-9 {
            return f64::INFINITY;
        }
        let sq = disc.max(0.0).sqrt();
        let mut eig = [0.5 * (tr - sq), 0.5 * (tr + sq)];
        eig.sort_by(f64::total_cmp);
        poles.sort_by(f64::total_cmp);
        worst = worst.max((eig[0] - poles[0]).abs()).max((eig[1] - poles[1]).abs());
    }
    worst
}

/// Midpoint-rule centroid of the aggregated output set.
pub fn discretised_centroid(fis: &Fis, strengths: &[f64; 5], n: usize) -> f64 {
    let (lo, hi) = (fis.output.lo, fis.output.hi);
    let h = (hi - lo) / n as f64;
    let (mut area, mut moment) = (0.0, 0.0);
    for i in 0..n {
        let x = lo + (i as f64 + 0.5) * h;
        let f = fis.aggregate(strengths, x);
        area += f;
        moment += f * x;
    }
    if area > 0.0 {
        moment / area
    } else {
        0.0
    }
}

/// Worst closed-form vs discretised centroid over a `grid x grid` sweep of
/// the normalised inputs.
pub fn mamdani_grid(grid: usize, points: usize) -> f64 {
    let fis = Fis::default();
    let mut worst: f64 = 0.0;
    for i in 0..grid {
        for j in 0..grid {
            let s = i as f64 / (grid - 1) as f64;
            let e = -1.0 + 2.0 * j as f64 / (grid - 1) as f64;
            for st in fis.firing_strengths(s, e) {
                worst = worst.max((fis.centroid(&st) - discretised_centroid(&fis, &st, points)).abs());
            }
        }
    }
    worst
}

fn dob_plant() -> NominalPlant {
    NominalPlant { inertia: 0.026975, torque_constant: 0.5, viscous_friction: 0.01 }
}

/// Relative error of the load estimate `5 / omega_c` seconds after a
/// constant operating point is applied.
pub fn dob_dc_error(omega_c: f64, dt: f64) -> f64 {
    let plant = dob_plant();
    let (current, omega) = (10.0, 100.0);
    let load = plant.torque_constant * current - plant.viscous_friction * omega;
    let mut obs = DisturbanceObserver::new(omega_c);
    let steps = (5.0 / omega_c / dt).ceil() as usize;
    for _ in 0..steps {
        obs.step(current, omega, dt, &plant);
    }
    ((obs.t_d_hat - load) / load).abs()
}

/// Distance, in controller steps, between the first 63.2 % crossing of a
/// load step and `1 / omega_c`.
pub fn dob_rise_time_error(omega_c: f64, dt: f64) -> f64 {
    let plant = dob_plant();
    let current = 10.0;
    let target = (1.0 - (-1.0f64).exp()) * plant.torque_constant * current;
    let mut obs = DisturbanceObserver::new(omega_c);
    for k in 1..=((20.0 / omega_c / dt) as usize) {
        if obs.step(current, 0.0, dt, &plant) >= target {
            return (k as f64 * dt - 1.0 / omega_c).abs() / dt;
        }
    }
    f64::INFINITY
}
