//! Reference paths and the preview driver.
//!
//! Curvature follows the vehicle sign convention: positive is a right turn.
//! Paths are laid out in the global frame with the start at the origin,
//! heading along `+X`.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::ParseError;
use crate::plant::VehicleState;

/// Curvature against arc length, linearly interpolated between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub s: Vec<f64>,
    pub kappa: Vec<f64>,
}

pub const MAX_TRACK_CURVATURE: f64 = 0.5;

impl Track {
    pub fn new(s: Vec<f64>, kappa: Vec<f64>) -> Result<Self, ParseError> {
        if s.len() < 2 || s.len() != kappa.len() {
            return Err(ParseError::TooShort);
        }
        for i in 0..s.len() {
            if i == 0 && s[0] != 0.0 {
                return Err(ParseError::Line { line: 1, msg: "first sample must be at s = 0".into() });
            }
            if i > 0 && !(s[i] > s[i - 1]) {
                return Err(ParseError::Line { line: i + 1, msg: "s must be strictly increasing".into() });
            }
            if !(kappa[i].abs() < MAX_TRACK_CURVATURE) {
                return Err(ParseError::Line { line: i + 1, msg: format!("|kappa| must be < {MAX_TRACK_CURVATURE}") });
            }
        }
        Ok(Self { s, kappa })
    }

    pub fn total_length(&self) -> f64 {
        *self.s.last().expect("track has samples")
    }

    /// Curvature at arc length `s`, held constant beyond the ends.
    pub fn curvature(&self, s: f64) -> f64 {
        if s <= self.s[0] {
            return self.kappa[0];
        }
        let n = self.s.len();
        if s >= self.s[n - 1] {
            return self.kappa[n - 1];
        }
        let i = self.s.partition_point(|&x| x <= s) - 1;
        let t = (s - self.s[i]) / (self.s[i + 1] - self.s[i]);
        self.kappa[i] + t * (self.kappa[i + 1] - self.kappa[i])
    }
}

/// Read `s_m,kappa_inv_m` records. Blank lines and lines starting with `#`
/// are skipped; a first non-numeric record is taken as a header.
pub fn load_track(reader: impl BufRead) -> Result<Track, ParseError> {
    let mut s = Vec::new();
    let mut kappa = Vec::new();
    let mut lines = Vec::new();
    let mut seen_record = false;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| ParseError::Line { line: lineno, msg: e.to_string() })?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        let parsed: Option<(f64, f64)> = match fields.as_slice() {
            [a, b] => a.parse().ok().zip(b.parse().ok()),
            _ => None,
        };
        match parsed {
            Some((a, b)) if a.is_finite() && b.is_finite() => {
                s.push(a);
                kappa.push(b);
                lines.push(lineno);
            }
            _ if !seen_record && fields.len() == 2 && fields.iter().all(|f| f.parse::<f64>().is_err()) => {}
            _ => {
                return Err(ParseError::Line {
                    line: lineno,
                    msg: format!("expected two numeric fields, got {text:?}"),
                })
            }
        }
        seen_record = true;
    }
    if s.is_empty() {
        return Err(ParseError::TooShort);
    }
    // report validation failures against file line numbers
    Track::new(s, kappa).map_err(|e| match e {
        ParseError::Line { line, msg } => ParseError::Line { line: lines[line - 1], msg },
        other => other,
    })
}

/// Default racing segment: straight, left arc, straight, right arc, straight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticTrack {
    pub entry_straight: f64,
    pub left_arc_length: f64,
    pub left_arc_curvature: f64,
    pub middle_straight: f64,
    pub right_arc_length: f64,
    pub right_arc_curvature: f64,
    pub exit_straight: f64,
    /// length of the linear curvature ramps into and out of each arc
    pub transition: f64,
}

impl Default for SyntheticTrack {
    fn default() -> Self {
        Self {
            entry_straight: 50.0,
            left_arc_length: 60.0,
            left_arc_curvature: -0.05,
            middle_straight: 50.0,
            right_arc_length: 60.0,
            right_arc_curvature: 0.04,
            exit_straight: 50.0,
            transition: 8.0,
        }
    }
}

impl SyntheticTrack {
    pub fn build(&self) -> Result<Track, ParseError> {
        let mut s = vec![0.0];
        let mut k = vec![0.0];
        let mut at = 0.0;
        let mut push = |len: f64, kappa: f64, s: &mut Vec<f64>, k: &mut Vec<f64>| {
            at += len;
            s.push(at);
            k.push(kappa);
        };
        let t = self.transition;
        push(self.entry_straight, 0.0, &mut s, &mut k);
        push(t, self.left_arc_curvature, &mut s, &mut k);
        push(self.left_arc_length, self.left_arc_curvature, &mut s, &mut k);
        push(t, 0.0, &mut s, &mut k);
        push(self.middle_straight, 0.0, &mut s, &mut k);
        push(t, self.right_arc_curvature, &mut s, &mut k);
        push(self.right_arc_length, self.right_arc_curvature, &mut s, &mut k);
        push(t, 0.0, &mut s, &mut k);
        push(self.exit_straight, 0.0, &mut s, &mut k);
        Track::new(s, k)
    }
}

/// Gate layout of the double lane change, all distances in metres. Lateral
/// offsets are measured to the right (negative moves left).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DlcGeometry {
    pub vehicle_width: f64,
    /// straight run before the entry gate, used to settle at test speed
    pub run_in: f64,
    pub entry_length: f64,
    pub entry_width: f64,
    pub shift_length: f64,
    pub offset_length: f64,
    pub offset_width: f64,
    pub lateral_offset: f64,
    pub return_length: f64,
    pub exit_length: f64,
    pub exit_width: f64,
    pub run_out: f64,
}

impl Default for DlcGeometry {
    /// Lane widths follow the vehicle width `W = 1.4`: entry `1.1 W + 0.25`,
    /// offset lane `W + 1`, exit `1.3 W + 0.25`. The offset lane's right cone
    /// line sits 1 m left of the entry lane's left cone line.
    fn default() -> Self {
        Self {
            vehicle_width: 1.4,
            run_in: 40.0,
            entry_length: 12.0,
            entry_width: 1.79,
            shift_length: 13.5,
            offset_length: 11.0,
            offset_width: 2.4,
            lateral_offset: -3.095,
            return_length: 12.5,
            exit_length: 12.0,
            exit_width: 2.07,
            run_out: 30.0,
        }
    }
}

/// One stretch of the lane-change course.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneSection {
    pub start: f64,
    pub length: f64,
    pub from: f64,
    pub to: f64,
    /// cone-lane width for gated sections
    pub width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanePath {
    pub sections: Vec<LaneSection>,
    pub vehicle_width: f64,
}

impl LanePath {
    pub fn end(&self) -> f64 {
        self.sections.last().map_or(0.0, |s| s.start + s.length)
    }

    /// X where the entry gate begins.
    pub fn entry_gate(&self) -> f64 {
        self.sections.iter().find(|s| s.width.is_some()).map_or(0.0, |s| s.start)
    }

    fn section(&self, x: f64) -> &LaneSection {
        let i = self.sections.partition_point(|s| s.start <= x).saturating_sub(1);
        &self.sections[i]
    }

    pub fn y_ref(&self, x: f64) -> f64 {
        let sec = self.section(x);
        let t = ((x - sec.start) / sec.length).clamp(0.0, 1.0);
        sec.from + (sec.to - sec.from) * 0.5 * (1.0 - (std::f64::consts::PI * t).cos())
    }

    /// Remaining lateral margin of the vehicle body inside the cone lane at
    /// `(x, y)`, or `None` outside the gated sections. Negative means a cone
    /// line is crossed.
    pub fn lane_margin(&self, x: f64, y: f64) -> Option<f64> {
        if x < 0.0 || x > self.end() {
            return None;
        }
        let sec = self.section(x);
        sec.width.map(|w| 0.5 * (w - self.vehicle_width) - (y - sec.from).abs())
    }
}

pub fn dlc_path(g: &DlcGeometry) -> Result<LanePath, String> {
    let lengths = [
        ("run_in", g.run_in),
        ("entry_length", g.entry_length),
        ("shift_length", g.shift_length),
        ("offset_length", g.offset_length),
        ("return_length", g.return_length),
        ("exit_length", g.exit_length),
        ("run_out", g.run_out),
    ];
    for (name, v) in lengths {
        if !(v > 0.0 && v.is_finite()) {
            return Err(format!("dlc.{name} must be > 0"));
        }
    }
    for (name, w) in [("entry_width", g.entry_width), ("offset_width", g.offset_width), ("exit_width", g.exit_width)] {
        if !(w > g.vehicle_width && w.is_finite()) {
            return Err(format!("dlc.{name} must exceed dlc.vehicle_width"));
        }
    }
    if !g.lateral_offset.is_finite() {
        return Err("dlc.lateral_offset must be finite".into());
    }
    let off = g.lateral_offset;
    let layout = [
        (g.run_in, 0.0, 0.0, None),
        (g.entry_length, 0.0, 0.0, Some(g.entry_width)),
        (g.shift_length, 0.0, off, None),
        (g.offset_length, off, off, Some(g.offset_width)),
        (g.return_length, off, 0.0, None),
        (g.exit_length, 0.0, 0.0, Some(g.exit_width)),
        (g.run_out, 0.0, 0.0, None),
    ];
    let mut start = 0.0;
    let mut sections = Vec::with_capacity(layout.len());
    for (length, from, to, width) in layout {
        sections.push(LaneSection { start, length, from, to, width });
        start += length;
    }
    Ok(LanePath { sections, vehicle_width: g.vehicle_width })
}

/// Densely sampled centre line with heading and curvature.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePath {
    pub s: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub psi: Vec<f64>,
    pub kappa: Vec<f64>,
}

pub const PATH_SPACING: f64 = 0.1;

impl ReferencePath {
    /// Integrate heading and position from the curvature profile.
    pub fn from_track(track: &Track) -> Self {
        let n = (track.total_length() / PATH_SPACING).ceil() as usize;
        let ds = track.total_length() / n as f64;
        let mut p = Self::with_capacity(n + 1);
        let (mut x, mut y, mut psi) = (0.0, 0.0, 0.0);
        p.push(0.0, x, y, psi, track.curvature(0.0));
        for i in 1..=n {
            let s0 = (i - 1) as f64 * ds;
            let s = i as f64 * ds;
            // advance along the arc of the mid-step curvature: chord length
            // and chord direction are exact for a circular piece
            let turn = ds * track.curvature(s0 + 0.5 * ds);
            let chord = if turn.abs() < 1e-12 { ds } else { ds * (0.5 * turn).sin() / (0.5 * turn) };
            let psi_mid = psi + 0.5 * turn;
            x += chord * psi_mid.cos();
            y += chord * psi_mid.sin();
            psi += turn;
            p.push(s, x, y, psi, track.curvature(s));
        }
        p
    }

    pub fn from_lane(lane: &LanePath) -> Self {
        let end = lane.end();
        let n = (end / PATH_SPACING).ceil() as usize;
        let dx = end / n as f64;
        let h = 1e-3;
        let mut p = Self::with_capacity(n + 1);
        let mut s = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        for i in 0..=n {
            let x = i as f64 * dx;
            let y = lane.y_ref(x);
            let (ym, yp) = (lane.y_ref(x - h), lane.y_ref(x + h));
            let d1 = (yp - ym) / (2.0 * h);
            let d2 = (yp - 2.0 * y + ym) / (h * h);
            if let Some((px, py)) = prev {
                s += (x - px).hypot(y - py);
            }
            prev = Some((x, y));
            p.push(s, x, y, d1.atan(), d2 / (1.0 + d1 * d1).powf(1.5));
        }
        p
    }

    fn with_capacity(n: usize) -> Self {
        Self {
            s: Vec::with_capacity(n),
            x: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            psi: Vec::with_capacity(n),
            kappa: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, s: f64, x: f64, y: f64, psi: f64, kappa: f64) {
        self.s.push(s);
        self.x.push(x);
        self.y.push(y);
        self.psi.push(psi);
        self.kappa.push(kappa);
    }

    pub fn length(&self) -> f64 {
        *self.s.last().expect("path has samples")
    }

    fn index_at(&self, s: f64) -> usize {
        self.s.partition_point(|&v| v < s).min(self.s.len() - 1)
    }

    /// Point, heading and curvature at arc length `s` (nearest sample). Past
    /// the end the path continues straight along its final heading.
    pub fn at(&self, s: f64) -> (f64, f64, f64, f64) {
        let i = self.index_at(s);
        let beyond = s - self.length();
        if beyond > 0.0 {
            let psi = self.psi[i];
            return (self.x[i] + beyond * psi.cos(), self.y[i] + beyond * psi.sin(), psi, 0.0);
        }
        (self.x[i], self.y[i], self.psi[i], self.kappa[i])
    }

    /// Arc length of the sample nearest to `(x, y)`, searched in a window
    /// around `hint`. Points past the end project onto the straight
    /// continuation.
    pub fn project(&self, x: f64, y: f64, hint: f64, behind: f64, ahead: f64) -> f64 {
        let lo = self.index_at(hint - behind);
        let hi = self.index_at(hint + ahead);
        let mut best = lo;
        let mut best_d = f64::INFINITY;
        for i in lo..=hi {
            let d = (self.x[i] - x).powi(2) + (self.y[i] - y).powi(2);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        let last = self.s.len() - 1;
        if best == last {
            let psi = self.psi[last];
            let along = (x - self.x[last]) * psi.cos() + (y - self.y[last]) * psi.sin();
            return self.s[last] + along.max(0.0);
        }
        self.s[best]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriverParams {
    /// fixed part of the preview distance, m
    pub preview_dist: f64,
    /// speed-proportional part of the preview distance, s
    pub preview_time: f64,
    /// multiplier on the pure-pursuit steering angle
    pub steer_gain: f64,
    pub max_steer: f64,
    /// steering is limited to what this lateral acceleration needs at the
    /// current speed, m/s^2
    pub steer_a_lat: f64,
    /// lateral acceleration the speed target allows in corners, m/s^2
    pub a_lat_max: f64,
    /// speed cap on the track, m/s
    pub v_cap: f64,
    /// deceleration assumed when planning ahead for corners, m/s^2
    pub a_decel: f64,
    /// how far ahead corners are considered, m
    pub speed_horizon: f64,
    /// rate at which the driver raises the requested speed, m/s^2
    pub a_accel: f64,
    pub throttle_kp: f64,
    pub throttle_ki: f64,
}

impl Default for DriverParams {
    fn default() -> Self {
        Self {
            preview_dist: 3.0,
            preview_time: 0.25,
            steer_gain: 1.0,
            max_steer: 0.5,
            steer_a_lat: 12.0,
            a_lat_max: 8.0,
            v_cap: 25.0,
            a_decel: 0.3,
            speed_horizon: 60.0,
            a_accel: 8.5,
            throttle_kp: 0.2,
            throttle_ki: 0.1,
        }
    }
}

impl DriverParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.preview_dist > 0.0) {
            return Err("driver.preview_dist must be > 0".into());
        }
        let nonneg = [
            ("preview_time", self.preview_time),
            ("steer_gain", self.steer_gain),
            ("throttle_kp", self.throttle_kp),
            ("throttle_ki", self.throttle_ki),
            ("speed_horizon", self.speed_horizon),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("driver.{name} must be >= 0"));
            }
        }
        for (name, v) in [
            ("max_steer", self.max_steer),
            ("steer_a_lat", self.steer_a_lat),
            ("a_lat_max", self.a_lat_max),
            ("v_cap", self.v_cap),
            ("a_decel", self.a_decel),
            ("a_accel", self.a_accel),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("driver.{name} must be > 0"));
            }
        }
        if self.max_steer >= std::f64::consts::FRAC_PI_2 {
            return Err("driver.max_steer must be < pi/2".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpeedPolicy {
    /// corner-limited speed target along the whole path
    Track,
    /// hold `speed` up to `release_x`, then zero throttle
    LaneChange { speed: f64, release_x: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverOutput {
    pub delta: f64,
    pub throttle: f64,
    pub v_target: f64,
    /// arc length of the vehicle's projection on the path
    pub s: f64,
    /// lateral error at the preview point, positive when the path lies right
    pub lateral_error: f64,
    /// the vehicle has passed the end of the path
    pub finished: bool,
}

/// Pure-pursuit steering on a preview point plus a speed PI with feedforward.
#[derive(Debug, Clone, PartialEq)]
pub struct Driver {
    pub params: DriverParams,
    pub policy: SpeedPolicy,
    /// steady-state throttle per m/s of speed
    pub throttle_per_speed: f64,
    wheelbase: f64,
    s_hint: f64,
    integ: f64,
    /// requested speed, raised towards the target at `a_accel`
    v_ref: Option<f64>,
}

impl Driver {
    pub fn new(params: DriverParams, policy: SpeedPolicy, throttle_per_speed: f64, wheelbase: f64) -> Self {
        Self { params, policy, throttle_per_speed, wheelbase, s_hint: 0.0, integ: 0.0, v_ref: None }
    }

    /// Allowed speed at arc length `s`, looking ahead for corners.
    pub fn speed_target(&self, path: &ReferencePath, s: f64) -> f64 {
        let p = &self.params;
        let mut v = p.v_cap;
        let step = 1.0;
        let mut d = 0.0;
        while d <= p.speed_horizon {
            let (.., kappa) = path.at(s + d);
            if kappa.abs() > 1e-9 {
                let corner = (p.a_lat_max / kappa.abs()).sqrt();
                v = v.min((corner * corner + 2.0 * p.a_decel * d).sqrt());
            }
            d += step;
        }
        v
    }

    /// Steering towards a point `ahead` metres in front and `lateral` metres
    /// to the right of the vehicle at speed `v`: the arc through it,
    /// saturated.
    pub fn steer(&self, ahead: f64, lateral: f64, v: f64) -> f64 {
        let p = &self.params;
        let chord2 = (ahead * ahead + lateral * lateral).max(1e-6);
        let limit = (self.wheelbase * p.steer_a_lat / (v * v).max(1e-9)).atan().min(p.max_steer);
        (p.steer_gain * 2.0 * self.wheelbase * lateral / chord2).atan().clamp(-limit, limit)
    }

    pub fn step(&mut self, state: &VehicleState, path: &ReferencePath, dt: f64) -> DriverOutput {
        let p = self.params;
        let v = state.v;
        let s = path.project(state.x, state.y, self.s_hint, 5.0, 5.0 + 2.0 * v.abs() * dt + 1.0);
        self.s_hint = s;
        let finished = s >= path.length() - PATH_SPACING;

        let look = p.preview_dist + p.preview_time * v.max(0.0);
        let (px, py, ..) = path.at(s + look);
        let (dx, dy) = (px - state.x, py - state.y);
        let (sin, cos) = state.psi.sin_cos();
        let ahead = dx * cos + dy * sin;
        // positive when the preview point lies to the right
        let lateral_error = -dx * sin + dy * cos;
        let delta = self.steer(ahead, lateral_error, v);

        let (v_target, active) = match self.policy {
            SpeedPolicy::Track => (self.speed_target(path, s), true),
            SpeedPolicy::LaneChange { speed, release_x } => (speed, state.x < release_x),
        };
        let v_ref = self.v_ref.unwrap_or(v).min(v_target);
        let v_ref = (v_ref + p.a_accel * dt).min(v_target);
        self.v_ref = Some(v_ref);
        let throttle = if active {
            let err = v_ref - v;
            let ff = self.throttle_per_speed * v_ref;
            let integ = self.integ + err * dt;
            let raw = ff + p.throttle_kp * err + p.throttle_ki * integ;
            if (0.0..=1.0).contains(&raw) || (raw > 1.0 && err < 0.0) || (raw < 0.0 && err > 0.0) {
                self.integ = integ;
            }
            raw.clamp(0.0, 1.0)
        } else {
            0.0
        };
        DriverOutput { delta, throttle, v_target, s, lateral_error, finished }
    }
}
