//! Mamdani fuzzy inference for the left/right voltage correction factors.
//!
//! Inputs are the normalised slip ratio (sets VS..VL on `[0, 1]`) and the
//! normalised yaw-rate error (sets NL..PL on `[-1, 1]`); each motor has its
//! own 5x5 rule table with consequents NL..PL on `[-1, 1]`. Implication is
//! min, aggregation max, and defuzzification the exact centroid of the
//! aggregated piecewise-linear shape.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Consequent / yaw-error labels, in universe order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    NL,
    NS,
    Z,
    PS,
    PL,
}

impl Label {
    pub const ALL: [Label; 5] = [Label::NL, Label::NS, Label::Z, Label::PS, Label::PL];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "NL" => Ok(Label::NL),
            // a bare "N" appears in the published table; read as negative small
            "NS" | "N" => Ok(Label::NS),
            "Z" => Ok(Label::Z),
            "PS" => Ok(Label::PS),
            "PL" => Ok(Label::PL),
            other => Err(format!("unknown fuzzy label {other:?}")),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

pub const SLIP_LABELS: [&str; 5] = ["VS", "S", "M", "L", "VL"];

/// Triangular sets whose feet sit on the neighbouring peaks; the first and
/// last sets are shouldered out to the universe bounds. Every point of the
/// universe therefore has memberships summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyVariable {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub peaks: Vec<f64>,
}

impl FuzzyVariable {
    pub fn new(name: &str, lo: f64, hi: f64, peaks: &[f64]) -> Result<Self, String> {
        if !(lo < hi) {
            return Err(format!("fis.{name}: universe must satisfy lo < hi"));
        }
        if peaks.len() < 2 {
            return Err(format!("fis.{name}: need at least two sets"));
        }
        if peaks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(format!("fis.{name}: peaks must be strictly increasing"));
        }
        if peaks.iter().any(|p| !(*p >= lo && *p <= hi)) {
            return Err(format!("fis.{name}: peaks must lie inside [{lo}, {hi}]"));
        }
        Ok(Self { name: name.to_string(), lo, hi, peaks: peaks.to_vec() })
    }

    /// Evenly spaced peaks spanning the whole universe.
    pub fn evenly_spaced(name: &str, lo: f64, hi: f64, n: usize) -> Self {
        let peaks: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        Self { name: name.to_string(), lo, hi, peaks }
    }

    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }

    pub fn membership(&self, set: usize, x: f64) -> f64 {
        let x = x.clamp(self.lo, self.hi);
        let p = &self.peaks;
        let n = p.len();
        let pk = p[set];
        if x <= pk {
            if set == 0 {
                1.0
            } else if x <= p[set - 1] {
                0.0
            } else {
                (x - p[set - 1]) / (pk - p[set - 1])
            }
        } else if set == n - 1 {
            1.0
        } else if x >= p[set + 1] {
            0.0
        } else {
            (p[set + 1] - x) / (p[set + 1] - pk)
        }
    }

    pub fn fuzzify(&self, x: f64) -> Vec<f64> {
        (0..self.len()).map(|i| self.membership(i, x)).collect()
    }

    /// Points between which every set is linear.
    fn knots(&self) -> Vec<f64> {
        let mut k = Vec::with_capacity(self.peaks.len() + 2);
        k.push(self.lo);
        k.extend(self.peaks.iter().copied().filter(|p| *p > self.lo && *p < self.hi));
        k.push(self.hi);
        k
    }
}

/// One 5x5 table per motor: `[slip set][yaw-error set] -> consequent`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleBase {
    pub left: [[Label; 5]; 5],
    pub right: [[Label; 5]; 5],
}

impl RuleBase {
    /// Rows VS..VL, columns NL..PL, as whitespace separated labels.
    pub fn parse(left: &[String], right: &[String]) -> Result<Self, String> {
        Ok(Self { left: parse_table("rules_left", left)?, right: parse_table("rules_right", right)? })
    }
}

fn parse_table(name: &str, rows: &[String]) -> Result<[[Label; 5]; 5], String> {
    if rows.len() != 5 {
        return Err(format!("fis.{name}: expected 5 rows, got {}", rows.len()));
    }
    let mut table = [[Label::Z; 5]; 5];
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<&str> = row.split_whitespace().collect();
        if cells.len() != 5 {
            return Err(format!("fis.{name}: row {} needs 5 labels, got {}", i + 1, cells.len()));
        }
        for (j, cell) in cells.iter().enumerate() {
            table[i][j] = cell.parse().map_err(|e| format!("fis.{name}: row {}: {e}", i + 1))?;
        }
    }
    Ok(table)
}

fn rows(r: [&str; 5]) -> Vec<String> {
    r.iter().map(|s| s.to_string()).collect()
}

/// Rule tables and membership layout as they appear in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FisParams {
    /// slip ratio mapped to 1.0 on the normalised slip universe
    pub slip_scale: f64,
    /// yaw-rate error mapped to 1.0 on the normalised error universe, rad/s
    pub yaw_error_scale: f64,
    /// low-pass cutoff on the yaw-rate error before inference, rad/s
    pub yaw_error_cutoff: f64,
    pub slip_peaks: Vec<f64>,
    pub error_peaks: Vec<f64>,
    pub output_peaks: Vec<f64>,
    pub rules_left: Vec<String>,
    pub rules_right: Vec<String>,
}

impl Default for FisParams {
    fn default() -> Self {
        Self {
            slip_scale: 0.2,
            yaw_error_scale: 0.2,
            yaw_error_cutoff: 30.0,
            slip_peaks: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            error_peaks: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            output_peaks: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            rules_left: rows(["PL PL Z NL NL", "PL PS N NS NL", "PS Z NS NL NL", "PS Z NL NS NL", "Z Z NL NL NL"]),
            rules_right: rows(["NL NL Z PL PL", "NL NS N PS PL", "NL NL NS Z PS", "NL NS NL Z PS", "NL NL NL Z Z"]),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FisOutput {
    pub v_corr_l: f64,
    pub v_corr_r: f64,
}

/// Immutable inference engine.
#[derive(Debug, Clone, PartialEq)]
pub struct Fis {
    pub slip: FuzzyVariable,
    pub error: FuzzyVariable,
    pub output: FuzzyVariable,
    pub rules: RuleBase,
    pub slip_scale: f64,
    pub yaw_error_scale: f64,
}

impl Default for Fis {
    fn default() -> Self {
        Self::new(&FisParams::default()).expect("default fuzzy layout is valid")
    }
}

impl Fis {
    pub fn new(p: &FisParams) -> Result<Self, String> {
        if !(p.slip_scale > 0.0 && p.yaw_error_scale > 0.0 && p.yaw_error_cutoff > 0.0) {
            return Err("fis.slip_scale, fis.yaw_error_scale and fis.yaw_error_cutoff must be > 0".into());
        }
        let five = |name: &str, v: &[f64]| {
            if v.len() == 5 {
                Ok(())
            } else {
                Err(format!("fis.{name}: expected 5 peaks, got {}", v.len()))
            }
        };
        five("slip_peaks", &p.slip_peaks)?;
        five("error_peaks", &p.error_peaks)?;
        five("output_peaks", &p.output_peaks)?;
        Ok(Self {
            slip: FuzzyVariable::new("slip", 0.0, 1.0, &p.slip_peaks)?,
            error: FuzzyVariable::new("yaw_error", -1.0, 1.0, &p.error_peaks)?,
            output: FuzzyVariable::new("correction", -1.0, 1.0, &p.output_peaks)?,
            rules: RuleBase::parse(&p.rules_left, &p.rules_right)?,
            slip_scale: p.slip_scale,
            yaw_error_scale: p.yaw_error_scale,
        })
    }

    /// Corrections from the physical slip ratio and yaw-rate error (rad/s).
    pub fn evaluate(&self, slip_ratio: f64, yaw_rate_error: f64) -> FisOutput {
        self.infer(slip_ratio / self.slip_scale, yaw_rate_error / self.yaw_error_scale)
    }

    /// Consequent firing strengths `[left, right]` indexed by [`Label`].
    pub fn firing_strengths(&self, slip_norm: f64, error_norm: f64) -> [[f64; 5]; 2] {
        let mu_s = self.slip.fuzzify(slip_norm);
        let mu_e = self.error.fuzzify(error_norm);
        let mut out = [[0.0f64; 5]; 2];
        for (i, ms) in mu_s.iter().enumerate() {
            for (j, me) in mu_e.iter().enumerate() {
                let w = ms.min(*me);
                let l = &mut out[0][self.rules.left[i][j].index()];
                *l = (*l).max(w);
                let r = &mut out[1][self.rules.right[i][j].index()];
                *r = (*r).max(w);
            }
        }
        out
    }

    pub fn infer(&self, slip_norm: f64, error_norm: f64) -> FisOutput {
        let s = self.firing_strengths(slip_norm, error_norm);
        FisOutput { v_corr_l: self.centroid(&s[0]), v_corr_r: self.centroid(&s[1]) }
    }

    /// Aggregated output membership at `x` for the given clip levels.
    pub fn aggregate(&self, strengths: &[f64; 5], x: f64) -> f64 {
        (0..5).map(|k| strengths[k].min(self.output.membership(k, x))).fold(0.0, f64::max)
    }

    /// Exact centroid of the clipped-and-maxed output sets.
    pub fn centroid(&self, strengths: &[f64; 5]) -> f64 {
        let knots = self.output.knots();
        let mut area = 0.0;
        let mut moment = 0.0;
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            // every clipped set is linear on [a, b] except for a kink where it
            // meets its clip level
            let lines: Vec<(f64, f64, f64)> = (0..5)
                .filter(|&k| strengths[k] > 0.0)
                .map(|k| (self.output.membership(k, a), self.output.membership(k, b), strengths[k]))
                .collect();
            let mut cuts = vec![a, b];
            for &(fa, fb, s) in &lines {
                if (fa - s) * (fb - s) < 0.0 {
                    cuts.push(a + (b - a) * (s - fa) / (fb - fa));
                }
            }
            sort_dedup(&mut cuts);
            // between cuts each clipped set is linear; the max of linear
            // functions only bends where two of them cross
            let mut points = cuts.clone();
            for c in cuts.windows(2) {
                let vals: Vec<(f64, f64)> = (0..5)
                    .filter(|&k| strengths[k] > 0.0)
                    .map(|k| (self.clipped(strengths, k, c[0]), self.clipped(strengths, k, c[1])))
                    .collect();
                for i in 0..vals.len() {
                    for j in i + 1..vals.len() {
                        let d0 = vals[i].0 - vals[j].0;
                        let d1 = vals[i].1 - vals[j].1;
                        if d0 * d1 < 0.0 {
                            points.push(c[0] + (c[1] - c[0]) * d0 / (d0 - d1));
                        }
                    }
                }
            }
            sort_dedup(&mut points);
            for seg in points.windows(2) {
                let (x0, x1) = (seg[0], seg[1]);
                let h = x1 - x0;
                let f0 = self.aggregate(strengths, x0);
                let f1 = self.aggregate(strengths, x1);
                area += 0.5 * h * (f0 + f1);
                moment += h / 6.0 * (x0 * (2.0 * f0 + f1) + x1 * (f0 + 2.0 * f1));
            }
        }
        assert!(area > 0.0, "fuzzy inference produced an empty output shape");
        moment / area
    }

    fn clipped(&self, strengths: &[f64; 5], k: usize, x: f64) -> f64 {
        strengths[k].min(self.output.membership(k, x))
    }
}

fn sort_dedup(v: &mut Vec<f64>) {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
}
