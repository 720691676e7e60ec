//! Summary statistics of a run and FIS-on/FIS-off comparisons.

use std::fmt::Write as _;

use crate::harness::SimLog;

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn peak(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

/// Mean-centred correlation coefficient. `None` for fewer than two samples or
/// a constant series.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "pearson needs paired samples");
    let n = a.len();
    if n < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Percentage by which `a` improves on the baseline `b`.
pub fn reduction(a: f64, b: f64) -> Option<f64> {
    (b != 0.0).then(|| 100.0 * (b - a) / b)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Metrics {
    pub samples: usize,
    pub rms_lambda: f64,
    pub peak_lambda: f64,
    pub rms_gamma_err: f64,
    pub peak_gamma_err: f64,
    pub corr_lambda: Option<f64>,
    /// over samples with positive true reaction torque
    pub corr_reaction_torque: Option<f64>,
    pub completion_time: Option<f64>,
    /// smallest distance to a cone line inside the lane-change gates
    pub min_lane_margin: Option<f64>,
    pub max_friction_use: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| format!("{x}"))
}

impl Metrics {
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").expect("writing to a string");
        kv("samples", self.samples.to_string());
        kv("rms_lambda", self.rms_lambda.to_string());
        kv("peak_lambda", self.peak_lambda.to_string());
        kv("rms_gamma_err", self.rms_gamma_err.to_string());
        kv("peak_gamma_err", self.peak_gamma_err.to_string());
        kv("corr_lambda", opt(self.corr_lambda));
        kv("corr_reaction_torque", opt(self.corr_reaction_torque));
        kv("completion_time", opt(self.completion_time));
        kv("min_lane_margin", opt(self.min_lane_margin));
        kv("max_friction_use", self.max_friction_use.to_string());
        s
    }
}

pub fn compute_metrics(log: &SimLog) -> Metrics {
    let lambda = log.column(|r| r.lambda_true);
    let lambda_hat = log.column(|r| r.lambda_hat);
    let gamma_err = log.column(|r| r.gamma_err);
    let (tr, tr_hat): (Vec<f64>, Vec<f64>) =
        log.records.iter().filter(|r| r.t_r_true > 0.0).map(|r| (r.t_r_true, r.t_r_hat)).unzip();
    let min_lane_margin = log
        .records
        .iter()
        .filter(|r| r.in_gate > 0.5)
        .map(|r| r.lane_margin)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))));
    Metrics {
        samples: log.records.len(),
        rms_lambda: rms(&lambda),
        peak_lambda: peak(&lambda),
        rms_gamma_err: rms(&gamma_err),
        peak_gamma_err: peak(&gamma_err),
        corr_lambda: pearson(&lambda_hat, &lambda),
        corr_reaction_torque: pearson(&tr_hat, &tr),
        completion_time: log.completion_time(),
        min_lane_margin,
        max_friction_use: log.records.iter().fold(0.0, |m: f64, r| m.max(r.friction_use)),
    }
}

/// Reductions of FIS-on run `a` against FIS-off run `b`, in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub a: Metrics,
    pub b: Metrics,
    pub rms_gamma_err_reduction: Option<f64>,
    pub peak_gamma_err_reduction: Option<f64>,
    pub rms_lambda_reduction: Option<f64>,
    pub peak_lambda_reduction: Option<f64>,
}

impl Comparison {
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: Option<f64>| writeln!(s, "{k}={}", opt(v)).expect("writing to a string");
        kv("rms_gamma_err_reduction", self.rms_gamma_err_reduction);
        kv("peak_gamma_err_reduction", self.peak_gamma_err_reduction);
        kv("rms_lambda_reduction", self.rms_lambda_reduction);
        kv("peak_lambda_reduction", self.peak_lambda_reduction);
        kv("completion_time_a", self.a.completion_time);
        kv("completion_time_b", self.b.completion_time);
        s
    }
}

pub fn compare(a: &SimLog, b: &SimLog) -> Result<Comparison, String> {
    if a.records.len() != b.records.len() {
        return Err(format!("time grids differ: {} vs {} samples", a.records.len(), b.records.len()));
    }
    for (k, (ra, rb)) in a.records.iter().zip(&b.records).enumerate() {
        if (ra.t - rb.t).abs() > 1e-9 * (1.0 + ra.t.abs()) {
            return Err(format!("time grids differ at sample {k}: {} vs {}", ra.t, rb.t));
        }
    }
    let (ma, mb) = (compute_metrics(a), compute_metrics(b));
    Ok(Comparison {
        a: ma,
        b: mb,
        rms_gamma_err_reduction: reduction(ma.rms_gamma_err, mb.rms_gamma_err),
        peak_gamma_err_reduction: reduction(ma.peak_gamma_err, mb.peak_gamma_err),
        rms_lambda_reduction: reduction(ma.rms_lambda, mb.rms_lambda),
        peak_lambda_reduction: reduction(ma.peak_lambda, mb.peak_lambda),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Record;
    use proptest::prelude::*;

    fn log_of(gamma_err: &[f64]) -> SimLog {
        let records = gamma_err
            .iter()
            .enumerate()
            .map(|(k, &e)| Record {
                t: k as f64 * 0.01,
                gamma_err: e,
                lambda_true: 0.1 * e,
                lambda_hat: 0.1 * e,
                ..Default::default()
            })
            .collect();
        SimLog { records }
    }

    #[test]
    fn sine_rms() {
        let n = 10_000;
        let x: Vec<f64> = (0..n).map(|k| (2.0 * std::f64::consts::PI * k as f64 / n as f64).sin()).collect();
        assert!((rms(&x) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-4);
    }

    #[test]
    fn reduction_arithmetic() {
        assert!((reduction(0.3, 2.0).unwrap() - 85.0).abs() < 1e-12);
        assert_eq!(reduction(1.0, 0.0), None);
    }

    #[test]
    fn identical_series() {
        let x: Vec<f64> = (0..50).map(|k| (k as f64 * 0.3).cos()).collect();
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let c = compare(&log_of(&x), &log_of(&x)).unwrap();
        assert_eq!(c.rms_gamma_err_reduction, Some(0.0));
        assert_eq!(c.peak_lambda_reduction, Some(0.0));
    }

    #[test]
    fn constant_series_has_no_correlation() {
        assert_eq!(pearson(&[1.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]), None);
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        assert!(compare(&log_of(&[1.0, 2.0]), &log_of(&[1.0])).is_err());
        let mut b = log_of(&[1.0, 2.0]);
        b.records[1].t = 0.02;
        assert!(compare(&log_of(&[1.0, 2.0]), &b).is_err());
    }

    #[test]
    fn key_values_parse() {
        let m = compute_metrics(&log_of(&[0.0, 1.0, -2.0]));
        let text = m.to_key_values();
        for line in text.lines() {
            let (k, v) = line.split_once('=').unwrap();
            assert!(!k.is_empty() && !v.is_empty());
        }
        assert!(text.contains("peak_gamma_err=2\n"));
        assert!(text.contains("completion_time=none\n"));
    }

    proptest! {
        #[test]
        fn correlation_bounded(v in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..60)) {
            let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            if let Some(c) = pearson(&a, &b) {
                prop_assert!((-1.0..=1.0).contains(&c));
            }
            prop_assert!(rms(&a) >= 0.0);
            prop_assert!(peak(&a) >= rms(&a) - 1e-9);
        }
    }
}
