//! Tracking metrics: wrapped per-axis MSE and the compound error.

use serde::{Deserialize, Serialize};

use crate::env::TraceRow;
use crate::mathcore::{wrap_angle, EulerAngles};

/// Per-axis wrapped errors `actual − desired`.
pub fn euler_errors(actual: EulerAngles, desired: EulerAngles) -> [f64; 3] {
    [
        wrap_angle(actual.roll - desired.roll),
        wrap_angle(actual.pitch - desired.pitch),
        wrap_angle(actual.yaw - desired.yaw),
    ]
}

/// Sum of wrapped absolute per-axis angle errors.
pub fn compound_error(actual: EulerAngles, desired: EulerAngles) -> f64 {
    euler_errors(actual, desired).iter().map(|e| e.abs()).sum()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// rad², roll/pitch/yaw.
    pub mse_per_axis: [f64; 3],
    /// Mean of the per-axis values.
    pub mse_total: f64,
    /// `(t, compound error)` per sample.
    pub compound_series: Vec<(f64, f64)>,
    pub compound_mean: f64,
    pub compound_std: f64,
}

impl MetricsReport {
    /// Metrics over a sequence of trace rows. The compound error is
    /// recomputed from the logged angles.
    pub fn from_rows(rows: &[TraceRow]) -> MetricsReport {
        let samples = rows.iter().map(|r| {
            let actual = EulerAngles::new(r.roll, r.pitch, r.yaw);
            let desired = EulerAngles::new(r.ref_roll, r.ref_pitch, r.ref_yaw);
            (r.t, euler_errors(actual, desired))
        });
        Self::from_errors(samples)
    }

    /// Metrics over `(t, [roll, pitch, yaw] error)` samples.
    pub fn from_errors(samples: impl IntoIterator<Item = (f64, [f64; 3])>) -> MetricsReport {
        let mut sq = [0.0; 3];
        let mut series = Vec::new();
        for (t, e) in samples {
            for (acc, v) in sq.iter_mut().zip(e) {
                let w = wrap_angle(v);
                *acc += w * w;
            }
            series.push((t, e.iter().map(|v| wrap_angle(*v).abs()).sum::<f64>()));
        }
        if series.is_empty() {
            return MetricsReport::default();
        }
        let n = series.len() as f64;
        let mse_per_axis = sq.map(|s| s / n);
        let mean = series.iter().map(|(_, c)| c).sum::<f64>() / n;
        let var = series.iter().map(|(_, c)| (c - mean) * (c - mean)).sum::<f64>() / n;
        MetricsReport {
            mse_per_axis,
            mse_total: mse_per_axis.iter().sum::<f64>() / 3.0,
            compound_series: series,
            compound_mean: mean,
            compound_std: var.sqrt(),
        }
    }
}
