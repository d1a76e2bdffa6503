//! Error-metric aggregation across runs and the timing report produced by
//! the profiler.

use lineloc_core::{RunLog, StepTimings};

use crate::CliError;

/// Max and mean absolute error with the population standard deviation of
/// the absolute errors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisStats {
    pub max: f64,
    pub mae: f64,
    pub std: f64,
}

pub fn axis_stats(values: impl Iterator<Item = f64>) -> Option<AxisStats> {
    let abs: Vec<f64> = values.map(f64::abs).collect();
    if abs.is_empty() {
        return None;
    }
    let max = abs.iter().copied().fold(0.0, f64::max);
    let mae = abs.iter().sum::<f64>() / abs.len() as f64;
    let var = abs.iter().map(|v| (v - mae) * (v - mae)).sum::<f64>() / abs.len() as f64;
    Some(AxisStats { max, mae, std: var.sqrt() })
}

/// Aggregated errors of one model variant across runs.
#[derive(Clone, Debug, PartialEq)]
pub struct VariantMetrics {
    pub variant: String,
    pub runs: usize,
    pub rows: usize,
    pub longitudinal: AxisStats,
    pub lateral: AxisStats,
    pub angular: AxisStats,
}

/// Per-variant table of Max and MAE +- std for the three error axes.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct MetricsTable {
    pub rows: Vec<VariantMetrics>,
}

impl MetricsTable {
    /// Aggregates labeled run logs, skipping the first `skip_seconds` of
    /// each run. Logs without ground truth are an error.
    pub fn from_labeled_logs(
        logs: &[(String, RunLog)],
        skip_seconds: f64,
    ) -> Result<Self, CliError> {
        let mut variants: Vec<String> = Vec::new();
        for (label, _) in logs {
            if !variants.contains(label) {
                variants.push(label.clone());
            }
        }
        let mut rows = Vec::new();
        for variant in variants {
            let group: Vec<&RunLog> = logs
                .iter()
                .filter(|(label, _)| *label == variant)
                .map(|(_, log)| log)
                .collect();
            let selected: Vec<_> = group
                .iter()
                .flat_map(|log| log.rows.iter())
                .filter(|row| row.t > skip_seconds)
                .filter_map(|row| row.error)
                .collect();
            if selected.is_empty() {
                return Err(CliError::Io(format!(
                    "no rows with ground-truth error columns for variant {variant:?}"
                )));
            }
            rows.push(VariantMetrics {
                variant,
                runs: group.len(),
                rows: selected.len(),
                longitudinal: axis_stats(selected.iter().map(|e| e.longitudinal)).unwrap(),
                lateral: axis_stats(selected.iter().map(|e| e.lateral)).unwrap(),
                angular: axis_stats(selected.iter().map(|e| e.angular)).unwrap(),
            });
        }
        Ok(Self { rows })
    }

    /// Plain-text table; angular errors shown in both radians and degrees.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<15} {:>5} {:>7} | {:>9} {:>9} {:>9} | {:>9} {:>9} {:>9} | {:>10} {:>10} {:>10} {:>9}\n",
            "model", "runs", "rows", "lon_max", "lon_mae", "lon_std", "lat_max", "lat_mae",
            "lat_std", "ang_max", "ang_mae", "ang_std", "ang_mae*",
        ));
        out.push_str(&format!(
            "{:<15} {:>5} {:>7} | {:>9} {:>9} {:>9} | {:>9} {:>9} {:>9} | {:>10} {:>10} {:>10} {:>9}\n",
            "", "", "", "[m]", "[m]", "[m]", "[m]", "[m]", "[m]", "[rad]", "[rad]", "[rad]", "[deg]",
        ));
        for row in &self.rows {
            out.push_str(&format!(
                "{:<15} {:>5} {:>7} | {:>9.3} {:>9.3} {:>9.3} | {:>9.3} {:>9.3} {:>9.3} | {:>10.4} {:>10.4} {:>10.4} {:>9.3}\n",
                row.variant,
                row.runs,
                row.rows,
                row.longitudinal.max,
                row.longitudinal.mae,
                row.longitudinal.std,
                row.lateral.max,
                row.lateral.mae,
                row.lateral.std,
                row.angular.max,
                row.angular.mae,
                row.angular.std,
                row.angular.mae.to_degrees(),
            ));
        }
        if self.rows.len() >= 2 {
            let base = &self.rows[0];
            for row in &self.rows[1..] {
                out.push_str(&format!(
                    "delta {} vs {}: lon_mae {:+.1}%, lat_mae {:+.1}%, ang_mae {:+.1}%\n",
                    row.variant,
                    base.variant,
                    percent_delta(row.longitudinal.mae, base.longitudinal.mae),
                    percent_delta(row.lateral.mae, base.lateral.mae),
                    percent_delta(row.angular.mae, base.angular.mae),
                ));
            }
        }
        out
    }

    /// Machine-readable CSV mirror of the text table (radians).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "variant,runs,rows,lon_max,lon_mae,lon_std,lat_max,lat_mae,lat_std,ang_max_rad,ang_mae_rad,ang_std_rad,ang_max_deg,ang_mae_deg,ang_std_deg\n",
        );
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                row.variant,
                row.runs,
                row.rows,
                row.longitudinal.max,
                row.longitudinal.mae,
                row.longitudinal.std,
                row.lateral.max,
                row.lateral.mae,
                row.lateral.std,
                row.angular.max,
                row.angular.mae,
                row.angular.std,
                row.angular.max.to_degrees(),
                row.angular.mae.to_degrees(),
                row.angular.std.to_degrees(),
            ));
        }
        out
    }

    pub fn variant(&self, name: &str) -> Option<&VariantMetrics> {
        self.rows.iter().find(|r| r.variant == name)
    }
}

pub fn percent_delta(a: f64, b: f64) -> f64 {
    (a - b) / b * 100.0
}

/// Mean per-iteration cost and the percentage breakdown of one filter
/// iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct TimingReport {
    pub iterations: usize,
    pub segments: usize,
    pub points: usize,
    pub particles: usize,
    pub mean_total_ms: f64,
    pub pct_transform: f64,
    pub pct_shift: f64,
    pub pct_angular: f64,
    pub pct_resample: f64,
    pub pct_other: f64,
}

impl TimingReport {
    pub fn from_timings(
        timings: &[StepTimings],
        segments: usize,
        points: usize,
        particles: usize,
    ) -> Self {
        let n = timings.len().max(1) as f64;
        let ms = |f: fn(&StepTimings) -> std::time::Duration| {
            timings.iter().map(|t| StepTimings::ms(f(t))).sum::<f64>() / n
        };
        let total = ms(|t| t.total);
        let transform = ms(|t| t.transform);
        let shift = ms(|t| t.shift);
        let angular = ms(|t| t.angular);
        let resample = ms(|t| t.resample);
        let pct = |part: f64| part / total * 100.0;
        Self {
            iterations: timings.len(),
            segments,
            points,
            particles,
            mean_total_ms: total,
            pct_transform: pct(transform),
            pct_shift: pct(shift),
            pct_angular: pct(angular),
            pct_resample: pct(resample),
            pct_other: 100.0 - pct(transform) - pct(shift) - pct(angular) - pct(resample),
        }
    }

    pub fn render_text(&self) -> String {
        format!(
            "profiled {} iterations: {} particles, {} segments ({} points) per measurement\n\
             mean iteration: {:.3} ms ({:.1} Hz)\n\
             breakdown: transform {:.1}%, shift {:.1}%, angular {:.1}%, resample {:.1}%, other {:.1}%\n",
            self.iterations,
            self.particles,
            self.segments,
            self.points,
            self.mean_total_ms,
            1000.0 / self.mean_total_ms,
            self.pct_transform,
            self.pct_shift,
            self.pct_angular,
            self.pct_resample,
            self.pct_other,
        )
    }
}
