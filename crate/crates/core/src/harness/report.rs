use std::fmt::Write as _;

use serde::Serialize;

use super::metrics::MetricsRecord;
use crate::error::{Error, Result};

/// One run's records with deltas against its first record.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSeries {
    pub label: String,
    pub points: Vec<SeriesPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub step: u64,
    pub loss: f64,
    pub delta_loss: f64,
    pub position_accuracy: Option<f64>,
    pub delta_position_accuracy: Option<f64>,
    pub learning_rate: f64,
}

pub fn series(label: &str, records: &[MetricsRecord]) -> Result<RunSeries> {
    let first = records
        .first()
        .ok_or_else(|| Error::Data(format!("{label}: metrics file has no records")))?;
    let points = records
        .iter()
        .map(|r| SeriesPoint {
            step: r.step,
            loss: r.loss,
            delta_loss: r.loss - first.loss,
            position_accuracy: r.position_accuracy,
            delta_position_accuracy: r.position_accuracy.zip(first.position_accuracy).map(|(a, b)| a - b),
            learning_rate: r.learning_rate,
        })
        .collect();
    Ok(RunSeries {
        label: label.to_string(),
        points,
    })
}

impl RunSeries {
    /// Comma-separated values with a header row; missing values are empty.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let mut s = String::from("step,loss,delta_loss,position_accuracy,delta_position_accuracy,learning_rate\n");
        for p in &self.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                p.step,
                p.loss,
                p.delta_loss,
                opt(p.position_accuracy),
                opt(p.delta_position_accuracy),
                p.learning_rate
            );
        }
        s
    }
}

/// One row per run: final values and their change since the first record.
pub fn comparison_table(runs: &[RunSeries]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<24} {:>8} {:>8} {:>10} {:>10} {:>9} {:>9}",
        "run", "from", "to", "loss", "Δloss", "pos acc", "Δacc"
    );
    for r in runs {
        let (Some(first), Some(last)) = (r.points.first(), r.points.last()) else { continue };
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |a| format!("{:.1}", 100.0 * a));
        let _ = writeln!(
            s,
            "{:<24} {:>8} {:>8} {:>10.4} {:>+10.4} {:>9} {:>9}",
            r.label,
            first.step,
            last.step,
            last.loss,
            last.delta_loss,
            pct(last.position_accuracy),
            pct(last.delta_position_accuracy)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: u64, loss: f64, acc: f64) -> MetricsRecord {
        MetricsRecord {
            step,
            loss,
            position_accuracy: Some(acc),
            ..Default::default()
        }
    }

    #[test]
    fn deltas_are_relative_to_the_first_record() {
        let s = series("a", &[rec(0, 3.0, 0.05), rec(10, 2.5, 0.25), rec(20, 1.0, 0.75)]).unwrap();
        let d: Vec<f64> = s.points.iter().map(|p| p.delta_loss).collect();
        assert_eq!(d, vec![0.0, -0.5, -2.0]);
        assert_eq!(s.points[2].delta_position_accuracy, Some(0.7));
        let csv = s.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(1).unwrap().starts_with("0,3,0,0.05,0,"));
        let table = comparison_table(&[s.clone(), RunSeries { label: "b".into(), ..s }]);
        assert_eq!(table.lines().count(), 3);
        assert!(series("empty", &[]).is_err());
    }
}
