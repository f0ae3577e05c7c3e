use serde::{Deserialize, Serialize};

use super::{Recording, SituationError, SpeedRangePartition};

/// Shift of the retained speed distribution when one more recording is added.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStep {
    /// Number of recordings before the step.
    pub recordings: usize,
    pub added_recording: String,
    pub samples_before: usize,
    pub samples_after: usize,
    /// Two-sample Kolmogorov–Smirnov statistic.
    pub ks_statistic: f64,
}

/// Two-sample Kolmogorov–Smirnov statistic of already sorted samples.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.is_empty() && b.is_empty() {
            0.0
        } else {
            1.0
        };
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// KS statistic between the cumulative retained speed sample after `k` and
/// after `k + 1` recordings, for every `k`.
pub fn convergence_report(
    recordings: &[Recording],
    partition: &SpeedRangePartition,
) -> Result<Vec<ConvergenceStep>, SituationError> {
    if recordings.len() < 2 {
        return Err(SituationError::TooFewRecordings(recordings.len()));
    }
    let mut cumulative: Vec<f64> = Vec::new();
    let mut steps = Vec::with_capacity(recordings.len() - 1);
    for (k, rec) in recordings.iter().enumerate() {
        let mut next: Vec<f64> = rec
            .frames
            .iter()
            .map(|f| f.speed)
            .filter(|&s| partition.range_of(s).is_some())
            .collect();
        next.extend_from_slice(&cumulative);
        next.sort_by(f64::total_cmp);
        if k > 0 {
            steps.push(ConvergenceStep {
                recordings: k,
                added_recording: rec.id.clone(),
                samples_before: cumulative.len(),
                samples_after: next.len(),
                ks_statistic: ks_statistic(&cumulative, &next),
            });
        }
        cumulative = next;
    }
    Ok(steps)
}

/// CSV rendering: `recordings,added_recording,samples_before,samples_after,ks_statistic`.
pub fn convergence_csv(steps: &[ConvergenceStep]) -> String {
    let mut out =
        String::from("recordings,added_recording,samples_before,samples_after,ks_statistic\n");
    for s in steps {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.recordings, s.added_recording, s.samples_before, s.samples_after, s.ks_statistic
        ));
    }
    out
}
