//! Potentially dangerous traffic situations mined from naturalistic
//! trajectory data.
//!
//! For every ego frame inside the speed partition the extractor looks at the
//! same-lane preceding vehicle and sorts the frame into one situation cell:
//!
//! - lead decelerating (counted regardless of distance),
//! - lead accelerating, slower than ego and TTC within the limit,
//! - lead at constant speed, slower than ego and TTC within the limit,
//! - anything else (no situation).
//!
//! Cell shares per speed range give `p_d`, `p_a·p_aTTC` and `p_c·p_cTTC`,
//! whose sum is the situation probability `p_S`.

mod convergence;
mod partition;
pub mod tracks;

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{ttc, FollowState};
pub use convergence::{convergence_csv, convergence_report, ks_statistic, ConvergenceStep};
pub use partition::SpeedRangePartition;
pub use tracks::{ingest_tracks, Recording, TrackFrame};

#[derive(Debug, Error)]
pub enum SituationError {
    #[error("invalid speed partition: {0}")]
    Partition(String),
    #[error("{file}: missing required column(s): {}", missing.join(", "))]
    Schema { file: String, missing: Vec<String> },
    #[error("{file}:{line}: column {column}: {msg}")]
    Cell {
        file: String,
        line: u64,
        column: String,
        msg: String,
    },
    #[error("{0}: empty file")]
    EmptyFile(String),
    #[error("{0}: no recordings")]
    NoRecordings(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{file}: {msg}")]
    Csv { file: String, msg: String },
    #[error("no frames left inside the speed partition ({discarded} discarded)")]
    EmptyAfterFilter { discarded: u64 },
    #[error("convergence report needs at least two recordings, got {0}")]
    TooFewRecordings(usize),
    #[error("invalid situation settings: {0}")]
    Settings(String),
    #[error("situation table: {0}")]
    Table(String),
}

impl SituationError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        SituationError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn csv(file: &str, err: csv::Error) -> Self {
        SituationError::Csv {
            file: file.to_string(),
            msg: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrivingMode {
    Accelerating,
    Decelerating,
    Constant,
}

/// Dead-band classification of a longitudinal acceleration.
pub fn classify_mode(acceleration: f64, threshold: f64) -> DrivingMode {
    if acceleration > threshold {
        DrivingMode::Accelerating
    } else if acceleration < -threshold {
        DrivingMode::Decelerating
    } else {
        DrivingMode::Constant
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SituationSettings {
    /// A lead is "close" when TTC ≤ this limit (inclusive), s.
    pub ttc_limit_s: f64,
    /// Ego acceleration assumed when computing TTC, m/s².
    pub assumed_rear_accel_mps2: f64,
    /// Dead band of [`classify_mode`], m/s².
    pub mode_threshold_mps2: f64,
}

impl Default for SituationSettings {
    fn default() -> Self {
        Self {
            ttc_limit_s: 5.0,
            assumed_rear_accel_mps2: 2.0,
            mode_threshold_mps2: 0.1,
        }
    }
}

impl SituationSettings {
    pub fn validate(&self) -> Result<(), SituationError> {
        if !(self.ttc_limit_s > 0.0) {
            return Err(SituationError::Settings(format!(
                "ttc_limit_s must be > 0, got {}",
                self.ttc_limit_s
            )));
        }
        if !(self.assumed_rear_accel_mps2 >= 0.0) {
            return Err(SituationError::Settings(format!(
                "assumed_rear_accel_mps2 must be >= 0, got {}",
                self.assumed_rear_accel_mps2
            )));
        }
        if !(self.mode_threshold_mps2 > 0.0) {
            return Err(SituationError::Settings(format!(
                "mode_threshold_mps2 must be > 0, got {}",
                self.mode_threshold_mps2
            )));
        }
        Ok(())
    }
}

/// Raw frame counts of one speed range.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangeCounts {
    pub frames: u64,
    pub lead_frames: u64,
    pub decelerating: u64,
    pub accelerating: u64,
    pub constant: u64,
    pub accelerating_close: u64,
    pub constant_close: u64,
    pub close_follower: u64,
}

impl RangeCounts {
    fn add(&mut self, other: &RangeCounts) {
        self.frames += other.frames;
        self.lead_frames += other.lead_frames;
        self.decelerating += other.decelerating;
        self.accelerating += other.accelerating;
        self.constant += other.constant;
        self.accelerating_close += other.accelerating_close;
        self.constant_close += other.constant_close;
        self.close_follower += other.close_follower;
    }
}

/// Additive accumulator over recordings. Merging is associative and
/// commutative, so shards can be combined in any order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionCounts {
    pub ranges: Vec<RangeCounts>,
    /// Frames outside the partition.
    pub discarded_frames: u64,
    /// `precedingId` pointing to a vehicle absent from that frame.
    pub dangling_references: u64,
    /// Preceding vehicle reported in another lane; treated as no lead.
    pub lane_mismatches: u64,
    /// Gaps computed from raw positions because the lead length was unknown.
    pub gaps_without_length: u64,
}

impl ExtractionCounts {
    pub fn new(ranges: usize) -> Self {
        Self {
            ranges: vec![RangeCounts::default(); ranges],
            ..Default::default()
        }
    }

    pub fn merge(mut self, other: &ExtractionCounts) -> Self {
        if self.ranges.is_empty() {
            self.ranges = vec![RangeCounts::default(); other.ranges.len()];
        }
        for (a, b) in self.ranges.iter_mut().zip(&other.ranges) {
            a.add(b);
        }
        self.discarded_frames += other.discarded_frames;
        self.dangling_references += other.dangling_references;
        self.lane_mismatches += other.lane_mismatches;
        self.gaps_without_length += other.gaps_without_length;
        self
    }

    pub fn retained_frames(&self) -> u64 {
        self.ranges.iter().map(|r| r.frames).sum()
    }
}

fn gap_between(ego: &TrackFrame, lead: &TrackFrame, counts: &mut ExtractionCounts) -> f64 {
    let length = lead.length.unwrap_or_else(|| {
        counts.gaps_without_length += 1;
        0.0
    });
    (lead.position - length - ego.position).max(0.0)
}

/// Count situation cells of one recording.
pub fn count_recording(
    recording: &Recording,
    partition: &SpeedRangePartition,
    settings: &SituationSettings,
) -> ExtractionCounts {
    let mut counts = ExtractionCounts::new(partition.len());
    let by_key: HashMap<(u64, u64), &TrackFrame> = recording
        .frames
        .iter()
        .map(|f| ((f.frame_index, f.vehicle_id), f))
        .collect();
    let mut followers: HashMap<(u64, u64), Vec<&TrackFrame>> = HashMap::new();
    for f in &recording.frames {
        if let Some(lead) = f.preceding_vehicle_id {
            followers.entry((f.frame_index, lead)).or_default().push(f);
        }
    }

    for ego in &recording.frames {
        let Some(range) = partition.range_of(ego.speed) else {
            counts.discarded_frames += 1;
            continue;
        };
        let mut cell = RangeCounts {
            frames: 1,
            ..Default::default()
        };

        if let Some(lead_id) = ego.preceding_vehicle_id {
            match by_key.get(&(ego.frame_index, lead_id)) {
                None => counts.dangling_references += 1,
                Some(lead) if lead.lane_id != ego.lane_id => counts.lane_mismatches += 1,
                Some(lead) => {
                    cell.lead_frames = 1;
                    let gap = gap_between(ego, lead, &mut counts);
                    let closing_enough = lead.speed < ego.speed
                        && ttc(
                            &FollowState {
                                v_rear: ego.speed,
                                v_front: lead.speed,
                                gap,
                            },
                            settings.assumed_rear_accel_mps2,
                        ) <= settings.ttc_limit_s;
                    match classify_mode(lead.acceleration, settings.mode_threshold_mps2) {
                        DrivingMode::Decelerating => cell.decelerating = 1,
                        DrivingMode::Accelerating => {
                            cell.accelerating = 1;
                            cell.accelerating_close = closing_enough as u64;
                        }
                        DrivingMode::Constant => {
                            cell.constant = 1;
                            cell.constant_close = closing_enough as u64;
                        }
                    }
                }
            }
        }

        if let Some(rears) = followers.get(&(ego.frame_index, ego.vehicle_id)) {
            let close = rears.iter().any(|rear| {
                if rear.lane_id != ego.lane_id {
                    return false;
                }
                let length = ego.length.unwrap_or(0.0);
                let gap = (ego.position - length - rear.position).max(0.0);
                ttc(
                    &FollowState {
                        v_rear: rear.speed,
                        v_front: ego.speed,
                        gap,
                    },
                    settings.assumed_rear_accel_mps2,
                ) <= settings.ttc_limit_s
            });
            cell.close_follower = close as u64;
        }

        counts.ranges[range].add(&cell);
    }
    counts
}

/// Count all recordings in parallel and merge.
pub fn count_recordings(
    recordings: &[Recording],
    partition: &SpeedRangePartition,
    settings: &SituationSettings,
) -> ExtractionCounts {
    recordings
        .par_iter()
        .map(|r| count_recording(r, partition, settings))
        .collect::<Vec<_>>()
        .iter()
        .fold(ExtractionCounts::new(partition.len()), |acc, c| {
            acc.merge(c)
        })
}

/// Per-range row of a situation table. All probabilities are shares of the
/// range's retained frames except `speed_probability`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SituationRow {
    /// `p_i`
    pub speed_probability: f64,
    /// `p_d`
    pub lead_decelerating: f64,
    /// `p_a · p_aTTC`
    pub lead_accelerating_close: f64,
    /// `p_c · p_cTTC`
    pub lead_constant_close: f64,
    /// `p_S`
    pub total: f64,
    /// Share of frames with a close follower (Type I situations).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rear_follower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<RangeCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SituationTable {
    pub partition: SpeedRangePartition,
    pub rows: Vec<SituationRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settings: Option<SituationSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<ExtractionCounts>,
}

fn share(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 / whole as f64
    }
}

fn check_probability(name: &str, range: usize, p: f64) -> Result<(), SituationError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(SituationError::Table(format!(
            "{name} of range {range} is {p}, outside [0, 1]"
        )))
    }
}

impl SituationTable {
    /// Build a table from published per-range probabilities. `p_S` is the
    /// sum of the three cells.
    pub fn from_probabilities(
        partition: SpeedRangePartition,
        speed_probability: &[f64],
        lead_decelerating: &[f64],
        lead_accelerating_close: &[f64],
        lead_constant_close: &[f64],
    ) -> Result<Self, SituationError> {
        let n = partition.len();
        for (name, v) in [
            ("speed_probability", speed_probability),
            ("lead_decelerating", lead_decelerating),
            ("lead_accelerating_close", lead_accelerating_close),
            ("lead_constant_close", lead_constant_close),
        ] {
            if v.len() != n {
                return Err(SituationError::Table(format!(
                    "{name} has {} entries, partition has {n} ranges",
                    v.len()
                )));
            }
        }
        let rows = (0..n)
            .map(|i| SituationRow {
                speed_probability: speed_probability[i],
                lead_decelerating: lead_decelerating[i],
                lead_accelerating_close: lead_accelerating_close[i],
                lead_constant_close: lead_constant_close[i],
                total: lead_decelerating[i] + lead_accelerating_close[i] + lead_constant_close[i],
                rear_follower: None,
                counts: None,
            })
            .collect();
        let table = Self {
            partition,
            rows,
            settings: None,
            counts: None,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn from_counts(
        partition: SpeedRangePartition,
        settings: SituationSettings,
        counts: ExtractionCounts,
    ) -> Result<Self, SituationError> {
        let retained = counts.retained_frames();
        if retained == 0 {
            return Err(SituationError::EmptyAfterFilter {
                discarded: counts.discarded_frames,
            });
        }
        let rows = counts
            .ranges
            .iter()
            .map(|c| {
                let p_d = share(c.decelerating, c.frames);
                let p_a = share(c.accelerating_close, c.frames);
                let p_c = share(c.constant_close, c.frames);
                SituationRow {
                    speed_probability: share(c.frames, retained),
                    lead_decelerating: p_d,
                    lead_accelerating_close: p_a,
                    lead_constant_close: p_c,
                    total: p_d + p_a + p_c,
                    rear_follower: Some(share(c.close_follower, c.frames)),
                    counts: Some(*c),
                }
            })
            .collect();
        let table = Self {
            partition,
            rows,
            settings: Some(settings),
            counts: Some(counts),
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<(), SituationError> {
        if self.rows.len() != self.partition.len() {
            return Err(SituationError::Table(format!(
                "{} rows for {} speed ranges",
                self.rows.len(),
                self.partition.len()
            )));
        }
        for (i, r) in self.rows.iter().enumerate() {
            check_probability("speed_probability", i, r.speed_probability)?;
            check_probability("lead_decelerating", i, r.lead_decelerating)?;
            check_probability("lead_accelerating_close", i, r.lead_accelerating_close)?;
            check_probability("lead_constant_close", i, r.lead_constant_close)?;
            check_probability("total", i, r.total)?;
            let sum = r.lead_decelerating + r.lead_accelerating_close + r.lead_constant_close;
            if (sum - r.total).abs() > 1e-12 {
                return Err(SituationError::Table(format!(
                    "range {i}: total {} differs from cell sum {sum}",
                    r.total
                )));
            }
            if let Some(f) = r.rear_follower {
                check_probability("rear_follower", i, f)?;
            }
        }
        let mass: f64 = self.speed_probabilities().iter().sum();
        if (mass - 1.0).abs() > 1e-6 {
            return Err(SituationError::Table(format!(
                "speed probabilities sum to {mass}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn speed_probabilities(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.speed_probability).collect()
    }

    pub fn situation_probabilities(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.total).collect()
    }

    pub fn rear_follower_probabilities(&self) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.rear_follower).collect()
    }

    /// Aligned text layout: one column per speed range.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let labels: Vec<String> = (0..self.partition.len())
            .map(|i| {
                let (lo, hi) = self.partition.bounds_kmh(i);
                format!("{lo}-{hi}")
            })
            .collect();
        let width = labels.iter().map(String::len).max().unwrap_or(0).max(7);
        let mut line = |name: &str, cells: Vec<String>| {
            out.push_str(&format!("{name:<44}"));
            for c in cells {
                out.push_str(&format!(" {c:>width$}"));
            }
            out.push('\n');
        };
        let fmt = |f: fn(&SituationRow) -> f64| {
            self.rows
                .iter()
                .map(|r| format!("{:.3}", f(r)))
                .collect::<Vec<_>>()
        };
        line("Speed [km/h]", labels.clone());
        line("Speed probability [p_i]", fmt(|r| r.speed_probability));
        line(
            "Lead vehicle decelerating [p_d]",
            fmt(|r| r.lead_decelerating),
        );
        line(
            "Lead vehicle accelerating [p_a x p_aTTC]",
            fmt(|r| r.lead_accelerating_close),
        );
        line(
            "Lead vehicle constant speed [p_c x p_cTTC]",
            fmt(|r| r.lead_constant_close),
        );
        line("Total situation probability [p_S]", fmt(|r| r.total));
        if self.rows.iter().all(|r| r.rear_follower.is_some()) {
            line(
                "Close follower [Type I]",
                fmt(|r| r.rear_follower.unwrap_or(0.0)),
            );
        }
        out
    }
}

/// Situation table of a set of recordings.
pub fn extract_situation_table(
    recordings: &[Recording],
    partition: &SpeedRangePartition,
    settings: &SituationSettings,
) -> Result<SituationTable, SituationError> {
    settings.validate()?;
    let counts = count_recordings(recordings, partition, settings);
    SituationTable::from_counts(partition.clone(), *settings, counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedDistribution {
    pub partition: SpeedRangePartition,
    pub probabilities: Vec<f64>,
    pub counts: Vec<u64>,
    pub discarded_frames: u64,
}

/// Share of retained frames per speed range.
pub fn speed_distribution(
    recordings: &[Recording],
    partition: &SpeedRangePartition,
) -> Result<SpeedDistribution, SituationError> {
    let mut counts = vec![0u64; partition.len()];
    let mut discarded = 0u64;
    for frame in recordings.iter().flat_map(|r| &r.frames) {
        match partition.range_of(frame.speed) {
            Some(i) => counts[i] += 1,
            None => discarded += 1,
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(SituationError::EmptyAfterFilter { discarded });
    }
    Ok(SpeedDistribution {
        partition: partition.clone(),
        probabilities: counts.iter().map(|&c| share(c, total)).collect(),
        counts,
        discarded_frames: discarded,
    })
}

/// Per range, the share of ego frames in which a same-lane follower is within
/// the TTC limit (follower accelerating at the assumed rate).
pub fn rear_follower_probability(
    recordings: &[Recording],
    partition: &SpeedRangePartition,
    settings: &SituationSettings,
) -> Result<Vec<f64>, SituationError> {
    let table = extract_situation_table(recordings, partition, settings)?;
    Ok(table.rear_follower_probabilities().unwrap_or_default())
}

/// Wilson score interval for a binomial proportion at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::kmh_to_mps;

    fn frame(
        frame: u64,
        id: u64,
        position: f64,
        speed: f64,
        accel: f64,
        lead: Option<u64>,
    ) -> TrackFrame {
        TrackFrame {
            frame_index: frame,
            vehicle_id: id,
            lane_id: 1,
            position,
            speed,
            acceleration: accel,
            preceding_vehicle_id: lead,
            length: Some(5.0),
        }
    }

    #[test]
    fn mode_dead_band() {
        assert_eq!(classify_mode(0.5, 0.1), DrivingMode::Accelerating);
        assert_eq!(classify_mode(0.0, 0.3), DrivingMode::Constant);
        assert_eq!(classify_mode(-0.05, 0.1), DrivingMode::Constant);
        assert_eq!(classify_mode(-0.2, 0.1), DrivingMode::Decelerating);
        assert_eq!(classify_mode(0.1, 0.1), DrivingMode::Constant);
    }

    #[test]
    fn published_rows_sum() {
        let t = SituationTable::from_probabilities(
            SpeedRangePartition::highway(),
            &[0.234, 0.640, 0.126],
            &[0.028, 0.021, 0.023],
            &[0.001, 0.003, 0.004],
            &[0.279, 0.152, 0.088],
        )
        .unwrap();
        let ps = t.situation_probabilities();
        assert!((ps[0] - 0.308).abs() < 1e-12);
        assert!((ps[1] - 0.176).abs() < 1e-12);
        assert!((ps[2] - 0.115).abs() < 1e-12);
        let text = t.render_text();
        assert!(text.contains("0.176"), "{text}");
        assert!(text.lines().next().unwrap().contains("100-130"));
    }

    #[test]
    fn table_rejects_bad_rows() {
        let p = SpeedRangePartition::highway();
        assert!(SituationTable::from_probabilities(
            p.clone(),
            &[0.5, 0.5],
            &[0.0; 3],
            &[0.0; 3],
            &[0.0; 3]
        )
        .is_err());
        assert!(SituationTable::from_probabilities(
            p.clone(),
            &[0.5, 0.4, 0.2],
            &[0.0; 3],
            &[0.0; 3],
            &[0.0; 3]
        )
        .is_err());
        assert!(SituationTable::from_probabilities(
            p,
            &[0.5, 0.5, 0.0],
            &[0.9; 3],
            &[0.0; 3],
            &[0.2; 3]
        )
        .is_err());
    }

    #[test]
    fn decelerating_lead_always_counts() {
        let v = kmh_to_mps(110.0);
        let frames: Vec<_> = (0..50)
            .flat_map(|k| {
                [
                    frame(k, 1, 0.0, v, 0.0, Some(2)),
                    frame(k, 2, 500.0, v + 5.0, -1.0, None),
                ]
            })
            .collect();
        let rec = Recording::new("r", 25.0, frames);
        let p = SpeedRangePartition::from_kmh(&[100.0, 130.0]).unwrap();
        let t = extract_situation_table(&[rec], &p, &SituationSettings::default()).unwrap();
        // ego frames all have a decelerating lead; the lead itself has none
        assert_eq!(t.rows[0].lead_decelerating, 0.5);
        assert_eq!(t.rows[0].total, 0.5);

        let only_ego: Vec<_> = (0..50).map(|k| frame(k, 1, 0.0, v, 0.0, Some(2))).collect();
        let lead_out_of_range: Vec<_> = (0..50)
            .map(|k| frame(k, 2, 500.0, 1.0, -1.0, None))
            .collect();
        let rec = Recording::new("r", 25.0, [only_ego, lead_out_of_range].concat());
        let t = extract_situation_table(&[rec], &p, &SituationSettings::default()).unwrap();
        assert_eq!(t.rows[0].total, 1.0);
        assert_eq!(t.counts.as_ref().unwrap().discarded_frames, 50);
    }

    #[test]
    fn closeness_requires_slower_lead() {
        let v = kmh_to_mps(110.0);
        let p = SpeedRangePartition::from_kmh(&[0.0, 200.0]).unwrap();
        // lead faster and very close: not a situation
        let rec = Recording::new(
            "r",
            25.0,
            vec![
                frame(0, 1, 0.0, v, 0.0, Some(2)),
                frame(0, 2, 10.0, v + 1.0, 0.0, None),
            ],
        );
        let t = extract_situation_table(&[rec], &p, &SituationSettings::default()).unwrap();
        assert_eq!(t.rows[0].total, 0.0);
        // lead slower by 1 m/s, gap 5 m → TTC well below 5 s
        let rec = Recording::new(
            "r",
            25.0,
            vec![
                frame(0, 1, 0.0, v, 0.0, Some(2)),
                frame(0, 2, 10.0, v - 1.0, 0.0, None),
            ],
        );
        let t = extract_situation_table(&[rec], &p, &SituationSettings::default()).unwrap();
        assert_eq!(t.rows[0].lead_constant_close, 0.5);
        let c = t.rows[0].counts.unwrap();
        assert_eq!(c.lead_frames, c.decelerating + c.accelerating + c.constant);
    }

    #[test]
    fn dangling_and_lane_mismatch_are_reported() {
        let p = SpeedRangePartition::from_kmh(&[0.0, 200.0]).unwrap();
        let mut other_lane = frame(0, 3, 20.0, 10.0, -2.0, None);
        other_lane.lane_id = 2;
        let rec = Recording::new(
            "r",
            25.0,
            vec![
                frame(0, 1, 0.0, 20.0, 0.0, Some(9)),
                frame(0, 2, 40.0, 20.0, 0.0, Some(3)),
                other_lane,
            ],
        );
        let t = extract_situation_table(&[rec], &p, &SituationSettings::default()).unwrap();
        let c = t.counts.unwrap();
        assert_eq!(c.dangling_references, 1);
        assert_eq!(c.lane_mismatches, 1);
        assert_eq!(c.ranges[0].frames, 3);
        assert_eq!(c.ranges[0].lead_frames, 0);
    }

    #[test]
    fn all_out_of_range_is_an_error() {
        let p = SpeedRangePartition::highway();
        let rec = Recording::new("r", 25.0, vec![frame(0, 1, 0.0, 1.0, 0.0, None)]);
        assert!(matches!(
            extract_situation_table(
                std::slice::from_ref(&rec),
                &p,
                &SituationSettings::default()
            ),
            Err(SituationError::EmptyAfterFilter { discarded: 1 })
        ));
        assert!(speed_distribution(&[rec], &p).is_err());
    }

    #[test]
    fn speed_distribution_examples() {
        let p = SpeedRangePartition::highway();
        let one = Recording::new(
            "r",
            25.0,
            (0..10)
                .map(|k| frame(k, 1, 0.0, kmh_to_mps(115.0), 0.0, None))
                .collect(),
        );
        assert_eq!(
            speed_distribution(&[one], &p).unwrap().probabilities,
            vec![0.0, 1.0, 0.0]
        );

        // uniform grid over [80, 180) km/h
        let n = 100_000u64;
        let frames = (0..n)
            .map(|k| {
                frame(
                    k,
                    1,
                    0.0,
                    kmh_to_mps(80.0 + 100.0 * (k as f64 + 0.5) / n as f64),
                    0.0,
                    None,
                )
            })
            .collect();
        let d = speed_distribution(&[Recording::new("u", 25.0, frames)], &p).unwrap();
        for (got, want) in d.probabilities.iter().zip([0.2, 0.3, 0.5]) {
            assert!((got - want).abs() < 1e-4, "{got} vs {want}");
        }
        assert!((d.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn follower_probability() {
        let p = SpeedRangePartition::from_kmh(&[0.0, 200.0]).unwrap();
        let settings = SituationSettings::default();
        let lone = Recording::new(
            "r",
            25.0,
            (0..5).map(|k| frame(k, 1, 0.0, 20.0, 0.0, None)).collect(),
        );
        assert_eq!(
            rear_follower_probability(&[lone], &p, &settings).unwrap(),
            vec![0.0]
        );

        // follower 25 m behind the front vehicle's rear bumper, equal speeds:
        // ½·2·t² = 25 → TTC exactly 5 s, which counts as close.
        let convoy: Vec<_> = (0..5)
            .flat_map(|k| {
                [
                    frame(k, 1, 30.0, 20.0, 0.0, None),
                    frame(k, 2, 0.0, 20.0, 0.0, Some(1)),
                ]
            })
            .collect();
        let rec = Recording::new("c", 25.0, convoy);
        let c = count_recording(&rec, &p, &settings);
        assert_eq!(c.ranges[0].close_follower, 5);
        // the rear vehicle of the convoy has no follower of its own
        assert_eq!(
            rear_follower_probability(&[rec], &p, &settings).unwrap(),
            vec![0.5]
        );
    }

    #[test]
    fn merge_is_order_independent() {
        let a = ExtractionCounts {
            ranges: vec![RangeCounts {
                frames: 3,
                lead_frames: 2,
                decelerating: 1,
                ..Default::default()
            }],
            discarded_frames: 1,
            ..Default::default()
        };
        let b = ExtractionCounts {
            ranges: vec![RangeCounts {
                frames: 5,
                constant: 4,
                constant_close: 2,
                ..Default::default()
            }],
            dangling_references: 2,
            ..Default::default()
        };
        let c = ExtractionCounts {
            ranges: vec![RangeCounts {
                frames: 7,
                close_follower: 1,
                ..Default::default()
            }],
            gaps_without_length: 3,
            ..Default::default()
        };
        let left = a.clone().merge(&b).merge(&c);
        let right = a.clone().merge(&b.clone().merge(&c));
        let swapped = c.clone().merge(&a).merge(&b);
        assert_eq!(left, right);
        assert_eq!(left, swapped);
        assert_eq!(left.retained_frames(), 15);
    }

    #[test]
    fn wilson_contains_point_estimate() {
        let (lo, hi) = wilson_interval(30, 100, 2.576);
        assert!(lo < 0.3 && 0.3 < hi);
        assert_eq!(wilson_interval(0, 0, 1.96), (0.0, 1.0));
        let (lo, _) = wilson_interval(0, 50, 1.96);
        assert_eq!(lo, 0.0);
    }
}
