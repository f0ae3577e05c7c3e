//! Perception error taxonomy and error-rate estimation from perception logs.
//!
//! A Type I error overestimates the risk (false alarm, object perceived
//! closer or slower than it is); a Type II error underestimates it (miss,
//! object perceived farther or faster). An error is safety relevant when it
//! flips the RSS safety decision, and severe when its worst-case collision
//! exceeds the severe Δv threshold.
//!
//! # Perception log format
//!
//! CSV, UTF-8, header exactly
//! `frame,object_id,real_distance,perceived_distance,real_velocity,perceived_velocity,ego_speed`.
//! Numbers use `.` as decimal point and no thousands separators; an empty
//! field means absent. Distances are meters, velocities km/h (the lead
//! object's absolute speed and the ego speed). A row with empty `object_id`
//! and both distances empty only records the ego speed of a frame without
//! objects. A JSON sidecar carries `frame_rate` (Hz), `road_max_speed`
//! (km/h) and optionally `total_frames`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{
    impact_delta_v_standing, rss_longitudinal_distance, BrakingProfile, RssParams,
    SeverityThresholds,
};
use crate::numfmt::{parse_decimal, parse_optional_decimal};
use crate::situations::SpeedRangePartition;
use crate::units::{kmh_to_mps, seconds_to_hours};

pub const LOG_HEADER: [&str; 7] = [
    "frame",
    "object_id",
    "real_distance",
    "perceived_distance",
    "real_velocity",
    "perceived_velocity",
    "ego_speed",
];

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error("frame {frame}, object {object:?}: {reason}")]
    InvalidObservation {
        frame: u64,
        object: String,
        reason: String,
    },
    #[error("perception log is empty")]
    EmptyLog,
    #[error("frame rate must be > 0, got {0}")]
    InvalidFrameRate(f64),
    #[error("frame {frame} outside [0, {total_frames})")]
    FrameOutOfRange { frame: u64, total_frames: u64 },
    #[error("observation is not a safety-relevant Type II error: {0}")]
    NotSafetyRelevantTypeII(String),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: u64,
        msg: String,
    },
    #[error("{file}: header must be `{}`, got `{found}`", LOG_HEADER.join(","))]
    Header { file: String, found: String },
}

/// One associated ground-truth / perceived object pair in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectObservation {
    pub frame_index: u64,
    pub object_id: String,
    /// `None`: no real object (false alarm).
    pub real_distance: Option<f64>,
    /// `None`: object not perceived (miss).
    pub perceived_distance: Option<f64>,
    /// m/s
    pub real_velocity: Option<f64>,
    /// m/s
    pub perceived_velocity: Option<f64>,
    /// m/s
    pub ego_speed: f64,
}

impl ObjectObservation {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        let invalid = |reason: &str| PerceptionError::InvalidObservation {
            frame: self.frame_index,
            object: self.object_id.clone(),
            reason: reason.to_string(),
        };
        if self.real_distance.is_none() && self.perceived_distance.is_none() {
            return Err(invalid("both real and perceived distance are absent"));
        }
        let bad = |d: Option<f64>| d.is_some_and(|d| !(d >= 0.0 && d.is_finite()));
        if bad(self.real_distance) || bad(self.perceived_distance) {
            return Err(invalid("distances must be finite and >= 0"));
        }
        if bad(self.real_velocity)
            || bad(self.perceived_velocity)
            || !(self.ego_speed >= 0.0 && self.ego_speed.is_finite())
        {
            return Err(invalid("speeds must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorType {
    TypeI,
    TypeII,
}

impl ErrorType {
    pub const ALL: [ErrorType; 2] = [ErrorType::TypeI, ErrorType::TypeII];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorType::TypeI => "Type I",
            ErrorType::TypeII => "Type II",
        }
    }

    fn index(self) -> usize {
        match self {
            ErrorType::TypeI => 0,
            ErrorType::TypeII => 1,
        }
    }
}

/// Absolute tolerances below which perceived and real values count as equal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorTolerance {
    /// m
    pub distance: f64,
    /// m/s
    pub velocity: f64,
}

impl Default for ErrorTolerance {
    fn default() -> Self {
        Self {
            distance: 0.1,
            velocity: 0.1,
        }
    }
}

/// Classify the direction of a perception error. A difference in any
/// dimension that makes the scene look safer than it is yields Type II.
pub fn classify_error_type(
    obs: &ObjectObservation,
    tolerance: &ErrorTolerance,
) -> Result<Option<ErrorType>, PerceptionError> {
    obs.validate()?;
    let (real, perceived) = match (obs.real_distance, obs.perceived_distance) {
        (Some(_), None) => return Ok(Some(ErrorType::TypeII)),
        (None, Some(_)) => return Ok(Some(ErrorType::TypeI)),
        (Some(r), Some(p)) => (r, p),
        (None, None) => unreachable!("rejected by validate"),
    };
    let mut under = false;
    let mut over = false;
    if (perceived - real).abs() > tolerance.distance {
        under |= perceived > real;
        over |= perceived < real;
    }
    if let (Some(rv), Some(pv)) = (obs.real_velocity, obs.perceived_velocity) {
        if (pv - rv).abs() > tolerance.velocity {
            under |= pv > rv;
            over |= pv < rv;
        }
    }
    Ok(if under {
        Some(ErrorType::TypeII)
    } else if over {
        Some(ErrorType::TypeI)
    } else {
        None
    })
}

/// RSS relevance of a Type II error: perceived safe, actually unsafe.
/// A miss is passed as `d_per = f64::INFINITY`.
pub fn is_safety_relevant_type2(d_per: f64, d_real: f64, d_rss: f64) -> bool {
    d_per > d_rss && d_rss > d_real
}

/// Mirror of [`is_safety_relevant_type2`]: perceived unsafe, actually safe.
/// A false alarm is passed as `d_real = f64::INFINITY`.
pub fn is_safety_relevant_type1(d_per: f64, d_real: f64, d_rss: f64) -> bool {
    d_per < d_rss && d_rss < d_real
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssessmentSettings {
    pub rss: RssParams,
    pub braking: BrakingProfile,
    pub thresholds: SeverityThresholds,
    pub tolerance: ErrorTolerance,
    /// Worst-case ego speed used for severity, m/s.
    pub road_max_speed: f64,
}

impl AssessmentSettings {
    pub fn new(road_max_speed: f64) -> Self {
        Self {
            rss: RssParams::default(),
            braking: BrakingProfile::default(),
            thresholds: SeverityThresholds::default(),
            tolerance: ErrorTolerance::default(),
            road_max_speed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorAssessment {
    pub error_type: Option<ErrorType>,
    pub safety_relevant: bool,
    pub severe: bool,
    /// Worst-case impact speed, m/s. Known for Type II errors only: the
    /// consequence of a Type I error depends on the following traffic.
    pub worst_case_delta_v: Option<f64>,
}

impl ErrorAssessment {
    const NONE: ErrorAssessment = ErrorAssessment {
        error_type: None,
        safety_relevant: false,
        severe: false,
        worst_case_delta_v: None,
    };
}

/// Classify, check safety relevance and, for relevant Type II errors,
/// estimate the worst-case severity (lead standing, ego at road max speed).
///
/// Relevance compares each distance with the RSS distance computed from the
/// matching lead velocity (perceived for the perceived side, real for the
/// real side; a standing lead when absent). With equal velocities this is
/// the plain `d_per > d_RSS > d_real` indicator.
pub fn assess_observation(
    obs: &ObjectObservation,
    settings: &AssessmentSettings,
) -> Result<ErrorAssessment, PerceptionError> {
    let Some(error_type) = classify_error_type(obs, &settings.tolerance)? else {
        return Ok(ErrorAssessment::NONE);
    };
    let real_v = obs.real_velocity.unwrap_or(0.0);
    let perceived_v = obs.perceived_velocity.or(obs.real_velocity).unwrap_or(0.0);
    let d_rss_real = rss_longitudinal_distance(obs.ego_speed, real_v, &settings.rss);
    let d_rss_perceived = rss_longitudinal_distance(obs.ego_speed, perceived_v, &settings.rss);
    let d_per = obs.perceived_distance.unwrap_or(f64::INFINITY);
    let d_real = obs.real_distance.unwrap_or(f64::INFINITY);
    let judged_safe = d_per > d_rss_perceived;
    let actually_safe = d_real > d_rss_real;
    match error_type {
        ErrorType::TypeII => {
            let relevant = judged_safe && d_rss_real > d_real;
            if !relevant {
                return Ok(ErrorAssessment {
                    error_type: Some(error_type),
                    ..ErrorAssessment::NONE
                });
            }
            let delta_v =
                impact_delta_v_standing(settings.road_max_speed, d_real, &settings.braking);
            Ok(ErrorAssessment {
                error_type: Some(error_type),
                safety_relevant: true,
                severe: settings.thresholds.classify(delta_v).is_severe(),
                worst_case_delta_v: Some(delta_v),
            })
        }
        ErrorType::TypeI => {
            let relevant = d_per < d_rss_perceived && actually_safe;
            Ok(ErrorAssessment {
                error_type: Some(error_type),
                safety_relevant: relevant,
                severe: relevant,
                worst_case_delta_v: None,
            })
        }
    }
}

/// Worst-case severity of an observation that must be a safety-relevant
/// Type II error.
pub fn assess_severity(
    obs: &ObjectObservation,
    settings: &AssessmentSettings,
) -> Result<ErrorAssessment, PerceptionError> {
    let assessment = assess_observation(obs, settings)?;
    if assessment.error_type == Some(ErrorType::TypeII) && assessment.safety_relevant {
        Ok(assessment)
    } else {
        Err(PerceptionError::NotSafetyRelevantTypeII(format!(
            "frame {} object {:?} assessed as {:?}",
            obs.frame_index, obs.object_id, assessment
        )))
    }
}

/// Pre-associated perception results of one drive.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionLog {
    pub frame_rate: f64,
    pub total_frames: u64,
    pub observations: Vec<ObjectObservation>,
    /// Ego speed per frame (m/s), from observations and speed-only rows.
    pub frame_speeds: BTreeMap<u64, f64>,
}

impl PerceptionLog {
    pub fn new(
        frame_rate: f64,
        total_frames: u64,
        observations: Vec<ObjectObservation>,
    ) -> Result<Self, PerceptionError> {
        let mut frame_speeds = BTreeMap::new();
        for o in &observations {
            frame_speeds.entry(o.frame_index).or_insert(o.ego_speed);
        }
        let log = Self {
            frame_rate,
            total_frames,
            observations,
            frame_speeds,
        };
        log.validate()?;
        Ok(log)
    }

    /// Record the ego speed of a frame (for frames without observations).
    pub fn set_frame_speed(&mut self, frame: u64, speed: f64) -> Result<(), PerceptionError> {
        if frame >= self.total_frames {
            return Err(PerceptionError::FrameOutOfRange {
                frame,
                total_frames: self.total_frames,
            });
        }
        self.frame_speeds.insert(frame, speed);
        Ok(())
    }

    pub fn validate(&self) -> Result<(), PerceptionError> {
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(PerceptionError::InvalidFrameRate(self.frame_rate));
        }
        if self.total_frames == 0 {
            return Err(PerceptionError::EmptyLog);
        }
        for o in &self.observations {
            o.validate()?;
            if o.frame_index >= self.total_frames {
                return Err(PerceptionError::FrameOutOfRange {
                    frame: o.frame_index,
                    total_frames: self.total_frames,
                });
            }
        }
        Ok(())
    }

    pub fn duration_hours(&self) -> f64 {
        seconds_to_hours(self.total_frames as f64 / self.frame_rate)
    }
}

/// Sidecar metadata of a perception log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogMetadata {
    /// Hz
    pub frame_rate: f64,
    /// km/h
    pub road_max_speed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_frames: Option<u64>,
}

/// Parse a perception log CSV. Velocities are read in km/h and stored in m/s.
pub fn parse_log_csv<R: std::io::Read>(
    input: R,
    file: &str,
    metadata: &LogMetadata,
) -> Result<PerceptionLog, PerceptionError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let headers = reader.headers().map_err(|e| PerceptionError::Parse {
        file: file.into(),
        line: 1,
        msg: e.to_string(),
    })?;
    if headers.iter().ne(LOG_HEADER.iter().copied()) {
        return Err(PerceptionError::Header {
            file: file.into(),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut observations = Vec::new();
    let mut speed_rows = Vec::new();
    let mut max_frame = None::<u64>;
    for (row, record) in reader.records().enumerate() {
        let line = row as u64 + 2;
        let record = record.map_err(|e| PerceptionError::Parse {
            file: file.into(),
            line,
            msg: e.to_string(),
        })?;
        let err = |column: &str, msg: String| PerceptionError::Parse {
            file: file.into(),
            line,
            msg: format!("{column}: {msg}"),
        };
        let frame: u64 = record[0]
            .parse()
            .map_err(|_| err("frame", format!("not a frame index: {:?}", &record[0])))?;
        let opt = |k: usize| parse_optional_decimal(&record[k]).map_err(|m| err(LOG_HEADER[k], m));
        let real_distance = opt(2)?;
        let perceived_distance = opt(3)?;
        let real_velocity = opt(4)?.map(kmh_to_mps);
        let perceived_velocity = opt(5)?.map(kmh_to_mps);
        let ego_speed = kmh_to_mps(parse_decimal(&record[6]).map_err(|m| err("ego_speed", m))?);
        max_frame = Some(max_frame.map_or(frame, |m| m.max(frame)));
        if record[1].is_empty() && real_distance.is_none() && perceived_distance.is_none() {
            speed_rows.push((frame, ego_speed));
            continue;
        }
        let obs = ObjectObservation {
            frame_index: frame,
            object_id: record[1].to_string(),
            real_distance,
            perceived_distance,
            real_velocity,
            perceived_velocity,
            ego_speed,
        };
        obs.validate().map_err(|e| PerceptionError::Parse {
            file: file.into(),
            line,
            msg: e.to_string(),
        })?;
        observations.push(obs);
    }
    let total_frames = match (metadata.total_frames, max_frame) {
        (Some(t), _) => t,
        (None, Some(m)) => m + 1,
        (None, None) => return Err(PerceptionError::EmptyLog),
    };
    let mut log = PerceptionLog::new(metadata.frame_rate, total_frames, observations)?;
    for (frame, speed) in speed_rows {
        log.set_frame_speed(frame, speed)?;
    }
    Ok(log)
}

pub fn read_log(
    csv_path: &Path,
    metadata_path: &Path,
) -> Result<(PerceptionLog, LogMetadata), PerceptionError> {
    let io = |p: &Path, e: &dyn std::fmt::Display| PerceptionError::Io {
        path: p.display().to_string(),
        msg: e.to_string(),
    };
    let meta_text = std::fs::read_to_string(metadata_path).map_err(|e| io(metadata_path, &e))?;
    let metadata: LogMetadata =
        serde_json::from_str(&meta_text).map_err(|e| io(metadata_path, &e))?;
    let file = std::fs::File::open(csv_path).map_err(|e| io(csv_path, &e))?;
    let log = parse_log_csv(file, &csv_path.display().to_string(), &metadata)?;
    Ok((log, metadata))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountingMode {
    /// Every (object, frame) with a severe error counts once.
    ErrorFrames,
    /// Every maximal run of consecutive error frames of one object counts once.
    ErrorEvents,
}

/// Additive per-type error counts. `ranges[t][i]` counts errors of type `t`
/// attributed to speed range `i`; `pooled[t]` counts all of them, including
/// errors in frames outside the partition or without a known ego speed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub ranges: [Vec<u64>; 2],
    pub pooled: [u64; 2],
}

impl ErrorCounts {
    pub fn new(ranges: usize) -> Self {
        Self {
            ranges: [vec![0; ranges], vec![0; ranges]],
            pooled: [0; 2],
        }
    }

    pub fn merge(mut self, other: &ErrorCounts) -> Self {
        for t in 0..2 {
            if self.ranges[t].is_empty() {
                self.ranges[t] = vec![0; other.ranges[t].len()];
            }
            for (a, b) in self.ranges[t].iter_mut().zip(&other.ranges[t]) {
                *a += b;
            }
            self.pooled[t] += other.pooled[t];
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRateCell {
    pub error_type: ErrorType,
    pub range: usize,
    pub error_count: u64,
    pub exposure_hours: f64,
    pub rate_per_hour: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledRate {
    pub error_type: ErrorType,
    pub error_count: u64,
    pub exposure_hours: f64,
    pub rate_per_hour: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRateTable {
    pub partition: SpeedRangePartition,
    pub counting: CountingMode,
    pub frame_rate: f64,
    pub total_frames: u64,
    /// Frames whose ego speed lies outside the partition.
    pub discarded_frames: u64,
    /// Frames without any recorded ego speed.
    pub unattributed_frames: u64,
    pub cells: Vec<ErrorRateCell>,
    /// Rate over the whole log, ignoring speed ranges.
    pub pooled: Vec<PooledRate>,
    pub rate_unit: String,
}

impl ErrorRateTable {
    pub fn cell(&self, error_type: ErrorType, range: usize) -> Option<&ErrorRateCell> {
        self.cells
            .iter()
            .find(|c| c.error_type == error_type && c.range == range)
    }

    pub fn rate(&self, error_type: ErrorType, range: usize) -> f64 {
        self.cell(error_type, range)
            .map_or(0.0, |c| c.rate_per_hour)
    }

    pub fn pooled_rate(&self, error_type: ErrorType) -> f64 {
        self.pooled
            .iter()
            .find(|p| p.error_type == error_type)
            .map_or(0.0, |p| p.rate_per_hour)
    }

    /// Rates per speed range. With `speed_independent` every range gets the
    /// pooled rate of the whole log.
    pub fn rates(&self, error_type: ErrorType, speed_independent: bool) -> Vec<f64> {
        (0..self.partition.len())
            .map(|i| {
                if speed_independent {
                    self.pooled_rate(error_type)
                } else {
                    self.rate(error_type, i)
                }
            })
            .collect()
    }
}

fn rate(count: u64, hours: f64) -> f64 {
    if hours > 0.0 {
        count as f64 / hours
    } else {
        0.0
    }
}

/// Count severe, safety-relevant errors per type and speed range and divide
/// by the exposure time of each range.
pub fn error_rate_table(
    log: &PerceptionLog,
    partition: &SpeedRangePartition,
    settings: &AssessmentSettings,
    counting: CountingMode,
) -> Result<ErrorRateTable, PerceptionError> {
    log.validate()?;
    let n = partition.len();

    // (object, type) -> sorted error frames
    let mut per_object: HashMap<(&str, ErrorType), Vec<u64>> = HashMap::new();
    for obs in &log.observations {
        let a = assess_observation(obs, settings)?;
        if let (Some(t), true) = (a.error_type, a.severe) {
            per_object
                .entry((obs.object_id.as_str(), t))
                .or_default()
                .push(obs.frame_index);
        }
    }

    let range_of_frame = |frame: u64| {
        log.frame_speeds
            .get(&frame)
            .and_then(|&s| partition.range_of(s))
    };
    let mut groups: Vec<_> = per_object.into_iter().collect();
    groups.sort_by(|a, b| a.0.cmp(&b.0));
    let counts = groups
        .par_iter()
        .map(|((_, t), frames)| {
            let mut frames = frames.clone();
            frames.sort_unstable();
            frames.dedup();
            let mut c = ErrorCounts::new(n);
            let k = t.index();
            let mut previous: Option<u64> = None;
            for &f in &frames {
                let starts_run = previous.is_none_or(|p| f != p + 1);
                previous = Some(f);
                if counting == CountingMode::ErrorEvents && !starts_run {
                    continue;
                }
                c.pooled[k] += 1;
                if let Some(i) = range_of_frame(f) {
                    c.ranges[k][i] += 1;
                }
            }
            c
        })
        .collect::<Vec<_>>()
        .iter()
        .fold(ErrorCounts::new(n), |acc, c| acc.merge(c));

    let mut range_frames = vec![0u64; n];
    let mut discarded = 0u64;
    for (_, &speed) in log.frame_speeds.range(..log.total_frames) {
        match partition.range_of(speed) {
            Some(i) => range_frames[i] += 1,
            None => discarded += 1,
        }
    }
    let attributed = log.frame_speeds.range(..log.total_frames).count() as u64;
    let hours = |frames: u64| seconds_to_hours(frames as f64 / log.frame_rate);

    let mut cells = Vec::with_capacity(2 * n);
    let mut pooled = Vec::with_capacity(2);
    for t in ErrorType::ALL {
        let k = t.index();
        for (i, &frames) in range_frames.iter().enumerate() {
            let exposure = hours(frames);
            cells.push(ErrorRateCell {
                error_type: t,
                range: i,
                error_count: counts.ranges[k][i],
                exposure_hours: exposure,
                rate_per_hour: rate(counts.ranges[k][i], exposure),
            });
        }
        let exposure = log.duration_hours();
        pooled.push(PooledRate {
            error_type: t,
            error_count: counts.pooled[k],
            exposure_hours: exposure,
            rate_per_hour: rate(counts.pooled[k], exposure),
        });
    }
    Ok(ErrorRateTable {
        partition: partition.clone(),
        counting,
        frame_rate: log.frame_rate,
        total_frames: log.total_frames,
        discarded_frames: discarded,
        unattributed_frames: log.total_frames - attributed,
        cells,
        pooled,
        rate_unit: "errors_per_hour".into(),
    })
}
