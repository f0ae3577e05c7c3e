//! Reader for HighD-style trajectory recordings.
//!
//! A recording is a `<id>_tracks.csv` file next to a `<id>_recordingMeta.csv`
//! file. Only these track columns are used (others are ignored):
//! `frame,id,laneId,x,xVelocity,xAcceleration,precedingId,width`.
//! The metadata file must carry `frameRate`.
//!
//! `x` is the left edge of the bounding box and `width` its extent along the
//! road, as in HighD. Frames are normalised to the direction of travel: speed
//! is `|xVelocity|`, acceleration is positive when speeding up, and
//! `position` is the front bumper measured along the direction of travel.
//! `precedingId` of 0 means no preceding vehicle.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SituationError;
use crate::numfmt::{parse_decimal, parse_integer};

const TRACK_COLUMNS: [&str; 8] = [
    "frame",
    "id",
    "laneId",
    "x",
    "xVelocity",
    "xAcceleration",
    "precedingId",
    "width",
];
const TRACKS_SUFFIX: &str = "_tracks.csv";
const META_SUFFIX: &str = "_recordingMeta.csv";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackFrame {
    pub frame_index: u64,
    pub vehicle_id: u64,
    pub lane_id: i64,
    /// Front bumper along the direction of travel, m.
    pub position: f64,
    /// m/s, non-negative.
    pub speed: f64,
    /// Along the direction of travel, m/s².
    pub acceleration: f64,
    pub preceding_vehicle_id: Option<u64>,
    /// Vehicle length when known, m.
    pub length: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub id: String,
    pub frame_rate: f64,
    /// Sorted by `(frame_index, vehicle_id)`.
    pub frames: Vec<TrackFrame>,
}

impl Recording {
    pub fn new(id: impl Into<String>, frame_rate: f64, mut frames: Vec<TrackFrame>) -> Self {
        frames.sort_by_key(|f| (f.frame_index, f.vehicle_id));
        Self {
            id: id.into(),
            frame_rate,
            frames,
        }
    }
}

/// Load one recording (a `_tracks.csv` file) or every recording in a
/// directory, ordered by file name.
pub fn ingest_tracks(source: &Path) -> Result<Vec<Recording>, SituationError> {
    if source.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(source)
            .map_err(|e| SituationError::io(source, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.ends_with(TRACKS_SUFFIX))
            })
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(SituationError::NoRecordings(source.display().to_string()));
        }
        files.iter().map(|f| read_recording(f)).collect()
    } else {
        Ok(vec![read_recording(source)?])
    }
}

fn recording_id(tracks: &Path) -> String {
    let name = tracks
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default();
    name.strip_suffix(TRACKS_SUFFIX)
        .or_else(|| name.strip_suffix(".csv"))
        .unwrap_or(name)
        .to_string()
}

fn meta_path(tracks: &Path) -> PathBuf {
    tracks.with_file_name(format!("{}{META_SUFFIX}", recording_id(tracks)))
}

pub fn read_recording(tracks: &Path) -> Result<Recording, SituationError> {
    let file = fs::File::open(tracks).map_err(|e| SituationError::io(tracks, e))?;
    let frame_rate = read_frame_rate(&meta_path(tracks))?;
    let frames = parse_tracks(file, &tracks.display().to_string())?;
    Ok(Recording::new(recording_id(tracks), frame_rate, frames))
}

fn column_indices(
    headers: &csv::StringRecord,
    wanted: &[&str],
    file: &str,
) -> Result<Vec<usize>, SituationError> {
    let mut missing = Vec::new();
    let idx: Vec<usize> = wanted
        .iter()
        .map(|w| {
            headers
                .iter()
                .position(|h| h.trim() == *w)
                .unwrap_or_else(|| {
                    missing.push(w.to_string());
                    usize::MAX
                })
        })
        .collect();
    if missing.is_empty() {
        Ok(idx)
    } else {
        Err(SituationError::Schema {
            file: file.to_string(),
            missing,
        })
    }
}

fn read_frame_rate(meta: &Path) -> Result<f64, SituationError> {
    let file = fs::File::open(meta).map_err(|e| SituationError::io(meta, e))?;
    let name = meta.display().to_string();
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| SituationError::csv(&name, e))?
        .clone();
    let idx = column_indices(&headers, &["frameRate"], &name)?[0];
    let record = reader
        .records()
        .next()
        .ok_or_else(|| SituationError::EmptyFile(name.clone()))?
        .map_err(|e| SituationError::csv(&name, e))?;
    let rate = parse_decimal(record.get(idx).unwrap_or_default().trim()).map_err(|msg| {
        SituationError::Cell {
            file: name.clone(),
            line: 2,
            column: "frameRate".into(),
            msg,
        }
    })?;
    if !(rate > 0.0) {
        return Err(SituationError::Cell {
            file: name,
            line: 2,
            column: "frameRate".into(),
            msg: format!("must be > 0, got {rate}"),
        });
    }
    Ok(rate)
}

/// Parse track rows from any reader. `file` is only used in error messages.
pub fn parse_tracks<R: std::io::Read>(
    input: R,
    file: &str,
) -> Result<Vec<TrackFrame>, SituationError> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| SituationError::csv(file, e))?
        .clone();
    if headers.is_empty() {
        return Err(SituationError::EmptyFile(file.to_string()));
    }
    let idx = column_indices(&headers, &TRACK_COLUMNS, file)?;
    let mut frames = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| SituationError::csv(file, e))?;
        let line = row as u64 + 2;
        let cell = |k: usize| record.get(idx[k]).unwrap_or_default().trim();
        let bad = |k: usize, msg: String| SituationError::Cell {
            file: file.to_string(),
            line,
            column: TRACK_COLUMNS[k].to_string(),
            msg,
        };
        let int = |k: usize| parse_integer(cell(k)).map_err(|m| bad(k, m));
        let num = |k: usize| {
            parse_decimal(cell(k))
                .and_then(|v| {
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(format!("non-finite value {v}"))
                    }
                })
                .map_err(|m| bad(k, m))
        };
        let frame = int(0)?;
        let id = int(1)?;
        if frame < 0 {
            return Err(bad(0, "negative frame".into()));
        }
        if id < 0 {
            return Err(bad(1, "negative id".into()));
        }
        let lane_id = int(2)?;
        let x = num(3)?;
        let x_velocity = num(4)?;
        let x_acceleration = num(5)?;
        let preceding = int(6)?;
        let width = num(7)?;
        let direction = if x_velocity < 0.0 { -1.0 } else { 1.0 };
        let length = (width > 0.0).then_some(width);
        let front = if direction > 0.0 {
            x + width.max(0.0)
        } else {
            x
        };
        frames.push(TrackFrame {
            frame_index: frame as u64,
            vehicle_id: id as u64,
            lane_id,
            position: front * direction,
            speed: x_velocity.abs(),
            acceleration: x_acceleration * direction,
            preceding_vehicle_id: (preceding > 0).then_some(preceding as u64),
            length,
        });
    }
    if frames.is_empty() {
        return Err(SituationError::EmptyFile(file.to_string()));
    }
    Ok(frames)
}
