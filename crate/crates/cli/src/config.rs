//! Run configuration: one JSON document, every field optional.
//!
//! Speeds are in km/h, accelerations in m/s², times in seconds and distances
//! in meters. Command-line flags override values read from the file.

use std::path::{Path, PathBuf};

use avmtbf::kinematics::{BrakingProfile, RssParams, SeverityThresholds};
use avmtbf::perception::{AssessmentSettings, CountingMode, ErrorTolerance};
use avmtbf::situations::{SituationSettings, SpeedRangePartition};
use avmtbf::units::kmh_to_mps;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Must be 1.
    pub schema_version: u32,
    /// RSS distance parameters. Default: 0.5 s, 2, 4, 8 m/s².
    pub rss: RssParams,
    /// Ego (rear) braking: 0.5 s reaction, 8 m/s².
    pub braking: BrakingProfile,
    /// Deceleration of a lead vehicle braking on a false alarm, m/s². Default 8.
    pub lead_deceleration_mps2: f64,
    /// Default `[80, 100, 130, 180]`.
    pub partition_kmh: Vec<f64>,
    /// TTC limit 5 s, assumed ego acceleration 2 m/s², mode dead band 0.1 m/s².
    pub situations: SituationSettings,
    /// Default `error_frames`.
    pub counting: CountingMode,
    pub severity: SeverityConfig,
    pub tolerance: ToleranceConfig,
    /// Worst-case speed for error severity; falls back to the log metadata.
    pub road_max_speed_kmh: Option<f64>,
    /// Use each error type's pooled rate in every speed range. Default true.
    pub speed_independent_rates: bool,
    pub inputs: InputPaths,
}

/// Δv band boundaries, km/h, all exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeverityConfig {
    /// Default 10.
    pub s1_above_kmh: f64,
    /// Default 30.
    pub severe_above_kmh: f64,
    /// Default none.
    pub s3_above_kmh: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceConfig {
    /// Default 0.1.
    pub distance_m: f64,
    /// Default 0.36 (0.1 m/s).
    pub velocity_kmh: f64,
}

/// Fallback input paths, used when the matching flag is absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputPaths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tracks: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_meta: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub situations: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rates: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tree: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            rss: RssParams::default(),
            braking: BrakingProfile::default(),
            lead_deceleration_mps2: 8.0,
            partition_kmh: SpeedRangePartition::highway().boundaries_kmh().to_vec(),
            situations: SituationSettings::default(),
            counting: CountingMode::ErrorFrames,
            severity: SeverityConfig::default(),
            tolerance: ToleranceConfig::default(),
            road_max_speed_kmh: None,
            speed_independent_rates: true,
            inputs: InputPaths::default(),
        }
    }
}

impl Default for SeverityConfig {
    fn default() -> Self {
        Self {
            s1_above_kmh: 10.0,
            severe_above_kmh: 30.0,
            s3_above_kmh: None,
        }
    }
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            distance_m: 0.1,
            velocity_kmh: 0.36,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("config: {e}"))
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(invalid(format!(
                "unsupported schema_version {}, expected {CONFIG_SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        self.rss.validate().map_err(invalid)?;
        self.braking.validate().map_err(invalid)?;
        self.lead_braking()?;
        self.partition()?;
        self.situations.validate().map_err(invalid)?;
        self.thresholds()?;
        let t = self.tolerance;
        if !(t.distance_m >= 0.0 && t.velocity_kmh >= 0.0) {
            return Err(invalid("tolerances must be >= 0"));
        }
        if let Some(v) = self.road_max_speed_kmh {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("road_max_speed_kmh must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn partition(&self) -> Result<SpeedRangePartition, CliError> {
        SpeedRangePartition::from_kmh(&self.partition_kmh).map_err(invalid)
    }

    pub fn lead_braking(&self) -> Result<BrakingProfile, CliError> {
        BrakingProfile::new(self.braking.reaction_time, self.lead_deceleration_mps2)
            .map_err(invalid)
    }

    pub fn thresholds(&self) -> Result<SeverityThresholds, CliError> {
        let s = self.severity;
        SeverityThresholds::new(
            kmh_to_mps(s.s1_above_kmh),
            kmh_to_mps(s.severe_above_kmh),
            s.s3_above_kmh.map(kmh_to_mps),
        )
        .map_err(invalid)
    }

    pub fn assessment(&self, road_max_speed_kmh: f64) -> Result<AssessmentSettings, CliError> {
        Ok(AssessmentSettings {
            rss: self.rss,
            braking: self.braking,
            thresholds: self.thresholds()?,
            tolerance: ErrorTolerance {
                distance: self.tolerance.distance_m,
                velocity: kmh_to_mps(self.tolerance.velocity_kmh),
            },
            road_max_speed: kmh_to_mps(road_max_speed_kmh),
        })
    }
}
