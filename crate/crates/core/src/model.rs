//! Probability-tree failure model.
//!
//! The tree branches by mission profile (`p_m`), speed range (`p_i`) and
//! error type. Each error leaf carries a perception error rate `λ_p`
//! (hardware plus software component) and the probability `p_S` that the
//! vehicle is in a situation where such an error leads to a collision:
//!
//! ```text
//! λ = Σ_m p_m Σ_i p_i Σ_t λ_p(t,m,i) · p_S(t,m,i)        MTBF = 1/λ
//! ```
//!
//! A leaf's `p_S` may be replaced by refinement children, each a conditional
//! probability with either its own `p_S` or further children. Probabilities
//! multiply down a path and paths add up.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perception::{ErrorRateTable, ErrorType};
use crate::situations::{SituationTable, SpeedRangePartition};
use crate::units::{hours_to_seconds, maybe_inf};

pub const TREE_SCHEMA_VERSION: u32 = 1;

const MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("profile probabilities {profiles} sum to {sum}, expected 1")]
    ProfileMass { profiles: String, sum: f64 },
    #[error("profile {profile:?}: {msg}")]
    Profile { profile: String, msg: String },
    #[error("index mismatch: {0}")]
    IndexMismatch(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("requirement unsatisfiable: kappa is 0, no error rate reaches the target")]
    Unsatisfiable,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported tree schema version {found}, expected {expected}")]
    SchemaVersion { found: u64, expected: u32 },
    #[error("tree document: {0}")]
    Document(String),
}

/// Conditional split of a leaf's situation probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Refinement {
    pub label: String,
    /// Conditional probability of this branch given its parent.
    pub probability: f64,
    /// Situation probability of this branch; exclusive with `children`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub situation_probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<Refinement>,
}

impl Refinement {
    pub fn leaf(label: impl Into<String>, probability: f64, situation_probability: f64) -> Self {
        Self {
            label: label.into(),
            probability,
            situation_probability: Some(situation_probability),
            children: Vec::new(),
        }
    }

    pub fn split(label: impl Into<String>, probability: f64, children: Vec<Refinement>) -> Self {
        Self {
            label: label.into(),
            probability,
            situation_probability: None,
            children,
        }
    }

    /// Probability of failure given that an error reaches this node.
    pub fn value(&self) -> f64 {
        match self.situation_probability {
            Some(p) => p,
            None => self
                .children
                .iter()
                .map(|c| c.probability * c.value())
                .sum(),
        }
    }

    fn validate(&self, at: &str) -> Result<(), String> {
        check_probability(&format!("{at}/{}", self.label), self.probability)?;
        match (self.situation_probability, self.children.is_empty()) {
            (Some(p), true) => check_probability(&format!("{at}/{} situation", self.label), p),
            (None, false) => validate_children(&format!("{at}/{}", self.label), &self.children),
            (Some(_), false) => Err(format!(
                "{at}/{}: has both a situation probability and children",
                self.label
            )),
            (None, true) => Err(format!(
                "{at}/{}: needs a situation probability or children",
                self.label
            )),
        }
    }
}

fn validate_children(at: &str, children: &[Refinement]) -> Result<(), String> {
    for c in children {
        c.validate(at)?;
    }
    let mass: f64 = children.iter().map(|c| c.probability).sum();
    if mass > 1.0 + 1e-12 {
        return Err(format!("{at}: refinement probabilities sum to {mass} > 1"));
    }
    Ok(())
}

fn check_probability(what: &str, p: f64) -> Result<(), String> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(format!("{what}: probability {p} outside [0, 1]"))
    }
}

fn check_rate(what: &str, r: f64) -> Result<(), String> {
    if r >= 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(format!("{what}: rate {r} must be finite and >= 0"))
    }
}

/// One error type under one speed range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorBranch {
    pub error_type: ErrorType,
    #[serde(default)]
    pub hardware_rate_per_hour: f64,
    #[serde(default)]
    pub software_rate_per_hour: f64,
    /// `p_S`; exclusive with `refinements`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub situation_probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub refinements: Vec<Refinement>,
}

impl ErrorBranch {
    pub fn new(error_type: ErrorType, rate_per_hour: f64, situation_probability: f64) -> Self {
        Self {
            error_type,
            hardware_rate_per_hour: 0.0,
            software_rate_per_hour: rate_per_hour,
            situation_probability: Some(situation_probability),
            refinements: Vec::new(),
        }
    }

    pub fn rate(&self) -> f64 {
        self.hardware_rate_per_hour + self.software_rate_per_hour
    }

    pub fn effective_situation_probability(&self) -> f64 {
        match self.situation_probability {
            Some(p) => p,
            None => self
                .refinements
                .iter()
                .map(|r| r.probability * r.value())
                .sum(),
        }
    }

    fn validate(&self, at: &str) -> Result<(), String> {
        check_rate(&format!("{at} hardware"), self.hardware_rate_per_hour)?;
        check_rate(&format!("{at} software"), self.software_rate_per_hour)?;
        match (self.situation_probability, self.refinements.is_empty()) {
            (Some(p), true) => check_probability(at, p),
            (None, false) => validate_children(at, &self.refinements),
            (Some(_), false) => Err(format!(
                "{at}: has both a situation probability and refinements"
            )),
            (None, true) => Err(format!(
                "{at}: needs a situation probability or refinements"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeBranch {
    /// `p_i`
    pub speed_probability: f64,
    pub errors: Vec<ErrorBranch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionProfile {
    pub name: String,
    /// `p_m`
    pub probability: f64,
    pub partition: SpeedRangePartition,
    /// One entry per range of `partition`.
    pub ranges: Vec<RangeBranch>,
}

impl MissionProfile {
    /// A profile whose every range has the same error rate for one error type.
    pub fn constant_rate(
        name: impl Into<String>,
        probability: f64,
        partition: SpeedRangePartition,
        speed_probabilities: &[f64],
        situation_probabilities: &[f64],
        error_type: ErrorType,
        rate_per_hour: f64,
    ) -> Result<Self, ModelError> {
        if speed_probabilities.len() != situation_probabilities.len() {
            return Err(ModelError::LengthMismatch {
                left: speed_probabilities.len(),
                right: situation_probabilities.len(),
            });
        }
        let ranges = speed_probabilities
            .iter()
            .zip(situation_probabilities)
            .map(|(&p_i, &p_s)| RangeBranch {
                speed_probability: p_i,
                errors: vec![ErrorBranch::new(error_type, rate_per_hour, p_s)],
            })
            .collect();
        let profile = Self {
            name: name.into(),
            probability,
            partition,
            ranges,
        };
        profile.validate()?;
        Ok(profile)
    }

    /// Combine a situation table and an error-rate table over the same
    /// partition. Type II leaves use `p_S`; a Type I leaf is added when the
    /// situation table carries close-follower probabilities.
    pub fn from_tables(
        name: impl Into<String>,
        probability: f64,
        situations: &SituationTable,
        rates: &ErrorRateTable,
        speed_independent: bool,
    ) -> Result<Self, ModelError> {
        if situations.partition != rates.partition {
            return Err(ModelError::IndexMismatch(format!(
                "situation partition {:?} vs error-rate partition {:?}",
                situations.partition.boundaries_kmh(),
                rates.partition.boundaries_kmh()
            )));
        }
        let type2 = rates.rates(ErrorType::TypeII, speed_independent);
        let type1 = rates.rates(ErrorType::TypeI, speed_independent);
        let followers = situations.rear_follower_probabilities();
        let ranges = situations
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut errors = vec![ErrorBranch::new(ErrorType::TypeII, type2[i], row.total)];
                if let Some(f) = &followers {
                    errors.insert(0, ErrorBranch::new(ErrorType::TypeI, type1[i], f[i]));
                }
                RangeBranch {
                    speed_probability: row.speed_probability,
                    errors,
                }
            })
            .collect();
        let profile = Self {
            name: name.into(),
            probability,
            partition: situations.partition.clone(),
            ranges,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |msg: String| ModelError::Profile {
            profile: self.name.clone(),
            msg,
        };
        check_probability("profile", self.probability).map_err(err)?;
        if self.ranges.len() != self.partition.len() {
            return Err(ModelError::IndexMismatch(format!(
                "profile {:?} has {} range branches for {} speed ranges",
                self.name,
                self.ranges.len(),
                self.partition.len()
            )));
        }
        for (i, r) in self.ranges.iter().enumerate() {
            let at = self.partition.label(i);
            check_probability(&at, r.speed_probability).map_err(err)?;
            for e in &r.errors {
                e.validate(&format!("{at}/{}", e.error_type.as_str()))
                    .map_err(err)?;
            }
        }
        let mass: f64 = self.ranges.iter().map(|r| r.speed_probability).sum();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(err(format!(
                "speed probabilities sum to {mass}, expected 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureModelTree {
    pub profiles: Vec<MissionProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchContribution {
    pub path: Vec<String>,
    pub rate_per_hour: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub lambda_per_hour: f64,
    #[serde(with = "maybe_inf")]
    pub mtbf_hours: f64,
    #[serde(with = "maybe_inf")]
    pub mtbf_seconds: f64,
    pub branch_contributions: Vec<BranchContribution>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeDocument {
    schema_version: u32,
    rate_unit: String,
    profiles: Vec<MissionProfile>,
}

const RATE_UNIT: &str = "per_hour";

impl FailureModelTree {
    pub fn new(profiles: Vec<MissionProfile>) -> Result<Self, ModelError> {
        let tree = Self { profiles };
        tree.validate()?;
        Ok(tree)
    }

    pub fn single(profile: MissionProfile) -> Result<Self, ModelError> {
        Self::new(vec![MissionProfile {
            probability: 1.0,
            ..profile
        }])
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.profiles.is_empty() {
            return Err(ModelError::Document("tree has no mission profiles".into()));
        }
        for p in &self.profiles {
            p.validate()?;
        }
        let sum: f64 = self.profiles.iter().map(|p| p.probability).sum();
        if (sum - 1.0).abs() > MASS_TOLERANCE {
            let profiles = self
                .profiles
                .iter()
                .map(|p| format!("{}={}", p.name, p.probability))
                .collect::<Vec<_>>()
                .join(", ");
            return Err(ModelError::ProfileMass {
                profiles: format!("[{profiles}]"),
                sum,
            });
        }
        Ok(())
    }

    /// Multiply every error rate by `factor`.
    pub fn scale_rates(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for e in out
            .profiles
            .iter_mut()
            .flat_map(|p| p.ranges.iter_mut())
            .flat_map(|r| r.errors.iter_mut())
        {
            e.hardware_rate_per_hour *= factor;
            e.software_rate_per_hour *= factor;
        }
        out
    }

    pub fn to_json(&self) -> String {
        let doc = TreeDocument {
            schema_version: TREE_SCHEMA_VERSION,
            rate_unit: RATE_UNIT.into(),
            profiles: self.profiles.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("tree serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ModelError::Document(e.to_string()))?;
        let version = value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| ModelError::Document("missing schema_version".into()))?;
        if version != TREE_SCHEMA_VERSION as u64 {
            return Err(ModelError::SchemaVersion {
                found: version,
                expected: TREE_SCHEMA_VERSION,
            });
        }
        let doc: TreeDocument =
            serde_json::from_value(value).map_err(|e| ModelError::Document(e.to_string()))?;
        if doc.rate_unit != RATE_UNIT {
            return Err(ModelError::Document(format!(
                "rate_unit must be {RATE_UNIT:?}, got {:?}",
                doc.rate_unit
            )));
        }
        Self::new(doc.profiles)
    }

    /// Evaluate the tree.
    pub fn evaluate(&self) -> Result<ModelResult, ModelError> {
        self.validate()?;
        let mut branches = Vec::new();
        for profile in &self.profiles {
            for (i, range) in profile.ranges.iter().enumerate() {
                let weight = profile.probability * range.speed_probability;
                for e in &range.errors {
                    let path = vec![
                        profile.name.clone(),
                        profile.partition.label(i),
                        e.error_type.as_str().to_string(),
                    ];
                    let rate = e.rate();
                    if e.refinements.is_empty() {
                        let p_s = e.situation_probability.unwrap_or(0.0);
                        branches.push((path, weight * (rate * p_s)));
                    } else {
                        collect_refinements(&e.refinements, path, weight * rate, &mut branches);
                    }
                }
            }
        }
        let lambda: f64 = branches.iter().map(|(_, r)| r).sum();
        let contributions = branches
            .into_iter()
            .map(|(path, rate_per_hour)| BranchContribution {
                path,
                rate_per_hour,
                share: if lambda > 0.0 {
                    rate_per_hour / lambda
                } else {
                    0.0
                },
            })
            .collect();
        let mtbf_hours = mtbf_from_rate(lambda);
        Ok(ModelResult {
            lambda_per_hour: lambda,
            mtbf_hours,
            mtbf_seconds: hours_to_seconds(mtbf_hours),
            branch_contributions: contributions,
        })
    }
}

fn collect_refinements(
    nodes: &[Refinement],
    path: Vec<String>,
    scale: f64,
    out: &mut Vec<(Vec<String>, f64)>,
) {
    for node in nodes {
        let mut p = path.clone();
        p.push(node.label.clone());
        match node.situation_probability {
            Some(s) => out.push((p, scale * node.probability * s)),
            None => collect_refinements(&node.children, p, scale * node.probability, out),
        }
    }
}

pub fn mtbf_from_rate(lambda_per_hour: f64) -> f64 {
    if lambda_per_hour > 0.0 {
        1.0 / lambda_per_hour
    } else {
        f64::INFINITY
    }
}

/// `λ = Σ_t λ_pt · p_St` for a single situation context.
pub fn failure_rate_simple(terms: &[(f64, f64)]) -> f64 {
    terms.iter().map(|&(rate, p_s)| rate * p_s).sum()
}

pub fn failure_rate_extended(tree: &FailureModelTree) -> Result<ModelResult, ModelError> {
    tree.evaluate()
}

/// Exposure-weighted situation probability `κ = Σ p_i · p_Si`.
pub fn kappa(
    speed_probabilities: &[f64],
    situation_probabilities: &[f64],
) -> Result<f64, ModelError> {
    if speed_probabilities.len() != situation_probabilities.len() {
        return Err(ModelError::LengthMismatch {
            left: speed_probabilities.len(),
            right: situation_probabilities.len(),
        });
    }
    Ok(speed_probabilities
        .iter()
        .zip(situation_probabilities)
        .map(|(p, s)| p * s)
        .sum())
}

/// Perception error rate (per hour) needed for a target MTBF (hours) given
/// the masking factor `κ`.
pub fn required_error_rate(target_mtbf_hours: f64, kappa: f64) -> Result<f64, ModelError> {
    if !(target_mtbf_hours > 0.0) {
        return Err(ModelError::InvalidArgument(format!(
            "target MTBF must be > 0, got {target_mtbf_hours}"
        )));
    }
    if !(0.0..=1.0).contains(&kappa) {
        return Err(ModelError::InvalidArgument(format!(
            "kappa must lie in [0, 1], got {kappa}"
        )));
    }
    if kappa == 0.0 {
        return Err(ModelError::Unsatisfiable);
    }
    Ok(1.0 / target_mtbf_hours / kappa)
}

/// MTBF in hours of human drivers from accident statistics. Zero accidents
/// give an infinite MTBF.
pub fn human_baseline_mtbf(
    accidents: u64,
    total_vehicle_km: f64,
    average_speed_kmh: f64,
) -> Result<f64, ModelError> {
    if !(total_vehicle_km > 0.0) || !(average_speed_kmh > 0.0) {
        return Err(ModelError::InvalidArgument(format!(
            "vehicle km ({total_vehicle_km}) and average speed ({average_speed_kmh}) must be > 0"
        )));
    }
    if accidents == 0 {
        return Ok(f64::INFINITY);
    }
    Ok(total_vehicle_km / average_speed_kmh / accidents as f64)
}

fn fmt_mtbf(hours: f64) -> String {
    if hours.is_infinite() {
        "inf".into()
    } else {
        format!("{:.6} h ({:.1} s)", hours, hours_to_seconds(hours))
    }
}

/// Aligned text rendering of a tree and its evaluation.
pub fn render_text(tree: &FailureModelTree, result: &ModelResult) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "vehicle  lambda = {:.6e} /h  MTBF = {}",
        result.lambda_per_hour,
        fmt_mtbf(result.mtbf_hours)
    );
    let mut shares = result.branch_contributions.iter();
    let np = tree.profiles.len();
    for (pi, profile) in tree.profiles.iter().enumerate() {
        let last_p = pi + 1 == np;
        let (pb, pc) = if last_p {
            ("└─", "   ")
        } else {
            ("├─", "│  ")
        };
        let _ = writeln!(
            out,
            "{pb} {}  p_m = {:.3}",
            profile.name, profile.probability
        );
        let nr = profile.ranges.len();
        for (ri, range) in profile.ranges.iter().enumerate() {
            let (rb, rc) = if ri + 1 == nr {
                ("└─", "   ")
            } else {
                ("├─", "│  ")
            };
            let _ = writeln!(
                out,
                "{pc}{rb} {:<16} p_i = {:.3}",
                profile.partition.label(ri),
                range.speed_probability
            );
            let ne = range.errors.len();
            for (ei, e) in range.errors.iter().enumerate() {
                let eb = if ei + 1 == ne { "└─" } else { "├─" };
                let leaves = count_leaves(e);
                let (rate, share) = shares
                    .by_ref()
                    .take(leaves)
                    .fold((0.0, 0.0), |(r, s), c| (r + c.rate_per_hour, s + c.share));
                let _ = writeln!(
                    out,
                    "{pc}{rc}{eb} {:<8} lambda_p = {:.4} /h  p_S = {:.4}  -> {:.6e} /h  ({:5.1}%)",
                    e.error_type.as_str(),
                    e.rate(),
                    e.effective_situation_probability(),
                    rate,
                    100.0 * share
                );
            }
        }
    }
    out
}

fn count_leaves(e: &ErrorBranch) -> usize {
    fn walk(nodes: &[Refinement]) -> usize {
        nodes
            .iter()
            .map(|n| {
                if n.children.is_empty() {
                    1
                } else {
                    walk(&n.children)
                }
            })
            .sum()
    }
    if e.refinements.is_empty() {
        1
    } else {
        walk(&e.refinements)
    }
}
