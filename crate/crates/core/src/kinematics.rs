//! Longitudinal car-following kinematics.
//!
//! Everything here is a pure function of its arguments. Speeds are m/s,
//! distances meters, accelerations m/s² given as positive magnitudes unless
//! a signed value is stated.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::kmh_to_mps;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("reaction time must be >= 0, got {0}")]
    NegativeReactionTime(f64),
    #[error("{name} must be > 0, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("severity thresholds must be increasing: {0}")]
    Thresholds(String),
}

fn positive(name: &'static str, value: f64) -> Result<f64, KinematicsError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(KinematicsError::NonPositive { name, value })
    }
}

/// Reaction delay followed by constant braking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrakingProfile {
    #[serde(rename = "reaction_time_s")]
    pub reaction_time: f64,
    #[serde(rename = "deceleration_mps2")]
    pub deceleration: f64,
}

impl BrakingProfile {
    pub fn new(reaction_time: f64, deceleration: f64) -> Result<Self, KinematicsError> {
        let profile = Self {
            reaction_time,
            deceleration,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        if !(self.reaction_time >= 0.0 && self.reaction_time.is_finite()) {
            return Err(KinematicsError::NegativeReactionTime(self.reaction_time));
        }
        positive("deceleration", self.deceleration)?;
        Ok(())
    }

    /// Distance covered from `speed` until standstill, reaction phase included.
    pub fn stopping_distance(&self, speed: f64) -> f64 {
        speed * self.reaction_time + speed * speed / (2.0 * self.deceleration)
    }
}

impl Default for BrakingProfile {
    fn default() -> Self {
        Self {
            reaction_time: 0.5,
            deceleration: 8.0,
        }
    }
}

/// Parameters of the longitudinal RSS safety distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RssParams {
    #[serde(rename = "response_time_s")]
    pub response_time: f64,
    #[serde(rename = "max_accel_mps2")]
    pub max_accel: f64,
    #[serde(rename = "min_brake_mps2")]
    pub min_brake: f64,
    #[serde(rename = "max_brake_front_mps2")]
    pub max_brake_front: f64,
}

impl RssParams {
    pub fn new(
        response_time: f64,
        max_accel: f64,
        min_brake: f64,
        max_brake_front: f64,
    ) -> Result<Self, KinematicsError> {
        let params = Self {
            response_time,
            max_accel,
            min_brake,
            max_brake_front,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        positive("response_time", self.response_time)?;
        positive("max_accel", self.max_accel)?;
        positive("min_brake", self.min_brake)?;
        positive("max_brake_front", self.max_brake_front)?;
        Ok(())
    }

    /// True when the rear vehicle is assumed to brake harder than the front
    /// vehicle can. Allowed, but unusual enough to surface in reports.
    pub fn rear_brakes_harder_than_front(&self) -> bool {
        self.min_brake > self.max_brake_front
    }
}

impl Default for RssParams {
    fn default() -> Self {
        Self {
            response_time: 0.5,
            max_accel: 2.0,
            min_brake: 4.0,
            max_brake_front: 8.0,
        }
    }
}

/// ISO 26262 style severity class derived from impact speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SeverityClass {
    S0,
    S1,
    S2,
    S3,
}

impl SeverityClass {
    pub fn is_severe(self) -> bool {
        matches!(self, SeverityClass::S2 | SeverityClass::S3)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SeverityClass::S0 => "S0",
            SeverityClass::S1 => "S1",
            SeverityClass::S2 => "S2",
            SeverityClass::S3 => "S3",
        }
    }
}

impl std::fmt::Display for SeverityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Δv band boundaries in m/s. Every boundary is exclusive: a Δv equal to a
/// boundary stays in the lower band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeverityThresholds {
    pub s1_above: f64,
    pub severe_above: f64,
    /// `None` leaves every severe impact in S2.
    pub s3_above: Option<f64>,
}

impl SeverityThresholds {
    pub fn new(
        s1_above: f64,
        severe_above: f64,
        s3_above: Option<f64>,
    ) -> Result<Self, KinematicsError> {
        let t = Self {
            s1_above,
            severe_above,
            s3_above,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        let ordered = self.s1_above >= 0.0
            && self.s1_above <= self.severe_above
            && self.s3_above.is_none_or(|s3| s3 >= self.severe_above);
        if ordered {
            Ok(())
        } else {
            Err(KinematicsError::Thresholds(format!("{self:?}")))
        }
    }

    pub fn classify(&self, delta_v: f64) -> SeverityClass {
        match self.s3_above {
            Some(s3) if delta_v > s3 => SeverityClass::S3,
            _ if delta_v > self.severe_above => SeverityClass::S2,
            _ if delta_v > self.s1_above => SeverityClass::S1,
            _ => SeverityClass::S0,
        }
    }
}

impl Default for SeverityThresholds {
    fn default() -> Self {
        Self {
            s1_above: kmh_to_mps(10.0),
            severe_above: kmh_to_mps(30.0),
            s3_above: None,
        }
    }
}

/// Severity with the default bands (severe strictly above 30 km/h).
pub fn severity_from_delta_v(delta_v: f64) -> SeverityClass {
    SeverityThresholds::default().classify(delta_v)
}

/// Rear vehicle following a front vehicle in the same lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FollowState {
    pub v_rear: f64,
    pub v_front: f64,
    /// Bumper-to-bumper distance.
    pub gap: f64,
}

/// Minimum safe longitudinal distance according to RSS, clamped at zero.
pub fn rss_longitudinal_distance(v_rear: f64, v_front: f64, params: &RssParams) -> f64 {
    let rho = params.response_time;
    let v_after_response = v_rear + rho * params.max_accel;
    let raw = v_rear * rho
        + 0.5 * params.max_accel * rho * rho
        + v_after_response * v_after_response / (2.0 * params.min_brake)
        - v_front * v_front / (2.0 * params.max_brake_front);
    raw.max(0.0)
}

/// Impact speed against a standing obstacle `gap` meters ahead.
pub fn impact_delta_v_standing(v_rear: f64, gap: f64, profile: &BrakingProfile) -> f64 {
    if v_rear <= 0.0 {
        return 0.0;
    }
    let reaction_distance = v_rear * profile.reaction_time;
    if gap <= reaction_distance {
        return v_rear;
    }
    if gap >= profile.stopping_distance(v_rear) {
        return 0.0;
    }
    (v_rear * v_rear - 2.0 * profile.deceleration * (gap - reaction_distance))
        .max(0.0)
        .sqrt()
}

/// Time-to-collision assuming the rear vehicle accelerates at
/// `assumed_rear_accel` while the front vehicle holds its speed.
///
/// Returns `f64::INFINITY` when the gap never closes.
pub fn ttc(state: &FollowState, assumed_rear_accel: f64) -> f64 {
    let gap = state.gap.max(0.0);
    let closing = state.v_rear - state.v_front;
    let a = assumed_rear_accel;
    if a <= 0.0 {
        return if closing > 0.0 {
            gap / closing
        } else if gap == 0.0 && closing == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
    }
    let root = (closing * closing + 2.0 * a * gap).sqrt();
    if closing >= 0.0 {
        let denom = closing + root;
        if denom == 0.0 {
            0.0
        } else {
            2.0 * gap / denom
        }
    } else {
        (root - closing) / a
    }
}

/// Outcome of a false-alarm braking manoeuvre of the lead vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum FalseAlarmOutcome {
    NoCollision,
    Collision {
        /// Relative speed at impact, m/s.
        delta_v: f64,
        /// Time of impact after the lead starts braking, s.
        time: f64,
    },
}

impl FalseAlarmOutcome {
    pub fn delta_v(&self) -> f64 {
        match self {
            FalseAlarmOutcome::NoCollision => 0.0,
            FalseAlarmOutcome::Collision { delta_v, .. } => *delta_v,
        }
    }

    pub fn is_collision(&self) -> bool {
        matches!(self, FalseAlarmOutcome::Collision { .. })
    }
}

/// Smallest τ in `[0, len]` with `c0 + c1·τ + c2·τ² = 0`, if any.
fn first_root_in(c0: f64, c1: f64, c2: f64, len: f64) -> Option<f64> {
    if c0 <= 0.0 {
        return Some(0.0);
    }
    let mut roots: [Option<f64>; 2] = [None, None];
    if c2 == 0.0 {
        if c1 < 0.0 {
            roots[0] = Some(-c0 / c1);
        }
    } else {
        let disc = c1 * c1 - 4.0 * c2 * c0;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let q = -0.5 * (c1 + if c1 >= 0.0 { sq } else { -sq });
        if q != 0.0 {
            roots[0] = Some(q / c2);
            roots[1] = Some(c0 / q);
        } else {
            roots[0] = Some(0.0);
        }
    }
    roots
        .into_iter()
        .flatten()
        .filter(|&r| r >= 0.0 && r <= len)
        .min_by(f64::total_cmp)
}

/// Lead and rear both start at `v_common`, `gap` apart. The lead brakes with
/// `lead_profile.deceleration` from t = 0 for `brake_duration` seconds (or
/// until standstill) and then holds the reached speed. The rear vehicle
/// starts braking after `rear_profile.reaction_time` and brakes to a stop.
///
/// The lead profile's reaction time is unused: a false alarm acts at t = 0.
/// Motion is integrated exactly over the piecewise-constant acceleration
/// segments between brake start/stop, reaction end and standstill events.
pub fn false_alarm_delta_v(
    v_common: f64,
    gap: f64,
    brake_duration: f64,
    lead_profile: &BrakingProfile,
    rear_profile: &BrakingProfile,
) -> FalseAlarmOutcome {
    let a_lead = lead_profile.deceleration;
    let a_rear = rear_profile.deceleration;
    let lead_end = brake_duration.max(0.0).min(v_common / a_lead);
    let rear_start = rear_profile.reaction_time;
    let rear_end = rear_start + v_common / a_rear;

    let mut events = vec![0.0, lead_end, rear_start, rear_end];
    events.sort_by(f64::total_cmp);
    events.dedup();

    let mut t = 0.0;
    let mut g = gap;
    let mut v_lead = v_common;
    let mut v_rear = v_common;
    let mut ends = events
        .into_iter()
        .filter(|&e| e > 0.0)
        .chain(std::iter::once(f64::INFINITY));
    loop {
        let seg_end = ends.next().unwrap_or(f64::INFINITY);
        let acc_lead = if t < lead_end { -a_lead } else { 0.0 };
        let acc_rear = if t >= rear_start && t < rear_end {
            -a_rear
        } else {
            0.0
        };
        let len = seg_end - t;
        let rel_v = v_lead - v_rear;
        let rel_a = acc_lead - acc_rear;
        if let Some(tau) = first_root_in(g, rel_v, 0.5 * rel_a, len) {
            let lead_at = (v_lead + acc_lead * tau).max(0.0);
            let rear_at = (v_rear + acc_rear * tau).max(0.0);
            return FalseAlarmOutcome::Collision {
                delta_v: (rear_at - lead_at).max(0.0),
                time: t + tau,
            };
        }
        if seg_end.is_infinite() {
            return FalseAlarmOutcome::NoCollision;
        }
        g += rel_v * len + 0.5 * rel_a * len * len;
        v_lead = (v_lead + acc_lead * len).max(0.0);
        v_rear = (v_rear + acc_rear * len).max(0.0);
        t = seg_end;
    }
}

/// Largest initial gap (searched on `[0, max_gap]`) at which a false alarm of
/// `brake_duration` still ends in a severe collision. `None` if no gap in the
/// range gives a severe outcome.
pub fn severe_gap_limit(
    v_common: f64,
    brake_duration: f64,
    lead_profile: &BrakingProfile,
    rear_profile: &BrakingProfile,
    thresholds: &SeverityThresholds,
    max_gap: f64,
) -> Option<f64> {
    let severe = |gap: f64| {
        thresholds
            .classify(
                false_alarm_delta_v(v_common, gap, brake_duration, lead_profile, rear_profile)
                    .delta_v(),
            )
            .is_severe()
    };
    const STEPS: usize = 4000;
    let step = max_gap / STEPS as f64;
    let last = (0..=STEPS)
        .rev()
        .map(|k| k as f64 * step)
        .find(|&g| severe(g))?;
    if last >= max_gap {
        return Some(max_gap);
    }
    let (mut lo, mut hi) = (last, last + step);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if severe(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// Shortest false-alarm brake duration (searched on `[0, max_duration]`)
/// that causes a severe collision at the given gap.
pub fn min_severe_duration(
    v_common: f64,
    gap: f64,
    lead_profile: &BrakingProfile,
    rear_profile: &BrakingProfile,
    thresholds: &SeverityThresholds,
    max_duration: f64,
) -> Option<f64> {
    let severe = |d: f64| {
        thresholds
            .classify(false_alarm_delta_v(v_common, gap, d, lead_profile, rear_profile).delta_v())
            .is_severe()
    };
    const STEPS: usize = 2000;
    let step = max_duration / STEPS as f64;
    let first = (0..=STEPS).map(|k| k as f64 * step).find(|&d| severe(d))?;
    if first <= 0.0 {
        return Some(0.0);
    }
    let (mut lo, mut hi) = (first - step, first);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if severe(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::kmh_to_mps;
    use proptest::prelude::*;

    fn paper_rss() -> RssParams {
        RssParams::new(0.5, 2.0, 4.0, 8.0).unwrap()
    }

    #[test]
    fn rss_distance_examples() {
        let p = paper_rss();
        assert!((rss_longitudinal_distance(0.0, 0.0, &p) - 0.375).abs() < 1e-12);
        let d = rss_longitudinal_distance(27.78, 0.0, &p);
        assert!((d - 117.68).abs() < 0.01, "{d}");
        assert_eq!(rss_longitudinal_distance(0.0, 30.0, &p), 0.0);
    }

    #[test]
    fn rss_flags_inverted_brakes() {
        assert!(!paper_rss().rear_brakes_harder_than_front());
        assert!(RssParams::new(0.5, 2.0, 9.0, 8.0)
            .unwrap()
            .rear_brakes_harder_than_front());
        assert!(RssParams::new(0.0, 2.0, 4.0, 8.0).is_err());
    }

    #[test]
    fn standing_impact_examples() {
        let profile = BrakingProfile::default();
        let v = 27.78;
        // reaction 13.89 m + braking 48.23 m
        let stop = profile.stopping_distance(v);
        assert!((stop - 62.12).abs() < 0.01);
        assert_eq!(impact_delta_v_standing(v, stop, &profile), 0.0);
        assert!((impact_delta_v_standing(v, 30.0, &profile) - 22.67).abs() < 0.01);
        assert_eq!(impact_delta_v_standing(0.0, 5.0, &profile), 0.0);
        assert_eq!(impact_delta_v_standing(v, 0.0, &profile), v);
    }

    #[test]
    fn ttc_examples() {
        let s = FollowState {
            v_rear: 20.0,
            v_front: 20.0,
            gap: 25.0,
        };
        assert!((ttc(&s, 2.0) - 5.0).abs() < 1e-12);
        assert!(ttc(&s, 0.0).is_infinite());
        let s = FollowState {
            v_rear: 30.0,
            v_front: 20.0,
            gap: 50.0,
        };
        assert!((ttc(&s, 0.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn ttc_zero_gap_when_closing() {
        for (vr, vf, a) in [(30.0, 20.0, 0.0), (20.0, 20.0, 2.0), (25.0, 20.0, 1.0)] {
            assert_eq!(
                ttc(
                    &FollowState {
                        v_rear: vr,
                        v_front: vf,
                        gap: 0.0
                    },
                    a
                ),
                0.0
            );
        }
    }

    #[test]
    fn ttc_rear_slower_but_accelerating() {
        // ½·2·t² − 5t − 10 = 0 → t = (5 + sqrt(25 + 40)) / 2
        let s = FollowState {
            v_rear: 15.0,
            v_front: 20.0,
            gap: 10.0,
        };
        let expected = (5.0 + 65f64.sqrt()) / 2.0;
        assert!((ttc(&s, 2.0) - expected).abs() < 1e-12);
    }

    #[test]
    fn severity_bands() {
        assert!(severity_from_delta_v(kmh_to_mps(35.0)).is_severe());
        assert!((kmh_to_mps(35.0) - 9.72).abs() < 0.01);
        assert_eq!(severity_from_delta_v(0.0), SeverityClass::S0);
        assert!(!severity_from_delta_v(8.333).is_severe());
        assert!(!severity_from_delta_v(kmh_to_mps(30.0)).is_severe());
        assert_eq!(severity_from_delta_v(kmh_to_mps(20.0)), SeverityClass::S1);
        assert_eq!(severity_from_delta_v(kmh_to_mps(10.0)), SeverityClass::S0);
        let with_s3 = SeverityThresholds::new(2.0, 8.0, Some(15.0)).unwrap();
        assert_eq!(with_s3.classify(16.0), SeverityClass::S3);
        assert!(SeverityThresholds::new(9.0, 8.0, None).is_err());
    }

    #[test]
    fn severe_predicate_matches_classes() {
        for class in [
            SeverityClass::S0,
            SeverityClass::S1,
            SeverityClass::S2,
            SeverityClass::S3,
        ] {
            assert_eq!(class.is_severe(), class >= SeverityClass::S2);
        }
    }

    #[test]
    fn false_alarm_without_braking_never_collides() {
        let p = BrakingProfile::default();
        for gap in [0.1, 1.0, 20.0, 500.0] {
            assert_eq!(
                false_alarm_delta_v(36.11, gap, 0.0, &p, &p),
                FalseAlarmOutcome::NoCollision
            );
        }
    }

    #[test]
    fn false_alarm_short_pulse_large_gap() {
        let p = BrakingProfile::default();
        assert_eq!(
            false_alarm_delta_v(36.11, 200.0, 0.2, &p, &p),
            FalseAlarmOutcome::NoCollision
        );
    }

    #[test]
    fn false_alarm_zero_gap_is_contact() {
        let p = BrakingProfile::default();
        match false_alarm_delta_v(30.0, 0.0, 1.0, &p, &p) {
            FalseAlarmOutcome::Collision { delta_v, time } => {
                assert_eq!(delta_v, 0.0);
                assert_eq!(time, 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn false_alarm_closing_distance_closed_form() {
        // Lead brakes 1 s, rear reacts after 0.5 s, both 8 m/s²: relative speed
        // ramps 0→4 m/s, holds 4 m/s for 0.5 s, ramps back to 0. Total closing 4 m.
        let p = BrakingProfile::default();
        assert!(false_alarm_delta_v(36.11, 3.99, 1.0, &p, &p).is_collision());
        assert!(!false_alarm_delta_v(36.11, 4.01, 1.0, &p, &p).is_collision());
        // 2 m closes during the plateau → impact at 4 m/s.
        let out = false_alarm_delta_v(36.11, 2.0, 1.0, &p, &p);
        assert!((out.delta_v() - 4.0).abs() < 1e-9, "{out:?}");
    }

    #[test]
    fn no_reaction_mirror_never_collides() {
        let p = BrakingProfile::new(0.0, 8.0).unwrap();
        for gap in [0.01, 1.0, 10.0] {
            for d in [0.5, 1.0, 3.0, 10.0] {
                assert_eq!(
                    false_alarm_delta_v(36.11, gap, d, &p, &p),
                    FalseAlarmOutcome::NoCollision
                );
            }
        }
    }

    #[test]
    fn stopped_lead_long_reaction_is_severe() {
        let lead = BrakingProfile::default();
        let rear = BrakingProfile::new(2.0, 8.0).unwrap();
        let out = false_alarm_delta_v(36.11, 10.0, 10.0, &lead, &rear);
        assert!(severity_from_delta_v(out.delta_v()).is_severe(), "{out:?}");
        let limit = severe_gap_limit(
            36.11,
            10.0,
            &lead,
            &rear,
            &SeverityThresholds::default(),
            200.0,
        );
        assert!(limit.is_some());
    }

    proptest! {
        #[test]
        fn standing_impact_monotone(
            v in 0.0f64..60.0,
            dv in 0.0f64..10.0,
            gap in 0.0f64..250.0,
            dg in 0.0f64..20.0,
        ) {
            let p = BrakingProfile::default();
            prop_assert!(impact_delta_v_standing(v, gap + dg, &p) <= impact_delta_v_standing(v, gap, &p));
            prop_assert!(impact_delta_v_standing(v + dv, gap, &p) >= impact_delta_v_standing(v, gap, &p));
        }

        #[test]
        fn rss_monotone(
            v_rear in 0.0f64..60.0,
            v_front in 0.0f64..60.0,
            dv in 0.0f64..10.0,
        ) {
            let p = RssParams::default();
            prop_assert!(rss_longitudinal_distance(v_rear + dv, v_front, &p) >= rss_longitudinal_distance(v_rear, v_front, &p));
            prop_assert!(rss_longitudinal_distance(v_rear, v_front + dv, &p) <= rss_longitudinal_distance(v_rear, v_front, &p));
        }

        #[test]
        fn ttc_continuous_in_gap(
            v_rear in 0.0f64..50.0,
            v_front in 0.0f64..50.0,
            a in 0.0f64..4.0,
            gap in 0.0f64..200.0,
        ) {
            let s = FollowState { v_rear, v_front, gap };
            let t0 = ttc(&s, a);
            prop_assume!(t0.is_finite());
            let t1 = ttc(&FollowState { gap: gap + 1e-7, ..s }, a);
            prop_assert!((t1 - t0).abs() < 1e-3, "{t0} {t1}");
            prop_assert!(t1 >= t0);
        }
    }
}
