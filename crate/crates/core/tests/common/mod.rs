//! Test-only oracles and fixture generators. Nothing here calls into the
//! closed-form kinematics it is used to check.
#![allow(dead_code)]

use avmtbf::model::{ErrorBranch, FailureModelTree, MissionProfile, RangeBranch};
use avmtbf::perception::ErrorType;
use avmtbf::situations::{Recording, SpeedRangePartition, TrackFrame};
use avmtbf::units::kmh_to_mps;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ORACLE_DT: f64 = 1e-3;

/// Braking schedule of one vehicle: constant deceleration on
/// `[start, end)`, never below standstill.
#[derive(Clone, Copy, Debug)]
pub struct Schedule {
    pub start: f64,
    pub end: f64,
    pub decel: f64,
}

impl Schedule {
    fn accel(&self, t: f64, v: f64) -> f64 {
        if t >= self.start && t < self.end && v > 0.0 {
            -self.decel
        } else {
            0.0
        }
    }
}

/// Fixed 1 ms stepping of two vehicles. Steps are split at schedule events
/// and at standstill so each sub-step has constant acceleration; a collision
/// is located by linear interpolation of the gap within the sub-step.
///
/// Returns the impact relative speed or `None`.
pub fn integrate_pair(
    gap: f64,
    v_lead0: f64,
    lead: Schedule,
    v_rear0: f64,
    rear: Schedule,
    t_max: f64,
) -> Option<f64> {
    if gap <= 0.0 {
        return Some((v_rear0 - v_lead0).max(0.0));
    }
    let (mut t, mut g, mut vl, mut vr) = (0.0f64, gap, v_lead0, v_rear0);
    let events = [lead.start, lead.end, rear.start, rear.end];
    while t < t_max {
        let mut step_end = t + ORACLE_DT;
        for e in events {
            if e > t && e < step_end {
                step_end = e;
            }
        }
        let al = lead.accel(t, vl);
        let ar = rear.accel(t, vr);
        for (a, v) in [(al, vl), (ar, vr)] {
            if a < 0.0 && t + v / -a < step_end {
                step_end = t + v / -a;
            }
        }
        let h = step_end - t;
        if h <= 0.0 {
            // stop time rounds onto the current instant
            if al < 0.0 && t + vl / -al <= t {
                vl = 0.0;
            }
            if ar < 0.0 && t + vr / -ar <= t {
                vr = 0.0;
            }
            continue;
        }
        let vl_new = (vl + al * h).max(0.0);
        let vr_new = (vr + ar * h).max(0.0);
        let g_new = g + (vl * h + 0.5 * al * h * h) - (vr * h + 0.5 * ar * h * h);
        if g_new <= 0.0 {
            let f = g / (g - g_new);
            let dl = vl + (vl_new - vl) * f;
            let dr = vr + (vr_new - vr) * f;
            return Some((dr - dl).max(0.0));
        }
        t = step_end;
        g = g_new;
        vl = vl_new;
        vr = vr_new;
    }
    None
}

pub fn oracle_standing(v_rear: f64, gap: f64, reaction: f64, decel: f64) -> f64 {
    let lead = Schedule {
        start: 0.0,
        end: 0.0,
        decel: 1.0,
    };
    let rear = Schedule {
        start: reaction,
        end: f64::INFINITY,
        decel,
    };
    let t_max = reaction + v_rear / decel + 1.0;
    integrate_pair(gap, 0.0, lead, v_rear, rear, t_max).unwrap_or(0.0)
}

pub fn oracle_false_alarm(
    v_common: f64,
    gap: f64,
    duration: f64,
    lead_decel: f64,
    rear_reaction: f64,
    rear_decel: f64,
) -> Option<f64> {
    let lead = Schedule {
        start: 0.0,
        end: duration,
        decel: lead_decel,
    };
    let rear = Schedule {
        start: rear_reaction,
        end: f64::INFINITY,
        decel: rear_decel,
    };
    let t_max = rear_reaction + v_common / rear_decel + 1.0;
    integrate_pair(gap, v_common, lead, v_common, rear, t_max)
}

/// Planted per-range situation frequencies.
#[derive(Clone, Debug)]
pub struct Planted {
    pub boundaries_kmh: Vec<f64>,
    pub speed: Vec<f64>,
    pub decelerating: Vec<f64>,
    pub accelerating_close: Vec<f64>,
    pub constant_close: Vec<f64>,
}

impl Planted {
    pub fn highway() -> Self {
        Self {
            boundaries_kmh: vec![80.0, 100.0, 130.0, 180.0],
            speed: vec![0.234, 0.640, 0.126],
            decelerating: vec![0.028, 0.021, 0.023],
            accelerating_close: vec![0.001, 0.003, 0.004],
            constant_close: vec![0.279, 0.152, 0.088],
        }
    }

    pub fn partition(&self) -> SpeedRangePartition {
        SpeedRangePartition::from_kmh(&self.boundaries_kmh).unwrap()
    }
}

fn pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Recordings where every frame holds one ego vehicle (id 1) and possibly a
/// lead (id 2). Leads drive at 20 m/s (72 km/h), below the partition, so
/// they never count as egos themselves.
pub fn planted_recordings(
    planted: &Planted,
    recordings: usize,
    frames_each: u64,
    seed: u64,
) -> Vec<Recording> {
    let lead_speed = 20.0;
    (0..recordings)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let mut frames = Vec::with_capacity(2 * frames_each as usize);
            for k in 0..frames_each {
                let i = pick(&mut rng, &planted.speed);
                let lo = kmh_to_mps(planted.boundaries_kmh[i]);
                let hi = kmh_to_mps(planted.boundaries_kmh[i + 1]);
                let ego_speed = rng.random_range(lo..hi);
                let dec = planted.decelerating[i];
                let acc = planted.accelerating_close[i];
                let con = planted.constant_close[i];
                let rest = 1.0 - dec - acc - con;
                // 0 dec, 1 acc close, 2 const close, 3 acc far, 4 const far, 5 no lead
                let cell = pick(
                    &mut rng,
                    &[dec, acc, con, rest / 3.0, rest / 3.0, rest / 3.0],
                );
                let (lead_accel, gap) = match cell {
                    0 => (-1.0, rng.random_range(5.0..300.0)),
                    1 => (0.5, 10.0),
                    2 => (0.0, 10.0),
                    3 => (0.5, 600.0),
                    4 => (0.02, 600.0),
                    _ => (0.0, 0.0),
                };
                let has_lead = cell < 5;
                frames.push(TrackFrame {
                    frame_index: k,
                    vehicle_id: 1,
                    lane_id: 1,
                    position: 0.0,
                    speed: ego_speed,
                    acceleration: 0.0,
                    preceding_vehicle_id: has_lead.then_some(2),
                    length: Some(4.5),
                });
                if has_lead {
                    frames.push(TrackFrame {
                        frame_index: k,
                        vehicle_id: 2,
                        lane_id: 1,
                        position: gap + 4.5,
                        speed: lead_speed,
                        acceleration: lead_accel,
                        preceding_vehicle_id: None,
                        length: Some(4.5),
                    });
                }
            }
            Recording::new(format!("{r:02}"), 25.0, frames)
        })
        .collect()
}

/// Random valid tree: 1–3 profiles, 1–4 speed ranges each, both error types.
pub fn random_tree(rng: &mut ChaCha8Rng) -> FailureModelTree {
    let profiles = rng.random_range(1..=3);
    let mut p_m: Vec<f64> = (0..profiles).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = p_m.iter().sum();
    p_m.iter_mut().for_each(|p| *p /= total);
    let profiles = p_m
        .iter()
        .enumerate()
        .map(|(m, &pm)| {
            let ranges = rng.random_range(1..=4);
            let mut bounds = vec![rng.random_range(0.0..60.0)];
            for _ in 0..ranges {
                let last = *bounds.last().unwrap();
                bounds.push(last + rng.random_range(5.0..40.0));
            }
            let mut p_i: Vec<f64> = (0..ranges).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = p_i.iter().sum();
            p_i.iter_mut().for_each(|p| *p /= s);
            MissionProfile {
                name: format!("profile-{m}"),
                probability: pm,
                partition: SpeedRangePartition::from_kmh(&bounds).unwrap(),
                ranges: p_i
                    .iter()
                    .map(|&pi| RangeBranch {
                        speed_probability: pi,
                        errors: vec![
                            ErrorBranch::new(
                                ErrorType::TypeI,
                                rng.random_range(0.0..5.0),
                                rng.random_range(0.0..1.0),
                            ),
                            ErrorBranch::new(
                                ErrorType::TypeII,
                                rng.random_range(0.0..50.0),
                                rng.random_range(0.0..1.0),
                            ),
                        ],
                    })
                    .collect(),
            }
        })
        .collect();
    FailureModelTree::new(profiles).unwrap()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Largest |closed form − oracle| over `n` seeded random configurations, for
/// the standing-obstacle case and the false-alarm case.
pub fn oracle_max_deviation(seed: u64, n: usize) -> (f64, f64) {
    use avmtbf::kinematics::{false_alarm_delta_v, impact_delta_v_standing, BrakingProfile};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst_standing, mut worst_alarm) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let v = rng.random_range(0.0..50.0);
        let gap = rng.random_range(0.0..150.0);
        let profile =
            BrakingProfile::new(rng.random_range(0.0..2.0), rng.random_range(2.0..10.0)).unwrap();
        let closed = impact_delta_v_standing(v, gap, &profile);
        let oracle = oracle_standing(v, gap, profile.reaction_time, profile.deceleration);
        worst_standing = worst_standing.max((closed - oracle).abs());

        let v = rng.random_range(5.0..50.0);
        let gap = rng.random_range(0.0..60.0);
        let duration = rng.random_range(0.0..5.0);
        let lead = BrakingProfile::new(0.5, rng.random_range(2.0..10.0)).unwrap();
        let rear =
            BrakingProfile::new(rng.random_range(0.0..2.0), rng.random_range(2.0..10.0)).unwrap();
        let closed = false_alarm_delta_v(v, gap, duration, &lead, &rear).delta_v();
        let oracle = oracle_false_alarm(
            v,
            gap,
            duration,
            lead.deceleration,
            rear.reaction_time,
            rear.deceleration,
        )
        .unwrap_or(0.0);
        worst_alarm = worst_alarm.max((closed - oracle).abs());
    }
    (worst_standing, worst_alarm)
}

/// Split a situation probability `p` into a two-level refinement with the
/// same value: Σ q_j · p_j = p.
pub fn conserving_split(
    p: f64,
    rng: &mut ChaCha8Rng,
    depth: u32,
) -> Vec<avmtbf::model::Refinement> {
    use avmtbf::model::Refinement;
    let q1: f64 = rng.random_range(0.05..0.95);
    let q2 = 1.0 - q1;
    let lo = ((p - q2) / q1).max(0.0);
    let hi = (p / q1).min(1.0);
    let p1 = rng.random_range(lo..=hi);
    let p2 = ((p - q1 * p1) / q2).clamp(0.0, 1.0);
    let child = |label: &str, q: f64, s: f64, rng: &mut ChaCha8Rng| {
        if depth > 1 {
            Refinement::split(label, q, conserving_split(s, rng, depth - 1))
        } else {
            Refinement::leaf(label, q, s)
        }
    };
    vec![child("slower", q1, p1, rng), child("faster", q2, p2, rng)]
}

/// Worst relative error of the three model identities over `n` random trees:
/// refinement conservation, κ factorization and the required-rate round trip.
pub fn model_identity_errors(seed: u64, n: usize) -> (f64, f64, f64) {
    use avmtbf::model::{kappa, required_error_rate};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut refine, mut factor, mut inverse) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..n {
        let tree = random_tree(&mut rng);
        let base = tree.evaluate().unwrap().lambda_per_hour;

        let mut refined = tree.clone();
        for e in refined
            .profiles
            .iter_mut()
            .flat_map(|p| p.ranges.iter_mut())
            .flat_map(|r| r.errors.iter_mut())
        {
            let p = e.situation_probability.take().unwrap();
            let depth = rng.random_range(1..=3);
            e.refinements = conserving_split(p, &mut rng, depth);
        }
        refined.validate().unwrap();
        refine = refine.max(rel_diff(base, refined.evaluate().unwrap().lambda_per_hour));

        let rate = rng.random_range(0.1..100.0);
        let mut constant = tree.clone();
        let mut weighted_kappa = 0.0;
        for profile in constant.profiles.iter_mut() {
            for r in profile.ranges.iter_mut() {
                for e in r.errors.iter_mut() {
                    e.hardware_rate_per_hour = 0.0;
                    e.software_rate_per_hour = rate;
                }
            }
            let p_i: Vec<f64> = profile.ranges.iter().map(|r| r.speed_probability).collect();
            for t in 0..profile.ranges[0].errors.len() {
                let p_s: Vec<f64> = profile
                    .ranges
                    .iter()
                    .map(|r| r.errors[t].effective_situation_probability())
                    .collect();
                weighted_kappa += profile.probability * kappa(&p_i, &p_s).unwrap();
            }
        }
        let tree_lambda = constant.evaluate().unwrap().lambda_per_hour;
        factor = factor.max(rel_diff(tree_lambda, rate * weighted_kappa));

        let target = 10f64.powf(rng.random_range(3.0..8.0));
        // κ applies to one error type: the round trip runs on the Type II leaves
        let mut unit = constant.scale_rates(1.0 / rate);
        for e in unit
            .profiles
            .iter_mut()
            .flat_map(|p| p.ranges.iter_mut())
            .flat_map(|r| r.errors.iter_mut())
        {
            if e.error_type == avmtbf::perception::ErrorType::TypeI {
                e.software_rate_per_hour = 0.0;
            }
        }
        let k = unit.evaluate().unwrap().lambda_per_hour;
        let required = required_error_rate(target, k).unwrap();
        let mtbf = unit.scale_rates(required).evaluate().unwrap().mtbf_hours;
        inverse = inverse.max(rel_diff(mtbf, target));
    }
    (refine, factor, inverse)
}

/// Compare extracted frequencies with planted ones; returns one message per
/// quantity whose planted value falls outside the 99% Wilson interval.
pub fn check_recovery(planted: &Planted, recordings: &[Recording]) -> Vec<String> {
    use avmtbf::situations::{
        extract_situation_table, speed_distribution, wilson_interval, SituationSettings,
    };
    const Z99: f64 = 2.5758293035489004;
    let partition = planted.partition();
    let table =
        extract_situation_table(recordings, &partition, &SituationSettings::default()).unwrap();
    let speeds = speed_distribution(recordings, &partition).unwrap();
    let mut misses = Vec::new();
    let mut check = |what: String, k: u64, n: u64, p: f64| {
        let (lo, hi) = wilson_interval(k, n, Z99);
        if !(lo..=hi).contains(&p) {
            misses.push(format!(
                "{what}: planted {p}, observed {k}/{n} -> [{lo}, {hi}]"
            ));
        }
    };
    let total: u64 = speeds.counts.iter().sum();
    for (i, row) in table.rows.iter().enumerate() {
        let c = row.counts.expect("extracted rows carry counts");
        check(format!("p_{i}"), speeds.counts[i], total, planted.speed[i]);
        check(
            format!("decelerating[{i}]"),
            c.decelerating,
            c.frames,
            planted.decelerating[i],
        );
        check(
            format!("accelerating_close[{i}]"),
            c.accelerating_close,
            c.frames,
            planted.accelerating_close[i],
        );
        check(
            format!("constant_close[{i}]"),
            c.constant_close,
            c.frames,
            planted.constant_close[i],
        );
        let planted_total =
            planted.decelerating[i] + planted.accelerating_close[i] + planted.constant_close[i];
        let observed = c.decelerating + c.accelerating_close + c.constant_close;
        check(format!("p_S[{i}]"), observed, c.frames, planted_total);
    }
    misses
}
