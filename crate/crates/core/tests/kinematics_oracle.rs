mod common;

use avmtbf::kinematics::{
    false_alarm_delta_v, impact_delta_v_standing, BrakingProfile, FalseAlarmOutcome,
};
use common::{oracle_false_alarm, oracle_max_deviation, oracle_standing};

#[test]
fn random_configurations_match_integrator() {
    for seed in [1, 2, 3] {
        let (standing, alarm) = oracle_max_deviation(seed, 1000);
        assert!(
            standing < 0.05,
            "seed {seed}: standing deviation {standing}"
        );
        assert!(alarm < 0.05, "seed {seed}: false-alarm deviation {alarm}");
    }
}

#[test]
fn collision_verdicts_agree_away_from_grazing() {
    let lead = BrakingProfile::new(0.5, 8.0).unwrap();
    let rear = BrakingProfile::new(0.5, 8.0).unwrap();
    let slow_rear = BrakingProfile::new(1.5, 4.0).unwrap();
    for v in [10.0, 25.0, 36.1] {
        for gap in [0.5, 2.0, 5.0, 12.0, 30.0] {
            for duration in [0.2, 1.0, 3.0, 10.0] {
                for r in [&rear, &slow_rear] {
                    let closed = false_alarm_delta_v(v, gap, duration, &lead, r);
                    let oracle = oracle_false_alarm(
                        v,
                        gap,
                        duration,
                        lead.deceleration,
                        r.reaction_time,
                        r.deceleration,
                    );
                    match (closed, oracle) {
                        (FalseAlarmOutcome::Collision { delta_v, .. }, Some(o)) => {
                            assert!((delta_v - o).abs() < 0.05)
                        }
                        (FalseAlarmOutcome::NoCollision, None) => {}
                        (c, o) => assert!(
                            c.delta_v() < 0.05 && o.unwrap_or(0.0) < 0.05,
                            "{v} {gap} {duration}: {c:?} vs {o:?}"
                        ),
                    }
                }
            }
        }
    }
}

#[test]
fn standing_obstacle_edges() {
    let p = BrakingProfile::default();
    // inside the reaction distance and past the stopping distance
    assert_eq!(
        impact_delta_v_standing(20.0, 5.0, &p),
        oracle_standing(20.0, 5.0, 0.5, 8.0)
    );
    assert_eq!(oracle_standing(20.0, 40.0, 0.5, 8.0), 0.0);
    assert_eq!(impact_delta_v_standing(20.0, 40.0, &p), 0.0);
    assert!((oracle_standing(20.0, 0.0, 0.5, 8.0) - 20.0).abs() < 1e-12);
}
