use echoplan_core::closedloop::*;
use echoplan_core::world::{generate_scene, EgoState, GridSpec, Scenario, Trajectory, HORIZON};
use echoplan_core::{ModelConfig, ModelParams, Result};

fn grid() -> GridSpec {
    GridSpec::default()
}

#[test]
fn standard_suite_shape() {
    let suite = standard_suite();
    assert_eq!(suite.len(), 20);
    assert_eq!(suite[0], (90_000, Scenario::Straight));
    for s in Scenario::ALL {
        assert_eq!(suite.iter().filter(|(_, x)| *x == s).count(), 5);
    }
    let c = RolloutConfig::default();
    assert_eq!((c.max_steps, c.replan_every, c.goal_radius), (60, 1, 1.0));
}

#[test]
fn oracle_planner_always_succeeds() {
    let report = rollout(&mut OraclePlanner, &grid(), &RolloutConfig::default()).unwrap();
    for r in &report.runs {
        assert!(r.success, "{:?} seed {} failed: {:?}", r.scenario, r.seed, r.failure);
        assert_eq!(r.collisions, 0);
        assert_eq!(r.completion, 1.0);
    }
    assert_eq!(report.success_rate, 100.0);
    assert_eq!(report.score, 1.0);
}

#[test]
fn oracle_is_invariant_to_replanning_rate() {
    let base = rollout(&mut OraclePlanner, &grid(), &RolloutConfig::default()).unwrap();
    for every in [2, 3, 6] {
        let config = RolloutConfig {
            replan_every: every,
            ..RolloutConfig::default()
        };
        let r = rollout(&mut OraclePlanner, &grid(), &config).unwrap();
        assert_eq!(r.success_rate, base.success_rate);
        assert_eq!(r.score, base.score);
        for (a, b) in r.runs.iter().zip(&base.runs) {
            assert_eq!(a.steps, b.steps);
            for (x, y) in a.trace.iter().zip(&b.trace) {
                assert!((x.ego.x - y.ego.x).abs() < 1e-6 && (x.ego.y - y.ego.y).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn standing_still_never_succeeds() {
    let report = rollout(&mut StandStillPlanner, &grid(), &RolloutConfig::default()).unwrap();
    assert_eq!(report.success_rate, 0.0);
    assert!(report.route_completion < 1.0);
    for r in &report.runs {
        assert!(!r.success);
        assert!(r.completion < 1.0);
    }
}

#[test]
fn score_is_completion_without_collisions() {
    assert_eq!(run_score(0.7, 0), 0.7);
    assert!((run_score(1.0, 2) - 0.36).abs() < 1e-12);
    let report = rollout(&mut StandStillPlanner, &grid(), &RolloutConfig::default()).unwrap();
    for r in report.runs.iter().filter(|r| r.collisions == 0) {
        assert_eq!(r.score, r.completion);
    }
}

#[test]
fn model_rollout_is_deterministic_and_consistent() {
    let config = RolloutConfig {
        max_steps: 15,
        suite: standard_suite().into_iter().take(6).collect(),
        ..RolloutConfig::default()
    };
    let g = GridSpec {
        h: 8,
        w: 8,
        cell_size: 4.0,
    };
    let params = ModelParams::init(
        ModelConfig {
            channels: 8,
            tokens: 4,
            heads: 2,
            attn_layers: 1,
            ..ModelConfig::for_grid(&g)
        },
        3,
    );
    let a = rollout(&mut ModelPlanner { params: &params }, &g, &config).unwrap();
    let b = rollout(&mut ModelPlanner { params: &params }, &g, &config).unwrap();
    assert_eq!(a, b);
    let clean = a.runs.iter().filter(|r| r.collisions == 0).count() as f64;
    assert!(a.success_rate <= 100.0 * clean / a.runs.len() as f64);
    for r in &a.runs {
        assert!(!r.success || (r.collisions == 0 && r.completion == 1.0));
        assert!((0.0..=1.0).contains(&r.completion));
        assert_eq!(r.trace.len(), r.steps);
    }
}

struct Broken;

impl Planner for Broken {
    fn plan(&mut self, _obs: &Observation<'_>) -> Result<Trajectory> {
        Ok(Trajectory::new(vec![[f64::NAN, 0.0]; HORIZON]))
    }
}

#[test]
fn non_finite_plans_count_as_failures() {
    let scene = generate_scene(1, Scenario::Straight);
    let r = rollout_scene(&mut Broken, &scene, &grid(), &RolloutConfig::default());
    assert!(!r.success);
    assert_eq!(r.failure.as_deref(), Some("non-finite planner output"));
    assert_eq!(r.score, r.completion);
}

#[test]
fn invalid_configs_are_rejected() {
    for c in [
        RolloutConfig { max_steps: 0, ..Default::default() },
        RolloutConfig { replan_every: 0, ..Default::default() },
        RolloutConfig { replan_every: 7, ..Default::default() },
        RolloutConfig { goal_radius: -1.0, ..Default::default() },
    ] {
        assert!(rollout(&mut OraclePlanner, &grid(), &c).is_err());
    }
}

#[test]
fn controller_respects_turn_and_speed_caps() {
    let ego = EgoState {
        x: 0.0,
        y: 0.0,
        heading: 0.0,
        speed: 0.0,
    };
    let behind = advance_ego(&ego, [-5.0, 0.1]);
    assert!((behind.heading - MAX_TURN).abs() < 1e-12);
    let far = advance_ego(&ego, [100.0, 0.0]);
    assert_eq!(far.speed, MAX_SPEED);
    let exact = advance_ego(&ego, [1.25, 0.0]);
    assert!((exact.x - 1.25).abs() < 1e-12 && exact.y == 0.0);
    let still = advance_ego(&ego, [0.0, 0.0]);
    assert_eq!((still.x, still.y, still.speed), (0.0, 0.0, 0.0));
}
