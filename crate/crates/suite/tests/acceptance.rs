//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Training-based criteria use the desk profile below on a fixed benchmark:
//! 256 training episodes (seeds 0..256) and 64 held-out episodes
//! (seeds 1_000_000..1_000_064), five training seeds per arm.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use echoplan::dataset::generate_split;
use echoplan::experiment::{default_workers, run_arms};
use echoplan_core::cfc::{
    bev_mse_value, echo_loop, forward_loop, infer, reverse_command, total_loss, training_graph, LossWeights, Sample,
};
use echoplan_core::closedloop::{rollout, ModelPlanner, OraclePlanner, RolloutConfig};
use echoplan_core::components::{encode_bev, encode_command, scene_attention, token_learn, BevFeature};
use echoplan_core::geometry::{Lattice, OrientedBox, Pose};
use echoplan_core::gradcheck::{check_block, GradBlock, TOLERANCE};
use echoplan_core::metrics::{eval_frames, footprint_collides, l2_at_horizon, OpenLoopReport, Protocol};
use echoplan_core::planner::{plan, select_branch, traj_loss_value};
use echoplan_core::trainer::{ArmResult, TrainConfig};
use echoplan_core::world::{Trajectory, EGO_LENGTH, EGO_WIDTH, HORIZON};
use echoplan_core::{Block, Episode, Graph, GridSpec, ModelParams, NavigationCommand, Scenario, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const TRAIN_EPISODES: usize = 256;
const EVAL_EPISODES: usize = 64;
const EPOCHS: usize = 10;
const BUDGET: Duration = Duration::from_secs(45 * 60);

fn profile(seed: u64) -> TrainConfig {
    TrainConfig {
        grid: GridSpec {
            h: 16,
            w: 16,
            cell_size: 1.0,
        },
        channels: 32,
        epochs: EPOCHS,
        learning_rate: 1e-3,
        seed,
        ..TrainConfig::default()
    }
}

fn with(config: TrainConfig, curbev: f64, futbev: f64, tokens: usize) -> TrainConfig {
    TrainConfig {
        lambda_curbev: curbev,
        lambda_futbev: futbev,
        tokens,
        ..config
    }
}

struct Outcome {
    id: usize,
    passed: bool,
    detail: String,
}

fn report(id: usize, passed: bool, detail: String) -> Outcome {
    println!("criterion {id:>2}: {} | {detail}", if passed { "PASS" } else { "FAIL" });
    Outcome { id, passed, detail }
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0f64, String::new());
    let mut failures = Vec::new();
    let mut runs = 0;
    for block in GradBlock::ALL {
        for seed in SEEDS {
            let r = check_block(block, seed).expect("gradient check runs");
            runs += 1;
            if r.max_rel_err > worst.0 {
                worst = (r.max_rel_err, format!("{} seed {seed} at {}", block.name(), r.worst));
            }
            if !r.passed() {
                failures.push(format!("{} seed {seed} ({}: {:.2e})", block.name(), r.worst, r.max_rel_err));
            }
        }
    }
    let elapsed = start.elapsed();
    let fast = elapsed < Duration::from_secs(300);
    report(
        1,
        failures.is_empty() && fast,
        format!(
            "{runs} block/seed checks, worst rel err {:.2e} ({}), tolerance {TOLERANCE:e}, {:.1}s{}",
            worst.0,
            worst.1,
            elapsed.as_secs_f64(),
            if failures.is_empty() { String::new() } else { format!(", failed: {}", failures.join("; ")) }
        ),
    )
}

fn loss_arithmetic() -> Outcome {
    let mut pred = Trajectory::zeros(HORIZON);
    pred.points[0] = [1.0, 0.0];
    let traj = traj_loss_value(&pred, &Trajectory::zeros(HORIZON)).unwrap();
    let bev = bev_mse_value(
        &BevFeature(Tensor::filled(6, 4, 3.0)),
        &BevFeature(Tensor::filled(6, 4, 1.0)),
    )
    .unwrap();
    let mut one = BevFeature(Tensor::zeros(32 * 32, 64));
    one.0.data[777] = 1.0;
    let single = bev_mse_value(&one, &BevFeature(Tensor::zeros(32 * 32, 64))).unwrap();
    let total = total_loss(1.0, 2.0, 3.0, &LossWeights::default()).total;
    let checks = [
        ("traj_loss", traj, 1.0 / 12.0),
        ("bev_mse", bev, 4.0),
        ("bev_mse single cell", single, 1.0 / 65536.0),
        ("total_loss", total, 2.3),
    ];
    let ok = checks.iter().all(|(_, got, want)| (got - want).abs() < 1e-12)
        && (single - 1.52588e-5).abs() < 1e-9
        && (traj - 0.083_333_333_333).abs() < 1e-12;
    let detail = checks
        .iter()
        .map(|(n, got, _)| format!("{n} {got:.12}"))
        .collect::<Vec<_>>()
        .join(", ");
    report(2, ok, detail)
}

fn touched(g: &Graph<'_>) -> BTreeSet<String> {
    g.touched_params().into_iter().map(String::from).collect()
}

/// Interleaved timing of inference over every evaluable frame; returns the
/// fastest of `reps` passes per model.
fn infer_times(models: [&ModelParams; 2], eval: &[Episode], reps: usize) -> [Duration; 2] {
    let mut best = [Duration::MAX; 2];
    for _ in 0..reps {
        for (k, p) in models.iter().enumerate() {
            let start = Instant::now();
            for ep in eval {
                for t in eval_frames(ep) {
                    let f = &ep.frames[t];
                    std::hint::black_box(infer(p, &f.raster, f.command).unwrap());
                }
            }
            best[k] = best[k].min(start.elapsed());
        }
    }
    best
}

fn structural(base: &ArmResult, cfc: &ArmResult, eval: &[Episode]) -> Outcome {
    let involution = NavigationCommand::ALL
        .iter()
        .all(|&c| reverse_command(reverse_command(c)) == c)
        && reverse_command(NavigationCommand::Left) == NavigationCommand::Right
        && reverse_command(NavigationCommand::Straight) == NavigationCommand::Straight;

    let params = &cfc.checkpoint.params;
    let frame = &eval[0].frames[0];
    let future = eval[0].future_target_raster(0).unwrap();
    let all: BTreeSet<String> = params.iter().map(|(_, n, _)| n.to_string()).collect();

    let mut g = Graph::new(params);
    let bev = encode_bev(&mut g, &frame.raster).unwrap();
    let conditioned = encode_command(&mut g, frame.command, bev);
    let pooled = token_learn(&mut g, conditioned).tokens;
    let tokens = scene_attention(&mut g, pooled).tokens;
    let multi = plan(&mut g, tokens).multi;
    let pred = select_branch(&mut g, multi, frame.command);
    forward_loop(&mut g, tokens, pred).unwrap();
    let forward = touched(&g);

    let c = params.config();
    let mut g = Graph::new(params);
    let fut = g.input(Tensor::zeros(c.cells(), c.channels));
    echo_loop(&mut g, fut, reverse_command(frame.command)).unwrap();
    let echo = touched(&g);
    let new_in_echo: Vec<&String> = echo.difference(&forward).collect();

    let mut g = Graph::new(params);
    let sample = Sample {
        raster: &frame.raster,
        command: frame.command,
        gt_future: &frame.gt_future,
        future_raster: &future,
    };
    training_graph(&mut g, &sample, &LossWeights::default()).unwrap();
    let training_set = touched(&g);

    let (_, trace) = infer(params, &frame.raster, frame.command).unwrap();
    let banned = [Block::Mln, Block::TokenFuse, Block::EchoLoop, Block::ForwardLoop];
    let clean_trace = banned.iter().all(|b| !trace.contains(b));

    let [tb, tc] = infer_times([&base.checkpoint.params, &cfc.checkpoint.params], eval, 7);
    let ratio = tc.as_secs_f64() / tb.as_secs_f64();
    let parity = (ratio - 1.0).abs() <= 0.05;

    report(
        3,
        involution && new_in_echo.is_empty() && training_set == all && forward == all && clean_trace && parity,
        format!(
            "involution {involution}, echo adds {} params (of {}), infer trace {:?}, infer time cfc/base {ratio:.4} ({:.3}s vs {:.3}s)",
            new_in_echo.len(),
            all.len(),
            trace,
            tc.as_secs_f64(),
            tb.as_secs_f64()
        ),
    )
}

fn l2_avg(r: &OpenLoopReport, p: Protocol) -> f64 {
    r.row(p).l2_avg
}

fn cr_avg(r: &OpenLoopReport, p: Protocol) -> f64 {
    r.row(p).collision_avg
}

fn fmt_seq(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join("/")
}

fn table2(base: &[ArmResult], cfc: &[ArmResult]) -> Outcome {
    let pairs = || base.iter().zip(cfc);
    let l2_wins = pairs()
        .filter(|(b, c)| Protocol::ALL.iter().all(|&p| l2_avg(&c.report, p) < l2_avg(&b.report, p)))
        .count();
    let cr_ok = pairs()
        .filter(|(b, c)| Protocol::ALL.iter().all(|&p| cr_avg(&c.report, p) <= cr_avg(&b.report, p)))
        .count();
    let col = |arms: &[ArmResult], p: Protocol| fmt_seq(arms.iter().map(|a| l2_avg(&a.report, p)));
    let crs = |arms: &[ArmResult]| {
        fmt_seq(arms.iter().flat_map(|a| Protocol::ALL.map(|p| cr_avg(&a.report, p))))
    };
    report(
        4,
        l2_wins >= 4 && cr_ok >= 4,
        format!(
            "lower L2 avg (both protocols) in {l2_wins}/5 seeds, CR not higher in {cr_ok}/5; \
             FINAL_MAX base {} cfc {}; AVERAGE base {} cfc {}; CR base {} cfc {}",
            col(base, Protocol::FinalMax),
            col(cfc, Protocol::FinalMax),
            col(base, Protocol::Average),
            col(cfc, Protocol::Average),
            crs(base),
            crs(cfc)
        ),
    )
}

fn table6(base: &[ArmResult], cfc: &[ArmResult]) -> Outcome {
    let wins = base
        .iter()
        .zip(cfc)
        .filter(|(b, c)| c.temporal_consistency <= 0.8 * b.temporal_consistency)
        .count();
    report(
        5,
        wins >= 4,
        format!(
            "TC at least 20% lower in {wins}/5 seeds; base {} cfc {}",
            fmt_seq(base.iter().map(|a| a.temporal_consistency)),
            fmt_seq(cfc.iter().map(|a| a.temporal_consistency))
        ),
    )
}

fn table3(base8: &[ArmResult], cfc8: &[ArmResult]) -> Outcome {
    let wins = base8
        .iter()
        .zip(cfc8)
        .filter(|(b, c)| Protocol::ALL.iter().all(|&p| l2_avg(&c.report, p) <= l2_avg(&b.report, p)))
        .count();
    report(
        6,
        wins >= 4,
        format!(
            "Ns=8 cfc L2 avg <= baseline (both protocols) in {wins}/5 seeds; AVERAGE base {} cfc {}",
            fmt_seq(base8.iter().map(|a| l2_avg(&a.report, Protocol::Average))),
            fmt_seq(cfc8.iter().map(|a| l2_avg(&a.report, Protocol::Average)))
        ),
    )
}

fn table4(points: &[((f64, f64), &[ArmResult])]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for p in Protocol::ALL {
        let means: Vec<f64> = points
            .iter()
            .map(|(_, arms)| arms.iter().map(|a| l2_avg(&a.report, p)).sum::<f64>() / arms.len() as f64)
            .collect();
        let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let spread = (hi - lo) / lo;
        ok &= spread <= 0.15;
        parts.push(format!("{} means {} spread {:.1}%", p.as_str(), fmt_seq(means), 100.0 * spread));
    }
    let labels: Vec<String> = points.iter().map(|((c, f), _)| format!("({c},{f})")).collect();
    report(7, ok, format!("lambda (cur,fut) {}: {}", labels.join(" "), parts.join("; ")))
}

fn occupied_cells(b: &OrientedBox, cell: f64) -> BTreeSet<(i64, i64)> {
    let n = (40.0 / cell) as i64;
    let mut out = BTreeSet::new();
    for i in -n..n {
        for j in -n..n {
            if b.contains((i as f64 + 0.5) * cell, (j as f64 + 0.5) * cell) {
                out.insert((i, j));
            }
        }
    }
    out
}

fn metrics_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut agree, mut hits, placements) = (0, 0, 200);
    for _ in 0..placements {
        let cell = [0.5, 1.0][rng.gen_range(0..2)];
        let ego = Pose::new(rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0), rng.gen_range(-3.2..3.2));
        let agents: Vec<OrientedBox> = (0..rng.gen_range(1..3))
            .map(|_| {
                OrientedBox::new(
                    Pose::new(rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0), rng.gen_range(-3.2..3.2)),
                    rng.gen_range(0.5..5.0),
                    rng.gen_range(0.5..2.5),
                )
            })
            .collect();
        let ego_cells = occupied_cells(&OrientedBox::new(ego, EGO_LENGTH, EGO_WIDTH), cell);
        let expected = agents.iter().any(|a| !occupied_cells(a, cell).is_disjoint(&ego_cells));
        hits += expected as usize;
        agree += (footprint_collides(&ego, &agents, &Lattice { cell_size: cell }) == expected) as usize;
    }

    let mut h1 = 0;
    for _ in 0..200 {
        let random = |rng: &mut ChaCha8Rng| {
            Trajectory::new((0..HORIZON).map(|_| [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)]).collect())
        };
        let (a, b) = (random(&mut rng), random(&mut rng));
        let f = l2_at_horizon(&a, &b, 1, Protocol::FinalMax).unwrap();
        let v = l2_at_horizon(&a, &b, 1, Protocol::Average).unwrap();
        h1 += (f == v) as usize;
    }

    let gt = Trajectory::new((1..=HORIZON).map(|k| [1.25 * k as f64, 0.0]).collect());
    let mut pred = gt.clone();
    pred.points[5][0] += 3.0;
    pred.points[5][1] += 4.0;
    let fm = l2_at_horizon(&pred, &gt, 6, Protocol::FinalMax).unwrap();
    let avg = l2_at_horizon(&pred, &gt, 6, Protocol::Average).unwrap();
    let ok = agree == placements
        && hits >= 20
        && placements - hits >= 20
        && h1 == 200
        && fm == 5.0
        && (avg - 5.0 / 6.0).abs() < 1e-12;
    report(
        8,
        ok,
        format!(
            "collision checker agrees on {agree}/{placements} placements ({hits} colliding), \
             protocols equal at h=1 on {h1}/200, 3-4-5 gives {fm} / {avg:.4}"
        ),
    )
}

fn closed_loop(base: &[ArmResult], cfc: &[ArmResult]) -> Outcome {
    let rc = RolloutConfig::default();
    let oracle = rollout(&mut OraclePlanner, &profile(0).grid, &rc).unwrap();
    let sr = |arms: &[ArmResult]| -> Vec<f64> {
        arms.iter()
            .map(|a| {
                let mut planner = ModelPlanner {
                    params: &a.checkpoint.params,
                };
                rollout(&mut planner, &a.checkpoint.config.grid, &rc).unwrap().success_rate
            })
            .collect()
    };
    let (b, c) = (sr(base), sr(cfc));
    let wins = b.iter().zip(&c).filter(|(b, c)| c >= b).count();
    report(
        9,
        oracle.success_rate == 100.0 && wins >= 3,
        format!(
            "oracle SR {:.0}%, cfc SR >= baseline in {wins}/5 seeds; SR base {} cfc {}",
            oracle.success_rate,
            b.iter().map(|x| format!("{x:.0}%")).collect::<Vec<_>>().join("/"),
            c.iter().map(|x| format!("{x:.0}%")).collect::<Vec<_>>().join("/")
        ),
    )
}

fn main() {
    let start = Instant::now();
    let workers = default_workers();
    println!(
        "acceptance: desk profile 16x16 @ 1.0 m, K=32, {EPOCHS} epochs, lr 1e-3, \
         {TRAIN_EPISODES} train / {EVAL_EPISODES} eval episodes, {workers} worker thread(s)"
    );
    let mut outcomes = vec![gradient_suite(), loss_arithmetic(), metrics_oracles()];

    let grid = profile(0).grid;
    let train = generate_split(0, TRAIN_EPISODES, &Scenario::ALL, &grid);
    let eval = generate_split(1, EVAL_EPISODES, &Scenario::ALL, &grid);

    let mut configs = Vec::new();
    for s in SEEDS {
        configs.push(with(profile(s), 0.0, 0.0, 16));
        configs.push(with(profile(s), 0.1, 0.5, 16));
        configs.push(with(profile(s), 0.0, 0.0, 8));
        configs.push(with(profile(s), 0.1, 0.5, 8));
        configs.push(with(profile(s), 0.5, 0.5, 16));
        configs.push(with(profile(s), 0.1, 0.8, 16));
    }
    let train_start = Instant::now();
    let results = run_arms(&configs, &train, &eval, workers).expect("every arm trains");
    println!(
        "trained {} arms in {:.0}s",
        results.len(),
        train_start.elapsed().as_secs_f64()
    );
    let arm = |k: usize| -> Vec<ArmResult> { results.iter().skip(k).step_by(6).cloned().collect() };
    let (base, cfc, base8, cfc8, mid, high) = (arm(0), arm(1), arm(2), arm(3), arm(4), arm(5));

    outcomes.push(structural(&base[0], &cfc[0], &eval));
    outcomes.push(table2(&base, &cfc));
    outcomes.push(table6(&base, &cfc));
    outcomes.push(table3(&base8, &cfc8));
    outcomes.push(table4(&[((0.1, 0.5), &cfc), ((0.5, 0.5), &mid), ((0.1, 0.8), &high)]));
    outcomes.push(closed_loop(&base, &cfc));

    let total = start.elapsed();
    outcomes.push(report(
        10,
        total <= BUDGET,
        format!(
            "full run {:.1} min on {workers} worker thread(s), budget {} min",
            total.as_secs_f64() / 60.0,
            BUDGET.as_secs() / 60
        ),
    ));

    outcomes.sort_by_key(|o| o.id);
    println!("\nsummary");
    for o in &outcomes {
        println!("criterion {:>2}: {} | {}", o.id, if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
