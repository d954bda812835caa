//! Central finite-difference checks for every differentiable block.
//!
//! Each check builds a small randomized model, runs the block under a smooth
//! scalar readout, and compares the tape's adjoints with
//! `(f(x + h) − f(x − h)) / 2h` on sampled entries of every touched parameter
//! and every input.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cfc::{curbev_loss, futbev_loss, training_graph, LossWeights, Sample};
use crate::components::{
    encode_bev_from, encode_command, mln, scene_attention, self_attention_refine, token_fuse, token_learn,
};
use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::{ModelConfig, ModelParams};
use crate::planner::{plan, traj_loss};
use crate::tensor::Tensor;
use crate::world::{generate_episode, GridSpec, NavigationCommand, Scenario, HORIZON, SEM_CHANNELS};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
const ENTRIES_PER_TENSOR: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradBlock {
    EncodeBev,
    EncodeCommand,
    TokenLearn,
    TokenFuse,
    Mln,
    SceneAttention,
    SelfAttentionRefine,
    Plan,
    TrajLoss,
    FutbevLoss,
    CurbevLoss,
    /// The whole training objective, current → future → current.
    TrainingGraph,
}

impl GradBlock {
    pub const ALL: [GradBlock; 12] = [
        GradBlock::EncodeBev,
        GradBlock::EncodeCommand,
        GradBlock::TokenLearn,
        GradBlock::TokenFuse,
        GradBlock::Mln,
        GradBlock::SceneAttention,
        GradBlock::SelfAttentionRefine,
        GradBlock::Plan,
        GradBlock::TrajLoss,
        GradBlock::FutbevLoss,
        GradBlock::CurbevLoss,
        GradBlock::TrainingGraph,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GradBlock::EncodeBev => "encode_bev",
            GradBlock::EncodeCommand => "encode_command",
            GradBlock::TokenLearn => "token_learn",
            GradBlock::TokenFuse => "token_fuse",
            GradBlock::Mln => "mln",
            GradBlock::SceneAttention => "scene_attention",
            GradBlock::SelfAttentionRefine => "self_attention_refine",
            GradBlock::Plan => "plan",
            GradBlock::TrajLoss => "traj_loss",
            GradBlock::FutbevLoss => "futbev_loss",
            GradBlock::CurbevLoss => "curbev_loss",
            GradBlock::TrainingGraph => "training_graph",
        }
    }
}

/// Worst relative error over everything checked in one run.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub block: GradBlock,
    pub seed: u64,
    pub max_rel_err: f64,
    /// Parameter name or `input <k>` where the worst error occurred.
    pub worst: String,
    /// Number of tensors compared.
    pub tensors: usize,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.tensors > 0 && self.max_rel_err < TOLERANCE
    }
}

pub fn check_config() -> ModelConfig {
    ModelConfig {
        grid_h: 4,
        grid_w: 4,
        channels: 8,
        encoder_hidden: 3,
        tokens: 3,
        heads: 2,
        attn_layers: 2,
        mln_hidden: 4,
        planner_hidden: 5,
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::from_vec(rows, cols, data)
}

/// Initialized parameters with every entry (biases and gains included)
/// jittered, so no adjoint hides behind an exact zero.
pub fn random_params(seed: u64) -> ModelParams {
    let mut p = ModelParams::init(check_config(), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    for t in p.tensors_mut() {
        for v in &mut t.data {
            *v += rng.gen_range(-0.3..0.3);
        }
    }
    p
}

/// `‖a − b‖ / (‖a‖ + ‖b‖)`, or the absolute difference when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>());
    let na = libm::sqrt(a.iter().map(|x| x * x).sum::<f64>());
    let nb = libm::sqrt(b.iter().map(|x| x * x).sum::<f64>());
    if na + nb < 1e-10 {
        return diff;
    }
    diff / (na + nb)
}

fn pick(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    if n <= ENTRIES_PER_TENSOR {
        return (0..n).collect();
    }
    (0..ENTRIES_PER_TENSOR).map(|_| rng.gen_range(0..n)).collect()
}

/// Compares tape and numeric gradients of `build` with respect to every
/// touched parameter not prefixed by an entry of `skip`, and every input.
pub fn compare<F>(params: &ModelParams, inputs: &[Tensor], seed: u64, skip: &[&str], build: F) -> (f64, String, usize)
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Var,
{
    let eval = |p: &ModelParams, xs: &[Tensor]| {
        let mut g = Graph::new(p);
        let vars: Vec<Var> = xs.iter().map(|x| g.input(x.clone())).collect();
        let loss = build(&mut g, &vars);
        g.value(loss).data[0]
    };

    let mut g = Graph::new(params);
    let vars: Vec<Var> = inputs.iter().map(|x| g.input(x.clone())).collect();
    let loss = build(&mut g, &vars);
    let grads = g.backward(loss);
    let touched: Vec<String> = g.touched_params().iter().map(|s| s.to_string()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(77));
    let mut worst = (0.0f64, String::new(), 0usize);
    let record = |e: f64, at: String, worst: &mut (f64, String, usize)| {
        let e = if e.is_nan() { f64::INFINITY } else { e };
        worst.2 += 1;
        if worst.1.is_empty() || e > worst.0 {
            worst.0 = e;
            worst.1 = at;
        }
    };
    for name in touched.iter().filter(|n| !skip.iter().any(|s| n.starts_with(s))) {
        let Some(id) = params.id(name) else { continue };
        let analytic_full = grads.param(id).cloned().unwrap_or_else(|| {
            let t = params.get(id);
            Tensor::zeros(t.rows, t.cols)
        });
        let idx = pick(&mut rng, analytic_full.len());
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for &i in &idx {
            let mut plus = params.clone();
            plus.get_mut(id).data[i] += STEP;
            let mut minus = params.clone();
            minus.get_mut(id).data[i] -= STEP;
            numeric.push((eval(&plus, inputs) - eval(&minus, inputs)) / (2.0 * STEP));
            analytic.push(analytic_full.data[i]);
        }
        record(rel_err(&analytic, &numeric), name.clone(), &mut worst);
    }
    for (k, x) in inputs.iter().enumerate() {
        let analytic_full = grads.wrt(vars[k]).cloned().unwrap_or_else(|| Tensor::zeros(x.rows, x.cols));
        let idx = pick(&mut rng, x.len());
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for &i in &idx {
            let mut xp = inputs.to_vec();
            xp[k].data[i] += STEP;
            let mut xm = inputs.to_vec();
            xm[k].data[i] -= STEP;
            numeric.push((eval(params, &xp) - eval(params, &xm)) / (2.0 * STEP));
            analytic.push(analytic_full.data[i]);
        }
        record(rel_err(&analytic, &numeric), alloc::format!("input {k}"), &mut worst);
    }
    worst
}

/// Smooth scalar readout of an arbitrary output.
fn readout(g: &mut Graph<'_>, out: Var, seed: u64) -> Var {
    let (r, c) = g.value(out).shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let target = g.constant(random_tensor(&mut rng, r, c, 1.0));
    g.mean_sq_diff(out, target)
}

/// Runs the finite-difference check of `block` at `seed`.
pub fn check_block(block: GradBlock, seed: u64) -> Result<GradCheck> {
    let c = check_config();
    let p = random_params(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tokens = |rng: &mut ChaCha8Rng| random_tensor(rng, c.tokens, c.channels, 1.0);
    let bev = |rng: &mut ChaCha8Rng| random_tensor(rng, c.cells(), c.channels, 1.0);

    // Blocks are fallible only on shape errors, which these fixed shapes rule out.
    let (max_rel_err, worst, tensors) = match block {
        GradBlock::EncodeBev => {
            let x = random_tensor(&mut rng, c.cells(), SEM_CHANNELS, 1.0);
            compare(&p, &[x], seed, &[], |g, v| {
                let out = encode_bev_from(g, v[0]).expect("fixed shapes");
                readout(g, out, seed)
            })
        }
        GradBlock::EncodeCommand => {
            let cmd = NavigationCommand::ALL[seed as usize % 3];
            compare(&p, &[bev(&mut rng)], seed, &[], |g, v| {
                let out = encode_command(g, cmd, v[0]);
                readout(g, out, seed)
            })
        }
        GradBlock::TokenLearn => compare(&p, &[bev(&mut rng)], seed, &[], |g, v| {
            let out = token_learn(g, v[0]).tokens;
            readout(g, out, seed)
        }),
        GradBlock::TokenFuse => compare(&p, &[tokens(&mut rng)], seed, &[], |g, v| {
            let out = token_fuse(g, v[0]).bev;
            readout(g, out, seed)
        }),
        GradBlock::Mln => {
            let t = tokens(&mut rng);
            let traj = random_tensor(&mut rng, HORIZON, 2, 3.0);
            compare(&p, &[t, traj], seed, &[], |g, v| {
                let out = mln(g, v[0], v[1]).expect("fixed shapes").tokens;
                readout(g, out, seed)
            })
        }
        GradBlock::SceneAttention => compare(&p, &[tokens(&mut rng)], seed, &[], |g, v| {
            let out = scene_attention(g, v[0]).tokens;
            readout(g, out, seed)
        }),
        GradBlock::SelfAttentionRefine => compare(&p, &[tokens(&mut rng)], seed, &[], |g, v| {
            let out = self_attention_refine(g, v[0]).tokens;
            readout(g, out, seed)
        }),
        GradBlock::Plan => compare(&p, &[tokens(&mut rng)], seed, &[], |g, v| {
            let out = plan(g, v[0]).multi;
            readout(g, out, seed)
        }),
        GradBlock::TrajLoss => {
            let pred = random_tensor(&mut rng, HORIZON, 2, 3.0);
            let gt = random_tensor(&mut rng, HORIZON, 2, 3.0);
            compare(&p, &[pred, gt], seed, &[], |g, v| traj_loss(g, v[0], v[1]).expect("fixed shapes"))
        }
        GradBlock::FutbevLoss => {
            let (a, b) = (bev(&mut rng), bev(&mut rng));
            compare(&p, &[a, b], seed, &[], |g, v| futbev_loss(g, v[0], v[1]).expect("fixed shapes"))
        }
        GradBlock::CurbevLoss => {
            let (a, b) = (bev(&mut rng), bev(&mut rng));
            compare(&p, &[a, b], seed, &[], |g, v| curbev_loss(g, v[0], v[1]).expect("fixed shapes"))
        }
        GradBlock::TrainingGraph => {
            let grid = GridSpec {
                h: c.grid_h,
                w: c.grid_w,
                cell_size: 4.0,
            };
            let ep = generate_episode(seed, Scenario::ALL[seed as usize % 4], &grid);
            let future = ep.future_target_raster(0).expect("episodes are longer than one frame");
            let frame = &ep.frames[0];
            let sample = Sample {
                raster: &frame.raster,
                command: frame.command,
                gt_future: &frame.gt_future,
                future_raster: &future,
            };
            training_graph(&mut Graph::new(&p), &sample, &LossWeights::default())?;
            // Encoder weights also move the stop-gradient targets under
            // perturbation; they are covered by the encode_bev check.
            compare(&p, &[], seed, &["encoder."], |g, _| {
                training_graph(g, &sample, &LossWeights::default()).expect("checked above").total
            })
        }
    };
    Ok(GradCheck {
        block,
        seed,
        max_rel_err,
        worst,
        tensors,
    })
}
