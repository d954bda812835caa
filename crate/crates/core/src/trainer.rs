//! Seeded end-to-end training and the ablation grid.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cfc::{training_graph, LossBundle, LossWeights, Sample};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::metrics::{evaluate_open_loop, OpenLoopReport};
use crate::optim::{AdamW, AdamWConfig};
use crate::params::{ModelConfig, ModelParams};
use crate::tensor::Tensor;
use crate::world::{Episode, Frame, GridSpec, SemanticRaster};

/// Widths and depths that are not part of the ablation key.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub encoder_hidden: usize,
    pub heads: usize,
    pub attn_layers: usize,
    pub mln_hidden: usize,
    pub planner_hidden: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            encoder_hidden: m.encoder_hidden,
            heads: m.heads,
            attn_layers: m.attn_layers,
            mln_hidden: m.mln_hidden,
            planner_hidden: m.planner_hidden,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Frames per optimizer step.
    pub batch_size: usize,
    pub lambda_futbev: f64,
    pub lambda_curbev: f64,
    /// Scene token count `N_s`.
    #[serde(alias = "n_s")]
    pub tokens: usize,
    /// BEV channels `K`.
    #[serde(alias = "k")]
    pub channels: usize,
    pub seed: u64,
    pub dataset: Option<String>,
    pub grid: GridSpec,
    pub architecture: Architecture,
    /// Stops early after this many optimizer steps.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        let m = ModelConfig::default();
        Self {
            epochs: 20,
            learning_rate: 5e-5,
            weight_decay: 1e-2,
            batch_size: 4,
            lambda_futbev: w.lambda_futbev,
            lambda_curbev: w.lambda_curbev,
            tokens: m.tokens,
            channels: m.channels,
            seed: 0,
            dataset: None,
            grid: GridSpec::default(),
            architecture: Architecture::default(),
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda_futbev: self.lambda_futbev,
            lambda_curbev: self.lambda_curbev,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        let a = self.architecture;
        ModelConfig {
            grid_h: self.grid.h,
            grid_w: self.grid.w,
            channels: self.channels,
            encoder_hidden: a.encoder_hidden,
            tokens: self.tokens,
            heads: a.heads,
            attn_layers: a.attn_layers,
            mln_hidden: a.mln_hidden,
            planner_hidden: a.planner_hidden,
        }
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::InvalidConfig(format!("`{field}` {why}")));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate", "must be finite and > 0");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay", "must be finite and >= 0");
        }
        if self.epochs == 0 {
            return bad("epochs", "must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be >= 1");
        }
        if self.max_steps == Some(0) {
            return bad("max_steps", "must be >= 1 when set");
        }
        self.loss_weights().validate()?;
        self.grid.validate()?;
        self.model_config().validate().map_err(Error::InvalidConfig)
    }
}

/// Everything needed to continue a run bit-for-bit.
///
/// The data order is a pure function of `(config.seed, epoch)`, so the step
/// counter is the whole generator state.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub optimizer: AdamW,
    pub config: TrainConfig,
    pub history: Vec<LossBundle>,
    pub step: usize,
}

struct Prepared<'d> {
    frame: &'d Frame,
    future: SemanticRaster,
}

/// Frames usable for training: those with a successor.
fn prepare<'d>(episodes: &'d [Episode], grid: &GridSpec) -> Result<Vec<Prepared<'d>>> {
    let mut out = Vec::new();
    for ep in episodes {
        if ep.grid.h != grid.h || ep.grid.w != grid.w {
            return Err(Error::ShapeMismatch {
                what: "episode grid",
                expected: (grid.h, grid.w),
                actual: (ep.grid.h, ep.grid.w),
            });
        }
        if ep.grid.cell_size != grid.cell_size {
            return Err(Error::InvalidConfig(format!(
                "`grid.cell_size` is {} but episode {} uses {}",
                grid.cell_size, ep.scenario_id, ep.grid.cell_size
            )));
        }
        for t in 0..ep.frames.len().saturating_sub(1) {
            let future = ep.future_target_raster(t).expect("successor frame");
            out.push(Prepared {
                frame: &ep.frames[t],
                future,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

impl Prepared<'_> {
    fn sample(&self) -> Sample<'_> {
        Sample {
            raster: &self.frame.raster,
            command: self.frame.command,
            gt_future: &self.frame.gt_future,
            future_raster: &self.future,
        }
    }
}

fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mix = seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(epoch as u64 + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(mix);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Loss and summed parameter gradients of one sample.
fn sample_gradients(
    params: &ModelParams,
    sample: &Sample<'_>,
    weights: &LossWeights,
) -> Result<(LossBundle, Vec<Option<Tensor>>)> {
    let mut g = Graph::new(params);
    let tg = training_graph(&mut g, sample, weights)?;
    Ok((tg.bundle, g.backward(tg.total).into_params()))
}

pub struct Trainer<'d> {
    config: TrainConfig,
    params: ModelParams,
    optimizer: AdamW,
    history: Vec<LossBundle>,
    step: usize,
    samples: Vec<Prepared<'d>>,
    order: Option<(usize, Vec<usize>)>,
}

impl<'d> Trainer<'d> {
    pub fn new(config: TrainConfig, episodes: &'d [Episode]) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(config.model_config(), config.seed);
        let optimizer = AdamW::new(config.optimizer(), &params);
        Self::assemble(config, params, optimizer, Vec::new(), 0, episodes)
    }

    pub fn resume(checkpoint: Checkpoint, episodes: &'d [Episode]) -> Result<Self> {
        let Checkpoint {
            params,
            optimizer,
            config,
            history,
            step,
        } = checkpoint;
        config.validate()?;
        if *params.config() != config.model_config() {
            return Err(Error::InvalidConfig(String::from(
                "checkpoint parameters do not match its config",
            )));
        }
        Self::assemble(config, params, optimizer, history, step, episodes)
    }

    fn assemble(
        config: TrainConfig,
        params: ModelParams,
        optimizer: AdamW,
        history: Vec<LossBundle>,
        step: usize,
        episodes: &'d [Episode],
    ) -> Result<Self> {
        let samples = prepare(episodes, &config.grid)?;
        Ok(Self {
            config,
            params,
            optimizer,
            history,
            step,
            samples,
            order: None,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn history(&self) -> &[LossBundle] {
        &self.history
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.samples.len().div_ceil(self.config.batch_size)
    }

    pub fn total_steps(&self) -> usize {
        let full = self.config.epochs * self.steps_per_epoch();
        self.config.max_steps.map_or(full, |m| m.min(full))
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.total_steps()
    }

    fn batch(&mut self) -> Vec<usize> {
        let per_epoch = self.steps_per_epoch();
        let (epoch, pos) = (self.step / per_epoch, self.step % per_epoch);
        let n = self.samples.len();
        if self.order.as_ref().map(|(e, _)| *e) != Some(epoch) {
            self.order = Some((epoch, epoch_order(self.config.seed, epoch, n)));
        }
        let order = &self.order.as_ref().expect("order").1;
        let bs = self.config.batch_size;
        order[pos * bs..((pos + 1) * bs).min(n)].to_vec()
    }

    /// One optimizer step on the next batch. Returns the batch-mean losses.
    pub fn step(&mut self) -> Result<LossBundle> {
        let batch = self.batch();
        let weights = self.config.loss_weights();
        let mut sum: Vec<Option<Tensor>> = alloc::vec![None; self.params.len()];
        let mut loss = LossBundle::default();
        for &i in &batch {
            let (b, grads) = sample_gradients(&self.params, &self.samples[i].sample(), &weights)?;
            if !b.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: self.step,
                    traj: b.traj,
                    futbev: b.futbev,
                    curbev: b.curbev,
                });
            }
            loss.traj += b.traj;
            loss.futbev += b.futbev;
            loss.curbev += b.curbev;
            loss.total += b.total;
            for (acc, g) in sum.iter_mut().zip(grads) {
                match (acc.as_mut(), g) {
                    (Some(a), Some(g)) => a.add_assign(&g),
                    (None, Some(g)) => *acc = Some(g),
                    _ => {}
                }
            }
        }
        let inv = 1.0 / batch.len() as f64;
        for g in sum.iter_mut().flatten() {
            g.scale_assign(inv);
        }
        loss.traj *= inv;
        loss.futbev *= inv;
        loss.curbev *= inv;
        loss.total *= inv;
        self.optimizer.step(&mut self.params, &sum);
        self.history.push(loss);
        self.step += 1;
        Ok(loss)
    }

    /// Runs the remaining steps, reporting each one.
    pub fn run_with(&mut self, mut on_step: impl FnMut(usize, &LossBundle)) -> Result<()> {
        while !self.is_done() {
            let l = self.step()?;
            on_step(self.step, &l);
        }
        Ok(())
    }

    pub fn run(&mut self) -> Result<()> {
        self.run_with(|_, _| {})
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            optimizer: self.optimizer.clone(),
            config: self.config.clone(),
            history: self.history.clone(),
            step: self.step,
        }
    }

    pub fn into_checkpoint(self) -> Checkpoint {
        Checkpoint {
            params: self.params,
            optimizer: self.optimizer,
            config: self.config,
            history: self.history,
            step: self.step,
        }
    }
}

pub fn train(config: TrainConfig, episodes: &[Episode]) -> Result<Checkpoint> {
    let mut t = Trainer::new(config, episodes)?;
    t.run()?;
    Ok(t.into_checkpoint())
}

/// Mean loss bundle of `params` over every trainable frame of `episodes`.
pub fn dataset_loss(params: &ModelParams, episodes: &[Episode], weights: &LossWeights) -> Result<LossBundle> {
    let first = episodes.first().ok_or(Error::EmptyDataset)?;
    let samples = prepare(episodes, &first.grid)?;
    let mut acc = LossBundle::default();
    for s in &samples {
        let out = crate::cfc::cfc_outputs(params, &s.sample(), weights)?;
        acc.traj += out.losses.traj;
        acc.futbev += out.losses.futbev;
        acc.curbev += out.losses.curbev;
        acc.total += out.losses.total;
    }
    let inv = 1.0 / samples.len() as f64;
    Ok(LossBundle {
        traj: acc.traj * inv,
        futbev: acc.futbev * inv,
        curbev: acc.curbev * inv,
        total: acc.total * inv,
    })
}

/// Ablation row identity: cycle on/off, token count, `(λ_curbev, λ_futbev)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmKey {
    pub cfc: bool,
    pub tokens: usize,
    pub lambda_curbev: f64,
    pub lambda_futbev: f64,
}

impl ArmKey {
    pub fn of(config: &TrainConfig) -> Self {
        Self {
            cfc: config.loss_weights().is_cycle_enabled(),
            tokens: config.tokens,
            lambda_curbev: config.lambda_curbev,
            lambda_futbev: config.lambda_futbev,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationArm {
    pub table: String,
    pub label: String,
    pub config: TrainConfig,
}

impl AblationArm {
    fn new(table: &str, label: String, config: TrainConfig) -> Self {
        Self {
            table: String::from(table),
            label,
            config,
        }
    }
}

fn with_lambdas(base: &TrainConfig, curbev: f64, futbev: f64) -> TrainConfig {
    TrainConfig {
        lambda_curbev: curbev,
        lambda_futbev: futbev,
        ..base.clone()
    }
}

/// Cycle off vs. cycle on at the base weights.
pub fn table2_arms(base: &TrainConfig) -> Vec<AblationArm> {
    let on = if base.loss_weights().is_cycle_enabled() {
        base.clone()
    } else {
        with_lambdas(base, LossWeights::default().lambda_curbev, LossWeights::default().lambda_futbev)
    };
    alloc::vec![
        AblationArm::new("table2", String::from("baseline"), with_lambdas(base, 0.0, 0.0)),
        AblationArm::new("table2", String::from("cfc"), on),
    ]
}

/// `N_s ∈ {8, 16}` × cycle off/on.
pub fn table3_arms(base: &TrainConfig) -> Vec<AblationArm> {
    let mut arms = Vec::new();
    for tokens in [8, 16] {
        for arm in table2_arms(base) {
            arms.push(AblationArm::new(
                "table3",
                format!("{}-ns{tokens}", arm.label),
                TrainConfig { tokens, ..arm.config },
            ));
        }
    }
    arms
}

/// `(λ_curbev, λ_futbev) ∈ {(0.1, 0.5), (0.5, 0.5), (0.1, 0.8)}`.
pub fn table4_arms(base: &TrainConfig) -> Vec<AblationArm> {
    [(0.1, 0.5), (0.5, 0.5), (0.1, 0.8)]
        .into_iter()
        .map(|(c, f)| AblationArm::new("table4", format!("cur{c}-fut{f}"), with_lambdas(base, c, f)))
        .collect()
}

pub fn standard_arms(base: &TrainConfig) -> Vec<AblationArm> {
    let mut arms = table2_arms(base);
    arms.extend(table3_arms(base));
    arms.extend(table4_arms(base));
    arms
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub table: String,
    pub label: String,
    pub key: ArmKey,
    pub report: OpenLoopReport,
    pub temporal_consistency: f64,
    pub final_loss: LossBundle,
}

/// Result of one trained and evaluated configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmResult {
    pub checkpoint: Checkpoint,
    pub report: OpenLoopReport,
    pub temporal_consistency: f64,
}

pub fn run_arm(config: &TrainConfig, train_set: &[Episode], eval_set: &[Episode]) -> Result<ArmResult> {
    let checkpoint = train(config.clone(), train_set)?;
    let eval = evaluate_open_loop(&checkpoint.params, eval_set)?;
    Ok(ArmResult {
        checkpoint,
        report: eval.report,
        temporal_consistency: eval.temporal_consistency,
    })
}

/// Trains and evaluates every arm; arms with identical configs share one run.
pub fn ablate(arms: &[AblationArm], train_set: &[Episode], eval_set: &[Episode]) -> Result<Vec<AblationRow>> {
    let mut done: Vec<(TrainConfig, ArmResult)> = Vec::new();
    let mut rows = Vec::with_capacity(arms.len());
    for arm in arms {
        arm.config.validate()?;
        let idx = match done.iter().position(|(c, _)| *c == arm.config) {
            Some(i) => i,
            None => {
                done.push((arm.config.clone(), run_arm(&arm.config, train_set, eval_set)?));
                done.len() - 1
            }
        };
        let r = &done[idx].1;
        rows.push(AblationRow {
            table: arm.table.clone(),
            label: arm.label.clone(),
            key: ArmKey::of(&arm.config),
            report: r.report.clone(),
            temporal_consistency: r.temporal_consistency,
            final_loss: r.checkpoint.history.last().copied().unwrap_or_default(),
        });
    }
    Ok(rows)
}
