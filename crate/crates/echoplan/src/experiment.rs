//! Ablation grid files and a threaded arm runner.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use echoplan_core::trainer::{
    run_arm, table2_arms, table3_arms, table4_arms, AblationArm, AblationRow, ArmKey, ArmResult, TrainConfig,
};
use echoplan_core::world::generate_episode;
use echoplan_core::{Episode, Scenario};
use serde::{Deserialize, Serialize};

use crate::dataset::{episode_seed, load_dataset};
use crate::error::FormatError;

pub const TABLES: [&str; 3] = ["table2", "table3", "table4"];

/// Where a split comes from: generated on the fly or read from disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Generated {
        seed: u64,
        episodes: usize,
        #[serde(default = "all_scenarios")]
        scenarios: Vec<Scenario>,
    },
    Path(PathBuf),
}

fn all_scenarios() -> Vec<Scenario> {
    Scenario::ALL.to_vec()
}

fn default_tables() -> Vec<String> {
    TABLES.iter().map(|t| t.to_string()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationGrid {
    pub base: TrainConfig,
    pub train: DataSource,
    pub eval: DataSource,
    #[serde(default = "default_tables")]
    pub tables: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Core(#[from] echoplan_core::Error),
    #[error("invalid grid: `{field}` {why}")]
    Invalid { field: &'static str, why: String },
}

impl DataSource {
    /// Relative paths resolve against `base_dir`.
    pub fn load(&self, base_dir: &Path, grid: &echoplan_core::GridSpec) -> Result<Vec<Episode>, ExperimentError> {
        match self {
            DataSource::Generated {
                seed,
                episodes,
                scenarios,
            } => {
                if *episodes == 0 {
                    return Err(ExperimentError::Invalid {
                        field: "episodes",
                        why: String::from("must be >= 1"),
                    });
                }
                if scenarios.is_empty() {
                    return Err(ExperimentError::Invalid {
                        field: "scenarios",
                        why: String::from("must not be empty"),
                    });
                }
                Ok((0..*episodes)
                    .map(|i| generate_episode(episode_seed(*seed, i), scenarios[i % scenarios.len()], grid))
                    .collect())
            }
            DataSource::Path(p) => Ok(load_dataset(&base_dir.join(p))?),
        }
    }
}

impl AblationGrid {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.base.validate()?;
        if self.tables.is_empty() {
            return Err(ExperimentError::Invalid {
                field: "tables",
                why: String::from("must list at least one table"),
            });
        }
        if let Some(t) = self.tables.iter().find(|t| !TABLES.contains(&t.as_str())) {
            return Err(ExperimentError::Invalid {
                field: "tables",
                why: format!("unknown table `{t}`"),
            });
        }
        Ok(())
    }

    /// Arms of every listed table, in table order.
    pub fn arms(&self) -> Vec<AblationArm> {
        let mut arms = Vec::new();
        for t in &self.tables {
            arms.extend(match t.as_str() {
                "table2" => table2_arms(&self.base),
                "table3" => table3_arms(&self.base),
                _ => table4_arms(&self.base),
            });
        }
        arms
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Trains and evaluates each config on up to `workers` threads. Results come
/// back in input order and do not depend on the worker count.
pub fn run_arms(
    configs: &[TrainConfig],
    train_set: &[Episode],
    eval_set: &[Episode],
    workers: usize,
) -> echoplan_core::Result<Vec<ArmResult>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<echoplan_core::Result<ArmResult>>>> = Mutex::new((0..configs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, configs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(config) = configs.get(i) else {
                    break;
                };
                let r = run_arm(config, train_set, eval_set);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|r| r.expect("every index claimed"))
        .collect()
}

/// Like the sequential ablation, with distinct configs trained in parallel.
pub fn ablate_parallel(
    arms: &[AblationArm],
    train_set: &[Episode],
    eval_set: &[Episode],
    workers: usize,
) -> echoplan_core::Result<Vec<AblationRow>> {
    let mut unique: Vec<TrainConfig> = Vec::new();
    let mut index = Vec::with_capacity(arms.len());
    for arm in arms {
        arm.config.validate()?;
        let i = match unique.iter().position(|c| *c == arm.config) {
            Some(i) => i,
            None => {
                unique.push(arm.config.clone());
                unique.len() - 1
            }
        };
        index.push(i);
    }
    let results = run_arms(&unique, train_set, eval_set, workers)?;
    Ok(arms
        .iter()
        .zip(index)
        .map(|(arm, i)| {
            let r = &results[i];
            AblationRow {
                table: arm.table.clone(),
                label: arm.label.clone(),
                key: ArmKey::of(&arm.config),
                report: r.report.clone(),
                temporal_consistency: r.temporal_consistency,
                final_loss: r.checkpoint.history.last().copied().unwrap_or_default(),
            }
        })
        .collect())
}
