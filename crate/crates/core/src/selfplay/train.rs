use std::sync::Arc;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use super::policy::{policy_gradient, Episode};
use super::rollout::{rollout, PreparedScenario, Responder, RolloutConfig, Scenario, Judge, Trajectory};
use crate::exec::{self, Execution};
use crate::generation::{GenerationModel, PriorFeatures, SelectionMode};
use crate::nn::{Adam, Params};
use crate::rng::{self, Rng, Stream};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch: usize,
    /// Rollouts per baseline estimate.
    pub baseline_samples: usize,
    pub lr: f64,
    pub turns: usize,
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 100,
            batch: 8,
            baseline_samples: 16,
            lr: 2e-4,
            turns: 8,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iteration: usize,
    pub reward: f64,
    pub informativeness: f64,
    pub coherence: f64,
}

pub const CURVE_HEADER: &str = "iteration,reward,informativeness,coherence";

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.iteration, r.reward, r.informativeness, r.coherence));
    }
    out
}

/// Optimizer moments exist for the selector alone.
#[derive(Clone, Debug)]
pub struct TrainerState {
    pub iteration: usize,
    pub adam: Adam,
    pub rng: Rng,
    pub curve: Vec<CurveRow>,
}

impl TrainerState {
    pub fn new(model: &GenerationModel, config: &TrainConfig) -> Self {
        TrainerState {
            iteration: 0,
            adam: Adam::for_params(config.lr, &model.selector),
            rng: rng::stream(config.seed, Stream::Reinforce),
            curve: Vec::new(),
        }
    }
}

fn ensure_frozen(model: &GenerationModel) -> Result<()> {
    if !model.is_frozen_for_reinforcement() {
        return Err(Error::InvalidArgument(
            "policy-gradient training needs a pre-trained model with everything but the selector frozen".into(),
        ));
    }
    Ok(())
}

/// One ascent step on the selector from trajectories and their baselines.
/// A gradient that is exactly zero leaves the parameters and the optimizer
/// untouched; a non-finite one is an error and nothing is updated.
pub fn policy_gradient_step(
    model: &mut GenerationModel,
    trajectories: &[Trajectory],
    baselines: &[f64],
    adam: &mut Adam,
    execution: Execution,
) -> Result<()> {
    ensure_frozen(model)?;
    if trajectories.len() != baselines.len() {
        return Err(Error::Shape(format!(
            "{} trajectories with {} baselines",
            trajectories.len(),
            baselines.len()
        )));
    }
    let episodes: Vec<Episode<PriorFeatures>> = trajectories
        .iter()
        .zip(baselines)
        .map(|(t, b)| Episode {
            decisions: &t.decisions,
            advantage: t.reward.total - b,
        })
        .collect();
    let mut grad = policy_gradient(&model.selector, &episodes, execution)?;
    if grad.max_abs() == 0.0 {
        return Ok(());
    }
    grad.scale(-1.0);
    adam.step(&mut model.selector, &grad)
}

/// Runs `config.iterations` iterations: each samples `batch` scenarios,
/// estimates a per-scenario baseline from `baseline_samples` separate
/// rollouts, and applies one policy-gradient step.
pub fn train<Rs, J>(
    model: &mut GenerationModel,
    responder: &Rs,
    judge: &J,
    scenarios: &[Arc<Scenario>],
    config: &TrainConfig,
    state: &mut TrainerState,
    mut on_iteration: impl FnMut(&CurveRow, &GenerationModel) -> Result<()>,
) -> Result<()>
where
    Rs: Responder + ?Sized,
    J: Judge + ?Sized,
{
    ensure_frozen(model)?;
    if scenarios.is_empty() {
        return Err(Error::Empty("training scenarios"));
    }
    if config.batch == 0 || config.baseline_samples == 0 || config.turns == 0 {
        return Err(Error::InvalidArgument("batch, baseline_samples and turns must be positive".into()));
    }
    let rollout_config = RolloutConfig {
        turns: config.turns,
        selection: SelectionMode::Sample,
    };
    let k = config.baseline_samples;
    for _ in 0..config.iterations {
        let picked: Vec<Arc<Scenario>> = (0..config.batch)
            .map(|_| Arc::clone(scenarios.choose(&mut state.rng).expect("non-empty")))
            .collect();
        let frozen = &*model;
        let prepared = exec::try_map(config.execution, picked, |s| PreparedScenario::new(frozen, s))?;
        let mut jobs = Vec::with_capacity(config.batch * (k + 1));
        for (j, _) in prepared.iter().enumerate() {
            for child in rng::children(&mut state.rng, k + 1) {
                jobs.push((j, child));
            }
        }
        let runs = exec::try_map(config.execution, jobs, |(j, mut child)| {
            rollout(frozen, responder, judge, &prepared[j], &rollout_config, &mut child)
        })?;
        let mut trajectories = Vec::with_capacity(config.batch);
        let mut baselines = Vec::with_capacity(config.batch);
        let mut runs = runs.into_iter();
        for _ in 0..config.batch {
            trajectories.push(runs.next().expect("k + 1 rollouts per item"));
            let rest: f64 = runs.by_ref().take(k).map(|t| t.reward.total).sum();
            baselines.push(rest / k as f64);
        }
        policy_gradient_step(model, &trajectories, &baselines, &mut state.adam, config.execution)?;
        state.iteration += 1;
        let n = trajectories.len() as f64;
        let row = CurveRow {
            iteration: state.iteration,
            reward: trajectories.iter().map(|t| t.reward.total).sum::<f64>() / n,
            informativeness: trajectories.iter().map(|t| t.reward.r_i).sum::<f64>() / n,
            coherence: trajectories.iter().map(|t| t.reward.coherence()).sum::<f64>() / n,
        };
        log::debug!(
            "iteration {}: R {:.4} r_I {:.4} r_C {:.4}",
            row.iteration,
            row.reward,
            row.informativeness,
            row.coherence
        );
        state.curve.push(row);
        on_iteration(&row, model)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::{frozen_model, novelty, scenario, vocab, Echo, FnJudge};
    use super::*;
    use crate::generation::ParamGroup;
    use crate::TokenId;

    fn config(iterations: usize, turns: usize) -> TrainConfig {
        TrainConfig {
            iterations,
            batch: 4,
            baseline_samples: 3,
            lr: 0.05,
            turns,
            seed: 11,
            execution: Execution::Sequential,
        }
    }

    fn run(cfg: &TrainConfig) -> (GenerationModel, TrainerState) {
        let mut model = frozen_model(2);
        let scenarios = vec![scenario(3), scenario(4)];
        let mut state = TrainerState::new(&model, cfg);
        train(&mut model, &Echo, &FnJudge(novelty), &scenarios, cfg, &mut state, |_, _| Ok(())).unwrap();
        (model, state)
    }

    #[test]
    fn deterministic_under_a_seed() {
        let cfg = config(5, 4);
        let (a, sa) = run(&cfg);
        let (b, sb) = run(&cfg);
        assert_eq!(a.selector, b.selector);
        assert_eq!(sa.curve, sb.curve);
        let (c, _) = run(&TrainConfig { seed: 12, ..cfg.clone() });
        assert_ne!(a.selector, c.selector);
        let (d, sd) = run(&TrainConfig {
            execution: Execution::Parallel,
            ..cfg
        });
        assert_eq!(a.selector, d.selector);
        assert_eq!(sa.curve, sd.curve);
    }

    #[test]
    fn only_the_selector_moves() {
        let before = frozen_model(2);
        let (after, state) = run(&config(5, 4));
        assert_eq!(state.iteration, 5);
        assert_eq!(state.curve.len(), 5);
        let (gb, ga) = (before.group_values(), after.group_values());
        for (group, values) in &gb {
            if *group == ParamGroup::Selector {
                assert_ne!(values, &ga[group]);
            } else {
                assert!(values == &ga[group], "{group:?} changed");
            }
        }
    }

    #[test]
    fn single_turn_training() {
        let (_, state) = run(&config(3, 1));
        for row in &state.curve {
            assert_eq!(row.reward, 1.0);
            assert_eq!(row.coherence, 0.0);
        }
    }

    #[test]
    fn constant_reward_is_a_no_op() {
        let mut model = frozen_model(2);
        let before = model.selector.clone();
        let cfg = config(4, 3);
        let mut state = TrainerState::new(&model, &cfg);
        let judge = FnJudge(|_: &[(usize, Vec<TokenId>)]| 0.3);
        train(&mut model, &Echo, &judge, &[scenario(3)], &cfg, &mut state, |_, _| Ok(())).unwrap();
        assert_eq!(model.selector, before);
        assert_eq!(state.adam.steps(), 0);
    }

    #[test]
    fn unfrozen_model_rejected() {
        let model = frozen_model(2);
        let mut unfrozen = GenerationModel::new(model.dims(), &mut rng::stream(0, Stream::Init));
        let cfg = config(1, 2);
        let mut state = TrainerState::new(&unfrozen, &cfg);
        let res = train(&mut unfrozen, &Echo, &FnJudge(novelty), &[scenario(2)], &cfg, &mut state, |_, _| Ok(()));
        assert!(matches!(res, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn invalid_settings_rejected() {
        let mut model = frozen_model(2);
        let judge = FnJudge(novelty);
        for cfg in [
            TrainConfig { batch: 0, ..config(1, 2) },
            TrainConfig {
                baseline_samples: 0,
                ..config(1, 2)
            },
            TrainConfig { turns: 0, ..config(1, 2) },
        ] {
            let mut state = TrainerState::new(&model, &cfg);
            assert!(train(&mut model, &Echo, &judge, &[scenario(2)], &cfg, &mut state, |_, _| Ok(())).is_err());
        }
        let cfg = config(1, 2);
        let mut state = TrainerState::new(&model, &cfg);
        assert!(matches!(
            train(&mut model, &Echo, &judge, &[], &cfg, &mut state, |_, _| Ok(())),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn preference_for_the_first_entry_is_learned() {
        let mut model = frozen_model(2);
        let cfg = config(40, 4);
        let firsts = [vocab().id("skiing"), vocab().id("paris")];
        let judge = FnJudge(move |turns: &[(usize, Vec<TokenId>)]| {
            turns.iter().filter(|(_, u)| firsts.contains(&u[0])).count() as f64 / turns.len() as f64
        });
        let mut state = TrainerState::new(&model, &cfg);
        train(&mut model, &Echo, &judge, &[scenario(3)], &cfg, &mut state, |_, _| Ok(())).unwrap();
        let mean = |rows: &[CurveRow]| rows.iter().map(|r| r.reward).sum::<f64>() / rows.len() as f64;
        let (first, last) = (mean(&state.curve[..10]), mean(&state.curve[30..]));
        assert!(last > first + 0.1, "{first} -> {last}");
    }

    #[test]
    fn curve_csv_format() {
        let rows = [CurveRow {
            iteration: 1,
            reward: 1.5,
            informativeness: 0.5,
            coherence: 1.0,
        }];
        assert_eq!(curve_csv(&rows), "iteration,reward,informativeness,coherence\n1,1.5,0.5,1\n");
    }
}
