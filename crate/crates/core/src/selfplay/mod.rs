//! Two-agent self-play and policy-gradient training of the selector.

mod policy;
mod rollout;
mod simulate;
mod train;

pub use policy::{policy_gradient, Decision, Episode, SelectionPolicy, REPLAY_TOLERANCE};
pub use rollout::{
    baseline_from_rewards, estimate_baseline, rollout, speaker_at, Judge, ModelResponder, PreparedScenario,
    ResponseRequest, Responder, RolloutConfig, Scenario, Trajectory, TurnRecord,
};
pub use simulate::{conversation_tokens, simulate, usage_matrix_csv, SimulatedTurn, SimulationRecord};
pub use train::{curve_csv, policy_gradient_step, train, CurveRow, TrainConfig, TrainerState, CURVE_HEADER};
