//! Reward-free exploration policies.
//!
//! Either uniform-random, or the disagreement maximizer: value iteration on
//! the mean learned model with the ensemble disagreement (rescaled to
//! `[0, 1]`) as intrinsic reward, solved slice by slice and stitched into one
//! generalist policy over the global space.

use serde::{Deserialize, Serialize};

use crate::env::{AugmentedStateSpace, ThetaId};
use crate::error::Result;
use crate::mdp::value_iteration;
use crate::model::EnsembleWorldModel;
use crate::{Policy, Reward, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExplorationKind {
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "disagreement-max")]
    DisagreementMax,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplorationConfig {
    pub kind: ExplorationKind,
    /// Episodes between policy re-solves.
    pub refresh_interval: usize,
    pub vi_tol: f64,
    /// Uniform mixing floor applied during real rollouts.
    pub epsilon: f64,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            kind: ExplorationKind::DisagreementMax,
            refresh_interval: 5,
            vi_tol: 1e-6,
            epsilon: 0.3,
        }
    }
}

impl ExplorationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.refresh_interval == 0 {
            return Err(crate::Error::InvalidConfig(
                "refresh_interval must be at least 1".into(),
            ));
        }
        if !(self.vi_tol > 0.0) {
            return Err(crate::Error::InvalidConfig("vi_tol must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(crate::Error::InvalidConfig(
                "epsilon must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Uniform policy over every global state.
pub fn make_random_policy(space: &AugmentedStateSpace, num_actions: usize) -> Policy {
    Policy::uniform(space.total_states(), num_actions)
}

/// Re-solves the exploration policy against the current model.
///
/// For the disagreement maximizer the intrinsic reward is the per-pair
/// disagreement divided by its current global maximum; a fully agreeing
/// ensemble yields the uniform policy.
pub fn refresh_exploration_policy(
    model: &EnsembleWorldModel,
    config: &ExplorationConfig,
    discount: Value,
) -> Result<Policy> {
    let space = model.space();
    let num_actions = model.num_actions();
    if config.kind == ExplorationKind::Random {
        return Ok(make_random_policy(space, num_actions));
    }
    let max_d = model.max_disagreement();
    if max_d <= 0.0 {
        return Ok(make_random_policy(space, num_actions));
    }
    let mut actions = vec![0usize; space.total_states()];
    for t in 0..space.num_slices() {
        let theta = ThetaId(t);
        let slice = space.slice(theta);
        let w = slice.len();
        let mut table = vec![0.0; w * num_actions];
        for local_s in 0..w {
            for a in 0..num_actions {
                table[local_s * num_actions + a] =
                    model.disagreement(slice.start + local_s, a)? / max_d;
            }
        }
        let reward = Reward::new(w, num_actions, table)?;
        let init = vec![1.0 / w as f64; w];
        let slice_mdp = model.mean_slice_mdp(theta, discount, &init)?;
        let sol = value_iteration(&slice_mdp, &reward, config.vi_tol)?;
        for (local_s, &a) in sol.policy.greedy_actions().iter().enumerate() {
            actions[slice.start + local_s] = a;
        }
    }
    Ok(Policy::deterministic(num_actions, &actions))
}

/// Mixes a uniform floor into every row: `(1 - eps) * pi + eps / A`.
pub fn epsilon_mix(policy: &Policy, epsilon: Value) -> Policy {
    if epsilon == 0.0 {
        return policy.clone();
    }
    let a = policy.num_actions();
    let floor = epsilon / a as Value;
    let rows: Vec<Value> = policy
        .rows()
        .iter()
        .map(|&p| (1.0 - epsilon) * p + floor)
        .collect();
    Policy::new(policy.num_states(), a, rows).expect("mixing preserves distributions")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::AugmentedStateSpace;
    use crate::mdp::{occupancy, value_iteration};
    use crate::model::ModelConfig;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn random_policy_is_uniform() {
        let space = AugmentedStateSpace::new(vec![3, 4]);
        let pi = make_random_policy(&space, 4);
        assert!(pi.rows().iter().all(|&p| (p - 0.25).abs() < 1e-15));
        let single = make_random_policy(&space, 1);
        assert!(single.rows().iter().all(|&p| p == 1.0));
    }

    #[test]
    fn rollout_action_frequencies_are_uniform() {
        // Chi-squared goodness of fit at p > 0.01 over 1e5 sampled actions.
        let space = AugmentedStateSpace::new(vec![1]);
        let pi = make_random_policy(&space, 4);
        let mut rng = <StdRng as SeedableRng>::seed_from_u64(42);
        let mut counts = [0u64; 4];
        let draws = 100_000;
        for _ in 0..draws {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (a, &p) in pi.row(0).iter().enumerate() {
                acc += p;
                if u < acc {
                    counts[a] += 1;
                    break;
                }
            }
        }
        let expected = draws as f64 / 4.0;
        let stat: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        // 0.99 quantile of chi-squared with 3 dof.
        assert!(stat < 11.345, "chi2 = {stat}");
    }

    #[test]
    fn untrained_model_gives_uniform_policy() {
        let space = AugmentedStateSpace::new(vec![5]);
        let model = EnsembleWorldModel::new(space, 2, ModelConfig::default(), 0).unwrap();
        let pi =
            refresh_exploration_policy(&model, &ExplorationConfig::default(), 0.95).unwrap();
        assert!(pi.rows().iter().all(|&p| (p - 0.5).abs() < 1e-15));
    }

    /// Model whose mean dynamics form a 5-state corridor (action 1 moves
    /// right, action 0 moves left, clipped at the ends), with ensemble
    /// disagreement concentrated at the pair `(4, 1)`.
    fn corridor_model() -> EnsembleWorldModel {
        let space = AugmentedStateSpace::new(vec![5]);
        let mut m = EnsembleWorldModel::new(
            space,
            2,
            ModelConfig {
                ensemble_size: 2,
                ..ModelConfig::default()
            },
            0,
        )
        .unwrap();
        let big = 1_000_000_000u64;
        for s in 0..5usize {
            let left = s.saturating_sub(1);
            let right = (s + 1).min(4);
            for member in 0..2 {
                m.add_counts(member, s, 0, left, big).unwrap();
                if s != 4 {
                    m.add_counts(member, s, 1, right, big).unwrap();
                }
            }
        }
        // Members disagree only at (4, 1).
        m.add_counts(0, 4, 1, 4, big).unwrap();
        m.add_counts(1, 4, 1, 3, big).unwrap();
        m
    }

    #[test]
    fn greedy_policy_chases_concentrated_disagreement() {
        let m = corridor_model();
        let config = ExplorationConfig::default();
        let pi = refresh_exploration_policy(&m, &config, 0.95).unwrap();
        let uniform = make_random_policy(m.space(), 2);
        let init = vec![1.0, 0.0, 0.0, 0.0, 0.0];
        let model_mdp = m.mean_slice_mdp(ThetaId(0), 0.95, &init).unwrap();
        let occ_greedy = occupancy(&pi, &model_mdp).unwrap();
        let occ_uniform = occupancy(&uniform, &model_mdp).unwrap();
        assert!(
            occ_greedy.weight(4, 1) > occ_uniform.weight(4, 1),
            "greedy {} vs uniform {}",
            occ_greedy.weight(4, 1),
            occ_uniform.weight(4, 1)
        );
    }

    #[test]
    fn greedy_policy_maximizes_expected_intrinsic_reward() {
        let m = corridor_model();
        let config = ExplorationConfig::default();
        let pi = refresh_exploration_policy(&m, &config, 0.95).unwrap();
        let uniform = make_random_policy(m.space(), 2);
        let max_d = m.max_disagreement();
        let init = vec![0.2; 5];
        let model_mdp = m.mean_slice_mdp(ThetaId(0), 0.95, &init).unwrap();
        let expected = |policy: &Policy| -> f64 {
            let occ = occupancy(policy, &model_mdp).unwrap();
            let mut acc = 0.0;
            for s in 0..5 {
                for a in 0..2 {
                    acc += occ.weight(s, a) * m.disagreement(s, a).unwrap() / max_d;
                }
            }
            acc
        };
        assert!(expected(&pi) >= expected(&uniform) - 1e-9);
    }

    #[test]
    fn intrinsic_reward_scaling_leaves_greedy_actions_unchanged() {
        // The internal rescale divides by the max; equivalently, scaling all
        // rewards by a positive constant must not change the argmax actions.
        let m = corridor_model();
        let init = vec![0.2; 5];
        let mdp = m.mean_slice_mdp(ThetaId(0), 0.95, &init).unwrap();
        let max_d = m.max_disagreement();
        let base: Vec<f64> = (0..5)
            .flat_map(|s| (0..2).map(move |a| (s, a)))
            .map(|(s, a)| m.disagreement(s, a).unwrap() / max_d)
            .collect();
        let scaled: Vec<f64> = base.iter().map(|r| r / 10.0).collect();
        let r1 = Reward::new(5, 2, base).unwrap();
        let r2 = Reward::new(5, 2, scaled).unwrap();
        let p1 = value_iteration(&mdp, &r1, 1e-10).unwrap().policy;
        let p2 = value_iteration(&mdp, &r2, 1e-10).unwrap().policy;
        assert_eq!(p1.greedy_actions(), p2.greedy_actions());
    }

    #[test]
    fn epsilon_mix_keeps_rows_valid() {
        let pi = Policy::deterministic(4, &[0, 1, 2, 3, 0]);
        let mixed = epsilon_mix(&pi, 0.1);
        for s in 0..5 {
            let row = mixed.row(s);
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p >= 0.1 / 4.0 - 1e-15));
        }
    }
}
