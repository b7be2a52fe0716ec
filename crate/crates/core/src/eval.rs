//! Zero-shot task adaptation and the evaluation protocol.
//!
//! Task policies are derived purely inside the trained model (value
//! iteration with the task's true reward tables over the full augmented
//! space). Returns and regret are then measured exactly in the true
//! environments, aggregated as means, worst-case, and CVaR. The bound
//! fuzzer exercises the simulation-lemma and two-term regret inequalities
//! on random instances.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use crate::env::{EnvironmentFamily, ThetaId};
use crate::error::{Error, Result};
use crate::mdp::{
    policy_value, proposition1_gap, simulation_lemma_gap, value_iteration, TabularMdp,
};
use crate::model::{restrict_policy, EnsembleWorldModel};
use crate::scalar::Scalar;
use crate::{Mdp, Policy, Reward, Value};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Environments drawn (with replacement) from the DR distribution.
    pub n_eval: usize,
    pub cvar_alpha: f64,
    /// Evaluate each grid setting exactly once instead of sampling.
    pub exhaustive: bool,
    pub seed: u64,
    /// Value-iteration tolerance for derived task policies.
    pub vi_tol: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_eval: 100,
            cvar_alpha: 0.1,
            exhaustive: false,
            seed: 0,
            vi_tol: 1e-8,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_eval == 0 {
            return Err(Error::InvalidConfig("n_eval must be positive".into()));
        }
        if !(self.cvar_alpha > 0.0 && self.cvar_alpha <= 1.0) {
            return Err(Error::InvalidConfig("cvar_alpha must lie in (0, 1]".into()));
        }
        if !(self.vi_tol > 0.0) {
            return Err(Error::InvalidConfig("vi_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Mean of the `ceil(alpha * n)` smallest values.
pub fn cvar<S: Scalar>(values: &[S], alpha: S) -> Result<S> {
    if values.is_empty() {
        return Err(Error::EmptyInput("cvar of empty list".into()));
    }
    let a = alpha.to_f64().unwrap_or(f64::NAN);
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "cvar alpha must lie in (0, 1], got {a}"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|x, y| x.partial_cmp(y).expect("comparable values"));
    let n = sorted.len();
    // Guard against 0.1 * 100 rounding up to 11.
    let k = (((a * n as f64) - 1e-9).ceil() as usize).clamp(1, n);
    let sum = sorted[..k].iter().fold(S::zero(), |acc, &v| acc + v);
    Ok(sum / S::from_f64_lossy(k as f64))
}

/// Mean of the worst (largest) `alpha`-fraction; the loss-side counterpart
/// of `cvar` for quantities like regret.
pub fn cvar_worst<S: Scalar>(values: &[S], alpha: S) -> Result<S> {
    let negated: Vec<S> = values.iter().map(|&v| -v).collect();
    Ok(-cvar(&negated, alpha)?)
}

/// Value iteration inside the mean learned model with the task's true
/// rewards: one generalist policy over the entire augmented space.
pub fn derive_task_policy(
    model: &EnsembleWorldModel,
    family: &EnvironmentFamily,
    task: &str,
    vi_tol: f64,
) -> Result<Policy> {
    let space = family.space();
    let num_actions = family.num_actions();
    let mut actions = vec![0usize; space.total_states()];
    for theta in family.all_ids() {
        let reward = family.task_reward(task, theta)?;
        let slice = space.slice(theta);
        let init = vec![1.0 / slice.len() as f64; slice.len()];
        let slice_mdp = model.mean_slice_mdp(theta, family.discount(), &init)?;
        let sol = value_iteration(&slice_mdp, reward, vi_tol)?;
        for (local_s, &a) in sol.policy.greedy_actions().iter().enumerate() {
            actions[slice.start + local_s] = a;
        }
    }
    Ok(Policy::deterministic(num_actions, &actions))
}

/// Exact return and regret of one task policy in one true environment.
fn score_on(
    family: &EnvironmentFamily,
    theta: ThetaId,
    task: &str,
    policy: &Policy,
) -> Result<(Value, Value)> {
    let (true_mdp, slice) = family.augmented_mdp(theta)?;
    let reward = family.task_reward(task, theta)?;
    let restricted = restrict_policy(policy, slice, family.num_actions())?;
    let ret = policy_value(&restricted, true_mdp, reward)?;
    let opt = value_iteration(true_mdp, reward, 1e-12)?;
    let v_star = policy_value(&opt.policy, true_mdp, reward)?;
    Ok((ret, v_star - ret))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskReport {
    pub task: String,
    /// One entry per evaluation draw: environment, exact return, exact regret.
    pub draws: Vec<(ThetaId, Value, Value)>,
    pub mean_return: Value,
    pub cvar_return: Value,
    pub mean_regret: Value,
    pub max_regret: Value,
    /// Mean of the worst (largest) alpha-fraction of regrets.
    pub cvar_regret: Value,
    /// One entry per out-of-distribution setting.
    pub ood: Vec<(ThetaId, Value, Value)>,
    pub ood_mean_return: Value,
    pub ood_mean_regret: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub checkpoint: String,
    pub tasks: Vec<TaskReport>,
    /// Exact model error per grid setting under the frozen exploration policy.
    pub wm_errors: Vec<(ThetaId, Value)>,
    pub max_wm_error: Value,
}

/// Full evaluation of one checkpoint: derive each task policy once, score it
/// exactly on the drawn and OOD environments, and measure the model error
/// objective per environment.
pub fn evaluate_checkpoint(
    model: &EnsembleWorldModel,
    expl_policy: &Policy,
    family: &EnvironmentFamily,
    config: &EvalConfig,
    checkpoint: &str,
) -> Result<EvalReport> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let draws: Vec<ThetaId> = if config.exhaustive {
        family.grid_ids().collect()
    } else {
        (0..config.n_eval).map(|_| family.dr_sample(&mut rng)).collect()
    };

    let mut tasks = Vec::new();
    for task in family.task_names() {
        let policy = derive_task_policy(model, family, task, config.vi_tol)?;
        let mut cache: BTreeMap<ThetaId, (Value, Value)> = BTreeMap::new();
        let mut score = |theta: ThetaId| -> Result<(Value, Value)> {
            if let Some(&hit) = cache.get(&theta) {
                return Ok(hit);
            }
            let computed = score_on(family, theta, task, &policy)?;
            cache.insert(theta, computed);
            Ok(computed)
        };
        let mut rows = Vec::with_capacity(draws.len());
        for &theta in &draws {
            let (ret, reg) = score(theta)?;
            rows.push((theta, ret, reg));
        }
        let returns: Vec<Value> = rows.iter().map(|r| r.1).collect();
        let regrets: Vec<Value> = rows.iter().map(|r| r.2).collect();
        let mut ood_rows = Vec::new();
        for theta in family.ood_ids() {
            let (ret, reg) = score(theta)?;
            ood_rows.push((theta, ret, reg));
        }
        let n = returns.len() as Value;
        let ood_n = ood_rows.len().max(1) as Value;
        tasks.push(TaskReport {
            task: task.to_string(),
            mean_return: returns.iter().sum::<Value>() / n,
            cvar_return: cvar(&returns, config.cvar_alpha)?,
            mean_regret: regrets.iter().sum::<Value>() / n,
            max_regret: regrets.iter().cloned().fold(Value::NEG_INFINITY, Value::max),
            cvar_regret: cvar_worst(&regrets, config.cvar_alpha)?,
            draws: rows,
            ood_mean_return: ood_rows.iter().map(|r| r.1).sum::<Value>() / ood_n,
            ood_mean_regret: ood_rows.iter().map(|r| r.2).sum::<Value>() / ood_n,
            ood: ood_rows,
        });
    }

    let mut wm_errors = Vec::new();
    let mut max_wm_error: Value = 0.0;
    for theta in family.grid_ids() {
        let err = model.world_model_error(family, theta, expl_policy)?;
        max_wm_error = max_wm_error.max(err);
        wm_errors.push((theta, err));
    }

    Ok(EvalReport {
        checkpoint: checkpoint.to_string(),
        tasks,
        wm_errors,
        max_wm_error,
    })
}

impl EvalReport {
    /// Long-format per-environment rows:
    /// `checkpoint,task,theta,metric,value`.
    pub fn write_report_csv(&self, family: &EnvironmentFamily, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["checkpoint", "task", "theta", "metric", "value"])?;
        for t in &self.tasks {
            for &(theta, ret, reg) in &t.draws {
                let label = family.label(theta);
                w.write_record([&self.checkpoint, &t.task, &label, "return", &format!("{ret}")])?;
                w.write_record([&self.checkpoint, &t.task, &label, "regret", &format!("{reg}")])?;
            }
            for &(theta, ret, reg) in &t.ood {
                let label = family.label(theta);
                w.write_record([
                    &self.checkpoint,
                    &t.task,
                    &label,
                    "ood_return",
                    &format!("{ret}"),
                ])?;
                w.write_record([
                    &self.checkpoint,
                    &t.task,
                    &label,
                    "ood_regret",
                    &format!("{reg}"),
                ])?;
            }
        }
        for &(theta, err) in &self.wm_errors {
            w.write_record([
                &self.checkpoint,
                "-",
                &family.label(theta),
                "wm_error",
                &format!("{err}"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Aggregate rows: `checkpoint,task,metric,value`.
    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["checkpoint", "task", "metric", "value"])?;
        for t in &self.tasks {
            let rows: [(&str, Value); 7] = [
                ("mean_return", t.mean_return),
                ("cvar_return", t.cvar_return),
                ("mean_regret", t.mean_regret),
                ("cvar_regret", t.cvar_regret),
                ("max_regret", t.max_regret),
                ("ood_mean_return", t.ood_mean_return),
                ("ood_mean_regret", t.ood_mean_regret),
            ];
            for (metric, value) in rows {
                w.write_record([&self.checkpoint, &t.task, metric, &format!("{value}")])?;
            }
        }
        w.write_record([
            &self.checkpoint,
            "-",
            "max_wm_error",
            &format!("{}", self.max_wm_error),
        ])?;
        w.flush()?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Bound fuzzing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct FuzzLimits {
    pub max_states: usize,
    pub max_actions: usize,
    pub discount: f64,
}

impl Default for FuzzLimits {
    fn default() -> Self {
        Self {
            max_states: 6,
            max_actions: 3,
            discount: 0.9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FuzzSummary {
    pub instances: usize,
    pub sim_violations: usize,
    pub prop_violations: usize,
    /// Smallest observed `rhs - lhs` per inequality.
    pub min_sim_slack: f64,
    pub min_prop_slack: f64,
    pub median_prop_slack: f64,
}

impl FuzzSummary {
    pub fn passed(&self) -> bool {
        self.sim_violations == 0 && self.prop_violations == 0
    }
}

pub fn random_distribution<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    // Dirichlet(1) via normalized exponentials.
    let mut row: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    let sum: f64 = row.iter().sum();
    for p in row.iter_mut() {
        *p /= sum;
    }
    // Renormalize exactly so validation at 1e-12 never trips.
    let sum: f64 = row.iter().sum();
    row[n - 1] += 1.0 - sum;
    row
}

pub fn random_mdp<R: Rng>(rng: &mut R, n: usize, m: usize, gamma: f64) -> Mdp {
    let mut t = Vec::with_capacity(n * m * n);
    for _ in 0..n * m {
        if rng.gen_bool(0.3) {
            let mut row = vec![0.0; n];
            row[rng.gen_range(0..n)] = 1.0;
            t.extend(row);
        } else {
            t.extend(random_distribution(rng, n));
        }
    }
    let init = random_distribution(rng, n);
    Mdp::new(n, m, t, init, gamma).expect("random rows are valid")
}

/// Mixes each row of `truth` with an independent random row; `lambda = 0`
/// leaves the dynamics unchanged, `lambda = 1` replaces them entirely.
pub fn perturb_mdp<R: Rng>(truth: &Mdp, lambda: f64, rng: &mut R) -> Mdp {
    let n = truth.num_states();
    let m = truth.num_actions();
    let mut t = Vec::with_capacity(n * m * n);
    for s in 0..n {
        for a in 0..m {
            let noise = random_distribution(rng, n);
            let mut row: Vec<f64> = truth
                .row(s, a)
                .iter()
                .zip(&noise)
                .map(|(&p, &q)| (1.0 - lambda) * p + lambda * q)
                .collect();
            let sum: f64 = row.iter().sum();
            row[n - 1] += 1.0 - sum;
            t.extend(row);
        }
    }
    Mdp::new(
        n,
        m,
        t,
        truth.initial_state_dist().to_vec(),
        truth.discount(),
    )
    .expect("mixed rows are valid")
}

fn random_reward<R: Rng>(rng: &mut R, n: usize, m: usize) -> Reward {
    Reward::new(n, m, (0..n * m).map(|_| rng.gen::<f64>()).collect()).expect("in range")
}

fn random_policy<R: Rng>(rng: &mut R, n: usize, m: usize) -> Policy {
    if rng.gen_bool(0.5) {
        let actions: Vec<usize> = (0..n).map(|_| rng.gen_range(0..m)).collect();
        Policy::deterministic(m, &actions)
    } else {
        let mut rows = Vec::with_capacity(n * m);
        for _ in 0..n {
            rows.extend(random_distribution(rng, m));
        }
        Policy::new(n, m, rows).expect("random rows are valid")
    }
}

/// Generates random (true MDP, perturbed model, reward, policy) tuples and
/// checks both bound inequalities exactly on each.
pub fn bound_fuzz(n_instances: usize, limits: FuzzLimits, seed: u64) -> Result<FuzzSummary> {
    if n_instances == 0 {
        return Err(Error::InvalidConfig("need at least one instance".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = FuzzSummary {
        instances: n_instances,
        sim_violations: 0,
        prop_violations: 0,
        min_sim_slack: f64::INFINITY,
        min_prop_slack: f64::INFINITY,
        median_prop_slack: 0.0,
    };
    let mut prop_slacks = Vec::with_capacity(n_instances);
    for _ in 0..n_instances {
        let n = rng.gen_range(2..=limits.max_states);
        let m = rng.gen_range(1..=limits.max_actions);
        let truth = random_mdp(&mut rng, n, m, limits.discount);
        let model = if rng.gen_bool(0.1) {
            truth.clone()
        } else {
            let lambda = rng.gen::<f64>();
            perturb_mdp(&truth, lambda, &mut rng)
        };
        let reward = random_reward(&mut rng, n, m);
        let policy = random_policy(&mut rng, n, m);

        let (lhs, rhs) = simulation_lemma_gap(&policy, &truth, &model, &reward)?;
        let slack = rhs - lhs;
        summary.min_sim_slack = summary.min_sim_slack.min(slack);
        if slack < -1e-9 {
            summary.sim_violations += 1;
        }

        let (regret_lhs, bound_rhs) = proposition1_gap(&model, &truth, &reward)?;
        let slack = bound_rhs - regret_lhs;
        summary.min_prop_slack = summary.min_prop_slack.min(slack);
        prop_slacks.push(slack);
        if slack < -1e-9 || regret_lhs < -1e-9 {
            summary.prop_violations += 1;
        }
    }
    prop_slacks.sort_by(|a, b| a.partial_cmp(b).expect("finite slacks"));
    summary.median_prop_slack = prop_slacks[prop_slacks.len() / 2];
    Ok(summary)
}

/// Regret of the model-optimal policy against the two-term bound, for one
/// environment of a family. Exposed so training checkpoints can be audited
/// directly.
pub fn checkpoint_bound_gap(
    model: &EnsembleWorldModel,
    family: &EnvironmentFamily,
    theta: ThetaId,
    reward: &Reward,
) -> Result<(Value, Value)> {
    let (true_mdp, _) = family.augmented_mdp(theta)?;
    let model_mdp: TabularMdp<Value> = model.mean_slice_mdp(
        theta,
        true_mdp.discount(),
        true_mdp.initial_state_dist(),
    )?;
    proposition1_gap(&model_mdp, true_mdp, reward)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{build_family, EnvParams, FamilyConfig};
    use crate::mdp;
    use crate::model::ModelConfig;

    #[test]
    fn cvar_examples() {
        let values: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert!((cvar(&values, 0.1).unwrap() - 5.5).abs() < 1e-12);
        assert!((cvar(&values, 1.0).unwrap() - 50.5).abs() < 1e-12);
        let constant = vec![3.25; 7];
        assert_eq!(cvar(&constant, 0.1).unwrap(), 3.25);
        assert!(cvar::<f64>(&[], 0.1).is_err());
        assert!(cvar(&values, 0.0).is_err());
        assert!((cvar_worst(&values, 0.1).unwrap() - 95.5).abs() < 1e-12);
    }

    #[test]
    fn cvar_monotone_in_alpha() {
        let values = vec![0.3, 1.9, 0.2, 5.0, 2.2, 0.9, 4.1];
        let mut prev = f64::NEG_INFINITY;
        for alpha in [0.1, 0.2, 0.35, 0.5, 0.75, 1.0] {
            let c = cvar(&values, alpha).unwrap();
            assert!(c >= prev - 1e-12);
            prev = c;
        }
    }

    #[test]
    fn perfect_model_gives_near_zero_regret() {
        let fam = build_family(&FamilyConfig::default()).unwrap();
        let theta = fam.lookup(&EnvParams { size: 3, slip: 0.0 }).unwrap();
        let (true_mdp, slice) = fam.augmented_mdp(theta).unwrap();
        let mut model =
            EnsembleWorldModel::new(fam.space().clone(), 4, ModelConfig::default(), 0).unwrap();
        for s in 0..true_mdp.num_states() {
            for a in 0..4 {
                let dest = true_mdp.row(s, a).iter().position(|&p| p == 1.0).unwrap();
                for member in 0..model.ensemble_size() {
                    model
                        .add_counts(member, slice.start + s, a, slice.start + dest, 1_000_000)
                        .unwrap();
                }
            }
        }
        let vi_tol = 1e-8;
        let gamma = fam.discount();
        for task in fam.task_names() {
            let policy = derive_task_policy(&model, &fam, task, vi_tol).unwrap();
            let (_, regret) = score_on(&fam, theta, task, &policy).unwrap();
            assert!(
                regret <= 2.0 * vi_tol / (1.0 - gamma) + 1e-9,
                "task {task}: regret {regret}"
            );
        }
    }

    #[test]
    fn constant_reward_means_zero_regret_for_any_policy() {
        let fam = build_family(&FamilyConfig::default()).unwrap();
        let theta = fam.lookup(&EnvParams { size: 4, slip: 0.1 }).unwrap();
        let (true_mdp, _) = fam.augmented_mdp(theta).unwrap();
        let n = true_mdp.num_states();
        let constant = Reward::new(n, 4, vec![0.6; n * 4]).unwrap();
        let arbitrary = Policy::deterministic(4, &vec![2; n]);
        let r = crate::mdp::regret(&arbitrary, true_mdp, &constant).unwrap();
        assert!(r.abs() < 1e-9, "regret {r}");
    }

    #[test]
    fn mid_training_regret_within_two_term_bound() {
        // Partially trained model: the derived policy's regret per
        // environment must respect the exact two-term bound.
        let fam = build_family(&FamilyConfig::default()).unwrap();
        let mut model =
            EnsembleWorldModel::new(fam.space().clone(), 4, ModelConfig::default(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let policy = Policy::uniform(fam.space().total_states(), 4);
        for theta in fam.grid_ids() {
            for _ in 0..3 {
                let t = crate::trainer::collect_episode(&fam, theta, &policy, 25, &mut rng)
                    .unwrap();
                model.observe(&t.steps).unwrap();
            }
        }
        for task in fam.task_names() {
            let derived = derive_task_policy(&model, &fam, task, 1e-10).unwrap();
            for theta in fam.grid_ids() {
                let reward = fam.task_reward(task, theta).unwrap().clone();
                let (regret_lhs, bound_rhs) =
                    checkpoint_bound_gap(&model, &fam, theta, &reward).unwrap();
                assert!(regret_lhs <= bound_rhs + 1e-9);

                // Two-term bound rebuilt for the derived policy itself.
                let (true_mdp, slice) = fam.augmented_mdp(theta).unwrap();
                let model_mdp = model
                    .mean_slice_mdp(theta, true_mdp.discount(), true_mdp.initial_state_dist())
                    .unwrap();
                let local = restrict_policy(&derived, slice, 4).unwrap();
                let true_opt = mdp::value_iteration(true_mdp, &reward, 1e-12).unwrap().policy;
                let expected_tv = |policy: &Policy| -> f64 {
                    let occ = mdp::occupancy(policy, &model_mdp).unwrap();
                    let mut acc = 0.0;
                    for s in 0..model_mdp.num_states() {
                        for a in 0..4 {
                            acc += occ.weight(s, a)
                                * mdp::tv_distance(model_mdp.row(s, a), true_mdp.row(s, a))
                                    .unwrap();
                        }
                    }
                    acc
                };
                let gamma = true_mdp.discount();
                let bound = 2.0 * gamma / ((1.0 - gamma) * (1.0 - gamma))
                    * (expected_tv(&true_opt) + expected_tv(&local));
                let (_, actual) = score_on(&fam, theta, task, &derived).unwrap();
                assert!(
                    actual <= bound + 1e-9,
                    "theta {theta:?}: regret {actual} > bound {bound}"
                );
            }
        }
    }

    #[test]
    fn report_matches_recomputation() {
        let fam = build_family(&FamilyConfig::default()).unwrap();
        let mut model =
            EnsembleWorldModel::new(fam.space().clone(), 4, ModelConfig::default(), 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let uniform = Policy::uniform(fam.space().total_states(), 4);
        for theta in fam.grid_ids() {
            let t = crate::trainer::collect_episode(&fam, theta, &uniform, 40, &mut rng).unwrap();
            model.observe(&t.steps).unwrap();
        }
        let config = EvalConfig {
            n_eval: 20,
            ..EvalConfig::default()
        };
        let report = evaluate_checkpoint(&model, &uniform, &fam, &config, "test").unwrap();
        assert_eq!(
            evaluate_checkpoint(&model, &uniform, &fam, &config, "test").unwrap(),
            report
        );
        for t in &report.tasks {
            let policy = derive_task_policy(&model, &fam, &t.task, config.vi_tol).unwrap();
            for &(theta, ret, reg) in t.draws.iter().take(4).chain(t.ood.iter().take(2)) {
                let (r2, g2) = score_on(&fam, theta, &t.task, &policy).unwrap();
                assert!((ret - r2).abs() < 1e-12);
                assert!((reg - g2).abs() < 1e-12);
            }
            assert!(t.cvar_return <= t.mean_return + 1e-12);
            assert!(t.draws.iter().all(|&(_, _, reg)| reg >= -1e-6));
            assert!(t.max_regret >= t.cvar_regret - 1e-12);
        }
        for &(_, err) in &report.wm_errors {
            assert!((0.0..=1.0).contains(&err));
            assert!(report.max_wm_error >= err);
        }
    }

    #[test]
    fn exhaustive_mode_is_sampling_free() {
        let fam = build_family(&FamilyConfig::default()).unwrap();
        let model =
            EnsembleWorldModel::new(fam.space().clone(), 4, ModelConfig::default(), 5).unwrap();
        let uniform = Policy::uniform(fam.space().total_states(), 4);
        let a = evaluate_checkpoint(
            &model,
            &uniform,
            &fam,
            &EvalConfig {
                exhaustive: true,
                seed: 1,
                ..EvalConfig::default()
            },
            "x",
        )
        .unwrap();
        let b = evaluate_checkpoint(
            &model,
            &uniform,
            &fam,
            &EvalConfig {
                exhaustive: true,
                seed: 2,
                ..EvalConfig::default()
            },
            "x",
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.tasks[0].draws.len(), fam.grid_ids().count());
    }

    #[test]
    fn small_bound_fuzz_is_clean() {
        let summary = bound_fuzz(100, FuzzLimits::default(), 7).unwrap();
        assert!(summary.passed(), "{summary:?}");
        assert!(summary.min_sim_slack >= -1e-9);
        assert!(summary.min_prop_slack >= -1e-9);
        // The bound must not be vacuously tight everywhere.
        assert!(summary.median_prop_slack > 0.0);
    }

    #[test]
    fn identical_model_fuzz_has_zero_sides() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let truth = random_mdp(&mut rng, 4, 2, 0.9);
            let reward = random_reward(&mut rng, 4, 2);
            let policy = random_policy(&mut rng, 4, 2);
            let (lhs, rhs) = simulation_lemma_gap(&policy, &truth, &truth, &reward).unwrap();
            assert!(lhs.abs() < 1e-9 && rhs.abs() < 1e-9);
            let (l, b) = proposition1_gap(&truth, &truth, &reward).unwrap();
            assert!(l.abs() < 1e-6 && b.abs() < 1e-9);
        }
    }
}
