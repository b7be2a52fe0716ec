//! The training loop: environment sampling, real rollouts, model updates,
//! imagined error estimation, buffer/rate bookkeeping and checkpointing.
//!
//! One run is a single-threaded state machine, bit-reproducible from its
//! seed. Parallelism happens across runs, never inside one.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::curriculum::{sample_env, ErrorBuffer, SamplerConfig};
use crate::env::{EnvironmentFamily, ThetaId};
use crate::error::{Error, Result};
use crate::explore::{
    epsilon_mix, make_random_policy, refresh_exploration_policy, ExplorationConfig,
};
use crate::model::{EnsembleWorldModel, ModelConfig};
use crate::snapshot;
use crate::Policy;

/// One real rollout: the environment it came from and its transitions in
/// global indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub theta: ThetaId,
    pub steps: Vec<(usize, usize, usize)>,
}

impl Trajectory {
    /// States touched by the rollout, in visit order (sources plus the final
    /// destination).
    pub fn visited_states(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        if let Some(&(s, _, _)) = self.steps.first() {
            out.push(s);
        }
        out.extend(self.steps.iter().map(|&(_, _, sp)| sp));
        out
    }
}

/// Append-only store of collected trajectories, sampled uniformly.
#[derive(Debug, Default, Clone)]
pub struct DataBuffer {
    trajectories: Vec<Trajectory>,
}

impl DataBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, trajectory: Trajectory) {
        self.trajectories.push(trajectory);
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Option<&Trajectory> {
        if self.trajectories.is_empty() {
            None
        } else {
            Some(&self.trajectories[rng.gen_range(0..self.trajectories.len())])
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub total_episodes: usize,
    /// Real steps per collected episode.
    pub episode_length: usize,
    /// Imagined rollouts per collected episode.
    pub imagine_rollouts: usize,
    pub imagination_horizon: usize,
    /// Episodes between model snapshots.
    pub checkpoint_interval: usize,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            total_episodes: 2000,
            episode_length: 50,
            imagine_rollouts: 8,
            imagination_horizon: 15,
            checkpoint_interval: 500,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("total_episodes", self.total_episodes),
            ("episode_length", self.episode_length),
            ("imagine_rollouts", self.imagine_rollouts),
            ("imagination_horizon", self.imagination_horizon),
            ("checkpoint_interval", self.checkpoint_interval),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Samples an index from a weight row via one uniform draw.
pub fn sample_categorical<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
            acc += w;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Rolls `policy` for `length` steps in the true environment for `theta`,
/// starting from its initial distribution. Fully determined by the RNG state.
pub fn collect_episode<R: Rng>(
    family: &EnvironmentFamily,
    theta: ThetaId,
    policy: &Policy,
    length: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    let (mdp, slice) = family.augmented_mdp(theta)?;
    if policy.num_states() != family.space().total_states()
        || policy.num_actions() != mdp.num_actions()
    {
        return Err(Error::ShapeMismatch(
            "rollout policy must cover the global space".into(),
        ));
    }
    let mut local = sample_categorical(mdp.initial_state_dist(), rng);
    let mut steps = Vec::with_capacity(length);
    for _ in 0..length {
        let global = slice.start + local;
        let a = sample_categorical(policy.row(global), rng);
        let next = sample_categorical(mdp.row(local, a), rng);
        steps.push((global, a, slice.start + next));
        local = next;
    }
    Ok(Trajectory { theta, steps })
}

/// One imagined rollout: `horizon` steps of `policy` inside the mean model,
/// confined to the starting state's slice. Returns the average row-total
/// ensemble disagreement over the visited pairs (the row total keeps the
/// estimate comparable across environments of different state counts).
pub fn imagined_rollout<R: Rng>(
    model: &EnsembleWorldModel,
    start_global: usize,
    policy: &Policy,
    horizon: usize,
    rng: &mut R,
) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::InvalidConfig("imagination horizon must be >= 1".into()));
    }
    let mut s = start_global;
    let mut acc = 0.0;
    for _ in 0..horizon {
        let a = sample_categorical(policy.row(s), rng);
        acc += model.disagreement_total(s, a)?;
        s = model.sample_mean_next(s, a, rng)?;
    }
    Ok(acc / horizon as f64)
}

/// Inputs that stay fixed across one imagination phase.
pub struct ImagineContext<'a> {
    pub model: &'a EnsembleWorldModel,
    pub family: &'a EnvironmentFamily,
    pub exploration: &'a ExplorationConfig,
    /// Number of imagined rollouts (K).
    pub rollouts: usize,
    pub horizon: usize,
}

/// The imagination phase: K times, sample a stored trajectory uniformly,
/// start from one of its visited states, roll the exploration policy inside
/// the mean model, and fold the averaged disagreement into the error buffer
/// for that trajectory's environment. Refreshes the exploration policy when
/// the caller's schedule says so.
pub fn imagine<R: Rng>(
    ctx: &ImagineContext<'_>,
    data: &DataBuffer,
    errors: &mut ErrorBuffer,
    policy: &Policy,
    refresh_due: bool,
    rng: &mut R,
) -> Result<Policy> {
    if data.is_empty() {
        return Err(Error::EmptyInput("imagine requires collected data".into()));
    }
    for _ in 0..ctx.rollouts {
        let trajectory = data.sample(rng).expect("nonempty buffer");
        let starts = trajectory.visited_states();
        let start = starts[rng.gen_range(0..starts.len())];
        let delta = imagined_rollout(ctx.model, start, policy, ctx.horizon, rng)?;
        errors.record_error(trajectory.theta, delta)?;
    }
    if refresh_due {
        refresh_exploration_policy(ctx.model, ctx.exploration, ctx.family.discount())
    } else {
        Ok(policy.clone())
    }
}

/// Artifacts produced by one training run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub steps_csv: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub episodes: usize,
    pub env_steps: u64,
}

/// Runs the full loop: sample environment, collect, train the model,
/// imagine, checkpoint rates on the real-step clock, snapshot periodically.
/// Writes `steps.csv` and `checkpoints/` under `out_dir`.
pub fn run(
    family: &EnvironmentFamily,
    sampler: &SamplerConfig,
    trainer: &TrainerConfig,
    exploration: &ExplorationConfig,
    model_config: &ModelConfig,
    out_dir: &Path,
) -> Result<RunSummary> {
    sampler.validate()?;
    trainer.validate()?;
    exploration.validate()?;
    model_config.validate()?;

    std::fs::create_dir_all(out_dir)?;
    let ckpt_dir = out_dir.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir)?;
    let steps_path = out_dir.join("steps.csv");
    let mut steps_file = std::io::BufWriter::new(std::fs::File::create(&steps_path)?);

    let grid: Vec<ThetaId> = family.grid_ids().collect();
    let mut header = String::from("episode,env_step,theta,delta_theta");
    for &t in &grid {
        header.push_str(&format!(",ema_{}", family.label(t)));
    }
    writeln!(steps_file, "{header}")?;

    let mut rng = ChaCha8Rng::seed_from_u64(trainer.seed);
    let model_seed = rng.gen::<u64>();
    let mut model = EnsembleWorldModel::new(
        family.space().clone(),
        family.num_actions(),
        model_config.clone(),
        model_seed,
    )?;
    let mut errors = ErrorBuffer::new(sampler.ema_alpha, sampler.delta_alpha);
    let mut data = DataBuffer::new();
    let mut policy = make_random_policy(family.space(), family.num_actions());

    let mut env_steps: u64 = 0;
    let mut next_rate_checkpoint = sampler.rate_interval;
    let mut checkpoints = Vec::new();

    for episode in 1..=trainer.total_episodes {
        let theta = sample_env(sampler, &errors, family, &mut rng)?;
        let behavior = epsilon_mix(&policy, exploration.epsilon);
        let trajectory =
            collect_episode(family, theta, &behavior, trainer.episode_length, &mut rng)?;
        model.observe(&trajectory.steps)?;
        env_steps += trajectory.steps.len() as u64;

        // Dedicated error estimate for the environment just visited. This
        // keeps the buffer support equal to the set of environments sampled
        // so far and gives the step log a per-episode estimate.
        let starts = trajectory.visited_states();
        let start = starts[rng.gen_range(0..starts.len())];
        let delta =
            imagined_rollout(&model, start, &policy, trainer.imagination_horizon, &mut rng)?;
        errors.record_error(theta, delta)?;

        data.push(trajectory);
        let ctx = ImagineContext {
            model: &model,
            family,
            exploration,
            rollouts: trainer.imagine_rollouts,
            horizon: trainer.imagination_horizon,
        };
        let refresh_due = episode % exploration.refresh_interval == 0;
        policy = imagine(&ctx, &data, &mut errors, &policy, refresh_due, &mut rng)?;

        // The rate clock runs on real environment steps only.
        while env_steps >= next_rate_checkpoint {
            errors.checkpoint_rates();
            next_rate_checkpoint += sampler.rate_interval;
        }

        let mut row = format!(
            "{episode},{env_steps},{},{delta}",
            family.label(theta)
        );
        for &t in &grid {
            row.push(',');
            if let Some(v) = errors.ema().get(&t) {
                row.push_str(&format!("{v}"));
            }
        }
        writeln!(steps_file, "{row}")?;

        if episode % trainer.checkpoint_interval == 0 || episode == trainer.total_episodes {
            let path = ckpt_dir.join(format!("ckpt_ep{episode:06}.bin"));
            snapshot::save(&path, &model, &errors, &policy, episode as u64, env_steps)?;
            checkpoints.push(path);
        }
    }
    steps_file.flush()?;

    Ok(RunSummary {
        steps_csv: steps_path,
        checkpoints,
        episodes: trainer.total_episodes,
        env_steps,
    })
}
