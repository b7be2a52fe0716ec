//! Count-based ensemble world model over the augmented state space.
//!
//! Each ensemble member keeps its own transition counts; a symmetric
//! pseudocount keeps untrained rows uniform over the owning slice. Member
//! diversity comes from bootstrap masking: every observed transition is
//! absorbed by each member independently with probability `bootstrap_rate`.
//! The mean model and the per-pair disagreement drive exploration and the
//! curriculum; the exact model error against a known environment is the
//! occupancy-weighted TV distance.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{AugmentedStateSpace, EnvironmentFamily, ThetaId};
use crate::error::{Error, Result};
use crate::mdp::{occupancy, tv_distance};
use crate::{Mdp, Policy, Value};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Number of ensemble members.
    pub ensemble_size: usize,
    /// Symmetric pseudocount added to every within-slice destination.
    pub prior_pseudocount: f64,
    /// Probability that a member absorbs a given transition.
    pub bootstrap_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 10,
            prior_pseudocount: 0.001,
            bootstrap_rate: 0.5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size == 0 {
            return Err(Error::InvalidConfig("ensemble_size must be positive".into()));
        }
        if !(self.prior_pseudocount > 0.0) {
            return Err(Error::InvalidConfig(
                "prior_pseudocount must be positive".into(),
            ));
        }
        if !(self.bootstrap_rate > 0.0 && self.bootstrap_rate <= 1.0) {
            return Err(Error::InvalidConfig(
                "bootstrap_rate must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Ensemble of count-based transition models over `(theta, s)` pairs.
///
/// Writes must be serialized by the caller; reads between writes are safe.
#[derive(Debug, Clone)]
pub struct EnsembleWorldModel {
    space: AugmentedStateSpace,
    num_actions: usize,
    config: ModelConfig,
    rng: ChaCha8Rng,
    /// `counts[member][theta][(local_s * A + a) * w + local_sp]`.
    counts: Vec<Vec<Vec<f64>>>,
    /// Cached mean-model rows, same per-slice layout as `counts`.
    mean: Vec<Vec<f64>>,
}

impl EnsembleWorldModel {
    pub fn new(
        space: AugmentedStateSpace,
        num_actions: usize,
        config: ModelConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if num_actions == 0 {
            return Err(Error::InvalidConfig("num_actions must be positive".into()));
        }
        let slice_tensor = |init: fn(usize) -> f64| -> Vec<Vec<f64>> {
            (0..space.num_slices())
                .map(|t| {
                    let w = space.width(ThetaId(t));
                    vec![init(w); w * num_actions * w]
                })
                .collect()
        };
        let counts = vec![slice_tensor(|_| 0.0); config.ensemble_size];
        let mut mean = slice_tensor(|_| 0.0);
        for (t, block) in mean.iter_mut().enumerate() {
            let w = space.width(ThetaId(t));
            block.fill(1.0 / w as f64);
        }
        Ok(Self {
            space,
            num_actions,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            counts,
            mean,
        })
    }

    pub fn space(&self) -> &AugmentedStateSpace {
        &self.space
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn ensemble_size(&self) -> usize {
        self.config.ensemble_size
    }

    fn locate(&self, global_s: usize, a: usize) -> Result<(ThetaId, usize)> {
        if a >= self.num_actions {
            return Err(Error::IndexOutOfRange(format!(
                "action {a} >= {}",
                self.num_actions
            )));
        }
        self.space.to_local(global_s)
    }

    /// Absorbs real transitions. Each transition is assigned independently
    /// to each member with probability `bootstrap_rate`; the mean model rows
    /// touched are recomputed. Transitions must stay inside one slice.
    pub fn observe(&mut self, transitions: &[(usize, usize, usize)]) -> Result<()> {
        let mut touched = Vec::with_capacity(transitions.len());
        for &(s, a, sp) in transitions {
            let (theta, local_s) = self.locate(s, a)?;
            let (theta_p, local_sp) = self.space.to_local(sp)?;
            if theta != theta_p {
                return Err(Error::IndexOutOfRange(format!(
                    "transition {s}->{sp} crosses slice boundaries"
                )));
            }
            let w = self.space.width(theta);
            let idx = (local_s * self.num_actions + a) * w + local_sp;
            for member in 0..self.config.ensemble_size {
                if self.rng.gen_bool(self.config.bootstrap_rate) {
                    self.counts[member][theta.0][idx] += 1.0;
                }
            }
            touched.push((theta, local_s, a));
        }
        for (theta, local_s, a) in touched {
            self.refresh_mean_row(theta, local_s, a);
        }
        Ok(())
    }

    /// Directly adds `n` counts to one member's cell, bypassing bootstrap
    /// masking. Intended for seeding a model with known data.
    pub fn add_counts(&mut self, member: usize, s: usize, a: usize, sp: usize, n: u64) -> Result<()> {
        let (theta, local_s) = self.locate(s, a)?;
        let (theta_p, local_sp) = self.space.to_local(sp)?;
        if theta != theta_p {
            return Err(Error::IndexOutOfRange(format!(
                "transition {s}->{sp} crosses slice boundaries"
            )));
        }
        if member >= self.config.ensemble_size {
            return Err(Error::IndexOutOfRange(format!("member {member}")));
        }
        let w = self.space.width(theta);
        self.counts[member][theta.0][(local_s * self.num_actions + a) * w + local_sp] += n as f64;
        self.refresh_mean_row(theta, local_s, a);
        Ok(())
    }

    fn refresh_mean_row(&mut self, theta: ThetaId, local_s: usize, a: usize) {
        let w = self.space.width(theta);
        let base = (local_s * self.num_actions + a) * w;
        let n = self.config.ensemble_size as f64;
        // An agreeing ensemble gets the member row verbatim, so that the
        // mean equals each member exactly rather than up to rounding.
        let reference = &self.counts[0][theta.0][base..base + w];
        if self
            .counts
            .iter()
            .all(|member| &member[theta.0][base..base + w] == reference)
        {
            let mut row = vec![0.0; w];
            smooth_row(
                &self.counts[0][theta.0][base..base + w],
                self.config.prior_pseudocount,
                &mut row,
            );
            self.mean[theta.0][base..base + w].copy_from_slice(&row);
            return;
        }
        let row = &mut self.mean[theta.0][base..base + w];
        row.fill(0.0);
        let mut member_row = vec![0.0; w];
        for member in 0..self.config.ensemble_size {
            let counts = &self.counts[member][theta.0][base..base + w];
            smooth_row(counts, self.config.prior_pseudocount, &mut member_row);
            for (m, &p) in row.iter_mut().zip(&member_row) {
                *m += p;
            }
        }
        for m in row.iter_mut() {
            *m /= n;
        }
    }

    /// One member's smoothed next-state distribution over its slice.
    pub fn member_row(&self, member: usize, global_s: usize, a: usize) -> Result<Vec<f64>> {
        let (theta, local_s) = self.locate(global_s, a)?;
        let w = self.space.width(theta);
        let base = (local_s * self.num_actions + a) * w;
        let mut out = vec![0.0; w];
        smooth_row(
            &self.counts[member][theta.0][base..base + w],
            self.config.prior_pseudocount,
            &mut out,
        );
        Ok(out)
    }

    pub fn member_row_total(&self, member: usize, global_s: usize, a: usize) -> Result<f64> {
        let (theta, local_s) = self.locate(global_s, a)?;
        let w = self.space.width(theta);
        let base = (local_s * self.num_actions + a) * w;
        Ok(self.counts[member][theta.0][base..base + w].iter().sum())
    }

    /// Mean-model next-state distribution over the owning slice.
    pub fn mean_row(&self, global_s: usize, a: usize) -> Result<&[f64]> {
        let (theta, local_s) = self.locate(global_s, a)?;
        let w = self.space.width(theta);
        let base = (local_s * self.num_actions + a) * w;
        Ok(&self.mean[theta.0][base..base + w])
    }

    /// Ensemble disagreement at `(s, a)`: per-destination population variance
    /// of member probabilities, averaged over the slice's destinations.
    pub fn disagreement(&self, global_s: usize, a: usize) -> Result<f64> {
        let (theta, local_s) = self.locate(global_s, a)?;
        let w = self.space.width(theta);
        let base = (local_s * self.num_actions + a) * w;
        // Identical count rows mean identical smoothed rows; report an exact
        // zero instead of accumulated rounding residue.
        let reference = &self.counts[0][theta.0][base..base + w];
        if self
            .counts
            .iter()
            .all(|member| &member[theta.0][base..base + w] == reference)
        {
            return Ok(0.0);
        }
        let mean = &self.mean[theta.0][base..base + w];
        let mut member_row = vec![0.0; w];
        let mut acc = 0.0;
        for member in 0..self.config.ensemble_size {
            smooth_row(
                &self.counts[member][theta.0][base..base + w],
                self.config.prior_pseudocount,
                &mut member_row,
            );
            for (p, m) in member_row.iter().zip(mean) {
                let d = p - m;
                acc += d * d;
            }
        }
        Ok(acc / (self.config.ensemble_size as f64 * w as f64))
    }

    /// Row-total disagreement: the per-destination variances summed over
    /// the row (the trace of the member covariance) instead of averaged.
    /// This is the quantity the curriculum's error estimates use; unlike the
    /// per-destination mean it is comparable across slices of different
    /// widths, which the max-error objective requires.
    pub fn disagreement_total(&self, global_s: usize, a: usize) -> Result<f64> {
        let (theta, _) = self.locate(global_s, a)?;
        let w = self.space.width(theta);
        Ok(self.disagreement(global_s, a)? * w as f64)
    }

    /// Maximum disagreement over every `(s, a)` pair of the space.
    pub fn max_disagreement(&self) -> f64 {
        let mut best: f64 = 0.0;
        for t in 0..self.space.num_slices() {
            for g in self.space.slice(ThetaId(t)) {
                for a in 0..self.num_actions {
                    best = best.max(self.disagreement(g, a).expect("valid indices"));
                }
            }
        }
        best
    }

    /// Slice-restricted mean model as a standalone MDP.
    pub fn mean_slice_mdp(
        &self,
        theta: ThetaId,
        discount: Value,
        initial_local: &[Value],
    ) -> Result<Mdp> {
        if theta.0 >= self.space.num_slices() {
            return Err(Error::UnknownParams(format!("theta index {}", theta.0)));
        }
        let w = self.space.width(theta);
        if initial_local.len() != w {
            return Err(Error::ShapeMismatch(format!(
                "initial distribution has {} entries, slice width is {w}",
                initial_local.len()
            )));
        }
        Mdp::new(
            w,
            self.num_actions,
            self.mean[theta.0].clone(),
            initial_local.to_vec(),
            discount,
        )
    }

    /// Full mean dynamics over the global space (block-diagonal by slice).
    /// The initial distribution is a uniform placeholder; only the dynamics
    /// are meaningful.
    pub fn mean_dynamics(&self, discount: Value) -> Mdp {
        let n = self.space.total_states();
        let mut transition = vec![0.0; n * self.num_actions * n];
        for t in 0..self.space.num_slices() {
            let theta = ThetaId(t);
            let slice = self.space.slice(theta);
            let w = slice.len();
            for local_s in 0..w {
                for a in 0..self.num_actions {
                    let base = (local_s * self.num_actions + a) * w;
                    let global_row_start =
                        ((slice.start + local_s) * self.num_actions + a) * n + slice.start;
                    transition[global_row_start..global_row_start + w]
                        .copy_from_slice(&self.mean[t][base..base + w]);
                }
            }
        }
        let initial = vec![1.0 / n as f64; n];
        Mdp::new(n, self.num_actions, transition, initial, discount)
            .expect("mean rows are valid distributions")
    }

    /// Samples a next state from the mean model row at `(s, a)`.
    pub fn sample_mean_next<R: Rng>(&self, global_s: usize, a: usize, rng: &mut R) -> Result<usize> {
        let (theta, _) = self.locate(global_s, a)?;
        let slice = self.space.slice(theta);
        let row = self.mean_row(global_s, a)?;
        let u: f64 = rng.gen::<f64>();
        let mut acc = 0.0;
        for (local_sp, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return Ok(slice.start + local_sp);
            }
        }
        Ok(slice.end - 1)
    }

    /// Exact model error for one environment: the expected TV distance
    /// between mean-model and true rows, weighted by the exploration
    /// policy's occupancy computed in the mean model.
    pub fn world_model_error(
        &self,
        family: &EnvironmentFamily,
        theta: ThetaId,
        expl_policy: &Policy,
    ) -> Result<f64> {
        let (true_mdp, slice) = family.augmented_mdp(theta)?;
        let restricted = restrict_policy(expl_policy, slice.clone(), self.num_actions)?;
        let model = self.mean_slice_mdp(
            theta,
            true_mdp.discount(),
            true_mdp.initial_state_dist(),
        )?;
        let occ = occupancy(&restricted, &model)?;
        let w = slice.len();
        let mut err = 0.0;
        for local_s in 0..w {
            for a in 0..self.num_actions {
                let weight = occ.weight(local_s, a);
                if weight == 0.0 {
                    continue;
                }
                err += weight * tv_distance(model.row(local_s, a), true_mdp.row(local_s, a))?;
            }
        }
        Ok(err)
    }

    /// Iterates all nonzero counts as `(member, global_s, a, global_sp, n)`.
    pub fn nonzero_counts(&self) -> Vec<(u32, u32, u32, u32, u64)> {
        let mut out = Vec::new();
        for (member, per_theta) in self.counts.iter().enumerate() {
            for (t, block) in per_theta.iter().enumerate() {
                let theta = ThetaId(t);
                let w = self.space.width(theta);
                let offset = self.space.slice(theta).start;
                for local_s in 0..w {
                    for a in 0..self.num_actions {
                        let base = (local_s * self.num_actions + a) * w;
                        for local_sp in 0..w {
                            let c = block[base + local_sp];
                            if c > 0.0 {
                                out.push((
                                    member as u32,
                                    (offset + local_s) as u32,
                                    a as u32,
                                    (offset + local_sp) as u32,
                                    c as u64,
                                ));
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

fn smooth_row(counts: &[f64], kappa: f64, out: &mut [f64]) {
    let total: f64 = counts.iter().sum();
    let denom = total + kappa * counts.len() as f64;
    for (o, &c) in out.iter_mut().zip(counts) {
        *o = (c + kappa) / denom;
    }
}

/// Restricts a global policy to a slice, reindexing states to local indices.
pub fn restrict_policy(
    policy: &Policy,
    slice: std::ops::Range<usize>,
    num_actions: usize,
) -> Result<Policy> {
    if policy.num_actions() != num_actions || slice.end > policy.num_states() {
        return Err(Error::ShapeMismatch(
            "policy does not cover the requested slice".into(),
        ));
    }
    let mut rows = Vec::with_capacity(slice.len() * num_actions);
    for g in slice {
        rows.extend_from_slice(policy.row(g));
    }
    Policy::new(rows.len() / num_actions, num_actions, rows)
}

/// Worst-case TV bias induced by the symmetric pseudocount on a row with
/// `total` real counts over `width` destinations.
pub fn smoothing_bias(total: f64, kappa: f64, width: usize) -> f64 {
    kappa * width as f64 / (total + kappa * width as f64)
}
