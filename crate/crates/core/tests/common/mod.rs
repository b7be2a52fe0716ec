//! Shared oracles for the integration suites: independent policy
//! evaluation by a naive Gauss-Jordan solve, brute-force deterministic
//! policy enumeration, Monte-Carlo estimators, and a chi-squared test.
//!
//! These deliberately avoid the library's solver paths so their agreement
//! with the library is evidence, not tautology.

#![allow(dead_code)]

use rand::Rng;
use waker_core::mdp::TabularMdp;
use waker_core::{Mdp, Policy, Reward};

/// Naive dense solve of `A x = b` (Gauss-Jordan with partial pivoting),
/// written independently of the library's solver.
pub fn gauss_jordan(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let diag = a[col][col];
        for c in 0..n {
            a[col][c] /= diag;
        }
        b[col] /= diag;
        for r in 0..n {
            if r != col && a[r][col] != 0.0 {
                let factor = a[r][col];
                for c in 0..n {
                    a[r][c] -= factor * a[col][c];
                }
                b[r] -= factor * b[col];
            }
        }
    }
    b
}

/// Exact value of a deterministic policy via the oracle solver.
pub fn oracle_policy_value(mdp: &Mdp, reward: &Reward, actions: &[usize]) -> f64 {
    let n = mdp.num_states();
    let gamma = mdp.discount();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for s in 0..n {
        a[s][s] += 1.0;
        let act = actions[s];
        b[s] = reward.get(s, act);
        for (sp, &p) in mdp.row(s, act).iter().enumerate() {
            a[s][sp] -= gamma * p;
        }
    }
    let v = gauss_jordan(a, b);
    mdp.initial_state_dist()
        .iter()
        .zip(&v)
        .map(|(&p, &val)| p * val)
        .sum()
}

/// Optimal value over all deterministic policies, by exhaustive enumeration.
/// Only feasible for tiny spaces (`A^S` policies).
pub fn enumerate_optimal_value(mdp: &Mdp, reward: &Reward) -> (f64, Vec<usize>) {
    let n = mdp.num_states();
    let m = mdp.num_actions();
    let total = m.pow(n as u32);
    let mut best = f64::NEG_INFINITY;
    let mut best_actions = vec![0; n];
    for code in 0..total {
        let mut c = code;
        let actions: Vec<usize> = (0..n)
            .map(|_| {
                let a = c % m;
                c /= m;
                a
            })
            .collect();
        let v = oracle_policy_value(mdp, reward, &actions);
        if v > best {
            best = v;
            best_actions = actions;
        }
    }
    (best, best_actions)
}

pub fn sample_index<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last = i;
            acc += w;
            if u < acc {
                return i;
            }
        }
    }
    last
}

pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Monte-Carlo discounted return of a policy over truncated rollouts.
pub fn mc_policy_value<R: Rng>(
    policy: &Policy,
    mdp: &Mdp,
    reward: &Reward,
    rollouts: usize,
    horizon: usize,
    rng: &mut R,
) -> McEstimate {
    let gamma = mdp.discount();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..rollouts {
        let mut s = sample_index(mdp.initial_state_dist(), rng);
        let mut ret = 0.0;
        let mut scale = 1.0;
        for _ in 0..horizon {
            let a = sample_index(policy.row(s), rng);
            ret += scale * reward.get(s, a);
            scale *= gamma;
            s = sample_index(mdp.row(s, a), rng);
        }
        sum += ret;
        sum_sq += ret * ret;
    }
    let n = rollouts as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    McEstimate {
        mean,
        std_error: (var / n).sqrt(),
    }
}

/// Monte-Carlo normalized discounted state-action visitation.
pub fn mc_occupancy<R: Rng>(
    policy: &Policy,
    mdp: &Mdp,
    rollouts: usize,
    horizon: usize,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let gamma = mdp.discount();
    let n = mdp.num_states();
    let m = mdp.num_actions();
    let mut sum = vec![0.0; n * m];
    let mut sum_sq = vec![0.0; n * m];
    let mut visit = vec![0.0; n * m];
    for _ in 0..rollouts {
        visit.fill(0.0);
        let mut s = sample_index(mdp.initial_state_dist(), rng);
        let mut scale = 1.0 - gamma;
        for _ in 0..horizon {
            let a = sample_index(policy.row(s), rng);
            visit[s * m + a] += scale;
            scale *= gamma;
            s = sample_index(mdp.row(s, a), rng);
        }
        for (i, &v) in visit.iter().enumerate() {
            sum[i] += v;
            sum_sq[i] += v * v;
        }
    }
    let count = rollouts as f64;
    let mut means = vec![0.0; n * m];
    let mut ses = vec![0.0; n * m];
    for i in 0..n * m {
        let mean = sum[i] / count;
        let var = (sum_sq[i] / count - mean * mean).max(0.0) * count / (count - 1.0);
        means[i] = mean;
        ses[i] = (var / count).sqrt();
    }
    (means, ses)
}

/// Random dense MDP for oracle comparisons.
pub fn random_small_mdp<R: Rng>(rng: &mut R, n: usize, m: usize, gamma: f64) -> Mdp {
    let mut t = Vec::with_capacity(n * m * n);
    for _ in 0..n * m {
        t.extend(random_dist(rng, n));
    }
    let init = random_dist(rng, n);
    TabularMdp::new(n, m, t, init, gamma).unwrap()
}

pub fn random_dist<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut row: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    let sum: f64 = row.iter().sum();
    for p in row.iter_mut() {
        *p /= sum;
    }
    let sum: f64 = row.iter().sum();
    row[n - 1] += 1.0 - sum;
    row
}

pub fn random_reward<R: Rng>(rng: &mut R, n: usize, m: usize) -> Reward {
    Reward::new(n, m, (0..n * m).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

pub fn random_stochastic_policy<R: Rng>(rng: &mut R, n: usize, m: usize) -> Policy {
    let mut rows = Vec::with_capacity(n * m);
    for _ in 0..n {
        rows.extend(random_dist(rng, m));
    }
    Policy::new(n, m, rows).unwrap()
}

/// Pearson chi-squared goodness-of-fit p-value against expected
/// probabilities; bins with zero expectation must stay empty.
pub fn chi_square_p_value(observed: &[u64], expected_probs: &[f64]) -> f64 {
    let total: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut dof: i64 = -1;
    for (&obs, &p) in observed.iter().zip(expected_probs) {
        if p <= 0.0 {
            assert_eq!(obs, 0, "draw landed in a zero-probability bin");
            continue;
        }
        let expect = p * total as f64;
        let d = obs as f64 - expect;
        stat += d * d / expect;
        dof += 1;
    }
    assert!(dof >= 1, "need at least two supported bins");
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let dist = ChiSquared::new(dof as f64).unwrap();
    1.0 - dist.cdf(stat)
}
