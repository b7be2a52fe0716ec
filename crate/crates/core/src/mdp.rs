//! Exact solvers and metrics for finite MDPs.
//!
//! Values, occupancy measures and regret are computed by direct linear
//! solves wherever possible so that the bound checkers downstream can work
//! with exact inequalities instead of sampling noise. Everything here is
//! generic over the scalar type; the rest of the crate uses the `f64`
//! aliases exported from the crate root.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Hard cap on value-iteration sweeps; hitting it signals a malformed MDP.
pub const VI_MAX_SWEEPS: usize = 200_000;

fn dist_tol<S: Scalar>() -> S {
    // 1e-12 at f64 precision, loosened for coarser scalars.
    let base = S::from_f64_lossy(1e-12);
    let eps = S::epsilon() * S::from_f64_lossy(100.0);
    if eps > base {
        eps
    } else {
        base
    }
}

fn check_distribution<S: Scalar>(row: &[S], what: &str) -> Result<()> {
    let mut sum = S::zero();
    for &p in row {
        if !(p >= S::zero()) {
            return Err(Error::InvalidDistribution(format!(
                "{what}: entry {p:?} is negative or NaN"
            )));
        }
        sum += p;
    }
    if (sum - S::one()).abs() > dist_tol::<S>() {
        return Err(Error::InvalidDistribution(format!(
            "{what}: sums to {sum:?}, expected 1"
        )));
    }
    Ok(())
}

/// Explicit finite MDP: transition tensor, initial state distribution and
/// discount. Both ground-truth environments and learned models use this shape.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp<S> {
    num_states: usize,
    num_actions: usize,
    /// Row-major `(s, a, s')` tensor; each `(s, a)` row is a distribution.
    transition: Vec<S>,
    initial_state_dist: Vec<S>,
    discount: S,
}

impl<S: Scalar> TabularMdp<S> {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<S>,
        initial_state_dist: Vec<S>,
        discount: S,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::ShapeMismatch("empty state or action set".into()));
        }
        if transition.len() != num_states * num_actions * num_states {
            return Err(Error::ShapeMismatch(format!(
                "transition tensor has {} entries, expected {}",
                transition.len(),
                num_states * num_actions * num_states
            )));
        }
        if initial_state_dist.len() != num_states {
            return Err(Error::ShapeMismatch(format!(
                "initial distribution has {} entries, expected {}",
                initial_state_dist.len(),
                num_states
            )));
        }
        let d = discount.to_f64().unwrap_or(f64::NAN);
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::InvalidDiscount(d));
        }
        for s in 0..num_states {
            for a in 0..num_actions {
                let start = (s * num_actions + a) * num_states;
                check_distribution(
                    &transition[start..start + num_states],
                    &format!("transition row ({s}, {a})"),
                )?;
            }
        }
        check_distribution(&initial_state_dist, "initial state distribution")?;
        Ok(Self {
            num_states,
            num_actions,
            transition,
            initial_state_dist,
            discount,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn discount(&self) -> S {
        self.discount
    }

    pub fn initial_state_dist(&self) -> &[S] {
        &self.initial_state_dist
    }

    /// Next-state distribution for `(s, a)`.
    pub fn row(&self, s: usize, a: usize) -> &[S] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    pub fn transition(&self) -> &[S] {
        &self.transition
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.num_states != other.num_states
            || self.num_actions != other.num_actions
            || self.discount != other.discount
        {
            return Err(Error::ShapeMismatch(
                "MDPs must share state count, action count and discount".into(),
            ));
        }
        Ok(())
    }
}

/// Reward table indexed `(s, a)`, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardFn<S> {
    num_states: usize,
    num_actions: usize,
    table: Vec<S>,
}

impl<S: Scalar> RewardFn<S> {
    pub fn new(num_states: usize, num_actions: usize, table: Vec<S>) -> Result<Self> {
        if table.len() != num_states * num_actions {
            return Err(Error::ShapeMismatch(format!(
                "reward table has {} entries, expected {}",
                table.len(),
                num_states * num_actions
            )));
        }
        for &r in &table {
            if !(r >= S::zero() && r <= S::one()) {
                return Err(Error::InvalidDistribution(format!(
                    "reward entry {r:?} outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            table,
        })
    }

    pub fn zero(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            table: vec![S::zero(); num_states * num_actions],
        }
    }

    pub fn get(&self, s: usize, a: usize) -> S {
        self.table[s * self.num_actions + a]
    }

    pub fn table(&self) -> &[S] {
        &self.table
    }

    fn matches<M>(&self, mdp: &TabularMdp<M>) -> Result<()> {
        if self.num_states != mdp.num_states || self.num_actions != mdp.num_actions {
            return Err(Error::ShapeMismatch(
                "reward table does not match MDP shape".into(),
            ));
        }
        Ok(())
    }
}

/// Stochastic policy: one action distribution per state. Deterministic
/// policies are point masses.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<S> {
    num_states: usize,
    num_actions: usize,
    rows: Vec<S>,
}

impl<S: Scalar> Policy<S> {
    pub fn new(num_states: usize, num_actions: usize, rows: Vec<S>) -> Result<Self> {
        if rows.len() != num_states * num_actions {
            return Err(Error::ShapeMismatch(format!(
                "policy has {} entries, expected {}",
                rows.len(),
                num_states * num_actions
            )));
        }
        for s in 0..num_states {
            check_distribution(
                &rows[s * num_actions..(s + 1) * num_actions],
                &format!("policy row {s}"),
            )?;
        }
        Ok(Self {
            num_states,
            num_actions,
            rows,
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let p = S::one() / S::from_f64_lossy(num_actions as f64);
        Self {
            num_states,
            num_actions,
            rows: vec![p; num_states * num_actions],
        }
    }

    pub fn deterministic(num_actions: usize, actions: &[usize]) -> Self {
        let num_states = actions.len();
        let mut rows = vec![S::zero(); num_states * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            rows[s * num_actions + a] = S::one();
        }
        Self {
            num_states,
            num_actions,
            rows,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> S {
        self.rows[s * self.num_actions + a]
    }

    pub fn row(&self, s: usize) -> &[S] {
        &self.rows[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn rows(&self) -> &[S] {
        &self.rows
    }

    /// Greedy action per state (argmax of the row, lowest index on ties).
    pub fn greedy_actions(&self) -> Vec<usize> {
        (0..self.num_states)
            .map(|s| {
                let row = self.row(s);
                let mut best = 0;
                for a in 1..self.num_actions {
                    if row[a] > row[best] {
                        best = a;
                    }
                }
                best
            })
            .collect()
    }

    fn matches(&self, mdp: &TabularMdp<S>) -> Result<()> {
        if self.num_states != mdp.num_states || self.num_actions != mdp.num_actions {
            return Err(Error::ShapeMismatch("policy does not match MDP shape".into()));
        }
        Ok(())
    }
}

/// Normalized discounted state-action distribution:
/// `(1 - gamma) * sum_t gamma^t Pr(s_t, a_t)`.
#[derive(Debug, Clone)]
pub struct OccupancyMeasure<S> {
    num_states: usize,
    num_actions: usize,
    weights: Vec<S>,
}

impl<S: Scalar> OccupancyMeasure<S> {
    pub fn weight(&self, s: usize, a: usize) -> S {
        self.weights[s * self.num_actions + a]
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
}

/// Solves `A x = b` in place by Gaussian elimination with partial pivoting.
/// `a` is row-major `n x n`. The systems here are small and strictly
/// diagonally dominant (`I - gamma * P`), so this is robust.
pub(crate) fn solve_linear<S: Scalar>(a: &mut [S], b: &mut [S], n: usize) -> Result<Vec<S>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[pivot * n + col].abs() {
                pivot = r;
            }
        }
        if a[pivot * n + col].abs() <= S::epsilon() {
            return Err(Error::SingularSystem(format!(
                "zero pivot in column {col}"
            )));
        }
        if pivot != col {
            for c in 0..n {
                a.swap(col * n + c, pivot * n + c);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for r in col + 1..n {
            let factor = a[r * n + col] / diag;
            if factor == S::zero() {
                continue;
            }
            for c in col..n {
                let v = a[col * n + c];
                a[r * n + c] -= factor * v;
            }
            let bv = b[col];
            b[r] -= factor * bv;
        }
    }
    let mut x = vec![S::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in row + 1..n {
            acc -= a[row * n + c] * x[c];
        }
        x[row] = acc / a[row * n + row];
    }
    Ok(x)
}

/// Result of a value-iteration solve.
#[derive(Debug, Clone)]
pub struct ViSolution<S> {
    pub values: Vec<S>,
    pub policy: Policy<S>,
    pub sweeps: usize,
    pub residual: S,
    /// Sup-norm Bellman residual after each sweep.
    pub residual_history: Vec<S>,
}

/// Value iteration to sup-norm Bellman residual `tol`, with greedy
/// tie-breaking by lowest action index.
pub fn value_iteration<S: Scalar>(
    mdp: &TabularMdp<S>,
    reward: &RewardFn<S>,
    tol: S,
) -> Result<ViSolution<S>> {
    value_iteration_capped(mdp, reward, tol, VI_MAX_SWEEPS)
}

pub fn value_iteration_capped<S: Scalar>(
    mdp: &TabularMdp<S>,
    reward: &RewardFn<S>,
    tol: S,
    max_sweeps: usize,
) -> Result<ViSolution<S>> {
    reward.matches(mdp)?;
    if tol <= S::zero() {
        return Err(Error::InvalidConfig("tolerance must be positive".into()));
    }
    let n = mdp.num_states;
    let gamma = mdp.discount;
    let mut values = vec![S::zero(); n];
    let mut next = vec![S::zero(); n];
    let mut residual = S::infinity();
    let mut residual_history = Vec::new();
    let mut sweeps = 0;
    while residual > tol {
        if sweeps >= max_sweeps {
            return Err(Error::NonConvergence {
                max_iterations: max_sweeps,
                residual: residual.to_f64().unwrap_or(f64::NAN),
            });
        }
        residual = S::zero();
        for s in 0..n {
            let mut best = S::neg_infinity();
            for a in 0..mdp.num_actions {
                let q = reward.get(s, a) + gamma * dot(mdp.row(s, a), &values);
                if q > best {
                    best = q;
                }
            }
            next[s] = best;
            let diff = (next[s] - values[s]).abs();
            if diff > residual {
                residual = diff;
            }
        }
        std::mem::swap(&mut values, &mut next);
        residual_history.push(residual);
        sweeps += 1;
    }
    // Greedy extraction; `>` keeps the lowest action index on ties.
    let mut actions = Vec::with_capacity(n);
    for s in 0..n {
        let mut best_a = 0;
        let mut best_q = S::neg_infinity();
        for a in 0..mdp.num_actions {
            let q = reward.get(s, a) + gamma * dot(mdp.row(s, a), &values);
            if q > best_q {
                best_q = q;
                best_a = a;
            }
        }
        actions.push(best_a);
    }
    Ok(ViSolution {
        values,
        policy: Policy::deterministic(mdp.num_actions, &actions),
        sweeps,
        residual,
        residual_history,
    })
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Exact per-state values of a fixed policy, from the linear policy-evaluation
/// system `(I - gamma * P_pi) v = r_pi`.
pub fn state_values<S: Scalar>(
    policy: &Policy<S>,
    mdp: &TabularMdp<S>,
    reward: &RewardFn<S>,
) -> Result<Vec<S>> {
    policy.matches(mdp)?;
    reward.matches(mdp)?;
    let n = mdp.num_states;
    let gamma = mdp.discount;
    let mut a = vec![S::zero(); n * n];
    let mut b = vec![S::zero(); n];
    for s in 0..n {
        a[s * n + s] = S::one();
        for act in 0..mdp.num_actions {
            let p = policy.prob(s, act);
            if p == S::zero() {
                continue;
            }
            b[s] += p * reward.get(s, act);
            let row = mdp.row(s, act);
            for sp in 0..n {
                a[s * n + sp] -= gamma * p * row[sp];
            }
        }
    }
    solve_linear(&mut a, &mut b, n)
}

/// Expected discounted return of `policy` from the initial distribution.
pub fn policy_value<S: Scalar>(
    policy: &Policy<S>,
    mdp: &TabularMdp<S>,
    reward: &RewardFn<S>,
) -> Result<S> {
    let v = state_values(policy, mdp, reward)?;
    Ok(dot(&mdp.initial_state_dist, &v))
}

/// Exact normalized discounted state-action occupancy of `policy` in `mdp`,
/// from the linear flow system `(I - gamma * P_pi^T) mu = (1 - gamma) mu_0`.
pub fn occupancy<S: Scalar>(
    policy: &Policy<S>,
    mdp: &TabularMdp<S>,
) -> Result<OccupancyMeasure<S>> {
    policy.matches(mdp)?;
    let n = mdp.num_states;
    let gamma = mdp.discount;
    let mut a = vec![S::zero(); n * n];
    let mut b = vec![S::zero(); n];
    for s in 0..n {
        a[s * n + s] += S::one();
        b[s] = (S::one() - gamma) * mdp.initial_state_dist[s];
        for act in 0..mdp.num_actions {
            let p = policy.prob(s, act);
            if p == S::zero() {
                continue;
            }
            let row = mdp.row(s, act);
            // Transposed flow: mass arriving at s' from (s, act).
            for sp in 0..n {
                a[sp * n + s] -= gamma * p * row[sp];
            }
        }
    }
    let mu = solve_linear(&mut a, &mut b, n)?;
    let mut weights = vec![S::zero(); n * mdp.num_actions];
    for s in 0..n {
        for act in 0..mdp.num_actions {
            weights[s * mdp.num_actions + act] = mu[s] * policy.prob(s, act);
        }
    }
    Ok(OccupancyMeasure {
        num_states: n,
        num_actions: mdp.num_actions,
        weights,
    })
}

/// Total variation distance `0.5 * L1`; result in `[0, 1]` for distributions.
pub fn tv_distance<S: Scalar>(p: &[S], q: &[S]) -> Result<S> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch(format!(
            "distributions have support {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let two = S::from_f64_lossy(2.0);
    Ok(p.iter()
        .zip(q)
        .fold(S::zero(), |acc, (&a, &b)| acc + (a - b).abs())
        / two)
}

/// Tight tolerance used when an optimal policy is needed as a reference.
fn reference_tol<S: Scalar>() -> S {
    let base = S::from_f64_lossy(1e-12);
    let eps = S::epsilon() * S::from_f64_lossy(1000.0);
    if eps > base {
        eps
    } else {
        base
    }
}

/// Regret of `policy`: optimal value minus achieved value, both exact.
pub fn regret<S: Scalar>(
    policy: &Policy<S>,
    mdp: &TabularMdp<S>,
    reward: &RewardFn<S>,
) -> Result<S> {
    let opt = value_iteration(mdp, reward, reference_tol::<S>())?;
    let v_star = policy_value(&opt.policy, mdp, reward)?;
    let v_pi = policy_value(policy, mdp, reward)?;
    Ok(v_star - v_pi)
}

fn expected_tv<S: Scalar>(
    occ: &OccupancyMeasure<S>,
    model: &TabularMdp<S>,
    truth: &TabularMdp<S>,
) -> Result<S> {
    let mut acc = S::zero();
    for s in 0..model.num_states {
        for a in 0..model.num_actions {
            let w = occ.weight(s, a);
            if w == S::zero() {
                continue;
            }
            acc += w * tv_distance(model.row(s, a), truth.row(s, a))?;
        }
    }
    Ok(acc)
}

fn bound_constant<S: Scalar>(gamma: S) -> S {
    let two = S::from_f64_lossy(2.0);
    two * gamma / ((S::one() - gamma) * (S::one() - gamma))
}

/// Both sides of the simulation-lemma inequality for a fixed policy:
/// `lhs = |V(pi, model) - V(pi, truth)|`,
/// `rhs = 2*gamma/(1-gamma)^2 * E_{d(pi, model)}[TV(model, truth)]`.
pub fn simulation_lemma_gap<S: Scalar>(
    policy: &Policy<S>,
    true_mdp: &TabularMdp<S>,
    model_mdp: &TabularMdp<S>,
    reward: &RewardFn<S>,
) -> Result<(S, S)> {
    true_mdp.same_shape(model_mdp)?;
    let v_model = policy_value(policy, model_mdp, reward)?;
    let v_true = policy_value(policy, true_mdp, reward)?;
    let lhs = (v_model - v_true).abs();
    let occ = occupancy(policy, model_mdp)?;
    let rhs = bound_constant(model_mdp.discount) * expected_tv(&occ, model_mdp, true_mdp)?;
    Ok((lhs, rhs))
}

/// Both sides of the two-term regret bound for the model-optimal policy:
/// the regret (measured in the true MDP) of the policy that is optimal in
/// the model, against the bound built from model occupancies of both the
/// true-optimal and model-optimal policies.
pub fn proposition1_gap<S: Scalar>(
    theta_model: &TabularMdp<S>,
    theta_true: &TabularMdp<S>,
    reward: &RewardFn<S>,
) -> Result<(S, S)> {
    theta_true.same_shape(theta_model)?;
    let tol = reference_tol::<S>();
    let model_opt = value_iteration(theta_model, reward, tol)?.policy;
    let true_opt = value_iteration(theta_true, reward, tol)?.policy;
    let v_star = policy_value(&true_opt, theta_true, reward)?;
    let v_hat = policy_value(&model_opt, theta_true, reward)?;
    let regret_lhs = v_star - v_hat;
    let occ_star = occupancy(&true_opt, theta_model)?;
    let occ_hat = occupancy(&model_opt, theta_model)?;
    let bound_rhs = bound_constant(theta_model.discount)
        * (expected_tv(&occ_star, theta_model, theta_true)?
            + expected_tv(&occ_hat, theta_model, theta_true)?);
    Ok((regret_lhs, bound_rhs))
}
