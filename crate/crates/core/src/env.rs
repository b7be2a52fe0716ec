//! Parameterized environment families.
//!
//! A family is a finite parameter grid, a deterministic generator mapping
//! parameters to a tabular MDP, a domain-randomisation distribution, named
//! hardest/complex designations, an out-of-distribution split, and a set of
//! named task rewards sharing the dynamics. Every per-parameter MDP is
//! embedded into one global augmented index space so a single model and a
//! single generalist policy can cover all of them.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::{Mdp, Reward, Value};

/// One setting of the environment's free parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    /// Grid side length.
    pub size: u32,
    /// Probability that an action resolves to a uniformly random direction.
    pub slip: f64,
}

impl EnvParams {
    pub fn label(&self) -> String {
        format!("size{}_slip{:.2}", self.size, self.slip)
    }
}

/// Index of a parameter setting within a family (grid first, then OOD).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ThetaId(pub usize);

/// Disjoint per-parameter slices of one global state index space.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedStateSpace {
    offsets: Vec<usize>,
    widths: Vec<usize>,
    total_states: usize,
}

impl AugmentedStateSpace {
    pub fn new(widths: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(widths.len());
        let mut acc = 0;
        for &w in &widths {
            offsets.push(acc);
            acc += w;
        }
        Self {
            offsets,
            widths,
            total_states: acc,
        }
    }

    pub fn total_states(&self) -> usize {
        self.total_states
    }

    pub fn num_slices(&self) -> usize {
        self.widths.len()
    }

    pub fn slice(&self, theta: ThetaId) -> Range<usize> {
        let o = self.offsets[theta.0];
        o..o + self.widths[theta.0]
    }

    pub fn width(&self, theta: ThetaId) -> usize {
        self.widths[theta.0]
    }

    pub fn to_global(&self, theta: ThetaId, local: usize) -> usize {
        debug_assert!(local < self.widths[theta.0]);
        self.offsets[theta.0] + local
    }

    /// Maps a global index back to its slice and local index.
    pub fn to_local(&self, global: usize) -> Result<(ThetaId, usize)> {
        if global >= self.total_states {
            return Err(Error::IndexOutOfRange(format!(
                "global state {global} >= {}",
                self.total_states
            )));
        }
        let idx = match self.offsets.binary_search(&global) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        Ok((ThetaId(idx), global - self.offsets[idx]))
    }
}

/// A named task: reward tables sharing the family's dynamics, one per
/// parameter setting (grid and OOD alike).
#[derive(Debug, Clone)]
pub struct Task {
    pub name: String,
    rewards: Vec<Reward>,
}

impl Task {
    /// `rewards` must hold one table per parameter setting, grid then OOD.
    pub fn new(name: impl Into<String>, rewards: Vec<Reward>) -> Self {
        Self {
            name: name.into(),
            rewards,
        }
    }
}

/// The underspecified environment at desk scale.
#[derive(Debug, Clone)]
pub struct EnvironmentFamily {
    name: String,
    params: Vec<EnvParams>,
    num_grid: usize,
    mdps: Vec<Mdp>,
    space: AugmentedStateSpace,
    dr_distribution: Vec<Value>,
    hardest: ThetaId,
    complex_subset: Vec<ThetaId>,
    tasks: Vec<Task>,
    num_actions: usize,
    discount: Value,
}

/// Family selection plus the knobs that are family-wide rather than
/// per-module.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FamilyConfig {
    pub name: String,
    pub discount: f64,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self {
            name: "slip-grid".into(),
            discount: 0.95,
        }
    }
}

/// Builds a registered family by name.
pub fn build_family(config: &FamilyConfig) -> Result<EnvironmentFamily> {
    if !(config.discount > 0.0 && config.discount < 1.0) {
        return Err(Error::InvalidDiscount(config.discount));
    }
    match config.name.as_str() {
        "slip-grid" => Ok(slip_grid_family(config.discount)),
        other => Err(Error::UnknownFamily(other.into())),
    }
}

impl EnvironmentFamily {
    /// Assembles a family from parts, checking the structural invariants.
    /// `params` holds the grid settings followed by the OOD settings.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        name: String,
        params: Vec<EnvParams>,
        num_grid: usize,
        mdps: Vec<Mdp>,
        dr_distribution: Vec<Value>,
        hardest: ThetaId,
        complex_subset: Vec<ThetaId>,
        tasks: Vec<Task>,
        discount: Value,
    ) -> Result<Self> {
        if num_grid == 0 || num_grid > params.len() || mdps.len() != params.len() {
            return Err(Error::InvalidConfig(
                "family parameter lists are inconsistent".into(),
            ));
        }
        for ood in &params[num_grid..] {
            if params[..num_grid].iter().any(|p| p == ood) {
                return Err(Error::InvalidConfig(format!(
                    "OOD parameters {} overlap the training grid",
                    ood.label()
                )));
            }
        }
        let num_actions = mdps[0].num_actions();
        if mdps.iter().any(|m| m.num_actions() != num_actions) {
            return Err(Error::InvalidConfig(
                "all per-parameter MDPs must share the action count".into(),
            ));
        }
        if dr_distribution.len() != num_grid {
            return Err(Error::InvalidConfig(
                "DR distribution must cover exactly the parameter grid".into(),
            ));
        }
        let sum: Value = dr_distribution.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || dr_distribution.iter().any(|&p| p <= 0.0) {
            return Err(Error::InvalidDistribution(
                "DR distribution must be a full-support distribution over the grid".into(),
            ));
        }
        if hardest.0 >= num_grid || complex_subset.iter().any(|t| t.0 >= num_grid) {
            return Err(Error::InvalidConfig(
                "hardest/complex designations must point into the grid".into(),
            ));
        }
        for task in &tasks {
            if task.rewards.len() != params.len() {
                return Err(Error::InvalidConfig(format!(
                    "task {} must define a reward for every parameter setting",
                    task.name
                )));
            }
        }
        let space = AugmentedStateSpace::new(mdps.iter().map(|m| m.num_states()).collect());
        Ok(Self {
            name,
            params,
            num_grid,
            mdps,
            space,
            dr_distribution,
            hardest,
            complex_subset,
            tasks,
            num_actions,
            discount,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn discount(&self) -> Value {
        self.discount
    }

    pub fn space(&self) -> &AugmentedStateSpace {
        &self.space
    }

    /// Parameter grid (training distribution support).
    pub fn grid_ids(&self) -> impl Iterator<Item = ThetaId> + '_ {
        (0..self.num_grid).map(ThetaId)
    }

    pub fn num_grid(&self) -> usize {
        self.num_grid
    }

    pub fn ood_ids(&self) -> impl Iterator<Item = ThetaId> + '_ {
        (self.num_grid..self.params.len()).map(ThetaId)
    }

    pub fn all_ids(&self) -> impl Iterator<Item = ThetaId> + '_ {
        (0..self.params.len()).map(ThetaId)
    }

    pub fn params(&self, theta: ThetaId) -> EnvParams {
        self.params[theta.0]
    }

    pub fn label(&self, theta: ThetaId) -> String {
        self.params[theta.0].label()
    }

    pub fn lookup(&self, params: &EnvParams) -> Option<ThetaId> {
        self.params.iter().position(|p| p == params).map(ThetaId)
    }

    pub fn contains(&self, theta: ThetaId) -> bool {
        theta.0 < self.params.len()
    }

    fn check(&self, theta: ThetaId) -> Result<()> {
        if self.contains(theta) {
            Ok(())
        } else {
            Err(Error::UnknownParams(format!("theta index {}", theta.0)))
        }
    }

    pub fn mdp(&self, theta: ThetaId) -> &Mdp {
        &self.mdps[theta.0]
    }

    /// The per-parameter MDP together with its global index slice.
    pub fn augmented_mdp(&self, theta: ThetaId) -> Result<(&Mdp, Range<usize>)> {
        self.check(theta)?;
        Ok((&self.mdps[theta.0], self.space.slice(theta)))
    }

    pub fn dr_distribution(&self) -> &[Value] {
        &self.dr_distribution
    }

    /// Draws from the domain-randomisation distribution over the grid.
    pub fn dr_sample<R: Rng>(&self, rng: &mut R) -> ThetaId {
        let u: f64 = rng.gen::<f64>();
        let mut acc = 0.0;
        for (i, &p) in self.dr_distribution.iter().enumerate() {
            acc += p;
            if u < acc {
                return ThetaId(i);
            }
        }
        ThetaId(self.num_grid - 1)
    }

    pub fn hardest(&self) -> ThetaId {
        self.hardest
    }

    pub fn complex_subset(&self) -> &[ThetaId] {
        &self.complex_subset
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn task_names(&self) -> Vec<&str> {
        self.tasks.iter().map(|t| t.name.as_str()).collect()
    }

    pub fn task_reward(&self, task: &str, theta: ThetaId) -> Result<&Reward> {
        self.check(theta)?;
        self.tasks
            .iter()
            .find(|t| t.name == task)
            .map(|t| &t.rewards[theta.0])
            .ok_or_else(|| Error::UnknownTask(task.into()))
    }
}

// ---------------------------------------------------------------------------
// slip-grid family
// ---------------------------------------------------------------------------

const SLIP_GRID_SIZES: [u32; 5] = [3, 4, 5, 6, 7];
const SLIP_GRID_SLIPS: [f64; 3] = [0.0, 0.1, 0.2];
const SLIP_GRID_OOD_SIZE: u32 = 8;
const NUM_DIRECTIONS: usize = 4; // up, down, left, right

fn slip_grid_family(discount: f64) -> EnvironmentFamily {
    let mut params = Vec::new();
    for &size in &SLIP_GRID_SIZES {
        for &slip in &SLIP_GRID_SLIPS {
            params.push(EnvParams { size, slip });
        }
    }
    let num_grid = params.len();
    for &slip in &SLIP_GRID_SLIPS {
        params.push(EnvParams {
            size: SLIP_GRID_OOD_SIZE,
            slip,
        });
    }
    let mdps: Vec<Mdp> = params
        .iter()
        .map(|p| generate_slip_grid(p, discount))
        .collect();
    let dr = vec![1.0 / num_grid as Value; num_grid];
    let hardest = ThetaId(
        params[..num_grid]
            .iter()
            .position(|p| p.size == 7 && p.slip == 0.2)
            .expect("hardest setting present"),
    );
    let complex: Vec<ThetaId> = params[..num_grid]
        .iter()
        .enumerate()
        .filter(|(_, p)| p.size >= 6 && p.slip >= 0.1)
        .map(|(i, _)| ThetaId(i))
        .collect();
    let tasks = slip_grid_tasks(&params);
    EnvironmentFamily::from_parts(
        "slip-grid".into(),
        params,
        num_grid,
        mdps,
        dr,
        hardest,
        complex,
        tasks,
        discount,
    )
    .expect("slip-grid construction is internally consistent")
}

struct Layout {
    size: usize,
    obstacles: Vec<bool>,
}

impl Layout {
    fn start(&self) -> usize {
        0
    }

    fn goal(&self) -> usize {
        self.size * self.size - 1
    }

    fn corner(&self) -> usize {
        self.size * (self.size - 1)
    }

    fn is_free(&self, cell: usize) -> bool {
        !self.obstacles[cell]
    }

    /// Cells reachable from the start through free cells, in index order.
    /// These are the MDP states; unreachable cells would be permanently
    /// unlearnable and only distort a learned model.
    fn reachable_cells(&self) -> Vec<usize> {
        let n = self.size;
        let mut seen = vec![false; n * n];
        let mut queue = VecDeque::from([self.start()]);
        seen[self.start()] = true;
        while let Some(cell) = queue.pop_front() {
            for dir in 0..NUM_DIRECTIONS {
                let next = step_cell(n, cell, dir);
                if next != cell && self.is_free(next) && !seen[next] {
                    seen[next] = true;
                    queue.push_back(next);
                }
            }
        }
        (0..n * n).filter(|&c| seen[c]).collect()
    }
}

/// Obstacle layout derived deterministically from the parameters: sampled
/// from a parameter-keyed RNG, rejecting placements that disconnect the
/// start cell from either task corner.
fn derive_layout(params: &EnvParams) -> Layout {
    let n = params.size as usize;
    let cells = n * n;
    let num_obstacles = cells / 6;
    let slip_key = (params.slip * 100.0).round() as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_6100 + params.size as u64 * 101 + slip_key);
    let mut layout = Layout {
        size: n,
        obstacles: vec![false; cells],
    };
    if num_obstacles == 0 {
        return layout;
    }
    let reserved = [layout.start(), layout.goal(), layout.corner()];
    let candidates: Vec<usize> = (0..cells).filter(|c| !reserved.contains(c)).collect();
    for _ in 0..1000 {
        let mut obstacles = vec![false; cells];
        let mut remaining = candidates.clone();
        for _ in 0..num_obstacles.min(remaining.len()) {
            let at = rng.gen_range(0..remaining.len());
            obstacles[remaining.swap_remove(at)] = true;
        }
        layout.obstacles = obstacles;
        if corners_reachable(&layout) {
            return layout;
        }
    }
    // Practically unreachable at these densities; fall back to no obstacles.
    layout.obstacles = vec![false; cells];
    layout
}

fn corners_reachable(layout: &Layout) -> bool {
    let n = layout.size;
    let mut seen = vec![false; n * n];
    let mut queue = VecDeque::from([layout.start()]);
    seen[layout.start()] = true;
    while let Some(cell) = queue.pop_front() {
        for dir in 0..NUM_DIRECTIONS {
            let next = step_cell(n, cell, dir);
            if next != cell && layout.is_free(next) && !seen[next] {
                seen[next] = true;
                queue.push_back(next);
            }
        }
    }
    seen[layout.goal()] && seen[layout.corner()]
}

/// Destination of a move ignoring obstacles; walls keep the agent in place.
fn step_cell(n: usize, cell: usize, dir: usize) -> usize {
    let (row, col) = (cell / n, cell % n);
    let (r, c) = match dir {
        0 => (row.wrapping_sub(1), col), // up
        1 => (row + 1, col),             // down
        2 => (row, col.wrapping_sub(1)), // left
        _ => (row, col + 1),             // right
    };
    if r < n && c < n {
        r * n + c
    } else {
        cell
    }
}

/// Deterministic generator: parameters to tabular MDP. Same parameters give
/// bit-identical tensors. States are the cells reachable from the start;
/// moves into walls or obstacles keep the agent in place.
pub fn generate_slip_grid(params: &EnvParams, discount: f64) -> Mdp {
    let n = params.size as usize;
    let layout = derive_layout(params);
    let cells = layout.reachable_cells();
    let num_states = cells.len();
    let mut state_of_cell = vec![usize::MAX; n * n];
    for (idx, &c) in cells.iter().enumerate() {
        state_of_cell[c] = idx;
    }
    let mut transition = vec![0.0; num_states * NUM_DIRECTIONS * num_states];
    for (s, &cell) in cells.iter().enumerate() {
        for action in 0..NUM_DIRECTIONS {
            let row = &mut transition[(s * NUM_DIRECTIONS + action) * num_states
                ..(s * NUM_DIRECTIONS + action + 1) * num_states];
            for dir in 0..NUM_DIRECTIONS {
                let mut p = params.slip / NUM_DIRECTIONS as f64;
                if dir == action {
                    p += 1.0 - params.slip;
                }
                if p == 0.0 {
                    continue;
                }
                let mut dest = step_cell(n, cell, dir);
                if !layout.is_free(dest) {
                    dest = cell;
                }
                row[state_of_cell[dest]] += p;
            }
        }
    }
    // Exploring starts: episodes begin anywhere in the reachable region.
    // A point-mass start would leave rows at far corners behaviorally
    // unsampled for entire runs, making worst-case metrics a coverage
    // lottery instead of a model-quality comparison.
    let initial = vec![1.0 / num_states as f64; num_states];
    Mdp::new(num_states, NUM_DIRECTIONS, transition, initial, discount)
        .expect("generated dynamics are valid by construction")
}

fn slip_grid_tasks(params: &[EnvParams]) -> Vec<Task> {
    let mut reach_goal = Vec::new();
    let mut reach_corner = Vec::new();
    let mut avoid_region = Vec::new();
    for p in params {
        let n = p.size as usize;
        let layout = derive_layout(p);
        let cells = layout.reachable_cells();
        reach_goal.push(cell_reward(&cells, |c| c == layout.goal()));
        reach_corner.push(cell_reward(&cells, |c| c == layout.corner()));
        let center = (n - 1) / 2;
        let radius = n / 6;
        avoid_region.push(cell_reward(&cells, |c| {
            let (row, col) = (c / n, c % n);
            row.abs_diff(center) > radius || col.abs_diff(center) > radius
        }));
    }
    vec![
        Task {
            name: "reach-goal".into(),
            rewards: reach_goal,
        },
        Task {
            name: "reach-corner".into(),
            rewards: reach_corner,
        },
        Task {
            name: "avoid-region".into(),
            rewards: avoid_region,
        },
    ]
}

fn cell_reward(cells: &[usize], f: impl Fn(usize) -> bool) -> Reward {
    let num_states = cells.len();
    let mut table = vec![0.0; num_states * NUM_DIRECTIONS];
    for (s, &cell) in cells.iter().enumerate() {
        if f(cell) {
            for a in 0..NUM_DIRECTIONS {
                table[s * NUM_DIRECTIONS + a] = 1.0;
            }
        }
    }
    Reward::new(num_states, NUM_DIRECTIONS, table).expect("binary rewards are in range")
}
