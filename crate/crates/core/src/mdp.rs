//! Gridworld MDPs: layouts, exact dynamic programming and policy rollouts.
//!
//! States are the accessible cells of a [`GridSpec`], numbered in row-major
//! order. Moves into walls or off the grid leave the agent in place; moves
//! into an accessible cell succeed with that cell's entry probability and
//! otherwise leave the agent in place. Entering the goal pays `goal_reward`,
//! and the goal is absorbing with zero reward afterwards.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::StateGraph;
use crate::rng;

pub const DEFAULT_GAMMA: f64 = 0.9;
pub const DEFAULT_ENTER_PROB_OPEN: f64 = 0.9;
pub const DEFAULT_ENTER_PROB_DIFFICULT: f64 = 0.2;
pub const DEFAULT_GOAL_REWARD: f64 = 100.0;

/// Interior cells that are hard to enter in the default obstacle room.
pub const DEFAULT_OBSTACLE_CELLS: [(usize, usize); 14] =
    [(3, 2), (3, 3), (3, 4), (4, 2), (4, 3), (4, 4), (6, 5), (6, 6), (6, 7), (6, 8), (7, 5), (7, 6), (7, 7), (7, 8)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Wall,
    Open,
    Difficult,
    Goal,
}

impl CellKind {
    pub fn is_accessible(self) -> bool {
        !matches!(self, CellKind::Wall)
    }

    pub fn to_char(self) -> char {
        match self {
            CellKind::Wall => '#',
            CellKind::Open => '.',
            CellKind::Difficult => '~',
            CellKind::Goal => 'G',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            '#' => Some(CellKind::Wall),
            '.' => Some(CellKind::Open),
            '~' => Some(CellKind::Difficult),
            'G' => Some(CellKind::Goal),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    /// Tie-break order.
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
        };
        f.write_str(s)
    }
}

/// A rectangular gridworld layout plus its movement probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    /// Row-major, `height * width` cells.
    pub cells: Vec<CellKind>,
    pub enter_prob_open: f64,
    pub enter_prob_difficult: f64,
    pub goal_reward: f64,
}

impl GridSpec {
    /// Builds a layout with default probabilities and reward, validating it.
    pub fn new(width: usize, height: usize, cells: Vec<CellKind>) -> Result<Self> {
        let spec = GridSpec {
            width,
            height,
            cells,
            enter_prob_open: DEFAULT_ENTER_PROB_OPEN,
            enter_prob_difficult: DEFAULT_ENTER_PROB_DIFFICULT,
            goal_reward: DEFAULT_GOAL_REWARD,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidSpec("grid must be at least 1x1".into()));
        }
        if self.cells.len() != self.width * self.height {
            return Err(Error::InvalidSpec(format!(
                "expected {} cells, got {}",
                self.width * self.height,
                self.cells.len()
            )));
        }
        for (name, p) in
            [("enter_prob_open", self.enter_prob_open), ("enter_prob_difficult", self.enter_prob_difficult)]
        {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidSpec(format!("{name} must lie in (0, 1], got {p}")));
            }
        }
        let goals = self.cells.iter().filter(|&&c| c == CellKind::Goal).count();
        if goals != 1 {
            return Err(Error::InvalidSpec(format!("expected exactly one goal cell, found {goals}")));
        }
        let accessible: Vec<(usize, usize)> = self.accessible_cells().collect();
        let reached = self.flood_fill(accessible[0]);
        if reached != accessible.len() {
            return Err(Error::InvalidSpec(format!(
                "accessible cells are not connected ({} of {} reachable)",
                reached,
                accessible.len()
            )));
        }
        Ok(())
    }

    pub fn cell(&self, row: usize, col: usize) -> CellKind {
        self.cells[row * self.width + col]
    }

    fn set(&mut self, row: usize, col: usize, kind: CellKind) {
        self.cells[row * self.width + col] = kind;
    }

    /// Accessible cells in row-major order; this order defines state ids.
    pub fn accessible_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height)
            .flat_map(move |r| (0..self.width).map(move |c| (r, c)))
            .filter(move |&(r, c)| self.cell(r, c).is_accessible())
    }

    pub fn wall_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c == CellKind::Wall).count()
    }

    pub fn count(&self, kind: CellKind) -> usize {
        self.cells.iter().filter(|&&c| c == kind).count()
    }

    /// Accessible 4-neighbours of a cell.
    pub fn neighbors(&self, row: usize, col: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        Action::ALL
            .into_iter()
            .filter_map(move |a| self.step_target(row, col, a))
            .filter(move |&(r, c)| self.cell(r, c).is_accessible())
    }

    fn step_target(&self, row: usize, col: usize, action: Action) -> Option<(usize, usize)> {
        let (dr, dc) = action.delta();
        let r = row.checked_add_signed(dr)?;
        let c = col.checked_add_signed(dc)?;
        (r < self.height && c < self.width).then_some((r, c))
    }

    fn flood_fill(&self, start: (usize, usize)) -> usize {
        let mut seen = vec![false; self.cells.len()];
        let mut queue = VecDeque::from([start]);
        seen[start.0 * self.width + start.1] = true;
        let mut count = 0;
        while let Some((r, c)) = queue.pop_front() {
            count += 1;
            for (nr, nc) in self.neighbors(r, c) {
                let idx = nr * self.width + nc;
                if !seen[idx] {
                    seen[idx] = true;
                    queue.push_back((nr, nc));
                }
            }
        }
        count
    }

    /// Renders the layout as a text map, one line per row.
    pub fn to_map(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for r in 0..self.height {
            out.extend((0..self.width).map(|c| self.cell(r, c).to_char()));
            out.push('\n');
        }
        out
    }

    /// Parses a text map (`#` wall, `.` open, `~` difficult, `G` goal) with
    /// default probabilities. Blank lines are ignored.
    pub fn parse_map(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        if rows.is_empty() {
            return Err(Error::InvalidSpec("empty map".into()));
        }
        let width = rows[0].chars().count();
        let mut cells = Vec::with_capacity(width * rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::Parse { line: i + 1, reason: format!("row width differs from {width}") });
            }
            for ch in row.chars() {
                let kind = CellKind::from_char(ch)
                    .ok_or_else(|| Error::Parse { line: i + 1, reason: format!("unknown cell character {ch:?}") })?;
                cells.push(kind);
            }
        }
        GridSpec::new(width, rows.len(), cells)
    }
}

fn walled_grid(width: usize, height: usize) -> Vec<CellKind> {
    let mut cells = vec![CellKind::Open; width * height];
    for r in 0..height {
        for c in 0..width {
            if r == 0 || c == 0 || r + 1 == height || c + 1 == width {
                cells[r * width + c] = CellKind::Wall;
            }
        }
    }
    cells
}

/// One possible result of taking an action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub next: usize,
    pub prob: f64,
    pub reward: f64,
}

/// A finite MDP over the four grid actions.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    /// `transitions[s][a]` lists the outcomes of action `a` in state `s`.
    transitions: Vec<[Vec<Outcome>; 4]>,
    pub gamma: f64,
    pub goal_state: usize,
    state_coords: Vec<(usize, usize)>,
}

impl TabularMdp {
    /// Builds an MDP from explicit outcome tables, checking that every
    /// distribution sums to one and that the goal is absorbing.
    pub fn from_outcomes(
        transitions: Vec<[Vec<Outcome>; 4]>,
        gamma: f64,
        goal_state: usize,
        state_coords: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let n = transitions.len();
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidSpec(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        if goal_state >= n || state_coords.len() != n {
            return Err(Error::InvalidSpec("goal state or coordinates out of range".into()));
        }
        for (s, per_action) in transitions.iter().enumerate() {
            for (a, outcomes) in per_action.iter().enumerate() {
                let total: f64 = outcomes.iter().map(|o| o.prob).sum();
                if (total - 1.0).abs() > 1e-12 || outcomes.iter().any(|o| o.next >= n || o.prob < 0.0) {
                    return Err(Error::InvalidSpec(format!("bad distribution at state {s}, action {a}")));
                }
                if outcomes.iter().any(|o| o.reward != 0.0 && o.next != goal_state) {
                    return Err(Error::InvalidSpec(format!("reward outside goal entry at state {s}")));
                }
            }
        }
        let absorbing =
            transitions[goal_state].iter().all(|o| o.len() == 1 && o[0].next == goal_state && o[0].reward == 0.0);
        if !absorbing {
            return Err(Error::InvalidSpec("goal state must be absorbing with zero reward".into()));
        }
        Ok(TabularMdp { transitions, gamma, goal_state, state_coords })
    }

    /// Derives the MDP of a grid layout.
    pub fn from_grid(spec: &GridSpec, gamma: f64) -> Result<Self> {
        spec.validate()?;
        let coords: Vec<(usize, usize)> = spec.accessible_cells().collect();
        let mut index = vec![usize::MAX; spec.cells.len()];
        for (s, &(r, c)) in coords.iter().enumerate() {
            index[r * spec.width + c] = s;
        }
        let goal_state =
            coords.iter().position(|&(r, c)| spec.cell(r, c) == CellKind::Goal).expect("validated spec has a goal");

        let transitions = coords
            .iter()
            .enumerate()
            .map(|(s, &(r, c))| {
                Action::ALL.map(|a| {
                    let stay = Outcome { next: s, prob: 1.0, reward: 0.0 };
                    if s == goal_state {
                        return vec![stay];
                    }
                    let Some((tr, tc)) = spec.step_target(r, c, a) else {
                        return vec![stay];
                    };
                    let p = match spec.cell(tr, tc) {
                        CellKind::Wall => return vec![stay],
                        CellKind::Open | CellKind::Goal => spec.enter_prob_open,
                        CellKind::Difficult => spec.enter_prob_difficult,
                    };
                    let next = index[tr * spec.width + tc];
                    let reward = if next == goal_state { spec.goal_reward } else { 0.0 };
                    let mut out = vec![Outcome { next, prob: p, reward }];
                    if p < 1.0 {
                        out.push(Outcome { next: s, prob: 1.0 - p, reward: 0.0 });
                    }
                    out
                })
            })
            .collect();
        TabularMdp::from_outcomes(transitions, gamma, goal_state, coords)
    }

    pub fn n_states(&self) -> usize {
        self.transitions.len()
    }

    pub fn outcomes(&self, state: usize, action: Action) -> &[Outcome] {
        &self.transitions[state][action.index()]
    }

    pub fn state_coords(&self, state: usize) -> (usize, usize) {
        self.state_coords[state]
    }

    pub fn state_at(&self, row: usize, col: usize) -> Option<usize> {
        self.state_coords.iter().position(|&rc| rc == (row, col))
    }

    pub fn is_goal(&self, state: usize) -> bool {
        state == self.goal_state
    }

    /// True when some action moves `a` to `b` with positive probability.
    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        a != b && self.transitions[a].iter().flatten().any(|o| o.next == b && o.prob > 0.0)
    }

    /// Expected one-step return of `action` in `state` under values `v`.
    pub fn q_value(&self, state: usize, action: Action, v: &[f64]) -> f64 {
        self.outcomes(state, action).iter().map(|o| o.prob * (o.reward + self.gamma * v[o.next])).sum()
    }

    /// Samples a successor and the reward collected on the way.
    pub fn sample_step<R: rand::Rng + ?Sized>(&self, state: usize, action: Action, rng: &mut R) -> (usize, f64) {
        let outcomes = self.outcomes(state, action);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for o in outcomes {
            acc += o.prob;
            if u < acc {
                return (o.next, o.reward);
            }
        }
        let last = outcomes.last().expect("nonempty distribution");
        (last.next, last.reward)
    }
}

/// Per-state values in reward units.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueVector(pub Vec<f64>);

impl ValueVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One action per state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyTable(pub Vec<Action>);

impl PolicyTable {
    pub fn action(&self, state: usize) -> Action {
        self.0[state]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The 10x10 two-room layout: 57 accessible cells, a dividing wall at
/// column 5 with a doorway at row 5, goal at (1, 8).
pub fn two_room_spec() -> GridSpec {
    let (w, h) = (10, 10);
    let mut spec = GridSpec {
        width: w,
        height: h,
        cells: walled_grid(w, h),
        enter_prob_open: DEFAULT_ENTER_PROB_OPEN,
        enter_prob_difficult: DEFAULT_ENTER_PROB_DIFFICULT,
        goal_reward: DEFAULT_GOAL_REWARD,
    };
    for r in 1..=8 {
        if r != 5 {
            spec.set(r, 5, CellKind::Wall);
        }
    }
    spec.set(1, 8, CellKind::Goal);
    spec
}

pub fn build_two_room() -> (GridSpec, TabularMdp) {
    let spec = two_room_spec();
    let mdp = TabularMdp::from_grid(&spec, DEFAULT_GAMMA).expect("two-room layout is valid");
    (spec, mdp)
}

/// The 10x10 obstacle room: outer walls only, goal in the upper-right
/// corner, and a set of difficult-access cells (default
/// [`DEFAULT_OBSTACLE_CELLS`]).
pub fn obstacle_room_spec(difficult_cells: Option<&[(usize, usize)]>) -> Result<GridSpec> {
    let (w, h) = (10, 10);
    let goal = (1, 8);
    let mut spec = GridSpec {
        width: w,
        height: h,
        cells: walled_grid(w, h),
        enter_prob_open: DEFAULT_ENTER_PROB_OPEN,
        enter_prob_difficult: DEFAULT_ENTER_PROB_DIFFICULT,
        goal_reward: DEFAULT_GOAL_REWARD,
    };
    spec.set(goal.0, goal.1, CellKind::Goal);
    for &(r, c) in difficult_cells.unwrap_or(&DEFAULT_OBSTACLE_CELLS) {
        if r >= h || c >= w {
            return Err(Error::InvalidSpec(format!("difficult cell ({r}, {c}) is outside the grid")));
        }
        match spec.cell(r, c) {
            CellKind::Wall => return Err(Error::InvalidSpec(format!("difficult cell ({r}, {c}) overlaps a wall"))),
            CellKind::Goal => return Err(Error::InvalidSpec(format!("difficult cell ({r}, {c}) overlaps the goal"))),
            _ => spec.set(r, c, CellKind::Difficult),
        }
    }
    spec.validate()?;
    Ok(spec)
}

pub fn build_obstacle_room(difficult_cells: Option<&[(usize, usize)]>) -> Result<(GridSpec, TabularMdp)> {
    let spec = obstacle_room_spec(difficult_cells)?;
    let mdp = TabularMdp::from_grid(&spec, DEFAULT_GAMMA)?;
    Ok((spec, mdp))
}

/// Three stacked rooms separated by two horizontal walls. The upper wall's
/// doorway sits at three quarters of the width, the lower one's at one
/// quarter; the goal is the top-right accessible cell.
pub fn three_room_spec(width: usize, height: usize) -> Result<GridSpec> {
    if width < 12 || height < 9 {
        return Err(Error::InvalidSpec(format!(
            "three-room grid needs width >= 12 and height >= 9, got {width}x{height}"
        )));
    }
    let mut spec = GridSpec {
        width,
        height,
        cells: walled_grid(width, height),
        enter_prob_open: DEFAULT_ENTER_PROB_OPEN,
        enter_prob_difficult: DEFAULT_ENTER_PROB_DIFFICULT,
        goal_reward: DEFAULT_GOAL_REWARD,
    };
    let upper = height / 3;
    let lower = 2 * height / 3;
    let upper_door = 3 * width / 4;
    let lower_door = width / 4;
    for c in 1..width - 1 {
        if c != upper_door {
            spec.set(upper, c, CellKind::Wall);
        }
        if c != lower_door {
            spec.set(lower, c, CellKind::Wall);
        }
    }
    spec.set(1, width - 2, CellKind::Goal);
    spec.validate()?;
    Ok(spec)
}

pub fn build_three_room(width: usize, height: usize) -> Result<(GridSpec, TabularMdp)> {
    let spec = three_room_spec(width, height)?;
    let mdp = TabularMdp::from_grid(&spec, DEFAULT_GAMMA)?;
    Ok((spec, mdp))
}

/// Largest Bellman residual `max_s |(TV)(s) - V(s)|`.
pub fn bellman_residual(mdp: &TabularMdp, v: &[f64]) -> f64 {
    (0..mdp.n_states())
        .map(|s| {
            let best = Action::ALL.iter().map(|&a| mdp.q_value(s, a, v)).fold(f64::NEG_INFINITY, f64::max);
            (best - v[s]).abs()
        })
        .fold(0.0, f64::max)
}

/// Synchronous value iteration. Stops once successive iterates differ by at
/// most `tol` in sup-norm, which bounds the returned iterate's Bellman
/// residual by `gamma * tol`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> ValueVector {
    assert!(tol > 0.0, "tolerance must be positive");
    let n = mdp.n_states();
    let mut v = vec![0.0; n];
    loop {
        let next: Vec<f64> = (0..n)
            .map(|s| Action::ALL.iter().map(|&a| mdp.q_value(s, a, &v)).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if delta <= tol {
            return ValueVector(v);
        }
    }
}

/// Index of the largest score; earlier entries win ties up to a relative
/// tolerance of 1e-12.
pub(crate) fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &q) in scores.iter().enumerate().skip(1) {
        let b = scores[best];
        if q > b + 1e-12 * b.abs().max(1.0) {
            best = i;
        }
    }
    best
}

/// One-step greedy policy with respect to `v`, ties broken Up < Down < Left < Right.
pub fn greedy_policy(mdp: &TabularMdp, v: &ValueVector) -> PolicyTable {
    assert_eq!(v.len(), mdp.n_states(), "value vector length must match the state count");
    let actions = (0..mdp.n_states())
        .map(|s| {
            let q = Action::ALL.map(|a| mdp.q_value(s, a, v.as_slice()));
            Action::ALL[argmax_first(&q)]
        })
        .collect();
    PolicyTable(actions)
}

/// Rolls out `policy` once from `start`, returning the number of steps taken
/// (`max_steps` if the goal was not reached).
pub fn rollout_steps<R: rand::Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    start: usize,
    max_steps: usize,
    rng: &mut R,
) -> usize {
    let mut s = start;
    for step in 0..max_steps {
        if mdp.is_goal(s) {
            return step;
        }
        s = mdp.sample_step(s, policy.action(s), rng).0;
    }
    max_steps
}

/// Mean steps-to-goal over `runs` repetitions of an episode from every
/// non-goal state. Each episode draws from its own stream derived from
/// `(seed, run, start)`, so the result does not depend on scheduling.
pub fn simulate_policy(mdp: &TabularMdp, policy: &PolicyTable, max_steps: usize, runs: usize, seed: u64) -> f64 {
    assert!(max_steps > 0 && runs > 0, "max_steps and runs must be positive");
    let starts: Vec<usize> = (0..mdp.n_states()).filter(|&s| !mdp.is_goal(s)).collect();
    let jobs: Vec<(usize, usize)> = (0..runs).flat_map(|run| starts.iter().map(move |&s| (run, s))).collect();
    let steps: Vec<usize> = jobs
        .par_iter()
        .map(|&(run, start)| {
            let mut rng = rng::seeded(rng::derive2(seed, run as u64, start as u64));
            rollout_steps(mdp, policy, start, max_steps, &mut rng)
        })
        .collect();
    steps.iter().sum::<usize>() as f64 / steps.len() as f64
}

/// Graph over accessible cells weighted by how easily the move can be made:
/// 1 between ordinary cells, `enter_prob_difficult` when either end is a
/// difficult cell. Node `i` is state `i` of the grid's MDP.
pub fn ideal_weighted_graph(spec: &GridSpec) -> StateGraph {
    let coords: Vec<(usize, usize)> = spec.accessible_cells().collect();
    let mut index = vec![usize::MAX; spec.cells.len()];
    for (s, &(r, c)) in coords.iter().enumerate() {
        index[r * spec.width + c] = s;
    }
    let mut edges = Vec::new();
    for (u, &(r, c)) in coords.iter().enumerate() {
        // right and down neighbours visit each pair once
        for (nr, nc) in [(r, c + 1), (r + 1, c)] {
            if nr >= spec.height || nc >= spec.width || !spec.cell(nr, nc).is_accessible() {
                continue;
            }
            let v = index[nr * spec.width + nc];
            let difficult = spec.cell(r, c) == CellKind::Difficult || spec.cell(nr, nc) == CellKind::Difficult;
            let w = if difficult { spec.enter_prob_difficult } else { 1.0 };
            edges.push((u, v, w));
        }
    }
    StateGraph::new((0..coords.len()).collect(), edges).expect("grid edges are valid")
}

/// Mean steps of `policy` from random draws, for tests that need a
/// high-sample reference without the per-start structure.
pub fn monte_carlo_steps(mdp: &TabularMdp, policy: &PolicyTable, max_steps: usize, episodes: usize, seed: u64) -> f64 {
    let mut rng = rng::seeded(seed);
    let starts: Vec<usize> = (0..mdp.n_states()).filter(|&s| !mdp.is_goal(s)).collect();
    let mut total = 0usize;
    for _ in 0..episodes {
        let start = starts[rng.gen_range(0..starts.len())];
        total += rollout_steps(mdp, policy, start, max_steps, &mut rng);
    }
    total as f64 / episodes as f64
}
