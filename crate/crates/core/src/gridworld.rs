//! Two-level hierarchical grid world.
//!
//! Fine cells are numbered `1..=side²` row by row from the bottom-left corner
//! (moving UP adds `side`). Coarse cells follow, numbered the same way on the
//! half-resolution grid; coarse cell `c` aggregates the 2×2 block of fine cells
//! below it. For the default 4×4 world that gives 17 ↦ {1,2,5,6},
//! 18 ↦ {3,4,7,8}, 19 ↦ {9,10,13,14}, 20 ↦ {11,12,15,16}.
//!
//! Movement succeeds with probability `1 − slip`; the slip mass is shared
//! equally by the other in-grid king-move neighbours of the current cell at the
//! same level. `A-UP` moves deterministically to the parent, `A-DN` lands on
//! each child with probability 1/4. Goal and obstacle cells are absorbing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{FiniteMdp, MdpBuilder, NOOP_LABEL};
use crate::scalar::Scalar;

pub const UP: usize = 0;
pub const DN: usize = 1;
pub const L: usize = 2;
pub const R: usize = 3;
pub const A_UP: usize = 4;
pub const A_DN: usize = 5;
pub const NOOP: usize = 6;
pub const ACTION_LABELS: [&str; 7] = ["UP", "DN", "L", "R", "A-UP", "A-DN", NOOP_LABEL];

const MOVES: [(usize, (isize, isize)); 4] =
    [(UP, (1, 0)), (DN, (-1, 0)), (L, (0, -1)), (R, (0, 1))];

/// Grid-world parameters. Cells are 1-based fine-cell labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub fine_side: usize,
    pub start: usize,
    pub goal: usize,
    pub obstacles: Vec<usize>,
    pub slip: f64,
    pub r_fine_move: f64,
    pub r_coarse_move: f64,
    pub r_abstract_up: f64,
    pub r_abstract_down: f64,
    pub r_goal: f64,
    pub r_obstacle: f64,
    pub gamma: f64,
    /// When set, a movement that ends in the goal or an obstacle earns
    /// `r_goal` / `r_obstacle` instead of the movement cost; otherwise both
    /// are paid. `A-DN` always pays `r_abstract_down` plus the bonus.
    pub terminal_reward_replaces_move_cost: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            fine_side: 4,
            start: 1,
            goal: 16,
            obstacles: vec![6, 11],
            slip: 0.2,
            r_fine_move: -0.55,
            r_coarse_move: -0.15,
            r_abstract_up: -2.0,
            r_abstract_down: -1.0,
            r_goal: 2.0,
            r_obstacle: -10.0,
            gamma: 0.95,
            terminal_reward_replaces_move_cost: true,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        let side = self.fine_side;
        if side < 2 || !side.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "fine_side must be a power of two >= 2, got {side}"
            )));
        }
        let cells = side * side;
        let in_range = |c: usize| (1..=cells).contains(&c);
        if !in_range(self.start) || !in_range(self.goal) {
            return Err(Error::InvalidConfig(format!(
                "start and goal must lie in 1..={cells}"
            )));
        }
        if let Some(o) = self.obstacles.iter().find(|&&o| !in_range(o)) {
            return Err(Error::InvalidConfig(format!(
                "obstacle {o} outside 1..={cells}"
            )));
        }
        if self.obstacles.contains(&self.start) || self.obstacles.contains(&self.goal) {
            return Err(Error::InvalidConfig(
                "start and goal must not be obstacles".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.slip) {
            return Err(Error::InvalidConfig(format!(
                "slip must lie in [0, 1), got {}",
                self.slip
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        let rewards = [
            self.r_fine_move,
            self.r_coarse_move,
            self.r_abstract_up,
            self.r_abstract_down,
            self.r_goal,
            self.r_obstacle,
        ];
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidConfig("rewards must be finite".into()));
        }
        Ok(())
    }

    /// Index of the start cell in the built MDP.
    pub fn start_index(&self) -> usize {
        self.start - 1
    }
}

/// One resolution level: a `side × side` block of consecutively labelled cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridLevel {
    pub side: usize,
    pub first_label: usize,
}

impl GridLevel {
    fn label(&self, row: usize, col: usize) -> usize {
        self.first_label + row * self.side + col
    }

    fn position(&self, label: usize) -> Option<(usize, usize)> {
        let offset = label.checked_sub(self.first_label)?;
        (offset < self.side * self.side).then(|| (offset / self.side, offset % self.side))
    }

    fn step(&self, (row, col): (usize, usize), (dr, dc): (isize, isize)) -> Option<(usize, usize)> {
        let r = row.checked_add_signed(dr)?;
        let c = col.checked_add_signed(dc)?;
        (r < self.side && c < self.side).then_some((r, c))
    }

    fn king_neighbours(&self, at: (usize, usize)) -> impl Iterator<Item = usize> + '_ {
        (-1..=1)
            .flat_map(|dr| (-1..=1).map(move |dc| (dr, dc)))
            .filter(|&d| d != (0, 0))
            .filter_map(move |d| self.step(at, d))
            .map(|(r, c)| self.label(r, c))
    }
}

/// Outcome distribution of moving from `from` towards `intended` on `level`,
/// as `(cell label, probability)` sorted by label.
pub fn slip_distribution(
    level: &GridLevel,
    from: usize,
    intended: usize,
    slip: f64,
) -> Result<Vec<(usize, f64)>> {
    let at = level
        .position(from)
        .ok_or_else(|| Error::Invalid(format!("cell {from} is not on this level")))?;
    if !level.king_neighbours(at).any(|c| c == intended) {
        return Err(Error::Invalid(format!(
            "cell {intended} is not adjacent to {from}"
        )));
    }
    let others: Vec<usize> = level
        .king_neighbours(at)
        .filter(|&c| c != intended)
        .collect();
    let mut out = vec![(intended, 1.0 - slip)];
    if others.is_empty() {
        out[0].1 = 1.0;
    } else if slip > 0.0 {
        let share = slip / others.len() as f64;
        out.extend(others.into_iter().map(|c| (c, share)));
    }
    out.sort_by_key(|&(c, _)| c);
    Ok(out)
}

/// Parent/child relation between the two levels, in cell labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchyMap {
    pub fine: GridLevel,
    pub coarse: GridLevel,
    /// Children of coarse cell `coarse.first_label + i`, ordered bottom-left,
    /// bottom-right, top-left, top-right.
    pub children: Vec<[usize; 4]>,
    /// Parent of fine cell `i + 1`.
    pub parent: Vec<usize>,
}

impl HierarchyMap {
    fn new(fine_side: usize) -> Self {
        let fine = GridLevel {
            side: fine_side,
            first_label: 1,
        };
        let coarse = GridLevel {
            side: fine_side / 2,
            first_label: fine_side * fine_side + 1,
        };
        let mut children = Vec::with_capacity(coarse.side * coarse.side);
        for r in 0..coarse.side {
            for c in 0..coarse.side {
                children.push([
                    fine.label(2 * r, 2 * c),
                    fine.label(2 * r, 2 * c + 1),
                    fine.label(2 * r + 1, 2 * c),
                    fine.label(2 * r + 1, 2 * c + 1),
                ]);
            }
        }
        let parent = (0..fine_side * fine_side)
            .map(|i| coarse.label(i / fine_side / 2, i % fine_side / 2))
            .collect();
        Self {
            fine,
            coarse,
            children,
            parent,
        }
    }

    pub fn children_of(&self, coarse_label: usize) -> Option<[usize; 4]> {
        let i = coarse_label.checked_sub(self.coarse.first_label)?;
        self.children.get(i).copied()
    }

    pub fn parent_of(&self, fine_label: usize) -> Option<usize> {
        self.parent.get(fine_label.checked_sub(1)?).copied()
    }

    pub fn n_states(&self) -> usize {
        self.parent.len() + self.children.len()
    }
}

/// The 20-state grid world with default parameters.
pub fn build_paper_grid<T: Scalar>() -> (FiniteMdp<T>, HierarchyMap) {
    build_custom_grid(&GridConfig::default()).expect("default configuration is valid")
}

pub fn build_custom_grid<T: Scalar>(config: &GridConfig) -> Result<(FiniteMdp<T>, HierarchyMap)> {
    config.validate()?;
    let map = HierarchyMap::new(config.fine_side);
    let n = map.n_states();
    let labels = (1..=n).map(|s| s.to_string()).collect();
    let actions = ACTION_LABELS.iter().map(|s| s.to_string()).collect();
    let mut b = MdpBuilder::new(labels, actions, T::lit(config.gamma));

    let is_obstacle = |c: usize| config.obstacles.contains(&c);
    let bonus = |c: usize| {
        if c == config.goal {
            Some(config.r_goal)
        } else if is_obstacle(c) {
            Some(config.r_obstacle)
        } else {
            None
        }
    };
    let move_reward = |c: usize| match bonus(c) {
        Some(extra) if config.terminal_reward_replaces_move_cost => extra,
        Some(extra) => config.r_fine_move + extra,
        None => config.r_fine_move,
    };

    for cell in 1..=config.fine_side * config.fine_side {
        let x = cell - 1;
        if cell == config.goal || is_obstacle(cell) {
            b.absorbing(x, NOOP);
            continue;
        }
        let at = map.fine.position(cell).expect("fine cell");
        for &(u, delta) in &MOVES {
            let Some((r, c)) = map.fine.step(at, delta) else {
                continue;
            };
            let target = map.fine.label(r, c);
            if is_obstacle(target) {
                continue;
            }
            for (y, p) in slip_distribution(&map.fine, cell, target, config.slip)? {
                if p > 0.0 {
                    b.add_transition(x, u, y - 1, T::lit(p));
                    b.set_reward(x, u, y - 1, T::lit(move_reward(y)));
                }
            }
        }
        let parent = map.parent_of(cell).expect("fine cell has a parent");
        b.add_transition(x, A_UP, parent - 1, T::one());
        b.set_reward(x, A_UP, parent - 1, T::lit(config.r_abstract_up));
    }

    let quarter = T::lit(0.25);
    for (i, kids) in map.children.iter().enumerate() {
        let cell = map.coarse.first_label + i;
        let x = cell - 1;
        let holds_goal = kids.contains(&config.goal);
        if !holds_goal {
            let at = map.coarse.position(cell).expect("coarse cell");
            for &(u, delta) in &MOVES {
                let Some((r, c)) = map.coarse.step(at, delta) else {
                    continue;
                };
                let target = map.coarse.label(r, c);
                for (y, p) in slip_distribution(&map.coarse, cell, target, config.slip)? {
                    if p > 0.0 {
                        b.add_transition(x, u, y - 1, T::lit(p));
                        b.set_reward(x, u, y - 1, T::lit(config.r_coarse_move));
                    }
                }
            }
        }
        for &kid in kids {
            b.add_transition(x, A_DN, kid - 1, quarter);
            let reward = config.r_abstract_down + bonus(kid).unwrap_or(0.0);
            b.set_reward(x, A_DN, kid - 1, T::lit(reward));
        }
    }
    Ok((b.build()?, map))
}
