//! JSON interchange for MDPs, policies, state weights, penalties and grid
//! configurations. Files always hold `f64`; loading into `f32` rounds.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::blahut_arimoto::{PenaltyTable, StateWeights};
use crate::error::{Error, Result};
use crate::gridworld::GridConfig;
use crate::mdp::{validate_mdp, FiniteMdp, StochasticPolicy};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    pub x: usize,
    pub u: usize,
    pub next: usize,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardEntry {
    pub x: usize,
    pub u: usize,
    pub next: usize,
    pub r: f64,
}

/// On-disk MDP layout. Unlisted transition and reward entries are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpDocument {
    pub n_states: usize,
    pub state_labels: Vec<String>,
    pub actions: Vec<String>,
    pub admissible: Vec<Vec<usize>>,
    pub transitions: Vec<TransitionEntry>,
    pub rewards: Vec<RewardEntry>,
    pub gamma: f64,
    pub terminal: Vec<usize>,
}

impl MdpDocument {
    pub fn from_mdp<T: Scalar>(mdp: &FiniteMdp<T>) -> Self {
        let n = mdp.n_states();
        let mut transitions = Vec::new();
        let mut rewards = Vec::new();
        for x in 0..n {
            for u in 0..mdp.n_actions() {
                let probs = mdp.transition_row(x, u);
                let rs = mdp.reward_row(x, u);
                for next in 0..n {
                    if probs[next] != T::zero() {
                        transitions.push(TransitionEntry {
                            x,
                            u,
                            next,
                            p: probs[next].as_f64(),
                        });
                    }
                    if rs[next] != T::zero() {
                        rewards.push(RewardEntry {
                            x,
                            u,
                            next,
                            r: rs[next].as_f64(),
                        });
                    }
                }
            }
        }
        Self {
            n_states: n,
            state_labels: mdp.state_labels().to_vec(),
            actions: mdp.action_labels().to_vec(),
            admissible: (0..n).map(|x| mdp.admissible(x).to_vec()).collect(),
            transitions,
            rewards,
            gamma: mdp.discount().as_f64(),
            terminal: (0..n).filter(|&x| mdp.is_terminal(x)).collect(),
        }
    }

    /// Builds and validates the MDP described by this document.
    pub fn to_mdp<T: Scalar>(&self) -> Result<FiniteMdp<T>> {
        let n = self.n_states;
        let a = self.actions.len();
        if self.state_labels.len() != n {
            return Err(Error::Invalid(format!(
                "n_states is {n} but {} state labels were given",
                self.state_labels.len()
            )));
        }
        let check = |x: usize, u: usize, next: usize| {
            if x >= n || next >= n || u >= a {
                Err(Error::Invalid(format!(
                    "entry ({x}, {u}, {next}) out of range"
                )))
            } else {
                Ok((x * a + u) * n + next)
            }
        };
        let mut transition = vec![T::zero(); n * a * n];
        let mut seen = vec![false; n * a * n];
        for e in &self.transitions {
            let i = check(e.x, e.u, e.next)?;
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Invalid(format!(
                    "duplicate transition ({}, {}, {})",
                    e.x, e.u, e.next
                )));
            }
            transition[i] = T::lit(e.p);
        }
        let mut reward = vec![T::zero(); n * a * n];
        seen.fill(false);
        for e in &self.rewards {
            let i = check(e.x, e.u, e.next)?;
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Invalid(format!(
                    "duplicate reward ({}, {}, {})",
                    e.x, e.u, e.next
                )));
            }
            reward[i] = T::lit(e.r);
        }
        let mut terminal = vec![false; n];
        for &x in &self.terminal {
            *terminal
                .get_mut(x)
                .ok_or_else(|| Error::Invalid(format!("terminal state {x} out of range")))? = true;
        }
        let mdp = FiniteMdp::from_parts(
            self.state_labels.clone(),
            self.actions.clone(),
            self.admissible.clone(),
            transition,
            reward,
            T::lit(self.gamma),
            terminal,
        )?;
        validate_mdp(&mdp).into_result()?;
        Ok(mdp)
    }
}

/// Policy or prior matrix: one row per action, one column per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDocument {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

impl PolicyDocument {
    pub fn from_policy<T: Scalar>(mdp: &FiniteMdp<T>, pi: &StochasticPolicy<T>) -> Self {
        let matrix = (0..pi.n_actions())
            .map(|u| (0..pi.n_states()).map(|x| pi[(x, u)].as_f64()).collect())
            .collect();
        Self {
            states: mdp.state_labels().to_vec(),
            actions: mdp.action_labels().to_vec(),
            matrix,
        }
    }

    /// Converts back to a state-major policy, checking labels against `mdp`.
    pub fn to_policy<T: Scalar>(&self, mdp: &FiniteMdp<T>) -> Result<StochasticPolicy<T>> {
        if self.states != mdp.state_labels() || self.actions != mdp.action_labels() {
            return Err(Error::Invalid("policy labels do not match the MDP".into()));
        }
        let (n, a) = (mdp.n_states(), mdp.n_actions());
        if self.matrix.len() != a || self.matrix.iter().any(|row| row.len() != n) {
            return Err(Error::Invalid(format!("policy matrix must be {a} x {n}")));
        }
        let rows = (0..n)
            .map(|x| (0..a).map(|u| T::lit(self.matrix[u][x])).collect())
            .collect();
        StochasticPolicy::from_rows(rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyEntry {
    pub x: usize,
    pub u: usize,
    pub value: f64,
}

/// Penalty table with the listed overrides on top of the ±100 default.
pub fn penalty_from_entries<T: Scalar>(
    mdp: &FiniteMdp<T>,
    entries: &[PenaltyEntry],
) -> Result<PenaltyTable<T>> {
    let mut table = PenaltyTable::standard(mdp);
    for e in entries {
        if e.x >= mdp.n_states() || e.u >= mdp.n_actions() {
            return Err(Error::Invalid(format!(
                "penalty entry ({}, {}) out of range",
                e.x, e.u
            )));
        }
        table.set(e.x, e.u, T::lit(e.value))?;
    }
    Ok(table)
}

pub fn weights_from_vec<T: Scalar>(mdp: &FiniteMdp<T>, values: &[f64]) -> Result<StateWeights<T>> {
    if values.len() != mdp.n_states() {
        return Err(Error::Invalid(format!(
            "expected {} state weights, got {}",
            mdp.n_states(),
            values.len()
        )));
    }
    StateWeights::new(values.iter().map(|&w| T::lit(w)).collect())
}

pub fn read_json<D: DeserializeOwned>(path: impl AsRef<Path>) -> Result<D> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<S: Serialize + ?Sized>(path: impl AsRef<Path>, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_mdp<T: Scalar>(path: impl AsRef<Path>) -> Result<FiniteMdp<T>> {
    read_json::<MdpDocument>(path)?.to_mdp()
}

pub fn write_mdp<T: Scalar>(path: impl AsRef<Path>, mdp: &FiniteMdp<T>) -> Result<()> {
    write_json(path, &MdpDocument::from_mdp(mdp))
}

pub fn read_policy<T: Scalar>(
    path: impl AsRef<Path>,
    mdp: &FiniteMdp<T>,
) -> Result<StochasticPolicy<T>> {
    read_json::<PolicyDocument>(path)?.to_policy(mdp)
}

pub fn write_policy<T: Scalar>(
    path: impl AsRef<Path>,
    mdp: &FiniteMdp<T>,
    pi: &StochasticPolicy<T>,
) -> Result<()> {
    write_json(path, &PolicyDocument::from_policy(mdp, pi))
}

pub fn read_weights<T: Scalar>(
    path: impl AsRef<Path>,
    mdp: &FiniteMdp<T>,
) -> Result<StateWeights<T>> {
    weights_from_vec(mdp, &read_json::<Vec<f64>>(path)?)
}

pub fn read_penalty<T: Scalar>(
    path: impl AsRef<Path>,
    mdp: &FiniteMdp<T>,
) -> Result<PenaltyTable<T>> {
    penalty_from_entries(mdp, &read_json::<Vec<PenaltyEntry>>(path)?)
}

/// Reads a grid configuration. Missing keys take their defaults, unknown keys
/// are rejected.
pub fn read_grid_config(path: impl AsRef<Path>) -> Result<GridConfig> {
    let config: GridConfig = read_json(path).map_err(|e| match e {
        Error::Json(j) => Error::InvalidConfig(j.to_string()),
        other => other,
    })?;
    config.validate()?;
    Ok(config)
}
