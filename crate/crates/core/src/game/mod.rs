//! Bayesian game instances: players with box type and action spaces,
//! utilities with analytic gradients, and a joint type density.

pub mod catalog;
pub mod config;
mod density;
mod utility;

use std::collections::BTreeMap;

pub use density::{DensityModel, TabulatedDensity};
pub use utility::{CournotUtility, CrossTerm, CustomUtility, Layout, QuadraticUtility, UtilityModel};

use crate::error::{Error, Result};
use crate::space::BoxSpace;

#[derive(Debug, Clone)]
pub struct Player {
    pub type_space: BoxSpace,
    pub action_space: BoxSpace,
    pub utility: UtilityModel,
}

/// An immutable game description. Cheap to share across worker threads.
#[derive(Debug, Clone)]
pub struct GameSpec {
    players: Vec<Player>,
    density: DensityModel,
    layout: Layout,
    joint_types: BoxSpace,
    metadata: BTreeMap<String, String>,
}

impl GameSpec {
    pub fn new(players: Vec<Player>, density: DensityModel) -> Result<Self> {
        if players.is_empty() {
            return Err(Error::Model("a game needs at least one player".into()));
        }
        let action_dims: Vec<usize> = players.iter().map(|p| p.action_space.dim()).collect();
        let type_dims: Vec<usize> = players.iter().map(|p| p.type_space.dim()).collect();
        let layout = Layout::new(&action_dims, &type_dims);
        let joint_types = BoxSpace::product(players.iter().map(|p| &p.type_space))?;
        for (i, p) in players.iter().enumerate() {
            p.utility.validate(i, &layout)?;
        }
        density.validate(&joint_types)?;
        Ok(Self {
            players,
            density,
            layout,
            joint_types,
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_metadata(mut self, metadata: BTreeMap<String, String>) -> Self {
        self.metadata = metadata;
        self
    }

    /// The same players under a different type distribution.
    pub fn with_density(&self, density: DensityModel) -> Result<Self> {
        density.validate(&self.joint_types)?;
        Ok(Self {
            density,
            ..self.clone()
        })
    }

    pub fn n(&self) -> usize {
        self.players.len()
    }

    pub fn players(&self) -> &[Player] {
        &self.players
    }

    pub fn player(&self, i: usize) -> &Player {
        &self.players[i]
    }

    pub fn density(&self) -> &DensityModel {
        &self.density
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn joint_types(&self) -> &BoxSpace {
        &self.joint_types
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn action_dim(&self, i: usize) -> usize {
        self.layout.action_dim(i)
    }

    pub fn type_dim(&self, i: usize) -> usize {
        self.layout.type_dim(i)
    }

    /// Product of the rivals' type boxes, or `None` for a one-player game.
    pub fn rival_type_space(&self, i: usize) -> Option<BoxSpace> {
        let others: Vec<&BoxSpace> = (0..self.n())
            .filter(|&j| j != i)
            .map(|j| &self.players[j].type_space)
            .collect();
        if others.is_empty() {
            None
        } else {
            BoxSpace::product(others).ok()
        }
    }

    /// Writes `θ_i` and the concatenated rival types `θ_{−i}` into a full
    /// type profile.
    pub fn assemble_types(&self, i: usize, theta_i: &[f64], rivals: &[f64], out: &mut [f64]) {
        let mut pos = 0;
        for j in 0..self.n() {
            let r = self.layout.types(j);
            if j == i {
                out[r].copy_from_slice(theta_i);
            } else {
                let d = r.len();
                out[r].copy_from_slice(&rivals[pos..pos + d]);
                pos += d;
            }
        }
    }

    /// Extracts `θ_{−i}` from a full type profile.
    pub fn rival_types(&self, i: usize, theta: &[f64]) -> Vec<f64> {
        (0..self.n())
            .filter(|&j| j != i)
            .flat_map(|j| theta[self.layout.types(j)].iter().copied())
            .collect()
    }

    fn check_profile(&self, a: &[f64], theta: &[f64]) -> Result<()> {
        if a.len() != self.layout.total_actions() {
            return Err(Error::Dimension {
                what: "action profile".into(),
                expected: self.layout.total_actions(),
                got: a.len(),
            });
        }
        if theta.len() != self.layout.total_types() {
            return Err(Error::Dimension {
                what: "type profile".into(),
                expected: self.layout.total_types(),
                got: theta.len(),
            });
        }
        for (j, p) in self.players.iter().enumerate() {
            p.action_space
                .check(&format!("action of player {j}"), &a[self.layout.actions(j)])?;
            p.type_space
                .check(&format!("type of player {j}"), &theta[self.layout.types(j)])?;
        }
        Ok(())
    }

    fn check_player(&self, i: usize) -> Result<()> {
        if i >= self.n() {
            return Err(Error::Model(format!(
                "player index {i} out of range for a {}-player game",
                self.n()
            )));
        }
        Ok(())
    }

    /// `u_i(a, θ)` for flat profiles `a` and `θ`.
    pub fn evaluate_utility(&self, i: usize, a: &[f64], theta: &[f64]) -> Result<f64> {
        self.check_player(i)?;
        self.check_profile(a, theta)?;
        Ok(self.utility_unchecked(i, a, theta))
    }

    /// `∇_{a_i} u_i(a, θ)`, of length `z_i`.
    pub fn evaluate_grad(&self, i: usize, a: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.check_player(i)?;
        self.check_profile(a, theta)?;
        let mut out = vec![0.0; self.action_dim(i)];
        self.grad_unchecked(i, a, theta, &mut out);
        Ok(out)
    }

    pub(crate) fn utility_unchecked(&self, i: usize, a: &[f64], theta: &[f64]) -> f64 {
        self.players[i].utility.value(i, &self.layout, a, theta)
    }

    pub(crate) fn grad_unchecked(&self, i: usize, a: &[f64], theta: &[f64], out: &mut [f64]) {
        self.players[i]
            .utility
            .grad_into(i, &self.layout, a, theta, out)
    }

    pub fn joint_density(&self, theta: &[f64]) -> f64 {
        self.density.joint(&self.joint_types, theta)
    }

    pub fn marginal_density(&self, i: usize, theta_i: &[f64]) -> f64 {
        self.density
            .marginal(&self.joint_types, &self.layout, i, theta_i)
    }

    /// `q_i(θ_{−i}|θ_i) = q(θ_{−i}, θ_i) / q_i(θ_i)`.
    pub fn conditional_density(&self, i: usize, theta_i: &[f64], rivals: &[f64]) -> Result<f64> {
        self.check_player(i)?;
        self.players[i].type_space.check("own type", theta_i)?;
        let expected = self.layout.total_types() - self.type_dim(i);
        if rivals.len() != expected {
            return Err(Error::Dimension {
                what: "rival type profile".into(),
                expected,
                got: rivals.len(),
            });
        }
        if let Some(space) = self.rival_type_space(i) {
            space.check("rival types", rivals)?;
        }
        let marginal = self.marginal_density(i, theta_i);
        if !(marginal > 0.0) {
            return Err(Error::Conditioning {
                player: i,
                theta: theta_i.to_vec(),
                marginal,
            });
        }
        let mut theta = vec![0.0; self.layout.total_types()];
        self.assemble_types(i, theta_i, rivals, &mut theta);
        Ok(self.joint_density(&theta) / marginal)
    }
}
