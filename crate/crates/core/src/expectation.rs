//! Expected utility `ϑ_i(a_i, f_{−i}, θ_i)` and its gradient, by tensor
//! quadrature over the rivals' types weighted by the conditional density.
//!
//! Sums are self-normalized: the weights `w_k q(θ_i, θ_{−i,k})` are divided
//! by their total, so the discrete conditional measure has mass exactly one.

use crate::error::{Error, Result};
use crate::game::GameSpec;
use crate::quadrature::{QuadratureRule, TensorRule};
use crate::strategy::StrategyProfile;

/// Largest total rival type dimension accepted for tensor quadrature.
pub const MAX_RIVAL_TYPE_DIM: usize = 4;

/// Rival types and actions at the quadrature nodes for one `(i, θ_i)`.
/// Building it once lets the utility and gradient be evaluated for many
/// own actions `a_i` cheaply.
#[derive(Debug, Clone)]
pub struct RivalSample<'g> {
    game: &'g GameSpec,
    player: usize,
    types: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl<'g> RivalSample<'g> {
    pub fn new(
        game: &'g GameSpec,
        profile: &StrategyProfile,
        i: usize,
        theta_i: &[f64],
        rule: &QuadratureRule,
    ) -> Result<Self> {
        if i >= game.n() {
            return Err(Error::Model(format!("player index {i} out of range")));
        }
        profile.check_against(game)?;
        game.player(i).type_space.check("own type", theta_i)?;
        let tensor = rival_rule(game, i, rule)?;
        Self::from_tensor(game, profile, i, theta_i, &tensor)
    }

    pub(crate) fn from_tensor(
        game: &'g GameSpec,
        profile: &StrategyProfile,
        i: usize,
        theta_i: &[f64],
        tensor: &TensorRule,
    ) -> Result<Self> {
        let layout = game.layout();
        let mut types = Vec::with_capacity(tensor.len());
        let mut actions = Vec::with_capacity(tensor.len());
        let mut weights = Vec::with_capacity(tensor.len());
        let mut total = 0.0;
        for (rivals, w) in tensor.iter() {
            let mut theta = vec![0.0; layout.total_types()];
            game.assemble_types(i, theta_i, rivals, &mut theta);
            let wq = w * game.joint_density(&theta);
            if wq <= 0.0 {
                continue;
            }
            let mut a = vec![0.0; layout.total_actions()];
            for j in (0..game.n()).filter(|&j| j != i) {
                profile
                    .grid(j)
                    .eval_into(&theta[layout.types(j)], &mut a[layout.actions(j)]);
            }
            total += wq;
            types.push(theta);
            actions.push(a);
            weights.push(wq);
        }
        if !(total > 0.0) {
            return Err(Error::Conditioning {
                player: i,
                theta: theta_i.to_vec(),
                marginal: total,
            });
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self {
            game,
            player: i,
            types,
            actions,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Normalized node weights, summing to one.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Full type profile at node `k`.
    pub fn types(&self, k: usize) -> &[f64] {
        &self.types[k]
    }

    /// Full action profile at node `k`; the own-action slot is unspecified.
    pub fn actions(&self, k: usize) -> &[f64] {
        &self.actions[k]
    }

    /// `ϑ_i(a_i)` without domain checks on `a_i`.
    pub fn utility(&mut self, a_i: &[f64]) -> f64 {
        let own = self.game.layout().actions(self.player);
        let mut sum = 0.0;
        for k in 0..self.len() {
            self.actions[k][own.clone()].copy_from_slice(a_i);
            sum += self.weights[k] * self.game.utility_unchecked(self.player, &self.actions[k], &self.types[k]);
        }
        sum
    }

    /// `∇_{a_i} ϑ_i(a_i)` without domain checks on `a_i`.
    pub fn grad_into(&mut self, a_i: &[f64], out: &mut [f64]) {
        let own = self.game.layout().actions(self.player);
        let mut scratch = vec![0.0; out.len()];
        out.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..self.len() {
            self.actions[k][own.clone()].copy_from_slice(a_i);
            self.game
                .grad_unchecked(self.player, &self.actions[k], &self.types[k], &mut scratch);
            for (o, s) in out.iter_mut().zip(&scratch) {
                *o += self.weights[k] * s;
            }
        }
    }

    /// Expected value of the rival actions, `E[f_{−i}(θ_{−i}) | θ_i]`, as a
    /// full action profile with zeros in the own slot.
    pub fn mean_actions(&self) -> Vec<f64> {
        let own = self.game.layout().actions(self.player);
        let mut mean = vec![0.0; self.game.layout().total_actions()];
        for k in 0..self.len() {
            for (r, m) in mean.iter_mut().enumerate() {
                if !own.contains(&r) {
                    *m += self.weights[k] * self.actions[k][r];
                }
            }
        }
        mean
    }
}

/// Tensor rule over `Θ_{−i}`; the one-point rule for a single player.
pub fn rival_rule(game: &GameSpec, i: usize, rule: &QuadratureRule) -> Result<TensorRule> {
    match game.rival_type_space(i) {
        None => Ok(TensorRule::trivial()),
        Some(space) => {
            if space.dim() > MAX_RIVAL_TYPE_DIM {
                return Err(Error::Dimension {
                    what: format!(
                        "rival type dimension of player {i} (tensor quadrature supports at most {MAX_RIVAL_TYPE_DIM})"
                    ),
                    expected: MAX_RIVAL_TYPE_DIM,
                    got: space.dim(),
                });
            }
            rule.tensor(&space)
        }
    }
}

/// `ϑ_i(a_i, f_{−i}, θ_i)`.
pub fn expected_utility(
    game: &GameSpec,
    profile: &StrategyProfile,
    i: usize,
    theta_i: &[f64],
    a_i: &[f64],
    rule: &QuadratureRule,
) -> Result<f64> {
    let mut sample = RivalSample::new(game, profile, i, theta_i, rule)?;
    game.player(i).action_space.check("own action", a_i)?;
    Ok(sample.utility(a_i))
}

/// `∇_{a_i} ϑ_i(a_i, f_{−i}, θ_i)`.
pub fn expected_grad(
    game: &GameSpec,
    profile: &StrategyProfile,
    i: usize,
    theta_i: &[f64],
    a_i: &[f64],
    rule: &QuadratureRule,
) -> Result<Vec<f64>> {
    let mut sample = RivalSample::new(game, profile, i, theta_i, rule)?;
    game.player(i).action_space.check("own action", a_i)?;
    let mut out = vec![0.0; a_i.len()];
    sample.grad_into(a_i, &mut out);
    Ok(out)
}
