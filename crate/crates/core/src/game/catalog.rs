//! Ready-made games: the symmetric Bayesian Cournot family, a
//! strategic-complements quadratic game, and seeded random quadratic games.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    CournotUtility, CrossTerm, CustomUtility, DensityModel, GameSpec, Player, QuadraticUtility, UtilityModel,
};
use crate::error::Result;
use crate::space::BoxSpace;

/// Symmetric `n`-player Cournot game with `A_i = [0, α/β]`, `Θ_i = [0, 1]`.
pub fn cournot(n: usize, alpha: f64, beta: f64, cost: f64, density: DensityModel) -> Result<GameSpec> {
    let action = BoxSpace::interval(0.0, alpha / beta)?;
    let players = (0..n)
        .map(|_| Player {
            type_space: BoxSpace::unit(1),
            action_space: action.clone(),
            utility: UtilityModel::Cournot(CournotUtility { alpha, beta, cost }),
        })
        .collect();
    GameSpec::new(players, density)
}

/// Two-player Cournot game with FGM-correlated costs.
pub fn cournot2(alpha: f64, beta: f64, cost: f64, rho: f64) -> Result<GameSpec> {
    cournot(2, alpha, beta, cost, DensityModel::fgm(rho)?)
}

/// Three-player Cournot game with independent uniform costs.
pub fn cournot3(alpha: f64, beta: f64, cost: f64) -> Result<GameSpec> {
    cournot(3, alpha, beta, cost, DensityModel::ProductUniform)
}

/// Closed-form equilibrium of the two-player FGM Cournot game
/// (interior case).
pub fn cournot2_equilibrium(alpha: f64, beta: f64, cost: f64, rho: f64, theta: f64) -> f64 {
    let d = 6.0 * beta + 3.0 * cost + beta * rho;
    alpha / (3.0 * beta + cost) + beta * (3.0 - rho) / (2.0 * (3.0 * beta + cost) * d)
        - theta / (2.0 * beta + cost + beta * rho / 3.0)
}

/// Uniform-in-type bound on `|f*_{ρ₁}(θ) − f*_{ρ₂}(θ)|` for the same game.
pub fn cournot2_drift_bound(beta: f64, cost: f64, rho1: f64, rho2: f64) -> f64 {
    3.0 * beta / (2.0 * (5.0 * beta + 3.0 * cost).powi(2)) * (rho1 - rho2).abs()
}

/// Two-player game with strategic complements:
/// `u_i = (h + θ_i) a_i − (q/2) a_i² + b a_i a_j` on `A_i = [0, 4]`.
/// Responses increase in both the own type and the rival's action.
pub fn complements2(h: f64, q: f64, b: f64, density: DensityModel) -> Result<GameSpec> {
    let players = (0..2)
        .map(|i| {
            let mut coupling = vec![0.0, 0.0];
            coupling[i] = 1.0;
            Player {
                type_space: BoxSpace::unit(1),
                action_space: BoxSpace::interval(0.0, 4.0).unwrap(),
                utility: UtilityModel::Quadratic(QuadraticUtility {
                    linear: vec![h],
                    type_coupling: vec![coupling],
                    curvature: vec![vec![q]],
                    cross: vec![CrossTerm {
                        player: 1 - i,
                        matrix: vec![vec![b]],
                    }],
                }),
            }
        })
        .collect();
    GameSpec::new(players, density)
}

/// Non-quadratic utility for player `own` of a two-player game:
/// `u = a_i (1 + θ_i + ½ sin θ_j) − (q/2) a_i² − a_i⁴/12 − b a_i a_j`.
#[derive(Debug, Clone, Copy)]
pub struct SmoothDuopoly {
    pub own: usize,
    pub q: f64,
    pub b: f64,
}

impl CustomUtility for SmoothDuopoly {
    fn value(&self, actions: &[f64], types: &[f64]) -> f64 {
        let (a, r) = (actions[self.own], actions[1 - self.own]);
        let shift = 1.0 + types[self.own] + 0.5 * types[1 - self.own].sin();
        a * shift - 0.5 * self.q * a * a - a.powi(4) / 12.0 - self.b * a * r
    }

    fn grad(&self, actions: &[f64], types: &[f64], out: &mut [f64]) {
        let (a, r) = (actions[self.own], actions[1 - self.own]);
        let shift = 1.0 + types[self.own] + 0.5 * types[1 - self.own].sin();
        out[0] = shift - self.q * a - a.powi(3) / 3.0 - self.b * r;
    }

    fn name(&self) -> &str {
        "smooth_duopoly"
    }
}

/// Two-player game with [`SmoothDuopoly`] utilities on `A_i = [0, 3]`.
pub fn smooth_duopoly(q: f64, b: f64, density: DensityModel) -> Result<GameSpec> {
    let players = (0..2)
        .map(|own| Player {
            type_space: BoxSpace::unit(1),
            action_space: BoxSpace::interval(0.0, 3.0).unwrap(),
            utility: UtilityModel::Custom(Arc::new(SmoothDuopoly { own, q, b })),
        })
        .collect();
    GameSpec::new(players, density)
}

/// Two players with two-dimensional actions, scalar types and FGM
/// correlation. Rival blocks are scaled so that
/// `Σ_j ‖B_ij‖₂ ≤ ½ λ_min(Q_i)`, which keeps the game a contraction.
pub fn random_quadratic(seed: u64, rho: f64) -> Result<GameSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut players = Vec::new();
    for i in 0..2 {
        let m: [[f64; 2]; 2] = [
            [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
        ];
        let shift = rng.random_range(1.5..3.0);
        let mut q = vec![vec![0.0; 2]; 2];
        for r in 0..2 {
            for s in 0..2 {
                q[r][s] = (0..2).map(|k| m[k][r] * m[k][s]).sum::<f64>();
            }
            q[r][r] += shift;
        }
        let mut cross: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let frob: f64 = cross.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        // λ_min(Q) ≥ shift and ‖B‖₂ ≤ ‖B‖_F.
        let scale = 0.5 * shift / frob;
        for v in cross.iter_mut().flatten() {
            *v *= scale;
        }
        let type_coupling = (0..2)
            .map(|_| vec![rng.random_range(-1.5..1.5), rng.random_range(-0.5..0.5)])
            .collect();
        players.push(Player {
            type_space: BoxSpace::unit(1),
            action_space: BoxSpace::new(vec![0.0, 0.0], vec![5.0, 5.0])?,
            utility: UtilityModel::Quadratic(QuadraticUtility {
                linear: vec![rng.random_range(3.0..8.0), rng.random_range(3.0..8.0)],
                type_coupling,
                curvature: q,
                cross: vec![CrossTerm {
                    player: 1 - i,
                    matrix: cross,
                }],
            }),
        });
    }
    GameSpec::new(players, DensityModel::fgm(rho)?)
}
