//! Best responses `argmax_{a_i ∈ A_i} ϑ_i(a_i, f_{−i}, θ_i)` and the moduli
//! that drive the contraction and stability bounds.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expectation::{rival_rule, RivalSample};
use crate::game::{GameSpec, UtilityModel};
use crate::quadrature::QuadratureRule;
use crate::space::BoxSpace;
use crate::strategy::{euclid, StrategyGrid, StrategyProfile};

/// Sampled suprema are inflated, and sampled infima deflated, by this factor.
pub const SAFETY_FACTOR: f64 = 1.05;

/// Largest number of box coordinates for exact vertex enumeration of the
/// gradient bound of an affine gradient.
const MAX_VERTEX_DIMS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuliSource {
    Analytic,
    Sampled,
}

/// Moduli of the game, indexed by player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuliReport {
    /// `σ_i`: strong concavity of `u_i` in `a_i`.
    pub strong_concavity: Vec<f64>,
    /// `L_i`: Lipschitz modulus of `∇_{a_i} u_i` in `a_i`.
    pub own_action_lipschitz: Vec<f64>,
    /// `τ_ij`: Lipschitz modulus of `∇_{a_i} u_i` in `a_j`; zero diagonal.
    pub rival_lipschitz: Vec<Vec<f64>>,
    /// `ν_i`: Lipschitz modulus of `∇_{a_i} u_i` in `θ_i`.
    pub own_type_gradient_modulus: Vec<f64>,
    /// `ϱ_i`: Lipschitz modulus of `∇_{a_i} u_i` in `θ_{−i}`.
    pub rival_type_modulus: Vec<f64>,
    /// `γ_i`: Lipschitz modulus of the conditional density in `θ_i`.
    pub density_lipschitz: Vec<f64>,
    /// `max ‖∇_{a_i} u_i‖` over the action and type boxes.
    pub gradient_bound: Vec<f64>,
    /// `κ_i = ν_i + max‖∇u_i‖·γ_i·vol(Θ_{−i})`: Lipschitz modulus of
    /// `∇ϑ_i` in `θ_i`.
    pub own_type_modulus: Vec<f64>,
    /// `(Σ_j τ_ij²)^{1/2}`.
    pub rival_aggregate: Vec<f64>,
    /// `max_i κ_i/σ_i`.
    pub response_type_ratio: f64,
    /// `max_i Σ_{j≠i} τ_ij/σ_i`.
    pub contraction: f64,
    pub contraction_ok: bool,
    pub source: ModuliSource,
    pub safety_factor: f64,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModuliOptions {
    /// Sample tuples per sampled constant.
    pub samples: usize,
    pub seed: u64,
}

impl Default for ModuliOptions {
    fn default() -> Self {
        Self {
            samples: 2000,
            seed: 0,
        }
    }
}

struct PlayerModuli {
    sigma: f64,
    lip: f64,
    tau: Vec<f64>,
    nu: f64,
    varrho: f64,
    grad_bound: f64,
    sampled: bool,
}

/// Estimates every modulus. Cournot and quadratic utilities, and uniform,
/// FGM or mixed densities, get closed forms; everything else is sampled.
/// The own-type modulus does not depend on any particular strategy profile.
pub fn estimate_moduli(game: &GameSpec, options: &ModuliOptions) -> Result<ModuliReport> {
    if options.samples < 1000 {
        return Err(Error::Model(format!(
            "sampling budget {} is below the minimum of 1000",
            options.samples
        )));
    }
    let n = game.n();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut any_sampled = false;
    let mut report = ModuliReport {
        strong_concavity: Vec::with_capacity(n),
        own_action_lipschitz: Vec::with_capacity(n),
        rival_lipschitz: Vec::with_capacity(n),
        own_type_gradient_modulus: Vec::with_capacity(n),
        rival_type_modulus: Vec::with_capacity(n),
        density_lipschitz: Vec::with_capacity(n),
        gradient_bound: Vec::with_capacity(n),
        own_type_modulus: Vec::with_capacity(n),
        rival_aggregate: Vec::with_capacity(n),
        response_type_ratio: 0.0,
        contraction: 0.0,
        contraction_ok: false,
        source: ModuliSource::Analytic,
        safety_factor: SAFETY_FACTOR,
        samples: options.samples,
        seed: options.seed,
    };
    for i in 0..n {
        let m = player_moduli(game, i, options.samples, &mut rng)?;
        let gamma = match game.density().conditional_lipschitz(game.joint_types()) {
            Some(g) => g,
            None => {
                any_sampled = true;
                sampled_density_lipschitz(game, i, options.samples, &mut rng)
            }
        };
        let rival_volume = game.rival_type_space(i).map_or(1.0, |s| s.volume());
        let kappa = m.nu + m.grad_bound * gamma * rival_volume;
        any_sampled |= m.sampled;
        report.rival_aggregate.push(m.tau.iter().map(|t| t * t).sum::<f64>().sqrt());
        report.response_type_ratio = report.response_type_ratio.max(kappa / m.sigma);
        report.contraction = report.contraction.max(m.tau.iter().sum::<f64>() / m.sigma);
        report.strong_concavity.push(m.sigma);
        report.own_action_lipschitz.push(m.lip);
        report.rival_lipschitz.push(m.tau);
        report.own_type_gradient_modulus.push(m.nu);
        report.rival_type_modulus.push(m.varrho);
        report.density_lipschitz.push(gamma);
        report.gradient_bound.push(m.grad_bound);
        report.own_type_modulus.push(kappa);
    }
    report.contraction_ok = report.contraction < 1.0;
    if any_sampled {
        report.source = ModuliSource::Sampled;
    }
    Ok(report)
}

fn player_moduli(game: &GameSpec, i: usize, samples: usize, rng: &mut ChaCha8Rng) -> Result<PlayerModuli> {
    let layout = game.layout();
    let n = game.n();
    let m = match &game.player(i).utility {
        UtilityModel::Cournot(c) => {
            let tau = (0..n).map(|j| if j == i { 0.0 } else { c.beta }).collect();
            PlayerModuli {
                sigma: 2.0 * c.beta + c.cost,
                lip: 2.0 * c.beta + c.cost,
                tau,
                nu: 1.0,
                varrho: 0.0,
                grad_bound: 0.0,
                sampled: false,
            }
        }
        UtilityModel::Quadratic(q) => {
            let zi = layout.action_dim(i);
            let curvature = DMatrix::from_fn(zi, zi, |r, s| q.curvature[r][s]);
            let eig = SymmetricEigen::new(curvature).eigenvalues;
            let mut tau = vec![0.0; n];
            for j in (0..n).filter(|&j| j != i) {
                let zj = layout.action_dim(j);
                let mut block = DMatrix::<f64>::zeros(zi, zj);
                for term in q.cross.iter().filter(|t| t.player == j) {
                    block += DMatrix::from_fn(zi, zj, |r, s| term.matrix[r][s]);
                }
                tau[j] = spectral_norm(&block);
            }
            let own = layout.types(i);
            let (own_cols, rival_cols): (Vec<usize>, Vec<usize>) =
                (0..layout.total_types()).partition(|c| own.contains(c));
            let columns = |cols: &[usize]| {
                DMatrix::from_fn(zi, cols.len(), |r, s| q.type_coupling[r][cols[s]])
            };
            PlayerModuli {
                sigma: eig.min(),
                lip: eig.max(),
                tau,
                nu: spectral_norm(&columns(&own_cols)),
                varrho: spectral_norm(&columns(&rival_cols)),
                grad_bound: 0.0,
                sampled: false,
            }
        }
        UtilityModel::Custom(_) => sampled_player(game, i, samples, rng),
    };
    if !(m.sigma > 0.0) {
        return Err(Error::Certification {
            player: i,
            quotient: -m.sigma,
        });
    }
    let (grad_bound, sampled_bound) = if m.sampled {
        (m.grad_bound, true)
    } else {
        affine_gradient_bound(game, i, samples, rng)
    };
    Ok(PlayerModuli {
        grad_bound,
        sampled: m.sampled || sampled_bound,
        ..m
    })
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// `max ‖∇_{a_i} u_i‖` for a gradient affine in `(a, θ)`: the norm is
/// convex, so its maximum over the box sits at a vertex.
fn affine_gradient_bound(game: &GameSpec, i: usize, samples: usize, rng: &mut ChaCha8Rng) -> (f64, bool) {
    let spaces = all_spaces(game);
    let joint = BoxSpace::product(spaces.iter()).expect("non-empty boxes");
    let zi = game.action_dim(i);
    let ta = game.layout().total_actions();
    let mut g = vec![0.0; zi];
    let mut eval = |x: &[f64]| {
        game.grad_unchecked(i, &x[..ta], &x[ta..], &mut g);
        g.iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    if joint.dim() <= MAX_VERTEX_DIMS {
        (joint.vertices().iter().map(|v| eval(v)).fold(0.0, f64::max), false)
    } else {
        let worst = (0..samples)
            .map(|_| eval(&uniform_point(&joint, rng)))
            .fold(0.0, f64::max);
        (worst * SAFETY_FACTOR, true)
    }
}

/// Action boxes of all players followed by their type boxes.
fn all_spaces(game: &GameSpec) -> Vec<BoxSpace> {
    let players = game.players();
    players
        .iter()
        .map(|p| p.action_space.clone())
        .chain(players.iter().map(|p| p.type_space.clone()))
        .collect()
}

fn uniform_point(space: &BoxSpace, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..space.dim())
        .map(|k| space.lower()[k] + space.width(k) * rng.random::<f64>())
        .collect()
}

/// Random point in `space`, and a partner either drawn independently or
/// placed within a small neighbourhood (to catch local derivative peaks).
fn point_pair(space: &BoxSpace, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let x = uniform_point(space, rng);
    let y = if rng.random::<bool>() {
        uniform_point(space, rng)
    } else {
        let mut y: Vec<f64> = (0..space.dim())
            .map(|k| x[k] + 1e-3 * space.width(k) * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        space.clamp_in_place(&mut y);
        y
    };
    (x, y)
}

fn sampled_player(game: &GameSpec, i: usize, samples: usize, rng: &mut ChaCha8Rng) -> PlayerModuli {
    let layout = game.layout();
    let n = game.n();
    let zi = layout.action_dim(i);
    let ta = layout.total_actions();
    let spaces = all_spaces(game);
    let joint = BoxSpace::product(spaces.iter()).expect("non-empty boxes");
    let mut g1 = vec![0.0; zi];
    let mut g2 = vec![0.0; zi];
    let grad = |x: &[f64], out: &mut [f64]| game.grad_unchecked(i, &x[..ta], &x[ta..], out);

    // Perturb one coordinate block, given as a range into the stacked vector.
    let mut quotient = |range: std::ops::Range<usize>, space: &BoxSpace, rng: &mut ChaCha8Rng| {
        let mut worst = f64::NEG_INFINITY;
        let mut lip: f64 = 0.0;
        for _ in 0..samples {
            let base = uniform_point(&joint, rng);
            let (u, v) = point_pair(space, rng);
            let mut x = base.clone();
            let mut y = base;
            x[range.clone()].copy_from_slice(&u);
            y[range.clone()].copy_from_slice(&v);
            let dist = euclid(&u, &v);
            if dist < 1e-12 {
                continue;
            }
            grad(&x, &mut g1);
            grad(&y, &mut g2);
            let dg: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a - b).collect();
            lip = lip.max(dg.iter().map(|d| d * d).sum::<f64>().sqrt() / dist);
            if range.len() == zi {
                let inner: f64 = dg.iter().zip(u.iter().zip(&v)).map(|(d, (a, b))| d * (a - b)).sum();
                worst = worst.max(inner / (dist * dist));
            }
        }
        (worst, lip)
    };

    let own = layout.actions(i);
    let (worst_quotient, lip) = quotient(own, &game.player(i).action_space, rng);
    let tau = (0..n)
        .map(|j| {
            if j == i {
                0.0
            } else {
                quotient(layout.actions(j), &game.player(j).action_space, rng).1 * SAFETY_FACTOR
            }
        })
        .collect();
    let own_types = layout.types(i);
    let nu = quotient(
        ta + own_types.start..ta + own_types.end,
        &game.player(i).type_space,
        rng,
    )
    .1 * SAFETY_FACTOR;
    // Rival types are not contiguous in general; perturb each rival block
    // separately and combine the blockwise moduli.
    let varrho = (0..n)
        .filter(|&j| j != i)
        .map(|j| {
            let r = layout.types(j);
            quotient(ta + r.start..ta + r.end, &game.player(j).type_space, rng).1
        })
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
        * SAFETY_FACTOR;
    let mut grad_bound: f64 = 0.0;
    let mut g = vec![0.0; zi];
    for _ in 0..samples {
        let x = uniform_point(&joint, rng);
        game.grad_unchecked(i, &x[..ta], &x[ta..], &mut g);
        grad_bound = grad_bound.max(g.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    for v in joint.vertices().iter().take(1 << MAX_VERTEX_DIMS.min(joint.dim())) {
        game.grad_unchecked(i, &v[..ta], &v[ta..], &mut g);
        grad_bound = grad_bound.max(g.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    PlayerModuli {
        sigma: -worst_quotient / SAFETY_FACTOR,
        lip: lip * SAFETY_FACTOR,
        tau,
        nu,
        varrho,
        grad_bound: grad_bound * SAFETY_FACTOR,
        sampled: true,
    }
}

/// `sup |q(θ_{−i}|θ_i') − q(θ_{−i}|θ_i'')| / ‖θ_i' − θ_i''‖` over samples.
fn sampled_density_lipschitz(game: &GameSpec, i: usize, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let Some(rivals) = game.rival_type_space(i) else {
        return 0.0;
    };
    let own = &game.player(i).type_space;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let (t1, t2) = point_pair(own, rng);
        let dist = euclid(&t1, &t2);
        if dist < 1e-12 {
            continue;
        }
        let r = uniform_point(&rivals, rng);
        if let (Ok(a), Ok(b)) = (
            game.conditional_density(i, &t1, &r),
            game.conditional_density(i, &t2, &r),
        ) {
            worst = worst.max((a - b).abs() / dist);
        }
    }
    worst * SAFETY_FACTOR
}

/// Best-response solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseSettings {
    /// Target distance to the exact maximizer of the discretized problem.
    pub tol: f64,
    pub max_iter: usize,
    pub rule: QuadratureRule,
}

impl Default for ResponseSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            rule: QuadratureRule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    pub action: Vec<f64>,
    /// `‖a − Π_A(a + ∇ϑ_i(a)/L_i)‖` at the returned action.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
enum Method {
    /// `∇ϑ_i(a) = ∇ϑ_i(0) − Q a` exactly.
    Quadratic {
        curvature: Vec<Vec<f64>>,
        lip: f64,
        sigma: f64,
    },
    Gradient {
        lip: f64,
        sigma: f64,
    },
}

/// Per-player best-response solver, reusable across grid nodes and
/// iterations.
#[derive(Debug, Clone)]
pub struct ResponseSolver {
    methods: Vec<Method>,
    settings: ResponseSettings,
}

impl ResponseSolver {
    /// Takes step sizes and concavity constants from `moduli`.
    pub fn from_moduli(game: &GameSpec, moduli: &ModuliReport, settings: ResponseSettings) -> Self {
        let methods = game
            .players()
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let (lip, sigma) = (moduli.own_action_lipschitz[i], moduli.strong_concavity[i]);
                match p.utility.curvature() {
                    Some(curvature) => Method::Quadratic { curvature, lip, sigma },
                    None => Method::Gradient { lip, sigma },
                }
            })
            .collect();
        Self { methods, settings }
    }

    pub fn new(game: &GameSpec, settings: ResponseSettings) -> Result<Self> {
        let moduli = estimate_moduli(game, &ModuliOptions::default())?;
        Ok(Self::from_moduli(game, &moduli, settings))
    }

    pub fn settings(&self) -> &ResponseSettings {
        &self.settings
    }

    /// Maximizes `ϑ_i` for the rival sample, starting from `start` (or the
    /// box midpoint) when iterating.
    pub fn solve(
        &self,
        game: &GameSpec,
        i: usize,
        sample: &mut RivalSample<'_>,
        start: Option<&[f64]>,
    ) -> Result<BestResponse> {
        let space = &game.player(i).action_space;
        let z = space.dim();
        let mut a = match start {
            Some(s) => space.clamp(s),
            None => space.midpoint(),
        };
        let mut g = vec![0.0; z];
        match &self.methods[i] {
            Method::Quadratic { curvature, lip, sigma } => {
                let zero = vec![0.0; z];
                let mut b = vec![0.0; z];
                sample.grad_into(&zero, &mut b);
                let iterations = if z == 1 {
                    a[0] = b[0] / curvature[0][0];
                    space.clamp_in_place(&mut a);
                    1
                } else {
                    box_qp(&b, curvature, *lip, *sigma, space, &mut a, self.settings.max_iter * 10)
                        .ok_or_else(|| Error::Convergence {
                            iterations: self.settings.max_iter * 10,
                            residual: f64::NAN,
                            trace: Vec::new(),
                        })?
                };
                sample.grad_into(&a, &mut g);
                let residual = projected_residual(space, &a, &g, *lip);
                Ok(BestResponse {
                    action: a,
                    residual,
                    iterations,
                })
            }
            Method::Gradient { lip, sigma } => {
                let stop = self.settings.tol * sigma / (2.0 * lip);
                let mut next = vec![0.0; z];
                let mut g_next = vec![0.0; z];
                sample.grad_into(&a, &mut g);
                let mut trace = Vec::new();
                for k in 0..self.settings.max_iter {
                    for r in 0..z {
                        next[r] = a[r] + g[r] / lip;
                    }
                    space.clamp_in_place(&mut next);
                    let residual = euclid(&next, &a);
                    if residual <= stop {
                        return Ok(BestResponse {
                            action: a,
                            residual,
                            iterations: k,
                        });
                    }
                    if trace.len() < 64 {
                        trace.push(residual);
                    }
                    sample.grad_into(&next, &mut g_next);
                    let inner: f64 = (0..z).map(|r| (g_next[r] - g[r]) * (next[r] - a[r])).sum();
                    let quotient = inner / (residual * residual);
                    if quotient > 1e-9 * lip {
                        return Err(Error::Certification { player: i, quotient });
                    }
                    std::mem::swap(&mut a, &mut next);
                    std::mem::swap(&mut g, &mut g_next);
                }
                let residual = projected_residual(space, &a, &g, *lip);
                Err(Error::Convergence {
                    iterations: self.settings.max_iter,
                    residual,
                    trace,
                })
            }
        }
    }
}

fn projected_residual(space: &BoxSpace, a: &[f64], g: &[f64], lip: f64) -> f64 {
    let mut step: Vec<f64> = a.iter().zip(g).map(|(x, d)| x + d / lip).collect();
    space.clamp_in_place(&mut step);
    euclid(&step, a)
}

/// Maximizes `bᵀa − ½ aᵀQa` over the box by projected gradient with step
/// `1/λ_max(Q)`; returns the iteration count.
fn box_qp(
    b: &[f64],
    q: &[Vec<f64>],
    lip: f64,
    sigma: f64,
    space: &BoxSpace,
    a: &mut [f64],
    max_iter: usize,
) -> Option<usize> {
    let z = a.len();
    let mut next = vec![0.0; z];
    // ‖a − a*‖ ≤ (2L/σ)·step, so this leaves an error near rounding level.
    let stop = 1e-15 * sigma / (2.0 * lip);
    for k in 0..max_iter {
        for r in 0..z {
            let g = b[r] - q[r].iter().zip(a.iter()).map(|(x, y)| x * y).sum::<f64>();
            next[r] = a[r] + g / lip;
        }
        space.clamp_in_place(&mut next);
        let step = euclid(&next, a);
        a.copy_from_slice(&next);
        if step <= stop * (1.0 + a.iter().map(|v| v.abs()).fold(0.0, f64::max)) {
            return Some(k + 1);
        }
    }
    None
}

/// One-shot best response at a single type.
pub fn best_response_point(
    game: &GameSpec,
    profile: &StrategyProfile,
    i: usize,
    theta_i: &[f64],
    settings: &ResponseSettings,
) -> Result<BestResponse> {
    let solver = ResponseSolver::new(game, settings.clone())?;
    let mut sample = RivalSample::new(game, profile, i, theta_i, &settings.rule)?;
    solver.solve(game, i, &mut sample, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOptions {
    pub trials: usize,
    pub seed: u64,
    /// Additive slack on every asserted inequality.
    pub tol: f64,
    /// Nodes per type axis of the random rival profiles.
    pub nodes: usize,
    pub settings: ResponseSettings,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            trials: 500,
            seed: 0,
            tol: 1e-6,
            nodes: 9,
            settings: ResponseSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseBound {
    /// `‖A*(f, θ') − A*(f, θ'')‖ ≤ (κ_i/σ_i)‖θ' − θ''‖`.
    OwnType,
    /// `‖A*(f, θ) − A*(g, θ)‖ ≤ Σ_j (τ_ij/σ_i) ∫‖f_j − g_j‖ dη_i(·|θ)`.
    Rival,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseWitness {
    pub player: usize,
    pub bound: ResponseBound,
    pub theta: Vec<f64>,
    pub theta_other: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseCheck {
    /// Largest observed `‖ΔA*‖/‖Δθ‖` per player.
    pub own_type_ratio: Vec<f64>,
    /// `κ_i/σ_i` per player.
    pub own_type_bound: Vec<f64>,
    /// Largest observed left side over right side of the rival bound.
    pub rival_ratio: Vec<f64>,
    pub trials: usize,
    pub pass: bool,
    pub witness: Option<ResponseWitness>,
}

/// Asserts the Lipschitz bounds of the best-response map on random draws of
/// rival profiles and types.
pub fn lipschitz_response_check(
    game: &GameSpec,
    moduli: &ModuliReport,
    options: &CheckOptions,
) -> Result<ResponseCheck> {
    let solver = ResponseSolver::from_moduli(game, moduli, options.settings.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let n = game.n();
    let mut report = ResponseCheck {
        own_type_ratio: vec![0.0; n],
        own_type_bound: (0..n)
            .map(|i| moduli.own_type_modulus[i] / moduli.strong_concavity[i])
            .collect(),
        rival_ratio: vec![0.0; n],
        trials: options.trials,
        pass: true,
        witness: None,
    };
    let mut worst_excess = 0.0;
    for _ in 0..options.trials {
        let f = random_profile(game, options.nodes, &mut rng)?;
        let g = random_profile(game, options.nodes, &mut rng)?;
        for i in 0..n {
            let own = &game.player(i).type_space;
            let tensor = rival_rule(game, i, &options.settings.rule)?;
            let (t1, t2) = point_pair(own, &mut rng);

            let mut s1 = RivalSample::from_tensor(game, &f, i, &t1, &tensor)?;
            let mut s2 = RivalSample::from_tensor(game, &f, i, &t2, &tensor)?;
            let a1 = solver.solve(game, i, &mut s1, None)?.action;
            let a2 = solver.solve(game, i, &mut s2, None)?.action;
            let lhs = euclid(&a1, &a2);
            let dist = euclid(&t1, &t2);
            if dist > 0.0 {
                report.own_type_ratio[i] = report.own_type_ratio[i].max(lhs / dist);
            }
            let rhs = report.own_type_bound[i] * dist;
            if lhs - rhs > options.tol && lhs - rhs > worst_excess {
                worst_excess = lhs - rhs;
                report.pass = false;
                report.witness = Some(ResponseWitness {
                    player: i,
                    bound: ResponseBound::OwnType,
                    theta: t1.clone(),
                    theta_other: t2,
                    lhs,
                    rhs,
                });
            }

            let mut sg = RivalSample::from_tensor(game, &g, i, &t1, &tensor)?;
            let b1 = solver.solve(game, i, &mut sg, None)?.action;
            let lhs = euclid(&a1, &b1);
            let layout = game.layout();
            let mut rhs = 0.0;
            for j in (0..n).filter(|&j| j != i) {
                let r = layout.actions(j);
                let gap: f64 = (0..s1.len())
                    .map(|k| s1.weights()[k] * euclid(&s1.actions(k)[r.clone()], &sg.actions(k)[r.clone()]))
                    .sum();
                rhs += moduli.rival_lipschitz[i][j] / moduli.strong_concavity[i] * gap;
            }
            if rhs > 0.0 {
                report.rival_ratio[i] = report.rival_ratio[i].max(lhs / rhs);
            }
            if lhs - rhs > options.tol && lhs - rhs > worst_excess {
                worst_excess = lhs - rhs;
                report.pass = false;
                report.witness = Some(ResponseWitness {
                    player: i,
                    bound: ResponseBound::Rival,
                    theta: t1.clone(),
                    theta_other: t1,
                    lhs,
                    rhs,
                });
            }
        }
    }
    Ok(report)
}

/// Profile with independent uniform node values in each action box.
pub fn random_profile(game: &GameSpec, nodes: usize, rng: &mut ChaCha8Rng) -> Result<StrategyProfile> {
    let grids = game
        .players()
        .iter()
        .map(|p| {
            StrategyGrid::from_fn(
                p.type_space.clone(),
                p.action_space.clone(),
                vec![nodes; p.type_space.dim()],
                |_| uniform_point(&p.action_space, rng),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StrategyProfile::new(grids))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{catalog, DensityModel};

    fn opts() -> ModuliOptions {
        ModuliOptions::default()
    }

    #[test]
    fn cournot3_moduli() {
        let game = catalog::cournot3(10.0, 1.0, 1.0).unwrap();
        let m = estimate_moduli(&game, &opts()).unwrap();
        assert_eq!(m.source, ModuliSource::Analytic);
        for i in 0..3 {
            assert_eq!(m.strong_concavity[i], 3.0);
            assert_eq!(m.rival_lipschitz[i].iter().sum::<f64>(), 2.0);
            assert_eq!(m.density_lipschitz[i], 0.0);
            assert_eq!(m.own_type_modulus[i], 1.0);
            assert_eq!(m.rival_type_modulus[i], 0.0);
        }
        assert!((m.contraction - 2.0 / 3.0).abs() < 1e-15);
        assert!(m.contraction_ok);
    }

    #[test]
    fn cournot2_moduli() {
        let game = catalog::cournot2(10.0, 1.0, 1.0, 0.3).unwrap();
        let m = estimate_moduli(&game, &opts()).unwrap();
        assert!((m.contraction - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.density_lipschitz[0] - 0.6).abs() < 1e-15);
        assert_eq!(m.gradient_bound[0], 31.0);
        assert!((m.own_type_modulus[0] - (1.0 + 31.0 * 0.6)).abs() < 1e-12);
        assert!((m.rival_aggregate[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn small_budget_is_rejected() {
        let game = catalog::cournot3(10.0, 1.0, 1.0).unwrap();
        let o = ModuliOptions { samples: 10, seed: 0 };
        assert!(estimate_moduli(&game, &o).is_err());
    }

    #[test]
    fn sampled_moduli_bracket_the_truth() {
        let game = catalog::smooth_duopoly(2.0, 0.5, DensityModel::fgm(0.4).unwrap()).unwrap();
        let m = estimate_moduli(&game, &opts()).unwrap();
        assert_eq!(m.source, ModuliSource::Sampled);
        // σ = q at a = 0; L = q + a_max² = 11 on [0, 3]; τ = b; ν = 1.
        assert!(m.strong_concavity[0] <= 2.0 && m.strong_concavity[0] > 1.8);
        assert!(m.own_action_lipschitz[0] >= 10.5 && m.own_action_lipschitz[0] <= 11.0 * SAFETY_FACTOR + 1e-9);
        assert!((m.rival_lipschitz[0][1] - 0.5 * SAFETY_FACTOR).abs() < 1e-9);
        assert!((m.own_type_gradient_modulus[0] - SAFETY_FACTOR).abs() < 1e-9);
        assert!(m.rival_type_modulus[0] <= 0.5 * SAFETY_FACTOR + 1e-9);
    }

    #[test]
    fn quadratic_moduli_use_spectral_quantities() {
        let game = catalog::complements2(2.0, 3.0, 1.0, DensityModel::fgm(0.5).unwrap()).unwrap();
        let m = estimate_moduli(&game, &opts()).unwrap();
        assert_eq!(m.source, ModuliSource::Analytic);
        assert!((m.strong_concavity[0] - 3.0).abs() < 1e-12);
        assert!((m.rival_lipschitz[0][1] - 1.0).abs() < 1e-12);
        assert!((m.contraction - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.own_type_gradient_modulus[0] - 1.0).abs() < 1e-12);
        assert_eq!(m.rival_type_modulus[0], 0.0);
    }

    #[test]
    fn tabulated_density_gets_a_sampled_gamma() {
        let b = BoxSpace::unit(2);
        let values: Vec<f64> = (0..9).map(|k| 1.0 + 0.1 * k as f64).collect();
        let tab = crate::game::TabulatedDensity::new(b, vec![3, 3], values).unwrap();
        let game = catalog::cournot2(10.0, 1.0, 1.0, 0.0)
            .unwrap()
            .with_density(DensityModel::GridTabulated(tab))
            .unwrap();
        let m = estimate_moduli(&game, &opts()).unwrap();
        assert_eq!(m.source, ModuliSource::Sampled);
        assert!(m.density_lipschitz[0] > 0.0);
    }

    #[test]
    fn constant_rivals_give_the_clamped_closed_form() {
        let game = catalog::cournot3(10.0, 1.0, 1.0).unwrap();
        let prof = StrategyProfile::from_fn(&game, 5, |j, _| vec![1.0 + j as f64]).unwrap();
        let s = ResponseSettings::default();
        for theta in [0.0, 0.5, 1.0] {
            let br = best_response_point(&game, &prof, 0, &[theta], &s).unwrap();
            let want = ((10.0 - theta - 5.0) / 3.0f64).clamp(0.0, 10.0);
            assert!((br.action[0] - want).abs() < 1e-12);
            assert!(br.residual < 1e-12);
        }
        let heavy = StrategyProfile::from_fn(&game, 5, |_, _| vec![6.0]).unwrap();
        let br = best_response_point(&game, &heavy, 0, &[1.0], &s).unwrap();
        assert_eq!(br.action, vec![0.0]);
    }

    #[test]
    fn best_response_to_closed_form_reproduces_it() {
        let (alpha, beta, c, rho) = (10.0, 1.0, 1.0, 0.3);
        let game = catalog::cournot2(alpha, beta, c, rho).unwrap();
        let eq = StrategyProfile::from_fn(&game, 11, |_, t| {
            vec![catalog::cournot2_equilibrium(alpha, beta, c, rho, t[0])]
        })
        .unwrap();
        for theta in [0.0, 0.33, 1.0] {
            let br = best_response_point(&game, &eq, 1, &[theta], &ResponseSettings::default()).unwrap();
            let want = catalog::cournot2_equilibrium(alpha, beta, c, rho, theta);
            assert!((br.action[0] - want).abs() < 1e-6);
        }
    }

    /// Golden-section search on the expected utility alone.
    fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let x1 = hi - r * (hi - lo);
            let x2 = lo + r * (hi - lo);
            if f(x1) < f(x2) {
                lo = x1;
            } else {
                hi = x2;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn gradient_solver_agrees_with_golden_section() {
        let game = catalog::smooth_duopoly(2.0, 0.5, DensityModel::fgm(-0.6).unwrap()).unwrap();
        let prof = StrategyProfile::from_fn(&game, 7, |_, t| vec![0.5 + 2.0 * t[0]]).unwrap();
        let s = ResponseSettings::default();
        for theta in [0.0, 0.4, 1.0] {
            let br = best_response_point(&game, &prof, 0, &[theta], &s).unwrap();
            let rule = QuadratureRule::default();
            let oracle = golden(
                |a| crate::expectation::expected_utility(&game, &prof, 0, &[theta], &[a], &rule).unwrap(),
                0.0,
                3.0,
            );
            assert!((br.action[0] - oracle).abs() < 1e-6, "{} vs {oracle}", br.action[0]);
        }
    }

    #[test]
    fn two_dimensional_quadratic_responses_are_stationary() {
        let game = catalog::random_quadratic(11, 0.3).unwrap();
        let prof = StrategyProfile::midpoint(&game, 5).unwrap();
        let s = ResponseSettings::default();
        for theta in [0.0, 0.7] {
            let br = best_response_point(&game, &prof, 0, &[theta], &s).unwrap();
            assert!(br.residual < 1e-10, "{}", br.residual);
            let again = {
                let solver = ResponseSolver::new(&game, s.clone()).unwrap();
                let mut sample = RivalSample::new(&game, &prof, 0, &[theta], &s.rule).unwrap();
                solver.solve(&game, 0, &mut sample, Some(&[4.9, 0.1])).unwrap()
            };
            assert!(euclid(&br.action, &again.action) < 2e-10);
        }
    }

    #[test]
    fn non_concave_utility_is_reported() {
        struct Convex;
        impl crate::game::CustomUtility for Convex {
            fn value(&self, a: &[f64], _: &[f64]) -> f64 {
                a[0] * a[0]
            }
            fn grad(&self, a: &[f64], _: &[f64], out: &mut [f64]) {
                out[0] = 2.0 * a[0];
            }
        }
        let player = crate::game::Player {
            type_space: BoxSpace::unit(1),
            action_space: BoxSpace::unit(1),
            utility: UtilityModel::Custom(std::sync::Arc::new(Convex)),
        };
        let game = GameSpec::new(vec![player], DensityModel::ProductUniform).unwrap();
        assert!(matches!(
            estimate_moduli(&game, &opts()),
            Err(Error::Certification { .. })
        ));
        let fake = ModuliReport {
            strong_concavity: vec![1.0],
            own_action_lipschitz: vec![2.0],
            rival_lipschitz: vec![vec![0.0]],
            own_type_gradient_modulus: vec![0.0],
            rival_type_modulus: vec![0.0],
            density_lipschitz: vec![0.0],
            gradient_bound: vec![2.0],
            own_type_modulus: vec![0.0],
            rival_aggregate: vec![0.0],
            response_type_ratio: 0.0,
            contraction: 0.0,
            contraction_ok: true,
            source: ModuliSource::Sampled,
            safety_factor: SAFETY_FACTOR,
            samples: 1000,
            seed: 0,
        };
        let solver = ResponseSolver::from_moduli(&game, &fake, ResponseSettings::default());
        let prof = StrategyProfile::midpoint(&game, 3).unwrap();
        let mut sample = RivalSample::new(&game, &prof, 0, &[0.5], &QuadratureRule::default()).unwrap();
        assert!(matches!(
            solver.solve(&game, 0, &mut sample, Some(&[0.6])),
            Err(Error::Certification { .. })
        ));
    }

    #[test]
    fn response_bounds_hold_for_cournot2() {
        let game = catalog::cournot2(10.0, 1.0, 1.0, 0.3).unwrap();
        let m = estimate_moduli(&game, &opts()).unwrap();
        let check = lipschitz_response_check(
            &game,
            &m,
            &CheckOptions {
                trials: 100,
                ..CheckOptions::default()
            },
        )
        .unwrap();
        assert!(check.pass, "{:?}", check.witness);
        // Exact slope of the closed form is below κ/σ.
        let slope = 1.0 / (2.0 + 1.0 + 0.3 / 3.0);
        assert!(slope <= check.own_type_bound[0]);
    }
}
