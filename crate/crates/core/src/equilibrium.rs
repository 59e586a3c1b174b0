//! Equilibrium computation: Banach iteration of the best-response map `Ψ`
//! with an a-posteriori error certificate, and monotone lattice iteration
//! from the top and bottom of the strategy lattice.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::best_response::{ModuliReport, ResponseSettings, ResponseSolver};
use crate::error::{Error, Result};
use crate::expectation::{rival_rule, RivalSample};
use crate::game::GameSpec;
use crate::quadrature::TensorRule;
use crate::strategy::{lp_norm_diff, top_bottom, Norm, Orientation, StrategyProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Contraction,
    MonotoneFromTop,
    MonotoneFromBottom,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumResult {
    pub profile: StrategyProfile,
    /// Number of applications of `Ψ`.
    pub iterations: usize,
    /// Last step size: `‖f^{k+1} − f^k‖_{∞,L^p}` for contraction runs, the
    /// node-wise max change for monotone runs.
    pub residual: f64,
    /// Bound on the distance to the fixed point, `residual·α/(1−α)`, when
    /// the game is certified a contraction.
    pub certificate: Option<f64>,
    pub method: Method,
    pub norm: Norm,
    pub trace: Vec<f64>,
}

/// The best-response map on a fixed discretization.
#[derive(Debug, Clone)]
pub struct BestResponseMap<'g> {
    game: &'g GameSpec,
    solver: ResponseSolver,
    tensors: Vec<TensorRule>,
}

impl<'g> BestResponseMap<'g> {
    pub fn new(game: &'g GameSpec, moduli: &ModuliReport, settings: ResponseSettings) -> Result<Self> {
        let tensors = (0..game.n())
            .map(|i| rival_rule(game, i, &settings.rule))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            game,
            solver: ResponseSolver::from_moduli(game, moduli, settings),
            tensors,
        })
    }

    pub fn game(&self) -> &GameSpec {
        self.game
    }

    /// `Ψ(f)`: every node of every player's grid replaced by the best
    /// response to `f_{−i}` at that node's type.
    pub fn apply(&self, f: &StrategyProfile) -> Result<StrategyProfile> {
        f.check_against(self.game)?;
        let tasks: Vec<(usize, usize)> = (0..f.n())
            .flat_map(|i| (0..f.grid(i).len()).map(move |k| (i, k)))
            .collect();
        let work = |&(i, k): &(usize, usize)| -> Result<Vec<f64>> {
            let grid = f.grid(i);
            let theta = grid.node(k);
            let mut sample = RivalSample::from_tensor(self.game, f, i, &theta, &self.tensors[i])
                .map_err(|e| e.at_node(i, &theta))?;
            self.solver
                .solve(self.game, i, &mut sample, Some(grid.value(k)))
                .map(|br| br.action)
                .map_err(|e| e.at_node(i, &theta))
        };
        #[cfg(feature = "parallel")]
        let results: Vec<Result<Vec<f64>>> = tasks.par_iter().map(work).collect();
        #[cfg(not(feature = "parallel"))]
        let results: Vec<Result<Vec<f64>>> = tasks.iter().map(work).collect();

        let mut values: Vec<Vec<f64>> = (0..f.n()).map(|i| Vec::with_capacity(f.grid(i).values().len())).collect();
        for ((i, _), r) in tasks.iter().zip(results) {
            values[*i].extend(r?);
        }
        let grids = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| f.grid(i).with_values(v))
            .collect::<Result<Vec<_>>>()?;
        Ok(StrategyProfile::new(grids))
    }
}

/// One application of `Ψ`, with moduli estimated on the fly.
pub fn apply_psi(game: &GameSpec, f: &StrategyProfile, settings: &ResponseSettings) -> Result<StrategyProfile> {
    let moduli = crate::best_response::estimate_moduli(game, &Default::default())?;
    BestResponseMap::new(game, &moduli, settings.clone())?.apply(f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Grid nodes per type axis.
    pub nodes: usize,
    pub norm: Norm,
    /// Contraction runs: target distance to the equilibrium. Monotone
    /// runs: node-wise change at which to stop.
    pub target: f64,
    pub max_iter: usize,
    pub response: ResponseSettings,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            nodes: 101,
            norm: Norm::Inf,
            target: 1e-6,
            max_iter: 500,
            response: ResponseSettings::default(),
        }
    }
}

/// Iterates `f^{k+1} = Ψ(f^k)` from `start` (the box-midpoint profile when
/// `None`). Under a contraction certificate the loop stops once the step is
/// at most `target·(1−α)/α`, which guarantees `‖f^k − f*‖ ≤ target`;
/// otherwise it stops at step `≤ target` and issues no certificate.
pub fn solve_contraction(
    game: &GameSpec,
    moduli: &ModuliReport,
    options: &SolveOptions,
    start: Option<StrategyProfile>,
) -> Result<EquilibriumResult> {
    let map = BestResponseMap::new(game, moduli, options.response.clone())?;
    let mut f = match start {
        Some(p) => {
            p.check_against(game)?;
            p
        }
        None => StrategyProfile::midpoint(game, options.nodes)?,
    };
    let alpha = moduli.contraction;
    let threshold = if moduli.contraction_ok && alpha > 0.0 {
        options.target * (1.0 - alpha) / alpha
    } else {
        options.target
    };
    let mut trace = Vec::new();
    for k in 1..=options.max_iter {
        let next = map.apply(&f)?;
        let step = lp_norm_diff(&next, &f, options.norm, game, &options.response.rule)?.max;
        trace.push(step);
        f = next;
        if step <= threshold {
            let certificate = moduli
                .contraction_ok
                .then(|| step * alpha / (1.0 - alpha));
            return Ok(EquilibriumResult {
                profile: f,
                iterations: k,
                residual: step,
                certificate,
                method: Method::Contraction,
                norm: options.norm,
                trace,
            });
        }
    }
    Err(Error::Convergence {
        iterations: options.max_iter,
        residual: trace.last().copied().unwrap_or(f64::NAN),
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    FromTop,
    FromBottom,
}

/// Lattice iteration from the top or bottom profile. Each iterate must be
/// node-wise below (from the top) or above (from the bottom) its
/// predecessor up to `1e-9`; a violation means the game lacks the
/// complementarity structure and is reported as an order-condition error.
/// Unless `skip_order_check`, the sampled order conditions must pass first.
pub fn solve_monotone(
    game: &GameSpec,
    moduli: &ModuliReport,
    direction: Direction,
    options: &SolveOptions,
    skip_order_check: bool,
) -> Result<EquilibriumResult> {
    const SLACK: f64 = 1e-9;
    if !skip_order_check {
        let report = check_order_conditions(game, 2000, 0);
        if !report.supermodular.pass || !report.rival_differences.pass {
            return Err(Error::OrderCondition(format!(
                "sampled evidence rejects complementarity (supermodular: {}, increasing differences in rival actions: {}); {}",
                report.supermodular.pass, report.rival_differences.pass, report.note
            )));
        }
    }
    let map = BestResponseMap::new(game, moduli, options.response.clone())?;
    let (top, bottom) = top_bottom(game, options.nodes)?;
    let mut f = match direction {
        Direction::FromTop => top,
        Direction::FromBottom => bottom,
    };
    let mut trace = Vec::new();
    for k in 1..=options.max_iter {
        let next = map.apply(&f)?;
        let ordered = match direction {
            Direction::FromTop => next.dominated_by(&f, SLACK),
            Direction::FromBottom => f.dominated_by(&next, SLACK),
        };
        if !ordered {
            return Err(Error::OrderCondition(format!(
                "iterate {k} is not {} its predecessor",
                match direction {
                    Direction::FromTop => "below",
                    Direction::FromBottom => "above",
                }
            )));
        }
        let change = next.max_node_diff(&f)?;
        trace.push(change);
        f = next;
        if change <= options.target {
            return Ok(EquilibriumResult {
                profile: f,
                iterations: k,
                residual: change,
                certificate: None,
                method: match direction {
                    Direction::FromTop => Method::MonotoneFromTop,
                    Direction::FromBottom => Method::MonotoneFromBottom,
                },
                norm: Norm::Inf,
                trace,
            });
        }
    }
    Err(Error::Convergence {
        iterations: options.max_iter,
        residual: trace.last().copied().unwrap_or(f64::NAN),
        trace,
    })
}

/// Outcome of one sampled order condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderCondition {
    pub pass: bool,
    /// Most negative observed second difference (scaled by the step).
    pub worst: f64,
    /// Player and stacked `(a, θ)` point of the worst violation.
    pub witness: Option<(usize, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    /// `∂²u_i/∂a_{ik}∂a_{il} ≥ 0` for `k ≠ l`; automatic when `z_i = 1`.
    pub supermodular: OrderCondition,
    /// `∇_{a_i} u_i` non-decreasing in every rival action.
    pub rival_differences: OrderCondition,
    /// `∇_{a_i} u_i` non-decreasing in `θ_i`.
    pub type_differences: OrderCondition,
    /// Direction in which best responses move with the own type, when it
    /// is the same for every sample.
    pub type_orientation: Option<Orientation>,
    pub samples: usize,
    pub evidence: String,
    pub note: String,
}

/// Samples the sign pattern of second differences of every utility. This
/// is sampled evidence, not a proof.
pub fn check_order_conditions(game: &GameSpec, samples: usize, seed: u64) -> OrderReport {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = game.layout();
    let ta = layout.total_actions();
    let spaces: Vec<_> = game
        .players()
        .iter()
        .map(|p| p.action_space.clone())
        .chain(game.players().iter().map(|p| p.type_space.clone()))
        .collect();
    let joint = crate::space::BoxSpace::product(spaces.iter()).expect("non-empty boxes");
    let mut conds = [0usize; 3].map(|_| OrderCondition {
        pass: true,
        worst: 0.0,
        witness: None,
    });
    let (mut type_up, mut type_down) = (false, false);
    let trivially_supermodular = (0..game.n()).all(|i| layout.action_dim(i) == 1);

    let record = |c: &mut OrderCondition, value: f64, scale: f64, i: usize, x: &[f64]| {
        if value < c.worst {
            c.worst = value;
            if value < -1e-9 * (1.0 + scale) {
                c.pass = false;
                c.witness = Some((i, x.to_vec()));
            }
        }
    };
    for _ in 0..samples {
        let x: Vec<f64> = (0..joint.dim())
            .map(|k| joint.lower()[k] + joint.width(k) * rng.random::<f64>())
            .collect();
        for i in 0..game.n() {
            let zi = layout.action_dim(i);
            let own = layout.actions(i);
            let mut g0 = vec![0.0; zi];
            let mut g1 = vec![0.0; zi];
            game.grad_unchecked(i, &x[..ta], &x[ta..], &mut g0);
            let scale = g0.iter().map(|v| v.abs()).fold(0.0, f64::max);
            // Perturbs coordinate `c` of the stacked point upward (or
            // downward at the upper edge) and returns the signed step.
            let bump = |c: usize, g1: &mut [f64]| -> f64 {
                let h = 1e-4 * joint.width(c);
                let mut y = x.clone();
                let step = if y[c] + h <= joint.upper()[c] { h } else { -h };
                y[c] += step;
                game.grad_unchecked(i, &y[..ta], &y[ta..], g1);
                step
            };
            if !trivially_supermodular {
                for l in own.clone() {
                    let step = bump(l, &mut g1);
                    for k in 0..zi {
                        if own.start + k != l {
                            record(&mut conds[0], (g1[k] - g0[k]) / step, scale, i, &x);
                        }
                    }
                }
            }
            for j in (0..game.n()).filter(|&j| j != i) {
                for c in layout.actions(j) {
                    let step = bump(c, &mut g1);
                    for k in 0..zi {
                        record(&mut conds[1], (g1[k] - g0[k]) / step, scale, i, &x);
                    }
                }
            }
            for c in layout.types(i) {
                let step = bump(ta + c, &mut g1);
                for k in 0..zi {
                    let d = (g1[k] - g0[k]) / step;
                    record(&mut conds[2], d, scale, i, &x);
                    if d > 1e-9 * (1.0 + scale) {
                        type_up = true;
                    } else if d < -1e-9 * (1.0 + scale) {
                        type_down = true;
                    }
                }
            }
        }
    }
    let [supermodular, rival_differences, type_differences] = conds;
    let type_orientation = match (type_up, type_down) {
        (true, false) | (false, false) => Some(Orientation::Increasing),
        (false, true) => Some(Orientation::Decreasing),
        (true, true) => None,
    };
    let mut notes = Vec::new();
    if trivially_supermodular {
        notes.push("one-dimensional actions are trivially supermodular".to_string());
    }
    if !rival_differences.pass {
        notes.push("marginal utility falls in some rival action (strategic substitutes)".to_string());
    }
    match type_orientation {
        Some(Orientation::Decreasing) => {
            notes.push("responses decrease in the own type; negate types to obtain increasing strategies".to_string())
        }
        None => notes.push("responses are not monotone in the own type".to_string()),
        _ => {}
    }
    OrderReport {
        supermodular,
        rival_differences,
        type_differences,
        type_orientation,
        samples,
        evidence: "sampled".into(),
        note: notes.join("; "),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::best_response::{estimate_moduli, ModuliOptions};
    use crate::game::{catalog, DensityModel, Player, QuadraticUtility, UtilityModel};
    use crate::space::BoxSpace;

    fn cournot2() -> (GameSpec, ModuliReport) {
        let g = catalog::cournot2(10.0, 1.0, 1.0, 0.3).unwrap();
        let m = estimate_moduli(&g, &ModuliOptions::default()).unwrap();
        (g, m)
    }

    fn closed_form(game: &GameSpec, nodes: usize) -> StrategyProfile {
        StrategyProfile::from_fn(game, nodes, |_, t| {
            vec![catalog::cournot2_equilibrium(10.0, 1.0, 1.0, 0.3, t[0])]
        })
        .unwrap()
    }

    #[test]
    fn closed_form_is_a_fixed_point() {
        let (g, m) = cournot2();
        let f = closed_form(&g, 21);
        let map = BestResponseMap::new(&g, &m, ResponseSettings::default()).unwrap();
        let psi = map.apply(&f).unwrap();
        assert!(psi.max_node_diff(&f).unwrap() < 1e-5);
    }

    #[test]
    fn responses_stay_inside_the_box() {
        let (g, m) = cournot2();
        let map = BestResponseMap::new(&g, &m, ResponseSettings::default()).unwrap();
        let (top, bottom) = top_bottom(&g, 11).unwrap();
        assert!(map.apply(&top).unwrap().dominated_by(&top, 0.0));
        assert!(bottom.dominated_by(&map.apply(&bottom).unwrap(), 0.0));
    }

    #[test]
    fn contraction_matches_the_closed_form() {
        let (g, m) = cournot2();
        let opts = SolveOptions {
            nodes: 41,
            ..SolveOptions::default()
        };
        let res = solve_contraction(&g, &m, &opts, None).unwrap();
        let exact = closed_form(&g, 41);
        assert!(res.profile.max_node_diff(&exact).unwrap() < 1e-5);
        assert!(res.certificate.unwrap() <= opts.target);
        assert_eq!(res.trace.len(), res.iterations);
    }

    #[test]
    fn non_convergence_carries_the_trace() {
        let (g, m) = cournot2();
        let opts = SolveOptions {
            nodes: 11,
            max_iter: 2,
            target: 1e-12,
            ..SolveOptions::default()
        };
        match solve_contraction(&g, &m, &opts, None) {
            Err(Error::Convergence { trace, iterations, .. }) => {
                assert_eq!(iterations, 2);
                assert_eq!(trace.len(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cournot_fails_the_monotone_preconditions() {
        let (g, m) = cournot2();
        let report = check_order_conditions(&g, 500, 1);
        assert!(report.supermodular.pass);
        assert!(!report.rival_differences.pass);
        assert!(!report.type_differences.pass);
        assert_eq!(report.type_orientation, Some(Orientation::Decreasing));
        assert!(matches!(
            solve_monotone(&g, &m, Direction::FromTop, &SolveOptions::default(), false),
            Err(Error::OrderCondition(_))
        ));
        // Forcing it exposes the broken order along the trajectory.
        let opts = SolveOptions {
            nodes: 11,
            ..SolveOptions::default()
        };
        assert!(matches!(
            solve_monotone(&g, &m, Direction::FromBottom, &opts, true),
            Err(Error::OrderCondition(_))
        ));
    }

    fn two_action_player(off_diagonal: f64) -> GameSpec {
        let player = Player {
            type_space: BoxSpace::unit(1),
            action_space: BoxSpace::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            utility: UtilityModel::Quadratic(QuadraticUtility {
                linear: vec![1.0, 1.0],
                type_coupling: vec![vec![1.0], vec![0.5]],
                // u contains −½aᵀQa, so a +0.5·a₁a₂ term means Q₁₂ = −0.5.
                curvature: vec![vec![2.0, -off_diagonal], vec![-off_diagonal, 2.0]],
                cross: vec![],
            }),
        };
        GameSpec::new(vec![player], DensityModel::ProductUniform).unwrap()
    }

    #[test]
    fn supermodularity_follows_the_cross_partial_sign() {
        let good = check_order_conditions(&two_action_player(0.5), 200, 0);
        assert!(good.supermodular.pass);
        assert_eq!(good.type_orientation, Some(Orientation::Increasing));
        let bad = check_order_conditions(&two_action_player(-0.5), 200, 0);
        assert!(!bad.supermodular.pass);
        assert!(bad.supermodular.witness.is_some());
        assert!((bad.supermodular.worst + 0.5).abs() < 1e-6);
    }

    #[test]
    fn monotone_runs_bracket_and_meet_for_complements() {
        let g = catalog::complements2(2.0, 3.0, 1.0, DensityModel::fgm(0.5).unwrap()).unwrap();
        let m = estimate_moduli(&g, &ModuliOptions::default()).unwrap();
        let opts = SolveOptions {
            nodes: 21,
            target: 1e-9,
            ..SolveOptions::default()
        };
        let top = solve_monotone(&g, &m, Direction::FromTop, &opts, false).unwrap();
        let bottom = solve_monotone(&g, &m, Direction::FromBottom, &opts, false).unwrap();
        assert!(top.profile.max_node_diff(&bottom.profile).unwrap() <= 2e-9);
        assert!(top.profile.grid(0).is_monotone(Orientation::Increasing).monotone);
        let contraction = solve_contraction(
            &g,
            &m,
            &SolveOptions {
                target: 1e-10,
                ..opts
            },
            None,
        )
        .unwrap();
        assert!(contraction.profile.max_node_diff(&top.profile).unwrap() <= 3e-9);
    }
}
