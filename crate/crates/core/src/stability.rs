//! Equilibrium drift under perturbations of the type distribution, measured
//! against the Kantorovich and KL stability bounds.

use serde::{Deserialize, Serialize};

use crate::best_response::{estimate_moduli, ModuliOptions, ModuliReport};
use crate::divergence::{
    conditional_distance_profile, conditional_measure, joint_measure, kl, type_nodes, ConditionalProfile, KlReport,
    MeasureGrid, Metric, PerturbationKind, PerturbationSpec,
};
use crate::equilibrium::{solve_contraction, EquilibriumResult, SolveOptions};
use crate::error::{Error, Result};
use crate::game::catalog;
use crate::game::config::DensityConfig;
use crate::game::{DensityModel, GameSpec, UtilityModel};
use crate::strategy::{lp_norm_diff, Norm, NormReport};

/// Relative slack allowed when comparing a measured drift with a bound.
pub const BOUND_RELATIVE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct StabilitySettings {
    pub solve: SolveOptions,
    pub moduli: ModuliOptions,
    pub grid: MeasureGrid,
    /// Own-type nodes per axis for conditional distances and
    /// admissibility constants.
    pub profile_nodes: usize,
}

impl Default for StabilitySettings {
    fn default() -> Self {
        Self {
            solve: SolveOptions {
                target: 1e-9,
                ..SolveOptions::default()
            },
            moduli: ModuliOptions::default(),
            grid: MeasureGrid::default(),
            profile_nodes: 101,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityRole {
    Base,
    Perturbed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroDensity {
    pub density: DensityRole,
    pub theta: Vec<f64>,
}

/// Second-moment constants of the conditional likelihood ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    /// `C_i = max_{θ_i} Σ q_μ(·|θ_i)²/q_η(·|θ_i)`; `None` when unbounded.
    pub second_moment: Vec<Option<f64>>,
    /// Own type attaining each `C_i`.
    pub worst_type: Vec<Vec<f64>>,
    /// Both densities strictly positive on the joint grid.
    pub positive: bool,
    pub zero_witness: Option<ZeroDensity>,
    pub admissible: bool,
}

pub fn check_admissibility(game: &GameSpec, spec: &PerturbationSpec, settings: &StabilitySettings) -> Result<Admissibility> {
    require_rivals(game)?;
    let perturbed = spec.perturbed()?;
    let mut zero_witness = None;
    for (role, model) in [(DensityRole::Base, &spec.base), (DensityRole::Perturbed, &perturbed)] {
        if zero_witness.is_some() {
            break;
        }
        if let Some(theta) = model.zero_witness() {
            zero_witness = Some(ZeroDensity { density: role, theta });
            break;
        }
        let joint = game.joint_types();
        let m = joint_measure(game, model, &settings.grid)?;
        if let Some(k) = m.masses().iter().position(|&v| v <= 0.0) {
            zero_witness = Some(ZeroDensity {
                density: role,
                theta: m.center(k),
            });
        } else if let Some(theta) = joint.vertices().into_iter().find(|v| model.joint(joint, v) <= 0.0) {
            zero_witness = Some(ZeroDensity { density: role, theta });
        }
    }
    let mut second_moment = Vec::with_capacity(game.n());
    let mut worst_type = Vec::with_capacity(game.n());
    for i in 0..game.n() {
        let mut worst = Some(0.0);
        let mut at = Vec::new();
        for theta in type_nodes(&game.player(i).type_space, settings.profile_nodes)? {
            let value = match (
                conditional_measure(game, &spec.base, i, &theta, &settings.grid),
                conditional_measure(game, &perturbed, i, &theta, &settings.grid),
            ) {
                (Ok(p), Ok(q)) => ratio_second_moment(p.masses(), q.masses()),
                _ => None,
            };
            match (value, worst) {
                (None, Some(_)) => {
                    worst = None;
                    at = theta;
                }
                (Some(v), Some(w)) if v > w || at.is_empty() => {
                    worst = Some(v);
                    at = theta;
                }
                _ => {}
            }
        }
        second_moment.push(worst);
        worst_type.push(at);
    }
    let positive = zero_witness.is_none();
    let admissible = positive && second_moment.iter().all(Option::is_some);
    Ok(Admissibility {
        second_moment,
        worst_type,
        positive,
        zero_witness,
        admissible,
    })
}

fn ratio_second_moment(p: &[f64], q: &[f64]) -> Option<f64> {
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            total += b * b / a;
        } else if b > 0.0 {
            return None;
        }
    }
    Some(total)
}

fn require_rivals(game: &GameSpec) -> Result<()> {
    if game.n() < 2 {
        return Err(Error::Model("stability analysis needs at least two players".into()));
    }
    Ok(())
}

/// Per-player factors of the stability bounds, from the moduli under the
/// base distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    /// `(β τ_i + ϱ_i)/(σ_i (1 − α))`; `None` without a contraction.
    pub response_gain: Vec<Option<f64>>,
    /// `Diam(Θ_{−i})`.
    pub rival_diameter: Vec<f64>,
}

impl BoundConstants {
    pub fn new(game: &GameSpec, moduli: &ModuliReport) -> Self {
        let response_gain = (0..game.n())
            .map(|i| {
                moduli.contraction_ok.then(|| {
                    (moduli.response_type_ratio * moduli.rival_aggregate[i] + moduli.rival_type_modulus[i])
                        / (moduli.strong_concavity[i] * (1.0 - moduli.contraction))
                })
            })
            .collect();
        let rival_diameter = (0..game.n())
            .map(|i| game.rival_type_space(i).map_or(0.0, |b| b.diameter()))
            .collect();
        Self {
            response_gain,
            rival_diameter,
        }
    }

    /// `max_i gain_i · W1_i`, with `W1_i` the largest conditional distance
    /// over own-type nodes.
    fn kantorovich(&self, conditional_w1: &[f64]) -> Option<f64> {
        self.response_gain
            .iter()
            .zip(conditional_w1)
            .map(|(g, w)| g.map(|g| g * w))
            .try_fold(0.0, |acc: f64, v| v.map(|v| acc.max(v)))
    }

    /// `max_i gain_i · Diam(Θ_{−i}) · kl_root`.
    fn kl(&self, kl_root: f64) -> Option<f64> {
        self.response_gain
            .iter()
            .zip(&self.rival_diameter)
            .map(|(g, d)| g.map(|g| g * d * kl_root))
            .try_fold(0.0, |acc: f64, v| v.map(|v| acc.max(v)))
    }
}

/// KL divergence in both orders on the joint grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlPair {
    /// `KL(η ‖ μ)`.
    pub forward: KlReport,
    /// `KL(μ ‖ η)`.
    pub backward: KlReport,
    /// `min(√(KL(η‖μ)/2), √(KL(μ‖η)/2))`.
    pub min_root: f64,
}

impl KlPair {
    pub fn new(game: &GameSpec, base: &DensityModel, other: &DensityModel, grid: &MeasureGrid) -> Result<Self> {
        let a = joint_measure(game, base, grid)?;
        let b = joint_measure(game, other, grid)?;
        let forward = kl(&a, &b)?;
        let backward = kl(&b, &a)?;
        let min_root = (forward.value / 2.0).sqrt().min((backward.value / 2.0).sqrt());
        Ok(Self {
            forward,
            backward,
            min_root,
        })
    }

    pub fn reliable(&self) -> bool {
        self.forward.reliable && self.backward.reliable
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSummary {
    pub base: DensityConfig,
    pub alternative: DensityConfig,
    pub kind: PerturbationKind,
}

impl From<&PerturbationSpec> for PerturbationSummary {
    fn from(spec: &PerturbationSpec) -> Self {
        Self {
            base: DensityConfig::from_model(&spec.base),
            alternative: DensityConfig::from_model(&spec.alternative),
            kind: spec.kind,
        }
    }
}

/// Closed-form drift bound for the symmetric FGM Cournot duopoly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceBound {
    pub name: String,
    pub bound: f64,
    /// Largest node-wise drift over the strategy grids.
    pub node_drift: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub perturbation: PerturbationSummary,
    pub admissibility: Admissibility,
    /// Moduli under the base distribution; all bound constants use these.
    pub moduli: ModuliReport,
    pub perturbed_contraction: f64,
    pub perturbed_contraction_ok: bool,
    pub constants: BoundConstants,
    /// Largest conditional W1 over own-type nodes, per player.
    pub conditional_w1: Vec<f64>,
    /// Largest change of the conditional W1 profile between neighbouring
    /// nodes, per player.
    pub conditional_w1_node_gap: Vec<f64>,
    pub kl: KlPair,
    /// `‖f*_η − f*_μ‖_∞`.
    pub drift_inf: NormReport,
    /// `‖f*_η − f*_μ‖_{∞,L²(η)}`.
    pub drift_l2: NormReport,
    pub kantorovich_bound: Option<f64>,
    pub kl_bound: Option<f64>,
    /// `bound / drift`.
    pub kantorovich_slack: Option<f64>,
    pub kl_slack: Option<f64>,
    /// Absolute tolerance: solver targets plus the node-gap allowance.
    pub tolerance: f64,
    pub holds_kantorovich: bool,
    pub holds_kl: bool,
    /// Contraction under both distributions, admissibility and reliable KL.
    pub certified: bool,
    pub note: Option<String>,
    pub reference: Option<ReferenceBound>,
    pub base_iterations: usize,
    pub perturbed_iterations: usize,
    pub solve_target: f64,
}

impl StabilityReport {
    /// Every certified inequality holds.
    pub fn passed(&self) -> bool {
        let bounds = !self.certified || (self.holds_kantorovich && self.holds_kl);
        bounds && self.reference.as_ref().is_none_or(|r| r.holds)
    }
}

fn within(measured: f64, bound: Option<f64>, tolerance: f64) -> bool {
    bound.is_some_and(|b| measured <= b * (1.0 + BOUND_RELATIVE_TOLERANCE) + tolerance)
}

fn slack(bound: Option<f64>, drift: f64) -> Option<f64> {
    bound.filter(|_| drift > 0.0).map(|b| b / drift)
}

fn solve_pair(
    first: (&GameSpec, &ModuliReport),
    second: (&GameSpec, &ModuliReport),
    options: &SolveOptions,
) -> Result<(EquilibriumResult, EquilibriumResult)> {
    let run = |(g, m): (&GameSpec, &ModuliReport)| solve_contraction(g, m, options, None);
    #[cfg(feature = "parallel")]
    let (a, b) = rayon::join(|| run(first), || run(second));
    #[cfg(not(feature = "parallel"))]
    let (a, b) = (run(first), run(second));
    Ok((a?, b?))
}

/// Largest difference of neighbouring node values on a `nodes`-per-axis
/// tensor grid.
fn node_gap(values: &[f64], dim: usize, nodes: usize) -> f64 {
    let mut gap: f64 = 0.0;
    for k in 0..values.len() {
        let mut stride = 1;
        for _ in 0..dim {
            if (k / stride) % nodes + 1 < nodes {
                gap = gap.max((values[k + stride] - values[k]).abs());
            }
            stride *= nodes;
        }
    }
    gap
}

fn conditional_w1_profiles(
    game: &GameSpec,
    spec: &PerturbationSpec,
    settings: &StabilitySettings,
) -> Result<Vec<ConditionalProfile>> {
    (0..game.n())
        .map(|i| {
            conditional_distance_profile(game, spec, i, Metric::W1, Norm::Inf, settings.profile_nodes, &settings.grid)
        })
        .collect()
}

/// Node-wise drift and the closed-form bound when the game is the
/// symmetric FGM Cournot duopoly on unit type boxes.
fn cournot_reference(
    game: &GameSpec,
    base: &DensityModel,
    perturbed: &DensityModel,
    a: &EquilibriumResult,
    b: &EquilibriumResult,
    tolerance: f64,
) -> Option<ReferenceBound> {
    let (rho1, rho2) = (base.fgm_rho()?, perturbed.fgm_rho()?);
    if game.n() != 2 {
        return None;
    }
    let params: Vec<_> = game
        .players()
        .iter()
        .map(|p| match &p.utility {
            UtilityModel::Cournot(c) if p.type_space == crate::space::BoxSpace::unit(1) => Some(*c),
            _ => None,
        })
        .collect::<Option<_>>()?;
    if params[0] != params[1] {
        return None;
    }
    let bound = catalog::cournot2_drift_bound(params[0].beta, params[0].cost, rho1, rho2);
    let node_drift = a.profile.max_node_diff(&b.profile).ok()?;
    Some(ReferenceBound {
        name: "cournot2_fgm".into(),
        bound,
        node_drift,
        holds: node_drift <= bound + tolerance,
    })
}

/// Solves the game under `spec.base` and under the perturbation and
/// compares the drift with the Kantorovich bound and the KL bound.
pub fn run_stability(game: &GameSpec, spec: &PerturbationSpec, settings: &StabilitySettings) -> Result<StabilityReport> {
    require_rivals(game)?;
    let perturbed = spec.perturbed()?;
    let base_game = game.with_density(spec.base.clone())?;
    let pert_game = game.with_density(perturbed.clone())?;
    let moduli = estimate_moduli(&base_game, &settings.moduli)?;
    let pert_moduli = estimate_moduli(&pert_game, &settings.moduli)?;
    let admissibility = check_admissibility(game, spec, settings)?;
    let (base_eq, pert_eq) = solve_pair((&base_game, &moduli), (&pert_game, &pert_moduli), &settings.solve)?;

    let rule = &settings.solve.response.rule;
    let drift_inf = lp_norm_diff(&base_eq.profile, &pert_eq.profile, Norm::Inf, &base_game, rule)?;
    let drift_l2 = lp_norm_diff(&base_eq.profile, &pert_eq.profile, Norm::L2, &base_game, rule)?;

    let constants = BoundConstants::new(game, &moduli);
    let profiles = conditional_w1_profiles(&base_game, spec, settings)?;
    let conditional_w1: Vec<f64> = profiles.iter().map(|p| p.max).collect();
    let conditional_w1_node_gap: Vec<f64> = profiles
        .iter()
        .enumerate()
        .map(|(i, p)| node_gap(&p.values, game.type_dim(i), settings.profile_nodes))
        .collect();
    let kl = KlPair::new(game, &spec.base, &perturbed, &settings.grid)?;

    let kantorovich_bound = constants.kantorovich(&conditional_w1);
    let kl_bound = constants.kl(kl.min_root);
    let solver_tolerance = 2.0 * settings.solve.target;
    let gap_allowance = constants
        .response_gain
        .iter()
        .zip(&conditional_w1_node_gap)
        .filter_map(|(g, d)| g.map(|g| g * d))
        .fold(0.0, f64::max);
    let tolerance = solver_tolerance + gap_allowance;
    let holds_kantorovich = within(drift_inf.max, kantorovich_bound, tolerance);
    let holds_kl = within(drift_l2.max, kl_bound, solver_tolerance);

    let mut reasons = Vec::new();
    if !moduli.contraction_ok {
        reasons.push("no contraction under the base distribution");
    }
    if !pert_moduli.contraction_ok {
        reasons.push("no contraction under the perturbed distribution");
    }
    if !admissibility.admissible {
        reasons.push("perturbation is not admissible");
    }
    if !kl.reliable() {
        reasons.push("KL needed the density floor on more than 0.1% of the mass");
    }
    let certified = reasons.is_empty();
    let note = (!certified).then(|| format!("bounds not guaranteed: {}", reasons.join("; ")));
    let reference = cournot_reference(game, &spec.base, &perturbed, &base_eq, &pert_eq, solver_tolerance);

    Ok(StabilityReport {
        perturbation: spec.into(),
        admissibility,
        perturbed_contraction: pert_moduli.contraction,
        perturbed_contraction_ok: pert_moduli.contraction_ok,
        moduli,
        constants,
        conditional_w1,
        conditional_w1_node_gap,
        kl,
        kantorovich_slack: slack(kantorovich_bound, drift_inf.max),
        kl_slack: slack(kl_bound, drift_l2.max),
        drift_inf,
        drift_l2,
        kantorovich_bound,
        kl_bound,
        tolerance,
        holds_kantorovich,
        holds_kl,
        certified,
        note,
        reference,
        base_iterations: base_eq.iterations,
        perturbed_iterations: pert_eq.iterations,
        solve_target: settings.solve.target,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub drift_inf: f64,
    pub drift_l2: f64,
    /// `drift_l2 / ε`; `None` at `ε = 0`.
    pub drift_over_epsilon: Option<f64>,
    pub kantorovich_bound: Option<f64>,
    pub kl_bound: Option<f64>,
    /// `max |W1(η_i(·|θ_i), μ_ε,i(·|θ_i)) − ε W1(η_i(·|θ_i), η̂_i(·|θ_i))|`.
    pub w1_linearity_error: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub base: DensityConfig,
    pub alternative: DensityConfig,
    pub moduli: ModuliReport,
    pub constants: BoundConstants,
    /// Largest own-type marginal gap between base and alternative.
    pub marginal_gap: f64,
    /// KL between base and alternative.
    pub kl: KlPair,
    /// Limit bound on `drift_l2/ε` as `ε → 0`.
    pub limit_bound: Option<f64>,
    pub rows: Vec<SweepRow>,
    /// Relative change of `drift_l2/ε` over the two smallest `ε`.
    pub ratio_change: Option<f64>,
    pub ratio_stable: bool,
    pub limit_within_bound: bool,
    /// Drift non-decreasing in `ε` along the sweep (observed, not required).
    pub drift_monotone: bool,
    pub w1_linear: bool,
    pub certified: bool,
    pub note: Option<String>,
}

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.ratio_stable && self.w1_linear && (!self.certified || self.limit_within_bound)
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.16e}"));
        let mut out = String::from("epsilon,drift_inf,drift_l2,drift_over_epsilon,kantorovich_bound,kl_bound,limit_bound\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{},{},{},{}\n",
                r.epsilon,
                r.drift_inf,
                r.drift_l2,
                opt(r.drift_over_epsilon),
                opt(r.kantorovich_bound),
                opt(r.kl_bound),
                opt(self.limit_bound)
            ));
        }
        out
    }
}

/// Largest own-type relative stability threshold for the ratio test.
pub const RATIO_STABILITY: f64 = 0.05;
/// Tolerance of the conditional W1 linearity check.
pub const W1_LINEARITY_TOLERANCE: f64 = 1e-8;
/// Tolerance on equal own-type marginals.
pub const MARGINAL_TOLERANCE: f64 = 1e-9;

/// Solves under `μ_ε = (1 − ε)η + εη̂` for each `ε` in `epsilons`
/// (decreasing, within `[0, 0.5]`) and tracks `drift_l2/ε` against the
/// limit bound.
pub fn run_sensitivity_sweep(
    game: &GameSpec,
    base: &DensityModel,
    alternative: &DensityModel,
    epsilons: &[f64],
    settings: &StabilitySettings,
) -> Result<SweepReport> {
    require_rivals(game)?;
    if epsilons.is_empty() || epsilons.iter().any(|e| !(0.0..=0.5).contains(e)) {
        return Err(Error::Model(format!("mixture weights {epsilons:?} must be non-empty and lie in [0, 0.5]")));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Model(format!("mixture weights {epsilons:?} must be strictly decreasing")));
    }
    let base_game = game.with_density(base.clone())?;
    let marginal_gap = own_marginal_gap(&base_game, base, alternative, settings.profile_nodes)?;

    let moduli = estimate_moduli(&base_game, &settings.moduli)?;
    let constants = BoundConstants::new(game, &moduli);
    let kl_full = KlPair::new(game, base, alternative, &settings.grid)?;
    let limit_bound = constants.kl(kl_full.min_root);
    let full_spec = PerturbationSpec::direct(base.clone(), alternative.clone());
    let full_w1 = conditional_w1_profiles(&base_game, &full_spec, settings)?;
    let base_eq = solve_contraction(&base_game, &moduli, &settings.solve, None)?;
    let rule = &settings.solve.response.rule;

    let row = |&eps: &f64| -> Result<(SweepRow, bool)> {
        let spec = PerturbationSpec::mixture(base.clone(), alternative.clone(), eps)?;
        let mixed = spec.perturbed()?;
        let g = game.with_density(mixed.clone())?;
        let m = estimate_moduli(&g, &settings.moduli)?;
        let eq = solve_contraction(&g, &m, &settings.solve, None)?;
        let drift_inf = lp_norm_diff(&base_eq.profile, &eq.profile, Norm::Inf, &base_game, rule)?.max;
        let drift_l2 = lp_norm_diff(&base_eq.profile, &eq.profile, Norm::L2, &base_game, rule)?.max;
        let w1 = conditional_w1_profiles(&base_game, &spec, settings)?;
        let w1_linearity_error = w1
            .iter()
            .zip(&full_w1)
            .flat_map(|(a, b)| a.values.iter().zip(&b.values).map(|(x, y)| (x - eps * y).abs()))
            .fold(0.0, f64::max);
        let conditional: Vec<f64> = w1.iter().map(|p| p.max).collect();
        let kl = KlPair::new(game, base, &mixed, &settings.grid)?;
        Ok((
            SweepRow {
                epsilon: eps,
                drift_inf,
                drift_l2,
                drift_over_epsilon: (eps > 0.0).then(|| drift_l2 / eps),
                kantorovich_bound: constants.kantorovich(&conditional),
                kl_bound: constants.kl(kl.min_root),
                w1_linearity_error,
                iterations: eq.iterations,
            },
            m.contraction_ok,
        ))
    };
    #[cfg(feature = "parallel")]
    let results: Vec<(SweepRow, bool)> = {
        use rayon::prelude::*;
        epsilons.par_iter().map(row).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<(SweepRow, bool)> = epsilons.iter().map(row).collect::<Result<_>>()?;
    let all_contract = results.iter().all(|r| r.1);
    let rows: Vec<SweepRow> = results.into_iter().map(|r| r.0).collect();

    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.drift_over_epsilon).collect();
    let ratio_change = match ratios.as_slice() {
        [.., prev, last] => Some((last - prev).abs() / prev.abs().max(f64::MIN_POSITIVE)),
        _ => None,
    };
    let ratio_stable = ratio_change.is_some_and(|c| c <= RATIO_STABILITY);
    let limit_within_bound = match (rows.iter().rev().find(|r| r.epsilon > 0.0), limit_bound) {
        (Some(r), Some(b)) => {
            r.drift_l2 / r.epsilon <= b * (1.0 + BOUND_RELATIVE_TOLERANCE) + 2.0 * settings.solve.target / r.epsilon
        }
        _ => false,
    };
    let drift_monotone = rows.windows(2).all(|w| w[1].drift_l2 <= w[0].drift_l2 + 2.0 * settings.solve.target);
    let w1_linear = rows.iter().all(|r| r.w1_linearity_error <= W1_LINEARITY_TOLERANCE);

    let mut reasons = Vec::new();
    if !moduli.contraction_ok || !all_contract {
        reasons.push("no contraction along the mixture path");
    }
    if !kl_full.reliable() {
        reasons.push("KL needed the density floor on more than 0.1% of the mass");
    }
    let certified = reasons.is_empty();
    Ok(SweepReport {
        base: DensityConfig::from_model(base),
        alternative: DensityConfig::from_model(alternative),
        moduli,
        constants,
        marginal_gap,
        kl: kl_full,
        limit_bound,
        rows,
        ratio_change,
        ratio_stable,
        limit_within_bound,
        drift_monotone,
        w1_linear,
        certified,
        note: (!certified).then(|| format!("bounds not guaranteed: {}", reasons.join("; "))),
    })
}

/// Largest gap between the own-type marginals of two densities over the
/// own-type nodes; errors when it exceeds [`MARGINAL_TOLERANCE`].
fn own_marginal_gap(game: &GameSpec, base: &DensityModel, alternative: &DensityModel, nodes: usize) -> Result<f64> {
    let mut largest: f64 = 0.0;
    for i in 0..game.n() {
        let mut gap: f64 = 0.0;
        for theta in type_nodes(&game.player(i).type_space, nodes)? {
            let a = base.marginal(game.joint_types(), game.layout(), i, &theta);
            let b = alternative.marginal(game.joint_types(), game.layout(), i, &theta);
            gap = gap.max((a - b).abs());
        }
        if gap > MARGINAL_TOLERANCE {
            return Err(Error::MarginalMismatch { player: i, gap });
        }
        largest = largest.max(gap);
    }
    Ok(largest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::TabulatedDensity;
    use crate::space::BoxSpace;

    fn fast() -> StabilitySettings {
        let mut s = StabilitySettings::default();
        s.solve.nodes = 21;
        s.profile_nodes = 21;
        s.grid.joint_cells = 32;
        s.grid.conditional_cells = 128;
        s
    }

    fn fgm_pair(r1: f64, r2: f64) -> PerturbationSpec {
        PerturbationSpec::direct(DensityModel::fgm(r1).unwrap(), DensityModel::fgm(r2).unwrap())
    }

    #[test]
    fn identical_distributions_have_unit_constants() {
        let game = catalog::cournot2(10.0, 1.0, 1.0, 0.3).unwrap();
        let a = check_admissibility(&game, &fgm_pair(0.3, 0.3), &fast()).unwrap();
        assert!(a.admissible);
        for c in &a.second_moment {
            assert!((c.unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fgm_constants_are_below_the_density_ratio_bound() {
        let game = catalog::cournot2(10.0, 1.0, 1.0, 0.0).unwrap();
        let a = check_admissibility(&game, &fgm_pair(0.0, 0.6), &fast()).unwrap();
        assert!(a.admissible);
        for c in &a.second_moment {
            let c = c.unwrap();
            assert!(c > 1.0 && c <= 16.0, "{c}");
        }
    }

    #[test]
    fn zero_cell_breaks_equivalence() {
        let game = catalog::cournot2(10.0, 1.0, 1.0, 0.0).unwrap();
        let mut values = vec![1.0; 9];
        values[4] = 0.0;
        let tab = TabulatedDensity::new(BoxSpace::unit(2), vec![3, 3], values).unwrap();
        let spec = PerturbationSpec::direct(DensityModel::ProductUniform, DensityModel::GridTabulated(tab));
        let a = check_admissibility(&game, &spec, &fast()).unwrap();
        assert!(!a.admissible && !a.positive);
        let w = a.zero_witness.unwrap();
        assert_eq!(w.density, DensityRole::Perturbed);
        assert_eq!(w.theta, vec![0.5, 0.5]);
    }

    #[test]
    fn no_perturbation_means_no_drift() {
        let game = catalog::cournot2(10.0, 1.0, 1.0, 0.3).unwrap();
        let r = run_stability(&game, &fgm_pair(0.3, 0.3), &fast()).unwrap();
        assert_eq!(r.drift_inf.max, 0.0);
        assert_eq!(r.kantorovich_bound, Some(0.0));
        assert!(r.certified && r.holds_kantorovich && r.holds_kl && r.passed());
    }

    #[test]
    fn bounds_dominate_the_cournot_drift() {
        let game = catalog::cournot2(10.0, 1.0, 1.0, 0.3).unwrap();
        let r = run_stability(&game, &fgm_pair(0.3, 0.31), &fast()).unwrap();
        assert!(r.certified);
        assert!(r.drift_inf.max > 0.0);
        assert!(r.drift_inf.max <= r.kantorovich_bound.unwrap());
        assert!(r.drift_l2.max <= r.kl_bound.unwrap());
        let reference = r.reference.unwrap();
        assert!(reference.holds);
        assert!((reference.bound - 3.0 / 128.0 * 0.01).abs() < 1e-15);
    }

    #[test]
    fn kl_bound_takes_the_smaller_order() {
        let game = catalog::cournot2(10.0, 1.0, 1.0, 0.0).unwrap();
        let r = run_stability(&game, &fgm_pair(-0.5, 0.6), &fast()).unwrap();
        let f = (r.kl.forward.value / 2.0).sqrt();
        let b = (r.kl.backward.value / 2.0).sqrt();
        assert!((f - b).abs() > 1e-6);
        assert_eq!(r.kl.min_root, f.min(b));
    }

    #[test]
    fn sweep_rejects_mismatched_marginals_and_bad_weights() {
        let game = catalog::cournot2(10.0, 1.0, 1.0, 0.0).unwrap();
        let tab = TabulatedDensity::new(BoxSpace::unit(2), vec![2, 2], vec![1.0, 1.0, 2.0, 2.0]).unwrap();
        let alt = DensityModel::GridTabulated(tab);
        let err = run_sensitivity_sweep(&game, &DensityModel::ProductUniform, &alt, &[0.2, 0.1], &fast());
        assert!(matches!(err, Err(Error::MarginalMismatch { player: 0, .. })), "{err:?}");
        let fgm = DensityModel::fgm(0.6).unwrap();
        assert!(run_sensitivity_sweep(&game, &DensityModel::ProductUniform, &fgm, &[0.1, 0.2], &fast()).is_err());
        assert!(run_sensitivity_sweep(&game, &DensityModel::ProductUniform, &fgm, &[0.7], &fast()).is_err());
    }

    #[test]
    fn sweep_ratio_settles_and_zero_weight_has_no_drift() {
        let game = catalog::cournot2(10.0, 1.0, 1.0, 0.0).unwrap();
        let r = run_sensitivity_sweep(
            &game,
            &DensityModel::fgm(0.0).unwrap(),
            &DensityModel::fgm(0.6).unwrap(),
            &[0.4, 0.2, 0.1, 0.05, 0.0],
            &fast(),
        )
        .unwrap();
        assert_eq!(r.rows.last().unwrap().drift_inf, 0.0);
        assert!(r.ratio_stable && r.w1_linear && r.limit_within_bound, "{r:?}");
        assert!(r.passed());
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn node_gap_on_a_square_grid() {
        let values = [0.0, 1.0, 3.0, 0.5, 0.5, 0.5, 0.0, 0.0, 0.0];
        assert_eq!(node_gap(&values, 2, 3), 2.5);
    }
}
