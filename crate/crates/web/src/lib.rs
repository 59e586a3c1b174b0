//! Browser bindings for the FGM Cournot duopoly: equilibrium against the
//! closed form, equilibrium drift against its bounds, and the conditional
//! type densities behind the distances.
//!
//! Each export returns a JSON string; the plain Rust functions behind them
//! are what the native tests exercise.

use cbne::best_response::estimate_moduli;
use cbne::divergence::{conditional_measure, kl, tv, w1, MeasureGrid, PerturbationSpec};
use cbne::equilibrium::{solve_contraction, SolveOptions};
use cbne::game::catalog;
use cbne::stability::{run_stability, StabilitySettings};
use cbne::{DensityModel, GameSpec};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_NODES: usize = 401;
const MAX_CELLS: usize = 1024;

fn check_nodes(nodes: usize) -> cbne::Result<()> {
    if (2..=MAX_NODES).contains(&nodes) {
        Ok(())
    } else {
        Err(cbne::Error::Model(format!("grid of {nodes} nodes must lie in 2..={MAX_NODES}")))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Cournot2Solution {
    pub types: Vec<f64>,
    /// Player 0's computed strategy; the game is symmetric.
    pub computed: Vec<f64>,
    pub closed_form: Vec<f64>,
    pub max_error: f64,
    pub iterations: usize,
    pub contraction: f64,
}

pub fn cournot2_solution(alpha: f64, beta: f64, cost: f64, rho: f64, nodes: usize) -> cbne::Result<Cournot2Solution> {
    check_nodes(nodes)?;
    let game = catalog::cournot2(alpha, beta, cost, rho)?;
    let moduli = estimate_moduli(&game, &Default::default())?;
    let options = SolveOptions {
        nodes,
        target: 1e-9,
        ..SolveOptions::default()
    };
    let result = solve_contraction(&game, &moduli, &options, None)?;
    let grid = result.profile.grid(0);
    let types: Vec<f64> = (0..grid.len()).map(|k| grid.node(k)[0]).collect();
    let computed: Vec<f64> = (0..grid.len()).map(|k| grid.value(k)[0]).collect();
    let closed_form: Vec<f64> = types
        .iter()
        .map(|&t| catalog::cournot2_equilibrium(alpha, beta, cost, rho, t))
        .collect();
    let max_error = computed
        .iter()
        .zip(&closed_form)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(Cournot2Solution {
        types,
        computed,
        closed_form,
        max_error,
        iterations: result.iterations,
        contraction: moduli.contraction,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityPair {
    pub types: Vec<f64>,
    pub base: Vec<f64>,
    pub perturbed: Vec<f64>,
    pub drift_inf: f64,
    pub drift_l2: f64,
    pub kantorovich_bound: Option<f64>,
    pub kl_bound: Option<f64>,
    pub closed_form_bound: Option<f64>,
    pub certified: bool,
    pub passed: bool,
}

/// Default Cournot duopoly (alpha 10, beta 1, cost 1) under FGM(`rho1`)
/// against FGM(`rho2`).
pub fn stability_pair(rho1: f64, rho2: f64, nodes: usize) -> cbne::Result<StabilityPair> {
    check_nodes(nodes)?;
    let game = catalog::cournot2(10.0, 1.0, 1.0, rho1)?;
    let spec = PerturbationSpec::direct(game.density().clone(), DensityModel::fgm(rho2)?);
    let mut settings = StabilitySettings {
        profile_nodes: nodes,
        ..StabilitySettings::default()
    };
    settings.solve.nodes = nodes;
    let report = run_stability(&game, &spec, &settings)?;
    let (base, perturbed) = (strategy(&game, rho1, nodes)?, strategy(&game, rho2, nodes)?);
    Ok(StabilityPair {
        types: (0..nodes).map(|k| k as f64 / (nodes - 1) as f64).collect(),
        base,
        perturbed,
        drift_inf: report.drift_inf.max,
        drift_l2: report.drift_l2.max,
        kantorovich_bound: report.kantorovich_bound,
        kl_bound: report.kl_bound,
        closed_form_bound: report.reference.as_ref().map(|r| r.bound),
        certified: report.certified,
        passed: report.passed(),
    })
}

/// Player 0's equilibrium strategy of `game` re-solved under FGM(`rho`).
fn strategy(game: &GameSpec, rho: f64, nodes: usize) -> cbne::Result<Vec<f64>> {
    let game = game.with_density(DensityModel::fgm(rho)?)?;
    let moduli = estimate_moduli(&game, &Default::default())?;
    let options = SolveOptions {
        nodes,
        target: 1e-9,
        ..SolveOptions::default()
    };
    let grid = solve_contraction(&game, &moduli, &options, None)?.profile.grid(0).clone();
    Ok((0..grid.len()).map(|k| grid.value(k)[0]).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionalDensities {
    pub theta: f64,
    /// Rival-type cell centers.
    pub rival: Vec<f64>,
    pub base: Vec<f64>,
    pub perturbed: Vec<f64>,
    pub w1: f64,
    pub tv: f64,
    /// `KL(perturbed ‖ base)`.
    pub kl: f64,
}

/// Conditional densities of the rival's type given own type `theta` under
/// FGM(`rho1`) and FGM(`rho2`), with their distances.
pub fn conditional_densities(rho1: f64, rho2: f64, theta: f64, cells: usize) -> cbne::Result<ConditionalDensities> {
    if !(2..=MAX_CELLS).contains(&cells) {
        return Err(cbne::Error::Model(format!("{cells} cells must lie in 2..={MAX_CELLS}")));
    }
    let game = catalog::cournot2(10.0, 1.0, 1.0, rho1)?;
    let grid = MeasureGrid {
        conditional_cells: cells,
        ..MeasureGrid::default()
    };
    let own = [theta];
    let a = conditional_measure(&game, game.density(), 0, &own, &grid)?;
    let b = conditional_measure(&game, &DensityModel::fgm(rho2)?, 0, &own, &grid)?;
    let width = 1.0 / cells as f64;
    Ok(ConditionalDensities {
        theta,
        rival: (0..cells).map(|k| a.center(k)[0]).collect(),
        base: a.masses().iter().map(|m| m / width).collect(),
        perturbed: b.masses().iter().map(|m| m / width).collect(),
        w1: w1(&a, &b)?,
        tv: tv(&a, &b)?,
        kl: kl(&b, &a)?.value,
    })
}

fn to_js<T: Serialize>(value: cbne::Result<T>) -> Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = solveCournot2)]
pub fn solve_cournot2_js(alpha: f64, beta: f64, cost: f64, rho: f64, nodes: usize) -> Result<String, JsError> {
    to_js(cournot2_solution(alpha, beta, cost, rho, nodes))
}

#[wasm_bindgen(js_name = stabilityPair)]
pub fn stability_pair_js(rho1: f64, rho2: f64, nodes: usize) -> Result<String, JsError> {
    to_js(stability_pair(rho1, rho2, nodes))
}

#[wasm_bindgen(js_name = conditionalDensities)]
pub fn conditional_densities_js(rho1: f64, rho2: f64, theta: f64, cells: usize) -> Result<String, JsError> {
    to_js(conditional_densities(rho1, rho2, theta, cells))
}
