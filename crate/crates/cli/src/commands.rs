use std::path::Path;

use anyhow::{bail, Context, Result};
use cbne::best_response::{estimate_moduli, lipschitz_response_check, CheckOptions, ModuliReport, ResponseCheck};
use cbne::divergence::{
    conditional_distance_profile, joint_measure, kl, tv, w1, ConditionalProfile, KlReport, MeasureGrid, Metric,
    PerturbationSpec,
};
use cbne::equilibrium::{
    check_order_conditions, solve_contraction, solve_monotone, BestResponseMap, Direction, EquilibriumResult,
    OrderReport,
};
use cbne::game::catalog;
use cbne::game::config::{DensityConfig, FgmParams, GameConfig};
use cbne::stability::{
    check_admissibility, run_sensitivity_sweep, run_stability, Admissibility, KlPair, StabilityReport, StabilitySettings,
    SweepReport,
};
use cbne::strategy::{lp_norm_diff, GridSidecar};
use cbne::{GameSpec, StrategyProfile};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{
    metric_name, AlternativeArgs, BaseArgs, DirectionArg, DistanceArgs, Example, ExampleArgs, MeasureArgs, ModuliArgs, SolveArgs,
};
use crate::output::{write_report, Check, Written};

/// Joint grids above this many cells are skipped for joint W1.
const MAX_JOINT_W1_CELLS: usize = 4096;
/// Joint grids above this many cells are skipped for TV and KL.
const MAX_JOINT_CELLS: usize = 1 << 22;

pub struct Outcome {
    pub summary: Vec<String>,
    pub checks: Vec<Check>,
    pub written: Written,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

struct Loaded {
    config: GameConfig,
    game: GameSpec,
}

fn load_game(path: &Path) -> Result<Loaded> {
    load_game_with(path, &BaseArgs { base: None })
}

fn load_game_with(path: &Path, base: &BaseArgs) -> Result<Loaded> {
    let mut config = GameConfig::load(path).with_context(|| format!("cannot load game {}", path.display()))?;
    if let Some(raw) = &base.base {
        config.density = density_arg(raw, "base")?;
    }
    let game = config.build().with_context(|| format!("invalid game {}", path.display()))?;
    Ok(Loaded { config, game })
}

/// Density given as inline JSON or as the path of a JSON file.
fn density_arg(raw: &str, what: &str) -> Result<DensityConfig> {
    let text = if raw.trim_start().starts_with('{') {
        raw.to_string()
    } else {
        std::fs::read_to_string(raw).with_context(|| format!("cannot read {what} density {raw}"))?
    };
    serde_json::from_str(&text).with_context(|| format!("invalid {what} density"))
}

fn alternative(args: &AlternativeArgs) -> Result<DensityConfig> {
    if let Some(rho) = args.rho2 {
        return Ok(DensityConfig::Fgm(FgmParams { rho }));
    }
    let Some(raw) = args.alt.as_deref() else {
        bail!("one of --rho2 or --alt is required");
    };
    density_arg(raw, "alternative")
}

fn perturbation(game: &GameSpec, alt: &DensityConfig, epsilon: Option<f64>) -> Result<PerturbationSpec> {
    let alternative = alt
        .build(game.joint_types())
        .context("invalid alternative density")?;
    let base = game.density().clone();
    Ok(match epsilon {
        Some(e) => PerturbationSpec::mixture(base, alternative, e)?,
        None => PerturbationSpec::direct(base, alternative),
    })
}

fn csv_dumps(label: &str, profile: &StrategyProfile) -> Vec<(String, String)> {
    profile
        .grids()
        .iter()
        .enumerate()
        .map(|(i, g)| (format!("{label}player{i}"), g.to_csv()))
        .collect()
}

fn sidecars(profile: &StrategyProfile) -> Vec<GridSidecar> {
    profile.grids().iter().enumerate().map(|(i, g)| g.sidecar(i)).collect()
}

fn moduli_line(m: &ModuliReport) -> String {
    format!(
        "moduli ({:?}): sigma {:?}, alpha {:.6} ({})",
        m.source,
        m.strong_concavity,
        m.contraction,
        if m.contraction_ok { "contraction" } else { "no contraction" }
    )
}

#[derive(Serialize)]
struct SolveResult<'a> {
    moduli: &'a ModuliReport,
    equilibrium: &'a EquilibriumResult,
    grids: Vec<GridSidecar>,
}

pub fn solve(out: &Path, game_path: &Path, solve: &SolveArgs, moduli: &ModuliArgs) -> Result<Outcome> {
    let g = load_game(game_path)?;
    let m = estimate_moduli(&g.game, &moduli.options())?;
    let options = solve.options(1e-8);
    let result = solve_contraction(&g.game, &m, &options, None)?;
    let config = json!({"game": g.config, "solve": solve, "moduli": moduli, "target": options.target});
    let checks = vec![Check::new(
        "converged",
        true,
        format!("step {:.3e} after {} iterations", result.residual, result.iterations),
    )];
    let report = SolveResult {
        moduli: &m,
        equilibrium: &result,
        grids: sidecars(&result.profile),
    };
    let written = write_report(out, "solve", &config, &checks, &report, &csv_dumps("", &result.profile))?;
    let summary = vec![
        moduli_line(&m),
        format!(
            "solved in {} iterations, last step {:.3e}, certificate {}",
            result.iterations,
            result.residual,
            result.certificate.map_or("none".into(), |c| format!("{c:.3e}"))
        ),
    ];
    Ok(Outcome {
        summary,
        checks,
        written,
    })
}

#[derive(Serialize)]
struct MonotoneResult<'a> {
    moduli: &'a ModuliReport,
    order: &'a OrderReport,
    from_top: Option<&'a EquilibriumResult>,
    from_bottom: Option<&'a EquilibriumResult>,
    contraction: Option<&'a EquilibriumResult>,
    grids: Vec<GridSidecar>,
}

pub fn monotone(
    out: &Path,
    game_path: &Path,
    solve: &SolveArgs,
    moduli: &ModuliArgs,
    direction: DirectionArg,
    skip_order_check: bool,
) -> Result<Outcome> {
    let g = load_game(game_path)?;
    let m = estimate_moduli(&g.game, &moduli.options())?;
    let options = solve.options(1e-8);
    let order = check_order_conditions(&g.game, moduli.samples, moduli.seed);
    let run = |d: Direction| solve_monotone(&g.game, &m, d, &options, skip_order_check);
    let top = matches!(direction, DirectionArg::Top | DirectionArg::Both)
        .then(|| run(Direction::FromTop))
        .transpose()?;
    let bottom = matches!(direction, DirectionArg::Bottom | DirectionArg::Both)
        .then(|| run(Direction::FromBottom))
        .transpose()?;
    let mut checks = Vec::new();
    for (name, r) in [("from_top", &top), ("from_bottom", &bottom)] {
        if let Some(r) = r {
            checks.push(Check::new(
                name,
                true,
                format!("ordered trajectory, {} iterations, last change {:.3e}", r.iterations, r.residual),
            ));
        }
    }
    let agreement = 3.0 * options.target;
    if let (Some(t), Some(b)) = (&top, &bottom) {
        if m.contraction_ok {
            let gap = t.profile.max_node_diff(&b.profile)?;
            checks.push(Check::new(
                "limits_agree",
                gap <= agreement,
                format!("top and bottom limits differ by {gap:.3e} (<= {agreement:.1e})"),
            ));
        }
    }
    let contraction = if m.contraction_ok {
        let c = solve_contraction(&g.game, &m, &options, None)?;
        for (name, r) in [("from_top", &top), ("from_bottom", &bottom)] {
            if let Some(r) = r {
                let gap = r.profile.max_node_diff(&c.profile)?;
                checks.push(Check::new(
                    &format!("{name}_matches_contraction"),
                    gap <= agreement,
                    format!("differs from the contraction solution by {gap:.3e} (<= {agreement:.1e})"),
                ));
            }
        }
        Some(c)
    } else {
        None
    };
    let config = json!({
        "game": g.config,
        "solve": solve,
        "moduli": moduli,
        "target": options.target,
        "direction": direction,
        "skip_order_check": skip_order_check,
    });
    let mut csv = Vec::new();
    if let Some(t) = &top {
        csv.extend(csv_dumps("top-", &t.profile));
    }
    if let Some(b) = &bottom {
        csv.extend(csv_dumps("bottom-", &b.profile));
    }
    let any = top.as_ref().or(bottom.as_ref()).expect("at least one direction");
    let report = MonotoneResult {
        moduli: &m,
        order: &order,
        from_top: top.as_ref(),
        from_bottom: bottom.as_ref(),
        contraction: contraction.as_ref(),
        grids: sidecars(&any.profile),
    };
    let written = write_report(out, "monotone", &config, &checks, &report, &csv)?;
    let summary = vec![
        moduli_line(&m),
        format!(
            "order conditions: supermodular {}, rival differences {}, type orientation {:?}",
            order.supermodular.pass, order.rival_differences.pass, order.type_orientation
        ),
    ];
    Ok(Outcome {
        summary,
        checks,
        written,
    })
}

#[derive(Serialize)]
struct ModuliResult<'a> {
    moduli: &'a ModuliReport,
    response_check: Option<&'a ResponseCheck>,
}

pub fn moduli(out: &Path, game_path: &Path, args: &ModuliArgs, check: bool, trials: usize) -> Result<Outcome> {
    let g = load_game(game_path)?;
    let m = estimate_moduli(&g.game, &args.options())?;
    let response = if check {
        let options = CheckOptions {
            trials,
            seed: args.seed,
            ..CheckOptions::default()
        };
        Some(lipschitz_response_check(&g.game, &m, &options)?)
    } else {
        None
    };
    let mut checks = Vec::new();
    if let Some(r) = &response {
        checks.push(Check::new(
            "lipschitz_responses",
            r.pass,
            match &r.witness {
                Some(w) => format!("{:?} bound violated for player {}: {:.6e} > {:.6e}", w.bound, w.player, w.lhs, w.rhs),
                None => format!("{} trials without violation", r.trials),
            },
        ));
    }
    let config = json!({"game": g.config, "moduli": args, "check": check, "trials": trials});
    let report = ModuliResult {
        moduli: &m,
        response_check: response.as_ref(),
    };
    let written = write_report(out, "moduli", &config, &checks, &report, &[])?;
    let summary = vec![
        moduli_line(&m),
        format!("tau {:?}", m.rival_lipschitz),
        format!("kappa {:?}, kappa/sigma max {:.6}", m.own_type_modulus, m.response_type_ratio),
    ];
    Ok(Outcome {
        summary,
        checks,
        written,
    })
}

#[derive(Serialize)]
struct JointDistances {
    cells: usize,
    w1_cells: usize,
    w1: Option<f64>,
    tv: Option<f64>,
    kl_forward: Option<KlReport>,
    kl_backward: Option<KlReport>,
    notes: Vec<String>,
}

#[derive(Serialize)]
struct DistanceResult {
    perturbed: DensityConfig,
    joint: JointDistances,
    conditional: Vec<ConditionalProfile>,
    kl: KlPair,
    admissibility: Admissibility,
}

fn joint_distances(game: &GameSpec, spec: &PerturbationSpec, args: &DistanceArgs) -> Result<JointDistances> {
    let perturbed = spec.perturbed()?;
    let dim = game.joint_types().dim();
    let cells = args.measure.joint_cells;
    let mut joint = JointDistances {
        cells,
        w1_cells: args.w1_cells,
        w1: None,
        tv: None,
        kl_forward: None,
        kl_backward: None,
        notes: Vec::new(),
    };
    let total = |c: usize| c.checked_pow(dim as u32).unwrap_or(usize::MAX);
    if args.metric.contains(&Metric::W1) {
        if total(args.w1_cells) <= MAX_JOINT_W1_CELLS {
            let grid = MeasureGrid {
                joint_cells: args.w1_cells,
                ..args.measure.grid()
            };
            let (a, b) = (joint_measure(game, &spec.base, &grid)?, joint_measure(game, &perturbed, &grid)?);
            joint.w1 = Some(w1(&a, &b)?);
        } else {
            joint.notes.push(format!(
                "joint W1 skipped: {} cells exceed {MAX_JOINT_W1_CELLS}",
                total(args.w1_cells)
            ));
        }
    }
    let wants_tv = args.metric.contains(&Metric::Tv);
    let wants_kl = args.metric.contains(&Metric::Kl);
    if wants_tv || wants_kl {
        if total(cells) <= MAX_JOINT_CELLS {
            let grid = args.measure.grid();
            let (a, b) = (joint_measure(game, &spec.base, &grid)?, joint_measure(game, &perturbed, &grid)?);
            if wants_tv {
                joint.tv = Some(tv(&a, &b)?);
            }
            if wants_kl {
                joint.kl_forward = Some(kl(&b, &a)?);
                joint.kl_backward = Some(kl(&a, &b)?);
            }
        } else {
            joint
                .notes
                .push(format!("joint TV and KL skipped: {} cells exceed {MAX_JOINT_CELLS}", total(cells)));
        }
    }
    Ok(joint)
}

fn stability_settings(solve: Option<&SolveArgs>, moduli: &ModuliArgs, measure: &MeasureArgs) -> StabilitySettings {
    let defaults = StabilitySettings::default();
    StabilitySettings {
        solve: solve.map_or(defaults.solve, |s| s.options(1e-9)),
        moduli: moduli.options(),
        grid: measure.grid(),
        profile_nodes: measure.nodes,
    }
}

pub fn distance(
    out: &Path,
    game_path: &Path,
    base: &BaseArgs,
    alt: &AlternativeArgs,
    args: &DistanceArgs,
    moduli: &ModuliArgs,
) -> Result<Outcome> {
    let g = load_game_with(game_path, base)?;
    let alt = alternative(alt)?;
    let spec = perturbation(&g.game, &alt, args.epsilon)?;
    let perturbed = spec.perturbed()?;
    let settings = stability_settings(None, moduli, &args.measure);
    let joint = joint_distances(&g.game, &spec, args)?;
    let mut conditional = Vec::new();
    for &metric in &args.metric {
        for i in 0..g.game.n() {
            conditional.push(conditional_distance_profile(
                &g.game,
                &spec,
                i,
                metric,
                args.norm,
                args.measure.nodes,
                &settings.grid,
            )?);
        }
    }
    let kl_pair = KlPair::new(&g.game, &spec.base, &perturbed, &settings.grid)?;
    let admissibility = check_admissibility(&g.game, &spec, &settings)?;
    let config = json!({"game": g.config, "alternative": alt, "distance": args});
    let mut summary = vec![format!(
        "joint: w1 {}, tv {}, kl(mu||eta) {}",
        fmt_opt(joint.w1),
        fmt_opt(joint.tv),
        fmt_opt(joint.kl_forward.map(|k| k.value))
    )];
    summary.extend(joint.notes.iter().cloned());
    for p in &conditional {
        summary.push(format!(
            "player {} conditional {}: max {:.6e}, aggregate {:.6e}",
            p.player,
            metric_name(p.metric),
            p.max,
            p.aggregate
        ));
    }
    summary.push(format!(
        "admissible {}, second moments {:?}",
        admissibility.admissible, admissibility.second_moment
    ));
    let report = DistanceResult {
        perturbed: DensityConfig::from_model(&perturbed),
        joint,
        conditional,
        kl: kl_pair,
        admissibility,
    };
    let written = write_report(out, "distance", &config, &[], &report, &[])?;
    Ok(Outcome {
        summary,
        checks: Vec::new(),
        written,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.6e}"))
}

fn stability_checks(r: &StabilityReport) -> Vec<Check> {
    let mut checks = Vec::new();
    if r.certified {
        checks.push(Check::new(
            "kantorovich_bound",
            r.holds_kantorovich,
            format!("drift_inf {:.6e} vs bound {}", r.drift_inf.max, fmt_opt(r.kantorovich_bound)),
        ));
        checks.push(Check::new(
            "kl_bound",
            r.holds_kl,
            format!("drift_l2 {:.6e} vs bound {}", r.drift_l2.max, fmt_opt(r.kl_bound)),
        ));
    }
    if let Some(reference) = &r.reference {
        checks.push(Check::new(
            "closed_form_bound",
            reference.holds,
            format!("node drift {:.6e} vs {:.6e}", reference.node_drift, reference.bound),
        ));
    }
    checks
}

pub fn stability(
    out: &Path,
    game_path: &Path,
    base: &BaseArgs,
    alt: &AlternativeArgs,
    epsilon: Option<f64>,
    solve: &SolveArgs,
    moduli: &ModuliArgs,
    measure: &MeasureArgs,
) -> Result<Outcome> {
    let g = load_game_with(game_path, base)?;
    let alt = alternative(alt)?;
    let spec = perturbation(&g.game, &alt, epsilon)?;
    let settings = stability_settings(Some(solve), moduli, measure);
    let report = run_stability(&g.game, &spec, &settings)?;
    let checks = stability_checks(&report);
    let config = json!({
        "game": g.config,
        "alternative": alt,
        "epsilon": epsilon,
        "solve": solve,
        "moduli": moduli,
        "measure": measure,
        "target": settings.solve.target,
    });
    let written = write_report(out, "stability", &config, &checks, &report, &[])?;
    let mut summary = vec![
        moduli_line(&report.moduli),
        format!(
            "perturbed alpha {:.6}, admissible {}, kl reliable {}",
            report.perturbed_contraction,
            report.admissibility.admissible,
            report.kl.reliable()
        ),
        format!(
            "drift_inf {:.6e} (bound {}), drift_l2 {:.6e} (bound {})",
            report.drift_inf.max,
            fmt_opt(report.kantorovich_bound),
            report.drift_l2.max,
            fmt_opt(report.kl_bound)
        ),
    ];
    summary.extend(report.note.clone());
    Ok(Outcome {
        summary,
        checks,
        written,
    })
}

pub fn sweep(
    out: &Path,
    game_path: &Path,
    base: &BaseArgs,
    alt: &AlternativeArgs,
    eps: &[f64],
    solve: &SolveArgs,
    moduli: &ModuliArgs,
    measure: &MeasureArgs,
) -> Result<Outcome> {
    let g = load_game_with(game_path, base)?;
    let alt = alternative(alt)?;
    let alternative = alt.build(g.game.joint_types()).context("invalid alternative density")?;
    let settings = stability_settings(Some(solve), moduli, measure);
    let report: SweepReport = run_sensitivity_sweep(&g.game, g.game.density(), &alternative, eps, &settings)?;
    let mut checks = vec![
        Check::new(
            "ratio_stable",
            report.ratio_stable,
            format!("drift/epsilon changes by {} over the two smallest weights", fmt_opt(report.ratio_change)),
        ),
        Check::new("w1_linear", report.w1_linear, "conditional W1 scales linearly in epsilon"),
    ];
    if report.certified {
        checks.push(Check::new(
            "limit_within_bound",
            report.limit_within_bound,
            format!("limit bound {}", fmt_opt(report.limit_bound)),
        ));
    }
    let config = json!({
        "game": g.config,
        "alternative": alt,
        "eps": eps,
        "solve": solve,
        "moduli": moduli,
        "measure": measure,
        "target": settings.solve.target,
    });
    let csv = vec![("table".to_string(), report.to_csv())];
    let written = write_report(out, "sweep", &config, &checks, &report, &csv)?;
    let mut summary = vec![format!("{:>10} {:>14} {:>14} {:>14}", "epsilon", "drift_inf", "drift_l2", "drift/eps")];
    for r in &report.rows {
        summary.push(format!(
            "{:>10.4} {:>14.6e} {:>14.6e} {:>14}",
            r.epsilon,
            r.drift_inf,
            r.drift_l2,
            fmt_opt(r.drift_over_epsilon)
        ));
    }
    summary.extend(report.note.clone());
    Ok(Outcome {
        summary,
        checks,
        written,
    })
}

#[derive(Serialize)]
struct ExampleResult<'a> {
    example: Example,
    moduli: &'a ModuliReport,
    equilibrium: &'a EquilibriumResult,
    max_node_error: Option<f64>,
    fixed_point_residual: Option<f64>,
}

fn close(x: f64, want: f64) -> bool {
    (x - want).abs() <= 4.0 * f64::EPSILON * want.abs().max(1.0)
}

pub fn verify_example(out: &Path, args: &ExampleArgs) -> Result<Outcome> {
    let (a, b, c) = (args.alpha, args.beta, args.cost);
    let game = match args.name {
        Example::Cournot2 => catalog::cournot2(a, b, c, args.rho)?,
        Example::Cournot3 => catalog::cournot3(a, b, c)?,
    };
    let m = estimate_moduli(&game, &Default::default())?;
    let options = args.options();
    let mut checks = vec![Check::new(
        "contraction",
        m.contraction_ok,
        format!("alpha = {:.17}", m.contraction),
    )];
    let result = solve_contraction(&game, &m, &options, None)?;
    let (mut max_node_error, mut fixed_point_residual) = (None, None);
    match args.name {
        Example::Cournot2 => {
            let mut worst: f64 = 0.0;
            for i in 0..2 {
                let grid = result.profile.grid(i);
                for k in 0..grid.len() {
                    let exact = catalog::cournot2_equilibrium(a, b, c, args.rho, grid.node(k)[0]);
                    worst = worst.max((grid.value(k)[0] - exact).abs());
                }
            }
            max_node_error = Some(worst);
            checks.push(Check::new(
                "closed_form",
                worst <= 1e-3,
                format!("max node error {worst:.3e} (<= 1e-3)"),
            ));
        }
        Example::Cournot3 => {
            let sigma = 2.0 * b + c;
            let sigma_ok = m.strong_concavity.iter().all(|&s| close(s, sigma));
            checks.push(Check::new(
                "strong_concavity",
                sigma_ok,
                format!("sigma {:?} (expected {sigma})", m.strong_concavity),
            ));
            let tau_ok = (0..3).all(|i| (0..3).all(|j| close(m.rival_lipschitz[i][j], if i == j { 0.0 } else { b })));
            checks.push(Check::new(
                "rival_lipschitz",
                tau_ok,
                format!("tau {:?} (expected {b} off the diagonal)", m.rival_lipschitz),
            ));
            let expected_alpha = 2.0 * b / sigma;
            checks.push(Check::new(
                "contraction_constant",
                close(m.contraction, expected_alpha),
                format!("alpha {} (expected {expected_alpha})", m.contraction),
            ));
            let map = BestResponseMap::new(&game, &m, options.response.clone())?;
            let next = map.apply(&result.profile)?;
            let residual = lp_norm_diff(&next, &result.profile, options.norm, &game, &options.response.rule)?.max;
            fixed_point_residual = Some(residual);
            checks.push(Check::new(
                "fixed_point_residual",
                residual <= options.target,
                format!("|Psi(f) - f| = {residual:.3e} (<= {:.1e})", options.target),
            ));
        }
    }
    let game_config = GameConfig::from_game(&game).map(|g| serde_json::to_value(g)).transpose()?;
    let config = json!({"example": args, "game": game_config.unwrap_or(Value::Null)});
    let report = ExampleResult {
        example: args.name,
        moduli: &m,
        equilibrium: &result,
        max_node_error,
        fixed_point_residual,
    };
    let written = write_report(out, "verify-example", &config, &checks, &report, &csv_dumps("", &result.profile))?;
    let summary = vec![
        moduli_line(&m),
        format!("solved in {} iterations, last step {:.3e}", result.iterations, result.residual),
    ];
    Ok(Outcome {
        summary,
        checks,
        written,
    })
}
