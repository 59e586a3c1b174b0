//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Oracles here are independent of the solver code paths they
//! check (closed forms, brute-force scans, plain trapezoid integration).

use std::process::ExitCode;
use std::time::Instant;

use cbne::best_response::{estimate_moduli, lipschitz_response_check, random_profile, CheckOptions, ModuliOptions};
use cbne::divergence::{conditional_kl_average, kl, tv, w1, GriddedMeasure};
use cbne::equilibrium::{solve_contraction, BestResponseMap, SolveOptions};
use cbne::expectation::{expected_grad, expected_utility};
use cbne::game::catalog;
use cbne::stability::{run_sensitivity_sweep, run_stability, StabilitySettings};
use cbne::strategy::top_bottom;
use cbne::{BoxSpace, DensityModel, GameSpec, QuadratureRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    format!("error: {e}")
}

const ALPHA: f64 = 10.0;
const BETA: f64 = 1.0;
const COST: f64 = 1.0;

fn closed_form_recovery() -> Outcome {
    let rho = 0.3;
    let start = Instant::now();
    let game = catalog::cournot2(ALPHA, BETA, COST, rho).map_err(fail)?;
    let moduli = estimate_moduli(&game, &ModuliOptions::default()).map_err(fail)?;
    let options = SolveOptions {
        nodes: 101,
        target: 1e-8,
        response: cbne::best_response::ResponseSettings {
            rule: QuadratureRule::gauss_legendre(32),
            ..Default::default()
        },
        ..SolveOptions::default()
    };
    let result = solve_contraction(&game, &moduli, &options, None).map_err(fail)?;
    let elapsed = start.elapsed().as_secs_f64();
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        let grid = result.profile.grid(i);
        for k in 0..grid.len() {
            let theta = grid.node(k)[0];
            let exact = catalog::cournot2_equilibrium(ALPHA, BETA, COST, rho, theta);
            worst = worst.max((grid.value(k)[0] - exact).abs());
        }
    }
    check(
        worst <= 1e-3 && elapsed <= 30.0,
        format!("max node error {worst:.3e} (<= 1e-3), {} iterations, {elapsed:.2}s (<= 30s)", result.iterations),
    )
}

fn contraction_constants() -> Outcome {
    let game = catalog::cournot3(ALPHA, BETA, COST).map_err(fail)?;
    let m = estimate_moduli(&game, &ModuliOptions::default()).map_err(fail)?;
    let exact = |x: f64, want: f64| (x - want).abs() <= 4.0 * f64::EPSILON * want.abs();
    let sigma_ok = m.strong_concavity.iter().all(|&s| exact(s, 3.0));
    let tau_ok = (0..3).all(|i| (0..3).filter(|&j| j != i).all(|j| exact(m.rival_lipschitz[i][j], 1.0)));
    let alpha_ok = exact(m.contraction, 2.0 / 3.0) && m.contraction_ok;
    let options = SolveOptions {
        nodes: 21,
        target: 1e-10,
        ..SolveOptions::default()
    };
    let result = solve_contraction(&game, &m, &options, None).map_err(fail)?;
    let trace = &result.trace;
    // Ratios of successive steps after the third iteration, while the steps
    // are still well above rounding.
    let worst_ratio = trace
        .windows(2)
        .enumerate()
        .filter(|(k, w)| k + 2 > 3 && w[0] > 1e-12)
        .map(|(_, w)| w[1] / w[0])
        .fold(0.0, f64::max);
    let a = m.contraction;
    let threshold = options.target * (1.0 - a) / a;
    let banach = 1 + ((threshold / trace[0]).ln() / a.ln()).ceil().max(0.0) as usize;
    check(
        sigma_ok && tau_ok && alpha_ok && worst_ratio <= a + 0.05 && result.iterations <= banach + 2,
        format!(
            "sigma {:?}, tau_01 {}, alpha {}, worst step ratio {worst_ratio:.4} (<= {:.4}), iterations {} (<= {} + 2)",
            m.strong_concavity,
            m.rival_lipschitz[0][1],
            m.contraction,
            a + 0.05,
            result.iterations,
            banach
        ),
    )
}

fn lipschitz_responses() -> Outcome {
    let games = [
        ("cournot2", catalog::cournot2(ALPHA, BETA, COST, 0.3).map_err(fail)?),
        ("cournot3", catalog::cournot3(ALPHA, BETA, COST).map_err(fail)?),
        ("random_quadratic", catalog::random_quadratic(11, 0.4).map_err(fail)?),
    ];
    let mut details = Vec::new();
    let mut ok = true;
    for (name, game) in &games {
        let m = estimate_moduli(game, &ModuliOptions::default()).map_err(fail)?;
        if !m.contraction_ok {
            return Err(format!("{name}: moduli not certified"));
        }
        let r = lipschitz_response_check(game, &m, &CheckOptions::default()).map_err(fail)?;
        ok &= r.pass;
        let own = r
            .own_type_ratio
            .iter()
            .zip(&r.own_type_bound)
            .map(|(o, b)| o / b)
            .fold(0.0, f64::max);
        let rival = r.rival_ratio.iter().copied().fold(0.0, f64::max);
        details.push(format!(
            "{name}: {} trials, own-type use {own:.3}, rival use {rival:.3}{}",
            r.trials,
            r.witness.map_or(String::new(), |w| format!(", violation {w:?}"))
        ));
    }
    check(ok, details.join("; "))
}

/// Expected utility of player `i` by trapezoid integration over the rival's
/// scalar type with the joint density as weight.
fn trapezoid_expected_utility(game: &GameSpec, profile: &cbne::StrategyProfile, i: usize, theta_i: f64, a_i: f64) -> f64 {
    let j = 1 - i;
    let n = 2000;
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..=n {
        let t = k as f64 / n as f64;
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        let mut theta = [0.0; 2];
        theta[i] = theta_i;
        theta[j] = t;
        let q = game.joint_density(&theta) * w;
        let mut a = [0.0; 2];
        a[i] = a_i;
        a[j] = profile.grid(j).eval(&[t]).unwrap()[0];
        num += q * game.evaluate_utility(i, &a, &theta).unwrap();
        den += q;
    }
    num / den
}

fn brute_force_response(game: &GameSpec, profile: &cbne::StrategyProfile, i: usize, theta_i: f64) -> f64 {
    let space = &game.player(i).action_space;
    let (mut lo, mut hi) = (space.lower()[0], space.upper()[0]);
    let mut best = lo;
    for _ in 0..2 {
        let step = (hi - lo) / 200.0;
        let mut best_value = f64::NEG_INFINITY;
        for k in 0..=200 {
            let a = lo + k as f64 * step;
            let v = trapezoid_expected_utility(game, profile, i, theta_i, a);
            if v > best_value {
                best_value = v;
                best = a;
            }
        }
        lo = (best - step).max(space.lower()[0]);
        hi = (best + step).min(space.upper()[0]);
    }
    best
}

fn monotone_iteration() -> Outcome {
    let game = catalog::complements2(2.0, 3.0, 1.0, DensityModel::fgm(0.5).map_err(fail)?).map_err(fail)?;
    let m = estimate_moduli(&game, &ModuliOptions::default()).map_err(fail)?;
    let nodes = 101;
    let target = 1e-9;
    let map = BestResponseMap::new(&game, &m, Default::default()).map_err(fail)?;
    let (top, bottom) = top_bottom(&game, nodes).map_err(fail)?;
    let iterate = |mut f: cbne::StrategyProfile, down: bool| -> Result<(cbne::StrategyProfile, bool, usize), String> {
        let mut ordered = true;
        for k in 1..=500 {
            let next = map.apply(&f).map_err(fail)?;
            ordered &= if down {
                next.dominated_by(&f, 1e-9)
            } else {
                f.dominated_by(&next, 1e-9)
            };
            let change = next.max_node_diff(&f).map_err(fail)?;
            f = next;
            if change <= target {
                return Ok((f, ordered, k));
            }
        }
        Err("lattice iteration did not settle".into())
    };
    let (upper, down_ok, up_iters) = iterate(top, true)?;
    let (lower, up_ok, low_iters) = iterate(bottom, false)?;
    let contraction = solve_contraction(
        &game,
        &m,
        &SolveOptions {
            nodes,
            target,
            ..SolveOptions::default()
        },
        None,
    )
    .map_err(fail)?;
    let gap_limits = upper.max_node_diff(&lower).map_err(fail)?;
    let gap_contraction = upper
        .max_node_diff(&contraction.profile)
        .map_err(fail)?
        .max(lower.max_node_diff(&contraction.profile).map_err(fail)?);

    let mut oracle_gap: f64 = 0.0;
    for i in 0..2 {
        for theta in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let brute = brute_force_response(&game, &contraction.profile, i, theta);
            let solved = contraction.profile.grid(i).eval(&[theta]).map_err(fail)?[0];
            oracle_gap = oracle_gap.max((brute - solved).abs());
        }
    }
    check(
        down_ok && up_ok && gap_limits <= 3.0 * target && gap_contraction <= 3.0 * target && oracle_gap <= 1e-3,
        format!(
            "from top non-increasing: {down_ok} ({up_iters} steps), from bottom non-decreasing: {up_ok} ({low_iters} steps), \
             limits gap {gap_limits:.2e}, vs contraction {gap_contraction:.2e} (<= {:.0e}), brute-force gap {oracle_gap:.2e} (<= 1e-3)",
            3.0 * target
        ),
    )
}

const FGM_PAIRS: [(f64, f64); 3] = [(0.0, 0.3), (0.3, 0.31), (-0.5, 0.6)];

fn stability_bound() -> Outcome {
    let settings = StabilitySettings::default();
    let mut ok = true;
    let mut details = Vec::new();
    for (r1, r2) in FGM_PAIRS {
        let game = catalog::cournot2(ALPHA, BETA, COST, r1).map_err(fail)?;
        let spec = cbne::divergence::PerturbationSpec::direct(
            DensityModel::fgm(r1).map_err(fail)?,
            DensityModel::fgm(r2).map_err(fail)?,
        );
        let r = run_stability(&game, &spec, &settings).map_err(fail)?;
        let bound = r.kantorovich_bound.ok_or("bound unavailable")?;
        let analytic = catalog::cournot2_drift_bound(BETA, COST, r1, r2);
        let node_drift = r.reference.as_ref().map(|x| x.node_drift).ok_or("no closed-form reference")?;
        let pair_ok = r.certified && r.drift_inf.max <= bound * (1.0 + 1e-3) && node_drift <= analytic;
        ok &= pair_ok;
        details.push(format!(
            "({r1}, {r2}): drift {:.3e} <= bound {bound:.3e}, node drift {node_drift:.3e} <= closed-form {analytic:.3e}",
            r.drift_inf.max
        ));
    }
    check(ok, details.join("; "))
}

/// `‖f*_0 − f*_ρ‖` in `L²` of the uniform marginal, from the closed form.
fn closed_form_l2_drift(rho: f64) -> f64 {
    let f0 = |t: f64| catalog::cournot2_equilibrium(ALPHA, BETA, COST, 0.0, t);
    let f1 = |t: f64| catalog::cournot2_equilibrium(ALPHA, BETA, COST, rho, t);
    let c0 = f0(0.0) - f1(0.0);
    let c1 = (f0(1.0) - f1(1.0)) - c0;
    (c0 * c0 + c0 * c1 + c1 * c1 / 3.0).sqrt()
}

fn kl_stability_and_sensitivity() -> Outcome {
    let settings = StabilitySettings::default();
    let mut ok = true;
    let mut details = Vec::new();
    for (r1, r2) in FGM_PAIRS {
        let game = catalog::cournot2(ALPHA, BETA, COST, r1).map_err(fail)?;
        let spec = cbne::divergence::PerturbationSpec::direct(
            DensityModel::fgm(r1).map_err(fail)?,
            DensityModel::fgm(r2).map_err(fail)?,
        );
        let r = run_stability(&game, &spec, &settings).map_err(fail)?;
        let bound = r.kl_bound.ok_or("bound unavailable")?;
        ok &= r.certified && r.drift_l2.max <= bound * (1.0 + 1e-3);
        details.push(format!("({r1}, {r2}): L2 drift {:.3e} <= {bound:.3e}", r.drift_l2.max));
    }
    let game = catalog::cournot2(ALPHA, BETA, COST, 0.0).map_err(fail)?;
    let (base, alt) = (DensityModel::fgm(0.0).map_err(fail)?, DensityModel::fgm(0.6).map_err(fail)?);
    let sweep = run_sensitivity_sweep(&game, &base, &alt, &[0.4, 0.2, 0.1, 0.05], &settings).map_err(fail)?;
    let oracle_gap = sweep
        .rows
        .iter()
        .map(|row| (row.drift_l2 - closed_form_l2_drift(0.6 * row.epsilon)).abs() / row.drift_l2)
        .fold(0.0, f64::max);
    let linearity = sweep.rows.iter().map(|r| r.w1_linearity_error).fold(0.0, f64::max);
    let change = sweep.ratio_change.ok_or("no ratio change")?;
    ok &= change <= 0.05 && linearity <= 1e-8 && oracle_gap <= 1e-4 && sweep.limit_within_bound;
    details.push(format!(
        "sweep drift/eps change {:.2}% (<= 5%), W1 linearity error {linearity:.1e} (<= 1e-8), \
         closed-form drift relative gap {oracle_gap:.1e}, limit ratio {:.3e} <= limit_bound {:.3e}",
        100.0 * change,
        sweep.rows.last().and_then(|r| r.drift_over_epsilon).unwrap_or(f64::NAN),
        sweep.limit_bound.unwrap_or(f64::NAN)
    ));
    check(ok, details.join("; "))
}

fn random_measure_pair(rng: &mut ChaCha8Rng) -> (GriddedMeasure, GriddedMeasure) {
    let dim = rng.random_range(1..=2);
    let lower: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..1.0)).collect();
    let upper: Vec<f64> = lower.iter().map(|l| l + rng.random_range(0.2..3.0)).collect();
    let space = BoxSpace::new(lower, upper).unwrap();
    let counts: Vec<usize> = (0..dim).map(|_| rng.random_range(2..=12)).collect();
    let len: usize = counts.iter().product();
    let mut draw = || -> Vec<f64> { (0..len).map(|_| rng.random_range(0.01..1.0)).collect() };
    let (a, b) = (draw(), draw());
    (
        GriddedMeasure::from_masses(space.clone(), counts.clone(), a).unwrap(),
        GriddedMeasure::from_masses(space, counts, b).unwrap(),
    )
}

fn divergence_kernels() -> Outcome {
    let line = BoxSpace::interval(0.0, 1.2).map_err(fail)?;
    let u1 = GriddedMeasure::from_density(line.clone(), vec![1200], |t| if t[0] < 1.0 { 1.0 } else { 0.0 })
        .map_err(fail)?;
    let u2 = GriddedMeasure::from_density(line, vec![1200], |t| if t[0] > 0.2 { 1.0 } else { 0.0 }).map_err(fail)?;
    let shift = (w1(&u1, &u2).map_err(fail)? - 0.2).abs();

    let square = BoxSpace::unit(2);
    let fgm = |rho: f64| {
        let d = DensityModel::fgm(rho).unwrap();
        GriddedMeasure::from_density(square.clone(), vec![64, 64], |t| d.joint(&square, t)).unwrap()
    };
    let tv_gap = [0.2, -0.5, 0.9]
        .iter()
        .map(|&rho| (tv(&fgm(0.0), &fgm(rho)).unwrap() - rho.abs() / 8.0).abs())
        .fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut inequality_failures = 0;
    for _ in 0..200 {
        let (p, q) = random_measure_pair(&mut rng);
        let t = tv(&p, &q).map_err(fail)?;
        let forward = kl(&p, &q).map_err(fail)?.value;
        let backward = kl(&q, &p).map_err(fail)?.value;
        let w = w1(&p, &q).map_err(fail)?;
        let pinsker = t <= (forward / 2.0).sqrt() + 1e-12 && t <= (backward / 2.0).sqrt() + 1e-12;
        let diameter = w <= p.space().diameter() * t + 1e-12;
        if !(pinsker && diameter) {
            inequality_failures += 1;
        }
    }

    let mut tower_gap: f64 = 0.0;
    for (r1, r2) in [(0.2, -0.7), (0.5, 0.9), (0.0, 0.6)] {
        let (a, b) = (fgm(r1), fgm(r2));
        let joint = kl(&a, &b).map_err(fail)?.value;
        tower_gap = tower_gap.max((conditional_kl_average(&a, &b, &[0]).map_err(fail)? - joint).abs());
    }
    for _ in 0..20 {
        let (rows, cols) = (rng.random_range(2..=10), rng.random_range(2..=10));
        let marginal: Vec<f64> = (0..rows).map(|_| rng.random_range(0.1..1.0)).collect();
        let mut table = || -> Vec<f64> {
            let mut out = Vec::with_capacity(rows * cols);
            for m in &marginal {
                let row: Vec<f64> = (0..cols).map(|_| rng.random_range(0.05..1.0)).collect();
                let s: f64 = row.iter().sum();
                out.extend(row.iter().map(|v| m * v / s));
            }
            out
        };
        let (pa, pb) = (table(), table());
        let a = GriddedMeasure::from_masses(square.clone(), vec![rows, cols], pa).map_err(fail)?;
        let b = GriddedMeasure::from_masses(square.clone(), vec![rows, cols], pb).map_err(fail)?;
        let joint = kl(&a, &b).map_err(fail)?.value;
        tower_gap = tower_gap.max((conditional_kl_average(&a, &b, &[0]).map_err(fail)? - joint).abs());
    }
    check(
        shift <= 1e-9 && tv_gap <= 1e-4 && inequality_failures == 0 && tower_gap <= 1e-6,
        format!(
            "W1 shift error {shift:.1e}, FGM TV error {tv_gap:.1e}, Pinsker/diameter failures {inequality_failures}/200, \
             KL tower gap {tower_gap:.1e}"
        ),
    )
}

fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

fn uniform_in(space: &BoxSpace, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..space.dim())
        .map(|k| rng.random_range(space.lower()[k]..=space.upper()[k]))
        .collect()
}

fn gradient_integrity() -> Outcome {
    let games = [
        ("cournot2", catalog::cournot2(ALPHA, BETA, COST, 0.3).map_err(fail)?),
        ("cournot3", catalog::cournot3(ALPHA, BETA, COST).map_err(fail)?),
        ("random_quadratic", catalog::random_quadratic(11, 0.4).map_err(fail)?),
        ("smooth_duopoly", catalog::smooth_duopoly(2.0, 0.5, DensityModel::fgm(-0.4).map_err(fail)?).map_err(fail)?),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = 1e-5;
    let relative = |g: f64, fd: f64| (g - fd).abs() / g.abs().max(1.0);
    let mut pointwise: f64 = 0.0;
    let mut expected: f64 = 0.0;
    let rule = QuadratureRule::gauss_legendre(32);
    for (_, game) in &games {
        let layout = game.layout();
        let actions = BoxSpace::product(game.players().iter().map(|p| &p.action_space)).map_err(fail)?;
        for _ in 0..1000 {
            let a = uniform_in(&actions, &mut rng);
            let theta = uniform_in(game.joint_types(), &mut rng);
            let i = rng.random_range(0..game.n());
            let grad = game.evaluate_grad(i, &a, &theta).map_err(fail)?;
            for (r, idx) in layout.actions(i).enumerate() {
                let fd = central_difference(
                    |x| {
                        let mut b = a.clone();
                        b[idx] = x;
                        game.evaluate_utility(i, &b, &theta).unwrap()
                    },
                    a[idx],
                    h,
                );
                pointwise = pointwise.max(relative(grad[r], fd));
            }
        }
        for _ in 0..100 {
            let profile = random_profile(game, 9, &mut rng).map_err(fail)?;
            let i = rng.random_range(0..game.n());
            let theta_i = uniform_in(&game.player(i).type_space, &mut rng);
            let a_i = uniform_in(&game.player(i).action_space, &mut rng);
            let grad = expected_grad(game, &profile, i, &theta_i, &a_i, &rule).map_err(fail)?;
            for r in 0..a_i.len() {
                let fd = central_difference(
                    |x| {
                        let mut b = a_i.clone();
                        b[r] = x;
                        expected_utility(game, &profile, i, &theta_i, &b, &rule).unwrap()
                    },
                    a_i[r],
                    h,
                );
                expected = expected.max(relative(grad[r], fd));
            }
        }
    }
    check(
        pointwise <= 1e-6 && expected <= 1e-6,
        format!(
            "{} games, utility gradient relative error {pointwise:.1e}, expected gradient relative error {expected:.1e} (<= 1e-6)",
            games.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("closed-form equilibrium recovery", closed_form_recovery),
        ("contraction constants", contraction_constants),
        ("Lipschitz response bounds", lipschitz_responses),
        ("monotone lattice iteration", monotone_iteration),
        ("Kantorovich stability bound", stability_bound),
        ("KL stability and sensitivity", kl_stability_and_sensitivity),
        ("divergence kernels", divergence_kernels),
        ("gradient integrity", gradient_integrity),
    ];
    let mut failures = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", k + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL [{}] {name}: {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
