//! Randomized invariants of norms, divergences and the best-response map.

use approx::assert_relative_eq;
use cbne::best_response::{estimate_moduli, ModuliOptions};
use cbne::divergence::{kl, tv, w1, GriddedMeasure};
use cbne::equilibrium::BestResponseMap;
use cbne::game::catalog;
use cbne::strategy::lp_norm_diff;
use cbne::{BoxSpace, DensityModel, GameSpec, Norm, QuadratureRule, StrategyGrid, StrategyProfile};
use proptest::prelude::*;

fn cournot2(rho: f64) -> GameSpec {
    catalog::cournot2(10.0, 1.0, 1.0, rho).unwrap()
}

/// Profile of the two-player Cournot game with the given node values.
fn profile(game: &GameSpec, values: &[Vec<f64>]) -> StrategyProfile {
    let grids = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let p = game.player(i);
            StrategyGrid::constant(p.type_space.clone(), p.action_space.clone(), vec![v.len()], &[0.0])
                .and_then(|grid| grid.with_values(v.clone()))
                .unwrap()
        })
        .collect();
    StrategyProfile::new(grids)
}

fn node_values(nodes: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0..10.0f64, nodes), 2)
}

fn masses(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001..1.0f64, len)
}

fn measure(space: &BoxSpace, counts: &[usize], m: Vec<f64>) -> GriddedMeasure {
    GriddedMeasure::from_masses(space.clone(), counts.to_vec(), m).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norms_are_ordered_under_a_probability_measure(
        f in node_values(7),
        g in node_values(7),
        rho in -0.9..0.9f64,
    ) {
        let game = cournot2(rho);
        let (f, g) = (profile(&game, &f), profile(&game, &g));
        let rule = QuadratureRule::gauss_legendre(16);
        let l1 = lp_norm_diff(&f, &g, Norm::L1, &game, &rule).unwrap();
        let l2 = lp_norm_diff(&f, &g, Norm::L2, &game, &rule).unwrap();
        let inf = lp_norm_diff(&f, &g, Norm::Inf, &game, &rule).unwrap();
        for i in 0..2 {
            prop_assert!(l1.per_player[i] <= l2.per_player[i] * (1.0 + 1e-12) + 1e-12);
            prop_assert!(l2.per_player[i] <= inf.per_player[i] * (1.0 + 1e-12) + 1e-12);
        }
    }

    #[test]
    fn norms_satisfy_the_triangle_inequality(
        f in node_values(5),
        g in node_values(5),
        h in node_values(5),
        p in prop::sample::select(vec![Norm::L1, Norm::L2, Norm::Inf]),
    ) {
        let game = cournot2(0.4);
        let (f, g, h) = (profile(&game, &f), profile(&game, &g), profile(&game, &h));
        let rule = QuadratureRule::gauss_legendre(16);
        let fh = lp_norm_diff(&f, &h, p, &game, &rule).unwrap().max;
        let fg = lp_norm_diff(&f, &g, p, &game, &rule).unwrap().max;
        let gh = lp_norm_diff(&g, &h, p, &game, &rule).unwrap().max;
        prop_assert!(fh <= fg + gh + 1e-9);
        prop_assert_eq!(lp_norm_diff(&f, &f, p, &game, &rule).unwrap().max, 0.0);
    }

    #[test]
    fn w1_and_tv_are_metrics(
        a in masses(36),
        b in masses(36),
        c in masses(36),
    ) {
        let space = BoxSpace::new(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap();
        let counts = [6, 6];
        let (a, b, c) = (measure(&space, &counts, a), measure(&space, &counts, b), measure(&space, &counts, c));
        for d in [w1, tv] {
            let ab = d(&a, &b).unwrap();
            let ba = d(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12);
            prop_assert!(d(&a, &c).unwrap() <= ab + d(&b, &c).unwrap() + 1e-12);
            prop_assert!(d(&a, &a).unwrap().abs() <= 1e-15);
            prop_assert!(ab > 0.0);
        }
    }

    #[test]
    fn pinsker_and_diameter_bounds(
        a in masses(48),
        b in masses(48),
        one_dimensional in any::<bool>(),
    ) {
        let (space, counts) = if one_dimensional {
            (BoxSpace::interval(-3.0, 2.0).unwrap(), vec![48])
        } else {
            (BoxSpace::unit(2), vec![8, 6])
        };
        let (a, b) = (measure(&space, &counts, a), measure(&space, &counts, b));
        let t = tv(&a, &b).unwrap();
        prop_assert!(t <= (kl(&a, &b).unwrap().value / 2.0).sqrt() + 1e-12);
        prop_assert!(t <= (kl(&b, &a).unwrap().value / 2.0).sqrt() + 1e-12);
        prop_assert!(w1(&a, &b).unwrap() <= space.diameter() * t + 1e-12);
    }

    #[test]
    fn joint_w1_is_below_the_average_conditional_w1(
        r1 in -0.95..0.95f64,
        r2 in -0.95..0.95f64,
    ) {
        let space = BoxSpace::unit(2);
        let grid = |rho: f64| {
            let d = DensityModel::fgm(rho).unwrap();
            GriddedMeasure::from_density(space.clone(), vec![16, 16], |t| d.joint(&space, t)).unwrap()
        };
        let (a, b) = (grid(r1), grid(r2));
        let (marginal, ca) = a.disintegrate(&[0]).unwrap();
        let (_, cb) = b.disintegrate(&[0]).unwrap();
        let average: f64 = marginal
            .iter()
            .zip(ca.iter().zip(&cb))
            .map(|(w, (x, y))| w * w1(x.as_ref().unwrap(), y.as_ref().unwrap()).unwrap())
            .sum();
        prop_assert!(w1(&a, &b).unwrap() <= average + 1e-12);
    }

    #[test]
    fn best_response_map_stays_in_the_action_box(
        f in node_values(5),
        rho in -0.9..0.9f64,
    ) {
        let game = cournot2(rho);
        let m = estimate_moduli(&game, &ModuliOptions::default()).unwrap();
        let map = BestResponseMap::new(&game, &m, Default::default()).unwrap();
        let next = map.apply(&profile(&game, &f)).unwrap();
        for i in 0..2 {
            let grid = next.grid(i);
            for k in 0..grid.len() {
                prop_assert!(game.player(i).action_space.contains(grid.value(k)));
            }
        }
    }
}

#[test]
fn fgm_mixture_is_fgm_with_mixed_parameter() {
    let space = BoxSpace::unit(2);
    let mixed = DensityModel::mixture(DensityModel::fgm(0.2).unwrap(), DensityModel::fgm(-0.6).unwrap(), 0.25).unwrap();
    let direct = DensityModel::fgm(0.75 * 0.2 - 0.25 * 0.6).unwrap();
    for t in [[0.1, 0.9], [0.5, 0.3], [1.0, 0.0]] {
        assert_relative_eq!(mixed.joint(&space, &t), direct.joint(&space, &t), epsilon = 1e-15);
    }
}
