//! Strategy functions `f_i: Θ_i → A_i` stored as node values on a tensor
//! grid of the type box and evaluated by piecewise-multilinear interpolation.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::GameSpec;
use crate::quadrature::QuadratureRule;
use crate::space::BoxSpace;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyGrid {
    type_space: BoxSpace,
    action_space: BoxSpace,
    counts: Vec<usize>,
    values: Vec<f64>,
}

impl StrategyGrid {
    /// Grid with `counts[k]` nodes on type axis `k`, node values from `f`
    /// (projected onto the action box).
    pub fn from_fn(
        type_space: BoxSpace,
        action_space: BoxSpace,
        counts: Vec<usize>,
        mut f: impl FnMut(&[f64]) -> Vec<f64>,
    ) -> Result<Self> {
        if counts.len() != type_space.dim() {
            return Err(Error::Dimension {
                what: "strategy grid axes".into(),
                expected: type_space.dim(),
                got: counts.len(),
            });
        }
        if counts.iter().any(|&c| c < 2) {
            return Err(Error::Shape("strategy grids need at least two nodes per axis".into()));
        }
        let mut grid = Self {
            type_space,
            action_space,
            counts,
            values: Vec::new(),
        };
        let z = grid.action_space.dim();
        let n = grid.len();
        grid.values = Vec::with_capacity(n * z);
        for k in 0..n {
            let v = f(&grid.node(k));
            if v.len() != z {
                return Err(Error::Dimension {
                    what: "strategy node value".into(),
                    expected: z,
                    got: v.len(),
                });
            }
            grid.values.extend(grid.action_space.clamp(&v));
        }
        Ok(grid)
    }

    pub fn constant(
        type_space: BoxSpace,
        action_space: BoxSpace,
        counts: Vec<usize>,
        value: &[f64],
    ) -> Result<Self> {
        Self::from_fn(type_space, action_space, counts, |_| value.to_vec())
    }

    pub fn type_space(&self) -> &BoxSpace {
        &self.type_space
    }

    pub fn action_space(&self) -> &BoxSpace {
        &self.action_space
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn action_dim(&self) -> usize {
        self.action_space.dim()
    }

    /// Number of grid nodes.
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn spacing(&self, k: usize) -> f64 {
        self.type_space.width(k) / (self.counts[k] - 1) as f64
    }

    fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.counts.len()];
        for k in (0..self.counts.len()).rev() {
            idx[k] = flat % self.counts[k];
            flat /= self.counts[k];
        }
        idx
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.counts)
            .fold(0, |acc, (&i, &c)| acc * c + i)
    }

    /// Coordinates of node `k` (row-major, last axis fastest).
    pub fn node(&self, k: usize) -> Vec<f64> {
        self.multi_index(k)
            .iter()
            .enumerate()
            .map(|(axis, &i)| {
                if i == self.counts[axis] - 1 {
                    self.type_space.upper()[axis]
                } else {
                    self.type_space.lower()[axis] + i as f64 * self.spacing(axis)
                }
            })
            .collect()
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|k| self.node(k)).collect()
    }

    pub fn value(&self, k: usize) -> &[f64] {
        let z = self.action_dim();
        &self.values[k * z..(k + 1) * z]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Replaces node `k`'s action, projected onto the action box.
    pub fn set_value(&mut self, k: usize, v: &[f64]) {
        let z = self.action_dim();
        let slot = &mut self.values[k * z..(k + 1) * z];
        slot.copy_from_slice(v);
        self.action_space.clamp_in_place(slot);
    }

    /// Same grid with new node values (projected onto the action box).
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::Shape(format!(
                "expected {} node values, got {}",
                self.values.len(),
                values.len()
            )));
        }
        let mut out = Self {
            values,
            ..self.clone()
        };
        let z = self.action_dim();
        for chunk in out.values.chunks_mut(z) {
            self.action_space.clamp_in_place(chunk);
        }
        Ok(out)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.counts == other.counts
            && self.type_space == other.type_space
            && self.action_space == other.action_space
    }

    /// Interpolated, box-clamped action at `theta`.
    pub fn eval(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.type_space.check("strategy argument", theta)?;
        let mut out = vec![0.0; self.action_dim()];
        self.eval_into(theta, &mut out);
        Ok(out)
    }

    pub(crate) fn eval_into(&self, theta: &[f64], out: &mut [f64]) {
        let d = self.counts.len();
        let z = self.action_dim();
        out.iter_mut().for_each(|v| *v = 0.0);
        if d == 1 {
            let (c, t) = self.locate(0, theta[0]);
            let (lo, hi) = (&self.values[c * z..(c + 1) * z], &self.values[(c + 1) * z..(c + 2) * z]);
            for r in 0..z {
                out[r] = (1.0 - t) * lo[r] + t * hi[r];
            }
        } else {
            let loc: Vec<(usize, f64)> = (0..d).map(|k| self.locate(k, theta[k])).collect();
            let mut idx = vec![0usize; d];
            for mask in 0..1usize << d {
                let mut w = 1.0;
                for k in 0..d {
                    let (c, t) = loc[k];
                    if mask >> k & 1 == 1 {
                        idx[k] = c + 1;
                        w *= t;
                    } else {
                        idx[k] = c;
                        w *= 1.0 - t;
                    }
                }
                if w != 0.0 {
                    let f = self.flat_index(&idx);
                    for r in 0..z {
                        out[r] += w * self.values[f * z + r];
                    }
                }
            }
        }
        self.action_space.clamp_in_place(out);
    }

    fn locate(&self, k: usize, x: f64) -> (usize, f64) {
        let t = ((x - self.type_space.lower()[k]) / self.spacing(k)).clamp(0.0, (self.counts[k] - 1) as f64);
        let cell = (t.floor() as usize).min(self.counts[k] - 2);
        (cell, t - cell as f64)
    }

    /// Checks that node values are coordinatewise non-decreasing
    /// (or non-increasing, for [`Orientation::Decreasing`]) along every
    /// grid axis, with slack `1e-9`.
    pub fn is_monotone(&self, orientation: Orientation) -> MonotoneCheck {
        const SLACK: f64 = 1e-9;
        let z = self.action_dim();
        for k in 0..self.len() {
            let idx = self.multi_index(k);
            for axis in 0..idx.len() {
                if idx[axis] + 1 == self.counts[axis] {
                    continue;
                }
                let mut next = idx.clone();
                next[axis] += 1;
                let l = self.flat_index(&next);
                for r in 0..z {
                    let step = self.values[l * z + r] - self.values[k * z + r];
                    let bad = match orientation {
                        Orientation::Increasing => step < -SLACK,
                        Orientation::Decreasing => step > SLACK,
                    };
                    if bad {
                        return MonotoneCheck {
                            monotone: false,
                            witness: Some((k, l)),
                        };
                    }
                }
            }
        }
        MonotoneCheck {
            monotone: true,
            witness: None,
        }
    }

    /// CSV dump: one row per node with type then action coordinates.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (0..self.type_space.dim())
            .map(|k| format!("theta_{k}"))
            .chain((0..self.action_dim()).map(|r| format!("action_{r}")))
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for k in 0..self.len() {
            let row: Vec<String> = self
                .node(k)
                .iter()
                .chain(self.value(k))
                .map(|v| format!("{v:.16e}"))
                .collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn sidecar(&self, player: usize) -> GridSidecar {
        GridSidecar {
            player,
            counts: self.counts.clone(),
            type_space: self.type_space.clone(),
            action_space: self.action_space.clone(),
        }
    }
}

/// Shape metadata accompanying a strategy CSV dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSidecar {
    pub player: usize,
    pub counts: Vec<usize>,
    pub type_space: BoxSpace,
    pub action_space: BoxSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonotoneCheck {
    pub monotone: bool,
    /// Adjacent node pair `(k, l)` along which the order is violated.
    pub witness: Option<(usize, usize)>,
}

/// One grid per player.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct StrategyProfile {
    grids: Vec<StrategyGrid>,
}

impl StrategyProfile {
    pub fn new(grids: Vec<StrategyGrid>) -> Self {
        Self { grids }
    }

    /// Profile on `nodes` points per type axis, node values from
    /// `f(player, θ_i)`.
    pub fn from_fn(
        game: &GameSpec,
        nodes: usize,
        mut f: impl FnMut(usize, &[f64]) -> Vec<f64>,
    ) -> Result<Self> {
        let grids = game
            .players()
            .iter()
            .enumerate()
            .map(|(i, p)| {
                StrategyGrid::from_fn(
                    p.type_space.clone(),
                    p.action_space.clone(),
                    vec![nodes; p.type_space.dim()],
                    |t| f(i, t),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grids })
    }

    /// Constant profile at each action box's midpoint.
    pub fn midpoint(game: &GameSpec, nodes: usize) -> Result<Self> {
        Self::from_fn(game, nodes, |i, _| game.player(i).action_space.midpoint())
    }

    pub fn grids(&self) -> &[StrategyGrid] {
        &self.grids
    }

    pub fn grid(&self, i: usize) -> &StrategyGrid {
        &self.grids[i]
    }

    pub fn grid_mut(&mut self, i: usize) -> &mut StrategyGrid {
        &mut self.grids[i]
    }

    pub fn n(&self) -> usize {
        self.grids.len()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n() == other.n() && self.grids.iter().zip(&other.grids).all(|(a, b)| a.same_shape(b))
    }

    /// Checks that the profile matches the game's players.
    pub fn check_against(&self, game: &GameSpec) -> Result<()> {
        if self.n() != game.n() {
            return Err(Error::Shape(format!(
                "profile has {} players, game has {}",
                self.n(),
                game.n()
            )));
        }
        for (i, (g, p)) in self.grids.iter().zip(game.players()).enumerate() {
            if g.type_space != p.type_space || g.action_space != p.action_space {
                return Err(Error::Shape(format!(
                    "grid of player {i} does not live on that player's spaces"
                )));
            }
        }
        Ok(())
    }

    /// Largest node-wise Euclidean difference across all players.
    pub fn max_node_diff(&self, other: &Self) -> Result<f64> {
        if !self.same_shape(other) {
            return Err(Error::Shape("profiles have different grids".into()));
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.grids.iter().zip(&other.grids) {
            for k in 0..a.len() {
                worst = worst.max(euclid(a.value(k), b.value(k)));
            }
        }
        Ok(worst)
    }

    /// `true` iff `self ≤ other` coordinatewise at every node, up to `slack`.
    pub fn dominated_by(&self, other: &Self, slack: f64) -> bool {
        self.grids
            .iter()
            .zip(&other.grids)
            .all(|(a, b)| a.values.iter().zip(&b.values).all(|(x, y)| *x <= *y + slack))
    }
}

/// Constant profiles at the top (`∨A_i`) and bottom (`∧A_i`) of every
/// action box.
pub fn top_bottom(game: &GameSpec, nodes: usize) -> Result<(StrategyProfile, StrategyProfile)> {
    let top = StrategyProfile::from_fn(game, nodes, |i, _| game.player(i).action_space.upper().to_vec())?;
    let bottom = StrategyProfile::from_fn(game, nodes, |i, _| game.player(i).action_space.lower().to_vec())?;
    Ok((top, bottom))
}

/// Which `L^p(η_i)` norm to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    #[serde(rename = "1")]
    L1,
    #[serde(rename = "2")]
    L2,
    #[serde(rename = "inf")]
    Inf,
}

impl FromStr for Norm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(Self::L1),
            "2" => Ok(Self::L2),
            "inf" | "infinity" => Ok(Self::Inf),
            other => Err(Error::Model(format!("unknown norm `{other}` (expected 1, 2 or inf)"))),
        }
    }
}

impl std::fmt::Display for Norm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::L1 => "1",
            Self::L2 => "2",
            Self::Inf => "inf",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub per_player: Vec<f64>,
    pub max: f64,
}

/// `‖f_i − g_i‖_{L^p(η_i)}` for every player and their maximum
/// `‖f − g‖_{∞,L^p}`. Integrals use `rule` on each type box weighted by
/// the marginal density; the sup norm is taken over quadrature nodes and
/// grid nodes together.
pub fn lp_norm_diff(
    f: &StrategyProfile,
    g: &StrategyProfile,
    p: Norm,
    game: &GameSpec,
    rule: &QuadratureRule,
) -> Result<NormReport> {
    if !f.same_shape(g) {
        return Err(Error::Shape("profiles have different grids".into()));
    }
    f.check_against(game)?;
    let mut per_player = Vec::with_capacity(f.n());
    for i in 0..f.n() {
        let (fi, gi) = (f.grid(i), g.grid(i));
        let z = fi.action_dim();
        let mut a = vec![0.0; z];
        let mut b = vec![0.0; z];
        let tensor = rule.tensor(fi.type_space())?;
        let value = match p {
            Norm::Inf => {
                let mut worst: f64 = 0.0;
                for (theta, _) in tensor.iter() {
                    fi.eval_into(theta, &mut a);
                    gi.eval_into(theta, &mut b);
                    worst = worst.max(euclid(&a, &b));
                }
                for k in 0..fi.len() {
                    worst = worst.max(euclid(fi.value(k), gi.value(k)));
                }
                worst
            }
            Norm::L1 | Norm::L2 => {
                let power = if p == Norm::L1 { 1 } else { 2 };
                let mut sum = 0.0;
                for (theta, w) in tensor.iter() {
                    fi.eval_into(theta, &mut a);
                    gi.eval_into(theta, &mut b);
                    sum += w * game.marginal_density(i, theta) * euclid(&a, &b).powi(power);
                }
                sum.max(0.0).powf(1.0 / power as f64)
            }
        };
        per_player.push(value);
    }
    let max = per_player.iter().copied().fold(0.0, f64::max);
    Ok(NormReport { per_player, max })
}

pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{catalog, DensityModel};

    fn unit_grid(values: &[f64]) -> StrategyGrid {
        let mut it = values.iter();
        StrategyGrid::from_fn(
            BoxSpace::unit(1),
            BoxSpace::interval(-10.0, 10.0).unwrap(),
            vec![values.len()],
            |_| vec![*it.next().unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn constant_and_linear_interpolation() {
        let c = unit_grid(&[3.0, 3.0, 3.0]);
        assert_eq!(c.eval(&[0.37]).unwrap(), vec![3.0]);
        let l = unit_grid(&[0.0, 2.0]);
        assert!((l.eval(&[0.25]).unwrap()[0] - 0.5).abs() < 1e-15);
        assert!(l.eval(&[1.2]).is_err());
    }

    #[test]
    fn interpolation_error_of_a_square() {
        let g = StrategyGrid::from_fn(
            BoxSpace::unit(1),
            BoxSpace::interval(0.0, 1.0).unwrap(),
            vec![101],
            |t| vec![t[0] * t[0]],
        )
        .unwrap();
        let h: f64 = 0.01;
        let mut worst: f64 = 0.0;
        for k in 0..1000 {
            let t = (k as f64 + 0.5) / 1000.0;
            worst = worst.max((g.eval(&[t]).unwrap()[0] - t * t).abs());
        }
        assert!(worst <= 2.0 * h * h, "worst {worst}");
    }

    #[test]
    fn bilinear_interpolation_is_exact_for_bilinear_data() {
        let f = |t: &[f64]| vec![1.0 + 2.0 * t[0] - t[1] + 0.5 * t[0] * t[1]];
        let g = StrategyGrid::from_fn(
            BoxSpace::unit(2),
            BoxSpace::interval(-5.0, 5.0).unwrap(),
            vec![3, 4],
            f,
        )
        .unwrap();
        for t in [[0.1, 0.9], [0.77, 0.31], [1.0, 0.0]] {
            assert!((g.eval(&t).unwrap()[0] - f(&t)[0]).abs() < 1e-14);
        }
    }

    #[test]
    fn values_are_clamped_into_the_action_box() {
        let g = StrategyGrid::from_fn(
            BoxSpace::unit(1),
            BoxSpace::interval(0.0, 1.0).unwrap(),
            vec![2],
            |t| vec![5.0 * t[0] - 1.0],
        )
        .unwrap();
        assert_eq!(g.value(0), &[0.0]);
        assert_eq!(g.value(1), &[1.0]);
    }

    #[test]
    fn monotonicity_with_witness() {
        assert!(unit_grid(&[2.0, 2.0]).is_monotone(Orientation::Increasing).monotone);
        let check = unit_grid(&[0.0, 1.0, 0.5]).is_monotone(Orientation::Increasing);
        assert!(!check.monotone);
        assert_eq!(check.witness, Some((1, 2)));
    }

    #[test]
    fn closed_form_cournot_equilibrium_is_decreasing() {
        let g = catalog::cournot2(10.0, 1.0, 1.0, 0.3).unwrap();
        let eq = StrategyProfile::from_fn(&g, 21, |_, t| {
            vec![catalog::cournot2_equilibrium(10.0, 1.0, 1.0, 0.3, t[0])]
        })
        .unwrap();
        assert!(!eq.grid(0).is_monotone(Orientation::Increasing).monotone);
        assert!(eq.grid(0).is_monotone(Orientation::Decreasing).monotone);
        let negated = StrategyGrid::from_fn(
            BoxSpace::unit(1),
            BoxSpace::interval(-10.0, 0.0).unwrap(),
            vec![21],
            |t| vec![-catalog::cournot2_equilibrium(10.0, 1.0, 1.0, 0.3, t[0])],
        )
        .unwrap();
        assert!(negated.is_monotone(Orientation::Increasing).monotone);
    }

    fn uniform_game() -> GameSpec {
        catalog::cournot2(10.0, 1.0, 1.0, 0.0)
            .unwrap()
            .with_density(DensityModel::ProductUniform)
            .unwrap()
    }

    #[test]
    fn norms_of_constant_and_linear_differences() {
        let game = uniform_game();
        let rule = QuadratureRule::default();
        let f = StrategyProfile::from_fn(&game, 11, |_, _| vec![1.5]).unwrap();
        let g = StrategyProfile::from_fn(&game, 11, |_, _| vec![1.0]).unwrap();
        for p in [Norm::L1, Norm::L2, Norm::Inf] {
            assert_eq!(lp_norm_diff(&f, &f, p, &game, &rule).unwrap().max, 0.0);
            let r = lp_norm_diff(&f, &g, p, &game, &rule).unwrap();
            assert!((r.max - 0.5).abs() < 1e-12, "{p}: {}", r.max);
        }
        let lin = StrategyProfile::from_fn(&game, 11, |_, t| vec![1.0 + t[0]]).unwrap();
        let expect = [(Norm::L1, 0.5), (Norm::L2, 1.0 / 3f64.sqrt()), (Norm::Inf, 1.0)];
        for (p, v) in expect {
            let r = lp_norm_diff(&lin, &g, p, &game, &rule).unwrap();
            assert!((r.max - v).abs() < 1e-6, "{p}: {}", r.max);
        }
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let game = uniform_game();
        let f = StrategyProfile::midpoint(&game, 11).unwrap();
        let g = StrategyProfile::midpoint(&game, 12).unwrap();
        assert!(matches!(
            lp_norm_diff(&f, &g, Norm::L2, &game, &QuadratureRule::default()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn top_dominates_bottom() {
        let game = uniform_game();
        let (top, bottom) = top_bottom(&game, 5).unwrap();
        assert!(top.grids().iter().all(|g| g.values().iter().all(|&v| v == 10.0)));
        assert!(bottom.grids().iter().all(|g| g.values().iter().all(|&v| v == 0.0)));
        assert!(bottom.dominated_by(&top, 0.0));
    }

    #[test]
    fn csv_dump_has_one_row_per_node() {
        let g = unit_grid(&[0.0, 1.0, 2.0]);
        let csv = g.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "theta_0,action_0");
        assert_eq!(lines.len(), 4);
        assert_eq!(g.sidecar(1).counts, vec![3]);
    }
}
