//! Distances between type distributions discretized on tensor grids:
//! Wasserstein-1, total variation and Kullback–Leibler, for joint measures
//! and for the conditional laws of the rivals' types.

pub mod transport;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{DensityModel, GameSpec};
use crate::space::BoxSpace;
use crate::strategy::Norm;

/// Largest number of cells per axis accepted by the transport solver.
pub const MAX_TRANSPORT_CELLS_PER_AXIS: usize = 64;

/// Floor applied to the second argument of KL.
pub const KL_FLOOR: f64 = 1e-12;

/// Probability masses on the cells of a tensor grid over a box, located at
/// the cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedMeasure {
    space: BoxSpace,
    counts: Vec<usize>,
    masses: Vec<f64>,
}

impl GriddedMeasure {
    /// Masses `density(center)·cell volume`, renormalized to one.
    pub fn from_density(space: BoxSpace, counts: Vec<usize>, density: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let mut m = Self {
            masses: Vec::new(),
            space,
            counts,
        };
        m.check_counts()?;
        let masses: Vec<f64> = (0..m.len()).map(|k| density(&m.center(k))).collect();
        m.masses = masses;
        m.normalize()?;
        Ok(m)
    }

    /// Renormalizes the given non-negative masses (row-major, last axis
    /// fastest).
    pub fn from_masses(space: BoxSpace, counts: Vec<usize>, masses: Vec<f64>) -> Result<Self> {
        let mut m = Self { space, counts, masses };
        m.check_counts()?;
        if m.masses.len() != m.len() {
            return Err(Error::Shape(format!(
                "expected {} cell masses, got {}",
                m.len(),
                m.masses.len()
            )));
        }
        m.normalize()?;
        Ok(m)
    }

    /// All mass in the cell containing `x`.
    pub fn point(space: BoxSpace, counts: Vec<usize>, x: &[f64]) -> Result<Self> {
        space.check("point mass location", x)?;
        let mut m = Self {
            masses: Vec::new(),
            space,
            counts,
        };
        m.check_counts()?;
        let mut flat = 0;
        for k in 0..m.counts.len() {
            let t = (x[k] - m.space.lower()[k]) / m.space.width(k) * m.counts[k] as f64;
            flat = flat * m.counts[k] + (t.floor() as usize).min(m.counts[k] - 1);
        }
        m.masses = vec![0.0; m.len()];
        m.masses[flat] = 1.0;
        Ok(m)
    }

    fn check_counts(&self) -> Result<()> {
        if self.counts.len() != self.space.dim() || self.counts.contains(&0) {
            return Err(Error::Shape(format!(
                "cell counts {:?} do not fit a {}-dimensional box",
                self.counts,
                self.space.dim()
            )));
        }
        Ok(())
    }

    fn normalize(&mut self) -> Result<()> {
        if let Some(k) = self.masses.iter().position(|v| !(*v >= 0.0)) {
            return Err(Error::Model(format!(
                "negative or undefined mass {} at cell {:?}",
                self.masses[k],
                self.center(k)
            )));
        }
        let total: f64 = self.masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Model("measure has no mass".into()));
        }
        self.masses.iter_mut().for_each(|v| *v /= total);
        Ok(())
    }

    pub fn space(&self) -> &BoxSpace {
        &self.space
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Center of cell `k`.
    pub fn center(&self, mut k: usize) -> Vec<f64> {
        let d = self.counts.len();
        let mut c = vec![0.0; d];
        for axis in (0..d).rev() {
            let idx = k % self.counts[axis];
            k /= self.counts[axis];
            c[axis] = self.space.lower()[axis] + (idx as f64 + 0.5) * self.space.width(axis) / self.counts[axis] as f64;
        }
        c
    }

    fn same_support(&self, other: &Self) -> Result<()> {
        if self.space != other.space || self.counts != other.counts {
            return Err(Error::Support(format!(
                "{:?} with {:?} cells vs {:?} with {:?} cells",
                self.space, self.counts, other.space, other.counts
            )));
        }
        Ok(())
    }

    /// `(1 − weight)·self + weight·other`.
    pub fn mix(&self, other: &Self, weight: f64) -> Result<Self> {
        self.same_support(other)?;
        let masses = self
            .masses
            .iter()
            .zip(&other.masses)
            .map(|(a, b)| (1.0 - weight) * a + weight * b)
            .collect();
        Ok(Self {
            masses,
            ..self.clone()
        })
    }

    /// Splits the measure along the given own axes: returns the marginal
    /// mass of every own cell and, for each own cell, the normalized
    /// conditional over the remaining axes (`None` where the row has no
    /// mass).
    pub fn disintegrate(&self, own_axes: &[usize]) -> Result<(Vec<f64>, Vec<Option<GriddedMeasure>>)> {
        let d = self.counts.len();
        if own_axes.is_empty() || own_axes.iter().any(|&a| a >= d) || own_axes.len() >= d {
            return Err(Error::Shape(format!("cannot split {d} axes along {own_axes:?}")));
        }
        let rest: Vec<usize> = (0..d).filter(|a| !own_axes.contains(a)).collect();
        let own_counts: Vec<usize> = own_axes.iter().map(|&a| self.counts[a]).collect();
        let rest_counts: Vec<usize> = rest.iter().map(|&a| self.counts[a]).collect();
        let rows: usize = own_counts.iter().product();
        let cols: usize = rest_counts.iter().product();
        let mut table = vec![vec![0.0; cols]; rows];
        let mut idx = vec![0usize; d];
        for (k, &mass) in self.masses.iter().enumerate() {
            let mut f = k;
            for axis in (0..d).rev() {
                idx[axis] = f % self.counts[axis];
                f /= self.counts[axis];
            }
            let r = own_axes.iter().fold(0, |acc, &a| acc * self.counts[a] + idx[a]);
            let c = rest.iter().fold(0, |acc, &a| acc * self.counts[a] + idx[a]);
            table[r][c] = mass;
        }
        let rest_space = BoxSpace::new(
            rest.iter().map(|&a| self.space.lower()[a]).collect(),
            rest.iter().map(|&a| self.space.upper()[a]).collect(),
        )?;
        let marginal: Vec<f64> = table.iter().map(|row| row.iter().sum()).collect();
        let conditionals = table
            .into_iter()
            .map(|row| GriddedMeasure::from_masses(rest_space.clone(), rest_counts.clone(), row).ok())
            .collect();
        Ok((marginal, conditionals))
    }
}

/// Wasserstein-1 distance with Euclidean ground cost between cell centers.
/// Exact in one dimension via the CDF difference; otherwise an exact
/// transportation problem on the cells where the measures differ.
pub fn w1(m1: &GriddedMeasure, m2: &GriddedMeasure) -> Result<f64> {
    m1.same_support(m2)?;
    if m1.counts.len() == 1 {
        let h = m1.space.width(0) / m1.counts[0] as f64;
        let mut cdf = 0.0;
        let mut total = 0.0;
        for (a, b) in m1.masses.iter().zip(&m2.masses) {
            cdf += a - b;
            total += cdf.abs();
        }
        // The last CDF difference is zero up to rounding and spans no gap.
        total -= cdf.abs();
        return Ok(total * h);
    }
    let limit = MAX_TRANSPORT_CELLS_PER_AXIS;
    if let Some(&worst) = m1.counts.iter().max().filter(|&&c| c > limit) {
        return Err(Error::TransportSize { cells: worst, limit });
    }
    if m1.len() > limit * limit {
        return Err(Error::TransportSize {
            cells: m1.len(),
            limit: limit * limit,
        });
    }
    // Shared mass stays put at zero cost.
    let mut supply = Vec::new();
    let mut demand = Vec::new();
    for (k, (a, b)) in m1.masses.iter().zip(&m2.masses).enumerate() {
        let gap = a - b;
        if gap > 0.0 {
            supply.push((k, gap));
        } else if gap < 0.0 {
            demand.push((k, -gap));
        }
    }
    let s_total: f64 = supply.iter().map(|x| x.1).sum();
    let d_total: f64 = demand.iter().map(|x| x.1).sum();
    if s_total <= 0.0 || d_total <= 0.0 {
        return Ok(0.0);
    }
    // Rebalance rounding so both sides carry identical totals.
    let common = 0.5 * (s_total + d_total);
    let s_mass: Vec<f64> = supply.iter().map(|x| x.1 * common / s_total).collect();
    let d_mass: Vec<f64> = demand.iter().map(|x| x.1 * common / d_total).collect();
    let s_pts: Vec<Vec<f64>> = supply.iter().map(|x| m1.center(x.0)).collect();
    let d_pts: Vec<Vec<f64>> = demand.iter().map(|x| m1.center(x.0)).collect();
    transport::min_cost(&s_mass, &d_mass, |s, d| {
        s_pts[s]
            .iter()
            .zip(&d_pts[d])
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    })
}

/// Total variation `½ Σ |m1 − m2|`.
pub fn tv(m1: &GriddedMeasure, m2: &GriddedMeasure) -> Result<f64> {
    m1.same_support(m2)?;
    Ok(0.5 * m1.masses.iter().zip(&m2.masses).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlReport {
    pub value: f64,
    /// Mass of the first measure on cells where the second was floored.
    pub floored_mass: f64,
    pub floored_cells: usize,
    /// `false` when more than 0.1% of the mass needed the floor.
    pub reliable: bool,
}

/// `KL(m1 ‖ m2) = Σ m1 log(m1/m2)`, with `m2` floored at [`KL_FLOOR`].
pub fn kl(m1: &GriddedMeasure, m2: &GriddedMeasure) -> Result<KlReport> {
    m1.same_support(m2)?;
    Ok(kl_masses(&m1.masses, &m2.masses))
}

fn kl_masses(p: &[f64], q: &[f64]) -> KlReport {
    let mut value = 0.0;
    let mut floored_mass = 0.0;
    let mut floored_cells = 0;
    for (&a, &b) in p.iter().zip(q) {
        if a <= 0.0 {
            continue;
        }
        let b = if b < KL_FLOOR {
            floored_mass += a;
            floored_cells += 1;
            KL_FLOOR
        } else {
            b
        };
        value += a * (a / b).ln();
    }
    KlReport {
        value: value.max(0.0),
        floored_mass,
        floored_cells,
        reliable: floored_mass <= 1e-3,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    W1,
    Tv,
    Kl,
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "w1" => Ok(Self::W1),
            "tv" => Ok(Self::Tv),
            "kl" => Ok(Self::Kl),
            other => Err(Error::Model(format!("unknown metric `{other}` (expected w1, tv or kl)"))),
        }
    }
}

pub fn distance(metric: Metric, m1: &GriddedMeasure, m2: &GriddedMeasure) -> Result<f64> {
    match metric {
        Metric::W1 => w1(m1, m2),
        Metric::Tv => tv(m1, m2),
        Metric::Kl => kl(m1, m2).map(|r| r.value),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationKind {
    /// `μ = alternative`.
    Direct,
    /// `μ = (1 − epsilon)·base + epsilon·alternative`.
    Mixture { epsilon: f64 },
}

/// A base type distribution `η` and a perturbation `μ` of it.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    pub base: DensityModel,
    pub alternative: DensityModel,
    pub kind: PerturbationKind,
}

impl PerturbationSpec {
    pub fn direct(base: DensityModel, alternative: DensityModel) -> Self {
        Self {
            base,
            alternative,
            kind: PerturbationKind::Direct,
        }
    }

    pub fn mixture(base: DensityModel, alternative: DensityModel, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Model(format!("mixture weight {epsilon} must lie in [0, 1]")));
        }
        Ok(Self {
            base,
            alternative,
            kind: PerturbationKind::Mixture { epsilon },
        })
    }

    /// The perturbed density `μ`.
    pub fn perturbed(&self) -> Result<DensityModel> {
        match self.kind {
            PerturbationKind::Direct => Ok(self.alternative.clone()),
            PerturbationKind::Mixture { epsilon } => {
                DensityModel::mixture(self.base.clone(), self.alternative.clone(), epsilon)
            }
        }
    }
}

/// Grid resolution of discretized type measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasureGrid {
    /// Cells per axis of the joint type grid.
    pub joint_cells: usize,
    /// Cells of conditional rival-type grids in one dimension.
    pub conditional_cells: usize,
    /// Cells per axis of conditional rival-type grids in several
    /// dimensions, capped at the transport limit.
    pub conditional_cells_per_axis: usize,
}

impl Default for MeasureGrid {
    fn default() -> Self {
        Self {
            joint_cells: 64,
            conditional_cells: 256,
            conditional_cells_per_axis: 24,
        }
    }
}

impl MeasureGrid {
    fn rival_cells(&self, dim: usize) -> usize {
        if dim == 1 {
            self.conditional_cells
        } else {
            self.conditional_cells_per_axis.min(MAX_TRANSPORT_CELLS_PER_AXIS)
        }
    }
}

/// Joint measure of `density` over the game's joint type box.
pub fn joint_measure(game: &GameSpec, density: &DensityModel, grid: &MeasureGrid) -> Result<GriddedMeasure> {
    let joint = game.joint_types().clone();
    let counts = vec![grid.joint_cells; joint.dim()];
    GriddedMeasure::from_density(joint.clone(), counts, |t| density.joint(&joint, t))
}

/// Conditional law of `θ_{−i}` given `θ_i` under `density`, from the joint
/// density sliced at `θ_i` on rival cell centers and renormalized.
pub fn conditional_measure(
    game: &GameSpec,
    density: &DensityModel,
    i: usize,
    theta_i: &[f64],
    grid: &MeasureGrid,
) -> Result<GriddedMeasure> {
    let rivals = game
        .rival_type_space(i)
        .ok_or_else(|| Error::Model("a one-player game has no rival types".into()))?;
    let counts = vec![grid.rival_cells(rivals.dim()); rivals.dim()];
    let joint = game.joint_types();
    GriddedMeasure::from_density(rivals, counts, |r| {
        let mut full = vec![0.0; joint.dim()];
        game.assemble_types(i, theta_i, r, &mut full);
        density.joint(joint, &full)
    })
    .map_err(|_| Error::Conditioning {
        player: i,
        theta: theta_i.to_vec(),
        marginal: 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalProfile {
    pub player: usize,
    pub metric: Metric,
    pub nodes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub max: f64,
    /// `(Σ w q_i d^p / Σ w q_i)^{1/p}` over the nodes with trapezoid weights
    /// and the base marginal; equal to `max` for `p = ∞`.
    pub aggregate: f64,
    pub norm: Norm,
}

/// `d(η_i(·|θ_i), μ_i(·|θ_i))` at every node of a `nodes`-per-axis grid of
/// player `i`'s type box.
pub fn conditional_distance_profile(
    game: &GameSpec,
    spec: &PerturbationSpec,
    i: usize,
    metric: Metric,
    norm: Norm,
    nodes: usize,
    grid: &MeasureGrid,
) -> Result<ConditionalProfile> {
    let perturbed = spec.perturbed()?;
    let own = &game.player(i).type_space;
    let points = type_nodes(own, nodes)?;
    let compute = |theta: &Vec<f64>| -> Result<f64> {
        let a = conditional_measure(game, &spec.base, i, theta, grid)?;
        let b = conditional_measure(game, &perturbed, i, theta, grid)?;
        distance(metric, &a, &b)
    };
    #[cfg(feature = "parallel")]
    let values: Vec<f64> = {
        use rayon::prelude::*;
        points.par_iter().map(compute).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let values: Vec<f64> = points.iter().map(compute).collect::<Result<_>>()?;

    let max = values.iter().copied().fold(0.0, f64::max);
    let aggregate = match norm {
        Norm::Inf => max,
        Norm::L1 | Norm::L2 => {
            let p = if norm == Norm::L1 { 1 } else { 2 };
            let (mut num, mut den) = (0.0, 0.0);
            let layout = game.layout();
            for (theta, v) in points.iter().zip(&values) {
                let w = trapezoid_weight(theta, own, nodes)
                    * spec.base.marginal(game.joint_types(), layout, i, theta);
                num += w * v.powi(p);
                den += w;
            }
            if den > 0.0 {
                (num / den).powf(1.0 / p as f64)
            } else {
                0.0
            }
        }
    };
    Ok(ConditionalProfile {
        player: i,
        metric,
        nodes: points,
        values,
        max,
        aggregate,
        norm,
    })
}

/// Nodes of a uniform grid with `nodes` points per axis, row-major.
pub fn type_nodes(space: &BoxSpace, nodes: usize) -> Result<Vec<Vec<f64>>> {
    Ok(
        crate::strategy::StrategyGrid::constant(space.clone(), BoxSpace::unit(1), vec![nodes; space.dim()], &[0.0])?
            .nodes(),
    )
}

fn trapezoid_weight(theta: &[f64], space: &BoxSpace, nodes: usize) -> f64 {
    theta
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let edge = (t - space.lower()[k]).abs() < 1e-12 * (1.0 + space.width(k))
                || (t - space.upper()[k]).abs() < 1e-12 * (1.0 + space.width(k));
            let h = space.width(k) / (nodes - 1) as f64;
            if edge {
                0.5 * h
            } else {
                h
            }
        })
        .product()
}

/// `Σ_r η_i(r) KL(η_i(·|r) ‖ μ_i(·|r))` over own-type cells of the joint
/// grids. Equals `KL(η ‖ μ)` exactly when both measures share the own-type
/// marginal.
pub fn conditional_kl_average(base: &GriddedMeasure, perturbed: &GriddedMeasure, own_axes: &[usize]) -> Result<f64> {
    base.same_support(perturbed)?;
    let (marginal, cond_base) = base.disintegrate(own_axes)?;
    let (_, cond_pert) = perturbed.disintegrate(own_axes)?;
    let mut total = 0.0;
    for ((w, a), b) in marginal.iter().zip(&cond_base).zip(&cond_pert) {
        if let (Some(a), Some(b)) = (a, b) {
            total += w * kl_masses(&a.masses, &b.masses).value;
        } else if let Some(a) = a {
            // The perturbed row has no mass where the base row does.
            total += w * kl_masses(&a.masses, &vec![0.0; a.len()]).value;
        }
    }
    Ok(total)
}
