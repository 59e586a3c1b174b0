//! Joint type densities and the marginals and conditionals derived from them.

use crate::error::{Error, Result};
use crate::space::BoxSpace;

use super::utility::Layout;

/// Joint density of the type profile over the product of the type boxes.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityModel {
    /// Uniform on the joint type box.
    ProductUniform,
    /// Farlie–Gumbel–Morgenstern copula with uniform marginals on a
    /// two-dimensional joint box: `(1 + ρ s₁ s₂)/vol`, `s_k = 2u_k − 1`.
    Fgm { rho: f64 },
    /// Piecewise-multilinear interpolant of tabulated values.
    GridTabulated(TabulatedDensity),
    /// `(1 − weight)·base + weight·alternative`.
    Mixture {
        base: Box<DensityModel>,
        alternative: Box<DensityModel>,
        weight: f64,
    },
}

impl DensityModel {
    pub fn fgm(rho: f64) -> Result<Self> {
        check_fgm(rho)?;
        Ok(Self::Fgm { rho })
    }

    pub fn mixture(base: DensityModel, alternative: DensityModel, weight: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::Model(format!("mixture weight {weight} must lie in [0, 1]")));
        }
        Ok(Self::Mixture {
            base: Box::new(base),
            alternative: Box::new(alternative),
            weight,
        })
    }

    pub(crate) fn validate(&self, joint: &BoxSpace) -> Result<()> {
        match self {
            Self::ProductUniform => Ok(()),
            Self::Fgm { rho } => {
                check_fgm(*rho)?;
                if joint.dim() != 2 {
                    return Err(Error::Model(format!(
                        "FGM density needs a two-dimensional joint type space, got {}",
                        joint.dim()
                    )));
                }
                Ok(())
            }
            Self::GridTabulated(t) => {
                if &t.space != joint {
                    return Err(Error::Model(
                        "tabulated density box does not match the joint type space".into(),
                    ));
                }
                Ok(())
            }
            Self::Mixture {
                base,
                alternative,
                weight,
            } => {
                if !(0.0..=1.0).contains(weight) {
                    return Err(Error::Model(format!("mixture weight {weight} must lie in [0, 1]")));
                }
                base.validate(joint)?;
                alternative.validate(joint)
            }
        }
    }

    /// Joint density `q(θ)`.
    pub fn joint(&self, joint: &BoxSpace, theta: &[f64]) -> f64 {
        match self {
            Self::ProductUniform => 1.0 / joint.volume(),
            Self::Fgm { rho } => {
                let s0 = 2.0 * (theta[0] - joint.lower()[0]) / joint.width(0) - 1.0;
                let s1 = 2.0 * (theta[1] - joint.lower()[1]) / joint.width(1) - 1.0;
                (1.0 + rho * s0 * s1) / joint.volume()
            }
            Self::GridTabulated(t) => t.eval(theta),
            Self::Mixture {
                base,
                alternative,
                weight,
            } => (1.0 - weight) * base.joint(joint, theta) + weight * alternative.joint(joint, theta),
        }
    }

    /// Marginal density `q_i(θ_i)` of player `i`'s own type.
    pub fn marginal(&self, joint: &BoxSpace, layout: &Layout, i: usize, theta_i: &[f64]) -> f64 {
        match self {
            Self::ProductUniform | Self::Fgm { .. } => {
                let r = layout.types(i);
                1.0 / r.map(|k| joint.width(k)).product::<f64>()
            }
            Self::GridTabulated(t) => t.marginal(layout.types(i).start, theta_i),
            Self::Mixture {
                base,
                alternative,
                weight,
            } => {
                (1.0 - weight) * base.marginal(joint, layout, i, theta_i)
                    + weight * alternative.marginal(joint, layout, i, theta_i)
            }
        }
    }

    /// FGM correlation parameter when the model reduces to an FGM density
    /// (a mixture of FGM densities is FGM with the mixed parameter).
    pub fn fgm_rho(&self) -> Option<f64> {
        match self {
            Self::Fgm { rho } => Some(*rho),
            Self::Mixture {
                base,
                alternative,
                weight,
            } => Some((1.0 - weight) * base.fgm_rho()? + weight * alternative.fgm_rho()?),
            _ => None,
        }
    }

    /// Lipschitz modulus of `θ_i ↦ q_i(θ_{−i}|θ_i)`, uniformly in `θ_{−i}`,
    /// when available in closed form.
    pub fn conditional_lipschitz(&self, joint: &BoxSpace) -> Option<f64> {
        match self {
            Self::ProductUniform => Some(0.0),
            Self::Fgm { rho } => Some(2.0 * rho.abs() / joint.volume()),
            Self::GridTabulated(_) => None,
            // Both parts have the same constant marginals, so the
            // conditional mixes with the same weight.
            Self::Mixture {
                base,
                alternative,
                weight,
            } => Some(
                (1.0 - weight) * base.conditional_lipschitz(joint)?
                    + weight * alternative.conditional_lipschitz(joint)?,
            ),
        }
    }

    /// A tabulated node with non-positive value, if any.
    pub fn zero_witness(&self) -> Option<Vec<f64>> {
        match self {
            Self::GridTabulated(t) => t.zero_node(),
            Self::Mixture {
                base,
                alternative,
                weight,
            } => {
                if *weight < 1.0 {
                    if let Some(w) = base.zero_witness() {
                        return Some(w);
                    }
                }
                if *weight > 0.0 {
                    alternative.zero_witness()
                } else {
                    None
                }
            }
            _ => None,
        }
    }
}

fn check_fgm(rho: f64) -> Result<()> {
    if !(rho.is_finite() && rho.abs() < 1.0) {
        return Err(Error::Model(format!(
            "FGM parameter rho = {rho} must satisfy |rho| < 1"
        )));
    }
    Ok(())
}

/// Density tabulated on a tensor grid of the joint type box.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    space: BoxSpace,
    counts: Vec<usize>,
    values: Vec<f64>,
}

impl TabulatedDensity {
    /// Builds the interpolant and rescales it to unit mass. Node values are
    /// row-major with the last axis fastest.
    pub fn new(space: BoxSpace, counts: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if counts.len() != space.dim() {
            return Err(Error::Dimension {
                what: "tabulated density axes".into(),
                expected: space.dim(),
                got: counts.len(),
            });
        }
        if counts.iter().any(|&c| c < 2) {
            return Err(Error::Model("tabulated density needs at least two nodes per axis".into()));
        }
        let total: usize = counts.iter().product();
        if values.len() != total {
            return Err(Error::Dimension {
                what: "tabulated density values".into(),
                expected: total,
                got: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Model(format!(
                "tabulated density value {} at node {k} must be finite and non-negative",
                values[k]
            )));
        }
        let mut t = Self {
            space,
            counts,
            values,
        };
        let mass = t.total_mass();
        if mass <= 0.0 {
            return Err(Error::Model("tabulated density has zero mass".into()));
        }
        for v in &mut t.values {
            *v /= mass;
        }
        Ok(t)
    }

    pub fn space(&self) -> &BoxSpace {
        &self.space
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn spacing(&self, k: usize) -> f64 {
        self.space.width(k) / (self.counts[k] - 1) as f64
    }

    fn trapezoid_weight(&self, k: usize, idx: usize) -> f64 {
        let h = self.spacing(k);
        if idx == 0 || idx == self.counts[k] - 1 {
            0.5 * h
        } else {
            h
        }
    }

    /// Trapezoid rule on the nodes; exact for the multilinear interpolant.
    fn total_mass(&self) -> f64 {
        let d = self.counts.len();
        let mut idx = vec![0usize; d];
        let mut sum = 0.0;
        for v in &self.values {
            let w: f64 = (0..d).map(|k| self.trapezoid_weight(k, idx[k])).product();
            sum += w * v;
            advance(&mut idx, &self.counts);
        }
        sum
    }

    /// Interval index and local coordinate along axis `k`.
    fn locate(&self, k: usize, x: f64) -> (usize, f64) {
        let h = self.spacing(k);
        let t = ((x - self.space.lower()[k]) / h).clamp(0.0, (self.counts[k] - 1) as f64);
        let cell = (t.floor() as usize).min(self.counts[k] - 2);
        (cell, t - cell as f64)
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.counts)
            .fold(0, |acc, (&i, &c)| acc * c + i)
    }

    pub fn eval(&self, theta: &[f64]) -> f64 {
        let d = self.counts.len();
        let loc: Vec<(usize, f64)> = (0..d).map(|k| self.locate(k, theta[k])).collect();
        let mut idx = vec![0usize; d];
        let mut sum = 0.0;
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
                sum += w * self.values[self.flat(&idx)];
            }
        }
        sum
    }

    /// Integrates out every axis except `start..start+theta_i.len()`.
    fn marginal(&self, start: usize, theta_i: &[f64]) -> f64 {
        let d = self.counts.len();
        let own = start..start + theta_i.len();
        let mut idx = vec![0usize; d];
        let mut sum = 0.0;
        for v in &self.values {
            let mut w = 1.0;
            for k in 0..d {
                if own.contains(&k) {
                    let (c, t) = self.locate(k, theta_i[k - start]);
                    w *= if idx[k] == c {
                        1.0 - t
                    } else if idx[k] == c + 1 {
                        t
                    } else {
                        0.0
                    };
                } else {
                    w *= self.trapezoid_weight(k, idx[k]);
                }
                if w == 0.0 {
                    break;
                }
            }
            sum += w * v;
            advance(&mut idx, &self.counts);
        }
        sum
    }

    fn zero_node(&self) -> Option<Vec<f64>> {
        let k = self.values.iter().position(|&v| v <= 0.0)?;
        let mut rem = k;
        let mut coords = vec![0.0; self.counts.len()];
        for axis in (0..self.counts.len()).rev() {
            let i = rem % self.counts[axis];
            rem /= self.counts[axis];
            coords[axis] = self.space.lower()[axis] + i as f64 * self.spacing(axis);
        }
        Some(coords)
    }
}

fn advance(idx: &mut [usize], counts: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < counts[k] {
            return;
        }
        idx[k] = 0;
    }
}
