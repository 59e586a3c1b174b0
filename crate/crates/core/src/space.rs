//! Axis-aligned boxes used for both type and action spaces.
//!
//! A box is a complete lattice under the coordinatewise order, with
//! `upper` as its top element and `lower` as its bottom, and the Euclidean
//! projection onto it is a coordinatewise clamp.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Non-degenerate box `[lower, upper] ⊂ ℝ^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct BoxSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawBox> for BoxSpace {
    type Error = Error;
    fn try_from(raw: RawBox) -> Result<Self> {
        BoxSpace::new(raw.lower, raw.upper)
    }
}

impl From<BoxSpace> for RawBox {
    fn from(b: BoxSpace) -> Self {
        RawBox {
            lower: b.lower,
            upper: b.upper,
        }
    }
}

impl BoxSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::Model("box must have at least one coordinate".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                what: "box upper bound".into(),
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (k, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Model(format!(
                    "box coordinate {k} is degenerate: lower {lo} must be finite and below upper {hi}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[lo, hi]` in one dimension.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    /// `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, k: usize) -> f64 {
        self.upper[k] - self.lower[k]
    }

    /// Euclidean norm of `upper - lower`.
    pub fn diameter(&self) -> f64 {
        (0..self.dim())
            .map(|k| self.width(k).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.width(k)).product()
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    /// Checks membership with a small relative slack so that grid nodes
    /// computed in floating point at the boundary are accepted.
    pub fn check(&self, what: &str, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                what: what.into(),
                expected: self.dim(),
                got: x.len(),
            });
        }
        for (k, &v) in x.iter().enumerate() {
            let slack = 1e-12 * (1.0 + self.width(k));
            if !(v >= self.lower[k] - slack && v <= self.upper[k] + slack) {
                return Err(Error::Domain {
                    what: what.into(),
                    coord: k,
                    value: v,
                    lower: self.lower[k],
                    upper: self.upper[k],
                });
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.check("point", x).is_ok()
    }

    /// Euclidean projection onto the box, in place.
    pub fn clamp_in_place(&self, x: &mut [f64]) {
        for (k, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[k], self.upper[k]);
        }
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        self.clamp_in_place(&mut out);
        out
    }

    /// Lattice join (coordinatewise max).
    pub fn join(a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x.max(*y)).collect()
    }

    /// Lattice meet (coordinatewise min).
    pub fn meet(a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x.min(*y)).collect()
    }

    /// All `2^dim` corners.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| {
                (0..d)
                    .map(|k| {
                        if mask >> k & 1 == 1 {
                            self.upper[k]
                        } else {
                            self.lower[k]
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Maps `u ∈ [0,1]^dim` to the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(k, t)| self.lower[k] + t * self.width(k))
            .collect()
    }

    /// Cartesian product of several boxes, coordinates concatenated in order.
    pub fn product<'a>(parts: impl IntoIterator<Item = &'a BoxSpace>) -> Result<Self> {
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for p in parts {
            lower.extend_from_slice(&p.lower);
            upper.extend_from_slice(&p.upper);
        }
        Self::new(lower, upper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_and_mismatched() {
        assert!(BoxSpace::new(vec![0.0], vec![0.0]).is_err());
        assert!(BoxSpace::new(vec![1.0], vec![0.0]).is_err());
        assert!(BoxSpace::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(BoxSpace::new(vec![], vec![]).is_err());
    }

    #[test]
    fn diameter_and_lattice_extremes() {
        let b = BoxSpace::new(vec![0.0, 0.0], vec![3.0, 4.0]).unwrap();
        assert_eq!(b.diameter(), 5.0);
        assert_eq!(b.volume(), 12.0);
        assert_eq!(BoxSpace::join(&[1.0, 3.0], &[2.0, 0.5]), vec![2.0, 3.0]);
        assert_eq!(BoxSpace::meet(&[1.0, 3.0], &[2.0, 0.5]), vec![1.0, 0.5]);
        assert_eq!(b.vertices().len(), 4);
    }

    #[test]
    fn check_names_the_violated_coordinate() {
        let b = BoxSpace::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        match b.check("action", &[0.5, 1.5]) {
            Err(Error::Domain { coord, .. }) => assert_eq!(coord, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn serde_validates() {
        let ok: BoxSpace = serde_json::from_str(r#"{"lower":[0],"upper":[2]}"#).unwrap();
        assert_eq!(ok.width(0), 2.0);
        assert!(serde_json::from_str::<BoxSpace>(r#"{"lower":[2],"upper":[0]}"#).is_err());
    }
}
