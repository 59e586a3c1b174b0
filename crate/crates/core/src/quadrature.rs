//! One-dimensional rules and their tensor products over boxes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::BoxSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureKind {
    GaussLegendre,
    Trapezoid,
}

/// A per-axis rule; `tensor` expands it over a box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub kind: QuadratureKind,
    pub nodes_per_axis: usize,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::gauss_legendre(32)
    }
}

/// `gl<N>` or `trapezoid<N>`, e.g. `gl32`, `trapezoid2001`.
impl std::str::FromStr for QuadratureRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        let (kind, digits) = if let Some(d) = s.strip_prefix("gl") {
            (QuadratureKind::GaussLegendre, d)
        } else if let Some(d) = s.strip_prefix("trapezoid") {
            (QuadratureKind::Trapezoid, d)
        } else {
            return Err(Error::Model(format!("unknown quadrature `{s}` (expected gl<N> or trapezoid<N>)")));
        };
        let n: usize = digits
            .parse()
            .map_err(|_| Error::Model(format!("quadrature `{s}` lacks a node count")))?;
        let min = if kind == QuadratureKind::Trapezoid { 2 } else { 1 };
        if n < min {
            return Err(Error::Model(format!("quadrature `{s}` needs at least {min} nodes")));
        }
        Ok(Self {
            kind,
            nodes_per_axis: n,
        })
    }
}

impl std::fmt::Display for QuadratureRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            QuadratureKind::GaussLegendre => write!(f, "gl{}", self.nodes_per_axis),
            QuadratureKind::Trapezoid => write!(f, "trapezoid{}", self.nodes_per_axis),
        }
    }
}

impl QuadratureRule {
    pub fn gauss_legendre(n: usize) -> Self {
        Self {
            kind: QuadratureKind::GaussLegendre,
            nodes_per_axis: n,
        }
    }

    pub fn trapezoid(n: usize) -> Self {
        Self {
            kind: QuadratureKind::Trapezoid,
            nodes_per_axis: n,
        }
    }

    /// Nodes and weights on `[lo, hi]`.
    pub fn on_interval(&self, lo: f64, hi: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.nodes_per_axis;
        let (x, w) = match self.kind {
            QuadratureKind::GaussLegendre => {
                if n == 0 {
                    return Err(Error::Model("Gauss-Legendre rule needs at least one node".into()));
                }
                gauss_legendre(n)
            }
            QuadratureKind::Trapezoid => {
                if n < 2 {
                    return Err(Error::Model("trapezoid rule needs at least two nodes".into()));
                }
                trapezoid(n)
            }
        };
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        Ok((
            x.iter().map(|t| mid + half * t).collect(),
            w.iter().map(|v| v * half).collect(),
        ))
    }

    /// Tensor-product rule over a box. Weights integrate against Lebesgue
    /// measure, so they sum to the box volume.
    pub fn tensor(&self, space: &BoxSpace) -> Result<TensorRule> {
        let axes = (0..space.dim())
            .map(|k| self.on_interval(space.lower()[k], space.upper()[k]))
            .collect::<Result<Vec<_>>>()?;
        Ok(TensorRule::from_axes(&axes))
    }
}

/// Flattened tensor rule: `points[k*dim..(k+1)*dim]` carries weight `weights[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorRule {
    pub dim: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl TensorRule {
    /// Rule over a zero-dimensional space: one empty point with unit weight.
    pub fn trivial() -> Self {
        Self {
            dim: 0,
            points: Vec::new(),
            weights: vec![1.0],
        }
    }

    pub fn from_axes(axes: &[(Vec<f64>, Vec<f64>)]) -> Self {
        let dim = axes.len();
        if dim == 0 {
            return Self::trivial();
        }
        let total: usize = axes.iter().map(|(x, _)| x.len()).product();
        let mut points = Vec::with_capacity(total * dim);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            let mut w = 1.0;
            for (k, &i) in idx.iter().enumerate() {
                points.push(axes[k].0[i]);
                w *= axes[k].1[i];
            }
            weights.push(w);
            for k in (0..dim).rev() {
                idx[k] += 1;
                if idx[k] < axes[k].0.len() {
                    break;
                }
                idx[k] = 0;
            }
        }
        Self {
            dim,
            points,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        (0..self.len()).map(move |k| (self.point(k), self.weights[k]))
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// the three-term Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d.is_finite() {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

fn trapezoid(n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = 2.0 / (n - 1) as f64;
    let x = (0..n).map(|k| -1.0 + h * k as f64).collect();
    let w = (0..n)
        .map(|k| if k == 0 || k == n - 1 { 0.5 * h } else { h })
        .collect();
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_prints_rule_names() {
        for text in ["gl32", "trapezoid2001", "gl1"] {
            let rule: QuadratureRule = text.parse().unwrap();
            assert_eq!(rule.to_string(), text);
        }
        assert_eq!("GL8".parse::<QuadratureRule>().unwrap(), QuadratureRule::gauss_legendre(8));
        for bad in ["gl", "trapezoid1", "simpson5", "gl-3"] {
            assert!(bad.parse::<QuadratureRule>().is_err(), "{bad}");
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1usize, 2, 5, 16, 32, 64] {
            let (x, w) = gauss_legendre(n);
            assert!(w.iter().all(|&v| v > 0.0));
            for deg in 0..(2 * n) {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                let got: f64 = x.iter().zip(&w).map(|(t, v)| v * t.powi(deg as i32)).sum();
                assert!((got - exact).abs() < 1e-13, "n={n} deg={deg} got={got}");
            }
        }
    }

    #[test]
    fn tensor_rule_reproduces_volume() {
        let b = BoxSpace::new(vec![0.0, -1.0], vec![2.0, 0.5]).unwrap();
        for rule in [QuadratureRule::gauss_legendre(7), QuadratureRule::trapezoid(11)] {
            let t = rule.tensor(&b).unwrap();
            let vol: f64 = t.weights.iter().sum();
            assert!((vol - 3.0).abs() < 1e-12);
            for (p, _) in t.iter() {
                assert!(b.contains(p));
            }
        }
    }

    #[test]
    fn trapezoid_is_exact_for_linear() {
        let (x, w) = QuadratureRule::trapezoid(3).on_interval(0.0, 1.0).unwrap();
        let got: f64 = x.iter().zip(&w).map(|(t, v)| v * (2.0 * t + 1.0)).sum();
        assert!((got - 2.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_rules_rejected() {
        assert!(QuadratureRule::trapezoid(1).on_interval(0.0, 1.0).is_err());
        assert!(QuadratureRule::gauss_legendre(0).on_interval(0.0, 1.0).is_err());
    }
}
