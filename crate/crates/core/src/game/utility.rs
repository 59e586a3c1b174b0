//! Player utilities `u_i(a, θ)` and their own-action gradients.
//!
//! Actions and types are passed as flat profiles: player `j`'s block lives
//! at `layout.actions(j)` (resp. `layout.types(j)`).

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Offsets of each player's block inside flat action and type profiles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    action_offsets: Vec<usize>,
    type_offsets: Vec<usize>,
}

impl Layout {
    pub fn new(action_dims: &[usize], type_dims: &[usize]) -> Self {
        fn offsets(dims: &[usize]) -> Vec<usize> {
            let mut out = Vec::with_capacity(dims.len() + 1);
            let mut acc = 0;
            out.push(0);
            for d in dims {
                acc += d;
                out.push(acc);
            }
            out
        }
        Self {
            action_offsets: offsets(action_dims),
            type_offsets: offsets(type_dims),
        }
    }

    pub fn players(&self) -> usize {
        self.action_offsets.len() - 1
    }

    pub fn actions(&self, i: usize) -> Range<usize> {
        self.action_offsets[i]..self.action_offsets[i + 1]
    }

    pub fn types(&self, i: usize) -> Range<usize> {
        self.type_offsets[i]..self.type_offsets[i + 1]
    }

    pub fn action_dim(&self, i: usize) -> usize {
        self.actions(i).len()
    }

    pub fn type_dim(&self, i: usize) -> usize {
        self.types(i).len()
    }

    pub fn total_actions(&self) -> usize {
        *self.action_offsets.last().unwrap()
    }

    pub fn total_types(&self) -> usize {
        *self.type_offsets.last().unwrap()
    }
}

/// User-supplied utility. Implementations must provide an analytic
/// own-action gradient; the solvers never difference `value`.
pub trait CustomUtility: Send + Sync {
    /// `u_i(a, θ)` for the player this object was built for.
    fn value(&self, actions: &[f64], types: &[f64]) -> f64;

    /// Writes `∇_{a_i} u_i(a, θ)` into `out` (length `z_i`).
    fn grad(&self, actions: &[f64], types: &[f64], out: &mut [f64]);

    fn name(&self) -> &str {
        "custom"
    }
}

/// Linear-demand Cournot profit `a_i (α − β Σ_j a_j) − θ_i a_i − (c_i/2) a_i²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CournotUtility {
    pub alpha: f64,
    pub beta: f64,
    pub cost: f64,
}

/// Bilinear-quadratic utility
/// `a_iᵀ(h + Gθ) − ½ a_iᵀ Q a_i + Σ_j a_iᵀ B_ij a_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticUtility {
    /// `h`, length `z_i`.
    pub linear: Vec<f64>,
    /// `G`, `z_i` rows by total type dimension.
    pub type_coupling: Vec<Vec<f64>>,
    /// `Q`, symmetric positive definite, `z_i × z_i`.
    pub curvature: Vec<Vec<f64>>,
    /// Rival interaction blocks `B_ij`, `z_i × z_j`.
    pub cross: Vec<CrossTerm>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossTerm {
    pub player: usize,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Clone)]
pub enum UtilityModel {
    Cournot(CournotUtility),
    Quadratic(QuadraticUtility),
    Custom(Arc<dyn CustomUtility>),
}

impl fmt::Debug for UtilityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Cournot(c) => f.debug_tuple("Cournot").field(c).finish(),
            Self::Quadratic(q) => f.debug_tuple("Quadratic").field(q).finish(),
            Self::Custom(c) => write!(f, "Custom({})", c.name()),
        }
    }
}

impl UtilityModel {
    /// Whether the utility is quadratic in the own action with a constant
    /// Hessian, which lets the best-response solver work on an exact model.
    pub fn is_quadratic(&self) -> bool {
        !matches!(self, Self::Custom(_))
    }

    /// Constant own-action Hessian `−Q` expressed as `Q` (positive definite),
    /// for quadratic kinds.
    pub fn curvature(&self) -> Option<Vec<Vec<f64>>> {
        match self {
            Self::Cournot(c) => Some(vec![vec![2.0 * c.beta + c.cost]]),
            Self::Quadratic(q) => Some(q.curvature.clone()),
            Self::Custom(_) => None,
        }
    }

    pub(crate) fn validate(&self, i: usize, layout: &Layout) -> Result<()> {
        let zi = layout.action_dim(i);
        match self {
            Self::Cournot(c) => {
                for j in 0..layout.players() {
                    if layout.action_dim(j) != 1 || layout.type_dim(j) != 1 {
                        return Err(Error::Model(format!(
                            "Cournot utility needs scalar actions and types for every player (player {j} differs)"
                        )));
                    }
                }
                if !(c.alpha > 0.0 && c.beta > 0.0 && c.cost > 0.0) {
                    return Err(Error::Model(format!(
                        "Cournot parameters must be positive (alpha {}, beta {}, cost {})",
                        c.alpha, c.beta, c.cost
                    )));
                }
            }
            Self::Quadratic(q) => {
                let dt = layout.total_types();
                check_len("linear", zi, q.linear.len())?;
                check_matrix("type_coupling", &q.type_coupling, zi, dt)?;
                check_matrix("curvature", &q.curvature, zi, zi)?;
                for r in 0..zi {
                    for s in 0..r {
                        if (q.curvature[r][s] - q.curvature[s][r]).abs() > 1e-12 {
                            return Err(Error::Model(format!(
                                "curvature must be symmetric (entries ({r},{s}) and ({s},{r}) differ)"
                            )));
                        }
                    }
                }
                for term in &q.cross {
                    if term.player == i || term.player >= layout.players() {
                        return Err(Error::Model(format!(
                            "cross term of player {i} names invalid rival {}",
                            term.player
                        )));
                    }
                    check_matrix("cross", &term.matrix, zi, layout.action_dim(term.player))?;
                }
            }
            Self::Custom(_) => {}
        }
        Ok(())
    }

    pub fn value(&self, i: usize, layout: &Layout, a: &[f64], theta: &[f64]) -> f64 {
        match self {
            Self::Cournot(c) => {
                let ai = a[layout.actions(i).start];
                let ti = theta[layout.types(i).start];
                let total: f64 = a.iter().sum();
                ai * (c.alpha - c.beta * total) - ti * ai - 0.5 * c.cost * ai * ai
            }
            Self::Quadratic(q) => {
                let ai = &a[layout.actions(i)];
                let mut v = 0.0;
                for (r, &x) in ai.iter().enumerate() {
                    let mut lin = q.linear[r] + dot(&q.type_coupling[r], theta);
                    for term in &q.cross {
                        lin += dot(&term.matrix[r], &a[layout.actions(term.player)]);
                    }
                    v += x * lin - 0.5 * x * dot(&q.curvature[r], ai);
                }
                v
            }
            Self::Custom(u) => u.value(a, theta),
        }
    }

    pub fn grad_into(&self, i: usize, layout: &Layout, a: &[f64], theta: &[f64], out: &mut [f64]) {
        match self {
            Self::Cournot(c) => {
                let ai = a[layout.actions(i).start];
                let ti = theta[layout.types(i).start];
                let total: f64 = a.iter().sum();
                out[0] = c.alpha - ti - c.beta * total - (c.beta + c.cost) * ai;
            }
            Self::Quadratic(q) => {
                let ai = &a[layout.actions(i)];
                for (r, o) in out.iter_mut().enumerate() {
                    let mut g = q.linear[r] + dot(&q.type_coupling[r], theta) - dot(&q.curvature[r], ai);
                    for term in &q.cross {
                        g += dot(&term.matrix[r], &a[layout.actions(term.player)]);
                    }
                    *o = g;
                }
            }
            Self::Custom(u) => u.grad(a, theta, out),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension {
            what: what.into(),
            expected,
            got,
        });
    }
    Ok(())
}

fn check_matrix(what: &str, m: &[Vec<f64>], rows: usize, cols: usize) -> Result<()> {
    check_len(&format!("{what} rows"), rows, m.len())?;
    for row in m {
        check_len(&format!("{what} columns"), cols, row.len())?;
    }
    Ok(())
}
