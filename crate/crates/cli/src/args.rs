use std::path::PathBuf;

use cbne::best_response::{ModuliOptions, ResponseSettings};
use cbne::divergence::{MeasureGrid, Metric};
use cbne::equilibrium::SolveOptions;
use cbne::{Norm, QuadratureRule};
use clap::{Args, ValueEnum};
use serde::Serialize;

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be positive and finite"))
    }
}

#[derive(Args, Debug, Clone)]
pub struct GameArg {
    /// Game file (JSON or TOML).
    #[arg(long)]
    pub game: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SolveArgs {
    /// Type-grid nodes per axis.
    #[arg(long, default_value_t = 101)]
    pub grid: usize,
    /// Norm of the stopping rule: 1, 2 or inf.
    #[arg(long = "p", default_value = "inf")]
    pub norm: Norm,
    /// Target accuracy of the equilibrium [default: 1e-8, or 1e-9 for stability and sweep].
    #[arg(long, value_parser = positive)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Rival-type quadrature, `gl<N>` or `trapezoid<N>`.
    #[arg(long, default_value = "gl32")]
    pub quadrature: QuadratureRule,
    /// Accuracy of each best-response solve.
    #[arg(long, default_value_t = 1e-10, value_parser = positive)]
    pub response_tol: f64,
}

impl SolveArgs {
    pub fn options(&self, default_tol: f64) -> SolveOptions {
        SolveOptions {
            nodes: self.grid,
            norm: self.norm,
            target: self.tol.unwrap_or(default_tol),
            max_iter: self.max_iter,
            response: ResponseSettings {
                tol: self.response_tol,
                rule: self.quadrature,
                ..ResponseSettings::default()
            },
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ModuliArgs {
    /// Sample tuples per sampled modulus.
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    /// Seed for sampled moduli and random checks.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ModuliArgs {
    pub fn options(&self) -> ModuliOptions {
        ModuliOptions {
            samples: self.samples,
            seed: self.seed,
        }
    }
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct AlternativeArgs {
    /// FGM parameter of the alternative density.
    #[arg(long, allow_negative_numbers = true)]
    pub rho2: Option<f64>,
    /// Alternative density: inline JSON or a JSON file.
    #[arg(long)]
    pub alt: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct BaseArgs {
    /// Replaces the game's type distribution: inline JSON or a JSON file.
    #[arg(long)]
    pub base: Option<String>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MeasureArgs {
    /// Own-type nodes per axis for conditional distances.
    #[arg(long, default_value_t = 101)]
    pub nodes: usize,
    /// Cells per axis of the joint type grid.
    #[arg(long, default_value_t = 64)]
    pub joint_cells: usize,
    /// Cells of one-dimensional conditional grids.
    #[arg(long, default_value_t = 256)]
    pub conditional_cells: usize,
    /// Cells per axis of multi-dimensional conditional grids.
    #[arg(long, default_value_t = 24)]
    pub conditional_cells_per_axis: usize,
}

impl MeasureArgs {
    pub fn grid(&self) -> MeasureGrid {
        MeasureGrid {
            joint_cells: self.joint_cells,
            conditional_cells: self.conditional_cells,
            conditional_cells_per_axis: self.conditional_cells_per_axis,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionArg {
    Top,
    Bottom,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Example {
    Cournot2,
    Cournot3,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DistanceArgs {
    /// Metrics to report.
    #[arg(long, value_delimiter = ',', default_value = "w1,tv,kl")]
    pub metric: Vec<Metric>,
    /// Mixture weight; the perturbation is the alternative itself when absent.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Norm aggregating conditional distances over own types: 1, 2 or inf.
    #[arg(long = "p", default_value = "inf")]
    pub norm: Norm,
    /// Cells per axis of the joint grid used for joint W1.
    #[arg(long, default_value_t = 32)]
    pub w1_cells: usize,
    #[command(flatten)]
    pub measure: MeasureArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ExampleArgs {
    pub name: Example,
    #[arg(long, default_value_t = 10.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub cost: f64,
    /// FGM parameter (cournot2 only).
    #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
    pub rho: f64,
    #[arg(long, default_value_t = 101)]
    pub grid: usize,
    #[arg(long, default_value_t = 1e-8, value_parser = positive)]
    pub tol: f64,
    #[arg(long, default_value = "gl32")]
    pub quadrature: QuadratureRule,
}

impl ExampleArgs {
    pub fn options(&self) -> SolveOptions {
        SolveOptions {
            nodes: self.grid,
            target: self.tol,
            response: ResponseSettings {
                rule: self.quadrature,
                ..ResponseSettings::default()
            },
            ..SolveOptions::default()
        }
    }
}

pub fn metric_name(m: Metric) -> &'static str {
    match m {
        Metric::W1 => "w1",
        Metric::Tv => "tv",
        Metric::Kl => "kl",
    }
}
