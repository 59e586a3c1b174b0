//! Game configuration files (JSON or TOML).
//!
//! ```toml
//! [metadata]
//! note = "dominating-function integrability assumed"
//!
//! [[players]]
//! type_space = { lower = [0.0], upper = [1.0] }
//! action_space = { lower = [0.0], upper = [10.0] }
//! utility = { kind = "cournot", alpha = 10.0, beta = 1.0, cost = 1.0 }
//!
//! [[players]]
//! type_space = { lower = [0.0], upper = [1.0] }
//! action_space = { lower = [0.0], upper = [10.0] }
//! utility = { kind = "cournot", alpha = 10.0, beta = 1.0, cost = 1.0 }
//!
//! [density]
//! kind = "fgm"
//! rho = 0.3
//! ```
//!
//! Utility kinds: `cournot {alpha, beta, cost}` and
//! `quadratic {linear, type_coupling, curvature, cross = [{player, matrix}]}`.
//! Density kinds: `product_uniform`, `fgm {rho}`,
//! `grid_tabulated {counts, values}` (row-major over the joint type box,
//! last axis fastest) and `mixture {base, alternative, weight}`.
//!
//! Errors cite the offending key path, e.g. `players[1].action_space`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    CournotUtility, CrossTerm, DensityModel, GameSpec, Player, QuadraticUtility, TabulatedDensity,
    UtilityModel,
};
use crate::error::{Error, Result};
use crate::space::BoxSpace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub players: Vec<PlayerConfig>,
    pub density: DensityConfig,
    /// Free-form notes, e.g. modelling assumptions that cannot be checked
    /// at runtime.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerConfig {
    pub type_space: BoxSpace,
    pub action_space: BoxSpace,
    pub utility: UtilityConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilityConfig {
    Cournot(CournotParams),
    Quadratic(QuadraticParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CournotParams {
    pub alpha: f64,
    pub beta: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticParams {
    pub linear: Vec<f64>,
    pub type_coupling: Vec<Vec<f64>>,
    pub curvature: Vec<Vec<f64>>,
    #[serde(default)]
    pub cross: Vec<CrossConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossConfig {
    pub player: usize,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityConfig {
    ProductUniform,
    Fgm(FgmParams),
    GridTabulated(TabulatedParams),
    Mixture(MixtureParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FgmParams {
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedParams {
    pub counts: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureParams {
    pub base: Box<DensityConfig>,
    pub alternative: Box<DensityConfig>,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigFormat {
    Json,
    Toml,
}

impl ConfigFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::Toml,
            _ => Self::Json,
        }
    }
}

impl GameConfig {
    pub fn parse(text: &str, format: ConfigFormat) -> Result<Self> {
        let value: Value = match format {
            ConfigFormat::Json => serde_json::from_str(text).map_err(|e| Error::Config {
                path: ".".into(),
                message: e.to_string(),
            })?,
            ConfigFormat::Toml => {
                let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config {
                    path: ".".into(),
                    message: e.to_string(),
                })?;
                serde_json::to_value(table).map_err(|e| Error::Config {
                    path: ".".into(),
                    message: e.to_string(),
                })?
            }
        };
        Self::from_value(value)
    }

    /// Deserializes from a JSON value. Internally tagged entries hide the
    /// inner key path from serde, so on failure the tagged node is
    /// deserialized again on its own to recover the full path.
    pub fn from_value(value: Value) -> Result<Self> {
        match serde_path_to_error::deserialize::<_, Self>(&value) {
            Ok(cfg) => Ok(cfg),
            Err(e) => {
                let mut path = display_path(e.path());
                let mut message = e.inner().to_string();
                let segments: Vec<String> = e.path().iter().map(|s| s.to_string()).collect();
                if let Some(node) = walk(&value, e.path()) {
                    let tag = match segments.last().map(String::as_str) {
                        Some("utility") => Some(Tagged::Utility),
                        Some("density" | "base" | "alternative") => Some(Tagged::Density),
                        _ => None,
                    };
                    if let Some((sub, msg)) = tag.and_then(|t| refine(node, t)) {
                        path = format!("{path}.{sub}");
                        message = msg;
                    }
                }
                Err(Error::Config { path, message })
            }
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text, ConfigFormat::from_path(path))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The configuration describing `game`; `None` when a player has a
    /// custom utility, which has no file representation.
    pub fn from_game(game: &GameSpec) -> Option<Self> {
        let players = game
            .players()
            .iter()
            .map(|p| {
                Some(PlayerConfig {
                    type_space: p.type_space.clone(),
                    action_space: p.action_space.clone(),
                    utility: UtilityConfig::from_model(&p.utility)?,
                })
            })
            .collect::<Option<_>>()?;
        Some(Self {
            players,
            density: DensityConfig::from_model(game.density()),
            metadata: game.metadata().clone(),
        })
    }

    /// Converts to a validated game. Semantic failures carry the key path
    /// of the offending entry.
    pub fn build(&self) -> Result<GameSpec> {
        if self.players.is_empty() {
            return Err(Error::Config {
                path: "players".into(),
                message: "at least one player is required".into(),
            });
        }
        let players: Vec<Player> = self
            .players
            .iter()
            .map(|p| Player {
                type_space: p.type_space.clone(),
                action_space: p.action_space.clone(),
                utility: p.utility.to_model(),
            })
            .collect();
        let joint = BoxSpace::product(players.iter().map(|p| &p.type_space))?;
        let density = self.density.to_model(&joint, "density")?;

        let action_dims: Vec<usize> = players.iter().map(|p| p.action_space.dim()).collect();
        let type_dims: Vec<usize> = players.iter().map(|p| p.type_space.dim()).collect();
        let layout = super::Layout::new(&action_dims, &type_dims);
        for (i, p) in players.iter().enumerate() {
            p.utility.validate(i, &layout).map_err(|e| Error::Config {
                path: format!("players[{i}].utility"),
                message: e.to_string(),
            })?;
        }
        GameSpec::new(players, density)
            .map(|g| g.with_metadata(self.metadata.clone()))
            .map_err(|e| Error::Config {
                path: "density".into(),
                message: e.to_string(),
            })
    }
}

impl UtilityConfig {
    fn from_model(model: &UtilityModel) -> Option<Self> {
        match model {
            UtilityModel::Cournot(c) => Some(Self::Cournot(CournotParams {
                alpha: c.alpha,
                beta: c.beta,
                cost: c.cost,
            })),
            UtilityModel::Quadratic(q) => Some(Self::Quadratic(QuadraticParams {
                linear: q.linear.clone(),
                type_coupling: q.type_coupling.clone(),
                curvature: q.curvature.clone(),
                cross: q
                    .cross
                    .iter()
                    .map(|c| CrossConfig {
                        player: c.player,
                        matrix: c.matrix.clone(),
                    })
                    .collect(),
            })),
            UtilityModel::Custom(_) => None,
        }
    }

    fn to_model(&self) -> UtilityModel {
        match self {
            Self::Cournot(CournotParams { alpha, beta, cost }) => UtilityModel::Cournot(CournotUtility {
                alpha: *alpha,
                beta: *beta,
                cost: *cost,
            }),
            Self::Quadratic(QuadraticParams {
                linear,
                type_coupling,
                curvature,
                cross,
            }) => UtilityModel::Quadratic(QuadraticUtility {
                linear: linear.clone(),
                type_coupling: type_coupling.clone(),
                curvature: curvature.clone(),
                cross: cross
                    .iter()
                    .map(|c| CrossTerm {
                        player: c.player,
                        matrix: c.matrix.clone(),
                    })
                    .collect(),
            }),
        }
    }
}

impl DensityConfig {
    /// Builds the density on the joint type box; errors carry the path
    /// `density`.
    pub fn build(&self, joint: &BoxSpace) -> Result<DensityModel> {
        self.to_model(joint, "density")
    }

    pub fn from_model(model: &DensityModel) -> Self {
        match model {
            DensityModel::ProductUniform => Self::ProductUniform,
            DensityModel::Fgm { rho } => Self::Fgm(FgmParams { rho: *rho }),
            DensityModel::GridTabulated(t) => Self::GridTabulated(TabulatedParams {
                counts: t.counts().to_vec(),
                values: t.values().to_vec(),
            }),
            DensityModel::Mixture {
                base,
                alternative,
                weight,
            } => Self::Mixture(MixtureParams {
                base: Box::new(Self::from_model(base)),
                alternative: Box::new(Self::from_model(alternative)),
                weight: *weight,
            }),
        }
    }

    fn to_model(&self, joint: &BoxSpace, path: &str) -> Result<DensityModel> {
        let wrap = |sub: &str, e: Error| Error::Config {
            path: format!("{path}{sub}"),
            message: e.to_string(),
        };
        match self {
            Self::ProductUniform => Ok(DensityModel::ProductUniform),
            Self::Fgm(FgmParams { rho }) => DensityModel::fgm(*rho).map_err(|e| wrap(".rho", e)),
            Self::GridTabulated(TabulatedParams { counts, values }) => {
                TabulatedDensity::new(joint.clone(), counts.clone(), values.clone())
                    .map(DensityModel::GridTabulated)
                    .map_err(|e| wrap(".values", e))
            }
            Self::Mixture(MixtureParams {
                base,
                alternative,
                weight,
            }) => DensityModel::mixture(
                base.to_model(joint, &format!("{path}.base"))?,
                alternative.to_model(joint, &format!("{path}.alternative"))?,
                *weight,
            )
            .map_err(|e| wrap(".weight", e)),
        }
    }
}

fn display_path(path: &serde_path_to_error::Path) -> String {
    let s = path.to_string();
    if s.is_empty() {
        ".".into()
    } else {
        s
    }
}

fn walk<'a>(value: &'a Value, path: &serde_path_to_error::Path) -> Option<&'a Value> {
    use serde_path_to_error::Segment;
    let mut node = value;
    for seg in path.iter() {
        node = match seg {
            Segment::Seq { index } => node.get(*index)?,
            Segment::Map { key } => node.get(key.as_str())?,
            _ => return None,
        };
    }
    Some(node)
}

#[derive(Clone, Copy)]
enum Tagged {
    Utility,
    Density,
}

/// Re-deserializes a tagged node's body as its variant type and returns the
/// inner key path and message of the first failure.
fn refine(node: &Value, tag: Tagged) -> Option<(String, String)> {
    fn inner<T: serde::de::DeserializeOwned>(body: &Value) -> Option<(String, String)> {
        serde_path_to_error::deserialize::<_, T>(body)
            .err()
            .map(|e| (e.path().to_string(), e.inner().to_string()))
    }
    let kind = node.get("kind")?.as_str()?;
    let mut body = node.clone();
    body.as_object_mut()?.remove("kind");
    let (sub, msg) = match (tag, kind) {
        (Tagged::Utility, "cournot") => inner::<CournotParams>(&body),
        (Tagged::Utility, "quadratic") => inner::<QuadraticParams>(&body),
        (Tagged::Density, "fgm") => inner::<FgmParams>(&body),
        (Tagged::Density, "grid_tabulated") => inner::<TabulatedParams>(&body),
        (Tagged::Density, "mixture") => {
            for key in ["base", "alternative"] {
                if let Some(child) = body.get(key) {
                    if serde_json::from_value::<DensityConfig>(child.clone()).is_err() {
                        return Some(match refine(child, Tagged::Density) {
                            Some((sub, msg)) => (format!("{key}.{sub}"), msg),
                            None => (key.to_string(), "invalid density".into()),
                        });
                    }
                }
            }
            inner::<MixtureParams>(&body)
        }
        _ => None,
    }?;
    Some((sub, msg))
}

#[cfg(test)]
mod tests {
    use super::*;

    const COURNOT_TOML: &str = r#"
[metadata]
note = "integrability of dominating functions assumed"

[[players]]
type_space = { lower = [0.0], upper = [1.0] }
action_space = { lower = [0.0], upper = [10.0] }
utility = { kind = "cournot", alpha = 10.0, beta = 1.0, cost = 1.0 }

[[players]]
type_space = { lower = [0.0], upper = [1.0] }
action_space = { lower = [0.0], upper = [10.0] }
utility = { kind = "cournot", alpha = 10.0, beta = 1.0, cost = 1.0 }

[density]
kind = "fgm"
rho = 0.3
"#;

    #[test]
    fn toml_and_json_agree() {
        let from_toml = GameConfig::parse(COURNOT_TOML, ConfigFormat::Toml).unwrap();
        let json = from_toml.to_json();
        let from_json = GameConfig::parse(&json, ConfigFormat::Json).unwrap();
        assert_eq!(from_toml, from_json);
        let g = from_json.build().unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.density().fgm_rho(), Some(0.3));
        assert!(g.metadata().contains_key("note"));
    }

    #[test]
    fn json_errors_cite_the_key_path() {
        let bad = r#"{"players":[{"type_space":{"lower":[0],"upper":[1]},
            "action_space":{"lower":[0],"upper":[10]},
            "utility":{"kind":"cournot","alpha":10,"beta":"one","cost":1}}],
            "density":{"kind":"product_uniform"}}"#;
        match GameConfig::parse(bad, ConfigFormat::Json) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "players[0].utility.beta"),
            other => panic!("unexpected {other:?}"),
        }
        let degenerate = bad.replace("\"one\"", "1").replace("\"upper\":[10]", "\"upper\":[0]");
        match GameConfig::parse(&degenerate, ConfigFormat::Json) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "players[0].action_space"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn toml_errors_cite_the_key_path() {
        let bad = COURNOT_TOML.replace("rho = 0.3", "rho = \"x\"");
        match GameConfig::parse(&bad, ConfigFormat::Toml) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "density.rho"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn semantic_errors_cite_the_key_path() {
        let bad = COURNOT_TOML.replace("rho = 0.3", "rho = 1.0");
        let cfg = GameConfig::parse(&bad, ConfigFormat::Toml).unwrap();
        match cfg.build() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "density.rho"),
            other => panic!("unexpected {other:?}"),
        }
        let neg = COURNOT_TOML.replacen("beta = 1.0", "beta = -1.0", 1);
        let cfg = GameConfig::parse(&neg, ConfigFormat::Toml).unwrap();
        match cfg.build() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "players[0].utility"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
