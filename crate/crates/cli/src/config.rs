//! Experiment configuration.
//!
//! The JSON document is parsed into [`ConfigDocument`], which mirrors the
//! file (angles in degrees, every section optional). [`ExperimentConfig`]
//! keeps that document for echoing and holds the resolved values the
//! pipelines use, with angles converted to radians once here.

use std::path::PathBuf;

use nmwalk::spectral::MfbfFamily;
use nmwalk::witness::WitnessKind;
use nmwalk::{EvolutionMode, NoiseModel, WalkConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigDocument {
    pub walk: WalkSection,
    pub noise: NoiseSection,
    pub mode: ModeTag,
    pub witnesses: Vec<WitnessTag>,
    pub td_pair: TdPair,
    pub spectral: SpectralSection,
    pub choi: ChoiSection,
    pub output_dir: Option<PathBuf>,
}

/// Walk parameters. Angles are in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkSection {
    pub steps: usize,
    pub coin_angle: f64,
    pub delta: f64,
    pub eta: f64,
    pub initial_position: i64,
}

impl Default for WalkSection {
    fn default() -> Self {
        Self {
            steps: 100,
            coin_angle: 45.0,
            delta: 45.0,
            eta: 0.0,
            initial_position: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase", deny_unknown_fields)]
pub enum NoiseSection {
    #[default]
    None,
    Rtn {
        a: f64,
        gamma: f64,
    },
    Oun {
        #[serde(alias = "Gamma")]
        relaxation: f64,
        gamma: f64,
    },
    Pln {
        #[serde(alias = "Gamma")]
        relaxation: f64,
        gamma: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
}

/// Witness tag as written in the document (`td`, `mi`, `mid`, `qd`,
/// `entropy`, `variance`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct WitnessTag(pub WitnessKind);

impl TryFrom<String> for WitnessTag {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse().map(WitnessTag)
    }
}

impl From<WitnessTag> for String {
    fn from(w: WitnessTag) -> String {
        w.0.tag().to_string()
    }
}

fn default_alpha() -> f64 {
    2.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeTag {
    Noiseless,
    #[default]
    OneShot,
    Stepwise,
}

/// The two initial coin states compared by the trace distance, in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TdPair {
    pub delta1: f64,
    pub eta1: f64,
    pub delta2: f64,
    pub eta2: f64,
}

impl Default for TdPair {
    fn default() -> Self {
        Self {
            delta1: 45.0,
            eta1: 0.0,
            delta2: -45.0,
            eta2: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyTag {
    Isotonic,
    #[default]
    Exponential,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSection {
    pub family: FamilyTag,
    pub min_prominence: f64,
    pub hann: bool,
}

impl Default for SpectralSection {
    fn default() -> Self {
        Self {
            family: FamilyTag::Exponential,
            min_prominence: nmwalk::spectral::DEFAULT_MIN_PROMINENCE,
            hann: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChoiSection {
    pub t1: f64,
    pub t2_max: f64,
    pub dt: f64,
}

impl Default for ChoiSection {
    fn default() -> Self {
        Self {
            t1: 1.0,
            t2_max: 20.0,
            dt: 0.1,
        }
    }
}

/// Validated configuration with angles in radians.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub document: ConfigDocument,
    pub walk: WalkConfig,
    pub noise: NoiseModel,
    pub mode: EvolutionMode,
    pub witnesses: Vec<WitnessKind>,
    /// `(δ₁, η₁, δ₂, η₂)` in radians.
    pub td_pair: (f64, f64, f64, f64),
    pub family: MfbfFamily,
    pub min_prominence: f64,
    pub hann: bool,
    pub choi: ChoiSection,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let document: ConfigDocument = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("at `{path}`: {}", e.into_inner()))
    })?;
    ExperimentConfig::from_document(document)
}

impl ExperimentConfig {
    pub fn from_document(document: ConfigDocument) -> Result<Self, CliError> {
        let w = &document.walk;
        let walk = WalkConfig {
            steps: w.steps,
            coin_angle: w.coin_angle.to_radians(),
            delta: w.delta.to_radians(),
            eta: w.eta.to_radians(),
            initial_position: w.initial_position,
        };
        walk.validate()
            .map_err(|e| CliError::Config(format!("walk: {e}")))?;
        let noise = match document.noise {
            NoiseSection::None => Ok(NoiseModel::None),
            NoiseSection::Rtn { a, gamma } => NoiseModel::rtn(a, gamma),
            NoiseSection::Oun { relaxation, gamma } => NoiseModel::oun(relaxation, gamma),
            NoiseSection::Pln {
                relaxation,
                gamma,
                alpha,
            } => NoiseModel::pln(relaxation, gamma, alpha),
        }
        .map_err(|e| CliError::Config(format!("noise: {e}")))?;
        let mode = match document.mode {
            ModeTag::Noiseless => EvolutionMode::Noiseless,
            ModeTag::OneShot => EvolutionMode::OneShot,
            ModeTag::Stepwise => EvolutionMode::Stepwise,
        };
        let p = document.td_pair;
        for (name, v) in [
            ("delta1", p.delta1),
            ("eta1", p.eta1),
            ("delta2", p.delta2),
            ("eta2", p.eta2),
        ] {
            if !v.is_finite() {
                return Err(CliError::Config(format!(
                    "td_pair.{name}: must be finite, got {v}"
                )));
            }
        }
        let s = document.spectral;
        if !(0.0..=1.0).contains(&s.min_prominence) {
            return Err(CliError::Config(format!(
                "spectral.min_prominence: must lie in [0, 1], got {}",
                s.min_prominence
            )));
        }
        let c = document.choi;
        if !(c.t1.is_finite() && c.t1 >= 0.0) {
            return Err(CliError::Config(format!(
                "choi.t1: must be finite and >= 0, got {}",
                c.t1
            )));
        }
        if !(c.dt.is_finite() && c.dt > 0.0) {
            return Err(CliError::Config(format!(
                "choi.dt: must be finite and > 0, got {}",
                c.dt
            )));
        }
        if !(c.t2_max.is_finite() && c.t2_max > c.t1) {
            return Err(CliError::Config(format!(
                "choi.t2_max: must exceed t1, got {}",
                c.t2_max
            )));
        }
        let witnesses = if document.witnesses.is_empty() {
            WitnessKind::ALL.to_vec()
        } else {
            let mut seen = Vec::new();
            for &WitnessTag(k) in &document.witnesses {
                if !seen.contains(&k) {
                    seen.push(k);
                }
            }
            seen
        };
        Ok(Self {
            walk,
            noise,
            mode,
            witnesses,
            td_pair: (
                p.delta1.to_radians(),
                p.eta1.to_radians(),
                p.delta2.to_radians(),
                p.eta2.to_radians(),
            ),
            family: match s.family {
                FamilyTag::Isotonic => MfbfFamily::Isotonic,
                FamilyTag::Exponential => MfbfFamily::Exponential,
            },
            min_prominence: s.min_prominence,
            hann: s.hann,
            choi: c,
            document,
        })
    }

    /// The configuration as a JSON document that parses back to `self`.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(&self.document).expect("config document serializes")
    }

    pub fn output_dir(&self) -> PathBuf {
        self.document
            .output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}
