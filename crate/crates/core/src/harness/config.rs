use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::HarnessError;
use crate::channel::{ChannelConfig, ScoreModel};
use crate::codec::{LineCodeConfig, Payload, SOS};
use crate::decoder::DecoderConfig;

/// Which payloads an experiment transmits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayloadSet {
    /// `0x00` through `0xFF` in order.
    Range,
    List { payloads: Vec<Payload> },
    /// The SOS payload, `repeat` times.
    Sos { repeat: usize },
}

impl PayloadSet {
    pub fn payloads(&self) -> Vec<Payload> {
        match self {
            PayloadSet::Range => Payload::all().collect(),
            PayloadSet::List { payloads } => payloads.clone(),
            PayloadSet::Sos { repeat } => vec![SOS; *repeat],
        }
    }
}

/// Everything needed to replay an experiment.
///
/// The decoder section carries only decoder settings; its line code is always
/// taken from the top-level `line_code`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub line_code: LineCodeConfig,
    pub channel: ChannelConfig,
    #[serde(with = "decoder_settings")]
    pub decoder: DecoderConfig,
    pub payload_set: PayloadSet,
    pub trials: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            line_code: LineCodeConfig::default(),
            channel: ChannelConfig::default(),
            decoder: DecoderConfig::default(),
            payload_set: PayloadSet::Range,
            trials: 1,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// The decoder configuration with this experiment's line code.
    pub fn decoder_config(&self) -> DecoderConfig {
        DecoderConfig {
            line_code: self.line_code.clone(),
            ..self.decoder.clone()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.line_code.validate()?;
        self.channel.validate()?;
        self.decoder_config().validate()?;
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        if self.payload_set.payloads().is_empty() {
            return Err(HarnessError::Config("payload_set is empty".into()));
        }
        Ok(())
    }

    /// Reads a JSON config (or starts from defaults) and applies dotted-path
    /// overrides such as `channel.seed=7`.
    pub fn load(path: Option<&Path>, overrides: &[(String, Value)]) -> Result<Self, HarnessError> {
        let mut doc = match path {
            Some(p) => read_json(p)?,
            None => serde_json::to_value(ExperimentConfig::default()).expect("config serializes"),
        };
        for (key, value) in overrides {
            set_path(&mut doc, key, value.clone())?;
        }
        serde_json::from_value(doc).map_err(|e| HarnessError::Config(e.to_string()))
    }
}

mod decoder_settings {
    //! (De)serializes a [`DecoderConfig`] without its line code.
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(default, deny_unknown_fields)]
    struct Settings {
        threshold: f64,
        min_correlation: f64,
        search_step: usize,
    }

    impl Default for Settings {
        fn default() -> Self {
            let d = DecoderConfig::default();
            Settings {
                threshold: d.threshold,
                min_correlation: d.min_correlation,
                search_step: d.search_step,
            }
        }
    }

    pub fn serialize<S: serde::Serializer>(c: &DecoderConfig, s: S) -> Result<S::Ok, S::Error> {
        Settings {
            threshold: c.threshold,
            min_correlation: c.min_correlation,
            search_step: c.search_step,
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<DecoderConfig, D::Error> {
        let s = Settings::deserialize(d)?;
        Ok(DecoderConfig {
            threshold: s.threshold,
            min_correlation: s.min_correlation,
            search_step: s.search_step,
            line_code: LineCodeConfig::default(),
        })
    }
}

pub(crate) fn read_json(path: &Path) -> Result<Value, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

/// Sets `doc[a][b][c] = value` for the path `a.b.c`, creating objects on the
/// way.
pub fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<(), HarnessError> {
    let mut node = doc;
    let mut parts = path.split('.').peekable();
    while let Some(part) = parts.next() {
        if part.is_empty() {
            return Err(HarnessError::Config(format!("bad override path `{path}`")));
        }
        if !node.is_object() {
            if node.is_null() {
                *node = Value::Object(Default::default());
            } else {
                return Err(HarnessError::Config(format!(
                    "override `{path}`: `{part}` is below a non-object value"
                )));
            }
        }
        let map = node.as_object_mut().expect("checked above");
        if parts.peek().is_none() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

/// Parses `key=value`; the value is read as JSON, or as a bare string when it
/// is not valid JSON.
pub fn parse_override(text: &str) -> Result<(String, Value), HarnessError> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override `{text}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    FlipP,
    Drift,
    DropProb,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::FlipP => "flip_p",
            SweepParameter::Drift => "drift",
            SweepParameter::DropProb => "drop_prob",
        }
    }

    pub fn apply(self, config: &mut ExperimentConfig, value: f64) {
        match self {
            SweepParameter::FlipP => config.channel.score_model = ScoreModel::Flip { p: value },
            SweepParameter::Drift => config.channel.drift = value,
            SweepParameter::DropProb => config.channel.drop_prob = value,
        }
    }

    /// Whether link quality should only get worse as the value grows.
    pub fn degrades_monotonically(self) -> bool {
        !matches!(self, SweepParameter::Drift)
    }
}

/// A one-parameter sweep over a base experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: ExperimentConfig,
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
    /// Optional dotted-path overrides per grid point, applied before the
    /// swept value.
    #[serde(default)]
    pub point_overrides: Vec<BTreeMap<String, Value>>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.grid.is_empty() {
            return Err(HarnessError::Config("sweep grid is empty".into()));
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(HarnessError::Config("sweep grid must be strictly increasing".into()));
        }
        if !self.point_overrides.is_empty() && self.point_overrides.len() != self.grid.len() {
            return Err(HarnessError::Config(format!(
                "{} point overrides for {} grid points",
                self.point_overrides.len(),
                self.grid.len()
            )));
        }
        self.base.validate()
    }

    /// The experiment run at grid point `i`.
    pub fn point(&self, i: usize) -> Result<ExperimentConfig, HarnessError> {
        let mut config = if let Some(overrides) = self.point_overrides.get(i) {
            let mut doc = serde_json::to_value(&self.base).expect("config serializes");
            for (k, v) in overrides {
                set_path(&mut doc, k, v.clone())?;
            }
            serde_json::from_value(doc).map_err(|e| HarnessError::Config(e.to_string()))?
        } else {
            self.base.clone()
        };
        self.parameter.apply(&mut config, self.grid[i]);
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[(String, Value)]) -> Result<Self, HarnessError> {
        let mut doc = read_json(path)?;
        for (key, value) in overrides {
            set_path(&mut doc, key, value.clone())?;
        }
        serde_json::from_value(doc).map_err(|e| HarnessError::Config(e.to_string()))
    }
}
