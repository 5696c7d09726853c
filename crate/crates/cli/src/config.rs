//! Flat dotted-key JSON configuration with per-experiment schemas.

use serde_json::{Map, Value};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown key '{key}' for experiment {kind}")]
    UnknownKey { kind: String, key: String },
    #[error("key '{key}': expected {expected}, got {got}")]
    Type {
        key: String,
        expected: &'static str,
        got: String,
    },
    #[error("key '{key}': {reason}")]
    Invalid { key: String, reason: String },
    #[error("config is not a flat JSON object: {0}")]
    Shape(String),
    #[error("unknown experiment kind '{0}'")]
    Kind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyType {
    Float,
    /// Float or null.
    OptFloat,
    Int,
    Bool,
    Str,
    FloatList,
}

impl KeyType {
    fn name(self) -> &'static str {
        match self {
            KeyType::Float => "a number",
            KeyType::OptFloat => "a number or null",
            KeyType::Int => "a nonnegative integer",
            KeyType::Bool => "a boolean",
            KeyType::Str => "a string",
            KeyType::FloatList => "a list of numbers",
        }
    }

    fn accepts(self, v: &Value) -> bool {
        match self {
            KeyType::Float => v.is_number(),
            KeyType::OptFloat => v.is_number() || v.is_null(),
            KeyType::Int => v.is_u64(),
            KeyType::Bool => v.is_boolean(),
            KeyType::Str => v.is_string(),
            KeyType::FloatList => v.as_array().is_some_and(|a| a.iter().all(Value::is_number)),
        }
    }
}

pub struct KeySpec {
    pub name: &'static str,
    pub ty: KeyType,
    pub default: fn() -> Value,
}

macro_rules! key {
    ($name:expr, $ty:ident, $($default:tt)+) => {
        KeySpec {
            name: $name,
            ty: KeyType::$ty,
            default: || serde_json::json!($($default)+),
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    Sample,
    Emptiness,
    Holefun,
    Eig,
    RauchTaylor,
    MrSweep,
    Survive,
    Scaling,
    Densitybox,
    Dos,
    PpConverge,
}

impl Kind {
    pub const ALL: [Kind; 11] = [
        Kind::Sample,
        Kind::Emptiness,
        Kind::Holefun,
        Kind::Eig,
        Kind::RauchTaylor,
        Kind::MrSweep,
        Kind::Survive,
        Kind::Scaling,
        Kind::Densitybox,
        Kind::Dos,
        Kind::PpConverge,
    ];

    /// Name used in config files and manifests.
    pub fn name(self) -> &'static str {
        match self {
            Kind::Sample => "sample",
            Kind::Emptiness => "emptiness",
            Kind::Holefun => "holefun",
            Kind::Eig => "eig",
            Kind::RauchTaylor => "rauch_taylor",
            Kind::MrSweep => "mr_sweep",
            Kind::Survive => "survive",
            Kind::Scaling => "scaling",
            Kind::Densitybox => "densitybox",
            Kind::Dos => "dos",
            Kind::PpConverge => "pp_converge",
        }
    }

    pub fn parse(s: &str) -> Result<Kind, ConfigError> {
        let norm = s.replace('-', "_");
        Kind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| ConfigError::Kind(s.to_string()))
    }

    pub fn schema(self) -> Vec<KeySpec> {
        let eig = || {
            vec![
                key!("eig.tol", Float, 1e-8),
                key!("eig.max_iter", Int, 300),
                key!("eig.inner_tol", Float, 1e-10),
                key!("eig.inner_max_iter", Int, 1000),
                key!("eig.max_basis", Int, 24),
            ]
        };
        let mut keys = vec![key!("seed", Int, 1)];
        keys.extend(match self {
            Kind::Sample => vec![
                key!("law", Str, "power_tail"),
                key!("theta", Float, 2.0),
                key!("d", Int, 2),
                key!("window.half", Float, 4.0),
                key!("truncation.radius", OptFloat, null),
                key!("stream", Int, 0),
            ],
            Kind::Emptiness => vec![
                key!("law", Str, "power_tail"),
                key!("theta", Float, 2.0),
                key!("d", Int, 2),
                key!("v", FloatList, [5.0, 10.0, 20.0]),
            ],
            Kind::Holefun => vec![
                key!("region", Str, ""),
                key!("d", Int, 2),
                key!("box.side", Float, 2.0),
                key!("theta", Float, 1.0),
                key!("resolution", OptFloat, null),
            ],
            Kind::Eig => {
                let mut k = vec![
                    key!("d", Int, 2),
                    key!("n", Float, 1.0),
                    key!("spacing", OptFloat, null),
                    key!("hole_side", Float, 0.1),
                    key!("height", OptFloat, null),
                    key!("grid.h", OptFloat, null),
                ];
                k.extend(eig());
                k
            }
            Kind::RauchTaylor => {
                let mut k = vec![
                    key!("d", Int, 3),
                    key!("r", FloatList, [8.0, 16.0, 32.0]),
                    key!("t", FloatList, []),
                    key!("beta", Float, 0.15),
                    key!("theta", Float, 2.0),
                    key!("grid.h", OptFloat, null),
                ];
                k.extend(eig());
                k
            }
            Kind::MrSweep => {
                let mut k = vec![
                    key!("d", Int, 2),
                    key!("r", FloatList, [4.0, 8.0, 16.0, 32.0]),
                    key!("t", FloatList, []),
                    key!("theta", Float, 2.0),
                    key!("n", FloatList, [1.0]),
                    key!("multiplier", FloatList, [1.0]),
                    key!("grid.h", OptFloat, null),
                ];
                k.extend(eig());
                k
            }
            Kind::Survive => {
                let mut k = vec![
                    key!("method", Str, "proxy"),
                    key!("law", Str, "power_tail"),
                    key!("theta", Float, 2.0),
                    key!("d", Int, 2),
                    key!("t_grid", FloatList, [10.0, 31.6, 100.0, 316.0, 1000.0]),
                    key!("window.half", Float, 6.0),
                    key!("potential.epsilon", Float, 1.0),
                    key!("potential.bump_side", Float, 1.0),
                    key!("potential.height", OptFloat, 1.0),
                    key!("mc.paths", Int, 10000),
                    key!("mc.dt", Float, 0.005),
                    key!("configs", Int, 200),
                    key!("grid.h", Float, 0.25),
                ];
                k.extend(eig());
                k
            }
            Kind::Scaling => vec![
                key!("input", Str, ""),
                key!("d", Int, 2),
                key!("log_correction", Bool, false),
            ],
            Kind::Densitybox => vec![
                key!("law", Str, "power_tail"),
                key!("theta", Float, 2.0),
                key!("d", Int, 2),
                key!("r", Float, 16.0),
                key!("eta", OptFloat, null),
                key!("chi", OptFloat, null),
                key!("window.half", Int, 2),
                key!("replicas", Int, 100),
            ],
            Kind::Dos => {
                let mut k = vec![
                    key!("law", Str, "power_tail"),
                    key!("theta", Float, 2.0),
                    key!("d", Int, 2),
                    key!("N", Float, 1.0),
                    key!("lambda", FloatList, [2.0, 4.0, 6.0, 8.0, 10.0]),
                    key!("replicas", Int, 10),
                    key!("k", Int, 12),
                    key!("potential.height", OptFloat, 1.0),
                    key!("grid.h", Float, 0.03125),
                ];
                k.extend(eig());
                k
            }
            Kind::PpConverge => vec![
                key!("theta", FloatList, [0.05, 0.1, 0.5, 1.0, 2.0, 4.0, 8.0]),
                key!("d", Int, 2),
                key!("box.side", Float, 1.0),
            ],
        });
        keys
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A validated configuration: every schema key present, nothing else.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub values: BTreeMap<String, Value>,
}

impl ExperimentConfig {
    pub fn defaults(kind: Kind) -> Self {
        ExperimentConfig {
            kind,
            values: kind
                .schema()
                .iter()
                .map(|k| (k.name.to_string(), (k.default)()))
                .collect(),
        }
    }

    /// Defaults overlaid with the given flat object. A "kind" entry must
    /// match `kind` when present.
    pub fn resolve(kind: Kind, doc: &Map<String, Value>) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::defaults(kind);
        for (k, v) in doc {
            if k == "kind" {
                let named = v
                    .as_str()
                    .ok_or_else(|| ConfigError::Type {
                        key: "kind".into(),
                        expected: "a string",
                        got: v.to_string(),
                    })
                    .and_then(Kind::parse)?;
                if named != kind {
                    return Err(ConfigError::Invalid {
                        key: "kind".into(),
                        reason: format!("config is for {named}, not {kind}"),
                    });
                }
                continue;
            }
            cfg.set(k, v.clone())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: Value) -> Result<(), ConfigError> {
        let schema = self.kind.schema();
        let spec =
            schema
                .iter()
                .find(|s| s.name == key)
                .ok_or_else(|| ConfigError::UnknownKey {
                    kind: self.kind.name().into(),
                    key: key.into(),
                })?;
        if !spec.ty.accepts(&v) {
            return Err(ConfigError::Type {
                key: key.into(),
                expected: spec.ty.name(),
                got: v.to_string(),
            });
        }
        self.values.insert(key.to_string(), v);
        Ok(())
    }

    /// `key=value` with the value parsed as JSON, or as a string when that
    /// fails; comma lists become number lists for list keys.
    pub fn set_text(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, raw) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::Invalid {
                key: assignment.into(),
                reason: "expected key=value".into(),
            })?;
        let ty = self
            .kind
            .schema()
            .iter()
            .find(|s| s.name == k)
            .map(|s| s.ty);
        let v = match (ty, serde_json::from_str::<Value>(raw)) {
            (Some(KeyType::FloatList), _) if !raw.trim_start().starts_with('[') => {
                let items: Result<Vec<f64>, _> =
                    raw.split(',').map(|s| s.trim().parse::<f64>()).collect();
                match items {
                    Ok(v) => serde_json::json!(v),
                    Err(_) => Value::String(raw.into()),
                }
            }
            (Some(KeyType::Str), _) => Value::String(raw.into()),
            (_, Ok(v)) => v,
            (_, Err(_)) => Value::String(raw.into()),
        };
        self.set(k, v)
    }

    /// The flat document including "kind", with sorted keys.
    pub fn emit(&self) -> Value {
        let mut m = Map::new();
        m.insert("kind".into(), Value::String(self.kind.name().into()));
        for (k, v) in &self.values {
            m.insert(k.clone(), v.clone());
        }
        Value::Object(m)
    }

    pub fn parse(doc: &Value) -> Result<Self, ConfigError> {
        let m = doc
            .as_object()
            .ok_or_else(|| ConfigError::Shape("top level must be an object".into()))?;
        if let Some((k, _)) = m.iter().find(|(k, v)| *k != "kind" && (v.is_object())) {
            return Err(ConfigError::Shape(format!(
                "nested object under '{k}'; use dotted keys"
            )));
        }
        let kind = m
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| ConfigError::Shape("missing \"kind\"".into()))
            .and_then(Kind::parse)?;
        ExperimentConfig::resolve(kind, m)
    }

    fn get(&self, key: &str) -> &Value {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("schema key {key} missing"))
    }

    pub fn f64(&self, key: &str) -> f64 {
        self.get(key).as_f64().expect("validated number")
    }

    pub fn opt_f64(&self, key: &str) -> Option<f64> {
        self.get(key).as_f64()
    }

    pub fn usize(&self, key: &str) -> usize {
        self.get(key).as_u64().expect("validated integer") as usize
    }

    pub fn u64(&self, key: &str) -> u64 {
        self.get(key).as_u64().expect("validated integer")
    }

    pub fn bool(&self, key: &str) -> bool {
        self.get(key).as_bool().expect("validated bool")
    }

    pub fn str(&self, key: &str) -> &str {
        self.get(key).as_str().expect("validated string")
    }

    pub fn list(&self, key: &str) -> Vec<f64> {
        self.get(key)
            .as_array()
            .expect("validated list")
            .iter()
            .map(|v| v.as_f64().expect("validated number"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn defaults_round_trip_for_every_kind() {
        for kind in Kind::ALL {
            let c = ExperimentConfig::defaults(kind);
            assert_eq!(ExperimentConfig::parse(&c.emit()).unwrap(), c);
        }
    }

    #[test]
    fn unknown_and_mistyped_keys() {
        let bad = json!({"kind": "rauch_taylor", "grid.hh": 0.1});
        assert!(matches!(
            ExperimentConfig::parse(&bad),
            Err(ConfigError::UnknownKey { .. })
        ));
        let bad = json!({"kind": "rauch_taylor", "r": 8});
        assert!(matches!(
            ExperimentConfig::parse(&bad),
            Err(ConfigError::Type { .. })
        ));
        let nested = json!({"kind": "eig", "eig": {"tol": 1e-6}});
        assert!(matches!(
            ExperimentConfig::parse(&nested),
            Err(ConfigError::Shape(_))
        ));
        assert!(matches!(Kind::parse("nope"), Err(ConfigError::Kind(_))));
    }

    #[test]
    fn text_assignments() {
        let mut c = ExperimentConfig::defaults(Kind::RauchTaylor);
        c.set_text("r=8,16").unwrap();
        c.set_text("grid.h=0.0625").unwrap();
        c.set_text("eig.max_iter=50").unwrap();
        assert_eq!(c.list("r"), vec![8.0, 16.0]);
        assert_eq!(c.opt_f64("grid.h"), Some(0.0625));
        assert_eq!(c.usize("eig.max_iter"), 50);
        assert!(c.set_text("eig.max_iter=fifty").is_err());
        assert_eq!(Kind::parse("rauch-taylor").unwrap(), Kind::RauchTaylor);
    }
}
