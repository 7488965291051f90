//! Deployment files: instance counts, initial placements, global overrides
//! and the run horizon, in a TOML key/value format kept separate from the
//! model so one model serves many deployments.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::script::Value;

pub const DEFAULT_MAX_EVENTS: u64 = 1_000_000;

/// Where instances of one group start.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialPlacement {
    /// Every instance starts in this spatial state.
    Fixed(String),
    /// Each instance draws its start state from this categorical
    /// distribution, independently, at run initialization.
    Categorical(Vec<(String, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceGroup {
    pub class: String,
    pub count: u32,
    pub initial: InitialPlacement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub groups: Vec<InstanceGroup>,
    /// Overrides applied on top of the model's global initial values.
    pub global_overrides: Vec<(String, Value)>,
    pub horizon_time: f64,
    pub max_events: u64,
    /// Default property checked when the caller does not supply one.
    pub property: Option<String>,
}

impl Deployment {
    pub fn new(horizon_time: f64) -> Self {
        Deployment {
            groups: Vec::new(),
            global_overrides: Vec::new(),
            horizon_time,
            max_events: DEFAULT_MAX_EVENTS,
            property: None,
        }
    }

    pub fn with_group(mut self, class: &str, count: u32, initial: InitialPlacement) -> Self {
        self.groups.push(InstanceGroup { class: class.into(), count, initial });
        self
    }
}

#[derive(Debug, Error)]
pub enum DeploymentError {
    #[error("deployment file: {0}")]
    Toml(String),
    #[error("deployment file: {0}")]
    Invalid(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct DeployFile {
    horizon_time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_events: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    property: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    globals: Option<BTreeMap<String, toml::Value>>,
    #[serde(default)]
    instances: Vec<InstanceEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceEntry {
    class: String,
    count: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_dist: Option<BTreeMap<String, f64>>,
}

fn toml_to_value(v: &toml::Value) -> Result<Value, DeploymentError> {
    match v {
        toml::Value::Integer(i) => Ok(Value::Int(*i)),
        toml::Value::Float(f) => Ok(Value::Real(*f)),
        toml::Value::Boolean(b) => Ok(Value::Bool(*b)),
        toml::Value::Array(items) => {
            let converted: Result<Vec<Value>, _> = items.iter().map(toml_to_value).collect();
            Ok(Value::Array(converted?))
        }
        other => Err(DeploymentError::Invalid(format!(
            "unsupported global override type: {other}"
        ))),
    }
}

fn value_to_toml(v: &Value) -> toml::Value {
    match v {
        Value::Int(i) => toml::Value::Integer(*i),
        Value::Real(r) => toml::Value::Float(*r),
        Value::Bool(b) => toml::Value::Boolean(*b),
        Value::Array(items) => toml::Value::Array(items.iter().map(value_to_toml).collect()),
    }
}

pub fn parse_deployment(input: &str) -> Result<Deployment, DeploymentError> {
    let file: DeployFile =
        toml::from_str(input).map_err(|e| DeploymentError::Toml(e.to_string()))?;

    if !(file.horizon_time.is_finite() && file.horizon_time >= 0.0) {
        return Err(DeploymentError::Invalid(format!(
            "horizon_time must be nonnegative, got {}",
            file.horizon_time
        )));
    }

    let mut groups = Vec::new();
    for entry in &file.instances {
        let initial = match (&entry.initial, &entry.initial_dist) {
            (Some(state), None) => InitialPlacement::Fixed(state.clone()),
            (None, Some(dist)) => {
                if dist.is_empty() {
                    return Err(DeploymentError::Invalid(format!(
                        "class `{}`: initial_dist must not be empty",
                        entry.class
                    )));
                }
                InitialPlacement::Categorical(
                    dist.iter().map(|(k, v)| (k.clone(), *v)).collect(),
                )
            }
            (Some(_), Some(_)) => {
                return Err(DeploymentError::Invalid(format!(
                    "class `{}`: give either initial or initial_dist, not both",
                    entry.class
                )))
            }
            (None, None) => {
                return Err(DeploymentError::Invalid(format!(
                    "class `{}`: missing initial or initial_dist",
                    entry.class
                )))
            }
        };
        groups.push(InstanceGroup { class: entry.class.clone(), count: entry.count, initial });
    }

    let mut global_overrides = Vec::new();
    if let Some(table) = &file.globals {
        for (name, value) in table {
            global_overrides.push((name.clone(), toml_to_value(value)?));
        }
    }

    Ok(Deployment {
        groups,
        global_overrides,
        horizon_time: file.horizon_time,
        max_events: file.max_events.unwrap_or(DEFAULT_MAX_EVENTS),
        property: file.property,
    })
}

pub fn serialize_deployment(dep: &Deployment) -> String {
    let file = DeployFile {
        horizon_time: dep.horizon_time,
        max_events: if dep.max_events == DEFAULT_MAX_EVENTS { None } else { Some(dep.max_events) },
        property: dep.property.clone(),
        globals: if dep.global_overrides.is_empty() {
            None
        } else {
            Some(
                dep.global_overrides
                    .iter()
                    .map(|(k, v)| (k.clone(), value_to_toml(v)))
                    .collect(),
            )
        },
        instances: dep
            .groups
            .iter()
            .map(|g| match &g.initial {
                InitialPlacement::Fixed(state) => InstanceEntry {
                    class: g.class.clone(),
                    count: g.count,
                    initial: Some(state.clone()),
                    initial_dist: None,
                },
                InitialPlacement::Categorical(dist) => InstanceEntry {
                    class: g.class.clone(),
                    count: g.count,
                    initial: None,
                    initial_dist: Some(dist.iter().map(|(k, v)| (k.clone(), *v)).collect()),
                },
            })
            .collect(),
    };
    toml::to_string(&file).expect("deployment serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fixed_and_categorical_groups() {
        let text = r#"
            horizon_time = 10.0
            property = "F goal"

            [globals]
            numFlag = 0

            [[instances]]
            class = "Robot"
            count = 1
            initial = "RA"

            [[instances]]
            class = "Victim"
            count = 4
            initial_dist = { L0 = 0.5, L1 = 0.5 }
        "#;
        let dep = parse_deployment(text).unwrap();
        assert_eq!(dep.groups.len(), 2);
        assert_eq!(dep.horizon_time, 10.0);
        assert_eq!(dep.max_events, DEFAULT_MAX_EVENTS);
        assert_eq!(dep.global_overrides, vec![("numFlag".into(), Value::Int(0))]);
        assert!(matches!(&dep.groups[1].initial, InitialPlacement::Categorical(d) if d.len() == 2));
    }

    #[test]
    fn round_trips() {
        let dep = Deployment::new(25.0)
            .with_group("A", 3, InitialPlacement::Fixed("s0".into()))
            .with_group(
                "B",
                2,
                InitialPlacement::Categorical(vec![("x".into(), 0.25), ("y".into(), 0.75)]),
            );
        let text = serialize_deployment(&dep);
        let back = parse_deployment(&text).unwrap();
        assert_eq!(dep, back);
    }

    #[test]
    fn rejects_conflicting_initials() {
        let text = r#"
            horizon_time = 1.0
            [[instances]]
            class = "A"
            count = 1
            initial = "x"
            initial_dist = { y = 1.0 }
        "#;
        assert!(parse_deployment(text).is_err());
    }
}
