//! The command surface shared by both strategic agents and the tactical
//! layer.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CommandName {
    Search,
    Waypoint,
    Pickup,
    Dropobject,
    Gripper,
    Stop,
    Randomwalk,
}

pub const ALL_COMMANDS: [CommandName; 7] = [
    CommandName::Search,
    CommandName::Waypoint,
    CommandName::Pickup,
    CommandName::Dropobject,
    CommandName::Gripper,
    CommandName::Stop,
    CommandName::Randomwalk,
];

impl CommandName {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandName::Search => "SEARCH",
            CommandName::Waypoint => "WAYPOINT",
            CommandName::Pickup => "PICKUP",
            CommandName::Dropobject => "DROPOBJECT",
            CommandName::Gripper => "GRIPPER",
            CommandName::Stop => "STOP",
            CommandName::Randomwalk => "RANDOMWALK",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        ALL_COMMANDS
            .iter()
            .copied()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
    }

    /// Commands that move the robot or act on objects.
    pub fn is_physical(self) -> bool {
        !matches!(self, CommandName::Stop)
    }

    pub fn schema(self) -> &'static [ParamSpec] {
        use ParamKind::*;
        match self {
            CommandName::Search => &[
                ParamSpec {
                    name: "zone",
                    kind: Ident,
                    required: true,
                },
                ParamSpec {
                    name: "object",
                    kind: Ident,
                    required: true,
                },
                ParamSpec {
                    name: "features",
                    kind: Features,
                    required: false,
                },
            ],
            CommandName::Waypoint => &[ParamSpec {
                name: "waypoint",
                kind: Ident,
                required: true,
            }],
            CommandName::Pickup => &[ParamSpec {
                name: "object",
                kind: Ident,
                required: true,
            }],
            CommandName::Dropobject => &[ParamSpec {
                name: "location",
                kind: Ident,
                required: true,
            }],
            CommandName::Gripper => &[ParamSpec {
                name: "state",
                kind: GripperState,
                required: true,
            }],
            CommandName::Stop => &[],
            CommandName::Randomwalk => &[ParamSpec {
                name: "ticks",
                kind: Count,
                required: false,
            }],
        }
    }
}

impl fmt::Display for CommandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Lowercase identifier such as `stores-zone` or `thermostat`.
    Ident,
    /// `key:value` pairs joined by commas.
    Features,
    GripperState,
    /// Positive integer.
    Count,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
    pub required: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("unknown command {0}")]
    UnknownCommand(String),
    #[error("{command}: missing parameter {param}")]
    Missing { command: CommandName, param: &'static str },
    #[error("{command}: unexpected parameter {param}")]
    Unexpected { command: CommandName, param: String },
    #[error("{command}: bad value `{value}` for {param}")]
    BadValue {
        command: CommandName,
        param: &'static str,
        value: String,
    },
}

/// Object features as `key -> value`, e.g. `label -> thermostat-new`.
pub type Features = BTreeMap<String, String>;

pub fn parse_features(s: &str) -> Option<Features> {
    let mut out = Features::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once(':').or_else(|| part.split_once('='))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return None;
        }
        out.insert(k.to_lowercase(), v.to_string());
    }
    Some(out)
}

pub fn render_features(f: &Features) -> String {
    f.iter().map(|(k, v)| format!("{k}:{v}")).collect::<Vec<_>>().join(",")
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.' | ','))
}

/// A schema-valid command. Parameters are kept in schema order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Command {
    pub name: CommandName,
    pub params: Vec<(String, String)>,
}

impl Command {
    /// Builds and validates a command from loose `(name, value)` pairs.
    pub fn new<K: AsRef<str>, V: AsRef<str>>(name: CommandName, params: &[(K, V)]) -> Result<Self, SchemaError> {
        let schema = name.schema();
        for (k, _) in params {
            if !schema.iter().any(|p| p.name == k.as_ref()) {
                return Err(SchemaError::Unexpected {
                    command: name,
                    param: k.as_ref().to_string(),
                });
            }
        }
        let mut out = Vec::new();
        for spec in schema {
            let value = params
                .iter()
                .find(|(k, _)| k.as_ref() == spec.name)
                .map(|(_, v)| v.as_ref().trim());
            let Some(value) = value else {
                if spec.required {
                    return Err(SchemaError::Missing {
                        command: name,
                        param: spec.name,
                    });
                }
                continue;
            };
            let bad = || SchemaError::BadValue {
                command: name,
                param: spec.name,
                value: value.to_string(),
            };
            let normalized = match spec.kind {
                ParamKind::Ident => {
                    let v = value.to_lowercase().replace(' ', "-");
                    if !is_ident(&v) {
                        return Err(bad());
                    }
                    v
                }
                ParamKind::Features => render_features(&parse_features(value).ok_or_else(bad)?),
                ParamKind::GripperState => match value.to_lowercase().as_str() {
                    "open" => "open".into(),
                    "close" | "closed" => "close".into(),
                    _ => return Err(bad()),
                },
                ParamKind::Count => match value.parse::<u32>() {
                    Ok(n) if n > 0 => n.to_string(),
                    _ => return Err(bad()),
                },
            };
            out.push((spec.name.to_string(), normalized));
        }
        Ok(Self { name, params: out })
    }

    pub fn stop() -> Self {
        Self {
            name: CommandName::Stop,
            params: Vec::new(),
        }
    }

    pub fn param(&self, name: &str) -> Option<&str> {
        self.params.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    pub fn features(&self) -> Features {
        self.param("features").and_then(parse_features).unwrap_or_default()
    }

    /// Validates a tool call with JSON arguments.
    pub fn from_tool_call(name: &str, args: &Value) -> Result<Self, SchemaError> {
        let cname = CommandName::parse(name).ok_or_else(|| SchemaError::UnknownCommand(name.to_string()))?;
        let mut pairs: Vec<(String, String)> = Vec::new();
        match args {
            Value::Object(map) => {
                for (k, v) in map {
                    let s = match v {
                        Value::String(s) => s.clone(),
                        Value::Number(n) => n.to_string(),
                        Value::Bool(b) => b.to_string(),
                        Value::Object(o) => o
                            .iter()
                            .map(|(k, v)| {
                                format!(
                                    "{k}:{}",
                                    v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string())
                                )
                            })
                            .collect::<Vec<_>>()
                            .join(","),
                        Value::Null => continue,
                        other => other.to_string(),
                    };
                    pairs.push((k.clone(), s));
                }
            }
            Value::Null => {}
            other => {
                return Err(SchemaError::BadValue {
                    command: cname,
                    param: "arguments",
                    value: other.to_string(),
                })
            }
        }
        Self::new(cname, &pairs)
    }

    pub fn to_json(&self) -> Value {
        Value::Object(
            self.params
                .iter()
                .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                .collect(),
        )
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let params: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "{}({})", self.name, params.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn search_normalizes_and_keeps_schema_order() {
        let c = Command::new(
            CommandName::Search,
            &[
                ("object", "Thermostat"),
                ("zone", "stores zone"),
                ("features", "label=thermostat-new"),
            ],
        )
        .unwrap();
        assert_eq!(
            c.to_string(),
            "SEARCH(zone=stores-zone, object=thermostat, features=label:thermostat-new)"
        );
    }

    #[test]
    fn pickup_requires_object() {
        assert_eq!(
            Command::from_tool_call("PICKUP", &json!({})),
            Err(SchemaError::Missing {
                command: CommandName::Pickup,
                param: "object"
            })
        );
    }

    #[test]
    fn unknown_and_unexpected_are_rejected() {
        assert!(matches!(
            Command::from_tool_call("FLY", &json!({})),
            Err(SchemaError::UnknownCommand(_))
        ));
        assert!(matches!(
            Command::from_tool_call("STOP", &json!({"now": true})),
            Err(SchemaError::Unexpected { .. })
        ));
        assert!(matches!(
            Command::from_tool_call("GRIPPER", &json!({"state": "sideways"})),
            Err(SchemaError::BadValue { .. })
        ));
    }

    #[test]
    fn features_accept_nested_objects() {
        let c = Command::from_tool_call(
            "search",
            &json!({"zone": "stores-zone", "object": "thermostat", "features": {"label": "thermostat-new"}}),
        )
        .unwrap();
        assert_eq!(c.features().get("label").map(String::as_str), Some("thermostat-new"));
    }
}
