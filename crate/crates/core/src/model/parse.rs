// SPDX-License-Identifier: Apache-2.0

//! YAML surface syntax for application models.
//!
//! Two layouts are accepted: a bare mapping of node name to node definition,
//! or a document with a `nodes:` mapping and optional `inputs:` defaults.
//! Requirements are written `- relation: target`, `- relation: {node: target,
//! functionName: f, exclude: [..]}`, or in the generic form
//! `- dependency: {node: target, relationship: relation}`.

use std::collections::{BTreeMap, BTreeSet};

use serde_yaml::{Mapping, Value};
use thiserror::Error;

use super::{
    DeploymentModel, Endpoint, Literal, NetworkProps, NodeInstance, NodeKind, NodeProps,
    OnChainProps, Relation, Requirement, SecretRef, WalletProps, DEFAULT_NODE_HOST,
    DEFAULT_NODE_PORT,
};
use crate::primitives::Address;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("YAML syntax error: {0}")]
    Yaml(String),
    #[error("malformed model: {0}")]
    Structure(String),
    #[error("node `{node}`: unknown node type `{kind}`")]
    UnknownKind { node: String, kind: String },
    #[error("node `{node}`: unknown relation `{relation}`")]
    UnknownRelation { node: String, relation: String },
    #[error("node `{node}`: missing required property `{property}`")]
    MissingProperty { node: String, property: String },
    #[error("node `{node}`: invalid property `{property}`: {reason}")]
    InvalidProperty {
        node: String,
        property: String,
        reason: String,
    },
    #[error("node `{node}`: requirement targets unknown node `{target}`")]
    DanglingTarget { node: String, target: String },
    #[error("node `{node}`: input `{key}` is not defined")]
    UnresolvedInput { node: String, key: String },
}

const SECRET_PROPERTIES: &[&str] = &["privateKey", "sshKey", "secret"];

/// Parses a model document, resolving `get_input` references in ordinary
/// properties against `inputs` (which override any `inputs:` defaults in the
/// document). Secret-bearing properties keep their reference.
pub fn parse_model(
    text: &str,
    inputs: &BTreeMap<String, Literal>,
) -> Result<DeploymentModel, ModelError> {
    let doc: Value = serde_yaml::from_str(text).map_err(|e| ModelError::Yaml(e.to_string()))?;
    let root = match doc {
        Value::Null => Mapping::new(),
        Value::Mapping(m) => m,
        _ => return Err(ModelError::Structure("top level must be a mapping".into())),
    };

    let (node_defs, mut all_inputs) = if root.contains_key("nodes") {
        for key in root.keys() {
            let key = key.as_str().unwrap_or_default();
            if key != "nodes" && key != "inputs" {
                return Err(ModelError::Structure(format!(
                    "unexpected top-level key `{key}`"
                )));
            }
        }
        let nodes = match root.get("nodes") {
            Some(Value::Mapping(m)) => m.clone(),
            Some(Value::Null) | None => Mapping::new(),
            Some(_) => return Err(ModelError::Structure("`nodes` must be a mapping".into())),
        };
        let defaults = match root.get("inputs") {
            Some(v) => parse_input_defaults(v)?,
            None => BTreeMap::new(),
        };
        (nodes, defaults)
    } else {
        (root, BTreeMap::new())
    };
    all_inputs.extend(inputs.iter().map(|(k, v)| (k.clone(), v.clone())));

    let mut model = DeploymentModel {
        nodes: BTreeMap::new(),
        inputs: all_inputs,
    };
    for (name, def) in &node_defs {
        let name = name
            .as_str()
            .ok_or_else(|| ModelError::Structure("node names must be strings".into()))?;
        let node = parse_node(name, def, &model.inputs)?;
        model.nodes.insert(name.to_string(), node);
    }

    let names: BTreeSet<&str> = model.nodes.keys().map(String::as_str).collect();
    for node in model.nodes.values() {
        for req in &node.requirements {
            if !names.contains(req.target.as_str()) {
                return Err(ModelError::DanglingTarget {
                    node: node.name.clone(),
                    target: req.target.clone(),
                });
            }
        }
    }
    Ok(model)
}

/// Parses an inputs file: a mapping from input name to a scalar, or to a
/// mapping with a `default:` scalar.
pub fn parse_inputs(text: &str) -> Result<BTreeMap<String, Literal>, ModelError> {
    match serde_yaml::from_str::<Value>(text).map_err(|e| ModelError::Yaml(e.to_string()))? {
        Value::Null => Ok(BTreeMap::new()),
        v => parse_input_defaults(&v),
    }
}

fn parse_input_defaults(v: &Value) -> Result<BTreeMap<String, Literal>, ModelError> {
    let Value::Mapping(m) = v else {
        return Err(ModelError::Structure("`inputs` must be a mapping".into()));
    };
    let mut out = BTreeMap::new();
    for (k, v) in m {
        let key = k
            .as_str()
            .ok_or_else(|| ModelError::Structure("input names must be strings".into()))?;
        let value = match v {
            Value::Mapping(decl) => match decl.get("default") {
                Some(d) => d,
                None => continue,
            },
            other => other,
        };
        let lit = literal_from_yaml(value)
            .ok_or_else(|| ModelError::Structure(format!("input `{key}` is not a scalar")))?;
        out.insert(key.to_string(), lit);
    }
    Ok(out)
}

pub(crate) fn literal_from_yaml(v: &Value) -> Option<Literal> {
    Some(match v {
        Value::Bool(b) => Literal::Bool(*b),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Literal::Int(i128::from(i))
            } else if let Some(u) = n.as_u64() {
                Literal::Int(i128::from(u))
            } else {
                Literal::Float(n.as_f64()?)
            }
        }
        Value::String(s) => Literal::Str(s.clone()),
        Value::Sequence(items) => {
            Literal::List(items.iter().map(literal_from_yaml).collect::<Option<_>>()?)
        }
        Value::Tagged(t) => literal_from_yaml(&t.value)?,
        Value::Null | Value::Mapping(_) => return None,
    })
}

fn literal_to_yaml(l: &Literal) -> Value {
    match l {
        Literal::Bool(b) => Value::Bool(*b),
        Literal::Int(i) => match i64::try_from(*i) {
            Ok(v) => Value::Number(v.into()),
            Err(_) => match u64::try_from(*i) {
                Ok(v) => Value::Number(v.into()),
                Err(_) => Value::String(i.to_string()),
            },
        },
        Literal::Float(x) => Value::Number((*x).into()),
        Literal::Str(s) => Value::String(s.clone()),
        Literal::List(items) => Value::Sequence(items.iter().map(literal_to_yaml).collect()),
    }
}

fn get_input_key(v: &Value) -> Option<&str> {
    match v {
        Value::Mapping(m) if m.len() == 1 => m.get("get_input").and_then(Value::as_str),
        _ => None,
    }
}

/// Replaces `{ get_input: KEY }` anywhere inside `v`.
fn resolve_inputs(
    node: &str,
    v: &Value,
    inputs: &BTreeMap<String, Literal>,
) -> Result<Value, ModelError> {
    if let Some(key) = get_input_key(v) {
        return inputs
            .get(key)
            .map(literal_to_yaml)
            .ok_or_else(|| ModelError::UnresolvedInput {
                node: node.to_string(),
                key: key.to_string(),
            });
    }
    Ok(match v {
        Value::Sequence(items) => Value::Sequence(
            items
                .iter()
                .map(|i| resolve_inputs(node, i, inputs))
                .collect::<Result<_, _>>()?,
        ),
        Value::Mapping(m) => {
            let mut out = Mapping::new();
            for (k, v) in m {
                out.insert(k.clone(), resolve_inputs(node, v, inputs)?);
            }
            Value::Mapping(out)
        }
        other => other.clone(),
    })
}

fn parse_secret(node: &str, property: &str, v: &Value) -> Result<SecretRef, ModelError> {
    let invalid = |reason: &str| ModelError::InvalidProperty {
        node: node.to_string(),
        property: property.to_string(),
        reason: reason.to_string(),
    };
    match v {
        Value::String(s) => Ok(SecretRef::Inline(s.clone())),
        Value::Mapping(m) if m.len() == 1 => {
            if let Some(key) = m.get("get_input").and_then(Value::as_str) {
                Ok(SecretRef::Input(key.to_string()))
            } else if let Some(var) = m.get("env").and_then(Value::as_str) {
                Ok(SecretRef::Env(var.to_string()))
            } else {
                Err(invalid("expected `{ get_input: KEY }` or `{ env: VAR }`"))
            }
        }
        _ => Err(invalid("expected a secret reference")),
    }
}

fn secret_to_yaml(s: &SecretRef) -> Value {
    let mut m = Mapping::new();
    match s {
        SecretRef::Input(k) => m.insert("get_input".into(), k.clone().into()),
        SecretRef::Env(v) => m.insert("env".into(), v.clone().into()),
        SecretRef::Inline(raw) => return Value::String(raw.clone()),
    };
    Value::Mapping(m)
}

struct Props<'a> {
    node: &'a str,
    map: Mapping,
}

impl<'a> Props<'a> {
    fn take(&mut self, key: &str) -> Option<Value> {
        self.map.remove(key).filter(|v| !v.is_null())
    }

    fn invalid(&self, property: &str, reason: impl Into<String>) -> ModelError {
        ModelError::InvalidProperty {
            node: self.node.to_string(),
            property: property.to_string(),
            reason: reason.into(),
        }
    }

    fn string(&mut self, key: &str) -> Result<Option<String>, ModelError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(self.invalid(key, "expected a string")),
        }
    }

    fn required_string(&mut self, key: &str) -> Result<String, ModelError> {
        self.string(key)?
            .ok_or_else(|| ModelError::MissingProperty {
                node: self.node.to_string(),
                property: key.to_string(),
            })
    }

    fn integer(&mut self, key: &str) -> Result<Option<i64>, ModelError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Number(n)) if n.is_i64() => Ok(n.as_i64()),
            Some(_) => Err(self.invalid(key, "expected an integer")),
        }
    }

    fn address(&mut self, key: &str) -> Result<Option<Address>, ModelError> {
        match self.string(key)? {
            None => Ok(None),
            Some(s) => Address::parse_checked(&s)
                .map(Some)
                .map_err(|e| self.invalid(key, e.to_string())),
        }
    }

    fn secret(&mut self, key: &str) -> Result<Option<SecretRef>, ModelError> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => parse_secret(self.node, key, &v).map(Some),
        }
    }

    /// Fails on any property not consumed so far.
    fn finish(self) -> Result<(), ModelError> {
        match self.map.keys().next() {
            None => Ok(()),
            Some(k) => Err(self.invalid(k.as_str().unwrap_or("?"), "unknown property")),
        }
    }
}

fn parse_node(
    name: &str,
    def: &Value,
    inputs: &BTreeMap<String, Literal>,
) -> Result<NodeInstance, ModelError> {
    let structure = |msg: &str| ModelError::Structure(format!("node `{name}`: {msg}"));
    let Value::Mapping(def) = def else {
        return Err(structure("definition must be a mapping"));
    };
    for key in def.keys() {
        match key.as_str() {
            Some("type" | "properties" | "requirements") => {}
            Some(other) => return Err(structure(&format!("unexpected key `{other}`"))),
            None => return Err(structure("keys must be strings")),
        }
    }
    let type_name = def
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| structure("missing `type`"))?;
    let kind = NodeKind::from_type_name(type_name).ok_or_else(|| ModelError::UnknownKind {
        node: name.to_string(),
        kind: type_name.to_string(),
    })?;

    let raw_props = match def.get("properties") {
        None | Some(Value::Null) => Mapping::new(),
        Some(Value::Mapping(m)) => m.clone(),
        Some(_) => return Err(structure("`properties` must be a mapping")),
    };
    let mut map = Mapping::new();
    for (k, v) in raw_props {
        let key = k
            .as_str()
            .ok_or_else(|| structure("property names must be strings"))?;
        let v = if SECRET_PROPERTIES.contains(&key) {
            v
        } else {
            resolve_inputs(name, &v, inputs)?
        };
        map.insert(k, v);
    }
    let props = parse_props(kind, Props { node: name, map })?;

    let requirements = match def.get("requirements") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Sequence(items)) => items
            .iter()
            .map(|item| parse_requirement(name, item))
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(structure("`requirements` must be a list")),
    };

    Ok(NodeInstance {
        name: name.to_string(),
        kind,
        props,
        requirements,
    })
}

fn parse_props(kind: NodeKind, mut p: Props<'_>) -> Result<NodeProps, ModelError> {
    let props = match kind {
        NodeKind::Network | NodeKind::SelfHostedNode | NodeKind::NodeServiceProvider => {
            let chain_id = match p.integer("chainId")? {
                Some(id) if id < 0 => return Err(p.invalid("chainId", "must be non-negative")),
                other => other.map(|id| id as u64),
            };
            let url = p.string("url")?;
            let endpoint = if kind == NodeKind::NodeServiceProvider || url.is_some() {
                let url = match url {
                    Some(u) => u,
                    None => p.required_string("url")?,
                };
                Endpoint::Provider {
                    url,
                    secret: p.secret("secret")?,
                }
            } else {
                Endpoint::SelfHosted {
                    host: p
                        .string("host")?
                        .unwrap_or_else(|| DEFAULT_NODE_HOST.into()),
                    port: p.integer("port")?.unwrap_or(DEFAULT_NODE_PORT),
                }
            };
            NodeProps::Network(NetworkProps { endpoint, chain_id })
        }
        NodeKind::Wallet => NodeProps::Wallet(WalletProps {
            public_key: p.address("publicKey")?,
            private_key: p.secret("privateKey")?,
        }),
        NodeKind::SmartContractReference => NodeProps::Reference {
            address: p
                .address("address")?
                .ok_or_else(|| ModelError::MissingProperty {
                    node: p.node.to_string(),
                    property: "address".into(),
                })?,
        },
        NodeKind::Credential => NodeProps::Credential {
            ssh_key: p
                .secret("sshKey")?
                .ok_or_else(|| ModelError::MissingProperty {
                    node: p.node.to_string(),
                    property: "sshKey".into(),
                })?,
        },
        k if k.is_deployable() => {
            let abi = p.required_string("abi")?;
            let parameters = match p.take("parameters") {
                None => Vec::new(),
                Some(Value::Sequence(items)) => items
                    .iter()
                    .map(|i| {
                        literal_from_yaml(i).ok_or_else(|| p.invalid("parameters", "not a literal"))
                    })
                    .collect::<Result<_, _>>()?,
                Some(_) => return Err(p.invalid("parameters", "expected a list")),
            };
            let destroy_function = p.string("destroyFunction")?;
            let refund_address = p.address("refundAddress")?;
            let upgrade_function = if k == NodeKind::Proxy {
                p.string("upgradeFunction")?
            } else {
                None
            };
            NodeProps::OnChain(OnChainProps {
                abi,
                parameters,
                destroy_function,
                refund_address,
                upgrade_function,
            })
        }
        _ => {
            let mut extra = BTreeMap::new();
            for (k, v) in std::mem::take(&mut p.map) {
                let key = k.as_str().unwrap_or_default().to_string();
                let json = serde_json::to_value(&v).map_err(|e| p.invalid(&key, e.to_string()))?;
                extra.insert(key, json);
            }
            NodeProps::OffChain(extra)
        }
    };
    p.finish()?;
    Ok(props)
}

fn parse_requirement(node: &str, item: &Value) -> Result<Requirement, ModelError> {
    let structure = |msg: String| ModelError::Structure(format!("node `{node}`: {msg}"));
    let Value::Mapping(m) = item else {
        return Err(structure(
            "each requirement must be a single-key mapping".into(),
        ));
    };
    if m.len() != 1 {
        return Err(structure(
            "each requirement must be a single-key mapping".into(),
        ));
    }
    let (key, value) = m.iter().next().expect("len checked");
    let key = key
        .as_str()
        .ok_or_else(|| structure("requirement names must be strings".into()))?;

    let unknown = |relation: &str| ModelError::UnknownRelation {
        node: node.to_string(),
        relation: relation.to_string(),
    };
    let (relation, body) = match value {
        Value::String(target) => {
            let relation = Relation::from_name(key).ok_or_else(|| unknown(key))?;
            return Ok(Requirement::new(relation, target.clone()));
        }
        Value::Mapping(body) => {
            let relation = match body.get("relationship") {
                Some(Value::String(r)) => Relation::from_name(r).ok_or_else(|| unknown(r))?,
                Some(_) => {
                    return Err(structure(format!("`{key}`: relationship must be a string")))
                }
                None => Relation::from_name(key).ok_or_else(|| unknown(key))?,
            };
            (relation, body)
        }
        _ => return Err(structure(format!("requirement `{key}` has no target"))),
    };

    for k in body.keys() {
        match k.as_str() {
            Some("node" | "relationship" | "functionName" | "exclude") => {}
            _ => {
                return Err(structure(format!(
                    "requirement `{key}`: unexpected field {k:?}"
                )))
            }
        }
    }
    let target = body
        .get("node")
        .and_then(Value::as_str)
        .ok_or_else(|| structure(format!("requirement `{key}` lacks `node`")))?;
    let function_name = match body.get("functionName") {
        None | Some(Value::Null) => None,
        Some(Value::String(f)) => Some(f.clone()),
        Some(_) => {
            return Err(structure(format!(
                "requirement `{key}`: functionName must be a string"
            )))
        }
    };
    let exclude = match body.get("exclude") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Sequence(items)) => items
            .iter()
            .map(|i| {
                i.as_str().map(str::to_string).ok_or_else(|| {
                    structure(format!(
                        "requirement `{key}`: exclude entries must be strings"
                    ))
                })
            })
            .collect::<Result<_, _>>()?,
        Some(_) => {
            return Err(structure(format!(
                "requirement `{key}`: exclude must be a list"
            )))
        }
    };
    Ok(Requirement {
        relation,
        target: target.to_string(),
        function_name,
        exclude,
    })
}

fn props_to_yaml(node: &NodeInstance) -> Mapping {
    let mut m = Mapping::new();
    let mut put = |k: &str, v: Value| {
        m.insert(Value::String(k.to_string()), v);
    };
    match &node.props {
        NodeProps::Network(n) => {
            match &n.endpoint {
                Endpoint::SelfHosted { host, port } => {
                    put("host", host.clone().into());
                    put("port", (*port).into());
                }
                Endpoint::Provider { url, secret } => {
                    put("url", url.clone().into());
                    if let Some(s) = secret {
                        put("secret", secret_to_yaml(s));
                    }
                }
            }
            if let Some(id) = n.chain_id {
                put("chainId", id.into());
            }
        }
        NodeProps::Wallet(w) => {
            if let Some(pk) = &w.public_key {
                put("publicKey", pk.to_string().into());
            }
            if let Some(s) = &w.private_key {
                put("privateKey", secret_to_yaml(s));
            }
        }
        NodeProps::OnChain(p) => {
            put("abi", p.abi.clone().into());
            if !p.parameters.is_empty() {
                put(
                    "parameters",
                    Value::Sequence(p.parameters.iter().map(literal_to_yaml).collect()),
                );
            }
            if let Some(f) = &p.destroy_function {
                put("destroyFunction", f.clone().into());
            }
            if let Some(a) = &p.refund_address {
                put("refundAddress", a.to_string().into());
            }
            if let Some(f) = &p.upgrade_function {
                put("upgradeFunction", f.clone().into());
            }
        }
        NodeProps::Reference { address } => put("address", address.to_string().into()),
        NodeProps::Credential { ssh_key } => put("sshKey", secret_to_yaml(ssh_key)),
        NodeProps::OffChain(extra) => {
            for (k, v) in extra {
                put(k, serde_yaml::to_value(v).unwrap_or(Value::Null));
            }
        }
    }
    m
}

fn requirement_to_yaml(r: &Requirement) -> Value {
    let body = if r.function_name.is_none() && r.exclude.is_empty() {
        Value::String(r.target.clone())
    } else {
        let mut b = Mapping::new();
        b.insert("node".into(), r.target.clone().into());
        if let Some(f) = &r.function_name {
            b.insert("functionName".into(), f.clone().into());
        }
        if !r.exclude.is_empty() {
            b.insert(
                "exclude".into(),
                Value::Sequence(r.exclude.iter().cloned().map(Value::String).collect()),
            );
        }
        Value::Mapping(b)
    };
    let mut m = Mapping::new();
    m.insert(r.relation.name().into(), body);
    Value::Mapping(m)
}

/// Writes the model in the `nodes:`/`inputs:` layout. Reparsing the output
/// yields an equal model.
pub fn serialize_model(model: &DeploymentModel) -> String {
    let mut nodes = Mapping::new();
    for node in model.nodes.values() {
        let mut def = Mapping::new();
        def.insert("type".into(), node.kind.type_name().into());
        let props = props_to_yaml(node);
        if !props.is_empty() {
            def.insert("properties".into(), Value::Mapping(props));
        }
        if !node.requirements.is_empty() {
            def.insert(
                "requirements".into(),
                Value::Sequence(node.requirements.iter().map(requirement_to_yaml).collect()),
            );
        }
        nodes.insert(node.name.clone().into(), Value::Mapping(def));
    }
    let mut root = Mapping::new();
    root.insert("nodes".into(), Value::Mapping(nodes));
    if !model.inputs.is_empty() {
        let inputs: Mapping = model
            .inputs
            .iter()
            .map(|(k, v)| (Value::String(k.clone()), literal_to_yaml(v)))
            .collect();
        root.insert("inputs".into(), Value::Mapping(inputs));
    }
    serde_yaml::to_string(&Value::Mapping(root)).expect("model serializes")
}
