// SPDX-License-Identifier: Apache-2.0

//! Structural constraints on a parsed model. Violations are data: the report
//! lists every problem found, in a canonical order.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{
    ArtifactStore, DeploymentModel, Endpoint, NodeInstance, NodeKind, NodeProps, Relation,
    SecretRef,
};
use crate::graph::{build_dependency_graph, detect_hard_cycles};
use crate::linker::abi::AbiType;
use crate::linker::{bind_constructor, unsatisfied_placeholders};
use crate::patterns::facet_selectors;
use crate::primitives::Address;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum ViolationCode {
    IllegalRelation,
    ConstructorCycle,
    MissingArtifact,
    DestroyWithoutRefund,
    UnknownDestroyFunction,
    MissingFunctionName,
    UnknownWireFunction,
    InvalidExclude,
    UnknownExclude,
    CutCount,
    ImplementationCount,
    SelectorCollision,
    EmptyFacet,
    HostedOnCount,
    MissingCredentials,
    ConstructorBinding,
    UnlinkedLibrary,
    InvalidEndpoint,
    NoWallet,
    NoNetwork,
    WalletWithoutKey,
    InlineSecret,
    InitNotExecuted,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Violation {
    pub severity: Severity,
    pub code: ViolationCode,
    pub nodes: Vec<String>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn error(&mut self, code: ViolationCode, nodes: &[&str], message: impl Into<String>) {
        self.violations.push(Violation {
            severity: Severity::Error,
            code,
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            message: message.into(),
        });
    }

    fn warn(&mut self, code: ViolationCode, nodes: &[&str], message: impl Into<String>) {
        self.warnings.push(Violation {
            severity: Severity::Warning,
            code,
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            message: message.into(),
        });
    }
}

const NETWORKS: &[NodeKind] = &[
    NodeKind::Network,
    NodeKind::SelfHostedNode,
    NodeKind::NodeServiceProvider,
];
const CONTRACTS: &[NodeKind] = &[
    NodeKind::SmartContract,
    NodeKind::Proxy,
    NodeKind::Diamond,
    NodeKind::Facet,
    NodeKind::DiamondCut,
    NodeKind::DiamondInit,
];

/// Target kinds a `relation` may point at from a `source` node. Empty when
/// the source kind cannot carry the relation at all.
pub fn legal_targets(source: NodeKind, relation: Relation) -> &'static [NodeKind] {
    use NodeKind::*;
    use Relation::*;
    let contract = source.is_contract_like();
    let deployable = source.is_deployable();
    match relation {
        UseNetwork
            if deployable || matches!(source, SmartContractReference | OffChainComponent) =>
        {
            NETWORKS
        }
        UseWallet if deployable => &[Wallet],
        UseLibrary if deployable => &[Library],
        UseContractInConstructor if contract => CONTRACTS,
        UseReferenceInConstructor if contract => &[SmartContractReference],
        UseContract if contract || source == OffChainComponent => CONTRACTS,
        UseReference if contract || source == OffChainComponent => &[SmartContractReference],
        UseFacet if source == Diamond => &[Facet],
        UseCut if source == Diamond => &[DiamondCut, SmartContract],
        UseInit if source == Diamond => &[DiamondInit],
        Implementation if source == Proxy => &[SmartContract],
        HostedOn if source == OffChainComponent => &[DecentralizedStorage, Server],
        UseCredentials if source == Server => &[Credential],
        _ => &[],
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '$')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$')
}

/// Checks every structural constraint on `model`, using `artifacts` for the
/// ABI-dependent ones. Deterministic and independent of declaration order.
pub fn validate_model(model: &DeploymentModel, artifacts: &ArtifactStore) -> ValidationReport {
    let mut report = ValidationReport::default();

    for node in model.nodes.values() {
        check_relations(model, node, &mut report);
        check_props(node, &mut report);
    }

    let graph = build_dependency_graph(model);
    for cycle in detect_hard_cycles(&graph) {
        let nodes: Vec<&str> = cycle.iter().map(String::as_str).collect();
        report.error(
            ViolationCode::ConstructorCycle,
            &nodes,
            format!("constructor cycle {{{}}}", cycle.join(",")),
        );
    }

    for node in model.nodes.values() {
        check_artifact_constraints(model, node, artifacts, &mut report);
    }

    report.violations.sort();
    report.violations.dedup();
    report.warnings.sort();
    report.warnings.dedup();
    report
}

fn check_relations(model: &DeploymentModel, node: &NodeInstance, report: &mut ValidationReport) {
    let name = node.name.as_str();
    for req in &node.requirements {
        let Some(target) = model.nodes.get(&req.target) else {
            continue;
        };
        if !legal_targets(node.kind, req.relation).contains(&target.kind) {
            report.error(
                ViolationCode::IllegalRelation,
                &[name, &req.target],
                format!(
                    "{} `{name}` cannot {} {} `{}`",
                    node.kind, req.relation, target.kind, req.target
                ),
            );
        }
        let wires = matches!(req.relation, Relation::UseContract | Relation::UseReference);
        if wires && node.kind.is_contract_like() {
            match &req.function_name {
                Some(f) if is_identifier(f) => {}
                _ => report.error(
                    ViolationCode::MissingFunctionName,
                    &[name, &req.target],
                    format!(
                        "`{name}` {} `{}` needs a functionName",
                        req.relation, req.target
                    ),
                ),
            }
        }
        for ex in &req.exclude {
            if !is_identifier(ex) {
                report.error(
                    ViolationCode::InvalidExclude,
                    &[name, &req.target],
                    format!("`{ex}` is not a valid function name"),
                );
            }
        }
    }

    let count = |r: Relation| node.requirements_of(r).count();
    match node.kind {
        NodeKind::Diamond => {
            if count(Relation::UseCut) != 1 {
                report.error(
                    ViolationCode::CutCount,
                    &[name],
                    format!(
                        "diamond `{name}` needs exactly one useCut, has {}",
                        count(Relation::UseCut)
                    ),
                );
            }
            for init in node.requirements_of(Relation::UseInit) {
                report.warn(
                    ViolationCode::InitNotExecuted,
                    &[name, &init.target],
                    format!(
                        "diamondInit `{}` is modelled but its initialization call is not executed",
                        init.target
                    ),
                );
            }
        }
        NodeKind::Proxy if count(Relation::Implementation) != 1 => report.error(
            ViolationCode::ImplementationCount,
            &[name],
            format!("proxy `{name}` needs exactly one implementation"),
        ),
        NodeKind::OffChainComponent if count(Relation::HostedOn) > 1 => report.error(
            ViolationCode::HostedOnCount,
            &[name],
            format!("off-chain component `{name}` has more than one hostedOn"),
        ),
        NodeKind::Server if count(Relation::UseCredentials) == 0 => report.error(
            ViolationCode::MissingCredentials,
            &[name],
            format!("server `{name}` needs useCredentials"),
        ),
        _ => {}
    }

    if node.kind.is_deployable() {
        if model.wallet_for(node).is_none() {
            report.error(
                ViolationCode::NoWallet,
                &[name],
                format!("no wallet signs for `{name}`"),
            );
        }
        if model.network_for(node).is_none() {
            report.error(
                ViolationCode::NoNetwork,
                &[name],
                format!("no network for `{name}`"),
            );
        }
    }
}

fn check_props(node: &NodeInstance, report: &mut ValidationReport) {
    let name = node.name.as_str();
    let inline = |report: &mut ValidationReport, s: &Option<SecretRef>, prop: &str| {
        if let Some(SecretRef::Inline(_)) = s {
            report.warn(
                ViolationCode::InlineSecret,
                &[name],
                format!("`{name}`.{prop} is written in the model; use get_input or env"),
            );
        }
    };
    match &node.props {
        NodeProps::OnChain(p) => {
            if p.destroy_function.is_some() && p.refund_address.is_none() {
                report.error(
                    ViolationCode::DestroyWithoutRefund,
                    &[name],
                    format!("`{name}` has destroyFunction but no refundAddress"),
                );
            }
        }
        NodeProps::Network(n) => match &n.endpoint {
            Endpoint::SelfHosted { port, .. } => {
                if !(1..=65535).contains(port) {
                    report.error(
                        ViolationCode::InvalidEndpoint,
                        &[name],
                        format!("port {port} out of range"),
                    );
                }
            }
            Endpoint::Provider { url, secret } => {
                let ok = reqwest::Url::parse(url)
                    .map(|u| matches!(u.scheme(), "http" | "https") && u.host().is_some())
                    .unwrap_or(false);
                if !ok {
                    report.error(
                        ViolationCode::InvalidEndpoint,
                        &[name],
                        format!("`{url}` is not a valid http(s) URL"),
                    );
                }
                inline(report, secret, "secret");
            }
        },
        NodeProps::Wallet(w) => {
            if w.private_key.is_none() && w.public_key.is_none() {
                report.error(
                    ViolationCode::WalletWithoutKey,
                    &[name],
                    format!("wallet `{name}` has neither privateKey nor publicKey"),
                );
            }
            inline(report, &w.private_key, "privateKey");
        }
        NodeProps::Credential { ssh_key } => inline(report, &Some(ssh_key.clone()), "sshKey"),
        _ => {}
    }
}

fn check_artifact_constraints(
    model: &DeploymentModel,
    node: &NodeInstance,
    artifacts: &ArtifactStore,
    report: &mut ValidationReport,
) {
    let name = node.name.as_str();
    let Some(props) = node.on_chain() else {
        return;
    };
    let artifact = match artifacts.get(&props.abi) {
        Ok(a) => a,
        Err(e) => {
            report.error(ViolationCode::MissingArtifact, &[name], e.to_string());
            return;
        }
    };

    // Constructor binding with stand-in addresses for the references.
    let refs = vec![Address::ZERO; node.constructor_refs().count()];
    match bind_constructor(&artifact, &refs, &props.parameters) {
        Ok(_) => {}
        Err(e) => report.error(
            ViolationCode::ConstructorBinding,
            &[name],
            format!("`{name}` constructor: {e}"),
        ),
    }

    let libraries: Vec<(String, String)> = node
        .requirements_of(Relation::UseLibrary)
        .filter_map(|r| model.nodes.get(&r.target)?.on_chain())
        .filter_map(|p| artifacts.get(&p.abi).ok())
        .map(|a| (a.fully_qualified_name(), a.contract_name.clone()))
        .collect();
    match unsatisfied_placeholders(&artifact.bytecode, &libraries) {
        Ok(missing) if missing.is_empty() => {}
        Ok(missing) => report.error(
            ViolationCode::UnlinkedLibrary,
            &[name],
            format!(
                "`{name}` bytecode needs libraries not declared with useLibrary: {}",
                missing.join(", ")
            ),
        ),
        Err(e) => report.error(ViolationCode::UnlinkedLibrary, &[name], e.to_string()),
    }

    if let Some(f) = &props.destroy_function {
        let found = artifact
            .abi
            .functions_named(f)
            .any(|func| func.input_types() == [AbiType::Address]);
        if !found {
            report.error(
                ViolationCode::UnknownDestroyFunction,
                &[name],
                format!("`{name}` ABI has no `{f}(address)`"),
            );
        }
    }

    if node.kind.is_contract_like() {
        for req in node
            .requirements
            .iter()
            .filter(|r| matches!(r.relation, Relation::UseContract | Relation::UseReference))
        {
            let Some(f) = &req.function_name else {
                continue;
            };
            let found = artifact
                .abi
                .functions_named(f)
                .any(|func| func.input_types() == [AbiType::Address]);
            if !found {
                report.error(
                    ViolationCode::UnknownWireFunction,
                    &[name, &req.target],
                    format!(
                        "`{name}` ABI has no `{f}(address)` to wire `{}`",
                        req.target
                    ),
                );
            }
        }
    }

    if node.kind == NodeKind::Diamond {
        check_diamond_selectors(model, node, artifacts, report);
    }
}

fn check_diamond_selectors(
    model: &DeploymentModel,
    diamond: &NodeInstance,
    artifacts: &ArtifactStore,
    report: &mut ValidationReport,
) {
    let mut owner: BTreeMap<crate::primitives::Selector, &str> = BTreeMap::new();
    for req in diamond.requirements_of(Relation::UseFacet) {
        let Some(facet) = model.nodes.get(&req.target) else {
            continue;
        };
        let Some(props) = facet.on_chain() else {
            continue;
        };
        let Ok(artifact) = artifacts.get(&props.abi) else {
            continue;
        };
        for ex in &req.exclude {
            if artifact.abi.functions_named(ex).next().is_none() {
                report.warn(
                    ViolationCode::UnknownExclude,
                    &[&diamond.name, &facet.name],
                    format!("excluded function `{ex}` is not in `{}`", facet.name),
                );
            }
        }
        let selectors = match facet_selectors(&artifact, &req.exclude) {
            Ok(s) => s,
            Err(e) => {
                report.error(ViolationCode::EmptyFacet, &[&facet.name], e.to_string());
                continue;
            }
        };
        for sel in selectors {
            if let Some(other) = owner.insert(sel, &facet.name) {
                if other != facet.name {
                    let mut pair = [other, facet.name.as_str()];
                    pair.sort();
                    report.error(
                        ViolationCode::SelectorCollision,
                        &[&diamond.name, pair[0], pair[1]],
                        format!(
                            "facets `{}` and `{}` both export selector {sel} in diamond `{}`",
                            pair[0], pair[1], diamond.name
                        ),
                    );
                }
            }
        }
    }
}
