// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use super::{detect_hard_cycles, DependencyGraph, EdgeKind};
use crate::model::{DeploymentModel, NodeKind, DEFAULT_UPGRADE_SIGNATURE};
use crate::primitives::Address;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("hard dependency cycle(s): {}", fmt_cycles(.0))]
    HardCycles(Vec<Vec<String>>),
    #[error("unknown node `{0}`")]
    UnknownTarget(String),
    #[error("`{0}` is off-chain; reconfigure it instead of upgrading")]
    OffChainTarget(String),
    #[error("`{0}` is not deployed by the orchestrator")]
    NotDeployable(String),
    #[error("`{0}` has no destroyFunction")]
    MissingDestroyFunction(String),
    #[error("`{0}` has no refundAddress")]
    MissingRefundAddress(String),
    #[error("`{target}` still has live hard dependents: {}", .dependents.join(", "))]
    LiveDependents {
        target: String,
        dependents: Vec<String>,
    },
}

fn fmt_cycles(cycles: &[Vec<String>]) -> String {
    cycles
        .iter()
        .map(|c| format!("{{{}}}", c.join(",")))
        .collect::<Vec<_>>()
        .join(" ")
}

/// One executable action. Addresses are resolved at execution time from the
/// deployment record; the plan only names nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(
    tag = "step",
    rename_all = "camelCase",
    rename_all_fields = "camelCase"
)]
pub enum Step {
    DeployLibrary {
        node: String,
    },
    LinkAndDeploy {
        node: String,
        libraries: Vec<String>,
    },
    DeployContract {
        node: String,
    },
    /// Calls `function(address of target)` on `node`.
    CallWire {
        node: String,
        function: String,
        target: String,
    },
    DiamondCutAdd {
        diamond: String,
        facet: String,
    },
    DiamondCutReplace {
        diamond: String,
        facet: String,
    },
    DiamondCutRemove {
        diamond: String,
        facet: String,
    },
    ConfigureOffChain {
        node: String,
    },
    Destroy {
        node: String,
        function: String,
        refund_address: Address,
    },
}

impl Step {
    /// The node whose record entry the step produces or mutates.
    pub fn node(&self) -> &str {
        match self {
            Step::DeployLibrary { node }
            | Step::LinkAndDeploy { node, .. }
            | Step::DeployContract { node }
            | Step::CallWire { node, .. }
            | Step::ConfigureOffChain { node }
            | Step::Destroy { node, .. } => node,
            Step::DiamondCutAdd { diamond, .. }
            | Step::DiamondCutReplace { diamond, .. }
            | Step::DiamondCutRemove { diamond, .. } => diamond,
        }
    }

    pub fn is_deploy(&self) -> bool {
        matches!(
            self,
            Step::DeployLibrary { .. } | Step::LinkAndDeploy { .. } | Step::DeployContract { .. }
        )
    }

    fn rank(&self) -> u8 {
        match self {
            Step::DeployLibrary { .. }
            | Step::LinkAndDeploy { .. }
            | Step::DeployContract { .. } => 0,
            Step::CallWire { .. } => 1,
            Step::DiamondCutRemove { .. } => 2,
            Step::DiamondCutReplace { .. } => 3,
            Step::DiamondCutAdd { .. } => 4,
            Step::ConfigureOffChain { .. } => 5,
            Step::Destroy { .. } => 6,
        }
    }

    fn secondary(&self) -> &str {
        match self {
            Step::CallWire { target, .. } => target,
            Step::DiamondCutAdd { facet, .. }
            | Step::DiamondCutReplace { facet, .. }
            | Step::DiamondCutRemove { facet, .. } => facet,
            _ => "",
        }
    }

    fn sort_key(&self) -> (&str, u8, &str) {
        (self.node(), self.rank(), self.secondary())
    }
}

fn sort_steps(steps: &mut [Step]) {
    steps.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeploymentPlan {
    pub layers: Vec<Vec<Step>>,
    pub warnings: Vec<String>,
}

impl DeploymentPlan {
    pub fn steps(&self) -> impl Iterator<Item = &Step> {
        self.layers.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.steps().count()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Node named by each step, layer by layer.
    pub fn layer_nodes(&self) -> Vec<Vec<String>> {
        self.layers
            .iter()
            .map(|l| l.iter().map(|s| s.node().to_string()).collect())
            .collect()
    }

    /// Index of the layer holding the deploy step of `node`.
    pub fn deploy_layer(&self, node: &str) -> Option<usize> {
        self.layers
            .iter()
            .position(|l| l.iter().any(|s| s.is_deploy() && s.node() == node))
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct UpgradePlan {
    pub target: String,
    /// Topologically ordered: every node follows its hard dependencies.
    pub redeploy_set: Vec<String>,
    pub redeploy: Vec<Step>,
    pub wire_calls: Vec<Step>,
    pub diamond_cuts: Vec<Step>,
    pub off_chain_updates: Vec<Step>,
}

impl UpgradePlan {
    /// Execution order: redeploys, then wiring and cuts, then off-chain.
    pub fn steps(&self) -> impl Iterator<Item = &Step> {
        self.redeploy
            .iter()
            .chain(&self.wire_calls)
            .chain(&self.diamond_cuts)
            .chain(&self.off_chain_updates)
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

/// Deploy step for a deployable vertex; `None` for anything else.
pub fn deploy_step(graph: &DependencyGraph, node: &str) -> Option<Step> {
    let kind = graph.kind(node)?;
    if !kind.is_deployable() {
        return None;
    }
    let libraries: Vec<String> = graph
        .edges_from(node)
        .filter(|e| matches!(e.kind, EdgeKind::LL | EdgeKind::LC))
        .map(|e| e.target.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let node = node.to_string();
    Some(if !libraries.is_empty() {
        Step::LinkAndDeploy { node, libraries }
    } else if kind == NodeKind::Library {
        Step::DeployLibrary { node }
    } else {
        Step::DeployContract { node }
    })
}

/// Longest hard-edge path from each deployable to a root. References sit at
/// -1: they exist before the plan starts.
fn hard_layers(graph: &DependencyGraph) -> BTreeMap<&str, i64> {
    fn visit<'a>(
        graph: &'a DependencyGraph,
        deps: &BTreeMap<&'a str, Vec<&'a str>>,
        node: &'a str,
        memo: &mut BTreeMap<&'a str, i64>,
    ) -> i64 {
        if let Some(&l) = memo.get(node) {
            return l;
        }
        let layer = match graph.kind(node) {
            Some(NodeKind::SmartContractReference) => -1,
            Some(k) if k.is_deployable() => deps
                .get(node)
                .into_iter()
                .flatten()
                .map(|t| visit(graph, deps, t, memo) + 1)
                .max()
                .unwrap_or(0)
                .max(0),
            _ => -1,
        };
        memo.insert(node, layer);
        layer
    }
    let mut deps: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in graph.hard_edges() {
        if graph.vertices.contains_key(&e.target) {
            deps.entry(e.source.as_str())
                .or_default()
                .push(e.target.as_str());
        }
    }
    let mut memo = BTreeMap::new();
    for v in graph.vertices.keys() {
        visit(graph, &deps, v, &mut memo);
    }
    memo
}

fn upgrade_signature(model: &DeploymentModel, proxy: &str) -> String {
    model
        .node(proxy)
        .and_then(|n| n.on_chain())
        .and_then(|p| p.upgrade_function.clone())
        .unwrap_or_else(|| DEFAULT_UPGRADE_SIGNATURE.to_string())
}

/// Post-deploy call that a lazy or proxy edge turns into, if any.
fn wire_for(model: &DeploymentModel, edge: &super::Edge) -> Option<Step> {
    match edge.kind {
        EdgeKind::LazyCC => Some(Step::CallWire {
            node: edge.source.clone(),
            function: edge.function.clone().unwrap_or_default(),
            target: edge.target.clone(),
        }),
        EdgeKind::ProxyImpl => Some(Step::CallWire {
            node: edge.source.clone(),
            function: upgrade_signature(model, &edge.source),
            target: edge.target.clone(),
        }),
        _ => None,
    }
}

pub fn deployment_plan(
    graph: &DependencyGraph,
    model: &DeploymentModel,
) -> Result<DeploymentPlan, PlanError> {
    let cycles = detect_hard_cycles(graph);
    if !cycles.is_empty() {
        return Err(PlanError::HardCycles(cycles));
    }
    let layer_of = hard_layers(graph);
    let mut placed: BTreeMap<i64, Vec<Step>> = BTreeMap::new();
    for node in graph.vertices.keys() {
        if let Some(step) = deploy_step(graph, node) {
            placed
                .entry(layer_of[node.as_str()])
                .or_default()
                .push(step);
        }
    }
    let mut warnings = Vec::new();
    for edge in &graph.edges {
        let after_both = layer_of
            .get(edge.source.as_str())
            .copied()
            .unwrap_or(-1)
            .max(layer_of.get(edge.target.as_str()).copied().unwrap_or(-1))
            + 1;
        let step = match edge.kind {
            EdgeKind::LazyCC | EdgeKind::ProxyImpl => wire_for(model, edge),
            EdgeKind::Facet => Some(Step::DiamondCutAdd {
                diamond: edge.source.clone(),
                facet: edge.target.clone(),
            }),
            EdgeKind::Init => {
                warnings.push(format!(
                    "diamond `{}`: initializer `{}` is recorded but not executed",
                    edge.source, edge.target
                ));
                None
            }
            _ => None,
        };
        if let Some(step) = step {
            placed.entry(after_both).or_default().push(step);
        }
    }
    let off_chain: Vec<Step> = graph
        .vertices
        .iter()
        .filter(|(_, k)| **k == NodeKind::OffChainComponent)
        .map(|(n, _)| Step::ConfigureOffChain { node: n.clone() })
        .collect();
    if !off_chain.is_empty() {
        let last = placed.keys().next_back().copied().unwrap_or(-1);
        placed.insert(last + 1, off_chain);
    }
    let layers = placed
        .into_values()
        .map(|mut l| {
            sort_steps(&mut l);
            l
        })
        .filter(|l| !l.is_empty())
        .collect();
    Ok(DeploymentPlan { layers, warnings })
}

/// `target` plus every node that reaches it over hard edges.
fn hard_reverse_closure(graph: &DependencyGraph, target: &str) -> BTreeSet<String> {
    let mut seen = BTreeSet::from([target.to_string()]);
    let mut stack = vec![target.to_string()];
    while let Some(n) = stack.pop() {
        for e in graph.edges_into(&n).filter(|e| e.kind.is_hard()) {
            if seen.insert(e.source.clone()) {
                stack.push(e.source.clone());
            }
        }
    }
    seen
}

pub fn upgrade_plan(
    graph: &DependencyGraph,
    model: &DeploymentModel,
    target: &str,
) -> Result<UpgradePlan, PlanError> {
    let kind = graph
        .kind(target)
        .ok_or_else(|| PlanError::UnknownTarget(target.to_string()))?;
    if !kind.is_on_chain() {
        return Err(PlanError::OffChainTarget(target.to_string()));
    }
    if !kind.is_deployable() {
        return Err(PlanError::NotDeployable(target.to_string()));
    }
    let cycles = detect_hard_cycles(graph);
    if !cycles.is_empty() {
        return Err(PlanError::HardCycles(cycles));
    }
    let set = hard_reverse_closure(graph, target);
    let layer_of = hard_layers(graph);
    let mut ordered: Vec<&String> = set.iter().collect();
    ordered.sort_by_key(|n| (layer_of[n.as_str()], n.as_str()));
    let redeploy_set: Vec<String> = ordered.into_iter().cloned().collect();
    let redeploy = redeploy_set
        .iter()
        .filter_map(|n| deploy_step(graph, n))
        .collect();

    let touches = |e: &super::Edge| set.contains(&e.source) || set.contains(&e.target);
    let mut wire_calls: Vec<Step> = graph
        .edges
        .iter()
        .filter(|e| touches(e))
        .filter_map(|e| wire_for(model, e))
        .collect();
    sort_steps(&mut wire_calls);

    let mut diamond_cuts: Vec<Step> = graph
        .edges_of_kind(EdgeKind::Facet)
        .filter_map(|e| {
            let (diamond, facet) = (e.source.clone(), e.target.clone());
            if set.contains(&e.source) {
                Some(Step::DiamondCutAdd { diamond, facet })
            } else if set.contains(&e.target) {
                Some(Step::DiamondCutReplace { diamond, facet })
            } else {
                None
            }
        })
        .collect();
    sort_steps(&mut diamond_cuts);

    let off_chain_updates = graph
        .edges_of_kind(EdgeKind::OO)
        .filter(|e| set.contains(&e.target))
        .map(|e| e.source.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(|node| Step::ConfigureOffChain { node })
        .collect();

    Ok(UpgradePlan {
        target: target.to_string(),
        redeploy_set,
        redeploy,
        wire_calls,
        diamond_cuts,
        off_chain_updates,
    })
}

/// Cut removals from every live diamond routing to `target`, then the
/// destroy call. Nodes in `destroyed` no longer count as dependents.
pub fn destroy_plan(
    graph: &DependencyGraph,
    model: &DeploymentModel,
    target: &str,
    destroyed: &BTreeSet<String>,
) -> Result<Vec<Step>, PlanError> {
    let node = model
        .node(target)
        .ok_or_else(|| PlanError::UnknownTarget(target.to_string()))?;
    let props = node
        .on_chain()
        .ok_or_else(|| PlanError::NotDeployable(target.to_string()))?;
    let function = props
        .destroy_function
        .clone()
        .ok_or_else(|| PlanError::MissingDestroyFunction(target.to_string()))?;
    let refund_address = props
        .refund_address
        .ok_or_else(|| PlanError::MissingRefundAddress(target.to_string()))?;
    let dependents: Vec<String> = graph
        .edges_into(target)
        .filter(|e| e.kind.is_hard() && !destroyed.contains(&e.source))
        .map(|e| e.source.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if !dependents.is_empty() {
        return Err(PlanError::LiveDependents {
            target: target.to_string(),
            dependents,
        });
    }
    let mut steps: Vec<Step> = graph
        .edges_into(target)
        .filter(|e| e.kind == EdgeKind::Facet && !destroyed.contains(&e.source))
        .map(|e| Step::DiamondCutRemove {
            diamond: e.source.clone(),
            facet: target.to_string(),
        })
        .collect();
    sort_steps(&mut steps);
    steps.push(Step::Destroy {
        node: target.to_string(),
        function,
        refund_address,
    });
    Ok(steps)
}
