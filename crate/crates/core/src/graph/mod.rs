// SPDX-License-Identifier: Apache-2.0

//! Typed dependency graph over model nodes and the plans derived from it.
//!
//! Edges point from the dependent node to its dependency. Hard edges are the
//! ones resolved at deployment time (bytecode linking or constructor
//! arguments); they must form a DAG and they force redeployment on upgrade.

mod plan;

use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::tarjan_scc;
use petgraph::graphmap::DiGraphMap;
use serde::Serialize;

use crate::model::{DeploymentModel, NodeKind, Relation};

pub use plan::{
    deploy_step, deployment_plan, destroy_plan, upgrade_plan, DeploymentPlan, PlanError, Step,
    UpgradePlan,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum EdgeKind {
    /// Library linked into another library.
    LL,
    /// Library linked into a contract.
    LC,
    /// Contract address passed to a constructor.
    CC,
    /// Contract address set through a setter after both are deployed.
    LazyCC,
    /// Off-chain component configured with an on-chain address.
    OO,
    Facet,
    Cut,
    Init,
    ProxyImpl,
}

impl EdgeKind {
    pub fn is_hard(self) -> bool {
        matches!(
            self,
            EdgeKind::LL | EdgeKind::LC | EdgeKind::CC | EdgeKind::Cut | EdgeKind::ProxyImpl
        )
    }

    /// Edge kind for a requirement, or `None` for relations that only set the
    /// execution context (network, wallet, hosting, credentials).
    pub fn for_relation(source: NodeKind, relation: Relation) -> Option<Self> {
        Some(match relation {
            Relation::UseLibrary if source == NodeKind::Library => EdgeKind::LL,
            Relation::UseLibrary => EdgeKind::LC,
            Relation::UseContractInConstructor | Relation::UseReferenceInConstructor => {
                EdgeKind::CC
            }
            Relation::UseContract | Relation::UseReference => {
                if source.is_on_chain() {
                    EdgeKind::LazyCC
                } else {
                    EdgeKind::OO
                }
            }
            Relation::UseFacet => EdgeKind::Facet,
            Relation::UseCut => EdgeKind::Cut,
            Relation::UseInit => EdgeKind::Init,
            Relation::Implementation => EdgeKind::ProxyImpl,
            Relation::UseNetwork
            | Relation::UseWallet
            | Relation::HostedOn
            | Relation::UseCredentials => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Edge {
    pub source: String,
    pub target: String,
    pub kind: EdgeKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub exclude: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DependencyGraph {
    pub vertices: BTreeMap<String, NodeKind>,
    pub edges: BTreeSet<Edge>,
}

impl DependencyGraph {
    pub fn kind(&self, node: &str) -> Option<NodeKind> {
        self.vertices.get(node).copied()
    }

    pub fn edges_from<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| e.source == node)
    }

    pub fn edges_into<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| e.target == node)
    }

    pub fn hard_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.kind.is_hard())
    }

    pub fn edges_of_kind(&self, kind: EdgeKind) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.kind == kind)
    }
}

/// One edge per dependency-bearing requirement of every node.
pub fn build_dependency_graph(model: &DeploymentModel) -> DependencyGraph {
    let mut graph = DependencyGraph::default();
    for node in model.nodes.values() {
        graph.vertices.insert(node.name.clone(), node.kind);
        for req in &node.requirements {
            if let Some(kind) = EdgeKind::for_relation(node.kind, req.relation) {
                graph.edges.insert(Edge {
                    source: node.name.clone(),
                    target: req.target.clone(),
                    kind,
                    function: req.function_name.clone(),
                    exclude: req.exclude.clone(),
                });
            }
        }
    }
    graph
}

/// Cycles over hard edges only, one per strongly connected component, each
/// starting at its lexicographically smallest node. Lazy mutual references
/// are not cycles.
pub fn detect_hard_cycles(graph: &DependencyGraph) -> Vec<Vec<String>> {
    let mut g: DiGraphMap<&str, ()> = DiGraphMap::new();
    for v in graph.vertices.keys() {
        g.add_node(v.as_str());
    }
    for e in graph.hard_edges() {
        g.add_edge(e.source.as_str(), e.target.as_str(), ());
    }
    let mut cycles: Vec<Vec<String>> = tarjan_scc(&g)
        .into_iter()
        .filter(|scc| scc.len() > 1 || g.contains_edge(scc[0], scc[0]))
        .map(|scc| {
            let members: BTreeSet<&str> = scc.into_iter().collect();
            cycle_within(&g, &members)
        })
        .collect();
    cycles.sort();
    cycles
}

/// A simple cycle through the smallest member of a strongly connected set,
/// following successors in name order.
fn cycle_within(g: &DiGraphMap<&str, ()>, members: &BTreeSet<&str>) -> Vec<String> {
    let start = *members.iter().next().expect("non-empty component");
    let mut path = vec![start];
    let mut visited: BTreeSet<&str> = BTreeSet::from([start]);
    fn dfs<'a>(
        g: &DiGraphMap<&'a str, ()>,
        members: &BTreeSet<&'a str>,
        start: &'a str,
        path: &mut Vec<&'a str>,
        visited: &mut BTreeSet<&'a str>,
    ) -> bool {
        let current = *path.last().expect("path starts non-empty");
        let mut next: Vec<&str> = g
            .neighbors(current)
            .filter(|n| members.contains(n))
            .collect();
        next.sort();
        for n in next {
            if n == start {
                return true;
            }
            if visited.insert(n) {
                path.push(n);
                if dfs(g, members, start, path, visited) {
                    return true;
                }
                path.pop();
            }
        }
        false
    }
    dfs(g, members, start, &mut path, &mut visited);
    path.into_iter().map(str::to_string).collect()
}
