// SPDX-License-Identifier: Apache-2.0

//! Random acyclic application models and the order checks applied to their
//! plans.

use std::collections::{BTreeMap, BTreeSet};

use katena_core::graph::{DeploymentPlan, Step};
use katena_core::linker::abi::AbiType;
use katena_core::linker::placeholder::PlaceholderId;
use katena_core::model::artifact::{AbiFunction, AbiParam, ContractAbi};
use katena_core::model::{
    ArtifactStore, ContractArtifact, DeploymentModel, NodeInstance, NodeKind, NodeProps,
    OnChainProps, Relation, Requirement, SecretRef, WalletProps,
};
use proptest::prelude::*;
use proptest::sample::Index;

#[derive(Debug, Clone)]
pub struct NodeSpec {
    /// 0 library, 1 or 2 contract, 3 off-chain.
    pub kind: u8,
    pub links: Vec<(u8, Index)>,
}

fn node_spec() -> impl Strategy<Value = NodeSpec> {
    (
        0u8..4,
        prop::collection::vec((0u8..3, any::<Index>()), 0..4),
    )
        .prop_map(|(kind, links)| NodeSpec { kind, links })
}

/// Node specs plus a name permutation, so that name order and creation
/// order disagree.
pub fn arb_specs(max_nodes: usize) -> impl Strategy<Value = (Vec<NodeSpec>, Vec<usize>)> {
    prop::collection::vec(node_spec(), 1..=max_nodes).prop_flat_map(|specs| {
        let n = specs.len();
        (Just(specs), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
    })
}

pub fn arb_model(max_nodes: usize) -> impl Strategy<Value = DeploymentModel> {
    arb_specs(max_nodes).prop_map(|(specs, perm)| build_model(&specs, &perm, false))
}

/// Hard requirements only point at nodes created earlier, which keeps the
/// hard subgraph acyclic. Setter references may point anywhere.
pub fn build_model(
    specs: &[NodeSpec],
    perm: &[usize],
    with_infrastructure: bool,
) -> DeploymentModel {
    let name = |i: usize| format!("n{:02}", perm[i]);
    let kind_of = |s: &NodeSpec| match s.kind {
        0 => NodeKind::Library,
        3 => NodeKind::OffChainComponent,
        _ => NodeKind::SmartContract,
    };
    let kinds: Vec<NodeKind> = specs.iter().map(kind_of).collect();
    let pick = |idx: &Index, pool: &[usize]| -> Option<usize> {
        (!pool.is_empty()).then(|| pool[idx.index(pool.len())])
    };
    let mut model = DeploymentModel::default();
    for (i, spec) in specs.iter().enumerate() {
        let earlier_libs: Vec<usize> = (0..i).filter(|&j| kinds[j] == NodeKind::Library).collect();
        let earlier_contracts: Vec<usize> = (0..i)
            .filter(|&j| kinds[j] == NodeKind::SmartContract)
            .collect();
        let other_contracts: Vec<usize> = (0..specs.len())
            .filter(|&j| j != i && kinds[j] == NodeKind::SmartContract)
            .collect();
        let mut requirements: Vec<Requirement> = Vec::new();
        for (rel, idx) in &spec.links {
            let req = match (kinds[i], rel) {
                (NodeKind::Library, _) => pick(idx, &earlier_libs)
                    .map(|j| Requirement::new(Relation::UseLibrary, name(j))),
                (NodeKind::SmartContract, 0) => pick(idx, &earlier_libs)
                    .map(|j| Requirement::new(Relation::UseLibrary, name(j))),
                (NodeKind::SmartContract, 1) => pick(idx, &earlier_contracts)
                    .map(|j| Requirement::new(Relation::UseContractInConstructor, name(j))),
                (NodeKind::SmartContract, _) => pick(idx, &other_contracts).map(|j| Requirement {
                    function_name: Some("setPeer".into()),
                    ..Requirement::new(Relation::UseContract, name(j))
                }),
                _ => pick(idx, &other_contracts)
                    .map(|j| Requirement::new(Relation::UseContract, name(j))),
            };
            if let Some(req) = req {
                if !requirements
                    .iter()
                    .any(|r| r.relation == req.relation && r.target == req.target)
                {
                    requirements.push(req);
                }
            }
        }
        let props = match kinds[i] {
            NodeKind::OffChainComponent => NodeProps::OffChain(BTreeMap::new()),
            _ => NodeProps::OnChain(OnChainProps::new(name(i))),
        };
        model.nodes.insert(
            name(i),
            NodeInstance {
                name: name(i),
                kind: kinds[i],
                props,
                requirements,
            },
        );
    }
    if with_infrastructure {
        model.nodes.insert(
            "chain".into(),
            NodeInstance {
                name: "chain".into(),
                kind: NodeKind::SelfHostedNode,
                props: NodeProps::Network(Default::default()),
                requirements: Vec::new(),
            },
        );
        model.nodes.insert(
            "deployer".into(),
            NodeInstance {
                name: "deployer".into(),
                kind: NodeKind::Wallet,
                props: NodeProps::Wallet(WalletProps {
                    public_key: None,
                    private_key: Some(SecretRef::Input("DeployerKey".into())),
                }),
                requirements: Vec::new(),
            },
        );
    }
    model
}

/// One artifact per on-chain node, named after it: an address constructor
/// slot per constructor reference, a placeholder per linked library and a
/// `setPeer(address)` setter.
pub fn artifacts_for(model: &DeploymentModel) -> ArtifactStore {
    let fqn = |name: &str| format!("gen/{name}.sol:{name}");
    let mut store = ArtifactStore::in_memory();
    for node in model.nodes.values().filter(|n| n.kind.is_deployable()) {
        let address = || AbiParam {
            name: String::new(),
            ty: AbiType::Address,
        };
        let mut bytecode = format!("6001600c60003960016000f300fe{}", hex::encode(&node.name));
        for lib in node.requirements_of(Relation::UseLibrary) {
            bytecode.push_str("73");
            bytecode.push_str(&PlaceholderId::for_library(&fqn(&lib.target)).marker());
        }
        let artifact = ContractArtifact {
            contract_name: node.name.clone(),
            source_name: format!("gen/{}.sol", node.name),
            abi: ContractAbi {
                constructor: node.constructor_refs().map(|_| address()).collect(),
                functions: vec![AbiFunction {
                    name: "setPeer".into(),
                    inputs: vec![address()],
                }],
            },
            bytecode,
        };
        store.insert(node.name.clone(), artifact);
    }
    store
}

fn is_hard(r: Relation) -> bool {
    matches!(
        r,
        Relation::UseLibrary
            | Relation::UseContractInConstructor
            | Relation::UseReferenceInConstructor
            | Relation::UseCut
            | Relation::Implementation
    )
}

/// Every way `plan` fails to be a linear extension of the model's hard
/// order, plus misplaced setter calls and configuration steps.
pub fn order_violations(model: &DeploymentModel, plan: &DeploymentPlan) -> Vec<String> {
    let mut out = Vec::new();
    let steps: Vec<&Step> = plan.steps().collect();
    let mut deployed_at: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, s) in steps.iter().enumerate() {
        if s.is_deploy() && deployed_at.insert(s.node(), i).is_some() {
            out.push(format!("`{}` deployed twice", s.node()));
        }
    }
    let deployables: BTreeSet<&str> = model
        .nodes
        .values()
        .filter(|n| n.kind.is_deployable())
        .map(|n| n.name.as_str())
        .collect();
    let planned: BTreeSet<&str> = deployed_at.keys().copied().collect();
    if planned != deployables {
        out.push(format!("deployed {planned:?}, expected {deployables:?}"));
    }
    let layer_of = |i: usize| {
        let mut seen = 0;
        plan.layers
            .iter()
            .position(|l| {
                seen += l.len();
                i < seen
            })
            .expect("index within plan")
    };
    for node in model.nodes.values() {
        for r in node.requirements.iter().filter(|r| is_hard(r.relation)) {
            match (
                deployed_at.get(node.name.as_str()),
                deployed_at.get(r.target.as_str()),
            ) {
                (Some(&s), Some(&t)) if layer_of(t) < layer_of(s) => {}
                (s, t) => out.push(format!(
                    "`{}` at {s:?} needs `{}` at {t:?} in an earlier layer",
                    node.name, r.target
                )),
            }
        }
    }
    for (i, s) in steps.iter().enumerate() {
        let needs: Vec<&str> = match s {
            Step::CallWire { node, target, .. } => vec![node, target],
            Step::ConfigureOffChain { node } => model.nodes[node.as_str()]
                .requirements
                .iter()
                .filter(|r| deployables.contains(r.target.as_str()))
                .map(|r| r.target.as_str())
                .collect(),
            _ => continue,
        };
        for n in needs {
            if !deployed_at
                .get(n)
                .is_some_and(|&d| layer_of(d) < layer_of(i))
            {
                out.push(format!(
                    "step {i} ({}) runs before `{n}` is deployed",
                    s.node()
                ));
            }
        }
    }
    out
}
