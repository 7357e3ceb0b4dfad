// SPDX-License-Identifier: Apache-2.0

//! Fixtures and independent oracles shared by the integration tests.
//!
//! The oracles here deliberately avoid the library's own helpers: keccak
//! comes from tiny-keccak, reverse closures from a plain DFS over the
//! requirement lists, ABI words from hand-written padding.

#![allow(dead_code)]

pub mod linking;
pub mod models;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use katena_core::chain::{LogEntry, LogKind, MockChain};
use katena_core::graph::{build_dependency_graph, deployment_plan, DeploymentPlan};
use katena_core::model::secrets::Secrets;
use katena_core::model::{parse_model, ArtifactStore, DeploymentModel, Relation};
use katena_core::orchestrator::{DeploymentRecord, ExecutionReport, Executor};
use katena_core::primitives::Address;
use tiny_keccak::{Hasher, Keccak};

pub const USER_KEY: &str = "0x4646464646464646464646464646464646464646464646464646464646464646";
pub const DEPLOYER_KEY: &str = "0x4c0883a69102937d6231471b5dbb6204fe5129617082792ae468d01a3f362318";

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

pub fn load_model(name: &str) -> DeploymentModel {
    parse_model(&read_fixture(name), &BTreeMap::new())
        .unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

pub fn artifacts() -> ArtifactStore {
    let mut store = ArtifactStore::from_dir(fixture("artifacts"));
    store.preload().expect("fixture artifacts load");
    store
}

pub fn secrets() -> Secrets {
    Secrets::new(BTreeMap::from([
        ("UserKeyEthereum".to_string(), USER_KEY.to_string()),
        ("DeployerKey".to_string(), DEPLOYER_KEY.to_string()),
    ]))
}

pub fn plan_for(model: &DeploymentModel) -> DeploymentPlan {
    deployment_plan(&build_dependency_graph(model), model).expect("fixture plans")
}

/// Deploys a fixture on a fresh mock chain.
pub fn cold_deploy(name: &str) -> (MockChain, ExecutionReport) {
    let model = load_model(name);
    let store = artifacts();
    let secrets = secrets();
    let chain = MockChain::new();
    let report = Executor::new(&model, &store, &chain, &secrets)
        .execute_deploy(&plan_for(&model), None)
        .expect("deploy runs");
    (chain, report)
}

pub fn keccak(data: &[u8]) -> [u8; 32] {
    let mut k = Keccak::v256();
    let mut out = [0u8; 32];
    k.update(data);
    k.finalize(&mut out);
    out
}

pub fn selector_oracle(signature: &str) -> [u8; 4] {
    let h = keccak(signature.as_bytes());
    [h[0], h[1], h[2], h[3]]
}

/// Left-padded 32-byte word for an unsigned integer.
pub fn word_u128(v: u128) -> [u8; 32] {
    let mut w = [0u8; 32];
    w[16..].copy_from_slice(&v.to_be_bytes());
    w
}

pub fn word_address(a: &Address) -> [u8; 32] {
    let mut w = [0u8; 32];
    w[12..].copy_from_slice(&a.0);
    w
}

/// Nodes that must be redeployed when `target` changes, found by walking
/// requirement lists backwards. Hard requirements are library use,
/// constructor references, diamond cut facets and proxy implementations.
pub fn reverse_closure_oracle(model: &DeploymentModel, target: &str) -> BTreeSet<String> {
    let hard = |r: Relation| {
        matches!(
            r,
            Relation::UseLibrary
                | Relation::UseContractInConstructor
                | Relation::UseReferenceInConstructor
                | Relation::UseCut
                | Relation::Implementation
        )
    };
    let mut seen = BTreeSet::from([target.to_string()]);
    let mut stack = vec![target.to_string()];
    while let Some(current) = stack.pop() {
        for node in model.nodes.values() {
            if !node.kind.is_deployable() {
                continue;
            }
            let depends = node
                .requirements
                .iter()
                .any(|r| hard(r.relation) && r.target == current);
            if depends && seen.insert(node.name.clone()) {
                stack.push(node.name.clone());
            }
        }
    }
    seen
}

/// Node names in the order the mock saw their deploys, resolved through
/// the record's addresses.
pub fn deploy_order(log: &[LogEntry], record: &DeploymentRecord) -> Vec<String> {
    let by_address: BTreeMap<Address, &str> = record
        .entries
        .iter()
        .map(|(name, e)| (e.address, name.as_str()))
        .collect();
    log.iter()
        .filter(|e| e.kind == LogKind::Deploy)
        .map(|e| {
            by_address
                .get(&e.target)
                .map_or_else(|| e.target.to_string(), |n| n.to_string())
        })
        .collect()
}

/// Position in the mock log of the deploy that created `address`.
pub fn deploy_index(log: &[LogEntry], address: Address) -> Option<usize> {
    log.iter()
        .position(|e| e.kind == LogKind::Deploy && e.target == address)
}
