// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite. Runs every criterion at its stated tolerance, prints
//! one PASS/FAIL/SKIP line each and exits non-zero if any criterion fails.
//!
//! The live-chain criterion runs only when `KATENA_DEVCHAIN_URL` points at a
//! development node; `KATENA_DEVCHAIN_KEY` overrides the funded key.

mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use katena_core::chain::{ChainBackend, LogKind, RpcBackend, RpcConfig};
use katena_core::graph::{build_dependency_graph, deployment_plan, upgrade_plan, Step};
use katena_core::linker::abi::{decode, encode};
use katena_core::linker::placeholder::{extract_placeholders, PlaceholderId};
use katena_core::linker::{link_all, LinkTarget};
use katena_core::model::secrets::Secrets;
use katena_core::model::{
    parse_model, serialize_model, validate_model, DeploymentModel, ViolationCode,
};
use katena_core::orchestrator::{Clock, DeploymentRecord, Event, ExecOptions, Executor};
use katena_core::patterns::{decode_diamond_cut, DiamondState, FacetCutAction};
use katena_core::primitives::{Address, Selector};
use katena_core::toolkit::{count_tokens, Language};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use support::linking::{arb_bytecode, arb_values, LIBRARIES};
use support::models::{arb_model, order_violations};
use support::*;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn seeded_runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config::with_cases(cases),
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn deployment_order(plan: &katena_core::graph::DeploymentPlan) -> Vec<String> {
    plan.steps()
        .filter(|s| s.is_deploy())
        .map(|s| s.node().to_string())
        .collect()
}

fn voting_order() -> Outcome {
    let start = Instant::now();
    let model = load_model("voting.yaml");
    let plan = plan_for(&model);
    let layers = plan.layer_nodes();
    let expected = [
        ["mathLib"],
        ["randomGeneratorContract"],
        ["votingContract"],
        ["backend"],
    ];
    ensure!(layers == expected, "layers {layers:?}");
    ensure!(
        matches!(&plan.layers[3][0], Step::ConfigureOffChain { node } if node == "backend"),
        "last layer is {:?}",
        plan.layers[3]
    );
    let (chain, report) = cold_deploy("voting.yaml");
    ensure!(report.is_success(), "deploy failed: {:?}", report.failed);
    let replayed = deploy_order(&chain.call_log(), &report.record);
    ensure!(
        replayed == deployment_order(&plan),
        "mock order {replayed:?}"
    );
    let events: Vec<String> = report
        .record
        .history
        .iter()
        .map(|h| match &h.event {
            Event::Deployed { node, .. } | Event::Configured { node, .. } => node.clone(),
            other => format!("{other:?}"),
        })
        .collect();
    ensure!(
        events
            == [
                "mathLib",
                "randomGeneratorContract",
                "votingContract",
                "backend"
            ],
        "history {events:?}"
    );
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!(
        "4 layers, mock order {replayed:?} then backend config, {elapsed:?}"
    ))
}

fn ticketing_wire_and_upgrade() -> Outcome {
    let model = load_model("ticketing.yaml");
    let (chain, report) = cold_deploy("ticketing.yaml");
    ensure!(report.is_success(), "deploy failed: {:?}", report.failed);
    let log = chain.call_log();
    let tickets = report.record.entries["tickets"].address;
    let admin = report.record.entries["admin"].address;
    let set_admin = Selector(selector_oracle("setAdmin(address)"));
    let wire = log
        .iter()
        .position(|e| {
            e.kind == LogKind::Call && e.target == tickets && e.selector == Some(set_admin)
        })
        .ok_or("no setAdmin call on tickets")?;
    let (t, a) = (
        deploy_index(&log, tickets).unwrap(),
        deploy_index(&log, admin).unwrap(),
    );
    ensure!(
        t < wire && a < wire,
        "wire at {wire}, deploys at {t} and {a}"
    );

    let upgrade =
        upgrade_plan(&build_dependency_graph(&model), &model, "math").map_err(|e| e.to_string())?;
    let closure: BTreeSet<String> = upgrade.redeploy_set.iter().cloned().collect();
    let oracle = reverse_closure_oracle(&model, "math");
    ensure!(
        closure == oracle,
        "redeploy set {closure:?}, oracle {oracle:?}"
    );
    let before = chain.call_log().len();
    let store = artifacts();
    let secrets = secrets();
    let after = Executor::new(&model, &store, &chain, &secrets)
        .execute_upgrade(&upgrade, report.record.clone())
        .map_err(|e| e.to_string())?;
    ensure!(after.is_success(), "upgrade failed: {:?}", after.failed);
    let log = &chain.call_log()[before..];
    let redeployed: BTreeSet<String> = deploy_order(log, &after.record).into_iter().collect();
    ensure!(redeployed == oracle, "redeployed {redeployed:?}");
    let calls: Vec<_> = log.iter().filter(|e| e.kind == LogKind::Call).collect();
    ensure!(
        calls.len() == 1 && calls[0].target == tickets && calls[0].selector == Some(set_admin),
        "upgrade calls {calls:?}"
    );
    ensure!(
        after.record.entries["tickets"].address == tickets,
        "tickets moved"
    );
    Ok(format!(
        "wire at log {wire} after deploys {t},{a}; upgrade redeployed {redeployed:?}, 1 call on tickets"
    ))
}

fn cycles() -> Outcome {
    let report = validate_model(&load_model("cycle.yaml"), &artifacts());
    let cycle = report
        .violations
        .iter()
        .find(|v| v.code == ViolationCode::ConstructorCycle)
        .ok_or("constructor cycle not reported")?;
    ensure!(
        cycle.nodes == ["peerA", "peerB"],
        "cycle names {:?}",
        cycle.nodes
    );
    let lazy = load_model("lazy_cycle.yaml");
    let lazy_report = validate_model(&lazy, &artifacts());
    ensure!(
        lazy_report.is_ok(),
        "lazy variant rejected: {:?}",
        lazy_report.violations
    );
    deployment_plan(&build_dependency_graph(&lazy), &lazy).map_err(|e| e.to_string())?;
    Ok(format!(
        "rejected with \"{}\"; setter variant accepted",
        cycle.message
    ))
}

fn plan_properties() -> Outcome {
    let start = Instant::now();
    let mut runner = seeded_runner(1000);
    let strategy = arb_model(14);
    let (mut models, mut targets, mut hard_edges) = (0usize, 0usize, 0usize);
    let mut violations: Vec<String> = Vec::new();
    for _ in 0..1000 {
        let model: DeploymentModel = strategy
            .new_tree(&mut runner)
            .map_err(|e| e.to_string())?
            .current();
        models += 1;
        let graph = build_dependency_graph(&model);
        hard_edges += graph.hard_edges().count();
        let plan = deployment_plan(&graph, &model).map_err(|e| e.to_string())?;
        violations.extend(order_violations(&model, &plan));
        for node in model.nodes.values().filter(|n| n.kind.is_deployable()) {
            targets += 1;
            let upgrade = upgrade_plan(&graph, &model, &node.name).map_err(|e| e.to_string())?;
            let got: BTreeSet<String> = upgrade.redeploy_set.iter().cloned().collect();
            let want = reverse_closure_oracle(&model, &node.name);
            if got != want || got.len() != upgrade.redeploy_set.len() {
                violations.push(format!("upgrade {}: {got:?} vs {want:?}", node.name));
            }
        }
        let first = plan.to_canonical_json();
        let again =
            deployment_plan(&build_dependency_graph(&model), &model).map_err(|e| e.to_string())?;
        let reparsed =
            parse_model(&serialize_model(&model), &BTreeMap::new()).map_err(|e| e.to_string())?;
        let from_text = deployment_plan(&build_dependency_graph(&reparsed), &reparsed)
            .map_err(|e| e.to_string())?;
        if first != again.to_canonical_json() || first != from_text.to_canonical_json() {
            violations.push("plan bytes differ between runs".into());
        }
    }
    let elapsed = start.elapsed();
    ensure!(
        violations.is_empty(),
        "{} violations, first: {}",
        violations.len(),
        violations[0]
    );
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "{models} models, {hard_edges} hard edges, {targets} upgrade targets, 0 violations, {elapsed:?}"
    ))
}

fn linker() -> Outcome {
    let mut runner = seeded_runner(100);
    let bytecodes = arb_bytecode();
    let mut markers = 0;
    for i in 0..100u8 {
        let (code, used) = bytecodes
            .new_tree(&mut runner)
            .map_err(|e| e.to_string())?
            .current();
        let found = extract_placeholders(&code).map_err(|e| e.to_string())?;
        ensure!(
            found.len() == used.len(),
            "bytecode {i}: found {} markers",
            found.len()
        );
        markers += found.len();
        let targets: Vec<LinkTarget> = LIBRARIES
            .iter()
            .enumerate()
            .map(|(k, fqn)| LinkTarget {
                fully_qualified_name: fqn.to_string(),
                contract_name: fqn.rsplit(':').next().unwrap().to_string(),
                address: Address([i.wrapping_add(k as u8); 20]),
            })
            .collect();
        let linked = link_all(&code, &targets).map_err(|e| e.to_string())?;
        let left = extract_placeholders(&linked)
            .map_err(|e| e.to_string())?
            .len();
        ensure!(
            left == 0 && linked.len() == code.len(),
            "bytecode {i}: {left} left, length {}",
            linked.len()
        );
        for (p, &lib) in found.iter().zip(&used) {
            ensure!(
                p.id == PlaceholderId::for_library(LIBRARIES[lib]),
                "bytecode {i}: marker id"
            );
        }
    }
    let oracle = selector_oracle("transfer(address,uint256)");
    ensure!(
        oracle == [0xa9, 0x05, 0x9c, 0xbb],
        "oracle gave {}",
        hex::encode(oracle)
    );
    let ours = Selector::of_signature("transfer(address,uint256)");
    ensure!(ours.0 == oracle, "selector {ours}");
    let values = arb_values();
    let mut runner = seeded_runner(500);
    for i in 0..500 {
        let (types, vals) = values
            .new_tree(&mut runner)
            .map_err(|e| e.to_string())?
            .current();
        let bytes = encode(&vals).map_err(|e| format!("case {i}: {e}"))?;
        let back = decode(&types, &bytes).map_err(|e| format!("case {i}: {e}"))?;
        ensure!(back == vals, "case {i}: round trip changed {types:?}");
    }
    Ok(format!("100 bytecodes ({markers} markers) linked clean, transfer = 0xa9059cbb, 500 ABI round trips"))
}

fn diamond() -> Outcome {
    let (chain, report) = cold_deploy("diamond.yaml");
    ensure!(report.is_success(), "deploy failed: {:?}", report.failed);
    let diamond = report.record.entries["diamond"].address;
    let facet = report.record.entries["facetA"].address;
    let cuts: Vec<_> = chain
        .call_log()
        .into_iter()
        .filter(|e| e.kind == LogKind::Call && e.target == diamond)
        .collect();
    ensure!(cuts.len() == 1, "{} cut calls", cuts.len());
    let mut calldata = cuts[0].selector.map(|s| s.0.to_vec()).unwrap_or_default();
    calldata.extend(&cuts[0].args);
    let decoded = decode_diamond_cut(&calldata).ok_or("cut call does not decode")?;
    let mut wanted: Vec<Selector> = ["setB(uint256)", "destroy(address)"]
        .iter()
        .map(|s| Selector(selector_oracle(s)))
        .collect();
    wanted.sort();
    ensure!(
        decoded.len() == 1
            && decoded[0].action == FacetCutAction::Add
            && decoded[0].facet_address == facet
            && decoded[0].selectors == wanted,
        "cut {decoded:?}"
    );

    let model = load_model("diamond.yaml");
    let store = artifacts();
    let secrets = secrets();
    let remove = [Step::DiamondCutRemove {
        diamond: "diamond".into(),
        facet: "facetA".into(),
    }];
    let removed = Executor::new(&model, &store, &chain, &secrets)
        .execute_destroy(&remove, report.record.clone())
        .map_err(|e| e.to_string())?;
    ensure!(removed.is_success(), "remove failed: {:?}", removed.failed);
    ensure!(
        chain.diamond_state(diamond) == DiamondState::default(),
        "routes left after remove"
    );

    let collision = validate_model(&load_model("collision.yaml"), &artifacts());
    let v = collision
        .violations
        .iter()
        .find(|v| v.code == ViolationCode::SelectorCollision)
        .ok_or("collision not reported")?;
    Ok(format!(
        "one Add cut of {} selectors, remove restores empty routing; {}",
        wanted.len(),
        v.message
    ))
}

const FIXTURES: &[&str] = &[
    "voting.yaml",
    "ticketing.yaml",
    "diamond.yaml",
    "lazy_cycle.yaml",
    "proxy.yaml",
    "store_client.yaml",
];

fn determinism() -> Outcome {
    for name in FIXTURES {
        let (_, a) = cold_deploy(name);
        let (_, b) = cold_deploy(name);
        ensure!(a.is_success(), "{name}: {:?}", a.failed);
        ensure!(
            a.record.to_json() == b.record.to_json(),
            "{name}: records differ"
        );
    }
    Ok(format!(
        "{} fixtures, byte-identical records",
        FIXTURES.len()
    ))
}

fn not_metric() -> Outcome {
    const ENS_HAND_COUNT: usize = 36;
    let dotted = count_tokens("contract.deploy()", Language::Js).tokens;
    ensure!(dotted == 2, "contract.deploy() counted {dotted}");
    let ens = count_tokens(&read_fixture("ens.yaml"), Language::Yaml).tokens;
    ensure!(
        ens == ENS_HAND_COUNT,
        "ENS model counted {ens}, hand count {ENS_HAND_COUNT}"
    );
    let script = count_tokens(&read_fixture("ens_hardhat.js"), Language::Js).tokens;
    Ok(format!(
        "contract.deploy() = 2, ENS model = {ens} (hand count {ENS_HAND_COUNT}); script = {script}; whole-application totals not reproducible"
    ))
}

/// (node, selector) for every transaction in record order. Deploys carry no
/// selector.
fn role_sequence(
    record: &DeploymentRecord,
    model: &DeploymentModel,
) -> Vec<(String, Option<Selector>)> {
    let store = artifacts();
    record
        .history
        .iter()
        .filter_map(|h| match &h.event {
            Event::Deployed { node, .. } => Some((node.clone(), None)),
            Event::Wired { node, function, .. } => {
                let abi = &model.nodes[node].on_chain()?.abi;
                let f = store
                    .get(abi)
                    .ok()?
                    .abi
                    .functions_named(function)
                    .next()?
                    .selector();
                Some((node.clone(), Some(f)))
            }
            _ => None,
        })
        .collect()
}

fn live_chain() -> Option<Outcome> {
    let url = std::env::var("KATENA_DEVCHAIN_URL").ok()?;
    let key = std::env::var("KATENA_DEVCHAIN_KEY").unwrap_or_else(|_| {
        "0xac0974bec39a17e36ba4a6b4d238ff944bacb478cbed5efcae784d7bf4f2ff80".into()
    });
    Some((|| {
        let model = load_model("store_client.yaml");
        let store = artifacts();
        let secrets = Secrets::new(BTreeMap::from([("DeployerKey".to_string(), key)]));
        let plan = plan_for(&model);
        let backend = RpcBackend::new(RpcConfig::new(url.clone())).map_err(|e| e.to_string())?;
        let live = Executor::new(&model, &store, &backend, &secrets)
            .with_options(ExecOptions {
                clock: Clock::System,
                ..Default::default()
            })
            .execute_deploy(&plan, None)
            .map_err(|e| e.to_string())?;
        ensure!(live.is_success(), "live deploy failed: {:?}", live.failed);
        for (node, entry) in &live.record.entries {
            let receipt = backend
                .get_receipt(&entry.tx_ids[0])
                .map_err(|e| e.to_string())?
                .ok_or_else(|| format!("{node}: no receipt"))?;
            ensure!(
                receipt.contract_address == Some(entry.address),
                "{node}: recorded {} but receipt says {:?}",
                entry.address,
                receipt.contract_address
            );
        }
        let (chain, mock) = cold_deploy("store_client.yaml");
        let from_log: Vec<(String, Option<Selector>)> = {
            let names: BTreeMap<Address, &String> = mock
                .record
                .entries
                .iter()
                .map(|(n, e)| (e.address, n))
                .collect();
            chain
                .call_log()
                .iter()
                .map(|e| {
                    (
                        names[&e.target].to_string(),
                        if e.kind == LogKind::Deploy {
                            None
                        } else {
                            e.selector
                        },
                    )
                })
                .collect()
        };
        let live_seq = role_sequence(&live.record, &model);
        ensure!(
            from_log == role_sequence(&mock.record, &model),
            "mock log and mock record disagree"
        );
        ensure!(
            live_seq == from_log,
            "live {live_seq:?} vs mock {from_log:?}"
        );
        Ok(format!(
            "{} transactions on {url} match the mock sequence",
            live_seq.len()
        ))
    })())
}

/// A criterion returns `None` when its prerequisites are absent.
type Criterion = Box<dyn Fn() -> Option<Outcome>>;

fn main() {
    let criteria: Vec<(&str, Criterion)> = vec![
        (
            "voting plan order and mock replay",
            Box::new(|| Some(voting_order())),
        ),
        (
            "ticketing wire order and math upgrade",
            Box::new(|| Some(ticketing_wire_and_upgrade())),
        ),
        (
            "constructor cycle rejected, setter cycle accepted",
            Box::new(|| Some(cycles())),
        ),
        (
            "plan properties over random models",
            Box::new(|| Some(plan_properties())),
        ),
        ("linker and ABI", Box::new(|| Some(linker()))),
        ("diamond cuts", Box::new(|| Some(diamond()))),
        ("mock determinism", Box::new(|| Some(determinism()))),
        ("token metric", Box::new(|| Some(not_metric()))),
        ("live JSON-RPC deploy", Box::new(live_chain)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        match check() {
            Some(Ok(detail)) => println!("PASS criterion {n} ({name}): {detail}"),
            Some(Err(why)) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {why}");
            }
            None => println!(
                "SKIP criterion {n} ({name}): set KATENA_DEVCHAIN_URL to run against a dev chain"
            ),
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
