// SPDX-License-Identifier: Apache-2.0

//! Plan execution against a chain backend.
//!
//! Each step first computes its effect from the record as it stands, then
//! the effect is applied to the record and persisted. A step whose effect is
//! already reflected in the record is skipped, which makes re-running a plan
//! a no-op. The first failing step halts execution; everything before it
//! stays recorded.

mod record;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::chain::{ChainBackend, ChainError, SigningWallet};
use crate::graph::{DeploymentPlan, PlanError, Step, UpgradePlan};
use crate::linker::abi::AbiValue;
use crate::linker::{
    bind_constructor, encode_constructor_call, encode_function_call, link_all, LinkError,
    LinkTarget,
};
use crate::model::secrets::{SecretError, Secrets};
use crate::model::{
    ArtifactError, ArtifactStore, DeploymentModel, NodeInstance, NodeKind, NodeProps, Relation,
};
use crate::patterns::{self, FacetCut, FacetCutAction, PatternError};
use crate::primitives::{keccak256, Address, Selector, H256};

pub use record::{
    record_path_for, Clock, DeploymentRecord, DiamondRecord, EntryStatus, Event, FacetRoute,
    HistoryEvent, OffchainEntry, RecordEntry, RecordStore, WireEntry,
};

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("record {path}: {reason}")]
    Record { path: PathBuf, reason: String },
    #[error("record {0} is locked by another run")]
    Locked(PathBuf),
    #[error(transparent)]
    Backend(#[from] ChainError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Secret(#[from] SecretError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("no wallet for `{0}`")]
    NoWallet(String),
    #[error("wallet `{0}` has no private key")]
    NoKey(String),
    #[error("no network for `{0}`")]
    NoNetwork(String),
    #[error("`{0}` is not deployed")]
    NotDeployed(String),
    #[error("`{0}` was destroyed")]
    Destroyed(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("cannot write config for `{node}`: {reason}")]
    Config { node: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum StepStatus {
    Executed,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StepOutcome {
    pub index: usize,
    pub step: Step,
    pub status: StepStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    pub duration_micros: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FailedStep {
    pub index: usize,
    pub step: Step,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExecutionReport {
    pub operation: String,
    pub attempted: usize,
    pub executed: usize,
    pub skipped: usize,
    pub failed: Option<FailedStep>,
    pub steps: Vec<StepOutcome>,
    pub record: DeploymentRecord,
}

impl ExecutionReport {
    pub fn is_success(&self) -> bool {
        self.failed.is_none()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExecOptions {
    /// Runs the steps of one layer concurrently. Mock addresses then depend
    /// on scheduling.
    pub parallel: bool,
    pub clock: Clock,
}

/// Everything a run needs besides the plan and the record.
pub struct Executor<'a> {
    pub model: &'a DeploymentModel,
    pub artifacts: &'a ArtifactStore,
    pub backend: &'a dyn ChainBackend,
    pub secrets: &'a Secrets,
    /// Persists the record after every step when set.
    pub store: Option<&'a RecordStore>,
    /// Where `<node>.config.json` files go; not written when unset.
    pub config_dir: Option<PathBuf>,
    pub options: ExecOptions,
    wallets: Mutex<BTreeMap<String, SigningWallet>>,
}

/// What a step did, computed before the record is touched.
#[derive(Debug, Clone)]
enum Effect {
    Skipped(String),
    Deployed {
        node: String,
        address: Address,
        bytecode_hash: H256,
        tx_id: H256,
    },
    Wired(WireEntry),
    Cut {
        diamond: String,
        diamond_address: Address,
        facet: String,
        route: Option<FacetRoute>,
        tx_id: H256,
    },
    Configured {
        node: String,
        entry: OffchainEntry,
    },
    Destroyed {
        node: String,
        refund_address: Address,
        tx_id: H256,
    },
}

fn apply(record: &mut DeploymentRecord, clock: Clock, effect: Effect) {
    match effect {
        Effect::Skipped(_) => {}
        Effect::Deployed {
            node,
            address,
            bytecode_hash,
            tx_id,
        } => {
            if let Some(old) = record
                .entries
                .get(&node)
                .filter(|e| e.is_live() && e.address != address)
            {
                let address = old.address;
                record.push(
                    clock,
                    Event::Superseded {
                        node: node.clone(),
                        address,
                    },
                );
            }
            record.entries.insert(
                node.clone(),
                RecordEntry {
                    address,
                    bytecode_hash,
                    tx_ids: vec![tx_id],
                    status: EntryStatus::Deployed,
                },
            );
            record.push(
                clock,
                Event::Deployed {
                    node,
                    address,
                    tx_id,
                },
            );
        }
        Effect::Wired(w) => {
            if let Some(e) = record.entries.get_mut(&w.source) {
                e.tx_ids.push(w.tx_id);
                e.status = EntryStatus::Wired;
            }
            record.push(
                clock,
                Event::Wired {
                    node: w.source.clone(),
                    function: w.function.clone(),
                    target: w.target.clone(),
                    target_address: w.target_address,
                    tx_id: w.tx_id,
                },
            );
            record
                .wiring
                .insert(WireEntry::key(&w.source, &w.function, &w.target), w);
        }
        Effect::Cut {
            diamond,
            diamond_address,
            facet,
            route,
            tx_id,
        } => {
            if let Some(e) = record.entries.get_mut(&diamond) {
                e.tx_ids.push(tx_id);
                e.status = EntryStatus::Wired;
            }
            let d = record.diamonds.entry(diamond.clone()).or_default();
            if d.address != diamond_address {
                d.address = diamond_address;
                d.facets.clear();
            }
            let removed = route.is_none();
            match route {
                Some(r) => d.facets.insert(facet.clone(), r),
                None => d.facets.remove(&facet),
            };
            record.push(
                clock,
                Event::DiamondCut {
                    diamond,
                    facet,
                    removed,
                    tx_id,
                },
            );
        }
        Effect::Configured { node, entry } => {
            let digest = entry.digest;
            record.offchain.insert(node.clone(), entry);
            record.push(clock, Event::Configured { node, digest });
        }
        Effect::Destroyed {
            node,
            refund_address,
            tx_id,
        } => {
            if let Some(e) = record.entries.get_mut(&node) {
                e.tx_ids.push(tx_id);
                e.status = EntryStatus::Destroyed;
            }
            record.wiring.retain(|_, w| w.source != node);
            record.diamonds.remove(&node);
            record.push(
                clock,
                Event::Destroyed {
                    node,
                    refund_address,
                    tx_id,
                },
            );
        }
    }
}

impl<'a> Executor<'a> {
    pub fn new(
        model: &'a DeploymentModel,
        artifacts: &'a ArtifactStore,
        backend: &'a dyn ChainBackend,
        secrets: &'a Secrets,
    ) -> Self {
        Executor {
            model,
            artifacts,
            backend,
            secrets,
            store: None,
            config_dir: None,
            options: ExecOptions::default(),
            wallets: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn with_store(mut self, store: &'a RecordStore) -> Self {
        self.config_dir
            .get_or_insert_with(|| store.dir().to_path_buf());
        self.store = Some(store);
        self
    }

    pub fn with_options(mut self, options: ExecOptions) -> Self {
        self.options = options;
        self
    }

    fn node(&self, name: &str) -> Result<&'a NodeInstance, ExecError> {
        self.model
            .node(name)
            .ok_or_else(|| ExecError::UnknownNode(name.to_string()))
    }

    fn wallet(&self, node: &NodeInstance) -> Result<SigningWallet, ExecError> {
        let wallet_node = self
            .model
            .wallet_for(node)
            .ok_or_else(|| ExecError::NoWallet(node.name.clone()))?;
        let mut cache = self.wallets.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(w) = cache.get(&wallet_node.name) {
            return Ok(w.clone());
        }
        let NodeProps::Wallet(props) = &wallet_node.props else {
            return Err(ExecError::NoWallet(node.name.clone()));
        };
        let key_ref = props
            .private_key
            .as_ref()
            .ok_or_else(|| ExecError::NoKey(wallet_node.name.clone()))?;
        let key = self.secrets.resolve(key_ref, &self.model.inputs)?;
        let wallet = SigningWallet::from_hex(&key)?;
        if let Some(expected) = props.public_key.filter(|a| *a != wallet.address()) {
            log::warn!(
                "wallet `{}`: publicKey {expected} does not match key address {}",
                wallet_node.name,
                wallet.address()
            );
        }
        cache.insert(wallet_node.name.clone(), wallet.clone());
        Ok(wallet)
    }

    /// Address of a live deployed node or of a reference.
    fn address_of(&self, record: &DeploymentRecord, name: &str) -> Result<Address, ExecError> {
        let node = self.node(name)?;
        if let NodeProps::Reference { address } = &node.props {
            return Ok(*address);
        }
        match record.entries.get(name) {
            Some(e) if e.is_live() => Ok(e.address),
            Some(_) => Err(ExecError::Destroyed(name.to_string())),
            None => Err(ExecError::NotDeployed(name.to_string())),
        }
    }

    fn check_endpoints<'s>(&self, nodes: impl Iterator<Item = &'s str>) -> Result<(), ExecError> {
        let mut seen = BTreeSet::new();
        for name in nodes {
            let node = self.node(name)?;
            if !node.kind.is_on_chain() {
                continue;
            }
            let net = self
                .model
                .network_for(node)
                .ok_or_else(|| ExecError::NoNetwork(name.to_string()))?;
            if seen.insert(net.name.clone()) {
                let props = match &net.props {
                    NodeProps::Network(p) => p.clone(),
                    _ => Default::default(),
                };
                let info = self.backend.check_endpoint(&props)?;
                log::info!(
                    "network `{}` reachable, chain id {}",
                    net.name,
                    info.chain_id
                );
            }
        }
        Ok(())
    }

    /// create: resolve and link the artifact, bind constructor arguments.
    fn deploy_payload(&self, record: &DeploymentRecord, step: &Step) -> Result<Vec<u8>, ExecError> {
        let node = self.node(step.node())?;
        let props = node
            .on_chain()
            .ok_or_else(|| ExecError::UnknownNode(node.name.clone()))?;
        let artifact = self.artifacts.get(&props.abi)?;
        let libraries = match step {
            Step::LinkAndDeploy { libraries, .. } => libraries.as_slice(),
            _ => &[],
        };
        let mut targets = Vec::with_capacity(libraries.len());
        for lib in libraries {
            let lib_props = self
                .node(lib)?
                .on_chain()
                .ok_or_else(|| ExecError::UnknownNode(lib.clone()))?;
            let lib_artifact = self.artifacts.get(&lib_props.abi)?;
            targets.push(LinkTarget {
                fully_qualified_name: lib_artifact.fully_qualified_name(),
                contract_name: lib_artifact.contract_name.clone(),
                address: self.address_of(record, lib)?,
            });
        }
        let linked = link_all(&artifact.bytecode, &targets)?;
        let refs = node
            .constructor_refs()
            .map(|r| self.address_of(record, &r.target))
            .collect::<Result<Vec<_>, _>>()?;
        let args = bind_constructor(&artifact, &refs, &props.parameters)?;
        Ok(encode_constructor_call(&linked, &args)?)
    }

    fn run_deploy(
        &self,
        record: &DeploymentRecord,
        step: &Step,
        force: bool,
    ) -> Result<Effect, ExecError> {
        let name = step.node();
        if let Some(e) = record.entries.get(name) {
            if !e.is_live() {
                return Ok(Effect::Skipped("destroyed".into()));
            }
        }
        let payload = self.deploy_payload(record, step)?;
        let bytecode_hash = H256(keccak256(&payload));
        if !force
            && record
                .live(name)
                .is_some_and(|e| e.bytecode_hash == bytecode_hash)
        {
            return Ok(Effect::Skipped("up to date".into()));
        }
        let wallet = self.wallet(self.node(name)?)?;
        let deployed = self.backend.deploy(&wallet, &payload)?;
        Ok(Effect::Deployed {
            node: name.to_string(),
            address: deployed.address,
            bytecode_hash,
            tx_id: deployed.tx_id,
        })
    }

    fn run_wire(
        &self,
        record: &DeploymentRecord,
        node: &str,
        function: &str,
        target: &str,
    ) -> Result<Effect, ExecError> {
        let source = self.node(node)?;
        if record.entries.get(target).is_some_and(|e| !e.is_live()) {
            return Ok(Effect::Skipped(format!("`{target}` destroyed")));
        }
        let source_address = self.address_of(record, node)?;
        let target_address = self.address_of(record, target)?;
        let key = WireEntry::key(node, function, target);
        if record.wiring.get(&key).is_some_and(|w| {
            w.source_address == source_address && w.target_address == target_address
        }) {
            return Ok(Effect::Skipped("already wired".into()));
        }
        let is_proxy_impl = source.kind == NodeKind::Proxy
            && source
                .requirements_of(Relation::Implementation)
                .any(|r| r.target == target);
        let calldata = if is_proxy_impl {
            patterns::wire_proxy(source, target_address)?.calldata
        } else {
            let props = source
                .on_chain()
                .ok_or_else(|| ExecError::UnknownNode(node.to_string()))?;
            let artifact = self.artifacts.get(&props.abi)?;
            encode_function_call(
                &artifact.abi,
                function,
                &[AbiValue::Address(target_address)],
            )?
        };
        let tx_id = self
            .backend
            .call(&self.wallet(source)?, source_address, &calldata)?;
        Ok(Effect::Wired(WireEntry {
            source: node.to_string(),
            function: function.to_string(),
            target: target.to_string(),
            source_address,
            target_address,
            tx_id,
        }))
    }

    fn send_cuts(
        &self,
        diamond: &NodeInstance,
        diamond_address: Address,
        cuts: &[FacetCut],
    ) -> Result<H256, ExecError> {
        let cut_node = self.node(patterns::cut_node(diamond)?)?;
        let cut_artifact = match cut_node.on_chain() {
            Some(p) => Some(self.artifacts.get(&p.abi)?),
            None => None,
        };
        let calldata =
            patterns::encode_diamond_cut(cut_artifact.as_deref(), cuts, Address::ZERO, &[])?;
        Ok(self
            .backend
            .call(&self.wallet(diamond)?, diamond_address, &calldata)?)
    }

    /// Brings the facet's routes in the diamond to the facet's current
    /// address and selector set.
    fn run_cut_update(
        &self,
        record: &DeploymentRecord,
        diamond: &str,
        facet: &str,
    ) -> Result<Effect, ExecError> {
        if record.entries.get(facet).is_some_and(|e| !e.is_live()) {
            return Ok(Effect::Skipped(format!("`{facet}` destroyed")));
        }
        let d = self.node(diamond)?;
        let diamond_address = self.address_of(record, diamond)?;
        let facet_address = self.address_of(record, facet)?;
        let wanted = patterns::facet_cut(
            d,
            facet,
            self.model,
            self.artifacts,
            facet_address,
            FacetCutAction::Add,
        )?
        .selectors;
        let current = record
            .diamonds
            .get(diamond)
            .filter(|r| r.address == diamond_address)
            .and_then(|r| r.facets.get(facet));
        let cuts = patterns::plan_facet_update(
            current.map(|r| r.selectors.as_slice()).unwrap_or_default(),
            current.map(|r| r.address),
            &wanted,
            facet_address,
        );
        if cuts.is_empty() {
            return Ok(Effect::Skipped("routes up to date".into()));
        }
        let tx_id = self.send_cuts(d, diamond_address, &cuts)?;
        Ok(Effect::Cut {
            diamond: diamond.to_string(),
            diamond_address,
            facet: facet.to_string(),
            route: Some(FacetRoute {
                address: facet_address,
                selectors: wanted,
            }),
            tx_id,
        })
    }

    fn run_cut_remove(
        &self,
        record: &DeploymentRecord,
        diamond: &str,
        facet: &str,
    ) -> Result<Effect, ExecError> {
        let d = self.node(diamond)?;
        let diamond_address = self.address_of(record, diamond)?;
        let route = record
            .diamonds
            .get(diamond)
            .filter(|r| r.address == diamond_address)
            .and_then(|r| r.facets.get(facet))
            .ok_or_else(|| PatternError::NotAttached {
                diamond: diamond.to_string(),
                facet: facet.to_string(),
            })?;
        let state = patterns::DiamondState {
            routes: route
                .selectors
                .iter()
                .map(|s| (*s, route.address))
                .collect(),
        };
        let cut = patterns::plan_facet_removal(diamond, facet, &state, &route.address)?;
        let tx_id = self.send_cuts(d, diamond_address, &[cut])?;
        Ok(Effect::Cut {
            diamond: diamond.to_string(),
            diamond_address,
            facet: facet.to_string(),
            route: None,
            tx_id,
        })
    }

    /// Configuration handed to an off-chain component: the network endpoint
    /// and the address of every contract it uses.
    pub fn offchain_payload(
        &self,
        record: &DeploymentRecord,
        node: &str,
    ) -> Result<serde_json::Value, ExecError> {
        let n = self.node(node)?;
        let endpoint = self.model.network_for(n).map(|net| match &net.props {
            NodeProps::Network(p) => p.url(),
            _ => crate::model::NetworkProps::default().url(),
        });
        let mut contracts = BTreeMap::new();
        for r in &n.requirements {
            if matches!(r.relation, Relation::UseContract | Relation::UseReference) {
                contracts.insert(
                    r.target.clone(),
                    self.address_of(record, &r.target)?.to_string(),
                );
            }
        }
        let mut payload = json!({ "node": node, "contracts": contracts });
        if let Some(url) = endpoint {
            payload["endpoint"] = json!(url);
        }
        if let Some(host) = n.requirements_of(Relation::HostedOn).next() {
            payload["hostedOn"] = json!(host.target);
        }
        Ok(payload)
    }

    fn run_configure(&self, record: &DeploymentRecord, node: &str) -> Result<Effect, ExecError> {
        let payload = self.offchain_payload(record, node)?;
        let text = serde_json::to_string_pretty(&payload).expect("payload serializes");
        let digest = H256(keccak256(text.as_bytes()));
        let path = self
            .config_dir
            .as_ref()
            .map(|d| d.join(format!("{node}.config.json")));
        let on_disk = path.as_ref().is_none_or(|p| p.exists());
        if on_disk
            && record
                .offchain
                .get(node)
                .is_some_and(|e| e.digest == digest)
        {
            return Ok(Effect::Skipped("configuration unchanged".into()));
        }
        if let Some(path) = &path {
            record::write_atomic(path, text.as_bytes()).map_err(|e| ExecError::Config {
                node: node.to_string(),
                reason: e.to_string(),
            })?;
        }
        if let Some(host) = payload.get("hostedOn") {
            log::info!("`{node}` configured; provisioning on {host} is left to the host");
        }
        Ok(Effect::Configured {
            node: node.to_string(),
            entry: OffchainEntry { digest, payload },
        })
    }

    fn run_destroy(
        &self,
        record: &DeploymentRecord,
        node: &str,
        function: &str,
        refund_address: Address,
    ) -> Result<Effect, ExecError> {
        let n = self.node(node)?;
        let address = self.address_of(record, node)?;
        let props = n
            .on_chain()
            .ok_or_else(|| ExecError::UnknownNode(node.to_string()))?;
        let artifact = self.artifacts.get(&props.abi)?;
        let calldata = encode_function_call(
            &artifact.abi,
            function,
            &[AbiValue::Address(refund_address)],
        )?;
        let tx_id = self
            .backend
            .destroy(&self.wallet(n)?, address, &calldata, refund_address)?;
        Ok(Effect::Destroyed {
            node: node.to_string(),
            refund_address,
            tx_id,
        })
    }

    fn run_step(
        &self,
        record: &DeploymentRecord,
        step: &Step,
        force_deploy: bool,
    ) -> Result<Effect, ExecError> {
        match step {
            Step::DeployLibrary { .. }
            | Step::LinkAndDeploy { .. }
            | Step::DeployContract { .. } => self.run_deploy(record, step, force_deploy),
            Step::CallWire {
                node,
                function,
                target,
            } => self.run_wire(record, node, function, target),
            Step::DiamondCutAdd { diamond, facet } | Step::DiamondCutReplace { diamond, facet } => {
                self.run_cut_update(record, diamond, facet)
            }
            Step::DiamondCutRemove { diamond, facet } => {
                self.run_cut_remove(record, diamond, facet)
            }
            Step::ConfigureOffChain { node } => self.run_configure(record, node),
            Step::Destroy {
                node,
                function,
                refund_address,
            } => self.run_destroy(record, node, function, *refund_address),
        }
    }

    fn persist(&self, record: &DeploymentRecord) -> Result<(), ExecError> {
        match self.store {
            Some(store) => store.save(record),
            None => Ok(()),
        }
    }

    /// Runs `batches` in order; a batch is a set of mutually independent
    /// steps, run concurrently in parallel mode.
    fn run(
        &self,
        operation: &str,
        batches: Vec<Vec<(Step, bool)>>,
        mut record: DeploymentRecord,
    ) -> Result<ExecutionReport, ExecError> {
        let clock = self.options.clock;
        let mut outcomes = Vec::new();
        let mut failed = None;
        let mut index = 0;
        'batches: for batch in batches {
            let results: Vec<(Result<Effect, ExecError>, u64)> =
                if self.options.parallel && batch.len() > 1 {
                    let snapshot = &record;
                    std::thread::scope(|s| {
                        let handles: Vec<_> = batch
                            .iter()
                            .map(|(step, force)| {
                                s.spawn(move || timed(|| self.run_step(snapshot, step, *force)))
                            })
                            .collect();
                        handles
                            .into_iter()
                            .map(|h| h.join().expect("step thread panicked"))
                            .collect()
                    })
                } else {
                    let mut out = Vec::with_capacity(batch.len());
                    for (step, force) in &batch {
                        let (result, micros) = timed(|| self.run_step(&record, step, *force));
                        if let Ok(effect) = &result {
                            apply(&mut record, clock, effect.clone());
                            self.persist(&record)?;
                        }
                        let stop = result.is_err();
                        out.push((result, micros));
                        if stop {
                            break;
                        }
                    }
                    out
                };
            let sequential = !(self.options.parallel && batch.len() > 1);
            for ((step, _), (result, micros)) in batch.into_iter().zip(results) {
                let (status, detail) = match result {
                    Ok(effect) => {
                        let skipped = match &effect {
                            Effect::Skipped(why) => Some(why.clone()),
                            _ => None,
                        };
                        if !sequential {
                            apply(&mut record, clock, effect);
                            self.persist(&record)?;
                        }
                        match skipped {
                            Some(why) => (StepStatus::Skipped, Some(why)),
                            None => (StepStatus::Executed, None),
                        }
                    }
                    Err(e) => {
                        if failed.is_none() {
                            failed = Some(FailedStep {
                                index,
                                step: step.clone(),
                                error: e.to_string(),
                            });
                        }
                        (StepStatus::Failed, Some(e.to_string()))
                    }
                };
                outcomes.push(StepOutcome {
                    index,
                    step,
                    status,
                    detail,
                    duration_micros: micros,
                });
                index += 1;
            }
            if failed.is_some() {
                break 'batches;
            }
        }
        self.persist(&record)?;
        let count = |s: StepStatus| outcomes.iter().filter(|o| o.status == s).count();
        Ok(ExecutionReport {
            operation: operation.to_string(),
            attempted: outcomes.len(),
            executed: count(StepStatus::Executed),
            skipped: count(StepStatus::Skipped),
            failed,
            steps: outcomes,
            record,
        })
    }

    fn start_record(&self, prior: Option<DeploymentRecord>) -> DeploymentRecord {
        let mut record = prior.unwrap_or_default();
        record.model_hash = self.model.digest();
        record
    }

    pub fn execute_deploy(
        &self,
        plan: &DeploymentPlan,
        prior: Option<DeploymentRecord>,
    ) -> Result<ExecutionReport, ExecError> {
        self.check_endpoints(plan.steps().map(Step::node))?;
        let batches = plan
            .layers
            .iter()
            .map(|l| l.iter().map(|s| (s.clone(), false)).collect())
            .collect();
        self.run("deploy", batches, self.start_record(prior))
    }

    /// Redeploys the plan's nodes unconditionally, then rewires, recuts and
    /// reconfigures whatever the new addresses invalidate.
    pub fn execute_upgrade(
        &self,
        plan: &UpgradePlan,
        record: DeploymentRecord,
    ) -> Result<ExecutionReport, ExecError> {
        for name in &plan.redeploy_set {
            if record.live(name).is_none() {
                return Err(ExecError::NotDeployed(name.clone()));
            }
        }
        self.check_endpoints(plan.redeploy_set.iter().map(String::as_str))?;
        let batches = plan
            .steps()
            .map(|s| vec![(s.clone(), s.is_deploy())])
            .collect();
        self.run("upgrade", batches, self.start_record(Some(record)))
    }

    pub fn execute_destroy(
        &self,
        steps: &[Step],
        record: DeploymentRecord,
    ) -> Result<ExecutionReport, ExecError> {
        for step in steps {
            if let Step::Destroy { node, .. } = step {
                match record.entries.get(node) {
                    None => return Err(ExecError::NotDeployed(node.clone())),
                    Some(e) if !e.is_live() => return Err(ExecError::Destroyed(node.clone())),
                    _ => {}
                }
            }
        }
        self.check_endpoints(steps.iter().map(Step::node))?;
        let batches = steps.iter().map(|s| vec![(s.clone(), false)]).collect();
        self.run("destroy", batches, self.start_record(Some(record)))
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_micros() as u64)
}

/// Selectors a facet currently serves in a diamond, per the record.
pub fn routed_selectors(record: &DeploymentRecord, diamond: &str, facet: &str) -> Vec<Selector> {
    record
        .diamonds
        .get(diamond)
        .and_then(|d| d.facets.get(facet))
        .map(|r| r.selectors.clone())
        .unwrap_or_default()
}
