// SPDX-License-Identifier: Apache-2.0

//! Application models: node instances, their typed properties and the
//! requirements that connect them.

pub mod artifact;
mod parse;
pub mod secrets;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

pub use crate::linker::abi::Literal;
use crate::primitives::Address;

pub use artifact::{load_artifact, ArtifactError, ArtifactStore, ContractArtifact};
pub use parse::{parse_inputs, parse_model, serialize_model, ModelError};
pub use validate::{
    legal_targets, validate_model, Severity, ValidationReport, Violation, ViolationCode,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum NodeKind {
    Network,
    SelfHostedNode,
    NodeServiceProvider,
    Wallet,
    Library,
    SmartContract,
    SmartContractReference,
    Proxy,
    Diamond,
    Facet,
    DiamondCut,
    DiamondInit,
    OffChainComponent,
    DecentralizedStorage,
    Server,
    Credential,
}

/// `type:` names accepted in model files. The first entry for a kind is the
/// one written back on serialization.
const TYPE_NAMES: &[(&str, NodeKind)] = &[
    ("katena.nodes.network", NodeKind::Network),
    ("katena.nodes.network.ethereum", NodeKind::SelfHostedNode),
    (
        "katena.nodes.network.selfHostedNode",
        NodeKind::SelfHostedNode,
    ),
    ("katena.nodes.network.ganache", NodeKind::SelfHostedNode),
    (
        "katena.nodes.network.nodeServiceProvider",
        NodeKind::NodeServiceProvider,
    ),
    ("katena.nodes.wallet", NodeKind::Wallet),
    ("katena.nodes.library", NodeKind::Library),
    ("katena.nodes.smartcontract", NodeKind::SmartContract),
    (
        "katena.nodes.smartcontractReference",
        NodeKind::SmartContractReference,
    ),
    ("katena.nodes.proxy", NodeKind::Proxy),
    ("katena.nodes.diamond", NodeKind::Diamond),
    ("katena.nodes.diamond.facet", NodeKind::Facet),
    ("katena.nodes.diamond.cut", NodeKind::DiamondCut),
    ("katena.nodes.diamond.init", NodeKind::DiamondInit),
    (
        "katena.nodes.offChainComponent",
        NodeKind::OffChainComponent,
    ),
    (
        "tosca.nodes.Container.Application",
        NodeKind::OffChainComponent,
    ),
    ("katena.nodes.storage.ipfs", NodeKind::DecentralizedStorage),
    (
        "katena.nodes.decentralizedStorage",
        NodeKind::DecentralizedStorage,
    ),
    ("katena.nodes.server", NodeKind::Server),
    ("katena.nodes.credential", NodeKind::Credential),
];

impl NodeKind {
    pub fn from_type_name(name: &str) -> Option<Self> {
        TYPE_NAMES.iter().find(|(n, _)| *n == name).map(|(_, k)| *k)
    }

    pub fn type_name(self) -> &'static str {
        TYPE_NAMES
            .iter()
            .find(|(_, k)| *k == self)
            .map(|(n, _)| *n)
            .expect("every kind has a type name")
    }

    pub fn is_network(self) -> bool {
        matches!(
            self,
            NodeKind::Network | NodeKind::SelfHostedNode | NodeKind::NodeServiceProvider
        )
    }

    /// Kinds that get their own deployment transaction.
    pub fn is_deployable(self) -> bool {
        self == NodeKind::Library || self.is_contract_like()
    }

    /// Deployable contracts, excluding libraries.
    pub fn is_contract_like(self) -> bool {
        matches!(
            self,
            NodeKind::SmartContract
                | NodeKind::Proxy
                | NodeKind::Diamond
                | NodeKind::Facet
                | NodeKind::DiamondCut
                | NodeKind::DiamondInit
        )
    }

    pub fn is_on_chain(self) -> bool {
        self.is_deployable() || self == NodeKind::SmartContractReference
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum Relation {
    UseNetwork,
    UseWallet,
    UseLibrary,
    UseContractInConstructor,
    UseReferenceInConstructor,
    UseContract,
    UseReference,
    UseFacet,
    UseCut,
    UseInit,
    Implementation,
    HostedOn,
    UseCredentials,
}

const RELATION_NAMES: &[(&str, Relation)] = &[
    ("useNetwork", Relation::UseNetwork),
    ("useWallet", Relation::UseWallet),
    ("useLibrary", Relation::UseLibrary),
    (
        "useContractInConstructor",
        Relation::UseContractInConstructor,
    ),
    (
        "usesContractInConstructor",
        Relation::UseContractInConstructor,
    ),
    (
        "useReferenceInConstructor",
        Relation::UseReferenceInConstructor,
    ),
    ("useContract", Relation::UseContract),
    ("useReference", Relation::UseReference),
    ("useFacet", Relation::UseFacet),
    ("useCut", Relation::UseCut),
    ("useInit", Relation::UseInit),
    ("implementation", Relation::Implementation),
    ("hostedOn", Relation::HostedOn),
    ("useCredentials", Relation::UseCredentials),
];

const RELATION_NAMESPACE: &str = "katena.relationships.";

impl Relation {
    /// Accepts bare names and `katena.relationships.`-prefixed ones.
    pub fn from_name(name: &str) -> Option<Self> {
        let bare = name.strip_prefix(RELATION_NAMESPACE).unwrap_or(name);
        RELATION_NAMES
            .iter()
            .find(|(n, _)| *n == bare)
            .map(|(_, r)| *r)
    }

    pub fn name(self) -> &'static str {
        RELATION_NAMES
            .iter()
            .find(|(_, r)| *r == self)
            .map(|(n, _)| *n)
            .expect("every relation has a name")
    }

    /// Relations that pass the target's address to the source's constructor.
    pub fn is_constructor_ref(self) -> bool {
        matches!(
            self,
            Relation::UseContractInConstructor
                | Relation::UseReferenceInConstructor
                | Relation::UseCut
        )
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Requirement {
    pub relation: Relation,
    pub target: String,
    /// Setter invoked on the source for `useContract`/`useReference`.
    pub function_name: Option<String>,
    /// Facet functions hidden from the diamond (`useFacet` only).
    pub exclude: Vec<String>,
}

impl Requirement {
    pub fn new(relation: Relation, target: impl Into<String>) -> Self {
        Requirement {
            relation,
            target: target.into(),
            function_name: None,
            exclude: Vec::new(),
        }
    }
}

/// Where a secret comes from. Secrets are never resolved at parse time.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SecretRef {
    Input(String),
    Env(String),
    /// Written directly in the model file; accepted with a warning.
    Inline(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnChainProps {
    pub abi: String,
    pub parameters: Vec<Literal>,
    pub destroy_function: Option<String>,
    pub refund_address: Option<Address>,
    /// Proxies only: signature of the implementation setter.
    pub upgrade_function: Option<String>,
}

impl OnChainProps {
    pub fn new(abi: impl Into<String>) -> Self {
        OnChainProps {
            abi: abi.into(),
            parameters: Vec::new(),
            destroy_function: None,
            refund_address: None,
            upgrade_function: None,
        }
    }
}

pub const DEFAULT_NODE_HOST: &str = "localhost";
pub const DEFAULT_NODE_PORT: i64 = 8545;
pub const DEFAULT_UPGRADE_SIGNATURE: &str = "upgradeTo(address)";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    SelfHosted {
        host: String,
        port: i64,
    },
    Provider {
        url: String,
        secret: Option<SecretRef>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkProps {
    pub endpoint: Endpoint,
    /// Expected chain id; checked against the endpoint when set.
    pub chain_id: Option<u64>,
}

impl NetworkProps {
    pub fn url(&self) -> String {
        match &self.endpoint {
            Endpoint::SelfHosted { host, port } => format!("http://{host}:{port}"),
            Endpoint::Provider { url, .. } => url.clone(),
        }
    }
}

impl Default for NetworkProps {
    fn default() -> Self {
        NetworkProps {
            endpoint: Endpoint::SelfHosted {
                host: DEFAULT_NODE_HOST.into(),
                port: DEFAULT_NODE_PORT,
            },
            chain_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WalletProps {
    pub public_key: Option<Address>,
    pub private_key: Option<SecretRef>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeProps {
    Network(NetworkProps),
    Wallet(WalletProps),
    OnChain(OnChainProps),
    Reference {
        address: Address,
    },
    Credential {
        ssh_key: SecretRef,
    },
    /// Off-chain components and their hosts: free-form, passed through to
    /// the emitted configuration.
    OffChain(BTreeMap<String, serde_json::Value>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeInstance {
    pub name: String,
    pub kind: NodeKind,
    pub props: NodeProps,
    pub requirements: Vec<Requirement>,
}

impl NodeInstance {
    pub fn on_chain(&self) -> Option<&OnChainProps> {
        match &self.props {
            NodeProps::OnChain(p) => Some(p),
            _ => None,
        }
    }

    pub fn requirements_of(&self, relation: Relation) -> impl Iterator<Item = &Requirement> {
        self.requirements
            .iter()
            .filter(move |r| r.relation == relation)
    }

    /// Targets whose addresses fill constructor slots, in declaration order.
    pub fn constructor_refs(&self) -> impl Iterator<Item = &Requirement> {
        self.requirements
            .iter()
            .filter(|r| r.relation.is_constructor_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeploymentModel {
    pub nodes: BTreeMap<String, NodeInstance>,
    pub inputs: BTreeMap<String, Literal>,
}

impl DeploymentModel {
    pub fn node(&self, name: &str) -> Option<&NodeInstance> {
        self.nodes.get(name)
    }

    /// The wallet that signs for `node`: its `useWallet` target, or the only
    /// wallet in the model.
    pub fn wallet_for(&self, node: &NodeInstance) -> Option<&NodeInstance> {
        if let Some(r) = node.requirements_of(Relation::UseWallet).next() {
            return self.nodes.get(&r.target);
        }
        let mut wallets = self.nodes.values().filter(|n| n.kind == NodeKind::Wallet);
        match (wallets.next(), wallets.next()) {
            (Some(w), None) => Some(w),
            _ => None,
        }
    }

    /// The network `node` deploys to: its `useNetwork` target, or the only
    /// network in the model.
    pub fn network_for(&self, node: &NodeInstance) -> Option<&NodeInstance> {
        if let Some(r) = node.requirements_of(Relation::UseNetwork).next() {
            return self.nodes.get(&r.target);
        }
        let mut networks = self.nodes.values().filter(|n| n.kind.is_network());
        match (networks.next(), networks.next()) {
            (Some(n), None) => Some(n),
            _ => None,
        }
    }

    /// Digest of the canonical serialized form.
    pub fn digest(&self) -> crate::primitives::H256 {
        crate::primitives::H256::digest(serialize_model(self).as_bytes())
    }
}
