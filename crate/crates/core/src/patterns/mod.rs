// SPDX-License-Identifier: Apache-2.0

//! Diamond (multi-facet) and proxy composition.
//!
//! Cut planning is pure. [`DiamondState`] is the routing table the mock chain
//! keeps per diamond; it only tracks which facet answers which selector.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linker::abi::{self, AbiType, AbiValue};
use crate::linker::{encode_function_call, LinkError};
use crate::model::{
    ArtifactError, ArtifactStore, ContractArtifact, DeploymentModel, NodeInstance, NodeKind,
    Relation, DEFAULT_UPGRADE_SIGNATURE,
};
use crate::primitives::{Address, Selector};

pub const DEFAULT_DIAMOND_CUT_SIGNATURE: &str =
    "diamondCut((address,uint8,bytes4[])[],address,bytes)";

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("facet `{0}` exposes no functions")]
    EmptyFacet(String),
    #[error("selector {selector} exported by both `{first}` and `{second}`")]
    Collision {
        selector: Selector,
        first: String,
        second: String,
    },
    #[error("diamond `{diamond}` needs exactly one useCut requirement, found {found}")]
    MissingCut { diamond: String, found: usize },
    #[error("cut lists selector {0} twice")]
    DuplicateSelector(Selector),
    #[error("selector {0} is already routed")]
    AlreadyRouted(Selector),
    #[error("selector {0} is not routed")]
    NotRouted(Selector),
    #[error("cut has no selectors")]
    EmptyCut,
    #[error("facet `{facet}` is not attached to diamond `{diamond}`")]
    NotAttached { diamond: String, facet: String },
    #[error("proxy `{0}` has no implementation requirement")]
    MissingImplementation(String),
    #[error("no address known for `{0}`")]
    NoAddress(String),
    #[error("`{0}` is not a node of the expected kind")]
    WrongKind(String),
    #[error("diamondCut ABI of `{0}` has an unsupported parameter shape")]
    UnsupportedCutAbi(String),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Abi(#[from] abi::AbiError),
}

/// Numeric values follow the standard `FacetCutAction` enum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum FacetCutAction {
    Add = 0,
    Replace = 1,
    Remove = 2,
}

impl FacetCutAction {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Add),
            1 => Some(Self::Replace),
            2 => Some(Self::Remove),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FacetCut {
    /// Zero for `Remove`.
    pub facet_address: Address,
    pub action: FacetCutAction,
    pub selectors: Vec<Selector>,
}

impl FacetCut {
    fn check(&self) -> Result<(), PatternError> {
        if self.selectors.is_empty() {
            return Err(PatternError::EmptyCut);
        }
        let mut seen = BTreeSet::new();
        for s in &self.selectors {
            if !seen.insert(*s) {
                return Err(PatternError::DuplicateSelector(*s));
            }
        }
        Ok(())
    }

    fn abi_type() -> AbiType {
        AbiType::Tuple(vec![
            AbiType::Address,
            AbiType::Uint(8),
            AbiType::Array(Box::new(AbiType::FixedBytes(4))),
        ])
    }

    pub fn to_abi_value(&self) -> AbiValue {
        AbiValue::Tuple(vec![
            AbiValue::Address(self.facet_address),
            AbiValue::Uint(8, BigUint::from(self.action as u8)),
            AbiValue::Array(
                AbiType::FixedBytes(4),
                self.selectors
                    .iter()
                    .map(|s| AbiValue::FixedBytes(s.0.to_vec()))
                    .collect(),
            ),
        ])
    }

    fn from_abi_value(value: &AbiValue) -> Option<Self> {
        let AbiValue::Tuple(fields) = value else {
            return None;
        };
        let [AbiValue::Address(facet_address), AbiValue::Uint(_, action), AbiValue::Array(_, sels)] =
            fields.as_slice()
        else {
            return None;
        };
        let action = FacetCutAction::from_u8(u8::try_from(action).ok()?)?;
        let selectors = sels
            .iter()
            .map(|s| match s {
                AbiValue::FixedBytes(b) => <[u8; 4]>::try_from(b.as_slice()).ok().map(Selector),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()?;
        Some(FacetCut {
            facet_address: *facet_address,
            action,
            selectors,
        })
    }
}

/// Selector routing of one diamond. A selector maps to at most one facet.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiamondState {
    pub routes: BTreeMap<Selector, Address>,
}

impl DiamondState {
    /// Applies a cut atomically: either every selector is updated or none is.
    pub fn apply(&mut self, cut: &FacetCut) -> Result<(), PatternError> {
        cut.check()?;
        for s in &cut.selectors {
            let routed = self.routes.contains_key(s);
            match cut.action {
                FacetCutAction::Add if routed => return Err(PatternError::AlreadyRouted(*s)),
                FacetCutAction::Replace | FacetCutAction::Remove if !routed => {
                    return Err(PatternError::NotRouted(*s))
                }
                _ => {}
            }
        }
        for s in &cut.selectors {
            match cut.action {
                FacetCutAction::Add | FacetCutAction::Replace => {
                    self.routes.insert(*s, cut.facet_address);
                }
                FacetCutAction::Remove => {
                    self.routes.remove(s);
                }
            }
        }
        Ok(())
    }

    pub fn selectors_of(&self, facet: &Address) -> Vec<Selector> {
        self.routes
            .iter()
            .filter(|(_, a)| *a == facet)
            .map(|(s, _)| *s)
            .collect()
    }
}

/// Selectors of every function in the facet except those named in
/// `exclude`, ascending. Excluding a name hides all of its overloads;
/// unknown names are ignored here and reported by validation.
pub fn facet_selectors(
    artifact: &ContractArtifact,
    exclude: &[String],
) -> Result<Vec<Selector>, PatternError> {
    if artifact.abi.functions.is_empty() {
        return Err(PatternError::EmptyFacet(artifact.contract_name.clone()));
    }
    let selectors: BTreeSet<Selector> = artifact
        .abi
        .functions
        .iter()
        .filter(|f| !exclude.contains(&f.name))
        .map(|f| f.selector())
        .collect();
    Ok(selectors.into_iter().collect())
}

/// A cut together with the facet node it concerns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NamedCut {
    pub facet: String,
    pub cut: FacetCut,
}

/// Diamond initializer. It is modelled but never called.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InitDescriptor {
    pub node: String,
    pub warning: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DiamondWiring {
    pub cut_node: String,
    pub cuts: Vec<NamedCut>,
    pub init: Option<InitDescriptor>,
}

/// Target of the diamond's single `useCut` requirement.
pub fn cut_node(diamond: &NodeInstance) -> Result<&str, PatternError> {
    let cuts: Vec<_> = diamond.requirements_of(Relation::UseCut).collect();
    match cuts.as_slice() {
        [only] => Ok(&only.target),
        _ => Err(PatternError::MissingCut {
            diamond: diamond.name.clone(),
            found: cuts.len(),
        }),
    }
}

fn facet_artifact(
    model: &DeploymentModel,
    artifacts: &ArtifactStore,
    facet: &str,
) -> Result<std::sync::Arc<ContractArtifact>, PatternError> {
    let props = model
        .node(facet)
        .and_then(|n| n.on_chain())
        .ok_or_else(|| PatternError::WrongKind(facet.to_string()))?;
    Ok(artifacts.get(&props.abi)?)
}

/// One `Add` cut per `useFacet`, in facet-name order. Rejects selectors
/// exported by two facets.
pub fn plan_diamond_wiring(
    diamond: &NodeInstance,
    model: &DeploymentModel,
    artifacts: &ArtifactStore,
    addresses: &BTreeMap<String, Address>,
) -> Result<DiamondWiring, PatternError> {
    if diamond.kind != NodeKind::Diamond {
        return Err(PatternError::WrongKind(diamond.name.clone()));
    }
    let cut_node = cut_node(diamond)?.to_string();
    let mut uses: Vec<_> = diamond.requirements_of(Relation::UseFacet).collect();
    uses.sort_by(|a, b| a.target.cmp(&b.target));
    let mut owner: BTreeMap<Selector, &str> = BTreeMap::new();
    let mut cuts = Vec::new();
    for req in uses {
        let selectors = facet_selectors(
            &*facet_artifact(model, artifacts, &req.target)?,
            &req.exclude,
        )?;
        for s in &selectors {
            if let Some(first) = owner.insert(*s, &req.target) {
                return Err(PatternError::Collision {
                    selector: *s,
                    first: first.to_string(),
                    second: req.target.clone(),
                });
            }
        }
        let facet_address = *addresses
            .get(&req.target)
            .ok_or_else(|| PatternError::NoAddress(req.target.clone()))?;
        cuts.push(NamedCut {
            facet: req.target.clone(),
            cut: FacetCut {
                facet_address,
                action: FacetCutAction::Add,
                selectors,
            },
        });
    }
    let init = diamond
        .requirements_of(Relation::UseInit)
        .next()
        .map(|r| InitDescriptor {
            node: r.target.clone(),
            warning: format!(
                "initializer `{}` of `{}` is not executed",
                r.target, diamond.name
            ),
        });
    Ok(DiamondWiring {
        cut_node,
        cuts,
        init,
    })
}

/// Add or Replace cut for a single facet edge of `diamond`.
pub fn facet_cut(
    diamond: &NodeInstance,
    facet: &str,
    model: &DeploymentModel,
    artifacts: &ArtifactStore,
    facet_address: Address,
    action: FacetCutAction,
) -> Result<FacetCut, PatternError> {
    let req = diamond
        .requirements_of(Relation::UseFacet)
        .find(|r| r.target == facet)
        .ok_or_else(|| PatternError::NotAttached {
            diamond: diamond.name.clone(),
            facet: facet.to_string(),
        })?;
    let selectors = facet_selectors(&*facet_artifact(model, artifacts, facet)?, &req.exclude)?;
    Ok(FacetCut {
        facet_address,
        action,
        selectors,
    })
}

/// Remove cut for exactly the selectors currently routed to `facet_address`.
pub fn plan_facet_removal(
    diamond: &str,
    facet: &str,
    state: &DiamondState,
    facet_address: &Address,
) -> Result<FacetCut, PatternError> {
    let selectors = state.selectors_of(facet_address);
    if selectors.is_empty() {
        return Err(PatternError::NotAttached {
            diamond: diamond.to_string(),
            facet: facet.to_string(),
        });
    }
    Ok(FacetCut {
        facet_address: Address::ZERO,
        action: FacetCutAction::Remove,
        selectors,
    })
}

/// Cuts that move a facet's routes from `current` (selectors it already
/// serves) to `wanted`, served by `facet_address`: removals, then
/// replacements, then additions. Empty when nothing changes.
pub fn plan_facet_update(
    current: &[Selector],
    current_address: Option<Address>,
    wanted: &[Selector],
    facet_address: Address,
) -> Vec<FacetCut> {
    let current: BTreeSet<Selector> = current.iter().copied().collect();
    let wanted: BTreeSet<Selector> = wanted.iter().copied().collect();
    let mut cuts = Vec::new();
    let mut push = |action, facet_address, selectors: Vec<Selector>| {
        if !selectors.is_empty() {
            cuts.push(FacetCut {
                facet_address,
                action,
                selectors,
            });
        }
    };
    push(
        FacetCutAction::Remove,
        Address::ZERO,
        current.difference(&wanted).copied().collect(),
    );
    if current_address != Some(facet_address) {
        push(
            FacetCutAction::Replace,
            facet_address,
            current.intersection(&wanted).copied().collect(),
        );
    }
    push(
        FacetCutAction::Add,
        facet_address,
        wanted.difference(&current).copied().collect(),
    );
    cuts
}

/// Call data for `diamondCut` as declared by the cut artifact, falling back
/// to the standard signature when the artifact does not declare one. The
/// declared parameters are matched by type: the cut array, then an optional
/// init address and init call data.
pub fn encode_diamond_cut(
    cut_artifact: Option<&ContractArtifact>,
    cuts: &[FacetCut],
    init: Address,
    init_calldata: &[u8],
) -> Result<Vec<u8>, PatternError> {
    let declared = cut_artifact.and_then(|a| a.abi.functions_named("diamondCut").next());
    let (signature, types) = match declared {
        Some(f) => (f.signature(), f.input_types()),
        None => {
            let open = DEFAULT_DIAMOND_CUT_SIGNATURE
                .find('(')
                .expect("signature has params");
            let AbiType::Tuple(types) = AbiType::parse(&DEFAULT_DIAMOND_CUT_SIGNATURE[open..])?
            else {
                unreachable!("parameter list parses as a tuple")
            };
            (DEFAULT_DIAMOND_CUT_SIGNATURE.to_string(), types)
        }
    };
    let unsupported = || {
        PatternError::UnsupportedCutAbi(
            cut_artifact
                .map(|a| a.contract_name.clone())
                .unwrap_or_default(),
        )
    };
    let cut_array = AbiType::Array(Box::new(FacetCut::abi_type()));
    let mut args = Vec::with_capacity(types.len());
    for ty in &types {
        args.push(match ty {
            t if *t == cut_array => AbiValue::Array(
                FacetCut::abi_type(),
                cuts.iter().map(FacetCut::to_abi_value).collect(),
            ),
            AbiType::Address => AbiValue::Address(init),
            AbiType::Bytes => AbiValue::Bytes(init_calldata.to_vec()),
            _ => return Err(unsupported()),
        });
    }
    if !types.contains(&cut_array) {
        return Err(unsupported());
    }
    let mut out = Selector::of_signature(&signature).0.to_vec();
    out.extend(abi::encode(&args)?);
    Ok(out)
}

/// Cuts carried by call data for the standard `diamondCut` signature, or
/// `None` if the data is not such a call.
pub fn decode_diamond_cut(calldata: &[u8]) -> Option<Vec<FacetCut>> {
    let (sel, body) = calldata.split_at_checked(4)?;
    if sel != Selector::of_signature(DEFAULT_DIAMOND_CUT_SIGNATURE).0 {
        return None;
    }
    let types = [
        AbiType::Array(Box::new(FacetCut::abi_type())),
        AbiType::Address,
        AbiType::Bytes,
    ];
    let values = abi::decode(&types, body).ok()?;
    let AbiValue::Array(_, items) = &values[0] else {
        return None;
    };
    items.iter().map(FacetCut::from_abi_value).collect()
}

/// Upgrade call on a proxy to point it at a new implementation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProxyCall {
    pub signature: String,
    pub calldata: Vec<u8>,
}

pub fn wire_proxy(
    proxy: &NodeInstance,
    implementation: Address,
) -> Result<ProxyCall, PatternError> {
    if proxy.kind != NodeKind::Proxy {
        return Err(PatternError::WrongKind(proxy.name.clone()));
    }
    if proxy
        .requirements_of(Relation::Implementation)
        .next()
        .is_none()
    {
        return Err(PatternError::MissingImplementation(proxy.name.clone()));
    }
    let signature = proxy
        .on_chain()
        .and_then(|p| p.upgrade_function.clone())
        .unwrap_or_else(|| DEFAULT_UPGRADE_SIGNATURE.to_string());
    let calldata = encode_function_call(
        &Default::default(),
        &signature,
        &[AbiValue::Address(implementation)],
    )?;
    Ok(ProxyCall {
        signature,
        calldata,
    })
}
