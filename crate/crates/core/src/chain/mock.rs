// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::sync::{Mutex, MutexGuard};

use serde::{Deserialize, Serialize};

use super::{
    check_chain_id, ChainBackend, ChainError, Deployed, EndpointInfo, SigningWallet, TxReceipt,
};
use crate::model::NetworkProps;
use crate::patterns::{decode_diamond_cut, DiamondState};
use crate::primitives::{keccak256, Address, Selector, H256};

pub const MOCK_CHAIN_ID: u64 = 1337;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum LogKind {
    Deploy,
    Call,
    Destroy,
}

/// One accepted transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LogEntry {
    pub kind: LogKind,
    pub caller: Address,
    /// The created contract for deploys.
    pub target: Address,
    pub selector: Option<Selector>,
    /// Call data after the selector; empty for deploys.
    #[serde(with = "hex_bytes")]
    pub args: Vec<u8>,
    pub refund: Option<Address>,
    pub tx_id: H256,
}

mod hex_bytes {
    use serde::Deserialize;

    pub fn serialize<S: serde::Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("0x{}", hex::encode(bytes)))
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        crate::primitives::decode_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Contract {
    payload_hash: H256,
    alive: bool,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct State {
    contracts: BTreeMap<Address, Contract>,
    nonces: BTreeMap<Address, u64>,
    balances: BTreeMap<Address, u128>,
    log: Vec<LogEntry>,
    receipts: BTreeMap<H256, TxReceipt>,
    diamonds: BTreeMap<Address, DiamondState>,
    accepted: usize,
    #[serde(skip)]
    fail_after: Option<usize>,
}

impl State {
    /// Allocates the sender's next nonce and the transaction id it yields.
    fn next_tx(&mut self, sender: Address, body: &[u8]) -> Result<(u64, H256), ChainError> {
        if let Some(limit) = self.fail_after {
            if self.accepted >= limit {
                return Err(ChainError::Injected(limit));
            }
        }
        let nonce = self.nonces.entry(sender).or_insert(0);
        let current = *nonce;
        *nonce += 1;
        let mut preimage = sender.0.to_vec();
        preimage.extend(current.to_be_bytes());
        preimage.extend(body);
        Ok((current, H256(keccak256(preimage))))
    }

    fn require_alive(&self, target: Address) -> Result<(), ChainError> {
        match self.contracts.get(&target) {
            Some(c) if c.alive => Ok(()),
            _ => Err(ChainError::NotAlive(target)),
        }
    }

    fn record(&mut self, entry: LogEntry, contract_address: Option<Address>) {
        self.receipts.insert(
            entry.tx_id,
            TxReceipt {
                tx_id: entry.tx_id,
                success: true,
                contract_address,
            },
        );
        self.log.push(entry);
        self.accepted += 1;
    }
}

/// Address a mock deploy from `sender` at `nonce` receives. Differs from
/// real CREATE addresses, which hash an RLP list instead.
pub fn mock_address(sender: Address, nonce: u64) -> Address {
    let mut preimage = sender.0.to_vec();
    preimage.extend(nonce.to_be_bytes());
    let hash = keccak256(preimage);
    let mut out = [0u8; 20];
    out.copy_from_slice(&hash[12..]);
    Address(out)
}

fn split_selector(calldata: &[u8]) -> (Option<Selector>, Vec<u8>) {
    match calldata.split_first_chunk::<4>() {
        Some((sel, rest)) => (Some(Selector(*sel)), rest.to_vec()),
        None => (None, calldata.to_vec()),
    }
}

/// Deterministic in-memory chain. Every transaction is accepted or rejected
/// under one lock, so nonces stay consistent under concurrent use.
#[derive(Debug, Default)]
pub struct MockChain {
    state: Mutex<State>,
}

impl MockChain {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Rejects every transaction once `n` more have been accepted.
    pub fn fail_after(&self, n: usize) {
        let mut st = self.lock();
        st.fail_after = Some(st.accepted + n);
    }

    pub fn clear_failure(&self) {
        self.lock().fail_after = None;
    }

    pub fn call_log(&self) -> Vec<LogEntry> {
        self.lock().log.clone()
    }

    pub fn is_alive(&self, address: Address) -> bool {
        self.lock().contracts.get(&address).is_some_and(|c| c.alive)
    }

    pub fn payload_hash(&self, address: Address) -> Option<H256> {
        self.lock().contracts.get(&address).map(|c| c.payload_hash)
    }

    pub fn diamond_state(&self, diamond: Address) -> DiamondState {
        self.lock()
            .diamonds
            .get(&diamond)
            .cloned()
            .unwrap_or_default()
    }

    /// Chain state as JSON, so a mock chain can outlive one process.
    pub fn snapshot(&self) -> String {
        serde_json::to_string_pretty(&*self.lock()).expect("mock state serializes")
    }

    pub fn restore(json: &str) -> Result<Self, ChainError> {
        let state: State =
            serde_json::from_str(json).map_err(|e| ChainError::BadResponse(e.to_string()))?;
        Ok(MockChain {
            state: Mutex::new(state),
        })
    }

    pub fn set_balance(&self, address: Address, amount: u128) {
        self.lock().balances.insert(address, amount);
    }

    /// Registers code at a fixed address, standing in for contracts that
    /// exist before the orchestrator runs.
    pub fn install(&self, address: Address) {
        self.lock().contracts.insert(
            address,
            Contract {
                payload_hash: H256::default(),
                alive: true,
            },
        );
    }
}

impl ChainBackend for MockChain {
    fn check_endpoint(&self, network: &NetworkProps) -> Result<EndpointInfo, ChainError> {
        check_chain_id(network, MOCK_CHAIN_ID)
    }

    fn deploy(&self, wallet: &SigningWallet, payload: &[u8]) -> Result<Deployed, ChainError> {
        if payload.is_empty() {
            return Err(ChainError::EmptyPayload);
        }
        let sender = wallet.address();
        let mut st = self.lock();
        let (nonce, tx_id) = st.next_tx(sender, payload)?;
        let address = mock_address(sender, nonce);
        st.contracts.insert(
            address,
            Contract {
                payload_hash: H256(keccak256(payload)),
                alive: true,
            },
        );
        st.record(
            LogEntry {
                kind: LogKind::Deploy,
                caller: sender,
                target: address,
                selector: None,
                args: Vec::new(),
                refund: None,
                tx_id,
            },
            Some(address),
        );
        Ok(Deployed { address, tx_id })
    }

    fn call(
        &self,
        wallet: &SigningWallet,
        target: Address,
        calldata: &[u8],
    ) -> Result<H256, ChainError> {
        let sender = wallet.address();
        let mut st = self.lock();
        st.require_alive(target)?;
        if let Some(cuts) = decode_diamond_cut(calldata) {
            let mut routing = st.diamonds.get(&target).cloned().unwrap_or_default();
            for cut in &cuts {
                routing
                    .apply(cut)
                    .map_err(|e| ChainError::Reverted(e.to_string()))?;
            }
            st.diamonds.insert(target, routing);
        }
        let mut body = target.0.to_vec();
        body.extend(calldata);
        let (_, tx_id) = st.next_tx(sender, &body)?;
        let (selector, args) = split_selector(calldata);
        st.record(
            LogEntry {
                kind: LogKind::Call,
                caller: sender,
                target,
                selector,
                args,
                refund: None,
                tx_id,
            },
            None,
        );
        Ok(tx_id)
    }

    fn destroy(
        &self,
        wallet: &SigningWallet,
        target: Address,
        calldata: &[u8],
        refund: Address,
    ) -> Result<H256, ChainError> {
        let sender = wallet.address();
        let mut st = self.lock();
        st.require_alive(target)?;
        let mut body = target.0.to_vec();
        body.extend(calldata);
        let (_, tx_id) = st.next_tx(sender, &body)?;
        if let Some(c) = st.contracts.get_mut(&target) {
            c.alive = false;
        }
        let remaining = st.balances.remove(&target).unwrap_or(0);
        *st.balances.entry(refund).or_insert(0) += remaining;
        let (selector, args) = split_selector(calldata);
        st.record(
            LogEntry {
                kind: LogKind::Destroy,
                caller: sender,
                target,
                selector,
                args,
                refund: Some(refund),
                tx_id,
            },
            None,
        );
        Ok(tx_id)
    }

    fn get_receipt(&self, tx: &H256) -> Result<Option<TxReceipt>, ChainError> {
        Ok(self.lock().receipts.get(tx).cloned())
    }

    fn balance_of(&self, address: Address) -> Result<u128, ChainError> {
        Ok(self.lock().balances.get(&address).copied().unwrap_or(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wallet() -> SigningWallet {
        SigningWallet::from_bytes(&[7u8; 32]).unwrap()
    }

    #[test]
    fn addresses_follow_sender_and_nonce() {
        let chain = MockChain::new();
        let w = wallet();
        let a = chain.deploy(&w, &[1]).unwrap();
        let b = chain.deploy(&w, &[1]).unwrap();
        assert_eq!(a.address, mock_address(w.address(), 0));
        assert_eq!(b.address, mock_address(w.address(), 1));
        assert_ne!(a.address, b.address);
        assert_ne!(a.tx_id, b.tx_id);
        assert_eq!(
            chain
                .get_receipt(&a.tx_id)
                .unwrap()
                .unwrap()
                .contract_address,
            Some(a.address)
        );
    }

    #[test]
    fn destroyed_target_rejects_calls_and_refunds() {
        let chain = MockChain::new();
        let w = wallet();
        let c = chain.deploy(&w, &[1]).unwrap().address;
        chain.set_balance(c, 50);
        let refund = Address([9; 20]);
        chain
            .destroy(&w, c, &[0xaa, 0xbb, 0xcc, 0xdd], refund)
            .unwrap();
        assert!(!chain.is_alive(c));
        assert_eq!(chain.balance_of(refund).unwrap(), 50);
        let err = chain.call(&w, c, &[1, 2, 3, 4]).unwrap_err();
        assert_eq!(err.to_string(), format!("target not alive: {c}"));
        assert_eq!(chain.call_log().last().unwrap().refund, Some(refund));
    }

    #[test]
    fn unknown_target_and_empty_payload() {
        let chain = MockChain::new();
        assert!(matches!(
            chain.call(&wallet(), Address([1; 20]), &[]),
            Err(ChainError::NotAlive(_))
        ));
        assert_eq!(
            chain.deploy(&wallet(), &[]).unwrap_err(),
            ChainError::EmptyPayload
        );
    }

    #[test]
    fn injected_failure_stops_everything() {
        let chain = MockChain::new();
        chain.fail_after(1);
        chain.deploy(&wallet(), &[1]).unwrap();
        assert_eq!(
            chain.deploy(&wallet(), &[1]).unwrap_err(),
            ChainError::Injected(1)
        );
        assert_eq!(chain.call_log().len(), 1);
        chain.clear_failure();
        chain.deploy(&wallet(), &[1]).unwrap();
    }

    #[test]
    fn snapshot_restores_nonces_and_code() {
        let chain = MockChain::new();
        let w = wallet();
        let first = chain.deploy(&w, &[1]).unwrap();
        let again = MockChain::restore(&chain.snapshot()).unwrap();
        assert!(again.is_alive(first.address));
        assert_eq!(
            again.deploy(&w, &[1]).unwrap().address,
            mock_address(w.address(), 1)
        );
        assert_eq!(again.call_log()[0], chain.call_log()[0]);
    }

    #[test]
    fn fixed_chain_id() {
        let info = MockChain::new()
            .check_endpoint(&NetworkProps::default())
            .unwrap();
        assert_eq!(
            info,
            EndpointInfo {
                reachable: true,
                chain_id: 1337
            }
        );
    }
}
