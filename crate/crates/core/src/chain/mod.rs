// SPDX-License-Identifier: Apache-2.0

//! Blockchain endpoints: an in-memory mock and a JSON-RPC client.

mod mock;
mod rpc;
mod tx;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::NetworkProps;
use crate::primitives::{decode_hex, keccak256, Address, H256};

pub use mock::{mock_address, LogEntry, LogKind, MockChain, MOCK_CHAIN_ID};
pub use rpc::{RpcAuth, RpcBackend, RpcConfig};
pub use tx::LegacyTransaction;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("endpoint {url} unreachable: {reason}")]
    Unreachable { url: String, reason: String },
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("endpoint rejected the provider credentials")]
    AuthRejected,
    #[error("endpoint reports chain id {actual}, model expects {expected}")]
    ChainIdMismatch { expected: u64, actual: u64 },
    #[error("target not alive: {0}")]
    NotAlive(Address),
    #[error("transaction reverted: {0}")]
    Reverted(String),
    #[error("json-rpc error {code}: {message}")]
    Rpc { code: i64, message: String },
    #[error("malformed endpoint response: {0}")]
    BadResponse(String),
    #[error("deploy payload is empty")]
    EmptyPayload,
    #[error("invalid private key: {0}")]
    InvalidKey(String),
    #[error("injected failure after {0} transactions")]
    Injected(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EndpointInfo {
    pub reachable: bool,
    pub chain_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Deployed {
    pub address: Address,
    pub tx_id: H256,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TxReceipt {
    pub tx_id: H256,
    pub success: bool,
    pub contract_address: Option<Address>,
}

/// A blockchain endpoint. Implementations serialize their own state; the
/// orchestrator may call them from several threads in parallel mode.
pub trait ChainBackend: Send + Sync {
    fn check_endpoint(&self, network: &NetworkProps) -> Result<EndpointInfo, ChainError>;
    fn deploy(&self, wallet: &SigningWallet, payload: &[u8]) -> Result<Deployed, ChainError>;
    fn call(
        &self,
        wallet: &SigningWallet,
        target: Address,
        calldata: &[u8],
    ) -> Result<H256, ChainError>;
    /// A call that ends the target's life; `refund` is the beneficiary the
    /// calldata already names, passed separately for bookkeeping.
    fn destroy(
        &self,
        wallet: &SigningWallet,
        target: Address,
        calldata: &[u8],
        refund: Address,
    ) -> Result<H256, ChainError>;
    fn get_receipt(&self, tx: &H256) -> Result<Option<TxReceipt>, ChainError>;
    fn balance_of(&self, address: Address) -> Result<u128, ChainError>;
}

fn check_chain_id(network: &NetworkProps, actual: u64) -> Result<EndpointInfo, ChainError> {
    match network.chain_id {
        Some(expected) if expected != actual => {
            Err(ChainError::ChainIdMismatch { expected, actual })
        }
        _ => Ok(EndpointInfo {
            reachable: true,
            chain_id: actual,
        }),
    }
}

/// secp256k1 signing key with its derived account address.
#[derive(Clone)]
pub struct SigningWallet {
    key: k256::ecdsa::SigningKey,
    address: Address,
}

impl std::fmt::Debug for SigningWallet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SigningWallet")
            .field("address", &self.address)
            .finish_non_exhaustive()
    }
}

impl SigningWallet {
    pub fn from_hex(private_key: &str) -> Result<Self, ChainError> {
        let bytes =
            decode_hex(private_key.trim()).map_err(|e| ChainError::InvalidKey(e.to_string()))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ChainError> {
        let key = k256::ecdsa::SigningKey::from_slice(bytes)
            .map_err(|e| ChainError::InvalidKey(e.to_string()))?;
        let point = key.verifying_key().to_encoded_point(false);
        let hash = keccak256(&point.as_bytes()[1..]);
        let mut address = [0u8; 20];
        address.copy_from_slice(&hash[12..]);
        Ok(SigningWallet {
            key,
            address: Address(address),
        })
    }

    pub fn address(&self) -> Address {
        self.address
    }

    /// Recoverable signature over a 32-byte digest: (r, s, recovery id).
    pub fn sign_digest(&self, digest: &[u8; 32]) -> ([u8; 32], [u8; 32], u8) {
        let (sig, recid) = self
            .key
            .sign_prehash_recoverable(digest)
            .expect("32-byte prehash is always signable");
        let (r, s) = sig.split_bytes();
        (r.into(), s.into(), recid.to_byte())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wallet_address_from_known_key() {
        // Key 1 maps to the generator point's well-known account.
        let mut key = [0u8; 32];
        key[31] = 1;
        let w = SigningWallet::from_bytes(&key).unwrap();
        assert_eq!(
            w.address().to_string(),
            "0x7e5f4552091a69125d5dfcb7b8c2659029395bdf"
        );
        assert!(!format!("{w:?}").contains("key"));
        assert!(SigningWallet::from_bytes(&[0u8; 32]).is_err());
        assert!(SigningWallet::from_hex("0x12").is_err());
    }

    #[test]
    fn chain_id_expectation() {
        let mut net = NetworkProps::default();
        assert_eq!(check_chain_id(&net, 5).unwrap().chain_id, 5);
        net.chain_id = Some(1);
        assert_eq!(
            check_chain_id(&net, 5).unwrap_err(),
            ChainError::ChainIdMismatch {
                expected: 1,
                actual: 5
            }
        );
    }
}
