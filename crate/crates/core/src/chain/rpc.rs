// SPDX-License-Identifier: Apache-2.0

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::{
    check_chain_id, ChainBackend, ChainError, Deployed, EndpointInfo, LegacyTransaction,
    SigningWallet, TxReceipt,
};
use crate::model::NetworkProps;
use crate::primitives::{Address, H256};

/// How a provider secret is presented.
#[derive(Clone, Default)]
pub enum RpcAuth {
    #[default]
    None,
    Bearer(String),
    /// Appended to the URL as a path segment, as most providers expect.
    UrlSuffix(String),
}

impl std::fmt::Debug for RpcAuth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RpcAuth::None => "None",
            RpcAuth::Bearer(_) => "Bearer(<redacted>)",
            RpcAuth::UrlSuffix(_) => "UrlSuffix(<redacted>)",
        })
    }
}

#[derive(Debug, Clone)]
pub struct RpcConfig {
    pub url: String,
    pub auth: RpcAuth,
    pub gas_price: u128,
    pub gas_limit: u64,
    pub connect_timeout: Duration,
    pub read_timeout: Duration,
    pub poll_interval: Duration,
    pub max_polls: u32,
}

impl RpcConfig {
    pub fn new(url: impl Into<String>) -> Self {
        RpcConfig {
            url: url.into(),
            auth: RpcAuth::None,
            gas_price: 20_000_000_000,
            gas_limit: 6_000_000,
            connect_timeout: Duration::from_secs(5),
            read_timeout: Duration::from_secs(30),
            poll_interval: Duration::from_millis(500),
            max_polls: 120,
        }
    }

    fn endpoint(&self) -> String {
        match &self.auth {
            RpcAuth::UrlSuffix(secret) => format!("{}/{}", self.url.trim_end_matches('/'), secret),
            _ => self.url.clone(),
        }
    }
}

/// JSON-RPC 2.0 client sending signed legacy transactions.
#[derive(Debug)]
pub struct RpcBackend {
    config: RpcConfig,
    client: Client,
    next_id: AtomicU64,
    chain_id: OnceLock<u64>,
    /// Held while a nonce is fetched and its transaction submitted.
    send_lock: Mutex<()>,
}

fn quantity(v: &Value) -> Result<u128, ChainError> {
    let s = v
        .as_str()
        .ok_or_else(|| ChainError::BadResponse(format!("expected hex quantity, got {v}")))?;
    let digits = s.strip_prefix("0x").unwrap_or(s);
    if digits.is_empty() {
        return Ok(0);
    }
    u128::from_str_radix(digits, 16).map_err(|e| ChainError::BadResponse(format!("{s}: {e}")))
}

fn hex_data(bytes: &[u8]) -> String {
    format!("0x{}", hex::encode(bytes))
}

impl RpcBackend {
    pub fn new(config: RpcConfig) -> Result<Self, ChainError> {
        let client = Client::builder()
            .connect_timeout(config.connect_timeout)
            .timeout(config.read_timeout)
            .build()
            .map_err(|e| ChainError::Unreachable {
                url: config.url.clone(),
                reason: e.to_string(),
            })?;
        Ok(RpcBackend {
            config,
            client,
            next_id: AtomicU64::new(1),
            chain_id: OnceLock::new(),
            send_lock: Mutex::new(()),
        })
    }

    fn rpc(&self, method: &str, params: Value) -> Result<Value, ChainError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let body = json!({"jsonrpc": "2.0", "id": id, "method": method, "params": params});
        let mut req = self
            .client
            .post(self.config.endpoint())
            .header("content-type", "application/json");
        if let RpcAuth::Bearer(token) = &self.config.auth {
            req = req.bearer_auth(token);
        }
        let resp = req.body(body.to_string()).send().map_err(|e| {
            if e.is_timeout() {
                ChainError::Timeout(format!("{method}: {e}"))
            } else {
                ChainError::Unreachable {
                    url: self.config.url.clone(),
                    reason: e.to_string(),
                }
            }
        })?;
        if matches!(
            resp.status(),
            StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN
        ) {
            return Err(ChainError::AuthRejected);
        }
        let text = resp
            .text()
            .map_err(|e| ChainError::BadResponse(e.to_string()))?;
        let mut reply: Value = serde_json::from_str(&text)
            .map_err(|e| ChainError::BadResponse(format!("{method}: {e}")))?;
        if let Some(err) = reply.get("error") {
            return Err(ChainError::Rpc {
                code: err.get("code").and_then(Value::as_i64).unwrap_or(0),
                message: err
                    .get("message")
                    .and_then(Value::as_str)
                    .unwrap_or("")
                    .to_string(),
            });
        }
        reply
            .get_mut("result")
            .map(Value::take)
            .ok_or_else(|| ChainError::BadResponse(format!("{method}: no result")))
    }

    fn chain_id(&self) -> Result<u64, ChainError> {
        if let Some(id) = self.chain_id.get() {
            return Ok(*id);
        }
        let id = u64::try_from(quantity(&self.rpc("eth_chainId", json!([]))?)?)
            .map_err(|_| ChainError::BadResponse("chain id out of range".into()))?;
        Ok(*self.chain_id.get_or_init(|| id))
    }

    fn require_code(&self, target: Address) -> Result<(), ChainError> {
        let code = self.rpc("eth_getCode", json!([target.to_string(), "latest"]))?;
        match code.as_str() {
            Some("0x") | Some("") | None => Err(ChainError::NotAlive(target)),
            Some(_) => Ok(()),
        }
    }

    /// Dry run so reverts surface before a transaction is paid for.
    fn simulate(
        &self,
        wallet: &SigningWallet,
        target: Address,
        calldata: &[u8],
    ) -> Result<(), ChainError> {
        let call = json!({"from": wallet.address().to_string(), "to": target.to_string(), "data": hex_data(calldata)});
        match self.rpc("eth_call", json!([call, "latest"])) {
            Err(ChainError::Rpc { message, .. }) => Err(ChainError::Reverted(message)),
            other => other.map(|_| ()),
        }
    }

    fn send(
        &self,
        wallet: &SigningWallet,
        to: Option<Address>,
        data: &[u8],
    ) -> Result<TxReceipt, ChainError> {
        let chain_id = self.chain_id()?;
        let tx_id = {
            let _guard = self.send_lock.lock().unwrap_or_else(|e| e.into_inner());
            let nonce = quantity(&self.rpc(
                "eth_getTransactionCount",
                json!([wallet.address().to_string(), "pending"]),
            )?)?;
            let tx = LegacyTransaction {
                nonce: u64::try_from(nonce)
                    .map_err(|_| ChainError::BadResponse("nonce out of range".into()))?,
                gas_price: self.config.gas_price,
                gas_limit: self.config.gas_limit,
                to,
                value: 0,
                data: data.to_vec(),
                chain_id,
            };
            let hash = self.rpc(
                "eth_sendRawTransaction",
                json!([hex_data(&tx.sign(wallet))]),
            )?;
            hash.as_str()
                .and_then(|s| s.parse::<H256>().ok())
                .ok_or_else(|| ChainError::BadResponse(format!("transaction hash {hash}")))?
        };
        for attempt in 0..self.config.max_polls {
            if attempt > 0 {
                std::thread::sleep(self.config.poll_interval);
            }
            if let Some(receipt) = self.get_receipt(&tx_id)? {
                if !receipt.success {
                    return Err(ChainError::Reverted(format!("status 0 in {tx_id}")));
                }
                return Ok(receipt);
            }
        }
        Err(ChainError::Timeout(format!("no receipt for {tx_id}")))
    }
}

impl ChainBackend for RpcBackend {
    fn check_endpoint(&self, network: &NetworkProps) -> Result<EndpointInfo, ChainError> {
        check_chain_id(network, self.chain_id()?)
    }

    fn deploy(&self, wallet: &SigningWallet, payload: &[u8]) -> Result<Deployed, ChainError> {
        if payload.is_empty() {
            return Err(ChainError::EmptyPayload);
        }
        let receipt = self.send(wallet, None, payload)?;
        let address = receipt.contract_address.ok_or_else(|| {
            ChainError::BadResponse("deploy receipt lacks contractAddress".into())
        })?;
        Ok(Deployed {
            address,
            tx_id: receipt.tx_id,
        })
    }

    fn call(
        &self,
        wallet: &SigningWallet,
        target: Address,
        calldata: &[u8],
    ) -> Result<H256, ChainError> {
        self.require_code(target)?;
        self.simulate(wallet, target, calldata)?;
        Ok(self.send(wallet, Some(target), calldata)?.tx_id)
    }

    fn destroy(
        &self,
        wallet: &SigningWallet,
        target: Address,
        calldata: &[u8],
        refund: Address,
    ) -> Result<H256, ChainError> {
        log::info!("destroying {target}, refund to {refund}");
        self.call(wallet, target, calldata)
    }

    fn get_receipt(&self, tx: &H256) -> Result<Option<TxReceipt>, ChainError> {
        let r = self.rpc("eth_getTransactionReceipt", json!([tx.to_string()]))?;
        if r.is_null() {
            return Ok(None);
        }
        let success = quantity(r.get("status").unwrap_or(&json!("0x1")))? == 1;
        let contract_address = match r.get("contractAddress").and_then(Value::as_str) {
            // Checksummed or lowercase; the checksum is not ours to enforce.
            Some(s) => Some(
                s.parse::<Address>()
                    .map_err(|e| ChainError::BadResponse(format!("contractAddress: {e}")))?,
            ),
            None => None,
        };
        Ok(Some(TxReceipt {
            tx_id: *tx,
            success,
            contract_address,
        }))
    }

    fn balance_of(&self, address: Address) -> Result<u128, ChainError> {
        quantity(&self.rpc("eth_getBalance", json!([address.to_string(), "latest"]))?)
    }
}
