// SPDX-License-Identifier: Apache-2.0

//! Legacy (pre-1559) transactions with replay-protected signatures.

use rlp::RlpStream;

use super::SigningWallet;
use crate::primitives::{keccak256, Address};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LegacyTransaction {
    pub nonce: u64,
    pub gas_price: u128,
    pub gas_limit: u64,
    /// `None` creates a contract.
    pub to: Option<Address>,
    pub value: u128,
    pub data: Vec<u8>,
    pub chain_id: u64,
}

fn trim_leading_zeros(bytes: &[u8]) -> &[u8] {
    let first = bytes.iter().position(|b| *b != 0).unwrap_or(bytes.len());
    &bytes[first..]
}

impl LegacyTransaction {
    fn append_body(&self, s: &mut RlpStream) {
        s.append(&self.nonce);
        s.append(&self.gas_price);
        s.append(&self.gas_limit);
        match &self.to {
            Some(to) => s.append(&to.0.as_slice()),
            None => s.append_empty_data(),
        };
        s.append(&self.value);
        s.append(&self.data);
    }

    /// Digest that gets signed: the body followed by (chainId, 0, 0).
    pub fn signing_hash(&self) -> [u8; 32] {
        let mut s = RlpStream::new_list(9);
        self.append_body(&mut s);
        s.append(&self.chain_id);
        s.append_empty_data();
        s.append_empty_data();
        keccak256(s.out())
    }

    pub fn sign(&self, wallet: &SigningWallet) -> Vec<u8> {
        let (r, sig_s, recid) = wallet.sign_digest(&self.signing_hash());
        let v = u64::from(recid) + self.chain_id * 2 + 35;
        let mut s = RlpStream::new_list(9);
        self.append_body(&mut s);
        s.append(&v);
        s.append(&trim_leading_zeros(&r));
        s.append(&trim_leading_zeros(&sig_s));
        s.out().to_vec()
    }
}
