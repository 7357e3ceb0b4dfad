// SPDX-License-Identifier: Apache-2.0

//! Generators for bytecode with link markers and for typed ABI values.

use katena_core::linker::abi::{AbiType, AbiValue};
use katena_core::primitives::Address;
use num_bigint::{BigInt, BigUint};
use proptest::prelude::*;

use super::keccak;

pub const LIBRARIES: &[&str] = &[
    "contracts/Math.sol:Math",
    "contracts/Utils.sol:Utils",
    "lib/SafeCast.sol:SafeCast",
    "a/b/c.sol:Deep",
];

/// Hex segments with library markers spliced between them. The marker is
/// built from the tiny-keccak digest, not the library's own helper.
pub fn arb_bytecode() -> impl Strategy<Value = (String, Vec<usize>)> {
    prop::collection::vec(
        (
            prop::collection::vec(any::<u8>(), 0..40),
            prop::option::of(0..LIBRARIES.len()),
        ),
        1..12,
    )
    .prop_map(|parts| {
        let mut code = String::new();
        let mut used = Vec::new();
        for (bytes, lib) in parts {
            code.push_str(&hex::encode(bytes));
            if let Some(i) = lib {
                let digest = hex::encode(keccak(LIBRARIES[i].as_bytes()));
                code.push_str(&format!("__${}$__", &digest[..34]));
                used.push(i);
            }
        }
        (code, used)
    })
}

pub fn arb_type() -> impl Strategy<Value = AbiType> {
    let bits = (1u16..=32).prop_map(|n| n * 8);
    let leaf = prop_oneof![
        bits.clone().prop_map(AbiType::Uint),
        bits.prop_map(AbiType::Int),
        Just(AbiType::Address),
        Just(AbiType::Bool),
        Just(AbiType::Bytes),
        Just(AbiType::String),
        (1u8..=32).prop_map(AbiType::FixedBytes),
    ];
    leaf.prop_recursive(2, 12, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|t| AbiType::Array(Box::new(t))),
            (inner.clone(), 1usize..4).prop_map(|(t, n)| AbiType::FixedArray(Box::new(t), n)),
            prop::collection::vec(inner, 1..4).prop_map(AbiType::Tuple),
        ]
    })
}

pub fn arb_value(ty: AbiType) -> BoxedStrategy<AbiValue> {
    match ty {
        AbiType::Uint(bits) => prop::collection::vec(any::<u8>(), bits as usize / 8)
            .prop_map(move |b| AbiValue::Uint(bits, BigUint::from_bytes_be(&b)))
            .boxed(),
        AbiType::Int(bits) => prop::collection::vec(any::<u8>(), bits as usize / 8)
            .prop_map(move |b| AbiValue::Int(bits, BigInt::from_signed_bytes_be(&b)))
            .boxed(),
        AbiType::Address => any::<[u8; 20]>()
            .prop_map(|a| AbiValue::Address(Address(a)))
            .boxed(),
        AbiType::Bool => any::<bool>().prop_map(AbiValue::Bool).boxed(),
        AbiType::Bytes => prop::collection::vec(any::<u8>(), 0..70)
            .prop_map(AbiValue::Bytes)
            .boxed(),
        AbiType::String => ".{0,40}".prop_map(AbiValue::String).boxed(),
        AbiType::FixedBytes(n) => prop::collection::vec(any::<u8>(), n as usize)
            .prop_map(AbiValue::FixedBytes)
            .boxed(),
        AbiType::Array(inner) => prop::collection::vec(arb_value(*inner.clone()), 0..4)
            .prop_map(move |vs| AbiValue::Array(*inner.clone(), vs))
            .boxed(),
        AbiType::FixedArray(inner, n) => prop::collection::vec(arb_value(*inner.clone()), n)
            .prop_map(move |vs| AbiValue::FixedArray(*inner.clone(), vs))
            .boxed(),
        AbiType::Tuple(items) => items
            .into_iter()
            .map(arb_value)
            .collect::<Vec<_>>()
            .prop_map(AbiValue::Tuple)
            .boxed(),
    }
}

pub fn arb_values() -> impl Strategy<Value = (Vec<AbiType>, Vec<AbiValue>)> {
    prop::collection::vec(arb_type(), 1..5).prop_flat_map(|types| {
        let values: Vec<_> = types.iter().cloned().map(arb_value).collect();
        (Just(types), values)
    })
}
