// SPDX-License-Identifier: Apache-2.0

//! Solidity ABI types, values and the standard head/tail encoding.
//!
//! Supported: `uint<N>`, `int<N>`, `address`, `bool`, `bytes`, `bytes<N>`,
//! `string`, fixed and dynamic arrays, and tuples (needed for the
//! `diamondCut` facet-cut struct array).

use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Signed, ToPrimitive};
use thiserror::Error;

use crate::primitives::Address;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AbiError {
    #[error("unsupported or malformed ABI type `{0}`")]
    BadType(String),
    #[error("value out of range for `{ty}`: {value}")]
    OutOfRange { ty: String, value: String },
    #[error("cannot coerce {literal} to `{ty}`: {reason}")]
    Coercion {
        literal: String,
        ty: String,
        reason: String,
    },
    #[error("{0} arguments given for {1} parameters")]
    Arity(usize, usize),
    #[error("argument {index} has type `{actual}`, expected `{expected}`")]
    TypeMismatch {
        index: usize,
        expected: String,
        actual: String,
    },
    #[error("ABI data truncated or malformed at offset {0}")]
    Decode(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AbiType {
    Uint(u16),
    Int(u16),
    Address,
    Bool,
    Bytes,
    FixedBytes(u8),
    String,
    Array(Box<AbiType>),
    FixedArray(Box<AbiType>, usize),
    Tuple(Vec<AbiType>),
}

impl AbiType {
    pub fn is_dynamic(&self) -> bool {
        match self {
            AbiType::Bytes | AbiType::String | AbiType::Array(_) => true,
            AbiType::FixedArray(inner, _) => inner.is_dynamic(),
            AbiType::Tuple(items) => items.iter().any(AbiType::is_dynamic),
            _ => false,
        }
    }

    /// Size of the head slot(s) this type occupies when static.
    fn head_size(&self) -> usize {
        if self.is_dynamic() {
            return 32;
        }
        match self {
            AbiType::FixedArray(inner, n) => inner.head_size() * n,
            AbiType::Tuple(items) => items.iter().map(AbiType::head_size).sum(),
            _ => 32,
        }
    }

    /// Parses a type as written in ABI JSON. Tuples must be given with
    /// their components inline, e.g. `(address,uint8,bytes4[])[]`.
    pub fn parse(s: &str) -> Result<Self, AbiError> {
        let s = s.trim();
        let bad = || AbiError::BadType(s.to_string());
        if let Some(body) = s.strip_suffix(']') {
            let open = body.rfind('[').ok_or_else(bad)?;
            let inner = AbiType::parse(&body[..open])?;
            let dim = &body[open + 1..];
            return if dim.is_empty() {
                Ok(AbiType::Array(Box::new(inner)))
            } else {
                let n: usize = dim.parse().map_err(|_| bad())?;
                if n == 0 {
                    return Err(bad());
                }
                Ok(AbiType::FixedArray(Box::new(inner), n))
            };
        }
        if let Some(body) = s.strip_prefix('(') {
            let body = body.strip_suffix(')').ok_or_else(bad)?;
            return split_top_level(body)
                .into_iter()
                .map(AbiType::parse)
                .collect::<Result<Vec<_>, _>>()
                .map(AbiType::Tuple);
        }
        match s {
            "address" => return Ok(AbiType::Address),
            "bool" => return Ok(AbiType::Bool),
            "bytes" => return Ok(AbiType::Bytes),
            "string" => return Ok(AbiType::String),
            "uint" => return Ok(AbiType::Uint(256)),
            "int" => return Ok(AbiType::Int(256)),
            _ => {}
        }
        let int_bits = |digits: &str| -> Result<u16, AbiError> {
            let bits: u16 = digits.parse().map_err(|_| bad())?;
            if bits == 0 || bits > 256 || !bits.is_multiple_of(8) || digits.starts_with('0') {
                return Err(bad());
            }
            Ok(bits)
        };
        if let Some(d) = s.strip_prefix("uint") {
            return int_bits(d).map(AbiType::Uint);
        }
        if let Some(d) = s.strip_prefix("int") {
            return int_bits(d).map(AbiType::Int);
        }
        if let Some(d) = s.strip_prefix("bytes") {
            let n: u8 = d.parse().map_err(|_| bad())?;
            if n == 0 || n > 32 || d.starts_with('0') {
                return Err(bad());
            }
            return Ok(AbiType::FixedBytes(n));
        }
        Err(bad())
    }
}

fn split_top_level(s: &str) -> Vec<&str> {
    if s.trim().is_empty() {
        return Vec::new();
    }
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

/// Canonical spelling: no spaces, `uint` expanded to `uint256`.
impl fmt::Display for AbiType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbiType::Uint(bits) => write!(f, "uint{bits}"),
            AbiType::Int(bits) => write!(f, "int{bits}"),
            AbiType::Address => f.write_str("address"),
            AbiType::Bool => f.write_str("bool"),
            AbiType::Bytes => f.write_str("bytes"),
            AbiType::FixedBytes(n) => write!(f, "bytes{n}"),
            AbiType::String => f.write_str("string"),
            AbiType::Array(inner) => write!(f, "{inner}[]"),
            AbiType::FixedArray(inner, n) => write!(f, "{inner}[{n}]"),
            AbiType::Tuple(items) => {
                f.write_str("(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl FromStr for AbiType {
    type Err = AbiError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AbiType::parse(s)
    }
}

/// A typed ABI value. Array variants carry their element type so that empty
/// arrays still know what they are.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AbiValue {
    Uint(u16, BigUint),
    Int(u16, BigInt),
    Address(Address),
    Bool(bool),
    Bytes(Vec<u8>),
    FixedBytes(Vec<u8>),
    String(String),
    Array(AbiType, Vec<AbiValue>),
    FixedArray(AbiType, Vec<AbiValue>),
    Tuple(Vec<AbiValue>),
}

impl AbiValue {
    pub fn uint256(v: u64) -> Self {
        AbiValue::Uint(256, BigUint::from(v))
    }

    pub fn abi_type(&self) -> AbiType {
        match self {
            AbiValue::Uint(bits, _) => AbiType::Uint(*bits),
            AbiValue::Int(bits, _) => AbiType::Int(*bits),
            AbiValue::Address(_) => AbiType::Address,
            AbiValue::Bool(_) => AbiType::Bool,
            AbiValue::Bytes(_) => AbiType::Bytes,
            AbiValue::FixedBytes(b) => AbiType::FixedBytes(b.len() as u8),
            AbiValue::String(_) => AbiType::String,
            AbiValue::Array(elem, _) => AbiType::Array(Box::new(elem.clone())),
            AbiValue::FixedArray(elem, items) => {
                AbiType::FixedArray(Box::new(elem.clone()), items.len())
            }
            AbiValue::Tuple(items) => {
                AbiType::Tuple(items.iter().map(AbiValue::abi_type).collect())
            }
        }
    }

    /// Checks ranges and nested element types.
    pub fn check(&self) -> Result<(), AbiError> {
        let out_of_range = |v: &dyn fmt::Display| AbiError::OutOfRange {
            ty: self.abi_type().to_string(),
            value: v.to_string(),
        };
        match self {
            AbiValue::Uint(bits, v) => {
                if v.bits() > u64::from(*bits) {
                    return Err(out_of_range(v));
                }
            }
            AbiValue::Int(bits, v) => {
                let limit = BigInt::one() << (*bits as usize - 1);
                if *v >= limit || *v < -limit {
                    return Err(out_of_range(v));
                }
            }
            AbiValue::FixedBytes(b) => {
                if b.is_empty() || b.len() > 32 {
                    return Err(out_of_range(&format!("{} bytes", b.len())));
                }
            }
            AbiValue::Array(elem, items) | AbiValue::FixedArray(elem, items) => {
                for item in items {
                    if &item.abi_type() != elem {
                        return Err(AbiError::TypeMismatch {
                            index: 0,
                            expected: elem.to_string(),
                            actual: item.abi_type().to_string(),
                        });
                    }
                    item.check()?;
                }
            }
            AbiValue::Tuple(items) => items.iter().try_for_each(AbiValue::check)?,
            _ => {}
        }
        Ok(())
    }
}

fn word_from_biguint(v: &BigUint) -> [u8; 32] {
    let bytes = v.to_bytes_be();
    let mut word = [0u8; 32];
    word[32 - bytes.len()..].copy_from_slice(&bytes);
    word
}

fn word_from_usize(v: usize) -> [u8; 32] {
    word_from_biguint(&BigUint::from(v))
}

fn padded(bytes: &[u8]) -> Vec<u8> {
    let mut out = bytes.to_vec();
    let rem = out.len() % 32;
    if rem != 0 {
        out.resize(out.len() + 32 - rem, 0);
    }
    out
}

/// Encodes `values` as the components of a tuple: heads followed by tails.
/// This is the encoding of both constructor arguments and call arguments.
pub fn encode(values: &[AbiValue]) -> Result<Vec<u8>, AbiError> {
    for v in values {
        v.check()?;
    }
    Ok(encode_sequence(values))
}

fn encode_sequence(values: &[AbiValue]) -> Vec<u8> {
    let head_len: usize = values.iter().map(|v| v.abi_type().head_size()).sum();
    let mut head = Vec::with_capacity(head_len);
    let mut tail = Vec::new();
    for v in values {
        if v.abi_type().is_dynamic() {
            head.extend_from_slice(&word_from_usize(head_len + tail.len()));
            tail.extend(encode_single(v));
        } else {
            head.extend(encode_single(v));
        }
    }
    head.extend(tail);
    head
}

fn encode_single(value: &AbiValue) -> Vec<u8> {
    match value {
        AbiValue::Uint(_, v) => word_from_biguint(v).to_vec(),
        AbiValue::Int(_, v) => {
            let mut word = if v.is_negative() {
                [0xffu8; 32]
            } else {
                [0u8; 32]
            };
            let bytes = v.to_signed_bytes_be();
            word[32 - bytes.len()..].copy_from_slice(&bytes);
            word.to_vec()
        }
        AbiValue::Address(a) => {
            let mut word = [0u8; 32];
            word[12..].copy_from_slice(a.as_bytes());
            word.to_vec()
        }
        AbiValue::Bool(b) => word_from_usize(usize::from(*b)).to_vec(),
        AbiValue::FixedBytes(b) => padded(b),
        AbiValue::Bytes(b) => {
            let mut out = word_from_usize(b.len()).to_vec();
            out.extend(padded(b));
            out
        }
        AbiValue::String(s) => encode_single(&AbiValue::Bytes(s.as_bytes().to_vec())),
        AbiValue::Array(_, items) => {
            let mut out = word_from_usize(items.len()).to_vec();
            out.extend(encode_sequence(items));
            out
        }
        AbiValue::FixedArray(_, items) | AbiValue::Tuple(items) => encode_sequence(items),
    }
}

/// Decodes `data` as a tuple of `types`. Used by the mock chain to read
/// diamond cuts, and by tests for round-trip checks.
pub fn decode(types: &[AbiType], data: &[u8]) -> Result<Vec<AbiValue>, AbiError> {
    decode_sequence(types, data, 0)
}

fn read_word(data: &[u8], at: usize) -> Result<&[u8; 32], AbiError> {
    data.get(at..at + 32)
        .and_then(|s| s.try_into().ok())
        .ok_or(AbiError::Decode(at))
}

fn read_usize(data: &[u8], at: usize) -> Result<usize, AbiError> {
    BigUint::from_bytes_be(read_word(data, at)?)
        .to_usize()
        .filter(|n| *n <= data.len())
        .ok_or(AbiError::Decode(at))
}

fn decode_sequence(types: &[AbiType], data: &[u8], base: usize) -> Result<Vec<AbiValue>, AbiError> {
    let mut out = Vec::with_capacity(types.len());
    let mut cursor = base;
    for ty in types {
        if ty.is_dynamic() {
            let offset = read_usize(data, cursor)?;
            out.push(decode_single(ty, data, base + offset)?);
        } else {
            out.push(decode_single(ty, data, cursor)?);
        }
        cursor += ty.head_size();
    }
    Ok(out)
}

fn decode_single(ty: &AbiType, data: &[u8], at: usize) -> Result<AbiValue, AbiError> {
    let value = match ty {
        AbiType::Uint(bits) => AbiValue::Uint(*bits, BigUint::from_bytes_be(read_word(data, at)?)),
        AbiType::Int(bits) => {
            AbiValue::Int(*bits, BigInt::from_signed_bytes_be(read_word(data, at)?))
        }
        AbiType::Address => {
            let word = read_word(data, at)?;
            if word[..12].iter().any(|b| *b != 0) {
                return Err(AbiError::Decode(at));
            }
            AbiValue::Address(Address::from_word(word))
        }
        AbiType::Bool => match BigUint::from_bytes_be(read_word(data, at)?).to_u8() {
            Some(0) => AbiValue::Bool(false),
            Some(1) => AbiValue::Bool(true),
            _ => return Err(AbiError::Decode(at)),
        },
        AbiType::FixedBytes(n) => {
            AbiValue::FixedBytes(read_word(data, at)?[..*n as usize].to_vec())
        }
        AbiType::Bytes | AbiType::String => {
            let len = read_usize(data, at)?;
            let bytes = data
                .get(at + 32..at + 32 + len)
                .ok_or(AbiError::Decode(at))?
                .to_vec();
            if *ty == AbiType::Bytes {
                AbiValue::Bytes(bytes)
            } else {
                AbiValue::String(String::from_utf8(bytes).map_err(|_| AbiError::Decode(at))?)
            }
        }
        AbiType::Array(inner) => {
            let len = read_usize(data, at)?;
            let types = vec![(**inner).clone(); len];
            AbiValue::Array((**inner).clone(), decode_sequence(&types, data, at + 32)?)
        }
        AbiType::FixedArray(inner, n) => {
            let types = vec![(**inner).clone(); *n];
            AbiValue::FixedArray((**inner).clone(), decode_sequence(&types, data, at)?)
        }
        AbiType::Tuple(items) => AbiValue::Tuple(decode_sequence(items, data, at)?),
    };
    value.check()?;
    Ok(value)
}

/// A scalar or list literal as written in a model file.
#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Bool(bool),
    Int(i128),
    Float(f64),
    Str(String),
    List(Vec<Literal>),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Int(i) => write!(f, "{i}"),
            Literal::Float(x) => write!(f, "{x}"),
            Literal::Str(s) => write!(f, "{s:?}"),
            Literal::List(items) => {
                f.write_str("[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str("]")
            }
        }
    }
}

fn parse_big_int(s: &str) -> Option<BigInt> {
    let s = s.trim().replace('_', "");
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest.to_string()),
        None => (false, s),
    };
    let magnitude = if let Some(h) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        BigUint::parse_bytes(h.as_bytes(), 16)?
    } else {
        if body.is_empty() || !body.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        BigUint::parse_bytes(body.as_bytes(), 10)?
    };
    Some(BigInt::from_biguint(
        if neg { Sign::Minus } else { Sign::Plus },
        magnitude,
    ))
}

/// Coerces a model literal to a value of the given ABI type. Non-integral
/// numbers are never rounded into integer types.
pub fn coerce(literal: &Literal, ty: &AbiType) -> Result<AbiValue, AbiError> {
    let fail = |reason: &str| AbiError::Coercion {
        literal: literal.to_string(),
        ty: ty.to_string(),
        reason: reason.to_string(),
    };
    let integer = || -> Result<BigInt, AbiError> {
        match literal {
            Literal::Int(i) => Ok(BigInt::from(*i)),
            Literal::Float(x) if x.fract() == 0.0 && x.is_finite() && x.abs() < 9.0e15 => {
                Ok(BigInt::from(*x as i64))
            }
            Literal::Float(_) => Err(fail(
                "non-integral number for an integer type; pre-scale it",
            )),
            Literal::Str(s) => parse_big_int(s).ok_or_else(|| fail("not an integer")),
            _ => Err(fail("not an integer")),
        }
    };
    let value = match ty {
        AbiType::Uint(bits) => {
            let v = integer()?;
            let v = v
                .to_biguint()
                .ok_or_else(|| fail("negative value for unsigned type"))?;
            AbiValue::Uint(*bits, v)
        }
        AbiType::Int(bits) => AbiValue::Int(*bits, integer()?),
        AbiType::Address => match literal {
            Literal::Str(s) => {
                AbiValue::Address(Address::parse_checked(s).map_err(|e| fail(&e.to_string()))?)
            }
            _ => return Err(fail("expected a 0x-prefixed address string")),
        },
        AbiType::Bool => match literal {
            Literal::Bool(b) => AbiValue::Bool(*b),
            Literal::Str(s) if s == "true" => AbiValue::Bool(true),
            Literal::Str(s) if s == "false" => AbiValue::Bool(false),
            _ => return Err(fail("expected a boolean")),
        },
        AbiType::Bytes | AbiType::FixedBytes(_) => {
            let Literal::Str(s) = literal else {
                return Err(fail("expected a 0x-prefixed hex string"));
            };
            if !s.starts_with("0x") {
                return Err(fail("expected a 0x-prefixed hex string"));
            }
            let bytes = crate::primitives::decode_hex(s).map_err(|e| fail(&e.to_string()))?;
            match ty {
                AbiType::FixedBytes(n) if bytes.len() != *n as usize => {
                    return Err(fail(&format!("expected exactly {n} bytes")))
                }
                AbiType::FixedBytes(_) => AbiValue::FixedBytes(bytes),
                _ => AbiValue::Bytes(bytes),
            }
        }
        // Scalars are taken in their written form.
        AbiType::String => match literal {
            Literal::Str(s) => AbiValue::String(s.clone()),
            Literal::Int(_) | Literal::Float(_) | Literal::Bool(_) => {
                AbiValue::String(literal.to_string())
            }
            Literal::List(_) => return Err(fail("expected a scalar")),
        },
        AbiType::Array(inner) => {
            let Literal::List(items) = literal else {
                return Err(fail("expected a list"));
            };
            let values = items
                .iter()
                .map(|i| coerce(i, inner))
                .collect::<Result<_, _>>()?;
            AbiValue::Array((**inner).clone(), values)
        }
        AbiType::FixedArray(inner, n) => {
            let Literal::List(items) = literal else {
                return Err(fail("expected a list"));
            };
            if items.len() != *n {
                return Err(fail(&format!("expected {n} elements, got {}", items.len())));
            }
            let values = items
                .iter()
                .map(|i| coerce(i, inner))
                .collect::<Result<_, _>>()?;
            AbiValue::FixedArray((**inner).clone(), values)
        }
        AbiType::Tuple(types) => {
            let Literal::List(items) = literal else {
                return Err(fail("expected a list for a tuple"));
            };
            if items.len() != types.len() {
                return Err(fail("tuple arity mismatch"));
            }
            let values = items
                .iter()
                .zip(types)
                .map(|(i, t)| coerce(i, t))
                .collect::<Result<_, _>>()?;
            AbiValue::Tuple(values)
        }
    };
    value.check()?;
    Ok(value)
}
