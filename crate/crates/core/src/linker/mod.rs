// SPDX-License-Identifier: Apache-2.0

//! Bytecode linking and ABI encoding of constructor and function calls.

pub mod abi;
pub mod placeholder;

use thiserror::Error;

use crate::model::artifact::{AbiFunction, ContractAbi, ContractArtifact};
use crate::primitives::{decode_hex, Address, Selector};
use abi::{coerce, AbiError, AbiType, AbiValue, Literal};
use placeholder::{extract_placeholders, link_library, PlaceholderError, PlaceholderId};

pub use placeholder::LinkPlaceholder;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error(transparent)]
    Placeholder(#[from] PlaceholderError),
    #[error(transparent)]
    Abi(#[from] AbiError),
    #[error(
        "constructor takes {expected} arguments, got {refs} references and {params} parameters"
    )]
    Arity {
        expected: usize,
        refs: usize,
        params: usize,
    },
    #[error("constructor has only {available} address parameters for {refs} references")]
    RefSlotNotAddress { refs: usize, available: usize },
    #[error("no function `{name}` taking {arity} arguments")]
    UnknownFunction { name: String, arity: usize },
    #[error("call to `{0}` is ambiguous between overloads")]
    AmbiguousOverload(String),
    #[error("bytecode still has unlinked placeholders: {}", .0.join(", "))]
    Unlinked(Vec<String>),
}

/// Merges constructor references and user parameters to fit the constructor
/// signature. References fill the earliest `address` slots in order; user
/// parameters fill the remaining slots left to right, each coerced to its
/// slot type.
pub fn bind_constructor(
    artifact: &ContractArtifact,
    refs: &[Address],
    params: &[Literal],
) -> Result<Vec<AbiValue>, LinkError> {
    let signature = artifact.abi.constructor_types();
    if refs.len() + params.len() != signature.len() {
        return Err(LinkError::Arity {
            expected: signature.len(),
            refs: refs.len(),
            params: params.len(),
        });
    }
    let address_slots: Vec<usize> = signature
        .iter()
        .enumerate()
        .filter(|(_, t)| **t == AbiType::Address)
        .map(|(i, _)| i)
        .take(refs.len())
        .collect();
    if address_slots.len() < refs.len() {
        return Err(LinkError::RefSlotNotAddress {
            refs: refs.len(),
            available: address_slots.len(),
        });
    }
    let mut refs = refs.iter();
    let mut params = params.iter();
    signature
        .iter()
        .enumerate()
        .map(|(i, ty)| {
            if address_slots.contains(&i) {
                Ok(AbiValue::Address(
                    *refs.next().expect("slot count matches refs"),
                ))
            } else {
                let literal = params.next().expect("arity checked");
                Ok(coerce(literal, ty)?)
            }
        })
        .collect()
}

/// Deployment payload: linked bytecode followed by the encoded arguments.
pub fn encode_constructor_call(
    bytecode_linked: &str,
    args: &[AbiValue],
) -> Result<Vec<u8>, LinkError> {
    let remaining = extract_placeholders(bytecode_linked)?;
    if !remaining.is_empty() {
        return Err(LinkError::Unlinked(
            remaining.into_iter().map(|p| p.id.marker()).collect(),
        ));
    }
    let mut payload = decode_hex(bytecode_linked).map_err(|e| {
        LinkError::Placeholder(PlaceholderError::InvalidHex {
            offset: 0,
            ch: e.to_string().chars().next().unwrap_or('?'),
        })
    })?;
    payload.extend(abi::encode(args)?);
    Ok(payload)
}

/// Picks the overload of `name` to call with `args`: by arity first, then by
/// exact parameter types.
pub fn resolve_function<'a>(
    abi: &'a ContractAbi,
    name: &str,
    args: &[AbiValue],
) -> Result<&'a AbiFunction, LinkError> {
    let by_arity: Vec<&AbiFunction> = abi
        .functions_named(name)
        .filter(|f| f.inputs.len() == args.len())
        .collect();
    match by_arity.as_slice() {
        [] => Err(LinkError::UnknownFunction {
            name: name.to_string(),
            arity: args.len(),
        }),
        [only] => Ok(only),
        many => {
            let arg_types: Vec<AbiType> = args.iter().map(AbiValue::abi_type).collect();
            let exact: Vec<&&AbiFunction> = many
                .iter()
                .filter(|f| f.input_types() == arg_types)
                .collect();
            match exact.as_slice() {
                [only] => Ok(only),
                _ => Err(LinkError::AmbiguousOverload(name.to_string())),
            }
        }
    }
}

fn check_arg_types(expected: &[AbiType], args: &[AbiValue]) -> Result<(), LinkError> {
    for (index, (ty, arg)) in expected.iter().zip(args).enumerate() {
        if arg.abi_type() != *ty {
            return Err(AbiError::TypeMismatch {
                index,
                expected: ty.to_string(),
                actual: arg.abi_type().to_string(),
            }
            .into());
        }
    }
    Ok(())
}

/// Call data for `function`, which is either a bare name looked up in `abi`
/// or a full canonical signature such as `upgradeTo(address)`.
pub fn encode_function_call(
    abi: &ContractAbi,
    function: &str,
    args: &[AbiValue],
) -> Result<Vec<u8>, LinkError> {
    let (signature, types) = if let Some(open) = function.find('(') {
        let name = &function[..open];
        let AbiType::Tuple(types) = AbiType::parse(&function[open..])? else {
            return Err(AbiError::BadType(function.to_string()).into());
        };
        if types.len() != args.len() {
            return Err(LinkError::UnknownFunction {
                name: function.to_string(),
                arity: args.len(),
            });
        }
        let sig = AbiFunction {
            name: name.to_string(),
            inputs: types
                .iter()
                .map(|t| crate::model::artifact::AbiParam {
                    name: String::new(),
                    ty: t.clone(),
                })
                .collect(),
        }
        .signature();
        (sig, types)
    } else {
        let f = resolve_function(abi, function, args)?;
        (f.signature(), f.input_types())
    };
    check_arg_types(&types, args)?;
    let mut out = Selector::of_signature(&signature).0.to_vec();
    out.extend(abi::encode(args)?);
    Ok(out)
}

/// A deployed library that can satisfy placeholders.
#[derive(Debug, Clone)]
pub struct LinkTarget {
    pub fully_qualified_name: String,
    pub contract_name: String,
    pub address: Address,
}

/// Substitutes every placeholder in `bytecode` that names one of `libraries`.
/// Fails if any placeholder is left over.
pub fn link_all(bytecode: &str, libraries: &[LinkTarget]) -> Result<String, LinkError> {
    let mut linked = bytecode.to_string();
    let mut unresolved = Vec::new();
    let mut seen: Vec<PlaceholderId> = Vec::new();
    for p in extract_placeholders(bytecode)? {
        if seen.contains(&p.id) {
            continue;
        }
        seen.push(p.id.clone());
        match libraries.iter().find(|l| {
            p.id.matches_library(&l.fully_qualified_name, &l.contract_name)
        }) {
            Some(lib) => linked = link_library(&linked, &p.id, &lib.address)?,
            None => unresolved.push(p.id.marker()),
        }
    }
    if unresolved.is_empty() {
        Ok(linked)
    } else {
        Err(LinkError::Unlinked(unresolved))
    }
}

/// Placeholders in `bytecode` that none of the named libraries satisfy.
pub fn unsatisfied_placeholders(
    bytecode: &str,
    libraries: &[(String, String)],
) -> Result<Vec<String>, LinkError> {
    let mut out: Vec<String> = extract_placeholders(bytecode)?
        .into_iter()
        .filter(|p| {
            !libraries
                .iter()
                .any(|(fqn, name)| p.id.matches_library(fqn, name))
        })
        .map(|p| p.id.marker())
        .collect();
    out.dedup();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::artifact::AbiParam;

    fn artifact(ctor: &[&str], functions: &[(&str, &[&str])]) -> ContractArtifact {
        let param = |t: &&str| AbiParam {
            name: String::new(),
            ty: AbiType::parse(t).unwrap(),
        };
        ContractArtifact {
            contract_name: "T".into(),
            source_name: String::new(),
            abi: ContractAbi {
                constructor: ctor.iter().map(param).collect(),
                functions: functions
                    .iter()
                    .map(|(n, ins)| AbiFunction {
                        name: n.to_string(),
                        inputs: ins.iter().map(param).collect(),
                    })
                    .collect(),
            },
            bytecode: "6080".into(),
        }
    }

    fn addr(b: u8) -> Address {
        Address([b; 20])
    }

    #[test]
    fn public_resolver_binding() {
        let a = artifact(&["address", "address"], &[]);
        let zero = Literal::Str("0x0000000000000000000000000000000000000000".into());
        let out = bind_constructor(&a, &[addr(7)], &[zero]).unwrap();
        assert_eq!(
            out,
            vec![AbiValue::Address(addr(7)), AbiValue::Address(Address::ZERO)]
        );
    }

    #[test]
    fn refs_take_earliest_address_slots() {
        let a = artifact(&["uint256", "address", "string", "address"], &[]);
        let out = bind_constructor(
            &a,
            &[addr(1)],
            &[
                Literal::Int(5),
                Literal::Str("x".into()),
                Literal::Str(addr(2).to_string()),
            ],
        )
        .unwrap();
        assert_eq!(
            out,
            vec![
                AbiValue::uint256(5),
                AbiValue::Address(addr(1)),
                AbiValue::String("x".into()),
                AbiValue::Address(addr(2)),
            ]
        );
    }

    #[test]
    fn binding_errors() {
        let a = artifact(&["uint256", "uint256"], &[]);
        assert!(matches!(
            bind_constructor(&a, &[], &[Literal::Int(100), Literal::Float(0.1)]),
            Err(LinkError::Abi(AbiError::Coercion { .. }))
        ));
        assert!(matches!(
            bind_constructor(&a, &[], &[Literal::Int(1)]),
            Err(LinkError::Arity { expected: 2, .. })
        ));
        assert!(matches!(
            bind_constructor(&a, &[addr(1)], &[Literal::Int(1)]),
            Err(LinkError::RefSlotNotAddress {
                refs: 1,
                available: 0
            })
        ));
        assert_eq!(
            bind_constructor(&artifact(&[], &[]), &[], &[]).unwrap(),
            vec![]
        );
    }

    #[test]
    fn constructor_payload() {
        assert_eq!(
            encode_constructor_call("6080", &[]).unwrap(),
            vec![0x60, 0x80]
        );
        let p = encode_constructor_call("0x6080", &[AbiValue::uint256(100)]).unwrap();
        assert_eq!(p.len(), 34);
        assert_eq!(p[33], 0x64);
        let unlinked = format!("60__${}$__", "ab".repeat(17));
        assert!(matches!(
            encode_constructor_call(&unlinked, &[]),
            Err(LinkError::Unlinked(_))
        ));
    }

    #[test]
    fn overloads() {
        let abi = artifact(
            &[],
            &[
                ("set", &["address"]),
                ("set", &["uint256"]),
                ("ping", &[]),
                ("two", &["uint8", "uint8"]),
            ],
        )
        .abi;
        let by_type = encode_function_call(&abi, "set", &[AbiValue::uint256(1)]).unwrap();
        assert_eq!(
            &by_type[..4],
            Selector::of_signature("set(uint256)").as_bytes()
        );
        assert_eq!(encode_function_call(&abi, "ping", &[]).unwrap().len(), 4);
        assert!(matches!(
            encode_function_call(&abi, "set", &[AbiValue::Bool(true)]),
            Err(LinkError::AmbiguousOverload(_))
        ));
        assert!(matches!(
            encode_function_call(&abi, "nope", &[]),
            Err(LinkError::UnknownFunction { .. })
        ));
        assert!(matches!(
            encode_function_call(&abi, "two", &[AbiValue::uint256(1), AbiValue::uint256(2)]),
            Err(LinkError::Abi(AbiError::TypeMismatch { .. }))
        ));
        let explicit = encode_function_call(
            &ContractAbi::default(),
            "upgradeTo(address)",
            &[AbiValue::Address(addr(3))],
        )
        .unwrap();
        assert_eq!(
            &explicit[..4],
            Selector::of_signature("upgradeTo(address)").as_bytes()
        );
    }

    #[test]
    fn link_all_reports_leftovers() {
        let lib = LinkTarget {
            fully_qualified_name: "contracts/Math.sol:Math".into(),
            contract_name: "Math".into(),
            address: addr(9),
        };
        let other = PlaceholderId::for_library("contracts/Other.sol:Other");
        let code = format!(
            "60{}60{}",
            PlaceholderId::for_library(&lib.fully_qualified_name).marker(),
            other.marker()
        );
        assert_eq!(
            link_all(&code, std::slice::from_ref(&lib)),
            Err(LinkError::Unlinked(vec![other.marker()]))
        );
        let only_math = format!(
            "60{}",
            PlaceholderId::for_library(&lib.fully_qualified_name).marker()
        );
        assert_eq!(
            link_all(&only_math, &[lib]).unwrap(),
            format!("60{}", "09".repeat(20))
        );
    }
}
