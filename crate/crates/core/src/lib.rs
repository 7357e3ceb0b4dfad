// SPDX-License-Identifier: Apache-2.0

//! Declarative deployment orchestration for EVM applications.
//!
//! A YAML application model is parsed into a [`model::DeploymentModel`],
//! turned into a [`graph::DependencyGraph`], planned into layered steps and
//! executed by the [`orchestrator`] against a [`chain::ChainBackend`].

pub mod chain;
pub mod graph;
pub mod linker;
pub mod model;
pub mod orchestrator;
pub mod patterns;
pub mod primitives;
pub mod toolkit;
