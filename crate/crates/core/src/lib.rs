//! Attribute extraction from semi-structured detail pages.
//!
//! Pages are parsed into filtered DOM trees ([`dom`], [`html`]), text leaves
//! are split into variable and fixed nodes across a site ([`ingest`]), every
//! variable node gets a friend circle of nearby context nodes
//! ([`simplifier`]), and a neural tagger classifies nodes into attributes
//! ([`featurizer`], [`tagger`]). [`evaluator`] holds the page-level metric
//! and the few-shot experiment protocols.

pub mod cache;
pub mod dom;
mod error;
pub mod evaluator;
pub mod exec;
pub mod featurizer;
pub mod html;
pub mod ingest;
pub mod prepare;
pub mod simplifier;
pub mod synth;
pub mod tagger;

pub use dom::{DomNode, DomTree, NodeClass, NodeId, TreeBuilder};
pub use error::{Error, Result};
pub use exec::Exec;
pub use ingest::{Gold, NodeLabel, Page, SiteCorpus};
