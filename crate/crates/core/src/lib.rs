//! Composition of layered code-generator templates.
//!
//! A product line is a directory of layers. Each layer holds template and
//! helper artifacts whose variability regions are marked up in a configurable
//! dialect. A layer model (`layers.ldl`) declares how regions of one layer
//! refine regions of the layers below it; a product configuration (`*.pcl`)
//! selects the layers for one generator variant. This crate scans the
//! directories, parses both DSLs, validates the resulting refinement graph,
//! and composes the selected layers into a flat generator.
//!
//! The typical flow is [`pipeline::load_product_line`], then
//! [`validator::validate_selection`] or [`composer::compose`].

pub mod diag;
pub mod composer;
pub mod dialect;
pub mod lex;
pub mod ldl;
pub mod model;
pub mod pcl;
pub mod pipeline;
pub mod scanner;
pub mod stats;
pub mod validator;

pub use composer::{compose, ComposeError, ComposeOptions, CompositionResult};
pub use dialect::DialectConfig;
pub use model::{ProductConfig, ProductLine};
pub use pipeline::{load_product_line, Loaded};
pub use scanner::scan_product_line;
pub use validator::{validate_selection, Conflict, ValidationResult};
