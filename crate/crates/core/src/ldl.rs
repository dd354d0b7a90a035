//! The layer-definition language: which layers refine which, and how.
//!
//! A model file holds one entry per refining layer. Keywords are not
//! reserved words; an identifier like `layer` or `replaces` is a valid layer
//! or region name because every position in the grammar determines whether a
//! keyword or a signature is expected.
//!
//! ```text
//! layer factoryVariant refines baseVariant {
//!     ClassWithFact:classBody replaces Class:classBody;
//! }
//! ```

use thiserror::Error;

use crate::diag::{Pos, Span, Warning};
use crate::lex::{SyntaxError, Token, TokenStream};
use crate::model::{ProductLine, Refinement, RefinementOp, ResolveError, Signature};

/// File name of the refinement model at the product-line root.
pub const LDL_FILE_NAME: &str = "layers.ldl";

/// A parsed model: the entries in source order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayerModel {
    pub entries: Vec<LayerEntry>,
}

/// One `layer X refines Y, Z { ... }` entry.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerEntry {
    pub name: String,
    /// Refined layers in declaration order; order matters for resolution.
    pub refines: Vec<String>,
    pub clauses: Vec<Clause>,
    pub pos: Pos,
}

/// One refinement clause, unbound (signatures not yet resolved).
#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub refining: Signature,
    pub op: RefinementOp,
    pub refined: Signature,
    pub span: Span,
}

/// Parses a model source text.
pub fn parse_ldl(src: &str) -> Result<LayerModel, SyntaxError> {
    let mut ts = TokenStream::new(src)?;
    let mut entries: Vec<LayerEntry> = Vec::new();
    while !ts.at_eof() {
        let entry = parse_entry(&mut ts)?;
        if entries.iter().any(|e| e.name == entry.name) {
            return Err(SyntaxError::new(
                entry.pos,
                format!("a second entry for layer '{}'", entry.name),
                vec!["each layer to be defined once".into()],
            ));
        }
        entries.push(entry);
    }
    Ok(LayerModel { entries })
}

fn parse_entry(ts: &mut TokenStream) -> Result<LayerEntry, SyntaxError> {
    ts.expect_keyword("layer")?;
    let (name, pos) = ts.expect_ident("a layer name")?;
    ts.expect_keyword("refines")?;
    let mut refines = vec![ts.expect_ident("a refined layer name")?.0];
    while ts.eat(&Token::Comma) {
        let (parent, parent_pos) = ts.expect_ident("a refined layer name")?;
        if refines.contains(&parent) {
            return Err(SyntaxError::new(
                parent_pos,
                format!("'{parent}' listed twice"),
                vec!["distinct refined layers".into()],
            ));
        }
        refines.push(parent);
    }
    ts.expect(Token::LBrace, "'{'")?;
    let mut clauses = Vec::new();
    while !ts.eat(&Token::RBrace) {
        if ts.at_eof() {
            return Err(ts.error(vec!["'}'".into(), "a refinement clause".into()]));
        }
        clauses.push(parse_clause(ts)?);
    }
    Ok(LayerEntry { name, refines, clauses, pos })
}

fn parse_clause(ts: &mut TokenStream) -> Result<Clause, SyntaxError> {
    let start = ts.pos();
    let refining = Signature::parse_from(ts)?;
    let (op_word, op_pos) = ts.expect_ident("'replaces', 'before' or 'after'")?;
    let op = match op_word.as_str() {
        "replaces" => RefinementOp::Replace,
        "before" => RefinementOp::Before,
        "after" => RefinementOp::After,
        other => {
            return Err(SyntaxError::new(
                op_pos,
                format!("'{other}'"),
                vec!["'replaces'".into(), "'before'".into(), "'after'".into()],
            ))
        }
    };
    let refined = Signature::parse_from(ts)?;
    let end = ts.pos();
    ts.expect(Token::Semi, "';'")?;
    Ok(Clause { refining, op, refined, span: Span::new(start, end) })
}

/// Pretty-prints a model in canonical form: one entry per layer separated by
/// blank lines, clauses indented four spaces. `parse_ldl` applied to the
/// output yields an equal model (spans aside).
pub fn render_model(model: &LayerModel) -> String {
    let mut out = String::new();
    for (i, entry) in model.entries.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str("layer ");
        out.push_str(&entry.name);
        out.push_str(" refines ");
        out.push_str(&entry.refines.join(", "));
        out.push_str(" {\n");
        for clause in &entry.clauses {
            out.push_str(&format!(
                "    {} {} {};\n",
                clause.refining,
                clause.op.keyword(),
                clause.refined
            ));
        }
        out.push_str("}\n");
    }
    out
}

#[derive(Debug, Error)]
pub enum BindError {
    #[error("{pos}: layer '{layer}' has an entry but no layer directory")]
    UnknownLayer { layer: String, pos: Pos },
    #[error("{pos}: layer '{layer}' refines unknown layer '{target}'")]
    UnknownRefinesTarget { layer: String, target: String, pos: Pos },
    #[error("{pos}: layer '{layer}' cannot refine itself")]
    SelfRefinement { layer: String, pos: Pos },
    #[error("in layer '{layer}': {source}")]
    Resolve {
        layer: String,
        pos: Pos,
        #[source]
        source: Box<ResolveError>,
    },
    #[error(
        "in layer '{layer}': '{signature}' not found in any refined layer (searched {})",
        searched.join(", ")
    )]
    Unresolved { layer: String, signature: Signature, searched: Vec<String>, pos: Pos },
}

/// Binds a parsed model to scanned layers: resolves every clause signature,
/// rewrites it in canonical form, and stores the results on the layers.
///
/// The refining signature must resolve inside the entry's own layer. The
/// refined signature is searched through the entry's `refines` list in
/// declaration order; the first layer where it resolves wins, and a match in
/// more than one refined layer produces a warning.
pub fn bind(pl: &mut ProductLine, model: &LayerModel) -> Result<Vec<Warning>, BindError> {
    let mut warnings = Vec::new();
    let mut bound: Vec<(String, Vec<String>, Vec<Refinement>)> = Vec::new();

    for entry in &model.entries {
        if !pl.layers.contains_key(&entry.name) {
            return Err(BindError::UnknownLayer { layer: entry.name.clone(), pos: entry.pos });
        }
        for target in &entry.refines {
            if *target == entry.name {
                return Err(BindError::SelfRefinement {
                    layer: entry.name.clone(),
                    pos: entry.pos,
                });
            }
            if !pl.layers.contains_key(target) {
                return Err(BindError::UnknownRefinesTarget {
                    layer: entry.name.clone(),
                    target: target.clone(),
                    pos: entry.pos,
                });
            }
        }

        let mut refinements = Vec::new();
        for clause in &entry.clauses {
            let refining_loc =
                pl.resolve_location(&clause.refining, &entry.name).map_err(|source| {
                    BindError::Resolve {
                        layer: entry.name.clone(),
                        pos: clause.span.start,
                        source: Box::new(source),
                    }
                })?;
            let refining = refining_loc.signature();

            // First match in refines order; remember every other layer that
            // also resolves so the pick can be reported.
            let mut hit: Option<(String, Signature)> = None;
            let mut also: Vec<String> = Vec::new();
            let mut ambiguous: Option<ResolveError> = None;
            for parent in &entry.refines {
                match pl.resolve_location(&clause.refined, parent) {
                    Ok(loc) => {
                        if hit.is_none() {
                            hit = Some((parent.clone(), loc.signature()));
                        } else {
                            also.push(parent.clone());
                        }
                    }
                    Err(err @ ResolveError::AmbiguousVr { .. }) => {
                        if ambiguous.is_none() {
                            ambiguous = Some(err);
                        }
                    }
                    Err(_) => {}
                }
            }
            let (refined_layer, refined) = match hit {
                Some(found) => found,
                None => {
                    // An ambiguous name inside a refined layer is an
                    // addressing error, not a missing signature.
                    if let Some(source) = ambiguous {
                        return Err(BindError::Resolve {
                            layer: entry.name.clone(),
                            pos: clause.span.start,
                            source: Box::new(source),
                        });
                    }
                    return Err(BindError::Unresolved {
                        layer: entry.name.clone(),
                        signature: clause.refined.clone(),
                        searched: entry.refines.clone(),
                        pos: clause.span.start,
                    });
                }
            };
            if !also.is_empty() {
                warnings.push(Warning::at_span(
                    clause.span,
                    format!(
                        "'{}' resolves in more than one refined layer ({}, {}); using '{}'",
                        clause.refined,
                        refined_layer,
                        also.join(", "),
                        refined_layer
                    ),
                ));
            }
            refinements.push(Refinement {
                op: clause.op,
                refining,
                refined,
                refined_layer,
                span: Some(clause.span),
            });
        }
        bound.push((entry.name.clone(), entry.refines.clone(), refinements));
    }

    for (name, refines, refinements) in bound {
        let layer = pl.layers.get_mut(&name).expect("checked above");
        layer.refines = refines;
        layer.refinements = refinements;
    }
    Ok(warnings)
}
