//! Static composition: splicing refining regions into their targets and
//! writing the resulting generator variant.
//!
//! Composition renders every emitted artifact of the layer closure. For each
//! region the composer looks up the refinement chain targeting it, renders
//! each refining region's effective content (its own chain applied,
//! recursively), and combines them with [`compose_vr`]: `replaces` swaps the
//! core content, expanding include-super lines to the most recent body;
//! `before`/`after` attach content outside the replaceable region, newest
//! outermost. Artifacts that donate inlined content are consumed and not
//! emitted.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::diag::Warning;
use crate::dialect::DialectConfig;
use crate::model::{
    signature_of, Artifact, ArtifactKind, MarkerStyle, ProductConfig, ProductLine, RefinementOp,
    Segment, VariabilityRegion, VrKind,
};
use crate::validator::{validate_selection, Conflict, GraphError, VrNode};

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("composition blocked by {} conflict(s)", .0.len())]
    Conflicts(Vec<Conflict>),
    #[error("output path '{path}' is produced by both layer '{first}' and layer '{second}'")]
    PathCollision { path: String, first: String, second: String },
    #[error(
        "include-super in '{refining}' can never be satisfied: '{op}' content \
         does not replace '{target}'"
    )]
    DanglingSuperInAttachment { refining: String, target: String, op: &'static str },
    #[error("{layer}/{path}:{line}: include-super has no preceding body to include")]
    DanglingSuper { layer: String, path: String, line: u32 },
    #[error("cannot refine binary artifact '{path}' of layer '{layer}'")]
    BinaryTarget { layer: String, path: String },
}

/// One refinement application for [`compose_vr`].
#[derive(Debug, Clone)]
pub struct RefinementStep {
    pub op: RefinementOp,
    /// The refining region's effective content (its own refinements already
    /// applied), without its delimiting markers.
    pub content: String,
    /// Generated content (an include directive); exempt from include-super
    /// processing.
    pub literal: bool,
    pub refining_label: String,
    pub target_label: String,
}

/// The outcome of applying a chain to one region.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComposedSlot {
    /// Content attached before the region, outermost first.
    pub befores: Vec<String>,
    pub core: String,
    /// Content attached after the region, outermost last.
    pub afters: Vec<String>,
    /// True when at least one `replaces` step ran.
    pub replaced: bool,
    pub warnings: Vec<Warning>,
}

impl ComposedSlot {
    /// The slot as flat text: attachments around the core, no markers.
    pub fn flatten(&self) -> String {
        let mut out = String::new();
        for b in &self.befores {
            out.push_str(b);
        }
        out.push_str(&self.core);
        for a in &self.afters {
            out.push_str(a);
        }
        out
    }
}

/// Applies refinement steps, in order, to a region body.
///
/// `original` is the region's rendered interior (empty for an empty block;
/// pass `original_is_empty_block` so an include-super against it warns
/// instead of silently including nothing). Each `replaces` step expands the
/// include-super lines of its content to the current core ("the most recent
/// body") and then becomes the new core. `before`/`after` content must not
/// contain include-super, since nothing ever replaces the region it would
/// refer to.
pub fn compose_vr(
    original: &str,
    original_is_empty_block: bool,
    steps: &[RefinementStep],
    dialect: &DialectConfig,
) -> Result<ComposedSlot, ComposeError> {
    let mut slot = ComposedSlot {
        befores: Vec::new(),
        core: original.to_string(),
        afters: Vec::new(),
        replaced: false,
        warnings: Vec::new(),
    };
    let mut core_is_empty_block = original_is_empty_block;

    for step in steps {
        match step.op {
            RefinementOp::Replace => {
                let mut next = String::new();
                for line in step.content.split_inclusive('\n') {
                    let content = line.trim_end_matches('\n').trim_end_matches('\r');
                    if !step.literal && dialect.is_include_super_line(content) {
                        if core_is_empty_block {
                            slot.warnings.push(Warning::new(format!(
                                "include-super in '{}' includes the empty region '{}'",
                                step.refining_label, step.target_label
                            )));
                        }
                        next.push_str(&slot.core);
                    } else {
                        next.push_str(line);
                    }
                }
                slot.core = next;
                slot.replaced = true;
                core_is_empty_block = false;
            }
            RefinementOp::Before | RefinementOp::After => {
                if !step.literal {
                    let dangling = step
                        .content
                        .split_inclusive('\n')
                        .map(|l| l.trim_end_matches('\n').trim_end_matches('\r'))
                        .any(|l| dialect.is_include_super_line(l));
                    if dangling {
                        return Err(ComposeError::DanglingSuperInAttachment {
                            refining: step.refining_label.clone(),
                            target: step.target_label.clone(),
                            op: step.op.label(),
                        });
                    }
                }
                if step.op == RefinementOp::Before {
                    slot.befores.insert(0, step.content.clone());
                } else {
                    slot.afters.push(step.content.clone());
                }
            }
        }
    }
    Ok(slot)
}

/// One applied refinement, for the provenance record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProvenanceStep {
    pub layer: String,
    pub op: &'static str,
    pub refining: crate::model::Signature,
    pub refined: crate::model::Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct EmitEntry {
    pub layer: String,
    pub relative_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct FragmentRef {
    pub layer: String,
    pub relative_path: String,
}

#[derive(Debug, Clone)]
struct ChainStep {
    op: RefinementOp,
    refining: VrNode,
    /// True when the step emits an include directive instead of inlining,
    /// which also leaves the refining artifact in the emit set.
    directive: bool,
}

/// What composition will do, before any rendering happens.
#[derive(Debug, Clone, Serialize)]
pub struct CompositionPlan {
    pub closure: Vec<String>,
    /// Artifacts to render and write, sorted by output path.
    pub emit: Vec<EmitEntry>,
    /// Artifacts consumed as refinement donors, sorted.
    pub fragments: Vec<FragmentRef>,
    pub warnings: Vec<Warning>,
    #[serde(skip)]
    chains: BTreeMap<VrNode, Vec<ChainStep>>,
}

/// Validates the selection and computes emit and fragment sets. Fails on
/// conflicts, unknown selected layers, and output path collisions.
pub fn plan(pl: &ProductLine, cfg: &ProductConfig) -> Result<CompositionPlan, ComposeError> {
    let validation = validate_selection(pl, &cfg.selected_layers)?;
    if !validation.ok() {
        return Err(ComposeError::Conflicts(validation.conflicts));
    }
    let closure = validation.closure;
    let mut warnings = validation.warnings;

    let mut chains: BTreeMap<VrNode, Vec<ChainStep>> = BTreeMap::new();
    let mut fragments: BTreeSet<FragmentRef> = BTreeSet::new();
    for layer_name in &closure {
        let layer = &pl.layers[layer_name];
        for refinement in &layer.refinements {
            let target =
                VrNode::new(refinement.refined_layer.clone(), refinement.refined.clone());
            let directive = refinement.refining.is_whole_artifact()
                && matches!(refinement.op, RefinementOp::Before | RefinementOp::After)
                && pl.dialect.include_statement_format.is_some();
            chains.entry(target).or_default().push(ChainStep {
                op: refinement.op,
                refining: VrNode::new(layer_name.clone(), refinement.refining.clone()),
                directive,
            });
            if !directive {
                let loc = pl
                    .resolve_location(&refinement.refining, layer_name)
                    .expect("bound signatures resolve");
                fragments.insert(FragmentRef {
                    layer: layer_name.clone(),
                    relative_path: loc.artifact.relative_path.clone(),
                });
            }
        }
    }

    let mut emit_by_path: BTreeMap<&str, &str> = BTreeMap::new();
    for layer_name in &closure {
        for path in pl.layers[layer_name].artifacts.keys() {
            let consumed = fragments
                .contains(&FragmentRef { layer: layer_name.clone(), relative_path: path.clone() });
            if consumed {
                continue;
            }
            if let Some(prev) = emit_by_path.get(path.as_str()) {
                let (first, second) = if *prev < layer_name.as_str() {
                    (prev.to_string(), layer_name.clone())
                } else {
                    (layer_name.clone(), prev.to_string())
                };
                return Err(ComposeError::PathCollision { path: path.clone(), first, second });
            }
            emit_by_path.insert(path, layer_name);
        }
    }
    let emit: Vec<EmitEntry> = emit_by_path
        .into_iter()
        .map(|(path, layer)| EmitEntry { layer: layer.to_string(), relative_path: path.to_string() })
        .collect();

    // A refinement whose target sits inside a consumed artifact but outside
    // the donated region would be lost silently; warn ahead of time.
    let reachable_warning_targets = plan_unapplied_targets(pl, &closure, &chains, &emit);
    for target in reachable_warning_targets {
        warnings.push(Warning::new(format!(
            "refinement target '{target}' is not part of the composed output; \
             its refinement never applies"
        )));
    }

    Ok(CompositionPlan {
        closure,
        emit,
        fragments: fragments.into_iter().collect(),
        warnings,
        chains,
    })
}

/// Targets whose chains can never run: not in an emitted artifact and not
/// inside any refining region that itself gets inlined.
fn plan_unapplied_targets(
    pl: &ProductLine,
    closure: &[String],
    chains: &BTreeMap<VrNode, Vec<ChainStep>>,
    emit: &[EmitEntry],
) -> Vec<VrNode> {
    let emitted: BTreeSet<(&str, &str)> =
        emit.iter().map(|e| (e.layer.as_str(), e.relative_path.as_str())).collect();

    // A target is reachable if its artifact is emitted, or if it lies within
    // the subtree of a refining region that participates in some chain.
    let mut inlined_roots: Vec<(String, Vec<String>, Vec<crate::model::VrName>)> = Vec::new();
    for steps in chains.values() {
        for step in steps {
            if !step.directive {
                inlined_roots.push((
                    step.refining.color.clone(),
                    step.refining.signature.artifact_path.clone(),
                    step.refining.signature.vr_path.clone(),
                ));
            }
        }
    }

    let mut lost = Vec::new();
    'targets: for target in chains.keys() {
        if !closure.contains(&target.color) {
            continue;
        }
        let Ok(loc) = pl.resolve_location(&target.signature, &target.color) else {
            continue;
        };
        if emitted.contains(&(target.color.as_str(), loc.artifact.relative_path.as_str())) {
            continue;
        }
        for (color, artifact_path, vr_prefix) in &inlined_roots {
            let same_artifact = *color == target.color
                && *artifact_path == target.signature.artifact_path;
            let within = target.signature.vr_path.len() >= vr_prefix.len()
                && target.signature.vr_path[..vr_prefix.len()] == vr_prefix[..];
            if same_artifact && within {
                continue 'targets;
            }
        }
        lost.push(target.clone());
    }
    lost
}

/// One composed output artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedArtifact {
    pub relative_path: String,
    /// The layer the artifact came from.
    pub layer: String,
    pub content: String,
    /// Set for binary artifacts; `content` is empty then.
    pub binary: Option<Vec<u8>>,
    pub provenance: Vec<ProvenanceStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositionResult {
    pub generator_name: String,
    pub output_dir: String,
    pub closure: Vec<String>,
    /// Sorted by output path.
    pub artifacts: Vec<ComposedArtifact>,
    pub fragments: Vec<FragmentRef>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ComposeOptions {
    /// Keep comment-style region markers in the output. Block-style markers
    /// are template syntax and are always kept.
    pub keep_markers: bool,
}

/// Renders the full variant for a product configuration.
pub fn compose(
    pl: &ProductLine,
    cfg: &ProductConfig,
    opts: &ComposeOptions,
) -> Result<CompositionResult, ComposeError> {
    let plan = plan(pl, cfg)?;
    compose_planned(pl, cfg, opts, plan)
}

/// Renders a previously computed plan.
pub fn compose_planned(
    pl: &ProductLine,
    cfg: &ProductConfig,
    opts: &ComposeOptions,
    plan: CompositionPlan,
) -> Result<CompositionResult, ComposeError> {
    let ctx = RenderCtx { pl, chains: &plan.chains, keep_markers: opts.keep_markers };

    let render_one = |entry: &EmitEntry| -> Result<(ComposedArtifact, Vec<Warning>), ComposeError> {
        let artifact = &pl.layers[&entry.layer].artifacts[&entry.relative_path];
        render_artifact(&ctx, &entry.layer, artifact)
    };

    #[cfg(feature = "parallel")]
    let rendered: Result<Vec<_>, ComposeError> = plan.emit.par_iter().map(render_one).collect();
    #[cfg(not(feature = "parallel"))]
    let rendered: Result<Vec<_>, ComposeError> = plan.emit.iter().map(render_one).collect();
    let rendered = rendered?;

    let mut warnings = plan.warnings;
    let mut artifacts = Vec::with_capacity(rendered.len());
    for (artifact, mut artifact_warnings) in rendered {
        warnings.append(&mut artifact_warnings);
        artifacts.push(artifact);
    }

    Ok(CompositionResult {
        generator_name: cfg.generator_name.clone(),
        output_dir: cfg.output_dir().to_string(),
        closure: plan.closure,
        artifacts,
        fragments: plan.fragments,
        warnings,
    })
}

struct RenderCtx<'a> {
    pl: &'a ProductLine,
    chains: &'a BTreeMap<VrNode, Vec<ChainStep>>,
    keep_markers: bool,
}

#[derive(Default)]
struct Scratch {
    /// Effective flattened interiors of refining regions, memoized per
    /// artifact render.
    memo: BTreeMap<VrNode, String>,
    rendering: Vec<VrNode>,
    provenance: Vec<ProvenanceStep>,
    warnings: Vec<Warning>,
}

fn render_artifact(
    ctx: &RenderCtx<'_>,
    layer: &str,
    artifact: &Artifact,
) -> Result<(ComposedArtifact, Vec<Warning>), ComposeError> {
    if let Some(bytes) = &artifact.binary {
        let root_node = VrNode::new(layer, signature_of(artifact, &[]));
        if ctx.chains.contains_key(&root_node) {
            return Err(ComposeError::BinaryTarget {
                layer: layer.to_string(),
                path: artifact.relative_path.clone(),
            });
        }
        return Ok((
            ComposedArtifact {
                relative_path: artifact.relative_path.clone(),
                layer: layer.to_string(),
                content: String::new(),
                binary: Some(bytes.clone()),
                provenance: Vec::new(),
            },
            Vec::new(),
        ));
    }

    let mut scratch = Scratch::default();
    let text = render_site(ctx, &mut scratch, layer, artifact, &mut Vec::new(), &artifact.root_vr)?;

    // Any include-super line still present was never consumed by a replace.
    if artifact.kind != ArtifactKind::Opaque {
        for (i, line) in text.split_inclusive('\n').enumerate() {
            let content = line.trim_end_matches('\n').trim_end_matches('\r');
            if ctx.pl.dialect.is_include_super_line(content) {
                return Err(ComposeError::DanglingSuper {
                    layer: layer.to_string(),
                    path: artifact.relative_path.clone(),
                    line: (i + 1) as u32,
                });
            }
        }
    }

    Ok((
        ComposedArtifact {
            relative_path: artifact.relative_path.clone(),
            layer: layer.to_string(),
            content: text,
            binary: None,
            provenance: scratch.provenance,
        },
        scratch.warnings,
    ))
}

/// Renders a region at its site in the output: attachments, markers (per
/// style and mode), and composed core.
fn render_site(
    ctx: &RenderCtx<'_>,
    scratch: &mut Scratch,
    layer: &str,
    artifact: &Artifact,
    node_path: &mut Vec<usize>,
    vr: &VariabilityRegion,
) -> Result<String, ComposeError> {
    let interior = if vr.kind == VrKind::EmptyBlock {
        String::new()
    } else {
        render_interior(ctx, scratch, layer, artifact, node_path, vr)?
    };
    let node = VrNode::new(layer, signature_of(artifact, node_path));
    let steps = build_steps(ctx, scratch, &node)?;
    let slot = compose_vr(&interior, vr.kind == VrKind::EmptyBlock, &steps, &ctx.pl.dialect)?;
    scratch.warnings.extend(slot.warnings.iter().cloned());

    let with_markers = match vr.style {
        None => false,
        Some(MarkerStyle::Block) => true,
        Some(MarkerStyle::Comment) => ctx.keep_markers,
    };

    let mut out = String::new();
    for b in &slot.befores {
        out.push_str(b);
    }
    if with_markers {
        push_marker(&mut out, vr, true, ctx);
    }
    if vr.kind == VrKind::EmptyBlock && !slot.replaced {
        if let Some(interior) = &vr.raw_interior {
            out.push_str(interior);
        }
    } else {
        out.push_str(&slot.core);
    }
    if with_markers {
        push_marker(&mut out, vr, false, ctx);
    }
    for a in &slot.afters {
        out.push_str(a);
    }
    Ok(out)
}

fn push_marker(out: &mut String, vr: &VariabilityRegion, open: bool, ctx: &RenderCtx<'_>) {
    let raw = if open { &vr.raw_open } else { &vr.raw_close };
    if let Some(raw) = raw {
        out.push_str(raw);
        return;
    }
    // Synthetic regions fall back to the canonical template-set markers.
    let markers = &ctx.pl.dialect.template;
    let name = vr.name.as_deref().unwrap_or("");
    let line = match (open, vr.style) {
        (true, Some(MarkerStyle::Block)) => match &markers.block_open {
            Some(p) => p.render(name, vr.qualifier.as_deref()),
            None => markers.comment_vr_begin.render(name),
        },
        (false, Some(MarkerStyle::Block)) => match &markers.block_close {
            Some(p) => p.render(name),
            None => markers.comment_vr_end.render(name),
        },
        (true, _) => markers.comment_vr_begin.render(name),
        (false, _) => markers.comment_vr_end.render(name),
    };
    out.push_str(&line);
    out.push('\n');
}

fn render_interior(
    ctx: &RenderCtx<'_>,
    scratch: &mut Scratch,
    layer: &str,
    artifact: &Artifact,
    node_path: &mut Vec<usize>,
    vr: &VariabilityRegion,
) -> Result<String, ComposeError> {
    let mut out = String::new();
    for seg in &vr.body {
        match seg {
            Segment::Literal(text) => out.push_str(text),
            Segment::Child(i) => {
                node_path.push(*i);
                let rendered =
                    render_site(ctx, scratch, layer, artifact, node_path, &vr.children[*i]);
                node_path.pop();
                out.push_str(&rendered?);
            }
        }
    }
    Ok(out)
}

/// Renders each chain step targeting `node` into a [`RefinementStep`],
/// recording provenance.
fn build_steps(
    ctx: &RenderCtx<'_>,
    scratch: &mut Scratch,
    node: &VrNode,
) -> Result<Vec<RefinementStep>, ComposeError> {
    let Some(chain) = ctx.chains.get(node) else {
        return Ok(Vec::new());
    };
    let mut steps = Vec::with_capacity(chain.len());
    for cs in chain {
        let content = if cs.directive {
            let format = ctx
                .pl
                .dialect
                .include_statement_format
                .as_ref()
                .expect("directive steps only exist with a configured format");
            let loc = ctx
                .pl
                .resolve_location(&cs.refining.signature, &cs.refining.color)
                .expect("bound signatures resolve");
            let mut line = format.replace("{path}", &loc.artifact.relative_path);
            line.push('\n');
            line
        } else {
            effective_interior(ctx, scratch, &cs.refining)?
        };
        steps.push(RefinementStep {
            op: cs.op,
            content,
            literal: cs.directive,
            refining_label: cs.refining.to_string(),
            target_label: node.to_string(),
        });
        scratch.provenance.push(ProvenanceStep {
            layer: cs.refining.color.clone(),
            op: cs.op.label(),
            refining: cs.refining.signature.clone(),
            refined: node.signature.clone(),
        });
    }
    Ok(steps)
}

/// The refining region's content with its own chain applied and its
/// attachments flattened in, but without its delimiting markers. Its
/// include-super lines stay unexpanded; they are consumed where the content
/// replaces a target.
fn effective_interior(
    ctx: &RenderCtx<'_>,
    scratch: &mut Scratch,
    node: &VrNode,
) -> Result<String, ComposeError> {
    if let Some(hit) = scratch.memo.get(node) {
        return Ok(hit.clone());
    }
    assert!(
        !scratch.rendering.contains(node),
        "refinement cycles are rejected during validation"
    );
    scratch.rendering.push(node.clone());

    let loc = ctx
        .pl
        .resolve_location(&node.signature, &node.color)
        .expect("bound signatures resolve");
    let artifact = loc.artifact;
    let mut node_path = loc.node_path.clone();
    let vr = loc.vr;

    let interior = if vr.kind == VrKind::EmptyBlock {
        String::new()
    } else {
        render_interior(ctx, scratch, &node.color, artifact, &mut node_path, vr)?
    };
    let steps = build_steps(ctx, scratch, node)?;
    let slot = compose_vr(&interior, vr.kind == VrKind::EmptyBlock, &steps, &ctx.pl.dialect)?;
    scratch.warnings.extend(slot.warnings.iter().cloned());
    let flat = slot.flatten();

    scratch.rendering.pop();
    scratch.memo.insert(node.clone(), flat.clone());
    Ok(flat)
}

#[derive(Debug, Error)]
pub enum WriteError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot serialize provenance record: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// Name of the machine-readable record written next to the composed output.
pub const PROVENANCE_FILE_NAME: &str = "cgpl-provenance.json";

/// Writes the variant to `dir` atomically: everything lands in a temporary
/// sibling directory first, which then replaces `dir` in one rename (plus
/// one for the old tree when it exists).
pub fn write_variant(dir: &Path, result: &CompositionResult) -> Result<PathBuf, WriteError> {
    let parent = dir.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(parent)
        .map_err(|source| WriteError::Io { path: parent.to_path_buf(), source })?;
    let staging = tempfile::Builder::new()
        .prefix(".cgpl-staging-")
        .tempdir_in(parent)
        .map_err(|source| WriteError::Io { path: parent.to_path_buf(), source })?;

    for artifact in &result.artifacts {
        let target = staging.path().join(&artifact.relative_path);
        if let Some(dir) = target.parent() {
            std::fs::create_dir_all(dir)
                .map_err(|source| WriteError::Io { path: dir.to_path_buf(), source })?;
        }
        let mut file = std::fs::File::create(&target)
            .map_err(|source| WriteError::Io { path: target.clone(), source })?;
        let bytes: &[u8] = match &artifact.binary {
            Some(b) => b,
            None => artifact.content.as_bytes(),
        };
        file.write_all(bytes).map_err(|source| WriteError::Io { path: target.clone(), source })?;
    }

    let record = serde_json::json!({
        "generator": result.generator_name,
        "closure": result.closure,
        "artifacts": result.artifacts.iter().map(|a| {
            serde_json::json!({
                "path": a.relative_path,
                "layer": a.layer,
                "steps": a.provenance,
            })
        }).collect::<Vec<_>>(),
        "fragments": result.fragments,
    });
    let sidecar = staging.path().join(PROVENANCE_FILE_NAME);
    let mut text = serde_json::to_string_pretty(&record)?;
    text.push('\n');
    std::fs::write(&sidecar, text)
        .map_err(|source| WriteError::Io { path: sidecar.clone(), source })?;

    // Swap into place. A leftover from a crashed earlier swap is replaced.
    let staged = staging.keep();
    let swap_out = dir.with_extension("cgpl-old");
    if swap_out.exists() {
        std::fs::remove_dir_all(&swap_out)
            .map_err(|source| WriteError::Io { path: swap_out.clone(), source })?;
    }
    let had_old = dir.exists();
    if had_old {
        std::fs::rename(dir, &swap_out)
            .map_err(|source| WriteError::Io { path: dir.to_path_buf(), source })?;
    }
    if let Err(source) = std::fs::rename(&staged, dir) {
        // Try to restore the previous tree before reporting.
        if had_old {
            let _ = std::fs::rename(&swap_out, dir);
        }
        let _ = std::fs::remove_dir_all(&staged);
        return Err(WriteError::Io { path: dir.to_path_buf(), source });
    }
    if had_old {
        std::fs::remove_dir_all(&swap_out)
            .map_err(|source| WriteError::Io { path: swap_out.clone(), source })?;
    }
    Ok(dir.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialect::DialectConfig;

    fn dialect() -> DialectConfig {
        DialectConfig::default()
    }

    fn step(op: RefinementOp, content: &str) -> RefinementStep {
        RefinementStep {
            op,
            content: content.to_string(),
            literal: false,
            refining_label: "l2/R".into(),
            target_label: "l1/T".into(),
        }
    }

    #[test]
    fn replace_without_super_drops_original() {
        let slot =
            compose_vr("old\n", false, &[step(RefinementOp::Replace, "new\n")], &dialect())
                .unwrap();
        assert_eq!(slot.core, "new\n");
        assert!(slot.replaced);
        assert_eq!(slot.flatten(), "new\n");
    }

    #[test]
    fn replace_expands_include_super_to_most_recent_body() {
        let d = dialect();
        let steps = [
            step(RefinementOp::Replace, "r1a\n[REM][INCLUDE-SUPER][ENDREM]\nr1b\n"),
            step(RefinementOp::Replace, "r2a\n[REM][INCLUDE-SUPER][ENDREM]\nr2b\n"),
        ];
        let slot = compose_vr("base\n", false, &steps, &d).unwrap();
        assert_eq!(slot.core, "r2a\nr1a\nbase\nr1b\nr2b\n");
    }

    #[test]
    fn include_super_tolerates_interior_whitespace() {
        let d = dialect();
        let steps = [step(RefinementOp::Replace, "[REM][INCLUDE -SUPER] [ENDREM]\n")];
        let slot = compose_vr("kept\n", false, &steps, &d).unwrap();
        assert_eq!(slot.core, "kept\n");
    }

    #[test]
    fn before_and_after_attach_onion_style() {
        let d = dialect();
        let steps = [
            step(RefinementOp::Before, "b1\n"),
            step(RefinementOp::After, "a1\n"),
            step(RefinementOp::Before, "b2\n"),
            step(RefinementOp::After, "a2\n"),
        ];
        let slot = compose_vr("core\n", false, &steps, &d).unwrap();
        assert_eq!(slot.befores, vec!["b2\n", "b1\n"]);
        assert_eq!(slot.afters, vec!["a1\n", "a2\n"]);
        assert_eq!(slot.flatten(), "b2\nb1\ncore\na1\na2\n");
    }

    #[test]
    fn attachments_survive_a_later_replace() {
        let d = dialect();
        let steps = [
            step(RefinementOp::Before, "b\n"),
            step(RefinementOp::Replace, "swapped\n"),
        ];
        let slot = compose_vr("core\n", false, &steps, &d).unwrap();
        assert_eq!(slot.flatten(), "b\nswapped\n");
    }

    #[test]
    fn include_super_in_attachment_is_rejected() {
        let d = dialect();
        let steps = [step(RefinementOp::Before, "[REM][INCLUDE-SUPER][ENDREM]\n")];
        let err = compose_vr("core\n", false, &steps, &d).unwrap_err();
        match err {
            ComposeError::DanglingSuperInAttachment { op, .. } => assert_eq!(op, "before"),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn include_super_against_empty_block_warns() {
        let d = dialect();
        let steps = [step(RefinementOp::Replace, "x\n[REM][INCLUDE-SUPER][ENDREM]\ny\n")];
        let slot = compose_vr("", true, &steps, &d).unwrap();
        assert_eq!(slot.core, "x\ny\n");
        assert_eq!(slot.warnings.len(), 1);
        assert!(slot.warnings[0].message.contains("empty region"));
    }

    #[test]
    fn literal_steps_skip_include_super_handling() {
        let d = dialect();
        let mut directive = step(RefinementOp::After, "[REM][INCLUDE-SUPER][ENDREM]\n");
        directive.literal = true;
        let slot = compose_vr("core\n", false, &[directive], &d).unwrap();
        assert_eq!(slot.afters, vec!["[REM][INCLUDE-SUPER][ENDREM]\n"]);
    }

    #[test]
    fn helper_style_include_super_is_recognized() {
        let d = dialect();
        let steps = [step(RefinementOp::Replace, "pre\n// INCLUDE-SUPER\npost\n")];
        let slot = compose_vr("base\n", false, &steps, &d).unwrap();
        assert_eq!(slot.core, "pre\nbase\npost\n");
    }
}
