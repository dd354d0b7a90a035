//! Core domain model: variability regions, artifacts, layers, refinements,
//! and signature resolution.
//!
//! A product line is a directory of layers; each layer is a directory of
//! artifacts; each artifact is a tree of variability regions (VRs). A
//! signature addresses one VR: a dot-joined artifact path, optionally
//! followed by `:` and a dot-joined VR path whose segments may carry a
//! `#type` qualifier to distinguish same-named siblings.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::diag::Span;
use crate::dialect::DialectConfig;
use crate::lex::{SyntaxError, Token, TokenStream};

/// One segment of a VR path: a name plus an optional type qualifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VrName {
    pub name: String,
    pub qualifier: Option<String>,
}

impl VrName {
    pub fn plain(name: impl Into<String>) -> Self {
        VrName { name: name.into(), qualifier: None }
    }

    pub fn qualified(name: impl Into<String>, qualifier: impl Into<String>) -> Self {
        VrName { name: name.into(), qualifier: Some(qualifier.into()) }
    }
}

impl fmt::Display for VrName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.qualifier {
            Some(q) => write!(f, "{}#{}", self.name, q),
            None => write!(f, "{}", self.name),
        }
    }
}

/// Address of a VR: `artifact.path[:vr.path]`. An empty VR path addresses
/// the whole-artifact region.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Signature {
    pub artifact_path: Vec<String>,
    pub vr_path: Vec<VrName>,
}

impl Signature {
    pub fn whole_artifact(artifact_path: Vec<String>) -> Self {
        Signature { artifact_path, vr_path: Vec::new() }
    }

    pub fn new(artifact_path: Vec<String>, vr_path: Vec<VrName>) -> Self {
        Signature { artifact_path, vr_path }
    }

    pub fn is_whole_artifact(&self) -> bool {
        self.vr_path.is_empty()
    }

    /// The qualifier of the addressed VR itself (the final path segment).
    pub fn type_qualifier(&self) -> Option<&str> {
        self.vr_path.last().and_then(|s| s.qualifier.as_deref())
    }

    pub(crate) fn parse_from(ts: &mut TokenStream) -> Result<Signature, SyntaxError> {
        let (first, _) = ts.expect_ident("a signature")?;
        let mut artifact_path = vec![first];
        while ts.eat(&Token::Dot) {
            artifact_path.push(ts.expect_ident("an artifact path segment")?.0);
        }
        let mut vr_path = Vec::new();
        if ts.eat(&Token::Colon) {
            loop {
                let (name, _) = ts.expect_ident("a VR name")?;
                let qualifier = if ts.eat(&Token::Hash) {
                    Some(ts.expect_ident("a type qualifier")?.0)
                } else {
                    None
                };
                vr_path.push(VrName { name, qualifier });
                if !ts.eat(&Token::Dot) {
                    break;
                }
            }
        }
        Ok(Signature { artifact_path, vr_path })
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.artifact_path.join("."))?;
        if !self.vr_path.is_empty() {
            let rendered: Vec<String> = self.vr_path.iter().map(|s| s.to_string()).collect();
            write!(f, ":{}", rendered.join("."))?;
        }
        Ok(())
    }
}

impl FromStr for Signature {
    type Err = SyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut ts = TokenStream::new(s)?;
        let sig = Signature::parse_from(&mut ts)?;
        if !ts.at_eof() {
            return Err(ts.error(vec!["end of signature".into()]));
        }
        Ok(sig)
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// The three refinement operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RefinementOp {
    Replace,
    Before,
    After,
}

impl RefinementOp {
    /// The DSL keyword form.
    pub fn keyword(&self) -> &'static str {
        match self {
            RefinementOp::Replace => "replaces",
            RefinementOp::Before => "before",
            RefinementOp::After => "after",
        }
    }

    /// The noun form used in reports and machine output.
    pub fn label(&self) -> &'static str {
        match self {
            RefinementOp::Replace => "replace",
            RefinementOp::Before => "before",
            RefinementOp::After => "after",
        }
    }
}

impl fmt::Display for RefinementOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

impl Serialize for RefinementOp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VrKind {
    /// A marked region with content.
    ContentBlock,
    /// A marked region with an empty body and no children.
    EmptyBlock,
    /// The implicit region wrapping an entire artifact.
    WholeArtifact,
}

/// How a region was delimited in source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkerStyle {
    /// Native block syntax (e.g. DEFINE/ENDDEFINE).
    Block,
    /// Comment-based begin/end markers.
    Comment,
}

/// One piece of a VR body: literal text or a reference to a child region.
/// Child references index `children` in order; each index appears exactly
/// once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Literal(String),
    Child(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariabilityRegion {
    /// None exactly for the whole-artifact region, whose name is the
    /// artifact's.
    pub name: Option<String>,
    /// Type qualifier captured from a block-open marker.
    pub qualifier: Option<String>,
    pub kind: VrKind,
    /// None exactly for the whole-artifact region.
    pub style: Option<MarkerStyle>,
    pub body: Vec<Segment>,
    pub children: Vec<VariabilityRegion>,
    pub span: Span,
    /// Exact marker lines (terminators included) as parsed, for byte-exact
    /// serialization; absent on regions built in memory.
    pub raw_open: Option<String>,
    pub raw_close: Option<String>,
    /// Whitespace-only interior bytes of an EmptyBlock, preserved for
    /// serialization but excluded from the (empty) logical body.
    pub raw_interior: Option<String>,
}

impl VariabilityRegion {
    pub fn whole_artifact(body: Vec<Segment>, children: Vec<VariabilityRegion>) -> Self {
        VariabilityRegion {
            name: None,
            qualifier: None,
            kind: VrKind::WholeArtifact,
            style: None,
            body,
            children,
            span: Span::synthetic(),
            raw_open: None,
            raw_close: None,
            raw_interior: None,
        }
    }

    pub fn content_block(
        name: impl Into<String>,
        qualifier: Option<String>,
        style: MarkerStyle,
        body: Vec<Segment>,
        children: Vec<VariabilityRegion>,
    ) -> Self {
        VariabilityRegion {
            name: Some(name.into()),
            qualifier,
            kind: VrKind::ContentBlock,
            style: Some(style),
            body,
            children,
            span: Span::synthetic(),
            raw_open: None,
            raw_close: None,
            raw_interior: None,
        }
    }

    pub fn empty_block(name: impl Into<String>, qualifier: Option<String>) -> Self {
        VariabilityRegion {
            name: Some(name.into()),
            qualifier,
            kind: VrKind::EmptyBlock,
            style: Some(MarkerStyle::Block),
            body: Vec::new(),
            children: Vec::new(),
            span: Span::synthetic(),
            raw_open: None,
            raw_close: None,
            raw_interior: None,
        }
    }

    /// Structural equality: shape, names, kinds, styles, and literal text.
    /// Spans and raw marker bytes are serialization metadata and ignored.
    pub fn same_shape(&self, other: &VariabilityRegion) -> bool {
        self.name == other.name
            && self.qualifier == other.qualifier
            && self.kind == other.kind
            && self.style == other.style
            && self.body == other.body
            && self.children.len() == other.children.len()
            && self
                .children
                .iter()
                .zip(&other.children)
                .all(|(a, b)| a.same_shape(b))
    }

    /// Sum of literal bytes in this subtree.
    pub fn literal_len(&self) -> usize {
        let own: usize = self
            .body
            .iter()
            .map(|s| match s {
                Segment::Literal(t) => t.len(),
                Segment::Child(_) => 0,
            })
            .sum();
        own + self.children.iter().map(|c| c.literal_len()).sum::<usize>()
    }

    /// Bytes held only for byte-exact serialization: marker lines and
    /// preserved empty-block interiors, over the whole subtree.
    pub fn marker_len(&self) -> usize {
        let own = self.raw_open.as_deref().map_or(0, str::len)
            + self.raw_close.as_deref().map_or(0, str::len)
            + self.raw_interior.as_deref().map_or(0, str::len);
        own + self.children.iter().map(|c| c.marker_len()).sum::<usize>()
    }

    /// True when every child index appears exactly once, in body order.
    pub fn body_indices_consistent(&self) -> bool {
        let refs: Vec<usize> = self
            .body
            .iter()
            .filter_map(|s| match s {
                Segment::Child(i) => Some(*i),
                Segment::Literal(_) => None,
            })
            .collect();
        refs.len() == self.children.len() && refs.iter().enumerate().all(|(n, &i)| n == i)
    }

    /// Total number of regions in this subtree, including self.
    pub fn region_count(&self) -> usize {
        1 + self.children.iter().map(|c| c.region_count()).sum::<usize>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactKind {
    Template,
    Helper,
    Opaque,
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArtifactKind::Template => write!(f, "template"),
            ArtifactKind::Helper => write!(f, "helper"),
            ArtifactKind::Opaque => write!(f, "opaque"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    /// Layer-relative path with `/` separators.
    pub relative_path: String,
    pub kind: ArtifactKind,
    /// The whole-artifact region wrapping the file content.
    pub root_vr: VariabilityRegion,
    /// Verbatim payload for non-UTF-8 opaque files; `root_vr` is empty then.
    pub binary: Option<Vec<u8>>,
}

impl Artifact {
    pub fn new(relative_path: impl Into<String>, kind: ArtifactKind, root_vr: VariabilityRegion) -> Self {
        Artifact { relative_path: relative_path.into(), kind, root_vr, binary: None }
    }

    /// Signature segments: directory components plus the file stem.
    pub fn path_segments(&self) -> Vec<String> {
        let mut parts: Vec<String> = self.relative_path.split('/').map(String::from).collect();
        if let Some(last) = parts.last_mut() {
            if let Some(dot) = last.rfind('.') {
                last.truncate(dot);
            }
        }
        parts
    }

    /// Extension without the dot; empty when the file name has none.
    pub fn extension(&self) -> &str {
        let name = self.relative_path.rsplit('/').next().unwrap_or("");
        match name.rfind('.') {
            Some(dot) => &name[dot + 1..],
            None => "",
        }
    }
}

/// A bound refinement clause. `refined_layer` names the layer the refined
/// signature was resolved against (the first declaring layer in `refines`
/// order); signatures are stored in canonical form.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub op: RefinementOp,
    pub refining: Signature,
    pub refined: Signature,
    pub refined_layer: String,
    /// Location of the clause in the layer-definition source.
    pub span: Option<Span>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Equals the layer's directory name.
    pub name: String,
    pub dir: PathBuf,
    /// Artifacts keyed by relative path (sorted, deterministic).
    pub artifacts: BTreeMap<String, Artifact>,
    /// Layers this one refines, in declaration order.
    pub refines: Vec<String>,
    pub refinements: Vec<Refinement>,
}

impl Layer {
    pub fn new(name: impl Into<String>, dir: impl Into<PathBuf>) -> Self {
        Layer {
            name: name.into(),
            dir: dir.into(),
            artifacts: BTreeMap::new(),
            refines: Vec::new(),
            refinements: Vec::new(),
        }
    }
}

/// A parsed product configuration: which generator variant to build.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductConfig {
    pub generator_name: String,
    /// Output directory as written in the config; defaults to "gen".
    pub output: Option<String>,
    /// Non-empty, duplicate-free, in selection order.
    pub selected_layers: Vec<String>,
}

impl ProductConfig {
    pub fn output_dir(&self) -> &str {
        self.output.as_deref().unwrap_or("gen")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductLine {
    pub root_dir: PathBuf,
    /// Layers keyed by name (sorted, deterministic).
    pub layers: BTreeMap<String, Layer>,
    pub dialect: DialectConfig,
}

impl ProductLine {
    pub fn new(root_dir: impl Into<PathBuf>, dialect: DialectConfig) -> Self {
        ProductLine { root_dir: root_dir.into(), layers: BTreeMap::new(), dialect }
    }

    pub fn layer(&self, name: &str) -> Option<&Layer> {
        self.layers.get(name)
    }

    /// Resolves `sig` against the artifacts of layer `within`.
    pub fn resolve(&self, sig: &Signature, within: &str) -> Result<&VariabilityRegion, ResolveError> {
        Ok(self.resolve_location(sig, within)?.vr)
    }

    /// Like [`resolve`](Self::resolve) but also returns the artifact and the
    /// child-index path, which callers use to canonicalize signatures.
    pub fn resolve_location<'a>(
        &'a self,
        sig: &Signature,
        within: &str,
    ) -> Result<VrLocation<'a>, ResolveError> {
        let layer = self
            .layers
            .get(within)
            .ok_or_else(|| ResolveError::UnknownLayer { layer: within.to_string() })?;
        resolve_in_layer(layer, sig, &self.dialect)
    }
}

/// A resolved VR with its containing artifact and child-index path.
#[derive(Debug, Clone)]
pub struct VrLocation<'a> {
    pub layer: &'a Layer,
    pub artifact: &'a Artifact,
    /// Child indices from the root region down to `vr`; empty for the
    /// whole-artifact region.
    pub node_path: Vec<usize>,
    pub vr: &'a VariabilityRegion,
}

impl VrLocation<'_> {
    /// The canonical signature of this location.
    pub fn signature(&self) -> Signature {
        signature_of(self.artifact, &self.node_path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("unknown layer '{layer}'")]
    UnknownLayer { layer: String },
    #[error("no artifact '{path}' in layer '{layer}'")]
    UnknownArtifact { layer: String, path: String },
    #[error("no region '{segment}' under '{parent}' in layer '{layer}'")]
    UnknownVr { layer: String, parent: String, segment: String },
    #[error(
        "region name '{segment}' under '{parent}' in layer '{layer}' is ambiguous; candidates: {}",
        candidates.join(", ")
    )]
    AmbiguousVr { layer: String, parent: String, segment: String, candidates: Vec<String> },
}

fn resolve_in_layer<'a>(
    layer: &'a Layer,
    sig: &Signature,
    dialect: &DialectConfig,
) -> Result<VrLocation<'a>, ResolveError> {
    let artifact = find_artifact(layer, &sig.artifact_path, dialect)?;
    let mut vr = &artifact.root_vr;
    let mut node_path = Vec::new();
    let mut parent_desc = sig.artifact_path.join(".");
    for seg in &sig.vr_path {
        let by_name: Vec<usize> = vr
            .children
            .iter()
            .enumerate()
            .filter(|(_, c)| c.name.as_deref() == Some(seg.name.as_str()))
            .map(|(i, _)| i)
            .collect();
        let chosen = match &seg.qualifier {
            Some(q) => {
                let qualified: Vec<usize> = by_name
                    .iter()
                    .copied()
                    .filter(|&i| vr.children[i].qualifier.as_deref() == Some(q.as_str()))
                    .collect();
                match qualified.as_slice() {
                    [] => {
                        return Err(ResolveError::UnknownVr {
                            layer: layer.name.clone(),
                            parent: parent_desc,
                            segment: seg.to_string(),
                        })
                    }
                    [one] => *one,
                    // Load-time duplicate checks make this unreachable, but
                    // report rather than panic on hand-built trees.
                    _ => {
                        return Err(ResolveError::AmbiguousVr {
                            layer: layer.name.clone(),
                            parent: parent_desc,
                            segment: seg.to_string(),
                            candidates: describe_candidates(vr, &qualified),
                        })
                    }
                }
            }
            None => match by_name.as_slice() {
                [] => {
                    return Err(ResolveError::UnknownVr {
                        layer: layer.name.clone(),
                        parent: parent_desc,
                        segment: seg.to_string(),
                    })
                }
                [one] => *one,
                _ => {
                    return Err(ResolveError::AmbiguousVr {
                        layer: layer.name.clone(),
                        parent: parent_desc,
                        segment: seg.to_string(),
                        candidates: describe_candidates(vr, &by_name),
                    })
                }
            },
        };
        node_path.push(chosen);
        vr = &vr.children[chosen];
        parent_desc = format!("{parent_desc}:{}", seg);
    }
    Ok(VrLocation { layer, artifact, node_path, vr })
}

fn describe_candidates(parent: &VariabilityRegion, indices: &[usize]) -> Vec<String> {
    indices
        .iter()
        .map(|&i| {
            let c = &parent.children[i];
            match (&c.name, &c.qualifier) {
                (Some(n), Some(q)) => format!("{n}#{q}"),
                (Some(n), None) => n.clone(),
                _ => String::from("<unnamed>"),
            }
        })
        .collect()
}

fn find_artifact<'a>(
    layer: &'a Layer,
    segments: &[String],
    dialect: &DialectConfig,
) -> Result<&'a Artifact, ResolveError> {
    // Rank matching artifacts: template extensions first (in config order),
    // then helper extensions, then everything else alphabetically.
    let mut best: Option<((usize, usize, String), &Artifact)> = None;
    for artifact in layer.artifacts.values() {
        if artifact.path_segments() != segments {
            continue;
        }
        let ext = artifact.extension().to_string();
        let rank = if let Some(i) = dialect.template_extensions.iter().position(|e| e == &ext) {
            (0, i, ext)
        } else if let Some(i) = dialect.helper_extensions.iter().position(|e| e == &ext) {
            (1, i, ext)
        } else {
            (2, 0, ext)
        };
        match &best {
            Some((current, _)) if *current <= rank => {}
            _ => best = Some((rank, artifact)),
        }
    }
    best.map(|(_, a)| a).ok_or_else(|| ResolveError::UnknownArtifact {
        layer: layer.name.clone(),
        path: segments.join("."),
    })
}

/// Builds the canonical signature for the region reached from `artifact`'s
/// root through `node_path`. A segment carries its qualifier only when
/// same-named siblings make it necessary.
pub fn signature_of(artifact: &Artifact, node_path: &[usize]) -> Signature {
    let mut vr = &artifact.root_vr;
    let mut vr_path = Vec::new();
    for &i in node_path {
        let child = &vr.children[i];
        let name = child.name.clone().unwrap_or_default();
        let same_named = vr
            .children
            .iter()
            .filter(|c| c.name.as_deref() == child.name.as_deref())
            .count();
        let qualifier = if same_named > 1 { child.qualifier.clone() } else { None };
        vr_path.push(VrName { name, qualifier });
        vr = child;
    }
    Signature { artifact_path: artifact.path_segments(), vr_path }
}
