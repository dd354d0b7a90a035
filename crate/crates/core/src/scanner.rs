//! Extracting variability regions from layer directories.
//!
//! Parsing is line-based: a line is either a marker (when one of the dialect
//! patterns matches it completely) or literal content. Regions nest by
//! textual containment. Literal bytes are preserved exactly; marker lines are
//! stored verbatim on their region so that serializing a parsed artifact
//! reproduces the input byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::diag::{Pos, Span, Warning};
use crate::dialect::{DialectConfig, DialectError, FileClass, Marker, MarkerSet};
use crate::lex::is_identifier;
use crate::model::{
    Artifact, ArtifactKind, Layer, MarkerStyle, ProductLine, Segment, VariabilityRegion, VrKind,
};

/// Structure-level failures inside one artifact text.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArtifactError {
    #[error("{span}: {message}")]
    MarkerMismatch { span: Span, message: String },
    #[error("{span}: duplicate region '{name}' among siblings")]
    DuplicateVr { span: Span, name: String },
}

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("product-line root {path} is not a directory")]
    NotADirectory { path: PathBuf },
    #[error("{path} is not valid UTF-8; templates and helpers must be UTF-8")]
    InvalidUtf8 { path: PathBuf },
    #[error("{path}: {source}")]
    Artifact {
        path: PathBuf,
        #[source]
        source: ArtifactError,
    },
    #[error(transparent)]
    Dialect(#[from] DialectError),
}

/// What a scan found, for reporting.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ScanReport {
    pub layers_loaded: usize,
    pub templates: usize,
    pub helpers: usize,
    pub opaque: usize,
    pub whole_artifacts: usize,
    pub content_blocks: usize,
    pub empty_blocks: usize,
    pub warnings: Vec<Warning>,
}

/// An open region being assembled during the line scan. The bottom stack
/// entry is the whole-artifact region and never closes.
struct Open {
    name: Option<String>,
    qualifier: Option<String>,
    style: Option<MarkerStyle>,
    raw_open: Option<String>,
    start: Pos,
    body: Vec<Segment>,
    children: Vec<VariabilityRegion>,
    pending: String,
}

impl Open {
    fn root() -> Self {
        Open {
            name: None,
            qualifier: None,
            style: None,
            raw_open: None,
            start: Pos::new(1, 1),
            body: Vec::new(),
            children: Vec::new(),
            pending: String::new(),
        }
    }

    fn region(
        name: String,
        qualifier: Option<String>,
        style: MarkerStyle,
        raw_open: &str,
        start: Pos,
    ) -> Self {
        Open {
            name: Some(name),
            qualifier,
            style: Some(style),
            raw_open: Some(raw_open.to_string()),
            start,
            body: Vec::new(),
            children: Vec::new(),
            pending: String::new(),
        }
    }

    fn flush(&mut self) {
        if !self.pending.is_empty() {
            self.body.push(Segment::Literal(std::mem::take(&mut self.pending)));
        }
    }

    fn attach(&mut self, region: VariabilityRegion) {
        self.flush();
        let idx = self.children.len();
        self.children.push(region);
        self.body.push(Segment::Child(idx));
    }

    /// Closes a block-style region. A whitespace-only interior with no
    /// nested regions makes it an empty block; the raw interior is kept so
    /// the bytes survive serialization.
    fn close_block(mut self, raw_close: &str, end: Pos) -> VariabilityRegion {
        self.flush();
        let interior_is_blank = self.children.is_empty()
            && self.body.iter().all(|seg| match seg {
                Segment::Literal(text) => text.chars().all(char::is_whitespace),
                Segment::Child(_) => false,
            });
        if interior_is_blank {
            let interior: String = self
                .body
                .iter()
                .map(|seg| match seg {
                    Segment::Literal(text) => text.as_str(),
                    Segment::Child(_) => unreachable!("blank interior has no children"),
                })
                .collect();
            let mut region =
                VariabilityRegion::empty_block(self.name.unwrap_or_default(), self.qualifier);
            region.span = Span::new(self.start, end);
            region.raw_open = self.raw_open;
            region.raw_close = Some(raw_close.to_string());
            region.raw_interior = if interior.is_empty() { None } else { Some(interior) };
            region
        } else {
            VariabilityRegion {
                name: self.name,
                qualifier: self.qualifier,
                kind: VrKind::ContentBlock,
                style: Some(MarkerStyle::Block),
                body: self.body,
                children: self.children,
                span: Span::new(self.start, end),
                raw_open: self.raw_open,
                raw_close: Some(raw_close.to_string()),
                raw_interior: None,
            }
        }
    }

    fn close_comment(mut self, raw_close: &str, end: Pos) -> VariabilityRegion {
        self.flush();
        VariabilityRegion {
            name: self.name,
            qualifier: None,
            kind: VrKind::ContentBlock,
            style: Some(MarkerStyle::Comment),
            body: self.body,
            children: self.children,
            span: Span::new(self.start, end),
            raw_open: self.raw_open,
            raw_close: Some(raw_close.to_string()),
            raw_interior: None,
        }
    }
}

/// Parses one artifact text with the template marker set.
pub fn parse_artifact(
    text: &str,
    dialect: &DialectConfig,
) -> Result<VariabilityRegion, ArtifactError> {
    parse_artifact_with(text, &dialect.template)
}

/// Parses one artifact text with an explicit marker set.
pub fn parse_artifact_with(
    text: &str,
    markers: &MarkerSet,
) -> Result<VariabilityRegion, ArtifactError> {
    let mut stack = vec![Open::root()];
    let mut line_no: u32 = 0;
    let mut last_line_len: u32 = 0;

    for raw_line in text.split_inclusive('\n') {
        line_no += 1;
        let content = raw_line.trim_end_matches('\n').trim_end_matches('\r');
        last_line_len = content.chars().count() as u32;
        let line_span = Span::new(Pos::new(line_no, 1), Pos::new(line_no, last_line_len.max(1)));

        let marker =
            markers.classify(content).map_err(|kinds| ArtifactError::MarkerMismatch {
                span: line_span,
                message: format!("line matches multiple marker kinds: {}", kinds.join(", ")),
            })?;

        match marker {
            None | Some(Marker::IncludeSuper) => {
                // Include-super is resolved during composition; here it is
                // ordinary body text.
                stack.last_mut().unwrap().pending.push_str(raw_line);
            }
            Some(Marker::BlockOpen { name, qualifier }) => {
                stack.last_mut().unwrap().flush();
                stack.push(Open::region(
                    name,
                    qualifier,
                    MarkerStyle::Block,
                    raw_line,
                    line_span.start,
                ));
            }
            Some(Marker::BlockClose) => {
                if stack.len() == 1 {
                    return Err(ArtifactError::MarkerMismatch {
                        span: line_span,
                        message: "block close marker without a matching open".into(),
                    });
                }
                if stack.last().unwrap().style != Some(MarkerStyle::Block) {
                    let open = stack.last().unwrap().name.clone().unwrap_or_default();
                    return Err(ArtifactError::MarkerMismatch {
                        span: line_span,
                        message: format!(
                            "block close marker crosses open comment region '{open}'"
                        ),
                    });
                }
                let region = stack.pop().unwrap().close_block(raw_line, line_span.end);
                stack.last_mut().unwrap().attach(region);
            }
            Some(Marker::CommentBegin { name }) => {
                stack.last_mut().unwrap().flush();
                stack.push(Open::region(
                    name,
                    None,
                    MarkerStyle::Comment,
                    raw_line,
                    line_span.start,
                ));
            }
            Some(Marker::CommentEnd { name }) => {
                let top = stack.last().unwrap();
                let matches_top = top.style == Some(MarkerStyle::Comment)
                    && top.name.as_deref() == Some(name.as_str());
                if !matches_top {
                    let message = if stack.len() == 1 {
                        format!("end marker for region '{name}' without a matching begin")
                    } else {
                        format!(
                            "end marker for region '{name}' crosses open region '{}'",
                            stack.last().unwrap().name.clone().unwrap_or_default()
                        )
                    };
                    return Err(ArtifactError::MarkerMismatch { span: line_span, message });
                }
                let region = stack.pop().unwrap().close_comment(raw_line, line_span.end);
                stack.last_mut().unwrap().attach(region);
            }
        }
    }

    if stack.len() > 1 {
        let open = stack.last().unwrap();
        let name = open.name.clone().unwrap_or_default();
        return Err(ArtifactError::MarkerMismatch {
            span: Span::new(open.start, open.start),
            message: format!("region '{name}' opened here is never closed"),
        });
    }

    let mut root = stack.pop().unwrap();
    root.flush();
    let end = Pos::new(line_no.max(1), last_line_len + 1);
    let root_vr = VariabilityRegion {
        name: None,
        qualifier: None,
        kind: VrKind::WholeArtifact,
        style: None,
        body: root.body,
        children: root.children,
        span: Span::new(Pos::new(1, 1), end),
        raw_open: None,
        raw_close: None,
        raw_interior: None,
    };
    check_sibling_names(&root_vr)?;
    Ok(root_vr)
}

/// Checks that same-named siblings all carry pairwise-distinct qualifiers.
/// A plain and a qualified region with the same name also clash, because the
/// plain one could never be addressed unambiguously.
fn check_sibling_names(vr: &VariabilityRegion) -> Result<(), ArtifactError> {
    let mut qualifiers_by_name: BTreeMap<&str, Vec<Option<&str>>> = BTreeMap::new();
    for child in &vr.children {
        let name = child.name.as_deref().unwrap_or("");
        let qual = child.qualifier.as_deref();
        let quals = qualifiers_by_name.entry(name).or_default();
        let clashes =
            quals.iter().any(|q| *q == qual || q.is_none()) || (!quals.is_empty() && qual.is_none());
        if clashes {
            let shown = match qual {
                Some(q) => format!("{name}#{q}"),
                None => name.to_string(),
            };
            return Err(ArtifactError::DuplicateVr { span: child.span, name: shown });
        }
        quals.push(qual);
    }
    for child in &vr.children {
        check_sibling_names(child)?;
    }
    Ok(())
}

/// Serializes a region tree with the template marker set.
pub fn serialize_artifact(root: &VariabilityRegion, dialect: &DialectConfig) -> String {
    serialize_artifact_with(root, &dialect.template)
}

/// Serializes a region tree. Parsed regions re-emit their original marker
/// lines; synthetic regions use the dialect's canonical formats.
pub fn serialize_artifact_with(root: &VariabilityRegion, markers: &MarkerSet) -> String {
    let mut out = String::new();
    if root.kind == VrKind::WholeArtifact {
        write_body(root, markers, &mut out);
    } else {
        write_region(root, markers, &mut out);
    }
    out
}

fn write_body(vr: &VariabilityRegion, markers: &MarkerSet, out: &mut String) {
    for seg in &vr.body {
        match seg {
            Segment::Literal(text) => out.push_str(text),
            Segment::Child(i) => write_region(&vr.children[*i], markers, out),
        }
    }
}

fn write_region(vr: &VariabilityRegion, markers: &MarkerSet, out: &mut String) {
    let name = vr.name.as_deref().unwrap_or("");
    match &vr.raw_open {
        Some(raw) => out.push_str(raw),
        None => {
            out.push_str(&open_marker_line(vr, markers, name));
            out.push('\n');
        }
    }
    if vr.kind == VrKind::EmptyBlock {
        if let Some(interior) = &vr.raw_interior {
            out.push_str(interior);
        }
    } else {
        write_body(vr, markers, out);
    }
    match &vr.raw_close {
        Some(raw) => out.push_str(raw),
        None => {
            out.push_str(&close_marker_line(vr, markers, name));
            out.push('\n');
        }
    }
}

fn open_marker_line(vr: &VariabilityRegion, markers: &MarkerSet, name: &str) -> String {
    match vr.style {
        Some(MarkerStyle::Block) => match &markers.block_open {
            Some(open) => open.render(name, vr.qualifier.as_deref()),
            // The marker set has no block syntax; comment markers are the
            // only representable form.
            None => markers.comment_vr_begin.render(name),
        },
        _ => markers.comment_vr_begin.render(name),
    }
}

fn close_marker_line(vr: &VariabilityRegion, markers: &MarkerSet, name: &str) -> String {
    match vr.style {
        Some(MarkerStyle::Block) => match &markers.block_close {
            Some(close) => close.render(name),
            None => markers.comment_vr_end.render(name),
        },
        _ => markers.comment_vr_end.render(name),
    }
}

/// Scans a product-line root: loads `cgpl.dialect` (or the default dialect)
/// and every immediate subdirectory as a layer.
pub fn scan_product_line(root: &Path) -> Result<(ProductLine, ScanReport), ScanError> {
    let (dialect, _) = DialectConfig::load(root)?;
    scan_with_dialect(root, dialect)
}

/// Scans with an already-loaded dialect.
pub fn scan_with_dialect(
    root: &Path,
    dialect: DialectConfig,
) -> Result<(ProductLine, ScanReport), ScanError> {
    let meta = std::fs::metadata(root)
        .map_err(|source| ScanError::Io { path: root.to_path_buf(), source })?;
    if !meta.is_dir() {
        return Err(ScanError::NotADirectory { path: root.to_path_buf() });
    }

    let mut report = ScanReport::default();
    let mut layer_dirs: Vec<(String, PathBuf)> = Vec::new();
    let entries = std::fs::read_dir(root)
        .map_err(|source| ScanError::Io { path: root.to_path_buf(), source })?;
    for entry in entries {
        let entry = entry.map_err(|source| ScanError::Io { path: root.to_path_buf(), source })?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().to_string();
        if name.starts_with('.') {
            continue;
        }
        if !is_identifier(&name) {
            report.warnings.push(Warning::in_file(
                &path,
                format!("directory name '{name}' is not an identifier; not loaded as a layer"),
            ));
            continue;
        }
        layer_dirs.push((name, path));
    }
    layer_dirs.sort();

    if layer_dirs.is_empty() {
        report
            .warnings
            .push(Warning::in_file(root, "no layer directories found under product-line root"));
    }

    // Collect every file first, then parse; per-file parsing is pure, so the
    // batch runs in parallel when the `parallel` feature is enabled.
    struct Job {
        layer: usize,
        abs: PathBuf,
        rel: String,
    }
    let mut jobs: Vec<Job> = Vec::new();
    for (idx, (_, dir)) in layer_dirs.iter().enumerate() {
        for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
            let entry = entry.map_err(|e| {
                let path = e.path().map(Path::to_path_buf).unwrap_or_else(|| dir.clone());
                match e.into_io_error() {
                    Some(source) => ScanError::Io { path, source },
                    None => {
                        ScanError::Io { path, source: std::io::Error::other("walk failed") }
                    }
                }
            })?;
            if entry.file_name().to_string_lossy().starts_with('.') {
                continue;
            }
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry
                .path()
                .strip_prefix(dir)
                .expect("walked path is under layer dir")
                .components()
                .map(|c| c.as_os_str().to_string_lossy().to_string())
                .collect::<Vec<_>>()
                .join("/");
            jobs.push(Job { layer: idx, abs: entry.path().to_path_buf(), rel });
        }
    }

    let parse_one = |job: &Job| -> Result<(usize, Artifact), ScanError> {
        let bytes = std::fs::read(&job.abs)
            .map_err(|source| ScanError::Io { path: job.abs.clone(), source })?;
        let file_name = job.rel.rsplit('/').next().unwrap_or(&job.rel);
        let ext = file_name.rfind('.').map(|dot| &file_name[dot + 1..]).unwrap_or("");
        let artifact = match dialect.class_of_extension(ext) {
            Some(class) => {
                let text = String::from_utf8(bytes)
                    .map_err(|_| ScanError::InvalidUtf8 { path: job.abs.clone() })?;
                let markers = dialect.markers_for(class);
                let root = parse_artifact_with(&text, markers)
                    .map_err(|source| ScanError::Artifact { path: job.abs.clone(), source })?;
                let kind = match class {
                    FileClass::Template => ArtifactKind::Template,
                    FileClass::Helper => ArtifactKind::Helper,
                };
                Artifact::new(job.rel.clone(), kind, root)
            }
            None => match String::from_utf8(bytes) {
                Ok(text) => Artifact::new(
                    job.rel.clone(),
                    ArtifactKind::Opaque,
                    VariabilityRegion::whole_artifact(
                        if text.is_empty() { vec![] } else { vec![Segment::Literal(text)] },
                        vec![],
                    ),
                ),
                Err(err) => {
                    let mut artifact = Artifact::new(
                        job.rel.clone(),
                        ArtifactKind::Opaque,
                        VariabilityRegion::whole_artifact(vec![], vec![]),
                    );
                    artifact.binary = Some(err.into_bytes());
                    artifact
                }
            },
        };
        Ok((job.layer, artifact))
    };

    #[cfg(feature = "parallel")]
    let parsed: Result<Vec<(usize, Artifact)>, ScanError> =
        jobs.par_iter().map(parse_one).collect();
    #[cfg(not(feature = "parallel"))]
    let parsed: Result<Vec<(usize, Artifact)>, ScanError> = jobs.iter().map(parse_one).collect();
    let parsed = parsed?;

    let mut layers: Vec<Layer> = layer_dirs
        .iter()
        .map(|(name, dir)| Layer::new(name.clone(), dir.clone()))
        .collect();
    for (idx, artifact) in parsed {
        match artifact.kind {
            ArtifactKind::Template => report.templates += 1,
            ArtifactKind::Helper => report.helpers += 1,
            ArtifactKind::Opaque => report.opaque += 1,
        }
        count_regions(&artifact.root_vr, &mut report);
        layers[idx].artifacts.insert(artifact.relative_path.clone(), artifact);
    }

    let mut pl = ProductLine::new(root, dialect);
    for layer in layers {
        pl.layers.insert(layer.name.clone(), layer);
    }
    report.layers_loaded = pl.layers.len();
    Ok((pl, report))
}

fn count_regions(vr: &VariabilityRegion, report: &mut ScanReport) {
    match vr.kind {
        VrKind::WholeArtifact => report.whole_artifacts += 1,
        VrKind::ContentBlock => report.content_blocks += 1,
        VrKind::EmptyBlock => report.empty_blocks += 1,
    }
    for child in &vr.children {
        count_regions(child, report);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialect::DialectConfig;

    fn dialect() -> DialectConfig {
        DialectConfig::default()
    }

    const CLASS_TEMPLATE: &str = "\
[DEFINE classBody FOR Class]
public class [name] {
[REM]BEGIN VR:Fields[ENDREM]
    private int id;
[REM]END VR:Fields[ENDREM]
[DEFINE getter FOR Attribute]
    public [type] get[name]();
[ENDDEFINE]
[DEFINE spare]
[ENDDEFINE]
}
[ENDDEFINE]
";

    #[test]
    fn parses_nested_structure() {
        let root = parse_artifact(CLASS_TEMPLATE, &dialect()).unwrap();
        assert_eq!(root.kind, VrKind::WholeArtifact);
        assert_eq!(root.children.len(), 1);
        let class_body = &root.children[0];
        assert_eq!(class_body.name.as_deref(), Some("classBody"));
        assert_eq!(class_body.qualifier.as_deref(), Some("Class"));
        assert_eq!(class_body.kind, VrKind::ContentBlock);
        let names: Vec<_> =
            class_body.children.iter().map(|c| c.name.clone().unwrap()).collect();
        assert_eq!(names, vec!["Fields", "getter", "spare"]);
        assert_eq!(class_body.children[0].style, Some(MarkerStyle::Comment));
        assert_eq!(class_body.children[1].style, Some(MarkerStyle::Block));
        assert_eq!(class_body.children[2].kind, VrKind::EmptyBlock);
    }

    #[test]
    fn serialization_is_byte_identical() {
        let d = dialect();
        let root = parse_artifact(CLASS_TEMPLATE, &d).unwrap();
        assert_eq!(serialize_artifact(&root, &d), CLASS_TEMPLATE);
    }

    #[test]
    fn byte_accounting_matches_input_length() {
        let d = dialect();
        let root = parse_artifact(CLASS_TEMPLATE, &d).unwrap();
        assert_eq!(root.literal_len() + root.marker_len(), CLASS_TEMPLATE.len());
    }

    #[test]
    fn crlf_survives_round_trip() {
        let d = dialect();
        let text = "[DEFINE a]\r\nline one\r\n[ENDDEFINE]\r\ntrailing";
        let root = parse_artifact(text, &d).unwrap();
        assert_eq!(root.children.len(), 1);
        assert_eq!(root.children[0].name.as_deref(), Some("a"));
        assert_eq!(serialize_artifact(&root, &d), text);
    }

    #[test]
    fn include_super_line_is_literal_body() {
        let d = dialect();
        let text = "[DEFINE a]\n[REM][INCLUDE-SUPER][ENDREM]\nmore\n[ENDDEFINE]\n";
        let root = parse_artifact(text, &d).unwrap();
        let a = &root.children[0];
        assert_eq!(a.kind, VrKind::ContentBlock);
        assert_eq!(a.body.len(), 1);
        match &a.body[0] {
            Segment::Literal(t) => {
                assert!(t.contains("INCLUDE-SUPER"));
                assert!(t.contains("more"));
            }
            Segment::Child(_) => panic!("expected literal body"),
        }
    }

    #[test]
    fn whitespace_only_interior_becomes_empty_block() {
        let d = dialect();
        let text = "[DEFINE pad]\n\n   \n[ENDDEFINE]\n";
        let root = parse_artifact(text, &d).unwrap();
        let pad = &root.children[0];
        assert_eq!(pad.kind, VrKind::EmptyBlock);
        assert!(pad.body.is_empty());
        assert_eq!(pad.raw_interior.as_deref(), Some("\n   \n"));
        assert_eq!(serialize_artifact(&root, &d), text);
    }

    #[test]
    fn empty_comment_region_stays_content_block() {
        let d = dialect();
        let text = "[REM]BEGIN VR:gap[ENDREM]\n[REM]END VR:gap[ENDREM]\n";
        let root = parse_artifact(text, &d).unwrap();
        assert_eq!(root.children[0].kind, VrKind::ContentBlock);
        assert!(root.children[0].body.is_empty());
    }

    #[test]
    fn crossing_comment_end_is_rejected() {
        let d = dialect();
        let text = "[REM]BEGIN VR:a[ENDREM]\n[REM]END VR:b[ENDREM]\n";
        let err = parse_artifact(text, &d).unwrap_err();
        match err {
            ArtifactError::MarkerMismatch { message, .. } => {
                assert!(message.contains("'b'"), "{message}");
                assert!(message.contains("'a'"), "{message}");
            }
            other => panic!("unexpected error: {other:?}"),
        }
    }

    #[test]
    fn unclosed_region_is_rejected() {
        let d = dialect();
        let err = parse_artifact("[DEFINE a]\nbody\n", &d).unwrap_err();
        match err {
            ArtifactError::MarkerMismatch { span, message } => {
                assert_eq!(span.start.line, 1);
                assert!(message.contains("never closed"), "{message}");
            }
            other => panic!("unexpected error: {other:?}"),
        }
    }

    #[test]
    fn stray_close_markers_are_rejected() {
        let d = dialect();
        assert!(matches!(
            parse_artifact("[ENDDEFINE]\n", &d),
            Err(ArtifactError::MarkerMismatch { .. })
        ));
        assert!(matches!(
            parse_artifact("[REM]END VR:x[ENDREM]\n", &d),
            Err(ArtifactError::MarkerMismatch { .. })
        ));
        // A block close cannot close a comment region.
        assert!(matches!(
            parse_artifact("[REM]BEGIN VR:x[ENDREM]\n[ENDDEFINE]\n", &d),
            Err(ArtifactError::MarkerMismatch { .. })
        ));
    }

    #[test]
    fn duplicate_siblings_need_distinct_qualifiers() {
        let d = dialect();
        let dup = "[DEFINE m]\n[ENDDEFINE]\n[DEFINE m]\n[ENDDEFINE]\n";
        assert!(matches!(parse_artifact(dup, &d), Err(ArtifactError::DuplicateVr { .. })));

        let plain_then_qualified = "[DEFINE m]\n[ENDDEFINE]\n[DEFINE m FOR T]\n[ENDDEFINE]\n";
        assert!(matches!(
            parse_artifact(plain_then_qualified, &d),
            Err(ArtifactError::DuplicateVr { .. })
        ));

        let distinct = "[DEFINE m FOR A]\n[ENDDEFINE]\n[DEFINE m FOR B]\n[ENDDEFINE]\n";
        let root = parse_artifact(distinct, &d).unwrap();
        assert_eq!(root.children.len(), 2);

        // Same name on different nesting levels is fine.
        let nested = "[DEFINE m]\n[DEFINE m FOR A]\n[ENDDEFINE]\n[ENDDEFINE]\n";
        assert!(parse_artifact(nested, &d).is_ok());
    }

    #[test]
    fn helper_markers_parse_helper_files() {
        let d = dialect();
        let text = "\
package demo;
// BEGIN VR:Imports
import java.util.List;
// END VR:Imports
class Util {}
";
        let root = parse_artifact_with(text, &d.helper).unwrap();
        assert_eq!(root.children.len(), 1);
        assert_eq!(root.children[0].name.as_deref(), Some("Imports"));
        assert_eq!(serialize_artifact_with(&root, &d.helper), text);
    }

    #[test]
    fn canonical_serialization_for_synthetic_regions() {
        let d = dialect();
        let region = VariabilityRegion::content_block(
            "greet",
            Some("Class".into()),
            MarkerStyle::Block,
            vec![Segment::Literal("hello\n".into())],
            vec![],
        );
        let root = VariabilityRegion::whole_artifact(vec![Segment::Child(0)], vec![region]);
        let text = serialize_artifact(&root, &d);
        assert_eq!(text, "[DEFINE greet FOR Class]\nhello\n[ENDDEFINE]\n");
        let reparsed = parse_artifact(&text, &d).unwrap();
        assert!(reparsed.children[0].same_shape(&root.children[0]));
    }

    #[test]
    fn scan_builds_layers_and_counts() {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path();
        std::fs::create_dir_all(root.join("base/templates")).unwrap();
        std::fs::create_dir_all(root.join("extra")).unwrap();
        std::fs::create_dir_all(root.join("not-a-layer")).unwrap();
        std::fs::write(
            root.join("base/templates/Class.xpt"),
            "[DEFINE classBody FOR Class]\nbody\n[ENDDEFINE]\n",
        )
        .unwrap();
        std::fs::write(root.join("base/Util.java"), "// BEGIN VR:A\n// END VR:A\n").unwrap();
        std::fs::write(root.join("base/logo.bin"), [0xFFu8, 0xFE, 0x00, 0x01]).unwrap();
        std::fs::write(root.join("extra/readme.txt"), "plain text\n").unwrap();
        std::fs::write(root.join("layers.ldl"), "// not scanned as a layer\n").unwrap();

        let (pl, report) = scan_product_line(root).unwrap();
        assert_eq!(report.layers_loaded, 2);
        assert_eq!(pl.layers.keys().collect::<Vec<_>>(), vec!["base", "extra"]);
        assert_eq!(report.templates, 1);
        assert_eq!(report.helpers, 1);
        assert_eq!(report.opaque, 2);
        assert_eq!(report.content_blocks, 2);
        assert!(report.warnings.iter().any(|w| w.message.contains("not-a-layer")));

        let base = &pl.layers["base"];
        assert!(base.artifacts.contains_key("templates/Class.xpt"));
        let bin = &base.artifacts["logo.bin"];
        assert_eq!(bin.kind, ArtifactKind::Opaque);
        assert_eq!(bin.binary.as_deref(), Some(&[0xFFu8, 0xFE, 0x00, 0x01][..]));
    }

    #[test]
    fn scan_rejects_invalid_utf8_templates() {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path();
        std::fs::create_dir_all(root.join("base")).unwrap();
        std::fs::write(root.join("base/Bad.xpt"), [0x5B, 0xFF, 0xFE]).unwrap();
        match scan_product_line(root) {
            Err(ScanError::InvalidUtf8 { path }) => {
                assert!(path.ends_with("Bad.xpt"));
            }
            other => panic!("unexpected result: {other:?}"),
        }
    }
}
