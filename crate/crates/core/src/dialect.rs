//! Marker dialects: how variability regions are delimited in source files.
//!
//! A dialect bundles the line patterns that open and close regions, the
//! include-super marker, and the file extensions that select the template or
//! helper marker set. Patterns match complete lines only; a marker is never
//! recognized when it spans lines or shares a line with other content beyond
//! leading/trailing whitespace.
//!
//! Each pattern carries a companion format string used when a region that was
//! built in memory (rather than parsed) has to be serialized. Parsed regions
//! remember their original marker lines and round-trip byte-exactly.

use std::fmt;
use std::path::{Path, PathBuf};

use regex::Regex;
use thiserror::Error;

pub const DIALECT_FILE_NAME: &str = "cgpl.dialect";

#[derive(Debug, Error)]
pub enum DialectError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid pattern for '{key}': {message}")]
    InvalidPattern { key: String, message: String },
    #[error("pattern for '{key}' is missing the required capture group '{capture}'")]
    MissingCapture { key: String, capture: String },
    #[error("unknown dialect key '{key}'")]
    UnknownKey { key: String },
    #[error("invalid value for '{key}': {message}")]
    InvalidValue { key: String, message: String },
}

/// A line pattern plus the canonical text used to re-emit it.
/// Formats substitute `{name}` with the region name.
#[derive(Debug, Clone)]
pub struct MarkerPattern {
    pub regex: Regex,
    pub format: String,
}

impl PartialEq for MarkerPattern {
    fn eq(&self, other: &Self) -> bool {
        self.regex.as_str() == other.regex.as_str() && self.format == other.format
    }
}

impl MarkerPattern {
    fn new(key: &str, pattern: &str, format: &str) -> Result<Self, DialectError> {
        Ok(MarkerPattern { regex: compile(key, pattern)?, format: format.to_string() })
    }

    pub fn render(&self, name: &str) -> String {
        self.format.replace("{name}", name)
    }
}

/// The block-open pattern additionally captures an optional type qualifier
/// and renders through a second format when a qualifier is present.
#[derive(Debug, Clone)]
pub struct BlockOpenPattern {
    pub regex: Regex,
    pub format: String,
    pub qualified_format: String,
}

impl PartialEq for BlockOpenPattern {
    fn eq(&self, other: &Self) -> bool {
        self.regex.as_str() == other.regex.as_str()
            && self.format == other.format
            && self.qualified_format == other.qualified_format
    }
}

impl BlockOpenPattern {
    fn new(
        key: &str,
        pattern: &str,
        format: &str,
        qualified_format: &str,
    ) -> Result<Self, DialectError> {
        let regex = compile(key, pattern)?;
        if !regex.capture_names().flatten().any(|n| n == "name") {
            return Err(DialectError::MissingCapture { key: key.into(), capture: "name".into() });
        }
        Ok(BlockOpenPattern {
            regex,
            format: format.to_string(),
            qualified_format: qualified_format.to_string(),
        })
    }

    pub fn render(&self, name: &str, qualifier: Option<&str>) -> String {
        match qualifier {
            Some(q) => self.qualified_format.replace("{name}", name).replace("{qualifier}", q),
            None => self.format.replace("{name}", name),
        }
    }
}

/// What a single source line was recognized as.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Marker {
    BlockOpen { name: String, qualifier: Option<String> },
    BlockClose,
    CommentBegin { name: String },
    CommentEnd { name: String },
    IncludeSuper,
}

impl Marker {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Marker::BlockOpen { .. } => "block_open",
            Marker::BlockClose => "block_close",
            Marker::CommentBegin { .. } => "comment_vr_begin",
            Marker::CommentEnd { .. } => "comment_vr_end",
            Marker::IncludeSuper => "include_super",
        }
    }
}

/// One complete set of marker patterns, selected per file class.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerSet {
    /// Absent when the file class has no native block syntax (e.g. helpers).
    pub block_open: Option<BlockOpenPattern>,
    pub block_close: Option<MarkerPattern>,
    pub comment_vr_begin: MarkerPattern,
    pub comment_vr_end: MarkerPattern,
    pub include_super: MarkerPattern,
}

impl MarkerSet {
    /// Classifies one line (without its terminator). Errors when the line
    /// matches more than one marker kind, which violates the dialect's
    /// non-overlap requirement.
    pub fn classify(&self, line: &str) -> Result<Option<Marker>, Vec<&'static str>> {
        let mut hits: Vec<Marker> = Vec::new();
        if let Some(open) = &self.block_open {
            if let Some(caps) = open.regex.captures(line) {
                let name = caps.name("name").map(|m| m.as_str().to_string()).unwrap_or_default();
                let qualifier = caps.name("qual").map(|m| m.as_str().to_string());
                hits.push(Marker::BlockOpen { name, qualifier });
            }
        }
        if let Some(close) = &self.block_close {
            if close.regex.is_match(line) {
                hits.push(Marker::BlockClose);
            }
        }
        if let Some(caps) = self.comment_vr_begin.regex.captures(line) {
            let name = caps.name("name").map(|m| m.as_str().to_string()).unwrap_or_default();
            hits.push(Marker::CommentBegin { name });
        }
        if let Some(caps) = self.comment_vr_end.regex.captures(line) {
            let name = caps.name("name").map(|m| m.as_str().to_string()).unwrap_or_default();
            hits.push(Marker::CommentEnd { name });
        }
        if self.include_super.regex.is_match(line) {
            hits.push(Marker::IncludeSuper);
        }
        match hits.len() {
            0 => Ok(None),
            1 => Ok(Some(hits.pop().unwrap())),
            _ => Err(hits.iter().map(|m| m.kind_name()).collect()),
        }
    }

    pub fn is_include_super(&self, line: &str) -> bool {
        self.include_super.regex.is_match(line)
    }
}

/// File classes a dialect distinguishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileClass {
    Template,
    Helper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialectConfig {
    pub template: MarkerSet,
    pub helper: MarkerSet,
    /// Extensions (without dot) parsed with the template marker set, in
    /// lookup priority order.
    pub template_extensions: Vec<String>,
    /// Extensions parsed with the helper marker set.
    pub helper_extensions: Vec<String>,
    /// When set, whole-artifact before/after refinements emit this directive
    /// (with `{path}` substituted by the refining artifact's relative path)
    /// instead of inlining the content, and the referenced artifact is
    /// emitted rather than consumed.
    pub include_statement_format: Option<String>,
}

impl Default for DialectConfig {
    fn default() -> Self {
        DialectConfig {
            template: MarkerSet {
                block_open: Some(
                    BlockOpenPattern::new(
                        "block_open",
                        r"^\s*\[DEFINE\s+(?P<name>[A-Za-z_][A-Za-z0-9_]*)(?:\s+FOR\s+(?P<qual>[A-Za-z_][A-Za-z0-9_]*))?\s*\]\s*$",
                        "[DEFINE {name}]",
                        "[DEFINE {name} FOR {qualifier}]",
                    )
                    .expect("default block_open pattern"),
                ),
                block_close: Some(
                    MarkerPattern::new("block_close", r"^\s*\[ENDDEFINE\]\s*$", "[ENDDEFINE]")
                        .expect("default block_close pattern"),
                ),
                comment_vr_begin: MarkerPattern::new(
                    "comment_vr_begin",
                    r"^\s*\[REM\]\s*BEGIN\s+VR:\s*(?P<name>[A-Za-z_][A-Za-z0-9_]*)\s*\[ENDREM\]\s*$",
                    "[REM]BEGIN VR:{name}[ENDREM]",
                )
                .expect("default comment_vr_begin pattern"),
                comment_vr_end: MarkerPattern::new(
                    "comment_vr_end",
                    r"^\s*\[REM\]\s*END\s+VR:\s*(?P<name>[A-Za-z_][A-Za-z0-9_]*)\s*\[ENDREM\]\s*$",
                    "[REM]END VR:{name}[ENDREM]",
                )
                .expect("default comment_vr_end pattern"),
                // Internal whitespace is insignificant: [INCLUDE -SUPER] and
                // [INCLUDE-SUPER] are the same marker.
                include_super: MarkerPattern::new(
                    "include_super",
                    r"^\s*\[REM\]\s*\[\s*INCLUDE\s*-\s*SUPER\s*\]\s*\[ENDREM\]\s*$",
                    "[REM][INCLUDE-SUPER][ENDREM]",
                )
                .expect("default include_super pattern"),
            },
            helper: MarkerSet {
                block_open: None,
                block_close: None,
                comment_vr_begin: MarkerPattern::new(
                    "helper.comment_vr_begin",
                    r"^\s*//\s*BEGIN\s+VR:\s*(?P<name>[A-Za-z_][A-Za-z0-9_]*)\s*$",
                    "// BEGIN VR:{name}",
                )
                .expect("default helper comment_vr_begin pattern"),
                comment_vr_end: MarkerPattern::new(
                    "helper.comment_vr_end",
                    r"^\s*//\s*END\s+VR:\s*(?P<name>[A-Za-z_][A-Za-z0-9_]*)\s*$",
                    "// END VR:{name}",
                )
                .expect("default helper comment_vr_end pattern"),
                include_super: MarkerPattern::new(
                    "helper.include_super",
                    r"^\s*//\s*INCLUDE\s*-\s*SUPER\s*$",
                    "// INCLUDE-SUPER",
                )
                .expect("default helper include_super pattern"),
            },
            template_extensions: vec!["xpt".into()],
            helper_extensions: vec!["java".into()],
            include_statement_format: None,
        }
    }
}

impl DialectConfig {
    /// Loads `cgpl.dialect` from `root` when present, otherwise returns the
    /// built-in default. The second value reports whether a file was used.
    pub fn load(root: &Path) -> Result<(DialectConfig, bool), DialectError> {
        let path = root.join(DIALECT_FILE_NAME);
        if !path.exists() {
            return Ok((DialectConfig::default(), false));
        }
        let text = std::fs::read_to_string(&path)
            .map_err(|source| DialectError::Io { path: path.clone(), source })?;
        let cfg = Self::from_config_text(&text, &path)?;
        Ok((cfg, true))
    }

    /// Parses the declarative key/value document. Keys mirror the config
    /// fields; the optional `[helper]` table overrides the helper marker set.
    pub fn from_config_text(text: &str, path: &Path) -> Result<DialectConfig, DialectError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            DialectError::Parse { path: path.to_path_buf(), message: e.message().to_string() }
        })?;
        let mut cfg = DialectConfig::default();

        for (key, value) in &table {
            match key.as_str() {
                "template_extensions" => {
                    cfg.template_extensions = string_list(key, value)?;
                }
                "helper_extensions" => {
                    cfg.helper_extensions = string_list(key, value)?;
                }
                "include_statement_format" => {
                    cfg.include_statement_format = Some(string_value(key, value)?);
                }
                "helper" => {
                    let sub = value.as_table().ok_or_else(|| DialectError::InvalidValue {
                        key: key.clone(),
                        message: "expected a table".into(),
                    })?;
                    apply_marker_keys(&mut cfg.helper, sub, "helper.")?;
                }
                _ if is_marker_key(key) => {
                    // Template-set keys live at the top level.
                    let mut single = toml::Table::new();
                    single.insert(key.clone(), value.clone());
                    apply_marker_keys(&mut cfg.template, &single, "")?;
                }
                _ => return Err(DialectError::UnknownKey { key: key.clone() }),
            }
        }

        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), DialectError> {
        if self.template_extensions.is_empty() {
            return Err(DialectError::InvalidValue {
                key: "template_extensions".into(),
                message: "must list at least one extension".into(),
            });
        }
        for ext in &self.template_extensions {
            if self.helper_extensions.contains(ext) {
                return Err(DialectError::InvalidValue {
                    key: "helper_extensions".into(),
                    message: format!("extension '{ext}' is also a template extension"),
                });
            }
        }
        Ok(())
    }

    pub fn markers_for(&self, class: FileClass) -> &MarkerSet {
        match class {
            FileClass::Template => &self.template,
            FileClass::Helper => &self.helper,
        }
    }

    /// Maps a file extension to its file class; None means opaque.
    pub fn class_of_extension(&self, ext: &str) -> Option<FileClass> {
        if self.template_extensions.iter().any(|e| e == ext) {
            Some(FileClass::Template)
        } else if self.helper_extensions.iter().any(|e| e == ext) {
            Some(FileClass::Helper)
        } else {
            None
        }
    }

    /// True when `line` is an include-super marker in either marker set.
    pub fn is_include_super_line(&self, line: &str) -> bool {
        self.template.is_include_super(line) || self.helper.is_include_super(line)
    }
}

fn is_marker_key(key: &str) -> bool {
    matches!(
        key,
        "block_open"
            | "block_open_format"
            | "block_open_qualified_format"
            | "block_close"
            | "block_close_format"
            | "comment_vr_begin"
            | "comment_vr_begin_format"
            | "comment_vr_end"
            | "comment_vr_end_format"
            | "include_super"
            | "include_super_format"
    )
}

fn apply_marker_keys(
    set: &mut MarkerSet,
    table: &toml::Table,
    prefix: &str,
) -> Result<(), DialectError> {
    for (key, value) in table {
        let full = format!("{prefix}{key}");
        if !is_marker_key(key) {
            return Err(DialectError::UnknownKey { key: full });
        }
        let v = string_value(&full, value)?;
        match key.as_str() {
            "block_open" => {
                let (fmt, qfmt) = match &set.block_open {
                    Some(p) => (p.format.clone(), p.qualified_format.clone()),
                    None => ("{name}".to_string(), "{name} {qualifier}".to_string()),
                };
                set.block_open = Some(BlockOpenPattern::new(&full, &v, &fmt, &qfmt)?);
            }
            "block_open_format" => match &mut set.block_open {
                Some(p) => p.format = v,
                None => {
                    return Err(DialectError::InvalidValue {
                        key: full,
                        message: "no block_open pattern to format".into(),
                    })
                }
            },
            "block_open_qualified_format" => match &mut set.block_open {
                Some(p) => p.qualified_format = v,
                None => {
                    return Err(DialectError::InvalidValue {
                        key: full,
                        message: "no block_open pattern to format".into(),
                    })
                }
            },
            "block_close" => {
                let fmt = set.block_close.as_ref().map(|p| p.format.clone()).unwrap_or_default();
                set.block_close = Some(MarkerPattern::new(&full, &v, &fmt)?);
            }
            "block_close_format" => match &mut set.block_close {
                Some(p) => p.format = v,
                None => {
                    return Err(DialectError::InvalidValue {
                        key: full,
                        message: "no block_close pattern to format".into(),
                    })
                }
            },
            "comment_vr_begin" => {
                set.comment_vr_begin =
                    named_pattern(&full, &v, set.comment_vr_begin.format.clone())?;
            }
            "comment_vr_begin_format" => set.comment_vr_begin.format = v,
            "comment_vr_end" => {
                set.comment_vr_end = named_pattern(&full, &v, set.comment_vr_end.format.clone())?;
            }
            "comment_vr_end_format" => set.comment_vr_end.format = v,
            "include_super" => {
                set.include_super =
                    MarkerPattern { regex: compile(&full, &v)?, format: set.include_super.format.clone() };
            }
            "include_super_format" => set.include_super.format = v,
            _ => unreachable!("filtered by is_marker_key"),
        }
    }
    Ok(())
}

fn named_pattern(key: &str, pattern: &str, format: String) -> Result<MarkerPattern, DialectError> {
    let regex = compile(key, pattern)?;
    if !regex.capture_names().flatten().any(|n| n == "name") {
        return Err(DialectError::MissingCapture { key: key.into(), capture: "name".into() });
    }
    Ok(MarkerPattern { regex, format })
}

fn compile(key: &str, pattern: &str) -> Result<Regex, DialectError> {
    if pattern.is_empty() {
        return Err(DialectError::InvalidPattern {
            key: key.into(),
            message: "pattern is empty".into(),
        });
    }
    Regex::new(pattern)
        .map_err(|e| DialectError::InvalidPattern { key: key.into(), message: e.to_string() })
}

fn string_value(key: &str, value: &toml::Value) -> Result<String, DialectError> {
    value.as_str().map(|s| s.to_string()).ok_or_else(|| DialectError::InvalidValue {
        key: key.into(),
        message: "expected a string".into(),
    })
}

fn string_list(key: &str, value: &toml::Value) -> Result<Vec<String>, DialectError> {
    let arr = value.as_array().ok_or_else(|| DialectError::InvalidValue {
        key: key.into(),
        message: "expected a list of strings".into(),
    })?;
    arr.iter()
        .map(|v| string_value(key, v))
        .collect::<Result<Vec<_>, _>>()
        .and_then(|list| {
            if list.is_empty() {
                Err(DialectError::InvalidValue {
                    key: key.into(),
                    message: "list must not be empty".into(),
                })
            } else {
                Ok(list)
            }
        })
}

impl fmt::Display for FileClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FileClass::Template => write!(f, "template"),
            FileClass::Helper => write!(f, "helper"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_classifies_block_open_with_qualifier() {
        let d = DialectConfig::default();
        let m = d.template.classify("[DEFINE SetterMethod FOR MMAttribute]").unwrap().unwrap();
        assert_eq!(
            m,
            Marker::BlockOpen {
                name: "SetterMethod".into(),
                qualifier: Some("MMAttribute".into())
            }
        );
    }

    #[test]
    fn default_classifies_block_open_without_qualifier() {
        let d = DialectConfig::default();
        let m = d.template.classify("  [DEFINE Header]").unwrap().unwrap();
        assert_eq!(m, Marker::BlockOpen { name: "Header".into(), qualifier: None });
    }

    #[test]
    fn comment_markers_tolerate_interior_spacing() {
        let d = DialectConfig::default();
        let m = d.template.classify(" [REM]BEGIN VR:SetterMethodBody [ENDREM]").unwrap().unwrap();
        assert_eq!(m, Marker::CommentBegin { name: "SetterMethodBody".into() });
        let m = d.template.classify("[REM] END VR: SetterMethodBody [ENDREM]").unwrap().unwrap();
        assert_eq!(m, Marker::CommentEnd { name: "SetterMethodBody".into() });
    }

    #[test]
    fn include_super_tolerates_internal_whitespace() {
        let d = DialectConfig::default();
        assert!(matches!(
            d.template.classify("  [REM][INCLUDE -SUPER] [ENDREM]").unwrap(),
            Some(Marker::IncludeSuper)
        ));
        assert!(matches!(
            d.template.classify("[REM] [ INCLUDE - SUPER ] [ENDREM]").unwrap(),
            Some(Marker::IncludeSuper)
        ));
    }

    #[test]
    fn marker_must_cover_the_whole_line() {
        let d = DialectConfig::default();
        assert_eq!(d.template.classify("x [DEFINE A]").unwrap(), None);
        assert_eq!(d.template.classify("[DEFINE A] trailing").unwrap(), None);
    }

    #[test]
    fn helper_set_uses_line_comments_and_has_no_blocks() {
        let d = DialectConfig::default();
        assert!(d.helper.block_open.is_none());
        let m = d.helper.classify("  // BEGIN VR:Imports").unwrap().unwrap();
        assert_eq!(m, Marker::CommentBegin { name: "Imports".into() });
        assert!(d.helper.is_include_super("// INCLUDE-SUPER"));
    }

    #[test]
    fn config_file_overrides_and_rejects_unknown_keys() {
        let path = Path::new("cgpl.dialect");
        let cfg = DialectConfig::from_config_text(
            r#"
template_extensions = ["tpl"]
comment_vr_begin = '^\s*<!-- BEGIN (?P<name>\w+) -->\s*$'
comment_vr_begin_format = "<!-- BEGIN {name} -->"

[helper]
include_super = '^\s*# SUPER\s*$'
"#,
            path,
        )
        .unwrap();
        assert_eq!(cfg.template_extensions, vec!["tpl"]);
        assert!(matches!(
            cfg.template.classify("<!-- BEGIN Body -->").unwrap(),
            Some(Marker::CommentBegin { .. })
        ));
        assert!(cfg.helper.is_include_super("# SUPER"));

        let err = DialectConfig::from_config_text("nope = 1", path).unwrap_err();
        assert!(matches!(err, DialectError::UnknownKey { .. }));
    }

    #[test]
    fn named_patterns_require_name_capture() {
        let err = DialectConfig::from_config_text(
            "comment_vr_begin = '^BEGIN$'",
            Path::new("cgpl.dialect"),
        )
        .unwrap_err();
        assert!(matches!(err, DialectError::MissingCapture { .. }));
    }

    #[test]
    fn overlapping_extension_lists_are_rejected() {
        let err = DialectConfig::from_config_text(
            "template_extensions = [\"xpt\"]\nhelper_extensions = [\"xpt\"]",
            Path::new("cgpl.dialect"),
        )
        .unwrap_err();
        assert!(matches!(err, DialectError::InvalidValue { .. }));
    }

    #[test]
    fn overlapping_marker_patterns_are_reported_at_classify_time() {
        let cfg = DialectConfig::from_config_text(
            r#"
comment_vr_begin = '^\s*\[REM\]\s*(?:BEGIN )?VR:\s*(?P<name>\w+)\s*\[ENDREM\]\s*$'
comment_vr_end = '^\s*\[REM\]\s*(?:END )?VR:\s*(?P<name>\w+)\s*\[ENDREM\]\s*$'
"#,
            Path::new("cgpl.dialect"),
        )
        .unwrap();
        let err = cfg.template.classify("[REM]VR:X[ENDREM]").unwrap_err();
        assert_eq!(err, vec!["comment_vr_begin", "comment_vr_end"]);
    }

    #[test]
    fn canonical_rendering_round_trips_through_classify() {
        let d = DialectConfig::default();
        let open = d.template.block_open.as_ref().unwrap();
        let line = open.render("FurtherMethods", Some("MMClass"));
        assert_eq!(line, "[DEFINE FurtherMethods FOR MMClass]");
        assert!(matches!(
            d.template.classify(&line).unwrap(),
            Some(Marker::BlockOpen { .. })
        ));
        let begin = d.template.comment_vr_begin.render("Body");
        assert_eq!(begin, "[REM]BEGIN VR:Body[ENDREM]");
        assert!(matches!(
            d.template.classify(&begin).unwrap(),
            Some(Marker::CommentBegin { .. })
        ));
    }
}
