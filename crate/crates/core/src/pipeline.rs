//! Loading a product line end to end: dialect, layers, refinement model.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::diag::Warning;
use crate::lex::SyntaxError;
use crate::ldl::{bind, parse_ldl, BindError, LayerModel, LDL_FILE_NAME};
use crate::model::{ProductConfig, ProductLine};
use crate::pcl::{parse_pcl, PclError};
use crate::scanner::{scan_product_line, ScanError, ScanReport};

/// A fully loaded product line: layers scanned, model parsed and bound.
#[derive(Debug)]
pub struct Loaded {
    pub product_line: ProductLine,
    pub report: ScanReport,
    pub model: LayerModel,
    /// Scan and bind warnings, in that order.
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error("no {LDL_FILE_NAME} at {}", root.display())]
    MissingModel { root: PathBuf },
    #[error("cannot read {}: {source}", path.display())]
    ModelIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    ModelSyntax {
        path: PathBuf,
        #[source]
        source: SyntaxError,
    },
    #[error("{}: {source}", path.display())]
    Bind {
        path: PathBuf,
        #[source]
        source: Box<BindError>,
    },
}

/// Scans `root`, reads `layers.ldl`, parses and binds it.
pub fn load_product_line(root: &Path) -> Result<Loaded, LoadError> {
    let (mut product_line, mut report) = scan_product_line(root)?;
    let model_path = root.join(LDL_FILE_NAME);
    if !model_path.exists() {
        return Err(LoadError::MissingModel { root: root.to_path_buf() });
    }
    let src = std::fs::read_to_string(&model_path)
        .map_err(|source| LoadError::ModelIo { path: model_path.clone(), source })?;
    let model = parse_ldl(&src)
        .map_err(|source| LoadError::ModelSyntax { path: model_path.clone(), source })?;
    let bind_warnings = bind(&mut product_line, &model)
        .map_err(|source| LoadError::Bind { path: model_path.clone(), source: Box::new(source) })?;

    let mut warnings = std::mem::take(&mut report.warnings);
    for mut w in bind_warnings {
        // Bind warnings carry spans into the model file.
        if w.path.is_none() {
            w.path = Some(model_path.clone());
        }
        warnings.push(w);
    }
    Ok(Loaded { product_line, report, model, warnings })
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Pcl {
        path: PathBuf,
        #[source]
        source: PclError,
    },
}

/// Reads and parses one product configuration file.
pub fn load_config(path: &Path) -> Result<ProductConfig, ConfigError> {
    let src = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_pcl(&src).map_err(|source| ConfigError::Pcl { path: path.to_path_buf(), source })
}

#[derive(Debug, Error)]
pub enum PclDiscoveryError {
    #[error("cannot read {}: {source}", root.display())]
    Io {
        root: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no .pcl file at {}; pass one explicitly", root.display())]
    None { root: PathBuf },
    #[error(
        "{} .pcl files at {}; pass one explicitly: {}",
        found.len(),
        root.display(),
        found.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
    )]
    Multiple { root: PathBuf, found: Vec<PathBuf> },
}

/// Finds the product configuration at the product-line root. Exactly one
/// `*.pcl` file directly under `root` is acceptable; anything else needs an
/// explicit path from the caller.
pub fn discover_pcl(root: &Path) -> Result<PathBuf, PclDiscoveryError> {
    let entries = std::fs::read_dir(root)
        .map_err(|source| PclDiscoveryError::Io { root: root.to_path_buf(), source })?;
    let mut found: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let entry =
            entry.map_err(|source| PclDiscoveryError::Io { root: root.to_path_buf(), source })?;
        let path = entry.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "pcl") {
            found.push(path);
        }
    }
    found.sort();
    match found.len() {
        0 => Err(PclDiscoveryError::None { root: root.to_path_buf() }),
        1 => Ok(found.remove(0)),
        _ => Err(PclDiscoveryError::Multiple { root: root.to_path_buf(), found }),
    }
}
