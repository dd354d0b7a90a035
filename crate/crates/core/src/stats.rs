//! Per-layer size and variability metrics.
//!
//! Line counts exclude whitespace-only lines. Region counts separate
//! template block regions from helper regions; a region is "refined" when at
//! least one bound refinement targets it.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::model::{ArtifactKind, MarkerStyle, ProductLine, VariabilityRegion};
use crate::scanner::serialize_artifact_with;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StatsRow {
    pub layer: String,
    /// Non-blank lines across template files.
    pub tloc: usize,
    /// Block-style regions in template files.
    pub define_count: usize,
    /// Block-style template regions targeted by at least one refinement.
    pub refined_define_count: usize,
    /// Non-blank lines across helper files.
    pub hloc: usize,
    /// Regions in helper files.
    pub helper_count: usize,
    /// Helper regions targeted by at least one refinement.
    pub refined_helper_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StatsReport {
    pub rows: Vec<StatsRow>,
    /// Sum over all rows; `layer` is "total".
    pub totals: StatsRow,
}

/// Computes the report over every layer of the product line. Refinement
/// counts are meaningful once the layer model has been bound.
pub fn compute_stats(pl: &ProductLine) -> StatsReport {
    // Distinct refined regions, keyed by layer, artifact, and region path.
    let mut refined_defines: BTreeSet<(String, String, Vec<usize>)> = BTreeSet::new();
    let mut refined_helpers: BTreeSet<(String, String, Vec<usize>)> = BTreeSet::new();
    for layer in pl.layers.values() {
        for refinement in &layer.refinements {
            let Ok(loc) = pl.resolve_location(&refinement.refined, &refinement.refined_layer)
            else {
                continue;
            };
            let key = (
                refinement.refined_layer.clone(),
                loc.artifact.relative_path.clone(),
                loc.node_path.clone(),
            );
            match loc.artifact.kind {
                ArtifactKind::Template if loc.vr.style == Some(MarkerStyle::Block) => {
                    refined_defines.insert(key);
                }
                ArtifactKind::Helper if !loc.node_path.is_empty() => {
                    refined_helpers.insert(key);
                }
                _ => {}
            }
        }
    }

    let mut rows = Vec::new();
    let mut totals = StatsRow { layer: "total".into(), ..StatsRow::default() };
    for (name, layer) in &pl.layers {
        let mut row = StatsRow { layer: name.clone(), ..StatsRow::default() };
        for artifact in layer.artifacts.values() {
            match artifact.kind {
                ArtifactKind::Template => {
                    let markers = &pl.dialect.template;
                    row.tloc += non_blank_lines(&serialize_artifact_with(
                        &artifact.root_vr,
                        markers,
                    ));
                    row.define_count += count_block_regions(&artifact.root_vr);
                }
                ArtifactKind::Helper => {
                    let markers = &pl.dialect.helper;
                    row.hloc += non_blank_lines(&serialize_artifact_with(
                        &artifact.root_vr,
                        markers,
                    ));
                    row.helper_count += artifact.root_vr.region_count() - 1;
                }
                ArtifactKind::Opaque => {}
            }
        }
        row.refined_define_count =
            refined_defines.iter().filter(|(layer, _, _)| layer == name).count();
        row.refined_helper_count =
            refined_helpers.iter().filter(|(layer, _, _)| layer == name).count();

        totals.tloc += row.tloc;
        totals.define_count += row.define_count;
        totals.refined_define_count += row.refined_define_count;
        totals.hloc += row.hloc;
        totals.helper_count += row.helper_count;
        totals.refined_helper_count += row.refined_helper_count;
        rows.push(row);
    }
    StatsReport { rows, totals }
}

fn non_blank_lines(text: &str) -> usize {
    text.lines().filter(|l| !l.trim().is_empty()).count()
}

fn count_block_regions(vr: &VariabilityRegion) -> usize {
    let own = usize::from(vr.style == Some(MarkerStyle::Block));
    own + vr.children.iter().map(count_block_regions).sum::<usize>()
}
