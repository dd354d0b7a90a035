//! Compares the data-parallel parse strategy against a plain sequential loop
//! on identical workloads, plus end-to-end scan and compose timings on a
//! synthetic product line. Run with `cargo bench -p cgpl-core`.

use std::fs;
use std::path::Path;

use cgpl_core::composer::{compose, ComposeOptions};
use cgpl_core::dialect::DialectConfig;
use cgpl_core::model::ProductConfig;
use cgpl_core::pipeline::load_product_line;
use cgpl_core::scanner::{parse_artifact, scan_product_line};
use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use rayon::prelude::*;

/// A template with a handful of regions and enough literal body to make
/// parsing nontrivial.
fn synthetic_template(idx: usize, body_lines: usize) -> String {
    let mut text = String::new();
    for block in 0..4 {
        text.push_str(&format!("[DEFINE region{idx}x{block} FOR Meta]\n"));
        for line in 0..body_lines / 4 {
            text.push_str(&format!("    statement({idx}, {block}, {line});\n"));
        }
        text.push_str(&format!("[REM]BEGIN VR:hook{idx}x{block}[ENDREM]\n"));
        text.push_str("    hook();\n");
        text.push_str(&format!("[REM]END VR:hook{idx}x{block}[ENDREM]\n"));
        text.push_str("[ENDDEFINE]\n\n");
    }
    text
}

fn bench_parse_batch(c: &mut Criterion) {
    let texts: Vec<String> = (0..256).map(|i| synthetic_template(i, 120)).collect();
    let dialect = DialectConfig::default();
    let mut group = c.benchmark_group("parse_batch");
    group.throughput(Throughput::Elements(texts.len() as u64));
    group.bench_function("sequential", |b| {
        b.iter(|| {
            let parsed: Vec<_> =
                texts.iter().map(|t| parse_artifact(t, &dialect).expect("parses")).collect();
            parsed.len()
        })
    });
    group.bench_function("rayon", |b| {
        b.iter(|| {
            let parsed: Vec<_> =
                texts.par_iter().map(|t| parse_artifact(t, &dialect).expect("parses")).collect();
            parsed.len()
        })
    });
    group.finish();
}

/// Writes a three-layer product line where every upper-layer template
/// replaces a hook in the layer below it.
fn write_product_line(root: &Path, templates_per_layer: usize) {
    let write = |rel: &str, text: &str| {
        let path = root.join(rel);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, text).unwrap();
    };
    let mut ldl = String::new();
    for layer in 0..3 {
        for t in 0..templates_per_layer {
            let idx = layer * templates_per_layer + t;
            write(
                &format!("l{layer}/Tmpl{idx}.xpt"),
                &synthetic_template(idx, 120),
            );
        }
        if layer > 0 {
            ldl.push_str(&format!("layer l{layer} refines l{} {{\n", layer - 1));
            for t in 0..templates_per_layer {
                let donor = layer * templates_per_layer + t;
                let target = (layer - 1) * templates_per_layer + t;
                ldl.push_str(&format!(
                    "    Tmpl{donor}:region{donor}x0 \
                     replaces Tmpl{target}:region{target}x0.hook{target}x0;\n"
                ));
            }
            ldl.push_str("}\n\n");
        }
    }
    write("layers.ldl", &ldl);
    write("bench.pcl", "generator Bench {\n    layers = \"l2\";\n}\n");
}

fn bench_scan_and_compose(c: &mut Criterion) {
    let tmp = tempfile::tempdir().unwrap();
    write_product_line(tmp.path(), 64);

    c.bench_function("scan_product_line", |b| {
        b.iter(|| scan_product_line(tmp.path()).expect("scans"))
    });

    let loaded = load_product_line(tmp.path()).expect("loads");
    let cfg = ProductConfig {
        generator_name: "Bench".to_string(),
        output: None,
        selected_layers: vec!["l2".to_string()],
    };
    c.bench_function("compose_variant", |b| {
        b.iter(|| {
            compose(&loaded.product_line, &cfg, &ComposeOptions::default()).expect("composes")
        })
    });
}

criterion_group!(benches, bench_parse_batch, bench_scan_and_compose);
criterion_main!(benches);
