//! Scan, bind, and compose whole product lines built on temporary dirs.

use std::path::Path;

use cgpl_core::composer::{compose, write_variant, ComposeError, ComposeOptions};
use cgpl_core::model::ProductConfig;
use cgpl_core::pipeline::load_product_line;

fn write(root: &Path, rel: &str, text: &str) {
    let path = root.join(rel);
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, text).unwrap();
}

fn cfg(layers: &[&str]) -> ProductConfig {
    ProductConfig {
        generator_name: "gen".into(),
        output: None,
        selected_layers: layers.iter().map(|s| s.to_string()).collect(),
    }
}

fn composed<'a>(
    result: &'a cgpl_core::composer::CompositionResult,
    path: &str,
) -> &'a cgpl_core::composer::ComposedArtifact {
    result
        .artifacts
        .iter()
        .find(|a| a.relative_path == path)
        .unwrap_or_else(|| panic!("no composed artifact at {path}"))
}

#[test]
fn comment_region_replace_strips_markers_by_default() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "base/Class.xpt",
        "[DEFINE setter FOR Attr]\nvoid set() {\n[REM]BEGIN VR:SetterBody[ENDREM]\nthis.x = x;\n[REM]END VR:SetterBody[ENDREM]\n}\n[ENDDEFINE]\n",
    );
    write(
        tmp.path(),
        "ext/Better.xpt",
        "[DEFINE setterBody FOR Attr]\ncheckAccess();\nthis.x = x;\n[ENDDEFINE]\n",
    );
    write(
        tmp.path(),
        "layers.ldl",
        "layer ext refines base {\n    Better:setterBody replaces Class:setter.SetterBody;\n}\n",
    );
    let loaded = load_product_line(tmp.path()).unwrap();

    let result = compose(&loaded.product_line, &cfg(&["ext"]), &ComposeOptions::default()).unwrap();
    assert_eq!(result.closure, vec!["ext", "base"]);
    assert_eq!(result.artifacts.len(), 1, "donor artifact is consumed");
    assert_eq!(
        composed(&result, "Class.xpt").content,
        "[DEFINE setter FOR Attr]\nvoid set() {\ncheckAccess();\nthis.x = x;\n}\n[ENDDEFINE]\n"
    );
    assert_eq!(result.fragments.len(), 1);
    assert_eq!(result.fragments[0].relative_path, "Better.xpt");

    let kept = compose(
        &loaded.product_line,
        &cfg(&["ext"]),
        &ComposeOptions { keep_markers: true },
    )
    .unwrap();
    assert_eq!(
        composed(&kept, "Class.xpt").content,
        "[DEFINE setter FOR Attr]\nvoid set() {\n[REM]BEGIN VR:SetterBody[ENDREM]\ncheckAccess();\nthis.x = x;\n[REM]END VR:SetterBody[ENDREM]\n}\n[ENDDEFINE]\n"
    );
}

#[test]
fn before_and_after_attach_outside_the_block_markers() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "base/Class.xpt", "[DEFINE methods FOR Class]\nint base();\n[ENDDEFINE]\n");
    write(tmp.path(), "ext/Extra.xpt", "[DEFINE extra FOR Class]\nint extra();\n[ENDDEFINE]\n");
    write(
        tmp.path(),
        "layers.ldl",
        "layer ext refines base {\n    Extra:extra before Class:methods;\n    Extra:extra after Class:methods;\n}\n",
    );
    let loaded = load_product_line(tmp.path()).unwrap();
    let result = compose(&loaded.product_line, &cfg(&["ext"]), &ComposeOptions::default()).unwrap();
    assert_eq!(
        composed(&result, "Class.xpt").content,
        "int extra();\n[DEFINE methods FOR Class]\nint base();\n[ENDDEFINE]\nint extra();\n"
    );
}

#[test]
fn include_super_chains_nest_innermost_first() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "base/A.xpt", "[DEFINE body FOR T]\nbase line\n[ENDDEFINE]\n");
    write(
        tmp.path(),
        "mid/B.xpt",
        "[DEFINE body FOR T]\nm1\n[REM][INCLUDE-SUPER][ENDREM]\nm2\n[ENDDEFINE]\n",
    );
    // The top layer writes the marker with the spacing variant; both forms
    // name the same marker.
    write(
        tmp.path(),
        "top/C.xpt",
        "[DEFINE body FOR T]\nt1\n[REM][INCLUDE -SUPER] [ENDREM]\nt2\n[ENDDEFINE]\n",
    );
    write(
        tmp.path(),
        "layers.ldl",
        "layer top refines mid {\n    C:body replaces B:body;\n}\n\nlayer mid refines base {\n    B:body replaces A:body;\n}\n",
    );
    let loaded = load_product_line(tmp.path()).unwrap();
    let result = compose(&loaded.product_line, &cfg(&["top"]), &ComposeOptions::default()).unwrap();
    assert_eq!(result.closure, vec!["top", "mid", "base"]);
    assert_eq!(
        composed(&result, "A.xpt").content,
        "[DEFINE body FOR T]\nt1\nm1\nbase line\nm2\nt2\n[ENDDEFINE]\n"
    );
    let fragment_paths: Vec<&str> =
        result.fragments.iter().map(|f| f.relative_path.as_str()).collect();
    assert_eq!(fragment_paths, vec!["B.xpt", "C.xpt"]);

    let steps: Vec<&str> =
        composed(&result, "A.xpt").provenance.iter().map(|p| p.layer.as_str()).collect();
    assert_eq!(steps, vec!["top", "mid"], "inner chains resolve before the outer site applies");
}

#[test]
fn whole_artifact_replace_consumes_the_donor() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "base/Main.xpt", "old main\n");
    write(tmp.path(), "ext/NewMain.xpt", "new main\n");
    write(tmp.path(), "layers.ldl", "layer ext refines base {\n    NewMain replaces Main;\n}\n");
    let loaded = load_product_line(tmp.path()).unwrap();
    let result = compose(&loaded.product_line, &cfg(&["ext"]), &ComposeOptions::default()).unwrap();
    assert_eq!(result.artifacts.len(), 1);
    let main = composed(&result, "Main.xpt");
    assert_eq!(main.content, "new main\n");
    assert_eq!(main.layer, "base", "the target slot keeps its home layer");
    assert_eq!(result.fragments[0].relative_path, "NewMain.xpt");
}

#[test]
fn same_output_path_without_a_refinement_is_a_collision() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "base/Util.xpt", "a\n");
    write(tmp.path(), "ext/Util.xpt", "b\n");
    write(tmp.path(), "ext/Other.xpt", "c\n");
    write(tmp.path(), "layers.ldl", "layer ext refines base {\n}\n");
    let loaded = load_product_line(tmp.path()).unwrap();
    match compose(&loaded.product_line, &cfg(&["ext"]), &ComposeOptions::default()) {
        Err(ComposeError::PathCollision { path, first, second }) => {
            assert_eq!(path, "Util.xpt");
            assert_eq!((first.as_str(), second.as_str()), ("base", "ext"));
        }
        other => panic!("unexpected: {other:?}"),
    }
}

#[test]
fn include_directive_mode_references_instead_of_inlining() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "cgpl.dialect", "include_statement_format = \"[EXPAND file FOR {path}]\"\n");
    write(tmp.path(), "base/Main.xpt", "main body\n");
    write(tmp.path(), "ext/Footer.xpt", "footer body\n");
    write(tmp.path(), "layers.ldl", "layer ext refines base {\n    Footer after Main;\n}\n");
    let loaded = load_product_line(tmp.path()).unwrap();
    let result = compose(&loaded.product_line, &cfg(&["ext"]), &ComposeOptions::default()).unwrap();
    assert_eq!(
        composed(&result, "Main.xpt").content,
        "main body\n[EXPAND file FOR Footer.xpt]\n"
    );
    assert_eq!(composed(&result, "Footer.xpt").content, "footer body\n");
    assert!(result.fragments.is_empty(), "referenced artifacts are not consumed");
}

#[test]
fn unreachable_refinement_targets_warn_at_plan_time() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "base/A.xpt", "[DEFINE x]\nax\n[ENDDEFINE]\n");
    write(
        tmp.path(),
        "mid/B.xpt",
        "[DEFINE piece]\nbp\n[ENDDEFINE]\n[DEFINE other]\nbo\n[ENDDEFINE]\n",
    );
    write(tmp.path(), "top/T.xpt", "[DEFINE t]\ntt\n[ENDDEFINE]\n");
    write(
        tmp.path(),
        "layers.ldl",
        "layer top refines mid {\n    T:t replaces B:other;\n}\n\nlayer mid refines base {\n    B:piece replaces A:x;\n}\n",
    );
    let loaded = load_product_line(tmp.path()).unwrap();
    let result = compose(&loaded.product_line, &cfg(&["top"]), &ComposeOptions::default()).unwrap();
    assert!(
        result
            .warnings
            .iter()
            .any(|w| w.message.contains("not part of the composed output")),
        "expected a lost-target warning, got {:?}",
        result.warnings
    );
    assert_eq!(
        composed(&result, "A.xpt").content,
        "[DEFINE x]\nbp\n[ENDDEFINE]\n"
    );
}

#[test]
fn leftover_include_super_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "base/A.xpt",
        "[DEFINE body]\n[REM][INCLUDE-SUPER][ENDREM]\nrest\n[ENDDEFINE]\n",
    );
    write(tmp.path(), "layers.ldl", "");
    let loaded = load_product_line(tmp.path()).unwrap();
    match compose(&loaded.product_line, &cfg(&["base"]), &ComposeOptions::default()) {
        Err(ComposeError::DanglingSuper { layer, path, line }) => {
            assert_eq!(layer, "base");
            assert_eq!(path, "A.xpt");
            assert_eq!(line, 2);
        }
        other => panic!("unexpected: {other:?}"),
    }
}

#[test]
fn binary_artifacts_pass_through_unchanged() {
    let tmp = tempfile::tempdir().unwrap();
    let bytes: Vec<u8> = vec![0x89, b'P', b'N', b'G', 0xff, 0xfe, 0x00, 0x01];
    std::fs::create_dir_all(tmp.path().join("base")).unwrap();
    std::fs::write(tmp.path().join("base/logo.png"), &bytes).unwrap();
    write(tmp.path(), "base/Main.xpt", "main\n");
    write(tmp.path(), "layers.ldl", "");
    let loaded = load_product_line(tmp.path()).unwrap();
    let result = compose(&loaded.product_line, &cfg(&["base"]), &ComposeOptions::default()).unwrap();
    let logo = composed(&result, "logo.png");
    assert_eq!(logo.binary.as_deref(), Some(bytes.as_slice()));
}

#[test]
fn write_variant_replaces_the_output_dir_atomically() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "base/sub/Main.xpt", "main\n");
    write(tmp.path(), "layers.ldl", "");
    let loaded = load_product_line(tmp.path()).unwrap();
    let result = compose(&loaded.product_line, &cfg(&["base"]), &ComposeOptions::default()).unwrap();

    let out = tmp.path().join("gen");
    std::fs::create_dir_all(out.join("stale")).unwrap();
    std::fs::write(out.join("stale/leftover.txt"), "old").unwrap();

    let written = write_variant(&out, &result).unwrap();
    assert_eq!(written, out);
    assert_eq!(std::fs::read_to_string(out.join("sub/Main.xpt")).unwrap(), "main\n");
    assert!(!out.join("stale").exists(), "previous contents are dropped");
    let sidecar = std::fs::read_to_string(out.join("cgpl-provenance.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&sidecar).unwrap();
    assert_eq!(json["generator"], "gen");
    assert_eq!(json["closure"][0], "base");
}
