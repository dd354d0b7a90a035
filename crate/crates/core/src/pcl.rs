//! The product-configuration language: which layers a variant selects.
//!
//! ```text
//! generator factory {
//!     output = "gen-factory";
//!     layers = "factoryVariant", "baseVariant";
//! }
//! ```

use thiserror::Error;

use crate::diag::Pos;
use crate::lex::{SyntaxError, Token, TokenStream};
use crate::model::ProductConfig;

#[derive(Debug, Error)]
pub enum PclError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("{pos}: generator '{generator}' selects no layers")]
    EmptySelection { generator: String, pos: Pos },
}

/// Parses one product configuration. Empty strings in the layer list are
/// dropped; a selection with no layers left is an error, as is naming the
/// same layer twice.
pub fn parse_pcl(src: &str) -> Result<ProductConfig, PclError> {
    let mut ts = TokenStream::new(src)?;
    ts.expect_keyword("generator")?;
    let (generator_name, name_pos) = ts.expect_ident("a generator name")?;
    ts.expect(Token::LBrace, "'{'")?;

    let mut output = None;
    if let Token::Ident(word) = ts.peek() {
        if word == "output" {
            ts.advance();
            ts.expect(Token::Eq, "'='")?;
            output = Some(ts.expect_string("an output directory")?.0);
            ts.expect(Token::Semi, "';'")?;
        }
    }

    ts.expect_keyword("layers")?;
    ts.expect(Token::Eq, "'='")?;
    let mut selected_layers: Vec<String> = Vec::new();
    loop {
        let (layer, pos) = ts.expect_string("a layer name")?;
        if !layer.is_empty() {
            if selected_layers.contains(&layer) {
                return Err(SyntaxError::new(
                    pos,
                    format!("layer \"{layer}\" selected twice"),
                    vec!["distinct layer names".into()],
                )
                .into());
            }
            selected_layers.push(layer);
        }
        if !ts.eat(&Token::Comma) {
            break;
        }
    }
    ts.expect(Token::Semi, "';'")?;
    ts.expect(Token::RBrace, "'}'")?;
    if !ts.at_eof() {
        return Err(ts.error(vec!["end of file".into()]).into());
    }

    if selected_layers.is_empty() {
        return Err(PclError::EmptySelection { generator: generator_name, pos: name_pos });
    }
    Ok(ProductConfig { generator_name, output, selected_layers })
}

/// Pretty-prints a configuration; `parse_pcl` applied to the output yields
/// an equal configuration.
pub fn render_config(cfg: &ProductConfig) -> String {
    let mut out = String::new();
    out.push_str("generator ");
    out.push_str(&cfg.generator_name);
    out.push_str(" {\n");
    if let Some(dir) = &cfg.output {
        out.push_str(&format!("    output = \"{dir}\";\n"));
    }
    let quoted: Vec<String> =
        cfg.selected_layers.iter().map(|l| format!("\"{l}\"")).collect();
    out.push_str(&format!("    layers = {};\n", quoted.join(", ")));
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let cfg = parse_pcl(
            "generator factory {\n  output = \"gen-factory\";\n  layers = \"factoryVariant\", \"baseVariant\";\n}",
        )
        .unwrap();
        assert_eq!(cfg.generator_name, "factory");
        assert_eq!(cfg.output.as_deref(), Some("gen-factory"));
        assert_eq!(cfg.selected_layers, vec!["factoryVariant", "baseVariant"]);
        assert_eq!(cfg.output_dir(), "gen-factory");
    }

    #[test]
    fn output_defaults_to_gen() {
        let cfg = parse_pcl("generator g { layers = \"a\"; }").unwrap();
        assert_eq!(cfg.output, None);
        assert_eq!(cfg.output_dir(), "gen");
    }

    #[test]
    fn empty_strings_are_dropped() {
        let cfg = parse_pcl("generator g { layers = \"\", \"a\", \"\"; }").unwrap();
        assert_eq!(cfg.selected_layers, vec!["a"]);
    }

    #[test]
    fn empty_selection_is_an_error() {
        let err = parse_pcl("generator g { layers = \"\"; }").unwrap_err();
        match err {
            PclError::EmptySelection { generator, .. } => assert_eq!(generator, "g"),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn duplicate_layers_are_rejected() {
        let err = parse_pcl("generator g { layers = \"a\", \"a\"; }").unwrap_err();
        assert!(err.to_string().contains("selected twice"), "{err}");
    }

    #[test]
    fn trailing_tokens_are_rejected() {
        let err = parse_pcl("generator g { layers = \"a\"; } extra").unwrap_err();
        assert!(err.to_string().contains("end of file"), "{err}");
    }

    #[test]
    fn comments_are_skipped() {
        let cfg = parse_pcl("// pick layers\ngenerator g {\n  layers = \"a\"; // one\n}").unwrap();
        assert_eq!(cfg.selected_layers, vec!["a"]);
    }

    #[test]
    fn render_parse_fixpoint() {
        for cfg in [
            ProductConfig {
                generator_name: "g".into(),
                output: None,
                selected_layers: vec!["a".into(), "b".into()],
            },
            ProductConfig {
                generator_name: "variant".into(),
                output: Some("out/dir".into()),
                selected_layers: vec!["x".into()],
            },
        ] {
            let rendered = render_config(&cfg);
            let reparsed = parse_pcl(&rendered).unwrap();
            assert_eq!(reparsed, cfg);
            assert_eq!(render_config(&reparsed), rendered);
        }
    }
}
