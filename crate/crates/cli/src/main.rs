//! Command-line interface for composing layered code-generator templates.

use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cgpl_core::composer::{
    compose_planned, plan, write_variant, ComposeError, ComposeOptions, WriteError,
};
use cgpl_core::dialect::DialectError;
use cgpl_core::diag::Warning;
use cgpl_core::model::{ProductConfig, ProductLine};
use cgpl_core::pipeline::{
    discover_pcl, load_config, load_product_line, ConfigError, LoadError, PclDiscoveryError,
};
use cgpl_core::scanner::ScanError;
use cgpl_core::stats::compute_stats;
use cgpl_core::validator::{build_graph, export_dot, validate_selection, Conflict, GraphError};

#[derive(Parser)]
#[command(
    name = "cgpl",
    version,
    about = "Compose layered code-generator templates into generator variants",
    after_help = "Exit codes: 0 success, 1 conflicts or composition errors, \
                  2 parse or binding errors, 3 I/O errors.\n\
                  Set CGPL_COLOR=never to disable colored diagnostics \
                  (default: auto)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Product-line root directory
    #[arg(long, default_value = ".")]
    root: PathBuf,
    /// Product configuration file (default: the unique *.pcl under the root)
    #[arg(long)]
    pcl: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the selected layers for refinement conflicts
    Validate {
        #[command(flatten)]
        common: CommonArgs,
        /// Print the result as JSON on stdout
        #[arg(long)]
        json: bool,
    },
    /// Compose the selected layers into a generator variant
    Compose {
        #[command(flatten)]
        common: CommonArgs,
        /// Write the variant here instead of the configured output directory
        #[arg(long)]
        output: Option<PathBuf>,
        /// Keep comment-style region markers in composed files
        #[arg(long)]
        keep_markers: bool,
        /// Plan only: report what would be written without writing anything
        #[arg(long)]
        dry_run: bool,
        /// Print the result as JSON on stdout
        #[arg(long)]
        json: bool,
    },
    /// Export the colored refinement graph in DOT format
    Graph {
        #[command(flatten)]
        common: CommonArgs,
        /// Write the graph to a file instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report per-layer size metrics
    ///
    /// Columns: template lines (TLOC), block regions (defines), block regions
    /// refined by some layer, helper lines (HLOC), helper regions, helper
    /// regions refined by some layer. Line counts ignore blank lines (lines
    /// that are empty or whitespace-only).
    Stats {
        /// Product-line root directory
        #[arg(long, default_value = ".")]
        root: PathBuf,
        /// Print the table as JSON on stdout
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let paint = Paint::from_env();
    match run(cli, paint) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            err.print(paint);
            ExitCode::from(err.code())
        }
    }
}

#[derive(Clone, Copy)]
struct Paint {
    on: bool,
}

impl Paint {
    fn from_env() -> Self {
        let on = match std::env::var("CGPL_COLOR").as_deref() {
            Ok("never") => false,
            _ => std::io::stderr().is_terminal(),
        };
        Paint { on }
    }

    fn error(&self, label: &str) -> String {
        if self.on {
            format!("\x1b[1;31m{label}\x1b[0m")
        } else {
            label.to_string()
        }
    }

    fn warning(&self, label: &str) -> String {
        if self.on {
            format!("\x1b[1;33m{label}\x1b[0m")
        } else {
            label.to_string()
        }
    }
}

enum CliError {
    Load(LoadError),
    Discovery(PclDiscoveryError),
    Config(ConfigError),
    Graph(GraphError),
    Conflicts(Vec<Conflict>),
    Compose(ComposeError),
    Write(WriteError),
    Io { context: String, source: std::io::Error },
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Load(e) => match e {
                LoadError::Scan(scan) => match scan {
                    ScanError::Io { .. } | ScanError::NotADirectory { .. } => 3,
                    ScanError::Dialect(DialectError::Io { .. }) => 3,
                    _ => 2,
                },
                LoadError::MissingModel { .. } | LoadError::ModelIo { .. } => 3,
                LoadError::ModelSyntax { .. } | LoadError::Bind { .. } => 2,
            },
            CliError::Discovery(_) => 3,
            CliError::Config(ConfigError::Io { .. }) => 3,
            CliError::Config(ConfigError::Pcl { .. }) => 2,
            CliError::Graph(_) => 2,
            CliError::Conflicts(_) => 1,
            CliError::Compose(e) => match e {
                ComposeError::Graph(_) => 2,
                _ => 1,
            },
            CliError::Write(_) => 3,
            CliError::Io { .. } => 3,
        }
    }

    fn print(&self, paint: Paint) {
        let err = paint.error("error:");
        match self {
            CliError::Conflicts(conflicts) => {
                for c in conflicts {
                    eprintln!("{err} {c}");
                }
                eprintln!(
                    "{} conflict{} found",
                    conflicts.len(),
                    if conflicts.len() == 1 { "" } else { "s" }
                );
            }
            CliError::Compose(ComposeError::Conflicts(conflicts)) => {
                CliError::Conflicts(conflicts.clone()).print(paint);
            }
            CliError::Load(e) => eprintln!("{err} {e}"),
            CliError::Discovery(e) => eprintln!("{err} {e}"),
            CliError::Config(e) => eprintln!("{err} {e}"),
            CliError::Graph(e) => eprintln!("{err} {e}"),
            CliError::Compose(e) => eprintln!("{err} {e}"),
            CliError::Write(e) => eprintln!("{err} {e}"),
            CliError::Io { context, source } => eprintln!("{err} {context}: {source}"),
        }
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        CliError::Load(e)
    }
}

impl From<ComposeError> for CliError {
    fn from(e: ComposeError) -> Self {
        match e {
            ComposeError::Conflicts(c) => CliError::Conflicts(c),
            other => CliError::Compose(other),
        }
    }
}

fn run(cli: Cli, paint: Paint) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { common, json } => cmd_validate(&common, json, paint),
        Command::Compose { common, output, keep_markers, dry_run, json } => {
            cmd_compose(&common, output.as_deref(), keep_markers, dry_run, json, paint)
        }
        Command::Graph { common, out } => cmd_graph(&common, out.as_deref(), paint),
        Command::Stats { root, json } => cmd_stats(&root, json, paint),
    }
}

/// Loads the product line and prints its scan/bind warnings.
fn load(root: &Path, paint: Paint) -> Result<(ProductLine, ProductConfig), CliError> {
    let loaded = load_product_line(root)?;
    print_warnings(&loaded.warnings, paint);
    let cfg_path = discover_pcl(root).map_err(CliError::Discovery)?;
    let cfg = load_config(&cfg_path).map_err(CliError::Config)?;
    Ok((loaded.product_line, cfg))
}

fn load_with(root: &Path, pcl: Option<&Path>, paint: Paint) -> Result<(ProductLine, ProductConfig), CliError> {
    match pcl {
        None => load(root, paint),
        Some(path) => {
            let loaded = load_product_line(root)?;
            print_warnings(&loaded.warnings, paint);
            let cfg = load_config(path).map_err(CliError::Config)?;
            Ok((loaded.product_line, cfg))
        }
    }
}

fn print_warnings(warnings: &[Warning], paint: Paint) {
    for w in warnings {
        eprintln!("{} {w}", paint.warning("warning:"));
    }
}

fn cmd_validate(common: &CommonArgs, json: bool, paint: Paint) -> Result<(), CliError> {
    let (pl, cfg) = load_with(&common.root, common.pcl.as_deref(), paint)?;
    let result = validate_selection(&pl, &cfg.selected_layers).map_err(CliError::Graph)?;
    print_warnings(&result.warnings, paint);

    if json {
        let doc = serde_json::json!({
            "ok": result.ok(),
            "generator": cfg.generator_name,
            "closure": result.closure,
            "conflicts": result.conflicts,
            "warnings": result.warnings.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
        });
        println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
    }
    if !result.ok() {
        // Human-readable conflicts go to stderr either way; with --json the
        // same conflicts are also in the stdout document.
        return Err(CliError::Conflicts(result.conflicts));
    }
    if !json {
        println!(
            "ok: {} layers in closure ({})",
            result.closure.len(),
            result.closure.join(", ")
        );
    }
    Ok(())
}

fn cmd_compose(
    common: &CommonArgs,
    output: Option<&Path>,
    keep_markers: bool,
    dry_run: bool,
    json: bool,
    paint: Paint,
) -> Result<(), CliError> {
    let (pl, cfg) = load_with(&common.root, common.pcl.as_deref(), paint)?;
    let the_plan = plan(&pl, &cfg)?;
    print_warnings(&the_plan.warnings, paint);

    let out_dir = match output {
        Some(p) => p.to_path_buf(),
        None => common.root.join(cfg.output_dir()),
    };

    if dry_run {
        if json {
            let doc = serde_json::json!({
                "generator": cfg.generator_name,
                "output_dir": out_dir,
                "closure": the_plan.closure,
                "emit": the_plan.emit,
                "fragments": the_plan.fragments,
                "warnings": the_plan.warnings.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
            });
            println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
        } else {
            println!("would write {} artifacts to {}", the_plan.emit.len(), out_dir.display());
            for entry in &the_plan.emit {
                println!("  {} (from {})", entry.relative_path, entry.layer);
            }
            if !the_plan.fragments.is_empty() {
                println!("consumed as fragments:");
                for f in &the_plan.fragments {
                    println!("  {} (from {})", f.relative_path, f.layer);
                }
            }
        }
        return Ok(());
    }

    let opts = ComposeOptions { keep_markers };
    let result = compose_planned(&pl, &cfg, &opts, the_plan)?;
    let written = write_variant(&out_dir, &result).map_err(CliError::Write)?;

    if json {
        let doc = serde_json::json!({
            "generator": result.generator_name,
            "output_dir": written,
            "closure": result.closure,
            "artifacts": result
                .artifacts
                .iter()
                .map(|a| {
                    serde_json::json!({
                        "path": a.relative_path,
                        "layer": a.layer,
                        "binary": a.binary.is_some(),
                    })
                })
                .collect::<Vec<_>>(),
            "fragments": result.fragments,
            "warnings": result.warnings.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
        });
        println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
    } else {
        println!(
            "composed {} artifact{} into {} ({} fragment{} consumed)",
            result.artifacts.len(),
            if result.artifacts.len() == 1 { "" } else { "s" },
            written.display(),
            result.fragments.len(),
            if result.fragments.len() == 1 { "" } else { "s" }
        );
    }
    Ok(())
}

fn cmd_graph(common: &CommonArgs, out: Option<&Path>, paint: Paint) -> Result<(), CliError> {
    let (pl, cfg) = load_with(&common.root, common.pcl.as_deref(), paint)?;
    let graph = build_graph(&pl, &cfg.selected_layers).map_err(CliError::Graph)?;
    let validation = cgpl_core::validator::validate(&graph);
    let dot = export_dot(&graph, &validation.conflicts);
    match out {
        Some(path) => std::fs::write(path, dot).map_err(|source| CliError::Io {
            context: format!("cannot write {}", path.display()),
            source,
        })?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(dot.as_bytes()).map_err(|source| CliError::Io {
                context: "cannot write to stdout".into(),
                source,
            })?;
        }
    }
    Ok(())
}

fn cmd_stats(root: &Path, json: bool, paint: Paint) -> Result<(), CliError> {
    let loaded = load_product_line(root)?;
    print_warnings(&loaded.warnings, paint);
    let report = compute_stats(&loaded.product_line);

    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
        return Ok(());
    }

    let headers =
        ["layer", "TLOC", "defines", "refined-defines", "HLOC", "helpers", "refined-helpers"];
    let mut table: Vec<[String; 7]> = Vec::new();
    for row in report.rows.iter().chain(std::iter::once(&report.totals)) {
        table.push([
            row.layer.clone(),
            row.tloc.to_string(),
            row.define_count.to_string(),
            row.refined_define_count.to_string(),
            row.hloc.to_string(),
            row.helper_count.to_string(),
            row.refined_helper_count.to_string(),
        ]);
    }
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in &table {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut line = String::new();
    for (i, h) in headers.iter().enumerate() {
        if i > 0 {
            line.push_str("  ");
        }
        if i == 0 {
            line.push_str(&format!("{:<w$}", h, w = widths[i]));
        } else {
            line.push_str(&format!("{:>w$}", h, w = widths[i]));
        }
    }
    println!("{line}");
    for row in &table {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            if i == 0 {
                line.push_str(&format!("{:<w$}", cell, w = widths[i]));
            } else {
                line.push_str(&format!("{:>w$}", cell, w = widths[i]));
            }
        }
        println!("{line}");
    }
    Ok(())
}
