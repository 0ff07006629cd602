//! `ontoforge` command-line interface.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::ingest::{fetch_timeout_from_env, load_manifest, Fetch, HttpFetcher, Mode};
use crate::patterns::{PatternLibrary, TopLevel};
use crate::pipeline::{build, BuildFailure, BuildOptions, BuildOutput, ErrorPolicy};
use crate::registry::{check_no_regression, temp_sibling, RegistryLock};
use crate::serialize::{diff_documents, read_functional, serialize_functional};

/// Process exit codes. Stable across releases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    BuildError = 1,
    Warnings = 2,
    Usage = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Parser)]
#[command(name = "ontoforge", version, about = "Regenerate an OWL ontology from its knowledge sources and patterns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct BuildFlags {
    /// Exit with status 2 when the build produced warnings.
    #[arg(long)]
    fail_on_warnings: bool,
    /// Identifier registry to mint IRIs from (overrides the manifest).
    #[arg(long, value_name = "REGISTRY")]
    ids: Option<PathBuf>,
    /// Force live sources on (`live`) or off (`release`).
    #[arg(long, value_name = "MODE", value_parser = parse_mode)]
    mode_override: Option<Mode>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the ontology and write it to OUT.
    Build {
        manifest: PathBuf,
        #[arg(short, long, value_name = "OUT")]
        out: PathBuf,
        #[command(flatten)]
        flags: BuildFlags,
    },
    /// Run the build without writing anything; report every error.
    Check {
        manifest: PathBuf,
        #[command(flatten)]
        flags: BuildFlags,
    },
    /// Print class counts per top-level class.
    Stats {
        manifest: PathBuf,
        #[command(flatten)]
        flags: BuildFlags,
    },
    /// Compare two ontologies written by `build`.
    Diff { old: PathBuf, new: PathBuf },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, out, err, &HttpFetcher)
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write, fetcher: &dyn Fetch) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let status = if e.use_stderr() { ExitStatus::Usage } else { ExitStatus::Success };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return status;
        }
    };
    let timeout = match fetch_timeout_from_env() {
        Ok(t) => t,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            return ExitStatus::Usage;
        }
    };
    let options = |flags: &BuildFlags, policy| BuildOptions {
        policy,
        ids: flags.ids.clone(),
        mode_override: flags.mode_override,
        timeout,
        patterns: PatternLibrary::builtin(),
    };
    match cli.command {
        Command::Build { manifest, out: out_path, flags } => {
            cmd_build(&manifest, &out_path, &options(&flags, ErrorPolicy::FailFast), flags.fail_on_warnings, fetcher, out, err)
        }
        Command::Check { manifest, flags } => {
            cmd_check(&manifest, &options(&flags, ErrorPolicy::CollectAll), flags.fail_on_warnings, fetcher, out, err)
        }
        Command::Stats { manifest, flags } => cmd_stats(&manifest, &options(&flags, ErrorPolicy::FailFast), fetcher, out, err),
        Command::Diff { old, new } => cmd_diff(&old, &new, out, err),
    }
}

fn report_failure(failure: &BuildFailure, err: &mut dyn Write) {
    for w in &failure.warnings {
        let _ = writeln!(err, "{w}");
    }
    for e in &failure.errors {
        let _ = writeln!(err, "{e}");
    }
}

fn warnings_status(output: &BuildOutput, fail_on_warnings: bool) -> ExitStatus {
    if fail_on_warnings && !output.warnings.is_empty() {
        ExitStatus::Warnings
    } else {
        ExitStatus::Success
    }
}

/// Full build. Output and registry are replaced only when the whole build
/// succeeds.
pub fn cmd_build(
    manifest: &Path,
    out_path: &Path,
    options: &BuildOptions,
    fail_on_warnings: bool,
    fetcher: &dyn Fetch,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> ExitStatus {
    let _lock = match registry_path(manifest, options).map(|p| RegistryLock::acquire(&p)).transpose() {
        Ok(lock) => lock,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return ExitStatus::BuildError;
        }
    };
    let output = match build(manifest, options, fetcher) {
        Ok(o) => o,
        Err(failure) => {
            report_failure(&failure, err);
            return ExitStatus::BuildError;
        }
    };
    for w in &output.warnings {
        let _ = writeln!(err, "{w}");
    }
    let status = warnings_status(&output, fail_on_warnings);
    if status != ExitStatus::Success {
        let _ = writeln!(err, "error: {} warnings and --fail-on-warnings given; nothing written", output.warnings.len());
        return status;
    }
    if let Err(e) = persist(&output, out_path) {
        let _ = writeln!(err, "error: {e}");
        return ExitStatus::BuildError;
    }
    let _ = writeln!(out, "{}", output.report);
    let _ = writeln!(out, "wrote {}", out_path.display());
    ExitStatus::Success
}

/// The registry a build will write, if any. Unreadable manifests yield
/// `None`; the build itself reports why.
fn registry_path(manifest: &Path, options: &BuildOptions) -> Option<PathBuf> {
    if let Some(p) = &options.ids {
        return Some(p.clone());
    }
    let bytes = fs::read(manifest).ok()?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    load_manifest(&bytes, &manifest.display().to_string(), base).ok()?.id_registry
}

fn persist(output: &BuildOutput, out_path: &Path) -> Result<(), String> {
    let text = serialize_functional(&output.ontology).map_err(|e| e.to_string())?;
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
    let result = (|| {
        if let Some((path, reg)) = &output.registry {
            check_no_regression(reg, path).map_err(|e| e.to_string())?;
            let tmp = temp_sibling(path);
            fs::write(&tmp, reg.to_tsv()).map_err(|e| format!("{}: {e}", tmp.display()))?;
            staged.push((tmp, path.clone()));
        }
        let tmp = temp_sibling(out_path);
        fs::write(&tmp, &text).map_err(|e| format!("{}: {e}", tmp.display()))?;
        staged.push((tmp, out_path.to_path_buf()));
        for (tmp, dest) in &staged {
            fs::rename(tmp, dest).map_err(|e| format!("{}: {e}", dest.display()))?;
        }
        Ok(())
    })();
    if result.is_err() {
        for (tmp, _) in &staged {
            let _ = fs::remove_file(tmp);
        }
    }
    result
}

pub fn cmd_check(
    manifest: &Path,
    options: &BuildOptions,
    fail_on_warnings: bool,
    fetcher: &dyn Fetch,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> ExitStatus {
    match build(manifest, options, fetcher) {
        Ok(output) => {
            for w in &output.warnings {
                let _ = writeln!(out, "{w}");
            }
            let _ = writeln!(out, "0 errors, {} warnings", output.warnings.len());
            warnings_status(&output, fail_on_warnings)
        }
        Err(failure) => {
            report_failure(&failure, err);
            let _ = writeln!(out, "{} errors, {} warnings", failure.errors.len(), failure.warnings.len());
            ExitStatus::BuildError
        }
    }
}

pub fn cmd_stats(manifest: &Path, options: &BuildOptions, fetcher: &dyn Fetch, out: &mut dyn Write, err: &mut dyn Write) -> ExitStatus {
    let output = match build(manifest, options, fetcher) {
        Ok(o) => o,
        Err(failure) => {
            report_failure(&failure, err);
            return ExitStatus::BuildError;
        }
    };
    let _ = write!(out, "{}", stats_table(&output));
    ExitStatus::Success
}

/// Class type, count and data source per top-level class. Paper and Term
/// rows appear only when the build has them.
pub fn stats_table(output: &BuildOutput) -> String {
    let mut rows: Vec<[String; 3]> = vec![["Class type".into(), "Count".into(), "Data source".into()]];
    for top in TopLevel::ALL {
        let sources: Vec<String> =
            output.manifest.sources.iter().filter(|s| s.parent == top).map(|s| s.locator.to_string()).collect();
        let count = output.report.count(top);
        if !top.is_scaffold() && count == 0 && sources.is_empty() {
            continue;
        }
        let source = if sources.is_empty() { "-".to_string() } else { sources.join(", ") };
        rows.push([top.display_name().to_string(), count.to_string(), source]);
    }
    let w0 = rows.iter().map(|r| r[0].len()).max().unwrap_or(0);
    let w1 = rows.iter().map(|r| r[1].len()).max().unwrap_or(0);
    let mut text = String::new();
    for r in &rows {
        text.push_str(format!("{:<w0$}  {:>w1$}  {}", r[0], r[1], r[2]).trim_end());
        text.push('\n');
    }
    text.push_str(&format!("Scaffold total: {}\n", output.report.scaffold_total));
    text
}

pub fn cmd_diff(old: &Path, new: &Path, out: &mut dyn Write, err: &mut dyn Write) -> ExitStatus {
    let read = |p: &Path| -> Result<_, String> {
        let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
        read_functional(&text).map_err(|e| format!("{}: not an ontoforge document: {e}", p.display()))
    };
    let (a, b) = match (read(old), read(new)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => {
            let _ = writeln!(err, "error: {e}");
            return ExitStatus::Usage;
        }
    };
    let (removed, added) = diff_documents(&a, &b);
    for line in &removed {
        let _ = writeln!(out, "-{line}");
    }
    for line in &added {
        let _ = writeln!(out, "+{line}");
    }
    if removed.is_empty() && added.is_empty() {
        ExitStatus::Success
    } else {
        ExitStatus::BuildError
    }
}
