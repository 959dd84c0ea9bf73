//! Library surface of the experiment CLI: config parsing, subcommand
//! implementations, and deterministic output writing. The binary is a thin
//! wrapper so the acceptance suite can drive the same code paths directly.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use serde_json::json;

use boundarylab_core::Result;
use commands::RunOutput;
use config::ExperimentConfig;

pub const COMMANDS: &[&str] = &[
    "drift",
    "cell",
    "walk",
    "boundary",
    "gauge-growth",
    "qni",
    "estimgauge",
    "entropy",
    "check-identities",
];

pub fn dispatch(command: &str, config: &ExperimentConfig) -> Result<RunOutput> {
    match command {
        "drift" => commands::drift(config),
        "cell" => commands::cell(config),
        "walk" => commands::walk(config),
        "boundary" => commands::boundary(config),
        "gauge-growth" => commands::gauge_growth(config),
        "qni" => commands::qni(config),
        "estimgauge" => commands::estimgauge(config),
        "entropy" => commands::entropy(config),
        "check-identities" => commands::check_identities(config),
        other => Err(boundarylab_core::Error::Precondition(format!(
            "unknown command {other:?}"
        ))),
    }
}

/// Output directory precedence: CLI flag, then the BOUNDARYLAB_OUT
/// environment variable, then the config field, then `out`.
pub fn resolve_out_dir(flag: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    if let Some(path) = flag {
        return path.to_path_buf();
    }
    if let Ok(env) = std::env::var("BOUNDARYLAB_OUT") {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    if let Some(dir) = &config.output_dir {
        return PathBuf::from(dir);
    }
    PathBuf::from("out")
}

/// Writes the summary and data files; returns the summary document
/// (byte-deterministic given the config, unless a timestamp is requested).
pub fn write_outputs(
    command: &str,
    output: &RunOutput,
    out_dir: &Path,
    timestamp: bool,
) -> std::io::Result<serde_json::Value> {
    std::fs::create_dir_all(out_dir)?;
    let mut document = json!({
        "command": command,
        "pass": output.failures.is_empty(),
        "failures": output.failures,
        "results": output.summary,
    });
    if timestamp {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        document["generated_at_unix"] = json!(now);
    }
    let mut text = serde_json::to_string_pretty(&document).expect("serializable");
    text.push('\n');
    std::fs::write(out_dir.join(format!("{command}_summary.json")), text)?;
    for (name, content) in &output.files {
        std::fs::write(out_dir.join(name), content)?;
    }
    Ok(document)
}
