//! File-level driver for the corpus analytics.

use std::path::{Path, PathBuf};

use pacing_core::analysis::{analyze_inputs, AnalysisError, AnalysisInput, AnalysisReport, Lexicon};

use crate::CliError;

fn tagged(path: &Path, e: AnalysisError) -> CliError {
    CliError::Analysis { code: e.code(), message: format!("{}: {e}", path.display()) }
}

/// Reads every log, aggregates them, and writes the JSON report (plus the
/// transition CSV when asked and available).
pub fn analyze(
    logs: &[PathBuf],
    lexicon: Option<&Path>,
    report: &Path,
    csv: Option<&Path>,
) -> Result<AnalysisReport, CliError> {
    let lexicon = match lexicon {
        Some(p) => Some(Lexicon::load(p).map_err(|e| tagged(p, e))?),
        None => None,
    };
    let mut inputs = Vec::with_capacity(logs.len());
    for path in logs {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        inputs.push(AnalysisInput::parse(&text).map_err(|e| tagged(path, e))?);
    }
    let out = analyze_inputs(&inputs, lexicon.as_ref())
        .map_err(|e| CliError::Analysis { code: e.code(), message: e.to_string() })?;
    let mut json = serde_json::to_string_pretty(&out).expect("report serializes");
    json.push('\n');
    write(report, &json)?;
    if let Some(csv_path) = csv {
        match &out.transitions {
            Some(t) => write(csv_path, &t.to_csv())?,
            None => log::warn!("no transitions in input; {} not written", csv_path.display()),
        }
    }
    Ok(out)
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Output(format!("cannot write {}: {e}", path.display())))
}
