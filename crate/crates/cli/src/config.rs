//! Flat `key = value` run files. Keys are flag names without the leading
//! dashes (`chain-length` or `chain_length`); `#` starts a comment.

use std::ffi::OsString;
use std::path::Path;

use crate::CliError;

pub fn parse(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Usage(format!("config line {}: expected key = value", i + 1)));
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(CliError::Usage(format!("config line {}: bad key `{}`", i + 1, k.trim())));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text)
}

/// Inserts config entries right after the subcommand so that flags given on
/// the command line, which come later, override them.
pub fn splice(args: &[OsString], subcommand: &str, entries: &[(String, String)]) -> Vec<OsString> {
    let pos = args.iter().skip(1).position(|a| a == subcommand).map_or(args.len(), |p| p + 2);
    let mut out: Vec<OsString> = args[..pos].to_vec();
    out.extend(entries.iter().map(|(k, v)| OsString::from(format!("--{k}={v}"))));
    out.extend_from_slice(&args[pos..]);
    out
}
