//! `--config FILE`: flat `key=value` lines mirroring flag names, spliced into
//! the argument list ahead of the command-line flags so that flags win.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Turns config-file text into flag arguments. `#` starts a comment; blank
/// lines are skipped. `key=true` becomes a bare `--key`, `key=false` is
/// dropped.
pub fn parse(text: &str, origin: &Path) -> Result<Vec<OsString>> {
    let mut args = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected key=value, got `{line}`", origin.display(), i + 1);
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            bail!("{}:{}: invalid key `{key}`", origin.display(), i + 1);
        }
        match value {
            "true" => args.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                args.push(format!("--{key}").into());
                args.push(value.into());
            }
        }
    }
    Ok(args)
}

/// Removes `--config FILE` (or `--config=FILE`) from `args` and inserts the
/// file's flags right after the subcommand name.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut out = Vec::with_capacity(args.len());
    let mut config = None;
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--" {
            out.push(arg);
            out.extend(iter.by_ref());
            break;
        }
        if s == "--config" {
            let path = iter.next().context("--config needs a file path")?;
            config = Some(path);
        } else if let Some(path) = s.strip_prefix("--config=") {
            config = Some(OsString::from(path));
        } else {
            out.push(arg);
        }
    }
    let Some(path) = config else {
        return Ok(out);
    };
    let path = Path::new(&path);
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let extra = parse(&text, path)?;
    // args[0] is the binary; the subcommand is the first non-flag after it.
    let pos = out
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map_or(out.len(), |p| p + 2);
    out.splice(pos..pos, extra);
    Ok(out)
}
