//! `--config FILE`: one `key = value` per line, keys are long flag names.
//! Blank lines and `#` comments are ignored; `key = true` sets a switch and
//! `key = false` leaves it unset. Values from the file are placed before the
//! command-line flags so that the command line wins.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use kqrk_core::{Error, Result};

const SUBCOMMANDS: [&str; 5] = ["gen", "solve", "bounds", "experiment", "verify"];

pub fn parse_config(text: &str, origin: &Path) -> Result<Vec<OsString>> {
    let mut args = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidSpec(format!("{}:{}: expected key = value", origin.display(), no + 1))
        })?;
        let key = key.trim().trim_start_matches("--");
        let value = value.trim().trim_matches('"');
        if key.is_empty() || key == "config" {
            return Err(Error::InvalidSpec(format!("{}:{}: bad key {key:?}", origin.display(), no + 1)));
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

/// Splices config-file flags into `argv` right after the subcommand path
/// and removes `--config FILE` itself.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut out = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy().into_owned();
        if s == "--config" {
            let path = it
                .next()
                .ok_or_else(|| Error::InvalidSpec("--config needs a file".into()))?;
            config = Some(path);
        } else if let Some(p) = s.strip_prefix("--config=") {
            config = Some(p.into());
        } else {
            out.push(a);
        }
    }
    let Some(path) = config else { return Ok(out) };
    let path = Path::new(&path).to_path_buf();
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::InvalidSpec(format!("cannot read config {}: {e}", path.display())))?;
    let extra = parse_config(&text, &path)?;
    let pos = out
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .map(|i| {
            if out[i] == "experiment" && i + 1 < out.len() {
                i + 2
            } else {
                i + 1
            }
        })
        .unwrap_or(out.len());
    let tail = out.split_off(pos.min(out.len()));
    out.extend(extra);
    out.extend(tail);
    Ok(out)
}
