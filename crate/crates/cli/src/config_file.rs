//! Flat `key = value` run configuration. Keys are long flag names of the
//! chosen subcommand (or global flags) and are spliced into the argument
//! list ahead of the user's own flags, so explicit flags win.

use std::ffi::OsString;
use std::path::Path;

use clap::{ArgAction, Command};

#[derive(Debug)]
pub struct ConfigError(pub String);

pub fn parse(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("line {}: expected key = value, got {raw:?}", i + 1)))?;
        let key = k.trim();
        if key.is_empty() {
            return Err(ConfigError(format!("line {}: empty key", i + 1)));
        }
        if out.iter().any(|(seen, _): &(String, String)| seen == key) {
            return Err(ConfigError(format!("line {}: duplicate key {key}", i + 1)));
        }
        out.push((key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn find_arg<'a>(cmd: &'a Command, key: &str) -> Option<&'a clap::Arg> {
    cmd.get_arguments().find(|a| a.get_long() == Some(key))
}

/// Expands `--config FILE` into flags placed right after the subcommand name.
pub fn expand(args: Vec<OsString>, root: &Command) -> Result<Vec<OsString>, ConfigError> {
    let mut config_path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            config_path = args.get(i + 1).cloned();
        } else if let Some(p) = s.strip_prefix("--config=") {
            config_path = Some(p.into());
        }
    }
    let Some(path) = config_path else { return Ok(args) };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
    let entries = parse(&text)?;

    let sub_pos = args
        .iter()
        .position(|a| root.find_subcommand(a.to_string_lossy().as_ref()).is_some())
        .ok_or_else(|| ConfigError("a subcommand is required with --config".into()))?;
    let sub = root
        .find_subcommand(args[sub_pos].to_string_lossy().as_ref())
        .expect("found above");

    let mut injected = Vec::new();
    for (key, value) in entries {
        if key == "config" {
            return Err(ConfigError("config files cannot nest --config".into()));
        }
        let arg = find_arg(sub, &key)
            .or_else(|| find_arg(root, &key).filter(|a| a.is_global_set()))
            .ok_or_else(|| ConfigError(format!("unknown config key {key:?} for {}", sub.get_name())))?;
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" => injected.push(OsString::from(format!("--{key}"))),
                "false" => {}
                other => return Err(ConfigError(format!("{key} expects true or false, got {other:?}"))),
            },
            _ => injected.push(OsString::from(format!("--{key}={value}"))),
        }
    }
    let mut out = args;
    out.splice(sub_pos + 1..sub_pos + 1, injected);
    Ok(out)
}
