//! Flat TOML config files. Keys are the long flag names of the chosen
//! subcommand (`-` or `_` both accepted); values become flags placed before
//! the real command-line arguments, so explicit flags win.

use std::path::Path;

use clap::Command;

use crate::error::{CliError, CliResult};

/// Position of the subcommand token in `argv`, skipping global options.
fn subcommand_index(argv: &[String], cmd: &Command) -> Option<usize> {
    let names: Vec<&str> = cmd.get_subcommands().map(|s| s.get_name()).collect();
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].as_str();
        if a == "--config" {
            i += 2;
            continue;
        }
        if names.contains(&a) {
            return Some(i);
        }
        i += 1;
    }
    None
}

pub fn config_path(argv: &[String]) -> Option<String> {
    argv.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            argv.get(i + 1).cloned()
        } else {
            a.strip_prefix("--config=").map(str::to_owned)
        }
    })
}

/// Splice the flags from `config_file` into `argv` right after the subcommand.
pub fn merge(argv: Vec<String>, config_file: &Path, cmd: &Command) -> CliResult<Vec<String>> {
    let text = std::fs::read_to_string(config_file).map_err(|e| CliError::io(config_file, e))?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", config_file.display())))?;
    let Some(pos) = subcommand_index(&argv, cmd) else {
        return Ok(argv);
    };
    let sub = cmd.find_subcommand(&argv[pos]).expect("found above");
    let known: Vec<&str> = sub.get_arguments().filter_map(|a| a.get_long()).filter(|l| *l != "config").collect();

    let mut extra = Vec::new();
    for (key, value) in &table {
        let flag = key.replace('_', "-");
        if !known.contains(&flag.as_str()) {
            return Err(CliError::Usage(format!(
                "{}: unknown key `{key}` for `{}` (known: {})",
                config_file.display(),
                sub.get_name(),
                known.join(", ")
            )));
        }
        let text = match value {
            toml::Value::Boolean(true) => {
                extra.push(format!("--{flag}"));
                continue;
            }
            toml::Value::Boolean(false) => continue,
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            other => {
                return Err(CliError::Usage(format!(
                    "{}: key `{key}` must be a string, number or boolean, got {}",
                    config_file.display(),
                    other.type_str()
                )))
            }
        };
        extra.push(format!("--{flag}={text}"));
    }
    let mut merged = argv[..=pos].to_vec();
    merged.extend(extra);
    merged.extend_from_slice(&argv[pos + 1..]);
    Ok(merged)
}
