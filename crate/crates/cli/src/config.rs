//! `key = value` config files.
//!
//! Keys are long flag names (`batch-size` or `batch_size`). Values are
//! spliced into the argument list ahead of the user's own flags, so flags
//! given on the command line win. Keys belonging to another subcommand are
//! ignored, which lets one file serve every verb.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use affect_core::{Error, Result};

/// Parses `key = value` lines. `#` starts a comment.
pub fn parse_config(text: &str, source: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: source.to_owned(),
            line: idx + 1,
            message: "expected `key = value`".into(),
        })?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(Error::Parse {
                path: source.to_owned(),
                line: idx + 1,
                message: "empty key".into(),
            });
        }
        out.push((key, v.trim().to_owned()));
    }
    Ok(out)
}

pub fn load_config(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, &path.display().to_string())
}

fn long_args(cmd: &clap::Command) -> Vec<(String, bool)> {
    cmd.get_arguments()
        .filter_map(|a| {
            a.get_long()
                .map(|l| (l.to_owned(), a.get_action().takes_values()))
        })
        .collect()
}

fn lookup<'a>(table: &'a [(String, bool)], key: &str) -> Option<&'a (String, bool)> {
    table.iter().find(|(l, _)| l == key)
}

fn push_flag(out: &mut Vec<OsString>, long: &str, takes_value: bool, value: &str) -> Result<()> {
    if takes_value {
        out.push(format!("--{long}").into());
        out.push(value.into());
        return Ok(());
    }
    match value {
        "true" | "on" | "1" => out.push(format!("--{long}").into()),
        "false" | "off" | "0" => {}
        other => {
            return Err(Error::Validation(format!(
                "config key `{long}` is a switch, got `{other}`"
            )))
        }
    }
    Ok(())
}

/// Returns `args` with config-file values inserted, or unchanged when no
/// `--config` flag is present.
pub fn merge_config(root: &clap::Command, args: Vec<OsString>) -> Result<Vec<OsString>> {
    let globals = long_args(root);
    let mut config_path = None;
    let mut sub_pos = None;
    let mut i = 1;
    while i < args.len() {
        let tok = args[i].to_string_lossy();
        if let Some(v) = tok.strip_prefix("--config=") {
            config_path = Some(v.to_owned());
        } else if tok == "--config" {
            config_path = args.get(i + 1).map(|v| v.to_string_lossy().into_owned());
            i += 1;
        } else if let Some(name) = tok.strip_prefix("--") {
            if !name.contains('=') && lookup(&globals, name).is_some_and(|(_, tv)| *tv) {
                i += 1;
            }
        } else if sub_pos.is_none() && root.find_subcommand(tok.as_ref()).is_some() {
            sub_pos = Some(i);
        }
        i += 1;
    }
    let Some(path) = config_path else {
        return Ok(args);
    };
    let entries = load_config(Path::new(&path))?;

    let sub = sub_pos.and_then(|p| root.find_subcommand(args[p].to_string_lossy().as_ref()));
    let sub_args = sub.map(long_args).unwrap_or_default();
    let known_anywhere = |key: &str| {
        root.get_subcommands()
            .any(|s| long_args(s).iter().any(|(l, _)| l == key))
    };

    let mut front = Vec::new();
    let mut after_sub = Vec::new();
    for (key, value) in &entries {
        if key == "config" {
            return Err(Error::Validation("config files cannot nest `config`".into()));
        }
        if let Some((long, tv)) = lookup(&globals, key) {
            push_flag(&mut front, long, *tv, value)?;
        } else if let Some((long, tv)) = lookup(&sub_args, key) {
            push_flag(&mut after_sub, long, *tv, value)?;
        } else if !known_anywhere(key) {
            return Err(Error::Validation(format!("unknown config key `{key}` in {path}")));
        }
    }

    let mut merged = Vec::with_capacity(args.len() + front.len() + after_sub.len());
    merged.push(args[0].clone());
    merged.extend(front);
    match sub_pos {
        Some(p) => {
            merged.extend_from_slice(&args[1..=p]);
            merged.extend(after_sub);
            merged.extend_from_slice(&args[p + 1..]);
        }
        None => merged.extend_from_slice(&args[1..]),
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lines() {
        let c = parse_config("# top\nepochs = 3\n\nbatch_size=8 # trailing\n", "c").unwrap();
        assert_eq!(
            c,
            vec![("epochs".into(), "3".into()), ("batch-size".into(), "8".into())]
        );
        assert!(parse_config("epochs 3\n", "c").is_err());
        assert!(parse_config(" = 3\n", "c").is_err());
    }

    #[test]
    fn flags_are_spliced_before_user_args() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "seed = 4\nepochs = 2\nk = 3\n").unwrap();
        let args: Vec<OsString> = ["affect", "--config", path.to_str().unwrap(), "train", "--epochs", "5"]
            .iter()
            .map(OsString::from)
            .collect();
        let merged = merge_config(&crate::clap_command(), args).unwrap();
        let merged: Vec<String> = merged.iter().map(|s| s.to_string_lossy().into_owned()).collect();
        let sub = merged.iter().position(|s| s == "train").unwrap();
        assert_eq!(&merged[1..3], ["--seed", "4"]);
        assert_eq!(&merged[sub + 1..sub + 3], ["--epochs", "2"]);
        assert_eq!(merged.last().unwrap(), "5");
        // `k` belongs to kfold and is skipped for train
        assert!(!merged.iter().any(|s| s == "--k"));
    }

    #[test]
    fn unknown_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.conf");
        fs::write(&path, "nonsense = 1\n").unwrap();
        let args: Vec<OsString> = ["affect", "--config", path.to_str().unwrap(), "gradcheck"]
            .iter()
            .map(OsString::from)
            .collect();
        assert!(merge_config(&crate::clap_command(), args).is_err());
    }
}
