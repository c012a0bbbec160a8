//! Flat `key = value` run configuration.
//!
//! Keys are the long flag names of a subcommand (`steps`, `lambda-l1`,
//! `ratio-threshold`; underscores are accepted for dashes). Lines starting
//! with `#` are comments. File values are spliced into the command line in
//! front of the user's flags, and the parser lets later flags win, so the
//! command line always overrides the file.

use std::ffi::OsString;
use std::path::Path;

use clap::{ArgAction, Command};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str, origin: &Path) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::format(origin, format!("line {}: expected key = value", i + 1)))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(Error::format(origin, format!("line {}: empty key", i + 1)));
        }
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            return Err(Error::format(origin, format!("line {}: {key} already set on line {}", i + 1, prev.line)));
        }
        out.push(Entry { line: i + 1, key, value: value.trim().to_string() });
    }
    Ok(out)
}

fn is_flag(action: &ArgAction) -> bool {
    matches!(action, ArgAction::SetTrue | ArgAction::SetFalse)
}

/// Turns entries into `--key value` arguments for `sub`. Keys that are not
/// flags of `sub`, and non-boolean values for switches, are errors.
pub fn to_args(entries: &[Entry], sub: &Command, origin: &Path) -> Result<Vec<OsString>> {
    let mut args = Vec::new();
    for e in entries {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(e.key.as_str()) && a.get_id() != "config")
            .ok_or_else(|| {
                Error::Config(format!(
                    "{}: line {}: unknown key {:?} for {}",
                    origin.display(),
                    e.line,
                    e.key,
                    sub.get_name()
                ))
            })?;
        if is_flag(arg.get_action()) {
            match e.value.as_str() {
                "true" => args.push(format!("--{}", e.key).into()),
                "false" => {}
                v => {
                    return Err(Error::Config(format!(
                        "{}: line {}: {} takes true or false, got {v:?}",
                        origin.display(),
                        e.line,
                        e.key
                    )))
                }
            }
        } else {
            args.push(format!("--{}", e.key).into());
            args.push(e.value.clone().into());
        }
    }
    Ok(args)
}

/// Finds `--config <path>` or `--config=<path>` in raw arguments.
pub fn find_config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Arg;

    fn cmd() -> Command {
        Command::new("train")
            .arg(Arg::new("steps").long("steps"))
            .arg(Arg::new("lambda-l1").long("lambda-l1"))
            .arg(Arg::new("verbose").long("verbose").action(ArgAction::SetTrue))
    }

    #[test]
    fn parses_comments_and_underscores() {
        let e = parse("# run\nsteps = 5\n\nlambda_l1=10 \nverbose = true\n", Path::new("c")).unwrap();
        let args = to_args(&e, &cmd(), Path::new("c")).unwrap();
        assert_eq!(args, ["--steps", "5", "--lambda-l1", "10", "--verbose"].map(OsString::from));
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let e = parse("stepz = 5", Path::new("c")).unwrap();
        let err = to_args(&e, &cmd(), Path::new("c")).unwrap_err().to_string();
        assert!(err.contains("unknown key \"stepz\"") && err.contains("line 1"), "{err}");
        assert!(parse("steps 5", Path::new("c")).is_err());
        assert!(parse("steps=1\nsteps=2", Path::new("c")).is_err());
        let e = parse("verbose = yes", Path::new("c")).unwrap();
        assert!(to_args(&e, &cmd(), Path::new("c")).is_err());
    }

    #[test]
    fn finds_config_in_either_form() {
        let a = |v: &[&str]| v.iter().map(OsString::from).collect::<Vec<_>>();
        assert_eq!(find_config_path(&a(&["x", "--config", "r.cfg"])), Some("r.cfg".into()));
        assert_eq!(find_config_path(&a(&["x", "--config=r.cfg"])), Some("r.cfg".into()));
        assert_eq!(find_config_path(&a(&["x", "--steps", "3"])), None);
    }
}
