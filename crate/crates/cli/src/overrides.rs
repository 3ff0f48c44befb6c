//! `--key value` overrides applied on top of a JSON campaign config.

use serde_json::{Map, Value};

use crate::CliError;

/// Optional config path and the `(key, raw value)` overrides.
pub type Parsed = (Option<String>, Vec<(String, String)>);

/// Splits `args` into an optional `--config` path and `(key, value)` pairs.
/// Accepts both `--key value` and `--key=value`.
pub fn parse_pairs(args: &[String]) -> Result<Parsed, CliError> {
    let mut config = None;
    let mut pairs = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            return Err(CliError::Usage(format!("unexpected argument '{arg}'")));
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| CliError::Usage(format!("flag --{flag} needs a value")))?;
                (flag.to_string(), v.clone())
            }
        };
        if key.is_empty() {
            return Err(CliError::Usage("empty flag name".into()));
        }
        if key == "config" {
            config = Some(value);
        } else {
            pairs.push((key, value));
        }
    }
    Ok((config, pairs))
}

/// Parses `raw` as JSON, falling back to a plain string.
fn literal(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets `root[a][b]...` for the dotted `key`. Only fields already present in
/// the object (or known to the caller through `known`) may be set at the top level.
pub fn apply(root: &mut Value, key: &str, raw: &str, known: &[&str]) -> Result<(), CliError> {
    let path: Vec<&str> = key.split('.').collect();
    if !known.contains(&path[0]) {
        return Err(CliError::Usage(format!("unknown config field '{}'", path[0])));
    }
    let mut node = root;
    for (i, part) in path.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Usage(format!("'{key}' does not name an object field")))?;
        if i + 1 == path.len() {
            obj.insert(part.to_string(), literal(raw));
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("split always yields at least one part")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn pairs_both_forms() {
        let (cfg, pairs) =
            parse_pairs(&strings(&["--config", "c.json", "--n_m=5", "--alpha", "0.05"])).unwrap();
        assert_eq!(cfg.as_deref(), Some("c.json"));
        assert_eq!(
            pairs,
            vec![("n_m".into(), "5".into()), ("alpha".into(), "0.05".into())]
        );
    }

    #[test]
    fn pairs_reject_bare_and_dangling() {
        assert!(parse_pairs(&strings(&["n_m"])).is_err());
        assert!(parse_pairs(&strings(&["--n_m"])).is_err());
    }

    #[test]
    fn apply_numbers_strings_and_nested() {
        let mut v = json!({"n_m": 1, "system": {"kind": "haar", "seed": 1}});
        let known = ["n_m", "system", "output_dir"];
        apply(&mut v, "n_m", "250", &known).unwrap();
        apply(&mut v, "system.seed", "9", &known).unwrap();
        apply(&mut v, "output_dir", "runs/a", &known).unwrap();
        assert_eq!(v, json!({"n_m": 250, "system": {"kind": "haar", "seed": 9}, "output_dir": "runs/a"}));
        assert!(apply(&mut v, "bogus", "1", &known).is_err());
        assert!(apply(&mut v, "n_m.x", "1", &known).is_err());
    }
}
