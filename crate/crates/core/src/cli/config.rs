//! Layered run configuration: built-in defaults, then an optional JSON file,
//! then explicit command-line flags.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use super::CliError;

/// Keys of `file` that the defaults do not know, as dotted paths.
fn unknown_keys(defaults: &Value, file: &Value, prefix: &str, out: &mut Vec<String>) {
    let (Value::Object(d), Value::Object(f)) = (defaults, file) else {
        return;
    };
    for (k, v) in f {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match d.get(k) {
            None => out.push(path),
            Some(dv) => unknown_keys(dv, v, &path, out),
        }
    }
}

/// Recursive object merge; non-object values in `top` replace `base`.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(k.as_str()) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub(crate) fn resolve<T>(defaults: T, file: Option<&Path>, flags: &impl Serialize) -> Result<T, CliError>
where
    T: Serialize + DeserializeOwned,
{
    let mut value = serde_json::to_value(&defaults)?;
    if let Some(path) = file {
        let bytes = fs::read(path).map_err(|e| CliError::file(path, e))?;
        let from_file: Value = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::new("config", format!("{}: {e}", path.display())))?;
        if !from_file.is_object() {
            return Err(CliError::new("config", format!("{}: expected a JSON object", path.display())));
        }
        let mut bad = Vec::new();
        unknown_keys(&value, &from_file, "", &mut bad);
        if !bad.is_empty() {
            return Err(CliError::new("config", format!("unknown config keys: {}", bad.join(", "))));
        }
        merge(&mut value, from_file);
    }
    let mut overrides = serde_json::to_value(flags)?;
    strip_empty(&mut overrides);
    merge(&mut value, overrides);
    serde_json::from_value(value).map_err(|e| CliError::new("config", e.to_string()))
}

/// Drops unset flags: nulls, and groups left empty.
fn strip_empty(v: &mut Value) {
    if let Value::Object(m) = v {
        for child in m.values_mut() {
            strip_empty(child);
        }
        m.retain(|_, c| !c.is_null() && !matches!(c, Value::Object(o) if o.is_empty()));
    }
}
