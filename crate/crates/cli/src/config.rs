use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

/// Keys that select a variant of a tagged enum; objects whose tag differs
/// from the base are replaced rather than merged.
const TAG_KEYS: &[&str] = &["model", "type", "kind", "policy", "split", "ranking", "start", "test"];

/// Read a TOML or JSON config file (by extension, JSON for `.json`).
///
/// The file is parsed twice: once into `T` so that type errors carry line
/// numbers, once into a generic value used for layering over defaults. A
/// run manifest is accepted too; its `config` object is used.
pub fn read_layer<T: DeserializeOwned>(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let value: Value = if is_json {
        serde_json::from_str(&text).with_context(|| format!("{}", path.display()))?
    } else {
        let v: toml::Value = toml::from_str(&text).with_context(|| format!("{}", path.display()))?;
        serde_json::to_value(v)?
    };
    if let Some(inner) = manifest_config(&value) {
        serde_json::from_value::<T>(inner.clone())
            .with_context(|| format!("{}: invalid `config` in manifest", path.display()))?;
        return Ok(inner.clone());
    }
    if is_json {
        serde_json::from_str::<T>(&text).with_context(|| format!("{}", path.display()))?;
    } else {
        toml::from_str::<T>(&text).with_context(|| format!("{}", path.display()))?;
    }
    Ok(value)
}

fn manifest_config(v: &Value) -> Option<&Value> {
    let obj = v.as_object()?;
    if obj.contains_key("schema_version") {
        obj.get("config")
    } else {
        None
    }
}

/// Overlay `top` onto `base`, recursing into objects.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            let switches_variant = TAG_KEYS
                .iter()
                .any(|k| match (b.get(*k), t.get(*k)) {
                    (Some(Value::String(bv)), Some(Value::String(tv))) => bv != tv,
                    _ => false,
                });
            if switches_variant {
                *b = t;
                return;
            }
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, t) => *slot = t,
    }
}

/// Resolve a config: defaults (or `base`), then the file, then a seed
/// override if the config has a seed.
pub fn resolve<T: Serialize + DeserializeOwned>(
    base: T,
    file: Option<&Path>,
    seed: Option<u64>,
) -> Result<T> {
    let mut value = serde_json::to_value(&base)?;
    if let Some(path) = file {
        merge(&mut value, read_layer::<T>(path)?);
    }
    if let Some(seed) = seed {
        match value.as_object_mut() {
            Some(obj) if obj.contains_key("seed") => {
                obj.insert("seed".into(), seed.into());
            }
            _ => bail!("--seed is not used by this subcommand"),
        }
    }
    serde_json::from_value(value).context("invalid configuration")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn merge_recurses_and_switches_variants() {
        let mut base = json!({"a": 1, "inner": {"b": 2, "c": 3}, "model": {"model": "ols", "ridge": 0.0}});
        merge(
            &mut base,
            json!({"inner": {"c": 4}, "model": {"model": "kernel_smoother"}}),
        );
        assert_eq!(
            base,
            json!({"a": 1, "inner": {"b": 2, "c": 4}, "model": {"model": "kernel_smoother"}})
        );
    }
}
