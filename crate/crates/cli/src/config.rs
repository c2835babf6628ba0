//! Layered configuration: defaults, then a TOML file, then `--set` pairs,
//! then explicit flags. Unknown keys are rejected at every layer.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use toml::{Table, Value};

use heartid::config::PipelineConfig;

/// Flag values keyed by their dotted config path.
#[derive(Debug, Default)]
pub struct Overrides {
    pairs: Vec<(String, Value)>,
}

impl Overrides {
    pub fn set<T: Into<Value>>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.pairs.push((key.to_string(), v.into()));
        }
    }
}

pub fn to_toml(cfg: &PipelineConfig) -> Result<String> {
    toml::to_string(cfg).context("serializing configuration")
}

pub fn load_config(
    base: PipelineConfig,
    file: Option<&Path>,
    sets: &[String],
    flags: &Overrides,
) -> Result<PipelineConfig> {
    let mut root = Table::try_from(&base).context("serializing defaults")?;
    if let Some(path) = file {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let overlay: Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        merge(&mut root, overlay, "")?;
    }
    for pair in sets {
        let (key, raw) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {pair:?}"))?;
        assign(&mut root, key.trim(), parse_value(raw.trim()))?;
    }
    for (key, value) in &flags.pairs {
        assign(&mut root, key, value.clone())?;
    }
    Value::Table(root).try_into().context("invalid configuration")
}

/// TOML literal if it parses as one, bare string otherwise.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn merge(dst: &mut Table, src: Table, prefix: &str) -> Result<()> {
    for (k, v) in src {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match (dst.get_mut(&k), v) {
            (Some(Value::Table(d)), Value::Table(s)) => merge(d, s, &path)?,
            (Some(Value::Table(_)), _) => bail!("{path} is a section, not a value"),
            (_, v) => {
                dst.insert(k, v);
            }
        }
    }
    Ok(())
}

fn assign(root: &mut Table, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("malformed key {key:?}");
    }
    let (last, sections) = parts.split_last().expect("split yields at least one part");
    let mut table = root;
    for (i, part) in sections.iter().enumerate() {
        table = match table
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
        {
            Value::Table(t) => t,
            _ => bail!("{} is a value, not a section", parts[..=i].join(".")),
        };
    }
    if matches!(table.get(*last), Some(Value::Table(_))) {
        bail!("{key} is a section, not a value");
    }
    table.insert(last.to_string(), value);
    Ok(())
}
