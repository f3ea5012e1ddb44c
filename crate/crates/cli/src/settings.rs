//! Layering of defaults, the config file and command-line overrides.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use retifuse::classifiers::ClassifierKind;
use retifuse::config::RunConfig;
use toml::{Table, Value};

/// Command-line values that land in [`RunConfig`]. Later layers win:
/// defaults, then `--config`, then `--set`, then the dedicated flags.
#[derive(Debug, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub train_frac: Option<f64>,
    pub out: Option<PathBuf>,
    pub providers: Vec<String>,
    pub classifiers: Option<String>,
    pub deep_dim: Option<usize>,
    pub feature_set: Option<String>,
    pub sets: Vec<String>,
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut table = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                text.parse::<Table>().with_context(|| format!("parsing config {}", path.display()))?
            }
            None => Table::new(),
        };
        for s in &self.sets {
            let (key, raw) = s.split_once('=').with_context(|| format!("--set expects key=value, got `{s}`"))?;
            insert(&mut table, key.trim(), parse_value(raw.trim()))?;
        }
        if let Some(v) = self.seed {
            table.insert("seed".into(), Value::Integer(i64::try_from(v).context("seed exceeds i64")?));
        }
        if let Some(v) = self.train_frac {
            table.insert("train_frac".into(), Value::Float(v));
        }
        if let Some(v) = &self.out {
            table.insert("output_dir".into(), Value::String(v.to_string_lossy().into_owned()));
        }
        if !self.providers.is_empty() {
            let list = self.providers.iter().flat_map(|p| p.split(',')).map(str::trim).filter(|p| !p.is_empty());
            table.insert("providers".into(), Value::Array(list.map(|p| Value::String(p.into())).collect()));
        }
        if let Some(list) = &self.classifiers {
            let kinds = parse_classifiers(list)?;
            table.insert("classifiers".into(), Value::Array(kinds.iter().map(|k| Value::String(k.name().into())).collect()));
        }
        if let Some(v) = self.deep_dim {
            table.insert("deep_dim".into(), Value::Integer(v as i64));
        }
        if let Some(v) = &self.feature_set {
            table.insert("feature_set".into(), Value::String(v.replace('-', "_")));
        }
        let cfg = RunConfig::from_toml(&table.to_string())?;
        Ok(cfg.finalize()?)
    }
}

/// Accepts canonical names and short forms; duplicates are dropped.
pub fn parse_classifiers(list: &str) -> Result<Vec<ClassifierKind>> {
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let k: ClassifierKind = name.parse()?;
        if !out.contains(&k) {
            out.push(k);
        }
    }
    if out.is_empty() {
        bail!("--classifiers needs at least one name");
    }
    Ok(out)
}

/// TOML literal when it parses as one, bare string otherwise.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn insert(table: &mut Table, dotted: &str, value: Value) -> Result<()> {
    let mut parts: Vec<&str> = dotted.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).with_context(|| format!("empty key in --set `{dotted}`"))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => bail!("`{p}` in `{dotted}` is not a section"),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
