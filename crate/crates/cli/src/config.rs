//! TOML experiment files.
//!
//! A config is an [`ExperimentSpec`] in TOML form plus two optional tables:
//! `[datasets.<name>]` sources (merged over the built-in synthetic source)
//! and `[grid]` with the side codes of a grid run. `seed = n` is shorthand
//! for `Seeds::from_base(n)`. When `notation` is set and `shadow`/`target`
//! are absent, the sides are taken from the code.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use recmia_core::experiment::{parse_notation, Catalog, DatasetId, DatasetSource, ExperimentSpec, Seeds, SideSpec};
use serde::Deserialize;
use toml::{Table, Value};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Two-letter side codes such as `SI`.
    #[serde(default)]
    pub sides: Vec<String>,
}

#[derive(Debug)]
pub struct ExperimentFile {
    pub spec: ExperimentSpec,
    pub catalog: Catalog,
    pub grid: GridSection,
}

pub fn load(path: &Path) -> Result<ExperimentFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text, path.parent()).with_context(|| format!("in {}", path.display()))
}

/// Relative dataset paths are resolved against `base`.
pub fn parse(text: &str, base: Option<&Path>) -> Result<ExperimentFile> {
    let mut table: Table = text.parse().context("not valid TOML")?;

    let mut catalog = Catalog::default();
    if let Some(datasets) = table.remove("datasets") {
        let sources: BTreeMap<String, DatasetSource> = datasets.try_into().context("[datasets]")?;
        for (name, mut source) in sources {
            let id: DatasetId = name.parse()?;
            if let (DatasetSource::File { path, .. }, Some(base)) = (&mut source, base) {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
            catalog = catalog.with(id, source);
        }
    }

    let grid = match table.remove("grid") {
        Some(v) => v.try_into().context("[grid]")?,
        None => GridSection::default(),
    };

    let base_seed = match table.remove("seed") {
        Some(Value::Integer(n)) if n >= 0 => Some(n as u64),
        Some(other) => bail!("seed must be a nonnegative integer, got {other}"),
        None => None,
    };
    if base_seed.is_some() && table.contains_key("seeds") {
        bail!("give either `seed` or a [seeds] table, not both");
    }

    // the spec itself tolerates missing fields, so typos would pass silently
    let known = serde_json::to_value(ExperimentSpec::default())?;
    if let Some(key) = table.keys().find(|k| known.get(k.as_str()).is_none()) {
        bail!("unknown key `{key}`");
    }

    if let Some(Value::String(code)) = table.get("notation") {
        let (shadow, target) = parse_notation(code)?;
        for (key, side) in [("shadow", shadow), ("target", target)] {
            if !table.contains_key(key) {
                table.insert(key.to_owned(), Value::try_from(side)?);
            }
        }
    }

    let mut spec: ExperimentSpec = Value::Table(table).try_into().context("experiment fields")?;
    if let Some(n) = base_seed {
        spec.seeds = Seeds::from_base(n);
    }
    Ok(ExperimentFile { spec, catalog, grid })
}

/// Parse a two-letter side code, e.g. `MI`.
pub fn parse_side(code: &str) -> Result<SideSpec> {
    if code.chars().count() != 2 {
        bail!("side code `{code}` must have two letters");
    }
    // reuse the four-letter parser by mirroring the side
    let (side, _) = parse_notation(&format!("{code}{code}"))?;
    Ok(side)
}
