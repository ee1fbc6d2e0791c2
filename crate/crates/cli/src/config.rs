//! Settings file and layered resolution (flag, then env, then file, then default).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use contextjoin::{Criterion, IntersectionMode};
use serde::Deserialize;

/// Everything a config file may set. All keys optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub lake: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub embed_url: Option<String>,
    pub embed_timeout_secs: Option<u64>,
    pub local_fallback: Option<bool>,
    pub dims: Option<usize>,
    pub seed: Option<u64>,
    pub sample_cap: Option<usize>,
    pub index_row_sample: Option<usize>,
    pub k: Option<usize>,
    pub budget: Option<usize>,
    pub intersection_mode: Option<IntersectionMode>,
    pub merge_join_sizes: Option<bool>,
    pub weights: BTreeMap<Criterion, f64>,
}

impl FileConfig {
    /// TOML, or JSON for a `.json` extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        Ok(config)
    }
}

/// First present value wins; callers pass flag/env before file values.
pub fn pick<T>(layers: impl IntoIterator<Item = Option<T>>, default: T) -> T {
    layers.into_iter().flatten().next().unwrap_or(default)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_toml_and_json() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("c.toml");
        std::fs::write(
            &toml_path,
            "seed = 7\nk = 5\nintersection_mode = \"minhash\"\n[weights]\nintersection = 0.9\n",
        )
        .unwrap();
        let c = FileConfig::load(&toml_path).unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.intersection_mode, Some(IntersectionMode::Minhash));
        assert_eq!(c.weights[&Criterion::Intersection], 0.9);

        let json_path = dir.path().join("c.json");
        std::fs::write(&json_path, r#"{"budget": 50}"#).unwrap();
        assert_eq!(FileConfig::load(&json_path).unwrap().budget, Some(50));

        std::fs::write(&toml_path, "sed = 1\n").unwrap();
        assert!(FileConfig::load(&toml_path).is_err());
    }

    #[test]
    fn first_layer_wins() {
        assert_eq!(pick([None, Some(2), Some(3)], 9), 2);
        assert_eq!(pick([None, None], 9), 9);
    }
}
