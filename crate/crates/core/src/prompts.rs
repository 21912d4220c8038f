//! Prompt assets, loaded from TOML files at runtime so they can be edited
//! without a rebuild. Templates use `{{slot}}` placeholders.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::Deserialize;

use crate::error::{Error, Result};

/// Environment variable that overrides the asset directory.
pub const PROMPTS_DIR_ENV: &str = "NODESMITH_PROMPTS";

pub const KEYWORD_EXTRACTION: &str = "keyword_extraction";
pub const QUERY_GENERATION: &str = "query_generation";
pub const MULTI_TURN_SEARCH: &str = "multi_turn_search";
pub const STRATEGY_A: &str = "strategy_a_analysis";
pub const STRATEGY_B: &str = "strategy_b_analysis";
pub const STRATEGY_C: &str = "strategy_c_analysis";
pub const STRATEGY_D: &str = "strategy_d_analysis";
pub const NODE_TEMPLATE: &str = "node_template";
pub const NODE_GENERATION: &str = "node_generation";
pub const NODE_REGENERATION: &str = "node_regeneration";
pub const WIRING_EMISSION: &str = "wiring_emission";
pub const NODE_OPTIMIZATION: &str = "node_optimization";
pub const RETRIEVAL_TARGET: &str = "retrieval_target";

pub const ALL_ASSETS: &[&str] = &[
    KEYWORD_EXTRACTION,
    QUERY_GENERATION,
    MULTI_TURN_SEARCH,
    STRATEGY_A,
    STRATEGY_B,
    STRATEGY_C,
    STRATEGY_D,
    NODE_TEMPLATE,
    NODE_GENERATION,
    NODE_REGENERATION,
    WIRING_EMISSION,
    NODE_OPTIMIZATION,
    RETRIEVAL_TARGET,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    /// Reference wording for the method; anchor tests pin it.
    Reference,
    /// Glue prompts written for this crate.
    Local,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptAsset {
    pub name: String,
    pub version: u32,
    pub origin: Origin,
    #[serde(default)]
    pub system: String,
    #[serde(default)]
    pub user: String,
    /// Free text for assets that are not a message pair.
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub hints: BTreeMap<String, String>,
    #[serde(default)]
    pub focus: BTreeMap<String, String>,
}

impl PromptAsset {
    pub fn system(&self) -> &str {
        self.system.trim()
    }

    pub fn render_user(&self, slots: &[(&str, &str)]) -> Result<String> {
        fill(&self.name, self.user.trim(), slots)
    }

    pub fn hint(&self, key: &str) -> Result<&str> {
        lookup(&self.name, "hints", &self.hints, key)
    }

    pub fn focus(&self, key: &str) -> Result<&str> {
        lookup(&self.name, "focus", &self.focus, key)
    }

    /// Every text this asset ships, for anchor checks.
    pub fn full_text(&self) -> String {
        let mut out = vec![self.system.as_str(), self.user.as_str(), self.text.as_str()];
        out.extend(self.hints.values().map(String::as_str));
        out.extend(self.focus.values().map(String::as_str));
        out.join("\n")
    }
}

fn lookup<'a>(asset: &str, table: &str, map: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    map.get(key)
        .map(|s| s.trim())
        .ok_or_else(|| Error::Config(format!("prompt asset `{asset}` has no {table}.{key}")))
}

fn slot_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{([A-Za-z_][A-Za-z0-9_]*)\}\}").expect("static regex"))
}

/// Single-pass `{{slot}}` substitution. Substituted values are not rescanned,
/// so sample text containing braces is safe. Unknown slots are an error.
pub fn fill(asset: &str, template: &str, slots: &[(&str, &str)]) -> Result<String> {
    let mut missing = None;
    let out = slot_re().replace_all(template, |caps: &regex::Captures<'_>| {
        let name = &caps[1];
        match slots.iter().find(|(k, _)| *k == name) {
            Some((_, v)) => v.to_string(),
            None => {
                missing.get_or_insert_with(|| name.to_string());
                String::new()
            }
        }
    });
    match missing {
        Some(name) => Err(Error::Config(format!("prompt asset `{asset}` needs slot `{name}`"))),
        None => Ok(out.into_owned()),
    }
}

pub fn slots(template: &str) -> Vec<String> {
    slot_re().captures_iter(template).map(|c| c[1].to_string()).collect()
}

#[derive(Debug, Clone)]
pub struct PromptLibrary {
    dir: PathBuf,
    assets: BTreeMap<String, PromptAsset>,
}

impl PromptLibrary {
    /// `$NODESMITH_PROMPTS` if set, else the assets shipped with the crate.
    pub fn default_dir() -> PathBuf {
        match std::env::var_os(PROMPTS_DIR_ENV) {
            Some(dir) => PathBuf::from(dir),
            None => Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/prompts"),
        }
    }

    pub fn load_default() -> Result<Self> {
        Self::load(&Self::default_dir())
    }

    /// Loads every `*.toml` in `dir` and checks that all required assets exist.
    pub fn load(dir: &Path) -> Result<Self> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut assets = BTreeMap::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("toml") {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let asset: PromptAsset = toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            assets.insert(asset.name.clone(), asset);
        }
        if let Some(missing) = ALL_ASSETS.iter().find(|n| !assets.contains_key(**n)) {
            return Err(Error::Config(format!("prompt asset `{missing}` not found in {}", dir.display())));
        }
        Ok(Self { dir: dir.to_path_buf(), assets })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get(&self, name: &str) -> &PromptAsset {
        // load() guarantees every name in ALL_ASSETS.
        self.assets.get(name).unwrap_or_else(|| panic!("unknown prompt asset {name}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptAsset> {
        self.assets.values()
    }
}
