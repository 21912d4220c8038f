use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::EngineKind;
use crate::canonical::{read_json, sha256_hex, write_json};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub title: String,
    pub url: String,
    pub content: String,
}

/// One search interface for every engine kind. Implementations must be
/// callable from several threads.
pub trait SearchBackend: Send + Sync {
    fn name(&self) -> &str;

    fn search(&self, query: &str, kind: EngineKind) -> Result<Vec<SearchHit>>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub query: String,
    pub kind: EngineKind,
    pub results: Vec<SearchHit>,
}

/// `<kind>/<first 16 hex of sha256(query)>.json`.
pub fn fixture_file_name(query: &str, kind: EngineKind) -> PathBuf {
    let hash = sha256_hex(query.trim());
    Path::new(kind.as_str()).join(format!("{}.json", &hash[..16]))
}

/// Recorded query results. Exact queries hit their own file; anything else
/// falls back to the recorded query with the highest word-set Jaccard
/// similarity for the same engine kind (ties go to the lexicographically
/// smallest query). No overlap at all yields no results.
#[derive(Debug, Clone)]
pub struct FixtureBackend {
    dir: PathBuf,
    records: BTreeMap<(EngineKind, String), Vec<SearchHit>>,
}

impl FixtureBackend {
    /// A backend with no records; every search returns nothing.
    pub fn empty() -> Self {
        Self { dir: PathBuf::new(), records: BTreeMap::new() }
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let mut records = BTreeMap::new();
        for kind in EngineKind::ALL {
            let sub = dir.join(kind.as_str());
            if !sub.is_dir() {
                continue;
            }
            let mut paths: Vec<PathBuf> = std::fs::read_dir(&sub)
                .map_err(|e| Error::io(&sub, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().and_then(|x| x.to_str()) == Some("json"))
                .collect();
            paths.sort();
            for path in paths {
                let rec: FixtureRecord = read_json(&path)?;
                if rec.kind != kind {
                    return Err(Error::SearchBackend(format!(
                        "{} records kind {} but sits under {}",
                        path.display(),
                        rec.kind,
                        kind
                    )));
                }
                records.insert((kind, rec.query.trim().to_string()), rec.results);
            }
        }
        Ok(Self { dir: dir.to_path_buf(), records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Writes one record in the fixture layout.
    pub fn record(dir: &Path, query: &str, kind: EngineKind, results: &[SearchHit]) -> Result<PathBuf> {
        let path = dir.join(fixture_file_name(query, kind));
        let rec = FixtureRecord { query: query.trim().to_string(), kind, results: results.to_vec() };
        write_json(&path, &rec)?;
        Ok(path)
    }
}

fn words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

impl SearchBackend for FixtureBackend {
    fn name(&self) -> &str {
        "fixture"
    }

    fn search(&self, query: &str, kind: EngineKind) -> Result<Vec<SearchHit>> {
        let query = query.trim();
        if let Some(hits) = self.records.get(&(kind, query.to_string())) {
            return Ok(hits.clone());
        }
        let want = words(query);
        let mut best: Option<(f64, &str, &Vec<SearchHit>)> = None;
        for ((k, recorded), hits) in &self.records {
            if *k != kind {
                continue;
            }
            let score = jaccard(&want, &words(recorded));
            // BTreeMap order makes the first of equal scores the smallest query.
            if score > 0.0 && best.map_or(true, |(s, _, _)| score > s) {
                best = Some((score, recorded, hits));
            }
        }
        match best {
            Some((score, recorded, hits)) => {
                log::debug!("fixture {}: {query:?} -> nearest {recorded:?} ({score:.3})", self.dir.display());
                Ok(hits.clone())
            }
            None => {
                log::debug!("fixture {}: no record near {query:?} for {kind}", self.dir.display());
                Ok(Vec::new())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpSearchConfig {
    /// SearXNG-compatible JSON endpoint for general web search.
    #[serde(default)]
    pub web_endpoint: Option<String>,
    #[serde(default = "default_github")]
    pub github_endpoint: String,
    #[serde(default = "default_scholar")]
    pub scholar_endpoint: String,
    /// Environment variable with a GitHub token, if any.
    #[serde(default = "default_github_token_env")]
    pub github_token_env: String,
    #[serde(default = "default_max_results")]
    pub max_results: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_github() -> String {
    "https://api.github.com/search/repositories".into()
}

fn default_scholar() -> String {
    "https://api.semanticscholar.org/graph/v1/paper/search".into()
}

fn default_github_token_env() -> String {
    "GITHUB_TOKEN".into()
}

fn default_max_results() -> usize {
    5
}

fn default_timeout() -> u64 {
    30
}

impl Default for HttpSearchConfig {
    fn default() -> Self {
        Self {
            web_endpoint: None,
            github_endpoint: default_github(),
            scholar_endpoint: default_scholar(),
            github_token_env: default_github_token_env(),
            max_results: default_max_results(),
            timeout_secs: default_timeout(),
        }
    }
}

/// Live adapters: SearXNG-style web search, GitHub repository search, and
/// Semantic Scholar paper search.
pub struct HttpBackend {
    config: HttpSearchConfig,
    client: reqwest::blocking::Client,
    github_token: Option<String>,
}

impl HttpBackend {
    pub fn new(config: HttpSearchConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .user_agent(concat!("nodesmith/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        let github_token = std::env::var(&config.github_token_env).ok().filter(|t| !t.is_empty());
        Ok(Self { config, client, github_token })
    }

    fn get_json(&self, url: &str, params: &[(&str, String)], auth: Option<&str>) -> Result<Value> {
        let mut req = self.client.get(url).query(params);
        if let Some(token) = auth {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| Error::SearchBackend(format!("GET {url}: {e}")))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Error::SearchBackend(format!("GET {url}: HTTP {status}")));
        }
        resp.json().map_err(|e| Error::SearchBackend(format!("GET {url}: {e}")))
    }
}

impl SearchBackend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn search(&self, query: &str, kind: EngineKind) -> Result<Vec<SearchHit>> {
        let n = self.config.max_results;
        let mut hits = match kind {
            EngineKind::GeneralWeb => {
                let endpoint = self
                    .config
                    .web_endpoint
                    .as_deref()
                    .ok_or_else(|| Error::SearchBackend("no web_endpoint configured".into()))?;
                parse_searx(&self.get_json(endpoint, &[("q", query.into()), ("format", "json".into())], None)?)
            }
            EngineKind::CodeRepository => parse_github(&self.get_json(
                &self.config.github_endpoint,
                &[("q", query.into()), ("per_page", n.to_string())],
                self.github_token.as_deref(),
            )?),
            EngineKind::Scholarly => parse_semantic_scholar(&self.get_json(
                &self.config.scholar_endpoint,
                &[("query", query.into()), ("limit", n.to_string()), ("fields", "title,url,abstract".into())],
                None,
            )?),
        };
        hits.truncate(n);
        Ok(hits)
    }
}

fn str_at(v: &Value, key: &str) -> String {
    v.get(key).and_then(Value::as_str).unwrap_or_default().to_string()
}

pub fn parse_searx(body: &Value) -> Vec<SearchHit> {
    body.get("results")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
        .map(|r| SearchHit { title: str_at(r, "title"), url: str_at(r, "url"), content: str_at(r, "content") })
        .collect()
}

pub fn parse_github(body: &Value) -> Vec<SearchHit> {
    body.get("items")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
        .map(|r| {
            let topics = r
                .get("topics")
                .and_then(Value::as_array)
                .map(|t| t.iter().filter_map(Value::as_str).collect::<Vec<_>>().join(", "))
                .unwrap_or_default();
            let mut content = str_at(r, "description");
            if !topics.is_empty() {
                content = format!("{content}\nTopics: {topics}");
            }
            SearchHit { title: str_at(r, "full_name"), url: str_at(r, "html_url"), content }
        })
        .collect()
}

pub fn parse_semantic_scholar(body: &Value) -> Vec<SearchHit> {
    body.get("data")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
        .map(|r| SearchHit { title: str_at(r, "title"), url: str_at(r, "url"), content: str_at(r, "abstract") })
        .collect()
}
