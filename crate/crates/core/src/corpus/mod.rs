//! Local document corpus: manifest ingestion, Boolean retrieval and
//! backend-driven query expansion.

mod query;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::backend::ReasoningBackend;
use crate::skills::{invoke_skill, navigator, ExecutionLog, SkillError, ToolBox};
pub use query::{parse_query, tokenize, BooleanQuery, QuerySyntaxError};

pub const MIN_FIGURE_SIDE: u32 = 32;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("duplicate DOI '{doi}' (bundles {first} and {second})")]
    DuplicateDoi { doi: String, first: String, second: String },
    #[error("duplicate bundle id '{0}'")]
    DuplicateId(String),
    #[error("manifest line {line}: {message}")]
    MalformedManifest { line: usize, message: String },
    #[error("missing asset {path} for bundle {bundle}")]
    MissingAsset { bundle: String, path: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("unknown bundle '{0}'")]
    UnknownBundle(String),
    #[error("index is empty")]
    EmptyIndex,
    #[error("query is empty")]
    EmptyQuery,
    #[error("backend failure during query expansion: {0}")]
    BackendFailure(SkillError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureEntry {
    pub id: String,
    pub image_path: String,
    #[serde(default)]
    pub caption: String,
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub doi: String,
    pub title: String,
    #[serde(default)]
    pub authors: Vec<String>,
    pub year: i32,
    pub pages: Vec<String>,
    #[serde(default)]
    pub figures: Vec<FigureEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureAsset {
    pub figure_id: String,
    pub image: RgbImage,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentBundle {
    pub id: String,
    pub doi: String,
    pub title: String,
    pub authors: Vec<String>,
    pub year: i32,
    pub pages: Vec<String>,
    pub figures: Vec<FigureAsset>,
    pub source_path: PathBuf,
}

impl DocumentBundle {
    /// Pages followed by figure captions.
    pub fn full_text(&self) -> String {
        let mut out = self.pages.join("\n\n");
        for f in &self.figures {
            out.push_str(&format!("\n\n[{}] {}", f.figure_id, f.caption));
        }
        out
    }

    pub fn figure(&self, id: &str) -> Option<&FigureAsset> {
        self.figures.iter().find(|f| f.figure_id == id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleSummary {
    pub doi: String,
    pub title: String,
    pub tokens: BTreeSet<String>,
    entry: ManifestEntry,
}

/// Immutable after construction; share freely across readers.
#[derive(Debug, Clone, Default)]
pub struct CorpusIndex {
    pub entries: BTreeMap<String, BundleSummary>,
    base: PathBuf,
}

fn read_text(path: &Path, bundle: &str) -> Result<String, CorpusError> {
    if !path.is_file() {
        return Err(CorpusError::MissingAsset {
            bundle: bundle.into(),
            path: path.display().to_string(),
        });
    }
    std::fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn read_image(path: &Path, bundle: &str) -> Result<RgbImage, CorpusError> {
    if !path.is_file() {
        return Err(CorpusError::MissingAsset {
            bundle: bundle.into(),
            path: path.display().to_string(),
        });
    }
    let img = image::open(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(img.to_rgb8())
}

fn check_entry(e: &ManifestEntry, line: usize) -> Result<(), CorpusError> {
    let bad = |m: &str| {
        Err(CorpusError::MalformedManifest {
            line,
            message: format!("bundle '{}': {m}", e.id),
        })
    };
    if e.id.trim().is_empty() {
        return bad("empty id");
    }
    if e.doi.trim().is_empty() {
        return bad("empty doi");
    }
    if !(1800..=2100).contains(&e.year) {
        return bad(&format!("year {} outside [1800, 2100]", e.year));
    }
    if e.pages.is_empty() {
        return bad("no pages");
    }
    Ok(())
}

impl CorpusIndex {
    pub fn ingest_manifest(manifest: &Path) -> Result<CorpusIndex, CorpusError> {
        let text = std::fs::read_to_string(manifest).map_err(|e| CorpusError::Io {
            path: manifest.display().to_string(),
            message: e.to_string(),
        })?;
        let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_manifest_text(&text, &base)
    }

    pub fn from_manifest_text(text: &str, base: &Path) -> Result<CorpusIndex, CorpusError> {
        let mut index = CorpusIndex {
            entries: BTreeMap::new(),
            base: base.to_path_buf(),
        };
        let mut dois: BTreeMap<String, String> = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| CorpusError::MalformedManifest {
                line: n + 1,
                message: e.to_string(),
            })?;
            check_entry(&entry, n + 1)?;
            if let Some(first) = dois.get(&entry.doi) {
                return Err(CorpusError::DuplicateDoi {
                    doi: entry.doi.clone(),
                    first: first.clone(),
                    second: entry.id.clone(),
                });
            }
            if index.entries.contains_key(&entry.id) {
                return Err(CorpusError::DuplicateId(entry.id.clone()));
            }
            dois.insert(entry.doi.clone(), entry.id.clone());
            // Loading verifies every asset up front.
            let bundle = index.load_entry(&entry)?;
            let mut tokens: BTreeSet<String> = tokenize(&bundle.title).into_iter().collect();
            tokens.extend(tokenize(&bundle.full_text()));
            index.entries.insert(
                entry.id.clone(),
                BundleSummary {
                    doi: entry.doi.clone(),
                    title: entry.title.clone(),
                    tokens,
                    entry,
                },
            );
        }
        Ok(index)
    }

    fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn load_entry(&self, e: &ManifestEntry) -> Result<DocumentBundle, CorpusError> {
        let pages = e
            .pages
            .iter()
            .map(|p| read_text(&self.resolve(p), &e.id))
            .collect::<Result<Vec<_>, _>>()?;
        let mut figures = Vec::new();
        for f in &e.figures {
            let image = read_image(&self.resolve(&f.image_path), &e.id)?;
            if image.width() < MIN_FIGURE_SIDE || image.height() < MIN_FIGURE_SIDE {
                return Err(CorpusError::Io {
                    path: f.image_path.clone(),
                    message: format!("figure smaller than {MIN_FIGURE_SIDE} pixels"),
                });
            }
            figures.push(FigureAsset {
                figure_id: f.id.clone(),
                image,
                caption: f.caption.clone(),
            });
        }
        Ok(DocumentBundle {
            id: e.id.clone(),
            doi: e.doi.clone(),
            title: e.title.clone(),
            authors: e.authors.clone(),
            year: e.year,
            pages,
            figures,
            source_path: self.resolve(e.pages.first().map(String::as_str).unwrap_or("")),
        })
    }

    pub fn load(&self, id: &str) -> Result<DocumentBundle, CorpusError> {
        let s = self.entries.get(id).ok_or_else(|| CorpusError::UnknownBundle(id.into()))?;
        self.load_entry(&s.entry)
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of documents containing every word of `term`.
    pub fn document_frequency(&self, term: &str) -> usize {
        let q = BooleanQuery::Term(term.to_string());
        self.entries.values().filter(|s| q.matches(&s.tokens)).count()
    }
}

/// Ids of bundles satisfying `query`, ascending.
pub fn search_index(index: &CorpusIndex, query: &BooleanQuery) -> Result<Vec<String>, CorpusError> {
    if index.is_empty() {
        return Err(CorpusError::EmptyIndex);
    }
    Ok(index
        .entries
        .iter()
        .filter(|(_, s)| query.matches(&s.tokens))
        .map(|(id, _)| id.clone())
        .collect())
}

/// Query built from the words of `text` joined with AND.
pub fn identity_query(text: &str) -> Result<BooleanQuery, CorpusError> {
    let terms: Vec<BooleanQuery> = tokenize(text).into_iter().map(BooleanQuery::Term).collect();
    if terms.is_empty() {
        return Err(CorpusError::EmptyQuery);
    }
    Ok(BooleanQuery::and(terms))
}

/// Expand a natural-language material query with the navigator skill. With
/// `lenient`, a backend failure falls back to the identity query.
pub fn expand_query(
    nl_query: &str,
    backend: &dyn ReasoningBackend,
    index: Option<&CorpusIndex>,
    log: &ExecutionLog,
    lenient: bool,
) -> Result<BooleanQuery, CorpusError> {
    if nl_query.trim().is_empty() {
        return Err(CorpusError::EmptyQuery);
    }
    let tools = ToolBox::new().with("corpus_lookup", |args| {
        let term = args.get("term").and_then(|t| t.as_str()).ok_or("missing 'term'")?;
        Ok(json!({ "term": term, "documents": index.map_or(0, |i| i.document_frequency(term)) }))
    });
    match invoke_skill(&navigator(), &json!({ "query": nl_query }), backend, &tools, log) {
        Ok(inv) => {
            let text = inv.value["query"].as_str().unwrap_or_default();
            parse_query(text).map_err(|e| {
                CorpusError::BackendFailure(SkillError::SchemaViolation {
                    attempts: inv.attempts,
                    violations: vec![crate::skills::Violation {
                        path: "query".into(),
                        message: e.to_string(),
                    }],
                })
            })
        }
        Err(_) if lenient => identity_query(nl_query),
        Err(e) => Err(CorpusError::BackendFailure(e)),
    }
}
