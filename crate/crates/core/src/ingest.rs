//! Knowledge-source ingestion: flat-file readers, source locators and the
//! build manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::Value;
use thiserror::Error;

use crate::owl::is_absolute_iri;
use crate::patterns::{lookup_pattern, ParentRule, TopLevel};
use crate::registry::line_of_offset;

pub const DEFAULT_FETCH_TIMEOUT: Duration = Duration::from_secs(30);
pub const TIMEOUT_ENV: &str = "ONTOFORGE_TIMEOUT_SECS";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IngestError {
    #[error("{origin}: invalid UTF-8 at byte offset {offset} (line {line})")]
    Utf8 { origin: String, offset: usize, line: usize },
    #[error("{origin}:{line}: {message}")]
    Syntax { origin: String, line: usize, message: String },
    #[error("{origin}:{line}: duplicate name {name:?} (first seen on line {first})")]
    DuplicateName { origin: String, name: String, first: usize, line: usize },
    #[error("{locator}: {message}")]
    Source { locator: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManifestError {
    #[error("{origin}:{line}:{column}: {message}")]
    Syntax { origin: String, line: usize, column: usize, message: String },
    #[error("{origin}: {path}: {message}")]
    Invalid { origin: String, path: String, message: String },
    #[error("{origin}: missing required key {key:?}")]
    MissingKey { origin: String, key: String },
    #[error("{origin}: {path}: unknown pattern: {name} (registered: {})", crate::patterns::registered_names().join(", "))]
    UnknownPattern { origin: String, path: String, name: String },
    #[error("{origin}: {path}: unknown parent class: {name}")]
    UnknownParent { origin: String, path: String, name: String },
}

/// A value together with where it was read from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sourced<T> {
    pub origin: String,
    pub line: usize,
    pub value: T,
}

impl<T> Sourced<T> {
    pub fn site(&self) -> String {
        format!("{}:{}", self.origin, self.line)
    }
}

pub fn values<T: Clone>(items: &[Sourced<T>]) -> Vec<T> {
    items.iter().map(|s| s.value.clone()).collect()
}

fn decode<'a>(bytes: &'a [u8], origin: &str) -> Result<&'a str, IngestError> {
    let text = std::str::from_utf8(bytes).map_err(|e| IngestError::Utf8 {
        origin: origin.to_string(),
        offset: e.valid_up_to(),
        line: line_of_offset(bytes, e.valid_up_to()),
    })?;
    Ok(text.strip_prefix('\u{feff}').unwrap_or(text))
}

/// Data lines with their 1-based line numbers; CR stripped, blank and `#`
/// lines dropped.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        let t = raw.trim();
        (!t.is_empty() && !t.starts_with('#')).then_some((i + 1, raw))
    })
}

/// One name per line. Duplicates within a file are an error.
pub fn read_name_list(bytes: &[u8], origin: &str) -> Result<Vec<Sourced<String>>, IngestError> {
    let text = decode(bytes, origin)?;
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for (line, raw) in data_lines(text) {
        let name = raw.trim();
        if name.chars().any(char::is_control) {
            return Err(IngestError::Syntax { origin: origin.into(), line, message: "name contains a control character".into() });
        }
        if let Some(&first) = seen.get(name) {
            return Err(IngestError::DuplicateName { origin: origin.into(), name: name.into(), first, line });
        }
        seen.insert(name, line);
        out.push(Sourced { origin: origin.to_string(), line, value: name.to_string() });
    }
    Ok(out)
}

/// The inverse of [`read_name_list`] for duplicate-free lists.
pub fn render_name_list<S: AsRef<str>>(names: &[S]) -> String {
    names.iter().map(|n| format!("{}\n", n.as_ref())).collect()
}

fn tsv_fields<'a>(raw: &'a str, expected: usize, origin: &str, line: usize) -> Result<Vec<&'a str>, IngestError> {
    let cols: Vec<&str> = raw.split('\t').map(str::trim).collect();
    if cols.len() != expected {
        return Err(IngestError::Syntax {
            origin: origin.to_string(),
            line,
            message: format!("expected {expected} tab-separated columns, found {}", cols.len()),
        });
    }
    Ok(cols)
}

/// `name<TAB>omim<TAB>long name`; an empty cell means the field is absent.
pub fn read_disease_table(bytes: &[u8], origin: &str) -> Result<Vec<Sourced<crate::patterns::DiseaseRecord>>, IngestError> {
    use crate::patterns::DiseaseRecord;
    let text = decode(bytes, origin)?;
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for (line, raw) in data_lines(text) {
        let cols = tsv_fields(raw, 3, origin, line)?;
        if cols[0].is_empty() {
            return Err(IngestError::Syntax { origin: origin.into(), line, message: "empty name column".into() });
        }
        if let Some(&first) = seen.get(cols[0]) {
            return Err(IngestError::DuplicateName { origin: origin.into(), name: cols[0].into(), first, line });
        }
        seen.insert(cols[0].to_string(), line);
        let opt = |s: &str| (!s.is_empty()).then(|| s.to_string());
        out.push(Sourced {
            origin: origin.to_string(),
            line,
            value: DiseaseRecord { name: cols[0].to_string(), omim: opt(cols[1]), long_name: opt(cols[2]) },
        });
    }
    Ok(out)
}

/// `paper_id<TAB>term`, one record per line.
pub fn read_paper_terms(bytes: &[u8], origin: &str) -> Result<Vec<Sourced<crate::patterns::TermRecord>>, IngestError> {
    use crate::patterns::TermRecord;
    let text = decode(bytes, origin)?;
    let mut seen: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut out = Vec::new();
    for (line, raw) in data_lines(text) {
        let cols = tsv_fields(raw, 2, origin, line)?;
        if let Some(which) = cols.iter().position(|c| c.is_empty()) {
            let field = ["paper id", "term"][which];
            return Err(IngestError::Syntax { origin: origin.into(), line, message: format!("empty {field} column") });
        }
        let key = (cols[0].to_string(), cols[1].to_string());
        if let Some(&first) = seen.get(&key) {
            return Err(IngestError::DuplicateName {
                origin: origin.into(),
                name: format!("{}\t{}", key.0, key.1),
                first,
                line,
            });
        }
        seen.insert(key.clone(), line);
        out.push(Sourced { origin: origin.to_string(), line, value: TermRecord { paper_id: key.0, term: key.1 } });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Fixed local copy.
    #[default]
    Release,
    /// Current version fetched over HTTP on every build.
    Live,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "release" => Ok(Mode::Release),
            "live" => Ok(Mode::Live),
            other => Err(format!("unknown mode {other:?} (expected release or live)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    /// A file, or a directory whose regular files are read in name order.
    File(PathBuf),
    Http(String),
    Inline(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceLocator {
    pub target: Target,
    pub mode: Mode,
}

impl SourceLocator {
    pub fn file(path: impl Into<PathBuf>) -> Self {
        SourceLocator { target: Target::File(path.into()), mode: Mode::Release }
    }

    pub fn live(url: impl Into<String>) -> Self {
        SourceLocator { target: Target::Http(url.into()), mode: Mode::Live }
    }

    pub fn inline<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        SourceLocator { target: Target::Inline(names.into_iter().map(Into::into).collect()), mode: Mode::Release }
    }

    pub fn scheme(&self) -> &'static str {
        match &self.target {
            Target::File(_) => "file",
            Target::Http(url) if url.starts_with("https://") => "https",
            Target::Http(_) => "http",
            Target::Inline(_) => "inline",
        }
    }
}

impl fmt::Display for SourceLocator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.target {
            Target::File(p) => write!(f, "{}", p.display()),
            Target::Http(url) => f.write_str(url),
            Target::Inline(names) => write!(f, "inline ({} names)", names.len()),
        }
    }
}

/// One byte stream produced by a locator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub origin: String,
    pub bytes: Vec<u8>,
}

pub trait Fetch: Sync {
    fn get(&self, url: &str, timeout: Duration) -> Result<Vec<u8>, String>;
}

/// Plain blocking HTTP GET, no caching.
#[derive(Debug, Default, Clone, Copy)]
pub struct HttpFetcher;

impl Fetch for HttpFetcher {
    fn get(&self, url: &str, timeout: Duration) -> Result<Vec<u8>, String> {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        match agent.get(url).call() {
            Ok(resp) => {
                let mut body = Vec::new();
                resp.into_reader().read_to_end(&mut body).map_err(|e| e.to_string())?;
                Ok(body)
            }
            Err(ureq::Error::Status(code, resp)) => Err(format!("HTTP status {code} {}", resp.status_text())),
            Err(e) => Err(e.to_string()),
        }
    }
}

/// Live-fetch timeout, overridable with `ONTOFORGE_TIMEOUT_SECS`.
pub fn fetch_timeout_from_env() -> Result<Duration, String> {
    match std::env::var(TIMEOUT_ENV) {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .ok()
            .filter(|&s| s > 0)
            .map(Duration::from_secs)
            .ok_or_else(|| format!("{TIMEOUT_ENV} must be a positive integer, got {v:?}")),
        Err(_) => Ok(DEFAULT_FETCH_TIMEOUT),
    }
}

/// Reads the bytes behind a locator. Release-mode locators never touch the
/// network.
pub fn resolve_source(locator: &SourceLocator, fetcher: &dyn Fetch, timeout: Duration) -> Result<Vec<Document>, IngestError> {
    let fail = |message: String| IngestError::Source { locator: locator.to_string(), message };
    match (&locator.target, locator.mode) {
        (Target::Inline(names), _) => {
            Ok(vec![Document { origin: "inline".to_string(), bytes: render_name_list(names).into_bytes() }])
        }
        (Target::Http(_), Mode::Release) => Err(fail("http sources require mode \"live\"".to_string())),
        (Target::Http(url), Mode::Live) => {
            let bytes = fetcher.get(url, timeout).map_err(fail)?;
            Ok(vec![Document { origin: url.clone(), bytes }])
        }
        (Target::File(_), Mode::Live) => Err(fail("mode \"live\" requires an http or https locator".to_string())),
        (Target::File(path), Mode::Release) => {
            let meta = fs::metadata(path).map_err(|e| fail(e.to_string()))?;
            if !meta.is_dir() {
                let bytes = fs::read(path).map_err(|e| fail(e.to_string()))?;
                return Ok(vec![Document { origin: path.display().to_string(), bytes }]);
            }
            let mut files = Vec::new();
            for entry in fs::read_dir(path).map_err(|e| fail(e.to_string()))? {
                let entry = entry.map_err(|e| fail(e.to_string()))?;
                let hidden = entry.file_name().to_string_lossy().starts_with('.');
                if !hidden && entry.file_type().map_err(|e| fail(e.to_string()))?.is_file() {
                    files.push(entry.path());
                }
            }
            files.sort();
            files
                .into_iter()
                .map(|p| {
                    let bytes = fs::read(&p).map_err(|e| fail(format!("{}: {e}", p.display())))?;
                    Ok(Document { origin: p.display().to_string(), bytes })
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    NameList,
    DiseaseTable,
    PaperTerms,
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::NameList => "name-list",
            Format::DiseaseTable => "disease-table",
            Format::PaperTerms => "paper-terms",
        }
    }

    fn parse(s: &str) -> Option<Format> {
        [Format::NameList, Format::DiseaseTable, Format::PaperTerms].into_iter().find(|f| f.name() == s)
    }

    /// The pattern a record of this format can feed.
    fn accepts(self, pattern: &str) -> bool {
        match self {
            Format::NameList => matches!(pattern, "gene" | "named-subclass" | "paper"),
            Format::DiseaseTable => pattern == "disease",
            Format::PaperTerms => pattern == "term",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSpec {
    pub locator: SourceLocator,
    pub format: Format,
    pub pattern: String,
    pub parent: TopLevel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildManifest {
    pub ontology_iri: String,
    pub base_prefix: String,
    pub sources: Vec<SourceSpec>,
    pub deprecations: Option<SourceLocator>,
    pub id_registry: Option<PathBuf>,
}

/// Parses and validates a manifest. Relative file paths are resolved
/// against `base_dir`.
pub fn load_manifest(bytes: &[u8], origin: &str, base_dir: &Path) -> Result<BuildManifest, ManifestError> {
    let syntax = |line: usize, column: usize, message: String| ManifestError::Syntax {
        origin: origin.to_string(),
        line,
        column,
        message,
    };
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = line_of_offset(bytes, e.valid_up_to());
        syntax(line, 0, format!("invalid UTF-8 at byte offset {}", e.valid_up_to()))
    })?;
    let root: Value = serde_json::from_str(text).map_err(|e| syntax(e.line(), e.column(), e.to_string()))?;
    ManifestParser { origin, base_dir }.manifest(&root)
}

struct ManifestParser<'a> {
    origin: &'a str,
    base_dir: &'a Path,
}

impl ManifestParser<'_> {
    fn invalid(&self, path: &str, message: impl Into<String>) -> ManifestError {
        ManifestError::Invalid { origin: self.origin.to_string(), path: path.to_string(), message: message.into() }
    }

    fn object<'v>(&self, v: &'v Value, path: &str, allowed: &[&str]) -> Result<&'v serde_json::Map<String, Value>, ManifestError> {
        let obj = v.as_object().ok_or_else(|| self.invalid(path, "expected an object"))?;
        if let Some(k) = obj.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(self.invalid(path, format!("unknown key {k:?}")));
        }
        Ok(obj)
    }

    fn string<'v>(&self, obj: &'v serde_json::Map<String, Value>, key: &str, path: &str) -> Result<Option<&'v str>, ManifestError> {
        match obj.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(self.invalid(&format!("{path}.{key}"), "expected a string")),
        }
    }

    fn required<'v>(&self, obj: &'v serde_json::Map<String, Value>, key: &str, path: &str) -> Result<&'v str, ManifestError> {
        let full = if path.is_empty() { key.to_string() } else { format!("{path}.{key}") };
        self.string(obj, key, path)?.ok_or(ManifestError::MissingKey { origin: self.origin.to_string(), key: full })
    }

    fn manifest(&self, root: &Value) -> Result<BuildManifest, ManifestError> {
        let obj = self.object(root, "$", &["ontology_iri", "base_prefix", "sources", "deprecations", "id_registry"])?;
        let ontology_iri = self.required(obj, "ontology_iri", "")?;
        if !is_absolute_iri(ontology_iri) {
            return Err(self.invalid("ontology_iri", format!("not an absolute IRI: {ontology_iri:?}")));
        }
        let base_prefix = self.required(obj, "base_prefix", "")?;
        if !is_absolute_iri(base_prefix) {
            return Err(self.invalid("base_prefix", format!("not an absolute IRI: {base_prefix:?}")));
        }
        let sources = match obj.get("sources") {
            None => return Err(ManifestError::MissingKey { origin: self.origin.to_string(), key: "sources".into() }),
            Some(Value::Array(items)) => {
                items.iter().enumerate().map(|(i, v)| self.source(v, &format!("sources[{i}]"))).collect::<Result<Vec<_>, _>>()?
            }
            Some(_) => return Err(self.invalid("sources", "expected an array")),
        };
        let deprecations = match obj.get("deprecations") {
            None => None,
            Some(Value::String(s)) => Some(self.locator(s, None, None, "deprecations")?),
            Some(v) => {
                let o = self.object(v, "deprecations", &["locator", "mode"])?;
                let loc = self.required(o, "locator", "deprecations")?;
                Some(self.locator(loc, self.string(o, "mode", "deprecations")?, None, "deprecations")?)
            }
        };
        let id_registry = match self.string(obj, "id_registry", "")? {
            Some(p) if p.trim().is_empty() => return Err(self.invalid("id_registry", "empty path")),
            Some(p) => Some(self.base_dir.join(p)),
            None => None,
        };
        Ok(BuildManifest {
            ontology_iri: ontology_iri.to_string(),
            base_prefix: base_prefix.to_string(),
            sources,
            deprecations,
            id_registry,
        })
    }

    fn locator(&self, raw: &str, mode: Option<&str>, inline: Option<&Value>, path: &str) -> Result<SourceLocator, ManifestError> {
        let mode = match mode {
            Some(m) => m.parse::<Mode>().map_err(|e| self.invalid(&format!("{path}.mode"), e))?,
            None => Mode::Release,
        };
        let target = if raw == "inline" || raw.starts_with("inline:") {
            let Some(inline) = inline else {
                return Err(self.invalid(path, "inline locator without an \"inline\" array"));
            };
            let items = inline.as_array().ok_or_else(|| self.invalid(&format!("{path}.inline"), "expected an array"))?;
            let names = items
                .iter()
                .enumerate()
                .map(|(i, v)| v.as_str().map(String::from).ok_or_else(|| self.invalid(&format!("{path}.inline[{i}]"), "expected a string")))
                .collect::<Result<Vec<_>, _>>()?;
            Target::Inline(names)
        } else {
            if inline.is_some() {
                return Err(self.invalid(path, "\"inline\" is only allowed with locator \"inline\""));
            }
            if raw.starts_with("http://") || raw.starts_with("https://") {
                if !is_absolute_iri(raw) {
                    return Err(self.invalid(&format!("{path}.locator"), format!("malformed URL {raw:?}")));
                }
                Target::Http(raw.to_string())
            } else {
                let p = raw.strip_prefix("file://").or_else(|| raw.strip_prefix("file:")).unwrap_or(raw);
                if p.trim().is_empty() {
                    return Err(self.invalid(&format!("{path}.locator"), "empty path"));
                }
                Target::File(self.base_dir.join(p))
            }
        };
        match (&target, mode) {
            (Target::Http(_), Mode::Release) => Err(self.invalid(path, "http sources require \"mode\": \"live\"")),
            (Target::File(_) | Target::Inline(_), Mode::Live) => {
                Err(self.invalid(path, "\"mode\": \"live\" requires an http or https locator"))
            }
            _ => Ok(SourceLocator { target, mode }),
        }
    }

    fn source(&self, v: &Value, path: &str) -> Result<SourceSpec, ManifestError> {
        let obj = self.object(v, path, &["locator", "mode", "format", "pattern", "parent", "inline"])?;
        let raw = self.required(obj, "locator", path)?;
        let locator = self.locator(raw, self.string(obj, "mode", path)?, obj.get("inline"), path)?;
        let format_name = self.required(obj, "format", path)?;
        let format = Format::parse(format_name).ok_or_else(|| self.invalid(&format!("{path}.format"), format!("unknown format {format_name:?}")))?;
        let pattern = self.required(obj, "pattern", path)?;
        let spec = lookup_pattern(pattern).ok_or_else(|| ManifestError::UnknownPattern {
            origin: self.origin.to_string(),
            path: format!("{path}.pattern"),
            name: pattern.to_string(),
        })?;
        let parent_name = self.required(obj, "parent", path)?;
        let parent = TopLevel::from_label(parent_name).ok_or_else(|| ManifestError::UnknownParent {
            origin: self.origin.to_string(),
            path: format!("{path}.parent"),
            name: parent_name.to_string(),
        })?;
        if let ParentRule::Fixed(fixed) = spec.parent {
            if fixed != parent {
                return Err(self.invalid(path, format!("pattern {pattern} attaches to {fixed}, not {parent}")));
            }
        }
        if !format.accepts(pattern) {
            return Err(self.invalid(path, format!("format {} cannot feed pattern {pattern}", format.name())));
        }
        if matches!(locator.target, Target::Inline(_)) && format != Format::NameList {
            return Err(self.invalid(path, "inline sources must use format name-list"));
        }
        Ok(SourceSpec { locator, format, pattern: pattern.to_string(), parent })
    }
}
