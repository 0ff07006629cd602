//! Declare-before-use resolution, deprecations, and numeric identifier
//! minting.
//!
//! An [`Environment`] tracks every label declared during a build. Lookups
//! through [`Environment::resolve`] fail on anything that was never
//! declared, unless the label appears in the [`DeprecationTable`], in which
//! case the lookup succeeds (redirecting to the replacement when there is
//! one) and records a [`Warning`].
//!
//! IRIs come from a [`Naming`] scheme: either the sanitized label appended
//! to the base prefix, or an `MDO_`-prefixed, zero-padded identifier
//! minted from a persistent [`IdRegistry`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::owl::{check_label, EntityRef, EntitySort, ModelError};

/// Human-readable identifier prefix for minted IRIs.
pub const ID_PREFIX: &str = "MDO_";
pub const ID_WIDTH: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("{site}: reference to undeclared entity {label:?}")]
    Undeclared { label: String, site: String },
    #[error("{site}: {label:?} is deprecated in favour of {replacement:?}, which is not declared")]
    MissingReplacement { label: String, replacement: String, site: String },
    #[error("{site}: deprecation chain starting at {label:?} loops")]
    DeprecationCycle { label: String, site: String },
    #[error("{site}: labels {label:?} and {other:?} map to the same IRI {iri}")]
    IriCollision { label: String, other: String, iri: String, site: String },
    #[error("{site}: {0}", site = .1)]
    Model(ModelError, String),
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{origin}:{line}: {message}")]
    Parse { origin: String, line: usize, message: String },
    #[error("registry regression: {path} holds {id}\t{label} which the new registry lacks")]
    Regression { path: PathBuf, id: u64, label: String },
    #[error("registry {} is locked by another build (remove {}.lock if stale)", .0.display(), .0.display())]
    Locked(PathBuf),
    #[error("label {0:?} has no minted identifier")]
    Unminted(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum WarningKind {
    DeprecatedReference,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Warning {
    pub kind: WarningKind,
    pub label: String,
    pub context: String,
    pub message: String,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: warning: {}", self.context, self.message)
    }
}

/// Old label to optional replacement label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeprecationTable {
    entries: BTreeMap<String, Option<String>>,
}

impl DeprecationTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, old: &str, replacement: Option<&str>) -> Result<(), ModelError> {
        let old = check_label(old)?.to_string();
        let replacement = replacement.map(check_label).transpose()?.map(str::to_string);
        self.entries.insert(old, replacement);
        Ok(())
    }

    pub fn get(&self, label: &str) -> Option<Option<&str>> {
        self.entries.get(label).map(Option::as_deref)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.entries.contains_key(label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parses `old_label<TAB>replacement_label` lines. The replacement column
/// may be empty or missing; `#` comments and blank lines are skipped.
pub fn load_deprecations(bytes: &[u8], origin: &str) -> Result<DeprecationTable, RegistryError> {
    let text = std::str::from_utf8(bytes).map_err(|e| RegistryError::Parse {
        origin: origin.to_string(),
        line: line_of_offset(bytes, e.valid_up_to()),
        message: format!("invalid UTF-8 at byte offset {}", e.valid_up_to()),
    })?;
    let mut table = DeprecationTable::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        let parse_err = |message: String| RegistryError::Parse { origin: origin.to_string(), line, message };
        let cols: Vec<&str> = raw.split('\t').collect();
        if cols.len() > 2 {
            return Err(parse_err(format!("expected at most 2 tab-separated columns, found {}", cols.len())));
        }
        let old = cols[0].trim();
        if old.is_empty() {
            return Err(parse_err("empty deprecated label".to_string()));
        }
        let replacement = cols.get(1).map(|s| s.trim()).filter(|s| !s.is_empty());
        if replacement == Some(old) {
            return Err(parse_err(format!("{old:?} cannot replace itself")));
        }
        if let Some(first) = seen.insert(old.to_string(), line) {
            return Err(parse_err(format!("duplicate deprecated label {old:?} (first on line {first})")));
        }
        table.insert(old, replacement).map_err(|e| parse_err(e.to_string()))?;
    }
    Ok(table)
}

pub(crate) fn line_of_offset(bytes: &[u8], offset: usize) -> usize {
    bytes[..offset].iter().filter(|&&b| b == b'\n').count() + 1
}

/// Append-only mapping from labels to positive integer identifiers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdRegistry {
    by_label: BTreeMap<String, u64>,
    by_id: BTreeMap<u64, String>,
    next_id: u64,
}

impl Default for IdRegistry {
    fn default() -> Self {
        IdRegistry { by_label: BTreeMap::new(), by_id: BTreeMap::new(), next_id: 1 }
    }
}

impl IdRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the label's identifier, assigning the next free one if the
    /// label is new.
    pub fn mint_id(&mut self, label: &str) -> u64 {
        if let Some(&id) = self.by_label.get(label) {
            return id;
        }
        let id = self.next_id;
        self.next_id += 1;
        self.by_label.insert(label.to_string(), id);
        self.by_id.insert(id, label.to_string());
        id
    }

    /// Mints every label not yet known, in lexicographic order, so that the
    /// ids handed out do not depend on the order labels were discovered in.
    pub fn mint_all<'a>(&mut self, labels: impl IntoIterator<Item = &'a str>) {
        let fresh: BTreeSet<&str> = labels.into_iter().filter(|l| !self.by_label.contains_key(*l)).collect();
        for label in fresh {
            self.mint_id(label);
        }
    }

    pub fn get(&self, label: &str) -> Option<u64> {
        self.by_label.get(label).copied()
    }

    pub fn label_of(&self, id: u64) -> Option<&str> {
        self.by_id.get(&id).map(String::as_str)
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    /// Entries in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, &str)> {
        self.by_id.iter().map(|(id, l)| (*id, l.as_str()))
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, label) in self.iter() {
            out.push_str(&format!("{id}\t{label}\n"));
        }
        out
    }

    pub fn from_tsv(bytes: &[u8], origin: &str) -> Result<IdRegistry, RegistryError> {
        let err = |line: usize, message: String| RegistryError::Parse { origin: origin.to_string(), line, message };
        let text = std::str::from_utf8(bytes)
            .map_err(|e| err(line_of_offset(bytes, e.valid_up_to()), format!("invalid UTF-8 at byte offset {}", e.valid_up_to())))?;
        let mut reg = IdRegistry::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.is_empty() {
                continue;
            }
            let (id, label) = raw.split_once('\t').ok_or_else(|| err(line, "expected id<TAB>label".to_string()))?;
            let id: u64 = id.parse().map_err(|_| err(line, format!("invalid id {id:?}")))?;
            if id == 0 {
                return Err(err(line, "ids start at 1".to_string()));
            }
            let label = check_label(label).map_err(|e| err(line, e.to_string()))?;
            if reg.by_id.contains_key(&id) {
                return Err(err(line, format!("id {id} assigned twice")));
            }
            if reg.by_label.contains_key(label) {
                return Err(err(line, format!("label {label:?} assigned twice")));
            }
            reg.by_id.insert(id, label.to_string());
            reg.by_label.insert(label.to_string(), id);
            reg.next_id = reg.next_id.max(id + 1);
        }
        Ok(reg)
    }
}

pub fn load_registry(path: &Path) -> Result<IdRegistry, RegistryError> {
    let bytes = fs::read(path).map_err(|source| RegistryError::Io { path: path.to_path_buf(), source })?;
    IdRegistry::from_tsv(&bytes, &path.display().to_string())
}

/// Like [`load_registry`], but a missing file yields an empty registry.
pub fn load_registry_or_default(path: &Path) -> Result<IdRegistry, RegistryError> {
    if path.exists() {
        load_registry(path)
    } else {
        Ok(IdRegistry::new())
    }
}

/// Fails if the file at `path` holds an entry that `registry` lacks.
pub fn check_no_regression(registry: &IdRegistry, path: &Path) -> Result<(), RegistryError> {
    if !path.exists() {
        return Ok(());
    }
    let on_disk = load_registry(path)?;
    for (id, label) in on_disk.iter() {
        if registry.label_of(id) != Some(label) {
            return Err(RegistryError::Regression { path: path.to_path_buf(), id, label: label.to_string() });
        }
    }
    Ok(())
}

/// Writes the registry as `id<TAB>label` lines, replacing the file
/// atomically. Refuses to drop entries already on disk.
pub fn save_registry(registry: &IdRegistry, path: &Path) -> Result<(), RegistryError> {
    check_no_regression(registry, path)?;
    write_atomically(path, registry.to_tsv().as_bytes()).map_err(|source| RegistryError::Io { path: path.to_path_buf(), source })
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomically(path: &Path, contents: &[u8]) -> io::Result<()> {
    let tmp = temp_sibling(path);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub(crate) fn temp_sibling(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp{}", std::process::id()))
}

/// Exclusive marker held while a build owns a registry file. Released on
/// drop.
#[derive(Debug)]
pub struct RegistryLock {
    marker: PathBuf,
}

impl RegistryLock {
    pub fn acquire(registry_path: &Path) -> Result<RegistryLock, RegistryError> {
        let mut marker = registry_path.as_os_str().to_owned();
        marker.push(".lock");
        let marker = PathBuf::from(marker);
        match fs::OpenOptions::new().write(true).create_new(true).open(&marker) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RegistryLock { marker })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(RegistryError::Locked(registry_path.to_path_buf())),
            Err(source) => Err(RegistryError::Io { path: marker, source }),
        }
    }
}

impl Drop for RegistryLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.marker);
    }
}

/// Spaces become `_`; anything outside `[A-Za-z0-9_-]` is percent-encoded
/// byte by byte.
pub fn sanitize_label(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for c in label.chars() {
        match c {
            ' ' => out.push('_'),
            'A'..='Z' | 'a'..='z' | '0'..='9' | '_' | '-' => out.push(c),
            _ => {
                let mut buf = [0u8; 4];
                for b in c.encode_utf8(&mut buf).bytes() {
                    out.push_str(&format!("%{b:02X}"));
                }
            }
        }
    }
    out
}

/// Computes the IRI for a label. Without a registry the sanitized label is
/// appended to `base_prefix`; with one, the label's minted id is used.
pub fn iri_for(label: &str, registry: Option<&IdRegistry>, base_prefix: &str) -> Result<String, RegistryError> {
    match registry {
        None => Ok(format!("{base_prefix}{}", sanitize_label(label))),
        Some(reg) => {
            let id = reg.get(label).ok_or_else(|| RegistryError::Unminted(label.to_string()))?;
            Ok(format!("{base_prefix}{ID_PREFIX}{id:0width$}", width = ID_WIDTH))
        }
    }
}

#[derive(Debug, Clone)]
pub enum Naming {
    Labels,
    Minted(IdRegistry),
}

#[derive(Debug, Clone)]
struct Declared {
    entity: EntityRef,
    sort: EntitySort,
}

/// The set of names visible to pattern expansion.
#[derive(Debug, Clone)]
pub struct Environment {
    base_prefix: String,
    naming: Naming,
    declared: BTreeMap<String, Declared>,
    iris: BTreeMap<String, String>,
    deprecated: DeprecationTable,
    warnings: Vec<Warning>,
}

impl Environment {
    pub fn new(base_prefix: impl Into<String>, naming: Naming) -> Self {
        Environment {
            base_prefix: base_prefix.into(),
            naming,
            declared: BTreeMap::new(),
            iris: BTreeMap::new(),
            deprecated: DeprecationTable::new(),
            warnings: Vec::new(),
        }
    }

    pub fn with_deprecations(mut self, table: DeprecationTable) -> Self {
        self.deprecated = table;
        self
    }

    pub fn base_prefix(&self) -> &str {
        &self.base_prefix
    }

    pub fn naming(&self) -> &Naming {
        &self.naming
    }

    pub fn registry(&self) -> Option<&IdRegistry> {
        match &self.naming {
            Naming::Minted(reg) => Some(reg),
            Naming::Labels => None,
        }
    }

    pub fn into_registry(self) -> Option<IdRegistry> {
        match self.naming {
            Naming::Minted(reg) => Some(reg),
            Naming::Labels => None,
        }
    }

    pub fn deprecations(&self) -> &DeprecationTable {
        &self.deprecated
    }

    pub fn warnings(&self) -> &[Warning] {
        &self.warnings
    }

    pub fn take_warnings(&mut self) -> Vec<Warning> {
        std::mem::take(&mut self.warnings)
    }

    pub fn is_declared(&self, label: &str) -> bool {
        self.declared.contains_key(label)
    }

    pub fn is_deprecated(&self, label: &str) -> bool {
        self.deprecated.contains(label)
    }

    pub fn lookup(&self, label: &str) -> Option<(&EntityRef, EntitySort)> {
        self.declared.get(label).map(|d| (&d.entity, d.sort))
    }

    /// The reference a label would receive, declared or not. In minted mode
    /// this assigns an id to new labels.
    pub fn reference_for(&mut self, label: &str, site: &str) -> Result<EntityRef, ResolveError> {
        let label = check_label(label).map_err(|e| ResolveError::Model(e, site.to_string()))?;
        if let Some(d) = self.declared.get(label) {
            return Ok(d.entity.clone());
        }
        let reg = match &mut self.naming {
            Naming::Minted(reg) => {
                reg.mint_id(label);
                Some(&*reg)
            }
            Naming::Labels => None,
        };
        let iri = iri_for(label, reg, &self.base_prefix).expect("label minted above");
        EntityRef::new(label, iri).map_err(|e| ResolveError::Model(e, site.to_string()))
    }

    /// Adds a label to the environment. Re-declaring a label with the same
    /// sort returns the existing reference.
    pub fn declare(&mut self, label: &str, sort: EntitySort, site: &str) -> Result<EntityRef, ResolveError> {
        let entity = self.reference_for(label, site)?;
        if self.declared.contains_key(entity.label()) {
            return Ok(entity);
        }
        if let Some(other) = self.iris.get(entity.iri()) {
            return Err(ResolveError::IriCollision {
                label: entity.label().to_string(),
                other: other.clone(),
                iri: entity.iri().to_string(),
                site: site.to_string(),
            });
        }
        self.iris.insert(entity.iri().to_string(), entity.label().to_string());
        self.declared.insert(entity.label().to_string(), Declared { entity: entity.clone(), sort });
        Ok(entity)
    }

    /// Looks up a label under declare-before-use rules.
    ///
    /// Deprecated labels resolve to their replacement (or to themselves when
    /// there is none) and append one warning per call.
    pub fn resolve(&mut self, label: &str, site: &str) -> Result<EntityRef, ResolveError> {
        let label = check_label(label).map_err(|e| ResolveError::Model(e, site.to_string()))?;
        if !self.deprecated.contains(label) {
            return self.declared.get(label).map(|d| d.entity.clone()).ok_or_else(|| ResolveError::Undeclared {
                label: label.to_string(),
                site: site.to_string(),
            });
        }

        let mut visited = BTreeSet::new();
        let mut current = label.to_string();
        let target = loop {
            if !visited.insert(current.clone()) {
                return Err(ResolveError::DeprecationCycle { label: label.to_string(), site: site.to_string() });
            }
            match self.deprecated.get(&current) {
                Some(Some(next)) => current = next.to_string(),
                Some(None) => break self.reference_for(&current, site)?,
                None => match self.declared.get(&current) {
                    Some(d) => break d.entity.clone(),
                    None => {
                        return Err(ResolveError::MissingReplacement {
                            label: label.to_string(),
                            replacement: current,
                            site: site.to_string(),
                        })
                    }
                },
            }
        };

        let message = if target.label() == label {
            format!("reference to deprecated entity {label:?}")
        } else {
            format!("reference to deprecated entity {label:?}, using replacement {:?}", target.label())
        };
        self.warnings.push(Warning {
            kind: WarningKind::DeprecatedReference,
            label: label.to_string(),
            context: site.to_string(),
            message,
        });
        Ok(target)
    }

    /// Checks that an already-built reference is usable: declared with the
    /// same IRI, or a deprecated label that will be declared at the end of
    /// the build.
    pub fn check_reference(&self, entity: &EntityRef, site: &str) -> Result<EntitySort, ResolveError> {
        if let Some(d) = self.declared.get(entity.label()) {
            if d.entity == *entity {
                return Ok(d.sort);
            }
        } else if self.deprecated.contains(entity.label()) {
            let expected = iri_for(entity.label(), self.registry(), &self.base_prefix).ok();
            if expected.as_deref() == Some(entity.iri()) {
                return Ok(EntitySort::Class);
            }
        }
        Err(ResolveError::Undeclared { label: entity.label().to_string(), site: site.to_string() })
    }
}
