//! End-to-end build: manifest, sources, expansion, deprecations, report.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::expr::OntologyBuilder;
use crate::ingest::{
    load_manifest, read_disease_table, read_name_list, read_paper_terms, resolve_source, BuildManifest, Document, Fetch,
    Format, Mode, SourceLocator, SourceSpec, Sourced, Target, DEFAULT_FETCH_TIMEOUT,
};
use crate::owl::{Axiom, EntitySort, Ontology};
use crate::patterns::{declare_top_level, Bindings, PatternLibrary, TopLevel};
use crate::registry::{load_deprecations, load_registry_or_default, DeprecationTable, Environment, IdRegistry, Naming, Warning};
use crate::serialize::{stats, BuildReport};

/// Whether the first error stops the build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorPolicy {
    #[default]
    FailFast,
    CollectAll,
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub policy: ErrorPolicy,
    /// Registry file; overrides the manifest's `id_registry`.
    pub ids: Option<PathBuf>,
    pub mode_override: Option<Mode>,
    pub timeout: Duration,
    pub patterns: PatternLibrary,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            policy: ErrorPolicy::FailFast,
            ids: None,
            mode_override: None,
            timeout: DEFAULT_FETCH_TIMEOUT,
            patterns: PatternLibrary::builtin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error: {}", self.message)
    }
}

impl<E: std::error::Error> From<E> for Diagnostic {
    fn from(e: E) -> Self {
        Diagnostic { message: e.to_string() }
    }
}

#[derive(Debug, Clone)]
pub struct BuildFailure {
    pub errors: Vec<Diagnostic>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone)]
pub struct BuildOutput {
    pub manifest: BuildManifest,
    pub ontology: Ontology,
    pub warnings: Vec<Warning>,
    pub report: BuildReport,
    /// The registry file and its updated contents, in minted-ID mode.
    pub registry: Option<(PathBuf, IdRegistry)>,
}

struct Collector {
    policy: ErrorPolicy,
    errors: Vec<Diagnostic>,
}

/// Stops the build after the first error under [`ErrorPolicy::FailFast`].
struct Abort;

impl Collector {
    fn push(&mut self, d: impl Into<Diagnostic>) -> Result<(), Abort> {
        self.errors.push(d.into());
        match self.policy {
            ErrorPolicy::FailFast => Err(Abort),
            ErrorPolicy::CollectAll => Ok(()),
        }
    }

    fn take<T, E: Into<Diagnostic>>(&mut self, r: Result<T, E>) -> Result<Option<T>, Abort> {
        match r {
            Ok(v) => Ok(Some(v)),
            Err(e) => self.push(e).map(|()| None),
        }
    }
}

enum Records {
    Names(Vec<Sourced<String>>),
    Diseases(Vec<Sourced<crate::patterns::DiseaseRecord>>),
    Terms(Vec<Sourced<crate::patterns::TermRecord>>),
}

impl Records {
    fn labels(&self) -> Vec<&str> {
        match self {
            Records::Names(v) => v.iter().map(|s| s.value.trim()).collect(),
            Records::Diseases(v) => v.iter().map(|s| s.value.name.trim()).collect(),
            Records::Terms(v) => v.iter().map(|s| s.value.term.trim()).collect(),
        }
    }
}

fn parse_documents(format: Format, docs: &[Document], c: &mut Collector) -> Result<Records, Abort> {
    let mut records = match format {
        Format::NameList => Records::Names(Vec::new()),
        Format::DiseaseTable => Records::Diseases(Vec::new()),
        Format::PaperTerms => Records::Terms(Vec::new()),
    };
    for doc in docs {
        match &mut records {
            Records::Names(v) => v.extend(c.take(read_name_list(&doc.bytes, &doc.origin))?.unwrap_or_default()),
            Records::Diseases(v) => v.extend(c.take(read_disease_table(&doc.bytes, &doc.origin))?.unwrap_or_default()),
            Records::Terms(v) => v.extend(c.take(read_paper_terms(&doc.bytes, &doc.origin))?.unwrap_or_default()),
        }
    }
    Ok(records)
}

fn effective_locator(locator: &SourceLocator, mode_override: Option<Mode>) -> Result<SourceLocator, Diagnostic> {
    match (&locator.target, mode_override) {
        (Target::Http(_), Some(Mode::Release)) => Err(Diagnostic {
            message: format!("{locator}: live source disabled by --mode-override release"),
        }),
        (Target::Http(_), Some(Mode::Live)) => Ok(SourceLocator { target: locator.target.clone(), mode: Mode::Live }),
        _ => Ok(locator.clone()),
    }
}

/// Resolves every source, concurrently, returning results in manifest order.
fn fetch_all(
    sources: &[SourceSpec],
    options: &BuildOptions,
    fetcher: &dyn Fetch,
) -> Vec<Result<Vec<Document>, Diagnostic>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = sources
            .iter()
            .map(|s| {
                scope.spawn(move || {
                    let loc = effective_locator(&s.locator, options.mode_override)?;
                    resolve_source(&loc, fetcher, options.timeout).map_err(Diagnostic::from)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("source reader panicked")).collect()
    })
}

fn bindings_for(spec: &SourceSpec, records: &Records) -> Vec<(String, Bindings)> {
    let b = |pairs: Vec<(&str, Option<&str>)>| -> Bindings {
        pairs.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v.to_string()))).collect()
    };
    let parent = (spec.pattern == "named-subclass").then_some(spec.parent.label());
    match records {
        Records::Names(v) => v.iter().map(|r| (r.site(), b(vec![("name", Some(&r.value)), ("parent", parent)]))).collect(),
        Records::Diseases(v) => v
            .iter()
            .map(|r| {
                let d = &r.value;
                (r.site(), b(vec![("name", Some(&d.name)), ("omim", d.omim.as_deref()), ("long_name", d.long_name.as_deref())]))
            })
            .collect(),
        Records::Terms(v) => v
            .iter()
            .map(|r| (r.site(), b(vec![("paper_id", Some(&r.value.paper_id)), ("term", Some(&r.value.term))])))
            .collect(),
    }
}

/// Declares every deprecated label that expansion did not, and marks all of
/// them `owl:deprecated true`.
pub fn apply_deprecations(b: &mut OntologyBuilder) -> Result<(), crate::registry::ResolveError> {
    let labels: Vec<String> = b.env.deprecations().labels().map(String::from).collect();
    b.set_site("deprecations");
    for label in labels {
        let entity = match b.env.lookup(&label) {
            Some((e, _)) => e.clone(),
            None => {
                let e = b.env.declare(&label, EntitySort::Class, "deprecations")?;
                b.ontology.insert(Axiom::declare_class(&e));
                b.ontology.insert(Axiom::label(&e, label.clone()));
                e
            }
        };
        b.ontology.insert(Axiom::deprecated(&entity));
    }
    Ok(())
}

/// Runs the whole pipeline in memory. Nothing is written to disk.
pub fn build(manifest_path: &Path, options: &BuildOptions, fetcher: &dyn Fetch) -> Result<BuildOutput, BuildFailure> {
    let mut c = Collector { policy: options.policy, errors: Vec::new() };
    match run(manifest_path, options, fetcher, &mut c) {
        Ok(Some(out)) if c.errors.is_empty() => Ok(out),
        Ok(Some(out)) => Err(BuildFailure { errors: c.errors, warnings: out.warnings }),
        Ok(None) | Err(Abort) => Err(BuildFailure { errors: c.errors, warnings: Vec::new() }),
    }
}

fn run(manifest_path: &Path, options: &BuildOptions, fetcher: &dyn Fetch, c: &mut Collector) -> Result<Option<BuildOutput>, Abort> {
    let origin = manifest_path.display().to_string();
    let Some(bytes) = c.take(fs::read(manifest_path).map_err(|e| Diagnostic { message: format!("{origin}: {e}") }))? else {
        return Ok(None);
    };
    let base_dir = manifest_path.parent().unwrap_or(Path::new("."));
    let Some(manifest) = c.take(load_manifest(&bytes, &origin, base_dir))? else {
        return Ok(None);
    };

    let registry_path = options.ids.clone().or_else(|| manifest.id_registry.clone());
    let mut registry = match &registry_path {
        Some(path) => match c.take(load_registry_or_default(path))? {
            Some(reg) => Some(reg),
            None => return Ok(None),
        },
        None => None,
    };

    let mut deprecations = DeprecationTable::new();
    if let Some(loc) = &manifest.deprecations {
        let docs = effective_locator(loc, options.mode_override)
            .and_then(|l| resolve_source(&l, fetcher, options.timeout).map_err(Diagnostic::from));
        for doc in c.take(docs)?.unwrap_or_default() {
            if let Some(t) = c.take(load_deprecations(&doc.bytes, &doc.origin))? {
                for label in t.labels() {
                    let _ = deprecations.insert(label, t.get(label).flatten());
                }
            }
        }
    }

    let mut parsed = Vec::with_capacity(manifest.sources.len());
    for (spec, docs) in manifest.sources.iter().zip(fetch_all(&manifest.sources, options, fetcher)) {
        let docs = c.take(docs)?.unwrap_or_default();
        parsed.push(parse_documents(spec.format, &docs, c)?);
    }

    // Fresh labels are minted up front, in sorted order, so ids do not
    // depend on the order records appear in.
    let naming = match registry.take() {
        Some(mut reg) => {
            reg.mint_all(TopLevel::ALL.iter().map(|t| t.label()));
            reg.mint_all(parsed.iter().flat_map(Records::labels).chain(deprecations.labels()));
            Naming::Minted(reg)
        }
        None => Naming::Labels,
    };
    let env = Environment::new(manifest.base_prefix.clone(), naming).with_deprecations(deprecations);
    let mut b = OntologyBuilder::new(env, Ontology::new(manifest.ontology_iri.clone(), manifest.base_prefix.clone()));

    b.set_site(origin.clone());
    if c.take(declare_top_level(&mut b))?.is_none() {
        return Ok(None);
    }
    for (spec, records) in manifest.sources.iter().zip(&parsed) {
        for (site, bindings) in bindings_for(spec, records) {
            b.set_site(site);
            c.take(options.patterns.instantiate(&mut b, &spec.pattern, &bindings))?;
        }
    }
    c.take(apply_deprecations(&mut b))?;

    let open = b.ontology.undeclared_references();
    if !open.is_empty() {
        let labels: Vec<&str> = open.iter().map(|e| e.label()).collect();
        c.push(Diagnostic { message: format!("undeclared entities after expansion: {}", labels.join(", ")) })?;
    }

    let warnings = b.env.take_warnings();
    let report = stats(&b.ontology, &warnings);
    let OntologyBuilder { env, ontology, .. } = b;
    let registry = registry_path.zip(env.into_registry());
    Ok(Some(BuildOutput { manifest, ontology, warnings, report, registry }))
}
