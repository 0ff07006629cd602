//! Scaffold patterns. Each pattern turns one data record into the axioms
//! for one class.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::expr::{ExprError, Frame, OntologyBuilder};
use crate::owl::{AnnotationProperty, Axiom, ClassExpression, EntityRef};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatternError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("unknown pattern: {name} (registered: {})", registered_names().join(", "))]
    UnknownPattern { name: String },
    #[error("pattern {pattern}: missing required binding {param:?}")]
    MissingBinding { pattern: &'static str, param: &'static str },
    #[error("pattern {pattern}: unexpected binding {param:?}")]
    UnexpectedBinding { pattern: &'static str, param: String },
    #[error("{site}: paper {label:?} is not a subclass of Paper")]
    NotAPaper { label: String, site: String },
}

/// The fixed root classes every build declares first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TopLevel {
    Disease,
    Gene,
    HumanAnatomy,
    MitochondrialAnatomy,
    Protein,
    Paper,
    Term,
}

impl TopLevel {
    pub const ALL: [TopLevel; 7] = [
        TopLevel::Disease,
        TopLevel::Gene,
        TopLevel::HumanAnatomy,
        TopLevel::MitochondrialAnatomy,
        TopLevel::Protein,
        TopLevel::Paper,
        TopLevel::Term,
    ];

    /// The five roots whose subclasses come from extant knowledge sources.
    pub const SCAFFOLD: [TopLevel; 5] =
        [TopLevel::Disease, TopLevel::Gene, TopLevel::HumanAnatomy, TopLevel::MitochondrialAnatomy, TopLevel::Protein];

    pub fn label(self) -> &'static str {
        match self {
            TopLevel::Disease => "Disease",
            TopLevel::Gene => "Gene",
            TopLevel::HumanAnatomy => "HumanAnatomy",
            TopLevel::MitochondrialAnatomy => "MitochondrialAnatomy",
            TopLevel::Protein => "Protein",
            TopLevel::Paper => "Paper",
            TopLevel::Term => "Term",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            TopLevel::HumanAnatomy => "Human Anatomy",
            TopLevel::MitochondrialAnatomy => "Mitochondrial Anatomy",
            other => other.label(),
        }
    }

    pub fn is_scaffold(self) -> bool {
        Self::SCAFFOLD.contains(&self)
    }

    pub fn from_label(label: &str) -> Option<TopLevel> {
        Self::ALL.into_iter().find(|t| t.label() == label)
    }
}

impl fmt::Display for TopLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TopLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TopLevel::from_label(s).ok_or_else(|| format!("unknown parent class: {s}"))
    }
}

/// Declares the seven roots, each with its label.
pub fn declare_top_level(b: &mut OntologyBuilder) -> Result<(), PatternError> {
    for top in TopLevel::ALL {
        b.owl_class(top.label(), &Frame::new().label(top.label()))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiseaseRecord {
    pub name: String,
    pub omim: Option<String>,
    pub long_name: Option<String>,
}

impl DiseaseRecord {
    pub fn new(name: impl Into<String>) -> Self {
        DiseaseRecord { name: name.into(), omim: None, long_name: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TermRecord {
    pub paper_id: String,
    pub term: String,
}

fn parent_ref(b: &mut OntologyBuilder, top: TopLevel) -> Result<EntityRef, PatternError> {
    Ok(b.resolve(top.label())?)
}

fn labelled_subclass(b: &mut OntologyBuilder, name: &str, parent: &EntityRef) -> Result<EntityRef, PatternError> {
    Ok(b.owl_class(name, &Frame::new().label(name.trim()).sup(parent))?)
}

/// `name ⊑ Gene`, labelled with its name.
pub fn gene_class(b: &mut OntologyBuilder, name: &str) -> Result<EntityRef, PatternError> {
    let gene = parent_ref(b, TopLevel::Gene)?;
    labelled_subclass(b, name, &gene)
}

/// Same shape as [`gene_class`] under an arbitrary declared parent.
pub fn named_subclass(b: &mut OntologyBuilder, name: &str, parent: &EntityRef) -> Result<EntityRef, PatternError> {
    labelled_subclass(b, name, parent)
}

/// A disease subclass with an optional `OMIMID:` see-also and an optional
/// second label carrying the long name.
pub fn disease_class(b: &mut OntologyBuilder, record: &DiseaseRecord) -> Result<EntityRef, PatternError> {
    let disease = parent_ref(b, TopLevel::Disease)?;
    let mut frame = Frame::new().label(record.name.trim()).sup(&disease);
    if let Some(omim) = &record.omim {
        frame = frame.annotation(AnnotationProperty::SeeAlso, format!("OMIMID:{omim}"));
    }
    if let Some(long_name) = &record.long_name {
        frame = frame.annotation(AnnotationProperty::Label, format!("Long name:{long_name}"));
    }
    Ok(b.owl_class(&record.name, &frame)?)
}

pub fn paper_class(b: &mut OntologyBuilder, paper_id: &str) -> Result<EntityRef, PatternError> {
    let paper = parent_ref(b, TopLevel::Paper)?;
    labelled_subclass(b, paper_id, &paper)
}

/// `term ⊑ Term` with a see-also naming the source paper. The paper must
/// already be declared (possibly as a deprecated entity).
pub fn term_class(b: &mut OntologyBuilder, record: &TermRecord) -> Result<EntityRef, PatternError> {
    let term_root = parent_ref(b, TopLevel::Term)?;
    let paper = b.resolve(&record.paper_id)?;
    if !b.env.is_deprecated(paper.label()) && !is_paper(b, &paper)? {
        return Err(PatternError::NotAPaper { label: paper.label().to_string(), site: b.site().to_string() });
    }
    let frame = Frame::new()
        .label(record.term.trim())
        .sup(&term_root)
        .annotation(AnnotationProperty::SeeAlso, paper.label());
    Ok(b.owl_class(&record.term, &frame)?)
}

fn is_paper(b: &mut OntologyBuilder, entity: &EntityRef) -> Result<bool, PatternError> {
    let paper_root = parent_ref(b, TopLevel::Paper)?;
    let edge = Axiom::subclass(entity, ClassExpression::Named(paper_root));
    Ok(b.definition(entity.label()).is_some_and(|defn| defn.contains(&edge)))
}

/// How a pattern chooses its parent class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParentRule {
    Fixed(TopLevel),
    /// Taken from the `parent` binding.
    Bound,
}

#[derive(Debug, Clone, Copy)]
pub struct PatternSpec {
    pub name: &'static str,
    /// `(parameter, required)`
    pub params: &'static [(&'static str, bool)],
    pub parent: ParentRule,
}

pub const PATTERNS: &[PatternSpec] = &[
    PatternSpec { name: "disease", params: &[("name", true), ("omim", false), ("long_name", false)], parent: ParentRule::Fixed(TopLevel::Disease) },
    PatternSpec { name: "gene", params: &[("name", true)], parent: ParentRule::Fixed(TopLevel::Gene) },
    PatternSpec { name: "named-subclass", params: &[("name", true), ("parent", true)], parent: ParentRule::Bound },
    PatternSpec { name: "paper", params: &[("name", true)], parent: ParentRule::Fixed(TopLevel::Paper) },
    PatternSpec { name: "term", params: &[("paper_id", true), ("term", true)], parent: ParentRule::Fixed(TopLevel::Term) },
];

pub fn lookup_pattern(name: &str) -> Option<&'static PatternSpec> {
    PATTERNS.iter().find(|p| p.name == name)
}

pub fn registered_names() -> Vec<&'static str> {
    PATTERNS.iter().map(|p| p.name).collect()
}

pub type Bindings = BTreeMap<String, String>;

/// A pattern body: validated bindings in, one class out.
pub type PatternFn = fn(&mut OntologyBuilder, &Bindings) -> Result<EntityRef, PatternError>;

fn binding<'a>(bindings: &'a Bindings, key: &str) -> Option<&'a str> {
    bindings.get(key).map(String::as_str)
}

fn required<'a>(bindings: &'a Bindings, key: &str) -> &'a str {
    binding(bindings, key).expect("required bindings are checked before dispatch")
}

fn gene_pattern(b: &mut OntologyBuilder, bindings: &Bindings) -> Result<EntityRef, PatternError> {
    gene_class(b, required(bindings, "name"))
}

/// Builds a [`DiseaseRecord`] from `disease` pattern bindings.
pub fn disease_record(bindings: &Bindings) -> DiseaseRecord {
    DiseaseRecord {
        name: required(bindings, "name").to_string(),
        omim: binding(bindings, "omim").map(String::from),
        long_name: binding(bindings, "long_name").map(String::from),
    }
}

fn disease_pattern(b: &mut OntologyBuilder, bindings: &Bindings) -> Result<EntityRef, PatternError> {
    disease_class(b, &disease_record(bindings))
}

fn named_subclass_pattern(b: &mut OntologyBuilder, bindings: &Bindings) -> Result<EntityRef, PatternError> {
    let parent = b.resolve(required(bindings, "parent"))?;
    named_subclass(b, required(bindings, "name"), &parent)
}

fn paper_pattern(b: &mut OntologyBuilder, bindings: &Bindings) -> Result<EntityRef, PatternError> {
    paper_class(b, required(bindings, "name"))
}

fn term_pattern(b: &mut OntologyBuilder, bindings: &Bindings) -> Result<EntityRef, PatternError> {
    let record = TermRecord { paper_id: required(bindings, "paper_id").to_string(), term: required(bindings, "term").to_string() };
    term_class(b, &record)
}

/// The pattern implementations a build dispatches to. Parameters and parent
/// rules are fixed by [`PATTERNS`]; bodies can be swapped, which is how a
/// pattern change is rolled out to every class it generated.
#[derive(Clone)]
pub struct PatternLibrary {
    bodies: BTreeMap<&'static str, PatternFn>,
}

impl fmt::Debug for PatternLibrary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.bodies.keys()).finish()
    }
}

impl Default for PatternLibrary {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PatternLibrary {
    pub fn builtin() -> Self {
        let bodies: [(&'static str, PatternFn); 5] = [
            ("disease", disease_pattern),
            ("gene", gene_pattern),
            ("named-subclass", named_subclass_pattern),
            ("paper", paper_pattern),
            ("term", term_pattern),
        ];
        PatternLibrary { bodies: bodies.into_iter().collect() }
    }

    /// Swaps the body of a registered pattern.
    pub fn replace(mut self, name: &str, body: PatternFn) -> Result<Self, PatternError> {
        let spec = lookup_pattern(name).ok_or_else(|| PatternError::UnknownPattern { name: name.to_string() })?;
        self.bodies.insert(spec.name, body);
        Ok(self)
    }

    pub fn instantiate(&self, b: &mut OntologyBuilder, pattern_name: &str, bindings: &Bindings) -> Result<EntityRef, PatternError> {
        let spec = lookup_pattern(pattern_name).ok_or_else(|| PatternError::UnknownPattern { name: pattern_name.to_string() })?;
        for key in bindings.keys() {
            if !spec.params.iter().any(|(p, _)| p == key) {
                return Err(PatternError::UnexpectedBinding { pattern: spec.name, param: key.clone() });
            }
        }
        for (param, required) in spec.params {
            if *required && !bindings.contains_key(*param) {
                return Err(PatternError::MissingBinding { pattern: spec.name, param });
            }
        }
        let body = self.bodies.get(spec.name).expect("every registered pattern has a body");
        body(b, bindings)
    }
}

/// Dispatches to a built-in pattern by name.
pub fn instantiate(b: &mut OntologyBuilder, pattern_name: &str, bindings: &Bindings) -> Result<EntityRef, PatternError> {
    PatternLibrary::builtin().instantiate(b, pattern_name, bindings)
}
