//! In-memory model of the OWL 2 subset used by the scaffold.
//!
//! The model covers class, object-property and annotation-property
//! declarations, `SubClassOf` axioms over a small class-expression
//! language (existential, universal, union, intersection) and annotation
//! assertions over a fixed vocabulary. An [`Ontology`] is a set of
//! [`Axiom`]s; duplicates collapse under structural equality.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

pub const RDFS: &str = "http://www.w3.org/2000/01/rdf-schema#";
pub const OWL: &str = "http://www.w3.org/2002/07/owl#";
pub const XSD: &str = "http://www.w3.org/2001/XMLSchema#";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("label is empty")]
    EmptyLabel,
    #[error("label {0:?} contains a control character")]
    ControlCharacter(String),
    #[error("invalid absolute IRI {0:?}")]
    InvalidIri(String),
    #[error("{0} requires at least one operand")]
    EmptyOperands(&'static str),
}

/// Normalizes a label: surrounding whitespace is dropped, the rest must be
/// non-empty and free of control characters.
pub fn check_label(label: &str) -> Result<&str, ModelError> {
    let trimmed = label.trim();
    if trimmed.is_empty() {
        return Err(ModelError::EmptyLabel);
    }
    if trimmed.chars().any(char::is_control) {
        return Err(ModelError::ControlCharacter(trimmed.to_string()));
    }
    Ok(trimmed)
}

/// True for strings with an RFC 3986 scheme, something after it, and no
/// whitespace or characters that cannot appear inside `<...>`.
pub fn is_absolute_iri(iri: &str) -> bool {
    let Some((scheme, rest)) = iri.split_once(':') else {
        return false;
    };
    let mut chars = scheme.chars();
    let scheme_ok = chars.next().is_some_and(|c| c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'));
    scheme_ok
        && !rest.is_empty()
        && !iri
            .chars()
            .any(|c| c.is_whitespace() || c.is_control() || matches!(c, '<' | '>' | '"' | '{' | '}' | '|' | '\\' | '^' | '`'))
}

/// A named entity: its human-readable label and the IRI it is published
/// under.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityRef {
    label: String,
    iri: String,
}

impl EntityRef {
    pub fn new(label: &str, iri: impl Into<String>) -> Result<Self, ModelError> {
        let label = check_label(label)?.to_string();
        let iri = iri.into();
        if !is_absolute_iri(&iri) {
            return Err(ModelError::InvalidIri(iri));
        }
        Ok(EntityRef { label, iri })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn iri(&self) -> &str {
        &self.iri
    }
}

impl fmt::Display for EntityRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntitySort {
    Class,
    ObjectProperty,
    AnnotationProperty,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassExpression {
    Named(EntityRef),
    Some {
        property: EntityRef,
        filler: Box<ClassExpression>,
    },
    Only {
        property: EntityRef,
        filler: Box<ClassExpression>,
    },
    Union(Vec<ClassExpression>),
    Intersection(Vec<ClassExpression>),
}

impl ClassExpression {
    /// Visits every entity mentioned in the expression, properties
    /// included, in left-to-right order.
    pub fn for_each_entity<'a>(&'a self, visit: &mut impl FnMut(&'a EntityRef, EntitySort)) {
        match self {
            ClassExpression::Named(e) => visit(e, EntitySort::Class),
            ClassExpression::Some { property, filler } | ClassExpression::Only { property, filler } => {
                visit(property, EntitySort::ObjectProperty);
                filler.for_each_entity(visit);
            }
            ClassExpression::Union(ops) | ClassExpression::Intersection(ops) => {
                for op in ops {
                    op.for_each_entity(visit);
                }
            }
        }
    }

    pub fn as_named(&self) -> Option<&EntityRef> {
        match self {
            ClassExpression::Named(e) => Some(e),
            _ => None,
        }
    }
}

impl From<EntityRef> for ClassExpression {
    fn from(e: EntityRef) -> Self {
        ClassExpression::Named(e)
    }
}

impl From<&EntityRef> for ClassExpression {
    fn from(e: &EntityRef) -> Self {
        ClassExpression::Named(e.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AnnotationProperty {
    Label,
    SeeAlso,
    Comment,
    Deprecated,
}

impl AnnotationProperty {
    pub fn iri(self) -> String {
        match self {
            AnnotationProperty::Label => format!("{RDFS}label"),
            AnnotationProperty::SeeAlso => format!("{RDFS}seeAlso"),
            AnnotationProperty::Comment => format!("{RDFS}comment"),
            AnnotationProperty::Deprecated => format!("{OWL}deprecated"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AnnotationValue {
    Literal(String),
    Boolean(bool),
}

impl From<&str> for AnnotationValue {
    fn from(s: &str) -> Self {
        AnnotationValue::Literal(s.to_string())
    }
}

impl From<String> for AnnotationValue {
    fn from(s: String) -> Self {
        AnnotationValue::Literal(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AxiomKind {
    Declaration,
    SubClassOf,
    AnnotationAssertion,
}

impl AxiomKind {
    pub const ALL: [AxiomKind; 3] = [AxiomKind::Declaration, AxiomKind::SubClassOf, AxiomKind::AnnotationAssertion];

    pub fn name(self) -> &'static str {
        match self {
            AxiomKind::Declaration => "Declaration",
            AxiomKind::SubClassOf => "SubClassOf",
            AxiomKind::AnnotationAssertion => "AnnotationAssertion",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Axiom {
    Declaration {
        entity: EntityRef,
        sort: EntitySort,
    },
    SubClassOf {
        sub: EntityRef,
        sup: ClassExpression,
    },
    AnnotationAssertion {
        subject: EntityRef,
        property: AnnotationProperty,
        value: AnnotationValue,
    },
}

impl Axiom {
    pub fn declare_class(entity: &EntityRef) -> Axiom {
        Axiom::Declaration { entity: entity.clone(), sort: EntitySort::Class }
    }

    pub fn subclass(sub: &EntityRef, sup: impl Into<ClassExpression>) -> Axiom {
        Axiom::SubClassOf { sub: sub.clone(), sup: sup.into() }
    }

    pub fn annotation(subject: &EntityRef, property: AnnotationProperty, value: impl Into<AnnotationValue>) -> Axiom {
        Axiom::AnnotationAssertion { subject: subject.clone(), property, value: value.into() }
    }

    pub fn label(subject: &EntityRef, value: impl Into<String>) -> Axiom {
        Axiom::annotation(subject, AnnotationProperty::Label, AnnotationValue::Literal(value.into()))
    }

    pub fn deprecated(subject: &EntityRef) -> Axiom {
        Axiom::annotation(subject, AnnotationProperty::Deprecated, AnnotationValue::Boolean(true))
    }

    pub fn kind(&self) -> AxiomKind {
        match self {
            Axiom::Declaration { .. } => AxiomKind::Declaration,
            Axiom::SubClassOf { .. } => AxiomKind::SubClassOf,
            Axiom::AnnotationAssertion { .. } => AxiomKind::AnnotationAssertion,
        }
    }

    /// The entity the axiom is about.
    pub fn subject(&self) -> &EntityRef {
        match self {
            Axiom::Declaration { entity, .. } => entity,
            Axiom::SubClassOf { sub, .. } => sub,
            Axiom::AnnotationAssertion { subject, .. } => subject,
        }
    }

    /// Structural validity beyond what the types enforce.
    pub fn is_well_formed(&self) -> bool {
        match self {
            Axiom::AnnotationAssertion { property: AnnotationProperty::Deprecated, value, .. } => {
                *value == AnnotationValue::Boolean(true)
            }
            Axiom::AnnotationAssertion { value: AnnotationValue::Boolean(_), .. } => false,
            Axiom::AnnotationAssertion { value: AnnotationValue::Literal(s), .. } => {
                !s.chars().any(char::is_control)
            }
            Axiom::SubClassOf { sup, .. } => expression_well_formed(sup),
            Axiom::Declaration { .. } => true,
        }
    }

    pub fn for_each_entity<'a>(&'a self, visit: &mut impl FnMut(&'a EntityRef)) {
        match self {
            Axiom::Declaration { entity, .. } => visit(entity),
            Axiom::SubClassOf { sub, sup } => {
                visit(sub);
                sup.for_each_entity(&mut |e, _| visit(e));
            }
            Axiom::AnnotationAssertion { subject, .. } => visit(subject),
        }
    }
}

fn expression_well_formed(ce: &ClassExpression) -> bool {
    match ce {
        ClassExpression::Named(_) => true,
        ClassExpression::Some { filler, .. } | ClassExpression::Only { filler, .. } => expression_well_formed(filler),
        ClassExpression::Union(ops) => {
            ops.len() >= 2
                && ops.iter().all(|op| !matches!(op, ClassExpression::Union(_)) && expression_well_formed(op))
        }
        ClassExpression::Intersection(ops) => {
            ops.len() >= 2
                && ops
                    .iter()
                    .all(|op| !matches!(op, ClassExpression::Intersection(_)) && expression_well_formed(op))
        }
    }
}

/// An ontology: its IRI, a prefix table and a set of axioms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ontology {
    iri: String,
    prefixes: BTreeMap<String, String>,
    axioms: BTreeSet<Axiom>,
}

impl Ontology {
    /// Creates an empty ontology whose default (`:`) prefix is `base_prefix`.
    /// The `owl:`, `rdfs:` and `xsd:` stems are always present.
    pub fn new(iri: impl Into<String>, base_prefix: impl Into<String>) -> Ontology {
        let mut prefixes = BTreeMap::new();
        prefixes.insert(String::new(), base_prefix.into());
        prefixes.insert("owl".to_string(), OWL.to_string());
        prefixes.insert("rdfs".to_string(), RDFS.to_string());
        prefixes.insert("xsd".to_string(), XSD.to_string());
        Ontology { iri: iri.into(), prefixes, axioms: BTreeSet::new() }
    }

    pub fn iri(&self) -> &str {
        &self.iri
    }

    pub fn prefixes(&self) -> &BTreeMap<String, String> {
        &self.prefixes
    }

    pub fn axioms(&self) -> &BTreeSet<Axiom> {
        &self.axioms
    }

    pub fn len(&self) -> usize {
        self.axioms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axioms.is_empty()
    }

    pub fn contains(&self, axiom: &Axiom) -> bool {
        self.axioms.contains(axiom)
    }

    /// Returns a new ontology holding the union of this ontology's axioms
    /// and `axioms`. `self` is left untouched.
    pub fn add_axioms(&self, axioms: impl IntoIterator<Item = Axiom>) -> Ontology {
        let mut next = self.clone();
        next.extend(axioms);
        next
    }

    /// In-place insertion; returns false when the axiom was already present.
    pub fn insert(&mut self, axiom: Axiom) -> bool {
        debug_assert!(axiom.is_well_formed(), "malformed axiom {axiom:?}");
        self.axioms.insert(axiom)
    }

    pub fn extend(&mut self, axioms: impl IntoIterator<Item = Axiom>) {
        for axiom in axioms {
            self.insert(axiom);
        }
    }

    pub fn retain(&mut self, keep: impl FnMut(&Axiom) -> bool) {
        self.axioms.retain(keep);
    }

    pub fn count_by_kind(&self, kind: AxiomKind) -> usize {
        self.axioms.iter().filter(|a| a.kind() == kind).count()
    }

    /// Every entity mentioned anywhere in the ontology.
    pub fn signature(&self) -> BTreeSet<EntityRef> {
        let mut out = BTreeSet::new();
        for axiom in &self.axioms {
            axiom.for_each_entity(&mut |e| {
                out.insert(e.clone());
            });
        }
        out
    }

    pub fn declared(&self) -> BTreeSet<EntityRef> {
        self.axioms
            .iter()
            .filter_map(|a| match a {
                Axiom::Declaration { entity, .. } => Some(entity.clone()),
                _ => None,
            })
            .collect()
    }

    /// Entities that are mentioned but never declared.
    pub fn undeclared_references(&self) -> BTreeSet<EntityRef> {
        let declared = self.declared();
        self.signature().into_iter().filter(|e| !declared.contains(e)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(label: &str) -> EntityRef {
        EntityRef::new(label, format!("http://example.org/t#{label}")).unwrap()
    }

    fn empty() -> Ontology {
        Ontology::new("http://example.org/t", "http://example.org/t#")
    }

    #[test]
    fn labels_are_trimmed_and_checked() {
        assert_eq!(check_label("  Gene \t").unwrap(), "Gene");
        assert_eq!(check_label("   "), Err(ModelError::EmptyLabel));
        assert!(matches!(check_label("a\u{7}b"), Err(ModelError::ControlCharacter(_))));
    }

    #[test]
    fn iri_validation() {
        assert!(is_absolute_iri("http://example.org/x#A"));
        assert!(is_absolute_iri("urn:x-test:1"));
        assert!(!is_absolute_iri("example.org/x"));
        assert!(!is_absolute_iri("http://example.org/a b"));
        assert!(!is_absolute_iri("1http://x"));
        assert!(!is_absolute_iri("http:"));
        assert!(EntityRef::new("A", "not an iri").is_err());
    }

    #[test]
    fn add_axioms_examples() {
        let o = empty();
        let one = o.add_axioms([Axiom::declare_class(&e("Gene"))]);
        assert_eq!(one.len(), 1);
        assert!(o.is_empty(), "input ontology must be unchanged");

        assert_eq!(one.add_axioms([]), one);

        let a = Axiom::subclass(&e("TP53"), e("Gene"));
        let twice = one.add_axioms([a.clone()]).add_axioms([a.clone()]);
        assert_eq!(twice.len(), one.add_axioms([a]).len());
    }

    #[test]
    fn signature_examples() {
        assert!(empty().signature().is_empty());
        let o = empty().add_axioms([Axiom::declare_class(&e("Gene")), Axiom::subclass(&e("TP53"), e("Gene"))]);
        let sig: Vec<_> = o.signature().into_iter().map(|x| x.label().to_string()).collect();
        assert_eq!(sig, vec!["Gene", "TP53"]);
    }

    #[test]
    fn signature_includes_expression_leaves_and_properties() {
        let sup = ClassExpression::Some { property: e("r"), filler: Box::new(e("B").into()) };
        let o = empty().add_axioms([Axiom::subclass(&e("A"), sup), Axiom::label(&e("C"), "C")]);
        let sig: BTreeSet<_> = o.signature().into_iter().map(|x| x.label().to_string()).collect();
        assert_eq!(sig, ["A", "B", "C", "r"].into_iter().map(String::from).collect());
    }

    #[test]
    fn undeclared_reference_examples() {
        assert!(empty().undeclared_references().is_empty());
        let o = empty().add_axioms([Axiom::declare_class(&e("A")), Axiom::subclass(&e("A"), e("B"))]);
        assert_eq!(o.undeclared_references(), [e("B")].into_iter().collect());
    }

    #[test]
    fn deprecated_annotation_must_be_true() {
        assert!(Axiom::deprecated(&e("A")).is_well_formed());
        let bad = Axiom::annotation(&e("A"), AnnotationProperty::Deprecated, AnnotationValue::Boolean(false));
        assert!(!bad.is_well_formed());
        let bad = Axiom::annotation(&e("A"), AnnotationProperty::Deprecated, "yes");
        assert!(!bad.is_well_formed());
    }

    #[test]
    fn single_operand_union_is_malformed() {
        let ax = Axiom::subclass(&e("A"), ClassExpression::Union(vec![e("B").into()]));
        assert!(!ax.is_well_formed());
    }
}
