//! Class-expression combinators with broadcasting, and class frames.
//!
//! `some` and `only` broadcast a property over a sequence of fillers,
//! producing one restriction per filler. `some_only` adds the covering
//! axiom: a universal restriction over the union of all fillers.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::owl::{AnnotationProperty, AnnotationValue, Axiom, ClassExpression, EntityRef, EntitySort, Ontology};
use crate::registry::{Environment, ResolveError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("broadcast over empty operand list")]
    EmptyBroadcast,
    #[error("{0} over empty operand list")]
    EmptyOperands(&'static str),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error("{site}: {label:?} is used as {expected:?} but declared as {found:?}")]
    WrongSort { label: String, expected: EntitySort, found: EntitySort, site: String },
    #[error("{site}: label collision: {label:?} is already defined differently")]
    LabelCollision { label: String, site: String },
}

fn broadcast(
    property: &EntityRef,
    fillers: &[ClassExpression],
    make: impl Fn(EntityRef, Box<ClassExpression>) -> ClassExpression,
) -> Result<Vec<ClassExpression>, ExprError> {
    if fillers.is_empty() {
        return Err(ExprError::EmptyBroadcast);
    }
    Ok(fillers.iter().map(|f| make(property.clone(), Box::new(f.clone()))).collect())
}

/// One existential restriction per filler, in order.
pub fn some(property: &EntityRef, fillers: &[ClassExpression]) -> Result<Vec<ClassExpression>, ExprError> {
    broadcast(property, fillers, |property, filler| ClassExpression::Some { property, filler })
}

/// One universal restriction per filler, in order.
pub fn only(property: &EntityRef, fillers: &[ClassExpression]) -> Result<Vec<ClassExpression>, ExprError> {
    broadcast(property, fillers, |property, filler| ClassExpression::Only { property, filler })
}

fn connective(
    operands: &[ClassExpression],
    what: &'static str,
    split: impl Fn(&ClassExpression) -> Option<&Vec<ClassExpression>>,
    build: impl Fn(Vec<ClassExpression>) -> ClassExpression,
) -> Result<ClassExpression, ExprError> {
    let mut flat = Vec::with_capacity(operands.len());
    for op in operands {
        match split(op) {
            Some(inner) => flat.extend(inner.iter().cloned()),
            None => flat.push(op.clone()),
        }
    }
    match flat.len() {
        0 => Err(ExprError::EmptyOperands(what)),
        1 => Ok(flat.pop().unwrap()),
        _ => Ok(build(flat)),
    }
}

/// Order-preserving union. A single operand is returned as-is and nested
/// unions are flattened into their parent.
pub fn union(operands: &[ClassExpression]) -> Result<ClassExpression, ExprError> {
    connective(
        operands,
        "union",
        |op| match op {
            ClassExpression::Union(v) => Some(v),
            _ => None,
        },
        ClassExpression::Union,
    )
}

pub fn intersection(operands: &[ClassExpression]) -> Result<ClassExpression, ExprError> {
    connective(
        operands,
        "intersection",
        |op| match op {
            ClassExpression::Intersection(v) => Some(v),
            _ => None,
        },
        ClassExpression::Intersection,
    )
}

/// `some` over the fillers followed by the covering universal over their
/// union: `n` fillers give `n + 1` expressions.
pub fn some_only(property: &EntityRef, fillers: &[ClassExpression]) -> Result<Vec<ClassExpression>, ExprError> {
    let mut out = some(property, fillers)?;
    out.push(ClassExpression::Only { property: property.clone(), filler: Box::new(union(fillers)?) });
    Ok(out)
}

/// What gets said about a class: superclasses, a label and any further
/// annotations. A frame emits nothing until attached with
/// [`OntologyBuilder::owl_class`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Frame {
    pub supers: Vec<ClassExpression>,
    pub label: Option<String>,
    pub annotations: Vec<(AnnotationProperty, AnnotationValue)>,
}

impl Frame {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn sup(mut self, expr: impl Into<ClassExpression>) -> Self {
        self.supers.push(expr.into());
        self
    }

    pub fn supers(mut self, exprs: impl IntoIterator<Item = ClassExpression>) -> Self {
        self.supers.extend(exprs);
        self
    }

    pub fn annotation(mut self, property: AnnotationProperty, value: impl Into<AnnotationValue>) -> Self {
        self.annotations.push((property, value.into()));
        self
    }

    fn axioms_for(&self, class: &EntityRef) -> BTreeSet<Axiom> {
        let mut out = BTreeSet::new();
        out.insert(Axiom::declare_class(class));
        for sup in &self.supers {
            out.insert(Axiom::subclass(class, sup.clone()));
        }
        if let Some(label) = &self.label {
            out.insert(Axiom::label(class, label.clone()));
        }
        for (property, value) in &self.annotations {
            out.insert(Axiom::annotation(class, *property, value.clone()));
        }
        out
    }
}

/// Pairs an [`Environment`] with the [`Ontology`] under construction.
///
/// Classes defined through [`owl_class`](Self::owl_class) remember the
/// axioms they were defined with; redefining a label with exactly the same
/// axioms is a no-op, anything else is a label collision.
#[derive(Debug, Clone)]
pub struct OntologyBuilder {
    pub env: Environment,
    pub ontology: Ontology,
    definitions: BTreeMap<String, BTreeSet<Axiom>>,
    site: String,
}

impl OntologyBuilder {
    pub fn new(env: Environment, ontology: Ontology) -> Self {
        OntologyBuilder { env, ontology, definitions: BTreeMap::new(), site: String::from("<builder>") }
    }

    /// Sets the location attached to diagnostics raised from here on.
    pub fn set_site(&mut self, site: impl Into<String>) {
        self.site = site.into();
    }

    pub fn site(&self) -> &str {
        &self.site
    }

    /// Resolves a label at the current site.
    pub fn resolve(&mut self, label: &str) -> Result<EntityRef, ExprError> {
        Ok(self.env.resolve(label, &self.site)?)
    }

    pub fn definition(&self, label: &str) -> Option<&BTreeSet<Axiom>> {
        self.definitions.get(label)
    }

    /// Declares an object property usable in restrictions.
    pub fn object_property(&mut self, name: &str) -> Result<EntityRef, ExprError> {
        if let Some((_, sort)) = self.env.lookup(name.trim()) {
            if sort != EntitySort::ObjectProperty {
                return Err(ExprError::LabelCollision { label: name.trim().to_string(), site: self.site.clone() });
            }
        }
        let entity = self.env.declare(name, EntitySort::ObjectProperty, &self.site)?;
        self.ontology.insert(Axiom::Declaration { entity: entity.clone(), sort: EntitySort::ObjectProperty });
        Ok(entity)
    }

    /// Declares a class and attaches the frame to it.
    pub fn owl_class(&mut self, name: &str, frame: &Frame) -> Result<EntityRef, ExprError> {
        for sup in &frame.supers {
            self.check_expression(sup)?;
        }
        let class = self.env.reference_for(name, &self.site)?;
        let axioms = frame.axioms_for(&class);
        if let Some(existing) = self.definitions.get(class.label()) {
            if *existing == axioms {
                return Ok(class);
            }
            return Err(ExprError::LabelCollision { label: class.label().to_string(), site: self.site.clone() });
        }
        if self.env.is_declared(class.label()) {
            return Err(ExprError::LabelCollision { label: class.label().to_string(), site: self.site.clone() });
        }
        let class = self.env.declare(class.label(), EntitySort::Class, &self.site)?;
        self.ontology.extend(axioms.iter().cloned());
        self.definitions.insert(class.label().to_string(), axioms);
        Ok(class)
    }

    fn check_expression(&self, expr: &ClassExpression) -> Result<(), ExprError> {
        let mut result = Ok(());
        expr.for_each_entity(&mut |entity, expected| {
            if result.is_err() {
                return;
            }
            result = match self.env.check_reference(entity, &self.site) {
                Ok(found) if found == expected => Ok(()),
                Ok(found) => Err(ExprError::WrongSort {
                    label: entity.label().to_string(),
                    expected,
                    found,
                    site: self.site.clone(),
                }),
                Err(e) => Err(e.into()),
            };
        });
        result
    }
}
