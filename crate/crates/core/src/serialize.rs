//! Deterministic OWL 2 functional-style output, axiom diffs and build
//! statistics.
//!
//! Documents have a fixed shape: sorted `Prefix(...)` lines, a blank line,
//! `Ontology(<iri>`, one axiom per line, and a closing `)`. Axioms are
//! ordered by kind (declarations, then subclass axioms, then annotation
//! assertions) and then by their rendered text.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::owl::{AnnotationValue, Axiom, AxiomKind, ClassExpression, EntityRef, EntitySort, Ontology, XSD};
use crate::patterns::TopLevel;
use crate::registry::Warning;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SerializeError {
    #[error("refusing to serialize: undeclared entities {}", .0.join(", "))]
    OpenSignature(Vec<String>),
}

struct Abbreviator<'a> {
    prefixes: Vec<(&'a str, &'a str)>,
}

impl<'a> Abbreviator<'a> {
    fn new(ontology: &'a Ontology) -> Self {
        // Longest stem first so nested namespaces abbreviate to the closest.
        let mut prefixes: Vec<(&str, &str)> = ontology.prefixes().iter().map(|(p, s)| (p.as_str(), s.as_str())).collect();
        prefixes.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(b.0)));
        Abbreviator { prefixes }
    }

    fn iri(&self, iri: &str, out: &mut String) {
        for (prefix, stem) in &self.prefixes {
            if let Some(local) = iri.strip_prefix(stem) {
                if is_simple_local(local) {
                    out.push_str(prefix);
                    out.push(':');
                    out.push_str(local);
                    return;
                }
            }
        }
        out.push('<');
        out.push_str(iri);
        out.push('>');
    }
}

fn is_simple_local(local: &str) -> bool {
    let mut chars = local.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn push_literal(value: &str, out: &mut String) {
    out.push('"');
    for c in value.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
}

fn render_expression(ab: &Abbreviator<'_>, ce: &ClassExpression, out: &mut String) {
    let nary = |name: &str, ops: &[ClassExpression], out: &mut String| {
        out.push_str(name);
        out.push('(');
        for (i, op) in ops.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            render_expression(ab, op, out);
        }
        out.push(')');
    };
    match ce {
        ClassExpression::Named(e) => ab.iri(e.iri(), out),
        ClassExpression::Some { property, filler } | ClassExpression::Only { property, filler } => {
            out.push_str(if matches!(ce, ClassExpression::Some { .. }) { "ObjectSomeValuesFrom(" } else { "ObjectAllValuesFrom(" });
            ab.iri(property.iri(), out);
            out.push(' ');
            render_expression(ab, filler, out);
            out.push(')');
        }
        ClassExpression::Union(ops) => nary("ObjectUnionOf", ops, out),
        ClassExpression::Intersection(ops) => nary("ObjectIntersectionOf", ops, out),
    }
}

fn render_axiom(ab: &Abbreviator<'_>, axiom: &Axiom) -> String {
    let mut out = String::new();
    match axiom {
        Axiom::Declaration { entity, sort } => {
            out.push_str("Declaration(");
            out.push_str(match sort {
                EntitySort::Class => "Class(",
                EntitySort::ObjectProperty => "ObjectProperty(",
                EntitySort::AnnotationProperty => "AnnotationProperty(",
            });
            ab.iri(entity.iri(), &mut out);
            out.push_str("))");
        }
        Axiom::SubClassOf { sub, sup } => {
            out.push_str("SubClassOf(");
            ab.iri(sub.iri(), &mut out);
            out.push(' ');
            render_expression(ab, sup, &mut out);
            out.push(')');
        }
        Axiom::AnnotationAssertion { subject, property, value } => {
            out.push_str("AnnotationAssertion(");
            ab.iri(&property.iri(), &mut out);
            out.push(' ');
            ab.iri(subject.iri(), &mut out);
            out.push(' ');
            match value {
                AnnotationValue::Literal(s) => push_literal(s, &mut out),
                AnnotationValue::Boolean(b) => {
                    push_literal(if *b { "true" } else { "false" }, &mut out);
                    out.push_str("^^");
                    ab.iri(&format!("{XSD}boolean"), &mut out);
                }
            }
            out.push(')');
        }
    }
    out
}

/// Axiom lines in canonical order.
pub fn canonical_axiom_lines(ontology: &Ontology) -> Vec<String> {
    let ab = Abbreviator::new(ontology);
    let mut lines: Vec<(AxiomKind, String)> = ontology.axioms().iter().map(|a| (a.kind(), render_axiom(&ab, a))).collect();
    lines.sort();
    lines.into_iter().map(|(_, l)| l).collect()
}

/// Renders the ontology. Structurally equal ontologies give identical
/// bytes.
pub fn serialize_functional(ontology: &Ontology) -> Result<String, SerializeError> {
    let open = ontology.undeclared_references();
    if !open.is_empty() {
        return Err(SerializeError::OpenSignature(open.into_iter().map(|e| e.label().to_string()).collect()));
    }
    let mut out = String::new();
    for (prefix, stem) in ontology.prefixes() {
        out.push_str(&format!("Prefix({prefix}:=<{stem}>)\n"));
    }
    out.push('\n');
    out.push_str(&format!("Ontology(<{}>\n", ontology.iri()));
    for line in canonical_axiom_lines(ontology) {
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str(")\n");
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AxiomDiff {
    pub added: BTreeSet<Axiom>,
    pub removed: BTreeSet<Axiom>,
}

impl AxiomDiff {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty()
    }

    /// Applies the diff to an axiom set.
    pub fn apply(&self, axioms: &BTreeSet<Axiom>) -> BTreeSet<Axiom> {
        axioms.difference(&self.removed).cloned().chain(self.added.iter().cloned()).collect()
    }
}

pub fn diff(a: &Ontology, b: &Ontology) -> AxiomDiff {
    AxiomDiff {
        added: b.axioms().difference(a.axioms()).cloned().collect(),
        removed: a.axioms().difference(b.axioms()).cloned().collect(),
    }
}

pub const SUPPORT_GROUP: &str = "support";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildReport {
    /// Class count per top-level label, plus [`SUPPORT_GROUP`] for classes
    /// with no top-level ancestor (the roots themselves included).
    pub per_parent: BTreeMap<String, usize>,
    pub scaffold_total: usize,
    pub term_layer_total: usize,
    pub warning_count: usize,
    pub axioms_by_kind: BTreeMap<&'static str, usize>,
}

impl BuildReport {
    pub fn count(&self, top: TopLevel) -> usize {
        self.per_parent.get(top.label()).copied().unwrap_or(0)
    }

    pub fn support(&self) -> usize {
        self.per_parent.get(SUPPORT_GROUP).copied().unwrap_or(0)
    }

    pub fn total_classes(&self) -> usize {
        self.per_parent.values().sum()
    }
}

impl fmt::Display for BuildReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = TopLevel::ALL.iter().map(|t| t.display_name().len()).max().unwrap_or(0).max(SUPPORT_GROUP.len());
        for top in TopLevel::ALL {
            writeln!(f, "{:<width$}  {:>6}", top.display_name(), self.count(top))?;
        }
        writeln!(f, "{:<width$}  {:>6}", SUPPORT_GROUP, self.support())?;
        writeln!(f, "scaffold total: {}", self.scaffold_total)?;
        writeln!(f, "term layer: {}", self.term_layer_total)?;
        let kinds: Vec<String> = AxiomKind::ALL
            .iter()
            .map(|k| format!("{} {}", k.name(), self.axioms_by_kind.get(k.name()).copied().unwrap_or(0)))
            .collect();
        writeln!(f, "axioms: {}", kinds.join(", "))?;
        write!(f, "warnings: {}", self.warning_count)
    }
}

/// Groups class declarations by their nearest asserted top-level ancestor,
/// following named superclass edges only.
pub fn stats(ontology: &Ontology, warnings: &[Warning]) -> BuildReport {
    let mut parents: BTreeMap<&EntityRef, BTreeSet<&EntityRef>> = BTreeMap::new();
    for axiom in ontology.axioms() {
        if let Axiom::SubClassOf { sub, sup: ClassExpression::Named(sup) } = axiom {
            parents.entry(sub).or_default().insert(sup);
        }
    }
    let top_of = |e: &EntityRef| TopLevel::from_label(e.label());

    let mut per_parent: BTreeMap<String, usize> = TopLevel::ALL.iter().map(|t| (t.label().to_string(), 0)).collect();
    per_parent.insert(SUPPORT_GROUP.to_string(), 0);
    for axiom in ontology.axioms() {
        let Axiom::Declaration { entity, sort: EntitySort::Class } = axiom else { continue };
        // Breadth-first, so the closest root wins; ties go to the sorted
        // parent order.
        let mut seen = BTreeSet::from([entity]);
        let mut queue: VecDeque<&EntityRef> = VecDeque::from([entity]);
        let mut group = None;
        'search: while let Some(cur) = queue.pop_front() {
            for p in parents.get(cur).into_iter().flatten() {
                if let Some(top) = top_of(p) {
                    group = Some(top);
                    break 'search;
                }
                if seen.insert(p) {
                    queue.push_back(p);
                }
            }
        }
        let key = group.map_or(SUPPORT_GROUP, |t| t.label());
        *per_parent.get_mut(key).expect("all groups pre-seeded") += 1;
    }

    let scaffold_total = TopLevel::SCAFFOLD.iter().map(|t| per_parent[t.label()]).sum();
    let term_layer_total = per_parent[TopLevel::Term.label()];
    let axioms_by_kind = AxiomKind::ALL.iter().map(|k| (k.name(), ontology.count_by_kind(*k))).collect();
    BuildReport { per_parent, scaffold_total, term_layer_total, warning_count: warnings.len(), axioms_by_kind }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ReadError {
    pub line: usize,
    pub message: String,
}

/// A parsed term of the canonical syntax, with prefixed names expanded.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Iri(String),
    Literal { value: String, datatype: Option<String> },
    Call { head: String, args: Vec<Term> },
}

/// A document produced by [`serialize_functional`], read back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalDocument {
    pub ontology_iri: String,
    pub prefixes: BTreeMap<String, String>,
    /// Parsed axiom to the line it was read from.
    pub axioms: BTreeMap<Term, String>,
}

/// Reads this tool's own output. Anything outside the canonical subset is
/// rejected.
pub fn read_functional(text: &str) -> Result<CanonicalDocument, ReadError> {
    let err = |line: usize, message: &str| ReadError { line, message: message.to_string() };
    let lines: Vec<&str> = text.split('\n').collect();
    if lines.last() != Some(&"") {
        return Err(err(lines.len(), "document must end with a newline"));
    }
    let lines = &lines[..lines.len() - 1];
    let mut idx = 0;
    let mut prefixes = BTreeMap::new();
    while idx < lines.len() && lines[idx].starts_with("Prefix(") {
        let body = lines[idx]
            .strip_prefix("Prefix(")
            .and_then(|l| l.strip_suffix(">)"))
            .ok_or_else(|| err(idx + 1, "malformed Prefix declaration"))?;
        let (name, stem) = body.split_once(":=<").ok_or_else(|| err(idx + 1, "malformed Prefix declaration"))?;
        if !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(err(idx + 1, "malformed prefix name"));
        }
        prefixes.insert(name.to_string(), stem.to_string());
        idx += 1;
    }
    if lines.get(idx) != Some(&"") {
        return Err(err(idx + 1, "expected a blank line after the prefixes"));
    }
    idx += 1;
    let ontology_iri = lines
        .get(idx)
        .and_then(|l| l.strip_prefix("Ontology(<"))
        .and_then(|l| l.strip_suffix('>'))
        .ok_or_else(|| err(idx + 1, "expected Ontology(<iri>"))?
        .to_string();
    idx += 1;
    let mut axioms = BTreeMap::new();
    while idx < lines.len() && lines[idx] != ")" {
        let line = lines[idx];
        let term = TermParser { src: line.as_bytes(), pos: 0, prefixes: &prefixes }.parse_line().map_err(|m| err(idx + 1, &m))?;
        check_axiom(&term).map_err(|m| err(idx + 1, &m))?;
        axioms.insert(term, line.to_string());
        idx += 1;
    }
    if idx + 1 != lines.len() {
        return Err(err(idx + 1, "expected a single closing ')' at the end of the document"));
    }
    Ok(CanonicalDocument { ontology_iri, prefixes, axioms })
}

struct TermParser<'a> {
    src: &'a [u8],
    pos: usize,
    prefixes: &'a BTreeMap<String, String>,
}

impl TermParser<'_> {
    fn parse_line(mut self) -> Result<Term, String> {
        let term = self.term()?;
        if self.pos != self.src.len() {
            return Err(format!("trailing input at column {}", self.pos + 1));
        }
        Ok(term)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn take_while(&mut self, pred: impl Fn(u8) -> bool) -> &str {
        let start = self.pos;
        while self.peek().is_some_and(&pred) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos]).expect("split on ASCII boundaries")
    }

    fn term(&mut self) -> Result<Term, String> {
        match self.peek() {
            Some(b'<') => {
                self.pos += 1;
                let iri = self.take_while(|b| b != b'>').to_string();
                if self.peek() != Some(b'>') {
                    return Err("unterminated IRI".into());
                }
                self.pos += 1;
                Ok(Term::Iri(iri))
            }
            Some(b'"') => self.literal(),
            Some(_) => {
                let word = self.take_while(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b':' | b'%')).to_string();
                if word.is_empty() {
                    return Err(format!("unexpected character at column {}", self.pos + 1));
                }
                if self.peek() == Some(b'(') {
                    self.pos += 1;
                    let mut args = Vec::new();
                    loop {
                        args.push(self.term()?);
                        match self.peek() {
                            Some(b' ') => self.pos += 1,
                            Some(b')') => {
                                self.pos += 1;
                                return Ok(Term::Call { head: word, args });
                            }
                            _ => return Err(format!("expected ' ' or ')' at column {}", self.pos + 1)),
                        }
                    }
                }
                self.expand(&word)
            }
            None => Err("unexpected end of line".into()),
        }
    }

    fn expand(&self, word: &str) -> Result<Term, String> {
        let (prefix, local) = word.split_once(':').ok_or_else(|| format!("expected a prefixed name, found {word:?}"))?;
        let stem = self.prefixes.get(prefix).ok_or_else(|| format!("undeclared prefix {prefix:?}"))?;
        Ok(Term::Iri(format!("{stem}{local}")))
    }

    fn literal(&mut self) -> Result<Term, String> {
        self.pos += 1;
        let mut bytes = Vec::new();
        loop {
            match self.peek() {
                None => return Err("unterminated string literal".into()),
                Some(b'"') => {
                    self.pos += 1;
                    break;
                }
                Some(b'\\') => {
                    self.pos += 1;
                    match self.peek() {
                        Some(c @ (b'"' | b'\\')) => bytes.push(c),
                        _ => return Err("invalid escape in string literal".into()),
                    }
                    self.pos += 1;
                }
                Some(c) => {
                    bytes.push(c);
                    self.pos += 1;
                }
            }
        }
        let value = String::from_utf8(bytes).map_err(|_| "invalid UTF-8 in literal".to_string())?;
        let datatype = if self.src[self.pos..].starts_with(b"^^") {
            self.pos += 2;
            match self.term()? {
                Term::Iri(iri) => Some(iri),
                _ => return Err("datatype must be an IRI".into()),
            }
        } else {
            None
        };
        Ok(Term::Literal { value, datatype })
    }
}

fn check_axiom(term: &Term) -> Result<(), String> {
    let is_iri = |t: &Term| matches!(t, Term::Iri(_));
    let Term::Call { head, args } = term else {
        return Err("expected an axiom".into());
    };
    let ok = match (head.as_str(), args.as_slice()) {
        ("Declaration", [Term::Call { head, args }]) => {
            matches!(head.as_str(), "Class" | "ObjectProperty" | "AnnotationProperty") && args.len() == 1 && is_iri(&args[0])
        }
        ("SubClassOf", [sub, sup]) => is_iri(sub) && is_class_expression(sup),
        ("AnnotationAssertion", [p, s, Term::Literal { .. }]) => is_iri(p) && is_iri(s),
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("not a canonical {head} axiom"))
    }
}

fn is_class_expression(term: &Term) -> bool {
    match term {
        Term::Iri(_) => true,
        Term::Literal { .. } => false,
        Term::Call { head, args } => match head.as_str() {
            "ObjectSomeValuesFrom" | "ObjectAllValuesFrom" => {
                args.len() == 2 && matches!(args[0], Term::Iri(_)) && is_class_expression(&args[1])
            }
            "ObjectUnionOf" | "ObjectIntersectionOf" => args.len() >= 2 && args.iter().all(is_class_expression),
            _ => false,
        },
    }
}

/// Line-level diff of two canonical documents: `(removed, added)`, each in
/// canonical line order.
pub fn diff_documents(old: &CanonicalDocument, new: &CanonicalDocument) -> (Vec<String>, Vec<String>) {
    let collect = |from: &CanonicalDocument, other: &CanonicalDocument| {
        let mut v: Vec<String> =
            from.axioms.iter().filter(|(k, _)| !other.axioms.contains_key(*k)).map(|(_, line)| line.clone()).collect();
        v.sort_by(|a, b| line_rank(a).cmp(&line_rank(b)).then(a.cmp(b)));
        v
    };
    (collect(old, new), collect(new, old))
}

fn line_rank(line: &str) -> u8 {
    if line.starts_with("Declaration(") {
        0
    } else if line.starts_with("SubClassOf(") {
        1
    } else {
        2
    }
}
