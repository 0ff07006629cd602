mod common;

use std::collections::BTreeSet;
use std::fs;
use std::io::{Read, Write};
use std::net::TcpListener;
use std::process::Command;
use std::sync::Mutex;
use std::time::Duration;

use common::{data_lines, ontoforge, Run, Workspace};
use ontoforge::cli::{self, ExitStatus};
use ontoforge::ingest::Fetch;
use serde_json::{json, Value};

fn build(ws: &Workspace, extra: &[&str]) -> Run {
    let (m, o) = (ws.s("manifest.json"), ws.s("mdo.ofn"));
    let mut args = vec!["build", m.as_str(), "-o", o.as_str()];
    args.extend_from_slice(extra);
    ontoforge(&args)
}

fn diff(ws: &Workspace, old: &str, new: &str) -> (Vec<String>, Vec<String>, ExitStatus) {
    let run = ontoforge(&["diff", &ws.s(old), &ws.s(new)]);
    let pick = |c: char| run.stdout.lines().filter(|l| l.starts_with(c)).map(|l| l[1..].to_string()).collect::<Vec<_>>();
    (pick('-'), pick('+'), run.status)
}

fn manifest_json(ws: &Workspace) -> Value {
    serde_json::from_str(&ws.read("manifest.json")).unwrap()
}

fn write_manifest(ws: &Workspace, v: &Value) {
    ws.write("manifest.json", &serde_json::to_string_pretty(v).unwrap());
}

#[test]
fn built_ontology_has_closed_signature() {
    let ws = Workspace::new();
    assert_eq!(build(&ws, &[]).status, ExitStatus::Success);
    let text = ws.read("mdo.ofn");
    // Every `:name` mentioned outside a declaration must be declared.
    let mut declared = BTreeSet::new();
    let mut used = BTreeSet::new();
    for line in text.lines().filter(|l| !l.starts_with("Prefix(") && !l.starts_with("Ontology(")) {
        let without_literals: String = line.split('"').step_by(2).collect::<Vec<_>>().join(" ");
        let names = without_literals
            .split([' ', '(', ')'])
            .filter(|t| t.starts_with(':'))
            .map(String::from);
        if line.starts_with("Declaration(") {
            declared.extend(names);
        } else {
            used.extend(names);
        }
    }
    assert!(!declared.is_empty());
    let open: Vec<_> = used.difference(&declared).collect();
    assert!(open.is_empty(), "undeclared: {open:?}");
}

#[test]
fn removing_a_gene_removes_its_three_axioms() {
    let ws = Workspace::new();
    build(&ws, &[]);
    fs::rename(ws.path("mdo.ofn"), ws.path("old.ofn")).unwrap();
    assert_eq!(ws.remove_line("genes.txt", "MTG0042"), 1);
    build(&ws, &[]);
    let (removed, added, status) = diff(&ws, "old.ofn", "mdo.ofn");
    assert_eq!(status, ExitStatus::BuildError);
    assert!(added.is_empty());
    assert_eq!(
        removed,
        vec![
            "Declaration(Class(:MTG0042))".to_string(),
            "SubClassOf(:MTG0042 :Gene)".into(),
            "AnnotationAssertion(rdfs:label :MTG0042 \"MTG0042\")".into(),
        ]
    );
}

#[test]
fn one_new_term_adds_one_registry_line() {
    let ws = Workspace::new();
    let ids = ws.s("ids.tsv");
    assert_eq!(build(&ws, &["--ids", &ids]).status, ExitStatus::Success);
    let before = ws.read("ids.tsv");
    ws.append("papers/paper01.tsv", &["PMID-0000001\tp01 brand new term".to_string()]);
    assert_eq!(build(&ws, &["--ids", &ids]).status, ExitStatus::Success);
    let after = ws.read("ids.tsv");
    assert!(after.starts_with(&before));
    let extra: Vec<&str> = after[before.len()..].lines().collect();
    let next = before.lines().count() + 1;
    assert_eq!(extra, vec![format!("{next}\tp01 brand new term")]);
    assert!(ws.read("mdo.ofn").contains(&format!(":MDO_{next:07}")));
    // Unchanged inputs leave the registry alone.
    build(&ws, &["--ids", &ids]);
    assert_eq!(ws.read("ids.tsv"), after);
}

#[test]
fn registry_from_manifest_is_written_and_locked() {
    let ws = Workspace::new();
    let mut m = manifest_json(&ws);
    m["id_registry"] = json!("registry/ids.tsv");
    write_manifest(&ws, &m);
    fs::create_dir(ws.path("registry")).unwrap();
    assert_eq!(build(&ws, &[]).status, ExitStatus::Success);
    assert!(ws.path("registry/ids.tsv").exists());
    assert!(!ws.path("registry/ids.tsv.lock").exists());

    fs::write(ws.path("registry/ids.tsv.lock"), "").unwrap();
    let before = ws.read("mdo.ofn");
    ws.append("genes.txt", &["MTG8888".to_string()]);
    let run = build(&ws, &[]);
    assert_eq!(run.status, ExitStatus::BuildError);
    assert!(run.stderr.contains("locked"), "{}", run.stderr);
    assert_eq!(ws.read("mdo.ofn"), before);
    assert!(ws.path("registry/ids.tsv.lock").exists(), "someone else's lock must survive");
}

#[test]
fn check_collects_every_undeclared_reference() {
    let ws = Workspace::new();
    ws.remove_line("papers.txt", "PMID-0000003");
    ws.remove_line("papers.txt", "PMID-0000017");
    let run = ontoforge(&["check", &ws.s("manifest.json")]);
    assert_eq!(run.status, ExitStatus::BuildError);
    let expected: usize =
        [3, 17].iter().map(|p| data_lines(&ws.read(&format!("papers/paper{p:02}.tsv"))).len()).sum();
    assert!(run.stdout.contains(&format!("{expected} errors, 0 warnings")), "{}", run.stdout);
    assert!(run.stderr.contains("PMID-0000003") && run.stderr.contains("PMID-0000017"));
    assert!(run.stderr.contains("paper03.tsv:") && run.stderr.contains("paper17.tsv:"));
    // Fail-fast stops at the first.
    let run = build(&ws, &[]);
    assert_eq!(run.stderr.lines().count(), 1, "{}", run.stderr);
    assert!(!ws.path("mdo.ofn").exists());
}

#[test]
fn warnings_gate_on_flag() {
    let ws = Workspace::new();
    ws.remove_line("papers.txt", "PMID-0000009");
    ws.append("deprecations.tsv", &["PMID-0000009".to_string()]);
    let m = ws.s("manifest.json");
    let refs = data_lines(&ws.read("papers/paper09.tsv")).len();

    let run = ontoforge(&["check", &m]);
    assert_eq!(run.status, ExitStatus::Success);
    assert!(run.stdout.contains(&format!("0 errors, {refs} warnings")));
    assert_eq!(ontoforge(&["check", &m, "--fail-on-warnings"]).status, ExitStatus::Warnings);

    let run = build(&ws, &["--fail-on-warnings"]);
    assert_eq!(run.status, ExitStatus::Warnings);
    assert!(!ws.path("mdo.ofn").exists());
    let run = build(&ws, &[]);
    assert_eq!(run.status, ExitStatus::Success);
    assert!(run.stdout.lines().any(|l| l == format!("warnings: {refs}")), "{}", run.stdout);
    assert_eq!(run.stderr.lines().filter(|l| l.contains("warning:")).count(), refs);
}

#[test]
fn deprecation_with_replacement_redirects_references() {
    let ws = Workspace::new();
    ws.remove_line("papers.txt", "PMID-0000002");
    ws.append("deprecations.tsv", &["PMID-0000002\tPMID-0000001".to_string()]);
    assert_eq!(build(&ws, &[]).status, ExitStatus::Success);
    let text = ws.read("mdo.ofn");
    assert!(text.contains("AnnotationAssertion(owl:deprecated :PMID-0000002 \"true\"^^xsd:boolean)"));
    assert!(text.contains("AnnotationAssertion(rdfs:seeAlso :p02_term_001 \"PMID-0000001\")"), "term see-also follows the replacement");
}

#[test]
fn adding_an_annotation_to_every_disease_shows_as_additions() {
    use ontoforge::owl::{AnnotationProperty, EntityRef};
    use ontoforge::patterns::{disease_class, disease_record, Bindings, PatternError, PatternLibrary};
    use ontoforge::serialize::serialize_functional;
    use ontoforge::{build, BuildOptions, OntologyBuilder};

    fn commented(b: &mut OntologyBuilder, bindings: &Bindings) -> Result<EntityRef, PatternError> {
        let e = disease_class(b, &disease_record(bindings))?;
        b.ontology.insert(ontoforge::owl::Axiom::annotation(&e, AnnotationProperty::Comment, "mitochondrial disease"));
        Ok(e)
    }

    let ws = Workspace::new();
    let fetch = ontoforge::ingest::HttpFetcher;
    let old = build(&ws.manifest(), &BuildOptions::default(), &fetch).unwrap();
    let patterns = PatternLibrary::builtin().replace("disease", commented).unwrap();
    let new = build(&ws.manifest(), &BuildOptions { patterns, ..BuildOptions::default() }, &fetch).unwrap();
    ws.write("old.ofn", &serialize_functional(&old.ontology).unwrap());
    ws.write("new.ofn", &serialize_functional(&new.ontology).unwrap());
    let (removed, added, _) = diff(&ws, "old.ofn", "new.ofn");
    assert!(removed.is_empty());
    assert_eq!(added.len(), data_lines(&ws.read("diseases.tsv")).len());
    assert!(added.iter().all(|l| l.starts_with("AnnotationAssertion(rdfs:comment ")));
}

#[test]
fn stats_table_for_fixture() {
    let ws = Workspace::new();
    let run = ontoforge(&["stats", &ws.s("manifest.json")]);
    assert_eq!(run.status, ExitStatus::Success);
    let rows: Vec<Vec<&str>> =
        run.stdout.lines().map(|l| l.split("  ").map(str::trim).filter(|c| !c.is_empty()).collect()).collect();
    assert_eq!(rows[0], vec!["Class type", "Count", "Data source"]);
    let counts: Vec<(&str, &str)> = rows[1..8].iter().map(|r| (r[0], r[1])).collect();
    assert_eq!(
        counts,
        vec![
            ("Disease", "41"),
            ("Gene", "761"),
            ("Human Anatomy", "61"),
            ("Mitochondrial Anatomy", "15"),
            ("Protein", "479"),
            ("Paper", "30"),
            ("Term", "2174"),
        ]
    );
    assert!(rows[4].last().unwrap().contains("inline"));
    assert_eq!(run.stdout.lines().last(), Some("Scaffold total: 1357"));
}

#[test]
fn empty_manifest_gives_zero_table() {
    let ws = Workspace::empty();
    write_manifest(&ws, &json!({"ontology_iri": "http://example.org/e", "base_prefix": "http://example.org/e#", "sources": []}));
    let run = ontoforge(&["stats", &ws.s("manifest.json")]);
    assert_eq!(run.status, ExitStatus::Success);
    let lines: Vec<&str> = run.stdout.lines().collect();
    assert_eq!(lines.len(), 7, "{}", run.stdout);
    for l in &lines[1..6] {
        assert!(l.contains(" 0  -"), "{l}");
    }
    assert_eq!(lines[6], "Scaffold total: 0");
    assert_eq!(build(&ws, &[]).status, ExitStatus::Success);
    assert!(ws.read("mdo.ofn").contains("Declaration(Class(:Term))"));
}

#[test]
fn bad_manifests_are_located() {
    let ws = Workspace::empty();
    ws.write("manifest.json", "{\n  \"ontology_iri\": \"http://x\",\n  \"sources\": [,]\n}\n");
    let run = ontoforge(&["check", &ws.s("manifest.json")]);
    assert_eq!(run.status, ExitStatus::BuildError);
    assert!(run.stderr.contains(":3:"), "{}", run.stderr);

    write_manifest(&ws, &json!({"ontology_iri": "http://x", "base_prefix": "http://x#", "sources": [], "extra": "?"}));
    let run = ontoforge(&["check", &ws.s("manifest.json")]);
    assert!(run.stderr.contains("extra"), "{}", run.stderr);

    write_manifest(
        &ws,
        &json!({"ontology_iri": "http://x", "base_prefix": "http://x#", "sources": [
            {"locator": "g.txt", "format": "name-list", "pattern": "genes", "parent": "Gene"}]}),
    );
    let run = ontoforge(&["check", &ws.s("manifest.json")]);
    assert!(run.stderr.contains("genes") && run.stderr.contains("named-subclass"), "{}", run.stderr);
}

#[test]
fn input_errors_carry_coordinates() {
    let ws = Workspace::new();
    ws.append("genes.txt", &["MTG0005".to_string()]);
    let run = build(&ws, &[]);
    assert_eq!(run.status, ExitStatus::BuildError);
    assert!(run.stderr.contains("genes.txt:"), "{}", run.stderr);
    assert!(run.stderr.contains("MTG0005"));

    let ws = Workspace::new();
    ws.append("proteins.txt", &["MTG0001".to_string()]);
    let run = build(&ws, &[]);
    assert_eq!(run.status, ExitStatus::BuildError);
    assert!(run.stderr.contains("proteins.txt:") && run.stderr.contains("MTG0001"), "{}", run.stderr);

    let ws = Workspace::new();
    fs::write(ws.path("genes.txt"), b"MTG0001\n\xff\xfe\n").unwrap();
    let run = build(&ws, &[]);
    assert!(run.stderr.contains("genes.txt") && run.stderr.contains("line 2"), "{}", run.stderr);
}

#[test]
fn failed_build_leaves_previous_outputs() {
    let ws = Workspace::new();
    let ids = ws.s("ids.tsv");
    assert_eq!(build(&ws, &["--ids", &ids]).status, ExitStatus::Success);
    let (out, reg) = (fs::read(ws.path("mdo.ofn")).unwrap(), fs::read(ws.path("ids.tsv")).unwrap());
    ws.append("genes.txt", &["A brand new gene".to_string()]);
    ws.remove_line("papers.txt", "PMID-0000030");
    assert_eq!(build(&ws, &["--ids", &ids]).status, ExitStatus::BuildError);
    assert_eq!(fs::read(ws.path("mdo.ofn")).unwrap(), out);
    assert_eq!(fs::read(ws.path("ids.tsv")).unwrap(), reg);
    let stray: Vec<_> = fs::read_dir(ws.root())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.contains(".tmp") || n.ends_with(".lock"))
        .collect();
    assert!(stray.is_empty(), "{stray:?}");
}

#[test]
fn check_and_build_agree() {
    type Edit = fn(&Workspace);
    let edits: [Edit; 5] = [
        |_| {},
        |ws| {
            ws.remove_line("papers.txt", "PMID-0000001");
        },
        |ws| {
            ws.remove_line("papers.txt", "PMID-0000001");
            ws.append("deprecations.tsv", &["PMID-0000001".into()]);
        },
        |ws| ws.append("genes.txt", &["MTG0001".into()]),
        |ws| ws.write("deprecations.tsv", "Gene\tGene\n"),
    ];
    for (i, edit) in edits.iter().enumerate() {
        let ws = Workspace::new();
        edit(&ws);
        let check = ontoforge(&["check", &ws.s("manifest.json")]).status;
        let built = build(&ws, &[]).status;
        assert_eq!(check == ExitStatus::Success, built == ExitStatus::Success, "edit {i}: check {check:?}, build {built:?}");
        assert_eq!(ws.path("mdo.ofn").exists(), built == ExitStatus::Success);
    }
}

#[test]
fn usage_errors_exit_3() {
    assert_eq!(ontoforge(&["frobnicate"]).status, ExitStatus::Usage);
    assert_eq!(ontoforge(&["build", "m.json"]).status, ExitStatus::Usage);
    assert_eq!(ontoforge(&["build", "m.json", "-o", "x", "--mode-override", "snapshot"]).status, ExitStatus::Usage);
    assert_eq!(ontoforge(&["--help"]).status, ExitStatus::Success);

    let ws = Workspace::empty();
    ws.write("a.ofn", "not an ontology\n");
    let (_, _, status) = diff(&ws, "a.ofn", "missing.ofn");
    assert_eq!(status, ExitStatus::Usage);

    let proc = Command::new(env!("CARGO_BIN_EXE_ontoforge"))
        .args(["check", "m.json"])
        .env("ONTOFORGE_TIMEOUT_SECS", "soon")
        .output()
        .unwrap();
    assert_eq!(proc.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&proc.stderr).contains("ONTOFORGE_TIMEOUT_SECS"));
}

#[test]
fn identical_documents_diff_clean() {
    let ws = Workspace::new();
    build(&ws, &[]);
    fs::copy(ws.path("mdo.ofn"), ws.path("copy.ofn")).unwrap();
    let (removed, added, status) = diff(&ws, "mdo.ofn", "copy.ofn");
    assert!(removed.is_empty() && added.is_empty());
    assert_eq!(status, ExitStatus::Success);
}

/// Serves `responses` in order, one per connection.
fn serve(responses: Vec<(u16, &'static str)>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for (code, body) in responses {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 1024];
            while !buf.windows(4).any(|w| w == b"\r\n\r\n") {
                let n = stream.read(&mut chunk).unwrap();
                if n == 0 {
                    break;
                }
                buf.extend_from_slice(&chunk[..n]);
            }
            let reason = if code == 200 { "OK" } else { "Not Found" };
            let reply = format!(
                "HTTP/1.1 {code} {reason}\r\nContent-Type: text/plain\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    format!("http://{addr}")
}

fn live_gene_manifest(ws: &Workspace, url: &str) {
    let mut m = manifest_json(ws);
    m["sources"][1] = json!({"locator": url, "mode": "live", "format": "name-list", "pattern": "gene", "parent": "Gene"});
    write_manifest(ws, &m);
}

#[test]
fn live_sources_fetch_over_http() {
    let base = serve(vec![(200, "# served\nLIVE1\nLIVE2\n"), (404, "nope")]);
    let ws = Workspace::new();
    live_gene_manifest(&ws, &format!("{base}/genes.txt"));
    let run = build(&ws, &[]);
    assert_eq!(run.status, ExitStatus::Success, "{}", run.stderr);
    let text = ws.read("mdo.ofn");
    assert!(text.contains("SubClassOf(:LIVE2 :Gene)"));
    assert!(!text.contains(":MTG0001"));

    let run = build(&ws, &[]);
    assert_eq!(run.status, ExitStatus::BuildError);
    assert!(run.stderr.contains("404"), "{}", run.stderr);
}

#[test]
fn unreachable_live_source_aborts() {
    let ws = Workspace::new();
    live_gene_manifest(&ws, "http://127.0.0.1:1/genes.txt");
    let run = build(&ws, &[]);
    assert_eq!(run.status, ExitStatus::BuildError);
    assert!(run.stderr.contains("127.0.0.1:1"), "{}", run.stderr);
    assert!(!ws.path("mdo.ofn").exists());
}

struct Recorder(Mutex<Vec<String>>);

impl Fetch for Recorder {
    fn get(&self, url: &str, _timeout: Duration) -> Result<Vec<u8>, String> {
        self.0.lock().unwrap().push(url.to_string());
        Ok(b"REC1\n".to_vec())
    }
}

#[test]
fn mode_override_controls_the_network() {
    let ws = Workspace::new();
    live_gene_manifest(&ws, "http://example.invalid/genes.txt");
    let recorder = Recorder(Mutex::new(Vec::new()));
    let (m, o) = (ws.s("manifest.json"), ws.s("mdo.ofn"));
    let run = |extra: &[&str]| {
        let mut args = vec!["ontoforge", "build", m.as_str(), "-o", o.as_str()];
        args.extend_from_slice(extra);
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let status = cli::run_with(args, &mut out, &mut err, &recorder);
        (status, String::from_utf8(err).unwrap())
    };
    let (status, err) = run(&["--mode-override", "release"]);
    assert_eq!(status, ExitStatus::BuildError);
    assert!(err.contains("release"), "{err}");
    assert!(recorder.0.lock().unwrap().is_empty());
    assert!(!ws.path("mdo.ofn").exists());

    let (status, _) = run(&["--mode-override", "live"]);
    assert_eq!(status, ExitStatus::Success);
    assert_eq!(*recorder.0.lock().unwrap(), vec!["http://example.invalid/genes.txt".to_string()]);
    // File sources never go through the fetcher.
    let (status, _) = run(&[]);
    assert_eq!(status, ExitStatus::Success);
    assert_eq!(recorder.0.lock().unwrap().len(), 2);
}
