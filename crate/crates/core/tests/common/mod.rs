#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use ontoforge::cli::{self, ExitStatus};
use tempfile::TempDir;

pub fn fixture_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("mdo")
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let dest = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &dest);
        } else {
            fs::copy(entry.path(), dest).unwrap();
        }
    }
}

/// A scratch copy of the bundled fixture.
pub struct Workspace {
    dir: TempDir,
}

impl Workspace {
    pub fn new() -> Self {
        let dir = TempDir::new().unwrap();
        copy_dir(&fixture_root(), dir.path());
        Workspace { dir }
    }

    /// An empty scratch directory.
    pub fn empty() -> Self {
        Workspace { dir: TempDir::new().unwrap() }
    }

    pub fn root(&self) -> &Path {
        self.dir.path()
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn manifest(&self) -> PathBuf {
        self.path("manifest.json")
    }

    pub fn read(&self, rel: &str) -> String {
        fs::read_to_string(self.path(rel)).unwrap()
    }

    pub fn write(&self, rel: &str, text: &str) {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).unwrap();
        }
        fs::write(p, text).unwrap();
    }

    pub fn append(&self, rel: &str, lines: &[String]) {
        let mut text = self.read(rel);
        if !text.is_empty() && !text.ends_with('\n') {
            text.push('\n');
        }
        for l in lines {
            text.push_str(l);
            text.push('\n');
        }
        self.write(rel, &text);
    }

    /// Drops every line equal to `line`; returns how many went.
    pub fn remove_line(&self, rel: &str, line: &str) -> usize {
        let text = self.read(rel);
        let kept: Vec<&str> = text.lines().filter(|l| *l != line).collect();
        let removed = text.lines().count() - kept.len();
        self.write(rel, &(kept.join("\n") + "\n"));
        removed
    }

    pub fn s(&self, rel: &str) -> String {
        self.path(rel).display().to_string()
    }
}

pub struct Run {
    pub status: ExitStatus,
    pub stdout: String,
    pub stderr: String,
}

pub fn ontoforge(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("ontoforge").chain(args.iter().copied());
    let status = cli::run(argv, &mut out, &mut err);
    Run { status, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

pub fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')).collect()
}
