//! CSV/JSON emission. Files are written under temporary names and renamed
//! only once every file of a command is complete.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{RunConfig, DEFAULTS_VERSION};
use crate::error::CliError;

/// Shortest round-trip representation; scientific notation outside
/// `[1e-4, 1e15)`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Accumulates one CSV document.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(command: &str, config: &RunConfig, columns: &[&str]) -> Self {
        Self::with_notes(command, config, &[], columns)
    }

    pub fn with_notes(command: &str, config: &RunConfig, notes: &[String], columns: &[&str]) -> Self {
        let mut text = String::new();
        let _ = writeln!(
            text,
            "# fluxnoise {} (defaults v{DEFAULTS_VERSION})",
            env!("CARGO_PKG_VERSION")
        );
        let _ = writeln!(text, "# command: {command}");
        let _ = writeln!(text, "# seed: {}", config.seed);
        let _ = writeln!(text, "# config_sha256: {}", config.sha256());
        let _ = writeln!(text, "# config: {}", config.to_json());
        for n in notes {
            let _ = writeln!(text, "# {n}");
        }
        text.push_str(&columns.join(","));
        text.push('\n');
        Self { text }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut first = true;
        for f in fields {
            if !first {
                self.text.push(',');
            }
            self.text.push_str(f.as_ref());
            first = false;
        }
        self.text.push('\n');
    }

    pub fn comment(&mut self, line: &str) {
        let _ = writeln!(self.text, "# {line}");
    }

    pub fn finish(self) -> String {
        self.text
    }
}

/// Files of one command, committed together.
pub struct OutputSet {
    dir: PathBuf,
    pending: Vec<(PathBuf, PathBuf)>,
    committed: bool,
}

impl OutputSet {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            pending: Vec::new(),
            committed: false,
        })
    }

    pub fn add(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let target = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.partial"));
        fs::write(&tmp, contents)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", tmp.display())))?;
        self.pending.push((tmp, target));
        Ok(())
    }

    pub fn commit(mut self) -> Result<Vec<PathBuf>, CliError> {
        let mut done = Vec::new();
        for (tmp, target) in &self.pending {
            if let Err(e) = fs::rename(tmp, target) {
                for d in &done {
                    let _ = fs::remove_file(d);
                }
                return Err(CliError::Runtime(format!("cannot move {}: {e}", target.display())));
            }
            done.push(target.clone());
        }
        self.committed = true;
        Ok(done)
    }
}

impl Drop for OutputSet {
    fn drop(&mut self) {
        if !self.committed {
            for (tmp, _) in &self.pending {
                let _ = fs::remove_file(tmp);
            }
        }
    }
}
