use std::io::Write;
use std::path::Path;

use serde_json::Value;

/// Result of one subcommand: a JSON report, an optional table and a status.
pub struct Artifacts {
    pub stem: String,
    pub report: Value,
    /// CSV column header and body rows.
    pub table: Option<(String, Vec<String>)>,
    /// `key: value` lines placed in the CSV comment header.
    pub meta: Vec<(String, String)>,
    pub status: Status,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    NotConverged,
    InvariantViolated,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::NotConverged => 2,
            Status::InvariantViolated => 3,
        }
    }

    pub fn from_flags(converged: bool, invariants_hold: bool) -> Status {
        if !converged {
            Status::NotConverged
        } else if !invariants_hold {
            Status::InvariantViolated
        } else {
            Status::Ok
        }
    }
}

pub fn render_csv(a: &Artifacts, invocation: &str) -> Option<String> {
    let (header, rows) = a.table.as_ref()?;
    let mut s = String::new();
    s.push_str(&format!("# tugwar {}\n", env!("CARGO_PKG_VERSION")));
    s.push_str(&format!("# invocation: {invocation}\n"));
    for (k, v) in &a.meta {
        s.push_str(&format!("# {k}: {v}\n"));
    }
    s.push_str(header);
    s.push('\n');
    for r in rows {
        s.push_str(r);
        s.push('\n');
    }
    Some(s)
}

pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name)).map_err(|e| e.error)?;
    Ok(())
}
