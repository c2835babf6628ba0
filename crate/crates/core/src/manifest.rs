//! Corpus manifest: one recording per line, `person_id role relative_path`.
//!
//! Fields are whitespace separated; the path is the remainder of the line and
//! may contain spaces. Blank lines and lines starting with `#` are ignored.
//! Paths are resolved against the manifest's directory.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Enroll,
    Verify,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Enroll => "enroll",
            Role::Verify => "verify",
        })
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "enroll" => Ok(Role::Enroll),
            "verify" => Ok(Role::Verify),
            other => Err(Error::Manifest(format!("unknown recording role {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub person_id: String,
    pub role: Role,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

pub const MANIFEST_HEADER: &str = "# heartid corpus manifest v1";

impl Manifest {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Manifest> {
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.splitn(3, char::is_whitespace);
            let (Some(id), Some(role), Some(path)) = (fields.next(), fields.next(), fields.next()) else {
                return Err(Error::Manifest(format!(
                    "line {}: expected `person_id role path`",
                    lineno + 1
                )));
            };
            let path = path.trim();
            if path.is_empty() {
                return Err(Error::Manifest(format!("line {}: empty path", lineno + 1)));
            }
            entries.push(ManifestEntry {
                person_id: id.to_string(),
                role: role
                    .parse()
                    .map_err(|e| Error::Manifest(format!("line {}: {e}", lineno + 1)))?,
                path: PathBuf::from(path),
            });
        }
        Ok(Manifest {
            entries,
            base_dir: base_dir.into(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Manifest::parse(&text, base)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!("{} {} {}\n", e.person_id, e.role, e.path.display()));
        }
        out
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    /// Person ids in first-appearance order.
    pub fn identities(&self) -> Vec<String> {
        let mut ids: Vec<String> = Vec::new();
        for e in &self.entries {
            if !ids.contains(&e.person_id) {
                ids.push(e.person_id.clone());
            }
        }
        ids
    }

    pub fn recordings(&self, person_id: &str, role: Role) -> Vec<&ManifestEntry> {
        self.entries
            .iter()
            .filter(|e| e.person_id == person_id && e.role == role)
            .collect()
    }

    /// Every identity needs an enrollment and a verification recording, and
    /// at least two identities are required.
    pub fn validate_for_experiment(&self) -> Result<()> {
        let ids = self.identities();
        if ids.len() < 2 {
            return Err(Error::Manifest(format!(
                "need at least 2 identities, found {}",
                ids.len()
            )));
        }
        for id in &ids {
            for role in [Role::Enroll, Role::Verify] {
                if self.recordings(id, role).is_empty() {
                    return Err(Error::Manifest(format!("identity {id} has no {role} recording")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_round_trips() {
        let text = "# comment\n\np1 enroll a.wav\np1 verify dir/b c.wav\np2 enroll /abs/x.wav\np2 verify y.wav\n";
        let m = Manifest::parse(text, "/base").unwrap();
        assert_eq!(m.entries.len(), 4);
        assert_eq!(m.entries[1].path, PathBuf::from("dir/b c.wav"));
        assert_eq!(m.resolve(&m.entries[0]), PathBuf::from("/base/a.wav"));
        assert_eq!(m.resolve(&m.entries[2]), PathBuf::from("/abs/x.wav"));
        assert_eq!(m.identities(), vec!["p1", "p2"]);
        m.validate_for_experiment().unwrap();
        let again = Manifest::parse(&m.to_text(), "/base").unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn missing_verify_names_identity() {
        let m = Manifest::parse("a enroll a.wav\na verify b.wav\nbob enroll c.wav\n", ".").unwrap();
        let err = m.validate_for_experiment().unwrap_err().to_string();
        assert!(err.contains("bob") && err.contains("verify"), "{err}");
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(Manifest::parse("a enroll\n", ".").is_err());
        assert!(Manifest::parse("a train x.wav\n", ".").is_err());
        let one = Manifest::parse("a enroll x.wav\na verify y.wav\n", ".").unwrap();
        assert!(one.validate_for_experiment().is_err());
    }
}
