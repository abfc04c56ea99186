//! Output files: CSV cell sets and points, text reports, the relation cache
//! and the `FAILED` marker.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::dynamics::Ifs;
use crate::geometry::{CellSet, Grid, Point};
use crate::relation::{build_relation, BuildOptions, TransitionRelation};
use crate::{Error, Result};

pub const FAILED_MARKER: &str = "FAILED";

/// Sectioned `key = value` text.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    sections: Vec<(String, Vec<(String, String)>)>,
}

impl Report {
    pub fn new() -> Report {
        Report::default()
    }

    pub fn section(&mut self, name: impl Into<String>) -> &mut Report {
        self.sections.push((name.into(), Vec::new()));
        self
    }

    pub fn put(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Report {
        if self.sections.is_empty() {
            self.section("report");
        }
        let last = self.sections.last_mut().expect("nonempty");
        last.1.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .iter()
            .filter(|(s, _)| s == section)
            .flat_map(|(_, kv)| kv.iter())
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn append(&mut self, other: Report) {
        self.sections.extend(other.sections);
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, (name, kv)) in self.sections.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "[{name}]");
            for (k, v) in kv {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_cells(path: &Path, set: &CellSet) -> Result<()> {
    write_text(path, &set.to_csv())
}

pub fn read_cells(path: &Path, grid: &Grid) -> Result<CellSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    CellSet::from_csv(grid, &text)
}

/// `letter,x0,x1,...` per point; sphere points as unit vectors.
pub fn points_csv(points: &[(usize, Point)]) -> String {
    let width = points.first().map_or(1, |(_, p)| p.coords().len());
    let mut out = String::from("letter");
    for k in 0..width {
        let _ = write!(out, ",x{k}");
    }
    out.push('\n');
    for (letter, p) in points {
        let _ = write!(out, "{letter}");
        for x in p.coords() {
            let _ = write!(out, ",{x:e}");
        }
        out.push('\n');
    }
    out
}

pub fn write_points(path: &Path, points: &[(usize, Point)]) -> Result<()> {
    write_text(path, &points_csv(points))
}

pub fn mark_failed(dir: &Path, task: &str, err: &Error) -> Result<()> {
    write_text(&dir.join(FAILED_MARKER), &format!("task = {task}\nerror = {err}\n"))
}

pub fn clear_failed(dir: &Path) -> Result<()> {
    let path = dir.join(FAILED_MARKER);
    match std::fs::remove_file(&path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::io(&path, e)),
        _ => Ok(()),
    }
}

/// Hex digest identifying a relation build.
pub fn cache_key(grid: &Grid, ifs: &Ifs, opts: &BuildOptions) -> String {
    let mut h = Sha256::new();
    h.update(grid.hash().to_le_bytes());
    for m in ifs.maps() {
        h.update(format!("{m:?}").as_bytes());
    }
    h.update(format!("{:?}|{:?}|{}", opts.mode, opts.padding, opts.samples).as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn cache_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("relation-{}.bin", &key[..16]))
}

/// Loads the cached relation for this build or builds and saves it.
/// Returns the relation and whether the cache was hit.
pub fn cached_relation(
    dir: &Path,
    grid: &Arc<Grid>,
    ifs: &Ifs,
    opts: &BuildOptions,
) -> Result<(TransitionRelation, bool)> {
    let path = cache_path(dir, &cache_key(grid, ifs, opts));
    if path.exists() {
        match TransitionRelation::load(&path, grid.clone()) {
            Ok(rel) => return Ok((rel, true)),
            Err(e) => log::warn!("ignoring unreadable relation cache {}: {e}", path.display()),
        }
    }
    let rel = build_relation(grid, ifs, opts)?;
    rel.save(&path)?;
    Ok((rel, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::MapSpec;
    use crate::geometry::Space;

    #[test]
    fn report_text_layout() {
        let mut r = Report::new();
        r.section("a").put("x", 1).put("y", "two");
        r.section("b").put("z", 0.5);
        assert_eq!(r.to_text(), "[a]\nx = 1\ny = two\n\n[b]\nz = 0.5\n");
        assert_eq!(r.get("a", "y"), Some("two"));
        assert_eq!(r.get("b", "x"), None);
    }

    #[test]
    fn points_layout() {
        let csv = points_csv(&[(1, Point::Real(0.5)), (2, Point::Real(-1.0))]);
        assert_eq!(csv, "letter,x0\n1,5e-1\n2,-1e0\n");
    }

    #[test]
    fn cache_hits_and_marker() {
        let dir = tempfile::tempdir().unwrap();
        let space = Space::Interval { a: 0.0, b: 1.0 };
        let grid = Arc::new(Grid::new(space.clone(), &[64]).unwrap());
        let ifs = Ifs::new(space, vec![MapSpec::Affine1D { a: 0.5, b: 0.0 }], "half").unwrap();
        let opts = BuildOptions::default();
        let (a, hit_a) = cached_relation(dir.path(), &grid, &ifs, &opts).unwrap();
        let (b, hit_b) = cached_relation(dir.path(), &grid, &ifs, &opts).unwrap();
        assert!(!hit_a && hit_b);
        assert_eq!(a.adjacency(), b.adjacency());

        let other = BuildOptions { samples: 3, ..opts };
        assert_ne!(cache_key(&grid, &ifs, &other), cache_key(&grid, &ifs, &BuildOptions::default()));

        mark_failed(dir.path(), "chain", &Error::Config("boom".into())).unwrap();
        assert!(dir.path().join(FAILED_MARKER).exists());
        clear_failed(dir.path()).unwrap();
        clear_failed(dir.path()).unwrap();
        assert!(!dir.path().join(FAILED_MARKER).exists());
    }
}
