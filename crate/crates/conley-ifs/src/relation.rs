//! Cell-level outer approximation of an IFS.
//!
//! For every cell `c` and map `n` the relation stores a sorted list of target
//! cells covering `f_n(c)`. Monotone interval maps and circle-preserving
//! Möbius maps get exact endpoint enclosures; every other map is sampled on
//! a sub-cell lattice and, in padded mode, each sampled image is widened by a
//! local Lipschitz bound times the lattice covering radius.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use crate::dynamics::{Ifs, MapSpec};
use crate::geometry::{raw_distance, CellSet, Grid, Point, Space};
use crate::graph::Scc;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"CIFSREL1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BuildMode {
    /// Sample hits only.
    Sampled,
    /// Sample hits widened by a padding radius.
    Padded,
}

impl BuildMode {
    pub fn name(self) -> &'static str {
        match self {
            BuildMode::Sampled => "sampled",
            BuildMode::Padded => "padded",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BuildOptions {
    pub mode: BuildMode,
    /// Fixed padding radius; `None` uses the per-cell Lipschitz bound.
    pub padding: Option<f64>,
    /// Samples per axis per cell.
    pub samples: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            mode: BuildMode::Padded,
            padding: None,
            samples: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BuildMeta {
    pub mode: BuildMode,
    /// Largest padding radius applied to any image.
    pub padding: f64,
    pub samples: usize,
    /// Number of (cell, map) images that left an interval or box domain.
    pub clipped: u64,
    pub invertible: bool,
}

#[derive(Clone, Debug)]
pub struct TransitionRelation {
    grid: Arc<Grid>,
    per_map: Vec<Vec<Vec<u32>>>,
    union: Vec<Vec<u32>>,
    meta: BuildMeta,
    scc: OnceLock<Scc>,
}

impl PartialEq for TransitionRelation {
    fn eq(&self, other: &Self) -> bool {
        self.grid.hash() == other.grid.hash() && self.per_map == other.per_map && self.meta == other.meta
    }
}

fn merge_sorted(lists: &[&[u32]]) -> Vec<u32> {
    let mut v: Vec<u32> = lists.iter().flat_map(|l| l.iter().copied()).collect();
    v.sort_unstable();
    v.dedup();
    v
}

impl TransitionRelation {
    /// Assembles a relation from per-map adjacency lists (sorted, deduplicated).
    pub fn from_parts(grid: Arc<Grid>, per_map: Vec<Vec<Vec<u32>>>, meta: BuildMeta) -> Result<Self> {
        let m = grid.len();
        if per_map.is_empty() || per_map.iter().any(|l| l.len() != m) {
            return Err(Error::Contract(format!(
                "relation needs at least one map with {m} adjacency lists"
            )));
        }
        for lists in &per_map {
            for l in lists {
                if l.windows(2).any(|w| w[0] >= w[1]) || l.last().is_some_and(|&t| t as usize >= m) {
                    return Err(Error::Contract("adjacency lists must be sorted cell indices".into()));
                }
            }
        }
        let union = (0..m)
            .map(|c| {
                let parts: Vec<&[u32]> = per_map.iter().map(|l| l[c].as_slice()).collect();
                merge_sorted(&parts)
            })
            .collect();
        Ok(TransitionRelation {
            grid,
            per_map,
            union,
            meta,
            scc: OnceLock::new(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn meta(&self) -> &BuildMeta {
        &self.meta
    }

    pub fn n_maps(&self) -> usize {
        self.per_map.len()
    }

    pub fn n_cells(&self) -> usize {
        self.union.len()
    }

    /// `F#(c)`: union of the per-map images of one cell.
    pub fn targets(&self, c: usize) -> &[u32] {
        &self.union[c]
    }

    /// `F_n#(c)` for a zero-based map index.
    pub fn map_targets(&self, n: usize, c: usize) -> &[u32] {
        &self.per_map[n][c]
    }

    pub fn adjacency(&self) -> &[Vec<u32>] {
        &self.union
    }

    pub fn edge_count(&self) -> usize {
        self.per_map.iter().flatten().map(Vec::len).sum()
    }

    pub(crate) fn scc(&self) -> &Scc {
        self.scc.get_or_init(|| Scc::new(&self.union))
    }

    fn check(&self, s: &CellSet) {
        assert_eq!(s.grid_hash(), self.grid.hash(), "cell set from another grid");
    }

    /// `F#(S) = ⋃_{c∈S} F#(c)`.
    pub fn image(&self, s: &CellSet) -> CellSet {
        self.check(s);
        let mut out = CellSet::empty(&self.grid);
        for c in s.iter() {
            for &t in &self.union[c] {
                out.insert(t as usize);
            }
        }
        out
    }

    /// Image of `S` under a single map.
    pub fn map_image(&self, n: usize, s: &CellSet) -> CellSet {
        self.check(s);
        let mut out = CellSet::empty(&self.grid);
        for c in s.iter() {
            for &t in &self.per_map[n][c] {
                out.insert(t as usize);
            }
        }
        out
    }

    /// Cells every one of whose images lies in `S`.
    pub fn preimage_all(&self, s: &CellSet) -> CellSet {
        self.check(s);
        let mut out = CellSet::empty(&self.grid);
        for (c, targets) in self.union.iter().enumerate() {
            if targets.iter().all(|&t| s.contains(t as usize)) {
                out.insert(c);
            }
        }
        out
    }

    /// The relation with every edge reversed, map by map.
    pub fn reverse(&self) -> TransitionRelation {
        let m = self.n_cells();
        let per_map = self
            .per_map
            .iter()
            .map(|lists| {
                let mut rev: Vec<Vec<u32>> = vec![Vec::new(); m];
                for (c, targets) in lists.iter().enumerate() {
                    for &t in targets {
                        rev[t as usize].push(c as u32);
                    }
                }
                rev
            })
            .collect();
        TransitionRelation::from_parts(self.grid.clone(), per_map, self.meta.clone())
            .expect("reversal preserves shape")
    }

    /// Debug export with one `src,map,dst` row per edge; maps are numbered from 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("src,map,dst\n");
        for c in 0..self.n_cells() {
            for (n, lists) in self.per_map.iter().enumerate() {
                for &t in &lists[c] {
                    let _ = writeln!(out, "{c},{},{t}", n + 1);
                }
            }
        }
        out
    }

    /// Binary cache: magic, grid hash, map and cell counts, build metadata,
    /// then for every map and cell a varint count followed by delta-encoded targets.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 2 * self.edge_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.grid.hash().to_le_bytes());
        out.extend_from_slice(&(self.n_maps() as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_cells() as u32).to_le_bytes());
        out.push(match self.meta.mode {
            BuildMode::Sampled => 0,
            BuildMode::Padded => 1,
        });
        out.push(self.meta.invertible as u8);
        out.extend_from_slice(&(self.meta.samples as u32).to_le_bytes());
        out.extend_from_slice(&self.meta.padding.to_le_bytes());
        out.extend_from_slice(&self.meta.clipped.to_le_bytes());
        for lists in &self.per_map {
            for targets in lists {
                put_varint(&mut out, targets.len() as u64);
                let mut prev = 0u32;
                for (k, &t) in targets.iter().enumerate() {
                    put_varint(&mut out, if k == 0 { t as u64 } else { (t - prev) as u64 });
                    prev = t;
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], grid: Arc<Grid>) -> Result<TransitionRelation> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Parse("not a relation cache (bad magic)".into()));
        }
        let hash = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
        if hash != grid.hash() {
            return Err(Error::GridMismatch {
                expected: grid.hash(),
                found: hash,
            });
        }
        let n = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
        let m = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
        if m != grid.len() || n == 0 {
            return Err(Error::Parse(format!("bad relation shape: {n} maps, {m} cells")));
        }
        let mode = match r.take(1)?[0] {
            0 => BuildMode::Sampled,
            1 => BuildMode::Padded,
            x => return Err(Error::Parse(format!("bad build mode {x}"))),
        };
        let invertible = r.take(1)?[0] != 0;
        let samples = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
        let padding = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let clipped = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let mut per_map = Vec::with_capacity(n);
        for _ in 0..n {
            let mut lists = Vec::with_capacity(m);
            for _ in 0..m {
                let k = r.varint()? as usize;
                if k > m {
                    return Err(Error::Parse("corrupt adjacency count".into()));
                }
                let mut targets = Vec::with_capacity(k);
                let mut acc = 0u64;
                for i in 0..k {
                    let d = r.varint()?;
                    acc = if i == 0 { d } else { acc + d };
                    targets.push(u32::try_from(acc).map_err(|_| Error::Parse("corrupt target".into()))?);
                }
                lists.push(targets);
            }
            per_map.push(lists);
        }
        if r.pos != bytes.len() {
            return Err(Error::Parse("trailing bytes after relation".into()));
        }
        let meta = BuildMeta {
            mode,
            padding,
            samples,
            clipped,
            invertible,
        };
        TransitionRelation::from_parts(grid, per_map, meta).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, grid: Arc<Grid>) -> Result<TransitionRelation> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        TransitionRelation::from_bytes(&bytes, grid)
    }
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, k: usize) -> Result<&[u8]> {
        let end = self.pos + k;
        if end > self.bytes.len() {
            return Err(Error::Parse("truncated relation file".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn varint(&mut self) -> Result<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.take(1)?[0];
            v |= ((b & 0x7f) as u64) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::Parse("varint overflow".into()))
    }
}

/// Builds the outer approximation of `ifs` on `grid`.
pub fn build_relation(grid: &Arc<Grid>, ifs: &Ifs, opts: &BuildOptions) -> Result<TransitionRelation> {
    if grid.space() != ifs.space() {
        return Err(Error::Config(format!(
            "IFS acts on a {} space but the grid covers a {} space",
            ifs.space().name(),
            grid.space().name()
        )));
    }
    if opts.samples == 0 {
        return Err(Error::Config("samples per cell must be at least 1".into()));
    }
    if let Some(p) = opts.padding {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(Error::Config(format!("padding must be a finite nonnegative number, got {p}")));
        }
    }
    let m = grid.len();
    let rows: Vec<Result<CellRow>> = (0..m)
        .into_par_iter()
        .map(|c| cell_row(grid, ifs, opts, c))
        .collect();
    let mut per_map: Vec<Vec<Vec<u32>>> = vec![Vec::with_capacity(m); ifs.len()];
    let mut clipped = 0u64;
    let mut padding: f64 = 0.0;
    for row in rows {
        let row = row?;
        clipped += row.clipped;
        padding = padding.max(row.padding);
        for (n, targets) in row.targets.into_iter().enumerate() {
            per_map[n].push(targets);
        }
    }
    if clipped > 0 {
        log::warn!("{clipped} cell images left the declared domain and were clipped");
    }
    let meta = BuildMeta {
        mode: opts.mode,
        padding,
        samples: opts.samples,
        clipped,
        invertible: ifs.is_invertible(),
    };
    TransitionRelation::from_parts(grid.clone(), per_map, meta)
}

struct CellRow {
    targets: Vec<Vec<u32>>,
    clipped: u64,
    padding: f64,
}

fn cell_row(grid: &Grid, ifs: &Ifs, opts: &BuildOptions, c: usize) -> Result<CellRow> {
    let mut row = CellRow {
        targets: Vec::with_capacity(ifs.len()),
        clipped: 0,
        padding: 0.0,
    };
    let mut sampled: Option<(Vec<Point>, f64)> = None;
    for (n, map) in ifs.maps().iter().enumerate() {
        let fixed_pad = match opts.mode {
            BuildMode::Padded => opts.padding,
            BuildMode::Sampled => None,
        };
        let (targets, clipped, pad) = match (grid.space(), map.monotone_1d(), map) {
            (Space::Interval { .. }, Some(increasing), _) => {
                let (t, k) = interval_enclosure(grid, map, increasing, c, fixed_pad.unwrap_or(0.0))?;
                (t, k, fixed_pad.unwrap_or(0.0))
            }
            (Space::Circle, _, MapSpec::Moebius { .. }) => {
                (arc_enclosure(grid, map, c, fixed_pad.unwrap_or(0.0))?, false, fixed_pad.unwrap_or(0.0))
            }
            _ => {
                let (pts, rho) = sampled
                    .get_or_insert_with(|| (grid.sample_points(c, opts.samples), grid.sample_radius(c, opts.samples)));
                let pad = match opts.mode {
                    BuildMode::Sampled => 0.0,
                    BuildMode::Padded => match opts.padding {
                        Some(p) => p,
                        None => map.local_lipschitz(grid, c).value * *rho,
                    },
                };
                if !pad.is_finite() {
                    return Err(Error::Domain(format!(
                        "map {} has no finite Lipschitz bound on cell {c}",
                        n + 1
                    )));
                }
                let (t, k) = sampled_enclosure(grid, map, pts, pad)
                    .map_err(|e| Error::Domain(format!("map {} on cell {c}: {e}", n + 1)))?;
                (t, k, pad)
            }
        };
        row.clipped += clipped as u64;
        row.padding = row.padding.max(pad);
        row.targets.push(targets);
    }
    Ok(row)
}

/// Exact enclosure of a monotone map on a half-open interval cell (the last
/// cell is closed). Endpoints that are not attained use the left-cell index.
fn interval_enclosure(grid: &Grid, map: &MapSpec, increasing: bool, c: usize, pad: f64) -> Result<(Vec<u32>, bool)> {
    let b = grid.cell_box(c);
    let n = grid.len() as i64;
    let closed = c as i64 == n - 1;
    let f = |x: f64| -> Result<f64> {
        match map.eval(grid.space(), &Point::Real(x))? {
            Point::Real(y) => Ok(y),
            _ => unreachable!("interval maps return reals"),
        }
    };
    let (y0, y1) = (f(b.u0)?, f(b.u1)?);
    let (lower, upper, upper_attained) = if y0 == y1 {
        (y0, y0, true)
    } else if increasing {
        (y0, y1, closed)
    } else {
        (y1, y0, true)
    };
    let (lo, hi) = (lower - pad, upper + pad);
    let i0 = grid.interval_index(lo).unwrap();
    let i1 = if upper_attained || pad > 0.0 {
        grid.interval_index(hi).unwrap()
    } else {
        grid.interval_left_index(hi).unwrap().max(i0)
    };
    let clipped = i0 < 0 || i1 > n - 1;
    let (i0, i1) = (i0.clamp(0, n - 1), i1.clamp(0, n - 1));
    Ok(((i0 as u32..=i1 as u32).collect(), clipped))
}

/// Exact enclosure of a circle homeomorphism on an arc cell.
fn arc_enclosure(grid: &Grid, map: &MapSpec, c: usize, pad: f64) -> Result<Vec<u32>> {
    const TAU: f64 = 2.0 * std::f64::consts::PI;
    let b = grid.cell_box(c);
    let f = |t: f64| -> Result<f64> {
        match map.eval(grid.space(), &Point::Angle(t.rem_euclid(TAU)))? {
            Point::Angle(y) => Ok(y),
            _ => unreachable!("circle maps return angles"),
        }
    };
    let (w0, w1, wm) = (f(b.u0)?, f(b.u1)?, f(0.5 * (b.u0 + b.u1))?);
    let d01 = (w1 - w0).rem_euclid(TAU);
    let d0m = (wm - w0).rem_euclid(TAU);
    let n = grid.len() as i64;
    // Orientation-preserving maps send [t0, t1) onto [w0, w1); reversing ones onto (w1, w0].
    let (lo, hi, hi_attained) = if d0m < d01 {
        (w0, w0 + d01, false)
    } else {
        (w1, w1 + (w0 - w1).rem_euclid(TAU), true)
    };
    let (lo, hi) = (lo - pad, hi + pad);
    let i0 = grid.interval_index(lo).unwrap();
    let i1 = if hi_attained || pad > 0.0 {
        grid.interval_index(hi).unwrap()
    } else {
        grid.interval_left_index(hi).unwrap().max(i0)
    };
    let mut out: Vec<u32> = (i0..=i1.min(i0 + n - 1)).map(|i| i.rem_euclid(n) as u32).collect();
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn clamp_to_domain(space: &Space, q: &Point) -> Point {
    match (space, q) {
        (&Space::Interval { a, b }, &Point::Real(x)) => Point::Real(x.clamp(a, b)),
        (&Space::Box2 { ax, bx, ay, by }, &Point::Plane(p)) => {
            Point::Plane([p[0].clamp(ax, bx), p[1].clamp(ay, by)])
        }
        _ => *q,
    }
}

fn sampled_enclosure(grid: &Grid, map: &MapSpec, pts: &[Point], pad: f64) -> Result<(Vec<u32>, bool)> {
    let mut out = Vec::new();
    let mut clipped = false;
    for p in pts {
        let q = map.eval(grid.space(), p)?;
        let cell = match grid.point_to_cell(&q) {
            Some(k) => k,
            None => {
                clipped = true;
                grid.point_to_cell(&clamp_to_domain(grid.space(), &q))
                    .ok_or_else(|| Error::Domain(format!("image {q:?} has no cell")))?
            }
        };
        out.push(cell as u32);
        if pad > 0.0 {
            for k in grid.cells_in_ball(&q, pad + grid.scale()) {
                if raw_distance(&grid.center(k), &q) <= pad + grid.radius(k) {
                    out.push(k as u32);
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok((out, clipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::dilate;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn unit(n: usize) -> Arc<Grid> {
        Arc::new(Grid::new(Space::Interval { a: 0.0, b: 1.0 }, &[n]).unwrap())
    }

    fn halves(n: usize) -> TransitionRelation {
        let g = unit(n);
        let ifs = Ifs::new(
            g.space().clone(),
            vec![MapSpec::Affine1D { a: 0.5, b: 0.0 }, MapSpec::Affine1D { a: 0.5, b: 0.5 }],
            "halves",
        )
        .unwrap();
        build_relation(&g, &ifs, &BuildOptions::default()).unwrap()
    }

    pub(crate) fn rotation(n: usize) -> TransitionRelation {
        let g = Arc::new(Grid::new(Space::Circle, &[n]).unwrap());
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let ifs = Ifs::new(
            Space::Circle,
            vec![MapSpec::Moebius {
                a: Complex64::new(0.0, 1.0),
                b: zero,
                c: zero,
                d: one,
            }],
            "rotation",
        )
        .unwrap();
        build_relation(&g, &ifs, &BuildOptions::default()).unwrap()
    }

    #[test]
    fn half_map_image_of_last_cell() {
        let g = unit(4);
        let ifs = Ifs::new(g.space().clone(), vec![MapSpec::Affine1D { a: 0.5, b: 0.0 }], "x/2").unwrap();
        let rel = build_relation(&g, &ifs, &BuildOptions::default()).unwrap();
        // [0.75, 1] maps onto [0.375, 0.5]: cells 1 and 2 (0.5 itself sits in cell 2).
        assert_eq!(rel.targets(3), &[1, 2]);
        assert_eq!(rel.targets(1), &[0]);
        assert_eq!(rel.meta().clipped, 0);
    }

    #[test]
    fn rotation_permutes_arcs() {
        let rel = rotation(8);
        for k in 0..8 {
            assert_eq!(rel.targets(k), &[((k + 2) % 8) as u32]);
        }
        let g = rel.grid().clone();
        assert_eq!(rel.image(&CellSet::from_cells(&g, [0])), CellSet::from_cells(&g, [2]));
        assert_eq!(rel.preimage_all(&CellSet::from_cells(&g, [2])), CellSet::from_cells(&g, [0]));
        let rev = rel.reverse();
        for k in 0..8 {
            assert_eq!(rev.targets(k), &[((k + 6) % 8) as u32]);
        }
        assert_eq!(rev.reverse(), rel);
    }

    #[test]
    fn rotation_on_360_arcs_is_a_quarter_shift() {
        let rel = rotation(360);
        for k in 0..360 {
            assert_eq!(rel.targets(k), &[((k + 90) % 360) as u32]);
        }
    }

    #[test]
    fn identity_contains_diagonal() {
        for g in [
            Arc::new(Grid::new(Space::ProjectivePlane, &[6, 12]).unwrap()),
            unit(10),
        ] {
            let map = match g.space() {
                Space::ProjectivePlane => MapSpec::Projective3 {
                    m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
                },
                _ => MapSpec::Affine1D { a: 1.0, b: 0.0 },
            };
            let ifs = Ifs::new(g.space().clone(), vec![map], "id").unwrap();
            let rel = build_relation(&g, &ifs, &BuildOptions::default()).unwrap();
            for c in 0..g.len() {
                assert!(rel.targets(c).contains(&(c as u32)));
            }
        }
    }

    #[test]
    fn two_halves_tile_the_interval() {
        let rel = halves(8);
        let g = rel.grid().clone();
        assert!(rel.image(&CellSet::full(&g)).is_full());
        assert!(rel.preimage_all(&CellSet::full(&g)).is_full());
        // The right half map sends everything into [1/2, 1].
        let left = g.cells_of_interval(0.0, 0.49);
        assert!(rel.preimage_all(&left).is_empty());
    }

    #[test]
    fn sampled_hits_are_inside_padded_images() {
        let g = Arc::new(Grid::new(Space::ProjectivePlane, &[8, 16]).unwrap());
        let ifs = Ifs::new(
            Space::ProjectivePlane,
            vec![
                MapSpec::Projective3 {
                    m: [[41.0, -19.0, 19.0], [-19.0, 41.0, 19.0], [19.0, 19.0, 41.0]],
                },
                MapSpec::Projective3 {
                    m: [[-10.0, -1.0, 19.0], [-10.0, 21.0, 1.0], [10.0, 10.0, 10.0]],
                },
            ],
            "pair",
        )
        .unwrap();
        let padded = build_relation(&g, &ifs, &BuildOptions::default()).unwrap();
        let opts = BuildOptions {
            mode: BuildMode::Sampled,
            ..BuildOptions::default()
        };
        let sampled = build_relation(&g, &ifs, &opts).unwrap();
        for n in 0..2 {
            for c in 0..g.len() {
                for p in g.sample_points(c, 4) {
                    let q = ifs.eval(n, &p).unwrap();
                    let k = g.point_to_cell(&q).unwrap() as u32;
                    assert!(sampled.map_targets(n, c).contains(&k));
                    assert!(padded.map_targets(n, c).contains(&k));
                }
                for t in sampled.map_targets(n, c) {
                    assert!(padded.map_targets(n, c).contains(t));
                }
            }
        }
        // Dense check of the covering claim on a few cells.
        for c in [5, 40, 77] {
            for p in g.sample_points(c, 23) {
                let q = ifs.eval(0, &p).unwrap();
                let k = g.point_to_cell(&q).unwrap() as u32;
                assert!(padded.map_targets(0, c).contains(&k), "cell {c}");
            }
        }
    }

    #[test]
    fn reverse_matches_inverse_build() {
        let g = Arc::new(Grid::new(Space::Interval { a: -2.5, b: 2.5 }, &[500]).unwrap());
        let ifs = Ifs::new(g.space().clone(), vec![MapSpec::PiecewiseQuad], "quad").unwrap();
        let rel = build_relation(&g, &ifs, &BuildOptions::default()).unwrap();
        let inv = build_relation(&g, &ifs.invert().unwrap(), &BuildOptions::default()).unwrap();
        let rev = rel.reverse();
        let mut agree = 0usize;
        let mut total = 0usize;
        for c in 0..g.len() {
            // Cells whose inverse image leaves the domain carry clipping edges only in the inverse build.
            let b = g.cell_box(c);
            let (lo, hi) = (crate::dynamics::quad_inverse(b.u0), crate::dynamics::quad_inverse(b.u1));
            if lo < -2.5 || hi > 2.5 {
                continue;
            }
            let (a, b) = (rev.targets(c), inv.targets(c));
            total += a.len().max(b.len());
            agree += a.iter().filter(|t| b.contains(t)).count();
        }
        assert!(agree as f64 >= 0.99 * total as f64, "{agree}/{total}");
    }

    #[test]
    fn binary_and_csv_exports() {
        let rel = halves(16);
        let bytes = rel.to_bytes();
        assert_eq!(&bytes[..8], b"CIFSREL1");
        let back = TransitionRelation::from_bytes(&bytes, rel.grid_arc().clone()).unwrap();
        assert_eq!(back, rel);
        assert!(matches!(
            TransitionRelation::from_bytes(&bytes, unit(8)),
            Err(Error::GridMismatch { .. })
        ));
        assert!(TransitionRelation::from_bytes(&bytes[..bytes.len() - 1], rel.grid_arc().clone()).is_err());
        let csv = rel.to_csv();
        assert!(csv.starts_with("src,map,dst\n"));
        assert_eq!(csv.lines().count(), 1 + rel.edge_count());
    }

    #[test]
    fn out_of_domain_images_are_clipped() {
        let g = unit(10);
        let ifs = Ifs::new(g.space().clone(), vec![MapSpec::Affine1D { a: 2.0, b: 0.0 }], "double").unwrap();
        let rel = build_relation(&g, &ifs, &BuildOptions::default()).unwrap();
        assert!(rel.meta().clipped > 0);
        assert_eq!(rel.targets(9), &[9]);
    }

    fn quad_relation() -> TransitionRelation {
        let g = Arc::new(Grid::new(Space::Interval { a: -2.5, b: 2.5 }, &[200]).unwrap());
        let ifs = Ifs::new(g.space().clone(), vec![MapSpec::PiecewiseQuad], "quad").unwrap();
        build_relation(&g, &ifs, &BuildOptions::default()).unwrap()
    }

    proptest! {
        #[test]
        fn image_and_preimage_laws(
            a in proptest::collection::btree_set(0usize..200, 0..40),
            b in proptest::collection::btree_set(0usize..200, 0..40),
        ) {
            let rel = quad_relation();
            let g = rel.grid().clone();
            let s = CellSet::from_cells(&g, a);
            let t = s.union(&CellSet::from_cells(&g, b));
            prop_assert!(rel.image(&s).is_subset(&rel.image(&t)));
            prop_assert!(rel.preimage_all(&s).is_subset(&rel.preimage_all(&t)));
            prop_assert!(rel.image(&rel.preimage_all(&s)).is_subset(&s));
            prop_assert!(s.is_subset(&rel.preimage_all(&rel.image(&s))));
            prop_assert!(rel.image(&CellSet::empty(&g)).is_empty());
        }

        #[test]
        fn union_law_for_two_maps(a in proptest::collection::btree_set(0usize..64, 0..20)) {
            let rel = halves(64);
            let s = CellSet::from_cells(rel.grid(), a);
            let joined = rel.map_image(0, &s).union(&rel.map_image(1, &s));
            prop_assert_eq!(rel.image(&s), joined);
        }

        #[test]
        fn dilated_images_grow(a in proptest::collection::btree_set(0usize..200, 1..10), r in 0.0..0.2f64) {
            let rel = quad_relation();
            let s = CellSet::from_cells(rel.grid(), a);
            let img = rel.image(&s);
            prop_assert!(img.is_subset(&dilate(rel.grid(), &img, r)));
        }
    }
}
