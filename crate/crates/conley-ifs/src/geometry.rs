//! Compact metric spaces, cell grids over them, and cell-set algebra.
//!
//! Each grid partitions its space into `M` cells indexed `0..M`. A cell has a
//! center and a covering radius (the largest distance from the center to a
//! point of the cell). [`CellSet`] is a bitmask over those indices tied to the
//! grid that produced it.

use std::fmt;
use std::f64::consts::PI;
use std::fmt::Write as _;

use fixedbitset::FixedBitSet;
use num_complex::Complex64;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Relative snapping tolerance used when locating points on cell boundaries.
pub const SNAP: f64 = 1e-9;

const TAU: f64 = 2.0 * PI;
const EDGE_SAMPLES: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub enum Space {
    Interval { a: f64, b: f64 },
    /// Unit circle with the arc-length metric; points are angles in `[0, 2π)`.
    Circle,
    Box2 { ax: f64, bx: f64, ay: f64, by: f64 },
    /// CP¹ with the chordal metric of the unit sphere.
    RiemannSphere,
    /// RP² as unit vectors modulo sign, `d(x, y) = min(|x - y|, |x + y|)`.
    ProjectivePlane,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Point {
    Real(f64),
    Angle(f64),
    Plane([f64; 2]),
    Sphere([Complex64; 2]),
    Proj([f64; 3]),
}

impl Point {
    /// Plain coordinates for export: the stereographic unit vector for sphere points.
    pub fn coords(&self) -> Vec<f64> {
        match *self {
            Point::Real(x) | Point::Angle(x) => vec![x],
            Point::Plane(p) => p.to_vec(),
            Point::Sphere(z) => sphere_vector(z).to_vec(),
            Point::Proj(v) => v.to_vec(),
        }
    }
}

/// Unit vector on S² for a homogeneous pair, with `∞ = (1:0)` at the north pole.
pub fn sphere_vector(z: [Complex64; 2]) -> [f64; 3] {
    let n1 = z[0].norm_sqr();
    let n2 = z[1].norm_sqr();
    let n = n1 + n2;
    let w = z[0] * z[1].conj();
    [2.0 * w.re / n, 2.0 * w.im / n, (n1 - n2) / n]
}

/// Inverse of [`sphere_vector`].
pub fn sphere_from_vector(v: [f64; 3]) -> Point {
    let z = if v[2] >= 0.0 {
        [Complex64::new(1.0 + v[2], 0.0), Complex64::new(v[0], -v[1])]
    } else {
        [Complex64::new(v[0], v[1]), Complex64::new(1.0 - v[2], 0.0)]
    };
    Point::Sphere(canonical_sphere(z).expect("nonzero by construction"))
}

fn canonical_sphere(z: [Complex64; 2]) -> Option<[Complex64; 2]> {
    let n = (z[0].norm_sqr() + z[1].norm_sqr()).sqrt();
    if !(n > 1e-300) || !n.is_finite() {
        return None;
    }
    let pivot = if z[0].norm() >= z[1].norm() { z[0] } else { z[1] };
    let phase = pivot.conj() / pivot.norm();
    let mut w = [z[0] * phase / n, z[1] * phase / n];
    let k = if z[0].norm() >= z[1].norm() { 0 } else { 1 };
    w[k].im = 0.0;
    Some(w)
}

fn canonical_proj(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if !(n > 1e-300) || !n.is_finite() {
        return None;
    }
    let mut u = [v[0] / n, v[1] / n, v[2] / n];
    let lead = u.iter().copied().find(|c| c.abs() > 1e-12).unwrap_or(0.0);
    if lead < 0.0 {
        u.iter_mut().for_each(|c| *c = -*c);
    }
    Some(u)
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

impl Space {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Space::Interval { a, b } => a.is_finite() && b.is_finite() && a < b,
            Space::Box2 { ax, bx, ay, by } => {
                [ax, bx, ay, by].iter().all(|v| v.is_finite()) && ax < bx && ay < by
            }
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid bounds for {self:?}")))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Space::Interval { .. } => "interval",
            Space::Circle => "circle",
            Space::Box2 { .. } => "box2",
            Space::RiemannSphere => "riemann-sphere",
            Space::ProjectivePlane => "projective-plane",
        }
    }

    /// Canonical representative of `p`, or a domain error for points of the
    /// wrong kind or degenerate homogeneous vectors.
    pub fn canonical(&self, p: &Point) -> Result<Point> {
        let bad = || Error::Domain(format!("{p:?} is not a point of {}", self.name()));
        match (self, *p) {
            (Space::Interval { .. }, Point::Real(x)) if x.is_finite() => Ok(*p),
            (Space::Box2 { .. }, Point::Plane(q)) if q.iter().all(|v| v.is_finite()) => Ok(*p),
            (Space::Circle, Point::Angle(t)) if t.is_finite() => {
                let t = t.rem_euclid(TAU);
                Ok(Point::Angle(if t >= TAU { 0.0 } else { t }))
            }
            (Space::RiemannSphere, Point::Sphere(z)) => {
                canonical_sphere(z).map(Point::Sphere).ok_or_else(bad)
            }
            (Space::ProjectivePlane, Point::Proj(v)) => {
                canonical_proj(v).map(Point::Proj).ok_or_else(bad)
            }
            _ => Err(bad()),
        }
    }

    pub fn distance(&self, p: &Point, q: &Point) -> Result<f64> {
        let p = self.canonical(p)?;
        let q = self.canonical(q)?;
        Ok(raw_distance(&p, &q))
    }
}

/// Distance between canonical points of the same space.
pub(crate) fn raw_distance(p: &Point, q: &Point) -> f64 {
    match (*p, *q) {
        (Point::Real(x), Point::Real(y)) => (x - y).abs(),
        (Point::Angle(s), Point::Angle(t)) => {
            let d = (s - t).abs().rem_euclid(TAU);
            d.min(TAU - d)
        }
        (Point::Plane(a), Point::Plane(b)) => (a[0] - b[0]).hypot(a[1] - b[1]),
        (Point::Sphere(z), Point::Sphere(w)) => norm3(sub3(sphere_vector(z), sphere_vector(w))),
        (Point::Proj(x), Point::Proj(y)) => norm3(sub3(x, y)).min(norm3(add3(x, y))),
        _ => f64::NAN,
    }
}

/// Parameter rectangle of a cell: `[u0,u1] × [v0,v1]` in the chart
/// coordinates (x, angle, (x,y) or (θ,φ)); `v` is unused for 1D grids.
#[derive(Clone, Copy, Debug)]
pub struct ParamBox {
    pub u0: f64,
    pub u1: f64,
    pub v0: f64,
    pub v1: f64,
}

#[derive(Clone, Debug)]
enum Layout {
    Interval { a: f64, n: usize, w: f64 },
    Circle { n: usize },
    Box2 { ax: f64, ay: f64, nx: usize, ny: usize, wx: f64, wy: f64 },
    Sphere { nlat: usize, nlon: usize },
    Projective { nband: usize, nlon: usize },
}

/// A finite cover of a compact space by cells.
#[derive(Clone, Debug)]
pub struct Grid {
    space: Space,
    resolution: Vec<usize>,
    layout: Layout,
    hash: u64,
    centers: Vec<Point>,
    radii: Vec<f64>,
    neighbors: Vec<Vec<u32>>,
    scale: f64,
}

impl Grid {
    /// Builds a grid. `resolution` is one count for 1D spaces and
    /// `(nx, ny)`, `(nlat, nlon)` or `(bands per hemisphere, nlon)` otherwise.
    pub fn new(space: Space, resolution: &[usize]) -> Result<Grid> {
        space.validate()?;
        let need = match space {
            Space::Interval { .. } | Space::Circle => 1,
            _ => 2,
        };
        if resolution.len() != need {
            return Err(Error::Config(format!(
                "{} grid needs {need} resolution value(s), got {}",
                space.name(),
                resolution.len()
            )));
        }
        if resolution.iter().any(|&r| r < 2) {
            return Err(Error::Config(format!(
                "resolution must be at least 2 per axis, got {resolution:?}"
            )));
        }
        let layout = match space {
            Space::Interval { a, b } => Layout::Interval {
                a,
                n: resolution[0],
                w: (b - a) / resolution[0] as f64,
            },
            Space::Circle => Layout::Circle { n: resolution[0] },
            Space::Box2 { ax, bx, ay, by } => Layout::Box2 {
                ax,
                ay,
                nx: resolution[0],
                ny: resolution[1],
                wx: (bx - ax) / resolution[0] as f64,
                wy: (by - ay) / resolution[1] as f64,
            },
            Space::RiemannSphere => Layout::Sphere {
                nlat: resolution[0],
                nlon: resolution[1],
            },
            Space::ProjectivePlane => {
                if !resolution[1].is_multiple_of(2) {
                    return Err(Error::Config(
                        "projective grid needs an even longitude count".into(),
                    ));
                }
                Layout::Projective {
                    nband: resolution[0],
                    nlon: resolution[1],
                }
            }
        };
        let mut grid = Grid {
            hash: grid_hash(&space, resolution),
            space,
            resolution: resolution.to_vec(),
            layout,
            centers: Vec::new(),
            radii: Vec::new(),
            neighbors: Vec::new(),
            scale: 0.0,
        };
        let m = grid.layout_cells();
        grid.centers = (0..m)
            .map(|c| {
                let b = grid.cell_box(c);
                grid.param_point(0.5 * (b.u0 + b.u1), 0.5 * (b.v0 + b.v1))
            })
            .collect();
        grid.radii = grid.compute_radii();
        grid.scale = grid.radii.iter().copied().fold(0.0, f64::max);
        grid.neighbors = grid.compute_neighbors();
        Ok(grid)
    }

    fn layout_cells(&self) -> usize {
        match self.layout {
            Layout::Interval { n, .. } | Layout::Circle { n } => n,
            Layout::Box2 { nx, ny, .. } => nx * ny,
            Layout::Sphere { nlat, nlon } => nlat * nlon,
            Layout::Projective { nband, nlon } => nband * nlon,
        }
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Identity of the grid: the first 8 bytes of a SHA-256 over its parameters.
    pub fn hash(&self) -> u64 {
        self.hash
    }

    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.hash)
    }

    pub fn center(&self, c: usize) -> Point {
        self.centers[c]
    }

    pub fn radius(&self, c: usize) -> f64 {
        self.radii[c]
    }

    /// Grid scale `h`: the largest covering radius.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Width of one cell along the (first) axis in metric units.
    pub fn cell_width(&self) -> f64 {
        match self.layout {
            Layout::Interval { w, .. } => w,
            Layout::Circle { n } => TAU / n as f64,
            Layout::Box2 { wx, .. } => wx,
            Layout::Sphere { nlat, .. } => PI / nlat as f64,
            Layout::Projective { nband, .. } => PI / (2 * nband) as f64,
        }
    }

    pub fn neighbors(&self, c: usize) -> &[u32] {
        &self.neighbors[c]
    }

    fn interval_edge(&self, a: f64, n: usize, k: usize) -> f64 {
        match self.space {
            Space::Interval { b, .. } => a + (b - a) * k as f64 / n as f64,
            _ => unreachable!(),
        }
    }

    pub fn cell_box(&self, c: usize) -> ParamBox {
        match self.layout {
            Layout::Interval { a, n, .. } => ParamBox {
                u0: self.interval_edge(a, n, c),
                u1: self.interval_edge(a, n, c + 1),
                v0: 0.0,
                v1: 0.0,
            },
            Layout::Circle { n } => {
                let w = TAU / n as f64;
                ParamBox {
                    u0: c as f64 * w,
                    u1: (c + 1) as f64 * w,
                    v0: 0.0,
                    v1: 0.0,
                }
            }
            Layout::Box2 {
                ax, ay, nx, wx, wy, ..
            } => {
                let (ix, iy) = (c % nx, c / nx);
                ParamBox {
                    u0: ax + ix as f64 * wx,
                    u1: ax + (ix + 1) as f64 * wx,
                    v0: ay + iy as f64 * wy,
                    v1: ay + (iy + 1) as f64 * wy,
                }
            }
            Layout::Sphere { nlat, nlon } => lat_lon_box(c / nlon, c % nlon, nlat, nlon),
            Layout::Projective { nband, nlon } => {
                lat_lon_box(c / nlon, c % nlon, 2 * nband, nlon)
            }
        }
    }

    /// Point with chart coordinates `(u, v)`.
    pub fn param_point(&self, u: f64, v: f64) -> Point {
        match self.layout {
            Layout::Interval { .. } => Point::Real(u),
            Layout::Circle { .. } => Point::Angle(u.rem_euclid(TAU)),
            Layout::Box2 { .. } => Point::Plane([u, v]),
            Layout::Sphere { .. } => {
                let (s, c) = u.sin_cos();
                sphere_from_vector([s * v.cos(), s * v.sin(), c])
            }
            Layout::Projective { .. } => {
                let (s, c) = u.sin_cos();
                Point::Proj(canonical_proj([c, s * v.cos(), s * v.sin()]).expect("unit vector"))
            }
        }
    }

    /// Index of the cell containing `p`, or `None` when `p` lies outside an
    /// interval or box domain.
    pub fn point_to_cell(&self, p: &Point) -> Option<usize> {
        let p = self.space.canonical(p).ok()?;
        match (&self.layout, p) {
            (&Layout::Interval { a, n, w }, Point::Real(x)) => axis_index(x, a, w, n),
            (&Layout::Circle { n }, Point::Angle(t)) => {
                Some(((t / TAU * n as f64 + SNAP).floor() as usize) % n)
            }
            (
                &Layout::Box2 {
                    ax, ay, nx, ny, wx, wy,
                },
                Point::Plane(q),
            ) => {
                let ix = axis_index(q[0], ax, wx, nx)?;
                let iy = axis_index(q[1], ay, wy, ny)?;
                Some(iy * nx + ix)
            }
            (&Layout::Sphere { nlat, nlon }, Point::Sphere(z)) => {
                let v = sphere_vector(z);
                let (i, j) = lat_lon_index(v[2], v[0], v[1], nlat, nlon);
                Some(i * nlon + j)
            }
            (&Layout::Projective { nband, nlon }, Point::Proj(v)) => {
                let (i, j) = lat_lon_index(v[0], v[1], v[2], 2 * nband, nlon);
                let (i, j) = fold(i, j, nband, nlon);
                Some(i * nlon + j)
            }
            _ => None,
        }
    }

    /// Unclamped interval index of `x` with boundary snapping; `None` for other grids.
    pub fn interval_index(&self, x: f64) -> Option<i64> {
        match self.layout {
            Layout::Interval { a, w, .. } => Some(((x - a) / w + SNAP).floor() as i64),
            Layout::Circle { n } => Some((x / TAU * n as f64 + SNAP).floor() as i64),
            _ => None,
        }
    }

    /// Index of the cell immediately left of `x` (the cell holding `x - 0`).
    pub fn interval_left_index(&self, x: f64) -> Option<i64> {
        match self.layout {
            Layout::Interval { a, w, .. } => Some(((x - a) / w - SNAP).ceil() as i64 - 1),
            Layout::Circle { n } => Some((x / TAU * n as f64 - SNAP).ceil() as i64 - 1),
            _ => None,
        }
    }

    /// Cells meeting the closed interval `[lo, hi]` on an interval grid.
    pub fn cells_of_interval(&self, lo: f64, hi: f64) -> CellSet {
        let mut s = CellSet::empty(self);
        if let (Some(i0), Some(i1)) = (self.interval_index(lo), self.interval_index(hi)) {
            let top = self.len() as i64 - 1;
            for i in i0.clamp(0, top)..=i1.clamp(0, top) {
                s.insert(i as usize);
            }
        }
        s
    }

    /// Chart points at the centers of an `s × s` (or `s` in 1D) sub-cell lattice.
    pub fn sample_points(&self, c: usize, s: usize) -> Vec<Point> {
        let b = self.cell_box(c);
        let s = s.max(1);
        let frac = |k: usize| (k as f64 + 0.5) / s as f64;
        if self.is_one_dimensional() {
            (0..s)
                .map(|k| self.param_point(b.u0 + frac(k) * (b.u1 - b.u0), 0.0))
                .collect()
        } else {
            let mut out = Vec::with_capacity(s * s);
            for a in 0..s {
                for k in 0..s {
                    out.push(self.param_point(
                        b.u0 + frac(a) * (b.u1 - b.u0),
                        b.v0 + frac(k) * (b.v1 - b.v0),
                    ));
                }
            }
            out
        }
    }

    /// Largest distance from a point of cell `c` to the nearest sample of
    /// [`Grid::sample_points`] with the same `s`, estimated on sub-cell boundaries.
    pub fn sample_radius(&self, c: usize, s: usize) -> f64 {
        let b = self.cell_box(c);
        let s = s.max(1);
        let du = (b.u1 - b.u0) / s as f64;
        if self.is_one_dimensional() {
            return match self.layout {
                Layout::Circle { .. } => du / 2.0,
                _ => du.abs() / 2.0,
            };
        }
        let dv = (b.v1 - b.v0) / s as f64;
        let rows: Vec<usize> = match self.layout {
            // Lat-lon sub-cells in one row are congruent under rotation about the axis.
            Layout::Sphere { .. } | Layout::Projective { .. } => (0..s).collect(),
            _ => vec![0],
        };
        rows.into_iter()
            .map(|a| {
                let sub = ParamBox {
                    u0: b.u0 + a as f64 * du,
                    u1: b.u0 + (a + 1) as f64 * du,
                    v0: b.v0,
                    v1: b.v0 + dv,
                };
                self.box_radius(&sub)
            })
            .fold(0.0, f64::max)
    }

    fn is_one_dimensional(&self) -> bool {
        matches!(self.layout, Layout::Interval { .. } | Layout::Circle { .. })
    }

    fn box_radius(&self, b: &ParamBox) -> f64 {
        let center = self.param_point(0.5 * (b.u0 + b.u1), 0.5 * (b.v0 + b.v1));
        let mut r: f64 = 0.0;
        for k in 0..=EDGE_SAMPLES {
            let t = k as f64 / EDGE_SAMPLES as f64;
            let u = b.u0 + t * (b.u1 - b.u0);
            let v = b.v0 + t * (b.v1 - b.v0);
            for p in [
                self.param_point(u, b.v0),
                self.param_point(u, b.v1),
                self.param_point(b.u0, v),
                self.param_point(b.u1, v),
            ] {
                r = r.max(raw_distance(&center, &p));
            }
        }
        r
    }

    fn compute_radii(&self) -> Vec<f64> {
        match self.layout {
            Layout::Interval { w, n, .. } => vec![w / 2.0; n],
            Layout::Circle { n } => vec![PI / n as f64; n],
            Layout::Box2 { wx, wy, nx, ny, .. } => vec![0.5 * wx.hypot(wy); nx * ny],
            Layout::Sphere { nlat: rows, nlon } | Layout::Projective { nband: rows, nlon } => {
                let per_row: Vec<f64> = (0..rows)
                    .map(|i| self.box_radius(&self.cell_box(i * nlon)))
                    .collect();
                (0..rows * nlon).map(|c| per_row[c / nlon]).collect()
            }
        }
    }

    fn compute_neighbors(&self) -> Vec<Vec<u32>> {
        let m = self.len();
        let mut nb: Vec<Vec<u32>> = vec![Vec::new(); m];
        let mut link = |a: usize, b: usize| {
            if a != b {
                nb[a].push(b as u32);
                nb[b].push(a as u32);
            }
        };
        match self.layout {
            Layout::Interval { n, .. } => (1..n).for_each(|i| link(i - 1, i)),
            Layout::Circle { n } => (0..n).for_each(|i| link(i, (i + 1) % n)),
            Layout::Box2 { nx, ny, .. } => {
                for iy in 0..ny {
                    for ix in 0..nx {
                        for (dx, dy) in [(1i64, 0i64), (0, 1), (1, 1), (1, -1)] {
                            let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                            if jx >= 0 && jy >= 0 && (jx as usize) < nx && (jy as usize) < ny {
                                link(iy * nx + ix, jy as usize * nx + jx as usize);
                            }
                        }
                    }
                }
            }
            Layout::Sphere { nlat, nlon } => {
                for i in 0..nlat {
                    for j in 0..nlon {
                        let c = i * nlon + j;
                        link(c, i * nlon + (j + 1) % nlon);
                        if i + 1 < nlat {
                            for dj in [nlon - 1, 0, 1] {
                                link(c, (i + 1) * nlon + (j + dj) % nlon);
                            }
                        }
                    }
                }
                for row in [0, nlat - 1] {
                    for j in 0..nlon {
                        for k in j + 1..nlon {
                            link(row * nlon + j, row * nlon + k);
                        }
                    }
                }
            }
            Layout::Projective { nband, nlon } => {
                for i in 0..nband {
                    for j in 0..nlon {
                        let c = i * nlon + j;
                        link(c, i * nlon + (j + 1) % nlon);
                        for dj in [nlon - 1, 0, 1] {
                            let (fi, fj) = fold(i + 1, (j + dj) % nlon, nband, nlon);
                            link(c, fi * nlon + fj);
                        }
                    }
                }
                for j in 0..nlon {
                    for k in j + 1..nlon {
                        link(j, k);
                    }
                }
            }
        }
        for list in nb.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
        nb
    }

    /// Candidate cells whose centers may lie within `r` of `q`. Always a
    /// superset of the exact answer; callers filter by distance.
    pub fn cells_in_ball(&self, q: &Point, r: f64) -> Vec<usize> {
        let m = self.len();
        let Ok(q) = self.space.canonical(q) else {
            return Vec::new();
        };
        match (&self.layout, q) {
            (&Layout::Interval { a, n, w }, Point::Real(x)) => {
                let lo = (((x - r - a) / w).floor() as i64 - 1).clamp(0, n as i64 - 1);
                let hi = (((x + r - a) / w).floor() as i64 + 1).clamp(0, n as i64 - 1);
                if x + r < a - w || x - r > a + (n as f64 + 1.0) * w {
                    return Vec::new();
                }
                (lo as usize..=hi as usize).collect()
            }
            (&Layout::Circle { n }, Point::Angle(t)) => {
                let w = TAU / n as f64;
                let k = (r / w).ceil() as i64 + 1;
                if 2 * k + 1 >= n as i64 {
                    return (0..n).collect();
                }
                let base = (t / w).floor() as i64;
                let mut v: Vec<usize> = (base - k..=base + k)
                    .map(|i| i.rem_euclid(n as i64) as usize)
                    .collect();
                v.sort_unstable();
                v.dedup();
                v
            }
            (
                &Layout::Box2 {
                    ax, ay, nx, ny, wx, wy,
                },
                Point::Plane(p),
            ) => {
                let range = |x: f64, a: f64, w: f64, n: usize| {
                    let lo = (((x - r - a) / w).floor() as i64 - 1).clamp(0, n as i64 - 1);
                    let hi = (((x + r - a) / w).floor() as i64 + 1).clamp(0, n as i64 - 1);
                    lo as usize..=hi as usize
                };
                let mut v = Vec::new();
                for iy in range(p[1], ay, wy, ny) {
                    for ix in range(p[0], ax, wx, nx) {
                        v.push(iy * nx + ix);
                    }
                }
                v
            }
            (&Layout::Sphere { nlat, nlon }, Point::Sphere(z)) => {
                if r >= 2.0 {
                    return (0..m).collect();
                }
                let v = sphere_vector(z);
                let mut out = cap_cells(v[2], v[0], v[1], r, nlat, nlon);
                out.sort_unstable();
                out.dedup();
                out
            }
            (&Layout::Projective { nband, nlon }, Point::Proj(v)) => {
                if r >= 2.0 {
                    return (0..m).collect();
                }
                let mut out = Vec::new();
                for s in [1.0, -1.0] {
                    for c in cap_cells(s * v[0], s * v[1], s * v[2], r, 2 * nband, nlon) {
                        let (i, j) = fold(c / nlon, c % nlon, nband, nlon);
                        out.push(i * nlon + j);
                    }
                }
                out.sort_unstable();
                out.dedup();
                out
            }
            _ => Vec::new(),
        }
    }
}

fn grid_hash(space: &Space, resolution: &[usize]) -> u64 {
    let mut text = String::from(space.name());
    let params: Vec<f64> = match *space {
        Space::Interval { a, b } => vec![a, b],
        Space::Box2 { ax, bx, ay, by } => vec![ax, bx, ay, by],
        _ => Vec::new(),
    };
    for p in params {
        let _ = write!(text, ":{:016x}", p.to_bits());
    }
    for r in resolution {
        let _ = write!(text, "/{r}");
    }
    let digest = Sha256::digest(text.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(bytes)
}

fn axis_index(x: f64, a: f64, w: f64, n: usize) -> Option<usize> {
    let u = (x - a) / w;
    if u < -SNAP || u > n as f64 + SNAP {
        return None;
    }
    Some(((u + SNAP).floor().max(0.0) as usize).min(n - 1))
}

fn lat_lon_box(i: usize, j: usize, rows: usize, nlon: usize) -> ParamBox {
    let dt = PI / rows as f64;
    let dp = TAU / nlon as f64;
    ParamBox {
        u0: i as f64 * dt,
        u1: (i + 1) as f64 * dt,
        v0: j as f64 * dp,
        v1: (j + 1) as f64 * dp,
    }
}

/// Row/column of a unit vector given its polar component `p` and the two
/// equatorial components `(e1, e2)`.
fn lat_lon_index(p: f64, e1: f64, e2: f64, rows: usize, nlon: usize) -> (usize, usize) {
    let theta = p.clamp(-1.0, 1.0).acos();
    let phi = e2.atan2(e1).rem_euclid(TAU);
    let i = ((theta / PI * rows as f64 + SNAP).floor() as usize).min(rows - 1);
    let j = ((phi / TAU * nlon as f64 + SNAP).floor() as usize) % nlon;
    (i, j)
}

/// Folds a full-sphere projective chart cell onto its upper-hemisphere twin.
fn fold(i: usize, j: usize, nband: usize, nlon: usize) -> (usize, usize) {
    if i >= nband {
        (2 * nband - 1 - i, (j + nlon / 2) % nlon)
    } else {
        (i, j)
    }
}

/// Full-sphere lat-lon cells that may meet the chordal ball of radius `r`.
fn cap_cells(p: f64, e1: f64, e2: f64, r: f64, rows: usize, nlon: usize) -> Vec<usize> {
    let alpha = 2.0 * (r / 2.0).min(1.0).asin();
    let theta = p.clamp(-1.0, 1.0).acos();
    let phi = e2.atan2(e1).rem_euclid(TAU);
    let dt = PI / rows as f64;
    let dp = TAU / nlon as f64;
    let i0 = (((theta - alpha) / dt).floor() as i64 - 1).clamp(0, rows as i64 - 1) as usize;
    let i1 = (((theta + alpha) / dt).floor() as i64 + 1).clamp(0, rows as i64 - 1) as usize;
    let all_lon = theta - alpha <= dt || theta + alpha >= PI - dt || {
        let ratio = alpha.sin() / theta.sin();
        ratio >= 1.0 || alpha >= PI / 2.0
    };
    let cols: Vec<usize> = if all_lon {
        (0..nlon).collect()
    } else {
        let dphi = (alpha.sin() / theta.sin()).asin();
        let lo = ((phi - dphi) / dp).floor() as i64 - 1;
        let hi = ((phi + dphi) / dp).floor() as i64 + 1;
        if hi - lo + 1 >= nlon as i64 {
            (0..nlon).collect()
        } else {
            (lo..=hi).map(|k| k.rem_euclid(nlon as i64) as usize).collect()
        }
    };
    let mut out = Vec::with_capacity((i1 - i0 + 1) * cols.len());
    for i in i0..=i1 {
        for &j in &cols {
            out.push(i * nlon + j);
        }
    }
    out
}

/// A set of cells of one grid.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct CellSet {
    grid: u64,
    bits: FixedBitSet,
}

impl fmt::Debug for CellSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CellSet[{:016x}]", self.grid)?;
        f.debug_set().entries(self.bits.ones()).finish()
    }
}

impl CellSet {
    pub fn empty(grid: &Grid) -> CellSet {
        CellSet::empty_with(grid.hash(), grid.len())
    }

    pub fn full(grid: &Grid) -> CellSet {
        let mut s = CellSet::empty(grid);
        s.bits.insert_range(..);
        s
    }

    pub(crate) fn empty_with(grid: u64, len: usize) -> CellSet {
        CellSet {
            grid,
            bits: FixedBitSet::with_capacity(len),
        }
    }

    pub fn from_cells(grid: &Grid, cells: impl IntoIterator<Item = usize>) -> CellSet {
        let mut s = CellSet::empty(grid);
        for c in cells {
            s.insert(c);
        }
        s
    }

    pub fn grid_hash(&self) -> u64 {
        self.grid
    }

    /// Number of cells of the underlying grid.
    pub fn universe(&self) -> usize {
        self.bits.len()
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_clear()
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.universe()
    }

    pub fn contains(&self, c: usize) -> bool {
        self.bits.contains(c)
    }

    pub fn insert(&mut self, c: usize) {
        self.bits.insert(c);
    }

    pub fn remove(&mut self, c: usize) {
        self.bits.set(c, false);
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.ones()
    }

    pub fn first(&self) -> Option<usize> {
        self.bits.ones().next()
    }

    fn check(&self, other: &CellSet) {
        assert_eq!(
            self.grid, other.grid,
            "cell sets over different grids cannot be combined"
        );
    }

    pub fn same_grid(&self, other: &CellSet) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                expected: self.grid,
                found: other.grid,
            })
        }
    }

    pub fn union(&self, other: &CellSet) -> CellSet {
        let mut s = self.clone();
        s.union_with(other);
        s
    }

    pub fn union_with(&mut self, other: &CellSet) {
        self.check(other);
        self.bits.union_with(&other.bits);
    }

    pub fn intersection(&self, other: &CellSet) -> CellSet {
        self.check(other);
        let mut s = self.clone();
        s.bits.intersect_with(&other.bits);
        s
    }

    pub fn difference(&self, other: &CellSet) -> CellSet {
        self.check(other);
        let mut s = self.clone();
        s.bits.difference_with(&other.bits);
        s
    }

    pub fn symmetric_difference(&self, other: &CellSet) -> CellSet {
        self.check(other);
        let mut s = self.clone();
        s.bits.symmetric_difference_with(&other.bits);
        s
    }

    pub fn complement(&self) -> CellSet {
        let mut s = self.clone();
        s.bits.toggle_range(..);
        s
    }

    pub fn is_subset(&self, other: &CellSet) -> bool {
        self.check(other);
        self.bits.is_subset(&other.bits)
    }

    pub fn is_disjoint(&self, other: &CellSet) -> bool {
        self.check(other);
        self.bits.is_disjoint(&other.bits)
    }

    /// CSV export: a `# grid=<hash> cells=<M>` header, then one index per line.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# grid={:016x} cells={}\n", self.grid, self.universe());
        for c in self.iter() {
            let _ = writeln!(out, "{c}");
        }
        out
    }

    pub fn from_csv(grid: &Grid, text: &str) -> Result<CellSet> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty cell set file".into()))?;
        let expected = format!("# grid={} cells={}", grid.hash_hex(), grid.len());
        if header.trim() != expected {
            let found = header
                .strip_prefix("# grid=")
                .and_then(|r| r.split_whitespace().next())
                .and_then(|h| u64::from_str_radix(h, 16).ok());
            return match found {
                Some(found) if found != grid.hash() => Err(Error::GridMismatch {
                    expected: grid.hash(),
                    found,
                }),
                _ => Err(Error::Parse(format!("bad cell set header {header:?}"))),
            };
        }
        let mut s = CellSet::empty(grid);
        for (k, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let c: usize = line
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad cell index {line:?}", k + 2)))?;
            if c >= grid.len() {
                return Err(Error::Parse(format!("line {}: cell {c} out of range", k + 2)));
            }
            s.insert(c);
        }
        Ok(s)
    }
}

/// Directed Hausdorff distance `max_{x∈X} min_{y∈Y} d(x, y)` over cell centers.
pub fn directed_hausdorff(grid: &Grid, x: &CellSet, y: &CellSet) -> f64 {
    let ys: Vec<Point> = y.iter().map(|c| grid.center(c)).collect();
    let xs: Vec<usize> = x.iter().collect();
    xs.par_iter()
        .map(|&c| {
            let p = grid.center(c);
            ys.iter()
                .map(|q| raw_distance(&p, q))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max)
}

/// Hausdorff distance between the center sets of two nonempty cell sets.
/// The value is within one grid scale of the distance between the cell unions.
pub fn hausdorff(grid: &Grid, x: &CellSet, y: &CellSet) -> Result<f64> {
    x.same_grid(y)?;
    if x.grid_hash() != grid.hash() {
        return Err(Error::GridMismatch {
            expected: grid.hash(),
            found: x.grid_hash(),
        });
    }
    if x.is_empty() || y.is_empty() {
        return Err(Error::Domain(
            "Hausdorff distance needs nonempty cell sets".into(),
        ));
    }
    Ok(directed_hausdorff(grid, x, y).max(directed_hausdorff(grid, y, x)))
}

/// Cells whose center lies strictly within `r + radius(s)` of the center of
/// some `s ∈ S`. `r = 0` returns `S`.
pub fn dilate(grid: &Grid, s: &CellSet, r: f64) -> CellSet {
    assert!(r >= 0.0, "dilation radius must be nonnegative");
    assert_eq!(s.grid_hash(), grid.hash(), "cell set from another grid");
    if r == 0.0 {
        return s.clone();
    }
    let mut out = s.clone();
    for c in s.iter() {
        let reach = r + grid.radius(c);
        let p = grid.center(c);
        for k in grid.cells_in_ball(&p, reach) {
            if raw_distance(&grid.center(k), &p) < reach * (1.0 - 1e-12) {
                out.insert(k);
            }
        }
    }
    out
}

/// Cells of `to` that contain the centers of the cells of `s` (a grid of `from`).
pub fn transfer(from: &Grid, s: &CellSet, to: &Grid) -> CellSet {
    let mut out = CellSet::empty(to);
    for c in s.iter() {
        if let Some(k) = to.point_to_cell(&from.center(c)) {
            out.insert(k);
        }
    }
    out
}
