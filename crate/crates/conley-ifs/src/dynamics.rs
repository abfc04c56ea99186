//! Map definitions, evaluation, inversion and Lipschitz bounds.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::geometry::{CellSet, Grid, Point, Space};
use crate::{Error, Result};

const DET_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum MapSpec {
    /// `x ↦ a x + b`.
    Affine1D { a: f64, b: f64 },
    /// The piecewise-quadratic law with a fixed point at every integer:
    /// `(x - n)² + n` on `[n, n+1)` for `n ≥ 0` and
    /// `-(x - n - 1)² + n + 1` for `n < 0`.
    PiecewiseQuad,
    /// Branchwise inverse of [`MapSpec::PiecewiseQuad`].
    PiecewiseQuadInverse,
    /// `z ↦ (a z + b) / (c z + d)` acting on homogeneous pairs.
    Moebius {
        a: Complex64,
        b: Complex64,
        c: Complex64,
        d: Complex64,
    },
    /// `v ↦ M v` on homogeneous 3-vectors, rows first.
    Projective3 { m: [[f64; 3]; 3] },
    /// `p ↦ M p + t`.
    Affine2D { m: [[f64; 2]; 2], t: [f64; 2] },
}

/// An upper bound on a Lipschitz constant and whether it is analytic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzEstimate {
    pub value: f64,
    pub rigorous: bool,
}

impl MapSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            MapSpec::Affine1D { .. } => "affine1d",
            MapSpec::PiecewiseQuad => "piecewise-quad",
            MapSpec::PiecewiseQuadInverse => "piecewise-quad-inverse",
            MapSpec::Moebius { .. } => "moebius",
            MapSpec::Projective3 { .. } => "projective",
            MapSpec::Affine2D { .. } => "affine2d",
        }
    }

    fn moebius_det(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Complex64 {
        a * d - b * c
    }

    pub fn is_invertible(&self) -> bool {
        match *self {
            MapSpec::Affine1D { a, .. } => a != 0.0,
            MapSpec::PiecewiseQuad | MapSpec::PiecewiseQuadInverse => true,
            MapSpec::Moebius { a, b, c, d } => Self::moebius_det(a, b, c, d).norm() > DET_TOL,
            MapSpec::Projective3 { m } => det3(&m).abs() > DET_TOL,
            MapSpec::Affine2D { m, .. } => (m[0][0] * m[1][1] - m[0][1] * m[1][0]).abs() > DET_TOL,
        }
    }

    pub fn inverse(&self) -> Result<MapSpec> {
        if !self.is_invertible() {
            return Err(Error::Capability(format!("{} map is not invertible", self.kind())));
        }
        Ok(match *self {
            MapSpec::Affine1D { a, b } => MapSpec::Affine1D {
                a: 1.0 / a,
                b: -b / a,
            },
            MapSpec::PiecewiseQuad => MapSpec::PiecewiseQuadInverse,
            MapSpec::PiecewiseQuadInverse => MapSpec::PiecewiseQuad,
            MapSpec::Moebius { a, b, c, d } => MapSpec::Moebius {
                a: d,
                b: -b,
                c: -c,
                d: a,
            },
            MapSpec::Projective3 { m } => MapSpec::Projective3 { m: inv3(&m) },
            MapSpec::Affine2D { m, t } => {
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                let inv = [
                    [m[1][1] / det, -m[0][1] / det],
                    [-m[1][0] / det, m[0][0] / det],
                ];
                MapSpec::Affine2D {
                    m: inv,
                    t: [
                        -(inv[0][0] * t[0] + inv[0][1] * t[1]),
                        -(inv[1][0] * t[0] + inv[1][1] * t[1]),
                    ],
                }
            }
        })
    }

    /// `Some(true)` for nondecreasing and `Some(false)` for decreasing real
    /// maps of an interval; `None` otherwise.
    pub fn monotone_1d(&self) -> Option<bool> {
        match *self {
            MapSpec::Affine1D { a, .. } => Some(a >= 0.0),
            MapSpec::PiecewiseQuad | MapSpec::PiecewiseQuadInverse => Some(true),
            _ => None,
        }
    }

    fn check_space(&self, space: &Space) -> Result<()> {
        let ok = matches!(
            (self, space),
            (
                MapSpec::Affine1D { .. } | MapSpec::PiecewiseQuad | MapSpec::PiecewiseQuadInverse,
                Space::Interval { .. }
            ) | (MapSpec::Moebius { .. }, Space::Circle | Space::RiemannSphere)
                | (MapSpec::Projective3 { .. }, Space::ProjectivePlane)
                | (MapSpec::Affine2D { .. }, Space::Box2 { .. })
        );
        if !ok {
            return Err(Error::Config(format!(
                "{} map cannot act on a {} space",
                self.kind(),
                space.name()
            )));
        }
        if let MapSpec::Moebius { a, b, c, d } = *self {
            if Self::moebius_det(a, b, c, d).norm() <= DET_TOL {
                return Err(Error::Config("Möbius map needs ad - bc ≠ 0".into()));
            }
            if *space == Space::Circle {
                for k in 0..16 {
                    let z = Complex64::from_polar(1.0, k as f64 * PI / 8.0 + 0.1);
                    let w = (a * z + b) / (c * z + d);
                    if !((w.norm() - 1.0).abs() < 1e-9) {
                        return Err(Error::Config(
                            "Möbius map does not preserve the unit circle".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Applies the map to a canonical point of `space`.
    pub fn eval(&self, space: &Space, p: &Point) -> Result<Point> {
        let out = match (self, *p) {
            (&MapSpec::Affine1D { a, b }, Point::Real(x)) => Point::Real(a * x + b),
            (MapSpec::PiecewiseQuad, Point::Real(x)) => Point::Real(quad(x)),
            (MapSpec::PiecewiseQuadInverse, Point::Real(x)) => Point::Real(quad_inverse(x)),
            (&MapSpec::Moebius { a, b, c, d }, Point::Angle(t)) => {
                let z = Complex64::from_polar(1.0, t);
                let den = c * z + d;
                if den.norm() < 1e-300 {
                    return Err(Error::Domain(format!("Möbius pole at angle {t}")));
                }
                Point::Angle(((a * z + b) / den).arg())
            }
            (&MapSpec::Moebius { a, b, c, d }, Point::Sphere(z)) => {
                Point::Sphere([a * z[0] + b * z[1], c * z[0] + d * z[1]])
            }
            (MapSpec::Projective3 { m }, Point::Proj(v)) => Point::Proj(mul3(m, v)),
            (MapSpec::Affine2D { m, t }, Point::Plane(q)) => Point::Plane([
                m[0][0] * q[0] + m[0][1] * q[1] + t[0],
                m[1][0] * q[0] + m[1][1] * q[1] + t[1],
            ]),
            _ => {
                return Err(Error::Domain(format!(
                    "{} map applied to {p:?}",
                    self.kind()
                )))
            }
        };
        space.canonical(&out)
    }

    /// Lipschitz bound of the map restricted to one cell.
    pub fn local_lipschitz(&self, grid: &Grid, cell: usize) -> LipschitzEstimate {
        let b = grid.cell_box(cell);
        let exact = |value| LipschitzEstimate {
            value,
            rigorous: true,
        };
        match *self {
            MapSpec::Affine1D { a, .. } => exact(a.abs()),
            MapSpec::PiecewiseQuad => exact(quad_slope_bound(b.u0, b.u1)),
            MapSpec::PiecewiseQuadInverse => exact(quad_inverse_slope_bound(b.u0, b.u1)),
            MapSpec::Affine2D { m, .. } => exact(op_norm2(&m)),
            MapSpec::Moebius { a, b: bb, c, d } if *grid.space() == Space::Circle => {
                exact(circle_moebius_bound(a, bb, c, d, b.u0, b.u1))
            }
            MapSpec::Moebius { .. } | MapSpec::Projective3 { .. } => {
                let mut best: f64 = 0.0;
                const S: usize = 5;
                for i in 0..S {
                    for j in 0..S {
                        let u = b.u0 + (b.u1 - b.u0) * i as f64 / (S - 1) as f64;
                        let v = b.v0 + (b.v1 - b.v0) * j as f64 / (S - 1) as f64;
                        best = best.max(self.derivative_norm(&grid.param_point(u, v)));
                    }
                }
                LipschitzEstimate {
                    value: 1.1 * best,
                    rigorous: false,
                }
            }
        }
    }

    /// Norm of the derivative at `p` in the metric of its space; only used
    /// for the homogeneous variants.
    fn derivative_norm(&self, p: &Point) -> f64 {
        match (self, *p) {
            (&MapSpec::Moebius { a, b, c, d }, Point::Sphere(z)) => {
                let n = z[0].norm_sqr() + z[1].norm_sqr();
                let w0 = a * z[0] + b * z[1];
                let w1 = c * z[0] + d * z[1];
                Self::moebius_det(a, b, c, d).norm() * n / (w0.norm_sqr() + w1.norm_sqr())
            }
            (MapSpec::Projective3 { m }, Point::Proj(v)) => {
                let w = mul3(m, v);
                let nw = norm(&w);
                let wh = [w[0] / nw, w[1] / nw, w[2] / nw];
                let (e1, e2) = tangent_basis(&v);
                let push = |e: [f64; 3]| {
                    let u = mul3(m, e);
                    let k = dot(&u, &wh);
                    [
                        (u[0] - k * wh[0]) / nw,
                        (u[1] - k * wh[1]) / nw,
                        (u[2] - k * wh[2]) / nw,
                    ]
                };
                let (u1, u2) = (push(e1), push(e2));
                let (g11, g12, g22) = (dot(&u1, &u1), dot(&u1, &u2), dot(&u2, &u2));
                let tr = g11 + g22;
                let disc = ((g11 - g22).powi(2) + 4.0 * g12 * g12).sqrt();
                (0.5 * (tr + disc)).sqrt()
            }
            _ => f64::INFINITY,
        }
    }
}

/// The piecewise-quadratic law.
pub fn quad(x: f64) -> f64 {
    let n = x.floor();
    if n >= 0.0 {
        (x - n) * (x - n) + n
    } else {
        -(x - n - 1.0) * (x - n - 1.0) + n + 1.0
    }
}

/// Branchwise inverse of [`quad`].
pub fn quad_inverse(y: f64) -> f64 {
    let n = y.floor();
    if n >= 0.0 {
        n + (y - n).sqrt()
    } else {
        n + 1.0 - (n + 1.0 - y).sqrt()
    }
}

/// `sup |quad'|` on `[lo, hi]`, splitting at integers.
fn quad_slope_bound(lo: f64, hi: f64) -> f64 {
    let mut best: f64 = 0.0;
    let mut n = lo.floor();
    while n <= hi {
        let (p0, p1) = (lo.max(n), hi.min(n + 1.0));
        if p0 <= p1 {
            best = best.max(if n >= 0.0 {
                2.0 * (p1 - n)
            } else {
                2.0 * (n + 1.0 - p0)
            });
        }
        n += 1.0;
    }
    best
}

/// `sup |quad_inverse'|` on `[lo, hi]`; infinite when the slope blows up inside.
fn quad_inverse_slope_bound(lo: f64, hi: f64) -> f64 {
    let mut best: f64 = 0.0;
    let mut n = lo.floor();
    while n <= hi {
        let (p0, p1) = (lo.max(n), hi.min(n + 1.0));
        if p0 <= p1 {
            let gap = if n >= 0.0 { p0 - n } else { n + 1.0 - p1 };
            best = best.max(if gap <= 0.0 {
                f64::INFINITY
            } else {
                0.5 / gap.sqrt()
            });
        }
        n += 1.0;
    }
    best
}

/// Exact `sup |f'|` over the arc `[t0, t1]` for a circle-preserving Möbius map:
/// `|f'(e^{it})| = |ad - bc| / |c e^{it} + d|²`.
fn circle_moebius_bound(a: Complex64, b: Complex64, c: Complex64, d: Complex64, t0: f64, t1: f64) -> f64 {
    let det = (a * d - b * c).norm();
    let cd = c * d.conj();
    let psi = cd.arg();
    let base = c.norm_sqr() + d.norm_sqr();
    let den = |t: f64| base + 2.0 * cd.norm() * (t + psi).cos();
    let mut lo = den(t0).min(den(t1));
    // Interior minimum where t + ψ ≡ π.
    let k = ((t0 + psi - PI) / (2.0 * PI)).ceil();
    let t_min = PI - psi + 2.0 * PI * k;
    if t_min <= t1 {
        lo = lo.min(den(t_min));
    }
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        det / lo
    }
}

fn op_norm2(m: &[[f64; 2]; 2]) -> f64 {
    let g11 = m[0][0] * m[0][0] + m[1][0] * m[1][0];
    let g22 = m[0][1] * m[0][1] + m[1][1] * m[1][1];
    let g12 = m[0][0] * m[0][1] + m[1][0] * m[1][1];
    let disc = ((g11 - g22).powi(2) + 4.0 * g12 * g12).sqrt();
    (0.5 * (g11 + g22 + disc)).sqrt()
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn mul3(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [dot(&m[0], &v), dot(&m[1], &v), dot(&m[2], &v)]
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Adjugate; equal to the inverse up to the projective scale `det`.
fn inv3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let det = det3(m);
    let s = det.abs().cbrt().copysign(det);
    let adj = [
        [c(1, 2, 1, 2), -c(0, 2, 1, 2), c(0, 1, 1, 2)],
        [-c(1, 2, 0, 2), c(0, 2, 0, 2), -c(0, 1, 0, 2)],
        [c(1, 2, 0, 1), -c(0, 2, 0, 1), c(0, 1, 0, 1)],
    ];
    adj.map(|row| row.map(|x| x / (s * s)))
}

fn tangent_basis(v: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let k = if v[0].abs() < 0.6 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d = dot(&k, v);
    let mut e1 = [k[0] - d * v[0], k[1] - d * v[1], k[2] - d * v[2]];
    let n = norm(&e1);
    e1.iter_mut().for_each(|x| *x /= n);
    let e2 = [
        v[1] * e1[2] - v[2] * e1[1],
        v[2] * e1[0] - v[0] * e1[2],
        v[0] * e1[1] - v[1] * e1[0],
    ];
    (e1, e2)
}

/// An iterated function system: a nonempty list of maps on one space.
#[derive(Clone, Debug, PartialEq)]
pub struct Ifs {
    space: Space,
    maps: Vec<MapSpec>,
    label: String,
}

impl Ifs {
    pub fn new(space: Space, maps: Vec<MapSpec>, label: impl Into<String>) -> Result<Ifs> {
        space.validate()?;
        if maps.is_empty() {
            return Err(Error::Config("an IFS needs at least one map".into()));
        }
        for (k, m) in maps.iter().enumerate() {
            m.check_space(&space)
                .map_err(|e| Error::Config(format!("map {}: {e}", k + 1)))?;
        }
        Ok(Ifs {
            space,
            maps,
            label: label.into(),
        })
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn maps(&self) -> &[MapSpec] {
        &self.maps
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn is_invertible(&self) -> bool {
        self.maps.iter().all(MapSpec::is_invertible)
    }

    /// The system of inverse maps.
    pub fn invert(&self) -> Result<Ifs> {
        let maps = self
            .maps
            .iter()
            .enumerate()
            .map(|(k, m)| {
                m.inverse()
                    .map_err(|_| Error::Capability(format!("map {} ({}) is not invertible", k + 1, m.kind())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Ifs {
            space: self.space.clone(),
            maps,
            label: format!("{} (inverse)", self.label),
        })
    }

    /// Applies map `n` (zero-based) to `p`.
    pub fn eval(&self, n: usize, p: &Point) -> Result<Point> {
        let p = self.space.canonical(p)?;
        self.maps[n].eval(&self.space, &p)
    }

    /// Lipschitz bound of map `n` over the cells of `s`.
    pub fn lipschitz_estimate(&self, n: usize, grid: &Grid, s: &CellSet) -> LipschitzEstimate {
        lipschitz_estimate(&self.maps[n], grid, s)
    }
}

/// Upper estimate of `sup d(f x, f y) / d(x, y)` over the union of the cells of `s`.
pub fn lipschitz_estimate(map: &MapSpec, grid: &Grid, s: &CellSet) -> LipschitzEstimate {
    s.iter().map(|c| map.local_lipschitz(grid, c)).fold(
        LipschitzEstimate {
            value: 0.0,
            rigorous: true,
        },
        |acc, e| LipschitzEstimate {
            value: acc.value.max(e.value),
            rigorous: acc.rigorous && e.rigorous,
        },
    )
}
