//! Binary PPM rendering of cell sets and point clouds.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::path::Path;

use crate::geometry::{sphere_vector, CellSet, Grid, Point, Space};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Color {
    Red,
    Black,
    Green,
    Gray,
    Blue,
}

impl Color {
    pub fn rgb(self) -> [u8; 3] {
        match self {
            Color::Red => [0xFF, 0x00, 0x00],
            Color::Black => [0x00, 0x00, 0x00],
            Color::Green => [0x00, 0xA0, 0x00],
            Color::Gray => [0xB4, 0xB4, 0xB4],
            Color::Blue => [0x20, 0x40, 0xFF],
        }
    }
}

const WHITE: [u8; 3] = [0xFF; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projection {
    /// Line and circle as horizontal bars, boxes as they are.
    Direct,
    /// Longitude/latitude of the unit vector.
    Equirectangular,
    /// The hemisphere `z >= 0` seen from above, antipodal boundary points identified.
    AntipodalDisk,
}

impl Projection {
    pub fn for_space(space: &Space) -> Projection {
        match space {
            Space::Interval { .. } | Space::Circle | Space::Box2 { .. } => Projection::Direct,
            Space::RiemannSphere => Projection::Equirectangular,
            Space::ProjectivePlane => Projection::AntipodalDisk,
        }
    }
}

#[derive(Clone, Debug)]
pub enum LayerContent {
    Cells(CellSet),
    Points(Vec<Point>),
}

#[derive(Clone, Debug)]
pub struct Layer {
    pub content: LayerContent,
    pub color: Color,
}

impl Layer {
    pub fn cells(set: CellSet, color: Color) -> Layer {
        Layer {
            content: LayerContent::Cells(set),
            color,
        }
    }

    pub fn points(points: Vec<Point>, color: Color) -> Layer {
        Layer {
            content: LayerContent::Points(points),
            color,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RenderSpec {
    pub width: usize,
    pub height: usize,
    pub projection: Projection,
    /// Painted in order; later layers cover earlier ones.
    pub layers: Vec<Layer>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Image {
    fn blank(width: usize, height: usize) -> Image {
        Image {
            width,
            height,
            rgb: WHITE.repeat(width * height),
        }
    }

    fn put(&mut self, x: usize, y: usize, c: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.rgb[i..i + 3].copy_from_slice(&c);
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.rgb);
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }
}

fn to_pixel(t: f64, n: usize) -> usize {
    ((t * n as f64).floor().max(0.0) as usize).min(n - 1)
}

/// Fractional image coordinates in `[0, 1]²` for a point, if it is drawable.
fn forward(space: &Space, p: &Point) -> Option<(f64, f64)> {
    match (space, p) {
        (Space::Interval { a, b }, Point::Real(x)) => Some(((x - a) / (b - a), 0.5)),
        (Space::Circle, Point::Angle(t)) => Some((t.rem_euclid(TAU) / TAU, 0.5)),
        (Space::Box2 { ax, bx, ay, by }, Point::Plane(q)) => {
            Some(((q[0] - ax) / (bx - ax), (by - q[1]) / (by - ay)))
        }
        (Space::RiemannSphere, Point::Sphere(z)) => {
            let v = sphere_vector(*z);
            let lon = v[1].atan2(v[0]);
            let lat = v[2].clamp(-1.0, 1.0).asin();
            Some(((lon + PI) / TAU, (FRAC_PI_2 - lat) / PI))
        }
        (Space::ProjectivePlane, Point::Proj(v)) => {
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if !(n > 0.0) {
                return None;
            }
            let s = if v[2] < 0.0 { -1.0 / n } else { 1.0 / n };
            Some(((s * v[0] + 1.0) / 2.0, (1.0 - s * v[1]) / 2.0))
        }
        _ => None,
    }
}

/// The point shown at fractional image coordinates, if any. Disk pixels
/// within `slack` of the rim show the nearest rim point.
fn backward(space: &Space, u: f64, v: f64, slack: f64) -> Option<Point> {
    match space {
        Space::Interval { a, b } => Some(Point::Real(a + (b - a) * u)),
        Space::Circle => Some(Point::Angle(TAU * u)),
        Space::Box2 { ax, bx, ay, by } => Some(Point::Plane([ax + (bx - ax) * u, by - (by - ay) * v])),
        Space::RiemannSphere => {
            let lon = TAU * u - PI;
            let lat = FRAC_PI_2 - PI * v;
            Some(crate::geometry::sphere_from_vector([
                lat.cos() * lon.cos(),
                lat.cos() * lon.sin(),
                lat.sin(),
            ]))
        }
        Space::ProjectivePlane => {
            let (x, y) = (2.0 * u - 1.0, 1.0 - 2.0 * v);
            let r = x.hypot(y);
            if r <= 1.0 {
                Some(Point::Proj([x, y, (1.0 - r * r).sqrt()]))
            } else {
                (r <= 1.0 + slack).then(|| Point::Proj([x / r, y / r, 0.0]))
            }
        }
    }
}

/// Renders the layers of `spec` over `grid`.
pub fn render(spec: &RenderSpec, grid: &Grid) -> Result<Image> {
    let (w, h) = (spec.width, spec.height);
    if w == 0 || h == 0 {
        return Err(Error::Config(format!("render: zero-size image {w}x{h}")));
    }
    if spec.layers.is_empty() {
        return Err(Error::Config("render: no layers".into()));
    }
    let space = grid.space();
    if Projection::for_space(space) != spec.projection {
        return Err(Error::Config(format!(
            "render: projection {:?} does not apply to {}",
            spec.projection,
            space.name()
        )));
    }
    for layer in &spec.layers {
        if let LayerContent::Cells(s) = &layer.content {
            if s.grid_hash() != grid.hash() {
                return Err(Error::GridMismatch {
                    expected: grid.hash(),
                    found: s.grid_hash(),
                });
            }
        }
    }
    let one_dim = matches!(space, Space::Interval { .. } | Space::Circle);
    let mut img = Image::blank(w, h);

    if one_dim {
        let n = spec.layers.len();
        if h < n {
            return Err(Error::Config(format!("render: height {h} is below the {n} layer bars")));
        }
        let columns: Vec<Option<usize>> = (0..w)
            .map(|x| backward(space, (x as f64 + 0.5) / w as f64, 0.5, 0.0).and_then(|p| grid.point_to_cell(&p)))
            .collect();
        for (k, layer) in spec.layers.iter().enumerate() {
            let (y0, y1) = (k * h / n, (k + 1) * h / n);
            let rgb = layer.color.rgb();
            let mut paint = |x: usize| (y0..y1).for_each(|y| img.put(x, y, rgb));
            match &layer.content {
                LayerContent::Cells(s) => {
                    for (x, c) in columns.iter().enumerate() {
                        if c.is_some_and(|c| s.contains(c)) {
                            paint(x);
                        }
                    }
                }
                LayerContent::Points(ps) => {
                    for p in ps {
                        if let Some((u, _)) = forward(space, p) {
                            if (0.0..=1.0).contains(&u) {
                                paint(to_pixel(u, w));
                            }
                        }
                    }
                }
            }
        }
        return Ok(img);
    }

    let has_cells = spec.layers.iter().any(|l| matches!(l.content, LayerContent::Cells(_)));
    let lookup: Vec<Option<usize>> = if has_cells {
        let slack = 2.0 / w.min(h) as f64;
        (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                backward(space, (x as f64 + 0.5) / w as f64, (y as f64 + 0.5) / h as f64, slack)
                    .and_then(|p| grid.point_to_cell(&p))
            })
            .collect()
    } else {
        Vec::new()
    };
    for layer in &spec.layers {
        let rgb = layer.color.rgb();
        match &layer.content {
            LayerContent::Cells(s) => {
                for (i, c) in lookup.iter().enumerate() {
                    if c.is_some_and(|c| s.contains(c)) {
                        img.put(i % w, i / w, rgb);
                    }
                }
            }
            LayerContent::Points(ps) => {
                for p in ps {
                    if let Some((u, v)) = forward(space, p) {
                        if (0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v) {
                            img.put(to_pixel(u, w), to_pixel(v, h), rgb);
                        }
                    }
                }
            }
        }
    }
    Ok(img)
}

/// Renders and writes a PPM file.
pub fn render_to_file(spec: &RenderSpec, grid: &Grid, path: &Path) -> Result<()> {
    render(spec, grid)?.write_ppm(path)
}
