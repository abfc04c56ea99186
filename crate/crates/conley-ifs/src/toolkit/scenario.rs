//! Scenario files (TOML) and their resolution against presets.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Deserialize;

use crate::coding::DEFAULT_SEED;
use crate::dynamics::{Ifs, MapSpec};
use crate::geometry::{Grid, Space};
use crate::relation::{BuildMode, BuildOptions};
use crate::{Error, Result};

use super::presets::preset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Task {
    Attractors,
    Repeller,
    Chain,
    Cmw,
    Coding,
    Chaos,
    Render,
}

impl Task {
    pub const ALL: [Task; 7] = [
        Task::Attractors,
        Task::Repeller,
        Task::Chain,
        Task::Cmw,
        Task::Coding,
        Task::Chaos,
        Task::Render,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Attractors => "attractors",
            Task::Repeller => "repeller",
            Task::Chain => "chain",
            Task::Cmw => "cmw",
            Task::Coding => "coding",
            Task::Chaos => "chaos",
            Task::Render => "render",
        }
    }

    pub fn parse(s: &str) -> Result<Task> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("tasks: unknown task '{s}'")))
    }

    /// Tasks that must run first.
    pub fn requires(self) -> &'static [Task] {
        match self {
            Task::Repeller | Task::Coding | Task::Render => &[Task::Attractors],
            Task::Cmw => &[Task::Chain],
            _ => &[],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConleyOptions {
    pub strict_budget: usize,
    pub family_cap: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CodingOptions {
    pub addresses: usize,
    pub points: usize,
    pub depth: usize,
    pub tol: f64,
    pub commute_addresses: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChaosOptions {
    pub steps: usize,
    pub burn_in: usize,
    /// Start point coordinates; `None` uses the center of cell 0.
    pub start: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOptions {
    pub width: usize,
    pub height: usize,
}

/// A fully resolved scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub label: String,
    pub preset: Option<String>,
    pub space: Space,
    pub resolution: Vec<usize>,
    pub ifs: Ifs,
    pub build: BuildOptions,
    /// Requested tasks, without dependencies.
    pub tasks: Vec<Task>,
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub conley: ConleyOptions,
    /// `None` means one cell width.
    pub chain_eps: Option<f64>,
    pub coding: CodingOptions,
    pub chaos: ChaosOptions,
    pub render: RenderOptions,
    pub notes: Vec<String>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    label: Option<String>,
    preset: Option<String>,
    m: Option<i64>,
    n: Option<i64>,
    seed: Option<u64>,
    tasks: Option<Vec<String>>,
    output: Option<PathBuf>,
    space: Option<RawSpace>,
    maps: Option<Vec<RawMap>>,
    relation: Option<RawRelation>,
    conley: Option<RawConley>,
    chain: Option<RawChain>,
    coding: Option<RawCoding>,
    chaos: Option<RawChaos>,
    render: Option<RawRender>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawSpace {
    kind: Option<String>,
    bounds: Option<Vec<f64>>,
    resolution: Option<Vec<usize>>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawMap {
    kind: String,
    a: Option<toml::Value>,
    b: Option<toml::Value>,
    c: Option<[f64; 2]>,
    d: Option<[f64; 2]>,
    m: Option<Vec<Vec<f64>>>,
    t: Option<Vec<f64>>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawRelation {
    mode: Option<String>,
    padding: Option<f64>,
    samples: Option<usize>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawConley {
    strict_budget: Option<usize>,
    family_cap: Option<usize>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawChain {
    eps: Option<f64>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawCoding {
    addresses: Option<usize>,
    points: Option<usize>,
    depth: Option<usize>,
    tol: Option<f64>,
    commute_addresses: Option<usize>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawChaos {
    steps: Option<usize>,
    burn_in: Option<usize>,
    start: Option<Vec<f64>>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RawRender {
    width: Option<usize>,
    height: Option<usize>,
}

fn field(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{path}: {msg}"))
}

fn real(path: &str, v: &Option<toml::Value>) -> Result<f64> {
    match v {
        Some(toml::Value::Float(x)) => Ok(*x),
        Some(toml::Value::Integer(x)) => Ok(*x as f64),
        Some(_) => Err(field(path, "expected a number")),
        None => Err(field(path, "missing")),
    }
}

fn complex(path: &str, v: &Option<toml::Value>) -> Result<Complex64> {
    match v {
        Some(toml::Value::Array(items)) if items.len() == 2 => {
            let parts: Vec<f64> = items
                .iter()
                .map(|x| match x {
                    toml::Value::Float(f) => Ok(*f),
                    toml::Value::Integer(i) => Ok(*i as f64),
                    _ => Err(field(path, "expected [re, im] numbers")),
                })
                .collect::<Result<_>>()?;
            Ok(Complex64::new(parts[0], parts[1]))
        }
        Some(_) => Err(field(path, "expected [re, im]")),
        None => Err(field(path, "missing")),
    }
}

fn matrix<const N: usize>(path: &str, m: &Option<Vec<Vec<f64>>>) -> Result<[[f64; N]; N]> {
    let rows = m.as_ref().ok_or_else(|| field(path, "missing"))?;
    if rows.len() != N {
        return Err(field(path, format!("expected {N} rows, got {}", rows.len())));
    }
    let mut out = [[0.0; N]; N];
    for (i, row) in rows.iter().enumerate() {
        if row.len() != N {
            return Err(field(&format!("{path}[{i}]"), format!("expected {N} entries, got {}", row.len())));
        }
        out[i].copy_from_slice(row);
    }
    Ok(out)
}

fn parse_map(k: usize, raw: &RawMap) -> Result<MapSpec> {
    let p = |name: &str| format!("maps[{k}].{name}");
    let map = match raw.kind.as_str() {
        "affine1d" => MapSpec::Affine1D {
            a: real(&p("a"), &raw.a)?,
            b: real(&p("b"), &raw.b)?,
        },
        "quad" => MapSpec::PiecewiseQuad,
        "quad_inverse" => MapSpec::PiecewiseQuadInverse,
        "moebius" => MapSpec::Moebius {
            a: complex(&p("a"), &raw.a)?,
            b: complex(&p("b"), &raw.b)?,
            c: raw.c.map(|c| Complex64::new(c[0], c[1])).ok_or_else(|| field(&p("c"), "missing"))?,
            d: raw.d.map(|d| Complex64::new(d[0], d[1])).ok_or_else(|| field(&p("d"), "missing"))?,
        },
        "projective" => MapSpec::Projective3 {
            m: matrix::<3>(&p("m"), &raw.m)?,
        },
        "affine2d" => {
            let t = raw.t.as_ref().ok_or_else(|| field(&p("t"), "missing"))?;
            if t.len() != 2 {
                return Err(field(&p("t"), format!("expected 2 entries, got {}", t.len())));
            }
            MapSpec::Affine2D {
                m: matrix::<2>(&p("m"), &raw.m)?,
                t: [t[0], t[1]],
            }
        }
        other => return Err(field(&p("kind"), format!("unknown map kind '{other}'"))),
    };
    Ok(map)
}

fn parse_space(raw: &RawSpace) -> Result<Option<Space>> {
    let Some(kind) = raw.kind.as_deref() else {
        return Ok(None);
    };
    let bounds = |n: usize| -> Result<Vec<f64>> {
        let b = raw.bounds.clone().ok_or_else(|| field("space.bounds", "missing"))?;
        if b.len() != n {
            return Err(field("space.bounds", format!("expected {n} numbers, got {}", b.len())));
        }
        Ok(b)
    };
    let space = match kind {
        "interval" => {
            let b = bounds(2)?;
            Space::Interval { a: b[0], b: b[1] }
        }
        "circle" => Space::Circle,
        "box" => {
            let b = bounds(4)?;
            Space::Box2 {
                ax: b[0],
                bx: b[1],
                ay: b[2],
                by: b[3],
            }
        }
        "sphere" => Space::RiemannSphere,
        "projective" => Space::ProjectivePlane,
        other => return Err(field("space.kind", format!("unknown space '{other}'"))),
    };
    space.validate().map_err(|e| field("space", e))?;
    Ok(Some(space))
}

fn default_resolution(space: &Space) -> Vec<usize> {
    match space {
        Space::Interval { .. } => vec![1000],
        Space::Circle => vec![360],
        Space::Box2 { .. } => vec![128, 128],
        Space::RiemannSphere | Space::ProjectivePlane => vec![64, 128],
    }
}

fn default_render(space: &Space) -> RenderOptions {
    match space {
        Space::Interval { .. } | Space::Circle | Space::RiemannSphere => RenderOptions {
            width: 512,
            height: 256,
        },
        Space::Box2 { .. } | Space::ProjectivePlane => RenderOptions {
            width: 512,
            height: 512,
        },
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Scenario> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Scenario::resolve(raw)
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: RawScenario =
            toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Scenario::resolve(raw)
    }

    /// A scenario consisting of a preset with its defaults.
    pub fn from_preset(name: &str) -> Result<Scenario> {
        Scenario::resolve(RawScenario {
            preset: Some(name.to_string()),
            ..RawScenario::default()
        })
    }

    fn resolve(raw: RawScenario) -> Result<Scenario> {
        let base = match raw.preset.as_deref() {
            Some(name) => Some(preset(name, raw.m, raw.n)?),
            None => {
                if raw.m.is_some() || raw.n.is_some() {
                    return Err(field("m/n", "parameters need a preset"));
                }
                None
            }
        };
        if base.is_some() && raw.maps.is_some() {
            return Err(field("maps", "a preset already defines the maps"));
        }
        let explicit_space = match &raw.space {
            Some(s) => parse_space(s)?,
            None => None,
        };
        let space = match (&explicit_space, &base) {
            (Some(s), _) => s.clone(),
            (None, Some(p)) => p.space.clone(),
            (None, None) => return Err(field("space.kind", "missing (no preset given)")),
        };
        let resolution = match (raw.space.as_ref().and_then(|s| s.resolution.clone()), &base) {
            (Some(r), _) => r,
            (None, Some(p)) if explicit_space.is_none() => p.resolution.clone(),
            _ => default_resolution(&space),
        };
        Grid::new(space.clone(), &resolution).map_err(|e| field("space.resolution", e))?;

        let maps = match (&raw.maps, &base) {
            (Some(ms), _) => ms
                .iter()
                .enumerate()
                .map(|(k, m)| parse_map(k, m))
                .collect::<Result<Vec<_>>>()?,
            (None, Some(p)) => p.maps.clone(),
            (None, None) => return Err(field("maps", "missing (no preset given)")),
        };
        let label = raw
            .label
            .clone()
            .or_else(|| raw.preset.clone())
            .unwrap_or_else(|| "scenario".into());
        let ifs = Ifs::new(space.clone(), maps, label.clone()).map_err(|e| field("maps", e))?;

        let mut build = base.as_ref().map(|p| p.build.clone()).unwrap_or_default();
        if let Some(r) = &raw.relation {
            if let Some(mode) = &r.mode {
                build.mode = match mode.as_str() {
                    "sampled" => BuildMode::Sampled,
                    "padded" => BuildMode::Padded,
                    other => return Err(field("relation.mode", format!("expected sampled or padded, got '{other}'"))),
                };
            }
            if r.padding.is_some() {
                build.padding = r.padding;
            }
            if let Some(s) = r.samples {
                build.samples = s;
            }
        }
        if build.samples == 0 {
            return Err(field("relation.samples", "must be at least 1"));
        }

        let tasks = match &raw.tasks {
            Some(ts) => ts.iter().map(|t| Task::parse(t)).collect::<Result<Vec<_>>>()?,
            None => base
                .as_ref()
                .map(|p| p.tasks.clone())
                .unwrap_or_else(|| vec![Task::Attractors]),
        };

        let conley = ConleyOptions {
            strict_budget: raw.conley.as_ref().and_then(|c| c.strict_budget).unwrap_or(64),
            family_cap: raw.conley.as_ref().and_then(|c| c.family_cap).unwrap_or(256),
        };
        let chain_eps = match raw.chain.as_ref().and_then(|c| c.eps) {
            Some(e) if !(e >= 0.0) => return Err(field("chain.eps", "must be nonnegative")),
            Some(e) => Some(e),
            None => base.as_ref().and_then(|p| p.chain_eps),
        };
        let c = raw.coding.as_ref();
        let coding = CodingOptions {
            addresses: c.and_then(|c| c.addresses).unwrap_or(32),
            points: c.and_then(|c| c.points).unwrap_or(16),
            depth: c.and_then(|c| c.depth).unwrap_or(60),
            tol: c.and_then(|c| c.tol).unwrap_or(1e-6),
            commute_addresses: c.and_then(|c| c.commute_addresses).unwrap_or(8),
        };
        let ch = raw.chaos.as_ref();
        let chaos = ChaosOptions {
            steps: ch.and_then(|c| c.steps).unwrap_or(100_000),
            burn_in: ch.and_then(|c| c.burn_in).unwrap_or(100),
            start: ch
                .and_then(|c| c.start.clone())
                .or_else(|| base.as_ref().and_then(|p| p.chaos_start.clone())),
        };
        if chaos.steps <= chaos.burn_in {
            return Err(field("chaos.steps", "must exceed chaos.burn_in"));
        }
        let mut render = default_render(&space);
        if let Some(r) = &raw.render {
            render.width = r.width.unwrap_or(render.width);
            render.height = r.height.unwrap_or(render.height);
        }
        if render.width == 0 || render.height == 0 {
            return Err(field("render", "image size must be positive"));
        }

        let mut notes = base.as_ref().map(|p| p.notes.clone()).unwrap_or_default();
        let grid = Grid::new(space.clone(), &resolution)?;
        if let Some(w) = invariance_warning(&grid, &ifs) {
            log::warn!("{w}");
            notes.push(w);
        }
        Ok(Scenario {
            label,
            preset: raw.preset,
            space,
            resolution,
            ifs,
            build,
            tasks,
            output: raw.output,
            seed: raw.seed.unwrap_or(DEFAULT_SEED),
            conley,
            chain_eps,
            coding,
            chaos,
            render,
            notes,
        })
    }

    /// Requested tasks plus their dependencies, in execution order.
    pub fn task_plan(&self) -> Vec<Task> {
        let mut need: Vec<Task> = Vec::new();
        let mut stack = self.tasks.clone();
        while let Some(t) = stack.pop() {
            if !need.contains(&t) {
                need.push(t);
                stack.extend_from_slice(t.requires());
            }
        }
        need.sort();
        need
    }
}

/// Samples boundary cells of interval and box domains and reports images
/// that leave the domain.
fn invariance_warning(grid: &Grid, ifs: &Ifs) -> Option<String> {
    let boundary: Vec<usize> = match grid.space() {
        Space::Interval { .. } => vec![0, grid.len() - 1],
        Space::Box2 { .. } => (0..grid.len()).filter(|&c| grid.neighbors(c).len() < 8).collect(),
        _ => return None,
    };
    let mut escapes = 0usize;
    for &c in &boundary {
        for p in grid.sample_points(c, 3) {
            for n in 0..ifs.len() {
                match ifs.eval(n, &p) {
                    Ok(q) if grid.point_to_cell(&q).is_some() => {}
                    _ => escapes += 1,
                }
            }
        }
    }
    (escapes > 0).then(|| {
        format!("declared domain is not forward-invariant: {escapes} boundary samples map outside it (images are clipped)")
    })
}
