//! Bundled scenario payloads.

use num_complex::Complex64;

use crate::dynamics::MapSpec;
use crate::geometry::Space;
use crate::relation::{BuildMode, BuildOptions};
use crate::{Error, Result};

use super::scenario::Task;

/// Everything a preset contributes to a scenario.
#[derive(Clone, Debug)]
pub struct Preset {
    pub name: &'static str,
    pub space: Space,
    pub resolution: Vec<usize>,
    pub maps: Vec<MapSpec>,
    pub build: BuildOptions,
    pub tasks: Vec<Task>,
    pub chain_eps: Option<f64>,
    pub chaos_start: Option<Vec<f64>>,
    pub notes: Vec<String>,
}

pub const PRESETS: &[(&str, &str)] = &[
    ("ex-multiple", "piecewise quadratic map on the line with an attractor [-m', n'] for every pair of integers"),
    ("ex-proj-line", "projective map diag(1,2,2): the line x = 0 attracts but is not a strict attractor"),
    ("ex-rotation", "quarter turn of the circle: no attractor other than the whole circle"),
    ("paper-projective-pair", "two non-contractive projective maps with a line-fractal strict attractor"),
    ("moebius-demo", "two loxodromic Moebius maps on the Riemann sphere with an attractor-repeller pair"),
];

/// Cells per unit length on the ex-multiple line.
const MULTIPLE_DENSITY: f64 = 2000.0 / 6.2;

pub fn preset(name: &str, m: Option<i64>, n: Option<i64>) -> Result<Preset> {
    if name != "ex-multiple" && (m.is_some() || n.is_some()) {
        return Err(Error::Config(format!("preset {name} takes no m/n parameters")));
    }
    let padded = BuildOptions::default();
    let p = match name {
        "ex-multiple" => {
            let (m, n) = (m.unwrap_or(2), n.unwrap_or(3));
            if m < 0 || n < 0 {
                return Err(Error::Config(format!("ex-multiple needs m, n >= 0, got m={m}, n={n}")));
            }
            // Margins of 0.6 keep every integer well inside a cell.
            let (a, b) = (-(m as f64) - 0.6, n as f64 + 0.6);
            Preset {
                name: "ex-multiple",
                space: Space::Interval { a, b },
                resolution: vec![((b - a) * MULTIPLE_DENSITY).round() as usize],
                maps: vec![MapSpec::PiecewiseQuad],
                build: padded,
                tasks: vec![Task::Attractors, Task::Repeller, Task::Chain, Task::Cmw, Task::Render],
                chain_eps: Some(0.0),
                chaos_start: None,
                notes: vec![],
            }
        }
        "ex-proj-line" => Preset {
            name: "ex-proj-line",
            space: Space::ProjectivePlane,
            resolution: vec![64, 128],
            maps: vec![MapSpec::Projective3 {
                m: [[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]],
            }],
            build: BuildOptions {
                mode: BuildMode::Sampled,
                ..padded
            },
            tasks: vec![Task::Attractors, Task::Repeller, Task::Render],
            chain_eps: None,
            chaos_start: None,
            notes: vec![
                "orientation: diag(2,1,1) pushes points away from the line x = 0 toward [1:0:0]; \
                 the line attracts under the inverse map diag(1,2,2), which is what this preset uses"
                    .into(),
                "sampled build: padding would smear single-point limits on the line into arcs".into(),
            ],
        },
        "ex-rotation" => Preset {
            name: "ex-rotation",
            space: Space::Circle,
            resolution: vec![360],
            maps: vec![MapSpec::Moebius {
                a: Complex64::new(0.0, 1.0),
                b: Complex64::new(0.0, 0.0),
                c: Complex64::new(0.0, 0.0),
                d: Complex64::new(1.0, 0.0),
            }],
            build: padded,
            tasks: vec![Task::Attractors, Task::Chain, Task::Cmw, Task::Coding],
            chain_eps: None,
            chaos_start: None,
            notes: vec![],
        },
        "paper-projective-pair" => Preset {
            name: "paper-projective-pair",
            space: Space::ProjectivePlane,
            resolution: vec![96, 192],
            maps: vec![
                MapSpec::Projective3 {
                    m: [[41.0, -19.0, 19.0], [-19.0, 41.0, 19.0], [19.0, 19.0, 41.0]],
                },
                MapSpec::Projective3 {
                    m: [[-10.0, -1.0, 19.0], [-10.0, 21.0, 1.0], [10.0, 10.0, 10.0]],
                },
            ],
            build: padded,
            tasks: vec![Task::Attractors, Task::Coding, Task::Chaos, Task::Render],
            chain_eps: None,
            chaos_start: Some(vec![1.0, 1.0, 1.0]),
            notes: vec![],
        },
        "moebius-demo" => Preset {
            name: "moebius-demo",
            space: Space::RiemannSphere,
            resolution: vec![64, 128],
            maps: vec![
                loxodromic(Complex64::new(4.0, 0.0), Complex64::new(-0.5, 0.0), 1.0),
                loxodromic(Complex64::new(0.0, -4.0), Complex64::new(0.5, 0.5), -1.0),
            ],
            build: padded,
            tasks: vec![Task::Attractors, Task::Repeller, Task::Chaos, Task::Render],
            chain_eps: None,
            chaos_start: Some(vec![1.0, 0.0, 1.0, 0.0]),
            notes: vec!["representative parameters: two loxodromic maps chosen for a well separated attractor and repeller".into()],
        },
        other => {
            let names: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
            return Err(Error::Config(format!(
                "unknown preset '{other}'; available: {}",
                names.join(", ")
            )));
        }
    };
    Ok(p)
}

/// `G ∘ (z ↦ λz) ∘ G⁻¹` with `G(z) = (r z + a) / (z + 1)`: attracting fixed
/// point `a`, repelling fixed point `r`, multiplier `λ = 0.5·e^{±iπ/4}`.
fn loxodromic(r: Complex64, a: Complex64, turn: f64) -> MapSpec {
    let lam = Complex64::from_polar(0.5, turn * std::f64::consts::FRAC_PI_4);
    MapSpec::Moebius {
        a: r * lam - a,
        b: a * r * (Complex64::new(1.0, 0.0) - lam),
        c: lam - 1.0,
        d: r - lam * a,
    }
}
