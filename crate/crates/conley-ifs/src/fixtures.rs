//! Small relations shared by unit tests.

use std::sync::Arc;

use num_complex::Complex64;

use crate::dynamics::{Ifs, MapSpec};
use crate::geometry::{Grid, Space};
use crate::relation::{build_relation, BuildMode, BuildOptions, TransitionRelation};

pub fn build(space: Space, res: &[usize], maps: Vec<MapSpec>, mode: BuildMode) -> TransitionRelation {
    let grid = Arc::new(Grid::new(space.clone(), res).unwrap());
    let ifs = Ifs::new(space, maps, "fixture").unwrap();
    let opts = BuildOptions {
        mode,
        ..BuildOptions::default()
    };
    build_relation(&grid, &ifs, &opts).unwrap()
}

pub fn affine(a: f64, b: f64) -> MapSpec {
    MapSpec::Affine1D { a, b }
}

pub fn interval(lo: f64, hi: f64, n: usize, maps: Vec<MapSpec>) -> TransitionRelation {
    build(Space::Interval { a: lo, b: hi }, &[n], maps, BuildMode::Padded)
}

pub fn halving(n: usize) -> TransitionRelation {
    interval(0.0, 1.0, n, vec![affine(0.5, 0.0)])
}

pub fn two_halves(n: usize) -> TransitionRelation {
    interval(0.0, 1.0, n, vec![affine(0.5, 0.0), affine(0.5, 0.5)])
}

pub fn quad(lo: f64, hi: f64, n: usize) -> TransitionRelation {
    interval(lo, hi, n, vec![MapSpec::PiecewiseQuad])
}

pub fn quarter_turn() -> MapSpec {
    let zero = Complex64::new(0.0, 0.0);
    MapSpec::Moebius {
        a: Complex64::new(0.0, 1.0),
        b: zero,
        c: zero,
        d: Complex64::new(1.0, 0.0),
    }
}

pub fn rotation(n: usize) -> TransitionRelation {
    build(Space::Circle, &[n], vec![quarter_turn()], BuildMode::Padded)
}

pub fn line_attractor(nband: usize, nlon: usize) -> TransitionRelation {
    let m = [[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]];
    build(
        Space::ProjectivePlane,
        &[nband, nlon],
        vec![MapSpec::Projective3 { m }],
        BuildMode::Sampled,
    )
}
