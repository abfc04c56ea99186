//! Invariant checks over a scenario run, plus expectations for bundled presets.

use crate::coding::FiberVerdict;
use crate::conley::{interior, is_block, omega_limit, Verdict};
use crate::geometry::{dilate, CellSet};
use crate::relation::TransitionRelation;
use crate::Result;

use super::runner::Pipeline;
use super::scenario::Scenario;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Check {
        Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// Runs every planned task in memory and checks the results.
pub fn verify(scenario: &Scenario) -> Result<Vec<Check>> {
    let mut pipe = Pipeline::new(scenario)?;
    for task in scenario.task_plan() {
        pipe.run_task(task)?;
    }
    let rel = pipe.relation()?.clone();
    let mut checks = Vec::new();

    let back = TransitionRelation::from_bytes(&rel.to_bytes(), rel.grid_arc().clone())?;
    checks.push(Check::new(
        "relation cache round-trip",
        back.adjacency() == rel.adjacency(),
        format!("{} edges", rel.edge_count()),
    ));

    if !pipe.records.is_empty() {
        checks.extend(record_checks(&pipe, &rel));
    }
    if let Some(rep) = &pipe.cmw {
        checks.push(Check::new(
            "chain-recurrent set equals the pair intersection",
            rep.pass,
            format!("{} ({} cells differ)", rep.status(), rep.difference.len()),
        ));
    }
    if let Some(c) = &pipe.commute {
        checks.push(Check::new("coding map commutes with the maps", c.pass, format!("{} rows", c.rows.len())));
    }
    if let (Some(pts), Some(rec)) = (&pipe.chaos, pipe.primary()) {
        let halo = dilate(&pipe.grid, &rec.attractor, pipe.grid.cell_width());
        let outside = pts
            .iter()
            .filter(|(_, p)| !pipe.grid.point_to_cell(p).is_some_and(|c| halo.contains(c)))
            .count();
        checks.push(Check::new(
            "chaos points lie near the attractor",
            outside == 0,
            format!("{outside} of {} points outside the 1-cell dilation", pts.len()),
        ));
    }
    checks.extend(preset_checks(scenario, &pipe));
    Ok(checks)
}

fn record_checks(pipe: &Pipeline, rel: &TransitionRelation) -> Vec<Check> {
    let full = CellSet::full(rel.grid());
    let reversed = rel.meta().invertible.then(|| rel.reverse());
    let (mut blocks, mut omega, mut disjoint, mut basin, mut dual_block) = (true, true, true, true, true);
    for rec in &pipe.records {
        blocks &= is_block(rel, &rec.block).holds;
        omega &= omega_limit(rel, &rec.block) == rec.attractor;
        if let (Some(dual), Some(rev)) = (&rec.dual, &reversed) {
            disjoint &= rec.attractor.is_disjoint(dual);
            basin &= rec.basin.is_disjoint(dual);
            dual_block &= is_block(rev, &full.difference(&interior(rel.grid(), &rec.block))).holds;
        }
    }
    let n = pipe.records.len();
    let mut out = vec![
        Check::new("recorded blocks are blocks", blocks, format!("{n} blocks")),
        Check::new("attractor equals omega-limit of its block", omega, format!("{n} blocks")),
    ];
    if reversed.is_some() {
        out.push(Check::new("attractor and dual are disjoint", disjoint, ""));
        out.push(Check::new("dual misses the basin", basin, ""));
        out.push(Check::new("complement of a block interior is a reverse block", dual_block, ""));
    }
    out
}

fn preset_checks(scenario: &Scenario, pipe: &Pipeline) -> Vec<Check> {
    let mut out = Vec::new();
    match scenario.preset.as_deref() {
        Some("ex-rotation") => {
            out.push(Check::new(
                "rotation has no nontrivial attractor",
                pipe.records.is_empty(),
                format!("{} found", pipe.records.len()),
            ));
            if let Some(cg) = &pipe.chain {
                let r = crate::chain::chain_recurrent(cg);
                out.push(Check::new("every arc is chain recurrent", r.is_full(), format!("{} cells", r.len())));
            }
            if let Some(f) = &pipe.fibers {
                out.push(Check::new(
                    "rotation is not point-fibered",
                    f.verdict == FiberVerdict::NotPointFibered && f.witness.is_some(),
                    f.verdict.name(),
                ));
            }
        }
        Some("ex-proj-line") => {
            let verdict = pipe.primary().map(|r| r.strict.verdict);
            out.push(Check::new(
                "projective line attractor is not strict",
                verdict == Some(Verdict::NotStrict),
                verdict.map_or("no attractor", Verdict::name),
            ));
        }
        Some("paper-projective-pair") => {
            if let Some(f) = &pipe.fibers {
                let last = f.diameters.last().copied().unwrap_or(f64::NAN);
                out.push(Check::new(
                    "projective pair is point-fibered",
                    f.verdict == FiberVerdict::PointFibered,
                    format!("{} (final diameter {last:e})", f.verdict.name()),
                ));
            }
        }
        Some("ex-multiple") => {
            let (m, n) = multiple_params(scenario);
            let expected = (m + 1) * (n + 1);
            out.push(Check::new(
                "one attractor per integer interval",
                pipe.family_size >= expected,
                format!("{} nontrivial, at least {expected} expected", pipe.family_size),
            ));
        }
        _ => {}
    }
    out
}

/// `(m, n)` read back from the ex-multiple domain `[-m - 0.6, n + 0.6]`.
fn multiple_params(scenario: &Scenario) -> (usize, usize) {
    match scenario.space {
        crate::geometry::Space::Interval { a, b } => ((-a - 0.6).round() as usize, (b - 0.6).round() as usize),
        _ => (0, 0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_preset_verifies() {
        let s = Scenario::from_preset("ex-rotation").unwrap();
        let checks = verify(&s).unwrap();
        for c in &checks {
            assert!(c.pass, "{}: {}", c.name, c.detail);
        }
        assert!(checks.iter().any(|c| c.name == "rotation is not point-fibered"));
    }
}
