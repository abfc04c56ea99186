//! Executes the tasks of a scenario and writes their outputs.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;

use crate::chain::{chain_graph, chain_recurrent, cmw_verify, ChainGraph, CmwReport};
use crate::coding::{
    chaos_game_labelled, coding_commute_check, point_fibered_test, CommuteReport, FiberOptions, FiberReport, FiberVerdict,
};
use crate::conley::{attractor_family, attractor_from_block, conley_record, proper_block_certificate, ConleyRecord};
use crate::geometry::{CellSet, Grid, Point, Space};
use crate::relation::TransitionRelation;
use crate::{Error, Result};

use super::persist::{self, Report};
use super::render::{render_to_file, Color, Layer, Projection, RenderSpec};
use super::scenario::{Scenario, Task};

/// Records written per run; larger families are summarized.
pub const MAX_RECORDS: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub enum TaskStatus {
    Done,
    Failed(String),
    Skipped(String),
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub tasks: Vec<(Task, TaskStatus)>,
    pub summary: Report,
}

impl RunOutcome {
    pub fn failed(&self) -> bool {
        self.tasks.iter().any(|(_, s)| !matches!(s, TaskStatus::Done))
    }
}

/// In-memory results shared between tasks.
pub struct Pipeline<'a> {
    pub scenario: &'a Scenario,
    pub grid: Arc<Grid>,
    relation: Option<TransitionRelation>,
    /// Records of the nontrivial attractors, smallest first.
    pub records: Vec<ConleyRecord>,
    pub family_size: usize,
    /// Attractor of the whole space.
    pub global: Option<CellSet>,
    pub chain: Option<ChainGraph>,
    pub cmw: Option<CmwReport>,
    pub fibers: Option<FiberReport>,
    pub commute: Option<CommuteReport>,
    pub chaos: Option<Vec<(usize, Point)>>,
    cache_dir: Option<PathBuf>,
}

impl<'a> Pipeline<'a> {
    pub fn new(scenario: &'a Scenario) -> Result<Pipeline<'a>> {
        Ok(Pipeline {
            scenario,
            grid: Arc::new(Grid::new(scenario.space.clone(), &scenario.resolution)?),
            relation: None,
            records: Vec::new(),
            family_size: 0,
            global: None,
            chain: None,
            cmw: None,
            fibers: None,
            commute: None,
            chaos: None,
            cache_dir: None,
        })
    }

    /// Uses `dir` as the relation cache.
    pub fn with_cache(mut self, dir: &Path) -> Pipeline<'a> {
        self.cache_dir = Some(dir.to_path_buf());
        self
    }

    pub fn relation(&mut self) -> Result<&TransitionRelation> {
        if self.relation.is_none() {
            let s = self.scenario;
            let rel = match &self.cache_dir {
                Some(dir) => persist::cached_relation(dir, &self.grid, &s.ifs, &s.build)?.0,
                None => crate::relation::build_relation(&self.grid, &s.ifs, &s.build)?,
            };
            log::info!("relation: {} cells, {} edges", rel.n_cells(), rel.edge_count());
            self.relation = Some(rel);
        }
        Ok(self.relation.as_ref().expect("just built"))
    }

    /// The largest nontrivial attractor.
    pub fn primary(&self) -> Option<&ConleyRecord> {
        self.records.last()
    }

    pub fn attractors(&mut self) -> Result<Report> {
        let budget = self.scenario.conley.strict_budget;
        let cap = self.scenario.conley.family_cap;
        let rel = self.relation()?.clone();
        let family = attractor_family(&rel, cap);
        let nontrivial: Vec<_> = family.nontrivial().cloned().collect();
        self.family_size = nontrivial.len();
        let keep = nontrivial.len().saturating_sub(MAX_RECORDS);
        self.records = nontrivial[keep..]
            .iter()
            .map(|m| conley_record(&rel, &m.block, budget))
            .collect::<Result<_>>()?;
        self.global = Some(attractor_from_block(&rel, &CellSet::full(rel.grid()))?);

        let mut r = Report::new();
        r.section("attractors")
            .put("cells", rel.n_cells())
            .put("edges", rel.edge_count())
            .put("build", rel.meta().mode.name())
            .put("clipped", rel.meta().clipped)
            .put("basic", family.basic)
            .put("unions", family.unions)
            .put("truncated", family.truncated)
            .put("nontrivial", self.family_size)
            .put("recorded", self.records.len())
            .put("global_attractor_cells", self.global.as_ref().map_or(0, CellSet::len));
        if self.records.is_empty() {
            let cert = proper_block_certificate(&rel);
            r.put("result", "no nontrivial attractor block found")
                .put("block_graph_components", cert.components)
                .put("proper_block_exists", cert.proper_block_exists());
        }
        for (i, rec) in self.records.iter().enumerate() {
            r.section(format!("attractor {i}"))
                .put("block_cells", rec.block.len())
                .put("attractor_cells", rec.attractor.len())
                .put("basin_cells", rec.basin.len())
                .put("extent", extent(&self.grid, &rec.attractor))
                .put("strict", rec.strict.verdict.name())
                .put("strict_sampled", rec.strict.sampled);
            if let Some(w) = rec.strict.witness {
                r.put("strict_witness", w);
                if let Some(o) = &rec.strict.witness_omega {
                    r.put("witness_omega_cells", o.len());
                }
            }
        }
        Ok(r)
    }

    pub fn repeller(&mut self) -> Result<Report> {
        let mut r = Report::new();
        r.section("repeller");
        if !self.scenario.ifs.is_invertible() {
            return Err(Error::Capability(format!(
                "dual repellers need an invertible IFS; '{}' is not",
                self.scenario.ifs.label()
            )));
        }
        r.put("pairs", self.records.len());
        for (i, rec) in self.records.iter().enumerate() {
            let dual = rec.dual.as_ref().expect("invertible systems carry duals");
            r.section(format!("pair {i}"))
                .put("dual_cells", dual.len())
                .put("extent", extent(&self.grid, dual))
                .put("attractor_meets_dual", !rec.attractor.is_disjoint(dual))
                .put("dual_meets_basin", !rec.basin.is_disjoint(dual));
        }
        Ok(r)
    }

    pub fn chain(&mut self) -> Result<Report> {
        let eps = self.scenario.chain_eps.unwrap_or_else(|| self.grid.cell_width());
        let cg = chain_graph(self.relation()?, eps)?;
        let rec = chain_recurrent(&cg);
        let mut r = Report::new();
        r.section("chain")
            .put("eps", eps)
            .put("edges", cg.edge_count())
            .put("components", cg.component_count())
            .put("recurrent_components", cg.recurrent_components().len())
            .put("recurrent_cells", rec.len())
            .put("all_recurrent", rec.is_full())
            .put("extent", extent(&self.grid, &rec));
        self.chain = Some(cg);
        Ok(r)
    }

    pub fn cmw(&mut self) -> Result<Report> {
        let rel = self.relation()?.clone();
        let cg = self.chain.as_ref().ok_or_else(|| Error::Contract("cmw needs the chain task".into()))?;
        let rep = cmw_verify(cg, &rel)?;
        let mut r = Report::new();
        r.section("cmw")
            .put("status", rep.status())
            .put("eps", rep.eps)
            .put("basic", rep.basic)
            .put("all_unions", rep.all_unions)
            .put("pairs", rep.pairs.len())
            .put("intersection_cells", rep.intersection.len())
            .put("recurrent_cells", rep.recurrent.len())
            .put("difference_cells", rep.difference.len());
        self.cmw = Some(rep);
        Ok(r)
    }

    pub fn coding(&mut self) -> Result<Report> {
        let s = self.scenario;
        let region = match self.primary() {
            Some(rec) => rec.attractor.clone(),
            None => CellSet::full(&self.grid),
        };
        let opts = FiberOptions {
            addresses: s.coding.addresses,
            points: s.coding.points,
            depth: s.coding.depth,
            tol: s.coding.tol,
            seed: s.seed,
        };
        let rep = point_fibered_test(&s.ifs, &self.grid, &region, &opts)?;
        let mut r = Report::new();
        r.section("coding")
            .put("region_cells", region.len())
            .put("addresses", rep.addresses)
            .put("points", rep.points)
            .put("depth", rep.depth)
            .put("tol", rep.tol)
            .put("verdict", rep.verdict.name())
            .put("final_diameter", format!("{:e}", rep.diameters.last().copied().unwrap_or(f64::NAN)));
        if let Some(w) = &rep.witness {
            r.put("witness_word", word(&w.word))
                .put("witness_diameter", format!("{:e}", w.diameter))
                .put("witness_previous", format!("{:e}", w.previous));
        }
        r.section("diameters");
        for (k, d) in rep.diameters.iter().enumerate() {
            r.put(k.to_string(), format!("{d:e}"));
        }
        if rep.verdict == FiberVerdict::PointFibered {
            let check = coding_commute_check(
                &s.ifs,
                &self.grid,
                &region,
                &rep,
                s.coding.commute_addresses,
                s.coding.tol,
                s.seed,
            )?;
            let worst = check.rows.iter().map(|row| row.distance - row.bound).fold(f64::NEG_INFINITY, f64::max);
            r.section("commute")
                .put("rows", check.rows.len())
                .put("pass", check.pass)
                .put("worst_excess", format!("{worst:e}"));
            self.commute = Some(check);
        }
        self.fibers = Some(rep);
        Ok(r)
    }

    pub fn chaos(&mut self) -> Result<Report> {
        let s = self.scenario;
        let x0 = match &s.chaos.start {
            Some(c) => start_point(&s.space, c)?,
            None => self.grid.center(0),
        };
        let pts = chaos_game_labelled(&s.ifs, &x0, s.chaos.steps, s.chaos.burn_in, s.seed)?;
        let inside = pts.iter().filter(|(_, p)| self.grid.point_to_cell(p).is_some()).count();
        let mut r = Report::new();
        r.section("chaos")
            .put("steps", s.chaos.steps)
            .put("burn_in", s.chaos.burn_in)
            .put("points", pts.len())
            .put("in_grid", inside)
            .put("seed", s.seed);
        self.chaos = Some(pts);
        Ok(r)
    }

    /// Layers for the image: the attractor in red (gray under chaos points,
    /// which are colored by map) and, when the repeller task runs, its dual in black.
    pub fn render_spec(&self) -> Result<RenderSpec> {
        let s = self.scenario;
        let base = match (self.primary(), &self.global) {
            (Some(rec), _) => rec.attractor.clone(),
            (None, Some(g)) => g.clone(),
            (None, None) => return Err(Error::Contract("render needs the attractors task".into())),
        };
        let base_color = if self.chaos.is_some() { Color::Gray } else { Color::Red };
        let mut layers = vec![Layer::cells(base, base_color)];
        if s.task_plan().contains(&Task::Repeller) {
            if let Some(dual) = self.primary().and_then(|r| r.dual.clone()) {
                layers.push(Layer::cells(dual, Color::Black));
            }
        }
        if let Some(pts) = &self.chaos {
            let letters = pts.iter().map(|(n, _)| *n).max().unwrap_or(1);
            for n in 1..=letters {
                let color = match n {
                    1 => Color::Red,
                    2 => Color::Green,
                    _ => Color::Blue,
                };
                let group: Vec<Point> = pts.iter().filter(|(k, _)| *k == n).map(|(_, p)| *p).collect();
                layers.push(Layer::points(group, color));
            }
        }
        Ok(RenderSpec {
            width: s.render.width,
            height: s.render.height,
            projection: Projection::for_space(&s.space),
            layers,
        })
    }

    fn write_outputs(&self, task: Task, dir: &Path) -> Result<()> {
        match task {
            Task::Attractors => {
                for (i, rec) in self.records.iter().enumerate() {
                    persist::write_cells(&dir.join(format!("attractor-{i}.csv")), &rec.attractor)?;
                    persist::write_cells(&dir.join(format!("block-{i}.csv")), &rec.block)?;
                    persist::write_cells(&dir.join(format!("basin-{i}.csv")), &rec.basin)?;
                }
            }
            Task::Repeller => {
                for (i, rec) in self.records.iter().enumerate() {
                    if let Some(d) = &rec.dual {
                        persist::write_cells(&dir.join(format!("dual-{i}.csv")), d)?;
                    }
                }
            }
            Task::Chain => {
                if let Some(cg) = &self.chain {
                    persist::write_cells(&dir.join("recurrent.csv"), &chain_recurrent(cg))?;
                }
            }
            Task::Cmw => {
                if let Some(rep) = &self.cmw {
                    persist::write_cells(&dir.join("cmw-intersection.csv"), &rep.intersection)?;
                }
            }
            Task::Chaos => {
                if let Some(pts) = &self.chaos {
                    persist::write_points(&dir.join("chaos.csv"), pts)?;
                }
            }
            Task::Render => render_to_file(&self.render_spec()?, &self.grid, &dir.join("render.ppm"))?,
            Task::Coding => {}
        }
        Ok(())
    }

    pub fn run_task(&mut self, task: Task) -> Result<Report> {
        match task {
            Task::Attractors => self.attractors(),
            Task::Repeller => self.repeller(),
            Task::Chain => self.chain(),
            Task::Cmw => self.cmw(),
            Task::Coding => self.coding(),
            Task::Chaos => self.chaos(),
            Task::Render => Ok(Report::new()),
        }
    }
}

/// Runs the scenario's task plan, writing into `dir`.
pub fn run(scenario: &Scenario, dir: &Path) -> Result<RunOutcome> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    persist::clear_failed(dir)?;
    let mut pipe = Pipeline::new(scenario)?.with_cache(dir);
    let plan = scenario.task_plan();

    let mut summary = Report::new();
    summary
        .section("scenario")
        .put("label", &scenario.label)
        .put("preset", scenario.preset.as_deref().unwrap_or("-"))
        .put("space", scenario.space.name())
        .put(
            "resolution",
            scenario.resolution.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("x"),
        )
        .put("cells", pipe.grid.len())
        .put("grid", pipe.grid.hash_hex())
        .put("maps", scenario.ifs.len())
        .put("build", scenario.build.mode.name())
        .put("samples", scenario.build.samples)
        .put("seed", scenario.seed)
        .put("tasks", plan.iter().map(|t| t.name()).collect::<Vec<_>>().join(","));
    for (i, note) in scenario.notes.iter().enumerate() {
        summary.put(format!("note{i}"), note);
    }

    let mut statuses: Vec<(Task, TaskStatus)> = Vec::new();
    for task in plan {
        let blocked = task
            .requires()
            .iter()
            .find(|dep| statuses.iter().any(|(t, s)| t == *dep && *s != TaskStatus::Done));
        if let Some(dep) = blocked {
            statuses.push((task, TaskStatus::Skipped(format!("{} did not complete", dep.name()))));
            continue;
        }
        log::info!("task {}", task.name());
        let result = pipe.run_task(task).and_then(|report| {
            if !report.to_text().is_empty() {
                persist::write_text(&dir.join(format!("{}.txt", task.name())), &report.to_text())?;
            }
            pipe.write_outputs(task, dir)
        });
        match result {
            Ok(()) => statuses.push((task, TaskStatus::Done)),
            Err(e) => {
                log::error!("task {} failed: {e}", task.name());
                persist::mark_failed(dir, task.name(), &e)?;
                statuses.push((task, TaskStatus::Failed(e.to_string())));
            }
        }
    }

    summary.section("tasks");
    for (t, s) in &statuses {
        let text = match s {
            TaskStatus::Done => "done".to_string(),
            TaskStatus::Failed(m) => format!("failed: {m}"),
            TaskStatus::Skipped(m) => format!("skipped: {m}"),
        };
        summary.put(t.name(), text);
    }
    persist::write_text(&dir.join("summary.txt"), &summary.to_text())?;
    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        tasks: statuses,
        summary,
    })
}

/// Builds a point of `space` from plain coordinates: `x` on the line, an
/// angle on the circle, `(x, y)` in a box, `(re0, im0, re1, im1)` on the
/// sphere and `(x, y, z)` in the projective plane.
pub fn start_point(space: &Space, c: &[f64]) -> Result<Point> {
    let want = match space {
        Space::Interval { .. } | Space::Circle => 1,
        Space::Box2 { .. } => 2,
        Space::RiemannSphere => 4,
        Space::ProjectivePlane => 3,
    };
    if c.len() != want {
        return Err(Error::Config(format!(
            "chaos.start: {} needs {want} coordinates, got {}",
            space.name(),
            c.len()
        )));
    }
    let p = match space {
        Space::Interval { .. } => Point::Real(c[0]),
        Space::Circle => Point::Angle(c[0]),
        Space::Box2 { .. } => Point::Plane([c[0], c[1]]),
        Space::RiemannSphere => Point::Sphere([Complex64::new(c[0], c[1]), Complex64::new(c[2], c[3])]),
        Space::ProjectivePlane => Point::Proj([c[0], c[1], c[2]]),
    };
    space.canonical(&p)
}

fn word(w: &[usize]) -> String {
    w.iter().map(|n| n.to_string()).collect()
}

/// Bounding description of a set: the covered range on 1D grids, the cell count otherwise.
fn extent(grid: &Grid, s: &CellSet) -> String {
    match grid.space() {
        Space::Interval { .. } => {
            let (Some(lo), Some(hi)) = (s.first(), s.iter().last()) else {
                return "empty".into();
            };
            let (a, b) = (grid.cell_box(lo).u0, grid.cell_box(hi).u1);
            format!("[{a:.4}, {b:.4}]")
        }
        _ => format!("{} cells", s.len()),
    }
}
