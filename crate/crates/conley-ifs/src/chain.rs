//! ε-chain graphs, chain-recurrent sets and the attractor/dual-repeller
//! intersection identity.

use rayon::prelude::*;

use crate::conley::{basin, descend, find_block, omega_limit};
use crate::geometry::{raw_distance, CellSet};
use crate::relation::TransitionRelation;
use crate::{Error, Result};

/// Cell graph with `c → c'` whenever `c'` lies in the ε-dilation of `F#(c)`.
#[derive(Clone, Debug)]
pub struct ChainGraph {
    rel: TransitionRelation,
    eps: f64,
}

impl ChainGraph {
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// The chain graph as a single-map relation.
    pub fn relation(&self) -> &TransitionRelation {
        &self.rel
    }

    pub fn edge_count(&self) -> usize {
        self.rel.edge_count()
    }

    pub fn component_count(&self) -> usize {
        self.rel.scc().comps.len()
    }

    /// Cell sets of the components carrying a cycle.
    pub fn recurrent_components(&self) -> Vec<CellSet> {
        let scc = self.rel.scc();
        scc.comps
            .iter()
            .zip(&scc.recurrent)
            .filter(|(_, &r)| r)
            .map(|(m, _)| CellSet::from_cells(self.rel.grid(), m.iter().map(|&c| c as usize)))
            .collect()
    }

    /// The chain graph of the reversed relation.
    pub fn reversed(&self) -> ChainGraph {
        ChainGraph {
            rel: self.rel.reverse(),
            eps: self.eps,
        }
    }
}

pub fn chain_graph(rel: &TransitionRelation, eps: f64) -> Result<ChainGraph> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("chain epsilon must be finite and nonnegative, got {eps}")));
    }
    let grid = rel.grid();
    let adj: Vec<Vec<u32>> = if eps == 0.0 {
        rel.adjacency().to_vec()
    } else {
        (0..rel.n_cells())
            .into_par_iter()
            .map(|c| {
                let mut out = Vec::new();
                for &t in rel.targets(c) {
                    let t = t as usize;
                    let p = grid.center(t);
                    let reach = eps + grid.radius(t);
                    out.push(t as u32);
                    for k in grid.cells_in_ball(&p, reach) {
                        if raw_distance(&grid.center(k), &p) < reach * (1.0 - 1e-12) {
                            out.push(k as u32);
                        }
                    }
                }
                out.sort_unstable();
                out.dedup();
                out
            })
            .collect()
    };
    let rel = TransitionRelation::from_parts(rel.grid_arc().clone(), vec![adj], rel.meta().clone())?;
    Ok(ChainGraph { rel, eps })
}

/// Cells lying on a directed cycle of the chain graph.
pub fn chain_recurrent(cg: &ChainGraph) -> CellSet {
    let mut out = CellSet::empty(cg.rel.grid());
    for s in cg.recurrent_components() {
        out.union_with(&s);
    }
    out
}

fn reach(rel: &TransitionRelation, s: &CellSet) -> CellSet {
    let mut out = s.clone();
    let mut stack: Vec<usize> = s.iter().collect();
    while let Some(c) = stack.pop() {
        for &t in rel.targets(c) {
            if !out.contains(t as usize) {
                out.insert(t as usize);
                stack.push(t as usize);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasicAttractor {
    pub attractor: CellSet,
    /// Forward-reachable set of the generating component.
    pub reach: CellSet,
    /// A block for the attractor exists in the chain relation.
    pub blocked: bool,
}

/// `ω(reach(M))` for each recurrent component `M`. Components with the same
/// attractor are merged and their reachable sets joined.
pub fn basic_attractors(cg: &ChainGraph) -> Vec<BasicAttractor> {
    let mut out: Vec<BasicAttractor> = Vec::new();
    for m in cg.recurrent_components() {
        let t = reach(&cg.rel, &m);
        let attractor = omega_limit(&cg.rel, &t);
        match out.iter_mut().find(|b| b.attractor == attractor) {
            Some(b) => b.reach.union_with(&t),
            None => out.push(BasicAttractor {
                attractor,
                reach: t,
                blocked: false,
            }),
        }
    }
    let full = CellSet::full(cg.rel.grid());
    for b in &mut out {
        b.blocked = find_block(&cg.rel, &b.attractor, &full).is_ok();
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct CmwPair {
    pub attractor: CellSet,
    pub dual: CellSet,
}

#[derive(Clone, Debug)]
pub struct CmwReport {
    pub eps: f64,
    pub basic: usize,
    /// Every union of basic attractors was enumerated; otherwise only pairs.
    pub all_unions: bool,
    pub pairs: Vec<CmwPair>,
    pub intersection: CellSet,
    pub recurrent: CellSet,
    pub difference: CellSet,
    pub pass: bool,
}

impl CmwReport {
    pub fn status(&self) -> &'static str {
        match (self.pass, self.all_unions) {
            (true, true) => "pass",
            (true, false) => "pass (pairs only)",
            (false, _) => "fail",
        }
    }
}

/// Intersects `A ∪ A*` over the attractor family generated by the basic
/// attractors and compares the result with the chain-recurrent set.
pub fn cmw_verify(cg: &ChainGraph, rel: &TransitionRelation) -> Result<CmwReport> {
    if !rel.meta().invertible {
        return Err(Error::Capability(
            "the chain-recurrence identity needs dual repellers, which need an invertible IFS".into(),
        ));
    }
    if rel.grid().hash() != cg.rel.grid().hash() {
        return Err(Error::GridMismatch {
            expected: cg.rel.grid().hash(),
            found: rel.grid().hash(),
        });
    }
    let grid = cg.rel.grid();
    let basics = basic_attractors(cg);
    let all_unions = basics.len() <= crate::conley::UNION_LIMIT;
    if !all_unions {
        log::warn!(
            "{} basic attractors exceed the union limit {}; intersecting over pairs only",
            basics.len(),
            crate::conley::UNION_LIMIT
        );
    }
    let masks: Vec<u64> = if all_unions {
        (0..1u64 << basics.len()).collect()
    } else {
        let n = basics.len();
        let mut v = vec![0u64];
        for i in 0..n {
            for j in i..n {
                v.push((1 << i) | (1 << j));
            }
        }
        v
    };
    let mut keys: Vec<(CellSet, CellSet)> = Vec::new();
    let full = CellSet::full(grid);
    keys.push((descend(&cg.rel, &full), full.clone()));
    for mask in masks {
        let mut a = CellSet::empty(grid);
        let mut t = CellSet::empty(grid);
        for (i, b) in basics.iter().enumerate() {
            if mask & (1 << i) != 0 {
                a.union_with(&b.attractor);
                t.union_with(&b.reach);
            }
        }
        if !keys.iter().any(|(ka, kt)| *ka == a && *kt == t) {
            keys.push((a, t));
        }
    }
    let rev = cg.rel.reverse();
    let pairs: Vec<CmwPair> = keys
        .into_par_iter()
        .map(|(attractor, t)| {
            let dual = descend(&rev, &t.complement());
            CmwPair { attractor, dual }
        })
        .collect();
    let mut intersection = full;
    for p in &pairs {
        intersection = intersection.intersection(&p.attractor.union(&p.dual));
    }
    let recurrent = chain_recurrent(cg);
    let difference = intersection.symmetric_difference(&recurrent);
    Ok(CmwReport {
        eps: cg.eps,
        basic: basics.len(),
        all_unions,
        pass: difference.is_empty(),
        pairs,
        intersection,
        recurrent,
        difference,
    })
}

/// Attractor-repeller pairs of the chain relation whose dual misses the basin.
pub fn dual_misses_basin(cg: &ChainGraph, pair: &CmwPair) -> bool {
    pair.dual.is_disjoint(&basin(&cg.rel, &pair.attractor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::geometry::{dilate, hausdorff};
    use proptest::prelude::*;

    fn integer_cells(rel: &TransitionRelation, ks: impl IntoIterator<Item = i32>) -> CellSet {
        let g = rel.grid();
        let mut s = CellSet::empty(g);
        for k in ks {
            // Cells touching the integer, which may sit on a cell boundary.
            s.union_with(&g.cells_of_interval(k as f64 - 1e-7, k as f64 + 1e-7));
        }
        s
    }

    #[test]
    fn zero_epsilon_keeps_base_edges() {
        let rel = fixtures::quad(-2.5, 2.5, 200);
        let cg = chain_graph(&rel, 0.0).unwrap();
        assert_eq!(cg.relation().adjacency(), rel.adjacency());
        assert!(chain_graph(&rel, -1.0).is_err());
    }

    #[test]
    fn rotation_splits_into_even_and_odd_cycles() {
        let rot = fixtures::rotation(8);
        let cg = chain_graph(&rot, 0.0).unwrap();
        let comps = cg.recurrent_components();
        assert_eq!(comps.len(), 2);
        let g = rot.grid();
        let evens = CellSet::from_cells(g, [0, 2, 4, 6]);
        assert!(comps.contains(&evens) && comps.contains(&evens.complement()));
        assert!(chain_recurrent(&cg).is_full());
        let basics = basic_attractors(&cg);
        assert_eq!(basics.len(), 2);
        assert!(basics.iter().all(|b| !b.blocked));
        let report = cmw_verify(&cg, &rot).unwrap();
        assert!(report.pass && report.intersection.is_full());
    }

    #[test]
    fn quad_recurrence_sits_on_integers() {
        let rel = fixtures::quad(-2.5, 2.5, 1000);
        let g = rel.grid();
        let cg = chain_graph(&rel, g.cell_width()).unwrap();
        let r = chain_recurrent(&cg);
        let expected = integer_cells(&rel, -2..=2);
        assert!(r.is_subset(&dilate(g, &expected, 3.0 * g.cell_width())));
        assert!(expected.is_subset(&r));
        let r0 = chain_recurrent(&chain_graph(&rel, 0.0).unwrap());
        assert!(r0.is_subset(&dilate(g, &expected, g.cell_width())));
        assert!(expected.is_subset(&r0));
        // One recurrent component around each integer.
        let comps = cg.recurrent_components();
        for k in -2..=2 {
            let cell = integer_cells(&rel, [k]);
            assert_eq!(comps.iter().filter(|m| !m.is_disjoint(&cell)).count(), 1);
        }
    }

    #[test]
    fn halving_has_one_recurrent_cell() {
        let rel = fixtures::interval(-1.0, 1.0, 41, vec![fixtures::affine(0.5, 0.0)]);
        let cg = chain_graph(&rel, 0.0).unwrap();
        let g = rel.grid();
        let zero = g.cells_of_interval(0.0, 0.0);
        // Cells next to the fixed cell overlap their own image, so they carry self-loops.
        let r = chain_recurrent(&cg);
        assert!(zero.is_subset(&r));
        assert!(r.is_subset(&dilate(g, &zero, g.cell_width())));
        let basics = basic_attractors(&cg);
        assert!(basics.iter().any(|b| b.attractor == zero));
        for b in &basics {
            assert!(zero.is_subset(&b.attractor) && b.attractor.is_subset(&r));
        }
        let report = cmw_verify(&cg, &rel).unwrap();
        assert!(report.pass, "{:?}", report.difference);
    }

    #[test]
    fn cmw_identity_on_integer_intervals() {
        let rel = fixtures::quad(-2.6, 3.6, 2000);
        let cg = chain_graph(&rel, 0.0).unwrap();
        let report = cmw_verify(&cg, &rel).unwrap();
        assert!(report.all_unions);
        assert!(report.pass, "difference {:?}", report.difference.iter().collect::<Vec<_>>());
        let g = rel.grid();
        let expected = integer_cells(&rel, -2..=3);
        assert!(hausdorff(g, &report.recurrent, &expected).unwrap() <= g.cell_width() + 1e-12);
        for p in &report.pairs {
            assert!(p.attractor.is_disjoint(&p.dual));
            assert!(dual_misses_basin(&cg, p));
        }
        for b in basic_attractors(&cg) {
            assert!(cg.relation().image(&b.reach).is_subset(&b.reach));
            assert_eq!(cg.relation().image(&b.attractor), b.attractor);
        }
    }

    #[test]
    fn non_invertible_systems_are_refused() {
        let rel = fixtures::interval(0.0, 1.0, 8, vec![fixtures::affine(0.0, 0.5)]);
        let cg = chain_graph(&rel, 0.0).unwrap();
        assert!(matches!(cmw_verify(&cg, &rel), Err(Error::Capability(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn reversal_and_epsilon_monotonicity(e1 in 0.0f64..0.05, e2 in 0.0f64..0.05) {
            let rel = fixtures::quad(-2.5, 2.5, 300);
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let a = chain_graph(&rel, lo).unwrap();
            let b = chain_graph(&rel, hi).unwrap();
            prop_assert!(chain_recurrent(&a).is_subset(&chain_recurrent(&b)));
            prop_assert_eq!(chain_recurrent(&a), chain_recurrent(&a.reversed()));
            for c in 0..rel.n_cells() {
                for t in rel.targets(c) {
                    prop_assert!(a.relation().targets(c).contains(t));
                }
            }
        }
    }
}
