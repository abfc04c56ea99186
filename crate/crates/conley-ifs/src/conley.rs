//! Attractor blocks, Conley attractors, ω-limits, basins, dual repellers and
//! strictness at cell level.
//!
//! A cell set `Q` is a block when `F#(Q)` lies in the combinatorial interior
//! of `Q`. Blocks are exactly the forward-closed sets of the auxiliary graph
//! `c → F#(c) ∪ neighbors(F#(c))`, which gives both the smallest block around
//! a set and a finite certificate for the absence of proper blocks.

use std::collections::HashMap;

use crate::geometry::{CellSet, Grid};
use crate::graph::Scc;
use crate::relation::{BuildMeta, TransitionRelation};
use crate::{Error, Result};

/// Cells of `q` whose grid neighbors all lie in `q`. Cells on the edge of an
/// interval or box domain simply have fewer neighbors.
pub fn interior(grid: &Grid, q: &CellSet) -> CellSet {
    let mut out = CellSet::empty(grid);
    for c in q.iter() {
        if grid.neighbors(c).iter().all(|&k| q.contains(k as usize)) {
            out.insert(c);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockCheck {
    pub holds: bool,
    /// Cells of `F#(Q)` outside the interior of `Q`.
    pub offending: CellSet,
}

pub fn is_block(rel: &TransitionRelation, q: &CellSet) -> BlockCheck {
    let offending = rel.image(q).difference(&interior(rel.grid(), q));
    BlockCheck {
        holds: offending.is_empty(),
        offending,
    }
}

/// Iterates `A ← F#(A) ∩ Q` from `A = Q` until it stabilizes.
pub(crate) fn descend(rel: &TransitionRelation, q: &CellSet) -> CellSet {
    let mut a = q.clone();
    loop {
        let next = rel.image(&a).intersection(q);
        if next == a {
            return a;
        }
        a = next;
    }
}

/// The attractor `⋂ F#^k(Q)` of a block.
pub fn attractor_from_block(rel: &TransitionRelation, q: &CellSet) -> Result<CellSet> {
    let check = is_block(rel, q);
    if !check.holds {
        return Err(Error::Contract(format!(
            "not an attractor block: {} image cells leave the interior (first: {:?})",
            check.offending.len(),
            check.offending.first()
        )));
    }
    Ok(descend(rel, q))
}

/// Transient length and period of the sequence `S, F#(S), F#²(S), …`,
/// together with the visited sets.
fn orbit(rel: &TransitionRelation, s: &CellSet) -> (Vec<CellSet>, usize) {
    let mut seen: HashMap<CellSet, usize> = HashMap::new();
    let mut seq = Vec::new();
    let mut cur = s.clone();
    loop {
        if let Some(&start) = seen.get(&cur) {
            return (seq, start);
        }
        seen.insert(cur.clone(), seq.len());
        let next = rel.image(&cur);
        seq.push(cur);
        cur = next;
    }
}

/// Union of one period of the eventually periodic sequence `F#^k(S)`.
pub fn omega_limit(rel: &TransitionRelation, s: &CellSet) -> CellSet {
    let (seq, start) = orbit(rel, s);
    let mut out = CellSet::empty(rel.grid());
    for set in &seq[start..] {
        out.union_with(set);
    }
    out
}

/// Cells from which every reachable recurrent component lies inside `a`.
pub fn basin(rel: &TransitionRelation, a: &CellSet) -> CellSet {
    let scc = rel.scc();
    let adj = rel.adjacency();
    let mut bad = vec![false; scc.comps.len()];
    for k in 0..scc.comps.len() {
        let own = scc.recurrent[k] && scc.comps[k].iter().any(|&c| !a.contains(c as usize));
        bad[k] = own || scc.successors(adj, k).iter().any(|&j| bad[j as usize]);
    }
    let mut out = CellSet::empty(rel.grid());
    for (k, members) in scc.comps.iter().enumerate() {
        if !bad[k] {
            members.iter().for_each(|&c| out.insert(c as usize));
        }
    }
    out
}

/// Forward closure of `s` in the block graph `c → F#(c) ∪ neighbors(F#(c))`:
/// the smallest block containing `s`.
pub fn block_closure(rel: &TransitionRelation, s: &CellSet) -> CellSet {
    let grid = rel.grid();
    let mut out = s.clone();
    let mut stack: Vec<usize> = s.iter().collect();
    while let Some(c) = stack.pop() {
        for &t in rel.targets(c) {
            let t = t as usize;
            for k in std::iter::once(t).chain(grid.neighbors(t).iter().map(|&k| k as usize)) {
                if !out.contains(k) {
                    out.insert(k);
                    stack.push(k);
                }
            }
        }
    }
    out
}

fn block_graph(rel: &TransitionRelation) -> Vec<Vec<u32>> {
    let grid = rel.grid();
    (0..rel.n_cells())
        .map(|c| {
            let mut v: Vec<u32> = rel
                .targets(c)
                .iter()
                .flat_map(|&t| std::iter::once(t).chain(grid.neighbors(t as usize).iter().copied()))
                .collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect()
}

/// Finds a block `Q` with `A ⊆ Q ⊆ N` whose attractor is `A`.
///
/// The construction shrinks `U = N ∩ basin(A)` to `V = interior(U)`, pulls
/// `V` back until all forward images of `O` stay in `V`, then builds the
/// layers `O_k` backwards from `O_K = O` and returns their union. If that
/// union fails verification the smallest block containing `A` is tried; when
/// it also fails, no block for `A` exists inside `N` at this resolution.
pub fn find_block(rel: &TransitionRelation, a: &CellSet, n: &CellSet) -> Result<CellSet> {
    if !a.is_subset(n) {
        return Err(Error::Contract("the attractor candidate is not inside the neighborhood".into()));
    }
    if rel.image(a) != *a {
        return Err(Error::Contract("the attractor candidate is not invariant: F#(A) != A".into()));
    }
    let verify = |q: &CellSet| -> std::result::Result<(), String> {
        if !is_block(rel, q).holds {
            return Err("candidate is not a block".into());
        }
        if !a.is_subset(q) || !q.is_subset(n) {
            return Err("candidate does not sit between A and N".into());
        }
        if descend(rel, q) != *a {
            return Err("candidate block has a larger attractor".into());
        }
        Ok(())
    };
    let layered = layered_block(rel, a, n).and_then(|q| verify(&q).map(|_| q));
    match layered {
        Ok(q) => Ok(q),
        Err(reason) => {
            log::debug!("layered block construction failed: {reason}");
            let q = block_closure(rel, a);
            if !q.is_subset(n) {
                return Err(Error::Domain(format!(
                    "no attractor block inside the neighborhood: the smallest block around A leaves it by {} cells",
                    q.difference(n).len()
                )));
            }
            verify(&q).map_err(|r| Error::Domain(format!("no attractor block for A at this resolution: {r}")))?;
            Ok(q)
        }
    }
}

fn layered_block(rel: &TransitionRelation, a: &CellSet, n: &CellSet) -> std::result::Result<CellSet, String> {
    let grid = rel.grid();
    let u = n.intersection(&basin(rel, a));
    let v = interior(grid, &u);
    if !a.is_subset(&v) {
        return Err("A does not fit inside the interior of N ∩ basin".into());
    }
    let (seq, start) = orbit(rel, &v);
    if seq[start..].iter().any(|s| !s.is_subset(&v)) {
        return Err("forward images of V never settle inside V".into());
    }
    let m = seq.iter().rposition(|s| !s.is_subset(&v)).map_or(0, |k| k);
    let mut o = v.clone();
    for _ in 0..m {
        o = v.intersection(&rel.preimage_all(&o));
    }
    let inner = interior(grid, &o);
    let mut k_steps = 0usize;
    let mut img = o.clone();
    let mut seen: HashMap<CellSet, usize> = HashMap::new();
    loop {
        img = rel.image(&img);
        k_steps += 1;
        if img.is_subset(&inner) {
            break;
        }
        if seen.insert(img.clone(), k_steps).is_some() {
            return Err("forward images of O never enter its interior".into());
        }
    }
    let mut layer = o;
    let mut q = CellSet::empty(grid);
    for _ in 0..k_steps {
        layer = u.intersection(&rel.preimage_all(&interior(grid, &layer)));
        q.union_with(&layer);
    }
    Ok(q)
}

/// Attractor of the reversed relation inside `X ∖ Q`.
pub fn dual_repeller(rel: &TransitionRelation, q: &CellSet) -> Result<CellSet> {
    if !rel.meta().invertible {
        return Err(Error::Capability(
            "dual repellers need an invertible IFS; this relation was built from a non-invertible one".into(),
        ));
    }
    let check = is_block(rel, q);
    if !check.holds {
        return Err(Error::Contract(format!(
            "dual repeller needs a block; {} image cells leave the interior",
            check.offending.len()
        )));
    }
    Ok(descend(&rel.reverse(), &q.complement()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Strict,
    NotStrict,
    Inconclusive,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Strict => "strict",
            Verdict::NotStrict => "not_strict",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrictReport {
    pub verdict: Verdict,
    /// Cell whose ω-limit differs from the attractor.
    pub witness: Option<usize>,
    pub witness_omega: Option<CellSet>,
    pub sampled: usize,
    pub candidates: usize,
}

/// Checks `ω({c}) = A` for up to `budget` singleton cells of `B`, starting with cells outside `A`.
pub fn is_strict(rel: &TransitionRelation, a: &CellSet, b: &CellSet, budget: usize) -> StrictReport {
    let outside: Vec<usize> = b.difference(a).iter().collect();
    let inside: Vec<usize> = a.intersection(b).iter().collect();
    let candidates = outside.len() + inside.len();
    let order = spread(&outside, budget).into_iter().chain(spread(&inside, budget));
    let mut sampled = 0;
    for c in order.take(budget) {
        sampled += 1;
        let w = omega_limit(rel, &CellSet::from_cells(rel.grid(), [c]));
        if w != *a {
            return StrictReport {
                verdict: Verdict::NotStrict,
                witness: Some(c),
                witness_omega: Some(w),
                sampled,
                candidates,
            };
        }
    }
    StrictReport {
        verdict: if sampled == candidates {
            Verdict::Strict
        } else {
            Verdict::Inconclusive
        },
        witness: None,
        witness_omega: None,
        sampled,
        candidates,
    }
}

/// Up to `k` evenly spaced entries of `v`.
fn spread(v: &[usize], k: usize) -> Vec<usize> {
    if v.len() <= k {
        return v.to_vec();
    }
    (0..k).map(|i| v[i * v.len() / k]).collect()
}

#[derive(Clone, Debug)]
pub struct ConleyRecord {
    pub block: CellSet,
    pub attractor: CellSet,
    pub basin: CellSet,
    /// Present only for invertible systems.
    pub dual: Option<CellSet>,
    pub strict: StrictReport,
    pub provenance: BuildMeta,
}

/// Attractor, basin, dual and strictness verdict for a verified block.
pub fn conley_record(rel: &TransitionRelation, q: &CellSet, strict_budget: usize) -> Result<ConleyRecord> {
    let attractor = attractor_from_block(rel, q)?;
    let basin = basin(rel, &attractor);
    let dual = if rel.meta().invertible {
        Some(dual_repeller(rel, q)?)
    } else {
        None
    };
    let strict = is_strict(rel, &attractor, &basin, strict_budget);
    Ok(ConleyRecord {
        block: q.clone(),
        attractor,
        basin,
        dual,
        strict,
        provenance: rel.meta().clone(),
    })
}

/// Outcome of the search for a proper nonempty block.
#[derive(Clone, Debug)]
pub struct BlockCertificate {
    /// Strongly connected components of the block graph.
    pub components: usize,
    /// A proper block when one exists: the closure of a sink component.
    pub witness: Option<CellSet>,
}

impl BlockCertificate {
    pub fn proper_block_exists(&self) -> bool {
        self.witness.is_some()
    }
}

/// A proper nonempty block exists iff the block graph is not strongly connected.
pub fn proper_block_certificate(rel: &TransitionRelation) -> BlockCertificate {
    let adj = block_graph(rel);
    let scc = Scc::new(&adj);
    let witness = (!scc.is_strongly_connected()).then(|| {
        let sink = scc.comps[0].iter().map(|&c| c as usize);
        CellSet::from_cells(rel.grid(), sink)
    });
    BlockCertificate {
        components: scc.comps.len(),
        witness,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FamilyMember {
    pub block: CellSet,
    pub attractor: CellSet,
}

#[derive(Clone, Debug)]
pub struct AttractorFamily {
    pub members: Vec<FamilyMember>,
    /// Number of attractors generated directly from block-graph components.
    pub basic: usize,
    /// The component cap stopped the search early.
    pub truncated: bool,
    /// Unions of basic attractors were enumerated.
    pub unions: bool,
}

impl AttractorFamily {
    /// Members other than the empty set and the whole space.
    pub fn nontrivial(&self) -> impl Iterator<Item = &FamilyMember> {
        self.members
            .iter()
            .filter(|m| !m.attractor.is_empty() && !m.block.is_full())
    }
}

/// Largest basic count for which all unions are enumerated.
pub const UNION_LIMIT: usize = 16;

/// Attractors of the smallest blocks around block-graph components that carry
/// recurrent cells, sinks first, closed under union when there are at most
/// [`UNION_LIMIT`] of them.
pub fn attractor_family(rel: &TransitionRelation, cap: usize) -> AttractorFamily {
    let adj = block_graph(rel);
    let gscc = Scc::new(&adj);
    let rscc = rel.scc();
    let mut basics: Vec<FamilyMember> = Vec::new();
    let mut truncated = false;
    for members in &gscc.comps {
        let carries = members
            .iter()
            .any(|&c| rscc.recurrent[rscc.comp_of[c as usize] as usize]);
        if !carries {
            continue;
        }
        if basics.len() == cap {
            truncated = true;
            break;
        }
        let seed = CellSet::from_cells(rel.grid(), members.iter().map(|&c| c as usize));
        let block = block_closure(rel, &seed);
        let attractor = descend(rel, &block);
        if !attractor.is_empty() && !basics.iter().any(|m| m.attractor == attractor) {
            basics.push(FamilyMember { block, attractor });
        }
    }
    let basic = basics.len();
    let unions = basic <= UNION_LIMIT;
    let mut members = basics.clone();
    if unions {
        for mask in 1u32..(1 << basic) {
            if mask.count_ones() < 2 {
                continue;
            }
            let mut block = CellSet::empty(rel.grid());
            let mut attractor = CellSet::empty(rel.grid());
            for (i, m) in basics.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    block.union_with(&m.block);
                    attractor.union_with(&m.attractor);
                }
            }
            if !members.iter().any(|m| m.attractor == attractor) {
                members.push(FamilyMember { block, attractor });
            }
        }
    }
    members.sort_by(|x, y| {
        (x.attractor.len(), x.attractor.iter().collect::<Vec<_>>())
            .cmp(&(y.attractor.len(), y.attractor.iter().collect::<Vec<_>>()))
    });
    AttractorFamily {
        members,
        basic,
        truncated,
        unions,
    }
}
