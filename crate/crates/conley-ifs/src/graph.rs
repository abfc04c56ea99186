//! Strongly connected components of adjacency-list digraphs.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

/// Condensation of a digraph given as adjacency lists over `0..n`.
#[derive(Clone, Debug)]
pub(crate) struct Scc {
    /// Component label of each node.
    pub comp_of: Vec<u32>,
    /// Components in reverse topological order: successors precede predecessors.
    pub comps: Vec<Vec<u32>>,
    /// A component is recurrent when it carries a cycle.
    pub recurrent: Vec<bool>,
}

impl Scc {
    pub fn new(adj: &[Vec<u32>]) -> Scc {
        let n = adj.len();
        let mut g = DiGraph::<(), ()>::with_capacity(n, adj.iter().map(Vec::len).sum());
        for _ in 0..n {
            g.add_node(());
        }
        for (c, targets) in adj.iter().enumerate() {
            for &t in targets {
                g.add_edge((c as u32).into(), t.into(), ());
            }
        }
        let mut comps: Vec<Vec<u32>> = tarjan_scc(&g)
            .into_iter()
            .map(|members| {
                let mut v: Vec<u32> = members.into_iter().map(|x| x.index() as u32).collect();
                v.sort_unstable();
                v
            })
            .collect();
        comps.shrink_to_fit();
        let mut comp_of = vec![0u32; n];
        for (k, members) in comps.iter().enumerate() {
            for &c in members {
                comp_of[c as usize] = k as u32;
            }
        }
        let recurrent = comps
            .iter()
            .map(|members| {
                members.len() > 1 || adj[members[0] as usize].binary_search(&members[0]).is_ok()
            })
            .collect();
        Scc {
            comp_of,
            comps,
            recurrent,
        }
    }

    /// Distinct successor components of component `k`.
    pub fn successors(&self, adj: &[Vec<u32>], k: usize) -> Vec<u32> {
        let mut out: Vec<u32> = self.comps[k]
            .iter()
            .flat_map(|&c| adj[c as usize].iter().map(|&t| self.comp_of[t as usize]))
            .filter(|&j| j as usize != k)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn is_strongly_connected(&self) -> bool {
        self.comps.len() == 1
    }
}
