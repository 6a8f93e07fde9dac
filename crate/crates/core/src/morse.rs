//! Morse decompositions and Morse graphs of a combinatorial map.
//!
//! The recurrent part of a combinatorial flow map splits into strongly
//! connected components that contain an edge; these are the Morse sets.
//! Everything else is gradient-like transit between them, summarized by
//! the Morse graph: reachability between Morse sets, drawn transitively
//! reduced.
//!
//! Traversal works against [`FlowGraph`], an indexed successor interface,
//! so image rectangles and implicit full-grid images of failed cells are
//! walked without ever materializing an edge list. Tarjan's algorithm
//! runs on an explicit frame stack; grids of a quarter million cells
//! would overflow the call stack long before they strain memory.

use std::collections::BTreeMap;

use crate::enclosure::{CellImage, CombinatorialMap};
use crate::grid::{CellId, CellSet};

/// Directed graph with indexed successor access.
pub trait FlowGraph {
    fn n_vertices(&self) -> u64;
    fn out_degree(&self, v: u64) -> u64;
    /// The `k`-th successor of `v`, `k < out_degree(v)`.
    fn successor(&self, v: u64, k: u64) -> u64;

    fn has_edge(&self, v: u64, w: u64) -> bool {
        (0..self.out_degree(v)).any(|k| self.successor(v, k) == w)
    }
}

impl FlowGraph for CombinatorialMap {
    fn n_vertices(&self) -> u64 {
        self.n_cells()
    }

    fn out_degree(&self, v: u64) -> u64 {
        match &self.entry(CellId(v)).image {
            CellImage::Empty => 0,
            CellImage::Rect(rect) => rect.count(),
            CellImage::All => self.n_cells(),
        }
    }

    fn successor(&self, v: u64, k: u64) -> u64 {
        match &self.entry(CellId(v)).image {
            CellImage::Empty => unreachable!("empty image has no successors"),
            CellImage::Rect(rect) => rect.cell_at(self.grid(), k).0,
            CellImage::All => k,
        }
    }

    fn has_edge(&self, v: u64, w: u64) -> bool {
        match &self.entry(CellId(v)).image {
            CellImage::Empty => false,
            CellImage::Rect(rect) => rect.contains_multi(&self.grid().multi_index(CellId(w))),
            CellImage::All => true,
        }
    }
}

/// Explicit adjacency lists; fixtures and oracle comparisons.
#[derive(Clone, Debug, Default)]
pub struct AdjacencyGraph {
    pub succ: Vec<Vec<u64>>,
}

impl FlowGraph for AdjacencyGraph {
    fn n_vertices(&self) -> u64 {
        self.succ.len() as u64
    }

    fn out_degree(&self, v: u64) -> u64 {
        self.succ[v as usize].len() as u64
    }

    fn successor(&self, v: u64, k: u64) -> u64 {
        self.succ[v as usize][k as usize]
    }
}

/// The Morse sets of a combinatorial map: edge-containing strongly
/// connected components, each sorted, ordered by smallest cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MorseDecomposition {
    pub sets: Vec<CellSet>,
    pub n_vertices: u64,
}

impl MorseDecomposition {
    /// Index of the Morse set containing the cell, if any.
    pub fn set_containing(&self, cell: CellId) -> Option<usize> {
        self.sets.iter().position(|s| s.contains(cell))
    }
}

/// Computes all edge-containing strongly connected components.
pub fn morse_decomposition<G: FlowGraph + ?Sized>(g: &G) -> MorseDecomposition {
    const UNVISITED: u32 = u32::MAX;
    let n = g.n_vertices() as usize;
    assert!(n < UNVISITED as usize, "vertex count exceeds index range");
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<u32> = Vec::new();
    let mut counter: u32 = 0;

    struct Frame {
        v: u32,
        child: u64,
        degree: u64,
    }
    let mut frames: Vec<Frame> = Vec::new();
    let mut sets: Vec<CellSet> = Vec::new();

    for root in 0..n as u32 {
        if index[root as usize] != UNVISITED {
            continue;
        }
        index[root as usize] = counter;
        low[root as usize] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root as usize] = true;
        frames.push(Frame {
            v: root,
            child: 0,
            degree: g.out_degree(root as u64),
        });

        while let Some(frame) = frames.last_mut() {
            let v = frame.v as usize;
            if frame.child < frame.degree {
                let w = g.successor(frame.v as u64, frame.child) as usize;
                frame.child += 1;
                if index[w] == UNVISITED {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w as u32);
                    on_stack[w] = true;
                    frames.push(Frame {
                        v: w as u32,
                        child: 0,
                        degree: g.out_degree(w as u64),
                    });
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            let done = frames.pop().expect("frame checked above").v as usize;
            if let Some(parent) = frames.last() {
                let p = parent.v as usize;
                low[p] = low[p].min(low[done]);
            }
            if low[done] == index[done] {
                let mut cells: Vec<CellId> = Vec::new();
                loop {
                    let w = stack.pop().expect("root still on stack");
                    on_stack[w as usize] = false;
                    cells.push(CellId(w as u64));
                    if w as usize == done {
                        break;
                    }
                }
                if cells.len() > 1 || g.has_edge(done as u64, done as u64) {
                    sets.push(CellSet::from_vec(cells));
                }
            }
        }
    }

    sets.sort_by_key(|s| s.first());
    MorseDecomposition {
        sets,
        n_vertices: n as u64,
    }
}

/// Reachability order between Morse sets, plus its transitive reduction
/// for rendering.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MorseGraph {
    /// `reaches[p][q]`: a path leads from set `p` to set `q`, `p ≠ q`.
    pub reaches: Vec<Vec<bool>>,
    /// Covering edges of the reachability order, lexicographic.
    pub edges: Vec<(usize, usize)>,
}

/// Condensation reachability between Morse sets by one sweep per set.
/// Returns `None` above `max_sets`; decompositions with thousands of sets
/// are census material, not graphs.
pub fn morse_graph<G: FlowGraph + ?Sized>(
    g: &G,
    decomp: &MorseDecomposition,
    max_sets: usize,
) -> Option<MorseGraph> {
    let m = decomp.sets.len();
    if m > max_sets {
        return None;
    }
    let n = g.n_vertices() as usize;
    let mut owner = vec![u32::MAX; n];
    for (i, set) in decomp.sets.iter().enumerate() {
        for c in set.iter() {
            owner[c.0 as usize] = i as u32;
        }
    }

    let mut reaches = vec![vec![false; m]; m];
    for p in 0..m {
        let mut visited = vec![false; n];
        let mut work: Vec<u32> = decomp.sets[p].iter().map(|c| c.0 as u32).collect();
        for &v in &work {
            visited[v as usize] = true;
        }
        while let Some(v) = work.pop() {
            for k in 0..g.out_degree(v as u64) {
                let w = g.successor(v as u64, k) as usize;
                if !visited[w] {
                    visited[w] = true;
                    if owner[w] != u32::MAX && owner[w] as usize != p {
                        reaches[p][owner[w] as usize] = true;
                    }
                    work.push(w as u32);
                }
            }
        }
    }
    // Distinct components cannot reach each other both ways.
    for p in 0..m {
        for q in p + 1..m {
            debug_assert!(!(reaches[p][q] && reaches[q][p]));
        }
    }

    let mut edges = Vec::new();
    for p in 0..m {
        for q in 0..m {
            if p == q || !reaches[p][q] {
                continue;
            }
            let redundant =
                (0..m).any(|r| r != p && r != q && reaches[p][r] && reaches[r][q]);
            if !redundant {
                edges.push((p, q));
            }
        }
    }
    Some(MorseGraph { reaches, edges })
}

/// Size statistics of a decomposition. Fine fixed-step grids produce
/// floods of spurious near-singleton sets wherever the flow time is below
/// the cell crossing time; the census is how that shows up in a report.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecompositionCensus {
    pub n_sets: usize,
    pub n_singleton: usize,
    pub largest: usize,
    /// `(set size, number of sets of that size)`, ascending sizes.
    pub size_histogram: Vec<(usize, usize)>,
}

pub fn census(decomp: &MorseDecomposition) -> DecompositionCensus {
    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    for s in &decomp.sets {
        *histogram.entry(s.len()).or_insert(0) += 1;
    }
    DecompositionCensus {
        n_sets: decomp.sets.len(),
        n_singleton: histogram.get(&1).copied().unwrap_or(0),
        largest: histogram.keys().next_back().copied().unwrap_or(0),
        size_histogram: histogram.into_iter().collect(),
    }
}

/// Graphviz rendering of the reduced Morse graph, stable across runs.
pub fn to_dot(decomp: &MorseDecomposition, graph: &MorseGraph) -> String {
    let mut out = String::from("digraph morse_graph {\n  rankdir=TB;\n  node [shape=box];\n");
    for (i, set) in decomp.sets.iter().enumerate() {
        out.push_str(&format!(
            "  m{i} [label=\"M{i}\\n{} cell{}\"];\n",
            set.len(),
            if set.len() == 1 { "" } else { "s" }
        ));
    }
    for (p, q) in &graph.edges {
        out.push_str(&format!("  m{p} -> m{q};\n"));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enclosure::{build_map, StepStrategy};
    use crate::grid::Grid;
    use crate::integrator::IntegratorConfig;
    use crate::interval::Interval;
    use crate::selftest::oracle;
    use crate::vfield::builtin;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, edges: &[(u64, u64)]) -> AdjacencyGraph {
        let mut succ = vec![Vec::new(); n];
        for &(a, b) in edges {
            succ[a as usize].push(b);
        }
        AdjacencyGraph { succ }
    }

    fn as_vecs(d: &MorseDecomposition) -> Vec<Vec<usize>> {
        d.sets
            .iter()
            .map(|s| s.iter().map(|c| c.0 as usize).collect())
            .collect()
    }

    #[test]
    fn two_cycles_and_a_self_loop() {
        let g = graph(
            7,
            &[(0, 1), (1, 0), (1, 2), (2, 3), (3, 4), (4, 3), (5, 5)],
        );
        let d = morse_decomposition(&g);
        assert_eq!(as_vecs(&d), vec![vec![0, 1], vec![3, 4], vec![5]]);

        let mg = morse_graph(&g, &d, 16).unwrap();
        assert!(mg.reaches[0][1]);
        assert!(!mg.reaches[1][0]);
        assert!(!mg.reaches[0][2] && !mg.reaches[2][0]);
        assert_eq!(mg.edges, vec![(0, 1)]);

        let c = census(&d);
        assert_eq!(c.n_sets, 3);
        assert_eq!(c.n_singleton, 1);
        assert_eq!(c.largest, 2);
        assert_eq!(c.size_histogram, vec![(1, 1), (2, 2)]);
    }

    #[test]
    fn transitive_reduction_drops_shortcuts() {
        // Diamond with a direct shortcut; every vertex is a Morse set via
        // its self-loop.
        let g = graph(
            4,
            &[
                (0, 0),
                (1, 1),
                (2, 2),
                (3, 3),
                (0, 1),
                (0, 2),
                (1, 3),
                (2, 3),
                (0, 3),
            ],
        );
        let d = morse_decomposition(&g);
        assert_eq!(d.sets.len(), 4);
        let mg = morse_graph(&g, &d, 16).unwrap();
        assert!(mg.reaches[0][3]);
        assert_eq!(mg.edges, vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
        assert!(morse_graph(&g, &d, 3).is_none());
    }

    #[test]
    fn random_graphs_match_reachability_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x0451);
        for _ in 0..300 {
            let n = rng.random_range(1..=12usize);
            let mut edges = Vec::new();
            for a in 0..n as u64 {
                for b in 0..n as u64 {
                    if rng.random_range(0.0..1.0) < 0.18 {
                        edges.push((a, b));
                    }
                }
            }
            let g = graph(n, &edges);
            let got = as_vecs(&morse_decomposition(&g));
            let succ = |v: usize| -> Vec<usize> {
                g.succ[v].iter().map(|&u| u as usize).collect()
            };
            let want = oracle::edge_containing_components(n, &succ);
            assert_eq!(got, want, "n={n} edges={edges:?}");
        }
    }

    #[test]
    fn deep_chain_does_not_overflow_the_stack() {
        // A 200k-vertex path ending in a 2-cycle forces maximal frame
        // depth.
        let n = 200_000usize;
        let mut succ: Vec<Vec<u64>> = (0..n).map(|v| vec![(v as u64 + 1).min(n as u64 - 1)]).collect();
        succ[n - 1] = vec![n as u64 - 2];
        let g = AdjacencyGraph { succ };
        let d = morse_decomposition(&g);
        assert_eq!(d.sets.len(), 1);
        assert_eq!(d.sets[0].len(), 2);
    }

    #[test]
    fn map_backed_decomposition_groups_failed_cells() {
        let field = builtin("two_cycles", &[("mu".to_string(), 2.0)].into_iter().collect()).unwrap();
        let domain = [Interval::new(-3.0, 3.0), Interval::new(-3.0, 3.0)]
            .into_iter()
            .collect();
        let grid = Grid::new(domain, vec![32, 32]).unwrap();
        let map = build_map(
            &grid,
            &field,
            StepStrategy::Fixed { h: 0.002 },
            &IntegratorConfig::default(),
        );
        let d = morse_decomposition(&map);
        assert!(!d.sets.is_empty());

        // Failed cells all have the full grid as image, so they reach each
        // other and share one strongly connected component.
        let failed = map.failed_cells();
        assert!(failed.len() > 1);
        let home = d.set_containing(failed.first().unwrap()).unwrap();
        for c in failed.iter() {
            assert_eq!(d.set_containing(c), Some(home));
        }

        // The equilibrium at the origin pins its cell in a Morse set.
        let origin = grid.cell_of_point(&[0.0, 0.0]).unwrap();
        assert!(d.set_containing(origin).is_some());

        let c = census(&d);
        assert_eq!(c.n_sets, d.sets.len());
        assert_eq!(
            c.size_histogram.iter().map(|(_, k)| k).sum::<usize>(),
            c.n_sets
        );
        assert!(morse_graph(&map, &d, 1).is_none());
    }

    #[test]
    fn dot_output_is_complete() {
        let g = graph(3, &[(0, 0), (1, 1), (0, 1), (2, 2), (1, 2)]);
        let d = morse_decomposition(&g);
        let mg = morse_graph(&g, &d, 8).unwrap();
        let dot = to_dot(&d, &mg);
        assert!(dot.starts_with("digraph morse_graph {"));
        assert!(dot.contains("m0 [label=\"M0\\n1 cell\"];"));
        assert!(dot.contains("m0 -> m1;"));
        assert!(dot.contains("m1 -> m2;"));
        assert!(!dot.contains("m0 -> m2;"));
        assert!(dot.ends_with("}\n"));
    }
}
