//! Index pairs and homological Conley indices of Morse sets.
//!
//! For an isolated invariant set the Conley index is the relative
//! homology of an index pair `(P1, P2)`: a positively invariant cell
//! region `P1` around the invariant part together with the exit region
//! `P2` through which orbits leave. Both are built combinatorially from
//! the time-step map's endpoint images, giving an index pair for the
//! discrete system `x ↦ φ(τ(x), x)`. The flow's index agrees with the
//! pair's homology: sliding along orbits, `(x, s) ↦ φ(s·τ(x), x)`,
//! deforms the time-step map on the pair into the inclusion, so the
//! index map is the identity and no quotient is left to take.
//!
//! Endpoint images are the right input here where the isolation
//! verifier needs whole orbit tubes: a tube cover also charges a cell
//! for every intermediate cell its orbits merely slide through, and on
//! a curved invariant set those transients spill over any cubical
//! neighborhood's staircase boundary, flooding the exit region until
//! the interior condition is unsatisfiable at every subdivision. The
//! endpoint image sees only where orbits land, which is what the
//! discrete index pair constrains.
//!
//! Homology of the pair is computed over the integers from the cubical
//! chain complex of elementary faces, with faces of `P2` struck out.
//! Smith normal form digests the boundary matrices into Betti numbers
//! and torsion coefficients. A Leray-style reduction of endomorphisms is
//! provided for cases where an index map other than the identity has to
//! be quotiented away.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::error::Error;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use smallvec::SmallVec;

use crate::enclosure::ImageTable;
use crate::grid::{CellId, CellSet, Grid, MultiIndex};
use crate::morse::{FlowGraph, MorseDecomposition};

/// Moore dilation: grow the set by `layers` rings of cells adjacent in
/// every axis combination, clipped to the grid. The flag reports whether
/// the result contains cells on the grid boundary, where the collar
/// margin is truncated.
pub fn dilate(grid: &Grid, cells: &CellSet, layers: u32) -> (CellSet, bool) {
    let mut seen: HashSet<u64> = cells.iter().map(|c| c.0).collect();
    let mut frontier: Vec<CellId> = cells.iter().collect();
    let d = grid.dim();
    for _ in 0..layers {
        let mut next = Vec::new();
        for &id in &frontier {
            let m = grid.multi_index(id);
            let mut off = vec![-1i64; d];
            'cells: loop {
                let mut nm = MultiIndex::new();
                let mut in_grid = true;
                for i in 0..d {
                    let v = m[i] as i64 + off[i];
                    if v < 0 || v >= grid.divisions()[i] as i64 {
                        in_grid = false;
                        break;
                    }
                    nm.push(v as u32);
                }
                if in_grid {
                    let nid = grid.linear_index(&nm);
                    if seen.insert(nid.0) {
                        next.push(nid);
                    }
                }
                let mut axis = 0;
                loop {
                    if axis == d {
                        break 'cells;
                    }
                    off[axis] += 1;
                    if off[axis] <= 1 {
                        break;
                    }
                    off[axis] = -1;
                    axis += 1;
                }
            }
        }
        frontier = next;
    }
    let result = CellSet::from_vec(seen.into_iter().map(CellId).collect());
    let touches = result.iter().any(|c| {
        let m = grid.multi_index(c);
        m.iter()
            .enumerate()
            .any(|(i, &v)| v == 0 || v + 1 == grid.divisions()[i])
    });
    (result, touches)
}

/// A Morse set's cells grown by a collar, still clear of all other sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IsolatingNbhd {
    pub cells: CellSet,
    /// The neighborhood reaches the domain boundary; acceptable only
    /// when no orbit tube exits there.
    pub touches_boundary: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IsolationError {
    /// The dilated set ran into another Morse set; reduce the collar or
    /// refine the grid.
    CollisionWithOtherMorseSet { p: usize, q: usize },
}

impl fmt::Display for IsolationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IsolationError::CollisionWithOtherMorseSet { p, q } => write!(
                f,
                "collar around Morse set {p} collides with Morse set {q}"
            ),
        }
    }
}

impl Error for IsolationError {}

/// Dilates Morse set `p` by `collar ≥ 1` layers within the domain.
pub fn isolating_nbhd(
    grid: &Grid,
    md: &MorseDecomposition,
    p: usize,
    collar: u32,
) -> Result<IsolatingNbhd, IsolationError> {
    assert!(collar >= 1, "a neighborhood needs at least one collar layer");
    let (cells, touches_boundary) = dilate(grid, &md.sets[p], collar);
    for (q, other) in md.sets.iter().enumerate() {
        if q != p && !cells.is_disjoint(other) {
            return Err(IsolationError::CollisionWithOtherMorseSet { p, q });
        }
    }
    Ok(IsolatingNbhd {
        cells,
        touches_boundary,
    })
}

/// Cells of `n` on a bi-infinite digraph path inside `n`: the
/// combinatorial invariant part. Cells without a successor in the
/// surviving set are pruned to a fixpoint, likewise for predecessors,
/// and the survivors of both prunings intersected.
pub fn inv_part<G: FlowGraph + ?Sized>(n: &CellSet, g: &G) -> CellSet {
    let ids: Vec<CellId> = n.iter().collect();
    let m = ids.len();
    let mut succ: Vec<Vec<u32>> = vec![Vec::new(); m];
    let mut pred: Vec<Vec<u32>> = vec![Vec::new(); m];
    for (i, &id) in ids.iter().enumerate() {
        let deg = g.out_degree(id.0);
        if (deg as usize) <= m {
            for k in 0..deg {
                let w = CellId(g.successor(id.0, k));
                if let Ok(j) = n.as_slice().binary_search(&w) {
                    succ[i].push(j as u32);
                    pred[j].push(i as u32);
                }
            }
        } else {
            // Huge image (a failed cell maps everywhere): scanning the
            // neighborhood is cheaper than enumerating the image.
            for (j, &jd) in ids.iter().enumerate() {
                if g.has_edge(id.0, jd.0) {
                    succ[i].push(j as u32);
                    pred[j].push(i as u32);
                }
            }
        }
    }

    fn prune(out_adj: &[Vec<u32>], in_adj: &[Vec<u32>]) -> Vec<bool> {
        let m = out_adj.len();
        let mut alive = vec![true; m];
        let mut deg: Vec<usize> = out_adj.iter().map(|v| v.len()).collect();
        let mut queue: VecDeque<u32> = (0..m as u32).filter(|&v| deg[v as usize] == 0).collect();
        while let Some(v) = queue.pop_front() {
            if !alive[v as usize] {
                continue;
            }
            alive[v as usize] = false;
            for &p in &in_adj[v as usize] {
                if alive[p as usize] {
                    deg[p as usize] -= 1;
                    if deg[p as usize] == 0 {
                        queue.push_back(p);
                    }
                }
            }
        }
        alive
    }

    let fwd = prune(&succ, &pred);
    let bwd = prune(&pred, &succ);
    CellSet::from_vec(
        ids.iter()
            .enumerate()
            .filter(|&(i, _)| fwd[i] && bwd[i])
            .map(|(_, &id)| id)
            .collect(),
    )
}

/// Combinatorial index pair around an invariant part `s` inside a
/// neighborhood `n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexPair {
    pub n: CellSet,
    pub p1: CellSet,
    pub p2: CellSet,
    pub s: CellSet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IndexPairError {
    /// The image table has no entry for a needed cell.
    MissingImage { cell: CellId },
    /// A needed cell has no validated enclosure.
    FailedImage { cell: CellId },
    EmptyInvariantPart,
    /// The invariant part's collar leaks out of `P1 \ P2`; increase the
    /// collar or the grid depth.
    InteriorConditionFailed { violating: CellSet },
}

impl fmt::Display for IndexPairError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexPairError::MissingImage { cell } => {
                write!(f, "no image enclosure for cell {}", cell.0)
            }
            IndexPairError::FailedImage { cell } => {
                write!(f, "image enclosure failed for cell {}", cell.0)
            }
            IndexPairError::EmptyInvariantPart => {
                write!(f, "invariant part is empty; nothing to index")
            }
            IndexPairError::InteriorConditionFailed { violating } => write!(
                f,
                "invariant part is not interior to P1 minus P2 ({} violating cells)",
                violating.len()
            ),
        }
    }
}

impl Error for IndexPairError {}

/// Builds an index pair from time-step map images.
///
/// `P1` is the image-forward closure of `s` and its one-cell collar
/// within `n`; the exit region collects cells whose image leaves `n` or
/// the domain; `P2` is the exit region's image-forward closure within
/// `P1`. Every cell of `P1` then either maps into `P1` again or belongs
/// to `P2`, which is the discrete exit condition. The collar is seeded
/// into `P1` because an endpoint image, unlike a tube, does not contain
/// its source cell, so the closure of `s` alone can hug `s` too tightly
/// for `s` to end up interior to the realized pair. Positive invariance
/// of both sets and containment of the exit region in `P2` are asserted;
/// the interior condition on `s` is the one failure mode returned as an
/// error, since it depends on the caller's collar choice.
pub fn build_index_pair(
    grid: &Grid,
    n: &CellSet,
    s: &CellSet,
    images: &ImageTable,
) -> Result<IndexPair, IndexPairError> {
    assert!(s.is_subset(n), "invariant part must lie in the neighborhood");
    if s.is_empty() {
        return Err(IndexPairError::EmptyInvariantPart);
    }

    // Cell images, memoized: sorted cell list plus domain-exit flag.
    let mut memo: HashMap<u64, (Vec<CellId>, bool)> = HashMap::new();
    fn image_of<'a>(
        memo: &'a mut HashMap<u64, (Vec<CellId>, bool)>,
        grid: &Grid,
        images: &ImageTable,
        cell: CellId,
    ) -> Result<&'a (Vec<CellId>, bool), IndexPairError> {
        use std::collections::hash_map::Entry;
        match memo.entry(cell.0) {
            Entry::Occupied(e) => Ok(e.into_mut()),
            Entry::Vacant(slot) => {
                let entry = images
                    .get(cell)
                    .ok_or(IndexPairError::MissingImage { cell })?;
                if entry.failed {
                    return Err(IndexPairError::FailedImage { cell });
                }
                let mut cells = Vec::new();
                for rect in &entry.rects {
                    cells.extend(rect.iter_cells(grid));
                }
                cells.sort_unstable();
                cells.dedup();
                Ok(slot.insert((cells, entry.exits_domain)))
            }
        }
    }

    // P1: image-forward closure of S and its collar within N.
    let (s_collar, _) = dilate(grid, s, 1);
    let seed = s_collar.intersect(n);
    let mut p1_set: HashSet<u64> = seed.iter().map(|c| c.0).collect();
    let mut work: Vec<CellId> = seed.iter().collect();
    while let Some(x) = work.pop() {
        let (cells, _) = image_of(&mut memo, grid, images, x)?;
        // Clone keeps the borrow checker happy; images are short.
        for c in cells.clone() {
            if n.contains(c) && p1_set.insert(c.0) {
                work.push(c);
            }
        }
    }
    let p1 = CellSet::from_vec(p1_set.iter().map(|&c| CellId(c)).collect());

    // Exit region: cells whose image leaves N or the domain.
    let mut exit = Vec::new();
    for x in p1.iter() {
        let (cells, exits_domain) = image_of(&mut memo, grid, images, x)?;
        if *exits_domain || cells.iter().any(|c| !n.contains(*c)) {
            exit.push(x);
        }
    }
    let exit = CellSet::from_vec(exit);

    // P2: image-forward closure of the exit region within P1.
    let mut p2_set: HashSet<u64> = exit.iter().map(|c| c.0).collect();
    let mut work: Vec<CellId> = exit.iter().collect();
    while let Some(x) = work.pop() {
        let (cells, _) = image_of(&mut memo, grid, images, x)?;
        for c in cells.clone() {
            if p1.contains(c) && p2_set.insert(c.0) {
                work.push(c);
            }
        }
    }
    let p2 = CellSet::from_vec(p2_set.iter().map(|&c| CellId(c)).collect());

    // Positive invariance and the exit condition are construction
    // consequences; check them outright rather than trusting the code.
    for x in p1.iter() {
        let (cells, _) = image_of(&mut memo, grid, images, x)?;
        for c in cells {
            assert!(
                !n.contains(*c) || p1.contains(*c),
                "P1 is not positively invariant"
            );
        }
    }
    for x in p2.iter() {
        let (cells, _) = image_of(&mut memo, grid, images, x)?;
        for c in cells {
            assert!(
                !n.contains(*c) || p2.contains(*c),
                "P2 is not positively invariant"
            );
        }
    }
    assert!(exit.is_subset(&p2), "exit region escaped P2");

    // Interior condition: S and its one-cell collar inside N stay in
    // P1 \ P2. The collar is in P1 by seeding, so only P2 can violate.
    let violating = seed.difference(&p1).union(&seed.intersect(&p2));
    if !violating.is_empty() {
        return Err(IndexPairError::InteriorConditionFailed { violating });
    }

    Ok(IndexPair {
        n: n.clone(),
        p1,
        p2,
        s: s.clone(),
    })
}

/// Betti numbers and torsion coefficients per dimension `0..=d`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HomologyResult {
    pub betti: Vec<usize>,
    pub torsion: Vec<Vec<BigUint>>,
}

/// Elementary face: lower corner per axis plus a bitmask of axes along
/// which the face extends one unit.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
struct Face {
    lo: SmallVec<[u32; 4]>,
    ext: u32,
}

impl Face {
    fn dim(&self) -> usize {
        self.ext.count_ones() as usize
    }
}

/// All `3^d` elementary faces of the cell at multi-index `m`.
fn cell_faces(m: &[u32]) -> Vec<Face> {
    let d = m.len();
    let mut out = Vec::with_capacity(3usize.pow(d as u32));
    // Per-axis choice: 0 full interval, 1 lower endpoint, 2 upper.
    let mut choice = vec![0u8; d];
    loop {
        let mut lo = SmallVec::new();
        let mut ext = 0u32;
        for (i, &c) in choice.iter().enumerate() {
            match c {
                0 => {
                    lo.push(m[i]);
                    ext |= 1 << i;
                }
                1 => lo.push(m[i]),
                _ => lo.push(m[i] + 1),
            }
        }
        out.push(Face { lo, ext });
        let mut axis = 0;
        loop {
            if axis == d {
                return out;
            }
            choice[axis] += 1;
            if choice[axis] < 3 {
                break;
            }
            choice[axis] = 0;
            axis += 1;
        }
    }
}

/// Signed boundary faces: the `j`-th extended axis contributes
/// `(-1)^j (upper - lower)`, axes counted in increasing order.
fn face_boundary(f: &Face) -> Vec<(Face, i64)> {
    let mut out = Vec::new();
    let mut rank = 0u32;
    for j in 0..f.lo.len() {
        if f.ext & (1 << j) == 0 {
            continue;
        }
        let sign = if rank % 2 == 0 { 1 } else { -1 };
        rank += 1;
        let mut upper = f.clone();
        upper.ext &= !(1 << j);
        upper.lo[j] += 1;
        let mut lower = f.clone();
        lower.ext &= !(1 << j);
        out.push((upper, sign));
        out.push((lower, -sign));
    }
    out
}

/// Relative homology of the cubical pair `(P1, P2)` over the integers.
///
/// Generators are elementary faces of `P1` cells that are not faces of
/// any `P2` cell; boundary terms landing in `P2` faces vanish. Ranks and
/// invariant factors of the boundary matrices come from Smith normal
/// form; torsion in dimension `k` is the set of factors of the
/// `(k+1)`-boundary exceeding one.
pub fn relative_homology(grid: &Grid, p1: &CellSet, p2: &CellSet) -> HomologyResult {
    assert!(p2.is_subset(p1), "exit set must lie inside the pair's first set");
    let d = grid.dim();

    let mut excluded: HashSet<Face> = HashSet::new();
    for c in p2.iter() {
        for f in cell_faces(&grid.multi_index(c)) {
            excluded.insert(f);
        }
    }
    let mut gens: Vec<BTreeMap<Face, u32>> = vec![BTreeMap::new(); d + 1];
    for c in p1.iter() {
        for f in cell_faces(&grid.multi_index(c)) {
            if !excluded.contains(&f) {
                let k = f.dim();
                let next = gens[k].len() as u32;
                gens[k].entry(f).or_insert(next);
            }
        }
    }
    let counts: Vec<usize> = gens.iter().map(|g| g.len()).collect();

    let mut ranks = vec![0usize; d + 2];
    let mut factors: Vec<Vec<BigInt>> = vec![Vec::new(); d + 2];
    for k in 1..=d {
        if counts[k] == 0 || counts[k - 1] == 0 {
            continue;
        }
        let mut entries = Vec::new();
        for (f, &j) in &gens[k] {
            for (g, sign) in face_boundary(f) {
                if excluded.contains(&g) {
                    continue;
                }
                let i = *gens[k - 1]
                    .get(&g)
                    .expect("boundary of an included face is included or excluded");
                entries.push((i, j, sign));
            }
        }
        let invariant = snf_invariant_factors(counts[k - 1], counts[k], entries);
        ranks[k] = invariant.len();
        factors[k] = invariant;
    }

    let mut betti = Vec::with_capacity(d + 1);
    let mut torsion = Vec::with_capacity(d + 1);
    for k in 0..=d {
        betti.push(counts[k] - ranks[k] - ranks[k + 1]);
        torsion.push(
            factors[k + 1]
                .iter()
                .filter(|f| **f > BigInt::one())
                .map(|f| f.to_biguint().expect("invariant factors are nonnegative"))
                .collect(),
        );
    }

    let chi_faces: i64 = counts
        .iter()
        .enumerate()
        .map(|(k, &n)| if k % 2 == 0 { n as i64 } else { -(n as i64) })
        .sum();
    let chi_betti: i64 = betti
        .iter()
        .enumerate()
        .map(|(k, &b)| if k % 2 == 0 { b as i64 } else { -(b as i64) })
        .sum();
    assert_eq!(chi_betti, chi_faces, "Euler characteristic mismatch");

    HomologyResult { betti, torsion }
}

/// Plain-text dump of the relative chain complex, one generator per
/// line: dimension, the face, and its signed boundary generators. For
/// cross-checking with external tools.
pub fn relative_complex_text(grid: &Grid, p1: &CellSet, p2: &CellSet) -> String {
    use std::fmt::Write;
    let d = grid.dim();
    let mut excluded: HashSet<Face> = HashSet::new();
    for c in p2.iter() {
        excluded.extend(cell_faces(&grid.multi_index(c)));
    }
    let mut gens: Vec<BTreeMap<Face, u32>> = vec![BTreeMap::new(); d + 1];
    for c in p1.iter() {
        for f in cell_faces(&grid.multi_index(c)) {
            if !excluded.contains(&f) {
                let k = f.dim();
                let next = gens[k].len() as u32;
                gens[k].entry(f).or_insert(next);
            }
        }
    }
    let mut out = String::new();
    for k in 0..=d {
        for (f, &idx) in &gens[k] {
            write!(out, "dim {k} gen {idx} face").unwrap();
            for (axis, &lo) in f.lo.iter().enumerate() {
                let hi = lo + u32::from(f.ext & (1 << axis) != 0);
                write!(out, " [{lo},{hi}]").unwrap();
            }
            write!(out, " boundary").unwrap();
            let mut any = false;
            for (g, sign) in face_boundary(f) {
                if excluded.contains(&g) {
                    continue;
                }
                let i = gens[k - 1][&g];
                write!(out, " {}{}", if sign > 0 { '+' } else { '-' }, i).unwrap();
                any = true;
            }
            if !any {
                write!(out, " 0").unwrap();
            }
            out.push('\n');
        }
    }
    out
}

/// Invariant factors (nonzero, divisibility-ordered) of a sparse integer
/// matrix.
///
/// Pivots of absolute value one are peeled off with sparse row
/// operations first; whatever remains, or everything after an `i64`
/// overflow, is finished by dense big-integer Smith normal form.
fn snf_invariant_factors(n_rows: usize, n_cols: usize, entries: Vec<(u32, u32, i64)>) -> Vec<BigInt> {
    let mut rows: Vec<HashMap<u32, i64>> = vec![HashMap::new(); n_rows];
    let mut cols: Vec<Vec<u32>> = vec![Vec::new(); n_cols];
    for (i, j, v) in entries {
        debug_assert!(v != 0);
        rows[i as usize].insert(j, v);
        cols[j as usize].push(i);
    }
    let mut row_alive = vec![true; n_rows];
    let mut col_alive = vec![true; n_cols];
    let mut unit_pivots = 0usize;
    let mut queue: VecDeque<(u32, u32)> = rows
        .iter()
        .enumerate()
        .flat_map(|(i, r)| {
            r.iter()
                .filter(|&(_, &v)| v == 1 || v == -1)
                .map(move |(&j, _)| (i as u32, j))
        })
        .collect();
    let mut overflowed = false;

    'elim: loop {
        let (pi, pj) = 'pick: loop {
            if let Some((i, j)) = queue.pop_front() {
                if row_alive[i as usize]
                    && col_alive[j as usize]
                    && matches!(rows[i as usize].get(&j), Some(&v) if v == 1 || v == -1)
                {
                    break 'pick (i, j);
                }
                continue;
            }
            // Queue exhausted: one full scan for a surviving unit entry.
            for i in 0..n_rows {
                if !row_alive[i] {
                    continue;
                }
                for (&j, &v) in &rows[i] {
                    if col_alive[j as usize] && (v == 1 || v == -1) {
                        break 'pick (i as u32, j);
                    }
                }
            }
            break 'elim;
        };

        let pv = rows[pi as usize][&pj];
        let pivot_row: Vec<(u32, i64)> = rows[pi as usize]
            .iter()
            .filter(|&(&j, _)| col_alive[j as usize] && j != pj)
            .map(|(&j, &v)| (j, v))
            .collect();
        let victims: Vec<u32> = cols[pj as usize]
            .iter()
            .copied()
            .filter(|&i| i != pi && row_alive[i as usize])
            .collect();
        for vi in victims {
            // The column index holds stale and duplicate entries; the row
            // itself is authoritative.
            let Some(&w) = rows[vi as usize].get(&pj) else {
                continue;
            };
            // row_vi -= (w / pv) * row_pi, with pv = ±1 so w / pv = w * pv.
            let Some(mult) = w.checked_mul(pv) else {
                overflowed = true;
                break 'elim;
            };
            // Stage the update; commit only if nothing overflows, so the
            // matrix stays exactly equivalent to the input.
            let mut staged: Vec<(u32, i64)> = Vec::with_capacity(pivot_row.len() + 1);
            let mut ok = true;
            for &(j, v) in &pivot_row {
                let delta = match mult.checked_mul(v) {
                    Some(x) => x,
                    None => {
                        ok = false;
                        break;
                    }
                };
                let old = rows[vi as usize].get(&j).copied().unwrap_or(0);
                let new = match old.checked_sub(delta) {
                    Some(x) => x,
                    None => {
                        ok = false;
                        break;
                    }
                };
                staged.push((j, new));
            }
            if !ok {
                overflowed = true;
                break 'elim;
            }
            for (j, new) in staged {
                if new == 0 {
                    rows[vi as usize].remove(&j);
                } else {
                    let fresh = rows[vi as usize].insert(j, new).is_none();
                    if fresh {
                        cols[j as usize].push(vi);
                    }
                    if new == 1 || new == -1 {
                        queue.push_back((vi, j));
                    }
                }
            }
            rows[vi as usize].remove(&pj);
        }
        row_alive[pi as usize] = false;
        col_alive[pj as usize] = false;
        unit_pivots += 1;
    }

    // Dense finish on whatever survives (empty in the common case).
    let live_rows: Vec<usize> = (0..n_rows)
        .filter(|&i| {
            row_alive[i]
                && rows[i]
                    .iter()
                    .any(|(&j, &v)| col_alive[j as usize] && v != 0)
        })
        .collect();
    let mut live_col_set: Vec<u32> = live_rows
        .iter()
        .flat_map(|&i| {
            rows[i]
                .iter()
                .filter(|&(&j, &v)| col_alive[j as usize] && v != 0)
                .map(|(&j, _)| j)
        })
        .collect();
    live_col_set.sort_unstable();
    live_col_set.dedup();
    let col_pos: HashMap<u32, usize> = live_col_set
        .iter()
        .enumerate()
        .map(|(k, &j)| (j, k))
        .collect();
    let mut dense = vec![vec![BigInt::zero(); live_col_set.len()]; live_rows.len()];
    for (r, &i) in live_rows.iter().enumerate() {
        for (&j, &v) in &rows[i] {
            if col_alive[j as usize] && v != 0 {
                dense[r][col_pos[&j]] = BigInt::from(v);
            }
        }
    }
    let _ = overflowed;

    let mut out: Vec<BigInt> = std::iter::repeat_with(BigInt::one)
        .take(unit_pivots)
        .collect();
    out.extend(dense_snf(dense).into_iter().filter(|f| !f.is_zero()));
    out
}

/// Dense Smith normal form over big integers; returns the diagonal
/// (nonzero entries, each dividing the next).
fn dense_snf(mut m: Vec<Vec<BigInt>>) -> Vec<BigInt> {
    let n_rows = m.len();
    let n_cols = m.first().map_or(0, |r| r.len());
    let mut factors = Vec::new();
    let mut t = 0usize;
    'pivot: while t < n_rows.min(n_cols) {
        // Smallest nonzero entry as pivot keeps quotients tame.
        let mut best: Option<(usize, usize)> = None;
        for i in t..n_rows {
            for j in t..n_cols {
                if m[i][j].is_zero() {
                    continue;
                }
                match best {
                    None => best = Some((i, j)),
                    Some((bi, bj)) => {
                        if m[i][j].abs() < m[bi][bj].abs() {
                            best = Some((i, j));
                        }
                    }
                }
            }
        }
        let Some((bi, bj)) = best else {
            break;
        };
        m.swap(t, bi);
        for row in m.iter_mut() {
            row.swap(t, bj);
        }

        loop {
            let mut retry = false;
            for i in t + 1..n_rows {
                if m[i][t].is_zero() {
                    continue;
                }
                let q = &m[i][t] / &m[t][t];
                if !q.is_zero() {
                    for j in t..n_cols {
                        let sub = &q * &m[t][j];
                        m[i][j] -= sub;
                    }
                }
                if !m[i][t].is_zero() {
                    // Remainder is strictly smaller: promote it to pivot.
                    m.swap(t, i);
                    retry = true;
                }
            }
            if retry {
                continue;
            }
            for j in t + 1..n_cols {
                if m[t][j].is_zero() {
                    continue;
                }
                let q = &m[t][j] / &m[t][t];
                if !q.is_zero() {
                    for i in t..n_rows {
                        let sub = &q * &m[i][t];
                        m[i][j] -= sub;
                    }
                }
                if !m[t][j].is_zero() {
                    for row in m.iter_mut().skip(t) {
                        row.swap(t, j);
                    }
                    retry = true;
                }
            }
            if retry {
                continue;
            }
            let col_clean = (t + 1..n_rows).all(|i| m[i][t].is_zero());
            let row_clean = (t + 1..n_cols).all(|j| m[t][j].is_zero());
            if col_clean && row_clean {
                break;
            }
        }

        let pivot = m[t][t].clone();
        for i in t + 1..n_rows {
            for j in t + 1..n_cols {
                if !(&m[i][j] % &pivot).is_zero() {
                    // Fold the offending row in and redo this pivot; the
                    // pivot's absolute value strictly shrinks toward the
                    // gcd, so this terminates.
                    for jj in t..n_cols {
                        let add = m[i][jj].clone();
                        m[t][jj] += add;
                    }
                    continue 'pivot;
                }
            }
        }
        factors.push(m[t][t].abs());
        t += 1;
    }
    factors
}

/// Dense rational matrix; exact linear algebra for the reduction of
/// index-map endomorphisms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QMat {
    n_rows: usize,
    n_cols: usize,
    a: Vec<BigRational>,
}

impl QMat {
    pub fn zero(n_rows: usize, n_cols: usize) -> QMat {
        QMat {
            n_rows,
            n_cols,
            a: vec![BigRational::zero(); n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> QMat {
        let mut m = QMat::zero(n, n);
        for i in 0..n {
            *m.at_mut(i, i) = BigRational::one();
        }
        m
    }

    pub fn from_int_rows(rows: &[Vec<i64>]) -> QMat {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut m = QMat::zero(n_rows, n_cols);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n_cols, "ragged rows");
            for (j, &v) in row.iter().enumerate() {
                *m.at_mut(i, j) = BigRational::from_integer(BigInt::from(v));
            }
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn at(&self, i: usize, j: usize) -> &BigRational {
        &self.a[i * self.n_cols + j]
    }

    fn at_mut(&mut self, i: usize, j: usize) -> &mut BigRational {
        &mut self.a[i * self.n_cols + j]
    }

    pub fn mul(&self, other: &QMat) -> QMat {
        assert_eq!(self.n_cols, other.n_rows);
        let mut out = QMat::zero(self.n_rows, other.n_cols);
        for i in 0..self.n_rows {
            for k in 0..self.n_cols {
                if self.at(i, k).is_zero() {
                    continue;
                }
                for j in 0..other.n_cols {
                    let add = self.at(i, k) * other.at(k, j);
                    *out.at_mut(i, j) += add;
                }
            }
        }
        out
    }

    pub fn pow(&self, k: usize) -> QMat {
        assert_eq!(self.n_rows, self.n_cols);
        let mut out = QMat::identity(self.n_rows);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    /// Row echelon reduction in place; returns pivot column indices.
    fn row_reduce(&mut self) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut r = 0usize;
        for j in 0..self.n_cols {
            if r == self.n_rows {
                break;
            }
            let Some(p) = (r..self.n_rows).find(|&i| !self.at(i, j).is_zero()) else {
                continue;
            };
            for jj in 0..self.n_cols {
                self.a.swap(r * self.n_cols + jj, p * self.n_cols + jj);
            }
            let inv = self.at(r, j).recip();
            for jj in 0..self.n_cols {
                let v = self.at(r, jj) * &inv;
                *self.at_mut(r, jj) = v;
            }
            for i in 0..self.n_rows {
                if i == r || self.at(i, j).is_zero() {
                    continue;
                }
                let f = self.at(i, j).clone();
                for jj in 0..self.n_cols {
                    let sub = &f * self.at(r, jj);
                    *self.at_mut(i, jj) -= sub;
                }
            }
            pivots.push(j);
            r += 1;
        }
        pivots
    }

    pub fn rank(&self) -> usize {
        self.clone().row_reduce().len()
    }

    pub fn det(&self) -> BigRational {
        assert_eq!(self.n_rows, self.n_cols);
        let mut m = self.clone();
        let n = m.n_rows;
        let mut det = BigRational::one();
        for t in 0..n {
            let Some(p) = (t..n).find(|&i| !m.at(i, t).is_zero()) else {
                return BigRational::zero();
            };
            if p != t {
                for j in 0..n {
                    m.a.swap(t * n + j, p * n + j);
                }
                det = -det;
            }
            det *= m.at(t, t).clone();
            let inv = m.at(t, t).recip();
            for i in t + 1..n {
                if m.at(i, t).is_zero() {
                    continue;
                }
                let f = m.at(i, t) * &inv;
                for j in t..n {
                    let sub = &f * m.at(t, j);
                    *m.at_mut(i, j) -= sub;
                }
            }
        }
        det
    }

    /// Characteristic polynomial coefficients `[1, c1, .., cn]` with
    /// `det(λI - A) = λ^n + c1 λ^(n-1) + … + cn`, by the trace
    /// recursion of Faddeev and LeVerrier.
    pub fn char_poly(&self) -> Vec<BigRational> {
        assert_eq!(self.n_rows, self.n_cols);
        let n = self.n_rows;
        let mut coeffs = vec![BigRational::one()];
        let mut mk = QMat::identity(n);
        for k in 1..=n {
            mk = self.mul(&mk);
            let trace = (0..n).fold(BigRational::zero(), |acc, i| acc + mk.at(i, i));
            let ck = -trace / BigRational::from_integer(BigInt::from(k as i64));
            for i in 0..n {
                *mk.at_mut(i, i) += ck.clone();
            }
            coeffs.push(ck);
        }
        coeffs
    }

    fn select_columns(&self, cols: &[usize]) -> QMat {
        let mut out = QMat::zero(self.n_rows, cols.len());
        for (jj, &j) in cols.iter().enumerate() {
            for i in 0..self.n_rows {
                *out.at_mut(i, jj) = self.at(i, j).clone();
            }
        }
        out
    }

    /// Solves `self · X = rhs` when `self` has full column rank; `None`
    /// if inconsistent.
    fn solve(&self, rhs: &QMat) -> Option<QMat> {
        assert_eq!(self.n_rows, rhs.n_rows);
        let r = self.n_cols;
        let mut aug = QMat::zero(self.n_rows, r + rhs.n_cols);
        for i in 0..self.n_rows {
            for j in 0..r {
                *aug.at_mut(i, j) = self.at(i, j).clone();
            }
            for j in 0..rhs.n_cols {
                *aug.at_mut(i, r + j) = rhs.at(i, j).clone();
            }
        }
        let pivots = aug.row_reduce();
        let lead: Vec<usize> = pivots.iter().copied().filter(|&j| j < r).collect();
        if lead.len() != r {
            return None;
        }
        // Any pivot in the rhs block marks inconsistency.
        if pivots.iter().any(|&j| j >= r) {
            return None;
        }
        let mut x = QMat::zero(r, rhs.n_cols);
        for (row, &j) in lead.iter().enumerate() {
            debug_assert_eq!(j, row);
            for jj in 0..rhs.n_cols {
                *x.at_mut(row, jj) = aug.at(row, r + jj).clone();
            }
        }
        Some(x)
    }
}

/// Graded endomorphism: one square rational block per homology
/// dimension.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Endomorphism {
    pub blocks: Vec<QMat>,
}

impl Endomorphism {
    pub fn identity(dims: &[usize]) -> Endomorphism {
        Endomorphism {
            blocks: dims.iter().map(|&n| QMat::identity(n)).collect(),
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.n_rows()).collect()
    }
}

/// Leray reduction: quotient by the generalized kernel, then restrict to
/// the eventual image. The result is an automorphism of its domain,
/// asserted via a nonzero determinant; an automorphism input comes back
/// conjugate to itself.
pub fn leray_reduce(a: &Endomorphism) -> Endomorphism {
    Endomorphism {
        blocks: a.blocks.iter().map(leray_block).collect(),
    }
}

fn leray_block(m: &QMat) -> QMat {
    assert_eq!(m.n_rows(), m.n_cols(), "endomorphism blocks are square");
    let n = m.n_rows();
    if n == 0 {
        return QMat::identity(0);
    }
    // Powers stabilize by exponent n: ker and im of m^n are the Fitting
    // pair, and m restricted to im(m^n) is invertible.
    let stable = m.pow(n);
    let pivots = stable.clone().row_reduce();
    if pivots.is_empty() {
        return QMat::identity(0);
    }
    let basis = stable.select_columns(&pivots);
    let mapped = m.mul(&basis);
    let reduced = basis
        .solve(&mapped)
        .expect("the eventual image is invariant under the map");
    assert!(
        !reduced.det().is_zero(),
        "reduction must yield an automorphism"
    );
    reduced
}

/// Grading shapes disagree between a homology result and an
/// endomorphism.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DimensionMismatch {
    pub expected: Vec<usize>,
    pub got: Vec<usize>,
}

impl fmt::Display for DimensionMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "endomorphism blocks {:?} do not match homology ranks {:?}",
            self.got, self.expected
        )
    }
}

impl Error for DimensionMismatch {}

/// Per-dimension rank of homology modulo the generalized kernel of an
/// index-map endomorphism. With the identity (the flow-time case) the
/// Betti numbers pass through unchanged.
pub fn gker_quotient_betti(
    h: &HomologyResult,
    a: Option<&Endomorphism>,
) -> Result<Vec<usize>, DimensionMismatch> {
    let Some(endo) = a else {
        return Ok(h.betti.clone());
    };
    let got = endo.dims();
    if got != h.betti {
        return Err(DimensionMismatch {
            expected: h.betti.clone(),
            got,
        });
    }
    Ok(endo
        .blocks
        .iter()
        .map(|b| {
            let n = b.n_rows();
            if n == 0 {
                0
            } else {
                b.pow(n).rank()
            }
        })
        .collect())
}
