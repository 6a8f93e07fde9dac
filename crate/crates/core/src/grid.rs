//! Cubical grid over a rectangular domain.
//!
//! The domain is split into `k_i` equal closed cells per axis. Cell
//! boundaries are computed once with interval arithmetic and stored
//! outward-rounded, so a realized cell box always contains the exact cell;
//! adjacent realized boxes overlap in a sliver around the exact shared face.
//! Everything downstream identifies a cell by its row-major linear index
//! ([`CellId`]), whose numeric order equals lexicographic order on
//! multi-indices.

use smallvec::SmallVec;

use crate::interval::{Interval, IvBox};

/// Linearized (row-major) cell index; the last axis varies fastest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellId(pub u64);

/// Multi-index, one coordinate per axis.
pub type MultiIndex = SmallVec<[u32; 4]>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GridError {
    DimensionMismatch { domain: usize, divisions: usize },
    ZeroDivisions { axis: usize },
    BadDomain { axis: usize },
    TooManyCells,
}

impl std::fmt::Display for GridError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GridError::DimensionMismatch { domain, divisions } => write!(
                f,
                "domain has {domain} axes but divisions has {divisions} entries"
            ),
            GridError::ZeroDivisions { axis } => {
                write!(f, "axis {axis} must be divided into at least one cell")
            }
            GridError::BadDomain { axis } => write!(
                f,
                "domain axis {axis} must have finite bounds with lo < hi"
            ),
            GridError::TooManyCells => write!(f, "total cell count overflows"),
        }
    }
}

impl std::error::Error for GridError {}

#[derive(Clone, Debug)]
pub struct Grid {
    domain: IvBox,
    divisions: Vec<u32>,
    /// `bounds_lo[axis][j]`: rounded-down j-th boundary, `j` in `0..=k`.
    bounds_lo: Vec<Vec<f64>>,
    /// Rounded-up counterpart.
    bounds_hi: Vec<Vec<f64>>,
    strides: Vec<u64>,
    n_cells: u64,
    cell_size: Vec<f64>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Grid) -> bool {
        self.divisions == other.divisions
            && self
                .domain
                .iter()
                .zip(other.domain.iter())
                .all(|(a, b)| a == b)
    }
}

impl Grid {
    pub fn new(domain: IvBox, divisions: Vec<u32>) -> Result<Grid, GridError> {
        if domain.len() != divisions.len() {
            return Err(GridError::DimensionMismatch {
                domain: domain.len(),
                divisions: divisions.len(),
            });
        }
        let mut n_cells: u64 = 1;
        for (axis, (&k, dom)) in divisions.iter().zip(domain.iter()).enumerate() {
            if k == 0 {
                return Err(GridError::ZeroDivisions { axis });
            }
            if !dom.lo.is_finite() || !dom.hi.is_finite() || dom.lo >= dom.hi {
                return Err(GridError::BadDomain { axis });
            }
            n_cells = n_cells
                .checked_mul(k as u64)
                .ok_or(GridError::TooManyCells)?;
        }
        if n_cells > u32::MAX as u64 {
            return Err(GridError::TooManyCells);
        }

        let mut bounds_lo = Vec::with_capacity(domain.len());
        let mut bounds_hi = Vec::with_capacity(domain.len());
        let mut cell_size = Vec::with_capacity(domain.len());
        for (dom, &k) in domain.iter().zip(&divisions) {
            let width = Interval::point(dom.hi).sub(&Interval::point(dom.lo));
            let kd = Interval::point(k as f64);
            cell_size.push(width.div(&kd).expect("k >= 1").hi);
            let mut lo_row = Vec::with_capacity(k as usize + 1);
            let mut hi_row = Vec::with_capacity(k as usize + 1);
            for j in 0..=k {
                // Endpoints are pinned exactly; interior boundaries are
                // lo + width*j/k as an enclosure.
                let b = if j == 0 {
                    Interval::point(dom.lo)
                } else if j == k {
                    Interval::point(dom.hi)
                } else {
                    let frac = width
                        .mul(&Interval::point(j as f64))
                        .div(&kd)
                        .expect("k >= 1");
                    Interval::point(dom.lo).add(&frac)
                };
                lo_row.push(b.lo);
                hi_row.push(b.hi);
            }
            // Uniform cells that are wide relative to an ulp keep rounded
            // boundaries strictly ordered; a violation means the grid is too
            // fine for f64 and must be rejected rather than silently wrong.
            for j in 0..k as usize {
                if !(lo_row[j] < lo_row[j + 1] && hi_row[j] < hi_row[j + 1]) {
                    return Err(GridError::BadDomain { axis: bounds_lo.len() });
                }
            }
            bounds_lo.push(lo_row);
            bounds_hi.push(hi_row);
        }

        let mut strides = vec![1u64; divisions.len()];
        for axis in (0..divisions.len().saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * divisions[axis + 1] as u64;
        }
        Ok(Grid {
            domain,
            divisions,
            bounds_lo,
            bounds_hi,
            strides,
            n_cells,
            cell_size,
        })
    }

    pub fn dim(&self) -> usize {
        self.divisions.len()
    }

    pub fn n_cells(&self) -> u64 {
        self.n_cells
    }

    pub fn domain(&self) -> &IvBox {
        &self.domain
    }

    pub fn divisions(&self) -> &[u32] {
        &self.divisions
    }

    /// Upper bound on the exact cell width, per axis.
    pub fn cell_size(&self) -> &[f64] {
        &self.cell_size
    }

    /// Upper bound on the Euclidean norm of the cell-size vector.
    pub fn diagonal_norm(&self) -> f64 {
        let b: IvBox = self.cell_size.iter().map(|&s| Interval::point(s)).collect();
        crate::interval::norm2(&b).hi
    }

    pub fn multi_index(&self, id: CellId) -> MultiIndex {
        debug_assert!(id.0 < self.n_cells);
        let mut rest = id.0;
        self.strides
            .iter()
            .map(|&s| {
                let q = rest / s;
                rest %= s;
                q as u32
            })
            .collect()
    }

    pub fn linear_index(&self, mi: &[u32]) -> CellId {
        debug_assert_eq!(mi.len(), self.dim());
        CellId(
            mi.iter()
                .zip(&self.strides)
                .map(|(&m, &s)| m as u64 * s)
                .sum(),
        )
    }

    /// Outward-rounded realization of the closed cell, clamped to the
    /// domain box (the exact cell is inside the domain by construction, so
    /// clamping preserves the enclosure).
    pub fn cell_box(&self, id: CellId) -> IvBox {
        let mi = self.multi_index(id);
        mi.iter()
            .enumerate()
            .map(|(axis, &m)| {
                let m = m as usize;
                let lo = self.bounds_lo[axis][m].max(self.domain[axis].lo);
                let hi = self.bounds_hi[axis][m + 1].min(self.domain[axis].hi);
                Interval::new(lo, hi)
            })
            .collect()
    }

    /// All cells whose closed realized box meets `b`, as an index
    /// rectangle, plus whether `b` sticks out of the domain. The rectangle
    /// is `None` when `b` misses the domain entirely.
    pub fn cover(&self, b: &IvBox) -> Cover {
        self.cover_impl(b, false)
    }

    /// Like [`Grid::cover`], but a cell meeting `b` in a shared face only
    /// is excluded. The realized boxes of the remaining cells still cover
    /// `b` clamped to the domain: a face point belongs to the realization
    /// of the cell on its other side. Images that must contain a set in
    /// their interior need [`Grid::cover`]; plain containment, as for
    /// orbit-segment covers, is what this variant serves.
    pub fn cover_open(&self, b: &IvBox) -> Cover {
        self.cover_impl(b, true)
    }

    fn cover_impl(&self, b: &IvBox, open: bool) -> Cover {
        debug_assert_eq!(b.len(), self.dim());
        let mut exits = false;
        let mut lo_mi = MultiIndex::new();
        let mut hi_mi = MultiIndex::new();
        let mut empty = false;
        for axis in 0..self.dim() {
            let iv = &b[axis];
            if iv.lo < self.domain[axis].lo || iv.hi > self.domain[axis].hi {
                exits = true;
            }
            let k = self.divisions[axis] as usize;
            let his = &self.bounds_hi[axis];
            let los = &self.bounds_lo[axis];
            // Cell j realizes [los[j], his[j+1]]; both arrays are strictly
            // increasing, so the meeting range is contiguous.
            let mut first = his[1..].partition_point(|&hi| hi < iv.lo);
            let mut last = los[..k].partition_point(|&lo| lo <= iv.hi);
            if open {
                let of = his[1..].partition_point(|&hi| hi <= iv.lo);
                let ol = los[..k].partition_point(|&lo| lo < iv.hi);
                // A degenerate box on a shared face has no positive-width
                // meeting; fall back to the closed range there.
                if of < ol {
                    first = of;
                    last = ol;
                }
            }
            if first >= last {
                empty = true;
                break;
            }
            lo_mi.push(first as u32);
            hi_mi.push((last - 1) as u32);
        }
        Cover {
            rect: if empty {
                None
            } else {
                Some(CellRect {
                    lo: lo_mi,
                    hi: hi_mi,
                })
            },
            exits_domain: exits,
        }
    }

    /// A cell whose closed realization contains the point, preferring the
    /// smallest index when the point sits on a shared face.
    pub fn cell_of_point(&self, p: &[f64]) -> Option<CellId> {
        debug_assert_eq!(p.len(), self.dim());
        let mut mi = MultiIndex::new();
        for axis in 0..self.dim() {
            let k = self.divisions[axis] as usize;
            let his = &self.bounds_hi[axis];
            let v = p[axis];
            if v < self.bounds_lo[axis][0] || v > his[k] {
                return None;
            }
            let j = his[1..].partition_point(|&hi| hi < v).min(k - 1);
            mi.push(j as u32);
        }
        Some(self.linear_index(&mi))
    }
}

/// Inclusive rectangle of multi-indices; the shape of every box cover.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellRect {
    pub lo: MultiIndex,
    pub hi: MultiIndex,
}

impl CellRect {
    pub fn count(&self) -> u64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| (h - l + 1) as u64)
            .product()
    }

    pub fn contains_multi(&self, mi: &[u32]) -> bool {
        mi.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&m, (&l, &h))| l <= m && m <= h)
    }

    /// Cells in ascending linear order.
    pub fn iter_cells<'g>(&self, grid: &'g Grid) -> impl Iterator<Item = CellId> + 'g {
        let lo = self.lo.clone();
        let hi = self.hi.clone();
        let mut cur: Option<MultiIndex> = Some(lo.clone());
        std::iter::from_fn(move || {
            let mi = cur.clone()?;
            let id = grid.linear_index(&mi);
            // Advance odometer, last axis fastest.
            let mut next = mi;
            let mut axis = next.len();
            loop {
                if axis == 0 {
                    cur = None;
                    break;
                }
                axis -= 1;
                if next[axis] < hi[axis] {
                    next[axis] += 1;
                    for a in axis + 1..next.len() {
                        next[a] = lo[a];
                    }
                    cur = Some(next);
                    break;
                }
            }
            Some(id)
        })
    }

    /// The `k`-th cell in the same ascending order as
    /// [`CellRect::iter_cells`]; `k < self.count()`.
    pub fn cell_at(&self, grid: &Grid, k: u64) -> CellId {
        let mut rem = k;
        let mut mi = self.lo.clone();
        for axis in (0..mi.len()).rev() {
            let extent = (self.hi[axis] - self.lo[axis] + 1) as u64;
            mi[axis] = self.lo[axis] + (rem % extent) as u32;
            rem /= extent;
        }
        debug_assert_eq!(rem, 0, "cell index out of rectangle");
        grid.linear_index(&mi)
    }

    pub fn to_cellset(&self, grid: &Grid) -> CellSet {
        CellSet::from_sorted_unchecked(self.iter_cells(grid).collect())
    }
}

/// Result of [`Grid::cover`].
#[derive(Clone, Debug, PartialEq)]
pub struct Cover {
    pub rect: Option<CellRect>,
    /// True when the covered box is not contained in the domain.
    pub exits_domain: bool,
}

/// Sorted, deduplicated set of cells. Iteration order is ascending linear
/// index everywhere, which is what makes downstream output deterministic.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CellSet {
    cells: Vec<CellId>,
}

impl CellSet {
    pub fn new() -> CellSet {
        CellSet::default()
    }

    pub fn from_vec(mut cells: Vec<CellId>) -> CellSet {
        cells.sort_unstable();
        cells.dedup();
        CellSet { cells }
    }

    /// Caller guarantees sortedness and uniqueness.
    pub fn from_sorted_unchecked(cells: Vec<CellId>) -> CellSet {
        debug_assert!(cells.windows(2).all(|w| w[0] < w[1]));
        CellSet { cells }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, id: CellId) -> bool {
        self.cells.binary_search(&id).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = CellId> + '_ {
        self.cells.iter().copied()
    }

    pub fn as_slice(&self) -> &[CellId] {
        &self.cells
    }

    pub fn first(&self) -> Option<CellId> {
        self.cells.first().copied()
    }

    pub fn insert(&mut self, id: CellId) -> bool {
        match self.cells.binary_search(&id) {
            Ok(_) => false,
            Err(at) => {
                self.cells.insert(at, id);
                true
            }
        }
    }

    pub fn union(&self, other: &CellSet) -> CellSet {
        let mut out = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.cells.len() && j < other.cells.len() {
            match self.cells[i].cmp(&other.cells[j]) {
                std::cmp::Ordering::Less => {
                    out.push(self.cells[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(other.cells[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(self.cells[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.cells[i..]);
        out.extend_from_slice(&other.cells[j..]);
        CellSet { cells: out }
    }

    pub fn intersect(&self, other: &CellSet) -> CellSet {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        CellSet {
            cells: small
                .cells
                .iter()
                .copied()
                .filter(|&c| large.contains(c))
                .collect(),
        }
    }

    pub fn difference(&self, other: &CellSet) -> CellSet {
        CellSet {
            cells: self
                .cells
                .iter()
                .copied()
                .filter(|&c| !other.contains(c))
                .collect(),
        }
    }

    pub fn is_disjoint(&self, other: &CellSet) -> bool {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.cells.iter().all(|&c| !large.contains(c))
    }

    pub fn is_subset(&self, other: &CellSet) -> bool {
        self.cells.iter().all(|&c| other.contains(c))
    }
}

impl FromIterator<CellId> for CellSet {
    fn from_iter<T: IntoIterator<Item = CellId>>(iter: T) -> CellSet {
        CellSet::from_vec(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square_grid(half: f64, k: u32) -> Grid {
        let domain: IvBox = [
            Interval::new(-half, half),
            Interval::new(-half, half),
        ]
        .into_iter()
        .collect();
        Grid::new(domain, vec![k, k]).unwrap()
    }

    #[test]
    fn reference_grid_measurements() {
        let g = square_grid(3.0, 256);
        // 6/256 is dyadic, so the size bound is exact.
        assert_eq!(g.cell_size(), &[0.0234375, 0.0234375]);
        let diag = g.diagonal_norm();
        assert!((diag - 0.033145630368119385).abs() < 1e-15, "diag {diag}");
        assert!(diag >= (2f64).sqrt() * 0.0234375);
        assert_eq!(g.n_cells(), 65536);
    }

    #[test]
    fn linear_order_is_lexicographic() {
        let g = Grid::new(
            [Interval::new(0.0, 1.0), Interval::new(0.0, 1.0)]
                .into_iter()
                .collect(),
            vec![3, 4],
        )
        .unwrap();
        let mut last = None;
        let mut seen = Vec::new();
        for a in 0..3u32 {
            for b in 0..4u32 {
                let id = g.linear_index(&[a, b]);
                if let Some(prev) = last {
                    assert!(id > prev, "row-major order broken at ({a},{b})");
                }
                assert_eq!(g.multi_index(id).as_slice(), &[a, b]);
                last = Some(id);
                seen.push(id);
            }
        }
        assert_eq!(seen.len() as u64, g.n_cells());
    }

    #[test]
    fn cell_boxes_tile_the_domain() {
        let g = square_grid(3.0, 17); // non-dyadic on purpose
        // Neighboring realized boxes overlap at the shared exact face.
        for j in 0..16u32 {
            let a = g.cell_box(g.linear_index(&[j, 0]));
            let b = g.cell_box(g.linear_index(&[j + 1, 0]));
            assert!(a[0].hi >= b[0].lo, "gap between cells {j} and {}", j + 1);
        }
        // Extremes are pinned to the domain.
        let first = g.cell_box(g.linear_index(&[0, 0]));
        let last = g.cell_box(g.linear_index(&[16, 16]));
        assert_eq!(first[0].lo, -3.0);
        assert_eq!(last[0].hi, 3.0);
        // Realized boxes never leave the domain.
        for id in 0..g.n_cells() {
            let b = g.cell_box(CellId(id));
            assert!(crate::interval::box_contains_box(g.domain(), &b));
        }
    }

    #[test]
    fn cover_at_a_grid_vertex_returns_four_cells() {
        let g = square_grid(1.0, 4);
        // (0, 0) is an interior vertex of the 4x4 grid on [-1,1]^2.
        let point: IvBox = [Interval::point(0.0), Interval::point(0.0)]
            .into_iter()
            .collect();
        let c = g.cover(&point);
        assert!(!c.exits_domain);
        let rect = c.rect.unwrap();
        assert_eq!(rect.count(), 4);
        assert_eq!(rect.lo.as_slice(), &[1, 1]);
        assert_eq!(rect.hi.as_slice(), &[2, 2]);
    }

    #[test]
    fn cover_exit_flags() {
        let g = square_grid(1.0, 4);
        let inside: IvBox = [Interval::new(-0.2, 0.3), Interval::new(0.1, 0.9)]
            .into_iter()
            .collect();
        assert!(!g.cover(&inside).exits_domain);
        let sticking_out: IvBox = [Interval::new(0.5, 1.5), Interval::new(0.0, 0.5)]
            .into_iter()
            .collect();
        let c = g.cover(&sticking_out);
        assert!(c.exits_domain);
        assert!(c.rect.is_some(), "partial overlap still covers");
        let outside: IvBox = [Interval::new(2.0, 3.0), Interval::new(0.0, 0.5)]
            .into_iter()
            .collect();
        let c = g.cover(&outside);
        assert!(c.exits_domain);
        assert!(c.rect.is_none());
        // Touching the boundary from inside is not an exit.
        let touching: IvBox = [Interval::new(0.5, 1.0), Interval::new(0.0, 0.5)]
            .into_iter()
            .collect();
        assert!(!g.cover(&touching).exits_domain);
    }

    #[test]
    fn cover_soundness_random_boxes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = square_grid(3.0, 64);
        for _ in 0..10_000 {
            let cx = rng.random_range(-3.5..3.5);
            let cy = rng.random_range(-3.5..3.5);
            let wx = rng.random_range(0.0..0.8);
            let wy = rng.random_range(0.0..0.8);
            let b: IvBox = [
                Interval::new(cx - wx, cx + wx),
                Interval::new(cy - wy, cy + wy),
            ]
            .into_iter()
            .collect();
            let cover = g.cover(&b);
            for _ in 0..32 {
                let p = [
                    rng.random_range(cx - wx..=cx + wx).clamp(-3.0, 3.0),
                    rng.random_range(cy - wy..=cy + wy).clamp(-3.0, 3.0),
                ];
                if p[0] < b[0].lo || p[0] > b[0].hi || p[1] < b[1].lo || p[1] > b[1].hi {
                    continue; // clamp moved the sample off the box
                }
                let cell = g.cell_of_point(&p).expect("point is in the domain");
                let mi = g.multi_index(cell);
                let rect = cover.rect.as_ref().expect("cover cannot be empty here");
                assert!(
                    rect.contains_multi(&mi),
                    "cell {mi:?} of point {p:?} outside cover {rect:?}"
                );
            }
        }
    }

    #[test]
    fn cellset_ops() {
        let a = CellSet::from_vec(vec![CellId(5), CellId(1), CellId(3), CellId(1)]);
        let b = CellSet::from_vec(vec![CellId(3), CellId(4)]);
        assert_eq!(a.len(), 3);
        assert_eq!(
            a.union(&b).iter().map(|c| c.0).collect::<Vec<_>>(),
            vec![1, 3, 4, 5]
        );
        assert_eq!(
            a.intersect(&b).iter().map(|c| c.0).collect::<Vec<_>>(),
            vec![3]
        );
        assert_eq!(
            a.difference(&b).iter().map(|c| c.0).collect::<Vec<_>>(),
            vec![1, 5]
        );
        assert!(!a.is_disjoint(&b));
        assert!(a.intersect(&b).is_subset(&a));
    }

    #[test]
    fn rect_iteration_matches_linear_order() {
        let g = square_grid(1.0, 8);
        let rect = CellRect {
            lo: [2u32, 3].into_iter().collect(),
            hi: [4u32, 5].into_iter().collect(),
        };
        let cells: Vec<CellId> = rect.iter_cells(&g).collect();
        assert_eq!(cells.len() as u64, rect.count());
        assert!(cells.windows(2).all(|w| w[0] < w[1]));
        for id in &cells {
            assert!(rect.contains_multi(&g.multi_index(*id)));
        }
        for (k, id) in cells.iter().enumerate() {
            assert_eq!(rect.cell_at(&g, k as u64), *id);
        }
    }

    proptest! {
        // Every domain point lies in at least one and at most 2^d covers.
        #[test]
        fn point_membership_bounds(
            px in -2.999f64..2.999,
            py in -2.999f64..2.999,
            k in 1u32..40,
        ) {
            let g = square_grid(3.0, k);
            let mut containing = 0_u32;
            for id in 0..g.n_cells() {
                if crate::interval::box_contains_point(&g.cell_box(CellId(id)), &[px, py]) {
                    containing += 1;
                }
            }
            prop_assert!(containing >= 1);
            prop_assert!(containing <= 4, "point in {containing} cells");
        }

        #[test]
        fn grid_rejects_bad_input(k in 0u32..4) {
            let domain: IvBox = [Interval::new(0.0, 1.0)].into_iter().collect();
            let r = Grid::new(domain, vec![k]);
            if k == 0 {
                prop_assert_eq!(r.unwrap_err(), GridError::ZeroDivisions { axis: 0 });
            } else {
                prop_assert!(r.is_ok());
            }
        }
    }
}
