//! Built-in correctness checks against independent oracles.
//!
//! The oracles here are deliberately naive: quadratic reachability instead
//! of Tarjan, dense integer elimination instead of sparse reduction. They
//! share no code with the production paths they check, so agreement on a
//! fixture means two independent derivations of the same answer. Test
//! suites call the oracles directly; [`run_all`] packages a fixed fixture
//! battery behind the command line.

pub mod oracle {
    //! Naive reference implementations.

    /// All strongly connected components by pairwise reachability,
    /// each sorted, ordered by smallest vertex. `O(n·(n+e))`; for small
    /// fixtures only.
    pub fn strongly_connected_components(
        n: usize,
        succ: &dyn Fn(usize) -> Vec<usize>,
    ) -> Vec<Vec<usize>> {
        // reach[v][u]: a path with at least one edge goes v -> u.
        let mut reach = vec![vec![false; n]; n];
        for v in 0..n {
            let mut work: Vec<usize> = succ(v);
            while let Some(u) = work.pop() {
                if !reach[v][u] {
                    reach[v][u] = true;
                    work.extend(succ(u));
                }
            }
        }
        let mut assigned = vec![false; n];
        let mut comps = Vec::new();
        for v in 0..n {
            if assigned[v] {
                continue;
            }
            let mut comp = vec![v];
            assigned[v] = true;
            for u in v + 1..n {
                if !assigned[u] && reach[v][u] && reach[u][v] {
                    comp.push(u);
                    assigned[u] = true;
                }
            }
            comps.push(comp);
        }
        comps
    }

    /// Components that contain an edge: more than one vertex, or a
    /// self-loop.
    pub fn edge_containing_components(
        n: usize,
        succ: &dyn Fn(usize) -> Vec<usize>,
    ) -> Vec<Vec<usize>> {
        strongly_connected_components(n, succ)
            .into_iter()
            .filter(|comp| comp.len() > 1 || succ(comp[0]).contains(&comp[0]))
            .collect()
    }

    /// Vertices lying on a bi-infinite path, by dynamic programming over
    /// path lengths. A forward path of length `n` must revisit a vertex,
    /// so surviving `n` steps in each direction is equivalent to
    /// surviving forever.
    pub fn bi_infinite_vertices(n: usize, succ: &dyn Fn(usize) -> Vec<usize>) -> Vec<usize> {
        let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
        for v in 0..n {
            for u in succ(v) {
                pred[u].push(v);
            }
        }
        let survive = |adj: &dyn Fn(usize) -> Vec<usize>| -> Vec<bool> {
            let mut can = vec![true; n];
            for _ in 0..n {
                let prev = can.clone();
                for (v, slot) in can.iter_mut().enumerate() {
                    *slot = adj(v).iter().any(|&u| prev[u]);
                }
            }
            can
        };
        let fwd = survive(succ);
        let bwd = survive(&|v: usize| pred[v].clone());
        (0..n).filter(|&v| fwd[v] && bwd[v]).collect()
    }

    use num_bigint::{BigInt, BigUint};
    use num_traits::{One, Signed, Zero};

    /// Invariant factors of an integer matrix, computed the slow way:
    /// a smallest-entry pivot is moved to the corner, the first row and
    /// column are cleared by Euclidean division steps, and the rest of
    /// the matrix is handled by recursing on the minor. Remainders take
    /// over as strictly smaller pivots, so every restart makes progress.
    pub fn smith_normal_form(m: Vec<Vec<BigInt>>) -> Vec<BigInt> {
        fn reduce(mut m: Vec<Vec<BigInt>>) -> Vec<BigInt> {
            let n_rows = m.len();
            let n_cols = m.first().map_or(0, |r| r.len());
            let mut best: Option<(usize, usize)> = None;
            for i in 0..n_rows {
                for j in 0..n_cols {
                    if m[i][j].is_zero() {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((bi, bj)) => m[i][j].abs() < m[bi][bj].abs(),
                    };
                    if better {
                        best = Some((i, j));
                    }
                }
            }
            let Some((i0, j0)) = best else {
                return vec![];
            };
            m.swap(0, i0);
            for row in m.iter_mut() {
                row.swap(0, j0);
            }

            'corner: loop {
                for i in 1..n_rows {
                    if m[i][0].is_zero() {
                        continue;
                    }
                    let q = &m[i][0] / &m[0][0];
                    for j in 0..n_cols {
                        let sub = &q * &m[0][j];
                        m[i][j] -= sub;
                    }
                    if !m[i][0].is_zero() {
                        m.swap(0, i);
                        continue 'corner;
                    }
                }
                for j in 1..n_cols {
                    if m[0][j].is_zero() {
                        continue;
                    }
                    let q = &m[0][j] / &m[0][0];
                    for row in m.iter_mut() {
                        let sub = &q * &row[0];
                        row[j] -= sub;
                    }
                    if !m[0][j].is_zero() {
                        for row in m.iter_mut() {
                            row.swap(0, j);
                        }
                        continue 'corner;
                    }
                }
                for i in 1..n_rows {
                    for j in 1..n_cols {
                        if !(&m[i][j] % &m[0][0]).is_zero() {
                            let row = m[i].clone();
                            for (dst, src) in m[0].iter_mut().zip(row) {
                                *dst += src;
                            }
                            continue 'corner;
                        }
                    }
                }
                break;
            }

            let pivot = m[0][0].abs();
            let minor: Vec<Vec<BigInt>> =
                m[1..].iter().map(|row| row[1..].to_vec()).collect();
            let mut out = vec![pivot];
            out.extend(reduce(minor));
            out
        }
        reduce(m)
    }

    /// Elementary face of a cubical set: per axis `(lo, hi)` with
    /// `hi - lo ∈ {0, 1}`.
    pub type OFace = Vec<(u32, u32)>;

    fn faces_of_cell(m: &[u32]) -> Vec<OFace> {
        let Some((&c, rest)) = m.split_first() else {
            return vec![Vec::new()];
        };
        let tails = faces_of_cell(rest);
        let mut out = Vec::with_capacity(3 * tails.len());
        for head in [(c, c + 1), (c, c), (c + 1, c + 1)] {
            for tail in &tails {
                let mut f = Vec::with_capacity(m.len());
                f.push(head);
                f.extend_from_slice(tail);
                out.push(f);
            }
        }
        out
    }

    fn face_dim(f: &[(u32, u32)]) -> usize {
        f.iter().filter(|(lo, hi)| hi > lo).count()
    }

    fn boundary(f: &[(u32, u32)]) -> Vec<(OFace, i64)> {
        let Some((&(lo, hi), rest)) = f.split_first() else {
            return Vec::new();
        };
        let mut out = Vec::new();
        if hi > lo {
            let mut upper = vec![(hi, hi)];
            upper.extend_from_slice(rest);
            out.push((upper, 1));
            let mut lower = vec![(lo, lo)];
            lower.extend_from_slice(rest);
            out.push((lower, -1));
            for (g, s) in boundary(rest) {
                let mut w = vec![(lo, hi)];
                w.extend(g);
                out.push((w, -s));
            }
        } else {
            for (g, s) in boundary(rest) {
                let mut w = vec![(lo, lo)];
                w.extend(g);
                out.push((w, s));
            }
        }
        out
    }

    /// Betti numbers and torsion coefficients of a relative cubical pair,
    /// cells given as multi-indices. Dense matrices throughout.
    pub fn homology_of_pair(
        dim: usize,
        p1: &[Vec<u32>],
        p2: &[Vec<u32>],
    ) -> (Vec<usize>, Vec<Vec<BigUint>>) {
        use std::collections::{BTreeMap, BTreeSet};
        let mut excluded: BTreeSet<OFace> = BTreeSet::new();
        for cell in p2 {
            excluded.extend(faces_of_cell(cell));
        }
        let mut gens: Vec<BTreeMap<OFace, usize>> = vec![BTreeMap::new(); dim + 1];
        for cell in p1 {
            for f in faces_of_cell(cell) {
                if !excluded.contains(&f) {
                    let k = face_dim(&f);
                    let next = gens[k].len();
                    gens[k].entry(f).or_insert(next);
                }
            }
        }
        let counts: Vec<usize> = gens.iter().map(|g| g.len()).collect();

        let mut ranks = vec![0usize; dim + 2];
        let mut factors: Vec<Vec<BigInt>> = vec![Vec::new(); dim + 2];
        for k in 1..=dim {
            if counts[k] == 0 || counts[k - 1] == 0 {
                continue;
            }
            let mut mat = vec![vec![BigInt::zero(); counts[k]]; counts[k - 1]];
            for (f, &j) in &gens[k] {
                for (g, s) in boundary(f) {
                    if excluded.contains(&g) {
                        continue;
                    }
                    let i = gens[k - 1][&g];
                    mat[i][j] += BigInt::from(s);
                }
            }
            let diag = smith_normal_form(mat);
            let nonzero: Vec<BigInt> = diag.into_iter().filter(|d| !d.is_zero()).collect();
            ranks[k] = nonzero.len();
            factors[k] = nonzero;
        }

        let mut betti = Vec::with_capacity(dim + 1);
        let mut torsion = Vec::with_capacity(dim + 1);
        for k in 0..=dim {
            betti.push(counts[k] - ranks[k] - ranks[k + 1]);
            torsion.push(
                factors[k + 1]
                    .iter()
                    .filter(|f| **f > BigInt::one())
                    .map(|f| f.to_biguint().expect("factors are nonnegative"))
                    .collect(),
            );
        }
        (betti, torsion)
    }
}

use crate::conley::{gker_quotient_betti, leray_reduce, relative_homology, Endomorphism, QMat};
use crate::enclosure::StepStrategy;
use crate::grid::{CellSet, Grid};
use crate::interval::{Interval, IvBox};
use crate::morse::{morse_decomposition, AdjacencyGraph};
use crate::verify::{check_criterion, counterexample_fixture, Verdict};

/// Outcome of one embedded fixture.
#[derive(Clone, Debug)]
pub struct FixtureOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Runs the embedded fixture battery: interval containment sampling, SCC
/// agreement with the reachability oracle, relative homology against the
/// dense oracle, rejection of the non-isolating fixture, and the Leray
/// reduction units.
pub fn run_all() -> Vec<FixtureOutcome> {
    run_battery(false)
}

/// The same battery with one homology expectation deliberately
/// corrupted, so callers can exercise the failure path end to end.
#[doc(hidden)]
pub fn run_tampered() -> Vec<FixtureOutcome> {
    run_battery(true)
}

/// Multiplicative congruential generator; `rand` stays out of the
/// library's dependency set.
struct Lcg(u64);

impl Lcg {
    fn next_u64(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.0
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + u * (hi - lo)
    }
}

fn run_battery(tamper: bool) -> Vec<FixtureOutcome> {
    vec![
        interval_fixture(),
        scc_fixture(),
        homology_fixture(tamper),
        counterexample_fixture_check(),
        leray_fixture(),
    ]
}

/// Composite interval evaluations must contain the plain f64 evaluation
/// of the same expression: outward rounding keeps every representable
/// value between the rounded endpoints.
fn interval_fixture() -> FixtureOutcome {
    let name = "interval containment sampling";
    let mut rng = Lcg(0x5eed_0001);
    let mut checked = 0usize;
    for trial in 0..2_000 {
        let a = rng.uniform(-8.0, 8.0);
        let b = rng.uniform(-8.0, 8.0);
        let ia = Interval::point(a);
        let ib = Interval::point(b);
        let mut cases: Vec<(&str, f64, Interval)> = vec![
            ("add", a + b, ia.add(&ib)),
            ("sub", a - b, ia.sub(&ib)),
            ("mul", a * b, ia.mul(&ib)),
            ("cube", a * a * a, ia.pow_int(3)),
            ("sin", a.sin(), ia.sin()),
            ("cos", b.cos(), ib.cos()),
            (
                "sqrt",
                a.abs().sqrt(),
                ia.abs().sqrt().expect("nonnegative argument"),
            ),
        ];
        if b.abs() > 1e-3 {
            cases.push(("div", a / b, ia.div(&ib).expect("divisor clears zero")));
        }
        for (op, truth, enclosure) in cases {
            checked += 1;
            if !enclosure.contains(truth) {
                return FixtureOutcome {
                    name,
                    passed: false,
                    detail: format!(
                        "trial {trial}: {op}({a}, {b}) = {truth} escapes [{}, {}]",
                        enclosure.lo, enclosure.hi
                    ),
                };
            }
        }
    }
    FixtureOutcome {
        name,
        passed: true,
        detail: format!("{checked} containments hold"),
    }
}

fn scc_fixture() -> FixtureOutcome {
    let name = "strongly connected components against reachability oracle";
    let mut rng = Lcg(0x5eed_0002);
    for trial in 0..150 {
        let n = 2 + (rng.next_u64() % 8) as usize;
        let mut succ: Vec<Vec<u64>> = vec![Vec::new(); n];
        for (v, out) in succ.iter_mut().enumerate() {
            for u in 0..n {
                if rng.uniform(0.0, 1.0) < 0.2 {
                    out.push(u as u64);
                }
            }
            let _ = v;
        }
        let graph = AdjacencyGraph { succ: succ.clone() };
        let got: Vec<Vec<u64>> = morse_decomposition(&graph)
            .sets
            .iter()
            .map(|s| s.iter().map(|c| c.0).collect())
            .collect();
        let want: Vec<Vec<u64>> =
            oracle::edge_containing_components(n, &|v| {
                succ[v].iter().map(|&u| u as usize).collect()
            })
            .into_iter()
            .map(|comp| comp.into_iter().map(|v| v as u64).collect())
            .collect();
        if got != want {
            return FixtureOutcome {
                name,
                passed: false,
                detail: format!("trial {trial}: got {got:?}, oracle says {want:?}"),
            };
        }
    }
    FixtureOutcome {
        name,
        passed: true,
        detail: "150 random digraphs agree".to_string(),
    }
}

fn homology_fixture(tamper: bool) -> FixtureOutcome {
    let name = "relative homology against dense oracle";
    let domain: IvBox = [Interval::new(0.0, 8.0), Interval::new(0.0, 8.0)]
        .into_iter()
        .collect();
    let grid = Grid::new(domain, vec![8, 8]).expect("valid grid");
    let cells = |multis: &[[u32; 2]]| -> CellSet {
        CellSet::from_vec(multis.iter().map(|m| grid.linear_index(m)).collect())
    };
    let multis = |s: &CellSet| -> Vec<Vec<u32>> {
        s.iter().map(|c| grid.multi_index(c).to_vec()).collect()
    };

    let single = cells(&[[1, 1]]);
    let mut ring_cells = Vec::new();
    let mut block_cells = Vec::new();
    let mut edge_cells = Vec::new();
    for x in 2..6u32 {
        for y in 2..6u32 {
            let interior = (3..5).contains(&x) && (3..5).contains(&y);
            if !interior {
                ring_cells.push([x, y]);
            }
            if x < 5 && y < 5 {
                block_cells.push([x, y]);
                if x == 2 || x == 4 || y == 2 || y == 4 {
                    edge_cells.push([x, y]);
                }
            }
        }
    }
    let ring = cells(&ring_cells);
    let block = cells(&block_cells);
    let edge = cells(&edge_cells);

    let ring_expected = if tamper {
        // Test hook: a wrong Betti vector for the annulus.
        vec![1, 0, 0]
    } else {
        vec![1, 1, 0]
    };
    let fixtures: Vec<(&str, &CellSet, CellSet, Vec<usize>)> = vec![
        ("single cell", &single, CellSet::new(), vec![1, 0, 0]),
        ("annulus", &ring, CellSet::new(), ring_expected),
        ("block rel boundary", &block, edge, vec![0, 0, 1]),
    ];
    for (label, p1, p2, expected) in fixtures {
        let got = relative_homology(&grid, p1, &p2);
        let (oracle_betti, oracle_torsion) = oracle::homology_of_pair(2, &multis(p1), &multis(&p2));
        if got.betti != expected || oracle_betti != expected {
            return FixtureOutcome {
                name,
                passed: false,
                detail: format!(
                    "{label}: expected betti {expected:?}, production {:?}, oracle {oracle_betti:?}",
                    got.betti
                ),
            };
        }
        let flat: usize = got.torsion.iter().map(Vec::len).sum::<usize>()
            + oracle_torsion.iter().map(Vec::len).sum::<usize>();
        if flat != 0 {
            return FixtureOutcome {
                name,
                passed: false,
                detail: format!("{label}: unexpected torsion"),
            };
        }
    }
    FixtureOutcome {
        name,
        passed: true,
        detail: "3 model pairs agree on both paths".to_string(),
    }
}

/// The non-isolating two-point fixture on the circle must be rejected
/// with the cross-disjointness check failing in both directions.
fn counterexample_fixture_check() -> FixtureOutcome {
    let name = "rejection of the non-isolating circle fixture";
    let (grid, md, _mg, tubes) = counterexample_fixture();
    let report = match check_criterion(
        &grid,
        &md,
        &tubes,
        StepStrategy::Adaptive { d: 4.0, delta: 0.1 },
    ) {
        Ok(r) => r,
        Err(e) => {
            return FixtureOutcome {
                name,
                passed: false,
                detail: format!("fixture does not match its own grid: {e}"),
            }
        }
    };
    let rejected = matches!(report.verdict, Verdict::Rejected { .. });
    let both_overlap = report.per_set.len() == 2
        && report.per_set[0].disjoint_from == vec![(1, false)]
        && report.per_set[1].disjoint_from == vec![(0, false)];
    FixtureOutcome {
        name,
        passed: rejected && both_overlap,
        detail: if rejected && both_overlap {
            "rejected; tubes overlap in both directions".to_string()
        } else {
            format!("verdict {:?}", report.verdict)
        },
    }
}

fn leray_fixture() -> FixtureOutcome {
    let name = "leray reduction units";
    let id3 = Endomorphism::identity(&[3]);
    let nil = Endomorphism {
        blocks: vec![QMat::from_int_rows(&[vec![0, 1], vec![0, 0]])],
    };
    let diag = Endomorphism {
        blocks: vec![QMat::from_int_rows(&[vec![2, 0], vec![0, 0]])],
    };
    let checks = [
        ("identity is fixed", leray_reduce(&id3).dims() == vec![3]),
        ("nilpotent collapses", leray_reduce(&nil).dims() == vec![0]),
        ("diag(2,0) keeps one axis", {
            let r = leray_reduce(&diag);
            r.dims() == vec![1]
                && *r.blocks[0].at(0, 0) == num_rational::BigRational::from_integer(2.into())
        }),
        ("identity quotient is a no-op", {
            let h = crate::conley::HomologyResult {
                betti: vec![1, 1, 0],
                torsion: vec![Vec::new(); 3],
            };
            gker_quotient_betti(&h, None) == Ok(vec![1, 1, 0])
        }),
    ];
    for (label, ok) in checks {
        if !ok {
            return FixtureOutcome {
                name,
                passed: false,
                detail: format!("{label}: failed"),
            };
        }
    }
    FixtureOutcome {
        name,
        passed: true,
        detail: "4 reductions behave".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_is_green() {
        for outcome in run_all() {
            assert!(outcome.passed, "{}: {}", outcome.name, outcome.detail);
        }
    }

    #[test]
    fn tamper_hook_fails_exactly_one_fixture() {
        let outcomes = run_tampered();
        let failed: Vec<&FixtureOutcome> = outcomes.iter().filter(|o| !o.passed).collect();
        assert_eq!(failed.len(), 1);
        assert_eq!(failed[0].name, "relative homology against dense oracle");
    }
}
