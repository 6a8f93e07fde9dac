//! Certification that a combinatorial Morse decomposition carries over
//! from the time-step map to the flow itself.
//!
//! Two sufficient conditions are checked. With a constant step the
//! decomposition transfers unconditionally, because the flow and the
//! time-h map share invariant sets of the enclosing neighborhoods. With a
//! state-dependent step the transfer needs tube containments: every orbit
//! segment started in a Morse set's cells must stay inside the domain and
//! avoid every other Morse set until the step time has elapsed. The
//! verifier evaluates those containments on tube enclosures; a failed
//! tube enclosure inside a Morse set forces rejection, since nothing can
//! be certified about an orbit segment we could not enclose.
//!
//! The whole check is combinatorial: it consumes an [`ImageTable`] of
//! orbit-tube covers as built by the enclosure stage and offers no way
//! to trim a tube, so a certificate cannot be narrowed into existence
//! through this interface.

use std::error::Error;
use std::fmt;

use crate::enclosure::{ImageEntry, ImageTable, StepStrategy};
use crate::grid::{CellId, CellSet, Grid};
use crate::interval::Interval;
use crate::morse::{MorseDecomposition, MorseGraph};

/// Which sufficient condition was evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerifyMode {
    /// Constant time step; no tube data needed.
    ConstantStep,
    /// State-dependent step; tube containment and cross-disjointness.
    TubeContainment,
}

/// Containment evidence for one Morse set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetCheck {
    /// Cells touched by any tube started in the set: the set itself plus
    /// a collar.
    pub reach_cells: CellSet,
    /// Every tube stayed inside the domain.
    pub stays_in_domain: bool,
    /// `(q, disjoint)` for every other set `q`: the reach cells miss
    /// set `q` entirely.
    pub disjoint_from: Vec<(usize, bool)>,
    /// Cells of the set whose tube enclosure failed.
    pub failed_cells: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Certified,
    Rejected { reasons: Vec<String> },
}

impl Verdict {
    pub fn is_certified(&self) -> bool {
        matches!(self, Verdict::Certified)
    }
}

/// Outcome of a certification attempt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerificationReport {
    pub mode: VerifyMode,
    /// One entry per Morse set; empty in constant-step mode.
    pub per_set: Vec<SetCheck>,
    pub verdict: Verdict,
}

/// The tube map does not cover the decomposition's cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridMismatch {
    pub missing_cell: CellId,
}

impl fmt::Display for GridMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "tube map has no entry for cell {}; it was built for different cells or a different grid",
            self.missing_cell.0
        )
    }
}

impl Error for GridMismatch {}

/// Checks whether the decomposition certifies for the flow.
///
/// A fixed strategy certifies immediately. Otherwise every Morse set is
/// flowed through its tubes and the report records, per set: domain
/// containment, disjointness from every other set, and enclosure
/// failures. The verdict is `Certified` exactly when all three are clean
/// for all sets.
pub fn check_criterion(
    grid: &Grid,
    md: &MorseDecomposition,
    tubes: &ImageTable,
    strategy: StepStrategy,
) -> Result<VerificationReport, GridMismatch> {
    if let StepStrategy::Fixed { .. } = strategy {
        return Ok(VerificationReport {
            mode: VerifyMode::ConstantStep,
            per_set: Vec::new(),
            verdict: Verdict::Certified,
        });
    }

    let mut per_set = Vec::with_capacity(md.sets.len());
    let mut reasons = Vec::new();
    for (p, set) in md.sets.iter().enumerate() {
        let mut reach = CellSet::new();
        let mut stays = true;
        let mut failed = 0usize;
        for cell in set.iter() {
            let entry = tubes.get(cell).ok_or(GridMismatch { missing_cell: cell })?;
            if entry.failed {
                failed += 1;
            }
            if entry.exits_domain {
                stays = false;
            }
            for rect in &entry.rects {
                reach = reach.union(&rect.to_cellset(grid));
            }
        }

        let mut disjoint_from = Vec::with_capacity(md.sets.len().saturating_sub(1));
        for (q, other) in md.sets.iter().enumerate() {
            if q == p {
                continue;
            }
            let disjoint = reach.is_disjoint(other);
            if !disjoint {
                reasons.push(format!(
                    "orbit segments from set {p} reach cells of set {q}"
                ));
            }
            disjoint_from.push((q, disjoint));
        }
        if !stays {
            reasons.push(format!("an orbit segment from set {p} leaves the domain"));
        }
        if failed > 0 {
            reasons.push(format!(
                "{failed} cell(s) of set {p} have no validated orbit enclosure"
            ));
        }
        per_set.push(SetCheck {
            reach_cells: reach,
            stays_in_domain: stays,
            disjoint_from,
            failed_cells: failed,
        });
    }

    let verdict = if reasons.is_empty() {
        Verdict::Certified
    } else {
        Verdict::Rejected { reasons }
    };
    Ok(VerificationReport {
        mode: VerifyMode::TubeContainment,
        per_set,
        verdict,
    })
}

/// Deterministic negative fixture: a circle flow sampled with a step
/// close to the full period.
///
/// The grid is 64 cells over one angular period. The time-step map has
/// two singleton Morse sets, at angle 0 and at half a turn, ordered by
/// one graph edge; but each orbit segment wraps the whole circle before
/// the step ends, so neither set is invariant for the flow and the tube
/// of each set covers the other. Certification must reject this with
/// both cross-disjointness checks false.
pub fn counterexample_fixture() -> (Grid, MorseDecomposition, MorseGraph, ImageTable) {
    let n: u32 = 64;
    let domain = [Interval::new(0.0, std::f64::consts::TAU)]
        .into_iter()
        .collect();
    let grid = Grid::new(domain, vec![n]).expect("valid 1-d grid");

    let sets = vec![
        CellSet::from_vec(vec![CellId(0)]),
        CellSet::from_vec(vec![CellId(n as u64 / 2)]),
    ];
    let md = MorseDecomposition {
        sets,
        n_vertices: n as u64,
    };
    let graph = MorseGraph {
        reaches: vec![vec![false, true], vec![false, false]],
        edges: vec![(0, 1)],
    };

    let full_domain = grid.domain().clone();
    let full_circle = grid
        .cover(&full_domain)
        .rect
        .expect("domain covers itself");
    let wrap = ImageEntry {
        rects: vec![full_circle],
        exits_domain: false,
        failed: false,
    };
    let cells = CellSet::from_vec(vec![CellId(0), CellId(n as u64 / 2)]);
    let tubes = ImageTable::from_parts(cells, vec![wrap.clone(), wrap]);
    (grid, md, graph, tubes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CellRect;
    use smallvec::smallvec;

    fn line_grid(n: u32) -> Grid {
        let domain = [Interval::new(0.0, n as f64)].into_iter().collect();
        Grid::new(domain, vec![n]).unwrap()
    }

    fn rect1(lo: u32, hi: u32) -> CellRect {
        CellRect {
            lo: smallvec![lo],
            hi: smallvec![hi],
        }
    }

    fn singleton_sets(cells: &[u64]) -> MorseDecomposition {
        MorseDecomposition {
            sets: cells
                .iter()
                .map(|&c| CellSet::from_vec(vec![CellId(c)]))
                .collect(),
            n_vertices: 64,
        }
    }

    #[test]
    fn fixed_strategy_certifies_without_tube_data() {
        let grid = line_grid(64);
        let md = singleton_sets(&[0, 32]);
        let tubes = ImageTable::from_parts(CellSet::new(), Vec::new());
        let report =
            check_criterion(&grid, &md, &tubes, StepStrategy::Fixed { h: 0.25 }).unwrap();
        assert_eq!(report.mode, VerifyMode::ConstantStep);
        assert!(report.per_set.is_empty());
        assert!(report.verdict.is_certified());
    }

    fn adaptive() -> StepStrategy {
        StepStrategy::Adaptive { d: 4.0, delta: 0.1 }
    }

    fn tube_of(rects: Vec<CellRect>, exits: bool, failed: bool) -> ImageEntry {
        ImageEntry {
            rects,
            exits_domain: exits,
            failed,
        }
    }

    #[test]
    fn contained_tubes_certify_and_report_is_complete() {
        let grid = line_grid(64);
        let md = singleton_sets(&[0, 32]);
        let cells = CellSet::from_vec(vec![CellId(0), CellId(32)]);
        let tubes = ImageTable::from_parts(
            cells,
            vec![
                tube_of(vec![rect1(0, 2)], false, false),
                tube_of(vec![rect1(31, 34)], false, false),
            ],
        );
        let report = check_criterion(&grid, &md, &tubes, adaptive()).unwrap();
        assert_eq!(report.mode, VerifyMode::TubeContainment);
        assert!(report.verdict.is_certified());
        assert_eq!(report.per_set.len(), 2);
        for (p, check) in report.per_set.iter().enumerate() {
            assert!(check.stays_in_domain);
            assert_eq!(check.failed_cells, 0);
            // Every other set has an explicit disjointness entry.
            let others: Vec<usize> = check.disjoint_from.iter().map(|&(q, _)| q).collect();
            assert_eq!(others, (0..2).filter(|&q| q != p).collect::<Vec<_>>());
            assert!(check.disjoint_from.iter().all(|&(_, d)| d));
            // The tube reach includes the set's own cell.
            assert!(check.reach_cells.contains(md.sets[p].first().unwrap()));
        }
    }

    #[test]
    fn domain_exit_and_failure_each_reject() {
        let grid = line_grid(64);
        let md = singleton_sets(&[0, 32]);
        let cells = CellSet::from_vec(vec![CellId(0), CellId(32)]);

        let tubes = ImageTable::from_parts(
            cells.clone(),
            vec![
                tube_of(vec![rect1(0, 2)], true, false),
                tube_of(vec![rect1(31, 34)], false, false),
            ],
        );
        let report = check_criterion(&grid, &md, &tubes, adaptive()).unwrap();
        assert!(!report.per_set[0].stays_in_domain);
        let Verdict::Rejected { reasons } = &report.verdict else {
            panic!("domain exit must reject");
        };
        assert!(reasons.iter().any(|r| r.contains("leaves the domain")));

        let tubes = ImageTable::from_parts(
            cells,
            vec![
                tube_of(vec![rect1(0, 2)], false, false),
                tube_of(Vec::new(), false, true),
            ],
        );
        let report = check_criterion(&grid, &md, &tubes, adaptive()).unwrap();
        assert_eq!(report.per_set[1].failed_cells, 1);
        assert!(!report.verdict.is_certified());
    }

    #[test]
    fn missing_tube_entry_is_a_grid_mismatch() {
        let grid = line_grid(64);
        let md = singleton_sets(&[0, 32]);
        let cells = CellSet::from_vec(vec![CellId(0)]);
        let tubes = ImageTable::from_parts(cells, vec![tube_of(vec![rect1(0, 1)], false, false)]);
        let err = check_criterion(&grid, &md, &tubes, adaptive()).unwrap_err();
        assert_eq!(err.missing_cell, CellId(32));
    }

    #[test]
    fn wrapping_circle_fixture_is_rejected() {
        let (grid, md, graph, tubes) = counterexample_fixture();
        assert_eq!(md.sets.len(), 2);
        assert!(md.sets.iter().all(|s| s.len() == 1));
        assert_eq!(graph.edges.len(), 1);

        let started = std::time::Instant::now();
        let report = check_criterion(&grid, &md, &tubes, adaptive()).unwrap();
        let elapsed = started.elapsed();

        assert!(!report.verdict.is_certified());
        // Both sets flow across the other: every cross-disjointness check
        // is false.
        for check in &report.per_set {
            assert!(check.stays_in_domain);
            assert_eq!(check.failed_cells, 0);
            assert!(check.disjoint_from.iter().all(|&(_, d)| !d));
        }
        let Verdict::Rejected { reasons } = &report.verdict else {
            unreachable!();
        };
        assert_eq!(
            reasons
                .iter()
                .filter(|r| r.contains("reach cells of"))
                .count(),
            2
        );
        assert!(elapsed.as_millis() < 1000, "rejection took {elapsed:?}");
    }
}
