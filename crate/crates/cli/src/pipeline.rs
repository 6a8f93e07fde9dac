//! Orchestration from a resolved configuration to artifacts on disk.

use std::collections::BTreeMap;
use std::error::Error;
use std::fmt;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use morsescope::conley::{
    build_index_pair, inv_part, isolating_nbhd, relative_homology, IndexPairError,
};
use morsescope::enclosure::{
    build_map, build_tube_map, endpoint_images, CombinatorialMap, StepStrategy,
};
use morsescope::integrator::Integrator;
use morsescope::interval::Interval;
use morsescope::morse::{census, morse_decomposition, morse_graph, to_dot, MorseDecomposition};
use morsescope::verify::{check_criterion, Verdict, VerifyMode};
use morsescope::{CellSet, Grid, IvBox};

use crate::config::Resolved;
use crate::report::{
    CellStats, CensusInfo, ConleyInfo, GraphInfo, GridInfo, MorseSetInfo, Report, SetCheckInfo,
    VerificationInfo, REPORT_VERSION,
};
use crate::svg;

/// Reachability sweeps are skipped above this many Morse sets; a
/// decomposition drowning in spurious sets only needs the census.
const MAX_GRAPH_SETS: usize = 512;

#[derive(Debug)]
pub enum PipelineError {
    Io { path: PathBuf, err: std::io::Error },
    Internal { what: String },
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::Io { path, err } => write!(f, "{}: {err}", path.display()),
            PipelineError::Internal { what } => write!(f, "{what}"),
        }
    }
}

impl Error for PipelineError {}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> PipelineError + '_ {
    move |err| PipelineError::Io {
        path: path.to_path_buf(),
        err,
    }
}

pub struct Outcome {
    pub report: Report,
    pub exit_code: i32,
}

pub fn analyze(cfg: &Resolved) -> Result<Outcome, PipelineError> {
    let total = Instant::now();
    let mut timings: BTreeMap<String, u64> = BTreeMap::new();
    let stage = |name: &str, start: Instant, timings: &mut BTreeMap<String, u64>| {
        timings.insert(name.to_string(), start.elapsed().as_millis() as u64);
    };

    for path in [&cfg.report_path, &cfg.dot_path, &cfg.svg_path] {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir).map_err(io_err(dir))?;
            }
        }
    }

    let strategy = cfg.echo.strategy.to_strategy();
    let iconfig = cfg.echo.integrator.to_config();

    let start = Instant::now();
    let map = load_or_build_map(cfg, strategy, &iconfig);
    stage("build_map", start, &mut timings);

    let start = Instant::now();
    let md = morse_decomposition(&map);
    let graph = morse_graph(&map, &md, MAX_GRAPH_SETS);
    let cen = census(&md);
    stage("morse", start, &mut timings);

    // The upfront tube map serves the verifier only; index pairs build
    // their own covers on demand.
    let mut tube_cells = CellSet::new();
    if cfg.echo.run_verify && matches!(strategy, StepStrategy::Adaptive { .. }) {
        for s in &md.sets {
            tube_cells = tube_cells.union(s);
        }
    }
    let start = Instant::now();
    let integ = Integrator::new(&cfg.field, iconfig);
    let tubes = build_tube_map(&cfg.grid, &integ, strategy, &tube_cells);
    stage("tubes", start, &mut timings);

    let start = Instant::now();
    let verification = if cfg.echo.run_verify {
        let vr = check_criterion(&cfg.grid, &md, &tubes, strategy).map_err(|e| {
            PipelineError::Internal {
                what: format!("verification over an incomplete tube map: {e}"),
            }
        })?;
        Some(vr)
    } else {
        None
    };
    stage("verification", start, &mut timings);

    let start = Instant::now();
    let conley = cfg
        .echo
        .run_index
        .then(|| conley_entries(cfg, &map, &integ, strategy, &md));
    stage("conley", start, &mut timings);

    let start = Instant::now();
    let dot_text = match &graph {
        Some(g) => to_dot(&md, g),
        None => format!(
            "digraph morse_graph {{\n  // {} sets exceed the reachability budget of {MAX_GRAPH_SETS}\n}}\n",
            md.sets.len()
        ),
    };
    fs::write(&cfg.dot_path, &dot_text).map_err(io_err(&cfg.dot_path))?;

    let set_cells: Vec<Vec<u64>> = md
        .sets
        .iter()
        .map(|s| s.iter().map(|c| c.0).collect())
        .collect();
    let collar_cells: Vec<Vec<u64>> = match &verification {
        Some(vr) => vr
            .per_set
            .iter()
            .enumerate()
            .map(|(p, check)| {
                check
                    .reach_cells
                    .difference(&md.sets[p])
                    .iter()
                    .map(|c| c.0)
                    .collect()
            })
            .collect(),
        None => vec![Vec::new(); md.sets.len()],
    };
    let svg_text = svg::render(&cfg.grid, &build_layers(&set_cells, &collar_cells));
    fs::write(&cfg.svg_path, &svg_text).map_err(io_err(&cfg.svg_path))?;
    stage("render", start, &mut timings);

    let failed_fraction = map.n_failed() as f64 / map.n_cells().max(1) as f64;
    let rejected = matches!(
        verification.as_ref().map(|vr| &vr.verdict),
        Some(Verdict::Rejected { .. })
    );

    let mut report = Report {
        version: REPORT_VERSION,
        config: cfg.echo.clone(),
        timings_ms: BTreeMap::new(),
        grid: GridInfo {
            dim: cfg.grid.dim(),
            divisions: cfg.grid.divisions().to_vec(),
            n_cells: cfg.grid.n_cells(),
        },
        cells: CellStats {
            total: map.n_cells(),
            failed: map.n_failed(),
            exiting: map.n_exiting(),
            failed_fraction,
        },
        map_hash: map.digest_hex(),
        morse_sets: set_cells
            .iter()
            .enumerate()
            .map(|(index, cells)| MorseSetInfo {
                index,
                size: cells.len(),
                cells: cfg.echo.cell_lists.then(|| cells.clone()),
            })
            .collect(),
        census: CensusInfo {
            n_sets: cen.n_sets,
            n_singleton: cen.n_singleton,
            largest: cen.largest,
            size_histogram: cen.size_histogram,
        },
        morse_graph: graph.map(|g| GraphInfo {
            edges: g.edges,
            reaches: g.reaches,
        }),
        verification: verification.map(|vr| VerificationInfo {
            mode: match vr.mode {
                VerifyMode::ConstantStep => "constant_step".to_string(),
                VerifyMode::TubeContainment => "tube_containment".to_string(),
            },
            certified: vr.verdict.is_certified(),
            reasons: match vr.verdict {
                Verdict::Certified => Vec::new(),
                Verdict::Rejected { reasons } => reasons,
            },
            per_set: vr
                .per_set
                .into_iter()
                .enumerate()
                .map(|(set, check)| SetCheckInfo {
                    set,
                    stays_in_domain: check.stays_in_domain,
                    failed_cells: check.failed_cells,
                    disjoint_from: check.disjoint_from,
                    reach_cells: cfg
                        .echo
                        .cell_lists
                        .then(|| check.reach_cells.iter().map(|c| c.0).collect()),
                })
                .collect(),
        }),
        conley,
    };

    timings.insert("total".to_string(), total.elapsed().as_millis() as u64);
    report.timings_ms = timings;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&cfg.report_path, json + "\n").map_err(io_err(&cfg.report_path))?;

    // Exit precedence: pervasive integration failure outranks a
    // verification verdict; config errors never reach this point.
    let exit_code = if failed_fraction > 0.5 {
        4
    } else if rejected {
        3
    } else {
        0
    };
    Ok(Outcome { report, exit_code })
}

fn load_or_build_map(
    cfg: &Resolved,
    strategy: StepStrategy,
    iconfig: &morsescope::integrator::IntegratorConfig,
) -> CombinatorialMap {
    if cfg.cache {
        if let Ok(f) = fs::File::open(&cfg.cache_path) {
            match CombinatorialMap::read_cache(&mut BufReader::new(f)) {
                Ok(map) if map.matches_setup(&cfg.grid, &cfg.field, strategy, iconfig) => {
                    return map;
                }
                Ok(_) => {}
                Err(e) => eprintln!(
                    "warning: ignoring map cache {}: {e}",
                    cfg.cache_path.display()
                ),
            }
        }
    }
    let map = build_map(&cfg.grid, &cfg.field, strategy, iconfig);
    if cfg.cache {
        let written = fs::File::create(&cfg.cache_path).and_then(|f| {
            let mut w = BufWriter::new(f);
            map.write_cache(&mut w)
        });
        if let Err(e) = written {
            eprintln!(
                "warning: map cache {} not written: {e}",
                cfg.cache_path.display()
            );
        }
    }
    map
}

/// Interior failures retry with one more collar layer until this width;
/// past it the entry keeps the last failure.
const MAX_COLLAR: u32 = 64;

fn conley_entries(
    cfg: &Resolved,
    map: &CombinatorialMap,
    integ: &Integrator,
    strategy: StepStrategy,
    md: &MorseDecomposition,
) -> Vec<ConleyInfo> {
    (0..md.sets.len())
        .map(|set| conley_entry(cfg, map, integ, strategy, md, set))
        .collect()
}

fn conley_entry(
    cfg: &Resolved,
    map: &CombinatorialMap,
    integ: &Integrator,
    strategy: StepStrategy,
    md: &MorseDecomposition,
    set: usize,
) -> ConleyInfo {
    let mut collar = cfg.echo.collar;
    loop {
        let mut entry = ConleyInfo {
            set,
            collar: Some(collar),
            neighborhood_size: None,
            touches_boundary: None,
            p1_size: None,
            p2_size: None,
            betti: None,
            torsion: None,
            error: None,
        };
        let nbhd = match isolating_nbhd(&cfg.grid, md, set, collar) {
            Ok(n) => n,
            Err(e) => {
                entry.error = Some(e.to_string());
                return entry;
            }
        };
        entry.neighborhood_size = Some(nbhd.cells.len());
        entry.touches_boundary = Some(nbhd.touches_boundary);
        // Clipping at the domain boundary is tolerable only when no
        // orbit actually leaves there.
        if nbhd.touches_boundary {
            let tubes = build_tube_map(&cfg.grid, integ, strategy, &nbhd.cells);
            let leaks = nbhd
                .cells
                .iter()
                .any(|c| tubes.get(c).is_none_or(|t| t.failed || t.exits_domain));
            if leaks {
                entry.error = Some(
                    "neighborhood touches the domain boundary and orbits exit there".to_string(),
                );
                return entry;
            }
        }
        let s = inv_part(&nbhd.cells, map);
        if s.is_empty() {
            entry.error = Some("no invariant part inside the neighborhood".to_string());
            return entry;
        }
        let images = endpoint_images(map, &nbhd.cells);
        match build_index_pair(&cfg.grid, &nbhd.cells, &s, &images) {
            Ok(pair) => {
                let h = relative_homology(&cfg.grid, &pair.p1, &pair.p2);
                entry.p1_size = Some(pair.p1.len());
                entry.p2_size = Some(pair.p2.len());
                entry.betti = Some(h.betti);
                entry.torsion = Some(
                    h.torsion
                        .iter()
                        .map(|dim| dim.iter().map(|t| t.to_string()).collect())
                        .collect(),
                );
                return entry;
            }
            // Exit flow crossing the seed collar can be an artifact of a
            // tight neighborhood; a wider one gives it room to drain.
            Err(IndexPairError::InteriorConditionFailed { .. }) if collar < MAX_COLLAR => {
                collar += 1;
            }
            Err(e) => {
                entry.error = Some(e.to_string());
                return entry;
            }
        }
    }
}

/// Collar layers combine under the sets so overlapping evidence stays
/// visible; within a kind, set order fixes draw order.
fn build_layers(sets: &[Vec<u64>], collars: &[Vec<u64>]) -> Vec<svg::Layer> {
    let mut layers = Vec::new();
    for (p, cells) in collars.iter().enumerate() {
        if !cells.is_empty() {
            layers.push(svg::Layer {
                fill: svg::darken(svg::palette_color(p)),
                cells: cells.clone(),
            });
        }
    }
    for (p, cells) in sets.iter().enumerate() {
        if !cells.is_empty() {
            layers.push(svg::Layer {
                fill: svg::palette_color(p).to_string(),
                cells: cells.clone(),
            });
        }
    }
    layers
}

#[derive(Debug)]
pub enum RenderError {
    Io { path: PathBuf, err: std::io::Error },
    Parse { path: PathBuf, err: serde_json::Error },
    MissingArtifact { what: String },
    BadGrid { what: String },
}

impl fmt::Display for RenderError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RenderError::Io { path, err } => write!(f, "{}: {err}", path.display()),
            RenderError::Parse { path, err } => write!(f, "{}: {err}", path.display()),
            RenderError::MissingArtifact { what } => write!(f, "missing artifact: {what}"),
            RenderError::BadGrid { what } => write!(f, "{what}"),
        }
    }
}

impl Error for RenderError {}

/// Rebuilds the figure from a report alone.
pub fn render_from_report(path: &Path) -> Result<String, RenderError> {
    let text = fs::read_to_string(path).map_err(|err| RenderError::Io {
        path: path.to_path_buf(),
        err,
    })?;
    let report: Report = serde_json::from_str(&text).map_err(|err| RenderError::Parse {
        path: path.to_path_buf(),
        err,
    })?;
    let domain: IvBox = report
        .config
        .domain
        .iter()
        .map(|&[lo, hi]| Interval::new(lo, hi))
        .collect();
    let grid = Grid::new(domain, report.config.divisions.clone())
        .map_err(|e| RenderError::BadGrid {
            what: format!("report grid does not reconstruct: {e}"),
        })?;

    let mut sets = Vec::with_capacity(report.morse_sets.len());
    for info in &report.morse_sets {
        match &info.cells {
            Some(cells) => sets.push(cells.clone()),
            None => {
                return Err(RenderError::MissingArtifact {
                    what: format!(
                        "report has no cell list for Morse set {}; rerun analyze with cell_lists",
                        info.index
                    ),
                })
            }
        }
    }
    let mut collars = vec![Vec::new(); sets.len()];
    if let Some(vr) = &report.verification {
        for check in &vr.per_set {
            if let Some(reach) = &check.reach_cells {
                if check.set < sets.len() {
                    collars[check.set] = diff_sorted(reach, &sets[check.set]);
                }
            }
        }
    }
    Ok(svg::render(&grid, &build_layers(&sets, &collars)))
}

/// Difference of two ascending id lists.
fn diff_sorted(a: &[u64], b: &[u64]) -> Vec<u64> {
    let mut out = Vec::with_capacity(a.len());
    let mut j = 0;
    for &x in a {
        while j < b.len() && b[j] < x {
            j += 1;
        }
        if j == b.len() || b[j] != x {
            out.push(x);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_difference_drops_common_ids() {
        assert_eq!(diff_sorted(&[1, 2, 3, 5, 9], &[2, 5]), vec![1, 3, 9]);
        assert_eq!(diff_sorted(&[], &[1]), Vec::<u64>::new());
        assert_eq!(diff_sorted(&[4, 7], &[]), vec![4, 7]);
    }

    #[test]
    fn layer_order_is_collars_then_sets() {
        let layers = build_layers(
            &[vec![1], vec![2]],
            &[vec![10, 11], Vec::new()],
        );
        assert_eq!(layers.len(), 3);
        assert_eq!(layers[0].cells, vec![10, 11]);
        assert_eq!(layers[1].cells, vec![1]);
        assert_eq!(layers[2].cells, vec![2]);
    }
}
