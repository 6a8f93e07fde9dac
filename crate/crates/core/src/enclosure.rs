//! Combinatorial flow maps over a cubical grid.
//!
//! For every grid cell `ξ` the map records a validated enclosure of
//! `φ(τ(ξ), ξ)`, discretized back onto the grid: the image is the
//! rectangle of cells meeting the endpoint enclosure. A box cover is
//! always an index rectangle, so images are stored as rectangles instead
//! of explicit cell lists; a full-grid image then costs bytes rather than
//! gigabytes, which is what makes dense maps at fine subdivisions
//! tractable.
//!
//! Cells whose flow cannot be validated are kept, flagged as failed, and
//! given the whole grid as image: every statement downstream remains an
//! over-approximation of the true dynamics.
//!
//! [`ImageTable`] is the companion structure for callers that consume
//! per-cell images as explicit rectangle unions: orbit-tube covers for
//! isolation checks ([`build_tube_map`]), or endpoint covers for index
//! pairs ([`endpoint_images`]). Tables are built per cell set on demand;
//! tube covers for every cell of a fine grid would dwarf the map itself.
//!
//! Maps serialize to a versioned, integrity-hashed cache so repeated
//! analyses of one configuration skip integration entirely.

use rayon::prelude::*;

use crate::grid::{CellId, CellRect, CellSet, Grid, MultiIndex};
use crate::integrator::{Integrator, IntegratorConfig};
use crate::interval::{norm2, Interval, IvBox};
use crate::vfield::tape::Tape;
use crate::vfield::VectorField;

/// How long each cell flows before its image is read off.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepStrategy {
    /// The same flow time for every cell.
    Fixed { h: f64 },
    /// Cell-dependent time `d·‖s‖ / (‖f‖ + delta)`, where `‖s‖` is the
    /// grid cell diagonal and `‖f‖` the field speed over the cell; slow
    /// cells flow longer so their images still clear the cell.
    Adaptive { d: f64, delta: f64 },
}

/// Grid image of one cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CellImage {
    /// The endpoint enclosure missed the domain entirely.
    Empty,
    /// Cells meeting the endpoint enclosure.
    Rect(CellRect),
    /// No validated enclosure; conservatively the whole grid.
    All,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapEntry {
    pub image: CellImage,
    /// The endpoint enclosure (or, for failed cells, possibly the true
    /// image) is not contained in the domain.
    pub exits_domain: bool,
    /// Integration or time-step selection failed on this cell.
    pub failed: bool,
    /// Flow time window used for this cell; `[0, 0]` when selection
    /// itself failed.
    pub tau: Interval,
}

impl MapEntry {
    fn failed_entry(tau: Interval) -> MapEntry {
        MapEntry {
            image: CellImage::All,
            exits_domain: true,
            failed: true,
            tau,
        }
    }
}

/// A validated combinatorial flow map, plus everything identifying the
/// configuration it was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct CombinatorialMap {
    grid: Grid,
    strategy: StepStrategy,
    integrator_config: IntegratorConfig,
    source: Vec<String>,
    params: Vec<(String, f64)>,
    entries: Vec<MapEntry>,
    n_failed: u64,
}

/// Flow time window for one cell, or `None` when the field cannot be
/// evaluated on it.
pub fn tau_interval(
    grid: &Grid,
    strategy: StepStrategy,
    cell: &IvBox,
    field_tape: &Tape,
    scratch: &mut Vec<Interval>,
    fbuf: &mut [Interval],
) -> Option<Interval> {
    match strategy {
        StepStrategy::Fixed { h } => Some(Interval::point(h)),
        StepStrategy::Adaptive { d, delta } => {
            field_tape.eval_interval(cell, scratch, fbuf).ok()?;
            let speed = norm2(fbuf);
            if speed.is_unbounded() {
                return None;
            }
            let num = Interval::point(d).mul(&Interval::point(grid.diagonal_norm()));
            let den = speed.add(&Interval::point(delta));
            num.div(&den).ok()
        }
    }
}

/// Builds the map cell by cell on the current rayon pool. Entry order is
/// the cell order, so the result is identical for any worker count.
pub fn build_map(
    grid: &Grid,
    field: &VectorField,
    strategy: StepStrategy,
    config: &IntegratorConfig,
) -> CombinatorialMap {
    let integ = Integrator::new(field, *config);
    let n = grid.n_cells() as usize;
    let entries: Vec<MapEntry> = (0..n)
        .into_par_iter()
        .map_init(
            || (Vec::new(), vec![Interval::ZERO; grid.dim()]),
            |(scratch, fbuf), i| {
                let cell = grid.cell_box(CellId(i as u64));
                let Some(tau) =
                    tau_interval(grid, strategy, &cell, integ.field_tape(), scratch, fbuf)
                else {
                    return MapEntry::failed_entry(Interval::ZERO);
                };
                match integ.flow_endpoint(&cell, tau) {
                    Ok(enc) => {
                        let cover = grid.cover(&enc.endpoint);
                        MapEntry {
                            image: match cover.rect {
                                Some(rect) => CellImage::Rect(rect),
                                None => CellImage::Empty,
                            },
                            exits_domain: cover.exits_domain,
                            failed: false,
                            tau,
                        }
                    }
                    Err(_) => MapEntry::failed_entry(tau),
                }
            },
        )
        .collect();
    let n_failed = entries.iter().filter(|e| e.failed).count() as u64;
    CombinatorialMap {
        grid: grid.clone(),
        strategy,
        integrator_config: *config,
        source: field.source.clone(),
        params: field.params.iter().map(|(k, v)| (k.clone(), *v)).collect(),
        entries,
        n_failed,
    }
}

impl CombinatorialMap {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn strategy(&self) -> StepStrategy {
        self.strategy
    }

    pub fn integrator_config(&self) -> &IntegratorConfig {
        &self.integrator_config
    }

    pub fn n_cells(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn entry(&self, id: CellId) -> &MapEntry {
        &self.entries[id.0 as usize]
    }

    pub fn entries(&self) -> &[MapEntry] {
        &self.entries
    }

    pub fn n_failed(&self) -> u64 {
        self.n_failed
    }

    pub fn n_exiting(&self) -> u64 {
        self.entries.iter().filter(|e| e.exits_domain).count() as u64
    }

    pub fn failed_cells(&self) -> CellSet {
        CellSet::from_sorted_unchecked(
            self.entries
                .iter()
                .enumerate()
                .filter(|(_, e)| e.failed)
                .map(|(i, _)| CellId(i as u64))
                .collect(),
        )
    }

    /// Whether this map was built from exactly this configuration
    /// (bitwise on floats; a cache is only reused for identical input).
    pub fn matches_setup(
        &self,
        grid: &Grid,
        field: &VectorField,
        strategy: StepStrategy,
        config: &IntegratorConfig,
    ) -> bool {
        self.grid == *grid
            && strategy_eq(self.strategy, strategy)
            && self.integrator_config == *config
            && self.source == field.source
            && self.params.len() == field.params.len()
            && self
                .params
                .iter()
                .zip(field.params.iter())
                .all(|((ak, av), (bk, bv))| ak == bk && av.to_bits() == bv.to_bits())
    }
}

fn strategy_eq(a: StepStrategy, b: StepStrategy) -> bool {
    match (a, b) {
        (StepStrategy::Fixed { h: x }, StepStrategy::Fixed { h: y }) => x.to_bits() == y.to_bits(),
        (StepStrategy::Adaptive { d: x, delta: dx }, StepStrategy::Adaptive { d: y, delta: dy }) => {
            x.to_bits() == y.to_bits() && dx.to_bits() == dy.to_bits()
        }
        _ => false,
    }
}

/// Image of one cell as an explicit union of cover rectangles. For a
/// tube entry the union covers `{φ(s, x) : s ∈ [0, sup τ], x ∈ ξ}`, one
/// rectangle per validated substep; for an endpoint entry it is the
/// single rectangle covering `φ(τ(ξ), ξ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageEntry {
    pub rects: Vec<CellRect>,
    /// Some part of the enclosure is not contained in the domain.
    pub exits_domain: bool,
    /// No validated enclosure exists for this cell.
    pub failed: bool,
}

/// Rectangle-union images for a chosen set of cells.
#[derive(Clone, Debug)]
pub struct ImageTable {
    cells: CellSet,
    entries: Vec<ImageEntry>,
}

impl ImageTable {
    /// Assembles a table from explicit parts. `entries[i]` belongs to
    /// the `i`-th cell of the (sorted) cell set; synthetic fixtures enter
    /// the verifier through here.
    pub fn from_parts(cells: CellSet, entries: Vec<ImageEntry>) -> ImageTable {
        assert_eq!(cells.len(), entries.len(), "one entry per cell");
        ImageTable { cells, entries }
    }

    pub fn cells(&self) -> &CellSet {
        &self.cells
    }

    pub fn get(&self, id: CellId) -> Option<&ImageEntry> {
        self.cells
            .as_slice()
            .binary_search(&id)
            .ok()
            .map(|i| &self.entries[i])
    }
}

/// Extracts the endpoint images of the given cells from a built map, in
/// table form. Images of failed cells are marked failed rather than
/// expanded to the whole grid.
pub fn endpoint_images(map: &CombinatorialMap, cells: &CellSet) -> ImageTable {
    let whole_grid = CellRect {
        lo: map.grid().divisions().iter().map(|_| 0).collect(),
        hi: map.grid().divisions().iter().map(|&k| k - 1).collect(),
    };
    let entries = cells
        .iter()
        .map(|id| {
            let e = map.entry(id);
            let rects = match &e.image {
                CellImage::Empty => Vec::new(),
                CellImage::Rect(r) => vec![r.clone()],
                CellImage::All => vec![whole_grid.clone()],
            };
            ImageEntry {
                rects,
                exits_domain: e.exits_domain,
                failed: e.failed,
            }
        })
        .collect();
    ImageTable {
        cells: cells.clone(),
        entries,
    }
}

/// Builds orbit-tube covers for exactly the given cells, under the same
/// time-step strategy as the endpoint map.
pub fn build_tube_map(
    grid: &Grid,
    integ: &Integrator,
    strategy: StepStrategy,
    cells: &CellSet,
) -> ImageTable {
    let ids: Vec<CellId> = cells.iter().collect();
    let entries: Vec<ImageEntry> = ids
        .par_iter()
        .map_init(
            || (Vec::new(), vec![Interval::ZERO; grid.dim()]),
            |(scratch, fbuf), &id| {
                let cell = grid.cell_box(id);
                let Some(tau) =
                    tau_interval(grid, strategy, &cell, integ.field_tape(), scratch, fbuf)
                else {
                    return ImageEntry {
                        rects: Vec::new(),
                        exits_domain: true,
                        failed: true,
                    };
                };
                match integ.flow_tube(&cell, tau) {
                    Ok(enc) => {
                        let mut rects = Vec::with_capacity(enc.tube.len());
                        let mut exits = false;
                        for seg in &enc.tube {
                            let cover = grid.cover_open(seg);
                            exits |= cover.exits_domain;
                            if let Some(rect) = cover.rect {
                                rects.push(rect);
                            }
                        }
                        ImageEntry {
                            rects,
                            exits_domain: exits,
                            failed: false,
                        }
                    }
                    Err(_) => ImageEntry {
                        rects: Vec::new(),
                        exits_domain: true,
                        failed: true,
                    },
                }
            },
        )
        .collect();
    ImageTable {
        cells: cells.clone(),
        entries,
    }
}

/// Cache (de)serialization errors.
#[derive(Debug)]
pub enum CacheError {
    Io(std::io::Error),
    BadMagic,
    UnsupportedVersion(u32),
    /// Structural problem in the byte stream.
    Corrupt(&'static str),
    /// Content does not match its integrity hash.
    HashMismatch,
}

impl std::fmt::Display for CacheError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CacheError::Io(e) => write!(f, "cache i/o error: {e}"),
            CacheError::BadMagic => write!(f, "not a map cache file"),
            CacheError::UnsupportedVersion(v) => write!(f, "unsupported cache version {v}"),
            CacheError::Corrupt(what) => write!(f, "corrupt cache: {what}"),
            CacheError::HashMismatch => write!(f, "cache integrity hash mismatch"),
        }
    }
}

impl std::error::Error for CacheError {}

impl From<std::io::Error> for CacheError {
    fn from(e: std::io::Error) -> CacheError {
        CacheError::Io(e)
    }
}

const CACHE_MAGIC: &[u8; 8] = b"MORSEMAP";
const CACHE_VERSION: u32 = 1;

impl CombinatorialMap {
    /// Serializes the map: a header identifying the configuration, all
    /// entries, and a trailing SHA-256 of everything before it.
    pub fn write_cache<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        use sha2::{Digest, Sha256};
        let bytes = self.to_bytes();
        let digest = Sha256::digest(&bytes);
        w.write_all(&bytes)?;
        w.write_all(&digest)?;
        Ok(())
    }

    /// Hex SHA-256 of the serialized map, the integrity handle quoted in
    /// reports.
    pub fn digest_hex(&self) -> String {
        use sha2::{Digest, Sha256};
        use std::fmt::Write;
        let digest = Sha256::digest(self.to_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Reads a map previously written by [`CombinatorialMap::write_cache`].
    pub fn read_cache<R: std::io::Read>(r: &mut R) -> Result<CombinatorialMap, CacheError> {
        use sha2::{Digest, Sha256};
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() < CACHE_MAGIC.len() || !bytes.starts_with(CACHE_MAGIC) {
            return Err(CacheError::BadMagic);
        }
        if bytes.len() < 32 {
            return Err(CacheError::Corrupt("shorter than its hash"));
        }
        let (body, stored) = bytes.split_at(bytes.len() - 32);
        let digest = Sha256::digest(body);
        if digest.as_slice() != stored {
            return Err(CacheError::HashMismatch);
        }
        Self::from_bytes(body)
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CACHE_MAGIC);
        put_u32(&mut out, CACHE_VERSION);
        let dim = self.grid.dim();
        put_u32(&mut out, dim as u32);
        for &k in self.grid.divisions() {
            put_u32(&mut out, k);
        }
        for iv in self.grid.domain() {
            put_f64(&mut out, iv.lo);
            put_f64(&mut out, iv.hi);
        }
        put_u32(&mut out, self.source.len() as u32);
        for s in &self.source {
            put_str(&mut out, s);
        }
        put_u32(&mut out, self.params.len() as u32);
        for (name, value) in &self.params {
            put_str(&mut out, name);
            put_f64(&mut out, *value);
        }
        match self.strategy {
            StepStrategy::Fixed { h } => {
                out.push(0);
                put_f64(&mut out, h);
            }
            StepStrategy::Adaptive { d, delta } => {
                out.push(1);
                put_f64(&mut out, d);
                put_f64(&mut out, delta);
            }
        }
        put_u32(&mut out, self.integrator_config.taylor_order as u32);
        put_u64(&mut out, self.integrator_config.max_substeps as u64);
        put_f64(&mut out, self.integrator_config.inflation);
        put_u32(&mut out, self.integrator_config.max_picard_iters as u32);
        put_u64(&mut out, self.entries.len() as u64);
        for e in &self.entries {
            let tag = match &e.image {
                CellImage::Empty => 0u8,
                CellImage::Rect(_) => 1,
                CellImage::All => 2,
            };
            out.push(tag);
            out.push(u8::from(e.exits_domain) | (u8::from(e.failed) << 1));
            put_f64(&mut out, e.tau.lo);
            put_f64(&mut out, e.tau.hi);
            if let CellImage::Rect(rect) = &e.image {
                for &v in &rect.lo {
                    put_u32(&mut out, v);
                }
                for &v in &rect.hi {
                    put_u32(&mut out, v);
                }
            }
        }
        out
    }

    fn from_bytes(body: &[u8]) -> Result<CombinatorialMap, CacheError> {
        let mut cur = Cursor {
            buf: body,
            pos: CACHE_MAGIC.len(),
        };
        let version = cur.u32()?;
        if version != CACHE_VERSION {
            return Err(CacheError::UnsupportedVersion(version));
        }
        let dim = cur.u32()? as usize;
        if dim == 0 || dim > 64 {
            return Err(CacheError::Corrupt("implausible dimension"));
        }
        let mut divisions = Vec::with_capacity(dim);
        for _ in 0..dim {
            divisions.push(cur.u32()?);
        }
        let mut domain = IvBox::with_capacity(dim);
        for _ in 0..dim {
            let lo = cur.f64()?;
            let hi = cur.f64()?;
            if !(lo < hi) {
                return Err(CacheError::Corrupt("inverted domain interval"));
            }
            domain.push(Interval::new(lo, hi));
        }
        let grid = Grid::new(domain, divisions)
            .map_err(|_| CacheError::Corrupt("domain and divisions do not form a grid"))?;
        let n_sources = cur.u32()? as usize;
        let mut source = Vec::with_capacity(n_sources);
        for _ in 0..n_sources {
            source.push(cur.str()?);
        }
        let n_params = cur.u32()? as usize;
        let mut params = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            let name = cur.str()?;
            let value = cur.f64()?;
            params.push((name, value));
        }
        let strategy = match cur.u8()? {
            0 => StepStrategy::Fixed { h: cur.f64()? },
            1 => StepStrategy::Adaptive {
                d: cur.f64()?,
                delta: cur.f64()?,
            },
            _ => return Err(CacheError::Corrupt("unknown strategy tag")),
        };
        let integrator_config = IntegratorConfig {
            taylor_order: cur.u32()? as usize,
            max_substeps: cur.u64()? as usize,
            inflation: cur.f64()?,
            max_picard_iters: cur.u32()? as usize,
        };
        let n_entries = cur.u64()?;
        if n_entries != grid.n_cells() {
            return Err(CacheError::Corrupt("entry count does not match grid"));
        }
        let mut entries = Vec::with_capacity(n_entries as usize);
        for _ in 0..n_entries {
            let tag = cur.u8()?;
            let flags = cur.u8()?;
            let lo = cur.f64()?;
            let hi = cur.f64()?;
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(CacheError::Corrupt("invalid tau interval"));
            }
            let tau = Interval::new(lo, hi);
            let image = match tag {
                0 => CellImage::Empty,
                1 => {
                    let mut rlo = MultiIndex::new();
                    let mut rhi = MultiIndex::new();
                    for _ in 0..dim {
                        rlo.push(cur.u32()?);
                    }
                    for _ in 0..dim {
                        rhi.push(cur.u32()?);
                    }
                    for axis in 0..dim {
                        if rlo[axis] > rhi[axis] || rhi[axis] >= grid.divisions()[axis] {
                            return Err(CacheError::Corrupt("image rectangle out of range"));
                        }
                    }
                    CellImage::Rect(CellRect { lo: rlo, hi: rhi })
                }
                2 => CellImage::All,
                _ => return Err(CacheError::Corrupt("unknown image tag")),
            };
            entries.push(MapEntry {
                image,
                exits_domain: flags & 1 != 0,
                failed: flags & 2 != 0,
                tau,
            });
        }
        if cur.pos != cur.buf.len() {
            return Err(CacheError::Corrupt("trailing bytes"));
        }
        let n_failed = entries.iter().filter(|e| e.failed).count() as u64;
        Ok(CombinatorialMap {
            grid,
            strategy,
            integrator_config,
            source,
            params,
            entries,
            n_failed,
        })
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CacheError> {
        if self.buf.len() - self.pos < n {
            return Err(CacheError::Corrupt("truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CacheError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CacheError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CacheError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CacheError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<String, CacheError> {
        let n = self.u32()? as usize;
        if n > 1 << 20 {
            return Err(CacheError::Corrupt("implausible string length"));
        }
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| CacheError::Corrupt("invalid utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::Rk4;
    use crate::vfield::builtin;
    use std::collections::BTreeMap;

    fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn square_domain(r: f64) -> IvBox {
        [Interval::new(-r, r), Interval::new(-r, r)]
            .into_iter()
            .collect()
    }

    fn two_cycles_map(divisions: u32, strategy: StepStrategy) -> CombinatorialMap {
        let field = builtin("two_cycles", &params(&[("mu", 2.0)])).unwrap();
        let grid = Grid::new(square_domain(3.0), vec![divisions, divisions]).unwrap();
        build_map(&grid, &field, strategy, &IntegratorConfig::default())
    }

    #[test]
    fn fixed_tau_is_the_constant() {
        let grid = Grid::new(square_domain(3.0), vec![8, 8]).unwrap();
        let field = builtin("two_cycles", &params(&[("mu", 2.0)])).unwrap();
        let integ = Integrator::new(&field, IntegratorConfig::default());
        let cell = grid.cell_box(CellId(11));
        let tau = tau_interval(
            &grid,
            StepStrategy::Fixed { h: 0.002 },
            &cell,
            integ.field_tape(),
            &mut Vec::new(),
            &mut [Interval::ZERO; 2],
        )
        .unwrap();
        assert_eq!((tau.lo, tau.hi), (0.002, 0.002));
    }

    #[test]
    fn adaptive_tau_matches_speed_at_unit_circle() {
        // At (1, 0) the field speed is exactly 1, so the nominal time is
        // d·‖s‖ / (1 + delta) with ‖s‖ the cell diagonal of the 256-grid.
        let grid = Grid::new(square_domain(3.0), vec![256, 256]).unwrap();
        let field = builtin("two_cycles", &params(&[("mu", 2.0)])).unwrap();
        let integ = Integrator::new(&field, IntegratorConfig::default());
        let id = grid.cell_of_point(&[1.0, 0.0]).unwrap();
        let cell = grid.cell_box(id);
        let tau = tau_interval(
            &grid,
            StepStrategy::Adaptive { d: 4.0, delta: 0.1 },
            &cell,
            integ.field_tape(),
            &mut Vec::new(),
            &mut [Interval::ZERO; 2],
        )
        .unwrap();
        let nominal = 4.0 * grid.diagonal_norm() / 1.1;
        assert!(tau.lo <= nominal && nominal <= tau.hi, "{tau:?} vs {nominal}");
        assert!(tau.lo > 0.10 && tau.hi < 0.14, "{tau:?}");
    }

    #[test]
    fn fixed_map_marks_blowup_corners_failed() {
        let map = two_cycles_map(32, StepStrategy::Fixed { h: 0.002 });
        let corner = map.grid().cell_of_point(&[3.0, 3.0]).unwrap();
        let e = map.entry(corner);
        assert!(e.failed);
        assert_eq!(e.image, CellImage::All);
        assert!(e.exits_domain);
        assert!(map.n_failed() > 0 && map.n_failed() < map.n_cells());
        assert!(map.failed_cells().contains(corner));

        // Near the origin the field is slow, so images are small
        // validated rectangles.
        let center = map.grid().cell_of_point(&[0.05, 0.05]).unwrap();
        let e = map.entry(center);
        assert!(!e.failed);
        match &e.image {
            CellImage::Rect(rect) => assert!(rect.count() <= 9, "{rect:?}"),
            other => panic!("expected small rectangle, got {other:?}"),
        }
    }

    #[test]
    fn map_images_contain_sampled_trajectories() {
        let map = two_cycles_map(64, StepStrategy::Fixed { h: 0.002 });
        let grid = map.grid();
        let field = builtin("two_cycles", &params(&[("mu", 2.0)])).unwrap();
        let mut rk = Rk4::new(&field);
        // Cell centers inside the invariant disk; the endpoint cover must
        // contain the cell of the sampled trajectory endpoint.
        for id in (0..grid.n_cells()).step_by(7).map(CellId) {
            let cell = grid.cell_box(id);
            let c = [cell[0].midpoint(), cell[1].midpoint()];
            if c[0] * c[0] + c[1] * c[1] > 1.3 * 1.3 {
                continue;
            }
            let e = map.entry(id);
            assert!(!e.failed, "interior cell {id:?} failed");
            let y = rk.endpoint(&c, 0.002, 50);
            let target = grid.cell_of_point(&y).expect("stays inside the domain");
            match &e.image {
                CellImage::Rect(rect) => {
                    assert!(
                        rect.contains_multi(&grid.multi_index(target)),
                        "cell {id:?} image misses sampled endpoint"
                    );
                    // Motion over h is far smaller than a cell here, so
                    // the image must also cover the start cell.
                    assert!(rect.contains_multi(&grid.multi_index(id)));
                }
                other => panic!("interior cell {id:?} has image {other:?}"),
            }
        }
    }

    #[test]
    fn adaptive_flow_at_operating_resolution() {
        // One cell of the fine grid, flown for its adaptive window: the
        // image must be a small rectangle shifted along the rotation.
        let field = builtin("two_cycles", &params(&[("mu", 2.0)])).unwrap();
        let grid = Grid::new(square_domain(3.0), vec![256, 256]).unwrap();
        let integ = Integrator::new(&field, IntegratorConfig::default());
        let id = grid.cell_of_point(&[1.0, 0.0]).unwrap();
        let cell = grid.cell_box(id);
        let tau = tau_interval(
            &grid,
            StepStrategy::Adaptive { d: 4.0, delta: 0.1 },
            &cell,
            integ.field_tape(),
            &mut Vec::new(),
            &mut [Interval::ZERO; 2],
        )
        .unwrap();
        let enc = integ.flow_endpoint(&cell, tau).unwrap();
        let cover = grid.cover(&enc.endpoint);
        let rect = cover.rect.unwrap();
        assert!(rect.count() <= 25, "{rect:?}");
        // The center moves to roughly (cos 0.12, sin 0.12).
        let moved = grid.cell_of_point(&[0.993, 0.120]).unwrap();
        assert!(rect.contains_multi(&grid.multi_index(moved)), "{rect:?}");
    }

    #[test]
    fn tube_map_covers_the_cell_itself() {
        let field = builtin("circle_demo", &params(&[])).unwrap();
        let grid = Grid::new(square_domain(2.0), vec![16, 16]).unwrap();
        let integ = Integrator::new(&field, IntegratorConfig::default());
        let cells = CellSet::from_vec(vec![CellId(0), CellId(100), CellId(137)]);
        let tubes = build_tube_map(&grid, &integ, StepStrategy::Fixed { h: 0.01 }, &cells);
        for id in cells.iter() {
            let entry = tubes.get(id).unwrap();
            assert!(!entry.failed);
            // Time zero is in every tube, so the cell covers itself.
            let mi = grid.multi_index(id);
            assert!(
                entry.rects.iter().any(|r| r.contains_multi(&mi)),
                "tube of {id:?} misses its own cell"
            );
        }
        assert!(tubes.get(CellId(1)).is_none());
    }

    #[test]
    fn cache_round_trips_and_detects_tampering() {
        let map = two_cycles_map(8, StepStrategy::Fixed { h: 0.002 });

        let mut bytes = Vec::new();
        map.write_cache(&mut bytes).unwrap();
        let restored = CombinatorialMap::read_cache(&mut bytes.as_slice()).unwrap();
        assert_eq!(map, restored);

        let field = builtin("two_cycles", &params(&[("mu", 2.0)])).unwrap();
        assert!(restored.matches_setup(
            map.grid(),
            &field,
            StepStrategy::Fixed { h: 0.002 },
            &IntegratorConfig::default(),
        ));
        assert!(!restored.matches_setup(
            map.grid(),
            &field,
            StepStrategy::Fixed { h: 0.001 },
            &IntegratorConfig::default(),
        ));

        let mut tampered = bytes.clone();
        let mid = tampered.len() / 2;
        tampered[mid] ^= 0x40;
        assert!(matches!(
            CombinatorialMap::read_cache(&mut tampered.as_slice()),
            Err(CacheError::HashMismatch)
        ));

        let truncated = &bytes[..bytes.len() - 40];
        assert!(matches!(
            CombinatorialMap::read_cache(&mut &truncated[..]),
            Err(CacheError::HashMismatch) | Err(CacheError::Corrupt(_))
        ));

        let mut wrong_magic = bytes.clone();
        wrong_magic[0] = b'X';
        assert!(matches!(
            CombinatorialMap::read_cache(&mut wrong_magic.as_slice()),
            Err(CacheError::BadMagic)
        ));
    }

    #[test]
    fn build_is_deterministic() {
        let a = two_cycles_map(8, StepStrategy::Fixed { h: 0.002 });
        let b = two_cycles_map(8, StepStrategy::Fixed { h: 0.002 });
        assert_eq!(a, b);
    }
}
