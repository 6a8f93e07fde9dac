//! Analysis configuration: JSON file plus flag overrides.
//!
//! Resolution order is defaults, then the config file, then flags; the
//! resolved values are echoed verbatim into the report so a run can be
//! reproduced from its own output. Anything invalid surfaces as a
//! [`ConfigError`], which the binary maps to exit code 2.

use std::collections::BTreeMap;
use std::error::Error;
use std::fmt;
use std::path::{Path, PathBuf};

use morsescope::enclosure::StepStrategy;
use morsescope::integrator::IntegratorConfig;
use morsescope::interval::Interval;
use morsescope::vfield::{self, VectorField};
use morsescope::{Grid, IvBox};
use serde::{Deserialize, Serialize};

use crate::cli::AnalyzeArgs;

pub const CONFIG_VERSION: u32 = 1;

/// System selection: a builtin by name, or one expression per dimension.
/// Exactly one of the two must be present.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expressions: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

/// Time-step strategy in config form. Serialized externally tagged, so
/// a file says `{"fixed": {"h": 0.0006}}` or
/// `{"adaptive": {"d": 4.0, "delta": 0.1}}`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategySpec {
    Fixed { h: f64 },
    Adaptive { d: f64, delta: f64 },
}

impl StrategySpec {
    pub fn to_strategy(self) -> StepStrategy {
        match self {
            StrategySpec::Fixed { h } => StepStrategy::Fixed { h },
            StrategySpec::Adaptive { d, delta } => StepStrategy::Adaptive { d, delta },
        }
    }
}

/// Integrator knobs with every field materialized.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    pub order: usize,
    pub max_substeps: usize,
    pub inflation: f64,
    pub max_picard_iters: usize,
}

impl IntegratorSpec {
    pub fn to_config(self) -> IntegratorConfig {
        IntegratorConfig {
            taylor_order: self.order,
            max_substeps: self.max_substeps,
            inflation: self.inflation,
            max_picard_iters: self.max_picard_iters,
        }
    }
}

/// File-side integrator section; absent fields keep their defaults.
#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntegratorFile {
    order: Option<usize>,
    max_substeps: Option<usize>,
    inflation: Option<f64>,
    max_picard_iters: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputsFile {
    report: Option<PathBuf>,
    dot: Option<PathBuf>,
    svg: Option<PathBuf>,
}

/// Raw config file. Every field is optional so a file can pin only
/// what it cares about; unknown keys are rejected.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    version: Option<u32>,
    system: Option<SystemSpec>,
    domain: Option<Vec<[f64; 2]>>,
    depth: Option<u32>,
    divisions: Option<Vec<u32>>,
    strategy: Option<StrategySpec>,
    integrator: Option<IntegratorFile>,
    collar: Option<u32>,
    run_verify: Option<bool>,
    run_index: Option<bool>,
    cell_lists: Option<bool>,
    cache: Option<bool>,
    out_dir: Option<PathBuf>,
    outputs: Option<OutputsFile>,
}

/// The part of the resolved configuration that is echoed into the
/// report. Output paths and worker counts do not influence results and
/// stay out, so reports from different output directories still compare
/// byte for byte.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConfigEcho {
    pub system: SystemSpec,
    pub domain: Vec<[f64; 2]>,
    pub divisions: Vec<u32>,
    pub strategy: StrategySpec,
    pub integrator: IntegratorSpec,
    pub collar: u32,
    pub run_verify: bool,
    pub run_index: bool,
    pub cell_lists: bool,
}

/// Fully resolved analysis inputs.
pub struct Resolved {
    pub echo: ConfigEcho,
    pub field: VectorField,
    pub grid: Grid,
    pub cache: bool,
    pub workers: usize,
    pub report_path: PathBuf,
    pub dot_path: PathBuf,
    pub svg_path: PathBuf,
    pub cache_path: PathBuf,
}

#[derive(Debug)]
pub enum ConfigError {
    Io { path: PathBuf, err: std::io::Error },
    Parse { path: PathBuf, err: serde_json::Error },
    Flag { what: String },
    Invalid { what: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, err } => write!(f, "{}: {err}", path.display()),
            ConfigError::Parse { path, err } => write!(f, "{}: {err}", path.display()),
            ConfigError::Flag { what } => write!(f, "{what}"),
            ConfigError::Invalid { what } => write!(f, "{what}"),
        }
    }
}

impl Error for ConfigError {}

fn invalid(what: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { what: what.into() }
}

fn flag(what: impl Into<String>) -> ConfigError {
    ConfigError::Flag { what: what.into() }
}

/// Parses `k=v` parameter assignments.
fn parse_params(pairs: &[String]) -> Result<BTreeMap<String, f64>, ConfigError> {
    let mut out = BTreeMap::new();
    for pair in pairs {
        let Some((name, value)) = pair.split_once('=') else {
            return Err(flag(format!("--param expects name=value, got `{pair}`")));
        };
        let value: f64 = value
            .parse()
            .map_err(|_| flag(format!("--param {name}: `{value}` is not a number")))?;
        out.insert(name.trim().to_string(), value);
    }
    Ok(out)
}

/// Parses `lo:hi,lo:hi` into one pair per dimension.
fn parse_domain(src: &str) -> Result<Vec<[f64; 2]>, ConfigError> {
    let mut out = Vec::new();
    for part in src.split(',') {
        let Some((lo, hi)) = part.split_once(':') else {
            return Err(flag(format!("--domain expects lo:hi per axis, got `{part}`")));
        };
        let lo: f64 = lo
            .trim()
            .parse()
            .map_err(|_| flag(format!("--domain: `{lo}` is not a number")))?;
        let hi: f64 = hi
            .trim()
            .parse()
            .map_err(|_| flag(format!("--domain: `{hi}` is not a number")))?;
        out.push([lo, hi]);
    }
    Ok(out)
}

fn parse_divisions(src: &str) -> Result<Vec<u32>, ConfigError> {
    src.split(',')
        .map(|part| {
            part.trim()
                .parse()
                .map_err(|_| flag(format!("--divisions: `{part}` is not a cell count")))
        })
        .collect()
}

/// Resolves defaults, file, and flags into a runnable configuration.
pub fn resolve(args: &AnalyzeArgs) -> Result<Resolved, ConfigError> {
    let file = match &args.config {
        Some(path) => load_file(path)?,
        None => ConfigFile::default(),
    };
    if let Some(v) = file.version {
        if v != CONFIG_VERSION {
            return Err(invalid(format!(
                "config version {v} is not supported; this build reads version {CONFIG_VERSION}"
            )));
        }
    }

    let system = resolve_system(args, file.system.clone())?;
    let field = build_field(&system)?;

    let domain = match &args.domain {
        Some(src) => parse_domain(src)?,
        None => file.domain.clone().ok_or_else(|| invalid("no domain given"))?,
    };
    if domain.is_empty() {
        return Err(invalid("domain has no axes"));
    }
    for [lo, hi] in &domain {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid(format!("domain axis [{lo}, {hi}] is not a proper interval")));
        }
    }
    if field.dim != domain.len() {
        return Err(invalid(format!(
            "system has {} component(s) but the domain has {} axis/axes",
            field.dim,
            domain.len()
        )));
    }

    let divisions = resolve_divisions(args, &file, domain.len())?;
    if divisions.len() != domain.len() {
        return Err(invalid(format!(
            "{} division count(s) for {} domain axis/axes",
            divisions.len(),
            domain.len()
        )));
    }

    let strategy = resolve_strategy(args, file.strategy)?;
    let integrator = resolve_integrator(args, file.integrator.unwrap_or_default())?;

    let collar = args.collar.or(file.collar).unwrap_or(2);
    if collar < 1 {
        return Err(invalid("collar must be at least 1"));
    }

    let echo = ConfigEcho {
        system,
        domain: domain.clone(),
        divisions: divisions.clone(),
        strategy,
        integrator,
        collar,
        run_verify: args.verify || file.run_verify.unwrap_or(false),
        run_index: args.index || file.run_index.unwrap_or(false),
        cell_lists: file.cell_lists.unwrap_or(true),
    };

    let domain_box: IvBox = domain.iter().map(|&[lo, hi]| Interval::new(lo, hi)).collect();
    let grid = Grid::new(domain_box, divisions)
        .map_err(|e| invalid(format!("grid construction failed: {e}")))?;

    let workers = resolve_workers(args)?;

    let out_dir = args
        .out_dir
        .clone()
        .or(file.out_dir)
        .unwrap_or_else(|| PathBuf::from("out"));
    let outputs = file.outputs.unwrap_or_default();
    let report_path = outputs.report.unwrap_or_else(|| out_dir.join("report.json"));
    let dot_path = outputs.dot.unwrap_or_else(|| out_dir.join("morse.dot"));
    let svg_path = outputs.svg.unwrap_or_else(|| out_dir.join("morse.svg"));
    let cache_path = out_dir.join("map.cache");

    Ok(Resolved {
        echo,
        field,
        grid,
        cache: file.cache.unwrap_or(true),
        workers,
        report_path,
        dot_path,
        svg_path,
        cache_path,
    })
}

fn load_file(path: &Path) -> Result<ConfigFile, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|err| ConfigError::Io {
        path: path.to_path_buf(),
        err,
    })?;
    serde_json::from_str(&text).map_err(|err| ConfigError::Parse {
        path: path.to_path_buf(),
        err,
    })
}

fn resolve_system(args: &AnalyzeArgs, file: Option<SystemSpec>) -> Result<SystemSpec, ConfigError> {
    let mut system = file.unwrap_or_default();
    if !args.exprs.is_empty() {
        system.expressions = args.exprs.clone();
        system.builtin = None;
    } else if let Some(name) = &args.system {
        system.builtin = Some(name.clone());
        system.expressions.clear();
    }
    system.params.extend(parse_params(&args.params)?);
    match (&system.builtin, system.expressions.is_empty()) {
        (Some(_), false) => Err(invalid("give either a builtin system or expressions, not both")),
        (None, true) => Err(invalid("no system given; use --system, --expr, or a config file")),
        _ => Ok(system),
    }
}

fn build_field(system: &SystemSpec) -> Result<VectorField, ConfigError> {
    let result = match &system.builtin {
        Some(name) => vfield::builtin(name, &system.params),
        None => {
            let sources: Vec<&str> = system.expressions.iter().map(String::as_str).collect();
            VectorField::from_sources(&sources, system.params.clone())
        }
    };
    result.map_err(|e| invalid(format!("system definition rejected: {e}")))
}

fn resolve_divisions(
    args: &AnalyzeArgs,
    file: &ConfigFile,
    dim: usize,
) -> Result<Vec<u32>, ConfigError> {
    let depth = args.depth.or(file.depth);
    let divisions = match &args.divisions {
        Some(src) => Some(parse_divisions(src)?),
        None => file.divisions.clone(),
    };
    match (depth, divisions) {
        (Some(_), Some(_)) => Err(invalid("depth and divisions are alternatives; give one")),
        (Some(n), None) => {
            if n > 24 {
                return Err(invalid(format!("depth {n} would exceed 2^24 cells per axis")));
            }
            Ok(vec![1u32 << n; dim])
        }
        (None, Some(divs)) => {
            if divs.iter().any(|&k| k == 0) {
                return Err(invalid("divisions must be positive"));
            }
            Ok(divs)
        }
        (None, None) => Ok(vec![1u32 << 8; dim]),
    }
}

fn resolve_strategy(
    args: &AnalyzeArgs,
    file: Option<StrategySpec>,
) -> Result<StrategySpec, ConfigError> {
    let kind = args.strategy.as_deref().or(match file {
        Some(StrategySpec::Fixed { .. }) => Some("fixed"),
        Some(StrategySpec::Adaptive { .. }) => Some("adaptive"),
        None => None,
    });
    let spec = match kind.unwrap_or("adaptive") {
        "fixed" => {
            if args.d.is_some() || args.delta.is_some() {
                return Err(flag("--D and --delta apply to the adaptive strategy"));
            }
            let file_h = match file {
                Some(StrategySpec::Fixed { h }) => Some(h),
                _ => None,
            };
            let h = args
                .h
                .or(file_h)
                .ok_or_else(|| invalid("fixed strategy needs a step time; give --h"))?;
            StrategySpec::Fixed { h }
        }
        "adaptive" => {
            if args.h.is_some() {
                return Err(flag("--h applies to the fixed strategy"));
            }
            let (file_d, file_delta) = match file {
                Some(StrategySpec::Adaptive { d, delta }) => (Some(d), Some(delta)),
                _ => (None, None),
            };
            StrategySpec::Adaptive {
                d: args.d.or(file_d).unwrap_or(4.0),
                delta: args.delta.or(file_delta).unwrap_or(0.1),
            }
        }
        other => return Err(flag(format!("unknown strategy `{other}`"))),
    };
    match spec {
        StrategySpec::Fixed { h } if !(h.is_finite() && h > 0.0) => {
            Err(invalid("step time h must be positive"))
        }
        StrategySpec::Adaptive { d, delta }
            if !(d.is_finite() && d > 0.0 && delta.is_finite() && delta > 0.0) =>
        {
            Err(invalid("D and delta must be positive"))
        }
        spec => Ok(spec),
    }
}

fn resolve_integrator(
    args: &AnalyzeArgs,
    file: IntegratorFile,
) -> Result<IntegratorSpec, ConfigError> {
    let defaults = IntegratorConfig::default();
    let spec = IntegratorSpec {
        order: args.order.or(file.order).unwrap_or(defaults.taylor_order),
        max_substeps: file.max_substeps.unwrap_or(defaults.max_substeps),
        inflation: file.inflation.unwrap_or(defaults.inflation),
        max_picard_iters: file.max_picard_iters.unwrap_or(defaults.max_picard_iters),
    };
    if !(1..=5).contains(&spec.order) {
        return Err(invalid(format!("integrator order {} is outside 1..=5", spec.order)));
    }
    if !(spec.inflation.is_finite() && spec.inflation > 1.0) {
        return Err(invalid("integrator inflation must exceed 1"));
    }
    if spec.max_substeps == 0 || spec.max_picard_iters == 0 {
        return Err(invalid("integrator budgets must be positive"));
    }
    Ok(spec)
}

/// Worker count: the flag wins, the `MORSESCOPE_WORKERS` variable is the
/// fallback, and 0 leaves the thread pool at its default size.
fn resolve_workers(args: &AnalyzeArgs) -> Result<usize, ConfigError> {
    if let Some(n) = args.workers {
        return Ok(n);
    }
    match std::env::var("MORSESCOPE_WORKERS") {
        Ok(v) => v
            .parse()
            .map_err(|_| invalid(format!("MORSESCOPE_WORKERS=`{v}` is not a worker count"))),
        Err(_) => Ok(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bare_args() -> AnalyzeArgs {
        AnalyzeArgs {
            config: None,
            system: None,
            params: vec![],
            exprs: vec![],
            domain: None,
            depth: None,
            divisions: None,
            strategy: None,
            h: None,
            d: None,
            delta: None,
            order: None,
            collar: None,
            verify: false,
            index: false,
            out_dir: None,
            workers: None,
        }
    }

    #[test]
    fn defaults_fill_in_around_flags() {
        let mut args = bare_args();
        args.system = Some("two_cycles".into());
        args.params = vec!["mu=2".into()];
        args.domain = Some("-3:3,-3:3".into());
        let r = resolve(&args).unwrap();
        assert_eq!(r.echo.divisions, vec![256, 256]);
        assert_eq!(r.echo.strategy, StrategySpec::Adaptive { d: 4.0, delta: 0.1 });
        assert_eq!(r.echo.collar, 2);
        assert_eq!(r.echo.integrator.order, 3);
        assert!(r.echo.cell_lists);
        assert_eq!(r.grid.n_cells(), 256 * 256);
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(
            &path,
            r#"{
                "system": {"builtin": "two_cycles", "params": {"mu": 1.5}},
                "domain": [[-3, 3], [-3, 3]],
                "depth": 5,
                "strategy": {"fixed": {"h": 0.002}},
                "collar": 3
            }"#,
        )
        .unwrap();
        let mut args = bare_args();
        args.config = Some(path);
        args.params = vec!["mu=2".into()];
        args.depth = Some(4);
        let r = resolve(&args).unwrap();
        assert_eq!(r.echo.system.params["mu"], 2.0);
        assert_eq!(r.echo.divisions, vec![16, 16]);
        assert_eq!(r.echo.strategy, StrategySpec::Fixed { h: 0.002 });
        assert_eq!(r.echo.collar, 3);
    }

    #[test]
    fn rejections_cover_the_usual_mistakes() {
        let cases: Vec<(&str, AnalyzeArgs)> = vec![
            ("missing domain", {
                let mut a = bare_args();
                a.system = Some("circle_demo".into());
                a
            }),
            ("missing system", {
                let mut a = bare_args();
                a.domain = Some("-1:1,-1:1".into());
                a
            }),
            ("bad h", {
                let mut a = bare_args();
                a.system = Some("circle_demo".into());
                a.domain = Some("-1:1,-1:1".into());
                a.strategy = Some("fixed".into());
                a
            }),
            ("h on adaptive", {
                let mut a = bare_args();
                a.system = Some("circle_demo".into());
                a.domain = Some("-1:1,-1:1".into());
                a.h = Some(0.1);
                a
            }),
            ("dim mismatch", {
                let mut a = bare_args();
                a.system = Some("circle_demo".into());
                a.domain = Some("-1:1".into());
                a
            }),
            ("unknown builtin", {
                let mut a = bare_args();
                a.system = Some("lorenz_96".into());
                a.domain = Some("-1:1".into());
                a
            }),
        ];
        for (label, args) in cases {
            assert!(resolve(&args).is_err(), "{label} should be rejected");
        }
    }

    #[test]
    fn unknown_file_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"domian": [[-1, 1]]}"#).unwrap();
        let mut args = bare_args();
        args.config = Some(path);
        args.system = Some("circle_demo".into());
        let err = resolve(&args).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { .. }));
    }

    #[test]
    fn expressions_make_a_field() {
        let mut args = bare_args();
        args.exprs = vec!["-x2".into(), "x1".into()];
        args.domain = Some("-1:1,-1:1".into());
        let r = resolve(&args).unwrap();
        assert_eq!(r.field.dim, 2);
        assert!(r.echo.system.builtin.is_none());
    }
}
