//! Vector fields as symbolic expressions.
//!
//! A field component is an [`Expr`] over coordinates `x1..xd`, named
//! parameters, and the functions `sin`, `cos`, `sqrt`, `abs`, `sign`.
//! Expressions
//! support exact symbolic differentiation (the workhorse behind validated
//! Taylor coefficients), pointwise evaluation for oracles, and rigorous
//! interval evaluation. Hot loops evaluate through [`tape::Tape`], a
//! flattened, deduplicated instruction form.

use std::collections::BTreeMap;

use crate::interval::{Interval, IntervalError, IvBox};

pub mod parse;
pub mod tape;

pub use parse::parse_expr;

/// Expression tree. `Var(i)` is the zero-based coordinate written `x{i+1}`
/// in the surface syntax. `Pow` exponents are nonnegative integer literals
/// by construction.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Param(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Sqrt(Box<Expr>),
    Abs(Box<Expr>),
    /// Sign function with `sign(0) = 0`; also produced by differentiating
    /// `abs`.
    Sign(Box<Expr>),
}

/// Errors from parsing, binding, or looking up built-in systems.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FieldError {
    /// Malformed source text; `pos` is a byte offset into the input.
    Syntax { pos: usize, msg: String },
    /// Identifier that is neither a coordinate of the field's dimension nor
    /// a bound parameter. Raised when an expression is bound into a
    /// [`VectorField`], not during evaluation.
    UnknownIdentifier { name: String },
    /// No built-in system with this name.
    UnknownSystem { name: String },
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FieldError::Syntax { pos, msg } => write!(f, "syntax error at byte {pos}: {msg}"),
            FieldError::UnknownIdentifier { name } => write!(f, "unknown identifier `{name}`"),
            FieldError::UnknownSystem { name } => write!(f, "unknown built-in system `{name}`"),
        }
    }
}

impl std::error::Error for FieldError {}

impl Expr {
    /// Plain `f64` evaluation with IEEE semantics (division by zero gives
    /// an infinity). Not validated; this exists for sampling oracles and
    /// reference integration, never for certification.
    pub fn eval_real(&self, x: &[f64], params: &BTreeMap<String, f64>) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Param(name) => params[name.as_str()],
            Expr::Neg(e) => -e.eval_real(x, params),
            Expr::Add(a, b) => a.eval_real(x, params) + b.eval_real(x, params),
            Expr::Sub(a, b) => a.eval_real(x, params) - b.eval_real(x, params),
            Expr::Mul(a, b) => a.eval_real(x, params) * b.eval_real(x, params),
            Expr::Div(a, b) => a.eval_real(x, params) / b.eval_real(x, params),
            Expr::Pow(e, n) => e.eval_real(x, params).powi(*n as i32),
            Expr::Sin(e) => e.eval_real(x, params).sin(),
            Expr::Cos(e) => e.eval_real(x, params).cos(),
            Expr::Sqrt(e) => e.eval_real(x, params).sqrt(),
            Expr::Abs(e) => e.eval_real(x, params).abs(),
            Expr::Sign(e) => {
                let v = e.eval_real(x, params);
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Rigorous interval evaluation: the result contains `eval_real` for
    /// every point of the box.
    pub fn eval_interval(
        &self,
        x: &IvBox,
        params: &BTreeMap<String, f64>,
    ) -> Result<Interval, IntervalError> {
        Ok(match self {
            Expr::Const(c) => Interval::point(*c),
            Expr::Var(i) => x[*i],
            Expr::Param(name) => Interval::point(params[name.as_str()]),
            Expr::Neg(e) => e.eval_interval(x, params)?.neg(),
            Expr::Add(a, b) => a.eval_interval(x, params)?.add(&b.eval_interval(x, params)?),
            Expr::Sub(a, b) => a.eval_interval(x, params)?.sub(&b.eval_interval(x, params)?),
            Expr::Mul(a, b) => a.eval_interval(x, params)?.mul(&b.eval_interval(x, params)?),
            Expr::Div(a, b) => a
                .eval_interval(x, params)?
                .div(&b.eval_interval(x, params)?)?,
            Expr::Pow(e, n) => e.eval_interval(x, params)?.pow_int(*n),
            Expr::Sin(e) => e.eval_interval(x, params)?.sin(),
            Expr::Cos(e) => e.eval_interval(x, params)?.cos(),
            Expr::Sqrt(e) => e.eval_interval(x, params)?.sqrt()?,
            Expr::Abs(e) => e.eval_interval(x, params)?.abs(),
            Expr::Sign(e) => {
                let v = e.eval_interval(x, params)?;
                if v.lo > 0.0 {
                    Interval::ONE
                } else if v.hi < 0.0 {
                    Interval::new(-1.0, -1.0)
                } else if v.lo == 0.0 && v.hi == 0.0 {
                    Interval::ZERO
                } else {
                    Interval::new(-1.0, 1.0)
                }
            }
        })
    }

    /// Exact partial derivative with respect to coordinate `i`, simplified.
    pub fn diff(&self, i: usize) -> Expr {
        let d = match self {
            Expr::Const(_) | Expr::Param(_) => Expr::Const(0.0),
            Expr::Var(j) => Expr::Const(if *j == i { 1.0 } else { 0.0 }),
            Expr::Neg(e) => Expr::Neg(Box::new(e.diff(i))),
            Expr::Add(a, b) => Expr::Add(Box::new(a.diff(i)), Box::new(b.diff(i))),
            Expr::Sub(a, b) => Expr::Sub(Box::new(a.diff(i)), Box::new(b.diff(i))),
            Expr::Mul(a, b) => Expr::Add(
                Box::new(Expr::Mul(Box::new(a.diff(i)), b.clone())),
                Box::new(Expr::Mul(a.clone(), Box::new(b.diff(i)))),
            ),
            Expr::Div(a, b) => Expr::Div(
                Box::new(Expr::Sub(
                    Box::new(Expr::Mul(Box::new(a.diff(i)), b.clone())),
                    Box::new(Expr::Mul(a.clone(), Box::new(b.diff(i)))),
                )),
                Box::new(Expr::Pow(b.clone(), 2)),
            ),
            Expr::Pow(e, n) => match n {
                0 => Expr::Const(0.0),
                _ => Expr::Mul(
                    Box::new(Expr::Mul(
                        Box::new(Expr::Const(*n as f64)),
                        Box::new(Expr::Pow(e.clone(), n - 1)),
                    )),
                    Box::new(e.diff(i)),
                ),
            },
            Expr::Sin(e) => Expr::Mul(Box::new(Expr::Cos(e.clone())), Box::new(e.diff(i))),
            Expr::Cos(e) => Expr::Neg(Box::new(Expr::Mul(
                Box::new(Expr::Sin(e.clone())),
                Box::new(e.diff(i)),
            ))),
            Expr::Sqrt(e) => Expr::Div(
                Box::new(e.diff(i)),
                Box::new(Expr::Mul(
                    Box::new(Expr::Const(2.0)),
                    Box::new(Expr::Sqrt(e.clone())),
                )),
            ),
            Expr::Abs(e) => Expr::Mul(Box::new(Expr::Sign(e.clone())), Box::new(e.diff(i))),
            // sign is piecewise constant; its derivative is zero wherever it
            // exists, and enclosure soundness is owned by the abs rule.
            Expr::Sign(_) => Expr::Const(0.0),
        };
        simplify(d)
    }

    /// Largest zero-based coordinate index mentioned, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) | Expr::Param(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(e)
            | Expr::Pow(e, _)
            | Expr::Sin(e)
            | Expr::Cos(e)
            | Expr::Sqrt(e)
            | Expr::Abs(e)
            | Expr::Sign(e) => e.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
        }
    }

    fn visit_params(&self, f: &mut impl FnMut(&str)) {
        match self {
            Expr::Const(_) | Expr::Var(_) => {}
            Expr::Param(name) => f(name),
            Expr::Neg(e)
            | Expr::Pow(e, _)
            | Expr::Sin(e)
            | Expr::Cos(e)
            | Expr::Sqrt(e)
            | Expr::Abs(e)
            | Expr::Sign(e) => e.visit_params(f),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.visit_params(f);
                b.visit_params(f);
            }
        }
    }
}

/// Is this node exactly the constant `v`?
fn is_const(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Const(c) if *c == v)
}

/// Folds constants where the fold is exactly representable and strips 0/1
/// identities. Nothing cleverer: rewrites beyond these would change
/// rounding behaviour or expression meaning at edge cases.
pub fn simplify(e: Expr) -> Expr {
    // Exactness checks mirror interval.rs: fold a op b only when the
    // round-to-nearest result has zero residual, so the simplified tree
    // denotes the same real function.
    fn exact_add(a: f64, b: f64) -> Option<f64> {
        let s = a + b;
        if !s.is_finite() {
            return None;
        }
        let bv = s - a;
        if (a - (s - bv)) + (b - bv) == 0.0 {
            Some(s)
        } else {
            None
        }
    }
    fn exact_mul(a: f64, b: f64) -> Option<f64> {
        let p = a * b;
        if !p.is_finite() {
            return None;
        }
        if a.mul_add(b, -p) == 0.0 {
            Some(p)
        } else {
            None
        }
    }
    match e {
        Expr::Neg(e) => {
            let e = simplify(*e);
            match e {
                Expr::Const(c) => Expr::Const(-c),
                Expr::Neg(inner) => *inner,
                e => Expr::Neg(Box::new(e)),
            }
        }
        Expr::Add(a, b) => {
            let a = simplify(*a);
            let b = simplify(*b);
            if is_const(&a, 0.0) {
                return b;
            }
            if is_const(&b, 0.0) {
                return a;
            }
            if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
                if let Some(s) = exact_add(*x, *y) {
                    return Expr::Const(s);
                }
            }
            Expr::Add(Box::new(a), Box::new(b))
        }
        Expr::Sub(a, b) => {
            let a = simplify(*a);
            let b = simplify(*b);
            if is_const(&b, 0.0) {
                return a;
            }
            if is_const(&a, 0.0) {
                return simplify(Expr::Neg(Box::new(b)));
            }
            if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
                if let Some(s) = exact_add(*x, -*y) {
                    return Expr::Const(s);
                }
            }
            Expr::Sub(Box::new(a), Box::new(b))
        }
        Expr::Mul(a, b) => {
            let a = simplify(*a);
            let b = simplify(*b);
            if is_const(&a, 0.0) || is_const(&b, 0.0) {
                return Expr::Const(0.0);
            }
            if is_const(&a, 1.0) {
                return b;
            }
            if is_const(&b, 1.0) {
                return a;
            }
            if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
                if let Some(p) = exact_mul(*x, *y) {
                    return Expr::Const(p);
                }
            }
            Expr::Mul(Box::new(a), Box::new(b))
        }
        Expr::Div(a, b) => {
            let a = simplify(*a);
            let b = simplify(*b);
            if is_const(&b, 1.0) {
                return a;
            }
            if is_const(&a, 0.0) && !is_const(&b, 0.0) {
                return Expr::Const(0.0);
            }
            Expr::Div(Box::new(a), Box::new(b))
        }
        Expr::Pow(e, n) => {
            let e = simplify(*e);
            match n {
                0 => Expr::Const(1.0),
                1 => e,
                _ => Expr::Pow(Box::new(e), n),
            }
        }
        Expr::Sin(e) => Expr::Sin(Box::new(simplify(*e))),
        Expr::Cos(e) => Expr::Cos(Box::new(simplify(*e))),
        Expr::Sqrt(e) => Expr::Sqrt(Box::new(simplify(*e))),
        Expr::Abs(e) => Expr::Abs(Box::new(simplify(*e))),
        Expr::Sign(e) => Expr::Sign(Box::new(simplify(*e))),
        leaf => leaf,
    }
}

// Pretty-printing with minimal parentheses. Binding strengths, loosest to
// tightest: additive 1, multiplicative 2, unary minus 3, power 4.
fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Div(..) => 2,
        Expr::Neg(_) => 3,
        Expr::Pow(..) => 4,
        Expr::Const(c) if *c < 0.0 => 3,
        _ => 5,
    }
}

impl std::fmt::Display for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fn write_child(
            f: &mut std::fmt::Formatter<'_>,
            child: &Expr,
            min_prec: u8,
        ) -> std::fmt::Result {
            if prec(child) < min_prec {
                write!(f, "({child})")
            } else {
                write!(f, "{child}")
            }
        }
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Param(name) => write!(f, "{name}"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                write_child(f, e, 3)
            }
            Expr::Add(a, b) => {
                write_child(f, a, 1)?;
                write!(f, " + ")?;
                write_child(f, b, 2)
            }
            Expr::Sub(a, b) => {
                write_child(f, a, 1)?;
                write!(f, " - ")?;
                write_child(f, b, 2)
            }
            Expr::Mul(a, b) => {
                write_child(f, a, 2)?;
                write!(f, "*")?;
                write_child(f, b, 3)
            }
            Expr::Div(a, b) => {
                write_child(f, a, 2)?;
                write!(f, "/")?;
                write_child(f, b, 3)
            }
            Expr::Pow(e, n) => {
                // Power binds tighter than unary minus, so a negated or
                // compound base always needs parentheses.
                if prec(e) < 5 {
                    write!(f, "({e})^{n}")
                } else {
                    write!(f, "{e}^{n}")
                }
            }
            Expr::Sin(e) => write!(f, "sin({e})"),
            Expr::Cos(e) => write!(f, "cos({e})"),
            Expr::Sqrt(e) => write!(f, "sqrt({e})"),
            Expr::Abs(e) => write!(f, "abs({e})"),
            Expr::Sign(e) => write!(f, "sign({e})"),
        }
    }
}

/// A bound vector field: `d` component expressions whose coordinates all
/// lie in `x1..xd` and whose parameters all have values.
#[derive(Clone, Debug)]
pub struct VectorField {
    pub dim: usize,
    pub components: Vec<Expr>,
    pub params: BTreeMap<String, f64>,
    /// Pretty-printed component sources; identifies the field in cache
    /// headers and reports.
    pub source: Vec<String>,
}

impl VectorField {
    /// Binds component expressions to a dimension and parameter values.
    /// Any coordinate past `xd` or parameter without a value is an
    /// [`FieldError::UnknownIdentifier`].
    pub fn new(
        components: Vec<Expr>,
        params: BTreeMap<String, f64>,
    ) -> Result<VectorField, FieldError> {
        let dim = components.len();
        for comp in &components {
            if let Some(v) = comp.max_var() {
                if v >= dim {
                    return Err(FieldError::UnknownIdentifier {
                        name: format!("x{}", v + 1),
                    });
                }
            }
            let mut missing = None;
            comp.visit_params(&mut |name| {
                if missing.is_none() && !params.contains_key(name) {
                    missing = Some(name.to_string());
                }
            });
            if let Some(name) = missing {
                return Err(FieldError::UnknownIdentifier { name });
            }
        }
        let source = components.iter().map(|c| c.to_string()).collect();
        Ok(VectorField {
            dim,
            components,
            params,
            source,
        })
    }

    /// Parses one source string per component and binds them.
    pub fn from_sources(
        sources: &[&str],
        params: BTreeMap<String, f64>,
    ) -> Result<VectorField, FieldError> {
        let components = sources
            .iter()
            .map(|s| parse_expr(s))
            .collect::<Result<Vec<_>, _>>()?;
        VectorField::new(components, params)
    }

    pub fn eval_real(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval_real(x, &self.params);
        }
    }

    pub fn eval_interval(&self, b: &IvBox) -> Result<IvBox, IntervalError> {
        self.components
            .iter()
            .map(|c| c.eval_interval(b, &self.params))
            .collect()
    }
}

/// Built-in systems.
///
/// * `two_cycles` (parameter `mu`): planar field with an equilibrium at the
///   origin and limit cycles on the circles of radius 1 and `sqrt(mu)`;
///   trajectories outside the outer cycle escape to infinity in finite
///   time, which exercises integrator failure handling.
/// * `circle_demo`: planar field with an attracting unit circle.
/// * `linear` (parameters `l1..ld`): decoupled `xi' = li*xi`, closed form
///   `xi(t) = xi(0)*exp(li*t)` for oracle comparisons.
pub fn builtin(name: &str, params: &BTreeMap<String, f64>) -> Result<VectorField, FieldError> {
    match name {
        "two_cycles" => VectorField::from_sources(
            &[
                "-x2 + x1*(x1^2 + x2^2 - mu)*(x1^2 + x2^2 - 1)",
                "x1 + x2*(x1^2 + x2^2 - mu)*(x1^2 + x2^2 - 1)",
            ],
            params.clone(),
        ),
        "circle_demo" => VectorField::from_sources(
            &[
                "-x2 + x1*(1 - x1^2 - x2^2)",
                "x1 + x2*(1 - x1^2 - x2^2)",
            ],
            params.clone(),
        ),
        "linear" => {
            let mut d = 0;
            while params.contains_key(&format!("l{}", d + 1)) {
                d += 1;
            }
            if d == 0 {
                return Err(FieldError::UnknownIdentifier {
                    name: "l1".to_string(),
                });
            }
            let sources: Vec<String> = (1..=d).map(|i| format!("l{i}*x{i}")).collect();
            let refs: Vec<&str> = sources.iter().map(|s| s.as_str()).collect();
            VectorField::from_sources(&refs, params.clone())
        }
        _ => Err(FieldError::UnknownSystem {
            name: name.to_string(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn two_cycles_known_points() {
        let f = builtin("two_cycles", &params(&[("mu", 2.0)])).unwrap();
        let mut v = [0.0; 2];
        // On the unit cycle the radial factor vanishes: pure rotation.
        f.eval_real(&[1.0, 0.0], &mut v);
        assert_eq!(v, [0.0, 1.0]);
        // Same on the outer cycle at radius sqrt(2).
        f.eval_real(&[2f64.sqrt(), 0.0], &mut v);
        assert!(v[0].abs() < 1e-12 && (v[1] - 2f64.sqrt()).abs() < 1e-12);
        // Equilibrium at the origin.
        f.eval_real(&[0.0, 0.0], &mut v);
        assert_eq!(v, [0.0, 0.0]);
        // Strong outward flow at the domain corner.
        f.eval_real(&[3.0, 3.0], &mut v);
        assert!(v[0] > 800.0 && v[1] > 800.0);
    }

    #[test]
    fn binding_rejects_unknowns() {
        let e = parse_expr("x3 + 1").unwrap();
        let err = VectorField::new(vec![e.clone(), e], BTreeMap::new()).unwrap_err();
        assert_eq!(
            err,
            FieldError::UnknownIdentifier {
                name: "x3".to_string()
            }
        );
        let e = parse_expr("mu*x1").unwrap();
        let err = VectorField::new(vec![e], BTreeMap::new()).unwrap_err();
        assert_eq!(
            err,
            FieldError::UnknownIdentifier {
                name: "mu".to_string()
            }
        );
        assert_eq!(
            builtin("lorenz_96", &BTreeMap::new()).unwrap_err(),
            FieldError::UnknownSystem {
                name: "lorenz_96".to_string()
            }
        );
    }

    #[test]
    fn diff_basics() {
        let e = parse_expr("x1^3").unwrap();
        let d = e.diff(0);
        assert_eq!(d.to_string(), "3.0*x1^2");
        // d/dx of abs is sign.
        let e = parse_expr("abs(x1)").unwrap();
        assert_eq!(e.diff(0).to_string(), "sign(x1)");
        // Chain rule through sin.
        let e = parse_expr("sin(x1^2)").unwrap();
        assert_eq!(e.diff(0).to_string(), "cos(x1^2)*(2.0*x1)");
    }

    #[test]
    fn simplify_folds_and_strips() {
        let cases = [
            ("x1 + 0", "x1"),
            ("0 + x1", "x1"),
            ("1*x1", "x1"),
            ("x1*0", "0.0"),
            ("x1^0", "1.0"),
            ("x1^1", "x1"),
            ("0 - x1", "-x1"),
            ("2*4", "8.0"),
        ];
        for (src, want) in cases {
            let e = simplify(parse_expr(src).unwrap());
            assert_eq!(e.to_string(), want, "simplify({src})");
        }
        // Inexact constant folds are refused: 0.1 + 0.2 is not representable.
        let e = simplify(parse_expr("0.1 + 0.2").unwrap());
        assert!(matches!(e, Expr::Add(..)), "kept unfolded, got {e}");
    }

    /// Central finite differences as an independent check on symbolic diff.
    fn fd_gradient(e: &Expr, x: &[f64], i: usize, p: &BTreeMap<String, f64>) -> f64 {
        let h = 1e-5 * (1.0 + x[i].abs());
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        (e.eval_real(&xp, p) - e.eval_real(&xm, p)) / (2.0 * h)
    }

    #[test]
    fn diff_matches_finite_differences() {
        let p = params(&[("mu", 2.0), ("l1", -0.7), ("l2", 1.3)]);
        let corpus = [
            "-x2 + x1*(x1^2 + x2^2 - mu)*(x1^2 + x2^2 - 1)",
            "x1 + x2*(x1^2 + x2^2 - mu)*(x1^2 + x2^2 - 1)",
            "-x2 + x1*(1 - x1^2 - x2^2)",
            "l1*x1",
            "l2*x2",
            "sin(x1)*cos(x2) + sqrt(x1^2 + 4)",
            "x1/(x2^2 + 1)",
            "abs(x1 - 3)*x2",
            "x1^5 - 2*x1^3*x2 + x2^4",
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for src in corpus {
            let e = parse_expr(src).unwrap();
            for _ in 0..100 {
                // Stay away from the abs kink at x1 = 3 and from 0/0 spots.
                let x = [
                    rng.random_range(0.5..2.5f64),
                    rng.random_range(-2.5..-0.5f64),
                ];
                for i in 0..2 {
                    if e.max_var().map_or(true, |m| m < i) {
                        continue;
                    }
                    let sym = e.diff(i).eval_real(&x, &p);
                    let fd = fd_gradient(&e, &x, i, &p);
                    let denom = sym.abs().max(fd.abs()).max(1e-9);
                    assert!(
                        (sym - fd).abs() / denom < 1e-6,
                        "{src} d/dx{} at {x:?}: sym {sym} vs fd {fd}",
                        i + 1
                    );
                }
            }
        }
    }

    #[test]
    fn interval_eval_contains_point_eval() {
        let p = params(&[("mu", 2.0)]);
        let exprs: Vec<Expr> = [
            "-x2 + x1*(x1^2 + x2^2 - mu)*(x1^2 + x2^2 - 1)",
            "sin(x1)*cos(x2)",
            "sqrt(x1^2 + x2^2 + 1)",
            "abs(x1)*x2 - x1/(x2^2 + 3)",
        ]
        .iter()
        .map(|s| parse_expr(s).unwrap())
        .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10_000 {
            let cx = rng.random_range(-3.0..3.0f64);
            let cy = rng.random_range(-3.0..3.0f64);
            let wx = rng.random_range(0.0..0.5f64);
            let wy = rng.random_range(0.0..0.5f64);
            let bx: IvBox = [
                Interval::new(cx - wx, cx + wx),
                Interval::new(cy - wy, cy + wy),
            ]
            .into_iter()
            .collect();
            let e = &exprs[rng.random_range(0..exprs.len())];
            let enc = e.eval_interval(&bx, &p).unwrap();
            for _ in 0..32 {
                let x = [
                    rng.random_range(cx - wx..=cx + wx),
                    rng.random_range(cy - wy..=cy + wy),
                ];
                let v = e.eval_real(&x, &p);
                assert!(enc.contains(v), "{e} at {x:?}: {v} not in {enc}");
            }
        }
    }

    #[test]
    fn print_parse_round_trip() {
        // Fixed corpus: builtins, their Jacobian entries, and assorted
        // grammar corner cases.
        let p = params(&[("mu", 2.0), ("l1", 1.0), ("l2", -1.0)]);
        let mut corpus: Vec<Expr> = Vec::new();
        for (name, pr) in [
            ("two_cycles", &p),
            ("circle_demo", &p),
            ("linear", &p),
        ] {
            let f = builtin(name, pr).unwrap();
            for c in &f.components {
                corpus.push(c.clone());
                for i in 0..f.dim {
                    let di = c.diff(i);
                    for j in 0..f.dim {
                        corpus.push(di.diff(j));
                    }
                    corpus.push(di);
                }
            }
        }
        for src in [
            "-x1^2",
            "(-x1)^2",
            "x1 - (x2 - x1)",
            "x1/(x2*x1)",
            "2.5e-3*x1 + abs(x2)",
            "sqrt(abs(x1))",
            "sin(cos(x2))",
            "-(x1 + x2)",
            "x1 - -x2",
            "(x1 + x2)^4",
        ] {
            corpus.push(parse_expr(src).unwrap());
        }
        assert!(corpus.len() >= 50, "corpus too small: {}", corpus.len());
        for e in corpus {
            let printed = e.to_string();
            let reparsed = parse_expr(&printed)
                .unwrap_or_else(|err| panic!("reparse of `{printed}` failed: {err}"));
            assert_eq!(reparsed, e, "round trip changed `{printed}`");
        }
    }
}
