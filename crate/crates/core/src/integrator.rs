//! Validated flow enclosures.
//!
//! [`Integrator`] computes rigorous outer enclosures of the flow
//! `φ(t, x)` of an autonomous ODE from an interval initial box. Each
//! accepted time step runs two stages:
//!
//! 1. A first-order rough enclosure: a box `B` verified to satisfy
//!    `x0 + [0,h]·f(B) ⊆ B`, which traps every solution starting in `x0`
//!    for the whole step (Picard iteration with geometric inflation).
//! 2. An interval Taylor evaluation of order `p` whose Lagrange remainder
//!    coefficient is evaluated on `B`. Evaluated at the exact step width
//!    it encloses the step endpoint; evaluated over `[0, h]` it encloses
//!    the swept tube of the step.
//!
//! Taylor coefficients are precomputed symbolically, `c_0 = x` and
//! `c_{k+1} = (Σ_j ∂c_k/∂x_j · f_j) / (k+1)`, then compiled to shared
//! tapes so the per-step hot path touches no expression trees. The
//! division by `k+1` stays symbolic: interval evaluation rounds it
//! outward, while folding `1/3` into a float constant would not be an
//! enclosure.
//!
//! Every accepted step width is `total · 2^-k` with `k ≤ 52`, so step
//! widths and their running sum are exact in `f64` and the endpoint
//! enclosure really is an enclosure at the requested time, not at a
//! rounded neighbor of it.
//!
//! Failure is a value, not a panic: steps that cannot be validated at any
//! representable width report [`IntegrationError`] and the caller decides
//! what a failed box means.

use crate::interval::{hull_box, Interval, IvBox};
use crate::vfield::tape::Tape;
use crate::vfield::{simplify, Expr, VectorField};

/// Tuning knobs for validated integration.
#[derive(Clone, Copy, Debug)]
pub struct IntegratorConfig {
    /// Taylor polynomial order `p`, in `1..=5`; the remainder uses the
    /// coefficient of order `p + 1`.
    pub taylor_order: usize,
    /// Accepted substeps allowed across one flow query.
    pub max_substeps: usize,
    /// Geometric inflation factor between Picard trials; must exceed 1.
    pub inflation: f64,
    /// Picard trials per candidate step width before halving it.
    pub max_picard_iters: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            taylor_order: 3,
            max_substeps: 10_000,
            inflation: 1.5,
            max_picard_iters: 30,
        }
    }
}

/// Bitwise on `inflation`, since configs are compared to decide whether a
/// cached result was built from identical input.
impl PartialEq for IntegratorConfig {
    fn eq(&self, other: &Self) -> bool {
        self.taylor_order == other.taylor_order
            && self.max_substeps == other.max_substeps
            && self.inflation.to_bits() == other.inflation.to_bits()
            && self.max_picard_iters == other.max_picard_iters
    }
}

/// Why a flow query could not be completed. `t_reached` is the flow time
/// validated before the failure (approximate, for reporting only).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum IntegrationError {
    /// Step widths collapsed to the dyadic floor while validation kept
    /// failing; consistent with finite-time blow-up at or before the
    /// target time.
    BlowupSuspected { t_reached: f64 },
    /// The substep budget ran out before the target time.
    SubstepBudgetExhausted { t_reached: f64 },
    /// The field or a Taylor coefficient could not be bounded on the
    /// current box: an interval escaped to infinity or evaluation hit a
    /// division or square-root domain error.
    UnboundedInterval { t_reached: f64 },
}

impl IntegrationError {
    pub fn t_reached(&self) -> f64 {
        match *self {
            IntegrationError::BlowupSuspected { t_reached }
            | IntegrationError::SubstepBudgetExhausted { t_reached }
            | IntegrationError::UnboundedInterval { t_reached } => t_reached,
        }
    }
}

impl std::fmt::Display for IntegrationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IntegrationError::BlowupSuspected { t_reached } => {
                write!(f, "blow-up suspected after t = {t_reached}")
            }
            IntegrationError::SubstepBudgetExhausted { t_reached } => {
                write!(f, "substep budget exhausted at t = {t_reached}")
            }
            IntegrationError::UnboundedInterval { t_reached } => {
                write!(f, "unbounded interval enclosure at t = {t_reached}")
            }
        }
    }
}

impl std::error::Error for IntegrationError {}

/// A validated flow query result.
#[derive(Clone, Debug)]
pub struct FlowEnclosure {
    /// Encloses `{φ(t, x) : t in the query window, x in the start box}`.
    /// For a degenerate window this is the Taylor endpoint at the exact
    /// query time.
    pub endpoint: IvBox,
    /// Boxes covering consecutive time segments whose union encloses
    /// `{φ(s, x) : s ∈ [0, t.hi], x in the start box}`. Empty unless the
    /// query asked for a tube.
    pub tube: Vec<IvBox>,
    /// Accepted substeps across the whole query.
    pub substeps: usize,
}

enum RoughFailure {
    /// A smaller step width may validate.
    Retry,
    /// No step width can help; the start box itself cannot be bounded.
    Fatal,
}

struct State {
    x: IvBox,
    t_done: f64,
    substeps: usize,
    tube: Vec<IvBox>,
    scratch: Vec<Interval>,
    coeff: Vec<Interval>,
    rem: Vec<Interval>,
    f: Vec<Interval>,
}

/// Validated integrator bound to one vector field and configuration.
/// Immutable after construction and shareable across threads; flow
/// queries carry their own evaluation buffers.
pub struct Integrator {
    dim: usize,
    order: usize,
    config: IntegratorConfig,
    /// Roots: coefficients `c_1..c_p` flattened by order, evaluated on the
    /// tight step-start box.
    coeff_tape: Tape,
    /// Roots: remainder coefficients `c_{p+1}`, evaluated on the rough
    /// enclosure.
    remainder_tape: Tape,
    /// Roots: the field itself, for Picard validation.
    field_tape: Tape,
}

impl Integrator {
    /// Precomputes and compiles the Taylor coefficient tapes.
    ///
    /// Panics if the dimension is zero, `taylor_order` is outside `1..=5`,
    /// or `inflation ≤ 1`.
    pub fn new(field: &VectorField, config: IntegratorConfig) -> Integrator {
        let p = config.taylor_order;
        assert!((1..=5).contains(&p), "supported Taylor orders are 1..=5");
        assert!(config.inflation > 1.0, "inflation factor must exceed 1");
        let d = field.dim;
        assert!(d > 0, "field dimension must be positive");

        let mut layers: Vec<Vec<Expr>> = vec![(0..d).map(Expr::Var).collect()];
        for k in 0..=p {
            let next = layers[k]
                .iter()
                .map(|c| {
                    let mut sum: Option<Expr> = None;
                    for (j, fj) in field.components.iter().enumerate() {
                        let term = Expr::Mul(Box::new(c.diff(j)), Box::new(fj.clone()));
                        sum = Some(match sum {
                            None => term,
                            Some(s) => Expr::Add(Box::new(s), Box::new(term)),
                        });
                    }
                    let sum = sum.expect("dimension checked above");
                    simplify(Expr::Div(
                        Box::new(sum),
                        Box::new(Expr::Const((k + 1) as f64)),
                    ))
                })
                .collect();
            layers.push(next);
        }

        let coeff_exprs: Vec<&Expr> = layers[1..=p].iter().flatten().collect();
        let rem_exprs: Vec<&Expr> = layers[p + 1].iter().collect();
        let field_exprs: Vec<&Expr> = field.components.iter().collect();
        Integrator {
            dim: d,
            order: p,
            config,
            coeff_tape: Tape::compile(&coeff_exprs, &field.params),
            remainder_tape: Tape::compile(&rem_exprs, &field.params),
            field_tape: Tape::compile(&field_exprs, &field.params),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.config
    }

    /// The compiled field, reusable for Picard-free evaluations such as
    /// time-step selection.
    pub fn field_tape(&self) -> &Tape {
        &self.field_tape
    }

    /// Enclosure of `φ(t, x0)` over the time window `t` (a point enclosure
    /// when `t` is degenerate). No tube segments are collected.
    pub fn flow_endpoint(&self, x0: &IvBox, t: Interval) -> Result<FlowEnclosure, IntegrationError> {
        self.flow(x0, t, false)
    }

    /// Like [`Integrator::flow_endpoint`], additionally collecting tube
    /// segments that cover all of `[0, t.hi]`.
    pub fn flow_tube(&self, x0: &IvBox, t: Interval) -> Result<FlowEnclosure, IntegrationError> {
        self.flow(x0, t, true)
    }

    fn flow(
        &self,
        x0: &IvBox,
        t: Interval,
        collect_tube: bool,
    ) -> Result<FlowEnclosure, IntegrationError> {
        assert_eq!(x0.len(), self.dim, "start box dimension mismatch");
        assert!(
            t.lo >= 0.0 && t.hi.is_finite(),
            "flow time must be a bounded nonnegative interval"
        );
        assert!(
            x0.iter().all(|c| !c.is_unbounded()),
            "start box must be bounded"
        );

        let mut st = State {
            x: x0.clone(),
            t_done: 0.0,
            substeps: 0,
            tube: Vec::new(),
            scratch: Vec::new(),
            coeff: vec![Interval::ZERO; self.order * self.dim],
            rem: vec![Interval::ZERO; self.dim],
            f: vec![Interval::ZERO; self.dim],
        };

        self.advance(&mut st, t.lo, collect_tube, None)?;

        // Window duration rounded up, so the swept segments cover at least
        // the requested time window.
        let dur = Interval::point(t.hi).sub(&Interval::point(t.lo)).hi;
        let endpoint = if dur == 0.0 {
            st.x.clone()
        } else {
            let mut hull: Option<IvBox> = None;
            self.advance(&mut st, dur, collect_tube, Some(&mut hull))?;
            hull.expect("a positive window accepts at least one substep")
        };

        Ok(FlowEnclosure {
            endpoint,
            tube: st.tube,
            substeps: st.substeps,
        })
    }

    /// Integrates `st` forward by exactly `total`, halving the candidate
    /// step on validation failure. When `window` is given, every accepted
    /// segment's tube box is hulled into it.
    fn advance(
        &self,
        st: &mut State,
        total: f64,
        collect_tube: bool,
        mut window: Option<&mut Option<IvBox>>,
    ) -> Result<(), IntegrationError> {
        if total == 0.0 {
            return Ok(());
        }
        const QUANTA_BITS: u32 = 52;
        // One quantum is `total · 2^-52`; scaling by a power of two is
        // exact, as is `n_step · quantum` for power-of-two `n_step`.
        let quantum = total * (2f64).powi(-(QUANTA_BITS as i32));
        let mut n_rem: u64 = 1 << QUANTA_BITS;
        let need_seg = collect_tube || window.is_some();

        while n_rem > 0 {
            if st.substeps >= self.config.max_substeps {
                return Err(IntegrationError::SubstepBudgetExhausted { t_reached: st.t_done });
            }
            let mut n_step: u64 = 1 << (63 - n_rem.leading_zeros());
            let (h, endpoint, seg) = loop {
                let h = (n_step as f64) * quantum;
                match self.try_substep(st, h, need_seg) {
                    Ok((endpoint, seg)) => break (h, endpoint, seg),
                    Err(RoughFailure::Fatal) => {
                        return Err(IntegrationError::UnboundedInterval { t_reached: st.t_done });
                    }
                    Err(RoughFailure::Retry) => {
                        n_step >>= 1;
                        if n_step == 0 {
                            return Err(IntegrationError::BlowupSuspected { t_reached: st.t_done });
                        }
                    }
                }
            };
            if let Some(seg) = seg {
                if let Some(hull) = window.as_deref_mut() {
                    *hull = Some(match hull.take() {
                        None => seg.clone(),
                        Some(acc) => hull_box(&acc, &seg),
                    });
                }
                if collect_tube {
                    st.tube.push(seg);
                }
            }
            st.x = endpoint;
            st.t_done += h;
            st.substeps += 1;
            n_rem -= n_step;
        }
        Ok(())
    }

    /// One candidate step: validate a rough enclosure for width `h`, then
    /// evaluate the Taylor form. Returns the endpoint box and, when asked,
    /// the tube box of the step.
    fn try_substep(
        &self,
        st: &mut State,
        h: f64,
        need_seg: bool,
    ) -> Result<(IvBox, Option<IvBox>), RoughFailure> {
        let State {
            x,
            scratch,
            coeff,
            rem,
            f,
            ..
        } = st;
        let b = self.rough_enclosure(x, h, scratch, f)?;

        if self.coeff_tape.eval_interval(x, scratch, coeff).is_err() {
            return Err(RoughFailure::Fatal);
        }
        if coeff.iter().any(Interval::is_unbounded) {
            return Err(RoughFailure::Fatal);
        }
        // A smaller step shrinks the rough enclosure, so remainder trouble
        // is retryable.
        if self.remainder_tape.eval_interval(&b, scratch, rem).is_err() {
            return Err(RoughFailure::Retry);
        }
        if rem.iter().any(Interval::is_unbounded) {
            return Err(RoughFailure::Retry);
        }
        // Picard can validate a wide step by inflating the rough box until
        // the containment goes through, and the remainder evaluated on that
        // box then dwarfs the polynomial part. Such a step is an enclosure
        // but a useless one, and every later substep inherits its width, so
        // it is rejected in favor of a smaller width.
        let hp = h.powi(self.order as i32 + 1);
        for i in 0..self.dim {
            let scale = x[i].width()
                + h * coeff[i].magnitude().hi
                + 1e-15 * (1.0 + x[i].magnitude().hi);
            if hp * rem[i].magnitude().hi > 0.1 * scale {
                return Err(RoughFailure::Retry);
            }
        }

        let endpoint = self.horner(x, coeff, rem, &b, Interval::point(h));
        let seg = if need_seg {
            Some(self.horner(x, coeff, rem, &b, Interval::new(0.0, h)))
        } else {
            None
        };
        Ok((endpoint, seg))
    }

    /// `x + s·(c_1 + s·(… + s·c_{p+1}))` per component, intersected with
    /// the rough enclosure; both factors enclose the same nonempty
    /// trajectory set, so the intersection is one too.
    fn horner(
        &self,
        x: &IvBox,
        coeff: &[Interval],
        rem: &[Interval],
        b: &IvBox,
        s: Interval,
    ) -> IvBox {
        let d = self.dim;
        let mut out = IvBox::with_capacity(d);
        for i in 0..d {
            let mut acc = rem[i];
            for k in (0..self.order).rev() {
                acc = coeff[k * d + i].add(&s.mul(&acc));
            }
            let taylor = x[i].add(&s.mul(&acc));
            out.push(
                taylor
                    .intersect(&b[i])
                    .expect("enclosures of one trajectory set intersect"),
            );
        }
        out
    }

    /// Finds a box `b ⊇ x` with `x + [0,h]·f(b) ⊆ b`; the returned box is
    /// the tightened left-hand side, which inherits the property.
    fn rough_enclosure(
        &self,
        x: &IvBox,
        h: f64,
        scratch: &mut Vec<Interval>,
        f: &mut [Interval],
    ) -> Result<IvBox, RoughFailure> {
        let span = Interval::new(0.0, h);
        let mut b = x.clone();
        for iter in 0..self.config.max_picard_iters {
            if self.field_tape.eval_interval(&b, scratch, f).is_err() {
                // On the first trial the box is the tight step start; a
                // singularity there defeats every step width.
                return Err(if iter == 0 {
                    RoughFailure::Fatal
                } else {
                    RoughFailure::Retry
                });
            }
            let mut contained = true;
            let mut cand = IvBox::with_capacity(self.dim);
            for i in 0..self.dim {
                let c = x[i].add(&span.mul(&f[i]));
                if c.is_unbounded() {
                    return Err(RoughFailure::Retry);
                }
                contained &= b[i].contains_interval(&c);
                cand.push(c);
            }
            if contained {
                return Ok(cand);
            }
            for i in 0..self.dim {
                b[i] = inflate(b[i].hull(&cand[i]), self.config.inflation);
                if b[i].is_unbounded() {
                    return Err(RoughFailure::Retry);
                }
            }
        }
        Err(RoughFailure::Retry)
    }
}

/// Widens `iv` about its midpoint by `fac`, plus an absolute pad so a
/// degenerate interval cannot stall the iteration.
fn inflate(iv: Interval, fac: f64) -> Interval {
    let m = Interval::point(iv.midpoint());
    let scaled = m.add(&iv.sub(&m).mul(&Interval::point(fac)));
    let pad = 1e-15 * (1.0 + iv.magnitude().hi);
    scaled.add(&Interval::new(-pad, pad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::Rk4;
    use crate::vfield::builtin;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn point_box(p: &[f64]) -> IvBox {
        p.iter().map(|&v| Interval::point(v)).collect()
    }

    #[test]
    #[should_panic(expected = "supported Taylor orders")]
    fn rejects_out_of_range_order() {
        let f = builtin("linear", &params(&[("l1", 1.0)])).unwrap();
        let cfg = IntegratorConfig {
            taylor_order: 6,
            ..IntegratorConfig::default()
        };
        Integrator::new(&f, cfg);
    }

    #[test]
    fn exponential_endpoint_encloses_closed_form() {
        let f = builtin("linear", &params(&[("l1", 1.0)])).unwrap();
        let ig = Integrator::new(&f, IntegratorConfig::default());
        let enc = ig
            .flow_endpoint(&point_box(&[1.0]), Interval::point(0.1))
            .unwrap();
        // Closed form: e^0.1.
        assert!(enc.endpoint[0].contains(1.1051709180756477), "{enc:?}");
        assert!(enc.endpoint[0].width() < 1e-5, "{enc:?}");
        assert_eq!(enc.substeps, 1);

        // The tube over [0, 0.1] stays inside a loose bracket of the true
        // segment [1, e^0.1].
        let enc = ig
            .flow_tube(&point_box(&[1.0]), Interval::point(0.1))
            .unwrap();
        assert!(!enc.tube.is_empty());
        for seg in &enc.tube {
            assert!(seg[0].lo >= 0.9 && seg[0].hi <= 1.3, "{seg:?}");
        }
    }

    #[test]
    fn chained_short_steps_track_exact_width_growth() {
        // The exact image of [1, 1.001] under time 0.5 of x' = x is
        // [e^0.5, 1.001·e^0.5]; ten chained enclosures must contain it
        // and may exceed its width only marginally.
        let f = builtin("linear", &params(&[("l1", 1.0)])).unwrap();
        let ig = Integrator::new(&f, IntegratorConfig::default());
        let mut x: IvBox = [Interval::new(1.0, 1.001)].into_iter().collect();
        for _ in 0..10 {
            x = ig.flow_endpoint(&x, Interval::point(0.05)).unwrap().endpoint;
        }
        let e = 0.5f64.exp();
        assert!(x[0].contains(e) && x[0].contains(1.001 * e), "{x:?}");
        let bound = 0.001 * e * 1.01 + 1e-6;
        assert!(x[0].width() <= bound, "width {} > {bound}", x[0].width());
    }

    #[test]
    fn zero_field_is_exact_identity() {
        let f = builtin("linear", &params(&[("l1", 0.0)])).unwrap();
        let ig = Integrator::new(&f, IntegratorConfig::default());
        let x0: IvBox = [Interval::new(0.5, 0.75)].into_iter().collect();
        let enc = ig.flow_endpoint(&x0, Interval::point(0.25)).unwrap();
        assert_eq!(enc.endpoint[0].lo, 0.5);
        assert_eq!(enc.endpoint[0].hi, 0.75);
    }

    #[test]
    fn blow_up_fails_before_the_singularity() {
        // Radial dynamics r' = r(r²-2)(r²-1) from |x|² = 18 reaches
        // infinity at exactly t = ln(289/288)/4 ≈ 8.666e-4 (partial
        // fractions in u = r²).
        let f = builtin("two_cycles", &params(&[("mu", 2.0)])).unwrap();
        let ig = Integrator::new(&f, IntegratorConfig::default());
        let x0 = point_box(&[3.0, 3.0]);

        let err = ig
            .flow_endpoint(&x0, Interval::point(0.002))
            .unwrap_err();
        // Validation cannot certify past the true blow-up time.
        assert!(err.t_reached() < (289f64 / 288.0).ln() / 4.0, "{err:?}");

        let ok = ig.flow_endpoint(&x0, Interval::point(2e-4)).unwrap();
        let mut rk = Rk4::new(&f);
        let y = rk.endpoint(&[3.0, 3.0], 2e-4, 4000);
        assert!(ok.endpoint[0].contains(y[0]) && ok.endpoint[1].contains(y[1]));
    }

    #[test]
    fn substep_budget_is_reported() {
        let f = builtin("linear", &params(&[("l1", 1.0)])).unwrap();
        let cfg = IntegratorConfig {
            max_substeps: 3,
            ..IntegratorConfig::default()
        };
        let ig = Integrator::new(&f, cfg);
        let err = ig
            .flow_endpoint(&point_box(&[1.0]), Interval::point(5.0))
            .unwrap_err();
        match err {
            IntegrationError::SubstepBudgetExhausted { t_reached } => {
                assert!(t_reached > 0.0 && t_reached < 5.0)
            }
            other => panic!("expected budget exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn circle_flow_rotates_and_tube_covers_the_arc() {
        let f = builtin("circle_demo", &params(&[])).unwrap();
        let ig = Integrator::new(&f, IntegratorConfig::default());
        let x0 = point_box(&[1.0, 0.0]);

        // On the invariant circle the flow is unit-speed rotation, and the
        // step times are exact, so the enclosure at t contains exactly
        // (cos t, sin t). Direct interval Taylor wraps over a time this
        // long, hence the loose width cap.
        let quarter = std::f64::consts::FRAC_PI_2;
        let enc = ig.flow_endpoint(&x0, Interval::point(quarter)).unwrap();
        let true_pt = [quarter.cos(), quarter.sin()];
        assert!(
            crate::interval::box_contains_point(&enc.endpoint, &true_pt),
            "{enc:?}"
        );
        assert!(enc.endpoint.iter().all(|c| c.width() < 0.5), "{enc:?}");

        // Tube segments must cover the swept arc. The horizon stays well
        // inside the range where direct interval Taylor remains bounded.
        let horizon = 1.7;
        let enc = ig.flow_tube(&x0, Interval::point(horizon)).unwrap();
        let mut theta = 0.0;
        while theta <= horizon {
            let p = [theta.cos(), theta.sin()];
            assert!(
                enc.tube
                    .iter()
                    .any(|seg| crate::interval::box_contains_point(seg, &p)),
                "tube misses angle {theta}"
            );
            theta += 0.05;
        }
    }

    #[test]
    fn window_endpoint_covers_every_time_in_the_window() {
        let f = builtin("circle_demo", &params(&[])).unwrap();
        let ig = Integrator::new(&f, IntegratorConfig::default());
        let x0 = point_box(&[1.0, 0.0]);
        let window = Interval::new(0.3, 0.5);
        let enc = ig.flow_endpoint(&x0, window).unwrap();
        let mut theta = window.lo;
        while theta <= window.hi {
            let p = [theta.cos(), theta.sin()];
            assert!(
                crate::interval::box_contains_point(&enc.endpoint, &p),
                "window endpoint misses angle {theta}"
            );
            theta += 0.01;
        }
    }

    #[test]
    fn endpoints_contain_runge_kutta_samples() {
        let f = builtin("two_cycles", &params(&[("mu", 2.0)])).unwrap();
        let ig = Integrator::new(&f, IntegratorConfig::default());
        let mut rk = Rk4::new(&f);
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1234);
        for _ in 0..300 {
            // Stay inside the forward-invariant disk bounded by the outer
            // cycle at radius √2.
            let x = [
                rng.random_range(-0.85..0.85),
                rng.random_range(-0.85..0.85),
            ];
            let t = rng.random_range(0.05..0.3);
            let enc = ig.flow_endpoint(&point_box(&x), Interval::point(t)).unwrap();
            let y = rk.endpoint(&x, t, 500);
            assert!(
                crate::interval::box_contains_point(&enc.endpoint, &y),
                "start {x:?} t={t}: enclosure {:?} misses RK4 point {y:?}",
                enc.endpoint
            );
        }
    }
}
