//! Outward-rounded interval arithmetic on `f64` endpoints.
//!
//! Every operation returns an interval that contains the exact mathematical
//! result for all points of its inputs. Directed rounding is realized
//! without touching the FPU mode: each endpoint is computed in
//! round-to-nearest and the exact rounding residual is recovered with an
//! error-free transformation (two-sum for addition, an FMA residual for
//! multiplication, division and square root). The endpoint is then nudged
//! one ulp outward only when the residual shows it landed on the wrong side,
//! so dyadic-exact results like `[1,2] + [3,4] = [4,6]` stay exact.
//!
//! Near the under/overflow thresholds the residual itself can be rounded,
//! so there the code gives up tightness and nudges unconditionally.
//!
//! Endpoints are never NaN. An infinite endpoint can only appear through
//! overflow of a finite computation; such intervals answer
//! [`Interval::is_unbounded`] and downstream consumers treat them as
//! enclosure failures rather than usable sets.

use smallvec::SmallVec;

/// Closed interval `[lo, hi]` with `lo <= hi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// Axis-aligned box: one interval per coordinate.
pub type IvBox = SmallVec<[Interval; 4]>;

/// Errors raised by partial interval operations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntervalError {
    /// Divisor interval contains zero.
    DivisionByZeroInterval,
    /// Input entirely outside the domain of the function (e.g. sqrt of a
    /// strictly negative interval).
    DomainError,
}

impl std::fmt::Display for IntervalError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IntervalError::DivisionByZeroInterval => {
                write!(f, "division by an interval containing zero")
            }
            IntervalError::DomainError => write!(f, "argument outside function domain"),
        }
    }
}

impl std::error::Error for IntervalError {}

// Magnitudes beyond which FMA/two-sum residuals may themselves round
// (denormal residuals) and the exactness argument breaks down. Outside
// (TINY, HUGE) we nudge unconditionally.
const TINY: f64 = 1e-290;
const HUGE: f64 = 1e290;

#[inline]
fn down(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        x
    } else {
        x.next_down()
    }
}

#[inline]
fn up(x: f64) -> f64 {
    if x == f64::INFINITY {
        x
    } else {
        x.next_up()
    }
}

/// Exact error of rounded addition (Knuth two-sum, valid for all finite
/// inputs): `x + y == s + err` exactly, where `s = fl(x + y)`.
#[inline]
fn two_sum_err(x: f64, y: f64, s: f64) -> f64 {
    let bv = s - x;
    (x - (s - bv)) + (y - bv)
}

#[inline]
fn add_down(x: f64, y: f64) -> f64 {
    let s = x + y;
    if !s.is_finite() {
        // Finite inputs overflowing to +inf: true sum > MAX, round-down is MAX.
        if s == f64::INFINITY && x.is_finite() && y.is_finite() {
            return f64::MAX;
        }
        return s;
    }
    if s.abs() > HUGE {
        return down(s);
    }
    if two_sum_err(x, y, s) < 0.0 {
        down(s)
    } else {
        s
    }
}

#[inline]
fn add_up(x: f64, y: f64) -> f64 {
    let s = x + y;
    if !s.is_finite() {
        if s == f64::NEG_INFINITY && x.is_finite() && y.is_finite() {
            return f64::MIN;
        }
        return s;
    }
    if s.abs() > HUGE {
        return up(s);
    }
    if two_sum_err(x, y, s) > 0.0 {
        up(s)
    } else {
        s
    }
}

#[inline]
fn mul_down(x: f64, y: f64) -> f64 {
    if x == 0.0 || y == 0.0 {
        return 0.0;
    }
    let p = x * y;
    if !p.is_finite() {
        if p == f64::INFINITY && x.is_finite() && y.is_finite() {
            return f64::MAX;
        }
        return p;
    }
    let m = p.abs();
    if m < TINY || m > HUGE {
        return down(p);
    }
    // Exact multiplication residual: x*y == p + e.
    let e = x.mul_add(y, -p);
    if e < 0.0 {
        down(p)
    } else {
        p
    }
}

#[inline]
fn mul_up(x: f64, y: f64) -> f64 {
    if x == 0.0 || y == 0.0 {
        return 0.0;
    }
    let p = x * y;
    if !p.is_finite() {
        if p == f64::NEG_INFINITY && x.is_finite() && y.is_finite() {
            return f64::MIN;
        }
        return p;
    }
    let m = p.abs();
    if m < TINY || m > HUGE {
        return up(p);
    }
    let e = x.mul_add(y, -p);
    if e > 0.0 {
        up(p)
    } else {
        p
    }
}

#[inline]
fn div_dir(x: f64, y: f64, upward: bool) -> f64 {
    debug_assert!(y != 0.0);
    if x == 0.0 {
        return 0.0;
    }
    let q = x / y;
    if !q.is_finite() {
        if q == f64::INFINITY && x.is_finite() {
            return if upward { f64::INFINITY } else { f64::MAX };
        }
        if q == f64::NEG_INFINITY && x.is_finite() {
            return if upward { f64::MIN } else { f64::NEG_INFINITY };
        }
        return q;
    }
    let m = q.abs();
    if m < TINY || m > HUGE || x.abs() > HUGE || x.abs() < TINY {
        return if upward { up(q) } else { down(q) };
    }
    // rho = x - q*y exactly (representable for a correctly rounded quotient);
    // the true quotient is q + rho/y, so its position relative to q is the
    // sign of rho/y.
    let rho = (-q).mul_add(y, x);
    let true_above = (rho > 0.0) == (y > 0.0) && rho != 0.0;
    let true_below = (rho > 0.0) != (y > 0.0) && rho != 0.0;
    if upward {
        if true_above {
            up(q)
        } else {
            q
        }
    } else if true_below {
        down(q)
    } else {
        q
    }
}

#[inline]
fn sqrt_down(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    let s = x.sqrt();
    if x < TINY || x > HUGE {
        return down(s).max(0.0);
    }
    // s*s - x is exact for a correctly rounded square root.
    let e = s.mul_add(s, -x);
    if e > 0.0 {
        down(s)
    } else {
        s
    }
}

#[inline]
fn sqrt_up(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    let s = x.sqrt();
    if x < TINY || x > HUGE {
        return up(s);
    }
    let e = s.mul_add(s, -x);
    if e < 0.0 {
        up(s)
    } else {
        s
    }
}

/// Nonnegative integer power of a nonnegative value, rounded in one
/// direction, by binary exponentiation. All partial products are >= 0 so the
/// rounding direction survives composition.
fn pow_nonneg_dir(x: f64, n: u32, upward: bool) -> f64 {
    debug_assert!(x >= 0.0);
    let mut result = 1.0f64;
    let mut base = x;
    let mut k = n;
    loop {
        if k & 1 == 1 {
            result = if upward {
                mul_up(result, base)
            } else {
                mul_down(result, base)
            };
        }
        k >>= 1;
        if k == 0 {
            break;
        }
        base = if upward {
            mul_up(base, base)
        } else {
            mul_down(base, base)
        };
    }
    result
}

/// Signed directed power for odd exponents (odd powers are monotone).
fn pow_signed_dir(x: f64, n: u32, upward: bool) -> f64 {
    if x >= 0.0 {
        pow_nonneg_dir(x, n, upward)
    } else {
        -pow_nonneg_dir(-x, n, !upward)
    }
}

// Outward padding applied to transcendental endpoint values; generous
// against libm's actual accuracy, so padded values still enclose.
const TRANS_PAD: f64 = 8.9e-13; // 2^-40
// Beyond this magnitude f64 spacing is too coarse for trig argument
// reduction to be trusted; fall back to [-1, 1].
const TRIG_ARG_LIMIT: f64 = 1e9;

impl Interval {
    pub const ZERO: Interval = Interval { lo: 0.0, hi: 0.0 };
    pub const ONE: Interval = Interval { lo: 1.0, hi: 1.0 };

    /// Builds `[lo, hi]`. Panics if `lo > hi` or either endpoint is NaN;
    /// those are programming errors, not data errors.
    pub fn new(lo: f64, hi: f64) -> Interval {
        assert!(!lo.is_nan() && !hi.is_nan(), "interval endpoint is NaN");
        assert!(lo <= hi, "interval endpoints out of order: [{lo}, {hi}]");
        Interval { lo, hi }
    }

    /// Degenerate interval `[x, x]`.
    pub fn point(x: f64) -> Interval {
        Interval::new(x, x)
    }

    /// True if an endpoint overflowed to infinity.
    pub fn is_unbounded(&self) -> bool {
        self.lo.is_infinite() || self.hi.is_infinite()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    /// Upper bound on `hi - lo`.
    pub fn width(&self) -> f64 {
        add_up(self.hi, -self.lo)
    }

    /// A point guaranteed to lie inside the interval.
    pub fn midpoint(&self) -> f64 {
        let m = 0.5 * (self.lo + self.hi);
        if m.is_finite() && self.contains(m) {
            m
        } else {
            // Overflow of lo + hi, or an infinite endpoint.
            self.lo.max(self.hi.min(0.0))
        }
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    /// `None` when the intervals are disjoint; the empty set stays a
    /// distinct state instead of masquerading as a degenerate interval.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo <= hi {
            Some(Interval { lo, hi })
        } else {
            None
        }
    }

    pub fn add(&self, other: &Interval) -> Interval {
        Interval {
            lo: add_down(self.lo, other.lo),
            hi: add_up(self.hi, other.hi),
        }
    }

    pub fn sub(&self, other: &Interval) -> Interval {
        Interval {
            lo: add_down(self.lo, -other.hi),
            hi: add_up(self.hi, -other.lo),
        }
    }

    pub fn neg(&self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }

    pub fn mul(&self, other: &Interval) -> Interval {
        let (a, b) = (self, other);
        // Sign classification keeps this to two directed products except in
        // the mixed*mixed case.
        let (lo, hi) = if a.lo >= 0.0 {
            if b.lo >= 0.0 {
                (mul_down(a.lo, b.lo), mul_up(a.hi, b.hi))
            } else if b.hi <= 0.0 {
                (mul_down(a.hi, b.lo), mul_up(a.lo, b.hi))
            } else {
                (mul_down(a.hi, b.lo), mul_up(a.hi, b.hi))
            }
        } else if a.hi <= 0.0 {
            if b.lo >= 0.0 {
                (mul_down(a.lo, b.hi), mul_up(a.hi, b.lo))
            } else if b.hi <= 0.0 {
                (mul_down(a.hi, b.hi), mul_up(a.lo, b.lo))
            } else {
                (mul_down(a.lo, b.hi), mul_up(a.lo, b.lo))
            }
        } else if b.lo >= 0.0 {
            (mul_down(a.lo, b.hi), mul_up(a.hi, b.hi))
        } else if b.hi <= 0.0 {
            (mul_down(a.hi, b.lo), mul_up(a.lo, b.lo))
        } else {
            (
                mul_down(a.lo, b.hi).min(mul_down(a.hi, b.lo)),
                mul_up(a.lo, b.lo).max(mul_up(a.hi, b.hi)),
            )
        };
        Interval { lo, hi }
    }

    pub fn div(&self, other: &Interval) -> Result<Interval, IntervalError> {
        if other.lo <= 0.0 && other.hi >= 0.0 {
            return Err(IntervalError::DivisionByZeroInterval);
        }
        let a = self;
        let b = other;
        let (lo, hi) = if b.lo > 0.0 {
            (
                div_dir(a.lo, if a.lo >= 0.0 { b.hi } else { b.lo }, false),
                div_dir(a.hi, if a.hi >= 0.0 { b.lo } else { b.hi }, true),
            )
        } else {
            (
                div_dir(a.hi, if a.hi >= 0.0 { b.hi } else { b.lo }, false),
                div_dir(a.lo, if a.lo >= 0.0 { b.lo } else { b.hi }, true),
            )
        };
        Ok(Interval { lo, hi })
    }

    /// `self^n` with the exact range for even `n` (no sign-lost widening:
    /// `[-1,2]^2 = [0,4]`, not `[-2,4]`).
    pub fn pow_int(&self, n: u32) -> Interval {
        if n == 0 {
            return Interval::ONE;
        }
        if n == 1 {
            return *self;
        }
        if n % 2 == 0 {
            let m = self.magnitude();
            Interval {
                lo: pow_nonneg_dir(m.lo, n, false),
                hi: pow_nonneg_dir(m.hi, n, true),
            }
        } else {
            Interval {
                lo: pow_signed_dir(self.lo, n, false),
                hi: pow_signed_dir(self.hi, n, true),
            }
        }
    }

    /// Range of `|x|` over the interval.
    pub fn magnitude(&self) -> Interval {
        let hi = self.lo.abs().max(self.hi.abs());
        let lo = if self.lo <= 0.0 && self.hi >= 0.0 {
            0.0
        } else {
            self.lo.abs().min(self.hi.abs())
        };
        Interval { lo, hi }
    }

    /// Alias for [`Interval::magnitude`] under its pointwise name.
    pub fn abs(&self) -> Interval {
        self.magnitude()
    }

    /// Square root. An interval that is partially negative is clamped to
    /// `[0, hi]` first (the negative part has empty preimage under squaring);
    /// an entirely negative interval is a domain error.
    pub fn sqrt(&self) -> Result<Interval, IntervalError> {
        if self.hi < 0.0 {
            return Err(IntervalError::DomainError);
        }
        let lo = if self.lo < 0.0 { 0.0 } else { self.lo };
        Ok(Interval {
            lo: sqrt_down(lo),
            hi: sqrt_up(self.hi),
        })
    }

    pub fn sin(&self) -> Interval {
        trig_range(self, false)
    }

    pub fn cos(&self) -> Interval {
        trig_range(self, true)
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{:?}, {:?}]", self.lo, self.hi)
    }
}

/// Shared sine/cosine range: monotone between critical points, so evaluate
/// endpoints (padded outward) and splice in +/-1 whenever a critical point
/// may fall inside the argument interval. The inclusion test is slack-padded
/// toward inclusion, which can only widen the result.
fn trig_range(a: &Interval, is_cos: bool) -> Interval {
    let full = Interval { lo: -1.0, hi: 1.0 };
    if a.is_unbounded()
        || a.lo.abs() > TRIG_ARG_LIMIT
        || a.hi.abs() > TRIG_ARG_LIMIT
        || a.hi - a.lo >= std::f64::consts::TAU
    {
        return full;
    }
    let (flo, fhi) = if is_cos {
        (a.lo.cos(), a.hi.cos())
    } else {
        (a.lo.sin(), a.hi.sin())
    };
    let mut lo = flo.min(fhi) - TRANS_PAD;
    let mut hi = flo.max(fhi) + TRANS_PAD;
    // Maxima of sin at pi/2 + 2k*pi, of cos at 2k*pi; minima shifted by pi.
    let max_phase = if is_cos {
        0.0
    } else {
        std::f64::consts::FRAC_PI_2
    };
    let slack = 1e-9 * (1.0 + a.lo.abs().max(a.hi.abs()));
    if has_phase_point(a, max_phase, slack) {
        hi = 1.0;
    }
    if has_phase_point(a, max_phase + std::f64::consts::PI, slack) {
        lo = -1.0;
    }
    Interval {
        lo: lo.max(-1.0),
        hi: hi.min(1.0),
    }
}

/// Could `phase + 2k*pi` lie in `a` for some integer `k`? Errs toward "yes".
fn has_phase_point(a: &Interval, phase: f64, slack: f64) -> bool {
    let tau = std::f64::consts::TAU;
    let k = ((a.lo - phase) / tau).ceil();
    let candidate = phase + k * tau;
    candidate >= a.lo - slack && candidate <= a.hi + slack
        || candidate - tau >= a.lo - slack && candidate - tau <= a.hi + slack
}

/// Componentwise hull of two boxes.
pub fn hull_box(a: &IvBox, b: &IvBox) -> IvBox {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x.hull(y)).collect()
}

/// Componentwise intersection; `None` if any coordinate is disjoint.
pub fn intersect_box(a: &IvBox, b: &IvBox) -> Option<IvBox> {
    debug_assert_eq!(a.len(), b.len());
    let mut out = IvBox::with_capacity(a.len());
    for (x, y) in a.iter().zip(b.iter()) {
        out.push(x.intersect(y)?);
    }
    Some(out)
}

/// Does `a` contain `b` componentwise?
pub fn box_contains_box(a: &IvBox, b: &IvBox) -> bool {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).all(|(x, y)| x.contains_interval(y))
}

/// Does the box contain the point?
pub fn box_contains_point(a: &IvBox, p: &[f64]) -> bool {
    debug_assert_eq!(a.len(), p.len());
    a.iter().zip(p.iter()).all(|(x, &v)| x.contains(v))
}

/// Enclosure of the Euclidean norm over the box.
pub fn norm2(b: &[Interval]) -> Interval {
    let mut acc = Interval::ZERO;
    for c in b {
        acc = acc.add(&c.pow_int(2));
    }
    acc.sqrt().expect("sum of squares is nonnegative")
}
