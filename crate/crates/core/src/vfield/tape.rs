//! Flattened expression evaluation.
//!
//! Tree-walking interval evaluation is too slow for per-cell integration
//! over six-figure grids, and the symbolically generated Taylor coefficient
//! expressions share most of their subtrees. [`Tape::compile`] lowers a
//! batch of expressions into one instruction sequence in dependency order,
//! hash-consing structurally identical subexpressions so shared work is
//! evaluated once. Parameters are resolved to constants at compile time.

use std::collections::HashMap;

use super::Expr;
use crate::interval::{Interval, IntervalError, IvBox};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug)]
enum Op {
    Const(f64),
    Var(u32),
    Neg(u32),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Pow(u32, u32),
    Sin(u32),
    Cos(u32),
    Sqrt(u32),
    Abs(u32),
    Sign(u32),
}

/// Compiled form of one or more expressions over a common variable vector.
#[derive(Clone, Debug)]
pub struct Tape {
    ops: Vec<Op>,
    roots: Vec<u32>,
}

impl Tape {
    /// Compiles `exprs` with `params` substituted. The i-th root of the
    /// tape evaluates the i-th input expression.
    pub fn compile(exprs: &[&Expr], params: &BTreeMap<String, f64>) -> Tape {
        let mut tape = Tape {
            ops: Vec::new(),
            roots: Vec::new(),
        };
        let mut memo: HashMap<(u8, u64, u64), u32> = HashMap::new();
        for e in exprs {
            let slot = tape.lower(e, params, &mut memo);
            tape.roots.push(slot);
        }
        tape
    }

    pub fn n_roots(&self) -> usize {
        self.roots.len()
    }

    pub fn n_ops(&self) -> usize {
        self.ops.len()
    }

    fn push(&mut self, key: (u8, u64, u64), op: Op, memo: &mut HashMap<(u8, u64, u64), u32>) -> u32 {
        if let Some(&slot) = memo.get(&key) {
            return slot;
        }
        let slot = self.ops.len() as u32;
        self.ops.push(op);
        memo.insert(key, slot);
        slot
    }

    fn lower(
        &mut self,
        e: &Expr,
        params: &BTreeMap<String, f64>,
        memo: &mut HashMap<(u8, u64, u64), u32>,
    ) -> u32 {
        match e {
            Expr::Const(c) => self.push((0, c.to_bits(), 0), Op::Const(*c), memo),
            Expr::Var(i) => self.push((1, *i as u64, 0), Op::Var(*i as u32), memo),
            Expr::Param(name) => {
                let v = params[name.as_str()];
                self.push((0, v.to_bits(), 0), Op::Const(v), memo)
            }
            Expr::Neg(a) => {
                let a = self.lower(a, params, memo);
                self.push((2, a as u64, 0), Op::Neg(a), memo)
            }
            Expr::Add(a, b) => {
                let a = self.lower(a, params, memo);
                let b = self.lower(b, params, memo);
                self.push((3, a as u64, b as u64), Op::Add(a, b), memo)
            }
            Expr::Sub(a, b) => {
                let a = self.lower(a, params, memo);
                let b = self.lower(b, params, memo);
                self.push((4, a as u64, b as u64), Op::Sub(a, b), memo)
            }
            Expr::Mul(a, b) => {
                let a = self.lower(a, params, memo);
                let b = self.lower(b, params, memo);
                self.push((5, a as u64, b as u64), Op::Mul(a, b), memo)
            }
            Expr::Div(a, b) => {
                let a = self.lower(a, params, memo);
                let b = self.lower(b, params, memo);
                self.push((6, a as u64, b as u64), Op::Div(a, b), memo)
            }
            Expr::Pow(a, n) => {
                let a = self.lower(a, params, memo);
                self.push((7, a as u64, *n as u64), Op::Pow(a, *n), memo)
            }
            Expr::Sin(a) => {
                let a = self.lower(a, params, memo);
                self.push((8, a as u64, 0), Op::Sin(a), memo)
            }
            Expr::Cos(a) => {
                let a = self.lower(a, params, memo);
                self.push((9, a as u64, 0), Op::Cos(a), memo)
            }
            Expr::Sqrt(a) => {
                let a = self.lower(a, params, memo);
                self.push((10, a as u64, 0), Op::Sqrt(a), memo)
            }
            Expr::Abs(a) => {
                let a = self.lower(a, params, memo);
                self.push((11, a as u64, 0), Op::Abs(a), memo)
            }
            Expr::Sign(a) => {
                let a = self.lower(a, params, memo);
                self.push((12, a as u64, 0), Op::Sign(a), memo)
            }
        }
    }

    /// Rigorous interval evaluation of all roots into `out`.
    /// `scratch` is caller-owned to keep hot loops allocation-free.
    pub fn eval_interval(
        &self,
        x: &IvBox,
        scratch: &mut Vec<Interval>,
        out: &mut [Interval],
    ) -> Result<(), IntervalError> {
        debug_assert_eq!(out.len(), self.roots.len());
        scratch.clear();
        scratch.resize(self.ops.len(), Interval::ZERO);
        let s = scratch.as_mut_slice();
        for (i, op) in self.ops.iter().enumerate() {
            s[i] = match *op {
                Op::Const(c) => Interval::point(c),
                Op::Var(j) => x[j as usize],
                Op::Neg(a) => s[a as usize].neg(),
                Op::Add(a, b) => s[a as usize].add(&s[b as usize]),
                Op::Sub(a, b) => s[a as usize].sub(&s[b as usize]),
                Op::Mul(a, b) => s[a as usize].mul(&s[b as usize]),
                Op::Div(a, b) => s[a as usize].div(&s[b as usize])?,
                Op::Pow(a, n) => s[a as usize].pow_int(n),
                Op::Sin(a) => s[a as usize].sin(),
                Op::Cos(a) => s[a as usize].cos(),
                Op::Sqrt(a) => s[a as usize].sqrt()?,
                Op::Abs(a) => s[a as usize].abs(),
                Op::Sign(a) => {
                    let v = s[a as usize];
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
            };
        }
        for (o, &r) in out.iter_mut().zip(&self.roots) {
            *o = s[r as usize];
        }
        Ok(())
    }

    /// Plain `f64` evaluation of all roots (IEEE semantics, not validated).
    pub fn eval_real(&self, x: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.roots.len());
        scratch.clear();
        scratch.resize(self.ops.len(), 0.0);
        let s = scratch.as_mut_slice();
        for (i, op) in self.ops.iter().enumerate() {
            s[i] = match *op {
                Op::Const(c) => c,
                Op::Var(j) => x[j as usize],
                Op::Neg(a) => -s[a as usize],
                Op::Add(a, b) => s[a as usize] + s[b as usize],
                Op::Sub(a, b) => s[a as usize] - s[b as usize],
                Op::Mul(a, b) => s[a as usize] * s[b as usize],
                Op::Div(a, b) => s[a as usize] / s[b as usize],
                Op::Pow(a, n) => s[a as usize].powi(n as i32),
                Op::Sin(a) => s[a as usize].sin(),
                Op::Cos(a) => s[a as usize].cos(),
                Op::Sqrt(a) => s[a as usize].sqrt(),
                Op::Abs(a) => s[a as usize].abs(),
                Op::Sign(a) => {
                    let v = s[a as usize];
                    if v > 0.0 {
                        1.0
                    } else if v < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                }
            };
        }
        for (o, &r) in out.iter_mut().zip(&self.roots) {
            *o = s[r as usize];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vfield::{builtin, parse_expr};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tape_agrees_with_tree_eval() {
        let p: BTreeMap<String, f64> = [("mu".to_string(), 2.0)].into_iter().collect();
        let f = builtin("two_cycles", &p).unwrap();
        let refs: Vec<&Expr> = f.components.iter().collect();
        let tape = Tape::compile(&refs, &p);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut scratch = Vec::new();
        let mut out = [Interval::ZERO; 2];
        for _ in 0..1000 {
            let b: IvBox = (0..2)
                .map(|_| {
                    let c = rng.random_range(-3.0..3.0);
                    let w = rng.random_range(0.0..0.2);
                    Interval::new(c - w, c + w)
                })
                .collect();
            tape.eval_interval(&b, &mut scratch, &mut out).unwrap();
            let tree = f.eval_interval(&b).unwrap();
            assert_eq!(out[0], tree[0]);
            assert_eq!(out[1], tree[1]);
        }
    }

    #[test]
    fn shared_subtrees_are_deduplicated() {
        let e = parse_expr("(x1^2 + x2^2 - 1)*(x1^2 + x2^2 - 1) + (x1^2 + x2^2 - 1)").unwrap();
        let tape = Tape::compile(&[&e], &BTreeMap::new());
        // x1, x2, squares, sum, 1, minus, product, final add: far fewer than
        // the 17 tree nodes.
        assert!(tape.n_ops() <= 9, "expected CSE, got {} ops", tape.n_ops());
    }

    #[test]
    fn division_error_propagates() {
        let e = parse_expr("x1/(x1 - x1)").unwrap();
        let tape = Tape::compile(&[&e], &BTreeMap::new());
        let b: IvBox = [Interval::new(1.0, 2.0)].into_iter().collect();
        let mut out = [Interval::ZERO];
        let err = tape
            .eval_interval(&b, &mut Vec::new(), &mut out)
            .unwrap_err();
        assert_eq!(err, IntervalError::DivisionByZeroInterval);
    }
}
