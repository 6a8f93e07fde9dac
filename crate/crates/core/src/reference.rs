//! Non-validated reference integration.
//!
//! A plain fixed-step fourth-order Runge-Kutta integrator over a compiled
//! tape. Test suites sample it as an independent approximation of the flow
//! and check the sampled points against validated enclosures; nothing in
//! the certified pipeline depends on it.

use crate::vfield::tape::Tape;
use crate::vfield::VectorField;

/// Classical RK4 stepper bound to one vector field.
///
/// Holds its own evaluation buffers, so stepping takes `&mut self`; tests
/// that integrate in parallel create one instance per thread.
pub struct Rk4 {
    tape: Tape,
    dim: usize,
    scratch: Vec<f64>,
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl Rk4 {
    pub fn new(field: &VectorField) -> Rk4 {
        let exprs: Vec<_> = field.components.iter().collect();
        let tape = Tape::compile(&exprs, &field.params);
        let dim = field.dim;
        Rk4 {
            tape,
            dim,
            scratch: Vec::new(),
            k: [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]],
            stage: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Advances `x` in place by one RK4 step of size `h`.
    pub fn step(&mut self, x: &mut [f64], h: f64) {
        debug_assert_eq!(x.len(), self.dim);
        let d = self.dim;
        self.tape.eval_real(x, &mut self.scratch, &mut self.k[0]);
        for i in 0..d {
            self.stage[i] = x[i] + 0.5 * h * self.k[0][i];
        }
        let (k1, rest) = self.k.split_at_mut(1);
        self.tape.eval_real(&self.stage, &mut self.scratch, &mut rest[0]);
        for i in 0..d {
            self.stage[i] = x[i] + 0.5 * h * rest[0][i];
        }
        let (k2, rest2) = rest.split_at_mut(1);
        self.tape.eval_real(&self.stage, &mut self.scratch, &mut rest2[0]);
        for i in 0..d {
            self.stage[i] = x[i] + h * rest2[0][i];
        }
        let (k3, k4) = rest2.split_at_mut(1);
        self.tape.eval_real(&self.stage, &mut self.scratch, &mut k4[0]);
        for i in 0..d {
            x[i] += h / 6.0 * (k1[0][i] + 2.0 * k2[0][i] + 2.0 * k3[0][i] + k4[0][i]);
        }
    }

    /// Integrates from `x0` over time `t` in `n_steps` equal steps.
    pub fn endpoint(&mut self, x0: &[f64], t: f64, n_steps: usize) -> Vec<f64> {
        assert!(n_steps > 0);
        let mut x = x0.to_vec();
        let h = t / n_steps as f64;
        for _ in 0..n_steps {
            self.step(&mut x, h);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vfield::builtin;
    use std::collections::BTreeMap;

    fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn exponential_growth() {
        let f = builtin("linear", &params(&[("l1", 1.0)])).unwrap();
        let mut rk = Rk4::new(&f);
        let y = rk.endpoint(&[1.0], 1.0, 1000);
        assert!((y[0] - std::f64::consts::E).abs() < 1e-10, "got {}", y[0]);
    }

    #[test]
    fn unit_circle_rotation() {
        // Starting on the attracting circle the flow is rotation at unit
        // angular speed.
        let f = builtin("circle_demo", &params(&[])).unwrap();
        let mut rk = Rk4::new(&f);
        let y = rk.endpoint(&[1.0, 0.0], std::f64::consts::FRAC_PI_2, 2000);
        assert!(y[0].abs() < 1e-9 && (y[1] - 1.0).abs() < 1e-9, "got {y:?}");
    }
}
