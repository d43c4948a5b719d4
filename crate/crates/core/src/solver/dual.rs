//! The entropy-balancing dual `log Σ_i q_i exp(-c_i·θ)`, its gradient, and
//! the closed-form weights it induces.
//!
//! All evaluations subtract the largest exponent before exponentiating, so
//! finite inputs always produce finite outputs.

use super::constraints::ConstraintSystem;

/// Log-domain exponents `η_i = ln q_i - c_i·θ`.
fn exponents(theta: &[f64], cs: &ConstraintSystem, base: &[f64], out: &mut Vec<f64>) {
    assert_eq!(theta.len(), cs.k(), "theta length must match constraint count");
    assert_eq!(base.len(), cs.n(), "base weights must match row count");
    out.clear();
    out.extend(base.iter().map(|q| q.ln()));
    for (k, t) in theta.iter().enumerate() {
        if *t == 0.0 {
            continue;
        }
        for (e, c) in out.iter_mut().zip(cs.column(k)) {
            *e -= t * c;
        }
    }
}

/// Turns exponents into normalized weights in place; returns the log-normalizer.
fn softmax_in_place(eta: &mut [f64]) -> f64 {
    let max = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for e in eta.iter_mut() {
        *e = (*e - max).exp();
        total += *e;
    }
    for e in eta.iter_mut() {
        *e /= total;
    }
    max + total.ln()
}

pub fn dual_objective(theta: &[f64], cs: &ConstraintSystem, base: &[f64]) -> f64 {
    let mut eta = Vec::with_capacity(cs.n());
    exponents(theta, cs, base, &mut eta);
    softmax_in_place(&mut eta)
}

/// Closed-form weights `w_i ∝ q_i exp(-c_i·θ)`, normalized to sum to one.
pub fn weights_from_theta(theta: &[f64], cs: &ConstraintSystem, base: &[f64]) -> Vec<f64> {
    let mut eta = Vec::with_capacity(cs.n());
    exponents(theta, cs, base, &mut eta);
    softmax_in_place(&mut eta);
    eta
}

/// `∂/∂θ_k = -Σ_i w_i(θ) c_ik`: at a stationary point every constraint holds.
pub fn dual_gradient(theta: &[f64], cs: &ConstraintSystem, base: &[f64]) -> Vec<f64> {
    let w = weights_from_theta(theta, cs, base);
    cs.weighted_sums(&w).into_iter().map(|s| -s).collect()
}

/// Reusable evaluator returning objective, gradient and weights in one pass.
pub(crate) struct DualEvaluator<'a> {
    cs: &'a ConstraintSystem,
    base: &'a [f64],
    buf: Vec<f64>,
}

impl<'a> DualEvaluator<'a> {
    pub fn new(cs: &'a ConstraintSystem, base: &'a [f64]) -> Self {
        Self {
            cs,
            base,
            buf: Vec::with_capacity(cs.n()),
        }
    }

    pub fn eval(&mut self, theta: &[f64], grad: &mut [f64]) -> f64 {
        exponents(theta, self.cs, self.base, &mut self.buf);
        let f = softmax_in_place(&mut self.buf);
        for (k, g) in grad.iter_mut().enumerate() {
            *g = -self
                .cs
                .column(k)
                .iter()
                .zip(&self.buf)
                .map(|(c, w)| c * w)
                .sum::<f64>();
        }
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> ConstraintSystem {
        ConstraintSystem::from_raw_columns(vec![vec![1.0, -1.0]]).unwrap()
    }

    #[test]
    fn zero_theta_uniform_base_gives_zero() {
        let cs = ConstraintSystem::from_raw_columns(vec![vec![0.3, -1.0, 0.7], vec![1.0, 2.0, -3.0]])
            .unwrap();
        let q = vec![1.0 / 3.0; 3];
        assert!(dual_objective(&[0.0, 0.0], &cs, &q).abs() < 1e-15);
        let w = weights_from_theta(&[0.0, 0.0], &cs, &q);
        assert!(w.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn scalar_closed_form() {
        let cs = two_point();
        let q = [0.5, 0.5];
        let t: f64 = 1.0;
        let direct = (((-t).exp() + t.exp()) / 2.0).ln();
        assert!((dual_objective(&[t], &cs, &q) - direct).abs() < 1e-14);
    }

    #[test]
    fn two_point_softmax_by_hand() {
        // exp(-θ)/exp(θ) = 1/3 at θ = ln(3)/2.
        let w = weights_from_theta(&[3f64.ln() / 2.0], &two_point(), &[0.5, 0.5]);
        assert!((w[0] - 0.25).abs() < 1e-14 && (w[1] - 0.75).abs() < 1e-14);
    }

    #[test]
    fn overflow_stress_stays_finite() {
        let cs = ConstraintSystem::from_raw_columns(vec![vec![1.0, 0.0, 0.0]]).unwrap();
        let q = [1.0 / 3.0; 3];
        // c_1·θ = -1e4 makes exp(+1e4) overflow without stabilization.
        let f = dual_objective(&[-1e4], &cs, &q);
        let hand = 1e4 + (1.0 / 3.0f64).ln() + (1.0 + 2.0 * (-1e4f64).exp()).ln();
        assert!(f.is_finite());
        assert!((f - hand).abs() < 1e-9);
        let f2 = dual_objective(&[1e4], &cs, &q);
        let hand2 = (2.0f64 / 3.0).ln() + (1.0 + 0.5 * (-1e4f64).exp()).ln();
        assert!((f2 - hand2).abs() < 1e-12);
    }

    #[test]
    fn evaluator_matches_free_functions() {
        let cs = ConstraintSystem::from_raw_columns(vec![vec![0.3, -1.0, 0.7], vec![1.0, 2.0, -3.0]])
            .unwrap();
        let q = [0.2, 0.5, 0.3];
        let theta = [0.4, -0.2];
        let mut g = [0.0; 2];
        let mut ev = DualEvaluator::new(&cs, &q);
        let f = ev.eval(&theta, &mut g);
        assert_eq!(f, dual_objective(&theta, &cs, &q));
        assert_eq!(g.to_vec(), dual_gradient(&theta, &cs, &q));
    }
}
