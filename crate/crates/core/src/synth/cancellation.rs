//! Feedback by exact cancellation: choose u so that V̇ along
//! ẋ = f0(x) + g(x)·u equals −W(x), i.e.
//! u = −(grad(V)·f0 + W) / (grad(V)·g). The resulting denominator
//! grad(V)·g typically vanishes on a set through the origin, so this law
//! serves as a comparison point, not a certified controller.

use crate::polyalg::{grad_dot, Polynomial};

use super::{SynthError, SystemModel};

/// A raw cancellation law `u = p / q`. Unlike
/// [`RationalController`](super::RationalController), `q` may vanish at
/// (or near) the origin and no positivity of `q` is certified.
#[derive(Debug, Clone, PartialEq)]
pub struct CancellationLaw {
    pub p: Polynomial,
    pub q: Polynomial,
    /// Always false: no sign certificate for `q` is produced here.
    pub sign_certified: bool,
}

impl CancellationLaw {
    /// Divide `p` and `q` by their largest common monomial factor. The
    /// quotient is unchanged wherever the factor is nonzero and extends it
    /// by continuity elsewhere.
    pub fn reduced(&self) -> CancellationLaw {
        let gp = self.p.common_monomial_factor();
        let gq = self.q.common_monomial_factor();
        let exps: Vec<u32> = gp
            .exponents()
            .iter()
            .zip(gq.exponents())
            .map(|(&a, &b)| a.min(b))
            .collect();
        let common = crate::polyalg::Monomial::new(exps);
        match (self.p.div_monomial(&common), self.q.div_monomial(&common)) {
            (Some(p), Some(q)) => CancellationLaw { p, q, sign_certified: false },
            _ => self.clone(),
        }
    }

    /// Evaluate at a full point; returns non-finite values where q vanishes.
    pub fn eval(&self, point: &[f64]) -> f64 {
        self.p.evaluate(point) / self.q.evaluate(point)
    }
}

/// Single-input cancellation controller for ẋ = f0(x) + g(x)·u:
/// p = −(grad(V)·f0 + W), q = grad(V)·g, so that V̇ ≡ −W wherever q ≠ 0.
///
/// `w` must vanish at the origin and be nonnegative away from it (checked
/// at the origin exactly and on a coarse sample grid). Errors if grad(V)·g
/// is identically zero, since then no input enters V̇ at all.
pub fn cancellation_controller(
    v: &Polynomial,
    f0: &[Polynomial],
    g: &[Polynomial],
    w: &Polynomial,
) -> Result<CancellationLaw, SynthError> {
    let vars = v.vars();
    let nx = vars.n_states();
    if f0.len() != nx || g.len() != nx {
        return Err(SynthError::Invalid(format!(
            "f0 and g must each have {nx} entries, got {} and {}",
            f0.len(),
            g.len()
        )));
    }
    if w.constant_term().abs() > 1e-12 {
        return Err(SynthError::InvalidW(format!(
            "W(0) = {} but the origin must be an equilibrium of the cost",
            w.constant_term()
        )));
    }
    // coarse positivity screen for W on a grid over [-1, 1]^n
    let steps = 5usize;
    let mut idx = vec![0usize; nx];
    loop {
        let mut pt = vec![0.0; vars.len()];
        let mut at_origin = true;
        for i in 0..nx {
            pt[i] = -1.0 + 2.0 * idx[i] as f64 / (steps - 1) as f64;
            if pt[i].abs() > 1e-12 {
                at_origin = false;
            }
        }
        if !at_origin {
            let wv = w.evaluate(&pt);
            if wv < -1e-12 {
                return Err(SynthError::InvalidW(format!(
                    "W = {wv:.3e} at a sampled nonzero state, expected nonnegative"
                )));
            }
        }
        let mut carry = 0;
        while carry < nx {
            idx[carry] += 1;
            if idx[carry] < steps {
                break;
            }
            idx[carry] = 0;
            carry += 1;
        }
        if carry == nx {
            break;
        }
    }

    let q = grad_dot(v, g)?;
    if q.is_zero() {
        return Err(SynthError::ZeroCancellationDenominator);
    }
    let p = grad_dot(v, f0)?.try_add(w)?.neg();
    Ok(CancellationLaw { p, q, sign_certified: false })
}

/// Convenience: build the cancellation law for a control-affine
/// [`SystemModel`] with unit denominators (errors otherwise).
pub fn cancellation_for_system(
    sys: &SystemModel,
    v: &Polynomial,
    w: &Polynomial,
) -> Result<CancellationLaw, SynthError> {
    if sys.n_inputs() != 1 {
        return Err(SynthError::MultiInputTraditional(sys.n_inputs()));
    }
    for (i, den) in sys.f_den.iter().enumerate() {
        if den.degree().unwrap_or(0) != 0 {
            return Err(SynthError::Invalid(format!(
                "cancellation requires polynomial dynamics, denominator {i} is non-constant"
            )));
        }
    }
    let u_idx = sys.n_states();
    let mut f0 = Vec::new();
    let mut g = Vec::new();
    for (i, num) in sys.f_num.iter().enumerate() {
        if num.degree_in(u_idx) > 1 {
            return Err(SynthError::NonAffine { state: i });
        }
        let scale = 1.0 / sys.f_den[i].constant_term();
        let mut f0_terms = Vec::new();
        let mut g_terms = Vec::new();
        for (m, c) in num.terms() {
            if m.degree_of(u_idx) == 0 {
                f0_terms.push((m.clone(), c * scale));
            } else {
                let mut exps = m.exponents().to_vec();
                exps[u_idx] = 0;
                g_terms.push((crate::polyalg::Monomial::new(exps), c * scale));
            }
        }
        f0.push(Polynomial::from_terms(&sys.vars, f0_terms));
        g.push(Polynomial::from_terms(&sys.vars, g_terms));
    }
    cancellation_controller(v, &f0, &g, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::VariableSet;

    #[test]
    fn scalar_cancellation_reduces_to_linear_feedback() {
        // V = x², f0 = [0], g = [1], W = 2x²: p = -2x², q = 2x, u = -x.
        let vars = VariableSet::new(vec!["x"], vec!["u"]).unwrap();
        let x = Polynomial::var(&vars, 0);
        let v = &x * &x;
        let w = v.scale(2.0);
        let law = cancellation_controller(
            &v,
            &[Polynomial::zero(&vars)],
            &[Polynomial::constant(&vars, 1.0)],
            &w,
        )
        .unwrap();
        assert_eq!(law.p, (&x * &x).scale(-2.0));
        assert_eq!(law.q, x.scale(2.0));
        assert!(!law.sign_certified);

        let red = law.reduced();
        assert_eq!(red.p, x.scale(-2.0));
        assert_eq!(red.q, Polynomial::constant(&vars, 2.0));
        for xv in [-1.5, 0.2, 3.0] {
            assert!((red.eval(&[xv, 0.0]) + xv).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_denominator_detected() {
        // g = [0]: the input never reaches V̇
        let vars = VariableSet::new(vec!["x"], vec!["u"]).unwrap();
        let x = Polynomial::var(&vars, 0);
        let v = &x * &x;
        let err = cancellation_controller(
            &v,
            &[x.neg()],
            &[Polynomial::zero(&vars)],
            &v.scale(2.0),
        );
        assert!(matches!(err, Err(SynthError::ZeroCancellationDenominator)));
    }

    #[test]
    fn bad_cost_rejected() {
        let vars = VariableSet::new(vec!["x"], vec!["u"]).unwrap();
        let x = Polynomial::var(&vars, 0);
        let v = &x * &x;
        let g = [Polynomial::constant(&vars, 1.0)];
        // nonzero at the origin
        let w_off = &v + &Polynomial::constant(&vars, 1.0);
        assert!(matches!(
            cancellation_controller(&v, &[Polynomial::zero(&vars)], &g, &w_off),
            Err(SynthError::InvalidW(_))
        ));
        // negative away from the origin
        let w_neg = v.scale(-1.0);
        assert!(matches!(
            cancellation_controller(&v, &[Polynomial::zero(&vars)], &g, &w_neg),
            Err(SynthError::InvalidW(_))
        ));
    }

    #[test]
    fn two_state_cancellation_matches_hand_algebra() {
        // V = x1² + x2², f0 = [x2, 0], g = [0, 1], W = 2x2²:
        // grad(V)·f0 = 2x1x2, grad(V)·g = 2x2,
        // p = -(2x1x2 + 2x2²), q = 2x2, reduced u = -(x1 + x2).
        let vars = VariableSet::new(vec!["x1", "x2"], vec!["u"]).unwrap();
        let x1 = Polynomial::var(&vars, 0);
        let x2 = Polynomial::var(&vars, 1);
        let v = &(&x1 * &x1) + &(&x2 * &x2);
        let law = cancellation_controller(
            &v,
            &[x2.clone(), Polynomial::zero(&vars)],
            &[Polynomial::zero(&vars), Polynomial::constant(&vars, 1.0)],
            &(&x2 * &x2).scale(2.0),
        )
        .unwrap();
        assert_eq!(law.q, x2.scale(2.0));
        let red = law.reduced();
        // common factor of p = -2x2(x1 + x2) and q = 2x2 is x2
        assert_eq!(red.q, Polynomial::constant(&vars, 2.0));
        for (a, b) in [(0.5, -1.0), (1.0, 2.0)] {
            let pt = [a, b, 0.0];
            assert!((red.eval(&pt) + (a + b)).abs() < 1e-12);
        }
    }
}
