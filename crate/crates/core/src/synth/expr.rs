//! The core certificate expression: cleared-denominator Lyapunov decrease
//! with the controller coupling, constraint multipliers and ball multiplier.

use crate::polyalg::{Polynomial, VarSubset};
use crate::sosprog::{DecisionPolynomial, SosProgram};

use super::{ball_constraint, product, product_except, SynthError, SystemModel};

/// Fresh multipliers created alongside the expression.
pub struct CoreParts {
    /// `D·(−grad(V)·f − γ·V) − Σ λ_k(q_k u_k − p_k) − Σ t_j h_j − Σ s_i g_i
    /// − s_ball·(R − Σx_i²)`, where `D = Π f_den`.
    pub expr: DecisionPolynomial,
    /// SOS multipliers on the inequality constraints, in order.
    pub s: Vec<DecisionPolynomial>,
    /// Free multipliers on the equality constraints.
    pub t: Vec<DecisionPolynomial>,
    /// SOS multiplier on the ball constraint; absent when no ball was requested.
    pub s_ball: Option<DecisionPolynomial>,
}

/// Assemble the core expression.
///
/// Exactly one of the multiplier side (`lambda`) and the controller side
/// (`p`, `q`) may carry decision variables; both-decision is rejected since
/// their product would make the program bilinear. Pass `r = None` to drop
/// the ball multiplier (global certificate).
#[allow(clippy::too_many_arguments)]
pub fn build_core_expression(
    prog: &mut SosProgram,
    sys: &SystemModel,
    v: &DecisionPolynomial,
    lambda: &[DecisionPolynomial],
    p: &[DecisionPolynomial],
    q: &[DecisionPolynomial],
    gamma: f64,
    r: Option<f64>,
    d_t: usize,
    d_s: usize,
) -> Result<CoreParts, SynthError> {
    let vars = &sys.vars;
    let nx = sys.n_states();
    let nu = sys.n_inputs();
    if lambda.len() != nu || p.len() != nu || q.len() != nu {
        return Err(crate::polyalg::PolyError::LengthMismatch { expected: nu, got: lambda.len() }
            .into());
    }
    let lambda_dec = lambda.iter().any(DecisionPolynomial::has_decision_vars);
    let ctrl_dec = p.iter().chain(q).any(DecisionPolynomial::has_decision_vars);
    if lambda_dec && ctrl_dec {
        return Err(SynthError::NonConvexCombination);
    }

    // D·grad(V)·f with denominators cleared: Σ_i ∂V/∂x_i · f_num_i · Π_{j≠i} f_den_j.
    let mut expr = DecisionPolynomial::zero(vars);
    for i in 0..nx {
        let cleared = sys.f_num[i].try_mul(&product_except(vars, &sys.f_den, i)?)?;
        expr = expr.sub(&v.partial(i).mul_poly(&cleared)?)?;
    }
    if gamma != 0.0 {
        let d = product(vars, &sys.f_den)?;
        expr = expr.sub(&v.mul_poly(&d)?.scale(gamma))?;
    }

    for k in 0..nu {
        let u = Polynomial::var(vars, nx + k);
        let coupling = q[k].mul_poly(&u)?.sub(&p[k])?;
        expr = expr.sub(&DecisionPolynomial::try_mul(&lambda[k], &coupling)?)?;
    }

    let mut t = Vec::with_capacity(sys.h_eq.len());
    for h in &sys.h_eq {
        let tj = prog.declare_poly(VarSubset::All, 0, d_t)?;
        expr = expr.sub(&tj.mul_poly(h)?)?;
        t.push(tj);
    }

    let mut s = Vec::with_capacity(sys.g_ineq.len());
    for g in &sys.g_ineq {
        let si = prog.declare_poly(VarSubset::All, 0, d_s)?;
        prog.add_sos(si.clone(), VarSubset::All, d_s.div_ceil(2))?;
        expr = expr.sub(&si.mul_poly(g)?)?;
        s.push(si);
    }

    // Any feasible certificate has E(0) = 0 (every term at the origin is
    // nonpositive), which forces s_ball(0) = 0 and hence, since s_ball is
    // SOS, a vanishing gradient too. Declaring s_ball from degree 2 removes
    // those forced-singular Gram rows and restores a strictly feasible
    // interior for the solver.
    let s_ball = match r {
        Some(r) => {
            let sb = prog.declare_poly(VarSubset::All, 2, d_s.max(2))?;
            prog.add_sos_with_window(sb.clone(), VarSubset::All, 1, d_s.max(2).div_ceil(2))?;
            expr = expr.sub(&sb.mul_poly(&ball_constraint(vars, r))?)?;
            Some(sb)
        }
        None => None,
    };

    Ok(CoreParts { expr, s, t, s_ball })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::{Monomial, VariableSet};
    use crate::sosprog::DecisionPolynomial as DP;
    use std::sync::Arc;

    fn scalar_system() -> SystemModel {
        // ẋ = -x + u
        let vars = VariableSet::new(vec!["x"], vec!["u"]).unwrap();
        let x = Polynomial::var(&vars, 0);
        let u = Polynomial::var(&vars, 1);
        SystemModel {
            name: "scalar".to_string(),
            vars: Arc::clone(&vars),
            f_num: vec![&u - &x],
            f_den: vec![Polynomial::constant(&vars, 1.0)],
            g_ineq: vec![],
            h_eq: vec![],
            aux_rule: None,
        }
    }

    #[test]
    fn bare_expression_matches_hand_algebra() {
        // V = x², ctrl p=-x, q=1, λ = -2x fixed, γ=0, no ball:
        // E = -2x(u - x) - (-2x)(u + x) = 2x² - 2xu + 2xu + 2x² = 4x².
        let sys = scalar_system();
        let vars = &sys.vars;
        let x = Polynomial::var(vars, 0);
        let v = DP::from_poly(&(&x * &x));
        let lam = DP::from_poly(&x.scale(-2.0));
        let p = DP::from_poly(&x.neg());
        let q = DP::from_poly(&Polynomial::constant(vars, 1.0));

        let mut prog = SosProgram::new(vars);
        let parts =
            build_core_expression(&mut prog, &sys, &v, &[lam], &[p], &[q], 0.0, None, 2, 2)
                .unwrap();
        assert!(parts.s_ball.is_none());
        let e = parts.expr.instantiate(&[]);
        let x2 = Monomial::new(vec![2, 0]);
        assert_eq!(e.coefficient(&x2), 4.0);
        assert_eq!(e.n_terms(), 1);
    }

    #[test]
    fn both_sides_decision_rejected() {
        let sys = scalar_system();
        let vars = &sys.vars;
        let mut prog = SosProgram::new(vars);
        let v = DP::from_poly(&{
            let x = Polynomial::var(vars, 0);
            &x * &x
        });
        let lam = prog.declare_poly(VarSubset::All, 0, 0).unwrap();
        let p = prog.declare_poly(VarSubset::States, 1, 1).unwrap();
        let q = DP::from_poly(&Polynomial::constant(vars, 1.0));
        let err = build_core_expression(
            &mut prog,
            &sys,
            &v,
            &[lam],
            &[p],
            &[q],
            0.0,
            Some(1.0),
            2,
            2,
        );
        assert!(matches!(err, Err(SynthError::NonConvexCombination)));
    }
}
