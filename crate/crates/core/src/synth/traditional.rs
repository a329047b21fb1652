//! Baseline alternation on the control-affine stability condition
//! −∂V/∂x·f·q − ∂V/∂x·g·p ∈ Σ: fix the controller to find V, then fix V to
//! find the controller, under the same radius/decay schedule as the main
//! method.

use crate::polyalg::{monomial_basis, Monomial, Polynomial, VarSubset};
use crate::sdpcore::{solve, SolveStatus};
use crate::sosprog::{AffineExpr, DecisionPolynomial, SosProgram};

use super::algorithm::record;
use super::{
    ball_constraint, certify_denominators, normalize_lyapunov, product_except,
    wrap_initial, CertBundle, DegreeSet, HistoryRecord, IterateSnapshot, RationalController,
    StepArtifacts, StepResult, SynthError, SynthesisConfig, SynthesisResult, SystemModel,
};

/// Control-affine split `ẋ_i = (F0_i + G_i·u) / D` with cleared
/// denominators: `F0_i = f0num_i·Π_{j≠i} den_j`, `G_i` likewise.
struct AffineSplit {
    f0: Vec<Polynomial>,
    g: Vec<Polynomial>,
}

fn affine_split(sys: &SystemModel) -> Result<AffineSplit, SynthError> {
    let vars = &sys.vars;
    let nx = sys.n_states();
    if sys.n_inputs() != 1 {
        return Err(SynthError::MultiInputTraditional(sys.n_inputs()));
    }
    let u_idx = nx;
    let mut f0 = Vec::with_capacity(nx);
    let mut g = Vec::with_capacity(nx);
    for (i, num) in sys.f_num.iter().enumerate() {
        if num.degree_in(u_idx) > 1 {
            return Err(SynthError::NonAffine { state: i });
        }
        let mut f0_terms = Vec::new();
        let mut g_terms = Vec::new();
        for (m, c) in num.terms() {
            if m.degree_of(u_idx) == 0 {
                f0_terms.push((m.clone(), c));
            } else {
                let mut exps = m.exponents().to_vec();
                exps[u_idx] = 0;
                g_terms.push((Monomial::new(exps), c));
            }
        }
        let clear = product_except(vars, &sys.f_den, i)?;
        f0.push(Polynomial::from_terms(vars, f0_terms).try_mul(&clear)?);
        g.push(Polynomial::from_terms(vars, g_terms).try_mul(&clear)?);
    }
    Ok(AffineSplit { f0, g })
}

/// Multiplier subset: state-only when no aux variables exist, otherwise the
/// full set (the condition itself never involves the input).
fn multiplier_subset(sys: &SystemModel) -> VarSubset {
    if sys.vars.n_aux() == 0 {
        VarSubset::States
    } else {
        VarSubset::All
    }
}

struct TradBuilt {
    prog: SosProgram,
    v: DecisionPolynomial,
    p: DecisionPolynomial,
    q: DecisionPolynomial,
    s: Vec<DecisionPolynomial>,
    t: Vec<DecisionPolynomial>,
    s_ball: DecisionPolynomial,
}

/// Assemble −Σ ∂V_i·(F0_i·q + G_i·p) − γ·V·D·q − multipliers ∈ Σ.
/// Exactly one of V and (p, q) is a decision object per call.
#[allow(clippy::too_many_arguments)]
fn build_condition(
    sys: &SystemModel,
    split: &AffineSplit,
    v: DecisionPolynomial,
    p: DecisionPolynomial,
    q: DecisionPolynomial,
    mut prog: SosProgram,
    degrees: &DegreeSet,
    r: f64,
    gamma: f64,
) -> Result<TradBuilt, SynthError> {
    let vars = &sys.vars;
    let subset = multiplier_subset(sys);
    let mut expr = DecisionPolynomial::zero(vars);
    let v_dec = v.has_decision_vars();
    for i in 0..sys.n_states() {
        // ∂V_i·F0_i·q and ∂V_i·G_i·p with only one decision side
        let dv = v.partial(i);
        if v_dec {
            let q_fixed = q.instantiate(&[]);
            let p_fixed = p.instantiate(&[]);
            expr = expr.sub(&dv.mul_poly(&split.f0[i].try_mul(&q_fixed)?)?)?;
            expr = expr.sub(&dv.mul_poly(&split.g[i].try_mul(&p_fixed)?)?)?;
        } else {
            let dv_fixed = dv.instantiate(&[]);
            expr = expr.sub(&q.mul_poly(&split.f0[i].try_mul(&dv_fixed)?)?)?;
            expr = expr.sub(&p.mul_poly(&split.g[i].try_mul(&dv_fixed)?)?)?;
        }
    }
    if gamma != 0.0 && !v_dec {
        let d = super::product(vars, &sys.f_den)?;
        let v_fixed = v.instantiate(&[]);
        expr = expr.sub(&q.mul_poly(&v_fixed.try_mul(&d)?)?.scale(gamma))?;
    }

    let mut t = Vec::new();
    for h in &sys.h_eq {
        let tj = prog.declare_poly(subset, 0, degrees.d_t)?;
        expr = expr.sub(&tj.mul_poly(h)?)?;
        t.push(tj);
    }
    let mut s = Vec::new();
    for g in &sys.g_ineq {
        let si = prog.declare_poly(subset, 0, degrees.d_s)?;
        prog.add_sos(si.clone(), subset, degrees.d_s.div_ceil(2))?;
        expr = expr.sub(&si.mul_poly(g)?)?;
        s.push(si);
    }
    // s_ball(0) = 0 and a vanishing gradient are forced at any feasible
    // point (see the core expression builder); start it at degree 2
    let s_ball = prog.declare_poly(subset, 2, degrees.d_s.max(2))?;
    prog.add_sos_with_window(s_ball.clone(), subset, 1, degrees.d_s.max(2).div_ceil(2))?;
    expr = expr.sub(&s_ball.mul_poly(&ball_constraint(vars, r))?)?;

    let half = (expr.degree().unwrap_or(0) as usize).div_ceil(2);
    prog.add_sos_with_window(expr, subset, 1, half)?;
    Ok(TradBuilt { prog, v, p, q, s, t, s_ball })
}

enum TradStep {
    /// (a) fix (p, q), find V.
    Lyapunov,
    /// (b) fix V, find (p, q).
    Controller,
}

#[allow(clippy::too_many_arguments)]
fn run_trad_step(
    sys: &SystemModel,
    split: &AffineSplit,
    which: TradStep,
    ctrl: &RationalController,
    v_fixed: Option<&Polynomial>,
    cfg: &SynthesisConfig,
    degrees: &DegreeSet,
    r: f64,
    gamma: f64,
) -> Result<StepResult, SynthError> {
    let vars = &sys.vars;
    let mut prog = SosProgram::new(vars);
    let (v, p, q, gamma_used) = match which {
        TradStep::Lyapunov => {
            let v = super::steps::declare_lyapunov(&mut prog, cfg, degrees.d_v, true)?;
            (
                v,
                DecisionPolynomial::from_poly(&ctrl.p[0]),
                DecisionPolynomial::from_poly(&ctrl.q[0]),
                0.0,
            )
        }
        TradStep::Controller => {
            let v = DecisionPolynomial::from_poly(v_fixed.expect("controller step needs V"));
            let p = prog.declare_poly(VarSubset::States, 1, degrees.d_p.max(1))?;
            let q = prog.declare_poly(VarSubset::States, 0, degrees.d_q)?;
            let const_mono = Monomial::constant(vars.len());
            prog.add_eq(q.coefficient(&const_mono).add(&AffineExpr::constant(-1.0)));
            if cfg.polynomial_only {
                for m in monomial_basis(vars, VarSubset::States, 1, degrees.d_q)? {
                    prog.add_eq(q.coefficient(&m));
                }
            } else if degrees.d_q > 0 {
                let margin = q.sub(&DecisionPolynomial::from_poly(&Polynomial::constant(
                    vars,
                    cfg.eps_eta,
                )))?;
                prog.add_sos(margin, VarSubset::States, degrees.d_q.div_ceil(2))?;
            }
            (v, p, q, gamma)
        }
    };
    let built = build_condition(sys, split, v, p, q, prog, degrees, r, gamma_used)?;

    let sdp = built.prog.compile();
    let sol = solve(&sdp, &cfg.solve)?;
    match sol.status {
        SolveStatus::Feasible => {
            let lifted = built.prog.lift_solution(&sol)?;
            let a = &lifted.assignment;
            let v_poly = built.v.instantiate(a);
            let p_poly = built.p.instantiate(a);
            let q_poly = built.q.instantiate(a);
            let controller = RationalController::new(vec![p_poly], vec![q_poly])?;
            let gram_residual = lifted.residuals.iter().cloned().fold(0.0f64, f64::max);
            let main_idx = lifted.certificates.len() - 1;
            let cert = CertBundle {
                v: v_poly,
                lambda: vec![Polynomial::zero(vars)],
                s: built.s.iter().map(|x| x.instantiate(a)).collect(),
                t: built.t.iter().map(|x| x.instantiate(a)).collect(),
                s_ball: built.s_ball.instantiate(a),
                r,
                gamma: gamma_used,
                main_gram: lifted.certificates[main_idx].clone(),
                gram_residual,
                identity_residual: lifted.residuals[main_idx],
            };
            Ok(StepResult::Feasible(Box::new(StepArtifacts {
                cert,
                controller,
                lambda: vec![Polynomial::zero(vars)],
                solver_iterations: sol.iterations,
                degenerate_lambda: false,
            })))
        }
        SolveStatus::Infeasible => Ok(StepResult::Infeasible {
            warning: false,
            detail: format!("infeasible ({})", sol.solver_status),
        }),
        SolveStatus::Unknown => Ok(StepResult::Infeasible {
            warning: true,
            detail: format!(
                "solver undecided ({}), treated as infeasible (eq res {:.3e}, min eig {:.3e})",
                sol.solver_status, sol.residuals.0, sol.min_block_eigenvalue
            ),
        }),
    }
}

/// Baseline iteration on the control-affine condition, same schedule and
/// degree escalation as [`synthesize`](super::synthesize). Single-input
/// systems only; the input dependence must be affine.
pub fn traditional_iterate(
    provider: &dyn super::SystemProvider,
    k0: &[Polynomial],
    cfg: &SynthesisConfig,
) -> Result<SynthesisResult, SynthError> {
    let mut ctrl = wrap_initial(k0)?;
    let mut degrees = cfg.degrees;
    let mut r = cfg.r0;
    let mut gamma = cfg.gamma0;
    let mut history: Vec<HistoryRecord> = Vec::new();
    let mut iterates: Vec<IterateSnapshot> = Vec::new();
    let warnings = Vec::new();
    let mut cert: Option<CertBundle> = None;
    let mut feasible_iterations = 0usize;
    let mut converged = false;

    if cfg.iter_max == 0 {
        return Ok(SynthesisResult {
            controller: ctrl,
            cert: None,
            final_r: r,
            final_gamma: gamma,
            feasible_iterations: 0,
            history,
            iterates,
            warnings,
            converged: false,
        });
    }

    // affine structure is radius-independent; validate once up front
    let probe = provider.model(r);
    let _ = affine_split(&probe)?;

    let mut outer = 0usize;
    'outer: loop {
        let mut inner = 0usize;
        while inner < cfg.iter_max {
            let sys = provider.model(r);
            certify_denominators(&sys, r, cfg)?;
            let split = affine_split(&sys)?;

            let step_a =
                run_trad_step(&sys, &split, TradStep::Lyapunov, &ctrl, None, cfg, &degrees, r, gamma)?;
            let (art_a, rec_a) = record(&step_a, outer, inner, 1, r, gamma, degrees);
            history.push(rec_a);
            let art_a = match art_a {
                Some(a) => a,
                None => break,
            };

            let step_b = run_trad_step(
                &sys,
                &split,
                TradStep::Controller,
                &ctrl,
                Some(&art_a.cert.v),
                cfg,
                &degrees,
                r,
                gamma,
            )?;
            let (art_b, rec_b) = record(&step_b, outer, inner, 2, r, gamma, degrees);
            history.push(rec_b);
            let art_b = match art_b {
                Some(a) => a,
                None => break,
            };

            if ctrl.relative_distance(&art_b.controller) < cfg.convergence_tol {
                converged = true;
            }
            ctrl = art_b.controller.clone();
            cert = Some(art_b.cert.clone());
            iterates.push(IterateSnapshot {
                index: feasible_iterations,
                r,
                gamma,
                controller: ctrl.clone(),
                v: art_b.cert.v.clone(),
                v_normalized: normalize_lyapunov(&art_b.cert.v),
                cert: art_b.cert.clone(),
            });
            feasible_iterations += 1;
            r += cfg.r_inc;
            gamma += cfg.gamma_inc;
            inner += 1;
        }
        if inner >= cfg.iter_max {
            break 'outer;
        }
        if degrees.at_max(cfg) {
            if feasible_iterations == 0 {
                return Err(SynthError::InitialControllerNotCertifiable);
            }
            break 'outer;
        }
        degrees.escalate(cfg);
        outer += 1;
    }

    Ok(SynthesisResult {
        controller: ctrl,
        cert,
        final_r: r,
        final_gamma: gamma,
        feasible_iterations,
        history,
        iterates,
        warnings,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::VariableSet;
    use std::sync::Arc;

    #[test]
    fn non_affine_rejected() {
        // ẋ = -x + x²u³
        let vars = VariableSet::new(vec!["x"], vec!["u"]).unwrap();
        let x = Polynomial::var(&vars, 0);
        let mut cubic = Polynomial::monomial(&vars, Monomial::new(vec![2, 3]), 1.0);
        cubic = &cubic - &x;
        let sys = SystemModel {
            name: "nonaffine".to_string(),
            vars: Arc::clone(&vars),
            f_num: vec![cubic],
            f_den: vec![Polynomial::constant(&vars, 1.0)],
            g_ineq: vec![],
            h_eq: vec![],
            aux_rule: None,
        };
        let err = traditional_iterate(&sys, &[x.neg()], &SynthesisConfig::default());
        assert!(matches!(err, Err(SynthError::NonAffine { state: 0 })));
    }

    #[test]
    fn affine_scalar_progresses() {
        let vars = VariableSet::new(vec!["x"], vec!["u"]).unwrap();
        let x = Polynomial::var(&vars, 0);
        let u = Polynomial::var(&vars, 1);
        let sys = SystemModel {
            name: "scalar".to_string(),
            vars: Arc::clone(&vars),
            f_num: vec![&u - &x],
            f_den: vec![Polynomial::constant(&vars, 1.0)],
            g_ineq: vec![],
            h_eq: vec![],
            aux_rule: None,
        };
        let cfg = SynthesisConfig { iter_max: 2, ..SynthesisConfig::default() };
        let res = traditional_iterate(&sys, &[x.scale(-2.0)], &cfg).unwrap();
        assert_eq!(res.feasible_iterations, 2);
        assert!((res.final_r - 1.2).abs() < 1e-12);
    }
}
