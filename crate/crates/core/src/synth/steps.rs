//! The two convex steps of the iteration: Step 1 fixes the controller and
//! searches (V, λ); Step 2 fixes λ and searches (V, p, q) under the decay
//! and ball constraints.

use crate::polyalg::{monomial_basis, Monomial, Polynomial, VarSubset};
use crate::sdpcore::{solve, SdpProblem, SolveStatus};
use crate::sosprog::{DecisionPolynomial, LiftedSolution, SosConstraintHandle, SosProgram};

use super::{
    build_core_expression, sum_of_squares_states, CertBundle, CoreParts, DegreeSet,
    RationalController, SynthError, SynthesisConfig, SystemModel,
};

/// Everything a feasible step produces.
#[derive(Debug, Clone)]
pub struct StepArtifacts {
    pub cert: CertBundle,
    pub controller: RationalController,
    pub lambda: Vec<Polynomial>,
    pub solver_iterations: u32,
    /// All λ_k lifted to (or were given as) zero: Step 2 is decoupled from
    /// the controller and cannot improve its certificate.
    pub degenerate_lambda: bool,
}

#[derive(Debug)]
pub enum StepResult {
    Feasible(Box<StepArtifacts>),
    /// Solver said infeasible, or could not decide (`warning` set in the
    /// latter case, which the schedule treats as infeasible).
    Infeasible { warning: bool, detail: String },
}

struct BuiltStep {
    prog: SosProgram,
    v: DecisionPolynomial,
    lambda: Vec<DecisionPolynomial>,
    p: Vec<DecisionPolynomial>,
    q: Vec<DecisionPolynomial>,
    parts: CoreParts,
    main: SosConstraintHandle,
}

pub(super) fn declare_lyapunov(
    prog: &mut SosProgram,
    cfg: &SynthesisConfig,
    d_v: usize,
    pin_scale: bool,
) -> Result<DecisionPolynomial, SynthError> {
    let vars = prog.vars().clone();
    let v = prog.declare_poly(VarSubset::States, 2, d_v)?;
    let strict = DecisionPolynomial::from_poly(&sum_of_squares_states(&vars).scale(cfg.eps_rho));
    // positive-definiteness: V - eps·Σx² SOS; basis from degree 1 since the
    // expression has no constant term
    prog.add_sos_with_window(v.sub(&strict)?, VarSubset::States, 1, d_v.div_ceil(2))?;
    if pin_scale {
        // When every decision object enters the certificate linearly the
        // program is a cone, and the solver may park on a vanishingly small
        // near-feasible point that slips under absolute tolerances. Pinning
        // the quadratic trace of V to the state count fixes the scale
        // without excluding any certificate (they scale freely).
        let nx = vars.n_states();
        let mut tr = crate::sosprog::AffineExpr::constant(-(nx as f64));
        for i in 0..nx {
            let mut exps = vec![0u32; vars.len()];
            exps[i] = 2;
            tr = tr.add(&v.coefficient(&Monomial::new(exps)));
        }
        prog.add_eq(tr);
    }
    Ok(v)
}

fn add_main_sos(
    prog: &mut SosProgram,
    parts: &CoreParts,
) -> Result<SosConstraintHandle, SynthError> {
    let half = (parts.expr.degree().unwrap_or(0) as usize).div_ceil(2);
    // with a ball multiplier present, E(0) = 0 is forced, so the constant
    // Gram row is structurally zero and only degrades conditioning
    let dmin = usize::from(parts.s_ball.is_some());
    Ok(prog.add_sos_with_window(parts.expr.clone(), VarSubset::All, dmin, half)?)
}

fn build_step1(
    sys: &SystemModel,
    ctrl: &RationalController,
    cfg: &SynthesisConfig,
    degrees: &DegreeSet,
    r: f64,
) -> Result<BuiltStep, SynthError> {
    let vars = &sys.vars;
    let mut prog = SosProgram::new(vars);
    let v = declare_lyapunov(&mut prog, cfg, degrees.d_v, true)?;
    let mut lambda = Vec::with_capacity(sys.n_inputs());
    for _ in 0..sys.n_inputs() {
        lambda.push(prog.declare_poly(VarSubset::All, 0, degrees.d_lambda)?);
    }
    let p: Vec<_> = ctrl.p.iter().map(DecisionPolynomial::from_poly).collect();
    let q: Vec<_> = ctrl.q.iter().map(DecisionPolynomial::from_poly).collect();
    // re-certify the fixed denominators' strict positivity
    for qk in &ctrl.q {
        if qk.degree().unwrap_or(0) > 0 {
            let margin = qk.try_sub(&Polynomial::constant(vars, cfg.eps_eta))?;
            let half = (margin.degree().unwrap_or(0) as usize).div_ceil(2);
            prog.add_sos(DecisionPolynomial::from_poly(&margin), VarSubset::States, half)?;
        }
    }
    let parts = build_core_expression(
        &mut prog,
        sys,
        &v,
        &lambda,
        &p,
        &q,
        0.0,
        Some(r),
        degrees.d_t,
        degrees.d_s,
    )?;
    let main = add_main_sos(&mut prog, &parts)?;
    Ok(BuiltStep { prog, v, lambda, p, q, parts, main })
}

fn build_step2(
    sys: &SystemModel,
    lambda_star: &[Polynomial],
    cfg: &SynthesisConfig,
    degrees: &DegreeSet,
    r: f64,
    gamma: f64,
) -> Result<BuiltStep, SynthError> {
    let vars = &sys.vars;
    let mut prog = SosProgram::new(vars);
    let v = declare_lyapunov(&mut prog, cfg, degrees.d_v, false)?;
    let lambda: Vec<_> = lambda_star.iter().map(DecisionPolynomial::from_poly).collect();

    let mut p = Vec::with_capacity(sys.n_inputs());
    let mut q = Vec::with_capacity(sys.n_inputs());
    let const_mono = Monomial::constant(vars.len());
    for _ in 0..sys.n_inputs() {
        // numerator without constant term so u(0) = 0
        p.push(prog.declare_poly(VarSubset::States, 1, degrees.d_p.max(1))?);
        let qk = prog.declare_poly(VarSubset::States, 0, degrees.d_q)?;
        // q_k(0) = 1
        prog.add_eq(
            qk.coefficient(&const_mono)
                .add(&crate::sosprog::AffineExpr::constant(-1.0)),
        );
        if cfg.polynomial_only {
            // pin every non-constant coefficient to zero
            for m in monomial_basis(vars, VarSubset::States, 1, degrees.d_q)? {
                prog.add_eq(qk.coefficient(&m));
            }
        } else if degrees.d_q > 0 {
            // strict positivity: q_k - eps_eta SOS
            let margin = qk.sub(&DecisionPolynomial::from_poly(&Polynomial::constant(
                vars,
                cfg.eps_eta,
            )))?;
            prog.add_sos(margin, VarSubset::States, degrees.d_q.div_ceil(2))?;
        }
        q.push(qk);
    }

    let parts = build_core_expression(
        &mut prog,
        sys,
        &v,
        &lambda,
        &p,
        &q,
        gamma,
        Some(r),
        degrees.d_t,
        degrees.d_s,
    )?;
    let main = add_main_sos(&mut prog, &parts)?;
    Ok(BuiltStep { prog, v, lambda, p, q, parts, main })
}

fn lift_artifacts(
    built: &BuiltStep,
    lifted: &LiftedSolution,
    r: f64,
    gamma: f64,
    solver_iterations: u32,
) -> Result<StepArtifacts, SynthError> {
    let a = &lifted.assignment;
    let v = built.v.instantiate(a);
    let lambda: Vec<Polynomial> = built.lambda.iter().map(|l| l.instantiate(a)).collect();
    let p: Vec<Polynomial> = built.p.iter().map(|pk| pk.instantiate(a)).collect();
    let q: Vec<Polynomial> = built.q.iter().map(|qk| qk.instantiate(a)).collect();
    let s: Vec<Polynomial> = built.parts.s.iter().map(|s| s.instantiate(a)).collect();
    let t: Vec<Polynomial> = built.parts.t.iter().map(|t| t.instantiate(a)).collect();
    let s_ball = built
        .parts
        .s_ball
        .as_ref()
        .map(|s| s.instantiate(a))
        .unwrap_or_else(|| Polynomial::zero(built.v.vars()));

    let controller = RationalController::new(p, q)?;
    let degenerate_lambda = lambda.iter().all(|l| l.coeff_norm() < 1e-9);
    let gram_residual = lifted.residuals.iter().cloned().fold(0.0f64, f64::max);
    let cert = CertBundle {
        v,
        lambda: lambda.clone(),
        s,
        t,
        s_ball,
        r,
        gamma,
        main_gram: lifted.certificates[built.main.0].clone(),
        gram_residual,
        identity_residual: lifted.residuals[built.main.0],
    };
    Ok(StepArtifacts { cert, controller, lambda, solver_iterations, degenerate_lambda })
}

fn run_built(
    built: BuiltStep,
    cfg: &SynthesisConfig,
    r: f64,
    gamma: f64,
) -> Result<StepResult, SynthError> {
    let sdp = built.prog.compile();
    let sol = solve(&sdp, &cfg.solve)?;
    match sol.status {
        SolveStatus::Feasible => {
            let lifted = built.prog.lift_solution(&sol)?;
            let artifacts = lift_artifacts(&built, &lifted, r, gamma, sol.iterations)?;
            Ok(StepResult::Feasible(Box::new(artifacts)))
        }
        SolveStatus::Infeasible => Ok(StepResult::Infeasible {
            warning: false,
            detail: format!(
                "infeasible ({}), certificate violation {:.3e}",
                sol.solver_status,
                sol.certificate.map(|c| c.violation).unwrap_or(f64::NAN)
            ),
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

/// Fix the controller, search a Lyapunov function and multipliers λ.
pub fn run_step1(
    sys: &SystemModel,
    ctrl: &RationalController,
    cfg: &SynthesisConfig,
    degrees: &DegreeSet,
    r: f64,
) -> Result<StepResult, SynthError> {
    let built = build_step1(sys, ctrl, cfg, degrees, r)?;
    match run_built(built, cfg, r, 0.0)? {
        StepResult::Feasible(mut art) => {
            // the certificate belongs to the controller that was fixed
            art.controller = ctrl.clone();
            Ok(StepResult::Feasible(art))
        }
        other => Ok(other),
    }
}

/// Fix λ, search a Lyapunov function and controller (p, q) under the decay
/// rate γ and ball radius R.
pub fn run_step2(
    sys: &SystemModel,
    lambda_star: &[Polynomial],
    cfg: &SynthesisConfig,
    degrees: &DegreeSet,
    r: f64,
    gamma: f64,
) -> Result<StepResult, SynthError> {
    let built = build_step2(sys, lambda_star, cfg, degrees, r, gamma)?;
    run_built(built, cfg, r, gamma)
}

/// Compile a step without solving, for program export.
pub fn compile_step1(
    sys: &SystemModel,
    ctrl: &RationalController,
    cfg: &SynthesisConfig,
    degrees: &DegreeSet,
    r: f64,
) -> Result<SdpProblem, SynthError> {
    Ok(build_step1(sys, ctrl, cfg, degrees, r)?.prog.compile())
}

/// Compile Step 2 without solving, for program export.
pub fn compile_step2(
    sys: &SystemModel,
    lambda_star: &[Polynomial],
    cfg: &SynthesisConfig,
    degrees: &DegreeSet,
    r: f64,
    gamma: f64,
) -> Result<SdpProblem, SynthError> {
    Ok(build_step2(sys, lambda_star, cfg, degrees, r, gamma)?.prog.compile())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::VariableSet;
    use std::sync::Arc;

    fn scalar(f_expr: fn(&Polynomial, &Polynomial) -> Polynomial) -> SystemModel {
        let vars = VariableSet::new(vec!["x"], vec!["u"]).unwrap();
        let x = Polynomial::var(&vars, 0);
        let u = Polynomial::var(&vars, 1);
        SystemModel {
            name: "scalar".to_string(),
            vars: Arc::clone(&vars),
            f_num: vec![f_expr(&x, &u)],
            f_den: vec![Polynomial::constant(&vars, 1.0)],
            g_ineq: vec![],
            h_eq: vec![],
            aux_rule: None,
        }
    }

    fn quick_cfg() -> SynthesisConfig {
        SynthesisConfig {
            degrees: DegreeSet { d_p: 1, d_q: 0, d_v: 2, d_lambda: 2, d_t: 2, d_s: 2 },
            ..SynthesisConfig::default()
        }
    }

    #[test]
    fn step1_scalar_stable() {
        // ẋ = -x + u with u = -x: closed loop ẋ = -2x, any c·x² works.
        let sys = scalar(|x, u| u - x);
        let vars = &sys.vars;
        let ctrl = RationalController::new(
            vec![Polynomial::var(vars, 0).neg()],
            vec![Polynomial::constant(vars, 1.0)],
        )
        .unwrap();
        let cfg = quick_cfg();
        let res = run_step1(&sys, &ctrl, &cfg, &cfg.degrees, 1.0).unwrap();
        let art = match res {
            StepResult::Feasible(a) => a,
            StepResult::Infeasible { detail, .. } => panic!("expected feasible: {detail}"),
        };
        // V ≈ c·x² with c > 0
        let c = art.cert.v.coefficient(&Monomial::new(vec![2, 0]));
        assert!(c > 0.0, "V = {}", art.cert.v);
        assert!(art.cert.identity_residual < 1e-6);
        assert!(!art.degenerate_lambda);
        // sample V̇ < 0 on the closed loop away from 0
        for xv in [-0.9f64, -0.3, 0.4, 0.8] {
            let u = ctrl.eval(&[xv])[0];
            let vdot = art.cert.v.partial(0).evaluate(&[xv, 0.0]) * (-xv + u);
            assert!(vdot < 0.0, "vdot at {xv} is {vdot}");
        }
    }

    #[test]
    fn step1_unstable_infeasible() {
        // ẋ = x + u with u = +x: closed loop ẋ = 2x diverges.
        let sys = scalar(|x, u| x + u);
        let vars = &sys.vars;
        let ctrl = RationalController::new(
            vec![Polynomial::var(vars, 0)],
            vec![Polynomial::constant(vars, 1.0)],
        )
        .unwrap();
        let cfg = quick_cfg();
        let res = run_step1(&sys, &ctrl, &cfg, &cfg.degrees, 1.0).unwrap();
        assert!(matches!(res, StepResult::Infeasible { .. }));
    }

    #[test]
    fn step2_from_step1_lambda() {
        let sys = scalar(|x, u| u - x);
        let vars = &sys.vars;
        let ctrl = RationalController::new(
            vec![Polynomial::var(vars, 0).neg()],
            vec![Polynomial::constant(vars, 1.0)],
        )
        .unwrap();
        let cfg = quick_cfg();
        let art = match run_step1(&sys, &ctrl, &cfg, &cfg.degrees, 1.0).unwrap() {
            StepResult::Feasible(a) => a,
            _ => panic!("step 1 infeasible"),
        };
        let res = run_step2(&sys, &art.lambda, &cfg, &cfg.degrees, 1.0, 0.1).unwrap();
        let art2 = match res {
            StepResult::Feasible(a) => a,
            StepResult::Infeasible { detail, .. } => panic!("expected feasible: {detail}"),
        };
        // certified closed loop at γ = 0.1: V̇ ≤ -0.1·V on the ball
        let c2 = &art2.controller;
        assert!((c2.q()[0].constant_term() - 1.0).abs() < 1e-9);
        for xv in [-0.9f64, -0.2, 0.5] {
            let u = c2.eval(&[xv])[0];
            let v = art2.cert.v.evaluate(&[xv, 0.0]);
            let vdot = art2.cert.v.partial(0).evaluate(&[xv, 0.0]) * (-xv + u);
            assert!(vdot <= -0.1 * v + 1e-7, "decay violated at {xv}");
        }
    }

    #[test]
    fn step2_zero_lambda_degenerate() {
        // input-free ẋ = -x: with λ = 0 the controller decouples entirely
        let sys = scalar(|x, _u| x.neg());
        let vars = &sys.vars;
        let zero_lambda = vec![Polynomial::zero(vars)];
        let cfg = quick_cfg();
        let res = run_step2(&sys, &zero_lambda, &cfg, &cfg.degrees, 1.0, 0.0).unwrap();
        match res {
            StepResult::Feasible(a) => assert!(a.degenerate_lambda),
            StepResult::Infeasible { detail, .. } => panic!("expected feasible: {detail}"),
        }
    }
}
