//! Controller synthesis: the core multiplier identity, the two-step convex
//! iteration with its radius/decay schedule and degree escalation, and the
//! baseline constructions (traditional alternation, cancellation law).

mod algorithm;
mod cancellation;
mod expr;
mod steps;
mod traditional;

pub use algorithm::{
    synthesize, HistoryRecord, IterateSnapshot, SynthesisResult, SystemProvider,
};
pub use cancellation::{cancellation_controller, cancellation_for_system, CancellationLaw};
pub use expr::{build_core_expression, CoreParts};
pub use steps::{compile_step1, compile_step2, run_step1, run_step2, StepArtifacts, StepResult};
pub use traditional::traditional_iterate;

use std::sync::Arc;

use thiserror::Error;

use crate::polyalg::{Monomial, PolyError, Polynomial, VarSubset, VariableSet};
use crate::sdpcore::{solve, SdpError, SolveOptions, SolveStatus};
use crate::sosprog::{DecisionPolynomial, GramCertificate, SosError, SosProgram};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Sos(#[from] SosError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error("expected {expected} controller channels, got {got}")]
    ChannelCount { expected: usize, got: usize },
    #[error("controller polynomials must involve state variables only")]
    InputsInController,
    #[error("both the multiplier side and the controller side carry decision variables")]
    NonConvexCombination,
    #[error("denominator of channel {0} is not positive at the origin (q(0) = {1})")]
    DenominatorNotPositiveAtOrigin(usize, f64),
    #[error("dynamics denominator {index} failed its positivity certificate: {detail}")]
    UncertifiedDenominator { index: usize, detail: String },
    #[error("state {state} depends non-affinely on the input")]
    NonAffine { state: usize },
    #[error("traditional baseline supports single-input systems, got {0} inputs")]
    MultiInputTraditional(usize),
    #[error("initial controller not certifiable: Step 1 infeasible at all degrees")]
    InitialControllerNotCertifiable,
    #[error("cancellation denominator grad(V)·g is identically zero")]
    ZeroCancellationDenominator,
    #[error("invalid W(x): {0}")]
    InvalidW(String),
    #[error("{0}")]
    Invalid(String),
}

/// Maps a state vector to values of the auxiliary variables.
pub type AuxRule = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Plant `ẋ_i = f_num_i / f_den_i` over a variable set, with semialgebraic
/// constraints `g_i ≥ 0`, `h_j = 0`.
///
/// `aux_rule` maps a state vector to values of the auxiliary variables when
/// the model recasts a non-polynomial nonlinearity (e.g. a sector-bounded
/// `x1 - sin(x1)`); it is used by simulation and sampling, never by the
/// algebraic machinery.
#[derive(Clone)]
pub struct SystemModel {
    pub name: String,
    pub vars: Arc<VariableSet>,
    pub f_num: Vec<Polynomial>,
    pub f_den: Vec<Polynomial>,
    pub g_ineq: Vec<Polynomial>,
    pub h_eq: Vec<Polynomial>,
    pub aux_rule: Option<AuxRule>,
}

impl std::fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SystemModel")
            .field("name", &self.name)
            .field("vars", &self.vars)
            .field("f_num", &self.f_num)
            .field("f_den", &self.f_den)
            .field("g_ineq", &self.g_ineq)
            .field("h_eq", &self.h_eq)
            .field("aux_rule", &self.aux_rule.as_ref().map(|_| "<fn>"))
            .finish()
    }
}

impl SystemModel {
    pub fn n_states(&self) -> usize {
        self.vars.n_states()
    }

    pub fn n_inputs(&self) -> usize {
        self.vars.n_inputs()
    }

    /// Structural checks plus the equilibrium report: returns warnings for
    /// conditions that don't block synthesis.
    pub fn check(&self) -> Result<Vec<String>, SynthError> {
        let nx = self.n_states();
        if self.f_num.len() != nx || self.f_den.len() != nx {
            return Err(PolyError::LengthMismatch { expected: nx, got: self.f_num.len() }.into());
        }
        for (i, den) in self.f_den.iter().enumerate() {
            let input_free = (0..self.vars.len())
                .filter(|&k| self.vars.is_input_index(k))
                .all(|k| den.degree_in(k) == 0);
            if den.is_zero() || !input_free {
                return Err(SynthError::Invalid(format!(
                    "denominator {i} must be a nonzero polynomial without inputs"
                )));
            }
        }
        let mut warnings = Vec::new();
        let origin = self.full_point(&vec![0.0; nx], &vec![0.0; self.n_inputs()]);
        for (i, num) in self.f_num.iter().enumerate() {
            let v = num.evaluate(&origin);
            if v.abs() > 1e-9 {
                warnings.push(format!(
                    "equilibrium residual: f_num[{i}](0, 0) = {v:.3e}, origin is not an equilibrium"
                ));
            }
        }
        Ok(warnings)
    }

    /// Values of the auxiliary variables at a state vector.
    pub fn aux_values(&self, x: &[f64]) -> Vec<f64> {
        match &self.aux_rule {
            Some(rule) => rule(x),
            None => vec![0.0; self.vars.n_aux()],
        }
    }

    /// Assemble the full evaluation point `[x, u, aux(x)]`.
    pub fn full_point(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut pt = Vec::with_capacity(self.vars.len());
        pt.extend_from_slice(x);
        pt.extend_from_slice(u);
        pt.extend(self.aux_values(x));
        pt
    }

    /// State derivatives at `(x, u)` with denominators evaluated.
    pub fn derivatives(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let pt = self.full_point(x, u);
        self.f_num
            .iter()
            .zip(&self.f_den)
            .map(|(num, den)| num.evaluate(&pt) / den.evaluate(&pt))
            .collect()
    }
}

/// Feedback law `u_k = p_k(x) / q_k(x)` with every `q_k` normalized to 1 at
/// the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalController {
    p: Vec<Polynomial>,
    q: Vec<Polynomial>,
}

impl RationalController {
    /// Build and normalize: divides each channel by `q_k(0)`, which must be
    /// positive. Polynomials must be state-only.
    pub fn new(p: Vec<Polynomial>, q: Vec<Polynomial>) -> Result<Self, SynthError> {
        if p.len() != q.len() {
            return Err(SynthError::ChannelCount { expected: p.len(), got: q.len() });
        }
        if p.iter().chain(&q).any(|poly| !poly.is_state_only()) {
            return Err(SynthError::InputsInController);
        }
        let mut pn = Vec::with_capacity(p.len());
        let mut qn = Vec::with_capacity(q.len());
        for (k, (pk, qk)) in p.into_iter().zip(q).enumerate() {
            let q0 = qk.constant_term();
            if q0 <= 0.0 {
                return Err(SynthError::DenominatorNotPositiveAtOrigin(k, q0));
            }
            pn.push(pk.scale(1.0 / q0));
            qn.push(qk.scale(1.0 / q0));
        }
        Ok(RationalController { p: pn, q: qn })
    }

    /// The all-zero control law (p = 0, q = 1 per channel).
    pub fn zero(vars: &Arc<VariableSet>) -> Self {
        let n = vars.n_inputs();
        RationalController {
            p: vec![Polynomial::zero(vars); n],
            q: vec![Polynomial::constant(vars, 1.0); n],
        }
    }

    pub fn vars(&self) -> &Arc<VariableSet> {
        self.p[0].vars()
    }

    pub fn n_channels(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[Polynomial] {
        &self.p
    }

    pub fn q(&self) -> &[Polynomial] {
        &self.q
    }

    /// Evaluate the control at a state vector (inputs/aux irrelevant since
    /// the controller is state-only).
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let vars = self.vars();
        let mut pt = vec![0.0; vars.len()];
        pt[..x.len().min(vars.n_states())].copy_from_slice(&x[..vars.n_states()]);
        self.p
            .iter()
            .zip(&self.q)
            .map(|(p, q)| p.evaluate(&pt) / q.evaluate(&pt))
            .collect()
    }

    /// Smallest denominator value at a state vector.
    pub fn min_q(&self, x: &[f64]) -> f64 {
        let vars = self.vars();
        let mut pt = vec![0.0; vars.len()];
        pt[..vars.n_states()].copy_from_slice(&x[..vars.n_states()]);
        self.q
            .iter()
            .map(|q| q.evaluate(&pt))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest relative coefficient distance to another controller, used for
    /// the convergence report.
    pub fn relative_distance(&self, other: &RationalController) -> f64 {
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for (a, b) in self.p.iter().chain(&self.q).zip(other.p.iter().chain(&other.q)) {
            num += a.try_sub(b).map(|d| d.coeff_norm().powi(2)).unwrap_or(f64::INFINITY);
            den += a.coeff_norm().powi(2);
        }
        num.sqrt() / den.sqrt().max(1e-12)
    }
}

/// Wrap a polynomial state feedback `u = K(x)` as a rational controller with
/// unit denominators.
pub fn wrap_initial(k: &[Polynomial]) -> Result<RationalController, SynthError> {
    let vars = match k.first() {
        Some(p) => p.vars().clone(),
        None => return Err(SynthError::ChannelCount { expected: 1, got: 0 }),
    };
    if k.len() != vars.n_inputs() {
        return Err(SynthError::ChannelCount { expected: vars.n_inputs(), got: k.len() });
    }
    let q = vec![Polynomial::constant(&vars, 1.0); k.len()];
    RationalController::new(k.to_vec(), q)
}

/// Polynomial degrees searched at one level of the outer loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DegreeSet {
    pub d_p: usize,
    pub d_q: usize,
    pub d_v: usize,
    pub d_lambda: usize,
    pub d_t: usize,
    pub d_s: usize,
}

impl DegreeSet {
    /// Whether every escalatable degree has hit its cap.
    pub fn at_max(&self, cfg: &SynthesisConfig) -> bool {
        self.d_v >= cfg.d_v_max
            && self.d_lambda >= cfg.d_lambda_max
            && self.d_t >= cfg.d_t_max
            && self.d_s >= cfg.d_s_max
    }

    /// Raise each degree below its cap by 2 (controller degrees stay fixed).
    pub fn escalate(&mut self, cfg: &SynthesisConfig) {
        if self.d_v < cfg.d_v_max {
            self.d_v += 2;
        }
        if self.d_lambda < cfg.d_lambda_max {
            self.d_lambda += 2;
        }
        if self.d_t < cfg.d_t_max {
            self.d_t += 2;
        }
        if self.d_s < cfg.d_s_max {
            self.d_s += 2;
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisConfig {
    pub r0: f64,
    pub r_inc: f64,
    pub gamma0: f64,
    pub gamma_inc: f64,
    pub degrees: DegreeSet,
    pub d_v_max: usize,
    pub d_lambda_max: usize,
    pub d_t_max: usize,
    pub d_s_max: usize,
    pub iter_max: usize,
    /// Strictness of V: V - eps_rho * Σx_i² must be SOS.
    pub eps_rho: f64,
    /// Margin for re-certifying given denominators on the region.
    pub eps_q: f64,
    /// Strict positivity margin for synthesized q: q - eps_eta SOS.
    pub eps_eta: f64,
    /// Relative coefficient-change threshold for the convergence report.
    pub convergence_tol: f64,
    /// Pin every q_k to the constant 1 through equality constraints.
    pub polynomial_only: bool,
    pub solve: SolveOptions,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            r0: 1.0,
            r_inc: 0.1,
            gamma0: 0.0,
            gamma_inc: 0.1,
            degrees: DegreeSet { d_p: 1, d_q: 0, d_v: 2, d_lambda: 2, d_t: 2, d_s: 2 },
            d_v_max: 4,
            d_lambda_max: 4,
            d_t_max: 4,
            d_s_max: 4,
            iter_max: 10,
            eps_rho: 1e-6,
            eps_q: 1e-6,
            eps_eta: 1e-3,
            convergence_tol: 1e-4,
            polynomial_only: false,
            // Per-step solves tolerate coarser iterates than the solver
            // default: the iteration has its own margins (eps_rho, eps_eta)
            // and each accepted controller is re-certified by the next
            // round's Lyapunov step.
            solve: SolveOptions { feas_tol: 5e-5, psd_tol: 1e-4, ..SolveOptions::default() },
        }
    }
}

/// Certificate of one feasible step: the multiplier identity
/// `E = zᵀ Q z` with all lifted pieces.
#[derive(Debug, Clone)]
pub struct CertBundle {
    pub v: Polynomial,
    pub lambda: Vec<Polynomial>,
    /// SOS multipliers on the inequality constraints, in constraint order.
    pub s: Vec<Polynomial>,
    /// Free multipliers on the equality constraints.
    pub t: Vec<Polynomial>,
    /// SOS multiplier on the ball constraint R - Σx_i² ≥ 0.
    pub s_ball: Polynomial,
    pub r: f64,
    pub gamma: f64,
    pub main_gram: GramCertificate,
    /// Max coefficient-matching residual across all Gram constraints.
    pub gram_residual: f64,
    /// Coefficient residual of the recombined core identity.
    pub identity_residual: f64,
}

impl CertBundle {
    /// The certified core expression rebuilt from the lifted pieces, as a
    /// plain polynomial.
    pub fn rebuild_expression(
        &self,
        sys: &SystemModel,
        ctrl: &RationalController,
    ) -> Result<Polynomial, SynthError> {
        let vars = &sys.vars;
        let d = product(vars, &sys.f_den)?;
        let mut e = Polynomial::zero(vars);
        for i in 0..sys.n_states() {
            let d_except = product_except(vars, &sys.f_den, i)?;
            let term = self.v.partial(i).try_mul(&sys.f_num[i])?.try_mul(&d_except)?;
            e = e.try_sub(&term)?;
        }
        e = e.try_sub(&d.try_mul(&self.v)?.scale(self.gamma))?;
        for (k, lam) in self.lambda.iter().enumerate() {
            let u = Polynomial::var(vars, vars.n_states() + k);
            let coupling = ctrl.q[k].try_mul(&u)?.try_sub(&ctrl.p[k])?;
            e = e.try_sub(&lam.try_mul(&coupling)?)?;
        }
        for (t, h) in self.t.iter().zip(&sys.h_eq) {
            e = e.try_sub(&t.try_mul(h)?)?;
        }
        for (s, g) in self.s.iter().zip(&sys.g_ineq) {
            e = e.try_sub(&s.try_mul(g)?)?;
        }
        let ball = ball_constraint(vars, self.r);
        e = e.try_sub(&self.s_ball.try_mul(&ball)?)?;
        Ok(e)
    }
}

/// `R - Σ x_i²` over the state variables.
pub(crate) fn ball_constraint(vars: &Arc<VariableSet>, r: f64) -> Polynomial {
    let mut b = Polynomial::constant(vars, r);
    for i in 0..vars.n_states() {
        let xi = Polynomial::var(vars, i);
        b = &b - &(&xi * &xi);
    }
    b
}

pub(crate) fn sum_of_squares_states(vars: &Arc<VariableSet>) -> Polynomial {
    let mut s = Polynomial::zero(vars);
    for i in 0..vars.n_states() {
        let xi = Polynomial::var(vars, i);
        s = &s + &(&xi * &xi);
    }
    s
}

pub(crate) fn product(
    vars: &Arc<VariableSet>,
    polys: &[Polynomial],
) -> Result<Polynomial, PolyError> {
    let mut acc = Polynomial::constant(vars, 1.0);
    for p in polys {
        acc = acc.try_mul(p)?;
    }
    Ok(acc)
}

pub(crate) fn product_except(
    vars: &Arc<VariableSet>,
    polys: &[Polynomial],
    skip: usize,
) -> Result<Polynomial, PolyError> {
    let mut acc = Polynomial::constant(vars, 1.0);
    for (j, p) in polys.iter().enumerate() {
        if j != skip {
            acc = acc.try_mul(p)?;
        }
    }
    Ok(acc)
}

/// Certify each non-constant dynamics denominator positive on the ball:
/// `den - eps - σ·(R - Σx_i²) ∈ Σ` with σ SOS.
pub fn certify_denominators(
    sys: &SystemModel,
    r: f64,
    cfg: &SynthesisConfig,
) -> Result<(), SynthError> {
    for (i, den) in sys.f_den.iter().enumerate() {
        if den.degree().unwrap_or(0) == 0 {
            if den.constant_term() <= 0.0 {
                return Err(SynthError::UncertifiedDenominator {
                    index: i,
                    detail: format!("constant denominator {} is not positive", den.constant_term()),
                });
            }
            continue;
        }
        let vars = &sys.vars;
        let mut prog = SosProgram::new(vars);
        let sigma = prog.declare_poly(VarSubset::States, 0, 2)?;
        prog.add_sos(sigma.clone(), VarSubset::States, 1)?;
        let ball = ball_constraint(vars, r);
        let expr = DecisionPolynomial::from_poly(
            &den.try_sub(&Polynomial::constant(vars, cfg.eps_q))?,
        )
        .sub(&sigma.mul_poly(&ball)?)?;
        let half = (expr.degree().unwrap_or(0) as usize).div_ceil(2);
        prog.add_sos(expr, VarSubset::States, half)?;
        let sol = solve(&prog.compile(), &cfg.solve)?;
        if sol.status != SolveStatus::Feasible {
            return Err(SynthError::UncertifiedDenominator {
                index: i,
                detail: format!("solver status {}", sol.solver_status),
            });
        }
    }
    Ok(())
}

/// Monomial for `x_i²`, used when normalizing Lyapunov functions.
pub(crate) fn quadratic_monomial(vars: &Arc<VariableSet>, i: usize) -> Monomial {
    let mut exps = vec![0u32; vars.len()];
    exps[i] = 2;
    Monomial::new(exps)
}

/// Scale V so that its quadratic trace Σ_i coeff(x_i²) equals n_states,
/// giving a scale-fixed representative for cross-iteration comparisons.
pub fn normalize_lyapunov(v: &Polynomial) -> Polynomial {
    let vars = v.vars();
    let n = vars.n_states();
    let trace: f64 = (0..n)
        .map(|i| v.coefficient(&quadratic_monomial(vars, i)))
        .sum();
    if trace.abs() < 1e-12 {
        return v.clone();
    }
    v.scale(n as f64 / trace)
}

#[allow(unused_imports)]
pub(crate) use crate::polyalg::grad_dot;
