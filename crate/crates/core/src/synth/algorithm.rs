//! The outer/inner iteration: alternate the two convex steps, grow the ball
//! radius and decay rate after every jointly feasible round, escalate
//! degrees on infeasibility, stop at the degree caps or iteration budget.

use crate::polyalg::Polynomial;

use super::{
    certify_denominators, normalize_lyapunov, run_step1, run_step2, wrap_initial, CertBundle,
    DegreeSet, RationalController, StepResult, SynthError, SynthesisConfig, SystemModel,
};

/// Source of the model at a given ball radius. Most systems ignore the
/// radius; region-dependent recastings (e.g. sector bounds whose slope
/// depends on the ball size) recompute their constraints from it.
pub trait SystemProvider {
    fn model(&self, r: f64) -> SystemModel;
}

impl SystemProvider for SystemModel {
    fn model(&self, _r: f64) -> SystemModel {
        self.clone()
    }
}

#[derive(Debug, Clone)]
pub struct HistoryRecord {
    /// Outer round (degree level), starting at 0.
    pub outer: usize,
    /// Inner iteration within the round, starting at 0.
    pub inner: usize,
    /// 1 or 2.
    pub step: u8,
    pub r: f64,
    pub gamma: f64,
    pub degrees: DegreeSet,
    pub feasible: bool,
    pub warning: bool,
    pub solver_iterations: u32,
    pub detail: String,
}

/// Controller and certificate retained after one jointly feasible round.
#[derive(Debug, Clone)]
pub struct IterateSnapshot {
    pub index: usize,
    /// Radius at which this iterate was certified.
    pub r: f64,
    pub gamma: f64,
    pub controller: RationalController,
    pub v: Polynomial,
    /// V rescaled to unit mean quadratic trace, comparable across iterations.
    pub v_normalized: Polynomial,
    pub cert: CertBundle,
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub controller: RationalController,
    /// Certificate of the last feasible Step 2 (absent when no round ever
    /// succeeded, e.g. iter_max = 0).
    pub cert: Option<CertBundle>,
    /// Next radius the schedule would have attempted.
    pub final_r: f64,
    pub final_gamma: f64,
    pub feasible_iterations: usize,
    pub history: Vec<HistoryRecord>,
    pub iterates: Vec<IterateSnapshot>,
    pub warnings: Vec<String>,
    /// Controller coefficients stopped moving (informational).
    pub converged: bool,
}

impl SynthesisResult {
    /// Largest radius that was actually certified.
    pub fn max_certified_r(&self) -> Option<f64> {
        self.iterates.last().map(|s| s.r)
    }
}

/// Algorithm: starting from the polynomial gain `K0` (wrapped with unit
/// denominators), alternate Step 1 and Step 2. After each jointly feasible
/// round set `R += R_inc`, `γ += γ_inc`. On infeasibility raise each degree
/// by 2 up to its cap and reset the inner counter; stop when all degrees are
/// capped or `iter_max` inner iterations complete.
pub fn synthesize(
    provider: &dyn SystemProvider,
    k0: &[Polynomial],
    cfg: &SynthesisConfig,
) -> Result<SynthesisResult, SynthError> {
    let mut ctrl = wrap_initial(k0)?;
    let mut degrees = cfg.degrees;
    let mut r = cfg.r0;
    let mut gamma = cfg.gamma0;
    let mut history = Vec::new();
    let mut iterates: Vec<IterateSnapshot> = Vec::new();
    let mut warnings = Vec::new();
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

    let mut outer = 0usize;
    'outer: loop {
        let mut inner = 0usize;
        while inner < cfg.iter_max {
            let sys = provider.model(r);
            sys.check()?.into_iter().for_each(|w| warnings.push(w));
            certify_denominators(&sys, r, cfg)?;

            let step1 = run_step1(&sys, &ctrl, cfg, &degrees, r)?;
            let (art1, rec1) = record(&step1, outer, inner, 1, r, gamma, degrees);
            history.push(rec1);
            let art1 = match art1 {
                Some(a) => a,
                None => break, // escalate
            };
            if art1.degenerate_lambda {
                warnings.push(format!(
                    "iteration {feasible_iterations}: all λ lifted to zero; Step 2 is decoupled from the controller"
                ));
            }

            let step2 = run_step2(&sys, &art1.lambda, cfg, &degrees, r, gamma)?;
            let (art2, rec2) = record(&step2, outer, inner, 2, r, gamma, degrees);
            history.push(rec2);
            let art2 = match art2 {
                Some(a) => a,
                None => break, // escalate
            };

            if ctrl.relative_distance(&art2.controller) < cfg.convergence_tol {
                converged = true;
            }
            ctrl = art2.controller.clone();
            cert = Some(art2.cert.clone());
            iterates.push(IterateSnapshot {
                index: feasible_iterations,
                r,
                gamma,
                controller: ctrl.clone(),
                v: art2.cert.v.clone(),
                v_normalized: normalize_lyapunov(&art2.cert.v),
                cert: art2.cert.clone(),
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

pub(super) fn record(
    step: &StepResult,
    outer: usize,
    inner: usize,
    step_no: u8,
    r: f64,
    gamma: f64,
    degrees: DegreeSet,
) -> (Option<Box<super::StepArtifacts>>, HistoryRecord) {
    match step {
        StepResult::Feasible(a) => (
            Some(a.clone()),
            HistoryRecord {
                outer,
                inner,
                step: step_no,
                r,
                gamma,
                degrees,
                feasible: true,
                warning: false,
                solver_iterations: a.solver_iterations,
                detail: format!("feasible, identity residual {:.3e}", a.cert.identity_residual),
            },
        ),
        StepResult::Infeasible { warning, detail } => (
            None,
            HistoryRecord {
                outer,
                inner,
                step: step_no,
                r,
                gamma,
                degrees,
                feasible: false,
                warning: *warning,
                solver_iterations: 0,
                detail: detail.clone(),
            },
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::{Polynomial, VariableSet};
    use std::sync::Arc;

    fn scalar_system() -> SystemModel {
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
    fn iter_max_zero_returns_wrapped_k0() {
        let sys = scalar_system();
        let k = Polynomial::var(&sys.vars, 0).neg();
        let cfg = SynthesisConfig { iter_max: 0, ..SynthesisConfig::default() };
        let res = synthesize(&sys, std::slice::from_ref(&k), &cfg).unwrap();
        assert_eq!(res.controller.p()[0], k);
        assert_eq!(res.feasible_iterations, 0);
        assert!(res.history.is_empty());
        assert!(res.cert.is_none());
    }

    #[test]
    fn schedule_arithmetic_and_monotone_history() {
        let sys = scalar_system();
        let k = Polynomial::var(&sys.vars, 0).scale(-2.0);
        let cfg = SynthesisConfig {
            r0: 1.0,
            r_inc: 0.1,
            gamma0: 0.0,
            gamma_inc: 0.1,
            iter_max: 3,
            ..SynthesisConfig::default()
        };
        let res = synthesize(&sys, &[k], &cfg).unwrap();
        assert_eq!(res.feasible_iterations, 3);
        assert!((res.final_r - 1.3).abs() < 1e-12);
        assert!((res.final_gamma - 0.3).abs() < 1e-12);
        assert_eq!(res.iterates.len(), 3);

        // R and γ non-decreasing through history, strictly increasing
        // exactly after jointly feasible rounds
        let mut prev_r = f64::NEG_INFINITY;
        for rec in &res.history {
            assert!(rec.r >= prev_r);
            prev_r = rec.r;
        }
        assert!(res.cert.is_some());
    }

    #[test]
    fn unstabilizable_initial_controller_errors() {
        // ẋ = x + u with K0 = +x: closed loop ẋ = 2x at iteration 1
        let vars = VariableSet::new(vec!["x"], vec!["u"]).unwrap();
        let x = Polynomial::var(&vars, 0);
        let u = Polynomial::var(&vars, 1);
        let sys = SystemModel {
            name: "unstable".to_string(),
            vars: Arc::clone(&vars),
            f_num: vec![&x + &u],
            f_den: vec![Polynomial::constant(&vars, 1.0)],
            g_ineq: vec![],
            h_eq: vec![],
            aux_rule: None,
        };
        // cap degrees at their initial values so escalation exits at once
        let cfg = SynthesisConfig {
            iter_max: 2,
            d_v_max: 2,
            d_lambda_max: 2,
            d_t_max: 2,
            d_s_max: 2,
            ..SynthesisConfig::default()
        };
        let err = synthesize(&sys, std::slice::from_ref(&x), &cfg);
        assert!(matches!(err, Err(SynthError::InitialControllerNotCertifiable)));
    }
}
