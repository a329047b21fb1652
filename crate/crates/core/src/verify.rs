//! Validation of synthesized controllers: closed-loop simulation, region of
//! attraction sampling, and numerical spot checks of algebraic certificates.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::polyalg::{PolyError, Polynomial};
use crate::synth::{CertBundle, RationalController, SynthError, SystemModel};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("Lyapunov candidate is not positive on the sampled boundary: min {min:.3e}, max {max:.3e}")]
    DegenerateLyapunov { min: f64, max: f64 },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub dt: f64,
    pub t_final: f64,
    /// Saturate each input channel at ±cap; `None` leaves inputs unbounded.
    pub input_cap: Option<f64>,
    /// Truncate when any controller denominator drops to half this margin.
    pub eps_eta: f64,
    /// Relative final-state threshold for the convergence flag.
    pub converge_fraction: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            dt: 1e-3,
            t_final: 10.0,
            input_cap: None,
            eps_eta: 1e-3,
            converge_fraction: 0.01,
        }
    }
}

/// A closed-loop run sampled at fixed steps; `states[k]` and `inputs[k]`
/// correspond to `times[k]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    /// Final state within `converge_fraction` of the initial norm (or
    /// essentially at the origin).
    pub converged: bool,
    /// A controller denominator approached zero along the run.
    pub denominator_violation: bool,
    /// The input saturation was active at some step.
    pub input_cap_hit: bool,
    /// The run stopped before `t_final` (blow-up or denominator trouble).
    pub truncated: bool,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least the initial state")
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn capped(mut u: Vec<f64>, cap: Option<f64>, hit: &mut bool) -> Vec<f64> {
    if let Some(c) = cap {
        for v in u.iter_mut() {
            if v.abs() > c {
                *v = v.signum() * c;
                *hit = true;
            }
        }
    }
    u
}

/// Integrate the closed loop with classical fourth-order Runge-Kutta,
/// re-evaluating the feedback at every stage.
pub fn simulate(
    sys: &SystemModel,
    ctrl: &RationalController,
    x0: &[f64],
    opts: &SimOptions,
) -> Trajectory {
    let nx = sys.n_states();
    assert_eq!(x0.len(), nx, "initial state dimension mismatch");
    let n_steps = (opts.t_final / opts.dt).round() as usize;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut inputs = Vec::with_capacity(n_steps + 1);
    let mut denominator_violation = false;
    let mut input_cap_hit = false;
    let mut truncated = false;

    let q_floor = opts.eps_eta / 2.0;
    let mut x = x0.to_vec();
    let mut t = 0.0;

    let stage = |x: &[f64], cap_hit: &mut bool, den_bad: &mut bool| -> (Vec<f64>, Vec<f64>) {
        if ctrl.min_q(x) <= q_floor {
            *den_bad = true;
        }
        let u = capped(ctrl.eval(x), opts.input_cap, cap_hit);
        let dx = sys.derivatives(x, &u);
        (u, dx)
    };

    for step in 0..=n_steps {
        let (u0, k1) = stage(&x, &mut input_cap_hit, &mut denominator_violation);
        times.push(t);
        states.push(x.clone());
        inputs.push(u0);
        if step == n_steps {
            break;
        }
        if denominator_violation
            || x.iter().any(|v| !v.is_finite())
            || k1.iter().any(|v| !v.is_finite())
        {
            truncated = true;
            break;
        }

        let h = opts.dt;
        let mid1: Vec<f64> = x.iter().zip(&k1).map(|(xi, ki)| xi + 0.5 * h * ki).collect();
        let (_, k2) = stage(&mid1, &mut input_cap_hit, &mut denominator_violation);
        let mid2: Vec<f64> = x.iter().zip(&k2).map(|(xi, ki)| xi + 0.5 * h * ki).collect();
        let (_, k3) = stage(&mid2, &mut input_cap_hit, &mut denominator_violation);
        let end: Vec<f64> = x.iter().zip(&k3).map(|(xi, ki)| xi + h * ki).collect();
        let (_, k4) = stage(&end, &mut input_cap_hit, &mut denominator_violation);
        if denominator_violation {
            truncated = true;
            break;
        }
        for i in 0..nx {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += h;
    }

    let initial_norm = norm(x0);
    let final_norm = norm(states.last().unwrap());
    let converged = !truncated
        && (final_norm <= opts.converge_fraction * initial_norm.max(1e-12) || final_norm <= 1e-9);

    Trajectory {
        times,
        states,
        inputs,
        converged,
        denominator_violation,
        input_cap_hit,
        truncated,
    }
}

/// Earliest time after which every state channel stays within
/// `fraction`·|x_i(0)| of zero. Channels starting at zero are excluded.
/// `None` when the run never settles (or was truncated before settling).
pub fn settling_time(traj: &Trajectory, fraction: f64) -> Option<f64> {
    if traj.truncated {
        return None;
    }
    let x0 = &traj.states[0];
    let active: Vec<usize> = (0..x0.len()).filter(|&i| x0[i].abs() > 0.0).collect();
    if active.is_empty() {
        return Some(traj.times[0]);
    }
    let bounds: Vec<f64> = active.iter().map(|&i| fraction * x0[i].abs()).collect();
    let inside = |x: &Vec<f64>| active.iter().zip(&bounds).all(|(&i, &b)| x[i].abs() <= b);
    // scan backwards for the last exit
    let mut settle_idx = None;
    for k in (0..traj.states.len()).rev() {
        if inside(&traj.states[k]) {
            settle_idx = Some(k);
        } else {
            break;
        }
    }
    settle_idx.map(|k| traj.times[k])
}

/// Discrete quadratic cost Σ_k (‖x_k‖² + ‖u_k‖²)·Δt over the run.
pub fn total_cost(traj: &Trajectory) -> f64 {
    let mut cost = 0.0;
    for k in 0..traj.times.len() {
        let dt = if k + 1 < traj.times.len() {
            traj.times[k + 1] - traj.times[k]
        } else if k > 0 {
            traj.times[k] - traj.times[k - 1]
        } else {
            0.0
        };
        let s: f64 = traj.states[k].iter().map(|v| v * v).sum::<f64>()
            + traj.inputs[k].iter().map(|v| v * v).sum::<f64>();
        cost += s * dt;
    }
    cost
}

#[derive(Debug, Clone)]
pub struct RoaReport {
    /// Sampled initial states, in grid order.
    pub points: Vec<Vec<f64>>,
    /// Convergence verdict per point, same order.
    pub verdicts: Vec<bool>,
    pub fraction_converged: f64,
    /// Largest certified sublevel value of an accompanying Lyapunov
    /// function, when one was supplied.
    pub certified_level: Option<f64>,
}

/// Simulate from a uniform grid over the cube inscribed in the ball
/// `Σx_i² ≤ R` (half-width √(R/n)), giving exactly `per_dim^n` initial
/// states, all inside the ball. Runs fan out across threads; the report
/// keeps deterministic grid order.
pub fn roa_sample(
    sys: &SystemModel,
    ctrl: &RationalController,
    r: f64,
    per_dim: usize,
    opts: &SimOptions,
) -> RoaReport {
    let nx = sys.n_states();
    let half = (r / nx as f64).sqrt();
    let mut points = Vec::new();
    let mut idx = vec![0usize; nx];
    loop {
        let x: Vec<f64> = idx
            .iter()
            .map(|&i| {
                if per_dim == 1 {
                    0.0
                } else {
                    -half + 2.0 * half * i as f64 / (per_dim - 1) as f64
                }
            })
            .collect();
        if x.iter().map(|v| v * v).sum::<f64>() <= r + 1e-12 {
            points.push(x);
        }
        let mut carry = 0;
        while carry < nx {
            idx[carry] += 1;
            if idx[carry] < per_dim {
                break;
            }
            idx[carry] = 0;
            carry += 1;
        }
        if carry == nx {
            break;
        }
    }

    let verdicts: Vec<bool> = points
        .par_iter()
        .map(|x0| simulate(sys, ctrl, x0, opts).converged)
        .collect();
    let fraction_converged = if points.is_empty() {
        0.0
    } else {
        verdicts.iter().filter(|&&v| v).count() as f64 / points.len() as f64
    };
    RoaReport { points, verdicts, fraction_converged, certified_level: None }
}

/// Largest sublevel set of `V` contained in the certified ball `Σx_i² ≤ R`:
/// the minimum of `V` over the ball's boundary sphere, estimated from 10⁴
/// seeded samples. Errors when `V` is not positive on the boundary (within
/// a relative threshold), since then no sublevel set is meaningful.
pub fn certified_roa_level(v: &Polynomial, r: f64, seed: u64) -> Result<f64, VerifyError> {
    let vars = v.vars();
    let nx = vars.n_states();
    if !v.is_state_only() {
        return Err(VerifyError::Invalid(
            "Lyapunov candidate must involve state variables only".to_string(),
        ));
    }
    let radius = r.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_samples = 10_000usize;
    let mut min_v = f64::INFINITY;
    let mut max_v = f64::NEG_INFINITY;
    let mut pt = vec![0.0; vars.len()];
    for _ in 0..n_samples {
        // isotropic direction from normalized Gaussian components
        let mut dir: Vec<f64> = (0..nx)
            .map(|_| {
                // Box-Muller
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        let n = norm(&dir);
        if n < 1e-12 {
            continue;
        }
        for d in dir.iter_mut() {
            *d *= radius / n;
        }
        pt[..nx].copy_from_slice(&dir);
        let val = v.evaluate(&pt);
        min_v = min_v.min(val);
        max_v = max_v.max(val);
    }
    if min_v <= 1e-4 * max_v.abs().max(1e-12) {
        return Err(VerifyError::DegenerateLyapunov { min: min_v, max: max_v });
    }
    Ok(min_v)
}

/// Numerical spot check of a certificate bundle.
#[derive(Debug, Clone)]
pub struct CertReport {
    /// Most negative sampled V (should stay positive away from the origin).
    pub min_v: f64,
    /// Largest sampled violation of `V̇ ≤ -γV` (positive means violated).
    pub max_decay_violation: f64,
    /// Smallest sampled controller denominator.
    pub min_q: f64,
    /// Largest |E - zᵀQz| over random full points.
    pub max_identity_error: f64,
    pub ok: bool,
}

/// Sample the certified ball and check that the lifted pieces mean what
/// they claim: V positive, V̇ ≤ -γV along the rational closed loop, the
/// denominators bounded away from zero, and the recombined core identity
/// matching its Gram form.
pub fn check_certificate(
    bundle: &CertBundle,
    sys: &SystemModel,
    ctrl: &RationalController,
    n_samples: usize,
    tol: f64,
) -> Result<CertReport, VerifyError> {
    let nx = sys.n_states();
    let radius = bundle.r.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut min_v = f64::INFINITY;
    let mut max_decay_violation = f64::NEG_INFINITY;
    let mut min_q = f64::INFINITY;

    let sample_ball = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        loop {
            let x: Vec<f64> = (0..nx).map(|_| rng.gen_range(-radius..=radius)).collect();
            if x.iter().map(|v| v * v).sum::<f64>() <= bundle.r {
                return x;
            }
        }
    };

    for _ in 0..n_samples {
        // find a sample satisfying the semialgebraic constraints (the aux
        // rule normally guarantees them; resampling covers sloppy models)
        let mut x = sample_ball(&mut rng);
        let mut tries = 0;
        loop {
            let u = ctrl.eval(&x);
            let pt = sys.full_point(&x, &u);
            if sys.g_ineq.iter().all(|g| g.evaluate(&pt) >= -1e-9) || tries >= 100 {
                break;
            }
            x = sample_ball(&mut rng);
            tries += 1;
        }
        let u = ctrl.eval(&x);
        let pt = sys.full_point(&x, &u);

        let v_val = bundle.v.evaluate(&pt);
        if norm(&x) > 1e-6 {
            min_v = min_v.min(v_val);
        }
        min_q = min_q.min(ctrl.min_q(&x));

        let dx = sys.derivatives(&x, &u);
        let vdot: f64 = (0..nx).map(|i| bundle.v.partial(i).evaluate(&pt) * dx[i]).sum();
        max_decay_violation = max_decay_violation.max(vdot + bundle.gamma * v_val);
    }

    // identity spot check at random full points, inputs sampled freely
    let e = bundle.rebuild_expression(sys, ctrl)?;
    let gram = bundle.main_gram.to_polynomial(&sys.vars);
    let mut max_identity_error = 0.0f64;
    for _ in 0..n_samples.min(100) {
        let pt: Vec<f64> = (0..sys.vars.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let err = (e.evaluate(&pt) - gram.evaluate(&pt)).abs();
        max_identity_error = max_identity_error.max(err);
    }

    let ok = min_v > -tol
        && max_decay_violation <= tol
        && min_q > 0.0
        && max_identity_error <= tol.max(1e-6) * (1.0 + e.coeff_norm());
    Ok(CertReport { min_v, max_decay_violation, min_q, max_identity_error, ok })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::VariableSet;
    use std::sync::Arc;

    fn scalar_decay() -> (SystemModel, RationalController) {
        // ẋ = -5x + u with u ≡ 0: x(t) = x0 e^{-5t}
        let vars = VariableSet::new(vec!["x"], vec!["u"]).unwrap();
        let x = Polynomial::var(&vars, 0);
        let u = Polynomial::var(&vars, 1);
        let sys = SystemModel {
            name: "decay".to_string(),
            vars: Arc::clone(&vars),
            f_num: vec![&u - &x.scale(5.0)],
            f_den: vec![Polynomial::constant(&vars, 1.0)],
            g_ineq: vec![],
            h_eq: vec![],
            aux_rule: None,
        };
        let ctrl = RationalController::zero(&vars);
        (sys, ctrl)
    }

    #[test]
    fn rk4_matches_exponential() {
        let (sys, ctrl) = scalar_decay();
        let opts = SimOptions { dt: 1e-3, t_final: 1.0, ..SimOptions::default() };
        let traj = simulate(&sys, &ctrl, &[1.0], &opts);
        assert!(!traj.truncated);
        let exact = (-5.0f64).exp();
        assert!((traj.final_state()[0] - exact).abs() < 1e-6);
        assert!(traj.converged);
    }

    #[test]
    fn rk4_step_halving_shows_fourth_order() {
        let (sys, ctrl) = scalar_decay();
        let exact = (-5.0f64 * 0.5).exp();
        let err_at = |dt: f64| {
            let opts = SimOptions { dt, t_final: 0.5, ..SimOptions::default() };
            (simulate(&sys, &ctrl, &[1.0], &opts).final_state()[0] - exact).abs()
        };
        let e1 = err_at(0.05);
        let e2 = err_at(0.025);
        let order = (e1 / e2).log2();
        assert!(order > 3.5, "observed order {order}");
    }

    #[test]
    fn settling_and_cost() {
        let (sys, ctrl) = scalar_decay();
        let opts = SimOptions { dt: 1e-3, t_final: 3.0, ..SimOptions::default() };
        let traj = simulate(&sys, &ctrl, &[2.0], &opts);
        // x/x0 = e^{-5t} = 0.01 at t = ln(100)/5 ≈ 0.9210
        let ts = settling_time(&traj, 0.01).unwrap();
        assert!((ts - (100.0f64).ln() / 5.0).abs() < 2e-3, "settling {ts}");
        // ∫ 4 e^{-10t} dt = 0.4 (1 - e^{-30}) ≈ 0.4
        let cost = total_cost(&traj);
        assert!((cost - 0.4).abs() < 5e-3, "cost {cost}");
    }

    #[test]
    fn blow_up_truncates() {
        let vars = VariableSet::new(vec!["x"], vec!["u"]).unwrap();
        let x = Polynomial::var(&vars, 0);
        let sys = SystemModel {
            name: "blowup".to_string(),
            vars: Arc::clone(&vars),
            f_num: vec![(&x * &x).try_mul(&x).unwrap()],
            f_den: vec![Polynomial::constant(&vars, 1.0)],
            g_ineq: vec![],
            h_eq: vec![],
            aux_rule: None,
        };
        let ctrl = RationalController::zero(&vars);
        // ẋ = x³ from x0 = 2 blows up at t = 1/(2·4) = 0.125
        let opts = SimOptions { dt: 1e-3, t_final: 1.0, ..SimOptions::default() };
        let traj = simulate(&sys, &ctrl, &[2.0], &opts);
        assert!(traj.truncated);
        assert!(!traj.converged);
    }

    #[test]
    fn denominator_violation_detected() {
        let vars = VariableSet::new(vec!["x"], vec!["u"]).unwrap();
        let x = Polynomial::var(&vars, 0);
        let u = Polynomial::var(&vars, 1);
        let sys = SystemModel {
            name: "drift".to_string(),
            vars: Arc::clone(&vars),
            f_num: vec![&u + &Polynomial::constant(&vars, 1.0)],
            f_den: vec![Polynomial::constant(&vars, 1.0)],
            g_ineq: vec![],
            h_eq: vec![],
            aux_rule: None,
        };
        // q = 1 + x vanishes at x = -1; drive the state toward it
        let ctrl = RationalController::new(
            vec![Polynomial::zero(&vars)],
            vec![&Polynomial::constant(&vars, 1.0) + &x],
        )
        .unwrap();
        // state starts left of the pole and drifts right across it
        let opts = SimOptions { dt: 1e-3, t_final: 3.0, ..SimOptions::default() };
        let traj2 = simulate(&sys, &ctrl, &[-1.5], &opts);
        assert!(traj2.denominator_violation);
        assert!(traj2.truncated);
    }

    #[test]
    fn input_cap_saturates() {
        let (sys, _) = scalar_decay();
        let vars = sys.vars.clone();
        let x = Polynomial::var(&vars, 0);
        let ctrl = RationalController::new(
            vec![x.scale(-100.0)],
            vec![Polynomial::constant(&vars, 1.0)],
        )
        .unwrap();
        let opts = SimOptions {
            dt: 1e-3,
            t_final: 0.5,
            input_cap: Some(1.0),
            ..SimOptions::default()
        };
        let traj = simulate(&sys, &ctrl, &[1.0], &opts);
        assert!(traj.input_cap_hit);
        assert!(traj.inputs.iter().all(|u| u[0].abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn roa_grid_fraction() {
        let (sys, ctrl) = scalar_decay();
        let opts = SimOptions { dt: 1e-2, t_final: 3.0, ..SimOptions::default() };
        let report = roa_sample(&sys, &ctrl, 1.0, 5, &opts);
        assert_eq!(report.points.len(), 5);
        assert!((report.fraction_converged - 1.0).abs() < 1e-12);
        // grid order is deterministic
        let report2 = roa_sample(&sys, &ctrl, 1.0, 5, &opts);
        assert_eq!(report.points, report2.points);
        assert_eq!(report.verdicts, report2.verdicts);
    }

    #[test]
    fn certified_level_matches_hand_values() {
        let vars = VariableSet::new(vec!["x1", "x2"], Vec::<&str>::new()).unwrap();
        let x1 = Polynomial::var(&vars, 0);
        let x2 = Polynomial::var(&vars, 1);
        // V = Σx²: level equals R exactly
        let v_ball = &(&x1 * &x1) + &(&x2 * &x2);
        let c = certified_roa_level(&v_ball, 2.0, 7).unwrap();
        assert!((c - 2.0).abs() < 1e-9);
        // V = x1² + 4x2² on Σx² = 1: min at (±1, 0) gives 1
        let v_ell = &(&x1 * &x1) + &(&x2 * &x2).scale(4.0);
        let c2 = certified_roa_level(&v_ell, 1.0, 7).unwrap();
        assert!((1.0 - 1e-9..1.01).contains(&c2), "level {c2}");

        // degenerate candidate rejected
        let err = certified_roa_level(&(&x1 * &x1).try_sub(&(&x2 * &x2)).unwrap(), 1.0, 7);
        assert!(matches!(err, Err(VerifyError::DegenerateLyapunov { .. })));
    }

    #[test]
    fn settling_excludes_zero_channels() {
        let vars = VariableSet::new(vec!["x1", "x2"], vec!["u"]).unwrap();
        let x1 = Polynomial::var(&vars, 0);
        let x2 = Polynomial::var(&vars, 1);
        let sys = SystemModel {
            name: "two".to_string(),
            vars: Arc::clone(&vars),
            // x1 decays fast, x2 rings up from zero then decays
            f_num: vec![x1.scale(-5.0), &x1 - &x2],
            f_den: vec![
                Polynomial::constant(&vars, 1.0),
                Polynomial::constant(&vars, 1.0),
            ],
            g_ineq: vec![],
            h_eq: vec![],
            aux_rule: None,
        };
        let ctrl = RationalController::zero(&vars);
        let opts = SimOptions { dt: 1e-3, t_final: 5.0, ..SimOptions::default() };
        let traj = simulate(&sys, &ctrl, &[1.0, 0.0], &opts);
        // only x1 is judged: settling near ln(100)/5
        let ts = settling_time(&traj, 0.01).unwrap();
        assert!((ts - (100.0f64).ln() / 5.0).abs() < 0.05, "settling {ts}");
    }
}
