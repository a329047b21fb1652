//! Built-in benchmark systems with their initial gains and iteration
//! schedules: an inverted pendulum under a sector constraint, a planar
//! system with rational dynamics, and an open-loop unstable 3D system.

use std::sync::Arc;

use crate::polyalg::{Polynomial, VariableSet};
use crate::polyparse::parse_poly;
use crate::synth::{
    DegreeSet, RationalController, SynthesisConfig, SystemModel, SystemProvider,
};
use crate::verify::SimOptions;

/// One packaged benchmark: the (possibly radius-dependent) model, a
/// stabilizing initial linear gain, and the iteration schedule it is meant
/// to run with.
pub struct Benchmark {
    pub name: &'static str,
    pub provider: Arc<dyn SystemProvider + Send + Sync>,
    pub k0: Vec<Polynomial>,
    pub config: SynthesisConfig,
    pub sim: SimOptions,
}

impl Benchmark {
    /// The model at the schedule's starting radius.
    pub fn initial_model(&self) -> SystemModel {
        self.provider.model(self.config.r0)
    }
}

/// Look up a built-in benchmark by name.
pub fn builtin(name: &str) -> Option<Benchmark> {
    match name {
        "pendulum" => Some(pendulum()),
        "rational2d" => Some(rational2d()),
        "poly3d" => Some(poly3d()),
        _ => None,
    }
}

pub const BUILTIN_NAMES: [&str; 3] = ["pendulum", "rational2d", "poly3d"];

fn poly(src: &str, vars: &Arc<VariableSet>) -> Polynomial {
    parse_poly(src, vars).expect("built-in polynomial text is well-formed")
}

/// Variable set of the pendulum model: states (x1, x2), input u1, auxiliary
/// x3 standing for x1 - sin(x1).
pub fn pendulum_vars() -> Arc<VariableSet> {
    VariableSet::with_aux(vec!["x1", "x2"], vec!["u1"], vec!["x3"]).unwrap()
}

/// Inverted pendulum in normalized units (mgl = 1, ml² = 1, friction 0.5):
/// the x2 dynamics use sin(x1) = x1 - x3 with the sector bound
/// x3·(α·x1 - x3) ≥ 0 whose slope α depends on the operating radius.
pub struct PendulumProvider;

impl SystemProvider for PendulumProvider {
    fn model(&self, r: f64) -> SystemModel {
        pendulum_model(r)
    }
}

/// Sector slope for the bound on x1 - sin(x1) over |x1| ≤ r/√2.
pub fn pendulum_alpha(r: f64) -> f64 {
    let x1max = r / std::f64::consts::SQRT_2;
    1.0 - x1max.sin() / x1max
}

pub fn pendulum_model(r: f64) -> SystemModel {
    let vars = pendulum_vars();
    let alpha = pendulum_alpha(r);
    let sector = {
        let x1 = Polynomial::var(&vars, 0);
        let x3 = Polynomial::var(&vars, 3);
        x3.try_mul(&x1.scale(alpha).try_sub(&x3).unwrap()).unwrap()
    };
    SystemModel {
        name: "pendulum".to_string(),
        vars: Arc::clone(&vars),
        f_num: vec![
            poly("x2", &vars),
            poly("x1 - x3 - 0.5*x2 + u1", &vars),
        ],
        f_den: vec![
            Polynomial::constant(&vars, 1.0),
            Polynomial::constant(&vars, 1.0),
        ],
        g_ineq: vec![sector],
        h_eq: vec![],
        aux_rule: Some(Arc::new(|x: &[f64]| vec![x[0] - x[0].sin()])),
    }
}

/// Pendulum benchmark: radius and decay both grow by 0.1 per feasible
/// round, cubic numerator over quadratic denominator.
pub fn pendulum() -> Benchmark {
    let vars = pendulum_vars();
    Benchmark {
        name: "pendulum",
        provider: Arc::new(PendulumProvider),
        k0: vec![poly("-30*x1 - 7*x2", &vars)],
        config: SynthesisConfig {
            r0: 1.0,
            r_inc: 0.1,
            gamma0: 0.0,
            gamma_inc: 0.1,
            degrees: DegreeSet { d_p: 3, d_q: 2, d_v: 4, d_lambda: 2, d_t: 2, d_s: 2 },
            ..SynthesisConfig::default()
        },
        sim: SimOptions { dt: 1e-2, t_final: 20.0, ..SimOptions::default() },
    }
}

/// A known good pendulum controller (cubic over quadratic), kept as a
/// regression fixture for the certification pipeline.
pub fn pendulum_reference_controller() -> RationalController {
    let vars = pendulum_vars();
    let p = poly(
        "-2.539*x1^3 - 0.66171*x1^2*x2 - 0.52445*x1*x2^2 + 0.00041924*x2^3 - 5.5279*x1 - 1.5831*x2",
        &vars,
    );
    let q = poly("1.1618*x1^2 - 0.69832*x1*x2 + 2.0172*x2^2 + 2.7878", &vars);
    RationalController::new(vec![p], vec![q]).expect("fixture denominators are positive at 0")
}

pub fn rational2d_vars() -> Arc<VariableSet> {
    VariableSet::new(vec!["x1", "x2"], vec!["u1"]).unwrap()
}

/// Planar system with rational dynamics:
/// x1' = (1 + x1²)·x2 / 2,
/// x2' = (2·x1 - x2·(1 + x1²) - (1 - x1²)·u1) / (1 + x1²).
pub fn rational2d_model() -> SystemModel {
    let vars = rational2d_vars();
    SystemModel {
        name: "rational2d".to_string(),
        vars: Arc::clone(&vars),
        f_num: vec![
            poly("x2 + x1^2*x2", &vars),
            poly("2*x1 - x2 - x1^2*x2 - u1 + x1^2*u1", &vars),
        ],
        f_den: vec![
            Polynomial::constant(&vars, 2.0),
            poly("1 + x1^2", &vars),
        ],
        g_ineq: vec![],
        h_eq: vec![],
        aux_rule: None,
    }
}

/// 2D rational benchmark: small starting ball grown in steps of 0.01, decay
/// in steps of 0.05.
pub fn rational2d() -> Benchmark {
    let vars = rational2d_vars();
    Benchmark {
        name: "rational2d",
        provider: Arc::new(rational2d_model()),
        k0: vec![poly("4*x1", &vars)],
        config: SynthesisConfig {
            r0: 0.1,
            r_inc: 0.01,
            gamma0: 0.0,
            gamma_inc: 0.05,
            degrees: DegreeSet { d_p: 3, d_q: 2, d_v: 2, d_lambda: 2, d_t: 2, d_s: 2 },
            ..SynthesisConfig::default()
        },
        sim: SimOptions { dt: 1e-2, t_final: 20.0, ..SimOptions::default() },
    }
}

pub fn poly3d_vars() -> Arc<VariableSet> {
    VariableSet::new(vec!["x1", "x2", "x3"], vec!["u1"]).unwrap()
}

/// Open-loop unstable 3D polynomial system:
/// x1' = -x1 + x2 - x3, x2' = -x1·(x3 + 1) - x2, x3' = -x1 + u1.
pub fn poly3d_model() -> SystemModel {
    let vars = poly3d_vars();
    SystemModel {
        name: "poly3d".to_string(),
        vars: Arc::clone(&vars),
        f_num: vec![
            poly("-x1 + x2 - x3", &vars),
            poly("-x1*x3 - x1 - x2", &vars),
            poly("-x1 + u1", &vars),
        ],
        f_den: vec![
            Polynomial::constant(&vars, 1.0),
            Polynomial::constant(&vars, 1.0),
            Polynomial::constant(&vars, 1.0),
        ],
        g_ineq: vec![],
        h_eq: vec![],
        aux_rule: None,
    }
}

/// 3D benchmark: radius and decay both grow by 0.1 per feasible round. The
/// growing decay demand is what eventually separates methods that re-search
/// the Lyapunov function in the controller step from those that fix it.
pub fn poly3d() -> Benchmark {
    let vars = poly3d_vars();
    Benchmark {
        name: "poly3d",
        provider: Arc::new(poly3d_model()),
        k0: vec![poly("x1 - x3", &vars)],
        config: SynthesisConfig {
            r0: 0.5,
            r_inc: 0.1,
            gamma0: 0.0,
            gamma_inc: 0.1,
            degrees: DegreeSet { d_p: 3, d_q: 2, d_v: 2, d_lambda: 2, d_t: 2, d_s: 2 },
            ..SynthesisConfig::default()
        },
        sim: SimOptions { dt: 1e-2, t_final: 20.0, ..SimOptions::default() },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_covers_builtins() {
        for name in BUILTIN_NAMES {
            let b = builtin(name).unwrap();
            assert_eq!(b.name, name);
            assert!(b.initial_model().check().unwrap().is_empty());
        }
        assert!(builtin("nonexistent").is_none());
    }

    #[test]
    fn pendulum_recovers_sine_dynamics() {
        let sys = pendulum_model(1.0);
        // with x3 = x1 - sin(x1) and u = 0: x2' = sin(x1) - 0.5 x2
        for (x1, x2) in [(0.5, -0.3), (-1.2, 0.8), (0.01, 0.0)] {
            let dx = sys.derivatives(&[x1, x2], &[0.0]);
            assert!((dx[0] - x2).abs() < 1e-12);
            let expected = x1.sin() - 0.5 * x2;
            assert!((dx[1] - expected).abs() < 1e-9, "at ({x1}, {x2}): {} vs {expected}", dx[1]);
        }
    }

    #[test]
    fn pendulum_sector_bound_holds_along_true_nonlinearity() {
        // x3 = x1 - sin(x1) satisfies x3(αx1 - x3) ≥ 0 for |x1| ≤ x1max
        let r = 2.0;
        let sys = pendulum_model(r);
        let x1max = r / std::f64::consts::SQRT_2;
        let sector = &sys.g_ineq[0];
        for k in 0..=40 {
            let x1 = -x1max + 2.0 * x1max * k as f64 / 40.0;
            let pt = sys.full_point(&[x1, 0.0], &[0.0]);
            assert!(sector.evaluate(&pt) >= -1e-12, "sector violated at x1 = {x1}");
        }
    }

    #[test]
    fn pendulum_alpha_formula() {
        let r = 2.0;
        let x1max = r / std::f64::consts::SQRT_2;
        assert!((pendulum_alpha(r) - (1.0 - x1max.sin() / x1max)).abs() < 1e-15);
        // slope grows with the radius (the sector widens)
        assert!(pendulum_alpha(2.0) > pendulum_alpha(1.0));
    }

    #[test]
    fn reference_controller_is_normalized() {
        let ctrl = pendulum_reference_controller();
        assert!((ctrl.q()[0].constant_term() - 1.0).abs() < 1e-12);
        // q stays positive on a sample box
        for (a, b) in [(-2.0, -2.0), (2.0, -2.0), (0.0, 2.0), (1.0, 1.0)] {
            assert!(ctrl.min_q(&[a, b]) > 0.0);
        }
        // u(0) = 0
        assert!(ctrl.eval(&[0.0, 0.0])[0].abs() < 1e-12);
    }

    #[test]
    fn initial_gains_stabilize_linearization() {
        // simulate each closed loop from a small perturbation; local
        // convergence is the point of shipping these gains
        for name in BUILTIN_NAMES {
            let b = builtin(name).unwrap();
            let sys = b.initial_model();
            let ctrl = crate::synth::wrap_initial(&b.k0).unwrap();
            let opts = SimOptions { dt: 1e-3, t_final: 30.0, ..SimOptions::default() };
            let nx = sys.n_states();
            let x0: Vec<f64> = (0..nx).map(|i| 0.05 / (i + 1) as f64).collect();
            let traj = crate::verify::simulate(&sys, &ctrl, &x0, &opts);
            assert!(traj.converged, "{name}: initial gain fails to stabilize locally");
        }
    }

    #[test]
    fn poly3d_open_loop_diverges() {
        let sys = poly3d_model();
        let ctrl = RationalController::zero(&sys.vars);
        let opts = SimOptions { dt: 1e-3, t_final: 30.0, ..SimOptions::default() };
        let traj = crate::verify::simulate(&sys, &ctrl, &[0.05, 0.02, 0.01], &opts);
        assert!(!traj.converged);
    }
}
