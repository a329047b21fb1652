//! Sum-of-squares programs: polynomials with unknown coefficients, SOS
//! membership constraints and linear coefficient equalities, compiled to a
//! block semidefinite program by Gram-matrix coefficient matching.
//!
//! The compilation is deterministic: scalar variables are numbered in
//! declaration order, Gram entries in upper-triangle row-major order per
//! constraint, and equality rows follow graded-lex monomial order.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::polyalg::{
    monomial_basis, Monomial, PolyError, Polynomial, VarSubset, VariableSet,
};
use crate::sdpcore::{SdpBlock, SdpProblem, SdpSolution, SolveStatus};

#[derive(Debug, Error)]
pub enum SosError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("expression degree {expr_deg} exceeds Gram capacity 2*{half_deg}")]
    DegreeOverflow { expr_deg: u32, half_deg: usize },
    #[error("product of two decision polynomials is non-convex and not allowed")]
    BilinearProduct,
    #[error("solution lift requires a feasible solve, got {0:?}")]
    NotFeasible(SolveStatus),
    #[error("Gram matrix is indefinite beyond tolerance: lambda_min = {lambda_min}")]
    IndefiniteGram { lambda_min: f64 },
    #[error("expression belongs to a different program variable space")]
    ForeignVariables,
}

/// Handle to a scalar decision variable of an [`SosProgram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ScalarVar(pub usize);

/// Affine expression `constant + Σ weight · var` over scalar decision
/// variables, in canonical form (no near-zero weights).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineExpr {
    constant: f64,
    weights: BTreeMap<usize, f64>,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        AffineExpr { constant: c, weights: BTreeMap::new() }
    }

    pub fn var(v: ScalarVar) -> Self {
        let mut weights = BTreeMap::new();
        weights.insert(v.0, 1.0);
        AffineExpr { constant: 0.0, weights }
    }

    pub fn constant_part(&self) -> f64 {
        self.constant
    }

    pub fn weights(&self) -> impl Iterator<Item = (ScalarVar, f64)> + '_ {
        self.weights.iter().map(|(&v, &w)| (ScalarVar(v), w))
    }

    pub fn has_vars(&self) -> bool {
        !self.weights.is_empty()
    }

    pub fn add(&self, other: &AffineExpr) -> AffineExpr {
        let mut out = self.clone();
        out.constant += other.constant;
        for (&v, &w) in &other.weights {
            *out.weights.entry(v).or_insert(0.0) += w;
        }
        out.canonicalize();
        out
    }

    pub fn sub(&self, other: &AffineExpr) -> AffineExpr {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, k: f64) -> AffineExpr {
        let mut out = self.clone();
        out.constant *= k;
        for w in out.weights.values_mut() {
            *w *= k;
        }
        out.canonicalize();
        out
    }

    pub fn is_zero(&self) -> bool {
        self.constant.abs() < 1e-15 && self.weights.is_empty()
    }

    pub fn eval(&self, assignment: &[f64]) -> f64 {
        self.constant
            + self
                .weights
                .iter()
                .map(|(&v, &w)| w * assignment[v])
                .sum::<f64>()
    }

    fn canonicalize(&mut self) {
        self.weights.retain(|_, w| w.abs() >= 1e-15);
    }

    fn max_var(&self) -> Option<usize> {
        self.weights.keys().next_back().copied()
    }
}

/// Polynomial whose coefficients are affine expressions in scalar decision
/// variables. Products of two decision-bearing polynomials are rejected to
/// preserve convexity of the compiled program.
#[derive(Debug, Clone)]
pub struct DecisionPolynomial {
    vars: Arc<VariableSet>,
    terms: BTreeMap<Monomial, AffineExpr>,
}

impl DecisionPolynomial {
    pub fn zero(vars: &Arc<VariableSet>) -> Self {
        DecisionPolynomial { vars: Arc::clone(vars), terms: BTreeMap::new() }
    }

    pub fn from_poly(p: &Polynomial) -> Self {
        let mut out = Self::zero(p.vars());
        for (m, c) in p.terms() {
            out.terms.insert(m.clone(), AffineExpr::constant(c));
        }
        out
    }

    pub fn vars(&self) -> &Arc<VariableSet> {
        &self.vars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &AffineExpr)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, m: &Monomial) -> AffineExpr {
        self.terms.get(m).cloned().unwrap_or_default()
    }

    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(Monomial::degree).max()
    }

    pub fn has_decision_vars(&self) -> bool {
        self.terms.values().any(AffineExpr::has_vars)
    }

    pub fn add(&self, other: &DecisionPolynomial) -> Result<Self, SosError> {
        if self.vars != other.vars {
            return Err(PolyError::VarSetMismatch.into());
        }
        let mut out = self.clone();
        for (m, e) in &other.terms {
            let entry = out.terms.entry(m.clone()).or_default();
            *entry = entry.add(e);
        }
        out.canonicalize();
        Ok(out)
    }

    pub fn sub(&self, other: &DecisionPolynomial) -> Result<Self, SosError> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, k: f64) -> Self {
        let mut out = self.clone();
        for e in out.terms.values_mut() {
            *e = e.scale(k);
        }
        out.canonicalize();
        out
    }

    /// Multiply by a known polynomial.
    pub fn mul_poly(&self, p: &Polynomial) -> Result<Self, SosError> {
        if self.vars != *p.vars() {
            return Err(PolyError::VarSetMismatch.into());
        }
        let mut out = Self::zero(&self.vars);
        for (ma, ea) in &self.terms {
            for (mb, cb) in p.terms() {
                let m = ma.mul(mb);
                let entry = out.terms.entry(m).or_default();
                *entry = entry.add(&ea.scale(cb));
            }
        }
        out.canonicalize();
        Ok(out)
    }

    /// Product of two decision polynomials. Allowed only when at most one
    /// side carries decision variables.
    pub fn try_mul(a: &DecisionPolynomial, b: &DecisionPolynomial) -> Result<Self, SosError> {
        if a.has_decision_vars() && b.has_decision_vars() {
            return Err(SosError::BilinearProduct);
        }
        if a.has_decision_vars() {
            a.mul_poly(&b.to_poly_lossy())
        } else {
            b.mul_poly(&a.to_poly_lossy())
        }
    }

    /// Formal partial derivative with respect to the variable at `idx`.
    pub fn partial(&self, idx: usize) -> Self {
        let mut out = Self::zero(&self.vars);
        for (m, e) in &self.terms {
            let d = m.degree_of(idx);
            if d == 0 {
                continue;
            }
            let mut exps = m.exponents().to_vec();
            exps[idx] = d - 1;
            let entry = out.terms.entry(Monomial::new(exps)).or_default();
            *entry = entry.add(&e.scale(d as f64));
        }
        out.canonicalize();
        out
    }

    /// Instantiate to a concrete polynomial given values for the decision
    /// variables.
    pub fn instantiate(&self, assignment: &[f64]) -> Polynomial {
        Polynomial::from_terms(
            &self.vars,
            self.terms
                .iter()
                .map(|(m, e)| (m.clone(), e.eval(assignment))),
        )
    }

    /// Convert to a plain polynomial, dropping decision-variable weights.
    /// Only meaningful for constant decision polynomials.
    fn to_poly_lossy(&self) -> Polynomial {
        Polynomial::from_terms(
            &self.vars,
            self.terms
                .iter()
                .map(|(m, e)| (m.clone(), e.constant_part())),
        )
    }

    fn canonicalize(&mut self) {
        self.terms.retain(|_, e| !e.is_zero());
    }

    fn max_var(&self) -> Option<usize> {
        self.terms.values().filter_map(AffineExpr::max_var).max()
    }
}

/// Gram certificate `expr = zᵀ Q z` over the monomial basis `z`.
#[derive(Debug, Clone)]
pub struct GramCertificate {
    pub basis: Vec<Monomial>,
    pub q: DMatrix<f64>,
}

impl GramCertificate {
    /// Reassemble `zᵀ Q z` as a polynomial.
    pub fn to_polynomial(&self, vars: &Arc<VariableSet>) -> Polynomial {
        let m = self.basis.len();
        let mut terms: Vec<(Monomial, f64)> = Vec::new();
        for i in 0..m {
            for j in i..m {
                let c = if i == j { self.q[(i, j)] } else { 2.0 * self.q[(i, j)] };
                terms.push((self.basis[i].mul(&self.basis[j]), c));
            }
        }
        Polynomial::from_terms(vars, terms)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.q.nrows() == 0 {
            return 0.0;
        }
        let eig = self.q.clone().symmetric_eigen();
        eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

struct SosConstraint {
    expr: DecisionPolynomial,
    basis: Vec<Monomial>,
}

/// SOS feasibility/optimization program over one variable set.
pub struct SosProgram {
    vars: Arc<VariableSet>,
    n_scalars: usize,
    sos: Vec<SosConstraint>,
    eqs: Vec<AffineExpr>,
    objective: Option<AffineExpr>,
    /// Weight of an L1 coefficient-norm regularization term added to the
    /// objective at compile time (0 disables it).
    pub l1_regularization: f64,
}

/// Handle to an SOS constraint, used to retrieve its certificate after a
/// solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SosConstraintHandle(pub usize);

/// Lifted solution of a compiled program.
pub struct LiftedSolution {
    /// Value of every program scalar variable.
    pub assignment: Vec<f64>,
    /// One Gram certificate per SOS constraint, in declaration order.
    pub certificates: Vec<GramCertificate>,
    /// Coefficient residual `max |coeff(expr - zᵀQz)|` per SOS constraint.
    pub residuals: Vec<f64>,
}

impl SosProgram {
    pub fn new(vars: &Arc<VariableSet>) -> Self {
        SosProgram {
            vars: Arc::clone(vars),
            n_scalars: 0,
            sos: Vec::new(),
            eqs: Vec::new(),
            objective: None,
            l1_regularization: 0.0,
        }
    }

    pub fn vars(&self) -> &Arc<VariableSet> {
        &self.vars
    }

    pub fn n_scalars(&self) -> usize {
        self.n_scalars
    }

    pub fn new_scalar(&mut self) -> ScalarVar {
        let v = ScalarVar(self.n_scalars);
        self.n_scalars += 1;
        v
    }

    /// Declare a polynomial with one fresh scalar variable per monomial of
    /// the chosen basis window.
    pub fn declare_poly(
        &mut self,
        subset: VarSubset,
        dmin: usize,
        dmax: usize,
    ) -> Result<DecisionPolynomial, SosError> {
        let basis = monomial_basis(&self.vars, subset, dmin, dmax)?;
        let mut out = DecisionPolynomial::zero(&self.vars);
        for m in basis {
            let v = self.new_scalar();
            out.terms.insert(m, AffineExpr::var(v));
        }
        Ok(out)
    }

    /// Constrain `expr ∈ Σ` with Gram basis `monomial_basis(subset, 0, half_deg)`.
    pub fn add_sos(
        &mut self,
        expr: DecisionPolynomial,
        subset: VarSubset,
        half_deg: usize,
    ) -> Result<SosConstraintHandle, SosError> {
        self.add_sos_with_window(expr, subset, 0, half_deg)
    }

    /// Same as [`add_sos`](Self::add_sos) but with a basis degree window
    /// `[dmin, half_deg]`; useful when the expression structurally vanishes
    /// at the origin.
    pub fn add_sos_with_window(
        &mut self,
        expr: DecisionPolynomial,
        subset: VarSubset,
        dmin: usize,
        half_deg: usize,
    ) -> Result<SosConstraintHandle, SosError> {
        if expr.vars != self.vars || expr.max_var().is_some_and(|v| v >= self.n_scalars) {
            return Err(SosError::ForeignVariables);
        }
        if let Some(d) = expr.degree() {
            if d as usize > 2 * half_deg {
                return Err(SosError::DegreeOverflow { expr_deg: d, half_deg });
            }
        }
        let basis = monomial_basis(&self.vars, subset, dmin, half_deg)?;
        self.sos.push(SosConstraint { expr, basis });
        Ok(SosConstraintHandle(self.sos.len() - 1))
    }

    /// Append the linear equality `expr = 0`. Vacuous `0 = 0` rows are
    /// dropped; contradictory constants are kept and surface as an
    /// infeasible solve.
    pub fn add_eq(&mut self, expr: AffineExpr) {
        if expr.is_zero() {
            return;
        }
        self.eqs.push(expr);
    }

    /// Minimize the given affine expression (default is pure feasibility).
    pub fn set_objective(&mut self, obj: AffineExpr) {
        self.objective = Some(obj);
    }

    /// Compile to a block SDP. The scalar vector is
    /// `[program scalars..., Gram entries of constraint 0, constraint 1, ...,
    /// regularization slacks...]`.
    pub fn compile(&self) -> SdpProblem {
        let mut n_total = self.n_scalars;
        let mut blocks = Vec::new();
        let mut eq_rows: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut eq_rhs: Vec<f64> = Vec::new();

        for con in &self.sos {
            let m = con.basis.len();
            let base = n_total;
            n_total += m * (m + 1) / 2;

            // Gram block: Q itself, assembled from its entry variables.
            let mut coeff_entries = Vec::with_capacity(m * (m + 1) / 2);
            let mut k = 0usize;
            for i in 0..m {
                for j in i..m {
                    coeff_entries.push((base + k, i, j, 1.0));
                    k += 1;
                }
            }
            blocks.push(SdpBlock {
                dim: m,
                diag: false,
                const_entries: Vec::new(),
                coeff_entries,
            });

            // Coefficient matching: for every monomial of expr or of a basis
            // product, expr_coeff(mu) - gram_coeff(mu) = 0.
            let mut gram_terms: BTreeMap<Monomial, Vec<(usize, f64)>> = BTreeMap::new();
            let mut k = 0usize;
            for i in 0..m {
                for j in i..m {
                    let mu = con.basis[i].mul(&con.basis[j]);
                    let w = if i == j { 1.0 } else { 2.0 };
                    gram_terms.entry(mu).or_default().push((base + k, w));
                    k += 1;
                }
            }
            let mut monomials: std::collections::BTreeSet<Monomial> =
                gram_terms.keys().cloned().collect();
            monomials.extend(con.expr.terms.keys().cloned());

            for mu in monomials {
                let coeff = con.expr.coefficient(&mu);
                let mut row: Vec<(usize, f64)> = coeff.weights().map(|(v, w)| (v.0, w)).collect();
                if let Some(grams) = gram_terms.get(&mu) {
                    for &(v, w) in grams {
                        row.push((v, -w));
                    }
                }
                if row.is_empty() {
                    // Constant-only coefficient must vanish; a nonzero value
                    // is an infeasible row, kept so the solver reports it.
                    if coeff.constant_part().abs() < 1e-15 {
                        continue;
                    }
                }
                eq_rows.push(row);
                eq_rhs.push(-coeff.constant_part());
            }
        }

        for eq in &self.eqs {
            eq_rows.push(eq.weights().map(|(v, w)| (v.0, w)).collect());
            eq_rhs.push(-eq.constant_part());
        }

        let mut objective: Vec<(usize, f64)> = self
            .objective
            .as_ref()
            .map(|o| o.weights().map(|(v, w)| (v.0, w)).collect())
            .unwrap_or_default();

        // Optional L1 coefficient-norm regularization: one slack t_v per
        // program scalar with t_v >= +/- y_v, weight added to the objective.
        if self.l1_regularization > 0.0 && self.n_scalars > 0 {
            let slack_base = n_total;
            n_total += self.n_scalars;
            let mut coeff_entries = Vec::new();
            for v in 0..self.n_scalars {
                // rows 2v, 2v+1 of a diagonal block: t_v - y_v >= 0, t_v + y_v >= 0
                coeff_entries.push((slack_base + v, 2 * v, 2 * v, 1.0));
                coeff_entries.push((v, 2 * v, 2 * v, -1.0));
                coeff_entries.push((slack_base + v, 2 * v + 1, 2 * v + 1, 1.0));
                coeff_entries.push((v, 2 * v + 1, 2 * v + 1, 1.0));
            }
            blocks.push(SdpBlock {
                dim: 2 * self.n_scalars,
                diag: true,
                const_entries: Vec::new(),
                coeff_entries,
            });
            for v in 0..self.n_scalars {
                objective.push((slack_base + v, self.l1_regularization));
            }
        }

        SdpProblem {
            n_vars: n_total,
            blocks,
            eq_rows,
            eq_rhs,
            objective: if objective.is_empty() { None } else { Some(objective) },
        }
    }

    /// Extract scalar values and Gram certificates from a feasible solve of
    /// the compiled problem.
    pub fn lift_solution(&self, sol: &SdpSolution) -> Result<LiftedSolution, SosError> {
        if sol.status != SolveStatus::Feasible {
            return Err(SosError::NotFeasible(sol.status));
        }
        let assignment: Vec<f64> = sol.y[..self.n_scalars].to_vec();
        let mut certificates = Vec::with_capacity(self.sos.len());
        let mut residuals = Vec::with_capacity(self.sos.len());
        for (b, con) in self.sos.iter().enumerate() {
            let q = sol.block_values[b].clone();
            let cert = GramCertificate { basis: con.basis.clone(), q };
            let rebuilt = cert.to_polynomial(&self.vars);
            let target = con.expr.instantiate(&assignment);
            residuals.push(target.coeff_distance(&rebuilt));
            certificates.push(cert);
        }
        Ok(LiftedSolution { assignment, certificates, residuals })
    }
}

/// Eigen-factorize a Gram certificate into polynomials `r_i` with
/// `Σ r_i² = zᵀ Q z`. Negative eigenvalues within `tol` are clamped to zero.
pub fn sos_decompose(
    cert: &GramCertificate,
    vars: &Arc<VariableSet>,
    tol: f64,
) -> Result<Vec<Polynomial>, SosError> {
    let m = cert.basis.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let eig = cert.q.clone().symmetric_eigen();
    let lambda_min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if lambda_min < -tol {
        return Err(SosError::IndefiniteGram { lambda_min });
    }
    let mut out = Vec::new();
    for k in 0..m {
        let lam = eig.eigenvalues[k].max(0.0);
        if lam == 0.0 {
            continue;
        }
        let scale = lam.sqrt();
        let col = eig.eigenvectors.column(k);
        let r = Polynomial::from_terms(
            vars,
            cert.basis
                .iter()
                .enumerate()
                .map(|(i, mono)| (mono.clone(), scale * col[i])),
        );
        if !r.is_zero() {
            out.push(r);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdpcore::{solve, SolveOptions};

    fn x_only() -> Arc<VariableSet> {
        VariableSet::new(vec!["x"], Vec::<&str>::new()).unwrap()
    }

    #[test]
    fn declare_counts() {
        let vs = x_only();
        let mut prog = SosProgram::new(&vs);
        let p = prog.declare_poly(VarSubset::States, 2, 2).unwrap();
        assert_eq!(prog.n_scalars(), 1);
        assert!(p.has_decision_vars());

        let vs2 = VariableSet::new(vec!["x1", "x2"], Vec::<&str>::new()).unwrap();
        let mut prog2 = SosProgram::new(&vs2);
        prog2.declare_poly(VarSubset::States, 2, 4).unwrap();
        assert_eq!(prog2.n_scalars(), 12);

        assert!(prog2.declare_poly(VarSubset::States, 3, 1).is_err());
    }

    #[test]
    fn bilinear_product_rejected() {
        let vs = x_only();
        let mut prog = SosProgram::new(&vs);
        let a = prog.declare_poly(VarSubset::States, 0, 1).unwrap();
        let b = prog.declare_poly(VarSubset::States, 0, 1).unwrap();
        assert!(matches!(
            DecisionPolynomial::try_mul(&a, &b),
            Err(SosError::BilinearProduct)
        ));
        let known = DecisionPolynomial::from_poly(&Polynomial::var(&vs, 0));
        assert!(DecisionPolynomial::try_mul(&a, &known).is_ok());
    }

    #[test]
    fn square_is_sos_with_hand_gram() {
        // x^2 + 2x + 1 over z = {1, x}: Q = [[1,1],[1,1]] (eigenvalues 0, 2).
        let vs = x_only();
        let mut prog = SosProgram::new(&vs);
        let x = Polynomial::var(&vs, 0);
        let one = Polynomial::constant(&vs, 1.0);
        let expr = &(&x + &one) * &(&x + &one);
        prog.add_sos(DecisionPolynomial::from_poly(&expr), VarSubset::States, 1)
            .unwrap();
        let sdp = prog.compile();
        let sol = solve(&sdp, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Feasible);
        let lifted = prog.lift_solution(&sol).unwrap();
        assert!(lifted.residuals[0] <= 1e-6);
        let q = &lifted.certificates[0].q;
        // Coefficient matching pins every entry here.
        assert!((q[(0, 0)] - 1.0).abs() < 1e-6);
        assert!((q[(1, 1)] - 1.0).abs() < 1e-6);
        assert!((q[(0, 1)] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn negative_somewhere_is_infeasible() {
        // x^2 - 1 is negative at 0, hence not SOS.
        let vs = x_only();
        let mut prog = SosProgram::new(&vs);
        let x = Polynomial::var(&vs, 0);
        let one = Polynomial::constant(&vs, 1.0);
        let expr = &(&x * &x) - &one;
        prog.add_sos(DecisionPolynomial::from_poly(&expr), VarSubset::States, 1)
            .unwrap();
        let sol = solve(&prog.compile(), &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        assert!(prog.lift_solution(&sol).is_err());
    }

    #[test]
    fn contradictory_equalities_infeasible() {
        let vs = x_only();
        let mut prog = SosProgram::new(&vs);
        let c = prog.new_scalar();
        prog.add_eq(AffineExpr::var(c)); // c = 0
        prog.add_eq(AffineExpr::var(c).add(&AffineExpr::constant(-1.0))); // c = 1
        prog.add_eq(AffineExpr::constant(0.0)); // dropped as vacuous
        assert_eq!(prog.eqs.len(), 2);
        let sol = solve(&prog.compile(), &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn degree_overflow_rejected() {
        let vs = x_only();
        let mut prog = SosProgram::new(&vs);
        let x = Polynomial::var(&vs, 0);
        let x4 = &(&x * &x) * &(&x * &x);
        let err = prog.add_sos(DecisionPolynomial::from_poly(&x4), VarSubset::States, 1);
        assert!(matches!(err, Err(SosError::DegreeOverflow { .. })));
    }

    #[test]
    fn decompose_hand_gram() {
        let vs = x_only();
        // Q = [[1,1],[1,1]] over z = {1, x}: single square (1+x)^2.
        let basis = monomial_basis(&vs, VarSubset::States, 0, 1).unwrap();
        let cert = GramCertificate {
            basis,
            q: DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
        };
        let rs = sos_decompose(&cert, &vs, 1e-9).unwrap();
        let sum: Polynomial = rs
            .iter()
            .fold(Polynomial::zero(&vs), |acc, r| &acc + &(r * r));
        assert!(sum.coeff_distance(&cert.to_polynomial(&vs)) < 1e-12);

        // identity Q over z = {x} gives back r = x
        let cert2 = GramCertificate {
            basis: monomial_basis(&vs, VarSubset::States, 1, 1).unwrap(),
            q: DMatrix::identity(1, 1),
        };
        let rs2 = sos_decompose(&cert2, &vs, 1e-9).unwrap();
        assert_eq!(rs2, vec![Polynomial::var(&vs, 0)]);

        // indefinite Q beyond tolerance is an error
        let cert3 = GramCertificate {
            basis: monomial_basis(&vs, VarSubset::States, 1, 1).unwrap(),
            q: DMatrix::from_row_slice(1, 1, &[-1.0]),
        };
        assert!(matches!(
            sos_decompose(&cert3, &vs, 1e-9),
            Err(SosError::IndefiniteGram { .. })
        ));
    }

    #[test]
    fn empty_program_is_feasible() {
        let vs = x_only();
        let prog = SosProgram::new(&vs);
        let sol = solve(&prog.compile(), &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Feasible);
        let lifted = prog.lift_solution(&sol).unwrap();
        assert!(lifted.assignment.is_empty());
        assert!(lifted.certificates.is_empty());
    }
}
