//! Sparse multivariate polynomial arithmetic over an ordered variable set.
//!
//! Variables are partitioned into state variables, input variables and
//! (optionally) auxiliary algebraic variables used for constraint recasting
//! (e.g. sector-bounded nonlinearities). Coefficients are `f64`; after every
//! arithmetic operation the term map is canonicalized by dropping
//! coefficients below [`COEFF_EPS`].

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coefficients with magnitude below this are dropped during canonicalization.
pub const COEFF_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("operands are defined over different variable sets")]
    VarSetMismatch,
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),
    #[error("at least one state variable is required")]
    NoStateVariables,
    #[error("expected {expected} polynomials, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("no value assigned for variable `{0}`")]
    MissingAssignment(String),
    #[error("invalid degree window: dmin={dmin} > dmax={dmax}")]
    InvalidDegreeWindow { dmin: usize, dmax: usize },
}

/// Ordered set of problem variables: states first, then inputs, then
/// auxiliary variables. The ordering is fixed for the lifetime of a problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSet {
    states: Vec<String>,
    inputs: Vec<String>,
    auxs: Vec<String>,
}

impl VariableSet {
    pub fn new<S: Into<String>>(
        states: Vec<S>,
        inputs: Vec<S>,
    ) -> Result<Arc<Self>, PolyError> {
        Self::with_aux(states, inputs, Vec::<S>::new())
    }

    pub fn with_aux<S: Into<String>>(
        states: Vec<S>,
        inputs: Vec<S>,
        auxs: Vec<S>,
    ) -> Result<Arc<Self>, PolyError> {
        let states: Vec<String> = states.into_iter().map(Into::into).collect();
        let inputs: Vec<String> = inputs.into_iter().map(Into::into).collect();
        let auxs: Vec<String> = auxs.into_iter().map(Into::into).collect();
        if states.is_empty() {
            return Err(PolyError::NoStateVariables);
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in states.iter().chain(&inputs).chain(&auxs) {
            if !seen.insert(name.clone()) {
                return Err(PolyError::DuplicateVariable(name.clone()));
            }
        }
        Ok(Arc::new(VariableSet { states, inputs, auxs }))
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn n_aux(&self) -> usize {
        self.auxs.len()
    }

    /// Total number of variables.
    pub fn len(&self) -> usize {
        self.states.len() + self.inputs.len() + self.auxs.len()
    }

    pub fn is_empty(&self) -> bool {
        false // always at least one state
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn input_names(&self) -> &[String] {
        &self.inputs
    }

    pub fn aux_names(&self) -> &[String] {
        &self.auxs
    }

    pub fn name(&self, idx: usize) -> &str {
        let nx = self.states.len();
        let nu = self.inputs.len();
        if idx < nx {
            &self.states[idx]
        } else if idx < nx + nu {
            &self.inputs[idx - nx]
        } else {
            &self.auxs[idx - nx - nu]
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        let nx = self.states.len();
        let nu = self.inputs.len();
        if let Some(i) = self.states.iter().position(|s| s == name) {
            return Some(i);
        }
        if let Some(i) = self.inputs.iter().position(|s| s == name) {
            return Some(nx + i);
        }
        self.auxs.iter().position(|s| s == name).map(|i| nx + nu + i)
    }

    /// Variable indices belonging to the given subset, in order.
    pub fn subset_indices(&self, subset: VarSubset) -> Vec<usize> {
        match subset {
            VarSubset::States => (0..self.n_states()).collect(),
            VarSubset::All => (0..self.len()).collect(),
        }
    }

    pub fn is_state_index(&self, idx: usize) -> bool {
        idx < self.n_states()
    }

    pub fn is_input_index(&self, idx: usize) -> bool {
        idx >= self.n_states() && idx < self.n_states() + self.n_inputs()
    }
}

/// Variable subset selector for monomial bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarSubset {
    /// State variables only (Lyapunov functions, controller numerators and
    /// denominators).
    States,
    /// All declared variables (multipliers over states, inputs and aux).
    All,
}

/// Exponent vector over the full variable set.
///
/// Ordered graded-lexicographically: lower total degree first; within a
/// degree, a larger exponent on an earlier variable sorts first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Monomial {
    exps: Vec<u32>,
}

impl Monomial {
    pub fn new(exps: Vec<u32>) -> Self {
        Monomial { exps }
    }

    pub fn constant(n_vars: usize) -> Self {
        Monomial { exps: vec![0; n_vars] }
    }

    pub fn var(n_vars: usize, idx: usize) -> Self {
        let mut exps = vec![0; n_vars];
        exps[idx] = 1;
        Monomial { exps }
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exps
    }

    pub fn degree(&self) -> u32 {
        self.exps.iter().sum()
    }

    pub fn degree_of(&self, idx: usize) -> u32 {
        self.exps[idx]
    }

    pub fn is_constant(&self) -> bool {
        self.exps.iter().all(|&e| e == 0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.exps.len(), other.exps.len());
        Monomial {
            exps: self
                .exps
                .iter()
                .zip(&other.exps)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    /// Whether every variable with nonzero exponent lies in `subset`.
    pub fn within(&self, vars: &VariableSet, subset: VarSubset) -> bool {
        match subset {
            VarSubset::All => true,
            VarSubset::States => self
                .exps
                .iter()
                .enumerate()
                .all(|(i, &e)| e == 0 || vars.is_state_index(i)),
        }
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        let mut acc = 1.0;
        for (i, &e) in self.exps.iter().enumerate() {
            if e > 0 {
                acc *= point[i].powi(e as i32);
            }
        }
        acc
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {
                // Within a degree: larger exponent on an earlier variable
                // sorts first (so x1 precedes x2, x1^2 precedes x1*x2).
                for (a, b) in self.exps.iter().zip(&other.exps) {
                    match b.cmp(a) {
                        Ordering::Equal => continue,
                        ord => return ord,
                    }
                }
                Ordering::Equal
            }
            ord => ord,
        }
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Sparse multivariate polynomial in canonical form: no stored zero
/// coefficients, terms keyed by [`Monomial`] in graded-lex order.
///
/// The degree of the zero polynomial is reported as `None`.
#[derive(Debug, Clone)]
pub struct Polynomial {
    vars: Arc<VariableSet>,
    terms: BTreeMap<Monomial, f64>,
}

impl PartialEq for Polynomial {
    fn eq(&self, other: &Self) -> bool {
        self.vars == other.vars && self.terms == other.terms
    }
}

impl Polynomial {
    pub fn zero(vars: &Arc<VariableSet>) -> Self {
        Polynomial { vars: Arc::clone(vars), terms: BTreeMap::new() }
    }

    pub fn constant(vars: &Arc<VariableSet>, c: f64) -> Self {
        let mut p = Self::zero(vars);
        if c.abs() >= COEFF_EPS {
            p.terms.insert(Monomial::constant(vars.len()), c);
        }
        p
    }

    pub fn var(vars: &Arc<VariableSet>, idx: usize) -> Self {
        let mut p = Self::zero(vars);
        p.terms.insert(Monomial::var(vars.len(), idx), 1.0);
        p
    }

    pub fn from_terms(
        vars: &Arc<VariableSet>,
        terms: impl IntoIterator<Item = (Monomial, f64)>,
    ) -> Self {
        let mut p = Self::zero(vars);
        for (m, c) in terms {
            debug_assert_eq!(m.exponents().len(), vars.len());
            let entry = p.terms.entry(m).or_insert(0.0);
            *entry += c;
        }
        p.canonicalize();
        p
    }

    pub fn monomial(vars: &Arc<VariableSet>, m: Monomial, c: f64) -> Self {
        Self::from_terms(vars, [(m, c)])
    }

    pub fn vars(&self) -> &Arc<VariableSet> {
        &self.vars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.coefficient(&Monomial::constant(self.vars.len()))
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(Monomial::degree).max()
    }

    /// Largest exponent of variable `idx` across all terms.
    pub fn degree_in(&self, idx: usize) -> u32 {
        self.terms.keys().map(|m| m.degree_of(idx)).max().unwrap_or(0)
    }

    /// Whether the polynomial only involves state variables.
    pub fn is_state_only(&self) -> bool {
        self.terms
            .keys()
            .all(|m| m.within(&self.vars, VarSubset::States))
    }

    fn canonicalize(&mut self) {
        self.terms.retain(|_, c| c.abs() >= COEFF_EPS);
    }

    fn check_same_vars(&self, other: &Polynomial) -> Result<(), PolyError> {
        if self.vars == other.vars {
            Ok(())
        } else {
            Err(PolyError::VarSetMismatch)
        }
    }

    pub fn try_add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_same_vars(other)?;
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            *out.terms.entry(m.clone()).or_insert(0.0) += c;
        }
        out.canonicalize();
        Ok(out)
    }

    pub fn try_sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.try_add(&other.neg())
    }

    pub fn try_mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_same_vars(other)?;
        let mut out = Polynomial::zero(&self.vars);
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &other.terms {
                *out.terms.entry(ma.mul(mb)).or_insert(0.0) += ca * cb;
            }
        }
        out.canonicalize();
        Ok(out)
    }

    pub fn neg(&self) -> Polynomial {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = -*c;
        }
        out
    }

    pub fn scale(&self, k: f64) -> Polynomial {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c *= k;
        }
        out.canonicalize();
        out
    }

    /// Formal partial derivative with respect to the variable at `idx`.
    pub fn partial(&self, idx: usize) -> Polynomial {
        let mut out = Polynomial::zero(&self.vars);
        for (m, &c) in &self.terms {
            let e = m.degree_of(idx);
            if e == 0 {
                continue;
            }
            let mut exps = m.exponents().to_vec();
            exps[idx] = e - 1;
            *out.terms.entry(Monomial::new(exps)).or_insert(0.0) += c * e as f64;
        }
        out.canonicalize();
        out
    }

    /// Partial derivative by variable name.
    pub fn partial_named(&self, name: &str) -> Result<Polynomial, PolyError> {
        let idx = self
            .vars
            .index_of(name)
            .ok_or_else(|| PolyError::UnknownVariable(name.to_string()))?;
        Ok(self.partial(idx))
    }

    /// Evaluate at a full assignment indexed like the variable set.
    pub fn evaluate(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.vars.len());
        self.terms.iter().map(|(m, c)| c * m.eval(point)).sum()
    }

    /// Evaluate with a named assignment. Every variable that actually
    /// appears in the polynomial must be assigned.
    pub fn evaluate_named(
        &self,
        point: &BTreeMap<String, f64>,
    ) -> Result<f64, PolyError> {
        let mut full = vec![0.0; self.vars.len()];
        let mut assigned = vec![false; self.vars.len()];
        for (name, &v) in point {
            if let Some(i) = self.vars.index_of(name) {
                full[i] = v;
                assigned[i] = true;
            }
        }
        for m in self.terms.keys() {
            for (i, &e) in m.exponents().iter().enumerate() {
                if e > 0 && !assigned[i] {
                    return Err(PolyError::MissingAssignment(
                        self.vars.name(i).to_string(),
                    ));
                }
            }
        }
        Ok(self.evaluate(&full))
    }

    /// Largest monomial dividing every term, together with no coefficient
    /// normalization. Returns the constant monomial for the zero polynomial.
    pub fn common_monomial_factor(&self) -> Monomial {
        let n = self.vars.len();
        let mut mins: Option<Vec<u32>> = None;
        for m in self.terms.keys() {
            match &mut mins {
                None => mins = Some(m.exponents().to_vec()),
                Some(mins) => {
                    for (a, &b) in mins.iter_mut().zip(m.exponents()) {
                        *a = (*a).min(b);
                    }
                }
            }
        }
        Monomial::new(mins.unwrap_or_else(|| vec![0; n]))
    }

    /// Divide out a monomial that divides every term.
    pub fn div_monomial(&self, m: &Monomial) -> Option<Polynomial> {
        let mut out = Polynomial::zero(&self.vars);
        for (t, &c) in &self.terms {
            let mut exps = Vec::with_capacity(t.exponents().len());
            for (&a, &b) in t.exponents().iter().zip(m.exponents()) {
                if a < b {
                    return None;
                }
                exps.push(a - b);
            }
            out.terms.insert(Monomial::new(exps), c);
        }
        Some(out)
    }

    /// Euclidean norm of the coefficient vector.
    pub fn coeff_norm(&self) -> f64 {
        self.terms.values().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Maximum absolute difference of coefficients against `other`.
    pub fn coeff_distance(&self, other: &Polynomial) -> f64 {
        let mut d: f64 = 0.0;
        for (m, &c) in &self.terms {
            d = d.max((c - other.coefficient(m)).abs());
        }
        for (m, &c) in &other.terms {
            d = d.max((c - self.coefficient(m)).abs());
        }
        d
    }
}

impl std::ops::Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.try_add(rhs).expect("variable set mismatch")
    }
}

impl std::ops::Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.try_sub(rhs).expect("variable set mismatch")
    }
}

impl std::ops::Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.try_mul(rhs).expect("variable set mismatch")
    }
}

impl std::ops::Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        Polynomial::neg(self)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", crate::polyparse::format_poly(self))
    }
}

/// All monomials over the chosen variable subset with total degree in
/// `[dmin, dmax]`, in graded-lexicographic order.
pub fn monomial_basis(
    vars: &Arc<VariableSet>,
    subset: VarSubset,
    dmin: usize,
    dmax: usize,
) -> Result<Vec<Monomial>, PolyError> {
    if dmin > dmax {
        return Err(PolyError::InvalidDegreeWindow { dmin, dmax });
    }
    let idxs = vars.subset_indices(subset);
    let n_total = vars.len();
    let mut out = Vec::new();
    for d in dmin..=dmax {
        let mut exps = vec![0u32; n_total];
        enumerate_degree(&idxs, 0, d as u32, &mut exps, &mut out);
    }
    Ok(out)
}

fn enumerate_degree(
    idxs: &[usize],
    pos: usize,
    remaining: u32,
    exps: &mut Vec<u32>,
    out: &mut Vec<Monomial>,
) {
    if pos == idxs.len() {
        if remaining == 0 {
            out.push(Monomial::new(exps.clone()));
        }
        return;
    }
    if pos == idxs.len() - 1 {
        exps[idxs[pos]] = remaining;
        out.push(Monomial::new(exps.clone()));
        exps[idxs[pos]] = 0;
        return;
    }
    // Highest exponent on the earliest variable first.
    for e in (0..=remaining).rev() {
        exps[idxs[pos]] = e;
        enumerate_degree(idxs, pos + 1, remaining - e, exps, out);
    }
    exps[idxs[pos]] = 0;
}

/// Gradient of `v` dotted with the vector field `f`: Σ_i ∂v/∂x_i · f_i.
///
/// `f` must have one entry per state variable.
pub fn grad_dot(v: &Polynomial, f: &[Polynomial]) -> Result<Polynomial, PolyError> {
    let n_states = v.vars().n_states();
    if f.len() != n_states {
        return Err(PolyError::LengthMismatch { expected: n_states, got: f.len() });
    }
    let mut acc = Polynomial::zero(v.vars());
    for (i, fi) in f.iter().enumerate() {
        acc = acc.try_add(&v.partial(i).try_mul(fi)?)?;
    }
    Ok(acc)
}
