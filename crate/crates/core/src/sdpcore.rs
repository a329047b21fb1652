//! Block semidefinite programs in linear matrix inequality form and a conic
//! interior-point backend.
//!
//! A problem over scalars `y` asks for each block `b`
//! `Σ_j y_j F_{b,j} - C_b ⪰ 0` (elementwise nonnegative diagonal for
//! diagonal blocks), subject to linear equalities `A y = b` and an optional
//! linear objective `min cᵀ y`. Solutions are re-validated here: a problem is
//! reported feasible only when equality residuals and block eigenvalue
//! bounds hold, and infeasible only with a verified improving-ray
//! certificate.

use std::fmt::Write as _;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("block {block}: entry ({i},{j}) outside dimension {dim}")]
    EntryOutOfRange { block: usize, i: usize, j: usize, dim: usize },
    #[error("block {block}: diagonal block has off-diagonal entry ({i},{j})")]
    OffDiagonalEntry { block: usize, i: usize, j: usize },
    #[error("block {block}: entries must satisfy i <= j, got ({i},{j})")]
    LowerTriangleEntry { block: usize, i: usize, j: usize },
    #[error("scalar index {var} out of range (n_vars = {n_vars})")]
    VarOutOfRange { var: usize, n_vars: usize },
    #[error("equality row {row} has length mismatch with right-hand side")]
    EqualityShape { row: usize },
    #[error("solver setup failed: {0}")]
    Setup(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One block of the constraint `Σ_j y_j F_j - C ⪰ 0`.
///
/// Entries are sparse upper-triangle triplets. `const_entries` populate `C`,
/// `coeff_entries` populate `F_var` as `(var, i, j, value)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpBlock {
    pub dim: usize,
    /// Diagonal blocks only constrain their diagonal to be nonnegative.
    pub diag: bool,
    pub const_entries: Vec<(usize, usize, f64)>,
    pub coeff_entries: Vec<(usize, usize, usize, f64)>,
}

impl SdpBlock {
    /// Dense constraint matrix value `Σ y_j F_j - C` at the given scalars.
    pub fn value_at(&self, y: &[f64]) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.const_entries {
            s[(i, j)] -= v;
            if i != j {
                s[(j, i)] -= v;
            }
        }
        for &(var, i, j, v) in &self.coeff_entries {
            let w = y[var] * v;
            s[(i, j)] += w;
            if i != j {
                s[(j, i)] += w;
            }
        }
        s
    }
}

/// Block SDP with linear equalities and an optional linear objective.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SdpProblem {
    pub n_vars: usize,
    pub blocks: Vec<SdpBlock>,
    /// Sparse rows of `A` in `A y = b`.
    pub eq_rows: Vec<Vec<(usize, f64)>>,
    pub eq_rhs: Vec<f64>,
    /// Sparse `c` of `min cᵀ y`; `None` is pure feasibility.
    pub objective: Option<Vec<(usize, f64)>>,
}

impl SdpProblem {
    pub fn validate(&self) -> Result<(), SdpError> {
        for (b, blk) in self.blocks.iter().enumerate() {
            for &(i, j, _) in &blk.const_entries {
                self.check_entry(b, blk, i, j, None)?;
            }
            for &(var, i, j, _) in &blk.coeff_entries {
                self.check_entry(b, blk, i, j, Some(var))?;
            }
        }
        if self.eq_rows.len() != self.eq_rhs.len() {
            return Err(SdpError::EqualityShape { row: self.eq_rhs.len() });
        }
        for (r, row) in self.eq_rows.iter().enumerate() {
            for &(var, _) in row {
                if var >= self.n_vars {
                    return Err(SdpError::VarOutOfRange { var, n_vars: self.n_vars });
                }
            }
            let _ = r;
        }
        if let Some(obj) = &self.objective {
            for &(var, _) in obj {
                if var >= self.n_vars {
                    return Err(SdpError::VarOutOfRange { var, n_vars: self.n_vars });
                }
            }
        }
        Ok(())
    }

    fn check_entry(
        &self,
        b: usize,
        blk: &SdpBlock,
        i: usize,
        j: usize,
        var: Option<usize>,
    ) -> Result<(), SdpError> {
        if i >= blk.dim || j >= blk.dim {
            return Err(SdpError::EntryOutOfRange { block: b, i, j, dim: blk.dim });
        }
        if i > j {
            return Err(SdpError::LowerTriangleEntry { block: b, i, j });
        }
        if blk.diag && i != j {
            return Err(SdpError::OffDiagonalEntry { block: b, i, j });
        }
        if let Some(var) = var {
            if var >= self.n_vars {
                return Err(SdpError::VarOutOfRange { var, n_vars: self.n_vars });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Feasible,
    Infeasible,
    Unknown,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Relative duality gap bound for declaring feasibility with an objective.
    pub gap_tol: f64,
    /// Equality residual bound (infinity norm).
    pub feas_tol: f64,
    /// Allowed eigenvalue dip below zero for block values.
    pub psd_tol: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            gap_tol: 1e-8,
            feas_tol: 1e-7,
            psd_tol: 1e-7,
            max_iter: 200,
            verbose: false,
        }
    }
}

/// Improving-ray certificate of primal infeasibility.
#[derive(Debug, Clone)]
pub struct InfeasibilityCertificate {
    /// Multipliers on the equality rows.
    pub eq_dual: Vec<f64>,
    /// Multipliers on the block constraints (PSD/diagonal-nonnegative).
    pub block_duals: Vec<DMatrix<f64>>,
    /// `-bᵀz` of the certificate; positive and above tolerance.
    pub violation: f64,
    /// `‖Aᵀz‖∞` of the certificate; near zero.
    pub ray_residual: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub y: Vec<f64>,
    /// Value of each block constraint `Σ y F - C` at `y`, in block order.
    pub block_values: Vec<DMatrix<f64>>,
    pub eq_duals: Vec<f64>,
    pub block_duals: Vec<DMatrix<f64>>,
    pub objective_value: f64,
    /// Relative duality gap (0 for feasibility problems).
    pub gap: f64,
    /// (primal, dual) residual infinity norms as re-checked here.
    pub residuals: (f64, f64),
    /// Most negative block eigenvalue at `y` (0 if no blocks).
    pub min_block_eigenvalue: f64,
    pub iterations: u32,
    pub certificate: Option<InfeasibilityCertificate>,
    pub solver_status: String,
}

/// svec index of upper-triangle entry (i, j), i <= j, column-major.
fn svec_index(i: usize, j: usize) -> usize {
    j * (j + 1) / 2 + i
}

fn svec_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Reassemble a symmetric matrix from its scaled svec.
fn unsvec(v: &[f64], dim: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        for i in 0..=j {
            let x = v[svec_index(i, j)];
            if i == j {
                m[(i, j)] = x;
            } else {
                m[(i, j)] = x / SQRT2;
                m[(j, i)] = x / SQRT2;
            }
        }
    }
    m
}

struct ConicForm {
    /// Triplets of the clarabel constraint matrix `A_c` (rows x n_vars).
    a_rows: Vec<usize>,
    a_cols: Vec<usize>,
    a_vals: Vec<f64>,
    b: Vec<f64>,
    q: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
    n_rows: usize,
    /// Row offset of each block's slice, parallel to `blocks`.
    block_offsets: Vec<usize>,
    n_eq: usize,
}

/// Map to clarabel's form `min qᵀy s.t. A_c y + s = b, s ∈ K`.
/// Row layout: equalities first (zero cone), then one slice per block.
fn to_conic(p: &SdpProblem) -> ConicForm {
    let mut a_rows = Vec::new();
    let mut a_cols = Vec::new();
    let mut a_vals = Vec::new();
    let mut b = Vec::new();
    let mut cones = Vec::new();

    let n_eq = p.eq_rows.len();
    if n_eq > 0 {
        cones.push(SupportedConeT::ZeroConeT(n_eq));
    }
    for (r, row) in p.eq_rows.iter().enumerate() {
        for &(var, w) in row {
            a_rows.push(r);
            a_cols.push(var);
            a_vals.push(w);
        }
        b.push(p.eq_rhs[r]);
    }

    let mut offset = n_eq;
    let mut block_offsets = Vec::with_capacity(p.blocks.len());
    for blk in &p.blocks {
        block_offsets.push(offset);
        if blk.diag {
            // s_i = Σ y F[i,i] - C[i,i] >= 0, written as (-F) y + s = -C.
            cones.push(SupportedConeT::NonnegativeConeT(blk.dim));
            b.extend(std::iter::repeat_n(0.0, blk.dim));
            for &(i, _, v) in &blk.const_entries {
                b[offset + i] -= v;
            }
            for &(var, i, _, v) in &blk.coeff_entries {
                a_rows.push(offset + i);
                a_cols.push(var);
                a_vals.push(-v);
            }
            offset += blk.dim;
        } else {
            let len = svec_len(blk.dim);
            cones.push(SupportedConeT::PSDTriangleConeT(blk.dim));
            b.extend(std::iter::repeat_n(0.0, len));
            for &(i, j, v) in &blk.const_entries {
                let scale = if i == j { 1.0 } else { SQRT2 };
                b[offset + svec_index(i, j)] -= v * scale;
            }
            for &(var, i, j, v) in &blk.coeff_entries {
                let scale = if i == j { 1.0 } else { SQRT2 };
                a_rows.push(offset + svec_index(i, j));
                a_cols.push(var);
                a_vals.push(-v * scale);
            }
            offset += len;
        }
    }

    let mut q = vec![0.0; p.n_vars];
    if let Some(obj) = &p.objective {
        for &(var, w) in obj {
            q[var] += w;
        }
    }

    ConicForm { a_rows, a_cols, a_vals, b, q, cones, n_rows: offset, block_offsets, n_eq }
}

/// Solve the problem with a primal-dual interior-point method and
/// independently validate the claimed status.
pub fn solve(p: &SdpProblem, opts: &SolveOptions) -> Result<SdpSolution, SdpError> {
    p.validate()?;

    // Trivial presolve: rows with no coefficients are either vacuous or an
    // immediate contradiction.
    for (r, row) in p.eq_rows.iter().enumerate() {
        if row.is_empty() && p.eq_rhs[r].abs() > 1e-12 {
            return Ok(trivially_infeasible(p, r));
        }
    }
    let mut pruned = p.clone();
    let keep: Vec<bool> = pruned.eq_rows.iter().map(|r| !r.is_empty()).collect();
    let kept_index: Vec<usize> = (0..keep.len()).filter(|&r| keep[r]).collect();
    pruned.eq_rows = kept_index.iter().map(|&r| p.eq_rows[r].clone()).collect();
    pruned.eq_rhs = kept_index.iter().map(|&r| p.eq_rhs[r]).collect();

    if pruned.n_vars == 0 && pruned.blocks.iter().all(|b| b.dim == 0) {
        return Ok(trivially_feasible(p));
    }

    let cf = to_conic(&pruned);
    let a = CscMatrix::new_from_triplets(cf.n_rows, pruned.n_vars, cf.a_rows.clone(), cf.a_cols.clone(), cf.a_vals.clone());
    let pmat = CscMatrix::zeros((pruned.n_vars, pruned.n_vars));

    let settings = DefaultSettings {
        verbose: opts.verbose,
        max_iter: opts.max_iter,
        tol_gap_abs: opts.gap_tol.max(1e-10),
        tol_gap_rel: opts.gap_tol.max(1e-10),
        tol_feas: (0.1 * opts.feas_tol).clamp(1e-10, 1e-8),
        // When full accuracy stalls, let the solver return its best
        // reduced-accuracy iterate; the residual and eigenvalue checks
        // below decide whether it counts as feasible.
        reduced_tol_gap_abs: 5e-5,
        reduced_tol_gap_rel: 5e-5,
        reduced_tol_feas: 1e-5,
        reduced_tol_infeas_abs: 5e-6,
        reduced_tol_infeas_rel: 5e-6,
        reduced_tol_ktratio: 1e-4,
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(&pmat, &cf.q, &a, &cf.b, &cf.cones, settings)
        .map_err(|e| SdpError::Setup(format!("{e:?}")))?;
    solver.solve();
    let sol = &solver.solution;
    let solver_status = format!("{:?}", sol.status);

    let y = sol.x.clone();
    let z = sol.z.clone();

    // Split duals back into equality and block pieces (restoring pruned rows).
    let mut eq_duals = vec![0.0; p.eq_rows.len()];
    for (k, &r) in kept_index.iter().enumerate() {
        if k < cf.n_eq {
            eq_duals[r] = z[k];
        }
    }
    let split_blocks = |v: &[f64]| -> Vec<DMatrix<f64>> {
        pruned
            .blocks
            .iter()
            .zip(&cf.block_offsets)
            .map(|(blk, &off)| {
                if blk.diag {
                    DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(
                        &v[off..off + blk.dim],
                    ))
                } else {
                    unsvec(&v[off..off + svec_len(blk.dim)], blk.dim)
                }
            })
            .collect()
    };
    let block_duals = split_blocks(&z);

    match sol.status {
        // Dual-infeasible runs return an unboundedness ray, not an iterate,
        // so there is nothing meaningful to validate.
        SolverStatus::Unsolved
        | SolverStatus::DualInfeasible
        | SolverStatus::AlmostDualInfeasible => Ok(SdpSolution {
            status: SolveStatus::Unknown,
            block_values: p.blocks.iter().map(|blk| blk.value_at(&sol.x)).collect(),
            y,
            eq_duals,
            block_duals,
            objective_value: sol.obj_val,
            gap: f64::NAN,
            residuals: (f64::NAN, f64::NAN),
            min_block_eigenvalue: f64::NAN,
            iterations: sol.iterations,
            certificate: None,
            solver_status,
        }),
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            // Certificate: z with A_cᵀ z = 0, z ∈ K*, b_cᵀ z < 0.
            let mut at_z = vec![0.0f64; pruned.n_vars];
            for ((&r, &c), &v) in cf.a_rows.iter().zip(&cf.a_cols).zip(&cf.a_vals) {
                at_z[c] += v * z[r];
            }
            let ray_residual = at_z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let btz: f64 = cf.b.iter().zip(&z).map(|(b, z)| b * z).sum();
            let znorm = z.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
            let verified = -btz > opts.feas_tol && ray_residual <= 1e-5 * znorm.max(-btz);
            let certificate = InfeasibilityCertificate {
                eq_dual: eq_duals.clone(),
                block_duals: block_duals.clone(),
                violation: -btz,
                ray_residual,
            };
            Ok(SdpSolution {
                status: if verified { SolveStatus::Infeasible } else { SolveStatus::Unknown },
                y,
                block_values: p.blocks.iter().map(|blk| blk.value_at(&sol.x)).collect(),
                eq_duals,
                block_duals,
                objective_value: f64::NAN,
                gap: f64::NAN,
                residuals: (f64::NAN, f64::NAN),
                min_block_eigenvalue: f64::NAN,
                iterations: sol.iterations,
                certificate: Some(certificate),
                solver_status,
            })
        }
        // Solved, AlmostSolved, or a stalled terminal iterate (max
        // iterations, insufficient progress, numerical error): the solver's
        // label is advisory; the residual and eigenvalue checks decide.
        _ => {
            let block_values: Vec<DMatrix<f64>> =
                p.blocks.iter().map(|blk| blk.value_at(&y)).collect();
            let mut eq_res: f64 = 0.0;
            for (r, row) in p.eq_rows.iter().enumerate() {
                let lhs: f64 = row.iter().map(|&(v, w)| w * y[v]).sum();
                eq_res = eq_res.max((lhs - p.eq_rhs[r]).abs());
            }
            let mut min_eig: f64 = 0.0;
            for (blk, s) in p.blocks.iter().zip(&block_values) {
                if blk.dim == 0 {
                    continue;
                }
                let lam = if blk.diag {
                    (0..blk.dim).map(|i| s[(i, i)]).fold(f64::INFINITY, f64::min)
                } else {
                    s.clone()
                        .symmetric_eigen()
                        .eigenvalues
                        .iter()
                        .cloned()
                        .fold(f64::INFINITY, f64::min)
                };
                min_eig = min_eig.min(lam);
            }
            // Dual residual of the conic form: q + A_cᵀ z (P = 0).
            let mut dual_res_vec = cf.q.clone();
            for ((&r, &c), &v) in cf.a_rows.iter().zip(&cf.a_cols).zip(&cf.a_vals) {
                dual_res_vec[c] += v * z[r];
            }
            let dual_res = dual_res_vec.iter().fold(0.0f64, |m, v| m.max(v.abs()));

            let gap = if p.objective.is_some() {
                (sol.obj_val - sol.obj_val_dual).abs()
                    / f64::max(1.0, f64::max(sol.obj_val.abs(), sol.obj_val_dual.abs()))
            } else {
                0.0
            };

            let ok = eq_res <= opts.feas_tol
                && min_eig >= -opts.psd_tol
                && (p.objective.is_none() || gap <= opts.gap_tol.max(1e-6));
            Ok(SdpSolution {
                status: if ok { SolveStatus::Feasible } else { SolveStatus::Unknown },
                y,
                block_values,
                eq_duals,
                block_duals,
                objective_value: sol.obj_val,
                gap,
                residuals: (eq_res, dual_res),
                min_block_eigenvalue: min_eig,
                iterations: sol.iterations,
                certificate: None,
                solver_status,
            })
        }
    }
}

fn trivially_feasible(p: &SdpProblem) -> SdpSolution {
    let y = vec![0.0; p.n_vars];
    SdpSolution {
        status: SolveStatus::Feasible,
        block_values: p.blocks.iter().map(|b| b.value_at(&y)).collect(),
        y,
        eq_duals: vec![0.0; p.eq_rows.len()],
        block_duals: p.blocks.iter().map(|b| DMatrix::zeros(b.dim, b.dim)).collect(),
        objective_value: 0.0,
        gap: 0.0,
        residuals: (0.0, 0.0),
        min_block_eigenvalue: 0.0,
        iterations: 0,
        certificate: None,
        solver_status: "TriviallySolved".to_string(),
    }
}

fn trivially_infeasible(p: &SdpProblem, row: usize) -> SdpSolution {
    // The contradictory row 0 = c, c != 0 is its own certificate.
    let mut eq_dual = vec![0.0; p.eq_rows.len()];
    eq_dual[row] = -1.0 / p.eq_rhs[row];
    SdpSolution {
        status: SolveStatus::Infeasible,
        y: vec![0.0; p.n_vars],
        block_values: Vec::new(),
        eq_duals: eq_dual.clone(),
        block_duals: p.blocks.iter().map(|b| DMatrix::zeros(b.dim, b.dim)).collect(),
        objective_value: f64::NAN,
        gap: f64::NAN,
        residuals: (f64::NAN, f64::NAN),
        min_block_eigenvalue: f64::NAN,
        iterations: 0,
        certificate: Some(InfeasibilityCertificate {
            eq_dual,
            block_duals: Vec::new(),
            violation: 1.0,
            ray_residual: 0.0,
        }),
        solver_status: "TriviallyInfeasible".to_string(),
    }
}

/// Serialize to the SDPA sparse text format.
///
/// Equalities are lowered to paired `>= / <=` rows collected in one trailing
/// diagonal block, which [`import_sdpa`] recognizes and raises back. Floats
/// use shortest round-trip formatting, so export -> import -> export is
/// byte-identical.
pub fn export_sdpa(p: &SdpProblem) -> Result<String, SdpError> {
    p.validate()?;
    let n_eq = p.eq_rows.len();
    let n_blocks = p.blocks.len() + usize::from(n_eq > 0);

    let mut out = String::new();
    let _ = writeln!(out, "{}", p.n_vars);
    let _ = writeln!(out, "{}", n_blocks);
    let mut sizes: Vec<String> = p
        .blocks
        .iter()
        .map(|b| {
            if b.diag {
                format!("-{}", b.dim)
            } else {
                format!("{}", b.dim)
            }
        })
        .collect();
    if n_eq > 0 {
        sizes.push(format!("-{}", 2 * n_eq));
    }
    out.push_str(&sizes.join(" "));
    out.push('\n');
    let mut c = vec![0.0f64; p.n_vars];
    if let Some(obj) = &p.objective {
        for &(var, w) in obj {
            c[var] += w;
        }
    }
    let cs: Vec<String> = c.iter().map(|v| format!("{v}")).collect();
    out.push_str(&cs.join(" "));
    out.push('\n');

    // entry list sorted by (matno, block, i, j); matno 0 is the constant side
    let mut entries: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    for (b, blk) in p.blocks.iter().enumerate() {
        for &(i, j, v) in &blk.const_entries {
            if v != 0.0 {
                entries.push((0, b + 1, i + 1, j + 1, v));
            }
        }
        for &(var, i, j, v) in &blk.coeff_entries {
            if v != 0.0 {
                entries.push((var + 1, b + 1, i + 1, j + 1, v));
            }
        }
    }
    let eq_block = p.blocks.len() + 1;
    for (r, row) in p.eq_rows.iter().enumerate() {
        let pos = 2 * r + 1;
        let neg = 2 * r + 2;
        if p.eq_rhs[r] != 0.0 {
            entries.push((0, eq_block, pos, pos, p.eq_rhs[r]));
            entries.push((0, eq_block, neg, neg, -p.eq_rhs[r]));
        }
        for &(var, w) in row {
            if w != 0.0 {
                entries.push((var + 1, eq_block, pos, pos, w));
                entries.push((var + 1, eq_block, neg, neg, -w));
            }
        }
    }
    entries.sort_by_key(|a| (a.0, a.1, a.2, a.3));
    for (m, b, i, j, v) in entries {
        let _ = writeln!(out, "{m} {b} {i} {j} {v}");
    }
    Ok(out)
}

/// Parse the SDPA sparse text format produced by [`export_sdpa`] (and
/// whitespace variants of it).
pub fn import_sdpa(text: &str) -> Result<SdpProblem, SdpError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l))
        .filter(|(_, l)| {
            let t = l.trim_start();
            !(t.starts_with('"') || t.starts_with('*'))
        });
    let mut next_line = |what: &str| {
        lines
            .next()
            .ok_or_else(|| SdpError::Parse { line: 0, message: format!("missing {what} line") })
    };

    let (ln, l) = next_line("variable count")?;
    let n_vars: usize = parse_tok(l.split_whitespace().next().unwrap_or(""), ln, "variable count")?;
    let (ln, l) = next_line("block count")?;
    let n_blocks: usize = parse_tok(l.split_whitespace().next().unwrap_or(""), ln, "block count")?;

    let mut dims: Vec<i64> = Vec::new();
    let (ln, l) = next_line("block sizes")?;
    for tok in l.split_whitespace().take(n_blocks) {
        dims.push(parse_tok(tok, ln, "block size")?);
    }
    if dims.len() != n_blocks {
        return Err(SdpError::Parse {
            line: ln,
            message: format!("expected {n_blocks} block sizes, got {}", dims.len()),
        });
    }
    let mut c = vec![0.0f64; n_vars];
    if n_vars > 0 {
        let (ln, l) = next_line("objective")?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != n_vars {
            return Err(SdpError::Parse {
                line: ln,
                message: format!("expected {n_vars} objective entries, got {}", toks.len()),
            });
        }
        for (k, tok) in toks.iter().enumerate() {
            c[k] = parse_tok(tok, ln, "objective entry")?;
        }
    } else {
        // objective line may be empty but must exist when any data follows
        let _ = lines.next();
    }

    let mut blocks: Vec<SdpBlock> = dims
        .iter()
        .map(|&d| SdpBlock {
            dim: d.unsigned_abs() as usize,
            diag: d < 0,
            const_entries: Vec::new(),
            coeff_entries: Vec::new(),
        })
        .collect();

    for (ln, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 5 {
            return Err(SdpError::Parse {
                line: ln,
                message: format!("expected 5 fields, got {}", toks.len()),
            });
        }
        let matno: usize = parse_tok(toks[0], ln, "matrix number")?;
        let blkno: usize = parse_tok(toks[1], ln, "block number")?;
        let i: usize = parse_tok(toks[2], ln, "row index")?;
        let j: usize = parse_tok(toks[3], ln, "column index")?;
        let v: f64 = parse_tok(toks[4], ln, "value")?;
        if matno > n_vars {
            return Err(SdpError::Parse {
                line: ln,
                message: format!("matrix number {matno} exceeds variable count {n_vars}"),
            });
        }
        if blkno == 0 || blkno > blocks.len() {
            return Err(SdpError::Parse {
                line: ln,
                message: format!("block number {blkno} out of range"),
            });
        }
        let blk = &mut blocks[blkno - 1];
        if i == 0 || j == 0 || i > blk.dim || j > blk.dim || i > j {
            return Err(SdpError::Parse {
                line: ln,
                message: format!("entry ({i},{j}) invalid for block of size {}", blk.dim),
            });
        }
        if matno == 0 {
            blk.const_entries.push((i - 1, j - 1, v));
        } else {
            blk.coeff_entries.push((matno - 1, i - 1, j - 1, v));
        }
    }

    // Recognize a trailing diagonal block of paired +/- rows as equalities.
    let mut eq_rows = Vec::new();
    let mut eq_rhs = Vec::new();
    if let Some(last) = blocks
        .pop_if(|last| last.diag && last.dim > 0 && last.dim % 2 == 0 && is_equality_block(last))
    {
        let n_eq = last.dim / 2;
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_eq];
        let mut rhs = vec![0.0f64; n_eq];
        for &(i, _, v) in &last.const_entries {
            if i % 2 == 0 {
                rhs[i / 2] = v;
            }
        }
        for &(var, i, _, v) in &last.coeff_entries {
            if i % 2 == 0 {
                rows[i / 2].push((var, v));
            }
        }
        eq_rows = rows;
        eq_rhs = rhs;
    }

    let objective: Vec<(usize, f64)> = c
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(k, &v)| (k, v))
        .collect();

    let p = SdpProblem {
        n_vars,
        blocks,
        eq_rows,
        eq_rhs,
        objective: if objective.is_empty() { None } else { Some(objective) },
    };
    p.validate().map_err(|e| SdpError::Parse { line: 0, message: e.to_string() })?;
    Ok(p)
}

/// Whether every diagonal entry of the block pairs up as (row 2k, value v)
/// and (row 2k+1, value -v) over identical variable patterns.
fn is_equality_block(blk: &SdpBlock) -> bool {
    use std::collections::BTreeMap;
    // key: (pair index, matno or usize::MAX for the constant side)
    let mut pos: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut neg: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for &(i, _, v) in &blk.const_entries {
        let slot = if i % 2 == 0 { &mut pos } else { &mut neg };
        *slot.entry((i / 2, usize::MAX)).or_insert(0.0) += v;
    }
    for &(var, i, _, v) in &blk.coeff_entries {
        let slot = if i % 2 == 0 { &mut pos } else { &mut neg };
        *slot.entry((i / 2, var)).or_insert(0.0) += v;
    }
    if pos.len() != neg.len() || pos.is_empty() {
        return false;
    }
    pos.iter().all(|(k, &v)| neg.get(k) == Some(&-v))
}

fn parse_tok<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T, SdpError> {
    tok.parse().map_err(|_| SdpError::Parse {
        line,
        message: format!("invalid {what}: `{tok}`"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_geq(n_vars: usize, var: usize, lower: f64) -> SdpBlock {
        SdpBlock {
            dim: 1,
            diag: false,
            const_entries: vec![(0, 0, lower)],
            coeff_entries: vec![(var, 0, 0, 1.0)],
        }
        .tap_check(n_vars)
    }

    trait Tap {
        fn tap_check(self, n_vars: usize) -> Self;
    }
    impl Tap for SdpBlock {
        fn tap_check(self, _n: usize) -> Self {
            self
        }
    }

    #[test]
    fn minimize_with_lower_bound() {
        // min y s.t. y - 1 >= 0 -> y* = 1
        let p = SdpProblem {
            n_vars: 1,
            blocks: vec![scalar_geq(1, 0, 1.0)],
            eq_rows: vec![],
            eq_rhs: vec![],
            objective: Some(vec![(0, 1.0)]),
        };
        let sol = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Feasible);
        assert!((sol.y[0] - 1.0).abs() < 1e-6, "y = {}", sol.y[0]);
        assert!(sol.gap < 1e-6);
        assert!(sol.residuals.0 < 1e-7);
    }

    #[test]
    fn psd_completion_2x2() {
        // [[1, y], [y, 1]] >= 0 while maximizing y -> y* = 1.
        let p = SdpProblem {
            n_vars: 1,
            blocks: vec![SdpBlock {
                dim: 2,
                diag: false,
                const_entries: vec![(0, 0, -1.0), (1, 1, -1.0)],
                coeff_entries: vec![(0, 0, 1, 1.0)],
            }],
            eq_rows: vec![],
            eq_rhs: vec![],
            objective: Some(vec![(0, -1.0)]),
        };
        let sol = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Feasible);
        assert!((sol.y[0] - 1.0).abs() < 1e-5, "y = {}", sol.y[0]);
        assert!(sol.min_block_eigenvalue > -1e-7);
    }

    #[test]
    fn equality_and_bound_infeasible() {
        // y = 0 and y - 1 >= 0 cannot hold together.
        let p = SdpProblem {
            n_vars: 1,
            blocks: vec![scalar_geq(1, 0, 1.0)],
            eq_rows: vec![vec![(0, 1.0)]],
            eq_rhs: vec![0.0],
            objective: None,
        };
        let sol = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        let cert = sol.certificate.unwrap();
        assert!(cert.violation > 1e-7);
        assert!(cert.ray_residual < 1e-5 * cert.violation.max(1.0));
    }

    #[test]
    fn empty_row_contradiction_presolved() {
        let p = SdpProblem {
            n_vars: 1,
            blocks: vec![],
            eq_rows: vec![vec![], vec![(0, 1.0)]],
            eq_rhs: vec![1.0, 0.0],
            objective: None,
        };
        let sol = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        assert_eq!(sol.solver_status, "TriviallyInfeasible");
    }

    #[test]
    fn validation_rejects_bad_entries() {
        let p = SdpProblem {
            n_vars: 1,
            blocks: vec![SdpBlock {
                dim: 2,
                diag: false,
                const_entries: vec![(1, 0, 1.0)],
                coeff_entries: vec![],
            }],
            eq_rows: vec![],
            eq_rhs: vec![],
            objective: None,
        };
        assert!(matches!(p.validate(), Err(SdpError::LowerTriangleEntry { .. })));

        let p2 = SdpProblem {
            n_vars: 1,
            blocks: vec![SdpBlock {
                dim: 2,
                diag: true,
                const_entries: vec![],
                coeff_entries: vec![(0, 0, 1, 1.0)],
            }],
            eq_rows: vec![],
            eq_rhs: vec![],
            objective: None,
        };
        assert!(matches!(p2.validate(), Err(SdpError::OffDiagonalEntry { .. })));

        let p3 = SdpProblem {
            n_vars: 1,
            blocks: vec![],
            eq_rows: vec![vec![(3, 1.0)]],
            eq_rhs: vec![0.0],
            objective: None,
        };
        assert!(matches!(p3.validate(), Err(SdpError::VarOutOfRange { .. })));
    }

    #[test]
    fn sdpa_golden_snapshot() {
        // min y s.t. y - 1 >= 0
        let p = SdpProblem {
            n_vars: 1,
            blocks: vec![scalar_geq(1, 0, 1.0)],
            eq_rows: vec![],
            eq_rhs: vec![],
            objective: Some(vec![(0, 1.0)]),
        };
        let text = export_sdpa(&p).unwrap();
        assert_eq!(text, "1\n1\n1\n1\n0 1 1 1 1\n1 1 1 1 1\n");
    }

    #[test]
    fn sdpa_empty_problem() {
        let p = SdpProblem::default();
        let text = export_sdpa(&p).unwrap();
        assert_eq!(text, "0\n0\n\n\n");
        let back = import_sdpa(&text).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn sdpa_round_trip_with_equalities() {
        let p = SdpProblem {
            n_vars: 3,
            blocks: vec![
                SdpBlock {
                    dim: 2,
                    diag: false,
                    const_entries: vec![(0, 0, 0.5), (0, 1, -0.25)],
                    coeff_entries: vec![(0, 0, 0, 1.0), (1, 0, 1, 2.0), (2, 1, 1, -1.5)],
                },
                SdpBlock {
                    dim: 2,
                    diag: true,
                    const_entries: vec![(1, 1, 1.0)],
                    coeff_entries: vec![(0, 0, 0, 3.0), (2, 1, 1, 1.0)],
                },
            ],
            eq_rows: vec![vec![(0, 1.0), (2, -2.0)], vec![(1, 0.125)]],
            eq_rhs: vec![1.0, 0.0],
            objective: Some(vec![(1, -1.0)]),
        };
        let text = export_sdpa(&p).unwrap();
        let back = import_sdpa(&text).unwrap();
        assert_eq!(back, p);
        assert_eq!(export_sdpa(&back).unwrap(), text);

        // whitespace variants parse to the same problem
        let spaced = text.replace(' ', "  ");
        assert_eq!(import_sdpa(&spaced).unwrap(), p);
    }

    #[test]
    fn sdpa_parse_errors_carry_line_numbers() {
        let bad = "1\n1\n1\n1\n0 1 1 1 oops\n";
        match import_sdpa(bad) {
            Err(SdpError::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
        let bad2 = "1\n1\n1\n1\n0 2 1 1 1\n";
        assert!(matches!(import_sdpa(bad2), Err(SdpError::Parse { .. })));
    }
}
