//! On-disk controller document: exponent-vector/coefficient term lists plus
//! run metadata, written as deterministic JSON (term order follows the
//! graded-lex polynomial order).

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use ratsyn::synth::{RationalController, SynthesisResult};
use ratsyn::{Monomial, Polynomial, VariableSet};
use serde::{Deserialize, Serialize};

/// One polynomial as a list of `(exponents, coefficient)` terms.
pub type PolyDoc = Vec<(Vec<u32>, f64)>;

pub fn poly_to_doc(p: &Polynomial) -> PolyDoc {
    p.terms().map(|(m, c)| (m.exponents().to_vec(), c)).collect()
}

pub fn doc_to_poly(doc: &PolyDoc, vars: &Arc<VariableSet>) -> Result<Polynomial> {
    for (exps, _) in doc {
        if exps.len() != vars.len() {
            bail!(
                "controller document term has {} exponents but the system has {} variables",
                exps.len(),
                vars.len()
            );
        }
    }
    Ok(Polynomial::from_terms(
        vars,
        doc.iter().map(|(exps, c)| (Monomial::new(exps.clone()), *c)),
    ))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ControllerDoc {
    pub system: String,
    pub mode: String,
    pub seed: u64,
    pub state_vars: Vec<String>,
    pub input_vars: Vec<String>,
    pub aux_vars: Vec<String>,
    pub p: Vec<PolyDoc>,
    pub q: Vec<PolyDoc>,
    /// Lyapunov function of the last certified iterate, when one exists.
    pub lyapunov: Option<PolyDoc>,
    pub feasible_iterations: usize,
    /// Largest radius actually certified.
    pub certified_r: Option<f64>,
    pub final_r: f64,
    pub final_gamma: f64,
    /// False for constructions that ship no positivity certificate for q.
    pub certified: bool,
}

impl ControllerDoc {
    pub fn from_result(
        system: &str,
        mode: &str,
        seed: u64,
        res: &SynthesisResult,
    ) -> ControllerDoc {
        let vars = res.controller.vars();
        ControllerDoc {
            system: system.to_string(),
            mode: mode.to_string(),
            seed,
            state_vars: vars.state_names().to_vec(),
            input_vars: vars.input_names().to_vec(),
            aux_vars: vars.aux_names().to_vec(),
            p: res.controller.p().iter().map(poly_to_doc).collect(),
            q: res.controller.q().iter().map(poly_to_doc).collect(),
            lyapunov: res.cert.as_ref().map(|c| poly_to_doc(&c.v)),
            feasible_iterations: res.feasible_iterations,
            certified_r: res.max_certified_r(),
            final_r: res.final_r,
            final_gamma: res.final_gamma,
            certified: res.cert.is_some(),
        }
    }

    pub fn controller(&self, vars: &Arc<VariableSet>) -> Result<RationalController> {
        if self.state_vars != vars.state_names() || self.input_vars != vars.input_names() {
            bail!(
                "controller document variables ({:?}; {:?}) do not match the system ({:?}; {:?})",
                self.state_vars,
                self.input_vars,
                vars.state_names(),
                vars.input_names()
            );
        }
        let p = self.p.iter().map(|d| doc_to_poly(d, vars)).collect::<Result<Vec<_>>>()?;
        let q = self.q.iter().map(|d| doc_to_poly(d, vars)).collect::<Result<Vec<_>>>()?;
        RationalController::new(p, q).context("controller document denominators are invalid")
    }

    pub fn lyapunov_poly(&self, vars: &Arc<VariableSet>) -> Result<Option<Polynomial>> {
        self.lyapunov.as_ref().map(|d| doc_to_poly(d, vars)).transpose()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text.as_bytes())
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<ControllerDoc> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading controller document {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("parsing controller document {}", path.display()))
    }
}
