//! Text front end: polynomial parsing and formatting, plus TOML system
//! descriptions.
//!
//! Grammar for polynomials, with arbitrary whitespace between tokens:
//!
//! ```text
//! poly   := [sign] term (sign term)*
//! term   := factor ('*' factor)*
//! factor := number | ident ('^' uint)?
//! number := digits ['.' digits] [('e'|'E') [sign] digits] | '.' digits ...
//! ```
//!
//! Exponents must be unsigned integers; `x^-1` is rejected at the `-`.

use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::polyalg::{Monomial, PolyError, Polynomial, VariableSet};
use crate::synth::SystemModel;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("parse error at offset {offset}: {message}")]
pub struct ParseError {
    /// Byte offset into the source string where the problem starts.
    pub offset: usize,
    pub message: String,
}

fn err<T>(offset: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { offset, message: message.into() })
}

struct Scanner<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn new(src: &'a str) -> Self {
        Scanner { src: src.as_bytes(), pos: 0 }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn slice(&self, from: usize) -> &'a str {
        std::str::from_utf8(&self.src[from..self.pos]).unwrap()
    }
}

/// Parse a polynomial over the given variable set.
pub fn parse_poly(src: &str, vars: &Arc<VariableSet>) -> Result<Polynomial, ParseError> {
    let mut sc = Scanner::new(src);
    let mut terms: Vec<(Monomial, f64)> = Vec::new();

    sc.skip_ws();
    if sc.peek().is_none() {
        return err(0, "empty polynomial");
    }
    loop {
        let mut sign = 1.0;
        sc.skip_ws();
        match sc.peek() {
            Some(b'+') => {
                sc.pos += 1;
            }
            Some(b'-') => {
                sign = -1.0;
                sc.pos += 1;
            }
            _ => {}
        }
        let (m, c) = parse_term(&mut sc, vars)?;
        terms.push((m, sign * c));

        sc.skip_ws();
        match sc.peek() {
            None => break,
            Some(b'+') | Some(b'-') => continue,
            Some(ch) => {
                return err(sc.pos, format!("expected `+`, `-` or end of input, found `{}`", ch as char));
            }
        }
    }
    Ok(Polynomial::from_terms(vars, terms))
}

fn parse_term(sc: &mut Scanner, vars: &Arc<VariableSet>) -> Result<(Monomial, f64), ParseError> {
    let mut coeff = 1.0f64;
    let mut exps = vec![0u32; vars.len()];
    loop {
        sc.skip_ws();
        let start = sc.pos;
        match sc.peek() {
            Some(ch) if ch.is_ascii_digit() || ch == b'.' => {
                coeff *= parse_number(sc)?;
            }
            Some(ch) if ch.is_ascii_alphabetic() || ch == b'_' => {
                let name = parse_ident(sc);
                let idx = vars
                    .index_of(name)
                    .ok_or_else(|| ParseError {
                        offset: start,
                        message: format!("unknown variable `{name}`"),
                    })?;
                let mut exp = 1u32;
                sc.skip_ws();
                if sc.peek() == Some(b'^') {
                    sc.pos += 1;
                    sc.skip_ws();
                    let estart = sc.pos;
                    match sc.peek() {
                        Some(ch) if ch.is_ascii_digit() => {
                            while matches!(sc.peek(), Some(c) if c.is_ascii_digit()) {
                                sc.pos += 1;
                            }
                            exp = sc.slice(estart).parse().map_err(|_| ParseError {
                                offset: estart,
                                message: "exponent does not fit in u32".into(),
                            })?;
                        }
                        _ => {
                            return err(sc.pos, "exponent must be an unsigned integer");
                        }
                    }
                }
                exps[idx] += exp;
            }
            Some(ch) => {
                return err(sc.pos, format!("expected a coefficient or variable, found `{}`", ch as char));
            }
            None => {
                return err(sc.pos, "expected a coefficient or variable, found end of input");
            }
        }
        sc.skip_ws();
        if sc.peek() == Some(b'*') {
            sc.pos += 1;
        } else {
            break;
        }
    }
    Ok((Monomial::new(exps), coeff))
}

fn parse_ident<'a>(sc: &mut Scanner<'a>) -> &'a str {
    let start = sc.pos;
    while matches!(sc.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
        sc.pos += 1;
    }
    sc.slice(start)
}

fn parse_number(sc: &mut Scanner) -> Result<f64, ParseError> {
    let start = sc.pos;
    while matches!(sc.peek(), Some(c) if c.is_ascii_digit()) {
        sc.pos += 1;
    }
    if sc.peek() == Some(b'.') {
        sc.pos += 1;
        while matches!(sc.peek(), Some(c) if c.is_ascii_digit()) {
            sc.pos += 1;
        }
    }
    if matches!(sc.peek(), Some(b'e') | Some(b'E')) {
        let mark = sc.pos;
        sc.pos += 1;
        if matches!(sc.peek(), Some(b'+') | Some(b'-')) {
            sc.pos += 1;
        }
        if matches!(sc.peek(), Some(c) if c.is_ascii_digit()) {
            while matches!(sc.peek(), Some(c) if c.is_ascii_digit()) {
                sc.pos += 1;
            }
        } else {
            // `e` belongs to an identifier, not this number
            sc.pos = mark;
        }
    }
    sc.slice(start)
        .parse()
        .map_err(|_| ParseError { offset: start, message: format!("invalid number `{}`", sc.slice(start)) })
}

/// Render a polynomial as parseable text: terms in descending total degree,
/// coefficients in shortest round-trip form, so `parse(format(p)) == p`.
pub fn format_poly(p: &Polynomial) -> String {
    if p.is_zero() {
        return "0".to_string();
    }
    let mut terms: Vec<(&Monomial, f64)> = p.terms().collect();
    terms.sort_by(|(ma, _), (mb, _)| {
        mb.degree().cmp(&ma.degree()).then_with(|| ma.cmp(mb))
    });

    let vars = p.vars();
    let mut out = String::new();
    for (k, (m, c)) in terms.iter().enumerate() {
        let mag = c.abs();
        if k == 0 {
            if *c < 0.0 {
                out.push('-');
            }
        } else if *c < 0.0 {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        let mut factors: Vec<String> = Vec::new();
        if mag != 1.0 || m.is_constant() {
            factors.push(format!("{mag}"));
        }
        for (i, &e) in m.exponents().iter().enumerate() {
            match e {
                0 => {}
                1 => factors.push(vars.name(i).to_string()),
                _ => factors.push(format!("{}^{}", vars.name(i), e)),
            }
        }
        out.push_str(&factors.join("*"));
    }
    out
}

#[derive(Debug, Error)]
pub enum SystemFileError {
    #[error("failed to read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("in field {field}: {source}")]
    Poly {
        field: String,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Vars(#[from] PolyError),
    #[error("expected {expected} dynamics entries (one per state), got {got}")]
    DynamicsCount { expected: usize, got: usize },
    #[error("dynamics[{0}]: denominator must be a nonzero polynomial in states and aux variables only")]
    BadDenominator(usize),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemFile {
    name: Option<String>,
    state_vars: Vec<String>,
    input_vars: Vec<String>,
    #[serde(default)]
    aux_vars: Vec<String>,
    dynamics: Vec<DynamicsEntry>,
    #[serde(default)]
    ineq_constraints: Vec<String>,
    #[serde(default)]
    eq_constraints: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DynamicsEntry {
    num: String,
    den: Option<String>,
}

/// Parse a TOML system description.
///
/// Each `[[dynamics]]` entry gives the numerator (and optional denominator)
/// of one state derivative, in state order. Inequality constraints are read
/// as `g(x) >= 0`, equality constraints as `h(x) = 0`.
pub fn parse_system(text: &str) -> Result<SystemModel, SystemFileError> {
    let file: SystemFile = toml::from_str(text)?;
    let vars = VariableSet::with_aux(
        file.state_vars.clone(),
        file.input_vars.clone(),
        file.aux_vars.clone(),
    )?;
    if file.dynamics.len() != vars.n_states() {
        return Err(SystemFileError::DynamicsCount {
            expected: vars.n_states(),
            got: file.dynamics.len(),
        });
    }
    let field_poly = |field: String, src: &str| -> Result<Polynomial, SystemFileError> {
        parse_poly(src, &vars).map_err(|source| SystemFileError::Poly { field, source })
    };

    let mut f_num = Vec::new();
    let mut f_den = Vec::new();
    for (i, dyn_i) in file.dynamics.iter().enumerate() {
        f_num.push(field_poly(format!("dynamics[{i}].num"), &dyn_i.num)?);
        let den = match &dyn_i.den {
            Some(src) => field_poly(format!("dynamics[{i}].den"), src)?,
            None => Polynomial::constant(&vars, 1.0),
        };
        let input_free = (0..vars.len())
            .filter(|&k| vars.is_input_index(k))
            .all(|k| den.degree_in(k) == 0);
        if den.is_zero() || !input_free {
            return Err(SystemFileError::BadDenominator(i));
        }
        f_den.push(den);
    }
    let mut g_ineq = Vec::new();
    for (i, src) in file.ineq_constraints.iter().enumerate() {
        g_ineq.push(field_poly(format!("ineq_constraints[{i}]"), src)?);
    }
    let mut h_eq = Vec::new();
    for (i, src) in file.eq_constraints.iter().enumerate() {
        h_eq.push(field_poly(format!("eq_constraints[{i}]"), src)?);
    }

    Ok(SystemModel {
        name: file.name.unwrap_or_else(|| "custom".to_string()),
        vars,
        f_num,
        f_den,
        g_ineq,
        h_eq,
        aux_rule: None,
    })
}

/// Load a TOML system description from disk.
pub fn load_system(path: impl AsRef<Path>) -> Result<SystemModel, SystemFileError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SystemFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_system(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vs() -> Arc<VariableSet> {
        VariableSet::new(vec!["x1", "x2"], vec!["u1"]).unwrap()
    }

    #[test]
    fn parses_basic_terms() {
        let vars = vs();
        let p = parse_poly("-2.5*x1^2*x2 + x1 - 1e-3", &vars).unwrap();
        assert_eq!(p.coefficient(&Monomial::new(vec![2, 1, 0])), -2.5);
        assert_eq!(p.coefficient(&Monomial::new(vec![1, 0, 0])), 1.0);
        assert_eq!(p.constant_term(), -1e-3);
        assert_eq!(p.n_terms(), 3);

        // whitespace variants and repeated factors
        let q = parse_poly("  x1 * x1*x2  ", &vars).unwrap();
        assert_eq!(q.coefficient(&Monomial::new(vec![2, 1, 0])), 1.0);

        // like terms merge, exact zero cancels away
        let r = parse_poly("x1 + x1 - 2*x1", &vars).unwrap();
        assert!(r.is_zero());

        assert_eq!(parse_poly("0", &vars).unwrap(), Polynomial::zero(&vars));
    }

    #[test]
    fn rejects_with_positions() {
        let vars = vs();
        // negative exponent: error points at the `-`
        let e = parse_poly("x1^-1", &vars).unwrap_err();
        assert_eq!(e.offset, 3);

        let e2 = parse_poly("x1 + zz", &vars).unwrap_err();
        assert_eq!(e2.offset, 5);
        assert!(e2.message.contains("zz"));

        let e3 = parse_poly("x1 x2", &vars).unwrap_err();
        assert_eq!(e3.offset, 3);

        let e4 = parse_poly("", &vars).unwrap_err();
        assert_eq!(e4.offset, 0);

        let e5 = parse_poly("x1 +", &vars).unwrap_err();
        assert_eq!(e5.offset, 4);
    }

    #[test]
    fn formats_descending_degree() {
        let vars = vs();
        let p = parse_poly("1 - x1^2 + 3*x2 - 2*x1*u1", &vars).unwrap();
        assert_eq!(format_poly(&p), "-x1^2 - 2*x1*u1 + 3*x2 + 1");
        assert_eq!(format_poly(&Polynomial::zero(&vars)), "0");
        assert_eq!(format_poly(&Polynomial::constant(&vars, -1.0)), "-1");
        assert_eq!(
            format_poly(&parse_poly("x2 - x1", &vars).unwrap()),
            "-x1 + x2"
        );
    }

    #[test]
    fn format_parse_round_trip() {
        let vars = vs();
        for src in [
            "x1^2 - 1",
            "0.1*x1*x2 - 7*u1^3 + 2.5e-2",
            "-x1 - x2 - u1",
            "123.456*x1^7",
        ] {
            let p = parse_poly(src, &vars).unwrap();
            let q = parse_poly(&format_poly(&p), &vars).unwrap();
            assert_eq!(p, q, "round trip of `{src}`");
        }
    }

    #[test]
    fn loads_system_toml() {
        let text = r#"
            name = "demo"
            state_vars = ["x1", "x2"]
            input_vars = ["u1"]
            ineq_constraints = ["1 - x1^2"]

            [[dynamics]]
            num = "x2"

            [[dynamics]]
            num = "2*x1 - x2 + u1"
            den = "1 + x1^2"
        "#;
        let sys = parse_system(text).unwrap();
        assert_eq!(sys.name, "demo");
        assert_eq!(sys.f_num.len(), 2);
        assert_eq!(format_poly(&sys.f_den[1]), "x1^2 + 1");
        assert_eq!(sys.g_ineq.len(), 1);
        assert!(sys.h_eq.is_empty());
    }

    #[test]
    fn system_toml_errors() {
        // wrong dynamics count
        let text = r#"
            state_vars = ["x1", "x2"]
            input_vars = ["u1"]
            [[dynamics]]
            num = "x2"
        "#;
        assert!(matches!(
            parse_system(text),
            Err(SystemFileError::DynamicsCount { expected: 2, got: 1 })
        ));

        // denominator containing an input
        let text2 = r#"
            state_vars = ["x1"]
            input_vars = ["u1"]
            [[dynamics]]
            num = "x1"
            den = "1 + u1"
        "#;
        assert!(matches!(
            parse_system(text2),
            Err(SystemFileError::BadDenominator(0))
        ));

        // parse error carries the field name
        let text3 = r#"
            state_vars = ["x1"]
            input_vars = []
            [[dynamics]]
            num = "x1 +"
        "#;
        match parse_system(text3) {
            Err(SystemFileError::Poly { field, .. }) => {
                assert_eq!(field, "dynamics[0].num");
            }
            other => panic!("expected poly error, got {other:?}"),
        }
    }
}
