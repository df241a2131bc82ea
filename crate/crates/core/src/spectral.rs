//! Exact spectral analysis of integer matrices and the suspension models
//! `ℝ ⋉_A ℝⁿ` they define.
//!
//! Characteristic polynomials are computed with Faddeev–LeVerrier over
//! checked 128-bit integers. Real roots are isolated with a Sturm sequence
//! over exact rationals and refined by Sturm-count bisection, so every
//! enclosure is certified.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::model::{FoliationSplit, FrameModel};

pub const MAX_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegerMatrix {
    n: usize,
    entries: Vec<i64>,
}

impl IntegerMatrix {
    pub fn new(rows: Vec<Vec<i64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Schema("matrix must be nonempty".into()));
        }
        if n > MAX_DIM {
            return Err(Error::Schema(format!(
                "matrix dimension {n} exceeds the supported maximum {MAX_DIM}"
            )));
        }
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Schema("matrix must be square".into()));
        }
        Ok(IntegerMatrix {
            n,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    /// Parses `"2,0,-1;0,3,-1;-1,-1,1"` (rows separated by `;`, entries by `,`).
    pub fn parse(text: &str) -> Result<Self> {
        let rows = text
            .split(';')
            .map(|row| {
                row.split(',')
                    .map(|e| {
                        e.trim().parse::<i64>().map_err(|_| {
                            Error::Schema(format!("invalid matrix entry `{}`", e.trim()))
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.entries[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<i64>> {
        self.entries.chunks(self.n).map(|c| c.to_vec()).collect()
    }

    pub fn trace(&self) -> i64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }
}

impl fmt::Display for IntegerMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = self
            .rows()
            .iter()
            .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
            .collect();
        f.write_str(&rows.join(";"))
    }
}

/// Integer polynomial, coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntPoly {
    pub coeffs: Vec<i64>,
}

impl IntPoly {
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval_i128(&self, x: i64) -> Option<i128> {
        let mut acc: i128 = 0;
        for &c in self.coeffs.iter().rev() {
            acc = acc.checked_mul(x as i128)?.checked_add(c as i128)?;
        }
        Some(acc)
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c as f64)
    }

    /// `Σ |a_i| |x|^i`, the natural scale for residuals at `x`.
    pub fn abs_scale(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * x.abs() + (c as f64).abs())
    }
}

fn superscript(n: usize) -> String {
    const DIGITS: [char; 10] = ['⁰', '¹', '²', '³', '⁴', '⁵', '⁶', '⁷', '⁸', '⁹'];
    n.to_string()
        .bytes()
        .map(|b| DIGITS[(b - b'0') as usize])
        .collect()
}

impl fmt::Display for IntPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (power, &c) in self.coeffs.iter().enumerate().rev() {
            if c == 0 {
                continue;
            }
            let sign = if c < 0 { "−" } else if first { "" } else { "+" };
            let magnitude = c.unsigned_abs();
            let body = match (power, magnitude) {
                (0, m) => m.to_string(),
                (1, 1) => "x".to_string(),
                (1, m) => format!("{m}x"),
                (p, 1) => format!("x{}", superscript(p)),
                (p, m) => format!("{m}x{}", superscript(p)),
            };
            write!(f, "{sign}{body}")?;
            first = false;
        }
        if first {
            f.write_str("0")?;
        }
        Ok(())
    }
}

/// Coefficients of `det(A − xI)`, leading coefficient `(−1)^n`.
pub fn char_poly(a: &IntegerMatrix) -> Result<IntPoly> {
    let n = a.dim();
    let overflow = || Error::Overflow("characteristic polynomial");
    // det(xI − A) = Σ c_i x^i, c_n = 1, via M_k = A M_{k−1} + c_{n−k+1} I,
    // c_{n−k} = −tr(A M_k) / k.
    let get = |i: usize, j: usize| a.get(i, j) as i128;
    let mut c = vec![0i128; n + 1];
    c[n] = 1;
    let mut m = vec![0i128; n * n];
    for k in 1..=n {
        let mut next = vec![0i128; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s: i128 = 0;
                for l in 0..n {
                    s = s
                        .checked_add(get(i, l).checked_mul(m[l * n + j]).ok_or_else(overflow)?)
                        .ok_or_else(overflow)?;
                }
                if i == j {
                    s = s.checked_add(c[n - k + 1]).ok_or_else(overflow)?;
                }
                next[i * n + j] = s;
            }
        }
        m = next;
        let mut trace: i128 = 0;
        for i in 0..n {
            for l in 0..n {
                trace = trace
                    .checked_add(get(i, l).checked_mul(m[l * n + i]).ok_or_else(overflow)?)
                    .ok_or_else(overflow)?;
            }
        }
        debug_assert_eq!(trace % k as i128, 0);
        c[n - k] = -trace / k as i128;
    }
    let sign: i128 = if n % 2 == 0 { 1 } else { -1 };
    let coeffs = c
        .into_iter()
        .map(|v| i64::try_from(sign * v).map_err(|_| overflow()))
        .collect::<Result<Vec<_>>>()?;
    Ok(IntPoly { coeffs })
}

// ---------------------------------------------------------------------------
// Sturm sequences

type RatPoly = Vec<BigRational>;

fn to_rat_poly(p: &IntPoly) -> RatPoly {
    p.coeffs
        .iter()
        .map(|&c| BigRational::from_integer(BigInt::from(c)))
        .collect()
}

fn trim(mut p: RatPoly) -> RatPoly {
    while p.last().is_some_and(|c| c.is_zero()) {
        p.pop();
    }
    p
}

fn derivative(p: &RatPoly) -> RatPoly {
    trim(
        p.iter()
            .enumerate()
            .skip(1)
            .map(|(i, c)| c * BigRational::from_integer(BigInt::from(i)))
            .collect(),
    )
}

fn remainder(a: &RatPoly, b: &RatPoly) -> RatPoly {
    let mut r = a.clone();
    let db = b.len() - 1;
    let lead = b[db].clone();
    while r.len() > db && !r.is_empty() {
        let shift = r.len() - 1 - db;
        let q = r[r.len() - 1].clone() / lead.clone();
        for (i, bc) in b.iter().enumerate() {
            r[shift + i] = r[shift + i].clone() - q.clone() * bc;
        }
        r.pop();
        r = trim(r);
    }
    r
}

fn eval_rat(p: &RatPoly, x: &BigRational) -> BigRational {
    p.iter()
        .rev()
        .fold(BigRational::zero(), |acc, c| acc * x + c)
}

struct Sturm {
    chain: Vec<RatPoly>,
}

impl Sturm {
    fn new(p: &IntPoly) -> Self {
        let p0 = trim(to_rat_poly(p));
        let p1 = derivative(&p0);
        let mut chain = vec![p0];
        if !p1.is_empty() {
            chain.push(p1);
        }
        loop {
            let len = chain.len();
            if len < 2 {
                break;
            }
            let r = remainder(&chain[len - 2], &chain[len - 1]);
            if r.is_empty() {
                break;
            }
            chain.push(r.into_iter().map(|c| -c).collect());
        }
        Sturm { chain }
    }

    fn sign_changes(signs: impl Iterator<Item = i8>) -> usize {
        let mut last = 0i8;
        let mut changes = 0;
        for s in signs.filter(|s| *s != 0) {
            if last != 0 && s != last {
                changes += 1;
            }
            last = s;
        }
        changes
    }

    fn changes_at(&self, x: &BigRational) -> usize {
        Self::sign_changes(self.chain.iter().map(|p| {
            let v = eval_rat(p, x);
            if v.is_positive() {
                1
            } else if v.is_negative() {
                -1
            } else {
                0
            }
        }))
    }

    fn changes_at_infinity(&self, positive: bool) -> usize {
        Self::sign_changes(self.chain.iter().map(|p| {
            let lead = p.last().expect("nonzero polynomial");
            let odd = (p.len() - 1) % 2 == 1;
            let s: i8 = if lead.is_positive() { 1 } else { -1 };
            if positive || !odd {
                s
            } else {
                -s
            }
        }))
    }

    /// Distinct roots in `(a, b]`.
    fn count(&self, a: &BigRational, b: &BigRational) -> usize {
        self.changes_at(a) - self.changes_at(b)
    }
}

/// A real root with a certified isolating interval `(lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealRoot {
    pub value: f64,
    pub enclosure: (f64, f64),
}

fn rat_to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

fn rat_from_f64(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite float")
}

/// Sorted real roots of `p`, each isolated between consecutive integers
/// (falling back to rational subdivision only when two roots share a unit
/// interval) and refined by Sturm-count bisection down to adjacent doubles.
pub fn real_eigenvalues(p: &IntPoly) -> Result<Vec<RealRoot>> {
    let degree = p.degree();
    if degree == 0 || p.coeffs.iter().all(|c| *c == 0) {
        return Ok(Vec::new());
    }
    let sturm = Sturm::new(p);
    let distinct = sturm.changes_at_infinity(false) - sturm.changes_at_infinity(true);
    if distinct < degree {
        return Err(Error::NonRealRoots {
            real: distinct,
            degree,
        });
    }
    // Cauchy bound 1 + max |a_i / a_n|, rounded up to an integer.
    let lead = (p.coeffs[degree] as f64).abs();
    let bound = 1.0
        + p.coeffs[..degree]
            .iter()
            .map(|c| (*c as f64).abs() / lead)
            .fold(0.0, f64::max);
    let b = bound.ceil() as i64 + 1;
    let mut intervals: Vec<(BigRational, BigRational)> = Vec::new();
    isolate(
        &sturm,
        BigRational::from_integer(BigInt::from(-b)),
        BigRational::from_integer(BigInt::from(b)),
        &mut intervals,
    );
    let zero_poly = trim(to_rat_poly(p));
    let roots = intervals
        .into_iter()
        .map(|(lo, hi)| {
            let enclosure = (rat_to_f64(&lo), rat_to_f64(&hi));
            let value = refine(&sturm, &zero_poly, &lo, &hi);
            RealRoot { value, enclosure }
        })
        .collect();
    Ok(roots)
}

fn isolate(
    sturm: &Sturm,
    a: BigRational,
    b: BigRational,
    out: &mut Vec<(BigRational, BigRational)>,
) {
    let count = sturm.count(&a, &b);
    if count == 0 {
        return;
    }
    let width = &b - &a;
    if width <= BigRational::one() && count == 1 {
        out.push((a, b));
        return;
    }
    let two = BigRational::from_integer(BigInt::from(2));
    let mid = if width > BigRational::one() {
        ((&a + &b) / &two).floor()
    } else {
        (&a + &b) / &two
    };
    isolate(sturm, a, mid.clone(), out);
    isolate(sturm, mid, b, out);
}

fn refine(sturm: &Sturm, p: &RatPoly, lo: &BigRational, hi: &BigRational) -> f64 {
    if eval_rat(p, hi).is_zero() {
        return rat_to_f64(hi);
    }
    // Work with doubles as bisection points; each count is exact.
    let mut lo_f = rat_to_f64(lo);
    let mut hi_f = rat_to_f64(hi);
    let mut lo_r = lo.clone();
    let mut hi_r = hi.clone();
    loop {
        let mid = 0.5 * (lo_f + hi_f);
        if mid <= lo_f || mid >= hi_f {
            break;
        }
        let mid_r = rat_from_f64(mid);
        if sturm.count(&lo_r, &mid_r) == 1 {
            if eval_rat(p, &mid_r).is_zero() {
                return mid;
            }
            hi_f = mid;
            hi_r = mid_r;
        } else {
            lo_f = mid;
            lo_r = mid_r;
        }
    }
    // lo < root < hi with no double strictly between; pick the closer residual
    let r_lo = eval_rat(p, &lo_r).abs();
    let r_hi = eval_rat(p, &hi_r).abs();
    if r_lo <= r_hi {
        lo_f
    } else {
        hi_f
    }
}

// ---------------------------------------------------------------------------
// Suspension admissibility and models

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuspensionDiagnostics {
    pub matrix: String,
    pub determinant: i64,
    pub char_poly: IntPoly,
    pub char_poly_text: String,
    pub eigenvalues: Option<Vec<RealRoot>>,
    pub trace: i64,
    /// Only reported for 2×2 matrices, where it is equivalent to admissibility.
    pub trace_greater_than_two: Option<bool>,
    pub admissible: bool,
    pub problems: Vec<String>,
}

/// Spectral data of an admissible matrix: eigenvalues sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    pub char_poly: IntPoly,
    pub eigenvalues: Vec<f64>,
    pub enclosures: Vec<(f64, f64)>,
    pub log_eigenvalues: Vec<f64>,
}

pub fn validate_suspension_matrix(a: &IntegerMatrix) -> SuspensionDiagnostics {
    let mut problems = Vec::new();
    let poly = char_poly(a);
    let (char_poly, determinant) = match &poly {
        Ok(p) => (p.clone(), p.coeffs[0]),
        Err(e) => {
            problems.push(e.to_string());
            (IntPoly { coeffs: vec![] }, 0)
        }
    };
    if poly.is_ok() && determinant != 1 {
        problems.push(format!("determinant is {determinant}, not 1"));
    }
    let eigenvalues = match &poly {
        Ok(p) => match real_eigenvalues(p) {
            Ok(roots) => {
                if p.eval_i128(1) == Some(0) {
                    problems.push("1 is an eigenvalue".into());
                }
                if roots.iter().any(|r| r.value <= 0.0) {
                    problems.push("non-positive eigenvalue".into());
                }
                Some(roots)
            }
            Err(e) => {
                problems.push(e.to_string());
                None
            }
        },
        Err(_) => None,
    };
    let trace = a.trace();
    SuspensionDiagnostics {
        matrix: a.to_string(),
        determinant,
        char_poly_text: char_poly.to_string(),
        char_poly,
        eigenvalues,
        trace,
        trace_greater_than_two: (a.dim() == 2).then_some(trace > 2),
        admissible: problems.is_empty(),
        problems,
    }
}

pub fn spectral_data(a: &IntegerMatrix) -> Result<SpectralData> {
    let diag = validate_suspension_matrix(a);
    if !diag.admissible {
        return Err(Error::InadmissibleMatrix(diag.problems.join("; ")));
    }
    let roots = diag.eigenvalues.expect("admissible matrices have real spectra");
    Ok(SpectralData {
        char_poly: diag.char_poly,
        eigenvalues: roots.iter().map(|r| r.value).collect(),
        enclosures: roots.iter().map(|r| r.enclosure).collect(),
        log_eigenvalues: roots.iter().map(|r| r.value.ln()).collect(),
    })
}

pub fn log_eigenvalue_param(i: usize) -> String {
    format!("ln_lambda_{}", i + 1)
}

/// Constant-structure model on `Γ\(ℝ ⋉_A ℝⁿ)` with frame `E_1` (flow of the
/// suspension) and `E_{i+1}` (eigen-direction of the `i`-th smallest
/// eigenvalue), brackets `[E_1, E_{i+1}] = ln λ_i E_{i+1}` and all others zero.
/// `leaf_eigen_index` (1-based) picks the eigen-direction spanning the leaves.
pub fn build_suspension(
    a: &IntegerMatrix,
    leaf_eigen_index: usize,
) -> Result<(FrameModel, FoliationSplit)> {
    let n = a.dim();
    if leaf_eigen_index == 0 || leaf_eigen_index > n {
        return Err(Error::Schema(format!(
            "leaf index {leaf_eigen_index} out of range 1..={n}"
        )));
    }
    let data = spectral_data(a)?;
    let mut params = BTreeMap::new();
    let mut entries = Vec::with_capacity(n);
    for (i, ln) in data.log_eigenvalues.iter().enumerate() {
        let name = log_eigenvalue_param(i);
        params.insert(name.clone(), *ln);
        entries.push((0, i + 1, i + 1, Expr::Var(name)));
    }
    let model = FrameModel::constant_structure(
        format!("suspension[{a}]"),
        n + 1,
        params,
        entries,
    )?
    .with_description(format!(
        "suspension of A = [{a}] on the compact quotient of R x_A R^{n}; compactness of the quotient is assumed; leaves spanned by the eigen-direction of lambda_{leaf_eigen_index}"
    ));
    let split = FoliationSplit::new(n + 1, &[leaf_eigen_index])?;
    Ok((model, split))
}
