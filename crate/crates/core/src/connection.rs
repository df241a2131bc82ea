//! Levi-Civita data in an orthonormal frame.
//!
//! With `g(E_i, E_j) = δ_ij` constant, the Koszul formula reduces to
//! `Γ_ij^k = ½ (C_ij^k + C_ki^j + C_kj^i)` where `Γ_ij^k = g(∇_{E_i} E_j, E_k)`.
//! Everything else here is built from that table and the field jets.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::model::{
    structure_functions, FrameModel, FrameTensor, ModelKind, Point, VectorFieldSpec,
};

/// `Γ_ij^k` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct ChristoffelTable(pub FrameTensor);

impl ChristoffelTable {
    pub fn from_structure(c: &FrameTensor) -> Self {
        let n = c.dim();
        let mut g = FrameTensor::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    g.set(
                        i,
                        j,
                        k,
                        0.5 * (c.get(i, j, k) + c.get(k, i, j) + c.get(k, j, i)),
                    );
                }
            }
        }
        ChristoffelTable(g)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.0.get(i, j, k)
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }
}

pub fn christoffel(m: &FrameModel, p: &Point) -> Result<ChristoffelTable> {
    Ok(ChristoffelTable::from_structure(&structure_functions(m, p)?))
}

/// Frame components of `κ_D^♯ = π_{D⊥}(Σ_{a∈D} ∇_{E_a} E_a)`; zero on `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanCurvatureVector {
    pub components: Vec<f64>,
}

impl MeanCurvatureVector {
    pub fn dot(&self, v: &[f64]) -> f64 {
        self.components.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(&self.components)
    }
}

fn check_index_set(n: usize, d: &[usize], proper: bool) -> Result<()> {
    if d.is_empty() {
        return Err(Error::Schema("index set must be nonempty".into()));
    }
    if let Some(bad) = d.iter().find(|&&i| i >= n) {
        return Err(Error::Schema(format!(
            "frame index {} out of range 1..={n}",
            bad + 1
        )));
    }
    if proper && d.len() >= n {
        return Err(Error::Schema("index set must be a proper subset".into()));
    }
    Ok(())
}

/// Geometry at one point: bracket table, Christoffel table.
#[derive(Debug, Clone)]
pub struct PointGeometry {
    pub structure: FrameTensor,
    pub christoffel: ChristoffelTable,
}

impl PointGeometry {
    pub fn at(m: &FrameModel, p: &Point) -> Result<Self> {
        let structure = structure_functions(m, p)?;
        let christoffel = ChristoffelTable::from_structure(&structure);
        Ok(PointGeometry {
            structure,
            christoffel,
        })
    }

    /// `(∇_{E_i} v)^k = E_i(v^k) + Σ_j v^j Γ_ij^k`.
    pub fn covariant_derivative(&self, values: &[f64], frame_derivs: &[f64], i: usize) -> Vec<f64> {
        let n = self.christoffel.dim();
        (0..n)
            .map(|k| {
                frame_derivs[k]
                    + (0..n)
                        .map(|j| values[j] * self.christoffel.get(i, j, k))
                        .sum::<f64>()
            })
            .collect()
    }

    /// `Σ_{i∈D} g(∇_{E_i} v, E_i)`.
    pub fn divergence(&self, values: &[f64], derivs: &[Vec<f64>], d: &[usize]) -> f64 {
        let n = self.christoffel.dim();
        d.iter()
            .map(|&i| {
                derivs[i][i]
                    + (0..n)
                        .map(|j| values[j] * self.christoffel.get(i, j, i))
                        .sum::<f64>()
            })
            .sum()
    }

    pub fn mean_curvature(&self, d: &[usize]) -> MeanCurvatureVector {
        let n = self.christoffel.dim();
        let components = (0..n)
            .map(|k| {
                if d.contains(&k) {
                    0.0
                } else {
                    d.iter().map(|&a| self.christoffel.get(a, a, k)).sum()
                }
            })
            .collect();
        MeanCurvatureVector { components }
    }
}

/// Frame components of `∇_{E_i} v` at `p` (`i` 0-based).
pub fn covariant_derivative(
    m: &FrameModel,
    v: &VectorFieldSpec,
    i: usize,
    p: &Point,
) -> Result<Vec<f64>> {
    check_index_set(m.dim, &[i], false)?;
    let geom = PointGeometry::at(m, p)?;
    let jet = v.jet(m, p)?;
    Ok(geom.covariant_derivative(&jet.values, &jet.derivatives[i], i))
}

/// `div^D v` at `p`. `D` = all indices gives the full divergence, `D` = the
/// transverse indices gives `div^Q`.
pub fn divergence_sub(m: &FrameModel, d: &[usize], v: &VectorFieldSpec, p: &Point) -> Result<f64> {
    check_index_set(m.dim, d, false)?;
    let geom = PointGeometry::at(m, p)?;
    let jet = v.jet(m, p)?;
    Ok(geom.divergence(&jet.values, &jet.derivatives, d))
}

pub fn divergence_full(m: &FrameModel, v: &VectorFieldSpec, p: &Point) -> Result<f64> {
    let all: Vec<usize> = (0..m.dim).collect();
    divergence_sub(m, &all, v, p)
}

/// Mean curvature of the sub-distribution spanned by `{E_a : a ∈ D}`.
pub fn mean_curvature(m: &FrameModel, d: &[usize], p: &Point) -> Result<MeanCurvatureVector> {
    check_index_set(m.dim, d, true)?;
    Ok(PointGeometry::at(m, p)?.mean_curvature(d))
}

// ---------------------------------------------------------------------------
// Symbolic route (chart models)

fn symbolic_det(a: &[Vec<Expr>]) -> Expr {
    let n = a.len();
    match n {
        0 => Expr::Num(1.0),
        1 => a[0][0].clone(),
        _ => {
            let mut acc = Expr::Num(0.0);
            for col in 0..n {
                if a[0][col] == Expr::Num(0.0) {
                    continue;
                }
                let term = Expr::mul(a[0][col].clone(), symbolic_det(&minor(a, 0, col)));
                acc = if col % 2 == 0 {
                    Expr::add(acc, term)
                } else {
                    Expr::sub(acc, term)
                };
            }
            acc
        }
    }
}

fn minor(a: &[Vec<Expr>], row: usize, col: usize) -> Vec<Vec<Expr>> {
    a.iter()
        .enumerate()
        .filter(|(r, _)| *r != row)
        .map(|(_, line)| {
            line.iter()
                .enumerate()
                .filter(|(c, _)| *c != col)
                .map(|(_, e)| e.clone())
                .collect()
        })
        .collect()
}

/// Structure functions of a chart frame as expressions, `table[i][j][k] = C_ij^k`.
///
/// Uses the adjugate of the frame matrix, so it is an independent route from
/// the pointwise LU solve in [`structure_functions`].
pub fn symbolic_structure_functions(m: &FrameModel) -> Result<Vec<Vec<Vec<Expr>>>> {
    let chart = match &m.kind {
        ModelKind::Chart(c) => c,
        ModelKind::ConstantStructure(cs) => {
            let t = cs.table();
            let n = m.dim;
            return Ok((0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| (0..n).map(|k| Expr::Num(t.get(i, j, k))).collect())
                        .collect()
                })
                .collect());
        }
    };
    let n = m.dim;
    let a = &chart.frame;
    let det = symbolic_det(a);
    // (A^{-1})[mm][k] = cof(k, mm) / det
    let cof: Vec<Vec<Expr>> = (0..n)
        .map(|k| {
            (0..n)
                .map(|mm| {
                    let d = symbolic_det(&minor(a, k, mm));
                    if (k + mm) % 2 == 0 {
                        d
                    } else {
                        Expr::neg(d)
                    }
                })
                .collect()
        })
        .collect();
    let mut table = vec![vec![vec![Expr::Num(0.0); n]; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let b: Vec<Expr> = (0..n)
                .map(|mm| {
                    let mut s = Expr::Num(0.0);
                    for l in 0..n {
                        s = Expr::add(
                            s,
                            Expr::sub(
                                Expr::mul(a[i][l].clone(), chart.derivative(j, mm, l).clone()),
                                Expr::mul(a[j][l].clone(), chart.derivative(i, mm, l).clone()),
                            ),
                        );
                    }
                    s
                })
                .collect();
            for k in 0..n {
                let mut s = Expr::Num(0.0);
                for (mm, bm) in b.iter().enumerate() {
                    s = Expr::add(s, Expr::mul(cof[k][mm].clone(), bm.clone()));
                }
                let c = Expr::div(s, det.clone());
                table[j][i][k] = Expr::neg(c.clone());
                table[i][j][k] = c;
            }
        }
    }
    Ok(table)
}

/// `κ_D^♯` as a field with expression components.
pub fn symbolic_mean_curvature(m: &FrameModel, d: &[usize]) -> Result<VectorFieldSpec> {
    check_index_set(m.dim, d, true)?;
    let c = symbolic_structure_functions(m)?;
    let n = m.dim;
    // Γ_aa^k = ½(C_aa^k + C_ka^a + C_ka^a) = C_ka^a
    let components: Vec<Expr> = (0..n)
        .map(|k| {
            if d.contains(&k) {
                return Expr::Num(0.0);
            }
            d.iter()
                .fold(Expr::Num(0.0), |acc, &a| Expr::add(acc, c[k][a][a].clone()))
        })
        .collect();
    if !m.is_chart() {
        let values = components
            .iter()
            .map(|e| e.as_constant().unwrap_or(0.0))
            .collect();
        return Ok(VectorFieldSpec::Constant(values));
    }
    VectorFieldSpec::expressions(components, n)
}
