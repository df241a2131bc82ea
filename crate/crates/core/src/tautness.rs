//! Divergence-sign evidence for (non-)tautness.
//!
//! A basic field `v` with `div^Q v ≥ 0` everywhere and `> 0` somewhere
//! witnesses a non-taut foliation; on a taut one every basic field has
//! `div^Q v ≡ 0` or takes both signs. The toolkit can only sample a grid, so
//! verdicts are evidence about one candidate field, never a proof.

use serde::{Deserialize, Serialize};

use crate::connection::{symbolic_mean_curvature, PointGeometry};
use crate::error::{Error, Result};
use crate::expr::{coordinate_name, Expr};
use crate::model::{
    check_basic, sample_grid, FoliationSplit, FrameModel, Grid, ModelKind, Point,
    VectorFieldSpec, BASIC_TOL,
};

pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictClass {
    IdenticallyZero,
    MixedSign,
    NonTautWitness,
    NegatedNonTautWitness,
    Inconclusive,
}

impl VerdictClass {
    pub fn label(self) -> &'static str {
        match self {
            VerdictClass::IdenticallyZero => "IDENTICALLY ZERO (consistent with taut)",
            VerdictClass::MixedSign => "MIXED SIGN (consistent with taut)",
            VerdictClass::NonTautWitness => "NON-TAUT WITNESS",
            VerdictClass::NegatedNonTautWitness => "NON-TAUT WITNESS (for -v)",
            VerdictClass::Inconclusive => "INCONCLUSIVE",
        }
    }

    pub fn epistemic_status(self) -> &'static str {
        match self {
            VerdictClass::NonTautWitness => {
                "evidence of non-tautness: div^Q v >= 0 at every sampled point and > 0 at some point (grid sampling, not a proof)"
            }
            VerdictClass::NegatedNonTautWitness => {
                "evidence of non-tautness: -v satisfies div^Q(-v) >= 0 at every sampled point and > 0 at some point (grid sampling, not a proof)"
            }
            VerdictClass::MixedSign => {
                "consistent with tautness for this candidate field only: div^Q v takes both signs on the grid"
            }
            VerdictClass::IdenticallyZero => {
                "consistent with tautness for this candidate field only: div^Q v vanishes on the grid"
            }
            VerdictClass::Inconclusive => "no grid points were sampled",
        }
    }

    /// Class of the verdict for `c·v` given the class for `v`.
    pub fn scaled(self, c: f64) -> VerdictClass {
        if c > 0.0 {
            return self;
        }
        match self {
            VerdictClass::NonTautWitness => VerdictClass::NegatedNonTautWitness,
            VerdictClass::NegatedNonTautWitness => VerdictClass::NonTautWitness,
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TautnessVerdict {
    pub class: VerdictClass,
    /// `None` only for an empty grid.
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub argmin: Option<Vec<f64>>,
    pub argmax: Option<Vec<f64>>,
    pub tolerance: f64,
    pub points: usize,
}

/// Sign classification of sampled values. Values within `±tol` count as zero.
pub fn classify_values(values: &[(Vec<f64>, f64)], tol: f64) -> TautnessVerdict {
    if values.is_empty() {
        return TautnessVerdict {
            class: VerdictClass::Inconclusive,
            min: None,
            max: None,
            argmin: None,
            argmax: None,
            tolerance: tol,
            points: 0,
        };
    }
    let mut lo = &values[0];
    let mut hi = &values[0];
    for entry in values {
        if entry.1 < lo.1 {
            lo = entry;
        }
        if entry.1 > hi.1 {
            hi = entry;
        }
    }
    let (min, max) = (lo.1, hi.1);
    let class = if max.abs().max(min.abs()) <= tol {
        VerdictClass::IdenticallyZero
    } else if min >= -tol && max > tol {
        VerdictClass::NonTautWitness
    } else if max <= tol && min < -tol {
        VerdictClass::NegatedNonTautWitness
    } else {
        VerdictClass::MixedSign
    };
    TautnessVerdict {
        class,
        min: Some(min),
        max: Some(max),
        argmin: Some(lo.0.clone()),
        argmax: Some(hi.0.clone()),
        tolerance: tol,
        points: values.len(),
    }
}

/// `div^Q v` at every grid point, paired with the point coordinates.
pub fn transverse_divergence_values(
    m: &FrameModel,
    split: &FoliationSplit,
    v: &VectorFieldSpec,
    grid: &Grid,
) -> Result<Vec<(Vec<f64>, f64)>> {
    grid.points
        .iter()
        .map(|p| {
            let geom = PointGeometry::at(m, p)?;
            let jet = v.jet(m, p)?;
            Ok((
                p.0.clone(),
                geom.divergence(&jet.values, &jet.derivatives, split.transverse()),
            ))
        })
        .collect()
}

fn require_basic(m: &FrameModel, split: &FoliationSplit, v: &VectorFieldSpec, grid: &Grid) -> Result<()> {
    let basic = check_basic(m, split, v, grid, BASIC_TOL)?;
    if !basic.basic {
        return Err(Error::NotBasic {
            residual: basic.worst_residual,
            point: basic.worst_point.unwrap_or_default(),
        });
    }
    Ok(())
}

/// Classifies the sign pattern of `div^Q v` over `grid`. Non-basic fields are refused.
pub fn classify_divergence(
    m: &FrameModel,
    split: &FoliationSplit,
    v: &VectorFieldSpec,
    grid: &Grid,
    tol: f64,
) -> Result<TautnessVerdict> {
    require_basic(m, split, v, grid)?;
    let values = transverse_divergence_values(m, split, v, grid)?;
    Ok(classify_values(&values, tol))
}

fn probe_grid(m: &FrameModel) -> Result<Grid> {
    let res = match m.dim {
        0..=2 => 16,
        3 => 8,
        _ => 4,
    };
    sample_grid(m, &[res])
}

/// The mean curvature field `κ^♯` of the leaves, offered as the canonical
/// witness candidate. Only available when `κ^♯` is itself basic.
pub fn alvarez_candidate(m: &FrameModel, split: &FoliationSplit) -> Result<VectorFieldSpec> {
    let candidate = match &m.kind {
        ModelKind::ConstantStructure(_) => {
            let geom = PointGeometry::at(m, &Point::abstract_point())?;
            VectorFieldSpec::Constant(geom.mean_curvature(split.leaf()).components)
        }
        ModelKind::Chart(_) => symbolic_mean_curvature(m, split.leaf())?,
    };
    let grid = probe_grid(m)?;
    let basic = check_basic(m, split, &candidate, &grid, BASIC_TOL)?;
    if !basic.basic {
        return Err(Error::MeanCurvatureNotBasic(basic.worst_residual));
    }
    Ok(candidate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureReport {
    /// `∫ div^Q v dμ`
    pub lhs: f64,
    /// `∫ ⟨v, κ^♯⟩ dμ`
    pub rhs: f64,
    pub abs_error: f64,
    pub resolution: Vec<usize>,
    pub density: String,
}

/// Both sides of `∫ div^Q v dμ = ∫ g(v, κ^♯) dμ` by the cell-centred rule,
/// weighted by the Riemannian density `1/|det A|` of the orthonormal frame.
pub fn green_check(
    m: &FrameModel,
    split: &FoliationSplit,
    v: &VectorFieldSpec,
    resolution: &[usize],
) -> Result<QuadratureReport> {
    if !m.is_chart() {
        return Err(Error::Unsupported(
            "green-check needs a chart model for quadrature".into(),
        ));
    }
    let grid = sample_grid(m, resolution)?;
    require_basic(m, split, v, &grid)?;
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for p in &grid.points {
        let det = m.frame_matrix(p)?.determinant().abs();
        if det < crate::model::FRAME_DET_MIN {
            return Err(Error::SingularFrame {
                point: p.0.clone(),
                det,
            });
        }
        let weight = grid.cell_volume / det;
        let geom = PointGeometry::at(m, p)?;
        let jet = v.jet(m, p)?;
        let kappa = geom.mean_curvature(split.leaf());
        lhs += weight * geom.divergence(&jet.values, &jet.derivatives, split.transverse());
        rhs += weight * kappa.dot(&jet.values);
    }
    Ok(QuadratureReport {
        lhs,
        rhs,
        abs_error: (lhs - rhs).abs(),
        resolution: grid.resolution,
        density: "1/|det(frame matrix)| (Riemannian density of the orthonormal frame)".into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeReport {
    /// `L_v ν_Q = 0` on the grid, i.e. `div^Q v ≡ 0`.
    pub preserved: bool,
    pub verdict: TautnessVerdict,
    pub dense_leaves: bool,
    pub explanation: String,
}

/// Tests whether a basic field preserves the transverse volume form. For basic
/// `v`, `L_v ν_Q = div^Q v · ν_Q`, so this is `div^Q v ≡ 0` on the grid.
pub fn volume_preservation_check(
    m: &FrameModel,
    split: &FoliationSplit,
    v: &VectorFieldSpec,
    grid: &Grid,
    tol: f64,
) -> Result<VolumeReport> {
    let verdict = classify_divergence(m, split, v, grid, tol)?;
    let preserved = verdict.class == VerdictClass::IdenticallyZero;
    let mut explanation = String::from(
        "for basic v, L_v nu_Q = div^Q v * nu_Q, so v preserves the transverse volume form exactly when div^Q v vanishes",
    );
    if m.dense_leaves {
        explanation.push_str(
            "; with dense leaves (asserted by the model) a taut foliation forces this for every basic field",
        );
    } else {
        explanation.push_str("; dense-leaves hypothesis not asserted, so no tautness conclusion is drawn");
    }
    Ok(VolumeReport {
        preserved,
        verdict,
        dense_leaves: m.dense_leaves,
        explanation,
    })
}

/// The `k`-fold cover unrolling coordinate `coord` (0-based): its period
/// becomes `k·L` and every expression is evaluated after reducing that
/// coordinate modulo the original period. The field is pulled back unchanged.
pub fn lift_to_cover(
    m: &FrameModel,
    split: &FoliationSplit,
    v: &VectorFieldSpec,
    coord: usize,
    k: usize,
) -> Result<(FrameModel, FoliationSplit, VectorFieldSpec)> {
    let ModelKind::Chart(chart) = &m.kind else {
        return Err(Error::Unsupported(
            "constant-structure models have no chart to unroll".into(),
        ));
    };
    if coord >= m.dim {
        return Err(Error::Schema(format!(
            "coordinate {} is not a periodic coordinate of `{}` (1..={})",
            coord + 1,
            m.name,
            m.dim
        )));
    }
    if k == 0 {
        return Err(Error::Schema("cover degree must be >= 1".into()));
    }
    v.check_against(m)?;
    if k == 1 {
        return Ok((m.clone(), split.clone(), v.clone()));
    }
    let base_period = chart.periods[coord];
    let mut lifted = m.clone();
    lifted.name = format!("{}~cover(x{},{k})", m.name, coord + 1);
    // a dense-leaves assertion does not survive unrolling in general
    lifted.dense_leaves = false;
    if let ModelKind::Chart(ch) = &mut lifted.kind {
        ch.periods[coord] = base_period * k as f64;
        if ch.reduction[coord].is_none() {
            ch.reduction[coord] = Some(base_period);
        }
    }
    Ok((lifted, split.clone(), v.clone()))
}

/// Average of a field on the `k`-fold cover over the deck translates
/// `x_c ↦ x_c + j·L` (`j = 0..k`), read as a field on the base model.
pub fn deck_average(
    base: &FrameModel,
    lifted_field: &VectorFieldSpec,
    coord: usize,
    k: usize,
) -> Result<VectorFieldSpec> {
    let ModelKind::Chart(chart) = &base.kind else {
        return Err(Error::Unsupported(
            "constant-structure models have no deck group here".into(),
        ));
    };
    if coord >= base.dim || k == 0 {
        return Err(Error::Schema("invalid coordinate or cover degree".into()));
    }
    let period = chart.periods[coord];
    let var = coordinate_name(coord);
    match lifted_field {
        VectorFieldSpec::Constant(c) => Ok(VectorFieldSpec::Constant(c.clone())),
        VectorFieldSpec::Expr { components, .. } => {
            let averaged = components
                .iter()
                .map(|e| {
                    let sum = (0..k).fold(Expr::Num(0.0), |acc, j| {
                        let shifted = Expr::add(Expr::var(&var), Expr::Num(j as f64 * period));
                        Expr::add(acc, e.substitute(&var, &shifted))
                    });
                    Expr::div(sum, Expr::Num(k as f64))
                })
                .collect();
            VectorFieldSpec::expressions(averaged, base.dim)
        }
    }
}
