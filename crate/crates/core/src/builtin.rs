//! Named example models.
//!
//! * `t3a`: suspension of a hyperbolic `SL(2,Z)` matrix (default `[[2,1],[1,1]]`),
//!   leaves along the larger eigenvalue's direction.
//! * `suspension-3`: suspension of `[[2,0,-1],[0,3,-1],[-1,-1,1]]`, leaves along
//!   the middle eigenvalue's direction.
//! * `torus-warped`: `T²` with metric `e^{2f(x2)} dx1² + dx2²` and leaves
//!   `x2 = const`; `f` defaults to `0.3*sin(2*pi*x2)`.
//! * `flat-kronecker`: flat `T²` foliated by lines of slope `tan θ = √2 − 1`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::expr::{self, Expr, Func};
use crate::model::{build_model, model_document, FoliationSplit, FrameModel, ModelDocument};
use crate::spectral::{build_suspension, IntegerMatrix};

pub const NAMES: [&str; 4] = ["t3a", "suspension-3", "torus-warped", "flat-kronecker"];

pub const T3A_MATRIX: &str = "2,1;1,1";
pub const SUSPENSION3_MATRIX: &str = "2,0,-1;0,3,-1;-1,-1,1";
pub const DEFAULT_WARP: &str = "0.3*sin(2*pi*x2)";

#[derive(Debug, Clone, Default)]
pub struct BuiltinOptions {
    /// Replaces the suspension matrix of `t3a` / `suspension-3`.
    pub matrix: Option<IntegerMatrix>,
    /// 1-based eigen-direction spanning the leaves of a suspension.
    pub leaf: Option<usize>,
    /// Warping function `f(x2)` of `torus-warped`.
    pub warp: Option<String>,
}

pub fn is_builtin(name: &str) -> bool {
    NAMES.contains(&name)
}

fn suspension_document(
    name: &str,
    default_matrix: &str,
    default_leaf: impl Fn(usize) -> usize,
    opts: &BuiltinOptions,
) -> Result<ModelDocument> {
    let matrix = match &opts.matrix {
        Some(m) => m.clone(),
        None => IntegerMatrix::parse(default_matrix)?,
    };
    let leaf = opts.leaf.unwrap_or_else(|| default_leaf(matrix.dim()));
    let (model, split) = build_suspension(&matrix, leaf)?;
    let mut doc = model_document(&model, &split);
    doc.name = name.to_string();
    Ok(doc)
}

/// The model document behind a builtin name.
pub fn builtin_document(name: &str, opts: &BuiltinOptions) -> Result<ModelDocument> {
    match name {
        "t3a" => suspension_document(name, T3A_MATRIX, |n| n, opts),
        "suspension-3" => suspension_document(name, SUSPENSION3_MATRIX, |n| n.div_ceil(2), opts),
        "torus-warped" => {
            let warp = opts.warp.as_deref().unwrap_or(DEFAULT_WARP);
            let f = expr::parse(warp)?;
            if let Some(bad) = f.variables().into_iter().find(|v| v != "x2") {
                return Err(Error::Schema(format!(
                    "warping function may only depend on x2, found `{bad}`"
                )));
            }
            let leaf_coeff = Expr::call(Func::Exp, Expr::neg(f));
            let frame = vec![
                vec![leaf_coeff, Expr::Num(0.0)],
                vec![Expr::Num(0.0), Expr::Num(1.0)],
            ];
            let model = FrameModel::chart(name, BTreeMap::new(), vec![1.0, 1.0], frame)?
                .with_description(format!(
                    "T^2 with metric exp(2 f) dx1^2 + dx2^2, f = {warp}; leaves x2 = const, E1 = exp(-f) d/dx1, E2 = d/dx2"
                ));
            Ok(model_document(&model, &FoliationSplit::new(2, &[0])?))
        }
        "flat-kronecker" => {
            let theta = (2f64.sqrt() - 1.0).atan();
            let mut params = BTreeMap::new();
            params.insert("theta".to_string(), theta);
            let e = |s: &str| expr::parse(s).expect("static expression");
            let frame = vec![
                vec![e("cos(theta)"), e("sin(theta)")],
                vec![e("-sin(theta)"), e("cos(theta)")],
            ];
            let model = FrameModel::chart(name, params, vec![1.0, 1.0], frame)?
                .with_dense_leaves(true)
                .with_description(
                    "flat T^2 foliated by lines of slope tan(theta) = sqrt(2) - 1 (irrational, dense leaves)",
                );
            Ok(model_document(&model, &FoliationSplit::new(2, &[0])?))
        }
        other => Err(Error::Schema(format!(
            "unknown builtin model `{other}` (available: {})",
            NAMES.join(", ")
        ))),
    }
}

pub fn builtin(name: &str, opts: &BuiltinOptions) -> Result<(FrameModel, FoliationSplit)> {
    build_model(&builtin_document(name, opts)?)
}
