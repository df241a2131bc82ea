//! Foliated manifold models described by a global orthonormal frame.
//!
//! Two flavours exist. A constant-structure model carries the brackets
//! `[E_i, E_j] = C_ij^k E_k` directly (left-invariant frames on compact
//! quotients of Lie groups), so every frame quantity is position independent.
//! A chart model lives on a periodic box and gives each frame vector as
//! expression-valued coordinate coefficients `E_i = a_i^m ∂_m`.
//!
//! The metric is never stored: the frame is orthonormal by definition, so the
//! musical isomorphisms are the identity on frame components.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{self, coordinate_index, coordinate_name, ChartEnv, Expr};

/// Smallest admissible `|det|` of a chart frame matrix.
pub const FRAME_DET_MIN: f64 = 1e-10;
/// Tolerance of the bracket-table checks in [`validate_model`].
pub const STRUCTURE_TOL: f64 = 1e-12;
/// Default tolerance of [`check_basic`].
pub const BASIC_TOL: f64 = 1e-9;

const RESERVED: [&str; 7] = ["pi", "e", "sin", "cos", "exp", "ln", "sqrt"];

/// A point of a model. Constant-structure models use the empty abstract point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn abstract_point() -> Point {
        Point(Vec::new())
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

/// Dense `n × n × n` array indexed `(i, j, k)`, used for both `C_ij^k` and `Γ_ij^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTensor {
    n: usize,
    data: Vec<f64>,
}

impl FrameTensor {
    pub fn zeros(n: usize) -> Self {
        FrameTensor {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.n + j) * self.n + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        self.data[(i * self.n + j) * self.n + k] = value;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Nonzero entries as `(i, j, k, value)` with 0-based indices.
    pub fn nonzero(&self) -> Vec<(usize, usize, usize, f64)> {
        let n = self.n;
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let v = self.get(i, j, k);
                    if v != 0.0 {
                        out.push((i, j, k, v));
                    }
                }
            }
        }
        out
    }
}

/// One user-supplied bracket coefficient, kept with its source expression.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureEntry {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub source: Expr,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantStructure {
    pub entries: Vec<StructureEntry>,
    table: FrameTensor,
}

impl ConstantStructure {
    pub fn table(&self) -> &FrameTensor {
        &self.table
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartFrame {
    pub periods: Vec<f64>,
    /// Row `i` holds the coordinate coefficients of `E_i`.
    pub frame: Vec<Vec<Expr>>,
    /// `derivatives[i][m][l] = ∂_l a_i^m`.
    derivatives: Vec<Vec<Vec<Expr>>>,
    /// Coordinates reduced modulo a base period before evaluation (covering models).
    pub reduction: Vec<Option<f64>>,
}

impl ChartFrame {
    pub fn derivative(&self, i: usize, m: usize, l: usize) -> &Expr {
        &self.derivatives[i][m][l]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    ConstantStructure(ConstantStructure),
    Chart(ChartFrame),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameModel {
    pub name: String,
    pub dim: usize,
    pub parameters: BTreeMap<String, f64>,
    pub dense_leaves: bool,
    pub description: Option<String>,
    pub kind: ModelKind,
}

/// Partition of frame indices (0-based) into leafwise and transverse sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoliationSplit {
    leaf: Vec<usize>,
    transverse: Vec<usize>,
}

impl FoliationSplit {
    pub fn new(dim: usize, leaf: &[usize]) -> Result<Self> {
        let mut sorted = leaf.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != leaf.len() {
            return Err(Error::Schema("duplicate leaf index".into()));
        }
        if sorted.is_empty() {
            return Err(Error::Schema("empty leaf set".into()));
        }
        if let Some(&bad) = sorted.iter().find(|&&i| i >= dim) {
            return Err(Error::Schema(format!(
                "leaf index {} out of range 1..={dim}",
                bad + 1
            )));
        }
        if sorted.len() == dim {
            return Err(Error::Schema("empty transverse set".into()));
        }
        let transverse = (0..dim).filter(|i| !sorted.contains(i)).collect();
        Ok(FoliationSplit {
            leaf: sorted,
            transverse,
        })
    }

    pub fn from_one_based(dim: usize, leaf: &[usize]) -> Result<Self> {
        if leaf.contains(&0) {
            return Err(Error::Schema("leaf indices are 1-based".into()));
        }
        let zero_based: Vec<usize> = leaf.iter().map(|i| i - 1).collect();
        Self::new(dim, &zero_based)
    }

    pub fn leaf(&self) -> &[usize] {
        &self.leaf
    }

    pub fn transverse(&self) -> &[usize] {
        &self.transverse
    }

    pub fn dim(&self) -> usize {
        self.leaf.len() + self.transverse.len()
    }

    pub fn leaf_one_based(&self) -> Vec<usize> {
        self.leaf.iter().map(|i| i + 1).collect()
    }
}

fn check_parameter_names(params: &BTreeMap<String, f64>) -> Result<()> {
    for (name, value) in params {
        let valid_ident = name
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic())
            && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !valid_ident {
            return Err(Error::Schema(format!("invalid parameter name `{name}`")));
        }
        if RESERVED.contains(&name.as_str()) || coordinate_index(name).is_some() {
            return Err(Error::Schema(format!(
                "parameter `{name}` shadows a reserved name or coordinate"
            )));
        }
        if !value.is_finite() {
            return Err(Error::Schema(format!("parameter `{name}` is not finite")));
        }
    }
    Ok(())
}

/// Checks that every variable of `e` is a coordinate below `coords` or a parameter.
fn check_bound(e: &Expr, coords: usize, params: &BTreeMap<String, f64>, ctx: &str) -> Result<()> {
    for var in e.variables() {
        let is_coord = coordinate_index(&var).is_some_and(|k| k < coords);
        if !is_coord && !params.contains_key(&var) {
            return Err(Error::Schema(format!("unbound variable `{var}` in {ctx}")));
        }
    }
    Ok(())
}

impl FrameModel {
    /// Constant-structure model from `(i, j, k, value)` entries with 0-based
    /// indices and `i != j`; the antisymmetric partner is filled in.
    pub fn constant_structure(
        name: impl Into<String>,
        dim: usize,
        parameters: BTreeMap<String, f64>,
        entries: Vec<(usize, usize, usize, Expr)>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Schema("dimension must be positive".into()));
        }
        check_parameter_names(&parameters)?;
        let mut table = FrameTensor::zeros(dim);
        let mut seen = vec![false; dim * dim * dim];
        let mut stored = Vec::with_capacity(entries.len());
        for (i, j, k, source) in entries {
            if i >= dim || j >= dim || k >= dim {
                return Err(Error::Schema(format!(
                    "structure constant index ({}, {}, {}) out of range 1..={dim}",
                    i + 1,
                    j + 1,
                    k + 1
                )));
            }
            if i == j {
                return Err(Error::Schema(format!(
                    "structure constant C_{{{0}{0}}}^{1} must vanish; give only i != j",
                    i + 1,
                    k + 1
                )));
            }
            let (a, b) = (i.min(j), i.max(j));
            let slot = (a * dim + b) * dim + k;
            if seen[slot] {
                return Err(Error::Schema(format!(
                    "structure constant C_{}{}^{} given twice",
                    a + 1,
                    b + 1,
                    k + 1
                )));
            }
            seen[slot] = true;
            check_bound(&source, 0, &parameters, "structure constant")?;
            let value = source.eval(&parameters)?;
            table.set(i, j, k, value);
            table.set(j, i, k, -value);
            stored.push(StructureEntry {
                i,
                j,
                k,
                source,
                value,
            });
        }
        Ok(FrameModel {
            name: name.into(),
            dim,
            parameters,
            dense_leaves: false,
            description: None,
            kind: ModelKind::ConstantStructure(ConstantStructure {
                entries: stored,
                table,
            }),
        })
    }

    /// Chart model on the periodic box `∏ [0, periods[m])`. Frame invertibility
    /// is not probed here; see [`load_model`] and [`validate_model`].
    pub fn chart(
        name: impl Into<String>,
        parameters: BTreeMap<String, f64>,
        periods: Vec<f64>,
        frame: Vec<Vec<Expr>>,
    ) -> Result<Self> {
        let dim = periods.len();
        if dim == 0 {
            return Err(Error::Schema("dimension must be positive".into()));
        }
        check_parameter_names(&parameters)?;
        if let Some(bad) = periods.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::Schema(format!("period {bad} is not a positive real")));
        }
        if frame.len() != dim || frame.iter().any(|row| row.len() != dim) {
            return Err(Error::Schema(format!("frame must be a {dim}x{dim} matrix")));
        }
        for (i, row) in frame.iter().enumerate() {
            for (m, e) in row.iter().enumerate() {
                check_bound(e, dim, &parameters, &format!("frame entry ({}, {})", i + 1, m + 1))?;
            }
        }
        let derivatives = frame
            .iter()
            .map(|row| {
                row.iter()
                    .map(|e| {
                        (0..dim)
                            .map(|l| e.differentiate(&coordinate_name(l)))
                            .collect::<std::result::Result<Vec<_>, _>>()
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(FrameModel {
            name: name.into(),
            dim,
            parameters,
            dense_leaves: false,
            description: None,
            kind: ModelKind::Chart(ChartFrame {
                periods,
                frame,
                derivatives,
                reduction: vec![None; dim],
            }),
        })
    }

    pub fn with_dense_leaves(mut self, dense: bool) -> Self {
        self.dense_leaves = dense;
        self
    }

    pub fn with_description(mut self, text: impl Into<String>) -> Self {
        self.description = Some(text.into());
        self
    }

    pub fn is_chart(&self) -> bool {
        matches!(self.kind, ModelKind::Chart(_))
    }

    pub fn chart_frame(&self) -> Option<&ChartFrame> {
        match &self.kind {
            ModelKind::Chart(c) => Some(c),
            ModelKind::ConstantStructure(_) => None,
        }
    }

    /// Coordinates actually used for evaluation (after any covering reduction).
    pub fn reduced_coords(&self, p: &Point) -> Vec<f64> {
        match &self.kind {
            ModelKind::Chart(chart) => p
                .coords()
                .iter()
                .zip(&chart.reduction)
                .map(|(x, r)| match r {
                    Some(period) => x.rem_euclid(*period),
                    None => *x,
                })
                .collect(),
            ModelKind::ConstantStructure(_) => Vec::new(),
        }
    }

    fn check_point(&self, p: &Point) -> Result<()> {
        let expected = if self.is_chart() { self.dim } else { 0 };
        if self.is_chart() && p.coords().len() != expected {
            return Err(Error::Schema(format!(
                "point has {} coordinates, model `{}` has {expected}",
                p.coords().len(),
                self.name
            )));
        }
        Ok(())
    }

    /// Evaluates `e` at `p` with coordinates and parameters bound.
    pub fn eval_at(&self, e: &Expr, p: &Point) -> Result<f64> {
        let coords = self.reduced_coords(p);
        let env = ChartEnv {
            coords: &coords,
            params: &self.parameters,
        };
        Ok(e.eval(&env)?)
    }

    /// Frame matrix `A[i][m] = a_i^m` at `p`; the identity for constant-structure models.
    pub fn frame_matrix(&self, p: &Point) -> Result<DMatrix<f64>> {
        self.check_point(p)?;
        match &self.kind {
            ModelKind::ConstantStructure(_) => Ok(DMatrix::identity(self.dim, self.dim)),
            ModelKind::Chart(chart) => {
                let coords = self.reduced_coords(p);
                let env = ChartEnv {
                    coords: &coords,
                    params: &self.parameters,
                };
                let n = self.dim;
                let mut a = DMatrix::zeros(n, n);
                for i in 0..n {
                    for m in 0..n {
                        a[(i, m)] = chart.frame[i][m].eval(&env)?;
                    }
                }
                Ok(a)
            }
        }
    }
}

/// `C_ij^k` at `p`, antisymmetric in `(i, j)`.
///
/// For chart models the coordinate bracket
/// `[E_i, E_j]^m = Σ_l (a_i^l ∂_l a_j^m − a_j^l ∂_l a_i^m)` is expressed back
/// in the frame by solving `Aᵀ c = b`.
pub fn structure_functions(m: &FrameModel, p: &Point) -> Result<FrameTensor> {
    match &m.kind {
        ModelKind::ConstantStructure(cs) => Ok(cs.table.clone()),
        ModelKind::Chart(chart) => {
            let n = m.dim;
            let a = m.frame_matrix(p)?;
            let det = a.determinant();
            if !(det.abs() >= FRAME_DET_MIN) {
                return Err(Error::SingularFrame {
                    point: p.0.clone(),
                    det: det.abs(),
                });
            }
            let coords = m.reduced_coords(p);
            let env = ChartEnv {
                coords: &coords,
                params: &m.parameters,
            };
            // da[i][m][l] = ∂_l a_i^m
            let mut da = vec![0.0; n * n * n];
            for i in 0..n {
                for mm in 0..n {
                    for l in 0..n {
                        da[(i * n + mm) * n + l] = chart.derivatives[i][mm][l].eval(&env)?;
                    }
                }
            }
            let lu = a.transpose().lu();
            let mut table = FrameTensor::zeros(n);
            for i in 0..n {
                for j in (i + 1)..n {
                    let mut b = nalgebra::DVector::zeros(n);
                    for mm in 0..n {
                        let mut s = 0.0;
                        for l in 0..n {
                            s += a[(i, l)] * da[(j * n + mm) * n + l]
                                - a[(j, l)] * da[(i * n + mm) * n + l];
                        }
                        b[mm] = s;
                    }
                    let c = lu.solve(&b).ok_or_else(|| Error::SingularFrame {
                        point: p.0.clone(),
                        det: det.abs(),
                    })?;
                    for k in 0..n {
                        table.set(i, j, k, c[k]);
                        table.set(j, i, k, -c[k]);
                    }
                }
            }
            Ok(table)
        }
    }
}

/// Sampling lattice over a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub resolution: Vec<usize>,
    pub points: Vec<Point>,
    /// Coordinate volume of one cell (1 for the abstract point).
    pub cell_volume: f64,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// An explicit list of points (no quadrature weights implied).
    pub fn from_points(points: Vec<Point>) -> Grid {
        Grid {
            resolution: vec![points.len()],
            points,
            cell_volume: 0.0,
        }
    }
}

fn lattice(periods: &[f64], resolution: &[usize], offset: f64) -> Vec<Point> {
    let total: usize = resolution.iter().product();
    let mut points = Vec::with_capacity(total);
    let mut index = vec![0usize; resolution.len()];
    for _ in 0..total {
        let coords = index
            .iter()
            .zip(resolution)
            .zip(periods)
            .map(|((&j, &n), &l)| (j as f64 + offset) * l / n as f64)
            .collect();
        points.push(Point(coords));
        // last coordinate varies fastest
        for d in (0..index.len()).rev() {
            index[d] += 1;
            if index[d] < resolution[d] {
                break;
            }
            index[d] = 0;
        }
    }
    points
}

/// Cell-centred lattice `(j + ½)·L_m / N_m` for chart models; the single
/// abstract point for constant-structure models. A single resolution entry
/// is broadcast to every coordinate.
pub fn sample_grid(m: &FrameModel, resolution: &[usize]) -> Result<Grid> {
    if resolution.contains(&0) {
        return Err(Error::Schema("grid resolution entries must be >= 1".into()));
    }
    match &m.kind {
        ModelKind::ConstantStructure(_) => Ok(Grid {
            resolution: vec![1],
            points: vec![Point::abstract_point()],
            cell_volume: 1.0,
        }),
        ModelKind::Chart(chart) => {
            let res: Vec<usize> = match resolution.len() {
                0 => vec![1; m.dim],
                1 => vec![resolution[0]; m.dim],
                k if k == m.dim => resolution.to_vec(),
                k => {
                    return Err(Error::Schema(format!(
                        "grid has {k} resolution entries, model dimension is {}",
                        m.dim
                    )))
                }
            };
            let cell_volume = chart
                .periods
                .iter()
                .zip(&res)
                .map(|(l, n)| l / *n as f64)
                .product();
            Ok(Grid {
                points: lattice(&chart.periods, &res, 0.5),
                resolution: res,
                cell_volume,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Worst value of the checked quantity (a residual, or `|det|` for invertibility).
    pub worst: f64,
    pub worst_point: Option<Vec<f64>>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Maximum Jacobi residual `|Σ_cyclic C_ij^m C_mk^l|` of a bracket table.
pub fn jacobi_residual(c: &FrameTensor) -> f64 {
    let n = c.dim();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut s = 0.0;
                    for m in 0..n {
                        s += c.get(i, j, m) * c.get(m, k, l)
                            + c.get(j, k, m) * c.get(m, i, l)
                            + c.get(k, i, m) * c.get(m, j, l);
                    }
                    worst = worst.max(s.abs());
                }
            }
        }
    }
    worst
}

fn antisymmetry_residual(c: &FrameTensor) -> f64 {
    let n = c.dim();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                worst = worst.max((c.get(i, j, k) + c.get(j, i, k)).abs());
            }
        }
    }
    worst
}

/// Structural diagnostics. Chart frames are probed at the grid points and at
/// the cell corners of the same lattice (which include the coordinate origin).
pub fn validate_model(m: &FrameModel, g: &Grid) -> ValidationReport {
    let mut checks = Vec::new();
    let mut worst_anti = (0.0, None);
    let mut anti_failed_eval = false;
    match &m.kind {
        ModelKind::ConstantStructure(cs) => {
            worst_anti = (antisymmetry_residual(&cs.table), None);
            let jac = jacobi_residual(&cs.table);
            checks.push(CheckOutcome {
                name: "jacobi".into(),
                passed: jac <= STRUCTURE_TOL,
                worst: jac,
                worst_point: None,
                tolerance: STRUCTURE_TOL,
            });
        }
        ModelKind::Chart(chart) => {
            let mut probes = g.points.clone();
            if g.resolution.len() == m.dim {
                probes.extend(lattice(&chart.periods, &g.resolution, 0.0));
            }
            let mut min_det = (f64::INFINITY, None);
            for p in &probes {
                let det = m
                    .frame_matrix(p)
                    .map(|a| a.determinant().abs())
                    .unwrap_or(f64::NAN);
                // NaN (evaluation failure) counts as singular
                if !(det >= min_det.0) {
                    min_det = (det, Some(p.0.clone()));
                }
            }
            checks.insert(
                0,
                CheckOutcome {
                    name: "frame_invertibility".into(),
                    passed: min_det.0 >= FRAME_DET_MIN,
                    worst: min_det.0,
                    worst_point: min_det.1,
                    tolerance: FRAME_DET_MIN,
                },
            );
            for p in &g.points {
                match structure_functions(m, p) {
                    Ok(c) => {
                        let r = antisymmetry_residual(&c);
                        if r > worst_anti.0 || worst_anti.1.is_none() {
                            worst_anti = (r.max(worst_anti.0), Some(p.0.clone()));
                        }
                    }
                    Err(_) => anti_failed_eval = true,
                }
            }
        }
    }
    checks.push(CheckOutcome {
        name: "antisymmetry".into(),
        passed: worst_anti.0 <= STRUCTURE_TOL && !anti_failed_eval,
        worst: worst_anti.0,
        worst_point: worst_anti.1,
        tolerance: STRUCTURE_TOL,
    });
    ValidationReport { checks }
}

/// Vector field `v = Σ v^k E_k` given by frame components.
#[derive(Debug, Clone, PartialEq)]
pub enum VectorFieldSpec {
    Constant(Vec<f64>),
    Expr {
        components: Vec<Expr>,
        /// `gradients[k][l] = ∂_l v^k`.
        gradients: Vec<Vec<Expr>>,
    },
}

/// Component values and frame derivatives `E_i(v^k)` of a field at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldJet {
    pub values: Vec<f64>,
    /// `derivatives[i][k] = E_i(v^k)`.
    pub derivatives: Vec<Vec<f64>>,
}

impl VectorFieldSpec {
    pub fn constant(components: Vec<f64>) -> Self {
        VectorFieldSpec::Constant(components)
    }

    pub fn zero(dim: usize) -> Self {
        VectorFieldSpec::Constant(vec![0.0; dim])
    }

    /// Frame basis vector `E_index` (0-based).
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut c = vec![0.0; dim];
        c[index] = 1.0;
        VectorFieldSpec::Constant(c)
    }

    /// Expression-valued components over coordinates `x1..x{coords}`.
    pub fn expressions(components: Vec<Expr>, coords: usize) -> Result<Self> {
        let gradients = components
            .iter()
            .map(|e| {
                (0..coords)
                    .map(|l| e.differentiate(&coordinate_name(l)))
                    .collect::<std::result::Result<Vec<_>, _>>()
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(VectorFieldSpec::Expr {
            components,
            gradients,
        })
    }

    pub fn parse(components: &[&str], coords: usize) -> Result<Self> {
        let exprs = components
            .iter()
            .map(|s| expr::parse(s))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::expressions(exprs, coords)
    }

    pub fn len(&self) -> usize {
        match self {
            VectorFieldSpec::Constant(c) => c.len(),
            VectorFieldSpec::Expr { components, .. } => components.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Components as expressions (constants become literals).
    pub fn component_exprs(&self) -> Vec<Expr> {
        match self {
            VectorFieldSpec::Constant(c) => c.iter().map(|v| Expr::Num(*v)).collect(),
            VectorFieldSpec::Expr { components, .. } => components.clone(),
        }
    }

    /// `c·v`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        match self {
            VectorFieldSpec::Constant(v) => {
                Ok(VectorFieldSpec::Constant(v.iter().map(|x| c * x).collect()))
            }
            VectorFieldSpec::Expr { components, gradients } => {
                let coords = gradients.first().map_or(0, |g| g.len());
                let scaled = components
                    .iter()
                    .map(|e| Expr::mul(Expr::Num(c), e.clone()))
                    .collect();
                Self::expressions(scaled, coords)
            }
        }
    }

    /// Checks component count and, for expression fields, variable binding.
    pub fn check_against(&self, m: &FrameModel) -> Result<()> {
        if self.len() != m.dim {
            return Err(Error::Schema(format!(
                "field has {} components, model `{}` has dimension {}",
                self.len(),
                m.name,
                m.dim
            )));
        }
        if let VectorFieldSpec::Expr { components, .. } = self {
            let coords = if m.is_chart() { m.dim } else { 0 };
            for (k, e) in components.iter().enumerate() {
                check_bound(e, coords, &m.parameters, &format!("field component {}", k + 1))?;
            }
        }
        Ok(())
    }

    pub fn jet(&self, m: &FrameModel, p: &Point) -> Result<FieldJet> {
        let n = m.dim;
        if self.len() != n {
            return Err(Error::Schema(format!(
                "field has {} components, model has dimension {n}",
                self.len()
            )));
        }
        match self {
            VectorFieldSpec::Constant(c) => Ok(FieldJet {
                values: c.clone(),
                derivatives: vec![vec![0.0; n]; n],
            }),
            VectorFieldSpec::Expr {
                components,
                gradients,
            } => {
                let coords = m.reduced_coords(p);
                let env = ChartEnv {
                    coords: &coords,
                    params: &m.parameters,
                };
                let values = components
                    .iter()
                    .map(|e| e.eval(&env))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                let mut derivatives = vec![vec![0.0; n]; n];
                if m.is_chart() {
                    let a = m.frame_matrix(p)?;
                    let mut grad = vec![vec![0.0; n]; n];
                    for k in 0..n {
                        for l in 0..gradients[k].len().min(n) {
                            grad[k][l] = gradients[k][l].eval(&env)?;
                        }
                    }
                    for (i, row) in derivatives.iter_mut().enumerate() {
                        for (k, slot) in row.iter_mut().enumerate() {
                            *slot = (0..n).map(|l| a[(i, l)] * grad[k][l]).sum();
                        }
                    }
                }
                Ok(FieldJet {
                    values,
                    derivatives,
                })
            }
        }
    }
}

/// Outcome of the basic-field test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasicCheck {
    pub basic: bool,
    pub worst_residual: f64,
    pub worst_point: Option<Vec<f64>>,
    pub tolerance: f64,
}

/// Transverse part of `[F_a, v] = Σ_l (F_a(v^l) + Σ_k v^k C_ak^l) E_l`
/// for every leafwise frame index `a` and transverse `l`.
pub fn basic_residuals(
    m: &FrameModel,
    split: &FoliationSplit,
    v: &VectorFieldSpec,
    p: &Point,
) -> Result<Vec<f64>> {
    let c = structure_functions(m, p)?;
    let jet = v.jet(m, p)?;
    let mut out = Vec::with_capacity(split.leaf().len() * split.transverse().len());
    for &a in split.leaf() {
        for &l in split.transverse() {
            let mut r = jet.derivatives[a][l];
            for k in 0..m.dim {
                r += jet.values[k] * c.get(a, k, l);
            }
            out.push(r);
        }
    }
    Ok(out)
}

/// A field is basic when its bracket with every leafwise field stays leafwise.
pub fn check_basic(
    m: &FrameModel,
    split: &FoliationSplit,
    v: &VectorFieldSpec,
    g: &Grid,
    tol: f64,
) -> Result<BasicCheck> {
    v.check_against(m)?;
    let mut worst = (0.0f64, None);
    for p in &g.points {
        for r in basic_residuals(m, split, v, p)? {
            if r.abs() > worst.0 || worst.1.is_none() {
                worst = (r.abs().max(worst.0), Some(p.0.clone()));
            }
        }
    }
    Ok(BasicCheck {
        basic: worst.0 <= tol,
        worst_residual: worst.0,
        worst_point: worst.1,
        tolerance: tol,
    })
}

// ---------------------------------------------------------------------------
// Model and field documents (JSON)

/// Number or expression string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarDoc {
    Number(f64),
    Expr(String),
}

impl ScalarDoc {
    fn to_expr(&self) -> Result<Expr> {
        match self {
            ScalarDoc::Number(v) => Ok(Expr::Num(*v)),
            ScalarDoc::Expr(s) => Ok(expr::parse(s)?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindTag {
    ConstantStructure,
    Chart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureConstantDoc {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub value: ScalarDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FrameDoc {
    RowMajor(Vec<String>),
    Rows(Vec<Vec<String>>),
}

/// On-disk model description. Frame indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub name: String,
    pub kind: KindTag,
    pub dim: usize,
    pub leaf_indices: Vec<usize>,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    #[serde(default)]
    pub dense_leaves: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure_constants: Option<Vec<StructureConstantDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<FrameDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDocument {
    pub components: Vec<ScalarDoc>,
}

/// Probe resolution per coordinate used by [`build_model`] for the invertibility test.
const PROBE_RESOLUTION: usize = 8;

/// Builds and validates a model from its document.
pub fn build_model(doc: &ModelDocument) -> Result<(FrameModel, FoliationSplit)> {
    if doc.dim == 0 {
        return Err(Error::Schema("dimension must be positive".into()));
    }
    let split = FoliationSplit::from_one_based(doc.dim, &doc.leaf_indices)?;
    let model = match doc.kind {
        KindTag::ConstantStructure => {
            if doc.periods.is_some() || doc.frame.is_some() {
                return Err(Error::Schema(
                    "constant_structure models take no `periods` or `frame`".into(),
                ));
            }
            let entries = doc
                .structure_constants
                .as_deref()
                .unwrap_or_default()
                .iter()
                .map(|sc| {
                    if sc.i == 0 || sc.j == 0 || sc.k == 0 {
                        return Err(Error::Schema(
                            "structure constant indices are 1-based".into(),
                        ));
                    }
                    Ok((sc.i - 1, sc.j - 1, sc.k - 1, sc.value.to_expr()?))
                })
                .collect::<Result<Vec<_>>>()?;
            FrameModel::constant_structure(&doc.name, doc.dim, doc.parameters.clone(), entries)?
        }
        KindTag::Chart => {
            if doc.structure_constants.is_some() {
                return Err(Error::Schema(
                    "chart models take no `structure_constants`".into(),
                ));
            }
            let periods = doc
                .periods
                .clone()
                .ok_or_else(|| Error::Schema("chart model needs `periods`".into()))?;
            if periods.len() != doc.dim {
                return Err(Error::Schema(format!(
                    "`periods` has {} entries, dim is {}",
                    periods.len(),
                    doc.dim
                )));
            }
            let rows: Vec<Vec<String>> = match doc
                .frame
                .clone()
                .ok_or_else(|| Error::Schema("chart model needs `frame`".into()))?
            {
                FrameDoc::Rows(rows) => rows,
                FrameDoc::RowMajor(flat) => {
                    if flat.len() != doc.dim * doc.dim {
                        return Err(Error::Schema(format!(
                            "`frame` has {} entries, expected {}",
                            flat.len(),
                            doc.dim * doc.dim
                        )));
                    }
                    flat.chunks(doc.dim).map(|c| c.to_vec()).collect()
                }
            };
            let frame = rows
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|s| expr::parse(s))
                        .collect::<std::result::Result<Vec<_>, _>>()
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let model = FrameModel::chart(&doc.name, doc.parameters.clone(), periods, frame)?;
            let res = if doc.dim <= 3 { PROBE_RESOLUTION } else { 4 };
            let grid = sample_grid(&model, &[res])?;
            let report = validate_model(&model, &grid);
            if let Some(inv) = report.check("frame_invertibility") {
                if !inv.passed {
                    return Err(Error::SingularFrame {
                        point: inv.worst_point.clone().unwrap_or_default(),
                        det: inv.worst,
                    });
                }
            }
            model
        }
    };
    let mut model = model.with_dense_leaves(doc.dense_leaves);
    model.description = doc.description.clone();
    Ok((model, split))
}

/// Parses a JSON model document and builds the model.
pub fn load_model(document: &str) -> Result<(FrameModel, FoliationSplit)> {
    let doc: ModelDocument = serde_json::from_str(document)?;
    build_model(&doc)
}

/// Document describing `m` with leaf set `split`.
pub fn model_document(m: &FrameModel, split: &FoliationSplit) -> ModelDocument {
    let mut doc = ModelDocument {
        name: m.name.clone(),
        kind: KindTag::Chart,
        dim: m.dim,
        leaf_indices: split.leaf_one_based(),
        parameters: m.parameters.clone(),
        dense_leaves: m.dense_leaves,
        description: m.description.clone(),
        structure_constants: None,
        periods: None,
        frame: None,
    };
    match &m.kind {
        ModelKind::ConstantStructure(cs) => {
            doc.kind = KindTag::ConstantStructure;
            doc.structure_constants = Some(
                cs.entries
                    .iter()
                    .map(|e| StructureConstantDoc {
                        i: e.i + 1,
                        j: e.j + 1,
                        k: e.k + 1,
                        value: ScalarDoc::Expr(e.source.to_string()),
                    })
                    .collect(),
            );
        }
        ModelKind::Chart(chart) => {
            doc.periods = Some(chart.periods.clone());
            doc.frame = Some(FrameDoc::RowMajor(
                chart
                    .frame
                    .iter()
                    .flat_map(|row| row.iter().map(|e| e.to_string()))
                    .collect(),
            ));
        }
    }
    doc
}

/// Builds a field for `m` from its document. On constant-structure models
/// every component must reduce to a constant over the model parameters.
pub fn build_field(m: &FrameModel, doc: &FieldDocument) -> Result<VectorFieldSpec> {
    let exprs = doc
        .components
        .iter()
        .map(ScalarDoc::to_expr)
        .collect::<Result<Vec<_>>>()?;
    if exprs.len() != m.dim {
        return Err(Error::Schema(format!(
            "field has {} components, model `{}` has dimension {}",
            exprs.len(),
            m.name,
            m.dim
        )));
    }
    let field = if m.is_chart() {
        VectorFieldSpec::expressions(exprs, m.dim)?
    } else {
        let values = exprs
            .iter()
            .enumerate()
            .map(|(k, e)| {
                check_bound(e, 0, &m.parameters, &format!("field component {}", k + 1))?;
                Ok(e.eval(&m.parameters)?)
            })
            .collect::<Result<Vec<_>>>()?;
        VectorFieldSpec::Constant(values)
    };
    field.check_against(m)?;
    Ok(field)
}

pub fn load_field(m: &FrameModel, document: &str) -> Result<VectorFieldSpec> {
    let doc: FieldDocument = serde_json::from_str(document)?;
    build_field(m, &doc)
}

pub fn field_document(v: &VectorFieldSpec) -> FieldDocument {
    FieldDocument {
        components: match v {
            VectorFieldSpec::Constant(c) => c.iter().map(|x| ScalarDoc::Number(*x)).collect(),
            VectorFieldSpec::Expr { components, .. } => components
                .iter()
                .map(|e| ScalarDoc::Expr(e.to_string()))
                .collect(),
        },
    }
}
