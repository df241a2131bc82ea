//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or schema error, 2 math-domain error,
//! 3 model validation failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::builtin::{self, BuiltinOptions};
use crate::connection::PointGeometry;
use crate::error::{Error, ErrorClass, Result};
use crate::model::{
    load_field, load_model, model_document, sample_grid, validate_model, FoliationSplit,
    FrameModel, Point, ValidationReport, VectorFieldSpec,
};
use crate::spectral::{build_suspension, validate_suspension_matrix, IntegerMatrix, SuspensionDiagnostics};
use crate::tautness::{
    alvarez_candidate, classify_divergence, deck_average, green_check, lift_to_cover,
    transverse_divergence_values, volume_preservation_check, QuadratureReport, TautnessVerdict,
    VerdictClass, VolumeReport, DEFAULT_TOL,
};

const GREEN_IDENTITY: &str = "∫ div^Q v dμ = ∫ g(v, κ♯) dμ";
const WITNESS_RULE: &str =
    "div^Q v ≥ 0 everywhere and > 0 somewhere for a basic v ⇒ not taut; taut ⇒ div^Q v ≡ 0 or changes sign";
const VOLUME_RULE: &str = "L_v ν_Q = (div^Q v) ν_Q for basic v";
const COVER_RULE: &str = "div^Q(π*v) = (div^Q v) ∘ π on a finite cover";

#[derive(Debug, Parser)]
#[command(
    name = "foliage",
    version,
    about = "Transverse divergence and tautness diagnostics for Riemannian foliations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a model and print structure functions, Christoffel symbols and mean curvature.
    Analyze {
        #[command(flatten)]
        model: ModelArgs,
        /// Evaluation point `x1,x2,..` (chart models; default the origin).
        #[arg(long, allow_hyphen_values = true)]
        point: Option<String>,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Classify the sign of div^Q v over a grid.
    TautCheck {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        field: FieldArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Compare both sides of the transverse Green formula by quadrature.
    GreenCheck {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        field: FieldArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Characteristic polynomial, eigenvalues and suspension admissibility of an integer matrix.
    Spectral {
        /// Rows separated by `;`, entries by `,`.
        #[arg(long, allow_hyphen_values = true)]
        matrix: String,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Build the suspension model of a matrix and write it as a model file.
    Suspend {
        #[arg(long, allow_hyphen_values = true)]
        matrix: String,
        /// 1-based eigen-direction (eigenvalues ascending) spanning the leaves.
        #[arg(long)]
        leaf: usize,
        /// Model file to write (stdout when omitted).
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Compare div^Q on a k-fold cover with the base, and the deck-averaged field's verdict.
    Cover {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        field: FieldArgs,
        /// 1-based coordinate to unroll.
        #[arg(long)]
        coord: usize,
        #[arg(long)]
        fold: usize,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Check whether a basic field preserves the transverse volume form.
    VolumeCheck {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        field: FieldArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Builtin name (t3a, suspension-3, torus-warped, flat-kronecker) or model file path.
    model: String,
    /// Matrix for t3a / suspension-3.
    #[arg(long, allow_hyphen_values = true)]
    matrix: Option<String>,
    /// Leaf eigen-direction for t3a / suspension-3 (1-based).
    #[arg(long)]
    leaf: Option<usize>,
    /// Warping function f(x2) for torus-warped.
    #[arg(long, allow_hyphen_values = true)]
    warp: Option<String>,
}

#[derive(Debug, Args)]
struct FieldArgs {
    /// Field file path, `alvarez` (mean curvature), or `inline:<c1>;<c2>;..`.
    #[arg(long)]
    field: String,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Resolution per coordinate, e.g. `64` or `16,256`.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Debug, Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Report destination (stdout when omitted).
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

// ---------------------------------------------------------------------------
// Reports

/// A nonzero frame-indexed coefficient, 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedValue {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub model: String,
    pub dim: usize,
    pub leaf_indices: Vec<usize>,
    pub dense_leaves: bool,
    pub point: Vec<f64>,
    pub validation: ValidationReport,
    /// `[E_i, E_j] = Σ C_ij^k E_k`
    pub structure_functions: Vec<IndexedValue>,
    /// `∇_{E_i} E_j = Σ Γ_ij^k E_k`
    pub christoffel: Vec<IndexedValue>,
    pub mean_curvature: Vec<f64>,
    pub mean_curvature_norm_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TautReport {
    pub model: String,
    pub field: String,
    pub components: Vec<String>,
    pub grid: Vec<usize>,
    pub verdict: TautnessVerdict,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenReport {
    pub model: String,
    pub field: String,
    pub identity: String,
    pub quadrature: QuadratureReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuspendReport {
    pub model: String,
    pub output: Option<String>,
    pub leaf_eigen_index: usize,
    pub dim: usize,
    pub log_eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverReport {
    pub model: String,
    pub cover: String,
    pub coord: usize,
    pub fold: usize,
    /// Largest `|div^Q(π*v)(p) − div^Q v(π p)|` over the cover grid.
    pub equivariance_error: f64,
    pub base_verdict: TautnessVerdict,
    pub lifted_verdict: TautnessVerdict,
    pub deck_averaged_verdict: TautnessVerdict,
    pub classes_agree: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeCheckReport {
    pub model: String,
    pub field: String,
    pub identity: String,
    pub report: VolumeReport,
}

// ---------------------------------------------------------------------------
// Input resolution

fn resolve_model(args: &ModelArgs) -> Result<(FrameModel, FoliationSplit)> {
    let has_opts = args.matrix.is_some() || args.leaf.is_some() || args.warp.is_some();
    if builtin::is_builtin(&args.model) && !Path::new(&args.model).is_file() {
        let opts = BuiltinOptions {
            matrix: args.matrix.as_deref().map(IntegerMatrix::parse).transpose()?,
            leaf: args.leaf,
            warp: args.warp.clone(),
        };
        let suspension = matches!(args.model.as_str(), "t3a" | "suspension-3");
        if !suspension && (opts.matrix.is_some() || opts.leaf.is_some()) {
            return Err(Error::Schema(format!(
                "--matrix/--leaf only apply to t3a and suspension-3, not `{}`",
                args.model
            )));
        }
        if args.model != "torus-warped" && opts.warp.is_some() {
            return Err(Error::Schema("--warp only applies to torus-warped".into()));
        }
        return builtin::builtin(&args.model, &opts);
    }
    if has_opts {
        return Err(Error::Schema(
            "--matrix, --leaf and --warp only apply to builtin models".into(),
        ));
    }
    let text = std::fs::read_to_string(&args.model).map_err(|e| {
        Error::Schema(format!(
            "`{}` is neither a builtin model ({}) nor a readable file: {e}",
            args.model,
            builtin::NAMES.join(", ")
        ))
    })?;
    load_model(&text)
}

/// The field, a display name (`τ` for the mean curvature) and its components as text.
fn resolve_field(
    m: &FrameModel,
    split: &FoliationSplit,
    source: &str,
) -> Result<(VectorFieldSpec, &'static str)> {
    if source == "alvarez" {
        return Ok((alvarez_candidate(m, split)?, "τ"));
    }
    if let Some(inline) = source.strip_prefix("inline:") {
        let parts: Vec<&str> = inline.split(';').map(str::trim).collect();
        let doc = crate::model::FieldDocument {
            components: parts
                .iter()
                .map(|s| crate::model::ScalarDoc::Expr(s.to_string()))
                .collect(),
        };
        return Ok((crate::model::build_field(m, &doc)?, "v"));
    }
    let text = std::fs::read_to_string(source)
        .map_err(|e| Error::Schema(format!("cannot read field file `{source}`: {e}")))?;
    Ok((load_field(m, &text)?, "v"))
}

fn field_components(v: &VectorFieldSpec) -> Vec<String> {
    v.component_exprs().iter().map(ToString::to_string).collect()
}

fn default_resolution(m: &FrameModel) -> Vec<usize> {
    match m.dim {
        0..=2 => vec![64],
        3 => vec![16],
        _ => vec![8],
    }
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| Error::Schema(format!("invalid {what} entry `{}`", s.trim())))
        })
        .collect()
}

fn resolution(m: &FrameModel, g: &GridArgs) -> Result<Vec<usize>> {
    match &g.grid {
        None => Ok(default_resolution(m)),
        Some(text) => {
            let res: Vec<usize> = parse_list(text, "grid")?;
            if res.is_empty() || res.contains(&0) {
                return Err(Error::Schema("grid resolution entries must be >= 1".into()));
            }
            Ok(res)
        }
    }
}

fn check_tol(tol: f64) -> Result<f64> {
    if tol.is_finite() && tol >= 0.0 {
        Ok(tol)
    } else {
        Err(Error::Schema(format!("tolerance must be a finite non-negative number, got {tol}")))
    }
}

fn nonzero_entries(t: &crate::model::FrameTensor) -> Vec<IndexedValue> {
    t.nonzero()
        .into_iter()
        .map(|(i, j, k, value)| IndexedValue {
            i: i + 1,
            j: j + 1,
            k: k + 1,
            value,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Text rendering

fn fmt_point(p: &Option<Vec<f64>>) -> String {
    match p {
        Some(p) if p.is_empty() => "(position-independent)".into(),
        Some(p) => format!(
            "({})",
            p.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", ")
        ),
        None => "-".into(),
    }
}

fn verdict_line(v: &TautnessVerdict, symbol: &str) -> String {
    match (v.min, v.max) {
        (Some(lo), Some(hi)) if (hi - lo).abs() <= v.tolerance => {
            let value = if v.class == VerdictClass::IdenticallyZero { 0.0 } else { 0.5 * (lo + hi) };
            format!("verdict: {}, div^Q {symbol} = {value}", v.class.label())
        }
        (Some(lo), Some(hi)) => {
            format!("verdict: {}, div^Q {symbol} ∈ [{lo}, {hi}]", v.class.label())
        }
        _ => format!("verdict: {}", v.class.label()),
    }
}

fn verdict_details(out: &mut String, v: &TautnessVerdict, symbol: &str) {
    out.push_str(&verdict_line(v, symbol));
    out.push('\n');
    if let (Some(lo), Some(hi)) = (v.min, v.max) {
        out.push_str(&format!("  min div^Q {symbol} = {lo} at {}\n", fmt_point(&v.argmin)));
        out.push_str(&format!("  max div^Q {symbol} = {hi} at {}\n", fmt_point(&v.argmax)));
    }
    out.push_str(&format!("  points: {}, tolerance: {:e}\n", v.points, v.tolerance));
}

fn render_analyze(r: &AnalyzeReport) -> String {
    let mut s = format!(
        "model: {} (dim {}, leaves spanned by E{})\n",
        r.model,
        r.dim,
        r.leaf_indices.iter().map(ToString::to_string).collect::<Vec<_>>().join(", E")
    );
    if r.dense_leaves {
        s.push_str("dense leaves: asserted\n");
    }
    s.push_str(&format!("point: {}\n", fmt_point(&Some(r.point.clone()))));
    s.push_str("validation:\n");
    for c in &r.validation.checks {
        s.push_str(&format!(
            "  {:<20} {}  worst {:e} at {} (tol {:e})\n",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.worst,
            fmt_point(&c.worst_point),
            c.tolerance
        ));
    }
    s.push_str("structure functions [E_i, E_j] = C_ij^k E_k (nonzero, i < j):\n");
    for e in r.structure_functions.iter().filter(|e| e.i < e.j) {
        s.push_str(&format!("  C_{}{}^{} = {}\n", e.i, e.j, e.k, e.value));
    }
    s.push_str("Christoffel symbols Γ_ij^k = ½(C_ij^k + C_ki^j + C_kj^i) (nonzero):\n");
    for e in &r.christoffel {
        s.push_str(&format!("  Γ_{}{}^{} = {}\n", e.i, e.j, e.k, e.value));
    }
    let kappa: Vec<String> = r
        .mean_curvature
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(k, c)| format!("{c}·E{}", k + 1))
        .collect();
    s.push_str(&format!(
        "mean curvature κ♯ = Σ_a Γ_aa^k E_k = {}\n|κ♯|² = {}\n",
        if kappa.is_empty() { "0".into() } else { kappa.join(" + ") },
        r.mean_curvature_norm_squared
    ));
    s
}

fn render_taut(r: &TautReport, symbol: &str) -> String {
    let mut s = String::new();
    verdict_details(&mut s, &r.verdict, symbol);
    s.push_str(&format!(
        "model: {}\nfield {symbol} = ({})\ngrid: {:?}\n{}\nrule: {WITNESS_RULE}\n",
        r.model,
        r.components.join(", "),
        r.grid,
        r.status
    ));
    s
}

fn render_green(r: &GreenReport) -> String {
    let q = &r.quadrature;
    format!(
        "identity: {}\n  ∫ div^Q v dμ     = {}\n  ∫ g(v, κ♯) dμ    = {}\n  |difference|     = {:e}\nmodel: {}\nfield: {}\ngrid: {:?}\ndensity: {}\n",
        r.identity, q.lhs, q.rhs, q.abs_error, r.model, r.field, q.resolution, q.density
    )
}

fn render_spectral(d: &SuspensionDiagnostics) -> String {
    let mut s = format!(
        "matrix: [{}]\ndet(A − xI) = {}\ndet A = {}\ntrace A = {}\n",
        d.matrix, d.char_poly_text, d.determinant, d.trace
    );
    if let Some(t) = d.trace_greater_than_two {
        s.push_str(&format!("trace > 2: {t}\n"));
    }
    if let Some(roots) = &d.eigenvalues {
        s.push_str("eigenvalues (ascending):\n");
        for (i, r) in roots.iter().enumerate() {
            s.push_str(&format!(
                "  λ{} = {} ∈ ({}, {}]",
                i + 1,
                r.value,
                r.enclosure.0,
                r.enclosure.1
            ));
            if r.value > 0.0 {
                s.push_str(&format!(", ln λ{} = {}", i + 1, r.value.ln()));
            }
            s.push('\n');
        }
        if roots.iter().all(|r| r.value > 0.0) {
            let product: f64 = roots.iter().map(|r| r.value).product();
            s.push_str(&format!("Π λ_i = {product}\n"));
        }
    }
    s.push_str(&format!(
        "admissible for a suspension: {}\n",
        if d.admissible { "yes".to_string() } else { format!("no ({})", d.problems.join("; ")) }
    ));
    s
}

fn render_cover(r: &CoverReport) -> String {
    format!(
        "identity: {COVER_RULE}\n  max |div^Q(π*v) − (div^Q v)∘π| = {:e}\nbase:          {}\nlifted:        {}\ndeck-averaged: {}\nverdict classes agree: {}\nmodel: {} → {}\n",
        r.equivariance_error,
        verdict_line(&r.base_verdict, "v"),
        verdict_line(&r.lifted_verdict, "π*v"),
        verdict_line(&r.deck_averaged_verdict, "v̄"),
        if r.classes_agree { "yes" } else { "NO" },
        r.model,
        r.cover
    )
}

fn render_volume(r: &VolumeCheckReport) -> String {
    let mut s = format!(
        "transverse volume preserved: {}\nidentity: {}\n",
        if r.report.preserved { "yes" } else { "no" },
        r.identity
    );
    verdict_details(&mut s, &r.report.verdict, "v");
    s.push_str(&format!("model: {}\nfield: {}\n{}\n", r.model, r.field, r.report.explanation));
    s
}

// ---------------------------------------------------------------------------
// Subcommands

/// Rendered report plus whether the command's own check failed (exit 3).
struct Outcome {
    text: String,
    json: String,
    failed: bool,
}

impl Outcome {
    fn new<R: Serialize>(report: &R, text: String, failed: bool) -> Result<Self> {
        Ok(Outcome {
            text,
            json: serde_json::to_string_pretty(report)? + "\n",
            failed,
        })
    }
}

fn cmd_analyze(model: &ModelArgs, point: Option<&str>, grid: &GridArgs) -> Result<Outcome> {
    let (m, split) = resolve_model(model)?;
    let g = sample_grid(&m, &resolution(&m, grid)?)?;
    let validation = validate_model(&m, &g);
    let p = if m.is_chart() {
        let coords = match point {
            Some(text) => parse_list::<f64>(text, "point")?,
            None => vec![0.0; m.dim],
        };
        if coords.len() != m.dim {
            return Err(Error::Schema(format!(
                "point has {} coordinates, model dimension is {}",
                coords.len(),
                m.dim
            )));
        }
        Point(coords)
    } else {
        if point.is_some() {
            return Err(Error::Schema(
                "constant-structure models are position-independent; --point does not apply".into(),
            ));
        }
        Point::abstract_point()
    };
    let mut report = AnalyzeReport {
        model: m.name.clone(),
        dim: m.dim,
        leaf_indices: split.leaf_one_based(),
        dense_leaves: m.dense_leaves,
        point: p.0.clone(),
        validation,
        structure_functions: vec![],
        christoffel: vec![],
        mean_curvature: vec![],
        mean_curvature_norm_squared: 0.0,
    };
    let failed = !report.validation.passed();
    if !failed {
        let geom = PointGeometry::at(&m, &p)?;
        let kappa = geom.mean_curvature(split.leaf());
        report.structure_functions = nonzero_entries(&geom.structure);
        report.christoffel = nonzero_entries(&geom.christoffel.0);
        report.mean_curvature_norm_squared = kappa.norm_squared();
        report.mean_curvature = kappa.components;
    }
    let text = render_analyze(&report);
    Outcome::new(&report, text, failed)
}

fn cmd_taut(model: &ModelArgs, field: &FieldArgs, grid: &GridArgs, tol: f64) -> Result<Outcome> {
    let tol = check_tol(tol)?;
    let (m, split) = resolve_model(model)?;
    let (v, symbol) = resolve_field(&m, &split, &field.field)?;
    let g = sample_grid(&m, &resolution(&m, grid)?)?;
    let verdict = classify_divergence(&m, &split, &v, &g, tol)?;
    let report = TautReport {
        model: m.name.clone(),
        field: field.field.clone(),
        components: field_components(&v),
        grid: g.resolution.clone(),
        status: verdict.class.epistemic_status().to_string(),
        verdict,
    };
    let text = render_taut(&report, symbol);
    Outcome::new(&report, text, false)
}

fn cmd_green(model: &ModelArgs, field: &FieldArgs, grid: &GridArgs) -> Result<Outcome> {
    let (m, split) = resolve_model(model)?;
    let (v, _) = resolve_field(&m, &split, &field.field)?;
    let quadrature = green_check(&m, &split, &v, &resolution(&m, grid)?)?;
    let report = GreenReport {
        model: m.name.clone(),
        field: field.field.clone(),
        identity: GREEN_IDENTITY.into(),
        quadrature,
    };
    let text = render_green(&report);
    Outcome::new(&report, text, false)
}

fn cmd_spectral(matrix: &str) -> Result<Outcome> {
    let a = IntegerMatrix::parse(matrix)?;
    let diag = validate_suspension_matrix(&a);
    if diag.char_poly.coeffs.is_empty() {
        // char_poly itself failed (overflow)
        return Err(Error::Overflow("characteristic polynomial"));
    }
    let text = render_spectral(&diag);
    Outcome::new(&diag, text, false)
}

fn cmd_suspend(matrix: &str, leaf: usize, output: Option<&Path>) -> Result<(Outcome, String)> {
    let a = IntegerMatrix::parse(matrix)?;
    let (m, split) = build_suspension(&a, leaf)?;
    let doc = serde_json::to_string_pretty(&model_document(&m, &split))? + "\n";
    let report = SuspendReport {
        model: m.name.clone(),
        output: output.map(|p| p.display().to_string()),
        leaf_eigen_index: leaf,
        dim: m.dim,
        log_eigenvalues: (0..a.dim())
            .map(|i| m.parameters[&crate::spectral::log_eigenvalue_param(i)])
            .collect(),
    };
    let text = format!(
        "suspension model `{}` (dim {}), leaves spanned by E{} (eigenvalue λ{leaf})\nln λ_i = {:?}\n{}",
        report.model,
        report.dim,
        leaf + 1,
        report.log_eigenvalues,
        match &report.output {
            Some(p) => format!("written to {p}\n"),
            None => String::new(),
        }
    );
    Ok((Outcome::new(&report, text, false)?, doc))
}

fn cmd_cover(
    model: &ModelArgs,
    field: &FieldArgs,
    coord: usize,
    fold: usize,
    grid: &GridArgs,
    tol: f64,
) -> Result<Outcome> {
    let tol = check_tol(tol)?;
    let (m, split) = resolve_model(model)?;
    if coord == 0 {
        return Err(Error::Schema("--coord is 1-based".into()));
    }
    let c = coord - 1;
    let (v, _) = resolve_field(&m, &split, &field.field)?;
    let (lm, lsplit, lv) = lift_to_cover(&m, &split, &v, c, fold)?;
    let base_res = resolution(&m, grid)?;
    let base_grid = sample_grid(&m, &base_res)?;
    // same cell size on the cover: k times as many cells along the unrolled coordinate
    let mut lifted_res = if base_res.len() == 1 { vec![base_res[0]; m.dim] } else { base_res.clone() };
    lifted_res[c] *= fold;
    let lifted_grid = sample_grid(&lm, &lifted_res)?;

    let base_verdict = classify_divergence(&m, &split, &v, &base_grid, tol)?;
    let lifted_values = transverse_divergence_values(&lm, &lsplit, &lv, &lifted_grid)?;
    let projected: Vec<Point> = lifted_grid.points.iter().map(|p| Point(lm.reduced_coords(p))).collect();
    let projected_values = transverse_divergence_values(
        &m,
        &split,
        &v,
        &crate::model::Grid::from_points(projected),
    )?;
    let equivariance_error = lifted_values
        .iter()
        .zip(&projected_values)
        .map(|(a, b)| (a.1 - b.1).abs())
        .fold(0.0, f64::max);
    let lifted_verdict = classify_divergence(&lm, &lsplit, &lv, &lifted_grid, tol)?;
    let averaged = deck_average(&m, &lv, c, fold)?;
    let deck_averaged_verdict = classify_divergence(&m, &split, &averaged, &base_grid, tol)?;
    let classes_agree =
        base_verdict.class == lifted_verdict.class && base_verdict.class == deck_averaged_verdict.class;
    let report = CoverReport {
        model: m.name.clone(),
        cover: lm.name.clone(),
        coord,
        fold,
        equivariance_error,
        base_verdict,
        lifted_verdict,
        deck_averaged_verdict,
        classes_agree,
    };
    let failed = !report.classes_agree || report.equivariance_error > 1e-12;
    let text = render_cover(&report);
    Outcome::new(&report, text, failed)
}

fn cmd_volume(model: &ModelArgs, field: &FieldArgs, grid: &GridArgs, tol: f64) -> Result<Outcome> {
    let tol = check_tol(tol)?;
    let (m, split) = resolve_model(model)?;
    let (v, _) = resolve_field(&m, &split, &field.field)?;
    let g = sample_grid(&m, &resolution(&m, grid)?)?;
    let report = VolumeCheckReport {
        model: m.name.clone(),
        field: field.field.clone(),
        identity: VOLUME_RULE.into(),
        report: volume_preservation_check(&m, &split, &v, &g, tol)?,
    };
    let text = render_volume(&report);
    Outcome::new(&report, text, false)
}

fn emit(out: &mut dyn Write, path: Option<&Path>, body: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, body)?,
        None => out.write_all(body.as_bytes())?,
    }
    Ok(())
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<bool> {
    let (outcome, dest) = match &cli.command {
        Command::Analyze { model, point, grid, out: o } => {
            (cmd_analyze(model, point.as_deref(), grid)?, o)
        }
        Command::TautCheck { model, field, grid, tol, out: o } => {
            (cmd_taut(model, field, grid, *tol)?, o)
        }
        Command::GreenCheck { model, field, grid, out: o } => (cmd_green(model, field, grid)?, o),
        Command::Spectral { matrix, out: o } => (cmd_spectral(matrix)?, o),
        Command::Cover { model, field, coord, fold, grid, tol, out: o } => {
            (cmd_cover(model, field, *coord, *fold, grid, *tol)?, o)
        }
        Command::VolumeCheck { model, field, grid, tol, out: o } => {
            (cmd_volume(model, field, grid, *tol)?, o)
        }
        Command::Suspend { matrix, leaf, output, format } => {
            let (outcome, doc) = cmd_suspend(matrix, *leaf, output.as_deref())?;
            match output {
                Some(path) => {
                    std::fs::write(path, &doc)?;
                    let body = match format {
                        Format::Text => &outcome.text,
                        Format::Json => &outcome.json,
                    };
                    out.write_all(body.as_bytes())?;
                }
                None => out.write_all(doc.as_bytes())?,
            }
            return Ok(outcome.failed);
        }
    };
    let body = match dest.format {
        Format::Text => &outcome.text,
        Format::Json => &outcome.json,
    };
    emit(out, dest.output.as_deref(), body)?;
    Ok(outcome.failed)
}

fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Usage => 1,
        ErrorClass::Math => 2,
        ErrorClass::Validation => 3,
    }
}

/// Runs the command line with explicit output streams.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(rendered.as_bytes())
            } else {
                err.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(false) => 0,
        Ok(true) => 3,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(e.class())
        }
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}
