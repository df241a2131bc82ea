//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines come out in order and unfiltered.

mod common;

use std::time::{Duration, Instant};

use foliage::builtin::{builtin, BuiltinOptions};
use foliage::connection::{christoffel, divergence_full, divergence_sub, mean_curvature};
use foliage::expr::{self, coordinate_name};
use foliage::model::{
    jacobi_residual, sample_grid, structure_functions, Grid, ModelKind, Point,
    VectorFieldSpec,
};
use foliage::spectral::{build_suspension, char_poly, spectral_data, IntegerMatrix};
use foliage::tautness::{
    alvarez_candidate, classify_divergence, deck_average, green_check, lift_to_cover,
    transverse_divergence_values, volume_preservation_check, VerdictClass, DEFAULT_TOL,
};
use rand::Rng;

/// Collects failed sub-checks of one criterion.
#[derive(Default)]
struct Checks {
    failures: Vec<String>,
}

impl Checks {
    fn ok(&mut self, cond: bool, what: impl Into<String>) {
        if !cond {
            self.failures.push(what.into());
        }
    }

    fn close(&mut self, got: f64, want: f64, tol: f64, what: &str) {
        let err = (got - want).abs();
        self.ok(err <= tol, format!("{what}: got {got}, want {want} (|err| {err:e} > {tol:e})"));
    }
}

type Outcome = Result<Checks, String>;

fn run(id: usize, title: &str, budget: Option<Duration>, body: fn() -> Outcome) -> bool {
    let start = Instant::now();
    let result = body();
    let elapsed = start.elapsed();
    let mut problems = match result {
        Ok(c) => c.failures,
        Err(e) => vec![format!("error: {e}")],
    };
    if let Some(b) = budget {
        if elapsed > b {
            problems.push(format!("runtime {elapsed:?} exceeds {b:?}"));
        }
    }
    let pass = problems.is_empty();
    println!(
        "[{}] criterion {id}: {title} ({:.3} s)",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    for p in &problems {
        println!("       - {p}");
    }
    pass
}

fn e<T: std::fmt::Display>(x: T) -> String {
    x.to_string()
}

// ---------------------------------------------------------------------------

fn suspension_2x2() -> Outcome {
    let mut c = Checks::default();
    let s5 = 5f64.sqrt();
    let (l1, l2) = (((3.0 - s5) / 2.0f64).ln(), ((3.0 + s5) / 2.0f64).ln());
    let a = IntegerMatrix::parse("2,1;1,1").map_err(e)?;
    // larger eigenvalue is λ2
    let (m, split) = build_suspension(&a, 2).map_err(e)?;
    c.ok(split.leaf() == [2], "leaf is E3");
    let p = Point::abstract_point();
    let g = christoffel(&m, &p).map_err(e)?;
    // 1-based frame indices
    let gamma = |i: usize, j: usize, k: usize| g.get(i - 1, j - 1, k - 1);
    c.close(gamma(3, 3, 1), l2, 1e-12, "Γ_33^1 = ln λ2");
    c.close(gamma(2, 1, 2), -l1, 1e-12, "Γ_21^2 = -ln λ1");
    c.close(gamma(1, 1, 1), 0.0, 1e-12, "Γ_11^1 = 0");
    c.close(gamma(3, 3, 2), 0.0, 1e-12, "Γ_33^2 = 0");
    c.close(gamma(1, 2, 1), 0.0, 1e-12, "Γ_12^1 = 0");

    let tau = alvarez_candidate(&m, &split).map_err(e)?;
    let VectorFieldSpec::Constant(t) = &tau else {
        return Err("τ should be constant".into());
    };
    c.close(t[0], l2, 1e-12, "τ^1 = ln λ2");
    c.close(t[1], 0.0, 1e-12, "τ^2 = 0");
    c.close(t[2], 0.0, 1e-12, "τ^3 = 0");

    let div = divergence_sub(&m, split.transverse(), &tau, &p).map_err(e)?;
    c.close(div, l1 * l1, 1e-12, "div^Q τ = (ln λ1)²");
    let kappa = mean_curvature(&m, split.leaf(), &p).map_err(e)?;
    c.close(div, kappa.norm_squared(), 1e-12, "div^Q τ = |τ|²");
    let grid = sample_grid(&m, &[1]).map_err(e)?;
    let verdict = classify_divergence(&m, &split, &tau, &grid, DEFAULT_TOL).map_err(e)?;
    c.ok(verdict.class == VerdictClass::NonTautWitness, format!("verdict {:?}", verdict.class));
    Ok(c)
}

fn suspension_2x2_e2() -> Outcome {
    let mut c = Checks::default();
    let (m, split) = builtin("t3a", &BuiltinOptions::default()).map_err(e)?;
    let e2 = VectorFieldSpec::basis(3, 1);
    let div = divergence_sub(&m, split.transverse(), &e2, &Point::abstract_point()).map_err(e)?;
    c.ok(div == 0.0, format!("div^Q E2 = {div}, expected exactly 0"));
    let gamma_12_1 = christoffel(&m, &Point::abstract_point()).map_err(e)?.get(0, 1, 0);
    c.ok(div == gamma_12_1, "div^Q E2 = Γ_12^1");
    let grid = sample_grid(&m, &[1]).map_err(e)?;
    let verdict = classify_divergence(&m, &split, &e2, &grid, DEFAULT_TOL).map_err(e)?;
    c.ok(verdict.class == VerdictClass::IdenticallyZero, format!("verdict {:?}", verdict.class));
    Ok(c)
}

fn suspension_3x3() -> Outcome {
    let mut c = Checks::default();
    let rows = vec![vec![2, 0, -1], vec![0, 3, -1], vec![-1, -1, 1]];
    let a = IntegerMatrix::new(rows.clone()).map_err(e)?;
    let poly = char_poly(&a).map_err(e)?;
    c.ok(poly.coeffs == vec![1, -9, 6, -1], format!("coefficients {:?}", poly.coeffs));
    c.ok(
        poly.coeffs == common::cofactor_char_poly(&rows),
        "Faddeev-LeVerrier agrees with cofactor expansion",
    );
    c.ok(poly.to_string() == "−x³+6x²−9x+1", format!("rendered as {poly}"));

    let data = spectral_data(&a).map_err(e)?;
    let expected = [(0.0, 1.0), (2.0, 3.0), (3.0, 4.0)];
    c.ok(data.enclosures == expected, format!("enclosures {:?}", data.enclosures));
    for (v, (lo, hi)) in data.eigenvalues.iter().zip(expected) {
        c.ok(lo < *v && *v < hi, format!("eigenvalue {v} outside ({lo}, {hi})"));
    }
    // the matrix is symmetric, so a dense symmetric eigensolver is an independent oracle
    let dense = nalgebra::DMatrix::from_fn(3, 3, |i, j| rows[i][j] as f64);
    let mut oracle: Vec<f64> = nalgebra::SymmetricEigen::new(dense).eigenvalues.iter().copied().collect();
    oracle.sort_by(f64::total_cmp);
    for (v, o) in data.eigenvalues.iter().zip(&oracle) {
        c.close(*v, *o, 1e-12, "eigenvalue vs symmetric eigensolver");
    }
    let product: f64 = data.eigenvalues.iter().product();
    c.close(product, 1.0, 1e-12, "Π λ_i");

    let (m, split) = build_suspension(&a, 2).map_err(e)?;
    let tau = alvarez_candidate(&m, &split).map_err(e)?;
    let div = divergence_sub(&m, split.transverse(), &tau, &Point::abstract_point()).map_err(e)?;
    let ln = |v: f64| v.ln();
    let (l1, l2, l3) = (ln(oracle[0]), ln(oracle[1]), ln(oracle[2]));
    let form_a = -l2 * (l1 + l3);
    let form_b = l2 * l2;
    c.close(form_a, form_b, 1e-10, "-ln λ2 (ln λ1 + ln λ3) vs (ln λ2)²");
    c.close(div, form_b, 1e-10, "div^Q τ = (ln λ2)²");
    let grid = sample_grid(&m, &[1]).map_err(e)?;
    let verdict = classify_divergence(&m, &split, &tau, &grid, DEFAULT_TOL).map_err(e)?;
    c.ok(verdict.class == VerdictClass::NonTautWitness, format!("verdict {:?}", verdict.class));
    Ok(c)
}

fn warped_torus() -> Outcome {
    let mut c = Checks::default();
    let (m, split) = builtin("torus-warped", &BuiltinOptions::default()).map_err(e)?;

    let constant = VectorFieldSpec::parse(&["0", "1.7"], 2).map_err(e)?;
    let grid = sample_grid(&m, &[32]).map_err(e)?;
    let v = classify_divergence(&m, &split, &constant, &grid, DEFAULT_TOL).map_err(e)?;
    c.ok(v.class == VerdictClass::IdenticallyZero, format!("(a) verdict {:?}", v.class));

    let cos = VectorFieldSpec::parse(&["0", "cos(2*pi*x2)"], 2).map_err(e)?;
    let line = sample_grid(&m, &[1, 64]).map_err(e)?;
    let values = transverse_divergence_values(&m, &split, &cos, &line).map_err(e)?;
    c.ok(values.len() == 64, "64 grid points");
    let tau = std::f64::consts::TAU;
    let worst = values
        .iter()
        .map(|(x, d)| (d + tau * (tau * x[1]).sin()).abs())
        .fold(0.0, f64::max);
    c.ok(worst <= 1e-10, format!("(b) |div^Q v + 2π sin 2πx2| up to {worst:e}"));
    let v = classify_divergence(&m, &split, &cos, &line, DEFAULT_TOL).map_err(e)?;
    c.ok(v.class == VerdictClass::MixedSign, format!("(b) verdict {:?}", v.class));

    let q = green_check(&m, &split, &cos, &[16, 256]).map_err(e)?;
    c.ok(q.abs_error <= 1e-10, format!("(c) |lhs - rhs| = {:e}", q.abs_error));
    // closed form of both sides: ∫ φ' e^f = -2π ∫ sin(2πy) e^{0.3 sin 2πy} dy = -2π I_1(0.3)
    let bessel_i1 = (0..20).fold(0.0, |s, k| {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        s + 0.15f64.powi(2 * k as i32 + 1) / (fact(k) * fact(k + 1))
    });
    c.close(q.lhs, -tau * bessel_i1, 1e-10, "(c) lhs vs -2π I1(0.3)");
    Ok(c)
}

fn identity_suites() -> Outcome {
    let mut c = Checks::default();
    let mut r = common::rng(0x5eed);
    let mut worst = [0.0f64; 5];
    for trial in 0..40 {
        let m = if trial < 20 {
            common::random_chart(&mut r, if trial % 2 == 0 { 2 } else { 3 })
        } else {
            common::random_constant_model(&mut r)
        };
        let split = common::random_split(&mut r, m.dim);
        let v = common::random_field(&mut r, &m, split.transverse());
        let points = if m.is_chart() { 20 } else { 1 };
        for _ in 0..points {
            let p = common::random_point(&mut r, &m);
            let cst = structure_functions(&m, &p).map_err(e)?;
            let g = christoffel(&m, &p).map_err(e)?;
            for i in 0..m.dim {
                for j in 0..m.dim {
                    for k in 0..m.dim {
                        // metric compatibility: Γ_ij^k = -Γ_ik^j
                        worst[0] = worst[0].max((g.get(i, j, k) + g.get(i, k, j)).abs());
                        // torsion-free: Γ_ij^k - Γ_ji^k = C_ij^k
                        worst[1] = worst[1]
                            .max((g.get(i, j, k) - g.get(j, i, k) - cst.get(i, j, k)).abs());
                    }
                }
            }
            let kappa = mean_curvature(&m, split.leaf(), &p).map_err(e)?;
            let jet = v.jet(&m, &p).map_err(e)?;
            let dq = divergence_sub(&m, split.transverse(), &v, &p).map_err(e)?;
            let dfull = divergence_full(&m, &v, &p).map_err(e)?;
            let dleaf = divergence_sub(&m, split.leaf(), &v, &p).map_err(e)?;
            let kv = kappa.dot(&jet.values);
            worst[2] = worst[2].max((dq - (dfull + kv)).abs());
            worst[3] = worst[3].max((dleaf + kv).abs());
        }
        if let ModelKind::ConstantStructure(cs) = &m.kind {
            worst[4] = worst[4].max(jacobi_residual(cs.table()));
        }
    }
    c.ok(worst[0] <= 1e-12, format!("skew-symmetry residual {:e}", worst[0]));
    c.ok(worst[1] <= 1e-12, format!("torsion residual {:e}", worst[1]));
    c.ok(worst[2] <= 1e-10, format!("div^Q v = div v + <v,κ> residual {:e}", worst[2]));
    c.ok(worst[3] <= 1e-10, format!("div^TF v = -<v,κ> residual {:e}", worst[3]));
    c.ok(worst[4] <= 1e-12, format!("Jacobi residual {:e}", worst[4]));
    Ok(c)
}

fn covering_suite() -> Outcome {
    let mut c = Checks::default();
    let (m, split) = builtin("torus-warped", &BuiltinOptions::default()).map_err(e)?;
    let fields = [
        ["0", "1"],
        ["0", "cos(2*pi*x2)"],
        ["0", "1.2 + sin(2*pi*x2)"],
        ["0", "-exp(0.3*sin(2*pi*x2))"],
    ];
    let base_grid = sample_grid(&m, &[8, 32]).map_err(e)?;
    for comps in fields {
        let v = VectorFieldSpec::parse(&comps, 2).map_err(e)?;
        let base = classify_divergence(&m, &split, &v, &base_grid, DEFAULT_TOL).map_err(e)?;
        for coord in 0..2 {
            for k in 1..=3 {
                let (lm, ls, lv) = lift_to_cover(&m, &split, &v, coord, k).map_err(e)?;
                let mut res = vec![8, 32];
                res[coord] *= k;
                let lg = sample_grid(&lm, &res).map_err(e)?;
                let lifted = transverse_divergence_values(&lm, &ls, &lv, &lg).map_err(e)?;
                let projected = Grid::from_points(
                    lg.points.iter().map(|p| Point(lm.reduced_coords(p))).collect(),
                );
                let below = transverse_divergence_values(&m, &split, &v, &projected).map_err(e)?;
                let err = lifted
                    .iter()
                    .zip(&below)
                    .map(|(a, b)| (a.1 - b.1).abs())
                    .fold(0.0, f64::max);
                c.ok(err <= 1e-12, format!("{comps:?} x{} k={k}: equivariance error {err:e}", coord + 1));
                let avg = deck_average(&m, &lv, coord, k).map_err(e)?;
                let verdict = classify_divergence(&m, &split, &avg, &base_grid, DEFAULT_TOL).map_err(e)?;
                c.ok(
                    verdict.class == base.class,
                    format!("{comps:?} x{} k={k}: deck average {:?} vs {:?}", coord + 1, verdict.class, base.class),
                );
            }
        }
    }
    Ok(c)
}

fn dense_leaves_suite() -> Outcome {
    let mut c = Checks::default();
    let (m, split) = builtin("flat-kronecker", &BuiltinOptions::default()).map_err(e)?;
    c.ok(m.dense_leaves, "flat-kronecker asserts dense leaves");
    let grid = sample_grid(&m, &[16]).map_err(e)?;
    let mut r = common::rng(7);
    for _ in 0..10 {
        let v = VectorFieldSpec::constant(vec![r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0)]);
        let rep = volume_preservation_check(&m, &split, &v, &grid, DEFAULT_TOL).map_err(e)?;
        c.ok(rep.preserved, format!("field {v:?} not volume preserving"));
        for s in [-2.5, 0.0, 1e3] {
            let w = v.scaled(s).map_err(e)?;
            let rep = volume_preservation_check(&m, &split, &w, &grid, DEFAULT_TOL).map_err(e)?;
            c.ok(rep.preserved, format!("scaled field ({s}) not volume preserving"));
        }
    }
    Ok(c)
}

fn parser_suite() -> Outcome {
    let mut c = Checks::default();
    let mut r = common::rng(2024);
    let mut compared = 0;
    for n in 0..200 {
        let ast = common::random_expr(&mut r, 5);
        let text = ast.to_string();
        let back = match expr::parse(&text) {
            Ok(b) => b,
            Err(err) => {
                c.ok(false, format!("#{n} `{text}` does not parse: {err}"));
                continue;
            }
        };
        for _ in 0..5 {
            let env = common::expr_env(&mut r);
            match (ast.eval(&env), back.eval(&env)) {
                (Ok(a), Ok(b)) => {
                    compared += 1;
                    let rel = (a - b).abs() / a.abs().max(1.0);
                    c.ok(rel <= 1e-12 || (a.is_infinite() && a == b), format!("#{n} `{text}`: {a} vs {b}"));
                }
                (Err(_), Err(_)) => {}
                (a, b) => c.ok(false, format!("#{n} `{text}`: {a:?} vs {b:?}")),
            }
        }
    }
    c.ok(compared >= 200, format!("only {compared} finite evaluations compared"));

    // every expression a builtin chart model is made of, plus their mean curvatures
    let mut exprs = Vec::new();
    let mut models = Vec::new();
    for name in ["torus-warped", "flat-kronecker"] {
        let (m, split) = builtin(name, &BuiltinOptions::default()).map_err(e)?;
        if let ModelKind::Chart(ch) = &m.kind {
            exprs.extend(ch.frame.iter().flatten().cloned().map(|x| (models.len(), x)));
        }
        let kappa = foliage::connection::symbolic_mean_curvature(&m, split.leaf()).map_err(e)?;
        exprs.extend(kappa.component_exprs().into_iter().map(|x| (models.len(), x)));
        models.push(m);
    }
    let mut worst = 0.0f64;
    for (mi, x) in &exprs {
        let m = &models[*mi];
        for l in 0..m.dim {
            let d = x.differentiate(&coordinate_name(l)).map_err(e)?;
            for _ in 0..10 {
                let pt: Vec<f64> = (0..m.dim).map(|_| r.gen_range(0.0..1.0)).collect();
                let sym = m.eval_at(&d, &Point(pt.clone())).map_err(e)?;
                let fd = common::fd_expr(x, l, &pt, &m.parameters);
                worst = worst.max((sym - fd).abs());
            }
        }
    }
    c.ok(worst <= 1e-6, format!("symbolic vs central difference {worst:e}"));
    Ok(c)
}

fn main() {
    let criteria: [(&str, Option<Duration>, fn() -> Outcome); 8] = [
        ("suspension of [[2,1],[1,1]]: Christoffel symbols and witness", Some(Duration::from_secs(1)), suspension_2x2),
        ("suspension of [[2,1],[1,1]]: div^Q E2 = 0", None, suspension_2x2_e2),
        ("3x3 suspension: spectrum and witness", Some(Duration::from_secs(1)), suspension_3x3),
        ("warped torus: sign classes and Green formula", Some(Duration::from_secs(5)), warped_torus),
        ("identity suites on random models", None, identity_suites),
        ("finite covers", None, covering_suite),
        ("dense leaves volume preservation", None, dense_leaves_suite),
        ("parser round-trip and derivatives", None, parser_suite),
    ];
    let mut failed = 0;
    for (i, (title, budget, body)) in criteria.into_iter().enumerate() {
        if !run(i + 1, title, budget, body) {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
