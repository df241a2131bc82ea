//! Shared generators and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use foliage::expr::{coordinate_name, BinOp, Constant, Expr, Func};
use foliage::model::{FoliationSplit, FrameModel, Point, VectorFieldSpec};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

fn num(x: f64) -> Expr {
    Expr::Num(x)
}

fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
    Expr::Bin(op, Box::new(a), Box::new(b))
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, Box::new(a))
}

/// `amp * trig(2π (n·x) + phase)` over the coordinates.
fn trig_wave(r: &mut ChaCha8Rng, dim: usize, amp: f64) -> Expr {
    let mut arg = num(r.gen_range(-1.0..1.0));
    for l in 0..dim {
        let n: i32 = r.gen_range(-2..=2);
        if n != 0 {
            let term = bin(
                BinOp::Mul,
                bin(BinOp::Mul, num(2.0 * n as f64), Expr::Const(Constant::Pi)),
                Expr::Var(coordinate_name(l)),
            );
            arg = bin(BinOp::Add, arg, term);
        }
    }
    let f = if r.gen_bool(0.5) { Func::Sin } else { Func::Cos };
    bin(BinOp::Mul, num(amp), call(f, arg))
}

/// Random periodic chart on `T^dim` with a diagonally dominant frame, so the
/// frame matrix stays invertible everywhere.
pub fn random_chart(r: &mut ChaCha8Rng, dim: usize) -> FrameModel {
    let bound = 0.8 / dim as f64;
    let frame = (0..dim)
        .map(|i| {
            (0..dim)
                .map(|l| {
                    let amp = r.gen_range(0.0..bound);
                    let wave = trig_wave(r, dim, amp);
                    if i == l {
                        bin(BinOp::Add, num(r.gen_range(1.0..2.0)), wave)
                    } else {
                        wave
                    }
                })
                .collect()
        })
        .collect();
    let periods = vec![1.0; dim];
    FrameModel::chart(format!("random-chart-{dim}"), BTreeMap::new(), periods, frame).unwrap()
}

fn bracket_table(dim: usize, entries: &[(usize, usize, usize, f64)]) -> Vec<f64> {
    let mut c = vec![0.0; dim * dim * dim];
    for &(i, j, k, v) in entries {
        c[(i * dim + j) * dim + k] += v;
        c[(j * dim + i) * dim + k] -= v;
    }
    c
}

/// Random Lie algebra (so(3), Heisenberg or a diagonal semidirect product) in
/// a random basis, with its structure constants.
pub fn random_lie_algebra(r: &mut ChaCha8Rng) -> (usize, Vec<f64>) {
    let (dim, c) = match r.gen_range(0..3) {
        0 => (3, bracket_table(3, &[(0, 1, 2, 1.0), (1, 2, 0, 1.0), (2, 0, 1, 1.0)])),
        1 => (3, bracket_table(3, &[(0, 1, 2, 1.0)])),
        _ => {
            let n = r.gen_range(2..=3);
            let entries: Vec<_> = (1..=n)
                .map(|i| (0, i, i, r.gen_range(-1.5..1.5)))
                .collect();
            (n + 1, bracket_table(n + 1, &entries))
        }
    };
    // f_i = Σ P_ia e_a, with P close to the identity
    let p = DMatrix::from_fn(dim, dim, |i, j| {
        (if i == j { 1.0 } else { 0.0 }) + r.gen_range(-0.3..0.3)
    });
    let q = p.clone().try_inverse().unwrap();
    let get = |i: usize, j: usize, k: usize| c[(i * dim + j) * dim + k];
    let mut out = vec![0.0; dim * dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                let mut s = 0.0;
                for a in 0..dim {
                    for b in 0..dim {
                        for d in 0..dim {
                            s += p[(i, a)] * p[(j, b)] * get(a, b, d) * q[(d, k)];
                        }
                    }
                }
                out[(i * dim + j) * dim + k] = s;
            }
        }
    }
    (dim, out)
}

pub fn random_constant_model(r: &mut ChaCha8Rng) -> FrameModel {
    let (dim, c) = random_lie_algebra(r);
    let mut entries = Vec::new();
    for i in 0..dim {
        for j in i + 1..dim {
            for k in 0..dim {
                let v = c[(i * dim + j) * dim + k];
                if v != 0.0 {
                    entries.push((i, j, k, Expr::Num(v)));
                }
            }
        }
    }
    FrameModel::constant_structure("random-lie", dim, BTreeMap::new(), entries).unwrap()
}

pub fn random_split(r: &mut ChaCha8Rng, dim: usize) -> FoliationSplit {
    let mut idx: Vec<usize> = (0..dim).collect();
    idx.shuffle(r);
    let p = r.gen_range(1..dim);
    FoliationSplit::new(dim, &idx[..p]).unwrap()
}

/// Random field supported on the given frame indices.
pub fn random_field(r: &mut ChaCha8Rng, m: &FrameModel, support: &[usize]) -> VectorFieldSpec {
    if m.is_chart() {
        let comps = (0..m.dim)
            .map(|k| {
                if support.contains(&k) {
                    bin(BinOp::Add, num(r.gen_range(-1.0..1.0)), trig_wave(r, m.dim, 1.0))
                } else {
                    num(0.0)
                }
            })
            .collect();
        VectorFieldSpec::expressions(comps, m.dim).unwrap()
    } else {
        VectorFieldSpec::Constant(
            (0..m.dim)
                .map(|k| if support.contains(&k) { r.gen_range(-2.0..2.0) } else { 0.0 })
                .collect(),
        )
    }
}

pub fn random_point(r: &mut ChaCha8Rng, m: &FrameModel) -> Point {
    if m.is_chart() {
        Point((0..m.dim).map(|_| r.gen_range(0.0..1.0)).collect())
    } else {
        Point::abstract_point()
    }
}

// ---------------------------------------------------------------------------
// Finite-difference oracles (charts only)

pub const FD_STEP: f64 = 1e-5;

fn frame_at(m: &FrameModel, x: &[f64]) -> DMatrix<f64> {
    m.frame_matrix(&Point(x.to_vec())).unwrap()
}

fn shifted(x: &[f64], l: usize, h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[l] += h;
    y
}

/// `∂_l` of a matrix-valued function by central differences.
fn fd_matrix(f: impl Fn(&[f64]) -> DMatrix<f64>, x: &[f64], l: usize) -> DMatrix<f64> {
    (f(&shifted(x, l, FD_STEP)) - f(&shifted(x, l, -FD_STEP))) / (2.0 * FD_STEP)
}

/// Structure functions from the coordinate bracket with finite-difference
/// derivatives: `[E_i, E_j]^m = Σ_l (a_i^l ∂_l a_j^m − a_j^l ∂_l a_i^m)`,
/// then `C_ij^k` solves `Σ_k C_ij^k a_k^m = [E_i,E_j]^m`. Indexed `[i][j][k]`.
pub fn fd_structure(m: &FrameModel, x: &[f64]) -> Vec<Vec<Vec<f64>>> {
    let n = m.dim;
    let a = frame_at(m, x);
    let da: Vec<DMatrix<f64>> = (0..n).map(|l| fd_matrix(|y| frame_at(m, y), x, l)).collect();
    let at_inv = a.transpose().try_inverse().unwrap();
    let mut c = vec![vec![vec![0.0; n]; n]; n];
    for i in 0..n {
        for j in 0..n {
            let b = nalgebra::DVector::from_fn(n, |mm, _| {
                (0..n)
                    .map(|l| a[(i, l)] * da[l][(j, mm)] - a[(j, l)] * da[l][(i, mm)])
                    .sum::<f64>()
            });
            let sol = &at_inv * b;
            for k in 0..n {
                c[i][j][k] = sol[k];
            }
        }
    }
    c
}

/// Coordinate components `w^l = Σ_k v^k a_k^l` of a frame-component field.
fn coordinate_field(m: &FrameModel, v: &VectorFieldSpec, x: &[f64]) -> Vec<f64> {
    let p = Point(x.to_vec());
    let jet = v.jet(m, &p).unwrap();
    let a = frame_at(m, x);
    (0..m.dim)
        .map(|l| (0..m.dim).map(|k| jet.values[k] * a[(k, l)]).sum())
        .collect()
}

/// Riemannian divergence `ρ⁻¹ Σ_l ∂_l(ρ w^l)` with `ρ = 1/|det A|`, the
/// density of the metric making the frame orthonormal.
pub fn fd_divergence(m: &FrameModel, v: &VectorFieldSpec, x: &[f64]) -> f64 {
    let rho = |y: &[f64]| 1.0 / frame_at(m, y).determinant().abs();
    let mut s = 0.0;
    for l in 0..m.dim {
        let up = shifted(x, l, FD_STEP);
        let dn = shifted(x, l, -FD_STEP);
        let f_up = rho(&up) * coordinate_field(m, v, &up)[l];
        let f_dn = rho(&dn) * coordinate_field(m, v, &dn)[l];
        s += (f_up - f_dn) / (2.0 * FD_STEP);
    }
    s / rho(x)
}

/// Central difference of an expression in coordinate `var`.
pub fn fd_expr(e: &Expr, var: usize, x: &[f64], params: &BTreeMap<String, f64>) -> f64 {
    let eval = |y: &[f64]| {
        let mut env = params.clone();
        for (l, v) in y.iter().enumerate() {
            env.insert(coordinate_name(l), *v);
        }
        e.eval(&env).unwrap()
    };
    let h = 1e-6;
    (eval(&shifted(x, var, h)) - eval(&shifted(x, var, -h))) / (2.0 * h)
}

// ---------------------------------------------------------------------------
// Exact integer oracle

/// `det(A − xI)` by cofactor expansion over integer polynomials (ascending).
pub fn cofactor_char_poly(a: &[Vec<i64>]) -> Vec<i64> {
    let n = a.len();
    let entries: Vec<Vec<Vec<i64>>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { vec![a[i][j], -1] } else { vec![a[i][j]] })
                .collect()
        })
        .collect();
    let mut p = poly_det(&entries);
    while p.len() > 1 && *p.last().unwrap() == 0 {
        p.pop();
    }
    p
}

fn poly_mul(a: &[i64], b: &[i64]) -> Vec<i64> {
    let mut out = vec![0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &mut Vec<i64>, b: &[i64], sign: i64) {
    if a.len() < b.len() {
        a.resize(b.len(), 0);
    }
    for (i, y) in b.iter().enumerate() {
        a[i] += sign * y;
    }
}

fn poly_det(m: &[Vec<Vec<i64>>]) -> Vec<i64> {
    let n = m.len();
    if n == 1 {
        return m[0][0].clone();
    }
    let mut total = vec![0];
    for j in 0..n {
        let minor: Vec<Vec<Vec<i64>>> = m[1..]
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(c, _)| *c != j)
                    .map(|(_, e)| e.clone())
                    .collect()
            })
            .collect();
        let term = poly_mul(&m[0][j], &poly_det(&minor));
        poly_add(&mut total, &term, if j % 2 == 0 { 1 } else { -1 });
    }
    total
}

// ---------------------------------------------------------------------------
// Expression generator

pub const EXPR_VARS: [&str; 3] = ["x1", "x2", "a"];

/// Random expression tree over `x1`, `x2`, `a`, built directly as an AST so it
/// exercises printing independently of the parser.
pub fn random_expr(r: &mut ChaCha8Rng, depth: u32) -> Expr {
    if depth == 0 || r.gen_bool(0.25) {
        return match r.gen_range(0..5) {
            0 => Expr::Num((r.gen_range(-50.0..50.0f64) * 1000.0).round() / 1000.0),
            1 => Expr::Num(r.gen_range(0.0..1.0)),
            2 => Expr::Const(if r.gen_bool(0.5) { Constant::Pi } else { Constant::E }),
            _ => Expr::Var(EXPR_VARS.choose(r).unwrap().to_string()),
        };
    }
    match r.gen_range(0..8) {
        0 => Expr::Neg(Box::new(random_expr(r, depth - 1))),
        1 => bin(BinOp::Add, random_expr(r, depth - 1), random_expr(r, depth - 1)),
        2 => bin(BinOp::Sub, random_expr(r, depth - 1), random_expr(r, depth - 1)),
        3 => bin(BinOp::Mul, random_expr(r, depth - 1), random_expr(r, depth - 1)),
        4 => bin(BinOp::Div, random_expr(r, depth - 1), random_expr(r, depth - 1)),
        5 => {
            let exp = match r.gen_range(0..3) {
                0 => Expr::Num(r.gen_range(-3..=3) as f64),
                1 => Expr::Neg(Box::new(Expr::Num(2.0))),
                _ => Expr::Num(0.5),
            };
            bin(BinOp::Pow, random_expr(r, depth - 1), exp)
        }
        _ => {
            let f = [Func::Sin, Func::Cos, Func::Exp, Func::Ln, Func::Sqrt]
                .choose(r)
                .copied()
                .unwrap();
            call(f, random_expr(r, depth - 1))
        }
    }
}

pub fn expr_env(r: &mut ChaCha8Rng) -> BTreeMap<String, f64> {
    EXPR_VARS
        .iter()
        .map(|v| (v.to_string(), r.gen_range(0.1..2.0)))
        .collect()
}
