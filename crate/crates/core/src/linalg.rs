//! Small dense helpers for 2x2 real matrices.

use serde::Serialize;

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

pub fn det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

pub fn trace(m: &Mat2) -> f64 {
    m[0][0] + m[1][1]
}

pub fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn apply(m: &Mat2, v: Vec2) -> Vec2 {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

pub fn transpose(m: &Mat2) -> Mat2 {
    [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
}

pub fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

pub fn scale(s: f64, v: Vec2) -> Vec2 {
    [s * v[0], s * v[1]]
}

pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn norm(v: Vec2) -> f64 {
    v[0].hypot(v[1])
}

pub fn max_abs(v: Vec2) -> f64 {
    v[0].abs().max(v[1].abs())
}

/// Solves `m x = rhs`; `None` when `m` is numerically singular.
pub fn solve(m: &Mat2, rhs: Vec2) -> Option<Vec2> {
    let d = det(m);
    let size = m.iter().flatten().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if d.abs() <= 1e-14 * size * size.max(1.0) || !d.is_finite() {
        return None;
    }
    Some([
        (m[1][1] * rhs[0] - m[0][1] * rhs[1]) / d,
        (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / d,
    ])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Eigen2 {
    /// Real eigenvalues, ascending by modulus.
    Real([f64; 2]),
    Complex { re: f64, im: f64 },
}

impl Eigen2 {
    pub fn moduli(&self) -> [f64; 2] {
        match *self {
            Eigen2::Real([a, b]) => [a.abs(), b.abs()],
            Eigen2::Complex { re, im } => {
                let r = re.hypot(im);
                [r, r]
            }
        }
    }
}

pub fn eigenvalues(m: &Mat2) -> Eigen2 {
    let tr = trace(m);
    let half = 0.5 * tr;
    let disc = half * half - det(m);
    if disc < 0.0 {
        return Eigen2::Complex {
            re: half,
            im: (-disc).sqrt(),
        };
    }
    let s = disc.sqrt();
    // Avoid cancellation in the smaller root.
    let big = if half >= 0.0 { half + s } else { half - s };
    let small = if big != 0.0 { det(m) / big } else { half - s };
    let mut ev = [small, big];
    ev.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    Eigen2::Real(ev)
}

/// Unit right eigenvector for a real eigenvalue, largest component positive.
pub fn eigenvector(m: &Mat2, lambda: f64) -> Vec2 {
    let a = [m[0][1], lambda - m[0][0]];
    let b = [lambda - m[1][1], m[1][0]];
    let v = if norm(a) >= norm(b) { a } else { b };
    let n = norm(v);
    if n == 0.0 {
        return [1.0, 0.0];
    }
    let v = scale(1.0 / n, v);
    if v[0].abs() >= v[1].abs() {
        scale(v[0].signum(), v)
    } else {
        scale(v[1].signum(), v)
    }
}

pub fn left_eigenvector(m: &Mat2, lambda: f64) -> Vec2 {
    eigenvector(&transpose(m), lambda)
}
