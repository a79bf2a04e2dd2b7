//! Torus maps through their lifts to the plane: unimodular automorphisms,
//! the product map `f0`, conjugates `f_J`, fixed points, separatrix tracing
//! and the invariant matrix of a map in class G.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::{self, Eigen2, Mat2, Vec2};
use crate::model_maps_1d::LiftMap;
use crate::{Error, Result};

/// Integer 2x2 matrix `(a b; c d)` with determinant +1 or -1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct UnimodularMatrix {
    pub a: i64,
    pub b: i64,
    pub c: i64,
    pub d: i64,
}

impl UnimodularMatrix {
    pub const IDENTITY: UnimodularMatrix = UnimodularMatrix { a: 1, b: 0, c: 0, d: 1 };
    /// Coordinate swap `(0 1; 1 0)`.
    pub const SWAP: UnimodularMatrix = UnimodularMatrix { a: 0, b: 1, c: 1, d: 0 };

    pub fn new(a: i64, b: i64, c: i64, d: i64) -> Result<Self> {
        let m = UnimodularMatrix { a, b, c, d };
        match m.checked_det() {
            Some(1) | Some(-1) => Ok(m),
            Some(_) => Err(Error::NonUnimodular(m.to_string())),
            None => Err(Error::Overflow("computing a determinant")),
        }
    }

    /// `J_n = (1 0; n 1)`.
    pub fn j(n: i64) -> Self {
        UnimodularMatrix { a: 1, b: 0, c: n, d: 1 }
    }

    pub fn diag(s1: i64, s2: i64) -> Self {
        UnimodularMatrix { a: s1, b: 0, c: 0, d: s2 }
    }

    fn checked_det(&self) -> Option<i64> {
        self.a.checked_mul(self.d)?.checked_sub(self.b.checked_mul(self.c)?)
    }

    pub fn det(&self) -> i64 {
        self.a * self.d - self.b * self.c
    }

    pub fn mul(&self, o: &UnimodularMatrix) -> Result<UnimodularMatrix> {
        let dot = |x: i64, y: i64, u: i64, v: i64| -> Option<i64> {
            x.checked_mul(y)?.checked_add(u.checked_mul(v)?)
        };
        let of = || Error::Overflow("multiplying matrices");
        Ok(UnimodularMatrix {
            a: dot(self.a, o.a, self.b, o.c).ok_or_else(of)?,
            b: dot(self.a, o.b, self.b, o.d).ok_or_else(of)?,
            c: dot(self.c, o.a, self.d, o.c).ok_or_else(of)?,
            d: dot(self.c, o.b, self.d, o.d).ok_or_else(of)?,
        })
    }

    pub fn inverse(&self) -> UnimodularMatrix {
        let s = self.det();
        UnimodularMatrix {
            a: s * self.d,
            b: -s * self.b,
            c: -s * self.c,
            d: s * self.a,
        }
    }

    pub fn column(&self, i: usize) -> [i64; 2] {
        if i == 0 {
            [self.a, self.c]
        } else {
            [self.b, self.d]
        }
    }

    pub fn from_columns(c1: [i64; 2], c2: [i64; 2]) -> UnimodularMatrix {
        UnimodularMatrix { a: c1[0], b: c2[0], c: c1[1], d: c2[1] }
    }

    pub fn as_f64(&self) -> Mat2 {
        [[self.a as f64, self.b as f64], [self.c as f64, self.d as f64]]
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        linalg::apply(&self.as_f64(), v)
    }

    pub fn entries(&self) -> [i64; 4] {
        [self.a, self.b, self.c, self.d]
    }
}

impl fmt::Display for UnimodularMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} {}; {} {})", self.a, self.b, self.c, self.d)
    }
}

impl FromStr for UnimodularMatrix {
    type Err = Error;

    /// Parses `a,b,c,d` (row-major).
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::InvalidArgument(format!("expected a,b,c,d, got {s:?}")));
        }
        let mut v = [0i64; 4];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("not an integer: {p:?}")))?;
        }
        UnimodularMatrix::new(v[0], v[1], v[2], v[3])
    }
}

impl Serialize for UnimodularMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.entries().serialize(s)
    }
}

impl<'de> Deserialize<'de> for UnimodularMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [a, b, c, d] = <[i64; 4]>::deserialize(d)?;
        UnimodularMatrix::new(a, b, c, d).map_err(serde::de::Error::custom)
    }
}

/// Reduces a lift point to the fundamental square [0, 1)^2.
pub fn reduce(p: Vec2) -> Vec2 {
    let r = |x: f64| {
        let v = x - x.floor();
        if v >= 1.0 {
            0.0
        } else {
            v
        }
    };
    [r(p[0]), r(p[1])]
}

/// Difference `p - q` taken to the nearest integer translate.
pub fn torus_offset(p: Vec2, q: Vec2) -> Vec2 {
    let d = |x: f64| x - x.round();
    [d(p[0] - q[0]), d(p[1] - q[1])]
}

/// Max-norm distance on the torus.
pub fn torus_distance(p: Vec2, q: Vec2) -> f64 {
    linalg::max_abs(torus_offset(p, q))
}

/// A diffeomorphism of the torus given by a lift `R^2 -> R^2` commuting
/// with integer translations up to its homology action.
pub trait TorusMap: Send + Sync {
    fn lift(&self, p: Vec2) -> Vec2;

    fn jacobian(&self, p: Vec2) -> Mat2 {
        fd_jacobian(&|q| self.lift(q), p, 1e-6)
    }

    fn describe(&self) -> String;
}

pub type SharedMap = Arc<dyn TorusMap>;

pub fn eval(f: &dyn TorusMap, p: Vec2) -> Vec2 {
    reduce(f.lift(p))
}

pub fn fd_jacobian(f: &dyn Fn(Vec2) -> Vec2, p: Vec2, h: f64) -> Mat2 {
    let mut m = [[0.0; 2]; 2];
    for j in 0..2 {
        let mut a = p;
        let mut b = p;
        a[j] += h;
        b[j] -= h;
        let (fa, fb) = (f(a), f(b));
        for i in 0..2 {
            m[i][j] = (fa[i] - fb[i]) / (2.0 * h);
        }
    }
    m
}

/// Linear automorphism `p -> J p`.
pub struct Automorphism(pub UnimodularMatrix);

impl TorusMap for Automorphism {
    fn lift(&self, p: Vec2) -> Vec2 {
        self.0.apply(p)
    }

    fn jacobian(&self, _p: Vec2) -> Mat2 {
        self.0.as_f64()
    }

    fn describe(&self) -> String {
        format!("automorphism {}", self.0)
    }
}

/// `(x, z) -> (f(x), g(z))`.
pub struct ProductMap {
    pub f: LiftMap,
    pub g: LiftMap,
}

impl TorusMap for ProductMap {
    fn lift(&self, p: Vec2) -> Vec2 {
        [self.f.value(p[0]), self.g.value(p[1])]
    }

    fn jacobian(&self, p: Vec2) -> Mat2 {
        [[self.f.derivative(p[0]), 0.0], [0.0, self.g.derivative(p[1])]]
    }

    fn describe(&self) -> String {
        format!("product {} x {}", self.f.name(), self.g.name())
    }
}

/// `J o inner o J^-1`.
pub struct Conjugated {
    pub matrix: UnimodularMatrix,
    inverse: Mat2,
    pub inner: SharedMap,
}

impl Conjugated {
    pub fn new(matrix: UnimodularMatrix, inner: SharedMap) -> Self {
        Conjugated {
            matrix,
            inverse: matrix.inverse().as_f64(),
            inner,
        }
    }
}

impl TorusMap for Conjugated {
    fn lift(&self, p: Vec2) -> Vec2 {
        let q = linalg::apply(&self.inverse, p);
        self.matrix.apply(self.inner.lift(q))
    }

    fn jacobian(&self, p: Vec2) -> Mat2 {
        let q = linalg::apply(&self.inverse, p);
        let inner = self.inner.jacobian(q);
        linalg::mul(&linalg::mul(&self.matrix.as_f64(), &inner), &self.inverse)
    }

    fn describe(&self) -> String {
        format!("conjugate of [{}] by {}", self.inner.describe(), self.matrix)
    }
}

/// `T_v o inner o T_-v` for the translation `T_v`.
pub struct Translated {
    pub shift: Vec2,
    pub inner: SharedMap,
}

impl TorusMap for Translated {
    fn lift(&self, p: Vec2) -> Vec2 {
        linalg::add(self.inner.lift(linalg::sub(p, self.shift)), self.shift)
    }

    fn jacobian(&self, p: Vec2) -> Mat2 {
        self.inner.jacobian(linalg::sub(p, self.shift))
    }

    fn describe(&self) -> String {
        format!("translate of [{}] by ({}, {})", self.inner.describe(), self.shift[0], self.shift[1])
    }
}

/// The polar gradient-like map `phi0 x phi0`.
pub fn f0() -> SharedMap {
    Arc::new(ProductMap {
        f: LiftMap::phi0(),
        g: LiftMap::phi0(),
    })
}

/// `f_J = J f0 J^-1`.
pub fn f_j(matrix: UnimodularMatrix) -> SharedMap {
    if matrix == UnimodularMatrix::IDENTITY {
        return f0();
    }
    Arc::new(Conjugated::new(matrix, f0()))
}

/// Integer matrix of the action of the lift on Z^2, estimated at `p`.
pub fn homology_action(f: &dyn TorusMap, p: Vec2) -> [[i64; 2]; 2] {
    let base = f.lift(p);
    let mut d = [[0i64; 2]; 2];
    for j in 0..2 {
        let mut q = p;
        q[j] += 1.0;
        let img = f.lift(q);
        for i in 0..2 {
            d[i][j] = (img[i] - base[i]).round() as i64;
        }
    }
    d
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedKind {
    Sink,
    Source,
    Saddle,
    SaddleNode,
    Nonhyperbolic,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FixedPoint2D {
    /// Position in [0, 1)^2.
    pub position: Vec2,
    pub eigen: Eigen2,
    pub kind: FixedKind,
    pub residual: f64,
}

impl FixedPoint2D {
    pub fn is_hyperbolic(&self) -> bool {
        matches!(self.kind, FixedKind::Sink | FixedKind::Source | FixedKind::Saddle)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FixedPointConfig {
    pub grid_n: usize,
    pub tol: f64,
    pub tol_hyp: f64,
    pub tol_sn: f64,
    pub max_newton: usize,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            grid_n: 128,
            tol: 1e-11,
            tol_hyp: 1e-6,
            tol_sn: 1e-6,
            max_newton: 100,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct FixedPointReport {
    pub points: Vec<FixedPoint2D>,
    /// Seeds where Newton did not converge.
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Census {
    pub sinks: usize,
    pub sources: usize,
    pub saddles: usize,
    pub saddle_nodes: usize,
    pub other: usize,
}

impl Census {
    pub fn total(&self) -> usize {
        self.sinks + self.sources + self.saddles + self.saddle_nodes + self.other
    }

    pub fn all_hyperbolic(&self) -> bool {
        self.saddle_nodes == 0 && self.other == 0
    }

    /// Lefschetz sum `sinks - saddles + sources` for hyperbolic censuses.
    pub fn euler(&self) -> i64 {
        self.sinks as i64 - self.saddles as i64 + self.sources as i64
    }

    pub fn is_class_g(&self) -> bool {
        self.sinks == 1 && self.sources == 1 && self.saddles == 2 && self.all_hyperbolic()
    }
}

impl FixedPointReport {
    pub fn census(&self) -> Census {
        let mut c = Census::default();
        for p in &self.points {
            match p.kind {
                FixedKind::Sink => c.sinks += 1,
                FixedKind::Source => c.sources += 1,
                FixedKind::Saddle => c.saddles += 1,
                FixedKind::SaddleNode => c.saddle_nodes += 1,
                FixedKind::Nonhyperbolic => c.other += 1,
            }
        }
        c
    }

    pub fn of_kind(&self, kind: FixedKind) -> Vec<FixedPoint2D> {
        self.points.iter().filter(|p| p.kind == kind).copied().collect()
    }
}

pub fn classify(eigen: &Eigen2, tol_hyp: f64, tol_sn: f64) -> FixedKind {
    match *eigen {
        Eigen2::Complex { re, im } => {
            let r = re.hypot(im);
            if (r - 1.0).abs() <= tol_hyp {
                FixedKind::Nonhyperbolic
            } else if r < 1.0 {
                FixedKind::Sink
            } else {
                FixedKind::Source
            }
        }
        Eigen2::Real(ev) => {
            let near_one = ev.iter().filter(|l| (*l - 1.0).abs() <= tol_sn).count();
            let critical = ev.iter().filter(|l| (l.abs() - 1.0).abs() <= tol_hyp).count();
            if near_one == 1 && critical == 1 {
                FixedKind::SaddleNode
            } else if critical > 0 || near_one > 0 {
                FixedKind::Nonhyperbolic
            } else if ev[1].abs() < 1.0 {
                FixedKind::Sink
            } else if ev[0].abs() > 1.0 {
                FixedKind::Source
            } else {
                FixedKind::Saddle
            }
        }
    }
}

/// Newton iteration for `F(p) = p + k` from `seed`, with backtracking and a
/// least-squares step where `DF - I` is singular.
pub fn newton_fixed_point(
    f: &dyn TorusMap,
    seed: Vec2,
    tol: f64,
    max_iter: usize,
) -> Option<(Vec2, f64)> {
    let shift = linalg::sub(f.lift(seed), seed).map(f64::round);
    let resid = |p: Vec2| linalg::sub(linalg::sub(f.lift(p), p), shift);
    let mut p = seed;
    let mut g = resid(p);
    let mut gn = linalg::max_abs(g);
    // Past `tol` keep stepping while the residual still drops: near a fold
    // Newton is only linear and the eigenvalues need the extra digits.
    let mut polish = 0;
    for it in 0..max_iter + 40 {
        if gn <= tol {
            polish += 1;
            if polish > 40 || gn == 0.0 {
                break;
            }
        } else if it >= max_iter {
            break;
        }
        let mut a = f.jacobian(p);
        a[0][0] -= 1.0;
        a[1][1] -= 1.0;
        let neg = [-g[0], -g[1]];
        let step = linalg::solve(&a, neg).unwrap_or_else(|| {
            let at = linalg::transpose(&a);
            let mut n = linalg::mul(&at, &a);
            let lam = 1e-12 + 1e-8 * (n[0][0] + n[1][1]);
            n[0][0] += lam;
            n[1][1] += lam;
            linalg::solve(&n, linalg::apply(&at, neg)).unwrap_or([0.0, 0.0])
        });
        let len = linalg::max_abs(step);
        let step = if len > 0.25 { linalg::scale(0.25 / len, step) } else { step };
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let q = linalg::add(p, linalg::scale(alpha, step));
            let gq = resid(q);
            let gqn = linalg::max_abs(gq);
            if gqn < gn {
                p = q;
                g = gq;
                gn = gqn;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if gn <= tol {
        Some((p, gn))
    } else {
        None
    }
}

/// All fixed points of `f` on the torus: residual scan of a `grid_n^2` grid,
/// Newton from every local minimum, deduplication at spacing `1/grid_n`.
pub fn fixed_points_2d(f: &dyn TorusMap, cfg: &FixedPointConfig) -> FixedPointReport {
    let n = cfg.grid_n.max(4);
    let h = 1.0 / n as f64;
    let grid: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let p = [((k / n) as f64 + 0.5) * h, ((k % n) as f64 + 0.5) * h];
            torus_distance(f.lift(p), p)
        })
        .collect();
    let at = |i: isize, j: isize| {
        let w = |v: isize| v.rem_euclid(n as isize) as usize;
        grid[w(i) * n + w(j)]
    };
    let mut seeds = Vec::new();
    for i in 0..n as isize {
        for j in 0..n as isize {
            let r = at(i, j);
            if r > 0.25 {
                continue;
            }
            let is_min = (-1..=1)
                .flat_map(|di| (-1..=1).map(move |dj| (di, dj)))
                .filter(|&d| d != (0, 0))
                .all(|(di, dj)| r <= at(i + di, j + dj));
            if !is_min {
                continue;
            }
            let seed = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
            // A fixed point inside the cell keeps each residual component
            // below its row of Df - I times the half-diagonal; twice that
            // leaves room for curvature. Deep minima in shear strips fail.
            let mut a = f.jacobian(seed);
            a[0][0] -= 1.0;
            a[1][1] -= 1.0;
            let g = torus_offset(f.lift(seed), seed);
            let near = (0..2).all(|k| g[k].abs() <= 2.0 * a[k][0].hypot(a[k][1]) * h + 1e-9);
            if near {
                seeds.push(seed);
            }
        }
    }

    let results: Vec<std::result::Result<(Vec2, f64), Vec2>> = seeds
        .par_iter()
        .map(|&s| newton_fixed_point(f, s, cfg.tol, cfg.max_newton).ok_or(s))
        .collect();

    let mut report = FixedPointReport::default();
    let mut found: Vec<(Vec2, f64)> = Vec::new();
    let mut merged: Vec<Vec2> = Vec::new();
    for r in results {
        match r {
            Ok((p, res)) => {
                let p = reduce(p);
                if let Some(slot) = found.iter_mut().find(|(q, _)| torus_distance(*q, p) < h) {
                    let gap = torus_distance(slot.0, p);
                    // Newton lands within ~tol of a root, so a larger gap
                    // means two roots nearer than the grid resolves.
                    if gap > 1e-6 && !merged.iter().any(|m| torus_distance(*m, slot.0) < h) {
                        merged.push(slot.0);
                        report.warnings.push(format!(
                            "distinct fixed points {gap:.2e} apart near ({:.6}, {:.6}) merged at spacing {h:.2e}",
                            p[0], p[1]
                        ));
                    }
                    if res < slot.1 {
                        *slot = (p, res);
                    }
                } else {
                    found.push((p, res));
                }
            }
            Err(s) => report
                .warnings
                .push(format!("newton did not converge from seed ({:.6}, {:.6})", s[0], s[1])),
        }
    }
    found.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]).then(a.0[1].total_cmp(&b.0[1])));
    report.points = found
        .into_iter()
        .map(|(p, residual)| {
            let eigen = linalg::eigenvalues(&f.jacobian(p));
            FixedPoint2D {
                position: p,
                eigen,
                kind: classify(&eigen, cfg.tol_hyp, cfg.tol_sn),
                residual,
            }
        })
        .collect();
    report
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Plus,
    Minus,
}

#[derive(Clone, Copy, Debug)]
pub struct TraceConfig {
    pub eps0: f64,
    pub eps_node: f64,
    pub h_sep: f64,
    pub max_iter: usize,
    pub max_depth: usize,
    pub inverse_tol: f64,
    pub inverse_max: usize,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            eps0: 1e-8,
            eps_node: 1e-4,
            h_sep: 1e-2,
            max_iter: 2000,
            max_depth: 40,
            inverse_tol: 1e-12,
            inverse_max: 50,
        }
    }
}

/// A traced separatrix as a polyline of lift points starting at the saddle.
#[derive(Clone, Debug, Serialize)]
pub struct SeparatrixCurve {
    pub saddle: Vec2,
    pub stability: Stability,
    pub branch: Branch,
    pub points: Vec<Vec2>,
    /// Index of the target the curve ended at.
    pub target: usize,
    /// Lift of the target nearest to the last point.
    pub end: Vec2,
    pub iterations: usize,
}

fn newton_preimage(f: &dyn TorusMap, start: Vec2, q: Vec2, tol: f64, max_iter: usize) -> Option<Vec2> {
    let mut p = start;
    let mut rn0 = f64::INFINITY;
    for i in 0..max_iter {
        let r = linalg::sub(f.lift(p), q);
        let rn = linalg::max_abs(r);
        if rn <= tol {
            return Some(p);
        }
        if !rn.is_finite() || (i > 2 && rn > rn0) {
            return None;
        }
        rn0 = rn;
        p = linalg::sub(p, linalg::solve(&f.jacobian(p), r)?);
    }
    None
}

/// Preimage of `q` under the lift: Newton from `q - (F(q) - q)`, falling
/// back to continuation along the segment from the image of that guess.
pub fn invert_lift(f: &dyn TorusMap, q: Vec2, tol: f64, max_iter: usize) -> Result<Vec2> {
    let guess = linalg::sub(q, linalg::sub(f.lift(q), q));
    if let Some(p) = newton_preimage(f, guess, q, tol, max_iter) {
        return Ok(p);
    }
    let q0 = f.lift(guess);
    let (mut p, mut s, mut ds) = (guess, 0.0f64, 0.25f64);
    while s < 1.0 {
        let s1 = (s + ds).min(1.0);
        let target = linalg::add(q0, linalg::scale(s1, linalg::sub(q, q0)));
        match newton_preimage(f, p, target, tol, 30) {
            Some(next) => {
                p = next;
                s = s1;
                ds *= 2.0;
            }
            None => {
                ds *= 0.5;
                if ds < 1e-9 {
                    return Err(Error::NonConvergence(format!(
                        "lift inversion at ({:.6}, {:.6}) stalled",
                        q[0], q[1]
                    )));
                }
            }
        }
    }
    Ok(p)
}

/// Traces one branch of the stable or unstable manifold of `saddle` until it
/// comes within `eps_node` of one of `targets` (torus positions).
///
/// The branch is parametrized by `u = k + s`, `s` in [0, 1), as
/// `G^k(saddle + eps0 * mu^s * v)` with `G = f` (or `f^-1`) and `mu` the
/// expanding multiplier of `G`; `s` is bisected until consecutive points are
/// within `h_sep`.
pub fn trace_separatrix(
    f: &dyn TorusMap,
    saddle: Vec2,
    stability: Stability,
    branch: Branch,
    targets: &[Vec2],
    cfg: &TraceConfig,
) -> Result<SeparatrixCurve> {
    let jac = f.jacobian(saddle);
    let ev = match linalg::eigenvalues(&jac) {
        Eigen2::Real(ev) if ev[0].abs() < 1.0 && ev[1].abs() > 1.0 => ev,
        _ => return Err(Error::InvalidArgument("trace needs a hyperbolic saddle".into())),
    };
    let lambda = match stability {
        Stability::Unstable => ev[1],
        Stability::Stable => ev[0],
    };
    if lambda < 0.0 {
        return Err(Error::InvalidArgument(
            "saddles with negative multipliers are not supported".into(),
        ));
    }
    let mu = match stability {
        Stability::Unstable => lambda,
        Stability::Stable => 1.0 / lambda,
    };
    let sign = if branch == Branch::Plus { 1.0 } else { -1.0 };
    let v = linalg::scale(sign, linalg::eigenvector(&jac, lambda));
    let seed = |s: f64| linalg::add(saddle, linalg::scale(cfg.eps0 * mu.powf(s), v));
    let step = |p: Vec2| -> Result<Vec2> {
        match stability {
            Stability::Unstable => Ok(f.lift(p)),
            Stability::Stable => invert_lift(f, p, cfg.inverse_tol, cfg.inverse_max),
        }
    };
    let iterate = |s: f64, k: usize| -> Result<Vec2> {
        let mut p = seed(s);
        for _ in 0..k {
            p = step(p)?;
        }
        Ok(p)
    };

    let n0 = 8;
    let mut level: Vec<(f64, Vec2)> = (0..=n0)
        .map(|i| {
            let s = i as f64 / n0 as f64;
            (s, seed(s))
        })
        .collect();
    let mut points = vec![saddle];
    for k in 0..cfg.max_iter {
        let mut refined: Vec<(f64, Vec2)> = Vec::with_capacity(level.len());
        refined.push(level[0]);
        for w in level.windows(2) {
            let mut stack = vec![(w[1], 0usize)];
            let mut left = w[0];
            while let Some((right, depth)) = stack.pop() {
                if linalg::max_abs(linalg::sub(right.1, left.1)) > cfg.h_sep && depth < cfg.max_depth {
                    let s = 0.5 * (left.0 + right.0);
                    let mid = (s, iterate(s, k)?);
                    stack.push((right, depth + 1));
                    stack.push((mid, depth + 1));
                } else {
                    refined.push(right);
                    left = right;
                }
            }
        }
        level = refined;
        // seed(1) is the image of seed(0) up to linearization error, so the
        // first point of a later level repeats the last one of the previous.
        points.extend(level.iter().skip(usize::from(k > 0)).map(|e| e.1));

        let first = level[0].1;
        if let Some(idx) = targets.iter().position(|t| torus_distance(first, *t) < cfg.eps_node) {
            if level.iter().all(|e| torus_distance(e.1, targets[idx]) < cfg.eps_node) {
                let last = level[level.len() - 1].1;
                let end = linalg::add(last, linalg::scale(-1.0, torus_offset(last, targets[idx])));
                return Ok(SeparatrixCurve {
                    saddle,
                    stability,
                    branch,
                    points,
                    target: idx,
                    end,
                    iterations: k,
                });
            }
        }
        level = level
            .into_iter()
            .map(|(s, p)| step(p).map(|q| (s, q)))
            .collect::<Result<_>>()?;
    }
    Err(Error::NonConvergence(format!(
        "separatrix from ({:.6}, {:.6}) reached no node in {} iterations",
        saddle[0], saddle[1], cfg.max_iter
    )))
}

/// Closes two branches ending at the same node into a loop through the
/// saddle and returns its homotopy type, normalized to `mu > 0` or
/// `mu = 0, nu = 1`.
pub fn homotopy_type(b1: &SeparatrixCurve, b2: &SeparatrixCurve) -> Result<[i64; 2]> {
    let d = linalg::sub(b1.end, b2.end);
    let t = [d[0].round(), d[1].round()];
    let residue = linalg::max_abs(linalg::sub(d, t));
    let gap = |c: &SeparatrixCurve| linalg::max_abs(linalg::sub(*c.points.last().unwrap(), c.end));
    if residue > 0.1 || gap(b1) > 0.1 || gap(b2) > 0.1 {
        return Err(Error::TracingInconsistency(format!(
            "branches do not close up (residue {residue:.3e})"
        )));
    }
    Ok(normalize_type([t[0] as i64, t[1] as i64]))
}

pub fn normalize_type(t: [i64; 2]) -> [i64; 2] {
    if t[0] < 0 || (t[0] == 0 && t[1] < 0) {
        [-t[0], -t[1]]
    } else {
        t
    }
}

/// The signed permutation matrices: column negations and the column swap.
pub fn column_transforms() -> [UnimodularMatrix; 8] {
    let mut out = [UnimodularMatrix::IDENTITY; 8];
    let mut k = 0;
    for swap in [false, true] {
        for (s1, s2) in [(1, 1), (-1, 1), (1, -1), (-1, -1)] {
            let d = UnimodularMatrix::diag(s1, s2);
            out[k] = if swap {
                UnimodularMatrix::SWAP.mul(&d).expect("small entries")
            } else {
                d
            };
            k += 1;
        }
    }
    out
}

fn is_canonical(m: &UnimodularMatrix) -> bool {
    let (mu1, mu2, nu1, nu2) = (m.a, m.b, m.c, m.d);
    mu1 >= mu2 && mu2 >= 0 && (mu1 != mu2 || nu1 > nu2) && (mu2 != 0 || nu2 == 1)
}

/// Canonical representative of `m` under column negations and the swap,
/// with the transform `S` such that `m S` is canonical.
pub fn canonicalize_with(m: &UnimodularMatrix) -> Result<(UnimodularMatrix, UnimodularMatrix)> {
    let mut hits = Vec::new();
    for s in column_transforms() {
        let c = m.mul(&s)?;
        if is_canonical(&c) && !hits.iter().any(|(h, _): &(UnimodularMatrix, _)| *h == c) {
            hits.push((c, s));
        }
    }
    match hits.len() {
        1 => Ok(hits[0]),
        _ => Err(Error::CanonicalForm(m.to_string())),
    }
}

pub fn canonicalize(m: &UnimodularMatrix) -> Result<UnimodularMatrix> {
    canonicalize_with(m).map(|(c, _)| c)
}

#[derive(Clone, Debug, Serialize)]
pub struct SaddleTypes {
    pub position: Vec2,
    pub stable: [i64; 2],
    pub unstable: [i64; 2],
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantMatrixReport {
    pub matrix: UnimodularMatrix,
    pub raw: UnimodularMatrix,
    pub saddles: [SaddleTypes; 2],
    pub fixed_points: Vec<FixedPoint2D>,
}

/// Invariant matrix of a map in class G: traces the eight separatrices,
/// pairs the stable type of one saddle with the unstable type of the other
/// and canonicalizes.
pub fn invariant_matrix(
    f: &dyn TorusMap,
    fp_cfg: &FixedPointConfig,
    trace_cfg: &TraceConfig,
) -> Result<InvariantMatrixReport> {
    let report = fixed_points_2d(f, fp_cfg);
    let census = report.census();
    if !census.is_class_g() {
        return Err(Error::NotInClassG(format!(
            "census {} sinks, {} saddles, {} sources, {} non-hyperbolic",
            census.sinks,
            census.saddles,
            census.sources,
            census.saddle_nodes + census.other
        )));
    }
    let saddles = report.of_kind(FixedKind::Saddle);
    let sinks: Vec<Vec2> = report.of_kind(FixedKind::Sink).iter().map(|p| p.position).collect();
    let sources: Vec<Vec2> = report.of_kind(FixedKind::Source).iter().map(|p| p.position).collect();

    let jobs: Vec<(usize, Stability, Branch)> = (0..2)
        .flat_map(|i| {
            [Stability::Stable, Stability::Unstable]
                .into_iter()
                .flat_map(move |s| [Branch::Plus, Branch::Minus].into_iter().map(move |b| (i, s, b)))
        })
        .collect();
    let curves: Vec<SeparatrixCurve> = jobs
        .par_iter()
        .map(|&(i, s, b)| {
            let targets = if s == Stability::Unstable { &sinks } else { &sources };
            trace_separatrix(f, saddles[i].position, s, b, targets, trace_cfg)
        })
        .collect::<Result<_>>()?;

    let types = |i: usize| -> Result<SaddleTypes> {
        let c = &curves[4 * i..4 * i + 4];
        Ok(SaddleTypes {
            position: saddles[i].position,
            stable: homotopy_type(&c[0], &c[1])?,
            unstable: homotopy_type(&c[2], &c[3])?,
        })
    };
    let (ta, tb) = (types(0)?, types(1)?);
    if ta.stable != tb.unstable || tb.stable != ta.unstable {
        return Err(Error::TracingInconsistency(format!(
            "stable {:?} / unstable {:?} against stable {:?} / unstable {:?}",
            ta.stable, ta.unstable, tb.stable, tb.unstable
        )));
    }
    let raw = UnimodularMatrix::from_columns(ta.stable, ta.unstable);
    if raw.det().abs() != 1 {
        return Err(Error::NotInClassG(format!("separatrix types give {raw}, not unimodular")));
    }
    Ok(InvariantMatrixReport {
        matrix: canonicalize(&raw)?,
        raw,
        saddles: [ta, tb],
        fixed_points: report.points,
    })
}
