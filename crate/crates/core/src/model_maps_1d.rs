//! Circle lifts used as building blocks: the gradient-like map `phi0`, the
//! bumps `phi1`, `phi2`, the glued lifts `g1`, `g2`, one-parameter families
//! between them, and a fixed-point finder for degree-one lifts.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::{Error, Result};

/// A point of the circle R/Z, stored in [0, 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CirclePoint(f64);

impl CirclePoint {
    pub fn new(x: f64) -> Self {
        let r = x - x.floor();
        // x.floor() can round r up to exactly 1 for tiny negative inputs.
        CirclePoint(if r >= 1.0 { 0.0 } else { r })
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Shortest distance along the circle.
    pub fn distance(self, other: CirclePoint) -> f64 {
        circle_distance(self.0, other.0)
    }
}

pub fn circle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Flat sigmoid on [a, b]: 0 left of `a`, 1 right of `b`, C-infinity flat at
/// both ends. Inside, `1 / (1 + exp((1/2 - s) / (s^2 (1-s)^2)))` in the
/// affine coordinate `s = (x - a) / (b - a)`.
pub fn sigmoid(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a < b) {
        return Err(Error::InvalidInterval { a, b });
    }
    Ok(smooth_step(a, b, x))
}

/// Unchecked form of [`sigmoid`]; callers guarantee `a < b`.
pub(crate) fn smooth_step(a: f64, b: f64, x: f64) -> f64 {
    unit_step((x - a) / (b - a))
}

/// Derivative of [`smooth_step`] in `x`.
pub(crate) fn smooth_step_derivative(a: f64, b: f64, x: f64) -> f64 {
    unit_step_derivative((x - a) / (b - a)) / (b - a)
}

const EXP_CUTOFF: f64 = 700.0;

fn unit_exponent(s: f64) -> f64 {
    let q = s * (1.0 - s);
    (0.5 - s) / (q * q)
}

fn unit_step(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let e = unit_exponent(s);
    if e > EXP_CUTOFF {
        0.0
    } else if e < -EXP_CUTOFF {
        1.0
    } else {
        1.0 / (1.0 + e.exp())
    }
}

fn unit_step_derivative(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        return 0.0;
    }
    let e = unit_exponent(s);
    if e.abs() > EXP_CUTOFF {
        return 0.0;
    }
    let q = s * (1.0 - s);
    // delta (1 - delta) = 1 / (2 + 2 cosh e)
    (1.0 - 3.0 * s + 3.0 * s * s) / (q * q * q) / (2.0 + 2.0 * e.cosh())
}

/// Value and derivative rule of a lift of a circle map.
pub trait Lift: Send + Sync {
    fn value(&self, x: f64) -> f64;

    fn derivative(&self, x: f64) -> f64 {
        let h = 1e-6;
        (self.value(x + h) - self.value(x - h)) / (2.0 * h)
    }
}

struct FnLift<F>(F);

impl<F: Fn(f64) -> f64 + Send + Sync> Lift for FnLift<F> {
    fn value(&self, x: f64) -> f64 {
        (self.0)(x)
    }
}

/// A named lift `R -> R` of a degree-one circle map.
#[derive(Clone)]
pub struct LiftMap {
    name: String,
    rule: Arc<dyn Lift>,
}

impl fmt::Debug for LiftMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LiftMap({})", self.name)
    }
}

impl LiftMap {
    pub fn new(name: impl Into<String>, rule: impl Lift + 'static) -> Self {
        LiftMap {
            name: name.into(),
            rule: Arc::new(rule),
        }
    }

    /// Lift given by a closure; the derivative falls back to central differences.
    pub fn from_fn(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        LiftMap::new(name, FnLift(f))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self, x: f64) -> f64 {
        self.rule.value(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.rule.derivative(x)
    }

    /// Preimage of `y` for an increasing lift with `|f(x) - x| < 1`.
    pub fn inverse(&self, y: f64) -> f64 {
        inverse_of(|x| self.value(x), |x| self.derivative(x), y)
    }

    pub fn phi0() -> Self {
        LiftMap::new("phi0", ModelLift::Phi0)
    }

    pub fn phi1() -> Self {
        LiftMap::new("phi1", ModelLift::Phi1)
    }

    pub fn phi2() -> Self {
        LiftMap::new("phi2", ModelLift::Phi2)
    }

    pub fn g1() -> Self {
        LiftMap::new("g1", ModelLift::G1)
    }

    pub fn g2() -> Self {
        LiftMap::new("g2", ModelLift::G2)
    }

    /// Looks up a shipped lift by name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "phi0" => Ok(Self::phi0()),
            "phi1" => Ok(Self::phi1()),
            "phi2" => Ok(Self::phi2()),
            "g1" => Ok(Self::g1()),
            "g2" => Ok(Self::g2()),
            other => Err(Error::UnknownLift(other.to_string())),
        }
    }
}

/// Safeguarded Newton for `f(x) = y`, `f` increasing with `|f(x) - x| < 1`.
pub(crate) fn inverse_of(f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, y: f64) -> f64 {
    let (mut lo, mut hi) = (y - 1.0, y + 1.0);
    let mut x = y - (f(y) - y);
    for _ in 0..100 {
        let r = f(x) - y;
        if r == 0.0 {
            return x;
        }
        if r > 0.0 {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        let d = df(x);
        let mut next = x - r / d;
        if !(d > 0.0) || !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) {
            return next;
        }
        x = next;
    }
    x
}

pub(crate) fn phi0_inverse(y: f64) -> f64 {
    inverse_of(phi0, dphi0, y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelLift {
    Phi0,
    Phi1,
    Phi2,
    G1,
    G2,
}

pub(crate) fn phi0(x: f64) -> f64 {
    x - (2.0 * PI * (x - 0.25)).sin() / (4.0 * PI)
}

pub(crate) fn dphi0(x: f64) -> f64 {
    1.0 - 0.5 * (2.0 * PI * (x - 0.25)).cos()
}

fn phi1(x: f64) -> f64 {
    x - (6.0 * PI * (x - 0.25)).sin() / (12.0 * PI)
}

fn dphi1(x: f64) -> f64 {
    1.0 - 0.5 * (6.0 * PI * (x - 0.25)).cos()
}

const PHI2_FREQ: f64 = 5.0 * PI / 6.0;

fn phi2(x: f64) -> f64 {
    x + (PHI2_FREQ * (x - 5.0 / 12.0)).sin() / (4.0 * PI)
}

fn dphi2(x: f64) -> f64 {
    1.0 + PHI2_FREQ * (PHI2_FREQ * (x - 5.0 / 12.0)).cos() / (4.0 * PI)
}

/// `(1 - d) f + d g` with `d` rising on (a, b); returns value and derivative.
fn glue(a: f64, b: f64, r: f64, f: (f64, f64), g: (f64, f64)) -> (f64, f64) {
    let d = smooth_step(a, b, r);
    let dd = smooth_step_derivative(a, b, r);
    (
        (1.0 - d) * f.0 + d * g.0,
        (1.0 - d) * f.1 + d * g.1 + dd * (g.0 - f.0),
    )
}

/// g1 on the fundamental interval [0, 1): value and derivative.
fn g1_unit(r: f64) -> (f64, f64) {
    let p0 = || (phi0(r), dphi0(r));
    let p1 = || (phi1(r), dphi1(r));
    if r <= 0.26 {
        p0()
    } else if r < 0.27 {
        glue(0.26, 0.27, r, p0(), p1())
    } else if r <= 0.76 {
        p1()
    } else if r < 0.77 {
        glue(0.76, 0.77, r, p1(), p0())
    } else {
        p0()
    }
}

fn g2_unit(r: f64) -> (f64, f64) {
    let p2 = || (phi2(r), dphi2(r));
    if r <= 0.42 {
        g1_unit(r)
    } else if r < 0.43 {
        glue(0.42, 0.43, r, g1_unit(r), p2())
    } else if r <= 0.98 {
        p2()
    } else if r < 0.99 {
        glue(0.98, 0.99, r, p2(), g1_unit(r))
    } else {
        g1_unit(r)
    }
}

fn periodic(x: f64, unit: fn(f64) -> (f64, f64)) -> (f64, f64) {
    let n = x.floor();
    let (v, d) = unit(x - n);
    (v + n, d)
}

impl Lift for ModelLift {
    fn value(&self, x: f64) -> f64 {
        match self {
            ModelLift::Phi0 => phi0(x),
            ModelLift::Phi1 => phi1(x),
            ModelLift::Phi2 => phi2(x),
            ModelLift::G1 => periodic(x, g1_unit).0,
            ModelLift::G2 => periodic(x, g2_unit).0,
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match self {
            ModelLift::Phi0 => dphi0(x),
            ModelLift::Phi1 => dphi1(x),
            ModelLift::Phi2 => dphi2(x),
            ModelLift::G1 => periodic(x, g1_unit).1,
            ModelLift::G2 => periodic(x, g2_unit).1,
        }
    }
}

type Rule2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum FamilyRule {
    Interpolation { start: LiftMap, end: LiftMap },
    Custom { value: Rule2, dx: Rule2, dt: Rule2 },
}

/// One-parameter family `(t, x) -> value` of lifts, `t` in [0, 1].
#[derive(Clone)]
pub struct Family1D {
    name: String,
    rule: FamilyRule,
}

impl fmt::Debug for Family1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Family1D({})", self.name)
    }
}

/// Straight-line family `t g + (1 - t) f`.
pub fn interpolate(f: &LiftMap, g: &LiftMap) -> Family1D {
    Family1D {
        name: format!("interp({},{})", f.name(), g.name()),
        rule: FamilyRule::Interpolation {
            start: f.clone(),
            end: g.clone(),
        },
    }
}

impl Family1D {
    /// Family from explicit rules for the value and its x- and t-derivatives.
    pub fn custom(
        name: impl Into<String>,
        value: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        dx: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        dt: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Family1D {
            name: name.into(),
            rule: FamilyRule::Custom {
                value: Arc::new(value),
                dx: Arc::new(dx),
                dt: Arc::new(dt),
            },
        }
    }

    /// `phi0` to `g1`.
    pub fn eta1() -> Self {
        interpolate(&LiftMap::phi0(), &LiftMap::g1())
    }

    /// `g1` to `g2`.
    pub fn eta2() -> Self {
        interpolate(&LiftMap::g1(), &LiftMap::g2())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        match &self.rule {
            FamilyRule::Interpolation { start, end } => {
                (1.0 - t) * start.value(x) + t * end.value(x)
            }
            FamilyRule::Custom { value, .. } => value(t, x),
        }
    }

    pub fn derivative(&self, t: f64, x: f64) -> f64 {
        match &self.rule {
            FamilyRule::Interpolation { start, end } => {
                (1.0 - t) * start.derivative(x) + t * end.derivative(x)
            }
            FamilyRule::Custom { dx, .. } => dx(t, x),
        }
    }

    pub fn dt(&self, t: f64, x: f64) -> f64 {
        match &self.rule {
            FamilyRule::Interpolation { start, end } => end.value(x) - start.value(x),
            FamilyRule::Custom { dt, .. } => dt(t, x),
        }
    }

    pub fn slice(&self, t: f64) -> LiftMap {
        let fam = self.clone();
        LiftMap::new(format!("{}@{}", self.name, t), FamilySlice { fam, t })
    }
}

struct FamilySlice {
    fam: Family1D,
    t: f64,
}

impl Lift for FamilySlice {
    fn value(&self, x: f64) -> f64 {
        self.fam.value(self.t, x)
    }

    fn derivative(&self, x: f64) -> f64 {
        self.fam.derivative(self.t, x)
    }
}

/// `(t, tau, x) -> (1 - tau) family(t, x) + tau base(x)`.
#[derive(Clone, Debug)]
pub struct TauBlend {
    pub family: Family1D,
    pub base: LiftMap,
}

pub fn tau_blend(family: &Family1D, base: &LiftMap) -> TauBlend {
    TauBlend {
        family: family.clone(),
        base: base.clone(),
    }
}

impl TauBlend {
    pub fn value(&self, t: f64, tau: f64, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidTau(tau));
        }
        Ok(self.value_unchecked(t, tau, x))
    }

    pub(crate) fn value_unchecked(&self, t: f64, tau: f64, x: f64) -> f64 {
        (1.0 - tau) * self.family.value(t, x) + tau * self.base.value(x)
    }

    pub fn dx(&self, t: f64, tau: f64, x: f64) -> f64 {
        (1.0 - tau) * self.family.derivative(t, x) + tau * self.base.derivative(x)
    }

    pub fn dtau(&self, t: f64, x: f64) -> f64 {
        self.base.value(x) - self.family.value(t, x)
    }

    pub fn dt(&self, t: f64, tau: f64, x: f64) -> f64 {
        (1.0 - tau) * self.family.dt(t, x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind1D {
    Sink,
    Source,
    Nonhyperbolic,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FixedPoint1D {
    pub x: f64,
    pub multiplier: f64,
    pub kind: Kind1D,
    /// Found as a touch of the graph with the diagonal rather than a crossing.
    pub tangential: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct RootConfig {
    pub grid_n: usize,
    pub tol: f64,
    pub tol_hyp: f64,
    pub tol_touch: f64,
}

impl Default for RootConfig {
    fn default() -> Self {
        RootConfig {
            grid_n: 8192,
            tol: 1e-11,
            tol_hyp: 1e-6,
            tol_touch: 1e-9,
        }
    }
}

fn bisect(r: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut rlo = r(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let rm = r(mid);
        if rm == 0.0 {
            return mid;
        }
        if (rm > 0.0) == (rlo > 0.0) {
            lo = mid;
            rlo = rm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Minimizer of `g` on [lo, hi] by golden-section search.
fn golden_min(g: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let k = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - k * (hi - lo);
    let mut x2 = lo + k * (hi - lo);
    let (mut g1, mut g2) = (g(x1), g(x2));
    for _ in 0..120 {
        if g1 < g2 {
            hi = x2;
            x2 = x1;
            g2 = g1;
            x1 = hi - k * (hi - lo);
            g1 = g(x1);
        } else {
            lo = x1;
            x1 = x2;
            g1 = g2;
            x2 = lo + k * (hi - lo);
            g2 = g(x2);
        }
    }
    0.5 * (lo + hi)
}

/// All fixed points of the circle map with lift `f`, sorted in [0, 1).
///
/// Transverse roots come from sign changes of `f(x) - x` on a uniform grid;
/// tangential ones from local minima of `|f(x) - x|` that reach `tol_touch`.
pub fn fixed_points_1d(f: &LiftMap, cfg: &RootConfig) -> Vec<FixedPoint1D> {
    let n = cfg.grid_n.max(4);
    let r = |x: f64| f.value(x) - x;
    let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let rs: Vec<f64> = xs.iter().map(|&x| r(x)).collect();
    let mut found: Vec<(f64, bool)> = Vec::new();
    let crosses = |i: usize| rs[i] != 0.0 && rs[i + 1] != 0.0 && (rs[i] > 0.0) != (rs[i + 1] > 0.0);

    for i in 0..n {
        if rs[i] == 0.0 {
            let prev = rs[if i == 0 { n - 1 } else { i - 1 }];
            found.push((xs[i], prev * rs[i + 1] > 0.0));
        } else if crosses(i) {
            found.push((bisect(&r, xs[i], xs[i + 1]), false));
        }
    }

    for i in 0..n {
        let prev = if i == 0 { n - 1 } else { i - 1 };
        let (a, b, c) = (rs[prev].abs(), rs[i].abs(), rs[i + 1].abs());
        if rs[i] == 0.0 || b > a || b > c {
            continue;
        }
        if crosses(prev) || crosses(i) {
            continue;
        }
        let s = rs[i].signum();
        let lo = xs[i] - 1.0 / n as f64;
        let hi = xs[i + 1];
        let g = |x: f64| s * r(x);
        let xm = golden_min(&g, lo, hi);
        let gm = g(xm);
        if gm.abs() <= cfg.tol_touch {
            found.push((xm, true));
        } else if gm < 0.0 {
            found.push((bisect(&r, lo, xm), false));
            found.push((bisect(&r, xm, hi), false));
        }
    }

    let mut pts: Vec<FixedPoint1D> = found
        .into_iter()
        .map(|(x, tangential)| {
            let m = f.derivative(x);
            let kind = if tangential || (m - 1.0).abs() <= cfg.tol_hyp || m <= 0.0 {
                Kind1D::Nonhyperbolic
            } else if m < 1.0 {
                Kind1D::Sink
            } else {
                Kind1D::Source
            };
            FixedPoint1D {
                x: CirclePoint::new(x).value(),
                multiplier: m,
                kind,
                tangential,
            }
        })
        .collect();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x));

    let sep = 1.0 / n as f64;
    let mut out: Vec<FixedPoint1D> = Vec::new();
    for p in pts {
        if let Some(last) = out.last() {
            if circle_distance(last.x, p.x) < sep {
                continue;
            }
        }
        out.push(p);
    }
    if out.len() > 1 && circle_distance(out[0].x, out[out.len() - 1].x) < sep {
        out.pop();
    }
    out
}
