//! One-parameter families of torus maps: the bump-blend arcs built from
//! `eta1`/`eta2`, the twist in an annulus of the `x` circle, the model arcs
//! `gamma1`, `gamma2`, `h01`, and the operations smooth product, reversal,
//! conjugation and translation.

use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, Mat2, Vec2};
use crate::model_maps_1d::{
    fixed_points_1d, smooth_step, smooth_step_derivative, tau_blend, Family1D, LiftMap, RootConfig,
    TauBlend,
};
use crate::torus_dynamics::{
    f0, fd_jacobian, reduce, Conjugated, SharedMap, TorusMap, Translated, UnimodularMatrix,
};
use crate::{Error, Result};

/// Rotation applied by `gamma1`, in turns of the twist. It moves the
/// unstable separatrix of the saddle at (3/4, 1/4) into the basin of the
/// sink born at t = 3/4 and keeps it there until the merge inside `gamma2`.
pub const FIRST_TURNS: f64 = 0.482;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// A saddle and a node are born as `t` increases.
    Birth,
    /// A saddle and a node merge and vanish as `t` increases.
    Death,
}

impl EventKind {
    fn reversed(self) -> Self {
        match self {
            EventKind::Birth => EventKind::Death,
            EventKind::Death => EventKind::Birth,
        }
    }
}

/// Approximate saddle-node an arc is built to contain.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ExpectedEvent {
    pub t: f64,
    pub location: Vec2,
    pub kind: EventKind,
}

type SliceFn = Arc<dyn Fn(f64) -> SharedMap + Send + Sync>;

/// `t -> f_t` for `t` in [0, 1].
#[derive(Clone)]
pub struct ArcFamily {
    name: String,
    slice: SliceFn,
    events: Vec<ExpectedEvent>,
}

impl fmt::Debug for ArcFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ArcFamily({})", self.name)
    }
}

impl ArcFamily {
    pub fn new(
        name: impl Into<String>,
        events: Vec<ExpectedEvent>,
        slice: impl Fn(f64) -> SharedMap + Send + Sync + 'static,
    ) -> Self {
        ArcFamily {
            name: name.into(),
            slice: Arc::new(slice),
            events,
        }
    }

    pub fn constant(map: SharedMap) -> Self {
        let name = format!("constant {}", map.describe());
        ArcFamily::new(name, Vec::new(), move |_| map.clone())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn slice(&self, t: f64) -> SharedMap {
        (self.slice)(t.clamp(0.0, 1.0))
    }

    pub fn events(&self) -> &[ExpectedEvent] {
        &self.events
    }
}

/// Bump on the `x` circle: 0 at x = 1/4, 1 outside (1/8, 3/8).
pub fn bump(x: f64) -> f64 {
    let r = x - x.floor();
    smooth_step(0.0, 1.0, (8.0 * r - 2.0).powi(2))
}

fn bump_derivative(x: f64) -> f64 {
    let r = x - x.floor();
    let s = 8.0 * r - 2.0;
    smooth_step_derivative(0.0, 1.0, s * s) * 16.0 * s
}

/// `(x, z) -> (phi0(x), (1 - B(x)) eta_t(z) + B(x) phi0(z))`.
pub struct BumpBlendMap {
    blend: TauBlend,
    t: f64,
}

impl BumpBlendMap {
    pub fn new(family: &Family1D, t: f64) -> Self {
        BumpBlendMap {
            blend: tau_blend(family, &LiftMap::phi0()),
            t,
        }
    }
}

impl TorusMap for BumpBlendMap {
    fn lift(&self, p: Vec2) -> Vec2 {
        [
            self.blend.base.value(p[0]),
            self.blend.value_unchecked(self.t, bump(p[0]), p[1]),
        ]
    }

    fn jacobian(&self, p: Vec2) -> Mat2 {
        let tau = bump(p[0]);
        [
            [self.blend.base.derivative(p[0]), 0.0],
            [
                bump_derivative(p[0]) * self.blend.dtau(self.t, p[1]),
                self.blend.dx(self.t, tau, p[1]),
            ],
        ]
    }

    fn describe(&self) -> String {
        format!("bump blend of {} at t = {}", self.blend.family.name(), self.t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Support is a strip in `x`; the shear moves `z`.
    X,
    /// Support is a strip in `z`; the shear moves `x`.
    Z,
}

/// Default twist support: x in (-1/4 + 1/32, -1/32).
pub const DEFAULT_TWIST_SUPPORT: (f64, f64) = (-0.25 + 1.0 / 32.0, -1.0 / 32.0);

/// Two consecutive fundamental domains of `phi0` on an arc of the circle
/// between the source at -1/4 and the sink at 1/4.
///
/// `D1 = [a, phi(a)]` carries the shear itself, `D2 = [phi(c), phi^2(c)]`
/// (with `c` the midpoint of `D1`) carries its correction, so that in the
/// orbit space of `phi0` the twist is a uniform rotation of the fibre.
#[derive(Clone, Debug)]
pub struct TwistLayout {
    pub axis: Axis,
    offset: f64,
    a: f64,
    fa: f64,
    c: f64,
    fc: f64,
    ffa: f64,
    ffc: f64,
}

use crate::model_maps_1d::{dphi0, phi0 as phi, phi0_inverse};

impl TwistLayout {
    pub fn new(axis: Axis, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::InvalidInterval { a: lo, b: hi });
        }
        let offset = (0.5 * (lo + hi)).round();
        let (lo_r, hi_r) = (lo - offset, hi - offset);
        if lo_r <= -0.25 || hi_r >= 0.25 {
            return Err(Error::TwistSupport(format!(
                "({lo}, {hi}) must lie strictly between the fixed points -1/4 and 1/4 mod 1"
            )));
        }
        let end = |a: f64| phi(phi(0.5 * (a + phi(a))));
        let (mut l, mut h) = (-0.25, hi_r);
        for _ in 0..200 {
            let m = 0.5 * (l + h);
            if end(m) < hi_r {
                l = m;
            } else {
                h = m;
            }
        }
        let a = 0.5 * (l + h);
        if a <= lo_r {
            return Err(Error::TwistSupport(format!(
                "({lo}, {hi}) is too short for two fundamental domains of phi0"
            )));
        }
        let fa = phi(a);
        let c = 0.5 * (a + fa);
        let fc = phi(c);
        Ok(TwistLayout {
            axis,
            offset,
            a,
            fa,
            c,
            fc,
            ffa: phi(fa),
            ffc: phi(fc),
        })
    }

    pub fn default_x() -> Self {
        Self::new(Axis::X, DEFAULT_TWIST_SUPPORT.0, DEFAULT_TWIST_SUPPORT.1).expect("default support")
    }

    /// Closed interval outside which the twist is the identity.
    pub fn support(&self) -> (f64, f64) {
        (self.a + self.offset, self.ffc + self.offset)
    }

    fn sigma(&self, x: f64) -> f64 {
        smooth_step(self.a, self.fa, x)
    }

    /// Fibre coordinate over `x` in D1 blending `z` into `phi^-1(z)`.
    fn seam(&self, x: f64, z: f64) -> f64 {
        let s = self.sigma(x);
        (1.0 - s) * z + s * phi0_inverse(z)
    }

    fn seam_inverse(&self, x: f64, v: f64) -> f64 {
        let s = self.sigma(x);
        if s == 0.0 {
            return v;
        }
        let (mut lo, mut hi) = (v - 0.2, v + 0.2);
        let mut z = v;
        for _ in 0..100 {
            let w = phi0_inverse(z);
            let r = (1.0 - s) * z + s * w - v;
            if r == 0.0 {
                return z;
            }
            if r > 0.0 {
                hi = hi.min(z);
            } else {
                lo = lo.max(z);
            }
            let d = (1.0 - s) + s / dphi0(w);
            let mut next = z - r / d;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - z).abs() <= 1e-15 * (1.0 + z.abs()) {
                return next;
            }
            z = next;
        }
        z
    }

    /// Profile on D1: rises to 1 at `c`, back to 0 at `phi(a)`.
    fn rho(&self, x: f64) -> f64 {
        if x <= self.c {
            smooth_step(self.a, self.c, x)
        } else {
            1.0 - smooth_step(self.c, self.fa, x)
        }
    }

    fn shift(&self, x: f64, z: f64, amount: f64) -> f64 {
        self.seam_inverse(x, self.seam(x, z) + amount)
    }

    /// Image of the fibre coordinate `z` over `u` (circle coordinate
    /// relative to the layout) under a twist of `turns`.
    fn fibre(&self, u: f64, z: f64, turns: f64) -> f64 {
        if u > self.a && u < self.fa {
            return self.shift(u, z, turns * self.rho(u));
        }
        if u > self.fc && u < self.ffc {
            let k = if u <= self.ffa { 1 } else { 2 };
            let mut rep = u;
            let mut w = z;
            for _ in 0..k {
                rep = phi0_inverse(rep);
                w = phi0_inverse(w);
            }
            let chi = 1.0 - self.rho(rep);
            let mut out = self.shift(rep, w, turns * chi);
            for _ in 0..k {
                out = phi(out);
            }
            return out;
        }
        z
    }

    /// True when `p` is at least 1e-5 away from the support along the base.
    fn is_identity_near(&self, p: Vec2) -> bool {
        let base = match self.axis {
            Axis::X => p[0],
            Axis::Z => p[1],
        };
        let u = base - self.offset;
        let u = u - u.round();
        u < self.a - 1e-5 || u > self.ffc + 1e-5
    }

    pub fn apply(&self, p: Vec2, turns: f64) -> Vec2 {
        if turns == 0.0 {
            return p;
        }
        let (base, fib) = match self.axis {
            Axis::X => (p[0], p[1]),
            Axis::Z => (p[1], p[0]),
        };
        let u = base - self.offset;
        let u = u - u.round();
        let fib = self.fibre(u, fib, turns);
        match self.axis {
            Axis::X => [p[0], fib],
            Axis::Z => [fib, p[1]],
        }
    }
}

/// `twist o inner`.
pub struct Twisted {
    pub layout: Arc<TwistLayout>,
    pub turns: f64,
    pub inner: SharedMap,
}

impl TorusMap for Twisted {
    fn lift(&self, p: Vec2) -> Vec2 {
        self.layout.apply(self.inner.lift(p), self.turns)
    }

    fn jacobian(&self, p: Vec2) -> Mat2 {
        let q = self.inner.lift(p);
        let inner = self.inner.jacobian(p);
        if self.layout.apply(q, self.turns) == q && self.layout.is_identity_near(q) {
            return inner;
        }
        let outer = fd_jacobian(&|r| self.layout.apply(r, self.turns), q, 1e-6);
        linalg::mul(&outer, &inner)
    }

    fn describe(&self) -> String {
        format!("twist by {} turns of [{}]", self.turns, self.inner.describe())
    }
}

fn twisted(layout: &Arc<TwistLayout>, turns: f64, inner: SharedMap) -> SharedMap {
    if turns == 0.0 {
        return inner;
    }
    Arc::new(Twisted {
        layout: layout.clone(),
        turns,
        inner,
    })
}

/// `t -> w_{n t} o f0`: `n` full turns of the twist supported in the strip
/// `(lo, hi)` of the chosen axis.
pub fn twist_arc(n: f64, axis: Axis, lo: f64, hi: f64) -> Result<ArcFamily> {
    let layout = Arc::new(TwistLayout::new(axis, lo, hi)?);
    let base = f0();
    Ok(ArcFamily::new(format!("twist {n} on {axis:?} ({lo}, {hi})"), Vec::new(), move |t| {
        twisted(&layout, n * t, base.clone())
    }))
}

/// Parameter and center-line height of the saddle-node of the `eta2`
/// family, from the root count of `(1 - t) g1 + t g2`.
pub fn h2_event_estimate() -> (f64, f64) {
    static EST: OnceLock<(f64, f64)> = OnceLock::new();
    *EST.get_or_init(|| {
        let fam = Family1D::eta2();
        let cfg = RootConfig::default();
        let count = |t: f64| fixed_points_1d(&fam.slice(t), &cfg).len();
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..40 {
            let m = 0.5 * (lo + hi);
            if count(m) >= 4 {
                lo = m;
            } else {
                hi = m;
            }
        }
        let pts = fixed_points_1d(&fam.slice(lo), &cfg);
        let upper: Vec<f64> = pts.iter().map(|p| p.x).filter(|x| *x > 0.5 && *x < 0.8).collect();
        let z = upper.iter().sum::<f64>() / upper.len().max(1) as f64;
        (0.5 * (lo + hi), z)
    })
}

fn gamma1_turns(t: f64) -> f64 {
    FIRST_TURNS * smooth_step(0.0, 0.5, t)
}

fn gamma2_turns(t: f64) -> f64 {
    FIRST_TURNS + (1.0 - FIRST_TURNS) * smooth_step(0.5, 1.0, t)
}

/// `t -> H1_t`: the `eta1` blend on the center column, saddle-node birth at
/// t = 3/4 on (1/4, 1/2).
pub fn model_arc_h1() -> ArcFamily {
    let fam = Family1D::eta1();
    let ev = ExpectedEvent {
        t: 0.75,
        location: [0.25, 0.5],
        kind: EventKind::Birth,
    };
    ArcFamily::new("h1", vec![ev], move |t| Arc::new(BumpBlendMap::new(&fam, t)))
}

fn h2_event() -> ExpectedEvent {
    let (t, z) = h2_event_estimate();
    ExpectedEvent {
        t,
        location: [0.25, z],
        kind: EventKind::Death,
    }
}

/// `t -> H2_t`: the `eta2` blend after the first rotation; the sink at
/// z = 7/12 and the saddle at z = 3/4 of the center column merge.
pub fn model_arc_h2() -> ArcFamily {
    let fam = Family1D::eta2();
    let layout = Arc::new(TwistLayout::default_x());
    ArcFamily::new("h2", vec![h2_event()], move |t| {
        twisted(&layout, FIRST_TURNS, Arc::new(BumpBlendMap::new(&fam, t)))
    })
}

/// `H1` with the first rotation switched on during t in [0, 1/2].
pub fn model_arc_gamma1() -> ArcFamily {
    let fam = Family1D::eta1();
    let layout = Arc::new(TwistLayout::default_x());
    let ev = model_arc_h1().events()[0];
    ArcFamily::new("gamma1", vec![ev], move |t| {
        twisted(&layout, gamma1_turns(t), Arc::new(BumpBlendMap::new(&fam, t)))
    })
}

/// `H2` with the rotation completed to one full turn during t in [1/2, 1].
pub fn model_arc_gamma2() -> ArcFamily {
    let fam = Family1D::eta2();
    let layout = Arc::new(TwistLayout::default_x());
    ArcFamily::new("gamma2", vec![h2_event()], move |t| {
        twisted(&layout, gamma2_turns(t), Arc::new(BumpBlendMap::new(&fam, t)))
    })
}

/// `gamma1 * gamma2`: two saddle-nodes, from `f0` to a map whose
/// invariant matrix is `J_1`.
pub fn model_arc_h01() -> ArcFamily {
    smooth_product(&model_arc_gamma1(), &model_arc_gamma2()).expect("gamma1 ends where gamma2 starts")
}

/// Looks up a shipped arc: `h1`, `h2`, `gamma1`, `gamma2`, `h01`.
pub fn model_arc(id: &str) -> Result<ArcFamily> {
    match id {
        "h1" => Ok(model_arc_h1()),
        "h2" => Ok(model_arc_h2()),
        "gamma1" => Ok(model_arc_gamma1()),
        "gamma2" => Ok(model_arc_gamma2()),
        "h01" => Ok(model_arc_h01()),
        other => Err(Error::InvalidArgument(format!("unknown arc id {other:?}"))),
    }
}

fn tau(t: f64) -> f64 {
    smooth_step(1.0 / 3.0, 2.0 / 3.0, t)
}

fn invert_increasing(g: impl Fn(f64) -> f64, y: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let m = 0.5 * (lo + hi);
        if g(m) < y {
            lo = m;
        } else {
            hi = m;
        }
    }
    0.5 * (lo + hi)
}

/// Largest lift discrepancy between two maps over seeded random points.
pub fn max_lift_gap(f: &dyn TorusMap, g: &dyn TorusMap, samples: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    (0..samples)
        .map(|_| {
            let p = [rng.gen::<f64>(), rng.gen::<f64>()];
            linalg::max_abs(linalg::sub(f.lift(p), g.lift(p)))
        })
        .fold(0.0, f64::max)
}

/// `a1` on the first half, `a2` on the second, reparametrized by a flat
/// sigmoid so that the product is smooth at the junction.
pub fn smooth_product(a1: &ArcFamily, a2: &ArcFamily) -> Result<ArcFamily> {
    let gap = max_lift_gap(a1.slice(1.0).as_ref(), a2.slice(0.0).as_ref(), 100);
    if gap > 1e-9 {
        return Err(Error::Composition(format!(
            "end of {} differs from start of {} by {gap:.3e}",
            a1.name(),
            a2.name()
        )));
    }
    let mut events = Vec::new();
    for e in a1.events() {
        events.push(ExpectedEvent {
            t: invert_increasing(tau, 0.5 * e.t),
            ..*e
        });
    }
    for e in a2.events() {
        events.push(ExpectedEvent {
            t: invert_increasing(tau, 0.5 * (1.0 + e.t)),
            ..*e
        });
    }
    let (s1, s2) = (a1.clone(), a2.clone());
    Ok(ArcFamily::new(
        format!("{} * {}", a1.name(), a2.name()),
        events,
        move |t| {
            let s = 2.0 * tau(t);
            if t <= 0.5 {
                s1.slice(s)
            } else {
                s2.slice(s - 1.0)
            }
        },
    ))
}

/// `t -> a(1 - t)`.
pub fn reverse(a: &ArcFamily) -> ArcFamily {
    let events = a
        .events()
        .iter()
        .rev()
        .map(|e| ExpectedEvent {
            t: 1.0 - e.t,
            location: e.location,
            kind: e.kind.reversed(),
        })
        .collect();
    let inner = a.clone();
    ArcFamily::new(format!("reverse({})", a.name()), events, move |t| inner.slice(1.0 - t))
}

/// `t -> J a_t J^-1`.
pub fn conjugate_arc(j: UnimodularMatrix, a: &ArcFamily) -> ArcFamily {
    let events = a
        .events()
        .iter()
        .map(|e| ExpectedEvent {
            location: reduce(j.apply(e.location)),
            ..*e
        })
        .collect();
    let inner = a.clone();
    ArcFamily::new(format!("{j} . {}", a.name()), events, move |t| {
        Arc::new(Conjugated::new(j, inner.slice(t)))
    })
}

/// `t -> T_{t v} f T_{-t v}`: conjugates of `f` by a sliding translation.
/// No slice bifurcates.
pub fn translate_arc(f: SharedMap, v: Vec2) -> ArcFamily {
    ArcFamily::new(format!("slide by ({}, {})", v[0], v[1]), Vec::new(), move |t| {
        Arc::new(Translated {
            shift: linalg::scale(t, v),
            inner: f.clone(),
        })
    })
}

/// Concatenation of arcs on equal time windows, each run through a flat
/// sigmoid. Junctions are not required to match pointwise; callers certify
/// them separately.
pub fn chain(parts: &[ArcFamily]) -> Result<ArcFamily> {
    if parts.is_empty() {
        return Err(Error::InvalidArgument("empty chain".into()));
    }
    if parts.len() == 1 {
        return Ok(parts[0].clone());
    }
    let m = parts.len() as f64;
    let mut events = Vec::new();
    for (i, p) in parts.iter().enumerate() {
        for e in p.events() {
            let local = invert_increasing(|u| smooth_step(0.0, 1.0, u), e.t);
            events.push(ExpectedEvent {
                t: (i as f64 + local) / m,
                ..*e
            });
        }
    }
    let name = parts.iter().map(|p| p.name().to_string()).collect::<Vec<_>>().join(" ; ");
    let parts = parts.to_vec();
    Ok(ArcFamily::new(name, events, move |t| {
        let x = t * m;
        let i = (x.floor() as usize).min(parts.len() - 1);
        parts[i].slice(smooth_step(0.0, 1.0, x - i as f64))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_profile() {
        assert_eq!(bump(0.25), 0.0);
        assert_eq!(bump(0.5), 1.0);
        assert_eq!(bump(-0.9), 1.0);
        assert!(bump(0.2) > 0.0 && bump(0.2) < 1.0);
    }

    #[test]
    fn default_layout_fits_support() {
        let l = TwistLayout::default_x();
        let (lo, hi) = l.support();
        assert!(lo > DEFAULT_TWIST_SUPPORT.0);
        assert!((hi - DEFAULT_TWIST_SUPPORT.1).abs() < 1e-12);
        assert!((l.a + 0.165436).abs() < 1e-5, "a = {}", l.a);
    }

    #[test]
    fn full_turn_at_midpoint_is_a_unit_shift() {
        let l = TwistLayout::default_x();
        let p = l.apply([l.c, 0.3], 1.0);
        assert!((p[1] - 1.3).abs() < 1e-12);
    }

    #[test]
    fn integer_twist_shifts_passing_orbits_by_one() {
        let arc = twist_arc(1.0, Axis::X, DEFAULT_TWIST_SUPPORT.0, DEFAULT_TWIST_SUPPORT.1).unwrap();
        let (f, g) = (arc.slice(1.0), f0());
        for i in 0..20 {
            let mut p = [-0.2 + 0.001 * i as f64, 0.1 + 0.04 * i as f64];
            let mut q = p;
            for _ in 0..12 {
                p = f.lift(p);
                q = g.lift(q);
            }
            assert!((p[0] - q[0]).abs() < 1e-15);
            assert!((p[1] - q[1] - 1.0).abs() < 1e-9, "orbit {i}: {}", p[1] - q[1]);
        }
    }

    #[test]
    fn reject_bad_support() {
        assert!(matches!(TwistLayout::new(Axis::X, -0.3, -0.1), Err(Error::TwistSupport(_))));
        assert!(matches!(TwistLayout::new(Axis::X, -0.05, -0.03), Err(Error::TwistSupport(_))));
        assert!(matches!(TwistLayout::new(Axis::X, 0.1, 0.1), Err(Error::InvalidInterval { .. })));
    }
}
