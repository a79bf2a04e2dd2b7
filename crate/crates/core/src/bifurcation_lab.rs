//! Fixed-point census along an arc, saddle-node localization with the
//! normal-form coefficients, and a probe for tangencies between separatrices
//! and the strong foliation of a saddle-node.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::arc_engine::ArcFamily;
use crate::linalg::{self, Eigen2, Vec2};
use crate::torus_dynamics::{
    fixed_points_2d, torus_distance, torus_offset, trace_separatrix, Branch, Census,
    FixedKind, FixedPointConfig, Stability, TraceConfig,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct LabConfig {
    pub fixed_points: FixedPointConfig,
    pub trace: TraceConfig,
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Finite-difference step in x, z and t for the localization Jacobian.
    pub fd_step: f64,
    /// Step for the second derivative along the center direction.
    pub h_a: f64,
    /// Step for the parameter derivative.
    pub h_b: f64,
    pub tol_coeff: f64,
    pub angle_min: f64,
    pub probe_radius: f64,
}

impl Default for LabConfig {
    fn default() -> Self {
        LabConfig {
            fixed_points: FixedPointConfig::default(),
            trace: TraceConfig::default(),
            newton_tol: 1e-12,
            max_newton: 60,
            fd_step: 1e-6,
            h_a: 2e-3,
            h_b: 1e-4,
            tol_coeff: 1e-4,
            angle_min: 0.05,
            probe_radius: 0.1,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CensusRow {
    pub t: f64,
    pub count: usize,
    pub census: Census,
    pub warnings: usize,
}

/// Stretch of the grid over which the fixed-point count changes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JumpBracket {
    pub t_lo: f64,
    pub t_hi: f64,
    pub count_lo: usize,
    pub count_hi: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CensusScan {
    pub rows: Vec<CensusRow>,
    pub jumps: Vec<JumpBracket>,
}

/// `n + 1` equally spaced values from 0 to 1.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

/// Groups consecutive count changes into one bracket each.
pub fn group_jumps(ts: &[f64], counts: &[usize]) -> Vec<JumpBracket> {
    let mut out = Vec::new();
    let mut i = 1;
    while i < counts.len() {
        if counts[i] != counts[i - 1] {
            let start = i - 1;
            let mut end = i;
            while end + 1 < counts.len() && counts[end + 1] != counts[end] {
                end += 1;
            }
            out.push(JumpBracket {
                t_lo: ts[start],
                t_hi: ts[end],
                count_lo: counts[start],
                count_hi: counts[end],
            });
            i = end + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Fixed-point census of every slice in `ts`, slices in parallel.
pub fn census_scan(arc: &ArcFamily, ts: &[f64], cfg: &LabConfig) -> CensusScan {
    let rows: Vec<CensusRow> = ts
        .par_iter()
        .map(|&t| {
            let r = fixed_points_2d(arc.slice(t).as_ref(), &cfg.fixed_points);
            CensusRow {
                t,
                count: r.points.len(),
                census: r.census(),
                warnings: r.warnings.len(),
            }
        })
        .collect();
    let counts: Vec<usize> = rows.iter().map(|r| r.count).collect();
    let jumps = group_jumps(ts, &counts);
    CensusScan { rows, jumps }
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Noncriticality {
    Noncritical { min_angle: Option<f64>, samples: usize },
    Critical { min_angle: f64, samples: usize },
    Unchecked { reason: String },
}

impl Noncriticality {
    pub fn is_noncritical(&self) -> bool {
        matches!(self, Noncriticality::Noncritical { .. })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BifurcationEvent {
    pub t: f64,
    pub location: Vec2,
    /// Center multiplier first, then the hyperbolic one.
    pub multipliers: [f64; 2],
    /// Center right eigenvector, largest component positive.
    pub center: Vec2,
    /// Half the second derivative of the displacement along the center.
    pub a: f64,
    /// Parameter derivative of the displacement along the center.
    pub b: f64,
    pub generic: bool,
    pub noncritical: Noncriticality,
}

fn choose_seed(arc: &ArcFamily, bracket: &JumpBracket, cfg: &LabConfig) -> Result<(Vec2, f64)> {
    let lo = fixed_points_2d(arc.slice(bracket.t_lo).as_ref(), &cfg.fixed_points).points;
    let hi = fixed_points_2d(arc.slice(bracket.t_hi).as_ref(), &cfg.fixed_points).points;
    let (big, small, t) = if lo.len() >= hi.len() {
        (lo, hi, bracket.t_lo)
    } else {
        (hi, lo, bracket.t_hi)
    };
    let unmatched: Vec<Vec2> = big
        .iter()
        .filter(|p| small.iter().all(|q| torus_distance(p.position, q.position) > 0.02))
        .map(|p| p.position)
        .collect();
    let mut best: Option<(f64, Vec2)> = None;
    for (i, p) in unmatched.iter().enumerate() {
        for q in &unmatched[i + 1..] {
            let d = torus_distance(*p, *q);
            if best.map_or(true, |(bd, _)| d < bd) {
                let mid = linalg::add(*p, linalg::scale(0.5, torus_offset(*q, *p)));
                best = Some((d, mid));
            }
        }
    }
    if let Some((_, mid)) = best {
        return Ok((mid, t));
    }
    if let Some(p) = unmatched.first() {
        return Ok((*p, t));
    }
    let near_one = big.iter().min_by(|a, b| {
        let dist = |e: &Eigen2| match e {
            Eigen2::Real(ev) => ev.iter().map(|l| (l - 1.0).abs()).fold(f64::INFINITY, f64::min),
            Eigen2::Complex { .. } => f64::INFINITY,
        };
        dist(&a.eigen).total_cmp(&dist(&b.eigen))
    });
    near_one
        .map(|p| (p.position, t))
        .ok_or_else(|| Error::Localization("no fixed points near the bracket".into()))
}

/// Solves `F_t(p) = p`, `det(DF_t(p) - I) = 0` for `(p, t)` by Newton with a
/// finite-difference Jacobian, then extracts the normal-form coefficients.
pub fn locate_saddle_node(
    arc: &ArcFamily,
    bracket: &JumpBracket,
    seed: Option<Vec2>,
    cfg: &LabConfig,
) -> Result<BifurcationEvent> {
    let (p0, t0) = match seed {
        Some(p) => (p, 0.5 * (bracket.t_lo + bracket.t_hi)),
        None => choose_seed(arc, bracket, cfg)?,
    };
    let shift = {
        let f = arc.slice(t0);
        linalg::sub(f.lift(p0), p0).map(f64::round)
    };
    let residual = |u: Vector3<f64>| -> Vector3<f64> {
        let f = arc.slice(u[2]);
        let p = [u[0], u[1]];
        let d = linalg::sub(linalg::sub(f.lift(p), p), shift);
        let mut j = f.jacobian(p);
        j[0][0] -= 1.0;
        j[1][1] -= 1.0;
        Vector3::new(d[0], d[1], linalg::det(&j))
    };
    let mut u = Vector3::new(p0[0], p0[1], t0);
    let mut r = residual(u);
    let mut converged = false;
    for _ in 0..cfg.max_newton {
        let mut jac = Matrix3::zeros();
        for k in 0..3 {
            let mut up = u;
            let mut dn = u;
            up[k] += cfg.fd_step;
            dn[k] -= cfg.fd_step;
            let col = (residual(up) - residual(dn)) / (2.0 * cfg.fd_step);
            jac.set_column(k, &col);
        }
        let step = jac
            .lu()
            .solve(&(-r))
            .ok_or_else(|| Error::Localization("singular localization jacobian".into()))?;
        let scale = (0.05 / step.amax()).min(1.0);
        u += step * scale;
        r = residual(u);
        if step.amax() * scale < cfg.newton_tol && r.amax() < 1e-9 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Localization(format!(
            "newton did not converge near t = {t0:.6}, residual {:.3e}",
            r.amax()
        )));
    }
    let (p, t) = ([u[0], u[1]], u[2]);
    if t < bracket.t_lo - 1e-9 || t > bracket.t_hi + 1e-9 {
        return Err(Error::Localization(format!(
            "event at t = {t:.9} lies outside the bracket [{}, {}]",
            bracket.t_lo, bracket.t_hi
        )));
    }

    let f = arc.slice(t);
    let jac = f.jacobian(p);
    let ev = match linalg::eigenvalues(&jac) {
        Eigen2::Real(ev) => ev,
        Eigen2::Complex { .. } => {
            return Err(Error::Localization("complex multipliers at the event".into()))
        }
    };
    let (lc, lh) = if (ev[0] - 1.0).abs() <= (ev[1] - 1.0).abs() {
        (ev[0], ev[1])
    } else {
        (ev[1], ev[0])
    };
    let v = linalg::eigenvector(&jac, lc);
    let w = linalg::left_eigenvector(&jac, lc);
    let w = linalg::scale(1.0 / linalg::dot(w, v), w);

    let disp = |f: &dyn crate::torus_dynamics::TorusMap, q: Vec2| linalg::sub(f.lift(q), q);
    let second = |h: f64| {
        let plus = disp(f.as_ref(), linalg::add(p, linalg::scale(h, v)));
        let minus = disp(f.as_ref(), linalg::sub(p, linalg::scale(h, v)));
        let mid = disp(f.as_ref(), p);
        linalg::dot(w, [plus[0] - 2.0 * mid[0] + minus[0], plus[1] - 2.0 * mid[1] + minus[1]]) / (h * h)
    };
    let a = 0.5 * (4.0 * second(0.5 * cfg.h_a) - second(cfg.h_a)) / 3.0;
    let first_t = |h: f64| {
        let plus = disp(arc.slice(t + h).as_ref(), p);
        let minus = disp(arc.slice(t - h).as_ref(), p);
        linalg::dot(w, linalg::sub(plus, minus)) / (2.0 * h)
    };
    let b = (4.0 * first_t(0.5 * cfg.h_b) - first_t(cfg.h_b)) / 3.0;

    Ok(BifurcationEvent {
        t,
        location: crate::torus_dynamics::reduce(p),
        multipliers: [lc, lh],
        center: v,
        a,
        b,
        generic: a.abs() > cfg.tol_coeff && b.abs() > cfg.tol_coeff,
        noncritical: Noncriticality::Unchecked {
            reason: "probe not run".into(),
        },
    })
}

/// Smallest angle, inside a tube around the saddle-node, between the
/// separatrices of the other saddles and the leaves of its strong foliation
/// (lines along the hyperbolic eigendirection).
///
/// Strong-stable leaves are tested against unstable separatrices and
/// strong-unstable leaves against stable ones.
pub fn noncriticality_probe(arc: &ArcFamily, event: &BifurcationEvent, cfg: &LabConfig) -> Noncriticality {
    let f = arc.slice(event.t);
    let report = fixed_points_2d(f.as_ref(), &cfg.fixed_points);
    let saddles: Vec<Vec2> = report
        .points
        .iter()
        .filter(|q| q.kind == FixedKind::Saddle && torus_distance(q.position, event.location) > 0.01)
        .map(|q| q.position)
        .collect();
    let jac = f.jacobian(event.location);
    let leaf = linalg::eigenvector(&jac, event.multipliers[1]);
    let stability = if event.multipliers[1].abs() < 1.0 {
        Stability::Unstable
    } else {
        Stability::Stable
    };
    let node_kind = if stability == Stability::Unstable {
        FixedKind::Sink
    } else {
        FixedKind::Source
    };
    let mut targets: Vec<Vec2> = report.of_kind(node_kind).iter().map(|q| q.position).collect();
    targets.push(event.location);
    let tcfg = TraceConfig {
        eps_node: 1e-3,
        max_iter: 20_000,
        ..cfg.trace
    };

    let mut min_angle: Option<f64> = None;
    let mut samples = 0;
    for s in &saddles {
        for branch in [Branch::Plus, Branch::Minus] {
            let curve = match trace_separatrix(f.as_ref(), *s, stability, branch, &targets, &tcfg) {
                Ok(c) => c,
                Err(e) => {
                    return Noncriticality::Unchecked {
                        reason: e.to_string(),
                    }
                }
            };
            for seg in curve.points.windows(2) {
                let inside = |q: Vec2| torus_distance(q, event.location) < cfg.probe_radius;
                if !(inside(seg[0]) && inside(seg[1])) {
                    continue;
                }
                let d = linalg::sub(seg[1], seg[0]);
                let n = linalg::norm(d);
                if n < 1e-12 {
                    continue;
                }
                let cos = (linalg::dot(d, leaf) / n).abs().min(1.0);
                let angle = cos.acos();
                samples += 1;
                min_angle = Some(min_angle.map_or(angle, |m: f64| m.min(angle)));
            }
        }
    }
    match min_angle {
        Some(m) if m <= cfg.angle_min => Noncriticality::Critical { min_angle: m, samples },
        _ => Noncriticality::Noncritical { min_angle, samples },
    }
}

/// Census scan, localization of every jump and the probe for each event.
pub fn find_events(arc: &ArcFamily, ts: &[f64], cfg: &LabConfig) -> Result<(CensusScan, Vec<BifurcationEvent>)> {
    let scan = census_scan(arc, ts, cfg);
    let events = scan
        .jumps
        .par_iter()
        .map(|j| {
            let mut ev = locate_saddle_node(arc, j, None, cfg)?;
            ev.noncritical = noncriticality_probe(arc, &ev, cfg);
            Ok(ev)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((scan, events))
}
