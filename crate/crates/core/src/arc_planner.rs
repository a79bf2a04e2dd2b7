//! Splits a unimodular target `J` into a chain of elementary segments from
//! `f_J` to `f0`, and realizes a chain as an arc family.
//!
//! A segment moves between model maps `f_M` and is recorded by its start and
//! end matrix. A copy of `h01` conjugated by `C` joins `f_C` and `f_{C J1}`;
//! a relabel segment joins `f_M` and `f_{M S}` for a signed permutation `S`,
//! which are conjugate by a translation (or equal, for the swap).

use serde::{Deserialize, Serialize};

use crate::arc_engine::{chain, conjugate_arc, max_lift_gap, model_arc_h01, reverse, translate_arc, ArcFamily};
use crate::linalg::Vec2;
use crate::torus_dynamics::{
    canonicalize_with, f0, f_j, invariant_matrix, FixedPointConfig, TraceConfig, UnimodularMatrix,
};
use crate::{Error, Result};

pub use crate::torus_dynamics::canonicalize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentBase {
    /// A conjugated copy of the two-saddle-node arc `h01`.
    H01,
    /// A relabel: no bifurcation.
    Constant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanSegment {
    pub conjugator: UnimodularMatrix,
    pub base: SegmentBase,
    pub reversed: bool,
    pub sn_count: usize,
    pub start: UnimodularMatrix,
    pub end: UnimodularMatrix,
}

impl PlanSegment {
    /// Matrix `T` with `end = start T`.
    pub fn transition(&self) -> Result<UnimodularMatrix> {
        self.start.inverse().mul(&self.end)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanCase {
    Identity,
    /// `J = J_n`.
    Shear,
    /// Both entries of the first row equal 1.
    EqualRow,
    /// Continued-fraction reduction of the first row.
    Euclid,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArcPlan {
    pub target: UnimodularMatrix,
    pub canonical: UnimodularMatrix,
    pub case: PlanCase,
    /// Reduction steps `n_i` (case `euclid` only).
    pub steps: Vec<i64>,
    /// Final shear `J_l` reduced to the identity.
    pub shear: i64,
    /// A relabel by `diag(1, -1)` was needed to end at a shear (det -1).
    pub orientation_adjusted: bool,
    pub segments: Vec<PlanSegment>,
    pub total_sn: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EuclidSteps {
    pub n: Vec<i64>,
    pub k: Vec<i64>,
    pub l: Vec<i64>,
}

/// `k_{i+1} = n_{i+1} k_i - k_{i-1}` with `n_{i+1} = ceil(k_{i-1} / k_i)`,
/// same recurrence for `l`, from `(k_{-1}, k_0) = (mu1, mu2)` and
/// `(l_{-1}, l_0) = (nu1, nu2)` until `k_m = 0`.
pub fn euclid_decompose(j: &UnimodularMatrix) -> Result<EuclidSteps> {
    let of = || Error::Overflow("running the reduction");
    let (mut k, mut l) = (vec![j.a, j.b], vec![j.c, j.d]);
    let mut n = Vec::new();
    if j.a <= 0 || j.b <= 0 {
        return Err(Error::InvalidArgument(format!("reduction needs a positive first row, got {j}")));
    }
    while *k.last().unwrap() != 0 {
        let (kp, kc) = (k[k.len() - 2], k[k.len() - 1]);
        let (lp, lc) = (l[l.len() - 2], l[l.len() - 1]);
        let step = (kp + kc - 1) / kc;
        let kn = step.checked_mul(kc).and_then(|v| v.checked_sub(kp)).ok_or_else(of)?;
        let ln = step.checked_mul(lc).and_then(|v| v.checked_sub(lp)).ok_or_else(of)?;
        n.push(step);
        k.push(kn);
        l.push(ln);
    }
    Ok(EuclidSteps { n, k, l })
}

struct Builder {
    state: UnimodularMatrix,
    segments: Vec<PlanSegment>,
}

impl Builder {
    fn copy(&mut self, conjugator: UnimodularMatrix, reversed: bool) -> Result<()> {
        let far = conjugator.mul(&UnimodularMatrix::j(1))?;
        let (start, end) = if reversed { (far, conjugator) } else { (conjugator, far) };
        debug_assert_eq!(start, self.state);
        self.segments.push(PlanSegment {
            conjugator,
            base: SegmentBase::H01,
            reversed,
            sn_count: 2,
            start,
            end,
        });
        self.state = end;
        Ok(())
    }

    /// `M -> M J_k` through |k| copies of `h01`.
    fn shear(&mut self, k: i64) -> Result<()> {
        let m = self.state;
        if k > 0 {
            for i in 0..k {
                self.copy(m.mul(&UnimodularMatrix::j(i))?, false)?;
            }
        } else {
            for i in 1..=k.checked_neg().ok_or(Error::Overflow("negating a shear"))? {
                self.copy(m.mul(&UnimodularMatrix::j(-i))?, true)?;
            }
        }
        Ok(())
    }

    fn relabel(&mut self, s: UnimodularMatrix) -> Result<()> {
        if s == UnimodularMatrix::IDENTITY {
            return Ok(());
        }
        let end = self.state.mul(&s)?;
        self.segments.push(PlanSegment {
            conjugator: self.state,
            base: SegmentBase::Constant,
            reversed: false,
            sn_count: 0,
            start: self.state,
            end,
        });
        self.state = end;
        Ok(())
    }
}

/// `(0 -1; 1 0)`: carries `L_{i-1} J_{-n_i}` to `L_i`.
const QUARTER: UnimodularMatrix = UnimodularMatrix { a: 0, b: -1, c: 1, d: 0 };

/// Segment chain from `f_J` to `f0`.
pub fn plan(j: &UnimodularMatrix) -> Result<ArcPlan> {
    let j = UnimodularMatrix::new(j.a, j.b, j.c, j.d)?;
    let (canon, s0) = canonicalize_with(&j)?;
    let mut b = Builder {
        state: j,
        segments: Vec::new(),
    };
    b.relabel(s0)?;
    let mut steps = Vec::new();
    let mut shear = 0;
    let mut orientation_adjusted = false;
    let case;
    if canon == UnimodularMatrix::IDENTITY {
        case = PlanCase::Identity;
    } else if canon.b == 0 {
        case = PlanCase::Shear;
        shear = canon.c;
    } else if canon.a == canon.b {
        case = PlanCase::EqualRow;
        b.shear(-1)?;
        b.relabel(UnimodularMatrix::SWAP)?;
        shear = canon.d;
    } else {
        case = PlanCase::Euclid;
        let e = euclid_decompose(&canon)?;
        for (i, &n) in e.n.iter().enumerate() {
            b.shear(-n)?;
            b.relabel(QUARTER)?;
            let expect = UnimodularMatrix {
                a: e.k[i + 1],
                b: e.k[i + 2],
                c: e.l[i + 1],
                d: e.l[i + 2],
            };
            if b.state != expect {
                return Err(Error::Realization(format!(
                    "reduction step {i} reached {} instead of {expect}",
                    b.state
                )));
            }
        }
        steps = e.n;
        if b.state.d == -1 {
            b.relabel(UnimodularMatrix::diag(1, -1))?;
            orientation_adjusted = true;
        }
        shear = b.state.c;
    }
    if shear != 0 {
        debug_assert_eq!(b.state, UnimodularMatrix::j(shear));
        b.shear(-shear)?;
    }
    if b.state != UnimodularMatrix::IDENTITY {
        return Err(Error::Realization(format!("chain ends at {}, not the identity", b.state)));
    }
    let total_sn = b.segments.iter().map(|s| s.sn_count).sum();
    Ok(ArcPlan {
        target: j,
        canonical: canon,
        case,
        steps,
        shear,
        orientation_adjusted,
        segments: b.segments,
        total_sn,
    })
}

/// Half-period translation `u` with `S f0 S^-1 = T_u f0 T_-u` for a signed
/// permutation `S`.
pub fn relabel_shift(s: &UnimodularMatrix) -> Result<Vec2> {
    let d = if s.b == 0 && s.c == 0 {
        *s
    } else {
        s.mul(&UnimodularMatrix::SWAP)?
    };
    if d.b != 0 || d.c != 0 || d.a.abs() != 1 || d.d.abs() != 1 {
        return Err(Error::InvalidArgument(format!("{s} is not a signed permutation")));
    }
    Ok([(1 - d.a) as f64 / 4.0, (1 - d.d) as f64 / 4.0])
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Junction {
    /// Slices agree pointwise.
    Pointwise { gap: f64 },
    /// Slices differ but have the same invariant matrix.
    Certified { gap: f64, matrix: UnimodularMatrix },
}

pub struct Realization {
    pub arc: ArcFamily,
    pub junctions: Vec<Junction>,
}

fn segment_arc(seg: &PlanSegment) -> Result<ArcFamily> {
    match seg.base {
        SegmentBase::H01 => {
            let a = conjugate_arc(seg.conjugator, &model_arc_h01());
            Ok(if seg.reversed { reverse(&a) } else { a })
        }
        SegmentBase::Constant => {
            let s = seg.transition()?;
            let shift = seg.conjugator.apply(relabel_shift(&s)?);
            Ok(translate_arc(f_j(seg.conjugator), shift))
        }
    }
}

/// Arc family following `plan`. Junctions where consecutive slices do not
/// agree pointwise are accepted when the invariant matrices agree; the same
/// test is applied to the two endpoints against `f_J` and `f0`.
pub fn realize(plan: &ArcPlan, fp: &FixedPointConfig, tr: &TraceConfig) -> Result<Realization> {
    if plan.segments.is_empty() {
        return Ok(Realization {
            arc: ArcFamily::constant(f0()),
            junctions: Vec::new(),
        });
    }
    let parts: Vec<ArcFamily> = plan.segments.iter().map(segment_arc).collect::<Result<_>>()?;
    let certify = |f: &dyn crate::torus_dynamics::TorusMap, g: &dyn crate::torus_dynamics::TorusMap| -> Result<Junction> {
        let gap = max_lift_gap(f, g, 100);
        if gap <= 1e-9 {
            return Ok(Junction::Pointwise { gap });
        }
        let mf = invariant_matrix(f, fp, tr)?.matrix;
        let mg = invariant_matrix(g, fp, tr)?.matrix;
        if mf != mg {
            return Err(Error::Realization(format!("junction joins {mf} to {mg}")));
        }
        Ok(Junction::Certified { gap, matrix: mf })
    };
    let mut junctions = Vec::new();
    junctions.push(certify(f_j(plan.target).as_ref(), parts[0].slice(0.0).as_ref())?);
    for w in parts.windows(2) {
        junctions.push(certify(w[0].slice(1.0).as_ref(), w[1].slice(0.0).as_ref())?);
    }
    junctions.push(certify(parts[parts.len() - 1].slice(1.0).as_ref(), f0().as_ref())?);
    Ok(Realization {
        arc: chain(&parts)?,
        junctions,
    })
}
