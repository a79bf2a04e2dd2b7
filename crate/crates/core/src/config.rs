//! Run configuration: every numerical tolerance in one flat record, loadable
//! from a TOML file of `key = value` lines.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bifurcation_lab::LabConfig;
use crate::model_maps_1d::RootConfig;
use crate::torus_dynamics::{FixedPointConfig, TraceConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid_n_1d: usize,
    pub tol: f64,
    pub tol_hyp: f64,
    pub tol_touch: f64,
    pub grid_n_2d: usize,
    pub tol_sn: f64,
    pub max_newton: usize,
    pub eps0: f64,
    pub eps_node: f64,
    pub h_sep: f64,
    pub max_iter: usize,
    pub inverse_tol: f64,
    pub inverse_max: usize,
    pub fd_step: f64,
    pub h_a: f64,
    pub h_b: f64,
    pub tol_coeff: f64,
    pub angle_min: f64,
    pub probe_radius: f64,
    /// Number of intervals of the scan grid (`t_grid + 1` slices).
    pub t_grid: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let root = RootConfig::default();
        let fp = FixedPointConfig::default();
        let tr = TraceConfig::default();
        let lab = LabConfig::default();
        RunConfig {
            grid_n_1d: root.grid_n,
            tol: root.tol,
            tol_hyp: root.tol_hyp,
            tol_touch: root.tol_touch,
            grid_n_2d: fp.grid_n,
            tol_sn: fp.tol_sn,
            max_newton: fp.max_newton,
            eps0: tr.eps0,
            eps_node: tr.eps_node,
            h_sep: tr.h_sep,
            max_iter: tr.max_iter,
            inverse_tol: tr.inverse_tol,
            inverse_max: tr.inverse_max,
            fd_step: lab.fd_step,
            h_a: lab.h_a,
            h_b: lab.h_b,
            tol_coeff: lab.tol_coeff,
            angle_min: lab.angle_min,
            probe_radius: lab.probe_radius,
            t_grid: 512,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::InvalidArgument(format!("bad config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol", self.tol),
            ("tol_hyp", self.tol_hyp),
            ("tol_touch", self.tol_touch),
            ("tol_sn", self.tol_sn),
            ("eps0", self.eps0),
            ("eps_node", self.eps_node),
            ("h_sep", self.h_sep),
            ("inverse_tol", self.inverse_tol),
            ("fd_step", self.fd_step),
            ("h_a", self.h_a),
            ("h_b", self.h_b),
            ("tol_coeff", self.tol_coeff),
            ("angle_min", self.angle_min),
            ("probe_radius", self.probe_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        let counts = [
            ("grid_n_1d", self.grid_n_1d, 4),
            ("grid_n_2d", self.grid_n_2d, 4),
            ("max_newton", self.max_newton, 1),
            ("max_iter", self.max_iter, 1),
            ("inverse_max", self.inverse_max, 1),
            ("t_grid", self.t_grid, 1),
        ];
        for (name, v, min) in counts {
            if v < min {
                return Err(Error::InvalidArgument(format!("{name} must be at least {min}, got {v}")));
            }
        }
        Ok(())
    }

    pub fn root(&self) -> RootConfig {
        RootConfig {
            grid_n: self.grid_n_1d,
            tol: self.tol,
            tol_hyp: self.tol_hyp,
            tol_touch: self.tol_touch,
        }
    }

    pub fn fixed_points(&self) -> FixedPointConfig {
        FixedPointConfig {
            grid_n: self.grid_n_2d,
            tol: self.tol,
            tol_hyp: self.tol_hyp,
            tol_sn: self.tol_sn,
            max_newton: self.max_newton,
        }
    }

    pub fn trace(&self) -> TraceConfig {
        TraceConfig {
            eps0: self.eps0,
            eps_node: self.eps_node,
            h_sep: self.h_sep,
            max_iter: self.max_iter,
            inverse_tol: self.inverse_tol,
            inverse_max: self.inverse_max,
            ..TraceConfig::default()
        }
    }

    pub fn lab(&self) -> LabConfig {
        LabConfig {
            fixed_points: self.fixed_points(),
            trace: self.trace(),
            fd_step: self.fd_step,
            h_a: self.h_a,
            h_b: self.h_b,
            tol_coeff: self.tol_coeff,
            angle_min: self.angle_min,
            probe_radius: self.probe_radius,
            ..LabConfig::default()
        }
    }
}
