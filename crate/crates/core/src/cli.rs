//! Command-line front end for the `polar-arc` binary.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::arc_engine::{model_arc, twist_arc, ArcFamily, Axis, DEFAULT_TWIST_SUPPORT};
use crate::arc_planner::{plan, realize};
use crate::bifurcation_lab::find_events;
use crate::config::RunConfig;
use crate::linalg::{self, Eigen2, Vec2};
use crate::torus_dynamics::{
    f0, f_j, fixed_points_2d, homotopy_type, invariant_matrix, reduce, trace_separatrix, Branch,
    FixedKind, SharedMap, Stability, UnimodularMatrix,
};
use crate::{Error, Result};

pub const THREADS_ENV: &str = "POLAR_ARC_THREADS";

#[derive(Parser, Debug)]
#[command(name = "polar-arc", version, about = "Saddle-node arcs between polar maps of the torus")]
pub struct Cli {
    /// TOML file with numerical settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Number of intervals of the scan grid.
    #[arg(long = "t-grid", global = true)]
    pub t_grid: Option<usize>,
    /// Side of the residual grid for 2-D fixed points.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fixed points of a torus map.
    FixedPoints { map: String },
    /// Invariant matrix of a map in class G.
    InvariantMatrix { map: String },
    /// Segment chain from f_J to f0 for the matrix a,b,c,d.
    Plan { matrix: String },
    /// Fixed-point census and saddle-nodes along an arc.
    Scan { arc: String },
    /// One separatrix of a saddle.
    Trace {
        map: String,
        /// Index of the saddle in fixed-point order.
        #[arg(long, default_value_t = 0)]
        saddle: usize,
        #[arg(long, value_enum, default_value_t = StabilityArg::Unstable)]
        stability: StabilityArg,
        #[arg(long, value_enum, default_value_t = BranchArg::Plus)]
        branch: BranchArg,
    },
    /// Image of a point.
    Eval {
        map: String,
        /// Point as x,z.
        #[arg(long, allow_hyphen_values = true)]
        point: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StabilityArg {
    Stable,
    Unstable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BranchArg {
    Plus,
    Minus,
}

/// Arc ids: `h1`, `h2`, `gamma1`, `gamma2`, `h01`, `twist:<n>`,
/// `plan:<a,b,c,d>`.
pub fn parse_arc(id: &str, cfg: &RunConfig) -> Result<ArcFamily> {
    if let Some(n) = id.strip_prefix("twist:") {
        let n: f64 = n
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad twist amount {n:?}")))?;
        return twist_arc(n, Axis::X, DEFAULT_TWIST_SUPPORT.0, DEFAULT_TWIST_SUPPORT.1);
    }
    if let Some(m) = id.strip_prefix("plan:") {
        let p = plan(&m.parse()?)?;
        return Ok(realize(&p, &cfg.fixed_points(), &cfg.trace())?.arc);
    }
    model_arc(id)
}

/// Map specs: `f0`, `fJ:a,b,c,d`, `arc:<id>@<t>`.
pub fn parse_map(spec: &str, cfg: &RunConfig) -> Result<SharedMap> {
    if spec == "f0" {
        return Ok(f0());
    }
    if let Some(m) = spec.strip_prefix("fJ:") {
        return Ok(f_j(m.parse()?));
    }
    if let Some(rest) = spec.strip_prefix("arc:") {
        let (id, t) = rest
            .rsplit_once('@')
            .ok_or_else(|| Error::InvalidArgument(format!("expected arc:<id>@<t>, got {spec:?}")))?;
        let t: f64 = t
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad parameter {t:?}")))?;
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidArgument(format!("parameter {t} outside [0, 1]")));
        }
        return Ok(parse_arc(id, cfg)?.slice(t));
    }
    Err(Error::InvalidArgument(format!("unknown map spec {spec:?}")))
}

fn parse_point(s: &str) -> Result<Vec2> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Error::InvalidArgument(format!("expected x,z, got {s:?}")));
    }
    let num = |p: &str| {
        p.parse::<f64>()
            .map_err(|_| Error::InvalidArgument(format!("not a number: {p:?}")))
    };
    Ok([num(parts[0])?, num(parts[1])?])
}

/// 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn eigen_columns(e: &Eigen2) -> [f64; 4] {
    match *e {
        Eigen2::Real([a, b]) => [a, 0.0, b, 0.0],
        Eigen2::Complex { re, im } => [re, im, re, -im],
    }
}

fn kind_name(k: FixedKind) -> &'static str {
    match k {
        FixedKind::Sink => "sink",
        FixedKind::Source => "source",
        FixedKind::Saddle => "saddle",
        FixedKind::SaddleNode => "saddle_node",
        FixedKind::Nonhyperbolic => "nonhyperbolic",
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn run_command(cli: &Cli, cfg: &RunConfig) -> Result<String> {
    let csv = cli.format == Format::Csv;
    match &cli.command {
        Command::FixedPoints { map } => {
            let f = parse_map(map, cfg)?;
            let r = fixed_points_2d(f.as_ref(), &cfg.fixed_points());
            if !csv {
                return Ok(to_json(&json!({ "points": r.points, "census": r.census(), "warnings": r.warnings })));
            }
            let mut out = String::from("x,z,kind,ev1_re,ev1_im,ev2_re,ev2_im,residual\n");
            for p in &r.points {
                let e = eigen_columns(&p.eigen);
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    fmt17(p.position[0]),
                    fmt17(p.position[1]),
                    kind_name(p.kind),
                    fmt17(e[0]),
                    fmt17(e[1]),
                    fmt17(e[2]),
                    fmt17(e[3]),
                    fmt17(p.residual)
                );
            }
            Ok(out)
        }
        Command::InvariantMatrix { map } => {
            let f = parse_map(map, cfg)?;
            let r = invariant_matrix(f.as_ref(), &cfg.fixed_points(), &cfg.trace())?;
            if csv {
                let m = r.matrix;
                return Ok(format!("mu1,mu2,nu1,nu2\n{},{},{},{}\n", m.a, m.b, m.c, m.d));
            }
            Ok(to_json(&r))
        }
        Command::Plan { matrix } => {
            let m: UnimodularMatrix = matrix.parse()?;
            let p = plan(&m)?;
            if !csv {
                return Ok(to_json(&p));
            }
            let mut out = String::from("index,base,reversed,sn_count,conjugator,start,end\n");
            for (i, s) in p.segments.iter().enumerate() {
                let q = |m: UnimodularMatrix| {
                    let e = m.entries();
                    format!("\"{},{},{},{}\"", e[0], e[1], e[2], e[3])
                };
                let base = match s.base {
                    crate::arc_planner::SegmentBase::H01 => "h01",
                    crate::arc_planner::SegmentBase::Constant => "constant",
                };
                let _ = writeln!(
                    out,
                    "{i},{base},{},{},{},{},{}",
                    s.reversed,
                    s.sn_count,
                    q(s.conjugator),
                    q(s.start),
                    q(s.end)
                );
            }
            Ok(out)
        }
        Command::Scan { arc } => {
            let a = parse_arc(arc, cfg)?;
            let ts = crate::bifurcation_lab::uniform_grid(cfg.t_grid);
            let (scan, events) = find_events(&a, &ts, &cfg.lab())?;
            if !csv {
                return Ok(to_json(&json!({ "arc": a.name(), "scan": scan, "events": events })));
            }
            let mut out = String::from("t,count,sinks,saddles,sources,saddle_nodes,other\n");
            for r in &scan.rows {
                let c = r.census;
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    fmt17(r.t),
                    r.count,
                    c.sinks,
                    c.saddles,
                    c.sources,
                    c.saddle_nodes,
                    c.other
                );
            }
            Ok(out)
        }
        Command::Trace {
            map,
            saddle,
            stability,
            branch,
        } => {
            let f = parse_map(map, cfg)?;
            let r = fixed_points_2d(f.as_ref(), &cfg.fixed_points());
            let saddles = r.of_kind(FixedKind::Saddle);
            let s = saddles.get(*saddle).ok_or_else(|| {
                Error::InvalidArgument(format!("saddle index {saddle} out of range ({} saddles)", saddles.len()))
            })?;
            let stab = match stability {
                StabilityArg::Stable => Stability::Stable,
                StabilityArg::Unstable => Stability::Unstable,
            };
            let node = if stab == Stability::Unstable { FixedKind::Sink } else { FixedKind::Source };
            let targets: Vec<Vec2> = r.of_kind(node).iter().map(|p| p.position).collect();
            let (b, other) = match branch {
                BranchArg::Plus => (Branch::Plus, Branch::Minus),
                BranchArg::Minus => (Branch::Minus, Branch::Plus),
            };
            let tr = cfg.trace();
            let curve = trace_separatrix(f.as_ref(), s.position, stab, b, &targets, &tr)?;
            let partner = trace_separatrix(f.as_ref(), s.position, stab, other, &targets, &tr)?;
            let ty = homotopy_type(&curve, &partner)?;
            if !csv {
                return Ok(to_json(&json!({ "homotopy_type": ty, "curve": curve })));
            }
            let mut out = format!("# homotopy: {},{}\nt_step,x_lift,z_lift,x_mod1,z_mod1\n", ty[0], ty[1]);
            for (i, p) in curve.points.iter().enumerate() {
                let m = reduce(*p);
                let _ = writeln!(out, "{i},{},{},{},{}", fmt17(p[0]), fmt17(p[1]), fmt17(m[0]), fmt17(m[1]));
            }
            Ok(out)
        }
        Command::Eval { map, point } => {
            let f = parse_map(map, cfg)?;
            let p = parse_point(point)?;
            let img = f.lift(p);
            let jac = f.jacobian(p);
            if csv {
                let m = reduce(img);
                return Ok(format!(
                    "x_lift,z_lift,x_mod1,z_mod1\n{},{},{},{}\n",
                    fmt17(img[0]),
                    fmt17(img[1]),
                    fmt17(m[0]),
                    fmt17(m[1])
                ));
            }
            Ok(to_json(&json!({
                "point": p,
                "lift": img,
                "torus": reduce(img),
                "jacobian": jac,
                "det": linalg::det(&jac),
            })))
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code:
/// 0 on success, 2 for usage errors, 3 for numerical failures.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    configure_threads();
    let result = (|| -> Result<String> {
        let mut cfg = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(n) = cli.t_grid {
            cfg.t_grid = n;
        }
        if let Some(n) = cli.grid {
            cfg.grid_n_2d = n;
        }
        cfg.validate()?;
        run_command(&cli, &cfg)
    })();
    match result {
        Ok(text) => {
            let written = match &cli.out {
                Some(path) => std::fs::write(path, text),
                None => std::io::stdout().write_all(text.as_bytes()),
            };
            match written {
                Ok(()) => 0,
                Err(e) => {
                    eprintln!("error: cannot write output: {e}");
                    2
                }
            }
        }
        Err(e) if e.is_usage() => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            println!("{}", json!({ "error": format!("{e:?}").split(['(', ' ', '{']).next().unwrap_or(""), "message": e.to_string() }));
            3
        }
    }
}
