//! Run configuration: which reference measure to load, the ladder window,
//! nets, the grid used for measure dimensions and the expected values that
//! `verify` checks.
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::counting::CandidateOrder;
use crate::dims::{ScaleConfig, SumMode, Variant};
use crate::error::{Error, Result};
use crate::ifs::{IfsModel, Num, OpenBox};
use crate::measure::{DiscreteMeasure, Frame, Point};

pub const DEFAULT_Q_GRID: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];
pub const DEFAULT_EPS_LADDER: [f64; 4] = [0.5, 0.2, 0.1, 0.05];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    seed: Option<u64>,
    out: Option<PathBuf>,
    q_grid: Option<Vec<Num>>,
    eps_ladder: Option<Vec<f64>>,
    input: RawInput,
    #[serde(default)]
    scale: RawScale,
    frame: Option<RawFrame>,
    #[serde(default)]
    nets: RawNets,
    #[serde(default)]
    cells: RawCells,
    #[serde(default)]
    expect: Vec<RawExpect>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInput {
    ifs: Option<PathBuf>,
    depth: Option<u32>,
    measure: Option<PathBuf>,
    builtin: Option<String>,
    spacing: Option<Num>,
    resolution: Option<f64>,
    osc_box: Option<RawBox>,
    #[serde(default)]
    assume_osc: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScale {
    base: Option<u32>,
    k_lo: Option<i32>,
    k_hi: Option<i32>,
    mode: Option<String>,
    dilation: Option<f64>,
    variant: Option<String>,
    order: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrame {
    lo: Vec<f64>,
    side: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNets {
    #[serde(default)]
    explicit: Vec<RawNet>,
    #[serde(default)]
    cylinder_depths: Vec<u32>,
    #[serde(default)]
    grid_levels: Vec<u32>,
    inner_count: Option<usize>,
    doubling_samples: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNet {
    centers: Vec<Vec<f64>>,
    rho: Num,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCells {
    base: Option<u32>,
    level: Option<u32>,
    mass_floor: Option<f64>,
    mu: Option<String>,
    points: Option<Vec<Vec<f64>>>,
    n: Option<usize>,
    weights: Option<Vec<f64>>,
    measure: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExpect {
    quantity: String,
    q: Option<f64>,
    value: Num,
    tol: f64,
}

/// Where the reference measure comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum Input {
    Ifs {
        path: PathBuf,
        depth: u32,
    },
    Measure {
        path: PathBuf,
    },
    /// Half the mass at the origin, half spread evenly over `[1, 2]`.
    PointAndInterval {
        spacing: f64,
    },
}

/// Explicit net as written in the config.
#[derive(Clone, Debug, PartialEq)]
pub struct NetSpec {
    pub centers: Vec<Vec<f64>>,
    pub rho: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Nets {
    pub explicit: Vec<NetSpec>,
    pub cylinder_depths: Vec<u32>,
    pub grid_levels: Vec<u32>,
    pub inner_count: usize,
    pub doubling_samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MuSpec {
    /// The reference measure itself.
    Reference,
    FiniteNet {
        points: Vec<Vec<f64>>,
        n: usize,
        weights: Option<Vec<f64>>,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cells {
    pub base: u32,
    pub level: u32,
    pub mass_floor: f64,
    pub mu: MuSpec,
}

/// Target of an expectation: a number or a closed-form exponent of the model.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Value(f64),
    SMin,
    SMax,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Expectation {
    pub quantity: String,
    pub q: Option<f64>,
    pub target: Target,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub input: Input,
    pub resolution: Option<f64>,
    pub osc_box: Option<OpenBox>,
    pub assume_osc: bool,
    pub scale: ScaleConfig,
    pub frame: Option<Frame>,
    pub q_grid: Vec<f64>,
    pub eps_ladder: Vec<f64>,
    pub nets: Nets,
    pub cells: Cells,
    pub expect: Vec<Expectation>,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, dir)
    }

    pub fn parse(text: &str, dir: &Path) -> Result<Self> {
        let raw: RawRun = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { dir.join(p) };

        let input = match (raw.input.ifs, raw.input.measure, raw.input.builtin) {
            (Some(path), None, None) => Input::Ifs {
                path: resolve(path),
                depth: raw.input.depth.ok_or_else(|| Error::Config("an ifs input needs a depth".into()))?,
            },
            (None, Some(path), None) => Input::Measure { path: resolve(path) },
            (None, None, Some(name)) if name == "point-and-interval" => {
                let spacing = raw.input.spacing.map(|s| s.value()).transpose()?.unwrap_or(1.0 / 4096.0);
                Input::PointAndInterval { spacing }
            }
            (None, None, Some(name)) => return Err(Error::Config(format!("unknown builtin measure '{name}'"))),
            _ => return Err(Error::Config("input needs exactly one of ifs, measure, builtin".into())),
        };
        let osc_box = raw.input.osc_box.map(|b| OpenBox::new(b.lo, b.hi)).transpose()?;

        let defaults = ScaleConfig::default();
        let s = raw.scale;
        let scale = ScaleConfig {
            base: s.base.unwrap_or(defaults.base),
            k_lo: s.k_lo.unwrap_or(defaults.k_lo),
            k_hi: s.k_hi.unwrap_or(defaults.k_hi),
            mode: s.mode.as_deref().map(str::parse).transpose()?.unwrap_or(defaults.mode),
            dilation: s.dilation.unwrap_or(defaults.dilation),
            variant: s.variant.as_deref().map(str::parse).transpose()?.unwrap_or(defaults.variant),
            order: match s.order.as_deref() {
                None | Some("mass") => CandidateOrder::MassAware,
                Some("lexicographic") => CandidateOrder::Lexicographic,
                Some(o) => return Err(Error::Config(format!("unknown candidate order '{o}'"))),
            },
        };
        scale.validate()?;

        let q_grid = match raw.q_grid {
            Some(v) => v.iter().map(Num::value).collect::<Result<Vec<_>>>()?,
            None => DEFAULT_Q_GRID.to_vec(),
        };
        let eps_ladder = raw.eps_ladder.unwrap_or_else(|| DEFAULT_EPS_LADDER.to_vec());
        if q_grid.is_empty() || eps_ladder.is_empty() {
            return Err(Error::Config("q_grid and eps_ladder must be non-empty".into()));
        }
        if let Some(e) = eps_ladder.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(Error::Config(format!("eps {e} is outside (0, 1)")));
        }

        let nets = Nets {
            explicit: raw
                .nets
                .explicit
                .into_iter()
                .map(|n| Ok(NetSpec { centers: n.centers, rho: n.rho.value()? }))
                .collect::<Result<Vec<_>>>()?,
            cylinder_depths: raw.nets.cylinder_depths,
            grid_levels: raw.nets.grid_levels,
            inner_count: raw.nets.inner_count.unwrap_or(8),
            doubling_samples: raw.nets.doubling_samples.unwrap_or(32),
        };

        let c = raw.cells;
        let mu = match c.mu.as_deref() {
            None | Some("reference") => MuSpec::Reference,
            Some("finite-net") => {
                let points = c.points.ok_or_else(|| Error::Config("finite-net mu needs points".into()))?;
                let n = c.n.unwrap_or(points.len());
                MuSpec::FiniteNet { points, n, weights: c.weights }
            }
            Some("file") => MuSpec::File {
                path: resolve(c.measure.ok_or_else(|| Error::Config("file mu needs a measure path".into()))?),
            },
            Some(m) => return Err(Error::Config(format!("unknown mu '{m}'"))),
        };
        let cells = Cells {
            base: c.base.unwrap_or(scale.base),
            level: c.level.unwrap_or(2),
            mass_floor: c.mass_floor.unwrap_or(0.01),
            mu,
        };

        let expect = raw
            .expect
            .into_iter()
            .map(|e| {
                let target = match &e.value {
                    Num::Text(t) if t == "s_min" => Target::SMin,
                    Num::Text(t) if t == "s_max" => Target::SMax,
                    v => Target::Value(v.value()?),
                };
                Ok(Expectation { quantity: e.quantity, q: e.q, target, tol: e.tol })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(RunConfig {
            input,
            resolution: raw.input.resolution,
            osc_box,
            assume_osc: raw.input.assume_osc,
            scale,
            frame: raw.frame.map(|f| Frame::new(f.lo, f.side)).transpose()?,
            q_grid,
            eps_ladder,
            nets,
            cells,
            expect,
            seed: raw.seed.unwrap_or(0),
            out: raw.out.map(resolve),
        })
    }

    /// Overrides the build depth of an IFS input.
    pub fn set_depth(&mut self, depth: u32) -> Result<()> {
        match &mut self.input {
            Input::Ifs { depth: d, .. } => {
                *d = depth;
                Ok(())
            }
            _ => Err(Error::Config("--depth only applies to ifs inputs".into())),
        }
    }

    pub fn set_mode(&mut self, mode: SumMode) {
        self.scale.mode = mode;
    }

    pub fn set_variant(&mut self, variant: Variant) {
        self.scale.variant = variant;
    }
}

/// `½ δ_0 + ½ · (uniform on the grid {1, 1 + h, …, 2})`.
pub fn point_and_interval(spacing: f64) -> Result<DiscreteMeasure> {
    let steps = (1.0 / spacing).round();
    if !(spacing > 0.0) || (steps * spacing - 1.0).abs() > 1e-12 || steps > 1e7 {
        return Err(Error::Config(format!("spacing {spacing} must divide 1")));
    }
    let n = steps as usize;
    let w = 0.5 / (n + 1) as f64;
    let mut atoms = Vec::with_capacity(n + 2);
    atoms.push((Point::on_line(0.0), 0.5));
    for i in 0..=n {
        atoms.push((Point::on_line(1.0 + i as f64 / steps), w));
    }
    DiscreteMeasure::from_atoms(atoms)
}

/// Reference measure and the model it came from, if any.
pub fn load_input(input: &Input) -> Result<(DiscreteMeasure, Option<IfsModel>)> {
    match input {
        Input::Ifs { path, depth } => {
            let ifs = IfsModel::load(path)?;
            Ok((ifs.build_measure(*depth)?, Some(ifs)))
        }
        Input::Measure { path } => Ok((crate::format::load_measure(path)?, None)),
        Input::PointAndInterval { spacing } => Ok((point_and_interval(*spacing)?, None)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::parse("[input]\nifs = \"m.toml\"\ndepth = 4\n", Path::new("/cfg")).unwrap();
        assert_eq!(cfg.input, Input::Ifs { path: PathBuf::from("/cfg/m.toml"), depth: 4 });
        assert_eq!(cfg.scale, ScaleConfig::default());
        assert_eq!(cfg.q_grid, DEFAULT_Q_GRID.to_vec());
        assert_eq!(cfg.cells.mu, MuSpec::Reference);
    }

    #[test]
    fn full_config() {
        let text = r#"
            seed = 3
            q_grid = [0, "1/2"]
            [input]
            builtin = "point-and-interval"
            spacing = "1/64"
            [scale]
            base = 2
            k_lo = 2
            k_hi = 5
            mode = "packing"
            variant = "intersecting"
            [[nets.explicit]]
            centers = [[0.0], [1.5]]
            rho = 0.5
            [cells]
            mu = "finite-net"
            points = [[0.0], [1.0]]
            [[expect]]
            quantity = "tau_loc"
            q = 0
            value = 0
            tol = 0.05
            [[expect]]
            quantity = "D_unif_minus"
            value = "s_max"
            tol = 0.08
        "#;
        let cfg = RunConfig::parse(text, Path::new(".")).unwrap();
        assert_eq!(cfg.q_grid, vec![0.0, 0.5]);
        assert_eq!(cfg.scale.mode, SumMode::Packing);
        assert_eq!(cfg.scale.variant, Variant::BallsIntersecting);
        assert_eq!(cfg.nets.explicit[0].rho, 0.5);
        assert_eq!(cfg.expect[1].target, Target::SMax);
        assert_eq!(cfg.cells.base, 2);
        let (pi, ifs) = load_input(&cfg.input).unwrap();
        assert!(ifs.is_none());
        assert_eq!(pi.len(), 66);
    }

    #[test]
    fn rejects_ambiguous_input() {
        let text = "[input]\nifs = \"a\"\ndepth = 1\nmeasure = \"b\"\n";
        assert!(RunConfig::parse(text, Path::new(".")).is_err());
        assert!(RunConfig::parse("[input]\nifs = \"a\"\n", Path::new(".")).is_err());
    }

    #[test]
    fn point_and_interval_masses() {
        let pi = point_and_interval(1.0 / 4096.0).unwrap();
        assert_eq!(pi.len(), 4098);
        assert_eq!(pi.weight(0), 0.5);
        assert!(point_and_interval(0.3).is_err());
    }
}
