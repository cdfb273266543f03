//! Scaling exponents estimated from moment sums on a radius ladder.
//!
//! Every quantity here is a finite proxy for a limit over all scales and an
//! infimum or supremum over uncountably many centers. Centers come from
//! [`SampleNet`]s, radii from the [`Ladder`] of a [`ScaleConfig`], and each
//! result is an [`Estimate`]: the slope bracket together with the series it
//! was read from.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::counting::{greedy_cover_atoms, packing_sum_atoms, CandidateOrder, Ladder, ScaleSeries, SlopeEstimate};
use crate::error::{Error, Result};
use crate::ifs::{IfsModel, Word};
use crate::measure::{dist, in_open_ball, DiscreteMeasure, Frame, GridCell, Point, Region};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SumMode {
    #[default]
    Covering,
    Packing,
}

/// Which atoms enter the inner infimum or supremum near a net center `y`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Variant {
    /// Atoms `x` with `x ∈ B(y, ρ)`.
    #[default]
    CentersInBall,
    /// Atoms `x` whose ball `B(x, r)` meets `B(y, ρ)`.
    BallsIntersecting,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    /// Smallest ball masses.
    Minus,
    /// Largest ball masses.
    Plus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    Lower,
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    Small,
    Big,
}

macro_rules! keyword_enum {
    ($ty:ty { $($variant:path => $name:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $name),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    _ => Err(Error::InvalidInput(format!(
                        "unknown {} '{s}'",
                        stringify!($ty).to_lowercase()
                    ))),
                }
            }
        }
    };
}

keyword_enum!(SumMode { SumMode::Covering => "covering", SumMode::Packing => "packing" });
keyword_enum!(Variant { Variant::CentersInBall => "centers", Variant::BallsIntersecting => "intersecting" });
keyword_enum!(Bound { Bound::Lower => "lower", Bound::Upper => "upper" });
keyword_enum!(Which { Which::Small => "small", Which::Big => "big" });

/// A slope bracket and the series behind it.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub slope: SlopeEstimate,
    pub series: ScaleSeries,
}

impl Estimate {
    pub fn from_series(series: ScaleSeries, k_lo: i32) -> Result<Self> {
        Ok(Estimate { slope: crate::counting::slope_bounds(&series, k_lo)?, series })
    }

    pub fn lower(&self) -> f64 {
        self.slope.lower
    }

    pub fn upper(&self) -> f64 {
        self.slope.upper
    }

    pub fn ols(&self) -> f64 {
        self.slope.ols
    }
}

/// Ladder window and sum settings shared by all estimators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleConfig {
    pub base: u32,
    pub k_lo: i32,
    pub k_hi: i32,
    pub mode: SumMode,
    /// Packing balls are evaluated at `dilation · r`.
    pub dilation: f64,
    pub variant: Variant,
    pub order: CandidateOrder,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        ScaleConfig {
            base: 3,
            k_lo: 3,
            k_hi: 8,
            mode: SumMode::Covering,
            dilation: 1.0,
            variant: Variant::CentersInBall,
            order: CandidateOrder::MassAware,
        }
    }
}

impl ScaleConfig {
    pub fn new(base: u32, k_lo: i32, k_hi: i32) -> Result<Self> {
        let cfg = ScaleConfig { base, k_lo, k_hi, ..Default::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_mode(self, mode: SumMode) -> Self {
        ScaleConfig { mode, ..self }
    }

    pub fn with_dilation(self, dilation: f64) -> Self {
        ScaleConfig { dilation, ..self }
    }

    pub fn with_variant(self, variant: Variant) -> Self {
        ScaleConfig { variant, ..self }
    }

    pub fn with_order(self, order: CandidateOrder) -> Self {
        ScaleConfig { order, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        Ladder::new(self.base, self.k_lo, self.k_hi)?;
        if self.k_hi - self.k_lo < 2 {
            return Err(Error::TooFewScales { have: (self.k_hi - self.k_lo + 1) as usize, need: 3 });
        }
        if !(self.dilation > 0.0 && self.dilation.is_finite()) {
            return Err(Error::InvalidInput(format!("dilation must be positive, got {}", self.dilation)));
        }
        Ok(())
    }

    pub fn ladder(&self) -> Ladder {
        Ladder { base: self.base, k_lo: self.k_lo, k_hi: self.k_hi }
    }

    pub fn radius(&self, k: i32) -> f64 {
        self.ladder().radius(k)
    }

    /// Requires at least three window radii of at least ten times the atom
    /// spacing `resolution`; below that, ball counts see individual atoms
    /// rather than the set they approximate.
    pub fn check_resolution(&self, resolution: f64) -> Result<()> {
        let floor = 10.0 * resolution;
        let usable: Vec<i32> = self.ladder().ks().filter(|&k| self.radius(k) >= floor).collect();
        if usable.len() >= 3 {
            return Ok(());
        }
        Err(Error::ResolutionGuard(format!(
            "only {} of the radii base^-k, k in [{}, {}], are >= 10 x atom resolution {:e} (need 3); \
             build deeper or move the window to coarser scales",
            usable.len(),
            self.k_lo,
            self.k_hi,
            resolution
        )))
    }
}

/// Finite family of centers sharing one radius `rho`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleNet {
    pub centers: Vec<Point>,
    pub rho: f64,
}

impl SampleNet {
    pub fn new(centers: Vec<Point>, rho: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::EmptyNet);
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidInput(format!("net radius must be positive, got {rho}")));
        }
        Ok(SampleNet { centers, rho })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Images of the invariant box center under all words of length `depth`.
    /// `rho` slightly exceeds the half diagonal of the largest image box, so
    /// each ball holds its whole cylinder.
    pub fn cylinder_midpoints(ifs: &IfsModel, depth: u32) -> Result<Self> {
        let (lo, hi) = ifs.invariant_box();
        let center = Point::new(lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect());
        let half_diag = 0.5 * dist(&lo, &hi);
        let max_ratio = ifs.ratios().into_iter().fold(0.0, f64::max);
        let mut centers = Vec::new();
        let mut word = Word(vec![0; depth as usize]);
        loop {
            centers.push(ifs.apply_word(&word, &center)?);
            if !next_word(&mut word.0, ifs.maps().len()) {
                break;
            }
        }
        let rho = max_ratio.powi(depth as i32) * half_diag * (1.0 + 1e-6);
        SampleNet::new(centers, rho)
    }

    /// Centers of the grid cells at `level` that hold atoms of `pi`.
    pub fn grid_cells(pi: &DiscreteMeasure, frame: &Frame, base: u32, level: u32) -> Result<Self> {
        let grid = crate::measure::to_grid(pi, frame, base, level)?;
        let mut centers = Vec::new();
        let mut diam: f64 = 0.0;
        for cell in grid.cell_masses.keys() {
            centers.push(frame.cell_center(cell));
            diam = diam.max(frame.cell_diameter(cell));
        }
        SampleNet::new(centers, 0.5 * diam * 1.01)
    }

    /// Up to `count` atoms of `pi` in `B(y, rho / 2)`, evenly spaced in atom
    /// order, with radius `rho / 2`. The balls of the result lie inside
    /// `B(y, rho)`.
    pub fn around(pi: &DiscreteMeasure, y: &Point, rho: f64, count: usize) -> Result<Self> {
        let inner = 0.5 * rho;
        let atoms = pi.ball_indices(&y.0, inner);
        if atoms.is_empty() || count == 0 {
            return Err(Error::EmptyNet);
        }
        let picks = count.min(atoms.len());
        let centers = (0..picks).map(|i| Point::from(pi.atom(atoms[i * atoms.len() / picks]))).collect();
        SampleNet::new(centers, inner)
    }

    /// Centers lying in the open ball `B(z, kappa)`, if any.
    pub fn within(&self, z: &Point, kappa: f64) -> Option<SampleNet> {
        let centers: Vec<Point> = self.centers.iter().filter(|c| in_open_ball(c.dist(&z.0), kappa)).cloned().collect();
        SampleNet::new(centers, self.rho).ok()
    }

    /// Every center must see an atom of `pi` within `rho`.
    pub fn check(&self, pi: &DiscreteMeasure) -> Result<()> {
        for c in &self.centers {
            if pi.ball_indices(&c.0, self.rho).is_empty() {
                return Err(Error::BareNetCenter { center: c.0.clone(), rho: self.rho });
            }
        }
        Ok(())
    }
}

fn next_word(w: &mut [usize], letters: usize) -> bool {
    for i in (0..w.len()).rev() {
        if w[i] + 1 < letters {
            w[i] += 1;
            return true;
        }
        w[i] = 0;
    }
    false
}

/// First error in input order, so failures are reproducible under any
/// thread schedule.
fn first_err<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

fn moment_value(pi: &DiscreteMeasure, targets: &[usize], r: f64, q: f64, cfg: &ScaleConfig) -> Result<f64> {
    match cfg.mode {
        SumMode::Covering => greedy_cover_atoms(pi, targets, r, q, cfg.order).moment(pi, q),
        SumMode::Packing => packing_sum_atoms(pi, targets, r, q, cfg.dilation, cfg.order),
    }
}

/// Moment sums of `region` over the configured ladder.
pub fn moment_series(pi: &DiscreteMeasure, region: &Region, q: f64, cfg: &ScaleConfig) -> Result<ScaleSeries> {
    cfg.validate()?;
    let targets = region.atoms_of(pi);
    if targets.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let ladder = cfg.ladder();
    let values: Vec<Result<f64>> = ladder
        .ks()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|k| moment_value(pi, &targets, ladder.radius(k), q, cfg))
        .collect();
    ScaleSeries::new(ladder, first_err(values)?)
}

/// Headline value is `upper`.
pub fn upper_dim(pi: &DiscreteMeasure, region: &Region, q: f64, cfg: &ScaleConfig) -> Result<Estimate> {
    Estimate::from_series(moment_series(pi, region, q, cfg)?, cfg.k_lo)
}

/// Same estimate as [`upper_dim`]; headline value is `lower`.
pub fn lower_dim(pi: &DiscreteMeasure, region: &Region, q: f64, cfg: &ScaleConfig) -> Result<Estimate> {
    upper_dim(pi, region, q, cfg)
}

fn whole(pi: &DiscreteMeasure) -> Region {
    let x = Point::from(pi.atom(0));
    Region::ball(x, 2.0 * pi.diameter() + 1.0).expect("positive radius")
}

/// Upper growth exponent of the moment sums of the whole support.
pub fn tau(pi: &DiscreteMeasure, q: f64, cfg: &ScaleConfig) -> Result<Estimate> {
    upper_dim(pi, &whole(pi), q, cfg)
}

fn pick_by<T>(items: Vec<T>, key: impl Fn(&T) -> f64, smallest: bool) -> Option<T> {
    let mut best: Option<T> = None;
    for it in items {
        let better = match &best {
            None => true,
            Some(b) if smallest => key(&it) < key(b),
            Some(b) => key(&it) > key(b),
        };
        if better {
            best = Some(it);
        }
    }
    best
}

/// Smallest upper dimension over the balls `B(y_i, ρ)` of the net.
pub fn tau_loc(pi: &DiscreteMeasure, q: f64, net: &SampleNet, cfg: &ScaleConfig) -> Result<Estimate> {
    if net.is_empty() {
        return Err(Error::EmptyNet);
    }
    net.check(pi)?;
    let per_center: Vec<Result<Estimate>> =
        net.centers.par_iter().map(|c| upper_dim(pi, &Region::ball(c.clone(), net.rho)?, q, cfg)).collect();
    Ok(pick_by(first_err(per_center)?, |e| e.upper(), true).expect("net is non-empty"))
}

/// Largest local exponent over the outer balls `B(y_j, ρ)`, each computed on
/// the inner net that `inner` builds for `(y_j, ρ)`.
pub fn tau_loc_max<F>(pi: &DiscreteMeasure, q: f64, outer: &SampleNet, inner: F, cfg: &ScaleConfig) -> Result<Estimate>
where
    F: Fn(&Point, f64) -> Result<SampleNet> + Sync,
{
    if outer.is_empty() {
        return Err(Error::EmptyNet);
    }
    outer.check(pi)?;
    let per_center: Vec<Result<Estimate>> =
        outer.centers.par_iter().map(|y| tau_loc(pi, q, &inner(y, outer.rho)?, cfg)).collect();
    Ok(pick_by(first_err(per_center)?, |e| e.upper(), false).expect("net is non-empty"))
}

/// Inner net used by [`tau_loc_max`] when none is configured.
pub fn default_inner_net(pi: &DiscreteMeasure, count: usize) -> impl Fn(&Point, f64) -> Result<SampleNet> + Sync + '_ {
    move |y, rho| SampleNet::around(pi, y, rho, count)
}

/// Atom-centered ball masses at every ladder radius.
struct MassTable {
    ladder: Ladder,
    radii: Vec<f64>,
    masses: Vec<Vec<f64>>,
}

impl MassTable {
    fn new(pi: &DiscreteMeasure, cfg: &ScaleConfig) -> Result<Self> {
        cfg.validate()?;
        let ladder = cfg.ladder();
        let radii: Vec<f64> = ladder.ks().map(|k| ladder.radius(k)).collect();
        let masses = radii.par_iter().map(|&r| (0..pi.len()).map(|i| pi.ball_mass(pi.atom(i), r)).collect()).collect();
        Ok(MassTable { ladder, radii, masses })
    }

    fn global(&self, sign: Sign) -> Vec<f64> {
        self.masses.iter().map(|m| extreme(m.iter().copied(), sign)).collect()
    }

    /// Extreme ball mass over the atoms near `y`, one value per radius.
    fn local(&self, pi: &DiscreteMeasure, y: &Point, rho: f64, variant: Variant, sign: Sign) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.radii.len());
        for (s, &r) in self.radii.iter().enumerate() {
            let reach = match variant {
                Variant::CentersInBall => rho,
                Variant::BallsIntersecting => rho + r,
            };
            let mut vals = Vec::new();
            pi.for_each_near(&y.0, reach, |i, d| {
                if in_open_ball(d, reach) {
                    vals.push(self.masses[s][i]);
                }
            });
            if vals.is_empty() {
                return Err(Error::BareNetCenter { center: y.0.clone(), rho });
            }
            out.push(extreme(vals.into_iter(), sign));
        }
        Ok(out)
    }

    /// Slope of `1 / mass`, so that masses decaying like `r^s` give `s`.
    fn slope(&self, masses: Vec<f64>, k_lo: i32) -> Result<Estimate> {
        let inv = masses.into_iter().map(|m| 1.0 / m).collect();
        Estimate::from_series(ScaleSeries::new(self.ladder, inv)?, k_lo)
    }
}

fn extreme(vals: impl Iterator<Item = f64>, sign: Sign) -> f64 {
    match sign {
        Sign::Minus => vals.fold(f64::INFINITY, f64::min),
        Sign::Plus => vals.fold(f64::NEG_INFINITY, f64::max),
    }
}

fn headline(est: &Estimate, sign: Sign) -> f64 {
    match sign {
        Sign::Minus => est.upper(),
        Sign::Plus => est.lower(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Extremes {
    /// Decay of the smallest ball mass; headline `upper`.
    pub minus: Estimate,
    /// Decay of the largest ball mass; headline `lower`.
    pub plus: Estimate,
}

/// Decay exponents of the smallest and largest atom-centered ball masses over
/// the whole support. Every atom is a candidate center, so the variant does
/// not change the result.
pub fn d_extremes(pi: &DiscreteMeasure, cfg: &ScaleConfig) -> Result<Extremes> {
    let table = MassTable::new(pi, cfg)?;
    Ok(Extremes {
        minus: table.slope(table.global(Sign::Minus), cfg.k_lo)?,
        plus: table.slope(table.global(Sign::Plus), cfg.k_lo)?,
    })
}

/// Series of `[agg_i extreme mass near y_i]`, where the aggregate over net
/// centers is the largest infimum (minus) or the smallest supremum (plus).
fn net_series(
    table: &MassTable,
    pi: &DiscreteMeasure,
    net: &SampleNet,
    variant: Variant,
    sign: Sign,
) -> Result<Vec<f64>> {
    let mut agg: Option<Vec<f64>> = None;
    for y in &net.centers {
        let local = table.local(pi, y, net.rho, variant, sign)?;
        agg = Some(match agg {
            None => local,
            Some(a) => a
                .into_iter()
                .zip(local)
                .map(|(a, b)| match sign {
                    Sign::Minus => a.max(b),
                    Sign::Plus => a.min(b),
                })
                .collect(),
        });
    }
    agg.ok_or(Error::EmptyNet)
}

fn unif_over(
    table: &MassTable,
    pi: &DiscreteMeasure,
    nets: &[SampleNet],
    cfg: &ScaleConfig,
    sign: Sign,
) -> Result<Estimate> {
    if nets.is_empty() {
        return Err(Error::EmptyNet);
    }
    let ests: Vec<Result<Estimate>> =
        nets.par_iter().map(|net| table.slope(net_series(table, pi, net, cfg.variant, sign)?, cfg.k_lo)).collect();
    let ests = first_err(ests)?;
    Ok(pick_by(ests, |e| headline(e, sign), sign == Sign::Minus).expect("nets are non-empty"))
}

/// Uniform decay exponent over a family of nets: the best net is the one
/// with the smallest `upper` (minus) or largest `lower` (plus).
pub fn d_unif(pi: &DiscreteMeasure, nets: &[SampleNet], cfg: &ScaleConfig, sign: Sign) -> Result<Estimate> {
    let table = MassTable::new(pi, cfg)?;
    unif_over(&table, pi, nets, cfg, sign)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaxMin {
    pub unif_max_minus: Estimate,
    pub max_minus: Estimate,
    pub unif_min_plus: Estimate,
    pub min_plus: Estimate,
}

/// Localized versions of the uniform and pointwise decay exponents. For each
/// outer ball `B(z, κ)` the uniform quantities use the parts of `inner_nets`
/// centered inside it; the pointwise ones use the outer ball itself.
pub fn d_unif_max_min(
    pi: &DiscreteMeasure,
    outer: &SampleNet,
    inner_nets: &[SampleNet],
    cfg: &ScaleConfig,
) -> Result<MaxMin> {
    if outer.is_empty() {
        return Err(Error::EmptyNet);
    }
    let table = MassTable::new(pi, cfg)?;
    let per_outer: Vec<Result<[Option<Estimate>; 4]>> = outer
        .centers
        .par_iter()
        .map(|z| {
            let subnets: Vec<SampleNet> = inner_nets.iter().filter_map(|n| n.within(z, outer.rho)).collect();
            let (um, up) = if subnets.is_empty() {
                (None, None)
            } else {
                (
                    Some(unif_over(&table, pi, &subnets, cfg, Sign::Minus)?),
                    Some(unif_over(&table, pi, &subnets, cfg, Sign::Plus)?),
                )
            };
            let m = table.slope(table.local(pi, z, outer.rho, cfg.variant, Sign::Minus)?, cfg.k_lo)?;
            let p = table.slope(table.local(pi, z, outer.rho, cfg.variant, Sign::Plus)?, cfg.k_lo)?;
            Ok([um, Some(m), up, Some(p)])
        })
        .collect();
    let per_outer = first_err(per_outer)?;
    let column = |j: usize| per_outer.iter().filter_map(|row| row[j].clone()).collect::<Vec<_>>();
    let choose = |j: usize, sign: Sign, smallest: bool| {
        pick_by(column(j), |e| headline(e, sign), smallest).ok_or(Error::EmptyNet)
    };
    Ok(MaxMin {
        unif_max_minus: choose(0, Sign::Minus, false)?,
        max_minus: choose(1, Sign::Minus, false)?,
        unif_min_plus: choose(2, Sign::Plus, true)?,
        min_plus: choose(3, Sign::Plus, true)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DoublingReport {
    /// Largest observed `π(B(x, 2r)) / π(B(x, r))`.
    pub ratio: f64,
    /// Sample points and radii skipped because `π(B(x, r)) = 0`.
    pub skipped: usize,
}

pub fn doubling_ratio(pi: &DiscreteMeasure, sample: &[Point], cfg: &ScaleConfig) -> Result<DoublingReport> {
    cfg.validate()?;
    if sample.is_empty() {
        return Err(Error::EmptyNet);
    }
    let mut ratio: f64 = 0.0;
    let mut skipped = 0;
    for x in sample {
        for k in cfg.ladder().ks() {
            let r = cfg.radius(k);
            let small = pi.ball_mass(&x.0, r);
            if small <= 0.0 {
                skipped += 1;
                continue;
            }
            ratio = ratio.max(pi.ball_mass(&x.0, 2.0 * r) / small);
        }
    }
    if ratio == 0.0 {
        return Err(Error::InvalidInput("every sample ball had zero mass".into()));
    }
    Ok(DoublingReport { ratio, skipped })
}

/// Grid cells used as candidate sets by [`measure_dims`].
#[derive(Clone, Debug, PartialEq)]
pub struct CellSelection {
    pub frame: Frame,
    pub base: u32,
    pub level: u32,
    /// Minimum μ-mass of a cell admitted to the small dimension.
    pub mass_floor: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasureDim {
    pub value: f64,
    pub estimate: Estimate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasureDims {
    pub small: MeasureDim,
    pub big: MeasureDim,
}

fn bound_value(est: &Estimate, bound: Bound) -> f64 {
    match bound {
        Bound::Lower => est.lower(),
        Bound::Upper => est.upper(),
    }
}

/// Small and big dimensions of `mu` relative to `pi`.
///
/// Small: smallest estimate over single cells with μ-mass at least the floor.
/// Big: cells are ranked by a two-scale exponent and the highest are dropped
/// while the kept μ-mass exceeds `1 - eps`; the kept union is then estimated
/// as one set. Big is never reported below small.
pub fn measure_dims_pair(
    mu: &DiscreteMeasure,
    pi: &DiscreteMeasure,
    q: f64,
    eps: f64,
    bound: Bound,
    sel: &CellSelection,
    cfg: &ScaleConfig,
) -> Result<MeasureDims> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!("eps must lie in (0, 1), got {eps}")));
    }
    let grid = crate::measure::to_grid(mu, &sel.frame, sel.base, sel.level)?;
    let cells: Vec<(GridCell, f64)> = grid.cell_masses.into_iter().collect();
    // per cell: full estimate and the two-scale exponent between the window ends
    let per_cell: Vec<Result<Option<(Estimate, f64)>>> = cells
        .par_iter()
        .map(|(cell, _)| {
            let region = Region::cells(sel.frame.clone(), vec![cell.clone()])?;
            let series = match moment_series(pi, &region, q, cfg) {
                Ok(s) => s,
                Err(Error::EmptyRegion) => return Ok(None),
                Err(e) => return Err(e),
            };
            let (first, last) = (&series.entries[0], &series.entries[series.entries.len() - 1]);
            let coarse = (last.value.ln() - first.value.ln()) / (first.r.ln() - last.r.ln());
            Ok(Some((Estimate::from_series(series, cfg.k_lo)?, coarse)))
        })
        .collect();
    let per_cell = first_err(per_cell)?;

    let small = cells
        .iter()
        .zip(&per_cell)
        .filter(|((_, m), _)| *m >= sel.mass_floor)
        .filter_map(|(_, e)| e.as_ref().map(|(est, _)| est.clone()))
        .collect::<Vec<_>>();
    let small =
        pick_by(small, |e| bound_value(e, bound), true).ok_or(Error::NoQualifyingCell { floor: sel.mass_floor })?;
    let small = MeasureDim { value: bound_value(&small, bound), estimate: small };

    // cells without atoms of pi add nothing to a cover and are never dropped
    let coarse = |i: usize| per_cell[i].as_ref().map_or(f64::NEG_INFINITY, |(_, c)| *c);
    let mut ranked: Vec<usize> = (0..cells.len()).collect();
    ranked.sort_by(|&a, &b| coarse(b).total_cmp(&coarse(a)).then(a.cmp(&b)));
    let mut kept = vec![true; cells.len()];
    let mut retained: f64 = cells.iter().map(|(_, m)| m).sum();
    for i in ranked {
        if retained - cells[i].1 > 1.0 - eps {
            kept[i] = false;
            retained -= cells[i].1;
        } else {
            break;
        }
    }
    let keep: Vec<GridCell> = cells.iter().zip(&kept).filter(|(_, k)| **k).map(|((c, _), _)| c.clone()).collect();
    let est = upper_dim(pi, &Region::cells(sel.frame.clone(), keep)?, q, cfg)?;
    let big = MeasureDim { value: bound_value(&est, bound).max(small.value), estimate: est };
    Ok(MeasureDims { small, big })
}

#[allow(clippy::too_many_arguments)]
pub fn measure_dims(
    mu: &DiscreteMeasure,
    pi: &DiscreteMeasure,
    q: f64,
    eps: f64,
    which: Which,
    bound: Bound,
    sel: &CellSelection,
    cfg: &ScaleConfig,
) -> Result<MeasureDim> {
    let pair = measure_dims_pair(mu, pi, q, eps, bound, sel, cfg)?;
    Ok(match which {
        Which::Small => pair.small,
        Which::Big => pair.big,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(atoms: &[(f64, f64)]) -> DiscreteMeasure {
        DiscreteMeasure::from_atoms(atoms.iter().map(|&(x, w)| (Point::on_line(x), w)).collect()).unwrap()
    }

    #[test]
    fn keywords_round_trip() {
        for m in [SumMode::Covering, SumMode::Packing] {
            assert_eq!(m.to_string().parse::<SumMode>().unwrap(), m);
        }
        assert_eq!("intersecting".parse::<Variant>().unwrap(), Variant::BallsIntersecting);
        assert!("sideways".parse::<Bound>().is_err());
    }

    #[test]
    fn window_needs_three_scales() {
        assert!(matches!(ScaleConfig::new(3, 3, 4), Err(Error::TooFewScales { have: 2, need: 3 })));
        assert!(ScaleConfig::new(3, 3, 5).is_ok());
        assert!(ScaleConfig::default().with_dilation(0.0).validate().is_err());
    }

    #[test]
    fn resolution_guard_counts_coarse_radii() {
        let cfg = ScaleConfig::default();
        // 3^-5 is the third radius of the window
        assert!(cfg.check_resolution(3f64.powi(-5) / 10.0).is_ok());
        assert!(matches!(cfg.check_resolution(3f64.powi(-5) / 9.0), Err(Error::ResolutionGuard(_))));
    }

    #[test]
    fn cylinder_net_balls_hold_their_cylinders() {
        let ifs = IfsModel::cantor(0.5).unwrap();
        let net = SampleNet::cylinder_midpoints(&ifs, 2).unwrap();
        assert_eq!(net.len(), 4);
        assert!((net.centers[0].0[0] - 1.0 / 18.0).abs() < 1e-12);
        assert!(net.rho > 1.0 / 18.0 && net.rho < 1.0 / 9.0);
        let pi = ifs.build_measure(6).unwrap();
        net.check(&pi).unwrap();
        for c in &net.centers {
            assert!((pi.ball_mass(&c.0, net.rho) - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn nets_restrict_and_shrink() {
        let pi = line(&[(0.0, 0.25), (0.1, 0.25), (0.2, 0.25), (0.9, 0.25)]);
        let net = SampleNet::new(pi.points(), 0.05).unwrap();
        let near = net.within(&Point::on_line(0.0), 0.15).unwrap();
        assert_eq!(near.len(), 2);
        assert!(net.within(&Point::on_line(0.5), 0.1).is_none());
        let inner = SampleNet::around(&pi, &Point::on_line(0.1), 0.5, 8).unwrap();
        assert_eq!((inner.len(), inner.rho), (3, 0.25));
        assert!(matches!(
            SampleNet::new(vec![Point::on_line(0.5)], 0.1).unwrap().check(&pi),
            Err(Error::BareNetCenter { .. })
        ));
    }

    #[test]
    fn two_atoms_give_a_flat_local_exponent() {
        // far apart atoms: each ball holds one atom at every window radius
        let pi = line(&[(0.0, 0.5), (1.0, 0.5)]);
        let cfg = ScaleConfig::default();
        for q in [-1.0, 0.0, 2.0] {
            let est = tau(&pi, q, &cfg).unwrap();
            assert_eq!((est.lower(), est.upper()), (0.0, 0.0));
        }
        let e = d_extremes(&pi, &cfg).unwrap();
        assert_eq!((e.minus.upper(), e.plus.lower()), (0.0, 0.0));
    }

    #[test]
    fn doubling_skips_nothing_on_atoms() {
        let pi = line(&[(0.0, 0.5), (0.01, 0.5)]);
        let d = doubling_ratio(&pi, &pi.points(), &ScaleConfig::new(2, 1, 5).unwrap()).unwrap();
        assert_eq!(d.skipped, 0);
        assert!(d.ratio >= 1.0 && d.ratio <= 2.0);
    }
}
