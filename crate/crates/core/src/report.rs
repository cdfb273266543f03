//! Orchestrates the estimators over a run configuration and writes the
//! results as CSV.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{load_input, Cells, MuSpec, RunConfig, Target};
use crate::counting::SlopeEstimate;
use crate::dims::{
    d_extremes, d_unif, d_unif_max_min, default_inner_net, doubling_ratio, measure_dims_pair, tau, tau_loc,
    tau_loc_max, Bound, CellSelection, Estimate, SampleNet, ScaleConfig, Sign,
};
use crate::error::{Error, Result};
use crate::ifs::{IfsModel, OpenBox};
use crate::measure::{DiscreteMeasure, Frame, Point};
use crate::typgen::finite_net_measure;

/// Everything a report needs, loaded and validated once.
pub struct Session {
    pub config: RunConfig,
    pub pi: DiscreteMeasure,
    pub ifs: Option<IfsModel>,
    pub mu: DiscreteMeasure,
    pub frame: Frame,
    pub nets: Vec<SampleNet>,
    /// Atom spacing used by the resolution guard.
    pub resolution: f64,
}

impl Session {
    pub fn open(config: RunConfig) -> Result<Self> {
        let (pi, ifs) = load_input(&config.input)?;
        let frame = match (&config.frame, &ifs) {
            (Some(f), _) => f.clone(),
            (None, Some(m)) => m.frame(),
            (None, None) => Frame::enclosing(&pi),
        };
        let resolution = match (config.resolution, &ifs, &config.input) {
            (Some(r), _, _) => r,
            (None, Some(m), crate::config::Input::Ifs { depth, .. }) => {
                let max_ratio = m.ratios().into_iter().fold(0.0, f64::max);
                max_ratio.powi(*depth as i32) * m.diameter_bound()
            }
            _ => median_spacing(&pi),
        };
        let nets = build_nets(&config, &pi, ifs.as_ref(), &frame)?;
        let mu = build_mu(&config.cells, &pi)?;
        Ok(Session { config, pi, ifs, mu, frame, nets, resolution })
    }

    pub fn scale(&self) -> &ScaleConfig {
        &self.config.scale
    }

    pub fn check_resolution(&self) -> Result<()> {
        self.config.scale.check_resolution(self.resolution)
    }

    /// `(s_min, s_max)` of the model, when the input is an IFS.
    pub fn s_extremes(&self) -> Option<(f64, f64)> {
        self.ifs.as_ref().map(IfsModel::s_extremes)
    }

    /// `Some(true)` when the open set condition is verified on the configured
    /// box (the invariant box by default) or asserted in the config.
    pub fn osc(&self) -> Option<bool> {
        let ifs = self.ifs.as_ref()?;
        if self.config.assume_osc {
            return Some(true);
        }
        let u = match &self.config.osc_box {
            Some(b) => b.clone(),
            None => {
                let (lo, hi) = ifs.invariant_box();
                OpenBox::new(lo, hi).ok()?
            }
        };
        Some(ifs.verify_osc(&u).holds)
    }

    fn selection(&self) -> CellSelection {
        CellSelection {
            frame: self.frame.clone(),
            base: self.config.cells.base,
            level: self.config.cells.level,
            mass_floor: self.config.cells.mass_floor,
        }
    }

    /// Net for local exponents and outer balls; the others serve as inner
    /// nets of the localized quantities.
    fn local_and_inner(&self) -> Result<(&SampleNet, &[SampleNet])> {
        match self.nets.as_slice() {
            [] => Err(Error::EmptyNet),
            [only] => Ok((only, std::slice::from_ref(only))),
            [first, rest @ ..] => Ok((first, rest)),
        }
    }

    fn doubling_sample(&self) -> Vec<Point> {
        let n = self.pi.len();
        let k = self.config.nets.doubling_samples.min(n);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let mut idx = sample(&mut rng, n, k).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| Point::from(self.pi.atom(i))).collect()
    }
}

/// Median distance from an atom to its nearest neighbour.
pub fn median_spacing(pi: &DiscreteMeasure) -> f64 {
    if pi.len() < 2 {
        return 0.0;
    }
    let diam = pi.diameter();
    let mut nearest: Vec<f64> = (0..pi.len())
        .map(|i| {
            let mut reach = diam / pi.len() as f64;
            loop {
                let mut best = f64::INFINITY;
                pi.for_each_near(pi.atom(i), reach, |j, d| {
                    if j != i && d <= reach {
                        best = best.min(d);
                    }
                });
                if best.is_finite() {
                    return best;
                }
                reach *= 2.0;
            }
        })
        .collect();
    nearest.sort_by(f64::total_cmp);
    nearest[nearest.len() / 2]
}

fn build_nets(
    config: &RunConfig,
    pi: &DiscreteMeasure,
    ifs: Option<&IfsModel>,
    frame: &Frame,
) -> Result<Vec<SampleNet>> {
    let mut nets = Vec::new();
    for spec in &config.nets.explicit {
        nets.push(SampleNet::new(spec.centers.iter().cloned().map(Point::new).collect(), spec.rho)?);
    }
    if !config.nets.cylinder_depths.is_empty() {
        let ifs = ifs.ok_or_else(|| Error::Config("cylinder nets need an ifs input".into()))?;
        for &d in &config.nets.cylinder_depths {
            nets.push(SampleNet::cylinder_midpoints(ifs, d)?);
        }
    }
    for &level in &config.nets.grid_levels {
        nets.push(SampleNet::grid_cells(pi, frame, config.scale.base, level)?);
    }
    if nets.is_empty() {
        nets.push(SampleNet::grid_cells(pi, frame, config.scale.base, 1)?);
    }
    // centers without nearby atoms are reported by the estimators that use them
    Ok(nets)
}

fn build_mu(cells: &Cells, pi: &DiscreteMeasure) -> Result<DiscreteMeasure> {
    match &cells.mu {
        MuSpec::Reference => Ok(pi.clone()),
        MuSpec::FiniteNet { points, n, weights } => {
            let pts: Vec<Point> = points.iter().cloned().map(Point::new).collect();
            finite_net_measure(&pts, *n, weights.as_deref())
        }
        MuSpec::File { path } => crate::format::load_measure(path),
    }
}

/// Outcome of one report row.
#[derive(Clone, Debug, PartialEq)]
pub enum RowValue {
    /// Value read from a slope estimate over a written series.
    Slope {
        value: f64,
        estimate: Estimate,
    },
    /// Value with no slope behind it.
    Plain(f64),
    Failed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub quantity: String,
    pub q: Option<f64>,
    pub outcome: RowValue,
}

impl ReportRow {
    pub fn value(&self) -> Option<f64> {
        match &self.outcome {
            RowValue::Slope { value, .. } | RowValue::Plain(value) => Some(*value),
            RowValue::Failed(_) => None,
        }
    }

    pub fn slope(&self) -> Option<&SlopeEstimate> {
        match &self.outcome {
            RowValue::Slope { estimate, .. } => Some(&estimate.slope),
            _ => None,
        }
    }

    /// File name of the series behind this row, if any.
    pub fn series_name(&self) -> Option<String> {
        matches!(self.outcome, RowValue::Slope { .. }).then(|| match self.q {
            Some(q) => format!("{}_q{:?}.csv", self.quantity, q),
            None => format!("{}.csv", self.quantity),
        })
    }
}

/// All estimated exponents of one configuration, one row per quantity and q.
#[derive(Clone, Debug, PartialEq)]
pub struct DimReport {
    pub scale: ScaleConfig,
    pub rows: Vec<ReportRow>,
}

impl DimReport {
    pub fn get(&self, quantity: &str, q: Option<f64>) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.quantity == quantity && r.q == q)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "quantity", "q", "value", "lower", "upper", "ols", "k_lo", "k_hi", "mode", "variant", "error",
        ])?;
        let num = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_default();
        for row in &self.rows {
            let slope = row.slope();
            let error = match &row.outcome {
                RowValue::Failed(e) => e.clone(),
                _ => String::new(),
            };
            w.write_record([
                row.quantity.clone(),
                num(row.q),
                num(row.value()),
                num(slope.map(|s| s.lower)),
                num(slope.map(|s| s.upper)),
                num(slope.map(|s| s.ols)),
                self.scale.k_lo.to_string(),
                self.scale.k_hi.to_string(),
                self.scale.mode.to_string(),
                self.scale.variant.to_string(),
                error,
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `report.csv` and one series file per slope row under `series/`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        let series_dir = dir.join("series");
        fs::create_dir_all(&series_dir)?;
        self.write_csv(fs::File::create(dir.join("report.csv"))?)?;
        for row in &self.rows {
            if let (Some(name), RowValue::Slope { estimate, .. }) = (row.series_name(), &row.outcome) {
                estimate.series.write_csv(fs::File::create(series_dir.join(name))?)?;
            }
        }
        Ok(())
    }
}

struct Rows(Vec<ReportRow>);

impl Rows {
    fn slope(&mut self, quantity: impl Into<String>, q: Option<f64>, result: Result<Estimate>, sign: Sign) {
        let outcome = match result {
            Ok(estimate) => RowValue::Slope {
                value: match sign {
                    Sign::Minus => estimate.upper(),
                    Sign::Plus => estimate.lower(),
                },
                estimate,
            },
            Err(e) => RowValue::Failed(e.to_string()),
        };
        self.0.push(ReportRow { quantity: quantity.into(), q, outcome });
    }

    fn plain(&mut self, quantity: impl Into<String>, q: Option<f64>, result: Result<f64>) {
        let outcome = match result {
            Ok(v) => RowValue::Plain(v),
            Err(e) => RowValue::Failed(e.to_string()),
        };
        self.0.push(ReportRow { quantity: quantity.into(), q, outcome });
    }

    fn measured(&mut self, quantity: String, q: f64, result: Result<(f64, Estimate)>) {
        let outcome = match result {
            Ok((value, estimate)) => RowValue::Slope { value, estimate },
            Err(e) => RowValue::Failed(e.to_string()),
        };
        self.0.push(ReportRow { quantity, q: Some(q), outcome });
    }
}

/// Runs every estimator. A failing quantity becomes a row with an error
/// message; the rest of the report is still produced.
pub fn run_report(session: &Session) -> DimReport {
    let cfg = session.scale();
    let pi = &session.pi;
    let mut rows = Rows(Vec::new());
    let nets = session.local_and_inner();

    for &q in &session.config.q_grid {
        // `Sign::Minus` selects the `upper` headline
        rows.slope("tau", Some(q), tau(pi, q, cfg), Sign::Minus);
        match &nets {
            Ok((local, _)) => {
                rows.slope("tau_loc", Some(q), tau_loc(pi, q, local, cfg), Sign::Minus);
                let inner = default_inner_net(pi, session.config.nets.inner_count);
                rows.slope("tau_loc_max", Some(q), tau_loc_max(pi, q, local, inner, cfg), Sign::Minus);
            }
            Err(e) => {
                rows.plain("tau_loc", Some(q), Err(clone_err(e)));
                rows.plain("tau_loc_max", Some(q), Err(clone_err(e)));
            }
        }
        measure_rows(&mut rows, session, q);
    }

    match d_extremes(pi, cfg) {
        Ok(e) => {
            rows.slope("D_minus", None, Ok(e.minus), Sign::Minus);
            rows.slope("D_plus", None, Ok(e.plus), Sign::Plus);
        }
        Err(e) => {
            rows.plain("D_minus", None, Err(clone_err(&e)));
            rows.plain("D_plus", None, Err(e));
        }
    }
    rows.slope("D_unif_minus", None, d_unif(pi, &session.nets, cfg, Sign::Minus), Sign::Minus);
    rows.slope("D_unif_plus", None, d_unif(pi, &session.nets, cfg, Sign::Plus), Sign::Plus);
    let names = [
        ("D_unif_max_minus", Sign::Minus),
        ("D_max_minus", Sign::Minus),
        ("D_unif_min_plus", Sign::Plus),
        ("D_min_plus", Sign::Plus),
    ];
    match nets.and_then(|(local, inner)| d_unif_max_min(pi, local, inner, cfg)) {
        Ok(m) => {
            let values = [m.unif_max_minus, m.max_minus, m.unif_min_plus, m.min_plus];
            for ((name, sign), est) in names.into_iter().zip(values) {
                rows.slope(name, None, Ok(est), sign);
            }
        }
        Err(e) => {
            for (name, _) in names {
                rows.plain(name, None, Err(clone_err(&e)));
            }
        }
    }
    match doubling_ratio(pi, &session.doubling_sample(), cfg) {
        Ok(d) => {
            rows.plain("doubling_ratio", None, Ok(d.ratio));
            rows.plain("doubling_skipped", None, Ok(d.skipped as f64));
        }
        Err(e) => rows.plain("doubling_ratio", None, Err(e)),
    }
    if let Some((s_min, s_max)) = session.s_extremes() {
        rows.plain("s_min", None, Ok(s_min));
        rows.plain("s_max", None, Ok(s_max));
    }
    DimReport { scale: *cfg, rows: rows.0 }
}

fn measure_rows(rows: &mut Rows, session: &Session, q: f64) {
    let sel = session.selection();
    let ladder = &session.config.eps_ladder;
    let headline = ladder.iter().copied().fold(f64::INFINITY, f64::min);
    for bound in [Bound::Lower, Bound::Upper] {
        let mut small = None;
        let mut trend = Vec::new();
        for &eps in ladder {
            let res = measure_dims_pair(&session.mu, &session.pi, q, eps, bound, &sel, session.scale());
            match res {
                Ok(pair) => {
                    small.get_or_insert(Ok((pair.small.value, pair.small.estimate)));
                    trend.push((eps, Ok((pair.big.value, pair.big.estimate))));
                }
                Err(e) => {
                    small.get_or_insert(Err(clone_err(&e)));
                    trend.push((eps, Err(e)));
                }
            }
        }
        rows.measured(format!("small_{bound}"), q, small.expect("eps ladder is non-empty"));
        let mut head = None;
        for (eps, res) in trend {
            if eps == headline {
                head = Some(match &res {
                    Ok(v) => Ok(v.clone()),
                    Err(e) => Err(clone_err(e)),
                });
            }
            rows.measured(format!("big_{bound}@eps={eps:?}"), q, res);
        }
        rows.measured(format!("big_{bound}"), q, head.expect("headline eps is on the ladder"));
    }
}

/// Errors are not `Clone`; rows only need the message.
fn clone_err(e: &Error) -> Error {
    Error::InvalidInput(e.to_string())
}

/// One line of a verification summary.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

/// Runs the resolution guard, the open set condition check (IFS inputs that
/// name closed-form targets) and every configured expectation.
pub fn verify(session: &Session) -> (Vec<Check>, Option<DimReport>) {
    let mut checks = Vec::new();
    if let Err(e) = session.check_resolution() {
        checks.push(Check { name: "resolution".into(), passed: false, detail: e.to_string() });
        return (checks, None);
    }
    checks.push(Check {
        name: "resolution".into(),
        passed: true,
        detail: format!("atom resolution {:e}", session.resolution),
    });
    let closed_form = session.config.expect.iter().any(|e| matches!(e.target, Target::SMin | Target::SMax));
    if closed_form {
        let (passed, detail) = match session.osc() {
            Some(true) if session.config.assume_osc => (true, "asserted by config".to_string()),
            Some(true) => (true, "verified on the open box".to_string()),
            Some(false) => (false, "not verified; closed-form targets do not apply".to_string()),
            None => (false, "closed-form targets need an ifs input".to_string()),
        };
        checks.push(Check { name: "open set condition".into(), passed, detail });
    }
    let report = run_report(session);
    for e in &session.config.expect {
        let target = match (&e.target, session.s_extremes()) {
            (Target::Value(v), _) => Some(*v),
            (Target::SMin, Some((lo, _))) => Some(lo),
            (Target::SMax, Some((_, hi))) => Some(hi),
            _ => None,
        };
        let name = match e.q {
            Some(q) => format!("{}(q={q:?})", e.quantity),
            None => e.quantity.clone(),
        };
        let check = match (report.get(&e.quantity, e.q), target) {
            (None, _) => Check { name, passed: false, detail: "quantity not in report".into() },
            (_, None) => Check { name, passed: false, detail: "target needs an ifs input".into() },
            (Some(row), Some(t)) => match (&row.outcome, row.value()) {
                (RowValue::Failed(msg), _) => Check { name, passed: false, detail: msg.clone() },
                (_, Some(v)) => {
                    Check { name, passed: (v - t).abs() <= e.tol, detail: format!("{v:.5} vs {t:.5} ± {}", e.tol) }
                }
                (_, None) => unreachable!("non-failed rows carry a value"),
            },
        };
        checks.push(check);
    }
    (checks, Some(report))
}
