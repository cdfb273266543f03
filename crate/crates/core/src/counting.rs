//! Covering and packing moment sums at a fixed radius, and slope extraction
//! from geometric scale ladders.
//!
//! Centers are always atoms of the reference measure lying in the target
//! region. The exact infimum over covers and supremum over packings are
//! replaced by greedy constructions: the greedy cover value bounds the true
//! infimum from above, the greedy packing value bounds the true supremum from
//! below.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::measure::{lex_cmp, stable_sum, DiscreteMeasure, Point, Region, BOUNDARY_RTOL};

/// How greedy passes order candidates that the primary criterion ties.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CandidateOrder {
    /// Ball mass decides first (direction set by the sign of `q`), then
    /// coordinates.
    #[default]
    MassAware,
    /// Coordinates only; the same centers are chosen for every `q`.
    Lexicographic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PackingResult {
    pub centers: Vec<Point>,
    /// Atom indices of the centers, in selection order.
    pub atoms: Vec<usize>,
    pub radius: f64,
    pub separation_ok: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoverResult {
    /// Atom indices of the centers, in selection order.
    pub atoms: Vec<usize>,
    /// `π(B(x_i, r))` for each center.
    pub masses: Vec<f64>,
    pub radius: f64,
}

impl CoverResult {
    pub fn moment(&self, pi: &DiscreteMeasure, q: f64) -> Result<f64> {
        moment_sum(pi, &self.atoms, &self.masses, self.radius, q)
    }
}

fn moment_sum(pi: &DiscreteMeasure, atoms: &[usize], masses: &[f64], r: f64, q: f64) -> Result<f64> {
    if q < 0.0 {
        if let Some(i) = masses.iter().position(|m| *m <= 0.0) {
            return Err(Error::ZeroMassNegativeMoment { center: pi.atom(atoms[i]).to_vec(), radius: r, q });
        }
    }
    Ok(stable_sum(masses.iter().map(|m| m.powf(q))))
}

fn targets_of(pi: &DiscreteMeasure, region: &Region) -> Result<Vec<usize>> {
    let t = region.atoms_of(pi);
    if t.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok(t)
}

fn lex_order(pi: &DiscreteMeasure, atoms: &[usize]) -> Vec<usize> {
    let mut v = atoms.to_vec();
    v.sort_by(|&a, &b| lex_cmp(pi.atom(a), pi.atom(b)).then(a.cmp(&b)));
    v
}

pub fn greedy_packing(pi: &DiscreteMeasure, region: &Region, r: f64, q: f64) -> Result<PackingResult> {
    greedy_packing_with(pi, region, r, q, CandidateOrder::MassAware)
}

/// Maximal set of atoms of `region` with pairwise distances `> 2r`, built by
/// scanning candidates in priority order.
pub fn greedy_packing_with(
    pi: &DiscreteMeasure,
    region: &Region,
    r: f64,
    q: f64,
    order: CandidateOrder,
) -> Result<PackingResult> {
    check_radius(r)?;
    let targets = targets_of(pi, region)?;
    Ok(pack_atoms(pi, &targets, r, q, order))
}

pub(crate) fn pack_atoms(
    pi: &DiscreteMeasure,
    targets: &[usize],
    r: f64,
    q: f64,
    order: CandidateOrder,
) -> PackingResult {
    let mut cands = lex_order(pi, targets);
    if order == CandidateOrder::MassAware {
        let mass: Vec<f64> = cands.iter().map(|&i| pi.ball_mass(pi.atom(i), r)).collect();
        let mut keyed: Vec<(f64, usize)> = mass.into_iter().zip(cands.iter().copied()).collect();
        // stable sort keeps the lexicographic order among equal masses
        if q >= 0.0 {
            keyed.sort_by(|a, b| b.0.total_cmp(&a.0));
        } else {
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        cands = keyed.into_iter().map(|(_, i)| i).collect();
    }
    let sep = 2.0 * r * (1.0 + BOUNDARY_RTOL);
    let mut blocked = vec![false; pi.len()];
    let mut chosen = Vec::new();
    for c in cands {
        if blocked[c] {
            continue;
        }
        chosen.push(c);
        pi.for_each_near(pi.atom(c), sep, |j, d| {
            if d <= sep {
                blocked[j] = true;
            }
        });
    }
    let separation_ok = chosen
        .iter()
        .enumerate()
        .all(|(a, &i)| chosen[a + 1..].iter().all(|&j| crate::measure::dist(pi.atom(i), pi.atom(j)) > 2.0 * r));
    PackingResult {
        centers: chosen.iter().map(|&i| Point::from(pi.atom(i))).collect(),
        atoms: chosen,
        radius: r,
        separation_ok,
    }
}

pub fn packing_sum(pi: &DiscreteMeasure, region: &Region, r: f64, q: f64, c: f64) -> Result<f64> {
    packing_sum_with(pi, region, r, q, c, CandidateOrder::MassAware)
}

/// `Σ π(B(x_i, c·r))^q` over the greedy `r`-packing of `region`.
pub fn packing_sum_with(
    pi: &DiscreteMeasure,
    region: &Region,
    r: f64,
    q: f64,
    c: f64,
    order: CandidateOrder,
) -> Result<f64> {
    check_radius(r)?;
    check_radius(c)?;
    let targets = targets_of(pi, region)?;
    packing_sum_atoms(pi, &targets, r, q, c, order)
}

pub(crate) fn packing_sum_atoms(
    pi: &DiscreteMeasure,
    targets: &[usize],
    r: f64,
    q: f64,
    c: f64,
    order: CandidateOrder,
) -> Result<f64> {
    let packing = pack_atoms(pi, targets, r, q, order);
    let masses: Vec<f64> = packing.atoms.iter().map(|&i| pi.ball_mass(pi.atom(i), c * r)).collect();
    moment_sum(pi, &packing.atoms, &masses, c * r, q)
}

pub fn covering_sum(pi: &DiscreteMeasure, region: &Region, r: f64, q: f64) -> Result<f64> {
    covering_sum_with(pi, region, r, q, CandidateOrder::MassAware)
}

pub fn covering_sum_with(pi: &DiscreteMeasure, region: &Region, r: f64, q: f64, order: CandidateOrder) -> Result<f64> {
    check_radius(r)?;
    let targets = targets_of(pi, region)?;
    greedy_cover_atoms(pi, &targets, r, q, order).moment(pi, q)
}

pub fn greedy_cover(
    pi: &DiscreteMeasure,
    region: &Region,
    r: f64,
    q: f64,
    order: CandidateOrder,
) -> Result<CoverResult> {
    check_radius(r)?;
    let targets = targets_of(pi, region)?;
    Ok(greedy_cover_atoms(pi, &targets, r, q, order))
}

fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("radius must be positive, got {r}")))
    }
}

#[derive(PartialEq)]
struct Candidate {
    count: usize,
    mass_key: f64,
    lex_rank: usize,
    atom: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then(self.mass_key.total_cmp(&other.mass_key))
            .then(other.lex_rank.cmp(&self.lex_rank))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lazy greedy set cover: repeatedly take the atom-centered ball covering the
/// most uncovered targets. Counts only decrease, so a popped candidate whose
/// refreshed count equals its key is a true maximizer.
pub(crate) fn greedy_cover_atoms(
    pi: &DiscreteMeasure,
    targets: &[usize],
    r: f64,
    q: f64,
    order: CandidateOrder,
) -> CoverResult {
    let mut is_target = vec![false; pi.len()];
    for &t in targets {
        is_target[t] = true;
    }
    let mut covered = vec![false; pi.len()];
    let lex = lex_order(pi, targets);
    let mut heap = BinaryHeap::with_capacity(targets.len());
    let mut mass_of = vec![0.0; pi.len()];
    for (rank, &a) in lex.iter().enumerate() {
        let mut count = 0;
        let mut terms = Vec::new();
        pi.for_each_in_ball(pi.atom(a), r, |j| {
            terms.push(pi.weight(j));
            if is_target[j] {
                count += 1;
            }
        });
        let mass = stable_sum(terms);
        mass_of[a] = mass;
        let mass_key = match order {
            CandidateOrder::Lexicographic => 0.0,
            // q >= 0 prefers lighter balls, q < 0 heavier ones
            CandidateOrder::MassAware if q >= 0.0 => -mass,
            CandidateOrder::MassAware => mass,
        };
        heap.push(Candidate { count, mass_key, lex_rank: rank, atom: a });
    }
    let mut remaining = targets.len();
    let mut atoms = Vec::new();
    let mut masses = Vec::new();
    while remaining > 0 {
        let Some(mut top) = heap.pop() else { break };
        let mut fresh = 0;
        pi.for_each_in_ball(pi.atom(top.atom), r, |j| {
            if is_target[j] && !covered[j] {
                fresh += 1;
            }
        });
        if fresh == top.count {
            pi.for_each_in_ball(pi.atom(top.atom), r, |j| {
                if is_target[j] && !covered[j] {
                    covered[j] = true;
                    remaining -= 1;
                }
            });
            atoms.push(top.atom);
            masses.push(mass_of[top.atom]);
        } else if fresh > 0 {
            top.count = fresh;
            heap.push(top);
        }
    }
    CoverResult { atoms, masses, radius: r }
}

/// Whether `x` lies within distance `r` (open) of some atom in `atoms`.
#[cfg(test)]
pub(crate) fn near_any(pi: &DiscreteMeasure, atoms: &[usize], x: &[f64], r: f64) -> bool {
    atoms.iter().any(|&i| crate::measure::in_open_ball(crate::measure::dist(pi.atom(i), x), r))
}

/// Radius ladder `r_k = base^{-k}` for `k = k_lo..=k_hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ladder {
    pub base: u32,
    pub k_lo: i32,
    pub k_hi: i32,
}

impl Ladder {
    pub fn new(base: u32, k_lo: i32, k_hi: i32) -> Result<Self> {
        if base < 2 {
            return Err(Error::InvalidInput(format!("ladder base must be >= 2, got {base}")));
        }
        if k_lo >= k_hi {
            return Err(Error::InvalidInput(format!("ladder window [{k_lo}, {k_hi}] is empty")));
        }
        Ok(Ladder { base, k_lo, k_hi })
    }

    pub fn radius(&self, k: i32) -> f64 {
        (self.base as f64).powi(-k)
    }

    pub fn ks(&self) -> impl Iterator<Item = i32> {
        self.k_lo..=self.k_hi
    }

    pub fn len(&self) -> usize {
        (self.k_hi - self.k_lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleEntry {
    pub k: i32,
    pub r: f64,
    pub value: f64,
}

/// Values sampled on a geometric radius ladder.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleSeries {
    pub ladder: Ladder,
    pub entries: Vec<ScaleEntry>,
}

impl ScaleSeries {
    pub fn new(ladder: Ladder, values: Vec<f64>) -> Result<Self> {
        if values.len() != ladder.len() {
            return Err(Error::SizeMismatch(format!("{} values for {} scales", values.len(), ladder.len())));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput(format!("series value {v} is not positive")));
        }
        let entries = ladder.ks().zip(values).map(|(k, value)| ScaleEntry { k, r: ladder.radius(k), value }).collect();
        Ok(ScaleSeries { ladder, entries })
    }

    /// Evaluates `f` at every ladder radius.
    pub fn sample(ladder: Ladder, mut f: impl FnMut(f64) -> Result<f64>) -> Result<Self> {
        let values = ladder.ks().map(|k| f(ladder.radius(k))).collect::<Result<Vec<_>>>()?;
        Self::new(ladder, values)
    }

    /// Pointwise product.
    pub fn product(&self, other: &ScaleSeries) -> Result<Self> {
        if self.ladder != other.ladder {
            return Err(Error::SizeMismatch("series on different ladders".into()));
        }
        let values = self.entries.iter().zip(&other.entries).map(|(a, b)| a.value * b.value).collect();
        Self::new(self.ladder, values)
    }

    /// CSV with columns `k, r, value, log_value, minus_log_r`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "r", "value", "log_value", "minus_log_r"])?;
        for e in &self.entries {
            w.write_record([
                e.k.to_string(),
                format!("{:?}", e.r),
                format!("{:?}", e.value),
                format!("{:?}", e.value.ln()),
                format!("{:?}", -e.r.ln()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Bracket of the growth exponent of a series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlopeEstimate {
    /// Smallest local slope in the window.
    pub lower: f64,
    /// Largest local slope in the window.
    pub upper: f64,
    /// Least-squares slope of `log value` against `-log r`.
    pub ols: f64,
    pub window: (i32, i32),
}

impl SlopeEstimate {
    pub fn constant(value: f64, window: (i32, i32)) -> Self {
        SlopeEstimate { lower: value, upper: value, ols: value, window }
    }
}

/// Local slopes `σ_k = Δ log value / Δ(-log r)` over consecutive scales with
/// `k >= k_lo`.
pub fn slope_bounds(series: &ScaleSeries, k_lo: i32) -> Result<SlopeEstimate> {
    let pts: Vec<(i32, f64, f64)> =
        series.entries.iter().filter(|e| e.k >= k_lo).map(|e| (e.k, -e.r.ln(), e.value.ln())).collect();
    if pts.len() < 3 {
        return Err(Error::TooFewScales { have: pts.len(), need: 3 });
    }
    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    for w in pts.windows(2) {
        let s = (w[1].2 - w[0].2) / (w[1].1 - w[0].1);
        lower = lower.min(s);
        upper = upper.max(s);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.2).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.1 - mx) * (p.2 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.1 - mx) * (p.1 - mx)).sum();
    // on an evenly spaced ladder the OLS slope is a convex combination of the
    // local slopes; clamping only removes rounding
    let ols = (sxy / sxx).clamp(lower, upper);
    Ok(SlopeEstimate { lower, upper, ols, window: (pts[0].0, pts[pts.len() - 1].0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::IfsModel;

    fn line(xs: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::uniform(&xs.iter().map(|&x| Point::on_line(x)).collect::<Vec<_>>()).unwrap()
    }

    fn everything() -> Region {
        Region::ball(Point::on_line(0.5), 100.0).unwrap()
    }

    #[test]
    fn packing_examples() {
        let pi = line(&[0.0, 1.0]);
        let p = greedy_packing(&pi, &everything(), 0.4, 1.0).unwrap();
        assert_eq!(p.centers.len(), 2);
        assert!(p.separation_ok);

        let pi = line(&[0.0, 0.1]);
        let p = greedy_packing(&pi, &everything(), 0.4, 1.0).unwrap();
        assert_eq!(p.centers.len(), 1);
    }

    #[test]
    fn packing_one_center_per_cylinder() {
        let pi = IfsModel::cantor(0.5).unwrap().build_measure(6).unwrap();
        let r = 3f64.powi(-3);
        let p = greedy_packing(&pi, &everything(), r, 0.0).unwrap();
        assert_eq!(p.centers.len(), 8);
        let mut cyl: Vec<i64> = p.centers.iter().map(|c| (c.0[0] * 27.0 + 1e-9).floor() as i64).collect();
        cyl.sort();
        cyl.dedup();
        assert_eq!(cyl.len(), 8);
    }

    #[test]
    fn packing_sum_examples() {
        let pi = line(&[0.0, 0.3, 0.9, 2.0]);
        let count = greedy_packing(&pi, &everything(), 0.2, 0.0).unwrap().centers.len();
        assert_eq!(packing_sum(&pi, &everything(), 0.2, 0.0, 1.0).unwrap(), count as f64);

        let pi = IfsModel::cantor(0.5).unwrap().build_measure(8).unwrap();
        let s = packing_sum(&pi, &everything(), 3f64.powi(-3), 1.0, 1.0).unwrap();
        assert!((s - 1.0).abs() < 1e-12);

        let single = DiscreteMeasure::dirac(Point::on_line(0.2));
        for q in [-2.0, 0.0, 3.0] {
            assert_eq!(packing_sum(&single, &everything(), 0.01, q, 1.5).unwrap(), 1.0);
        }
    }

    #[test]
    fn covering_examples() {
        let pi = line(&[0.0, 1.0]);
        assert_eq!(covering_sum(&pi, &everything(), 0.6, 0.0).unwrap(), 2.0);

        let pi = line(&[0.0, 0.3, 0.5]);
        let e = Region::points(vec![Point::on_line(0.3)]).unwrap();
        for q in [-1.0, 0.5, 2.0] {
            let want = pi.ball_mass(&[0.3], 0.25).powf(q);
            assert_eq!(covering_sum(&pi, &e, 0.25, q).unwrap(), want);
        }
    }

    #[test]
    fn empty_region_is_an_error() {
        let pi = line(&[0.0, 1.0]);
        let e = Region::ball(Point::on_line(5.0), 0.1).unwrap();
        assert!(matches!(covering_sum(&pi, &e, 0.1, 0.0), Err(Error::EmptyRegion)));
        assert!(matches!(greedy_packing(&pi, &e, 0.1, 0.0), Err(Error::EmptyRegion)));
    }

    #[test]
    fn cover_result_covers_every_target() {
        let pi = IfsModel::cantor(0.3).unwrap().build_measure(7).unwrap();
        let cov = greedy_cover(&pi, &everything(), 0.02, 1.0, CandidateOrder::MassAware).unwrap();
        for i in 0..pi.len() {
            assert!(near_any(&pi, &cov.atoms, pi.atom(i), 0.02));
        }
    }

    #[test]
    fn slope_examples() {
        let ladder = Ladder::new(3, 1, 8).unwrap();
        let s = ScaleSeries::sample(ladder, |r| Ok(r.powf(-0.5))).unwrap();
        let est = slope_bounds(&s, 1).unwrap();
        for v in [est.lower, est.upper, est.ols] {
            assert!((v - 0.5).abs() < 1e-12);
        }
        let s = ScaleSeries::new(ladder, vec![7.0; 8]).unwrap();
        let est = slope_bounds(&s, 1).unwrap();
        assert_eq!((est.lower, est.upper, est.ols), (0.0, 0.0, 0.0));
        assert_eq!(est.window, (1, 8));
    }

    #[test]
    fn alternating_series_brackets() {
        // value_k = r_k^{-1/2} · b^{±0.15}: local slopes alternate 0.5 ± 0.3
        let base = 2u32;
        let ladder = Ladder::new(base, 0, 9).unwrap();
        let s = ScaleSeries::sample(ladder, |r| {
            let k = (-r.log2()).round() as i32;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            Ok(r.powf(-0.5) * (base as f64).powf(0.15 * sign))
        })
        .unwrap();
        let est = slope_bounds(&s, 0).unwrap();
        assert!((est.lower - 0.2).abs() < 1e-12);
        assert!((est.upper - 0.8).abs() < 1e-12);
        // OLS over k = 0..9 of 0.5k + 0.15(-1)^k, computed by hand:
        // Σ(k-4.5)(-1)^k = -5, Σ(k-4.5)^2 = 82.5 → 0.5 - 0.15·5/82.5
        assert!((est.ols - (0.5 - 0.75 / 82.5)).abs() < 1e-12);
    }

    #[test]
    fn too_few_scales() {
        let ladder = Ladder::new(2, 0, 5).unwrap();
        let s = ScaleSeries::new(ladder, vec![1.0; 6]).unwrap();
        assert!(matches!(slope_bounds(&s, 4), Err(Error::TooFewScales { have: 2, need: 3 })));
    }

    #[test]
    fn series_rejects_nonpositive_values() {
        let ladder = Ladder::new(2, 0, 2).unwrap();
        assert!(ScaleSeries::new(ladder, vec![1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn series_csv_header() {
        let ladder = Ladder::new(3, 1, 3).unwrap();
        let s = ScaleSeries::new(ladder, vec![2.0, 4.0, 8.0]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,r,value,log_value,minus_log_r\n1,"));
        assert_eq!(text.lines().count(), 4);
    }
}
