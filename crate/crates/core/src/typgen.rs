//! Concrete measures built the way the genericity proofs build them: weighted
//! packings that certify a lower bound on the local upper dimension, finite
//! mixtures of such pieces, finitely supported net measures and mixtures
//! localized to a ball.

use crate::counting::{pack_atoms, CandidateOrder};
use crate::error::{Error, Result};
use crate::measure::{dist, in_open_ball, lex_cmp, stable_sum, DiscreteMeasure, Point, Region, MASS_TOL};

/// Radius scan settings for [`weighted_packing_measure`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadiusScan {
    /// Radii tried are `s · base^{-j}`.
    pub base: u32,
    pub j_max: u32,
}

impl Default for RadiusScan {
    fn default() -> Self {
        RadiusScan { base: 3, j_max: 40 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedPackingMeasure {
    pub base_point: Point,
    pub scale: f64,
    pub q: f64,
    pub target: f64,
    /// First scan radius meeting the moment condition.
    pub radius: f64,
    pub steps: u32,
    pub centers: Vec<Point>,
    /// `π(B(z, radius))` for each center.
    pub ball_masses: Vec<f64>,
    /// `Σ π(B(z, radius))^q` over the centers.
    pub moment: f64,
    pub measure: DiscreteMeasure,
}

impl WeightedPackingMeasure {
    /// Recomputes ball masses by a full pass over the atoms of `pi` and checks
    /// separation and `Σ π(B(z, r))^q ≥ r^{-t}`.
    pub fn verify(&self, pi: &DiscreteMeasure) -> bool {
        let masses: Vec<f64> = self
            .centers
            .iter()
            .map(|c| {
                stable_sum(
                    pi.atoms()
                        .enumerate()
                        .filter(|(_, a)| in_open_ball(c.dist(a), self.radius))
                        .map(|(i, _)| pi.weight(i)),
                )
            })
            .collect();
        let separated = self
            .centers
            .iter()
            .enumerate()
            .all(|(i, a)| self.centers[i + 1..].iter().all(|b| dist(&a.0, &b.0) > 2.0 * self.radius));
        let inside = self.centers.iter().all(|c| in_open_ball(c.dist(&self.base_point.0), self.scale));
        let moment = stable_sum(masses.iter().map(|m| m.powf(self.q)));
        separated && inside && masses == self.ball_masses && moment >= self.radius.powf(-self.target)
    }

    /// Header recorded when the measure is written to a file.
    pub fn header(&self) -> Vec<(String, String)> {
        vec![
            ("x".into(), self.base_point.to_string()),
            ("s".into(), format!("{:?}", self.scale)),
            ("q".into(), format!("{:?}", self.q)),
            ("t".into(), format!("{:?}", self.target)),
            ("r_xs".into(), format!("{:?}", self.radius)),
        ]
    }
}

/// Scans `r = s·b^{-j}`, `j = 1, 2, …`, for the first radius at which the
/// greedy `r`-packing `Λ` of `B(x, s)` satisfies `Σ_{z∈Λ} π(B(z, r))^q ≥ r^{-t}`,
/// and returns the measure on `Λ` with weights proportional to
/// `π(B(z, r))^q`.
pub fn weighted_packing_measure(
    pi: &DiscreteMeasure,
    x: &Point,
    s: f64,
    q: f64,
    t: f64,
    scan: &RadiusScan,
) -> Result<WeightedPackingMeasure> {
    let targets = Region::ball(x.clone(), s)?.atoms_of(pi);
    if targets.is_empty() {
        return Err(Error::EmptyRegion);
    }
    if scan.base < 2 {
        return Err(Error::InvalidInput(format!("scan base must be >= 2, got {}", scan.base)));
    }
    for j in 1..=scan.j_max {
        let r = s * (scan.base as f64).powi(-(j as i32));
        let packing = pack_atoms(pi, &targets, r, q, CandidateOrder::MassAware);
        let ball_masses: Vec<f64> = packing.atoms.iter().map(|&i| pi.ball_mass(pi.atom(i), r)).collect();
        let terms: Vec<f64> = ball_masses.iter().map(|m| m.powf(q)).collect();
        let moment = stable_sum(terms.iter().copied());
        if moment >= r.powf(-t) {
            let atoms = packing.centers.iter().cloned().zip(terms.iter().map(|w| w / moment)).collect();
            return Ok(WeightedPackingMeasure {
                base_point: x.clone(),
                scale: s,
                q,
                target: t,
                radius: r,
                steps: j,
                centers: packing.centers,
                ball_masses,
                moment,
                measure: normalized(atoms)?,
            });
        }
    }
    Err(Error::UnreachableExponent { t, j_max: scan.j_max })
}

fn normalized(atoms: Vec<(Point, f64)>) -> Result<DiscreteMeasure> {
    let total = stable_sum(atoms.iter().map(|a| a.1));
    DiscreteMeasure::from_atoms(atoms.into_iter().map(|(p, w)| (p, w / total)).collect())
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::InvalidInput(format!("weight {w} is not positive")));
    }
    let total = stable_sum(weights.iter().copied());
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::WeightSum(total));
    }
    Ok(())
}

/// `Σ p_i μ_i`. Atoms shared between components are merged; atoms keep the
/// order of first appearance.
pub fn mix(components: &[(f64, DiscreteMeasure)]) -> Result<DiscreteMeasure> {
    if components.is_empty() {
        return Err(Error::InvalidInput("mixture has no components".into()));
    }
    check_weights(&components.iter().map(|c| c.0).collect::<Vec<_>>())?;
    let dim = components[0].1.dim();
    if components.iter().any(|c| c.1.dim() != dim) {
        return Err(Error::SizeMismatch("components live in different dimensions".into()));
    }
    let mut order: Vec<(&[f64], usize)> = Vec::new();
    let mut terms: Vec<Vec<f64>> = Vec::new();
    // index into `terms` by a lexicographically sorted list of seen atoms
    let mut seen: Vec<(&[f64], usize)> = Vec::new();
    for (p, mu) in components {
        for (i, a) in mu.atoms().enumerate() {
            let w = p * mu.weight(i);
            match seen.binary_search_by(|(b, _)| lex_cmp(b, a)) {
                Ok(at) => terms[seen[at].1].push(w),
                Err(at) => {
                    seen.insert(at, (a, terms.len()));
                    order.push((a, terms.len()));
                    terms.push(vec![w]);
                }
            }
        }
    }
    let atoms = order.into_iter().map(|(a, slot)| (Point::from(a), stable_sum(terms[slot].iter().copied()))).collect();
    DiscreteMeasure::from_atoms(atoms)
}

/// Measure on the first `n` sample points, uniform unless weights are given.
pub fn finite_net_measure(sample: &[Point], n: usize, weights: Option<&[f64]>) -> Result<DiscreteMeasure> {
    if n == 0 || n > sample.len() {
        return Err(Error::SizeMismatch(format!("n = {n} for a sample of {} points", sample.len())));
    }
    let weights = match weights {
        Some(w) if w.len() != n => {
            return Err(Error::SizeMismatch(format!("{} weights for {n} points", w.len())));
        }
        Some(w) => {
            check_weights(w)?;
            w.to_vec()
        }
        None => vec![1.0 / n as f64; n],
    };
    DiscreteMeasure::from_atoms(sample[..n].iter().cloned().zip(weights).collect())
}

/// `λ·inner + (1 − λ)·outer`, where `inner` lives in `B(z, κ)` and `outer`
/// stays outside `B(z, κ + margin)`.
pub fn localized_mixture(
    z: &Point,
    kappa: f64,
    margin: f64,
    lambda: f64,
    inner: &DiscreteMeasure,
    outer: &DiscreteMeasure,
) -> Result<DiscreteMeasure> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidInput(format!("lambda must lie in (0, 1], got {lambda}")));
    }
    if !(kappa > 0.0 && margin >= 0.0) {
        return Err(Error::InvalidInput(format!("need kappa > 0 and margin >= 0, got {kappa}, {margin}")));
    }
    let stray: Vec<usize> = (0..inner.len()).filter(|&i| !in_open_ball(z.dist(inner.atom(i)), kappa)).collect();
    if !stray.is_empty() {
        return Err(Error::SupportViolation { atoms: stray, reason: format!("inner atoms outside B(z, {kappa})") });
    }
    if lambda == 1.0 {
        return Ok(inner.clone());
    }
    let reach = kappa + margin;
    let close: Vec<usize> = (0..outer.len()).filter(|&i| z.dist(outer.atom(i)) < reach).collect();
    if !close.is_empty() {
        return Err(Error::SupportViolation { atoms: close, reason: format!("outer atoms inside B(z, {reach})") });
    }
    mix(&[(lambda, inner.clone()), (1.0 - lambda, outer.clone())])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::IfsModel;
    use crate::measure::region_mass;

    fn dirac(x: f64) -> DiscreteMeasure {
        DiscreteMeasure::dirac(Point::on_line(x))
    }

    #[test]
    fn packing_measure_on_cantor() {
        let pi = IfsModel::cantor(0.5).unwrap().build_measure(10).unwrap();
        let m = weighted_packing_measure(&pi, &Point::on_line(0.0), 1.0, 0.0, 0.5, &RadiusScan::default()).unwrap();
        assert_eq!(m.steps, 1);
        assert!(m.verify(&pi));
        let w = m.measure.weight(0);
        assert!(m.measure.weights().iter().all(|&v| v == w));
    }

    #[test]
    fn packing_measure_scan_fails_above_box_dimension() {
        let pi = IfsModel::cantor(0.5).unwrap().build_measure(8).unwrap();
        let err = weighted_packing_measure(&pi, &Point::on_line(0.0), 1.0, 0.0, 0.7, &RadiusScan::default());
        assert!(matches!(err, Err(Error::UnreachableExponent { j_max: 40, .. })));
    }

    #[test]
    fn mix_examples() {
        let single = mix(&[(1.0, dirac(0.3))]).unwrap();
        assert_eq!(single, dirac(0.3));
        let two = mix(&[(0.5, dirac(0.0)), (0.5, dirac(1.0))]).unwrap();
        assert_eq!(two.weights(), &[0.5, 0.5]);
        assert!(matches!(mix(&[(0.5, dirac(0.0)), (0.4, dirac(1.0))]), Err(Error::WeightSum(_))));
    }

    #[test]
    fn mix_merges_shared_atoms() {
        let a = DiscreteMeasure::uniform(&[Point::on_line(0.0), Point::on_line(1.0)]).unwrap();
        let m = mix(&[(0.5, a), (0.5, dirac(1.0))]).unwrap();
        assert_eq!(m.len(), 2);
        assert!((m.weight(1) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn net_measure_examples() {
        let pts: Vec<Point> = (0..5).map(|i| Point::on_line(i as f64)).collect();
        assert_eq!(finite_net_measure(&pts, 1, None).unwrap(), dirac(0.0));
        let four = finite_net_measure(&pts, 4, None).unwrap();
        assert_eq!(four.weights(), &[0.25; 4]);
        assert!(finite_net_measure(&pts, 6, None).is_err());

        let pi = IfsModel::cantor(0.5).unwrap().build_measure(3).unwrap();
        assert_eq!(finite_net_measure(&pi.points(), 8, None).unwrap(), pi);
    }

    #[test]
    fn localized_examples() {
        let z = Point::on_line(0.0);
        let inner = dirac(0.0);
        assert_eq!(localized_mixture(&z, 0.1, 0.2, 1.0, &inner, &dirac(0.05)).unwrap(), inner);
        let m = localized_mixture(&z, 0.1, 0.2, 0.5, &inner, &dirac(1.0)).unwrap();
        assert_eq!(m.weights(), &[0.5, 0.5]);
        assert_eq!(region_mass(&m, &Region::ball(z.clone(), 0.1).unwrap()), 0.5);
        let err = localized_mixture(&z, 0.1, 0.2, 0.5, &inner, &dirac(0.25)).unwrap_err();
        assert!(matches!(err, Error::SupportViolation { ref atoms, .. } if atoms == &[0]));
    }
}
