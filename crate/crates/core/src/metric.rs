//! Fortet–Mourier distance between finitely supported measures.
//!
//! `L(μ, ν) = sup |∫f dμ − ∫f dν|` over functions with `|f| ≤ 1` and
//! Lipschitz constant at most 1. Only the values of `f` on the union support
//! `Z` of the two measures enter the integrals, and any `g: Z → [-1, 1]` with
//! `g(z) − g(w) ≤ ‖z − w‖` on `Z` extends to the whole space with the same
//! bounds (McShane extension followed by clamping to `[-1, 1]`). The
//! supremum is therefore a finite linear program in the values `g(z)`, which
//! is solved here exactly.

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{Error, Result};
use crate::measure::{dist, enlarge, lex_cmp, region_mass, stable_sum, DiscreteMeasure, Point, Region};

pub const DEFAULT_SUPPORT_CAP: usize = 400;

/// Feasibility slack accepted when re-checking a solved witness.
pub const LP_TOL: f64 = 1e-8;

/// Values of an optimal test function on the union support.
#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzWitness {
    pub support: Vec<Point>,
    pub values: Vec<f64>,
}

impl LipschitzWitness {
    /// Largest violation of `|f| ≤ 1` and `f(z) − f(w) ≤ ‖z − w‖`.
    pub fn violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, &fi) in self.values.iter().enumerate() {
            worst = worst.max(fi.abs() - 1.0);
            for (j, &fj) in self.values.iter().enumerate() {
                if i != j {
                    worst = worst.max(fi - fj - self.support[i].dist(&self.support[j].0));
                }
            }
        }
        worst
    }

    /// `∫f dμ` with `f` read off the witness; atoms of `mu` must lie in the
    /// support.
    pub fn integrate(&self, mu: &DiscreteMeasure) -> Result<f64> {
        let terms = mu
            .atoms()
            .enumerate()
            .map(|(i, a)| {
                let at = self
                    .support
                    .binary_search_by(|p| lex_cmp(&p.0, a))
                    .map_err(|_| Error::InvalidInput(format!("atom {a:?} is not in the witness support")))?;
                Ok(self.values[at] * mu.weight(i))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(stable_sum(terms))
    }
}

/// Sorted, deduplicated union of the atoms of both measures with the signed
/// weight `μ{z} − ν{z}` of each point.
fn signed_support(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<(Vec<Point>, Vec<f64>)> {
    if mu.dim() != nu.dim() {
        return Err(Error::SizeMismatch(format!("dimensions {} and {}", mu.dim(), nu.dim())));
    }
    let mut all: Vec<(&[f64], f64)> =
        mu.atoms().zip(mu.weights().iter().copied()).chain(nu.atoms().zip(nu.weights().iter().map(|w| -w))).collect();
    all.sort_by(|a, b| lex_cmp(a.0, b.0));
    let mut points: Vec<Point> = Vec::new();
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for (a, w) in all {
        match points.last() {
            Some(p) if p.0 == a => groups.last_mut().expect("parallel").push(w),
            _ => {
                points.push(Point::from(a));
                groups.push(vec![w]);
            }
        }
    }
    Ok((points, groups.into_iter().map(stable_sum).collect()))
}

pub fn fortet_mourier(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<(f64, LipschitzWitness)> {
    fortet_mourier_capped(mu, nu, DEFAULT_SUPPORT_CAP)
}

/// Exact distance and an optimal witness; refuses supports above `cap`.
pub fn fortet_mourier_capped(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cap: usize,
) -> Result<(f64, LipschitzWitness)> {
    let (support, signed) = signed_support(mu, nu)?;
    if support.len() > cap {
        return Err(Error::SupportCapExceeded { atoms: support.len(), cap });
    }
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = signed.iter().map(|&c| lp.add_var(c, (-1.0, 1.0))).collect();
    for i in 0..support.len() {
        for j in 0..support.len() {
            let d = dist(&support[i].0, &support[j].0);
            // pairs at distance >= 2 are already implied by the bounds
            if i != j && d < 2.0 {
                lp.add_constraint([(vars[i], 1.0), (vars[j], -1.0)], ComparisonOp::Le, d);
            }
        }
    }
    let solution = lp
        .solve()
        .map_err(|e| Error::Lp(e.to_string()))?
        .into_solution()
        .map_err(|_| Error::Lp("solver stopped before optimality".into()))?;
    let values: Vec<f64> = vars.iter().map(|&v| solution.var_value(v)).collect();
    let witness = LipschitzWitness { support, values };
    let slack = witness.violation();
    if slack > LP_TOL {
        return Err(Error::Lp(format!("witness violates its constraints by {slack:e}")));
    }
    let value = stable_sum(witness.values.iter().zip(&signed).map(|(f, c)| f * c));
    if (value - solution.objective()).abs() > LP_TOL {
        return Err(Error::Lp(format!("witness integral {value} disagrees with the optimum {}", solution.objective())));
    }
    Ok((value.clamp(0.0, 2.0), witness))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnlargementReport {
    pub distance: f64,
    /// Threshold `α·β` below which the bound applies.
    pub eta: f64,
    pub applicable: bool,
    /// `μ(E)`.
    pub lhs: f64,
    /// `ν(E(α)) + β`.
    pub rhs: f64,
    /// Vacuously true when not applicable.
    pub holds: bool,
}

impl EnlargementReport {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// Checks `L(μ, ν) < αβ ⟹ μ(E) ≤ ν(E(α)) + β` on one instance.
pub fn enlargement_check(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    region: &Region,
    alpha: f64,
    beta: f64,
) -> Result<EnlargementReport> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::InvalidInput(format!("alpha and beta must be positive, got {alpha}, {beta}")));
    }
    let (distance, _) = fortet_mourier(mu, nu)?;
    let eta = alpha * beta;
    let lhs = region_mass(mu, region);
    let rhs = region_mass(nu, &enlarge(region, alpha)?) + beta;
    let applicable = distance < eta;
    Ok(EnlargementReport { distance, eta, applicable, lhs, rhs, holds: !applicable || lhs <= rhs })
}
