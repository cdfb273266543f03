//! Finitely supported measures, point sets and grid discretization.
//!
//! Balls are open and Euclidean. A point whose distance to the center lies in
//! the band `[r(1 - BOUNDARY_RTOL), r)` is treated as outside, so lattice
//! coordinates that are exact multiples of the radius in real arithmetic but
//! carry rounding noise land on the same side of every ball boundary.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Relative width of the boundary band treated as outside an open ball.
pub const BOUNDARY_RTOL: f64 = 1e-9;

/// Tolerance on the total mass of a measure.
pub const MASS_TOL: f64 = 1e-9;

/// Snap (in cell units) applied before flooring grid coordinates.
const CELL_SNAP: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn on_line(x: f64) -> Self {
        Point(vec![x])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dist(&self, other: &[f64]) -> f64 {
        dist(&self.0, other)
    }
}

impl From<&[f64]> for Point {
    fn from(c: &[f64]) -> Self {
        Point(c.to_vec())
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Euclidean distance.
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[inline]
pub(crate) fn in_open_ball(d: f64, r: f64) -> bool {
    d < r * (1.0 - BOUNDARY_RTOL)
}

/// Lexicographic comparison of coordinate tuples.
pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Neumaier-compensated sum; result depends only on the iteration order.
pub fn stable_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Axis-aligned cube that frames the support; every grid level refines it.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    lo: Vec<f64>,
    side: f64,
}

impl Frame {
    pub fn new(lo: Vec<f64>, side: f64) -> Result<Self> {
        if lo.is_empty() || lo.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("frame corner must be finite and non-empty".into()));
        }
        if !(side > 0.0 && side.is_finite()) {
            return Err(Error::InvalidInput(format!("frame side must be positive, got {side}")));
        }
        Ok(Frame { lo, side })
    }

    /// Smallest cube with lower corner at the coordinate-wise minimum that
    /// contains every atom.
    pub fn enclosing(measure: &DiscreteMeasure) -> Self {
        let d = measure.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for a in measure.atoms() {
            for j in 0..d {
                lo[j] = lo[j].min(a[j]);
                hi[j] = hi[j].max(a[j]);
            }
        }
        let side = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0f64, f64::max);
        Frame { lo, side: if side > 0.0 { side } else { 1.0 } }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    fn cells_per_axis(base: u32, level: u32) -> Result<i64> {
        (base as i64)
            .checked_pow(level)
            .filter(|n| *n < (1i64 << 52))
            .ok_or_else(|| Error::InvalidInput(format!("grid level {level} too fine for base {base}")))
    }

    /// The half-open, lower-inclusive cell of `(base, level)` containing `x`.
    /// The top face of the frame is assigned to the last cell.
    pub fn cell_of(&self, x: &[f64], base: u32, level: u32) -> Result<GridCell> {
        if base < 2 {
            return Err(Error::InvalidInput(format!("grid base must be >= 2, got {base}")));
        }
        let n = Self::cells_per_axis(base, level)?;
        let mut index = Vec::with_capacity(x.len());
        for (j, c) in x.iter().enumerate() {
            let t = (c - self.lo[j]) / self.side * n as f64;
            let mut i = (t + CELL_SNAP).floor() as i64;
            if i == n && t <= n as f64 * (1.0 + CELL_SNAP) {
                i = n - 1;
            }
            if t < -CELL_SNAP || i < 0 || i >= n {
                return Err(Error::OutsideBoundingBox { atom: x.to_vec() });
            }
            index.push(i);
        }
        Ok(GridCell { base, level, index })
    }

    pub fn cell_side(&self, cell: &GridCell) -> f64 {
        self.side / (cell.base as f64).powi(cell.level as i32)
    }

    pub fn cell_center(&self, cell: &GridCell) -> Point {
        let w = self.cell_side(cell);
        Point(cell.index.iter().zip(&self.lo).map(|(&i, lo)| lo + (i as f64 + 0.5) * w).collect())
    }

    pub fn cell_diameter(&self, cell: &GridCell) -> f64 {
        self.cell_side(cell) * (cell.index.len() as f64).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridCell {
    pub base: u32,
    pub level: u32,
    pub index: Vec<i64>,
}

/// Finitely many positive weights on points of R^d, summing to one.
#[derive(Clone, Debug)]
pub struct DiscreteMeasure {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
    // atom indices sorted by first coordinate, then index
    sweep: Vec<usize>,
    sweep_x0: Vec<f64>,
}

impl PartialEq for DiscreteMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.coords == other.coords && self.weights == other.weights
    }
}

impl DiscreteMeasure {
    /// `coords` holds `weights.len()` points of dimension `dim`, row by row.
    pub fn new(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMeasure("ambient dimension must be >= 1".into()));
        }
        if weights.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        if coords.len() != dim * weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} coordinates for {} atoms of dimension {dim}",
                coords.len(),
                weights.len()
            )));
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidMeasure(format!("non-finite coordinate {c}")));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidMeasure(format!("weight {w} is not positive")));
        }
        let total = stable_sum(weights.iter().copied());
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}")));
        }
        let mut sweep: Vec<usize> = (0..weights.len()).collect();
        sweep.sort_by(|&a, &b| coords[a * dim].total_cmp(&coords[b * dim]).then(a.cmp(&b)));
        let sweep_x0 = sweep.iter().map(|&i| coords[i * dim]).collect();
        Ok(DiscreteMeasure { dim, coords, weights, sweep, sweep_x0 })
    }

    pub fn from_atoms(atoms: Vec<(Point, f64)>) -> Result<Self> {
        let dim = atoms.first().map(|(p, _)| p.dim()).ok_or_else(|| Error::InvalidMeasure("no atoms".into()))?;
        let mut coords = Vec::with_capacity(atoms.len() * dim);
        let mut weights = Vec::with_capacity(atoms.len());
        for (p, w) in atoms {
            if p.dim() != dim {
                return Err(Error::InvalidMeasure("atoms of mixed dimension".into()));
            }
            coords.extend_from_slice(&p.0);
            weights.push(w);
        }
        Self::new(dim, coords, weights)
    }

    /// Unit mass at `x`.
    pub fn dirac(x: Point) -> Self {
        let dim = x.dim();
        Self::new(dim, x.0, vec![1.0]).expect("a single finite atom is a valid measure")
    }

    /// Uniform weights on the given points.
    pub fn uniform(points: &[Point]) -> Result<Self> {
        let w = 1.0 / points.len().max(1) as f64;
        Self::from_atoms(points.iter().map(|p| (p.clone(), w)).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn points(&self) -> Vec<Point> {
        self.atoms().map(Point::from).collect()
    }

    /// Indices of atoms strictly inside `B(x, r)`, in sweep order.
    pub fn ball_indices(&self, x: &[f64], r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_in_ball(x, r, |i| out.push(i));
        out
    }

    pub(crate) fn for_each_in_ball(&self, x: &[f64], r: f64, mut f: impl FnMut(usize)) {
        self.for_each_near(x, r, |i, d| {
            if in_open_ball(d, r) {
                f(i);
            }
        });
    }

    /// Visits every atom whose first coordinate is within `reach` of `x`'s,
    /// passing its index and distance to `x`, in sweep order.
    pub(crate) fn for_each_near(&self, x: &[f64], reach: f64, mut f: impl FnMut(usize, f64)) {
        let x0 = x[0];
        let start = self.sweep_x0.partition_point(|v| *v < x0 - reach);
        let end = self.sweep_x0.partition_point(|v| *v <= x0 + reach);
        for &i in &self.sweep[start..end.max(start)] {
            f(i, dist(self.atom(i), x));
        }
    }

    /// `π(B(x, r))`: the weight of atoms strictly inside the open ball.
    pub fn ball_mass(&self, x: &[f64], r: f64) -> f64 {
        let mut terms = Vec::new();
        self.for_each_in_ball(x, r, |i| terms.push(self.weights[i]));
        stable_sum(terms)
    }

    /// Largest pairwise distance between atoms.
    pub fn diameter(&self) -> f64 {
        if self.dim == 1 {
            let lo = self.sweep_x0[0];
            let hi = self.sweep_x0[self.len() - 1];
            return hi - lo;
        }
        let mut best = 0.0f64;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                best = best.max(dist(self.atom(i), self.atom(j)));
            }
        }
        best
    }
}

/// `π(B(x, r))` over the open Euclidean ball.
pub fn ball_mass(pi: &DiscreteMeasure, x: &Point, r: f64) -> f64 {
    pi.ball_mass(&x.0, r)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

/// Finite union of open balls, single points and grid cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    balls: Vec<Ball>,
    points: Vec<Point>,
    cells: Vec<GridCell>,
    frame: Option<Frame>,
}

impl Region {
    pub fn ball(center: Point, radius: f64) -> Result<Self> {
        Self::from_balls(vec![Ball { center, radius }])
    }

    pub fn from_balls(balls: Vec<Ball>) -> Result<Self> {
        if balls.is_empty() {
            return Err(Error::InvalidInput("region needs at least one constituent".into()));
        }
        if let Some(b) = balls.iter().find(|b| !(b.radius > 0.0)) {
            return Err(Error::InvalidInput(format!("ball radius must be positive, got {}", b.radius)));
        }
        Ok(Region { balls, points: Vec::new(), cells: Vec::new(), frame: None })
    }

    /// A degenerate region made of isolated points.
    pub fn points(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("region needs at least one constituent".into()));
        }
        Ok(Region { balls: Vec::new(), points, cells: Vec::new(), frame: None })
    }

    pub fn cells(frame: Frame, cells: Vec<GridCell>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InvalidInput("region needs at least one constituent".into()));
        }
        Ok(Region { balls: Vec::new(), points: Vec::new(), cells, frame: Some(frame) })
    }

    /// Union of two regions. Cell constituents must share a frame.
    pub fn union(mut self, other: Region) -> Result<Self> {
        if !other.cells.is_empty() {
            match (&self.frame, &other.frame) {
                (Some(a), Some(b)) if a != b => {
                    return Err(Error::InvalidInput("cannot unite cells of different frames".into()))
                }
                (None, f) => self.frame = f.clone(),
                _ => {}
            }
        }
        self.balls.extend(other.balls);
        self.points.extend(other.points);
        self.cells.extend(other.cells);
        Ok(self)
    }

    pub fn constituent_balls(&self) -> &[Ball] {
        &self.balls
    }

    pub fn constituent_points(&self) -> &[Point] {
        &self.points
    }

    pub fn constituent_cells(&self) -> &[GridCell] {
        &self.cells
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if self.balls.iter().any(|b| in_open_ball(dist(&b.center.0, x), b.radius)) {
            return true;
        }
        if self.points.iter().any(|p| p.0.as_slice() == x) {
            return true;
        }
        if let Some(frame) = &self.frame {
            for c in &self.cells {
                if let Ok(hit) = frame.cell_of(x, c.base, c.level) {
                    if hit.index == c.index {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// Indices of atoms of `pi` lying in the region, ascending.
    pub fn atoms_of(&self, pi: &DiscreteMeasure) -> Vec<usize> {
        (0..pi.len()).filter(|&i| self.contains(pi.atom(i))).collect()
    }
}

/// `E(α)`: every ball grows by `α`, points become balls of radius `α`, and
/// each cell is replaced by the ball about its center of radius
/// `diameter/2 + α`.
pub fn enlarge(region: &Region, alpha: f64) -> Result<Region> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidInput(format!("enlargement must be positive, got {alpha}")));
    }
    let mut balls: Vec<Ball> =
        region.balls.iter().map(|b| Ball { center: b.center.clone(), radius: b.radius + alpha }).collect();
    balls.extend(region.points.iter().map(|p| Ball { center: p.clone(), radius: alpha }));
    if let Some(frame) = &region.frame {
        balls.extend(
            region
                .cells
                .iter()
                .map(|c| Ball { center: frame.cell_center(c), radius: frame.cell_diameter(c) / 2.0 + alpha }),
        );
    }
    Region::from_balls(balls)
}

/// `π(E)` summed over atoms in index order.
pub fn region_mass(pi: &DiscreteMeasure, region: &Region) -> f64 {
    stable_sum(region.atoms_of(pi).into_iter().map(|i| pi.weight(i)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridMeasure {
    pub base: u32,
    pub level: u32,
    pub frame: Frame,
    pub cell_masses: BTreeMap<GridCell, f64>,
}

impl GridMeasure {
    pub fn total(&self) -> f64 {
        stable_sum(self.cell_masses.values().copied())
    }

    /// `Σ mass^q` over occupied cells, in cell order.
    pub fn moment(&self, q: f64) -> f64 {
        stable_sum(self.cell_masses.values().map(|m| m.powf(q)))
    }
}

/// Assign each atom's weight to its containing half-open cell.
pub fn to_grid(pi: &DiscreteMeasure, frame: &Frame, base: u32, level: u32) -> Result<GridMeasure> {
    if frame.dim() != pi.dim() {
        return Err(Error::SizeMismatch(format!(
            "frame of dimension {} for a measure of dimension {}",
            frame.dim(),
            pi.dim()
        )));
    }
    let mut parts: BTreeMap<GridCell, Vec<f64>> = BTreeMap::new();
    for (i, a) in pi.atoms().enumerate() {
        let cell = frame.cell_of(a, base, level)?;
        parts.entry(cell).or_default().push(pi.weight(i));
    }
    let cell_masses = parts.into_iter().map(|(c, w)| (c, stable_sum(w))).collect();
    Ok(GridMeasure { base, level, frame: frame.clone(), cell_masses })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[(f64, f64)]) -> DiscreteMeasure {
        DiscreteMeasure::from_atoms(points.iter().map(|&(x, w)| (Point::on_line(x), w)).collect()).unwrap()
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(DiscreteMeasure::new(1, vec![0.0, 1.0], vec![0.5, 0.4]).is_err());
        assert!(DiscreteMeasure::new(1, vec![0.0, 1.0], vec![1.5, -0.5]).is_err());
        assert!(DiscreteMeasure::new(1, vec![], vec![]).is_err());
        assert!(DiscreteMeasure::new(1, vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn ball_mass_examples() {
        let pi = DiscreteMeasure::dirac(Point::on_line(0.5));
        assert_eq!(ball_mass(&pi, &Point::on_line(0.0), 0.4), 0.0);
        assert_eq!(ball_mass(&pi, &Point::on_line(0.0), 0.6), 1.0);
        let two = line(&[(0.0, 0.5), (1.0, 0.5)]);
        assert_eq!(ball_mass(&two, &Point::on_line(0.3), 2.0), 1.0);
        // open ball: atom exactly on the sphere is excluded
        assert_eq!(ball_mass(&two, &Point::on_line(0.0), 1.0), 0.5);
    }

    #[test]
    fn enlarge_examples() {
        let e = Region::points(vec![Point::on_line(0.5)]).unwrap();
        let big = enlarge(&e, 0.1).unwrap();
        assert_eq!(big.constituent_balls(), &[Ball { center: Point::on_line(0.5), radius: 0.1 }]);

        let e = Region::ball(Point::on_line(0.0), 0.2).unwrap();
        let big = enlarge(&e, 0.3).unwrap();
        assert_eq!(big.constituent_balls()[0].radius, 0.5);

        let frame = Frame::new(vec![0.0], 1.0).unwrap();
        let cells =
            vec![GridCell { base: 3, level: 1, index: vec![0] }, GridCell { base: 3, level: 1, index: vec![2] }];
        let e = Region::cells(frame, cells).unwrap();
        let big = enlarge(&e, 0.05).unwrap();
        let balls = big.constituent_balls();
        assert_eq!(balls.len(), 2);
        assert!((balls[0].center.0[0] - 1.0 / 6.0).abs() < 1e-15);
        assert!((balls[1].center.0[0] - 5.0 / 6.0).abs() < 1e-15);
        for b in balls {
            assert!((b.radius - (1.0 / 6.0 + 0.05)).abs() < 1e-15);
        }
        assert!(enlarge(&e, 0.0).is_err());
    }

    #[test]
    fn region_mass_examples() {
        let pi = line(&[(0.0, 0.5), (1.0, 0.5)]);
        let e = Region::ball(Point::on_line(0.0), 0.5).unwrap();
        assert_eq!(region_mass(&pi, &e), 0.5);
        let all = Region::ball(Point::on_line(0.5), 10.0).unwrap();
        assert_eq!(region_mass(&pi, &all), 1.0);
        let pts = Region::points(vec![Point::on_line(1.0)]).unwrap();
        assert_eq!(region_mass(&pi, &pts), 0.5);
    }

    #[test]
    fn grid_level_zero_is_one_cell() {
        let pi = line(&[(0.1, 0.25), (0.4, 0.25), (0.9, 0.5)]);
        let frame = Frame::new(vec![0.0], 1.0).unwrap();
        let g = to_grid(&pi, &frame, 3, 0).unwrap();
        assert_eq!(g.cell_masses.len(), 1);
        assert_eq!(g.total(), 1.0);
    }

    #[test]
    fn grid_rejects_atoms_outside_frame() {
        let pi = line(&[(-0.5, 0.5), (0.5, 0.5)]);
        let frame = Frame::new(vec![0.0], 1.0).unwrap();
        assert!(matches!(to_grid(&pi, &frame, 2, 1), Err(Error::OutsideBoundingBox { .. })));
    }

    #[test]
    fn grid_cells_are_lower_inclusive() {
        let pi = line(&[(0.5, 0.5), (1.0, 0.5)]);
        let frame = Frame::new(vec![0.0], 1.0).unwrap();
        let g = to_grid(&pi, &frame, 2, 1).unwrap();
        // 0.5 opens the upper cell; the top face folds into the last cell
        assert_eq!(g.cell_masses.len(), 1);
        assert_eq!(g.cell_masses[&GridCell { base: 2, level: 1, index: vec![1] }], 1.0);
    }

    #[test]
    fn cell_region_membership_matches_grid() {
        let frame = Frame::new(vec![0.0, 0.0], 1.0).unwrap();
        let cell = GridCell { base: 2, level: 1, index: vec![1, 0] };
        let r = Region::cells(frame, vec![cell]).unwrap();
        assert!(r.contains(&[0.5, 0.0]));
        assert!(r.contains(&[0.9, 0.49]));
        assert!(!r.contains(&[0.49, 0.1]));
        assert!(!r.contains(&[0.6, 0.5]));
    }

    #[test]
    fn stable_sum_recovers_small_terms() {
        let v = [1.0, 1e-16, 1e-16, -1.0];
        assert_eq!(stable_sum(v), 2e-16);
    }
}
