//! Iterated function systems of similarities and their self-similar measures.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, Frame, Point};

/// Default cap on the number of atoms `build_measure` will materialize.
pub const DEFAULT_ATOM_CAP: usize = 2_000_000;

const ORTHO_TOL: f64 = 1e-9;
const PROB_TOL: f64 = 1e-9;
const CONFIG_PROB_TOL: f64 = 1e-6;

/// `x ↦ ratio · orthogonal · x + translation`.
#[derive(Clone, Debug, PartialEq)]
pub struct Similarity {
    ratio: f64,
    orthogonal: Vec<f64>,
    translation: Vec<f64>,
}

impl Similarity {
    pub fn new(ratio: f64, orthogonal: Vec<f64>, translation: Vec<f64>) -> Result<Self> {
        let d = translation.len();
        if d == 0 {
            return Err(Error::InvalidInput("similarity needs a translation".into()));
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidInput(format!("ratio {ratio} not in (0,1)")));
        }
        if orthogonal.len() != d * d {
            return Err(Error::SizeMismatch(format!(
                "orthogonal part has {} entries, expected {}",
                orthogonal.len(),
                d * d
            )));
        }
        for i in 0..d {
            for j in 0..d {
                let dot: f64 = (0..d).map(|k| orthogonal[i * d + k] * orthogonal[j * d + k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > ORTHO_TOL {
                    return Err(Error::InvalidInput("orthogonal part is not orthogonal".into()));
                }
            }
        }
        Ok(Similarity { ratio, orthogonal, translation })
    }

    /// Pure scaling plus translation.
    pub fn scaling(ratio: f64, translation: Vec<f64>) -> Result<Self> {
        let d = translation.len();
        Self::new(ratio, identity(d), translation)
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| {
                let rot: f64 = (0..d).map(|k| self.orthogonal[i * d + k] * x[k]).sum();
                self.ratio * rot + self.translation[i]
            })
            .collect()
    }

    fn linear(&self) -> Vec<f64> {
        self.orthogonal.iter().map(|v| v * self.ratio).collect()
    }

    fn is_signed_permutation(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| {
            let row = &self.orthogonal[i * d..(i + 1) * d];
            let ones = row.iter().filter(|v| (v.abs() - 1.0).abs() < ORTHO_TOL).count();
            let zeros = row.iter().filter(|v| v.abs() < ORTHO_TOL).count();
            ones == 1 && zeros == d - 1
        })
    }

    /// Unique fixed point, from `(I - ratio·O) x = translation`.
    pub fn fixed_point(&self) -> Vec<f64> {
        let d = self.dim();
        let mut a: Vec<f64> = self.linear().iter().map(|v| -v).collect();
        for i in 0..d {
            a[i * d + i] += 1.0;
        }
        solve_linear(d, a, self.translation.clone())
    }

    /// Image of the box `center ± half` as (center, half-widths); exact for
    /// signed permutations, the bounding box of the image otherwise.
    fn image_box(&self, center: &[f64], half: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let c = self.apply(center);
        let h = (0..d).map(|i| (0..d).map(|k| self.ratio * self.orthogonal[i * d + k].abs() * half[k]).sum()).collect();
        (c, h)
    }
}

fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

// Gaussian elimination with partial pivoting; `a` is row-major d×d.
fn solve_linear(d: usize, mut a: Vec<f64>, mut b: Vec<f64>) -> Vec<f64> {
    for col in 0..d {
        let piv = (col..d).max_by(|&i, &j| a[i * d + col].abs().total_cmp(&a[j * d + col].abs())).unwrap_or(col);
        if piv != col {
            for k in 0..d {
                a.swap(col * d + k, piv * d + k);
            }
            b.swap(col, piv);
        }
        let p = a[col * d + col];
        for row in col + 1..d {
            let f = a[row * d + col] / p;
            if f != 0.0 {
                for k in col..d {
                    a[row * d + k] -= f * a[col * d + k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; d];
    for row in (0..d).rev() {
        let s: f64 = (row + 1..d).map(|k| a[row * d + k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row * d + row];
    }
    x
}

/// Finite word over map indices; letters are zero-based.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word(pub Vec<usize>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Maps `S_1..S_M` with probabilities `p_1..p_M`.
#[derive(Clone, Debug, PartialEq)]
pub struct IfsModel {
    maps: Vec<Similarity>,
    probs: Vec<f64>,
}

/// Open axis-aligned box.
#[derive(Clone, Debug, PartialEq)]
pub struct OpenBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl OpenBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() || lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
            return Err(Error::InvalidInput("open box must be non-empty and bounded".into()));
        }
        Ok(OpenBox { lo, hi })
    }

    pub fn unit(d: usize) -> Self {
        OpenBox { lo: vec![0.0; d], hi: vec![1.0; d] }
    }

    fn center_half(&self) -> (Vec<f64>, Vec<f64>) {
        let c = self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect();
        let h = self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (h - l)).collect();
        (c, h)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OscViolation {
    /// `S_m(U)` is not contained in `U` (or could not be shown to be).
    NotContained { map: usize },
    /// `S_a(U)` and `S_b(U)` intersect (or could not be shown disjoint).
    Overlap { a: usize, b: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct OscReport {
    pub holds: bool,
    /// True when every image box is the exact image of `U`.
    pub exact: bool,
    pub violations: Vec<OscViolation>,
}

impl IfsModel {
    pub fn new(maps: Vec<Similarity>, probs: Vec<f64>) -> Result<Self> {
        if maps.len() < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 maps, got {}", maps.len())));
        }
        if maps.len() != probs.len() {
            return Err(Error::SizeMismatch(format!("{} maps, {} probabilities", maps.len(), probs.len())));
        }
        let d = maps[0].dim();
        if maps.iter().any(|m| m.dim() != d) {
            return Err(Error::InvalidInput("maps of mixed dimension".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(**p > 0.0)) {
            return Err(Error::InvalidInput(format!("probability {p} is not positive")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidInput(format!("probabilities sum to {total}")));
        }
        Ok(IfsModel { maps, probs })
    }

    /// Line IFS `x ↦ ratio_m · x + shift_m`.
    pub fn on_line(ratios: &[f64], shifts: &[f64], probs: &[f64]) -> Result<Self> {
        if ratios.len() != shifts.len() {
            return Err(Error::SizeMismatch("ratios and shifts differ in length".into()));
        }
        let maps =
            ratios.iter().zip(shifts).map(|(&r, &t)| Similarity::scaling(r, vec![t])).collect::<Result<Vec<_>>>()?;
        Self::new(maps, probs.to_vec())
    }

    /// Middle-thirds Cantor maps with weights `(p, 1 - p)`.
    pub fn cantor(p: f64) -> Result<Self> {
        Self::on_line(&[1.0 / 3.0, 1.0 / 3.0], &[0.0, 2.0 / 3.0], &[p, 1.0 - p])
    }

    pub fn dim(&self) -> usize {
        self.maps[0].dim()
    }

    pub fn maps(&self) -> &[Similarity] {
        &self.maps
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.maps.iter().map(|m| m.ratio).collect()
    }

    fn check_word(&self, w: &Word) -> Result<()> {
        match w.0.iter().find(|&&l| l >= self.maps.len()) {
            Some(&letter) => Err(Error::LetterOutOfRange { letter, maps: self.maps.len() }),
            None => Ok(()),
        }
    }

    /// `S_w(x) = S_{w1} ∘ … ∘ S_{wn}(x)`.
    pub fn apply_word(&self, w: &Word, x: &Point) -> Result<Point> {
        self.check_word(w)?;
        let mut y = x.0.clone();
        for &l in w.0.iter().rev() {
            y = self.maps[l].apply(&y);
        }
        Ok(Point(y))
    }

    /// `(p_w, r_w)`, products taken left to right.
    pub fn cylinder_params(&self, w: &Word) -> Result<(f64, f64)> {
        self.check_word(w)?;
        Ok(w.0.iter().fold((1.0, 1.0), |(p, r), &l| (p * self.probs[l], r * self.maps[l].ratio)))
    }

    /// Box `D` with `S_m(D) ⊂ D` for all `m`; it contains the attractor.
    pub fn invariant_box(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let fixed: Vec<Vec<f64>> = self.maps.iter().map(|m| m.fixed_point()).collect();
        let mut lo: Vec<f64> = (0..d).map(|j| fixed.iter().map(|f| f[j]).fold(f64::INFINITY, f64::min)).collect();
        let mut hi: Vec<f64> = (0..d).map(|j| fixed.iter().map(|f| f[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
        for _ in 0..10_000 {
            let center: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
            let half: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (h - l)).collect();
            let mut grew = false;
            for m in &self.maps {
                let (c, h) = m.image_box(&center, &half);
                for j in 0..d {
                    let scale = (hi[j] - lo[j]).max(1.0);
                    if c[j] - h[j] < lo[j] - 1e-15 * scale {
                        lo[j] = c[j] - h[j];
                        grew = true;
                    }
                    if c[j] + h[j] > hi[j] + 1e-15 * scale {
                        hi[j] = c[j] + h[j];
                        grew = true;
                    }
                }
            }
            if !grew {
                break;
            }
        }
        (lo, hi)
    }

    /// Cube frame around the invariant box.
    pub fn frame(&self) -> Frame {
        let (lo, hi) = self.invariant_box();
        let side = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0f64, f64::max);
        Frame::new(lo, if side > 0.0 { side } else { 1.0 }).expect("finite invariant box")
    }

    /// Diameter of the invariant box; bounds `diam(K)`.
    pub fn diameter_bound(&self) -> f64 {
        let (lo, hi) = self.invariant_box();
        lo.iter().zip(&hi).map(|(l, h)| (h - l) * (h - l)).sum::<f64>().sqrt()
    }

    pub fn build_measure(&self, depth: u32) -> Result<DiscreteMeasure> {
        self.build_measure_capped(depth, DEFAULT_ATOM_CAP)
    }

    /// One atom per length-`depth` word `w`, at `S_w(x0)` with weight `p_w`,
    /// where `x0` is the fixed point of `S_1`. Atoms are in lexicographic
    /// word order.
    pub fn build_measure_capped(&self, depth: u32, cap: usize) -> Result<DiscreteMeasure> {
        let m = self.maps.len() as u128;
        let atoms = (0..depth).fold(1u128, |acc, _| acc.saturating_mul(m));
        if atoms > cap as u128 {
            return Err(Error::AtomCapExceeded { atoms, cap });
        }
        let d = self.dim();
        let x0 = self.maps[0].fixed_point();
        let linear: Vec<Vec<f64>> = self.maps.iter().map(|s| s.linear()).collect();
        let mut coords = Vec::with_capacity(atoms as usize * d);
        let mut weights = Vec::with_capacity(atoms as usize);
        let mut builder = Builder { ifs: self, linear: &linear, x0: &x0, coords: &mut coords, weights: &mut weights };
        builder.descend(depth, &identity(d), &vec![0.0; d], 1.0);
        // products of a probability vector: the total is 1 up to rounding
        let total: f64 = crate::measure::stable_sum(weights.iter().copied());
        if (total - 1.0).abs() > crate::measure::MASS_TOL {
            return Err(Error::InvalidMeasure(format!("cylinder weights sum to {total}")));
        }
        DiscreteMeasure::new(d, coords, weights)
    }

    /// Checks `S_m(U) ⊂ U` and pairwise disjointness of the images.
    pub fn verify_osc(&self, u: &OpenBox) -> OscReport {
        let d = self.dim();
        let (c, h) = u.center_half();
        let tol = 1e-12 * u.lo.iter().zip(&u.hi).map(|(l, h)| h - l).fold(1.0, f64::max);
        let images: Vec<(Vec<f64>, Vec<f64>)> = self
            .maps
            .iter()
            .map(|m| {
                let (ic, ih) = m.image_box(&c, &h);
                let lo = (0..d).map(|j| ic[j] - ih[j]).collect();
                let hi = (0..d).map(|j| ic[j] + ih[j]).collect();
                (lo, hi)
            })
            .collect();
        let mut violations = Vec::new();
        for (m, (lo, hi)) in images.iter().enumerate() {
            let inside = (0..d).all(|j| lo[j] >= u.lo[j] - tol && hi[j] <= u.hi[j] + tol);
            if !inside {
                violations.push(OscViolation::NotContained { map: m });
            }
        }
        for a in 0..images.len() {
            for b in a + 1..images.len() {
                let (alo, ahi) = &images[a];
                let (blo, bhi) = &images[b];
                let separated = (0..d).any(|j| ahi[j] <= blo[j] + tol || bhi[j] <= alo[j] + tol);
                if !separated {
                    violations.push(OscViolation::Overlap { a, b });
                }
            }
        }
        OscReport {
            holds: violations.is_empty(),
            exact: self.maps.iter().all(|m| m.is_signed_permutation()),
            violations,
        }
    }

    /// `(min_m log p_m / log r_m, max_m log p_m / log r_m)`.
    pub fn s_extremes(&self) -> (f64, f64) {
        self.maps
            .iter()
            .zip(&self.probs)
            .map(|(m, p)| p.ln() / m.ratio.ln())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s), hi.max(s)))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parses the TOML model description:
    ///
    /// ```toml
    /// dim = 1
    /// [[maps]]
    /// ratio = "1/3"          # number or "a/b"
    /// translation = [0.0]
    /// prob = 0.5
    /// # orthogonal = [1.0]   # row-major d×d, identity if omitted
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawIfs = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let d = raw.dim;
        let mut maps = Vec::new();
        let mut probs = Vec::new();
        for (i, m) in raw.maps.into_iter().enumerate() {
            let translation = m.translation.iter().map(Num::value).collect::<Result<Vec<_>>>()?;
            if translation.len() != d {
                return Err(Error::Config(format!("map {i}: translation needs {d} entries")));
            }
            let orthogonal = match m.orthogonal {
                Some(o) => o.iter().map(Num::value).collect::<Result<Vec<_>>>()?,
                None => identity(d),
            };
            maps.push(Similarity::new(m.ratio.value()?, orthogonal, translation)?);
            probs.push(m.prob.value()?);
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > CONFIG_PROB_TOL {
            return Err(Error::Config(format!("probabilities sum to {total}")));
        }
        if (total - 1.0).abs() > PROB_TOL {
            for p in &mut probs {
                *p /= total;
            }
        }
        Self::new(maps, probs)
    }
}

struct Builder<'a> {
    ifs: &'a IfsModel,
    linear: &'a [Vec<f64>],
    x0: &'a [f64],
    coords: &'a mut Vec<f64>,
    weights: &'a mut Vec<f64>,
}

impl Builder<'_> {
    // (a, t) is the composed map S_w; S_{wm} = S_w ∘ S_m.
    fn descend(&mut self, remaining: u32, a: &[f64], t: &[f64], p: f64) {
        let d = t.len();
        if remaining == 0 {
            for i in 0..d {
                let v: f64 = (0..d).map(|k| a[i * d + k] * self.x0[k]).sum();
                self.coords.push(v + t[i]);
            }
            self.weights.push(p);
            return;
        }
        for (m, map) in self.ifs.maps.iter().enumerate() {
            let lm = &self.linear[m];
            let mut a2 = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    a2[i * d + j] = (0..d).map(|k| a[i * d + k] * lm[k * d + j]).sum();
                }
            }
            let t2: Vec<f64> =
                (0..d).map(|i| (0..d).map(|k| a[i * d + k] * map.translation[k]).sum::<f64>() + t[i]).collect();
            self.descend(remaining - 1, &a2, &t2, p * self.ifs.probs[m]);
        }
    }
}

/// Number written as a float, an integer or an `"a/b"` string.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub(crate) enum Num {
    Float(f64),
    Int(i64),
    Text(String),
}

impl Num {
    pub(crate) fn value(&self) -> Result<f64> {
        match self {
            Num::Float(v) => Ok(*v),
            Num::Int(v) => Ok(*v as f64),
            Num::Text(s) => parse_fraction(s),
        }
    }
}

/// Accepts `"0.25"`, `"1/3"` or `"-2/3"`.
pub fn parse_fraction(s: &str) -> Result<f64> {
    let bad = || Error::Config(format!("cannot read number {s:?}"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|_| bad())?;
            let d: f64 = d.trim().parse().map_err(|_| bad())?;
            if d == 0.0 {
                return Err(bad());
            }
            Ok(n / d)
        }
        None => s.trim().parse().map_err(|_| bad()),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIfs {
    dim: usize,
    maps: Vec<RawMap>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMap {
    ratio: Num,
    #[serde(default)]
    orthogonal: Option<Vec<Num>>,
    translation: Vec<Num>,
    prob: Num,
}
