//! Second-order polynomial models, designs and candidate sets.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::region::{Region, RegionKind};
use crate::scalar::Scalar;

/// One term of a polynomial response-surface model. Factor indices are
/// zero-based; `Interaction(i, j)` always has `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    Intercept,
    Linear(usize),
    Quadratic(usize),
    Interaction(usize, usize),
}

impl Term {
    /// Exponent of factor `i` in this term.
    pub fn exponent(&self, i: usize) -> u32 {
        match *self {
            Term::Intercept => 0,
            Term::Linear(a) => u32::from(a == i),
            Term::Quadratic(a) => 2 * u32::from(a == i),
            Term::Interaction(a, b) => u32::from(a == i) + u32::from(b == i),
        }
    }

    /// Evaluate the term at a point.
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        match *self {
            Term::Intercept => S::one(),
            Term::Linear(a) => x[a],
            Term::Quadratic(a) => x[a] * x[a],
            Term::Interaction(a, b) => x[a] * x[b],
        }
    }
}

/// A polynomial model over `q` factors as an ordered term list.
///
/// The term order is fixed so that model matrices, moment matrices and the
/// `W` weight diagonal are reproducible bit for bit: intercept, linear terms
/// by ascending factor, pure quadratics by ascending factor, interactions in
/// lexicographic `(i, j)` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    q: usize,
    terms: Vec<Term>,
}

impl ModelSpec {
    /// The full second-order model in `q` factors:
    /// `p = 1 + 2q + q(q-1)/2` terms.
    pub fn full_quadratic(q: usize) -> Self {
        assert!(q >= 1, "factor count must be at least 1");
        let mut terms = Vec::with_capacity(1 + 2 * q + q * (q - 1) / 2);
        terms.push(Term::Intercept);
        terms.extend((0..q).map(Term::Linear));
        terms.extend((0..q).map(Term::Quadratic));
        for i in 0..q {
            for j in (i + 1)..q {
                terms.push(Term::Interaction(i, j));
            }
        }
        ModelSpec { q, terms }
    }

    /// Intercept-only model; useful as a sanity baseline for graph output.
    pub fn intercept_only(q: usize) -> Self {
        ModelSpec {
            q,
            terms: vec![Term::Intercept],
        }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Number of model terms `p`.
    pub fn p(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Expansion `f(x)` of a point in the fixed term order.
    pub fn expand<S: Scalar>(&self, point: &FactorPoint<S>) -> Result<DVector<S>> {
        if point.dim() != self.q {
            return Err(Error::DimensionMismatch {
                expected: self.q,
                got: point.dim(),
            });
        }
        Ok(DVector::from_iterator(
            self.terms.len(),
            self.terms.iter().map(|t| t.eval(point.coords())),
        ))
    }

    /// The `n x p` model matrix `X` with rows `f(x_i)'`.
    pub fn model_matrix<S: Scalar>(&self, design: &Design<S>) -> Result<DMatrix<S>> {
        let n = design.n();
        let mut x = DMatrix::zeros(n, self.p());
        for (i, pt) in design.points().iter().enumerate() {
            let row = self.expand(pt)?;
            x.row_mut(i).copy_from(&row.transpose());
        }
        Ok(x)
    }

    /// `X` with the intercept column removed (`n x (p-1)`). Only meaningful
    /// when the first term is the intercept, which holds for every
    /// constructor in this module.
    pub fn model_matrix_no_intercept<S: Scalar>(&self, design: &Design<S>) -> Result<DMatrix<S>> {
        let x = self.model_matrix(design)?;
        Ok(x.columns(1, self.p() - 1).into_owned())
    }
}

/// Centering projector `Q = I - 11'/n`.
pub fn centering_projector<S: Scalar>(n: usize) -> DMatrix<S> {
    let inv_n = S::one() / S::of_usize(n);
    DMatrix::from_fn(n, n, |i, j| if i == j { S::one() - inv_n } else { -inv_n })
}

/// A treatment: one combination of coded factor levels.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPoint<S: Scalar = f64> {
    coords: Vec<S>,
}

/// Coordinates are rounded to 10 decimals before replicate hashing; candidate
/// points are exact algebraic values and published designs carry at most two
/// decimals, so equality after rounding is unambiguous.
const REPLICATE_ROUNDING: f64 = 1e10;

impl<S: Scalar> FactorPoint<S> {
    pub fn new(coords: Vec<S>) -> Self {
        debug_assert!(coords.iter().all(|c| c.finite()), "non-finite coordinate");
        FactorPoint { coords }
    }

    pub fn origin(q: usize) -> Self {
        FactorPoint {
            coords: vec![S::zero(); q],
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[S] {
        &self.coords
    }

    pub fn norm(&self) -> S {
        let mut acc = S::zero();
        for &c in &self.coords {
            acc += c * c;
        }
        acc.sqrt()
    }

    /// Canonical key for replicate detection.
    pub fn replicate_key(&self) -> Vec<i64> {
        self.coords
            .iter()
            .map(|c| (c.as_f64() * REPLICATE_ROUNDING).round() as i64)
            .collect()
    }
}

impl<S: Scalar> From<Vec<S>> for FactorPoint<S> {
    fn from(coords: Vec<S>) -> Self {
        FactorPoint::new(coords)
    }
}

/// An exact design: an ordered multiset of `n` treatments.
#[derive(Debug, Clone, PartialEq)]
pub struct Design<S: Scalar = f64> {
    points: Vec<FactorPoint<S>>,
}

impl<S: Scalar> Design<S> {
    pub fn new(points: Vec<FactorPoint<S>>) -> Self {
        Design { points }
    }

    pub fn from_rows(rows: Vec<Vec<S>>) -> Self {
        Design {
            points: rows.into_iter().map(FactorPoint::new).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn q(&self) -> usize {
        self.points.first().map_or(0, FactorPoint::dim)
    }

    pub fn points(&self) -> &[FactorPoint<S>] {
        &self.points
    }

    /// Number of distinct treatments `t` under canonical rounding.
    pub fn distinct_count(&self) -> usize {
        let mut keys: Vec<Vec<i64>> = self.points.iter().map(FactorPoint::replicate_key).collect();
        keys.sort_unstable();
        keys.dedup();
        keys.len()
    }

    /// Re-derive snapped sphere coordinates: any point whose nonzero
    /// coordinates all share a magnitude within 2% of `rho/sqrt(k)` (with `k`
    /// the nonzero count) is moved exactly onto the sphere grid. Points not
    /// matching the pattern are left untouched. Published tables round
    /// coordinates to two decimals; this restores exact norms and exact
    /// replicate structure.
    pub fn snapped_to_sphere(&self, region: &Region<S>) -> Design<S> {
        if region.kind() != RegionKind::Sphere {
            return self.clone();
        }
        let rho = region.rho().as_f64();
        let points = self
            .points
            .iter()
            .map(|pt| {
                let coords = pt.coords();
                let nonzero: Vec<usize> = (0..coords.len())
                    .filter(|&i| coords[i].as_f64().abs() > 1e-9)
                    .collect();
                if nonzero.is_empty() {
                    return pt.clone();
                }
                let mag = rho / (nonzero.len() as f64).sqrt();
                let fits = nonzero
                    .iter()
                    .all(|&i| (coords[i].as_f64().abs() - mag).abs() <= 0.02 * mag);
                if !fits {
                    return pt.clone();
                }
                let snapped = coords
                    .iter()
                    .map(|&c| {
                        let v = c.as_f64();
                        if v.abs() > 1e-9 {
                            S::of_f64(mag.copysign(v))
                        } else {
                            S::zero()
                        }
                    })
                    .collect();
                FactorPoint::new(snapped)
            })
            .collect();
        Design { points }
    }
}

/// Degrees-of-freedom split of a design under a model: `d = n - t` runs for
/// pure error and `lof = t - p` for lack of fit (`lof` may be negative for
/// supersaturated treatment sets and is reported as-is).
pub fn df_accounting<S: Scalar>(design: &Design<S>, model: &ModelSpec) -> (usize, i64) {
    let t = design.distinct_count();
    let d = design.n() - t;
    let lof = t as i64 - model.p() as i64;
    (d, lof)
}

/// A finite set of distinct points a search may choose runs from.
#[derive(Debug, Clone)]
pub struct CandidateSet<S: Scalar = f64> {
    points: Vec<FactorPoint<S>>,
    region: Region<S>,
}

impl<S: Scalar> CandidateSet<S> {
    pub fn points(&self) -> &[FactorPoint<S>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn region(&self) -> &Region<S> {
        &self.region
    }

    pub fn q(&self) -> usize {
        self.region.q()
    }
}

/// Candidate set derived from the full `3^q` factorial.
///
/// * Cube: all `3^q` points with coordinates in `{-1, 0, 1}`.
/// * Sphere of radius `rho`: the center point plus every nonzero grid point
///   scaled radially onto the sphere surface, so a point with `k` nonzero
///   coordinates has coordinate magnitude `rho/sqrt(k)`.
///
/// Points are emitted in lexicographic grid order (`-1 < 0 < 1`, last
/// coordinate fastest), with the sphere's center point first; exchanges
/// resolve ties by this order, which keeps searches deterministic.
pub fn candidate_set<S: Scalar>(region: &Region<S>) -> CandidateSet<S> {
    let q = region.q();
    let mut points = Vec::new();
    if region.kind() == RegionKind::Sphere {
        points.push(FactorPoint::origin(q));
    }
    let total = 3usize.pow(q as u32);
    for idx in 0..total {
        let mut digits = Vec::with_capacity(q);
        let mut rem = idx;
        for _ in 0..q {
            digits.push(rem % 3);
            rem /= 3;
        }
        digits.reverse();
        let levels: Vec<i64> = digits.iter().map(|&d| d as i64 - 1).collect();
        match region.kind() {
            RegionKind::Cube => {
                points.push(FactorPoint::new(
                    levels.iter().map(|&l| S::of_f64(l as f64)).collect(),
                ));
            }
            RegionKind::Sphere => {
                let k = levels.iter().filter(|&&l| l != 0).count();
                if k == 0 {
                    continue; // center already emitted
                }
                let mag = region.rho() / S::of_usize(k).sqrt();
                points.push(FactorPoint::new(
                    levels.iter().map(|&l| S::of_f64(l as f64) * mag).collect(),
                ));
            }
        }
    }
    CandidateSet {
        points,
        region: region.clone(),
    }
}

/// Central composite design: a (possibly half-replicate) two-level factorial
/// scaled onto the sphere of radius `rho`, axial pairs at distance `rho`, and
/// `centers` center runs. The half replicate uses the defining relation in
/// which the last factor is the product of all the others.
pub fn central_composite<S: Scalar>(
    q: usize,
    rho: S,
    centers: usize,
    half_fraction: bool,
) -> Design<S> {
    let mut rows: Vec<Vec<S>> = Vec::new();
    let corner = rho / S::of_usize(q).sqrt();
    let fact_q = if half_fraction { q - 1 } else { q };
    for idx in 0..(1usize << fact_q) {
        let mut signs: Vec<i64> = (0..fact_q)
            .map(|b| {
                if idx >> (fact_q - 1 - b) & 1 == 1 {
                    1
                } else {
                    -1
                }
            })
            .collect();
        if half_fraction {
            signs.push(signs.iter().product());
        }
        rows.push(
            signs
                .iter()
                .map(|&s| S::of_f64(s as f64) * corner)
                .collect(),
        );
    }
    for i in 0..q {
        for s in [-1.0, 1.0] {
            let mut x = vec![S::zero(); q];
            x[i] = S::of_f64(s) * rho;
            rows.push(x);
        }
    }
    for _ in 0..centers {
        rows.push(vec![S::zero(); q]);
    }
    Design::from_rows(rows)
}
