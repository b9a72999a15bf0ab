//! Experimental regions and their moment matrices.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::scalar::Scalar;

/// Geometric kind of the design region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionKind {
    /// The cube `[-1, 1]^q`.
    Cube,
    /// The ball of radius `rho` centered at the origin.
    Sphere,
}

/// The region of interest in coded units.
#[derive(Debug, Clone, PartialEq)]
pub struct Region<S: Scalar = f64> {
    kind: RegionKind,
    q: usize,
    rho: S,
}

impl<S: Scalar> Region<S> {
    pub fn cube(q: usize) -> Self {
        Region {
            kind: RegionKind::Cube,
            q,
            rho: S::one(),
        }
    }

    pub fn sphere(q: usize, rho: S) -> Result<Self> {
        if rho <= S::zero() || !rho.finite() {
            return Err(Error::invalid("sphere radius must be positive"));
        }
        Ok(Region {
            kind: RegionKind::Sphere,
            q,
            rho,
        })
    }

    /// Sphere through the factorial corners, `rho = sqrt(q)`.
    pub fn sphere_through_corners(q: usize) -> Self {
        Region {
            kind: RegionKind::Sphere,
            q,
            rho: S::of_usize(q).sqrt(),
        }
    }

    pub fn kind(&self) -> RegionKind {
        self.kind
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Sphere radius; `1` for cubes (unused).
    pub fn rho(&self) -> S {
        self.rho
    }

    /// Whether a point lies inside the region, with a 1e-9 absolute
    /// tolerance on the sphere norm and cube faces.
    pub fn contains(&self, point: &crate::model::FactorPoint<S>) -> bool {
        if point.dim() != self.q {
            return false;
        }
        let tol = S::of_f64(1e-9);
        match self.kind {
            RegionKind::Sphere => point.norm() <= self.rho + tol,
            RegionKind::Cube => point.coords().iter().all(|&c| c.abs() <= S::one() + tol),
        }
    }

    /// Distance from the center to the farthest region point: `rho` for the
    /// sphere, `sqrt(q)` for the cube.
    pub fn max_distance(&self) -> S {
        match self.kind {
            RegionKind::Sphere => self.rho,
            RegionKind::Cube => S::of_usize(self.q).sqrt(),
        }
    }
}

/// A `p x p` matrix of region moments of the model expansion, normalized by
/// the region's volume (or surface measure for sphere shells), so the
/// intercept-by-intercept entry of a volume matrix is exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrix<S: Scalar = f64> {
    m: DMatrix<S>,
}

impl<S: Scalar> MomentMatrix<S> {
    pub fn as_matrix(&self) -> &DMatrix<S> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<S> {
        self.m
    }

    /// The same moments with the first row and first column set to zero;
    /// this is the averaging matrix for variances of differences from the
    /// center.
    pub fn zero_intercept(&self) -> MomentMatrix<S> {
        let mut m = self.m.clone();
        for k in 0..m.nrows() {
            m[(0, k)] = S::zero();
            m[(k, 0)] = S::zero();
        }
        MomentMatrix { m }
    }
}

/// Even-moment values of a product measure with the symmetries of the cube,
/// ball, or sphere surface: `E[x_i^2]`, `E[x_i^4]`, `E[x_i^2 x_j^2]`.
struct EvenMoments<S> {
    e2: S,
    e4: S,
    e22: S,
}

fn build_moment_matrix<S: Scalar>(model: &ModelSpec, mom: &EvenMoments<S>) -> Result<DMatrix<S>> {
    let p = model.p();
    let q = model.q();
    let mut m = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let ta = model.terms()[a];
            let tb = model.terms()[b];
            let expo: Vec<u32> = (0..q).map(|i| ta.exponent(i) + tb.exponent(i)).collect();
            if expo.iter().any(|&e| e % 2 == 1) {
                continue; // odd moments vanish by symmetry
            }
            let mut nonzero: Vec<u32> = expo.into_iter().filter(|&e| e > 0).collect();
            nonzero.sort_unstable();
            let value = match nonzero.as_slice() {
                [] => S::one(),
                [2] => mom.e2,
                [4] => mom.e4,
                [2, 2] => mom.e22,
                _ => {
                    return Err(Error::invalid(
                        "moment matrices are only available up to second-order models",
                    ))
                }
            };
            m[(a, b)] = value;
            m[(b, a)] = value;
        }
    }
    Ok(m)
}

/// Volume-normalized moment matrix of the region.
///
/// Closed forms: cube `[-1,1]^q` has `E[x_i^2] = 1/3`, `E[x_i^4] = 1/5`,
/// `E[x_i^2 x_j^2] = 1/9`; the ball of radius `rho` has
/// `E[x_i^2] = rho^2/(q+2)`, `E[x_i^4] = 3 rho^4/((q+2)(q+4))`,
/// `E[x_i^2 x_j^2] = rho^4/((q+2)(q+4))`. All odd moments are zero.
pub fn moment_matrix<S: Scalar>(region: &Region<S>, model: &ModelSpec) -> Result<MomentMatrix<S>> {
    if model.q() != region.q() {
        return Err(Error::DimensionMismatch {
            expected: region.q(),
            got: model.q(),
        });
    }
    let q = S::of_usize(region.q());
    let mom = match region.kind() {
        RegionKind::Cube => EvenMoments {
            e2: S::of_f64(1.0 / 3.0),
            e4: S::of_f64(1.0 / 5.0),
            e22: S::of_f64(1.0 / 9.0),
        },
        RegionKind::Sphere => {
            let r2 = region.rho() * region.rho();
            let r4 = r2 * r2;
            let two = S::of_f64(2.0);
            let four = S::of_f64(4.0);
            EvenMoments {
                e2: r2 / (q + two),
                e4: S::of_f64(3.0) * r4 / ((q + two) * (q + four)),
                e22: r4 / ((q + two) * (q + four)),
            }
        }
    };
    Ok(MomentMatrix {
        m: build_moment_matrix(model, &mom)?,
    })
}

/// `M` with the first row and column zeroed (the difference-variance matrix).
pub fn difference_moment_matrix<S: Scalar>(
    region: &Region<S>,
    model: &ModelSpec,
) -> Result<MomentMatrix<S>> {
    Ok(moment_matrix(region, model)?.zero_intercept())
}

/// Surface-normalized moment matrix of the sphere shell at radius fraction
/// `r` of `rho` (shell radius `a = r * rho`): `E[x_i^2] = a^2/q`,
/// `E[x_i^4] = 3 a^4/(q(q+2))`, `E[x_i^2 x_j^2] = a^4/(q(q+2))`.
pub fn shell_moment_matrix<S: Scalar>(
    region: &Region<S>,
    model: &ModelSpec,
    r: S,
) -> Result<MomentMatrix<S>> {
    if region.kind() != RegionKind::Sphere {
        return Err(Error::invalid(
            "shell moments are defined for spherical regions only",
        ));
    }
    if r <= S::zero() {
        return Err(Error::invalid("shell radius fraction must be positive"));
    }
    if model.q() != region.q() {
        return Err(Error::DimensionMismatch {
            expected: region.q(),
            got: model.q(),
        });
    }
    let q = S::of_usize(region.q());
    let a2 = (r * region.rho()) * (r * region.rho());
    let a4 = a2 * a2;
    let mom = EvenMoments {
        e2: a2 / q,
        e4: S::of_f64(3.0) * a4 / (q * (q + S::of_f64(2.0))),
        e22: a4 / (q * (q + S::of_f64(2.0))),
    };
    Ok(MomentMatrix {
        m: build_moment_matrix(model, &mom)?,
    })
}

/// The averaging matrix used by the prediction criteria (`I`, `(IP)`, `I_D`,
/// `(I_DP)`): the cube averages prediction variance over its full volume,
/// the spherical region over the sphere surface of radius `rho`. The surface
/// convention is what reproduces published spherical-region efficiency
/// tables; it also matches evaluating designs "over the hypersphere".
pub fn prediction_moment_matrix<S: Scalar>(
    region: &Region<S>,
    model: &ModelSpec,
) -> Result<MomentMatrix<S>> {
    match region.kind() {
        RegionKind::Cube => moment_matrix(region, model),
        RegionKind::Sphere => shell_moment_matrix(region, model, S::one()),
    }
}

/// Number of low-discrepancy points used for cube volume fractions.
const QMC_POINTS: usize = 1 << 20;
/// Fixed seed offsetting the low-discrepancy lattice; changing it changes
/// every cube volume-fraction axis, so it is part of the output contract.
const QMC_SEED: u64 = 0x5eed_0fd3_5167;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Kronecker (R2-type) low-discrepancy sequence in `[0,1)^q`: coordinate `j`
/// advances by `phi^-(j+1)` where `phi` is the positive root of
/// `x^(q+1) = x + 1`, with a seeded initial shift per coordinate.
fn r2_alphas(q: usize) -> Vec<f64> {
    let mut phi = 1.5f64;
    for _ in 0..64 {
        let f = phi.powi(q as i32 + 1) - phi - 1.0;
        let df = (q as f64 + 1.0) * phi.powi(q as i32) - 1.0;
        phi -= f / df;
    }
    (1..=q).map(|j| phi.powi(-(j as i32))).collect()
}

/// Sorted Euclidean norms of the QMC point cloud in `[-1,1]^q`, cached per
/// dimension behind a synchronized memo table.
fn cube_norm_table(q: usize) -> Arc<Vec<f64>> {
    static TABLES: OnceLock<Mutex<HashMap<usize, Arc<Vec<f64>>>>> = OnceLock::new();
    let tables = TABLES.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = tables.lock().unwrap().get(&q) {
        return Arc::clone(t);
    }
    let alphas = r2_alphas(q);
    let shifts: Vec<f64> = (0..q)
        .map(|j| {
            let mut state = QMC_SEED ^ (j as u64).wrapping_mul(0xa076_1d64_78bd_642f);
            splitmix64(&mut state) as f64 / (u64::MAX as f64 + 1.0)
        })
        .collect();
    let mut norms = Vec::with_capacity(QMC_POINTS);
    let mut u = shifts.clone();
    for _ in 0..QMC_POINTS {
        let mut s = 0.0;
        for j in 0..q {
            u[j] += alphas[j];
            if u[j] >= 1.0 {
                u[j] -= 1.0;
            }
            let x = 2.0 * u[j] - 1.0;
            s += x * x;
        }
        norms.push(s.sqrt());
    }
    norms.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let arc = Arc::new(norms);
    tables.lock().unwrap().insert(q, Arc::clone(&arc));
    arc
}

/// Relative volume of the region inside the sphere of radius fraction `r`,
/// where `r = 1` corresponds to the farthest region point (`rho` for the
/// sphere, `sqrt(q)` for the cube).
///
/// Spheres have the closed form `r^q`. Cubes intersect the ball of radius
/// `r*sqrt(q)` with `[-1,1]^q`; the fraction is estimated from a seeded
/// quasi-Monte Carlo cloud of 2^20 points and is deterministic. Endpoints
/// are exact.
pub fn volume_fraction<S: Scalar>(region: &Region<S>, r: S) -> Result<S> {
    if r < S::zero() || r > S::one() || !r.finite() {
        return Err(Error::invalid("radius fraction must lie in [0, 1]"));
    }
    match region.kind() {
        RegionKind::Sphere => Ok(r.powi(region.q() as i32)),
        RegionKind::Cube => {
            if r == S::zero() {
                return Ok(S::zero());
            }
            if r == S::one() {
                return Ok(S::one());
            }
            let table = cube_norm_table(region.q());
            let radius = r.as_f64() * (region.q() as f64).sqrt();
            let count = table.partition_point(|&v| v <= radius);
            Ok(S::of_f64(count as f64 / table.len() as f64))
        }
    }
}
