//! Special functions and symmetric linear-algebra kernels.
//!
//! Quantile computations run internally in `f64` regardless of the crate's
//! scalar parameter; the 1e-10 inversion tolerance is not reachable in
//! `f32`, and quantiles are computed once per `(df, level)` and memoized.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Request for an upper quantile of the `F(df1, df2)` distribution.
///
/// `df2 = 0` is legal input: a design with no pure error degrees of freedom
/// has no error estimate, the quantile is `+inf`, and every interval-based
/// criterion value collapses to zero downstream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FQuantileRequest {
    pub df1: usize,
    pub df2: usize,
    /// Cumulative level `1 - alpha`, in `(0, 1)`.
    pub level: f64,
}

#[allow(clippy::excessive_precision)] // full-precision reference constants
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS[0];
        for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

/// Continued fraction for the regularized incomplete beta (Lentz).
fn beta_cont_frac(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cont_frac(a, b, x) / a
    } else {
        1.0 - front * beta_cont_frac(b, a, 1.0 - x) / b
    }
}

/// CDF of `F(d1, d2)` at `x`.
fn f_cdf(d1: f64, d2: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    reg_inc_beta(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2))
}

/// Acklam-style rational approximation of the standard normal quantile,
/// used only to seed the bisection bracket.
#[allow(clippy::excessive_precision)]
fn inv_normal_approx(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let p_low = 0.02425;
    if p < p_low {
        let u = (-2.0 * p.ln()).sqrt();
        (((((C[0] * u + C[1]) * u + C[2]) * u + C[3]) * u + C[4]) * u + C[5])
            / ((((D[0] * u + D[1]) * u + D[2]) * u + D[3]) * u + 1.0)
    } else if p <= 1.0 - p_low {
        let u = p - 0.5;
        let r = u * u;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * u
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -inv_normal_approx(1.0 - p)
    }
}

/// Wilson-Hilferty approximation of the chi-square quantile over its df.
fn wilson_hilferty_ratio(df: f64, p: f64) -> f64 {
    let z = inv_normal_approx(p);
    let t = 1.0 - 2.0 / (9.0 * df) + z * (2.0 / (9.0 * df)).sqrt();
    t.powi(3).max(1e-6)
}

fn f_quantile_f64(df1: usize, df2: usize, level: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&level) || level <= 0.0 {
        return Err(Error::invalid("quantile level must lie strictly in (0, 1)"));
    }
    if df1 == 0 {
        return Err(Error::invalid("numerator degrees of freedom must be >= 1"));
    }
    if df2 == 0 {
        return Ok(f64::INFINITY);
    }

    type QuantileMemo = Mutex<HashMap<(usize, usize, u64), f64>>;
    static MEMO: OnceLock<QuantileMemo> = OnceLock::new();
    let memo = MEMO.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (df1, df2, level.to_bits());
    if let Some(&v) = memo.lock().unwrap().get(&key) {
        return Ok(v);
    }

    let d1 = df1 as f64;
    let d2 = df2 as f64;
    // Wilson-Hilferty-style starting point, then widen to a proper bracket.
    let guess =
        (wilson_hilferty_ratio(d1, level) / wilson_hilferty_ratio(d2, 1.0 - level)).max(1e-3);
    let mut hi = guess;
    let mut grow = 0;
    while f_cdf(d1, d2, hi) < level {
        hi *= 2.0;
        grow += 1;
        assert!(grow < 2000, "failed to bracket F quantile");
    }
    let mut lo = 0.0f64;
    if grow == 0 {
        // the guess was already above the quantile; shrink the lower end up
        let mut probe = guess / 2.0;
        while probe > 1e-300 && f_cdf(d1, d2, probe) > level {
            probe /= 2.0;
        }
        lo = probe;
    }
    // Plain bisection to 1e-10 absolute; robustness over speed, the result
    // is memoized.
    let mut iter = 0;
    while hi - lo > 1e-10 && iter < 300 {
        let mid = 0.5 * (lo + hi);
        if f_cdf(d1, d2, mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
        iter += 1;
    }
    let value = 0.5 * (lo + hi);
    memo.lock().unwrap().insert(key, value);
    Ok(value)
}

/// Upper quantile `F_{df1, df2; level}`, `+inf` when `df2 = 0`.
pub fn f_quantile<S: Scalar>(req: FQuantileRequest) -> Result<S> {
    let v = f_quantile_f64(req.df1, req.df2, req.level)?;
    Ok(if v.is_finite() {
        S::of_f64(v)
    } else {
        S::inf()
    })
}

/// Convenience wrapper taking the significance level `alpha` (quantile at
/// `1 - alpha`).
pub fn f_upper_quantile<S: Scalar>(df1: usize, df2: usize, alpha: S) -> Result<S> {
    f_quantile(FQuantileRequest {
        df1,
        df2,
        level: 1.0 - alpha.as_f64(),
    })
}

/// Relative pivot threshold below which a factorization pivot counts as zero.
const PIVOT_RTOL: f64 = 1e-12;

/// Cholesky factorization of a symmetric positive-definite matrix with a
/// relative pivot threshold: a pivot below `1e-12` of the largest initial
/// diagonal entry flags the matrix as singular.
pub struct SymFactor<S: Scalar> {
    l: DMatrix<S>,
    logdet: S,
}

impl<S: Scalar> SymFactor<S> {
    pub fn new(a: &DMatrix<S>) -> Result<Self> {
        let p = a.nrows();
        if a.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: a.ncols(),
            });
        }
        let mut max_diag = S::zero();
        for k in 0..p {
            if a[(k, k)] > max_diag {
                max_diag = a[(k, k)];
            }
        }
        let threshold = S::of_f64(PIVOT_RTOL) * max_diag;
        let mut l = a.clone();
        let mut logdet = S::zero();
        for k in 0..p {
            let mut pivot = l[(k, k)];
            for j in 0..k {
                pivot -= l[(k, j)] * l[(k, j)];
            }
            if pivot <= threshold {
                return Err(Error::SingularInformation);
            }
            let root = pivot.sqrt();
            logdet += S::of_f64(2.0) * root.ln();
            l[(k, k)] = root;
            for i in (k + 1)..p {
                let mut v = l[(i, k)];
                for j in 0..k {
                    v -= l[(i, j)] * l[(k, j)];
                }
                l[(i, k)] = v / root;
            }
        }
        // zero the strict upper triangle so the factor is self-describing
        for i in 0..p {
            for j in (i + 1)..p {
                l[(i, j)] = S::zero();
            }
        }
        Ok(SymFactor { l, logdet })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// `ln det(A)`.
    pub fn logdet(&self) -> S {
        self.logdet
    }

    /// Solve `A x = b` in place for each column of `b`.
    pub fn solve_in_place(&self, b: &mut DMatrix<S>) {
        let p = self.dim();
        for col in 0..b.ncols() {
            for i in 0..p {
                let mut v = b[(i, col)];
                for j in 0..i {
                    v -= self.l[(i, j)] * b[(j, col)];
                }
                b[(i, col)] = v / self.l[(i, i)];
            }
            for i in (0..p).rev() {
                let mut v = b[(i, col)];
                for j in (i + 1)..p {
                    v -= self.l[(j, i)] * b[(j, col)];
                }
                b[(i, col)] = v / self.l[(i, i)];
            }
        }
    }

    /// Dense inverse `A^-1`.
    pub fn inverse(&self) -> DMatrix<S> {
        let mut inv = DMatrix::identity(self.dim(), self.dim());
        self.solve_in_place(&mut inv);
        inv
    }

    /// `trace(M A^-1)` without forming the inverse.
    pub fn trace_prod_inv(&self, m: &DMatrix<S>) -> S {
        let mut x = m.clone();
        self.solve_in_place(&mut x);
        x.trace()
    }
}

fn check_symmetric<S: Scalar>(m: &DMatrix<S>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    let mut scale = S::zero();
    for v in m.iter() {
        if v.abs() > scale {
            scale = v.abs();
        }
    }
    let tol = S::of_f64(1e-10) * scale;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return Err(Error::invalid("matrix is not symmetric"));
            }
        }
    }
    Ok(())
}

/// Log-determinant of a symmetric PSD matrix; `-inf` for singular input
/// (pivot below 1e-12 of the largest diagonal entry).
pub fn logdet_psd<S: Scalar>(m: &DMatrix<S>) -> Result<S> {
    check_symmetric(m)?;
    match SymFactor::new(m) {
        Ok(f) => Ok(f.logdet()),
        Err(Error::SingularInformation) => Ok(-S::inf()),
        Err(e) => Err(e),
    }
}

/// `trace(M A^-1)` via linear solves. A singular `A` is signaled distinctly
/// so criterion code can map it to an undefined (worst) value.
pub fn trace_prod_inv<S: Scalar>(a: &DMatrix<S>, m: &DMatrix<S>) -> Result<S> {
    check_symmetric(a)?;
    let f = SymFactor::new(a)?;
    if m.nrows() != f.dim() || m.ncols() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: m.nrows(),
        });
    }
    Ok(f.trace_prod_inv(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    fn fq(df1: usize, df2: usize, level: f64) -> f64 {
        f_quantile::<f64>(FQuantileRequest { df1, df2, level }).unwrap()
    }

    #[test]
    fn matches_reference_quantiles() {
        // reference values computed independently with scipy.stats.f.ppf
        assert_relative_eq!(fq(1, 12, 0.95), 4.747225346722511, epsilon = 1e-8);
        assert_relative_eq!(fq(1, 5, 0.95), 6.607890973703367, epsilon = 1e-8);
        assert_relative_eq!(fq(9, 5, 0.95), 4.772465613100857, epsilon = 1e-8);
        assert_relative_eq!(fq(9, 12, 0.95), 2.796375489499248, epsilon = 1e-8);
        assert_relative_eq!(fq(20, 1, 0.95), 248.01308208473898, epsilon = 1e-6);
        assert_relative_eq!(fq(1, 1, 0.95), 161.44763879758827, epsilon = 1e-6);
    }

    #[test]
    fn zero_denominator_df_is_infinite() {
        assert_eq!(fq(1, 0, 0.95), f64::INFINITY);
    }

    #[test]
    fn invalid_level_is_an_error() {
        for level in [0.0, 1.0, -0.5, 1.5] {
            assert!(f_quantile::<f64>(FQuantileRequest {
                df1: 1,
                df2: 5,
                level
            })
            .is_err());
        }
    }

    /// F(1, d) upper quantile equals the square of the two-sided t quantile.
    #[test]
    fn squared_t_identity() {
        for d in 1..=30 {
            for level in [0.90, 0.95, 0.99] {
                let t = StudentsT::new(0.0, 1.0, d as f64).unwrap();
                let tq = t.inverse_cdf((1.0 + level) / 2.0);
                assert_relative_eq!(
                    fq(1, d, level),
                    tq * tq,
                    epsilon = 1e-8,
                    max_relative = 1e-8
                );
            }
        }
    }

    #[test]
    fn monotone_in_df2_and_level() {
        for level in [0.9, 0.95, 0.99] {
            let mut prev = f64::INFINITY;
            for d in 1..=40 {
                let v = fq(3, d, level);
                assert!(v < prev, "strictly decreasing in df2");
                prev = v;
            }
        }
        for d in [1usize, 4, 17] {
            let mut prev = 0.0;
            for level in [0.5, 0.8, 0.9, 0.95, 0.99, 0.999] {
                let v = fq(2, d, level);
                assert!(v > prev, "strictly increasing in level");
                prev = v;
            }
        }
    }

    #[test]
    fn logdet_basics() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(logdet_psd(&id).unwrap(), 0.0);
        let d = DMatrix::from_diagonal(&nalgebra::dvector![2.0, 3.0]);
        assert_relative_eq!(logdet_psd(&d).unwrap(), 6.0f64.ln(), epsilon = 1e-14);
        let rank_deficient = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(logdet_psd(&rank_deficient).unwrap(), f64::NEG_INFINITY);
        for c in [0.5, 2.0, 10.0] {
            let m = DMatrix::<f64>::identity(4, 4) * c;
            assert_relative_eq!(logdet_psd(&m).unwrap(), 4.0 * c.ln(), epsilon = 1e-12);
        }
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(logdet_psd(&asym).is_err());
    }

    #[test]
    fn trace_prod_inv_basics() {
        let p = 4;
        let n = 9.0;
        let a = DMatrix::<f64>::identity(p, p) * n;
        let m = DMatrix::<f64>::identity(p, p);
        assert_relative_eq!(
            trace_prod_inv(&a, &m).unwrap(),
            p as f64 / n,
            epsilon = 1e-14
        );

        let a = DMatrix::from_diagonal(&nalgebra::dvector![2.0, 4.0]);
        let m = DMatrix::<f64>::identity(2, 2);
        assert_relative_eq!(trace_prod_inv(&a, &m).unwrap(), 0.75, epsilon = 1e-14);

        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            trace_prod_inv(&singular, &m),
            Err(Error::SingularInformation)
        ));
    }

    /// With a unit intercept corner and an otherwise empty first row/column,
    /// zeroing that corner removes exactly (A^-1)_11 from the trace.
    #[test]
    fn corner_trace_identity() {
        use crate::model::{Design, ModelSpec};
        use crate::region::{difference_moment_matrix, Region};

        let model = ModelSpec::full_quadratic(2);
        let region = Region::cube(2);
        let design = Design::from_rows(vec![
            vec![-1.0, -1.0],
            vec![-1.0, 1.0],
            vec![1.0, -1.0],
            vec![1.0, 1.0],
            vec![0.0, 0.7],
            vec![-0.3, 0.0],
            vec![0.0, 0.0],
        ]);
        let x = model.model_matrix(&design).unwrap();
        let a = x.transpose() * &x;
        let m0 = difference_moment_matrix(&region, &model).unwrap();
        let mut corner = m0.as_matrix().clone();
        corner[(0, 0)] = 1.0;

        let f = SymFactor::new(&a).unwrap();
        let inv11 = f.inverse()[(0, 0)];
        let lhs = trace_prod_inv(&a, &corner).unwrap();
        let rhs = trace_prod_inv(&a, m0.as_matrix()).unwrap();
        assert_relative_eq!(lhs - rhs, inv11, epsilon = 1e-12);
    }

    #[test]
    fn solve_matches_direct_inverse() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let f = SymFactor::new(&a).unwrap();
        let inv = f.inverse();
        let prod = &a * &inv;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(prod[(i, j)], want, epsilon = 1e-12);
            }
        }
        assert_relative_eq!(
            f.trace_prod_inv(&DMatrix::identity(3, 3)),
            inv.trace(),
            epsilon = 1e-12
        );
    }
}
