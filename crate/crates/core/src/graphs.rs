//! Data generation for prediction-variance diagnostics: variance dispersion
//! graphs (VDG, and DVDG for differences from the center) and fraction of
//! design space plots (FDS/DFDS), each in point or interval form, on the
//! variance or standard-error scale, against distance or relative volume.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{df_accounting, Design, ModelSpec};
use crate::numerics::{f_upper_quantile, SymFactor};
use crate::region::{shell_moment_matrix, volume_fraction, Region, RegionKind};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphVariant {
    /// Variance dispersion graph: min/mean/max over spheres of growing radius.
    Vdg,
    /// Dispersion graph of prediction-difference variances.
    Dvdg,
    /// Fraction of design space: sorted prediction variances.
    Fds,
    /// Fraction of design space for prediction differences.
    Dfds,
}

impl GraphVariant {
    pub fn key(self) -> &'static str {
        match self {
            GraphVariant::Vdg => "vdg",
            GraphVariant::Dvdg => "dvdg",
            GraphVariant::Fds => "fds",
            GraphVariant::Dfds => "dfds",
        }
    }

    fn differences(self) -> bool {
        matches!(self, GraphVariant::Dvdg | GraphVariant::Dfds)
    }

    fn dispersion(self) -> bool {
        matches!(self, GraphVariant::Vdg | GraphVariant::Dvdg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphScale {
    Variance,
    /// Square root of the variance scale (discriminates better near 1).
    StandardError,
}

impl GraphScale {
    pub fn key(self) -> &'static str {
        match self {
            GraphScale::Variance => "variance",
            GraphScale::StandardError => "se",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphAxis {
    /// Radius fraction of the farthest region point, 0..1.
    Distance,
    /// Relative volume enclosed within each radius.
    VolumeFraction,
}

impl GraphAxis {
    pub fn key(self) -> &'static str {
        match self {
            GraphAxis::Distance => "distance",
            GraphAxis::VolumeFraction => "volume",
        }
    }
}

/// Configuration of one graph-data run.
#[derive(Debug, Clone)]
pub struct GraphConfig<S: Scalar = f64> {
    pub variant: GraphVariant,
    pub scale: GraphScale,
    /// `Some(alpha)` multiplies variances by `F_{1, d; 1-alpha}` (interval
    /// form); requires at least one pure-error degree of freedom.
    pub interval_alpha: Option<S>,
    /// Axis transform for the dispersion family; FDS plots are fractions by
    /// construction and ignore it.
    pub axis: GraphAxis,
    /// Radius grid size for the dispersion family.
    pub n_radii: usize,
    /// Sample count `N` for the FDS family.
    pub n_samples: usize,
    /// Per-radius sample count for shell extrema.
    pub shell_samples: usize,
    pub seed: u64,
}

impl<S: Scalar> GraphConfig<S> {
    pub fn new(variant: GraphVariant) -> Self {
        GraphConfig {
            variant,
            scale: GraphScale::Variance,
            interval_alpha: None,
            axis: GraphAxis::Distance,
            n_radii: 101,
            n_samples: 100_000,
            shell_samples: 10_000,
            seed: 0,
        }
    }
}

/// One radius row of a dispersion graph; `mean` is absent for cuboidal
/// regions, where no closed shell average exists.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionRow<S: Scalar = f64> {
    pub x: S,
    pub min: S,
    pub mean: Option<S>,
    pub max: S,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphData<S: Scalar = f64> {
    Dispersion(Vec<DispersionRow<S>>),
    /// `(fraction, value)` pairs, fraction strictly increasing, value
    /// nondecreasing.
    Fraction(Vec<(S, S)>),
}

/// Tabular output of one graph run plus the settings that produced it.
#[derive(Debug, Clone)]
pub struct GraphSeries<S: Scalar = f64> {
    pub config: GraphConfig<S>,
    pub data: GraphData<S>,
    /// Echoed settings for the CSV header (callers may append, e.g. a
    /// design-file hash).
    pub metadata: Vec<(String, String)>,
}

/// Variance kernel shared by all variants: `f(x)' (X'X)^-1 f(x)`, with `f`
/// replaced by `f - f(0)` for the difference variants.
struct Kernel<S: Scalar> {
    model: ModelSpec,
    inv: DMatrix<S>,
    f0: DVector<S>,
    differences: bool,
    scale: GraphScale,
    multiplier: S,
}

impl<S: Scalar> Kernel<S> {
    fn raw(&self, coords: &[S]) -> S {
        let mut f = self
            .model
            .expand(&crate::model::FactorPoint::new(coords.to_vec()))
            .expect("kernel dimensions fixed at construction");
        if self.differences {
            f -= &self.f0;
        }
        let y = &self.inv * &f;
        f.dot(&y)
    }

    /// Scale first, then the interval multiplier: the interval series is the
    /// point series times a constant, exactly, row by row.
    fn transform(&self, v: S) -> S {
        let scaled = match self.scale {
            GraphScale::Variance => v,
            GraphScale::StandardError => v.sqrt(),
        };
        scaled * self.multiplier
    }

    fn center_raw(&self) -> S {
        if self.differences {
            S::zero()
        } else {
            self.inv[(0, 0)]
        }
    }
}

fn build_kernel<S: Scalar>(
    design: &Design<S>,
    model: &ModelSpec,
    region: &Region<S>,
    cfg: &GraphConfig<S>,
) -> Result<(Kernel<S>, usize)> {
    if design.q() != model.q() || region.q() != model.q() {
        return Err(Error::DimensionMismatch {
            expected: model.q(),
            got: design.q(),
        });
    }
    let x = model.model_matrix(design)?;
    let a = x.transpose() * &x;
    let inv = SymFactor::new(&a)?.inverse();
    let (d, _) = df_accounting(design, model);
    let multiplier = match cfg.interval_alpha {
        None => S::one(),
        Some(alpha) => {
            if alpha <= S::zero() || alpha >= S::one() {
                return Err(Error::invalid("interval alpha must lie in (0, 1)"));
            }
            if d == 0 {
                return Err(Error::NoPureError(
                    "interval-scaled graphs need at least one pure-error df".into(),
                ));
            }
            let f = f_upper_quantile::<S>(1, d, alpha)?;
            match cfg.scale {
                GraphScale::Variance => f,
                GraphScale::StandardError => f.sqrt(),
            }
        }
    };
    let f0 = model.expand(&crate::model::FactorPoint::origin(model.q()))?;
    Ok((
        Kernel {
            model: model.clone(),
            inv,
            f0,
            differences: cfg.variant.differences(),
            scale: cfg.scale,
            multiplier,
        },
        d,
    ))
}

/// Uniform direction on the unit sphere.
fn random_direction<S: Scalar, R: Rng>(rng: &mut R, q: usize) -> Vec<S> {
    loop {
        let g: Vec<f64> = (0..q).map(|_| rng.sample(StandardNormal)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return g.iter().map(|&v| S::of_f64(v / norm)).collect();
        }
    }
}

/// Extrema of the kernel over the shell of radius `a` inside the region.
///
/// Spheres sample the whole shell. Cubes restrict to the shell-cube
/// intersection by rejection, always seeding the sample with the exact
/// diagonal points (the entire intersection in the `r -> 1` limit) and the
/// axial points when they fit; sampling alternates uniform directions with
/// corner-biased directions so acceptance stays workable near the corners,
/// and the attempt budget is capped because the intersection measure
/// vanishes as `r -> 1`.
fn shell_extrema<S: Scalar>(
    kernel: &Kernel<S>,
    region: &Region<S>,
    a: S,
    samples: usize,
    rng: &mut ChaCha12Rng,
) -> (S, S) {
    let q = region.q();
    let mut min = S::inf();
    let mut max = -S::inf();
    let mut take = |v: S| {
        if v < min {
            min = v;
        }
        if v > max {
            max = v;
        }
    };

    match region.kind() {
        RegionKind::Sphere => {
            for _ in 0..samples {
                let dir = random_direction::<S, _>(rng, q);
                let coords: Vec<S> = dir.iter().map(|&u| u * a).collect();
                take(kernel.raw(&coords));
            }
        }
        RegionKind::Cube => {
            let afl = a.as_f64();
            let diag = a / S::of_usize(q).sqrt();
            for idx in 0..(1usize << q) {
                let coords: Vec<S> = (0..q)
                    .map(|b| if idx >> b & 1 == 1 { diag } else { -diag })
                    .collect();
                take(kernel.raw(&coords));
            }
            if afl <= 1.0 + 1e-12 {
                for i in 0..q {
                    for sign in [-1.0, 1.0] {
                        let mut coords = vec![S::zero(); q];
                        coords[i] = S::of_f64(sign) * a;
                        take(kernel.raw(&coords));
                    }
                }
            }
            let inside = |c: &[f64]| c.iter().all(|v| v.abs() <= 1.0 + 1e-12);
            let target = samples.max(1000);
            let mut accepted = 0usize;
            let mut attempts = 0usize;
            let attempt_cap = 200 * samples.max(1000);
            while accepted < target && attempts < attempt_cap {
                attempts += 1;
                let dir: Vec<f64> = if attempts.is_multiple_of(2) {
                    random_direction::<f64, _>(rng, q)
                } else {
                    // corner-biased: project a uniform cube point radially
                    let v: Vec<f64> = (0..q).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                    let norm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
                    if norm < 1e-12 {
                        continue;
                    }
                    v.iter().map(|t| t / norm).collect()
                };
                let coords_f: Vec<f64> = dir.iter().map(|&u| u * afl).collect();
                if !inside(&coords_f) {
                    continue;
                }
                accepted += 1;
                let coords: Vec<S> = coords_f.iter().map(|&v| S::of_f64(v)).collect();
                take(kernel.raw(&coords));
            }
        }
    }
    (min, max)
}

fn dispersion_series<S: Scalar>(
    design: &Design<S>,
    model: &ModelSpec,
    region: &Region<S>,
    cfg: &GraphConfig<S>,
) -> Result<Vec<DispersionRow<S>>> {
    if cfg.n_radii < 2 {
        return Err(Error::invalid("dispersion graphs need at least two radii"));
    }
    let (kernel, _) = build_kernel(design, model, region, cfg)?;
    let max_dist = region.max_distance();
    let m0_needed = cfg.variant == GraphVariant::Dvdg;

    let rows: Result<Vec<DispersionRow<S>>> = (0..cfg.n_radii)
        .into_par_iter()
        .map(|k| {
            let r = S::of_usize(k) / S::of_usize(cfg.n_radii - 1);
            let x = match cfg.axis {
                GraphAxis::Distance => r,
                GraphAxis::VolumeFraction => volume_fraction(region, r)?,
            };
            if k == 0 {
                // degenerate shell: the center point alone
                let v = kernel.transform(kernel.center_raw());
                let mean = match region.kind() {
                    RegionKind::Sphere => Some(v),
                    RegionKind::Cube => None,
                };
                return Ok(DispersionRow {
                    x,
                    min: v,
                    mean,
                    max: v,
                });
            }
            let a = r * max_dist;
            let mean = match region.kind() {
                RegionKind::Cube => None,
                RegionKind::Sphere => {
                    let m = shell_moment_matrix(region, &kernel.model, r)?;
                    let m = if m0_needed { m.zero_intercept() } else { m };
                    Some(m.as_matrix().dot(&kernel.inv))
                }
            };
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            let (mut min, mut max) = shell_extrema(&kernel, region, a, cfg.shell_samples, &mut rng);
            // the exact shell mean lies in the attainable range, so it also
            // bounds the sampled extrema; this keeps min <= mean <= max even
            // when a rotatable design makes all three equal up to roundoff
            if let Some(m) = mean {
                min = min.min(m);
                max = max.max(m);
            }
            Ok(DispersionRow {
                x,
                min: kernel.transform(min),
                mean: mean.map(|m| kernel.transform(m)),
                max: kernel.transform(max),
            })
        })
        .collect();
    rows
}

fn fraction_series<S: Scalar>(
    design: &Design<S>,
    model: &ModelSpec,
    region: &Region<S>,
    cfg: &GraphConfig<S>,
) -> Result<Vec<(S, S)>> {
    if cfg.n_samples == 0 {
        return Err(Error::invalid("FDS graphs need at least one sample"));
    }
    let (kernel, _) = build_kernel(design, model, region, cfg)?;
    let n = cfg.n_samples;
    let q = region.q();
    const BLOCK: usize = 1 << 14;
    let blocks = n.div_ceil(BLOCK);
    let mut values: Vec<S> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b as u64);
            let count = BLOCK.min(n - b * BLOCK);
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let coords: Vec<S> = match region.kind() {
                    RegionKind::Cube => (0..q)
                        .map(|_| S::of_f64(rng.random::<f64>() * 2.0 - 1.0))
                        .collect(),
                    RegionKind::Sphere => {
                        let dir = random_direction::<S, _>(&mut rng, q);
                        let u: f64 = rng.random();
                        let radius = region.rho() * S::of_f64(u.powf(1.0 / q as f64));
                        dir.iter().map(|&d| d * radius).collect()
                    }
                };
                out.push(kernel.raw(&coords));
            }
            out
        })
        .collect();
    values.sort_unstable_by(|a, b| a.partial_cmp(b).expect("variances are finite"));
    let denom = S::of_usize(n + 1);
    Ok(values
        .into_iter()
        .enumerate()
        .map(|(j, v)| (S::of_usize(j + 1) / denom, kernel.transform(v)))
        .collect())
}

/// Generate the series selected by `cfg.variant`.
pub fn graph_series<S: Scalar>(
    design: &Design<S>,
    model: &ModelSpec,
    region: &Region<S>,
    cfg: &GraphConfig<S>,
) -> Result<GraphSeries<S>> {
    let data = if cfg.variant.dispersion() {
        GraphData::Dispersion(dispersion_series(design, model, region, cfg)?)
    } else {
        GraphData::Fraction(fraction_series(design, model, region, cfg)?)
    };
    let (d, _) = df_accounting(design, model);
    let metadata = vec![
        ("variant".to_string(), cfg.variant.key().to_string()),
        ("scale".to_string(), cfg.scale.key().to_string()),
        (
            "interval_alpha".to_string(),
            cfg.interval_alpha
                .map_or("none".to_string(), |a| format!("{}", a.as_f64())),
        ),
        ("axis".to_string(), cfg.axis.key().to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
        ("n".to_string(), design.n().to_string()),
        ("pure_error_df".to_string(), d.to_string()),
    ];
    Ok(GraphSeries {
        config: cfg.clone(),
        data,
        metadata,
    })
}

fn with_variant<S: Scalar>(cfg: &GraphConfig<S>, variant: GraphVariant) -> GraphConfig<S> {
    let mut cfg = cfg.clone();
    cfg.variant = variant;
    cfg
}

/// Variance dispersion graph rows.
pub fn vdg<S: Scalar>(
    design: &Design<S>,
    model: &ModelSpec,
    region: &Region<S>,
    cfg: &GraphConfig<S>,
) -> Result<GraphSeries<S>> {
    graph_series(design, model, region, &with_variant(cfg, GraphVariant::Vdg))
}

/// Difference variance dispersion graph rows.
pub fn dvdg<S: Scalar>(
    design: &Design<S>,
    model: &ModelSpec,
    region: &Region<S>,
    cfg: &GraphConfig<S>,
) -> Result<GraphSeries<S>> {
    graph_series(
        design,
        model,
        region,
        &with_variant(cfg, GraphVariant::Dvdg),
    )
}

/// Fraction-of-design-space series.
pub fn fds<S: Scalar>(
    design: &Design<S>,
    model: &ModelSpec,
    region: &Region<S>,
    cfg: &GraphConfig<S>,
) -> Result<GraphSeries<S>> {
    graph_series(design, model, region, &with_variant(cfg, GraphVariant::Fds))
}

/// Fraction-of-design-space series for differences from the center.
pub fn dfds<S: Scalar>(
    design: &Design<S>,
    model: &ModelSpec,
    region: &Region<S>,
    cfg: &GraphConfig<S>,
) -> Result<GraphSeries<S>> {
    graph_series(
        design,
        model,
        region,
        &with_variant(cfg, GraphVariant::Dfds),
    )
}
