//! The forward weighted light-ray transform in the slice parameterization
//! L_kappa f(x, theta) = int kappa(l(s), l'(s)) f(l(s)) ds over the null line
//! l_{x,theta}(s) = (s, x + s theta), its adjoint (backprojection), and
//! sinogram construction over (x, theta) product grids.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{Sampleable, ScalarField, Weight};
use crate::geodesic::{self, ExitInterval, LightGeodesic};
use crate::geometry::Metric;
use crate::grid::{interpolate, Bounds, GridSpec};

/// Neumaier compensated accumulator. Long one-sided quadrature sums pick
/// up a systematic rounding bias otherwise, which caps self-convergence
/// studies well above truncation error.
#[derive(Default, Clone, Copy)]
pub(crate) struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Composite Simpson weights on `count` uniform nodes spaced `h` apart.
/// `count` must be odd (an even number of intervals).
pub(crate) fn simpson_weights(count: usize, h: f64) -> Vec<f64> {
    assert!(count >= 3 && count % 2 == 1);
    let mut w = vec![0.0; count];
    for k in 0..count {
        w[k] = if k == 0 || k + 1 == count {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        } * h
            / 3.0;
    }
    w
}

/// Direction grid on S^{n-1} with quadrature weights summing to its area:
/// uniform angles for n = 2, a Fibonacci lattice for n = 3.
pub fn theta_grid(n: usize, count: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    assert!(count > 0);
    match n {
        2 => {
            let w = std::f64::consts::TAU / count as f64;
            let thetas = (0..count)
                .map(|j| {
                    let a = std::f64::consts::TAU * j as f64 / count as f64;
                    vec![a.cos(), a.sin()]
                })
                .collect();
            (thetas, vec![w; count])
        }
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
            let w = 4.0 * std::f64::consts::PI / count as f64;
            let thetas = (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let az = golden * k as f64;
                    vec![r * az.cos(), r * az.sin(), z]
                })
                .collect();
            (thetas, vec![w; count])
        }
        _ => panic!("theta grids are provided for n = 2 and n = 3 only"),
    }
}

/// Sinogram sampling plan: base-point grid, directions with quadrature
/// weights, the quadrature step along rays and the traced half-interval.
#[derive(Debug, Clone)]
pub struct SinogramSpec {
    pub x_grid: GridSpec,
    pub thetas: Vec<Vec<f64>>,
    pub theta_weights: Vec<f64>,
    pub quad_step: f64,
    pub s_half: f64,
}

impl SinogramSpec {
    pub fn uniform(n: usize, x_grid: GridSpec, n_theta: usize, quad_step: f64, s_half: f64) -> Self {
        let (thetas, theta_weights) = theta_grid(n, n_theta);
        Self {
            x_grid,
            thetas,
            theta_weights,
            quad_step,
            s_half,
        }
    }

    pub fn with_thetas(
        x_grid: GridSpec,
        thetas: Vec<Vec<f64>>,
        theta_weights: Vec<f64>,
        quad_step: f64,
        s_half: f64,
    ) -> Self {
        Self {
            x_grid,
            thetas,
            theta_weights,
            quad_step,
            s_half,
        }
    }
}

/// Samples of L_kappa f on the product grid, theta-major.
#[derive(Debug, Clone)]
pub struct Sinogram {
    pub x_grid: GridSpec,
    pub thetas: Vec<Vec<f64>>,
    pub theta_weights: Vec<f64>,
    pub values: Vec<f64>,
    pub quad_step: f64,
    pub metric_id: String,
    pub weight_id: String,
}

impl Sinogram {
    pub fn n_thetas(&self) -> usize {
        self.thetas.len()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let len = self.x_grid.len();
        &self.values[j * len..(j + 1) * len]
    }

    /// Multilinear interpolation of row j over the x-grid; 0 outside.
    pub fn interpolate_row(&self, j: usize, x: &[f64]) -> f64 {
        interpolate(&self.x_grid, self.row(j), x)
    }

    /// Index of the row whose direction is closest to theta, together with
    /// the Euclidean mismatch.
    pub fn nearest_theta(&self, theta: &[f64]) -> (usize, f64) {
        let mut best = (0usize, f64::INFINITY);
        for (j, th) in self.thetas.iter().enumerate() {
            let d: f64 = th
                .iter()
                .zip(theta.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best.1 {
                best = (j, d);
            }
        }
        (best.0, best.1.sqrt())
    }

    /// Inner product with the measure dx dtheta of the product grid.
    pub fn inner_product(&self, other: &Sinogram) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        let cell: f64 = self.x_grid.spacing.iter().product();
        let mut acc = 0.0;
        for j in 0..self.n_thetas() {
            let mut row_acc = 0.0;
            for (a, b) in self.row(j).iter().zip(other.row(j).iter()) {
                row_acc += a * b;
            }
            acc += row_acc * self.theta_weights[j];
        }
        acc * cell
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner_product(self).sqrt()
    }
}

/// Clip the ray (s, x + s theta) against an axis-aligned box, intersected
/// with [s_lo, s_hi]. Returns None if the intersection is empty.
fn clip_ray(x: &[f64], theta: &[f64], bounds: &Bounds, s_lo: f64, s_hi: f64) -> Option<(f64, f64)> {
    let mut lo = s_lo.max(bounds.lo[0]);
    let mut hi = s_hi.min(bounds.hi[0]);
    for a in 0..x.len() {
        let (bl, bh) = (bounds.lo[a + 1], bounds.hi[a + 1]);
        if theta[a].abs() < 1e-300 {
            if x[a] < bl || x[a] > bh {
                return None;
            }
        } else {
            let s1 = (bl - x[a]) / theta[a];
            let s2 = (bh - x[a]) / theta[a];
            lo = lo.max(s1.min(s2));
            hi = hi.min(s1.max(s2));
        }
        if lo >= hi {
            return None;
        }
    }
    (lo < hi).then_some((lo, hi))
}

/// Composite Simpson quadrature of kappa * f along a Minkowski line,
/// sampling the source directly. The window is the ray-box clip expanded by
/// one step of margin.
fn forward_minkowski<S: Sampleable + ?Sized>(
    source: &S,
    weight: &Weight,
    x: &[f64],
    theta: &[f64],
    s_lo: f64,
    s_hi: f64,
    step: f64,
) -> f64 {
    let bounds = source.support_box();
    let Some((mut lo, mut hi)) = clip_ray(x, theta, &bounds, s_lo, s_hi) else {
        return 0.0;
    };
    lo -= step;
    hi += step;
    let n = x.len();
    let mut vel = vec![1.0; n + 1];
    vel[1..].copy_from_slice(theta);
    let intervals = (((hi - lo) / step).ceil() as usize).max(2);
    let intervals = intervals + intervals % 2;
    let h = (hi - lo) / intervals as f64;
    let mut z = vec![0.0; n + 1];
    let mut acc = Kahan::default();
    for k in 0..=intervals {
        let s = lo + k as f64 * h;
        z[0] = s;
        for a in 0..n {
            z[a + 1] = x[a] + s * theta[a];
        }
        let f = source.value(&z);
        if f != 0.0 {
            let w = if k == 0 || k == intervals {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc.add(w * weight.evaluate(&z, &vel) * f);
        }
    }
    acc.total() * h / 3.0
}

/// The forward weighted transform along one null geodesic. For Minkowski
/// the line is closed-form and the source is sampled directly; for curved
/// registry metrics the geodesic is traced and the quadrature runs on the
/// traced nodes inside the exit window.
pub fn forward<S: Sampleable + ?Sized>(
    metric: &Metric,
    source: &S,
    weight: &Weight,
    geo: &LightGeodesic,
) -> Result<f64> {
    if metric.is_minkowski() {
        // Normalization is trivial there, so the direction is already the
        // Euclidean unit theta.
        return Ok(forward_minkowski(
            source,
            weight,
            &geo.base,
            &geo.direction,
            geo.s_min,
            geo.s_max,
            geo.step,
        ));
    }
    let path = geodesic::trace(metric, geo)?;
    let bounds = source.support_box();
    let (s_lo, s_hi) = match geodesic::exit_interval(&path, &bounds) {
        ExitInterval::Trapped => return Err(Error::TrappedGeodesic),
        ExitInterval::Window {
            s_out_minus,
            s_out_plus,
        } => (s_out_minus, s_out_plus),
    };
    if s_lo == s_hi {
        return Ok(0.0);
    }
    let mut i0 = path.params.partition_point(|&s| s < s_lo);
    let mut i1 = path.params.partition_point(|&s| s <= s_hi) - 1;
    if i0 > 0 {
        i0 -= 1;
    }
    if (i1 - i0) % 2 == 1 {
        if i1 + 1 < path.len() {
            i1 += 1;
        } else {
            i0 -= 1;
        }
    }
    let count = i1 - i0 + 1;
    let h = (path.params[i1] - path.params[i0]) / (count - 1) as f64;
    let w = simpson_weights(count, h);
    let mut acc = Kahan::default();
    for (k, widx) in (i0..=i1).zip(w.iter()) {
        let z = &path.points[k];
        let f = source.value(z);
        if f != 0.0 {
            let vel = metric.raise(z, &path.momenta[k]);
            acc.add(widx * weight.evaluate(z, &vel) * f);
        }
    }
    Ok(acc.total())
}

/// Forward transform over the whole (x, theta) product grid. Rows are
/// independent rays; evaluation order is deterministic regardless of the
/// thread count.
pub fn sinogram<S: Sampleable + ?Sized>(
    metric: &Metric,
    source: &S,
    weight: &Weight,
    spec: &SinogramSpec,
) -> Result<Sinogram> {
    let n = metric.spatial_dim();
    assert_eq!(spec.x_grid.rank(), n);
    let x_len = spec.x_grid.len();
    let total = x_len * spec.thetas.len();
    let results: Vec<Result<f64>> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let j = idx / x_len;
            let xi = idx % x_len;
            let x = spec.x_grid.point_at(&spec.x_grid.multi_index(xi));
            let geo = LightGeodesic::new(
                metric,
                &x,
                &spec.thetas[j],
                -spec.s_half,
                spec.s_half,
                spec.quad_step,
            )?;
            forward(metric, source, weight, &geo)
        })
        .collect();
    let mut values = Vec::with_capacity(total);
    for (idx, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => values.push(v),
            Err(e) => {
                return Err(Error::SinogramRow {
                    index: idx / x_len,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(Sinogram {
        x_grid: spec.x_grid.clone(),
        thetas: spec.thetas.clone(),
        theta_weights: spec.theta_weights.clone(),
        values,
        quad_step: spec.quad_step,
        metric_id: metric.registry_id().into(),
        weight_id: weight.registry_id().into(),
    })
}

/// Backprojection L'g(t, x) = int_{S^{n-1}} g(x - t theta, theta) dtheta in
/// the slice parameterization, discretized with the direction-grid weights
/// and multilinear interpolation in x. This is the formal adjoint of the
/// unweighted forward transform with respect to dx dtheta.
pub fn backproject(sino: &Sinogram, out_grid: &GridSpec) -> Result<ScalarField> {
    let n = sino.x_grid.rank();
    assert_eq!(out_grid.rank(), n + 1);
    let out_bounds = out_grid.bounds();
    let t_absmax = out_bounds.lo[0].abs().max(out_bounds.hi[0].abs());
    let sb = sino.x_grid.bounds();
    let eps = 1e-9;
    let covered = (0..n).all(|a| {
        out_bounds.lo[a + 1] - t_absmax >= sb.lo[a] - eps
            && out_bounds.hi[a + 1] + t_absmax <= sb.hi[a] + eps
    });
    if !covered {
        // enumerate a few offending cells for the error message
        let mut offenders = Vec::new();
        for flat in 0..out_grid.len() {
            let z = out_grid.point_at(&out_grid.multi_index(flat));
            let t = z[0].abs();
            let bad = (0..n).any(|a| z[a + 1] - t < sb.lo[a] - eps || z[a + 1] + t > sb.hi[a] + eps);
            if bad {
                offenders.push(flat);
                if offenders.len() >= 8 {
                    break;
                }
            }
        }
        return Err(Error::CoverageViolation(format!(
            "backprojection needs sinogram x-coverage shrunk by |t|; first offending cells: {offenders:?}"
        )));
    }

    let data: Vec<f64> = (0..out_grid.len())
        .into_par_iter()
        .map(|flat| {
            let z = out_grid.point_at(&out_grid.multi_index(flat));
            let t = z[0];
            let mut y = vec![0.0; n];
            let mut acc = 0.0;
            for (j, theta) in sino.thetas.iter().enumerate() {
                for a in 0..n {
                    y[a] = z[a + 1] - t * theta[a];
                }
                acc += sino.theta_weights[j] * sino.interpolate_row(j, &y);
            }
            acc
        })
        .collect();
    Ok(ScalarField {
        spec: out_grid.clone(),
        data,
    })
}

/// Normal operator L'L by brute-force composition: sinogram of the source
/// followed by backprojection onto `out_grid`.
pub fn normal<S: Sampleable + ?Sized>(
    metric: &Metric,
    source: &S,
    weight: &Weight,
    spec: &SinogramSpec,
    out_grid: &GridSpec,
) -> Result<ScalarField> {
    let sino = sinogram(metric, source, weight, spec)?;
    backproject(&sino, out_grid)
}
