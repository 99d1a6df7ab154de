//! Null geodesic tracing from the t = 0 slice in Hamiltonian form, exit
//! windows against a support box, and inversion of the exponential-type map
//! (s, x) -> gamma_{x,theta(q)}(s) used by the phase function.
//!
//! The cotangent formulation dz/ds = g^{-1} p, dp_k/ds = -1/2 d_k g^{ij} p_i p_j
//! keeps g^{-1}(p, p) as a first integral, so the recorded drift is a direct
//! integrator diagnostic. The parameterization is fixed by dt/ds = 1 at s = 0
//! on the slice, so transform values are well-defined numbers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::Metric;
use crate::grid::Bounds;
use crate::radon::theta_direction;

/// Default affine-parameter step for the fixed-step RK4 integrator.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Hamiltonian drift beyond which a trace aborts as unreliable.
pub const DRIFT_ABORT: f64 = 1e-4;

/// Convergence target for the exponential-map Newton iteration. Tighter
/// than the contract's 1e-9 so that finite differences of the phase stay
/// clean.
pub const INVERT_TOL: f64 = 1e-12;

const INVERT_MAX_ITER: usize = 50;

/// A null geodesic issued from (0, x) with celestial direction theta,
/// normalized to unit length in the induced spatial metric h so that the
/// initial velocity (1, theta) is lightlike.
#[derive(Debug, Clone)]
pub struct LightGeodesic {
    pub base: Vec<f64>,
    pub direction: Vec<f64>,
    pub s_min: f64,
    pub s_max: f64,
    pub step: f64,
}

impl LightGeodesic {
    pub fn new(
        metric: &Metric,
        x: &[f64],
        theta_raw: &[f64],
        s_min: f64,
        s_max: f64,
        step: f64,
    ) -> Result<Self> {
        let (_, _) = initial_data(metric, x, theta_raw)?;
        let norm = metric.spatial_norm(x, theta_raw);
        Ok(Self {
            base: x.to_vec(),
            direction: theta_raw.iter().map(|c| c / norm).collect(),
            s_min,
            s_max,
            step,
        })
    }
}

/// A traced path: parameter values, points, cotangent momenta and the
/// deviation of g^{-1}(p, p) from its initial value at every sample.
#[derive(Debug, Clone)]
pub struct GeodesicPath {
    pub params: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub momenta: Vec<Vec<f64>>,
    pub drift: Vec<f64>,
}

impl GeodesicPath {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn max_drift(&self) -> f64 {
        self.drift.iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    /// Index of the sample at parameter s = 0.
    pub fn zero_index(&self) -> usize {
        self.params
            .iter()
            .position(|&s| s == 0.0)
            .expect("paths always contain the s = 0 sample")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TraceOptions {
    /// Re-project the momentum onto the initial mass shell every k steps.
    /// Off by default: projection masks integrator bugs and the drift is
    /// the test signal.
    pub renormalize_every: Option<usize>,
    pub drift_abort: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            renormalize_every: None,
            drift_abort: DRIFT_ABORT,
        }
    }
}

/// Initial data on the t = 0 slice: z0 = (0, x) and the lowered momentum of
/// v0 = (1, theta_raw / |theta_raw|_h). The slice normalization realizes the
/// dt/ds = 1 scaling convention.
pub fn initial_data(metric: &Metric, x: &[f64], theta_raw: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = metric.spatial_dim();
    if x.len() != n || theta_raw.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x.len().max(theta_raw.len()),
        });
    }
    if theta_raw.iter().all(|&c| c == 0.0) {
        return Err(Error::ZeroVector);
    }
    let mut z0 = vec![0.0; n + 1];
    z0[1..].copy_from_slice(x);
    let g = metric.evaluate(&z0);
    if g[(0, 0)] != -1.0 || (1..=n).any(|a| g[(0, a)] != 0.0) {
        return Err(Error::NotNormalForm);
    }
    let norm = metric.spatial_norm(x, theta_raw);
    let mut v0 = vec![1.0; n + 1];
    for a in 0..n {
        v0[a + 1] = theta_raw[a] / norm;
    }
    let p0 = metric.lower(&z0, &v0);
    Ok((z0, p0))
}

struct Derivative {
    dz: DVector<f64>,
    dp: DVector<f64>,
}

fn hamiltonian_rhs(metric: &Metric, z: &DVector<f64>, p: &DVector<f64>) -> Derivative {
    let ginv = metric.inverse_at(z.as_slice());
    let v = &ginv * p;
    let dg = metric.partials(z.as_slice());
    let d = z.len();
    let mut dp = DVector::zeros(d);
    for k in 0..d {
        // dp_k/ds = +1/2 v^a (d_k g_ab) v^b
        dp[k] = 0.5 * (v.transpose() * &dg[k] * &v)[(0, 0)];
    }
    Derivative { dz: v, dp }
}

fn rk4_step(metric: &Metric, z: &mut DVector<f64>, p: &mut DVector<f64>, h: f64) {
    let k1 = hamiltonian_rhs(metric, z, p);
    let k2 = hamiltonian_rhs(
        metric,
        &(&*z + &k1.dz * (0.5 * h)),
        &(&*p + &k1.dp * (0.5 * h)),
    );
    let k3 = hamiltonian_rhs(
        metric,
        &(&*z + &k2.dz * (0.5 * h)),
        &(&*p + &k2.dp * (0.5 * h)),
    );
    let k4 = hamiltonian_rhs(metric, &(&*z + &k3.dz * h), &(&*p + &k3.dp * h));
    *z += (k1.dz + k2.dz * 2.0 + k3.dz * 2.0 + k4.dz) * (h / 6.0);
    *p += (k1.dp + k2.dp * 2.0 + k3.dp * 2.0 + k4.dp) * (h / 6.0);
}

fn hamiltonian(metric: &Metric, z: &DVector<f64>, p: &DVector<f64>) -> f64 {
    metric.co_quadratic_form(z.as_slice(), p.as_slice())
}

/// Rescale the spatial momentum so that g^{-1}(p, p) returns to `target`.
/// Only valid for the block metrics of the registry (g_{0a} = 0).
fn project_to_shell(metric: &Metric, z: &DVector<f64>, p: &mut DVector<f64>, target: f64) {
    let ginv = metric.inverse_at(z.as_slice());
    let d = z.len();
    let mut spatial = 0.0;
    for a in 1..d {
        for b in 1..d {
            spatial += ginv[(a, b)] * p[a] * p[b];
        }
    }
    let time_part = ginv[(0, 0)] * p[0] * p[0];
    let want = target - time_part;
    if spatial > 0.0 && want > 0.0 {
        let alpha = (want / spatial).sqrt();
        for a in 1..d {
            p[a] *= alpha;
        }
    }
}

/// Trace from arbitrary initial data (z0, p0) at s = 0 over [s_min, s_max].
/// The interval must contain 0. Both half-intervals use a uniform step as
/// close to `step` as divides them exactly.
pub fn trace_from(
    metric: &Metric,
    z0: &[f64],
    p0: &[f64],
    s_min: f64,
    s_max: f64,
    step: f64,
    opts: &TraceOptions,
) -> Result<GeodesicPath> {
    assert!(s_min <= 0.0 && s_max >= 0.0 && step > 0.0);
    let z0 = DVector::from_column_slice(z0);
    let p0 = DVector::from_column_slice(p0);
    let h0 = hamiltonian(metric, &z0, &p0);

    let half = |sign: f64, extent: f64| -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>)> {
        let mut params = Vec::new();
        let mut points = Vec::new();
        let mut momenta = Vec::new();
        let mut drifts = Vec::new();
        if extent <= 0.0 {
            return Ok((params, points, momenta, drifts));
        }
        let nsteps = (extent / step).ceil().max(1.0) as usize;
        let h = sign * extent / nsteps as f64;
        let mut z = z0.clone();
        let mut p = p0.clone();
        for k in 1..=nsteps {
            rk4_step(metric, &mut z, &mut p, h);
            if let Some(every) = opts.renormalize_every {
                if k % every == 0 {
                    project_to_shell(metric, &z, &mut p, h0);
                }
            }
            let drift = hamiltonian(metric, &z, &p) - h0;
            if drift.abs() > opts.drift_abort {
                return Err(Error::IntegrationUnreliable {
                    drift: drift.abs(),
                    budget: opts.drift_abort,
                });
            }
            params.push(k as f64 * h);
            points.push(z.as_slice().to_vec());
            momenta.push(p.as_slice().to_vec());
            drifts.push(drift);
        }
        Ok((params, points, momenta, drifts))
    };

    let (bp, bz, bm, bd) = half(-1.0, -s_min)?;
    let (fp, fz, fm, fd) = half(1.0, s_max)?;

    let total = bp.len() + 1 + fp.len();
    let mut path = GeodesicPath {
        params: Vec::with_capacity(total),
        points: Vec::with_capacity(total),
        momenta: Vec::with_capacity(total),
        drift: Vec::with_capacity(total),
    };
    for i in (0..bp.len()).rev() {
        path.params.push(bp[i]);
        path.points.push(bz[i].clone());
        path.momenta.push(bm[i].clone());
        path.drift.push(bd[i]);
    }
    path.params.push(0.0);
    path.points.push(z0.as_slice().to_vec());
    path.momenta.push(p0.as_slice().to_vec());
    path.drift.push(0.0);
    path.params.extend(fp);
    path.points.extend(fz);
    path.momenta.extend(fm);
    path.drift.extend(fd);
    Ok(path)
}

/// Trace a null geodesic with default options.
pub fn trace(metric: &Metric, geo: &LightGeodesic) -> Result<GeodesicPath> {
    trace_with(metric, geo, &TraceOptions::default())
}

pub fn trace_with(metric: &Metric, geo: &LightGeodesic, opts: &TraceOptions) -> Result<GeodesicPath> {
    let (z0, p0) = initial_data(metric, &geo.base, &geo.direction)?;
    trace_from(metric, &z0, &p0, geo.s_min, geo.s_max, geo.step, opts)
}

/// Exit window of a traced path with respect to a support box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExitInterval {
    /// Smallest parameter window outside of which the path never re-enters
    /// the box. An empty intersection is reported with equal endpoints.
    Window { s_out_minus: f64, s_out_plus: f64 },
    /// The path is still inside the box at an endpoint of its interval.
    Trapped,
}

pub fn exit_interval(path: &GeodesicPath, support_box: &Bounds) -> ExitInterval {
    let inside: Vec<bool> = path
        .points
        .iter()
        .map(|z| support_box.contains(z))
        .collect();
    let first = inside.iter().position(|&b| b);
    let last = inside.iter().rposition(|&b| b);
    match (first, last) {
        (None, _) | (_, None) => ExitInterval::Window {
            s_out_minus: path.params[0],
            s_out_plus: path.params[0],
        },
        (Some(f), Some(l)) => {
            if f == 0 || l + 1 == path.len() {
                ExitInterval::Trapped
            } else {
                ExitInterval::Window {
                    s_out_minus: path.params[f - 1],
                    s_out_plus: path.params[l + 1],
                }
            }
        }
    }
}

/// Evaluate gamma_{x,theta(q)}(s): the geodesic issued from (0, x) with
/// initial velocity (1, theta(q)), integrated to parameter s with a uniform
/// step of size at most `step`.
pub fn shoot(metric: &Metric, q: f64, s: f64, x: &[f64], step: f64) -> Result<Vec<f64>> {
    let n = metric.spatial_dim();
    let theta = theta_direction(n, q);
    let mut z0 = vec![0.0; n + 1];
    z0[1..].copy_from_slice(x);
    if metric.is_minkowski() {
        let mut z = z0;
        z[0] = s;
        for a in 0..n {
            z[a + 1] += s * theta[a];
        }
        return Ok(z);
    }
    let mut v0 = vec![1.0; n + 1];
    v0[1..].copy_from_slice(&theta);
    let p0 = metric.lower(&z0, &v0);
    let mut z = DVector::from_column_slice(&z0);
    let mut p = DVector::from_column_slice(&p0);
    if s != 0.0 {
        let nsteps = (s.abs() / step).ceil().max(1.0) as usize;
        let h = s / nsteps as f64;
        for _ in 0..nsteps {
            rk4_step(metric, &mut z, &mut p, h);
        }
    }
    Ok(z.as_slice().to_vec())
}

/// Invert the map (s, x) -> gamma_{x,theta(q)}(s) near the origin chart:
/// returns (s_sharp, x_sharp) with gamma_{x_sharp,theta(q)}(s_sharp) = z.
///
/// Newton iteration on the shooting map, seeded with the first-order
/// expansion s = t, x = x' - t theta(q); exact for Minkowski.
pub fn invert_exp(metric: &Metric, q: f64, z: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = metric.spatial_dim();
    let theta = theta_direction(n, q);
    let t = z[0];
    let mut x: Vec<f64> = (0..n).map(|a| z[a + 1] - t * theta[a]).collect();
    if metric.is_minkowski() {
        return Ok((t, x));
    }
    let mut s = t;
    let step = DEFAULT_STEP;
    let d = n + 1;
    let mut residual = f64::INFINITY;
    for iter in 0..INVERT_MAX_ITER {
        let base = shoot(metric, q, s, &x, step)?;
        let g: Vec<f64> = (0..d).map(|i| base[i] - z[i]).collect();
        residual = g.iter().map(|c| c * c).sum::<f64>().sqrt();
        if residual < INVERT_TOL {
            return Ok((s, x));
        }
        // Finite-difference Jacobian of the shooting map in (s, x).
        let delta = 1e-6;
        let mut jac = DMatrix::zeros(d, d);
        let plus = shoot(metric, q, s + delta, &x, step)?;
        for i in 0..d {
            jac[(i, 0)] = (plus[i] - base[i]) / delta;
        }
        for a in 0..n {
            let mut xp = x.clone();
            xp[a] += delta;
            let sh = shoot(metric, q, s, &xp, step)?;
            for i in 0..d {
                jac[(i, a + 1)] = (sh[i] - base[i]) / delta;
            }
        }
        let rhs = DVector::from_iterator(d, g.iter().map(|c| -c));
        let du = jac.lu().solve(&rhs).ok_or(Error::OutsideInvertibility {
            residual,
            iterations: iter,
        })?;
        s += du[0];
        for a in 0..n {
            x[a] += du[a + 1];
        }
    }
    Err(Error::OutsideInvertibility {
        residual,
        iterations: INVERT_MAX_ITER,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn perturbed() -> Metric {
        Metric::Perturbed {
            dim: 3,
            epsilon: 0.05,
            width: 1.0,
        }
    }

    #[test]
    fn initial_data_examples() {
        let m = Metric::minkowski(3);
        // theta_raw = e_n and 3 e_n both give v0 = (1, e_n)
        for scale in [1.0, 3.0] {
            let (z0, p0) = initial_data(&m, &[0.0; 3], &[0.0, 0.0, scale]).unwrap();
            assert_eq!(z0, vec![0.0; 4]);
            assert_eq!(p0, vec![-1.0, 0.0, 0.0, 1.0]);
        }
        assert!(matches!(
            initial_data(&m, &[0.0; 3], &[0.0; 3]),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn initial_data_is_null_for_product_metric() {
        let m = Metric::Product {
            coeffs: vec![1.0, 0.0, 0.0],
        };
        let x = [0.7, -0.3, 0.2];
        let (z0, p0) = initial_data(&m, &x, &[1.0, 2.0, -0.5]).unwrap();
        let q = m.co_quadratic_form(&z0, &p0);
        assert!(q.abs() < 1e-12, "null constraint violated: {q:.3e}");
        let v = m.raise(&z0, &p0);
        assert!((v[0] - 1.0).abs() < 1e-14, "dt/ds must be 1");
    }

    #[test]
    fn minkowski_trace_is_a_straight_line() {
        let m = Metric::minkowski(3);
        let geo = LightGeodesic::new(&m, &[0.0; 3], &[0.0, 0.0, 1.0], -2.0, 2.0, 1e-3).unwrap();
        let path = trace(&m, &geo).unwrap();
        assert!(path.max_drift() <= 1e-14);
        for (k, s) in path.params.iter().enumerate() {
            let z = &path.points[k];
            assert!((z[0] - s).abs() < 1e-12);
            assert!(z[1].abs() < 1e-12 && z[2].abs() < 1e-12);
            assert!((z[3] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn minkowski_drift_stays_at_roundoff_over_long_traces() {
        let m = Metric::minkowski(3);
        let geo =
            LightGeodesic::new(&m, &[0.5, -0.2, 0.0], &[1.0, 1.0, 1.0], -10.0, 10.0, 1e-3).unwrap();
        let path = trace(&m, &geo).unwrap();
        assert!(path.max_drift() <= 1e-14, "drift {:.3e}", path.max_drift());
    }

    #[test]
    fn time_translation_covariance_in_minkowski() {
        let m = Metric::minkowski(2);
        let h = 1e-3;
        let t0 = 0.25; // multiple of the step
        let x0 = [0.4, -0.1];
        let theta = [0.6, 0.8];
        let geo_a = LightGeodesic::new(&m, &x0, &theta, -1.0, 1.0, h).unwrap();
        let path_a = trace(&m, &geo_a).unwrap();
        // l_{x,theta}(s) + (t0, x0') = l_{x + x0' - t0 theta, theta}(s + t0)
        let shift = [0.3, 0.2];
        let xb = [
            x0[0] + shift[0] - t0 * theta[0],
            x0[1] + shift[1] - t0 * theta[1],
        ];
        let geo_b = LightGeodesic::new(&m, &xb, &theta, -1.0 + t0, 1.0 + t0, h).unwrap();
        let path_b = trace(&m, &geo_b).unwrap();
        let off = (t0 / h).round() as usize;
        let ka = path_a.zero_index();
        let kb = path_b.zero_index();
        for j in 0..200 {
            let a = &path_a.points[ka + j];
            let b = &path_b.points[kb + off + j];
            assert!((a[0] + t0 - b[0]).abs() < 1e-12);
            assert!((a[1] + shift[0] - b[1]).abs() < 1e-12);
            assert!((a[2] + shift[1] - b[2]).abs() < 1e-12);
        }
    }

    /// Independent Riemannian oracle: unit-speed geodesics of the diagonal
    /// family h_aa = 1 + c_a (x^a)^2 integrated in second-order form.
    fn riemannian_geodesic(
        coeffs: &[f64],
        x0: &[f64],
        v0: &[f64],
        s_end: f64,
        step: f64,
    ) -> Vec<Vec<f64>> {
        let n = coeffs.len();
        let acc = |x: &[f64], v: &[f64]| -> Vec<f64> {
            // Gamma^a_{aa} = c_a x_a / (1 + c_a x_a^2); all other symbols vanish.
            (0..n)
                .map(|a| {
                    let gam = coeffs[a] * x[a] / (1.0 + coeffs[a] * x[a] * x[a]);
                    -gam * v[a] * v[a]
                })
                .collect()
        };
        let nsteps = (s_end / step).round() as usize;
        let mut x = x0.to_vec();
        let mut v = v0.to_vec();
        let mut out = vec![x.clone()];
        for _ in 0..nsteps {
            let h = step;
            let a1 = acc(&x, &v);
            let x2: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * h * v[i]).collect();
            let v2: Vec<f64> = (0..n).map(|i| v[i] + 0.5 * h * a1[i]).collect();
            let a2 = acc(&x2, &v2);
            let x3: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * h * v2[i]).collect();
            let v3: Vec<f64> = (0..n).map(|i| v[i] + 0.5 * h * a2[i]).collect();
            let a3 = acc(&x3, &v3);
            let x4: Vec<f64> = (0..n).map(|i| x[i] + h * v3[i]).collect();
            let v4: Vec<f64> = (0..n).map(|i| v[i] + h * a3[i]).collect();
            let a4 = acc(&x4, &v4);
            for i in 0..n {
                x[i] += h / 6.0 * (v[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]);
                v[i] += h / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]);
            }
            out.push(x.clone());
        }
        out
    }

    #[test]
    fn product_metric_projects_to_a_riemannian_geodesic() {
        let coeffs = vec![1.0, 0.5, 0.25];
        let m = Metric::Product {
            coeffs: coeffs.clone(),
        };
        let x0 = [0.3, -0.2, 0.1];
        let step = 1e-3;
        let geo = LightGeodesic::new(&m, &x0, &[1.0, 1.0, 0.5], 0.0, 2.0, step).unwrap();
        let path = trace(&m, &geo).unwrap();
        let oracle = riemannian_geodesic(&coeffs, &x0, &geo.direction, 2.0, step);
        assert_eq!(path.len(), oracle.len());
        let mut worst: f64 = 0.0;
        for (z, xo) in path.points.iter().zip(oracle.iter()) {
            for a in 0..3 {
                worst = worst.max((z[a + 1] - xo[a]).abs());
            }
        }
        assert!(worst < 1e-6, "spatial projection off by {worst:.3e}");
    }

    #[test]
    fn perturbed_drift_budget_and_step_halving() {
        let m = perturbed();
        let geo = LightGeodesic::new(&m, &[0.2, 0.1, 0.0], &[1.0, 0.3, 0.2], -10.0, 10.0, 1e-3)
            .unwrap();
        let path = trace(&m, &geo).unwrap();
        assert!(path.max_drift() <= 1e-8, "drift {:.3e}", path.max_drift());

        // step halving reduces the drift ~16x; measured where the drift is
        // comfortably above roundoff
        let at = |step: f64| {
            let g = LightGeodesic { step, ..geo.clone() };
            trace(&m, &g).unwrap().max_drift()
        };
        let ratio = at(8e-3) / at(4e-3);
        assert!(
            (8.0..40.0).contains(&ratio),
            "expected ~16x drift reduction, got {ratio:.2}"
        );
    }

    #[test]
    fn fourth_order_self_convergence() {
        let m = perturbed();
        let endpoint = |step: f64| {
            let geo =
                LightGeodesic::new(&m, &[0.3, 0.0, -0.1], &[0.5, 1.0, 0.2], 0.0, 2.0, step).unwrap();
            let path = trace(&m, &geo).unwrap();
            path.points.last().unwrap().clone()
        };
        let z1 = endpoint(4e-3);
        let z2 = endpoint(2e-3);
        let z3 = endpoint(1e-3);
        let d12: f64 = z1
            .iter()
            .zip(z2.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let d23: f64 = z2
            .iter()
            .zip(z3.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let order = (d12 / d23).log2();
        assert!(
            (3.5..=4.5).contains(&order),
            "self-convergence order {order:.2}"
        );
    }

    #[test]
    fn renormalization_flag_reduces_drift() {
        let m = perturbed();
        let geo =
            LightGeodesic::new(&m, &[0.2, 0.1, 0.0], &[1.0, 0.3, 0.2], 0.0, 5.0, 5e-3).unwrap();
        let free = trace(&m, &geo).unwrap().max_drift();
        let opts = TraceOptions {
            renormalize_every: Some(100),
            ..Default::default()
        };
        let projected = trace_with(&m, &geo, &opts).unwrap().max_drift();
        assert!(projected <= free);
    }

    #[test]
    fn exit_interval_examples() {
        let m = Metric::minkowski(2);
        let geo = LightGeodesic::new(&m, &[0.0, 0.0], &[0.0, 1.0], -2.0, 2.0, 1e-3).unwrap();
        let path = trace(&m, &geo).unwrap();
        let unit_box = Bounds::new(vec![-1.0; 3], vec![1.0; 3]);
        match exit_interval(&path, &unit_box) {
            ExitInterval::Window {
                s_out_minus,
                s_out_plus,
            } => {
                assert!((s_out_minus + 1.0).abs() < 2e-3);
                assert!((s_out_plus - 1.0).abs() < 2e-3);
            }
            ExitInterval::Trapped => panic!("not trapped"),
        }

        // line missing the box entirely
        let far = Bounds::new(vec![5.0; 3], vec![6.0; 3]);
        match exit_interval(&path, &far) {
            ExitInterval::Window {
                s_out_minus,
                s_out_plus,
            } => assert_eq!(s_out_minus, s_out_plus),
            ExitInterval::Trapped => panic!("not trapped"),
        }

        // still inside at the endpoint
        let huge = Bounds::new(vec![-10.0; 3], vec![10.0; 3]);
        assert_eq!(exit_interval(&path, &huge), ExitInterval::Trapped);
    }

    #[test]
    fn invert_exp_is_exact_for_minkowski() {
        let m = Metric::minkowski(3);
        let q = 0.15;
        let z = [0.4, 0.3, -0.2, 0.7];
        let (s, x) = invert_exp(&m, q, &z).unwrap();
        let theta = theta_direction(3, q);
        assert_eq!(s, z[0]);
        for a in 0..3 {
            assert_eq!(x[a], z[a + 1] - z[0] * theta[a]);
        }
    }

    #[test]
    fn invert_exp_on_the_slice_is_the_identity() {
        for m in [perturbed(), Metric::Product { coeffs: vec![1.0, 0.0, 0.0] }] {
            let z = [0.0, 0.3, -0.1, 0.2];
            let (s, x) = invert_exp(&m, 0.07, &z).unwrap();
            assert_eq!(s, 0.0);
            assert_eq!(x, vec![0.3, -0.1, 0.2]);
        }
    }

    #[test]
    fn invert_exp_round_trip_on_perturbed_metric() {
        let m = perturbed();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let q = rng.gen_range(-0.2..0.2);
            let s = rng.gen_range(-0.15..0.15);
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.3..0.3)).collect();
            let z = shoot(&m, q, s, &x, DEFAULT_STEP).unwrap();
            let (s_sharp, x_sharp) = invert_exp(&m, q, &z).unwrap();
            let z_back = shoot(&m, q, s_sharp, &x_sharp, DEFAULT_STEP).unwrap();
            let err: f64 = z_back
                .iter()
                .zip(z.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(err < 1e-9, "round trip residual {err:.3e}");
            assert!((s_sharp - s).abs() < 1e-7);
        }
    }
}
