//! Geometric hypotheses of the support theorems: timelike surfaces, strict
//! lightlike convexity, tangent-geodesic escape, foliation condition scans
//! and the tangent-ray support experiment.
//!
//! Orientation convention: a defining function F has interior {F < 0}, and
//! strict convexity means the tangent lightlike geodesic moves into {F > 0},
//! i.e. d^2/ds^2 (F o gamma) > 0 at the tangency. For geodesics that second
//! derivative equals the covariant Hessian applied to the velocity, which
//! makes the cylinder F = |x| - R strictly convex with value 1/R.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::SupportDescriptor;
use crate::geodesic::{trace_from, TraceOptions};
use crate::geometry::{christoffel, classify_covector, CausalKind, Metric};
use crate::grid::Bounds;
use crate::transform::Sinogram;

/// Default strictness threshold for the convexity verdict, scaled by the
/// Hessian magnitude at the point.
pub const TOL_CONV: f64 = 1e-8;

/// Which side of F = 0 is the interior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignConvention {
    #[default]
    InteriorNegative,
    InteriorPositive,
}

impl SignConvention {
    fn sign(self) -> f64 {
        match self {
            SignConvention::InteriorNegative => 1.0,
            SignConvention::InteriorPositive => -1.0,
        }
    }
}

/// Closed-form surface registry with exact gradients and second
/// derivatives. The defining functions follow the interior-negative
/// convention.
#[derive(Debug, Clone, PartialEq)]
pub enum Surface {
    /// F = |x| - R.
    Cylinder { radius: f64 },
    /// F = |x| - c|t|, the smooth part only: queries require |t| > t_min.
    DoubleCone { speed: f64, t_min: f64 },
    /// F = |x|^2 - c^2 t^2 - C.
    Hyperboloid { speed: f64, offset: f64 },
    /// F = |x - x0|^2 - c~^2 (t - t0)^2 - level.
    Quadric {
        t0: f64,
        x0: Vec<f64>,
        c_tilde: f64,
        level: f64,
    },
    /// F = x^axis - p (axis is a chart index >= 1); a flat timelike plane.
    SpatialPlane { axis: usize, offset: f64 },
    /// F = t - t0; a flat spacelike surface.
    TimeSlice { t0: f64 },
}

impl Surface {
    /// Look up a surface by registry id.
    ///
    /// * `cylinder`:      params = [R]
    /// * `double-cone`:   params = [c, t_min]
    /// * `hyperboloid`:   params = [c, C]
    /// * `quadric`:       params = [c_tilde, level, t0, x0...]
    /// * `plane-spatial`: params = [axis, offset]
    /// * `plane-time`:    params = [t0]
    pub fn from_registry(id: &str, params: &[f64]) -> Result<Self> {
        match id {
            "cylinder" => Ok(Surface::Cylinder {
                radius: params.first().copied().unwrap_or(1.0),
            }),
            "double-cone" => Ok(Surface::DoubleCone {
                speed: params.first().copied().unwrap_or(0.5),
                t_min: params.get(1).copied().unwrap_or(0.1),
            }),
            "hyperboloid" => Ok(Surface::Hyperboloid {
                speed: params.first().copied().unwrap_or(0.5),
                offset: params.get(1).copied().unwrap_or(1.0),
            }),
            "quadric" => Ok(Surface::Quadric {
                c_tilde: params.first().copied().unwrap_or(0.7),
                level: params.get(1).copied().unwrap_or(1.0),
                t0: params.get(2).copied().unwrap_or(0.0),
                x0: params.get(3..).map(|s| s.to_vec()).unwrap_or_default(),
            }),
            "plane-spatial" => Ok(Surface::SpatialPlane {
                axis: params.first().copied().unwrap_or(1.0) as usize,
                offset: params.get(1).copied().unwrap_or(0.0),
            }),
            "plane-time" => Ok(Surface::TimeSlice {
                t0: params.first().copied().unwrap_or(0.0),
            }),
            other => Err(Error::UnknownRegistryId(other.into())),
        }
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let spatial_norm = |z: &[f64]| z[1..].iter().map(|c| c * c).sum::<f64>().sqrt();
        match self {
            Surface::Cylinder { radius } => spatial_norm(z) - radius,
            Surface::DoubleCone { speed, .. } => spatial_norm(z) - speed * z[0].abs(),
            Surface::Hyperboloid { speed, offset } => {
                let r2: f64 = z[1..].iter().map(|c| c * c).sum();
                r2 - speed * speed * z[0] * z[0] - offset
            }
            Surface::Quadric {
                t0,
                x0,
                c_tilde,
                level,
            } => {
                let r2: f64 = z[1..]
                    .iter()
                    .enumerate()
                    .map(|(a, c)| {
                        let d = c - x0.get(a).copied().unwrap_or(0.0);
                        d * d
                    })
                    .sum();
                let dt = z[0] - t0;
                r2 - c_tilde * c_tilde * dt * dt - level
            }
            Surface::SpatialPlane { axis, offset } => z[*axis] - offset,
            Surface::TimeSlice { t0 } => z[0] - t0,
        }
    }

    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let d = z.len();
        let mut g = vec![0.0; d];
        match self {
            Surface::Cylinder { .. } => {
                let r: f64 = z[1..].iter().map(|c| c * c).sum::<f64>().sqrt();
                for a in 1..d {
                    g[a] = z[a] / r;
                }
            }
            Surface::DoubleCone { speed, .. } => {
                let r: f64 = z[1..].iter().map(|c| c * c).sum::<f64>().sqrt();
                g[0] = -speed * z[0].signum();
                for a in 1..d {
                    g[a] = z[a] / r;
                }
            }
            Surface::Hyperboloid { speed, .. } => {
                g[0] = -2.0 * speed * speed * z[0];
                for a in 1..d {
                    g[a] = 2.0 * z[a];
                }
            }
            Surface::Quadric {
                t0, x0, c_tilde, ..
            } => {
                g[0] = -2.0 * c_tilde * c_tilde * (z[0] - t0);
                for a in 1..d {
                    g[a] = 2.0 * (z[a] - x0.get(a - 1).copied().unwrap_or(0.0));
                }
            }
            Surface::SpatialPlane { axis, .. } => g[*axis] = 1.0,
            Surface::TimeSlice { .. } => g[0] = 1.0,
        }
        g
    }

    /// Exact coordinate Hessian d_i d_j F.
    pub fn coordinate_hessian(&self, z: &[f64]) -> DMatrix<f64> {
        let d = z.len();
        let mut h = DMatrix::zeros(d, d);
        match self {
            Surface::Cylinder { .. } | Surface::DoubleCone { .. } => {
                let r: f64 = z[1..].iter().map(|c| c * c).sum::<f64>().sqrt();
                for a in 1..d {
                    for b in 1..d {
                        let delta = if a == b { 1.0 } else { 0.0 };
                        h[(a, b)] = (delta - z[a] * z[b] / (r * r)) / r;
                    }
                }
            }
            Surface::Hyperboloid { speed, .. } => {
                h[(0, 0)] = -2.0 * speed * speed;
                for a in 1..d {
                    h[(a, a)] = 2.0;
                }
            }
            Surface::Quadric { c_tilde, .. } => {
                h[(0, 0)] = -2.0 * c_tilde * c_tilde;
                for a in 1..d {
                    h[(a, a)] = 2.0;
                }
            }
            Surface::SpatialPlane { .. } | Surface::TimeSlice { .. } => {}
        }
        h
    }
}

/// Covariant Hessian (nabla^2 F)_{ij} = d_i d_j F - Gamma^k_{ij} d_k F.
pub fn covariant_hessian(metric: &Metric, surface: &Surface, z: &[f64]) -> Result<DMatrix<f64>> {
    let mut h = surface.coordinate_hessian(z);
    let grad = surface.gradient(z);
    let gamma = christoffel(metric, z)?;
    let d = z.len();
    for i in 0..d {
        for j in 0..d {
            let mut corr = 0.0;
            for (k, gk) in grad.iter().enumerate() {
                corr += gamma[k][(i, j)] * gk;
            }
            h[(i, j)] -= corr;
        }
    }
    Ok(h)
}

/// A surface is timelike exactly when its conormal dF is spacelike.
pub fn is_timelike_surface(metric: &Metric, surface: &Surface, z: &[f64]) -> Result<bool> {
    let grad = surface.gradient(z);
    if grad.iter().map(|c| c * c).sum::<f64>() == 0.0 {
        return Err(Error::GradientVanishes);
    }
    Ok(classify_covector(metric, z, &grad)?.kind == CausalKind::Spacelike)
}

/// Verdict of the strict lightlike-convexity minimization at a point.
#[derive(Debug, Clone)]
pub struct ConvexityVerdict {
    /// Minimum of nabla^2 F(v, v) over lightlike tangents in the dt/ds = 1
    /// scaling (v^0 = 1).
    pub min_value: f64,
    pub strictly_convex: bool,
    /// The minimizing lightlike tangent direction.
    pub witness: Vec<f64>,
}

/// Orthonormal basis (Euclidean) of the kernel of dF at z.
fn tangent_basis(grad: &[f64]) -> Vec<Vec<f64>> {
    let d = grad.len();
    let norm: f64 = grad.iter().map(|c| c * c).sum::<f64>().sqrt();
    let u: Vec<f64> = grad.iter().map(|c| c / norm).collect();
    let mut axes: Vec<usize> = (0..d).collect();
    axes.sort_by(|&a, &b| u[a].abs().partial_cmp(&u[b].abs()).unwrap());
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d - 1);
    for &ax in axes.iter().take(d - 1) {
        let mut v = vec![0.0; d];
        v[ax] = 1.0;
        let du: f64 = v.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
        for a in 0..d {
            v[a] -= du * u[a];
        }
        for b in &basis {
            let dd: f64 = v.iter().zip(b.iter()).map(|(a, c)| a * c).sum();
            for a in 0..d {
                v[a] -= dd * b[a];
            }
        }
        let nn: f64 = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        for c in v.iter_mut() {
            *c /= nn;
        }
        basis.push(v);
    }
    basis
}

/// Lightlike directions tangent to the surface at z, parameterized over the
/// null cone of g restricted to ker dF. Vectors are scaled to the dt/ds = 1
/// convention (time component 1), which reproduces the closed-form value
/// 1/R for the cylinder.
fn lightlike_tangents(
    metric: &Metric,
    surface: &Surface,
    z: &[f64],
    samples: usize,
) -> Result<Vec<Vec<f64>>> {
    let grad = surface.gradient(z);
    if grad.iter().map(|c| c * c).sum::<f64>() == 0.0 {
        return Err(Error::GradientVanishes);
    }
    let basis = tangent_basis(&grad);
    let k = basis.len(); // = n
    let g = metric.evaluate(z);
    let mut a = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let mut s = 0.0;
            for p in 0..z.len() {
                for q in 0..z.len() {
                    s += g[(p, q)] * basis[i][p] * basis[j][q];
                }
            }
            a[(i, j)] = s;
        }
    }
    let eig = a.clone().symmetric_eigen();
    let mut neg = None;
    let mut pos: Vec<usize> = Vec::new();
    for i in 0..k {
        if eig.eigenvalues[i] < 0.0 {
            if neg.replace(i).is_some() {
                return Err(Error::NoLightlikeTangents);
            }
        } else {
            pos.push(i);
        }
    }
    let Some(neg) = neg else {
        return Err(Error::NoLightlikeTangents);
    };
    let lam_neg = -eig.eigenvalues[neg];
    // assemble chart vectors from eigen-coordinates
    let eigvec = |i: usize| -> Vec<f64> {
        let col = eig.eigenvectors.column(i);
        let mut v = vec![0.0; z.len()];
        for (j, b) in basis.iter().enumerate() {
            for (p, slot) in v.iter_mut().enumerate() {
                *slot += col[j] * b[p];
            }
        }
        v
    };
    let w_neg = eigvec(neg);
    let w_pos: Vec<Vec<f64>> = pos.iter().map(|&i| eigvec(i)).collect();
    let lam_pos: Vec<f64> = pos.iter().map(|&i| eig.eigenvalues[i]).collect();

    let build = |coefs: &[f64]| -> Vec<f64> {
        // null vector: a w_neg + sum c_i w_pos_i with lam_neg a^2 = sum lam_i c_i^2
        let s: f64 = coefs
            .iter()
            .zip(lam_pos.iter())
            .map(|(c, l)| l * c * c)
            .sum();
        let a0 = (s / lam_neg).sqrt();
        let mut v: Vec<f64> = w_neg.iter().map(|c| c * a0).collect();
        for (ci, w) in coefs.iter().zip(w_pos.iter()) {
            for (p, slot) in v.iter_mut().enumerate() {
                *slot += ci * w[p];
            }
        }
        // block metrics have no nonzero null vector with v^0 = 0
        let scale = v[0];
        v.iter_mut().for_each(|c| *c /= scale);
        v
    };

    let mut out = Vec::new();
    match pos.len() {
        1 => {
            out.push(build(&[1.0]));
            out.push(build(&[-1.0]));
        }
        2 => {
            for i in 0..samples {
                let psi = std::f64::consts::TAU * i as f64 / samples as f64;
                out.push(build(&[psi.cos(), psi.sin()]));
            }
        }
        _ => panic!("lightlike tangent sets are parameterized for n <= 3"),
    }
    Ok(out)
}

/// Minimize nabla^2 F(v, v) over the compact set of lightlike tangents at z
/// in the dt/ds = 1 scaling. Dense sampling (10^4 directions for n = 3)
/// plus golden-section refinement around the best cell.
pub fn strict_convexity_check(
    metric: &Metric,
    surface: &Surface,
    z: &[f64],
    convention: SignConvention,
) -> Result<ConvexityVerdict> {
    strict_convexity_check_with_tol(metric, surface, z, convention, TOL_CONV)
}

pub fn strict_convexity_check_with_tol(
    metric: &Metric,
    surface: &Surface,
    z: &[f64],
    convention: SignConvention,
    tol_conv: f64,
) -> Result<ConvexityVerdict> {
    let sign = convention.sign();
    let hess = covariant_hessian(metric, surface, z)? * sign;
    let quad = |v: &[f64]| -> f64 {
        let v = DVector::from_column_slice(v);
        (v.transpose() * &hess * &v)[(0, 0)]
    };
    let n = metric.spatial_dim();
    let coarse = if n == 2 { 2 } else { 10_000 };
    let tangents = lightlike_tangents(metric, surface, z, coarse)?;
    let mut best = f64::INFINITY;
    let mut witness = tangents[0].clone();
    let mut best_idx = 0usize;
    for (i, v) in tangents.iter().enumerate() {
        let q = quad(v);
        if q < best {
            best = q;
            witness = v.clone();
            best_idx = i;
        }
    }
    if n == 3 {
        // golden-section refinement on the circle parameter
        let step = std::f64::consts::TAU / coarse as f64;
        let psi0 = best_idx as f64 * step;
        let (mut a, mut b) = (psi0 - step, psi0 + step);
        let eval_at = |psi: f64| -> Result<f64> {
            let dirs = lightlike_tangents_at_angle(metric, surface, z, psi)?;
            Ok(quad(&dirs))
        };
        let phi = (5.0f64.sqrt() - 1.0) / 2.0;
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        let mut fc = eval_at(c)?;
        let mut fd = eval_at(d)?;
        for _ in 0..60 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - phi * (b - a);
                fc = eval_at(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi * (b - a);
                fd = eval_at(d)?;
            }
        }
        let psi = 0.5 * (a + b);
        let v = lightlike_tangents_at_angle(metric, surface, z, psi)?;
        let q = quad(&v);
        if q < best {
            best = q;
            witness = v;
        }
    }
    let scale = hess.amax().max(1.0);
    Ok(ConvexityVerdict {
        min_value: best,
        strictly_convex: best > tol_conv * scale,
        witness,
    })
}

/// Single lightlike tangent at circle parameter psi (n = 3 only).
fn lightlike_tangents_at_angle(
    metric: &Metric,
    surface: &Surface,
    z: &[f64],
    psi: f64,
) -> Result<Vec<f64>> {
    // rebuilt from the same decomposition; one sample at the angle
    let all = lightlike_tangents_with_angles(metric, surface, z, &[psi])?;
    Ok(all.into_iter().next().unwrap())
}

fn lightlike_tangents_with_angles(
    metric: &Metric,
    surface: &Surface,
    z: &[f64],
    angles: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let grad = surface.gradient(z);
    let basis = tangent_basis(&grad);
    let k = basis.len();
    let g = metric.evaluate(z);
    let mut a = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let mut s = 0.0;
            for p in 0..z.len() {
                for q in 0..z.len() {
                    s += g[(p, q)] * basis[i][p] * basis[j][q];
                }
            }
            a[(i, j)] = s;
        }
    }
    let eig = a.symmetric_eigen();
    let mut neg = None;
    let mut pos = Vec::new();
    for i in 0..k {
        if eig.eigenvalues[i] < 0.0 {
            neg = Some(i);
        } else {
            pos.push(i);
        }
    }
    let neg = neg.ok_or(Error::NoLightlikeTangents)?;
    let lam_neg = -eig.eigenvalues[neg];
    let eigvec = |i: usize| -> Vec<f64> {
        let col = eig.eigenvectors.column(i);
        let mut v = vec![0.0; z.len()];
        for (j, b) in basis.iter().enumerate() {
            for (p, slot) in v.iter_mut().enumerate() {
                *slot += col[j] * b[p];
            }
        }
        v
    };
    let w_neg = eigvec(neg);
    let w_pos: Vec<Vec<f64>> = pos.iter().map(|&i| eigvec(i)).collect();
    let lam_pos: Vec<f64> = pos.iter().map(|&i| eig.eigenvalues[i]).collect();
    assert_eq!(w_pos.len(), 2);
    Ok(angles
        .iter()
        .map(|psi| {
            let coefs = [psi.cos(), psi.sin()];
            let s: f64 = coefs
                .iter()
                .zip(lam_pos.iter())
                .map(|(c, l)| l * c * c)
                .sum();
            let a0 = (s / lam_neg).sqrt();
            let mut v: Vec<f64> = w_neg.iter().map(|c| c * a0).collect();
            for (ci, w) in coefs.iter().zip(w_pos.iter()) {
                for (p, slot) in v.iter_mut().enumerate() {
                    *slot += ci * w[p];
                }
            }
            let scale = v[0];
            v.iter_mut().for_each(|c| *c /= scale);
            v
        })
        .collect())
}

/// Escape check: trace the lightlike tangent geodesics through z across the
/// box and verify F o gamma has no further zero crossing after leaving the
/// initial tangency zone.
pub fn tangent_escape_check(
    metric: &Metric,
    surface: &Surface,
    z: &[f64],
    bounds: &Bounds,
    convention: SignConvention,
) -> Result<bool> {
    let sign = convention.sign();
    let n = metric.spatial_dim();
    let dirs = lightlike_tangents(metric, surface, z, if n == 2 { 2 } else { 24 })?;
    let grad = surface.gradient(z);
    let grad_norm: f64 = grad.iter().map(|c| c * c).sum::<f64>().sqrt();
    let step = 1e-3;
    let tol_touch = 10.0 * step * grad_norm;
    let diag: f64 = bounds
        .lo
        .iter()
        .zip(bounds.hi.iter())
        .map(|(l, h)| (h - l) * (h - l))
        .sum::<f64>()
        .sqrt();
    let s_half = 1.5 * diag;
    // A strictly convex tangency resolves within s ~ sqrt(2 tol / Q); a
    // geodesic still on the surface after this much arc is taken to stay
    // on it (the flat-plane case). Paths that leave the box earlier are
    // counted as escaped.
    let zone_cap = (0.1 * diag).max(30.0 * step);
    for v in dirs {
        let escaped = if metric.is_minkowski() {
            escape_scan_line(surface, z, &v, bounds, s_half, step, tol_touch, sign, zone_cap)
        } else {
            let p = metric.lower(z, &v);
            let path = trace_from(metric, z, &p, -s_half, s_half, step, &TraceOptions::default())?;
            escape_scan_path(
                surface,
                &path.points,
                path.zero_index(),
                bounds,
                step,
                tol_touch,
                sign,
                zone_cap,
            )
        };
        if !escaped {
            return Ok(false);
        }
    }
    Ok(true)
}

#[allow(clippy::too_many_arguments)]
fn escape_scan_line(
    surface: &Surface,
    z: &[f64],
    v: &[f64],
    bounds: &Bounds,
    s_half: f64,
    step: f64,
    tol_touch: f64,
    sign: f64,
    zone_cap: f64,
) -> bool {
    let nsteps = (s_half / step).ceil() as usize;
    let d = z.len();
    for dir in [-1.0, 1.0] {
        let mut in_zone = true;
        let mut point = vec![0.0; d];
        for k in 1..=nsteps {
            let s = dir * k as f64 * step;
            for a in 0..d {
                point[a] = z[a] + s * v[a];
            }
            if !bounds.contains(&point) {
                break;
            }
            let f = sign * surface.value(&point);
            if in_zone {
                if f.abs() > tol_touch {
                    if f < 0.0 {
                        return false;
                    }
                    in_zone = false;
                } else if s.abs() > zone_cap {
                    return false;
                }
            } else if f <= tol_touch {
                return false;
            }
        }
    }
    true
}

#[allow(clippy::too_many_arguments)]
fn escape_scan_path(
    surface: &Surface,
    points: &[Vec<f64>],
    zero_index: usize,
    bounds: &Bounds,
    step: f64,
    tol_touch: f64,
    sign: f64,
    zone_cap: f64,
) -> bool {
    let forward: Vec<usize> = (zero_index + 1..points.len()).collect();
    let backward: Vec<usize> = (0..zero_index).rev().collect();
    for side in [forward, backward] {
        let mut in_zone = true;
        for (walked, k) in side.into_iter().enumerate() {
            let point = &points[k];
            if !bounds.contains(point) {
                break;
            }
            let f = sign * surface.value(point);
            if in_zone {
                if f.abs() > tol_touch {
                    if f < 0.0 {
                        return false;
                    }
                    in_zone = false;
                } else if (walked + 1) as f64 * step > zone_cap {
                    return false;
                }
            } else if f <= tol_touch {
                return false;
            }
        }
    }
    true
}

/// The paper-style quadric foliation around a distant apex. The [0, 1]
/// level parameter decreases with G = |x - x0|^2 - c~^2 (t - t0)^2, so
/// tangent rays stay on the F <= sigma side and the innermost region is
/// F > 1.
#[derive(Debug, Clone)]
pub struct QuadricFoliation {
    pub t0: f64,
    pub x0: Vec<f64>,
    pub c_tilde: f64,
    pub g_min: f64,
    pub g_max: f64,
}

impl QuadricFoliation {
    pub fn g_value(&self, z: &[f64]) -> f64 {
        let dt = z[0] - self.t0;
        let r2: f64 = z[1..]
            .iter()
            .enumerate()
            .map(|(a, c)| {
                let d = c - self.x0.get(a).copied().unwrap_or(0.0);
                d * d
            })
            .sum();
        r2 - self.c_tilde * self.c_tilde * dt * dt
    }

    /// Foliation map value sigma(z) in level coordinates.
    pub fn sigma_of(&self, z: &[f64]) -> f64 {
        (self.g_max - self.g_value(z)) / (self.g_max - self.g_min)
    }

    pub fn g_of_sigma(&self, sigma: f64) -> f64 {
        self.g_max - sigma * (self.g_max - self.g_min)
    }

    /// Level set F^{-1}(sigma) as a registry surface (interior-negative).
    pub fn surface_at(&self, sigma: f64) -> Surface {
        Surface::Quadric {
            t0: self.t0,
            x0: self.x0.clone(),
            c_tilde: self.c_tilde,
            level: self.g_of_sigma(sigma),
        }
    }
}

/// Per-level verdict of the foliation scan.
#[derive(Debug, Clone)]
pub struct LevelVerdict {
    pub sigma: f64,
    pub points_checked: usize,
    pub gradient_ok: bool,
    pub timelike_ok: bool,
    pub convex_ok: bool,
    pub escape_ok: bool,
    pub min_convexity: f64,
    /// Point and direction attaining the worst convexity value.
    pub witness: Option<(Vec<f64>, Vec<f64>)>,
}

impl LevelVerdict {
    pub fn ok(&self) -> bool {
        self.gradient_ok && self.timelike_ok && self.convex_ok && self.escape_ok
    }
}

#[derive(Debug, Clone)]
pub struct FoliationReport {
    /// Condition (i): the outermost level avoids the phantom support cone.
    pub disjoint_ok: bool,
    pub levels: Vec<LevelVerdict>,
    pub pass: bool,
}

/// Sample points of { F = target } inside the box by sign-change bisection
/// along axis-parallel seed lines.
fn sample_level_set(
    f: &dyn Fn(&[f64]) -> f64,
    target: f64,
    bounds: &Bounds,
    max_points: usize,
) -> Vec<Vec<f64>> {
    let d = bounds.dim();
    let seeds_per_axis = 5usize;
    let line_samples = 48usize;
    let mut points = Vec::new();
    for axis in 0..d {
        let mut others: Vec<usize> = (0..d).filter(|&a| a != axis).collect();
        others.sort_unstable();
        let mut counter = vec![0usize; others.len()];
        loop {
            let mut z = vec![0.0; d];
            for (slot, &a) in others.iter().enumerate() {
                let u = (counter[slot] as f64 + 0.5) / seeds_per_axis as f64;
                z[a] = bounds.lo[a] + u * (bounds.hi[a] - bounds.lo[a]);
            }
            // scan along the axis for sign changes
            let mut prev_u = bounds.lo[axis];
            z[axis] = prev_u;
            let mut prev = f(&z) - target;
            for k in 1..=line_samples {
                let u = bounds.lo[axis]
                    + k as f64 / line_samples as f64 * (bounds.hi[axis] - bounds.lo[axis]);
                z[axis] = u;
                let cur = f(&z) - target;
                if prev == 0.0 || prev * cur < 0.0 {
                    // bisect
                    let (mut a, mut b) = (prev_u, u);
                    let (mut fa, _fb) = (prev, cur);
                    for _ in 0..60 {
                        let mid = 0.5 * (a + b);
                        z[axis] = mid;
                        let fm = f(&z) - target;
                        if fa * fm <= 0.0 {
                            b = mid;
                        } else {
                            a = mid;
                            fa = fm;
                        }
                    }
                    z[axis] = 0.5 * (a + b);
                    points.push(z.clone());
                    if points.len() >= max_points {
                        return points;
                    }
                }
                prev = cur;
                prev_u = u;
            }
            // advance the counter
            let mut slot = 0;
            loop {
                if slot == counter.len() {
                    break;
                }
                counter[slot] += 1;
                if counter[slot] < seeds_per_axis {
                    break;
                }
                counter[slot] = 0;
                slot += 1;
            }
            if counter.iter().all(|&c| c == 0) {
                break;
            }
        }
    }
    points
}

/// Sample points of a surface (its zero level) inside a box. Used by the
/// per-surface verdict reports.
pub fn sample_surface_points(surface: &Surface, bounds: &Bounds, max_points: usize) -> Vec<Vec<f64>> {
    let f = |z: &[f64]| surface.value(z);
    sample_level_set(&f, 0.0, bounds, max_points)
}

/// Verify the foliation conditions over a sigma grid, restricted to the
/// support box: (i) the sigma = 0 level avoids the phantom support,
/// (ii) dF != 0, (iii) strict lightlike convexity (timelike, convex and
/// escaping) on sampled level points.
pub fn foliation_scan(
    metric: &Metric,
    foliation: &QuadricFoliation,
    sigma_grid: &[f64],
    support_box: &Bounds,
    phantom_support: &SupportDescriptor,
) -> Result<FoliationReport> {
    let g_fn = |z: &[f64]| foliation.g_value(z);
    // (i): F^{-1}(0) against the declared support cone
    let zero_level = sample_level_set(&g_fn, foliation.g_of_sigma(0.0), support_box, 64);
    let in_support = |z: &[f64]| -> bool {
        let r: f64 = z[1..].iter().map(|c| c * c).sum::<f64>().sqrt();
        let in_cone = r <= phantom_support.speed * z[0].abs() + phantom_support.radius;
        let in_window = phantom_support
            .t_half
            .map(|th| z[0].abs() <= th)
            .unwrap_or(true);
        in_cone && in_window
    };
    let disjoint_ok = !zero_level.iter().any(|z| in_support(z));

    let levels: Vec<LevelVerdict> = sigma_grid
        .par_iter()
        .map(|&sigma| {
            let surface = foliation.surface_at(sigma);
            let pts = sample_level_set(&g_fn, foliation.g_of_sigma(sigma), support_box, 24);
            let mut verdict = LevelVerdict {
                sigma,
                points_checked: pts.len(),
                gradient_ok: true,
                timelike_ok: true,
                convex_ok: true,
                escape_ok: true,
                min_convexity: f64::INFINITY,
                witness: None,
            };
            for (i, z) in pts.iter().enumerate() {
                let grad = surface.gradient(z);
                let gn: f64 = grad.iter().map(|c| c * c).sum::<f64>().sqrt();
                if gn < 1e-10 {
                    verdict.gradient_ok = false;
                    continue;
                }
                match is_timelike_surface(metric, &surface, z) {
                    Ok(true) => {}
                    _ => {
                        verdict.timelike_ok = false;
                        continue;
                    }
                }
                match strict_convexity_check(metric, &surface, z, SignConvention::InteriorNegative)
                {
                    Ok(c) => {
                        if c.min_value < verdict.min_convexity {
                            verdict.min_convexity = c.min_value;
                            verdict.witness = Some((z.clone(), c.witness.clone()));
                        }
                        if !c.strictly_convex {
                            verdict.convex_ok = false;
                        }
                    }
                    Err(_) => {
                        verdict.convex_ok = false;
                        continue;
                    }
                }
                // escape is traced on a subsample only
                if i % 8 == 0 {
                    match tangent_escape_check(
                        metric,
                        &surface,
                        z,
                        support_box,
                        SignConvention::InteriorNegative,
                    ) {
                        Ok(true) => {}
                        _ => verdict.escape_ok = false,
                    }
                }
            }
            verdict
        })
        .collect();

    let pass = disjoint_ok && levels.iter().all(|v| v.ok());
    Ok(FoliationReport {
        disjoint_ok,
        levels,
        pass,
    })
}

/// Interior minimum of f(s) over uniform samples on [-s_half, s_half]:
/// requires a derivative sign change (- to +). Returns (s*, min value).
pub fn ray_min_scan(f: &dyn Fn(f64) -> f64, s_half: f64, step: f64) -> Option<(f64, f64)> {
    let nsteps = (2.0 * s_half / step).ceil() as usize;
    let mut best: Option<(f64, f64)> = None;
    let mut prev_s = -s_half;
    let mut prev = f(prev_s);
    let mut prev_slope: Option<f64> = None;
    for k in 1..=nsteps {
        let s = -s_half + k as f64 * (2.0 * s_half / nsteps as f64);
        let cur = f(s);
        let slope = cur - prev;
        if let Some(ps) = prev_slope {
            if ps < 0.0 && slope >= 0.0 {
                // local interior minimum near prev_s
                if best.map(|(_, b)| prev < b).unwrap_or(true) {
                    best = Some((prev_s, prev));
                }
            }
        }
        prev_slope = Some(slope);
        prev = cur;
        prev_s = s;
    }
    best
}

/// A sinogram ray tangent to some level of the foliation.
#[derive(Debug, Clone, Copy)]
pub struct TangentRay {
    pub theta_index: usize,
    pub x_index: usize,
    /// Level parameter of the grazed surface.
    pub sigma: f64,
    /// Sinogram value carried by the ray.
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct ShrinkReport {
    pub tangents: Vec<TangentRay>,
    pub max_abs_value: f64,
    pub noise_floor: f64,
}

impl ShrinkReport {
    pub fn violations(&self) -> Vec<&TangentRay> {
        self.tangents
            .iter()
            .filter(|t| t.value.abs() > self.noise_floor)
            .collect()
    }
}

/// Identify all sinogram rays tangent to some level F^{-1}(sigma),
/// sigma in [0, 1], and report the transform values they carry. For a
/// phantom vanishing on F^{-1}[0, 1) the tangent rays must read below the
/// noise floor; for a straddling phantom the violating rays are returned.
pub fn support_shrink_experiment(
    sino: &Sinogram,
    foliation: &QuadricFoliation,
    s_half: f64,
    noise_floor: f64,
) -> ShrinkReport {
    let n = sino.x_grid.rank();
    let x_len = sino.x_grid.len();
    let scan_step = sino.quad_step.max(1e-3) * 4.0;
    let tangents: Vec<TangentRay> = (0..sino.thetas.len() * x_len)
        .into_par_iter()
        .filter_map(|flat| {
            let j = flat / x_len;
            let xi = flat % x_len;
            let theta = &sino.thetas[j];
            let x = sino.x_grid.point_at(&sino.x_grid.multi_index(xi));
            let g_along = |s: f64| -> f64 {
                let mut z = vec![s; 1];
                z.extend((0..n).map(|a| x[a] + s * theta[a]));
                foliation.g_value(&z)
            };
            let (_, g_star) = ray_min_scan(&g_along, s_half, scan_step)?;
            // tangent to the level with G = g_star; admissible when the
            // level parameter falls in [0, 1]
            let sigma = (foliation.g_max - g_star) / (foliation.g_max - foliation.g_min);
            if !(0.0..=1.0).contains(&sigma) {
                return None;
            }
            Some(TangentRay {
                theta_index: j,
                x_index: xi,
                sigma,
                value: sino.values[flat],
            })
        })
        .collect();
    let max_abs_value = tangents
        .iter()
        .fold(0.0f64, |m, t| m.max(t.value.abs()));
    ShrinkReport {
        tangents,
        max_abs_value,
        noise_floor,
    }
}
