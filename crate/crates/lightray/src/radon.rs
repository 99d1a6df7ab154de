//! Reduction of the light-ray transform to a Radon transform over timelike
//! planes: planes foliated by rays with direction theta(q), the
//! (q, xi) <-> zeta change of variables, the Fubini plane integral, and the
//! phase-function nondegeneracy check.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geodesic::invert_exp;
use crate::geometry::Metric;
use crate::transform::Sinogram;

/// Domain bound for the direction family parameter. The construction is
/// local near q = 0; the hard bound keeps Newton away from the other roots
/// of the defining equation.
pub const Q_MAX: f64 = std::f64::consts::FRAC_PI_4;

/// Default admissible neighborhood of e^{n-1} for solve_q, measured as
/// |zeta/|zeta| - e^{n-1}|.
pub const SOLVE_Q_NEIGHBORHOOD: f64 = 0.3;

/// The direction family theta(q) = (cos q) e_n + (sin q) e_{n-1} in R^n.
pub fn theta_direction(n: usize, q: f64) -> Vec<f64> {
    assert!(n >= 2);
    let mut theta = vec![0.0; n];
    theta[n - 1] = q.cos();
    theta[n - 2] = q.sin();
    theta
}

/// d theta / d q.
pub fn theta_derivative(n: usize, q: f64) -> Vec<f64> {
    let mut d = vec![0.0; n];
    d[n - 1] = -q.sin();
    d[n - 2] = q.cos();
    d
}

/// The spacetime covector e^{n-1} = (0, ..., 0, 1, 0) in R^{1+n}.
pub fn e_n_minus_1(n: usize) -> Vec<f64> {
    let mut zeta = vec![0.0; n + 1];
    zeta[n - 1] = 1.0;
    zeta
}

/// zeta(q, xi) = (-theta(q) . xi, xi).
pub fn zeta_of(q: f64, xi: &[f64]) -> Vec<f64> {
    let n = xi.len();
    let theta = theta_direction(n, q);
    let mut zeta = vec![0.0; n + 1];
    zeta[0] = -theta.iter().zip(xi.iter()).map(|(a, b)| a * b).sum::<f64>();
    zeta[1..].copy_from_slice(xi);
    zeta
}

/// A timelike plane { z : z . zeta(q, xi) = p }, equivalently the flow-out
/// of the spatial hyperplane x . xi = p along rays with direction theta(q).
#[derive(Debug, Clone)]
pub struct TimelikePlane {
    pub offset: f64,
    pub xi: Vec<f64>,
    pub q: f64,
}

impl TimelikePlane {
    pub fn spatial_dim(&self) -> usize {
        self.xi.len()
    }

    pub fn conormal(&self) -> Vec<f64> {
        zeta_of(self.q, &self.xi)
    }

    /// Flow-out representation: the point (s, x + s theta(q)) for x on the
    /// base hyperplane.
    pub fn flow_out(&self, x_base: &[f64], s: f64) -> Vec<f64> {
        let n = self.spatial_dim();
        let theta = theta_direction(n, self.q);
        let mut z = vec![0.0; n + 1];
        z[0] = s;
        for a in 0..n {
            z[a + 1] = x_base[a] + s * theta[a];
        }
        z
    }

    /// Membership residual of the covector representation: z . zeta - p.
    pub fn residual(&self, z: &[f64]) -> f64 {
        let zeta = self.conormal();
        z.iter().zip(zeta.iter()).map(|(a, b)| a * b).sum::<f64>() - self.offset
    }
}

/// Construct the plane from its ray foliation data, asserting that the
/// conormal is spacelike (|theta(q) . xi| < |xi|).
pub fn plane_from_rays(p: f64, xi: &[f64], q: f64) -> Result<TimelikePlane> {
    let norm2: f64 = xi.iter().map(|c| c * c).sum();
    if norm2 == 0.0 {
        return Err(Error::ZeroXi);
    }
    let theta = theta_direction(xi.len(), q);
    let dot: f64 = theta.iter().zip(xi.iter()).map(|(a, b)| a * b).sum();
    if dot * dot >= norm2 * (1.0 - 1e-12) {
        return Err(Error::NotTimelikePlane);
    }
    Ok(TimelikePlane {
        offset: p,
        xi: xi.to_vec(),
        q,
    })
}

/// Solve zeta_n cos q + zeta_{n-1} sin q = -zeta_0 for the root nearest 0,
/// by safeguarded Newton on [-Q_MAX, Q_MAX]. The covector must lie in the
/// configured neighborhood of e^{n-1}.
pub fn solve_q(zeta: &[f64]) -> Result<f64> {
    solve_q_with(zeta, SOLVE_Q_NEIGHBORHOOD)
}

pub fn solve_q_with(zeta: &[f64], neighborhood: f64) -> Result<f64> {
    let d = zeta.len();
    let n = d - 1;
    let norm: f64 = zeta.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let e = e_n_minus_1(n);
    let dist: f64 = zeta
        .iter()
        .zip(e.iter())
        .map(|(a, b)| (a / norm - b) * (a / norm - b))
        .sum::<f64>()
        .sqrt();
    if dist >= neighborhood {
        return Err(Error::OutsideSolvableNeighborhood);
    }
    // normalized for conditioning; the equation is homogeneous in zeta
    let zn = zeta[n] / norm;
    let znm1 = zeta[n - 1] / norm;
    let z0 = zeta[0] / norm;
    let g = |q: f64| zn * q.cos() + znm1 * q.sin() + z0;
    let dg = |q: f64| -zn * q.sin() + znm1 * q.cos();
    let (mut a, mut b) = (-Q_MAX, Q_MAX);
    let (ga, gb) = (g(a), g(b));
    if ga == 0.0 {
        return Ok(a);
    }
    if gb == 0.0 {
        return Ok(b);
    }
    if ga * gb > 0.0 {
        return Err(Error::OutsideSolvableNeighborhood);
    }
    let mut q = 0.0;
    for _ in 0..100 {
        let gq = g(q);
        if gq.abs() < 1e-15 {
            return Ok(q);
        }
        if gq * ga > 0.0 {
            a = q;
        } else {
            b = q;
        }
        let d = dg(q);
        let mut next = if d != 0.0 { q - gq / d } else { 0.5 * (a + b) };
        if !(a..=b).contains(&next) {
            next = 0.5 * (a + b);
        }
        if (next - q).abs() < 1e-16 && gq.abs() < 1e-12 {
            return Ok(next);
        }
        q = next;
    }
    if g(q).abs() < 1e-12 {
        Ok(q)
    } else {
        Err(Error::OutsideSolvableNeighborhood)
    }
}

/// Determinant of the Jacobian of (q, xi) -> zeta(q, xi); nonzero exactly
/// when dtheta/dq . xi != 0.
pub fn diffeo_jacobian(q: f64, xi: &[f64]) -> f64 {
    let n = xi.len();
    let d = n + 1;
    let theta = theta_direction(n, q);
    let dtheta = theta_derivative(n, q);
    let mut jac = DMatrix::zeros(d, d);
    // row 0: zeta_0 = -theta(q) . xi
    jac[(0, 0)] = -dtheta.iter().zip(xi.iter()).map(|(a, b)| a * b).sum::<f64>();
    for k in 0..n {
        jac[(0, k + 1)] = -theta[k];
    }
    // rows 1..: zeta_j = xi_j
    for j in 0..n {
        jac[(j + 1, j + 1)] = 1.0;
    }
    jac.determinant()
}

/// Weighted Radon transform over a timelike plane by Fubini: an
/// (n-1)-dimensional quadrature of the sinogram row at theta(q) over the
/// base hyperplane { x . xi = p } with Euclidean surface measure. With the
/// dt/ds = 1 scaling this equals the plane integral of kappa f.
pub fn radon_via_fubini(sino: &Sinogram, plane: &TimelikePlane) -> Result<RadonSample> {
    let n = plane.spatial_dim();
    assert_eq!(sino.x_grid.rank(), n);
    let theta = theta_direction(n, plane.q);
    let (row, mismatch) = sino.nearest_theta(&theta);

    // Coverage: the support shadow must not be clipped by the x-grid.
    let vals = sino.row(row);
    let peak = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let mut edge_peak = 0.0f64;
        for flat in 0..sino.x_grid.len() {
            let idx = sino.x_grid.multi_index(flat);
            let on_edge = idx
                .iter()
                .enumerate()
                .any(|(a, &i)| i == 0 || i + 1 == sino.x_grid.dims[a]);
            if on_edge {
                edge_peak = edge_peak.max(vals[flat].abs());
            }
        }
        if edge_peak > 1e-8 * peak {
            return Err(Error::CoverageViolation(format!(
                "sinogram row {row} is nonzero on the x-grid boundary ({edge_peak:.3e} vs peak {peak:.3e})"
            )));
        }
    }

    let norm: f64 = plane.xi.iter().map(|c| c * c).sum::<f64>().sqrt();
    let xi_hat: Vec<f64> = plane.xi.iter().map(|c| c / norm).collect();
    let basis = orthonormal_complement(&xi_hat);
    let base: Vec<f64> = xi_hat.iter().map(|c| c * plane.offset / norm).collect();

    // Quadrature box: large enough to cover the whole x-grid footprint.
    let b = sino.x_grid.bounds();
    let half_diag: f64 = b
        .lo
        .iter()
        .zip(b.hi.iter())
        .map(|(l, h)| (h - l) * (h - l))
        .sum::<f64>()
        .sqrt()
            / 2.0
        + 1.0;
    let step_target = sino
        .x_grid
        .spacing
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        / 2.0;
    let m = ((2.0 * half_diag / step_target).ceil() as usize).max(4);
    let m = m + m % 2;
    let h = 2.0 * half_diag / m as f64;
    let w = crate::transform::simpson_weights(m + 1, h);

    let mut x = vec![0.0; n];
    let value = match basis.len() {
        1 => {
            let u = &basis[0];
            let mut acc = 0.0;
            for i in 0..=m {
                let r = -half_diag + i as f64 * h;
                for a in 0..n {
                    x[a] = base[a] + r * u[a];
                }
                acc += w[i] * sino.interpolate_row(row, &x);
            }
            acc
        }
        2 => {
            let (u, v) = (&basis[0], &basis[1]);
            let mut acc = 0.0;
            for i in 0..=m {
                let r = -half_diag + i as f64 * h;
                for j in 0..=m {
                    let s = -half_diag + j as f64 * h;
                    for a in 0..n {
                        x[a] = base[a] + r * u[a] + s * v[a];
                    }
                    let f = sino.interpolate_row(row, &x);
                    if f != 0.0 {
                        acc += w[i] * w[j] * f;
                    }
                }
            }
            acc
        }
        k => panic!("base hyperplane quadrature implemented for n <= 3, got n = {}", k + 1),
    };
    Ok(RadonSample {
        value,
        theta_mismatch: mismatch,
        row,
    })
}

/// Result of a Fubini plane integral: the value, the mismatch between the
/// requested theta(q) and the sinogram row used, and the row index.
#[derive(Debug, Clone, Copy)]
pub struct RadonSample {
    pub value: f64,
    pub theta_mismatch: f64,
    pub row: usize,
}

/// The other route to the plane integral: dense tensor Simpson quadrature
/// of kappa f directly over the plane in flow-out coordinates (s, r) with
/// the same measure. Never touches a sinogram, so it serves as the
/// independent oracle for the Fubini identity.
pub fn plane_integral_direct<S: crate::fields::Sampleable + ?Sized>(
    source: &S,
    weight: &crate::fields::Weight,
    plane: &TimelikePlane,
    half_range: f64,
    step: f64,
) -> f64 {
    let n = plane.spatial_dim();
    let theta = theta_direction(n, plane.q);
    let mut vel = vec![1.0; n + 1];
    vel[1..].copy_from_slice(&theta);
    let norm: f64 = plane.xi.iter().map(|c| c * c).sum::<f64>().sqrt();
    let xi_hat: Vec<f64> = plane.xi.iter().map(|c| c / norm).collect();
    let basis = orthonormal_complement(&xi_hat);
    let base: Vec<f64> = xi_hat.iter().map(|c| c * plane.offset / norm).collect();
    let m = ((2.0 * half_range / step).ceil() as usize).max(4);
    let m = m + m % 2;
    let h = 2.0 * half_range / m as f64;
    let w = crate::transform::simpson_weights(m + 1, h);
    let mut z = vec![0.0; n + 1];
    let eval_line = |x: &[f64], z: &mut [f64]| -> f64 {
        let mut acc = 0.0;
        for j in 0..=m {
            let s = -half_range + j as f64 * h;
            z[0] = s;
            for a in 0..n {
                z[a + 1] = x[a] + s * theta[a];
            }
            let f = source.value(z);
            if f != 0.0 {
                acc += w[j] * weight.evaluate(z, &vel) * f;
            }
        }
        acc
    };
    match basis.len() {
        1 => {
            let u = &basis[0];
            let mut acc = 0.0;
            let mut x = vec![0.0; n];
            for i in 0..=m {
                let r = -half_range + i as f64 * h;
                for a in 0..n {
                    x[a] = base[a] + r * u[a];
                }
                acc += w[i] * eval_line(&x, &mut z);
            }
            acc
        }
        2 => {
            let (u, v) = (&basis[0], &basis[1]);
            let mut acc = 0.0;
            let mut x = vec![0.0; n];
            for i in 0..=m {
                let r = -half_range + i as f64 * h;
                for j2 in 0..=m {
                    let s2 = -half_range + j2 as f64 * h;
                    for a in 0..n {
                        x[a] = base[a] + r * u[a] + s2 * v[a];
                    }
                    acc += w[i] * w[j2] * eval_line(&x, &mut z);
                }
            }
            acc
        }
        k => panic!("plane quadrature implemented for n <= 3, got n = {}", k + 1),
    }
}

/// Orthonormal basis of the orthogonal complement of a unit vector.
fn orthonormal_complement(u: &[f64]) -> Vec<Vec<f64>> {
    let n = u.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n - 1);
    // seed with the coordinate axes least aligned with u
    let mut axes: Vec<usize> = (0..n).collect();
    axes.sort_by(|&a, &b| u[a].abs().partial_cmp(&u[b].abs()).unwrap());
    for &ax in axes.iter().take(n - 1) {
        let mut v = vec![0.0; n];
        v[ax] = 1.0;
        let du: f64 = v.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
        for a in 0..n {
            v[a] -= du * u[a];
        }
        for b in &basis {
            let d: f64 = v.iter().zip(b.iter()).map(|(a, c)| a * c).sum();
            for a in 0..n {
                v[a] -= d * b[a];
            }
        }
        let norm: f64 = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        for c in v.iter_mut() {
            *c /= norm;
        }
        basis.push(v);
    }
    basis
}

/// Phase function phi(z, zeta) = x_sharp(z, theta(zeta_0)) . zeta', with the
/// family parameter q packed in the time slot of zeta.
pub fn phase(metric: &Metric, z: &[f64], zeta: &[f64]) -> Result<f64> {
    let q = zeta[0];
    let (_s, x_sharp) = invert_exp(metric, q, z)?;
    Ok(x_sharp
        .iter()
        .zip(zeta[1..].iter())
        .map(|(a, b)| a * b)
        .sum())
}

/// Determinant of the mixed Hessian phi_{z zeta} at (z, zeta) = (0, e^{n-1}),
/// by central finite differences (base step 1e-4) with one Richardson
/// extrapolation. The nondegeneracy target is -1.
pub fn phase_det_check(metric: &Metric) -> Result<f64> {
    let n = metric.spatial_dim();
    let d = n + 1;
    let z0 = vec![0.0; d];
    let zeta0 = e_n_minus_1(n);
    let mixed = |h: f64| -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for (sz, szeta, sign) in
                    [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)]
                {
                    let mut z = z0.clone();
                    let mut zeta = zeta0.clone();
                    z[i] += sz * h;
                    zeta[j] += szeta * h;
                    acc += sign * phase(metric, &z, &zeta)?;
                }
                m[(i, j)] = acc / (4.0 * h * h);
            }
        }
        Ok(m)
    };
    let h = 1e-4;
    let coarse = mixed(h)?;
    let fine = mixed(0.5 * h)?;
    let extrapolated = (fine * 4.0 - coarse) / 3.0;
    Ok(extrapolated.determinant())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Phantom, Weight};
    use crate::grid::GridSpec;
    use crate::transform::{sinogram, SinogramSpec};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn theta_family_basics() {
        let th = theta_direction(3, 0.0);
        assert_eq!(th, vec![0.0, 0.0, 1.0]);
        for q in [-0.3, 0.0, 0.2, 0.7] {
            let th = theta_direction(3, q);
            let norm: f64 = th.iter().map(|c| c * c).sum::<f64>();
            assert!((norm - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn plane_through_the_origin_with_q_zero_is_the_coordinate_plane() {
        // q = 0, xi = e^{n-1}, p = 0 -> the plane x^{n-1} = 0 with conormal
        // (0, e^{n-1}).
        let n = 3;
        let mut xi = vec![0.0; n];
        xi[n - 2] = 1.0;
        let plane = plane_from_rays(0.0, &xi, 0.0).unwrap();
        assert_eq!(plane.conormal(), vec![0.0, 0.0, 1.0, 0.0]);
        // any point with x^{n-1} = 0 lies on it
        assert_eq!(plane.residual(&[0.7, 0.3, 0.0, -2.0]), 0.0);
    }

    #[test]
    fn flow_out_and_covector_representations_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..100 {
            let n = 3;
            let p: f64 = rng.gen_range(-2.0..2.0);
            let q: f64 = rng.gen_range(-0.5..0.5);
            let mut xi: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            xi[n - 2] += 2.0; // keep away from the degenerate direction
            let plane = match plane_from_rays(p, &xi, q) {
                Ok(pl) => pl,
                Err(_) => continue,
            };
            // random x on the base hyperplane x . xi = p
            let norm2: f64 = xi.iter().map(|c| c * c).sum();
            for _ in 0..100 {
                let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let dot: f64 = x.iter().zip(xi.iter()).map(|(a, b)| a * b).sum();
                let corr = (dot - p) / norm2;
                for a in 0..n {
                    x[a] -= corr * xi[a];
                }
                let s: f64 = rng.gen_range(-3.0..3.0);
                let z = plane.flow_out(&x, s);
                assert!(
                    plane.residual(&z).abs() < 1e-12,
                    "pi1/pi2 mismatch: {:.3e}",
                    plane.residual(&z)
                );
            }
        }
    }

    #[test]
    fn zero_xi_and_degenerate_directions_are_rejected() {
        assert!(matches!(
            plane_from_rays(0.0, &[0.0, 0.0, 0.0], 0.1),
            Err(Error::ZeroXi)
        ));
        // xi parallel to theta(0) = e_n: lightlike borderline, not timelike
        assert!(matches!(
            plane_from_rays(0.0, &[0.0, 0.0, 1.0], 0.0),
            Err(Error::NotTimelikePlane)
        ));
    }

    #[test]
    fn solve_q_trivial_and_forced_examples() {
        let n = 3;
        assert_eq!(solve_q(&e_n_minus_1(n)).unwrap(), 0.0);
        // zeta = (-sin 0.1, 0, 1, 0): (4e) reads sin q = sin 0.1
        let zeta = vec![-(0.1f64).sin(), 0.0, 1.0, 0.0];
        let q = solve_q(&zeta).unwrap();
        assert!((q - 0.1).abs() < 1e-12, "q = {q}");
    }

    #[test]
    fn solve_q_round_trips_against_zeta_of() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        for _ in 0..200 {
            let n = 3;
            let q: f64 = rng.gen_range(-0.25..0.25);
            let mut xi = vec![0.0; n];
            xi[n - 2] = 1.0;
            for c in xi.iter_mut() {
                *c += rng.gen_range(-0.05..0.05);
            }
            let zeta = zeta_of(q, &xi);
            let q_back = solve_q(&zeta).unwrap();
            assert!((q_back - q).abs() < 1e-10, "{q_back} vs {q}");
            // residual of (4e)
            let g = zeta[n] * q_back.cos() + zeta[n - 1] * q_back.sin() + zeta[0];
            assert!(g.abs() < 1e-12);
        }
    }

    #[test]
    fn solve_q_rejects_far_covectors() {
        assert!(matches!(
            solve_q(&[0.9, 0.1, 0.3, 0.0]),
            Err(Error::OutsideSolvableNeighborhood)
        ));
    }

    #[test]
    fn jacobian_determinant_examples_and_finite_differences() {
        let n = 3;
        let mut xi = vec![0.0; n];
        xi[n - 2] = 1.0;
        let det = diffeo_jacobian(0.0, &xi);
        assert!(det.abs() > 1e-6);
        assert!((det - (-1.0)).abs() < 1e-14);

        // degenerate: xi with dtheta/dq . xi = 0 at q = 0
        let xi_perp = vec![1.0, 0.0, 0.0];
        assert_eq!(diffeo_jacobian(0.0, &xi_perp), 0.0);

        // finite-difference Jacobian of zeta(q, xi)
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        for _ in 0..20 {
            let q: f64 = rng.gen_range(-0.3..0.3);
            let xi: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h = 1e-6;
            let d = n + 1;
            let mut jac = DMatrix::zeros(d, d);
            let zp = zeta_of(q + h, &xi);
            let zm = zeta_of(q - h, &xi);
            for i in 0..d {
                jac[(i, 0)] = (zp[i] - zm[i]) / (2.0 * h);
            }
            for k in 0..n {
                let mut xp = xi.clone();
                let mut xm = xi.clone();
                xp[k] += h;
                xm[k] -= h;
                let zp = zeta_of(q, &xp);
                let zm = zeta_of(q, &xm);
                for i in 0..d {
                    jac[(i, k + 1)] = (zp[i] - zm[i]) / (2.0 * h);
                }
            }
            let fd = jac.determinant();
            let exact = diffeo_jacobian(q, &xi);
            assert!((fd - exact).abs() < 1e-8, "{fd} vs {exact}");
        }
    }

    fn gaussian_sinogram_at(
        qs: &[f64],
        width: f64,
        weight: &Weight,
    ) -> (Sinogram, Metric, Phantom) {
        let m = Metric::minkowski(2);
        let ph = Phantom::Gaussian {
            center: vec![0.0, 0.0, 0.0],
            width,
        };
        let thetas: Vec<Vec<f64>> = qs.iter().map(|&q| theta_direction(2, q)).collect();
        let weights = vec![1.0; thetas.len()];
        let x_grid = GridSpec::covering(&[-7.0, -7.0], &[7.0, 7.0], &[141, 141]).unwrap();
        let spec = SinogramSpec::with_thetas(x_grid, thetas, weights, 2e-3, 8.0);
        let sino = sinogram(&m, &ph, weight, &spec).unwrap();
        (sino, m, ph)
    }

    /// Independent oracle: dense 2D quadrature of kappa f over the plane in
    /// flow-out coordinates (s, r) with the Euclidean base measure.
    fn plane_integral_oracle(ph: &Phantom, weight: &Weight, plane: &TimelikePlane) -> f64 {
        let n = plane.spatial_dim();
        let theta = theta_direction(n, plane.q);
        let mut vel = vec![1.0; n + 1];
        vel[1..].copy_from_slice(&theta);
        let norm: f64 = plane.xi.iter().map(|c| c * c).sum::<f64>().sqrt();
        let xi_hat: Vec<f64> = plane.xi.iter().map(|c| c / norm).collect();
        let u = &orthonormal_complement(&xi_hat)[0];
        let base: Vec<f64> = xi_hat.iter().map(|c| c * plane.offset / norm).collect();
        let half = 8.0;
        let m = 3200usize;
        let h = 2.0 * half / m as f64;
        let w = crate::transform::simpson_weights(m + 1, h);
        let mut acc = 0.0;
        for i in 0..=m {
            let r = -half + i as f64 * h;
            let x = [base[0] + r * u[0], base[1] + r * u[1]];
            let mut inner = 0.0;
            for j in 0..=m {
                let s = -half + j as f64 * h;
                let z = [s, x[0] + s * theta[0], x[1] + s * theta[1]];
                let f = ph.evaluate(&z);
                if f != 0.0 {
                    inner += w[j] * weight.evaluate(&z, &vel) * f;
                }
            }
            acc += w[i] * inner;
        }
        acc
    }

    #[test]
    fn fubini_matches_the_direct_plane_integral() {
        let (sino, _m, ph) = gaussian_sinogram_at(&[0.0], 1.0, &Weight::One);
        let plane = plane_from_rays(0.0, &[1.0, 0.0], 0.0).unwrap();
        let got = radon_via_fubini(&sino, &plane).unwrap();
        assert_eq!(got.theta_mismatch, 0.0);
        let want = plane_integral_oracle(&ph, &Weight::One, &plane);
        let rel = (got.value - want).abs() / want.abs();
        assert!(rel < 1e-3, "fubini {} vs oracle {} (rel {rel:.3e})", got.value, want);
    }

    #[test]
    fn fubini_is_linear_and_vanishes_on_zero_sinograms() {
        let (mut sino, ..) = gaussian_sinogram_at(&[0.1], 1.0, &Weight::One);
        let plane = plane_from_rays(0.3, &[0.9, 0.1], 0.1).unwrap();
        let v1 = radon_via_fubini(&sino, &plane).unwrap().value;
        for v in sino.values.iter_mut() {
            *v *= -2.5;
        }
        let v2 = radon_via_fubini(&sino, &plane).unwrap().value;
        assert!((v2 + 2.5 * v1).abs() < 1e-12 * v1.abs().max(1.0));
        for v in sino.values.iter_mut() {
            *v = 0.0;
        }
        assert_eq!(radon_via_fubini(&sino, &plane).unwrap().value, 0.0);
    }

    #[test]
    fn vanishing_ray_neighborhoods_give_vanishing_plane_integrals() {
        // the smoothness-transfer surrogate: if the phantom sits away from
        // every ray sweeping the plane, the Fubini integral is exactly zero.
        let m = Metric::minkowski(2);
        let ph = Phantom::Ball {
            center: vec![0.0, 5.0, 5.0],
            radius: 0.4,
            ramp: 0.1,
        };
        let thetas = vec![theta_direction(2, 0.0)];
        let x_grid = GridSpec::covering(&[-2.0, -2.0], &[2.0, 2.0], &[41, 41]).unwrap();
        let spec = SinogramSpec::with_thetas(x_grid, thetas, vec![1.0], 5e-3, 2.5);
        let sino = sinogram(&m, &ph, &Weight::One, &spec).unwrap();
        let plane = plane_from_rays(0.0, &[1.0, 0.0], 0.0).unwrap();
        assert_eq!(radon_via_fubini(&sino, &plane).unwrap().value, 0.0);
    }

    #[test]
    fn fubini_detects_clipped_support() {
        // x-grid too small for the phantom shadow -> coverage violation
        let m = Metric::minkowski(2);
        let ph = Phantom::Gaussian {
            center: vec![0.0, 0.0, 0.0],
            width: 1.0,
        };
        let thetas = vec![theta_direction(2, 0.0)];
        let x_grid = GridSpec::covering(&[-1.5, -1.5], &[1.5, 1.5], &[31, 31]).unwrap();
        let spec = SinogramSpec::with_thetas(x_grid, thetas, vec![1.0], 5e-3, 8.0);
        let sino = sinogram(&m, &ph, &Weight::One, &spec).unwrap();
        let plane = plane_from_rays(0.0, &[1.0, 0.0], 0.0).unwrap();
        assert!(matches!(
            radon_via_fubini(&sino, &plane),
            Err(Error::CoverageViolation(_))
        ));
    }

    #[test]
    fn phase_closed_form_in_minkowski() {
        let m = Metric::minkowski(3);
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        for _ in 0..50 {
            let z: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let q: f64 = rng.gen_range(-0.4..0.4);
            let xi: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut zeta = vec![q];
            zeta.extend(&xi);
            let got = phase(&m, &z, &zeta).unwrap();
            let theta = theta_direction(3, q);
            let want: f64 = (0..3).map(|a| (z[a + 1] - z[0] * theta[a]) * xi[a]).sum();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn phase_on_the_slice_is_linear_for_every_metric() {
        let metrics = [
            Metric::minkowski(3),
            Metric::Product {
                coeffs: vec![1.0, 0.0, 0.5],
            },
            Metric::Perturbed {
                dim: 3,
                epsilon: 0.05,
                width: 1.0,
            },
        ];
        for m in metrics {
            let z = [0.0, 0.2, -0.4, 0.3];
            let zeta = [0.17, 0.5, 1.0, -0.2];
            let got = phase(&m, &z, &zeta).unwrap();
            let want: f64 = 0.2 * 0.5 + (-0.4) * 1.0 + 0.3 * (-0.2);
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn phase_is_homogeneous_in_the_spatial_covector() {
        let m = Metric::Perturbed {
            dim: 3,
            epsilon: 0.05,
            width: 1.0,
        };
        let z = [0.05, 0.1, -0.2, 0.15];
        let zeta = [0.1, 0.3, 1.0, -0.4];
        let lam = 3.7;
        let scaled = [0.1, 0.3 * lam, 1.0 * lam, -0.4 * lam];
        let a = phase(&m, &z, &zeta).unwrap();
        let b = phase(&m, &z, &scaled).unwrap();
        assert!((b - lam * a).abs() < 1e-9);
    }

    #[test]
    fn phase_derivative_recovers_the_slice_coordinates() {
        // d phi / d zeta_k at zeta = e^{n-1}, t = 0 equals z^k.
        let metrics = [
            Metric::minkowski(3),
            Metric::Product {
                coeffs: vec![1.0, 0.0, 0.5],
            },
            Metric::Perturbed {
                dim: 3,
                epsilon: 0.05,
                width: 1.0,
            },
        ];
        for m in metrics {
            let n = 3;
            let z = [0.0, 0.12, -0.3, 0.21];
            let h = 1e-5;
            for k in 1..=n {
                let mut zp = vec![0.0; n + 1];
                zp[n - 1] = 1.0;
                let mut zm = zp.clone();
                zp[k] += h;
                zm[k] -= h;
                let d = (phase(&m, &z, &zp).unwrap() - phase(&m, &z, &zm).unwrap()) / (2.0 * h);
                assert!(
                    (d - z[k]).abs() < 1e-6,
                    "metric {m:?}, k = {k}: {d} vs {}",
                    z[k]
                );
            }
        }
    }

    #[test]
    fn phase_det_is_minus_one_for_minkowski() {
        let m = Metric::minkowski(3);
        let det = phase_det_check(&m).unwrap();
        assert!((det + 1.0).abs() < 1e-8, "det = {det}");
    }

    #[test]
    fn phase_det_is_minus_one_for_curved_registry_metrics() {
        let m = Metric::Perturbed {
            dim: 2,
            epsilon: 0.05,
            width: 1.0,
        };
        let det = phase_det_check(&m).unwrap();
        assert!((det + 1.0).abs() < 1e-3, "det = {det}");
    }
}
