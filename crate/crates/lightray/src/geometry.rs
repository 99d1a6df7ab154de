//! Lorentzian linear algebra at a point: metric registry, causal
//! classification of vectors and covectors, index raising/lowering and
//! Christoffel symbols.
//!
//! All registry metrics are presented in charts where the t = 0 slice is
//! spacelike and the metric takes the block form -dt^2 + h near it; no
//! coordinate changes are implemented.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance (against the Euclidean norm squared) separating the
/// lightlike band from spacelike/timelike. Exact g(v,v) = 0 is not
/// attainable in floating point.
pub const CAUSAL_TOL: f64 = 1e-10;

/// Condition-number threshold above which a metric evaluation is rejected
/// as degenerate.
pub const DEGENERACY_COND: f64 = 1e12;

/// A chart point z = (t, x^1, ..., x^n). Index 0 is time.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacetimePoint {
    pub coords: Vec<f64>,
}

impl SpacetimePoint {
    /// The paper's setting is 1+n dimensions with n >= 2.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                got: coords.len(),
            });
        }
        Ok(Self { coords })
    }

    pub fn t(&self) -> f64 {
        self.coords[0]
    }

    pub fn spatial(&self) -> &[f64] {
        &self.coords[1..]
    }
}

/// Contravariant components of a tangent vector at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub components: Vec<f64>,
}

/// Covariant components of a cotangent vector at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Cotangent {
    pub components: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CausalKind {
    Spacelike,
    Timelike,
    Lightlike,
}

/// Causal class of a vector or covector together with the quadratic form
/// q = g(v,v) (or g^{-1}(zeta,zeta)) that produced the verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CausalClass {
    pub kind: CausalKind,
    pub quadratic_form: f64,
}

/// Closed-form metric registry. Every entry supplies exact coefficients and
/// exact first derivatives; there is no symbolic differentiation.
#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    /// g = -dt^2 + sum (dx^a)^2 in 1+n dimensions.
    Minkowski { dim: usize },
    /// Product metric -dt^2 + h_{ab}(x) dx^a dx^b with diagonal
    /// h_aa(x) = 1 + coeff_a * (x^a)^2.
    Product { coeffs: Vec<f64> },
    /// Analytic perturbation of Minkowski: spatial block scaled by
    /// 1 + epsilon * exp(-|z|^2 / width^2). Stays in -dt^2 + h form.
    Perturbed { dim: usize, epsilon: f64, width: f64 },
}

impl Metric {
    pub fn minkowski(dim: usize) -> Self {
        Metric::Minkowski { dim }
    }

    /// Look up a metric by registry id and parameter list.
    ///
    /// * `minkowski`: params = [n]
    /// * `product`:   params = [a_1, ..., a_n] (diagonal coefficients)
    /// * `perturbed`: params = [n, epsilon] or [n, epsilon, width]
    pub fn from_registry(id: &str, params: &[f64]) -> Result<Self> {
        match id {
            "minkowski" => {
                let dim = params.first().copied().unwrap_or(3.0) as usize;
                if dim < 2 {
                    return Err(Error::BadRegistryParams {
                        id: id.into(),
                        reason: "spatial dimension must be >= 2".into(),
                    });
                }
                Ok(Metric::Minkowski { dim })
            }
            "product" => {
                if params.len() < 2 {
                    return Err(Error::BadRegistryParams {
                        id: id.into(),
                        reason: "need at least two diagonal coefficients".into(),
                    });
                }
                Ok(Metric::Product {
                    coeffs: params.to_vec(),
                })
            }
            "perturbed" => {
                let dim = params.first().copied().unwrap_or(3.0) as usize;
                let epsilon = params.get(1).copied().unwrap_or(0.05);
                let width = params.get(2).copied().unwrap_or(1.0);
                if dim < 2 || width <= 0.0 || epsilon <= -1.0 {
                    return Err(Error::BadRegistryParams {
                        id: id.into(),
                        reason: "need n >= 2, width > 0, epsilon > -1".into(),
                    });
                }
                Ok(Metric::Perturbed { dim, epsilon, width })
            }
            other => Err(Error::UnknownRegistryId(other.into())),
        }
    }

    pub fn registry_id(&self) -> &'static str {
        match self {
            Metric::Minkowski { .. } => "minkowski",
            Metric::Product { .. } => "product",
            Metric::Perturbed { .. } => "perturbed",
        }
    }

    /// Spatial dimension n; points have n+1 coordinates.
    pub fn spatial_dim(&self) -> usize {
        match self {
            Metric::Minkowski { dim } => *dim,
            Metric::Product { coeffs } => coeffs.len(),
            Metric::Perturbed { dim, .. } => *dim,
        }
    }

    pub fn chart_dim(&self) -> usize {
        self.spatial_dim() + 1
    }

    pub fn is_minkowski(&self) -> bool {
        matches!(self, Metric::Minkowski { .. })
    }

    /// Metric coefficients g_{ij}(z) as a symmetric (n+1)x(n+1) matrix.
    pub fn evaluate(&self, z: &[f64]) -> DMatrix<f64> {
        let d = self.chart_dim();
        debug_assert_eq!(z.len(), d);
        let mut g = DMatrix::zeros(d, d);
        g[(0, 0)] = -1.0;
        match self {
            Metric::Minkowski { .. } => {
                for a in 1..d {
                    g[(a, a)] = 1.0;
                }
            }
            Metric::Product { coeffs } => {
                for a in 1..d {
                    let xa = z[a];
                    g[(a, a)] = 1.0 + coeffs[a - 1] * xa * xa;
                }
            }
            Metric::Perturbed { epsilon, width, .. } => {
                let scale = 1.0 + epsilon * bump(z, *width);
                for a in 1..d {
                    g[(a, a)] = scale;
                }
            }
        }
        g
    }

    /// Inverse metric g^{ij}(z). All registry entries are diagonal, so the
    /// inverse is exact.
    pub fn inverse_at(&self, z: &[f64]) -> DMatrix<f64> {
        let mut ginv = self.evaluate(z);
        let d = ginv.nrows();
        for a in 0..d {
            ginv[(a, a)] = 1.0 / ginv[(a, a)];
        }
        ginv
    }

    /// Exact partial derivatives: partials(z)[k] = d g / d z^k.
    pub fn partials(&self, z: &[f64]) -> Vec<DMatrix<f64>> {
        let d = self.chart_dim();
        let mut out = vec![DMatrix::zeros(d, d); d];
        match self {
            Metric::Minkowski { .. } => {}
            Metric::Product { coeffs } => {
                for a in 1..d {
                    out[a][(a, a)] = 2.0 * coeffs[a - 1] * z[a];
                }
            }
            Metric::Perturbed { epsilon, width, .. } => {
                let b = bump(z, *width);
                let w2 = width * width;
                for k in 0..d {
                    let db = -2.0 * z[k] / w2 * b;
                    for a in 1..d {
                        out[k][(a, a)] = epsilon * db;
                    }
                }
            }
        }
        out
    }

    /// Quadratic form g(v, v) at z.
    pub fn quadratic_form(&self, z: &[f64], v: &[f64]) -> f64 {
        let g = self.evaluate(z);
        quad(&g, v)
    }

    /// Quadratic form g^{-1}(zeta, zeta) at z.
    pub fn co_quadratic_form(&self, z: &[f64], zeta: &[f64]) -> f64 {
        let ginv = self.inverse_at(z);
        quad(&ginv, zeta)
    }

    /// Lower an index: v_i = g_{ij} v^j.
    pub fn lower(&self, z: &[f64], v: &[f64]) -> Vec<f64> {
        let g = self.evaluate(z);
        mat_vec(&g, v)
    }

    /// Raise an index: zeta^i = g^{ij} zeta_j.
    pub fn raise(&self, z: &[f64], zeta: &[f64]) -> Vec<f64> {
        let ginv = self.inverse_at(z);
        mat_vec(&ginv, zeta)
    }

    /// Norm of a spatial vector in the induced metric h on the t = 0 slice
    /// at spatial position x.
    pub fn spatial_norm(&self, x: &[f64], w: &[f64]) -> f64 {
        let mut z = vec![0.0; self.chart_dim()];
        z[1..].copy_from_slice(x);
        let g = self.evaluate(&z);
        let mut q = 0.0;
        for a in 0..w.len() {
            for b in 0..w.len() {
                q += g[(a + 1, b + 1)] * w[a] * w[b];
            }
        }
        q.sqrt()
    }
}

fn bump(z: &[f64], width: f64) -> f64 {
    let r2: f64 = z.iter().map(|c| c * c).sum();
    (-r2 / (width * width)).exp()
}

fn quad(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let v = DVector::from_column_slice(v);
    (&v.transpose() * m * &v)[(0, 0)]
}

fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let v = DVector::from_column_slice(v);
    (m * v).as_slice().to_vec()
}

fn classify_from_q(q: f64, eucl_norm2: f64) -> Result<CausalClass> {
    if eucl_norm2 == 0.0 {
        return Err(Error::ZeroVector);
    }
    let kind = if q > CAUSAL_TOL * eucl_norm2 {
        CausalKind::Spacelike
    } else if q < -CAUSAL_TOL * eucl_norm2 {
        CausalKind::Timelike
    } else {
        CausalKind::Lightlike
    };
    Ok(CausalClass {
        kind,
        quadratic_form: q,
    })
}

/// Causal class of a tangent vector from the sign of g(v,v).
pub fn classify_vector(metric: &Metric, z: &[f64], v: &[f64]) -> Result<CausalClass> {
    let n2: f64 = v.iter().map(|c| c * c).sum();
    classify_from_q(metric.quadratic_form(z, v), n2)
}

/// Causal class of a covector from the sign of g^{-1}(zeta, zeta).
pub fn classify_covector(metric: &Metric, z: &[f64], zeta: &[f64]) -> Result<CausalClass> {
    let n2: f64 = zeta.iter().map(|c| c * c).sum();
    classify_from_q(metric.co_quadratic_form(z, zeta), n2)
}

/// Levi-Civita symbols Gamma^k_{ij} = 1/2 g^{kl} (d_i g_{lj} + d_j g_{li} - d_l g_{ij}).
///
/// Returned as christoffel(z)[k][(i, j)], symmetric in (i, j).
pub fn christoffel(metric: &Metric, z: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    let d = metric.chart_dim();
    let g = metric.evaluate(z);
    // Registry metrics are diagonal; condition number is the ratio of
    // diagonal magnitudes.
    let mut amax: f64 = 0.0;
    let mut amin = f64::INFINITY;
    for a in 0..d {
        amax = amax.max(g[(a, a)].abs());
        amin = amin.min(g[(a, a)].abs());
    }
    if amin == 0.0 || amax / amin > DEGENERACY_COND {
        return Err(Error::DegenerateMetric(DEGENERACY_COND));
    }
    let ginv = metric.inverse_at(z);
    let dg = metric.partials(z);
    let mut gamma = vec![DMatrix::zeros(d, d); d];
    for k in 0..d {
        for i in 0..d {
            for j in i..d {
                let mut s = 0.0;
                for l in 0..d {
                    s += ginv[(k, l)] * (dg[i][(l, j)] + dg[j][(l, i)] - dg[l][(i, j)]);
                }
                gamma[k][(i, j)] = 0.5 * s;
                gamma[k][(j, i)] = 0.5 * s;
            }
        }
    }
    Ok(gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn sample_metrics() -> Vec<Metric> {
        vec![
            Metric::minkowski(3),
            Metric::Product {
                coeffs: vec![1.0, 0.5, 0.0],
            },
            Metric::Perturbed {
                dim: 3,
                epsilon: 0.05,
                width: 1.0,
            },
        ]
    }

    #[test]
    fn minkowski_classification_examples() {
        let m = Metric::minkowski(3);
        let z = [0.0; 4];
        let c = classify_vector(&m, &z, &[1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(c.kind, CausalKind::Lightlike);
        let c = classify_vector(&m, &z, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(c.kind, CausalKind::Timelike);
        let c = classify_vector(&m, &z, &[0.0, 0.3, -0.2, 0.9]).unwrap();
        assert_eq!(c.kind, CausalKind::Spacelike);
    }

    #[test]
    fn covector_classification_examples() {
        let m = Metric::minkowski(3);
        let z = [0.0; 4];
        // e^{n-1} = (0, ..., 0, 1, 0)
        let c = classify_covector(&m, &z, &[0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(c.kind, CausalKind::Spacelike);
        // (1, theta) with |theta| = 1
        let th = 0.3f64;
        let c = classify_covector(&m, &z, &[1.0, th.cos(), th.sin(), 0.0]).unwrap();
        assert_eq!(c.kind, CausalKind::Lightlike);
    }

    #[test]
    fn zero_vector_is_an_error() {
        let m = Metric::minkowski(2);
        assert!(classify_vector(&m, &[0.0; 3], &[0.0; 3]).is_err());
        assert!(classify_covector(&m, &[0.0; 3], &[0.0; 3]).is_err());
    }

    #[test]
    fn classification_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = Metric::minkowski(3);
        for _ in 0..100 {
            let z: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lam: f64 = *[-1000.0, -0.3, 0.01, 5.0, 1e3].choose(&mut rng).unwrap();
            let vs: Vec<f64> = v.iter().map(|c| c * lam).collect();
            let a = classify_vector(&m, &z, &v).unwrap();
            let b = classify_vector(&m, &z, &vs).unwrap();
            assert_eq!(a.kind, b.kind);
        }
    }

    #[test]
    fn raise_lower_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in sample_metrics() {
            for _ in 0..100 {
                let z: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let back = m.raise(&z, &m.lower(&z, &v));
                for (a, b) in v.iter().zip(back.iter()) {
                    assert!((a - b).abs() < 1e-12, "round trip failed: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn vector_and_lowered_covector_classify_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for m in sample_metrics() {
            for _ in 0..100 {
                let z: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let a = classify_vector(&m, &z, &v).unwrap();
                let b = classify_covector(&m, &z, &m.lower(&z, &v)).unwrap();
                assert_eq!(a.kind, b.kind);
                assert!((a.quadratic_form - b.quadratic_form).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn minkowski_agrees_with_euclidean_sign_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let m = Metric::minkowski(3);
        let z = [0.0; 4];
        for _ in 0..200 {
            let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let space: f64 = v[1..].iter().map(|c| c * c).sum();
            let diff = space - v[0] * v[0];
            let c = classify_vector(&m, &z, &v).unwrap();
            let n2: f64 = v.iter().map(|c| c * c).sum();
            if diff > CAUSAL_TOL * n2 {
                assert_eq!(c.kind, CausalKind::Spacelike);
            } else if diff < -CAUSAL_TOL * n2 {
                assert_eq!(c.kind, CausalKind::Timelike);
            }
        }
    }

    #[test]
    fn signature_has_one_negative_eigenvalue() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for m in sample_metrics() {
            for _ in 0..50 {
                let z: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let g = m.evaluate(&z);
                let eig = g.symmetric_eigenvalues();
                let negs = eig.iter().filter(|&&l| l < 0.0).count();
                assert_eq!(negs, 1, "wrong signature for {m:?} at {z:?}");
                let prod = m.evaluate(&z) * m.inverse_at(&z);
                for i in 0..4 {
                    for j in 0..4 {
                        let want = if i == j { 1.0 } else { 0.0 };
                        assert!((prod[(i, j)] - want).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn christoffel_vanishes_for_minkowski() {
        let m = Metric::minkowski(3);
        let gamma = christoffel(&m, &[0.3, -0.2, 1.0, 0.5]).unwrap();
        for mat in &gamma {
            assert_eq!(mat.amax(), 0.0);
        }
    }

    #[test]
    fn christoffel_time_components_vanish_for_product_metric() {
        let m = Metric::Product {
            coeffs: vec![1.0, 0.3, 0.0],
        };
        let gamma = christoffel(&m, &[0.7, 0.4, -0.8, 0.1]).unwrap();
        let d = 4;
        for k in 0..d {
            for i in 0..d {
                for j in 0..d {
                    if k == 0 || i == 0 || j == 0 {
                        assert_eq!(gamma[k][(i, j)], 0.0);
                    }
                }
            }
        }
    }

    /// Finite-difference oracle: Gamma from central differences of the
    /// metric coefficients, independent of the exact-derivative path.
    fn christoffel_fd(m: &Metric, z: &[f64], h: f64) -> Vec<DMatrix<f64>> {
        let d = z.len();
        let mut dg = vec![DMatrix::zeros(d, d); d];
        for k in 0..d {
            let mut zp = z.to_vec();
            let mut zm = z.to_vec();
            zp[k] += h;
            zm[k] -= h;
            dg[k] = (m.evaluate(&zp) - m.evaluate(&zm)) / (2.0 * h);
        }
        let ginv = m.inverse_at(z);
        let mut gamma = vec![DMatrix::zeros(d, d); d];
        for k in 0..d {
            for i in 0..d {
                for j in 0..d {
                    let mut s = 0.0;
                    for l in 0..d {
                        s += ginv[(k, l)] * (dg[i][(l, j)] + dg[j][(l, i)] - dg[l][(i, j)]);
                    }
                    gamma[k][(i, j)] = 0.5 * s;
                }
            }
        }
        gamma
    }

    #[test]
    fn christoffel_matches_finite_differences_on_perturbed_metric() {
        let m = Metric::Perturbed {
            dim: 3,
            epsilon: 0.05,
            width: 1.0,
        };
        let z = [0.2, -0.4, 0.6, 0.1];
        let exact = christoffel(&m, &z).unwrap();
        let fd = christoffel_fd(&m, &z, 1e-5);
        for k in 0..4 {
            let diff = (&exact[k] - &fd[k]).amax();
            assert!(diff < 1e-6, "Gamma^{k} mismatch {diff:.3e}");
        }
    }

    #[test]
    fn christoffel_is_symmetric_exactly() {
        let m = Metric::Perturbed {
            dim: 3,
            epsilon: 0.05,
            width: 1.0,
        };
        let gamma = christoffel(&m, &[0.5, 0.1, -0.3, 0.8]).unwrap();
        for k in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(gamma[k][(i, j)], gamma[k][(j, i)]);
                }
            }
        }
    }

    #[test]
    fn registry_lookup() {
        assert!(Metric::from_registry("minkowski", &[3.0]).is_ok());
        assert!(Metric::from_registry("product", &[1.0, 0.0, 0.0]).is_ok());
        assert!(Metric::from_registry("perturbed", &[3.0, 0.05]).is_ok());
        assert!(matches!(
            Metric::from_registry("kerr", &[]),
            Err(Error::UnknownRegistryId(_))
        ));
    }
}
