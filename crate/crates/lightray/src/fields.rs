//! Spacetime scalar fields on uniform grids, phantom generators with
//! controlled support and singular directions, and the weight registry.

use crate::error::{Error, Result};
use crate::grid::{interpolate, Bounds, GridSpec};

/// A gridded real field over spacetime; row-major with t the slowest axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub spec: GridSpec,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(spec: GridSpec) -> Self {
        let len = spec.len();
        Self {
            spec,
            data: vec![0.0; len],
        }
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(&[f64]) -> f64 + Sync) -> Self {
        use rayon::prelude::*;
        let len = spec.len();
        let data: Vec<f64> = (0..len)
            .into_par_iter()
            .map(|k| f(&spec.point_at(&spec.multi_index(k))))
            .collect();
        Self { spec, data }
    }

    pub fn rank(&self) -> usize {
        self.spec.rank()
    }

    pub fn bounds(&self) -> Bounds {
        self.spec.bounds()
    }

    /// Multilinear interpolation; 0 outside the grid.
    pub fn interpolate(&self, z: &[f64]) -> f64 {
        interpolate(&self.spec, &self.data, z)
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled_add(&mut self, alpha: f64, other: &ScalarField) {
        assert_eq!(self.spec, other.spec);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += alpha * b;
        }
    }

    /// Discrete L2 inner product with the grid measure prod(spacing).
    pub fn inner_product(&self, other: &ScalarField) -> f64 {
        assert_eq!(self.spec, other.spec);
        let cell: f64 = self.spec.spacing.iter().product();
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * cell
    }
}

/// Anything the forward transform can integrate: a gridded field or a
/// closed-form phantom evaluator.
pub trait Sampleable: Sync {
    fn value(&self, z: &[f64]) -> f64;
    /// Box outside of which the values vanish (or are negligible).
    fn support_box(&self) -> Bounds;
}

impl Sampleable for ScalarField {
    fn value(&self, z: &[f64]) -> f64 {
        self.interpolate(z)
    }

    fn support_box(&self) -> Bounds {
        self.bounds()
    }
}

/// Quintic smoothstep: 0 at u <= 0, 1 at u >= 1, C^2 across both ends.
fn smoothstep(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
    }
}

/// Plateau profile in the radial variable: 1 for r <= inner, 0 for
/// r >= outer, smooth ramp in between. Exactly zero beyond `outer`.
fn plateau(r: f64, inner: f64, outer: f64) -> f64 {
    smoothstep((outer - r) / (outer - inner))
}

/// Declared support of a phantom: contained in { |x| <= c|t| + R } with
/// 0 < c < 1, optionally windowed to |t| <= t_half.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportDescriptor {
    pub speed: f64,
    pub radius: f64,
    pub t_half: Option<f64>,
}

/// Closed-form phantom registry.
#[derive(Debug, Clone, PartialEq)]
pub enum Phantom {
    /// exp(-|z - center|^2 / width^2), smoothly truncated at 6 width so the
    /// support is genuinely compact. The truncation leaves |z - center| <=
    /// 4 width untouched.
    Gaussian { center: Vec<f64>, width: f64 },
    /// Smoothed indicator of the spacetime ball |z - center| <= radius with
    /// a polynomial ramp of the given width.
    Ball {
        center: Vec<f64>,
        radius: f64,
        ramp: f64,
    },
    /// Smoothed jump across x^{n-1} = +-half_width; constant along t and
    /// the remaining spatial axes. Conormal e^{n-1} is spacelike.
    SlabSpacelike {
        dim: usize,
        half_width: f64,
        ramp: f64,
    },
    /// Smoothed jump across t = +-half_width; constant in x. Conormal
    /// (1, 0, ..., 0) is timelike.
    SlabTimelike {
        dim: usize,
        half_width: f64,
        ramp: f64,
    },
    /// Expanding-support composite: a cone-filling profile plus two blobs
    /// drifting at 0.8 c, all inside |x| <= sqrt(c^2 t^2 + R^2) and
    /// windowed to |t| < t_half. Satisfies the slower-than-light support
    /// condition with constants (c, R).
    Expanding {
        dim: usize,
        speed: f64,
        radius: f64,
        t_half: f64,
    },
}

impl Phantom {
    /// Look up a phantom by registry id.
    ///
    /// * `gaussian`:       params = [n, width, t0, x...]
    /// * `ball`:           params = [n, radius, ramp, t0, x...]
    /// * `slab-spacelike`: params = [n, half_width, ramp]
    /// * `slab-timelike`:  params = [n, half_width, ramp]
    /// * `expanding`:      params = [n, c, R, t_half]
    pub fn from_registry(id: &str, params: &[f64]) -> Result<Self> {
        let dim = |k: usize| -> Result<usize> {
            let n = params.get(k).copied().unwrap_or(0.0) as usize;
            if n < 2 {
                Err(Error::BadRegistryParams {
                    id: id.into(),
                    reason: "spatial dimension must be >= 2".into(),
                })
            } else {
                Ok(n)
            }
        };
        let center = |n: usize, k: usize| -> Vec<f64> {
            let mut c = vec![0.0; n + 1];
            for (i, slot) in c.iter_mut().enumerate() {
                if let Some(v) = params.get(k + i) {
                    *slot = *v;
                }
            }
            c
        };
        match id {
            "gaussian" => {
                let n = dim(0)?;
                let width = params.get(1).copied().unwrap_or(1.0);
                Ok(Phantom::Gaussian {
                    center: center(n, 2),
                    width,
                })
            }
            "ball" => {
                let n = dim(0)?;
                let radius = params.get(1).copied().unwrap_or(1.0);
                let ramp = params.get(2).copied().unwrap_or(0.1);
                Ok(Phantom::Ball {
                    center: center(n, 3),
                    radius,
                    ramp,
                })
            }
            "slab-spacelike" => Ok(Phantom::SlabSpacelike {
                dim: dim(0)?,
                half_width: params.get(1).copied().unwrap_or(0.5),
                ramp: params.get(2).copied().unwrap_or(0.1),
            }),
            "slab-timelike" => Ok(Phantom::SlabTimelike {
                dim: dim(0)?,
                half_width: params.get(1).copied().unwrap_or(0.5),
                ramp: params.get(2).copied().unwrap_or(0.1),
            }),
            "expanding" => Ok(Phantom::Expanding {
                dim: dim(0)?,
                speed: params.get(1).copied().unwrap_or(0.5),
                radius: params.get(2).copied().unwrap_or(1.0),
                t_half: params.get(3).copied().unwrap_or(2.0),
            }),
            other => Err(Error::UnknownRegistryId(other.into())),
        }
    }

    pub fn registry_ids() -> &'static [&'static str] {
        &[
            "gaussian",
            "ball",
            "slab-spacelike",
            "slab-timelike",
            "expanding",
        ]
    }

    pub fn registry_id(&self) -> &'static str {
        match self {
            Phantom::Gaussian { .. } => "gaussian",
            Phantom::Ball { .. } => "ball",
            Phantom::SlabSpacelike { .. } => "slab-spacelike",
            Phantom::SlabTimelike { .. } => "slab-timelike",
            Phantom::Expanding { .. } => "expanding",
        }
    }

    pub fn chart_dim(&self) -> usize {
        match self {
            Phantom::Gaussian { center, .. } | Phantom::Ball { center, .. } => center.len(),
            Phantom::SlabSpacelike { dim, .. }
            | Phantom::SlabTimelike { dim, .. }
            | Phantom::Expanding { dim, .. } => dim + 1,
        }
    }

    pub fn evaluate(&self, z: &[f64]) -> f64 {
        match self {
            Phantom::Gaussian { center, width } => {
                let r2: f64 = z
                    .iter()
                    .zip(center.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let r = r2.sqrt();
                (-r2 / (width * width)).exp() * plateau(r, 4.0 * width, 6.0 * width)
            }
            Phantom::Ball {
                center,
                radius,
                ramp,
            } => {
                let r: f64 = z
                    .iter()
                    .zip(center.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                plateau(r, radius - ramp, *radius)
            }
            Phantom::SlabSpacelike {
                dim,
                half_width,
                ramp,
            } => {
                // x^{n-1} is chart coordinate n-1.
                let c = z[dim - 1].abs();
                plateau(c, half_width - ramp, *half_width)
            }
            Phantom::SlabTimelike {
                half_width, ramp, ..
            } => plateau(z[0].abs(), half_width - ramp, *half_width),
            Phantom::Expanding {
                speed,
                radius,
                t_half,
                ..
            } => {
                let t = z[0];
                let window = plateau(t.abs(), 0.7 * t_half, *t_half);
                if window == 0.0 {
                    return 0.0;
                }
                // Smooth sub-cone rho(t) = sqrt(c^2 t^2 + R^2) <= c|t| + R.
                let rho = (speed * speed * t * t + radius * radius).sqrt();
                let r: f64 = z[1..].iter().map(|c| c * c).sum::<f64>().sqrt();
                let cone_fill = plateau(r / rho, 0.55, 0.95);
                let blob = |dir: f64| {
                    let cx = 0.8 * speed * t * dir;
                    let mut d2 = (z[1] - cx) * (z[1] - cx);
                    for c in &z[2..] {
                        d2 += c * c;
                    }
                    plateau(d2.sqrt(), 0.25 * radius, 0.5 * radius)
                };
                window * (0.6 * cone_fill + 0.8 * blob(1.0) + 0.5 * blob(-1.0))
            }
        }
    }

    /// Declared slower-than-light support constants (c, R).
    pub fn support(&self) -> SupportDescriptor {
        match self {
            Phantom::Gaussian { center, width } => {
                let spatial: f64 = center[1..].iter().map(|c| c * c).sum::<f64>().sqrt();
                SupportDescriptor {
                    speed: 0.5,
                    radius: spatial + 6.0 * width,
                    t_half: Some(center[0].abs() + 6.0 * width),
                }
            }
            Phantom::Ball { center, radius, .. } => {
                let spatial: f64 = center[1..].iter().map(|c| c * c).sum::<f64>().sqrt();
                SupportDescriptor {
                    speed: 0.5,
                    radius: spatial + radius,
                    t_half: Some(center[0].abs() + radius),
                }
            }
            // Slabs are not slower-than-light expanders: they are constant
            // along whole axes and exist for the singular-direction
            // experiments. Their descriptor is the vacuous one; the
            // visibility pipeline windows them through the grid.
            Phantom::SlabSpacelike { .. } => SupportDescriptor {
                speed: 0.5,
                radius: f64::INFINITY,
                t_half: None,
            },
            Phantom::SlabTimelike { half_width, .. } => SupportDescriptor {
                speed: 0.5,
                radius: f64::INFINITY,
                t_half: Some(*half_width),
            },
            Phantom::Expanding {
                speed,
                radius,
                t_half,
                ..
            } => SupportDescriptor {
                speed: *speed,
                radius: *radius,
                t_half: Some(*t_half),
            },
        }
    }

    /// Conormal of the declared singular support, when the phantom has one.
    pub fn singular_conormal(&self) -> Option<Vec<f64>> {
        match self {
            Phantom::SlabSpacelike { dim, .. } => {
                let mut zeta = vec![0.0; dim + 1];
                zeta[dim - 1] = 1.0;
                Some(zeta)
            }
            Phantom::SlabTimelike { dim, .. } => {
                let mut zeta = vec![0.0; dim + 1];
                zeta[0] = 1.0;
                Some(zeta)
            }
            _ => None,
        }
    }
}

impl Sampleable for Phantom {
    fn value(&self, z: &[f64]) -> f64 {
        self.evaluate(z)
    }

    fn support_box(&self) -> Bounds {
        let d = self.chart_dim();
        match self {
            Phantom::Gaussian { center, width } => {
                let r = 6.0 * width;
                Bounds::new(
                    center.iter().map(|c| c - r).collect(),
                    center.iter().map(|c| c + r).collect(),
                )
            }
            Phantom::Ball { center, radius, .. } => Bounds::new(
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            // Slabs are unbounded along their constant axes; callers window
            // them through a grid before transforming.
            Phantom::SlabSpacelike { dim, half_width, .. } => {
                let mut lo = vec![f64::NEG_INFINITY; d];
                let mut hi = vec![f64::INFINITY; d];
                lo[dim - 1] = -half_width;
                hi[dim - 1] = *half_width;
                Bounds::new(lo, hi)
            }
            Phantom::SlabTimelike { half_width, .. } => {
                let mut lo = vec![f64::NEG_INFINITY; d];
                let mut hi = vec![f64::INFINITY; d];
                lo[0] = -half_width;
                hi[0] = *half_width;
                Bounds::new(lo, hi)
            }
            Phantom::Expanding {
                speed,
                radius,
                t_half,
                ..
            } => {
                let r = (speed * speed * t_half * t_half + radius * radius).sqrt();
                let mut lo = vec![-r; d];
                let mut hi = vec![r; d];
                lo[0] = -t_half;
                hi[0] = *t_half;
                Bounds::new(lo, hi)
            }
        }
    }
}

/// Pointwise evaluation of a phantom at the grid samples.
pub fn sample(phantom: &Phantom, spec: &GridSpec) -> ScalarField {
    ScalarField::from_fn(spec.clone(), |z| phantom.evaluate(z))
}

/// Weight registry. Evaluation canonicalizes the direction to the
/// future-pointing Euclidean unit representative, which makes the value
/// invariant under v -> lambda v for every lambda != 0.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    /// kappa == 1.
    One,
    /// kappa(z, v) = 1 + 1/2 sin(z^0 + z^1) v^1/|v|; analytic and bounded
    /// away from zero since |1/2 sin| <= 1/2.
    Sinusoidal,
}

impl Weight {
    pub fn from_registry(id: &str) -> Result<Self> {
        match id {
            "one" | "unit" => Ok(Weight::One),
            "sinusoidal" => Ok(Weight::Sinusoidal),
            other => Err(Error::UnknownRegistryId(other.into())),
        }
    }

    pub fn registry_id(&self) -> &'static str {
        match self {
            Weight::One => "one",
            Weight::Sinusoidal => "sinusoidal",
        }
    }

    /// Lower bound on |kappa| over the configured domain.
    pub fn min_abs(&self) -> f64 {
        match self {
            Weight::One => 1.0,
            Weight::Sinusoidal => 0.5,
        }
    }

    pub fn evaluate(&self, z: &[f64], v: &[f64]) -> f64 {
        match self {
            Weight::One => 1.0,
            Weight::Sinusoidal => {
                let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                debug_assert!(norm > 0.0, "weight evaluated on the zero vector");
                let sign = if v[0] < 0.0 { -1.0 } else { 1.0 };
                let u1 = sign * v[1] / norm;
                1.0 + 0.5 * (z[0] + z[1]).sin() * u1
            }
        }
    }
}
