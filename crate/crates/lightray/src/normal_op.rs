//! Minkowski Fourier analysis of the normal operator: the Fourier slice
//! identity, the normal-operator multiplier, the reconstruction filter and
//! spacelike/timelike visibility experiments.
//!
//! Convention: f_hat(zeta) = int e^{-i z . zeta} f(z) dz with the Euclidean
//! pairing z . zeta = t tau + x . xi. This choice reproduces the slice
//! identity f_hat(-theta . xi, xi) = int e^{-i x . xi} Lf(x, theta) dx as
//! written.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::{fft_frequencies, fft_nd, Direction};
use crate::fields::{sample, Phantom, ScalarField, Weight};
use crate::geometry::Metric;
use crate::grid::GridSpec;
use crate::transform::{normal, Sinogram, SinogramSpec};

/// Relative clamp for the light-cone singularity of the multipliers.
pub const DEFAULT_EPS_LC: f64 = 1e-3;

/// C_n = 2 pi |S^{n-2}|: 4 pi for n = 2, 4 pi^2 for n = 3.
pub fn c_n(n: usize) -> f64 {
    match n {
        2 => 4.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI * std::f64::consts::PI,
        _ => panic!("multiplier analysis is provided for n in {{2, 3}}"),
    }
}

/// DFT dual grid of a scalar field: per-axis frequencies in signed layout.
#[derive(Debug, Clone)]
pub struct FrequencyGrid {
    pub dims: Vec<usize>,
    pub freqs: Vec<Vec<f64>>,
}

impl FrequencyGrid {
    pub fn of(spec: &GridSpec) -> Self {
        let freqs = spec
            .dims
            .iter()
            .zip(spec.spacing.iter())
            .map(|(&d, &s)| fft_frequencies(d, s))
            .collect();
        Self {
            dims: spec.dims.clone(),
            freqs,
        }
    }

    /// Nyquist magnitude of axis `a`.
    pub fn nyquist(&self, a: usize) -> f64 {
        self.freqs[a].iter().cloned().fold(0.0, f64::max)
    }
}

/// Semidiscrete Fourier transform of a gridded field at an arbitrary real
/// frequency: sum_k f_k e^{-i z_k . zeta} prod(spacing).
pub fn semidiscrete_ft(field: &ScalarField, zeta: &[f64]) -> Complex64 {
    let spec = &field.spec;
    let rank = spec.rank();
    assert_eq!(zeta.len(), rank);
    let cell: f64 = spec.spacing.iter().product();
    // separable phase tables per axis
    let tables: Vec<Vec<Complex64>> = (0..rank)
        .map(|a| {
            (0..spec.dims[a])
                .map(|k| {
                    let z = spec.origin[a] + k as f64 * spec.spacing[a];
                    Complex64::from_polar(1.0, -z * zeta[a])
                })
                .collect()
        })
        .collect();
    let strides = spec.strides();
    let acc: Complex64 = field
        .data
        .par_chunks(strides[0])
        .enumerate()
        .map(|(i0, chunk)| {
            let mut local = Complex64::default();
            for (rest, &v) in chunk.iter().enumerate() {
                if v != 0.0 {
                    let mut phase = tables[0][i0];
                    let mut r = rest;
                    for a in 1..rank {
                        phase *= tables[a][r / strides[a]];
                        r %= strides[a];
                    }
                    local += v * phase;
                }
            }
            local
        })
        .sum();
    acc * cell
}

/// Semidiscrete transform of one sinogram row over the x-grid at xi.
fn row_ft(sino: &Sinogram, row: usize, xi: &[f64]) -> Complex64 {
    let spec = &sino.x_grid;
    let rank = spec.rank();
    let cell: f64 = spec.spacing.iter().product();
    let tables: Vec<Vec<Complex64>> = (0..rank)
        .map(|a| {
            (0..spec.dims[a])
                .map(|k| {
                    let z = spec.origin[a] + k as f64 * spec.spacing[a];
                    Complex64::from_polar(1.0, -z * xi[a])
                })
                .collect()
        })
        .collect();
    let strides = spec.strides();
    let data = sino.row(row);
    let acc: Complex64 = data
        .par_chunks(strides[0])
        .enumerate()
        .map(|(i0, chunk)| {
            let mut local = Complex64::default();
            for (rest, &v) in chunk.iter().enumerate() {
                if v != 0.0 {
                    let mut phase = tables[0][i0];
                    let mut r = rest;
                    for a in 1..rank {
                        phase *= tables[a][r / strides[a]];
                        r %= strides[a];
                    }
                    local += v * phase;
                }
            }
            local
        })
        .sum();
    acc * cell
}

/// Both sides of the Fourier slice identity at (theta, xi): the field
/// transform at (-theta . xi, xi) and the x-transform of the sinogram row.
#[derive(Debug, Clone, Copy)]
pub struct SliceCheck {
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub abs_err: f64,
}

pub fn fourier_slice_check(
    field: &ScalarField,
    sino: &Sinogram,
    theta_index: usize,
    xi: &[f64],
) -> Result<SliceCheck> {
    let n = sino.x_grid.rank();
    assert_eq!(field.rank(), n + 1);
    // the sinogram x-grid must cover the support shadow of the field
    let fb = field.bounds();
    let t_absmax = fb.lo[0].abs().max(fb.hi[0].abs());
    let sb = sino.x_grid.bounds();
    for a in 0..n {
        if fb.lo[a + 1] - t_absmax < sb.lo[a] - 1e-9 || fb.hi[a + 1] + t_absmax > sb.hi[a] + 1e-9 {
            return Err(Error::CoverageViolation(format!(
                "sinogram x-grid does not cover the field shadow on axis {a}"
            )));
        }
    }
    let theta = &sino.thetas[theta_index];
    let tau = -theta.iter().zip(xi.iter()).map(|(a, b)| a * b).sum::<f64>();
    let mut zeta = vec![tau];
    zeta.extend_from_slice(xi);
    let lhs = semidiscrete_ft(field, &zeta);
    let rhs = row_ft(sino, theta_index, xi);
    Ok(SliceCheck {
        lhs,
        rhs,
        abs_err: (lhs - rhs).norm(),
    })
}

/// One multiplier evaluation with its clamp/singularity flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplierValue {
    pub value: f64,
    pub clamped: bool,
    pub singular: bool,
}

/// The normal-operator symbol C_n (|xi|^2 - tau^2)_+^{(n-3)/2} / |xi|^{n-2}.
/// Zero on the closed timelike cone; evaluations inside the light-cone
/// clamp band use the clamped argument and are flagged.
pub fn multiplier_eval(n: usize, tau: f64, xi: &[f64], eps_lc: f64) -> MultiplierValue {
    let xi2: f64 = xi.iter().map(|c| c * c).sum();
    if xi2 == 0.0 {
        return MultiplierValue {
            value: 0.0,
            clamped: false,
            singular: true,
        };
    }
    let s = xi2 - tau * tau;
    if s <= 0.0 {
        return MultiplierValue {
            value: 0.0,
            clamped: false,
            singular: false,
        };
    }
    let zeta2 = xi2 + tau * tau;
    let (s_eff, clamped) = if s < eps_lc * zeta2 {
        (eps_lc * zeta2, true)
    } else {
        (s, false)
    };
    let value = match n {
        2 => c_n(2) / s_eff.sqrt(),
        3 => c_n(3) / xi2.sqrt(),
        _ => panic!("multiplier analysis is provided for n in {{2, 3}}"),
    };
    MultiplierValue {
        value,
        clamped,
        singular: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MultiplierKind {
    /// A frequency-independent constant (m = 1 is the identity).
    Constant(f64),
    /// Theorem symbol of L'L.
    NormalOperator,
    /// Inverse filter C_n^{-1} |xi|^{n-2} (|xi|^2 - tau^2)_+^{(3-n)/2}.
    /// With `dz_variant` the |xi| factor is replaced by |zeta|; the
    /// default cancels the normal-operator symbol exactly.
    ReconstructionFilter { dz_variant: bool },
    /// Smooth cutoff to |tau| <= (1 - eps_band) |xi| with a transition of
    /// relative width eps_band / 2. Kills the xi = 0 axis.
    SpacelikeProjector { eps_band: f64 },
}

/// A Fourier multiplier m(tau, xi) applied on the DFT dual grid.
#[derive(Debug, Clone, Copy)]
pub struct Multiplier {
    pub n: usize,
    pub kind: MultiplierKind,
    pub eps_lc: f64,
}

pub fn normal_multiplier(n: usize, eps_lc: f64) -> Multiplier {
    Multiplier {
        n,
        kind: MultiplierKind::NormalOperator,
        eps_lc,
    }
}

pub fn reconstruction_filter(n: usize, eps_lc: f64) -> Multiplier {
    Multiplier {
        n,
        kind: MultiplierKind::ReconstructionFilter { dz_variant: false },
        eps_lc,
    }
}

pub fn spacelike_projector(n: usize, eps_band: f64) -> Multiplier {
    Multiplier {
        n,
        kind: MultiplierKind::SpacelikeProjector { eps_band },
        eps_lc: DEFAULT_EPS_LC,
    }
}

fn smoothstep(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
    }
}

impl Multiplier {
    pub fn eval(&self, tau: f64, xi: &[f64]) -> f64 {
        match self.kind {
            MultiplierKind::Constant(c) => c,
            MultiplierKind::NormalOperator => multiplier_eval(self.n, tau, xi, self.eps_lc).value,
            MultiplierKind::ReconstructionFilter { dz_variant } => {
                let xi2: f64 = xi.iter().map(|c| c * c).sum();
                let s = xi2 - tau * tau;
                if s <= 0.0 {
                    return 0.0;
                }
                let zeta2 = xi2 + tau * tau;
                let s_eff = if s < self.eps_lc * zeta2 {
                    self.eps_lc * zeta2
                } else {
                    s
                };
                let deriv_factor = if dz_variant { zeta2 } else { xi2 };
                match self.n {
                    2 => s_eff.sqrt() / c_n(2),
                    3 => deriv_factor.sqrt() / c_n(3),
                    _ => panic!("multiplier analysis is provided for n in {{2, 3}}"),
                }
            }
            MultiplierKind::SpacelikeProjector { eps_band } => {
                let xi_norm: f64 = xi.iter().map(|c| c * c).sum::<f64>().sqrt();
                if xi_norm == 0.0 {
                    return 0.0;
                }
                let r = tau.abs() / xi_norm;
                // 1 for r <= 1 - eps_band, 0 for r >= 1 - eps_band/2
                smoothstep((1.0 - eps_band / 2.0 - r) / (eps_band / 2.0))
            }
        }
    }
}

/// Apply a Fourier multiplier by FFT. The caller is responsible for a grid
/// at least twice the support per axis, which keeps cyclic-convolution
/// leakage below quadrature error. Returns the filtered field and the
/// relative imaginary residue (a realness diagnostic; the multipliers are
/// even, so real input must come back real to roundoff).
pub fn apply_multiplier(field: &ScalarField, m: &Multiplier) -> (ScalarField, f64) {
    let spec = &field.spec;
    let rank = spec.rank();
    assert_eq!(rank, m.n + 1);
    let mut buf: Vec<Complex64> = field
        .data
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    fft_nd(&mut buf, &spec.dims, Direction::Forward);
    let fgrid = FrequencyGrid::of(spec);
    let strides = spec.strides();
    buf.par_chunks_mut(strides[0])
        .enumerate()
        .for_each(|(i0, chunk)| {
            let tau = fgrid.freqs[0][i0];
            let mut xi = vec![0.0; rank - 1];
            for (rest, v) in chunk.iter_mut().enumerate() {
                let mut r = rest;
                for a in 1..rank {
                    xi[a - 1] = fgrid.freqs[a][r / strides[a]];
                    r %= strides[a];
                }
                *v *= m.eval(tau, &xi);
            }
        });
    fft_nd(&mut buf, &spec.dims, Direction::Inverse);
    let mut max_re: f64 = 0.0;
    let mut max_im: f64 = 0.0;
    for v in &buf {
        max_re = max_re.max(v.re.abs());
        max_im = max_im.max(v.im.abs());
    }
    let out = ScalarField {
        spec: spec.clone(),
        data: buf.iter().map(|v| v.re).collect(),
    };
    (out, if max_re > 0.0 { max_im / max_re } else { 0.0 })
}

/// Reconstruction filter of the normal operator: approximates the
/// spacelike-projected input when applied to L'L f.
pub fn reconstruct_spacelike(nf: &ScalarField, n: usize, eps_lc: f64) -> ScalarField {
    apply_multiplier(nf, &reconstruction_filter(n, eps_lc)).0
}

/// FFT cutoff to the open spacelike cone with a smooth transition band.
pub fn spacelike_project(field: &ScalarField, eps_band: f64) -> ScalarField {
    let n = field.rank() - 1;
    apply_multiplier(field, &spacelike_projector(n, eps_band)).0
}

/// Directional high-pass energy across the edge surfaces of a slab: the sum
/// of squared central differences along `axis` over cells within
/// `shell` of either edge plane.
pub fn edge_energy(field: &ScalarField, axis: usize, edges: &[f64], shell: f64) -> f64 {
    let spec = &field.spec;
    let strides = spec.strides();
    let stride = strides[axis];
    let dim = spec.dims[axis];
    let len = spec.len();
    let inv2h = 1.0 / (2.0 * spec.spacing[axis]);
    (0..len)
        .into_par_iter()
        .map(|flat| {
            let idx = spec.multi_index(flat);
            if idx[axis] == 0 || idx[axis] + 1 == dim {
                return 0.0;
            }
            let c = spec.origin[axis] + idx[axis] as f64 * spec.spacing[axis];
            if edges.iter().all(|e| (c - e).abs() > shell) {
                return 0.0;
            }
            let d = (field.data[flat + stride] - field.data[flat - stride]) * inv2h;
            d * d
        })
        .sum()
}

#[derive(Debug, Clone)]
pub struct VisibilityConfig {
    /// Spacetime grid both slabs are sampled on (at least 2x the slab
    /// thickness per axis for the FFT steps).
    pub grid: GridSpec,
    pub sino: SinogramSpec,
    pub eps_lc: f64,
    /// Half-width of the shell around each edge for the energy metric;
    /// defaults to ramp + 2 cells when built by the pipeline helpers.
    pub shell: f64,
}

#[derive(Debug, Clone)]
pub struct VisibilityReport {
    pub spacelike_ratio: f64,
    pub timelike_ratio: f64,
}

impl VisibilityReport {
    pub fn ordering(&self) -> f64 {
        self.spacelike_ratio / self.timelike_ratio.max(1e-300)
    }
}

/// Run sinogram -> normal -> spacelike reconstruction for a spacelike-edge
/// and a timelike-edge phantom and report the edge-energy ratio
/// (reconstruction / truth) for each.
pub fn visibility_experiment(
    metric: &Metric,
    spacelike_slab: &Phantom,
    timelike_slab: &Phantom,
    cfg: &VisibilityConfig,
) -> Result<VisibilityReport> {
    let n = metric.spatial_dim();
    let run = |ph: &Phantom, axis: usize, half_width: f64| -> Result<f64> {
        let truth = sample(ph, &cfg.grid);
        let nf = normal(metric, &truth, &Weight::One, &cfg.sino, &cfg.grid)?;
        let recon = reconstruct_spacelike(&nf, n, cfg.eps_lc);
        let edges = [-half_width, half_width];
        let e_truth = edge_energy(&truth, axis, &edges, cfg.shell);
        let e_recon = edge_energy(&recon, axis, &edges, cfg.shell);
        Ok(e_recon / e_truth)
    };
    let (sp_axis, sp_w) = match spacelike_slab {
        Phantom::SlabSpacelike {
            dim, half_width, ..
        } => (dim - 1, *half_width),
        _ => panic!("visibility experiment expects a spacelike-edge slab"),
    };
    let (tl_axis, tl_w) = match timelike_slab {
        Phantom::SlabTimelike { half_width, .. } => (0usize, *half_width),
        _ => panic!("visibility experiment expects a timelike-edge slab"),
    };
    Ok(VisibilityReport {
        spacelike_ratio: run(spacelike_slab, sp_axis, sp_w)?,
        timelike_ratio: run(timelike_slab, tl_axis, tl_w)?,
    })
}
