//! Pipeline stages shared by the subcommands and the `run` driver. Each
//! stage reads its parameters from the configuration, reuses earlier
//! products of the same run, writes its artifacts into the output
//! directory and registers them for the manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use lightray::fields::{sample, Phantom, ScalarField, Weight};
use lightray::foliation::{
    foliation_scan, is_timelike_surface, sample_surface_points, strict_convexity_check_with_tol,
    support_shrink_experiment, tangent_escape_check, QuadricFoliation, SignConvention, Surface,
};
use lightray::geometry::Metric;
use lightray::grid::{Bounds, GridSpec};
use lightray::io::{fmt_f64, mid_slice, write_lrtf, write_pgm16, write_sinogram_csv};
use lightray::normal_op::{
    fourier_slice_check, reconstruct_spacelike, spacelike_project, visibility_experiment,
    VisibilityConfig,
};
use lightray::radon::{
    phase_det_check, plane_from_rays, plane_integral_direct, radon_via_fubini, solve_q,
    theta_direction, zeta_of,
};
use lightray::transform::{normal, sinogram, Sinogram, SinogramSpec};

use crate::config::Config;

pub struct RunContext {
    pub cfg: Config,
    pub out_dir: PathBuf,
    pub config_path: Option<PathBuf>,
    artifacts: Vec<(String, String)>,
    timings: Vec<(String, f64)>,
    field_cache: Option<ScalarField>,
    sinogram_cache: Option<Sinogram>,
    normal_cache: Option<ScalarField>,
}

impl RunContext {
    pub fn new(cfg: Config, config_path: Option<PathBuf>) -> Result<Self> {
        let out_dir = PathBuf::from(cfg.str_or("output", "dir", "out"));
        std::fs::create_dir_all(&out_dir)
            .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
        Ok(Self {
            cfg,
            out_dir,
            config_path,
            artifacts: Vec::new(),
            timings: Vec::new(),
            field_cache: None,
            sinogram_cache: None,
            normal_cache: None,
        })
    }

    pub fn metric(&self) -> Result<Metric> {
        let id = self.cfg.str_or("metric", "id", "minkowski");
        let params = self.cfg.f64_list_or("metric", "params", &[2.0])?;
        Ok(Metric::from_registry(id, &params)?)
    }

    pub fn phantom(&self) -> Result<Phantom> {
        let id = self.cfg.str_or("phantom", "id", "gaussian");
        let params = self.cfg.f64_list_or("phantom", "params", &[2.0, 0.8])?;
        Ok(Phantom::from_registry(id, &params)?)
    }

    pub fn weight(&self) -> Result<Weight> {
        Ok(Weight::from_registry(self.cfg.str_or("weight", "id", "one"))?)
    }

    pub fn field_grid(&self) -> Result<GridSpec> {
        let n = self.metric()?.spatial_dim();
        let d = n + 1;
        let lo = self.cfg.f64_list_or("field", "lo", &vec![-3.0; d])?;
        let hi = self.cfg.f64_list_or("field", "hi", &vec![3.0; d])?;
        let dims = self.cfg.usize_list_or("field", "dims", &vec![64; d])?;
        if lo.len() != d || hi.len() != d || dims.len() != d {
            bail!("field grid must have {d} axes for a 1+{n} metric");
        }
        Ok(GridSpec::covering(&lo, &hi, &dims)?)
    }

    pub fn sinogram_spec(&self) -> Result<SinogramSpec> {
        let n = self.metric()?.spatial_dim();
        let lo = self.cfg.f64_list_or("sinogram", "x_lo", &vec![-6.0; n])?;
        let hi = self.cfg.f64_list_or("sinogram", "x_hi", &vec![6.0; n])?;
        let dims = self.cfg.usize_list_or("sinogram", "x_dims", &vec![64; n])?;
        if lo.len() != n || hi.len() != n || dims.len() != n {
            bail!("sinogram x-grid must have {n} axes for a 1+{n} metric");
        }
        let x_grid = GridSpec::covering(&lo, &hi, &dims)?;
        let thetas = self.cfg.usize_or("sinogram", "thetas", 32)?;
        let quad_step = self.cfg.f64_or("sinogram", "quad_step", 1e-3)?;
        let s_half = self.cfg.f64_or("sinogram", "s_half", 4.0)?;
        Ok(SinogramSpec::uniform(n, x_grid, thetas, quad_step, s_half))
    }

    /// Sinogram coverage must contain the field shadow: the spatial box
    /// expanded by the largest |t|.
    fn check_coverage(&self, fgrid: &GridSpec, spec: &SinogramSpec) -> Result<()> {
        let fb = fgrid.bounds();
        let t_absmax = fb.lo[0].abs().max(fb.hi[0].abs());
        let sb = spec.x_grid.bounds();
        for a in 0..spec.x_grid.rank() {
            if fb.lo[a + 1] - t_absmax < sb.lo[a] - 1e-9
                || fb.hi[a + 1] + t_absmax > sb.hi[a] + 1e-9
            {
                bail!(
                    "sinogram x-grid does not cover the field shadow on axis {a}: \
                     needs [{:.3}, {:.3}], has [{:.3}, {:.3}]",
                    fb.lo[a + 1] - t_absmax,
                    fb.hi[a + 1] + t_absmax,
                    sb.lo[a],
                    sb.hi[a]
                );
            }
        }
        Ok(())
    }

    fn sampled_field(&mut self) -> Result<ScalarField> {
        if self.field_cache.is_none() {
            let phantom = self.phantom()?;
            let grid = self.field_grid()?;
            if phantom.chart_dim() != grid.rank() {
                bail!(
                    "phantom dimension {} does not match the field grid rank {}",
                    phantom.chart_dim(),
                    grid.rank()
                );
            }
            self.field_cache = Some(sample(&phantom, &grid));
        }
        Ok(self.field_cache.clone().unwrap())
    }

    fn computed_sinogram(&mut self) -> Result<Sinogram> {
        if self.sinogram_cache.is_none() {
            let metric = self.metric()?;
            let weight = self.weight()?;
            let field = self.sampled_field()?;
            let spec = self.sinogram_spec()?;
            self.check_coverage(&field.spec, &spec)?;
            self.sinogram_cache = Some(sinogram(&metric, &field, &weight, &spec)?);
        }
        Ok(self.sinogram_cache.clone().unwrap())
    }

    fn computed_normal(&mut self) -> Result<ScalarField> {
        if self.normal_cache.is_none() {
            let metric = self.metric()?;
            let weight = self.weight()?;
            let field = self.sampled_field()?;
            let spec = self.sinogram_spec()?;
            self.check_coverage(&field.spec, &spec)?;
            self.normal_cache = Some(normal(&metric, &field, &weight, &spec, &field.spec)?);
        }
        Ok(self.normal_cache.clone().unwrap())
    }

    pub fn artifact_writer(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.out_dir.join(name);
        let file = File::create(&path)
            .with_context(|| format!("cannot create artifact {}", path.display()))?;
        self.artifacts.push((name.to_string(), String::new()));
        Ok(BufWriter::new(file))
    }

    fn write_field(&mut self, name: &str, field: &ScalarField) -> Result<()> {
        let mut w = self.artifact_writer(name)?;
        write_lrtf(field, &mut w)?;
        w.flush()?;
        Ok(())
    }

    /// PGM slice of the (t, x^{n-1}) plane plus a min/max sidecar.
    fn write_slice(&mut self, stem: &str, field: &ScalarField) -> Result<()> {
        let (data, rows, cols) = mid_slice(field);
        let pgm = format!("{stem}.pgm");
        let mut w = self.artifact_writer(&pgm)?;
        let (lo, hi) = write_pgm16(&data, rows, cols, &mut w)?;
        w.flush()?;
        let sidecar = format!("{stem}.minmax.txt");
        let mut w = self.artifact_writer(&sidecar)?;
        writeln!(w, "min = {}\nmax = {}", fmt_f64(lo), fmt_f64(hi))?;
        w.flush()?;
        Ok(())
    }

    pub fn run_stage(&mut self, name: &str) -> Result<()> {
        let start = Instant::now();
        let result = match name {
            "phantom" => self.stage_phantom(),
            "sinogram" => self.stage_sinogram(),
            "normal" => self.stage_normal(),
            "reconstruct" => self.stage_reconstruct(),
            "slice-check" => self.stage_slice_check(),
            "radon-check" => self.stage_radon_check(),
            "phase-check" => self.stage_phase_check(),
            "foliation-check" => self.stage_foliation_check(),
            "shrink-check" => self.stage_shrink_check(),
            "visibility" => self.stage_visibility(),
            other => Err(anyhow!("unknown stage `{other}`")),
        };
        self.timings
            .push((name.to_string(), start.elapsed().as_secs_f64()));
        result.with_context(|| format!("stage `{name}` failed"))
    }

    fn stage_phantom(&mut self) -> Result<()> {
        let field = self.sampled_field()?;
        self.write_field("phantom.lrtf", &field)?;
        self.write_slice("phantom_slice", &field)?;
        println!(
            "phantom: {} samples, |f|_2 = {:.6e}",
            field.data.len(),
            field.l2_norm()
        );
        Ok(())
    }

    fn stage_sinogram(&mut self) -> Result<()> {
        let sino = self.computed_sinogram()?;
        let mut w = self.artifact_writer("sinogram.csv")?;
        write_sinogram_csv(&sino, &mut w)?;
        w.flush()?;
        println!(
            "sinogram: {} rays over {} directions, |Lf|_2 = {:.6e}",
            sino.values.len(),
            sino.n_thetas(),
            sino.l2_norm()
        );
        Ok(())
    }

    fn stage_normal(&mut self) -> Result<()> {
        let nf = self.computed_normal()?;
        self.write_field("normal.lrtf", &nf)?;
        self.write_slice("normal_slice", &nf)?;
        println!("normal: |L'Lf|_2 = {:.6e}", nf.l2_norm());
        Ok(())
    }

    fn stage_reconstruct(&mut self) -> Result<()> {
        let n = self.metric()?.spatial_dim();
        let eps_lc = self.cfg.f64_or("tolerances", "eps_lc", 1e-3)?;
        let eps_band = self.cfg.f64_or("tolerances", "eps_band", 0.2)?;
        let nf = self.computed_normal()?;
        let recon = reconstruct_spacelike(&nf, n, eps_lc);
        self.write_field("reconstruction.lrtf", &recon)?;
        self.write_slice("reconstruction_slice", &recon)?;
        let field = self.sampled_field()?;
        let projected = spacelike_project(&field, eps_band);
        let diff: f64 = recon
            .data
            .iter()
            .zip(projected.data.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        println!(
            "reconstruct: relative L2 distance to the spacelike projection = {:.4}",
            diff / projected.l2_norm()
        );
        Ok(())
    }

    fn stage_slice_check(&mut self) -> Result<()> {
        let field = self.sampled_field()?;
        let sino = self.computed_sinogram()?;
        let n = sino.x_grid.rank();
        let count = self.cfg.usize_or("slice_check", "count", 20)?;
        let xi_min = self.cfg.f64_or("slice_check", "xi_min", 0.5)?;
        let xi_max = self.cfg.f64_or("slice_check", "xi_max", 3.0)?;
        let tol = self.cfg.f64_or("slice_check", "tolerance", 1e-2)?;
        let seed = self.cfg.u64_or("run", "seed", 0)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = self.artifact_writer("slice_check.csv")?;
        let mut header = vec!["tau".to_string()];
        header.extend((1..=n).map(|a| format!("xi{a}")));
        header.extend(
            ["lhs_re", "lhs_im", "rhs_re", "rhs_im", "abs_err"]
                .iter()
                .map(|s| s.to_string()),
        );
        writeln!(w, "{}", header.join(","))?;
        let mut worst: f64 = 0.0;
        for _ in 0..count {
            let j = rng.gen_range(0..sino.n_thetas());
            let r: f64 = rng.gen_range(xi_min..xi_max);
            let mut xi = vec![0.0; n];
            match n {
                2 => {
                    let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    xi[0] = r * ang.cos();
                    xi[1] = r * ang.sin();
                }
                _ => {
                    let mut norm = 0.0;
                    for c in xi.iter_mut() {
                        *c = rng.gen_range(-1.0..1.0);
                        norm += *c * *c;
                    }
                    let norm = norm.sqrt();
                    for c in xi.iter_mut() {
                        *c *= r / norm;
                    }
                }
            }
            let chk = fourier_slice_check(&field, &sino, j, &xi)?;
            let theta = &sino.thetas[j];
            let tau = -theta.iter().zip(xi.iter()).map(|(a, b)| a * b).sum::<f64>();
            let mut row = vec![fmt_f64(tau)];
            row.extend(xi.iter().map(|&c| fmt_f64(c)));
            row.extend(
                [chk.lhs.re, chk.lhs.im, chk.rhs.re, chk.rhs.im, chk.abs_err]
                    .iter()
                    .map(|&c| fmt_f64(c)),
            );
            writeln!(w, "{}", row.join(","))?;
            worst = worst.max(chk.abs_err / chk.lhs.norm());
        }
        w.flush()?;
        println!("slice-check: max relative error {worst:.4e} over {count} draws");
        if worst >= tol {
            bail!("slice identity violated: {worst:.4e} >= {tol:.1e}");
        }
        Ok(())
    }

    fn stage_radon_check(&mut self) -> Result<()> {
        let metric = self.metric()?;
        if !metric.is_minkowski() {
            bail!("radon-check runs in the Minkowski parameterization");
        }
        let n = metric.spatial_dim();
        let phantom = self.phantom()?;
        let weight = self.weight()?;
        let qs = self
            .cfg
            .f64_list_or("radon_check", "q", &[-0.2, -0.1, 0.0, 0.1, 0.2])?;
        let ps = self
            .cfg
            .f64_list_or("radon_check", "p", &[-1.0, -0.5, 0.0, 0.5, 1.0])?;
        let betas = self
            .cfg
            .f64_list_or("radon_check", "beta", &[-0.2, -0.1, 0.0, 0.1, 0.2])?;
        let tol = self.cfg.f64_or("radon_check", "tolerance", 1e-2)?;
        let oracle_half = self.cfg.f64_or("radon_check", "oracle_half_range", 9.2)?;
        let oracle_step = self.cfg.f64_or("radon_check", "oracle_step", 0.01)?;

        // sinogram with rows at exactly theta(q)
        let base = self.sinogram_spec()?;
        let thetas: Vec<Vec<f64>> = qs.iter().map(|&q| theta_direction(n, q)).collect();
        let weights = vec![1.0; thetas.len()];
        let spec = SinogramSpec::with_thetas(
            base.x_grid.clone(),
            thetas,
            weights,
            base.quad_step,
            base.s_half,
        );
        let sino = sinogram(&metric, &phantom, &weight, &spec)?;

        let mut w = self.artifact_writer("radon_check.csv")?;
        let mut header = vec!["p".to_string(), "q".to_string()];
        header.extend((1..=n).map(|a| format!("xi{a}")));
        header.extend(["value", "oracle", "rel_err"].iter().map(|s| s.to_string()));
        writeln!(w, "{}", header.join(","))?;
        let mut worst: f64 = 0.0;
        let mut worst_res: f64 = 0.0;
        let mut worst_q: f64 = 0.0;
        for &p in &ps {
            for &q in &qs {
                for &beta in &betas {
                    // rotate xi away from e^{n-1} in the (e^{n-1}, e^n) plane
                    let mut xi = vec![0.0; n];
                    xi[n - 2] = beta.cos();
                    xi[n - 1] = -beta.sin();
                    let plane = plane_from_rays(p, &xi, q)?;
                    let got = radon_via_fubini(&sino, &plane)?;
                    let oracle =
                        plane_integral_direct(&phantom, &weight, &plane, oracle_half, oracle_step);
                    let rel = (got.value - oracle).abs() / oracle.abs();
                    worst = worst.max(rel);
                    let mut row = vec![fmt_f64(p), fmt_f64(q)];
                    row.extend(xi.iter().map(|&c| fmt_f64(c)));
                    row.extend([got.value, oracle, rel].iter().map(|&c| fmt_f64(c)));
                    writeln!(w, "{}", row.join(","))?;

                    let zeta = zeta_of(q, &xi);
                    let q_back = solve_q(&zeta)?;
                    worst_q = worst_q.max((q_back - q).abs());
                    let znorm: f64 = zeta.iter().map(|c| c * c).sum::<f64>().sqrt();
                    let res =
                        (zeta[n] * q_back.cos() + zeta[n - 1] * q_back.sin() + zeta[0]).abs() / znorm;
                    worst_res = worst_res.max(res);
                }
            }
        }
        w.flush()?;
        println!(
            "radon-check: max relative error {worst:.4e}, solve_q residual {worst_res:.2e}, q round trip {worst_q:.2e}"
        );
        if worst >= tol {
            bail!("Fubini Radon values disagree with the plane integrals: {worst:.4e} >= {tol:.1e}");
        }
        if worst_res >= 1e-12 || worst_q >= 1e-10 {
            bail!("solve_q accuracy degraded: residual {worst_res:.3e}, round trip {worst_q:.3e}");
        }
        Ok(())
    }

    fn stage_phase_check(&mut self) -> Result<()> {
        let metric = self.metric()?;
        let default_tol = if metric.is_minkowski() { 1e-8 } else { 1e-3 };
        let tol = self.cfg.f64_or("phase_check", "tolerance", default_tol)?;
        let det = phase_det_check(&metric)?;
        let mut w = self.artifact_writer("phase_check.txt")?;
        writeln!(w, "metric = {}", metric.registry_id())?;
        writeln!(w, "det phi_z_zeta(0, e^(n-1)) = {}", fmt_f64(det))?;
        writeln!(w, "expected = -1")?;
        writeln!(w, "deviation = {}", fmt_f64((det + 1.0).abs()))?;
        w.flush()?;
        println!("phase-check: det = {det:.10} (expected -1, tolerance {tol:.1e})");
        if (det + 1.0).abs() >= tol {
            bail!("phase determinant {det} deviates from -1 beyond {tol:.1e}");
        }
        Ok(())
    }

    fn surface(&self) -> Result<Surface> {
        let id = self.cfg.str_or("surface", "id", "cylinder");
        let params = self.cfg.f64_list_or("surface", "params", &[1.0])?;
        Ok(Surface::from_registry(id, &params)?)
    }

    fn scan_box(&self, d: usize) -> Result<Bounds> {
        let lo = self.cfg.f64_list_or("box", "lo", &vec![-2.0; d])?;
        let hi = self.cfg.f64_list_or("box", "hi", &vec![2.0; d])?;
        if lo.len() != d || hi.len() != d {
            bail!("scan box must have {d} axes");
        }
        Ok(Bounds::new(lo, hi))
    }

    fn foliation(&self) -> Result<QuadricFoliation> {
        let n = self.metric()?.spatial_dim();
        Ok(QuadricFoliation {
            t0: self.cfg.f64_or("foliation", "t0", 4.0)?,
            x0: self.cfg.f64_list_or("foliation", "x0", &vec![0.0; n])?,
            c_tilde: self.cfg.f64_or("foliation", "c_tilde", 0.7)?,
            g_min: self.cfg.f64_or("foliation", "g_min", 1.0)?,
            g_max: self.cfg.f64_or("foliation", "g_max", 4.0)?,
        })
    }

    fn stage_foliation_check(&mut self) -> Result<()> {
        let metric = self.metric()?;
        let d = metric.chart_dim();
        let bounds = self.scan_box(d)?;
        let tol_conv = self.cfg.f64_or("tolerances", "tol_conv", 1e-8)?;
        let mut w = self.artifact_writer("foliation_check.txt")?;

        if self.cfg.str_or("surface", "id", "cylinder") == "quadric-foliation" {
            let fol = self.foliation()?;
            let levels = self.cfg.usize_or("foliation", "sigmas", 6)?;
            let sigmas: Vec<f64> = (0..levels)
                .map(|k| k as f64 / (levels.max(2) - 1) as f64)
                .collect();
            let support = self.phantom()?.support();
            let report = foliation_scan(&metric, &fol, &sigmas, &bounds, &support)?;
            writeln!(w, "condition (i) disjointness: {}", report.disjoint_ok)?;
            for lv in &report.levels {
                writeln!(
                    w,
                    "sigma = {:.3}: points {} gradient {} timelike {} convex {} escape {} minQ {}",
                    lv.sigma,
                    lv.points_checked,
                    lv.gradient_ok,
                    lv.timelike_ok,
                    lv.convex_ok,
                    lv.escape_ok,
                    fmt_f64(lv.min_convexity)
                )?;
                if let Some((point, dir)) = &lv.witness {
                    writeln!(w, "  witness point {point:?} direction {dir:?}")?;
                }
            }
            writeln!(w, "verdict: {}", if report.pass { "PASS" } else { "FAIL" })?;
            w.flush()?;
            println!(
                "foliation-check: {}",
                if report.pass { "PASS" } else { "FAIL" }
            );
            if !report.pass {
                bail!("foliation conditions violated");
            }
            return Ok(());
        }

        let surface = self.surface()?;
        let points = sample_surface_points(&surface, &bounds, 16);
        if points.is_empty() {
            bail!("surface does not intersect the scan box");
        }
        let mut pass = true;
        for (i, z) in points.iter().enumerate() {
            let timelike = is_timelike_surface(&metric, &surface, z)?;
            let convex = strict_convexity_check_with_tol(
                &metric,
                &surface,
                z,
                SignConvention::InteriorNegative,
                tol_conv,
            );
            let (convex_ok, min_q, witness) = match &convex {
                Ok(v) => (v.strictly_convex, v.min_value, format!("{:?}", v.witness)),
                Err(e) => (false, f64::NAN, format!("({e})")),
            };
            let escape_ok = if i % 4 == 0 && timelike && convex_ok {
                tangent_escape_check(&metric, &surface, z, &bounds, SignConvention::InteriorNegative)?
            } else {
                timelike && convex_ok
            };
            pass &= timelike && convex_ok && escape_ok;
            writeln!(
                w,
                "point {z:?}: timelike {timelike} convex {convex_ok} (minQ {}) escape {escape_ok} witness {witness}",
                fmt_f64(min_q)
            )?;
        }
        writeln!(w, "verdict: {}", if pass { "PASS" } else { "FAIL" })?;
        w.flush()?;
        println!("foliation-check: {}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            bail!("surface fails strict lightlike convexity on sampled points");
        }
        Ok(())
    }

    fn stage_shrink_check(&mut self) -> Result<()> {
        let fol = self.foliation()?;
        let sino = self.computed_sinogram()?;
        let s_half = self.cfg.f64_or("sinogram", "s_half", 4.0)?;
        let noise_floor = self.cfg.f64_or("shrink", "noise_floor", 1e-10)?;
        let report = support_shrink_experiment(&sino, &fol, s_half, noise_floor);
        let mut w = self.artifact_writer("shrink_check.csv")?;
        writeln!(w, "theta_index,x_index,sigma,value")?;
        for t in &report.tangents {
            writeln!(
                w,
                "{},{},{},{}",
                t.theta_index,
                t.x_index,
                fmt_f64(t.sigma),
                fmt_f64(t.value)
            )?;
        }
        w.flush()?;
        let violations = report.violations().len();
        println!(
            "shrink-check: {} tangent rays, max |value| {:.3e}, {} above the noise floor {:.1e}",
            report.tangents.len(),
            report.max_abs_value,
            violations,
            noise_floor
        );
        Ok(())
    }

    fn stage_visibility(&mut self) -> Result<()> {
        let metric = self.metric()?;
        let n = metric.spatial_dim();
        if n != 3 {
            bail!("the visibility experiment is configured for 1+3 dimensions");
        }
        let grid = self.field_grid()?;
        let ramp = self.cfg.f64_or("visibility", "ramp", 2.0 * grid.spacing[0])?;
        let half_width = self.cfg.f64_or("visibility", "half_width", 0.5)?;
        let min_ordering = self.cfg.f64_or("visibility", "min_ordering", 5.0)?;
        let max_timelike = self.cfg.f64_or("visibility", "max_timelike", 0.1)?;
        let spacelike = Phantom::SlabSpacelike {
            dim: n,
            half_width,
            ramp,
        };
        let timelike = Phantom::SlabTimelike {
            dim: n,
            half_width,
            ramp,
        };
        let cfg = VisibilityConfig {
            grid: grid.clone(),
            sino: self.sinogram_spec()?,
            eps_lc: self.cfg.f64_or("tolerances", "eps_lc", 1e-3)?,
            shell: ramp + 2.0 * grid.spacing[0],
        };
        let report = visibility_experiment(&metric, &spacelike, &timelike, &cfg)?;
        let mut w = self.artifact_writer("visibility.txt")?;
        writeln!(w, "spacelike_edge_energy_ratio = {}", fmt_f64(report.spacelike_ratio))?;
        writeln!(w, "timelike_edge_energy_ratio = {}", fmt_f64(report.timelike_ratio))?;
        writeln!(w, "ordering = {}", fmt_f64(report.ordering()))?;
        w.flush()?;
        println!(
            "visibility: spacelike {:.3}, timelike {:.4}, ordering {:.1}x",
            report.spacelike_ratio,
            report.timelike_ratio,
            report.ordering()
        );
        if report.ordering() < min_ordering || report.timelike_ratio > max_timelike {
            bail!(
                "visibility ordering {:.2} (need >= {min_ordering}) with timelike ratio {:.3} (need <= {max_timelike})",
                report.ordering(),
                report.timelike_ratio
            );
        }
        Ok(())
    }

    /// Write the manifest: version, config echo, per-stage wall clock and a
    /// checksum of every artifact.
    pub fn write_manifest(&mut self) -> Result<PathBuf> {
        for (name, digest) in self.artifacts.iter_mut() {
            let bytes = std::fs::read(self.out_dir.join(&*name))?;
            let mut hasher = Sha256::new();
            hasher.update(&bytes);
            *digest = hasher
                .finalize()
                .iter()
                .map(|b| format!("{b:02x}"))
                .collect();
        }
        let path = self.out_dir.join("manifest.txt");
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "lightray {}", env!("CARGO_PKG_VERSION"))?;
        match &self.config_path {
            Some(p) => writeln!(w, "config = {}", p.display())?,
            None => writeln!(w, "config = (flags only)")?,
        }
        writeln!(w, "\n[config]")?;
        write!(w, "{}", self.cfg.echo())?;
        writeln!(w, "\n[stages]")?;
        for (name, secs) in &self.timings {
            writeln!(w, "{name} = {secs:.3} s")?;
        }
        writeln!(w, "\n[artifacts]")?;
        for (name, digest) in &self.artifacts {
            writeln!(w, "{digest}  {name}")?;
        }
        w.flush()?;
        Ok(path)
    }
}

/// Load the config (if any), apply overrides, return the context.
pub fn build_context(
    config: Option<&Path>,
    sets: &[String],
    out_dir: Option<&str>,
) -> Result<RunContext> {
    let mut cfg = match config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    for spec in sets {
        cfg.set(spec)?;
    }
    if let Some(dir) = out_dir {
        cfg.set(&format!("output.dir={dir}"))?;
    }
    RunContext::new(cfg, config.map(|p| p.to_path_buf()))
}
