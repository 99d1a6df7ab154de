//! File formats: the LRTF binary field container, CSV exports for
//! sinograms, geodesic paths and reports, and 16-bit PGM slices with
//! min/max sidecars.
//!
//! LRTF layout (little-endian): magic "LRTF", u32 version = 1, u8 ndim,
//! then per axis (u64 dim, f64 origin, f64 spacing), then the f64 samples
//! row-major with t slowest.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::geodesic::GeodesicPath;
use crate::grid::GridSpec;
use crate::transform::Sinogram;

pub const LRTF_MAGIC: [u8; 4] = *b"LRTF";
pub const LRTF_VERSION: u32 = 1;

pub fn write_lrtf<W: Write>(field: &ScalarField, mut w: W) -> Result<()> {
    w.write_all(&LRTF_MAGIC)?;
    w.write_all(&LRTF_VERSION.to_le_bytes())?;
    let spec = &field.spec;
    w.write_all(&[spec.rank() as u8])?;
    for a in 0..spec.rank() {
        w.write_all(&(spec.dims[a] as u64).to_le_bytes())?;
        w.write_all(&spec.origin[a].to_le_bytes())?;
        w.write_all(&spec.spacing[a].to_le_bytes())?;
    }
    for v in &field.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_lrtf<R: Read>(mut r: R) -> Result<ScalarField> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != LRTF_MAGIC {
        return Err(Error::MalformedLrtf("bad magic".into()));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let version = u32::from_le_bytes(buf4);
    if version != LRTF_VERSION {
        return Err(Error::MalformedLrtf(format!("unsupported version {version}")));
    }
    let mut buf1 = [0u8; 1];
    r.read_exact(&mut buf1)?;
    let ndim = buf1[0] as usize;
    if ndim == 0 || ndim > 8 {
        return Err(Error::MalformedLrtf(format!("implausible ndim {ndim}")));
    }
    let mut dims = Vec::with_capacity(ndim);
    let mut origin = Vec::with_capacity(ndim);
    let mut spacing = Vec::with_capacity(ndim);
    let mut buf8 = [0u8; 8];
    for _ in 0..ndim {
        r.read_exact(&mut buf8)?;
        dims.push(u64::from_le_bytes(buf8) as usize);
        r.read_exact(&mut buf8)?;
        origin.push(f64::from_le_bytes(buf8));
        r.read_exact(&mut buf8)?;
        spacing.push(f64::from_le_bytes(buf8));
    }
    let spec = GridSpec::new(dims, origin, spacing)
        .map_err(|e| Error::MalformedLrtf(format!("bad grid header: {e}")))?;
    let len = spec.len();
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        r.read_exact(&mut buf8)?;
        data.push(f64::from_le_bytes(buf8));
    }
    Ok(ScalarField { spec, data })
}

/// 17 significant digits, C locale; round-trips f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Sinogram CSV: header x1..xn, theta1..thetan, value.
pub fn write_sinogram_csv<W: Write>(sino: &Sinogram, mut w: W) -> Result<()> {
    let n = sino.x_grid.rank();
    let mut header = Vec::new();
    for a in 1..=n {
        header.push(format!("x{a}"));
    }
    for a in 1..=n {
        header.push(format!("theta{a}"));
    }
    header.push("value".into());
    writeln!(w, "{}", header.join(","))?;
    let len = sino.x_grid.len();
    for (j, theta) in sino.thetas.iter().enumerate() {
        let row = sino.row(j);
        for xi in 0..len {
            let x = sino.x_grid.point_at(&sino.x_grid.multi_index(xi));
            let mut fields: Vec<String> = x.iter().map(|&c| fmt_f64(c)).collect();
            fields.extend(theta.iter().map(|&c| fmt_f64(c)));
            fields.push(fmt_f64(row[xi]));
            writeln!(w, "{}", fields.join(","))?;
        }
    }
    Ok(())
}

/// Geodesic path CSV: s, z0..zn, p0..pn, drift.
pub fn write_path_csv<W: Write>(path: &GeodesicPath, mut w: W) -> Result<()> {
    let d = path.points[0].len();
    let mut header = vec!["s".to_string()];
    for a in 0..d {
        header.push(format!("z{a}"));
    }
    for a in 0..d {
        header.push(format!("p{a}"));
    }
    header.push("drift".into());
    writeln!(w, "{}", header.join(","))?;
    for k in 0..path.len() {
        let mut fields = vec![fmt_f64(path.params[k])];
        fields.extend(path.points[k].iter().map(|&c| fmt_f64(c)));
        fields.extend(path.momenta[k].iter().map(|&c| fmt_f64(c)));
        fields.push(fmt_f64(path.drift[k]));
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Extract the (t, x^{n-1}) slice of a field with the other axes pinned to
/// their midpoints: rows sweep t, columns sweep x^{n-1}.
pub fn mid_slice(field: &ScalarField) -> (Vec<f64>, usize, usize) {
    let spec = &field.spec;
    let rank = spec.rank();
    let (rows, cols_axis) = (spec.dims[0], rank - 2);
    let cols = spec.dims[cols_axis];
    let mut idx: Vec<usize> = spec.dims.iter().map(|&d| d / 2).collect();
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        idx[0] = i;
        for j in 0..cols {
            idx[cols_axis] = j;
            out.push(field.data[spec.flat_index(&idx)]);
        }
    }
    (out, rows, cols)
}

/// 16-bit binary PGM (P5) with a fixed linear grayscale mapping; the
/// min/max used is returned for the sidecar.
pub fn write_pgm16<W: Write>(data: &[f64], rows: usize, cols: usize, mut w: W) -> Result<(f64, f64)> {
    assert_eq!(data.len(), rows * cols);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in data {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 0.0;
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    write!(w, "P5\n{cols} {rows}\n65535\n")?;
    for &v in data {
        let g = (((v - lo) / span) * 65535.0).round().clamp(0.0, 65535.0) as u16;
        w.write_all(&g.to_be_bytes())?;
    }
    Ok((lo, hi))
}
