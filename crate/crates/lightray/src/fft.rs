//! n-dimensional complex FFTs over flat row-major buffers.
//!
//! Each axis pass transforms the (currently) last axis, which is
//! contiguous, then rotates the axis order by a parallel transpose; after
//! rank passes the layout is back to the original order.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// In-place n-dimensional FFT of `data` with shape `dims` (row major,
/// first axis slowest). The inverse carries the 1/N normalization.
pub fn fft_nd(data: &mut Vec<Complex64>, dims: &[usize], dir: Direction) {
    let total: usize = dims.iter().product();
    assert_eq!(data.len(), total);
    let mut planner = FftPlanner::new();
    let mut shape: Vec<usize> = dims.to_vec();
    let rank = dims.len();
    let mut scratch: Vec<Complex64> = vec![Complex64::default(); total];
    for _ in 0..rank {
        let len = *shape.last().unwrap();
        let rows = total / len;
        let fft = match dir {
            Direction::Forward => planner.plan_fft_forward(len),
            Direction::Inverse => planner.plan_fft_inverse(len),
        };
        data.par_chunks_mut(len).for_each_init(
            || vec![Complex64::default(); fft.get_inplace_scratch_len()],
            |scr, chunk| {
                fft.process_with_scratch(chunk, scr);
            },
        );
        // rotate axes right: view as (rows x len), write transposed (len x rows)
        {
            let src = &*data;
            scratch
                .par_chunks_mut(rows)
                .enumerate()
                .for_each(|(c, out_row)| {
                    for (q, slot) in out_row.iter_mut().enumerate() {
                        *slot = src[q * len + c];
                    }
                });
        }
        std::mem::swap(data, &mut scratch);
        shape.rotate_right(1);
    }
    if dir == Direction::Inverse {
        let scale = 1.0 / total as f64;
        data.par_iter_mut().for_each(|v| *v *= scale);
    }
}

/// DFT dual frequencies of one axis: 2 pi k / (len * spacing) in the
/// standard signed layout (non-negative bins first).
pub fn fft_frequencies(len: usize, spacing: f64) -> Vec<f64> {
    let step = std::f64::consts::TAU / (len as f64 * spacing);
    (0..len)
        .map(|k| {
            let signed = if k <= (len - 1) / 2 {
                k as isize
            } else {
                k as isize - len as isize
            };
            signed as f64 * step
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_restores_the_input() {
        let dims = [6usize, 5, 4];
        let total: usize = dims.iter().product();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let orig: Vec<Complex64> = (0..total)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut data = orig.clone();
        fft_nd(&mut data, &dims, Direction::Forward);
        fft_nd(&mut data, &dims, Direction::Inverse);
        for (a, b) in data.iter().zip(orig.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn matches_a_plane_wave() {
        // delta at a single frequency bin
        let dims = [8usize, 8];
        let (k0, k1) = (3usize, 6usize);
        let mut data: Vec<Complex64> = (0..64)
            .map(|flat| {
                let (i, j) = (flat / 8, flat % 8);
                let phase = std::f64::consts::TAU * (k0 * i + k1 * j) as f64 / 8.0;
                Complex64::new(phase.cos(), phase.sin())
            })
            .collect();
        fft_nd(&mut data, &dims, Direction::Forward);
        for flat in 0..64 {
            let want = if flat == k0 * 8 + k1 { 64.0 } else { 0.0 };
            assert!(
                (data[flat] - Complex64::new(want, 0.0)).norm() < 1e-9,
                "bin {flat}"
            );
        }
    }

    #[test]
    fn parseval_holds_to_relative_1e10() {
        let dims = [12usize, 9, 7];
        let total: usize = dims.iter().product();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let orig: Vec<Complex64> = (0..total)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut data = orig.clone();
        fft_nd(&mut data, &dims, Direction::Forward);
        let space: f64 = orig.iter().map(|v| v.norm_sqr()).sum();
        let freq: f64 = data.iter().map(|v| v.norm_sqr()).sum::<f64>() / total as f64;
        assert!((space - freq).abs() / space < 1e-10);
    }

    #[test]
    fn frequency_layout_is_signed() {
        let f = fft_frequencies(4, 0.5);
        let step = std::f64::consts::TAU / 2.0;
        assert_eq!(f, vec![0.0, step, -2.0 * step, -step]);
    }
}
