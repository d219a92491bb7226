//! Direct, loop-by-loop reimplementations used as oracles for the optimized
//! library code, plus small fixture helpers.

#![allow(dead_code)]

use pansh_qa::filtering::{default_mtf_kernel, Kernel};
use pansh_qa::{PanMsPair, Raster, DEGENERACY_EPS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_raster(rows: usize, cols: usize, bands: usize, seed: u64) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols * bands).map(|_| 1.0 + rng.random::<f64>()).collect();
    Raster::new(rows, cols, bands, data, 2.0).unwrap()
}

/// Top-left `size x size` window of every band.
pub fn crop(r: &Raster, size: usize) -> Raster {
    let mut data = Vec::with_capacity(size * size * r.bands());
    for b in r.band_iter() {
        for i in 0..size {
            data.extend_from_slice(&b[i * r.cols()..i * r.cols() + size]);
        }
    }
    Raster::new(size, size, r.bands(), data, r.dynamic_range()).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn reflect(i: isize, n: usize) -> usize {
    // half-sample symmetric: ... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Full 2-D kernel applied pixel by pixel with mirror padding.
pub fn naive_convolve(r: &Raster, k: &Kernel) -> Raster {
    let (rows, cols, n) = (r.rows(), r.cols(), k.size());
    let h = (n / 2) as isize;
    let mut data = Vec::with_capacity(r.data().len());
    for band in r.band_iter() {
        for i in 0..rows {
            for j in 0..cols {
                let mut acc = 0.0;
                for u in 0..n {
                    for v in 0..n {
                        let y = reflect(i as isize + u as isize - h, rows);
                        let x = reflect(j as isize + v as isize - h, cols);
                        acc += k.tap(u, v) * band[y * cols + x];
                    }
                }
                data.push(acc);
            }
        }
    }
    Raster::new(rows, cols, r.bands(), data, r.dynamic_range()).unwrap()
}

fn moments(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let vx = x.iter().map(|a| (a - mx) * (a - mx)).sum::<f64>() / n;
    let vy = y.iter().map(|a| (a - my) * (a - my)).sum::<f64>() / n;
    let cxy = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
    (mx, my, vx, vy, cxy)
}

fn block_pixels(plane: &[f64], cols: usize, r0: usize, c0: usize, block: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(block * block);
    for i in r0..r0 + block {
        for j in c0..c0 + block {
            v.push(plane[i * cols + j]);
        }
    }
    v
}

/// Single-formula UIQI averaged over non-overlapping blocks.
pub fn naive_uiqi(x: &[f64], y: &[f64], rows: usize, cols: usize, block: usize, dr: f64) -> f64 {
    let floor = DEGENERACY_EPS * dr * dr;
    let (mut sum, mut used) = (0.0, 0);
    for bi in 0..rows / block {
        for bj in 0..cols / block {
            let bx = block_pixels(x, cols, bi * block, bj * block, block);
            let by = block_pixels(y, cols, bi * block, bj * block, block);
            let (mx, my, vx, vy, cxy) = moments(&bx, &by);
            if (vx * vy).sqrt() < floor || vx + vy < floor || mx * mx + my * my < floor {
                continue;
            }
            sum += 4.0 * cxy * mx * my / ((vx + vy) * (mx * mx + my * my));
            used += 1;
        }
    }
    sum / used as f64
}

type Quat = [f64; 4];

fn hamilton(a: Quat, b: Quat) -> Quat {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

fn qconj(a: Quat) -> Quat {
    [a[0], -a[1], -a[2], -a[3]]
}

fn qnorm(a: Quat) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Q4 with explicit quaternion arithmetic; bands map to `1, i, j, k`.
pub fn naive_q4(gt: &Raster, fused: &Raster, block: usize) -> f64 {
    assert_eq!(gt.bands(), 4);
    let floor = DEGENERACY_EPS * gt.dynamic_range() * gt.dynamic_range();
    let cols = gt.cols();
    let quat = |r: &Raster, p: usize| -> Quat { [r.band(0)[p], r.band(1)[p], r.band(2)[p], r.band(3)[p]] };
    let (mut sum, mut used) = (0.0, 0);
    for bi in 0..gt.rows() / block {
        for bj in 0..cols / block {
            let px: Vec<usize> = (bi * block..(bi + 1) * block)
                .flat_map(|i| (bj * block..(bj + 1) * block).map(move |j| i * cols + j))
                .collect();
            let n = px.len() as f64;
            let (mut mz, mut mh) = ([0.0; 4], [0.0; 4]);
            for &p in &px {
                let (z, h) = (quat(gt, p), quat(fused, p));
                for c in 0..4 {
                    mz[c] += z[c] / n;
                    mh[c] += h[c] / n;
                }
            }
            let (mut vz, mut vh, mut cov) = (0.0, 0.0, [0.0; 4]);
            for &p in &px {
                let (z, h) = (quat(gt, p), quat(fused, p));
                let dz: Quat = std::array::from_fn(|c| z[c] - mz[c]);
                let dh: Quat = std::array::from_fn(|c| h[c] - mh[c]);
                vz += qnorm(dz).powi(2) / n;
                vh += qnorm(dh).powi(2) / n;
                let prod = hamilton(dz, qconj(dh));
                for c in 0..4 {
                    cov[c] += prod[c] / n;
                }
            }
            let (sz, sh) = (vz.sqrt(), vh.sqrt());
            let (nz, nh) = (qnorm(mz), qnorm(mh));
            if sz * sh < floor || vz + vh < floor || nz * nz + nh * nh < floor {
                continue;
            }
            let q = qnorm(cov) / (sz * sh) * (2.0 * sz * sh / (vz + vh)) * (2.0 * nz * nh / (nz * nz + nh * nh));
            sum += q;
            used += 1;
        }
    }
    sum / used as f64
}

/// Window-by-window two-pass Pearson correlation; `None` where a window is flat.
pub fn naive_field(fused: &Raster, pan: &Raster, sigma: usize) -> Vec<Option<f64>> {
    let floor = DEGENERACY_EPS * pan.dynamic_range().powi(2);
    let (rows, cols) = (fused.rows(), fused.cols());
    let mut out = Vec::new();
    for band in fused.band_iter() {
        for i in 0..=rows - sigma {
            for j in 0..=cols - sigma {
                let mut a = Vec::new();
                let mut b = Vec::new();
                for u in 0..sigma {
                    for v in 0..sigma {
                        a.push(pan.band(0)[(i + u) * cols + j + v]);
                        b.push(band[(i + u) * cols + j + v]);
                    }
                }
                let (_, _, va, vb, c) = moments(&a, &b);
                out.push((va >= floor && vb >= floor).then(|| c / (va * vb).sqrt()));
            }
        }
    }
    out
}

/// D_S from scratch: PAN filtered with its MTF kernel, decimated at phase 0,
/// then per-band block UIQI gaps.
pub fn naive_d_s(fused: &Raster, pair: &PanMsPair, q: i32, block: usize) -> f64 {
    let r = pair.ratio();
    let pan = pair.pan();
    let ms = pair.ms();
    let lp = naive_convolve(pan, &default_mtf_kernel(pair.sensor().pan_nyquist_gain, r).unwrap());
    let (mr, mc) = (ms.rows(), ms.cols());
    let small: Vec<f64> = (0..mr)
        .flat_map(|i| (0..mc).map(move |j| (i, j)))
        .map(|(i, j)| lp.band(0)[i * r * pan.cols() + j * r])
        .collect();
    let mut acc = 0.0;
    for b in 0..fused.bands() {
        let hi = naive_uiqi(fused.band(b), pan.band(0), pan.rows(), pan.cols(), block, fused.dynamic_range());
        let lo = naive_uiqi(ms.band(b), &small, mr, mc, block, ms.dynamic_range());
        acc += (hi - lo).abs().powi(q);
    }
    (acc / fused.bands() as f64).powf(1.0 / q as f64)
}

/// Library-vs-oracle discrepancies on random 64x64 inputs for one seed.
pub mod equivalence {
    use super::*;
    use pansh_qa::filtering::convolve;
    use pansh_qa::fr_indexes::{d_s_with, local_correlation_field, PanDownscale};
    use pansh_qa::raster::validate_pair;
    use pansh_qa::ref_indexes::{q2n, uiqi};
    use pansh_qa::SensorSpec;

    pub const SIZE: usize = 64;

    pub fn uiqi_diff(seed: u64) -> f64 {
        let x = random_raster(SIZE, SIZE, 1, seed);
        let y = random_raster(SIZE, SIZE, 1, seed + 1000).map(|v| v + 0.3).unwrap();
        // correlate y with x so block scores are not all near zero
        let y = Raster::new(
            SIZE,
            SIZE,
            1,
            x.data().iter().zip(y.data()).map(|(a, b)| 0.7 * a + 0.3 * b).collect(),
            2.0,
        )
        .unwrap();
        [8, 16, 32]
            .into_iter()
            .map(|blk| (uiqi(&x, &y, blk).unwrap() - naive_uiqi(x.data(), y.data(), SIZE, SIZE, blk, 2.0)).abs())
            .fold(0.0, f64::max)
    }

    pub fn q4_diff(seed: u64) -> f64 {
        let x = random_raster(SIZE, SIZE, 4, seed);
        let noise = random_raster(SIZE, SIZE, 4, seed + 2000);
        let y = Raster::new(
            SIZE,
            SIZE,
            4,
            x.data().iter().zip(noise.data()).map(|(a, b)| 0.8 * a + 0.4 * b).collect(),
            2.0,
        )
        .unwrap();
        [8, 32]
            .into_iter()
            .map(|blk| (q2n(&x, &y, blk).unwrap() - naive_q4(&x, &y, blk)).abs())
            .fold(0.0, f64::max)
    }

    pub fn field_diff(seed: u64) -> f64 {
        let pan = random_raster(SIZE, SIZE, 1, seed);
        let fused = random_raster(SIZE, SIZE, 3, seed + 3000);
        let mut worst: f64 = 0.0;
        for sigma in [3, 4, 7] {
            let f = local_correlation_field(&fused, &pan, sigma).unwrap();
            let naive = naive_field(&fused, &pan, sigma);
            assert_eq!(f.values().len(), naive.len());
            for (a, b) in f.values().iter().zip(&naive) {
                match b {
                    Some(b) => worst = worst.max((a - b).abs()),
                    None => assert!(a.is_nan()),
                }
            }
        }
        worst
    }

    pub fn d_s_diff(seed: u64) -> f64 {
        let pan = random_raster(SIZE, SIZE, 1, seed);
        let ms = random_raster(SIZE / 4, SIZE / 4, 4, seed + 4000);
        let fused = random_raster(SIZE, SIZE, 4, seed + 5000);
        let pair = validate_pair(pan, ms, SensorSpec::with_default_gains("t", 4, 4).unwrap()).unwrap();
        [1u32, 2]
            .into_iter()
            .map(|q| {
                let lib = d_s_with(&fused, &pair, q, 8, PanDownscale::Mtf).unwrap();
                (lib - naive_d_s(&fused, &pair, q as i32, 8)).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn convolve_diff(seed: u64) -> f64 {
        let x = random_raster(SIZE, SIZE, 1, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 6000);
        // a non-separable kernel symmetric under 180 degree rotation
        let half: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
        let mut taps: Vec<f64> = (0..49).map(|i| if i <= 24 { half[i] } else { half[48 - i] }).collect();
        let s: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= s);
        let kernels = [
            Kernel::from_taps(7, taps).unwrap(),
            Kernel::gaussian(1.3, 9).unwrap(),
            default_mtf_kernel(0.3, 4).unwrap(),
        ];
        kernels
            .iter()
            .map(|k| max_abs_diff(convolve(&x, std::slice::from_ref(k)).unwrap().data(), naive_convolve(&x, k).data()))
            .fold(0.0, f64::max)
    }
}
