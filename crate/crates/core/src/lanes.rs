//! Reductions with independent partial sums, laid out so the compiler can
//! vectorize them. Summation order is fixed, so results are reproducible.

const W: usize = 4;

#[inline]
fn fold(acc: [f64; W]) -> f64 {
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

pub(crate) fn sum(a: &[f64]) -> f64 {
    let mut acc = [0.0; W];
    let chunks = a.chunks_exact(W);
    let tail: f64 = chunks.remainder().iter().sum();
    for c in chunks {
        for k in 0..W {
            acc[k] += c[k];
        }
    }
    fold(acc) + tail
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; W];
    let (ca, cb) = (a.chunks_exact(W), b.chunks_exact(W));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..W {
            acc[k] += x[k] * y[k];
        }
    }
    fold(acc) + tail
}

/// `dst += w * (a + b)`
#[inline]
pub(crate) fn axpy2(dst: &mut [f64], w: f64, a: &[f64], b: &[f64]) {
    for ((d, x), y) in dst.iter_mut().zip(a).zip(b) {
        *d += w * (x + y);
    }
}
