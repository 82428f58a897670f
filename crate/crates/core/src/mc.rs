//! Order-independent parallel accumulation for Monte Carlo estimators.
//!
//! Realizations are grouped into fixed blocks. Each block is summed
//! sequentially, and block partials are combined in block order, so the
//! floating-point result is the same for any thread count.

use rayon::prelude::*;

pub(crate) const BLOCK: usize = 256;

/// Running sums over realizations for `width` quantities.
pub(crate) struct Moments {
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
    pub n: usize,
}

impl Moments {
    pub fn mean(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.sum.iter().map(|s| s / n).collect()
    }

    /// Standard error of the mean from the sample variance.
    pub fn stderr(&self) -> Vec<f64> {
        if self.n < 2 {
            return vec![0.0; self.sum.len()];
        }
        let n = self.n as f64;
        self.sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(&s, &sq)| {
                let mean = s / n;
                let var = ((sq - n * mean * mean) / (n - 1.0)).max(0.0);
                (var / n).sqrt()
            })
            .collect()
    }
}

/// Evaluate `realize(i, out)` for `i in 0..n` and accumulate moments of the
/// `width` values it writes.
pub(crate) fn accumulate<F>(n: usize, width: usize, realize: F) -> Moments
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let n_blocks = n.div_ceil(BLOCK);
    let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut sum = vec![0.0; width];
            let mut sum_sq = vec![0.0; width];
            let mut buf = vec![0.0; width];
            for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
                realize(i, &mut buf);
                for ((s, q), &v) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(&buf) {
                    *s += v;
                    *q += v * v;
                }
            }
            (sum, sum_sq)
        })
        .collect();

    let mut sum = vec![0.0; width];
    let mut sum_sq = vec![0.0; width];
    for (ps, pq) in partials {
        for (s, v) in sum.iter_mut().zip(ps) {
            *s += v;
        }
        for (q, v) in sum_sq.iter_mut().zip(pq) {
            *q += v;
        }
    }
    Moments { sum, sum_sq, n }
}
