//! Log-space integer combinatorics shared by the likelihood code.
//!
//! All public quantities in this crate are base-2 logarithms (bits). The
//! factorial table is precomputed per graph so that the hot MCMC and scoring
//! paths are table lookups rather than `ln_gamma` calls.

use statrs::function::gamma::ln_gamma;

const LOG2_E: f64 = std::f64::consts::LOG2_E;

/// Table of `log2(n!)` values for `0..=max`.
///
/// Entries are computed independently of each other (exact integer factorials
/// below 21, `ln_gamma` above), so repeated lookups never accumulate error.
#[derive(Debug, Clone)]
pub struct LogFactorial {
    table: Vec<f64>,
}

impl LogFactorial {
    pub fn with_max(max: usize) -> Self {
        let table = (0..=max).map(|n| log2_factorial_direct(n as u64)).collect();
        LogFactorial { table }
    }

    /// `log2(n!)`, falling back to direct evaluation beyond the table.
    #[inline]
    pub fn lf(&self, n: u64) -> f64 {
        match self.table.get(n as usize) {
            Some(&v) => v,
            None => log2_factorial_direct(n),
        }
    }

    /// `log2(n!!)` for even `n`: `n!! = 2^(n/2) * (n/2)!`.
    #[inline]
    pub fn ldf_even(&self, n: u64) -> f64 {
        debug_assert!(
            n.is_multiple_of(2),
            "double factorial argument must be even"
        );
        let half = n / 2;
        half as f64 + self.lf(half)
    }

    /// `log2(C(n, k))`.
    #[inline]
    pub fn lbinom(&self, n: u64, k: u64) -> f64 {
        debug_assert!(k <= n);
        self.lf(n) - self.lf(k) - self.lf(n - k)
    }

    /// Log of the multiset coefficient `((n, m)) = C(n + m - 1, m)`: the
    /// number of ways to distribute `m` unlabelled items over `n` slots.
    #[inline]
    pub fn lmultiset(&self, n: u64, m: u64) -> f64 {
        if n == 0 {
            debug_assert!(m == 0);
            return 0.0;
        }
        self.lbinom(n + m - 1, m)
    }
}

fn log2_factorial_direct(n: u64) -> f64 {
    if n < 21 {
        let mut f: u64 = 1;
        for i in 2..=n {
            f *= i;
        }
        (f as f64).log2()
    } else {
        ln_gamma(n as f64 + 1.0) * LOG2_E
    }
}

/// Numerically stable `log2(sum_i 2^x_i)`.
pub fn log_sum_exp2(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp2()).sum();
    max + sum.log2()
}
