//! Hypergeometric tail probabilities.
//!
//! `H(X | N, K, n)` counts the probability that `X` of `n` draws without
//! replacement from a population of `N` hit one of the `K` marked elements.
//! Both tails are computed by evaluating the first tail term in log space
//! (log-factorials) and walking the support with the pmf ratio recurrence,
//! so every accumulated term is no larger than the previous one. The tail that
//! does not contain the mode is always summed directly; the other one is
//! obtained as its complement, which keeps the relative error small in both
//! regimes.

use std::sync::OnceLock;

use crate::error::{Error, Result};

const TABLE_SIZE: usize = 1024;

fn ln_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        // compensated summation of ln k
        let mut table = Vec::with_capacity(TABLE_SIZE);
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        table.push(0.0);
        for k in 1..TABLE_SIZE {
            let y = (k as f64).ln() - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            table.push(sum);
        }
        table
    })
}

/// `ln(n!)`.
pub fn ln_factorial(n: u64) -> f64 {
    if (n as usize) < TABLE_SIZE {
        return ln_factorial_table()[n as usize];
    }
    // Stirling series for ln Γ(x), x = n + 1 >= 1025
    let x = n as f64 + 1.0;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0))));
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + series
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

#[derive(Debug, Clone, Copy)]
struct Support {
    population: u64,
    successes: u64,
    draws: u64,
    lo: u64,
    hi: u64,
    mode: u64,
}

impl Support {
    fn new(population: u64, successes: u64, draws: u64, observed: u64) -> Result<Self> {
        let hi = successes.min(draws);
        if successes > population || draws > population || observed > hi {
            return Err(Error::Hypergeometric {
                population,
                successes,
                draws,
                observed,
            });
        }
        let lo = (successes + draws).saturating_sub(population);
        let mode = ((successes as u128 + 1) * (draws as u128 + 1) / (population as u128 + 2)) as u64;
        Ok(Support {
            population,
            successes,
            draws,
            lo,
            hi,
            mode: mode.clamp(lo, hi),
        })
    }

    fn ln_pmf(&self, x: u64) -> f64 {
        ln_binomial(self.successes, x) + ln_binomial(self.population - self.successes, self.draws - x)
            - ln_binomial(self.population, self.draws)
    }

    /// `P(X >= k)` summed term by term; only accurate when `k > mode`.
    fn upper_sum(&self, k: u64) -> f64 {
        let (n, a, b) = (self.population as f64, self.successes as f64, self.draws as f64);
        let mut term = self.ln_pmf(k).exp();
        let mut sum = 0.0;
        let mut x = k;
        loop {
            sum += term;
            if x == self.hi || term <= sum * 1e-18 {
                break;
            }
            let xf = x as f64;
            term *= (a - xf) * (b - xf) / ((xf + 1.0) * (n - a - b + xf + 1.0));
            x += 1;
        }
        sum
    }

    /// `P(X <= k)` summed term by term; only accurate when `k < mode`.
    fn lower_sum(&self, k: u64) -> f64 {
        let (n, a, b) = (self.population as f64, self.successes as f64, self.draws as f64);
        let mut term = self.ln_pmf(k).exp();
        let mut sum = 0.0;
        let mut x = k;
        loop {
            sum += term;
            if x == self.lo || term <= sum * 1e-18 {
                break;
            }
            let xf = x as f64;
            term *= xf * (n - a - b + xf) / ((a - xf + 1.0) * (b - xf + 1.0));
            x -= 1;
        }
        sum
    }

    fn sf(&self, k: u64) -> f64 {
        if k <= self.lo {
            1.0
        } else if k > self.mode {
            self.upper_sum(k).min(1.0)
        } else {
            (1.0 - self.lower_sum(k - 1)).clamp(0.0, 1.0)
        }
    }

    fn cdf(&self, k: u64) -> f64 {
        if k >= self.hi {
            1.0
        } else if k < self.lo {
            0.0
        } else if k < self.mode {
            self.lower_sum(k).min(1.0)
        } else {
            (1.0 - self.upper_sum(k + 1)).clamp(0.0, 1.0)
        }
    }
}

/// Right tail `P(X >= observed)` for `X ~ H(population, successes, draws)`.
///
/// Returns exactly `1.0` whenever `observed` does not exceed the smallest
/// feasible overlap. Fails when the margins are infeasible or `observed`
/// exceeds `min(successes, draws)`.
pub fn hypergeom_sf(population: u64, successes: u64, draws: u64, observed: u64) -> Result<f64> {
    Ok(Support::new(population, successes, draws, observed)?.sf(observed))
}

/// Left tail `P(X <= observed)`.
pub fn hypergeom_cdf(population: u64, successes: u64, draws: u64, observed: u64) -> Result<f64> {
    Ok(Support::new(population, successes, draws, observed)?.cdf(observed))
}
