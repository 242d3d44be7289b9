//! Rank probabilities of totally random matrices and the binomial arrival law.

use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Result};

/// Above this many trials binomial coefficients come from log-gamma.
const EXACT_BINOMIAL_LIMIT: u32 = 60;

fn ln_one_minus_q_pow(q: f64, k: i64) -> f64 {
    // ln(1 - q^{-k}) for k >= 1
    (-(-(k as f64) * q.ln()).exp()).ln_1p()
}

/// ln ζ_r^n = Σ_{i<r} ln(1 - q^{-n+i}); requires r ≤ n.
fn ln_zeta_n_unchecked(r: u32, n: u32, q: f64) -> f64 {
    (0..r).map(|i| ln_one_minus_q_pow(q, n as i64 - i as i64)).sum()
}

/// ζ_r^n = Π_{i=0}^{r-1} (1 - q^{-n+i}), the probability that r fixed
/// columns of a random n-row matrix are independent.
pub fn zeta_n(r: u32, n: u32, q: f64) -> Result<f64> {
    if r > n {
        return domain(format!("ζ_r^n needs r ≤ n, got r={r}, n={n}"));
    }
    if q < 2.0 {
        return domain(format!("field size {q} < 2"));
    }
    Ok(ln_zeta_n_unchecked(r, n, q).exp())
}

/// Probability that a totally random n×m matrix over GF(q) has rank r.
pub fn zeta_nm(r: u32, n: u32, m: u32, q: f64) -> Result<f64> {
    if r > n.min(m) {
        return domain(format!("rank {r} exceeds min({n}, {m})"));
    }
    if q < 2.0 {
        return domain(format!("field size {q} < 2"));
    }
    let ln = ln_zeta_n_unchecked(r, n, q) + ln_zeta_n_unchecked(r, m, q)
        - ln_zeta_n_unchecked(r, r, q)
        - ((n - r) as f64) * ((m - r) as f64) * q.ln();
    Ok(ln.exp())
}

/// Cached ln ζ_r^n for all r ≤ n ≤ `n_max` at one field size.
#[derive(Debug, Clone)]
pub struct ZetaTable {
    ln_q: f64,
    ln: Vec<Vec<f64>>,
}

impl ZetaTable {
    pub fn new(q: f64, n_max: u32) -> Self {
        let ln = (0..=n_max)
            .map(|n| {
                let mut row = Vec::with_capacity(n as usize + 1);
                let mut acc = 0.0;
                row.push(0.0);
                for i in 0..n {
                    acc += ln_one_minus_q_pow(q, n as i64 - i as i64);
                    row.push(acc);
                }
                row
            })
            .collect();
        Self { ln_q: q.ln(), ln }
    }

    pub fn n_max(&self) -> u32 {
        self.ln.len() as u32 - 1
    }

    #[inline]
    pub fn zeta_n(&self, r: u32, n: u32) -> f64 {
        self.ln[n as usize][r as usize].exp()
    }

    /// ζ_r^{n,m}; caller guarantees r ≤ min(n, m) ≤ n_max.
    #[inline]
    pub fn zeta_nm(&self, r: u32, n: u32, m: u32) -> f64 {
        let (r_, n_, m_) = (r as usize, n as usize, m as usize);
        (self.ln[n_][r_] + self.ln[m_][r_]
            - self.ln[r_][r_]
            - ((n - r) as f64) * ((m - r) as f64) * self.ln_q)
            .exp()
    }
}

/// ln C(t, n).
pub fn ln_binomial(t: u32, n: u32) -> f64 {
    if t <= EXACT_BINOMIAL_LIMIT {
        (binomial_exact(t, n) as f64).ln()
    } else {
        ln_gamma(t as f64 + 1.0) - ln_gamma(n as f64 + 1.0) - ln_gamma((t - n) as f64 + 1.0)
    }
}

fn binomial_exact(t: u32, n: u32) -> u64 {
    let k = n.min(t - n) as u64;
    let mut c = 1u64;
    for i in 0..k {
        // stays exact: c * (t - i) is divisible by (i + 1)
        c = c * (t as u64 - i) / (i + 1);
    }
    c
}

/// f(t, n) = C(t, n) (1-ε)^n ε^{t-n}: the chance that exactly n of t
/// packets survive a hop with loss rate ε.
pub fn arrival_pmf(t: u32, eps: f64, n: u32) -> Result<f64> {
    if n > t {
        return domain(format!("cannot receive {n} of {t} packets"));
    }
    if !(0.0..=1.0).contains(&eps) {
        return domain(format!("loss rate {eps} outside [0, 1]"));
    }
    Ok(arrival_pmf_unchecked(t, eps, n))
}

pub(crate) fn arrival_pmf_unchecked(t: u32, eps: f64, n: u32) -> f64 {
    if eps == 0.0 {
        return if n == t { 1.0 } else { 0.0 };
    }
    if eps == 1.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    if t <= EXACT_BINOMIAL_LIMIT {
        binomial_exact(t, n) as f64 * (1.0 - eps).powi(n as i32) * eps.powi((t - n) as i32)
    } else {
        (ln_binomial(t, n) + n as f64 * (-eps).ln_1p() + (t - n) as f64 * eps.ln()).exp()
    }
}

/// The whole arrival law f(t, 0..=t).
pub fn arrival_pmf_vec(t: u32, eps: f64) -> Vec<f64> {
    (0..=t).map(|n| arrival_pmf_unchecked(t, eps, n)).collect()
}
