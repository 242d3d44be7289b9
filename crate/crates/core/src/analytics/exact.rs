//! Rational-arithmetic versions of the recursion, for small fields and
//! exact comparisons against enumeration.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Pow, Zero};

use crate::error::{domain, validation, Result};

fn q_pow(q: u64, k: u32) -> BigInt {
    Pow::pow(BigInt::from(q), k)
}

/// ζ_r^n as an exact rational.
pub fn zeta_n_exact(r: u32, n: u32, q: u64) -> Result<BigRational> {
    if r > n {
        return domain(format!("ζ_r^n needs r ≤ n, got r={r}, n={n}"));
    }
    if q < 2 {
        return domain(format!("field size {q} < 2"));
    }
    let mut acc = BigRational::one();
    for i in 0..r {
        let d = q_pow(q, n - i);
        acc *= BigRational::new(&d - 1, d);
    }
    Ok(acc)
}

/// ζ_r^{n,m} as an exact rational.
pub fn zeta_nm_exact(r: u32, n: u32, m: u32, q: u64) -> Result<BigRational> {
    if r > n.min(m) {
        return domain(format!("rank {r} exceeds min({n}, {m})"));
    }
    let num = zeta_n_exact(r, n, q)? * zeta_n_exact(r, m, q)?;
    let den = zeta_n_exact(r, r, q)? * BigRational::from_integer(q_pow(q, (n - r) * (m - r)));
    Ok(num / den)
}

fn binomial(t: u32, n: u32) -> BigInt {
    let mut c = BigInt::one();
    for i in 0..n {
        c = c * BigInt::from(t - i) / BigInt::from(i + 1);
    }
    c
}

/// f(t, n) with a rational loss rate.
pub fn arrival_pmf_exact(t: u32, eps: &BigRational, n: u32) -> Result<BigRational> {
    if n > t {
        return domain(format!("cannot receive {n} of {t} packets"));
    }
    if eps < &BigRational::zero() || eps > &BigRational::one() {
        return domain(format!("loss rate {eps} outside [0, 1]"));
    }
    let keep = BigRational::one() - eps;
    Ok(BigRational::from_integer(binomial(t, n)) * Pow::pow(&keep, n) * Pow::pow(eps, t - n))
}

/// Dense rational transition matrix, indexed [m][j].
pub fn transition_matrix_exact(
    t: u32,
    eps: &BigRational,
    batch_size: u32,
    q: u64,
) -> Result<Vec<Vec<BigRational>>> {
    if t == 0 {
        return validation("t must be at least 1");
    }
    let f: Vec<BigRational> = (0..=t).map(|n| arrival_pmf_exact(t, eps, n)).collect::<Result<_>>()?;
    let size = batch_size as usize + 1;
    let mut p = vec![vec![BigRational::zero(); size]; size];
    for m in 0..=batch_size {
        for j in 0..=m.min(t) {
            let mut s = BigRational::zero();
            for n in j..=t {
                s += &f[n as usize] * zeta_nm_exact(j, m, n, q)?;
            }
            p[m as usize][j as usize] = s;
        }
    }
    Ok(p)
}

/// Exact sink distribution for per-hop loss rates and packet counts.
pub fn propagate_exact(eps: &[BigRational], t: &[u32], batch_size: u32, q: u64) -> Result<Vec<BigRational>> {
    if eps.len() != t.len() || eps.is_empty() {
        return validation(format!("{} loss rates for {} hops", eps.len(), t.len()));
    }
    let size = batch_size as usize + 1;
    let mut h = vec![BigRational::zero(); size];
    h[batch_size as usize] = BigRational::one();
    for (e, &tk) in eps.iter().zip(t) {
        let p = transition_matrix_exact(tk, e, batch_size, q)?;
        let mut next = vec![BigRational::zero(); size];
        for (m, hm) in h.iter().enumerate() {
            if hm.is_zero() {
                continue;
            }
            for j in 0..=m {
                next[j] += hm * &p[m][j];
            }
        }
        h = next;
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{zeta_nm, transition_matrix};
    use num_traits::ToPrimitive;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn small_values() {
        assert_eq!(zeta_n_exact(2, 2, 2).unwrap(), rat(3, 8));
        assert_eq!(zeta_nm_exact(1, 2, 2, 2).unwrap(), rat(9, 16));
        assert_eq!(zeta_nm_exact(0, 2, 2, 2).unwrap(), rat(1, 16));
        assert_eq!(arrival_pmf_exact(2, &rat(1, 5), 1).unwrap(), rat(8, 25));
        assert!(zeta_n_exact(3, 1, 2).is_err());
    }

    #[test]
    fn agrees_with_floating_point() {
        for q in [2u64, 3, 5] {
            for n in 0..6 {
                for m in 0..6 {
                    for r in 0..=n.min(m) {
                        let e = zeta_nm_exact(r, n, m, q).unwrap().to_f64().unwrap();
                        let f = zeta_nm(r, n, m, q as f64).unwrap();
                        assert!((e - f).abs() < 1e-14);
                    }
                }
            }
        }
        let pe = transition_matrix_exact(3, &rat(1, 3), 3, 3).unwrap();
        let pf = transition_matrix(3, 1.0 / 3.0, 3, 3.0);
        for m in 0..4 {
            let row_sum: BigRational = pe[m].iter().sum();
            assert_eq!(row_sum, BigRational::one());
            for j in 0..4 {
                assert!((pe[m][j].to_f64().unwrap() - pf.get(m, j)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn propagation_conserves_mass() {
        let h = propagate_exact(&[rat(1, 4), rat(0, 1)], &[3, 2], 3, 2).unwrap();
        assert_eq!(h.iter().sum::<BigRational>(), BigRational::one());
        assert!(propagate_exact(&[rat(1, 4)], &[3, 2], 3, 2).is_err());
    }
}
