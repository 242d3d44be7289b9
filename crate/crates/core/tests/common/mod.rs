//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use bats_core::gf::{Elem, Field};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Pow, Zero};

/// Canonical reduced row-echelon form of the span of `rows`.
pub fn rref(field: &Field, mut rows: Vec<Vec<Elem>>, cols: usize) -> Vec<Vec<Elem>> {
    field.reduce_rows(&mut rows, cols);
    for i in 0..rows.len() {
        let pc = rows[i].iter().position(|&v| v != 0).expect("basis row is nonzero");
        let pivot = rows[i].clone();
        for row in rows[..i].iter_mut() {
            let c = row[pc];
            if c != 0 {
                field.sub_scaled(row, &pivot, c);
            }
        }
    }
    rows
}

type State = (usize, Vec<Vec<Elem>>);

/// Exact sink rank distribution by enumerating every coefficient matrix and
/// every erasure pattern. Intermediate transfer matrices are identified by
/// their row space, which is all the next hop can see.
pub struct Enumerator {
    field: Field,
    q: u64,
    /// (state, t) → counts over (packets received, next state)
    cache: HashMap<(State, u32), HashMap<(u32, State), u64>>,
}

impl Enumerator {
    pub fn new(q: u32) -> Self {
        Self { field: Field::from_order(q).unwrap(), q: q as u64, cache: HashMap::new() }
    }

    fn transitions(&mut self, state: &State, t: u32) -> &HashMap<(u32, State), u64> {
        let key = (state.clone(), t);
        if !self.cache.contains_key(&key) {
            let (w, basis) = state;
            let t_us = t as usize;
            let cells = w * t_us;
            let q = self.q as usize;
            let mut counts: HashMap<(u32, State), u64> = HashMap::new();
            let mut phi = vec![0 as Elem; cells];
            loop {
                let product: Vec<Vec<Elem>> = basis
                    .iter()
                    .map(|row| {
                        let mut out = vec![0; t_us];
                        for (j, &c) in row.iter().enumerate() {
                            if c != 0 {
                                self.field.add_scaled(&mut out, &phi[j * t_us..(j + 1) * t_us], c);
                            }
                        }
                        out
                    })
                    .collect();
                for mask in 0u32..(1 << t) {
                    let masked: Vec<Vec<Elem>> = product
                        .iter()
                        .map(|r| r.iter().enumerate().map(|(c, &v)| if mask >> c & 1 == 1 { v } else { 0 }).collect())
                        .collect();
                    let next = rref(&self.field, masked, t_us);
                    *counts.entry((mask.count_ones(), (t_us, next))).or_insert(0) += 1;
                }
                // odometer over all q^{w t} matrices
                let mut i = 0;
                while i < cells {
                    phi[i] += 1;
                    if (phi[i] as usize) < q {
                        break;
                    }
                    phi[i] = 0;
                    i += 1;
                }
                if i == cells {
                    break;
                }
            }
            self.cache.insert(key.clone(), counts);
        }
        &self.cache[&key]
    }

    pub fn sink_distribution(&mut self, batch_size: u32, t: &[u32], eps: &[BigRational]) -> Vec<BigRational> {
        let m = batch_size as usize;
        let identity: Vec<Vec<Elem>> = (0..m)
            .map(|i| (0..m).map(|j| if i == j { 1 } else { 0 }).collect())
            .collect();
        let mut states: HashMap<State, BigRational> = HashMap::new();
        states.insert((m, identity), BigRational::one());
        let mut prev_width = m;
        for (&tk, e) in t.iter().zip(eps) {
            let total = BigRational::from_integer(Pow::pow(BigInt::from(self.q), (prev_width * tk as usize) as u32));
            let keep = BigRational::one() - e;
            let mut next: HashMap<State, BigRational> = HashMap::new();
            for (state, p) in states {
                let trans = self.transitions(&state, tk).clone();
                for ((n, to), count) in trans {
                    let w = Pow::pow(&keep, n) * Pow::pow(e, tk - n) * BigRational::from_integer(count.into()) / &total;
                    *next.entry(to).or_insert_with(BigRational::zero) += &p * w;
                }
            }
            states = next;
            prev_width = tk as usize;
        }
        let mut h = vec![BigRational::zero(); m + 1];
        for ((_, rows), p) in states {
            h[rows.len()] += p;
        }
        h
    }
}

/// Binomial tail Σ_{n=r}^{t} C(t,n)(1-ε)^n ε^{t-n} in exact arithmetic, for all r.
pub fn binomial_tails_exact(t: u32, eps: &BigRational) -> Vec<BigRational> {
    let keep = BigRational::one() - eps;
    let mut c = BigInt::one();
    let mut pmf = Vec::with_capacity(t as usize + 1);
    for n in 0..=t {
        if n > 0 {
            c = c * BigInt::from(t - n + 1) / BigInt::from(n);
        }
        pmf.push(BigRational::from_integer(c.clone()) * Pow::pow(&keep, n) * Pow::pow(eps, t - n));
    }
    let mut tails = vec![BigRational::zero(); t as usize + 2];
    for n in (0..=t as usize).rev() {
        tails[n] = &tails[n + 1] + &pmf[n];
    }
    tails
}

/// Spearman rank correlation without ties handling beyond average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum::<f64>().sqrt();
    let sy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum::<f64>().sqrt();
    cov / (sx * sy)
}

/// Published complete table (q = 256, M = 16), rows ε = 0.10..0.20, columns l = 2..20.
pub const PUBLISHED_CLT: [[u32; 19]; 11] = [
    [16, 17, 17, 18, 18, 18, 18, 19, 19, 19, 19, 19, 19, 19, 19, 19, 19, 20, 20],
    [17, 17, 18, 18, 18, 19, 19, 19, 19, 19, 19, 19, 20, 20, 20, 20, 20, 20, 20],
    [17, 17, 18, 18, 19, 19, 19, 19, 19, 19, 20, 20, 20, 20, 20, 20, 20, 20, 20],
    [17, 18, 18, 19, 19, 19, 19, 19, 20, 20, 20, 20, 20, 20, 20, 20, 20, 21, 21],
    [17, 18, 18, 19, 19, 19, 20, 20, 20, 20, 20, 20, 20, 21, 21, 21, 21, 21, 21],
    [17, 18, 19, 19, 19, 20, 20, 20, 20, 20, 21, 21, 21, 21, 21, 21, 21, 21, 21],
    [17, 18, 19, 19, 20, 20, 20, 20, 21, 21, 21, 21, 21, 21, 21, 21, 22, 22, 22],
    [17, 18, 19, 20, 20, 20, 20, 21, 21, 21, 21, 21, 21, 22, 22, 22, 22, 22, 22],
    [18, 19, 19, 20, 20, 21, 21, 21, 21, 21, 22, 22, 22, 22, 22, 22, 22, 22, 22],
    [18, 19, 20, 20, 21, 21, 21, 21, 22, 22, 22, 22, 22, 22, 22, 22, 23, 23, 23],
    [18, 19, 20, 20, 21, 21, 21, 22, 22, 22, 22, 22, 23, 23, 23, 23, 23, 23, 23],
];

/// Published refined table, columns l = 2, 4, 7, 11, 16, 20.
pub const PUBLISHED_RLT: [[u32; 6]; 11] = [
    [16, 17, 18, 19, 19, 20],
    [17, 18, 19, 19, 20, 20],
    [17, 18, 19, 19, 20, 20],
    [17, 18, 19, 20, 20, 21],
    [17, 18, 19, 20, 21, 21],
    [17, 19, 20, 20, 21, 21],
    [17, 19, 20, 21, 21, 22],
    [17, 19, 20, 21, 22, 22],
    [18, 19, 21, 21, 22, 22],
    [18, 20, 21, 22, 22, 23],
    [18, 20, 21, 22, 23, 23],
];
