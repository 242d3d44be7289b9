//! Finite-field arithmetic over GF(p^m) and dense matrices over it.
//!
//! Elements are integers in `[0, q)` in the polynomial basis: digit `i` of the
//! base-`p` expansion is the coefficient of `x^i`. Multiplication goes through
//! exp/log tables built from a primitive element, so every supported field
//! (q ≤ 2^16) costs two table lookups per product.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, validation, Error, Result};

/// A field element; every supported order fits in 16 bits.
pub type Elem = u16;

/// Largest supported field order.
pub const MAX_ORDER: u32 = 1 << 16;

/// A prime-power field GF(p^m) together with its reduction polynomial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    p: u32,
    m: u32,
    /// Coefficients, lowest degree first; monic of degree `m`.
    reduction: Vec<u32>,
}

impl FieldSpec {
    /// Builds a field description, checking primality and irreducibility.
    pub fn new(p: u32, m: u32, reduction: Vec<u32>) -> Result<Self> {
        if !is_prime(p) {
            return validation(format!("characteristic {p} is not prime"));
        }
        if m == 0 {
            return validation("extension degree must be at least 1");
        }
        let q = checked_order(p, m)?;
        if m == 1 {
            // x is the canonical reduction for a prime field; any argument is ignored.
            return Ok(Self { p, m, reduction: vec![0, 1] });
        }
        if reduction.len() != m as usize + 1 || reduction[m as usize] != 1 {
            return validation(format!("reduction polynomial must be monic of degree {m}"));
        }
        if reduction.iter().any(|&c| c >= p) {
            return validation("reduction polynomial coefficients must be < p");
        }
        if !is_irreducible(&reduction, p) {
            return validation(format!("reduction polynomial is reducible over GF({p}) (q = {q})"));
        }
        Ok(Self { p, m, reduction })
    }

    /// GF(p) for a prime `p`.
    pub fn prime(p: u32) -> Result<Self> {
        Self::new(p, 1, vec![0, 1])
    }

    /// Field of order `q` with the default reduction polynomial.
    ///
    /// GF(16) uses x^4+x+1 and GF(256) uses x^8+x^4+x^3+x+1; other extension
    /// fields use the lexicographically smallest monic irreducible polynomial.
    pub fn from_order(q: u32) -> Result<Self> {
        let (p, m) = match prime_power(q) {
            Some(pm) => pm,
            None => return validation(format!("{q} is not a prime power ≥ 2")),
        };
        checked_order(p, m)?;
        match (p, m) {
            (_, 1) => Self::prime(p),
            (2, 4) => Self::new(2, 4, vec![1, 1, 0, 0, 1]),
            (2, 8) => Self::new(2, 8, vec![1, 1, 0, 1, 1, 0, 0, 0, 1]),
            _ => {
                let poly = first_irreducible(p, m);
                Self::new(p, m, poly)
            }
        }
    }

    pub fn characteristic(&self) -> u32 {
        self.p
    }

    pub fn degree(&self) -> u32 {
        self.m
    }

    pub fn order(&self) -> u32 {
        self.p.pow(self.m)
    }

    pub fn reduction_polynomial(&self) -> &[u32] {
        &self.reduction
    }
}

fn checked_order(p: u32, m: u32) -> Result<u32> {
    let mut q: u64 = 1;
    for _ in 0..m {
        q *= p as u64;
        if q > MAX_ORDER as u64 {
            return validation(format!("field order {p}^{m} exceeds {MAX_ORDER}"));
        }
    }
    Ok(q as u32)
}

fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u32;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

fn prime_power(q: u32) -> Option<(u32, u32)> {
    if q < 2 {
        return None;
    }
    let mut p = 2;
    while !q.is_multiple_of(p) {
        p += 1;
    }
    let (mut rest, mut m) = (q, 0);
    while rest % p == 0 {
        rest /= p;
        m += 1;
    }
    (rest == 1).then_some((p, m))
}

fn poly_degree(a: &[u32]) -> Option<usize> {
    a.iter().rposition(|&c| c != 0)
}

fn inv_mod(a: u32, p: u32) -> u32 {
    // p is prime and small: Fermat.
    let mut result = 1u64;
    let (mut base, mut e) = (a as u64 % p as u64, p - 2);
    while e > 0 {
        if e & 1 == 1 {
            result = result * base % p as u64;
        }
        base = base * base % p as u64;
        e >>= 1;
    }
    result as u32
}

/// Remainder of `a` modulo `b` over GF(p).
fn poly_rem(a: &[u32], b: &[u32], p: u32) -> Vec<u32> {
    let mut r = a.to_vec();
    let db = poly_degree(b).expect("divisor must be nonzero");
    let lead_inv = inv_mod(b[db], p);
    while let Some(dr) = poly_degree(&r) {
        if dr < db {
            break;
        }
        let factor = r[dr] as u64 * lead_inv as u64 % p as u64;
        let shift = dr - db;
        for (i, &bc) in b.iter().enumerate().take(db + 1) {
            let sub = factor * bc as u64 % p as u64;
            r[i + shift] = ((r[i + shift] as u64 + p as u64 - sub) % p as u64) as u32;
        }
    }
    r
}

/// Trial division by every monic polynomial of degree 1..=m/2.
fn is_irreducible(f: &[u32], p: u32) -> bool {
    let m = match poly_degree(f) {
        Some(d) => d,
        None => return false,
    };
    for d in 1..=m / 2 {
        let count = (p as u64).pow(d as u32);
        for idx in 0..count {
            let mut g = vec![0u32; d + 1];
            let mut v = idx;
            for c in g.iter_mut().take(d) {
                *c = (v % p as u64) as u32;
                v /= p as u64;
            }
            g[d] = 1;
            if poly_degree(&poly_rem(f, &g, p)).is_none() {
                return false;
            }
        }
    }
    true
}

fn first_irreducible(p: u32, m: u32) -> Vec<u32> {
    let m = m as usize;
    let count = (p as u64).pow(m as u32);
    for idx in 0..count {
        let mut f = vec![0u32; m + 1];
        let mut v = idx;
        for c in f.iter_mut().take(m) {
            *c = (v % p as u64) as u32;
            v /= p as u64;
        }
        f[m] = 1;
        if f[0] != 0 && is_irreducible(&f, p) {
            return f;
        }
    }
    unreachable!("irreducible polynomials exist for every degree")
}

/// Arithmetic context for one field: add/sub/mul/inv plus matrix routines.
#[derive(Debug, Clone)]
pub struct Field {
    spec: FieldSpec,
    q: u32,
    /// exp[i] = g^i for i in 0..2(q-1), doubled to skip a modular reduction.
    exp: Vec<Elem>,
    log: Vec<u32>,
}

impl Field {
    pub fn new(spec: FieldSpec) -> Self {
        let q = spec.order();
        let mut field = Self { spec, q, exp: Vec::new(), log: Vec::new() };
        field.build_tables();
        field
    }

    pub fn from_order(q: u32) -> Result<Self> {
        Ok(Self::new(FieldSpec::from_order(q)?))
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    pub fn order(&self) -> u32 {
        self.q
    }

    /// Multiplication straight from the polynomial definition.
    fn poly_mul(&self, a: u32, b: u32) -> u32 {
        let (p, m) = (self.spec.p, self.spec.m as usize);
        if m == 1 {
            return ((a as u64 * b as u64) % p as u64) as u32;
        }
        let da = digits(a, p, m);
        let db = digits(b, p, m);
        let mut prod = vec![0u32; 2 * m - 1];
        for (i, &x) in da.iter().enumerate() {
            for (j, &y) in db.iter().enumerate() {
                prod[i + j] = ((prod[i + j] as u64 + x as u64 * y as u64) % p as u64) as u32;
            }
        }
        let r = poly_rem(&prod, &self.spec.reduction, p);
        undigits(&r[..m.min(r.len())], p)
    }

    fn build_tables(&mut self) {
        let q = self.q;
        let n = (q - 1) as usize;
        'candidates: for g in 1..q {
            let mut exp = vec![0 as Elem; 2 * n.max(1)];
            let mut x = 1u32;
            for (i, slot) in exp.iter_mut().take(n).enumerate() {
                if i > 0 && x == 1 {
                    continue 'candidates;
                }
                *slot = x as Elem;
                x = self.poly_mul(x, g);
            }
            if x != 1 {
                continue;
            }
            for i in 0..n {
                exp[n + i] = exp[i];
            }
            let mut log = vec![0u32; q as usize];
            for (i, &e) in exp.iter().take(n).enumerate() {
                log[e as usize] = i as u32;
            }
            self.exp = exp;
            self.log = log;
            return;
        }
        unreachable!("the multiplicative group of a finite field is cyclic")
    }

    #[inline]
    pub fn add(&self, a: Elem, b: Elem) -> Elem {
        let p = self.spec.p;
        if p == 2 {
            a ^ b
        } else if self.spec.m == 1 {
            ((a as u32 + b as u32) % p) as Elem
        } else {
            self.digitwise(a, b, |x, y| (x + y) % p)
        }
    }

    #[inline]
    pub fn sub(&self, a: Elem, b: Elem) -> Elem {
        let p = self.spec.p;
        if p == 2 {
            a ^ b
        } else if self.spec.m == 1 {
            ((a as u32 + p - b as u32) % p) as Elem
        } else {
            self.digitwise(a, b, |x, y| (x + p - y) % p)
        }
    }

    pub fn neg(&self, a: Elem) -> Elem {
        self.sub(0, a)
    }

    #[inline]
    pub fn mul(&self, a: Elem, b: Elem) -> Elem {
        if a == 0 || b == 0 {
            0
        } else {
            self.exp[(self.log[a as usize] + self.log[b as usize]) as usize]
        }
    }

    pub fn inv(&self, a: Elem) -> Result<Elem> {
        if a == 0 {
            return domain("zero has no multiplicative inverse");
        }
        if a as u32 >= self.q {
            return validation(format!("element {a} is not in GF({})", self.q));
        }
        let n = self.q - 1;
        Ok(self.exp[((n - self.log[a as usize]) % n) as usize])
    }

    pub fn div(&self, a: Elem, b: Elem) -> Result<Elem> {
        Ok(self.mul(a, self.inv(b)?))
    }

    fn digitwise(&self, a: Elem, b: Elem, op: impl Fn(u32, u32) -> u32) -> Elem {
        let p = self.spec.p;
        let (mut a, mut b) = (a as u32, b as u32);
        let (mut out, mut place) = (0u32, 1u32);
        for _ in 0..self.spec.m {
            out += op(a % p, b % p) * place;
            a /= p;
            b /= p;
            place *= p;
        }
        out as Elem
    }

    /// `dst -= c * src`, element-wise.
    #[inline]
    pub fn sub_scaled(&self, dst: &mut [Elem], src: &[Elem], c: Elem) {
        if c == 0 {
            return;
        }
        let lc = self.log[c as usize];
        if self.spec.p == 2 {
            for (d, &s) in dst.iter_mut().zip(src) {
                if s != 0 {
                    *d ^= self.exp[(lc + self.log[s as usize]) as usize];
                }
            }
        } else {
            for (d, &s) in dst.iter_mut().zip(src) {
                if s != 0 {
                    *d = self.sub(*d, self.exp[(lc + self.log[s as usize]) as usize]);
                }
            }
        }
    }

    /// `dst += c * src`, element-wise.
    #[inline]
    pub fn add_scaled(&self, dst: &mut [Elem], src: &[Elem], c: Elem) {
        if self.spec.p == 2 {
            self.sub_scaled(dst, src, c);
        } else {
            self.sub_scaled(dst, src, self.neg(c));
        }
    }

    pub fn validate(&self, a: &MatrixGF) -> Result<()> {
        match a.data.iter().find(|&&e| e as u32 >= self.q) {
            Some(e) => validation(format!("entry {e} is not an element of GF({})", self.q)),
            None => Ok(()),
        }
    }

    /// Rank over GF(q). GF(2) takes the bit-packed path.
    pub fn rank(&self, a: &MatrixGF) -> Result<usize> {
        self.validate(a)?;
        if self.q == 2 {
            Ok(rank_gf2_packed(a))
        } else {
            Ok(self.rank_generic(a))
        }
    }

    /// Plain Gaussian elimination, valid for every field.
    pub fn rank_generic(&self, a: &MatrixGF) -> usize {
        let mut rows: Vec<Vec<Elem>> = (0..a.rows).map(|i| a.row(i).to_vec()).collect();
        self.reduce_rows(&mut rows, a.cols)
    }

    /// Reduces `rows` in place to a row-echelon basis of their span and
    /// returns its dimension. Rows beyond the rank are dropped.
    pub fn reduce_rows(&self, rows: &mut Vec<Vec<Elem>>, cols: usize) -> usize {
        let mut rank = 0;
        for col in 0..cols {
            if rank == rows.len() {
                break;
            }
            let Some(pivot) = (rank..rows.len()).find(|&r| rows[r][col] != 0) else {
                continue;
            };
            rows.swap(rank, pivot);
            let inv = self.inv(rows[rank][col]).expect("pivot is nonzero");
            if inv != 1 {
                for v in rows[rank].iter_mut() {
                    *v = self.mul(*v, inv);
                }
            }
            let (head, tail) = rows.split_at_mut(rank + 1);
            let pivot_row = &head[rank];
            for row in tail.iter_mut() {
                let c = row[col];
                if c != 0 {
                    self.sub_scaled(&mut row[col..], &pivot_row[col..], c);
                }
            }
            rank += 1;
        }
        rows.truncate(rank);
        rank
    }

    /// Totally random matrix: i.i.d. uniform entries.
    pub fn random_matrix<R: Rng + ?Sized>(&self, rows: usize, cols: usize, rng: &mut R) -> MatrixGF {
        let q = self.q;
        let data = (0..rows * cols).map(|_| rng.gen_range(0..q) as Elem).collect();
        MatrixGF { rows, cols, data }
    }

    pub fn matmul(&self, a: &MatrixGF, b: &MatrixGF) -> Result<MatrixGF> {
        if a.cols != b.rows {
            return validation(format!(
                "cannot multiply {}x{} by {}x{}",
                a.rows, a.cols, b.rows, b.cols
            ));
        }
        self.validate(a)?;
        self.validate(b)?;
        let mut out = MatrixGF::zeros(a.rows, b.cols);
        for i in 0..a.rows {
            let (lo, hi) = (i * b.cols, (i + 1) * b.cols);
            for k in 0..a.cols {
                let c = a.get(i, k);
                if c != 0 {
                    self.add_scaled(&mut out.data[lo..hi], b.row(k), c);
                }
            }
        }
        Ok(out)
    }
}

fn digits(mut a: u32, p: u32, m: usize) -> Vec<u32> {
    let mut d = vec![0; m];
    for slot in d.iter_mut() {
        *slot = a % p;
        a /= p;
    }
    d
}

fn undigits(d: &[u32], p: u32) -> u32 {
    d.iter().rev().fold(0, |acc, &c| acc * p + c)
}

/// Rank over GF(2) with rows packed into 64-bit words.
pub fn rank_gf2_packed(a: &MatrixGF) -> usize {
    let words = a.cols.div_ceil(64);
    let mut rows: Vec<Vec<u64>> = (0..a.rows)
        .map(|i| {
            let mut w = vec![0u64; words];
            for (j, &e) in a.row(i).iter().enumerate() {
                if e & 1 == 1 {
                    w[j / 64] |= 1 << (j % 64);
                }
            }
            w
        })
        .collect();
    let mut rank = 0;
    for col in 0..a.cols {
        if rank == rows.len() {
            break;
        }
        let (w, bit) = (col / 64, 1u64 << (col % 64));
        let Some(pivot) = (rank..rows.len()).find(|&r| rows[r][w] & bit != 0) else {
            continue;
        };
        rows.swap(rank, pivot);
        let (head, tail) = rows.split_at_mut(rank + 1);
        for row in tail.iter_mut() {
            if row[w] & bit != 0 {
                for (x, y) in row.iter_mut().zip(&head[rank]).skip(w) {
                    *x ^= *y;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Dense row-major matrix of field elements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixGF {
    rows: usize,
    cols: usize,
    data: Vec<Elem>,
}

impl MatrixGF {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Elem>) -> Result<Self> {
        if data.len() != rows * cols {
            return validation(format!("{} entries cannot fill a {rows}x{cols} matrix", data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<Elem>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return validation("ragged rows");
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    /// t×t diagonal matrix whose diagonal entries are 1 w.p. 1-ε, else 0.
    pub fn bernoulli_diag<R: Rng + ?Sized>(t: usize, eps: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return validation(format!("loss rate {eps} outside [0, 1]"));
        }
        let mut m = Self::zeros(t, t);
        for i in 0..t {
            if rng.gen::<f64>() >= eps {
                m.data[i * t + i] = 1;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Elem {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Elem) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[Elem] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn entries(&self) -> &[Elem] {
        &self.data
    }

    /// Keeps only the listed columns, in order.
    pub fn select_columns(&self, keep: &[usize]) -> Result<Self> {
        if let Some(&bad) = keep.iter().find(|&&c| c >= self.cols) {
            return Err(Error::Validation(format!("column {bad} out of range")));
        }
        let mut data = Vec::with_capacity(self.rows * keep.len());
        for i in 0..self.rows {
            let row = self.row(i);
            data.extend(keep.iter().map(|&c| row[c]));
        }
        Ok(Self { rows: self.rows, cols: keep.len(), data })
    }
}
