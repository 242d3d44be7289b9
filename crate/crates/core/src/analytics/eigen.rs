//! Shared eigenbasis of the hop transition matrices.
//!
//! Every `P_k` factors as `Q Λ_k Q⁻¹` with `Q[i][j] = ζ_j^i` (lower
//! triangular, first column all ones) and `Λ_k` holding the diagonal of
//! `P_k`. Since `Q` depends only on (M, q), the sink distribution is
//! `h_{l+1}ᵀ = α ∘ Π_k λ_k · Q⁻¹` with `α = h_1ᵀQ`, and the average rank is
//! `Σ_r α_r β_r Π_k λ_{k,r}` with `β = Q⁻¹e`. `Q⁻¹` is never formed
//! explicitly by the propagation code; only triangular solves are used.

use std::collections::HashMap;

use crate::analytics::zeta::{arrival_pmf_vec, ZetaTable};
use crate::analytics::{transmission_cost, PathProfile, Policy, RankDistribution, TransitionMatrix};
use crate::error::{validation, Error, Result};

/// The (M, q)-dependent half of the decomposition.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    size: usize,
    /// Row-major lower-triangular Q.
    q_mat: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl EigenBasis {
    pub fn new(batch_size: u32, q: f64) -> Result<Self> {
        let size = batch_size as usize + 1;
        let table = ZetaTable::new(q, batch_size);
        let mut q_mat = vec![0.0; size * size];
        for i in 0..size {
            for j in 0..=i {
                q_mat[i * size + j] = table.zeta_n(j as u32, i as u32);
            }
        }
        for i in 0..size {
            let d = q_mat[i * size + i];
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Domain(format!("eigenbasis diagonal entry {i} is {d}")));
            }
        }
        let alpha = q_mat[(size - 1) * size..].to_vec();
        let mut basis = Self { size, q_mat, alpha, beta: Vec::new() };
        let e: Vec<f64> = (0..size).map(|r| r as f64).collect();
        basis.beta = basis.solve(&e);
        Ok(basis)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn q_entry(&self, i: usize, j: usize) -> f64 {
        self.q_mat[i * self.size + j]
    }

    /// α = h_1ᵀQ, i.e. the last row of Q.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// β = Q⁻¹e with e = (0, 1, …, M).
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Solves Q x = b by forward substitution.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.size;
        let mut x = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            for (j, xj) in x.iter().enumerate().take(i) {
                s -= self.q_entry(i, j) * xj;
            }
            x[i] = s / self.q_entry(i, i);
        }
        x
    }

    /// Solves xᵀ Q = bᵀ (i.e. Qᵀx = b) by back substitution.
    pub fn solve_transposed(&self, b: &[f64]) -> Vec<f64> {
        let n = self.size;
        let mut x = vec![0.0; n];
        for j in (0..n).rev() {
            let mut s = b[j];
            for (i, xi) in x.iter().enumerate().skip(j + 1) {
                s -= self.q_entry(i, j) * xi;
            }
            x[j] = s / self.q_entry(j, j);
        }
        x
    }

    /// Q⁻¹ column by column from triangular solves, row-major.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.size;
        let mut inv = vec![0.0; n * n];
        let mut unit = vec![0.0; n];
        for c in 0..n {
            unit.iter_mut().for_each(|u| *u = 0.0);
            unit[c] = 1.0;
            for (r, v) in self.solve(&unit).into_iter().enumerate() {
                inv[r * n + c] = v;
            }
        }
        inv
    }

    /// Sink distribution for the elementwise eigenvalue product `lambda`.
    pub fn distribution(&self, lambda: &[f64]) -> Vec<f64> {
        let w: Vec<f64> = self.alpha.iter().zip(lambda).map(|(a, l)| a * l).collect();
        self.solve_transposed(&w)
    }

    /// Σ_{r≥1} α_r β_r λ_r for the eigenvalue product `lambda`.
    pub fn average_rank(&self, lambda: &[f64]) -> f64 {
        (1..self.size).map(|r| self.alpha[r] * self.beta[r] * lambda[r]).sum()
    }
}

/// (α, β) for batch size M over GF(q).
pub fn alpha_beta(batch_size: u32, q: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let b = EigenBasis::new(batch_size, q)?;
    Ok((b.alpha, b.beta))
}

/// Diagonal of P for one hop: λ_0 = 1, λ_j = Σ_{n=j}^{t} f(t,n) ζ_j^{j,n}.
pub fn eigenvalues(t: u32, eps: f64, batch_size: u32, q: f64) -> Vec<f64> {
    let table = ZetaTable::new(q, batch_size.max(t));
    eigenvalues_with(&table, t, eps, batch_size)
}

fn eigenvalues_with(table: &ZetaTable, t: u32, eps: f64, batch_size: u32) -> Vec<f64> {
    let f = arrival_pmf_vec(t, eps);
    let mut lambda = vec![0.0; batch_size as usize + 1];
    lambda[0] = 1.0;
    for j in 1..=batch_size {
        lambda[j as usize] = (j..=t).map(|n| f[n as usize] * table.zeta_nm(j, j, n)).sum();
    }
    lambda
}

/// Q, Λ_k for one hop of a profile.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub basis: EigenBasis,
    pub lambda: Vec<f64>,
}

impl EigenSystem {
    /// Q Λ Q⁻¹.
    pub fn reconstruct(&self) -> TransitionMatrix {
        let n = self.basis.size;
        let inv = self.basis.inverse();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                // Q, Λ, Q⁻¹ are all lower triangular: only j ≤ k ≤ i contribute.
                data[i * n + j] = (j..=i)
                    .map(|k| self.basis.q_entry(i, k) * self.lambda[k] * inv[k * n + j])
                    .sum();
            }
        }
        TransitionMatrix::from_dense(n, data)
    }
}

/// Eigendecomposition of hop `k` (1-based) of the profile under the policy.
pub fn eigensystem(profile: &PathProfile, policy: &Policy, k: usize) -> Result<EigenSystem> {
    profile.check_policy(policy)?;
    if k == 0 || k > profile.hops() {
        return validation(format!("hop {k} outside 1..={}", profile.hops()));
    }
    let basis = EigenBasis::new(profile.batch_size(), profile.q())?;
    let lambda = eigenvalues(policy.as_slice()[k - 1], profile.eps()[k - 1], profile.batch_size(), profile.q());
    Ok(EigenSystem { basis, lambda })
}

/// Sink distribution through the eigen route.
pub fn propagate_eigen(profile: &PathProfile, policy: &Policy) -> Result<RankDistribution> {
    profile.check_policy(policy)?;
    let mut eval = Evaluator::new(profile.batch_size(), profile.q())?;
    let lambda = eval.lambda_product(profile.eps(), policy.as_slice());
    Ok(RankDistribution::from_propagated(eval.basis.distribution(&lambda)))
}

/// Objective evaluator for the integer solvers. Caches per-hop eigenvalue
/// vectors keyed by (t, ε) since box searches revisit the same hops.
#[derive(Debug, Clone)]
pub struct Evaluator {
    batch_size: u32,
    basis: EigenBasis,
    zeta: ZetaTable,
    q: f64,
    cache: HashMap<(u32, u64), Vec<f64>>,
    evaluations: u64,
}

impl Evaluator {
    pub fn new(batch_size: u32, q: f64) -> Result<Self> {
        Ok(Self {
            batch_size,
            basis: EigenBasis::new(batch_size, q)?,
            zeta: ZetaTable::new(q, 4 * batch_size.max(16)),
            q,
            cache: HashMap::new(),
            evaluations: 0,
        })
    }

    pub fn for_profile(profile: &PathProfile) -> Result<Self> {
        Self::new(profile.batch_size(), profile.q())
    }

    pub fn basis(&self) -> &EigenBasis {
        &self.basis
    }

    pub fn batch_size(&self) -> u32 {
        self.batch_size
    }

    /// Objective evaluations performed so far.
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    /// λ(t, ε), cached.
    pub fn lambda(&mut self, t: u32, eps: f64) -> &[f64] {
        if t > self.zeta.n_max() {
            self.zeta = ZetaTable::new(self.q, t.max(2 * self.zeta.n_max()));
        }
        let key = (t, eps.to_bits());
        if !self.cache.contains_key(&key) {
            let lambda = eigenvalues_with(&self.zeta, t, eps, self.batch_size);
            self.cache.insert(key, lambda);
        }
        &self.cache[&key]
    }

    /// Elementwise Π_k λ(t_k, ε_k).
    pub fn lambda_product(&mut self, eps: &[f64], t: &[u32]) -> Vec<f64> {
        let mut prod = vec![1.0; self.batch_size as usize + 1];
        for (&e, &tk) in eps.iter().zip(t) {
            for (p, l) in prod.iter_mut().zip(self.lambda(tk, e)) {
                *p *= l;
            }
        }
        prod
    }

    /// ħ_{l+1} = Σ_r α_r β_r Π_k λ_{k,r}.
    pub fn average_rank(&mut self, eps: &[f64], t: &[u32]) -> f64 {
        self.evaluations += 1;
        let prod = self.lambda_product(eps, t);
        self.basis.average_rank(&prod)
    }

    /// Exact transmission efficiency η.
    pub fn efficiency(&mut self, eps: &[f64], t: &[u32]) -> f64 {
        let hbar = self.average_rank(eps, t);
        let real: Vec<f64> = t.iter().map(|&x| x as f64).collect();
        let cost = transmission_cost(eps, &real);
        if cost > 0.0 {
            hbar / cost
        } else {
            0.0
        }
    }

    /// Objective with every delivery factor set to 1: ħ_{l+1} / Σ t_k.
    pub fn pa_objective(&mut self, eps: &[f64], t: &[u32]) -> f64 {
        let hbar = self.average_rank(eps, t);
        hbar / t.iter().map(|&x| x as f64).sum::<f64>()
    }

    /// Single-variable objective: Σ_r α_r β_r λ_r(t)^l / (l t).
    pub fn ps_objective(&mut self, eps: f64, hops: u32, t: u32) -> f64 {
        self.evaluations += 1;
        let lambda = self.lambda(t, eps).to_vec();
        let num: f64 = (1..lambda.len())
            .map(|r| self.basis.alpha[r] * self.basis.beta[r] * lambda[r].powi(hops as i32))
            .sum();
        num / (hops as f64 * t as f64)
    }
}
