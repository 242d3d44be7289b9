//! Exact rank-distribution propagation along a lossy line network.
//!
//! A batch leaves the source with a full-rank M×M transfer matrix. Each hop k
//! recodes it into `t_k` packets, of which a Binomial(t_k, 1-ε_k) number
//! survive, so the rank distribution evolves as a lower-triangular Markov
//! chain `h_{k+1} = h_k P_k`. All `P_k` share one eigenbasis `Q` that depends
//! only on (M, q); see [`eigen`].

pub mod eigen;
pub mod exact;
pub mod zeta;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::gf::FieldSpec;

pub use eigen::{alpha_beta, eigensystem, eigenvalues, propagate_eigen, EigenBasis, EigenSystem, Evaluator};
pub use zeta::{arrival_pmf, arrival_pmf_vec, zeta_n, zeta_nm, ZetaTable};

/// A line network v_1 → … → v_{l+1}: one loss rate per hop, plus the batch
/// size and coding field shared by every node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathProfile {
    eps: Vec<f64>,
    batch_size: u32,
    field: FieldSpec,
}

impl PathProfile {
    pub fn new(eps: Vec<f64>, batch_size: u32, field: FieldSpec) -> Result<Self> {
        if eps.is_empty() {
            return validation("a path needs at least one hop");
        }
        if let Some(e) = eps.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return validation(format!("loss rate {e} outside [0, 1]"));
        }
        if batch_size == 0 {
            return validation("batch size must be at least 1");
        }
        Ok(Self { eps, batch_size, field })
    }

    pub fn uniform(eps: f64, hops: usize, batch_size: u32, field: FieldSpec) -> Result<Self> {
        Self::new(vec![eps; hops], batch_size, field)
    }

    pub fn hops(&self) -> usize {
        self.eps.len()
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn batch_size(&self) -> u32 {
        self.batch_size
    }

    pub fn field(&self) -> &FieldSpec {
        &self.field
    }

    /// Field order as a real, the form every formula consumes.
    pub fn q(&self) -> f64 {
        self.field.order() as f64
    }

    fn check_policy(&self, policy: &Policy) -> Result<()> {
        if policy.len() != self.hops() {
            return validation(format!(
                "policy has {} entries for a {}-hop path",
                policy.len(),
                self.hops()
            ));
        }
        Ok(())
    }
}

/// Number of coded packets each node emits per batch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct Policy(Vec<u32>);

impl Policy {
    pub fn new(t: Vec<u32>) -> Result<Self> {
        if t.is_empty() {
            return validation("empty policy");
        }
        if t.contains(&0) {
            return validation("every node must send at least one packet per batch");
        }
        Ok(Self(t))
    }

    pub fn uniform(t: u32, hops: usize) -> Result<Self> {
        Self::new(vec![t; hops])
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Σ t_k, packets per batch if nothing is dropped upstream.
    pub fn total(&self) -> u64 {
        self.0.iter().map(|&t| t as u64).sum()
    }
}

impl TryFrom<Vec<u32>> for Policy {
    type Error = crate::error::Error;
    fn try_from(v: Vec<u32>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Policy> for Vec<u32> {
    fn from(p: Policy) -> Self {
        p.0
    }
}

/// Probability vector over transfer-matrix ranks 0..=M.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDistribution(Vec<f64>);

impl RankDistribution {
    const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(h: Vec<f64>) -> Result<Self> {
        if h.is_empty() {
            return validation("empty rank distribution");
        }
        if h.iter().any(|&p| p.is_nan() || p < 0.0) {
            return validation("negative or NaN probability");
        }
        let s: f64 = h.iter().sum();
        if (s - 1.0).abs() > Self::SUM_TOLERANCE {
            return validation(format!("probabilities sum to {s}"));
        }
        Ok(Self(h))
    }

    /// h_1: the source holds every batch at full rank.
    pub fn source(batch_size: u32) -> Self {
        Self::point_mass(batch_size, batch_size)
    }

    pub fn point_mass(batch_size: u32, rank: u32) -> Self {
        let mut h = vec![0.0; batch_size as usize + 1];
        h[rank as usize] = 1.0;
        Self(h)
    }

    /// Wraps a vector produced by propagation; clamps roundoff negatives.
    pub(crate) fn from_propagated(mut h: Vec<f64>) -> Self {
        for p in h.iter_mut() {
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        Self(h)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn batch_size(&self) -> u32 {
        self.0.len() as u32 - 1
    }

    /// Σ r·h_r.
    pub fn average_rank(&self) -> f64 {
        self.0.iter().enumerate().map(|(r, &p)| r as f64 * p).sum()
    }

    /// Pr{rank ≥ r}.
    pub fn tail(&self, r: usize) -> f64 {
        self.0.iter().skip(r).sum()
    }

    pub fn total_variation(&self, other: &Self) -> f64 {
        0.5 * self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

/// Σ r·h_r for a rank distribution.
pub fn average_rank(h: &RankDistribution) -> f64 {
    h.average_rank()
}

/// One-hop rank transition law; entry (m, j) = Pr{rank j out | rank m in}.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    size: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub(crate) fn from_dense(size: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), size * size);
        Self { size, data }
    }

    /// Number of ranks, M + 1.
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, m: usize, j: usize) -> f64 {
        self.data[m * self.size + j]
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.data[m * self.size..(m + 1) * self.size]
    }

    /// h ↦ hᵀP.
    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size];
        for (m, &hm) in h.iter().enumerate() {
            if hm == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(self.row(m)) {
                *o += hm * p;
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Transition matrix of one hop sending `t` packets with loss rate `eps`.
pub fn transition_matrix(t: u32, eps: f64, batch_size: u32, q: f64) -> TransitionMatrix {
    let size = batch_size as usize + 1;
    let table = ZetaTable::new(q, batch_size.max(t));
    let f = arrival_pmf_vec(t, eps);
    let mut data = vec![0.0; size * size];
    for m in 0..=batch_size {
        for j in 0..=m {
            let mut s = 0.0;
            for n in j..=t {
                s += f[n as usize] * table.zeta_nm(j, m, n);
            }
            data[m as usize * size + j as usize] = s.clamp(0.0, 1.0);
        }
    }
    TransitionMatrix { size, data }
}

/// Rank distribution at the sink, hop by hop through the transition matrices.
pub fn propagate(profile: &PathProfile, policy: &Policy) -> Result<RankDistribution> {
    Ok(propagate_all(profile, policy)?.pop().expect("at least one hop"))
}

/// h_2, …, h_{l+1}: the distribution after every hop.
pub fn propagate_all(profile: &PathProfile, policy: &Policy) -> Result<Vec<RankDistribution>> {
    profile.check_policy(policy)?;
    let m = profile.batch_size();
    let mut h = RankDistribution::source(m).0;
    let mut out = Vec::with_capacity(profile.hops());
    for (&t, &eps) in policy.as_slice().iter().zip(profile.eps()) {
        h = transition_matrix(t, eps, m, profile.q()).apply(&h);
        out.push(RankDistribution::from_propagated(h.clone()));
    }
    Ok(out)
}

/// Expected packets per source batch, Σ_k Π_{i≤k} (1 - ε_i^{t_i}) t_k.
/// Accepts real-valued t for the relaxed problem.
pub fn transmission_cost(eps: &[f64], t: &[f64]) -> f64 {
    let mut delivered = 1.0;
    let mut cost = 0.0;
    for (&e, &tk) in eps.iter().zip(t) {
        delivered *= 1.0 - e.powf(tk);
        cost += delivered * tk;
    }
    cost
}

fn policy_as_real(policy: &Policy) -> Vec<f64> {
    policy.as_slice().iter().map(|&t| t as f64).collect()
}

/// η = ħ_{l+1} / expected packets per batch. Reported as 0 when nothing can
/// leave the source (ε_1 = 1).
pub fn efficiency(profile: &PathProfile, policy: &Policy) -> Result<f64> {
    let hbar = propagate(profile, policy)?.average_rank();
    let cost = transmission_cost(profile.eps(), &policy_as_real(policy));
    Ok(if cost > 0.0 { hbar / cost } else { 0.0 })
}

/// Expected transmission totals for `n1` source batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transmissions {
    /// n_1 Σ_k Π_{i≤k}(1-ε_i^{t_i}) t_k.
    pub total: f64,
    /// n_k = n_1 Π_{i<k}(1-ε_i^{t_i}) for k = 1..=l+1.
    pub batches: Vec<f64>,
}

pub fn total_transmissions(n1: f64, profile: &PathProfile, policy: &Policy) -> Result<Transmissions> {
    profile.check_policy(policy)?;
    if n1.is_nan() || n1 < 1.0 {
        return validation(format!("batch count {n1} < 1"));
    }
    let mut batches = vec![n1];
    for (&e, &t) in profile.eps().iter().zip(policy.as_slice()) {
        let last = *batches.last().unwrap();
        batches.push(last * (1.0 - e.powi(t as i32)));
    }
    let total = n1 * transmission_cost(profile.eps(), &policy_as_real(policy));
    Ok(Transmissions { total, batches })
}
