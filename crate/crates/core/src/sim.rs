//! Monte Carlo simulation of batches travelling down the line network.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{propagate, PathProfile, Policy, RankDistribution};
use crate::error::{validation, Result};
use crate::gf::{Elem, Field, MatrixGF};
use crate::rng::{batch_rng, Substream};

/// Pooling threshold for the chi-square statistic.
const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub profile: PathProfile,
    pub policy: Policy,
    pub batches: u64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(profile: PathProfile, policy: Policy, batches: u64, seed: u64) -> Result<Self> {
        if batches == 0 {
            return validation("need at least one batch");
        }
        if policy.len() != profile.hops() {
            return validation(format!("policy has {} hops, profile has {}", policy.len(), profile.hops()));
        }
        Ok(Self { profile, policy, batches, seed })
    }
}

/// What happened to one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchOutcome {
    /// Rank of the transfer matrix at the sink.
    pub rank: u32,
    /// Number of hops over which at least one packet arrived, counted from the source.
    pub hops_reached: u32,
}

/// Simulates one batch, keeping only a row basis of the transfer matrix.
///
/// `coding` supplies the coefficient matrices and `loss` the erasures; each
/// hop draws the full t_{k-1}×t_k coefficient matrix so the random streams
/// line up with [`simulate_batch_literal`].
pub fn simulate_batch<C: Rng, L: Rng>(
    field: &Field,
    profile: &PathProfile,
    policy: &Policy,
    coding: &mut C,
    loss: &mut L,
) -> BatchOutcome {
    let m = profile.batch_size() as usize;
    // identity rows: H_1 = I_M
    let mut basis: Vec<Vec<Elem>> = (0..m)
        .map(|i| {
            let mut r = vec![0; m];
            r[i] = 1;
            r
        })
        .collect();
    // Φ row index of each basis column (lost packets are dropped from the basis)
    let mut columns: Vec<usize> = (0..m).collect();
    let mut width = m;
    for (k, (&t, &eps)) in policy.as_slice().iter().zip(profile.eps()).enumerate() {
        let t = t as usize;
        let phi = field.random_matrix(width, t, coding);
        let survivors: Vec<usize> = (0..t).filter(|_| loss.gen::<f64>() >= eps).collect();
        if survivors.is_empty() {
            return BatchOutcome { rank: 0, hops_reached: k as u32 };
        }
        let n = survivors.len();
        let selected: Vec<Vec<Elem>> = columns
            .iter()
            .map(|&j| survivors.iter().map(|&c| phi.get(j, c)).collect())
            .collect();
        let mut next: Vec<Vec<Elem>> = basis
            .iter()
            .map(|row| {
                let mut out = vec![0; n];
                for (j, &c) in row.iter().enumerate() {
                    if c != 0 {
                        field.add_scaled(&mut out, &selected[j], c);
                    }
                }
                out
            })
            .collect();
        field.reduce_rows(&mut next, n);
        basis = next;
        columns = survivors;
        width = t;
    }
    BatchOutcome { rank: basis.len() as u32, hops_reached: profile.hops() as u32 }
}

/// Reference version forming H_{k+1} = H_k Φ_k D_k explicitly.
pub fn simulate_batch_literal<C: Rng, L: Rng>(
    field: &Field,
    profile: &PathProfile,
    policy: &Policy,
    coding: &mut C,
    loss: &mut L,
) -> Result<BatchOutcome> {
    let mut h = MatrixGF::identity(profile.batch_size() as usize);
    for (k, (&t, &eps)) in policy.as_slice().iter().zip(profile.eps()).enumerate() {
        let phi = field.random_matrix(h.cols(), t as usize, coding);
        let d = MatrixGF::bernoulli_diag(t as usize, eps, loss)?;
        if (0..t as usize).all(|i| d.get(i, i) == 0) {
            return Ok(BatchOutcome { rank: 0, hops_reached: k as u32 });
        }
        h = field.matmul(&field.matmul(&h, &phi)?, &d)?;
    }
    Ok(BatchOutcome { rank: field.rank(&h)? as u32, hops_reached: profile.hops() as u32 })
}

/// Outcome of batch `batch` in trial `trial` under the given master seed.
pub fn simulate_seeded(field: &Field, profile: &PathProfile, policy: &Policy, seed: u64, trial: u64, batch: u64) -> BatchOutcome {
    let mut coding = batch_rng(seed, trial, batch, Substream::Coding);
    let mut loss = batch_rng(seed, trial, batch, Substream::Loss);
    simulate_batch(field, profile, policy, &mut coding, &mut loss)
}

/// Total variation and Pearson chi-square between two rank distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub tv: f64,
    pub chi2: f64,
    pub dof: usize,
}

/// Compares an empirical distribution over `samples` draws with an analytic
/// one. Cells whose expected count is below 5 are pooled into one.
pub fn compare_distributions(empirical: &RankDistribution, analytic: &RankDistribution, samples: u64) -> Result<Comparison> {
    let (e, a) = (empirical.as_slice(), analytic.as_slice());
    if e.len() != a.len() {
        return validation(format!("distributions over {} and {} ranks", e.len(), a.len()));
    }
    let tv = 0.5 * e.iter().zip(a).map(|(x, y)| (x - y).abs()).sum::<f64>();
    let n = samples as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (&x, &y) in e.iter().zip(a) {
        if y * n < MIN_EXPECTED {
            pooled.0 += x * n;
            pooled.1 += y * n;
        } else {
            cells.push((x * n, y * n));
        }
    }
    if pooled.1 > 0.0 {
        cells.push(pooled);
    }
    let chi2 = cells.iter().filter(|c| c.1 > 0.0).map(|(o, x)| (o - x).powi(2) / x).sum();
    Ok(Comparison { tv, chi2, dof: cells.len().saturating_sub(1) })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimReport {
    pub config: SimConfig,
    /// Sink rank counts indexed 0..=M.
    pub histogram: Vec<u64>,
    pub empirical_h: RankDistribution,
    pub avg_rank: f64,
    /// Batches that reached v_1 (the source), v_2, …, v_{l+1}.
    pub batches_received: Vec<u64>,
    /// Packets sent by v_1, …, v_l.
    pub packets_sent: Vec<u64>,
    pub total_packets: u64,
    pub empirical_efficiency: f64,
    pub tv_distance_to_analytic: f64,
    pub chi2: f64,
    pub dof: usize,
}

/// Simulates `config.batches` independent batches. Batches run in parallel
/// but are aggregated in index order, so the report depends only on the config.
pub fn run_simulation(config: &SimConfig) -> Result<SimReport> {
    let SimConfig { profile, policy, batches, seed } = config;
    if *batches == 0 {
        return validation("need at least one batch");
    }
    let analytic = propagate(profile, policy)?;
    let field = Field::new(profile.field().clone());
    let outcomes: Vec<BatchOutcome> = (0..*batches)
        .into_par_iter()
        .map(|b| simulate_seeded(&field, profile, policy, *seed, 0, b))
        .collect();

    let m = profile.batch_size() as usize;
    let l = profile.hops();
    let mut histogram = vec![0u64; m + 1];
    let mut received = vec![0u64; l + 1];
    for o in &outcomes {
        histogram[o.rank as usize] += 1;
        for r in received.iter_mut().take(o.hops_reached as usize + 1) {
            *r += 1;
        }
    }
    let packets_sent: Vec<u64> = policy.as_slice().iter().zip(&received).map(|(&t, &n)| t as u64 * n).collect();
    let total_packets = packets_sent.iter().sum();
    let n = *batches as f64;
    let empirical_h = RankDistribution::from_propagated(histogram.iter().map(|&c| c as f64 / n).collect());
    let avg_rank = histogram.iter().enumerate().map(|(r, &c)| r as f64 * c as f64).sum::<f64>() / n;
    let cmp = compare_distributions(&empirical_h, &analytic, *batches)?;
    Ok(SimReport {
        config: config.clone(),
        histogram,
        empirical_h,
        avg_rank,
        batches_received: received,
        packets_sent,
        total_packets,
        empirical_efficiency: if total_packets > 0 { avg_rank * n / total_packets as f64 } else { 0.0 },
        tv_distance_to_analytic: cmp.tv,
        chi2: cmp.chi2,
        dof: cmp.dof,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf::FieldSpec;

    fn profile(eps: Vec<f64>, m: u32, q: u32) -> PathProfile {
        PathProfile::new(eps, m, FieldSpec::from_order(q).unwrap()).unwrap()
    }

    #[test]
    fn incremental_matches_literal() {
        for q in [2, 3, 16] {
            let p = profile(vec![0.2, 0.4, 0.1], 5, q);
            let pol = Policy::new(vec![6, 4, 7]).unwrap();
            let field = Field::new(p.field().clone());
            for b in 0..300 {
                let fast = simulate_seeded(&field, &p, &pol, 11, 0, b);
                let mut c = batch_rng(11, 0, b, Substream::Coding);
                let mut l = batch_rng(11, 0, b, Substream::Loss);
                let slow = simulate_batch_literal(&field, &p, &pol, &mut c, &mut l).unwrap();
                assert_eq!(fast, slow);
            }
        }
    }

    #[test]
    fn dead_hop_gives_rank_zero() {
        let p = profile(vec![0.1, 1.0], 4, 16);
        let pol = Policy::uniform(5, 2).unwrap();
        let field = Field::new(p.field().clone());
        for b in 0..50 {
            let o = simulate_seeded(&field, &p, &pol, 3, 0, b);
            assert_eq!(o.rank, 0);
            assert!(o.hops_reached <= 1);
        }
    }

    #[test]
    fn accounting_identities() {
        let cfg = SimConfig::new(profile(vec![0.3, 0.5], 4, 2), Policy::new(vec![3, 2]).unwrap(), 2000, 9).unwrap();
        let rep = run_simulation(&cfg).unwrap();
        assert_eq!(rep.batches_received[0], 2000);
        assert!(rep.batches_received.windows(2).all(|w| w[0] >= w[1]));
        for k in 0..2 {
            assert_eq!(rep.packets_sent[k], cfg.policy.as_slice()[k] as u64 * rep.batches_received[k]);
        }
        assert_eq!(rep.total_packets, rep.packets_sent.iter().sum::<u64>());
        assert_eq!(rep.histogram.iter().sum::<u64>(), 2000);
    }

    #[test]
    fn single_batch_report() {
        let cfg = SimConfig::new(profile(vec![0.0], 3, 256), Policy::new(vec![3]).unwrap(), 1, 5).unwrap();
        let rep = run_simulation(&cfg).unwrap();
        let field = Field::new(cfg.profile.field().clone());
        let o = simulate_seeded(&field, &cfg.profile, &cfg.policy, 5, 0, 0);
        assert_eq!(rep.histogram[o.rank as usize], 1);
        assert_eq!(rep.avg_rank, o.rank as f64);
    }

    #[test]
    fn comparison_extremes() {
        let a = RankDistribution::point_mass(3, 0);
        let b = RankDistribution::point_mass(3, 3);
        assert_eq!(compare_distributions(&a, &a, 100).unwrap().tv, 0.0);
        assert_eq!(compare_distributions(&a, &b, 100).unwrap().tv, 1.0);
        assert!(compare_distributions(&a, &RankDistribution::source(4), 100).is_err());
    }

    #[test]
    fn config_validation() {
        let p = profile(vec![0.1], 2, 2);
        assert!(SimConfig::new(p.clone(), Policy::uniform(2, 1).unwrap(), 0, 1).is_err());
        assert!(SimConfig::new(p, Policy::uniform(2, 2).unwrap(), 5, 1).is_err());
    }
}
