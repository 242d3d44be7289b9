//! Random-loss experiments comparing the integer policies with the relaxed bound.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::eigen::Evaluator;
use crate::analytics::{PathProfile, Policy};
use crate::bound::solve_upper_bound;
use crate::error::Result;
use crate::gf::FieldSpec;
use crate::optimize::{solve_pa, LookupTable};
use crate::rng::derive;

/// Loss rates are drawn uniformly from this interval.
pub const EPS_RANGE: (f64, f64) = (0.05, 0.35);

/// Loss rates for trial `trial` of an l-hop experiment.
pub fn random_loss_rates(seed: u64, hops: u32, trial: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[hops as u64, trial]));
    let dist = Uniform::new_inclusive(EPS_RANGE.0, EPS_RANGE.1);
    (0..hops).map(|_| dist.sample(&mut rng)).collect()
}

/// Mean efficiencies and relative gaps to the bound at one hop count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfficiencyPoint {
    pub hops: u32,
    pub trials: u64,
    pub eta_bound: f64,
    pub eta_pa: f64,
    pub eta_clt: f64,
    pub eta_rlt: f64,
    /// Mean of (bound - η) / bound.
    pub gap_pa: f64,
    pub gap_clt: f64,
    pub gap_rlt: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct TrialEfficiency {
    bound: f64,
    pa: f64,
    clt: f64,
    rlt: f64,
}

fn efficiency_trial(
    eps: Vec<f64>,
    batch_size: u32,
    field: &FieldSpec,
    clt: &LookupTable,
    rlt: &LookupTable,
) -> Result<TrialEfficiency> {
    let profile = PathProfile::new(eps, batch_size, field.clone())?;
    let bound = solve_upper_bound(&profile)?.value;
    let (pa, _) = solve_pa(&profile)?;
    let mut eval = Evaluator::for_profile(&profile)?;
    let mut eta = |p: &Policy| eval.efficiency(profile.eps(), p.as_slice());
    Ok(TrialEfficiency {
        bound,
        pa: eta(&pa),
        clt: eta(&clt.policy_for(&profile)?),
        rlt: eta(&rlt.policy_for(&profile)?),
    })
}

fn rel_gap(bound: f64, eta: f64) -> f64 {
    if bound > 0.0 {
        (bound - eta) / bound
    } else {
        0.0
    }
}

/// Mean efficiency of PA and both tables against the bound, per hop count.
pub fn efficiency_curve(
    batch_size: u32,
    field: &FieldSpec,
    hops: &[u32],
    trials: u64,
    seed: u64,
    clt: &LookupTable,
    rlt: &LookupTable,
) -> Result<Vec<EfficiencyPoint>> {
    hops.iter()
        .map(|&l| {
            let runs: Vec<TrialEfficiency> = (0..trials)
                .into_par_iter()
                .map(|i| efficiency_trial(random_loss_rates(seed, l, i), batch_size, field, clt, rlt))
                .collect::<Result<_>>()?;
            let n = trials.max(1) as f64;
            let mean = |f: &dyn Fn(&TrialEfficiency) -> f64| runs.iter().map(f).sum::<f64>() / n;
            Ok(EfficiencyPoint {
                hops: l,
                trials,
                eta_bound: mean(&|r| r.bound),
                eta_pa: mean(&|r| r.pa),
                eta_clt: mean(&|r| r.clt),
                eta_rlt: mean(&|r| r.rlt),
                gap_pa: mean(&|r| rel_gap(r.bound, r.pa)),
                gap_clt: mean(&|r| rel_gap(r.bound, r.clt)),
                gap_rlt: mean(&|r| rel_gap(r.bound, r.rlt)),
            })
        })
        .collect()
}

/// Mean sink rank of the table policy next to the t_k = M baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankPoint {
    pub hops: u32,
    pub trials: u64,
    pub rank_table: f64,
    pub rank_baseline: f64,
}

/// Average sink rank with table-chosen t (over `table_field`) against sending
/// exactly M packets per hop (over `baseline_field`).
pub fn avg_rank_curve(
    batch_size: u32,
    table_field: &FieldSpec,
    baseline_field: &FieldSpec,
    hops: &[u32],
    trials: u64,
    seed: u64,
    table: &LookupTable,
) -> Result<Vec<RankPoint>> {
    hops.iter()
        .map(|&l| {
            let runs: Vec<(f64, f64)> = (0..trials)
                .into_par_iter()
                .map(|i| {
                    let eps = random_loss_rates(seed, l, i);
                    let p_table = PathProfile::new(eps.clone(), batch_size, table_field.clone())?;
                    let p_base = PathProfile::new(eps, batch_size, baseline_field.clone())?;
                    let policy = table.policy_for(&p_table)?;
                    let mut e_table = Evaluator::for_profile(&p_table)?;
                    let mut e_base = Evaluator::for_profile(&p_base)?;
                    let base = vec![batch_size; l as usize];
                    Ok((
                        e_table.average_rank(p_table.eps(), policy.as_slice()),
                        e_base.average_rank(p_base.eps(), &base),
                    ))
                })
                .collect::<Result<_>>()?;
            let n = trials.max(1) as f64;
            Ok(RankPoint {
                hops: l,
                trials,
                rank_table: runs.iter().map(|r| r.0).sum::<f64>() / n,
                rank_baseline: runs.iter().map(|r| r.1).sum::<f64>() / n,
            })
        })
        .collect()
}
