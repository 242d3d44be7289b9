//! Integer packet-count policies: the centralized box search, the
//! decentralized approximations and the look-up tables built from them.

pub mod table;

use serde::{Deserialize, Serialize};

use crate::analytics::eigen::Evaluator;
use crate::analytics::{PathProfile, Policy};
use crate::bound::{search_limit, solve_upper_bound, BoundResult, RealPolicy};
use crate::error::{validation, Result};

pub use table::{
    build_clt, refine_table, CompressedTable, EpsGrid, LookupTable, Run, TableQuery, REFINED_HOPS,
};

/// Above this hop count the box is searched coordinate-wise instead of exhaustively.
pub const MAX_ENUMERATED_HOPS: usize = 24;

/// Floor/ceiling box around a relaxed optimum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundsBox {
    /// ⌊t̃⌋, at least 1.
    pub d: Vec<u32>,
    /// ⌈t̃⌉, at least 1.
    pub u: Vec<u32>,
}

impl BoundsBox {
    pub fn around(t: &RealPolicy) -> Self {
        let d = t.as_slice().iter().map(|&x| (x.floor() as u32).max(1)).collect();
        let u = t.as_slice().iter().map(|&x| (x.ceil() as u32).max(1)).collect();
        Self { d, u }
    }

    pub fn hops(&self) -> usize {
        self.d.len()
    }

    /// Number of distinct vertices.
    pub fn size(&self) -> u128 {
        self.d.iter().zip(&self.u).map(|(d, u)| if d == u { 1 } else { 2 }).product()
    }

    pub fn contains(&self, t: &[u32]) -> bool {
        t.len() == self.d.len() && t.iter().zip(self.d.iter().zip(&self.u)).all(|(x, (d, u))| x == d || x == u)
    }

    fn choices(&self, k: usize) -> Vec<u32> {
        if self.d[k] == self.u[k] {
            vec![self.d[k]]
        } else {
            vec![self.d[k], self.u[k]]
        }
    }
}

/// Relaxed optimum and the integer box around it.
pub fn bounds_box(profile: &PathProfile) -> Result<(BoundsBox, BoundResult)> {
    let bound = solve_upper_bound(profile)?;
    Ok((BoundsBox::around(&bound.t_star), bound))
}

/// A policy with its exact efficiency and distance to the relaxed bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub policy: Policy,
    pub objective: f64,
    pub bound: f64,
    /// (bound - objective) / bound.
    pub gap: f64,
    pub evaluations: u64,
    pub bound_policy: RealPolicy,
}

impl SolveReport {
    fn new(policy: Policy, objective: f64, bound: &BoundResult, evaluations: u64) -> Self {
        let gap = if bound.value > 0.0 { (bound.value - objective) / bound.value } else { 0.0 };
        Self {
            policy,
            objective,
            bound: bound.value,
            gap,
            evaluations,
            bound_policy: bound.t_star.clone(),
        }
    }
}

/// Exact efficiency of `policy` next to the relaxed bound.
pub fn report(profile: &PathProfile, policy: Policy, evaluations: u64) -> Result<SolveReport> {
    let bound = solve_upper_bound(profile)?;
    report_with_bound(profile, policy, &bound, evaluations)
}

/// As [`report`] with a precomputed bound.
pub fn report_with_bound(
    profile: &PathProfile,
    policy: Policy,
    bound: &BoundResult,
    evaluations: u64,
) -> Result<SolveReport> {
    let mut eval = Evaluator::for_profile(profile)?;
    let eta = eval.efficiency(profile.eps(), policy.as_slice());
    Ok(SolveReport::new(policy, eta, bound, evaluations + eval.evaluations()))
}

/// Best exact efficiency over the box around the relaxed optimum.
pub fn solve_centralized(profile: &PathProfile) -> Result<SolveReport> {
    let (bbox, bound) = bounds_box(profile)?;
    let mut eval = Evaluator::for_profile(profile)?;
    let (t, eta, evaluations) = if profile.hops() <= MAX_ENUMERATED_HOPS {
        enumerate_box(&mut eval, profile.eps(), &bbox)
    } else {
        descend_box(&mut eval, profile.eps(), &bbox)
    };
    Ok(SolveReport::new(Policy::new(t)?, eta, &bound, evaluations))
}

/// Exhaustive search of the box in lexicographic order; only strict
/// improvements replace the incumbent, so ties keep the smaller vector.
pub fn enumerate_box(eval: &mut Evaluator, eps: &[f64], bbox: &BoundsBox) -> (Vec<u32>, f64, u64) {
    let l = bbox.hops();
    let choices: Vec<Vec<(u32, Vec<f64>)>> = (0..l)
        .map(|k| bbox.choices(k).into_iter().map(|t| (t, eval.lambda(t, eps[k]).to_vec())).collect())
        .collect();
    let basis = eval.basis().clone();
    let m1 = eval.batch_size() as usize + 1;

    struct Search<'a> {
        eps: &'a [f64],
        choices: &'a [Vec<(u32, Vec<f64>)>],
        ab: Vec<f64>,
        current: Vec<u32>,
        best: (Vec<u32>, f64),
        leaves: u64,
    }

    impl Search<'_> {
        fn visit(&mut self, k: usize, prod: &[f64], delivered: f64, cost: f64) {
            if k == self.choices.len() {
                self.leaves += 1;
                let hbar: f64 = self.ab.iter().zip(prod).map(|(a, p)| a * p).sum();
                let eta = if cost > 0.0 { hbar / cost } else { 0.0 };
                if eta > self.best.1 {
                    self.best = (self.current.clone(), eta);
                }
                return;
            }
            for (t, lambda) in &self.choices[k] {
                let next: Vec<f64> = prod.iter().zip(lambda).map(|(p, l)| p * l).collect();
                let d = delivered * (1.0 - self.eps[k].powi(*t as i32));
                self.current[k] = *t;
                self.visit(k + 1, &next, d, cost + d * *t as f64);
            }
        }
    }

    let ab: Vec<f64> = (0..m1).map(|r| if r == 0 { 0.0 } else { basis.alpha()[r] * basis.beta()[r] }).collect();
    let mut search = Search {
        eps,
        choices: &choices,
        ab,
        current: vec![0; l],
        best: (bbox.d.clone(), f64::NEG_INFINITY),
        leaves: 0,
    };
    search.visit(0, &vec![1.0; m1], 1.0, 0.0);
    (search.best.0, search.best.1.max(0.0), search.leaves)
}

/// Coordinate descent over the box vertices, starting from the floor vector.
pub fn descend_box(eval: &mut Evaluator, eps: &[f64], bbox: &BoundsBox) -> (Vec<u32>, f64, u64) {
    let mut t = bbox.d.clone();
    let mut best = eval.efficiency(eps, &t);
    let start = eval.evaluations();
    loop {
        let mut changed = false;
        for k in 0..t.len() {
            if bbox.d[k] == bbox.u[k] {
                continue;
            }
            let old = t[k];
            t[k] = if old == bbox.d[k] { bbox.u[k] } else { bbox.d[k] };
            let v = eval.efficiency(eps, &t);
            if v > best {
                best = v;
                changed = true;
            } else {
                t[k] = old;
            }
        }
        if !changed {
            break;
        }
    }
    (t, best, eval.evaluations() - start + 1)
}

/// Groups of hops sharing a loss rate, in order of first appearance.
fn equal_loss_groups(eps: &[f64]) -> Vec<(f64, Vec<usize>)> {
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for (k, &e) in eps.iter().enumerate() {
        match groups.iter_mut().find(|(g, _)| g.to_bits() == e.to_bits()) {
            Some((_, members)) => members.push(k),
            None => groups.push((e, vec![k])),
        }
    }
    // sweep in loss-rate order so the result does not depend on hop order
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));
    groups
}

/// Maximizes ħ_{l+1} / Σ_k t_k over integers. Hops with equal loss rates
/// share a variable; the rest is integer coordinate ascent from t = M.
pub fn solve_pa(profile: &PathProfile) -> Result<(Policy, u64)> {
    let mut eval = Evaluator::for_profile(profile)?;
    let groups = equal_loss_groups(profile.eps());
    let m = profile.batch_size();
    let limits: Vec<u32> = groups.iter().map(|(e, _)| 4 * search_limit(m, *e).ceil() as u32).collect();
    let mut t: Vec<u32> = vec![m.max(1); groups.len()];

    let objective = |eval: &mut Evaluator, t: &[u32]| -> f64 {
        let m1 = m as usize + 1;
        let mut prod = vec![1.0; m1];
        let mut total = 0.0;
        for ((e, members), &tg) in groups.iter().zip(t) {
            let lambda = eval.lambda(tg, *e);
            let n = members.len() as i32;
            for (p, l) in prod.iter_mut().zip(lambda) {
                *p *= l.powi(n);
            }
            total += members.len() as f64 * tg as f64;
        }
        let b = eval.basis();
        let num: f64 = (1..m1).map(|r| b.alpha()[r] * b.beta()[r] * prod[r]).sum();
        num / total
    };

    let mut evaluations = 1;
    let mut best = objective(&mut eval, &t);
    loop {
        let mut changed = false;
        for g in 0..t.len() {
            for dir in [1i64, -1] {
                loop {
                    let next = t[g] as i64 + dir;
                    if next < 1 || next > limits[g] as i64 {
                        break;
                    }
                    let old = t[g];
                    t[g] = next as u32;
                    evaluations += 1;
                    let v = objective(&mut eval, &t);
                    if v > best {
                        best = v;
                        changed = true;
                    } else {
                        t[g] = old;
                        break;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut policy = vec![0; profile.hops()];
    for ((_, members), &tg) in groups.iter().zip(&t) {
        for &k in members {
            policy[k] = tg;
        }
    }
    Ok((Policy::new(policy)?, evaluations))
}

/// Single-variable problem for an l-hop path with a common loss rate:
/// argmax_t Σ_r α_r β_r λ_r(t)^l / (l t), smallest t on ties.
pub fn solve_ps(eps: f64, hops: u32, batch_size: u32, q: f64) -> Result<u32> {
    let mut eval = Evaluator::new(batch_size, q)?;
    ps_scan(&mut eval, eps, hops)
}

/// [`solve_ps`] with a caller-owned evaluator, so rows of a table share cached eigenvalues.
pub fn ps_scan(eval: &mut Evaluator, eps: f64, hops: u32) -> Result<u32> {
    if !(0.0..1.0).contains(&eps) {
        return validation(format!("loss rate {eps} outside [0, 1)"));
    }
    if hops == 0 {
        return validation("hop count must be at least 1");
    }
    let m = eval.batch_size();
    let mut limit = (4 * m).max((2.0 * m as f64 / (1.0 - eps)).ceil() as u32).max(1);
    loop {
        let mut best = (1, f64::NEG_INFINITY);
        for t in 1..=limit {
            let v = eval.ps_objective(eps, hops, t);
            if v > best.1 {
                best = (t, v);
            }
        }
        if best.0 < limit {
            return Ok(best.0);
        }
        log::warn!("single-variable optimum at scan limit {limit} (eps={eps}, l={hops}); extending");
        limit *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf::FieldSpec;

    fn gf(q: u32) -> FieldSpec {
        FieldSpec::from_order(q).unwrap()
    }

    #[test]
    fn box_from_real_policy() {
        let b = BoundsBox::around(&RealPolicy::new(vec![17.4, 18.0]).unwrap());
        assert_eq!(b.d, vec![17, 18]);
        assert_eq!(b.u, vec![18, 18]);
        assert_eq!(b.size(), 2);
        let b = BoundsBox::around(&RealPolicy::new(vec![0.4, 3.5, 2.2]).unwrap());
        assert_eq!(b.d, vec![1, 3, 2]);
        assert_eq!(b.u, vec![1, 4, 3]);
        assert_eq!(b.size(), 4);
        assert!(b.contains(&[1, 4, 2]));
        assert!(!b.contains(&[2, 4, 2]));
    }

    #[test]
    fn enumeration_and_descent_agree_on_small_boxes() {
        let profile = PathProfile::new(vec![0.1, 0.3, 0.2], 8, gf(2)).unwrap();
        let mut eval = Evaluator::for_profile(&profile).unwrap();
        let bbox = BoundsBox { d: vec![9, 11, 10], u: vec![10, 12, 11] };
        let (t, eta, n) = enumerate_box(&mut eval, profile.eps(), &bbox);
        assert_eq!(n, 8);
        let direct = eval.efficiency(profile.eps(), &t);
        assert!((direct - eta).abs() < 1e-13);
        let (_, eta2, _) = descend_box(&mut eval, profile.eps(), &bbox);
        assert!(eta2 <= eta + 1e-15);
    }

    #[test]
    fn ps_table_cells() {
        assert_eq!(solve_ps(0.10, 2, 16, 256.0).unwrap(), 16);
        assert_eq!(solve_ps(0.20, 20, 16, 256.0).unwrap(), 23);
        assert_eq!(solve_ps(0.15, 7, 16, 256.0).unwrap(), 20);
        assert!(solve_ps(1.0, 2, 16, 256.0).is_err());
        assert!(solve_ps(0.1, 0, 16, 256.0).is_err());
    }

    #[test]
    fn pa_equal_rates_share_value() {
        let profile = PathProfile::new(vec![0.2, 0.3, 0.2], 8, gf(2)).unwrap();
        let (p, _) = solve_pa(&profile).unwrap();
        assert_eq!(p.as_slice()[0], p.as_slice()[2]);
    }

    #[test]
    fn centralized_beats_or_matches_uniform_m_inside_box() {
        let profile = PathProfile::new(vec![0.05, 0.08], 8, gf(16)).unwrap();
        let rep = solve_centralized(&profile).unwrap();
        assert!(rep.gap >= -1e-9);
        let (bbox, _) = bounds_box(&profile).unwrap();
        assert!(bbox.contains(rep.policy.as_slice()));
        if bbox.contains(&[8, 8]) {
            let mut eval = Evaluator::for_profile(&profile).unwrap();
            assert!(rep.objective >= eval.efficiency(profile.eps(), &[8, 8]) - 1e-15);
        }
    }
}
