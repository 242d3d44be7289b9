//! Large-field approximation of the rank recursion and the continuous
//! relaxation whose optimum bounds the integer efficiency problem.
//!
//! With q → ∞ a hop maps rank m to min(m, n) where n is the number of
//! packets that survive, so the per-hop eigenvalues become binomial tails.
//! Writing those tails as regularized incomplete beta functions extends
//! them to real packet counts.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::analytics::zeta::arrival_pmf_vec;
use crate::analytics::{transmission_cost, PathProfile, Policy, RankDistribution, TransitionMatrix};
use crate::error::{domain, validation, Error, Result};

const CF_MAX_ITER: usize = 10_000;
const CF_EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// Regularized incomplete beta function I_x(a, b).
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return domain(format!("I_x(a, b) needs a, b > 0, got a={a}, b={b}"));
    }
    if !(0.0..=1.0).contains(&x) {
        return domain(format!("I_x(a, b) needs x in [0, 1], got {x}"));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b);
    let v = if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(1.0 - x, b, a) / b
    };
    Ok(v.clamp(0.0, 1.0))
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Continued fraction for I_x(a, b), modified Lentz evaluation.
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// I_{1-ε}(r, t-r+1) for real t, taken as 0 when t ≤ r-1.
pub fn pu_term(r: u32, t: f64, eps: f64) -> f64 {
    if r == 0 {
        return 1.0;
    }
    if t <= r as f64 - 1.0 {
        return 0.0;
    }
    reg_inc_beta(1.0 - eps, r as f64, t - r as f64 + 1.0).unwrap_or(0.0)
}

/// pu_term(r, t, ε) for r = 0..=M in one pass (index 0 holds 1).
///
/// Walks I_x(r, t-r+1) → I_x(r+1, t-r) by subtracting
/// Γ(t+1)/(Γ(r+1)Γ(t-r+1)) x^r (1-x)^{t-r}, starting from I_x(1, t) = 1 - ε^t.
pub fn pu_terms(t: f64, eps: f64, batch_size: u32) -> Vec<f64> {
    let mut out = vec![0.0; batch_size as usize + 1];
    out[0] = 1.0;
    if batch_size == 0 || t <= 0.0 {
        return out;
    }
    if eps <= 0.0 {
        for (r, o) in out.iter_mut().enumerate().skip(1) {
            *o = if t > r as f64 - 1.0 { 1.0 } else { 0.0 };
        }
        return out;
    }
    if eps >= 1.0 {
        return out;
    }
    let (ln_x, ln_e) = ((-eps).ln_1p(), eps.ln());
    let mut current = 1.0 - eps.powf(t);
    // ln of Γ(t+1)/(Γ(r+1)Γ(t-r+1)) at r = 1
    let mut ln_c = t.ln();
    for (r, slot) in out.iter_mut().enumerate().skip(1) {
        *slot = current.clamp(0.0, 1.0);
        let rf = r as f64;
        if t - rf <= 0.0 {
            // the next rank already satisfies t ≤ r
            break;
        }
        current -= (ln_c + rf * ln_x + (t - rf) * ln_e).exp();
        ln_c += ((t - rf) / (rf + 1.0)).ln();
    }
    out
}

/// One hop of the large-field recursion: rank m becomes min(m, n).
pub fn approx_transition_matrix(t: u32, eps: f64, batch_size: u32) -> TransitionMatrix {
    let size = batch_size as usize + 1;
    let tails = approx_eigenvalues(t, eps, batch_size);
    let f = arrival_pmf_vec(t, eps);
    let mut data = vec![0.0; size * size];
    for m in 0..size {
        for j in 0..m {
            data[m * size + j] = f.get(j).copied().unwrap_or(0.0);
        }
        data[m * size + m] = tails[m];
    }
    TransitionMatrix::from_dense(size, data)
}

/// Diagonal of the approximate transition matrix: Pr{n ≥ j} for j = 0..=M.
pub fn approx_eigenvalues(t: u32, eps: f64, batch_size: u32) -> Vec<f64> {
    let f = arrival_pmf_vec(t, eps);
    let mut tails = vec![0.0; batch_size as usize + 1];
    let mut acc = 0.0;
    for n in (0..=t as usize).rev() {
        acc += f[n];
        if n < tails.len() {
            tails[n] = acc.min(1.0);
        }
    }
    tails[0] = 1.0;
    tails
}

/// Eigendecomposition of the approximate hop matrix. The basis is the
/// all-ones lower-triangular matrix; its inverse is the difference matrix.
#[derive(Debug, Clone)]
pub struct ApproxEigenSystem {
    pub lambda: Vec<f64>,
}

impl ApproxEigenSystem {
    pub fn new(t: u32, eps: f64, batch_size: u32) -> Self {
        Self { lambda: approx_eigenvalues(t, eps, batch_size) }
    }

    fn size(&self) -> usize {
        self.lambda.len()
    }

    /// Row-major all-ones lower-triangular matrix.
    pub fn q_matrix(&self) -> Vec<f64> {
        let n = self.size();
        (0..n * n).map(|i| if i % n <= i / n { 1.0 } else { 0.0 }).collect()
    }

    /// Row-major inverse: 1 on the diagonal, -1 just below it.
    pub fn q_inverse(&self) -> Vec<f64> {
        let n = self.size();
        let mut inv = vec![0.0; n * n];
        for i in 0..n {
            inv[i * n + i] = 1.0;
            if i > 0 {
                inv[i * n + i - 1] = -1.0;
            }
        }
        inv
    }

    pub fn reconstruct(&self) -> TransitionMatrix {
        let n = self.size();
        let (q, inv) = (self.q_matrix(), self.q_inverse());
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = (0..n).map(|k| q[i * n + k] * self.lambda[k] * inv[k * n + j]).sum();
            }
        }
        TransitionMatrix::from_dense(n, data)
    }
}

/// Sink distribution under the large-field recursion.
pub fn approx_rank_distribution(profile: &PathProfile, policy: &Policy) -> Result<RankDistribution> {
    if policy.len() != profile.hops() {
        return validation(format!("policy has {} hops, profile has {}", policy.len(), profile.hops()));
    }
    let mut h = RankDistribution::source(profile.batch_size()).as_slice().to_vec();
    for (&t, &eps) in policy.as_slice().iter().zip(profile.eps()) {
        h = approx_transition_matrix(t, eps, profile.batch_size()).apply(&h);
    }
    Ok(RankDistribution::from_propagated(h))
}

/// Real-valued packet counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RealPolicy(Vec<f64>);

impl RealPolicy {
    pub fn new(t: Vec<f64>) -> Result<Self> {
        if t.is_empty() {
            return validation("policy needs at least one hop");
        }
        if let Some(bad) = t.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
            return validation(format!("packet counts must be positive, got {bad}"));
        }
        Ok(Self(t))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<&Policy> for RealPolicy {
    fn from(p: &Policy) -> Self {
        Self(p.as_slice().iter().map(|&t| t as f64).collect())
    }
}

impl TryFrom<Vec<f64>> for RealPolicy {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<RealPolicy> for Vec<f64> {
    fn from(p: RealPolicy) -> Self {
        p.0
    }
}

/// Σ_{r=1}^{M} Π_j pu_term(r, t_j, ε_j).
pub fn approx_average_rank(profile: &PathProfile, t: &RealPolicy) -> Result<f64> {
    check_len(profile, t)?;
    let terms: Vec<Vec<f64>> = t
        .as_slice()
        .iter()
        .zip(profile.eps())
        .map(|(&tk, &e)| pu_terms(tk, e, profile.batch_size()))
        .collect();
    Ok(product_sum(&terms, profile.batch_size()))
}

/// Relaxed efficiency: approximate average rank over expected packets.
pub fn pu_objective(profile: &PathProfile, t: &RealPolicy) -> Result<f64> {
    let num = approx_average_rank(profile, t)?;
    let den = transmission_cost(profile.eps(), t.as_slice());
    Ok(if den > 0.0 { num / den } else { 0.0 })
}

fn check_len(profile: &PathProfile, t: &RealPolicy) -> Result<()> {
    if t.len() != profile.hops() {
        return validation(format!("policy has {} hops, profile has {}", t.len(), profile.hops()));
    }
    Ok(())
}

fn product_sum(terms: &[Vec<f64>], batch_size: u32) -> f64 {
    (1..=batch_size as usize).map(|r| terms.iter().map(|v| v[r]).product::<f64>()).sum()
}

/// Outcome of the relaxed maximization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundResult {
    pub t_star: RealPolicy,
    pub value: f64,
    pub iterations: u64,
    pub converged: bool,
}

const MIN_STEP: f64 = 1e-4;
const MAX_ITERATIONS: u64 = 1_000_000;
const SCAN_STEP: f64 = 0.01;

/// Upper end of the search interval for one hop.
pub fn search_limit(batch_size: u32, eps: f64) -> f64 {
    let m = batch_size as f64;
    if eps >= 1.0 {
        return 4.0 * m;
    }
    (4.0 * m).max(2.0 * m / (1.0 - eps))
}

/// Maximizes the relaxed efficiency over positive real packet counts.
pub fn solve_upper_bound(profile: &PathProfile) -> Result<BoundResult> {
    solve_upper_bound_with_starts(profile, &[])
}

/// As [`solve_upper_bound`], with extra caller-supplied starting points.
pub fn solve_upper_bound_with_starts(profile: &PathProfile, extra: &[RealPolicy]) -> Result<BoundResult> {
    for s in extra {
        check_len(profile, s)?;
    }
    if profile.hops() == 1 {
        return Ok(solve_single_hop(profile));
    }
    let upper: Vec<f64> = profile.eps().iter().map(|&e| search_limit(profile.batch_size(), e)).collect();
    let mut best: Option<BoundResult> = None;
    let mut iterations = 0;
    for start in default_starts(profile).into_iter().chain(extra.iter().map(|s| s.as_slice().to_vec())) {
        let start: Vec<f64> = start.iter().zip(&upper).map(|(&x, &u)| x.clamp(1.0, u)).collect();
        let run = CoordinateSearch::new(profile, &upper, start).run();
        iterations += run.iterations;
        if best.as_ref().is_none_or(|b| run.value > b.value) {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least one start");
    best.iterations = iterations;
    Ok(best)
}

fn default_starts(profile: &PathProfile) -> Vec<Vec<f64>> {
    let m = profile.batch_size() as f64;
    let l = profile.hops();
    let mut starts: Vec<Vec<f64>> = [1.0, 0.75, 1.25, 1.5, 2.0].iter().map(|s| vec![s * m; l]).collect();
    starts.push(profile.eps().iter().map(|&e| m / (1.0 - e).max(1e-3)).collect());
    starts.push(profile.eps().iter().map(|&e| m / (1.0 - e).max(1e-3) * 1.1 + 1.0).collect());
    // each hop at the single-variable optimum for a uniform path with its own loss rate
    starts.push(
        profile
            .eps()
            .iter()
            .map(|&e| uniform_integer_optimum(e, l as u32, profile.batch_size()))
            .collect(),
    );
    starts
}

/// Integer maximizer of Σ_r pu_term(r, t, ε)^l / (l t). Leaving out the
/// delivery factors keeps it away from the t = 1 corner.
fn uniform_integer_optimum(eps: f64, hops: u32, batch_size: u32) -> f64 {
    let limit = search_limit(batch_size, eps).ceil() as u32;
    let mut best = (1.0, f64::MIN);
    for t in 1..=limit {
        let tf = t as f64;
        let terms = pu_terms(tf, eps, batch_size);
        let v = terms[1..].iter().map(|v| v.powi(hops as i32)).sum::<f64>() / (hops as f64 * tf);
        if v > best.1 {
            best = (tf, v);
        }
    }
    best.0
}

struct CoordinateSearch<'a> {
    profile: &'a PathProfile,
    upper: &'a [f64],
    t: Vec<f64>,
    terms: Vec<Vec<f64>>,
    value: f64,
    iterations: u64,
}

impl<'a> CoordinateSearch<'a> {
    fn new(profile: &'a PathProfile, upper: &'a [f64], t: Vec<f64>) -> Self {
        let terms = t
            .iter()
            .zip(profile.eps())
            .map(|(&tk, &e)| pu_terms(tk, e, profile.batch_size()))
            .collect();
        let mut s = Self { profile, upper, t, terms, value: 0.0, iterations: 0 };
        s.value = s.objective(&s.terms, &s.t);
        s
    }

    fn objective(&self, terms: &[Vec<f64>], t: &[f64]) -> f64 {
        let cost = transmission_cost(self.profile.eps(), t);
        if cost > 0.0 {
            product_sum(terms, self.profile.batch_size()) / cost
        } else {
            0.0
        }
    }

    fn try_move(&mut self, k: usize, to: f64) -> bool {
        self.try_moves(&[(k, to)])
    }

    /// Applies all coordinate changes at once; keeps them only on strict improvement.
    fn try_moves(&mut self, moves: &[(usize, f64)]) -> bool {
        if moves.iter().all(|&(k, to)| to == self.t[k]) {
            return false;
        }
        self.iterations += 1;
        let saved: Vec<(usize, f64, Vec<f64>)> = moves
            .iter()
            .map(|&(k, to)| {
                let terms = pu_terms(to, self.profile.eps()[k], self.profile.batch_size());
                let old = (k, self.t[k], std::mem::replace(&mut self.terms[k], terms));
                self.t[k] = to;
                old
            })
            .collect();
        let v = self.objective(&self.terms, &self.t);
        if v > self.value {
            self.value = v;
            true
        } else {
            for (k, t, terms) in saved.into_iter().rev() {
                self.t[k] = t;
                self.terms[k] = terms;
            }
            false
        }
    }

    /// Moves neighbouring coordinates together, which follows ridges the
    /// axis moves stall on.
    fn pair_moves(&mut self, step: f64) -> bool {
        for i in 1..self.t.len() {
            let j = i - 1;
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let ti = (self.t[i] + si * step).clamp(1.0, self.upper[i]);
                let tj = (self.t[j] + sj * step).clamp(1.0, self.upper[j]);
                if self.try_moves(&[(i, ti), (j, tj)]) {
                    return true;
                }
            }
        }
        false
    }

    fn run(mut self) -> BoundResult {
        let mut step = self.profile.batch_size() as f64 / 4.0;
        while step >= MIN_STEP && self.iterations < MAX_ITERATIONS {
            let mut improved = false;
            for k in 0..self.t.len() {
                let up = (self.t[k] + step).min(self.upper[k]);
                if self.try_move(k, up) {
                    improved = true;
                    continue;
                }
                let down = (self.t[k] - step).max(1.0);
                improved |= self.try_move(k, down);
            }
            if !improved && !self.pair_moves(step) {
                step *= 0.5;
            }
        }
        BoundResult {
            converged: step < MIN_STEP,
            t_star: RealPolicy(self.t),
            value: self.value.max(0.0),
            iterations: self.iterations,
        }
    }
}

/// Single hop: dense scan, then golden-section refinement around the best point.
fn solve_single_hop(profile: &PathProfile) -> BoundResult {
    let eps = profile.eps()[0];
    let m = profile.batch_size();
    let f = |t: f64| {
        let num: f64 = pu_terms(t, eps, m)[1..].iter().sum();
        let cost = transmission_cost(&[eps], &[t]);
        if cost > 0.0 {
            num / cost
        } else {
            0.0
        }
    };
    let upper = search_limit(m, eps);
    let n = ((upper - 1.0) / SCAN_STEP).round() as u64;
    let mut best = (1.0, f(1.0));
    for i in 1..=n {
        let t = 1.0 + i as f64 * SCAN_STEP;
        let v = f(t);
        if v > best.1 {
            best = (t, v);
        }
    }
    let (mut lo, mut hi) = ((best.0 - SCAN_STEP).max(1.0), (best.0 + SCAN_STEP).min(upper));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut iterations = n + 1;
    let (mut a, mut b) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > 1e-9 {
        iterations += 1;
        if fa >= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    for (t, v) in [(a, fa), (b, fb)] {
        if v > best.1 {
            best = (t, v);
        }
    }
    BoundResult {
        t_star: RealPolicy(vec![best.0]),
        value: best.1.max(0.0),
        iterations,
        converged: true,
    }
}
