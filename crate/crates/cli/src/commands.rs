use std::fmt::Write as _;
use std::path::Path;

use bats_core::analytics::total_transmissions;
use bats_core::bound::{approx_rank_distribution, pu_objective, solve_upper_bound, RealPolicy};
use bats_core::experiment::{avg_rank_curve, efficiency_curve};
use bats_core::optimize::{
    build_clt, refine_table, report, solve_centralized, solve_pa, solve_ps, EpsGrid, LookupTable, SolveReport,
};
use bats_core::sim::{run_simulation, SimConfig};
use bats_core::{efficiency, propagate, FieldSpec, PathProfile, Policy};
use serde::Serialize;
use serde_json::json;

use crate::args::{HopList, Mode, Target, TableCommand};
use crate::error::CliError;
use crate::output::{join, join_f, to_value, Report};
use crate::scenario::{default_seed, Scenario};

pub fn analyze(s: &Scenario, approx: bool) -> Result<Report, CliError> {
    let profile = s.profile()?;
    let policy = s.policy("analyze")?;
    let (h, eta) = if approx {
        let h = approx_rank_distribution(&profile, &policy)?;
        (h, pu_objective(&profile, &RealPolicy::from(&policy))?)
    } else {
        (propagate(&profile, &policy)?, efficiency(&profile, &policy)?)
    };
    let tx = total_transmissions(s.n1, &profile, &policy)?;
    let avg = h.average_rank();
    let result = json!({
        "method": if approx { "approx" } else { "exact" },
        "rank_distribution": h.as_slice(),
        "average_rank": avg,
        "efficiency": eta,
        "t_total": policy.total(),
        "expected_packets": tx.total,
        "expected_batches": tx.batches,
    });
    let mut human = String::new();
    writeln!(human, "method          {}", if approx { "relaxed" } else { "exact" }).unwrap();
    writeln!(human, "t               {}", join(policy.as_slice())).unwrap();
    writeln!(human, "average rank    {avg:.6}").unwrap();
    writeln!(human, "efficiency      {eta:.6}").unwrap();
    writeln!(human, "t_total         {}", policy.total()).unwrap();
    writeln!(human, "packets         {:.4} (n1 = {})", tx.total, s.n1).unwrap();
    writeln!(human, "batches by node {}", join_f(&tx.batches, 4)).unwrap();
    writeln!(human, "rank distribution:").unwrap();
    let mut csv = String::from("rank,probability\n");
    for (r, p) in h.as_slice().iter().enumerate() {
        writeln!(human, "  {r:>3}  {p:.6e}").unwrap();
        writeln!(csv, "{r},{p}").unwrap();
    }
    Ok(Report::new("analyze", json!({ "scenario": s, "approx": approx }), result)?.human(human).csv(csv))
}

#[derive(Serialize)]
struct OptimizeResult<'a> {
    mode: &'static str,
    #[serde(flatten)]
    report: &'a SolveReport,
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Centralized => "centralized",
        Mode::Pa => "pa",
        Mode::Ps => "ps",
        Mode::Table => "table",
    }
}

pub fn optimize(s: &Scenario, mode: Mode, table: Option<&Path>, hops: Option<u32>) -> Result<Report, CliError> {
    let mut s = s.clone();
    let rep = match mode {
        Mode::Centralized => solve_centralized(&s.profile()?)?,
        Mode::Pa => {
            let profile = s.profile()?;
            let (policy, evals) = solve_pa(&profile)?;
            report(&profile, policy, evals)?
        }
        Mode::Ps => {
            let eps = s.eps[0];
            if s.eps.iter().any(|&e| e != eps) {
                return Err(CliError::Usage("ps mode needs a single common loss rate".into()));
            }
            let l = match hops {
                Some(l) if s.eps.len() == 1 => l,
                Some(l) if l as usize != s.eps.len() => {
                    return Err(CliError::Usage(format!("--hops {l} disagrees with {} loss rates", s.eps.len())))
                }
                _ => s.eps.len() as u32,
            };
            s.eps = vec![eps; l as usize];
            let profile = s.profile()?;
            let t = solve_ps(eps, l, s.batch_size, profile.q())?;
            report(&profile, Policy::uniform(t, l as usize)?, 0)?
        }
        Mode::Table => {
            let path = table.ok_or_else(|| CliError::Usage("--mode table needs --table PATH".into()))?;
            let lt = load_table(path)?;
            if lt.q != s.q || lt.batch_size != s.batch_size {
                log::warn!(
                    "table was built for q={} M={}, scenario has q={} M={}",
                    lt.q,
                    lt.batch_size,
                    s.q,
                    s.batch_size
                );
            }
            let profile = s.profile()?;
            let policy = lt.policy_for(&profile)?;
            report(&profile, policy, 0)?
        }
    };
    let name = mode_name(mode);
    let mut human = String::new();
    writeln!(human, "mode        {name}").unwrap();
    writeln!(human, "t           {}", join(rep.policy.as_slice())).unwrap();
    writeln!(human, "efficiency  {:.7} (1/eta = {:.4})", rep.objective, 1.0 / rep.objective).unwrap();
    writeln!(human, "bound       {:.7} at t~ = {}", rep.bound, join_f(rep.bound_policy.as_slice(), 3)).unwrap();
    writeln!(human, "gap         {:.3}%", 100.0 * rep.gap).unwrap();
    let config = json!({ "scenario": s, "mode": name, "table": table });
    Ok(Report::new("optimize", config, OptimizeResult { mode: name, report: &rep })?.human(human))
}

pub fn bound(s: &Scenario) -> Result<Report, CliError> {
    let res = solve_upper_bound(&s.profile()?)?;
    let mut human = String::new();
    writeln!(human, "bound       {:.7}", res.value).unwrap();
    writeln!(human, "t~          {}", join_f(res.t_star.as_slice(), 4)).unwrap();
    writeln!(human, "iterations  {}{}", res.iterations, if res.converged { "" } else { " (not converged)" }).unwrap();
    Ok(Report::new("bound", json!({ "scenario": s }), &res)?.human(human))
}

/// Reads a table document, naming the file in any error.
pub fn load_table(path: &Path) -> Result<LookupTable, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    LookupTable::from_json(&text).map_err(|e| match CliError::from(e) {
        CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn grid_view(t: &LookupTable) -> Result<String, CliError> {
    // the CSV already has the published layout; align it for the terminal
    let csv = t.to_csv()?;
    let mut out = String::new();
    for line in csv.lines() {
        let cells: Vec<String> = line.split(',').map(|c| format!("{c:>4}")).collect();
        writeln!(out, "{}", cells.join(" ")).unwrap();
    }
    Ok(out)
}

fn table_report(name: &str, config: serde_json::Value, t: &LookupTable, note: String) -> Result<Report, CliError> {
    let doc: serde_json::Value = serde_json::from_str(&t.to_json()?).map_err(|e| CliError::Io(e.to_string()))?;
    let human = format!("{note}{}", grid_view(t)?);
    Ok(Report::new(name, config, doc)?.human(human).csv(t.to_csv()?))
}

pub fn table(cmd: &TableCommand, jobs: Option<usize>) -> Result<Report, CliError> {
    match cmd {
        TableCommand::Build { q, batch_size, eps_start, eps_end, eps_step, hops, save } => {
            let grid = EpsGrid::span(*eps_start, *eps_end, *eps_step)
                .map_err(|e| CliError::Usage(format!("loss-rate grid: {e}")))?;
            FieldSpec::from_order(*q)?;
            let t = build_clt(*q, *batch_size, grid, hops.0.clone(), jobs)?;
            for w in t.adjacency_warnings() {
                log::warn!("{w}");
            }
            if let Some(p) = save {
                t.save(p)?;
            }
            let config = json!({
                "q": q, "M": batch_size, "eps_start": eps_start, "eps_end": eps_end,
                "eps_step": eps_step, "hops": hops.0, "save": save, "jobs": jobs,
            });
            table_report("table build", config, &t, String::new())
        }
        TableCommand::Refine { table, save } => {
            let t = refine_table(&load_table(table)?)?;
            if let Some(p) = save {
                t.save(p)?;
            }
            table_report("table refine", json!({ "table": table, "save": save }), &t, String::new())
        }
        TableCommand::Query { table, eps, hops } => {
            let res = load_table(table)?.query(*eps, *hops)?;
            let mut human = format!("t = {} (cell eps={}, l={})\n", res.t, res.eps, res.hops);
            if res.eps_clamped {
                writeln!(human, "note: loss rate {eps} is outside the table grid; clamped").unwrap();
            }
            if res.hops_clamped {
                writeln!(human, "note: path length {hops} exceeds the table; last column used").unwrap();
            }
            let csv = format!("eps,hops,t\n{},{},{}\n", res.eps, res.hops, res.t);
            let config = json!({ "table": table, "eps": eps, "hops": hops });
            Ok(Report::new("table query", config, &res)?.human(human).csv(csv))
        }
        TableCommand::Compress { table, save } => {
            let t = load_table(table)?;
            let packed = t.compress();
            if let Some(p) = save {
                packed.save(p)?;
            }
            let mut human = String::new();
            let mut csv = String::from("PLR,runs\n");
            for (i, row) in packed.runs.iter().enumerate() {
                let runs: Vec<String> = row.iter().map(|r| format!("{}x{}", r.t, r.len)).collect();
                writeln!(human, "{:.2}  {}", t.grid.value(i), runs.join(" ")).unwrap();
                writeln!(csv, "{},{}", t.grid.value(i), runs.join(" ")).unwrap();
            }
            let cells = t.cells.len();
            let stored: usize = packed.runs.iter().map(Vec::len).sum();
            writeln!(human, "{cells} cells stored as {stored} runs").unwrap();
            let result = json!({ "runs": packed.runs, "cells": cells, "run_count": stored });
            Ok(Report::new("table compress", json!({ "table": table, "save": save }), result)?
                .human(human)
                .csv(csv))
        }
    }
}

pub fn simulate(s: &Scenario) -> Result<Report, CliError> {
    let profile = s.profile()?;
    let policy = s.policy("simulate")?;
    let rep = run_simulation(&SimConfig::new(profile, policy, s.trials, s.seed)?)?;
    let mut human = String::new();
    writeln!(human, "batches           {}", s.trials).unwrap();
    writeln!(human, "seed              {}", s.seed).unwrap();
    writeln!(human, "average rank      {:.5}", rep.avg_rank).unwrap();
    writeln!(human, "efficiency        {:.5}", rep.empirical_efficiency).unwrap();
    writeln!(human, "batches by node   {}", join(&rep.batches_received)).unwrap();
    writeln!(human, "packets by hop    {}", join(&rep.packets_sent)).unwrap();
    writeln!(human, "tv to analytic    {:.5}", rep.tv_distance_to_analytic).unwrap();
    writeln!(human, "chi2              {:.3} on {} dof", rep.chi2, rep.dof).unwrap();
    let mut csv = String::from("rank,count,frequency\n");
    for (r, (&c, &f)) in rep.histogram.iter().zip(rep.empirical_h.as_slice()).enumerate() {
        writeln!(csv, "{r},{c},{f}").unwrap();
    }
    Ok(Report::new("simulate", json!({ "scenario": s }), &rep)?.human(human).csv(csv))
}

/// Grid and hop columns of the published look-up table.
fn table1_grid() -> (EpsGrid, Vec<u32>) {
    (EpsGrid::span(0.10, 0.20, 0.01).expect("static grid"), (2..=20).collect())
}

/// Loss-rate range drawn by the random trials, so every draw lands on the table.
fn trial_grid() -> EpsGrid {
    EpsGrid::span(0.05, 0.35, 0.01).expect("static grid")
}

pub struct ReproduceArgs<'a> {
    pub target: Target,
    pub trials: u64,
    pub seed: Option<u64>,
    pub batch_sizes: &'a [u32],
    pub hops: &'a HopList,
    pub q: u32,
    pub table_q: u32,
    pub jobs: Option<usize>,
}

fn csv_from_rows(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

pub fn reproduce(a: &ReproduceArgs) -> Result<Report, CliError> {
    let seed = match a.seed {
        Some(s) => s,
        None => default_seed()?,
    };
    if a.trials == 0 {
        return Err(CliError::Validation("trials must be at least 1".into()));
    }
    let field = FieldSpec::from_order(a.q)?;
    let table_field = FieldSpec::from_order(a.table_q)?;
    let (name, header, rows, result): (&str, Vec<&str>, Vec<Vec<String>>, serde_json::Value) = match a.target {
        Target::Table1 | Target::Table2 => {
            let (grid, hops) = table1_grid();
            let mut t = build_clt(256, 16, grid, hops, a.jobs)?;
            if a.target == Target::Table2 {
                t = refine_table(&t)?;
            }
            let csv = t.to_csv()?;
            let doc: serde_json::Value = serde_json::from_str(&t.to_json()?).map_err(|e| CliError::Io(e.to_string()))?;
            let name = if a.target == Target::Table1 { "table1" } else { "table2" };
            let config = json!({ "target": name, "q": 256, "M": 16 });
            return Ok(Report::new("reproduce", config, doc)?.human(csv.clone()).csv(csv));
        }
        Target::Fig3 => {
            let mut rows = Vec::new();
            let mut out = Vec::new();
            for eps in [[0.2, 0.2], [0.2, 0.1]] {
                let profile = PathProfile::new(eps.to_vec(), 16, FieldSpec::from_order(256)?)?;
                let rep = solve_centralized(&profile)?;
                let t = rep.policy.as_slice();
                rows.push(vec![
                    eps[0].to_string(),
                    eps[1].to_string(),
                    t[0].to_string(),
                    t[1].to_string(),
                    format!("{:.7}", rep.objective),
                    format!("{:.4}", 1.0 / rep.objective),
                    format!("{:.7}", rep.bound),
                ]);
                out.push(json!({ "eps": eps, "report": rep }));
            }
            ("fig3", vec!["eps1", "eps2", "t1", "t2", "eta", "inv_eta", "bound"], rows, to_value(out)?)
        }
        Target::EfficiencyCurve => {
            let mut rows = Vec::new();
            let mut out = Vec::new();
            for &m in a.batch_sizes {
                let clt = build_clt(a.q, m, trial_grid(), (2..=20).collect(), a.jobs)?;
                let rlt = refine_table(&clt)?;
                let curve = efficiency_curve(m, &field, &a.hops.0, a.trials, seed, &clt, &rlt)?;
                for p in &curve {
                    rows.push(vec![
                        m.to_string(),
                        p.hops.to_string(),
                        p.trials.to_string(),
                        format!("{:.6}", p.eta_bound),
                        format!("{:.6}", p.eta_pa),
                        format!("{:.6}", p.eta_clt),
                        format!("{:.6}", p.eta_rlt),
                        format!("{:.4}", 100.0 * p.gap_pa),
                        format!("{:.4}", 100.0 * p.gap_clt),
                        format!("{:.4}", 100.0 * p.gap_rlt),
                    ]);
                }
                out.push(json!({ "M": m, "points": curve }));
            }
            let header = vec![
                "M", "l", "trials", "eta_bound", "eta_pa", "eta_clt", "eta_rlt", "gap_pa_pct", "gap_clt_pct",
                "gap_rlt_pct",
            ];
            ("efficiency-curve", header, rows, to_value(out)?)
        }
        Target::AvgRankCurve => {
            let mut rows = Vec::new();
            let mut out = Vec::new();
            for &m in a.batch_sizes {
                let rlt = refine_table(&build_clt(a.table_q, m, trial_grid(), (2..=20).collect(), a.jobs)?)?;
                let curve = avg_rank_curve(m, &table_field, &field, &a.hops.0, a.trials, seed, &rlt)?;
                for p in &curve {
                    rows.push(vec![
                        m.to_string(),
                        p.hops.to_string(),
                        p.trials.to_string(),
                        format!("{:.6}", p.rank_table),
                        format!("{:.6}", p.rank_baseline),
                    ]);
                }
                out.push(json!({ "M": m, "points": curve }));
            }
            ("avg-rank-curve", vec!["M", "l", "trials", "rank_rlt", "rank_no_recoding"], rows, to_value(out)?)
        }
    };
    let csv = csv_from_rows(&header, &rows);
    let config = json!({
        "target": name, "trials": a.trials, "seed": seed, "batch_sizes": a.batch_sizes,
        "hops": a.hops.0, "q": a.q, "table_q": a.table_q,
    });
    Ok(Report::new("reproduce", config, result)?.human(csv.clone()).csv(csv))
}
