use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use shapemmr::firststage::{estimate, project_feasible_with, Projection};
use shapemmr::policy::{solve_policy, PolicyKind};
use shapemmr::regret::{envelopes, identified_witness, regret_matrix, RegretOptions};
use shapemmr::simlab::{convergence_experiment, log_log_slope, ExperimentConfig};
use shapemmr::{
    assign, build_constraints, ConstraintSystem, CovariateTable, Observation, ResponseEstimate,
    TreatmentGrid, UtilitySpec,
};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{fmt_num, level_tag, policy_params, rounded_policy, Table};

struct Prepared {
    grid: TreatmentGrid,
    u: UtilitySpec,
    cs: ConstraintSystem,
    table: CovariateTable,
    raw: ResponseEstimate,
    projection: Option<Projection>,
}

impl Prepared {
    fn estimate(&self) -> &ResponseEstimate {
        self.projection.as_ref().map_or(&self.raw, |p| &p.estimate)
    }
}

fn prepare(cfg: &RunConfig, rows: Vec<Observation>) -> CliResult<Prepared> {
    let (grid, u) = cfg.validate_for_data()?;
    let cs = build_constraints(&grid, &cfg.shape)?;
    let table = CovariateTable::new(rows, &grid)?;
    if cfg.policy.kind == PolicyKind::LinearScore {
        cfg.policy.validate(table.covariate_dim())?;
    }
    let raw = estimate(&table, &grid, &cfg.estimator)?;
    let projection = if cfg.solver.project {
        Some(project_feasible_with(&raw, &cs, &cfg.solver.projection())?)
    } else {
        for c in 0..raw.cells() {
            identified_witness(c, &cs, raw.cell(c))?;
        }
        None
    };
    Ok(Prepared {
        grid,
        u,
        cs,
        table,
        raw,
        projection,
    })
}

fn cells_table(p: &Prepared) -> Table {
    let k = p.table.covariate_dim();
    let mut header = vec!["cell".to_string(), "count".into(), "weight".into()];
    header.extend((1..=k).map(|i| format!("x{i}")));
    let mut t = Table::new(&header);
    for (c, cell) in p.table.cells().iter().enumerate() {
        let mut row = vec![c.to_string(), cell.count.to_string(), fmt_num(cell.weight)];
        row.extend(cell.covariates.iter().map(|&v| fmt_num(v)));
        t.push(row);
    }
    t
}

fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

/// Pointwise bounds on the response and on mean utility at every level.
pub fn cmd_bounds(cfg: &RunConfig, rows: Vec<Observation>, out: &Path) -> CliResult<Vec<PathBuf>> {
    let p = prepare(cfg, rows)?;
    let est = p.estimate();
    let envs = (0..est.cells())
        .into_par_iter()
        .map(|c| envelopes(c, &p.cs, est, &p.u))
        .collect::<Result<Vec<_>, _>>()?;
    let mut t = Table::new(&["cell", "d", "m_min", "m_max", "v_min", "v_max"]);
    for (c, e) in envs.iter().enumerate() {
        for (j, &d) in p.grid.values().iter().enumerate() {
            t.push(vec![
                c.to_string(),
                fmt_num(d),
                fmt_num(e.m_min[j]),
                fmt_num(e.m_max[j]),
                fmt_num(e.v_min[j]),
                fmt_num(e.v_max[j]),
            ]);
        }
    }
    let files = vec![out_path(out, "bounds.csv"), out_path(out, "cells.csv")];
    t.write(&files[0])?;
    cells_table(&p).write(&files[1])?;
    Ok(files)
}

/// Worst-case regret, the optimal policy and regret-maximizing curves.
pub fn cmd_solve(cfg: &RunConfig, rows: Vec<Observation>, out: &Path) -> CliResult<Vec<PathBuf>> {
    // Requested curves are checked before any computation.
    let grid = cfg.treatment_grid()?;
    let mut requested = Vec::new();
    for &d in &cfg.report.worstcase_levels {
        requested.push(grid.index_of(d).ok_or_else(|| {
            CliError::Validation(format!("report level {d} is not on the treatment grid"))
        })?);
    }

    let p = prepare(cfg, rows)?;
    let est = p.estimate();
    let opts = RegretOptions {
        criterion: cfg.criterion,
        method: cfg.solver.gamma_method,
        certificates: true,
        parallel: true,
        ..RegretOptions::default()
    };
    let rm = regret_matrix(&p.cs, est, &p.u, &opts)?;
    let cells: Vec<Vec<f64>> = p
        .table
        .cells()
        .iter()
        .map(|c| c.covariates.clone())
        .collect();
    let sol = solve_policy(&rm, &cells, &p.table.weights(), &cfg.policy)?;
    let policy = rounded_policy(&sol.policy);
    let cell_levels: Vec<usize> = cells.iter().map(|x| assign(&policy, x, &p.grid)).collect();
    let objective = rm.objective(&p.table.weights(), &cell_levels);

    let mut files = Vec::new();
    let mut t = Table::new(&["row", "cell", "d"]);
    for (i, &c) in p.table.row_cells().iter().enumerate() {
        t.push(vec![
            i.to_string(),
            c.to_string(),
            fmt_num(p.grid.value(cell_levels[c])),
        ]);
    }
    files.push(out_path(out, "policy.csv"));
    t.write(files.last().unwrap())?;

    files.push(out_path(out, "policy_params.csv"));
    policy_params(&policy, p.grid.values(), objective).write(files.last().unwrap())?;

    let mut t = Table::new(&["cell", "d", "gamma"]);
    for c in 0..rm.cells() {
        for (j, &d) in p.grid.values().iter().enumerate() {
            t.push(vec![c.to_string(), fmt_num(d), fmt_num(rm.get(c, j))]);
        }
    }
    files.push(out_path(out, "gamma.csv"));
    t.write(files.last().unwrap())?;

    files.push(out_path(out, "cells.csv"));
    cells_table(&p).write(files.last().unwrap())?;

    let levels: BTreeSet<usize> = if requested.is_empty() {
        cell_levels.iter().copied().collect()
    } else {
        requested.into_iter().collect()
    };
    let certs = rm.certificates.as_ref().expect("certificates requested");
    for j in levels {
        let mut t = Table::new(&["cell", "d", "m", "alternative"]);
        for (c, row) in certs.iter().enumerate() {
            let cert = &row[j];
            for (l, &d) in p.grid.values().iter().enumerate() {
                t.push(vec![
                    c.to_string(),
                    fmt_num(d),
                    fmt_num(cert.m_star[l]),
                    fmt_num(p.grid.value(cert.k)),
                ]);
            }
        }
        files.push(out_path(
            out,
            &format!("worstcase_{}.csv", level_tag(p.grid.value(j))),
        ));
        t.write(files.last().unwrap())?;
    }
    Ok(files)
}

/// First-stage estimates before and after the shape repair.
pub fn cmd_project(
    cfg: &RunConfig,
    rows: Vec<Observation>,
    out: &Path,
) -> CliResult<(Vec<PathBuf>, String)> {
    let mut cfg = cfg.clone();
    cfg.solver.project = true;
    let p = prepare(&cfg, rows)?;
    let proj = p.projection.as_ref().expect("projection enabled");
    let observed = p.grid.observed_indices();
    let mut t = Table::new(&["cell", "d", "estimate", "projected", "changed"]);
    for c in 0..p.raw.cells() {
        for (k, &j) in observed.iter().enumerate() {
            t.push(vec![
                c.to_string(),
                fmt_num(p.grid.value(j)),
                fmt_num(p.raw.cell(c)[k]),
                fmt_num(proj.estimate.cell(c)[k]),
                u8::from(proj.changed[c]).to_string(),
            ]);
        }
    }
    let files = vec![out_path(out, "projection.csv"), out_path(out, "cells.csv")];
    t.write(&files[0])?;
    cells_table(&p).write(&files[1])?;
    let changed = proj.changed.iter().filter(|&&c| c).count();
    let moved: f64 = (0..p.raw.cells())
        .map(|c| {
            p.raw
                .cell(c)
                .iter()
                .zip(proj.estimate.cell(c))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max);
    let summary = format!(
        "{changed} of {} cells repaired; largest adjustment {}",
        p.raw.cells(),
        fmt_num(moved)
    );
    Ok((files, summary))
}

/// Regret-gap Monte Carlo on a synthetic design.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> CliResult<(Vec<PathBuf>, String)> {
    let dgp = cfg.design()?;
    let config = ExperimentConfig {
        sample_sizes: cfg.simulation.sample_sizes.clone(),
        replications: cfg.simulation.replications,
        estimator: cfg.estimator,
        class: cfg.policy.clone(),
        criterion: cfg.criterion,
        seed: cfg.seed,
        parallel: true,
    };
    let res = convergence_experiment(&dgp, &config)?;
    let mut t = Table::new(&["seed", "n", "replication", "regret", "gap"]);
    for r in &res.records {
        t.push(vec![
            cfg.seed.to_string(),
            r.n.to_string(),
            r.replication.to_string(),
            fmt_num(r.regret),
            fmt_num(r.gap),
        ]);
    }
    let files = vec![
        out_path(out, "sim_results.csv"),
        out_path(out, "sim_summary.csv"),
    ];
    t.write(&files[0])?;
    let means = res.mean_gaps();
    let mut t = Table::new(&["seed", "n", "replications", "mean_gap"]);
    for &(n, g) in &means {
        t.push(vec![
            cfg.seed.to_string(),
            n.to_string(),
            config.replications.to_string(),
            fmt_num(g),
        ]);
    }
    t.write(&files[1])?;
    let slope = log_log_slope(&means).map_or("undefined".to_string(), fmt_num);
    let summary = format!(
        "optimal regret {}; log-log slope of mean gap {slope}",
        fmt_num(res.optimal_regret)
    );
    Ok((files, summary))
}
