use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{InitKind, RunConfig, StudyData};
use crate::control::{
    discrete_mixed_sum, phantom_mixed_norm_sq, random_admissible, steklov_discretize, tilde_h1_norm_continuous,
    ConductivityField, DiscreteControl, Region,
};
use crate::convergence::{pmap_stable, reference_data, reference_state, run_study, StudyConfig, STEKLOV_EPS};
use crate::cost::{discrete_cost, CostBreakdown, Measurement};
use crate::error::{EitError, Result};
use crate::forward::{energy_check, solve_log_row, solve_state, SOLVE_LOG_HEADER};
use crate::inverse::{gradient_check, initial_control, reconstruct, synthetic_measurement, TRACE_HEADER};
use crate::lattice::{build_lattice, discrete_norm_sq, GridFunction, Lattice, NormKind};
use crate::table::Table;

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    CheckFailed,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

/// Configuration and input problems exit with 1, numerical failures with 2.
pub fn exit_code(e: &EitError) -> i32 {
    match e {
        EitError::NoConvergence { .. }
        | EitError::DisconnectedSystem(_)
        | EitError::StalledLineSearch { .. }
        | EitError::IndexOutOfSet { .. }
        | EitError::PointOutsideLattice { .. } => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    }
}

pub fn status_code(s: Status) -> i32 {
    match s {
        Status::Ok => EXIT_OK,
        Status::CheckFailed => EXIT_CHECK_FAILED,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    Energy,
    Steklov,
    Pmap,
    Gradient,
}

fn lattice(cfg: &RunConfig, h: f64) -> Result<Arc<Lattice>> {
    Ok(Arc::new(build_lattice(&cfg.spec, &cfg.electrodes, h)?))
}

fn sigma(cfg: &RunConfig, lat: &Arc<Lattice>) -> Result<GridFunction> {
    match &cfg.sigma_file {
        Some(p) => GridFunction::from_table(lat.clone(), &std::fs::read_to_string(p)?),
        None => steklov_discretize(&cfg.phantom, lat),
    }
}

fn write(out: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(std::fs::write(out.join(name), text)?)
}

fn write_table(out: &Path, name: &str, t: &Table) -> Result<()> {
    write(out, name, &t.to_csv())
}

fn cost_table(c: &CostBreakdown) -> Result<Table> {
    let mut t = Table::new(&CostBreakdown::header(c.mismatch.len()));
    t.push(c.row())?;
    Ok(t)
}

/// Solves the state for (𝒬_h σ or `sigma.file`, U) and writes `state.csv`,
/// `solve_log.csv` and `cost_log.csv`.
pub fn forward(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let lat = lattice(cfg, cfg.step()?)?;
    let voltages = cfg.need_voltages()?.to_vec();
    let pattern = cfg.need_pattern()?;
    let meas = match &cfg.measurement {
        Some(m) => m.clone(),
        None => Measurement::new(voltages.clone())?,
    };
    let control = DiscreteControl::new(sigma(cfg, &lat)?, voltages.clone())?;
    let report = solve_state(&control, cfg.solver_tol)?;
    let cost = discrete_cost(&report.u, &voltages, pattern, &meas, cfg.params.beta)?;
    write(out, "state.csv", &report.u.to_table())?;
    let mut log = Table::new(&SOLVE_LOG_HEADER);
    log.push(solve_log_row(&report))?;
    write_table(out, "solve_log.csv", &log)?;
    write_table(out, "cost_log.csv", &cost_table(&cost)?)?;
    Ok(Status::Ok)
}

fn measurement(cfg: &RunConfig, h: f64) -> Result<Measurement> {
    match &cfg.measurement {
        Some(m) => Ok(m.clone()),
        None => Ok(synthetic_measurement(
            &cfg.spec,
            &cfg.electrodes,
            &cfg.phantom,
            h / cfg.data_refine,
            cfg.need_pattern()?,
            cfg.noise,
            cfg.seed,
            cfg.solver_tol,
        )?
        .measurement),
    }
}

/// Reconstructs (σ, U); writes `control.csv`, `voltages.csv`, `data.csv`
/// and `trace.csv`.
pub fn invert(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let h = cfg.step()?;
    let lat = lattice(cfg, h)?;
    let pattern = cfg.need_pattern()?;
    let meas = measurement(cfg, h)?;
    let init = match cfg.init {
        InitKind::Constant => initial_control(&lat, cfg.init_sigma, &meas, cfg.jitter, cfg.seed)?,
        InitKind::Truth => DiscreteControl::new(steklov_discretize(&cfg.phantom, &lat)?, meas.values().to_vec())?,
    };
    let rec = reconstruct(&init, pattern, &meas, &cfg.params, &cfg.optimizer)?;
    write(out, "control.csv", &rec.control.sigma.to_table())?;
    let mut v = Table::new(&["electrode", "U"]);
    let mut d = Table::new(&["electrode", "I", "Ustar"]);
    for l in 0..rec.control.voltages.len() {
        v.push(vec![(l + 1) as f64, rec.control.voltages[l]])?;
        d.push(vec![(l + 1) as f64, pattern.values()[l], meas.values()[l]])?;
    }
    write_table(out, "voltages.csv", &v)?;
    write_table(out, "data.csv", &d)?;
    let mut t = Table::new(&TRACE_HEADER);
    for row in &rec.trace {
        t.push(row.row())?;
    }
    write_table(out, "trace.csv", &t)?;
    eprintln!("stopped after {} iterations: {:?}", rec.trace.len() - 1, rec.stop);
    Ok(Status::Ok)
}

pub fn study_config(cfg: &RunConfig) -> Result<StudyConfig> {
    if cfg.h_list.is_empty() {
        return Err(EitError::Config("missing key `grid.h_list`".into()));
    }
    let hmin = cfg.h_list.iter().copied().fold(f64::INFINITY, f64::min);
    let voltages = cfg.need_voltages()?.to_vec();
    let m = voltages.len();
    let mut sc = StudyConfig {
        spec: cfg.spec,
        electrodes: cfg.electrodes.clone(),
        sigma: cfg.phantom.clone(),
        voltages: voltages.clone(),
        pattern: cfg.pattern.clone().unwrap_or(crate::cost::CurrentPattern::new(vec![0.0; m])?),
        measurement: cfg.measurement.clone().unwrap_or(Measurement::new(vec![0.0; m])?),
        params: cfg.params,
        h_list: cfg.h_list.clone(),
        h_ref: cfg.h_ref.unwrap_or(hmin / 4.0),
        checks: cfg.checks.clone(),
        solver_tol: cfg.solver_tol,
        seed: cfg.seed,
    };
    match cfg.study_data {
        StudyData::Given => {
            sc.pattern = cfg.need_pattern()?.clone();
            sc.measurement = cfg
                .measurement
                .clone()
                .ok_or_else(|| EitError::Config("missing key `measurement.Ustar` (or set study.data = reference)".into()))?;
        }
        StudyData::Reference => {
            sc.validate()?;
            let (i, u) = reference_data(&reference_state(&sc)?, &voltages)?;
            sc.pattern = i;
            sc.measurement = u;
        }
    }
    sc.validate()?;
    Ok(sc)
}

/// Runs the refinement study; writes `report.csv` and `verdicts.txt`.
pub fn study(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let sc = study_config(cfg)?;
    let report = run_study(&sc)?;
    write_table(out, "report.csv", &report.table())?;
    write(out, "verdicts.txt", &report.verdict_text())?;
    Ok(if report.all_pass() { Status::Ok } else { Status::CheckFailed })
}

fn levels(cfg: &RunConfig) -> Result<Vec<f64>> {
    if !cfg.h_list.is_empty() {
        Ok(cfg.h_list.clone())
    } else {
        Ok(vec![cfg.step()?])
    }
}

/// A single audit; writes `check_<name>.csv` and a one-line verdict to
/// `check_<name>.txt`.
pub fn check(kind: CheckKind, cfg: &RunConfig, out: &Path) -> Result<Status> {
    let (name, table, pass, note) = match kind {
        CheckKind::Energy => {
            let lat = lattice(cfg, cfg.step()?)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut t = Table::new(&["sample", "lhs", "rhs", "rhs_unclamped"]);
            let mut violations = 0;
            for k in 0..cfg.samples {
                let c = random_admissible(&lat, &cfg.params, 2.0, &mut rng)?;
                let r = solve_state(&c, cfg.solver_tol)?;
                let e = energy_check(&r, &c.voltages, cfg.params.sigma_floor);
                violations += usize::from(!e.pass);
                t.push(vec![k as f64, e.lhs, e.rhs, e.rhs_unclamped])?;
            }
            ("energy", t, violations == 0, format!("{violations} violations in {} samples", cfg.samples))
        }
        CheckKind::Steklov => {
            let ConductivityField::Phantom(ph) = &cfg.phantom else {
                return Err(EitError::Config("the steklov check needs phantom = bump or two_bumps".into()));
            };
            let mut hs = levels(cfg)?;
            hs.sort_by(|a, b| b.total_cmp(a));
            let mut t = Table::new(&["h", "lhs", "rhs"]);
            for &h in &hs {
                let lat = lattice(cfg, h)?;
                let axes: Vec<usize> = (0..lat.dim()).collect();
                let s = steklov_discretize(&cfg.phantom, &lat)?;
                t.push(vec![h, discrete_mixed_sum(&s, &axes)?, phantom_mixed_norm_sq(ph, &lat, &axes)])?;
            }
            let finest = &t.rows[t.rows.len().saturating_sub(2)..];
            let pass = finest.iter().all(|r| r[1] <= (1.0 + STEKLOV_EPS) * r[2]);
            ("steklov", t, pass, format!("eps = {STEKLOV_EPS} at the two finest levels"))
        }
        CheckKind::Pmap => {
            let mut hs = levels(cfg)?;
            hs.sort_by(|a, b| b.total_cmp(a));
            let mut t = Table::new(&["h", "continuous_sq", "discrete_sq", "quotient"]);
            for &h in &hs {
                let lat = lattice(cfg, h)?;
                let s = sigma(cfg, &lat)?;
                let cont = tilde_h1_norm_continuous(&s, Region::Domain)?.powi(2);
                let disc = discrete_norm_sq(&s, NormKind::TildeH1);
                t.push(vec![h, cont, disc, (cont - disc) / h])?;
            }
            let q = t.column("quotient").unwrap();
            ("pmap", t, pmap_stable(&q), "quotients bounded by a constant stable within 2x".to_string())
        }
        CheckKind::Gradient => {
            let lat = lattice(cfg, cfg.step()?)?;
            let pattern = cfg.need_pattern()?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let c = random_admissible(&lat, &cfg.params, 1.0, &mut rng)?;
            let meas = match &cfg.measurement {
                Some(m) => m.clone(),
                None => Measurement::new(vec![0.0; c.voltages.len()])?,
            };
            let rows = gradient_check(&c, pattern, &meas, cfg.params.beta, cfg.directions, 1e-5, cfg.seed, cfg.solver_tol)?;
            let mut t = Table::new(&["direction", "adjoint", "finite_difference", "relative_error"]);
            for (k, r) in rows.iter().enumerate() {
                t.push(vec![k as f64, r.adjoint, r.finite_difference, r.relative_error])?;
            }
            let worst = rows.iter().map(|r| r.relative_error).fold(0.0, f64::max);
            ("gradient", t, worst <= 1e-6, format!("max relative error {worst:e}"))
        }
    };
    write_table(out, &format!("check_{name}.csv"), &table)?;
    let mut text = String::new();
    writeln!(text, "{name}: {} ({note})", if pass { "PASS" } else { "FAIL" }).unwrap();
    write(out, &format!("check_{name}.txt"), &text)?;
    print!("{text}");
    Ok(if pass { Status::Ok } else { Status::CheckFailed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convergence::ConvergenceReport;

    fn base() -> String {
        "domain.kind = rect\ndomain.w1 = 1\ndomain.w2 = 1\n\
         electrodes[1].edge = left\nelectrodes[1].a = 0.25\nelectrodes[1].b = 0.75\nelectrodes[1].Z = 1\n\
         electrodes[2].edge = right\nelectrodes[2].a = 0.25\nelectrodes[2].b = 0.75\nelectrodes[2].Z = 1\n\
         pattern.I = 1, -1\nvoltages.U = 1, -1\n"
            .to_string()
    }

    fn cfg(extra: &str) -> RunConfig {
        RunConfig::parse(&format!("{}{extra}", base()), Path::new(".")).unwrap()
    }

    #[test]
    fn forward_writes_three_round_trippable_files() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg("grid.h = 0.125\n");
        assert_eq!(forward(&c, dir.path()).unwrap(), Status::Ok);
        let lat = lattice(&c, 0.125).unwrap();
        let text = std::fs::read_to_string(dir.path().join("state.csv")).unwrap();
        let state = GridFunction::from_table(lat, &text).unwrap();
        assert_eq!(state.to_table(), text);
        for f in ["solve_log.csv", "cost_log.csv"] {
            let t = Table::read(&dir.path().join(f)).unwrap();
            assert_eq!(t.to_csv(), std::fs::read_to_string(dir.path().join(f)).unwrap());
        }
        // sigma.file feeds the written state back in as a conductivity
        let sfile = dir.path().join("sigma.csv");
        std::fs::write(&sfile, GridFunction::constant(lattice(&c, 0.125).unwrap(), 2.0).to_table()).unwrap();
        let c2 = cfg(&format!("grid.h = 0.125\nsigma.file = {}\n", sfile.display()));
        assert_eq!(forward(&c2, &dir.path().join("b")).unwrap(), Status::Ok);
    }

    #[test]
    fn invert_from_truth_stops_immediately() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg("grid.h = 0.25\nphantom = bump\noptimizer.init = truth\nmeasurement.refine = 1\noptimizer.cost_tol = 1e-16\n");
        assert_eq!(invert(&c, dir.path()).unwrap(), Status::Ok);
        let t = Table::read(&dir.path().join("trace.csv")).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!(t.rows[0][1] < 1e-16);
    }

    #[test]
    fn invert_rejects_tiny_budget() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg("grid.h = 0.25\nparams.R = 0.1\n");
        let e = invert(&c, dir.path()).unwrap_err();
        assert!(matches!(e, EitError::InfeasibleBase { .. }));
        assert_eq!(exit_code(&e), EXIT_CONFIG);
    }

    #[test]
    fn study_outputs_and_vacuous_single_level() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg("grid.h_list = 0.25\nstudy.data = reference\n");
        assert_eq!(study(&c, dir.path()).unwrap(), Status::Ok);
        let rep = ConvergenceReport::from_table(&Table::read(&dir.path().join("report.csv")).unwrap()).unwrap();
        assert_eq!(rep.verdict("l2_err_Q_decreasing"), None);
        let text = std::fs::read_to_string(dir.path().join("verdicts.txt")).unwrap();
        assert_eq!(text, rep.verdict_text());
        let bad = cfg("grid.h_list = 0.25\ngrid.h_ref = 0.25\nstudy.data = reference\n");
        assert_eq!(exit_code(&study(&bad, dir.path()).unwrap_err()), EXIT_CONFIG);
    }

    #[test]
    fn checks_pass_on_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg("grid.h = 0.25\ngrid.h_list = 0.25, 0.125, 0.0625\nphantom = bump\ncheck.samples = 5\n");
        for k in [CheckKind::Energy, CheckKind::Steklov, CheckKind::Pmap, CheckKind::Gradient] {
            assert_eq!(check(k, &c, dir.path()).unwrap(), Status::Ok, "{k:?}");
        }
        let constant = cfg("grid.h = 0.25\n");
        assert!(matches!(check(CheckKind::Steklov, &constant, dir.path()), Err(EitError::Config(_))));
    }
}
