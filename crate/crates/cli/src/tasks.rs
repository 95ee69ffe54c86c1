//! Execution of one configured task.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use combforge::evolve::{diffusive_experiment, evolve_perturbed, random_perturbation, tile, DiffusiveOpts, EvolveOpts};
use combforge::grid::Grid;
use combforge::io;
use combforge::spectra::{small_eigs_checked, sweep, xi_grid, SweepOpts};
use combforge::stationary::{continue_in_period, NewtonOpts, Solution};
use combforge::verify::{solve_template, CriterionReport, Suite, VerifyConfig};
use combforge::SolitonTemplate;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{ConfigError, RunConfig, Task};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes files into the output directory and remembers their digests.
pub struct Outputs {
    dir: PathBuf,
    pub digests: BTreeMap<String, String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), digests: BTreeMap::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.digests.insert(name.to_string(), sha256_hex(contents.as_bytes()));
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

/// Raised by `verify` when a criterion fails; maps to exit code 2.
#[derive(Debug)]
pub struct VerificationFailed {
    pub id: u32,
    pub title: String,
}

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "criterion {} failed: {}", self.id, self.title)
    }
}

impl std::error::Error for VerificationFailed {}

/// Everything the manifest needs to know about a finished task.
#[derive(Default)]
pub struct TaskRecord {
    pub inputs: BTreeMap<String, String>,
    pub results: Value,
}

pub fn execute(cfg: &RunConfig, out: &mut Outputs, record: &mut TaskRecord) -> Result<()> {
    match cfg.task {
        Task::Solve => {
            let sol = obtain_solution(cfg, record)?;
            write_solution(out, &sol, "solution")?;
            record.results = solution_summary(&sol);
        }
        Task::Continue => {
            let start = obtain_solution(cfg, record)?;
            let g = start.field.grid;
            let grids = cfg
                .options
                .periods
                .iter()
                .map(|&l| {
                    let n = 2 * ((g.n as f64 * l / g.period / 2.0).round() as usize).max(2);
                    Grid::new(l, n)
                })
                .collect::<combforge::Result<Vec<_>>>()?;
            let sols = continue_in_period(&start, &grids, &NewtonOpts::default())?;
            let rows: Vec<Vec<f64>> = sols
                .iter()
                .map(|s| {
                    let c = s.field.grid.n / 2;
                    vec![s.period, s.field.grid.n as f64, s.residual_norm, s.field.sup_norm(), s.field.u1[c], s.field.u2[c]]
                })
                .collect();
            let header = ["period", "n", "residual", "sup_norm", "u1_center", "u2_center"];
            out.write("continuation.csv", &io::csv_table(&header, rows.iter().map(|r| r.as_slice())))?;
            let last = sols.last().expect("at least one period");
            write_solution(out, last, "solution")?;
            record.results = json!({
                "periods": sols.iter().map(|s| s.period).collect::<Vec<_>>(),
                "residuals": sols.iter().map(|s| s.residual_norm).collect::<Vec<_>>(),
                "final": solution_summary(last),
            });
        }
        Task::Sweep => {
            let sol = obtain_solution(cfg, record)?;
            let sw = sweep(&sol, &xi_grid(cfg.options.xi_count), &SweepOpts::default())?;
            out.write("sweep.csv", &io::sweep_csv(&sw))?;
            out.write("sweep.json", &io::sweep_json(&sw)?)?;
            let rows: Vec<Vec<f64>> = sw.critical_curve.iter().map(|p| vec![p.xi, p.lambda.re, p.lambda.im]).collect();
            out.write("critical_curve.csv", &io::csv_table(&["xi", "re", "im"], rows.iter().map(|r| r.as_slice())))?;
            if cfg.options.plot {
                out.write("spectrum.gp", &plot_spectrum())?;
            }
            record.results = json!({
                "verdict": sw.verdict,
                "curve_amplitude": sw.curve_amplitude(),
                "residual_norm": sol.residual_norm,
            });
        }
        Task::SmallEigs => {
            let sol = obtain_solution(cfg, record)?;
            let r = small_eigs_checked(&sol, cfg.options.delta0, &NewtonOpts::default())?;
            out.write("small_eigs.json", &io::to_json(&r)?)?;
            record.results = serde_json::to_value(&r)?;
        }
        Task::Evolve => {
            let sol = obtain_solution(cfg, record)?;
            let o = &cfg.options;
            let big = tile(&sol.field, o.copies)?.grid;
            let pert = random_perturbation(big, 4 * o.copies, o.perturbation, o.seed);
            let eo = EvolveOpts { dt: o.dt, ..EvolveOpts::default() };
            let trace = evolve_perturbed(&sol, &pert, o.copies, o.t_end, &eo)?;
            out.write("trace.csv", &io::trace_csv(&trace))?;
            if o.plot {
                out.write("trace.gp", &plot_trace("trace.csv"))?;
            }
            let fit = trace.log_linear_fit(0.5 * o.t_end, o.t_end);
            record.results = json!({
                "decay_rate": fit.map(|f| f.0),
                "decay_r2": fit.map(|f| f.1),
                "final_mod_l2": trace.perturbation_l2.last(),
                "final_raw_l2": trace.raw_l2.last(),
                "final_gamma": trace.gamma.last(),
            });
        }
        Task::Diffusive => {
            let sol = obtain_solution(cfg, record)?;
            let o = &cfg.options;
            let mut dopts = DiffusiveOpts::default();
            dopts.evolve.dt = o.dt;
            let r = diffusive_experiment(&sol, o.copies, o.seed, o.t_end, &dopts)?;
            out.write("diffusive.csv", &io::diffusive_csv(&r))?;
            if o.plot {
                out.write("diffusive.gp", &plot_trace("diffusive.csv"))?;
            }
            record.results = json!({
                "fitted_exponent_raw": finite_or_null(r.fitted_exponent_raw),
                "fitted_exponent_mod": finite_or_null(r.fitted_exponent_mod),
                "degenerate": r.degenerate,
                "max_tail_fraction": r.max_tail_fraction,
            });
        }
        Task::Comb => {
            let sol = obtain_solution(cfg, record)?;
            let comb = sol.field.comb();
            out.write("comb.csv", &io::comb_csv(&comb))?;
            if cfg.options.plot {
                out.write("comb.gp", &plot_comb())?;
            }
            let peak = comb.log_magnitude.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            record.results = json!({ "modes": comb.wavenumbers.len(), "peak_log_magnitude": peak });
        }
        Task::Verify => {
            let reports = run_verify(cfg, |r| println!("{}", r.line()));
            out.write("verify.json", &io::to_json(&reports)?)?;
            let passed = reports.iter().filter(|r| r.passed).count();
            println!("{passed}/{} criteria passed", reports.len());
            record.results = json!({
                "passed": passed,
                "total": reports.len(),
                "criteria": reports.iter().map(|r| json!({"id": r.id, "passed": r.passed, "detail": r.detail})).collect::<Vec<_>>(),
            });
            if let Some(first) = reports.iter().find(|r| !r.passed) {
                return Err(VerificationFailed { id: first.id, title: first.title.clone() }.into());
            }
        }
    }
    Ok(())
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub fn run_verify(cfg: &RunConfig, on_report: impl FnMut(&CriterionReport)) -> Vec<CriterionReport> {
    let vc = VerifyConfig {
        params: cfg.params,
        branch: cfg.options.branch,
        seed: cfg.options.seed,
        criteria: cfg.options.criteria.clone(),
    };
    Suite::new(vc).run_all(on_report)
}

fn obtain_solution(cfg: &RunConfig, record: &mut TaskRecord) -> Result<Solution> {
    if let Some(path) = &cfg.options.solution {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("options.solution", format!("cannot read {}: {e}", path.display())))?;
        record.inputs.insert(path.display().to_string(), sha256_hex(text.as_bytes()));
        let sol = io::solution_from_json(&text)
            .map_err(|e| ConfigError::new("options.solution", format!("not a solution file: {e}")))?;
        return Ok(sol);
    }
    let g = cfg.grid.expect("validated");
    let grid = Grid::new(g.period, g.n)?;
    let centers = cfg.options.centers.clone();
    let tpl = move |theta: f64| {
        if centers == [0.0] {
            SolitonTemplate::single(theta)
        } else {
            let include = centers.contains(&0.0);
            let rest: Vec<f64> = centers.iter().copied().filter(|c| *c != 0.0).collect();
            SolitonTemplate { theta, centers: rest, include_center_pulse: include }
        }
    };
    Ok(solve_template(&cfg.params, tpl, cfg.options.branch, grid)?)
}

fn write_solution(out: &mut Outputs, sol: &Solution, stem: &str) -> Result<()> {
    out.write(&format!("{stem}.csv"), &io::solution_csv(sol))?;
    out.write(&format!("{stem}.json"), &io::solution_json(sol)?)?;
    Ok(())
}

fn solution_summary(sol: &Solution) -> Value {
    json!({
        "residual_norm": sol.residual_norm,
        "is_even": sol.is_even,
        "pulse_centers": sol.pulse_centers,
        "period": sol.period,
        "n": sol.field.grid.n,
    })
}

fn plot_comb() -> String {
    "set datafile separator ','\nset xlabel 'k'\nset ylabel 'log |u_k|'\n\
     plot 'comb.csv' using 1:2 skip 1 with impulses title 'comb'\n"
        .to_string()
}

fn plot_spectrum() -> String {
    "set datafile separator ','\nset xlabel 'Re lambda'\nset ylabel 'Im lambda'\n\
     plot 'sweep.csv' using 2:3 skip 1 with points pt 7 ps 0.3 title 'Bloch spectrum'\n"
        .to_string()
}

fn plot_trace(file: &str) -> String {
    format!(
        "set datafile separator ','\nset logscale y\nset xlabel 't'\n\
         plot '{file}' using 1:2 skip 1 with lines title 'raw', '{file}' using 1:3 skip 1 with lines title 'modulated'\n"
    )
}
