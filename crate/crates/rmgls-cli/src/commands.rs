//! Subcommand bodies: `solve`, `adapt`, `ls-demo`, `oracle-check`, `sweep`.

use crate::config::{self, ModeKind, ProblemKind, RunConfig, SweepGrid};
use crate::output;
use crate::CliError;
use rmgls::cycle::{
    initial_guess, rank_adaptive_solve, solve_with_reference, ConvergenceRecord, LevelStack,
};
use rmgls::demo::{run_demo, DemoConfig, QuadraticDemo};
use rmgls::factored::FactoredMatrix;
use rmgls::geometry::{
    inverse_retract, project, retract, riemannian_gradient, tangent_inner, TangentVector,
};
use rmgls::linesearch::LineSearchConfig;
use rmgls::oracle::{best_rank_k_error, err_w, lyapunov_residual_dense, solve_lyapunov_dense};
use rmgls::problems::{CostFunction, Problem};
use rmgls::random::{random_factored, seeded_rng};
use rmgls::transfer::{GridLevel, TransferPair, TransferScheme};
use std::path::{Path, PathBuf};

/// Runs one configuration and writes its result files under `out`.
fn run_one(
    command: &str,
    cfg: &RunConfig,
    out: Option<&Path>,
) -> Result<ConvergenceRecord, CliError> {
    let problem = cfg.problem().map_err(|e| CliError::Run(e.to_string()))?;
    let stack = LevelStack::new(&problem, cfg.coarse_level, cfg.transfer.into())
        .map_err(|e| CliError::Run(e.to_string()))?;
    let cycle_cfg = cfg.cycle_config();
    cycle_cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let reference = if cfg.oracle_enabled() {
        let grid = problem.grid();
        let gamma = problem
            .gamma()
            .to_dense()
            .map_err(|e| CliError::Run(e.to_string()))?;
        match cfg.problem {
            ProblemKind::Lyapunov => {
                Some(solve_lyapunov_dense(grid, &gamma).map_err(|e| CliError::Run(e.to_string()))?)
            }
            // The nonlinear reference needs a damped Newton iteration that is
            // only worthwhile in the verification suite; err-W stays empty.
            ProblemKind::Nonlinear => None,
        }
    } else {
        None
    };

    let record = if command == "adapt" {
        let (_, record) =
            rank_adaptive_solve(&stack, &cycle_cfg, &cfg.stages(), reference.as_ref())
                .map_err(|e| CliError::Run(e.to_string()))?;
        record
    } else {
        let x0 = initial_guess(problem.grid(), cfg.rank, cfg.seed)
            .map_err(|e| CliError::Run(e.to_string()))?;
        let (_, record) = solve_with_reference(&stack, &x0, &cycle_cfg, reference.as_ref())
            .map_err(|e| CliError::Run(e.to_string()))?;
        record
    };

    if let Some(dir) = out {
        output::write_convergence_csv(&dir.join("convergence.csv"), &record)
            .map_err(|e| CliError::Run(format!("writing convergence.csv: {e}")))?;
        let summary = output::summarize(command, cfg, &record);
        output::write_json(&dir.join("summary.json"), &summary)
            .map_err(|e| CliError::Run(format!("writing summary.json: {e}")))?;
    }
    Ok(record)
}

fn report(cfg: &RunConfig, record: &ConvergenceRecord, out: Option<&Path>) {
    let last = record.rows.last().expect("finished runs have rows");
    let err_w = last
        .err_w
        .map(|v| format!(" err-W {v:.3e}"))
        .unwrap_or_default();
    println!(
        "{:?} level {} rank {}: {} cycles, converged {}, R-grad {:.3e}, r {:.4e}{}{}",
        cfg.problem,
        cfg.fine_level,
        last.rank,
        record.cycles_run(),
        record.converged,
        last.r_grad,
        last.residual,
        err_w,
        out.map(|d| format!(" -> {}", d.display())).unwrap_or_default(),
    );
}

/// `solve`: one fixed-rank run.
pub fn solve(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let record = run_one("solve", cfg, out)?;
    report(cfg, &record, out);
    Ok(())
}

/// `adapt`: rank-continuation run over the configured schedule.
pub fn adapt(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let record = run_one("adapt", cfg, out)?;
    report(cfg, &record, out);
    Ok(())
}

/// `sweep`: the cross product of fine levels and ranks, one run per cell,
/// each written atomically to its own subdirectory.
pub fn sweep(cfg: &RunConfig, grid: &SweepGrid, out: Option<&Path>) -> Result<(), CliError> {
    let mut index = Vec::new();
    for &level in &grid.levels {
        for &rank in &grid.ranks {
            let mut cell = cfg.clone();
            cell.fine_level = level;
            cell.rank = rank;
            cell.validate().map_err(CliError::Usage)?;
            let name = format!(
                "{}_l{level}_k{rank}",
                match cell.problem {
                    ProblemKind::Lyapunov => "lyapunov",
                    ProblemKind::Nonlinear => "nonlinear",
                }
            );
            let cell_dir: Option<PathBuf> = out.map(|d| d.join(&name));
            let record = run_one("sweep", &cell, cell_dir.as_deref())?;
            report(&cell, &record, cell_dir.as_deref());
            let last = record.rows.last().expect("rows");
            index.push(serde_json::json!({
                "cell": name,
                "fine_level": level,
                "rank": rank,
                "converged": record.converged,
                "cycles": record.cycles_run(),
                "r_grad": last.r_grad,
                "r": last.residual,
                "err_w": last.err_w,
            }));
        }
    }
    if let Some(dir) = out {
        output::write_json(&dir.join("index.json"), &index)
            .map_err(|e| CliError::Run(format!("writing index.json: {e}")))?;
    }
    Ok(())
}

/// `ls-demo`: the dense quadratic steepest-descent demonstration contrasting
/// weak-Wolfe and approximate-Wolfe acceptance.
pub fn ls_demo(
    n: usize,
    cond: f64,
    seed: u64,
    mode: ModeKind,
    out: Option<&Path>,
) -> Result<(), CliError> {
    if n < 2 {
        return Err(CliError::Usage(format!("n must be at least 2, got {n}")));
    }
    if cond < 1.0 {
        return Err(CliError::Usage(format!(
            "condition number must be at least 1, got {cond}"
        )));
    }
    let demo_cfg = DemoConfig {
        n,
        cond,
        seed,
        line: LineSearchConfig { mode: mode.into(), ..LineSearchConfig::default() },
        ..DemoConfig::default()
    };
    let run = run_demo(&demo_cfg).map_err(|e| CliError::Run(e.to_string()))?;
    let last = run.history.last().expect("demo records the start");
    println!(
        "{mode:?} Wolfe on n={n}, cond={cond}: {} iterations, min relative gradient {:.3e}, {} evaluations",
        last.iter, run.min_rel_grad, run.total_fevals
    );
    if let Some(dir) = out {
        let problem = QuadraticDemo::new(n, cond, seed);
        output::write_demo_csv(&dir.join("convergence.csv"), &run, problem.f_star())
            .map_err(|e| CliError::Run(format!("writing convergence.csv: {e}")))?;
        let summary = output::DemoSummary {
            version: output::version_stamp(),
            schema: 1,
            command: "ls-demo".into(),
            n,
            cond,
            seed,
            mode: format!("{mode:?}").to_lowercase(),
            iterations: last.iter,
            min_rel_grad: run.min_rel_grad,
            total_fevals: run.total_fevals,
            fevals_to_grad_1e7: run.fevals_to_grad_norm(1e-7),
        };
        output::write_json(&dir.join("summary.json"), &summary)
            .map_err(|e| CliError::Run(format!("writing summary.json: {e}")))?;
    }
    Ok(())
}

/// One property of the `oracle-check` suite.
struct Check {
    name: &'static str,
    error: f64,
    tol: f64,
}

impl Check {
    fn passed(&self) -> bool {
        self.error <= self.tol
    }
}

/// `oracle-check`: dense-vs-factored verification at small levels, printing
/// one pass/fail line per property. `corrupt` injects an orthogonality
/// violation that the invariant check must catch (a self-test of the suite).
pub fn oracle_check(level: u32, corrupt: bool) -> Result<(), CliError> {
    const CHECK_CAP: u32 = 5;
    if level > CHECK_CAP {
        return Err(CliError::Usage(format!(
            "oracle-check is a dense verification and supports levels up to \
             {CHECK_CAP} (n = {}); got level {level}",
            (1usize << CHECK_CAP) - 1
        )));
    }
    let grid = GridLevel::new(level).map_err(|e| CliError::Usage(e.to_string()))?;
    let n = grid.n();
    let mut rng = seeded_rng(7);
    let mut checks: Vec<Check> = Vec::new();

    // Dense reference solution and its residual.
    let lyapunov = Problem::lyapunov(grid).map_err(|e| CliError::Run(e.to_string()))?;
    let gamma = lyapunov
        .gamma()
        .to_dense()
        .map_err(|e| CliError::Run(e.to_string()))?;
    let reference =
        solve_lyapunov_dense(grid, &gamma).map_err(|e| CliError::Run(e.to_string()))?;
    checks.push(Check {
        name: "reference-residual",
        error: lyapunov_residual_dense(grid, &reference.w_star, &gamma),
        tol: 1e-10,
    });

    // Factored residual against the dense residual of the same point.
    let x = random_factored(n, n, 4, &mut rng).map_err(|e| CliError::Run(e.to_string()))?;
    {
        let dense_x = x.to_dense().map_err(|e| CliError::Run(e.to_string()))?;
        let dense_r = grid.h().powi(2) * lyapunov_residual_dense(grid, &dense_x, &gamma);
        let fact_r = lyapunov
            .scaled_residual(&x)
            .map_err(|e| CliError::Run(e.to_string()))?;
        checks.push(Check {
            name: "residual-crosscheck",
            error: (dense_r - fact_r).abs() / dense_r.max(1e-300),
            tol: 1e-10,
        });
    }

    // Riemannian gradient against a retracted finite difference, for both
    // problems.
    let nonlinear =
        Problem::nonlinear(grid, 10.0).map_err(|e| CliError::Run(e.to_string()))?;
    for (name, problem) in [
        ("gradient-fd-lyapunov", &lyapunov),
        ("gradient-fd-nonlinear", &nonlinear),
    ] {
        let error = gradient_fd_error(problem, &x).map_err(CliError::Run)?;
        checks.push(Check { name, error, tol: 1e-6 });
    }

    // Truncation error must be nonincreasing in the rank.
    {
        let mut worst: f64 = 0.0;
        let mut prev = f64::INFINITY;
        for k in 1..=8 {
            let e = best_rank_k_error(&reference.w_star, k);
            worst = worst.max(e - prev);
            prev = e;
        }
        checks.push(Check { name: "truncation-monotone", error: worst, tol: 0.0 });
    }

    // err-W of the reference against itself is zero.
    {
        let w_fact = FactoredMatrix::from_dense(&reference.w_star, Some(n), 0.0)
            .map_err(|e| CliError::Run(e.to_string()))?;
        let error = err_w(&w_fact, &reference).map_err(|e| CliError::Run(e.to_string()))?;
        checks.push(Check { name: "err-w-self", error, tol: 1e-12 });
    }

    // Retraction round trip: R_x(R_x^{-1}(y)) = y.
    {
        let xi = random_tangent(&x, 1e-2, &mut rng).map_err(CliError::Run)?;
        let y = retract(&x, &xi).map_err(|e| CliError::Run(e.to_string()))?;
        let back = inverse_retract(&x, &y).map_err(|e| CliError::Run(e.to_string()))?;
        let y2 = retract(&x, &back).map_err(|e| CliError::Run(e.to_string()))?;
        let diff = (y.to_dense().map_err(|e| CliError::Run(e.to_string()))?
            - y2.to_dense().map_err(|e| CliError::Run(e.to_string()))?)
        .norm();
        checks.push(Check { name: "retraction-roundtrip", error: diff, tol: 1e-9 });
    }

    // Adjointness of the transpose-paired tangent transfers.
    if level >= 3 {
        let error = transfer_adjoint_error(grid, &mut rng).map_err(CliError::Run)?;
        checks.push(Check { name: "transfer-adjoint", error, tol: 1e-10 });
    }

    // Factor orthogonality of a freshly drawn point; with `corrupt` the
    // factors are perturbed first and the check must fail.
    {
        let (u, v) = if corrupt {
            let mut u = x.u().clone();
            u[(0, 0)] += 1e-6;
            (u, x.v().clone())
        } else {
            (x.u().clone(), x.v().clone())
        };
        let k = u.ncols();
        let eye = nalgebra::DMatrix::<f64>::identity(k, k);
        let err_u = (u.transpose() * &u - &eye).norm();
        let err_v = (v.transpose() * &v - &eye).norm();
        checks.push(Check {
            name: "factor-orthogonality",
            error: err_u.max(err_v),
            tol: 1e-12,
        });
    }

    let mut failures = 0;
    for check in &checks {
        let status = if check.passed() { "PASS" } else { "FAIL" };
        if !check.passed() {
            failures += 1;
        }
        println!(
            "[{status}] {:<24} error {:.3e} (tolerance {:.1e})",
            check.name, check.error, check.tol
        );
    }
    if failures > 0 {
        return Err(CliError::Run(format!(
            "{failures} of {} properties failed at level {level}",
            checks.len()
        )));
    }
    println!("all {} properties passed at level {level}", checks.len());
    Ok(())
}

/// |φ'(0) − (φ(t) − φ(0))/t| with the central second-order correction, as a
/// relative error; `t` is sized for O(t²) truncation above roundoff.
fn gradient_fd_error(problem: &Problem, x: &FactoredMatrix) -> Result<f64, String> {
    let stringify = |e: rmgls::Error| e.to_string();
    let mut rng = seeded_rng(11);
    let xi = random_tangent(x, 1.0, &mut rng)?;
    let egrad = problem.euclidean_gradient(x).map_err(stringify)?;
    let grad = riemannian_gradient(x, &egrad).map_err(stringify)?;
    let dphi0 = tangent_inner(&grad, &xi).map_err(stringify)?;
    let t = 1e-6;
    let fp = problem.value(&retract(x, &xi.scaled(t)).map_err(stringify)?).map_err(stringify)?;
    let fm = problem.value(&retract(x, &xi.scaled(-t)).map_err(stringify)?).map_err(stringify)?;
    let fd = (fp - fm) / (2.0 * t);
    Ok((fd - dphi0).abs() / dphi0.abs().max(1.0))
}

fn random_tangent(
    x: &FactoredMatrix,
    scale: f64,
    rng: &mut impl rand::Rng,
) -> Result<TangentVector, String> {
    let stringify = |e: rmgls::Error| e.to_string();
    let z = random_factored(x.nrows(), x.ncols(), x.rank(), rng).map_err(stringify)?;
    let xi = project(x, &z.as_raw()).map_err(stringify)?;
    Ok(xi.scaled(scale / xi.norm().max(1e-300)))
}

/// ⟨restrict ξ, η⟩ vs ⟨ξ, interpolate η⟩ under the transpose-paired scheme.
fn transfer_adjoint_error(fine: GridLevel, rng: &mut impl rand::Rng) -> Result<f64, String> {
    let stringify = |e: rmgls::Error| e.to_string();
    let pair = TransferPair::down_from(fine, TransferScheme::TransposePaired).map_err(stringify)?;
    let coarse = pair.coarse();
    let xf = random_factored(fine.n(), fine.n(), 3, rng).map_err(stringify)?;
    let xc = pair.restrict_point(&xf).map_err(stringify)?;
    let xi = {
        let z = random_factored(fine.n(), fine.n(), 3, rng).map_err(stringify)?;
        project(&xf, &z.as_raw()).map_err(stringify)?
    };
    let eta = {
        let z = random_factored(coarse.n(), coarse.n(), 3, rng).map_err(stringify)?;
        project(&xc, &z.as_raw()).map_err(stringify)?
    };
    let r_xi = pair.restrict_tangent(&xi, &xf, &xc).map_err(stringify)?;
    let p_eta = pair.interpolate_tangent(&eta, &xc, &xf).map_err(stringify)?;
    let lhs = tangent_inner(&r_xi, &eta).map_err(stringify)?;
    let rhs = tangent_inner(&xi, &p_eta).map_err(stringify)?;
    Ok((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300))
}

/// Known configuration+grid presets; see `config::preset`.
pub fn load_preset(name: &str) -> Result<(RunConfig, Option<SweepGrid>), CliError> {
    config::preset(name).map_err(CliError::Usage)
}
