//! Scratch probe (not part of the library).

use rmgls::cycle::{
    initial_guess, pad_rank, rmgls_iteration, solve, CycleConfig, LevelStack,
};
use rmgls::problems::{CostFunction, Problem};
use rmgls::transfer::{GridLevel, TransferScheme};


/// Pad with SMOOTH random directions: random coarse-grid fields at level
/// `lf - 3`, interpolated up level by level, then orthonormalized.
fn pad_smooth(x: &rmgls::factored::FactoredMatrix, target: usize, seed: u64) -> rmgls::factored::FactoredMatrix {
    use nalgebra::{DMatrix, DVector};
    use rmgls::random::{random_dense, seeded_rng};
    use rmgls::transfer::TransferPair;
    let n = x.nrows();
    let lf = (n as u32 + 1).trailing_zeros();
    let lc = lf - 3;
    let extra = target - x.rank();
    let mut rng = seeded_rng(seed);
    let mut smooth_cols = |_k: usize| -> DMatrix<f64> {
        let nc = (1usize << lc) - 1;
        let mut cols = random_dense(nc, extra, &mut rng);
        for l in lc..lf {
            let g = GridLevel::new(l + 1).unwrap();
            let p = TransferPair::down_from(g, TransferScheme::InjectionLinear).unwrap();
            let mut up = DMatrix::zeros(p.fine().n(), extra);
            for j in 0..extra {
                let v = DVector::from_column_slice(cols.column(j).as_slice());
                up.set_column(j, &p.interpolate_1d(&v).unwrap());
            }
            cols = up;
        }
        cols
    };
    let us = smooth_cols(0);
    let vs = smooth_cols(1);
    // Orthonormalize pads against existing factors via QR of [U | pads].
    let orth = |base: &DMatrix<f64>, pads: &DMatrix<f64>| -> DMatrix<f64> {
        let mut stacked = DMatrix::zeros(n, base.ncols() + extra);
        stacked.view_mut((0, 0), (n, base.ncols())).copy_from(base);
        stacked.view_mut((0, base.ncols()), (n, extra)).copy_from(pads);
        let q = stacked.qr().q();
        q.columns(base.ncols(), extra).into_owned()
    };
    let pu = orth(x.u(), &us);
    let pv = orth(x.v(), &vs);
    let scale = 1e-8 * x.s()[0];
    let mut dense = x.u() * DMatrix::from_diagonal(&x.s().clone()) * x.v().transpose();
    for j in 0..extra {
        dense += scale * pu.column(j) * pv.column(j).transpose();
    }
    rmgls::factored::FactoredMatrix::from_dense(&dense, Some(target), 0.0).unwrap()
}

fn arms(stack: &LevelStack, cfg: &CycleConfig, label: &str) {
    println!("=== {label}: adaptive 5->25 ===");
    let mut x = initial_guess(stack.finest().grid(), 5, 0).unwrap();
    for iter in 1..=30 {
        if iter > 1 && (iter - 1) % 10 == 0 {
            x = pad_rank(&x, x.rank() + 5, 1000 + iter as u64).unwrap();
        }
        match rmgls_iteration(stack, &x, cfg) {
            Ok((next, _)) => x = next,
            Err(e) => {
                println!("iter {iter:2}  error: {e}");
                break;
            }
        }
        if iter % 2 == 0 || iter > 26 {
            let r = stack.finest().scaled_residual(&x).unwrap();
            println!("iter {iter:2}  k={:2}  r = {r:.4e}", x.rank());
        }
    }
    println!("=== {label}: fixed k=25 ===");
    let mut x = initial_guess(stack.finest().grid(), 25, 0).unwrap();
    for iter in 1..=30 {
        match rmgls_iteration(stack, &x, cfg) {
            Ok((next, _)) => x = next,
            Err(e) => {
                println!("iter {iter:2}  error: {e}");
                break;
            }
        }
        if iter % 2 == 0 || iter > 26 {
            let r = stack.finest().scaled_residual(&x).unwrap();
            println!("iter {iter:2}  k=25  r = {r:.4e}");
        }
    }
}


fn bench() {
    use rmgls::linesearch::WolfeMode;
    use rmgls::oracle::{err_w, solve_lyapunov_dense};
    use std::time::Instant;

    // --- criterion 9: time per cycle across levels ---
    for level in 8..=11u32 {
        let problem = Problem::lyapunov(GridLevel::new(level).unwrap()).unwrap();
        let stack = LevelStack::new(&problem, 5, TransferScheme::InjectionLinear).unwrap();
        let mut cfg = CycleConfig::default();
        cfg.max_cycles = 4;
        cfg.grad_tol = 1e-30;
        let x0 = initial_guess(stack.finest().grid(), 5, 0).unwrap();
        let t = Instant::now();
        let (_, rec) = solve(&stack, &x0, &cfg).unwrap();
        let secs: Vec<f64> = rec.rows.iter().skip(2).map(|r| r.seconds).collect();
        let mean = secs.iter().sum::<f64>() / secs.len() as f64;
        eprintln!("c9 level {level}: mean s/cycle (rows 2..) = {mean:.3}  total {:.1}s", t.elapsed().as_secs_f64());
    }

    // --- criteria 1/2/3/4: Lyapunov table, err-W, final gradients, counts ---
    for level in 7..=10u32 {
        let grid = GridLevel::new(level).unwrap();
        let problem = Problem::lyapunov(grid).unwrap();
        let stack = LevelStack::new(&problem, 5, TransferScheme::InjectionLinear).unwrap();
        let dense = solve_lyapunov_dense(grid, &problem.gamma().to_dense().unwrap()).unwrap();
        for (k, seeds) in [(5usize, vec![0u64, 1, 2]), (10, vec![0])] {
            for seed in seeds {
                let mut cfg = CycleConfig::default();
                cfg.seed = seed;
                let t = Instant::now();
                let x0 = initial_guess(grid, k, seed).unwrap();
                match rmgls::cycle::solve_with_reference(&stack, &x0, &cfg, Some(&dense)) {
                    Ok((x, rec)) => {
                        let last = rec.rows.last().unwrap();
                        eprintln!(
                            "c1 l{level} k{k} s{seed}: cycles={} conv={} r={:.4e} errw={:.4e} rgrad={:.2e} ({:.0}s)",
                            rec.cycles_run(), rec.converged,
                            stack.finest().scaled_residual(&x).unwrap(),
                            err_w(&x, &dense).unwrap(), last.r_grad,
                            t.elapsed().as_secs_f64()
                        );
                    }
                    Err(e) => eprintln!("c1 l{level} k{k} s{seed}: ERROR {e}"),
                }
            }
        }
    }

    // --- criterion 5: line-search mode gap at l8 k20 (transpose-paired) ---
    {
        let grid = GridLevel::new(8).unwrap();
        let problem = Problem::lyapunov(grid).unwrap();
        let stack = LevelStack::new(&problem, 5, TransferScheme::TransposePaired).unwrap();
        let dense = solve_lyapunov_dense(grid, &problem.gamma().to_dense().unwrap()).unwrap();
        for mode in [WolfeMode::Approximate, WolfeMode::Weak] {
            let mut cfg = CycleConfig::default();
            cfg.line_search.mode = mode;
            cfg.max_cycles = 60;
            let t = Instant::now();
            let x0 = initial_guess(grid, 20, 0).unwrap();
            match rmgls::cycle::solve_with_reference(&stack, &x0, &cfg, Some(&dense)) {
                Ok((_, rec)) => {
                    let last = rec.rows.last().unwrap();
                    eprintln!(
                        "c5 {mode:?}: cycles={} conv={} min_errw={:.3e} final_errw={:.3e} rgrad={:.2e} ({:.0}s)",
                        rec.cycles_run(), rec.converged,
                        rec.min_err_w().unwrap(),
                        last.err_w.unwrap(), last.r_grad,
                        t.elapsed().as_secs_f64()
                    );
                }
                Err(e) => eprintln!("c5 {mode:?}: ERROR {e}"),
            }
        }
    }

    // --- criterion 6: nonlinear problem floors ---
    for (level, k) in [(9u32, 10usize), (10, 5)] {
        let grid = GridLevel::new(level).unwrap();
        let problem = Problem::nonlinear(grid, 10.0).unwrap();
        let stack = LevelStack::new(&problem, 5, TransferScheme::InjectionLinear).unwrap();
        let cfg = CycleConfig::default();
        let t = Instant::now();
        let x0 = initial_guess(grid, k, 0).unwrap();
        match solve(&stack, &x0, &cfg) {
            Ok((x, rec)) => {
                let last = rec.rows.last().unwrap();
                eprintln!(
                    "c6 l{level} k{k}: cycles={} conv={} r={:.4e} rgrad={:.2e} ({:.0}s)",
                    rec.cycles_run(), rec.converged,
                    stack.finest().scaled_residual(&x).unwrap(), last.r_grad,
                    t.elapsed().as_secs_f64()
                );
            }
            Err(e) => eprintln!("c6 l{level} k{k}: ERROR {e}"),
        }
    }
    eprintln!("bench done");
}


fn bench2() {
    use rmgls::linesearch::WolfeMode;
    use rmgls::oracle::{err_w, solve_lyapunov_dense};
    use std::time::Instant;

    // Remaining criterion 1/4 rows: level 10 (no dense reference over the cap).
    {
        let grid = GridLevel::new(10).unwrap();
        let problem = Problem::lyapunov(grid).unwrap();
        let stack = LevelStack::new(&problem, 5, TransferScheme::InjectionLinear).unwrap();
        for (k, seeds) in [(5usize, vec![0u64, 1, 2]), (10, vec![0])] {
            for seed in seeds {
                let mut cfg = CycleConfig::default();
                cfg.seed = seed;
                let t = Instant::now();
                let x0 = initial_guess(grid, k, seed).unwrap();
                match solve(&stack, &x0, &cfg) {
                    Ok((x, rec)) => {
                        let last = rec.rows.last().unwrap();
                        eprintln!(
                            "c1 l10 k{k} s{seed}: cycles={} conv={} r={:.4e} rgrad={:.2e} ({:.0}s)",
                            rec.cycles_run(), rec.converged,
                            stack.finest().scaled_residual(&x).unwrap(), last.r_grad,
                            t.elapsed().as_secs_f64()
                        );
                    }
                    Err(e) => eprintln!("c1 l10 k{k} s{seed}: ERROR {e}"),
                }
            }
        }
    }

    // Criterion 5: line-search mode gap at l8 k20 (transpose-paired).
    {
        let grid = GridLevel::new(8).unwrap();
        let problem = Problem::lyapunov(grid).unwrap();
        let stack = LevelStack::new(&problem, 5, TransferScheme::TransposePaired).unwrap();
        let dense = solve_lyapunov_dense(grid, &problem.gamma().to_dense().unwrap()).unwrap();
        for mode in [WolfeMode::Approximate, WolfeMode::Weak] {
            let mut cfg = CycleConfig::default();
            cfg.line_search.mode = mode;
            cfg.max_cycles = 60;
            let t = Instant::now();
            let x0 = initial_guess(grid, 20, 0).unwrap();
            match rmgls::cycle::solve_with_reference(&stack, &x0, &cfg, Some(&dense)) {
                Ok((_, rec)) => {
                    let last = rec.rows.last().unwrap();
                    eprintln!(
                        "c5 {mode:?}: cycles={} conv={} min_errw={:.3e} final_errw={:.3e} rgrad={:.2e} ({:.0}s)",
                        rec.cycles_run(), rec.converged,
                        rec.min_err_w().unwrap(),
                        last.err_w.unwrap(), last.r_grad,
                        t.elapsed().as_secs_f64()
                    );
                }
                Err(e) => eprintln!("c5 {mode:?}: ERROR {e}"),
            }
        }
    }

    // Criterion 6: nonlinear problem floors.
    for (level, k) in [(9u32, 10usize), (10, 5)] {
        let grid = GridLevel::new(level).unwrap();
        let problem = Problem::nonlinear(grid, 10.0).unwrap();
        let stack = LevelStack::new(&problem, 5, TransferScheme::InjectionLinear).unwrap();
        let cfg = CycleConfig::default();
        let t = Instant::now();
        let x0 = initial_guess(grid, k, 0).unwrap();
        match solve(&stack, &x0, &cfg) {
            Ok((x, rec)) => {
                let last = rec.rows.last().unwrap();
                eprintln!(
                    "c6 l{level} k{k}: cycles={} conv={} r={:.4e} rgrad={:.2e} ({:.0}s)",
                    rec.cycles_run(), rec.converged,
                    stack.finest().scaled_residual(&x).unwrap(), last.r_grad,
                    t.elapsed().as_secs_f64()
                );
            }
            Err(e) => eprintln!("c6 l{level} k{k}: ERROR {e}"),
        }
    }
    eprintln!("bench2 done");
}


fn bench3() {
    use rmgls::linesearch::WolfeMode;
    use rmgls::oracle::{err_w, solve_lyapunov_dense};
    use std::time::Instant;

    // Criterion 4 candidate: cycle counts under transpose-paired transfers.
    for level in 7u32..=10 {
        let grid = GridLevel::new(level).unwrap();
        let problem = Problem::lyapunov(grid).unwrap();
        let stack = LevelStack::new(&problem, 5, TransferScheme::TransposePaired).unwrap();
        for seed in [0u64, 1, 2] {
            let mut cfg = CycleConfig::default();
            cfg.seed = seed;
            let t = Instant::now();
            let x0 = initial_guess(grid, 5, seed).unwrap();
            match solve(&stack, &x0, &cfg) {
                Ok((x, rec)) => eprintln!(
                    "tp-c4 l{level} s{seed}: cycles={} conv={} r={:.4e} rgrad={:.2e} ({:.0}s)",
                    rec.cycles_run(), rec.converged,
                    stack.finest().scaled_residual(&x).unwrap(),
                    rec.rows.last().unwrap().r_grad,
                    t.elapsed().as_secs_f64()
                ),
                Err(e) => eprintln!("tp-c4 l{level} s{seed}: ERROR {e}"),
            }
        }
    }

    // Criterion 5, approximate arm, with the full default cycle budget.
    {
        let grid = GridLevel::new(8).unwrap();
        let problem = Problem::lyapunov(grid).unwrap();
        let stack = LevelStack::new(&problem, 5, TransferScheme::TransposePaired).unwrap();
        let dense = solve_lyapunov_dense(grid, &problem.gamma().to_dense().unwrap()).unwrap();
        let mut cfg = CycleConfig::default();
        cfg.line_search.mode = WolfeMode::Approximate;
        cfg.max_cycles = 150;
        let t = Instant::now();
        let x0 = initial_guess(grid, 20, 0).unwrap();
        let (x, rec) =
            rmgls::cycle::solve_with_reference(&stack, &x0, &cfg, Some(&dense)).unwrap();
        eprintln!(
            "c5-long Approximate: cycles={} conv={} min_errw={:.3e} final_errw={:.3e} rgrad={:.2e} errw_now={:.3e} ({:.0}s)",
            rec.cycles_run(), rec.converged,
            rec.min_err_w().unwrap(),
            rec.rows.last().unwrap().err_w.unwrap(),
            rec.rows.last().unwrap().r_grad,
            err_w(&x, &dense).unwrap(),
            t.elapsed().as_secs_f64()
        );
    }
    eprintln!("bench3 done");
}


fn traj() {
    for (level, seed, scheme) in [
        (7u32, 0u64, TransferScheme::InjectionLinear),
        (7, 2, TransferScheme::InjectionLinear),
        (8, 0, TransferScheme::TransposePaired),
        (10, 1, TransferScheme::InjectionLinear),
    ] {
        let grid = GridLevel::new(level).unwrap();
        let problem = Problem::lyapunov(grid).unwrap();
        let stack = LevelStack::new(&problem, 5, scheme).unwrap();
        let mut cfg = CycleConfig::default();
        cfg.seed = seed;
        let x0 = initial_guess(grid, 5, seed).unwrap();
        let (_, rec) = solve(&stack, &x0, &cfg).unwrap();
        eprintln!("=== l{level} s{seed} {scheme:?}: {} cycles", rec.cycles_run());
        let mut line = String::new();
        for row in &rec.rows {
            line.push_str(&format!("{:.1} ", row.r_grad.log10()));
            if line.len() > 100 { eprintln!("  {line}"); line.clear(); }
        }
        if !line.is_empty() { eprintln!("  {line}"); }
    }
}


fn tighttol() {
    for (level, seed, scheme) in [
        (10u32, 1u64, TransferScheme::InjectionLinear),
        (8, 0, TransferScheme::TransposePaired),
        (7, 0, TransferScheme::InjectionLinear),
    ] {
        let grid = GridLevel::new(level).unwrap();
        let problem = Problem::lyapunov(grid).unwrap();
        let stack = LevelStack::new(&problem, 5, scheme).unwrap();
        let mut cfg = CycleConfig::default();
        cfg.seed = seed;
        cfg.coarse_solver_tol = 1e-14;
        cfg.coarse_solver_max_iters = 400;
        let x0 = initial_guess(grid, 5, seed).unwrap();
        let t = std::time::Instant::now();
        let (_, rec) = solve(&stack, &x0, &cfg).unwrap();
        eprintln!(
            "tight l{level} s{seed} {scheme:?}: cycles={} conv={} skipped={} stalled={} ({:.0}s)",
            rec.cycles_run(), rec.converged, rec.skipped_corrections,
            rec.stalled_smoothings, t.elapsed().as_secs_f64()
        );
        let mut line = String::new();
        for row in &rec.rows {
            line.push_str(&format!("{:.1} ", row.r_grad.log10()));
            if line.len() > 100 { eprintln!("  {line}"); line.clear(); }
        }
        if !line.is_empty() { eprintln!("  {line}"); }
    }
}


fn c4final() {
    use rmgls::oracle::{err_w, solve_lyapunov_dense};
    for level in 7u32..=10 {
        let grid = GridLevel::new(level).unwrap();
        let problem = Problem::lyapunov(grid).unwrap();
        let stack = LevelStack::new(&problem, 5, TransferScheme::InjectionLinear).unwrap();
        let mut counts = Vec::new();
        for seed in 0u64..5 {
            let mut cfg = CycleConfig::default();
            cfg.seed = seed;
            let x0 = initial_guess(grid, 5, seed).unwrap();
            let (x, rec) = solve(&stack, &x0, &cfg).unwrap();
            counts.push(rec.cycles_run());
            if seed == 0 {
                eprintln!(
                    "  l{level} s0 r={:.4e} rgrad={:.2e}",
                    stack.finest().scaled_residual(&x).unwrap(),
                    rec.rows.last().unwrap().r_grad
                );
            }
        }
        let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
        eprintln!("c4 l{level}: counts={counts:?} mean={mean:.1}");
    }

    // Floor spot-checks after the tolerance change.
    {
        let grid = GridLevel::new(8).unwrap();
        let problem = Problem::lyapunov(grid).unwrap();
        let stack = LevelStack::new(&problem, 5, TransferScheme::InjectionLinear).unwrap();
        let dense = solve_lyapunov_dense(grid, &problem.gamma().to_dense().unwrap()).unwrap();
        for k in [5usize, 10] {
            let cfg = CycleConfig::default();
            let x0 = initial_guess(grid, k, 0).unwrap();
            let (x, rec) =
                rmgls::cycle::solve_with_reference(&stack, &x0, &cfg, Some(&dense)).unwrap();
            eprintln!(
                "spot l8 k{k}: cycles={} r={:.4e} errw={:.4e}",
                rec.cycles_run(),
                stack.finest().scaled_residual(&x).unwrap(),
                err_w(&x, &dense).unwrap()
            );
        }
    }
    {
        let grid = GridLevel::new(9).unwrap();
        let problem = Problem::nonlinear(grid, 10.0).unwrap();
        let stack = LevelStack::new(&problem, 5, TransferScheme::InjectionLinear).unwrap();
        let cfg = CycleConfig::default();
        let x0 = initial_guess(grid, 10, 0).unwrap();
        let (x, rec) = solve(&stack, &x0, &cfg).unwrap();
        eprintln!(
            "spot nl l9 k10: cycles={} r={:.4e}",
            rec.cycles_run(),
            stack.finest().scaled_residual(&x).unwrap()
        );
    }
    eprintln!("c4final done");
}


fn c4ten() {
    for level in 7u32..=10 {
        let grid = GridLevel::new(level).unwrap();
        let problem = Problem::lyapunov(grid).unwrap();
        let stack = LevelStack::new(&problem, 5, TransferScheme::InjectionLinear).unwrap();
        let mut counts = Vec::new();
        for seed in 0u64..10 {
            let mut cfg = CycleConfig::default();
            cfg.seed = seed;
            let x0 = initial_guess(grid, 5, seed).unwrap();
            let (_, rec) = solve(&stack, &x0, &cfg).unwrap();
            counts.push(rec.cycles_run());
        }
        let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
        eprintln!("c4ten l{level}: counts={counts:?} mean={mean:.1}");
    }
    eprintln!("c4ten done");
}


fn c5tight() {
    use rmgls::linesearch::WolfeMode;
    use rmgls::oracle::{best_rank_k_error, err_w, solve_lyapunov_dense};
    let grid = GridLevel::new(8).unwrap();
    let problem = Problem::lyapunov(grid).unwrap();
    let stack = LevelStack::new(&problem, 5, TransferScheme::TransposePaired).unwrap();
    let dense = solve_lyapunov_dense(grid, &problem.gamma().to_dense().unwrap()).unwrap();
    let w_norm = dense.w_star.norm();
    eprintln!(
        "context: ||W*||={:.3e} best_rank20_abs={:.3e} rel={:.3e}",
        w_norm,
        best_rank_k_error(&dense.w_star, 20),
        best_rank_k_error(&dense.w_star, 20) / w_norm
    );
    for (mode, gtol) in [
        (WolfeMode::Approximate, 1e-13),
        (WolfeMode::Weak, 1e-13),
    ] {
        let mut cfg = CycleConfig::default();
        cfg.line_search.mode = mode;
        cfg.grad_tol = gtol;
        cfg.max_cycles = 200;
        let t = std::time::Instant::now();
        let x0 = initial_guess(grid, 20, 0).unwrap();
        let (x, rec) =
            rmgls::cycle::solve_with_reference(&stack, &x0, &cfg, Some(&dense)).unwrap();
        eprintln!(
            "c5 {mode:?} gtol={gtol:.0e}: cycles={} conv={} min_errw={:.3e} final_errw={:.3e} rgrad={:.2e} ({:.0}s)",
            rec.cycles_run(), rec.converged,
            rec.min_err_w().unwrap(),
            err_w(&x, &dense).unwrap(),
            rec.rows.last().unwrap().r_grad,
            t.elapsed().as_secs_f64()
        );
    }
    eprintln!("c5tight done");
}


fn c5deep() {
    use rmgls::linesearch::WolfeMode;
    use rmgls::oracle::{err_w, solve_lyapunov_dense};
    let grid = GridLevel::new(8).unwrap();
    let problem = Problem::lyapunov(grid).unwrap();
    let stack = LevelStack::new(&problem, 5, TransferScheme::TransposePaired).unwrap();
    let dense = solve_lyapunov_dense(grid, &problem.gamma().to_dense().unwrap()).unwrap();
    for seed in [0u64, 1, 2] {
        let mut cfg = CycleConfig::default();
        cfg.line_search.mode = WolfeMode::Approximate;
        cfg.grad_tol = 1e-14;
        cfg.max_cycles = 300;
        cfg.seed = seed;
        let t = std::time::Instant::now();
        let x0 = initial_guess(grid, 20, seed).unwrap();
        let (x, rec) =
            rmgls::cycle::solve_with_reference(&stack, &x0, &cfg, Some(&dense)).unwrap();
        eprintln!(
            "c5deep s{seed}: cycles={} conv={} min_errw={:.3e} errw={:.3e} rgrad={:.2e} ({:.0}s)",
            rec.cycles_run(), rec.converged,
            rec.min_err_w().unwrap(),
            err_w(&x, &dense).unwrap(),
            rec.rows.last().unwrap().r_grad,
            t.elapsed().as_secs_f64()
        );
    }
    eprintln!("c5deep done");
}

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_default();
    match mode.as_str() {
        "bench" => bench(),
        "bench2" => bench2(),
        "bench3" => bench3(),
        "traj" => traj(),
        "tighttol" => tighttol(),
        "c4final" => c4final(),
        "c4ten" => c4ten(),
        "c5tight" => c5tight(),
        "c5deep" => c5deep(),
        "il-fixed" => {
            // Asymptotics of the projection-path injection wiring on a plain run.
            let problem = Problem::lyapunov(GridLevel::new(7).unwrap()).unwrap();
            let stack = LevelStack::new(&problem, 5, TransferScheme::InjectionLinear).unwrap();
            let cfg = CycleConfig::default();
            let x0 = initial_guess(stack.finest().grid(), 5, 0).unwrap();
            let (x, rec) = solve(&stack, &x0, &cfg).unwrap();
            let last = rec.rows.last().unwrap();
            println!(
                "il7 k5: cycles={} converged={} r={:.4e} rgrad={:.2e}",
                rec.rows.len() - 1,
                rec.converged,
                stack.finest().scaled_residual(&x).unwrap(),
                last.r_grad
            );
        }
        "tp-budget" => {
            let budget: usize = std::env::args().nth(2).unwrap().parse().unwrap();
            let problem = Problem::lyapunov(GridLevel::new(8).unwrap()).unwrap();
            let stack = LevelStack::new(&problem, 5, TransferScheme::TransposePaired).unwrap();
            let mut cfg = CycleConfig::default();
            cfg.coarse_solver_max_iters = budget;
            arms(&stack, &cfg, &format!("tp budget {budget}"));
        }
        "il-smoothpad" => {
            let problem = Problem::lyapunov(GridLevel::new(8).unwrap()).unwrap();
            let stack = LevelStack::new(&problem, 5, TransferScheme::InjectionLinear).unwrap();
            let cfg = CycleConfig::default();
            println!("=== il smooth pads: adaptive 5->25 ===");
            let mut x = initial_guess(stack.finest().grid(), 5, 0).unwrap();
            for iter in 1..=30usize {
                if iter > 1 && (iter - 1) % 10 == 0 {
                    x = pad_smooth(&x, x.rank() + 5, 1000 + iter as u64);
                }
                match rmgls_iteration(&stack, &x, &cfg) {
                    Ok((next, _)) => x = next,
                    Err(e) => {
                        println!("iter {iter:2}  error: {e}");
                        break;
                    }
                }
                let r = stack.finest().scaled_residual(&x).unwrap();
                println!("iter {iter:2}  k={:2}  r = {r:.4e}", x.rank());
            }
        }
        "il-lc" => {
            let lc: u32 = std::env::args().nth(2).unwrap().parse().unwrap();
            let problem = Problem::lyapunov(GridLevel::new(8).unwrap()).unwrap();
            let stack = LevelStack::new(&problem, lc, TransferScheme::InjectionLinear).unwrap();
            let mut cfg = CycleConfig::default();
            cfg.coarsest_level = lc;
            arms(&stack, &cfg, &format!("il lc {lc}"));
        }
        other => {
            panic!("unknown mode {other:?}");
        }
    }
}
