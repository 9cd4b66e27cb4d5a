use rmgls::cycle::{initial_guess, solve, CycleConfig, LevelStack};
use rmgls::problems::Problem;
use rmgls::transfer::{GridLevel, TransferScheme};

fn main() {
    let g = GridLevel::new(8).unwrap();
    let p = Problem::lyapunov(g).unwrap();
    let stack = LevelStack::new(&p, 5, TransferScheme::InjectionLinear).unwrap();
    let x0 = initial_guess(g, 5, 0).unwrap();
    let cfg = CycleConfig::default();
    let t = std::time::Instant::now();
    let (_, rec) = solve(&stack, &x0, &cfg).unwrap();
    eprintln!("l8 k5: {} cycles, {:?}, converged={}", rec.cycles_run(), t.elapsed(), rec.converged);
}
