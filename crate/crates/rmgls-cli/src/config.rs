//! Run configuration: a JSON file, dotted-path command-line overrides, and
//! named presets, resolved into the library's native config types.
//!
//! Resolution order: preset or built-in defaults, then the `--config` file,
//! then each `--set key=value` in order, then `--seed`. The resolved
//! configuration is echoed verbatim into `summary.json` so a run can be
//! reproduced from its own output.

use rmgls::cycle::{CycleConfig, CycleKind, RankStage};
use rmgls::linesearch::{LineSearchConfig, WolfeMode};
use rmgls::problems::Problem;
use rmgls::transfer::{GridLevel, TransferScheme};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Deepest level the dense reference solver accepts (n = 2^9 − 1 = 511).
pub const ORACLE_LEVEL_CAP: u32 = 9;

/// Which variational problem to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    #[default]
    Lyapunov,
    Nonlinear,
}

/// Which pair of grid-transfer stencils to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransferKind {
    /// Injection down, linear interpolation up (the classical pairing).
    #[default]
    InjectionLinear,
    /// Linear interpolation up and its exact transpose down; restriction and
    /// interpolation are adjoint, which preserves mesh-independent cycle
    /// counts at fine levels.
    TransposePaired,
}

impl From<TransferKind> for TransferScheme {
    fn from(kind: TransferKind) -> Self {
        match kind {
            TransferKind::InjectionLinear => TransferScheme::InjectionLinear,
            TransferKind::TransposePaired => TransferScheme::TransposePaired,
        }
    }
}

/// Line-search acceptance rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeKind {
    Weak,
    #[default]
    Approximate,
}

impl From<ModeKind> for WolfeMode {
    fn from(kind: ModeKind) -> Self {
        match kind {
            ModeKind::Weak => WolfeMode::Weak,
            ModeKind::Approximate => WolfeMode::Approximate,
        }
    }
}

/// Recursion shape of one multilevel iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindSection {
    #[default]
    V,
    W,
}

/// Multilevel-iteration parameters (`cycle` section of the config file).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CycleSection {
    pub nu1: usize,
    pub nu2: usize,
    pub grad_tol: f64,
    pub max_cycles: usize,
    pub coarse_solver_tol: f64,
    pub coarse_solver_max_iters: usize,
    pub coarse_trust_region: bool,
    pub smoother_step_factor: f64,
    pub kind: KindSection,
}

impl Default for CycleSection {
    fn default() -> Self {
        let lib = CycleConfig::default();
        Self {
            nu1: lib.nu1,
            nu2: lib.nu2,
            grad_tol: lib.grad_tol,
            max_cycles: lib.max_cycles,
            coarse_solver_tol: lib.coarse_solver_tol,
            coarse_solver_max_iters: lib.coarse_solver_max_iters,
            coarse_trust_region: lib.coarse_trust_region,
            smoother_step_factor: lib.smoother_step_factor,
            kind: KindSection::V,
        }
    }
}

/// Line-search parameters (`line_search` section of the config file).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LineSearchSection {
    pub mode: ModeKind,
    pub delta: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub theta: f64,
    pub gamma_shrink: f64,
    pub expansion: f64,
    pub max_evals: usize,
}

impl Default for LineSearchSection {
    fn default() -> Self {
        let lib = LineSearchConfig::default();
        Self {
            mode: ModeKind::Approximate,
            delta: lib.delta,
            sigma: lib.sigma,
            epsilon: lib.epsilon,
            theta: lib.theta,
            gamma_shrink: lib.gamma_shrink,
            expansion: lib.expansion,
            max_evals: lib.max_evals,
        }
    }
}

/// One stage of a rank-continuation schedule.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSection {
    pub rank: usize,
    pub cycles: usize,
}

/// Fully-resolved run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub problem: ProblemKind,
    /// Nonlinearity strength; ignored by the linear problem.
    pub lambda: f64,
    pub fine_level: u32,
    pub coarse_level: u32,
    pub rank: usize,
    pub transfer: TransferKind,
    pub cycle: CycleSection,
    pub line_search: LineSearchSection,
    /// Rank-continuation schedule for `adapt`; empty means the default
    /// protocol (rank 5 → 25 in steps of 5, ten cycles per stage).
    pub schedule: Vec<StageSection>,
    /// Whether to compute the dense reference and the err-W column.
    /// `null` means "when the fine level is within the oracle cap".
    pub oracle: Option<bool>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Lyapunov,
            lambda: 10.0,
            fine_level: 8,
            coarse_level: 5,
            rank: 5,
            transfer: TransferKind::InjectionLinear,
            cycle: CycleSection::default(),
            line_search: LineSearchSection::default(),
            schedule: Vec::new(),
            oracle: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Cheap structural checks; the library validates numeric ranges.
    pub fn validate(&self) -> Result<(), String> {
        if self.coarse_level >= self.fine_level {
            return Err(format!(
                "coarse_level ({}) must be below fine_level ({})",
                self.coarse_level, self.fine_level
            ));
        }
        if self.rank == 0 {
            return Err("rank must be at least 1".into());
        }
        if self.oracle == Some(true) && self.fine_level > ORACLE_LEVEL_CAP {
            return Err(format!(
                "the dense oracle supports levels up to {ORACLE_LEVEL_CAP} \
                 (n = 511); disable it with --set oracle=false"
            ));
        }
        Ok(())
    }

    /// Whether a dense reference should be computed for this run.
    pub fn oracle_enabled(&self) -> bool {
        self.oracle.unwrap_or(self.fine_level <= ORACLE_LEVEL_CAP)
    }

    /// The finest-level problem instance.
    pub fn problem(&self) -> rmgls::Result<Problem> {
        let grid = GridLevel::new(self.fine_level)?;
        match self.problem {
            ProblemKind::Lyapunov => Problem::lyapunov(grid),
            ProblemKind::Nonlinear => Problem::nonlinear(grid, self.lambda),
        }
    }

    /// The library cycle configuration this run maps to.
    pub fn cycle_config(&self) -> CycleConfig {
        CycleConfig {
            nu1: self.cycle.nu1,
            nu2: self.cycle.nu2,
            coarsest_level: self.coarse_level,
            grad_tol: self.cycle.grad_tol,
            max_cycles: self.cycle.max_cycles,
            coarse_solver_tol: self.cycle.coarse_solver_tol,
            coarse_solver_max_iters: self.cycle.coarse_solver_max_iters,
            coarse_trust_region: self.cycle.coarse_trust_region,
            line_search: LineSearchConfig {
                delta: self.line_search.delta,
                sigma: self.line_search.sigma,
                epsilon: self.line_search.epsilon,
                theta: self.line_search.theta,
                gamma_shrink: self.line_search.gamma_shrink,
                expansion: self.line_search.expansion,
                max_evals: self.line_search.max_evals,
                mode: self.line_search.mode.into(),
            },
            smoother_step_factor: self.cycle.smoother_step_factor,
            kind: match self.cycle.kind {
                KindSection::V => CycleKind::V,
                KindSection::W => CycleKind::W,
            },
            seed: self.seed,
        }
    }

    /// The rank-continuation schedule for `adapt`.
    pub fn stages(&self) -> Vec<RankStage> {
        if self.schedule.is_empty() {
            (1..=5)
                .map(|i| RankStage { rank: 5 * i, cycles: 10 })
                .collect()
        } else {
            self.schedule
                .iter()
                .map(|s| RankStage { rank: s.rank, cycles: s.cycles })
                .collect()
        }
    }
}

/// A sweep grid: the cross product of fine levels and ranks.
#[derive(Debug, Clone)]
pub struct SweepGrid {
    pub levels: Vec<u32>,
    pub ranks: Vec<usize>,
}

/// Returns the named preset, or an error listing the known names.
pub fn preset(name: &str) -> Result<(RunConfig, Option<SweepGrid>), String> {
    match name {
        // Single-run trajectory at fine level 8, rank 5 (the standard
        // convergence-history configuration).
        "fig-convergence" => {
            let cfg = RunConfig { oracle: Some(true), ..RunConfig::default() };
            Ok((cfg, None))
        }
        // Final residuals across fine levels 7–10 at ranks 5 and 10.
        "table-residuals" => {
            let grid = SweepGrid { levels: vec![7, 8, 9, 10], ranks: vec![5, 10] };
            Ok((RunConfig::default(), Some(grid)))
        }
        other => Err(format!(
            "unknown preset '{other}' (available: fig-convergence, table-residuals)"
        )),
    }
}

/// Applies one `key=value` override to a JSON config tree. The key is a
/// dotted path; the value is parsed as JSON, falling back to a string so
/// `--set problem=nonlinear` works without inner quotes.
pub fn apply_override(tree: &mut Value, spec: &str) -> Result<(), String> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| format!("--set expects key=value, got '{spec}'"))?;
    if path.is_empty() {
        return Err(format!("--set has an empty key in '{spec}'"));
    }
    let value: Value =
        serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = tree;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = node
            .as_object_mut()
            .ok_or_else(|| format!("'{}' is not a config section", parts[..i].join(".")))?;
        if i + 1 == parts.len() {
            map.insert((*part).to_string(), value);
            return Ok(());
        }
        node = map
            .entry((*part).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("loop returns on the last path segment");
}

/// Resolves a run configuration from an optional preset, an optional config
/// file, and `--set` overrides, in that order.
pub fn resolve(
    base: RunConfig,
    config_path: Option<&std::path::Path>,
    sets: &[String],
    seed: Option<u64>,
) -> Result<RunConfig, String> {
    let mut tree = serde_json::to_value(&base).expect("config serializes");
    if let Some(path) = config_path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let file: Value = serde_json::from_str(&text)
            .map_err(|e| format!("config {} is not valid JSON: {e}", path.display()))?;
        merge(&mut tree, file)?;
    }
    for spec in sets {
        apply_override(&mut tree, spec)?;
    }
    let mut cfg: RunConfig = serde_json::from_value(tree)
        .map_err(|e| format!("invalid configuration: {e}"))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Merges `incoming` over `base`: objects recursively, everything else by
/// replacement, so a config file may specify only the fields it changes.
fn merge(base: &mut Value, incoming: Value) -> Result<(), String> {
    match (base, incoming) {
        (Value::Object(base), Value::Object(incoming)) => {
            for (key, value) in incoming {
                match base.get_mut(&key) {
                    Some(slot) => merge(slot, value)?,
                    None => {
                        base.insert(key, value);
                    }
                }
            }
            Ok(())
        }
        (slot, incoming) => {
            *slot = incoming;
            Ok(())
        }
    }
}
