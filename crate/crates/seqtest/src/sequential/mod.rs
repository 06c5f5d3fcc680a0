//! Staged sequential identification of a parameter's color.
//!
//! A hypothesis family is a list of convex parameter sets ("bodies"), each
//! carrying a color label. The builder lays out a stage schedule, splits each
//! body into cells by affine cuts so that deep cells become cheap to
//! distinguish early, equips every stage with a table of shifted pairwise
//! detectors, and picks the smallest per-stage repetition count that drives
//! the aggregated risk below the stage budget. Running the test consumes a
//! growing prefix of one observation stream and stops at the first stage
//! whose accepted cells are monochromatic.

pub mod persist;

use crate::convexgeom::{
    smart_cut, solve_pairwise, validate_body_in_scheme, ConvexBody, Cut, RateEvaluator,
    SaddlePoint,
};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::multitest::{
    optimal_shifts, risk_matrix_norm, ClosenessMatrix, DetectorTable, RiskMatrix,
};
use crate::pairwise::build_detector;
use crate::schemes::{Observation, SampleSummary, Scheme};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Tolerance for the pairwise solves feeding cuts and cell detectors.
pub const CELL_SOLVE_TOL: f64 = 1e-9;
/// Tolerance of the rate evaluator backing barrier cuts.
const SMART_EVAL_TOL: f64 = 1e-10;
/// Two bodies whose affinity exponent is above this are treated as
/// overlapping, which breaks the cross-color separation requirement.
const DISJOINTNESS_TOL: f64 = -1e-12;
/// Hard ceiling for the per-stage repetition search.
const MAX_REPETITIONS: u64 = 1 << 30;

/// Convex parameter sets with color labels over one observation scheme.
///
/// Invariants established at construction: at least two colors, every color
/// label in `0..num_colors` is used, all bodies live in the scheme's domain,
/// and bodies of different colors are disjoint (strictly negative pairwise
/// affinity exponent).
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisFamily {
    scheme: Scheme,
    bodies: Vec<ConvexBody>,
    colors: Vec<usize>,
    num_colors: usize,
    /// Smallest cross-color `-psi` over body pairs, from construction-time
    /// solves at tolerance `CELL_SOLVE_TOL`.
    min_separation: f64,
}

impl HypothesisFamily {
    pub fn new(scheme: Scheme, bodies: Vec<ConvexBody>, colors: Vec<usize>) -> Result<Self> {
        if bodies.len() < 2 {
            return Err(Error::InvalidBody(format!(
                "a family needs at least two bodies, got {}",
                bodies.len()
            )));
        }
        if colors.len() != bodies.len() {
            return Err(Error::InputError(format!(
                "{} bodies but {} color labels",
                bodies.len(),
                colors.len()
            )));
        }
        for body in &bodies {
            validate_body_in_scheme(&scheme, body)?;
        }
        let num_colors = colors.iter().copied().max().unwrap_or(0) + 1;
        for i in 0..num_colors {
            if !colors.contains(&i) {
                return Err(Error::InputError(format!(
                    "color {i} has no body (labels must cover 0..{num_colors})"
                )));
            }
        }
        if num_colors < 2 {
            return Err(Error::InputError(
                "all bodies share one color; nothing to identify".into(),
            ));
        }
        let pairs: Vec<(usize, usize)> = cross_color_pairs(&colors);
        let solved: Vec<Result<f64>> = pairs
            .par_iter()
            .map(|&(i, j)| Ok(solve_pairwise(&scheme, &bodies[i], &bodies[j], CELL_SOLVE_TOL)?.opt))
            .collect();
        let mut min_separation = f64::INFINITY;
        for (&(i, j), res) in pairs.iter().zip(solved) {
            let opt = res?;
            if opt >= DISJOINTNESS_TOL {
                return Err(Error::AssumptionViolated(format!(
                    "bodies {i} and {j} have different colors but are not \
                     separated (affinity exponent {opt:.3e})"
                )));
            }
            min_separation = min_separation.min(-opt);
        }
        Ok(HypothesisFamily {
            scheme,
            bodies,
            colors,
            num_colors,
            min_separation,
        })
    }

    pub fn scheme(&self) -> &Scheme {
        &self.scheme
    }

    pub fn bodies(&self) -> &[ConvexBody] {
        &self.bodies
    }

    pub fn colors(&self) -> &[usize] {
        &self.colors
    }

    pub fn num_bodies(&self) -> usize {
        self.bodies.len()
    }

    pub fn num_colors(&self) -> usize {
        self.num_colors
    }

    pub fn color_of(&self, j: usize) -> usize {
        self.colors[j]
    }

    /// Smallest cross-color `-psi`, certified at construction.
    pub fn min_separation(&self) -> f64 {
        self.min_separation
    }
}

fn cross_color_pairs(colors: &[usize]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..colors.len() {
        for j in i + 1..colors.len() {
            if colors[i] != colors[j] {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// How the per-stage cuts are constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutPolicy {
    /// First-order cut at the pairwise optimum (always available).
    Default,
    /// Barrier cut through the analytic center of the confusable region;
    /// falls back to the first-order cut where the barrier is unavailable
    /// (flat cells) or the confusable region covers the cell.
    Smart,
}

impl Default for CutPolicy {
    fn default() -> Self {
        CutPolicy::Default
    }
}

/// Per-stage repetition budget `kbar(s)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageSchedule {
    /// `kbar(s) = 2^(s-1)`.
    Doubling,
    /// Explicit budgets; must start at 1, strictly increase, and at most
    /// double between consecutive stages.
    Explicit(Vec<u64>),
}

impl Default for StageSchedule {
    fn default() -> Self {
        StageSchedule::Doubling
    }
}

impl StageSchedule {
    /// Budget for 1-based stage `s`.
    pub fn value(&self, s: usize) -> Result<u64> {
        if s == 0 {
            return Err(Error::InvalidParameter {
                name: "s",
                reason: "stage indices are 1-based".into(),
            });
        }
        match self {
            StageSchedule::Doubling => {
                if s > 63 {
                    return Err(Error::ConfigError(format!(
                        "doubling budget overflows at stage {s}"
                    )));
                }
                Ok(1u64 << (s - 1))
            }
            StageSchedule::Explicit(v) => v.get(s - 1).copied().ok_or_else(|| {
                Error::ConfigError(format!(
                    "explicit stage budget has {} entries but stage {s} is required",
                    v.len()
                ))
            }),
        }
    }

    fn validate(&self) -> Result<()> {
        if let StageSchedule::Explicit(v) = self {
            if v.first() != Some(&1) {
                return Err(Error::ConfigError(
                    "stage budgets must start at kbar(1) = 1".into(),
                ));
            }
            for (s, w) in v.windows(2).enumerate() {
                if !(w[0] < w[1] && w[1] <= 2 * w[0]) {
                    return Err(Error::ConfigError(format!(
                        "stage budgets must strictly increase and at most double; \
                         offending step {} -> {} at stage {}",
                        w[0],
                        w[1],
                        s + 2
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Reliability target and stage layout options for a sequential build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    /// Total risk budget; each stage gets `eps / (2 * stages)`.
    pub eps: f64,
    #[serde(default)]
    pub kbar: StageSchedule,
    #[serde(default)]
    pub cut_policy: CutPolicy,
    /// Fixed stage count instead of the smallest feasible one.
    #[serde(default)]
    pub stage_override: Option<usize>,
    /// Per-stage margins replacing the schedule-derived `r(s)`; length must
    /// equal the stage count.
    #[serde(default)]
    pub r_override: Option<Vec<f64>>,
}

impl ScheduleConfig {
    pub fn new(eps: f64) -> Self {
        ScheduleConfig {
            eps,
            kbar: StageSchedule::Doubling,
            cut_policy: CutPolicy::Default,
            stage_override: None,
            r_override: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::ConfigError(format!(
                "risk budget must lie in (0, 1), got {}",
                self.eps
            )));
        }
        self.kbar.validate()?;
        if self.stage_override == Some(0) {
            return Err(Error::ConfigError("stage count must be >= 1".into()));
        }
        if let Some(r) = &self.r_override {
            if r.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::ConfigError(
                    "margin overrides must be positive and finite".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Resolved stage layout: count, shared per-stage risk budget, margins,
/// margin exponentials, and repetition budgets.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub stages: usize,
    /// `eps / (2 * stages)`, the budget every stage must meet.
    pub eps_s: f64,
    /// Margin `r(s)` per stage, 1-based via `r[s - 1]`.
    pub r: Vec<f64>,
    /// `exp(-r(s))` per stage.
    pub delta: Vec<f64>,
    /// Repetition budget per stage.
    pub kbar: Vec<u64>,
}

/// Lays out the stages: the stage count is the smallest `S` with
/// `kbar(S) > ln(S * J^2 / eps) / d`, the per-stage budget is
/// `eps / (2S)`, and the margins are `r(s) = ln(S * J^2 / eps) / kbar(s)`
/// (so `r(S) < d`). Overrides in the config replace `S` and the margins
/// after the same feasibility check.
pub fn compute_schedule(family: &HypothesisFamily, cfg: &ScheduleConfig) -> Result<Schedule> {
    cfg.validate()?;
    let d = family.min_separation();
    let j2 = (family.num_bodies() * family.num_bodies()) as f64;
    let ln_arg = |s: usize| (s as f64 * j2 / cfg.eps).ln();
    let feasible = |s: usize| -> Result<bool> {
        Ok((cfg.kbar.value(s)? as f64) > ln_arg(s) / d)
    };
    let stages = match cfg.stage_override {
        Some(s) => {
            if !feasible(s)? {
                return Err(Error::ConfigError(format!(
                    "fixed stage count {s} gives budget {} below the required \
                     {:.3} for separation {d:.3e}",
                    cfg.kbar.value(s)?,
                    ln_arg(s) / d
                )));
            }
            s
        }
        None => {
            let mut s = 1;
            while !feasible(s)? {
                s += 1;
            }
            s
        }
    };
    let eps_s = cfg.eps / (2.0 * stages as f64);
    let kbar: Vec<u64> = (1..=stages)
        .map(|s| cfg.kbar.value(s))
        .collect::<Result<_>>()?;
    let r: Vec<f64> = match &cfg.r_override {
        Some(r) => {
            if r.len() != stages {
                return Err(Error::ConfigError(format!(
                    "margin override has {} entries but the schedule has {stages} stages",
                    r.len()
                )));
            }
            r.clone()
        }
        None => kbar.iter().map(|&k| ln_arg(stages) / k as f64).collect(),
    };
    let delta = r.iter().map(|&v| (-v).exp()).collect();
    Ok(Schedule {
        stages,
        eps_s,
        r,
        delta,
        kbar,
    })
}

/// First-order cut at an optimal pair: `l(mu) = opt + grad . (mu - mu*) + r`.
///
/// By concavity of the affinity exponent against the opponent body, its kept
/// side `{l <= 0}` lies inside `{psi_opponent <= -r}`.
pub fn default_cut(saddle: &SaddlePoint, r: f64) -> Result<Cut> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter {
            name: "r",
            reason: format!("margin must be nonnegative and finite, got {r}"),
        });
    }
    let offset = saddle.opt - dot(&saddle.grad_mu, &saddle.mu_star) + r;
    Cut::new(saddle.grad_mu.clone(), offset)
}

/// Whether a cell is the kept intersection of all of its body's cuts, or the
/// discarded slab of the cut against one opponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Good,
    Bad { opponent: usize },
}

/// A convex piece of one body at one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub body: ConvexBody,
    /// Index of the body this cell came from.
    pub origin: usize,
    pub color: usize,
    pub kind: CellKind,
}

enum Side {
    Good,
    Bad,
}

/// Intersects a body with one side of a cut; `None` when the side is empty
/// (infeasible beyond the LP tolerance). Constant cuts keep or drop the body
/// as a whole.
fn restrict(body: &ConvexBody, cut: &Cut, side: Side) -> Result<Option<ConvexBody>> {
    if cut.normal.iter().all(|&v| v == 0.0) {
        let admitted = match side {
            Side::Good => cut.offset <= 0.0,
            Side::Bad => cut.offset >= 0.0,
        };
        return Ok(admitted.then(|| body.clone()));
    }
    match side {
        Side::Good => body.intersect_halfspace(&cut.normal, -cut.offset),
        Side::Bad => {
            let flipped: Vec<f64> = cut.normal.iter().map(|v| -v).collect();
            body.intersect_halfspace(&flipped, cut.offset)
        }
    }
}

fn stage_cut(
    family: &HypothesisFamily,
    j: usize,
    opponent: usize,
    r_s: f64,
    policy: CutPolicy,
) -> Result<Cut> {
    let scheme = family.scheme();
    if policy == CutPolicy::Smart {
        let evaluator = RateEvaluator::new(
            *scheme,
            family.bodies()[opponent].clone(),
            SMART_EVAL_TOL,
        )?;
        if let Ok(res) = smart_cut(
            scheme,
            &family.bodies()[j],
            &evaluator,
            r_s,
            CELL_SOLVE_TOL,
        ) {
            return Ok(res.cut);
        }
        // Flat cells and cells whose confusable region covers the analytic
        // center have no barrier cut; the first-order cut below handles both.
    }
    let saddle = solve_pairwise(
        scheme,
        &family.bodies()[j],
        &family.bodies()[opponent],
        CELL_SOLVE_TOL,
    )?;
    default_cut(&saddle, r_s)
}

/// Splits every body into cells for one stage: per opponent of a different
/// color, the discarded ("bad") slab of that opponent's cut, plus one kept
/// ("good") cell where all cuts hold. Empty pieces are dropped, so the cell
/// count is at most `J^2` and the cells always cover the body.
pub fn partition_stage(
    family: &HypothesisFamily,
    s: usize,
    r_s: f64,
    cut_policy: CutPolicy,
) -> Result<Vec<Cell>> {
    if !(r_s > 0.0) || !r_s.is_finite() {
        return Err(Error::InvalidParameter {
            name: "r_s",
            reason: format!("stage {s} margin must be positive and finite, got {r_s}"),
        });
    }
    let mut cells = Vec::new();
    for j in 0..family.num_bodies() {
        let color = family.color_of(j);
        let opponents: Vec<usize> = (0..family.num_bodies())
            .filter(|&j2| family.color_of(j2) != color)
            .collect();
        let cuts: Vec<(usize, Cut)> = opponents
            .par_iter()
            .map(|&j2| Ok((j2, stage_cut(family, j, j2, r_s, cut_policy)?)))
            .collect::<Vec<Result<_>>>()
            .into_iter()
            .collect::<Result<_>>()?;
        for (j2, cut) in &cuts {
            if let Some(body) = restrict(&family.bodies()[j], cut, Side::Bad)? {
                cells.push(Cell {
                    body,
                    origin: j,
                    color,
                    kind: CellKind::Bad { opponent: *j2 },
                });
            }
        }
        let mut good = Some(family.bodies()[j].clone());
        for (_, cut) in &cuts {
            good = match good {
                Some(b) => restrict(&b, cut, Side::Good)?,
                None => None,
            };
            if good.is_none() {
                break;
            }
        }
        if let Some(body) = good {
            cells.push(Cell {
                body,
                origin: j,
                color,
                kind: CellKind::Good,
            });
        }
    }
    Ok(cells)
}

/// One untrimmed cell per body; used for the final stage, whose cuts keep
/// everything.
fn trivial_cells(family: &HypothesisFamily) -> Vec<Cell> {
    family
        .bodies()
        .iter()
        .enumerate()
        .map(|(j, body)| Cell {
            body: body.clone(),
            origin: j,
            color: family.color_of(j),
            kind: CellKind::Good,
        })
        .collect()
}

/// Everything one stage needs at run time: its cells, the pairwise risks,
/// which cell pairs it must distinguish, the shifted detector table, and the
/// repetition count.
#[derive(Debug, Clone, PartialEq)]
pub struct StageComponent {
    /// 1-based index in the schedule that produced this stage.
    pub s: usize,
    pub eps_s: f64,
    pub r_s: f64,
    pub delta_s: f64,
    /// Repetition budget the stage had to respect.
    pub kbar_s: u64,
    pub cells: Vec<Cell>,
    /// Pairwise detector risks between cells (1 on and within colors).
    pub risks: RiskMatrix,
    /// Pairs the stage distinguishes: different colors and risk at most
    /// `delta_s`.
    pub closeness: ClosenessMatrix,
    /// Unshifted detectors for the distinguished pairs plus the shift matrix.
    pub detectors: DetectorTable,
    /// Repetitions this stage consumes (prefix length of the stream).
    pub k_s: u64,
}

/// Smallest `k >= 1` with `risk_matrix_norm(..., k) < eps_s`, by doubling
/// then bisection (the norm is nonincreasing in `k`).
fn smallest_k(risks: &RiskMatrix, closeness: &ClosenessMatrix, eps_s: f64) -> Result<u64> {
    let below = |k: u64| -> Result<bool> { Ok(risk_matrix_norm(risks, closeness, k)? < eps_s) };
    if below(1)? {
        return Ok(1);
    }
    let mut lo = 1u64;
    let mut hi = 2u64;
    while !below(hi)? {
        lo = hi;
        hi *= 2;
        if hi > MAX_REPETITIONS {
            return Err(Error::SolverFailure {
                context: "stage repetition search",
                reason: format!(
                    "aggregated risk stays above {eps_s:.3e} beyond {MAX_REPETITIONS} repetitions"
                ),
            });
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if below(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Equips a stage's cells with detectors, closeness, shifts, and the smallest
/// repetition count meeting the stage budget.
///
/// Cross-color cell pairs are re-solved at tolerance `CELL_SOLVE_TOL`; pairs
/// within a color get risk 1 and no detector. A cross-color pair whose risk
/// reaches `1 - 1e-12` makes color identification impossible and is an error,
/// as is a repetition count above `kbar_s`.
pub fn build_stage(
    family: &HypothesisFamily,
    cells: Vec<Cell>,
    s: usize,
    eps_s: f64,
    r_s: f64,
    delta_s: f64,
    kbar_s: u64,
) -> Result<StageComponent> {
    let l = cells.len();
    if l == 0 {
        return Err(Error::InvalidBody(format!("stage {s} has no cells")));
    }
    let scheme = family.scheme();
    let pairs: Vec<(usize, usize)> = {
        let mut v = Vec::new();
        for q in 0..l {
            for q2 in q + 1..l {
                if cells[q].color != cells[q2].color {
                    v.push((q, q2));
                }
            }
        }
        v
    };
    let solved: Vec<Result<SaddlePoint>> = pairs
        .par_iter()
        .map(|&(q, q2)| solve_pairwise(scheme, &cells[q].body, &cells[q2].body, CELL_SOLVE_TOL))
        .collect();
    let mut rows = vec![vec![1.0; l]; l];
    let mut saddles = Vec::with_capacity(pairs.len());
    for (&(q, q2), res) in pairs.iter().zip(solved) {
        let sp = res?;
        // Clamp away underflow: a zero risk is still correctly *bounded* by
        // the smallest positive float, and the matrix domain excludes 0.
        let risk = sp.opt.exp().max(f64::MIN_POSITIVE);
        if risk >= 1.0 - 1e-12 {
            return Err(Error::AssumptionViolated(format!(
                "stage {s}: cells {q} and {q2} have different colors but risk \
                 {risk} admits no detector"
            )));
        }
        rows[q][q2] = risk;
        rows[q2][q] = risk;
        saddles.push((q, q2, sp));
    }
    let risks = RiskMatrix::new(rows)?;
    let c_rows: Vec<Vec<u8>> = (0..l)
        .map(|q| {
            (0..l)
                .map(|q2| {
                    u8::from(
                        q != q2
                            && cells[q].color != cells[q2].color
                            && risks.get(q, q2) <= delta_s,
                    )
                })
                .collect()
        })
        .collect();
    let closeness = ClosenessMatrix::new(c_rows)?;
    let k0 = smallest_k(&risks, &closeness, eps_s)?;
    // The shift perturbation is kept well below the stage budget so the
    // achieved risk cannot be pushed past it; if it is anyway, buy margin
    // with one more repetition at a time.
    let eta = Some(1e-9f64.min(eps_s * 1e-6));
    let mut k = k0;
    let (shifts, _achieved) = loop {
        if k > kbar_s {
            return Err(Error::AssumptionViolated(format!(
                "stage {s} needs {k} repetitions to reach its budget \
                 {eps_s:.3e}, above the schedule bound {kbar_s}"
            )));
        }
        let (sh, ach) = optimal_shifts(&risks, &closeness, k, eta)?;
        if ach <= eps_s {
            break (sh, ach);
        }
        k += 1;
    };
    let mut detectors = DetectorTable::new(l, k as usize, shifts)?;
    for (q, q2, sp) in &saddles {
        if closeness.separated(*q, *q2) {
            detectors.set_pair(*q, *q2, build_detector(sp, scheme)?)?;
        }
    }
    Ok(StageComponent {
        s,
        eps_s,
        r_s,
        delta_s,
        kbar_s,
        cells,
        risks,
        closeness,
        detectors,
        k_s: k,
    })
}

/// A fully built staged test, stages in execution order (nondecreasing
/// repetition counts; stages costlier than the final one are dropped).
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialTest {
    pub family: HypothesisFamily,
    pub schedule: Schedule,
    pub cut_policy: CutPolicy,
    pub stages: Vec<StageComponent>,
}

impl SequentialTest {
    /// Observations consumed when every stage runs (the last stage's count).
    pub fn max_observations(&self) -> u64 {
        self.stages.last().map_or(0, |st| st.k_s)
    }
}

/// Builds the whole test: schedule, per-stage partitions (the final stage
/// keeps the bodies whole), detector tables, and repetition counts, then
/// orders stages by cost.
pub fn build_sequential(
    family: HypothesisFamily,
    cfg: &ScheduleConfig,
) -> Result<SequentialTest> {
    let schedule = compute_schedule(&family, cfg)?;
    let s_count = schedule.stages;
    let mut components = Vec::with_capacity(s_count);
    for s in 1..=s_count {
        let cells = if s == s_count {
            trivial_cells(&family)
        } else {
            partition_stage(&family, s, schedule.r[s - 1], cfg.cut_policy)?
        };
        components.push(build_stage(
            &family,
            cells,
            s,
            schedule.eps_s,
            schedule.r[s - 1],
            schedule.delta[s - 1],
            schedule.kbar[s - 1],
        )?);
    }
    // The final stage must distinguish every cross-color body pair, or the
    // test could end undecided on perfectly valid inputs.
    let last = components.last().expect("at least one stage");
    for q in 0..last.cells.len() {
        for q2 in q + 1..last.cells.len() {
            if last.cells[q].color != last.cells[q2].color && !last.closeness.separated(q, q2) {
                return Err(Error::AssumptionViolated(format!(
                    "final stage cannot distinguish bodies {q} and {q2}: risk {} \
                     is above the stage threshold {}",
                    last.risks.get(q, q2),
                    last.delta_s
                )));
            }
        }
    }
    let k_last = last.k_s;
    let mut stages: Vec<StageComponent> =
        components.into_iter().filter(|c| c.k_s <= k_last).collect();
    stages.sort_by_key(|c| c.k_s);
    Ok(SequentialTest {
        family,
        schedule,
        cut_policy: cfg.cut_policy,
        stages,
    })
}

/// Cells whose aggregated margins beat every cell they must be distinguished
/// from, given the summed statistics of the stage prefix.
fn stage_accept(stage: &StageComponent, summary: &SampleSummary) -> Result<Vec<usize>> {
    let l = stage.cells.len();
    let mut ok = vec![true; l];
    for q in 0..l {
        for q2 in q + 1..l {
            if stage.closeness.separated(q, q2) {
                let m = stage.detectors.margin_summed(q, q2, summary)?;
                if !(m > 0.0) {
                    ok[q] = false;
                }
                if !(m < 0.0) {
                    ok[q2] = false;
                }
            }
        }
    }
    Ok((0..l).filter(|&q| ok[q]).collect())
}

/// Outcome of a run: the accepted color (if any stage ended monochromatic),
/// the 1-based execution index of the terminating stage, and the number of
/// observations consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub accepted_color: Option<usize>,
    pub stage: usize,
    pub observations_used: u64,
    /// Per-visited-stage acceptance sets, when recording was requested.
    pub trace: Option<Vec<StageRecord>>,
}

/// Acceptance set of one visited stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    /// 1-based execution index.
    pub stage: usize,
    /// Index of the stage in the original schedule.
    pub schedule_index: usize,
    pub k: u64,
    pub accepted_cells: Vec<usize>,
}

/// Runs the test on observations pulled from `next`, stopping at the first
/// stage whose accepted cells all share one color. Consumes exactly the
/// terminating stage's repetition count.
pub fn run_sequential_streaming<F>(
    test: &SequentialTest,
    mut next: F,
    record: bool,
) -> Result<Verdict>
where
    F: FnMut() -> Result<Observation>,
{
    let scheme = test.family.scheme();
    let mut summary = scheme.new_summary();
    let mut trace = record.then(Vec::new);
    for (idx, stage) in test.stages.iter().enumerate() {
        while (summary.count as u64) < stage.k_s {
            let omega = next()?;
            scheme.accumulate(&mut summary, &omega)?;
        }
        let accepted = stage_accept(stage, &summary)?;
        if let Some(t) = trace.as_mut() {
            t.push(StageRecord {
                stage: idx + 1,
                schedule_index: stage.s,
                k: stage.k_s,
                accepted_cells: accepted.clone(),
            });
        }
        if let Some(&first) = accepted.first() {
            let color = stage.cells[first].color;
            if accepted.iter().all(|&q| stage.cells[q].color == color) {
                return Ok(Verdict {
                    accepted_color: Some(color),
                    stage: idx + 1,
                    observations_used: summary.count as u64,
                    trace,
                });
            }
        }
    }
    Ok(Verdict {
        accepted_color: None,
        stage: test.stages.len(),
        observations_used: summary.count as u64,
        trace,
    })
}

/// Runs the test on a stream known up front; the stream must hold at least
/// the final stage's repetition count.
pub fn run_sequential(
    test: &SequentialTest,
    stream: &[Observation],
    record: bool,
) -> Result<Verdict> {
    let needed = test.max_observations();
    if (stream.len() as u64) < needed {
        return Err(Error::InputError(format!(
            "stream holds {} observations but the final stage consumes {needed}",
            stream.len()
        )));
    }
    let mut iter = stream.iter();
    run_sequential_streaming(
        test,
        move || {
            iter.next().cloned().ok_or_else(|| {
                Error::InputError("observation stream ended prematurely".into())
            })
        },
        record,
    )
}
