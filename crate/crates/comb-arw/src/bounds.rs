//! Monte Carlo experiments that sandwich the comb system's stationary
//! sleeper density per spine site between two tractable estimates, plus the
//! renewal-path simulator behind the lower one, coupled-sampler statistics,
//! and the figure-style density drivers.
//!
//! The lower estimate rests on a renewal decomposition of comb growth: a
//! segment grows inside coupled interval subshapes (marginally the interval
//! law at rate `3λ/2`) and ends when an independent `Ber(λ/(1+λ))` chunk-top
//! indicator over the terminal cell fires, lifting the terminal one row.
//! Segment lengths are then `Geo(λ/(1+λ))` and the long-run displacement
//! rate is `p·(1 + Σ_{k≥1} p·q^{k−1}·E[X_k])` with `p = λ/(1+λ)`,
//! `q = 1 − p`, and `X_k` the k-step interval growth displacement at rate
//! `3λ/2`. The upper estimate adds one tooth sleeper per spine site to the
//! interval system's density at rate `3λ/2`. The direct estimate stabilizes
//! the all-active comb and counts surviving sleepers per spine site.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::arw::{
    drive_dissipate, exact_stationary_sample, partial_spine_stabilize, resume_stabilize,
    Configuration, DensityTrace, Driving, Policy,
};
use crate::graph::Graph;
use crate::instr::{mix64, SeededStacks};
use crate::laws::{
    assemble_comb_shape, coupled_interval_shape, sample_comb_meta, sleep_prob, Cell,
    CombShapeMeta, ShapeLaw,
};
use crate::perc::{InfectionProcess, StepSequence};
use crate::stats;
use crate::{Error, Result};

// Stream tags keeping the experiments' random draws disjoint under a shared
// master seed.
const LOWER_TAG: u64 = 0x10E7_0001;
const STATIONARY_TAG: u64 = 0x10E7_0002;
const RENEWAL_TAG: u64 = 0x10E7_0004;
const COUPLE_TAG: u64 = 0x10E7_0005;
const FIG3_TAG: u64 = 0x10E7_0007;
const SLEEPER_BOUND_TAG: u64 = 0x10E7_0008;

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    Ok(())
}

fn check_positive(value: u32, what: &str) -> Result<()> {
    if value == 0 {
        return Err(Error::InvalidParameter(format!("{what} must be positive")));
    }
    Ok(())
}

/// Closed-form lower estimate of the comb growth rate, assembled from
/// truncated interval-growth expectations.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LowerBound {
    pub lambda: f64,
    pub estimate: f64,
    pub se: f64,
    /// Upper bound on the mass dropped by truncating the geometric
    /// expectation at `k_max` (uses `X_k ≤ k`).
    pub truncation: f64,
    pub k_max: u32,
    pub replicas: u32,
}

/// Evaluate the renewal series `p·(1 + Σ_{k=1}^{k_max} p·q^{k−1}·E[X_k])`
/// with `p = λ/(1+λ)` and `X_k` the k-step growth displacement of the
/// interval law at rate `3λ/2`. Each replica runs one growth process and
/// accumulates its whole weighted trajectory, so the summands share
/// randomness and the standard error is that of the per-replica totals.
pub fn renewal_lower_bound(
    lambda: f64,
    k_max: u32,
    replicas: u32,
    seed: u64,
    cell_cap: u64,
) -> Result<LowerBound> {
    check_lambda(lambda)?;
    check_positive(k_max, "k_max")?;
    check_positive(replicas, "replicas")?;
    let p = sleep_prob(lambda);
    let q = 1.0 - p;
    let law = ShapeLaw::Interval { lambda: 1.5 * lambda };
    let totals: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let rseed = mix64(seed ^ mix64(LOWER_TAG ^ i as u64));
            let mut proc = InfectionProcess::new(law, rseed, false, cell_cap);
            let mut total = 0.0;
            let mut weight = p;
            for _ in 1..=k_max {
                proc.step()?;
                total += weight * proc.max_height() as f64;
                weight *= q;
            }
            Ok(total)
        })
        .collect::<Result<_>>()?;
    let (mean, se) = stats::mean_se(&totals);
    let m = k_max as f64;
    let truncation = q.powi(k_max as i32) * (m + 1.0 - m * q);
    Ok(LowerBound {
        lambda,
        estimate: p * (1.0 + mean),
        se: p * se,
        truncation,
        k_max,
        replicas,
    })
}

/// Mean sleeper density (with SE) over independent stationary replicas.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DensityEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: u32,
    pub replicas: u32,
}

/// Spine/teeth/total sleeper densities (per spine site) of the stationary
/// profile reached from the all-active start.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StationaryDensities {
    pub spine: f64,
    pub spine_se: f64,
    pub teeth: f64,
    pub teeth_se: f64,
    pub total: f64,
    pub total_se: f64,
    pub n: u32,
    pub replicas: u32,
}

fn graph_tag(graph: Graph) -> u64 {
    match graph {
        Graph::Interval { n } => 0x17E0_0000_0000 | n as u64,
        Graph::Comb { n } => 0xC0B0_0000_0000 | n as u64,
    }
}

/// Stabilize one active particle per interior site, once per replica, and
/// average the surviving sleeper counts. Replica streams are derived from
/// the seed, the graph, and `λ`, so distinct experiments sharing a master
/// seed stay independent.
pub fn stationary_densities(
    graph: Graph,
    lambda: f64,
    replicas: u32,
    seed: u64,
    budget: u64,
) -> Result<StationaryDensities> {
    check_lambda(lambda)?;
    check_positive(replicas, "replicas")?;
    let n = graph.n();
    check_positive(n, "the spine length n")?;
    let base = STATIONARY_TAG ^ mix64(lambda.to_bits() ^ graph_tag(graph));
    let counts: Vec<(u32, u32)> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let src = SeededStacks::new(graph, lambda, mix64(seed ^ mix64(base ^ i as u64)))?;
            let res = exact_stationary_sample(&src, Policy::Fifo, budget)?;
            Ok((res.config.spine_sleepers(), res.config.tooth_sleepers()))
        })
        .collect::<Result<_>>()?;
    let per = |f: fn(&(u32, u32)) -> u32| -> (f64, f64) {
        let xs: Vec<f64> = counts.iter().map(|c| f(c) as f64 / n as f64).collect();
        stats::mean_se(&xs)
    };
    let (spine, spine_se) = per(|c| c.0);
    let (teeth, teeth_se) = per(|c| c.1);
    let (total, total_se) = per(|c| c.0 + c.1);
    Ok(StationaryDensities { spine, spine_se, teeth, teeth_se, total, total_se, n, replicas })
}

/// Upper estimate: one (for the tooth layer) plus the interval system's
/// stationary density at rate `3λ/2`.
pub fn interval_upper_bound(
    lambda: f64,
    n: u32,
    replicas: u32,
    seed: u64,
    budget: u64,
) -> Result<DensityEstimate> {
    if n < 50 {
        return Err(Error::InvalidParameter(format!(
            "the upper estimate needs n >= 50 to tame boundary effects, got {n}"
        )));
    }
    let d = stationary_densities(Graph::Interval { n }, 1.5 * lambda, replicas, seed, budget)?;
    Ok(DensityEstimate { mean: 1.0 + d.spine, se: d.spine_se, n, replicas })
}

/// Direct estimate: total sleepers per spine site of the stabilized
/// all-active comb (counts teeth, so the value lives in `[0, 2]`).
pub fn comb_direct_density(
    lambda: f64,
    n: u32,
    replicas: u32,
    seed: u64,
    budget: u64,
) -> Result<DensityEstimate> {
    let d = stationary_densities(Graph::Comb { n }, lambda, replicas, seed, budget)?;
    Ok(DensityEstimate { mean: d.total, se: d.total_se, n, replicas })
}

/// Sizes and replica counts for one sandwich evaluation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SandwichParams {
    pub k_max: u32,
    pub lower_replicas: u32,
    pub direct_n: u32,
    pub direct_replicas: u32,
    pub upper_n: u32,
    pub upper_replicas: u32,
}

impl Default for SandwichParams {
    fn default() -> Self {
        SandwichParams {
            k_max: 48,
            lower_replicas: 400,
            direct_n: 250,
            direct_replicas: 200,
            upper_n: 60,
            upper_replicas: 200,
        }
    }
}

const FINITE_SIZE_NOTE: &str = "finite-size estimates: the direct density is the stationary \
     mean at the stated n, standing in for the large-n limit";

/// Lower, direct, and upper density estimates for one `λ`, with the
/// three-standard-error sandwich verdicts.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub lambda: f64,
    pub lower: LowerBound,
    pub direct: DensityEstimate,
    pub upper: DensityEstimate,
    /// `lower.estimate − 3·SE ≤ direct.mean`, SEs combined in quadrature.
    pub lower_ok: bool,
    /// `direct.mean ≤ upper.mean + 3·SE`, SEs combined in quadrature.
    pub upper_ok: bool,
    pub note: &'static str,
}

/// Run all three estimates and compare them.
pub fn sandwich(
    lambda: f64,
    params: SandwichParams,
    seed: u64,
    budget: u64,
    cell_cap: u64,
) -> Result<BoundReport> {
    let lower = renewal_lower_bound(lambda, params.k_max, params.lower_replicas, seed, cell_cap)?;
    let direct = comb_direct_density(lambda, params.direct_n, params.direct_replicas, seed, budget)?;
    let upper = interval_upper_bound(lambda, params.upper_n, params.upper_replicas, seed, budget)?;
    let lower_ok =
        lower.estimate - 3.0 * stats::combined_se(lower.se, direct.se) <= direct.mean;
    let upper_ok =
        direct.mean <= upper.mean + 3.0 * stats::combined_se(direct.se, upper.se);
    Ok(BoundReport { lambda, lower, direct, upper, lower_ok, upper_ok, note: FINITE_SIZE_NOTE })
}

/// Outcome of the segment-by-segment renewal simulation.
#[derive(Debug, Clone, Serialize)]
pub struct RenewalTrace {
    pub lambda: f64,
    /// Growth steps consumed by each segment.
    pub lengths: Vec<u32>,
    /// Displacement gained by each segment (terminal height plus the final
    /// lifted row).
    pub rewards: Vec<u32>,
    /// Long-run slope `Σ rewards / Σ lengths` with its linearization SE.
    pub slope: f64,
    pub slope_se: f64,
    /// Every segment stayed inside the sampled subshapes and every fired
    /// indicator lifted its terminal cell to a cell of the full comb shape.
    pub validated: bool,
}

/// Top indicator consulted for a terminal subshape cell at local column
/// `col` of `meta`: the last covering chunk whose sleep indicator matches
/// the cell's lifted layer. Matching layers guarantees that a fired top
/// lifts this very cell one row inside the assembled comb shape. The chunk
/// choice reads only widths and sleep indicators, so the returned top is an
/// untouched `Ber(λ/(1+λ))` draw.
fn consulted_top(meta: &CombShapeMeta, col: u64, lifted: bool) -> bool {
    let mut top = None;
    let mut start = 0u64;
    for chunk in &meta.chunks {
        let end = start + chunk.width as u64 - 1;
        if (start..=end).contains(&col) && chunk.sleeps[(col - start) as usize] == lifted {
            top = Some(chunk.top);
        }
        start = end;
    }
    top.expect("some covering chunk realizes every subshape cell")
}

/// Simulate the renewal decomposition directly: grow a cluster through
/// coupled interval subshapes one fresh step at a time, and end the segment
/// when the consulted top indicator over the terminal cell fires, crediting
/// the lifted row. Records per-segment lengths and rewards plus the
/// long-run slope.
pub fn simulate_renewal_path(
    lambda: f64,
    segments: u32,
    seed: u64,
    cell_cap: u64,
) -> Result<RenewalTrace> {
    check_lambda(lambda)?;
    check_positive(segments, "segments")?;
    let law = ShapeLaw::Comb { lambda };
    let mut lengths: Vec<u32> = Vec::with_capacity(segments as usize);
    let mut rewards: Vec<u32> = Vec::with_capacity(segments as usize);
    let mut validated = true;
    let mut stream = 0u64;
    for _ in 0..segments {
        let mut cells: Vec<Cell> = vec![Cell::new2(0, 0)];
        let mut steps = 0u32;
        loop {
            steps += 1;
            let sseed = mix64(seed ^ mix64(RENEWAL_TAG ^ stream));
            stream += 1;
            let mut seq = StepSequence::new(law, sseed, steps);
            let mut next: Vec<Cell> = Vec::new();
            // Witness per generated cell: the diagonal it grew from and the
            // subshape cell that produced it (first producer wins ties).
            let mut witness: Vec<(u64, u64, u32)> = Vec::new();
            for cell in &cells {
                let j = cell.diagonal();
                seq.ensure(j)?;
                let sub =
                    coupled_interval_shape(seq.meta(j).expect("comb sequences carry chunk data"));
                let off = seq.offset(j);
                for sc in sub.cells() {
                    let child = Cell::new2(off + sc.r, cell.s[0] + sc.s[0]);
                    if !next.contains(&child) {
                        next.push(child);
                        witness.push((j, sc.r, sc.s[0]));
                    }
                }
            }
            if next.len() as u64 > cell_cap {
                return Err(Error::CellCapExceeded {
                    step: steps as usize,
                    stored: next.len(),
                    cap: cell_cap as usize,
                });
            }
            // Terminal: the leftmost cell of maximal displacement.
            let ti = (0..next.len())
                .max_by_key(|&i| (next[i].s[0], std::cmp::Reverse(next[i].r)))
                .expect("generations are nonempty");
            let terminal = next[ti];
            let (j, col, layer) = witness[ti];
            cells = next;
            let meta = seq.meta(j).expect("witness diagonals are materialized");
            validated &= coupled_interval_shape(meta).contains(Cell::new2(col, layer));
            if consulted_top(meta, col, layer == 1) {
                validated &= assemble_comb_shape(meta).contains(Cell::new2(col, layer + 1));
                lengths.push(steps);
                rewards.push(terminal.s[0] + 1);
                break;
            }
        }
    }
    let num: Vec<f64> = rewards.iter().map(|&r| r as f64).collect();
    let den: Vec<f64> = lengths.iter().map(|&k| k as f64).collect();
    let (slope, slope_se) = stats::ratio_mean_se(&num, &den);
    Ok(RenewalTrace { lambda, lengths, rewards, slope, slope_se, validated })
}

/// Statistics over paired draws of a comb shape and its interval subshape.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingReport {
    pub lambda: f64,
    pub samples: u32,
    /// Subshape cells missing from the paired comb shape (must be zero).
    pub containment_failures: u64,
    /// Chi-square p-value of subshape widths against `Geo(1/2)`.
    pub width_p_value: f64,
    /// Pooled per-column frequency of lifted subshape cells (ratio estimate
    /// over independent shapes) with its SE.
    pub lifted_frequency: f64,
    pub lifted_se: f64,
    /// The predicted frequency `(3λ/2) / (1 + 3λ/2)`.
    pub lifted_expected: f64,
    pub lifted_within_3se: bool,
    /// Chi-square p-value of first-column chunk-coverage counts against
    /// `Geo(2/3)`.
    pub coverage_p_value: f64,
}

/// Sample `samples` fresh comb shapes with their interval subshapes and
/// test the coupling's advertised statistics: containment, subshape widths
/// `Geo(1/2)`, lifted-cell frequency `(3λ/2)/(1+3λ/2)` per column, and
/// first-column chunk coverage `Geo(2/3)`.
pub fn coupling_stats(lambda: f64, samples: u32, seed: u64) -> Result<CouplingReport> {
    check_lambda(lambda)?;
    if samples < 100 {
        return Err(Error::InvalidParameter(format!(
            "the coupling statistics need at least 100 samples, got {samples}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(COUPLE_TAG)));
    let mut widths: Vec<u32> = Vec::with_capacity(samples as usize);
    let mut coverages: Vec<u32> = Vec::with_capacity(samples as usize);
    let mut lifted_counts: Vec<f64> = Vec::with_capacity(samples as usize);
    let mut column_counts: Vec<f64> = Vec::with_capacity(samples as usize);
    let mut failures = 0u64;
    for _ in 0..samples {
        let meta = sample_comb_meta(lambda, &mut rng, None);
        let comb = assemble_comb_shape(&meta);
        let sub = coupled_interval_shape(&meta);
        failures += sub.cells().iter().filter(|c| !comb.contains(**c)).count() as u64;
        widths.push(meta.width() as u32);
        lifted_counts.push(sub.cells().iter().filter(|c| c.s[0] == 1).count() as f64);
        column_counts.push(meta.width() as f64);
        let mut cover = 1u32;
        for chunk in &meta.chunks[..meta.chunks.len() - 1] {
            if chunk.width == 1 {
                cover += 1;
            } else {
                break;
            }
        }
        coverages.push(cover);
    }
    let width_fit = stats::chi_square_geometric_fit(&widths, 0.5)?;
    let coverage_fit = stats::chi_square_geometric_fit(&coverages, 2.0 / 3.0)?;
    let (freq, freq_se) = stats::ratio_mean_se(&lifted_counts, &column_counts);
    let expected = sleep_prob(1.5 * lambda);
    Ok(CouplingReport {
        lambda,
        samples,
        containment_failures: failures,
        width_p_value: width_fit.p_value,
        lifted_frequency: freq,
        lifted_se: freq_se,
        lifted_expected: expected,
        lifted_within_3se: (freq - expected).abs() <= 3.0 * freq_se,
        coverage_p_value: coverage_fit.p_value,
    })
}

/// One row of the stationary-density grid: comb teeth/spine densities next
/// to the interval density at the same rate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Fig2Row {
    pub lambda: f64,
    pub teeth: f64,
    pub teeth_se: f64,
    pub spine: f64,
    pub spine_se: f64,
    pub interval: f64,
    pub interval_se: f64,
}

/// Stationary densities across a `λ` grid, comb and interval side by side.
pub fn fig2_experiment(
    lambdas: &[f64],
    n: u32,
    replicas: u32,
    seed: u64,
    budget: u64,
) -> Result<Vec<Fig2Row>> {
    if lambdas.is_empty() {
        return Err(Error::InvalidParameter("the lambda grid must be nonempty".into()));
    }
    lambdas
        .iter()
        .map(|&lambda| {
            let comb = stationary_densities(Graph::Comb { n }, lambda, replicas, seed, budget)?;
            let interval =
                stationary_densities(Graph::Interval { n }, lambda, replicas, seed, budget)?;
            Ok(Fig2Row {
                lambda,
                teeth: comb.teeth,
                teeth_se: comb.teeth_se,
                spine: comb.spine,
                spine_se: comb.spine_se,
                interval: interval.spine,
                interval_se: interval.spine_se,
            })
        })
        .collect()
}

/// Driven-dissipative sleeper trace on the comb under uniform driving.
pub fn fig3_experiment(
    lambda: f64,
    n: u32,
    steps: u32,
    seed: u64,
    budget: u64,
) -> Result<DensityTrace> {
    check_lambda(lambda)?;
    check_positive(n, "the spine length n")?;
    check_positive(steps, "steps")?;
    let graph = Graph::Comb { n };
    let src = SeededStacks::new(graph, lambda, mix64(seed ^ mix64(FIG3_TAG)))?;
    let drive_seed = mix64(seed ^ mix64(FIG3_TAG ^ 1));
    let (trace, _) = drive_dissipate(&src, steps, Driving::Uniform, Policy::Fifo, budget, drive_seed)?;
    Ok(trace)
}

/// One two-phase stabilization check: after the spine-first phase leaves
/// every tooth holding one awake particle, finishing the stabilization can
/// only shed particles, so the final sleeper count is at most the spine
/// length plus the phase-one spine sleepers.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SleeperBoundCheck {
    pub total_sleepers: u32,
    pub spine_phase_sleepers: u32,
    pub holds: bool,
}

/// Run `runs` independent two-phase stabilizations of the all-active comb
/// and check `S ≤ n + |τ|` on each.
pub fn sleeper_tooth_bound(
    lambda: f64,
    n: u32,
    runs: u32,
    seed: u64,
    budget: u64,
) -> Result<Vec<SleeperBoundCheck>> {
    check_lambda(lambda)?;
    check_positive(n, "the spine length n")?;
    check_positive(runs, "runs")?;
    let graph = Graph::Comb { n };
    (0..runs)
        .into_par_iter()
        .map(|i| {
            let src =
                SeededStacks::new(graph, lambda, mix64(seed ^ mix64(SLEEPER_BOUND_TAG ^ i as u64)))?;
            let partial = partial_spine_stabilize(&Configuration::ones(graph), &src, budget)?;
            let tau = partial.tau();
            let full = resume_stabilize(&partial, &src, Policy::Fifo, budget)?;
            let total = full.config.total_sleepers();
            Ok(SleeperBoundCheck {
                total_sleepers: total,
                spine_phase_sleepers: tau,
                holds: total <= n + tau,
            })
        })
        .collect()
}
