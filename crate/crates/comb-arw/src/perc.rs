//! Layered growth driven by per-diagonal shape draws.
//!
//! The cluster starts as the single origin cell. One step replaces the
//! current generation as follows: a fresh sequence of shapes `Ξ_0, Ξ_1, …`
//! is drawn (one per diagonal, where a cell `(r, s)` sits on diagonal
//! `r + s₁ + s₂`), base offsets accumulate as `ℓ_j = Σ_{i<j} r_max(Ξ_i)`,
//! and every cell on diagonal `j` spawns the cells
//! `{(ℓ_j + r', s + s') : (r', s') ∈ Ξ_j}`. The union over the generation,
//! deduplicated, is the next generation. The key growth statistic is the
//! maximal total layer displacement `X_k` after `k` steps; `X_k / k` is
//! superadditive in expectation, so its mean estimates the growth rate from
//! below.
//!
//! A tracked run additionally records, per step, the generation, each cell's
//! parents, the number of origin-to-cell infection chains (exact, arbitrary
//! precision), and the consumed shape sequences — enough to replay the run
//! for validation and to draw a uniformly random maximal-displacement chain.

use std::collections::HashMap;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::instr::mix64;
use crate::laws::{assemble_comb3d_shape, assemble_comb_shape, sample_comb_meta, Cell, CombShapeMeta, Shape, ShapeLaw};
use crate::{Error, Result};

/// The per-diagonal shape sequence one growth step consumes, extended
/// lazily in diagonal order. Comb-family sequences thread the last chunk's
/// top indicator into the next shape's first chunk.
#[derive(Debug, Clone)]
pub struct StepSequence {
    step: u32,
    shapes: Vec<Shape>,
    metas: Vec<Option<CombShapeMeta>>,
    offsets: Vec<u64>,
    gen: Option<SequenceGen>,
}

#[derive(Debug, Clone)]
struct SequenceGen {
    law: ShapeLaw,
    rng: ChaCha8Rng,
    carry_top: Option<bool>,
}

impl StepSequence {
    /// Fresh lazily-sampled sequence for growth step `step`.
    pub fn new(law: ShapeLaw, seed: u64, step: u32) -> Self {
        StepSequence {
            step,
            shapes: Vec::new(),
            metas: Vec::new(),
            offsets: vec![0],
            gen: Some(SequenceGen { law, rng: ChaCha8Rng::seed_from_u64(seed), carry_top: None }),
        }
    }

    /// Fixed sequence replaying `shapes` for diagonals `0, 1, …`; requests
    /// beyond the end fail with [`Error::ReplayExhausted`].
    pub fn replayed(shapes: Vec<Shape>, step: u32) -> Self {
        let mut offsets = vec![0u64];
        for s in &shapes {
            offsets.push(offsets.last().unwrap() + s.r_max());
        }
        let metas = vec![None; shapes.len()];
        StepSequence { step, shapes, metas, offsets, gen: None }
    }

    pub fn step_index(&self) -> u32 {
        self.step
    }

    /// Number of diagonals materialized so far.
    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    /// Materialize shapes for all diagonals `≤ j`.
    pub fn ensure(&mut self, j: u64) -> Result<()> {
        while (self.shapes.len() as u64) <= j {
            let Some(gen) = self.gen.as_mut() else {
                return Err(Error::ReplayExhausted { step: self.step as usize, diagonal: j });
            };
            let (shape, meta) = match gen.law {
                ShapeLaw::Comb { lambda } => {
                    let meta = sample_comb_meta(lambda, &mut gen.rng, gen.carry_top);
                    gen.carry_top = Some(meta.last_top());
                    (assemble_comb_shape(&meta), Some(meta))
                }
                ShapeLaw::CombD3 { lambda } => {
                    let meta = sample_comb_meta(lambda, &mut gen.rng, gen.carry_top);
                    gen.carry_top = Some(meta.last_top());
                    (assemble_comb3d_shape(&meta), Some(meta))
                }
                law => (law.sample(&mut gen.rng), None),
            };
            self.offsets.push(self.offsets.last().unwrap() + shape.r_max());
            self.shapes.push(shape);
            self.metas.push(meta);
        }
        Ok(())
    }

    /// Shape for diagonal `j` (must be materialized).
    pub fn shape(&self, j: u64) -> &Shape {
        &self.shapes[j as usize]
    }

    /// Chunk data for diagonal `j`, when the law has any.
    pub fn meta(&self, j: u64) -> Option<&CombShapeMeta> {
        self.metas[j as usize].as_ref()
    }

    /// Base offset `ℓ_j` (must be materialized up to `j`; `ℓ_0 = 0`).
    pub fn offset(&self, j: u64) -> u64 {
        self.offsets[j as usize]
    }
}

/// Replace `cells` by its successor generation under `seq`. Returns the next
/// generation sorted, plus each next cell's parent indices into `cells`.
fn advance_cells(
    cells: &[Cell],
    seq: &mut StepSequence,
    cell_cap: u64,
) -> Result<(Vec<Cell>, Vec<Vec<u32>>)> {
    let mut next: Vec<Cell> = Vec::new();
    let mut parents: Vec<Vec<u32>> = Vec::new();
    let mut index: HashMap<Cell, u32> = HashMap::new();
    for (i, cell) in cells.iter().enumerate() {
        let j = cell.diagonal();
        seq.ensure(j)?;
        let off = seq.offset(j);
        for sc in seq.shape(j).cells() {
            let child = Cell { r: off + sc.r, s: [cell.s[0] + sc.s[0], cell.s[1] + sc.s[1]] };
            let slot = *index.entry(child).or_insert_with(|| {
                next.push(child);
                parents.push(Vec::new());
                (next.len() - 1) as u32
            });
            parents[slot as usize].push(i as u32);
        }
        if next.len() as u64 > cell_cap {
            return Err(Error::CellCapExceeded {
                step: seq.step as usize,
                stored: next.len(),
                cap: cell_cap as usize,
            });
        }
    }
    // Canonical order: sort the generation and carry the parent lists along.
    let mut order: Vec<u32> = (0..next.len() as u32).collect();
    order.sort_unstable_by_key(|&i| next[i as usize]);
    let sorted_cells = order.iter().map(|&i| next[i as usize]).collect();
    let sorted_parents = order.iter().map(|&i| std::mem::take(&mut parents[i as usize])).collect();
    Ok((sorted_cells, sorted_parents))
}

/// Recorded past of a tracked run.
#[derive(Debug, Clone)]
pub struct History {
    /// Generation `k` for `k = 0..=steps`, each sorted.
    pub generations: Vec<Vec<Cell>>,
    /// `parent_lists[k][i]`: indices into generation `k` of the parents of
    /// cell `i` in generation `k + 1`.
    pub parent_lists: Vec<Vec<Vec<u32>>>,
    /// `chain_counts[k][i]`: number of origin-to-cell infection chains for
    /// cell `i` of generation `k` (exact).
    pub chain_counts: Vec<Vec<BigUint>>,
    /// The shape sequences the steps consumed.
    pub sequences: Vec<StepSequence>,
}

impl History {
    /// Re-run every recorded step from the recorded sequences and confirm
    /// the generations, parent lists, and chain counts reproduce exactly.
    pub fn validate(&self, cell_cap: u64) -> Result<()> {
        for k in 0..self.sequences.len() {
            let mut seq = self.sequences[k].clone();
            let (cells, parents) = advance_cells(&self.generations[k], &mut seq, cell_cap)?;
            if cells != self.generations[k + 1] || parents != self.parent_lists[k] {
                return Err(Error::NotStable(format!(
                    "replay of step {k} diverged from the recorded generation"
                )));
            }
            let counts: Vec<BigUint> = parents
                .iter()
                .map(|ps| ps.iter().map(|&p| &self.chain_counts[k][p as usize]).sum())
                .collect();
            if counts != self.chain_counts[k + 1] {
                return Err(Error::NotStable(format!(
                    "replay of step {k} diverged from the recorded chain counts"
                )));
            }
        }
        Ok(())
    }
}

/// The growth process itself.
#[derive(Debug, Clone)]
pub struct InfectionProcess {
    law: ShapeLaw,
    seed: u64,
    cell_cap: u64,
    step: u32,
    cells: Vec<Cell>,
    history: Option<History>,
}

impl InfectionProcess {
    /// A process at the origin. `tracked` keeps the full history needed for
    /// replay validation and chain sampling; untracked runs keep only the
    /// current generation.
    pub fn new(law: ShapeLaw, seed: u64, tracked: bool, cell_cap: u64) -> Self {
        let origin = vec![Cell::new2(0, 0)];
        let history = tracked.then(|| History {
            generations: vec![origin.clone()],
            parent_lists: Vec::new(),
            chain_counts: vec![vec![BigUint::from(1u32)]],
            sequences: Vec::new(),
        });
        InfectionProcess { law, seed, cell_cap, step: 0, cells: origin, history }
    }

    pub fn law(&self) -> ShapeLaw {
        self.law
    }

    pub fn step_index(&self) -> u32 {
        self.step
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// Largest total layer displacement in the current generation (`X_k`).
    pub fn max_height(&self) -> u32 {
        self.cells.iter().map(|c| c.s_sum()).max().unwrap_or(0)
    }

    pub fn history(&self) -> Option<&History> {
        self.history.as_ref()
    }

    /// Advance one step with a freshly seeded sequence (seed mixed from the
    /// run seed and the step index, so runs replay exactly).
    pub fn step(&mut self) -> Result<()> {
        let seq_seed = mix64(self.seed ^ mix64(self.step as u64));
        let seq = StepSequence::new(self.law, seq_seed, self.step);
        self.advance_with(seq)
    }

    /// Advance one step consuming the given sequence (used for replays and
    /// scripted-figure checks).
    pub fn advance_with(&mut self, mut seq: StepSequence) -> Result<()> {
        let (cells, parents) = advance_cells(&self.cells, &mut seq, self.cell_cap)?;
        if let Some(h) = self.history.as_mut() {
            let counts: Vec<BigUint> = parents
                .iter()
                .map(|ps| ps.iter().map(|&p| &h.chain_counts[self.step as usize][p as usize]).sum())
                .collect();
            h.generations.push(cells.clone());
            h.parent_lists.push(parents);
            h.chain_counts.push(counts);
            h.sequences.push(seq);
        }
        self.cells = cells;
        self.step += 1;
        Ok(())
    }

    /// Run until `k` steps have been taken.
    pub fn run_to(&mut self, k: u32) -> Result<()> {
        while self.step < k {
            self.step()?;
        }
        Ok(())
    }
}

/// A maximal-displacement infection chain through a tracked run, one cell
/// per generation from the origin to a top cell of the final one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreedyChain {
    pub cells: Vec<Cell>,
}

impl GreedyChain {
    /// The final cell of the chain.
    pub fn terminal(&self) -> Cell {
        *self.cells.last().expect("chains are nonempty")
    }
}

/// Uniform `BigUint` below `bound` by rejection from random bits.
fn random_below(rng: &mut impl Rng, bound: &BigUint) -> BigUint {
    assert!(*bound > BigUint::from(0u32));
    let bits = bound.bits();
    let bytes = bits.div_ceil(8) as usize;
    let shift = (bytes as u64) * 8 - bits;
    loop {
        let mut buf = vec![0u8; bytes];
        rng.fill_bytes(&mut buf);
        buf[0] >>= shift;
        let candidate = BigUint::from_bytes_be(&buf);
        if candidate < *bound {
            return candidate;
        }
    }
}

/// Draw one index from `weights` with probability proportional to each
/// weight (weights may be huge; sampling is exact).
fn weighted_pick(rng: &mut impl Rng, weights: &[&BigUint]) -> usize {
    let total: BigUint = weights.iter().copied().sum();
    let mut ticket = random_below(rng, &total);
    for (i, w) in weights.iter().enumerate() {
        if ticket < **w {
            return i;
        }
        ticket -= *w;
    }
    unreachable!("ticket below total implies a winning weight")
}

/// Sample a uniformly random maximal-displacement chain from a tracked run:
/// the terminal cell is drawn among the top cells of the final generation
/// with probability proportional to its chain count, then parents are drawn
/// backwards proportionally to theirs.
pub fn greedy_chain(history: &History, rng: &mut impl Rng) -> GreedyChain {
    let last = history.generations.len() - 1;
    let final_gen = &history.generations[last];
    let x = final_gen.iter().map(|c| c.s_sum()).max().expect("nonempty generation");
    let top: Vec<usize> =
        (0..final_gen.len()).filter(|&i| final_gen[i].s_sum() == x).collect();
    let weights: Vec<&BigUint> = top.iter().map(|&i| &history.chain_counts[last][i]).collect();
    let mut at = top[weighted_pick(rng, &weights)];
    let mut chain = vec![final_gen[at]];
    for k in (0..last).rev() {
        let parents = &history.parent_lists[k][at];
        let weights: Vec<&BigUint> =
            parents.iter().map(|&p| &history.chain_counts[k][p as usize]).collect();
        at = parents[weighted_pick(rng, &weights)] as usize;
        chain.push(history.generations[k][at]);
    }
    chain.reverse();
    GreedyChain { cells: chain }
}

/// Exact maximal total displacement `X_k` after `k` steps of a deterministic
/// law, or `None` for a random law. Every cell of a generation spawns one
/// child through every cell of the glyph, so the maximal displacement gains
/// exactly the glyph's `s_max` each step regardless of how the horizontal
/// offsets fall: `X_k = k · s_max`. The generations themselves grow
/// exponentially (the fixed glyph multiplies the cell count by more than two
/// per step), so this closed form is the only route to large `k`; random
/// laws need simulation instead.
pub fn exact_max_height(law: ShapeLaw, k: u32) -> Option<u64> {
    law.deterministic_shape().map(|s| s.s_max() as u64 * k as u64)
}

/// Estimated growth rate after `k` steps.
#[derive(Debug, Clone, Copy)]
pub struct RhoEstimate {
    pub k: u32,
    pub replicas: u32,
    /// Mean of `X_k / k`.
    pub mean: f64,
    /// Standard error of the mean (`0` for deterministic laws).
    pub se: f64,
    /// Whether the value was computed exactly rather than estimated.
    pub exact: bool,
}

/// Estimate `E[X_k] / k` over independent replicas (replica `i` runs with a
/// seed mixed from `base_seed` and `i`; the reduction is order-deterministic).
/// Deterministic laws short-circuit: every step raises the top displacement
/// by the shape's own maximum, making `X_k / k` a constant known without
/// simulation.
pub fn rho_k(
    law: ShapeLaw,
    k: u32,
    replicas: u32,
    base_seed: u64,
    cell_cap: u64,
) -> Result<RhoEstimate> {
    if k == 0 {
        return Err(Error::InvalidParameter("the step count k must be positive".into()));
    }
    if let Some(shape) = law.deterministic_shape() {
        return Ok(RhoEstimate {
            k,
            replicas: 0,
            mean: shape.s_max() as f64,
            se: 0.0,
            exact: true,
        });
    }
    if replicas == 0 {
        return Err(Error::InvalidParameter("at least one replica is required".into()));
    }
    let ratios: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let seed = mix64(base_seed ^ mix64(0x5EED_0000 ^ i as u64));
            let mut proc = InfectionProcess::new(law, seed, false, cell_cap);
            proc.run_to(k)?;
            Ok(proc.max_height() as f64 / k as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, se) = crate::stats::mean_se(&ratios);
    Ok(RhoEstimate { k, replicas, mean, se, exact: false })
}
