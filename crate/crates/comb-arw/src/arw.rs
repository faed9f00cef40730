//! The ARW toppling engine.
//!
//! A configuration assigns each interior site either `k ≥ 0` active particles
//! or one sleeping particle. An unstable site (one holding at least one
//! active particle) topples by executing the next unused instruction from its
//! stack: `Sleep` puts a lone particle to sleep (and is a consumed no-op when
//! two or more particles are present), a jump moves one particle to the
//! neighbour the instruction names, waking a sleeper there. Particles
//! reaching a sink leave the system. The odometer records how many
//! instructions each site has executed; by the abelian property the final
//! configuration and odometer are independent of the toppling order, which
//! [`Policy`] varies for exactly that test.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{Graph, SiteId, SiteKind};
use crate::instr::{Instruction, InstructionSource};
use crate::{Error, Result};

/// State of one interior site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteState {
    /// `k` active particles (`Active(0)` is an empty site).
    Active(u32),
    /// One sleeping particle.
    Sleeping,
}

impl SiteState {
    /// Number of particles present (a sleeper counts one).
    pub fn particles(self) -> u32 {
        match self {
            SiteState::Active(k) => k,
            SiteState::Sleeping => 1,
        }
    }

    /// Whether the site holds a sleeping particle.
    pub fn is_sleeping(self) -> bool {
        matches!(self, SiteState::Sleeping)
    }
}

/// A particle configuration on the interior sites of a graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    graph: Graph,
    spine: Vec<SiteState>,
    teeth: Vec<SiteState>,
}

impl Configuration {
    /// All interior sites empty.
    pub fn empty(graph: Graph) -> Self {
        let n = graph.n() as usize;
        let teeth = if graph.has_teeth() { n } else { 0 };
        Configuration {
            graph,
            spine: vec![SiteState::Active(0); n],
            teeth: vec![SiteState::Active(0); teeth],
        }
    }

    /// One active particle on every interior site.
    pub fn ones(graph: Graph) -> Self {
        let mut c = Configuration::empty(graph);
        for s in c.spine.iter_mut().chain(c.teeth.iter_mut()) {
            *s = SiteState::Active(1);
        }
        c
    }

    pub fn graph(&self) -> Graph {
        self.graph
    }

    pub fn get(&self, site: SiteId) -> SiteState {
        debug_assert!(self.graph.is_interior(site));
        match site.kind {
            SiteKind::Spine => self.spine[site.index as usize - 1],
            SiteKind::Tooth => self.teeth[site.index as usize - 1],
        }
    }

    pub fn set(&mut self, site: SiteId, state: SiteState) {
        assert!(self.graph.is_interior(site), "{site} is not an interior site");
        match site.kind {
            SiteKind::Spine => self.spine[site.index as usize - 1] = state,
            SiteKind::Tooth => self.teeth[site.index as usize - 1] = state,
        }
    }

    /// Total particles over all interior sites.
    pub fn particle_count(&self) -> u64 {
        self.spine
            .iter()
            .chain(self.teeth.iter())
            .map(|s| s.particles() as u64)
            .sum()
    }

    /// Number of sleeping particles on the spine.
    pub fn spine_sleepers(&self) -> u32 {
        self.spine.iter().filter(|s| s.is_sleeping()).count() as u32
    }

    /// Number of sleeping particles on the teeth.
    pub fn tooth_sleepers(&self) -> u32 {
        self.teeth.iter().filter(|s| s.is_sleeping()).count() as u32
    }

    /// Total sleeping particles.
    pub fn total_sleepers(&self) -> u32 {
        self.spine_sleepers() + self.tooth_sleepers()
    }

    /// Whether any site holds an active particle.
    pub fn has_active(&self) -> bool {
        self.spine
            .iter()
            .chain(self.teeth.iter())
            .any(|s| matches!(s, SiteState::Active(k) if *k > 0))
    }
}

/// Instruction-use counts per site. Sinks are implicitly zero. Values may be
/// negative for the generalized odometers handled by the bridge module.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Odometer {
    graph: Graph,
    spine: Vec<i64>,
    teeth: Vec<i64>,
}

impl Odometer {
    /// The zero odometer.
    pub fn zeros(graph: Graph) -> Self {
        let n = graph.n() as usize;
        let teeth = if graph.has_teeth() { n } else { 0 };
        Odometer { graph, spine: vec![0; n], teeth: vec![0; teeth] }
    }

    pub fn graph(&self) -> Graph {
        self.graph
    }

    /// Value at `site`; `0` at sinks by convention.
    pub fn get(&self, site: SiteId) -> i64 {
        if self.graph.is_sink(site) {
            return 0;
        }
        debug_assert!(self.graph.is_interior(site));
        match site.kind {
            SiteKind::Spine => self.spine[site.index as usize - 1],
            SiteKind::Tooth => self.teeth[site.index as usize - 1],
        }
    }

    pub fn set(&mut self, site: SiteId, value: i64) {
        assert!(self.graph.is_interior(site), "{site} is not an interior site");
        match site.kind {
            SiteKind::Spine => self.spine[site.index as usize - 1] = value,
            SiteKind::Tooth => self.teeth[site.index as usize - 1] = value,
        }
    }

    /// Largest value over all interior sites (`0` for an empty graph).
    pub fn max_value(&self) -> i64 {
        self.spine.iter().chain(self.teeth.iter()).copied().max().unwrap_or(0)
    }

    /// Sum of values over all interior sites.
    pub fn total(&self) -> i64 {
        self.spine.iter().chain(self.teeth.iter()).sum()
    }
}

/// Toppling order. All policies yield identical results (abelianness); they
/// differ only in scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    /// Round-robin: sites execute one instruction per turn in queue order.
    Fifo,
    /// Depth-first: the most recently touched unstable site executes next.
    Lifo,
    /// Uniformly random unstable site each step, driven by the given seed.
    Random { seed: u64 },
}

/// How the driven chain picks the site receiving each new particle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Driving {
    /// Uniform over all interior sites.
    Uniform,
    /// Always the same site.
    Fixed(SiteId),
}

/// Outcome of a stabilization.
#[derive(Debug, Clone)]
pub struct StabilizationResult {
    pub config: Configuration,
    pub odometer: Odometer,
    /// Total instructions executed.
    pub executed: u64,
    /// Particles absorbed by the left sink (spine position `0`).
    pub absorbed_left: u64,
    /// Particles absorbed by the right sink (spine position `n + 1`).
    pub absorbed_right: u64,
}

impl StabilizationResult {
    /// Particles absorbed by either sink.
    pub fn absorbed(&self) -> u64 {
        self.absorbed_left + self.absorbed_right
    }
}

/// Per-step sleeper counts of a driven run, recorded after each
/// stabilization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepDensities {
    /// Total sleepers `S`.
    pub total: u32,
    /// Tooth sleepers `T`.
    pub teeth: u32,
    /// Backbone (spine) sleepers `B`.
    pub spine: u32,
}

/// Trace of a driven-dissipative run.
#[derive(Debug, Clone)]
pub struct DensityTrace {
    pub graph: Graph,
    pub steps: Vec<StepDensities>,
}

/// Result of the two-phase partial stabilization: spine stable, every tooth
/// holding its particles awake. Resumable via [`resume_stabilize`].
#[derive(Debug, Clone)]
pub struct PartialStabilization {
    pub config: Configuration,
    pub odometer: Odometer,
    pub executed: u64,
    pub absorbed_left: u64,
    pub absorbed_right: u64,
}

impl PartialStabilization {
    /// Spine sleeper count `|τ|` after the partial phase.
    pub fn tau(&self) -> u32 {
        self.config.spine_sleepers()
    }
}

const SLEEPER: i64 = -1;

/// Working state of a toppling run over flat arrays: `SLEEPER` marks a
/// sleeping particle, any other value counts active particles.
struct Topple<'a, S: InstructionSource> {
    src: &'a S,
    graph: Graph,
    n: usize,
    spine: Vec<i64>,
    teeth: Vec<i64>,
    u_spine: Vec<i64>,
    u_teeth: Vec<i64>,
    queue: VecDeque<u32>,
    queued: Vec<bool>,
    executed: u64,
    budget: u64,
    absorbed_left: u64,
    absorbed_right: u64,
}

impl<'a, S: InstructionSource> Topple<'a, S> {
    fn new(config: &Configuration, odometer: Option<&Odometer>, src: &'a S, budget: u64) -> Self {
        let graph = config.graph();
        let n = graph.n() as usize;
        let teeth_len = if graph.has_teeth() { n } else { 0 };
        let encode = |s: SiteState| match s {
            SiteState::Active(k) => k as i64,
            SiteState::Sleeping => SLEEPER,
        };
        let spine: Vec<i64> = config.spine.iter().map(|&s| encode(s)).collect();
        let teeth: Vec<i64> = config.teeth.iter().map(|&s| encode(s)).collect();
        let (u_spine, u_teeth) = match odometer {
            Some(u) => (u.spine.clone(), u.teeth.clone()),
            None => (vec![0; n], vec![0; teeth_len]),
        };
        Topple {
            src,
            graph,
            n,
            spine,
            teeth,
            u_spine,
            u_teeth,
            queue: VecDeque::new(),
            queued: vec![false; n + teeth_len],
            executed: 0,
            budget,
            absorbed_left: 0,
            absorbed_right: 0,
        }
    }

    /// Queue code: spine `v` is `v − 1`, tooth `v'` is `n + v − 1`.
    #[inline]
    fn code(&self, site: SiteId) -> usize {
        match site.kind {
            SiteKind::Spine => site.index as usize - 1,
            SiteKind::Tooth => self.n + site.index as usize - 1,
        }
    }

    #[inline]
    fn decode(&self, code: usize) -> SiteId {
        if code < self.n {
            SiteId::spine(code as u32 + 1)
        } else {
            SiteId::tooth((code - self.n) as u32 + 1)
        }
    }

    #[inline]
    fn state(&self, code: usize) -> i64 {
        if code < self.n { self.spine[code] } else { self.teeth[code - self.n] }
    }

    #[inline]
    fn state_mut(&mut self, code: usize) -> &mut i64 {
        if code < self.n { &mut self.spine[code] } else { &mut self.teeth[code - self.n] }
    }

    #[inline]
    fn enqueue(&mut self, code: usize) {
        if !self.queued[code] {
            self.queued[code] = true;
            self.queue.push_back(code as u32);
        }
    }

    /// Seed the queue with every site `threshold`-unstable, in spine-then-teeth order.
    fn seed_queue(&mut self, tooth_threshold: i64) {
        for code in 0..self.queued.len() {
            let thr = if code < self.n { 1 } else { tooth_threshold };
            if self.state(code) >= thr {
                self.enqueue(code);
            }
        }
    }

    /// Deliver one particle to `site` (waking a sleeper), or absorb it when
    /// `site` is a sink. Returns the receiving interior code, if any.
    fn deliver(&mut self, site: SiteId) -> Option<usize> {
        if self.graph.is_sink(site) {
            if site.index == 0 {
                self.absorbed_left += 1;
            } else {
                self.absorbed_right += 1;
            }
            return None;
        }
        let code = self.code(site);
        let st = self.state_mut(code);
        *st = if *st == SLEEPER { 2 } else { *st + 1 };
        Some(code)
    }

    /// Execute one instruction at the site behind `code`. The caller
    /// guarantees at least one particle is present. Returns the interior code
    /// that received a particle, if any.
    fn execute(&mut self, code: usize) -> Result<Option<usize>> {
        if self.executed >= self.budget {
            return Err(Error::BudgetExhausted { executed: self.executed });
        }
        let site = self.decode(code);
        let (next_index, count) = if code < self.n {
            (self.u_spine[code] + 1, self.spine[code])
        } else {
            (self.u_teeth[code - self.n] + 1, self.teeth[code - self.n])
        };
        debug_assert!(count >= 1);
        let instr = self.src.instruction_at(site, next_index)?;
        if code < self.n {
            self.u_spine[code] = next_index;
        } else {
            self.u_teeth[code - self.n] = next_index;
        }
        self.executed += 1;
        match instr {
            Instruction::Sleep => {
                if count == 1 {
                    *self.state_mut(code) = SLEEPER;
                }
                Ok(None)
            }
            jump => {
                *self.state_mut(code) -= 1;
                let target = match (jump, site.kind) {
                    (Instruction::Left, SiteKind::Spine) => SiteId::spine(site.index - 1),
                    (Instruction::Right, SiteKind::Spine) => SiteId::spine(site.index + 1),
                    (Instruction::Up, SiteKind::Spine) => SiteId::tooth(site.index),
                    (Instruction::Down, SiteKind::Tooth) => SiteId::spine(site.index),
                    (other, kind) => unreachable!("{other:?} drawn on a {kind:?} site"),
                };
                Ok(self.deliver(target))
            }
        }
    }

    /// Run to stability with every site unstable at one active particle.
    fn run_standard(&mut self, policy: Policy) -> Result<()> {
        let mut rng = match policy {
            Policy::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        while !self.queue.is_empty() {
            let code = match policy {
                Policy::Fifo => self.queue.pop_front().unwrap(),
                Policy::Lifo => self.queue.pop_back().unwrap(),
                Policy::Random { .. } => {
                    let i = rng.as_mut().unwrap().random_range(0..self.queue.len());
                    self.queue.swap_remove_back(i).unwrap()
                }
            } as usize;
            self.queued[code] = false;
            if self.state(code) < 1 {
                continue;
            }
            if let Some(hit) = self.execute(code)? {
                if self.state(hit) >= 1 {
                    self.enqueue(hit);
                }
            }
            if self.state(code) >= 1 {
                self.enqueue(code);
            }
        }
        Ok(())
    }

    /// Run the partial phase: teeth topple only above one particle and take
    /// priority over the spine; the spine topples as usual.
    fn run_partial(&mut self) -> Result<()> {
        // Tooth-priority FIFO: one queue per row, teeth drained first.
        let mut spine_q: VecDeque<u32> = VecDeque::new();
        let mut tooth_q: VecDeque<u32> = VecDeque::new();
        let push = |queued: &mut Vec<bool>,
                        spine_q: &mut VecDeque<u32>,
                        tooth_q: &mut VecDeque<u32>,
                        n: usize,
                        code: usize| {
            if !queued[code] {
                queued[code] = true;
                if code < n { spine_q.push_back(code as u32) } else { tooth_q.push_back(code as u32) }
            }
        };
        for code in 0..self.queued.len() {
            let thr = if code < self.n { 1 } else { 2 };
            if self.state(code) >= thr {
                push(&mut self.queued, &mut spine_q, &mut tooth_q, self.n, code);
            }
        }
        while !(spine_q.is_empty() && tooth_q.is_empty()) {
            let code = match tooth_q.pop_front().or_else(|| spine_q.pop_front()) {
                Some(c) => c as usize,
                None => break,
            };
            self.queued[code] = false;
            let thr = if code < self.n { 1 } else { 2 };
            if self.state(code) < thr {
                continue;
            }
            if let Some(hit) = self.execute(code)? {
                let hit_thr = if hit < self.n { 1 } else { 2 };
                if self.state(hit) >= hit_thr {
                    push(&mut self.queued, &mut spine_q, &mut tooth_q, self.n, hit);
                }
            }
            if self.state(code) >= thr {
                push(&mut self.queued, &mut spine_q, &mut tooth_q, self.n, code);
            }
        }
        Ok(())
    }

    fn into_parts(self) -> (Configuration, Odometer, u64, u64, u64) {
        let decode = |v: i64| {
            if v == SLEEPER { SiteState::Sleeping } else { SiteState::Active(v as u32) }
        };
        let config = Configuration {
            graph: self.graph,
            spine: self.spine.iter().map(|&v| decode(v)).collect(),
            teeth: self.teeth.iter().map(|&v| decode(v)).collect(),
        };
        let odometer = Odometer { graph: self.graph, spine: self.u_spine, teeth: self.u_teeth };
        (config, odometer, self.executed, self.absorbed_left, self.absorbed_right)
    }
}

/// Stabilize `config`, executing instructions from `src` in `policy` order.
pub fn stabilize(
    config: &Configuration,
    src: &impl InstructionSource,
    policy: Policy,
    budget: u64,
) -> Result<StabilizationResult> {
    stabilize_from(config, None, src, policy, budget)
}

/// Stabilize starting from an already-advanced odometer (used to resume a
/// partial stabilization and by the driven chain).
fn stabilize_from(
    config: &Configuration,
    odometer: Option<&Odometer>,
    src: &impl InstructionSource,
    policy: Policy,
    budget: u64,
) -> Result<StabilizationResult> {
    let mut t = Topple::new(config, odometer, src, budget);
    t.seed_queue(1);
    t.run_standard(policy)?;
    let initial = config.particle_count();
    let (config, odometer, executed, absorbed_left, absorbed_right) = t.into_parts();
    debug_assert_eq!(
        initial,
        config.particle_count() + absorbed_left + absorbed_right,
        "particle conservation"
    );
    Ok(StabilizationResult { config, odometer, executed, absorbed_left, absorbed_right })
}

/// Exact sample of the stationary sleeper profile: stabilize one active
/// particle per interior site and read off the surviving sleepers.
pub fn exact_stationary_sample(
    src: &impl InstructionSource,
    policy: Policy,
    budget: u64,
) -> Result<StabilizationResult> {
    stabilize(&Configuration::ones(src.graph()), src, policy, budget)
}

/// Driven-dissipative chain: add one active particle per step (placement per
/// `driving`), stabilize, and record sleeper counts. The stacks are consumed
/// continuously across steps, so each step sees fresh instructions.
pub fn drive_dissipate(
    src: &impl InstructionSource,
    steps: u32,
    driving: Driving,
    policy: Policy,
    budget: u64,
    seed: u64,
) -> Result<(DensityTrace, StabilizationResult)> {
    let graph = src.graph();
    if let Driving::Fixed(site) = driving {
        if !graph.is_interior(site) {
            return Err(Error::InvalidSite(site));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut config = Configuration::empty(graph);
    let mut odometer = Odometer::zeros(graph);
    let mut trace = Vec::with_capacity(steps as usize);
    let mut executed_total = 0u64;
    let mut absorbed = (0u64, 0u64);
    for _ in 0..steps {
        let site = match driving {
            Driving::Fixed(site) => site,
            Driving::Uniform => {
                let k = rng.random_range(0..graph.interior_site_count());
                if k < graph.n() {
                    SiteId::spine(k + 1)
                } else {
                    SiteId::tooth(k - graph.n() + 1)
                }
            }
        };
        let state = config.get(site);
        let woken = match state {
            SiteState::Sleeping => SiteState::Active(2),
            SiteState::Active(k) => SiteState::Active(k + 1),
        };
        config.set(site, woken);
        let step = stabilize_from(
            &config,
            Some(&odometer),
            src,
            policy,
            budget.saturating_sub(executed_total),
        )?;
        executed_total += step.executed;
        absorbed.0 += step.absorbed_left;
        absorbed.1 += step.absorbed_right;
        config = step.config;
        odometer = step.odometer;
        trace.push(StepDensities {
            total: config.total_sleepers(),
            teeth: config.tooth_sleepers(),
            spine: config.spine_sleepers(),
        });
    }
    let result = StabilizationResult {
        config,
        odometer,
        executed: executed_total,
        absorbed_left: absorbed.0,
        absorbed_right: absorbed.1,
    };
    Ok((DensityTrace { graph, steps: trace }, result))
}

/// Phase one of the two-phase stabilization: topple the spine to stability
/// while teeth only shed particles beyond their first (tooth-priority FIFO).
/// From an all-active start every tooth ends holding exactly one active
/// particle and the spine ends stable.
pub fn partial_spine_stabilize(
    config: &Configuration,
    src: &impl InstructionSource,
    budget: u64,
) -> Result<PartialStabilization> {
    let mut t = Topple::new(config, None, src, budget);
    t.run_partial()?;
    let initial = config.particle_count();
    let (config, odometer, executed, absorbed_left, absorbed_right) = t.into_parts();
    debug_assert_eq!(initial, config.particle_count() + absorbed_left + absorbed_right);
    Ok(PartialStabilization { config, odometer, executed, absorbed_left, absorbed_right })
}

/// Finish a partial stabilization under the standard instability notion.
pub fn resume_stabilize(
    partial: &PartialStabilization,
    src: &impl InstructionSource,
    policy: Policy,
    budget: u64,
) -> Result<StabilizationResult> {
    let res = stabilize_from(&partial.config, Some(&partial.odometer), src, policy, budget)?;
    Ok(StabilizationResult {
        executed: res.executed + partial.executed,
        absorbed_left: res.absorbed_left + partial.absorbed_left,
        absorbed_right: res.absorbed_right + partial.absorbed_right,
        ..res
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instr::{ScriptedStacks, SeededStacks};

    #[test]
    fn lone_particle_sleeps_on_its_first_instruction() {
        let g = Graph::Comb { n: 1 };
        let src = ScriptedStacks::new(g).with_positive(SiteId::spine(1), "s");
        let mut config = Configuration::empty(g);
        config.set(SiteId::spine(1), SiteState::Active(1));
        let res = stabilize(&config, &src, Policy::Fifo, 1_000).unwrap();
        assert_eq!(res.config.get(SiteId::spine(1)), SiteState::Sleeping);
        assert_eq!(res.odometer.get(SiteId::spine(1)), 1);
        assert_eq!(res.odometer.get(SiteId::tooth(1)), 0);
        assert_eq!(res.executed, 1);
        assert_eq!(res.absorbed(), 0);
    }

    #[test]
    fn all_ones_on_c1_can_sleep_in_place() {
        let g = Graph::Comb { n: 1 };
        let src = ScriptedStacks::new(g)
            .with_positive(SiteId::spine(1), "s")
            .with_positive(SiteId::tooth(1), "s");
        let res = exact_stationary_sample(&src, Policy::Fifo, 1_000).unwrap();
        assert_eq!(res.config.total_sleepers(), 2);
        assert_eq!(res.odometer.get(SiteId::spine(1)), 1);
        assert_eq!(res.odometer.get(SiteId::tooth(1)), 1);
    }

    #[test]
    fn sleep_is_a_consumed_noop_with_company() {
        // Two actives at spine 1: the sleep at index 1 must burn without
        // effect, then both particles exit left.
        let g = Graph::Interval { n: 1 };
        let src = ScriptedStacks::new(g).with_positive(SiteId::spine(1), "sll");
        let mut config = Configuration::empty(g);
        config.set(SiteId::spine(1), SiteState::Active(2));
        let res = stabilize(&config, &src, Policy::Fifo, 1_000).unwrap();
        assert_eq!(res.config.get(SiteId::spine(1)), SiteState::Active(0));
        assert_eq!(res.odometer.get(SiteId::spine(1)), 3);
        assert_eq!(res.absorbed_left, 2);
    }

    #[test]
    fn arrivals_wake_sleepers() {
        // Site 1 sleeps; site 2 sends a particle left, waking it to two
        // actives, which then drain out left.
        let g = Graph::Interval { n: 2 };
        let src = ScriptedStacks::new(g)
            .with_positive(SiteId::spine(1), "slll")
            .with_positive(SiteId::spine(2), "l");
        let mut config = Configuration::empty(g);
        config.set(SiteId::spine(1), SiteState::Active(1));
        config.set(SiteId::spine(2), SiteState::Active(1));
        let res = stabilize(&config, &src, Policy::Lifo, 1_000).unwrap();
        assert_eq!(res.config.get(SiteId::spine(1)), SiteState::Active(0));
        assert_eq!(res.config.get(SiteId::spine(2)), SiteState::Active(0));
        assert_eq!(res.absorbed_left, 2);
        // The wake itself consumed no instruction: site 1 executed sleep,
        // then exactly two lefts.
        assert_eq!(res.odometer.get(SiteId::spine(1)), 3);
    }

    #[test]
    fn policies_agree_on_random_instances() {
        for seed in 0..25u64 {
            let n = 2 + (seed % 7) as u32;
            let g = if seed % 2 == 0 { Graph::Comb { n } } else { Graph::Interval { n } };
            let src = SeededStacks::new(g, 0.6 + 0.1 * (seed % 5) as f64, 1000 + seed).unwrap();
            let mut config = Configuration::empty(g);
            let mut x = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
            for site in g.interior_sites().collect::<Vec<_>>() {
                x ^= x << 13;
                x ^= x >> 7;
                x ^= x << 17;
                config.set(site, SiteState::Active((x % 3) as u32));
            }
            let a = stabilize(&config, &src, Policy::Fifo, 1_000_000).unwrap();
            let b = stabilize(&config, &src, Policy::Lifo, 1_000_000).unwrap();
            let c = stabilize(&config, &src, Policy::Random { seed: seed * 7 + 1 }, 1_000_000)
                .unwrap();
            assert_eq!(a.config, b.config);
            assert_eq!(a.odometer, b.odometer);
            assert_eq!(a.config, c.config);
            assert_eq!(a.odometer, c.odometer);
            assert_eq!(a.executed, b.executed);
            assert_eq!(a.executed, c.executed);
        }
    }

    #[test]
    fn particles_are_conserved() {
        let g = Graph::Comb { n: 6 };
        let src = SeededStacks::new(g, 0.9, 77).unwrap();
        let mut config = Configuration::ones(g);
        config.set(SiteId::spine(3), SiteState::Active(4));
        let before = config.particle_count();
        let res = stabilize(&config, &src, Policy::Fifo, 1_000_000).unwrap();
        assert_eq!(before, res.config.particle_count() + res.absorbed());
        assert!(!res.config.has_active());
    }

    #[test]
    fn budget_guard_trips() {
        let g = Graph::Interval { n: 40 };
        let src = SeededStacks::new(g, 0.05, 3).unwrap();
        let err = stabilize(&Configuration::ones(g), &src, Policy::Fifo, 10).unwrap_err();
        assert!(matches!(err, Error::BudgetExhausted { executed: 10 }));
    }

    #[test]
    fn high_lambda_interval_density_is_near_one() {
        let mut densities = Vec::new();
        for seed in 0..20u64 {
            let g = Graph::Interval { n: 60 };
            let src = SeededStacks::new(g, 50.0, 4000 + seed).unwrap();
            let res = exact_stationary_sample(&src, Policy::Fifo, 100_000_000).unwrap();
            densities.push(res.config.total_sleepers() as f64 / 60.0);
        }
        let mean = densities.iter().sum::<f64>() / densities.len() as f64;
        assert!(mean > 0.9, "mean interval density {mean} at λ = 50");
    }

    #[test]
    fn partial_phase_keeps_every_tooth_awake_and_resumes_to_the_same_end() {
        let g = Graph::Comb { n: 12 };
        let src = SeededStacks::new(g, 1.0, 2712).unwrap();
        let ones = Configuration::ones(g);
        let partial = partial_spine_stabilize(&ones, &src, 10_000_000).unwrap();
        for v in 1..=12 {
            assert_eq!(partial.config.get(SiteId::tooth(v)), SiteState::Active(1));
            let sp = partial.config.get(SiteId::spine(v));
            assert!(
                matches!(sp, SiteState::Sleeping | SiteState::Active(0)),
                "spine {v} unstable after partial phase: {sp:?}"
            );
        }
        let resumed = resume_stabilize(&partial, &src, Policy::Fifo, 10_000_000).unwrap();
        let direct = stabilize(&ones, &src, Policy::Fifo, 10_000_000).unwrap();
        assert_eq!(resumed.config, direct.config);
        assert_eq!(resumed.odometer, direct.odometer);
    }

    #[test]
    fn driven_chain_records_consistent_sleeper_splits() {
        let g = Graph::Comb { n: 15 };
        let src = SeededStacks::new(g, 0.8, 909).unwrap();
        let (trace, end) =
            drive_dissipate(&src, 120, Driving::Uniform, Policy::Fifo, 100_000_000, 5).unwrap();
        assert_eq!(trace.steps.len(), 120);
        for step in &trace.steps {
            assert_eq!(step.total, step.teeth + step.spine);
        }
        assert!(!end.config.has_active());
        let last = trace.steps.last().unwrap();
        assert_eq!(last.total, end.config.total_sleepers());
    }

    #[test]
    fn fixed_site_driving_validates_the_site() {
        let g = Graph::Interval { n: 3 };
        let src = SeededStacks::new(g, 1.0, 1).unwrap();
        let err = drive_dissipate(
            &src,
            5,
            Driving::Fixed(SiteId::tooth(1)),
            Policy::Fifo,
            1_000_000,
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidSite(_)));
    }
}

