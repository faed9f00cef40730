//! Two-sided per-site instruction stacks and signed instruction counts.
//!
//! Every non-sink site carries a doubly infinite list of instructions indexed
//! by `ℤ`. Index `0` is forced: `Left` on spine sites, `Down` on teeth. Every
//! other index holds `Sleep` with probability `λ/(1+λ)` and otherwise a
//! uniformly chosen jump from the site's jump set (`{Left, Right, Up}` on a
//! comb spine, `{Left, Right}` on an interval spine, `{Down}` on a tooth).
//!
//! Stacks are immutable and lazily evaluated: [`SeededStacks`] derives the
//! instruction at `(site, index)` as a pure function of the master seed via a
//! keyed 64-bit mix, so the same coordinates always return the same
//! instruction with no storage. [`ScriptedStacks`] pins explicit instruction
//! windows for golden-replay tests.

use crate::graph::{Graph, SiteId, SiteKind};
use crate::{Error, Result};

/// A single stack entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Instruction {
    Sleep,
    Left,
    Right,
    Up,
    Down,
}

impl Instruction {
    /// Compact index used for count arrays.
    pub const fn slot(self) -> usize {
        match self {
            Instruction::Sleep => 0,
            Instruction::Left => 1,
            Instruction::Right => 2,
            Instruction::Up => 3,
            Instruction::Down => 4,
        }
    }

    /// All five instruction kinds, in `slot` order.
    pub const ALL: [Instruction; 5] = [
        Instruction::Sleep,
        Instruction::Left,
        Instruction::Right,
        Instruction::Up,
        Instruction::Down,
    ];

    /// One-letter rendering used by the instruction-listing debug output.
    pub const fn letter(self) -> char {
        match self {
            Instruction::Sleep => 's',
            Instruction::Left => 'l',
            Instruction::Right => 'r',
            Instruction::Up => 'u',
            Instruction::Down => 'd',
        }
    }

    /// Whether this instruction moves a particle (everything but `Sleep`).
    pub const fn is_jump(self) -> bool {
        !matches!(self, Instruction::Sleep)
    }
}

/// Read-only access to a family of instruction stacks over one graph.
pub trait InstructionSource {
    /// The graph whose sites the stacks cover.
    fn graph(&self) -> Graph;

    /// Instruction at `(site, index)`. Errors on sinks and nonexistent sites.
    fn instruction_at(&self, site: SiteId, index: i64) -> Result<Instruction>;
}

/// Jump set of a site, in the fixed order used for uniform selection.
pub fn jump_set(graph: Graph, site: SiteId) -> &'static [Instruction] {
    match (site.kind, graph.has_teeth()) {
        (SiteKind::Spine, true) => &[Instruction::Left, Instruction::Right, Instruction::Up],
        (SiteKind::Spine, false) => &[Instruction::Left, Instruction::Right],
        (SiteKind::Tooth, _) => &[Instruction::Down],
    }
}

/// Forced instruction at index `0`.
pub fn forced_zero(site: SiteId) -> Instruction {
    match site.kind {
        SiteKind::Spine => Instruction::Left,
        SiteKind::Tooth => Instruction::Down,
    }
}

const MIX_C1: u64 = 0x9e37_79b9_7f4a_7c15;
const MIX_C2: u64 = 0xc2b2_ae3d_27d4_eb4f;
const MIX_C3: u64 = 0x1656_67b1_9e37_79f9;

/// splitmix64 finalizer: full-avalanche bijection on `u64`.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Keyed word for `(seed, site, index)`; three finalizer rounds so every
/// input bit avalanches into the output.
#[inline]
fn keyed_word(seed: u64, site_code: u64, index: i64) -> u64 {
    let a = mix64(seed ^ MIX_C1);
    let b = mix64(a ^ site_code.wrapping_mul(MIX_C2));
    mix64(b ^ (index as u64).wrapping_mul(MIX_C3))
}

#[inline]
fn site_code(site: SiteId) -> u64 {
    let tag = match site.kind {
        SiteKind::Spine => 0,
        SiteKind::Tooth => 1,
    };
    ((site.index as u64) << 1) | tag
}

/// Lazily evaluated random stacks keyed by a master seed.
///
/// `instruction_at` is a pure function of `(seed, site, index)`: one keyed
/// word decides sleep-vs-jump against the integer threshold `λ/(1+λ)·2^64`,
/// and an independently derived word picks uniformly inside the jump set
/// (widening-multiply reduction, bias `< 2^-62`).
#[derive(Debug, Clone)]
pub struct SeededStacks {
    graph: Graph,
    lambda: f64,
    seed: u64,
    sleep_threshold: u64,
}

impl SeededStacks {
    /// New stack family on `graph` with sleep rate `λ > 0`.
    pub fn new(graph: Graph, lambda: f64, seed: u64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        let p = lambda / (1.0 + lambda);
        // 2^64 as f64 is exact; the cast saturates at u64::MAX for p ≈ 1.
        let sleep_threshold = (p * 18_446_744_073_709_551_616.0) as u64;
        Ok(SeededStacks { graph, lambda, seed, sleep_threshold })
    }

    /// The sleep rate `λ`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The master seed.
    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl InstructionSource for SeededStacks {
    fn graph(&self) -> Graph {
        self.graph
    }

    fn instruction_at(&self, site: SiteId, index: i64) -> Result<Instruction> {
        if self.graph.is_sink(site) {
            return Err(Error::SinkSite(site));
        }
        if !self.graph.contains(site) {
            return Err(Error::InvalidSite(site));
        }
        if index == 0 {
            return Ok(forced_zero(site));
        }
        let w = keyed_word(self.seed, site_code(site), index);
        if w < self.sleep_threshold {
            return Ok(Instruction::Sleep);
        }
        let jumps = jump_set(self.graph, site);
        let choice = mix64(w ^ MIX_C1);
        let k = ((choice as u128 * jumps.len() as u128) >> 64) as usize;
        Ok(jumps[k])
    }
}

/// Explicit instruction windows for tests and golden replays.
///
/// Each scripted site holds a contiguous window of instructions starting at a
/// chosen index; queries outside every window fall back to `Sleep` (and to
/// the forced instruction at index `0`).
#[derive(Debug, Clone, Default)]
pub struct ScriptedStacks {
    graph: Option<Graph>,
    scripts: std::collections::HashMap<SiteId, (i64, Vec<Instruction>)>,
}

impl ScriptedStacks {
    /// Empty script set over `graph`.
    pub fn new(graph: Graph) -> Self {
        ScriptedStacks { graph: Some(graph), scripts: Default::default() }
    }

    /// Pin `instructions` at `site` starting from `start_index` (inclusive).
    /// Windows covering index `0` must respect the forced instruction there.
    pub fn with_site(
        mut self,
        site: SiteId,
        start_index: i64,
        instructions: Vec<Instruction>,
    ) -> Self {
        if start_index <= 0 && 0 < start_index + instructions.len() as i64 {
            let at_zero = instructions[(-start_index) as usize];
            assert_eq!(
                at_zero,
                forced_zero(site),
                "scripted window at {site} must keep the forced index-0 instruction"
            );
        }
        self.scripts.insert(site, (start_index, instructions));
        self
    }

    /// Convenience: script indices `1..` at `site`, parsing one letter per
    /// instruction from `letters` (`s`, `l`, `r`, `u`, `d`).
    pub fn with_positive(self, site: SiteId, letters: &str) -> Self {
        let instructions = letters
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                's' => Instruction::Sleep,
                'l' => Instruction::Left,
                'r' => Instruction::Right,
                'u' => Instruction::Up,
                'd' => Instruction::Down,
                other => panic!("unknown instruction letter {other:?}"),
            })
            .collect();
        self.with_site(site, 1, instructions)
    }
}

impl InstructionSource for ScriptedStacks {
    fn graph(&self) -> Graph {
        self.graph.expect("ScriptedStacks::new sets the graph")
    }

    fn instruction_at(&self, site: SiteId, index: i64) -> Result<Instruction> {
        let graph = self.graph();
        if graph.is_sink(site) {
            return Err(Error::SinkSite(site));
        }
        if !graph.contains(site) {
            return Err(Error::InvalidSite(site));
        }
        if let Some((start, window)) = self.scripts.get(&site) {
            let off = index - start;
            if off >= 0 && (off as usize) < window.len() {
                return Ok(window[off as usize]);
            }
        }
        if index == 0 {
            return Ok(forced_zero(site));
        }
        Ok(Instruction::Sleep)
    }
}

/// Signed count of `kind` instructions in the stack at `site` up to odometer
/// value `u`.
///
/// For `u ≥ 0` this is the number of indices `1 ≤ i ≤ u` holding `kind`; for
/// `u < 0` it is minus the number of indices `u ≤ i ≤ 0` holding `kind`
/// (both endpoints inclusive, so the forced index-0 instruction is counted on
/// the negative side). Sinks count `0` for every kind by convention.
pub fn count_kind(
    src: &impl InstructionSource,
    site: SiteId,
    kind: Instruction,
    u: i64,
) -> Result<i64> {
    if src.graph().is_sink(site) {
        return Ok(0);
    }
    let mut c = 0i64;
    if u >= 0 {
        for i in 1..=u {
            if src.instruction_at(site, i)? == kind {
                c += 1;
            }
        }
    } else {
        for i in u..=0 {
            if src.instruction_at(site, i)? == kind {
                c -= 1;
            }
        }
    }
    Ok(c)
}
