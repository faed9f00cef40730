//! The correspondence between stable outcomes and infection paths.
//!
//! A stabilization of a comb (or interval) is summarized by its odometer `u`:
//! the signed number of instructions each site consumed. Among all odometers
//! that are *stable outcomes* for a given initial configuration `σ` and left
//! boundary outflow `f₀` — meaning every site's final particle height lies in
//! `{0, 1}` and equals `1` exactly when the site's last instruction was a
//! sleep — there is a recursive lower envelope, the minimal odometer. Reading
//! each spine stack upward from its minimal value decomposes the stack into
//! slots, chunks, and regions, which assemble into a sequence of two-layer
//! shapes; a stable outcome then corresponds to an infection path through
//! those shape sequences, one step per spine site.
//!
//! This module computes minimal odometers ([`minimal_odometer`]), checks
//! membership in the stable-outcome class ([`verify_stable`]), parses stacks
//! into shape sequences ([`parse_site`]), maps stable odometers to infection
//! paths ([`phi`]), and inverts paths back to odometers
//! ([`odometer_from_path`]).

use rand::Rng;

use crate::arw::{Configuration, Odometer};
use crate::graph::SiteId;
use crate::instr::{count_kind, Instruction, InstructionSource};
use crate::laws::{assemble_comb_shape, Cell, CombChunk, CombShapeMeta, Shape};
use crate::{Error, Result};

/// A scanning cursor over one site's instruction stack.
///
/// Tracks the signed count of every instruction kind at the current index
/// `m`: for `m ≥ 0` the number of occurrences among indices `1..=m`, for
/// `m < 0` minus the number among `m..=0`. Stepping from `-1` to `0` (or
/// back) therefore adjusts the tallies of *both* index `-1` and the forced
/// index `0` at once. Every stack access is bounded by `guard`: scanning past
/// `|index| > guard` aborts with [`Error::ScanGuardExceeded`].
struct Cursor<'a, S: InstructionSource> {
    src: &'a S,
    site: SiteId,
    m: i64,
    counts: [i64; 5],
    guard: i64,
}

impl<'a, S: InstructionSource> Cursor<'a, S> {
    fn new(src: &'a S, site: SiteId, guard: i64) -> Self {
        Cursor { src, site, m: 0, counts: [0; 5], guard }
    }

    fn fetch(&self, index: i64) -> Result<Instruction> {
        if index.abs() > self.guard {
            return Err(Error::ScanGuardExceeded { site: self.site, guard: self.guard });
        }
        self.src.instruction_at(self.site, index)
    }

    fn count(&self, kind: Instruction) -> i64 {
        self.counts[kind.slot()]
    }

    fn up(&mut self) -> Result<()> {
        if self.m >= 0 {
            let ins = self.fetch(self.m + 1)?;
            self.counts[ins.slot()] += 1;
        } else if self.m == -1 {
            let a = self.fetch(-1)?;
            let b = self.fetch(0)?;
            self.counts[a.slot()] += 1;
            self.counts[b.slot()] += 1;
        } else {
            let ins = self.fetch(self.m)?;
            self.counts[ins.slot()] += 1;
        }
        self.m += 1;
        Ok(())
    }

    fn down(&mut self) -> Result<()> {
        if self.m >= 1 {
            let ins = self.fetch(self.m)?;
            self.counts[ins.slot()] -= 1;
        } else if self.m == 0 {
            let a = self.fetch(-1)?;
            let b = self.fetch(0)?;
            self.counts[a.slot()] -= 1;
            self.counts[b.slot()] -= 1;
        } else {
            let ins = self.fetch(self.m - 1)?;
            self.counts[ins.slot()] -= 1;
        }
        self.m -= 1;
        Ok(())
    }

    fn advance_to(&mut self, target: i64) -> Result<()> {
        while self.m < target {
            self.up()?;
        }
        while self.m > target {
            self.down()?;
        }
        Ok(())
    }

    /// Smallest index `m` with `count(kind) ≥ target`, leaving the cursor
    /// there. Exists for any target because signed counts are nondecreasing
    /// and unbounded in both directions (the guard catches stacks where a
    /// kind runs out).
    fn seek_count_at_least(&mut self, kind: Instruction, target: i64) -> Result<i64> {
        while self.count(kind) < target {
            self.up()?;
        }
        loop {
            let found = self.m;
            self.down()?;
            if self.count(kind) < target {
                self.up()?;
                return Ok(found);
            }
        }
    }
}

/// Lower envelope of the stable-outcome class for `(σ, f₀)`.
#[derive(Debug, Clone)]
pub struct MinimalOdometer {
    /// Pointwise lower bound on every stable outcome. On spine sites this
    /// equals `anchors`; on teeth it may be smaller, because a tooth whose
    /// stack sleeps just below the flow balance point admits stable outcomes
    /// ending on that sleep.
    pub values: Odometer,
    /// The recursive balance points themselves: on the spine, the smallest
    /// index whose left-jump count covers the inflow that `f₀` and the
    /// initial particles force through the site; on a tooth, the smallest
    /// index whose down-jump count returns every particle the spine sent up.
    /// Stack parsing and path inversion read stacks relative to these.
    pub anchors: Odometer,
    /// Whether every spine anchor meets its inflow target exactly. A
    /// negative target can fall inside the fused `-1↔0` boundary step,
    /// leaving the anchor's left-jump count above the target; the slot
    /// decomposition and path inversion assume this never happened.
    pub balanced: bool,
    /// The boundary outflow the recursion was run with.
    pub f0: i64,
}

/// Computes the minimal odometer of the `(σ, f₀)` stable-outcome class.
///
/// Walks the spine left to right. At spine site `v` the left-jump count must
/// reach `rt(𝔪, v−1) − f₀ − Σ_{i<v}(|σ(i)| + |σ(i')|)`; the smallest such
/// index is the site's anchor (and value). On a comb, tooth `v'` must return
/// `up(𝔪(v), v) + |σ(v')|` particles; the smallest index whose down count
/// reaches that is the tooth's anchor, while the tooth's *value* may stop one
/// particle short on a sleep instruction at or above the previous balance
/// point.
pub fn minimal_odometer(
    src: &impl InstructionSource,
    sigma: &Configuration,
    f0: i64,
    guard: i64,
) -> Result<MinimalOdometer> {
    let graph = src.graph();
    if sigma.graph() != graph {
        return Err(Error::InvalidParameter(
            "initial configuration and instruction stacks disagree on the graph".into(),
        ));
    }
    if guard <= 0 {
        return Err(Error::InvalidParameter(format!("scan guard must be positive, got {guard}")));
    }
    let n = graph.n();
    let mut values = Odometer::zeros(graph);
    let mut anchors = Odometer::zeros(graph);
    let mut balanced = true;
    let mut rt_prev = 0i64;
    let mut initial_prefix = 0i64;
    for v in 1..=n {
        let spine = SiteId::spine(v);
        let target = rt_prev - f0 - initial_prefix;
        let mut cursor = Cursor::new(src, spine, guard);
        let m_v = cursor.seek_count_at_least(Instruction::Left, target)?;
        balanced &= cursor.count(Instruction::Left) == target;
        values.set(spine, m_v);
        anchors.set(spine, m_v);
        let up_v = cursor.count(Instruction::Up);
        rt_prev = cursor.count(Instruction::Right);
        initial_prefix += i64::from(sigma.get(spine).particles());
        if graph.has_teeth() {
            let tooth = SiteId::tooth(v);
            let sent_down = up_v + i64::from(sigma.get(tooth).particles());
            let mut cursor = Cursor::new(src, tooth, guard);
            let m_full = cursor.seek_count_at_least(Instruction::Down, sent_down)?;
            anchors.set(tooth, m_full);
            // A stable outcome may also end on a sleep instruction while one
            // particle is still held back, provided the down count has
            // already reached `sent_down − 1`. The earliest such index, when
            // it exists below `m_full`, is the true pointwise minimum.
            let m_short = cursor.seek_count_at_least(Instruction::Down, sent_down - 1)?;
            let mut value = m_full;
            for m in m_short..m_full {
                if m.abs() > guard {
                    return Err(Error::ScanGuardExceeded { site: tooth, guard });
                }
                if src.instruction_at(tooth, m)? == Instruction::Sleep {
                    value = m;
                    break;
                }
            }
            values.set(tooth, value);
            initial_prefix += i64::from(sigma.get(tooth).particles());
        }
    }
    Ok(MinimalOdometer { values, anchors, balanced, f0 })
}

/// One failed stability condition.
#[derive(Debug, Clone)]
pub struct Violation {
    /// The site the condition belongs to; `None` for global conditions such
    /// as the boundary outflow.
    pub site: Option<SiteId>,
    pub message: String,
}

/// Outcome of [`verify_stable`]: empty means the odometer is a stable
/// outcome of the `(σ, f₀)` class.
#[derive(Debug, Clone, Default)]
pub struct StabilityReport {
    pub violations: Vec<Violation>,
}

impl StabilityReport {
    pub fn stable(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks whether `u` is a stable outcome for initial configuration `σ` and
/// boundary outflow `f₀`.
///
/// Verified conditions, all phrased through signed instruction counts at the
/// odometer values:
///
/// * the left sink absorbs exactly `−f₀` particles: `−lt(u(1), 1) = f₀`;
/// * every site's final height (initial particles plus jumps in, minus jumps
///   out) lies in `{0, 1}` and equals `1` exactly when the site's last
///   consumed instruction is a sleep;
/// * the rightward flow past each spine site matches the running mass
///   balance `f_v = f₀ + Σ_{i≤v}(|σ(i)| + |σ(i')|) − s_v`, with `s_v` the
///   number of sleeping sites up to `v`;
/// * each tooth returns all particles sent up except a possible final
///   sleeper: `dn(u, v') − up(u, v) = |σ(v')| − 1{v' sleeps}`.
///
/// Never fails: every discrepancy is reported as a [`Violation`].
pub fn verify_stable(
    src: &impl InstructionSource,
    sigma: &Configuration,
    f0: i64,
    u: &Odometer,
) -> StabilityReport {
    let graph = src.graph();
    let mut violations = Vec::new();
    if sigma.graph() != graph || u.graph() != graph {
        violations.push(Violation {
            site: None,
            message: "configuration, stacks, and odometer must share one graph".into(),
        });
        return StabilityReport { violations };
    }
    let n = graph.n();
    let count = |site: SiteId, kind: Instruction| -> i64 {
        count_kind(src, site, kind, u.get(site)).expect("sites of the shared graph")
    };
    let last = |site: SiteId| -> Instruction {
        src.instruction_at(site, u.get(site)).expect("interior site")
    };

    let boundary = -count(SiteId::spine(1), Instruction::Left);
    if boundary != f0 {
        violations.push(Violation {
            site: None,
            message: format!("left sink absorbs {boundary} particles, boundary outflow is {f0}"),
        });
    }

    let mut sleepers = 0i64;
    let mut initial_prefix = 0i64;
    for v in 1..=n {
        let site = SiteId::spine(v);
        let mut inflow = count(SiteId::spine(v - 1), Instruction::Right)
            + count(SiteId::spine(v + 1), Instruction::Left);
        let mut outflow = count(site, Instruction::Left) + count(site, Instruction::Right);
        if graph.has_teeth() {
            inflow += count(SiteId::tooth(v), Instruction::Down);
            outflow += count(site, Instruction::Up);
        }
        let height = i64::from(sigma.get(site).particles()) + inflow - outflow;
        let sleeping = last(site) == Instruction::Sleep;
        check_height(&mut violations, site, height, sleeping);
        if height == 1 {
            sleepers += 1;
        }
        initial_prefix += i64::from(sigma.get(site).particles());

        if graph.has_teeth() {
            let tooth = SiteId::tooth(v);
            let up_in = count(site, Instruction::Up);
            let down_out = count(tooth, Instruction::Down);
            let height = i64::from(sigma.get(tooth).particles()) + up_in - down_out;
            let sleeping = last(tooth) == Instruction::Sleep;
            check_height(&mut violations, tooth, height, sleeping);
            if height == 1 {
                sleepers += 1;
            }
            initial_prefix += i64::from(sigma.get(tooth).particles());
            let returned = down_out - up_in;
            let expected = i64::from(sigma.get(tooth).particles()) - i64::from(height == 1);
            if returned != expected {
                violations.push(Violation {
                    site: Some(tooth),
                    message: format!(
                        "tooth returns {returned} net particles, mass balance needs {expected}"
                    ),
                });
            }
        }

        let flow = count(site, Instruction::Right)
            - count(SiteId::spine(v + 1), Instruction::Left);
        let expected = f0 + initial_prefix - sleepers;
        if flow != expected {
            violations.push(Violation {
                site: Some(site),
                message: format!(
                    "rightward flow past site {v} is {flow}, mass balance needs {expected}"
                ),
            });
        }
    }
    StabilityReport { violations }
}

fn check_height(violations: &mut Vec<Violation>, site: SiteId, height: i64, sleeping: bool) {
    if height != 0 && height != 1 {
        violations.push(Violation {
            site: Some(site),
            message: format!("final height {height} at {site} is outside {{0, 1}}"),
        });
    } else if height == 1 && !sleeping {
        violations.push(Violation {
            site: Some(site),
            message: format!("height 1 at {site} but the last instruction is not a sleep"),
        });
    } else if height == 0 && sleeping {
        violations.push(Violation {
            site: Some(site),
            message: format!("height 0 at {site} but the last instruction is a sleep"),
        });
    }
}

/// The parsed slot/chunk/region decomposition of one spine site's stack
/// (with its tooth), read upward from the minimal odometer.
#[derive(Debug, Clone)]
pub struct ParsedSite {
    pub site: SiteId,
    pub spine_anchor: i64,
    pub tooth_anchor: i64,
    /// Whether the instruction directly below the tooth anchor is a sleep;
    /// seeds the top indicator of the very first chunk.
    pub sleep_before_tooth_anchor: bool,
    /// One chunk decomposition per slot, in stack order.
    pub slots: Vec<CombShapeMeta>,
    /// The two-layer shape each slot assembles into.
    pub shapes: Vec<Shape>,
    spine_slot_letters: Vec<String>,
    tooth_letters: String,
}

impl ParsedSite {
    /// Column offset of slot `j`: the total width the earlier slots cover.
    pub fn offset(&self, j: usize) -> u64 {
        self.shapes[..j].iter().map(Shape::r_max).sum()
    }

    /// Renders the decomposition as an annotated listing: the letter stream
    /// of each slot (`l` opening, chunks split at `u`), the tooth stream,
    /// and each slot's chunk summary with its assembled shape.
    pub fn render_listing(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "site {}  spine anchor {}  tooth anchor {}  sleep before tooth anchor: {}",
            self.site.index,
            self.spine_anchor,
            self.tooth_anchor,
            if self.sleep_before_tooth_anchor { "yes" } else { "no" },
        );
        let _ = writeln!(out, "spine: {}", self.spine_slot_letters.join(" | "));
        let _ = writeln!(out, "tooth: {}", self.tooth_letters);
        for (j, (meta, shape)) in self.slots.iter().zip(&self.shapes).enumerate() {
            let widths: Vec<u32> = meta.chunks.iter().map(|c| c.width).collect();
            let tops: Vec<u8> = meta.chunks.iter().map(|c| u8::from(c.top)).collect();
            let sleeps: Vec<Vec<u8>> = meta
                .chunks
                .iter()
                .map(|c| c.sleeps.iter().map(|&s| u8::from(s)).collect())
                .collect();
            let _ = writeln!(
                out,
                "slot {j}: U={} R={widths:?} T={tops:?} S={sleeps:?}",
                meta.chunks.len()
            );
            out.push_str(&crate::laws::render_shape(shape));
        }
        out
    }
}

/// Reads downward-jump positions of a tooth stack above its anchor, on
/// demand, remembering everything scanned.
struct ToothReader<'a, S: InstructionSource> {
    src: &'a S,
    site: SiteId,
    pos: i64,
    downs: Vec<i64>,
    letters: String,
    guard: i64,
}

impl<'a, S: InstructionSource> ToothReader<'a, S> {
    fn new(src: &'a S, site: SiteId, anchor: i64, guard: i64) -> Self {
        ToothReader { src, site, pos: anchor, downs: Vec::new(), letters: String::new(), guard }
    }

    /// Absolute index of the `k`-th (0-based) down instruction strictly
    /// above the anchor.
    fn down_index(&mut self, k: usize) -> Result<i64> {
        while self.downs.len() <= k {
            self.pos += 1;
            if self.pos.abs() > self.guard {
                return Err(Error::ScanGuardExceeded { site: self.site, guard: self.guard });
            }
            let ins = self.src.instruction_at(self.site, self.pos)?;
            if !self.letters.is_empty() {
                self.letters.push(' ');
            }
            self.letters.push(ins.letter());
            if ins == Instruction::Down {
                self.downs.push(self.pos);
            }
        }
        Ok(self.downs[k])
    }
}

/// Parses the first `slot_count` slots of spine site `v`'s stack, read
/// upward from the minimal odometer's anchors.
///
/// Slots are delimited by left jumps (the anchor instruction opens slot
/// `0`); up jumps split a slot into chunks; the right jumps of a chunk split
/// it into regions, one per covered column. A chunk's sleep indicators
/// record which regions contain a sleep instruction. A chunk's top indicator
/// comes from the tooth: chunks opened by the `g`-th up jump look at the
/// instruction directly below the `g`-th down jump above the tooth anchor,
/// the first chunk of slot `0` looks directly below the tooth anchor itself,
/// and the first chunk of any later slot inherits the previous slot's last
/// top.
pub fn parse_site(
    src: &impl InstructionSource,
    minimal: &MinimalOdometer,
    v: u32,
    slot_count: usize,
    guard: i64,
) -> Result<ParsedSite> {
    let graph = src.graph();
    if !graph.has_teeth() {
        return Err(Error::InvalidParameter("stack parsing needs a comb graph".into()));
    }
    if v == 0 || v > graph.n() {
        return Err(Error::InvalidSite(SiteId::spine(v)));
    }
    let spine = SiteId::spine(v);
    let tooth = SiteId::tooth(v);
    let spine_anchor = minimal.anchors.get(spine);
    let tooth_anchor = minimal.anchors.get(tooth);
    if (tooth_anchor - 1).abs() > guard {
        return Err(Error::ScanGuardExceeded { site: tooth, guard });
    }
    let sleep_before_tooth_anchor =
        src.instruction_at(tooth, tooth_anchor - 1)? == Instruction::Sleep;

    let mut teeth = ToothReader::new(src, tooth, tooth_anchor, guard);
    let mut slots = Vec::with_capacity(slot_count);
    let mut shapes = Vec::with_capacity(slot_count);
    let mut spine_slot_letters = Vec::with_capacity(slot_count);
    let mut ups_consumed = 0usize;
    let mut carry_top = sleep_before_tooth_anchor;
    let mut m = spine_anchor;
    for _ in 0..slot_count {
        let mut chunks: Vec<CombChunk> = Vec::new();
        let mut sleeps: Vec<bool> = Vec::new();
        let mut region_has_sleep = false;
        let mut chunk_top = carry_top;
        let mut letters = String::from("l");
        loop {
            m += 1;
            if m.abs() > guard {
                return Err(Error::ScanGuardExceeded { site: spine, guard });
            }
            match src.instruction_at(spine, m)? {
                Instruction::Left => {
                    sleeps.push(region_has_sleep);
                    chunks.push(CombChunk {
                        width: sleeps.len() as u32,
                        top: chunk_top,
                        sleeps: std::mem::take(&mut sleeps),
                    });
                    break;
                }
                Instruction::Right => {
                    letters.push('r');
                    sleeps.push(region_has_sleep);
                    region_has_sleep = false;
                }
                Instruction::Sleep => {
                    letters.push('s');
                    region_has_sleep = true;
                }
                Instruction::Up => {
                    letters.push_str(" u");
                    sleeps.push(region_has_sleep);
                    region_has_sleep = false;
                    chunks.push(CombChunk {
                        width: sleeps.len() as u32,
                        top: chunk_top,
                        sleeps: std::mem::take(&mut sleeps),
                    });
                    let down = teeth.down_index(ups_consumed)?;
                    ups_consumed += 1;
                    if (down - 1).abs() > guard {
                        return Err(Error::ScanGuardExceeded { site: tooth, guard });
                    }
                    chunk_top = src.instruction_at(tooth, down - 1)? == Instruction::Sleep;
                }
                Instruction::Down => {
                    return Err(Error::InvalidParameter(format!(
                        "unexpected down instruction in the spine stack at index {m}"
                    )));
                }
            }
        }
        carry_top = chunks.last().expect("every slot holds a chunk").top;
        let meta = CombShapeMeta { chunks };
        shapes.push(assemble_comb_shape(&meta));
        slots.push(meta);
        spine_slot_letters.push(letters);
    }
    Ok(ParsedSite {
        site: spine,
        spine_anchor,
        tooth_anchor,
        sleep_before_tooth_anchor,
        slots,
        shapes,
        spine_slot_letters,
        tooth_letters: teeth.letters,
    })
}

/// Parses every spine site of a comb to depth `slot_count`.
pub fn parse_comb(
    src: &impl InstructionSource,
    minimal: &MinimalOdometer,
    slot_count: usize,
    guard: i64,
) -> Result<Vec<ParsedSite>> {
    (1..=src.graph().n()).map(|v| parse_site(src, minimal, v, slot_count, guard)).collect()
}

/// One cell of an infection path: the right jumps `r` the site consumed
/// beyond its anchor, and the cumulative sleepers `s` through the spine
/// prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathCell {
    pub r: u64,
    pub s: u32,
}

impl PathCell {
    pub fn diagonal(self) -> u64 {
        self.r + u64::from(self.s)
    }
}

/// An infection path: one cell per spine prefix, starting at the origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfectionPath {
    pub cells: Vec<PathCell>,
}

/// The diagonal every stable outcome's final path cell lands on.
///
/// The right sink consumes no instructions, so the flow past the last site
/// is pinned absolutely: `rt(u, n) = f₀ + |σ| − s_n`. Subtracting the
/// anchor's right count turns this into `r_n + s_n = f₀ + |σ| − rt(anchor,
/// n)` — a constant of the instance. Interior sites face no such pin
/// because the next site's left jumps absorb whatever the cell chooses.
pub fn final_diagonal(
    src: &impl InstructionSource,
    sigma: &Configuration,
    f0: i64,
    minimal: &MinimalOdometer,
) -> Result<i64> {
    let graph = src.graph();
    let n = graph.n();
    let mut total = 0i64;
    for v in 1..=n {
        total += i64::from(sigma.get(SiteId::spine(v)).particles());
        if graph.has_teeth() {
            total += i64::from(sigma.get(SiteId::tooth(v)).particles());
        }
    }
    let spine_n = SiteId::spine(n);
    let anchor_rights =
        count_kind(src, spine_n, Instruction::Right, minimal.anchors.get(spine_n))?;
    Ok(f0 + total - anchor_rights)
}

/// Maps a stable outcome to its infection path.
///
/// Cell `v` records how far `u` overshoots the minimal odometer in right
/// jumps (`r_v = rt(u, v) − rt(𝔪, v)`) and how many sites of the prefix end
/// asleep (`s_v`). Fails with [`Error::NotStable`] if `u` is not a stable
/// outcome of the `(σ, f₀)` class.
pub fn phi(
    src: &impl InstructionSource,
    sigma: &Configuration,
    f0: i64,
    u: &Odometer,
    guard: i64,
) -> Result<InfectionPath> {
    let report = verify_stable(src, sigma, f0, u);
    if let Some(first) = report.violations.first() {
        return Err(Error::NotStable(first.message.clone()));
    }
    let minimal = minimal_odometer(src, sigma, f0, guard)?;
    let graph = src.graph();
    let mut cells = Vec::with_capacity(graph.n() as usize + 1);
    cells.push(PathCell { r: 0, s: 0 });
    let mut s = 0u32;
    for v in 1..=graph.n() {
        let site = SiteId::spine(v);
        let r = count_kind(src, site, Instruction::Right, u.get(site))?
            - count_kind(src, site, Instruction::Right, minimal.anchors.get(site))?;
        if r < 0 {
            return Err(Error::NotStable(format!(
                "site {v} consumed fewer right jumps than the minimal odometer"
            )));
        }
        if src.instruction_at(site, u.get(site))? == Instruction::Sleep {
            s += 1;
        }
        if graph.has_teeth() {
            let tooth = SiteId::tooth(v);
            if src.instruction_at(tooth, u.get(tooth))? == Instruction::Sleep {
                s += 1;
            }
        }
        cells.push(PathCell { r: r as u64, s });
    }
    Ok(InfectionPath { cells })
}

/// Samples a random infection path over parsed shape sequences, choosing a
/// uniform cell of the reachable shape at every step and a uniform cell on
/// the pinned [`final_diagonal`] at the last one.
///
/// `parsed` must hold the sites in spine order; step `v` reads site `v+1`'s
/// sequence at the slot indexed by the current cell's diagonal. Prefixes
/// that leave the last shape without a cell on the required diagonal, or
/// that outrun the parsed slots, are redrawn.
pub fn random_infection_path(
    parsed: &[ParsedSite],
    final_diagonal: i64,
    rng: &mut impl Rng,
) -> Result<InfectionPath> {
    let mut overflows = 0u32;
    'attempt: for _ in 0..100_000 {
        let mut cells = vec![PathCell { r: 0, s: 0 }];
        for (i, site) in parsed.iter().enumerate() {
            let at = *cells.last().expect("path starts at the origin");
            let j = at.diagonal() as usize;
            if j >= site.shapes.len() {
                overflows += 1;
                continue 'attempt;
            }
            let shape = &site.shapes[j];
            let pick = if i + 1 == parsed.len() {
                let on_diagonal: Vec<Cell> = shape
                    .cells()
                    .iter()
                    .copied()
                    .filter(|c| {
                        let d = site.offset(j) + c.r + u64::from(at.s) + u64::from(c.s_sum());
                        i64::try_from(d) == Ok(final_diagonal)
                    })
                    .collect();
                if on_diagonal.is_empty() {
                    continue 'attempt;
                }
                on_diagonal[rng.random_range(0..on_diagonal.len())]
            } else {
                shape.cells()[rng.random_range(0..shape.cells().len())]
            };
            cells.push(PathCell {
                r: site.offset(j) + pick.r,
                s: at.s + pick.s_sum(),
            });
        }
        return Ok(InfectionPath { cells });
    }
    Err(Error::InvalidParameter(format!(
        "no sampled path reached final diagonal {final_diagonal} \
         ({overflows} prefixes outran the parsed slots)"
    )))
}

/// Inverts an infection path to the stable outcome it encodes.
///
/// Every step is first validated against the parsed shape sequence of its
/// site; then the odometer values are reconstructed by scanning the stacks
/// upward from the anchors:
///
/// * the spine value candidate `i_v` is the smallest index at which the
///   extra left jumps equal the previous cell's diagonal and the extra right
///   jumps equal the new cell's column;
/// * the tooth candidate is the smallest index returning every up jump
///   consumed so far;
/// * a step that adds one sleeper either stops the spine on the first sleep
///   before its next horizontal jump, or (failing that) climbs up/down pairs
///   until the tooth can stop directly on a sleep below a paired down jump;
/// * a step that adds two sleepers climbs until the spine sleeps directly
///   above an up jump whose paired down jump has a sleep directly below it.
///
/// Steps that cannot be realized fail with [`Error::InvalidPath`], as do
/// paths whose final cell misses the pinned [`final_diagonal`].
///
/// The reconstruction is sound when every anchor is nonnegative: the
/// upward scans then never straddle the pinned index-0 boundary. When some
/// anchor is negative (possible once `f₀ > 0` or the initial configuration
/// leaves early sites empty) the letter geometry below zero can mis-phase a
/// slot, and the returned odometer may fail [`verify_stable`]; callers
/// exploring that regime should re-verify the result.
pub fn odometer_from_path(
    src: &impl InstructionSource,
    sigma: &Configuration,
    f0: i64,
    path: &InfectionPath,
    guard: i64,
) -> Result<Odometer> {
    let graph = src.graph();
    if !graph.has_teeth() {
        return Err(Error::InvalidParameter("path inversion needs a comb graph".into()));
    }
    let n = graph.n();
    if path.cells.len() != n as usize + 1 {
        return Err(Error::InvalidPath {
            step: 0,
            reason: format!("path has {} cells, a comb of {n} sites needs {}", path.cells.len(), n + 1),
        });
    }
    if path.cells[0] != (PathCell { r: 0, s: 0 }) {
        return Err(Error::InvalidPath { step: 0, reason: "path must start at the origin".into() });
    }
    let minimal = minimal_odometer(src, sigma, f0, guard)?;
    if !minimal.balanced {
        return Err(Error::InvalidParameter(
            "an anchor overshoots its inflow target inside the fused boundary step; \
             the slot decomposition does not encode such instances"
                .into(),
        ));
    }
    let required = final_diagonal(src, sigma, f0, &minimal)?;
    let last = path.cells[n as usize];
    if i64::try_from(last.diagonal()) != Ok(required) {
        return Err(Error::InvalidPath {
            step: n as usize,
            reason: format!(
                "final cell ({}, {}) sits on diagonal {}, the boundary flow pins {required}",
                last.r,
                last.s,
                last.diagonal()
            ),
        });
    }
    let mut u = Odometer::zeros(graph);
    for v in 1..=n {
        let prev = path.cells[v as usize - 1];
        let cell = path.cells[v as usize];
        let ds = cell.s.checked_sub(prev.s).ok_or_else(|| Error::InvalidPath {
            step: v as usize,
            reason: "sleeper count decreases".into(),
        })?;
        if ds > 2 {
            return Err(Error::InvalidPath {
                step: v as usize,
                reason: format!("sleeper count jumps by {ds}"),
            });
        }
        let j = prev.diagonal() as usize;
        let parsed = parse_site(src, &minimal, v, j + 1, guard)?;
        let offset = parsed.offset(j);
        if cell.r < offset
            || !parsed.shapes[j].contains(Cell::new2(cell.r - offset, ds))
        {
            return Err(Error::InvalidPath {
                step: v as usize,
                reason: format!(
                    "cell ({}, {}) is not reachable from ({}, {}) through slot {j}",
                    cell.r, cell.s, prev.r, prev.s
                ),
            });
        }

        let spine = SiteId::spine(v);
        let tooth = SiteId::tooth(v);
        let mut sc = Cursor::new(src, spine, guard);
        sc.advance_to(parsed.spine_anchor)?;
        let base_l = sc.count(Instruction::Left);
        let base_r = sc.count(Instruction::Right);
        let base_u = sc.count(Instruction::Up);
        let need_l = prev.diagonal() as i64;
        let need_r = cell.r as i64;
        loop {
            let dl = sc.count(Instruction::Left) - base_l;
            let dr = sc.count(Instruction::Right) - base_r;
            if dl == need_l && dr == need_r {
                break;
            }
            if dl > need_l || dr > need_r {
                return Err(Error::InvalidPath {
                    step: v as usize,
                    reason: "no stack index realizes the cell's jump counts".into(),
                });
            }
            sc.up()?;
        }
        let i_v = sc.m;
        let mut ups = sc.count(Instruction::Up) - base_u;

        let mut tc = Cursor::new(src, tooth, guard);
        tc.advance_to(parsed.tooth_anchor)?;
        let base_d = tc.count(Instruction::Down);
        while tc.count(Instruction::Down) - base_d < ups {
            tc.up()?;
        }
        let i_tooth = tc.m;

        match ds {
            0 => {
                u.set(spine, i_v);
                u.set(tooth, i_tooth);
            }
            1 => {
                // Prefer sleeping on the spine: the first sleep after `i_v`
                // before the next horizontal jump.
                let mut spine_sleep = None;
                let mut extra_ups = 0i64;
                let mut m = i_v;
                loop {
                    m += 1;
                    if m.abs() > guard {
                        return Err(Error::ScanGuardExceeded { site: spine, guard });
                    }
                    match src.instruction_at(spine, m)? {
                        Instruction::Sleep => {
                            spine_sleep = Some(m);
                            break;
                        }
                        Instruction::Up => extra_ups += 1,
                        Instruction::Left | Instruction::Right => break,
                        Instruction::Down => {
                            return Err(Error::InvalidParameter(
                                "unexpected down instruction in a spine stack".into(),
                            ));
                        }
                    }
                }
                if let Some(sleep_at) = spine_sleep {
                    u.set(spine, sleep_at);
                    let target = ups + extra_ups;
                    while tc.count(Instruction::Down) - base_d < target {
                        tc.up()?;
                    }
                    u.set(tooth, tc.m);
                } else {
                    let (spine_stop, tooth_stop) = climb(
                        src, spine, tooth, &mut tc, base_d, i_v, i_tooth, &mut ups, false, v,
                        guard,
                    )?;
                    u.set(spine, spine_stop);
                    u.set(tooth, tooth_stop);
                }
            }
            2 => {
                let (spine_stop, tooth_stop) = climb(
                    src, spine, tooth, &mut tc, base_d, i_v, i_tooth, &mut ups, true, v, guard,
                )?;
                u.set(spine, spine_stop);
                u.set(tooth, tooth_stop);
            }
            _ => unreachable!("ds validated above"),
        }
    }
    Ok(u)
}

/// Climb up/down pairs until the stopping pattern appears: a sleep directly
/// below the tooth's paired down jump and, when `require_spine_sleep` is
/// set, a sleep directly above the spine's up jump. Returns the final
/// `(spine, tooth)` odometer values.
#[allow(clippy::too_many_arguments)]
fn climb<S: InstructionSource>(
    src: &S,
    spine: SiteId,
    tooth: SiteId,
    tc: &mut Cursor<'_, S>,
    base_d: i64,
    start_spine: i64,
    start_tooth: i64,
    ups: &mut i64,
    require_spine_sleep: bool,
    step: u32,
    guard: i64,
) -> Result<(i64, i64)> {
    let mut k = start_spine;
    let mut l = start_tooth;
    loop {
        if (l - 1).abs() > guard {
            return Err(Error::ScanGuardExceeded { site: tooth, guard });
        }
        let tooth_ok = src.instruction_at(tooth, l - 1)? == Instruction::Sleep;
        let ok = if require_spine_sleep {
            if (k + 1).abs() > guard {
                return Err(Error::ScanGuardExceeded { site: spine, guard });
            }
            tooth_ok && src.instruction_at(spine, k + 1)? == Instruction::Sleep
        } else {
            tooth_ok
        };
        if ok {
            return Ok((if require_spine_sleep { k + 1 } else { k }, l - 1));
        }
        // Next up jump; a horizontal jump first means no stopping pattern
        // exists within the cell.
        loop {
            k += 1;
            if k.abs() > guard {
                return Err(Error::ScanGuardExceeded { site: spine, guard });
            }
            match src.instruction_at(spine, k)? {
                Instruction::Up => break,
                Instruction::Sleep => {}
                Instruction::Left | Instruction::Right => {
                    return Err(Error::InvalidPath {
                        step: step as usize,
                        reason: "no sleep pattern realizes the step's new sleepers".into(),
                    });
                }
                Instruction::Down => {
                    return Err(Error::InvalidParameter(
                        "unexpected down instruction in a spine stack".into(),
                    ));
                }
            }
        }
        *ups += 1;
        while tc.count(Instruction::Down) - base_d < *ups {
            tc.up()?;
        }
        l = tc.m;
    }
}
