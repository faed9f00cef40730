//! Shape laws feeding the layered growth process.
//!
//! A shape is a finite set of cells `(r, s)` containing the origin, where `r`
//! is the horizontal offset and `s` holds up to two stacked layer
//! coordinates. Five laws are provided:
//!
//! * `nu1` — a fixed six-cell glyph (deterministic);
//! * `domino` — a fair coin between a horizontal and a vertical domino;
//! * `interval` — a geometric base strip of width `R ~ Geo(1/2)` with an
//!   independent sleep cell above each base column at rate `λ/(1+λ)`;
//! * `comb` — geometrically many chunks that overlap by one column, each
//!   chunk carrying a top indicator and per-column sleep indicators;
//! * `comb-d3` — the same chunk data assembled with sleep and top indicators
//!   on separate layer axes, so that summing the two layers reproduces
//!   `comb` exactly.
//!
//! The chunk data behind `comb`/`comb-d3` is exposed as [`CombShapeMeta`] so
//! that consumers can re-assemble either variant, carry the last top
//! indicator into the next shape of a sequence, and derive the matched
//! interval shape used by the coupling test.

use rand::Rng;

use crate::{Error, Result};

/// One cell of a shape or of the growth cluster: horizontal offset `r` and
/// two stacked layer coordinates (two-layer shapes leave `s[1] = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub r: u64,
    pub s: [u32; 2],
}

impl Cell {
    pub const fn new2(r: u64, s: u32) -> Self {
        Cell { r, s: [s, 0] }
    }

    pub const fn new3(r: u64, s1: u32, s2: u32) -> Self {
        Cell { r, s: [s1, s2] }
    }

    /// Total layer displacement.
    pub fn s_sum(self) -> u32 {
        self.s[0] + self.s[1]
    }

    /// Diagonal index `r + s₁ + s₂`.
    pub fn diagonal(self) -> u64 {
        self.r + self.s_sum() as u64
    }
}

/// A finite, origin-anchored cell set, stored sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shape {
    cells: Vec<Cell>,
}

impl Shape {
    pub fn from_cells(mut cells: Vec<Cell>) -> Self {
        cells.sort_unstable();
        cells.dedup();
        debug_assert!(cells.contains(&Cell::new2(0, 0)), "shapes are anchored at the origin");
        Shape { cells }
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn contains(&self, cell: Cell) -> bool {
        self.cells.binary_search(&cell).is_ok()
    }

    /// Largest horizontal offset.
    pub fn r_max(&self) -> u64 {
        self.cells.iter().map(|c| c.r).max().unwrap_or(0)
    }

    /// Largest total layer displacement.
    pub fn s_max(&self) -> u32 {
        self.cells.iter().map(|c| c.s_sum()).max().unwrap_or(0)
    }

    pub fn width(&self) -> u64 {
        self.r_max() + 1
    }
}

/// The distributions a growth step can draw its shapes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeLaw {
    /// Fixed six-cell glyph.
    Nu1,
    /// Horizontal or vertical domino, equal odds.
    Domino,
    /// Geometric strip with independent sleep cells, rate `λ/(1+λ)`.
    Interval { lambda: f64 },
    /// Overlapping-chunk law, two layers collapsed together.
    Comb { lambda: f64 },
    /// Overlapping-chunk law with sleep and top layers kept apart.
    CombD3 { lambda: f64 },
}

impl ShapeLaw {
    /// Parse a CLI law name, attaching `lambda` where the law needs one
    /// (default `1.0`).
    pub fn from_cli(name: &str, lambda: Option<f64>) -> Result<ShapeLaw> {
        let l = lambda.unwrap_or(1.0);
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {l}")));
        }
        match name {
            "nu1" => Ok(ShapeLaw::Nu1),
            "domino" => Ok(ShapeLaw::Domino),
            "interval" => Ok(ShapeLaw::Interval { lambda: l }),
            "comb" => Ok(ShapeLaw::Comb { lambda: l }),
            "comb-d3" => Ok(ShapeLaw::CombD3 { lambda: l }),
            other => Err(Error::InvalidParameter(format!(
                "unknown shape law {other:?} (expected nu1, domino, interval, comb, or comb-d3)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ShapeLaw::Nu1 => "nu1",
            ShapeLaw::Domino => "domino",
            ShapeLaw::Interval { .. } => "interval",
            ShapeLaw::Comb { .. } => "comb",
            ShapeLaw::CombD3 { .. } => "comb-d3",
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match self {
            ShapeLaw::Nu1 | ShapeLaw::Domino => None,
            ShapeLaw::Interval { lambda }
            | ShapeLaw::Comb { lambda }
            | ShapeLaw::CombD3 { lambda } => Some(*lambda),
        }
    }

    /// The single shape of a deterministic law, if the law is one. Growth
    /// statistics of such a law admit exact evaluation without simulation.
    pub fn deterministic_shape(&self) -> Option<Shape> {
        match self {
            ShapeLaw::Nu1 => Some(nu1_shape()),
            _ => None,
        }
    }

    /// Draw one shape. Consumes randomness in a pinned order so seeded runs
    /// replay exactly.
    pub fn sample(&self, rng: &mut impl Rng) -> Shape {
        match *self {
            ShapeLaw::Nu1 => nu1_shape(),
            ShapeLaw::Domino => {
                if rng.random_bool(0.5) {
                    Shape::from_cells(vec![Cell::new2(0, 0), Cell::new2(1, 0)])
                } else {
                    Shape::from_cells(vec![Cell::new2(0, 0), Cell::new2(0, 1)])
                }
            }
            ShapeLaw::Interval { lambda } => sample_interval_shape(lambda, rng),
            ShapeLaw::Comb { lambda } => {
                assemble_comb_shape(&sample_comb_meta(lambda, rng, None))
            }
            ShapeLaw::CombD3 { lambda } => {
                assemble_comb3d_shape(&sample_comb_meta(lambda, rng, None))
            }
        }
    }
}

/// The fixed `nu1` glyph.
pub fn nu1_shape() -> Shape {
    Shape::from_cells(vec![
        Cell::new2(0, 0),
        Cell::new2(1, 0),
        Cell::new2(2, 0),
        Cell::new2(1, 1),
        Cell::new2(0, 2),
        Cell::new2(1, 2),
    ])
}

/// Chance a single sleep indicator fires.
pub fn sleep_prob(lambda: f64) -> f64 {
    lambda / (1.0 + lambda)
}

/// Geometric draw on `{1, 2, …}` with success probability `p`.
fn geometric(rng: &mut impl Rng, p: f64) -> u32 {
    let mut k = 1;
    while !rng.random_bool(p) {
        k += 1;
    }
    k
}

/// Draw an `interval` shape: width `R ~ Geo(1/2)`, then one sleep indicator
/// per base column in left-to-right order.
fn sample_interval_shape(lambda: f64, rng: &mut impl Rng) -> Shape {
    let q = sleep_prob(lambda);
    let width = geometric(rng, 0.5);
    let mut cells = Vec::with_capacity(2 * width as usize);
    for x in 0..width as u64 {
        cells.push(Cell::new2(x, 0));
        if rng.random_bool(q) {
            cells.push(Cell::new2(x, 1));
        }
    }
    Shape::from_cells(cells)
}

/// One chunk of a comb shape: its width, its top indicator, and one sleep
/// indicator per chunk-local column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CombChunk {
    pub width: u32,
    pub top: bool,
    pub sleeps: Vec<bool>,
}

/// The sampled data behind one comb shape, before assembly. Consecutive
/// chunks overlap by exactly one column, so chunk `i` starts at global
/// column `Σ_{i' < i} (width_{i'} − 1)`; width-one chunks stack on a single
/// column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CombShapeMeta {
    pub chunks: Vec<CombChunk>,
}

impl CombShapeMeta {
    /// Total width after overlaps: `Σ width_i − (#chunks − 1)`.
    pub fn width(&self) -> u64 {
        self.chunks.iter().map(|c| c.width as u64 - 1).sum::<u64>() + 1
    }

    /// Top indicator of the final chunk, carried into the first chunk of the
    /// next shape in a per-step sequence.
    pub fn last_top(&self) -> bool {
        self.chunks.last().expect("meta holds at least one chunk").top
    }
}

/// Draw the chunk data of one comb shape. The randomness order is pinned:
/// chunk count first, then per chunk its width, top indicator, and sleep
/// indicators left to right. When `inherit_top` is given the first chunk
/// takes that indicator without consuming a draw — within a per-step shape
/// sequence the first top continues the previous shape's last one.
pub fn sample_comb_meta(
    lambda: f64,
    rng: &mut impl Rng,
    inherit_top: Option<bool>,
) -> CombShapeMeta {
    let q = sleep_prob(lambda);
    let count = geometric(rng, 0.5);
    let mut chunks = Vec::with_capacity(count as usize);
    for i in 0..count {
        let width = geometric(rng, 2.0 / 3.0);
        let top = match (i, inherit_top) {
            (0, Some(t)) => t,
            _ => rng.random_bool(q),
        };
        let sleeps = (0..width).map(|_| rng.random_bool(q)).collect();
        chunks.push(CombChunk { width, top, sleeps });
    }
    CombShapeMeta { chunks }
}

/// Assemble the two-layer comb shape: each chunk column at global offset `x`
/// contributes heights `{0, S, T, S + T}` where `S` is the column's sleep
/// indicator and `T` the chunk's top indicator.
pub fn assemble_comb_shape(meta: &CombShapeMeta) -> Shape {
    let mut cells = Vec::new();
    let mut offset = 0u64;
    for chunk in &meta.chunks {
        let t = chunk.top as u32;
        for c in 0..chunk.width {
            let x = offset + c as u64;
            let s = chunk.sleeps[c as usize] as u32;
            cells.push(Cell::new2(x, 0));
            cells.push(Cell::new2(x, s));
            cells.push(Cell::new2(x, t));
            cells.push(Cell::new2(x, s + t));
        }
        offset += chunk.width as u64 - 1;
    }
    Shape::from_cells(cells)
}

/// Assemble the three-layer variant: sleep indicators live on the first
/// layer axis and top indicators on the second, so collapsing the two axes
/// by addition recovers [`assemble_comb_shape`] exactly.
pub fn assemble_comb3d_shape(meta: &CombShapeMeta) -> Shape {
    let mut cells = Vec::new();
    let mut offset = 0u64;
    for chunk in &meta.chunks {
        let t = chunk.top as u32;
        for c in 0..chunk.width {
            let x = offset + c as u64;
            let s = chunk.sleeps[c as usize] as u32;
            cells.push(Cell::new3(x, 0, 0));
            cells.push(Cell::new3(x, 0, t));
            cells.push(Cell::new3(x, s, 0));
            cells.push(Cell::new3(x, s, t));
        }
        offset += chunk.width as u64 - 1;
    }
    Shape::from_cells(cells)
}

/// The interval shape matched to a comb draw: same total width, with a sleep
/// cell over every global column where at least one of the chunks covering
/// that column fired its sleep indicator.
pub fn coupled_interval_shape(meta: &CombShapeMeta) -> Shape {
    let width = meta.width();
    let mut tops = vec![false; width as usize];
    let mut offset = 0usize;
    for chunk in &meta.chunks {
        for c in 0..chunk.width as usize {
            if chunk.sleeps[c] {
                tops[offset + c] = true;
            }
        }
        offset += chunk.width as usize - 1;
    }
    let mut cells = Vec::with_capacity(2 * width as usize);
    for (x, &top) in tops.iter().enumerate() {
        cells.push(Cell::new2(x as u64, 0));
        if top {
            cells.push(Cell::new2(x as u64, 1));
        }
    }
    Shape::from_cells(cells)
}

/// Collapse a three-layer shape onto two layers by summing the layer axes.
pub fn project_to_two_layers(shape: &Shape) -> Shape {
    Shape::from_cells(shape.cells().iter().map(|c| Cell::new2(c.r, c.s_sum())).collect())
}

/// Plain-text rendering, one row per total layer displacement, highest row
/// first (`#` cell, `.` empty). Three-layer shapes render their projection.
pub fn render_shape(shape: &Shape) -> String {
    let width = shape.width();
    let s_max = shape.s_max();
    let mut grid = vec![vec![false; width as usize]; s_max as usize + 1];
    for c in shape.cells() {
        grid[c.s_sum() as usize][c.r as usize] = true;
    }
    let mut out = String::new();
    for row in grid.iter().rev() {
        for &on in row {
            out.push(if on { '#' } else { '.' });
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nu1_is_the_fixed_glyph() {
        let s = nu1_shape();
        assert_eq!(
            s.cells(),
            &[
                Cell::new2(0, 0),
                Cell::new2(0, 2),
                Cell::new2(1, 0),
                Cell::new2(1, 1),
                Cell::new2(1, 2),
                Cell::new2(2, 0),
            ]
        );
        assert_eq!(s.r_max(), 2);
        assert_eq!(s.s_max(), 2);
        assert_eq!(ShapeLaw::Nu1.deterministic_shape(), Some(s));
    }

    #[test]
    fn nu1_renders_as_expected() {
        assert_eq!(render_shape(&nu1_shape()), "##.\n.#.\n###\n");
    }

    #[test]
    fn domino_draws_both_orientations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut horizontal = 0;
        let mut vertical = 0;
        for _ in 0..200 {
            let s = ShapeLaw::Domino.sample(&mut rng);
            assert_eq!(s.cells().len(), 2);
            assert!(s.contains(Cell::new2(0, 0)));
            if s.contains(Cell::new2(1, 0)) {
                horizontal += 1;
            } else {
                assert!(s.contains(Cell::new2(0, 1)));
                vertical += 1;
            }
        }
        assert!(horizontal > 50 && vertical > 50);
    }

    #[test]
    fn interval_shapes_have_full_base_strips() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let law = ShapeLaw::Interval { lambda: 1.0 };
        for _ in 0..500 {
            let s = law.sample(&mut rng);
            let w = s.width();
            for x in 0..w {
                assert!(s.contains(Cell::new2(x, 0)));
            }
            for c in s.cells() {
                assert!(c.s_sum() <= 1);
                assert!(c.r < w);
            }
        }
    }

    #[test]
    fn comb_meta_width_matches_assembly() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..500 {
            let meta = sample_comb_meta(1.0, &mut rng, None);
            for chunk in &meta.chunks {
                assert_eq!(chunk.sleeps.len(), chunk.width as usize);
                assert!(chunk.width >= 1);
            }
            let shape = assemble_comb_shape(&meta);
            assert_eq!(shape.width(), meta.width());
            assert!(shape.s_max() <= 2);
        }
    }

    #[test]
    fn three_layer_assembly_projects_onto_the_two_layer_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let meta = sample_comb_meta(2.0, &mut rng, None);
            let flat = assemble_comb_shape(&meta);
            let deep = assemble_comb3d_shape(&meta);
            assert_eq!(project_to_two_layers(&deep), flat);
        }
    }

    #[test]
    fn coupled_interval_shape_sits_inside_the_comb_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..300 {
            let meta = sample_comb_meta(0.5, &mut rng, None);
            let comb = assemble_comb_shape(&meta);
            let interval = coupled_interval_shape(&meta);
            assert_eq!(interval.r_max(), comb.r_max());
            for c in interval.cells() {
                assert!(comb.contains(*c), "comb misses coupled cell {c:?}");
            }
        }
    }

    #[test]
    fn inherited_top_replaces_the_first_draw_only() {
        let a = sample_comb_meta(1.0, &mut ChaCha8Rng::seed_from_u64(99), Some(true));
        let b = sample_comb_meta(1.0, &mut ChaCha8Rng::seed_from_u64(99), Some(false));
        assert!(a.chunks[0].top);
        assert!(!b.chunks[0].top);
        assert_eq!(a.chunks[0].width, b.chunks[0].width);
        assert_eq!(a.chunks[0].sleeps, b.chunks[0].sleeps);
        assert_eq!(a.chunks[1..], b.chunks[1..]);
    }

    #[test]
    fn law_names_round_trip() {
        for name in ["nu1", "domino", "interval", "comb", "comb-d3"] {
            let law = ShapeLaw::from_cli(name, Some(1.5)).unwrap();
            assert_eq!(law.name(), name);
        }
        assert!(ShapeLaw::from_cli("triangle", None).is_err());
        assert!(ShapeLaw::from_cli("comb", Some(-1.0)).is_err());
    }
}
