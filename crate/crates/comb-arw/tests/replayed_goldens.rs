//! Hand-expanded goldens for the growth mechanics and the shape
//! assemblers: every expected cell set below was worked out on paper from
//! the stated rules (children of a cell on diagonal `j` sit at the running
//! base offset `ℓ_j` plus the shape cell's own coordinates, layers adding),
//! then frozen. Replayed step sequences pin the shapes, so the checks are
//! exact, not statistical.

use comb_arw::laws::{
    assemble_comb3d_shape, assemble_comb_shape, coupled_interval_shape, nu1_shape,
    project_to_two_layers, Cell, CombChunk, CombShapeMeta, Shape, ShapeLaw,
};
use comb_arw::perc::{InfectionProcess, StepSequence};

const CAP: u64 = 1 << 20;

fn shape2(cells: &[(u64, u32)]) -> Shape {
    Shape::from_cells(cells.iter().map(|&(r, s)| Cell::new2(r, s)).collect())
}

/// Re-derives one generation from the previous one and a fixed shape list,
/// written independently of the library's advancement loop: base offsets
/// are prefix sums of `r_max`, a child's column is the offset plus the
/// shape cell's column, and layer coordinates add componentwise.
fn expand(cells: &[Cell], shapes: &[Shape]) -> Vec<Cell> {
    let mut offsets = vec![0u64];
    for s in shapes {
        offsets.push(offsets.last().unwrap() + s.r_max());
    }
    let mut next: Vec<Cell> = Vec::new();
    for c in cells {
        let j = c.diagonal() as usize;
        assert!(j < shapes.len(), "cell {c:?} needs a shape for diagonal {j}");
        for g in shapes[j].cells() {
            next.push(Cell {
                r: offsets[j] + g.r,
                s: [c.s[0] + g.s[0], c.s[1] + g.s[1]],
            });
        }
    }
    next.sort_unstable();
    next.dedup();
    next
}

/// A single replayed step whose only shape is a width-three strip with one
/// raised cell: the origin sits on diagonal zero at offset zero, so the
/// first generation is exactly that shape.
#[test]
fn first_generation_reproduces_the_replayed_diagonal_zero_shape() {
    let strip = shape2(&[(0, 0), (1, 0), (1, 1), (2, 0)]);
    let mut proc = InfectionProcess::new(ShapeLaw::Interval { lambda: 1.0 }, 0, false, CAP);
    proc.advance_with(StepSequence::replayed(vec![strip.clone()], 0)).unwrap();
    assert_eq!(proc.cells(), strip.cells());
    assert_eq!(proc.max_height(), 1);
}

/// The base-offset rule, on the smallest instance where it bites: after a
/// first step leaving cells on diagonals 0 and 2, the diagonal-2 cell's
/// children start at offset `r_max(Ξ₀) + r_max(Ξ₁) = 2 + 1 = 3` — the
/// parent's own column is not added again, it is already encoded in the
/// diagonal index.
#[test]
fn children_start_at_the_prefix_sum_of_earlier_shape_widths() {
    let mut proc = InfectionProcess::new(ShapeLaw::Interval { lambda: 1.0 }, 0, false, CAP);
    proc.advance_with(StepSequence::replayed(vec![shape2(&[(0, 0), (1, 1)])], 0)).unwrap();
    assert_eq!(proc.cells(), shape2(&[(0, 0), (1, 1)]).cells());

    let seq = vec![
        shape2(&[(0, 0), (2, 0)]),
        shape2(&[(0, 0), (1, 0)]),
        shape2(&[(0, 0), (1, 0)]),
    ];
    proc.advance_with(StepSequence::replayed(seq.clone(), 1)).unwrap();
    // (0,0) is on diagonal 0 (offset 0) and spawns (0,0) and (2,0); (1,1)
    // is on diagonal 2 (offset 3) and spawns (3,1) and (4,1).
    let expected = shape2(&[(0, 0), (2, 0), (3, 1), (4, 1)]);
    assert_eq!(proc.cells(), expected.cells());
    assert_eq!(expand(shape2(&[(0, 0), (1, 1)]).cells(), &seq), expected.cells());
}

/// Three replayed domino steps against paper arithmetic: a horizontal
/// domino, then a vertical-horizontal pair, then a horizontal-vertical-
/// vertical triple, with every intermediate generation frozen by hand.
#[test]
fn scripted_domino_steps_match_the_hand_expansion() {
    let h = shape2(&[(0, 0), (1, 0)]);
    let v = shape2(&[(0, 0), (0, 1)]);
    let mut proc = InfectionProcess::new(ShapeLaw::Domino, 0, false, CAP);

    let steps: Vec<Vec<Shape>> = vec![
        vec![h.clone()],
        vec![v.clone(), h.clone()],
        vec![h.clone(), v.clone(), v.clone()],
    ];
    let frozen: Vec<Shape> = vec![
        shape2(&[(0, 0), (1, 0)]),
        shape2(&[(0, 0), (0, 1), (1, 0)]),
        shape2(&[(0, 0), (1, 0), (1, 1), (1, 2)]),
    ];
    let mut cells: Vec<Cell> = vec![Cell::new2(0, 0)];
    for (k, shapes) in steps.iter().enumerate() {
        proc.advance_with(StepSequence::replayed(shapes.clone(), k as u32)).unwrap();
        cells = expand(&cells, shapes);
        assert_eq!(proc.cells(), cells, "library vs independent expansion at step {}", k + 1);
        assert_eq!(proc.cells(), frozen[k].cells(), "frozen generation at step {}", k + 1);
    }
    assert_eq!(proc.max_height(), 2);
}

/// Two steps of the fixed six-cell glyph: the first generation is the glyph
/// itself, and the second has exactly 28 cells with top displacement 4 —
/// both confirmed by the independent expansion and by hand counts.
#[test]
fn fixed_glyph_second_generation_has_twenty_eight_cells() {
    let glyph = nu1_shape();
    let mut proc = InfectionProcess::new(ShapeLaw::Nu1, 7, false, CAP);
    proc.run_to(2).unwrap();

    let gen1 = glyph.cells().to_vec();
    let gen2 = expand(&gen1, &vec![glyph.clone(); 5]);
    assert_eq!(proc.cells(), gen2);
    assert_eq!(gen2.len(), 28);
    assert_eq!(proc.max_height(), 4);
    // Spot checks: the origin's children keep the glyph's own tall column,
    // the rightmost cell is the diagonal-3 offset 6 plus glyph column 2,
    // and the top row sits four columns in.
    for probe in [Cell::new2(0, 2), Cell::new2(8, 2), Cell::new2(4, 4), Cell::new2(3, 1)] {
        assert!(gen2.contains(&probe), "missing {probe:?}");
    }
}

/// A fully forced three-chunk comb draw, assembled by hand. Chunks overlap
/// by one column, so widths 3, 2, 2 cover columns 0–4; each column
/// contributes heights `{0, S, T, S+T}` from its covering chunks.
#[test]
fn forced_chunk_data_assembles_to_the_hand_built_shapes() {
    let meta = CombShapeMeta {
        chunks: vec![
            CombChunk { width: 3, top: true, sleeps: vec![false, true, false] },
            CombChunk { width: 2, top: false, sleeps: vec![true, false] },
            CombChunk { width: 2, top: true, sleeps: vec![false, true] },
        ],
    };
    assert_eq!(meta.width(), 5);
    assert!(meta.last_top());

    let two = assemble_comb_shape(&meta);
    assert_eq!(
        two,
        shape2(&[
            (0, 0), (0, 1),
            (1, 0), (1, 1), (1, 2),
            (2, 0), (2, 1),
            (3, 0), (3, 1),
            (4, 0), (4, 1), (4, 2),
        ]),
    );

    let three = assemble_comb3d_shape(&meta);
    let expected3: Vec<Cell> = vec![
        Cell::new3(0, 0, 0), Cell::new3(0, 0, 1),
        Cell::new3(1, 0, 0), Cell::new3(1, 0, 1), Cell::new3(1, 1, 0), Cell::new3(1, 1, 1),
        Cell::new3(2, 0, 0), Cell::new3(2, 0, 1), Cell::new3(2, 1, 0),
        Cell::new3(3, 0, 0), Cell::new3(3, 0, 1),
        Cell::new3(4, 0, 0), Cell::new3(4, 0, 1), Cell::new3(4, 1, 0), Cell::new3(4, 1, 1),
    ];
    assert_eq!(three.cells(), expected3);
    assert_eq!(project_to_two_layers(&three), two);

    // The matched interval strip raises exactly the columns where some
    // covering chunk slept: 1 (first chunk), 2 (second chunk), 4 (third).
    let coupled = coupled_interval_shape(&meta);
    assert_eq!(
        coupled,
        shape2(&[(0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (3, 0), (4, 0), (4, 1)]),
    );
    for c in coupled.cells() {
        assert!(two.contains(*c), "coupled cell {c:?} escapes the comb shape");
    }
}
