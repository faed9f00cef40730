//! Distributional and asymptotic checks that go beyond the acceptance
//! sweep: parsed-slot marginals, conditional segment rewards, growth-rate
//! superadditivity and monotonicity, stationary grids, the driven-chain
//! plateau, and the flow-split nonnegativity invariants. Seeds are fixed;
//! chi-square gates use p > 0.005 and mean comparisons three combined
//! standard errors, each stated inline.

use std::collections::HashMap;

use comb_arw::arw::{partial_spine_stabilize, Configuration, SiteState};
use comb_arw::bounds;
use comb_arw::bridge;
use comb_arw::graph::{Graph, SiteId};
use comb_arw::instr::{count_kind, Instruction, SeededStacks};
use comb_arw::laws::{assemble_comb_shape, ShapeLaw};
use comb_arw::perc::{self, InfectionProcess};
use comb_arw::stats;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BUDGET: u64 = 1_000_000_000;
const CAP: u64 = 50_000_000;
const GUARD: i64 = 1_000_000;

/// Parsing a fresh single-site comb instance (no particles, zero boundary
/// outflow, so both anchors sit at index zero) must reproduce the chunk
/// distribution the shape sampler advertises: chunk counts per slot are
/// `Geo(1/2)`, chunk widths `Geo(2/3)` (both rate-independent, they read
/// only jump directions), sleep and top indicators fire with probability
/// `λ/(1+λ)`, and the first chunk of a later slot inherits the previous
/// slot's last top instead of drawing a fresh one.
#[test]
fn parsed_slots_reproduce_the_sampler_marginals() {
    let graph = Graph::Comb { n: 1 };
    let sigma = Configuration::empty(graph);
    let mut chunk_counts: Vec<u32> = Vec::new();
    let mut widths: Vec<u32> = Vec::new();
    let mut sleep_hits = 0u64;
    let mut sleep_trials = 0u64;
    let mut top_hits = 0u64;
    let mut top_trials = 0u64;
    for i in 0..100_000u64 {
        let src = SeededStacks::new(graph, 1.0, 0x514C ^ i).unwrap();
        let minimal = bridge::minimal_odometer(&src, &sigma, 0, GUARD).unwrap();
        assert_eq!(minimal.anchors.get(SiteId::spine(1)), 0);
        assert_eq!(minimal.anchors.get(SiteId::tooth(1)), 0);
        let parsed = bridge::parse_site(&src, &minimal, 1, 2, GUARD).unwrap();
        assert_eq!(parsed.slots.len(), 2);
        for (j, meta) in parsed.slots.iter().enumerate() {
            assert_eq!(parsed.shapes[j], assemble_comb_shape(meta), "instance {i} slot {j}");
            chunk_counts.push(meta.chunks.len() as u32);
            for (c, chunk) in meta.chunks.iter().enumerate() {
                widths.push(chunk.width);
                sleep_trials += chunk.width as u64;
                sleep_hits += chunk.sleeps.iter().filter(|&&s| s).count() as u64;
                if c > 0 {
                    top_trials += 1;
                    top_hits += chunk.top as u64;
                }
            }
        }
        assert_eq!(
            parsed.slots[1].chunks[0].top,
            parsed.slots[0].last_top(),
            "instance {i}: slot 1 must inherit slot 0's last top"
        );
        assert_eq!(parsed.slots[0].chunks[0].top, parsed.sleep_before_tooth_anchor);
    }
    let count_fit = stats::chi_square_geometric_fit(&chunk_counts, 0.5).unwrap();
    assert!(count_fit.p_value > 0.005, "chunk counts: p = {:.4}", count_fit.p_value);
    let width_fit = stats::chi_square_geometric_fit(&widths, 2.0 / 3.0).unwrap();
    assert!(width_fit.p_value > 0.005, "chunk widths: p = {:.4}", width_fit.p_value);
    assert!(
        stats::proportion_within(sleep_hits, sleep_trials, 0.5, 3.0),
        "sleep indicators: {sleep_hits}/{sleep_trials}"
    );
    assert!(
        stats::proportion_within(top_hits, top_trials, 0.5, 3.0),
        "fresh top indicators: {top_hits}/{top_trials}"
    );
}

/// The truncated renewal series is a pure function of its seed: the exact
/// value below was produced by this call once and frozen, so any drift in
/// the instruction streams, the growth mechanics, or the reduction order
/// shows up as a bit-level mismatch. The window checks keep the number
/// interpretable: the series sits near 1.3 sleepers per spine site.
#[test]
fn renewal_series_reproduces_its_frozen_value() {
    let lb = bounds::renewal_lower_bound(1.0, 40, 500, 0x60_1D, CAP).unwrap();
    assert_eq!(lb.estimate, 1.300_705_332_196_261_39);
    assert_eq!(lb.se, 1.107_881_200_976_878_51e-2);
    assert!(lb.truncation < 1e-10, "truncation {:.3e}", lb.truncation);
    assert!(lb.estimate > 0.5 && lb.estimate < 2.0);
}

/// Conditioned on a segment consuming exactly two growth steps, its reward
/// must be distributed as one plus the two-step displacement of the
/// matched interval law at rate `3λ/2` — the segment-ending top indicators
/// are drawn independently of the subshape geometry, so conditioning on
/// the segment length does not tilt the growth. Checked by a two-sample
/// chi-square against fresh unconditioned interval runs.
#[test]
fn segment_rewards_conditioned_on_length_two_match_fresh_interval_growth() {
    let trace = bounds::simulate_renewal_path(1.0, 6_000, 0x4EA5, CAP).unwrap();
    assert!(trace.validated);
    let conditioned: Vec<u32> = trace
        .lengths
        .iter()
        .zip(&trace.rewards)
        .filter(|&(&len, _)| len == 2)
        .map(|(_, &r)| r)
        .collect();
    // P(length = 2) = pq = 1/4 at rate one, so 6000 segments give ~1500.
    assert!(conditioned.len() > 1_000, "only {} two-step segments", conditioned.len());

    const BINS: usize = 12;
    let mut observed = [0u64; BINS];
    for &r in &conditioned {
        observed[(r as usize).min(BINS - 1)] += 1;
    }
    let mut reference = [0u64; BINS];
    for i in 0..conditioned.len() as u64 {
        let mut proc =
            InfectionProcess::new(ShapeLaw::Interval { lambda: 1.5 }, 0xD4A3 ^ i, false, CAP);
        proc.run_to(2).unwrap();
        reference[((proc.max_height() + 1) as usize).min(BINS - 1)] += 1;
    }
    let chi = stats::two_sample_chi_square(&observed, &reference).unwrap();
    assert!(chi.p_value > 0.005, "conditional rewards: p = {:.4}", chi.p_value);
}

/// Expected displacement is superadditive in the step count (a cluster can
/// always restart growth from a top cell), and the per-step rate increases
/// with the sleep rate. Both are checked with three-combined-standard-error
/// slack on the measured side.
#[test]
fn growth_expectations_are_superadditive_and_increase_with_the_rate() {
    for (law, tag) in [
        (ShapeLaw::Interval { lambda: 1.0 }, 0x5AD0u64),
        (ShapeLaw::Comb { lambda: 1.0 }, 0x5AD1),
    ] {
        let expectation = |k: u32| {
            let est = perc::rho_k(law, k, 400, tag ^ (k as u64) << 8, CAP).unwrap();
            (est.mean * k as f64, est.se * k as f64)
        };
        let (e5, s5) = expectation(5);
        let (e10, s10) = expectation(10);
        let (e20, s20) = expectation(20);
        assert!(
            e10 >= 2.0 * e5 - 3.0 * stats::combined_se(s10, 2.0 * s5),
            "{law:?}: E[X_10] = {e10:.3} vs 2 E[X_5] = {:.3}",
            2.0 * e5
        );
        assert!(
            e20 >= 2.0 * e10 - 3.0 * stats::combined_se(s20, 2.0 * s10),
            "{law:?}: E[X_20] = {e20:.3} vs 2 E[X_10] = {:.3}",
            2.0 * e10
        );
    }

    let slow = perc::rho_k(ShapeLaw::Interval { lambda: 0.5 }, 5, 2_000, 0x4A7E, CAP).unwrap();
    let fast = perc::rho_k(ShapeLaw::Interval { lambda: 2.0 }, 5, 2_000, 0x4A7F, CAP).unwrap();
    assert!(
        fast.mean - slow.mean > 3.0 * stats::combined_se(fast.se, slow.se),
        "interval rates: {:.4} at λ=2 vs {:.4} at λ=0.5",
        fast.mean,
        slow.mean
    );
    let slow = perc::rho_k(ShapeLaw::Comb { lambda: 0.5 }, 5, 400, 0x4A80, CAP).unwrap();
    let fast = perc::rho_k(ShapeLaw::Comb { lambda: 2.0 }, 5, 400, 0x4A81, CAP).unwrap();
    assert!(
        fast.mean - slow.mean > 3.0 * stats::combined_se(fast.se, slow.se),
        "comb rates: {:.4} at λ=2 vs {:.4} at λ=0.5",
        fast.mean,
        slow.mean
    );
}

/// Direct draws from the interval law: strip widths are `Geo(1/2)`, every
/// base cell is present, lifts are confined to one extra row, and the
/// fraction of lifted columns matches `λ/(1+λ)`.
#[test]
fn interval_shapes_have_geometric_widths_and_rate_matched_lifts() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x17E4);
    let law = ShapeLaw::Interval { lambda: 1.0 };
    let mut widths: Vec<u32> = Vec::new();
    let mut lifted = 0u64;
    let mut columns = 0u64;
    for _ in 0..100_000 {
        let shape = law.sample(&mut rng);
        assert!(shape.s_max() <= 1);
        let w = shape.width();
        for x in 0..w {
            assert!(shape.contains(comb_arw::laws::Cell::new2(x, 0)), "base gap at {x}");
        }
        widths.push(w as u32);
        columns += w;
        lifted += shape.cells().iter().filter(|c| c.s_sum() == 1).count() as u64;
    }
    let fit = stats::chi_square_geometric_fit(&widths, 0.5).unwrap();
    assert!(fit.p_value > 0.005, "widths: p = {:.4}", fit.p_value);
    assert!(
        stats::proportion_within(lifted, columns, 0.5, 3.0),
        "lifted columns: {lifted}/{columns}"
    );
}

/// The closed-form upper estimate — one full tooth layer plus the matched
/// interval's stationary density — stays strictly inside `(1, 2)` across
/// the rate grid: the interval can never sleep more than one particle per
/// site.
#[test]
fn stationary_upper_estimates_stay_below_two() {
    for (i, lambda) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let upper =
            bounds::interval_upper_bound(lambda, 60, 40, 0x0BE5 ^ i as u64, BUDGET).unwrap();
        assert!(upper.mean > 1.0, "λ = {lambda}: {:.4}", upper.mean);
        assert!(upper.mean + 3.0 * upper.se < 2.0, "λ = {lambda}: {:.4}", upper.mean);
    }
}

/// Stationary densities rise with the sleep rate, for the comb total and
/// the interval alike, and every individual density is a proper fraction
/// of its site count.
#[test]
fn stationary_densities_increase_with_the_rate() {
    let rows = bounds::fig2_experiment(&[0.5, 1.0, 2.0], 100, 30, 0xF165, BUDGET).unwrap();
    for row in &rows {
        for (d, name) in [(row.teeth, "teeth"), (row.spine, "spine"), (row.interval, "interval")]
        {
            assert!(d > 0.0 && d <= 1.0, "λ = {}: {name} density {d:.4}", row.lambda);
        }
    }
    for pair in rows.windows(2) {
        let comb_lo = pair[0].teeth + pair[0].spine;
        let comb_hi = pair[1].teeth + pair[1].spine;
        let comb_se = stats::combined_se(
            stats::combined_se(pair[0].teeth_se, pair[0].spine_se),
            stats::combined_se(pair[1].teeth_se, pair[1].spine_se),
        );
        assert!(
            comb_hi - comb_lo > 3.0 * comb_se,
            "comb total not increasing: {comb_lo:.4} -> {comb_hi:.4}"
        );
        assert!(
            pair[1].interval - pair[0].interval
                > 3.0 * stats::combined_se(pair[0].interval_se, pair[1].interval_se),
            "interval not increasing: {:.4} -> {:.4}",
            pair[0].interval,
            pair[1].interval
        );
    }
}

/// The driven chain climbs linearly while sleepers accumulate and then
/// flattens: a hockey-stick fit finds an interior breakpoint, a clearly
/// positive rising slope, and a near-perfect fit, and the plateau agrees
/// with the one-shot stationary density on the same graph. The single-step
/// trace is also pinned: one added particle can strand at most one sleeper.
#[test]
fn driven_sleeper_traces_rise_then_plateau_at_the_stationary_density() {
    let n = 500u32;
    let first = bounds::fig3_experiment(0.8, n, 1, 0xF166, BUDGET).unwrap();
    assert_eq!(first.steps.len(), 1);
    assert!(first.steps[0].total <= 1);

    let trace = bounds::fig3_experiment(0.8, n, 2_000, 0xF163, BUDGET).unwrap();
    let ys: Vec<f64> = trace.steps.iter().map(|s| f64::from(s.total) / f64::from(n)).collect();
    let fit = stats::two_phase_fit(&ys).unwrap();
    assert!(
        (200..1_500).contains(&fit.breakpoint),
        "breakpoint {} not interior",
        fit.breakpoint
    );
    assert!(fit.slope > 1e-4, "rising slope {:.2e}", fit.slope);
    assert!(fit.r_squared > 0.98, "fit r² = {:.4}", fit.r_squared);

    // Thin the settled half of the trace to tame autocorrelation, then
    // compare its mean to an independent one-shot stationary estimate.
    let tail: Vec<f64> = ys[1_000..].iter().step_by(25).copied().collect();
    let (tail_mean, tail_se) = stats::mean_se(&tail);
    assert!((fit.plateau - tail_mean).abs() < 0.05);
    let stationary =
        bounds::stationary_densities(Graph::Comb { n }, 0.8, 40, 0xF164, BUDGET).unwrap();
    let tol = 3.0 * stats::combined_se(tail_se, stationary.total_se);
    assert!(
        (tail_mean - stationary.total).abs() <= tol,
        "plateau {tail_mean:.4} vs stationary {:.4} (tol {tol:.4})",
        stationary.total
    );
}

/// Two nonnegativity invariants of stable outcomes, exercised over a pool
/// that includes genuinely negative-valued members (positive boundary
/// outflow and empty early sites push anchors below zero):
///
/// * if the endpoint values are nonnegative and the net rightward flows
///   along the spine switch sign once — nonpositive up to some edge, at
///   least one from there on — then every spine value is nonnegative;
/// * a tooth holding an initial particle returns a nonnegative value
///   whenever its spine site does (its down-jump balance cannot retreat
///   past the pinned index-zero down jump).
///
/// Both checks would be vacuous on a well-behaved pool, so the sampler
/// also counts pattern matches and negative-valued members.
#[test]
fn flow_split_and_held_teeth_force_nonnegative_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0F10);
    let mut stable_pool = 0u32;
    let mut negative_spine = 0u32;
    let mut pattern_matches = 0u32;
    let mut teeth_checked = 0u32;
    for seed in 0..300u64 {
        let n = 3 + (seed % 4) as u32;
        let graph = Graph::Comb { n };
        let lambda = [0.5, 1.0, 2.0][(seed % 3) as usize];
        let src = SeededStacks::new(graph, lambda, 0x0F1E ^ seed).unwrap();
        let mut sigma = Configuration::empty(graph);
        for site in graph.interior_sites() {
            if rng.random_bool(0.6) {
                sigma.set(site, SiteState::Active(1));
            }
        }
        let f0 = (seed % 5) as i64 - 2;
        let Ok(minimal) = bridge::minimal_odometer(&src, &sigma, f0, GUARD) else { continue };
        if !minimal.balanced {
            continue;
        }
        let Ok(parsed) = bridge::parse_comb(&src, &minimal, 32, GUARD) else { continue };
        let fd = bridge::final_diagonal(&src, &sigma, f0, &minimal).unwrap();
        if fd < 0 {
            continue;
        }
        for _ in 0..3 {
            let Ok(path) = bridge::random_infection_path(&parsed, fd, &mut rng) else { continue };
            let Ok(u) = bridge::odometer_from_path(&src, &sigma, f0, &path, GUARD) else {
                continue;
            };
            // Negative anchors can defeat the reconstruction; only verified
            // members of the stable class enter the pool.
            if !bridge::verify_stable(&src, &sigma, f0, &u).stable() {
                continue;
            }
            stable_pool += 1;
            let spine_min = (1..=n).map(|v| u.get(SiteId::spine(v))).min().unwrap();
            if spine_min < 0 {
                negative_spine += 1;
            }

            let flows: Vec<i64> = (1..=n)
                .map(|v| {
                    let rt = count_kind(&src, SiteId::spine(v), Instruction::Right, u.get(SiteId::spine(v)))
                        .unwrap();
                    let lt = if v < n {
                        count_kind(
                            &src,
                            SiteId::spine(v + 1),
                            Instruction::Left,
                            u.get(SiteId::spine(v + 1)),
                        )
                        .unwrap()
                    } else {
                        0
                    };
                    rt - lt
                })
                .collect();
            let single_switch = (0..=flows.len()).any(|k| {
                flows[..k].iter().all(|&f| f <= 0) && flows[k..].iter().all(|&f| f >= 1)
            });
            if u.get(SiteId::spine(1)) >= 0 && u.get(SiteId::spine(n)) >= 0 && single_switch {
                pattern_matches += 1;
                assert!(
                    spine_min >= 0,
                    "seed {seed}: flow split {flows:?} with negative spine value {spine_min}"
                );
            }

            for v in 1..=n {
                if u.get(SiteId::spine(v)) >= 0
                    && sigma.get(SiteId::tooth(v)).particles() >= 1
                {
                    teeth_checked += 1;
                    assert!(
                        u.get(SiteId::tooth(v)) >= 0,
                        "seed {seed}: tooth {v} negative under nonnegative spine"
                    );
                }
            }
        }
    }
    assert!(stable_pool >= 150, "pool {stable_pool}");
    assert!(negative_spine >= 10, "negative-valued members {negative_spine}");
    assert!(pattern_matches >= 60, "pattern matches {pattern_matches}");
    assert!(teeth_checked >= 300, "held teeth checked {teeth_checked}");
}

/// Soft concentration envelope for the minimal odometer on a long comb:
/// at every anchor the left-jump count hits its inflow target exactly (the
/// recursion is balanced), and the right-jump count stays within a
/// diffusive-scale envelope `5·n^{3/2}` of it — between consecutive left
/// jumps the stacks hold a mean-one geometric number of right jumps, so
/// the difference is a centered random walk in the site index.
#[test]
fn minimal_anchor_jump_counts_stay_in_a_diffusive_envelope() {
    let n = 300u32;
    let graph = Graph::Comb { n };
    let src = SeededStacks::new(graph, 1.0, 0xD1F5).unwrap();
    let sigma = Configuration::ones(graph);
    let outcome = comb_arw::arw::stabilize(&sigma, &src, comb_arw::arw::Policy::Fifo, BUDGET)
        .unwrap();
    let f0 = -(outcome.absorbed_left as i64);
    let minimal = bridge::minimal_odometer(&src, &sigma, f0, GUARD).unwrap();
    assert!(minimal.balanced);

    let envelope = 5.0 * f64::from(n).powf(1.5);
    let mut worst = 0i64;
    let mut lefts: HashMap<u32, i64> = HashMap::new();
    for v in 1..=n {
        let site = SiteId::spine(v);
        let anchor = minimal.anchors.get(site);
        let lt = count_kind(&src, site, Instruction::Left, anchor).unwrap();
        let rt = count_kind(&src, site, Instruction::Right, anchor).unwrap();
        lefts.insert(v, lt);
        worst = worst.max((rt - lt).abs());
        assert!(
            ((rt - lt).abs() as f64) <= envelope,
            "site {v}: |rt - lt| = {} beyond {envelope:.0}",
            (rt - lt).abs()
        );
    }
    assert!(worst > 0, "the counts never separated at all");
    // The balance targets chain: site v's left count covers site v-1's
    // right count minus the boundary outflow and the particles in between.
    let mut prefix = 0i64;
    let mut rt_prev = 0i64;
    for v in 1..=n {
        let site = SiteId::spine(v);
        assert_eq!(lefts[&v], rt_prev - f0 - prefix, "target at site {v}");
        rt_prev = count_kind(&src, site, Instruction::Right, minimal.anchors.get(site)).unwrap();
        prefix += i64::from(sigma.get(site).particles());
        prefix += i64::from(sigma.get(SiteId::tooth(v)).particles());
    }
}

/// During the spine-only phase every tooth is pinned at one held particle,
/// so an `Up` instruction sends a particle that comes straight back down:
/// the effective spine marginal is the interval walk at the lifted rate
/// `3λ/2` (sleep with probability `3λ/(3λ+2)`, else left or right with
/// equal odds). The surviving spine sleeper fraction must therefore match
/// the interval system's stationary density at that rate. 200 runs per
/// side at λ = 1, n = 250, compared at three combined standard errors.
#[test]
fn spine_phase_sleepers_match_the_interval_density_at_the_lifted_rate() {
    let n = 250u32;
    let graph = Graph::Comb { n };
    let ratios: Vec<f64> = (0..200u64)
        .map(|i| {
            let src = SeededStacks::new(graph, 1.0, 0x7A_0E ^ (i * 0x9E37)).unwrap();
            let p = partial_spine_stabilize(&Configuration::ones(graph), &src, BUDGET).unwrap();
            p.tau() as f64 / n as f64
        })
        .collect();
    let (tau_mean, tau_se) = stats::mean_se(&ratios);
    let interval =
        bounds::stationary_densities(Graph::Interval { n }, 1.5, 200, 0x7A_0F, BUDGET).unwrap();
    let gap = (tau_mean - interval.spine).abs();
    let combined = (tau_se * tau_se + interval.spine_se * interval.spine_se).sqrt();
    assert!(
        gap <= 3.0 * combined,
        "spine sleepers {tau_mean:.5} vs interval density {:.5}: gap {gap:.5} > 3 x {combined:.2e}",
        interval.spine
    );
    // A sanity window that would catch a fraction taken over the wrong
    // site set: at this rate both sides hover near but below one.
    assert!(tau_mean > 0.85 && tau_mean < 1.0, "spine sleeper fraction {tau_mean}");
}

/// The two-cell shape law stays viable deep into the process: step 250 is
/// reachable well inside the cell cap, and the height lands in a broad
/// band around six tenths of the step count (150–154 across these seeds;
/// the taller orientation appears in about half the draws, and the running
/// maximum rides a little above that mean).
#[test]
fn domino_growth_reaches_step_two_hundred_fifty() {
    for seed in [0xD0_25u64, 0xD0_26, 0xD0_27] {
        let mut proc = InfectionProcess::new(ShapeLaw::Domino, seed, false, CAP);
        proc.run_to(250).unwrap();
        let h = proc.max_height();
        assert!((100..=200).contains(&h), "seed {seed:#x}: height {h} outside the band");
        assert!(!proc.cells().is_empty(), "seed {seed:#x}: empty generation");
    }
}

/// Longer-run frozen value for the renewal estimate: 2000 replicas instead
/// of the 500 above, halving the standard error. Ignored by default to
/// keep the suite fast; run with `--ignored` to reproduce the recorded
/// value bit for bit.
#[test]
#[ignore = "about a minute of sampling; the 500-replica check covers the default suite"]
fn renewal_series_long_run_reproduces_its_frozen_value() {
    let lb = bounds::renewal_lower_bound(1.0, 40, 2000, 0x60_1D, CAP).unwrap();
    assert_eq!(lb.estimate, 1.295_323_063_970_495_35);
    assert_eq!(lb.se, 5.563_349_680_416_614_96e-3);
    assert!(lb.estimate - 2.0 * lb.se > 1.0, "the bound should clear one with room");
}
