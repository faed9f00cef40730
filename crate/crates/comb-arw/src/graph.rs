//! Site addressing for combs and intervals.
//!
//! The comb `C_n` has spine sites `1..=n`, sinks at spine positions `0` and
//! `n + 1`, and one tooth site hanging off every spine site. The interval is
//! the same object without teeth. Sites are addressed by [`SiteId`]; sinks are
//! the two boundary spine positions and carry no instruction stack.

use std::fmt;

/// Which row of the comb a site sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SiteKind {
    /// Backbone site `v` (including the boundary sinks `0` and `n + 1`).
    Spine,
    /// Tooth site `v'` attached to spine site `v`.
    Tooth,
}

/// Address of a single site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SiteId {
    pub kind: SiteKind,
    pub index: u32,
}

impl SiteId {
    /// Spine site `v`.
    pub const fn spine(v: u32) -> Self {
        SiteId { kind: SiteKind::Spine, index: v }
    }

    /// Tooth site `v'`.
    pub const fn tooth(v: u32) -> Self {
        SiteId { kind: SiteKind::Tooth, index: v }
    }
}

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            SiteKind::Spine => write!(f, "{}", self.index),
            SiteKind::Tooth => write!(f, "{}'", self.index),
        }
    }
}

/// The underlying graph: a comb or its tooth-free interval degeneration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Graph {
    /// Comb with spine `[1, n]`, sinks at `0` and `n + 1`, and `n` teeth.
    Comb { n: u32 },
    /// Interval `[1, n]` with sinks at `0` and `n + 1`.
    Interval { n: u32 },
}

impl Graph {
    /// Number of spine sites strictly between the sinks.
    pub fn n(&self) -> u32 {
        match *self {
            Graph::Comb { n } | Graph::Interval { n } => n,
        }
    }

    /// Whether this graph has teeth.
    pub fn has_teeth(&self) -> bool {
        matches!(self, Graph::Comb { .. })
    }

    /// Number of non-sink sites.
    pub fn interior_site_count(&self) -> u32 {
        if self.has_teeth() { 2 * self.n() } else { self.n() }
    }

    /// Whether `site` is addressable on this graph (sinks included).
    pub fn contains(&self, site: SiteId) -> bool {
        match site.kind {
            SiteKind::Spine => site.index <= self.n() + 1,
            SiteKind::Tooth => {
                self.has_teeth() && site.index >= 1 && site.index <= self.n()
            }
        }
    }

    /// Whether `site` is one of the two absorbing boundary positions.
    pub fn is_sink(&self, site: SiteId) -> bool {
        site.kind == SiteKind::Spine && (site.index == 0 || site.index == self.n() + 1)
    }

    /// Whether `site` exists and is not a sink.
    pub fn is_interior(&self, site: SiteId) -> bool {
        self.contains(site) && !self.is_sink(site)
    }

    /// Interior sites in a fixed order: spine `1..=n`, then teeth `1..=n`.
    pub fn interior_sites(&self) -> impl Iterator<Item = SiteId> + '_ {
        let n = self.n();
        let spine = (1..=n).map(SiteId::spine);
        let teeth = if self.has_teeth() { 1..=n } else { 1..=0 };
        spine.chain(teeth.map(SiteId::tooth))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinks_are_the_boundary_spine_positions() {
        let g = Graph::Comb { n: 3 };
        assert!(g.is_sink(SiteId::spine(0)));
        assert!(g.is_sink(SiteId::spine(4)));
        assert!(!g.is_sink(SiteId::spine(1)));
        assert!(!g.is_sink(SiteId::tooth(1)));
        assert!(g.is_interior(SiteId::tooth(3)));
        assert!(!g.contains(SiteId::tooth(4)));
    }

    #[test]
    fn interval_has_no_teeth() {
        let g = Graph::Interval { n: 5 };
        assert!(!g.contains(SiteId::tooth(2)));
        assert_eq!(g.interior_site_count(), 5);
        assert_eq!(g.interior_sites().count(), 5);
        assert_eq!(Graph::Comb { n: 5 }.interior_sites().count(), 10);
    }
}
