//! Scopes without tables, for planning elimination steps.

use std::collections::{BTreeMap, BTreeSet};

use super::shape::{CountScope, Shape};
use super::variable::VarId;

/// Proper variables (with cardinalities) and counters of a scope.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Sketch {
    pub proper: BTreeMap<VarId, usize>,
    pub counters: BTreeSet<CountScope>,
}

impl Sketch {
    pub fn of(shape: &Shape) -> Self {
        Self {
            proper: shape
                .proper()
                .iter()
                .copied()
                .zip(shape.cards().iter().copied())
                .collect(),
            counters: shape.counters().iter().cloned().collect(),
        }
    }

    pub fn union<'a>(sketches: impl IntoIterator<Item = &'a Sketch>) -> Self {
        let mut out = Self::default();
        for s in sketches {
            out.proper.extend(s.proper.iter().map(|(&v, &c)| (v, c)));
            out.counters.extend(s.counters.iter().cloned());
        }
        out
    }

    pub fn mentions(&self, var: VarId) -> bool {
        self.proper.contains_key(&var) || self.counters.iter().any(|z| z.contains(var))
    }

    pub fn variables(&self) -> BTreeSet<VarId> {
        let mut out: BTreeSet<VarId> = self.proper.keys().copied().collect();
        for z in &self.counters {
            out.extend(z.members());
        }
        out
    }

    /// Redundant-representation size.
    pub fn entries(&self) -> f64 {
        Shape::entry_count(
            self.proper.values().copied(),
            self.counters.iter().map(CountScope::len),
        )
    }

    /// Scope after summing or maxing out `var`.
    pub fn reduced(&self, var: VarId) -> Self {
        let mut out = Self::default();
        out.proper.extend(self.proper.iter().filter(|(&v, _)| v != var).map(|(&v, &c)| (v, c)));
        for z in &self.counters {
            if let Ok(rest) = CountScope::new(z.members().iter().copied().filter(|&m| m != var)) {
                out.counters.insert(rest);
            }
        }
        out
    }

    /// Same scope with `vars` proper and counters restricted to their
    /// remaining count-only members, as [`Shape::promote`] lays it out.
    pub fn promoted(&self, vars: &BTreeSet<VarId>) -> Self {
        let mut out = Self {
            proper: self.proper.clone(),
            counters: BTreeSet::new(),
        };
        for z in &self.counters {
            for &m in z.members() {
                if vars.contains(&m) {
                    out.proper.entry(m).or_insert(2);
                }
            }
        }
        for z in &self.counters {
            let rest = z.members().iter().copied().filter(|m| !out.proper.contains_key(m));
            if let Ok(rest) = CountScope::new(rest) {
                out.counters.insert(rest);
            }
        }
        out
    }

    /// Count-only variables worth making proper: greedily promotes whole
    /// counters while that shrinks the table, and falls back to promoting
    /// everything when that is smaller still. Proper members are always
    /// dropped from counters, so the result is never larger than `self`.
    pub fn compaction(&self) -> BTreeSet<VarId> {
        let mut chosen = BTreeSet::new();
        let mut current = self.promoted(&chosen);
        loop {
            let mut best: Option<(f64, BTreeSet<VarId>, Sketch)> = None;
            for z in &current.counters {
                let mut trial = chosen.clone();
                trial.extend(z.members());
                let s = self.promoted(&trial);
                let size = s.entries();
                if size < current.entries() && best.as_ref().map_or(true, |(b, _, _)| size < *b) {
                    best = Some((size, trial, s));
                }
            }
            match best {
                Some((_, trial, s)) => {
                    chosen = trial;
                    current = s;
                }
                None => break,
            }
        }
        let everything: BTreeSet<VarId> = self.counters.iter().flat_map(|z| z.members().iter().copied()).collect();
        if self.promoted(&everything).entries() < current.entries() {
            return everything;
        }
        chosen
    }

    /// Compacted layout of this scope.
    pub fn compacted(&self) -> Self {
        self.promoted(&self.compaction())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cs(m: &[VarId]) -> CountScope {
        CountScope::new(m.iter().copied()).unwrap()
    }

    fn sketch(proper: &[VarId], counters: &[&[VarId]]) -> Sketch {
        Sketch::of(&Shape::new(proper.iter().map(|&v| (v, 2)).collect(), counters.iter().map(|m| cs(m)).collect()).unwrap())
    }

    #[test]
    fn proper_members_leave_counters() {
        let s = sketch(&[1], &[&[0, 1, 2]]);
        let c = s.compacted();
        assert_eq!(c.counters.iter().collect::<Vec<_>>(), vec![&cs(&[0, 2])]);
        assert_eq!(c.entries(), 6.0);
    }

    #[test]
    fn many_overlapping_counters_flatten() {
        // five counters over four variables: 5 * 4^4 redundant vs 2^4 flat
        let s = sketch(&[], &[&[0, 1, 2, 3], &[0, 1, 2], &[1, 2, 3], &[0, 2, 3], &[0, 1, 3]]);
        assert_eq!(s.entries(), 1280.0);
        assert_eq!(s.compacted().entries(), 16.0);
    }

    #[test]
    fn single_large_counter_stays() {
        let s = sketch(&[], &[&[0, 1, 2, 3, 4, 5]]);
        assert!(s.compaction().is_empty());
        assert_eq!(s.compacted(), s);
    }
}
