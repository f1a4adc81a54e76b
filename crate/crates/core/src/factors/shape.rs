//! Layout of a mixed-mode table.
//!
//! Digits are the proper variables in scope order followed by one digit per
//! counter (radix `|Z_i| + 1`). The first digit is the most significant.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::variable::{Assignment, VarId};
use crate::error::{Error, Result};

/// Sorted, non-empty set of binary variables summarized by a count aggregator.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CountScope {
    members: Vec<VarId>,
}

impl CountScope {
    pub fn new(members: impl IntoIterator<Item = VarId>) -> Result<Self> {
        let set: BTreeSet<VarId> = members.into_iter().collect();
        if set.is_empty() {
            return Err(Error::InvalidFactor("count scope must be non-empty".into()));
        }
        Ok(Self {
            members: set.into_iter().collect(),
        })
    }

    pub fn members(&self) -> &[VarId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, var: VarId) -> bool {
        self.members.binary_search(&var).is_ok()
    }

    /// Number of members assigned 1.
    pub fn count(&self, a: &Assignment) -> Result<usize> {
        let mut total = 0;
        for &m in &self.members {
            total += a.require(m)?;
        }
        Ok(total)
    }

    fn without(&self, var: VarId) -> Option<CountScope> {
        let members: Vec<VarId> = self.members.iter().copied().filter(|&m| m != var).collect();
        (!members.is_empty()).then_some(CountScope { members })
    }
}

/// Scope and mixed-radix layout of a mixed-mode factor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shape {
    proper: Vec<VarId>,
    cards: Vec<usize>,
    counters: Vec<CountScope>,
    radix: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

/// Upper bound on the number of entries a single table may hold.
pub const MAX_TABLE_ENTRIES: usize = 1 << 34;

impl Shape {
    pub fn new(proper: Vec<(VarId, usize)>, counters: Vec<CountScope>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &(v, c) in &proper {
            if !seen.insert(v) {
                return Err(Error::InvalidFactor(format!("duplicate proper variable {v}")));
            }
            if c < 2 {
                return Err(Error::InvalidFactor(format!(
                    "proper variable {v} has cardinality {c}"
                )));
            }
        }
        for (i, z) in counters.iter().enumerate() {
            if counters[..i].contains(z) {
                return Err(Error::InvalidFactor(format!(
                    "counters {:?} appear twice",
                    z.members()
                )));
            }
            for &m in z.members() {
                if let Some(&(_, c)) = proper.iter().find(|&&(v, _)| v == m) {
                    if c != 2 {
                        return Err(Error::InvalidFactor(format!(
                            "count variable {m} must be binary"
                        )));
                    }
                }
            }
        }
        let entries = Self::entry_count(proper.iter().map(|&(_, c)| c), counters.iter().map(|z| z.len()));
        if entries > MAX_TABLE_ENTRIES as f64 {
            return Err(Error::InvalidFactor(format!("table of {entries} entries is too large")));
        }
        let (proper, cards): (Vec<_>, Vec<_>) = proper.into_iter().unzip();
        let radix: Vec<usize> = cards
            .iter()
            .copied()
            .chain(counters.iter().map(|z| z.len() + 1))
            .collect();
        let mut strides = vec![1; radix.len()];
        for d in (0..radix.len().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * radix[d + 1];
        }
        let len = radix.iter().product();
        Ok(Self {
            proper,
            cards,
            counters,
            radix,
            strides,
            len,
        })
    }

    /// The scalar (empty-scope) shape.
    pub fn empty() -> Self {
        Self::new(Vec::new(), Vec::new()).expect("empty shape")
    }

    /// Entry count of a layout without building it (as f64 to avoid overflow).
    pub fn entry_count(
        cards: impl IntoIterator<Item = usize>,
        counter_sizes: impl IntoIterator<Item = usize>,
    ) -> f64 {
        let p: f64 = cards.into_iter().map(|c| c as f64).product();
        let c: f64 = counter_sizes.into_iter().map(|s| (s + 1) as f64).product();
        p * c
    }

    pub fn proper(&self) -> &[VarId] {
        &self.proper
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn counters(&self) -> &[CountScope] {
        &self.counters
    }

    pub fn radix(&self) -> &[usize] {
        &self.radix
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_scalar(&self) -> bool {
        self.radix.is_empty()
    }

    /// Number of entries spanned by the proper digits alone.
    pub fn proper_len(&self) -> usize {
        self.cards.iter().product()
    }

    /// Number of entries spanned by the counter digits alone.
    pub fn count_len(&self) -> usize {
        self.counters.iter().map(|z| z.len() + 1).product()
    }

    pub fn proper_position(&self, var: VarId) -> Option<usize> {
        self.proper.iter().position(|&v| v == var)
    }

    pub fn counter_position(&self, scope: &CountScope) -> Option<usize> {
        self.counters.iter().position(|z| z == scope)
    }

    pub fn contains(&self, var: VarId) -> bool {
        self.proper.contains(&var) || self.counters.iter().any(|z| z.contains(var))
    }

    /// Cardinality of `var` in this scope (count variables are binary).
    pub fn cardinality_of(&self, var: VarId) -> Option<usize> {
        if let Some(p) = self.proper_position(var) {
            return Some(self.cards[p]);
        }
        self.counters.iter().any(|z| z.contains(var)).then_some(2)
    }

    /// Every variable mentioned by the shape, proper or counted.
    pub fn variables(&self) -> BTreeSet<VarId> {
        let mut out: BTreeSet<VarId> = self.proper.iter().copied().collect();
        for z in &self.counters {
            out.extend(z.members().iter().copied());
        }
        out
    }

    pub fn index_of(&self, digits: &[usize]) -> usize {
        debug_assert_eq!(digits.len(), self.radix.len());
        digits.iter().zip(&self.strides).map(|(d, s)| d * s).sum()
    }

    pub fn digits_of(&self, mut index: usize) -> Vec<usize> {
        let mut digits = vec![0; self.radix.len()];
        for d in (0..self.radix.len()).rev() {
            digits[d] = index % self.radix[d];
            index /= self.radix[d];
        }
        digits
    }

    /// Digits addressed by a full assignment of the scope's variables.
    pub fn digits_for(&self, a: &Assignment) -> Result<Vec<usize>> {
        let mut digits = Vec::with_capacity(self.radix.len());
        for (&v, &c) in self.proper.iter().zip(&self.cards) {
            let value = a.require(v)?;
            if value >= c {
                return Err(Error::ValueOutOfRange {
                    var: v,
                    value,
                    cardinality: c,
                });
            }
            digits.push(value);
        }
        for z in &self.counters {
            for &m in z.members() {
                let value = a.require(m)?;
                if value > 1 {
                    return Err(Error::ValueOutOfRange {
                        var: m,
                        value,
                        cardinality: 2,
                    });
                }
            }
            digits.push(z.count(a)?);
        }
        Ok(digits)
    }

    pub fn index_for(&self, a: &Assignment) -> Result<usize> {
        Ok(self.index_of(&self.digits_for(a)?))
    }

    /// Union of several shapes: proper variables and counters in order of
    /// first appearance, identical counters merged into one digit.
    pub fn union<'a>(shapes: impl IntoIterator<Item = &'a Shape>) -> Result<Shape> {
        let mut proper: Vec<(VarId, usize)> = Vec::new();
        let mut counters: Vec<CountScope> = Vec::new();
        for s in shapes {
            for (&v, &c) in s.proper.iter().zip(&s.cards) {
                match proper.iter().find(|&&(p, _)| p == v) {
                    Some(&(_, existing)) if existing != c => {
                        return Err(Error::InvalidFactor(format!(
                            "variable {v} has cardinalities {existing} and {c}"
                        )))
                    }
                    Some(_) => {}
                    None => proper.push((v, c)),
                }
            }
            for z in &s.counters {
                if !counters.contains(z) {
                    counters.push(z.clone());
                }
            }
        }
        Shape::new(proper, counters)
    }

    /// Size of the union of `shapes` without materializing anything.
    pub fn union_entry_count<'a>(shapes: impl IntoIterator<Item = &'a Shape> + Clone) -> f64 {
        let mut proper: BTreeMap<VarId, usize> = BTreeMap::new();
        let mut counters: BTreeSet<&CountScope> = BTreeSet::new();
        for s in shapes {
            for (&v, &c) in s.proper.iter().zip(&s.cards) {
                proper.insert(v, c);
            }
            counters.extend(s.counters.iter());
        }
        Self::entry_count(proper.values().copied(), counters.iter().map(|z| z.len()))
    }

    /// Strides of this shape's table expressed over the digits of `target`,
    /// which must contain every proper variable and counter of `self`.
    pub fn embed_strides(&self, target: &Shape) -> Vec<usize> {
        let mut out = vec![0; target.radix.len()];
        let np = target.proper.len();
        for (i, v) in self.proper.iter().enumerate() {
            let pos = target
                .proper_position(*v)
                .expect("embedding target lacks a proper variable");
            out[pos] += self.strides[i];
        }
        for (j, z) in self.counters.iter().enumerate() {
            let pos = target
                .counter_position(z)
                .expect("embedding target lacks a counter");
            out[np + pos] += self.strides[self.proper.len() + j];
        }
        out
    }

    /// Plan for eliminating (or fixing) `var`. See [`ReducePlan`].
    pub fn reduce_plan(&self, var: VarId) -> Result<ReducePlan> {
        let proper_pos = self.proper_position(var);
        let in_counter = self.counters.iter().any(|z| z.contains(var));
        if proper_pos.is_none() && !in_counter {
            return Err(Error::VariableNotInFactor(var));
        }
        let card = proper_pos.map_or(2, |p| self.cards[p]);

        let mut proper = Vec::new();
        for (&v, &c) in self.proper.iter().zip(&self.cards) {
            if v != var {
                proper.push((v, c));
            }
        }
        let mut counters: Vec<CountScope> = Vec::new();
        let mut counter_target = Vec::with_capacity(self.counters.len());
        for z in &self.counters {
            match z.without(var) {
                Some(reduced) => {
                    let pos = match counters.iter().position(|c| *c == reduced) {
                        Some(p) => p,
                        None => {
                            counters.push(reduced);
                            counters.len() - 1
                        }
                    };
                    counter_target.push(Some(pos));
                }
                None => counter_target.push(None),
            }
        }
        let result = Shape::new(proper, counters)?;

        let np_out = result.proper.len();
        let mut source = Vec::with_capacity(self.radix.len());
        let mut increment = Vec::with_capacity(self.radix.len());
        for &v in &self.proper {
            if v == var {
                source.push(None);
                increment.push(1);
            } else {
                source.push(result.proper_position(v));
                increment.push(0);
            }
        }
        for (j, z) in self.counters.iter().enumerate() {
            source.push(counter_target[j].map(|p| np_out + p));
            increment.push(usize::from(z.contains(var)));
        }
        Ok(ReducePlan {
            var,
            card,
            result,
            source,
            increment,
        })
    }

    /// Which digits of `self` each digit of a flat enumeration maps to, and the
    /// flat scope (proper variables first, then count-only members ascending).
    pub fn flat_scope(&self) -> Vec<(VarId, usize)> {
        let mut scope: Vec<(VarId, usize)> =
            self.proper.iter().copied().zip(self.cards.iter().copied()).collect();
        let extra: BTreeSet<VarId> = self
            .counters
            .iter()
            .flat_map(|z| z.members().iter().copied())
            .filter(|m| !self.proper.contains(m))
            .collect();
        scope.extend(extra.into_iter().map(|v| (v, 2)));
        scope
    }

    /// For every entry of the flat table over [`Shape::flat_scope`], the index
    /// of the entry of this shape it reads.
    pub fn flat_index_map(&self, limit: usize) -> Result<(Vec<(VarId, usize)>, Vec<usize>)> {
        let scope = self.flat_scope();
        let entries: f64 = scope.iter().map(|&(_, c)| c as f64).product();
        if entries > limit as f64 {
            return Err(Error::FlattenTooLarge { entries, limit });
        }
        // Each flat digit contributes its value times a fixed stride to this
        // shape's index: its proper digit (if any) plus one per counter.
        let np = self.proper.len();
        let flat_strides: Vec<usize> = scope
            .iter()
            .map(|&(v, _)| {
                let mut s = self.proper_position(v).map_or(0, |p| self.strides[p]);
                for (j, z) in self.counters.iter().enumerate() {
                    if z.contains(v) {
                        s += self.strides[np + j];
                    }
                }
                s
            })
            .collect();
        let radix: Vec<usize> = scope.iter().map(|&(_, c)| c).collect();
        let mut map = Vec::with_capacity(entries as usize);
        for_each_entry(&radix, &[&flat_strides], |_, idx| map.push(idx[0]));
        Ok((scope, map))
    }

    /// Whether [`Shape::promote`] with `vars` would change the layout.
    pub fn promotes(&self, vars: &BTreeSet<VarId>) -> bool {
        self.counters
            .iter()
            .flat_map(|z| z.members())
            .any(|m| vars.contains(m) || self.proper.contains(m))
    }

    /// Layout in which the counted variables of `vars` are proper and every
    /// counter is restricted to its members outside the proper scope.
    ///
    /// Promoted variables follow the existing proper variables in ascending
    /// order; counters left empty disappear and counters that coincide are
    /// merged. Also returns, per digit of the new layout, its stride into
    /// this layout's index: the index is linear in the new digits because a
    /// count is the restricted count plus the promoted members' values.
    pub fn promote(&self, vars: &BTreeSet<VarId>) -> Result<(Shape, Vec<usize>)> {
        let counted: BTreeSet<VarId> = self
            .counters
            .iter()
            .flat_map(|z| z.members().iter().copied())
            .collect();
        let mut proper: Vec<(VarId, usize)> =
            self.proper.iter().copied().zip(self.cards.iter().copied()).collect();
        proper.extend(
            vars.iter()
                .filter(|&&v| counted.contains(&v) && !self.proper.contains(&v))
                .map(|&v| (v, 2)),
        );
        let is_proper = |v: VarId| proper.iter().any(|&(p, _)| p == v);
        let mut counters: Vec<CountScope> = Vec::new();
        let mut target: Vec<Option<usize>> = Vec::with_capacity(self.counters.len());
        for z in &self.counters {
            let rest: Vec<VarId> = z.members().iter().copied().filter(|&m| !is_proper(m)).collect();
            if rest.is_empty() {
                target.push(None);
                continue;
            }
            let reduced = CountScope { members: rest };
            let pos = counters.iter().position(|c| *c == reduced).unwrap_or_else(|| {
                counters.push(reduced);
                counters.len() - 1
            });
            target.push(Some(pos));
        }
        let np = self.proper.len();
        let mut strides = Vec::with_capacity(proper.len() + counters.len());
        for &(v, _) in &proper {
            let mut s = self.proper_position(v).map_or(0, |p| self.strides[p]);
            for (j, z) in self.counters.iter().enumerate() {
                if z.contains(v) {
                    s += self.strides[np + j];
                }
            }
            strides.push(s);
        }
        let mut counter_strides = vec![0; counters.len()];
        for (j, t) in target.iter().enumerate() {
            if let Some(p) = t {
                counter_strides[*p] += self.strides[np + j];
            }
        }
        strides.extend(counter_strides);
        Ok((Shape::new(proper, counters)?, strides))
    }

    /// Consistency of every entry: `true` iff some assignment to the counted
    /// variables agrees with the entry's proper values and realizes its count
    /// tuple.
    ///
    /// Counted variables not in the proper scope are grouped into atoms by the
    /// set of counters they belong to; the reachable count tuples are the
    /// Minkowski sum of the atoms' contributions. Proper variables that are
    /// also counted shift the reachable set by a fixed offset.
    pub fn validity_mask(&self) -> Vec<bool> {
        if self.counters.is_empty() {
            return vec![true; self.len];
        }
        let n = self.counters.len();
        let np = self.proper.len();
        let count_radix = &self.radix[np..];
        let count_strides = &self.strides[np..];
        let count_len = self.count_len();

        let mut atoms: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        let mut seen = BTreeSet::new();
        for z in &self.counters {
            for &m in z.members() {
                if self.proper.contains(&m) || !seen.insert(m) {
                    continue;
                }
                let pattern: Vec<usize> =
                    (0..n).filter(|&i| self.counters[i].contains(m)).collect();
                *atoms.entry(pattern).or_default() += 1;
            }
        }

        let mut reach = vec![false; count_len];
        reach[0] = true;
        let mut digits = vec![0usize; n];
        for (pattern, &size) in &atoms {
            let step: usize = pattern.iter().map(|&i| count_strides[i]).sum();
            // Each reachable tuple gains 0..=size copies of the atom's pattern.
            let mut next = reach.clone();
            for (idx, slot) in reach.iter().enumerate() {
                if !*slot {
                    continue;
                }
                decode_into(idx, count_radix, &mut digits);
                let headroom = pattern
                    .iter()
                    .map(|&i| count_radix[i] - 1 - digits[i])
                    .min()
                    .unwrap_or(0);
                for t in 1..=size.min(headroom) {
                    next[idx + t * step] = true;
                }
            }
            reach = next;
        }

        // Offsets induced by linked proper variables (proper and counted).
        let linked: Vec<(usize, Vec<usize>)> = self
            .proper
            .iter()
            .enumerate()
            .filter_map(|(p, &v)| {
                let pattern: Vec<usize> =
                    (0..n).filter(|&i| self.counters[i].contains(v)).collect();
                (!pattern.is_empty()).then_some((p, pattern))
            })
            .collect();

        let mut shifted: HashMap<Vec<usize>, Vec<bool>> = HashMap::new();
        let mut mask = Vec::with_capacity(self.len);
        let proper_radix = &self.radix[..np];
        let mut pdigits = vec![0usize; np];
        for pi in 0..self.proper_len() {
            decode_into(pi, proper_radix, &mut pdigits);
            let mut offset = vec![0usize; n];
            for (p, pattern) in &linked {
                if pdigits[*p] == 1 {
                    for &i in pattern {
                        offset[i] += 1;
                    }
                }
            }
            let block = shifted.entry(offset).or_insert_with_key(|offset| {
                let base: usize = offset
                    .iter()
                    .zip(count_strides)
                    .map(|(o, s)| o * s)
                    .sum();
                let mut block = vec![false; count_len];
                let mut k = vec![0usize; n];
                for (ci, slot) in block.iter_mut().enumerate() {
                    decode_into(ci, count_radix, &mut k);
                    if k.iter().zip(offset).all(|(a, b)| a >= b) {
                        *slot = reach[ci - base];
                    }
                }
                block
            });
            mask.extend_from_slice(block);
        }
        mask
    }
}

/// Elimination (or conditioning) of one variable, as digit arithmetic.
///
/// Input digit `d` of a result entry `r` under value `x` of the eliminated
/// variable is `r[source[d]] + increment[d] * x` (with `r[None] = 0`).
#[derive(Clone, Debug)]
pub struct ReducePlan {
    pub var: VarId,
    pub card: usize,
    pub result: Shape,
    source: Vec<Option<usize>>,
    increment: Vec<usize>,
}

impl ReducePlan {
    /// Re-expresses `input_strides` (one per input digit) as strides over the
    /// result digits plus one offset per value of the eliminated variable.
    pub fn compose(&self, input_strides: &[usize]) -> (Vec<usize>, Vec<usize>) {
        debug_assert_eq!(input_strides.len(), self.source.len());
        let mut strides = vec![0; self.result.radix.len()];
        let mut unit = 0;
        for ((src, inc), s) in self.source.iter().zip(&self.increment).zip(input_strides) {
            if let Some(r) = src {
                strides[*r] += s;
            }
            unit += inc * s;
        }
        let offsets = (0..self.card).map(|x| x * unit).collect();
        (strides, offsets)
    }
}

pub(crate) fn decode_into(mut index: usize, radix: &[usize], out: &mut [usize]) {
    for d in (0..radix.len()).rev() {
        out[d] = index % radix[d];
        index /= radix[d];
    }
}

/// Walks every entry of a mixed-radix space in row-major order, maintaining one
/// running index per stride set.
pub(crate) fn for_each_entry(
    radix: &[usize],
    strides: &[&[usize]],
    mut visit: impl FnMut(usize, &[usize]),
) {
    let total: usize = radix.iter().product();
    let k = strides.len();
    let mut digits = vec![0usize; radix.len()];
    let mut idx = vec![0usize; k];
    for e in 0..total {
        visit(e, &idx);
        let mut d = radix.len();
        while d > 0 {
            d -= 1;
            digits[d] += 1;
            if digits[d] < radix[d] {
                for (i, s) in strides.iter().enumerate() {
                    idx[i] += s[d];
                }
                break;
            }
            for (i, s) in strides.iter().enumerate() {
                idx[i] -= s[d] * (radix[d] - 1);
            }
            digits[d] = 0;
        }
    }
}
