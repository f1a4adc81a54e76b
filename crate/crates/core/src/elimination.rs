//! Variable elimination over mixed-mode factors.
//!
//! The same code handles flat factors (no counters) and redundant
//! representations; only the factor shapes differ.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::factors::{for_each_entry, Assignment, MixedModeFactor, Shape, Sketch, VarId};

/// Factors under elimination plus an index from variables to the factors
/// mentioning them.
#[derive(Clone, Debug, Default)]
pub struct FactorSet {
    factors: Vec<Option<MixedModeFactor>>,
    index: BTreeMap<VarId, BTreeSet<usize>>,
}

impl FactorSet {
    pub fn new(factors: impl IntoIterator<Item = MixedModeFactor>) -> Self {
        let mut fs = Self::default();
        for f in factors {
            fs.push(f);
        }
        fs
    }

    pub fn push(&mut self, f: MixedModeFactor) {
        let pos = self.factors.len();
        for v in f.shape().variables() {
            self.index.entry(v).or_default().insert(pos);
        }
        self.factors.push(Some(f));
    }

    /// Removes and returns every factor mentioning `var`.
    pub fn collect(&mut self, var: VarId) -> Vec<MixedModeFactor> {
        let positions = self.index.remove(&var).unwrap_or_default();
        let mut out = Vec::with_capacity(positions.len());
        for pos in positions {
            let f = self.factors[pos].take().expect("index points at a live factor");
            for v in f.shape().variables() {
                if let Some(set) = self.index.get_mut(&v) {
                    set.remove(&pos);
                    if set.is_empty() {
                        self.index.remove(&v);
                    }
                }
            }
            out.push(f);
        }
        out
    }

    pub fn variables(&self) -> BTreeSet<VarId> {
        self.index.keys().copied().collect()
    }

    pub fn factors(&self) -> impl Iterator<Item = &MixedModeFactor> {
        self.factors.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.factors().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks the variable index against the live factors.
    pub fn index_is_consistent(&self) -> bool {
        let mut rebuilt: BTreeMap<VarId, BTreeSet<usize>> = BTreeMap::new();
        for (pos, f) in self.factors.iter().enumerate() {
            if let Some(f) = f {
                for v in f.shape().variables() {
                    rebuilt.entry(v).or_default().insert(pos);
                }
            }
        }
        rebuilt == self.index
    }
}

/// Variables to make proper before summing the given factors: the union's
/// proper variables plus whatever [`Sketch::compaction`] picks.
pub fn promotion<'a>(shapes: impl IntoIterator<Item = &'a Shape>) -> BTreeSet<VarId> {
    let union = Sketch::union(&shapes.into_iter().map(Sketch::of).collect::<Vec<_>>());
    let mut out = union.compaction();
    out.extend(union.proper.keys());
    out
}

/// Greedy elimination order: repeatedly eliminate the candidate whose reduced
/// intermediate term has the fewest representation entries; ties go to the
/// lowest variable id.
pub fn greedy_order(fs: &FactorSet, candidates: &BTreeSet<VarId>) -> Vec<VarId> {
    greedy_order_for_shapes(fs.factors().map(MixedModeFactor::shape), candidates)
}

pub fn greedy_order_for_shapes<'a>(
    shapes: impl IntoIterator<Item = &'a Shape>,
    candidates: &BTreeSet<VarId>,
) -> Vec<VarId> {
    let mut live: Vec<Sketch> = shapes.into_iter().map(Sketch::of).collect();
    let mut remaining = candidates.clone();
    let mut order = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let mut best: Option<(f64, VarId, Sketch)> = None;
        for &v in &remaining {
            let reduced = Sketch::union(live.iter().filter(|s| s.mentions(v)))
                .compacted()
                .reduced(v);
            let score = reduced.entries();
            if best.as_ref().map_or(true, |(b, _, _)| score < *b) {
                best = Some((score, v, reduced));
            }
        }
        let (_, v, reduced) = best.expect("remaining is non-empty");
        live.retain(|s| !s.mentions(v));
        if !reduced.variables().is_empty() {
            live.push(reduced);
        }
        remaining.remove(&v);
        order.push(v);
    }
    order
}

/// Largest summed term, in representation entries, that eliminating `order`
/// forms from factors of the given shapes, found without building tables.
pub fn planned_peak<'a>(shapes: impl IntoIterator<Item = &'a Shape>, order: &[VarId]) -> f64 {
    let mut live: Vec<Sketch> = shapes.into_iter().map(Sketch::of).collect();
    let mut peak: f64 = 0.0;
    for &v in order {
        if !live.iter().any(|s| s.mentions(v)) {
            continue;
        }
        let union = Sketch::union(live.iter().filter(|s| s.mentions(v))).compacted();
        peak = peak.max(union.entries());
        live.retain(|s| !s.mentions(v));
        live.push(union.reduced(v));
    }
    peak
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EliminationOptions {
    /// Abort when an intermediate (augmented) term would exceed this many entries.
    pub entry_budget: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EliminationStats {
    /// Largest augmented term formed, in representation entries.
    pub peak_entries: usize,
    /// Sum of augmented term sizes over all steps.
    pub total_entries: usize,
}

/// Best branch of every entry of one reduced term.
#[derive(Clone, Debug)]
pub struct TracebackStep {
    pub var: VarId,
    pub shape: Shape,
    pub best: Vec<u8>,
}

/// Per eliminated variable, in elimination order.
#[derive(Clone, Debug, Default)]
pub struct Traceback {
    pub steps: Vec<TracebackStep>,
}

impl Traceback {
    /// Replays the steps in reverse elimination order.
    pub fn recover(&self) -> Result<Assignment> {
        let mut a = Assignment::new();
        for step in self.steps.iter().rev() {
            let idx = step.shape.index_for(&a)?;
            a.set(step.var, usize::from(step.best[idx]));
        }
        Ok(a)
    }
}

fn check_order(fs: &FactorSet, order: &[VarId]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for &v in order {
        if !seen.insert(v) {
            return Err(Error::InvalidFactor(format!(
                "variable {v} appears twice in the elimination order"
            )));
        }
    }
    let missing: Vec<VarId> = fs.variables().difference(&seen).copied().collect();
    if !missing.is_empty() {
        return Err(Error::UneliminatedVariables(missing));
    }
    Ok(())
}

/// Sum of the given factors followed by maxing out `var`, without building
/// the augmented table.
///
/// Entries of the reduced term are consistent exactly when every branch
/// entry of the augmented term is, so the branches of a consistent result
/// entry are read from the inputs directly. Inconsistent result entries are
/// set to zero.
pub fn augment_reduce_max(
    factors: &[&MixedModeFactor],
    var: VarId,
    budget: Option<usize>,
) -> Result<(MixedModeFactor, Vec<u8>, usize)> {
    let augmented_size = Shape::union_entry_count(factors.iter().map(|f| f.shape()));
    if let Some(b) = budget {
        if augmented_size > b as f64 {
            return Err(Error::EntryBudgetExceeded {
                entries: augmented_size,
                budget: b,
            });
        }
    }
    let union = Shape::union(factors.iter().map(|f| f.shape()))?;
    let plan = union.reduce_plan(var)?;
    let composed: Vec<(Vec<usize>, Vec<usize>)> = factors
        .iter()
        .map(|f| plan.compose(&f.shape().embed_strides(&union)))
        .collect();
    let result = plan.result.clone();
    let valid = result.validity_mask();
    let strides: Vec<&[usize]> = composed.iter().map(|(s, _)| s.as_slice()).collect();
    let mut table = Vec::with_capacity(result.len());
    let mut best = Vec::with_capacity(result.len());
    for_each_entry(result.radix(), &strides, |e, idx| {
        if !valid[e] {
            table.push(0.0);
            best.push(0);
            return;
        }
        let mut top = f64::NEG_INFINITY;
        let mut arg = 0u8;
        for b in 0..plan.card {
            let mut sum = 0.0;
            for ((f, (_, offsets)), &i) in factors.iter().zip(&composed).zip(idx) {
                let j = i + offsets[b];
                debug_assert!(f.is_valid(j));
                sum += f.table()[j];
            }
            if sum > top {
                top = sum;
                arg = b as u8;
            }
        }
        table.push(top);
        best.push(arg);
    });
    Ok((
        MixedModeFactor::from_parts(result, table, valid),
        best,
        union.len(),
    ))
}

fn run(
    mut fs: FactorSet,
    order: &[VarId],
    opts: EliminationOptions,
    mut traceback: Option<&mut Traceback>,
) -> Result<(f64, EliminationStats)> {
    check_order(&fs, order)?;
    let mut stats = EliminationStats::default();
    for &v in order {
        let collected = fs.collect(v);
        if collected.is_empty() {
            if let Some(tb) = traceback.as_deref_mut() {
                tb.steps.push(TracebackStep {
                    var: v,
                    shape: Shape::empty(),
                    best: vec![0],
                });
            }
            fs.push(MixedModeFactor::zero());
            continue;
        }
        let promote = promotion(collected.iter().map(MixedModeFactor::shape));
        let collected = collected
            .into_iter()
            .map(|f| if f.shape().promotes(&promote) { f.promote(&promote) } else { Ok(f) })
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&MixedModeFactor> = collected.iter().collect();
        let (reduced, best, augmented) = augment_reduce_max(&refs, v, opts.entry_budget)?;
        stats.peak_entries = stats.peak_entries.max(augmented);
        stats.total_entries += augmented;
        if let Some(tb) = traceback.as_deref_mut() {
            tb.steps.push(TracebackStep {
                var: v,
                shape: reduced.shape().clone(),
                best,
            });
        }
        fs.push(reduced);
    }
    let mut total = 0.0;
    for f in fs.factors() {
        total += f.scalar().expect("only empty-scope factors remain");
    }
    Ok((total, stats))
}

/// Maximum over all assignments of the sum of the factors.
pub fn eliminate_max(fs: &FactorSet, order: &[VarId]) -> Result<f64> {
    Ok(eliminate_max_with(fs, order, EliminationOptions::default())?.0)
}

pub fn eliminate_max_with(
    fs: &FactorSet,
    order: &[VarId],
    opts: EliminationOptions,
) -> Result<(f64, EliminationStats)> {
    run(fs.clone(), order, opts, None)
}

/// Maximum and a maximizing assignment of the eliminated variables. Ties
/// prefer the lower value of the later-decided variable.
pub fn eliminate_argmax(fs: &FactorSet, order: &[VarId]) -> Result<(f64, Assignment)> {
    let mut tb = Traceback::default();
    let (value, _) = run(fs.clone(), order, EliminationOptions::default(), Some(&mut tb))?;
    Ok((value, tb.recover()?))
}
