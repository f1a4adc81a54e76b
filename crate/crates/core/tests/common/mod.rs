#![allow(dead_code)]

use std::collections::BTreeSet;

use anonplan::factors::{
    all_assignments, Assignment, CountScope, FlatFactor, MixedModeFactor, Shape, VarId,
};
use rand::seq::SliceRandom;
use rand::Rng;

/// Canonical variable ids of g(x, y, z, #1(a, b, z), #2(b, c)).
pub const X: VarId = 0;
pub const Y: VarId = 1;
pub const Z: VarId = 2;
pub const A: VarId = 3;
pub const B: VarId = 4;
pub const C: VarId = 5;

pub fn cs(m: &[VarId]) -> CountScope {
    CountScope::new(m.iter().copied()).unwrap()
}

/// The canonical factor whose representation value is the sum of its five
/// index digits.
pub fn canonical() -> MixedModeFactor {
    let shape = Shape::new(
        vec![(X, 2), (Y, 2), (Z, 2)],
        vec![cs(&[A, B, Z]), cs(&[B, C])],
    )
    .unwrap();
    MixedModeFactor::from_fn(shape, |p, k| (p.iter().sum::<usize>() + k.iter().sum::<usize>()) as f64)
}

/// Canonical shape with arbitrary entry values.
pub fn canonical_random(rng: &mut impl Rng) -> MixedModeFactor {
    let shape = Shape::new(
        vec![(X, 2), (Y, 2), (Z, 2)],
        vec![cs(&[A, B, Z]), cs(&[B, C])],
    )
    .unwrap();
    MixedModeFactor::from_fn(shape, |_, _| f64::from(rng.gen_range(-20i32..=20)) * 0.5)
}

/// Random mixed-mode factor over binary variables drawn from `pool`: up to
/// `max_proper` proper variables and up to `max_counters` counters of size at
/// most `max_counter` with arbitrary overlaps.
pub fn random_factor(
    rng: &mut impl Rng,
    pool: &[VarId],
    max_proper: usize,
    max_counters: usize,
    max_counter: usize,
) -> MixedModeFactor {
    let n_proper = rng.gen_range(0..=max_proper.min(pool.len()));
    let proper: Vec<VarId> = pool.choose_multiple(rng, n_proper).copied().collect();
    let n_counters = rng.gen_range(0..=max_counters);
    let mut counters: Vec<CountScope> = Vec::new();
    for _ in 0..n_counters {
        let size = rng.gen_range(1..=max_counter.min(pool.len()));
        let members: Vec<VarId> = pool.choose_multiple(rng, size).copied().collect();
        let z = CountScope::new(members).unwrap();
        if !counters.contains(&z) {
            counters.push(z);
        }
    }
    let shape = Shape::new(proper.into_iter().map(|v| (v, 2)).collect(), counters).unwrap();
    MixedModeFactor::from_fn(shape, |_, _| f64::from(rng.gen_range(-40i32..=40)) * 0.25)
}

/// A factor set over `n_vars` binary variables that includes the canonical
/// overlap pattern about half the time.
pub fn random_factor_set(rng: &mut impl Rng, n_vars: usize) -> Vec<MixedModeFactor> {
    let pool: Vec<VarId> = (0..n_vars).collect();
    let mut out = Vec::new();
    if n_vars >= 6 && rng.gen_bool(0.5) {
        out.push(canonical_random(rng));
    }
    let n = rng.gen_range(1..=5);
    for _ in 0..n {
        out.push(random_factor(rng, &pool, 3, 3, 6));
    }
    out
}

pub fn scope_of(factors: &[MixedModeFactor]) -> Vec<(VarId, usize)> {
    let vars: BTreeSet<VarId> = factors.iter().flat_map(|f| f.shape().variables()).collect();
    vars.into_iter().map(|v| (v, 2)).collect()
}

/// Brute-force maximum of the sum of the factors over every assignment.
pub fn brute_force_max(factors: &[MixedModeFactor]) -> (f64, Assignment) {
    let scope = scope_of(factors);
    let mut best = (f64::NEG_INFINITY, Assignment::new());
    for a in all_assignments(&scope) {
        let v: f64 = factors.iter().map(|f| f.eval(&a).unwrap()).sum();
        if v > best.0 {
            best = (v, a);
        }
    }
    best
}

/// Whether the entry's (proper values, counts) is realized by some
/// assignment, by enumerating every counted variable.
pub fn brute_force_consistent(shape: &Shape, index: usize) -> bool {
    let digits = shape.digits_of(index);
    let np = shape.proper().len();
    let proper: Assignment = shape
        .proper()
        .iter()
        .copied()
        .zip(digits[..np].iter().copied())
        .collect();
    let counted: Vec<(VarId, usize)> = shape
        .counters()
        .iter()
        .flat_map(|z| z.members().iter().copied())
        .filter(|v| !proper.contains(*v))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(|v| (v, 2))
        .collect();
    let found = all_assignments(&counted).any(|mut a| {
        a.extend(&proper);
        shape
            .counters()
            .iter()
            .zip(&digits[np..])
            .all(|(z, &k)| z.count(&a).unwrap() == k)
    });
    found
}

/// Flat max-marginalization of `flat` over `var`, evaluated at `a`.
pub fn flat_max_over(flat: &FlatFactor, var: VarId, a: &Assignment) -> f64 {
    let pos = flat.scope().iter().position(|&v| v == var).unwrap();
    (0..flat.cards()[pos])
        .map(|x| flat.eval(&a.clone().with(var, x)).unwrap())
        .fold(f64::NEG_INFINITY, f64::max)
}
