use std::collections::BTreeSet;

use super::shape::CountScope;
use super::variable::{Assignment, VarId};

/// Whether `counts` is a consistent count combination for `counters`, given
/// the values in `proper_vals` of variables that are also proper.
///
/// Variables that belong to two or more counters, or that are fixed by
/// `proper_vals`, are enumerated jointly. For each such choice the remaining
/// members of a counter are private to it, so its residual count only has to
/// lie between zero and the number of those private members.
pub fn consistent(counters: &[CountScope], proper_vals: &Assignment, counts: &[usize]) -> bool {
    if counts.len() != counters.len() {
        return false;
    }
    if counters.iter().zip(counts).any(|(z, &k)| k > z.len()) {
        return false;
    }

    let mut shared: BTreeSet<VarId> = BTreeSet::new();
    let mut seen: BTreeSet<VarId> = BTreeSet::new();
    for z in counters {
        for &m in z.members() {
            if !seen.insert(m) || proper_vals.contains(m) {
                shared.insert(m);
            }
        }
    }
    let fixed: Vec<(VarId, usize)> = shared
        .iter()
        .filter_map(|&v| proper_vals.get(v).map(|x| (v, x)))
        .collect();
    if fixed.iter().any(|&(_, x)| x > 1) {
        return false;
    }
    let free: Vec<VarId> = shared
        .iter()
        .copied()
        .filter(|&v| !proper_vals.contains(v))
        .collect();
    let private: Vec<usize> = counters
        .iter()
        .map(|z| z.members().iter().filter(|m| !shared.contains(m)).count())
        .collect();

    'choice: for bits in 0u64..(1u64 << free.len()) {
        for (i, z) in counters.iter().enumerate() {
            let mut used = 0;
            for &(v, x) in &fixed {
                if z.contains(v) {
                    used += x;
                }
            }
            for (b, &v) in free.iter().enumerate() {
                if z.contains(v) {
                    used += ((bits >> b) & 1) as usize;
                }
            }
            if used > counts[i] || counts[i] - used > private[i] {
                continue 'choice;
            }
        }
        return true;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factors::variable::all_assignments;

    fn cs(m: &[VarId]) -> CountScope {
        CountScope::new(m.iter().copied()).unwrap()
    }

    #[test]
    fn two_overlapping_counters() {
        let counters = [cs(&[0, 1]), cs(&[1, 2])];
        assert!(!consistent(&counters, &Assignment::new(), &[2, 0]));
        assert!(consistent(&counters, &Assignment::new(), &[2, 1]));
    }

    #[test]
    fn single_counter_always_consistent() {
        let counters = [cs(&[0, 1, 2, 3])];
        for k in 0..=4 {
            assert!(consistent(&counters, &Assignment::new(), &[k]));
        }
        assert!(!consistent(&counters, &Assignment::new(), &[5]));
    }

    #[test]
    fn proper_values_constrain_counts() {
        let counters = [cs(&[0, 1])];
        let fixed: Assignment = [(0, 1)].into_iter().collect();
        assert!(!consistent(&counters, &fixed, &[0]));
        assert!(consistent(&counters, &fixed, &[1]));
        assert!(consistent(&counters, &fixed, &[2]));
    }

    #[test]
    fn agrees_with_enumeration() {
        // canonical #1{a,b,z}, #2{b,c} with z also proper
        let (a, b, c, z) = (0, 1, 2, 3);
        let counters = [cs(&[a, b, z]), cs(&[b, c])];
        for zv in 0..2 {
            let fixed: Assignment = [(z, zv)].into_iter().collect();
            for k1 in 0..=3 {
                for k2 in 0..=2 {
                    let brute = all_assignments(&[(a, 2), (b, 2), (c, 2)]).any(|mut asg| {
                        asg.set(z, zv);
                        counters[0].count(&asg).unwrap() == k1
                            && counters[1].count(&asg).unwrap() == k2
                    });
                    assert_eq!(consistent(&counters, &fixed, &[k1, k2]), brute);
                }
            }
        }
    }
}
