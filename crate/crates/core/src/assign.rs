//! Bottleneck assignment: match every item to a distinct slot so that the
//! largest cost used is as small as possible.

use alloc::vec;
use alloc::vec::Vec;

/// `cost[i][s]` is the cost of putting item `i` in slot `s`. Returns the
/// slot of each item and the bottleneck value, or `None` when there are
/// more items than slots.
pub(crate) fn bottleneck(cost: &[Vec<f64>], slots: usize) -> Option<(Vec<usize>, f64)> {
    let items = cost.len();
    if items == 0 {
        return Some((Vec::new(), 0.0));
    }
    if items > slots {
        return None;
    }
    let mut levels: Vec<f64> = cost.iter().flatten().copied().filter(|c| c.is_finite()).collect();
    levels.sort_by(|a, b| a.total_cmp(b));
    levels.dedup();
    let (mut lo, mut hi) = (0usize, levels.len());
    let mut found: Option<Vec<usize>> = None;
    while lo < hi {
        let mid = (lo + hi) / 2;
        match matching(cost, slots, levels[mid]) {
            Some(m) => {
                found = Some(m);
                hi = mid;
            }
            None => lo = mid + 1,
        }
    }
    if lo == levels.len() {
        return None;
    }
    let m = match found {
        Some(m) if m.iter().enumerate().all(|(i, &s)| cost[i][s] <= levels[lo]) => m,
        _ => matching(cost, slots, levels[lo])?,
    };
    Some((m, levels[lo]))
}

/// Largest matching using only entries with cost at most `threshold`;
/// returns the slot of each matched item.
pub(crate) fn max_matching(cost: &[Vec<f64>], slots: usize, threshold: f64) -> Vec<Option<usize>> {
    let mut owner: Vec<Option<usize>> = vec![None; slots];
    for i in 0..cost.len() {
        let mut seen = vec![false; slots];
        augment(i, cost, threshold, &mut owner, &mut seen);
    }
    let mut slot_of = vec![None; cost.len()];
    for (s, o) in owner.iter().enumerate() {
        if let Some(i) = o {
            slot_of[*i] = Some(s);
        }
    }
    slot_of
}

fn matching(cost: &[Vec<f64>], slots: usize, threshold: f64) -> Option<Vec<usize>> {
    let mut owner: Vec<Option<usize>> = vec![None; slots];
    for i in 0..cost.len() {
        let mut seen = vec![false; slots];
        if !augment(i, cost, threshold, &mut owner, &mut seen) {
            return None;
        }
    }
    let mut slot_of = vec![0usize; cost.len()];
    for (s, o) in owner.iter().enumerate() {
        if let Some(i) = o {
            slot_of[*i] = s;
        }
    }
    Some(slot_of)
}

fn augment(i: usize, cost: &[Vec<f64>], threshold: f64, owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
    for s in 0..owner.len() {
        if seen[s] || cost[i][s] > threshold {
            continue;
        }
        seen[s] = true;
        let free = match owner[s] {
            None => true,
            Some(k) => augment(k, cost, threshold, owner, seen),
        };
        if free {
            owner[s] = Some(i);
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_the_smallest_bottleneck() {
        let cost = vec![vec![1.0, 5.0, 9.0], vec![1.0, 2.0, 9.0]];
        let (m, b) = bottleneck(&cost, 3).unwrap();
        assert_eq!(b, 2.0);
        assert_eq!(m, vec![0, 1]);
    }

    #[test]
    fn partial_matching_under_a_threshold() {
        let cost = vec![vec![0.1, 0.9], vec![0.1, 0.9], vec![0.9, 0.2]];
        let m = max_matching(&cost, 2, 0.5);
        assert_eq!(m.iter().filter(|s| s.is_some()).count(), 2);
        assert_eq!(m[2], Some(1));
    }

    #[test]
    fn too_many_items() {
        assert!(bottleneck(&[vec![0.0], vec![0.0]], 1).is_none());
    }
}
