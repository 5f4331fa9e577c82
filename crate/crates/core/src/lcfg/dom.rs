//! Dominators by the classic iterative dataflow fixed point:
//! `Dom(entry) = {entry}`, `Dom(n) = {n} ∪ ⋂ Dom(p)` over predecessors `p`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("block {0} is unreachable from the entry")]
pub struct UnreachableBlock(pub usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomTree {
    pub entry: usize,
    /// Immediate dominator per block; the entry maps to itself.
    pub idom: Vec<usize>,
}

impl DomTree {
    /// True when `a` dominates `b` (reflexive).
    pub fn dominates(&self, a: usize, mut b: usize) -> bool {
        loop {
            if a == b {
                return true;
            }
            if b == self.entry {
                return false;
            }
            b = self.idom[b];
        }
    }

    /// Dominators of `b` from `b` up to the entry.
    pub fn chain(&self, mut b: usize) -> Vec<usize> {
        let mut out = vec![b];
        while b != self.entry {
            b = self.idom[b];
            out.push(b);
        }
        out
    }
}

#[derive(Clone, PartialEq, Eq)]
struct BitSet(Vec<u64>);

impl BitSet {
    fn empty(n: usize) -> Self {
        BitSet(vec![0; n.div_ceil(64)])
    }

    fn full(n: usize) -> Self {
        let mut s = BitSet(vec![u64::MAX; n.div_ceil(64)]);
        if !n.is_multiple_of(64) {
            *s.0.last_mut().expect("nonempty") = (1u64 << (n % 64)) - 1;
        }
        s
    }

    fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn contains(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    fn intersect(&mut self, other: &BitSet) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a &= b;
        }
    }

    fn count(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }
}

/// Immediate dominators of a graph given as successor lists.
pub fn dominators(n: usize, entry: usize, succ: &[Vec<usize>]) -> Result<DomTree, UnreachableBlock> {
    let order = reverse_postorder(n, entry, succ);
    if order.len() < n {
        let mut reached = vec![false; n];
        for &b in &order {
            reached[b] = true;
        }
        let missing = reached.iter().position(|r| !r).expect("some block missing");
        return Err(UnreachableBlock(missing));
    }
    let mut pred = vec![Vec::new(); n];
    for (v, ws) in succ.iter().enumerate() {
        for &w in ws {
            pred[w].push(v);
        }
    }
    let mut dom: Vec<BitSet> = (0..n).map(|_| BitSet::full(n)).collect();
    dom[entry] = BitSet::empty(n);
    dom[entry].insert(entry);
    let mut changed = true;
    while changed {
        changed = false;
        for &b in order.iter().filter(|&&b| b != entry) {
            let mut next = BitSet::full(n);
            for &p in &pred[b] {
                next.intersect(&dom[p]);
            }
            next.insert(b);
            if next != dom[b] {
                dom[b] = next;
                changed = true;
            }
        }
    }
    // The immediate dominator is the strict dominator with the most dominators.
    let idom = (0..n)
        .map(|b| {
            if b == entry {
                return entry;
            }
            (0..n)
                .filter(|&d| d != b && dom[b].contains(d))
                .max_by_key(|&d| dom[d].count())
                .expect("entry strictly dominates every other block")
        })
        .collect();
    Ok(DomTree { entry, idom })
}

fn reverse_postorder(n: usize, entry: usize, succ: &[Vec<usize>]) -> Vec<usize> {
    let mut seen = vec![false; n];
    let mut post = Vec::with_capacity(n);
    let mut stack = vec![(entry, 0usize)];
    seen[entry] = true;
    while let Some((v, i)) = stack.pop() {
        if let Some(&w) = succ[v].get(i) {
            stack.push((v, i + 1));
            if !seen[w] {
                seen[w] = true;
                stack.push((w, 0));
            }
        } else {
            post.push(v);
        }
    }
    post.reverse();
    post
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain() {
        let d = dominators(3, 0, &[vec![1], vec![2], vec![]]).unwrap();
        assert_eq!(d.idom, [0, 0, 1]);
        assert_eq!(d.chain(2), [2, 1, 0]);
    }

    #[test]
    fn diamond() {
        let d = dominators(4, 0, &[vec![1, 2], vec![3], vec![3], vec![]]).unwrap();
        assert_eq!(d.idom, [0, 0, 0, 0]);
        assert!(!d.dominates(1, 3));
    }

    #[test]
    fn loop_with_two_entries_to_the_join() {
        // 0 → 1 → 2 → 1, 2 → 3, 0 → 3
        let d = dominators(4, 0, &[vec![1, 3], vec![2], vec![1, 3], vec![]]).unwrap();
        assert_eq!(d.idom, [0, 0, 1, 0]);
    }

    #[test]
    fn unreachable_is_an_error() {
        assert_eq!(dominators(3, 0, &[vec![1], vec![], vec![1]]), Err(UnreachableBlock(2)));
    }

    #[test]
    fn wide_graph_crosses_word_boundary() {
        let n = 130;
        let succ: Vec<Vec<usize>> = (0..n).map(|i| if i + 1 < n { vec![i + 1] } else { vec![] }).collect();
        let d = dominators(n, 0, &succ).unwrap();
        assert!((1..n).all(|i| d.idom[i] == i - 1));
    }
}
