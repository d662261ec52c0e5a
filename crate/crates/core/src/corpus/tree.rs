use crate::{Error, Result};

use super::Token;

/// Dependency tree view over a sentence's tokens, positions 1-based.
#[derive(Clone, Debug)]
pub struct DepTree {
    heads: Vec<usize>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    size: Vec<usize>,
    min: Vec<usize>,
    max: Vec<usize>,
}

impl DepTree {
    /// Builds the tree, rejecting out-of-range heads, self-attachment and
    /// cycles. Multiple roots are accepted here; they are a validation
    /// finding, not a structural failure.
    pub fn new(tokens: &[Token]) -> Result<DepTree> {
        let heads: Vec<usize> = std::iter::once(0).chain(tokens.iter().map(|t| t.head)).collect();
        Self::from_heads(heads)
    }

    /// `heads[0]` is ignored; `heads[i]` is the governor of token `i`.
    pub fn from_heads(mut heads: Vec<usize>) -> Result<DepTree> {
        if heads.is_empty() {
            heads.push(0);
        }
        heads[0] = 0;
        let n = heads.len() - 1;
        let mut children = vec![Vec::new(); n + 1];
        for (i, &h) in heads.iter().enumerate().skip(1) {
            if h > n {
                return Err(Error::Validation(format!("token {i}: head {h} out of range 0..={n}")));
            }
            if h == i {
                return Err(Error::Validation(format!("token {i}: attached to itself")));
            }
            children[h].push(i);
        }

        // Depth via walk to root; a walk longer than n steps means a cycle.
        let mut depth = vec![usize::MAX; n + 1];
        depth[0] = 0;
        for i in 1..=n {
            let mut path = Vec::new();
            let mut cur = i;
            while depth[cur] == usize::MAX {
                path.push(cur);
                if path.len() > n {
                    return Err(Error::Validation(format!("token {i}: cyclic head chain")));
                }
                cur = heads[cur];
            }
            let mut d = depth[cur];
            for &p in path.iter().rev() {
                d += 1;
                depth[p] = d;
            }
        }

        let mut size = vec![1usize; n + 1];
        let mut min: Vec<usize> = (0..=n).collect();
        let mut max: Vec<usize> = (0..=n).collect();
        let mut order: Vec<usize> = (1..=n).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(depth[i]));
        for &i in &order {
            let h = heads[i];
            if h != 0 {
                size[h] += size[i];
                min[h] = min[h].min(min[i]);
                max[h] = max[h].max(max[i]);
            }
        }

        Ok(DepTree {
            heads,
            children,
            depth,
            size,
            min,
            max,
        })
    }

    pub fn len(&self) -> usize {
        self.heads.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn head(&self, i: usize) -> usize {
        self.heads[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn roots(&self) -> &[usize] {
        &self.children[0]
    }

    /// Distance from the artificial root (root tokens have depth 1).
    pub fn depth(&self, i: usize) -> usize {
        self.depth[i]
    }

    /// Number of tokens in the subtree of `i`, including `i`.
    pub fn subtree_size(&self, i: usize) -> usize {
        self.size[i]
    }

    /// Leftmost and rightmost positions in the subtree of `i`.
    pub fn yield_bounds(&self, i: usize) -> (usize, usize) {
        (self.min[i], self.max[i])
    }

    /// True if `anc` dominates `i` (reflexively).
    pub fn dominates(&self, anc: usize, mut i: usize) -> bool {
        loop {
            if i == anc {
                return true;
            }
            if i == 0 {
                return false;
            }
            i = self.heads[i];
        }
    }

    /// Positions in the subtree of `i`, sorted.
    pub fn descendants(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.size[i]);
        let mut stack = vec![i];
        while let Some(x) = stack.pop() {
            out.push(x);
            stack.extend_from_slice(&self.children[x]);
        }
        out.sort_unstable();
        out
    }

    /// True when every subtree covers a contiguous range.
    pub fn is_projective(&self) -> bool {
        (1..=self.len()).all(|i| self.max[i] + 1 - self.min[i] == self.size[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn army_of_diocletian() {
        // the <- army (root) -> of -> Diocletian
        let t = DepTree::from_heads(vec![0, 2, 0, 2, 3]).unwrap();
        assert_eq!(t.roots(), &[2]);
        assert_eq!(t.subtree_size(2), 4);
        assert_eq!(t.yield_bounds(3), (3, 4));
        assert_eq!(t.depth(4), 3);
        assert!(t.dominates(2, 4));
        assert!(!t.dominates(3, 1));
        assert_eq!(t.descendants(3), vec![3, 4]);
        assert!(t.is_projective());
    }

    #[test]
    fn rejects_cycles_and_range() {
        assert!(DepTree::from_heads(vec![0, 2, 1]).is_err());
        assert!(DepTree::from_heads(vec![0, 0, 5]).is_err());
        assert!(DepTree::from_heads(vec![0, 1]).is_err());
    }

    #[test]
    fn non_projective_detected() {
        // 1 <- 3, 2 root, 3 <- 2, 4 <- 1 : subtree of 1 = {1,4} skips 2,3
        let t = DepTree::from_heads(vec![0, 3, 0, 2, 1]).unwrap();
        assert!(!t.is_projective());
        assert_eq!(t.yield_bounds(1), (1, 4));
    }
}
