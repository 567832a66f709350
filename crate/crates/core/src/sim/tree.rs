//! Block tree arena holding only the unsettled suffix of the chain.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Owner {
    Mp,
    Hp,
}

/// Conditional-frequency probes attached to individual blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Probe {
    /// The attacker's block contested in a freshly entered two-leaf published tie.
    TieEntry,
    /// A block the attacker found and withheld during a two-leaf published tie.
    WithheldAtTie,
}

impl Probe {
    pub const ALL: [Probe; 2] = [Probe::TieEntry, Probe::WithheldAtTie];

    pub(crate) fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockNode {
    pub id: u64,
    /// Arena index of the parent; `None` only for the settled root.
    pub parent: Option<u32>,
    pub owner: Owner,
    pub height: u64,
    pub published: bool,
    pub(crate) probe: Option<Probe>,
}

/// Outcome counters filled in while settling blocks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Tally {
    pub consensus_total: u64,
    pub consensus_mp: u64,
    pub stale_total: u64,
    /// `[won, lost]` per probe kind.
    pub probes: [[u64; 2]; 2],
}

impl Tally {
    fn settle(&mut self, node: &BlockNode, won: bool) {
        if won {
            self.consensus_total += 1;
            if node.owner == Owner::Mp {
                self.consensus_mp += 1;
            }
        } else {
            self.stale_total += 1;
        }
        if let Some(p) = node.probe {
            self.probes[p.slot()][usize::from(!won)] += 1;
        }
    }
}

/// Arena of unsettled blocks. Index 0 is always the settled root and every
/// child sits at a higher index than its parent.
#[derive(Debug, Clone)]
pub struct BlockTree {
    nodes: Vec<BlockNode>,
    next_id: u64,
    keep: Vec<bool>,
    kids: Vec<u32>,
    only_child: Vec<u32>,
    remap: Vec<u32>,
    scratch: Vec<BlockNode>,
}

impl Default for BlockTree {
    fn default() -> Self {
        Self::new()
    }
}

impl BlockTree {
    /// A tree holding only the genesis block.
    pub fn new() -> Self {
        let genesis = BlockNode {
            id: 0,
            parent: None,
            owner: Owner::Hp,
            height: 0,
            published: true,
            probe: None,
        };
        Self {
            nodes: vec![genesis],
            next_id: 1,
            keep: Vec::new(),
            kids: Vec::new(),
            only_child: Vec::new(),
            remap: Vec::new(),
            scratch: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> &BlockNode {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[BlockNode] {
        &self.nodes
    }

    pub(crate) fn publish(&mut self, i: usize) {
        self.nodes[i].published = true;
    }

    pub(crate) fn set_probe(&mut self, i: usize, probe: Probe) {
        self.nodes[i].probe.get_or_insert(probe);
    }

    /// Appends a child of `parent` and returns its index.
    pub fn push(&mut self, parent: usize, owner: Owner, published: bool) -> usize {
        let height = self.nodes[parent].height + 1;
        self.nodes.push(BlockNode {
            id: self.next_id,
            parent: Some(parent as u32),
            owner,
            height,
            published,
            probe: None,
        });
        self.next_id += 1;
        self.nodes.len() - 1
    }

    /// Total blocks created so far, genesis excluded.
    pub fn created(&self) -> u64 {
        self.next_id - 1
    }

    /// Ancestor of `i` at `height` (or `i` itself).
    pub fn ancestor_at(&self, mut i: usize, height: u64) -> Option<usize> {
        if self.nodes[i].height < height {
            return None;
        }
        while self.nodes[i].height > height {
            i = self.nodes[i].parent? as usize;
        }
        Some(i)
    }

    /// Published, not-yet-extended blocks at the greatest published height,
    /// ignoring `hidden`. Written into `out` in arena order.
    pub fn longest_published(&self, hidden: Option<usize>, out: &mut Vec<usize>) {
        out.clear();
        let mut best = 0;
        for (i, n) in self.nodes.iter().enumerate() {
            if !n.published || Some(i) == hidden {
                continue;
            }
            if out.is_empty() || n.height > best {
                best = n.height;
                out.clear();
                out.push(i);
            } else if n.height == best {
                out.push(i);
            }
        }
    }

    /// Settles everything the live tips no longer depend on.
    ///
    /// Blocks off every path to a live tip are stale; the path from the root
    /// to the deepest common ancestor of the tips becomes consensus. Tip
    /// indices are rewritten to the compacted arena.
    pub fn settle(&mut self, tips: &mut [usize], tally: &mut Tally) {
        let n = self.nodes.len();
        self.keep.clear();
        self.keep.resize(n, false);
        for &t in tips.iter() {
            let mut i = t;
            while !self.keep[i] {
                self.keep[i] = true;
                match self.nodes[i].parent {
                    Some(p) => i = p as usize,
                    None => break,
                }
            }
        }

        self.kids.clear();
        self.kids.resize(n, 0);
        self.only_child.clear();
        self.only_child.resize(n, 0);
        for i in 1..n {
            if self.keep[i] {
                let p = self.nodes[i].parent.expect("non-root block has a parent") as usize;
                self.kids[p] += 1;
                self.only_child[p] = i as u32;
            }
        }
        let mut root = 0;
        while self.kids[root] == 1 && !tips.contains(&root) {
            root = self.only_child[root] as usize;
            tally.settle(&self.nodes[root], true);
        }

        if root == 0 && self.keep.iter().all(|&k| k) {
            return;
        }
        self.scratch.clear();
        self.remap.clear();
        self.remap.resize(n, u32::MAX);
        for i in 0..n {
            if !self.keep[i] {
                tally.settle(&self.nodes[i], false);
                continue;
            }
            if i < root {
                continue;
            }
            let mut node = self.nodes[i].clone();
            node.parent = if i == root {
                None
            } else {
                node.parent.map(|p| self.remap[p as usize])
            };
            self.remap[i] = self.scratch.len() as u32;
            self.scratch.push(node);
        }
        std::mem::swap(&mut self.nodes, &mut self.scratch);
        for t in tips.iter_mut() {
            *t = self.remap[*t] as usize;
        }
    }

    /// Checks heights, parent order and the single root.
    pub fn is_well_formed(&self) -> bool {
        self.nodes.first().is_some_and(|r| r.parent.is_none())
            && self.nodes.iter().enumerate().skip(1).all(|(i, n)| match n.parent {
                Some(p) => (p as usize) < i && self.nodes[p as usize].height + 1 == n.height,
                None => false,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_chain_settles_behind_the_tip() {
        let mut t = BlockTree::new();
        let a = t.push(0, Owner::Hp, true);
        let b = t.push(a, Owner::Mp, true);
        let mut tips = [b];
        let mut tally = Tally::default();
        t.settle(&mut tips, &mut tally);
        assert_eq!(tally.consensus_total, 2);
        assert_eq!(tally.consensus_mp, 1);
        assert_eq!(t.len(), 1);
        assert_eq!(tips, [0]);
        assert_eq!(t.node(0).height, 2);
    }

    #[test]
    fn abandoned_branch_is_stale() {
        let mut t = BlockTree::new();
        let a = t.push(0, Owner::Hp, true);
        let b = t.push(0, Owner::Hp, true);
        let c = t.push(a, Owner::Mp, false);
        let mut tally = Tally::default();
        let mut tips = [a, b, c];
        t.settle(&mut tips, &mut tally);
        assert_eq!(tally, Tally::default());
        assert_eq!(t.len(), 4);

        let mut tips = [c];
        t.settle(&mut tips, &mut tally);
        assert_eq!(tally.stale_total, 1);
        assert_eq!(tally.consensus_total, 2);
        assert_eq!(t.created(), tally.consensus_total + tally.stale_total);
        assert!(t.is_well_formed());
    }

    #[test]
    fn fork_keeps_common_ancestor_as_root() {
        let mut t = BlockTree::new();
        let a = t.push(0, Owner::Hp, true);
        let b = t.push(a, Owner::Hp, true);
        let c = t.push(a, Owner::Hp, true);
        let mut tips = [b, c];
        let mut tally = Tally::default();
        t.settle(&mut tips, &mut tally);
        assert_eq!(tally.consensus_total, 1);
        assert_eq!(t.len(), 3);
        assert_eq!(tips, [1, 2]);
        assert!(t.is_well_formed());
    }

    #[test]
    fn longest_published_skips_private_and_hidden() {
        let mut t = BlockTree::new();
        let a = t.push(0, Owner::Hp, true);
        let b = t.push(0, Owner::Mp, true);
        t.push(a, Owner::Mp, false);
        let mut out = Vec::new();
        t.longest_published(None, &mut out);
        assert_eq!(out, vec![a, b]);
        t.longest_published(Some(b), &mut out);
        assert_eq!(out, vec![a]);
    }

    #[test]
    fn probes_resolve_with_their_block() {
        let mut t = BlockTree::new();
        let a = t.push(0, Owner::Mp, true);
        let b = t.push(0, Owner::Hp, true);
        t.set_probe(a, Probe::TieEntry);
        let c = t.push(b, Owner::Hp, true);
        let mut tally = Tally::default();
        t.settle(&mut [c], &mut tally);
        assert_eq!(tally.probes[Probe::TieEntry.slot()], [0, 1]);
    }
}
