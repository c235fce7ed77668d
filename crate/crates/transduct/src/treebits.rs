//! Nodes of a perfect binary tree of depth `d`, packed into a single word.
//!
//! A node is a bitstring of length <= d; the root is the empty string. The
//! packed form keeps the string's value MSB-first in `bits`, so the b-child
//! of `u` is `u.bits << 1 | b` and ancestor tests are shift-and-compare.
//! Depths are capped at 62 so every node of every supported tree fits in a
//! `u64` together with a length marker.

use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A binary label or prediction; always 0 or 1.
pub type Bit = u8;

/// Maximum supported tree depth (node strings must fit a u64 with headroom
/// for a one-bit length marker used by the hypothesis prf).
pub const MAX_DEPTH: u8 = 62;

/// A node of a perfect binary tree: a bitstring of length `depth`, stored
/// MSB-first in `bits`. Two nodes are equal iff their strings are equal.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    depth: u8,
    bits: u64,
}

impl NodeId {
    /// The root: the empty bitstring.
    pub const ROOT: NodeId = NodeId { depth: 0, bits: 0 };

    /// Builds a node from a depth and the MSB-first value of its string.
    pub fn from_bits(depth: u8, bits: u64) -> Result<NodeId> {
        if depth > MAX_DEPTH {
            return Err(Error::DepthOverflow { depth, d: MAX_DEPTH });
        }
        if depth < 64 && bits >> depth != 0 {
            return Err(Error::InvalidParameter(format!(
                "bits 0x{bits:x} do not fit in a depth-{depth} node"
            )));
        }
        Ok(NodeId { depth, bits })
    }

    pub fn depth(self) -> u8 {
        self.depth
    }

    pub fn bits(self) -> u64 {
        self.bits
    }

    pub fn is_root(self) -> bool {
        self.depth == 0
    }

    /// The i-th bit of the string, 0-indexed from the root end.
    pub fn bit_at(self, i: u8) -> Bit {
        debug_assert!(i < self.depth);
        ((self.bits >> (self.depth - 1 - i)) & 1) as Bit
    }

    /// The final bit, i.e. which child of its parent this node is.
    pub fn last_bit(self) -> Option<Bit> {
        if self.depth == 0 {
            None
        } else {
            Some((self.bits & 1) as Bit)
        }
    }

    pub fn parent(self) -> Option<NodeId> {
        if self.depth == 0 {
            None
        } else {
            Some(NodeId { depth: self.depth - 1, bits: self.bits >> 1 })
        }
    }

    /// Appends one bit. Depth bookkeeping against a concrete tree is the
    /// caller's job; see [`Tree::child`] for the checked form.
    pub(crate) fn extend(self, b: Bit) -> NodeId {
        debug_assert!(b <= 1);
        assert!(self.depth < 63, "node string would overflow its word");
        NodeId { depth: self.depth + 1, bits: self.bits << 1 | b as u64 }
    }

    /// Reflexive ancestor test: is `self`'s string a prefix of `v`'s?
    pub fn is_ancestor(self, v: NodeId) -> bool {
        self.depth <= v.depth && v.bits >> (v.depth - self.depth) == self.bits
    }

    /// Is `v` a descendant of `self`'s b-child? False whenever `v` is not a
    /// strict descendant of `self`, in particular for `v == self`; a node at
    /// the bottom of its tree therefore has no b-descendants.
    pub fn is_b_descendant(self, b: Bit, v: NodeId) -> bool {
        debug_assert!(b <= 1);
        v.depth > self.depth && self.is_ancestor(v) && v.bit_at(self.depth) == b
    }

    /// All prefixes of `self`, root first, `self` last (depth + 1 nodes).
    pub fn path_to(self) -> Vec<NodeId> {
        (0..=self.depth)
            .map(|k| NodeId { depth: k, bits: self.bits >> (self.depth - k) })
            .collect()
    }

    /// Index in breadth-first order: the root is 0, the b-child of index i
    /// is 2i + 1 + b. Nodes of equal depth are ordered lexicographically.
    pub fn bfs_index(self) -> u64 {
        (1u64 << self.depth) - 1 + self.bits
    }

    /// Inverse of [`NodeId::bfs_index`].
    pub fn from_bfs_index(i: u64) -> NodeId {
        let depth = (64 - (i + 1).leading_zeros() - 1) as u8;
        NodeId { depth, bits: i + 1 - (1 << depth) }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.depth {
            write!(f, "{}", self.bit_at(i))?;
        }
        Ok(())
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_root() {
            write!(f, "NodeId(\u{3bb})")
        } else {
            write!(f, "NodeId({self})")
        }
    }
}

impl FromStr for NodeId {
    type Err = Error;

    /// Parses a raw bitstring; the empty string is the root.
    fn from_str(s: &str) -> Result<NodeId> {
        if s.len() > MAX_DEPTH as usize {
            return Err(Error::DepthOverflow { depth: s.len() as u8, d: MAX_DEPTH });
        }
        let mut bits = 0u64;
        for c in s.chars() {
            match c {
                '0' => bits <<= 1,
                '1' => bits = bits << 1 | 1,
                _ => {
                    return Err(Error::Parse(format!(
                        "invalid node string {s:?}: expected only 0s and 1s"
                    )))
                }
            }
        }
        Ok(NodeId { depth: s.len() as u8, bits })
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<NodeId, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// A perfect binary tree of fixed depth `d`; carries the depth bound for
/// operations that need it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tree {
    d: u8,
}

impl Tree {
    pub fn new(d: u8) -> Result<Tree> {
        if d > MAX_DEPTH {
            return Err(Error::DepthOverflow { depth: d, d: MAX_DEPTH });
        }
        Ok(Tree { d })
    }

    pub fn depth(self) -> u8 {
        self.d
    }

    pub fn contains(self, u: NodeId) -> bool {
        u.depth <= self.d
    }

    /// The b-child of `u`; errors when `u` is already at the bottom.
    pub fn child(self, u: NodeId, b: Bit) -> Result<NodeId> {
        debug_assert!(b <= 1);
        if u.depth >= self.d {
            return Err(Error::DepthOverflow { depth: u.depth, d: self.d });
        }
        Ok(u.extend(b))
    }

    /// Number of nodes, 2^(d+1) - 1.
    pub fn node_count(self) -> u64 {
        (1u64 << (self.d + 1)) - 1
    }

    /// All nodes in breadth-first order.
    pub fn bfs_nodes(self) -> impl Iterator<Item = NodeId> {
        (0..self.node_count()).map(NodeId::from_bfs_index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(s: &str) -> NodeId {
        s.parse().unwrap()
    }

    /// Definition-unfolding reference: u is an ancestor of v iff u == v or
    /// u is an ancestor of v's parent.
    fn is_ancestor_ref(u: NodeId, v: NodeId) -> bool {
        if u == v {
            return true;
        }
        match v.parent() {
            Some(p) => is_ancestor_ref(u, p),
            None => false,
        }
    }

    #[test]
    fn ancestor_examples() {
        assert!(NodeId::ROOT.is_ancestor(n("0110")));
        assert!(!n("0").is_ancestor(n("10")));
        assert!(n("01").is_ancestor(n("01")));
    }

    #[test]
    fn b_descendant_examples() {
        assert!(NodeId::ROOT.is_b_descendant(1, n("10")));
        assert!(n("1").is_b_descendant(0, n("10")));
        assert!(!n("10").is_b_descendant(0, n("10")));
        assert!(!n("10").is_b_descendant(1, n("10")));
    }

    #[test]
    fn path_to_example() {
        assert_eq!(n("10").path_to(), vec![NodeId::ROOT, n("1"), n("10")]);
        assert_eq!(NodeId::ROOT.path_to(), vec![NodeId::ROOT]);
    }

    #[test]
    fn child_and_overflow() {
        let t = Tree::new(2).unwrap();
        assert_eq!(t.child(n("1"), 0).unwrap(), n("10"));
        assert_eq!(t.child(NodeId::ROOT, 1).unwrap(), n("1"));
        assert!(matches!(t.child(n("10"), 1), Err(Error::DepthOverflow { .. })));
        assert!(Tree::new(63).is_err());
    }

    #[test]
    fn ancestor_matches_reference_and_is_partial_order() {
        let t = Tree::new(5).unwrap();
        let nodes: Vec<NodeId> = t.bfs_nodes().collect();
        assert_eq!(nodes.len(), 63);
        for &u in &nodes {
            assert!(u.is_ancestor(u));
            for &v in &nodes {
                assert_eq!(u.is_ancestor(v), is_ancestor_ref(u, v));
                if u.is_ancestor(v) && v.is_ancestor(u) {
                    assert_eq!(u, v);
                }
            }
        }
        for &u in &nodes {
            for &v in &nodes {
                if !u.is_ancestor(v) {
                    continue;
                }
                for &w in &nodes {
                    if v.is_ancestor(w) {
                        assert!(u.is_ancestor(w));
                    }
                }
            }
        }
    }

    #[test]
    fn b_descendants_partition_strict_descendants() {
        let t = Tree::new(5).unwrap();
        let nodes: Vec<NodeId> = t.bfs_nodes().collect();
        for &u in &nodes {
            for &v in &nodes {
                let strict = u.is_ancestor(v) && u != v;
                let d0 = u.is_b_descendant(0, v);
                let d1 = u.is_b_descendant(1, v);
                assert!(!(d0 && d1));
                assert_eq!(strict, d0 || d1);
            }
        }
    }

    #[test]
    fn bfs_index_roundtrip_and_heap_order() {
        let t = Tree::new(4).unwrap();
        for (i, u) in t.bfs_nodes().enumerate() {
            assert_eq!(u.bfs_index(), i as u64);
            assert_eq!(NodeId::from_bfs_index(i as u64), u);
            if let Some(p) = u.parent() {
                assert_eq!(u.bfs_index(), 2 * p.bfs_index() + 1 + u.last_bit().unwrap() as u64);
            }
        }
        assert_eq!(n("10").bfs_index(), 5);
    }

    #[test]
    fn parse_display_roundtrip() {
        for s in ["", "0", "1", "10", "0110", "111111"] {
            assert_eq!(n(s).to_string(), s);
        }
        assert!("2x".parse::<NodeId>().is_err());
        assert_eq!(n(""), NodeId::ROOT);
    }

    #[test]
    fn serde_as_bitstring() {
        let v = vec![NodeId::ROOT, n("01")];
        let js = serde_json::to_string(&v).unwrap();
        assert_eq!(js, r#"["","01"]"#);
        let back: Vec<NodeId> = serde_json::from_str(&js).unwrap();
        assert_eq!(back, v);
    }
}
