//! Tree wire format (version 1). All integers little-endian.
//!
//! ```text
//! magic        4  b"FATR"
//! version      u16
//! body_len     u32   bytes that follow
//! n_features   u16
//! kinds        n_features × u8   (0 categorical, 1 numeric)
//! node_count   u32
//! nodes        node_count records, preorder
//!
//! node record:
//!   tag        u8    0 leaf, 1 threshold split, 2 multiway split
//!   negatives  u64
//!   positives  u64
//!   tag 1:     feature u16, threshold f64          children: 2
//!   tag 2:     feature u16, n u32, n × value u32  children: n + 1
//! ```
//!
//! Children follow their parent in branch order; the multiway default child
//! comes last. Leaf observers and unlabeled buffers are not transmitted.

use crate::datastream::FeatureKind;
use crate::error::{Error, Result};

use super::{LeafStats, Node, NodeId, SplitTest, TreeModel};

pub const TREE_MAGIC: &[u8; 4] = b"FATR";
pub const TREE_WIRE_VERSION: u16 = 1;

const TAG_LEAF: u8 = 0;
const TAG_THRESHOLD: u8 = 1;
const TAG_MULTIWAY: u8 = 2;
const HEADER_LEN: usize = 4 + 2 + 4;
const MAX_DEPTH: usize = 4096;

pub fn serialize_tree(tree: &TreeModel) -> Vec<u8> {
    let mut body = Vec::with_capacity(16 + tree.node_count() * 24);
    body.extend_from_slice(&(tree.kinds().len() as u16).to_le_bytes());
    for kind in tree.kinds() {
        body.push(match kind {
            FeatureKind::Categorical => 0,
            FeatureKind::Numeric => 1,
        });
    }
    body.extend_from_slice(&(tree.node_count() as u32).to_le_bytes());

    let mut stack: Vec<NodeId> = vec![0];
    while let Some(id) = stack.pop() {
        let node = &tree.nodes()[id];
        let counts = node.counts();
        match node {
            Node::Leaf(_) => body.push(TAG_LEAF),
            Node::Split { test, .. } => body.push(match test {
                SplitTest::Threshold { .. } => TAG_THRESHOLD,
                SplitTest::Multiway { .. } => TAG_MULTIWAY,
            }),
        }
        body.extend_from_slice(&counts[0].to_le_bytes());
        body.extend_from_slice(&counts[1].to_le_bytes());
        if let Node::Split { test, children, .. } = node {
            match test {
                SplitTest::Threshold { feature, threshold } => {
                    body.extend_from_slice(&(*feature as u16).to_le_bytes());
                    body.extend_from_slice(&threshold.to_le_bytes());
                }
                SplitTest::Multiway { feature, branches } => {
                    body.extend_from_slice(&(*feature as u16).to_le_bytes());
                    body.extend_from_slice(&(branches.len() as u32).to_le_bytes());
                    for value in branches {
                        body.extend_from_slice(&value.to_le_bytes());
                    }
                }
            }
            stack.extend(children.iter().rev());
        }
    }

    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(TREE_MAGIC);
    out.extend_from_slice(&TREE_WIRE_VERSION.to_le_bytes());
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(&body);
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.bytes.len())
            .ok_or_else(|| {
                Error::Decode(format!("truncated: need {n} bytes at offset {}", self.pos))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn deserialize_tree(bytes: &[u8]) -> Result<TreeModel> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != TREE_MAGIC {
        return Err(Error::Decode("bad tree magic".into()));
    }
    let version = cur.u16()?;
    if version != TREE_WIRE_VERSION {
        return Err(Error::Decode(format!("unsupported tree wire version {version}")));
    }
    let body_len = cur.u32()? as usize;
    if bytes.len() - HEADER_LEN != body_len {
        return Err(Error::Decode(format!(
            "body length {body_len} does not match {} available bytes",
            bytes.len() - HEADER_LEN
        )));
    }

    let n_features = cur.u16()? as usize;
    let kinds = (0..n_features)
        .map(|_| match cur.u8()? {
            0 => Ok(FeatureKind::Categorical),
            1 => Ok(FeatureKind::Numeric),
            other => Err(Error::Decode(format!("unknown feature kind {other}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let node_count = cur.u32()? as usize;
    // Each record is at least 17 bytes; reject counts the body cannot hold.
    if node_count == 0 || node_count > body_len / 17 {
        return Err(Error::Decode(format!("implausible node count {node_count}")));
    }

    let mut nodes: Vec<Node> = Vec::with_capacity(node_count);
    // (parent, child slot) awaiting the next record, plus the record's depth.
    let mut pending: Vec<(Option<(NodeId, usize)>, usize)> = vec![(None, 0)];
    while let Some((slot, depth)) = pending.pop() {
        if nodes.len() == node_count {
            return Err(Error::Decode("more nodes referenced than declared".into()));
        }
        if depth > MAX_DEPTH {
            return Err(Error::Decode("tree too deep".into()));
        }
        let id = nodes.len();
        let tag = cur.u8()?;
        let counts = [cur.u64()?, cur.u64()?];
        let node = match tag {
            TAG_LEAF => Node::Leaf(LeafStats::frozen(counts)),
            TAG_THRESHOLD | TAG_MULTIWAY => {
                let feature = cur.u16()? as usize;
                let expected = if tag == TAG_THRESHOLD {
                    FeatureKind::Numeric
                } else {
                    FeatureKind::Categorical
                };
                if kinds.get(feature) != Some(&expected) {
                    return Err(Error::Decode(format!(
                        "split on feature {feature} does not match its kind"
                    )));
                }
                let test = if tag == TAG_THRESHOLD {
                    SplitTest::Threshold {
                        feature,
                        threshold: cur.f64()?,
                    }
                } else {
                    let n = cur.u32()? as usize;
                    if n > body_len / 4 {
                        return Err(Error::Decode(format!("implausible branch count {n}")));
                    }
                    let branches = (0..n).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?;
                    if branches.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(Error::Decode("multiway branches not strictly increasing".into()));
                    }
                    SplitTest::Multiway { feature, branches }
                };
                let arity = test.arity();
                for slot in (0..arity).rev() {
                    pending.push((Some((id, slot)), depth + 1));
                }
                Node::Split {
                    prior: counts,
                    test,
                    children: vec![usize::MAX; arity],
                }
            }
            other => return Err(Error::Decode(format!("unknown node tag {other}"))),
        };
        nodes.push(node);
        if let Some((parent, child)) = slot {
            if let Node::Split { children, .. } = &mut nodes[parent] {
                children[child] = id;
            }
        }
    }
    if nodes.len() != node_count {
        return Err(Error::Decode(format!(
            "declared {node_count} nodes, decoded {}",
            nodes.len()
        )));
    }
    if cur.pos != bytes.len() {
        return Err(Error::Decode("trailing bytes after last node".into()));
    }
    Ok(TreeModel::from_parts(kinds, nodes))
}
