//! Access dependence graph: one node per static array-access expression per
//! statement, edges labelled with dependence directions.
//!
//! Statements are canonicalized (`lhs op= rhs` becomes `lhs = lhs op rhs`)
//! before nodes are created, so an accumulate statement contributes a read
//! node for the old value of its destination. Labels:
//!
//! - `=`  read -> write of the same statement, disjoint locations (data flow)
//! - `<=` read -> write of the same statement, overlapping locations (anti)
//! - `<`  write -> read (flow) and write -> write (output) over overlapping
//!   locations, in instance order; `>` never occurs.

use crate::error::{Error, Result};
use crate::kernel::{ArrayRef, Kernel, Name};
use std::collections::{BTreeMap, HashMap};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
}

/// Position of a reference inside its statement: the destination, the k-th
/// leaf of the canonical rhs, or the guard.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Lhs,
    Leaf(usize),
    Guard,
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Lhs => write!(f, "lhs"),
            Slot::Leaf(k) => write!(f, "rhs{k}"),
            Slot::Guard => write!(f, "guard"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AccessNode {
    pub id: usize,
    pub kind: AccessKind,
    pub stmt: Name,
    pub aref: ArrayRef,
    pub slot: Slot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EdgeLabel {
    /// Data flow between disjoint locations within one statement instance.
    Eq,
    /// Anti dependence: read happens no later than the overlapping write.
    Leq,
    /// Flow or output dependence: target executes strictly later.
    Lt,
}

impl fmt::Display for EdgeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeLabel::Eq => write!(f, "="),
            EdgeLabel::Leq => write!(f, "<="),
            EdgeLabel::Lt => write!(f, "<"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdgEdge {
    pub src: usize,
    pub dst: usize,
    pub label: EdgeLabel,
}

#[derive(Debug, Clone, Default)]
pub struct Adg {
    pub nodes: Vec<AccessNode>,
    pub edges: Vec<AdgEdge>,
    succ: Vec<Vec<usize>>,
    pred: Vec<Vec<usize>>,
    write_of: BTreeMap<Name, usize>,
    leaves_of: BTreeMap<Name, Vec<usize>>,
    guard_of: BTreeMap<Name, usize>,
}

impl Adg {
    pub fn successors(&self, n: usize) -> &[usize] {
        &self.succ[n]
    }

    pub fn predecessors(&self, n: usize) -> &[usize] {
        &self.pred[n]
    }

    pub fn write_node(&self, stmt: &str) -> Option<usize> {
        self.write_of.get(stmt).copied()
    }

    /// Read nodes of the canonical rhs leaves, in leaf order.
    pub fn leaf_nodes(&self, stmt: &str) -> &[usize] {
        self.leaves_of
            .get(stmt)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn guard_node(&self, stmt: &str) -> Option<usize> {
        self.guard_of.get(stmt).copied()
    }

    pub fn node_label(&self, n: usize) -> String {
        let node = &self.nodes[n];
        let kind = match node.kind {
            AccessKind::Read => "r",
            AccessKind::Write => "w",
        };
        format!("{kind}_{}[{}:{}]", node.aref, node.stmt, node.slot)
    }

    /// Graphviz-compatible dump, one node and one edge per line.
    pub fn to_graphviz(&self) -> String {
        let mut out = String::from("digraph adg {\n");
        for n in &self.nodes {
            out.push_str(&format!(
                "  n{} [label=\"{}\"];\n",
                n.id,
                self.node_label(n.id)
            ));
        }
        for e in &self.edges {
            out.push_str(&format!(
                "  n{} -> n{} [label=\"{}\"];\n",
                e.src, e.dst, e.label
            ));
        }
        out.push_str("}\n");
        out
    }

    /// Reverse postorder over the deterministic node numbering.
    pub fn reverse_postorder(&self) -> Vec<usize> {
        let n = self.nodes.len();
        let mut visited = vec![false; n];
        let mut post = Vec::with_capacity(n);
        fn dfs(v: usize, succ: &[Vec<usize>], visited: &mut [bool], post: &mut Vec<usize>) {
            visited[v] = true;
            for &s in &succ[v] {
                if !visited[s] {
                    dfs(s, succ, visited, post);
                }
            }
            post.push(v);
        }
        for v in 0..n {
            if !visited[v] {
                dfs(v, &self.succ, &mut visited, &mut post);
            }
        }
        post.reverse();
        post
    }

    /// Graph depth `d(G)`: the maximum number of retreating edges (with
    /// respect to the reverse postorder) on any acyclic path. Exact; the
    /// search memoizes on (node, visited set) and is meant for the small
    /// graphs access-level modelling produces.
    pub fn depth(&self) -> Result<usize> {
        let n = self.nodes.len();
        if n == 0 {
            return Ok(0);
        }
        if n > 32 {
            return Err(Error::Analysis(format!(
                "ADG with {n} nodes is too large for exact depth computation"
            )));
        }
        let rpo = self.reverse_postorder();
        let mut rpo_index = vec![0usize; n];
        for (i, v) in rpo.iter().enumerate() {
            rpo_index[*v] = i;
        }

        struct Search<'a> {
            succ: &'a [Vec<usize>],
            rpo_index: &'a [usize],
            memo: HashMap<(usize, u32), usize>,
        }
        impl Search<'_> {
            fn best_from(&mut self, v: usize, visited: u32) -> usize {
                if let Some(&b) = self.memo.get(&(v, visited)) {
                    return b;
                }
                let mut best = 0;
                for &s in &self.succ[v] {
                    if visited & (1 << s) != 0 {
                        continue;
                    }
                    let w = usize::from(self.rpo_index[s] <= self.rpo_index[v]);
                    let sub = self.best_from(s, visited | (1 << s));
                    best = best.max(w + sub);
                }
                self.memo.insert((v, visited), best);
                best
            }
        }
        let mut search = Search {
            succ: &self.succ,
            rpo_index: &rpo_index,
            memo: HashMap::new(),
        };
        let mut best = 0;
        for v in 0..n {
            best = best.max(search.best_from(v, 1 << v));
        }
        Ok(best)
    }
}

/// Two references to the same array may overlap unless some dimension has
/// subscripts that provably differ by a nonzero constant.
pub fn refs_may_overlap(a: &ArrayRef, b: &ArrayRef) -> bool {
    if a.array != b.array {
        return false;
    }
    for (sa, sb) in a.subscripts.iter().zip(&b.subscripts) {
        if let Ok(diff) = sa.sub(sb) {
            if diff.is_constant() && diff.constant_part() != 0 {
                return false;
            }
        }
    }
    true
}

/// Builds the access dependence graph of a validated kernel.
pub fn build_adg(kernel: &Kernel) -> Adg {
    let mut adg = Adg::default();
    // per-statement nodes
    for ctx in kernel.statement_contexts() {
        let s = ctx.stmt;
        let mut leaf_ids = Vec::new();
        for (k, leaf) in s.canonical_leaves().into_iter().enumerate() {
            let id = adg.nodes.len();
            adg.nodes.push(AccessNode {
                id,
                kind: AccessKind::Read,
                stmt: s.id.clone(),
                aref: leaf,
                slot: Slot::Leaf(k),
            });
            leaf_ids.push(id);
        }
        if let Some(g) = &s.guard {
            let id = adg.nodes.len();
            adg.nodes.push(AccessNode {
                id,
                kind: AccessKind::Read,
                stmt: s.id.clone(),
                aref: g.clone(),
                slot: Slot::Guard,
            });
            adg.guard_of.insert(s.id.clone(), id);
        }
        let wid = adg.nodes.len();
        adg.nodes.push(AccessNode {
            id: wid,
            kind: AccessKind::Write,
            stmt: s.id.clone(),
            aref: s.lhs.clone(),
            slot: Slot::Lhs,
        });
        adg.write_of.insert(s.id.clone(), wid);
        adg.leaves_of.insert(s.id.clone(), leaf_ids);
    }

    // intra-statement read -> write edges
    let mut edges = Vec::new();
    for (stmt, &wid) in &adg.write_of {
        let write_ref = adg.nodes[wid].aref.clone();
        let mut reads: Vec<usize> = adg.leaves_of[stmt].clone();
        if let Some(&g) = adg.guard_of.get(stmt) {
            reads.push(g);
        }
        for rid in reads {
            let label = if adg.nodes[rid].aref.array != write_ref.array {
                EdgeLabel::Eq
            } else if refs_may_overlap(&adg.nodes[rid].aref, &write_ref) {
                EdgeLabel::Leq
            } else {
                EdgeLabel::Eq
            };
            edges.push(AdgEdge {
                src: rid,
                dst: wid,
                label,
            });
        }
    }

    // flow (write -> read) and output (write -> write) edges over overlaps
    let node_count = adg.nodes.len();
    for w in 0..node_count {
        if adg.nodes[w].kind != AccessKind::Write {
            continue;
        }
        for other in 0..node_count {
            if other == w {
                continue;
            }
            if !refs_may_overlap(&adg.nodes[w].aref, &adg.nodes[other].aref) {
                continue;
            }
            edges.push(AdgEdge {
                src: w,
                dst: other,
                label: EdgeLabel::Lt,
            });
        }
    }

    adg.succ = vec![Vec::new(); node_count];
    adg.pred = vec![Vec::new(); node_count];
    for e in &edges {
        adg.succ[e.src].push(e.dst);
        adg.pred[e.dst].push(e.src);
    }
    for v in adg.succ.iter_mut().chain(adg.pred.iter_mut()) {
        v.sort_unstable();
        v.dedup();
    }
    adg.edges = edges;
    adg
}
