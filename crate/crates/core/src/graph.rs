//! Registration graphs over the collapsed registration-student-registration
//! metapath.
//!
//! Student attributes are appended to the feature rows of that student's
//! registrations, so only registration nodes remain. Every node carries a
//! self-loop, and every ordered pair of registrations that share a student
//! inside the same split is joined by a directed edge.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::encode::{FeatureCase, SnapshotDataset};
use crate::error::Result;
use crate::matrix::Matrix;

pub const REGISTRATION: &str = "R";
pub const RSR: &str = "R-S-R";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Validation,
}

/// Directed edges sorted by `(dst, src)`, with CSR offsets over destinations
/// so each node's in-edges are contiguous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeIndex {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub offsets: Vec<usize>,
}

impl EdgeIndex {
    /// Builds the index; duplicate pairs are removed.
    pub fn new(n_nodes: usize, mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable_by_key(|&(s, d)| (d, s));
        pairs.dedup();
        let mut offsets = vec![0; n_nodes + 1];
        for &(s, d) in &pairs {
            assert!(s < n_nodes && d < n_nodes, "edge ({s}, {d}) out of range for {n_nodes} nodes");
            offsets[d + 1] += 1;
        }
        for i in 0..n_nodes {
            offsets[i + 1] += offsets[i];
        }
        let (src, dst) = pairs.into_iter().unzip();
        Self { src, dst, offsets }
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn in_edges(&self, node: usize) -> std::ops::Range<usize> {
        self.offsets[node]..self.offsets[node + 1]
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n_nodes()];
        for &s in &self.src {
            d[s] += 1;
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub name: String,
    pub edges: EdgeIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeteroGraph {
    pub node_type: String,
    pub features: Matrix,
    pub feature_names: Vec<String>,
    pub labels: Vec<u8>,
    pub relations: Vec<Relation>,
    pub registration_ids: Vec<u32>,
    pub split: Split,
    pub case: FeatureCase,
    pub day: u32,
}

impl HeteroGraph {
    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn node_of(&self, registration_id: u32) -> Option<usize> {
        self.registration_ids.iter().position(|&r| r == registration_id)
    }

    /// Edges of the (single) metapath relation.
    pub fn edges(&self) -> &EdgeIndex {
        &self.relations[0].edges
    }

    /// Replaces the feature matrix, e.g. after standardization.
    pub fn with_features(mut self, features: Matrix) -> Self {
        assert_eq!(features.shape(), self.features.shape());
        self.features = features;
        self
    }
}

/// Builds the graph for the given dataset rows (one side of a fold split).
pub fn build_graph(ds: &SnapshotDataset, rows: &[usize], case: FeatureCase, split: Split) -> HeteroGraph {
    let cols = ds.case_columns(case);
    let features = ds.features.select_rows(rows).select_cols(&cols);
    let n = rows.len();
    let mut by_student: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (node, &row) in rows.iter().enumerate() {
        by_student.entry(ds.student_ids[row]).or_default().push(node);
    }
    let mut pairs: Vec<(usize, usize)> = (0..n).map(|v| (v, v)).collect();
    for siblings in by_student.values() {
        for &u in siblings {
            for &v in siblings {
                if u != v {
                    pairs.push((u, v));
                }
            }
        }
    }
    HeteroGraph {
        node_type: REGISTRATION.to_string(),
        features,
        feature_names: cols.iter().map(|&c| ds.column_names[c].clone()).collect(),
        labels: rows.iter().map(|&r| ds.labels[r]).collect(),
        relations: vec![Relation { name: RSR.to_string(), edges: EdgeIndex::new(n, pairs) }],
        registration_ids: rows.iter().map(|&r| ds.registration_ids[r]).collect(),
        split,
        case,
        day: ds.day,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub node_count: usize,
    pub edge_count: usize,
    /// Directed edges per node.
    pub avg_degree: f64,
    pub max_degree: usize,
    pub modal_degree: usize,
    /// Out-degree -> node count.
    pub degree_histogram: BTreeMap<usize, usize>,
}

pub fn graph_stats(g: &HeteroGraph) -> GraphStats {
    let edges: usize = g.relations.iter().map(|r| r.edges.len()).sum();
    let mut degree = vec![0usize; g.n_nodes()];
    for r in &g.relations {
        for (d, x) in degree.iter_mut().zip(r.edges.out_degrees()) {
            *d += x;
        }
    }
    let mut hist = BTreeMap::new();
    for &d in &degree {
        *hist.entry(d).or_insert(0) += 1;
    }
    let modal_degree = hist.iter().max_by_key(|&(d, c)| (*c, std::cmp::Reverse(*d))).map_or(0, |(d, _)| *d);
    GraphStats {
        node_count: g.n_nodes(),
        edge_count: edges,
        avg_degree: if g.n_nodes() == 0 { 0.0 } else { edges as f64 / g.n_nodes() as f64 },
        max_degree: degree.iter().copied().max().unwrap_or(0),
        modal_degree,
        degree_histogram: hist,
    }
}

/// `src,dst` per line, in registration ids.
pub fn write_edge_list<W: Write>(g: &HeteroGraph, mut out: W) -> Result<()> {
    writeln!(out, "src,dst")?;
    for r in &g.relations {
        for (&s, &d) in r.edges.src.iter().zip(&r.edges.dst) {
            writeln!(out, "{},{}", g.registration_ids[s], g.registration_ids[d])?;
        }
    }
    Ok(())
}

pub fn write_node_features<W: Write>(g: &HeteroGraph, mut out: W) -> Result<()> {
    writeln!(out, "registration_id,{},label", g.feature_names.join(","))?;
    for i in 0..g.n_nodes() {
        let vals: Vec<String> = g.features.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{},{},{}", g.registration_ids[i], vals.join(","), g.labels[i])?;
    }
    Ok(())
}

/// Node index by registration id.
pub fn node_lookup(g: &HeteroGraph) -> HashMap<u32, usize> {
    g.registration_ids.iter().enumerate().map(|(i, &r)| (r, i)).collect()
}
