//! Import of citation datasets distributed as a `.content` / `.cites` pair.
//!
//! A content line is `paper_id w_1 ... w_D class_name`, tab or space
//! separated, with binary word indicators. A cites line is
//! `cited_id citing_id`. Nodes are numbered in content order and classes
//! in sorted name order. Citations are stored undirected; self-citations
//! and citations of papers missing from the content file are dropped.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::graph::{FeatureSource, FeatureTable, Graph, LabelTable, NodeId};

#[derive(Debug, Clone)]
pub struct CitationDataset {
    pub graph: Graph,
    pub features: FeatureTable,
    pub labels: LabelTable,
    /// Original paper id of each node.
    pub node_names: Vec<String>,
    /// Class name of each class id.
    pub class_names: Vec<String>,
    /// Citations dropped because an endpoint is unknown or both are equal.
    pub dropped_citations: usize,
}

pub fn load_citation_dataset<C: BufRead, E: BufRead>(content: C, cites: E) -> Result<CitationDataset> {
    let mut node_names = Vec::new();
    let mut index: HashMap<String, NodeId> = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut dim: Option<usize> = None;
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() < 2 {
            return Err(Error::parse(line_no, "expected an id and a class"));
        }
        let d = toks.len() - 2;
        if *dim.get_or_insert(d) != d {
            return Err(Error::parse(line_no, format!("{d} features, expected {}", dim.unwrap())));
        }
        let row = toks[1..toks.len() - 1]
            .iter()
            .map(|t| t.parse::<f64>().map_err(|_| Error::parse(line_no, format!("bad value {t:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        let name = toks[0].to_string();
        if index.insert(name.clone(), node_names.len() as NodeId).is_some() {
            return Err(Error::parse(line_no, format!("duplicate paper id {name}")));
        }
        node_names.push(name);
        rows.push(row);
        raw_labels.push(toks[toks.len() - 1].to_string());
    }
    let class_names: Vec<String> = raw_labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let class_of: HashMap<&str, u32> =
        class_names.iter().enumerate().map(|(i, c)| (c.as_str(), i as u32)).collect();
    let labels = LabelTable::new(
        class_names.len(),
        raw_labels.iter().enumerate().map(|(v, c)| (v as NodeId, vec![class_of[c.as_str()]])).collect(),
    )?;

    let mut edges = Vec::new();
    let mut dropped_citations = 0;
    for (idx, line) in cites.lines().enumerate() {
        let line = line?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let [a, b] = toks[..] else {
            return Err(Error::parse(idx + 1, "expected two paper ids"));
        };
        match (index.get(a), index.get(b)) {
            (Some(&u), Some(&v)) if u != v => edges.push((u, v)),
            _ => dropped_citations += 1,
        }
    }
    let graph = Graph::from_edges(node_names.len(), &edges)?;
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    let features = FeatureTable::from_rows(dim.unwrap_or(0), data, FeatureSource::GivenFixed)?;
    Ok(CitationDataset { graph, features, labels, node_names, class_names, dropped_citations })
}

/// Writes nonzero entries as `node index value` triplets.
pub fn write_features<W: Write>(features: &FeatureTable, mut out: W) -> Result<()> {
    for v in 0..features.num_rows() {
        for (c, &x) in features.row(v as NodeId).iter().enumerate() {
            if x != 0.0 {
                writeln!(out, "{v} {c} {x}")?;
            }
        }
    }
    Ok(())
}

/// Writes `node l1,l2,...` lines for labeled nodes.
pub fn write_labels<W: Write>(labels: &LabelTable, mut out: W) -> Result<()> {
    for v in labels.labeled_nodes() {
        let ls: Vec<String> = labels.labels(v).iter().map(u32::to_string).collect();
        writeln!(out, "{v} {}", ls.join(","))?;
    }
    Ok(())
}

/// Writes `name<TAB>id` lines.
pub fn write_name_map<W: Write>(names: &[String], mut out: W) -> Result<()> {
    for (id, name) in names.iter().enumerate() {
        writeln!(out, "{name}\t{id}")?;
    }
    Ok(())
}
