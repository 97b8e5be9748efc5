//! Email contact graph with the minimum-exchanged-messages retention rule.

use std::collections::{BTreeMap, BTreeSet};

/// Undirected contact graph. Edges carry the summed exchanged-message count
/// and are retained only when that sum reaches the threshold.
#[derive(Debug, Clone, Default)]
pub struct EmailGraph {
    adjacency: BTreeMap<String, Vec<String>>,
    edge_counts: BTreeMap<(String, String), u64>,
    min_messages: u64,
    dropped_self_loops: usize,
}

impl EmailGraph {
    pub fn edge_count(&self) -> usize {
        self.edge_counts.len()
    }

    pub fn min_messages(&self) -> u64 {
        self.min_messages
    }

    pub fn dropped_self_loops(&self) -> usize {
        self.dropped_self_loops
    }

    pub fn contains_edge(&self, a: &str, b: &str) -> bool {
        self.edge_counts.contains_key(&ordered_pair(a, b))
    }

    pub fn exchanged_count(&self, a: &str, b: &str) -> Option<u64> {
        self.edge_counts.get(&ordered_pair(a, b)).copied()
    }

    /// Retained undirected edges with their exchanged-message counts,
    /// in deterministic order.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, u64)> {
        self.edge_counts
            .iter()
            .map(|((a, b), &n)| (a.as_str(), b.as_str(), n))
    }

    /// 1st-level contacts: direct neighbors, sorted.
    pub fn first_level(&self, user: &str) -> &[String] {
        self.adjacency.get(user).map(Vec::as_slice).unwrap_or(&[])
    }

    /// 2nd-level contacts: users at breadth-first distance exactly 2.
    pub fn second_level(&self, user: &str) -> BTreeSet<String> {
        let first: BTreeSet<&String> = self.first_level(user).iter().collect();
        let mut second = BTreeSet::new();
        for contact in &first {
            for next in self.first_level(contact) {
                if next != user && !first.contains(next) {
                    second.insert(next.clone());
                }
            }
        }
        second
    }
}

fn ordered_pair(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Sums directed message counts per unordered pair and retains pairs whose
/// sum reaches `min_messages`. Self-loops are dropped and counted.
pub fn build_graph(edge_list: &[(String, String, u64)], min_messages: u64) -> EmailGraph {
    let mut sums: BTreeMap<(String, String), u64> = BTreeMap::new();
    let mut dropped_self_loops = 0;
    for (src, dst, count) in edge_list {
        if src == dst {
            dropped_self_loops += 1;
            continue;
        }
        *sums.entry(ordered_pair(src, dst)).or_insert(0) += count;
    }
    sums.retain(|_, &mut n| n >= min_messages);

    let mut adjacency: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (a, b) in sums.keys() {
        adjacency.entry(a.clone()).or_default().push(b.clone());
        adjacency.entry(b.clone()).or_default().push(a.clone());
    }
    for neighbors in adjacency.values_mut() {
        neighbors.sort();
    }

    EmailGraph {
        adjacency,
        edge_counts: sums,
        min_messages,
        dropped_self_loops,
    }
}
