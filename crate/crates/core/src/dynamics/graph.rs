use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::MigrationMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strength {
    Dashed,
    Solid,
}

/// Edge cutoffs, both closed: an edge needs `f >= dashed`, a solid one `f >= solid`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub dashed: f64,
    pub solid: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            dashed: 0.40,
            solid: 0.70,
        }
    }
}

impl Thresholds {
    pub fn new(dashed: f64, solid: f64) -> Result<Self> {
        if !(dashed > 0.0 && dashed <= solid && solid <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < dashed <= solid <= 1, got {dashed} and {solid}"
            )));
        }
        Ok(Thresholds { dashed, solid })
    }

    pub fn classify(&self, fraction: f64) -> Option<Strength> {
        if fraction >= self.solid {
            Some(Strength::Solid)
        } else if fraction >= self.dashed {
            Some(Strength::Dashed)
        } else {
            None
        }
    }
}

/// Cluster sizes and display names of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochClusters {
    pub label: String,
    pub sizes: Vec<usize>,
    pub names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphNode {
    pub epoch: usize,
    pub cluster: usize,
    pub size: usize,
    pub label: String,
    /// No incoming edge (never set in the first epoch).
    pub born: bool,
    /// No outgoing edge (never set in the last epoch).
    pub dying: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphEdge {
    /// Epoch of the source cluster; the target lives in `epoch + 1`.
    pub epoch: usize,
    pub from: usize,
    pub to: usize,
    pub fraction: f64,
    pub strength: Strength,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MigrationGraph {
    pub epochs: Vec<String>,
    pub thresholds: Thresholds,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    pub migrations: Vec<MigrationMatrix>,
}

/// Link consecutive epochs wherever a migration fraction clears the dashed cutoff.
pub fn build_evolution_graph(
    epochs: &[EpochClusters],
    migrations: &[MigrationMatrix],
    thresholds: Thresholds,
) -> Result<MigrationGraph> {
    if epochs.is_empty() || migrations.len() + 1 != epochs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} epochs need {} migration matrices, got {}",
            epochs.len(),
            epochs.len().saturating_sub(1),
            migrations.len()
        )));
    }
    for (t, m) in migrations.iter().enumerate() {
        if m.k_from() != epochs[t].sizes.len() || m.k_to() != epochs[t + 1].sizes.len() {
            return Err(Error::DimensionMismatch {
                expected: epochs[t].sizes.len() * epochs[t + 1].sizes.len(),
                actual: m.k_from() * m.k_to(),
            });
        }
    }
    let mut edges = Vec::new();
    for (t, m) in migrations.iter().enumerate() {
        for (u, row) in m.fractions.iter().enumerate() {
            let Some(row) = row else { continue };
            for (v, &f) in row.iter().enumerate() {
                if let Some(strength) = thresholds.classify(f) {
                    edges.push(GraphEdge {
                        epoch: t,
                        from: u,
                        to: v,
                        fraction: f,
                        strength,
                    });
                }
            }
        }
    }
    let last = epochs.len() - 1;
    let mut nodes = Vec::new();
    for (t, e) in epochs.iter().enumerate() {
        for (i, &size) in e.sizes.iter().enumerate() {
            let incoming = edges.iter().any(|x| x.epoch + 1 == t && x.to == i);
            let outgoing = edges.iter().any(|x| x.epoch == t && x.from == i);
            nodes.push(GraphNode {
                epoch: t,
                cluster: i,
                size,
                label: e.names.get(i).cloned().unwrap_or_else(|| format!("c{i}")),
                born: t > 0 && !incoming,
                dying: t < last && !outgoing,
            });
        }
    }
    Ok(MigrationGraph {
        epochs: epochs.iter().map(|e| e.label.clone()).collect(),
        thresholds,
        nodes,
        edges,
        migrations: migrations.to_vec(),
    })
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

impl MigrationGraph {
    /// Edge list as `(epoch, from, to, strength)`, sorted.
    pub fn edge_set(&self) -> Vec<(usize, usize, usize, Strength)> {
        let mut out: Vec<_> = self.edges.iter().map(|e| (e.epoch, e.from, e.to, e.strength)).collect();
        out.sort();
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Graphviz rendering: one column per epoch, node width growing with size,
    /// dashed and solid edges labelled by fraction.
    pub fn to_dot(&self) -> String {
        let max = self.nodes.iter().map(|n| n.size).max().unwrap_or(1).max(1) as f64;
        let id = |t: usize, i: usize| format!("e{t}c{i}");
        let mut s = String::from("digraph evolution {\n  rankdir=LR;\n  node [shape=ellipse];\n");
        for (t, label) in self.epochs.iter().enumerate() {
            let _ = writeln!(s, "  subgraph cluster_{t} {{\n    label={};", quote(label));
            for n in self.nodes.iter().filter(|n| n.epoch == t) {
                let width = 0.4 + 1.6 * (n.size as f64 / max).sqrt();
                let mut style = String::new();
                if n.born {
                    style.push_str(", color=darkgreen");
                }
                if n.dying {
                    style.push_str(", peripheries=2");
                }
                // quoted label, then a DOT line break and the size
                let q = quote(&n.label);
                let _ = writeln!(
                    s,
                    "    {} [label={}\\n{}\", width={width:.3}{style}];",
                    id(t, n.cluster),
                    q.strip_suffix('"').expect("quoted"),
                    n.size
                );
            }
            s.push_str("  }\n");
        }
        for e in &self.edges {
            let style = match e.strength {
                Strength::Dashed => "dashed",
                Strength::Solid => "solid",
            };
            let _ = writeln!(
                s,
                "  {} -> {} [style={style}, label=\"{:.2}\"];",
                id(e.epoch, e.from),
                id(e.epoch + 1, e.to),
                e.fraction
            );
        }
        s.push_str("}\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::super::migration_matrix;
    use super::*;

    fn clusters(label: &str, sizes: &[usize]) -> EpochClusters {
        EpochClusters {
            label: label.into(),
            sizes: sizes.to_vec(),
            names: vec![],
        }
    }

    #[test]
    fn closed_thresholds() {
        let t = Thresholds::default();
        assert_eq!(t.classify(0.70), Some(Strength::Solid));
        assert_eq!(t.classify(0.40), Some(Strength::Dashed));
        assert_eq!(t.classify(0.39), None);
        assert!(Thresholds::new(0.8, 0.7).is_err());
        assert!(Thresholds::new(1.0, 1.0).is_ok());
    }

    #[test]
    fn weak_flow_is_invisible() {
        // 100 docs of cluster 0: 39 to v0, 61 to v1
        let labels = vec![0; 100];
        let projected: Vec<usize> = (0..100).map(|j| usize::from(j >= 39)).collect();
        let m = migration_matrix(&labels, 1, &projected, 2).unwrap();
        let g = build_evolution_graph(&[clusters("a", &[100]), clusters("b", &[39, 61])], &[m], Thresholds::default())
            .unwrap();
        assert_eq!(g.edge_set(), vec![(0, 0, 1, Strength::Dashed)]);
        assert!(g.nodes.iter().any(|n| n.epoch == 1 && n.cluster == 0 && n.born));
        assert!(g.to_dot().contains("e0c0 -> e1c1 [style=dashed, label=\"0.61\"]"));
    }

    #[test]
    fn persistent_chain() {
        let epochs: Vec<_> = (0..5).map(|t| clusters(&format!("t{t}"), &[10, 10])).collect();
        let m = migration_matrix(&[0; 10], 2, &[1; 10], 2).unwrap();
        let g = build_evolution_graph(&epochs, &vec![m; 4], Thresholds::default()).unwrap();
        assert_eq!(g.edges.len(), 4);
        assert!(g.edges.iter().all(|e| e.from == 0 && e.to == 1 && e.strength == Strength::Solid));
        let dying: Vec<_> = g.nodes.iter().filter(|n| n.dying).map(|n| (n.epoch, n.cluster)).collect();
        assert_eq!(dying, vec![(0, 1), (1, 1), (2, 1), (3, 1)]);
        assert!(g.nodes.iter().any(|n| n.epoch == 1 && n.cluster == 0 && n.born));
        assert!(!g.nodes.iter().any(|n| n.epoch == 4 && n.dying));
    }

    #[test]
    fn relabelling_gives_isomorphic_edges() {
        let labels = [0, 0, 0, 1, 1, 2, 2, 2, 2];
        let proj = [1, 1, 0, 0, 0, 2, 2, 2, 1];
        let a = migration_matrix(&labels, 3, &proj, 3).unwrap();
        let perm = [2, 0, 1];
        let l2: Vec<usize> = labels.iter().map(|&u| perm[u]).collect();
        let p2: Vec<usize> = proj.iter().map(|&v| perm[v]).collect();
        let b = migration_matrix(&l2, 3, &p2, 3).unwrap();
        let e = [clusters("x", &[3, 2, 4]), clusters("y", &[3, 3, 3])];
        let ga = build_evolution_graph(&e, &[a], Thresholds::default()).unwrap();
        let gb = build_evolution_graph(&e, &[b], Thresholds::default()).unwrap();
        let mapped: Vec<_> = {
            let mut v: Vec<_> = ga.edge_set().into_iter().map(|(t, u, w, s)| (t, perm[u], perm[w], s)).collect();
            v.sort();
            v
        };
        assert_eq!(mapped, gb.edge_set());
    }
}
