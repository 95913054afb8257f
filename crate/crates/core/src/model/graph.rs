//! Anticipation/parameterization graph of a multilevel instance.
//!
//! One node per level plus one adversary node per (protected level,
//! constraint) pair. An `Anticipate` arc means the source's problem
//! anticipates the destination's decision; a `Param` arc means the two are
//! linked by a parameterization. Arc layout for the bilevel, intermediate
//! deviation and generalized (every upper level protected) configurations
//! reproduces the standard diagrams for those problems.

use std::fmt::Write as _;

use serde::Serialize;

use super::{MultilevelInstance, ProtectionMode};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NodeKind {
    Level {
        level: usize,
    },
    Adversary {
        level: usize,
        /// `None` for the objective adversary.
        constraint: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GraphNode {
    pub id: String,
    pub label: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ArcKind {
    Anticipate,
    Param,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct GraphArc {
    pub from: usize,
    pub to: usize,
    pub kind: ArcKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Graph {
    pub nodes: Vec<GraphNode>,
    pub arcs: Vec<GraphArc>,
}

impl Graph {
    pub fn node_index(&self, label: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.label == label)
    }

    /// Arcs as `(from label, to label, kind)` triples, sorted.
    pub fn labelled_arcs(&self) -> Vec<(String, String, ArcKind)> {
        let mut out: Vec<_> = self
            .arcs
            .iter()
            .map(|a| {
                (
                    self.nodes[a.from].label.clone(),
                    self.nodes[a.to].label.clone(),
                    a.kind,
                )
            })
            .collect();
        out.sort();
        out
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph anticipation {\n");
        for n in &self.nodes {
            let shape = match n.kind {
                NodeKind::Level { .. } => "circle",
                NodeKind::Adversary { .. } => "doublecircle",
            };
            let _ = writeln!(s, "  {} [label=\"{}\", shape={}];", n.id, n.label, shape);
        }
        for a in &self.arcs {
            let (style, label) = match a.kind {
                ArcKind::Anticipate => ("solid", "anticipate"),
                ArcKind::Param => ("dashed", "param"),
            };
            let _ = writeln!(
                s,
                "  {} -> {} [style={}, label=\"{}\"];",
                self.nodes[a.from].id, self.nodes[a.to].id, style, label
            );
        }
        s.push_str("}\n");
        s
    }
}

fn level_labels(instance: &MultilevelInstance) -> Vec<String> {
    let n = instance.level_count();
    let generalized = instance
        .nos()
        .is_some_and(|nos| nos.protected_levels.len() > 1);
    (0..n)
        .map(|i| {
            if n == 1 {
                "U".to_string()
            } else if generalized {
                if i + 1 == n {
                    "L".to_string()
                } else {
                    format!("U{}", i + 1)
                }
            } else if i == 0 {
                "U".to_string()
            } else if n == 2 {
                "L".to_string()
            } else {
                format!("L{i}")
            }
        })
        .collect()
}

pub fn anticipation_graph(instance: &MultilevelInstance) -> Graph {
    let n = instance.level_count();
    let mut nodes: Vec<GraphNode> = level_labels(instance)
        .into_iter()
        .enumerate()
        .map(|(i, label)| GraphNode {
            id: format!("level{i}"),
            label,
            kind: NodeKind::Level { level: i },
        })
        .collect();
    let mut arcs = Vec::new();

    let nos = instance.nos();
    let deviating = nos.map(|n| n.deviating_level);
    let protects = |i: usize| nos.is_some_and(|n| n.protected_levels.contains(&i));

    for i in 0..n {
        for j in i + 1..n {
            let through_adversary = Some(j) == deviating && j != i + 1 && protects(i);
            if !through_adversary {
                arcs.push(GraphArc {
                    from: i,
                    to: j,
                    kind: ArcKind::Anticipate,
                });
            }
            arcs.push(GraphArc {
                from: i,
                to: j,
                kind: ArcKind::Param,
            });
        }
    }

    let Some(nos) = nos else {
        return Graph { nodes, arcs };
    };

    let mut adversaries: Vec<(usize, Option<(usize, String)>)> = Vec::new();
    for &p in &nos.protected_levels {
        if p >= n {
            continue;
        }
        for (k, c) in instance.levels[p].constraints.iter().enumerate() {
            adversaries.push((p, Some((k, c.name.clone()))));
        }
        if p == 0 && nos.mode == ProtectionMode::ConstraintsAndObjective {
            adversaries.push((p, None));
        }
    }
    let single_per_level = nos.protected_levels.iter().all(|p| {
        adversaries.iter().filter(|(q, _)| q == p).count() <= 1
    });
    let total = adversaries.len();
    for (p, which) in adversaries {
        let label = if total == 1 {
            "A".to_string()
        } else if single_per_level {
            format!("A{}", p + 1)
        } else {
            match &which {
                Some((k, _)) => format!("A{}.{}", p + 1, k + 1),
                None => format!("A{}.obj", p + 1),
            }
        };
        let id = match &which {
            Some((k, _)) => format!("adv{p}_{k}"),
            None => format!("adv{p}_obj"),
        };
        let idx = nodes.len();
        nodes.push(GraphNode {
            id,
            label,
            kind: NodeKind::Adversary {
                level: p,
                constraint: which.map(|(_, name)| name),
            },
        });
        for i in 0..=nos.deviating_level.min(n - 1) {
            arcs.push(GraphArc {
                from: i,
                to: idx,
                kind: ArcKind::Anticipate,
            });
        }
        arcs.push(GraphArc {
            from: p,
            to: idx,
            kind: ArcKind::Param,
        });
    }

    Graph { nodes, arcs }
}
