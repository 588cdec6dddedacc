//! Skeleton graph and its symmetrically normalized adjacency.

use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// Vertex 0 is the synthesized mid-shoulder; 1..=13 follow [`JOINT_NAMES`](super::JOINT_NAMES).
pub const BODY_VERTICES: usize = 14;

pub const BODY_EDGES: [(usize, usize); 13] = [
    (0, 1),
    (0, 2),
    (0, 3),
    (0, 8),
    (0, 9),
    (2, 4),
    (3, 5),
    (4, 6),
    (5, 7),
    (8, 10),
    (9, 11),
    (10, 12),
    (11, 13),
];

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
///
/// Edges are undirected; self-loops are added here and rejected in the input,
/// as are duplicates in either direction.
pub fn build_normalized_adjacency(edges: &[(usize, usize)], vertices: usize) -> Result<Tensor> {
    if vertices == 0 {
        return Err(Error::Graph("graph has no vertices".into()));
    }
    let mut adj = vec![vec![false; vertices]; vertices];
    for &(a, b) in edges {
        if a >= vertices || b >= vertices {
            return Err(Error::Graph(format!(
                "edge {a}-{b} outside {vertices} vertices"
            )));
        }
        if a == b {
            return Err(Error::Graph(format!(
                "self-loop on vertex {a} in edge list"
            )));
        }
        if adj[a][b] {
            return Err(Error::Graph(format!("duplicate edge {a}-{b}")));
        }
        adj[a][b] = true;
        adj[b][a] = true;
    }
    let degree: Vec<f64> = adj
        .iter()
        .map(|row| (row.iter().filter(|&&e| e).count() + 1) as f64)
        .collect();
    let mut a_hat = Tensor::zeros(&[vertices, vertices]);
    for i in 0..vertices {
        for j in 0..vertices {
            if i == j || adj[i][j] {
                a_hat.set(i, j, 1.0 / (degree[i] * degree[j]).sqrt());
            }
        }
    }
    Ok(a_hat)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BodyGraph {
    edges: Vec<(usize, usize)>,
    vertices: usize,
    a_hat: Tensor,
}

impl BodyGraph {
    pub fn new(edges: Vec<(usize, usize)>, vertices: usize) -> Result<Self> {
        let a_hat = build_normalized_adjacency(&edges, vertices)?;
        Ok(BodyGraph {
            edges,
            vertices,
            a_hat,
        })
    }

    /// The 14-vertex, 13-edge dancer skeleton.
    pub fn body() -> Self {
        BodyGraph::new(BODY_EDGES.to_vec(), BODY_VERTICES).expect("static body graph is valid")
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn vertices(&self) -> usize {
        self.vertices
    }

    pub fn normalized_adjacency(&self) -> &Tensor {
        &self.a_hat
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.vertices];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(a, b) in &self.edges {
                let next = if a == v {
                    b
                } else if b == v {
                    a
                } else {
                    continue;
                };
                if !seen[next] {
                    seen[next] = true;
                    stack.push(next);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}
