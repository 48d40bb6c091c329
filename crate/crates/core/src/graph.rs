use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Binary adjacency of an undirected graph on `p` nodes, diagonal included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEstimate {
    p: usize,
    adjacency: Vec<bool>,
    pub t: f64,
    pub u: f64,
}

impl GraphEstimate {
    pub fn from_fn(p: usize, t: f64, u: f64, mut edge: impl FnMut(usize, usize) -> bool) -> Self {
        let mut adjacency = vec![false; p * p];
        for j in 0..p {
            for k in 0..p {
                adjacency[j * p + k] = edge(j, k);
            }
        }
        Self { p, adjacency, t, u }
    }

    /// Thresholds `|m_jk| >= u` (or `> u` when `strict`).
    pub fn threshold(m: &DMatrix<f64>, t: f64, u: f64, strict: bool) -> Self {
        let p = m.nrows();
        Self::from_fn(p, t, u, |j, k| {
            let v = m[(j, k)].abs();
            if strict {
                v > u
            } else {
                v >= u
            }
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn has_edge(&self, j: usize, k: usize) -> bool {
        self.adjacency[j * self.p + k]
    }

    /// Number of ordered pairs `(j, k)`, diagonal included, marked present.
    pub fn count(&self) -> usize {
        self.adjacency.iter().filter(|&&a| a).count()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.p).all(|j| (0..j).all(|k| self.has_edge(j, k) == self.has_edge(k, j)))
    }

    pub fn complement(&self) -> Self {
        Self {
            p: self.p,
            adjacency: self.adjacency.iter().map(|a| !a).collect(),
            t: self.t,
            u: self.u,
        }
    }

    /// `(j, k)` pairs with `j < k` that carry an edge, 1-based.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for j in 0..self.p {
            for k in j + 1..self.p {
                if self.has_edge(j, k) {
                    out.push((j + 1, k + 1));
                }
            }
        }
        out
    }

    /// Edge list `j,k,weight` with 1-based node labels.
    pub fn write_edge_list<W: Write>(&self, weights: &DMatrix<f64>, mut w: W) -> Result<()> {
        writeln!(w, "j,k,weight")?;
        for (j, k) in self.edges() {
            writeln!(w, "{j},{k},{}", weights[(j - 1, k - 1)])?;
        }
        Ok(())
    }

    pub fn write_adjacency_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for j in 0..self.p {
            let row: Vec<&str> = (0..self.p)
                .map(|k| if self.has_edge(j, k) { "1" } else { "0" })
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}
