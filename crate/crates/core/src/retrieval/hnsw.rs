//! Hierarchical navigable small-world graph over cosine similarity.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RetrievalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnParams {
    /// Links per node on upper layers; layer 0 allows twice as many.
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for AnnParams {
    fn default() -> Self {
        AnnParams { m: 16, ef_construction: 200, ef_search: 128, seed: 42 }
    }
}

const MAX_LEVEL: usize = 16;

/// Borrowed row-major matrix with precomputed row norms.
#[derive(Clone, Copy)]
pub(crate) struct Rows<'a> {
    pub data: &'a [f32],
    pub dim: usize,
    pub norms: &'a [f64],
}

impl Rows<'_> {
    fn row(&self, i: u32) -> &[f32] {
        let i = i as usize;
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn sim_to(&self, q: &[f32], q_norm: f64, i: u32) -> f64 {
        let dot: f64 = q.iter().zip(self.row(i)).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
        let den = q_norm * self.norms[i as usize];
        if den == 0.0 {
            0.0
        } else {
            (dot / den).clamp(-1.0, 1.0)
        }
    }

    fn sim(&self, i: u32, j: u32) -> f64 {
        self.sim_to(self.row(i), self.norms[i as usize], j)
    }
}

/// Candidate ordered by similarity, ties broken toward the lower id.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cand {
    sim: f64,
    id: u32,
}

impl Eq for Cand {}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim.total_cmp(&other.sim).then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub(crate) struct Hnsw {
    params: AnnParams,
    entry: Option<u32>,
    max_level: usize,
    /// links[node][layer]
    links: Vec<Vec<Vec<u32>>>,
}

impl Hnsw {
    pub fn build(rows: Rows<'_>, params: AnnParams) -> Hnsw {
        let count = rows.norms.len();
        let mut g = Hnsw { params, entry: None, max_level: 0, links: Vec::with_capacity(count) };
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let ml = 1.0 / (params.m.max(2) as f64).ln();
        for i in 0..count as u32 {
            let u: f64 = 1.0 - rng.random::<f64>();
            let level = ((-u.ln() * ml).floor() as usize).min(MAX_LEVEL);
            g.insert(rows, i, level);
        }
        g
    }

    fn max_links(&self, layer: usize) -> usize {
        if layer == 0 {
            self.params.m * 2
        } else {
            self.params.m
        }
    }

    fn insert(&mut self, rows: Rows<'_>, id: u32, level: usize) {
        self.links.push(vec![Vec::new(); level + 1]);
        let Some(entry) = self.entry else {
            self.entry = Some(id);
            self.max_level = level;
            return;
        };
        let q = rows.row(id);
        let q_norm = rows.norms[id as usize];
        let mut eps = vec![Cand { sim: rows.sim_to(q, q_norm, entry), id: entry }];
        for layer in ((level + 1)..=self.max_level).rev() {
            eps = self.search_layer(rows, q, q_norm, &eps, 1, layer);
        }
        for layer in (0..=level.min(self.max_level)).rev() {
            let found = self.search_layer(rows, q, q_norm, &eps, self.params.ef_construction, layer);
            let chosen = select_neighbors(rows, &found, self.params.m);
            self.links[id as usize][layer] = chosen.iter().map(|c| c.id).collect();
            for c in &chosen {
                let n = c.id;
                self.links[n as usize][layer].push(id);
                if self.links[n as usize][layer].len() > self.max_links(layer) {
                    let mut cands: Vec<Cand> = self.links[n as usize][layer]
                        .iter()
                        .map(|&x| Cand { sim: rows.sim(n, x), id: x })
                        .collect();
                    cands.sort_by(|a, b| b.cmp(a));
                    self.links[n as usize][layer] =
                        select_neighbors(rows, &cands, self.max_links(layer)).iter().map(|c| c.id).collect();
                }
            }
            eps = found;
        }
        if level > self.max_level {
            self.max_level = level;
            self.entry = Some(id);
        }
    }

    /// Best `ef` nodes reachable on `layer`, most similar first.
    fn search_layer(&self, rows: Rows<'_>, q: &[f32], q_norm: f64, eps: &[Cand], ef: usize, layer: usize) -> Vec<Cand> {
        let ef = ef.max(1);
        let mut visited: HashSet<u32> = eps.iter().map(|c| c.id).collect();
        let mut candidates: BinaryHeap<Cand> = eps.iter().copied().collect();
        let mut best: BinaryHeap<Reverse<Cand>> = eps.iter().copied().map(Reverse).collect();
        while best.len() > ef {
            best.pop();
        }
        while let Some(c) = candidates.pop() {
            let worst = best.peek().expect("nonempty").0;
            if c.sim < worst.sim && best.len() >= ef {
                break;
            }
            let Some(neigh) = self.links[c.id as usize].get(layer) else { continue };
            for &n in neigh {
                if !visited.insert(n) {
                    continue;
                }
                let cand = Cand { sim: rows.sim_to(q, q_norm, n), id: n };
                let worst = best.peek().expect("nonempty").0;
                if best.len() < ef || cand > worst {
                    candidates.push(cand);
                    best.push(Reverse(cand));
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        let mut out: Vec<Cand> = best.into_iter().map(|r| r.0).collect();
        out.sort_by(|a, b| b.cmp(a));
        out
    }

    /// Approximate top-`k` as (row, similarity) pairs.
    pub fn search(&self, rows: Rows<'_>, q: &[f32], q_norm: f64, k: usize) -> Vec<(u32, f64)> {
        let Some(entry) = self.entry else { return Vec::new() };
        let mut eps = vec![Cand { sim: rows.sim_to(q, q_norm, entry), id: entry }];
        for layer in (1..=self.max_level).rev() {
            eps = self.search_layer(rows, q, q_norm, &eps, 1, layer);
        }
        let found = self.search_layer(rows, q, q_norm, &eps, self.params.ef_search.max(k), 0);
        found.into_iter().take(k).map(|c| (c.id, c.sim)).collect()
    }

    pub fn params(&self) -> AnnParams {
        self.params
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"PHNS");
        out.extend_from_slice(&(self.links.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.entry.unwrap_or(u32::MAX).to_le_bytes());
        out.extend_from_slice(&(self.max_level as u32).to_le_bytes());
        for node in &self.links {
            out.push(node.len() as u8);
            for layer in node {
                out.extend_from_slice(&(layer.len() as u32).to_le_bytes());
                for &n in layer {
                    out.extend_from_slice(&n.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], params: AnnParams, expected_count: usize) -> Result<Hnsw, RetrievalError> {
        let bad = |what: &str| RetrievalError::Format(format!("graph: {what}"));
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).ok_or_else(|| bad("truncated"))? != b"PHNS" {
            return Err(bad("bad magic"));
        }
        let mut next = || r.u32().ok_or_else(|| bad("truncated"));
        let count = next()? as usize;
        if count != expected_count {
            return Err(bad("node count differs from vector count"));
        }
        let entry = next()?;
        let max_level = next()? as usize;
        let mut links = Vec::with_capacity(count);
        for _ in 0..count {
            let layers = r.take(1).ok_or_else(|| bad("truncated"))?[0] as usize;
            let mut node = Vec::with_capacity(layers);
            for _ in 0..layers {
                let len = r.u32().ok_or_else(|| bad("truncated"))? as usize;
                let mut layer = Vec::with_capacity(len.min(1024));
                for _ in 0..len {
                    let n = r.u32().ok_or_else(|| bad("truncated"))?;
                    if n as usize >= count {
                        return Err(bad("link out of range"));
                    }
                    layer.push(n);
                }
                node.push(layer);
            }
            links.push(node);
        }
        let entry = (entry != u32::MAX).then_some(entry);
        if entry.is_some_and(|e| e as usize >= count) || (entry.is_none() && count > 0) {
            return Err(bad("invalid entry point"));
        }
        Ok(Hnsw { params, entry, max_level, links })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}

/// Diversity-preserving neighbour choice: keep a candidate when it is more
/// similar to the query than to every neighbour already kept, then top up
/// with the best discarded candidates. `cands` must be sorted best first.
fn select_neighbors(rows: Rows<'_>, cands: &[Cand], m: usize) -> Vec<Cand> {
    let mut kept: Vec<Cand> = Vec::with_capacity(m);
    let mut pruned = Vec::new();
    for &c in cands {
        if kept.len() >= m {
            break;
        }
        if kept.iter().all(|k| rows.sim(c.id, k.id) < c.sim) {
            kept.push(c);
        } else {
            pruned.push(c);
        }
    }
    for c in pruned {
        if kept.len() >= m {
            break;
        }
        kept.push(c);
    }
    kept
}
