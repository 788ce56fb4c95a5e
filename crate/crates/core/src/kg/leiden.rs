//! Leiden community detection on small undirected graphs.
//!
//! Fast local moving, greedy refinement restricted to well-connected subsets,
//! aggregation on the refined partition, repeated until no node moves.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-12;
const MAX_ROUNDS: usize = 64;

#[derive(Debug, Clone)]
struct WGraph {
    adj: Vec<Vec<(usize, f64)>>,
    self_w: Vec<f64>,
    strength: Vec<f64>,
    two_m: f64,
}

impl WGraph {
    fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a != b {
                adj[a].push((b, 1.0));
                adj[b].push((a, 1.0));
            }
        }
        Self::finish(adj, vec![0.0; n])
    }

    fn finish(adj: Vec<Vec<(usize, f64)>>, self_w: Vec<f64>) -> Self {
        let strength: Vec<f64> = adj
            .iter()
            .zip(&self_w)
            .map(|(ns, s)| ns.iter().map(|x| x.1).sum::<f64>() + 2.0 * s)
            .collect();
        let two_m = strength.iter().sum();
        Self { adj, self_w, strength, two_m }
    }

    fn n(&self) -> usize {
        self.adj.len()
    }
}

/// Renumber labels by first occurrence.
fn relabel(part: &[usize]) -> (Vec<usize>, usize) {
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    let mut out = Vec::with_capacity(part.len());
    for &c in part {
        let next = map.len();
        out.push(*map.entry(c).or_insert(next));
    }
    (out, map.len())
}

fn move_nodes_fast(g: &WGraph, part: &mut [usize], gamma: f64, rng: &mut ChaCha8Rng) {
    let n = g.n();
    let mut k_comm = vec![0.0; n];
    let mut size = vec![0usize; n];
    for v in 0..n {
        k_comm[part[v]] += g.strength[v];
        size[part[v]] += 1;
    }
    let mut empty: Vec<usize> = (0..n).filter(|c| size[*c] == 0).rev().collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut queue: VecDeque<usize> = order.into();
    let mut queued = vec![true; n];
    let mut w_to = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();

    while let Some(v) = queue.pop_front() {
        queued[v] = false;
        let a = part[v];
        let kv = g.strength[v];
        for &(u, w) in &g.adj[v] {
            let c = part[u];
            if w_to[c] == 0.0 {
                touched.push(c);
            }
            w_to[c] += w;
        }
        k_comm[a] -= kv;
        size[a] -= 1;
        if size[a] == 0 {
            empty.push(a);
        }
        let mut best = a;
        let mut best_gain = w_to[a] - gamma * kv * k_comm[a] / g.two_m;
        touched.sort_unstable();
        for &c in &touched {
            if c == a {
                continue;
            }
            let gain = w_to[c] - gamma * kv * k_comm[c] / g.two_m;
            if gain > best_gain + EPS {
                best = c;
                best_gain = gain;
            }
        }
        if best_gain < -EPS {
            while let Some(&c) = empty.last() {
                if size[c] == 0 {
                    break;
                }
                empty.pop();
            }
            if let Some(&c) = empty.last() {
                best = c;
            }
        }
        k_comm[best] += kv;
        size[best] += 1;
        part[v] = best;
        for &c in &touched {
            w_to[c] = 0.0;
        }
        touched.clear();
        if best != a {
            for &(u, _) in &g.adj[v] {
                if !queued[u] && part[u] != best {
                    queued[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
}

/// Greedy refinement: inside each community, well-connected singletons merge
/// into the well-connected subset giving the largest positive gain.
fn refine(g: &WGraph, part: &[usize], gamma: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = g.n();
    let mut k_c = vec![0.0; n];
    for v in 0..n {
        k_c[part[v]] += g.strength[v];
    }
    let w_in: Vec<f64> = (0..n)
        .map(|v| g.adj[v].iter().filter(|(u, _)| part[*u] == part[v]).map(|x| x.1).sum())
        .collect();
    let mut refined: Vec<usize> = (0..n).collect();
    let mut k_t = g.strength.clone();
    let mut ext_t = w_in.clone();
    let mut size = vec![1usize; n];

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut w_to: BTreeMap<usize, f64> = BTreeMap::new();
    for v in order {
        if size[refined[v]] != 1 {
            continue;
        }
        let c = part[v];
        let kv = g.strength[v];
        if w_in[v] < gamma * kv * (k_c[c] - kv) / g.two_m - EPS {
            continue;
        }
        w_to.clear();
        for &(u, w) in &g.adj[v] {
            if part[u] == c {
                *w_to.entry(refined[u]).or_insert(0.0) += w;
            }
        }
        let own = refined[v];
        let mut best: Option<usize> = None;
        let mut best_gain = 0.0;
        for (&t, &w) in &w_to {
            if t == own {
                continue;
            }
            if ext_t[t] < gamma * k_t[t] * (k_c[c] - k_t[t]) / g.two_m - EPS {
                continue;
            }
            let gain = w - gamma * kv * k_t[t] / g.two_m;
            if gain > best_gain + EPS {
                best = Some(t);
                best_gain = gain;
            }
        }
        if let Some(t) = best {
            ext_t[t] += w_in[v] - 2.0 * w_to[&t];
            k_t[t] += kv;
            size[t] += 1;
            size[own] = 0;
            refined[v] = t;
        }
    }
    refined
}

fn aggregate(g: &WGraph, membership: &[usize], k: usize) -> WGraph {
    let mut adj_map: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
    let mut self_w = vec![0.0; k];
    for v in 0..g.n() {
        let cv = membership[v];
        self_w[cv] += g.self_w[v];
        for &(u, w) in &g.adj[v] {
            if u <= v {
                continue;
            }
            let cu = membership[u];
            if cu == cv {
                self_w[cv] += w;
            } else {
                *adj_map[cv].entry(cu).or_insert(0.0) += w;
                *adj_map[cu].entry(cv).or_insert(0.0) += w;
            }
        }
    }
    let adj = adj_map.into_iter().map(|m| m.into_iter().collect()).collect();
    WGraph::finish(adj, self_w)
}

/// Community label per node, contiguous from 0 in order of first appearance.
pub fn leiden_labels(n: usize, edges: &[(usize, usize)], gamma: f64, seed: u64) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let mut g = WGraph::from_edges(n, edges);
    if g.two_m == 0.0 {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut node_of: Vec<usize> = (0..n).collect();
    let mut part: Vec<usize> = (0..n).collect();
    for _ in 0..MAX_ROUNDS {
        move_nodes_fast(&g, &mut part, gamma, &mut rng);
        let (p, k) = relabel(&part);
        if k == g.n() {
            part = p;
            break;
        }
        let (r, kr) = relabel(&refine(&g, &p, gamma, &mut rng));
        // Refinement that merges nothing would loop forever; aggregate on the
        // coarse partition instead.
        let (membership, km) = if kr < g.n() { (r, kr) } else { (p.clone(), k) };
        let agg = aggregate(&g, &membership, km);
        let mut init = vec![0; km];
        for v in 0..g.n() {
            init[membership[v]] = p[v];
        }
        for o in node_of.iter_mut() {
            *o = membership[*o];
        }
        g = agg;
        part = init;
    }
    let flat: Vec<usize> = node_of.iter().map(|&x| part[x]).collect();
    relabel(&flat).0
}

/// Q = Σ_c [ L_c / m − γ (K_c / 2m)² ] on unit weights.
pub fn modularity(n: usize, edges: &[(usize, usize)], labels: &[usize], gamma: f64) -> f64 {
    let m = edges.len() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let k = labels.iter().copied().max().map_or(0, |x| x + 1);
    let mut inner = vec![0.0; k];
    let mut deg_sum = vec![0.0; k];
    let mut deg = vec![0.0; n];
    for &(a, b) in edges {
        deg[a] += 1.0;
        deg[b] += 1.0;
        if labels[a] == labels[b] {
            inner[labels[a]] += 1.0;
        }
    }
    for v in 0..n {
        deg_sum[labels[v]] += deg[v];
    }
    (0..k).map(|c| inner[c] / m - gamma * (deg_sum[c] / (2.0 * m)).powi(2)).sum()
}
