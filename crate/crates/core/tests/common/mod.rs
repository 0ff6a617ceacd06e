//! Test-only oracles, written independently of the library's code paths.
#![allow(dead_code)]

use std::collections::BTreeMap;

use cotrade_core::links::ValidatedLink;
use cotrade_core::network::{assemble, NetworkId, ValidatedNetwork};
use cotrade_core::state::{TradingState, WindowId};

/// Exact binomial coefficient.
pub fn binom(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Hypergeometric tails by exact counting of favourable subsets:
/// `(P(X >= k), P(X <= k))`.
pub fn exact_tails(t: u64, a: u64, b: u64, k: u64) -> (f64, f64) {
    let total = binom(t, b);
    let count = |x: u64| binom(a, x) * binom(t - a, b - x);
    let upper: u128 = (k..=a.min(b)).map(count).sum();
    let lower: u128 = (0..=k.min(a.min(b))).map(count).sum();
    (upper as f64 / total as f64, lower as f64 / total as f64)
}

/// Same tails by literally enumerating every `b`-subset of a `t`-set whose
/// first `a` elements are marked. Only for small `t`.
pub fn enumerated_tails(t: u32, a: u32, b: u32, k: u32) -> (f64, f64) {
    assert!(t <= 20);
    let marked: u32 = if a == 0 { 0 } else { (1u32 << a) - 1 };
    let (mut upper, mut lower, mut total) = (0u64, 0u64, 0u64);
    for subset in 0u32..(1u32 << t) {
        if subset.count_ones() != b {
            continue;
        }
        total += 1;
        let x = (subset & marked).count_ones();
        if x >= k {
            upper += 1;
        }
        if x <= k {
            lower += 1;
        }
    }
    (upper as f64 / total as f64, lower as f64 / total as f64)
}

/// Counts, for a `t`-set whose first `a` elements are marked, how many
/// `b`-subsets contain exactly `x` marked elements, by visiting every subset.
/// Indexed `[a][b][x]`.
pub fn subset_histograms(t: u32) -> Vec<Vec<Vec<u64>>> {
    assert!(t <= 24);
    let n = t as usize;
    let mut h = vec![vec![vec![0u64; n + 1]; n + 1]; n + 1];
    for subset in 0u32..(1u32 << t) {
        let b = subset.count_ones() as usize;
        for (a, row) in h.iter_mut().enumerate() {
            let marked = if a == 0 { 0 } else { (1u32 << a) - 1 };
            row[b][(subset & marked).count_ones() as usize] += 1;
        }
    }
    h
}

/// Quadratic reference for both FDR rules. Returns retained indices.
pub fn reference_fdr(p: &[f64], alpha: f64, n_tests: usize, step_up: bool) -> Vec<usize> {
    let n = p.len();
    // rank of i = 1 + number of entries strictly before it in (p, index) order
    let rank = |i: usize| 1 + (0..n).filter(|&j| p[j] < p[i] || (p[j] == p[i] && j < i)).count();
    let passes = |i: usize| p[i] < alpha * rank(i) as f64 / n_tests as f64;
    if step_up {
        let max_rank = (0..n).filter(|&i| passes(i)).map(rank).max().unwrap_or(0);
        (0..n).filter(|&i| rank(i) <= max_rank).collect()
    } else {
        (0..n).filter(|&i| passes(i)).collect()
    }
}

pub fn network(edges: &[(String, String, u8)]) -> ValidatedNetwork {
    let mut links = Vec::new();
    for (i, j, w) in edges {
        for s in TradingState::ALL.iter().take(*w as usize) {
            links.push(ValidatedLink {
                investor_i: i.clone(),
                investor_j: j.clone(),
                state: *s,
                p_value: 0.0,
            });
        }
    }
    assemble(NetworkId::new("T", WindowId::Y1), &links).unwrap()
}

pub fn node(k: usize) -> String {
    format!("n{k:02}")
}

/// Map equation in its entropy form `q H(Q) + Σ p_m H(P_m)`.
pub fn oracle_codelength(net: &ValidatedNetwork, clusters: &[Vec<String>]) -> f64 {
    let mut strength: BTreeMap<&str, f64> = BTreeMap::new();
    let mut total = 0.0;
    for ((i, j), e) in &net.edges {
        let w = f64::from(e.weight);
        *strength.entry(i).or_default() += w;
        *strength.entry(j).or_default() += w;
        total += 2.0 * w;
    }
    let module_of: BTreeMap<&str, usize> = clusters
        .iter()
        .enumerate()
        .flat_map(|(m, c)| c.iter().map(move |x| (x.as_str(), m)))
        .collect();
    let mut exit = vec![0.0; clusters.len()];
    for ((i, j), e) in &net.edges {
        let (mi, mj) = (module_of[i.as_str()], module_of[j.as_str()]);
        if mi != mj {
            let f = f64::from(e.weight) / total;
            exit[mi] += f;
            exit[mj] += f;
        }
    }
    let h = |xs: &[f64]| -> f64 {
        let s: f64 = xs.iter().sum();
        if s <= 0.0 {
            return 0.0;
        }
        -xs.iter().filter(|&&x| x > 0.0).map(|&x| (x / s) * (x / s).log2()).sum::<f64>()
    };
    let q: f64 = exit.iter().sum();
    let mut l = q * h(&exit);
    for (m, c) in clusters.iter().enumerate() {
        let mut parts = vec![exit[m]];
        parts.extend(c.iter().map(|x| strength.get(x.as_str()).copied().unwrap_or(0.0) / total));
        let p_m: f64 = parts.iter().sum();
        l += p_m * h(&parts);
    }
    l
}

/// Minimum codelength over all set partitions of the network's nodes.
pub fn exhaustive_minimum(net: &ValidatedNetwork) -> (f64, Vec<Vec<String>>) {
    let nodes: Vec<String> = net.nodes.iter().cloned().collect();
    let n = nodes.len();
    assert!(n <= 10);
    let mut labels = vec![0usize; n];
    let mut best = (f64::INFINITY, Vec::new());
    loop {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut clusters = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            clusters[l].push(nodes[i].clone());
        }
        let len = oracle_codelength(net, &clusters);
        if len < best.0 {
            best = (len, clusters);
        }
        // next restricted growth string
        let mut i = n;
        loop {
            if i <= 1 {
                return best;
            }
            i -= 1;
            let max_prefix = labels[..i].iter().max().copied().unwrap_or(0);
            if labels[i] <= max_prefix {
                labels[i] += 1;
                for l in labels.iter_mut().skip(i + 1) {
                    *l = 0;
                }
                break;
            }
        }
    }
}

fn clique_edges(members: &[usize], w: u8, out: &mut Vec<(String, String, u8)>) {
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            out.push((node(i), node(j), w));
        }
    }
}

/// Small networks: cliques, barbells, paths and disjoint edges, plus a few
/// weighted and mixed shapes.
pub fn small_battery() -> Vec<(String, ValidatedNetwork)> {
    let mut out = Vec::new();
    for k in 2..=7 {
        let mut e = Vec::new();
        clique_edges(&(0..k).collect::<Vec<_>>(), 1, &mut e);
        out.push((format!("clique{k}"), network(&e)));
    }
    for (k, bridge) in [(3usize, 0usize), (3, 1), (4, 0), (4, 2), (5, 0)] {
        let mut e = Vec::new();
        clique_edges(&(0..k).collect::<Vec<_>>(), 1, &mut e);
        let second: Vec<usize> = (k + bridge..2 * k + bridge).collect();
        clique_edges(&second, 1, &mut e);
        let mut path: Vec<usize> = vec![k - 1];
        path.extend(k..k + bridge);
        path.push(k + bridge);
        for w in path.windows(2) {
            e.push((node(w[0]), node(w[1]), 1));
        }
        out.push((format!("barbell{k}x{bridge}"), network(&e)));
    }
    for k in 2..=10 {
        let e: Vec<_> = (0..k - 1).map(|i| (node(i), node(i + 1), 1)).collect();
        out.push((format!("path{k}"), network(&e)));
    }
    for k in 1..=5 {
        let e: Vec<_> = (0..k).map(|i| (node(2 * i), node(2 * i + 1), 1)).collect();
        out.push((format!("pairs{k}"), network(&e)));
    }
    // weighted triangle pair joined by a heavy bridge
    let mut e = Vec::new();
    clique_edges(&[0, 1, 2], 1, &mut e);
    clique_edges(&[3, 4, 5], 3, &mut e);
    e.push((node(2), node(3), 3));
    out.push(("weighted_bridge".into(), network(&e)));
    // ring of three triangles
    let mut e = Vec::new();
    for g in 0..3 {
        clique_edges(&[3 * g, 3 * g + 1, 3 * g + 2], 2, &mut e);
        e.push((node(3 * g + 2), node((3 * g + 3) % 9), 1));
    }
    out.push(("ring_of_triangles".into(), network(&e)));
    // star
    let e: Vec<_> = (1..8).map(|i| (node(0), node(i), 1)).collect();
    out.push(("star8".into(), network(&e)));
    out
}

/// Planted-partition network: groups of the given sizes, intra-group edge
/// probability `p_in` (weight 1 to 3), inter-group `p_out` (weight 1).
/// Returns the network and each node's group.
pub fn planted_partition(
    sizes: &[usize],
    p_in: f64,
    p_out: f64,
    seed: u64,
) -> (ValidatedNetwork, BTreeMap<String, usize>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut group = Vec::new();
    for (g, &s) in sizes.iter().enumerate() {
        group.extend(std::iter::repeat(g).take(s));
    }
    let n = group.len();
    let mut e = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if group[i] == group[j] {
                if rng.gen_bool(p_in) {
                    e.push((format!("v{i:04}"), format!("v{j:04}"), rng.gen_range(1..=3u8)));
                }
            } else if rng.gen_bool(p_out) {
                e.push((format!("v{i:04}"), format!("v{j:04}"), 1));
            }
        }
    }
    let truth = (0..n).map(|i| (format!("v{i:04}"), group[i])).collect();
    (network(&e), truth)
}

/// Fraction of nodes whose found cluster is matched one-to-one (greedily by
/// overlap) with their planted group.
pub fn node_agreement(clusters: &[Vec<String>], truth: &BTreeMap<String, usize>) -> f64 {
    let mut overlaps: Vec<(usize, usize, usize)> = Vec::new();
    for (c, members) in clusters.iter().enumerate() {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for m in members {
            if let Some(&g) = truth.get(m) {
                *counts.entry(g).or_default() += 1;
            }
        }
        overlaps.extend(counts.into_iter().map(|(g, k)| (k, c, g)));
    }
    overlaps.sort_by(|a, b| b.cmp(a));
    let (mut used_c, mut used_g) = (std::collections::BTreeSet::new(), std::collections::BTreeSet::new());
    let mut agree = 0usize;
    for (k, c, g) in overlaps {
        if used_c.contains(&c) || used_g.contains(&g) {
            continue;
        }
        used_c.insert(c);
        used_g.insert(g);
        agree += k;
    }
    agree as f64 / truth.len() as f64
}
