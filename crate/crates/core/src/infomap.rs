//! Two-level map equation and its multi-trial greedy minimization.
//!
//! Flow comes from an undirected weighted random walk without teleportation:
//! a node is visited at a rate proportional to its strength and every edge
//! carries `w / (2 W)` in each direction. For a partition `M`,
//!
//! ```text
//! L(M) = plogp(q) - 2 Σ plogp(q_m) - Σ plogp(p_a) + Σ plogp(q_m + p_m)
//! ```
//!
//! with `q_m` the exit flow of module `m`, `q = Σ q_m`, `p_m` its visit rate
//! and `plogp(x) = x log2 x`.
//!
//! The optimizer repeats greedy node moves between neighbouring modules,
//! aggregates modules into super-nodes and continues on the coarser network
//! until nothing moves. Converged partitions are refined by alternately
//! re-moving single leaves (fine tuning) and re-moving sub-modules found
//! inside each module (coarse tuning). Independent trials differ only in the
//! random node visiting order.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NetworkId, ValidatedNetwork};
use crate::seed;

const MIN_IMPROVEMENT: f64 = 1e-10;
const CORE_LOOP_LIMIT: usize = 20;
/// Codelengths closer than this are treated as equal when picking a trial.
const TIE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub trials: usize,
    pub seed: u64,
    /// Maximum number of fine/coarse tuning rounds per trial.
    pub refinement_rounds: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            trials: 100,
            seed: 0,
            refinement_rounds: 8,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        Ok(())
    }
}

/// Disjoint clusters covering a network's nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub network: NetworkId,
    /// Each cluster sorted; clusters ordered by their smallest member.
    pub clusters: Vec<Vec<String>>,
    /// Description length in bits.
    pub codelength: f64,
}

impl Partition {
    /// Builds a partition in canonical order with an unset codelength.
    pub fn from_clusters(network: NetworkId, clusters: Vec<Vec<String>>) -> Self {
        let mut clusters: Vec<Vec<String>> = clusters
            .into_iter()
            .filter(|c| !c.is_empty())
            .map(|mut c| {
                c.sort();
                c
            })
            .collect();
        clusters.sort();
        Partition {
            network,
            clusters,
            codelength: f64::NAN,
        }
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Vec::len).collect()
    }

    pub fn membership(&self) -> BTreeMap<&str, usize> {
        self.clusters
            .iter()
            .enumerate()
            .flat_map(|(c, members)| members.iter().map(move |m| (m.as_str(), c)))
            .collect()
    }

    /// Indices of clusters with at least `min_size` members (display filter).
    pub fn clusters_at_least(&self, min_size: usize) -> Vec<usize> {
        (0..self.clusters.len())
            .filter(|&c| self.clusters[c].len() >= min_size)
            .collect()
    }

    pub fn median_cluster_size(&self) -> f64 {
        let mut s = self.sizes();
        if s.is_empty() {
            return 0.0;
        }
        s.sort_unstable();
        let n = s.len();
        if n % 2 == 1 {
            s[n / 2] as f64
        } else {
            (s[n / 2 - 1] + s[n / 2]) as f64 / 2.0
        }
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["investor_id", "cluster_id"])?;
        let mut rows: Vec<(&str, usize)> = self.membership().into_iter().collect();
        rows.sort();
        for (inv, c) in rows {
            w.write_record([inv, &c.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<partition>", e))?;
        Ok(())
    }
}

#[inline]
fn plogp(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

/// One level of the optimization: nodes are leaves or aggregated modules.
#[derive(Debug, Clone)]
struct Level {
    flow: Vec<f64>,
    /// Flow to each distinct neighbour, self loops excluded.
    adj: Vec<Vec<(u32, f64)>>,
    /// Sum of `adj` flows per node.
    out: Vec<f64>,
    /// Leaf members per node.
    members: Vec<Vec<u32>>,
}

impl Level {
    fn len(&self) -> usize {
        self.flow.len()
    }

    /// Leaf level over `n` nodes from undirected weighted edges.
    fn from_edges(n: usize, edges: &[(u32, u32, f64)]) -> Self {
        let total: f64 = edges.iter().map(|e| 2.0 * e.2).sum();
        let mut adj = vec![Vec::new(); n];
        for &(u, v, w) in edges {
            let f = w / total;
            adj[u as usize].push((v, f));
            adj[v as usize].push((u, f));
        }
        let out: Vec<f64> = adj.iter().map(|a| a.iter().map(|x| x.1).sum()).collect();
        Level {
            flow: out.clone(),
            adj,
            out,
            members: (0..n as u32).map(|u| vec![u]).collect(),
        }
    }

    /// Collapses nodes by `assign` (values in `0..k`).
    fn aggregate(&self, assign: &[usize], k: usize) -> Level {
        let mut flow = vec![0.0; k];
        let mut members = vec![Vec::new(); k];
        let mut acc: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); k];
        for u in 0..self.len() {
            let mu = assign[u];
            flow[mu] += self.flow[u];
            members[mu].extend_from_slice(&self.members[u]);
            for &(v, f) in &self.adj[u] {
                let mv = assign[v as usize];
                if mv != mu {
                    *acc[mu].entry(mv as u32).or_default() += f;
                }
            }
        }
        let adj: Vec<Vec<(u32, f64)>> = acc.into_iter().map(|m| m.into_iter().collect()).collect();
        let out = adj.iter().map(|a| a.iter().map(|x| x.1).sum()).collect();
        Level {
            flow,
            adj,
            out,
            members,
        }
    }
}

/// Module bookkeeping for greedy moves on one level.
struct Modules {
    of: Vec<usize>,
    flow: Vec<f64>,
    exit: Vec<f64>,
    size: Vec<usize>,
    sum_exit: f64,
}

impl Modules {
    fn new(level: &Level, assign: &[usize]) -> Self {
        let n = level.len();
        let mut m = Modules {
            of: assign.to_vec(),
            flow: vec![0.0; n],
            exit: vec![0.0; n],
            size: vec![0; n],
            sum_exit: 0.0,
        };
        m.recompute(level);
        m
    }

    fn recompute(&mut self, level: &Level) {
        self.flow.iter_mut().for_each(|x| *x = 0.0);
        self.exit.iter_mut().for_each(|x| *x = 0.0);
        self.size.iter_mut().for_each(|x| *x = 0);
        for u in 0..level.len() {
            let mu = self.of[u];
            self.flow[mu] += level.flow[u];
            self.size[mu] += 1;
            for &(v, f) in &level.adj[u] {
                if self.of[v as usize] != mu {
                    self.exit[mu] += f;
                }
            }
        }
        self.sum_exit = self.exit.iter().sum();
    }

    /// Codelength without the constant leaf entropy term.
    fn partial_codelength(&self) -> f64 {
        let mut l = plogp(self.sum_exit);
        for m in 0..self.flow.len() {
            if self.size[m] > 0 {
                l += -2.0 * plogp(self.exit[m]) + plogp(self.exit[m] + self.flow[m]);
            }
        }
        l
    }
}

/// Greedy local moves until no single move improves. Returns whether any
/// node moved.
fn move_nodes(level: &Level, modules: &mut Modules, rng: &mut ChaCha8Rng) -> bool {
    let n = level.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut to_module = vec![0.0f64; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut empty: Vec<usize> = (0..n).filter(|&m| modules.size[m] == 0).collect();
    let mut moved_any = false;

    for _ in 0..CORE_LOOP_LIMIT {
        order.shuffle(rng);
        let mut moved = 0usize;
        let before = modules.partial_codelength();
        for &u in &order {
            let cur = modules.of[u];
            let (p_u, out_u) = (level.flow[u], level.out[u]);
            if out_u <= 0.0 {
                continue;
            }
            for &(v, f) in &level.adj[u] {
                let m = modules.of[v as usize];
                if to_module[m] == 0.0 {
                    touched.push(m);
                }
                to_module[m] += f;
            }
            let w_cur = to_module[cur];
            let exit_cur_new = modules.exit[cur] - out_u + 2.0 * w_cur;
            let flow_cur_new = modules.flow[cur] - p_u;

            let delta_for = |w_m: f64, exit_m: f64, flow_m: f64| {
                let exit_m_new = exit_m + out_u - 2.0 * w_m;
                let flow_m_new = flow_m + p_u;
                let sum_new = modules.sum_exit + (exit_cur_new - modules.exit[cur]) + (exit_m_new - exit_m);
                plogp(sum_new) - plogp(modules.sum_exit)
                    - 2.0
                        * (plogp(exit_cur_new) + plogp(exit_m_new)
                            - plogp(modules.exit[cur])
                            - plogp(exit_m))
                    + plogp(exit_cur_new + flow_cur_new)
                    + plogp(exit_m_new + flow_m_new)
                    - plogp(modules.exit[cur] + modules.flow[cur])
                    - plogp(exit_m + flow_m)
            };

            // (module, delta, flow from u into module)
            let mut best: Option<(usize, f64, f64)> = None;
            for &m in &touched {
                if m == cur {
                    continue;
                }
                let d = delta_for(to_module[m], modules.exit[m], modules.flow[m]);
                // ties go to the smaller module index
                if best.is_none_or(|(bm, bd, _)| d < bd - 1e-15 || (d <= bd + 1e-15 && m < bm)) {
                    best = Some((m, d, to_module[m]));
                }
            }
            if modules.size[cur] > 1 {
                if let Some(&m) = empty.last() {
                    let d = delta_for(0.0, 0.0, 0.0);
                    if best.is_none_or(|(_, bd, _)| d < bd - 1e-15) {
                        best = Some((m, d, 0.0));
                    }
                }
            }
            for &m in &touched {
                to_module[m] = 0.0;
            }
            touched.clear();

            let Some((target, delta, w_t)) = best else {
                continue;
            };
            if delta >= -MIN_IMPROVEMENT {
                continue;
            }
            if modules.size[target] == 0 {
                empty.pop();
            }
            let exit_t_new = modules.exit[target] + out_u - 2.0 * w_t;
            modules.sum_exit += (exit_cur_new - modules.exit[cur]) + (exit_t_new - modules.exit[target]);
            modules.exit[cur] = exit_cur_new;
            modules.flow[cur] = flow_cur_new;
            modules.size[cur] -= 1;
            modules.exit[target] = exit_t_new;
            modules.flow[target] += p_u;
            modules.size[target] += 1;
            modules.of[u] = target;
            if modules.size[cur] == 0 {
                modules.exit[cur] = 0.0;
                modules.flow[cur] = 0.0;
                empty.push(cur);
            }
            moved += 1;
        }
        modules.recompute(level);
        if moved == 0 {
            break;
        }
        moved_any = true;
        if before - modules.partial_codelength() < MIN_IMPROVEMENT {
            break;
        }
    }
    moved_any
}

/// Renumbers module labels to `0..k` in order of first appearance.
fn compact(of: &[usize]) -> (Vec<usize>, usize) {
    let mut map: HashMap<usize, usize> = HashMap::new();
    let out = of
        .iter()
        .map(|&m| {
            let next = map.len();
            *map.entry(m).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// Moves and aggregates from `initial` (labels over `level`'s nodes) until
/// the coarsest level stops changing. Returns a module label per leaf.
fn optimize_from(leaves: &Level, level: Level, initial: Vec<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut level = level;
    let mut modules = Modules::new(&level, &initial);
    move_nodes(&level, &mut modules, rng);
    loop {
        let (assign, k) = compact(&modules.of);
        if k == level.len() {
            break;
        }
        level = level.aggregate(&assign, k);
        modules = Modules::new(&level, &(0..k).collect::<Vec<_>>());
        if !move_nodes(&level, &mut modules, rng) {
            break;
        }
    }
    let mut leaf_module = vec![0usize; leaves.len()];
    for (u, members) in level.members.iter().enumerate() {
        for &leaf in members {
            leaf_module[leaf as usize] = modules.of[u];
        }
    }
    compact(&leaf_module).0
}

/// Sub-modules of each module, found by optimizing each module's induced
/// subnetwork on its own. Returns a sub-module label per leaf.
fn submodules(leaves: &Level, leaf_module: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let k = leaf_module.iter().max().map_or(0, |m| m + 1);
    let mut groups: Vec<Vec<u32>> = vec![Vec::new(); k];
    for (u, &m) in leaf_module.iter().enumerate() {
        groups[m].push(u as u32);
    }
    let mut sub = vec![0usize; leaves.len()];
    let mut next = 0usize;
    for group in groups {
        if group.len() <= 1 {
            for &u in &group {
                sub[u as usize] = next;
            }
            next += 1;
            continue;
        }
        let local: HashMap<u32, u32> = group.iter().enumerate().map(|(i, &u)| (u, i as u32)).collect();
        let mut edges = Vec::new();
        for &u in &group {
            for &(v, f) in &leaves.adj[u as usize] {
                if u < v {
                    if let Some(&lv) = local.get(&v) {
                        edges.push((local[&u], lv, f));
                    }
                }
            }
        }
        let labels = if edges.is_empty() {
            (0..group.len()).collect()
        } else {
            let sub_level = Level::from_edges(group.len(), &edges);
            let init = (0..group.len()).collect();
            optimize_from(&sub_level, sub_level.clone(), init, rng)
        };
        let width = labels.iter().max().map_or(0, |m| m + 1);
        for (i, &u) in group.iter().enumerate() {
            sub[u as usize] = next + labels[i];
        }
        next += width;
    }
    sub
}

fn leaf_codelength(leaves: &Level, leaf_module: &[usize], node_entropy: f64) -> f64 {
    Modules::new(leaves, leaf_module).partial_codelength() + node_entropy
}

fn run_trial(leaves: &Level, node_entropy: f64, cfg: &DetectorConfig, trial: usize) -> (f64, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(cfg.seed ^ seed::mix(trial as u64)));
    let singletons: Vec<usize> = (0..leaves.len()).collect();
    let mut best = optimize_from(leaves, leaves.clone(), singletons, &mut rng);
    let mut best_len = leaf_codelength(leaves, &best, node_entropy);

    for round in 0..cfg.refinement_rounds {
        let candidate = if round % 2 == 0 {
            // fine tuning: leaves start in their current modules
            optimize_from(leaves, leaves.clone(), best.clone(), &mut rng)
        } else {
            // coarse tuning: sub-modules start in their current modules
            let sub = submodules(leaves, &best, &mut rng);
            let (sub, k) = compact(&sub);
            let level = leaves.aggregate(&sub, k);
            let mut init = vec![0usize; k];
            for (leaf, &s) in sub.iter().enumerate() {
                init[s] = best[leaf];
            }
            optimize_from(leaves, level, init, &mut rng)
        };
        let len = leaf_codelength(leaves, &candidate, node_entropy);
        if len < best_len - MIN_IMPROVEMENT {
            best = candidate;
            best_len = len;
        } else if round % 2 == 1 {
            break;
        }
    }
    (best_len, best)
}

/// Canonical form: clusters of leaf indices, each sorted, ordered by their
/// smallest member.
fn canonical(leaf_module: &[usize]) -> Vec<Vec<u32>> {
    let mut groups: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    for (u, &m) in leaf_module.iter().enumerate() {
        groups.entry(m).or_default().push(u as u32);
    }
    let mut out: Vec<Vec<u32>> = groups.into_values().collect();
    out.sort();
    out
}

struct Indexed<'a> {
    ids: Vec<&'a str>,
    leaves: Level,
    node_entropy: f64,
}

fn index_network(n: &ValidatedNetwork) -> Indexed<'_> {
    let ids: Vec<&str> = n.nodes.iter().map(String::as_str).collect();
    let pos: HashMap<&str, u32> = ids.iter().enumerate().map(|(k, id)| (*id, k as u32)).collect();
    let edges: Vec<(u32, u32, f64)> = n
        .edges
        .iter()
        .map(|((i, j), e)| (pos[i.as_str()], pos[j.as_str()], f64::from(e.weight)))
        .collect();
    let leaves = if edges.is_empty() {
        Level {
            flow: vec![0.0; ids.len()],
            adj: vec![Vec::new(); ids.len()],
            out: vec![0.0; ids.len()],
            members: (0..ids.len() as u32).map(|u| vec![u]).collect(),
        }
    } else {
        Level::from_edges(ids.len(), &edges)
    };
    let node_entropy = -leaves.flow.iter().map(|&p| plogp(p)).sum::<f64>();
    Indexed {
        ids,
        leaves,
        node_entropy,
    }
}

/// Two-level description length of `p` on `n`, in bits.
pub fn map_equation(n: &ValidatedNetwork, p: &Partition) -> Result<f64> {
    if n.nodes.is_empty() {
        return Err(Error::EmptyNetwork);
    }
    let idx = index_network(n);
    let pos: HashMap<&str, usize> = idx.ids.iter().enumerate().map(|(k, id)| (*id, k)).collect();
    let mut assign = vec![usize::MAX; idx.ids.len()];
    for (c, members) in p.clusters.iter().enumerate() {
        for m in members {
            let Some(&u) = pos.get(m.as_str()) else {
                return Err(Error::InvalidPartition(format!("{m} is not a network node")));
            };
            if assign[u] != usize::MAX {
                return Err(Error::InvalidPartition(format!("{m} appears in two clusters")));
            }
            assign[u] = c;
        }
    }
    if let Some(u) = assign.iter().position(|&a| a == usize::MAX) {
        return Err(Error::InvalidPartition(format!("{} is not assigned", idx.ids[u])));
    }
    Ok(leaf_codelength(&idx.leaves, &assign, idx.node_entropy))
}

/// Best partition over `cfg.trials` seeded trials. Ties within
/// [`TIE_TOLERANCE`] resolve to the lexicographically smallest canonical form.
pub fn detect(n: &ValidatedNetwork, cfg: &DetectorConfig) -> Result<Partition> {
    cfg.validate()?;
    if n.nodes.is_empty() {
        return Err(Error::EmptyNetwork);
    }
    let idx = index_network(n);
    let results: Vec<(f64, Vec<Vec<u32>>)> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let (len, modules) = run_trial(&idx.leaves, idx.node_entropy, cfg, t);
            (len, canonical(&modules))
        })
        .collect();
    let (_, best) = results
        .into_iter()
        .reduce(|a, b| {
            if b.0 < a.0 - TIE_TOLERANCE || ((b.0 - a.0).abs() <= TIE_TOLERANCE && b.1 < a.1) {
                b
            } else {
                a
            }
        })
        .expect("at least one trial");
    let clusters: Vec<Vec<String>> = best
        .iter()
        .map(|c| c.iter().map(|&u| idx.ids[u as usize].to_string()).collect())
        .collect();
    let mut partition = Partition::from_clusters(n.id.clone(), clusters);
    partition.codelength = map_equation(n, &partition)?;
    Ok(partition)
}
