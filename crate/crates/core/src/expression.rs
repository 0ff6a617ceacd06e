//! Over- and underexpression of investor attributes inside clusters.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdr::{fdr_validate, FdrConfig};
use crate::hypergeom::{hypergeom_cdf, hypergeom_sf};
use crate::infomap::Partition;
use crate::ingest::{AttributeTable, InvestorAttributes};
use crate::network::NetworkId;
use crate::similarity::{ClusterRef, SimilarityMode, SimilarityResult};
use crate::state::WindowId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeClass {
    Sector,
    Location,
    Gender,
    Decade,
}

impl AttributeClass {
    pub const ALL: [AttributeClass; 4] = [
        AttributeClass::Sector,
        AttributeClass::Location,
        AttributeClass::Gender,
        AttributeClass::Decade,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AttributeClass::Sector => "sector",
            AttributeClass::Location => "location",
            AttributeClass::Gender => "gender",
            AttributeClass::Decade => "decade",
        }
    }

    pub fn value_of<'a>(&self, a: &'a InvestorAttributes) -> &'a str {
        match self {
            AttributeClass::Sector => a.sector_code.as_str(),
            AttributeClass::Location => &a.location,
            AttributeClass::Gender => a.gender.as_str(),
            AttributeClass::Decade => &a.birth_decade,
        }
    }
}

impl fmt::Display for AttributeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttributeClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttributeClass::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown attribute class '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Over,
    Under,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Over => "over",
            Direction::Under => "under",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionTest {
    pub cluster: ClusterRef,
    pub class: AttributeClass,
    pub value: String,
    /// Nodes in the network.
    pub population: u64,
    pub cluster_size: u64,
    /// Nodes in the network carrying the value.
    pub value_count: u64,
    /// Nodes in the cluster carrying the value.
    pub overlap: u64,
    pub direction: Direction,
    pub p_value: f64,
}

/// Probability that a random cluster of the same size holds at least
/// `overlap` carriers of the value.
pub fn overexpression_pvalue(population: u64, cluster_size: u64, value_count: u64, overlap: u64) -> Result<f64> {
    hypergeom_sf(population, value_count, cluster_size, overlap)
}

/// Probability that a random cluster of the same size holds at most
/// `overlap` carriers of the value.
pub fn underexpression_pvalue(population: u64, cluster_size: u64, value_count: u64, overlap: u64) -> Result<f64> {
    hypergeom_cdf(population, value_count, cluster_size, overlap)
}

/// Validated expressions of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionProfile {
    pub network: NetworkId,
    /// Size of each of the two families: clusters times distinct attribute
    /// values in the network.
    pub n_tests: usize,
    pub over: Vec<ExpressionTest>,
    pub under: Vec<ExpressionTest>,
}

impl ExpressionProfile {
    pub fn validated(&self, direction: Direction) -> &[ExpressionTest] {
        match direction {
            Direction::Over => &self.over,
            Direction::Under => &self.under,
        }
    }
}

type TestKey = (usize, AttributeClass, String);

/// Tests every cluster against every attribute value present in the network,
/// in both directions, each direction as its own FDR family.
pub fn profile_network(p: &Partition, attrs: &AttributeTable, fdr: &FdrConfig) -> Result<ExpressionProfile> {
    fdr.validate()?;
    let lookup = |id: &str| {
        attrs
            .get(id)
            .ok_or_else(|| Error::MissingAttributes(format!("{id} in network {}", p.network)))
    };
    let mut counts: BTreeMap<(AttributeClass, &str), u64> = BTreeMap::new();
    for id in p.clusters.iter().flatten() {
        let a = lookup(id)?;
        for class in AttributeClass::ALL {
            *counts.entry((class, class.value_of(a))).or_default() += 1;
        }
    }
    let population = p.node_count() as u64;
    let n_tests = p.len() * counts.len();

    let per_cluster: Vec<Vec<(TestKey, [f64; 2], [u64; 2])>> = p
        .clusters
        .par_iter()
        .enumerate()
        .map(|(c, members)| {
            let mut local: BTreeMap<(AttributeClass, &str), u64> = BTreeMap::new();
            for id in members {
                let a = lookup(id)?;
                for class in AttributeClass::ALL {
                    *local.entry((class, class.value_of(a))).or_default() += 1;
                }
            }
            let size = members.len() as u64;
            counts
                .iter()
                .map(|(&(class, value), &n_q)| {
                    let k = local.get(&(class, value)).copied().unwrap_or(0);
                    let over = overexpression_pvalue(population, size, n_q, k)?;
                    let under = underexpression_pvalue(population, size, n_q, k)?;
                    Ok(((c, class, value.to_string()), [over, under], [n_q, k]))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<_> = per_cluster.into_iter().flatten().collect();

    let family = |direction: Direction| -> Vec<ExpressionTest> {
        let d = direction as usize;
        let keyed: Vec<(usize, f64)> = rows.iter().map(|r| r.1[d]).enumerate().collect();
        let mut kept: Vec<usize> = fdr_validate(keyed, fdr.alpha, n_tests, fdr.mode)
            .into_iter()
            .map(|(k, _)| k)
            .collect();
        kept.sort_unstable();
        kept.into_iter()
            .map(|k| {
                let ((c, class, value), pv, [n_q, n_cq]) = &rows[k];
                ExpressionTest {
                    cluster: ClusterRef {
                        network: p.network.clone(),
                        cluster: *c,
                    },
                    class: *class,
                    value: value.clone(),
                    population,
                    cluster_size: p.clusters[*c].len() as u64,
                    value_count: *n_q,
                    overlap: *n_cq,
                    direction,
                    p_value: pv[d],
                }
            })
            .collect()
    };
    let over = family(Direction::Over);
    let under = family(Direction::Under);
    Ok(ExpressionProfile {
        network: p.network.clone(),
        n_tests,
        over,
        under,
    })
}

pub const EXPRESSION_HEADER: &str =
    "security_id,window,cluster_id,attr_class,attr_value,direction,N,N_C,N_Q,N_CQ,p_value";

pub fn write_expression_csv<W: Write>(sink: W, profiles: &[ExpressionProfile]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(EXPRESSION_HEADER.split(','))?;
    for p in profiles {
        for t in p.over.iter().chain(&p.under) {
            let net = &t.cluster.network;
            let security = match &net.anchor {
                Some(a) => format!("{}@{a}", net.security_id),
                None => net.security_id.clone(),
            };
            w.write_record([
                security,
                net.window.to_string(),
                t.cluster.cluster.to_string(),
                t.class.to_string(),
                t.value.clone(),
                t.direction.as_str().to_string(),
                t.population.to_string(),
                t.cluster_size.to_string(),
                t.value_count.to_string(),
                t.overlap.to_string(),
                format!("{:e}", t.p_value),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<expression csv>", e))
}

/// `securities (clusters)` count pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Tally {
    pub securities: usize,
    pub clusters: usize,
}

impl fmt::Display for Tally {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.securities, self.clusters)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeTally {
    pub class: AttributeClass,
    pub value: String,
    pub tally: Tally,
}

/// Connected component of statistically similar expressed clusters within
/// one window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpressedGroup {
    pub group: usize,
    pub window: WindowId,
    pub clusters: Vec<ClusterRef>,
    /// Securities and clusters with an expressed attribute.
    pub expressed: Tally,
    /// Most widespread attributes first.
    pub attributes: Vec<AttributeTally>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpressedGroups {
    pub direction: Direction,
    pub groups: Vec<ExpressedGroup>,
    /// Pairs of first- and second-window groups joined by a validated
    /// persistence overlap between some of their clusters.
    pub cross_window: Vec<(usize, usize)>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn tally<'a>(clusters: impl IntoIterator<Item = &'a ClusterRef>) -> Tally {
    let clusters: BTreeSet<&ClusterRef> = clusters.into_iter().collect();
    let securities: BTreeSet<&str> = clusters.iter().map(|c| c.network.security_id.as_str()).collect();
    Tally {
        securities: securities.len(),
        clusters: clusters.len(),
    }
}

/// Groups clusters that carry at least one validated expression in
/// `direction` by the validated similarity pairs among them. Same-window
/// pairs merge clusters into a group; persistence pairs link first-window
/// groups to second-window groups.
pub fn group_expressed_clusters(
    similarities: &[SimilarityResult],
    profiles: &[ExpressionProfile],
    direction: Direction,
) -> ExpressedGroups {
    let mut expressed: BTreeMap<&ClusterRef, Vec<&ExpressionTest>> = BTreeMap::new();
    for p in profiles {
        for t in p.validated(direction) {
            expressed.entry(&t.cluster).or_default().push(t);
        }
    }
    let nodes: Vec<&ClusterRef> = expressed.keys().copied().collect();
    let index: BTreeMap<&ClusterRef, usize> = nodes.iter().enumerate().map(|(k, c)| (*c, k)).collect();
    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    let mut dashed = Vec::new();
    for r in similarities {
        for t in r.validated() {
            let (Some(&a), Some(&b)) = (index.get(&t.cluster_a), index.get(&t.cluster_b)) else {
                continue;
            };
            if r.mode == SimilarityMode::Persistence || t.cluster_a.network.window != t.cluster_b.network.window {
                dashed.push((a, b));
            } else {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for k in 0..nodes.len() {
        components.entry(find(&mut parent, k)).or_default().push(k);
    }
    let mut comps: Vec<Vec<usize>> = components.into_values().collect();
    // first window first, larger groups first, then by first member
    comps.sort_by(|a, b| {
        let key = |c: &Vec<usize>| (nodes[c[0]].network.window, std::cmp::Reverse(c.len()), nodes[c[0]]);
        key(a).cmp(&key(b))
    });
    let mut group_of = vec![0usize; nodes.len()];
    let mut groups = Vec::new();
    for (g, members) in comps.iter().enumerate() {
        for &k in members {
            group_of[k] = g + 1;
        }
        let clusters: Vec<ClusterRef> = members.iter().map(|&k| nodes[k].clone()).collect();
        let mut per_value: BTreeMap<(AttributeClass, &str), Vec<&ClusterRef>> = BTreeMap::new();
        for &k in members {
            for t in &expressed[nodes[k]] {
                per_value.entry((t.class, t.value.as_str())).or_default().push(nodes[k]);
            }
        }
        let mut attributes: Vec<AttributeTally> = per_value
            .into_iter()
            .map(|((class, value), cs)| AttributeTally {
                class,
                value: value.to_string(),
                tally: tally(cs),
            })
            .collect();
        attributes.sort_by(|a, b| b.tally.cmp(&a.tally).then_with(|| (a.class, &a.value).cmp(&(b.class, &b.value))));
        groups.push(ExpressedGroup {
            group: g + 1,
            window: nodes[members[0]].network.window,
            expressed: tally(&clusters),
            clusters,
            attributes,
        });
    }
    let mut cross_window: Vec<(usize, usize)> = dashed
        .into_iter()
        .map(|(a, b)| {
            let (ga, gb) = (group_of[a], group_of[b]);
            if nodes[a].network.window <= nodes[b].network.window {
                (ga, gb)
            } else {
                (gb, ga)
            }
        })
        .collect();
    cross_window.sort_unstable();
    cross_window.dedup();
    ExpressedGroups {
        direction,
        groups,
        cross_window,
    }
}
