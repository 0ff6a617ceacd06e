//! Overlap tests between clusters of different networks: persistence from the
//! first to the second window, overlap across securities within a window, and
//! overlap between an IPO security and mature securities over the same dates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdr::{fdr_validate, FdrConfig};
use crate::hypergeom::hypergeom_sf;
use crate::infomap::Partition;
use crate::network::NetworkId;

/// One cluster of one network; `cluster` indexes `Partition::clusters`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClusterRef {
    pub network: NetworkId,
    pub cluster: usize,
}

impl fmt::Display for ClusterRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.network, self.cluster)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMode {
    Persistence,
    CrossSecurity,
    IpoVsMature,
}

impl SimilarityMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SimilarityMode::Persistence => "persistence",
            SimilarityMode::CrossSecurity => "cross_security",
            SimilarityMode::IpoVsMature => "ipo_vs_mature",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapTest {
    pub cluster_a: ClusterRef,
    pub cluster_b: ClusterRef,
    pub population: u64,
    pub n_a: u64,
    pub n_b: u64,
    pub n_ab: u64,
    pub p_value: f64,
    pub validated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityResult {
    pub mode: SimilarityMode,
    pub population: u64,
    /// FDR family size; equals `tests.len()`.
    pub n_tests: usize,
    /// Every pair with at least one shared investor, ordered by cluster refs.
    pub tests: Vec<OverlapTest>,
}

impl SimilarityResult {
    pub fn validated(&self) -> impl Iterator<Item = &OverlapTest> {
        self.tests.iter().filter(|t| t.validated)
    }

    pub fn validated_count(&self) -> usize {
        self.validated().count()
    }

    /// Distinct clusters on each side that take part in a validated pair.
    pub fn matched_clusters(&self) -> (BTreeSet<&ClusterRef>, BTreeSet<&ClusterRef>) {
        let a = self.validated().map(|t| &t.cluster_a).collect();
        let b = self.validated().map(|t| &t.cluster_b).collect();
        (a, b)
    }

    /// Every cluster with a validated partner, on either side.
    pub fn similar_clusters(&self) -> BTreeSet<&ClusterRef> {
        let (mut a, b) = self.matched_clusters();
        a.extend(b);
        a
    }
}

/// Probability of at least `n_ab` shared members between clusters of sizes
/// `n_a` and `n_b` drawn from `population` investors.
pub fn overlap_pvalue(population: u64, n_a: u64, n_b: u64, n_ab: u64) -> Result<f64> {
    hypergeom_sf(population, n_a, n_b, n_ab)
}

fn node_set<'a>(parts: impl IntoIterator<Item = &'a Partition>) -> BTreeSet<&'a str> {
    parts
        .into_iter()
        .flat_map(|p| p.clusters.iter().flatten().map(String::as_str))
        .collect()
}

/// Overlap counts between every cluster of `a` and every cluster of `b`.
fn overlaps(a: &Partition, b: &Partition, population: u64) -> Result<Vec<OverlapTest>> {
    let member_b = b.membership();
    let mut out = Vec::new();
    for (ca, members) in a.clusters.iter().enumerate() {
        let mut shared: BTreeMap<usize, u64> = BTreeMap::new();
        for m in members {
            if let Some(&cb) = member_b.get(m.as_str()) {
                *shared.entry(cb).or_default() += 1;
            }
        }
        for (cb, n_ab) in shared {
            let (n_a, n_b) = (members.len() as u64, b.clusters[cb].len() as u64);
            out.push(OverlapTest {
                cluster_a: ClusterRef {
                    network: a.network.clone(),
                    cluster: ca,
                },
                cluster_b: ClusterRef {
                    network: b.network.clone(),
                    cluster: cb,
                },
                population,
                n_a,
                n_b,
                n_ab,
                p_value: overlap_pvalue(population, n_a, n_b, n_ab)?,
                validated: false,
            });
        }
    }
    Ok(out)
}

fn run_family(
    mode: SimilarityMode,
    pairs: &[(&Partition, &Partition)],
    population: u64,
    fdr: &FdrConfig,
) -> Result<SimilarityResult> {
    fdr.validate()?;
    let chunks: Vec<Vec<OverlapTest>> = pairs
        .par_iter()
        .map(|(a, b)| overlaps(a, b, population))
        .collect::<Result<_>>()?;
    let mut tests: Vec<OverlapTest> = chunks.into_iter().flatten().collect();
    tests.sort_by(|x, y| (&x.cluster_a, &x.cluster_b).cmp(&(&y.cluster_a, &y.cluster_b)));
    let n_tests = tests.len();
    let keyed: Vec<(usize, f64)> = tests.iter().map(|t| t.p_value).enumerate().collect();
    for (k, _) in fdr_validate(keyed, fdr.alpha, n_tests, fdr.mode) {
        tests[k].validated = true;
    }
    Ok(SimilarityResult {
        mode,
        population,
        n_tests,
        tests,
    })
}

/// First-window clusters against second-window clusters of one security. The
/// population is every investor present in either network.
pub fn persistence(y1: &Partition, y2: &Partition, fdr: &FdrConfig) -> Result<SimilarityResult> {
    let population = node_set([y1, y2]).len() as u64;
    run_family(SimilarityMode::Persistence, &[(y1, y2)], population, fdr)
}

/// Clusters of different securities within the same window, tested as one
/// family. Pairs within one security are not tested.
pub fn cross_security(partitions: &[Partition], fdr: &FdrConfig) -> Result<SimilarityResult> {
    if partitions.len() < 2 {
        return Err(Error::Config(
            "cross-security overlap needs at least two networks".into(),
        ));
    }
    let population = node_set(partitions).len() as u64;
    let mut pairs = Vec::new();
    for (i, a) in partitions.iter().enumerate() {
        for b in &partitions[i + 1..] {
            if a.network.security_id != b.network.security_id {
                let (a, b) = if a.network <= b.network { (a, b) } else { (b, a) };
                pairs.push((a, b));
            }
        }
    }
    run_family(SimilarityMode::CrossSecurity, &pairs, population, fdr)
}

/// IPO clusters against the clusters of every mature network over the same
/// dates, tested as one joint family. The population is every investor in the
/// IPO network or any mature network.
pub fn ipo_vs_mature(ipo: &Partition, matures: &[Partition], fdr: &FdrConfig) -> Result<SimilarityResult> {
    if matures.is_empty() {
        return Err(Error::Config("no mature networks to compare with".into()));
    }
    let population = node_set(std::iter::once(ipo).chain(matures)).len() as u64;
    let pairs: Vec<_> = matures.iter().map(|m| (ipo, m)).collect();
    run_family(SimilarityMode::IpoVsMature, &pairs, population, fdr)
}

pub const SIMILARITY_HEADER: &str = "mode,net_a,cluster_a,net_b,cluster_b,N,n_a,n_b,n_ab,p_value,validated";

pub fn write_similarity_csv<W: Write>(sink: W, results: &[SimilarityResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(SIMILARITY_HEADER.split(','))?;
    for r in results {
        for t in &r.tests {
            w.write_record([
                r.mode.as_str().to_string(),
                t.cluster_a.network.to_string(),
                t.cluster_a.cluster.to_string(),
                t.cluster_b.network.to_string(),
                t.cluster_b.cluster.to_string(),
                t.population.to_string(),
                t.n_a.to_string(),
                t.n_b.to_string(),
                t.n_ab.to_string(),
                format!("{:e}", t.p_value),
                t.validated.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<similarity csv>", e))
}

/// `k/total (pct%)`, percentage rounded to an integer.
pub fn fraction_label(k: usize, total: usize) -> String {
    let pct = if total == 0 { 0.0 } else { 100.0 * k as f64 / total as f64 };
    format!("{k}/{total} ({pct:.0}%)")
}

fn percent(k: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * k as f64 / total as f64
    }
}

/// Clusters of `p` without a validated partner in `cross` (asset-specific).
pub fn unique_clusters(p: &Partition, cross: Option<&SimilarityResult>) -> usize {
    let similar = cross.map(SimilarityResult::similar_clusters).unwrap_or_default();
    (0..p.len())
        .filter(|&c| {
            !similar.contains(&ClusterRef {
                network: p.network.clone(),
                cluster: c,
            })
        })
        .count()
}

/// Per-security cluster statistics for both windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStatsRow {
    pub security_id: String,
    pub clusters_y1: usize,
    pub clusters_y2: usize,
    pub unique_y1: usize,
    pub unique_y2: usize,
    /// Validated first-window clusters and validated second-window clusters.
    pub persisting: (usize, usize),
    pub median_size_y1: f64,
    pub median_size_y2: f64,
}

impl ClusterStatsRow {
    pub fn build(
        y1: &Partition,
        y2: &Partition,
        cross_y1: Option<&SimilarityResult>,
        cross_y2: Option<&SimilarityResult>,
        persistence: &SimilarityResult,
    ) -> Self {
        let (a, b) = persistence.matched_clusters();
        ClusterStatsRow {
            security_id: y1.network.security_id.clone(),
            clusters_y1: y1.len(),
            clusters_y2: y2.len(),
            unique_y1: unique_clusters(y1, cross_y1),
            unique_y2: unique_clusters(y2, cross_y2),
            persisting: (a.len(), b.len()),
            median_size_y1: y1.median_cluster_size(),
            median_size_y2: y2.median_cluster_size(),
        }
    }

    /// `k -> m`, or empty when nothing persists.
    pub fn persisting_label(&self) -> String {
        match self.persisting {
            (0, 0) => String::new(),
            (a, b) => format!("{a} -> {b}"),
        }
    }
}

/// Overlap of one IPO network with one mature network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatureOverlap {
    /// IPO clusters with a validated partner in the mature network.
    pub ipo_clusters: usize,
    /// Mature clusters with a validated partner in the IPO network.
    pub mature_clusters: usize,
    /// All clusters of the mature network.
    pub mature_total: usize,
}

impl fmt::Display for MatureOverlap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ipo_clusters == 0 && self.mature_clusters == 0 {
            write!(f, "{{{}}}", self.mature_total)
        } else {
            write!(f, "{} ({}) {{{}}}", self.ipo_clusters, self.mature_clusters, self.mature_total)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatureOverlapRow {
    pub ipo: NetworkId,
    /// Keyed by mature security id.
    pub overlaps: BTreeMap<String, MatureOverlap>,
    /// IPO clusters without a validated partner in any mature network.
    pub unique: usize,
    pub total: usize,
}

impl MatureOverlapRow {
    pub fn build(ipo: &Partition, matures: &[Partition], result: &SimilarityResult) -> Self {
        let mut overlaps = BTreeMap::new();
        for m in matures {
            let mut a = BTreeSet::new();
            let mut b = BTreeSet::new();
            for t in result.validated().filter(|t| t.cluster_b.network == m.network) {
                a.insert(t.cluster_a.cluster);
                b.insert(t.cluster_b.cluster);
            }
            overlaps.insert(
                m.network.security_id.clone(),
                MatureOverlap {
                    ipo_clusters: a.len(),
                    mature_clusters: b.len(),
                    mature_total: m.len(),
                },
            );
        }
        let matched: BTreeSet<usize> = result
            .validated()
            .filter(|t| t.cluster_a.network == ipo.network)
            .map(|t| t.cluster_a.cluster)
            .collect();
        MatureOverlapRow {
            ipo: ipo.network.clone(),
            overlaps,
            unique: ipo.len() - matched.len(),
            total: ipo.len(),
        }
    }

    pub fn unique_percent(&self) -> f64 {
        percent(self.unique, self.total)
    }

    pub fn unique_label(&self) -> String {
        if self.total == 0 {
            "0".into()
        } else {
            fraction_label(self.unique, self.total)
        }
    }
}

/// Median and mean of the unique-cluster percentages, one value per row with
/// at least one cluster.
pub fn unique_percent_summary(rows: &[MatureOverlapRow]) -> (f64, f64) {
    let mut v: Vec<f64> = rows.iter().filter(|r| r.total > 0).map(MatureOverlapRow::unique_percent).collect();
    if v.is_empty() {
        return (0.0, 0.0);
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
    (median, v.iter().sum::<f64>() / n as f64)
}

pub fn write_mature_overlap_csv<W: Write>(sink: W, matures: &[String], rows: &[MatureOverlapRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["security_id".to_string(), "year".to_string()];
    header.extend(matures.iter().cloned());
    header.push("unique_clusters".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.ipo.security_id.clone(), r.ipo.window.to_string()];
        rec.extend(matures.iter().map(|m| r.overlaps.get(m).map(ToString::to_string).unwrap_or_default()));
        rec.push(r.unique_label());
        w.write_record(&rec)?;
    }
    let (median, mean) = unique_percent_summary(rows);
    let pad = vec![String::new(); matures.len()];
    for (label, x) in [("Median", median), ("Average", mean)] {
        let mut rec = vec![label.to_string(), String::new()];
        rec.extend(pad.iter().cloned());
        rec.push(format!("{x:.0}%"));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<mature overlap csv>", e))
}
