//! End-to-end runs: inference of validated networks and their partitions,
//! downstream cluster analysis, validation reports and dataset generation.
//!
//! Every command writes into one output directory. Outputs depend only on the
//! inputs and the configuration, never on the worker count.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expression::{
    group_expressed_clusters, profile_network, write_expression_csv, Direction, ExpressedGroups, ExpressionProfile,
};
use crate::fdr::{FdrConfig, FdrMode};
use crate::infomap::{detect, DetectorConfig, Partition};
use crate::ingest::{
    aggregate_daily, build_windows, complete_attributes, filter_universe, parse_attributes, parse_calendar,
    parse_transactions, DailyNetVolume, InputFormat, SecurityCalendar, Window,
};
use crate::links::{validate_security_window, write_links_csv, UniverseMode, ValidationConfig, ValidationReport};
use crate::network::{assemble, network_stats, NetworkId, NetworkSummary};
use crate::seed;
use crate::similarity::{
    cross_security, fraction_label, ipo_vs_mature, persistence, unique_percent_summary, write_mature_overlap_csv,
    write_similarity_csv, ClusterStatsRow, MatureOverlapRow, SimilarityResult,
};
use crate::state::{encode, filter_active, EncoderConfig, StateMatrix, WindowId};
use crate::synth::{generate, write_dataset, ScenarioConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const NETWORKS_DIR: &str = "networks";
pub const ANALYSIS_DIR: &str = "analysis";
pub const REPORT_DIR: &str = "report";

/// Ranks kept verbatim at the head of a p-value curve before thinning.
const CURVE_HEAD: usize = 1000;
/// Ratio between consecutive thinned ranks.
const CURVE_STEP: f64 = 1.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub transactions: Option<PathBuf>,
    pub calendar: Option<PathBuf>,
    pub attributes: Option<PathBuf>,
    pub theta: f64,
    pub min_active_days: usize,
    pub alpha: f64,
    pub fdr_mode: FdrMode,
    pub universe: UniverseMode,
    pub trials: usize,
    pub refinement_rounds: usize,
    pub seed: u64,
    pub window_months: u32,
    pub exclude_nominee: bool,
    /// Last date covered by the data; defaults to the latest trade date.
    pub analysis_end: Option<NaiveDate>,
    /// Established securities compared against every IPO over its windows.
    pub mature_securities: Vec<String>,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub expression: bool,
    pub out: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let enc = EncoderConfig::default();
        let fdr = FdrConfig::default();
        let det = DetectorConfig::default();
        PipelineConfig {
            transactions: None,
            calendar: None,
            attributes: None,
            theta: enc.theta,
            min_active_days: enc.min_active_days,
            alpha: fdr.alpha,
            fdr_mode: fdr.mode,
            universe: UniverseMode::default(),
            trials: det.trials,
            refinement_rounds: det.refinement_rounds,
            seed: det.seed,
            window_months: 12,
            exclude_nominee: true,
            analysis_end: None,
            mature_securities: Vec::new(),
            workers: 0,
            expression: true,
            out: PathBuf::from("out"),
        }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

impl PipelineConfig {
    /// Reads a JSON config file; unknown keys and mistyped values are
    /// configuration errors.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            theta: self.theta,
            min_active_days: self.min_active_days,
        }
    }

    pub fn fdr(&self) -> FdrConfig {
        FdrConfig {
            alpha: self.alpha,
            mode: self.fdr_mode,
        }
    }

    pub fn validation(&self) -> ValidationConfig {
        ValidationConfig {
            fdr: self.fdr(),
            universe: self.universe,
        }
    }

    pub fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            trials: self.trials,
            seed: self.seed,
            refinement_rounds: self.refinement_rounds,
        }
    }

    /// Parameter ranges only.
    pub fn validate(&self) -> Result<()> {
        self.encoder().validate()?;
        self.fdr().validate()?;
        self.detector().validate()?;
        if self.window_months == 0 {
            return Err(Error::Config("window_months must be positive".into()));
        }
        Ok(())
    }

    fn require(&self, path: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
        let p = path
            .clone()
            .ok_or_else(|| Error::Config(format!("no {what} file given")))?;
        if !p.is_file() {
            return Err(Error::Config(format!("{what} file {} does not exist", p.display())));
        }
        Ok(p)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
    }
}

/// Investor counts of one security: everyone who traded, and those passing
/// the activity filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ActivityCounts {
    pub unique_y1: usize,
    pub unique_y2: usize,
    pub active_y1: usize,
    pub active_y2: usize,
    pub active_both: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityEntry {
    pub security_id: String,
    pub ipo_date: NaiveDate,
    pub windows: [Window; 2],
    pub investors: ActivityCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEntry {
    pub id: NetworkId,
    pub dir: String,
    pub nodes: usize,
    pub edges: usize,
    pub clusters: usize,
    pub codelength: f64,
    pub observed: usize,
    pub validated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub security_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: PipelineConfig,
    pub data_end: NaiveDate,
    pub securities: Vec<SecurityEntry>,
    pub networks: Vec<NetworkEntry>,
    pub skipped: Vec<Skipped>,
}

/// Messages worth showing to the user; the run itself succeeded.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Outcome {
    pub notices: Vec<String>,
}

/// Sorted p-value curve, thinned geometrically past its head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub rank: usize,
    pub p_value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkReport {
    pub id: NetworkId,
    pub universe: UniverseMode,
    pub alpha: f64,
    pub fdr_mode: FdrMode,
    pub observed: usize,
    pub validated: usize,
    pub threshold_slope: f64,
    pub summary: NetworkSummary,
    pub curve: Vec<CurvePoint>,
}

fn curve_ranks(n: usize, validated: usize) -> BTreeSet<usize> {
    let mut ranks: BTreeSet<usize> = (1..=n.min(CURVE_HEAD)).collect();
    let mut r = CURVE_HEAD as f64;
    while (r as usize) < n {
        ranks.insert(r as usize);
        r = (r * CURVE_STEP).ceil();
    }
    for k in [n, validated, validated + 1] {
        if (1..=n).contains(&k) {
            ranks.insert(k);
        }
    }
    ranks
}

fn network_report(id: &NetworkId, v: &ValidationReport, summary: NetworkSummary) -> NetworkReport {
    let curve = curve_ranks(v.sorted_p_values.len(), v.validated)
        .into_iter()
        .map(|rank| CurvePoint {
            rank,
            p_value: v.sorted_p_values[rank - 1],
            threshold: v.threshold_slope * rank as f64,
        })
        .collect();
    NetworkReport {
        id: id.clone(),
        universe: v.universe,
        alpha: v.alpha,
        fdr_mode: v.fdr_mode,
        observed: v.observed,
        validated: v.validated,
        threshold_slope: v.threshold_slope,
        summary,
        curve,
    }
}

struct NetworkOutput {
    id: NetworkId,
    links: Vec<crate::links::ValidatedLink>,
    net: crate::network::ValidatedNetwork,
    partition: Partition,
    report: NetworkReport,
}

fn infer_network(id: NetworkId, m: &StateMatrix, cfg: &PipelineConfig) -> Result<NetworkOutput> {
    let (links, v) = validate_security_window(m, &cfg.validation())?;
    let net = assemble(id.clone(), &links)?;
    let partition = if net.nodes.is_empty() {
        Partition {
            network: id.clone(),
            clusters: Vec::new(),
            codelength: 0.0,
        }
    } else {
        let mut det = cfg.detector();
        det.seed = seed::derive(cfg.seed, &id.to_string());
        detect(&net, &det)?
    };
    let report = network_report(&id, &v, network_stats(&net));
    Ok(NetworkOutput {
        id,
        links,
        net,
        partition,
        report,
    })
}

fn encode_pair(
    security: &str,
    daily: &[DailyNetVolume],
    windows: (Window, Window),
    enc: &EncoderConfig,
) -> Result<(StateMatrix, StateMatrix, ActivityCounts)> {
    let m1 = encode(security, daily, enc, windows.0)?;
    let m2 = encode(security, daily, enc, windows.1)?;
    let (f1, f2) = filter_active(&m1, &m2, enc.min_active_days);
    let active = |m: &StateMatrix, inv: &str| m.activity_count(inv) >= enc.min_active_days;
    let counts = ActivityCounts {
        unique_y1: m1.investor_count(),
        unique_y2: m2.investor_count(),
        active_y1: m1.states.keys().filter(|i| active(&m1, i)).count(),
        active_y2: m2.states.keys().filter(|i| active(&m2, i)).count(),
        active_both: m1.states.keys().filter(|i| active(&m1, i) && active(&m2, i)).count(),
    };
    Ok((f1, f2, counts))
}

enum Job<'a> {
    Ipo(&'a SecurityCalendar, (Window, Window)),
    Mature(&'a str, &'a str, (Window, Window)),
}

fn format_of(path: &Path) -> InputFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl" | "ndjson") => InputFormat::JsonLines,
        _ => InputFormat::Csv,
    }
}

fn write_network(dir: &Path, out: &NetworkOutput) -> Result<()> {
    mkdir(dir)?;
    write_links_csv(create(&dir.join("links.csv"))?, &out.id.security_id, out.id.window, &out.links)?;
    out.net.write_edge_list(create(&dir.join("edges.txt"))?)?;
    out.partition.write_csv(create(&dir.join("partition.csv"))?)?;
    write_json(&dir.join("partition.json"), &out.partition)?;
    write_json(&dir.join("report.json"), &out.report)
}

/// Infers validated networks and their partitions for every IPO security in
/// the calendar, and for every mature security over each IPO's windows.
pub fn cmd_infer(cfg: &PipelineConfig) -> Result<Outcome> {
    cfg.validate()?;
    let tx_path = cfg.require(&cfg.transactions, "transactions")?;
    let cal_path = cfg.require(&cfg.calendar, "calendar")?;
    if cfg.attributes.is_some() {
        cfg.require(&cfg.attributes, "attributes")?;
    }
    let pool = cfg.pool()?;
    let mut outcome = Outcome::default();

    let txns = parse_transactions(open(&tx_path)?, format_of(&tx_path))?;
    let txns = filter_universe(txns, cfg.exclude_nominee);
    let calendar = parse_calendar(open(&cal_path)?)?;
    let data_end = match cfg.analysis_end {
        Some(d) => d,
        None => txns
            .iter()
            .map(|t| t.trade_date)
            .max()
            .ok_or_else(|| Error::Data("no transactions to analyse".into()))?,
    };
    let daily = aggregate_daily(&txns);
    drop(txns);
    let mut by_security: BTreeMap<String, Vec<DailyNetVolume>> = BTreeMap::new();
    for d in daily {
        by_security.entry(d.security_id.clone()).or_default().push(d);
    }
    let empty = Vec::new();
    let daily_of = |s: &str| by_security.get(s).unwrap_or(&empty);

    let matures: BTreeSet<&str> = cfg.mature_securities.iter().map(String::as_str).collect();
    let mut skipped = Vec::new();
    let mut ipos = Vec::new();
    for (sec, &ipo_date) in &calendar {
        if matures.contains(sec.as_str()) {
            continue;
        }
        let cal = SecurityCalendar::from_daily(sec, ipo_date, daily_of(sec), NaiveDate::MAX);
        match build_windows(&cal, cfg.window_months, data_end) {
            Ok(w) => ipos.push((cal, w)),
            Err(e @ Error::TruncatedWindow { .. }) => {
                outcome.notices.push(format!("skipping {sec}: {e}"));
                skipped.push(Skipped {
                    security_id: sec.clone(),
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    for m in &matures {
        if !by_security.contains_key(*m) {
            outcome.notices.push(format!("mature security {m} has no trades"));
        }
    }

    let mut jobs = Vec::new();
    for (cal, w) in &ipos {
        jobs.push(Job::Ipo(cal, *w));
        for m in &cfg.mature_securities {
            jobs.push(Job::Mature(m, &cal.security_id, *w));
        }
    }
    let enc = cfg.encoder();
    let results: Vec<(Option<SecurityEntry>, Vec<NetworkOutput>)> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let (sec, anchor, windows) = match job {
                    Job::Ipo(cal, w) => (cal.security_id.as_str(), None, *w),
                    Job::Mature(m, a, w) => (*m, Some(*a), *w),
                };
                let (m1, m2, counts) = encode_pair(sec, daily_of(sec), windows, &enc)?;
                let id = |window| NetworkId {
                    security_id: sec.to_string(),
                    window,
                    anchor: anchor.map(str::to_string),
                };
                let nets = vec![infer_network(id(WindowId::Y1), &m1, cfg)?, infer_network(id(WindowId::Y2), &m2, cfg)?];
                let entry = match job {
                    Job::Ipo(cal, w) => Some(SecurityEntry {
                        security_id: cal.security_id.clone(),
                        ipo_date: cal.ipo_date,
                        windows: [w.0, w.1],
                        investors: counts,
                    }),
                    Job::Mature(..) => None,
                };
                Ok((entry, nets))
            })
            .collect::<Result<_>>()
    })?;

    let net_root = cfg.out.join(NETWORKS_DIR);
    mkdir(&net_root)?;
    let mut securities = Vec::new();
    let mut networks = Vec::new();
    for (entry, nets) in results {
        securities.extend(entry);
        for n in nets {
            let dir = n.id.file_stem();
            write_network(&net_root.join(&dir), &n)?;
            networks.push(NetworkEntry {
                id: n.id.clone(),
                dir,
                nodes: n.net.node_count(),
                edges: n.net.edge_count(),
                clusters: n.partition.len(),
                codelength: n.partition.codelength,
                observed: n.report.observed,
                validated: n.report.validated,
            });
        }
    }
    // worker count and output location do not influence results
    let recorded = PipelineConfig {
        workers: 0,
        out: PathBuf::from("."),
        ..cfg.clone()
    };
    let manifest = Manifest {
        config: recorded,
        data_end,
        securities,
        networks,
        skipped,
    };
    write_json(&cfg.out.join(MANIFEST_FILE), &manifest)?;
    Ok(outcome)
}

fn load_manifest(out: &Path) -> Result<Manifest> {
    let path = out.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(Error::Config(format!(
            "{} not found; run infer with the same output directory first",
            path.display()
        )));
    }
    read_json(&path)
}

pub const CLUSTER_STATS_HEADER: [&str; 10] = [
    "security_id",
    "unique_clusters_y1",
    "unique_clusters_y2",
    "persisting_y1_to_y2",
    "unique_investors_y1",
    "active_investors_y1",
    "unique_investors_y2",
    "active_investors_y2",
    "active_investors_y1_y2",
    "median_cluster_size",
];

fn median_label(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x:.0}")
    } else {
        format!("{x:.1}")
    }
}

fn write_cluster_stats_csv<W: Write>(sink: W, rows: &[(ClusterStatsRow, ActivityCounts)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(CLUSTER_STATS_HEADER)?;
    for (r, a) in rows {
        w.write_record([
            r.security_id.clone(),
            fraction_label(r.unique_y1, r.clusters_y1),
            fraction_label(r.unique_y2, r.clusters_y2),
            r.persisting_label(),
            a.unique_y1.to_string(),
            a.active_y1.to_string(),
            a.unique_y2.to_string(),
            a.active_y2.to_string(),
            a.active_both.to_string(),
            format!("{} ({})", median_label(r.median_size_y1), median_label(r.median_size_y2)),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<cluster stats csv>", e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub mode: String,
    pub scope: String,
    pub population: u64,
    pub n_tests: usize,
    pub validated: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpressionTotals {
    pub window: WindowId,
    pub direction: Direction,
    pub securities: usize,
    pub clusters: usize,
    pub attributes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub families: Vec<FamilySummary>,
    pub cluster_stats: Vec<ClusterStatsRow>,
    pub mature_overlap: Vec<MatureOverlapRow>,
    pub unique_percent_median: Option<f64>,
    pub unique_percent_average: Option<f64>,
    pub expression: Vec<ExpressionTotals>,
}

fn family(r: &SimilarityResult, scope: String) -> FamilySummary {
    FamilySummary {
        mode: r.mode.as_str().to_string(),
        scope,
        population: r.population,
        n_tests: r.n_tests,
        validated: r.validated_count(),
    }
}

fn expression_totals(profiles: &[ExpressionProfile]) -> Vec<ExpressionTotals> {
    let mut out = Vec::new();
    for window in [WindowId::Y1, WindowId::Y2] {
        for direction in [Direction::Over, Direction::Under] {
            let tests: Vec<_> = profiles
                .iter()
                .filter(|p| p.network.window == window)
                .flat_map(|p| p.validated(direction))
                .collect();
            let clusters: BTreeSet<_> = tests.iter().map(|t| &t.cluster).collect();
            let securities: BTreeSet<_> = clusters.iter().map(|c| &c.network.security_id).collect();
            out.push(ExpressionTotals {
                window,
                direction,
                securities: securities.len(),
                clusters: clusters.len(),
                attributes: tests.len(),
            });
        }
    }
    out
}

/// Persistence, cross-security and IPO-versus-mature overlap, attribute
/// expression, and the summary tables built from them.
pub fn cmd_analyze(cfg: &PipelineConfig) -> Result<Outcome> {
    cfg.validate()?;
    let manifest = load_manifest(&cfg.out)?;
    let attributes = cfg.attributes.clone().or(manifest.config.attributes.clone());
    if attributes.is_some() {
        cfg.require(&attributes, "attributes")?;
    }
    let pool = cfg.pool()?;
    let fdr = cfg.fdr();
    let mut outcome = Outcome::default();

    let net_root = cfg.out.join(NETWORKS_DIR);
    let mut partitions: BTreeMap<NetworkId, Partition> = BTreeMap::new();
    for n in &manifest.networks {
        let p: Partition = read_json(&net_root.join(&n.dir).join("partition.json"))?;
        partitions.insert(n.id.clone(), p);
    }
    let ipo_ids: Vec<&str> = manifest.securities.iter().map(|s| s.security_id.as_str()).collect();
    let get = |sec: &str, window| partitions.get(&NetworkId::new(sec, window));

    let mut families = Vec::new();
    let mut results: Vec<SimilarityResult> = Vec::new();

    let persist: BTreeMap<&str, SimilarityResult> = pool.install(|| {
        ipo_ids
            .par_iter()
            .filter_map(|&s| Some((s, get(s, WindowId::Y1)?, get(s, WindowId::Y2)?)))
            .map(|(s, a, b)| Ok((s, persistence(a, b, &fdr)?)))
            .collect::<Result<_>>()
    })?;
    for (s, r) in &persist {
        families.push(family(r, s.to_string()));
    }

    let mut cross: BTreeMap<WindowId, SimilarityResult> = BTreeMap::new();
    for window in [WindowId::Y1, WindowId::Y2] {
        let parts: Vec<Partition> = ipo_ids.iter().filter_map(|s| get(s, window).cloned()).collect();
        if parts.len() < 2 {
            outcome
                .notices
                .push(format!("cross-security overlap in {window} skipped: fewer than two securities"));
            continue;
        }
        let r = pool.install(|| cross_security(&parts, &fdr))?;
        families.push(family(&r, window.to_string()));
        cross.insert(window, r);
    }

    let mut stats = Vec::new();
    for entry in &manifest.securities {
        let s = entry.security_id.as_str();
        let (Some(y1), Some(y2), Some(p)) = (get(s, WindowId::Y1), get(s, WindowId::Y2), persist.get(s)) else {
            continue;
        };
        let row = ClusterStatsRow::build(y1, y2, cross.get(&WindowId::Y1), cross.get(&WindowId::Y2), p);
        stats.push((row, entry.investors));
    }

    let mut mature_rows = Vec::new();
    if !cfg.mature_securities.is_empty() || !manifest.config.mature_securities.is_empty() {
        let matures = if cfg.mature_securities.is_empty() {
            &manifest.config.mature_securities
        } else {
            &cfg.mature_securities
        };
        for &s in &ipo_ids {
            for window in [WindowId::Y1, WindowId::Y2] {
                let Some(ipo) = get(s, window) else { continue };
                let ms: Vec<Partition> = matures
                    .iter()
                    .filter_map(|m| partitions.get(&NetworkId::anchored(m.as_str(), window, s)).cloned())
                    .collect();
                if ms.is_empty() {
                    continue;
                }
                let r = pool.install(|| ipo_vs_mature(ipo, &ms, &fdr))?;
                families.push(family(&r, ipo.network.to_string()));
                mature_rows.push(MatureOverlapRow::build(ipo, &ms, &r));
                results.push(r);
            }
        }
    }

    let mut profiles = Vec::new();
    let mut groups: Vec<ExpressedGroups> = Vec::new();
    match (&attributes, cfg.expression) {
        (Some(path), true) => {
            let mut table = parse_attributes(open(path)?)?;
            let nodes: BTreeSet<&str> = partitions
                .values()
                .flat_map(|p| p.clusters.iter().flatten().map(String::as_str))
                .collect();
            let before = table.len();
            complete_attributes(&mut table, nodes.iter().copied());
            if table.len() > before {
                outcome.notices.push(format!(
                    "{} investors without attribute records use sentinel values",
                    table.len() - before
                ));
            }
            let ipo_parts: Vec<&Partition> = ipo_ids
                .iter()
                .flat_map(|s| [get(s, WindowId::Y1), get(s, WindowId::Y2)])
                .flatten()
                .collect();
            profiles = pool.install(|| {
                ipo_parts
                    .par_iter()
                    .map(|p| profile_network(p, &table, &fdr))
                    .collect::<Result<Vec<_>>>()
            })?;
            let sims: Vec<SimilarityResult> = cross.values().cloned().chain(persist.values().cloned()).collect();
            for d in [Direction::Over, Direction::Under] {
                groups.push(group_expressed_clusters(&sims, &profiles, d));
            }
        }
        (None, true) => outcome
            .notices
            .push("no attributes file given; expression analysis skipped".into()),
        _ => {}
    }

    let dir = cfg.out.join(ANALYSIS_DIR);
    mkdir(&dir)?;
    let mut all: Vec<SimilarityResult> = persist.into_values().collect();
    all.extend(cross.into_values());
    all.extend(results);
    write_similarity_csv(create(&dir.join("similarity.csv"))?, &all)?;
    write_cluster_stats_csv(create(&dir.join("cluster_stats.csv"))?, &stats)?;
    let (median, average) = if mature_rows.is_empty() {
        (None, None)
    } else {
        let matures = if cfg.mature_securities.is_empty() {
            &manifest.config.mature_securities
        } else {
            &cfg.mature_securities
        };
        write_mature_overlap_csv(create(&dir.join("mature_overlap.csv"))?, matures, &mature_rows)?;
        let (m, a) = unique_percent_summary(&mature_rows);
        (Some(m), Some(a))
    };
    if cfg.expression && attributes.is_some() {
        write_expression_csv(create(&dir.join("expression.csv"))?, &profiles)?;
        write_json(&dir.join("expressed_groups.json"), &groups)?;
    }
    let summary = AnalysisSummary {
        families,
        cluster_stats: stats.into_iter().map(|(r, _)| r).collect(),
        mature_overlap: mature_rows,
        unique_percent_median: median,
        unique_percent_average: average,
        expression: expression_totals(&profiles),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(outcome)
}

pub const VALIDATION_SUMMARY_HEADER: [&str; 8] = [
    "network",
    "nodes",
    "edges",
    "clusters",
    "codelength",
    "observed",
    "validated",
    "validated_fraction",
];

pub const CURVE_HEADER: [&str; 4] = ["network", "rank", "p_value", "threshold"];

/// Per-network validation counts and the sorted p-value curves against the
/// FDR threshold line.
pub fn cmd_report(cfg: &PipelineConfig) -> Result<Outcome> {
    let manifest = load_manifest(&cfg.out)?;
    let dir = cfg.out.join(REPORT_DIR);
    mkdir(&dir)?;
    let mut summary = csv::Writer::from_writer(create(&dir.join("validation_summary.csv"))?);
    let mut curves = csv::Writer::from_writer(create(&dir.join("pvalue_curves.csv"))?);
    summary.write_record(VALIDATION_SUMMARY_HEADER)?;
    curves.write_record(CURVE_HEADER)?;
    for n in &manifest.networks {
        let r: NetworkReport = read_json(&cfg.out.join(NETWORKS_DIR).join(&n.dir).join("report.json"))?;
        let frac = if r.observed == 0 {
            0.0
        } else {
            r.validated as f64 / r.observed as f64
        };
        let id = n.id.to_string();
        summary.write_record([
            id.clone(),
            n.nodes.to_string(),
            n.edges.to_string(),
            n.clusters.to_string(),
            format!("{:.6}", n.codelength),
            r.observed.to_string(),
            r.validated.to_string(),
            format!("{frac:.6}"),
        ])?;
        for c in &r.curve {
            curves.write_record([
                id.clone(),
                c.rank.to_string(),
                format!("{:e}", c.p_value),
                format!("{:e}", c.threshold),
            ])?;
        }
    }
    summary.flush().map_err(|e| Error::io(&dir, e))?;
    curves.flush().map_err(|e| Error::io(&dir, e))?;
    Ok(Outcome::default())
}

/// Writes a synthetic dataset described by a scenario JSON file.
pub fn cmd_generate(scenario: &Path, out: &Path) -> Result<Outcome> {
    let text = std::fs::read_to_string(scenario)
        .map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", scenario.display())))?;
    let cfg: ScenarioConfig =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", scenario.display())))?;
    let data = generate(&cfg)?;
    write_dataset(out, &data)?;
    Ok(Outcome::default())
}
