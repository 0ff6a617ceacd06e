//! Synthetic transaction datasets with known ground truth.
//!
//! Noise traders act independently: on each trading day an investor trades
//! with probability `noise_rate`, choosing buy, sell or mixed uniformly.
//! Planted groups pick `shared_days` random trading days in every
//! (security, window) they span, and on each of those days every member
//! trades the group's state with probability `sync_prob`. Volumes are
//! log-uniform integers in `[1, 10^4]`; mixed days carry equal buy and sell
//! volume so the encoded state never depends on the threshold.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use chrono::{Days, Months, NaiveDate};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    write_attributes, write_calendar, write_transactions, AttributeTable, Gender, InvestorAttributes,
    Registration, Sector, Transaction, WindowId, NO_AGE,
};
use crate::links::ValidatedLink;
use crate::network::{assemble, NetworkId, ValidatedNetwork};
use crate::seed;
use crate::state::TradingState;

const MAX_VOLUME: f64 = 10_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecuritySpec {
    pub id: String,
    pub ipo_date: NaiveDate,
    /// Trading days in every 12-month block after the listing date.
    #[serde(default = "default_trading_days")]
    pub trading_days: usize,
    /// Number of 12-month blocks of data.
    #[serde(default = "default_years")]
    pub years: u32,
}

fn default_trading_days() -> usize {
    250
}

fn default_years() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedGroup {
    #[serde(default)]
    pub name: String,
    /// Investor indices in `0..investors`.
    pub members: Vec<usize>,
    pub state: TradingState,
    pub sync_prob: f64,
    pub shared_days: usize,
    pub securities: Vec<String>,
    pub windows: Vec<WindowId>,
    /// Security whose listing date positions the windows; by default each
    /// security's own listing date.
    #[serde(default)]
    pub anchor: Option<String>,
    /// Attribute distributions overriding the base mixture for members, per
    /// class (`sector`, `location`, `gender`, `decade`).
    #[serde(default)]
    pub attributes: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeMixture {
    pub sector: BTreeMap<String, f64>,
    pub location: BTreeMap<String, f64>,
    pub gender: BTreeMap<String, f64>,
    pub decade: BTreeMap<String, f64>,
}

fn dist(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

impl Default for AttributeMixture {
    fn default() -> Self {
        AttributeMixture {
            sector: dist(&[
                ("Households", 0.90),
                ("NonFinancial", 0.05),
                ("FinancialInsurance", 0.02),
                ("GeneralGovernment", 0.01),
                ("NonProfit", 0.01),
                ("RestWorld", 0.01),
            ]),
            location: dist(&[
                ("Helsinki", 0.3),
                ("South-West", 0.2),
                ("Rest-Uusimaa", 0.2),
                ("Ostrobothnia", 0.1),
                ("Central-Finland", 0.1),
                ("South-East", 0.1),
            ]),
            gender: dist(&[("Male", 0.6), ("Female", 0.35), ("NoGender", 0.05)]),
            decade: dist(&[
                ("1940", 0.15),
                ("1950", 0.2),
                ("1960", 0.2),
                ("1970", 0.2),
                ("1980", 0.15),
                ("NoAge", 0.1),
            ]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub investors: usize,
    pub securities: Vec<SecuritySpec>,
    pub noise_rate: f64,
    #[serde(default)]
    pub nominee_investors: usize,
    #[serde(default)]
    pub planted_groups: Vec<PlantedGroup>,
    #[serde(default)]
    pub attributes: AttributeMixture,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlantedPair {
    pub security_id: String,
    pub window: WindowId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<String>,
    pub investor_i: String,
    pub investor_j: String,
    pub state: TradingState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedCluster {
    pub group: String,
    pub network: NetworkId,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupTruth {
    pub name: String,
    pub members: Vec<String>,
    pub state: TradingState,
    pub persistent: bool,
    pub cross_security: bool,
    /// Attribute class to the value favoured by the group's distribution.
    pub skews: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub planted_pairs: Vec<PlantedPair>,
    pub planted_clusters: Vec<PlantedCluster>,
    pub groups: Vec<GroupTruth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub transactions: Vec<Transaction>,
    pub attributes: AttributeTable,
    pub calendar: BTreeMap<String, NaiveDate>,
    pub ground_truth: GroundTruth,
}

pub fn investor_id(k: usize) -> String {
    format!("inv{k:05}")
}

fn nominee_id(k: usize) -> String {
    format!("nom{k:04}")
}

fn window_bounds(ipo: NaiveDate, window: WindowId) -> (NaiveDate, NaiveDate) {
    let offset = match window {
        WindowId::Y1 => 0,
        WindowId::Y2 => 12,
    };
    (
        ipo + Months::new(offset),
        ipo + Months::new(offset + 12),
    )
}

/// `n` strictly increasing days spread over `[start, end)`, including the
/// first and the last calendar day.
fn spread_days(start: NaiveDate, end: NaiveDate, n: usize) -> Result<Vec<NaiveDate>> {
    let len = (end - start).num_days() as usize;
    if n > len {
        return Err(Error::Config(format!(
            "{n} trading days do not fit into {len} calendar days"
        )));
    }
    if n == 1 {
        return Ok(vec![start]);
    }
    Ok((0..n)
        .map(|k| start + Days::new(((k * (len - 1)) as f64 / (n - 1) as f64).round() as u64))
        .collect())
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return bad(format!("noise_rate {} outside [0, 1]", self.noise_rate));
        }
        let mut ids = BTreeSet::new();
        for s in &self.securities {
            if !ids.insert(s.id.as_str()) {
                return bad(format!("duplicate security {}", s.id));
            }
            if s.years == 0 || s.trading_days == 0 {
                return bad(format!("security {} has no trading days", s.id));
            }
        }
        for g in &self.planted_groups {
            if !(0.0..=1.0).contains(&g.sync_prob) {
                return bad(format!("group {}: sync_prob outside [0, 1]", g.name));
            }
            if let Some(&m) = g.members.iter().find(|&&m| m >= self.investors) {
                return bad(format!("group {}: member {m} out of range", g.name));
            }
            if let Some(a) = &g.anchor {
                if !ids.contains(a.as_str()) {
                    return bad(format!("group {}: unknown anchor {a}", g.name));
                }
            }
            for s in &g.securities {
                let Some(spec) = self.securities.iter().find(|x| &x.id == s) else {
                    return bad(format!("group {}: unknown security {s}", g.name));
                };
                if g.shared_days > spec.trading_days {
                    return bad(format!(
                        "group {}: {} shared days exceed {} trading days of {s}",
                        g.name, g.shared_days, spec.trading_days
                    ));
                }
            }
            for class in g.attributes.keys() {
                if !["sector", "location", "gender", "decade"].contains(&class.as_str()) {
                    return bad(format!("group {}: unknown attribute class {class}", g.name));
                }
            }
        }
        for (class, d) in self.attribute_classes() {
            if d.is_empty() || d.values().any(|&w| w < 0.0) || d.values().sum::<f64>() <= 0.0 {
                return bad(format!("attribute class {class} needs positive weights"));
            }
        }
        Ok(())
    }

    fn attribute_classes(&self) -> [(&'static str, &BTreeMap<String, f64>); 4] {
        [
            ("sector", &self.attributes.sector),
            ("location", &self.attributes.location),
            ("gender", &self.attributes.gender),
            ("decade", &self.attributes.decade),
        ]
    }

    fn group_name(&self, k: usize) -> String {
        let g = &self.planted_groups[k];
        if g.name.is_empty() {
            format!("group{k}")
        } else {
            g.name.clone()
        }
    }
}

fn sample_value(rng: &mut ChaCha8Rng, d: &BTreeMap<String, f64>) -> Result<String> {
    let keys: Vec<&String> = d.keys().collect();
    let w = WeightedIndex::new(d.values()).map_err(|e| Error::Config(e.to_string()))?;
    Ok(keys[w.sample(rng)].clone())
}

fn volume(rng: &mut ChaCha8Rng) -> u64 {
    let v = rng.gen_range(0.0..MAX_VOLUME.ln()).exp().round();
    (v as u64).clamp(1, MAX_VOLUME as u64)
}

fn random_state(rng: &mut ChaCha8Rng) -> TradingState {
    TradingState::ALL[rng.gen_range(0..3)]
}

fn emit(
    out: &mut Vec<Transaction>,
    rng: &mut ChaCha8Rng,
    investor: &str,
    security: &str,
    date: NaiveDate,
    state: TradingState,
    registration: Registration,
) {
    let mut push = |buy: u64, sell: u64| {
        out.push(Transaction {
            investor_id: investor.to_string(),
            security_id: security.to_string(),
            trade_date: date,
            buy_volume: buy,
            sell_volume: sell,
            registration,
        })
    };
    let v = volume(rng);
    match state {
        TradingState::Buy | TradingState::Sell => {
            // occasionally split a day's volume over two trades
            let parts = if v > 1 && rng.gen_bool(0.2) {
                let first = rng.gen_range(1..v);
                vec![first, v - first]
            } else {
                vec![v]
            };
            for p in parts {
                if state == TradingState::Buy {
                    push(p, 0);
                } else {
                    push(0, p);
                }
            }
        }
        TradingState::BuySell => {
            push(v, 0);
            push(0, v);
        }
    }
}

fn dominant(d: &BTreeMap<String, f64>) -> Option<String> {
    d.iter()
        .max_by(|a, b| a.1.total_cmp(b.1).then_with(|| b.0.cmp(a.0)))
        .map(|(k, _)| k.clone())
}

/// Builds the dataset. Deterministic for a fixed config.
pub fn generate(cfg: &ScenarioConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, "synthetic"));
    let specs: BTreeMap<&str, &SecuritySpec> = cfg.securities.iter().map(|s| (s.id.as_str(), s)).collect();

    // trading days per security
    let mut days: BTreeMap<&str, Vec<NaiveDate>> = BTreeMap::new();
    for s in &cfg.securities {
        let mut all = Vec::new();
        for y in 0..s.years {
            let start = s.ipo_date + Months::new(12 * y);
            let end = s.ipo_date + Months::new(12 * (y + 1));
            all.extend(spread_days(start, end, s.trading_days)?);
        }
        days.insert(s.id.as_str(), all);
    }

    // forced states from planted groups: (security, day index, investor) -> state
    let mut forced: HashMap<(&str, usize, usize), TradingState> = HashMap::new();
    let mut truth = GroundTruth::default();
    for (k, g) in cfg.planted_groups.iter().enumerate() {
        let name = cfg.group_name(k);
        let members: Vec<String> = g.members.iter().map(|&m| investor_id(m)).collect();
        for sec in &g.securities {
            let sec_days = &days[sec.as_str()];
            for &window in &g.windows {
                let anchor_date = specs[g.anchor.as_deref().unwrap_or(sec)].ipo_date;
                let (start, end) = window_bounds(anchor_date, window);
                let eligible: Vec<usize> = (0..sec_days.len())
                    .filter(|&d| sec_days[d] >= start && sec_days[d] < end)
                    .collect();
                if g.shared_days > eligible.len() {
                    return Err(Error::Config(format!(
                        "group {name}: {} shared days but only {} trading days of {sec} in {window}",
                        g.shared_days,
                        eligible.len()
                    )));
                }
                let chosen: BTreeSet<usize> = sample(&mut rng, eligible.len(), g.shared_days)
                    .into_iter()
                    .map(|i| eligible[i])
                    .collect();
                for &d in &chosen {
                    for &m in &g.members {
                        if rng.gen_bool(g.sync_prob) {
                            forced.entry((sec.as_str(), d, m)).or_insert(g.state);
                        }
                    }
                }
                let anchor = g.anchor.clone().filter(|a| a != sec);
                let network = NetworkId {
                    security_id: sec.clone(),
                    window,
                    anchor: anchor.clone(),
                };
                for (a, i) in members.iter().enumerate() {
                    for j in &members[a + 1..] {
                        let (x, y) = if i < j { (i, j) } else { (j, i) };
                        truth.planted_pairs.push(PlantedPair {
                            security_id: sec.clone(),
                            window,
                            anchor: anchor.clone(),
                            investor_i: x.clone(),
                            investor_j: y.clone(),
                            state: g.state,
                        });
                    }
                }
                let mut sorted = members.clone();
                sorted.sort();
                truth.planted_clusters.push(PlantedCluster {
                    group: name.clone(),
                    network,
                    members: sorted,
                });
            }
        }
        let windows: BTreeSet<_> = g.windows.iter().collect();
        let skews = g
            .attributes
            .iter()
            .filter_map(|(class, d)| dominant(d).map(|v| (class.clone(), v)))
            .collect();
        truth.groups.push(GroupTruth {
            name,
            members,
            state: g.state,
            persistent: windows.len() >= 2,
            cross_security: g.securities.len() >= 2,
            skews,
        });
    }
    truth.planted_pairs.sort();
    truth.planted_pairs.dedup();

    let mut transactions = Vec::new();
    let total_investors = cfg.investors + cfg.nominee_investors;
    for s in &cfg.securities {
        let sec = s.id.as_str();
        for (d, &date) in days[sec].iter().enumerate() {
            let before = transactions.len();
            for k in 0..total_investors {
                let (id, registration) = if k < cfg.investors {
                    (investor_id(k), Registration::Direct)
                } else {
                    (nominee_id(k - cfg.investors), Registration::Nominee)
                };
                let noise = rng.gen_bool(cfg.noise_rate);
                let state = match forced.get(&(sec, d, k)) {
                    Some(&st) => Some(st),
                    None if noise => Some(random_state(&mut rng)),
                    None => None,
                };
                if let Some(st) = state {
                    emit(&mut transactions, &mut rng, &id, sec, date, st, registration);
                }
            }
            if transactions.len() == before && cfg.investors > 0 {
                // every listed day carries at least one trade
                let k = rng.gen_range(0..cfg.investors);
                let st = random_state(&mut rng);
                emit(&mut transactions, &mut rng, &investor_id(k), sec, date, st, Registration::Direct);
            }
        }
    }

    let mut owner: HashMap<usize, usize> = HashMap::new();
    for (k, g) in cfg.planted_groups.iter().enumerate() {
        for &m in &g.members {
            owner.entry(m).or_insert(k);
        }
    }
    let mut attributes = AttributeTable::new();
    for k in 0..total_investors {
        let id = if k < cfg.investors {
            investor_id(k)
        } else {
            nominee_id(k - cfg.investors)
        };
        let group = owner.get(&k).map(|&g| &cfg.planted_groups[g]);
        let mut pick = |class: &str, base: &BTreeMap<String, f64>| {
            let d = group.and_then(|g| g.attributes.get(class)).unwrap_or(base);
            sample_value(&mut rng, d)
        };
        let sector = pick("sector", &cfg.attributes.sector)?;
        let location = pick("location", &cfg.attributes.location)?;
        let gender = pick("gender", &cfg.attributes.gender)?;
        let decade = pick("decade", &cfg.attributes.decade)?;
        attributes.insert(
            id.clone(),
            InvestorAttributes {
                investor_id: id,
                sector_code: sector.parse::<Sector>().map_err(Error::Config)?,
                location,
                gender: gender.parse::<Gender>().map_err(Error::Config)?,
                birth_decade: if decade == NO_AGE { NO_AGE.to_string() } else { decade },
            },
        );
    }

    let calendar = cfg.securities.iter().map(|s| (s.id.clone(), s.ipo_date)).collect();
    Ok(Dataset {
        transactions,
        attributes,
        calendar,
        ground_truth: truth,
    })
}

pub const TRANSACTIONS_FILE: &str = "transactions.csv";
pub const ATTRIBUTES_FILE: &str = "attributes.csv";
pub const CALENDAR_FILE: &str = "calendar.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Writes the dataset as the ingest CSV formats plus ground-truth JSON.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_transactions(create(&dir.join(TRANSACTIONS_FILE))?, &data.transactions)?;
    write_attributes(create(&dir.join(ATTRIBUTES_FILE))?, &data.attributes)?;
    write_calendar(create(&dir.join(CALENDAR_FILE))?, &data.calendar)?;
    let mut truth = serde_json::to_string_pretty(&data.ground_truth)?;
    truth.push('\n');
    let path = dir.join(GROUND_TRUTH_FILE);
    std::fs::write(&path, truth).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// Planted-partition network over groups of the given sizes: intra-group
/// pairs are linked with probability `p_in` and weight 1 to 3, inter-group
/// pairs with probability `p_out` and weight 1. Returns the network and the
/// planted group of every node.
pub fn planted_partition_network(
    id: NetworkId,
    sizes: &[usize],
    p_in: f64,
    p_out: f64,
    seed: u64,
) -> Result<(ValidatedNetwork, BTreeMap<String, usize>)> {
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) {
        return Err(Error::Config("link probabilities must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let group: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(g, &s)| std::iter::repeat(g).take(s))
        .collect();
    let name = |i: usize| format!("v{i:05}");
    let mut links = Vec::new();
    for i in 0..group.len() {
        for j in (i + 1)..group.len() {
            let weight = if group[i] == group[j] {
                if !rng.gen_bool(p_in) {
                    continue;
                }
                rng.gen_range(1..=3usize)
            } else {
                if !rng.gen_bool(p_out) {
                    continue;
                }
                1
            };
            for &state in &TradingState::ALL[..weight] {
                links.push(ValidatedLink {
                    investor_i: name(i),
                    investor_j: name(j),
                    state,
                    p_value: 0.0,
                });
            }
        }
    }
    let net = assemble(id, &links)?;
    let truth = (0..group.len()).map(|i| (name(i), group[i])).collect();
    Ok((net, truth))
}
