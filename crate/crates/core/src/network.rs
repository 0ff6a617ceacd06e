//! Weighted multilink investor networks built from validated links.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::links::ValidatedLink;
use crate::state::{TradingState, WindowId};

/// Identifies one network: a security and a window. Mature-security networks
/// built over another security's IPO-aligned windows carry that IPO security
/// as `anchor`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NetworkId {
    pub security_id: String,
    pub window: WindowId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<String>,
}

impl NetworkId {
    pub fn new(security_id: impl Into<String>, window: WindowId) -> Self {
        NetworkId {
            security_id: security_id.into(),
            window,
            anchor: None,
        }
    }

    pub fn anchored(security_id: impl Into<String>, window: WindowId, anchor: impl Into<String>) -> Self {
        NetworkId {
            security_id: security_id.into(),
            window,
            anchor: Some(anchor.into()),
        }
    }

    /// File-name friendly label, e.g. `FI0009012843_Y1`.
    pub fn file_stem(&self) -> String {
        match &self.anchor {
            None => format!("{}_{}", self.security_id, self.window),
            Some(a) => format!("{}_{}_at_{}", self.security_id, self.window, a),
        }
    }
}

impl fmt::Display for NetworkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.security_id, self.window)?;
        if let Some(a) = &self.anchor {
            write!(f, "@{a}")?;
        }
        Ok(())
    }
}

impl FromStr for NetworkId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (body, anchor) = match s.split_once('@') {
            Some((b, a)) => (b, Some(a.to_string())),
            None => (s, None),
        };
        let (sec, win) = body
            .rsplit_once(':')
            .ok_or_else(|| format!("bad network id '{s}'"))?;
        Ok(NetworkId {
            security_id: sec.to_string(),
            window: win.parse()?,
            anchor,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    /// Number of distinct validated states on the pair, 1 to 3.
    pub weight: u8,
    pub states: BTreeSet<TradingState>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatedNetwork {
    pub id: NetworkId,
    pub nodes: BTreeSet<String>,
    /// Keyed by `(smaller id, larger id)`.
    pub edges: BTreeMap<(String, String), Edge>,
}

impl ValidatedNetwork {
    pub fn empty(id: NetworkId) -> Self {
        ValidatedNetwork {
            id,
            nodes: BTreeSet::new(),
            edges: BTreeMap::new(),
        }
    }

    /// Adds isolated investors as nodes without edges.
    pub fn with_isolated<'a>(mut self, investors: impl IntoIterator<Item = &'a str>) -> Self {
        self.nodes.extend(investors.into_iter().map(str::to_string));
        self
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn write_edge_list<W: Write>(&self, mut sink: W) -> Result<()> {
        let io = |e| Error::io("<edge list>", e);
        for ((i, j), e) in &self.edges {
            let states: Vec<&str> = e.states.iter().map(TradingState::as_str).collect();
            writeln!(sink, "{i} {j} {} {}", e.weight, states.join(",")).map_err(io)?;
        }
        sink.flush().map_err(io)
    }

    pub fn read_edge_list<R: BufRead>(id: NetworkId, source: R) -> Result<Self> {
        let mut links = Vec::new();
        for (n, line) in source.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<edge list>", e))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse {
                line: n + 1,
                message,
            };
            if fields.len() != 4 {
                return Err(bad(format!("expected 4 fields, found {}", fields.len())));
            }
            let weight: usize = fields[2].parse().map_err(|_| bad("bad weight".into()))?;
            let states = fields[3]
                .split(',')
                .map(|s| s.parse::<TradingState>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(bad)?;
            if states.len() != weight {
                return Err(bad("weight does not match state count".into()));
            }
            links.extend(states.into_iter().map(|state| ValidatedLink {
                investor_i: fields[0].to_string(),
                investor_j: fields[1].to_string(),
                state,
                p_value: 0.0,
            }));
        }
        assemble(id, &links)
    }
}

/// Merges per-state links into one edge per pair, weighted by the number of
/// distinct validated states.
pub fn assemble(id: NetworkId, links: &[ValidatedLink]) -> Result<ValidatedNetwork> {
    let mut net = ValidatedNetwork::empty(id);
    for l in links {
        let key = if l.investor_i <= l.investor_j {
            (l.investor_i.clone(), l.investor_j.clone())
        } else {
            (l.investor_j.clone(), l.investor_i.clone())
        };
        if key.0 == key.1 {
            return Err(Error::Data(format!("self link on {}", key.0)));
        }
        let edge = net.edges.entry(key).or_insert_with(|| Edge {
            weight: 0,
            states: BTreeSet::new(),
        });
        if !edge.states.insert(l.state) {
            return Err(Error::DuplicateLink {
                investor_i: l.investor_i.clone(),
                investor_j: l.investor_j.clone(),
                state: l.state.to_string(),
            });
        }
        edge.weight = edge.states.len() as u8;
    }
    for (i, j) in net.edges.keys() {
        net.nodes.insert(i.clone());
        net.nodes.insert(j.clone());
    }
    Ok(net)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NetworkSummary {
    pub nodes: usize,
    pub edges: usize,
    /// Edge counts for weights 1, 2 and 3.
    pub weight_histogram: [usize; 3],
    /// Connected component sizes, largest first.
    pub component_sizes: Vec<usize>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

pub fn network_stats(n: &ValidatedNetwork) -> NetworkSummary {
    let index: BTreeMap<&str, usize> = n
        .nodes
        .iter()
        .enumerate()
        .map(|(k, id)| (id.as_str(), k))
        .collect();
    let mut parent: Vec<usize> = (0..n.nodes.len()).collect();
    let mut hist = [0usize; 3];
    for ((i, j), e) in &n.edges {
        hist[usize::from(e.weight.clamp(1, 3)) - 1] += 1;
        let (a, b) = (find(&mut parent, index[i.as_str()]), find(&mut parent, index[j.as_str()]));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for x in 0..parent.len() {
        *sizes.entry(find(&mut parent, x)).or_default() += 1;
    }
    let mut component_sizes: Vec<usize> = sizes.into_values().collect();
    component_sizes.sort_unstable_by(|a, b| b.cmp(a));
    NetworkSummary {
        nodes: n.nodes.len(),
        edges: n.edges.len(),
        weight_histogram: hist,
        component_sizes,
    }
}
