//! Pairwise validation of same-state co-occurrences.
//!
//! Two investors are linked in state `P` when the number of days on which both
//! were in `P` is improbably large under a hypergeometric null. All pair/state
//! tests of one security-window form a single FDR family.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdr::{fdr_validate, FdrConfig, FdrMode};
use crate::hypergeom::hypergeom_sf;
use crate::state::{StateMatrix, TradingState, WindowId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniverseMode {
    /// Count days inside the overlap of the two investors' activity periods.
    #[default]
    Intersection,
    /// Count days over the whole window.
    FullWindow,
}

impl std::str::FromStr for UniverseMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().replace('-', "_").as_str() {
            "intersection" => Ok(UniverseMode::Intersection),
            "full_window" | "full" => Ok(UniverseMode::FullWindow),
            other => Err(format!(
                "unknown universe '{other}' (expected intersection or full_window)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub fdr: FdrConfig,
    pub universe: UniverseMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCooccurrence {
    pub investor_i: String,
    pub investor_j: String,
    pub state: TradingState,
    /// Trading days in the counting universe.
    pub t: u64,
    pub n_i: u64,
    pub n_j: u64,
    pub n_ij: u64,
}

impl PairCooccurrence {
    pub fn p_value(&self) -> Result<f64> {
        hypergeom_sf(self.t, self.n_i, self.n_j, self.n_ij)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedLink {
    pub investor_i: String,
    pub investor_j: String,
    pub state: TradingState,
    pub p_value: f64,
}

/// Day bitsets of one investor, one per state, over the matrix's trading days.
struct StateBits {
    bits: [Vec<u64>; 3],
    first: usize,
    last: usize,
}

fn count_range(words: &[u64], lo: usize, hi: usize) -> u64 {
    and_count_range(words, None, lo, hi)
}

/// Popcount of `a & b` (or `a` alone) restricted to bit positions `lo..=hi`.
fn and_count_range(a: &[u64], b: Option<&[u64]>, lo: usize, hi: usize) -> u64 {
    let (wlo, whi) = (lo / 64, hi / 64);
    let mut total = 0u64;
    for w in wlo..=whi {
        let mut word = a[w];
        if let Some(b) = b {
            word &= b[w];
        }
        if w == wlo {
            word &= u64::MAX << (lo % 64);
        }
        if w == whi && hi % 64 != 63 {
            word &= (1u64 << (hi % 64 + 1)) - 1;
        }
        total += u64::from(word.count_ones());
    }
    total
}

fn build_bits(m: &StateMatrix) -> (Vec<&str>, Vec<StateBits>) {
    let n_words = m.trading_days.len().div_ceil(64).max(1);
    let mut ids = Vec::with_capacity(m.states.len());
    let mut rows = Vec::with_capacity(m.states.len());
    for (inv, days) in &m.states {
        let mut bits = [vec![0u64; n_words], vec![0u64; n_words], vec![0u64; n_words]];
        let (mut first, mut last) = (usize::MAX, 0usize);
        for (date, state) in days {
            let Ok(idx) = m.trading_days.binary_search(date) else {
                continue;
            };
            bits[state.index()][idx / 64] |= 1u64 << (idx % 64);
            first = first.min(idx);
            last = last.max(idx);
        }
        if first == usize::MAX {
            continue;
        }
        ids.push(inv.as_str());
        rows.push(StateBits { bits, first, last });
    }
    (ids, rows)
}

/// Every investor pair and state with at least one joint same-state day.
/// Mixed-state coincidences (b with s, and so on) are never counted.
pub fn enumerate_cooccurrences(m: &StateMatrix, universe: UniverseMode) -> Vec<PairCooccurrence> {
    let (ids, rows) = build_bits(m);
    let n_days = m.trading_days.len();
    (0..rows.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let (ids, rows) = (&ids, &rows);
            ((i + 1)..rows.len()).flat_map(move |j| {
                let (a, b) = (&rows[i], &rows[j]);
                let (lo, hi) = match universe {
                    UniverseMode::Intersection => (a.first.max(b.first), a.last.min(b.last)),
                    UniverseMode::FullWindow => (0, n_days.saturating_sub(1)),
                };
                TradingState::ALL.into_iter().filter_map(move |state| {
                    if lo > hi {
                        return None;
                    }
                    let s = state.index();
                    let n_ij = and_count_range(&a.bits[s], Some(&b.bits[s]), lo, hi);
                    (n_ij > 0).then(|| PairCooccurrence {
                        investor_i: ids[i].to_string(),
                        investor_j: ids[j].to_string(),
                        state,
                        t: (hi - lo + 1) as u64,
                        n_i: count_range(&a.bits[s], lo, hi),
                        n_j: count_range(&b.bits[s], lo, hi),
                        n_ij,
                    })
                })
            })
        })
        .collect()
}

/// Validation summary of one security-window, enough to redraw the sorted
/// p-value curve against the FDR threshold line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub security_id: String,
    pub window: WindowId,
    pub universe: UniverseMode,
    pub alpha: f64,
    pub fdr_mode: FdrMode,
    /// Observed (pair, state) co-occurrence relationships; the FDR family size.
    pub observed: usize,
    pub validated: usize,
    /// Threshold at rank `k` is `threshold_slope * k`.
    pub threshold_slope: f64,
    pub sorted_p_values: Vec<f64>,
}

type LinkKey = (String, String, TradingState);

/// Enumerates, tests and FDR-filters all co-occurrences of one matrix.
/// Returned links are sorted by `(p, investor_i, investor_j, state)`.
pub fn validate_security_window(
    m: &StateMatrix,
    cfg: &ValidationConfig,
) -> Result<(Vec<ValidatedLink>, ValidationReport)> {
    cfg.fdr.validate()?;
    let cooc = enumerate_cooccurrences(m, cfg.universe);
    let pvals: Vec<(LinkKey, f64)> = cooc
        .into_par_iter()
        .map(|c| {
            let p = c.p_value()?;
            Ok(((c.investor_i, c.investor_j, c.state), p))
        })
        .collect::<Result<_>>()?;
    let observed = pvals.len();
    let mut sorted_p_values: Vec<f64> = pvals.iter().map(|x| x.1).collect();
    sorted_p_values.sort_by(f64::total_cmp);
    let kept = fdr_validate(pvals, cfg.fdr.alpha, observed, cfg.fdr.mode);
    let links: Vec<ValidatedLink> = kept
        .into_iter()
        .map(|((investor_i, investor_j, state), p_value)| ValidatedLink {
            investor_i,
            investor_j,
            state,
            p_value,
        })
        .collect();
    let report = ValidationReport {
        security_id: m.security_id.clone(),
        window: m.window.id,
        universe: cfg.universe,
        alpha: cfg.fdr.alpha,
        fdr_mode: cfg.fdr.mode,
        observed,
        validated: links.len(),
        threshold_slope: if observed == 0 {
            0.0
        } else {
            cfg.fdr.alpha / observed as f64
        },
        sorted_p_values,
    };
    Ok((links, report))
}

pub const LINKS_HEADER: [&str; 6] = [
    "security_id",
    "window",
    "investor_i",
    "investor_j",
    "state",
    "p_value",
];

pub fn write_links_csv<W: Write>(
    sink: W,
    security_id: &str,
    window: WindowId,
    links: &[ValidatedLink],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(LINKS_HEADER)?;
    for l in links {
        w.write_record([
            security_id,
            window.as_str(),
            &l.investor_i,
            &l.investor_j,
            l.state.as_str(),
            &format!("{:e}", l.p_value),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<links>", e))?;
    Ok(())
}
