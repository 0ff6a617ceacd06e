//! Daily trading states from net volumes, and the per-window state matrix.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DailyNetVolume, Window, DATE_FORMAT};

pub use crate::ingest::WindowId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TradingState {
    /// Primarily buying.
    #[serde(rename = "b")]
    Buy,
    /// Primarily selling.
    #[serde(rename = "s")]
    Sell,
    /// Buying and selling in comparable amounts.
    #[serde(rename = "bs")]
    BuySell,
}

impl TradingState {
    pub const ALL: [TradingState; 3] = [TradingState::Buy, TradingState::Sell, TradingState::BuySell];

    pub fn as_str(&self) -> &'static str {
        match self {
            TradingState::Buy => "b",
            TradingState::Sell => "s",
            TradingState::BuySell => "bs",
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            TradingState::Buy => 0,
            TradingState::Sell => 1,
            TradingState::BuySell => 2,
        }
    }
}

impl fmt::Display for TradingState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TradingState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "b" => Ok(TradingState::Buy),
            "s" => Ok(TradingState::Sell),
            "bs" => Ok(TradingState::BuySell),
            other => Err(format!("unknown trading state '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub theta: f64,
    pub min_active_days: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            theta: 0.25,
            min_active_days: 5,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Config(format!(
                "theta must lie in (0, 1), got {}",
                self.theta
            )));
        }
        if self.min_active_days < 1 {
            return Err(Error::Config("min_active_days must be at least 1".into()));
        }
        Ok(())
    }
}

/// `(buy - sell) / (buy + sell)`, in `[-1, 1]`.
pub fn scaled_net_ratio(total_buy: u64, total_sell: u64) -> Result<f64> {
    if total_buy == 0 && total_sell == 0 {
        return Err(Error::UndefinedRatio);
    }
    let (b, s) = (total_buy as f64, total_sell as f64);
    Ok((b - s) / (b + s))
}

/// Threshold rule on a precomputed ratio; `|r| == theta` is [`TradingState::BuySell`].
pub fn assign_state(r: f64, theta: f64) -> TradingState {
    if r > theta {
        TradingState::Buy
    } else if r < -theta {
        TradingState::Sell
    } else {
        TradingState::BuySell
    }
}

/// `theta == num / den` exactly in `f64`, with a small denominator.
fn rational_theta(theta: f64) -> Option<(i128, i128)> {
    (1..=1000i128).find_map(|den| {
        let num = (theta * den as f64).round() as i128;
        (num as f64 / den as f64 == theta).then_some((num, den))
    })
}

/// State of a day with the given volumes. The threshold comparison is done
/// in exact integer arithmetic whenever theta is a small-denominator ratio.
pub fn classify(total_buy: u64, total_sell: u64, theta: f64) -> Result<TradingState> {
    let r = scaled_net_ratio(total_buy, total_sell)?;
    let Some((num, den)) = rational_theta(theta) else {
        return Ok(assign_state(r, theta));
    };
    let diff = (total_buy as i128 - total_sell as i128) * den;
    let bound = num * (total_buy as i128 + total_sell as i128);
    Ok(if diff > bound {
        TradingState::Buy
    } else if diff < -bound {
        TradingState::Sell
    } else {
        TradingState::BuySell
    })
}

/// Trading states of every active investor in one security and window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMatrix {
    pub security_id: String,
    pub window: Window,
    /// Days in the window on which the security traded at all, increasing.
    pub trading_days: Vec<NaiveDate>,
    pub states: BTreeMap<String, BTreeMap<NaiveDate, TradingState>>,
}

impl StateMatrix {
    pub fn empty(security_id: &str, window: Window) -> Self {
        StateMatrix {
            security_id: security_id.to_string(),
            window,
            trading_days: Vec::new(),
            states: BTreeMap::new(),
        }
    }

    pub fn activity_count(&self, investor: &str) -> usize {
        self.states.get(investor).map_or(0, BTreeMap::len)
    }

    pub fn investor_count(&self) -> usize {
        self.states.len()
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["investor_id", "date", "state"])?;
        for (inv, days) in &self.states {
            for (date, state) in days {
                w.write_record([
                    inv.as_str(),
                    &date.format(DATE_FORMAT).to_string(),
                    state.as_str(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<states>", e))?;
        Ok(())
    }
}

/// Assigns one state per (investor, day) of `security_id` inside `window`.
/// The matrix's trading days are the in-window days carrying any record.
pub fn encode(
    security_id: &str,
    daily: &[DailyNetVolume],
    cfg: &EncoderConfig,
    window: Window,
) -> Result<StateMatrix> {
    let mut m = StateMatrix::empty(security_id, window);
    let mut days = Vec::new();
    for rec in daily
        .iter()
        .filter(|r| r.security_id == security_id && window.contains(r.date))
    {
        let state = classify(rec.total_buy, rec.total_sell, cfg.theta)?;
        days.push(rec.date);
        m.states
            .entry(rec.investor_id.clone())
            .or_default()
            .insert(rec.date, state);
    }
    days.sort_unstable();
    days.dedup();
    m.trading_days = days;
    Ok(m)
}

/// Keeps investors active on at least `min_days` days in either window, and
/// restricts both matrices to that same investor set.
pub fn filter_active(
    m_y1: &StateMatrix,
    m_y2: &StateMatrix,
    min_days: usize,
) -> (StateMatrix, StateMatrix) {
    let keep = |inv: &String| {
        m_y1.activity_count(inv) >= min_days || m_y2.activity_count(inv) >= min_days
    };
    let restrict = |m: &StateMatrix| StateMatrix {
        security_id: m.security_id.clone(),
        window: m.window,
        trading_days: m.trading_days.clone(),
        states: m
            .states
            .iter()
            .filter(|(inv, _)| keep(inv))
            .map(|(inv, days)| (inv.clone(), days.clone()))
            .collect(),
    };
    (restrict(m_y1), restrict(m_y2))
}
