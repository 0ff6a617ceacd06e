//! Transaction log parsing, universe filtering, daily aggregation and the
//! IPO-anchored analysis windows.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use chrono::{Days, Months, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

pub const TRANSACTIONS_HEADER: [&str; 6] = [
    "investor_id",
    "security_id",
    "trade_date",
    "buy_volume",
    "sell_volume",
    "registration",
];
pub const ATTRIBUTES_HEADER: [&str; 5] = [
    "investor_id",
    "sector_code",
    "location",
    "gender",
    "birth_decade",
];
pub const CALENDAR_HEADER: [&str; 2] = ["security_id", "ipo_date"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Registration {
    Direct,
    Nominee,
}

impl fmt::Display for Registration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Registration::Direct => "direct",
            Registration::Nominee => "nominee",
        })
    }
}

impl FromStr for Registration {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "direct" => Ok(Registration::Direct),
            "nominee" => Ok(Registration::Nominee),
            other => Err(format!("unknown registration '{other}'")),
        }
    }
}

/// One marketplace trade record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub investor_id: String,
    pub security_id: String,
    pub trade_date: NaiveDate,
    pub buy_volume: u64,
    pub sell_volume: u64,
    pub registration: Registration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputFormat {
    #[default]
    Csv,
    JsonLines,
}

fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).map_err(|e| format!("bad date '{s}': {e}"))
}

fn parse_volume(field: &str, s: &str) -> std::result::Result<u64, String> {
    let v: i64 = s
        .trim()
        .parse()
        .map_err(|_| format!("{field} '{s}' is not an integer"))?;
    if v < 0 {
        return Err(format!("{field} is negative ({v})"));
    }
    Ok(v as u64)
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let found: Vec<&str> = found.iter().map(str::trim).collect();
    if found != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header '{}', found '{}'", expected.join(","), found.join(",")),
        });
    }
    Ok(())
}

fn build_transaction(
    investor: &str,
    security: &str,
    date: &str,
    buy: &str,
    sell: &str,
    registration: &str,
) -> std::result::Result<Transaction, String> {
    let investor_id = investor.trim();
    let security_id = security.trim();
    if investor_id.is_empty() || security_id.is_empty() {
        return Err("empty investor or security id".into());
    }
    let buy_volume = parse_volume("buy_volume", buy)?;
    let sell_volume = parse_volume("sell_volume", sell)?;
    if buy_volume == 0 && sell_volume == 0 {
        return Err("buy_volume and sell_volume are both zero".into());
    }
    Ok(Transaction {
        investor_id: investor_id.to_string(),
        security_id: security_id.to_string(),
        trade_date: parse_date(date)?,
        buy_volume,
        sell_volume,
        registration: registration.parse()?,
    })
}

#[derive(Deserialize)]
struct JsonRow {
    investor_id: String,
    security_id: String,
    trade_date: String,
    buy_volume: i64,
    sell_volume: i64,
    registration: String,
}

/// Parses a transaction log. Line numbers in errors are physical lines of
/// the input (the CSV header is line 1).
pub fn parse_transactions<R: Read>(source: R, format: InputFormat) -> Result<Vec<Transaction>> {
    match format {
        InputFormat::Csv => parse_transactions_csv(source),
        InputFormat::JsonLines => parse_transactions_jsonl(source),
    }
}

fn parse_transactions_csv<R: Read>(source: R) -> Result<Vec<Transaction>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    check_header(rdr.headers()?, &TRANSACTIONS_HEADER)?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != TRANSACTIONS_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected 6 fields, found {}", record.len()),
            });
        }
        let txn = build_transaction(
            &record[0], &record[1], &record[2], &record[3], &record[4], &record[5],
        )
        .map_err(|message| Error::Parse { line, message })?;
        out.push(txn);
    }
    Ok(out)
}

fn parse_transactions_jsonl<R: Read>(source: R) -> Result<Vec<Transaction>> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(source).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let txn = build_transaction(
            &row.investor_id,
            &row.security_id,
            &row.trade_date,
            &row.buy_volume.to_string(),
            &row.sell_volume.to_string(),
            &row.registration,
        )
        .map_err(|message| Error::Parse {
            line: line_no,
            message,
        })?;
        out.push(txn);
    }
    Ok(out)
}

pub fn write_transactions<W: Write>(sink: W, txns: &[Transaction]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(TRANSACTIONS_HEADER)?;
    for t in txns {
        w.write_record([
            t.investor_id.as_str(),
            t.security_id.as_str(),
            &t.trade_date.format(DATE_FORMAT).to_string(),
            &t.buy_volume.to_string(),
            &t.sell_volume.to_string(),
            &t.registration.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<transactions>", e))?;
    Ok(())
}

/// Drops nominee-registered trades when `exclude_nominee` is set.
pub fn filter_universe(txns: Vec<Transaction>, exclude_nominee: bool) -> Vec<Transaction> {
    if !exclude_nominee {
        return txns;
    }
    txns.into_iter()
        .filter(|t| t.registration != Registration::Nominee)
        .collect()
}

/// Summed buys and sells of one investor in one security on one day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyNetVolume {
    pub investor_id: String,
    pub security_id: String,
    pub date: NaiveDate,
    pub total_buy: u64,
    pub total_sell: u64,
}

/// Aggregates trades to one record per (investor, security, date). Output is
/// sorted by security, investor, date.
pub fn aggregate_daily(txns: &[Transaction]) -> Vec<DailyNetVolume> {
    let mut acc: BTreeMap<(&str, &str, NaiveDate), (u64, u64)> = BTreeMap::new();
    for t in txns {
        let e = acc
            .entry((t.security_id.as_str(), t.investor_id.as_str(), t.trade_date))
            .or_default();
        e.0 += t.buy_volume;
        e.1 += t.sell_volume;
    }
    acc.into_iter()
        .filter(|(_, (b, s))| b + s > 0)
        .map(|((security, investor, date), (total_buy, total_sell))| DailyNetVolume {
            investor_id: investor.to_string(),
            security_id: security.to_string(),
            date,
            total_buy,
            total_sell,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sector {
    Households,
    NonFinancial,
    FinancialInsurance,
    GeneralGovernment,
    NonProfit,
    RestWorld,
    /// Sentinel for investors without any attribute record.
    Unknown,
}

impl Sector {
    pub const ALL: [Sector; 7] = [
        Sector::Households,
        Sector::NonFinancial,
        Sector::FinancialInsurance,
        Sector::GeneralGovernment,
        Sector::NonProfit,
        Sector::RestWorld,
        Sector::Unknown,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Sector::Households => "Households",
            Sector::NonFinancial => "NonFinancial",
            Sector::FinancialInsurance => "FinancialInsurance",
            Sector::GeneralGovernment => "GeneralGovernment",
            Sector::NonProfit => "NonProfit",
            Sector::RestWorld => "RestWorld",
            Sector::Unknown => "Unknown",
        }
    }
}

fn normalize_token(s: &str) -> String {
    s.trim()
        .chars()
        .filter(|c| !matches!(c, '-' | '_' | ' '))
        .flat_map(char::to_lowercase)
        .collect()
}

impl FromStr for Sector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let n = normalize_token(s);
        Sector::ALL
            .into_iter()
            .find(|v| v.as_str().to_ascii_lowercase() == n)
            .ok_or_else(|| format!("unknown sector code '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    Male,
    Female,
    NoGender,
}

impl Gender {
    pub fn as_str(&self) -> &'static str {
        match self {
            Gender::Male => "Male",
            Gender::Female => "Female",
            Gender::NoGender => "NoGender",
        }
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match normalize_token(s).as_str() {
            "male" | "m" => Ok(Gender::Male),
            "female" | "f" => Ok(Gender::Female),
            "nogender" | "" => Ok(Gender::NoGender),
            _ => Err(format!("unknown gender '{s}'")),
        }
    }
}

pub const NO_AGE: &str = "NoAge";
pub const NO_LOCATION: &str = "NoLocation";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvestorAttributes {
    pub investor_id: String,
    pub sector_code: Sector,
    pub location: String,
    pub gender: Gender,
    /// A decade such as `1970`, or [`NO_AGE`].
    pub birth_decade: String,
}

impl InvestorAttributes {
    /// Record used for investors that appear in trades but not in the
    /// attributes file.
    pub fn sentinel(investor_id: &str) -> Self {
        InvestorAttributes {
            investor_id: investor_id.to_string(),
            sector_code: Sector::Unknown,
            location: NO_LOCATION.to_string(),
            gender: Gender::NoGender,
            birth_decade: NO_AGE.to_string(),
        }
    }
}

pub type AttributeTable = BTreeMap<String, InvestorAttributes>;

fn parse_decade(s: &str) -> std::result::Result<String, String> {
    let t = s.trim();
    if t.is_empty() || normalize_token(t) == "noage" {
        return Ok(NO_AGE.to_string());
    }
    let year: i32 = t.parse().map_err(|_| format!("bad birth decade '{s}'"))?;
    Ok((year - year.rem_euclid(10)).to_string())
}

pub fn parse_attributes<R: Read>(source: R) -> Result<AttributeTable> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    check_header(rdr.headers()?, &ATTRIBUTES_HEADER)?;
    let mut out = AttributeTable::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let parse = || -> std::result::Result<InvestorAttributes, String> {
            if record.len() != ATTRIBUTES_HEADER.len() {
                return Err(format!("expected 5 fields, found {}", record.len()));
            }
            let location = record[2].trim();
            Ok(InvestorAttributes {
                investor_id: record[0].trim().to_string(),
                sector_code: record[1].parse()?,
                location: if location.is_empty() {
                    NO_LOCATION.to_string()
                } else {
                    location.to_string()
                },
                gender: record[3].parse()?,
                birth_decade: parse_decade(&record[4])?,
            })
        };
        let attrs = parse().map_err(|message| Error::Parse { line, message })?;
        if out.contains_key(&attrs.investor_id) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate attribute record for {}", attrs.investor_id),
            });
        }
        out.insert(attrs.investor_id.clone(), attrs);
    }
    Ok(out)
}

pub fn write_attributes<W: Write>(sink: W, attrs: &AttributeTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(ATTRIBUTES_HEADER)?;
    for a in attrs.values() {
        w.write_record([
            a.investor_id.as_str(),
            a.sector_code.as_str(),
            a.location.as_str(),
            a.gender.as_str(),
            a.birth_decade.as_str(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<attributes>", e))?;
    Ok(())
}

/// Fills in sentinel records for every traded investor lacking attributes.
pub fn complete_attributes<'a>(
    table: &mut AttributeTable,
    investors: impl IntoIterator<Item = &'a str>,
) {
    for id in investors {
        if !table.contains_key(id) {
            table.insert(id.to_string(), InvestorAttributes::sentinel(id));
        }
    }
}

/// Listing dates keyed by security id.
pub fn parse_calendar<R: Read>(source: R) -> Result<BTreeMap<String, NaiveDate>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    check_header(rdr.headers()?, &CALENDAR_HEADER)?;
    let mut out = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let date = parse_date(&record[1]).map_err(|message| Error::Parse { line, message })?;
        if out.insert(record[0].trim().to_string(), date).is_some() {
            return Err(Error::Parse {
                line,
                message: format!("duplicate calendar entry for {}", record[0].trim()),
            });
        }
    }
    Ok(out)
}

pub fn write_calendar<W: Write>(sink: W, calendar: &BTreeMap<String, NaiveDate>) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(CALENDAR_HEADER)?;
    for (sec, date) in calendar {
        w.write_record([sec.as_str(), &date.format(DATE_FORMAT).to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<calendar>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecurityCalendar {
    pub security_id: String,
    pub ipo_date: NaiveDate,
    /// Strictly increasing dates with at least one trade in the security.
    pub trading_days: Vec<NaiveDate>,
}

impl SecurityCalendar {
    /// Collects the trading days of `security_id` from aggregated records,
    /// keeping only those in `[ipo_date, until)`.
    pub fn from_daily(
        security_id: &str,
        ipo_date: NaiveDate,
        daily: &[DailyNetVolume],
        until: NaiveDate,
    ) -> Self {
        let mut days: Vec<NaiveDate> = daily
            .iter()
            .filter(|d| d.security_id == security_id && d.date >= ipo_date && d.date < until)
            .map(|d| d.date)
            .collect();
        days.sort_unstable();
        days.dedup();
        SecurityCalendar {
            security_id: security_id.to_string(),
            ipo_date,
            trading_days: days,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WindowId {
    Y1,
    Y2,
}

impl WindowId {
    pub fn as_str(&self) -> &'static str {
        match self {
            WindowId::Y1 => "Y1",
            WindowId::Y2 => "Y2",
        }
    }
}

impl fmt::Display for WindowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WindowId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "Y1" | "y1" => Ok(WindowId::Y1),
            "Y2" | "y2" => Ok(WindowId::Y2),
            other => Err(format!("unknown window '{other}'")),
        }
    }
}

/// Half-open date range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub id: WindowId,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Window {
    pub fn contains(&self, date: NaiveDate) -> bool {
        date >= self.start && date < self.end
    }

    /// Last calendar day inside the window.
    pub fn last_day(&self) -> NaiveDate {
        self.end - Days::new(1)
    }
}

/// Adds whole months; a day that does not exist in the target month (Feb 29
/// in a non-leap year) resolves to the month's last day.
fn add_months(date: NaiveDate, months: u32) -> NaiveDate {
    date.checked_add_months(Months::new(months))
        .expect("date arithmetic within chrono range")
}

/// Two consecutive calendar windows of `window_months` anchored at the listing
/// date. Fails when the second window reaches past `data_end`.
pub fn build_windows(
    calendar: &SecurityCalendar,
    window_months: u32,
    data_end: NaiveDate,
) -> Result<(Window, Window)> {
    if window_months == 0 {
        return Err(Error::Config("window length must be positive".into()));
    }
    let start = calendar.ipo_date;
    let mid = add_months(start, window_months);
    let end = add_months(start, 2 * window_months);
    let y1 = Window {
        id: WindowId::Y1,
        start,
        end: mid,
    };
    let y2 = Window {
        id: WindowId::Y2,
        start: mid,
        end,
    };
    if y2.last_day() > data_end {
        return Err(Error::TruncatedWindow {
            security: calendar.security_id.clone(),
            window_end: y2.last_day(),
            data_end,
        });
    }
    Ok((y1, y2))
}
