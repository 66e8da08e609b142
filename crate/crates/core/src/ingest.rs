//! Price panels, sector maps and exogenous series.
//!
//! All inputs are CSV with ISO-8601 dates. The union of dates present in a
//! price file is the trading calendar; missing cells stay missing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Months, NaiveDate};
use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum SectorMajor {
    Technology,
    BasicMaterials,
    Finance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum SectorMinor {
    Oil,
    OtherMaterials,
    RealEstate,
    OtherFinance,
}

impl SectorMinor {
    pub fn major(self) -> SectorMajor {
        match self {
            SectorMinor::Oil | SectorMinor::OtherMaterials => SectorMajor::BasicMaterials,
            SectorMinor::RealEstate | SectorMinor::OtherFinance => SectorMajor::Finance,
        }
    }
}

impl fmt::Display for SectorMajor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl fmt::Display for SectorMinor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for SectorMajor {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "Technology" => Ok(SectorMajor::Technology),
            "BasicMaterials" => Ok(SectorMajor::BasicMaterials),
            "Finance" => Ok(SectorMajor::Finance),
            other => Err(format!("unknown sector major `{other}`")),
        }
    }
}

impl FromStr for SectorMinor {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "Oil" => Ok(SectorMinor::Oil),
            "OtherMaterials" => Ok(SectorMinor::OtherMaterials),
            "RealEstate" => Ok(SectorMinor::RealEstate),
            "OtherFinance" => Ok(SectorMinor::OtherFinance),
            other => Err(format!("unknown sector minor `{other}`")),
        }
    }
}

/// Economic sector of a stock, optionally refined to a subsector.
///
/// Used both as an asset's label and as a group selector: a label without
/// a minor selects every asset of its major sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SectorLabel {
    pub major: SectorMajor,
    pub minor: Option<SectorMinor>,
}

impl SectorLabel {
    pub fn new(major: SectorMajor, minor: Option<SectorMinor>) -> Result<Self> {
        if let Some(m) = minor {
            if m.major() != major {
                return Err(Error::Data(format!(
                    "subsector {m} is not valid under sector {major}"
                )));
            }
        }
        Ok(SectorLabel { major, minor })
    }

    pub fn major(major: SectorMajor) -> Self {
        SectorLabel { major, minor: None }
    }

    pub fn minor(minor: SectorMinor) -> Self {
        SectorLabel {
            major: minor.major(),
            minor: Some(minor),
        }
    }

    /// True when an asset labelled `label` belongs to the group `self`.
    pub fn contains(&self, label: &SectorLabel) -> bool {
        self.major == label.major && (self.minor.is_none() || self.minor == label.minor)
    }
}

impl fmt::Display for SectorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.minor {
            Some(m) => write!(f, "{}/{}", self.major, m),
            None => write!(f, "{}", self.major),
        }
    }
}

impl FromStr for SectorLabel {
    type Err = String;

    /// Accepts `Major` or `Major/Minor`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (major, minor) = match s.split_once('/') {
            Some((a, b)) => (a.parse::<SectorMajor>()?, Some(b.parse::<SectorMinor>()?)),
            None => (s.parse::<SectorMajor>()?, None),
        };
        SectorLabel::new(major, minor).map_err(|e| e.to_string())
    }
}

impl Serialize for SectorLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum AssetKind {
    Stock,
    Index,
}

impl fmt::Display for AssetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssetRecord {
    pub id: String,
    pub kind: AssetKind,
    /// Always set for classified stocks; indices carry no sector.
    pub sector: Option<SectorLabel>,
}

impl AssetRecord {
    pub fn stock(id: impl Into<String>, sector: SectorLabel) -> Self {
        AssetRecord {
            id: id.into(),
            kind: AssetKind::Stock,
            sector: Some(sector),
        }
    }

    pub fn index(id: impl Into<String>) -> Self {
        AssetRecord {
            id: id.into(),
            kind: AssetKind::Index,
            sector: None,
        }
    }

    pub fn unclassified(id: impl Into<String>) -> Self {
        AssetRecord {
            id: id.into(),
            kind: AssetKind::Stock,
            sector: None,
        }
    }

    pub fn in_sector(&self, group: &SectorLabel) -> bool {
        self.kind == AssetKind::Stock && self.sector.is_some_and(|s| group.contains(&s))
    }
}

/// Indices of the stocks in `assets` that belong to `group`.
pub fn members_of(assets: &[AssetRecord], group: &SectorLabel) -> Vec<usize> {
    assets
        .iter()
        .enumerate()
        .filter(|(_, a)| a.in_sector(group))
        .map(|(i, _)| i)
        .collect()
}

/// Classification read from a sector map file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssetClass {
    Stock(SectorLabel),
    Index,
}

pub type SectorMap = BTreeMap<String, AssetClass>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceFormat {
    Long,
    Wide,
}

impl FromStr for PriceFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "long" => Ok(PriceFormat::Long),
            "wide" => Ok(PriceFormat::Wide),
            other => Err(format!(
                "unknown price format `{other}` (expected long or wide)"
            )),
        }
    }
}

fn check_unique_ids(assets: &[AssetRecord]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for a in assets {
        if !seen.insert(a.id.as_str()) {
            return Err(Error::Data(format!("duplicate asset id `{}`", a.id)));
        }
    }
    Ok(())
}

fn check_dates_increasing(dates: &[NaiveDate]) -> Result<()> {
    if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
        return Err(Error::Data(format!(
            "dates not strictly increasing at {}",
            w[1]
        )));
    }
    Ok(())
}

/// Adjusted close prices, dates × assets, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    dates: Vec<NaiveDate>,
    assets: Vec<AssetRecord>,
    prices: Vec<Option<f64>>,
}

impl PricePanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        assets: Vec<AssetRecord>,
        prices: Vec<Option<f64>>,
    ) -> Result<Self> {
        if prices.len() != dates.len() * assets.len() {
            return Err(Error::Argument(format!(
                "price matrix has {} cells, expected {} x {}",
                prices.len(),
                dates.len(),
                assets.len()
            )));
        }
        check_dates_increasing(&dates)?;
        check_unique_ids(&assets)?;
        for (t, row) in prices.chunks(assets.len().max(1)).enumerate() {
            for (i, p) in row.iter().enumerate() {
                if let Some(p) = p {
                    if !(p.is_finite() && *p > 0.0) {
                        return Err(Error::Data(format!(
                            "non-positive price {p} for asset `{}` on {}",
                            assets[i].id, dates[t]
                        )));
                    }
                }
            }
        }
        Ok(PricePanel {
            dates,
            assets,
            prices,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[AssetRecord] {
        &self.assets
    }

    pub fn price(&self, t: usize, i: usize) -> Option<f64> {
        self.prices[t * self.assets.len() + i]
    }

    /// Attach sector classifications. Every asset in the panel must be
    /// listed in the map.
    pub fn apply_sector_map(&mut self, map: &SectorMap) -> Result<()> {
        classify_assets(&mut self.assets, map)
    }
}

/// Set kind and sector of every asset from `map`; unlisted assets are an
/// error.
pub fn classify_assets(assets: &mut [AssetRecord], map: &SectorMap) -> Result<()> {
    for asset in assets {
        match map.get(&asset.id) {
            Some(AssetClass::Stock(label)) => {
                asset.kind = AssetKind::Stock;
                asset.sector = Some(*label);
            }
            Some(AssetClass::Index) => {
                asset.kind = AssetKind::Index;
                asset.sector = None;
            }
            None => {
                return Err(Error::Data(format!(
                    "asset `{}` has no entry in the sector map",
                    asset.id
                )))
            }
        }
    }
    Ok(())
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(false)
        .from_reader(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::parse(path, line, format!("{kind:?}")),
    }
}

fn parse_price(path: &Path, line: u64, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::parse(path, line, format!("invalid price `{s}`")))
}

pub fn load_prices(path: impl AsRef<Path>, format: PriceFormat) -> Result<PricePanel> {
    let path = path.as_ref();
    match format {
        PriceFormat::Long => load_long(path),
        PriceFormat::Wide => load_wide(path),
    }
}

fn load_long(path: &Path) -> Result<PricePanel> {
    let mut rdr = open_csv(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["date", "asset_id", "adjusted_close"] {
        return Err(Error::parse(
            path,
            1,
            "expected header `date,asset_id,adjusted_close`",
        ));
    }
    let mut cells: BTreeMap<(NaiveDate, String), f64> = BTreeMap::new();
    let mut asset_ids = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let date = parse_date(&rec[0])
            .ok_or_else(|| Error::parse(path, line, format!("invalid date `{}`", &rec[0])))?;
        let id = rec[1].to_string();
        if id.is_empty() {
            return Err(Error::parse(path, line, "empty asset_id"));
        }
        let price = parse_price(path, line, &rec[2])?;
        if !(price.is_finite() && price > 0.0) {
            return Err(Error::Data(format!(
                "non-positive price {price} for asset `{id}` on {date} (line {line})"
            )));
        }
        asset_ids.insert(id.clone());
        if cells.insert((date, id.clone()), price).is_some() {
            return Err(Error::Data(format!(
                "duplicate entry for asset `{id}` on {date} (line {line})"
            )));
        }
    }
    let dates: Vec<NaiveDate> = cells
        .keys()
        .map(|(d, _)| *d)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let ids: Vec<String> = asset_ids.into_iter().collect();
    let mut prices = Vec::with_capacity(dates.len() * ids.len());
    for d in &dates {
        for id in &ids {
            prices.push(cells.get(&(*d, id.clone())).copied());
        }
    }
    let assets = ids.into_iter().map(AssetRecord::unclassified).collect();
    PricePanel::new(dates, assets, prices)
}

fn load_wide(path: &Path) -> Result<PricePanel> {
    let mut rdr = open_csv(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.get(0) != Some("date") {
        return Err(Error::parse(path, 1, "first column must be `date`"));
    }
    let ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let assets: Vec<AssetRecord> = ids.iter().map(AssetRecord::unclassified).collect();
    check_unique_ids(&assets)?;

    let mut rows: BTreeMap<NaiveDate, Vec<Option<f64>>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let date = parse_date(&rec[0])
            .ok_or_else(|| Error::parse(path, line, format!("invalid date `{}`", &rec[0])))?;
        let mut row = Vec::with_capacity(ids.len());
        for (i, cell) in rec.iter().skip(1).enumerate() {
            if cell.is_empty() {
                row.push(None);
                continue;
            }
            let p = parse_price(path, line, cell)?;
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::Data(format!(
                    "non-positive price {p} for asset `{}` on {date} (line {line})",
                    ids[i]
                )));
            }
            row.push(Some(p));
        }
        if rows.insert(date, row).is_some() {
            return Err(Error::Data(format!("duplicate date {date} (line {line})")));
        }
    }
    let dates: Vec<NaiveDate> = rows.keys().copied().collect();
    let prices = rows.into_values().flatten().collect();
    PricePanel::new(dates, assets, prices)
}

/// Write a panel in wide format. Prices use the shortest representation
/// that parses back to the same `f64`.
pub fn write_prices_wide(panel: &PricePanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(w, "date").map_err(io)?;
    for a in &panel.assets {
        write!(w, ",{}", a.id).map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for (t, d) in panel.dates.iter().enumerate() {
        write!(w, "{}", d.format(DATE_FORMAT)).map_err(io)?;
        for i in 0..panel.assets.len() {
            match panel.price(t, i) {
                Some(p) => write!(w, ",{p}").map_err(io)?,
                None => write!(w, ",").map_err(io)?,
            }
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Daily log returns, dates × assets, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    dates: Vec<NaiveDate>,
    assets: Vec<AssetRecord>,
    returns: Vec<Option<f64>>,
}

impl ReturnPanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        assets: Vec<AssetRecord>,
        returns: Vec<Option<f64>>,
    ) -> Result<Self> {
        if returns.len() != dates.len() * assets.len() {
            return Err(Error::Argument(format!(
                "return matrix has {} cells, expected {} x {}",
                returns.len(),
                dates.len(),
                assets.len()
            )));
        }
        check_dates_increasing(&dates)?;
        check_unique_ids(&assets)?;
        if returns.iter().flatten().any(|r| !r.is_finite()) {
            return Err(Error::Data("non-finite return value".into()));
        }
        Ok(ReturnPanel {
            dates,
            assets,
            returns,
        })
    }

    /// Panel without missing cells from per-asset columns of equal length.
    pub fn from_columns(
        dates: Vec<NaiveDate>,
        assets: Vec<AssetRecord>,
        columns: &[Vec<f64>],
    ) -> Result<Self> {
        if columns.len() != assets.len() || columns.iter().any(|c| c.len() != dates.len()) {
            return Err(Error::Argument("column shapes do not match panel".into()));
        }
        let mut returns = Vec::with_capacity(dates.len() * assets.len());
        for t in 0..dates.len() {
            returns.extend(columns.iter().map(|c| Some(c[t])));
        }
        ReturnPanel::new(dates, assets, returns)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[AssetRecord] {
        &self.assets
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn get(&self, t: usize, i: usize) -> Option<f64> {
        self.returns[t * self.assets.len() + i]
    }

    pub fn row(&self, t: usize) -> &[Option<f64>] {
        let n = self.assets.len();
        &self.returns[t * n..(t + 1) * n]
    }

    pub fn column(&self, i: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        (0..self.dates.len()).map(move |t| self.get(t, i))
    }

    pub fn asset_index(&self, id: &str) -> Option<usize> {
        self.assets.iter().position(|a| a.id == id)
    }

    pub fn apply_sector_map(&mut self, map: &SectorMap) -> Result<()> {
        classify_assets(&mut self.assets, map)
    }

    /// Keep only the given row indices (which must be increasing).
    pub fn select_rows(&self, rows: &[usize]) -> ReturnPanel {
        let n = self.assets.len();
        let mut returns = Vec::with_capacity(rows.len() * n);
        for &t in rows {
            returns.extend_from_slice(self.row(t));
        }
        ReturnPanel {
            dates: rows.iter().map(|&t| self.dates[t]).collect(),
            assets: self.assets.clone(),
            returns,
        }
    }

    /// Rows whose date lies in `[start, end)`.
    pub fn rows_in(&self, start: NaiveDate, end: NaiveDate) -> std::ops::Range<usize> {
        let lo = self.dates.partition_point(|d| *d < start);
        let hi = self.dates.partition_point(|d| *d < end);
        lo..hi.max(lo)
    }

    /// Add `delta` to every present cell of row `t`.
    pub(crate) fn shift_row(&mut self, t: usize, delta: f64) {
        let n = self.assets.len();
        for r in self.returns[t * n..(t + 1) * n].iter_mut().flatten() {
            *r += delta;
        }
    }

    /// Convert back to prices starting at `base` for every asset, one date
    /// earlier than the first return. Requires a gap-free panel.
    pub fn to_prices(&self, first_date: NaiveDate, base: f64) -> Result<PricePanel> {
        if self.returns.iter().any(Option::is_none) {
            return Err(Error::Argument(
                "cannot integrate a return panel with missing cells".into(),
            ));
        }
        let n = self.assets.len();
        let mut dates = Vec::with_capacity(self.dates.len() + 1);
        dates.push(first_date);
        dates.extend_from_slice(&self.dates);
        let mut prices = vec![Some(base); n];
        let mut level = vec![base.ln(); n];
        for t in 0..self.dates.len() {
            for (i, lv) in level.iter_mut().enumerate() {
                *lv += self.get(t, i).unwrap_or(0.0);
                prices.push(Some(lv.exp()));
            }
        }
        PricePanel::new(dates, self.assets.clone(), prices)
    }
}

/// Daily log returns `ln(p(t) / p(t-1))`.
///
/// A return exists only where both the date and the immediately preceding
/// panel date carry a price; returns never span a gap.
pub fn compute_log_returns(panel: &PricePanel) -> Result<ReturnPanel> {
    let n_dates = panel.dates.len();
    if n_dates < 2 {
        return Err(Error::Argument(format!(
            "need at least 2 dates to compute returns, panel has {n_dates}"
        )));
    }
    let n = panel.assets.len();
    let mut returns = Vec::with_capacity((n_dates - 1) * n);
    for t in 1..n_dates {
        for i in 0..n {
            let r = match (panel.price(t - 1, i), panel.price(t, i)) {
                (Some(p0), Some(p1)) => Some((p1 / p0).ln()),
                _ => None,
            };
            returns.push(r);
        }
    }
    ReturnPanel::new(panel.dates[1..].to_vec(), panel.assets.clone(), returns)
}

/// Load a sector map with header `asset_id,major,minor`.
///
/// `major` is one of `Technology`, `BasicMaterials`, `Finance`, or `Index`
/// for market indices (oil spot prices, bond prices); `minor` may be empty.
pub fn load_sector_map(path: impl AsRef<Path>) -> Result<SectorMap> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let mut map = SectorMap::new();
    if headers.is_empty() {
        warn!("sector map {} is empty", path.display());
        return Ok(map);
    }
    if headers.iter().collect::<Vec<_>>() != ["asset_id", "major", "minor"] {
        return Err(Error::parse(
            path,
            1,
            "expected header `asset_id,major,minor`",
        ));
    }
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let id = rec[0].to_string();
        let class = if &rec[1] == "Index" {
            if !rec[2].is_empty() {
                return Err(Error::Data(format!(
                    "index `{id}` cannot carry a subsector (line {line})"
                )));
            }
            AssetClass::Index
        } else {
            let major: SectorMajor = rec[1].parse().map_err(|m| Error::parse(path, line, m))?;
            let minor = if rec[2].is_empty() {
                None
            } else {
                Some(
                    rec[2]
                        .parse::<SectorMinor>()
                        .map_err(|m| Error::parse(path, line, m))?,
                )
            };
            let label = SectorLabel::new(major, minor)
                .map_err(|e| Error::Data(format!("asset `{id}` (line {line}): {e}")))?;
            AssetClass::Stock(label)
        };
        if let Some(prev) = map.insert(id.clone(), class) {
            if prev != class {
                return Err(Error::Data(format!(
                    "asset `{id}` listed twice with different labels (line {line})"
                )));
            }
        }
    }
    if map.is_empty() {
        warn!("sector map {} is empty", path.display());
    }
    Ok(map)
}

pub fn write_sector_map(assets: &[AssetRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "asset_id,major,minor").map_err(io)?;
    for a in assets {
        match (a.kind, a.sector) {
            (AssetKind::Index, _) => writeln!(w, "{},Index,", a.id).map_err(io)?,
            (AssetKind::Stock, Some(s)) => {
                let minor = s.minor.map(|m| m.to_string()).unwrap_or_default();
                writeln!(w, "{},{},{}", a.id, s.major, minor).map_err(io)?
            }
            (AssetKind::Stock, None) => {
                return Err(Error::Data(format!("stock `{}` has no sector", a.id)))
            }
        }
    }
    w.flush().map_err(io)
}

/// A dated exogenous series such as an interest rate or index level.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousSeries {
    pub name: String,
    pub units: Option<String>,
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl ExogenousSeries {
    pub fn new(
        name: impl Into<String>,
        units: Option<String>,
        dates: Vec<NaiveDate>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::Argument("dates and values differ in length".into()));
        }
        check_dates_increasing(&dates)?;
        Ok(ExogenousSeries {
            name: name.into(),
            units,
            dates,
            values,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// First observation on or after `date` and strictly before `limit`.
    pub fn first_on_or_after(&self, date: NaiveDate, limit: NaiveDate) -> Option<(NaiveDate, f64)> {
        let i = self.dates.partition_point(|d| *d < date);
        (i < self.dates.len() && self.dates[i] < limit).then(|| (self.dates[i], self.values[i]))
    }

    /// Last observation on or before `date`.
    pub fn last_on_or_before(&self, date: NaiveDate) -> Option<(NaiveDate, f64)> {
        let i = self.dates.partition_point(|d| *d <= date);
        (i > 0).then(|| (self.dates[i - 1], self.values[i - 1]))
    }
}

/// Load a `date,value` CSV. A line `#units: <text>` documents the units.
pub fn load_exogenous(path: impl AsRef<Path>, name: impl Into<String>) -> Result<ExogenousSeries> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let units = text
        .lines()
        .find_map(|l| l.trim().strip_prefix("#units:"))
        .map(|u| u.trim().to_string());
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["date", "value"] {
        return Err(Error::parse(path, 1, "expected header `date,value`"));
    }
    let mut rows = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let date = parse_date(&rec[0])
            .ok_or_else(|| Error::parse(path, line, format!("invalid date `{}`", &rec[0])))?;
        let value: f64 = rec[1]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("invalid value `{}`", &rec[1])))?;
        if rows.insert(date, value).is_some() {
            return Err(Error::Data(format!("duplicate date {date} (line {line})")));
        }
    }
    let (dates, values) = rows.into_iter().unzip();
    ExogenousSeries::new(name, units, dates, values)
}

pub fn write_exogenous(series: &ExogenousSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    if let Some(u) = &series.units {
        writeln!(w, "#units: {u}").map_err(io)?;
    }
    writeln!(w, "date,value").map_err(io)?;
    for (d, v) in series.dates.iter().zip(&series.values) {
        writeln!(w, "{},{v}", d.format(DATE_FORMAT)).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Interbank stress indicator `(LIBOR - FFR) / FFR` at each quarter start.
///
/// For each quarter the first observation on or after its start date (and
/// before the following quarter) is used from both series.
pub fn derive_libor_spread(
    libor: &ExogenousSeries,
    ffr: &ExogenousSeries,
    quarters: &[NaiveDate],
) -> Result<ExogenousSeries> {
    let mut values = Vec::with_capacity(quarters.len());
    for &q in quarters {
        let limit = q + Months::new(3);
        let (_, l) = libor.first_on_or_after(q, limit).ok_or_else(|| {
            Error::Data(format!("{} has no observation for quarter {q}", libor.name))
        })?;
        let (_, f) = ffr.first_on_or_after(q, limit).ok_or_else(|| {
            Error::Data(format!("{} has no observation for quarter {q}", ffr.name))
        })?;
        if f == 0.0 {
            return Err(Error::Computation(format!(
                "{} is zero at quarter {q}; spread undefined",
                ffr.name
            )));
        }
        values.push((l - f) / f);
    }
    ExogenousSeries::new(
        "libor_ffr_spread",
        Some("dimensionless".into()),
        quarters.to_vec(),
        values,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    fn write_tmp(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        let mut f = File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn long_file_single_asset() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            &dir,
            "p.csv",
            "date,asset_id,adjusted_close\n2003-01-03,XOM,10\n2003-01-02,XOM,9.5\n2003-01-06,XOM,10.2\n",
        );
        let panel = load_prices(&p, PriceFormat::Long).unwrap();
        assert_eq!(panel.dates().len(), 3);
        assert_eq!(panel.assets().len(), 1);
        assert_eq!(panel.dates()[0], d("2003-01-02"));
        assert!((0..3).all(|t| panel.price(t, 0).is_some()));
    }

    #[test]
    fn wide_missing_cell_is_marked() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            &dir,
            "w.csv",
            "date,A,B\n2003-01-02,1,2\n2003-01-03,1.1,\n2003-01-06,1.2,2.2\n",
        );
        let panel = load_prices(&p, PriceFormat::Wide).unwrap();
        assert_eq!(panel.price(1, 1), None);
        assert_eq!(panel.price(1, 0), Some(1.1));
        assert_eq!(panel.price(2, 1), Some(2.2));
    }

    #[test]
    fn zero_price_names_asset_and_date() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            &dir,
            "z.csv",
            "date,asset_id,adjusted_close\n2003-01-02,AAA,1\n2003-01-03,AAA,0.0\n",
        );
        let err = load_prices(&p, PriceFormat::Long).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Data(_)));
        assert!(msg.contains("AAA") && msg.contains("2003-01-03"), "{msg}");
    }

    #[test]
    fn duplicate_long_entry_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            &dir,
            "dup.csv",
            "date,asset_id,adjusted_close\n2003-01-02,AAA,1\n2003-01-02,AAA,1.5\n",
        );
        assert!(matches!(
            load_prices(&p, PriceFormat::Long),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn malformed_row_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            &dir,
            "bad.csv",
            "date,asset_id,adjusted_close\n2003-01-02,AAA,1\n2003-01-03,AAA,abc\n",
        );
        match load_prices(&p, PriceFormat::Long) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_prices("/nonexistent/prices.csv", PriceFormat::Wide),
            Err(Error::Io { .. })
        ));
    }

    fn panel_1(prices: &[Option<f64>]) -> PricePanel {
        let dates = (0..prices.len())
            .map(|k| d("2003-01-01") + chrono::Days::new(k as u64))
            .collect();
        PricePanel::new(dates, vec![AssetRecord::unclassified("A")], prices.to_vec()).unwrap()
    }

    #[test]
    fn constant_prices_give_zero_returns() {
        let r = compute_log_returns(&panel_1(&[Some(100.0); 3])).unwrap();
        assert_eq!(r.column(0).collect::<Vec<_>>(), vec![Some(0.0), Some(0.0)]);
    }

    #[test]
    fn single_step_return() {
        let r = compute_log_returns(&panel_1(&[Some(100.0), Some(110.0)])).unwrap();
        let v = r.get(0, 0).unwrap();
        assert!((v - 0.095_310_179_804_324_9).abs() < 1e-12);
    }

    #[test]
    fn gap_is_not_spanned() {
        let r = compute_log_returns(&panel_1(&[Some(100.0), None, Some(120.0)])).unwrap();
        assert_eq!(r.column(0).collect::<Vec<_>>(), vec![None, None]);
    }

    #[test]
    fn returns_need_two_dates() {
        assert!(matches!(
            compute_log_returns(&panel_1(&[Some(1.0)])),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn sector_map_parses_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let ok = write_tmp(
            &dir,
            "s.csv",
            "asset_id,major,minor\nXOM,BasicMaterials,Oil\nMSFT,Technology,\nBRENT,Index,\n",
        );
        let map = load_sector_map(&ok).unwrap();
        assert_eq!(
            map["XOM"],
            AssetClass::Stock(SectorLabel::minor(SectorMinor::Oil))
        );
        assert_eq!(
            map["MSFT"],
            AssetClass::Stock(SectorLabel::major(SectorMajor::Technology))
        );
        assert_eq!(map["BRENT"], AssetClass::Index);

        let bad = write_tmp(&dir, "b.csv", "asset_id,major,minor\nAAPL,Technology,Oil\n");
        assert!(matches!(load_sector_map(&bad), Err(Error::Data(_))));

        let unknown = write_tmp(&dir, "u.csv", "asset_id,major,minor\nAAPL,Tech,\n");
        assert!(matches!(
            load_sector_map(&unknown),
            Err(Error::Parse { .. })
        ));

        let twice = write_tmp(
            &dir,
            "t.csv",
            "asset_id,major,minor\nC,Finance,RealEstate\nC,Finance,OtherFinance\n",
        );
        assert!(matches!(load_sector_map(&twice), Err(Error::Data(_))));

        let empty = write_tmp(&dir, "e.csv", "");
        assert!(load_sector_map(&empty).unwrap().is_empty());
    }

    #[test]
    fn sector_label_selector_semantics() {
        let fin = SectorLabel::major(SectorMajor::Finance);
        let re = SectorLabel::minor(SectorMinor::RealEstate);
        assert!(fin.contains(&re));
        assert!(!re.contains(&fin));
        assert!(re.contains(&re));
        assert_eq!("Finance/RealEstate".parse::<SectorLabel>().unwrap(), re);
        assert!("Technology/Oil".parse::<SectorLabel>().is_err());
    }

    fn series(name: &str, rows: &[(&str, f64)]) -> ExogenousSeries {
        ExogenousSeries::new(
            name,
            Some("percent".into()),
            rows.iter().map(|(s, _)| d(s)).collect(),
            rows.iter().map(|(_, v)| *v).collect(),
        )
        .unwrap()
    }

    #[test]
    fn libor_spread_examples() {
        let q = [d("2007-01-01"), d("2007-04-01")];
        let libor = series("libor", &[("2007-01-02", 5.0), ("2007-04-02", 5.25)]);
        let ffr = series("ffr", &[("2007-01-02", 5.0), ("2007-04-03", 5.0)]);
        let s = derive_libor_spread(&libor, &ffr, &q).unwrap();
        assert_eq!(s.values()[0], 0.0);
        assert!((s.values()[1] - 0.05).abs() < 1e-12);

        let zero = series("ffr", &[("2007-01-02", 0.0), ("2007-04-03", 5.0)]);
        let libor2 = series("libor", &[("2007-01-02", 2.0), ("2007-04-02", 2.0)]);
        assert!(matches!(
            derive_libor_spread(&libor2, &zero, &q),
            Err(Error::Computation(_))
        ));

        let short = series("ffr", &[("2007-01-02", 5.0)]);
        let err = derive_libor_spread(&libor, &short, &q).unwrap_err();
        assert!(err.to_string().contains("2007-04-01"));
    }

    #[test]
    fn exogenous_units_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            &dir,
            "x.csv",
            "#units: percent per annum\ndate,value\n2007-01-02,5.3\n2007-01-03,5.31\n",
        );
        let s = load_exogenous(&p, "libor").unwrap();
        assert_eq!(s.units.as_deref(), Some("percent per annum"));
        assert_eq!(s.values(), &[5.3, 5.31]);
        let out = dir.path().join("y.csv");
        write_exogenous(&s, &out).unwrap();
        assert_eq!(load_exogenous(&out, "libor").unwrap(), s);
    }
}
