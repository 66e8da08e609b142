//! Rolling windows, extreme-day trimming and pairwise Pearson matrices.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, Months, NaiveDate};
use log::warn;

use crate::error::{Error, Result};
use crate::ingest::{classify_assets, AssetRecord, ReturnPanel, SectorMap, DATE_FORMAT};

/// Default minimum number of overlapping observations for a defined pair.
pub const DEFAULT_MIN_OVERLAP: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowMode {
    Rolling,
    CalendarYear,
}

impl FromStr for WindowMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rolling" => Ok(WindowMode::Rolling),
            "calendar_year" => Ok(WindowMode::CalendarYear),
            other => Err(format!(
                "unknown window mode `{other}` (expected rolling or calendar_year)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub length_months: u32,
    pub shift_months: u32,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub mode: WindowMode,
}

impl WindowSpec {
    /// Twelve-month windows shifted quarterly.
    pub fn rolling(start: NaiveDate, end: NaiveDate) -> Self {
        WindowSpec {
            length_months: 12,
            shift_months: 3,
            start,
            end,
            mode: WindowMode::Rolling,
        }
    }

    pub fn calendar_years(start: NaiveDate, end: NaiveDate) -> Self {
        WindowSpec {
            length_months: 12,
            shift_months: 12,
            start,
            end,
            mode: WindowMode::CalendarYear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length_months < 1 || self.shift_months < 1 {
            return Err(Error::Argument(
                "window length and shift must be at least one month".into(),
            ));
        }
        if self.start > self.end {
            return Err(Error::Argument(format!(
                "window range start {} is after end {}",
                self.start, self.end
            )));
        }
        Ok(())
    }
}

/// A half-open date range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Window {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Window {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Window { start, end }
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d < self.end
    }

    pub fn overlaps(&self, other: &Window) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// `YYYY-MM-DD_YYYY-MM-DD`, used in file names and reports.
    pub fn label(&self) -> String {
        format!(
            "{}_{}",
            self.start.format(DATE_FORMAT),
            self.end.format(DATE_FORMAT)
        )
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}, {})",
            self.start.format(DATE_FORMAT),
            self.end.format(DATE_FORMAT)
        )
    }
}

pub fn enumerate_windows(spec: &WindowSpec) -> Result<Vec<Window>> {
    spec.validate()?;
    let mut out = Vec::new();
    match spec.mode {
        WindowMode::Rolling => {
            let mut k = 0u32;
            loop {
                let start = spec.start + Months::new(k * spec.shift_months);
                if start > spec.end {
                    break;
                }
                out.push(Window::new(start, start + Months::new(spec.length_months)));
                k += 1;
            }
        }
        WindowMode::CalendarYear => {
            for year in spec.start.year()..=spec.end.year() {
                let start = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year");
                let end = NaiveDate::from_ymd_opt(year + 1, 1, 1).expect("valid year");
                out.push(Window::new(start, end));
            }
        }
    }
    Ok(out)
}

/// Equal-weighted cross-sectional mean return of row `t`, or `None` when
/// no asset has a return that day.
pub fn cross_sectional_mean(panel: &ReturnPanel, t: usize) -> Option<f64> {
    let (sum, n) = panel
        .row(t)
        .iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), r| (s + r, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Restrict `panel` to `window` and drop the `k` dates with the largest
/// absolute cross-sectional mean return. Ties go to the earlier date.
///
/// Returns the surviving panel (original order) and the omitted dates in
/// ascending order.
pub fn trim_extreme_days(
    panel: &ReturnPanel,
    window: &Window,
    k: usize,
) -> Result<(ReturnPanel, Vec<NaiveDate>)> {
    let rows = panel.rows_in(window.start, window.end);
    let n_days = rows.len();
    if k > 0 && k >= n_days {
        return Err(Error::Argument(format!(
            "cannot trim {k} days from window {window} with {n_days} dates"
        )));
    }
    let mut ranked: Vec<(usize, f64)> = rows
        .clone()
        .map(|t| (t, cross_sectional_mean(panel, t).map_or(-1.0, f64::abs)))
        .collect();
    // Stable sort keeps earlier dates first among equal magnitudes.
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut drop: Vec<usize> = ranked
        .iter()
        .take(k)
        .filter(|(_, m)| *m >= 0.0)
        .map(|(t, _)| *t)
        .collect();
    drop.sort_unstable();
    let keep: Vec<usize> = rows.filter(|t| drop.binary_search(t).is_err()).collect();
    let omitted = drop.iter().map(|&t| panel.dates()[t]).collect();
    Ok((panel.select_rows(&keep), omitted))
}

/// Pairwise-complete Pearson correlations for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub window: Window,
    pub assets: Vec<AssetRecord>,
    pub trim_k: usize,
    pub min_overlap: usize,
    pub trimmed_days: Vec<NaiveDate>,
    rho: Vec<Option<f64>>,
    n_obs: Vec<u32>,
}

impl CorrelationMatrix {
    /// Build from a full `n x n` row-major matrix. Used for matrices that
    /// do not come from a return panel (tests, external tools).
    pub fn from_values(
        window: Window,
        assets: Vec<AssetRecord>,
        rho: Vec<Option<f64>>,
    ) -> Result<Self> {
        let n = assets.len();
        if rho.len() != n * n {
            return Err(Error::Argument(format!(
                "matrix has {} entries, expected {n} x {n}",
                rho.len()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (rho[i * n + j], rho[j * n + i]);
                if a.map(f64::to_bits) != b.map(f64::to_bits) {
                    return Err(Error::Argument(format!(
                        "matrix not symmetric at ({i}, {j})"
                    )));
                }
                if a.is_some_and(|v| !(-1.0..=1.0).contains(&v)) {
                    return Err(Error::Argument(format!("entry ({i}, {j}) outside [-1, 1]")));
                }
            }
        }
        Ok(CorrelationMatrix {
            window,
            assets,
            trim_k: 0,
            min_overlap: 0,
            trimmed_days: Vec::new(),
            rho,
            n_obs: vec![0; n * n],
        })
    }

    pub fn apply_sector_map(&mut self, map: &SectorMap) -> Result<()> {
        classify_assets(&mut self.assets, map)
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.rho[i * self.assets.len() + j]
    }

    pub fn n_obs(&self, i: usize, j: usize) -> u32 {
        self.n_obs[i * self.assets.len() + j]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.assets.iter().position(|a| a.id == id)
    }

    /// Off-diagonal pairs `(i, j, rho)` with `i < j` and a defined coefficient.
    pub fn defined_pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.assets.len();
        (0..n)
            .flat_map(move |i| ((i + 1)..n).filter_map(move |j| self.get(i, j).map(|r| (i, j, r))))
    }

    pub fn count_defined_pairs(&self) -> usize {
        self.defined_pairs().count()
    }

    /// Mean of all defined off-diagonal coefficients among `members`.
    pub fn average_all_pairs(&self, members: &[usize]) -> BlockAverage {
        average_block_correlation(self, members, members)
    }

    fn set(&mut self, i: usize, j: usize, rho: Option<f64>, n: u32) {
        let n_assets = self.assets.len();
        self.rho[i * n_assets + j] = rho;
        self.rho[j * n_assets + i] = rho;
        self.n_obs[i * n_assets + j] = n;
        self.n_obs[j * n_assets + i] = n;
    }
}

fn pair_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    let (mut ax, mut ay) = (0.0f64, 0.0f64);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
        ax = ax.max(a.abs());
        ay = ay.max(b.abs());
    }
    // Sums of squares at rounding-noise level mean a constant series.
    let tol = |m: f64| nf * (8.0 * f64::EPSILON * m).powi(2);
    if sxx <= tol(ax) || syy <= tol(ay) {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Correlations over every date of `panel`, pairwise-complete.
///
/// Pairs with fewer than `min_overlap` shared observations, or where either
/// series is constant over the overlap, are undefined.
pub fn pearson_all(panel: &ReturnPanel, window: Window, min_overlap: usize) -> CorrelationMatrix {
    let n = panel.n_assets();
    let mut m = CorrelationMatrix {
        window,
        assets: panel.assets().to_vec(),
        trim_k: 0,
        min_overlap,
        trimmed_days: Vec::new(),
        rho: vec![None; n * n],
        n_obs: vec![0; n * n],
    };
    let columns: Vec<Vec<Option<f64>>> = (0..n).map(|i| panel.column(i).collect()).collect();
    let mut xs = Vec::with_capacity(panel.n_dates());
    let mut ys = Vec::with_capacity(panel.n_dates());
    for i in 0..n {
        let own: Vec<f64> = columns[i].iter().flatten().copied().collect();
        if own.len() < 2 {
            warn!(
                "asset `{}` has {} observations in window {window}; correlations undefined",
                panel.assets()[i].id,
                own.len()
            );
        }
        let diag = pair_pearson(&own, &own).map(|_| 1.0);
        m.set(i, i, diag, own.len() as u32);
        for j in (i + 1)..n {
            xs.clear();
            ys.clear();
            for (a, b) in columns[i].iter().zip(&columns[j]) {
                if let (Some(a), Some(b)) = (a, b) {
                    xs.push(*a);
                    ys.push(*b);
                }
            }
            let cnt = xs.len();
            let rho = if cnt >= min_overlap.max(2) {
                pair_pearson(&xs, &ys)
            } else {
                None
            };
            m.set(i, j, rho, cnt as u32);
        }
    }
    m
}

/// Correlation matrix for `window` after trimming `trim_k` extreme days.
pub fn pearson_matrix(
    panel: &ReturnPanel,
    window: &Window,
    trim_k: usize,
    min_overlap: usize,
) -> Result<CorrelationMatrix> {
    let (trimmed, omitted) = trim_extreme_days(panel, window, trim_k)?;
    if trimmed.n_dates() == 0 {
        return Err(Error::Argument(format!(
            "window {window} contains no dates"
        )));
    }
    let mut m = pearson_all(&trimmed, *window, min_overlap);
    m.trim_k = trim_k;
    m.trimmed_days = omitted;
    Ok(m)
}

/// Mean coefficient over a block of pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockAverage {
    /// `None` when no designated pair is defined.
    pub mean: Option<f64>,
    pub n_defined: usize,
    pub n_undefined: usize,
}

/// Average correlation between two groups of asset indices.
///
/// Identical groups use distinct unordered pairs within the group;
/// otherwise every cross pair `(a, b)` with `a != b` is used.
pub fn average_block_correlation(
    corr: &CorrelationMatrix,
    group_a: &[usize],
    group_b: &[usize],
) -> BlockAverage {
    let mut a = group_a.to_vec();
    let mut b = group_b.to_vec();
    a.sort_unstable();
    a.dedup();
    b.sort_unstable();
    b.dedup();
    let mut sum = 0.0;
    let (mut n_def, mut n_undef) = (0usize, 0usize);
    let mut visit = |i: usize, j: usize| match corr.get(i, j) {
        Some(r) => {
            sum += r;
            n_def += 1;
        }
        None => n_undef += 1,
    };
    if a == b {
        for (k, &i) in a.iter().enumerate() {
            for &j in &a[k + 1..] {
                visit(i, j);
            }
        }
    } else {
        for &i in &a {
            for &j in &b {
                if i != j {
                    visit(i, j);
                }
            }
        }
    }
    BlockAverage {
        mean: (n_def > 0).then(|| sum / n_def as f64),
        n_defined: n_def,
        n_undefined: n_undef,
    }
}

/// Write the matrix as CSV with asset ids as header row and first column.
/// Undefined entries are empty cells.
pub fn write_matrix_csv(corr: &CorrelationMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(w, "asset_id").map_err(io)?;
    for a in &corr.assets {
        write!(w, ",{}", a.id).map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for i in 0..corr.n_assets() {
        write!(w, "{}", corr.assets[i].id).map_err(io)?;
        for j in 0..corr.n_assets() {
            match corr.get(i, j) {
                Some(r) => write!(w, ",{r}").map_err(io)?,
                None => write!(w, ",").map_err(io)?,
            }
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

const CACHE_MAGIC: &[u8; 4] = b"CNCM";
const CACHE_VERSION: u32 = 1;

/// Identifies a cached matrix: the window, trimming and overlap settings,
/// plus a fingerprint of the return panel it was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheKey {
    pub window: Window,
    pub trim_k: usize,
    pub min_overlap: usize,
    pub fingerprint: u64,
}

impl CacheKey {
    pub fn file_name(&self) -> String {
        format!(
            "corr_{}_k{}_m{}.bin",
            self.window.label(),
            self.trim_k,
            self.min_overlap
        )
    }
}

/// FNV-1a over dates, asset ids and return bit patterns.
pub fn panel_fingerprint(panel: &ReturnPanel) -> u64 {
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for b in bytes {
            h ^= *b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    for a in panel.assets() {
        eat(a.id.as_bytes());
        eat(&[0]);
    }
    for d in panel.dates() {
        eat(&d.num_days_from_ce().to_le_bytes());
    }
    for t in 0..panel.n_dates() {
        for r in panel.row(t) {
            match r {
                Some(v) => eat(&v.to_bits().to_le_bytes()),
                None => eat(&[0xff; 8]),
            }
        }
    }
    h
}

fn date_days(d: NaiveDate) -> i32 {
    d.num_days_from_ce()
}

fn days_date(n: i32) -> Option<NaiveDate> {
    NaiveDate::from_num_days_from_ce_opt(n)
}

/// Binary cache layout (all integers and floats little-endian):
///
/// ```text
/// "CNCM" | version u32 | fingerprint u64 | window start i32 | window end i32
/// | trim_k u32 | min_overlap u32 | n_assets u32 | n_assets x (len u32, utf8)
/// | n_trimmed u32 | n_trimmed x i32 | upper triangle incl. diagonal, row-major:
/// rho f64 (NaN = undefined) | same triangle: n_obs u32
/// ```
/// Dates are days since 0001-01-01 (proleptic Gregorian, day 1).
pub fn write_cache(corr: &CorrelationMatrix, key: &CacheKey, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.extend_from_slice(&key.fingerprint.to_le_bytes());
    buf.extend_from_slice(&date_days(key.window.start).to_le_bytes());
    buf.extend_from_slice(&date_days(key.window.end).to_le_bytes());
    buf.extend_from_slice(&(key.trim_k as u32).to_le_bytes());
    buf.extend_from_slice(&(key.min_overlap as u32).to_le_bytes());
    buf.extend_from_slice(&(corr.n_assets() as u32).to_le_bytes());
    for a in &corr.assets {
        buf.extend_from_slice(&(a.id.len() as u32).to_le_bytes());
        buf.extend_from_slice(a.id.as_bytes());
    }
    buf.extend_from_slice(&(corr.trimmed_days.len() as u32).to_le_bytes());
    for d in &corr.trimmed_days {
        buf.extend_from_slice(&date_days(*d).to_le_bytes());
    }
    let n = corr.n_assets();
    for i in 0..n {
        for j in i..n {
            buf.extend_from_slice(&corr.get(i, j).unwrap_or(f64::NAN).to_le_bytes());
        }
    }
    for i in 0..n {
        for j in i..n {
            buf.extend_from_slice(&corr.n_obs(i, j).to_le_bytes());
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn i32(&mut self) -> Option<i32> {
        Some(i32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

/// Load a cached matrix if the file exists and matches `key` and the asset
/// ids of `assets` (in order). Asset records are taken from `assets`.
pub fn read_cache(
    path: impl AsRef<Path>,
    key: &CacheKey,
    assets: &[AssetRecord],
) -> Result<Option<CorrelationMatrix>> {
    let path = path.as_ref();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    Ok(decode_cache(&bytes, key, assets))
}

fn decode_cache(bytes: &[u8], key: &CacheKey, assets: &[AssetRecord]) -> Option<CorrelationMatrix> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != CACHE_MAGIC || c.u32()? != CACHE_VERSION {
        return None;
    }
    if c.u64()? != key.fingerprint {
        return None;
    }
    let window = Window::new(days_date(c.i32()?)?, days_date(c.i32()?)?);
    let trim_k = c.u32()? as usize;
    let min_overlap = c.u32()? as usize;
    if window != key.window || trim_k != key.trim_k || min_overlap != key.min_overlap {
        return None;
    }
    let n = c.u32()? as usize;
    if n != assets.len() {
        return None;
    }
    for a in assets {
        let len = c.u32()? as usize;
        if c.take(len)? != a.id.as_bytes() {
            return None;
        }
    }
    let n_trim = c.u32()? as usize;
    let mut trimmed_days = Vec::with_capacity(n_trim);
    for _ in 0..n_trim {
        trimmed_days.push(days_date(c.i32()?)?);
    }
    let mut m = CorrelationMatrix {
        window,
        assets: assets.to_vec(),
        trim_k,
        min_overlap,
        trimmed_days,
        rho: vec![None; n * n],
        n_obs: vec![0; n * n],
    };
    let mut tri = Vec::with_capacity(n * (n + 1) / 2);
    for _ in 0..n * (n + 1) / 2 {
        let v = c.f64()?;
        tri.push((!v.is_nan()).then_some(v));
    }
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            let cnt = c.u32()?;
            m.set(i, j, tri[k], cnt);
            k += 1;
        }
    }
    (c.pos == bytes.len()).then_some(m)
}
