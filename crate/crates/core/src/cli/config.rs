//! Run configuration for `analyze` and `export`.
//!
//! ```toml
//! prices = "prices.csv"          # relative paths resolve against this file
//! price_format = "wide"          # or "long"
//! sectors = "sectors.csv"
//! out = "analysis"
//! trims = [0, 2, 5, 10, 20]      # extreme days omitted per window
//! network_trim = 0               # trim level used to build networks
//! quantile = 0.0625
//! min_overlap = 100
//! alpha_merge = 0.05
//! sign_change_year = 2008        # optional
//! market_index = "SPX"           # optional; default is the mean stock return
//!
//! [window]
//! mode = "rolling"               # or "calendar_year"
//! start = "2003-01-01"
//! end = "2007-10-01"             # last window start
//! length_months = 12
//! shift_months = 3
//!
//! [exogenous]                    # optional
//! libor = "libor.csv"
//! ffr = "ffr.csv"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::corrwin::{WindowMode, WindowSpec, DEFAULT_MIN_OVERLAP};
use crate::error::{Error, Result};
use crate::ingest::{parse_date, PriceFormat};
use crate::network::ThresholdSpec;
use crate::sectorstats::DEFAULT_ALPHA_MERGE;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    prices: String,
    #[serde(default = "default_format")]
    price_format: String,
    sectors: String,
    #[serde(default = "default_out")]
    out: String,
    window: RawWindow,
    #[serde(default = "default_trims")]
    trims: Vec<usize>,
    #[serde(default)]
    network_trim: usize,
    quantile: Option<f64>,
    min_overlap: Option<usize>,
    alpha_merge: Option<f64>,
    sign_change_year: Option<i32>,
    market_index: Option<String>,
    exogenous: Option<RawExogenous>,
}

fn default_format() -> String {
    "wide".into()
}

fn default_out() -> String {
    "analysis".into()
}

fn default_trims() -> Vec<usize> {
    vec![0]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWindow {
    #[serde(default = "default_mode")]
    mode: String,
    start: String,
    end: String,
    length_months: Option<u32>,
    shift_months: Option<u32>,
}

fn default_mode() -> String {
    "rolling".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExogenous {
    libor: String,
    ffr: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub prices: PathBuf,
    pub price_format: PriceFormat,
    pub sectors: PathBuf,
    pub out: PathBuf,
    pub window: WindowSpec,
    /// Sorted, deduplicated, always containing `network_trim`.
    pub trims: Vec<usize>,
    pub network_trim: usize,
    pub threshold: ThresholdSpec,
    pub min_overlap: usize,
    pub alpha_merge: f64,
    pub sign_change_year: Option<i32>,
    pub market_index: Option<String>,
    /// LIBOR and federal funds series.
    pub exogenous: Option<(PathBuf, PathBuf)>,
}

fn date(key: &str, s: &str) -> Result<chrono::NaiveDate> {
    parse_date(s).ok_or_else(|| Error::Config(format!("{key}: invalid date `{s}`")))
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawRunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let path = |p: &str| base_dir.join(p);
        let mode: WindowMode = raw.window.mode.parse().map_err(Error::Config)?;
        let start = date("window.start", &raw.window.start)?;
        let end = date("window.end", &raw.window.end)?;
        let mut window = match mode {
            WindowMode::Rolling => WindowSpec::rolling(start, end),
            WindowMode::CalendarYear => WindowSpec::calendar_years(start, end),
        };
        if let Some(l) = raw.window.length_months {
            window.length_months = l;
        }
        if let Some(s) = raw.window.shift_months {
            window.shift_months = s;
        }
        window.validate()?;
        let threshold = match raw.quantile {
            Some(q) => ThresholdSpec::new(q)?,
            None => ThresholdSpec::default(),
        };
        let alpha_merge = raw.alpha_merge.unwrap_or(DEFAULT_ALPHA_MERGE);
        if !(0.0..=1.0).contains(&alpha_merge) {
            return Err(Error::Config(format!(
                "alpha_merge {alpha_merge} not in [0, 1]"
            )));
        }
        let mut cfg = RunConfig {
            prices: path(&raw.prices),
            price_format: raw.price_format.parse().map_err(Error::Config)?,
            sectors: path(&raw.sectors),
            out: path(&raw.out),
            window,
            trims: raw.trims,
            network_trim: raw.network_trim,
            threshold,
            min_overlap: raw.min_overlap.unwrap_or(DEFAULT_MIN_OVERLAP),
            alpha_merge,
            sign_change_year: raw.sign_change_year,
            market_index: raw.market_index,
            exogenous: raw.exogenous.map(|e| (path(&e.libor), path(&e.ffr))),
        };
        cfg.normalize_trims();
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        RunConfig::parse(&text, base)
    }

    /// Build networks from trim level `k`, computing it if not listed.
    pub fn set_network_trim(&mut self, k: usize) {
        self.network_trim = k;
        self.normalize_trims();
    }

    fn normalize_trims(&mut self) {
        self.trims.push(self.network_trim);
        self.trims.sort_unstable();
        self.trims.dedup();
    }

    /// Every input file named by the config must exist.
    pub fn check_inputs(&self) -> Result<()> {
        let mut files = vec![&self.prices, &self.sectors];
        if let Some((l, f)) = &self.exogenous {
            files.push(l);
            files.push(f);
        }
        for f in files {
            if !f.is_file() {
                return Err(Error::io(
                    f,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
                ));
            }
        }
        Ok(())
    }
}
