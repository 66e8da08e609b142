//! Window selection and the `export` command.

use std::fs;
use std::path::PathBuf;

use chrono::NaiveDate;
use log::info;
use rayon::prelude::*;

use super::analyze::Pipeline;
use super::{Context as _, Failure};
use crate::corrwin::Window;
use crate::error::Error;
use crate::ingest::{parse_date, DATE_FORMAT};
use crate::network::{export_network, stack_temporal, ExportFormat, NetworkRef};

/// What a `--window` argument asks for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WindowSelector {
    All,
    Year(i32),
    Range(NaiveDate, NaiveDate),
}

impl WindowSelector {
    /// Accepts `all`, a year (`2003`), or a range written as
    /// `YYYY-MM-DD_YYYY-MM-DD` or `YYYY-MM-DD..YYYY-MM-DD`.
    pub fn parse(s: &str) -> Option<Self> {
        if s == "all" {
            return Some(WindowSelector::All);
        }
        if s.len() == 4 && s.bytes().all(|b| b.is_ascii_digit()) {
            return s.parse().ok().map(WindowSelector::Year);
        }
        let (a, b) = s.split_once("..").or_else(|| s.split_once('_'))?;
        Some(WindowSelector::Range(parse_date(a)?, parse_date(b)?))
    }
}

fn listing(windows: &[Window]) -> String {
    windows
        .iter()
        .map(|w| w.label())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Resolve `selector` against the configured windows.
///
/// A year selects the window covering exactly that calendar year. `all`
/// selects every window, or with `chain` a greedy run of non-overlapping
/// windows starting from the first, suitable for temporal stacking.
pub fn select_windows(
    windows: &[Window],
    selector: &str,
    chain: bool,
) -> std::result::Result<Vec<Window>, Error> {
    let unknown = || {
        Error::Argument(format!(
            "unknown window `{selector}`; available windows: {}",
            listing(windows)
        ))
    };
    let sel = WindowSelector::parse(selector).ok_or_else(unknown)?;
    let picked: Vec<Window> = match sel {
        WindowSelector::All if chain => {
            let mut out: Vec<Window> = Vec::new();
            for w in windows {
                if out.last().is_none_or(|last| w.start >= last.end) {
                    out.push(*w);
                }
            }
            out
        }
        WindowSelector::All => windows.to_vec(),
        WindowSelector::Year(y) => {
            let start = NaiveDate::from_ymd_opt(y, 1, 1).ok_or_else(unknown)?;
            let end = NaiveDate::from_ymd_opt(y + 1, 1, 1).ok_or_else(unknown)?;
            windows
                .iter()
                .filter(|w| w.start == start && w.end == end)
                .copied()
                .collect()
        }
        WindowSelector::Range(a, b) => windows
            .iter()
            .filter(|w| w.start == a && w.end == b)
            .copied()
            .collect(),
    };
    if picked.is_empty() {
        return Err(unknown());
    }
    Ok(picked)
}

/// Write the selected network(s) in `format` under `<out>/exports`.
pub fn run(
    pipeline: &Pipeline,
    selector: &str,
    format: ExportFormat,
) -> std::result::Result<PathBuf, Failure> {
    let all = pipeline.windows()?;
    let picked = select_windows(&all, selector, true).ctx("cli", None)?;
    let dir = pipeline.cfg.out.join("exports");
    fs::create_dir_all(&dir)
        .map_err(|e| Error::io(&dir, e))
        .ctx("cli", None)?;
    let layers = picked
        .par_iter()
        .map(|w| pipeline.network(w))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let path = if WindowSelector::parse(selector) == Some(WindowSelector::All) {
        let first = picked[0].start.format(DATE_FORMAT);
        let last = picked[picked.len() - 1].end.format(DATE_FORMAT);
        let path = dir.join(format!("temporal_{first}_{last}.{}", format.extension()));
        let temporal = stack_temporal(layers).ctx("network", None)?;
        info!(
            "stacked {} layers with {} identity edges",
            temporal.layers.len(),
            temporal.identity_edges.len()
        );
        export_network(NetworkRef::Temporal(&temporal), format, &path).ctx("network", None)?;
        path
    } else {
        let net = &layers[0];
        let path = dir.join(format!("{}.{}", net.window.label(), format.extension()));
        export_network(NetworkRef::Single(net), format, &path).ctx("network", Some(&net.window))?;
        path
    };
    info!("wrote {}", path.display());
    Ok(path)
}
