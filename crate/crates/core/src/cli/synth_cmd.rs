//! The `synth` command: simulate a panel and write it with its ground truth.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Days, Months, NaiveDate};
use log::{info, warn};

use crate::error::{Error, Result};
use crate::ingest::{write_prices_wide, write_sector_map, DATE_FORMAT};
use crate::synth::{generate_returns, write_truth, FactorModelSpec, RegimeSchedule};

/// Files written by [`run`].
pub struct SynthOutputs {
    pub prices: PathBuf,
    pub sectors: PathBuf,
    pub truth: PathBuf,
    pub config: PathBuf,
}

/// First day of the month on or after `d`.
fn month_start_on_or_after(d: NaiveDate) -> NaiveDate {
    let first = d.with_day(1).expect("day 1 exists");
    if first == d {
        d
    } else {
        first + Months::new(1)
    }
}

/// Rolling-window range `(first start, last start)` covering the panel with
/// complete 12-month windows where possible.
fn window_range(first: NaiveDate, last: NaiveDate) -> (NaiveDate, NaiveDate) {
    let start = month_start_on_or_after(first);
    let end_excl = last + Days::new(1);
    let mut s = start;
    while s + Months::new(15) <= end_excl {
        s = s + Months::new(3);
    }
    if start + Months::new(12) > end_excl {
        warn!("panel is shorter than one 12-month window; windows will be partial");
    }
    (start, s)
}

fn analyze_config(first: NaiveDate, last: NaiveDate) -> String {
    let (start, end) = window_range(first, last);
    format!(
        "prices = \"prices.csv\"\n\
         price_format = \"wide\"\n\
         sectors = \"sectors.csv\"\n\
         out = \"analysis\"\n\
         trims = [0, 2, 5]\n\
         network_trim = 0\n\
         quantile = 0.0625\n\
         min_overlap = 100\n\
         alpha_merge = 0.05\n\
         \n\
         [window]\n\
         mode = \"rolling\"\n\
         start = \"{}\"\n\
         end = \"{}\"\n\
         length_months = 12\n\
         shift_months = 3\n",
        start.format(DATE_FORMAT),
        end.format(DATE_FORMAT)
    )
}

pub fn run(spec: &FactorModelSpec, schedule: &RegimeSchedule, out: &Path) -> Result<SynthOutputs> {
    let panel = generate_returns(spec, schedule)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let outputs = SynthOutputs {
        prices: out.join("prices.csv"),
        sectors: out.join("sectors.csv"),
        truth: out.join("truth.csv"),
        config: out.join("analyze.toml"),
    };
    let calendar = spec.calendar();
    let prices = panel.to_prices(calendar[0], 100.0)?;
    write_prices_wide(&prices, &outputs.prices)?;
    write_sector_map(panel.assets(), &outputs.sectors)?;
    write_truth(spec, &outputs.truth)?;
    let text = analyze_config(calendar[1], calendar[calendar.len() - 1]);
    fs::write(&outputs.config, text).map_err(|e| Error::io(&outputs.config, e))?;
    info!(
        "wrote {} assets x {} dates to {}",
        panel.n_assets(),
        panel.n_dates(),
        out.display()
    );
    Ok(outputs)
}
