//! The `analyze` pipeline: per-window matrices, networks and sector tests,
//! then cross-window trend and decline tests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use log::{debug, info, warn};
use rayon::prelude::*;
use serde::Serialize;

use super::config::RunConfig;
use super::{Context as _, Failure};
use crate::corrwin::{
    average_block_correlation, enumerate_windows, panel_fingerprint, pearson_matrix, read_cache,
    write_cache, CacheKey, CorrelationMatrix, Window,
};
use crate::error::{Error, Result};
use crate::ingest::{
    compute_log_returns, derive_libor_spread, load_exogenous, load_prices, load_sector_map,
    members_of, write_exogenous, AssetKind, ExogenousSeries, ReturnPanel, SectorLabel, DATE_FORMAT,
};
use crate::network::{build_threshold_network, CorrelationNetwork, EdgeList, NetworkRef};
use crate::sectorstats::{
    decline_coincidence_test, index_linkage, link_density_report, merge_tstat, p_value,
    self_clustering, sign_change_test, slope_trend_test_at, DeclineTestResult, IndexLinkResult,
    LinkDensityReport, MergeTestResult, SelfClusterResult, TrendTestResult,
};

/// Loaded inputs shared by every window.
pub struct Pipeline {
    pub cfg: RunConfig,
    pub panel: ReturnPanel,
    fingerprint: u64,
    pub majors: Vec<SectorLabel>,
    pub minors: Vec<SectorLabel>,
    stocks: Vec<usize>,
    indices: Vec<usize>,
    market: Option<usize>,
}

impl Pipeline {
    pub fn load(cfg: RunConfig) -> std::result::Result<Self, Failure> {
        cfg.check_inputs().ctx("ingest", None)?;
        let prices = load_prices(&cfg.prices, cfg.price_format).ctx("ingest", None)?;
        let mut panel = compute_log_returns(&prices).ctx("ingest", None)?;
        let map = load_sector_map(&cfg.sectors).ctx("ingest", None)?;
        panel.apply_sector_map(&map).ctx("ingest", None)?;
        info!(
            "loaded {} assets over {} return dates",
            panel.n_assets(),
            panel.n_dates()
        );

        let mut majors = Vec::new();
        let mut minors = Vec::new();
        for a in panel.assets() {
            if let Some(s) = a.sector {
                majors.push(SectorLabel::major(s.major));
                if s.minor.is_some() {
                    minors.push(s);
                }
            }
        }
        majors.sort();
        majors.dedup();
        minors.sort();
        minors.dedup();
        let kind_idx = |kind: AssetKind| -> Vec<usize> {
            (0..panel.n_assets())
                .filter(|&i| panel.assets()[i].kind == kind)
                .collect()
        };
        let stocks = kind_idx(AssetKind::Stock);
        let indices = kind_idx(AssetKind::Index);
        let market = match &cfg.market_index {
            Some(id) => Some(panel.asset_index(id).ok_or_else(|| {
                Failure::new(
                    "cli",
                    None,
                    Error::Config(format!("market_index `{id}` is not in the price panel")),
                )
            })?),
            None => None,
        };
        Ok(Pipeline {
            fingerprint: panel_fingerprint(&panel),
            cfg,
            panel,
            majors,
            minors,
            stocks,
            indices,
            market,
        })
    }

    pub fn windows(&self) -> std::result::Result<Vec<Window>, Failure> {
        enumerate_windows(&self.cfg.window).ctx("corrwin", None)
    }

    fn cache_dir(&self) -> PathBuf {
        self.cfg.out.join("cache")
    }

    /// Correlation matrix for `w` at trim level `k`, read from or written to
    /// the cache.
    pub fn matrix(&self, w: &Window, k: usize) -> Result<CorrelationMatrix> {
        let key = CacheKey {
            window: *w,
            trim_k: k,
            min_overlap: self.cfg.min_overlap,
            fingerprint: self.fingerprint,
        };
        let path = self.cache_dir().join(key.file_name());
        if let Some(m) = read_cache(&path, &key, self.panel.assets())? {
            debug!("cache hit {}", path.display());
            return Ok(m);
        }
        let m = pearson_matrix(&self.panel, w, k, self.cfg.min_overlap)?;
        fs::create_dir_all(self.cache_dir()).map_err(|e| Error::io(self.cache_dir(), e))?;
        write_cache(&m, &key, &path)?;
        Ok(m)
    }

    pub fn network(&self, w: &Window) -> std::result::Result<CorrelationNetwork, Failure> {
        let m = self
            .matrix(w, self.cfg.network_trim)
            .ctx("corrwin", Some(w))?;
        build_threshold_network(&m, &self.cfg.threshold).ctx("network", Some(w))
    }

    fn groups(&self) -> Vec<SectorLabel> {
        self.majors.iter().chain(&self.minors).copied().collect()
    }

    fn process(&self, w: &Window) -> std::result::Result<WindowOutput, Failure> {
        debug!("processing window {w}");
        let cfg = &self.cfg;
        let rows = self.panel.rows_in(w.start, w.end);
        let groups = self.groups();
        let mut notes = Vec::new();
        let mut blocks = Vec::new();
        let mut net_matrix = None;
        for &k in &cfg.trims {
            let m = self.matrix(w, k).ctx("corrwin", Some(w))?;
            blocks.extend(self.block_rows(&m, &groups));
            if k == cfg.network_trim {
                net_matrix = Some(m);
            }
        }
        let m = net_matrix.expect("network trim is always listed");
        let net = build_threshold_network(&m, &cfg.threshold).ctx("network", Some(w))?;

        let mut note = |test: &'static str, subject: String, e: Error| {
            notes.push(Note {
                window: Some(w.label()),
                test,
                subject,
                reason: e.to_string(),
            })
        };
        let density = link_density_report(&net, &groups);
        let mut merges = Vec::new();
        let mut clusters = Vec::new();
        for level in [&self.majors, &self.minors] {
            for (i, a) in level.iter().enumerate() {
                for b in &level[i + 1..] {
                    match merge_tstat(&net, a, b, cfg.alpha_merge) {
                        Ok(r) => merges.push(r),
                        Err(e) => note("merge", format!("{a}|{b}"), e),
                    }
                }
                let others: Vec<SectorLabel> = level.iter().filter(|o| *o != a).copied().collect();
                if others.is_empty() {
                    continue;
                }
                match self_clustering(&net, a, &others) {
                    Ok(r) => clusters.push(r),
                    Err(e) => note("self_clustering", a.to_string(), e),
                }
            }
        }
        let mut links = Vec::new();
        for &ix in &self.indices {
            let id = &self.panel.assets()[ix].id;
            for g in &groups {
                match index_linkage(&net, id, g) {
                    Ok(r) => links.push(r),
                    Err(e) => note("index_linkage", format!("{id}|{g}"), e),
                }
            }
        }

        let market_return = if rows.is_empty() {
            None
        } else if let Some(mi) = self.market {
            Some(rows.clone().filter_map(|t| self.panel.get(t, mi)).sum())
        } else {
            Some(
                rows.clone()
                    .filter_map(|t| {
                        mean_of(self.stocks.iter().filter_map(|&i| self.panel.get(t, i)))
                    })
                    .sum(),
            )
        };
        Ok(WindowOutput {
            window: *w,
            n_dates: rows.len(),
            trimmed_days: m.trimmed_days.clone(),
            avg_corr: m.average_all_pairs(&self.stocks).mean,
            market_return,
            blocks,
            density,
            merges,
            clusters,
            links,
            network: net,
            notes,
        })
    }

    fn block_rows(&self, m: &CorrelationMatrix, groups: &[SectorLabel]) -> Vec<BlockRow> {
        let assets = self.panel.assets();
        let members: Vec<Vec<usize>> = groups.iter().map(|g| members_of(assets, g)).collect();
        let mut out = Vec::new();
        let mut push = |a: String, b: String, ga: &[usize], gb: &[usize]| {
            let avg = average_block_correlation(m, ga, gb);
            out.push(BlockRow {
                trim_k: m.trim_k,
                group_a: a,
                group_b: b,
                mean: avg.mean,
                n_defined: avg.n_defined,
                n_undefined: avg.n_undefined,
            });
        };
        push("all".into(), "all".into(), &self.stocks, &self.stocks);
        for (i, g) in groups.iter().enumerate() {
            push(g.to_string(), g.to_string(), &members[i], &members[i]);
        }
        for level in [&self.majors, &self.minors] {
            for (i, a) in level.iter().enumerate() {
                for b in &level[i + 1..] {
                    push(
                        a.to_string(),
                        b.to_string(),
                        &members_of(assets, a),
                        &members_of(assets, b),
                    );
                }
            }
        }
        for &ix in &self.indices {
            for (i, g) in groups.iter().enumerate() {
                push(assets[ix].id.clone(), g.to_string(), &[ix], &members[i]);
            }
        }
        out
    }
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// A statistic that could not be computed; reported, never fatal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Note {
    pub window: Option<String>,
    pub test: &'static str,
    pub subject: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockRow {
    pub trim_k: usize,
    pub group_a: String,
    pub group_b: String,
    pub mean: Option<f64>,
    pub n_defined: usize,
    pub n_undefined: usize,
}

pub struct WindowOutput {
    pub window: Window,
    pub n_dates: usize,
    pub trimmed_days: Vec<NaiveDate>,
    /// Mean correlation over all stock pairs at the network trim level.
    pub avg_corr: Option<f64>,
    /// Summed log return of the market proxy over the window.
    pub market_return: Option<f64>,
    pub blocks: Vec<BlockRow>,
    pub density: LinkDensityReport,
    pub merges: Vec<MergeTestResult>,
    pub clusters: Vec<SelfClusterResult>,
    pub links: Vec<IndexLinkResult>,
    pub network: CorrelationNetwork,
    pub notes: Vec<Note>,
}

pub struct Analysis {
    pub windows: Vec<WindowOutput>,
    pub trends: Vec<TrendTestResult>,
    pub decline: Option<DeclineTestResult>,
    pub libor_spread: Option<ExogenousSeries>,
    pub notes: Vec<Note>,
}

/// Quarters elapsed from `origin` to `d`, by calendar month.
fn quarter_offset(origin: NaiveDate, d: NaiveDate) -> f64 {
    let months = (d.year() - origin.year()) * 12 + d.month() as i32 - origin.month() as i32;
    months as f64 / 3.0
}

pub fn run(pipeline: &Pipeline, windows: &[Window]) -> std::result::Result<Analysis, Failure> {
    let results: Vec<_> = windows.par_iter().map(|w| pipeline.process(w)).collect();
    let outputs = results
        .into_iter()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    info!("processed {} windows", outputs.len());
    let mut notes: Vec<Note> = Vec::new();

    let mut series: BTreeMap<String, Vec<(NaiveDate, f64)>> = BTreeMap::new();
    let mut add = |name: String, d: NaiveDate, v: Option<f64>| {
        let s = series.entry(name).or_default();
        if let Some(v) = v {
            s.push((d, v));
        }
    };
    for o in &outputs {
        let d = o.window.start;
        add("avg_corr".into(), d, o.avg_corr);
        for c in &o.clusters {
            add(format!("self_clustering:{}", c.sector), d, c.t_min);
        }
        for m in &o.merges {
            add(format!("merge_t:{}|{}", m.sector_a, m.sector_b), d, m.t);
        }
        for l in &o.links {
            add(format!("index_t:{}|{}", l.index, l.sector), d, l.t);
        }
    }
    let mut trends = Vec::new();
    if let Some(first) = windows.first() {
        for (name, pts) in &series {
            let xy: Vec<(f64, f64)> = pts
                .iter()
                .map(|(d, v)| (quarter_offset(first.start, *d), *v))
                .collect();
            let mut r = match slope_trend_test_at(name, &xy) {
                Ok(r) => r,
                Err(e) => {
                    notes.push(Note {
                        window: None,
                        test: "trend",
                        subject: name.clone(),
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            if let Some(year) = pipeline.cfg.sign_change_year {
                match sign_change_test(pts, year) {
                    Ok(s) => r.sign_change = Some(s),
                    Err(e) => notes.push(Note {
                        window: None,
                        test: "sign_change",
                        subject: name.clone(),
                        reason: e.to_string(),
                    }),
                }
            }
            trends.push(r);
        }
    }

    let (corr, ret): (Vec<f64>, Vec<f64>) = outputs
        .iter()
        .filter_map(|o| Some((o.avg_corr?, o.market_return?)))
        .unzip();
    let decline = match decline_coincidence_test(&corr, &ret) {
        Ok(d) => Some(d),
        Err(e) => {
            notes.push(Note {
                window: None,
                test: "decline_coincidence",
                subject: "avg_corr|market_return".into(),
                reason: e.to_string(),
            });
            None
        }
    };

    let libor_spread = match &pipeline.cfg.exogenous {
        Some((libor, ffr)) => {
            let l = load_exogenous(libor, "libor").ctx("ingest", None)?;
            let f = load_exogenous(ffr, "ffr").ctx("ingest", None)?;
            let quarters: Vec<NaiveDate> = windows.iter().map(|w| w.start).collect();
            Some(derive_libor_spread(&l, &f, &quarters).ctx("ingest", None)?)
        }
        None => None,
    };

    for o in &outputs {
        notes.extend(o.notes.iter().cloned());
    }
    for n in &notes {
        warn!(
            "undefined {} for {}{}: {}",
            n.test,
            n.subject,
            n.window
                .as_deref()
                .map(|w| format!(" in {w}"))
                .unwrap_or_default(),
            n.reason
        );
    }
    Ok(Analysis {
        windows: outputs,
        trends,
        decline,
        libor_spread,
        notes,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, body).map_err(|e| Error::io(p, e))
}

fn windows_csv(a: &Analysis) -> String {
    let mut s = String::from(
        "window,start,end,n_dates,n_assets,defined_pairs,edges,global_density,avg_corr,market_return,trimmed_days\n",
    );
    for o in &a.windows {
        let trimmed: Vec<String> = o
            .trimmed_days
            .iter()
            .map(|d| d.format(DATE_FORMAT).to_string())
            .collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            o.window.label(),
            o.window.start.format(DATE_FORMAT),
            o.window.end.format(DATE_FORMAT),
            o.n_dates,
            o.network.n_nodes(),
            o.network.defined_pairs(),
            o.network.edges.len(),
            o.network.global_density(),
            opt(o.avg_corr),
            opt(o.market_return),
            trimmed.join(";")
        );
    }
    s
}

fn blocks_csv(a: &Analysis) -> String {
    let mut s = String::from("window,trim_k,group_a,group_b,mean,n_defined,n_undefined\n");
    for o in &a.windows {
        for b in &o.blocks {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                o.window.label(),
                b.trim_k,
                b.group_a,
                b.group_b,
                opt(b.mean),
                b.n_defined,
                b.n_undefined
            );
        }
    }
    s
}

fn density_csv(a: &Analysis) -> String {
    let mut s = String::from("window,group_a,group_b,density\n");
    for o in &a.windows {
        let w = o.window.label();
        let _ = writeln!(s, "{w},all,all,{}", o.density.global_density);
        for (g, d) in &o.density.within {
            let _ = writeln!(s, "{w},{g},{g},{}", opt(*d));
        }
        for (pair, d) in &o.density.between {
            let (ga, gb) = pair.split_once('|').unwrap_or((pair, ""));
            let _ = writeln!(s, "{w},{ga},{gb},{}", opt(*d));
        }
    }
    s
}

fn merges_csv(a: &Analysis) -> String {
    let mut s = String::from(
        "window,sector_a,sector_b,t,df,p_one_sided,merged,degenerate,within_links,within_pairs,between_links,between_pairs,within_pooled\n",
    );
    for o in &a.windows {
        for m in &o.merges {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                o.window.label(),
                m.sector_a,
                m.sector_b,
                opt(m.t),
                opt(m.df),
                p_value::format_opt(m.p_one_sided),
                m.merged,
                m.degenerate,
                m.within.linked,
                m.within.pairs,
                m.between.linked,
                m.between.pairs,
                m.within_pooled
            );
        }
    }
    s
}

fn clusters_csv(a: &Analysis) -> String {
    let mut s = String::from("window,sector,t_min,argmin_sector,other_sector,t\n");
    for o in &a.windows {
        for c in &o.clusters {
            let argmin = c.argmin_sector.map(|l| l.to_string()).unwrap_or_default();
            for (other, t) in &c.per_sector_t {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    o.window.label(),
                    c.sector,
                    opt(c.t_min),
                    argmin,
                    other,
                    opt(*t)
                );
            }
        }
    }
    s
}

fn links_csv(a: &Analysis) -> String {
    let mut s = String::from("window,index,sector,t,status,link_rate,base_rate,n,degenerate\n");
    for o in &a.windows {
        for l in &o.links {
            let _ = writeln!(
                s,
                "{},{},{},{},{:?},{},{},{},{}",
                o.window.label(),
                l.index,
                l.sector,
                opt(l.t),
                l.status,
                l.link_rate,
                l.base_rate,
                l.n,
                l.degenerate
            );
        }
    }
    s
}

fn trends_csv(a: &Analysis) -> String {
    let mut s =
        String::from("series,n,slope,intercept,t_slope,p,sign_change_year,changed,p_pre,p_sign\n");
    for t in &a.trends {
        let sc = match &t.sign_change {
            Some(c) => format!(
                "{},{},{},{}",
                c.year,
                c.changed,
                p_value::format(c.p_pre),
                p_value::format(c.p_sign)
            ),
            None => ",,,".into(),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            t.series_name,
            t.n,
            t.slope,
            t.intercept,
            opt(t.t_slope),
            p_value::format(t.p),
            sc
        );
    }
    s
}

fn decline_csv(a: &Analysis) -> String {
    let mut s = String::from("t,df,p_one_sided,n_decline,n_rise,mean_decline,mean_rise\n");
    if let Some(d) = &a.decline {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            opt(d.t),
            opt(d.df),
            p_value::format_opt(d.p_one_sided),
            d.n_decline,
            d.n_rise,
            d.mean_decline,
            d.mean_rise
        );
    }
    s
}

fn notes_csv(a: &Analysis) -> String {
    let mut s = String::from("window,test,subject,reason\n");
    for n in &a.notes {
        let _ = writeln!(
            s,
            "{},{},{},\"{}\"",
            n.window.as_deref().unwrap_or(""),
            n.test,
            n.subject,
            n.reason.replace('"', "\"\"")
        );
    }
    s
}

#[derive(Serialize)]
struct RunSummary<'a> {
    window_mode: String,
    window_length_months: u32,
    window_shift_months: u32,
    trims: &'a [usize],
    network_trim: usize,
    quantile: f64,
    min_overlap: usize,
    alpha_merge: f64,
    sign_change_year: Option<i32>,
    market_index: Option<&'a str>,
}

#[derive(Serialize)]
struct WindowReport<'a> {
    window: String,
    n_dates: usize,
    defined_pairs: usize,
    edges: usize,
    global_density: f64,
    avg_corr: Option<f64>,
    market_return: Option<f64>,
    trimmed_days: Vec<String>,
    link_density: &'a LinkDensityReport,
    merge_tests: &'a [MergeTestResult],
    self_clustering: &'a [SelfClusterResult],
    index_linkage: &'a [IndexLinkResult],
}

#[derive(Serialize)]
struct Report<'a> {
    run: RunSummary<'a>,
    windows: Vec<WindowReport<'a>>,
    trends: &'a [TrendTestResult],
    decline_coincidence: Option<&'a DeclineTestResult>,
    libor_spread: Option<BTreeMap<String, f64>>,
    undefined: &'a [Note],
}

fn report_json(cfg: &RunConfig, a: &Analysis) -> Result<String> {
    let report = Report {
        run: RunSummary {
            window_mode: format!("{:?}", cfg.window.mode),
            window_length_months: cfg.window.length_months,
            window_shift_months: cfg.window.shift_months,
            trims: &cfg.trims,
            network_trim: cfg.network_trim,
            quantile: cfg.threshold.quantile,
            min_overlap: cfg.min_overlap,
            alpha_merge: cfg.alpha_merge,
            sign_change_year: cfg.sign_change_year,
            market_index: cfg.market_index.as_deref(),
        },
        windows: a
            .windows
            .iter()
            .map(|o| WindowReport {
                window: o.window.label(),
                n_dates: o.n_dates,
                defined_pairs: o.network.defined_pairs(),
                edges: o.network.edges.len(),
                global_density: o.network.global_density(),
                avg_corr: o.avg_corr,
                market_return: o.market_return,
                trimmed_days: o
                    .trimmed_days
                    .iter()
                    .map(|d| d.format(DATE_FORMAT).to_string())
                    .collect(),
                link_density: &o.density,
                merge_tests: &o.merges,
                self_clustering: &o.clusters,
                index_linkage: &o.links,
            })
            .collect(),
        trends: &a.trends,
        decline_coincidence: a.decline.as_ref(),
        libor_spread: a.libor_spread.as_ref().map(|s| {
            s.dates()
                .iter()
                .zip(s.values())
                .map(|(d, v)| (d.format(DATE_FORMAT).to_string(), *v))
                .collect()
        }),
        undefined: &a.notes,
    };
    let mut s = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Computation(format!("report serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Write every report file under `cfg.out`.
pub fn write_reports(cfg: &RunConfig, a: &Analysis) -> Result<()> {
    let dir = &cfg.out;
    let nets = dir.join("networks");
    fs::create_dir_all(&nets).map_err(|e| Error::io(&nets, e))?;
    for o in &a.windows {
        EdgeList::from_network(NetworkRef::Single(&o.network))
            .write(nets.join(format!("{}.edges.csv", o.window.label())))?;
    }
    write(dir, "windows.csv", &windows_csv(a))?;
    write(dir, "block_correlations.csv", &blocks_csv(a))?;
    write(dir, "link_density.csv", &density_csv(a))?;
    write(dir, "merge_tests.csv", &merges_csv(a))?;
    write(dir, "self_clustering.csv", &clusters_csv(a))?;
    write(dir, "index_linkage.csv", &links_csv(a))?;
    write(dir, "trends.csv", &trends_csv(a))?;
    write(dir, "decline_coincidence.csv", &decline_csv(a))?;
    write(dir, "undefined.csv", &notes_csv(a))?;
    if let Some(s) = &a.libor_spread {
        write_exogenous(s, dir.join("libor_spread.csv"))?;
    }
    write(dir, "report.json", &report_json(cfg, a)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_offsets() {
        let d = |y, m| NaiveDate::from_ymd_opt(y, m, 1).unwrap();
        assert_eq!(quarter_offset(d(2003, 1), d(2003, 1)), 0.0);
        assert_eq!(quarter_offset(d(2003, 1), d(2004, 4)), 5.0);
        assert_eq!(quarter_offset(d(2003, 1), d(2005, 1)), 8.0);
    }
}
