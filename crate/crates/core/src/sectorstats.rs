//! Sector-level statistics on thresholded networks and cross-window series.
//!
//! Link indicators of a network are treated as independent Bernoulli
//! samples. Density comparisons use Welch's t-test with Welch–Satterthwaite
//! degrees of freedom. Degenerate samples (both variances zero) never get a
//! fabricated statistic: `t` stays undefined and a flag is set.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use serde::Serialize;

use crate::corrwin::Window;
use crate::error::{Error, Result};
use crate::ingest::{members_of, AssetKind, SectorLabel};
use crate::network::CorrelationNetwork;
use crate::stats::{
    floor_p, ols, one_sample_t, student_t_two_sided, student_t_upper, welch, SampleSummary, P_FLOOR,
};

/// Default one-sided p threshold at or above which two sectors count as merged.
pub const DEFAULT_ALPHA_MERGE: f64 = 0.05;
pub const LINKED_ABOVE: f64 = 4.0;
pub const UNLINKED_BELOW: f64 = 2.0;

/// p-value rendering: scientific notation, six significant digits.
pub mod p_value {
    use serde::Serializer;

    pub fn format(p: f64) -> String {
        format!("{p:.5e}")
    }

    pub fn format_opt(p: Option<f64>) -> String {
        p.map(format).unwrap_or_default()
    }

    pub fn round(p: f64) -> f64 {
        format(p).parse().unwrap_or(p)
    }

    pub fn serialize<S: Serializer>(p: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match p {
            Some(v) => s.serialize_f64(round(*v)),
            None => s.serialize_none(),
        }
    }

    pub fn serialize_f64<S: Serializer>(p: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(round(*p))
    }
}

/// Edges and defined pairs within a designated block of node pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct LinkCount {
    pub linked: usize,
    pub pairs: usize,
}

impl LinkCount {
    /// `None` when the block has no defined pairs.
    pub fn density(&self) -> Option<f64> {
        (self.pairs > 0).then(|| self.linked as f64 / self.pairs as f64)
    }

    fn add(self, other: LinkCount) -> LinkCount {
        LinkCount {
            linked: self.linked + other.linked,
            pairs: self.pairs + other.pairs,
        }
    }
}

/// Link density over the defined pairs designated by two node groups.
///
/// Identical groups use distinct unordered pairs within the group;
/// otherwise every cross pair is used.
pub fn link_density(net: &CorrelationNetwork, group_a: &[usize], group_b: &[usize]) -> LinkCount {
    let mut a = group_a.to_vec();
    let mut b = group_b.to_vec();
    a.sort_unstable();
    a.dedup();
    b.sort_unstable();
    b.dedup();
    let mut c = LinkCount::default();
    let mut visit = |i: usize, j: usize| {
        if net.is_defined(i, j) {
            c.pairs += 1;
            if net.is_linked(i, j) {
                c.linked += 1;
            }
        }
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
    c
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkDensityReport {
    pub window: String,
    pub within: BTreeMap<String, Option<f64>>,
    pub between: BTreeMap<String, Option<f64>>,
    pub global_density: f64,
}

/// Within- and between-sector densities for every sector and sector pair.
pub fn link_density_report(net: &CorrelationNetwork, sectors: &[SectorLabel]) -> LinkDensityReport {
    let groups: Vec<Vec<usize>> = sectors.iter().map(|s| members_of(&net.nodes, s)).collect();
    let mut within = BTreeMap::new();
    let mut between = BTreeMap::new();
    for (k, s) in sectors.iter().enumerate() {
        within.insert(
            s.to_string(),
            link_density(net, &groups[k], &groups[k]).density(),
        );
        for (l, t) in sectors.iter().enumerate().skip(k + 1) {
            between.insert(
                format!("{s}|{t}"),
                link_density(net, &groups[k], &groups[l]).density(),
            );
        }
    }
    LinkDensityReport {
        window: net.window.label(),
        within,
        between,
        global_density: net.global_density(),
    }
}

/// Welch comparison of a within-sample density against a between-sample one.
#[derive(Debug, Clone, Copy, PartialEq)]
struct DensityTest {
    t: Option<f64>,
    df: Option<f64>,
    p_greater: Option<f64>,
    degenerate: bool,
}

fn density_ttest(within: LinkCount, between: LinkCount) -> Result<DensityTest> {
    let s1 = SampleSummary::bernoulli(within.linked, within.pairs).ok_or_else(|| {
        Error::Argument(format!(
            "within sample needs at least 2 defined pairs, has {}",
            within.pairs
        ))
    })?;
    let s2 = SampleSummary::bernoulli(between.linked, between.pairs).ok_or_else(|| {
        Error::Argument(format!(
            "between sample needs at least 2 defined pairs, has {}",
            between.pairs
        ))
    })?;
    Ok(match welch(&s1, &s2) {
        Some(w) => DensityTest {
            t: Some(w.t),
            df: Some(w.df),
            p_greater: Some(w.p_greater),
            degenerate: false,
        },
        None => DensityTest {
            t: None,
            df: None,
            p_greater: None,
            degenerate: true,
        },
    })
}

fn sector_members(net: &CorrelationNetwork, s: &SectorLabel) -> Result<Vec<usize>> {
    let m = members_of(&net.nodes, s);
    if m.len() < 2 {
        return Err(Error::Argument(format!(
            "sector {s} has {} members in window {}; need at least 2",
            m.len(),
            net.window
        )));
    }
    Ok(m)
}

fn check_disjoint(a: &SectorLabel, b: &SectorLabel) -> Result<()> {
    if a.contains(b) || b.contains(a) {
        return Err(Error::Argument(format!("sectors {a} and {b} overlap")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeTestResult {
    pub sector_a: SectorLabel,
    pub sector_b: SectorLabel,
    pub t: Option<f64>,
    pub df: Option<f64>,
    #[serde(serialize_with = "p_value::serialize")]
    pub p_one_sided: Option<f64>,
    pub merged: bool,
    /// Both samples had zero variance; `merged` came from comparing raw densities.
    pub degenerate: bool,
    pub within: LinkCount,
    pub between: LinkCount,
    /// The within sample pools within-A and within-B pairs.
    pub within_pooled: bool,
}

/// Merging statistic for sectors `a` and `b`.
///
/// Sample 1 is the link indicators over within-`a` plus within-`b` pairs,
/// sample 2 over `a x b` pairs. `merged` holds when the one-sided p for
/// "within denser than between" is at least `alpha_merge`.
pub fn merge_tstat(
    net: &CorrelationNetwork,
    a: &SectorLabel,
    b: &SectorLabel,
    alpha_merge: f64,
) -> Result<MergeTestResult> {
    check_disjoint(a, b)?;
    let ma = sector_members(net, a)?;
    let mb = sector_members(net, b)?;
    let within = link_density(net, &ma, &ma).add(link_density(net, &mb, &mb));
    let between = link_density(net, &ma, &mb);
    let test = density_ttest(within, between)?;
    let merged = match test.p_greater {
        Some(p) => p >= alpha_merge,
        None => within.density() <= between.density(),
    };
    Ok(MergeTestResult {
        sector_a: *a,
        sector_b: *b,
        t: test.t,
        df: test.df,
        p_one_sided: test.p_greater,
        merged,
        degenerate: test.degenerate,
        within,
        between,
        within_pooled: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfClusterResult {
    pub sector: SectorLabel,
    /// `None` when every per-sector statistic is undefined.
    pub t_min: Option<f64>,
    pub argmin_sector: Option<SectorLabel>,
    pub per_sector_t: BTreeMap<String, Option<f64>>,
    /// Sectors whose statistic was undefined and excluded from the minimum.
    pub undefined: Vec<SectorLabel>,
}

/// Minimum over other sectors of the within-`a` versus `a x b` density
/// t-statistic.
pub fn self_clustering(
    net: &CorrelationNetwork,
    a: &SectorLabel,
    others: &[SectorLabel],
) -> Result<SelfClusterResult> {
    if others.is_empty() {
        return Err(Error::Argument(format!(
            "self-clustering of {a} needs at least one other sector"
        )));
    }
    let ma = sector_members(net, a)?;
    let within = link_density(net, &ma, &ma);
    let mut per_sector_t = BTreeMap::new();
    let mut undefined = Vec::new();
    let mut best: Option<(f64, SectorLabel)> = None;
    for b in others {
        check_disjoint(a, b)?;
        let mb = members_of(&net.nodes, b);
        let t = density_ttest(within, link_density(net, &ma, &mb))
            .ok()
            .and_then(|d| d.t);
        per_sector_t.insert(b.to_string(), t);
        match t {
            Some(t) => {
                if best.is_none_or(|(m, _)| t < m) {
                    best = Some((t, *b));
                }
            }
            None => undefined.push(*b),
        }
    }
    Ok(SelfClusterResult {
        sector: *a,
        t_min: best.map(|b| b.0),
        argmin_sector: best.map(|b| b.1),
        per_sector_t,
        undefined,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LinkStatus {
    Linked,
    Unlinked,
    Indeterminate,
}

/// Linked strictly above 4, unlinked strictly below 2.
pub fn classify_link(t: f64) -> LinkStatus {
    if t > LINKED_ABOVE {
        LinkStatus::Linked
    } else if t < UNLINKED_BELOW {
        LinkStatus::Unlinked
    } else {
        LinkStatus::Indeterminate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexLinkResult {
    pub index: String,
    pub sector: SectorLabel,
    pub t: Option<f64>,
    pub status: LinkStatus,
    /// Fraction of sector members linked to the index.
    pub link_rate: f64,
    /// Global density of the network, the null link rate.
    pub base_rate: f64,
    pub n: usize,
    pub degenerate: bool,
}

/// One-sample t-test of the index's link rate to `sector` members against
/// the network's global density.
pub fn index_linkage(
    net: &CorrelationNetwork,
    index: &str,
    sector: &SectorLabel,
) -> Result<IndexLinkResult> {
    let k = net.index_of(index).ok_or_else(|| {
        Error::Argument(format!("index `{index}` not in network for {}", net.window))
    })?;
    let members: Vec<usize> = members_of(&net.nodes, sector)
        .into_iter()
        .filter(|&i| i != k && net.is_defined(i, k))
        .collect();
    let n = members.len();
    if n < 2 {
        return Err(Error::Argument(format!(
            "sector {sector} has {n} members with a defined correlation to `{index}`; need at least 2"
        )));
    }
    let linked = members.iter().filter(|&&i| net.is_linked(i, k)).count();
    let sample = SampleSummary::bernoulli(linked, n).expect("n >= 2");
    let p0 = net.global_density();
    let (t, status, degenerate) = if sample.variance > 0.0 {
        let (t, _) = one_sample_t(&sample, p0);
        (Some(t), classify_link(t), false)
    } else if sample.mean > p0 {
        (None, LinkStatus::Linked, true)
    } else if sample.mean < p0 {
        (None, LinkStatus::Unlinked, true)
    } else {
        (None, LinkStatus::Indeterminate, true)
    };
    Ok(IndexLinkResult {
        index: index.to_string(),
        sector: *sector,
        t,
        status,
        link_rate: sample.mean,
        base_rate: p0,
        n,
        degenerate,
    })
}

/// Whether the node at `i` is an index.
pub fn is_index(net: &CorrelationNetwork, i: usize) -> bool {
    net.nodes[i].kind == AssetKind::Index
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignChangeResult {
    pub year: i32,
    pub changed: bool,
    pub pre_mean: f64,
    pub year_mean: f64,
    #[serde(serialize_with = "p_value::serialize_f64")]
    pub p_pre: f64,
    #[serde(serialize_with = "p_value::serialize_f64")]
    pub p_sign: f64,
    pub n_pre: usize,
    pub n_year: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendTestResult {
    pub series_name: String,
    pub n: usize,
    /// Change per step of the x variable (one quarter for quarterly windows).
    pub slope: f64,
    pub intercept: f64,
    /// `None` when residuals vanish and the slope is nonzero (infinite t).
    pub t_slope: Option<f64>,
    #[serde(serialize_with = "p_value::serialize_f64")]
    pub p: f64,
    pub sign_change: Option<SignChangeResult>,
}

/// OLS trend of `values` on their position `0, 1, 2, ...`.
pub fn slope_trend_test(series_name: &str, values: &[f64]) -> Result<TrendTestResult> {
    let points: Vec<(f64, f64)> = values
        .iter()
        .enumerate()
        .map(|(k, v)| (k as f64, *v))
        .collect();
    slope_trend_test_at(series_name, &points)
}

/// OLS trend on explicit `(x, y)` points; two-sided p from Student t with
/// `n - 2` degrees of freedom, floored at [`P_FLOOR`].
pub fn slope_trend_test_at(series_name: &str, points: &[(f64, f64)]) -> Result<TrendTestResult> {
    let n = points.len();
    if n < 3 {
        return Err(Error::Argument(format!(
            "trend test on `{series_name}` needs at least 3 points, has {n}"
        )));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Argument(format!(
            "trend test on `{series_name}` got non-finite values"
        )));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let constant = y.iter().all(|v| *v == y[0]);
    let fit = ols(&x, &y)
        .ok_or_else(|| Error::Argument(format!("trend test on `{series_name}` has constant x")))?;
    let (slope, t_slope, p) = if constant {
        (0.0, Some(0.0), 1.0)
    } else if fit.slope_se > 0.0 {
        let t = fit.slope / fit.slope_se;
        (fit.slope, Some(t), floor_p(student_t_two_sided(t, fit.df)))
    } else if fit.slope == 0.0 {
        (0.0, Some(0.0), 1.0)
    } else {
        (fit.slope, None, P_FLOOR)
    };
    Ok(TrendTestResult {
        series_name: series_name.to_string(),
        n,
        slope,
        intercept: fit.intercept,
        t_slope,
        p,
        sign_change: None,
    })
}

const SIGN_ALPHA: f64 = 0.05;

/// Tests whether a dated series flips sign in `year`.
///
/// The mean before `year` must differ from zero (two-sided one-sample t),
/// and the mean inside `year` must have the opposite sign (one-sided
/// one-sample t); both at the 0.05 level.
pub fn sign_change_test(series: &[(NaiveDate, f64)], year: i32) -> Result<SignChangeResult> {
    let pre: Vec<f64> = series
        .iter()
        .filter(|(d, _)| d.year() < year)
        .map(|p| p.1)
        .collect();
    let cur: Vec<f64> = series
        .iter()
        .filter(|(d, _)| d.year() == year)
        .map(|p| p.1)
        .collect();
    if pre.len() < 4 || cur.len() < 2 {
        return Err(Error::Argument(format!(
            "sign change test for {year} needs >= 4 points before and >= 2 inside the year, got {} and {}",
            pre.len(),
            cur.len()
        )));
    }
    let pre_s = SampleSummary::from_values(&pre).expect("len >= 4");
    let cur_s = SampleSummary::from_values(&cur).expect("len >= 2");
    let (t_pre, df_pre) = one_sample_t(&pre_s, 0.0);
    let p_pre = if t_pre.is_nan() {
        1.0
    } else {
        floor_p(student_t_two_sided(t_pre, df_pre))
    };
    let (t_cur, df_cur) = one_sample_t(&cur_s, 0.0);
    let p_sign = if t_cur.is_nan() || pre_s.mean == 0.0 {
        1.0
    } else if pre_s.mean > 0.0 {
        floor_p(student_t_upper(-t_cur, df_cur))
    } else {
        floor_p(student_t_upper(t_cur, df_cur))
    };
    Ok(SignChangeResult {
        year,
        changed: p_pre < SIGN_ALPHA && p_sign < SIGN_ALPHA,
        pre_mean: pre_s.mean,
        year_mean: cur_s.mean,
        p_pre,
        p_sign,
        n_pre: pre.len(),
        n_year: cur.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeclineTestResult {
    pub t: Option<f64>,
    pub df: Option<f64>,
    #[serde(serialize_with = "p_value::serialize")]
    pub p_one_sided: Option<f64>,
    pub n_decline: usize,
    pub n_rise: usize,
    pub mean_decline: f64,
    pub mean_rise: f64,
}

pub const MIN_DECLINE_GROUP: usize = 4;

/// One-sided Welch test that average correlation is higher in periods with
/// negative market return than in the others.
pub fn decline_coincidence_test(
    avg_corr: &[f64],
    market_return: &[f64],
) -> Result<DeclineTestResult> {
    if avg_corr.len() != market_return.len() {
        return Err(Error::Argument(format!(
            "series not aligned: {} correlations vs {} returns",
            avg_corr.len(),
            market_return.len()
        )));
    }
    let (mut decline, mut rise) = (Vec::new(), Vec::new());
    for (c, r) in avg_corr.iter().zip(market_return) {
        if *r < 0.0 {
            decline.push(*c);
        } else {
            rise.push(*c);
        }
    }
    for (name, g) in [("decline", &decline), ("rise", &rise)] {
        if g.len() < MIN_DECLINE_GROUP {
            return Err(Error::Argument(format!(
                "{name} group has {} periods; need at least {MIN_DECLINE_GROUP}",
                g.len()
            )));
        }
    }
    let sd = SampleSummary::from_values(&decline).expect("checked size");
    let sr = SampleSummary::from_values(&rise).expect("checked size");
    let w = welch(&sd, &sr);
    Ok(DeclineTestResult {
        t: w.map(|w| w.t),
        df: w.map(|w| w.df),
        p_one_sided: w.map(|w| w.p_greater),
        n_decline: decline.len(),
        n_rise: rise.len(),
        mean_decline: sd.mean,
        mean_rise: sr.mean,
    })
}

/// Quarter label such as `2004Q4` for a window start.
pub fn quarter_label(w: &Window) -> String {
    format!("{}Q{}", w.start.year(), w.start.month0() / 3 + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{AssetRecord, SectorMajor, SectorMinor};
    use crate::network::PairState;

    fn d(s: &str) -> NaiveDate {
        crate::ingest::parse_date(s).unwrap()
    }

    fn win() -> Window {
        Window::new(d("2004-01-01"), d("2005-01-01"))
    }

    /// Network over `nodes` whose edges are exactly `links` (index pairs).
    fn net(nodes: Vec<AssetRecord>, links: &[(usize, usize)]) -> CorrelationNetwork {
        let n = nodes.len();
        let mut states = vec![PairState::Absent; n * n];
        for i in 0..n {
            states[i * n + i] = PairState::Undefined;
        }
        for &(i, j) in links {
            states[i * n + j] = PairState::Linked;
            states[j * n + i] = PairState::Linked;
        }
        CorrelationNetwork::from_states(win(), nodes, states, |_, _| 0.5).unwrap()
    }

    fn stocks(label: SectorLabel, prefix: &str, n: usize) -> Vec<AssetRecord> {
        (0..n)
            .map(|k| AssetRecord::stock(format!("{prefix}{k}"), label))
            .collect()
    }

    const RE: SectorLabel = SectorLabel {
        major: SectorMajor::Finance,
        minor: Some(SectorMinor::RealEstate),
    };
    const OF: SectorLabel = SectorLabel {
        major: SectorMajor::Finance,
        minor: Some(SectorMinor::OtherFinance),
    };
    const TECH: SectorLabel = SectorLabel {
        major: SectorMajor::Technology,
        minor: None,
    };

    #[test]
    fn density_of_three_node_group() {
        let g = net(stocks(TECH, "t", 3), &[(0, 1), (1, 2)]);
        let c = link_density(&g, &[0, 1, 2], &[0, 1, 2]);
        assert_eq!((c.linked, c.pairs), (2, 3));
        assert!((c.density().unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn complete_graph_density_is_one() {
        let all: Vec<(usize, usize)> = (0..4)
            .flat_map(|i| ((i + 1)..4).map(move |j| (i, j)))
            .collect();
        let g = net(stocks(TECH, "t", 4), &all);
        assert_eq!(link_density(&g, &[0, 1], &[2, 3]).density(), Some(1.0));
        assert_eq!(
            link_density(&g, &[0, 1, 2], &[0, 1, 2]).density(),
            Some(1.0)
        );
    }

    #[test]
    fn no_defined_pairs_is_undefined() {
        let g = net(stocks(TECH, "t", 3), &[]);
        assert_eq!(link_density(&g, &[0], &[0]).density(), None);
    }

    /// RE has 3 members, OF has 3 members: within pairs 3 + 3 = 6,
    /// between pairs 9.
    fn six_vs_nine(
        within_links: &[(usize, usize)],
        between_links: &[(usize, usize)],
    ) -> CorrelationNetwork {
        let mut nodes = stocks(RE, "re", 3);
        nodes.extend(stocks(OF, "of", 3));
        let mut links = within_links.to_vec();
        links.extend_from_slice(between_links);
        net(nodes, &links)
    }

    #[test]
    fn merge_tstat_hand_example() {
        // 5 of 6 within pairs linked, 1 of 9 between pairs linked.
        let g = six_vs_nine(&[(0, 1), (0, 2), (1, 2), (3, 4), (3, 5)], &[(0, 3)]);
        let r = merge_tstat(&g, &RE, &OF, DEFAULT_ALPHA_MERGE).unwrap();
        assert_eq!((r.within.linked, r.within.pairs), (5, 6));
        assert_eq!((r.between.linked, r.between.pairs), (1, 9));
        // (5/6 - 1/9) / sqrt(1/36 + 1/81)
        assert!((r.t.unwrap() - 3.605_551_275_463_989).abs() < 1e-9);
        assert!(!r.merged);
        let swapped = merge_tstat(&g, &OF, &RE, DEFAULT_ALPHA_MERGE).unwrap();
        assert_eq!(swapped.t, r.t);
    }

    #[test]
    fn merge_equal_densities_gives_zero_t() {
        // within: 2 of 6 linked; between: 3 of 9 linked.
        let g = six_vs_nine(&[(0, 1), (3, 4)], &[(0, 3), (1, 4), (2, 5)]);
        let r = merge_tstat(&g, &RE, &OF, DEFAULT_ALPHA_MERGE).unwrap();
        assert!(r.t.unwrap().abs() < 1e-12);
        assert!(r.merged);
        assert!((r.p_one_sided.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn merge_zero_variance_flags_and_uses_densities() {
        let mut nodes = stocks(RE, "re", 5);
        nodes.extend(stocks(OF, "of", 5));
        let within: Vec<(usize, usize)> = (0..5)
            .flat_map(|i| ((i + 1)..5).map(move |j| (i, j)))
            .chain((5..10).flat_map(|i| ((i + 1)..10).map(move |j| (i, j))))
            .collect();
        let g = net(nodes, &within);
        let r = merge_tstat(&g, &RE, &OF, DEFAULT_ALPHA_MERGE).unwrap();
        assert_eq!(r.within.pairs, 20);
        assert!(r.degenerate);
        assert_eq!(r.t, None);
        assert!(!r.merged);
    }

    #[test]
    fn merge_requires_two_members() {
        let mut nodes = stocks(RE, "re", 1);
        nodes.extend(stocks(OF, "of", 3));
        let g = net(nodes, &[]);
        assert!(matches!(
            merge_tstat(&g, &RE, &OF, DEFAULT_ALPHA_MERGE),
            Err(Error::Argument(_))
        ));
        let fin = SectorLabel::major(SectorMajor::Finance);
        assert!(merge_tstat(&g, &fin, &OF, DEFAULT_ALPHA_MERGE).is_err());
    }

    #[test]
    fn self_clustering_min_selection() {
        // tech 0..4 fully linked internally, RE 4..8, OF 8..12
        let mut nodes = stocks(TECH, "t", 4);
        nodes.extend(stocks(RE, "re", 4));
        nodes.extend(stocks(OF, "of", 4));
        let mut links: Vec<(usize, usize)> = (0..4)
            .flat_map(|i| ((i + 1)..4).map(move |j| (i, j)))
            .collect();
        links.extend([(0, 4), (1, 5), (2, 8)]);
        let g = net(nodes, &links);
        let r = self_clustering(&g, &TECH, &[RE, OF]).unwrap();
        let t_re = r.per_sector_t["Finance/RealEstate"].unwrap();
        let t_of = r.per_sector_t["Finance/OtherFinance"].unwrap();
        // one link of 16 vs two links of 16: RE is closer
        assert!(t_re < t_of);
        assert_eq!(r.t_min, Some(t_re));
        assert_eq!(r.argmin_sector, Some(RE));
        assert!(r.t_min.unwrap() > 0.0);

        let single = self_clustering(&g, &TECH, &[OF]).unwrap();
        assert_eq!(single.t_min, Some(t_of));
        assert!(self_clustering(&g, &TECH, &[]).is_err());
    }

    #[test]
    fn self_clustering_all_undefined() {
        let mut nodes = stocks(TECH, "t", 3);
        nodes.extend(stocks(RE, "re", 3));
        let g = net(nodes, &[]);
        let r = self_clustering(&g, &TECH, &[RE]).unwrap();
        assert_eq!(r.t_min, None);
        assert_eq!(r.undefined, vec![RE]);
    }

    /// Index node 0 plus a sector of 16 stocks, `linked` of them tied to the
    /// index; padding nodes tune the global density.
    fn index_net(linked: usize, extra_links: usize) -> CorrelationNetwork {
        let mut nodes = vec![AssetRecord::index("OIL")];
        nodes.extend(stocks(TECH, "t", 16));
        let mut links: Vec<(usize, usize)> = (1..=linked).map(|i| (0, i)).collect();
        let mut extra = (1..17).flat_map(|i| ((i + 1)..17).map(move |j| (i, j)));
        links.extend(extra.by_ref().take(extra_links));
        net(nodes, &links)
    }

    #[test]
    fn index_linkage_half_linked() {
        // 17 nodes -> 136 pairs; 8 + 0.5 extra won't divide evenly, so check
        // against the direct formula with the realised base rate.
        let g = index_net(8, 1);
        let r = index_linkage(&g, "OIL", &TECH).unwrap();
        let p0 = 9.0 / 136.0;
        let s2 = 0.5 * 0.5 * 16.0 / 15.0;
        let want = (0.5 - p0) / (s2 / 16.0_f64).sqrt();
        assert!((r.t.unwrap() - want).abs() < 1e-12);
        assert_eq!(r.status, LinkStatus::Indeterminate);
    }

    #[test]
    fn index_linkage_reference_value() {
        // p_hat = 8/16, p0 = 0.0625 -> t = 0.4375 / 0.129099 = 3.3889
        let s2: f64 = 0.25 * 16.0 / 15.0;
        let t = (0.5 - 0.0625) / (s2 / 16.0).sqrt();
        assert!((t - 3.388_9).abs() < 1e-4);
        assert_eq!(classify_link(t), LinkStatus::Indeterminate);
    }

    #[test]
    fn index_linkage_none_linked() {
        let g = index_net(0, 5);
        let r = index_linkage(&g, "OIL", &TECH).unwrap();
        assert_eq!(r.status, LinkStatus::Unlinked);
        assert!(r.degenerate);
        assert!(index_linkage(&g, "GOLD", &TECH).is_err());
    }

    #[test]
    fn index_linkage_all_linked() {
        let g = index_net(16, 0);
        let r = index_linkage(&g, "OIL", &TECH).unwrap();
        assert_eq!(r.status, LinkStatus::Linked);
        assert!(r.degenerate);
    }

    #[test]
    fn link_thresholds_are_strict() {
        assert_eq!(classify_link(4.0), LinkStatus::Indeterminate);
        assert_eq!(classify_link(2.0), LinkStatus::Indeterminate);
        assert_eq!(classify_link(4.0 + 1e-12), LinkStatus::Linked);
        assert_eq!(classify_link(2.0 - 1e-12), LinkStatus::Unlinked);
    }

    #[test]
    fn trend_on_exact_line() {
        let r = slope_trend_test("line", &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((r.slope - 1.0).abs() < 1e-12);
        assert_eq!(r.p, P_FLOOR);
    }

    #[test]
    fn trend_on_constant_series() {
        let r = slope_trend_test("flat", &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(r.slope, 0.0);
        assert_eq!(r.p, 1.0);
        assert!(slope_trend_test("short", &[1.0, 2.0]).is_err());
    }

    #[test]
    fn trend_on_zigzag_matches_closed_form() {
        // x = 0..3, y = 0,1,0,1: Sxy = 1, Sxx = 5 -> slope 0.2, intercept 0.2
        // residuals -0.2, 0.6, -0.6, 0.2: SSR = 0.8, se = sqrt(0.8 / 2 / 5)
        let r = slope_trend_test("zig", &[0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!((r.slope - 0.2).abs() < 1e-15);
        assert!((r.intercept - 0.2).abs() < 1e-15);
        let t = 0.2 / (0.08f64).sqrt();
        assert!((r.t_slope.unwrap() - t).abs() < 1e-12);
        // scipy.stats.linregress([0,1,2,3],[0,1,0,1]).pvalue
        assert!((r.p - 0.552_786_404_500_042).abs() < 1e-9);
    }

    fn quarterly(values: &[(i32, u32, f64)]) -> Vec<(NaiveDate, f64)> {
        values
            .iter()
            .map(|&(y, m, v)| (NaiveDate::from_ymd_opt(y, m, 1).unwrap(), v))
            .collect()
    }

    #[test]
    fn sign_change_detected() {
        let s = quarterly(&[
            (2007, 1, 1.01),
            (2007, 4, 0.99),
            (2007, 7, 1.02),
            (2007, 10, 0.98),
            (2008, 1, -1.01),
            (2008, 4, -0.99),
            (2008, 7, -1.02),
            (2008, 10, -0.98),
        ]);
        let r = sign_change_test(&s, 2008).unwrap();
        assert!(r.changed);
        assert!(r.p_sign < 1e-4 && r.p_pre < 1e-4);
    }

    #[test]
    fn sign_change_same_sign_or_straddling() {
        let base = [
            (2007, 1, 1.0),
            (2007, 4, 1.1),
            (2007, 7, 0.9),
            (2007, 10, 1.0),
        ];
        let mut same = base.to_vec();
        same.extend([(2008, 1, 0.8), (2008, 4, 0.9)]);
        assert!(!sign_change_test(&quarterly(&same), 2008).unwrap().changed);

        let mut straddle = base.to_vec();
        straddle.extend([
            (2008, 1, -0.5),
            (2008, 4, 0.5),
            (2008, 7, -0.4),
            (2008, 10, 0.4),
        ]);
        let r = sign_change_test(&quarterly(&straddle), 2008).unwrap();
        assert!(!r.changed);

        let short = quarterly(&base[..3]);
        assert!(sign_change_test(&short, 2008).is_err());
    }

    #[test]
    fn decline_test_separated_groups() {
        let noise = [0.01, -0.02, 0.015, 0.0, -0.01, 0.02, -0.005, 0.005];
        let mut corr = Vec::new();
        let mut ret = Vec::new();
        for (k, e) in noise.iter().enumerate() {
            corr.push(0.5 + e);
            ret.push(-0.03 - 0.001 * k as f64);
            corr.push(0.1 - e);
            ret.push(0.02 + 0.001 * k as f64);
        }
        let r = decline_coincidence_test(&corr, &ret).unwrap();
        assert_eq!((r.n_decline, r.n_rise), (8, 8));
        assert!(r.p_one_sided.unwrap() < 0.01);
    }

    #[test]
    fn decline_test_group_errors_name_group() {
        let err = decline_coincidence_test(&[0.1; 6], &[0.01, 0.02, 0.03, 0.04, -0.01, 0.05])
            .unwrap_err();
        assert!(err.to_string().contains("decline"));
        let err = decline_coincidence_test(&[0.1; 5], &[-0.01; 5]).unwrap_err();
        assert!(err.to_string().contains("rise"));
        assert!(decline_coincidence_test(&[0.1; 3], &[0.1; 4]).is_err());
    }

    #[test]
    fn p_value_formatting() {
        assert_eq!(p_value::format(0.000_123_456_789), "1.23457e-4");
        assert_eq!(p_value::round(0.123_456_789), 0.123457);
    }
}
