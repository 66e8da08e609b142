//! Thresholded correlation networks, temporal stacking and graph export.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;

use crate::corrwin::{CorrelationMatrix, Window};
use crate::error::{Error, Result};
use crate::ingest::{parse_date, AssetKind, AssetRecord, DATE_FORMAT};

/// Fraction of the highest-correlation pairs kept as edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSpec {
    pub quantile: f64,
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        ThresholdSpec { quantile: 0.0625 }
    }
}

impl ThresholdSpec {
    pub fn new(quantile: f64) -> Result<Self> {
        if !(quantile > 0.0 && quantile <= 1.0) {
            return Err(Error::Argument(format!(
                "quantile must lie in (0, 1], got {quantile}"
            )));
        }
        Ok(ThresholdSpec { quantile })
    }
}

/// `ceil(quantile * pairs)`, treating products within rounding noise of an
/// integer as that integer (so `0.07 * 100` keeps 7 edges, not 8).
pub fn edge_count(quantile: f64, pairs: usize) -> usize {
    let x = quantile * pairs as f64;
    let r = x.round();
    let m = if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r
    } else {
        x.ceil()
    };
    (m as usize).min(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairState {
    Undefined,
    Absent,
    Linked,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationNetwork {
    pub window: Window,
    pub nodes: Vec<AssetRecord>,
    /// Sorted by `(i, j)` with `i < j`.
    pub edges: Vec<Edge>,
    pub quantile: f64,
    states: Vec<PairState>,
    defined_pairs: usize,
}

impl CorrelationNetwork {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn state(&self, i: usize, j: usize) -> PairState {
        self.states[i * self.nodes.len() + j]
    }

    pub fn is_linked(&self, i: usize, j: usize) -> bool {
        self.state(i, j) == PairState::Linked
    }

    pub fn is_defined(&self, i: usize, j: usize) -> bool {
        i != j && self.state(i, j) != PairState::Undefined
    }

    pub fn defined_pairs(&self) -> usize {
        self.defined_pairs
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|a| a.id == id)
    }

    /// Edges over all `n (n - 1) / 2` node pairs.
    pub fn density(&self) -> f64 {
        let n = self.nodes.len();
        if n < 2 {
            return 0.0;
        }
        self.edges.len() as f64 / (n * (n - 1) / 2) as f64
    }

    /// Edges over defined pairs; the base rate used by index linkage.
    pub fn global_density(&self) -> f64 {
        if self.defined_pairs == 0 {
            return 0.0;
        }
        self.edges.len() as f64 / self.defined_pairs as f64
    }

    /// A node is present when at least one of its pairs is defined.
    pub fn is_present(&self, i: usize) -> bool {
        (0..self.nodes.len()).any(|j| self.is_defined(i, j))
    }

    /// Build a network directly from a pair-state matrix. Edge `rho` values
    /// are taken from `rho_of`.
    pub fn from_states(
        window: Window,
        nodes: Vec<AssetRecord>,
        states: Vec<PairState>,
        rho_of: impl Fn(usize, usize) -> f64,
    ) -> Result<Self> {
        let n = nodes.len();
        if states.len() != n * n {
            return Err(Error::Argument("pair-state matrix has wrong size".into()));
        }
        let mut edges = Vec::new();
        let mut defined = 0;
        for i in 0..n {
            if states[i * n + i] == PairState::Linked {
                return Err(Error::Argument("self-loops are not allowed".into()));
            }
            for j in (i + 1)..n {
                if states[i * n + j] != states[j * n + i] {
                    return Err(Error::Argument(format!(
                        "pair states not symmetric at ({i}, {j})"
                    )));
                }
                match states[i * n + j] {
                    PairState::Linked => {
                        defined += 1;
                        edges.push(Edge {
                            i,
                            j,
                            rho: rho_of(i, j),
                        });
                    }
                    PairState::Absent => defined += 1,
                    PairState::Undefined => {}
                }
            }
        }
        let quantile = if defined == 0 {
            0.0
        } else {
            edges.len() as f64 / defined as f64
        };
        Ok(CorrelationNetwork {
            window,
            nodes,
            edges,
            quantile,
            states,
            defined_pairs: defined,
        })
    }
}

fn pair_ids(nodes: &[AssetRecord], i: usize, j: usize) -> (&str, &str) {
    let (a, b) = (nodes[i].id.as_str(), nodes[j].id.as_str());
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Keep the `ceil(quantile * P)` largest defined correlations as edges,
/// `P` being the number of defined pairs. Ties at the cutoff go to the
/// lexicographically smaller `(asset_i, asset_j)` id pair.
pub fn build_threshold_network(
    corr: &CorrelationMatrix,
    spec: &ThresholdSpec,
) -> Result<CorrelationNetwork> {
    ThresholdSpec::new(spec.quantile)?;
    let nodes = corr.assets.clone();
    let mut pairs: Vec<(usize, usize, f64)> = corr.defined_pairs().collect();
    if pairs.is_empty() {
        return Err(Error::Computation(format!(
            "window {} has no defined correlation pairs",
            corr.window
        )));
    }
    let n_defined = pairs.len();
    pairs.sort_by(|a, b| edge_order(&nodes, *a, *b));
    let m = edge_count(spec.quantile, n_defined);
    let n = nodes.len();
    let mut states = vec![PairState::Undefined; n * n];
    for &(i, j, _) in &pairs {
        states[i * n + j] = PairState::Absent;
        states[j * n + i] = PairState::Absent;
    }
    let mut edges: Vec<Edge> = pairs[..m]
        .iter()
        .map(|&(i, j, rho)| {
            states[i * n + j] = PairState::Linked;
            states[j * n + i] = PairState::Linked;
            Edge { i, j, rho }
        })
        .collect();
    edges.sort_by_key(|e| (e.i, e.j));
    Ok(CorrelationNetwork {
        window: corr.window,
        nodes,
        edges,
        quantile: spec.quantile,
        states,
        defined_pairs: n_defined,
    })
}

/// Link from an asset in layer `layer` to itself in layer `layer + 1`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct IdentityEdge {
    pub asset_id: String,
    pub layer: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalNetwork {
    pub layers: Vec<CorrelationNetwork>,
    pub identity_edges: Vec<IdentityEdge>,
}

/// Stack non-overlapping layers (ordered by window start) and connect each
/// asset present in consecutive layers to itself.
pub fn stack_temporal(layers: Vec<CorrelationNetwork>) -> Result<TemporalNetwork> {
    for w in layers.windows(2) {
        let (a, b) = (&w[0].window, &w[1].window);
        if a.start >= b.start {
            return Err(Error::Argument(format!(
                "layers not ordered by window start: {a} before {b}"
            )));
        }
        if a.overlaps(b) {
            return Err(Error::Argument(format!(
                "layer windows {a} and {b} overlap"
            )));
        }
    }
    let mut identity_edges = Vec::new();
    for (t, w) in layers.windows(2).enumerate() {
        let mut ids: Vec<&str> = w[0]
            .nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| w[0].is_present(*i))
            .filter(|(_, a)| w[1].index_of(&a.id).is_some_and(|k| w[1].is_present(k)))
            .map(|(_, a)| a.id.as_str())
            .collect();
        ids.sort_unstable();
        identity_edges.extend(ids.into_iter().map(|id| IdentityEdge {
            asset_id: id.to_string(),
            layer: t,
        }));
    }
    Ok(TemporalNetwork {
        layers,
        identity_edges,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    EdgeList,
    GraphMl,
    Dot,
}

impl ExportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ExportFormat::EdgeList => "edges.csv",
            ExportFormat::GraphMl => "graphml",
            ExportFormat::Dot => "dot",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "edge_list" => Ok(ExportFormat::EdgeList),
            "graphml" => Ok(ExportFormat::GraphMl),
            "dot" => Ok(ExportFormat::Dot),
            other => Err(format!(
                "unknown format `{other}` (expected edge_list, graphml or dot)"
            )),
        }
    }
}

/// Either a single window's network or a stacked temporal network.
#[derive(Debug, Clone, Copy)]
pub enum NetworkRef<'a> {
    Single(&'a CorrelationNetwork),
    Temporal(&'a TemporalNetwork),
}

impl<'a> From<&'a CorrelationNetwork> for NetworkRef<'a> {
    fn from(n: &'a CorrelationNetwork) -> Self {
        NetworkRef::Single(n)
    }
}

impl<'a> From<&'a TemporalNetwork> for NetworkRef<'a> {
    fn from(n: &'a TemporalNetwork) -> Self {
        NetworkRef::Temporal(n)
    }
}

/// One row of an edge-list file.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRow {
    pub asset_i: String,
    pub asset_j: String,
    pub rho: f64,
    pub window_start: NaiveDate,
}

/// Edge-list CSV: `asset_i,asset_j,rho,window_start`, rows sorted by window
/// start then asset ids, with `asset_i < asset_j`. Identity edges of a
/// temporal network are implicit (same id in consecutive windows).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeList {
    pub rows: Vec<EdgeRow>,
}

const EDGE_LIST_HEADER: &str = "asset_i,asset_j,rho,window_start";

impl EdgeList {
    pub fn from_network(net: NetworkRef<'_>) -> Self {
        let layers: Vec<&CorrelationNetwork> = match net {
            NetworkRef::Single(n) => vec![n],
            NetworkRef::Temporal(t) => t.layers.iter().collect(),
        };
        let mut rows = Vec::new();
        for layer in layers {
            for e in &layer.edges {
                let (a, b) = pair_ids(&layer.nodes, e.i, e.j);
                rows.push(EdgeRow {
                    asset_i: a.to_string(),
                    asset_j: b.to_string(),
                    rho: e.rho,
                    window_start: layer.window.start,
                });
            }
        }
        let mut list = EdgeList { rows };
        list.sort();
        list
    }

    fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            a.window_start
                .cmp(&b.window_start)
                .then_with(|| a.asset_i.cmp(&b.asset_i))
                .then_with(|| a.asset_j.cmp(&b.asset_j))
        });
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(EDGE_LIST_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                r.asset_i,
                r.asset_j,
                r.rho,
                r.window_start.format(DATE_FORMAT)
            );
        }
        s
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h == EDGE_LIST_HEADER => {}
            _ => {
                return Err(Error::parse(
                    path,
                    1,
                    format!("expected header `{EDGE_LIST_HEADER}`"),
                ))
            }
        }
        let mut rows = Vec::new();
        for (k, line) in lines {
            let line_no = k as u64 + 1;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(Error::parse(path, line_no, "expected 4 fields"));
            }
            let rho = f[2]
                .parse::<f64>()
                .map_err(|_| Error::parse(path, line_no, format!("invalid rho `{}`", f[2])))?;
            let window_start = parse_date(f[3])
                .ok_or_else(|| Error::parse(path, line_no, format!("invalid date `{}`", f[3])))?;
            rows.push(EdgeRow {
                asset_i: f[0].to_string(),
                asset_j: f[1].to_string(),
                rho,
                window_start,
            });
        }
        let mut list = EdgeList { rows };
        list.sort();
        Ok(list)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.render())
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

struct NodeOut {
    id: String,
    record: AssetRecord,
    window_start: NaiveDate,
}

struct EdgeOut {
    source: String,
    target: String,
    rho: Option<f64>,
    identity: bool,
}

/// Flattened node and edge lists in a fixed order.
fn flatten(net: NetworkRef<'_>) -> (Vec<NodeOut>, Vec<EdgeOut>) {
    let (layers, temporal): (Vec<&CorrelationNetwork>, bool) = match net {
        NetworkRef::Single(n) => (vec![n], false),
        NetworkRef::Temporal(t) => (t.layers.iter().collect(), true),
    };
    let node_id = |layer: &CorrelationNetwork, id: &str| {
        if temporal {
            format!("{id}@{}", layer.window.start.format(DATE_FORMAT))
        } else {
            id.to_string()
        }
    };
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for layer in &layers {
        let mut layer_nodes: Vec<NodeOut> = layer
            .nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| layer.is_present(*i))
            .map(|(_, a)| NodeOut {
                id: node_id(layer, &a.id),
                record: a.clone(),
                window_start: layer.window.start,
            })
            .collect();
        layer_nodes.sort_by(|a, b| a.record.id.cmp(&b.record.id));
        nodes.extend(layer_nodes);
        let mut layer_edges: Vec<EdgeOut> = layer
            .edges
            .iter()
            .map(|e| {
                let (a, b) = pair_ids(&layer.nodes, e.i, e.j);
                EdgeOut {
                    source: node_id(layer, a),
                    target: node_id(layer, b),
                    rho: Some(e.rho),
                    identity: false,
                }
            })
            .collect();
        layer_edges.sort_by(|a, b| (&a.source, &a.target).cmp(&(&b.source, &b.target)));
        edges.extend(layer_edges);
    }
    if let NetworkRef::Temporal(t) = net {
        for ie in &t.identity_edges {
            edges.push(EdgeOut {
                source: node_id(layers[ie.layer], &ie.asset_id),
                target: node_id(layers[ie.layer + 1], &ie.asset_id),
                rho: None,
                identity: true,
            });
        }
    }
    (nodes, edges)
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn sector_strings(a: &AssetRecord) -> (String, String) {
    match (a.kind, a.sector) {
        (AssetKind::Stock, Some(s)) => (
            s.major.to_string(),
            s.minor.map(|m| m.to_string()).unwrap_or_default(),
        ),
        _ => (String::new(), String::new()),
    }
}

pub fn render_graphml(net: NetworkRef<'_>) -> String {
    let (nodes, edges) = flatten(net);
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
    for (id, target, ty) in [
        ("sector_major", "node", "string"),
        ("sector_minor", "node", "string"),
        ("kind", "node", "string"),
        ("window_start", "node", "string"),
        ("rho", "edge", "double"),
        ("identity", "edge", "boolean"),
    ] {
        let _ = writeln!(
            s,
            "  <key id=\"{id}\" for=\"{target}\" attr.name=\"{id}\" attr.type=\"{ty}\"/>"
        );
    }
    s.push_str("  <graph id=\"G\" edgedefault=\"undirected\">\n");
    for n in &nodes {
        let (major, minor) = sector_strings(&n.record);
        let _ = writeln!(s, "    <node id=\"{}\">", xml_escape(&n.id));
        let _ = writeln!(s, "      <data key=\"sector_major\">{}</data>", major);
        let _ = writeln!(s, "      <data key=\"sector_minor\">{}</data>", minor);
        let _ = writeln!(s, "      <data key=\"kind\">{}</data>", n.record.kind);
        let _ = writeln!(
            s,
            "      <data key=\"window_start\">{}</data>",
            n.window_start.format(DATE_FORMAT)
        );
        s.push_str("    </node>\n");
    }
    for e in &edges {
        let _ = writeln!(
            s,
            "    <edge source=\"{}\" target=\"{}\">",
            xml_escape(&e.source),
            xml_escape(&e.target)
        );
        if let Some(r) = e.rho {
            let _ = writeln!(s, "      <data key=\"rho\">{r}</data>");
        }
        let _ = writeln!(s, "      <data key=\"identity\">{}</data>", e.identity);
        s.push_str("    </edge>\n");
    }
    s.push_str("  </graph>\n</graphml>\n");
    s
}

pub fn render_dot(net: NetworkRef<'_>) -> String {
    let (nodes, edges) = flatten(net);
    let mut s = String::from("graph corrnet {\n");
    for n in &nodes {
        let (major, minor) = sector_strings(&n.record);
        let _ = writeln!(
            s,
            "  {} [sector_major={}, sector_minor={}, kind={}, window_start={}];",
            dot_quote(&n.id),
            dot_quote(&major),
            dot_quote(&minor),
            dot_quote(&n.record.kind.to_string()),
            dot_quote(&n.window_start.format(DATE_FORMAT).to_string())
        );
    }
    for e in &edges {
        let attrs = match e.rho {
            Some(r) => format!("rho={r}, identity={}", e.identity),
            None => format!("identity={}", e.identity),
        };
        let _ = writeln!(
            s,
            "  {} -- {} [{attrs}];",
            dot_quote(&e.source),
            dot_quote(&e.target)
        );
    }
    s.push_str("}\n");
    s
}

/// Serialize `net` to `path`. The whole document is rendered in memory and
/// written in one call; output is byte-stable for identical input.
pub fn export_network(
    net: NetworkRef<'_>,
    format: ExportFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    let body = match format {
        ExportFormat::EdgeList => EdgeList::from_network(net).render(),
        ExportFormat::GraphMl => render_graphml(net),
        ExportFormat::Dot => render_dot(net),
    };
    write_file(path.as_ref(), &body)
}

/// Order used for the cutoff: descending rho, then ascending id pair.
pub fn edge_order(
    nodes: &[AssetRecord],
    a: (usize, usize, f64),
    b: (usize, usize, f64),
) -> Ordering {
    b.2.total_cmp(&a.2)
        .then_with(|| pair_ids(nodes, a.0, a.1).cmp(&pair_ids(nodes, b.0, b.1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{SectorLabel, SectorMajor};

    fn d(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    fn matrix(ids: &[&str], upper: &[f64], window: Window) -> CorrelationMatrix {
        let n = ids.len();
        let mut rho = vec![None; n * n];
        let mut k = 0;
        for i in 0..n {
            rho[i * n + i] = Some(1.0);
            for j in (i + 1)..n {
                rho[i * n + j] = Some(upper[k]);
                rho[j * n + i] = Some(upper[k]);
                k += 1;
            }
        }
        let assets = ids
            .iter()
            .map(|id| AssetRecord::stock(*id, SectorLabel::major(SectorMajor::Technology)))
            .collect();
        CorrelationMatrix::from_values(window, assets, rho).unwrap()
    }

    fn year(y: i32) -> Window {
        Window::new(
            NaiveDate::from_ymd_opt(y, 1, 1).unwrap(),
            NaiveDate::from_ymd_opt(y + 1, 1, 1).unwrap(),
        )
    }

    #[test]
    fn edge_count_rounding() {
        assert_eq!(edge_count(0.0625, 10), 1);
        assert_eq!(edge_count(0.07, 100), 7);
        assert_eq!(edge_count(0.0625, 16), 1);
        assert_eq!(edge_count(0.0625, 17), 2);
        assert_eq!(edge_count(1.0, 45), 45);
    }

    #[test]
    fn five_assets_keep_single_max_pair() {
        let m = matrix(
            &["a", "b", "c", "d", "e"],
            &[0.1, 0.2, 0.3, 0.4, 0.5, 0.9, 0.6, 0.7, 0.8, 0.05],
            year(2003),
        );
        let net = build_threshold_network(&m, &ThresholdSpec::default()).unwrap();
        assert_eq!(net.edges.len(), 1);
        let e = net.edges[0];
        assert_eq!((e.i, e.j, e.rho), (1, 3, 0.9));
        assert_eq!(net.defined_pairs(), 10);
    }

    #[test]
    fn full_quantile_is_complete_graph() {
        let m = matrix(
            &["a", "b", "c", "d"],
            &[0.1, -0.2, 0.3, 0.4, 0.5, 0.0],
            year(2003),
        );
        let net = build_threshold_network(&m, &ThresholdSpec::new(1.0).unwrap()).unwrap();
        assert_eq!(net.edges.len(), 6);
        assert_eq!(net.density(), 1.0);
    }

    #[test]
    fn cutoff_tie_prefers_lexicographically_smaller_pair() {
        // pairs: (x,y)=0.5 (x,z)=0.5 (y,z)=0.1; ids deliberately out of order
        let m = matrix(&["z", "y", "x"], &[0.5, 0.5, 0.1], year(2003));
        let net = build_threshold_network(&m, &ThresholdSpec::new(0.34).unwrap()).unwrap();
        assert_eq!(net.edges.len(), 2);
        let m = matrix(&["z", "y", "x"], &[0.5, 0.1, 0.5], year(2003));
        let net = build_threshold_network(&m, &ThresholdSpec::new(0.3).unwrap()).unwrap();
        assert_eq!(net.edges.len(), 1);
        // z-y and y-x tie at 0.5; ("x","y") < ("y","z")
        let e = net.edges[0];
        assert_eq!(pair_ids(&net.nodes, e.i, e.j), ("x", "y"));
    }

    #[test]
    fn undefined_pairs_never_become_edges() {
        let n = 3;
        let mut rho = vec![None; n * n];
        rho[1] = Some(0.2);
        rho[3] = Some(0.2);
        let assets = ["a", "b", "c"]
            .iter()
            .map(|s| AssetRecord::unclassified(*s))
            .collect();
        let m = CorrelationMatrix::from_values(year(2003), assets, rho).unwrap();
        let net = build_threshold_network(&m, &ThresholdSpec::new(1.0).unwrap()).unwrap();
        assert_eq!(net.edges.len(), 1);
        assert!(!net.is_present(2));

        let empty = CorrelationMatrix::from_values(
            year(2003),
            vec![
                AssetRecord::unclassified("a"),
                AssetRecord::unclassified("b"),
            ],
            vec![None; 4],
        )
        .unwrap();
        assert!(build_threshold_network(&empty, &ThresholdSpec::default()).is_err());
    }

    fn layer(ids: &[&str], w: Window) -> CorrelationNetwork {
        let n = ids.len();
        let upper: Vec<f64> = (0..n * (n - 1) / 2)
            .map(|k| 0.1 + 0.01 * k as f64)
            .collect();
        build_threshold_network(&matrix(ids, &upper, w), &ThresholdSpec::new(0.5).unwrap()).unwrap()
    }

    #[test]
    fn identity_edges_follow_intersection() {
        let t = stack_temporal(vec![
            layer(&["a", "b", "c"], year(2003)),
            layer(&["a", "c"], year(2004)),
        ])
        .unwrap();
        let ids: Vec<&str> = t
            .identity_edges
            .iter()
            .map(|e| e.asset_id.as_str())
            .collect();
        assert_eq!(ids, vec!["a", "c"]);

        let single = stack_temporal(vec![layer(&["a", "b"], year(2003))]).unwrap();
        assert!(single.identity_edges.is_empty());

        let six: Vec<_> = (2003..=2008)
            .map(|y| layer(&["a", "b", "c"], year(y)))
            .collect();
        let t = stack_temporal(six).unwrap();
        assert_eq!(
            t.identity_edges
                .iter()
                .filter(|e| e.asset_id == "a")
                .count(),
            5
        );
    }

    #[test]
    fn overlapping_layers_rejected() {
        let w2 = Window::new(d("2003-04-01"), d("2004-04-01"));
        let err = stack_temporal(vec![layer(&["a", "b"], year(2003)), layer(&["a", "b"], w2)]);
        assert!(matches!(err, Err(Error::Argument(_))));
    }

    #[test]
    fn edge_list_round_trip_is_byte_identical() {
        let net = layer(&["a", "b", "c", "d"], year(2003));
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("one.csv");
        export_network((&net).into(), ExportFormat::EdgeList, &p1).unwrap();
        let text = std::fs::read_to_string(&p1).unwrap();
        assert_eq!(text.lines().count(), 1 + net.edges.len());

        let back = EdgeList::read(&p1).unwrap();
        let p2 = dir.path().join("two.csv");
        back.write(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn single_edge_list_has_one_row() {
        let m = matrix(&["a", "b"], &[0.3], year(2003));
        let net = build_threshold_network(&m, &ThresholdSpec::default()).unwrap();
        let text = EdgeList::from_network((&net).into()).render();
        assert_eq!(
            text,
            "asset_i,asset_j,rho,window_start\na,b,0.3,2003-01-01\n"
        );
    }

    #[test]
    fn dot_and_graphml_tag_identity_edges() {
        let layers: Vec<_> = (2003..=2006).map(|y| layer(&["a", "b"], year(y))).collect();
        let t = stack_temporal(layers).unwrap();
        assert_eq!(t.identity_edges.len(), 6);
        let dot = render_dot((&t).into());
        assert_eq!(dot.matches("identity=true").count(), 6);
        assert!(dot.contains("\"a@2003-01-01\" -- \"a@2004-01-01\" [identity=true];"));
        let gml = render_graphml((&t).into());
        assert_eq!(gml.matches("<data key=\"identity\">true</data>").count(), 6);
        assert!(gml.contains("attr.name=\"sector_major\""));
        assert_eq!(render_graphml((&t).into()), gml);
    }

    #[test]
    fn xml_special_characters_escaped() {
        let m = matrix(&["A&B", "C<D"], &[0.3], year(2003));
        let net = build_threshold_network(&m, &ThresholdSpec::default()).unwrap();
        let gml = render_graphml((&net).into());
        assert!(gml.contains("A&amp;B") && gml.contains("C&lt;D"));
    }
}
