//! Trip graph, attribute-guided graphs and the normalized walk kernels.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{DatasetBundle, SEGMENT_ATTRIBUTES};

pub const DEFAULT_DECAY_BASE: f64 = 2.0;

/// The three entity types of the trip graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeType {
    #[serde(rename = "o")]
    Od,
    #[serde(rename = "p")]
    Path,
    #[serde(rename = "l")]
    Segment,
}

impl NodeType {
    pub const ALL: [NodeType; 3] = [NodeType::Od, NodeType::Path, NodeType::Segment];

    pub fn tag(self) -> &'static str {
        match self {
            NodeType::Od => "o",
            NodeType::Path => "p",
            NodeType::Segment => "l",
        }
    }

    pub fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripGraph {
    pub od_ids: Vec<String>,
    pub path_ids: Vec<String>,
    pub segment_ids: Vec<String>,
    /// |V^o| × |V^p|, rows are the OD path shares
    pub m_op: Array2<f64>,
    /// |V^p| × |V^l| incidence
    pub m_pl: Array2<f64>,
    /// |V^l| × |V^l| decayed upstream→downstream influence
    pub m_ll: Array2<f64>,
    pub decay_base: f64,
}

impl TripGraph {
    pub fn n_od(&self) -> usize {
        self.od_ids.len()
    }

    pub fn n_path(&self) -> usize {
        self.path_ids.len()
    }

    pub fn n_segment(&self) -> usize {
        self.segment_ids.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_od() + self.n_path() + self.n_segment()
    }

    pub fn count(&self, t: NodeType) -> usize {
        match t {
            NodeType::Od => self.n_od(),
            NodeType::Path => self.n_path(),
            NodeType::Segment => self.n_segment(),
        }
    }

    /// Offset of the first node of type `t` in the global `V^o ∪ V^p ∪ V^l` order.
    pub fn offset(&self, t: NodeType) -> usize {
        match t {
            NodeType::Od => 0,
            NodeType::Path => self.n_od(),
            NodeType::Segment => self.n_od() + self.n_path(),
        }
    }

    pub fn global(&self, t: NodeType, i: usize) -> usize {
        self.offset(t) + i
    }

    /// Inverse of [`TripGraph::global`].
    pub fn local(&self, g: usize) -> (NodeType, usize) {
        if g < self.n_od() {
            (NodeType::Od, g)
        } else if g < self.n_od() + self.n_path() {
            (NodeType::Path, g - self.n_od())
        } else {
            (NodeType::Segment, g - self.n_od() - self.n_path())
        }
    }

    pub fn ids(&self, t: NodeType) -> &[String] {
        match t {
            NodeType::Od => &self.od_ids,
            NodeType::Path => &self.path_ids,
            NodeType::Segment => &self.segment_ids,
        }
    }
}

/// Builds the trip graph. `m_ll[i][j] = Σ_ρ base^(−c)` over paths where `i`
/// precedes `j` with `c` segments strictly between them.
pub fn build_trip_graph(bundle: &DatasetBundle, decay_base: f64) -> Result<TripGraph> {
    if !(decay_base > 1.0 && decay_base.is_finite()) {
        return Err(Error::Config(format!("decay_base must exceed 1, got {decay_base}")));
    }
    let n_o = bundle.od_flows.len();
    let n_p = bundle.paths.len();
    let n_l = bundle.network.len();
    let mut m_op = Array2::zeros((n_o, n_p));
    let mut m_pl = Array2::zeros((n_p, n_l));
    let mut m_ll = Array2::zeros((n_l, n_l));
    for (p, path) in bundle.paths.iter().enumerate() {
        m_op[[path.od, p]] = path.share;
        for (a, &up) in path.segments.iter().enumerate() {
            m_pl[[p, up]] = 1.0;
            for (b, &down) in path.segments.iter().enumerate().skip(a + 1) {
                let between = (b - a - 1) as i32;
                m_ll[[up, down]] += decay_base.powi(-between);
            }
        }
    }
    Ok(TripGraph {
        od_ids: bundle.od_flows.iter().map(|o| o.id.clone()).collect(),
        path_ids: bundle.paths.iter().map(|p| p.id.clone()).collect(),
        segment_ids: bundle.segment_ids(),
        m_op,
        m_pl,
        m_ll,
        decay_base,
    })
}

/// Row-normalizes `m`; all-zero rows stay zero.
fn row_normalize(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let s = row.sum();
        if s > 0.0 {
            row /= s;
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeadEndRegistry {
    /// segments on no path: zero `m_ll` row and zero incidence column
    pub segments_off_path: Vec<usize>,
    /// segments on some path that precede nothing (zero `m_ll` row only)
    pub sink_segments: Vec<usize>,
    /// OD pairs without any path (zero `m_op` row)
    pub ods_without_paths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedKernels {
    /// row-normalized incidence, path → segment
    pub m_pl_row: Array2<f64>,
    /// column-normalized incidence, each nonzero column sums to 1 (segment → path)
    pub m_pl_col: Array2<f64>,
    /// row-normalized segment → segment influence
    pub m_ll_row: Array2<f64>,
    pub dead_ends: DeadEndRegistry,
}

pub fn normalize_kernels(tg: &TripGraph) -> NormalizedKernels {
    let m_pl_row = row_normalize(&tg.m_pl);
    let m_pl_col = row_normalize(&tg.m_pl.t().to_owned()).t().to_owned();
    let m_ll_row = row_normalize(&tg.m_ll);

    let col_sums = tg.m_pl.sum_axis(Axis(0));
    let ll_sums = tg.m_ll.sum_axis(Axis(1));
    let mut dead = DeadEndRegistry::default();
    for l in 0..tg.n_segment() {
        if col_sums[l] == 0.0 {
            dead.segments_off_path.push(l);
        } else if ll_sums[l] == 0.0 {
            dead.sink_segments.push(l);
        }
    }
    let op_sums = tg.m_op.sum_axis(Axis(1));
    dead.ods_without_paths = (0..tg.n_od()).filter(|&o| op_sums[o] == 0.0).collect();
    NormalizedKernels {
        m_pl_row,
        m_pl_col,
        m_ll_row,
        dead_ends: dead,
    }
}

/// Raw per-entity attributes, rows = entities, columns = `names`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawAttributeTable {
    pub names: Vec<String>,
    pub rows: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeAttributes {
    pub od: RawAttributeTable,
    pub path: RawAttributeTable,
    pub segment: RawAttributeTable,
}

impl TypeAttributes {
    pub fn get(&self, t: NodeType) -> &RawAttributeTable {
        match t {
            NodeType::Od => &self.od,
            NodeType::Path => &self.path,
            NodeType::Segment => &self.segment,
        }
    }
}

pub const OD_ATTRIBUTES: [&str; 3] = ["volume", "path_count", "shortest_path_length"];
pub const PATH_ATTRIBUTES: [&str; 3] = ["length_in_segments", "total_length", "assigned_volume"];

/// Attribute matrices for OD pairs, paths and segments.
///
/// * OD: volume, number of paths, fewest segments over its paths
/// * path: segment count, summed segment length, assigned volume
/// * segment: the network schema plus assigned volume
pub fn derive_type_attributes(bundle: &DatasetBundle) -> TypeAttributes {
    let by_od = bundle.paths_by_od();
    let od_rows: Vec<[f64; 3]> = bundle
        .od_flows
        .iter()
        .zip(&by_od)
        .map(|(od, ps)| {
            let shortest = ps
                .iter()
                .map(|&p| bundle.paths[p].segments.len())
                .min()
                .unwrap_or(0);
            [od.volume, ps.len() as f64, shortest as f64]
        })
        .collect();
    let vols = bundle.path_volumes();
    let path_rows: Vec<[f64; 3]> = bundle
        .paths
        .iter()
        .zip(vols)
        .map(|(p, v)| {
            let total: f64 = p
                .segments
                .iter()
                .map(|&s| bundle.network.segments[s].length)
                .sum();
            [p.segments.len() as f64, total, v]
        })
        .collect();
    let seg_rows = bundle.segment_attribute_rows();

    fn table<const N: usize>(names: [&str; N], rows: &[[f64; N]]) -> RawAttributeTable {
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        RawAttributeTable {
            names: names.iter().map(|s| s.to_string()).collect(),
            rows: Array2::from_shape_vec((rows.len(), N), flat).expect("rectangular"),
        }
    }
    TypeAttributes {
        od: table(OD_ATTRIBUTES, &od_rows),
        path: table(PATH_ATTRIBUTES, &path_rows),
        segment: table(SEGMENT_ATTRIBUTES, &seg_rows),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeGuidedGraph {
    pub node_type: NodeType,
    pub entity_ids: Vec<String>,
    pub attribute_names: Vec<String>,
    /// |U| × |V|: `a_bar[[k, i]]` is attribute `k` of entity `i`, min-max normalized
    pub a_bar: Array2<f64>,
}

impl AttributeGuidedGraph {
    pub fn n_entities(&self) -> usize {
        self.entity_ids.len()
    }

    pub fn n_attributes(&self) -> usize {
        self.attribute_names.len()
    }

    /// Normalized attribute vector of entity `i` (a column of `a_bar`).
    pub fn entity_features(&self, i: usize) -> Array1<f64> {
        self.a_bar.column(i).to_owned()
    }
}

/// Min-max normalizes every attribute column to [0, 1]; constant columns map to 0.5.
pub fn build_attribute_graph(
    node_type: NodeType,
    entity_ids: &[String],
    raw: &RawAttributeTable,
) -> Result<AttributeGuidedGraph> {
    if raw.names.is_empty() {
        return Err(Error::Invariant(format!(
            "attribute graph for type {} has no attributes",
            node_type.tag()
        )));
    }
    let (rows, cols) = raw.rows.dim();
    if cols != raw.names.len() || rows != entity_ids.len() {
        return Err(Error::Invariant(format!(
            "attribute table is {rows}×{cols}, expected {}×{}",
            entity_ids.len(),
            raw.names.len()
        )));
    }
    if raw.rows.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invariant("attribute table contains non-finite values".into()));
    }
    let mut a_bar = Array2::zeros((cols, rows));
    for (k, col) in raw.rows.columns().into_iter().enumerate() {
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (i, &v) in col.iter().enumerate() {
            a_bar[[k, i]] = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
        }
    }
    Ok(AttributeGuidedGraph {
        node_type,
        entity_ids: entity_ids.to_vec(),
        attribute_names: raw.names.clone(),
        a_bar,
    })
}

/// The three attribute-guided graphs, indexed by [`NodeType::slot`].
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeGraphs(pub [AttributeGuidedGraph; 3]);

impl AttributeGraphs {
    pub fn get(&self, t: NodeType) -> &AttributeGuidedGraph {
        &self.0[t.slot()]
    }
}

/// Everything the walker and the encoder need, built from one bundle.
#[derive(Debug, Clone)]
pub struct Graphs {
    pub trip: TripGraph,
    pub kernels: NormalizedKernels,
    pub attributes: AttributeGraphs,
}

impl Graphs {
    pub fn build(bundle: &DatasetBundle, decay_base: f64) -> Result<Self> {
        let trip = build_trip_graph(bundle, decay_base)?;
        let kernels = normalize_kernels(&trip);
        let raw = derive_type_attributes(bundle);
        let ag = |t: NodeType| build_attribute_graph(t, trip.ids(t), raw.get(t));
        let attributes = AttributeGraphs([
            ag(NodeType::Od)?,
            ag(NodeType::Path)?,
            ag(NodeType::Segment)?,
        ]);
        Ok(Self {
            trip,
            kernels,
            attributes,
        })
    }

    /// Content hash of every matrix and id list, stable across runs.
    pub fn fingerprint(&self) -> String {
        let mut h = crate::provenance::Hasher::new();
        let tg = &self.trip;
        for t in NodeType::ALL {
            h.strings(tg.ids(t));
        }
        h.f64(tg.decay_base);
        for m in [&tg.m_op, &tg.m_pl, &tg.m_ll] {
            h.matrix(m);
        }
        for ag in &self.attributes.0 {
            h.strings(&ag.attribute_names);
            h.matrix(&ag.a_bar);
        }
        h.finish()
    }

    /// `(matrix name, csv)` pairs with `row_id,col_id,value` lines for every nonzero entry.
    pub fn debug_csv(&self) -> Vec<(String, String)> {
        let tg = &self.trip;
        let k = &self.kernels;
        let dump = |m: &Array2<f64>, rows: &[String], cols: &[String]| {
            let mut s = String::from("row_id,col_id,value\n");
            for ((r, c), v) in m.indexed_iter() {
                if *v != 0.0 {
                    let _ = writeln!(s, "{},{},{}", rows[r], cols[c], v);
                }
            }
            s
        };
        let mut out = vec![
            ("m_op".to_string(), dump(&tg.m_op, &tg.od_ids, &tg.path_ids)),
            ("m_pl".into(), dump(&tg.m_pl, &tg.path_ids, &tg.segment_ids)),
            ("m_ll".into(), dump(&tg.m_ll, &tg.segment_ids, &tg.segment_ids)),
            ("m_pl_row".into(), dump(&k.m_pl_row, &tg.path_ids, &tg.segment_ids)),
            ("m_pl_col".into(), dump(&k.m_pl_col, &tg.path_ids, &tg.segment_ids)),
            ("m_ll_row".into(), dump(&k.m_ll_row, &tg.segment_ids, &tg.segment_ids)),
        ];
        for ag in &self.attributes.0 {
            out.push((
                format!("ag_{}", ag.node_type.tag()),
                dump(&ag.a_bar, &ag.attribute_names, &ag.entity_ids),
            ));
        }
        out
    }
}
