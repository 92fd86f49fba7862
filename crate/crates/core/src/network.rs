//! Road networks, OD flows and paths.
//!
//! Segments are graph nodes; intersections are implicit in the directed
//! segment-to-segment edges. Internally every entity is addressed by its
//! position in the owning vector, string ids only matter at the I/O boundary.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fs;
use std::path::Path as FsPath;

use log::warn;
use pathfinding::directed::yen::yen;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NETWORK_FILE: &str = "network.json";
pub const OD_FILE: &str = "od.json";
pub const PATHS_FILE: &str = "paths.json";

/// Names of the per-segment attributes, in schema order.
pub const SEGMENT_ATTRIBUTES: [&str; 5] = [
    "lane_count",
    "speed_limit",
    "capacity",
    "length",
    "assigned_volume",
];

/// Capacity headroom given to segments whose capacity is missing from the input.
pub const DEFAULT_CAPACITY_HEADROOM: f64 = 1.2;

const SHARE_TOLERANCE: f64 = 1e-9;
const MAX_OD_REDRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: String,
    pub lane_count: u32,
    /// km/h
    pub speed_limit: f64,
    /// vehicles per hour
    pub capacity: f64,
    /// metres
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    pub segments: Vec<Segment>,
    pub edges: Vec<(usize, usize)>,
    index: HashMap<String, usize>,
}

impl RoadNetwork {
    pub fn new(segments: Vec<Segment>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut index = HashMap::with_capacity(segments.len());
        for (i, s) in segments.iter().enumerate() {
            if index.insert(s.id.clone(), i).is_some() {
                return Err(Error::Invariant(format!("duplicate segment id {:?}", s.id)));
            }
        }
        for &(a, b) in &edges {
            if a >= segments.len() || b >= segments.len() {
                return Err(Error::Referential(format!(
                    "edge ({a}, {b}) references an undeclared segment"
                )));
            }
        }
        Ok(Self {
            segments,
            edges,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segment_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.len()];
        for &(a, b) in &self.edges {
            out[a].push(b);
        }
        for s in &mut out {
            s.sort_unstable();
            s.dedup();
        }
        out
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.iter().any(|&e| e == (from, to))
    }

    pub fn out_degree(&self) -> Vec<usize> {
        self.successors().iter().map(Vec::len).collect()
    }

    /// Strong connectivity by one forward and one backward traversal from segment 0.
    pub fn is_strongly_connected(&self) -> bool {
        if self.is_empty() {
            return true;
        }
        let fwd = self.successors();
        let mut bwd = vec![Vec::new(); self.len()];
        for &(a, b) in &self.edges {
            bwd[b].push(a);
        }
        reaches_all(&fwd, 0) && reaches_all(&bwd, 0)
    }
}

fn reaches_all(adj: &[Vec<usize>], root: usize) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdFlow {
    pub id: String,
    pub origin: usize,
    pub destination: usize,
    /// vehicles per observation period
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub id: String,
    /// index into [`DatasetBundle::od_flows`]
    pub od: usize,
    pub segments: Vec<usize>,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub network: RoadNetwork,
    pub od_flows: Vec<OdFlow>,
    pub paths: Vec<Path>,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub entity: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.entity, self.message)
    }
}

impl DatasetBundle {
    /// Paths grouped by OD index.
    pub fn paths_by_od(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.od_flows.len()];
        for (p, path) in self.paths.iter().enumerate() {
            if path.od < out.len() {
                out[path.od].push(p);
            }
        }
        out
    }

    /// Vehicles carried by each path (`od.volume * share`).
    pub fn path_volumes(&self) -> Vec<f64> {
        self.paths
            .iter()
            .map(|p| self.od_flows[p.od].volume * p.share)
            .collect()
    }

    /// Per-segment volume summed over every path that traverses it.
    pub fn assigned_volumes(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.network.len()];
        for (path, flow) in self.paths.iter().zip(self.path_volumes()) {
            for &s in &path.segments {
                v[s] += flow;
            }
        }
        v
    }

    /// Segment indices contained in at least one path.
    pub fn segments_on_paths(&self) -> BTreeSet<usize> {
        self.paths.iter().flat_map(|p| p.segments.iter().copied()).collect()
    }

    pub fn segment_ids(&self) -> Vec<String> {
        self.network.segments.iter().map(|s| s.id.clone()).collect()
    }

    /// Rows of the fixed segment schema, see [`SEGMENT_ATTRIBUTES`].
    pub fn segment_attribute_rows(&self) -> Vec<[f64; 5]> {
        let assigned = self.assigned_volumes();
        self.network
            .segments
            .iter()
            .zip(assigned)
            .map(|(s, a)| [f64::from(s.lane_count), s.speed_limit, s.capacity, s.length, a])
            .collect()
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }
}

/// Every invariant of the bundle, as data. Empty iff the bundle is valid.
pub fn validate(bundle: &DatasetBundle) -> Vec<Violation> {
    let mut out = Vec::new();
    let net = &bundle.network;
    let n = net.len();
    let mut push = |entity: String, message: String| out.push(Violation { entity, message });

    for s in &net.segments {
        let entity = format!("segment {}", s.id);
        for (name, v) in [
            ("speed_limit", s.speed_limit),
            ("capacity", s.capacity),
            ("length", s.length),
        ] {
            if !v.is_finite() {
                push(entity.clone(), format!("{name} is not finite"));
            } else if v <= 0.0 {
                push(entity.clone(), format!("{name} must be positive, got {v}"));
            }
        }
        if s.lane_count == 0 {
            push(entity.clone(), "lane_count must be at least 1".into());
        }
    }
    for &(a, b) in &net.edges {
        if a >= n || b >= n {
            push(format!("edge ({a}, {b})"), "endpoint is not a declared segment".into());
        }
    }

    let seg_name = |i: usize| {
        net.segments
            .get(i)
            .map_or_else(|| format!("#{i}"), |s| s.id.clone())
    };

    for od in &bundle.od_flows {
        let entity = format!("od {}", od.id);
        if od.origin >= n || od.destination >= n {
            push(entity.clone(), "origin or destination is not a declared segment".into());
            continue;
        }
        if od.origin == od.destination {
            push(entity.clone(), "origin equals destination".into());
        }
        if !od.volume.is_finite() || od.volume < 0.0 {
            push(entity.clone(), format!("volume must be finite and nonnegative, got {}", od.volume));
        }
    }

    let edges: HashSet<(usize, usize)> = net.edges.iter().copied().collect();
    let mut share_sums = vec![0.0; bundle.od_flows.len()];
    let mut path_counts = vec![0usize; bundle.od_flows.len()];
    for path in &bundle.paths {
        let entity = format!("path {}", path.id);
        if path.od >= bundle.od_flows.len() {
            push(entity, "references an undeclared OD".into());
            continue;
        }
        share_sums[path.od] += path.share;
        path_counts[path.od] += 1;
        if !(0.0..=1.0).contains(&path.share) {
            push(entity.clone(), format!("share {} outside [0, 1]", path.share));
        }
        if path.segments.is_empty() {
            push(entity, "has no segments".into());
            continue;
        }
        if let Some(&bad) = path.segments.iter().find(|&&s| s >= n) {
            push(entity, format!("references undeclared segment #{bad}"));
            continue;
        }
        let od = &bundle.od_flows[path.od];
        if path.segments[0] != od.origin {
            push(
                entity.clone(),
                format!("first segment {} is not the OD origin {}", seg_name(path.segments[0]), seg_name(od.origin)),
            );
        }
        if *path.segments.last().unwrap() != od.destination {
            push(
                entity.clone(),
                format!(
                    "last segment {} is not the OD destination {}",
                    seg_name(*path.segments.last().unwrap()),
                    seg_name(od.destination)
                ),
            );
        }
        for w in path.segments.windows(2) {
            if !edges.contains(&(w[0], w[1])) {
                push(
                    entity.clone(),
                    format!("no edge ({}, {}) in the network", seg_name(w[0]), seg_name(w[1])),
                );
            }
        }
        let distinct: HashSet<usize> = path.segments.iter().copied().collect();
        if distinct.len() != path.segments.len() {
            push(entity, "revisits a segment".into());
        }
    }
    for (i, od) in bundle.od_flows.iter().enumerate() {
        if path_counts[i] == 0 {
            push(format!("od {}", od.id), "has no paths".into());
        } else if (share_sums[i] - 1.0).abs() > SHARE_TOLERANCE {
            push(
                format!("od {}", od.id),
                format!("path shares sum to {}, expected 1", share_sums[i]),
            );
        }
    }
    out
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRecord {
    pub id: String,
    pub lane_count: u32,
    pub speed_limit: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<f64>,
    pub length: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub segments: Vec<SegmentRecord>,
    pub edges: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdRecord {
    pub id: String,
    pub origin: String,
    pub destination: String,
    pub volume: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathRecord {
    pub id: String,
    pub od_id: String,
    pub segments: Vec<String>,
    pub share: f64,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &FsPath) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        file: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Reads `network.json`, `od.json` and `paths.json` from `dir` and validates the result.
///
/// Segments without a `capacity` receive `1.2 × assigned_volume` so the
/// unperturbed network is uncongested.
pub fn load_dataset(dir: impl AsRef<FsPath>) -> Result<DatasetBundle> {
    let dir = dir.as_ref();
    let net: NetworkFile = read_json(&dir.join(NETWORK_FILE))?;
    let ods: Vec<OdRecord> = read_json(&dir.join(OD_FILE))?;
    let paths: Vec<PathRecord> = read_json(&dir.join(PATHS_FILE))?;
    from_records(net, ods, paths)
}

pub fn from_records(
    net: NetworkFile,
    ods: Vec<OdRecord>,
    paths: Vec<PathRecord>,
) -> Result<DatasetBundle> {
    let missing_capacity: Vec<bool> = net.segments.iter().map(|s| s.capacity.is_none()).collect();
    let segments: Vec<Segment> = net
        .segments
        .into_iter()
        .map(|s| Segment {
            id: s.id,
            lane_count: s.lane_count,
            speed_limit: s.speed_limit,
            capacity: s.capacity.unwrap_or(f64::NAN),
            length: s.length,
        })
        .collect();
    let lookup: HashMap<&str, usize> = segments
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let resolve = |id: &str, ctx: &str| {
        lookup
            .get(id)
            .copied()
            .ok_or_else(|| Error::Referential(format!("{ctx} references unknown segment {id:?}")))
    };
    let mut edges = Vec::with_capacity(net.edges.len());
    for (a, b) in &net.edges {
        let ctx = format!("edge ({a}, {b})");
        edges.push((resolve(a, &ctx)?, resolve(b, &ctx)?));
    }
    let edge_set: HashSet<(usize, usize)> = edges.iter().copied().collect();

    let mut od_flows = Vec::with_capacity(ods.len());
    let mut od_index = HashMap::new();
    for od in ods {
        let ctx = format!("od {}", od.id);
        let origin = resolve(&od.origin, &ctx)?;
        let destination = resolve(&od.destination, &ctx)?;
        if od_index.insert(od.id.clone(), od_flows.len()).is_some() {
            return Err(Error::Invariant(format!("duplicate od id {:?}", od.id)));
        }
        od_flows.push(OdFlow {
            id: od.id,
            origin,
            destination,
            volume: od.volume,
        });
    }

    let mut out_paths = Vec::with_capacity(paths.len());
    let mut path_ids = HashSet::new();
    for p in paths {
        let ctx = format!("path {}", p.id);
        if !path_ids.insert(p.id.clone()) {
            return Err(Error::Invariant(format!("duplicate path id {:?}", p.id)));
        }
        let od = *od_index
            .get(&p.od_id)
            .ok_or_else(|| Error::Referential(format!("{ctx} references unknown od {:?}", p.od_id)))?;
        let segs = p
            .segments
            .iter()
            .map(|s| resolve(s, &ctx))
            .collect::<Result<Vec<_>>>()?;
        for (w, ids) in segs.windows(2).zip(p.segments.windows(2)) {
            if !edge_set.contains(&(w[0], w[1])) {
                return Err(Error::Referential(format!(
                    "{ctx} uses edge ({}, {}) which is absent from the network",
                    ids[0], ids[1]
                )));
            }
        }
        out_paths.push(Path {
            id: p.id,
            od,
            segments: segs,
            share: p.share,
        });
    }

    let network = RoadNetwork::new(segments, edges)?;
    let mut bundle = DatasetBundle {
        network,
        od_flows,
        paths: out_paths,
        rng_seed: 0,
    };
    let assigned = bundle.assigned_volumes();
    for ((seg, missing), a) in bundle
        .network
        .segments
        .iter_mut()
        .zip(missing_capacity)
        .zip(assigned)
    {
        if missing {
            seg.capacity = DEFAULT_CAPACITY_HEADROOM * a;
            if seg.capacity <= 0.0 {
                // unused segment: any positive capacity keeps it uncongested
                seg.capacity = 1.0;
            }
        }
    }

    let violations = validate(&bundle);
    if !violations.is_empty() {
        let msg = violations
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::Invariant(msg));
    }
    if bundle.od_flows.is_empty() || bundle.paths.is_empty() {
        warn!("dataset has no OD flows or no paths; walks and rankings will be empty");
    }
    Ok(bundle)
}

impl DatasetBundle {
    pub fn to_records(&self) -> (NetworkFile, Vec<OdRecord>, Vec<PathRecord>) {
        let segs = &self.network.segments;
        let net = NetworkFile {
            segments: segs
                .iter()
                .map(|s| SegmentRecord {
                    id: s.id.clone(),
                    lane_count: s.lane_count,
                    speed_limit: s.speed_limit,
                    capacity: Some(s.capacity),
                    length: s.length,
                })
                .collect(),
            edges: self
                .network
                .edges
                .iter()
                .map(|&(a, b)| (segs[a].id.clone(), segs[b].id.clone()))
                .collect(),
        };
        let ods = self
            .od_flows
            .iter()
            .map(|o| OdRecord {
                id: o.id.clone(),
                origin: segs[o.origin].id.clone(),
                destination: segs[o.destination].id.clone(),
                volume: o.volume,
            })
            .collect();
        let paths = self
            .paths
            .iter()
            .map(|p| PathRecord {
                id: p.id.clone(),
                od_id: self.od_flows[p.od].id.clone(),
                segments: p.segments.iter().map(|&s| segs[s].id.clone()).collect(),
                share: p.share,
            })
            .collect();
        (net, ods, paths)
    }

    /// Serialized contents of the three dataset files, keyed by file name.
    pub fn to_file_contents(&self) -> Vec<(&'static str, String)> {
        let (net, ods, paths) = self.to_records();
        vec![
            (NETWORK_FILE, to_pretty(&net)),
            (OD_FILE, to_pretty(&ods)),
            (PATHS_FILE, to_pretty(&paths)),
        ]
    }

    pub fn write_to_dir(&self, dir: impl AsRef<FsPath>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in self.to_file_contents() {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn to_pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("dataset records serialize");
    s.push('\n');
    s
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

fn padded(prefix: &str, i: usize, total: usize) -> String {
    let width = total.max(1).to_string().len();
    format!("{prefix}{:0width$}", i + 1)
}

/// Generates a strongly connected random network with OD flows and k-shortest paths.
///
/// The network is a random spanning cycle plus `n_segments` extra random
/// edges. Each OD receives up to `paths_per_od_max` loop-free paths, with
/// shares `∝ exp(-length / mean_length)` over that OD's paths. Capacities are
/// drawn above the assigned volume so the base network is uncongested.
pub fn generate_random_dataset(
    n_segments: usize,
    n_od: usize,
    paths_per_od_max: usize,
    seed: u64,
) -> Result<DatasetBundle> {
    if n_segments < 4 {
        return Err(Error::Config(format!("n_segments must be at least 4, got {n_segments}")));
    }
    if n_od == 0 {
        return Err(Error::Config("n_od must be at least 1".into()));
    }
    if paths_per_od_max == 0 {
        return Err(Error::Config("paths_per_od_max must be at least 1".into()));
    }
    if n_od > n_segments * (n_segments - 1) {
        return Err(Error::Config(format!(
            "cannot draw {n_od} distinct OD pairs from {n_segments} segments"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut order: Vec<usize> = (0..n_segments).collect();
    order.shuffle(&mut rng);
    let mut edge_set = BTreeSet::new();
    for i in 0..n_segments {
        edge_set.insert((order[i], order[(i + 1) % n_segments]));
    }
    let extra = n_segments;
    let max_edges = n_segments * (n_segments - 1);
    let target = (edge_set.len() + extra).min(max_edges);
    while edge_set.len() < target {
        let a = rng.random_range(0..n_segments);
        let b = rng.random_range(0..n_segments);
        if a != b {
            edge_set.insert((a, b));
        }
    }
    let edges: Vec<(usize, usize)> = edge_set.into_iter().collect();

    const SPEEDS: [f64; 6] = [30.0, 40.0, 50.0, 60.0, 70.0, 80.0];
    let mut segments: Vec<Segment> = (0..n_segments)
        .map(|i| Segment {
            id: padded("s", i, n_segments),
            lane_count: rng.random_range(1..=4),
            speed_limit: *SPEEDS.choose(&mut rng).unwrap(),
            capacity: 0.0,
            length: f64::from(rng.random_range(50u32..=800)),
        })
        .collect();

    let mut succ = vec![Vec::new(); n_segments];
    for &(a, b) in &edges {
        succ[a].push(b);
    }
    let lengths: Vec<u64> = segments.iter().map(|s| s.length as u64).collect();

    let mut used = HashSet::new();
    let mut od_flows = Vec::with_capacity(n_od);
    let mut paths = Vec::new();
    let mut redraws = 0;
    while od_flows.len() < n_od {
        let o = rng.random_range(0..n_segments);
        let d = rng.random_range(0..n_segments);
        if o == d || used.contains(&(o, d)) {
            continue;
        }
        let found = yen(
            &o,
            |&u| succ[u].iter().map(|&v| (v, lengths[v])).collect::<Vec<_>>(),
            |&u| u == d,
            paths_per_od_max,
        );
        if found.is_empty() {
            redraws += 1;
            if redraws > MAX_OD_REDRAWS {
                return Err(Error::Infeasible(format!(
                    "no path found for {redraws} drawn OD pairs"
                )));
            }
            continue;
        }
        used.insert((o, d));
        let od_idx = od_flows.len();
        od_flows.push(OdFlow {
            id: padded("od", od_idx, n_od),
            origin: o,
            destination: d,
            volume: f64::from(rng.random_range(40u32..=200)),
        });
        let lens: Vec<f64> = found
            .iter()
            .map(|(_, c)| (*c + lengths[o]) as f64)
            .collect();
        let mean = lens.iter().sum::<f64>() / lens.len() as f64;
        let weights: Vec<f64> = lens.iter().map(|l| (-l / mean).exp()).collect();
        let total: f64 = weights.iter().sum();
        for ((segs, _), w) in found.into_iter().zip(weights) {
            paths.push(Path {
                id: String::new(),
                od: od_idx,
                segments: segs,
                share: w / total,
            });
        }
    }
    let n_paths = paths.len();
    for (i, p) in paths.iter_mut().enumerate() {
        p.id = padded("p", i, n_paths);
    }

    let mut assigned = vec![0.0; n_segments];
    for p in &paths {
        let flow = od_flows[p.od].volume * p.share;
        for &s in &p.segments {
            assigned[s] += flow;
        }
    }
    for (s, a) in segments.iter_mut().zip(assigned) {
        let headroom: f64 = rng.random_range(1.05..1.8);
        let base = if a > 0.0 { a } else { f64::from(s.lane_count) * 50.0 };
        s.capacity = (base * headroom).round();
    }
    let bundle = DatasetBundle {
        network: RoadNetwork::new(segments, edges)?,
        od_flows,
        paths,
        rng_seed: seed,
    };
    debug_assert!(validate(&bundle).is_empty());
    Ok(bundle)
}

/// The illustrative 11-segment network with OD flows `<v1, v4, 300>` and `<v8, v7, 500>`.
///
/// Capacities are left at `1.2 × assigned_volume` (tight), speed limits and
/// lengths are arbitrary but fixed. The eleventh edge `(v4, v5)` is not used
/// by any path.
pub fn example_network() -> DatasetBundle {
    let seg = |i: usize, lanes: u32, speed: f64, length: f64| SegmentRecord {
        id: format!("v{i}"),
        lane_count: lanes,
        speed_limit: speed,
        capacity: None,
        length,
    };
    let segments = vec![
        seg(1, 2, 50.0, 300.0),
        seg(2, 2, 50.0, 250.0),
        seg(3, 1, 40.0, 200.0),
        seg(4, 2, 60.0, 400.0),
        seg(5, 1, 40.0, 350.0),
        seg(6, 1, 40.0, 300.0),
        seg(7, 3, 60.0, 500.0),
        seg(8, 3, 60.0, 450.0),
        seg(9, 3, 70.0, 300.0),
        seg(10, 2, 50.0, 350.0),
        seg(11, 2, 50.0, 300.0),
    ];
    let e = |a: usize, b: usize| (format!("v{a}"), format!("v{b}"));
    let edges = vec![
        e(1, 2),
        e(2, 3),
        e(3, 4),
        e(4, 5),
        e(8, 9),
        e(9, 5),
        e(5, 6),
        e(6, 7),
        e(9, 10),
        e(10, 11),
        e(11, 7),
    ];
    let ods = vec![
        OdRecord {
            id: "od1".into(),
            origin: "v1".into(),
            destination: "v4".into(),
            volume: 300.0,
        },
        OdRecord {
            id: "od2".into(),
            origin: "v8".into(),
            destination: "v7".into(),
            volume: 500.0,
        },
    ];
    let path = |id: &str, od: &str, segs: &[usize], share: f64| PathRecord {
        id: id.into(),
        od_id: od.into(),
        segments: segs.iter().map(|i| format!("v{i}")).collect(),
        share,
    };
    let paths = vec![
        path("p1", "od1", &[1, 2, 3, 4], 1.0),
        path("p2", "od2", &[8, 9, 5, 6, 7], 0.5),
        path("p3", "od2", &[8, 9, 10, 11, 7], 0.5),
    ];
    from_records(
        NetworkFile { segments, edges },
        ods,
        paths,
    )
    .expect("example fixture is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_counts() {
        let b = example_network();
        assert_eq!(b.network.len(), 11);
        assert_eq!(b.network.edges.len(), 11);
        assert_eq!(b.od_flows.len(), 2);
        assert_eq!(b.paths.len(), 3);
        assert!(validate(&b).is_empty());
    }

    #[test]
    fn missing_capacity_gets_headroom_over_assigned_volume() {
        let b = example_network();
        let v9 = b.network.segment_index("v9").unwrap();
        assert!((b.network.segments[v9].capacity - 600.0).abs() < 1e-9);
        let v10 = b.network.segment_index("v10").unwrap();
        assert!((b.network.segments[v10].capacity - 300.0).abs() < 1e-9);
    }

    #[test]
    fn share_sum_violation_names_the_od() {
        let mut b = example_network();
        b.paths[0].share = 0.9;
        let v = validate(&b);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].entity, "od od1");
    }

    #[test]
    fn negative_capacity_violation_names_the_segment() {
        let mut b = example_network();
        b.network.segments[3].capacity = -5.0;
        let v = validate(&b);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].entity, "segment v4");
    }

    #[test]
    fn non_contiguous_path_is_referential_failure() {
        let (net, ods, mut paths) = example_network().to_records();
        paths[0].segments = vec!["v1".into(), "v3".into(), "v4".into()];
        let err = from_records(net, ods, paths).unwrap_err();
        assert!(matches!(err, Error::Referential(_)), "{err}");
    }

    #[test]
    fn unknown_segment_is_referential_failure() {
        let (net, mut ods, paths) = example_network().to_records();
        ods[0].origin = "nowhere".into();
        assert!(matches!(
            from_records(net, ods, paths),
            Err(Error::Referential(_))
        ));
    }

    #[test]
    fn empty_od_and_path_files_are_accepted() {
        let (net, _, _) = example_network().to_records();
        let b = from_records(net, vec![], vec![]).unwrap();
        assert!(b.od_flows.is_empty() && b.paths.is_empty());
        assert_eq!(b.network.len(), 11);
    }

    #[test]
    fn smallest_generation_has_single_full_share_path() {
        let b = generate_random_dataset(4, 1, 1, 3).unwrap();
        assert_eq!(b.od_flows.len(), 1);
        assert_eq!(b.paths.len(), 1);
        assert_eq!(b.paths[0].share, 1.0);
    }

    #[test]
    fn generation_rejects_tiny_networks() {
        assert!(generate_random_dataset(3, 1, 1, 0).is_err());
        assert!(generate_random_dataset(10, 0, 1, 0).is_err());
    }

    #[test]
    fn generated_networks_are_strongly_connected_and_valid() {
        for seed in 0..20 {
            let b = generate_random_dataset(30, 6, 3, seed).unwrap();
            assert!(b.network.is_strongly_connected());
            assert!(validate(&b).is_empty(), "seed {seed}: {:?}", validate(&b));
        }
    }

    #[test]
    fn generated_ids_are_zero_padded() {
        let b = generate_random_dataset(110, 20, 3, 7).unwrap();
        assert_eq!(b.network.segments[0].id, "s001");
        assert_eq!(b.network.segments[109].id, "s110");
        assert_eq!(b.od_flows[0].id, "od01");
    }
}
