//! Quadruple dataset ingestion: TSV parsing, per-timestamp snapshots,
//! chronological splits and the filtered-evaluation candidate sets.
//!
//! The on-disk layout follows the de facto integer-id format used by
//! temporal KG benchmarks: `train.txt` / `valid.txt` / `test.txt` with
//! tab-separated integer fields, and an optional `stat.txt` carrying
//! `|E|\t|R|` for vocabulary validation.

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: malformed line: {msg}")]
    Malformed { path: String, line: usize, msg: String },
    #[error("{path}:{line}: interval end {end} before start {start}")]
    IntervalOrder { path: String, line: usize, start: u64, end: u64 },
    #[error("{path}:{line}: id {id} exceeds declared vocabulary size {vocab}")]
    IdOutOfRange { path: String, line: usize, id: u32, vocab: u32 },
    #[error("need at least 3 timestamps to split, got {0}")]
    TooFewTimestamps(usize),
    #[error("split ratios must sum to 1, got {0}")]
    BadRatios(f64),
    #[error("missing dataset file: {0}")]
    MissingFile(String),
    #[error("bad bundle: {0}")]
    BadBundle(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// One timestamped fact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quadruple {
    pub s: u32,
    pub r: u32,
    pub o: u32,
    pub t: u32,
}

/// How to interpret the time field(s) of a TSV row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum IntervalPolicy {
    /// Four fields `s r o t`; any fifth field means `[t_s, t_e]` and the
    /// row is expanded to one quadruple per year bucket in the interval.
    #[default]
    YearBuckets,
    /// The fourth field is the event time; extra fields are ignored.
    Event,
}

impl std::str::FromStr for IntervalPolicy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "yearly" | "year" | "buckets" => Ok(IntervalPolicy::YearBuckets),
            "event" => Ok(IntervalPolicy::Event),
            other => Err(format!("unknown interval policy '{other}'")),
        }
    }
}

/// All facts at one timestamp plus a per-entity incidence index.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SnapshotGraph {
    pub t: u32,
    /// De-duplicated (s, r, o) edges at this timestamp.
    pub edges: Vec<(u32, u32, u32)>,
    /// entity -> (relation, other endpoint) for every incident edge,
    /// in both directions.
    pub neighbor_index: BTreeMap<u32, Vec<(u32, u32)>>,
    pub entity_set: BTreeSet<u32>,
}

impl SnapshotGraph {
    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Chronologically disjoint train/valid/test quadruple lists.
#[derive(Clone, Debug, Default)]
pub struct DatasetSplit {
    pub train: Vec<Quadruple>,
    pub valid: Vec<Quadruple>,
    pub test: Vec<Quadruple>,
    /// First validation timestamp and first test timestamp.
    pub boundaries: (u32, u32),
}

/// Known-true candidates per (entity, relation, timestamp) key, over
/// train ∪ valid ∪ test; used for filtered ranking.
#[derive(Clone, Debug, Default)]
pub struct FilterSet {
    objects: BTreeMap<(u32, u32, u32), BTreeSet<u32>>,
    subjects: BTreeMap<(u32, u32, u32), BTreeSet<u32>>,
}

impl FilterSet {
    pub fn objects_for(&self, s: u32, r: u32, t: u32) -> Option<&BTreeSet<u32>> {
        self.objects.get(&(s, r, t))
    }

    pub fn subjects_for(&self, o: u32, r: u32, t: u32) -> Option<&BTreeSet<u32>> {
        self.subjects.get(&(o, r, t))
    }

    pub fn num_object_keys(&self) -> usize {
        self.objects.len()
    }

    pub fn num_subject_keys(&self) -> usize {
        self.subjects.len()
    }
}

/// A parsed dataset with contiguous entity/relation/timestamp ids.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub num_entities: u32,
    pub num_relations: u32,
    pub num_timestamps: u32,
    pub train: Vec<Quadruple>,
    pub valid: Vec<Quadruple>,
    pub test: Vec<Quadruple>,
}

impl Dataset {
    pub fn all_quads(&self) -> Vec<Quadruple> {
        let mut all = self.train.clone();
        all.extend_from_slice(&self.valid);
        all.extend_from_slice(&self.test);
        all
    }
}

/// A raw TSV row before time remapping.
struct RawRow {
    s: u32,
    r: u32,
    o: u32,
    t: u64,
}

fn parse_file_raw(path: &Path, policy: IntervalPolicy) -> Result<Vec<RawRow>> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path)
        .map_err(|_| DataError::MissingFile(display.clone()))?;
    let reader = BufReader::new(file);
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        let fields: Vec<&str> = if fields.len() == 1 {
            // tolerate space-separated files
            trimmed.split_whitespace().collect()
        } else {
            fields
        };
        if fields.len() < 4 {
            return Err(DataError::Malformed {
                path: display,
                line: lineno,
                msg: format!("expected at least 4 fields, got {}", fields.len()),
            });
        }
        let num = |i: usize| -> Result<u64> {
            fields[i].trim().parse::<u64>().map_err(|_| DataError::Malformed {
                path: display.clone(),
                line: lineno,
                msg: format!("field {} ('{}') is not a nonnegative integer", i + 1, fields[i]),
            })
        };
        let s = num(0)? as u32;
        let r = num(1)? as u32;
        let o = num(2)? as u32;
        let ts = num(3)?;
        let expand_interval = policy == IntervalPolicy::YearBuckets && fields.len() >= 5;
        if expand_interval {
            let te = num(4)?;
            if te < ts {
                return Err(DataError::IntervalOrder {
                    path: display,
                    line: lineno,
                    start: ts,
                    end: te,
                });
            }
            for t in ts..=te {
                rows.push(RawRow { s, r, o, t });
            }
        } else {
            rows.push(RawRow { s, r, o, t: ts });
        }
    }
    Ok(rows)
}

fn remap_times(groups: &mut [Vec<RawRow>]) -> u32 {
    let mut times: BTreeSet<u64> = BTreeSet::new();
    for g in groups.iter() {
        for row in g {
            times.insert(row.t);
        }
    }
    let index: BTreeMap<u64, u32> =
        times.iter().enumerate().map(|(i, t)| (*t, i as u32)).collect();
    for g in groups.iter_mut() {
        for row in g {
            row.t = u64::from(*index.get(&row.t).expect("time seen during collection"));
        }
    }
    index.len() as u32
}

/// Parse one quadruple file; raw times are remapped to contiguous
/// indices `0..|T|-1`. Returns the quadruples plus the inferred
/// vocabulary sizes `(|E|, |R|, |T|)`.
pub fn parse_quadruples(
    path: &Path,
    policy: IntervalPolicy,
) -> Result<(Vec<Quadruple>, u32, u32, u32)> {
    let mut groups = [parse_file_raw(path, policy)?];
    let num_t = remap_times(&mut groups);
    let quads: Vec<Quadruple> =
        groups[0].iter().map(|r| Quadruple { s: r.s, r: r.r, o: r.o, t: r.t as u32 }).collect();
    let num_e = quads.iter().map(|q| q.s.max(q.o) + 1).max().unwrap_or(0);
    let num_r = quads.iter().map(|q| q.r + 1).max().unwrap_or(0);
    Ok((quads, num_e, num_r, num_t))
}

fn read_stat(dir: &Path) -> Result<Option<(u32, u32)>> {
    let path = dir.join("stat.txt");
    if !path.exists() {
        return Ok(None);
    }
    let content = std::fs::read_to_string(&path)?;
    let fields: Vec<&str> = content.split_whitespace().collect();
    if fields.len() < 2 {
        return Err(DataError::Malformed {
            path: path.display().to_string(),
            line: 1,
            msg: "stat.txt needs |E| and |R|".into(),
        });
    }
    let parse = |s: &str| {
        s.parse::<u32>().map_err(|_| DataError::Malformed {
            path: path.display().to_string(),
            line: 1,
            msg: format!("'{s}' is not an integer"),
        })
    };
    Ok(Some((parse(fields[0])?, parse(fields[1])?)))
}

/// Load `train.txt` / `valid.txt` / `test.txt` from a directory with a
/// joint time remapping, validating ids against `stat.txt` when present.
pub fn load_dataset(dir: &Path, policy: IntervalPolicy) -> Result<Dataset> {
    let mut groups = [
        parse_file_raw(&dir.join("train.txt"), policy)?,
        parse_file_raw(&dir.join("valid.txt"), policy)?,
        parse_file_raw(&dir.join("test.txt"), policy)?,
    ];
    let num_timestamps = remap_times(&mut groups);
    let to_quads = |g: &Vec<RawRow>| -> Vec<Quadruple> {
        g.iter().map(|r| Quadruple { s: r.s, r: r.r, o: r.o, t: r.t as u32 }).collect()
    };
    let train = to_quads(&groups[0]);
    let valid = to_quads(&groups[1]);
    let test = to_quads(&groups[2]);

    let mut num_entities = 0u32;
    let mut num_relations = 0u32;
    for q in train.iter().chain(&valid).chain(&test) {
        num_entities = num_entities.max(q.s + 1).max(q.o + 1);
        num_relations = num_relations.max(q.r + 1);
    }
    if let Some((e, r)) = read_stat(dir)? {
        if num_entities > e {
            return Err(DataError::IdOutOfRange {
                path: dir.display().to_string(),
                line: 0,
                id: num_entities - 1,
                vocab: e,
            });
        }
        if num_relations > r {
            return Err(DataError::IdOutOfRange {
                path: dir.display().to_string(),
                line: 0,
                id: num_relations - 1,
                vocab: r,
            });
        }
        num_entities = e;
        num_relations = r;
    }
    Ok(Dataset { num_entities, num_relations, num_timestamps, train, valid, test })
}

/// Group quadruples into one snapshot per timestamp. Timestamps with no
/// facts yield empty snapshots; exact duplicates within a timestamp are
/// de-duplicated.
pub fn build_snapshots(quads: &[Quadruple], num_timestamps: usize) -> Vec<SnapshotGraph> {
    let mut edge_sets: Vec<BTreeSet<(u32, u32, u32)>> = vec![BTreeSet::new(); num_timestamps];
    for q in quads {
        edge_sets[q.t as usize].insert((q.s, q.r, q.o));
    }
    edge_sets
        .into_iter()
        .enumerate()
        .map(|(t, set)| {
            let mut g = SnapshotGraph { t: t as u32, ..Default::default() };
            for (s, r, o) in set {
                g.edges.push((s, r, o));
                g.neighbor_index.entry(s).or_default().push((r, o));
                g.neighbor_index.entry(o).or_default().push((r, s));
                g.entity_set.insert(s);
                g.entity_set.insert(o);
            }
            g
        })
        .collect()
}

/// Split snapshots chronologically. Boundary indices are floors of the
/// cumulative ratios over `|T|`; no timestamp straddles two splits.
pub fn chronological_split(
    snapshots: &[SnapshotGraph],
    ratios: (f64, f64, f64),
) -> Result<DatasetSplit> {
    let total = ratios.0 + ratios.1 + ratios.2;
    if (total - 1.0).abs() > 1e-9 {
        return Err(DataError::BadRatios(total));
    }
    let t = snapshots.len();
    if t < 3 {
        return Err(DataError::TooFewTimestamps(t));
    }
    let b1 = ((t as f64) * ratios.0).floor() as u32;
    let b2 = ((t as f64) * (ratios.0 + ratios.1)).floor() as u32;
    let mut split = DatasetSplit { boundaries: (b1, b2), ..Default::default() };
    for g in snapshots {
        let bucket = if g.t < b1 {
            &mut split.train
        } else if g.t < b2 {
            &mut split.valid
        } else {
            &mut split.test
        };
        bucket.extend(g.edges.iter().map(|&(s, r, o)| Quadruple { s, r, o, t: g.t }));
    }
    Ok(split)
}

/// Build the filtered-evaluation candidate sets over all given quads.
pub fn build_filter(all_quads: &[Quadruple]) -> FilterSet {
    let mut f = FilterSet::default();
    for q in all_quads {
        f.objects.entry((q.s, q.r, q.t)).or_default().insert(q.o);
        f.subjects.entry((q.o, q.r, q.t)).or_default().insert(q.s);
    }
    f
}

const BUNDLE_MAGIC: &[u8; 4] = b"CTKG";
const BUNDLE_VERSION: u32 = 1;

/// Serialize a dataset to a compact binary bundle.
pub fn write_bundle<W: Write>(ds: &Dataset, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    w.write_all(BUNDLE_MAGIC)?;
    w.write_u32::<LittleEndian>(BUNDLE_VERSION)?;
    w.write_u32::<LittleEndian>(ds.num_entities)?;
    w.write_u32::<LittleEndian>(ds.num_relations)?;
    w.write_u32::<LittleEndian>(ds.num_timestamps)?;
    for split in [&ds.train, &ds.valid, &ds.test] {
        w.write_u64::<LittleEndian>(split.len() as u64)?;
        for q in split.iter() {
            w.write_u32::<LittleEndian>(q.s)?;
            w.write_u32::<LittleEndian>(q.r)?;
            w.write_u32::<LittleEndian>(q.o)?;
            w.write_u32::<LittleEndian>(q.t)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a dataset bundle written by [`write_bundle`].
pub fn read_bundle<R: Read>(r: R) -> Result<Dataset> {
    let mut r = BufReader::new(r);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| DataError::BadBundle("truncated header".into()))?;
    if &magic != BUNDLE_MAGIC {
        return Err(DataError::BadBundle("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != BUNDLE_VERSION {
        return Err(DataError::BadBundle(format!("unsupported version {version}")));
    }
    let num_entities = r.read_u32::<LittleEndian>()?;
    let num_relations = r.read_u32::<LittleEndian>()?;
    let num_timestamps = r.read_u32::<LittleEndian>()?;
    let mut splits: Vec<Vec<Quadruple>> = Vec::with_capacity(3);
    for _ in 0..3 {
        let n = r.read_u64::<LittleEndian>()? as usize;
        let mut quads = Vec::with_capacity(n);
        for _ in 0..n {
            let s = r.read_u32::<LittleEndian>()?;
            let rel = r.read_u32::<LittleEndian>()?;
            let o = r.read_u32::<LittleEndian>()?;
            let t = r.read_u32::<LittleEndian>()?;
            quads.push(Quadruple { s, r: rel, o, t });
        }
        splits.push(quads);
    }
    let test = splits.pop().unwrap();
    let valid = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok(Dataset { num_entities, num_relations, num_timestamps, train, valid, test })
}
