//! Knowledge-graph data model and the on-disk dataset formats.
//!
//! A dataset directory holds tab-separated id maps, triples, attribute triples,
//! seed alignments and optional `FMAT` feature matrices for both graphs. All
//! references are dense integer ids; vocabulary sizes come from the id-map files.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::{ModalityKind, PipelineConfig};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub const ENT_IDS: [&str; 2] = ["ent_ids_1", "ent_ids_2"];
pub const REL_IDS: [&str; 2] = ["rel_ids_1", "rel_ids_2"];
pub const TIME_IDS: &str = "time_ids";
pub const TRIPLES: [&str; 2] = ["triples_1", "triples_2"];
pub const ATTR_TRIPLES: [&str; 2] = ["attr_triples_1", "attr_triples_2"];
pub const ATTR_NAME_IDS: [&str; 2] = ["attr_name_ids_1", "attr_name_ids_2"];
pub const IMG_ROWS: [&str; 2] = ["img_rows_1", "img_rows_2"];
pub const IMG_FEAT: [&str; 2] = ["img_feat_1.fmat", "img_feat_2.fmat"];
pub const ATTRNAME_FEAT: [&str; 2] = ["attrname_feat_1.fmat", "attrname_feat_2.fmat"];
pub const SEEDS_TRAIN: &str = "seeds_train";
pub const SEEDS_TEST: &str = "seeds_test";

const FMAT_MAGIC: &[u8; 4] = b"FMAT";
const FMAT_VERSION: u32 = 1;
const FMAT_HEADER_LEN: usize = 4 + 4 + 8 + 8;

/// A relational fact, optionally stamped with a timestamp id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quad {
    pub head: usize,
    pub rel: usize,
    pub tail: usize,
    pub time: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AttrTriple {
    pub entity: usize,
    pub name: usize,
    pub value: String,
}

/// One multi-modal knowledge graph.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mmkg {
    pub n_entities: usize,
    pub n_relations: usize,
    pub quads: Vec<Quad>,
    pub attr_triples: Vec<AttrTriple>,
    /// `(entity, image_row)` links, already capped per entity.
    pub entity_images: Vec<(usize, usize)>,
    pub attr_name_count: usize,
    pub entity_labels: Option<Vec<String>>,
}

impl Mmkg {
    pub fn has_timestamps(&self) -> bool {
        self.quads.iter().any(|q| q.time.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignedPair {
    pub src: usize,
    pub tgt: usize,
    pub score: Option<f64>,
}

/// Entity pairs between source and target graph.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlignmentSet {
    pairs: Vec<AlignedPair>,
}

impl AlignmentSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        AlignmentSet {
            pairs: pairs
                .into_iter()
                .map(|(src, tgt)| AlignedPair { src, tgt, score: None })
                .collect(),
        }
    }

    pub fn from_scored(pairs: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        AlignmentSet {
            pairs: pairs
                .into_iter()
                .map(|(src, tgt, s)| AlignedPair {
                    src,
                    tgt,
                    score: Some(s),
                })
                .collect(),
        }
    }

    pub fn push(&mut self, pair: AlignedPair) {
        self.pairs.push(pair);
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &AlignedPair> {
        self.pairs.iter()
    }

    pub fn pairs(&self) -> &[AlignedPair] {
        &self.pairs
    }

    pub fn as_tuples(&self) -> Vec<(usize, usize)> {
        self.pairs.iter().map(|p| (p.src, p.tgt)).collect()
    }

    pub fn sources(&self) -> HashSet<usize> {
        self.pairs.iter().map(|p| p.src).collect()
    }

    pub fn targets(&self) -> HashSet<usize> {
        self.pairs.iter().map(|p| p.tgt).collect()
    }

    pub fn contains(&self, src: usize, tgt: usize) -> bool {
        self.pairs.iter().any(|p| p.src == src && p.tgt == tgt)
    }

    /// True when no source and no target repeats.
    pub fn is_one_to_one(&self) -> bool {
        let mut s = HashSet::new();
        let mut t = HashSet::new();
        self.pairs.iter().all(|p| s.insert(p.src) && t.insert(p.tgt))
    }

    pub fn sort_by_src(&mut self) {
        self.pairs.sort_by_key(|p| (p.src, p.tgt));
    }

    pub fn sorted(mut self) -> Self {
        self.sort_by_src();
        self
    }

    /// Swaps the roles of source and target.
    pub fn reversed(&self) -> AlignmentSet {
        AlignmentSet {
            pairs: self
                .pairs
                .iter()
                .map(|p| AlignedPair {
                    src: p.tgt,
                    tgt: p.src,
                    score: p.score,
                })
                .collect(),
        }
    }
}

/// Rows of a feature matrix together with the id that owns each row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub matrix: DenseMatrix,
    pub owner: Vec<usize>,
}

impl FeatureTable {
    pub fn new(matrix: DenseMatrix, owner: Vec<usize>) -> Result<Self> {
        if owner.len() != matrix.rows() {
            return Err(Error::Dimension(format!(
                "{} owners for {} feature rows",
                owner.len(),
                matrix.rows()
            )));
        }
        Ok(FeatureTable { matrix, owner })
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }
}

/// How the owner file of a feature table is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OwnerFile {
    /// `<row>\t<entity>` lines, as in `img_rows_*`.
    ImageRows,
    /// `<id>\t<name>` lines, as in `attr_name_ids_*`; row `id` belongs to name `id`.
    AttrNames,
}

/// Source and target graph with their seed alignments.
#[derive(Debug, Clone, PartialEq)]
pub struct KgPair {
    pub source: Mmkg,
    pub target: Mmkg,
    pub n_timestamps: usize,
    pub train_seeds: AlignmentSet,
    pub test_seeds: AlignmentSet,
    /// Side modalities whose files are absent, with the first missing file.
    pub unavailable: BTreeMap<ModalityKind, PathBuf>,
}

impl KgPair {
    pub fn graph(&self, side: usize) -> &Mmkg {
        if side == 0 {
            &self.source
        } else {
            &self.target
        }
    }

    pub fn is_available(&self, kind: ModalityKind) -> bool {
        !self.unavailable.contains_key(&kind)
    }
}

/// A loaded dataset: graphs plus whatever feature tables were present.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub pair: KgPair,
    pub images: Option<[FeatureTable; 2]>,
    pub attr_names: Option<[FeatureTable; 2]>,
}

struct Line<'a> {
    no: usize,
    fields: Vec<&'a str>,
}

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn lines(text: &str) -> impl Iterator<Item = Line<'_>> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.strip_suffix('\r').unwrap_or(l);
        if l.trim().is_empty() {
            None
        } else {
            Some(Line {
                no: i + 1,
                fields: l.split('\t').collect(),
            })
        }
    })
}

fn parse_index(path: &Path, line: &Line<'_>, col: usize, what: &str) -> Result<usize> {
    let raw = line
        .fields
        .get(col)
        .ok_or_else(|| Error::parse(path, line.no, format!("missing {what} column")))?;
    raw.trim()
        .parse::<usize>()
        .map_err(|_| Error::parse(path, line.no, format!("invalid {what} {raw:?}")))
}

fn check_range(path: &Path, line: usize, what: &str, idx: usize, bound: usize) -> Result<()> {
    if idx >= bound {
        return Err(Error::parse(
            path,
            line,
            format!("{what} index {idx} out of range (vocabulary size {bound})"),
        ));
    }
    Ok(())
}

/// Reads an `<int>\t<label>` id map; returns labels indexed by id.
fn read_id_map(path: &Path) -> Result<Vec<String>> {
    let text = read_text(path)?;
    let mut entries = BTreeMap::new();
    for line in lines(&text) {
        if line.fields.len() < 2 {
            return Err(Error::parse(path, line.no, "expected <id>\\t<label>"));
        }
        let id = parse_index(path, &line, 0, "id")?;
        let label = line.fields[1..].join("\t");
        if entries.insert(id, label).is_some() {
            return Err(Error::parse(path, line.no, format!("duplicate id {id}")));
        }
    }
    let n = entries.keys().next_back().map_or(0, |m| m + 1);
    let mut labels = vec![String::new(); n];
    for (id, label) in entries {
        labels[id] = label;
    }
    Ok(labels)
}

/// `n_time` is `None` when the dataset has no timestamp vocabulary; a fourth
/// column is then still parsed but dropped.
fn read_quads(path: &Path, n_ent: usize, n_rel: usize, n_time: Option<usize>) -> Result<Vec<Quad>> {
    let text = read_text(path)?;
    let mut quads = Vec::new();
    for line in lines(&text) {
        if !(3..=4).contains(&line.fields.len()) {
            return Err(Error::parse(path, line.no, "expected <h>\\t<r>\\t<t>[\\t<time>]"));
        }
        let head = parse_index(path, &line, 0, "head")?;
        let rel = parse_index(path, &line, 1, "relation")?;
        let tail = parse_index(path, &line, 2, "tail")?;
        check_range(path, line.no, "head entity", head, n_ent)?;
        check_range(path, line.no, "relation", rel, n_rel)?;
        check_range(path, line.no, "tail entity", tail, n_ent)?;
        let time = match (line.fields.len(), n_time) {
            (4, Some(n_time)) => {
                let t = parse_index(path, &line, 3, "timestamp")?;
                check_range(path, line.no, "timestamp", t, n_time)?;
                Some(t)
            }
            (4, None) => {
                parse_index(path, &line, 3, "timestamp")?;
                None
            }
            _ => None,
        };
        quads.push(Quad { head, rel, tail, time });
    }
    quads.sort();
    Ok(quads)
}

fn read_attr_triples(path: &Path, n_ent: usize, n_names: usize) -> Result<Vec<AttrTriple>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for line in lines(&text) {
        if line.fields.len() < 3 {
            return Err(Error::parse(path, line.no, "expected <ent>\\t<attr_name_id>\\t<value>"));
        }
        let entity = parse_index(path, &line, 0, "entity")?;
        let name = parse_index(path, &line, 1, "attribute name")?;
        check_range(path, line.no, "entity", entity, n_ent)?;
        check_range(path, line.no, "attribute name", name, n_names)?;
        out.push(AttrTriple {
            entity,
            name,
            value: line.fields[2..].join("\t"),
        });
    }
    out.sort();
    Ok(out)
}

/// Reads `<row>\t<ent>` links and keeps at most `max_images` per entity, in file order.
fn read_image_links(path: &Path, n_ent: usize, max_images: usize) -> Result<Vec<(usize, usize)>> {
    let text = read_text(path)?;
    let mut seen_rows = HashSet::new();
    let mut per_entity: HashMap<usize, usize> = HashMap::new();
    let mut links = Vec::new();
    for line in lines(&text) {
        let row = parse_index(path, &line, 0, "image row")?;
        let ent = parse_index(path, &line, 1, "entity")?;
        check_range(path, line.no, "entity", ent, n_ent)?;
        if !seen_rows.insert(row) {
            return Err(Error::parse(path, line.no, format!("image row {row} listed twice")));
        }
        let count = per_entity.entry(ent).or_default();
        if *count < max_images {
            *count += 1;
            links.push((ent, row));
        }
    }
    Ok(links)
}

fn read_seeds(path: &Path, n_src: usize, n_tgt: usize) -> Result<AlignmentSet> {
    let text = read_text(path)?;
    let mut srcs = HashMap::new();
    let mut tgts = HashMap::new();
    let mut set = AlignmentSet::new();
    for line in lines(&text) {
        let src = parse_index(path, &line, 0, "source entity")?;
        let tgt = parse_index(path, &line, 1, "target entity")?;
        check_range(path, line.no, "source entity", src, n_src)?;
        check_range(path, line.no, "target entity", tgt, n_tgt)?;
        if let Some(prev) = srcs.insert(src, line.no) {
            return Err(Error::parse(
                path,
                line.no,
                format!("duplicate source entity {src} (first on line {prev})"),
            ));
        }
        if let Some(prev) = tgts.insert(tgt, line.no) {
            return Err(Error::parse(
                path,
                line.no,
                format!("duplicate target entity {tgt} (first on line {prev})"),
            ));
        }
        set.push(AlignedPair { src, tgt, score: None });
    }
    Ok(set.sorted())
}

fn first_missing(dir: &Path, names: &[&str]) -> Option<PathBuf> {
    names.iter().map(|n| dir.join(n)).find(|p| !p.exists())
}

/// Loads and validates both graphs and the seed alignments of a dataset directory.
pub fn load_kg_pair(dir: &Path, config: &PipelineConfig) -> Result<KgPair> {
    let mut unavailable = BTreeMap::new();

    let time_path = dir.join(TIME_IDS);
    let time_vocab = if time_path.exists() {
        Some(read_id_map(&time_path)?.len())
    } else {
        unavailable.insert(ModalityKind::Temporal, time_path);
        None
    };
    let n_timestamps = time_vocab.unwrap_or(0);

    let attr_files: Vec<&str> = ATTR_TRIPLES
        .iter()
        .chain(&ATTR_NAME_IDS)
        .chain(&ATTRNAME_FEAT)
        .copied()
        .collect();
    if let Some(p) = first_missing(dir, &attr_files) {
        unavailable.insert(ModalityKind::Attribute, p);
    }
    let img_files: Vec<&str> = IMG_ROWS.iter().chain(&IMG_FEAT).copied().collect();
    if let Some(p) = first_missing(dir, &img_files) {
        unavailable.insert(ModalityKind::Visual, p);
    }

    let mut graphs = Vec::with_capacity(2);
    for side in 0..2 {
        let labels = read_id_map(&dir.join(ENT_IDS[side]))?;
        let n_entities = labels.len();
        let n_relations = read_id_map(&dir.join(REL_IDS[side]))?.len();
        let quads = read_quads(&dir.join(TRIPLES[side]), n_entities, n_relations, time_vocab)?;

        let (attr_triples, attr_name_count) = if unavailable.contains_key(&ModalityKind::Attribute) {
            (Vec::new(), 0)
        } else {
            let names = read_id_map(&dir.join(ATTR_NAME_IDS[side]))?.len();
            (read_attr_triples(&dir.join(ATTR_TRIPLES[side]), n_entities, names)?, names)
        };
        let entity_images = if unavailable.contains_key(&ModalityKind::Visual) {
            Vec::new()
        } else {
            read_image_links(&dir.join(IMG_ROWS[side]), n_entities, config.max_images)?
        };

        graphs.push(Mmkg {
            n_entities,
            n_relations,
            quads,
            attr_triples,
            entity_images,
            attr_name_count,
            entity_labels: Some(labels),
        });
    }
    let target = graphs.pop().expect("two graphs");
    let source = graphs.pop().expect("two graphs");

    let train_seeds = read_seeds(&dir.join(SEEDS_TRAIN), source.n_entities, target.n_entities)?;
    let test_path = dir.join(SEEDS_TEST);
    let test_seeds = read_seeds(&test_path, source.n_entities, target.n_entities)?;
    let (train_src, train_tgt) = (train_seeds.sources(), train_seeds.targets());
    if let Some(p) = test_seeds
        .iter()
        .find(|p| train_src.contains(&p.src) || train_tgt.contains(&p.tgt))
    {
        return Err(Error::format(
            &test_path,
            format!("test pair ({}, {}) overlaps the training seeds", p.src, p.tgt),
        ));
    }

    Ok(KgPair {
        source,
        target,
        n_timestamps,
        train_seeds,
        test_seeds,
        unavailable,
    })
}

/// Loads a whole dataset directory, including the feature tables of available modalities.
pub fn load_dataset(dir: &Path, config: &PipelineConfig) -> Result<Dataset> {
    let pair = load_kg_pair(dir, config)?;

    let images = if pair.is_available(ModalityKind::Visual) {
        let mut tables = Vec::with_capacity(2);
        for side in 0..2 {
            let path = dir.join(IMG_FEAT[side]);
            let table = load_feature_table(&path, &dir.join(IMG_ROWS[side]), OwnerFile::ImageRows)?;
            let g = pair.graph(side);
            if let Some(&e) = table.owner.iter().find(|&&e| e >= g.n_entities) {
                return Err(Error::format(path, format!("image owner entity {e} out of range")));
            }
            for &(ent, row) in &g.entity_images {
                if table.owner.get(row) != Some(&ent) {
                    return Err(Error::Internal(format!("image row {row} lost its owner")));
                }
            }
            tables.push(table);
        }
        let t = tables.pop().expect("two tables");
        Some([tables.pop().expect("two tables"), t])
    } else {
        None
    };

    let attr_names = if pair.is_available(ModalityKind::Attribute) {
        let mut tables = Vec::with_capacity(2);
        for side in 0..2 {
            let path = dir.join(ATTRNAME_FEAT[side]);
            let table =
                load_feature_table(&path, &dir.join(ATTR_NAME_IDS[side]), OwnerFile::AttrNames)?;
            tables.push(table);
        }
        let t = tables.pop().expect("two tables");
        Some([tables.pop().expect("two tables"), t])
    } else {
        None
    };

    Ok(Dataset {
        dir: dir.to_path_buf(),
        pair,
        images,
        attr_names,
    })
}

/// Decodes an `FMAT` buffer into a matrix.
pub fn decode_fmat(bytes: &[u8], path: &Path) -> Result<DenseMatrix> {
    if bytes.len() < FMAT_HEADER_LEN {
        return Err(Error::format(path, "truncated FMAT header"));
    }
    if &bytes[0..4] != FMAT_MAGIC {
        return Err(Error::format(path, "bad magic, expected FMAT"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FMAT_VERSION {
        return Err(Error::format(path, format!("unsupported FMAT version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let cols = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    let need = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| Error::format(path, "FMAT dimensions overflow"))?;
    let payload = &bytes[FMAT_HEADER_LEN..];
    if payload.len() < need {
        return Err(Error::format(
            path,
            format!("truncated payload: {} bytes, expected {need}", payload.len()),
        ));
    }
    if payload.len() > need {
        return Err(Error::format(path, "trailing bytes after FMAT payload"));
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let mut data = Vec::with_capacity(rows * cols);
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(Error::NonFinite(format!(
                "{}: entry ({}, {}) is {v}",
                path.display(),
                k / cols,
                k % cols
            )));
        }
        data.push(f64::from(v));
    }
    DenseMatrix::from_vec(rows, cols, data)
}

/// Encodes a matrix as `FMAT` (values narrowed to `f32`).
pub fn encode_fmat(m: &DenseMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(FMAT_HEADER_LEN + m.rows() * m.cols() * 4);
    out.extend_from_slice(FMAT_MAGIC);
    out.extend_from_slice(&FMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for &v in m.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn read_fmat(path: &Path) -> Result<DenseMatrix> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_fmat(&bytes, path)
}

pub fn write_fmat(m: &DenseMatrix, path: &Path) -> Result<()> {
    fs::write(path, encode_fmat(m)).map_err(|e| Error::io(path, e))
}

/// Loads an `FMAT` matrix and the owner of each of its rows.
pub fn load_feature_table(path: &Path, owner_path: &Path, layout: OwnerFile) -> Result<FeatureTable> {
    let matrix = read_fmat(path)?;
    let text = read_text(owner_path)?;
    let mut owner = vec![None; matrix.rows()];
    let mut count = 0usize;
    for line in lines(&text) {
        let row = parse_index(owner_path, &line, 0, "row")?;
        let id = match layout {
            OwnerFile::ImageRows => parse_index(owner_path, &line, 1, "owner")?,
            OwnerFile::AttrNames => row,
        };
        count += 1;
        let slot = owner.get_mut(row).ok_or_else(|| {
            Error::parse(
                owner_path,
                line.no,
                format!("row {row} out of range for {} feature rows", matrix.rows()),
            )
        })?;
        if slot.replace(id).is_some() {
            return Err(Error::parse(owner_path, line.no, format!("row {row} listed twice")));
        }
    }
    if count != matrix.rows() {
        return Err(Error::format(
            owner_path,
            format!("{count} owner lines for {} feature rows", matrix.rows()),
        ));
    }
    let owner = owner.into_iter().map(|o| o.expect("all rows counted")).collect();
    FeatureTable::new(matrix, owner)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes `src\ttgt\tscore` lines sorted by source index.
pub fn write_predictions(pairs: &AlignmentSet, path: &Path) -> Result<()> {
    let mut sorted: Vec<&AlignedPair> = pairs.iter().collect();
    sorted.sort_by_key(|p| (p.src, p.tgt));
    let mut w = create(path)?;
    for p in sorted {
        writeln!(w, "{}\t{}\t{:.6}", p.src, p.tgt, p.score.unwrap_or(0.0))
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<AlignmentSet> {
    let text = read_text(path)?;
    let mut set = AlignmentSet::new();
    for line in lines(&text) {
        let src = parse_index(path, &line, 0, "source entity")?;
        let tgt = parse_index(path, &line, 1, "target entity")?;
        let score = match line.fields.get(2) {
            Some(raw) => Some(
                raw.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(path, line.no, format!("invalid score {raw:?}")))?,
            ),
            None => None,
        };
        set.push(AlignedPair { src, tgt, score });
    }
    Ok(set)
}

/// Reads a seed/gold alignment file without range checks against a graph.
pub fn read_alignment(path: &Path) -> Result<AlignmentSet> {
    read_seeds(path, usize::MAX, usize::MAX)
}

pub fn write_alignment(pairs: &AlignmentSet, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for p in pairs.iter() {
        writeln!(w, "{}\t{}", p.src, p.tgt).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_id_map(labels: &[String], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for (i, l) in labels.iter().enumerate() {
        writeln!(w, "{i}\t{l}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_quads(quads: &[Quad], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for q in quads {
        match q.time {
            Some(t) => writeln!(w, "{}\t{}\t{}\t{t}", q.head, q.rel, q.tail),
            None => writeln!(w, "{}\t{}\t{}", q.head, q.rel, q.tail),
        }
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_attr_triples(triples: &[AttrTriple], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for a in triples {
        writeln!(w, "{}\t{}\t{}", a.entity, a.name, a.value).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `<row>\t<entity>` image owner lines.
pub fn write_image_rows(owner: &[usize], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for (row, ent) in owner.iter().enumerate() {
        writeln!(w, "{row}\t{ent}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    fn minimal(dir: &Path) {
        write(dir, "ent_ids_1", "0\ta\n1\tb\n");
        write(dir, "ent_ids_2", "0\tx\n1\ty\n");
        write(dir, "rel_ids_1", "0\tr\n");
        write(dir, "rel_ids_2", "0\tr\n");
        write(dir, "triples_1", "0\t0\t1\n");
        write(dir, "triples_2", "1\t0\t0\n");
        write(dir, "seeds_train", "0\t1\n");
        write(dir, "seeds_test", "1\t0\n");
    }

    #[test]
    fn loads_minimal_pair() {
        let d = tempfile::tempdir().unwrap();
        minimal(d.path());
        let pair = load_kg_pair(d.path(), &PipelineConfig::default()).unwrap();
        assert_eq!(pair.train_seeds.as_tuples(), vec![(0, 1)]);
        assert_eq!(pair.source.n_entities, 2);
        assert_eq!(pair.n_timestamps, 0);
        for k in [ModalityKind::Visual, ModalityKind::Attribute, ModalityKind::Temporal] {
            assert!(!pair.is_available(k));
        }
        assert!(pair.is_available(ModalityKind::Relational));
    }

    #[test]
    fn duplicate_seed_source_is_rejected() {
        let d = tempfile::tempdir().unwrap();
        minimal(d.path());
        write(d.path(), "seeds_train", "0\t1\n0\t0\n");
        write(d.path(), "seeds_test", "");
        let err = load_kg_pair(d.path(), &PipelineConfig::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("seeds_train:2") && msg.contains("duplicate source"), "{msg}");
    }

    #[test]
    fn out_of_range_triple_names_file_and_line() {
        let d = tempfile::tempdir().unwrap();
        minimal(d.path());
        write(d.path(), "ent_ids_1", "0\ta\n1\tb\n2\tc\n");
        write(d.path(), "triples_1", "0\t0\t1\n5\t0\t1\n");
        let msg = load_kg_pair(d.path(), &PipelineConfig::default())
            .unwrap_err()
            .to_string();
        assert!(msg.contains("triples_1:2") && msg.contains("out of range"), "{msg}");
    }

    #[test]
    fn timestamp_beyond_vocabulary_is_rejected() {
        let d = tempfile::tempdir().unwrap();
        minimal(d.path());
        write(d.path(), "time_ids", "0\t2001\n");
        write(d.path(), "triples_1", "0\t0\t1\t1\n");
        let msg = load_kg_pair(d.path(), &PipelineConfig::default())
            .unwrap_err()
            .to_string();
        assert!(msg.contains("timestamp"), "{msg}");
    }

    #[test]
    fn overlapping_train_and_test_rejected() {
        let d = tempfile::tempdir().unwrap();
        minimal(d.path());
        write(d.path(), "seeds_test", "0\t0\n");
        assert!(load_kg_pair(d.path(), &PipelineConfig::default()).is_err());
    }

    #[test]
    fn missing_mandatory_file() {
        let d = tempfile::tempdir().unwrap();
        minimal(d.path());
        fs::remove_file(d.path().join("triples_2")).unwrap();
        let err = load_kg_pair(d.path(), &PipelineConfig::default()).unwrap_err();
        assert!(matches!(err, Error::MissingFile(p) if p.ends_with("triples_2")));
    }

    #[test]
    fn image_cap_keeps_first_rows_in_file_order() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "img", "4\t0\n2\t0\n0\t0\n1\t1\n3\t0\n");
        let links = read_image_links(&d.path().join("img"), 2, 2).unwrap();
        assert_eq!(links, vec![(0, 4), (0, 2), (1, 1)]);
    }

    #[test]
    fn fmat_table_round_trip() {
        let d = tempfile::tempdir().unwrap();
        let m = DenseMatrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        write_fmat(&m, &d.path().join("f.fmat")).unwrap();
        write(d.path(), "rows", "0\t0\n1\t1\n");
        let t = load_feature_table(&d.path().join("f.fmat"), &d.path().join("rows"), OwnerFile::ImageRows)
            .unwrap();
        assert_eq!(t.matrix, m);
        assert_eq!(t.matrix.get(0, 2), 0.0);
        assert_eq!(t.owner, vec![0, 1]);
    }

    #[test]
    fn fmat_truncation_and_nan() {
        let p = Path::new("x.fmat");
        let m = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let bytes = encode_fmat(&m);
        let err = decode_fmat(&bytes[..bytes.len() - 3], p).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");

        let mut nan = bytes.clone();
        nan[FMAT_HEADER_LEN..FMAT_HEADER_LEN + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_fmat(&nan, p), Err(Error::NonFinite(_))));

        let mut bad = bytes;
        bad[0] = b'X';
        assert!(decode_fmat(&bad, p).unwrap_err().to_string().contains("magic"));
    }

    #[test]
    fn owner_count_mismatch() {
        let d = tempfile::tempdir().unwrap();
        write_fmat(&DenseMatrix::zeros(2, 2), &d.path().join("f.fmat")).unwrap();
        write(d.path(), "rows", "0\t0\n");
        assert!(load_feature_table(&d.path().join("f.fmat"), &d.path().join("rows"), OwnerFile::ImageRows)
            .is_err());
    }

    #[test]
    fn predictions_format() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("pred.tsv");
        write_predictions(&AlignmentSet::from_scored([(0, 1, 0.9)]), &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "0\t1\t0.900000\n");
        assert_eq!(read_predictions(&p).unwrap(), AlignmentSet::from_scored([(0, 1, 0.9)]));

        write_predictions(&AlignmentSet::new(), &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "");
    }

    #[test]
    fn unwritable_prediction_path() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("no/such/dir/pred.tsv");
        assert!(matches!(write_predictions(&AlignmentSet::new(), &p), Err(Error::Io { .. })));
    }

    proptest! {
        #[test]
        fn fmat_round_trip_is_bit_exact(rows in 0usize..5, cols in 0usize..5, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = DenseMatrix::from_fn(rows, cols, |_, _| f64::from(rng.random_range(-1e3f32..1e3)));
            let back = decode_fmat(&encode_fmat(&m), Path::new("p")).unwrap();
            prop_assert_eq!(back, m);
        }

        #[test]
        fn predictions_round_trip(entries in proptest::collection::btree_map(0usize..1000, (0usize..1000, 0u32..2_000_000), 0..20)) {
            let d = tempfile::tempdir().unwrap();
            let p = d.path().join("pred.tsv");
            let set = AlignmentSet::from_scored(
                entries.iter().map(|(&s, &(t, v))| (s, t, f64::from(v) / 1e6)),
            );
            write_predictions(&set, &p).unwrap();
            let back = read_predictions(&p).unwrap();
            prop_assert_eq!(back.as_tuples(), set.as_tuples());
            for (a, b) in back.iter().zip(set.iter()) {
                prop_assert!((a.score.unwrap() - b.score.unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn line_order_does_not_matter(seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let d = tempfile::tempdir().unwrap();
            minimal(d.path());
            write(d.path(), "ent_ids_1", "0\ta\n1\tb\n2\tc\n3\td\n");
            write(d.path(), "ent_ids_2", "0\ta\n1\tb\n2\tc\n3\td\n");
            let mut triples = vec!["0\t0\t1", "1\t0\t2", "2\t0\t3", "3\t0\t0", "0\t0\t2"];
            let mut seeds = vec!["0\t3", "1\t2", "2\t1"];
            write(d.path(), "triples_1", &(triples.join("\n") + "\n"));
            write(d.path(), "seeds_train", &(seeds.join("\n") + "\n"));
            write(d.path(), "seeds_test", "3\t0\n");
            let a = load_kg_pair(d.path(), &PipelineConfig::default()).unwrap();
            triples.shuffle(&mut rng);
            seeds.shuffle(&mut rng);
            write(d.path(), "triples_1", &(triples.join("\n") + "\n"));
            write(d.path(), "seeds_train", &(seeds.join("\n") + "\n"));
            let b = load_kg_pair(d.path(), &PipelineConfig::default()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
