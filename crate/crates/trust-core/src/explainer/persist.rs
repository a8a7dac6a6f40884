//! Binary persistence for [`TrustCore`].
//!
//! Layout: an 8-byte magic, the format version, the payload length, a
//! SHA-256 digest of the payload, then the payload itself. All integers
//! are little-endian and floats are raw IEEE-754 bits, so a round trip
//! reproduces every stored value bit-exactly. Loading verifies magic,
//! version, digest, and structural invariants before handing the core
//! back.

use super::{BuildMeta, TrustCore};
use crate::data::Schema;
use crate::famd::{AssocKind, ColumnStats, FactorModel, RelationMatrix};
use crate::mmg::{GaussianComponent, MmgDensity};
use crate::modesearch::{ModeAssignment, SearchZone};
use crate::reps::{ImportanceRanking, RepresentativeSet};
use nalgebra::DMatrix;
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 8] = b"TRUSTCOR";

/// Bump on any layout change; older and newer files are both rejected.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("not a core file (bad magic)")]
    BadMagic,
    #[error("core file is format version {found}, this build reads {supported}")]
    Version { found: u32, supported: u32 },
    #[error("checksum mismatch: file is corrupted or was modified")]
    ChecksumMismatch,
    #[error("file ends mid-field")]
    Truncated,
    #[error("malformed core file: {0}")]
    Malformed(String),
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn bool(&mut self, v: bool) {
        self.u8(v as u8);
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }

    fn f64_slice(&mut self, values: &[f64]) {
        self.usize(values.len());
        for &v in values {
            self.f64(v);
        }
    }

    fn usize_slice(&mut self, values: &[usize]) {
        self.usize(values.len());
        for &v in values {
            self.usize(v);
        }
    }

    fn opt_str(&mut self, s: &Option<String>) {
        match s {
            Some(s) => {
                self.bool(true);
                self.str(s);
            }
            None => self.bool(false),
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, at: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], PersistError> {
        if self.at + n > self.buf.len() {
            return Err(PersistError::Truncated);
        }
        let slice = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, PersistError> {
        Ok(self.take(1)?[0])
    }

    fn bool(&mut self) -> Result<bool, PersistError> {
        Ok(self.u8()? != 0)
    }

    fn u64(&mut self) -> Result<u64, PersistError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize, PersistError> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| PersistError::Malformed(format!("length {v} too large")))
    }

    /// Length check against the remaining bytes so corrupted counts cannot
    /// trigger huge allocations.
    fn len(&mut self, item_bytes: usize) -> Result<usize, PersistError> {
        let n = self.usize()?;
        if n.saturating_mul(item_bytes.max(1)) > self.buf.len() - self.at {
            return Err(PersistError::Truncated);
        }
        Ok(n)
    }

    fn f64(&mut self) -> Result<f64, PersistError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<String, PersistError> {
        let n = self.len(1)?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| PersistError::Malformed("non-utf8 string".into()))
    }

    fn f64_vec(&mut self) -> Result<Vec<f64>, PersistError> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    fn usize_vec(&mut self) -> Result<Vec<usize>, PersistError> {
        let n = self.len(8)?;
        (0..n).map(|_| self.usize()).collect()
    }

    fn opt_str(&mut self) -> Result<Option<String>, PersistError> {
        Ok(if self.bool()? {
            Some(self.str()?)
        } else {
            None
        })
    }

    fn done(&self) -> bool {
        self.at == self.buf.len()
    }
}

fn write_schema(w: &mut Writer, schema: &Schema) {
    w.usize(schema.columns.len());
    for col in &schema.columns {
        w.str(&col.name);
        w.u8(match col.kind {
            crate::data::FeatureKind::Quantitative => 0,
            crate::data::FeatureKind::Qualitative => 1,
        });
    }
    w.opt_str(&schema.label_column);
    match &schema.label_map {
        Some(map) => {
            w.bool(true);
            w.usize(map.len());
            for (token, &class) in map {
                w.str(token);
                w.usize(class);
            }
        }
        None => w.bool(false),
    }
    match schema.classes {
        Some(c) => {
            w.bool(true);
            w.usize(c);
        }
        None => w.bool(false),
    }
    match &schema.headerless_order {
        Some(order) => {
            w.bool(true);
            w.usize(order.len());
            for name in order {
                w.str(name);
            }
        }
        None => w.bool(false),
    }
}

fn read_schema(r: &mut Reader) -> Result<Schema, PersistError> {
    let n = r.len(2)?;
    let mut columns = Vec::with_capacity(n);
    for _ in 0..n {
        let name = r.str()?;
        let kind = match r.u8()? {
            0 => crate::data::FeatureKind::Quantitative,
            1 => crate::data::FeatureKind::Qualitative,
            other => return Err(PersistError::Malformed(format!("column kind {other}"))),
        };
        columns.push(crate::data::ColumnSpec { name, kind });
    }
    let label_column = r.opt_str()?;
    let label_map = if r.bool()? {
        let n = r.len(9)?;
        let mut map = std::collections::BTreeMap::new();
        for _ in 0..n {
            let token = r.str()?;
            let class = r.usize()?;
            map.insert(token, class);
        }
        Some(map)
    } else {
        None
    };
    let classes = if r.bool()? { Some(r.usize()?) } else { None };
    let headerless_order = if r.bool()? {
        let n = r.len(1)?;
        Some((0..n).map(|_| r.str()).collect::<Result<_, _>>()?)
    } else {
        None
    };
    Ok(Schema {
        columns,
        label_column,
        label_map,
        classes,
        headerless_order,
    })
}

fn write_model(w: &mut Writer, model: &FactorModel) {
    w.usize(model.class);
    w.usize(model.column_stats.len());
    for stats in &model.column_stats {
        match stats {
            ColumnStats::Quantitative { mean, std } => {
                w.u8(0);
                w.f64(*mean);
                w.f64(*std);
            }
            ColumnStats::Qualitative {
                levels,
                proportions,
                scale,
            } => {
                w.u8(1);
                w.usize(levels.len());
                for level in levels {
                    w.str(level);
                }
                w.f64_slice(proportions);
                w.f64(*scale);
            }
        }
    }
    w.usize(model.loadings.nrows());
    w.usize(model.loadings.ncols());
    w.f64_slice(model.loadings.as_slice());
    w.f64_slice(&model.eigenvalues);
    w.f64_slice(&model.score_offsets);
    w.f64(model.total_inertia);
    w.usize(model.relation.size());
    w.f64_slice(model.relation.values());
    for &kind in model.relation.kinds() {
        w.u8(match kind {
            AssocKind::PearsonSq => 0,
            AssocKind::ChiSq => 1,
            AssocKind::CorrRatioSq => 2,
        });
    }
}

fn read_model(r: &mut Reader) -> Result<FactorModel, PersistError> {
    let class = r.usize()?;
    let n_stats = r.len(2)?;
    let mut column_stats = Vec::with_capacity(n_stats);
    for _ in 0..n_stats {
        column_stats.push(match r.u8()? {
            0 => ColumnStats::Quantitative {
                mean: r.f64()?,
                std: r.f64()?,
            },
            1 => {
                let n = r.len(1)?;
                let levels = (0..n).map(|_| r.str()).collect::<Result<_, _>>()?;
                let proportions = r.f64_vec()?;
                let scale = r.f64()?;
                ColumnStats::Qualitative {
                    levels,
                    proportions,
                    scale,
                }
            }
            other => return Err(PersistError::Malformed(format!("stats tag {other}"))),
        });
    }
    let nrows = r.usize()?;
    let ncols = r.usize()?;
    let data = r.f64_vec()?;
    if data.len() != nrows * ncols {
        return Err(PersistError::Malformed("loading matrix size".into()));
    }
    let loadings = DMatrix::from_column_slice(nrows, ncols, &data);
    let eigenvalues = r.f64_vec()?;
    let score_offsets = r.f64_vec()?;
    let total_inertia = r.f64()?;
    let k = r.usize()?;
    let values = r.f64_vec()?;
    if values.len() != k * k {
        return Err(PersistError::Malformed("relation matrix size".into()));
    }
    let mut kinds = Vec::with_capacity(k * k);
    for _ in 0..k * k {
        kinds.push(match r.u8()? {
            0 => AssocKind::PearsonSq,
            1 => AssocKind::ChiSq,
            2 => AssocKind::CorrRatioSq,
            other => return Err(PersistError::Malformed(format!("assoc kind {other}"))),
        });
    }
    Ok(FactorModel {
        class,
        column_stats,
        loadings,
        eigenvalues,
        score_offsets,
        total_inertia,
        relation: RelationMatrix::from_raw(k, values, kinds),
    })
}

fn write_density(w: &mut Writer, density: &MmgDensity) {
    w.usize(density.rep_index);
    w.usize(density.class);
    w.bool(density.clamped);
    w.usize(density.components.len());
    for c in &density.components {
        w.f64(c.weight);
        w.f64(c.mean);
        w.f64(c.std);
        w.f64(c.alpha);
    }
}

fn read_density(r: &mut Reader) -> Result<MmgDensity, PersistError> {
    let rep_index = r.usize()?;
    let class = r.usize()?;
    let clamped = r.bool()?;
    let n = r.len(32)?;
    let mut components = Vec::with_capacity(n);
    for _ in 0..n {
        let weight = r.f64()?;
        let mean = r.f64()?;
        let std = r.f64()?;
        let alpha = r.f64()?;
        let rebuilt = GaussianComponent::new(weight, mean, std);
        if (rebuilt.alpha - alpha).abs() > 1e-12 {
            return Err(PersistError::Malformed(
                "component constant disagrees with its parameters".into(),
            ));
        }
        components.push(GaussianComponent {
            weight,
            mean,
            std,
            alpha,
        });
    }
    if components.is_empty() {
        return Err(PersistError::Malformed("density with no components".into()));
    }
    Ok(MmgDensity {
        components,
        rep_index,
        class,
        clamped,
    })
}

fn encode(core: &TrustCore) -> Vec<u8> {
    let mut w = Writer::new();
    w.usize(core.class_count);
    write_schema(&mut w, &core.schema);

    w.usize(core.factor_models.len());
    for model in &core.factor_models {
        write_model(&mut w, model);
    }

    w.usize_slice(&core.reps.indices);
    w.f64_slice(&core.reps.raw_weights);
    w.f64_slice(&core.reps.normalized_weights);
    w.usize(core.reps.ranking.entries.len());
    for &(index, weight) in &core.reps.ranking.entries {
        w.usize(index);
        w.f64(weight);
    }

    w.usize(core.densities.len());
    for row in &core.densities {
        w.usize(row.len());
        for density in row {
            write_density(&mut w, density);
        }
    }

    w.usize(core.modes.len());
    for assignment in &core.modes {
        w.usize_slice(&assignment.modes);
        w.f64(assignment.score);
        w.usize(assignment.evaluations);
        w.bool(assignment.insufficient_seen);
    }

    w.u64(core.meta.seed);
    w.usize(core.meta.bins);
    w.usize_slice(&core.meta.zone.lo);
    w.usize_slice(&core.meta.zone.hi);
    w.usize(core.meta.zone.subzone_edge);
    w.bool(core.meta.fast_search);
    w.u64(core.meta.built_at_unix);
    w.buf
}

fn decode(payload: &[u8]) -> Result<TrustCore, PersistError> {
    let mut r = Reader::new(payload);
    let class_count = r.usize()?;
    let schema = read_schema(&mut r)?;

    let n_models = r.len(8)?;
    let factor_models = (0..n_models)
        .map(|_| read_model(&mut r))
        .collect::<Result<Vec<_>, _>>()?;

    let indices = r.usize_vec()?;
    let raw_weights = r.f64_vec()?;
    let normalized_weights = r.f64_vec()?;
    let n_entries = r.len(16)?;
    let entries = (0..n_entries)
        .map(|_| Ok((r.usize()?, r.f64()?)))
        .collect::<Result<Vec<_>, PersistError>>()?;
    let reps = RepresentativeSet {
        indices,
        raw_weights,
        normalized_weights,
        ranking: ImportanceRanking { entries },
    };

    let k = r.len(8)?;
    let mut densities = Vec::with_capacity(k);
    for _ in 0..k {
        let row_len = r.len(8)?;
        let row = (0..row_len)
            .map(|_| read_density(&mut r))
            .collect::<Result<Vec<_>, _>>()?;
        densities.push(row);
    }

    let n_modes = r.len(8)?;
    let mut modes = Vec::with_capacity(n_modes);
    for _ in 0..n_modes {
        modes.push(ModeAssignment {
            modes: r.usize_vec()?,
            score: r.f64()?,
            evaluations: r.usize()?,
            insufficient_seen: r.bool()?,
        });
    }

    let meta = BuildMeta {
        seed: r.u64()?,
        bins: r.usize()?,
        zone: SearchZone {
            lo: r.usize_vec()?,
            hi: r.usize_vec()?,
            subzone_edge: r.usize()?,
        },
        fast_search: r.bool()?,
        built_at_unix: r.u64()?,
    };
    if !r.done() {
        return Err(PersistError::Malformed(
            "trailing bytes after payload".into(),
        ));
    }

    let core = TrustCore {
        schema,
        class_count,
        factor_models,
        reps,
        densities,
        modes,
        meta,
    };
    validate(&core)?;
    Ok(core)
}

/// Structural sanity: the density grid is complete and weights are
/// normalized. Anything else means the file wasn't produced by
/// [`save_core`] on a valid core.
fn validate(core: &TrustCore) -> Result<(), PersistError> {
    if core.class_count < 2 {
        return Err(PersistError::Malformed("fewer than two classes".into()));
    }
    if core.factor_models.len() != core.class_count {
        return Err(PersistError::Malformed("factor model count".into()));
    }
    let k = core.reps.k();
    if core.densities.len() != k || core.modes.len() != k {
        return Err(PersistError::Malformed("density grid height".into()));
    }
    for row in &core.densities {
        if row.len() != core.class_count {
            return Err(PersistError::Malformed("density grid width".into()));
        }
        for density in row {
            let weight_sum: f64 = density.components.iter().map(|c| c.weight).sum();
            if (weight_sum - 1.0).abs() > 1e-6 {
                return Err(PersistError::Malformed(
                    "component weights not normalized".into(),
                ));
            }
        }
    }
    let weight_sum: f64 = core.reps.normalized_weights.iter().sum();
    if (weight_sum - 1.0).abs() > 1e-6 {
        return Err(PersistError::Malformed(
            "representative weights not normalized".into(),
        ));
    }
    Ok(())
}

/// Writes the core to `path` (container header + checksummed payload).
pub fn save_core(core: &TrustCore, path: &Path) -> Result<(), PersistError> {
    let payload = encode(core);
    let digest = Sha256::digest(&payload);
    let mut bytes = Vec::with_capacity(8 + 4 + 8 + 32 + payload.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&digest);
    bytes.extend_from_slice(&payload);
    std::fs::write(path, bytes).map_err(|source| PersistError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a core produced by [`save_core`], verifying magic, version,
/// checksum, and structure.
pub fn load_core(path: &Path) -> Result<TrustCore, PersistError> {
    let bytes = std::fs::read(path).map_err(|source| PersistError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.len() < 8 + 4 + 8 + 32 {
        return Err(PersistError::Truncated);
    }
    if &bytes[..8] != MAGIC {
        return Err(PersistError::BadMagic);
    }
    let found = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if found != FORMAT_VERSION {
        return Err(PersistError::Version {
            found,
            supported: FORMAT_VERSION,
        });
    }
    let payload_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let header_len = 8 + 4 + 8 + 32;
    if bytes.len() != header_len + payload_len {
        return Err(PersistError::Truncated);
    }
    let stored_digest = &bytes[20..52];
    let payload = &bytes[header_len..];
    let digest = Sha256::digest(payload);
    if digest.as_slice() != stored_digest {
        return Err(PersistError::ChecksumMismatch);
    }
    decode(payload)
}
