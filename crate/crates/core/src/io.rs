//! File formats: volumes, feature records, fitted models, meshes, loss
//! history, image layers and flat configuration files.
//!
//! Binary files are little-endian and start with a 4-byte magic and a u16
//! format version.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::features::{Bounds, FeatureSet, NormalSample, Path, PathKind, WindingLink};
use crate::fit::{FittedModel, HistoryRow};
use crate::geometry::{SpiralParams, Vec3, Winding};
use crate::losses::LossBreakdown;
use crate::mesh::{QuadMesh, UnrolledStack};
use crate::transform::{AffineKeypoint, ComposedTransform, FlowField, GapField, PerSliceAffine, VectorGrid};
use crate::trimesh::TriMesh;
use crate::volume::Volume;

pub const VOLUME_MAGIC: &[u8; 4] = b"VOLP";
pub const VOLUME_VERSION: u16 = 1;
pub const MODEL_MAGIC: &[u8; 4] = b"SPFM";
pub const MODEL_VERSION: u16 = 1;

pub const PATHS_FILE: &str = "paths.jsonl";
pub const NORMALS_FILE: &str = "normals.jsonl";
pub const LINKS_FILE: &str = "links.jsonl";
pub const BOUNDS_FILE: &str = "bounds.json";

pub fn read_bytes(path: &FsPath) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &FsPath, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_text(path: &FsPath) -> Result<String> {
    let bytes = read_bytes(path)?;
    String::from_utf8(bytes).map_err(|e| Error::format(path, e.utf8_error().valid_up_to() as u64, "UTF-8 text"))
}

/// Bounds-checked little-endian cursor that reports failures by offset.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    file: &'a FsPath,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8], file: &'a FsPath) -> Self {
        Cursor { bytes, pos: 0, file }
    }

    fn fail<T>(&self, expected: impl Into<String>) -> Result<T> {
        Err(Error::format(self.file, self.pos as u64, expected))
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return self.fail(format!("{what} ({n} bytes)"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn header(&mut self, magic: &[u8; 4], version: u16) -> Result<()> {
        if self.take(4, "magic")? != magic {
            self.pos = 0;
            return self.fail(format!("magic {:?}", String::from_utf8_lossy(magic)));
        }
        let at = self.pos;
        let v = self.u16("format version")?;
        if v != version {
            self.pos = at;
            return self.fail(format!("format version {version}, found {v}"));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return self.fail("end of file");
        }
        Ok(())
    }
}

#[derive(Default)]
struct Sink(Vec<u8>);

impl Sink {
    fn raw(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.raw(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.raw(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.raw(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.raw(&v.to_le_bytes());
    }
}

fn checked_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Domain(format!("{what} {v} does not fit in u32")))
}

// ---------------------------------------------------------------- volume

pub fn encode_volume(v: &Volume) -> Result<Vec<u8>> {
    v.validate()?;
    let mut s = Sink::default();
    s.raw(VOLUME_MAGIC);
    s.u16(VOLUME_VERSION);
    for d in v.dims {
        s.u32(checked_u32(d, "volume dimension")?);
    }
    for h in v.spacing {
        s.f32(h as f32);
    }
    s.u8(u8::try_from(v.channels.len()).map_err(|_| Error::Domain("too many channels".into()))?);
    for c in &v.channels {
        s.raw(c);
    }
    Ok(s.0)
}

pub fn decode_volume(bytes: &[u8], file: &FsPath) -> Result<Volume> {
    let mut c = Cursor::new(bytes, file);
    c.header(VOLUME_MAGIC, VOLUME_VERSION)?;
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = c.u32("u32 dimension")? as usize;
        if *d == 0 {
            c.pos -= 4;
            return c.fail("positive dimension");
        }
    }
    let mut spacing = [0.0; 3];
    for h in &mut spacing {
        let v = c.f32("f32 voxel spacing")?;
        if !(v.is_finite() && v > 0.0) {
            c.pos -= 4;
            return c.fail("positive voxel spacing");
        }
        *h = v as f64;
    }
    let n = c.u8("u8 channel count")? as usize;
    let voxels = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or_else(|| Error::format(file, 6, "dimensions whose product fits in memory"))?;
    let mut channels = Vec::with_capacity(n);
    for k in 0..n {
        channels.push(c.take(voxels, &format!("channel {k} data"))?.to_vec());
    }
    c.finish()?;
    Ok(Volume { dims, spacing, channels })
}

pub fn write_volume(path: &FsPath, v: &Volume) -> Result<()> {
    write_bytes(path, &encode_volume(v)?)
}

pub fn read_volume(path: &FsPath) -> Result<Volume> {
    decode_volume(&read_bytes(path)?, path)
}

// ---------------------------------------------------------------- JSONL records

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathRecord {
    id: u32,
    kind: PathKind,
    pts: Vec<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NormalRecord {
    p: [f64; 3],
    n: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkRecord {
    from: u32,
    to: u32,
    offset: i32,
    pairs: Vec<[[f64; 3]; 2]>,
    votes: u32,
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn vec3(a: &[f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn encode_jsonl<T: Serialize>(records: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, &r).expect("records serialize");
        out.push(b'\n');
    }
    out
}

fn decode_jsonl<T: for<'de> Deserialize<'de>>(text: &str, file: &FsPath, expected: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    let mut offset = 0usize;
    for line in text.split_inclusive('\n') {
        let body = line.trim_end_matches(['\n', '\r']);
        if !body.trim().is_empty() {
            let rec = serde_json::from_str(body)
                .map_err(|e| Error::format(file, (offset + e.column().saturating_sub(1)) as u64, format!("{expected} ({e})")))?;
            out.push(rec);
        }
        offset += line.len();
    }
    Ok(out)
}

pub fn encode_paths(paths: &[Path]) -> Vec<u8> {
    encode_jsonl(paths.iter().map(|p| PathRecord {
        id: p.id,
        kind: p.kind,
        pts: p.points.iter().map(arr).collect(),
    }))
}

pub fn decode_paths(text: &str, file: &FsPath) -> Result<Vec<Path>> {
    let recs: Vec<PathRecord> = decode_jsonl(text, file, "path record {\"id\", \"kind\", \"pts\"}")?;
    Ok(recs
        .into_iter()
        .map(|r| Path {
            id: r.id,
            kind: r.kind,
            points: r.pts.iter().map(vec3).collect(),
        })
        .collect())
}

pub fn encode_normals(normals: &[NormalSample]) -> Vec<u8> {
    encode_jsonl(normals.iter().map(|n| NormalRecord {
        p: arr(&n.position),
        n: arr(&n.normal),
    }))
}

pub fn decode_normals(text: &str, file: &FsPath) -> Result<Vec<NormalSample>> {
    let recs: Vec<NormalRecord> = decode_jsonl(text, file, "normal record {\"p\", \"n\"}")?;
    Ok(recs
        .into_iter()
        .map(|r| NormalSample {
            position: vec3(&r.p),
            normal: vec3(&r.n),
        })
        .collect())
}

pub fn encode_links(links: &[WindingLink]) -> Vec<u8> {
    encode_jsonl(links.iter().map(|l| LinkRecord {
        from: l.from,
        to: l.to,
        offset: l.offset,
        pairs: l.point_pairs.iter().map(|(a, b)| [arr(a), arr(b)]).collect(),
        votes: l.votes,
    }))
}

pub fn decode_links(text: &str, file: &FsPath) -> Result<Vec<WindingLink>> {
    let recs: Vec<LinkRecord> = decode_jsonl(text, file, "link record {\"from\", \"to\", \"offset\", \"pairs\", \"votes\"}")?;
    Ok(recs
        .into_iter()
        .map(|r| WindingLink {
            from: r.from,
            to: r.to,
            offset: r.offset,
            point_pairs: r.pairs.iter().map(|[a, b]| (vec3(a), vec3(b))).collect(),
            votes: r.votes,
        })
        .collect())
}

/// Writes paths, normals, links and (when known) bounds into `dir`.
pub fn write_features(dir: &FsPath, f: &FeatureSet) -> Result<()> {
    write_bytes(&dir.join(PATHS_FILE), &encode_paths(&f.paths))?;
    write_bytes(&dir.join(NORMALS_FILE), &encode_normals(&f.normals))?;
    write_bytes(&dir.join(LINKS_FILE), &encode_links(&f.links))?;
    if let Some(b) = &f.bounds {
        let mut text = serde_json::to_string(b).expect("bounds serialize");
        text.push('\n');
        write_bytes(&dir.join(BOUNDS_FILE), text.as_bytes())?;
    }
    Ok(())
}

/// Reads a feature directory; the normals, links and bounds files are optional.
pub fn read_features(dir: &FsPath) -> Result<FeatureSet> {
    let paths_file = dir.join(PATHS_FILE);
    let paths = decode_paths(&read_text(&paths_file)?, &paths_file)?;
    let optional = |name: &str| -> Result<Option<(PathBuf, String)>> {
        let p = dir.join(name);
        if p.exists() {
            let t = read_text(&p)?;
            Ok(Some((p, t)))
        } else {
            Ok(None)
        }
    };
    let normals = match optional(NORMALS_FILE)? {
        Some((p, t)) => decode_normals(&t, &p)?,
        None => Vec::new(),
    };
    let links = match optional(LINKS_FILE)? {
        Some((p, t)) => decode_links(&t, &p)?,
        None => Vec::new(),
    };
    let bounds = match optional(BOUNDS_FILE)? {
        Some((p, t)) => Some(
            serde_json::from_str::<Bounds>(&t)
                .map_err(|e| Error::format(&p, e.column().saturating_sub(1) as u64, "bounds {\"min\", \"max\"}"))?,
        ),
        None => None,
    };
    let ids: std::collections::HashSet<u32> = paths.iter().map(|p| p.id).collect();
    for l in &links {
        if !ids.contains(&l.from) || !ids.contains(&l.to) {
            return Err(Error::Domain(format!("link {} → {} refers to an unknown path", l.from, l.to)));
        }
    }
    Ok(FeatureSet {
        paths,
        normals,
        links,
        bounds,
    })
}

// ---------------------------------------------------------------- fitted model

/// Fields of a fitted model that are not part of the transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelMetadata {
    center_ref: [f64; 2],
    seed: u64,
    steps: usize,
    final_loss: f64,
}

fn put_grid(s: &mut Sink, g: &VectorGrid) -> Result<()> {
    for v in [g.origin, g.spacing] {
        for a in 0..3 {
            s.f64(v[a]);
        }
    }
    for d in g.dims {
        s.u32(checked_u32(d, "grid dimension")?);
    }
    for v in &g.data {
        for a in 0..3 {
            s.f32(v[a] as f32);
        }
    }
    Ok(())
}

fn get_grid(c: &mut Cursor, name: &str) -> Result<VectorGrid> {
    let mut o = [0.0; 3];
    let mut h = [0.0; 3];
    for v in o.iter_mut() {
        *v = c.f64(&format!("{name} grid origin f64"))?;
    }
    for v in h.iter_mut() {
        *v = c.f64(&format!("{name} grid spacing f64"))?;
        if !(v.is_finite() && *v > 0.0) {
            c.pos -= 8;
            return c.fail(format!("positive {name} grid spacing"));
        }
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        *d = c.u32(&format!("{name} grid dimension u32"))? as usize;
        if *d == 0 {
            c.pos -= 4;
            return c.fail(format!("positive {name} grid dimension"));
        }
    }
    let n = dims[0] * dims[1] * dims[2];
    if (c.bytes.len() - c.pos) / 12 < n {
        return c.fail(format!("{n} f32 vectors of {name} grid data"));
    }
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        let x = c.f32("f32")? as f64;
        let y = c.f32("f32")? as f64;
        let z = c.f32("f32")? as f64;
        data.push(Vec3::new(x, y, z));
    }
    Ok(VectorGrid {
        origin: vec3(&o),
        spacing: vec3(&h),
        dims,
        data,
    })
}

/// Serializes a model. Flow and gap values are stored as f32.
pub fn encode_model(m: &FittedModel) -> Result<Vec<u8>> {
    let t = &m.transform;
    let mut s = Sink::default();
    s.raw(MODEL_MAGIC);
    s.u16(MODEL_VERSION);
    let sp = &t.spiral;
    for v in [sp.rho, sp.theta_max, sp.z_min, sp.z_max, sp.spacing()] {
        s.f64(v);
    }
    s.u8(sp.direction.to_byte());
    s.u32(checked_u32(t.affine.keypoints.len(), "keypoint count")?);
    for k in &t.affine.keypoints {
        for v in k.as_array() {
            s.f64(v);
        }
    }
    put_grid(&mut s, &t.flow.coarse)?;
    put_grid(&mut s, &t.flow.fine)?;
    for d in t.gap.dims {
        s.u32(checked_u32(d, "gap dimension")?);
    }
    for v in &t.gap.values {
        s.f32(*v as f32);
    }
    s.u16(u16::try_from(t.flow.steps).map_err(|_| Error::Domain("Euler step count exceeds u16".into()))?);
    let meta = ModelMetadata {
        center_ref: m.center_ref,
        seed: m.seed,
        steps: m.steps,
        final_loss: m.final_loss,
    };
    let json = serde_json::to_vec(&meta).expect("metadata serializes");
    s.u32(checked_u32(json.len(), "metadata length")?);
    s.raw(&json);
    Ok(s.0)
}

pub fn decode_model(bytes: &[u8], file: &FsPath) -> Result<FittedModel> {
    let mut c = Cursor::new(bytes, file);
    c.header(MODEL_MAGIC, MODEL_VERSION)?;
    let at = c.pos;
    let rho = c.f64("f64 rho")?;
    let theta_max = c.f64("f64 theta_max")?;
    let z_min = c.f64("f64 z_min")?;
    let z_max = c.f64("f64 z_max")?;
    let _spacing = c.f64("f64 winding spacing")?;
    let dir_at = c.pos;
    let direction = match Winding::from_byte(c.u8("u8 direction")?) {
        Some(d) => d,
        None => {
            c.pos = dir_at;
            return c.fail("direction byte 0 or 1");
        }
    };
    let spiral = SpiralParams::new(rho, theta_max, z_min, z_max, direction).map_err(|_| {
        Error::format(file, at as u64, "valid spiral parameters (rho > 0, theta_max > 0, z_min < z_max)")
    })?;
    let n = c.u32("u32 keypoint count")? as usize;
    if n < 2 {
        c.pos -= 4;
        return c.fail("at least two affine keypoints");
    }
    if (c.bytes.len() - c.pos) / 32 < n {
        return c.fail(format!("{n} keypoints of 4 f64"));
    }
    let mut keypoints = Vec::with_capacity(n);
    for _ in 0..n {
        let mut a = [0.0; 4];
        for v in a.iter_mut() {
            *v = c.f64("f64 keypoint value")?;
        }
        keypoints.push(AffineKeypoint::from_array(a));
    }
    let coarse = get_grid(&mut c, "coarse")?;
    let fine = get_grid(&mut c, "fine")?;
    let gt = c.u32("u32 gap theta nodes")? as usize;
    let gz = c.u32("u32 gap z nodes")? as usize;
    if gt == 0 || gz == 0 {
        c.pos -= 8;
        return c.fail("positive gap lattice dimensions");
    }
    if (c.bytes.len() - c.pos) / 4 < gt * gz {
        return c.fail(format!("{} f32 gap values", gt * gz));
    }
    let mut values = Vec::with_capacity(gt * gz);
    for _ in 0..gt * gz {
        values.push(c.f32("f32 gap value")? as f64);
    }
    let steps = c.u16("u16 Euler step count")? as usize;
    if steps == 0 {
        c.pos -= 2;
        return c.fail("positive Euler step count");
    }
    let len = c.u32("u32 metadata length")? as usize;
    let meta_at = c.pos;
    let json = c.take(len, "metadata JSON")?;
    let meta: ModelMetadata = serde_json::from_slice(json)
        .map_err(|e| Error::format(file, meta_at as u64, format!("metadata JSON object ({e})")))?;
    c.finish()?;
    Ok(FittedModel {
        transform: ComposedTransform {
            spiral,
            affine: PerSliceAffine { keypoints },
            flow: FlowField { coarse, fine, steps },
            gap: GapField { dims: [gt, gz], values },
        },
        center_ref: meta.center_ref,
        seed: meta.seed,
        steps: meta.steps,
        final_loss: meta.final_loss,
        history: Vec::new(),
    })
}

pub fn write_model(path: &FsPath, m: &FittedModel) -> Result<()> {
    write_bytes(path, &encode_model(m)?)
}

pub fn read_model(path: &FsPath) -> Result<FittedModel> {
    decode_model(&read_bytes(path)?, path)
}

// ---------------------------------------------------------------- loss history

pub fn history_header() -> String {
    let mut h = String::from("step");
    for n in LossBreakdown::NAMES {
        h.push(',');
        h.push_str(n);
    }
    h.push_str(",total");
    h
}

pub fn encode_history(rows: &[HistoryRow]) -> String {
    let mut out = history_header();
    out.push('\n');
    for r in rows {
        write!(out, "{}", r.step).unwrap();
        for v in r.terms.values() {
            write!(out, ",{v}").unwrap();
        }
        writeln!(out, ",{}", r.total).unwrap();
    }
    out
}

pub fn decode_history(text: &str, file: &FsPath) -> Result<Vec<HistoryRow>> {
    let mut lines = text.split_inclusive('\n');
    let header = lines.next().unwrap_or("");
    if header.trim_end() != history_header() {
        return Err(Error::format(file, 0, format!("header `{}`", history_header())));
    }
    let mut offset = header.len();
    let mut rows = Vec::new();
    for line in lines {
        let body = line.trim_end();
        if !body.is_empty() {
            let cols: Vec<&str> = body.split(',').collect();
            let bad = || Error::format(file, offset as u64, "step followed by 9 comma-separated numbers");
            if cols.len() != 10 {
                return Err(bad());
            }
            let step = cols[0].parse().map_err(|_| bad())?;
            let mut v = [0.0; 9];
            for (k, c) in cols[1..].iter().enumerate() {
                v[k] = c.parse().map_err(|_| bad())?;
            }
            rows.push(HistoryRow {
                step,
                terms: LossBreakdown::from_values([v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]]),
                total: v[8],
            });
        }
        offset += line.len();
    }
    Ok(rows)
}

// ---------------------------------------------------------------- meshes

/// OBJ with positions, UVs and quad faces over the θ × z lattice.
pub fn encode_obj(mesh: &QuadMesh) -> String {
    let mut out = String::new();
    for p in &mesh.positions {
        writeln!(out, "v {} {} {}", p.x, p.y, p.z).unwrap();
    }
    for uv in &mesh.uv {
        writeln!(out, "vt {} {}", uv[0], uv[1]).unwrap();
    }
    let with_uv = mesh.uv.len() == mesh.positions.len();
    for q in mesh.quads() {
        out.push('f');
        for v in q {
            if with_uv {
                write!(out, " {0}/{0}", v + 1).unwrap();
            } else {
                write!(out, " {}", v + 1).unwrap();
            }
        }
        out.push('\n');
    }
    out
}

/// OBJ of a triangle mesh. Winding labels, when present, follow as one
/// `#w <label>` comment per vertex.
pub fn encode_trimesh_obj(mesh: &TriMesh) -> String {
    let mut out = String::new();
    for p in &mesh.vertices {
        writeln!(out, "v {} {} {}", p.x, p.y, p.z).unwrap();
    }
    if let Some(w) = &mesh.winding {
        for l in w {
            writeln!(out, "#w {l}").unwrap();
        }
    }
    for f in &mesh.faces {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    out
}

/// Reads positions, faces (triangles or fans of larger polygons) and
/// optional `#w` winding labels. Texture and normal indices are ignored.
pub fn decode_obj(text: &str, file: &FsPath) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut labels = Vec::new();
    let mut offset = 0usize;
    let mut raw_faces: Vec<(usize, Vec<i64>)> = Vec::new();
    for line in text.split_inclusive('\n') {
        let body = line.trim();
        let mut it = body.split_whitespace();
        let bad = |what: &str| Error::format(file, offset as u64, what.to_string());
        match it.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for v in c.iter_mut() {
                    *v = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("vertex `v x y z`"))?;
                }
                vertices.push(vec3(&c));
            }
            Some("#w") => {
                labels.push(it.next().and_then(|s| s.parse::<i32>().ok()).ok_or_else(|| bad("winding label `#w <int>`"))?);
            }
            Some("f") => {
                let idx: Option<Vec<i64>> = it.map(|t| t.split('/').next().and_then(|s| s.parse().ok())).collect();
                match idx {
                    Some(v) if v.len() >= 3 => raw_faces.push((offset, v)),
                    _ => return Err(bad("face with at least 3 vertex indices")),
                }
            }
            _ => {}
        }
        offset += line.len();
    }
    let n = vertices.len() as i64;
    for (at, idx) in raw_faces {
        let mut ids = Vec::with_capacity(idx.len());
        for i in idx {
            let k = if i < 0 { n + i } else { i - 1 };
            if k < 0 || k >= n {
                return Err(Error::format(file, at as u64, format!("vertex index within 1..={n}")));
            }
            ids.push(k as u32);
        }
        for t in 1..ids.len() - 1 {
            faces.push([ids[0], ids[t], ids[t + 1]]);
        }
    }
    let winding = if labels.is_empty() {
        None
    } else if labels.len() == vertices.len() {
        Some(labels)
    } else {
        return Err(Error::format(file, 0, format!("{} `#w` labels, one per vertex", vertices.len())));
    };
    Ok(TriMesh {
        vertices,
        faces,
        winding,
    })
}

pub fn read_obj(path: &FsPath) -> Result<TriMesh> {
    decode_obj(&read_text(path)?, path)
}

// ---------------------------------------------------------------- images

/// One layer of an unrolled stack as a 16-bit binary PGM (big-endian
/// samples), U along the width and V along the height.
pub fn encode_pgm_layer(stack: &UnrolledStack, layer: usize) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", stack.ni, stack.nj).into_bytes();
    for j in 0..stack.nj {
        for i in 0..stack.ni {
            let v = stack.get(i, j, layer).clamp(0.0, 1.0);
            let q = (v as f64 * 65535.0).round() as u16;
            out.extend_from_slice(&q.to_be_bytes());
        }
    }
    out
}

/// Parses a 16-bit PGM into (width, height, samples).
pub fn decode_pgm16(bytes: &[u8], file: &FsPath) -> Result<(usize, usize, Vec<u16>)> {
    let mut pos = 0usize;
    let mut token = |what: &str| -> Result<String> {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(file, start as u64, what.to_string()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token("magic P5")? != "P5" {
        return Err(Error::format(file, 0, "magic P5"));
    }
    let w: usize = token("width")?.parse().map_err(|_| Error::format(file, 3, "integer width"))?;
    let h: usize = token("height")?.parse().map_err(|_| Error::format(file, 3, "integer height"))?;
    let max: u32 = token("maxval")?.parse().map_err(|_| Error::format(file, 3, "integer maxval"))?;
    if max != 65535 {
        return Err(Error::format(file, 3, "maxval 65535"));
    }
    let start = pos + 1;
    if bytes.len() != start + 2 * w * h {
        return Err(Error::format(file, start as u64, format!("{} bytes of samples", 2 * w * h)));
    }
    let data = bytes[start..].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok((w, h, data))
}

// ---------------------------------------------------------------- flat config

/// Parses `key = value` lines; `#` starts a comment. Duplicate keys are an
/// error.
pub fn parse_config(text: &str, file: &FsPath) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut offset = 0usize;
    for line in text.split_inclusive('\n') {
        let body = line.split('#').next().unwrap_or("").trim();
        if !body.is_empty() {
            let Some((k, v)) = body.split_once('=') else {
                return Err(Error::format(file, offset as u64, "`key = value`"));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::format(file, offset as u64, "non-empty key"));
            }
            if out.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::format(file, offset as u64, format!("key `{k}` only once")));
            }
        }
        offset += line.len();
    }
    Ok(out)
}

pub fn read_config(path: &FsPath) -> Result<BTreeMap<String, String>> {
    parse_config(&read_text(path)?, path)
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        _ => {
            out.insert(prefix.to_string(), v.clone());
        }
    }
}

fn set_dotted(root: &mut Value, key: &str, v: Value) {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for p in &parts[..parts.len() - 1] {
        cur = cur.get_mut(*p).expect("key exists in defaults");
    }
    cur[parts[parts.len() - 1]] = v;
}

fn parse_value(default: &Value, raw: &str) -> Option<Value> {
    if raw.eq_ignore_ascii_case("none") || raw.eq_ignore_ascii_case("null") {
        return Some(Value::Null);
    }
    match default {
        Value::Bool(_) => raw.parse::<bool>().ok().map(Value::Bool),
        Value::Number(n) if n.is_u64() => raw.parse::<u64>().ok().map(Value::from),
        Value::Number(n) if n.is_i64() => raw.parse::<i64>().ok().map(Value::from),
        Value::Number(_) => raw.parse::<f64>().ok().filter(|v| v.is_finite()).map(Value::from),
        Value::String(_) => Some(Value::String(raw.to_string())),
        Value::Array(_) => serde_json::from_str(raw).ok().filter(Value::is_array),
        // unset optional: numbers first, then bare words
        _ => Some(
            serde_json::from_str::<Value>(raw)
                .ok()
                .filter(|v| v.is_number() || v.is_boolean() || v.is_array())
                .unwrap_or_else(|| Value::String(raw.to_string())),
        ),
    }
}

/// Applies `key = value` overrides to `base`. Nested fields use dotted keys
/// (`weights.normal`). Unknown keys and unparsable values are errors.
pub fn apply_overrides<T>(base: &T, overrides: &BTreeMap<String, String>) -> Result<T>
where
    T: Serialize + for<'de> Deserialize<'de>,
{
    let mut root = serde_json::to_value(base).expect("config serializes");
    let mut known = BTreeMap::new();
    flatten("", &root, &mut known);
    for (k, raw) in overrides {
        let Some(default) = known.get(k) else {
            let keys: Vec<&String> = known.keys().collect();
            return Err(Error::Config(format!(
                "unknown key `{k}` (known keys: {})",
                keys.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            )));
        };
        let v = parse_value(default, raw).ok_or_else(|| Error::Config(format!("cannot parse `{raw}` for key `{k}`")))?;
        set_dotted(&mut root, k, v);
    }
    serde_json::from_value(root).map_err(|e| Error::Config(e.to_string()))
}

/// Every leaf of `config` as sorted `key = value` lines, readable back by
/// [`parse_config`] and [`apply_overrides`].
pub fn config_snapshot<T: Serialize>(config: &T) -> String {
    let mut flat = BTreeMap::new();
    flatten("", &serde_json::to_value(config).expect("config serializes"), &mut flat);
    let mut out = String::new();
    for (k, v) in flat {
        let text = match v {
            Value::Null => "none".to_string(),
            Value::String(s) => s,
            other => other.to_string(),
        };
        writeln!(out, "{k} = {text}").unwrap();
    }
    out
}
