//! Binary artifact formats, hashing and image export.
//!
//! All three binary formats share one layout: a four-byte magic, a `u32`
//! version, fixed-size header fields, raw little-endian payload, and a
//! trailing `u32`-length-prefixed JSON block. The header alone fixes the
//! payload size, so a short file is reported as truncated before any
//! payload is read.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use reoi_core::frame::{Frame, Mask, CHANNELS};
use reoi_core::sim::Action;
use reoi_core::trustregion::{Standardization, TrustRegion};
use reoi_core::wm::{Geometry, ResidualStats, Trajectory, TrajectoryMeta, WorldModel, ACTION_DIM, HISTORY, LIFTS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const EPISODE_MAGIC: &[u8; 4] = b"RWMD";
pub const MODEL_MAGIC: &[u8; 4] = b"RWMM";
pub const REGION_MAGIC: &[u8; 4] = b"RWTR";
pub const FORMAT_VERSION: u32 = 1;
pub const EPISODE_EXT: &str = "rwmd";

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("{0} trailing bytes after payload")]
    Trailing(usize),
    #[error("inconsistent header: {0}")]
    Header(String),
    #[error("metadata: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io { path: path.to_path_buf(), source }
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(magic: &[u8; 4]) -> Self {
        let mut w = Self { buf: Vec::new() };
        w.buf.extend_from_slice(magic);
        w.u32(FORMAT_VERSION);
        w
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f32s(&mut self, vs: &[f32]) {
        self.buf.reserve(vs.len() * 4);
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.f64(*v);
        }
    }

    fn json<T: Serialize>(&mut self, v: &T) -> Result<(), FormatError> {
        let bytes = serde_json::to_vec(v)?;
        self.u32(bytes.len() as u32);
        self.buf.extend_from_slice(&bytes);
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn open(buf: &'a [u8], magic: &[u8; 4]) -> Result<Self, FormatError> {
        let mut r = Self { buf, pos: 0 };
        let head = r.take(4)?;
        if head != magic {
            let mut found = [0u8; 4];
            found.copy_from_slice(head);
            return Err(FormatError::BadMagic { expected: *magic, found });
        }
        let v = r.u32()?;
        if v != FORMAT_VERSION {
            return Err(FormatError::Version { found: v, expected: FORMAT_VERSION });
        }
        Ok(r)
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    /// Fails early when the header promises more payload than the file holds
    /// (the trailing JSON length prefix included).
    fn expect(&self, payload: usize) -> Result<(), FormatError> {
        let needed = payload + 4;
        if self.remaining() < needed {
            return Err(FormatError::Truncated { needed: self.pos + needed, available: self.buf.len() });
        }
        Ok(())
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.remaining() < n {
            return Err(FormatError::Truncated { needed: self.pos + n, available: self.buf.len() });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, FormatError> {
        let bytes = self.take(n * 4)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        let bytes = self.take(n * 8)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn json<T: for<'de> Deserialize<'de>>(&mut self) -> Result<T, FormatError> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        let v = serde_json::from_slice(bytes)?;
        if self.remaining() != 0 {
            return Err(FormatError::Trailing(self.remaining()));
        }
        Ok(v)
    }
}

fn dim(v: u32) -> usize {
    v as usize
}

pub fn encode_episode(traj: &Trajectory) -> Result<Vec<u8>, FormatError> {
    let f0 = traj.frames.first().ok_or_else(|| FormatError::Header("episode has no frames".into()))?;
    let (h, w) = f0.shape();
    if traj.frames.len() != traj.actions.len() + 1 {
        return Err(FormatError::Header("frame count must be action count + 1".into()));
    }
    let mut out = Writer::new(EPISODE_MAGIC);
    for v in [h, w, CHANNELS, traj.actions.len(), ACTION_DIM] {
        out.u32(v as u32);
    }
    for f in &traj.frames {
        if f.shape() != (h, w) {
            return Err(FormatError::Header("frames differ in shape".into()));
        }
        out.f32s(f.data());
    }
    for a in &traj.actions {
        out.f32s(&a.as_array());
    }
    out.json(&traj.metadata)?;
    Ok(out.buf)
}

pub fn decode_episode(bytes: &[u8]) -> Result<Trajectory, FormatError> {
    let mut r = Reader::open(bytes, EPISODE_MAGIC)?;
    let (h, w, c, t, a) = (dim(r.u32()?), dim(r.u32()?), dim(r.u32()?), dim(r.u32()?), dim(r.u32()?));
    if c != CHANNELS || a != ACTION_DIM {
        return Err(FormatError::Header(format!("channels {c}, action dim {a}")));
    }
    let frame_len = h * w * c;
    r.expect(4 * ((t + 1) * frame_len + t * a))?;
    let mut frames = Vec::with_capacity(t + 1);
    for _ in 0..=t {
        frames.push(Frame::from_raw(h, w, r.f32s(frame_len)?).unwrap());
    }
    let raw = r.f32s(t * a)?;
    let actions = raw.chunks_exact(a).map(|v| Action { dx: v[0], dy: v[1], grip: v[2] }).collect();
    let metadata: TrajectoryMeta = r.json()?;
    Ok(Trajectory { frames, actions, metadata })
}

pub fn save_episode(path: &Path, traj: &Trajectory) -> Result<(), FormatError> {
    write_atomic(path, &encode_episode(traj)?)
}

pub fn load_episode(path: &Path) -> Result<Trajectory, FormatError> {
    decode_episode(&fs::read(path).map_err(io_err(path))?)
}

/// Provenance stored with a model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub dataset_hash: String,
    pub episodes: usize,
    pub transitions: usize,
    pub lifts: usize,
}

pub fn encode_model(model: &WorldModel, manifest: &ModelManifest) -> Result<Vec<u8>, FormatError> {
    let g = model.geometry;
    let mut out = Writer::new(MODEL_MAGIC);
    for v in [g.latent_dim(), HISTORY, ACTION_DIM, g.height, g.width, g.channels, g.patch, LIFTS] {
        out.u32(v as u32);
    }
    out.f64(model.ridge_lambda);
    let r = &model.residuals;
    out.f64s(&[r.dyn_mean, r.dyn_max, r.dec_mean, r.dec_max]);
    out.f32s(&model.dyn_w);
    out.f32s(&model.dec_w);
    out.json(manifest)?;
    Ok(out.buf)
}

pub fn decode_model(bytes: &[u8]) -> Result<(WorldModel, ModelManifest), FormatError> {
    let mut r = Reader::open(bytes, MODEL_MAGIC)?;
    let d = dim(r.u32()?);
    let (hist, adim) = (dim(r.u32()?), dim(r.u32()?));
    let geometry = Geometry { height: dim(r.u32()?), width: dim(r.u32()?), channels: dim(r.u32()?), patch: dim(r.u32()?) };
    let lifts = dim(r.u32()?);
    if hist != HISTORY || adim != ACTION_DIM || lifts != LIFTS {
        return Err(FormatError::Header(format!("history {hist}, action dim {adim}, lifts {lifts}")));
    }
    if geometry.patch == 0 || geometry.latent_dim() != d || geometry.channels != CHANNELS {
        return Err(FormatError::Header(format!("latent size {d} does not match geometry {geometry:?}")));
    }
    let dyn_len = d * geometry.dyn_inputs();
    let dec_len = geometry.pixels() * d;
    r.expect(8 * 5 + 4 * (dyn_len + dec_len))?;
    let ridge_lambda = r.f64()?;
    let s = r.f64s(4)?;
    let residuals = ResidualStats { dyn_mean: s[0], dyn_max: s[1], dec_mean: s[2], dec_max: s[3] };
    let dyn_w = r.f32s(dyn_len)?;
    let dec_w = r.f32s(dec_len)?;
    let manifest = r.json()?;
    Ok((WorldModel { geometry, dyn_w, dec_w, ridge_lambda, residuals }, manifest))
}

pub fn save_model(path: &Path, model: &WorldModel, manifest: &ModelManifest) -> Result<(), FormatError> {
    write_atomic(path, &encode_model(model, manifest)?)
}

pub fn load_model(path: &Path) -> Result<(WorldModel, ModelManifest), FormatError> {
    decode_model(&fs::read(path).map_err(io_err(path))?)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionManifest {
    pub model_hash: String,
    pub dataset_hash: String,
    pub error_threshold: f64,
    /// Dataset indices of the ball centres.
    pub members: Vec<usize>,
}

/// Centres and standardisation vectors are stored as `f64` so a loaded
/// region answers queries exactly like the one that was saved.
pub fn encode_region(region: &TrustRegion, manifest: &RegionManifest) -> Result<Vec<u8>, FormatError> {
    let mut out = Writer::new(REGION_MAGIC);
    out.u32(region.dim() as u32);
    out.u32(region.centers.len() as u32);
    out.f64s(&[region.radius, region.lipschitz, region.max_error, region.dispersion]);
    out.f64s(&region.standardization.mean);
    out.f64s(&region.standardization.std);
    for c in &region.centers {
        out.f64s(c);
    }
    out.json(manifest)?;
    Ok(out.buf)
}

pub fn decode_region(bytes: &[u8]) -> Result<(TrustRegion, RegionManifest), FormatError> {
    let mut r = Reader::open(bytes, REGION_MAGIC)?;
    let d = dim(r.u32()?);
    let n = dim(r.u32()?);
    r.expect(8 * (4 + 2 * d + n * d))?;
    let s = r.f64s(4)?;
    let mean = r.f64s(d)?;
    let std = r.f64s(d)?;
    let mut centers = Vec::with_capacity(n);
    for _ in 0..n {
        centers.push(r.f64s(d)?);
    }
    let manifest: RegionManifest = r.json()?;
    if manifest.members.len() != n {
        return Err(FormatError::Header(format!("{} members for {n} centres", manifest.members.len())));
    }
    let region = TrustRegion {
        standardization: Standardization { mean, std },
        centers,
        members: manifest.members.clone(),
        radius: s[0],
        lipschitz: s[1],
        max_error: s[2],
        dispersion: s[3],
        error_threshold: manifest.error_threshold,
    };
    Ok((region, manifest))
}

pub fn save_region(path: &Path, region: &TrustRegion, manifest: &RegionManifest) -> Result<(), FormatError> {
    write_atomic(path, &encode_region(region, manifest)?)
}

pub fn load_region(path: &Path) -> Result<(TrustRegion, RegionManifest), FormatError> {
    decode_region(&fs::read(path).map_err(io_err(path))?)
}

/// Writes through a sibling temporary file so readers never see a partial
/// artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String, FormatError> {
    Ok(sha256_hex(&fs::read(path).map_err(io_err(path))?))
}

/// Episode files of a dataset directory, sorted by file name.
pub fn episode_paths(dir: &Path) -> Result<Vec<PathBuf>, FormatError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let p = entry.map_err(io_err(dir))?.path();
        if p.extension().is_some_and(|e| e == EPISODE_EXT) && p.is_file() {
            out.push(p);
        }
    }
    out.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(out)
}

/// SHA-256 over every episode file in name order. Each file contributes its
/// name, its length and its bytes, so renames change the digest.
pub fn hash_dataset(dir: &Path) -> Result<String, FormatError> {
    let mut h = Sha256::new();
    for p in episode_paths(dir)? {
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        let bytes = fs::read(&p).map_err(io_err(&p))?;
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn load_dataset(dir: &Path) -> Result<Vec<Trajectory>, FormatError> {
    episode_paths(dir)?.iter().map(|p| load_episode(p)).collect()
}

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary portable pixmap (P6).
pub fn ppm(frame: &Frame) -> Vec<u8> {
    let (h, w) = frame.shape();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend(frame.data().iter().map(|v| to_byte(*v)));
    out
}

/// Frames side by side with a one-pixel white gutter.
pub fn filmstrip(frames: &[Frame]) -> Option<Frame> {
    let (h, w) = frames.first()?.shape();
    let total = frames.len() * (w + 1) - 1;
    let mut out = Frame::filled(h, total, [1.0, 1.0, 1.0]);
    for (k, f) in frames.iter().enumerate() {
        for r in 0..h {
            for c in 0..w {
                out.set(r, k * (w + 1) + c, f.get(r, c));
            }
        }
    }
    Some(out)
}

/// Binary portable bitmap (P4); set pixels are black.
pub fn pbm(mask: &Mask) -> Vec<u8> {
    let (h, w) = mask.shape();
    let mut out = format!("P4\n{w} {h}\n").into_bytes();
    for r in 0..h {
        let mut row = vec![0u8; w.div_ceil(8)];
        for c in 0..w {
            if mask.get(r, c) {
                row[c / 8] |= 0x80 >> (c % 8);
            }
        }
        out.extend_from_slice(&row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use reoi_core::data::{generate_episode, EpisodeSpec, PolicyMix};

    fn episode() -> Trajectory {
        let mut spec = EpisodeSpec::new(3, 1, 1, PolicyMix::Scripted);
        spec.horizon = 4;
        generate_episode(&spec).unwrap()
    }

    #[test]
    fn episode_round_trip_is_byte_exact() {
        let t = episode();
        let bytes = encode_episode(&t).unwrap();
        let back = decode_episode(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(encode_episode(&back).unwrap(), bytes);
        assert_eq!(bytes.len(), 4 + 4 * 6 + 4 * (5 * 64 * 64 * 3 + 4 * 3) + 4 + serde_json::to_vec(&t.metadata).unwrap().len());
    }

    #[test]
    fn header_errors_are_distinct() {
        let bytes = encode_episode(&episode()).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_episode(&bad), Err(FormatError::BadMagic { .. })));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(decode_episode(&v2), Err(FormatError::Version { found: 2, .. })));
        let mut long = bytes.clone();
        long[20..24].copy_from_slice(&9u32.to_le_bytes());
        assert!(matches!(decode_episode(&long), Err(FormatError::Truncated { .. })));
        assert!(matches!(decode_episode(&bytes[..bytes.len() - 3]), Err(FormatError::Truncated { .. })));
        assert!(matches!(decode_model(&bytes), Err(FormatError::BadMagic { .. })));
    }

    #[test]
    fn pixmap_header_and_size() {
        let f = Frame::filled(2, 3, [1.0, 0.0, 0.5]);
        let p = ppm(&f);
        assert!(p.starts_with(b"P6\n3 2\n255\n"));
        assert_eq!(&p[p.len() - 3..], &[255, 0, 128]);
        let mut m = Mask::new(2, 9);
        m.set(0, 0, true);
        m.set(1, 8, true);
        assert_eq!(&pbm(&m)[7..], &[0x80, 0, 0, 0x80]);
        assert_eq!(filmstrip(&[f.clone(), f]).unwrap().shape(), (2, 7));
    }
}
