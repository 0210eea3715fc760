//! On-disk formats.
//!
//! Binary files share one container layout: an 8-byte magic, the length of
//! a UTF-8 JSON header as a little-endian `u64`, the header, then the
//! payload. All numbers in payloads are little-endian. Writing a value that
//! was read from a file reproduces the file byte for byte.

use std::fs;
use std::io::{Read as _, Write as _};
use std::path::{Path, PathBuf};

use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;
use flate2::Compression as Level;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::geometry::{ImageGeometry, Pose};
use crate::image::Image;
use crate::phantom::{TrackedFrame, TrackedSequence};
use crate::reslice::{dataset_stats, AugmentParams, DatasetGenerator, DatasetStats, ManeuverRanges, SyntheticSample};
use crate::volume::{Grid, Volume};
use crate::{Error, Result};

pub const VOLUME_MAGIC: &[u8; 8] = b"VIDVOL01";
pub const SEQUENCE_MAGIC: &[u8; 8] = b"VIDSEQ01";
pub const FORMAT_VERSION: u32 = 1;

/// Serialises `header` and appends `payload` behind `magic`.
pub fn encode_container<H: Serialize>(magic: &[u8; 8], header: &H, payload: &[u8]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(16 + json.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(payload);
    Ok(out)
}

/// Splits a container into its parsed header and payload bytes.
pub fn decode_container<'a, H: DeserializeOwned>(magic: &[u8; 8], bytes: &'a [u8], path: &Path) -> Result<(H, &'a [u8])> {
    if bytes.len() < 16 || &bytes[..8] != magic {
        return Err(Error::malformed(
            path,
            format!("expected magic {:?}", String::from_utf8_lossy(magic)),
        ));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let end = 16usize
        .checked_add(len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::malformed(path, "header length exceeds file size"))?;
    let header = serde_json::from_slice(&bytes[16..end])
        .map_err(|e| Error::malformed(path, format!("bad header: {e}")))?;
    Ok((header, &bytes[end..]))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read_bytes(path)?).map_err(|e| Error::malformed(path, e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementType {
    F32,
    U8,
}

/// Voxel types storable in a volume file.
pub trait Element: Copy + Send + Sync + 'static {
    const TYPE: ElementType;
    const SIZE: usize;
    fn put(self, out: &mut Vec<u8>);
    fn get(bytes: &[u8]) -> Self;
}

impl Element for f32 {
    const TYPE: ElementType = ElementType::F32;
    const SIZE: usize = 4;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get(b: &[u8]) -> Self {
        f32::from_le_bytes(b.try_into().expect("4 bytes"))
    }
}

impl Element for u8 {
    const TYPE: ElementType = ElementType::U8;
    const SIZE: usize = 1;
    fn put(self, out: &mut Vec<u8>) {
        out.push(self);
    }
    fn get(b: &[u8]) -> Self {
        b[0]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Compression {
    #[default]
    None,
    /// zlib stream at the default level.
    Deflate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub version: u32,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    /// Row-major 3×3 direction cosines.
    pub orientation: [f64; 9],
    pub element: ElementType,
    pub compression: Compression,
}

impl VolumeHeader {
    pub fn grid(&self) -> Grid {
        Grid {
            dims: self.dims,
            spacing: self.spacing,
            origin: self.origin,
            orientation: self.orientation,
        }
    }
}

pub fn encode_elements<T: Element>(data: &[T]) -> Vec<u8> {
    let mut raw = Vec::with_capacity(data.len() * T::SIZE);
    for &v in data {
        v.put(&mut raw);
    }
    raw
}

pub fn decode_elements<T: Element>(raw: &[u8]) -> Vec<T> {
    raw.chunks_exact(T::SIZE).map(T::get).collect()
}

pub fn encode_volume<T: Element>(vol: &Volume<T>, compression: Compression) -> Result<Vec<u8>> {
    let g = vol.grid();
    let header = VolumeHeader {
        version: FORMAT_VERSION,
        dims: g.dims,
        spacing: g.spacing,
        origin: g.origin,
        orientation: g.orientation,
        element: T::TYPE,
        compression,
    };
    let raw = encode_elements(vol.data());
    let payload = match compression {
        Compression::None => raw,
        Compression::Deflate => {
            let mut enc = ZlibEncoder::new(Vec::new(), Level::default());
            enc.write_all(&raw).expect("in-memory write");
            enc.finish().expect("in-memory write")
        }
    };
    encode_container(VOLUME_MAGIC, &header, &payload)
}

/// Parses a volume file; returns the header so callers can re-encode with
/// the same compression.
pub fn decode_volume<T: Element>(bytes: &[u8], path: &Path) -> Result<(Volume<T>, VolumeHeader)> {
    let (header, payload): (VolumeHeader, _) = decode_container(VOLUME_MAGIC, bytes, path)?;
    if header.version != FORMAT_VERSION {
        return Err(Error::malformed(path, format!("unsupported version {}", header.version)));
    }
    if header.element != T::TYPE {
        return Err(Error::malformed(
            path,
            format!("element type {:?}, expected {:?}", header.element, T::TYPE),
        ));
    }
    let grid = header.grid();
    grid.validate().map_err(|e| Error::malformed(path, e.to_string()))?;
    let raw = match header.compression {
        Compression::None => payload.to_vec(),
        Compression::Deflate => {
            let mut out = Vec::new();
            ZlibDecoder::new(payload)
                .read_to_end(&mut out)
                .map_err(|e| Error::malformed(path, format!("corrupt deflate payload: {e}")))?;
            out
        }
    };
    let expected = grid.len() * T::SIZE;
    if raw.len() != expected {
        return Err(Error::malformed(
            path,
            format!("payload is {} bytes, dims {:?} need {expected}", raw.len(), grid.dims),
        ));
    }
    let vol = Volume::from_vec(grid, decode_elements(&raw))?;
    Ok((vol, header))
}

pub fn write_volume<T: Element>(path: &Path, vol: &Volume<T>, compression: Compression) -> Result<()> {
    write_bytes(path, &encode_volume(vol, compression)?)
}

pub fn read_volume<T: Element>(path: &Path) -> Result<Volume<T>> {
    Ok(decode_volume(&read_bytes(path)?, path)?.0)
}

/// 2D images are stored as single-slice volumes.
pub fn write_image<T: Element>(path: &Path, img: &Image<T>, spacing: f64) -> Result<()> {
    let grid = Grid::new([img.width(), img.height(), 1], spacing, [0.0; 3]);
    let vol = Volume::from_vec(grid, img.data().to_vec())?;
    write_volume(path, &vol, Compression::None)
}

pub fn read_image<T: Element>(path: &Path) -> Result<Image<T>> {
    let vol: Volume<T> = read_volume(path)?;
    let [w, h, d] = vol.dims();
    if d != 1 {
        return Err(Error::malformed(path, format!("expected a single slice, got depth {d}")));
    }
    Image::from_vec(w, h, vol.into_vec())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub timestamp: f64,
    /// Tracked sensor pose.
    pub pose: Pose,
    /// Byte offset of the frame image within the payload.
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceHeader {
    pub version: u32,
    pub geometry: ImageGeometry,
    pub calibration: Pose,
    pub count: usize,
    pub frames: Vec<FrameRecord>,
}

pub fn encode_sequence(seq: &TrackedSequence) -> Result<Vec<u8>> {
    let g = &seq.geometry;
    let frame_bytes = g.pixel_count() * 4;
    let mut payload = Vec::with_capacity(frame_bytes * seq.len());
    let mut frames = Vec::with_capacity(seq.len());
    for f in &seq.frames {
        if f.image.dims() != (g.width, g.height) {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{} frame", g.width, g.height),
                actual: format!("{}x{}", f.image.width(), f.image.height()),
            });
        }
        frames.push(FrameRecord {
            timestamp: f.timestamp,
            pose: f.pose,
            offset: payload.len() as u64,
        });
        payload.extend(encode_elements(f.image.data()));
    }
    let header = SequenceHeader {
        version: FORMAT_VERSION,
        geometry: *g,
        calibration: seq.calibration,
        count: seq.len(),
        frames,
    };
    encode_container(SEQUENCE_MAGIC, &header, &payload)
}

pub fn decode_sequence(bytes: &[u8], path: &Path) -> Result<TrackedSequence> {
    let (h, payload): (SequenceHeader, _) = decode_container(SEQUENCE_MAGIC, bytes, path)?;
    if h.version != FORMAT_VERSION {
        return Err(Error::malformed(path, format!("unsupported version {}", h.version)));
    }
    let g = h.geometry.validated().map_err(|e| Error::malformed(path, e.to_string()))?;
    if h.count != h.frames.len() {
        return Err(Error::malformed(
            path,
            format!("count {} but {} frame records", h.count, h.frames.len()),
        ));
    }
    let frame_bytes = (g.pixel_count() * 4) as u64;
    let mut frames = Vec::with_capacity(h.count);
    let mut prev: Option<u64> = None;
    for (i, r) in h.frames.iter().enumerate() {
        if prev.is_some_and(|p| r.offset <= p) {
            return Err(Error::malformed(path, format!("frame {i} offset not increasing")));
        }
        prev = Some(r.offset);
        let end = r.offset + frame_bytes;
        if end > payload.len() as u64 {
            return Err(Error::malformed(path, format!("frame {i} payload truncated")));
        }
        let data = decode_elements(&payload[r.offset as usize..end as usize]);
        frames.push(TrackedFrame {
            timestamp: r.timestamp,
            pose: r.pose,
            image: Image::from_vec(g.width, g.height, data)?,
        });
    }
    Ok(TrackedSequence {
        geometry: g,
        calibration: h.calibration,
        frames,
    })
}

pub fn write_sequence(path: &Path, seq: &TrackedSequence) -> Result<()> {
    write_bytes(path, &encode_sequence(seq)?)
}

pub fn read_sequence(path: &Path) -> Result<TrackedSequence> {
    decode_sequence(&read_bytes(path)?, path)
}

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    /// Paths relative to the dataset directory.
    pub image: String,
    pub mask: String,
    pub pose: Pose,
    pub params: AugmentParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub ranges: ManeuverRanges,
    pub count: usize,
    pub geometry: ImageGeometry,
    pub samples: Vec<SampleEntry>,
}

fn sample_paths(i: usize) -> (String, String) {
    (format!("samples/{i:06}.image.vol"), format!("samples/{i:06}.mask.vol"))
}

/// Generates every sample of `gen` in chunks and writes it under `dir`
/// together with the manifest. Memory stays bounded by `chunk` samples.
pub fn write_dataset(dir: &Path, gen: &DatasetGenerator<'_>, chunk: usize) -> Result<(DatasetManifest, DatasetStats)> {
    let start = std::time::Instant::now();
    let spec = gen.spec();
    let mut entries = Vec::with_capacity(gen.len());
    let (mut labeled, mut attempts) = (0usize, 0f64);
    for lo in (0..gen.len()).step_by(chunk.max(1)) {
        let hi = (lo + chunk.max(1)).min(gen.len());
        let samples = gen.samples(lo..hi)?;
        samples
            .par_iter()
            .enumerate()
            .try_for_each(|(k, s)| write_sample(dir, lo + k, s, spec.crop.spacing))?;
        let stats = dataset_stats(&samples, 1.0);
        labeled += (stats.labeled_fraction * samples.len() as f64).round() as usize;
        attempts += stats.mean_attempts * samples.len() as f64;
        for (k, s) in samples.into_iter().enumerate() {
            let (image, mask) = sample_paths(lo + k);
            entries.push(SampleEntry {
                image,
                mask,
                pose: s.pose,
                params: s.params,
            });
        }
    }
    let manifest = DatasetManifest {
        version: FORMAT_VERSION,
        seed: spec.seed,
        ranges: spec.ranges.clone(),
        count: entries.len(),
        geometry: spec.crop,
        samples: entries,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    let seconds = start.elapsed().as_secs_f64();
    let n = manifest.count.max(1) as f64;
    let stats = DatasetStats {
        samples: manifest.count,
        labeled_fraction: labeled as f64 / n,
        mean_attempts: attempts / n,
        seconds,
        samples_per_second: manifest.count as f64 / seconds.max(1e-12),
    };
    Ok((manifest, stats))
}

fn write_sample(dir: &Path, i: usize, s: &SyntheticSample, spacing: f64) -> Result<()> {
    let (image, mask) = sample_paths(i);
    write_image(&dir.join(image), &s.image, spacing)?;
    write_image(&dir.join(mask), &s.mask, spacing)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let m: DatasetManifest = read_json(&path)?;
    if m.count != m.samples.len() {
        return Err(Error::malformed(
            &path,
            format!("count {} but {} samples listed", m.count, m.samples.len()),
        ));
    }
    Ok(m)
}

pub fn load_sample(dir: &Path, entry: &SampleEntry) -> Result<SyntheticSample> {
    let s = SyntheticSample {
        image: read_image(&dir.join(&entry.image))?,
        mask: read_image(&dir.join(&entry.mask))?,
        pose: entry.pose,
        params: entry.params.clone(),
    };
    s.validate()
        .map_err(|e| Error::malformed(dir.join(&entry.image), e.to_string()))?;
    Ok(s)
}

/// Reads the manifest and every sample it lists.
pub fn load_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<SyntheticSample>)> {
    let m = read_manifest(dir)?;
    let samples = m
        .samples
        .par_iter()
        .map(|e| load_sample(dir, e))
        .collect::<Result<Vec<_>>>()?;
    Ok((m, samples))
}

/// Resolves `path` against `base` unless it is absolute.
pub fn resolve(base: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
