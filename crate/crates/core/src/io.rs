//! Little-endian binary formats for scenes, features, mask datasets,
//! codebooks and labeled point clouds.
//!
//! Every file starts with a 4-byte magic and a `u32` version (currently 1).
//! Readers reject unknown versions, truncated payloads and trailing bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Matrix4, Quaternion, Vector3};

use crate::error::{Error, Result};
use crate::eval::LabeledPointCloud;
use crate::gaussian::{Camera, Gaussian3D, Scene};
use crate::pq::PQCodebook;
use crate::registration::{Features, MaskDataset, MaskView};

pub const FORMAT_VERSION: u32 = 1;

pub const SCENE_MAGIC: &[u8; 4] = b"DRSG";
pub const FEATURES_MAGIC: &[u8; 4] = b"DRSF";
pub const MASKS_MAGIC: &[u8; 4] = b"DRMD";
pub const CODEBOOK_MAGIC: &[u8; 4] = b"DRPQ";
pub const POINTS_MAGIC: &[u8; 4] = b"DRPC";

const MODE_FULL: u8 = 0;
const MODE_PQ: u8 = 1;

struct Reader<R> {
    inner: R,
    format: &'static str,
}

impl<R: Read> Reader<R> {
    fn new(inner: R, format: &'static str, magic: &[u8; 4]) -> Result<Self> {
        let mut r = Self { inner, format };
        let mut m = [0u8; 4];
        r.bytes(&mut m)?;
        if &m != magic {
            return Err(r.err(format!("bad magic {m:?}")));
        }
        let v = r.u32()?;
        if v != FORMAT_VERSION {
            return Err(r.err(format!("unsupported version {v}")));
        }
        Ok(r)
    }

    fn err(&self, reason: String) -> Error {
        Error::Format {
            format: self.format,
            reason,
        }
    }

    fn bytes(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                self.err("truncated".into())
            } else {
                Error::Io(e)
            }
        })
    }

    fn u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.bytes(&mut b)?;
        Ok(b[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.bytes(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn i32(&mut self) -> Result<i32> {
        let mut b = [0u8; 4];
        self.bytes(&mut b)?;
        Ok(i32::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.bytes(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f32(&mut self) -> Result<f32> {
        let mut b = [0u8; 4];
        self.bytes(&mut b)?;
        Ok(f32::from_le_bytes(b))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let mut raw = vec![0u8; self.checked_len(n, 4)?];
        self.bytes(&mut raw)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<u32>> {
        let mut raw = vec![0u8; self.checked_len(n, 4)?];
        self.bytes(&mut raw)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn vec3(&mut self) -> Result<Vector3<f64>> {
        Ok(Vector3::new(self.f32()? as f64, self.f32()? as f64, self.f32()? as f64))
    }

    fn checked_len(&self, n: usize, size: usize) -> Result<usize> {
        n.checked_mul(size)
            .ok_or_else(|| self.err(format!("element count {n} overflows")))
    }

    fn finish(mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b)? {
            0 => Ok(()),
            _ => Err(self.err("trailing bytes after payload".into())),
        }
    }
}

struct Writer<W> {
    inner: W,
}

impl<W: Write> Writer<W> {
    fn new(inner: W, magic: &[u8; 4]) -> Result<Self> {
        let mut w = Self { inner };
        w.inner.write_all(magic)?;
        w.u32(FORMAT_VERSION)?;
        Ok(w)
    }

    fn u8(&mut self, v: u8) -> Result<()> {
        Ok(self.inner.write_all(&[v])?)
    }

    fn u32(&mut self, v: u32) -> Result<()> {
        Ok(self.inner.write_all(&v.to_le_bytes())?)
    }

    fn i32(&mut self, v: i32) -> Result<()> {
        Ok(self.inner.write_all(&v.to_le_bytes())?)
    }

    fn u64(&mut self, v: u64) -> Result<()> {
        Ok(self.inner.write_all(&v.to_le_bytes())?)
    }

    fn f32(&mut self, v: f32) -> Result<()> {
        Ok(self.inner.write_all(&v.to_le_bytes())?)
    }

    fn f32s(&mut self, v: &[f32]) -> Result<()> {
        v.iter().try_for_each(|&x| self.f32(x))
    }

    fn vec3(&mut self, v: &Vector3<f64>) -> Result<()> {
        v.iter().try_for_each(|&x| self.f32(x as f32))
    }

    fn finish(mut self) -> Result<()> {
        Ok(self.inner.flush()?)
    }
}

fn count_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::InvalidArgument(format!("{what} {n} exceeds u32")))
}

fn encode_label(label: Option<u32>) -> Result<i32> {
    match label {
        None => Ok(-1),
        Some(l) => i32::try_from(l)
            .map_err(|_| Error::InvalidArgument(format!("label {l} does not fit in i32"))),
    }
}

pub fn write_scene<W: Write>(w: W, scene: &Scene) -> Result<()> {
    let mut w = Writer::new(w, SCENE_MAGIC)?;
    w.u32(count_u32(scene.len(), "Gaussian count")?)?;
    for g in &scene.gaussians {
        w.vec3(&g.center)?;
        w.vec3(&g.scale)?;
        let q = &g.rotation;
        for c in [q.w, q.i, q.j, q.k] {
            w.f32(c as f32)?;
        }
        w.f32(g.opacity as f32)?;
        w.vec3(&g.color)?;
        w.i32(encode_label(g.label)?)?;
    }
    w.finish()
}

pub fn read_scene<R: Read>(r: R) -> Result<Scene> {
    let mut r = Reader::new(r, "DRSG", SCENE_MAGIC)?;
    let n = r.u32()? as usize;
    let mut gaussians = Vec::with_capacity(n.min(1 << 20));
    for i in 0..n {
        let center = r.vec3()?;
        let scale = r.vec3()?;
        let (w, x, y, z) = (r.f32()?, r.f32()?, r.f32()?, r.f32()?);
        let opacity = r.f32()? as f64;
        let color = r.vec3()?;
        let label = match r.i32()? {
            -1 => None,
            l if l >= 0 => Some(l as u32),
            l => return Err(r.err(format!("record {i}: invalid label {l}"))),
        };
        let g = Gaussian3D {
            center,
            scale,
            rotation: Quaternion::new(w as f64, x as f64, y as f64, z as f64),
            opacity,
            color,
            label,
        };
        g.validate()
            .map_err(|e| r.err(format!("record {i}: {e}")))?;
        gaussians.push(g);
    }
    r.finish()?;
    Ok(Scene::new(gaussians))
}

/// Writes `features`; PQ payloads omit `L`, which readers take from the codebook.
pub fn write_features<W: Write>(w: W, features: &Features) -> Result<()> {
    let mut w = Writer::new(w, FEATURES_MAGIC)?;
    w.u32(count_u32(features.len(), "row count")?)?;
    w.u32(count_u32(features.dim(), "dimension")?)?;
    match features {
        Features::Full { data, .. } => {
            w.u8(MODE_FULL)?;
            w.f32s(data)?;
        }
        Features::Quantized { codes, .. } => {
            w.u8(MODE_PQ)?;
            w.inner.write_all(codes)?;
        }
    }
    w.finish()
}

/// Reads a feature sidecar. `subspaces` is required for PQ payloads unless
/// it can be inferred from the remaining byte count.
pub fn read_features<R: Read>(r: R, subspaces: Option<usize>) -> Result<Features> {
    let mut r = Reader::new(r, "DRSF", FEATURES_MAGIC)?;
    let n = r.u32()? as usize;
    let dim = r.u32()? as usize;
    if dim == 0 {
        return Err(r.err("dimension is zero".into()));
    }
    let features = match r.u8()? {
        MODE_FULL => {
            let len = r.checked_len(n, dim)?;
            Features::Full {
                dim,
                data: r.f32s(len)?,
            }
        }
        MODE_PQ => {
            let codes = match subspaces {
                Some(l) => {
                    let mut codes = vec![0u8; r.checked_len(n, l)?];
                    r.bytes(&mut codes)?;
                    codes
                }
                None => {
                    let mut codes = Vec::new();
                    r.inner.read_to_end(&mut codes)?;
                    codes
                }
            };
            let l = match subspaces {
                Some(l) => l,
                None if n > 0 && codes.len() % n == 0 => codes.len() / n,
                None => return Err(r.err("cannot infer sub-space count of PQ payload".into())),
            };
            if l == 0 || dim % l != 0 {
                return Err(r.err(format!("{l} sub-spaces do not divide dimension {dim}")));
            }
            Features::Quantized {
                dim,
                subspaces: l,
                codes,
            }
        }
        m => return Err(r.err(format!("unknown payload mode {m}"))),
    };
    r.finish()?;
    Ok(features)
}

/// An `N × D` `f32` matrix stored as a full-precision feature file.
pub fn write_matrix<W: Write>(w: W, rows: usize, dim: usize, data: &[f32]) -> Result<()> {
    if data.len() != rows * dim {
        return Err(Error::InvalidArgument(format!(
            "{} values for a {rows}x{dim} matrix",
            data.len()
        )));
    }
    write_features(
        w,
        &Features::Full {
            dim,
            data: data.to_vec(),
        },
    )
}

/// Returns `(rows, dim, data)` of a full-precision feature file.
pub fn read_matrix<R: Read>(r: R) -> Result<(usize, usize, Vec<f32>)> {
    match read_features(r, None)? {
        Features::Full { dim, data } => Ok((data.len() / dim, dim, data)),
        Features::Quantized { .. } => Err(Error::Format {
            format: "DRSF",
            reason: "expected a full-precision matrix, found PQ codes".into(),
        }),
    }
}

fn write_camera<W: Write>(w: &mut Writer<W>, c: &Camera) -> Result<()> {
    for v in [c.fx, c.fy, c.cx, c.cy] {
        w.f32(v as f32)?;
    }
    w.u32(c.width)?;
    w.u32(c.height)?;
    for row in 0..4 {
        for col in 0..4 {
            w.f32(c.world_to_camera[(row, col)] as f32)?;
        }
    }
    Ok(())
}

fn read_camera<R: Read>(r: &mut Reader<R>) -> Result<Camera> {
    let (fx, fy, cx, cy) = (r.f32()?, r.f32()?, r.f32()?, r.f32()?);
    let (width, height) = (r.u32()?, r.u32()?);
    let m = r.f32s(16)?;
    let world_to_camera = Matrix4::from_row_iterator(m.iter().map(|&v| v as f64));
    Camera::new(
        fx as f64,
        fy as f64,
        cx as f64,
        cy as f64,
        width,
        height,
        world_to_camera,
    )
    .map_err(|e| r.err(format!("camera: {e}")))
}

pub fn write_masks<W: Write>(w: W, ds: &MaskDataset) -> Result<()> {
    let mut w = Writer::new(w, MASKS_MAGIC)?;
    w.u32(count_u32(ds.views.len(), "view count")?)?;
    w.u32(count_u32(ds.mask_count(), "mask count")?)?;
    w.u32(count_u32(ds.dim, "dimension")?)?;
    w.f32s(&ds.embeddings)?;
    for v in &ds.views {
        write_camera(&mut w, &v.camera)?;
        w.u32(count_u32(v.mask_table.len(), "local mask count")?)?;
        for (&local, &global) in &v.mask_table {
            w.u32(local)?;
            w.u32(global)?;
        }
        for &id in &v.mask_map {
            w.u32(id)?;
        }
    }
    w.finish()
}

pub fn read_masks<R: Read>(r: R) -> Result<MaskDataset> {
    let mut r = Reader::new(r, "DRMD", MASKS_MAGIC)?;
    let views = r.u32()? as usize;
    let m = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let embeddings = r.f32s(r.checked_len(m, dim)?)?;
    let mut out = Vec::with_capacity(views.min(1 << 16));
    for _ in 0..views {
        let camera = read_camera(&mut r)?;
        let locals = r.u32()? as usize;
        let mut mask_table = BTreeMap::new();
        for _ in 0..locals {
            let local = r.u32()?;
            let global = r.u32()?;
            if mask_table.insert(local, global).is_some() {
                return Err(r.err(format!("duplicate local mask id {local}")));
            }
        }
        let mask_map = r.u32s(camera.pixel_count())?;
        out.push(MaskView {
            camera,
            mask_map,
            mask_table,
        });
    }
    r.finish()?;
    MaskDataset::new(out, embeddings, dim).map_err(|e| Error::Format {
        format: "DRMD",
        reason: e.to_string(),
    })
}

pub fn write_codebook<W: Write>(w: W, cb: &PQCodebook) -> Result<()> {
    let mut w = Writer::new(w, CODEBOOK_MAGIC)?;
    w.u32(count_u32(cb.dim(), "dimension")?)?;
    w.u32(count_u32(cb.subspaces(), "sub-space count")?)?;
    w.u32(count_u32(cb.centroids_per_subspace(), "centroid count")?)?;
    w.u64(cb.seed)?;
    w.f32s(cb.centroid_data())?;
    w.finish()
}

pub fn read_codebook<R: Read>(r: R) -> Result<PQCodebook> {
    let mut r = Reader::new(r, "DRPQ", CODEBOOK_MAGIC)?;
    let dim = r.u32()? as usize;
    let l = r.u32()? as usize;
    let k = r.u32()? as usize;
    let seed = r.u64()?;
    if l == 0 || dim % l != 0 || k == 0 || k > 256 {
        return Err(r.err(format!("invalid geometry D={dim} L={l} K={k}")));
    }
    let centroids = r.f32s(r.checked_len(dim, k)?)?;
    r.finish()?;
    PQCodebook::from_centroids(dim, l, k, centroids, seed).map_err(|e| Error::Format {
        format: "DRPQ",
        reason: e.to_string(),
    })
}

pub fn write_point_cloud<W: Write>(w: W, pc: &LabeledPointCloud) -> Result<()> {
    let mut w = Writer::new(w, POINTS_MAGIC)?;
    w.u32(count_u32(pc.len(), "point count")?)?;
    w.u32(pc.label_count)?;
    for (p, &l) in pc.points.iter().zip(&pc.labels) {
        w.vec3(p)?;
        w.i32(encode_label(Some(l))?)?;
    }
    w.finish()
}

pub fn read_point_cloud<R: Read>(r: R) -> Result<LabeledPointCloud> {
    let mut r = Reader::new(r, "DRPC", POINTS_MAGIC)?;
    let q = r.u32()? as usize;
    let label_count = r.u32()?;
    let mut points = Vec::with_capacity(q.min(1 << 22));
    let mut labels = Vec::with_capacity(q.min(1 << 22));
    for i in 0..q {
        points.push(r.vec3()?);
        let l = r.i32()?;
        if l < 0 {
            return Err(r.err(format!("point {i} has negative label {l}")));
        }
        labels.push(l as u32);
    }
    r.finish()?;
    LabeledPointCloud::new(points, labels, label_count).map_err(|e| Error::Format {
        format: "DRPC",
        reason: e.to_string(),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

pub fn save_scene(path: impl AsRef<Path>, scene: &Scene) -> Result<()> {
    write_scene(create(path.as_ref())?, scene)
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene> {
    read_scene(open(path.as_ref())?)
}

pub fn save_features(path: impl AsRef<Path>, features: &Features) -> Result<()> {
    write_features(create(path.as_ref())?, features)
}

pub fn load_features(path: impl AsRef<Path>, subspaces: Option<usize>) -> Result<Features> {
    read_features(open(path.as_ref())?, subspaces)
}

pub fn save_matrix(path: impl AsRef<Path>, rows: usize, dim: usize, data: &[f32]) -> Result<()> {
    write_matrix(create(path.as_ref())?, rows, dim, data)
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f32>)> {
    read_matrix(open(path.as_ref())?)
}

pub fn save_masks(path: impl AsRef<Path>, ds: &MaskDataset) -> Result<()> {
    write_masks(create(path.as_ref())?, ds)
}

pub fn load_masks(path: impl AsRef<Path>) -> Result<MaskDataset> {
    read_masks(open(path.as_ref())?)
}

pub fn save_codebook(path: impl AsRef<Path>, cb: &PQCodebook) -> Result<()> {
    write_codebook(create(path.as_ref())?, cb)
}

pub fn load_codebook(path: impl AsRef<Path>) -> Result<PQCodebook> {
    read_codebook(open(path.as_ref())?)
}

pub fn save_point_cloud(path: impl AsRef<Path>, pc: &LabeledPointCloud) -> Result<()> {
    write_point_cloud(create(path.as_ref())?, pc)
}

pub fn load_point_cloud(path: impl AsRef<Path>) -> Result<LabeledPointCloud> {
    read_point_cloud(open(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> Scene {
        let mut g = Gaussian3D::isotropic(Vector3::new(0.5, -1.25, 3.0), 0.25, 0.75);
        g.scale = Vector3::new(0.5, 0.25, 0.125);
        g.rotation = Quaternion::new(0.5, 0.5, -0.5, 0.5);
        g.color = Vector3::new(1.0, 0.5, 0.0);
        Scene::new(vec![
            g.clone().with_label(Some(3)),
            g.with_label(None),
        ])
    }

    #[test]
    fn scene_layout_is_exact() {
        let mut buf = Vec::new();
        write_scene(&mut buf, &scene()).unwrap();
        assert_eq!(buf.len(), 12 + 2 * 60);
        assert_eq!(&buf[..4], b"DRSG");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..12], &2u32.to_le_bytes());
        assert_eq!(&buf[12..16], &0.5f32.to_le_bytes());
        // quaternion w comes first
        assert_eq!(&buf[36..40], &0.5f32.to_le_bytes());
        assert_eq!(&buf[40..44], &0.5f32.to_le_bytes());
        assert_eq!(&buf[44..48], &(-0.5f32).to_le_bytes());
        assert_eq!(&buf[52..56], &0.75f32.to_le_bytes());
        assert_eq!(&buf[68..72], &3i32.to_le_bytes());
        assert_eq!(&buf[128..132], &(-1i32).to_le_bytes());
        assert_eq!(read_scene(buf.as_slice()).unwrap(), scene());
    }

    #[test]
    fn scene_rejects_bad_input() {
        let mut buf = Vec::new();
        write_scene(&mut buf, &scene()).unwrap();
        assert!(matches!(read_scene(&buf[..buf.len() - 1]), Err(Error::Format { .. })));
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_scene(extra.as_slice()).is_err());
        let mut magic = buf.clone();
        magic[0] = b'X';
        assert!(read_scene(magic.as_slice()).is_err());
        let mut version = buf;
        version[4] = 2;
        assert!(read_scene(version.as_slice()).is_err());
    }

    #[test]
    fn features_roundtrip() {
        let full = Features::Full {
            dim: 2,
            data: vec![1.0, 0.0, 0.6, 0.8],
        };
        let mut buf = Vec::new();
        write_features(&mut buf, &full).unwrap();
        assert_eq!(buf.len(), 17 + 16);
        assert_eq!(buf[16], 0);
        assert_eq!(read_features(buf.as_slice(), None).unwrap(), full);

        let pq = Features::Quantized {
            dim: 4,
            subspaces: 2,
            codes: vec![1, 2, 3, 4, 5, 6],
        };
        let mut buf = Vec::new();
        write_features(&mut buf, &pq).unwrap();
        assert_eq!(buf.len(), 17 + 6);
        assert_eq!(buf[16], 1);
        assert_eq!(read_features(buf.as_slice(), Some(2)).unwrap(), pq);
        assert_eq!(read_features(buf.as_slice(), None).unwrap(), pq);
        assert!(read_features(buf.as_slice(), Some(4)).is_err());
        assert!(read_matrix(buf.as_slice()).is_err());
    }

    #[test]
    fn masks_roundtrip() {
        let cam = Camera::look_at(
            Vector3::new(0.0, 0.0, -4.0),
            Vector3::zeros(),
            Vector3::new(0.0, 1.0, 0.0),
            8.0,
            4,
            3,
        )
        .unwrap();
        let mut table = BTreeMap::new();
        table.insert(1, 1);
        table.insert(2, 0);
        let view = MaskView {
            camera: cam,
            mask_map: vec![0, 1, 1, 2, 0, 0, 2, 2, 1, 1, 1, 0],
            mask_table: table,
        };
        let ds = MaskDataset::new(vec![view], vec![1.0, 0.0, 0.0, 1.0], 2).unwrap();
        let mut buf = Vec::new();
        write_masks(&mut buf, &ds).unwrap();
        let expect = 20 + 16 + 16 + 8 + 64 + 4 + 16 + 48;
        assert_eq!(buf.len(), expect);
        let back = read_masks(buf.as_slice()).unwrap();
        assert_eq!(back.views[0].mask_map, ds.views[0].mask_map);
        assert_eq!(back.views[0].mask_table, ds.views[0].mask_table);
        assert_eq!(back.embeddings, ds.embeddings);
        let mut again = Vec::new();
        write_masks(&mut again, &back).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn codebook_and_point_cloud_roundtrip() {
        let cb = PQCodebook::from_centroids(4, 2, 2, (0..8).map(|v| v as f32).collect(), 77).unwrap();
        let mut buf = Vec::new();
        write_codebook(&mut buf, &cb).unwrap();
        assert_eq!(buf.len(), 28 + 32);
        assert_eq!(&buf[20..28], &77u64.to_le_bytes());
        let back = read_codebook(buf.as_slice()).unwrap();
        assert_eq!(back.centroid_data(), cb.centroid_data());
        assert_eq!(back.seed, 77);

        let pc = LabeledPointCloud::new(
            vec![Vector3::new(1.0, 2.0, 3.0), Vector3::new(-0.5, 0.0, 0.25)],
            vec![0, 2],
            3,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_point_cloud(&mut buf, &pc).unwrap();
        assert_eq!(buf.len(), 16 + 2 * 16);
        assert_eq!(read_point_cloud(buf.as_slice()).unwrap(), pc);
    }
}
