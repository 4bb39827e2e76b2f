//! Little-endian binary COLMAP files.

use std::collections::BTreeMap;

use crate::geometry::{PinholeCamera, RigidPose, Vec3};

use super::{
    ColmapError, ImageRecord, Point2D, Result, SparsePoint, TrackEntry, PINHOLE, QUATERNION_REPAIR_TOLERANCE,
    SIMPLE_PINHOLE,
};

/// Bounds-checked reader that reports the byte offset of every failure.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(ColmapError::Truncated {
                what,
                offset: self.pos,
                needed: n,
                len: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn i32(&mut self, what: &'static str) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &'static str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    /// Rejects a declared count whose minimal payload cannot fit in the file.
    fn check_count(&self, count: u64, min_record: usize, what: &'static str) -> Result<()> {
        let needed = (count as u128) * (min_record as u128);
        if needed > self.remaining() as u128 {
            return Err(ColmapError::Truncated {
                what,
                offset: self.pos,
                needed: needed.min(usize::MAX as u128) as usize,
                len: self.bytes.len(),
            });
        }
        Ok(())
    }

    fn finish(&self, count: u64) -> Result<()> {
        if self.remaining() != 0 {
            return Err(ColmapError::TrailingBytes {
                count,
                offset: self.pos,
                len: self.bytes.len(),
            });
        }
        Ok(())
    }
}

pub(crate) fn model_param_count(model_id: i32) -> Option<usize> {
    match model_id {
        SIMPLE_PINHOLE => Some(3),
        PINHOLE => Some(4),
        _ => None,
    }
}

pub(crate) fn camera_from_params(model_id: i32, width: u64, height: u64, p: &[f64]) -> Result<PinholeCamera> {
    let (fx, fy, cx, cy) = match model_id {
        SIMPLE_PINHOLE => (p[0], p[0], p[1], p[2]),
        PINHOLE => (p[0], p[1], p[2], p[3]),
        other => return Err(ColmapError::UnsupportedModel(other.to_string())),
    };
    Ok(PinholeCamera::new(fx, fy, cx, cy, width as usize, height as usize)?)
}

/// Normalises quaternions within the repair tolerance, rejects the rest.
pub(crate) fn pose_from_raw(image_id: u32, q: [f64; 4], t: [f64; 3]) -> Result<RigidPose> {
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dev = (norm - 1.0).abs();
    if !(dev <= QUATERNION_REPAIR_TOLERANCE) {
        return Err(ColmapError::NonUnitQuaternion { image_id, norm });
    }
    if dev > RigidPose::UNIT_TOLERANCE {
        log::warn!("image {image_id}: renormalising quaternion with norm {norm}");
    }
    let qn = [q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm];
    Ok(RigidPose::from_wxyz(qn, Vec3::new(t[0], t[1], t[2]))?)
}

pub fn parse_cameras_bin(bytes: &[u8]) -> Result<BTreeMap<u32, PinholeCamera>> {
    let mut c = Cursor::new(bytes);
    let count = c.u64("camera count")?;
    c.check_count(count, 4 + 4 + 8 + 8, "camera records")?;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let id = c.u32("camera id")?;
        let model_id = c.i32("camera model")?;
        let width = c.u64("camera width")?;
        let height = c.u64("camera height")?;
        let n = model_param_count(model_id).ok_or_else(|| ColmapError::UnsupportedModel(model_id.to_string()))?;
        let mut params = [0.0; 4];
        for p in params.iter_mut().take(n) {
            *p = c.f64("camera params")?;
        }
        out.insert(id, camera_from_params(model_id, width, height, &params[..n])?);
    }
    c.finish(count)?;
    Ok(out)
}

pub fn parse_images_bin(bytes: &[u8]) -> Result<Vec<ImageRecord>> {
    let mut c = Cursor::new(bytes);
    let count = c.u64("image count")?;
    // id + qvec + tvec + camera id + empty name + point count
    c.check_count(count, 4 + 32 + 24 + 4 + 1 + 8, "image records")?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let image_id = c.u32("image id")?;
        let mut q = [0.0; 4];
        for v in &mut q {
            *v = c.f64("qvec")?;
        }
        let mut t = [0.0; 3];
        for v in &mut t {
            *v = c.f64("tvec")?;
        }
        let camera_id = c.u32("image camera id")?;
        let name_start = c.pos;
        let rest = &c.bytes[name_start..];
        let nul = rest
            .iter()
            .position(|&b| b == 0)
            .ok_or(ColmapError::MissingNul { offset: name_start })?;
        let name = std::str::from_utf8(&rest[..nul])
            .map_err(|_| ColmapError::BadName { offset: name_start })?
            .to_owned();
        c.pos += nul + 1;
        let n2d = c.u64("points2D count")?;
        c.check_count(n2d, 24, "points2D")?;
        let mut points2d = Vec::with_capacity(n2d as usize);
        for _ in 0..n2d {
            let x = c.f64("point2D x")?;
            let y = c.f64("point2D y")?;
            let id = c.u64("point2D point3D id")?;
            points2d.push(Point2D {
                x,
                y,
                point3d_id: (id != Point2D::UNMATCHED).then_some(id),
            });
        }
        out.push(ImageRecord {
            image_id,
            pose: pose_from_raw(image_id, q, t)?,
            camera_id,
            name,
            points2d,
        });
    }
    c.finish(count)?;
    Ok(out)
}

pub fn parse_points3d_bin(bytes: &[u8]) -> Result<Vec<SparsePoint>> {
    let mut c = Cursor::new(bytes);
    let count = c.u64("point count")?;
    c.check_count(count, 8 + 24 + 3 + 8 + 8, "point records")?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let id = c.u64("point id")?;
        let xyz = Vec3::new(c.f64("xyz")?, c.f64("xyz")?, c.f64("xyz")?);
        let rgb = [c.u8("rgb")?, c.u8("rgb")?, c.u8("rgb")?];
        let reproj_error = c.f64("reprojection error")?;
        let len = c.u64("track length")?;
        c.check_count(len, 8, "track")?;
        let mut track = Vec::with_capacity(len as usize);
        for _ in 0..len {
            track.push(TrackEntry {
                image_id: c.u32("track image id")?,
                point2d_idx: c.u32("track point2D index")?,
            });
        }
        if track.is_empty() {
            log::warn!("point {id} has an empty track");
        }
        out.push(SparsePoint {
            id,
            xyz,
            rgb,
            reproj_error,
            track,
        });
    }
    c.finish(count)?;
    Ok(out)
}

pub fn write_cameras_bin(cameras: &BTreeMap<u32, PinholeCamera>) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(&(cameras.len() as u64).to_le_bytes());
    for (&id, cam) in cameras {
        b.extend_from_slice(&id.to_le_bytes());
        b.extend_from_slice(&PINHOLE.to_le_bytes());
        b.extend_from_slice(&(cam.width as u64).to_le_bytes());
        b.extend_from_slice(&(cam.height as u64).to_le_bytes());
        for p in [cam.fx, cam.fy, cam.cx, cam.cy] {
            b.extend_from_slice(&p.to_le_bytes());
        }
    }
    b
}

pub fn write_images_bin(images: &[ImageRecord]) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(&(images.len() as u64).to_le_bytes());
    for im in images {
        b.extend_from_slice(&im.image_id.to_le_bytes());
        for v in im.pose.wxyz() {
            b.extend_from_slice(&v.to_le_bytes());
        }
        for v in im.pose.translation.iter() {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&im.camera_id.to_le_bytes());
        b.extend_from_slice(im.name.as_bytes());
        b.push(0);
        b.extend_from_slice(&(im.points2d.len() as u64).to_le_bytes());
        for p in &im.points2d {
            b.extend_from_slice(&p.x.to_le_bytes());
            b.extend_from_slice(&p.y.to_le_bytes());
            b.extend_from_slice(&p.point3d_id.unwrap_or(Point2D::UNMATCHED).to_le_bytes());
        }
    }
    b
}

pub fn write_points3d_bin(points: &[SparsePoint]) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(&(points.len() as u64).to_le_bytes());
    for p in points {
        b.extend_from_slice(&p.id.to_le_bytes());
        for v in p.xyz.iter() {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&p.rgb);
        b.extend_from_slice(&p.reproj_error.to_le_bytes());
        b.extend_from_slice(&(p.track.len() as u64).to_le_bytes());
        for t in &p.track {
            b.extend_from_slice(&t.image_id.to_le_bytes());
            b.extend_from_slice(&t.point2d_idx.to_le_bytes());
        }
    }
    b
}
