//! Whitespace-separated text COLMAP files. Lines starting with `#` are comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::geometry::{PinholeCamera, Vec3};

use super::binary::{camera_from_params, model_param_count, pose_from_raw};
use super::{ColmapError, ImageRecord, Point2D, Result, SparsePoint, TrackEntry, PINHOLE, SIMPLE_PINHOLE};

fn field<T: FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| ColmapError::Parse {
        line,
        message: format!("missing {what}"),
    })?;
    tok.parse().map_err(|_| ColmapError::Parse {
        line,
        message: format!("invalid {what} '{tok}'"),
    })
}

/// `(1-based line number, content)` of non-comment lines.
fn content_lines(src: &str) -> impl Iterator<Item = (usize, &str)> {
    src.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.starts_with('#'))
}

fn model_id(name: &str) -> Option<i32> {
    match name {
        "SIMPLE_PINHOLE" => Some(SIMPLE_PINHOLE),
        "PINHOLE" => Some(PINHOLE),
        _ => None,
    }
}

pub fn parse_cameras_txt(src: &str) -> Result<BTreeMap<u32, PinholeCamera>> {
    let mut out = BTreeMap::new();
    for (ln, line) in content_lines(src).filter(|(_, l)| !l.is_empty()) {
        let mut tok = line.split_whitespace();
        let id: u32 = field(tok.next(), ln, "camera id")?;
        let model: String = field(tok.next(), ln, "camera model")?;
        let width: u64 = field(tok.next(), ln, "width")?;
        let height: u64 = field(tok.next(), ln, "height")?;
        let mid = model_id(&model).ok_or_else(|| ColmapError::UnsupportedModel(model.clone()))?;
        let params: Vec<f64> = tok.map(|t| field(Some(t), ln, "camera parameter")).collect::<Result<_>>()?;
        let expected = model_param_count(mid).expect("known model");
        if params.len() != expected {
            return Err(ColmapError::ParamCount {
                model,
                expected,
                got: params.len(),
            });
        }
        out.insert(id, camera_from_params(mid, width, height, &params)?);
    }
    Ok(out)
}

/// Each image spans two lines: the pose line and a (possibly empty) line of
/// `X Y POINT3D_ID` triples, with `-1` for unmatched keypoints.
pub fn parse_images_txt(src: &str) -> Result<Vec<ImageRecord>> {
    let mut lines = content_lines(src).skip_while(|(_, l)| l.is_empty()).peekable();
    let mut out = Vec::new();
    while let Some((ln, line)) = lines.next() {
        if line.is_empty() {
            continue;
        }
        let mut tok = line.split_whitespace();
        let image_id: u32 = field(tok.next(), ln, "image id")?;
        let mut q = [0.0; 4];
        for v in &mut q {
            *v = field(tok.next(), ln, "qvec")?;
        }
        let mut t = [0.0; 3];
        for v in &mut t {
            *v = field(tok.next(), ln, "tvec")?;
        }
        let camera_id: u32 = field(tok.next(), ln, "camera id")?;
        let name: String = field(tok.next(), ln, "image name")?;
        let mut points2d = Vec::new();
        if let Some((pln, pline)) = lines.next() {
            let toks: Vec<&str> = pline.split_whitespace().collect();
            if toks.len() % 3 != 0 {
                return Err(ColmapError::Parse {
                    line: pln,
                    message: "points2D line must hold X Y POINT3D_ID triples".into(),
                });
            }
            for tr in toks.chunks_exact(3) {
                let x: f64 = field(Some(tr[0]), pln, "point2D x")?;
                let y: f64 = field(Some(tr[1]), pln, "point2D y")?;
                let id: i64 = field(Some(tr[2]), pln, "point3D id")?;
                points2d.push(Point2D {
                    x,
                    y,
                    point3d_id: (id >= 0).then_some(id as u64),
                });
            }
        }
        out.push(ImageRecord {
            image_id,
            pose: pose_from_raw(image_id, q, t)?,
            camera_id,
            name,
            points2d,
        });
    }
    Ok(out)
}

pub fn parse_points3d_txt(src: &str) -> Result<Vec<SparsePoint>> {
    let mut out = Vec::new();
    for (ln, line) in content_lines(src).filter(|(_, l)| !l.is_empty()) {
        let mut tok = line.split_whitespace();
        let id: u64 = field(tok.next(), ln, "point id")?;
        let xyz = Vec3::new(
            field(tok.next(), ln, "x")?,
            field(tok.next(), ln, "y")?,
            field(tok.next(), ln, "z")?,
        );
        let rgb = [
            field(tok.next(), ln, "r")?,
            field(tok.next(), ln, "g")?,
            field(tok.next(), ln, "b")?,
        ];
        let reproj_error: f64 = field(tok.next(), ln, "error")?;
        let rest: Vec<&str> = tok.collect();
        if rest.len() % 2 != 0 {
            return Err(ColmapError::Parse {
                line: ln,
                message: "track must hold IMAGE_ID POINT2D_IDX pairs".into(),
            });
        }
        let track = rest
            .chunks_exact(2)
            .map(|p| {
                Ok(TrackEntry {
                    image_id: field(Some(p[0]), ln, "track image id")?,
                    point2d_idx: field(Some(p[1]), ln, "track point2D index")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(SparsePoint {
            id,
            xyz,
            rgb,
            reproj_error,
            track,
        });
    }
    Ok(out)
}

pub fn write_cameras_txt(cameras: &BTreeMap<u32, PinholeCamera>) -> String {
    let mut s = String::from("# Camera list with one line of data per camera:\n#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n");
    for (id, c) in cameras {
        writeln!(s, "{id} PINHOLE {} {} {:?} {:?} {:?} {:?}", c.width, c.height, c.fx, c.fy, c.cx, c.cy).unwrap();
    }
    s
}

pub fn write_images_txt(images: &[ImageRecord]) -> String {
    let mut s = String::from(
        "# Image list with two lines of data per image:\n#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n#   POINTS2D[] as (X, Y, POINT3D_ID)\n",
    );
    for im in images {
        let [w, x, y, z] = im.pose.wxyz();
        let t = im.pose.translation;
        writeln!(
            s,
            "{} {w:?} {x:?} {y:?} {z:?} {:?} {:?} {:?} {} {}",
            im.image_id, t.x, t.y, t.z, im.camera_id, im.name
        )
        .unwrap();
        let pts: Vec<String> = im
            .points2d
            .iter()
            .map(|p| {
                let id = p.point3d_id.map_or(-1i128, |v| v as i128);
                format!("{:?} {:?} {id}", p.x, p.y)
            })
            .collect();
        writeln!(s, "{}", pts.join(" ")).unwrap();
    }
    s
}

pub fn write_points3d_txt(points: &[SparsePoint]) -> String {
    let mut s = String::from(
        "# 3D point list with one line of data per point:\n#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n",
    );
    for p in points {
        write!(
            s,
            "{} {:?} {:?} {:?} {} {} {} {:?}",
            p.id, p.xyz.x, p.xyz.y, p.xyz.z, p.rgb[0], p.rgb[1], p.rgb[2], p.reproj_error
        )
        .unwrap();
        for t in &p.track {
            write!(s, " {} {}", t.image_id, t.point2d_idx).unwrap();
        }
        s.push('\n');
    }
    s
}
