//! Binary little-endian PLY reader/writer for Gaussian scenes.
//!
//! Write order: x, y, z, nx, ny, nz, f_dc_0..2, f_rest_0..3k-1, opacity,
//! scale_0..2, rot_0..3, tamper_attr; every property is float32. Normals are
//! written as zeros and ignored on read. `f_rest_*` appears only for SH
//! degree > 0 and its count fixes the degree on read. A file without
//! `tamper_attr` loads with r = 0 everywhere.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scene::{sh_rest_per_channel, GaussianScene};

fn is_float_type(t: &str) -> bool {
    t == "float" || t == "float32"
}

struct Header {
    count: usize,
    /// Property names in declaration order; all float32.
    names: Vec<String>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let head_end = bytes
        .windows(11)
        .position(|w| w == b"end_header\n")
        .ok_or_else(|| Error::Parse(format!("{}: no end_header", path.display())))?;
    let text = std::str::from_utf8(&bytes[..head_end + 11])
        .map_err(|_| Error::Parse(format!("{}: header is not valid text", path.display())))?;
    let mut lines = text.lines();
    if lines.next() != Some("ply") {
        return Err(Error::Parse(format!("{}: missing ply magic", path.display())));
    }
    if lines.next() != Some("format binary_little_endian 1.0") {
        return Err(Error::Parse(format!(
            "{}: expected format binary_little_endian 1.0",
            path.display()
        )));
    }
    let mut count: Option<usize> = None;
    let mut names = Vec::new();
    for line in lines {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("comment") => continue,
            Some("element") => {
                let kind = it.next().unwrap_or("");
                if kind != "vertex" || count.is_some() {
                    return Err(Error::Schema(format!(
                        "{}: unsupported element '{kind}'",
                        path.display()
                    )));
                }
                let n = it
                    .next()
                    .and_then(|v| v.parse::<usize>().ok())
                    .ok_or_else(|| Error::Parse(format!("{}: bad vertex count", path.display())))?;
                count = Some(n);
            }
            Some("property") => {
                if count.is_none() {
                    return Err(Error::Parse(format!(
                        "{}: property before element",
                        path.display()
                    )));
                }
                let ty = it.next().unwrap_or("");
                let name = it.next().unwrap_or("");
                if !is_float_type(ty) {
                    return Err(Error::Schema(format!(
                        "{}: property {name} has type {ty}, expected float",
                        path.display()
                    )));
                }
                names.push(name.to_string());
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(Error::Parse(format!(
                    "{}: unexpected header line '{other}'",
                    path.display()
                )))
            }
            None => continue,
        }
    }
    let count =
        count.ok_or_else(|| Error::Parse(format!("{}: no vertex element", path.display())))?;
    Ok(Header { count, names, body_offset: head_end + 11 })
}

/// Column index of each field we consume, resolved by name.
struct Layout {
    pos: [usize; 3],
    dc: [usize; 3],
    rest: Vec<usize>,
    opacity: usize,
    scale: [usize; 3],
    rot: [usize; 4],
    tamper: Option<usize>,
    degree: u8,
}

fn resolve_layout(names: &[String], path: &Path) -> Result<Layout> {
    let find = |name: &str| -> Result<usize> {
        names.iter().position(|n| n == name).ok_or_else(|| {
            Error::Schema(format!("{}: missing required property {name}", path.display()))
        })
    };
    let mut rest_cols = Vec::new();
    for k in 0.. {
        match names.iter().position(|n| *n == format!("f_rest_{k}")) {
            Some(c) => rest_cols.push(c),
            None => break,
        }
    }
    let extra = names.iter().filter(|n| n.starts_with("f_rest_")).count();
    if extra != rest_cols.len() {
        return Err(Error::Schema(format!(
            "{}: f_rest_* indices are not contiguous from 0",
            path.display()
        )));
    }
    let degree = match rest_cols.len() {
        0 => 0,
        n if n % 3 == 0 && [3, 8, 15].contains(&(n / 3)) => match n / 3 {
            3 => 1,
            8 => 2,
            _ => 3,
        },
        n => {
            return Err(Error::Schema(format!(
                "{}: {n} f_rest properties do not match any SH degree <= 3",
                path.display()
            )))
        }
    };
    Ok(Layout {
        pos: [find("x")?, find("y")?, find("z")?],
        dc: [find("f_dc_0")?, find("f_dc_1")?, find("f_dc_2")?],
        rest: rest_cols,
        opacity: find("opacity")?,
        scale: [find("scale_0")?, find("scale_1")?, find("scale_2")?],
        rot: [find("rot_0")?, find("rot_1")?, find("rot_2")?, find("rot_3")?],
        tamper: names.iter().position(|n| n == "tamper_attr"),
        degree,
    })
}

/// Read a Gaussian scene from a binary little-endian PLY file.
pub fn load_ply(path: &Path) -> Result<GaussianScene> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::Parse(format!("{}: cannot read: {e}", path.display())))?;
    let header = parse_header(&bytes, path)?;
    let layout = resolve_layout(&header.names, path)?;

    let stride = header.names.len() * 4;
    let body = &bytes[header.body_offset..];
    let need = header.count * stride;
    if body.len() < need {
        return Err(Error::Truncation(format!(
            "{}: body holds {} bytes, need {need} for {} vertices",
            path.display(),
            body.len(),
            header.count
        )));
    }

    let mut scene = GaussianScene::empty(layout.degree);
    let n = header.count;
    scene.positions.reserve(n);
    scene.rotations.reserve(n);
    scene.log_scales.reserve(n);
    scene.raw_opacities.reserve(n);
    scene.tamper.reserve(n);
    scene.sh.reserve(n * scene.sh_stride());

    let col = |row: &[u8], c: usize| -> f64 {
        f32::from_le_bytes(row[c * 4..c * 4 + 4].try_into().unwrap()) as f64
    };
    for i in 0..n {
        let row = &body[i * stride..(i + 1) * stride];
        scene.positions.push(Vector3::new(
            col(row, layout.pos[0]),
            col(row, layout.pos[1]),
            col(row, layout.pos[2]),
        ));
        let mut q = [
            col(row, layout.rot[0]),
            col(row, layout.rot[1]),
            col(row, layout.rot[2]),
            col(row, layout.rot[3]),
        ];
        let norm = (q.iter().map(|v| v * v).sum::<f64>()).sqrt();
        if !norm.is_finite() || norm < 1e-12 {
            q = [1.0, 0.0, 0.0, 0.0];
        } else if (norm - 1.0).abs() > 1e-6 {
            q.iter_mut().for_each(|v| *v /= norm);
        }
        scene.rotations.push(q);
        scene.log_scales.push(Vector3::new(
            col(row, layout.scale[0]),
            col(row, layout.scale[1]),
            col(row, layout.scale[2]),
        ));
        scene.raw_opacities.push(col(row, layout.opacity));
        for c in layout.dc {
            scene.sh.push(col(row, c));
        }
        for &c in &layout.rest {
            scene.sh.push(col(row, c));
        }
        scene.tamper.push(layout.tamper.map_or(0.0, |c| col(row, c)));
    }
    Ok(scene)
}

/// Write a scene in the canonical property order, all float32.
pub fn save_ply(path: &Path, scene: &GaussianScene) -> Result<()> {
    let wrap = |e: std::io::Error| Error::Write(format!("{}: {e}", path.display()));
    let file = File::create(path).map_err(wrap)?;
    let mut w = BufWriter::new(file);
    let rest = 3 * sh_rest_per_channel(scene.sh_degree);

    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", scene.count()));
    for name in ["x", "y", "z", "nx", "ny", "nz"] {
        header.push_str(&format!("property float {name}\n"));
    }
    for k in 0..3 {
        header.push_str(&format!("property float f_dc_{k}\n"));
    }
    for k in 0..rest {
        header.push_str(&format!("property float f_rest_{k}\n"));
    }
    header.push_str("property float opacity\n");
    for k in 0..3 {
        header.push_str(&format!("property float scale_{k}\n"));
    }
    for k in 0..4 {
        header.push_str(&format!("property float rot_{k}\n"));
    }
    header.push_str("property float tamper_attr\nend_header\n");
    w.write_all(header.as_bytes()).map_err(wrap)?;

    let put = |w: &mut BufWriter<File>, v: f64| w.write_all(&(v as f32).to_le_bytes());
    for i in 0..scene.count() {
        let mut row = |v: f64| put(&mut w, v);
        let p = scene.positions[i];
        row(p.x).and_then(|_| row(p.y)).and_then(|_| row(p.z)).map_err(wrap)?;
        for _ in 0..3 {
            row(0.0).map_err(wrap)?;
        }
        for &v in scene.sh_of(i) {
            row(v).map_err(wrap)?;
        }
        row(scene.raw_opacities[i]).map_err(wrap)?;
        for v in scene.log_scales[i].iter() {
            row(*v).map_err(wrap)?;
        }
        for v in scene.rotations[i] {
            row(v).map_err(wrap)?;
        }
        row(scene.tamper[i]).map_err(wrap)?;
    }
    w.flush().map_err(wrap)
}
