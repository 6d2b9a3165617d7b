//! Wavefront OBJ subset: `v`, `vn`, `f` and `#` comments.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Mesh, MeshError};
use crate::scalar::Real;

// statements that carry no geometry we use
const IGNORED: &[&str] = &["vn", "vt", "o", "g", "s", "usemtl", "mtllib"];

pub fn load_obj<T: Real>(path: impl AsRef<Path>) -> Result<Mesh<T>, MeshError> {
    parse_obj(&fs::read_to_string(path)?)
}

pub fn parse_obj<T: Real>(text: &str) -> Result<Mesh<T>, MeshError> {
    let mut vertices = Vec::new();
    // (line, raw indices resolved to 0-based signed values)
    let mut faces: Vec<(usize, [i64; 3], [i64; 3])> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let keyword = tokens.next().unwrap();
        match keyword {
            "v" => {
                let coords: Vec<&str> = tokens.collect();
                if coords.len() < 3 || coords.len() > 4 {
                    return Err(parse_err(line, "vertex needs 3 coordinates"));
                }
                let mut p = [T::zero(); 3];
                for (k, c) in coords.iter().take(3).enumerate() {
                    let v: f64 = c
                        .parse()
                        .map_err(|_| parse_err(line, &format!("bad coordinate `{c}`")))?;
                    p[k] = T::lit(v);
                }
                vertices.push(p);
            }
            "f" => {
                let mut corners = Vec::new();
                let mut raw_corners = Vec::new();
                for tok in tokens {
                    let first = tok.split('/').next().unwrap_or("");
                    let idx: i64 = first
                        .parse()
                        .map_err(|_| parse_err(line, &format!("bad face index `{tok}`")))?;
                    let resolved = if idx < 0 { vertices.len() as i64 + idx } else { idx - 1 };
                    if resolved < 0 {
                        return Err(MeshError::NonPositiveIndex { line, index: idx });
                    }
                    corners.push(resolved);
                    raw_corners.push(idx);
                }
                if corners.len() < 3 {
                    return Err(parse_err(line, "face needs at least 3 vertices"));
                }
                for k in 1..corners.len() - 1 {
                    faces.push((
                        line,
                        [corners[0], corners[k], corners[k + 1]],
                        [raw_corners[0], raw_corners[k], raw_corners[k + 1]],
                    ));
                }
            }
            k if IGNORED.contains(&k) => {}
            other => return Err(parse_err(line, &format!("unsupported statement `{other}`"))),
        }
    }

    let count = vertices.len();
    let mut tris = Vec::with_capacity(faces.len());
    for (line, f, raw) in faces {
        for k in 0..3 {
            if f[k] as usize >= count {
                return Err(MeshError::ObjIndexOutOfRange { line, index: raw[k], count });
            }
        }
        tris.push(f.map(|i| i as usize));
    }
    Mesh::new(vertices, tris)
}

/// Renders the mesh as OBJ text with 9 significant digits per coordinate.
pub fn write_obj<T: Real>(mesh: &Mesh<T>) -> String {
    let mut out = String::with_capacity(mesh.vertex_count() * 48 + mesh.face_count() * 24);
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {:.8e} {:.8e} {:.8e}", v[0].as_f64(), v[1].as_f64(), v[2].as_f64());
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

pub fn save_obj<T: Real>(mesh: &Mesh<T>, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let mut file = fs::File::create(path)?;
    file.write_all(write_obj(mesh).as_bytes())?;
    Ok(())
}

fn parse_err(line: usize, message: &str) -> MeshError {
    MeshError::Parse { line, message: message.to_string() }
}
