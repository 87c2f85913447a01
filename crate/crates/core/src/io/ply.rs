//! Binary little-endian PLY in the community splat-checkpoint layout.
//!
//! Vertex properties, in order: x y z, nx ny nz (zeros, ignored on read),
//! f_dc_0..2, f_rest_0..44 (degree 3 only, channel-major: f_rest_{c*15+b}),
//! opacity (logit), scale_0..2 (log), rot_0..3 (quaternion w x y z).
//! All float32.

use std::fs;
use std::path::Path;

use nalgebra::{Vector3, Vector4};

use crate::error::{Error, Result};
use crate::scene::{GaussianCloud, GaussianSplat};
use crate::sh;

const REST_COUNT: usize = 45;

fn canonical_properties(degree: u8) -> Vec<String> {
    let mut props: Vec<String> =
        ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    if degree == 3 {
        for i in 0..REST_COUNT {
            props.push(format!("f_rest_{i}"));
        }
    }
    props.extend(
        ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
            .iter()
            .map(|s| s.to_string()),
    );
    props
}

pub fn write_ply(path: &Path, cloud: &GaussianCloud) -> Result<()> {
    let degree = cloud.sh_degree();
    let props = canonical_properties(degree);
    let mut out = String::from("ply\nformat binary_little_endian 1.0\n");
    out.push_str(&format!("element vertex {}\n", cloud.len()));
    for p in &props {
        out.push_str(&format!("property float {p}\n"));
    }
    out.push_str("end_header\n");
    let mut bytes = out.into_bytes();
    bytes.reserve(cloud.len() * props.len() * 4);

    let push = |bytes: &mut Vec<u8>, v: f64| bytes.extend_from_slice(&(v as f32).to_le_bytes());
    for s in cloud.splats() {
        for k in 0..3 {
            push(&mut bytes, s.position[k]);
        }
        for _ in 0..3 {
            push(&mut bytes, 0.0); // normals
        }
        for c in 0..3 {
            push(&mut bytes, s.sh_coeffs[0][c]);
        }
        if degree == 3 {
            for c in 0..3 {
                for b in 1..16 {
                    push(&mut bytes, s.sh_coeffs[b][c]);
                }
            }
        }
        push(&mut bytes, s.logit_opacity);
        for k in 0..3 {
            push(&mut bytes, s.log_scale[k]);
        }
        for k in 0..4 {
            push(&mut bytes, s.rotation[k]);
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Size in bytes of a scalar PLY property type, or None for unknown/list types.
fn type_size(name: &str) -> Option<usize> {
    match name {
        "char" | "int8" | "uchar" | "uint8" => Some(1),
        "short" | "int16" | "ushort" | "uint16" => Some(2),
        "int" | "int32" | "uint" | "uint32" | "float" | "float32" => Some(4),
        "double" | "float64" => Some(8),
        _ => None,
    }
}

pub(crate) struct VertexTable {
    pub count: usize,
    /// (name, type, byte offset within one vertex record).
    pub properties: Vec<(String, String, usize)>,
    pub stride: usize,
    pub payload_offset: usize,
    pub data: Vec<u8>,
}

impl VertexTable {
    pub fn offset_of(&self, name: &str) -> Option<(usize, &str)> {
        self.properties
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, ty, off)| (*off, ty.as_str()))
    }

    pub fn require_float(&self, path: &Path, name: &str) -> Result<usize> {
        match self.offset_of(name) {
            Some((off, "float" | "float32")) => Ok(off),
            Some((_, ty)) => Err(Error::format(
                path,
                format!("property `{name}` has type {ty}, expected float"),
            )),
            None => Err(Error::format(path, format!("missing property `{name}`"))),
        }
    }

    pub fn f32_at(&self, vertex: usize, offset: usize) -> f64 {
        let i = self.payload_offset + vertex * self.stride + offset;
        f32::from_le_bytes(self.data[i..i + 4].try_into().unwrap()) as f64
    }

    pub fn u8_at(&self, vertex: usize, offset: usize) -> u8 {
        self.data[self.payload_offset + vertex * self.stride + offset]
    }
}

pub(crate) fn parse_vertex_table(path: &Path) -> Result<VertexTable> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |d: String| Error::format(path, d);

    let header_end = data
        .windows(11)
        .position(|w| w == b"end_header\n")
        .ok_or_else(|| fail("no end_header line".into()))?
        + 11;
    let header = std::str::from_utf8(&data[..header_end])
        .map_err(|_| fail("non-utf8 header".into()))?;

    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(fail("bad magic, expected `ply`".into()));
    }
    let mut count: Option<usize> = None;
    let mut properties: Vec<(String, String, usize)> = Vec::new();
    let mut stride = 0usize;
    let mut in_vertex_element = false;
    let mut format_seen = false;
    for line in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["format", fmt, _version] => {
                if *fmt != "binary_little_endian" {
                    return Err(fail(format!("format {fmt} not supported, need binary_little_endian")));
                }
                format_seen = true;
            }
            ["comment", ..] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse().map_err(|_| fail("bad vertex count".into()))?);
                in_vertex_element = true;
            }
            ["element", _, _] => in_vertex_element = false,
            ["property", "list", ..] if in_vertex_element => {
                return Err(fail("list properties on vertex element not supported".into()));
            }
            ["property", ty, name] if in_vertex_element => {
                let size = type_size(ty)
                    .ok_or_else(|| fail(format!("unknown property type {ty}")))?;
                properties.push((name.to_string(), ty.to_string(), stride));
                stride += size;
            }
            ["property", ..] => {}
            ["end_header"] => break,
            _ => return Err(fail(format!("unrecognized header line `{line}`"))),
        }
    }
    if !format_seen {
        return Err(fail("missing format line".into()));
    }
    let count = count.ok_or_else(|| fail("missing `element vertex`".into()))?;
    let expect = count * stride;
    let have = data.len() - header_end;
    if have < expect {
        return Err(fail(format!(
            "truncated payload at offset {}: have {have} bytes, need {expect}",
            header_end + have
        )));
    }
    Ok(VertexTable { count, properties, stride, payload_offset: header_end, data })
}

pub fn read_ply(path: &Path) -> Result<GaussianCloud> {
    let table = parse_vertex_table(path)?;

    let rest_present = (0..REST_COUNT)
        .filter(|i| table.offset_of(&format!("f_rest_{i}")).is_some())
        .count();
    let degree = match rest_present {
        0 => 0u8,
        REST_COUNT => 3u8,
        n => {
            return Err(Error::format(
                path,
                format!("found {n} f_rest properties, expected 0 or {REST_COUNT}"),
            ))
        }
    };

    let pos_off = [
        table.require_float(path, "x")?,
        table.require_float(path, "y")?,
        table.require_float(path, "z")?,
    ];
    let dc_off = [
        table.require_float(path, "f_dc_0")?,
        table.require_float(path, "f_dc_1")?,
        table.require_float(path, "f_dc_2")?,
    ];
    let mut rest_off = Vec::with_capacity(REST_COUNT);
    if degree == 3 {
        for i in 0..REST_COUNT {
            rest_off.push(table.require_float(path, &format!("f_rest_{i}"))?);
        }
    }
    let opacity_off = table.require_float(path, "opacity")?;
    let scale_off = [
        table.require_float(path, "scale_0")?,
        table.require_float(path, "scale_1")?,
        table.require_float(path, "scale_2")?,
    ];
    let rot_off = [
        table.require_float(path, "rot_0")?,
        table.require_float(path, "rot_1")?,
        table.require_float(path, "rot_2")?,
        table.require_float(path, "rot_3")?,
    ];

    let n_coeffs = sh::basis_len(degree);
    let mut splats = Vec::with_capacity(table.count);
    for v in 0..table.count {
        let position = Vector3::new(
            table.f32_at(v, pos_off[0]),
            table.f32_at(v, pos_off[1]),
            table.f32_at(v, pos_off[2]),
        );
        let mut sh_coeffs = vec![Vector3::zeros(); n_coeffs];
        sh_coeffs[0] = Vector3::new(
            table.f32_at(v, dc_off[0]),
            table.f32_at(v, dc_off[1]),
            table.f32_at(v, dc_off[2]),
        );
        if degree == 3 {
            for c in 0..3 {
                for b in 1..16 {
                    sh_coeffs[b][c] = table.f32_at(v, rest_off[c * 15 + (b - 1)]);
                }
            }
        }
        let log_scale = Vector3::new(
            table.f32_at(v, scale_off[0]),
            table.f32_at(v, scale_off[1]),
            table.f32_at(v, scale_off[2]),
        );
        let rotation = Vector4::new(
            table.f32_at(v, rot_off[0]),
            table.f32_at(v, rot_off[1]),
            table.f32_at(v, rot_off[2]),
            table.f32_at(v, rot_off[3]),
        );
        let splat = GaussianSplat::from_raw(
            position,
            rotation,
            log_scale,
            table.f32_at(v, opacity_off),
            sh_coeffs,
        )
        .map_err(|e| Error::format(path, format!("vertex {v}: {e}")))?;
        splats.push(splat);
    }
    GaussianCloud::new(splats, degree)
}

/// Positions with per-point colors, the initialization input for scene fitting.
#[derive(Debug, Clone)]
pub struct ColoredPointCloud {
    pub positions: Vec<Vector3<f64>>,
    pub colors: Vec<Vector3<f64>>,
}

impl ColoredPointCloud {
    pub fn centroid(&self) -> Vector3<f64> {
        if self.positions.is_empty() {
            return Vector3::zeros();
        }
        self.positions.iter().sum::<Vector3<f64>>() / self.positions.len() as f64
    }
}

/// Read a point cloud from a PLY file. Colors come from uchar red/green/blue
/// when present, from the splat DC color when the file is a splat checkpoint,
/// and default to mid gray otherwise.
pub fn read_point_cloud(path: &Path) -> Result<ColoredPointCloud> {
    let table = parse_vertex_table(path)?;
    let pos_off = [
        table.require_float(path, "x")?,
        table.require_float(path, "y")?,
        table.require_float(path, "z")?,
    ];

    enum ColorSource {
        Uchar([usize; 3]),
        ShDc([usize; 3]),
        Gray,
    }
    let color = match (
        table.offset_of("red"),
        table.offset_of("green"),
        table.offset_of("blue"),
    ) {
        (Some((r, "uchar" | "uint8")), Some((g, "uchar" | "uint8")), Some((b, "uchar" | "uint8"))) => {
            ColorSource::Uchar([r, g, b])
        }
        _ => match (table.offset_of("f_dc_0"), table.offset_of("f_dc_1"), table.offset_of("f_dc_2")) {
            (Some((r, "float")), Some((g, "float")), Some((b, "float"))) => {
                ColorSource::ShDc([r, g, b])
            }
            _ => ColorSource::Gray,
        },
    };

    let mut positions = Vec::with_capacity(table.count);
    let mut colors = Vec::with_capacity(table.count);
    for v in 0..table.count {
        positions.push(Vector3::new(
            table.f32_at(v, pos_off[0]),
            table.f32_at(v, pos_off[1]),
            table.f32_at(v, pos_off[2]),
        ));
        let c = match &color {
            ColorSource::Uchar(off) => Vector3::new(
                table.u8_at(v, off[0]) as f64 / 255.0,
                table.u8_at(v, off[1]) as f64 / 255.0,
                table.u8_at(v, off[2]) as f64 / 255.0,
            ),
            ColorSource::ShDc(off) => Vector3::new(
                (0.5 + sh::SH_C0 * table.f32_at(v, off[0])).clamp(0.0, 1.0),
                (0.5 + sh::SH_C0 * table.f32_at(v, off[1])).clamp(0.0, 1.0),
                (0.5 + sh::SH_C0 * table.f32_at(v, off[2])).clamp(0.0, 1.0),
            ),
            ColorSource::Gray => Vector3::repeat(0.5),
        };
        colors.push(c);
    }
    Ok(ColoredPointCloud { positions, colors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::random_cloud;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn round_trip_degree0_is_bit_exact() {
        let dir = tmp();
        let a = dir.path().join("a.ply");
        let b = dir.path().join("b.ply");
        let cloud = random_cloud(100, 0, 42);
        write_ply(&a, &cloud).unwrap();
        let back = read_ply(&a).unwrap();
        assert_eq!(back.len(), 100);
        assert_eq!(back.sh_degree(), 0);
        write_ply(&b, &back).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        for (s, t) in cloud.splats().iter().zip(back.splats()) {
            for k in 0..3 {
                assert_eq!(s.position[k] as f32, t.position[k] as f32);
                assert_eq!(s.log_scale[k] as f32, t.log_scale[k] as f32);
            }
            for k in 0..4 {
                assert_eq!(s.rotation[k] as f32, t.rotation[k] as f32);
            }
            assert_eq!(s.logit_opacity as f32, t.logit_opacity as f32);
        }
    }

    #[test]
    fn round_trip_degree3_keeps_band_layout() {
        let dir = tmp();
        let a = dir.path().join("a.ply");
        let cloud = random_cloud(17, 3, 7);
        write_ply(&a, &cloud).unwrap();
        let back = read_ply(&a).unwrap();
        assert_eq!(back.sh_degree(), 3);
        for (s, t) in cloud.splats().iter().zip(back.splats()) {
            for b in 0..16 {
                for c in 0..3 {
                    assert_eq!(s.sh_coeffs[b][c] as f32, t.sh_coeffs[b][c] as f32);
                }
            }
        }
        let b = dir.path().join("b.ply");
        write_ply(&b, &back).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn missing_opacity_is_named_in_the_error() {
        let dir = tmp();
        let path = dir.path().join("noop.ply");
        let header = "ply\nformat binary_little_endian 1.0\nelement vertex 1\n\
            property float x\nproperty float y\nproperty float z\n\
            property float f_dc_0\nproperty float f_dc_1\nproperty float f_dc_2\n\
            property float scale_0\nproperty float scale_1\nproperty float scale_2\n\
            property float rot_0\nproperty float rot_1\nproperty float rot_2\nproperty float rot_3\n\
            end_header\n";
        let mut bytes = header.as_bytes().to_vec();
        bytes.extend_from_slice(&[0u8; 13 * 4]);
        std::fs::write(&path, bytes).unwrap();
        let err = read_ply(&path).unwrap_err();
        assert!(err.to_string().contains("`opacity`"), "{err}");
    }

    #[test]
    fn ascii_ply_is_rejected() {
        let dir = tmp();
        let path = dir.path().join("ascii.ply");
        std::fs::write(&path, "ply\nformat ascii 1.0\nelement vertex 0\nend_header\n").unwrap();
        let err = read_ply(&path).unwrap_err();
        assert!(err.to_string().contains("binary_little_endian"), "{err}");
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let dir = tmp();
        let a = dir.path().join("a.ply");
        let cloud = random_cloud(3, 0, 1);
        write_ply(&a, &cloud).unwrap();
        let mut bytes = std::fs::read(&a).unwrap();
        bytes.truncate(bytes.len() - 5);
        std::fs::write(&a, &bytes).unwrap();
        let err = read_ply(&a).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn point_cloud_reads_uchar_colors() {
        let dir = tmp();
        let path = dir.path().join("pts.ply");
        let header = "ply\nformat binary_little_endian 1.0\nelement vertex 2\n\
            property float x\nproperty float y\nproperty float z\n\
            property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
        let mut bytes = header.as_bytes().to_vec();
        for (p, c) in [([0.0f32, 1.0, 2.0], [255u8, 0, 0]), ([3.0, 4.0, 5.0], [0, 255, 0])] {
            for v in p {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            bytes.extend_from_slice(&c);
        }
        std::fs::write(&path, bytes).unwrap();
        let pc = read_point_cloud(&path).unwrap();
        assert_eq!(pc.positions.len(), 2);
        assert_eq!(pc.colors[0], Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(pc.positions[1], Vector3::new(3.0, 4.0, 5.0));
    }

    #[test]
    fn splat_checkpoint_doubles_as_point_cloud() {
        let dir = tmp();
        let path = dir.path().join("s.ply");
        let cloud = random_cloud(5, 0, 3);
        write_ply(&path, &cloud).unwrap();
        let pc = read_point_cloud(&path).unwrap();
        assert_eq!(pc.positions.len(), 5);
        for (s, c) in cloud.splats().iter().zip(&pc.colors) {
            let expect = crate::scene::sh_to_rgb(
                &[Vector3::new(
                    s.sh_coeffs[0][0] as f32 as f64,
                    s.sh_coeffs[0][1] as f32 as f64,
                    s.sh_coeffs[0][2] as f32 as f64,
                )],
                Vector3::new(0.0, 0.0, 1.0),
            );
            for k in 0..3 {
                assert!((expect[k] - c[k]).abs() < 1e-12);
            }
        }
    }
}
