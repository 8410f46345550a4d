//! PLY object clouds.
//!
//! Reads ASCII and binary little-endian files. Only the `vertex` element is
//! interpreted (`x`, `y`, `z` as `float`/`double`, optional `red`, `green`,
//! `blue` as `uchar`); other properties and elements are skipped.

use super::{BundleError, ObjectCloud};
use crate::geom::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Result<Self, BundleError> {
        Ok(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(BundleError::Schema(format!("unknown PLY type {other:?}"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum PropertyKind {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    kind: PropertyKind,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    encoding: PlyEncoding,
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, BundleError> {
    let mut offset = 0;
    let mut next_line = || -> Result<String, BundleError> {
        let rest = &bytes[offset..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| BundleError::Format("PLY header not terminated".into()))?;
        offset += end + 1;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| BundleError::Format("non-UTF-8 PLY header".into()))?;
        Ok(line.trim_end_matches('\r').to_string())
    };

    if next_line()? != "ply" {
        return Err(BundleError::Format("missing 'ply' magic".into()));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let line = next_line()?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _version] => {
                encoding = Some(match *fmt {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLittleEndian,
                    "binary_big_endian" => {
                        return Err(BundleError::Unsupported("big-endian PLY".into()))
                    }
                    other => return Err(BundleError::Format(format!("unknown PLY format {other:?}"))),
                });
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| BundleError::Format(format!("bad element count {count:?}")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", count, item, name] => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| BundleError::Format("property before element".into()))?;
                element.properties.push(Property {
                    name: name.to_string(),
                    kind: PropertyKind::List {
                        count: Scalar::parse(count)?,
                        item: Scalar::parse(item)?,
                    },
                });
            }
            ["property", ty, name] => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| BundleError::Format("property before element".into()))?;
                element.properties.push(Property {
                    name: name.to_string(),
                    kind: PropertyKind::Scalar(Scalar::parse(ty)?),
                });
            }
            _ => return Err(BundleError::Format(format!("unrecognized PLY header line {line:?}"))),
        }
    }
    let encoding = encoding.ok_or_else(|| BundleError::Format("PLY header lacks format line".into()))?;
    Ok(Header {
        encoding,
        elements,
        body_offset: offset,
    })
}

struct VertexLayout {
    xyz: [usize; 3],
    rgb: Option<[usize; 3]>,
}

fn vertex_layout(element: &Element) -> Result<VertexLayout, BundleError> {
    let find = |name: &str| element.properties.iter().position(|p| p.name == name);
    let coord = |name: &str| -> Result<usize, BundleError> {
        let i = find(name).ok_or_else(|| BundleError::Schema(format!("vertex lacks '{name}'")))?;
        match element.properties[i].kind {
            PropertyKind::Scalar(Scalar::F32 | Scalar::F64) => Ok(i),
            _ => Err(BundleError::Schema(format!("vertex '{name}' must be float or double"))),
        }
    };
    let xyz = [coord("x")?, coord("y")?, coord("z")?];
    let rgb = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b)) => {
            for i in [r, g, b] {
                if !matches!(element.properties[i].kind, PropertyKind::Scalar(Scalar::U8)) {
                    return Err(BundleError::Schema("vertex colors must be uchar".into()));
                }
            }
            Some([r, g, b])
        }
        _ => None,
    };
    Ok(VertexLayout { xyz, rgb })
}

pub fn parse_ply(bytes: &[u8]) -> Result<ObjectCloud, BundleError> {
    let header = parse_header(bytes)?;
    let vertex_idx = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| BundleError::Schema("PLY has no vertex element".into()))?;
    let layout = vertex_layout(&header.elements[vertex_idx])?;
    let body = &bytes[header.body_offset..];
    let rows = match header.encoding {
        PlyEncoding::Ascii => read_ascii(body, &header.elements, vertex_idx)?,
        PlyEncoding::BinaryLittleEndian => read_binary(body, &header.elements, vertex_idx)?,
    };

    let mut points = Vec::with_capacity(rows.len());
    let mut colors = layout.rgb.map(|_| Vec::with_capacity(rows.len()));
    for (i, row) in rows.iter().enumerate() {
        let p = Vec3::new(row[layout.xyz[0]], row[layout.xyz[1]], row[layout.xyz[2]]);
        if !p.iter().all(|c| c.is_finite()) {
            return Err(BundleError::Schema(format!("vertex {i} is not finite")));
        }
        points.push(p);
        if let (Some(rgb), Some(colors)) = (layout.rgb, colors.as_mut()) {
            colors.push(rgb.map(|k| row[k] as u8));
        }
    }
    Ok(ObjectCloud { points, colors })
}

/// Returns scalar property values of each vertex row, list properties as 0.
fn read_ascii(body: &[u8], elements: &[Element], vertex_idx: usize) -> Result<Vec<Vec<f64>>, BundleError> {
    let text = std::str::from_utf8(body).map_err(|_| BundleError::Format("non-UTF-8 ASCII PLY body".into()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    for element in &elements[..vertex_idx] {
        for _ in 0..element.count {
            lines
                .next()
                .ok_or_else(|| BundleError::Format(format!("truncated '{}' element", element.name)))?;
        }
    }
    let element = &elements[vertex_idx];
    let mut rows = Vec::with_capacity(element.count);
    for i in 0..element.count {
        let line = lines
            .next()
            .ok_or_else(|| BundleError::Format(format!("expected {} vertices, got {i}", element.count)))?;
        let mut tokens = line.split_whitespace();
        let mut next = |scalar: Scalar| -> Result<f64, BundleError> {
            let tok = tokens
                .next()
                .ok_or_else(|| BundleError::Format(format!("vertex {i}: too few values")))?;
            let bad = || BundleError::Format(format!("vertex {i}: bad number {tok:?}"));
            // Single-precision text must round through f32 to land on the
            // value a binary file would hold.
            match scalar {
                Scalar::F32 => tok.parse::<f32>().map(f64::from).map_err(|_| bad()),
                _ => tok.parse::<f64>().map_err(|_| bad()),
            }
        };
        let mut row = Vec::with_capacity(element.properties.len());
        for prop in &element.properties {
            match prop.kind {
                PropertyKind::Scalar(scalar) => row.push(next(scalar)?),
                PropertyKind::List { count, item } => {
                    let n = next(count)? as usize;
                    for _ in 0..n {
                        next(item)?;
                    }
                    row.push(0.0);
                }
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

fn read_binary(body: &[u8], elements: &[Element], vertex_idx: usize) -> Result<Vec<Vec<f64>>, BundleError> {
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8], BundleError> {
        let slice = body
            .get(pos..pos + n)
            .ok_or_else(|| BundleError::Format("truncated binary PLY body".into()))?;
        pos += n;
        Ok(slice)
    };
    let mut rows = Vec::new();
    for (ei, element) in elements.iter().enumerate().take(vertex_idx + 1) {
        for _ in 0..element.count {
            let mut row = Vec::with_capacity(element.properties.len());
            for prop in &element.properties {
                match prop.kind {
                    PropertyKind::Scalar(s) => row.push(s.read_le(take(s.size())?)),
                    PropertyKind::List { count, item } => {
                        let n = count.read_le(take(count.size())?);
                        if !(n >= 0.0) {
                            return Err(BundleError::Format("negative PLY list length".into()));
                        }
                        take(n as usize * item.size())?;
                        row.push(0.0);
                    }
                }
            }
            if ei == vertex_idx {
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

/// Serializes a cloud. Coordinates are written as `float` when every value is
/// exactly representable in single precision, otherwise as `double`, so that
/// parsing the output reproduces the cloud exactly.
pub fn write_ply(cloud: &ObjectCloud, encoding: PlyEncoding) -> Vec<u8> {
    let single = cloud
        .points
        .iter()
        .flat_map(|p| p.iter())
        .all(|&c| (c as f32) as f64 == c);
    let ty = if single { "float" } else { "double" };
    let mut header = String::from("ply\n");
    header.push_str(match encoding {
        PlyEncoding::Ascii => "format ascii 1.0\n",
        PlyEncoding::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    header.push_str(&format!("element vertex {}\n", cloud.points.len()));
    for axis in ["x", "y", "z"] {
        header.push_str(&format!("property {ty} {axis}\n"));
    }
    if cloud.colors.is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    header.push_str("end_header\n");

    let mut out = header.into_bytes();
    for (i, p) in cloud.points.iter().enumerate() {
        let color = cloud.colors.as_ref().map(|c| c[i]);
        match encoding {
            PlyEncoding::Ascii => {
                // Display for floats prints the shortest exactly-round-tripping form.
                let line = if single {
                    format!("{} {} {}", p.x as f32, p.y as f32, p.z as f32)
                } else {
                    format!("{} {} {}", p.x, p.y, p.z)
                };
                out.extend_from_slice(line.as_bytes());
                if let Some([r, g, b]) = color {
                    out.extend_from_slice(format!(" {r} {g} {b}").as_bytes());
                }
                out.push(b'\n');
            }
            PlyEncoding::BinaryLittleEndian => {
                for c in p.iter() {
                    if single {
                        out.extend_from_slice(&(*c as f32).to_le_bytes());
                    } else {
                        out.extend_from_slice(&c.to_le_bytes());
                    }
                }
                if let Some(rgb) = color {
                    out.extend_from_slice(&rgb);
                }
            }
        }
    }
    out
}
