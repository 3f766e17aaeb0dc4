//! Minimal PLY reader/writer for colored vertex clouds.
//!
//! Supported payloads are `ascii 1.0` and `binary_little_endian 1.0`.
//! Big-endian files are rejected. Only the `vertex` element is decoded;
//! scalar-only elements declared before it are skipped, anything after
//! it is ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::{Point, PointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn decode_le(self, b: &[u8]) -> f64 {
        match self {
            ScalarType::I8 => b[0] as i8 as f64,
            ScalarType::U8 => b[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar { ty: ScalarType, name: String },
    List { name: String },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug)]
struct Header {
    encoding: PlyEncoding,
    elements: Vec<Element>,
}

/// Loads a colored point cloud from a PLY file.
pub fn load_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_ply(BufReader::new(file), path)
}

/// Parses PLY data from `reader`; `path` is only used in error messages.
pub fn read_ply<R: BufRead>(mut reader: R, path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref().to_path_buf();
    let header = read_header(&mut reader, &path)?;

    let vertex_pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::PlyHeader {
            path: path.clone(),
            line: 0,
            message: "no vertex element declared".into(),
        })?;
    let vertex = &header.elements[vertex_pos];

    let mut layout = [usize::MAX; 6];
    for (i, prop) in vertex.properties.iter().enumerate() {
        let name = match prop {
            Property::Scalar { name, .. } => name.as_str(),
            Property::List { name } => {
                return Err(Error::PlyHeader {
                    path,
                    line: 0,
                    message: format!("list property `{name}` on vertex is not supported"),
                })
            }
        };
        let slot = match name {
            "x" => 0,
            "y" => 1,
            "z" => 2,
            "red" => 3,
            "green" => 4,
            "blue" => 5,
            _ => continue,
        };
        layout[slot] = i;
    }
    const NAMES: [&str; 6] = ["x", "y", "z", "red", "green", "blue"];
    for (slot, &idx) in layout.iter().enumerate() {
        if idx == usize::MAX {
            return Err(Error::PlyMissingProperty {
                path,
                kind: if slot < 3 { "coordinate" } else { "color" },
                name: NAMES[slot],
            });
        }
    }

    let values = match header.encoding {
        PlyEncoding::Ascii => read_ascii_vertices(&mut reader, &header, vertex_pos, &path)?,
        PlyEncoding::BinaryLittleEndian => read_binary_vertices(&mut reader, &header, vertex_pos, &path)?,
    };

    let width = vertex.properties.len();
    let mut points = Vec::with_capacity(vertex.count);
    for v in 0..vertex.count {
        let row = &values[v * width..(v + 1) * width];
        let position = [row[layout[0]], row[layout[1]], row[layout[2]]];
        let color = [row[layout[3]], row[layout[4]], row[layout[5]]];
        if position.iter().any(|c| !c.is_finite()) {
            return Err(Error::PlyPayload {
                path,
                vertex: v,
                message: format!("non-finite coordinate {position:?}"),
            });
        }
        if color.iter().any(|c| !(0.0..=255.0).contains(c)) {
            return Err(Error::PlyPayload {
                path,
                vertex: v,
                message: format!("color {color:?} outside [0, 255]"),
            });
        }
        points.push(Point { position, color });
    }
    Ok(PointCloud::new(points))
}

fn read_header<R: BufRead>(reader: &mut R, path: &Path) -> Result<Header> {
    let header_err = |line: usize, message: String| Error::PlyHeader {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut buf = String::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(|e| Error::io(path, e))?;
        line_no += 1;
        if n == 0 {
            return Err(header_err(line_no, "unexpected end of file before end_header".into()));
        }
        let line = buf.trim_end_matches(['\n', '\r']).trim();
        let mut tokens = line.split_whitespace();
        let keyword = tokens.next().unwrap_or("");
        if line_no == 1 {
            if keyword != "ply" {
                return Err(header_err(1, format!("expected `ply` magic, found `{line}`")));
            }
            continue;
        }
        match keyword {
            "" | "comment" | "obj_info" => {}
            "format" => {
                let fmt = tokens.next().unwrap_or("");
                let version = tokens.next().unwrap_or("");
                if version != "1.0" {
                    return Err(header_err(line_no, format!("unsupported format version `{version}`")));
                }
                encoding = Some(match fmt {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLittleEndian,
                    "binary_big_endian" => {
                        return Err(header_err(line_no, "big-endian payloads are not supported".into()))
                    }
                    other => return Err(header_err(line_no, format!("unknown format `{other}`"))),
                });
            }
            "element" => {
                let name = tokens.next();
                let count = tokens.next().and_then(|c| c.parse::<usize>().ok());
                match (name, count) {
                    (Some(name), Some(count)) => elements.push(Element {
                        name: name.to_string(),
                        count,
                        properties: Vec::new(),
                    }),
                    _ => return Err(header_err(line_no, format!("malformed element line `{line}`"))),
                }
            }
            "property" => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| header_err(line_no, "property before any element".into()))?;
                let parts: Vec<&str> = tokens.collect();
                let prop = match parts.as_slice() {
                    ["list", count_ty, item_ty, name] => {
                        if ScalarType::parse(count_ty).is_none() || ScalarType::parse(item_ty).is_none() {
                            return Err(header_err(line_no, format!("unknown list types in `{line}`")));
                        }
                        Property::List { name: name.to_string() }
                    }
                    [ty, name] => Property::Scalar {
                        ty: ScalarType::parse(ty)
                            .ok_or_else(|| header_err(line_no, format!("unknown property type `{ty}`")))?,
                        name: name.to_string(),
                    },
                    _ => return Err(header_err(line_no, format!("malformed property line `{line}`"))),
                };
                element.properties.push(prop);
            }
            "end_header" => break,
            other => return Err(header_err(line_no, format!("unexpected header keyword `{other}`"))),
        }
    }

    let encoding = encoding.ok_or_else(|| header_err(line_no, "missing format line".into()))?;
    Ok(Header { encoding, elements })
}

fn read_ascii_vertices<R: BufRead>(
    reader: &mut R,
    header: &Header,
    vertex_pos: usize,
    path: &PathBuf,
) -> Result<Vec<f64>> {
    let mut buf = String::new();
    let mut next_line = |buf: &mut String| -> Result<bool> {
        loop {
            buf.clear();
            let n = reader.read_line(buf).map_err(|e| Error::io(path, e))?;
            if n == 0 {
                return Ok(false);
            }
            if !buf.trim().is_empty() {
                return Ok(true);
            }
        }
    };

    for element in &header.elements[..vertex_pos] {
        for _ in 0..element.count {
            if !next_line(&mut buf)? {
                return Err(Error::PlyPayload {
                    path: path.clone(),
                    vertex: 0,
                    message: format!("truncated payload inside element `{}`", element.name),
                });
            }
        }
    }

    let vertex = &header.elements[vertex_pos];
    let width = vertex.properties.len();
    let mut values = Vec::with_capacity(vertex.count * width);
    for v in 0..vertex.count {
        if !next_line(&mut buf)? {
            return Err(Error::PlyPayload {
                path: path.clone(),
                vertex: v,
                message: format!("truncated payload: expected {} vertices", vertex.count),
            });
        }
        let before = values.len();
        for token in buf.split_whitespace() {
            let value: f64 = token.parse().map_err(|_| Error::PlyPayload {
                path: path.clone(),
                vertex: v,
                message: format!("cannot parse `{token}` as a number"),
            })?;
            values.push(value);
        }
        let got = values.len() - before;
        if got != width {
            return Err(Error::PlyPayload {
                path: path.clone(),
                vertex: v,
                message: format!("expected {width} values, found {got}"),
            });
        }
    }
    Ok(values)
}

fn read_binary_vertices<R: Read>(
    reader: &mut R,
    header: &Header,
    vertex_pos: usize,
    path: &PathBuf,
) -> Result<Vec<f64>> {
    for element in &header.elements[..vertex_pos] {
        let mut record = 0usize;
        for prop in &element.properties {
            match prop {
                Property::Scalar { ty, .. } => record += ty.size(),
                Property::List { name } => {
                    return Err(Error::PlyHeader {
                        path: path.clone(),
                        line: 0,
                        message: format!(
                            "list property `{name}` in element `{}` before vertex data",
                            element.name
                        ),
                    })
                }
            }
        }
        let skip = (record * element.count) as u64;
        let copied =
            std::io::copy(&mut reader.by_ref().take(skip), &mut std::io::sink()).map_err(|e| Error::io(path, e))?;
        if copied != skip {
            return Err(Error::PlyPayload {
                path: path.clone(),
                vertex: 0,
                message: format!("truncated payload inside element `{}`", element.name),
            });
        }
    }

    let vertex = &header.elements[vertex_pos];
    let types: Vec<ScalarType> = vertex
        .properties
        .iter()
        .map(|p| match p {
            Property::Scalar { ty, .. } => *ty,
            Property::List { .. } => unreachable!("list properties rejected earlier"),
        })
        .collect();
    let record: usize = types.iter().map(|t| t.size()).sum();
    let mut buf = vec![0u8; record];
    let mut values = Vec::with_capacity(vertex.count * types.len());
    for v in 0..vertex.count {
        reader.read_exact(&mut buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::PlyPayload {
                    path: path.clone(),
                    vertex: v,
                    message: format!("truncated payload: expected {} vertices", vertex.count),
                }
            } else {
                Error::io(path, e)
            }
        })?;
        let mut offset = 0;
        for ty in &types {
            values.push(ty.decode_le(&buf[offset..]));
            offset += ty.size();
        }
    }
    Ok(values)
}

/// Writes `cloud` to `path`, creating or truncating the file.
pub fn save_ply(cloud: &PointCloud, path: impl AsRef<Path>, encoding: PlyEncoding) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    write_ply(cloud, &mut writer, encoding).map_err(|e| Error::io(path, e))?;
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Serializes `cloud` as PLY. Coordinates are stored as `double`; colors as
/// `uchar` when every channel is an integer in [0, 255], otherwise as `double`.
pub fn write_ply<W: Write>(cloud: &PointCloud, writer: &mut W, encoding: PlyEncoding) -> std::io::Result<()> {
    let integral_colors = cloud
        .iter()
        .all(|p| p.color.iter().all(|&c| c.fract() == 0.0 && (0.0..=255.0).contains(&c)));
    let color_ty = if integral_colors { "uchar" } else { "double" };

    writeln!(writer, "ply")?;
    match encoding {
        PlyEncoding::Ascii => writeln!(writer, "format ascii 1.0")?,
        PlyEncoding::BinaryLittleEndian => writeln!(writer, "format binary_little_endian 1.0")?,
    }
    writeln!(writer, "element vertex {}", cloud.len())?;
    for axis in ["x", "y", "z"] {
        writeln!(writer, "property double {axis}")?;
    }
    for channel in ["red", "green", "blue"] {
        writeln!(writer, "property {color_ty} {channel}")?;
    }
    writeln!(writer, "end_header")?;

    match encoding {
        PlyEncoding::Ascii => {
            for p in cloud.iter() {
                // `{:?}` prints the shortest representation that round-trips exactly.
                let [x, y, z] = p.position;
                if integral_colors {
                    let [r, g, b] = p.color;
                    writeln!(writer, "{x:?} {y:?} {z:?} {} {} {}", r as u8, g as u8, b as u8)?;
                } else {
                    let [r, g, b] = p.color;
                    writeln!(writer, "{x:?} {y:?} {z:?} {r:?} {g:?} {b:?}")?;
                }
            }
        }
        PlyEncoding::BinaryLittleEndian => {
            for p in cloud.iter() {
                for c in p.position {
                    writer.write_all(&c.to_le_bytes())?;
                }
                for c in p.color {
                    if integral_colors {
                        writer.write_all(&[c as u8])?;
                    } else {
                        writer.write_all(&c.to_le_bytes())?;
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(text: &str) -> Result<PointCloud> {
        read_ply(Cursor::new(text.as_bytes()), "mem.ply")
    }

    #[test]
    fn single_point_ascii() {
        let cloud = parse(
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n\
             property float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\n\
             end_header\n0 0 0 255 0 0\n",
        )
        .unwrap();
        assert_eq!(cloud.len(), 1);
        assert_eq!(cloud.points()[0], Point::new([0.0; 3], [255.0, 0.0, 0.0]));
    }

    #[test]
    fn missing_color_is_reported() {
        let err = parse(
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n\
             property float z\nend_header\n0 0 0\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("missing color property"), "{err}");
    }

    #[test]
    fn big_endian_rejected() {
        let err = parse("ply\nformat binary_big_endian 1.0\nelement vertex 0\nend_header\n").unwrap_err();
        assert!(err.to_string().contains("big-endian"), "{err}");
    }

    #[test]
    fn truncated_ascii_names_vertex() {
        let err = parse(
            "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n\
             property float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\n\
             end_header\n0 0 0 1 2 3\n",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("vertex 1") && msg.contains("truncated"), "{msg}");
    }

    #[test]
    fn truncated_binary_names_vertex() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty float x\n\
property float y\nproperty float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
            .to_vec();
        bytes.extend_from_slice(&[0u8; 15]);
        bytes.extend_from_slice(&[0u8; 4]);
        let err = read_ply(Cursor::new(bytes), "mem.ply").unwrap_err();
        assert!(err.to_string().contains("vertex 1"), "{err}");
    }

    #[test]
    fn nan_coordinate_rejected() {
        let err = parse(
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nproperty double y\n\
             property double z\nproperty uint8 red\nproperty uint8 green\nproperty uint8 blue\n\
             end_header\nnan 0 0 1 2 3\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("non-finite"), "{err}");
    }

    #[test]
    fn malformed_header_reports_line() {
        let err = parse("ply\nformat ascii 1.0\nelement vertex\nend_header\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn skips_leading_elements_and_extra_properties() {
        let cloud = parse(
            "ply\nformat ascii 1.0\ncomment made by hand\nelement camera 1\nproperty float fx\n\
             element vertex 2\nproperty float x\nproperty float y\nproperty float z\n\
             property float nx\nproperty uchar red\nproperty uchar green\nproperty uchar blue\n\
             property uchar alpha\nelement face 1\nproperty list uchar int vertex_indices\n\
             end_header\n500\n1 2 3 0.5 10 20 30 255\n4 5 6 0.5 40 50 60 255\n3 0 1 1\n",
        )
        .unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.points()[1], Point::new([4.0, 5.0, 6.0], [40.0, 50.0, 60.0]));
    }

    #[test]
    fn binary_round_trip_three_points() {
        let cloud = PointCloud::new(vec![
            Point::new([0.1, -2.5, 1e-7], [1.0, 2.0, 3.0]),
            Point::new([1.0 / 3.0, 7.25, -0.0], [255.0, 0.0, 128.0]),
            Point::new([1e6, 2e-300, 3.5], [9.0, 8.0, 7.0]),
        ]);
        let mut bytes = Vec::new();
        write_ply(&cloud, &mut bytes, PlyEncoding::BinaryLittleEndian).unwrap();
        let back = read_ply(Cursor::new(bytes), "mem.ply").unwrap();
        assert_eq!(back, cloud);
    }

    #[test]
    fn fractional_colors_survive_round_trip() {
        let cloud = PointCloud::new(vec![Point::new([1.0, 2.0, 3.0], [0.5, 254.25, 17.125])]);
        for enc in [PlyEncoding::Ascii, PlyEncoding::BinaryLittleEndian] {
            let mut bytes = Vec::new();
            write_ply(&cloud, &mut bytes, enc).unwrap();
            assert_eq!(read_ply(Cursor::new(bytes), "mem.ply").unwrap(), cloud);
        }
    }

    #[test]
    fn out_of_range_integral_colors_are_not_truncated() {
        let cloud = PointCloud::new(vec![Point::new([1.0, 2.0, 3.0], [300.0, -1.0, 7.0])]);
        let mut bytes = Vec::new();
        write_ply(&cloud, &mut bytes, PlyEncoding::Ascii).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.contains("property double red"));
        assert!(text.ends_with("1.0 2.0 3.0 300.0 -1.0 7.0\n"), "{text}");
    }
}
