//! Minimal PLY point-cloud reader and writer.
//!
//! Reads ascii, binary_little_endian and binary_big_endian files whose
//! first element is `vertex` with `x`/`y`/`z` properties and optional
//! `red`/`green`/`blue` colors. Everything after the vertex data (faces
//! and other elements) is ignored. The writer emits ascii with uchar
//! colors, which the reader accepts back unchanged.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};

use crate::error::CoreError;

/// Points with optional per-point RGB colors in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<[f32; 3]>,
    pub colors: Option<Vec<[f32; 3]>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
    BinaryBe,
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
    fn parse(token: &str) -> Result<Self, CoreError> {
        Ok(match token {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            other => return Err(CoreError::Format(format!("unknown property type {other}"))),
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

    fn read(self, bytes: &[u8], big_endian: bool) -> f64 {
        match (self, big_endian) {
            (ScalarType::I8, _) => f64::from(bytes[0] as i8),
            (ScalarType::U8, _) => f64::from(bytes[0]),
            (ScalarType::I16, false) => f64::from(LittleEndian::read_i16(bytes)),
            (ScalarType::I16, true) => f64::from(BigEndian::read_i16(bytes)),
            (ScalarType::U16, false) => f64::from(LittleEndian::read_u16(bytes)),
            (ScalarType::U16, true) => f64::from(BigEndian::read_u16(bytes)),
            (ScalarType::I32, false) => f64::from(LittleEndian::read_i32(bytes)),
            (ScalarType::I32, true) => f64::from(BigEndian::read_i32(bytes)),
            (ScalarType::U32, false) => f64::from(LittleEndian::read_u32(bytes)),
            (ScalarType::U32, true) => f64::from(BigEndian::read_u32(bytes)),
            (ScalarType::F32, false) => f64::from(LittleEndian::read_f32(bytes)),
            (ScalarType::F32, true) => f64::from(BigEndian::read_f32(bytes)),
            (ScalarType::F64, false) => LittleEndian::read_f64(bytes),
            (ScalarType::F64, true) => BigEndian::read_f64(bytes),
        }
    }

    /// Scales a raw value to a [0, 1] color channel.
    fn to_color(self, v: f64) -> f32 {
        match self {
            ScalarType::U8 => (v / 255.0) as f32,
            ScalarType::U16 => (v / 65535.0) as f32,
            _ => v as f32,
        }
    }
}

struct VertexLayout {
    count: usize,
    properties: Vec<(String, ScalarType)>,
    xyz: [usize; 3],
    rgb: Option<[usize; 3]>,
}

fn parse_header<R: BufRead>(r: &mut R) -> Result<(Format, VertexLayout), CoreError> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != "ply" {
        return Err(CoreError::Format("not a PLY file (missing 'ply' magic)".into()));
    }
    let mut format = None;
    let mut vertex: Option<(usize, Vec<(String, ScalarType)>)> = None;
    let mut in_vertex = false;
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(CoreError::Format("unterminated PLY header".into()));
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["end_header"] => break,
            ["format", kind, "1.0"] => {
                format = Some(match *kind {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLe,
                    "binary_big_endian" => Format::BinaryBe,
                    other => {
                        return Err(CoreError::Format(format!("unsupported PLY format {other}")))
                    }
                });
            }
            ["element", "vertex", count] => {
                if vertex.is_some() {
                    return Err(CoreError::Format("duplicate vertex element".into()));
                }
                let count = count
                    .parse::<usize>()
                    .map_err(|_| CoreError::Format(format!("bad vertex count {count}")))?;
                vertex = Some((count, Vec::new()));
                in_vertex = true;
            }
            ["element", name, _] => {
                if vertex.is_none() {
                    return Err(CoreError::Format(format!(
                        "element '{name}' precedes the vertex element; unsupported layout"
                    )));
                }
                in_vertex = false;
            }
            ["property", "list", ..] => {
                if in_vertex {
                    return Err(CoreError::Format(
                        "list property inside the vertex element is unsupported".into(),
                    ));
                }
            }
            ["property", ty, name] => {
                if in_vertex {
                    let ty = ScalarType::parse(ty)?;
                    vertex
                        .as_mut()
                        .expect("in_vertex implies vertex element")
                        .1
                        .push((name.to_string(), ty));
                }
            }
            _ => {
                return Err(CoreError::Format(format!(
                    "unrecognized header line: {}",
                    line.trim_end()
                )))
            }
        }
    }
    let format = format.ok_or_else(|| CoreError::Format("PLY header missing format".into()))?;
    let (count, properties) =
        vertex.ok_or_else(|| CoreError::Format("PLY header missing vertex element".into()))?;
    let find = |name: &str| properties.iter().position(|(n, _)| n == name);
    let xyz = match (find("x"), find("y"), find("z")) {
        (Some(x), Some(y), Some(z)) => [x, y, z],
        _ => return Err(CoreError::Format("vertex element missing x/y/z properties".into())),
    };
    let rgb = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };
    Ok((
        format,
        VertexLayout {
            count,
            properties,
            xyz,
            rgb,
        },
    ))
}

/// Reads a point cloud from a PLY stream.
pub fn read_ply<R: BufRead>(mut r: R) -> Result<PointCloud, CoreError> {
    let (format, layout) = parse_header(&mut r)?;
    let mut positions = Vec::with_capacity(layout.count);
    let mut colors = layout.rgb.map(|_| Vec::with_capacity(layout.count));
    match format {
        Format::Ascii => {
            let mut line = String::new();
            for v in 0..layout.count {
                line.clear();
                loop {
                    if r.read_line(&mut line)? == 0 {
                        return Err(CoreError::Format(format!(
                            "PLY data ends after {v} of {} vertices",
                            layout.count
                        )));
                    }
                    if !line.trim().is_empty() {
                        break;
                    }
                    line.clear();
                }
                let values: Vec<f64> = line
                    .split_whitespace()
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| CoreError::Format(format!("bad vertex value '{t}'")))
                    })
                    .collect::<Result<_, _>>()?;
                if values.len() != layout.properties.len() {
                    return Err(CoreError::Format(format!(
                        "vertex {v}: expected {} values, got {}",
                        layout.properties.len(),
                        values.len()
                    )));
                }
                push_vertex(&layout, &values, &mut positions, &mut colors);
            }
        }
        Format::BinaryLe | Format::BinaryBe => {
            let big = format == Format::BinaryBe;
            let stride: usize = layout.properties.iter().map(|(_, t)| t.size()).sum();
            let mut buf = vec![0u8; stride];
            for v in 0..layout.count {
                r.read_exact(&mut buf).map_err(|_| {
                    CoreError::Format(format!(
                        "PLY data ends after {v} of {} vertices",
                        layout.count
                    ))
                })?;
                let mut offset = 0;
                let values: Vec<f64> = layout
                    .properties
                    .iter()
                    .map(|(_, t)| {
                        let v = t.read(&buf[offset..offset + t.size()], big);
                        offset += t.size();
                        v
                    })
                    .collect();
                push_vertex(&layout, &values, &mut positions, &mut colors);
            }
        }
    }
    Ok(PointCloud {
        positions,
        colors,
    })
}

fn push_vertex(
    layout: &VertexLayout,
    values: &[f64],
    positions: &mut Vec<[f32; 3]>,
    colors: &mut Option<Vec<[f32; 3]>>,
) {
    let [x, y, z] = layout.xyz;
    positions.push([values[x] as f32, values[y] as f32, values[z] as f32]);
    if let (Some(rgb), Some(out)) = (layout.rgb, colors.as_mut()) {
        let channel = |idx: usize| layout.properties[idx].1.to_color(values[idx]);
        out.push([channel(rgb[0]), channel(rgb[1]), channel(rgb[2])]);
    }
}

pub fn read_ply_file<P: AsRef<Path>>(path: P) -> Result<PointCloud, CoreError> {
    read_ply(BufReader::new(File::open(path)?))
}

/// Writes a point cloud as ascii PLY, with uchar colors when present.
pub fn write_ply<W: Write>(cloud: &PointCloud, mut w: W) -> Result<(), CoreError> {
    if let Some(colors) = &cloud.colors {
        if colors.len() != cloud.positions.len() {
            return Err(CoreError::ShapeMismatch(format!(
                "{} colors for {} points",
                colors.len(),
                cloud.positions.len()
            )));
        }
    }
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", cloud.positions.len())?;
    writeln!(w, "property float x")?;
    writeln!(w, "property float y")?;
    writeln!(w, "property float z")?;
    if cloud.colors.is_some() {
        writeln!(w, "property uchar red")?;
        writeln!(w, "property uchar green")?;
        writeln!(w, "property uchar blue")?;
    }
    writeln!(w, "end_header")?;
    for (idx, p) in cloud.positions.iter().enumerate() {
        write!(w, "{} {} {}", p[0], p[1], p[2])?;
        if let Some(colors) = &cloud.colors {
            let c = colors[idx];
            let to_byte = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            write!(w, " {} {} {}", to_byte(c[0]), to_byte(c[1]), to_byte(c[2]))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_ply_file<P: AsRef<Path>>(cloud: &PointCloud, path: P) -> Result<(), CoreError> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_ply(cloud, &mut w)?;
    w.flush()?;
    Ok(())
}
