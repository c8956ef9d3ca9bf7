//! Flat binary dataset container plus a human-readable joint sidecar CSV.
//!
//! Layout: magic "FPDS", u32 version, u32 height, width, joints, n, then
//! per sample: image (h*w f64 LE), public image (h*w f64 LE), joints
//! (j pairs of f64 LE x, y).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::KeypointSample;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FPDS";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub height: usize,
    pub width: usize,
    pub joints: usize,
    pub n: usize,
}

/// Writes the container to `path` and the joint coordinates to a `.csv`
/// sidecar next to it.
pub fn write_dataset(path: &Path, samples: &[KeypointSample], header: DatasetHeader) -> Result<()> {
    if samples.len() != header.n {
        return Err(Error::Contract(format!(
            "header says {} samples, got {}",
            header.n,
            samples.len()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    for v in [VERSION, header.height as u32, header.width as u32, header.joints as u32, header.n as u32]
    {
        w.write_all(&v.to_le_bytes())?;
    }
    let pixels = header.height * header.width;
    for (i, s) in samples.iter().enumerate() {
        if s.image.len() != pixels || s.public_image.len() != pixels || s.joints.len() != header.joints
        {
            return Err(Error::Contract(format!("sample {i} does not match the header shape")));
        }
        for &v in &s.image {
            w.write_all(&v.to_le_bytes())?;
        }
        for &v in &s.public_image {
            w.write_all(&v.to_le_bytes())?;
        }
        for &(x, y) in &s.joints {
            w.write_all(&x.to_le_bytes())?;
            w.write_all(&y.to_le_bytes())?;
        }
    }
    w.flush()?;

    let sidecar = path.with_extension("joints.csv");
    let mut c = BufWriter::new(File::create(sidecar)?);
    writeln!(c, "sample,joint,x,y")?;
    for (i, s) in samples.iter().enumerate() {
        for (j, &(x, y)) in s.joints.iter().enumerate() {
            writeln!(c, "{i},{j},{x:.17e},{y:.17e}")?;
        }
    }
    c.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<KeypointSample>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic; not a dataset container".into()));
    }
    let mut u32buf = [0u8; 4];
    let mut read_u32 = |r: &mut BufReader<File>| -> Result<u32> {
        r.read_exact(&mut u32buf)?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let height = read_u32(&mut r)? as usize;
    let width = read_u32(&mut r)? as usize;
    let joints = read_u32(&mut r)? as usize;
    let n = read_u32(&mut r)? as usize;
    let header = DatasetHeader { height, width, joints, n };

    let pixels = height * width;
    let mut f64buf = [0u8; 8];
    let mut read_f64s = |r: &mut BufReader<File>, count: usize| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut f64buf)?;
            out.push(f64::from_le_bytes(f64buf));
        }
        Ok(out)
    };
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let image = read_f64s(&mut r, pixels)?;
        let public_image = read_f64s(&mut r, pixels)?;
        let flat = read_f64s(&mut r, joints * 2)?;
        let joints_vec = flat.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        samples.push(KeypointSample { image, public_image, joints: joints_vec });
    }
    Ok((header, samples))
}
