//! Binary region-feature container.
//!
//! ```text
//! "FGPF" | version u16 | samples u32 | R u32 | d_f u32
//! per sample: class id u32 | R·d_f f32
//! ```
//! All integers and floats little-endian. The payload length must match the
//! header exactly.

use std::fs;
use std::path::Path;

use crate::attention::RegionFeatureGrid;
use crate::error::{FgpError, Result};
use crate::tensor::Matrix;

pub const FEATURE_MAGIC: &[u8; 4] = b"FGPF";
pub const FEATURE_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 4;

/// A region grid with its class id from the class table.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGrid {
    pub class_id: u32,
    pub grid: RegionFeatureGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionFeatureSet {
    pub regions: usize,
    pub feature_dim: usize,
    pub samples: Vec<LabeledGrid>,
}

pub fn encode_region_features(set: &RegionFeatureSet) -> Result<Vec<u8>> {
    let per = set.regions * set.feature_dim;
    let mut out = Vec::with_capacity(HEADER_LEN + set.samples.len() * (4 + 4 * per));
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    for v in [set.samples.len(), set.regions, set.feature_dim] {
        let v = u32::try_from(v).map_err(|_| FgpError::domain("count exceeds u32"))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    for s in &set.samples {
        s.grid
            .features
            .ensure_shape("encode_region_features", (set.regions, set.feature_dim))?;
        out.extend_from_slice(&s.class_id.to_le_bytes());
        for &x in s.grid.features.data() {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(FgpError::format(
                "region features",
                format!(
                    "truncated at byte offset {}: needed {n} bytes for {what}, {} left",
                    self.pos,
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }
}

pub fn decode_region_features(
    bytes: &[u8],
    grid_shape: Option<(usize, usize)>,
) -> Result<RegionFeatureSet> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != FEATURE_MAGIC {
        return Err(FgpError::format(
            "region features",
            "bad magic at byte offset 0",
        ));
    }
    let version = u16::from_le_bytes(r.take(2, "version")?.try_into().expect("2 bytes"));
    if version != FEATURE_VERSION {
        return Err(FgpError::Version {
            found: version,
            expected: FEATURE_VERSION,
        });
    }
    let count = r.u32("sample count")? as usize;
    let regions = r.u32("region count")? as usize;
    let feature_dim = r.u32("feature dimension")? as usize;
    let per = regions * feature_dim;
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let class_id = r.u32("class id")?;
        let raw = r.take(4 * per, "sample payload")?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        let features = Matrix::new(regions, feature_dim, data)?;
        samples.push(LabeledGrid {
            class_id,
            grid: RegionFeatureGrid::new(i as u32, features, grid_shape)?,
        });
    }
    if r.pos != bytes.len() {
        return Err(FgpError::format(
            "region features",
            format!(
                "{} trailing bytes after byte offset {}",
                bytes.len() - r.pos,
                r.pos
            ),
        ));
    }
    Ok(RegionFeatureSet {
        regions,
        feature_dim,
        samples,
    })
}

pub fn write_region_features(path: impl AsRef<Path>, set: &RegionFeatureSet) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_region_features(set)?).map_err(|e| FgpError::io(path, e))
}

pub fn read_region_features(
    path: impl AsRef<Path>,
    grid_shape: Option<(usize, usize)>,
) -> Result<RegionFeatureSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| FgpError::io(path, e))?;
    decode_region_features(&bytes, grid_shape)
}
