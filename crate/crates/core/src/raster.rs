//! Single-band georeferenced rasters, the FLR1 binary format, tiling and
//! nearest-neighbour resampling.
//!
//! FLR1 layout (all little-endian):
//!
//! | offset | size | field          |
//! |--------|------|----------------|
//! | 0      | 4    | magic `FLR1`   |
//! | 4      | 4    | u32 width      |
//! | 8      | 4    | u32 height     |
//! | 12     | 8    | f64 x_origin   |
//! | 20     | 8    | f64 y_origin   |
//! | 28     | 8    | f64 pixel_width|
//! | 36     | 8    | f64 pixel_height|
//! | 44     | 4    | u32 crs_code   |
//! | 48     | 1    | u8 dtype (0=byte, 1=int16, 2=float32) |
//! | 49     | 1    | u8 nodata flag |
//! | 50     | 8    | f64 nodata value (zero when the flag is 0) |
//! | 58     | ..   | row-major payload |

use std::path::Path;

use crate::geo;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FLR1";
pub const HEADER_LEN: usize = 58;

/// Nodata marker for binary (0/1) byte rasters.
pub const BINARY_NODATA: u8 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    Byte,
    Int16,
    Float32,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::Byte => 0,
            DType::Int16 => 1,
            DType::Float32 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::Byte),
            1 => Some(DType::Int16),
            2 => Some(DType::Float32),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::Byte => 1,
            DType::Int16 => 2,
            DType::Float32 => 4,
        }
    }

    /// Whether `v` is representable in this type without loss.
    fn holds(self, v: f64) -> bool {
        match self {
            DType::Byte => v.fract() == 0.0 && (0.0..=255.0).contains(&v),
            DType::Int16 => v.fract() == 0.0 && (i16::MIN as f64..=i16::MAX as f64).contains(&v),
            DType::Float32 => v.is_nan() || (v as f32) as f64 == v,
        }
    }
}

/// North-up affine transform. Row 0 is the top edge at `y_origin`; rows grow
/// downward by `pixel_height`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoTransform {
    pub x_origin: f64,
    pub y_origin: f64,
    pub pixel_width: f64,
    pub pixel_height: f64,
    pub crs_code: u32,
}

impl GeoTransform {
    pub fn new(
        x_origin: f64,
        y_origin: f64,
        pixel_width: f64,
        pixel_height: f64,
        crs_code: u32,
    ) -> Result<Self> {
        let t = Self {
            x_origin,
            y_origin,
            pixel_width,
            pixel_height,
            crs_code,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_width > 0.0 && self.pixel_width.is_finite())
            || !(self.pixel_height > 0.0 && self.pixel_height.is_finite())
        {
            return Err(Error::InvalidRaster(format!(
                "pixel size must be positive, got {}x{}",
                self.pixel_width, self.pixel_height
            )));
        }
        if !self.x_origin.is_finite() || !self.y_origin.is_finite() {
            return Err(Error::InvalidRaster("non-finite origin".into()));
        }
        Ok(())
    }

    /// World coordinates of fractional pixel position (`col`, `row`).
    pub fn pixel_to_world(&self, col: f64, row: f64) -> (f64, f64) {
        (
            self.x_origin + col * self.pixel_width,
            self.y_origin - row * self.pixel_height,
        )
    }

    /// Fractional (col, row) of a world coordinate.
    pub fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.x_origin) / self.pixel_width,
            (self.y_origin - y) / self.pixel_height,
        )
    }

    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        self.pixel_to_world(col as f64 + 0.5, row as f64 + 0.5)
    }

    /// Integer pixel containing a world coordinate, if within `width` x `height`.
    pub fn pixel_at(&self, x: f64, y: f64, width: usize, height: usize) -> Option<(usize, usize)> {
        let (c, r) = self.world_to_pixel(x, y);
        let (c, r) = (c.floor(), r.floor());
        if c >= 0.0 && r >= 0.0 && (c as usize) < width && (r as usize) < height {
            Some((r as usize, c as usize))
        } else {
            None
        }
    }

    pub fn pixel_area_hectares(&self) -> Result<f64> {
        pixel_area_hectares(self)
    }
}

/// Area of one pixel in hectares. Fails for geographic (degree-based) CRSs.
pub fn pixel_area_hectares(t: &GeoTransform) -> Result<f64> {
    if geo::is_geographic(t.crs_code) {
        return Err(Error::NonMetricCrs(t.crs_code));
    }
    Ok(t.pixel_width * t.pixel_height / 10_000.0)
}

#[derive(Debug, Clone, PartialEq)]
pub enum PixelData {
    Byte(Vec<u8>),
    Int16(Vec<i16>),
    Float32(Vec<f32>),
}

impl PixelData {
    pub fn len(&self) -> usize {
        match self {
            PixelData::Byte(v) => v.len(),
            PixelData::Int16(v) => v.len(),
            PixelData::Float32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            PixelData::Byte(_) => DType::Byte,
            PixelData::Int16(_) => DType::Int16,
            PixelData::Float32(_) => DType::Float32,
        }
    }

    fn get(&self, i: usize) -> f64 {
        match self {
            PixelData::Byte(v) => v[i] as f64,
            PixelData::Int16(v) => v[i] as f64,
            PixelData::Float32(v) => v[i] as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    transform: GeoTransform,
    nodata: Option<f64>,
    data: PixelData,
}

impl Raster {
    pub fn new(
        width: usize,
        height: usize,
        transform: GeoTransform,
        nodata: Option<f64>,
        data: PixelData,
    ) -> Result<Self> {
        transform.validate()?;
        if width > u32::MAX as usize || height > u32::MAX as usize {
            return Err(Error::InvalidRaster("dimensions exceed u32".into()));
        }
        if data.len() != width * height {
            return Err(Error::InvalidRaster(format!(
                "payload has {} pixels, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        let dtype = data.dtype();
        if let Some(nd) = nodata {
            if !dtype.holds(nd) {
                return Err(Error::InvalidRaster(format!(
                    "nodata {nd} not representable as {dtype:?}"
                )));
            }
        }
        let r = Self {
            width,
            height,
            transform,
            nodata,
            data,
        };
        if let PixelData::Float32(v) = &r.data {
            if let Some(i) = v
                .iter()
                .position(|x| !x.is_finite() && !r.matches_nodata(*x as f64))
            {
                return Err(Error::InvalidRaster(format!(
                    "non-finite value at pixel {i} is not the nodata value"
                )));
            }
        }
        Ok(r)
    }

    pub fn from_u8(
        width: usize,
        height: usize,
        transform: GeoTransform,
        nodata: Option<u8>,
        data: Vec<u8>,
    ) -> Result<Self> {
        Self::new(
            width,
            height,
            transform,
            nodata.map(f64::from),
            PixelData::Byte(data),
        )
    }

    pub fn from_f32(
        width: usize,
        height: usize,
        transform: GeoTransform,
        nodata: Option<f32>,
        data: Vec<f32>,
    ) -> Result<Self> {
        Self::new(
            width,
            height,
            transform,
            nodata.map(f64::from),
            PixelData::Float32(data),
        )
    }

    /// Binary mask (0/1) with [`BINARY_NODATA`] as nodata.
    pub fn binary(
        width: usize,
        height: usize,
        transform: GeoTransform,
        data: Vec<u8>,
    ) -> Result<Self> {
        Self::from_u8(width, height, transform, Some(BINARY_NODATA), data)
    }

    pub fn filled_u8(
        width: usize,
        height: usize,
        transform: GeoTransform,
        nodata: Option<u8>,
        value: u8,
    ) -> Self {
        Self::from_u8(
            width,
            height,
            transform,
            nodata,
            vec![value; width * height],
        )
        .expect("constant raster is valid")
    }

    pub fn filled_f32(
        width: usize,
        height: usize,
        transform: GeoTransform,
        nodata: Option<f32>,
        value: f32,
    ) -> Self {
        Self::from_f32(
            width,
            height,
            transform,
            nodata,
            vec![value; width * height],
        )
        .expect("constant raster is valid")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn transform(&self) -> &GeoTransform {
        &self.transform
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn nodata(&self) -> Option<f64> {
        self.nodata
    }

    pub fn data(&self) -> &PixelData {
        &self.data
    }

    pub fn into_data(self) -> PixelData {
        self.data
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.data {
            PixelData::Byte(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            PixelData::Float32(v) => Some(v),
            _ => None,
        }
    }

    /// Borrow as byte pixels or fail with a message naming `what`.
    pub fn expect_u8(&self, what: &str) -> Result<&[u8]> {
        self.as_u8().ok_or_else(|| {
            Error::InvalidRaster(format!(
                "{what} must be a byte raster, got {:?}",
                self.dtype()
            ))
        })
    }

    pub fn expect_f32(&self, what: &str) -> Result<&[f32]> {
        self.as_f32().ok_or_else(|| {
            Error::InvalidRaster(format!(
                "{what} must be a float32 raster, got {:?}",
                self.dtype()
            ))
        })
    }

    fn matches_nodata(&self, v: f64) -> bool {
        match self.nodata {
            Some(nd) if nd.is_nan() => v.is_nan(),
            Some(nd) => v == nd,
            None => false,
        }
    }

    pub fn is_nodata(&self, i: usize) -> bool {
        self.matches_nodata(self.data.get(i))
    }

    /// Pixel value at linear index `i`, `None` where nodata.
    pub fn value(&self, i: usize) -> Option<f64> {
        let v = self.data.get(i);
        (!self.matches_nodata(v)).then_some(v)
    }

    pub fn value_at(&self, row: usize, col: usize) -> Option<f64> {
        self.value(row * self.width + col)
    }

    /// Same size and transform.
    pub fn same_grid(&self, other: &Raster) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.transform == other.transform
    }

    pub fn check_congruent(&self, other: &Raster, what: &str) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: {}x{} {:?} vs {}x{} {:?}",
                self.width, self.height, self.transform, other.width, other.height, other.transform
            )))
        }
    }

    /// Number of pixels equal to `v` (ignoring nodata).
    pub fn count_value(&self, v: f64) -> usize {
        (0..self.len())
            .filter(|&i| self.value(i) == Some(v))
            .count()
    }

    /// Transform of the sub-grid starting at `w`'s top-left corner.
    pub fn window_transform(&self, w: &TileWindow) -> GeoTransform {
        let (x, y) = self
            .transform
            .pixel_to_world(w.col_off as f64, w.row_off as f64);
        GeoTransform {
            x_origin: x,
            y_origin: y,
            ..self.transform
        }
    }

    /// Copy of the pixels inside `w`.
    pub fn window(&self, w: &TileWindow) -> Result<Raster> {
        if w.col_off + w.width > self.width || w.row_off + w.height > self.height {
            return Err(Error::InvalidArgument(format!(
                "window {w:?} exceeds raster bounds"
            )));
        }
        fn cut<T: Copy>(v: &[T], stride: usize, w: &TileWindow) -> Vec<T> {
            let mut out = Vec::with_capacity(w.width * w.height);
            for r in w.row_off..w.row_off + w.height {
                let s = r * stride + w.col_off;
                out.extend_from_slice(&v[s..s + w.width]);
            }
            out
        }
        let data = match &self.data {
            PixelData::Byte(v) => PixelData::Byte(cut(v, self.width, w)),
            PixelData::Int16(v) => PixelData::Int16(cut(v, self.width, w)),
            PixelData::Float32(v) => PixelData::Float32(cut(v, self.width, w)),
        };
        Raster::new(
            w.width,
            w.height,
            self.window_transform(w),
            self.nodata,
            data,
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.len() * self.dtype().size());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        let t = &self.transform;
        for f in [t.x_origin, t.y_origin, t.pixel_width, t.pixel_height] {
            out.extend_from_slice(&f.to_le_bytes());
        }
        out.extend_from_slice(&t.crs_code.to_le_bytes());
        out.push(self.dtype().code());
        out.push(self.nodata.is_some() as u8);
        out.extend_from_slice(&self.nodata.unwrap_or(0.0).to_le_bytes());
        match &self.data {
            PixelData::Byte(v) => out.extend_from_slice(v),
            PixelData::Int16(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            PixelData::Float32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    /// Decodes an FLR1 buffer. Only canonical encodings are accepted, so
    /// `from_bytes(b)?.to_bytes() == b` for every accepted `b`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Raster> {
        let fmt = |offset: usize, message: String| Error::Format {
            offset: offset as u64,
            message,
        };
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            if bytes.len() < 4 && MAGIC.starts_with(bytes) {
                return Err(Error::Truncated {
                    expected: HEADER_LEN as u64,
                    found: bytes.len() as u64,
                });
            }
            return Err(fmt(0, "missing FLR1 magic".into()));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                expected: HEADER_LEN as u64,
                found: bytes.len() as u64,
            });
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let width = u32_at(4) as usize;
        let height = u32_at(8) as usize;
        let transform = GeoTransform {
            x_origin: f64_at(12),
            y_origin: f64_at(20),
            pixel_width: f64_at(28),
            pixel_height: f64_at(36),
            crs_code: u32_at(44),
        };
        if !transform.x_origin.is_finite() {
            return Err(fmt(12, "non-finite x_origin".into()));
        }
        if !transform.y_origin.is_finite() {
            return Err(fmt(20, "non-finite y_origin".into()));
        }
        if !(transform.pixel_width > 0.0 && transform.pixel_width.is_finite()) {
            return Err(fmt(
                28,
                format!("pixel_width must be > 0, got {}", transform.pixel_width),
            ));
        }
        if !(transform.pixel_height > 0.0 && transform.pixel_height.is_finite()) {
            return Err(fmt(
                36,
                format!("pixel_height must be > 0, got {}", transform.pixel_height),
            ));
        }
        let dtype = DType::from_code(bytes[48])
            .ok_or_else(|| fmt(48, format!("unknown dtype code {}", bytes[48])))?;
        let nodata_raw = f64_at(50);
        let nodata = match bytes[49] {
            0 if nodata_raw.to_bits() == 0 => None,
            0 => return Err(fmt(50, "nodata value set while nodata flag is 0".into())),
            1 if dtype.holds(nodata_raw) => Some(nodata_raw),
            1 => {
                return Err(fmt(
                    50,
                    format!("nodata {nodata_raw} not representable as {dtype:?}"),
                ))
            }
            f => return Err(fmt(49, format!("nodata flag must be 0 or 1, got {f}"))),
        };
        let n = width
            .checked_mul(height)
            .ok_or_else(|| fmt(4, "dimensions overflow".into()))?;
        let payload_len = n * dtype.size();
        let expected = HEADER_LEN + payload_len;
        if bytes.len() < expected {
            return Err(Error::Truncated {
                expected: expected as u64,
                found: bytes.len() as u64,
            });
        }
        if bytes.len() > expected {
            return Err(fmt(
                expected,
                format!("{} trailing bytes after payload", bytes.len() - expected),
            ));
        }
        let p = &bytes[HEADER_LEN..];
        let data = match dtype {
            DType::Byte => PixelData::Byte(p.to_vec()),
            DType::Int16 => PixelData::Int16(
                p.chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]))
                    .collect(),
            ),
            DType::Float32 => PixelData::Float32(
                p.chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
        };
        Raster::new(width, height, transform, nodata, data)
            .map_err(|e| fmt(HEADER_LEN, e.to_string()))
    }
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Raster::from_bytes(&bytes)
}

pub fn write_raster(r: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, r.to_bytes()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TileWindow {
    pub col_off: usize,
    pub row_off: usize,
    pub width: usize,
    pub height: usize,
}

/// Partitions a `width` x `height` grid into row-major tiles of `tile_size`;
/// edge tiles are clipped.
pub fn tile_grid(width: usize, height: usize, tile_size: usize) -> Result<Vec<TileWindow>> {
    if tile_size == 0 {
        return Err(Error::InvalidArgument("tile_size must be >= 1".into()));
    }
    let mut out = Vec::new();
    for row_off in (0..height).step_by(tile_size) {
        for col_off in (0..width).step_by(tile_size) {
            out.push(TileWindow {
                col_off,
                row_off,
                width: tile_size.min(width - col_off),
                height: tile_size.min(height - row_off),
            });
        }
    }
    Ok(out)
}

pub fn tile(r: &Raster, tile_size: usize) -> Result<Vec<TileWindow>> {
    tile_grid(r.width(), r.height(), tile_size)
}

/// Nearest-neighbour resampling: each target pixel takes the source pixel
/// containing its centre. Centres outside the source become nodata (the
/// source nodata, or a per-type default when the source has none).
pub fn resample_nearest(
    r: &Raster,
    target: GeoTransform,
    target_width: usize,
    target_height: usize,
) -> Result<Raster> {
    target.validate()?;
    if r.transform.crs_code != target.crs_code {
        return Err(Error::CrsMismatch {
            left: r.transform.crs_code,
            right: target.crs_code,
        });
    }
    let n = target_width * target_height;
    let mut index = Vec::with_capacity(n);
    for row in 0..target_height {
        for col in 0..target_width {
            let (x, y) = target.pixel_center(row, col);
            index.push(
                r.transform
                    .pixel_at(x, y, r.width, r.height)
                    .map(|(sr, sc)| sr * r.width + sc),
            );
        }
    }
    let any_outside = index.iter().any(Option::is_none);
    let nodata = match (r.nodata, any_outside) {
        (Some(nd), _) => Some(nd),
        (None, false) => None,
        (None, true) => Some(match r.dtype() {
            DType::Byte => BINARY_NODATA as f64,
            DType::Int16 => i16::MIN as f64,
            DType::Float32 => f64::NAN,
        }),
    };
    fn gather<T: Copy>(src: &[T], index: &[Option<usize>], fill: T) -> Vec<T> {
        index.iter().map(|i| i.map_or(fill, |i| src[i])).collect()
    }
    let nd = nodata.unwrap_or(0.0);
    let data = match &r.data {
        PixelData::Byte(v) => PixelData::Byte(gather(v, &index, nd as u8)),
        PixelData::Int16(v) => PixelData::Int16(gather(v, &index, nd as i16)),
        PixelData::Float32(v) => PixelData::Float32(gather(v, &index, nd as f32)),
    };
    Raster::new(target_width, target_height, target, nodata, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt() -> GeoTransform {
        GeoTransform::new(500_000.0, 1_000_000.0, 20.0, 20.0, 32637).unwrap()
    }

    #[test]
    fn one_pixel_float_round_trip() {
        let r = Raster::from_f32(1, 1, gt(), None, vec![0.0]).unwrap();
        let bytes = r.to_bytes();
        assert_eq!(bytes.len(), HEADER_LEN + 4);
        assert_eq!(Raster::from_bytes(&bytes).unwrap(), r);
    }

    #[test]
    fn byte_layout_and_size() {
        let r = Raster::from_u8(1, 1, gt(), None, vec![7]).unwrap();
        let b = r.to_bytes();
        assert_eq!(b.len(), 59);
        assert_eq!(b[49], 0);
        assert_eq!(&b[50..58], &[0u8; 8]);
        assert_eq!(b[58], 7);
    }

    #[test]
    fn float_payload_is_little_endian() {
        let r = Raster::from_f32(1, 1, gt(), None, vec![1.5]).unwrap();
        assert_eq!(&r.to_bytes()[58..], &[0x00, 0x00, 0xC0, 0x3F]);
    }

    #[test]
    fn byte_raster_with_nodata_preserves_order() {
        let r = Raster::from_u8(3, 2, gt(), Some(255), vec![0, 1, 255, 3, 4, 5]).unwrap();
        let back = Raster::from_bytes(&r.to_bytes()).unwrap();
        assert_eq!(back.as_u8().unwrap(), &[0, 1, 255, 3, 4, 5]);
        assert_eq!(back.value_at(0, 2), None);
        assert_eq!(back.value_at(1, 0), Some(3.0));
    }

    #[test]
    fn header_errors_report_offsets() {
        let good = Raster::from_u8(2, 1, gt(), None, vec![1, 2])
            .unwrap()
            .to_bytes();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(
            Raster::from_bytes(&bad),
            Err(Error::Format { offset: 0, .. })
        ));
        let mut bad = good.clone();
        bad[48] = 9;
        assert!(matches!(
            Raster::from_bytes(&bad),
            Err(Error::Format { offset: 48, .. })
        ));
        let mut bad = good.clone();
        bad[28..36].copy_from_slice(&(-1.0f64).to_le_bytes());
        assert!(matches!(
            Raster::from_bytes(&bad),
            Err(Error::Format { offset: 28, .. })
        ));
        let mut bad = good.clone();
        bad[49] = 3;
        assert!(matches!(
            Raster::from_bytes(&bad),
            Err(Error::Format { offset: 49, .. })
        ));
        assert!(matches!(
            Raster::from_bytes(&good[..good.len() - 1]),
            Err(Error::Truncated {
                expected: 60,
                found: 59
            })
        ));
        assert!(matches!(
            Raster::from_bytes(&good[..20]),
            Err(Error::Truncated { .. })
        ));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(
            Raster::from_bytes(&long),
            Err(Error::Format { offset: 60, .. })
        ));
    }

    #[test]
    fn rejects_unmarked_nan() {
        assert!(Raster::from_f32(1, 1, gt(), None, vec![f32::NAN]).is_err());
        assert!(Raster::from_f32(1, 1, gt(), Some(f32::NAN), vec![f32::NAN]).is_ok());
        assert!(Raster::from_u8(1, 1, gt(), None, vec![1, 2]).is_err());
    }

    #[test]
    fn tiling_examples() {
        let dims = |w: &TileWindow| (w.width, w.height);
        let t = tile_grid(1024, 1024, 512).unwrap();
        assert_eq!(t.len(), 4);
        assert!(t.iter().all(|w| dims(w) == (512, 512)));
        assert_eq!(tile_grid(10, 10, 10).unwrap().len(), 1);
        let t = tile_grid(1000, 600, 512).unwrap();
        assert_eq!(
            t.iter().map(dims).collect::<Vec<_>>(),
            vec![(512, 512), (488, 512), (512, 88), (488, 88)]
        );
        assert!(tile_grid(4, 4, 0).is_err());
    }

    #[test]
    fn resample_identity_and_upsample() {
        let src = Raster::from_f32(2, 2, gt(), None, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(resample_nearest(&src, *src.transform(), 2, 2).unwrap(), src);

        let fine = GeoTransform {
            pixel_width: 10.0,
            pixel_height: 10.0,
            ..gt()
        };
        let up = resample_nearest(&src, fine, 4, 4).unwrap();
        assert_eq!(
            up.as_f32().unwrap(),
            &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0]
        );

        let one = Raster::from_f32(
            1,
            1,
            GeoTransform {
                pixel_width: 40.0,
                pixel_height: 40.0,
                ..gt()
            },
            None,
            vec![5.0],
        )
        .unwrap();
        let up = resample_nearest(&one, fine, 4, 4).unwrap();
        assert!(up.as_f32().unwrap().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn resample_outside_becomes_nodata_and_crs_checked() {
        let src = Raster::from_u8(1, 1, gt(), None, vec![1]).unwrap();
        let out = resample_nearest(&src, gt(), 2, 1).unwrap();
        assert_eq!(out.value(0), Some(1.0));
        assert_eq!(out.value(1), None);
        let other = GeoTransform {
            crs_code: 3857,
            ..gt()
        };
        assert!(matches!(
            resample_nearest(&src, other, 1, 1),
            Err(Error::CrsMismatch { .. })
        ));
    }

    #[test]
    fn hectares() {
        let ha = |w, h| {
            pixel_area_hectares(&GeoTransform {
                pixel_width: w,
                pixel_height: h,
                ..gt()
            })
            .unwrap()
        };
        assert_eq!(ha(20.0, 20.0), 0.04);
        assert_eq!(ha(250.0, 250.0), 6.25);
        assert_eq!(ha(10.0, 20.0), 0.02);
        let geo = GeoTransform {
            crs_code: 4326,
            pixel_width: 0.001,
            pixel_height: 0.001,
            ..gt()
        };
        assert!(matches!(
            pixel_area_hectares(&geo),
            Err(Error::NonMetricCrs(4326))
        ));
    }

    #[test]
    fn window_extracts_subgrid() {
        let r = Raster::from_u8(3, 3, gt(), None, (0..9).collect()).unwrap();
        let w = r
            .window(&TileWindow {
                col_off: 1,
                row_off: 1,
                width: 2,
                height: 2,
            })
            .unwrap();
        assert_eq!(w.as_u8().unwrap(), &[4, 5, 7, 8]);
        assert_eq!(w.transform().x_origin, 500_020.0);
        assert_eq!(w.transform().y_origin, 999_980.0);
    }
}
