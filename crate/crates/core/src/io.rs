//! Binary and image file formats.
//!
//! * `DT1` tensors: `DT1\n`, `u32` order, `u64` dims, then `f64` entries in
//!   column-major order, all little-endian.
//! * `MK1` masks: `MK1\n`, `u32` order, `u64` dims, `u64` count, then the
//!   sorted `u64` linear indices.
//! * TR factor files: one JSON header line `{"d": …, "ranks": […]}` followed
//!   by the cores as consecutive `DT1` blobs.
//! * Binary PGM (`P5`) masks and PPM (`P6`) colour images.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sampling::ObservationMask;
use crate::scalar::Real;
use crate::tensor::DenseTensor;
use crate::tr::TrFactors;

const DT1_MAGIC: &[u8; 4] = b"DT1\n";
const MK1_MAGIC: &[u8; 4] = b"MK1\n";

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn offset(&self) -> u64 {
        self.pos as u64
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.offset(),
                format!("truncated: expected {n} bytes of {what}, {} left", self.buf.len() - self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

fn read_header(c: &mut Cursor<'_>, magic: &[u8; 4]) -> Result<Vec<usize>> {
    let got = c.take(4, "magic")?;
    if got != magic {
        return Err(Error::format(0, format!("bad magic {got:?}, expected {magic:?}")));
    }
    let at = c.offset();
    let d = c.u32("order")?;
    if d == 0 {
        return Err(Error::format(at, "order must be at least 1"));
    }
    let mut dims = Vec::with_capacity(d as usize);
    let mut total: usize = 1;
    for k in 0..d {
        let at = c.offset();
        let n = c.u64("dimension")?;
        if n == 0 {
            return Err(Error::format(at, format!("dimension {k} is zero")));
        }
        let n = usize::try_from(n).map_err(|_| Error::format(at, "dimension too large"))?;
        total = total
            .checked_mul(n)
            .ok_or_else(|| Error::format(at, "tensor size overflows"))?;
        dims.push(n);
    }
    Ok(dims)
}

fn write_header(out: &mut Vec<u8>, magic: &[u8; 4], dims: &[usize]) {
    out.extend_from_slice(magic);
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &n in dims {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
}

fn read_tensor_from<T: Real>(c: &mut Cursor<'_>) -> Result<DenseTensor<T>> {
    let dims = read_header(c, DT1_MAGIC)?;
    let total: usize = dims.iter().product();
    let need = total.checked_mul(8).ok_or_else(|| Error::format(c.offset(), "size overflow"))?;
    if c.remaining() < need {
        return Err(Error::format(
            (c.buf.len()) as u64,
            format!("data truncated: {} entries declared, {} bytes present", total, c.remaining()),
        ));
    }
    let bytes = c.take(need, "data")?;
    let data = bytes
        .chunks_exact(8)
        .map(|b| T::lit(f64::from_le_bytes(b.try_into().expect("8 bytes"))))
        .collect();
    DenseTensor::new(dims, data)
}

pub fn encode_tensor<T: Real>(t: &DenseTensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * t.ndim() + 8 * t.len());
    write_header(&mut out, DT1_MAGIC, t.dims());
    for &x in t.data() {
        out.extend_from_slice(&x.to_f64_lossy().to_le_bytes());
    }
    out
}

/// Decode a single `DT1` tensor; trailing bytes are an error.
pub fn decode_tensor<T: Real>(bytes: &[u8]) -> Result<DenseTensor<T>> {
    let mut c = Cursor::new(bytes);
    let t = read_tensor_from(&mut c)?;
    if c.remaining() != 0 {
        return Err(Error::format(c.offset(), format!("{} trailing bytes", c.remaining())));
    }
    Ok(t)
}

pub fn read_tensor<T: Real>(path: impl AsRef<Path>) -> Result<DenseTensor<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::from(e).at_path(path))?;
    decode_tensor(&bytes).map_err(|e| e.at_path(path))
}

pub fn write_tensor<T: Real>(path: impl AsRef<Path>, t: &DenseTensor<T>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_tensor(t)).map_err(|e| Error::from(e).at_path(path))
}

pub fn encode_mask(mask: &ObservationMask) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * mask.dims().len() + 8 * mask.count());
    write_header(&mut out, MK1_MAGIC, mask.dims());
    out.extend_from_slice(&(mask.count() as u64).to_le_bytes());
    for &k in mask.indices() {
        out.extend_from_slice(&(k as u64).to_le_bytes());
    }
    out
}

pub fn decode_mask(bytes: &[u8]) -> Result<ObservationMask> {
    let mut c = Cursor::new(bytes);
    let dims = read_header(&mut c, MK1_MAGIC)?;
    let total: usize = dims.iter().product();
    let at = c.offset();
    let count = c.u64("count")?;
    if count > total as u64 {
        return Err(Error::format(at, format!("{count} indices exceed {total} entries")));
    }
    let mut indices = Vec::with_capacity(count as usize);
    let mut prev: Option<u64> = None;
    for _ in 0..count {
        let at = c.offset();
        let k = c.u64("index")?;
        if k >= total as u64 {
            return Err(Error::format(at, format!("index {k} out of range")));
        }
        if prev.is_some_and(|p| p >= k) {
            return Err(Error::format(at, "indices not strictly increasing"));
        }
        prev = Some(k);
        indices.push(k as usize);
    }
    if c.remaining() != 0 {
        return Err(Error::format(c.offset(), format!("{} trailing bytes", c.remaining())));
    }
    ObservationMask::new(&dims, indices)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<ObservationMask> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::from(e).at_path(path))?;
    decode_mask(&bytes).map_err(|e| e.at_path(path))
}

pub fn write_mask(path: impl AsRef<Path>, mask: &ObservationMask) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_mask(mask)).map_err(|e| Error::from(e).at_path(path))
}

pub fn encode_factors<T: Real>(f: &TrFactors<T>) -> Vec<u8> {
    let ranks: Vec<String> = f.ranks().iter().map(|r| r.to_string()).collect();
    let mut out = format!("{{\"d\": {}, \"ranks\": [{}]}}\n", f.order(), ranks.join(", ")).into_bytes();
    for core in f.cores() {
        out.extend(encode_tensor(core));
    }
    out
}

pub fn decode_factors<T: Real>(bytes: &[u8]) -> Result<TrFactors<T>> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(0, "missing header line"))?;
    let header: serde_json::Value = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| Error::format(e.column().saturating_sub(1) as u64, format!("bad header: {e}")))?;
    let d = header["d"]
        .as_u64()
        .ok_or_else(|| Error::format(0, "header lacks integer \"d\""))? as usize;
    let ranks: Vec<usize> = header["ranks"]
        .as_array()
        .ok_or_else(|| Error::format(0, "header lacks \"ranks\" list"))?
        .iter()
        .map(|v| v.as_u64().map(|x| x as usize))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::format(0, "ranks must be integers"))?;
    if ranks.len() != d || d == 0 {
        return Err(Error::format(0, format!("header lists {} ranks for d = {d}", ranks.len())));
    }
    let body = &bytes[nl + 1..];
    let mut c = Cursor::new(body);
    let mut cores = Vec::with_capacity(d);
    for i in 0..d {
        let start = c.offset();
        let core = read_tensor_from::<T>(&mut c).map_err(|e| shift_offset(e, nl as u64 + 1))?;
        let expect0 = ranks[i];
        let expect2 = ranks[(i + 1) % d];
        if core.ndim() != 3 || core.dims()[0] != expect0 || core.dims()[2] != expect2 {
            return Err(Error::format(
                nl as u64 + 1 + start,
                format!("core {i} has dims {:?}, header ranks {ranks:?}", core.dims()),
            ));
        }
        cores.push(core);
    }
    if c.remaining() != 0 {
        return Err(Error::format(nl as u64 + 1 + c.offset(), "trailing bytes after cores"));
    }
    TrFactors::new(cores)
}

fn shift_offset(e: Error, by: u64) -> Error {
    match e {
        Error::Format { offset, message } => Error::Format {
            offset: offset + by,
            message,
        },
        other => other,
    }
}

pub fn read_factors<T: Real>(path: impl AsRef<Path>) -> Result<TrFactors<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::from(e).at_path(path))?;
    decode_factors(&bytes).map_err(|e| e.at_path(path))
}

pub fn write_factors<T: Real>(path: impl AsRef<Path>, f: &TrFactors<T>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_factors(f)).map_err(|e| Error::from(e).at_path(path))
}

/// Header tokens of a netpbm file: magic, then `count` integers.
fn netpbm_header(bytes: &[u8], magic: &[u8; 2], count: usize) -> Result<(Vec<usize>, usize)> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::format(0, format!("expected {} header", String::from_utf8_lossy(magic))));
    }
    let mut pos = 2;
    let mut values = Vec::with_capacity(count);
    while values.len() < count {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::format(pos as u64, "truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(pos as u64, "expected an integer"));
        }
        let v: usize = std::str::from_utf8(&bytes[start..pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::format(start as u64, "integer out of range"))?;
        values.push(v);
    }
    // exactly one whitespace byte before the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::format(pos as u64, "missing separator before raster")),
    }
    Ok((values, pos))
}

fn raster(bytes: &[u8], start: usize, samples: usize, maxval: usize) -> Result<Vec<u16>> {
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(start as u64, format!("invalid maxval {maxval}")));
    }
    let width = if maxval < 256 { 1 } else { 2 };
    let need = samples * width;
    if bytes.len() < start + need {
        return Err(Error::format(
            bytes.len() as u64,
            format!("raster truncated: need {need} bytes after offset {start}"),
        ));
    }
    let body = &bytes[start..start + need];
    Ok(if width == 1 {
        body.iter().map(|&b| b as u16).collect()
    } else {
        body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    })
}

/// Observation mask from a binary PGM: pixels equal to 0 are missing. The
/// mask has dims `(height, width, trailing…)` with every pixel replicated
/// across the trailing modes.
pub fn decode_pgm_mask(bytes: &[u8], trailing: &[usize]) -> Result<ObservationMask> {
    let (hdr, start) = netpbm_header(bytes, b"P5", 3)?;
    let (w, h, maxval) = (hdr[0], hdr[1], hdr[2]);
    if w == 0 || h == 0 {
        return Err(Error::format(2, "zero-sized image"));
    }
    let px = raster(bytes, start, w * h, maxval)?;
    let mut dims = vec![h, w];
    dims.extend_from_slice(trailing);
    let plane = w * h;
    // Raster is row-major (y, x); tensor linear index is y + h * x.
    ObservationMask::from_predicate(&dims, |lin| {
        let p = lin % plane;
        let (y, x) = (p % h, p / h);
        px[y * w + x] != 0
    })
}

pub fn read_pgm_mask(path: impl AsRef<Path>, trailing: &[usize]) -> Result<ObservationMask> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::from(e).at_path(path))?;
    decode_pgm_mask(&bytes, trailing).map_err(|e| e.at_path(path))
}

/// Encode a binary PGM from a `(height, width)` indicator.
pub fn encode_pgm(height: usize, width: usize, pixel: impl Fn(usize, usize) -> u8) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    for y in 0..height {
        for x in 0..width {
            out.push(pixel(y, x));
        }
    }
    out
}

/// Decode a binary PPM into an `(height, width, 3)` tensor scaled to `[0, 1]`.
pub fn decode_ppm<T: Real>(bytes: &[u8]) -> Result<DenseTensor<T>> {
    let (hdr, start) = netpbm_header(bytes, b"P6", 3)?;
    let (w, h, maxval) = (hdr[0], hdr[1], hdr[2]);
    if w == 0 || h == 0 {
        return Err(Error::format(2, "zero-sized image"));
    }
    let px = raster(bytes, start, w * h * 3, maxval)?;
    let scale = T::lit(maxval as f64).recip();
    DenseTensor::from_fn(&[h, w, 3], |i| T::lit(px[(i[0] * w + i[1]) * 3 + i[2]] as f64) * scale)
}

/// Encode an `(height, width, 3)` tensor of `[0, 1]` values as an 8-bit PPM,
/// clamping out-of-range values.
pub fn encode_ppm<T: Real>(img: &DenseTensor<T>) -> Result<Vec<u8>> {
    if img.ndim() != 3 || img.dims()[2] != 3 {
        return Err(Error::invalid(format!("expected an H x W x 3 image, got {:?}", img.dims())));
    }
    let (h, w) = (img.dims()[0], img.dims()[1]);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = img.get(&[y, x, c]).to_f64_lossy();
                let v = if v.is_nan() { 0.0 } else { v };
                out.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Ok(out)
}

pub fn read_ppm<T: Real>(path: impl AsRef<Path>) -> Result<DenseTensor<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::from(e).at_path(path))?;
    decode_ppm(&bytes).map_err(|e| e.at_path(path))
}

pub fn write_ppm<T: Real>(path: impl AsRef<Path>, img: &DenseTensor<T>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_ppm(img).map_err(|e| e.at_path(path))?;
    fs::write(path, bytes).map_err(|e| Error::from(e).at_path(path))
}
