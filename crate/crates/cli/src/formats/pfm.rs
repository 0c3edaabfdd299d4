//! Portable float maps: `PF` (3 channels) or `Pf` (1 channel), rows stored
//! bottom to top, little-endian (negative scale).

use evslam_core::image::Image;

pub fn encode(img: &Image) -> Vec<u8> {
    assert!(img.channels == 1 || img.channels == 3, "PFM holds 1 or 3 channels");
    let tag = if img.channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{tag}\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    let row = img.width * img.channels;
    out.reserve(row * img.height * 4);
    for v in (0..img.height).rev() {
        for x in &img.data[v * row..(v + 1) * row] {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str, String> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(format!("truncated header at byte {start}"));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| format!("bad header at byte {start}"))
}

pub fn decode(bytes: &[u8]) -> Result<Image, String> {
    let mut pos = 0;
    let channels = match token(bytes, &mut pos)? {
        "PF" => 3,
        "Pf" => 1,
        t => return Err(format!("bad magic {t:?}")),
    };
    let mut dim = || -> Result<usize, String> {
        let t = token(bytes, &mut pos)?;
        t.parse().map_err(|_| format!("bad dimension {t:?}"))
    };
    let (w, h) = (dim()?, dim()?);
    let t = token(bytes, &mut pos)?;
    let scale: f64 = t.parse().map_err(|_| format!("bad scale {t:?}"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(format!("bad scale {t:?}"));
    }
    // exactly one whitespace byte separates the header from the data
    pos += 1;
    let row = w * channels;
    let need = row * h * 4;
    if bytes.len() < pos + need {
        return Err(format!("truncated data: need {need} bytes after byte {pos}, found {}", bytes.len().saturating_sub(pos)));
    }
    let little = scale < 0.0;
    let mut data = vec![0f32; row * h];
    for (k, chunk) in bytes[pos..pos + need].chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let x = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (r, c) = (k / row, k % row);
        data[(h - 1 - r) * row + c] = x;
    }
    Ok(Image::from_data(w, h, channels, data))
}
