//! Binary PGM/PBM encoders for debug images.

use super::{BinaryMask, ConfidenceMap, CountImage, TimeImage};

fn pgm(width: usize, height: usize, pixels: impl Iterator<Item = u8>) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels);
    out
}

/// Counts scaled so the busiest pixel is white.
pub fn count_pgm(img: &CountImage) -> Vec<u8> {
    let max = img.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    pgm(
        img.width,
        img.height,
        img.counts.iter().map(|&c| (c as f64 / max * 255.0).round() as u8),
    )
}

/// `[t0, t0 + dt]` mapped to `[1, 255]`; empty pixels are 0.
pub fn time_pgm(img: &TimeImage, t0: f64, dt: f64) -> Vec<u8> {
    pgm(
        img.width,
        img.height,
        img.values.iter().map(|v| match v {
            None => 0,
            Some(t) => (1.0 + ((t - t0) / dt).clamp(0.0, 1.0) * 254.0).round() as u8,
        }),
    )
}

/// `[-1, 1]` mapped linearly to `[0, 255]`; empty pixels take the midpoint.
pub fn confidence_pgm(map: &ConfidenceMap) -> Vec<u8> {
    pgm(
        map.width,
        map.height,
        map.values.iter().map(|v| {
            let r = v.unwrap_or(0.0);
            ((r + 1.0) * 127.5).round() as u8
        }),
    )
}

/// Packed PBM; set pixels are black (1).
pub fn mask_pbm(mask: &BinaryMask) -> Vec<u8> {
    let (w, h) = (mask.width(), mask.height());
    let mut out = format!("P4\n{w} {h}\n").into_bytes();
    let row_bytes = w.div_ceil(8);
    for y in 0..h {
        let mut row = vec![0u8; row_bytes];
        for x in 0..w {
            if mask.get(x, y) {
                row[x / 8] |= 0x80 >> (x % 8);
            }
        }
        out.extend_from_slice(&row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confidence_endpoints() {
        let m = ConfidenceMap {
            width: 3,
            height: 1,
            values: vec![Some(-1.0), None, Some(1.0)],
            mean_time: 0.0,
        };
        let bytes = confidence_pgm(&m);
        assert!(bytes.starts_with(b"P5\n3 1\n255\n"));
        assert_eq!(&bytes[bytes.len() - 3..], &[0, 128, 255]);
    }

    #[test]
    fn pbm_packs_rows() {
        let mut m = BinaryMask::new(10, 2);
        m.set(0, 0, true);
        m.set(9, 1, true);
        let bytes = mask_pbm(&m);
        let body = &bytes[bytes.len() - 4..];
        assert_eq!(body, &[0x80, 0x00, 0x00, 0x40]);
    }
}
