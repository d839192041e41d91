use super::mask::{connected_components, BinaryMask, Component};
use crate::error::{Error, Result};

/// Sobel boundary of a mask and its 8-connected pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct Contours {
    pub image: BinaryMask,
    pub components: Vec<Component>,
}

/// Mask pixels whose 3×3 Sobel gradient magnitude is non-zero, i.e. the inner
/// boundary of the mask. Pixels outside the image read as 0.
pub fn sobel_contours(mask: &BinaryMask) -> Contours {
    let (w, h) = (mask.width(), mask.height());
    let v = |x: i64, y: i64| mask.get_signed(x, y) as i32;
    let image = BinaryMask::from_fn(w, h, |x, y| {
        if !mask.get(x, y) {
            return false;
        }
        let (x, y) = (x as i64, y as i64);
        let gx = (v(x + 1, y - 1) + 2 * v(x + 1, y) + v(x + 1, y + 1))
            - (v(x - 1, y - 1) + 2 * v(x - 1, y) + v(x - 1, y + 1));
        let gy = (v(x - 1, y + 1) + 2 * v(x, y + 1) + v(x + 1, y + 1))
            - (v(x - 1, y - 1) + 2 * v(x, y - 1) + v(x + 1, y - 1));
        gx * gx + gy * gy > 0
    });
    let components = connected_components(&image).components;
    Contours { image, components }
}

/// Summed-area table with a zero border row and column.
struct Integral {
    w: usize,
    h: usize,
    sums: Vec<u32>,
}

impl Integral {
    fn new(mask: &BinaryMask) -> Self {
        let (w, h) = (mask.width(), mask.height());
        let mut sums = vec![0u32; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0u32;
            for x in 0..w {
                row += mask.get(x, y) as u32;
                sums[(y + 1) * (w + 1) + x + 1] = sums[y * (w + 1) + x + 1] + row;
            }
        }
        Self { w, h, sums }
    }

    /// Set pixels in the `k`×`k` window centred on (x, y), clipped to the image.
    fn window(&self, x: usize, y: usize, k: usize) -> u32 {
        let r = k / 2;
        let x0 = x.saturating_sub(r);
        let y0 = y.saturating_sub(r);
        let x1 = (x + r + 1).min(self.w);
        let y1 = (y + r + 1).min(self.h);
        let s = |xx: usize, yy: usize| self.sums[yy * (self.w + 1) + xx];
        s(x1, y1) + s(x0, y0) - s(x0, y1) - s(x1, y0)
    }
}

fn check_filter_args(k: usize, dmin: f64) -> Result<()> {
    if k < 3 || k.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "filter window must be odd and >= 3, got {k}"
        )));
    }
    if !(0.0..=1.0).contains(&dmin) {
        return Err(Error::InvalidArgument(format!(
            "density threshold must lie in [0, 1], got {dmin}"
        )));
    }
    Ok(())
}

/// Per contour component, the largest fraction of a `k`×`k` all-ones window
/// covered by contour pixels, taken over windows centred on the component.
pub fn contour_densities(contours: &Contours, k: usize) -> Vec<f64> {
    let integral = Integral::new(&contours.image);
    let area = (k * k) as f64;
    contours
        .components
        .iter()
        .map(|c| {
            c.pixels
                .iter()
                .map(|&(x, y)| integral.window(x, y, k))
                .max()
                .unwrap_or(0) as f64
                / area
        })
        .collect()
}

/// Keep the mask components that own a contour piece of density `>= dmin`.
/// Components without any contour (isolated pixels, one-pixel-wide streaks)
/// are removed.
pub fn morphological_filter(contours: &Contours, mask: &BinaryMask, k: usize, dmin: f64) -> Result<BinaryMask> {
    check_filter_args(k, dmin)?;
    if !contours.image.same_shape(mask) {
        return Err(Error::InvalidArgument("contour and mask sizes differ".into()));
    }
    let labeling = connected_components(mask);
    let mut keep = vec![false; labeling.components.len() + 1];
    for (comp, density) in contours.components.iter().zip(contour_densities(contours, k)) {
        if density < dmin {
            continue;
        }
        if let Some(&(x, y)) = comp.pixels.first() {
            keep[labeling.labels[y * mask.width() + x] as usize] = true;
        }
    }
    keep[0] = false;
    let w = mask.width();
    Ok(BinaryMask::from_fn(w, mask.height(), |x, y| {
        keep[labeling.labels[y * w + x] as usize]
    }))
}
