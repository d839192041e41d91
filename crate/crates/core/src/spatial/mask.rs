use std::collections::VecDeque;

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BBox {
    pub x_min: i64,
    pub y_min: i64,
    pub x_max: i64,
    pub y_max: i64,
}

impl BBox {
    pub fn new(x_min: i64, y_min: i64, x_max: i64, y_max: i64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn point(x: i64, y: i64) -> Self {
        Self::new(x, y, x, y)
    }

    pub fn is_valid(&self) -> bool {
        self.x_max >= self.x_min && self.y_max >= self.y_min
    }

    pub fn width(&self) -> i64 {
        (self.x_max - self.x_min + 1).max(0)
    }

    pub fn height(&self) -> i64 {
        (self.y_max - self.y_min + 1).max(0)
    }

    pub fn area(&self) -> i64 {
        self.width() * self.height()
    }

    pub fn include(&mut self, x: i64, y: i64) {
        self.x_min = self.x_min.min(x);
        self.y_min = self.y_min.min(y);
        self.x_max = self.x_max.max(x);
        self.y_max = self.y_max.max(y);
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox::new(
            self.x_min.min(other.x_min),
            self.y_min.min(other.y_min),
            self.x_max.max(other.x_max),
            self.y_max.max(other.y_max),
        )
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let b = BBox::new(
            self.x_min.max(other.x_min),
            self.y_min.max(other.y_min),
            self.x_max.min(other.x_max),
            self.y_max.min(other.y_max),
        );
        b.is_valid().then_some(b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.bits[y * width + x] = f(x, y);
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn same_shape(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Out-of-range coordinates read as false.
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.bits[y as usize * self.width + x as usize]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }

    pub fn bbox(&self) -> Option<BBox> {
        let mut it = self.iter_set();
        let (x, y) = it.next()?;
        let mut b = BBox::point(x as i64, y as i64);
        for (x, y) in it {
            b.include(x as i64, y as i64);
        }
        Some(b)
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.same_shape(other) && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn union(&self, other: &BinaryMask) -> BinaryMask {
        assert!(self.same_shape(other));
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| a || b).collect(),
        }
    }

    pub fn intersects(&self, other: &BinaryMask) -> bool {
        self.same_shape(other) && self.bits.iter().zip(&other.bits).any(|(&a, &b)| a && b)
    }

    pub fn from_pixels(width: usize, height: usize, pixels: &[(usize, usize)]) -> Self {
        let mut m = Self::new(width, height);
        for &(x, y) in pixels {
            m.set(x, y, true);
        }
        m
    }
}

/// One 8-connected region of a mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    /// Pixels in BFS discovery order, starting from the raster-first pixel.
    pub pixels: Vec<(usize, usize)>,
    pub bbox: BBox,
}

impl Component {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn to_mask(&self, width: usize, height: usize) -> BinaryMask {
        BinaryMask::from_pixels(width, height, &self.pixels)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    /// 0 = background, otherwise component index + 1.
    pub labels: Vec<u32>,
    pub components: Vec<Component>,
}

const NEIGHBORS_8: [(i64, i64); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

/// 8-connected labeling. Components are numbered in raster order of their
/// first pixel.
pub fn connected_components(mask: &BinaryMask) -> Labeling {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.bits[start] || labels[start] != 0 {
            continue;
        }
        let label = components.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut pixels = Vec::new();
        let mut bbox = BBox::point((start % w) as i64, (start / w) as i64);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            pixels.push((x, y));
            bbox.include(x as i64, y as i64);
            for (dx, dy) in NEIGHBORS_8 {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mask.bits[j] && labels[j] == 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            }
        }
        components.push(Component { pixels, bbox });
    }
    Labeling { labels, components }
}

/// Convex hull of a point set (Andrew's monotone chain), counter-clockwise,
/// collinear points dropped.
pub fn convex_hull(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut pts: Vec<(i64, i64)> = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    }
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Rasterize the filled convex hull of `pixels`: every grid point inside or on
/// the hull boundary.
pub fn fill_convex_hull(pixels: &[(usize, usize)], width: usize, height: usize) -> BinaryMask {
    let pts: Vec<(i64, i64)> = pixels.iter().map(|&(x, y)| (x as i64, y as i64)).collect();
    let hull = convex_hull(&pts);
    let mut out = BinaryMask::new(width, height);
    match hull.len() {
        0 => return out,
        1 | 2 => {
            // degenerate hull: a point or a segment
            let a = hull[0];
            let b = *hull.last().unwrap();
            let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).max(1);
            for s in 0..=steps {
                let x = a.0 as f64 + (b.0 - a.0) as f64 * s as f64 / steps as f64;
                let y = a.1 as f64 + (b.1 - a.1) as f64 * s as f64 / steps as f64;
                out.set(x.round() as usize, y.round() as usize, true);
            }
            return out;
        }
        _ => {}
    }
    let mut bb = BBox::point(hull[0].0, hull[0].1);
    for &(x, y) in &hull {
        bb.include(x, y);
    }
    for y in bb.y_min..=bb.y_max {
        for x in bb.x_min..=bb.x_max {
            let inside = (0..hull.len()).all(|i| {
                let a = hull[i];
                let b = hull[(i + 1) % hull.len()];
                (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0) >= 0
            });
            if inside {
                out.set(x as usize, y as usize, true);
            }
        }
    }
    out
}
