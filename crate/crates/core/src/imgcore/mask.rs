use super::BoundingBox;
use crate::{Error, Result};

/// Packed binary occupancy grid, row-major, 64 pixels per word.
#[derive(Clone, PartialEq, Eq)]
pub struct BitGrid {
    width: usize,
    height: usize,
    words: Vec<u64>,
}

impl std::fmt::Debug for BitGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BitGrid")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("count", &self.count())
            .finish()
    }
}

impl BitGrid {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            words: vec![0; (width * height).div_ceil(64)],
        }
    }

    /// Grid with every pixel inside `rect` set (clipped to the grid).
    pub fn from_rect(width: usize, height: usize, rect: BoundingBox) -> Self {
        let mut g = Self::new(width, height);
        let x1 = (rect.right() as usize).min(width);
        let y1 = (rect.bottom() as usize).min(height);
        for y in (rect.y as usize).min(height)..y1 {
            for x in (rect.x as usize).min(width)..x1 {
                g.set(x, y, true);
            }
        }
        g
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        let i = y * self.width + x;
        self.words[i >> 6] >> (i & 63) & 1 == 1
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> bool {
        self.words[i >> 6] >> (i & 63) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        let i = y * self.width + x;
        if on {
            self.words[i >> 6] |= 1 << (i & 63);
        } else {
            self.words[i >> 6] &= !(1 << (i & 63));
        }
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn same_size(&self, other: &BitGrid) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn union_with(&mut self, other: &BitGrid) -> Result<()> {
        if !self.same_size(other) {
            return Err(Error::Contract(format!(
                "mask {}x{} is not congruent with {}x{}",
                other.width, other.height, self.width, self.height
            )));
        }
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
        Ok(())
    }

    /// Iterate `(x, y)` of set pixels in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.words.iter().enumerate().flat_map(move |(wi, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(wi * 64 + b)
            })
            .map(move |i| (i % w, i / w))
        })
    }

    /// Tightest box enclosing the set pixels, `None` for an empty grid.
    pub fn bbox(&self) -> Option<BoundingBox> {
        let mut min_x = usize::MAX;
        let mut min_y = usize::MAX;
        let mut max_x = 0;
        let mut max_y = 0;
        let mut any = false;
        for (x, y) in self.iter_set() {
            any = true;
            min_x = min_x.min(x);
            max_x = max_x.max(x);
            min_y = min_y.min(y);
            max_y = max_y.max(y);
        }
        any.then(|| {
            BoundingBox::new(
                min_x as u32,
                min_y as u32,
                (max_x - min_x + 1) as u32,
                (max_y - min_y + 1) as u32,
            )
        })
    }

    /// Dilation with a `(2r+1)²` square structuring element.
    pub fn dilate(&self, radius: usize) -> BitGrid {
        if radius == 0 {
            return self.clone();
        }
        let (w, h) = (self.width, self.height);
        let mut horiz = BitGrid::new(w, h);
        for y in 0..h {
            // distance to the most recent set pixel to the left, then right
            let mut last: Option<usize> = None;
            for x in 0..w {
                if self.get(x, y) {
                    last = Some(x);
                }
                if matches!(last, Some(l) if x - l <= radius) {
                    horiz.set(x, y, true);
                }
            }
            let mut next: Option<usize> = None;
            for x in (0..w).rev() {
                if self.get(x, y) {
                    next = Some(x);
                }
                if matches!(next, Some(n) if n - x <= radius) {
                    horiz.set(x, y, true);
                }
            }
        }
        let mut out = BitGrid::new(w, h);
        for x in 0..w {
            let mut last: Option<usize> = None;
            for y in 0..h {
                if horiz.get(x, y) {
                    last = Some(y);
                }
                if matches!(last, Some(l) if y - l <= radius) {
                    out.set(x, y, true);
                }
            }
            let mut next: Option<usize> = None;
            for y in (0..h).rev() {
                if horiz.get(x, y) {
                    next = Some(y);
                }
                if matches!(next, Some(n) if n - y <= radius) {
                    out.set(x, y, true);
                }
            }
        }
        out
    }

    /// Uncompressed run-length counts over the row-major pixel order, starting
    /// with a (possibly empty) run of zeros.
    pub fn to_rle(&self) -> Vec<u32> {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for i in 0..self.width * self.height {
            let bit = self.get_index(i);
            if bit != current {
                counts.push(run);
                run = 0;
                current = bit;
            }
            run += 1;
        }
        counts.push(run);
        counts
    }

    pub fn from_rle(width: usize, height: usize, counts: &[u32]) -> Result<Self> {
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        if total != (width * height) as u64 {
            return Err(Error::Contract(format!(
                "rle covers {total} pixels, frame has {}",
                width * height
            )));
        }
        let mut g = BitGrid::new(width, height);
        let mut pos = 0usize;
        for (k, &c) in counts.iter().enumerate() {
            let c = c as usize;
            if k % 2 == 1 {
                for i in pos..pos + c {
                    g.words[i >> 6] |= 1 << (i & 63);
                }
            }
            pos += c;
        }
        Ok(g)
    }
}

/// One segmented object: label, occupancy bits and derived tight box.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceMask {
    label: u32,
    bits: BitGrid,
    pixel_count: usize,
    bbox: BoundingBox,
}

impl InstanceMask {
    pub fn new(label: u32, bits: BitGrid) -> Result<Self> {
        if label == 0 {
            return Err(Error::Contract("mask label must be positive".into()));
        }
        let bbox = mask_to_bbox(&bits)?;
        let pixel_count = bits.count();
        Ok(Self {
            label,
            bits,
            pixel_count,
            bbox,
        })
    }

    pub fn from_rect(label: u32, width: usize, height: usize, rect: BoundingBox) -> Result<Self> {
        Self::new(label, BitGrid::from_rect(width, height, rect))
    }

    pub fn label(&self) -> u32 {
        self.label
    }

    pub fn bits(&self) -> &BitGrid {
        &self.bits
    }

    pub fn pixel_count(&self) -> usize {
        self.pixel_count
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    pub fn width(&self) -> usize {
        self.bits.width()
    }

    pub fn height(&self) -> usize {
        self.bits.height()
    }

    /// Mean `(x, y)` of the set pixels.
    pub fn centroid(&self) -> (f64, f64) {
        let (sx, sy) = self.bits.iter_set().fold((0.0, 0.0), |(sx, sy), (x, y)| {
            (sx + x as f64, sy + y as f64)
        });
        let n = self.pixel_count as f64;
        (sx / n, sy / n)
    }
}

/// Tightest axis-aligned box around the set bits.
pub fn mask_to_bbox(bits: &BitGrid) -> Result<BoundingBox> {
    bits.bbox().ok_or(Error::EmptyMask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bbox_examples() {
        let mut g = BitGrid::new(16, 16);
        g.set(7, 3, true);
        assert_eq!(mask_to_bbox(&g).unwrap(), BoundingBox::new(7, 3, 1, 1));

        let full = BitGrid::from_rect(32, 32, BoundingBox::new(0, 0, 32, 32));
        assert_eq!(mask_to_bbox(&full).unwrap(), BoundingBox::new(0, 0, 32, 32));

        let mut two = BitGrid::new(16, 16);
        two.set(2, 2, true);
        two.set(9, 5, true);
        assert_eq!(mask_to_bbox(&two).unwrap(), BoundingBox::new(2, 2, 8, 4));
    }

    #[test]
    fn empty_mask_is_rejected() {
        let g = BitGrid::new(16, 16);
        assert!(matches!(mask_to_bbox(&g), Err(Error::EmptyMask)));
        assert!(matches!(InstanceMask::new(1, g), Err(Error::EmptyMask)));
    }

    #[test]
    fn dilation_grows_square() {
        let g = BitGrid::from_rect(64, 64, BoundingBox::new(20, 20, 10, 10));
        let d = g.dilate(2);
        assert_eq!(
            d,
            BitGrid::from_rect(64, 64, BoundingBox::new(18, 18, 14, 14))
        );
        assert_eq!(g.dilate(0), g);
    }

    #[test]
    fn rle_starts_with_zero_run() {
        let mut g = BitGrid::new(8, 8);
        g.set(0, 0, true);
        g.set(1, 0, true);
        assert_eq!(g.to_rle(), vec![0, 2, 62]);
        assert!(BitGrid::from_rle(8, 8, &[0, 2, 61]).is_err());
    }

    proptest! {
        #[test]
        fn rle_round_trips_and_bbox_bounds_count(
            pixels in proptest::collection::vec((0usize..24, 0usize..20), 1..60)
        ) {
            let mut g = BitGrid::new(24, 20);
            for &(x, y) in &pixels {
                g.set(x, y, true);
            }
            prop_assert_eq!(&BitGrid::from_rle(24, 20, &g.to_rle()).unwrap(), &g);
            let m = InstanceMask::new(3, g).unwrap();
            prop_assert!(m.bbox().area() >= m.pixel_count() as u64);
            for (x, y) in m.bits().iter_set() {
                let b = m.bbox();
                prop_assert!(x as u32 >= b.x && (x as u32) < b.right());
                prop_assert!(y as u32 >= b.y && (y as u32) < b.bottom());
            }
        }
    }
}
