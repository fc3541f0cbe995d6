use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Binary mask held as run lengths over the row-major pixel sequence,
/// alternating zero-run / one-run and always starting with a zero-run
/// (possibly of length 0). Canonical form: only the leading zero-run may be
/// empty, runs sum to width*height, and runs may cross row boundaries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    runs: Vec<u32>,
    ones: u64,
    /// Tight half-open pixel bounds [x0, y0, x1, y1]; all zero when empty.
    bbox: [u32; 4],
}

impl Mask {
    pub fn empty(width: u32, height: u32) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Mask { width, height, runs: vec![area_u32(width, height)?], ones: 0, bbox: [0; 4] })
    }

    /// Builds a mask from raw run counts, validating canonical form.
    pub fn from_runs(width: u32, height: u32, runs: Vec<u32>) -> Result<Self> {
        check_dims(width, height)?;
        if runs.is_empty() {
            return Err(Error::Domain("mask needs at least one run".into()));
        }
        if runs.iter().skip(1).any(|&c| c == 0) {
            return Err(Error::Domain("only the leading zero-run may be empty".into()));
        }
        let total: u64 = runs.iter().map(|&c| c as u64).sum();
        let area = width as u64 * height as u64;
        if total != area {
            return Err(Error::Domain(format!("runs cover {total} pixels, image has {area}")));
        }
        let ones = runs.iter().skip(1).step_by(2).map(|&c| c as u64).sum();
        let bbox = bbox_of_runs(width, &runs);
        Ok(Mask { width, height, runs, ones, bbox })
    }

    pub fn from_dense(width: u32, height: u32, bits: &[bool]) -> Result<Self> {
        check_dims(width, height)?;
        let area = width as u64 * height as u64;
        if bits.len() as u64 != area {
            return Err(Error::Domain("dense buffer length differs from image area".into()));
        }
        let mut b = MaskBuilder::new(width, height)?;
        let mut i = 0usize;
        while i < bits.len() {
            if bits[i] {
                let start = i;
                while i < bits.len() && bits[i] {
                    i += 1;
                }
                b.push_span(start as u64, (i - start) as u64)?;
            } else {
                i += 1;
            }
        }
        Ok(b.finish())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn runs(&self) -> &[u32] {
        &self.runs
    }

    pub fn ones(&self) -> u64 {
        self.ones
    }

    pub fn is_empty(&self) -> bool {
        self.ones == 0
    }

    pub fn bbox(&self) -> [u32; 4] {
        self.bbox
    }

    pub fn bbox_area(&self) -> u64 {
        let [x0, y0, x1, y1] = self.bbox;
        (x1 - x0) as u64 * (y1 - y0) as u64
    }

    pub fn to_dense(&self) -> Vec<bool> {
        let mut out = vec![false; (self.width as u64 * self.height as u64) as usize];
        for (start, len) in self.one_spans() {
            out[start as usize..(start + len) as usize].fill(true);
        }
        out
    }

    /// Iterates (flat start index, length) over the one-runs.
    pub fn one_spans(&self) -> OneSpans<'_> {
        OneSpans { runs: &self.runs, idx: 0, pos: 0 }
    }

    /// Pixels set in both masks. Dimensions must already agree.
    pub fn intersection_ones(&self, other: &Mask) -> u64 {
        debug_assert_eq!((self.width, self.height), (other.width, other.height));
        let mut total = 0u64;
        let mut a = self.one_spans();
        let mut b = other.one_spans();
        let (mut ra, mut rb) = (a.next(), b.next());
        while let (Some((sa, la)), Some((sb, lb))) = (ra, rb) {
            let lo = sa.max(sb);
            let hi = (sa + la).min(sb + lb);
            if hi > lo {
                total += hi - lo;
            }
            if sa + la <= sb + lb {
                ra = a.next();
            } else {
                rb = b.next();
            }
        }
        total
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::Domain("mask dimensions differ".into()));
        }
        let mut b = MaskBuilder::new(self.width, self.height)?;
        let mut a_it = self.one_spans();
        let mut b_it = other.one_spans();
        let (mut ra, mut rb) = (a_it.next(), b_it.next());
        let mut cur: Option<(u64, u64)> = None;
        // Sweep both span streams in flat order, coalescing overlaps.
        while ra.is_some() || rb.is_some() {
            let take_a = match (ra, rb) {
                (Some((sa, _)), Some((sb, _))) => sa <= sb,
                (Some(_), None) => true,
                _ => false,
            };
            let (s, l) = if take_a {
                let v = ra.unwrap();
                ra = a_it.next();
                v
            } else {
                let v = rb.unwrap();
                rb = b_it.next();
                v
            };
            cur = match cur {
                None => Some((s, l)),
                Some((cs, cl)) if s <= cs + cl => Some((cs, cl.max(s + l - cs))),
                Some((cs, cl)) => {
                    b.push_span(cs, cl)?;
                    Some((s, l))
                }
            };
        }
        if let Some((cs, cl)) = cur {
            b.push_span(cs, cl)?;
        }
        Ok(b.finish())
    }

    /// Morphological erosion with a square (2r+1)^2 structuring element;
    /// pixels outside the image count as background, so blobs touching the
    /// border erode there too.
    pub fn erode(&self, r: u32) -> Mask {
        if r == 0 || self.is_empty() {
            return self.clone();
        }
        let (w, h) = (self.width as usize, self.height as usize);
        let r = r as usize;
        let dense = self.to_dense();
        // Horizontal then vertical pass; separable for a square element.
        let mut horiz = vec![false; w * h];
        for y in 0..h {
            let row = &dense[y * w..(y + 1) * w];
            let hrow = &mut horiz[y * w..(y + 1) * w];
            for x in 0..w {
                if x >= r && x + r < w {
                    hrow[x] = row[x - r..=x + r].iter().all(|&b| b);
                }
            }
        }
        let mut out = vec![false; w * h];
        for y in r..h.saturating_sub(r) {
            for x in 0..w {
                let mut ok = true;
                for yy in y - r..=y + r {
                    if !horiz[yy * w + x] {
                        ok = false;
                        break;
                    }
                }
                out[y * w + x] = ok;
            }
        }
        Mask::from_dense(self.width, self.height, &out).expect("dimensions preserved")
    }

    /// Splits into 8-connected components, scan-ordered by first pixel,
    /// dropping components below `min_area` pixels.
    pub fn connected_components(&self, min_area: u64) -> Vec<Mask> {
        let (w, h) = (self.width as usize, self.height as usize);
        let dense = self.to_dense();
        let mut label = vec![0u32; w * h];
        let mut comps: Vec<Mask> = Vec::new();
        let mut next = 1u32;
        let mut stack: Vec<usize> = Vec::new();
        let mut pixels: Vec<usize> = Vec::new();
        for start in 0..dense.len() {
            if !dense[start] || label[start] != 0 {
                continue;
            }
            pixels.clear();
            stack.push(start);
            label[start] = next;
            while let Some(p) = stack.pop() {
                pixels.push(p);
                let (x, y) = (p % w, p / w);
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let q = ny as usize * w + nx as usize;
                        if dense[q] && label[q] == 0 {
                            label[q] = next;
                            stack.push(q);
                        }
                    }
                }
            }
            next += 1;
            if pixels.len() as u64 >= min_area {
                let mut bits = vec![false; w * h];
                for &p in &pixels {
                    bits[p] = true;
                }
                comps.push(Mask::from_dense(self.width, self.height, &bits).unwrap());
            }
        }
        comps
    }
}

pub struct OneSpans<'a> {
    runs: &'a [u32],
    idx: usize,
    pos: u64,
}

impl Iterator for OneSpans<'_> {
    type Item = (u64, u64);

    fn next(&mut self) -> Option<(u64, u64)> {
        while self.idx < self.runs.len() {
            let len = self.runs[self.idx] as u64;
            let is_ones = self.idx % 2 == 1;
            let start = self.pos;
            self.pos += len;
            self.idx += 1;
            if is_ones {
                return Some((start, len));
            }
        }
        None
    }
}

/// Streaming mask constructor fed with strictly increasing one-spans in
/// flat (row-major) index order.
pub struct MaskBuilder {
    width: u32,
    height: u32,
    runs: Vec<u32>,
    filled: u64,
    ones: u64,
}

impl MaskBuilder {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        check_dims(width, height)?;
        Ok(MaskBuilder { width, height, runs: Vec::new(), filled: 0, ones: 0 })
    }

    pub fn push_span(&mut self, start: u64, len: u64) -> Result<()> {
        let area = self.width as u64 * self.height as u64;
        if start < self.filled || start + len > area || len == 0 {
            return Err(Error::Domain("span out of order or out of bounds".into()));
        }
        if start == self.filled && self.runs.len() % 2 == 0 && !self.runs.is_empty() {
            // Extends the previous one-run... only possible when a zero gap
            // of length 0 would be needed; merge instead.
            *self.runs.last_mut().unwrap() += len as u32;
        } else if start == self.filled && self.runs.is_empty() {
            self.runs.push(0);
            self.runs.push(len as u32);
        } else {
            if self.runs.is_empty() {
                self.runs.push((start - self.filled) as u32);
            } else if self.runs.len() % 2 == 0 {
                // runs currently end on a one-run boundary? even length means
                // last run was ones; push the zero gap.
                self.runs.push((start - self.filled) as u32);
            } else {
                // last run is a zero-run only when runs has odd length, which
                // cannot happen mid-stream because gaps are always followed by
                // a one-run push below.
                unreachable!("builder always leaves runs on a one-run boundary");
            }
            self.runs.push(len as u32);
        }
        self.filled = start + len;
        self.ones += len;
        Ok(())
    }

    pub fn finish(mut self) -> Mask {
        let area = self.width as u64 * self.height as u64;
        if self.runs.is_empty() {
            self.runs.push(area as u32);
        } else if self.filled < area {
            self.runs.push((area - self.filled) as u32);
        }
        let bbox = bbox_of_runs(self.width, &self.runs);
        Mask { width: self.width, height: self.height, runs: self.runs, ones: self.ones, bbox }
    }
}

fn check_dims(width: u32, height: u32) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Domain("zero mask dimensions".into()));
    }
    if width as u64 * height as u64 > u32::MAX as u64 {
        return Err(Error::Domain("image area exceeds run-length capacity".into()));
    }
    Ok(())
}

fn area_u32(width: u32, height: u32) -> Result<u32> {
    Ok((width as u64 * height as u64) as u32)
}

fn bbox_of_runs(width: u32, runs: &[u32]) -> [u32; 4] {
    let w = width as u64;
    let (mut x0, mut y0, mut x1, mut y1) = (u64::MAX, u64::MAX, 0u64, 0u64);
    let mut pos = 0u64;
    for (i, &len) in runs.iter().enumerate() {
        let len = len as u64;
        if i % 2 == 1 && len > 0 {
            let (start, end) = (pos, pos + len - 1); // inclusive flat range
            let (ry0, ry1) = (start / w, end / w);
            y0 = y0.min(ry0);
            y1 = y1.max(ry1);
            if ry0 == ry1 {
                x0 = x0.min(start % w);
                x1 = x1.max(end % w);
            } else {
                // The span wraps whole rows: it covers full width somewhere.
                x0 = 0;
                x1 = w - 1;
            }
        }
        pos += len;
    }
    if x0 == u64::MAX {
        [0; 4]
    } else {
        [x0 as u32, y0 as u32, (x1 + 1) as u32, (y1 + 1) as u32]
    }
}

// ==== mask sets ====

#[derive(Clone, Debug, PartialEq)]
pub struct MaskEntry<S> {
    pub mask: Mask,
    pub confidence: S,
}

/// An ordered collection of same-sized binary masks with confidences, the
/// common currency between query annotations and rendered hypotheses.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskSet<S> {
    pub width: u32,
    pub height: u32,
    pub masks: Vec<MaskEntry<S>>,
}

impl<S: Scalar> MaskSet<S> {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        check_dims(width, height)?;
        Ok(MaskSet { width, height, masks: Vec::new() })
    }

    pub fn push(&mut self, mask: Mask, confidence: S) -> Result<()> {
        if (mask.width, mask.height) != (self.width, self.height) {
            return Err(Error::Domain("mask dimensions differ from set".into()));
        }
        if !(confidence >= S::zero() && confidence <= S::one()) {
            return Err(Error::Domain("confidence outside [0, 1]".into()));
        }
        self.masks.push(MaskEntry { mask, confidence });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// True when the set carries no evidence at all: no masks, or only
    /// empty ones.
    pub fn is_degenerate(&self) -> bool {
        self.masks.iter().all(|m| m.mask.is_empty())
    }

    /// Union of all member masks.
    pub fn union_all(&self) -> Result<Mask> {
        let mut acc = Mask::empty(self.width, self.height)?;
        for m in &self.masks {
            acc = acc.union(&m.mask)?;
        }
        Ok(acc)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("masks {} {} {}\n", self.width, self.height, self.masks.len());
        for e in &self.masks {
            let [x0, y0, x1, y1] = e.mask.bbox();
            writeln!(s, "mask {} {x0} {y0} {x1} {y1}", e.confidence).unwrap();
            s.push_str("runs");
            for c in e.mask.runs() {
                write!(s, " {c}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty mask file"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 || h[0] != "masks" {
            return Err(Error::parse(1, "header must be 'masks <width> <height> <n>'"));
        }
        let width: u32 = h[1].parse().map_err(|e| Error::parse(1, format!("bad width: {e}")))?;
        let height: u32 = h[2].parse().map_err(|e| Error::parse(1, format!("bad height: {e}")))?;
        let n: usize = h[3].parse().map_err(|e| Error::parse(1, format!("bad count: {e}")))?;
        let mut set = MaskSet::new(width, height)?;
        for _ in 0..n {
            let (li, meta) = lines
                .next()
                .ok_or_else(|| Error::Domain("truncated mask file".into()))?;
            let m: Vec<&str> = meta.split_whitespace().collect();
            if m.len() != 6 || m[0] != "mask" {
                return Err(Error::parse(li + 1, "expected 'mask <confidence> <x0> <y0> <x1> <y1>'"));
            }
            let confidence: S = m[1]
                .parse()
                .map_err(|e| Error::parse(li + 1, format!("bad confidence: {e}")))?;
            let bbox: Vec<u32> = m[2..6]
                .iter()
                .map(|t| t.parse().map_err(|e| Error::parse(li + 1, format!("bad bbox: {e}"))))
                .collect::<Result<_>>()?;
            let (lj, runs_line) = lines
                .next()
                .ok_or_else(|| Error::Domain("truncated mask file".into()))?;
            let mut toks = runs_line.split_whitespace();
            if toks.next() != Some("runs") {
                return Err(Error::parse(lj + 1, "expected 'runs <counts...>'"));
            }
            let runs: Vec<u32> = toks
                .map(|t| t.parse().map_err(|e| Error::parse(lj + 1, format!("bad run count: {e}"))))
                .collect::<Result<_>>()?;
            let mask = Mask::from_runs(width, height, runs)
                .map_err(|e| Error::parse(lj + 1, e.to_string()))?;
            if mask.bbox() != [bbox[0], bbox[1], bbox[2], bbox[3]] {
                return Err(Error::parse(li + 1, "stored bbox disagrees with runs"));
            }
            set.push(mask, confidence)
                .map_err(|e| Error::parse(li + 1, e.to_string()))?;
        }
        if lines.next().is_some() {
            return Err(Error::Domain("trailing content after last mask".into()));
        }
        Ok(set)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_of(width: u32, height: u32, px: &[(u32, u32)]) -> Mask {
        let mut bits = vec![false; (width * height) as usize];
        for &(x, y) in px {
            bits[(y * width + x) as usize] = true;
        }
        Mask::from_dense(width, height, &bits).unwrap()
    }

    fn rect(width: u32, height: u32, x0: u32, y0: u32, w: u32, h: u32) -> Mask {
        let mut px = Vec::new();
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                px.push((x, y));
            }
        }
        mask_of(width, height, &px)
    }

    #[test]
    fn dense_round_trip_and_counts() {
        let m = mask_of(5, 3, &[(0, 0), (1, 0), (4, 2)]);
        assert_eq!(m.ones(), 3);
        assert_eq!(m.runs(), &[0, 2, 12, 1]);
        let dense = m.to_dense();
        assert_eq!(Mask::from_dense(5, 3, &dense).unwrap(), m);
    }

    #[test]
    fn empty_and_full_runs() {
        let e = Mask::empty(4, 4).unwrap();
        assert_eq!(e.runs(), &[16]);
        assert_eq!(e.bbox(), [0, 0, 0, 0]);
        let f = rect(4, 4, 0, 0, 4, 4);
        assert_eq!(f.runs(), &[0, 16]);
        assert_eq!(f.bbox(), [0, 0, 4, 4]);
    }

    #[test]
    fn runs_validation() {
        assert!(Mask::from_runs(4, 4, vec![16]).is_ok());
        assert!(Mask::from_runs(4, 4, vec![15]).is_err()); // wrong area
        assert!(Mask::from_runs(4, 4, vec![3, 0, 13]).is_err()); // inner zero
        assert!(Mask::from_runs(4, 4, vec![0, 16]).is_ok());
    }

    #[test]
    fn bbox_is_tight_and_half_open() {
        let m = rect(10, 8, 2, 3, 4, 2);
        assert_eq!(m.bbox(), [2, 3, 6, 5]);
        assert_eq!(m.bbox_area(), 8);
        let span = mask_of(4, 3, &[(3, 0), (0, 1)]); // run wraps a row edge
        assert_eq!(span.bbox(), [0, 0, 4, 2]);
    }

    #[test]
    fn intersection_counts() {
        let a = rect(8, 8, 0, 0, 4, 4);
        let b = rect(8, 8, 2, 2, 4, 4);
        assert_eq!(a.intersection_ones(&b), 4);
        assert_eq!(b.intersection_ones(&a), 4);
        assert_eq!(a.intersection_ones(&a), 16);
        assert_eq!(a.intersection_ones(&Mask::empty(8, 8).unwrap()), 0);
    }

    #[test]
    fn union_merges_spans() {
        let a = rect(8, 4, 0, 0, 3, 1);
        let b = rect(8, 4, 2, 0, 3, 1);
        let u = a.union(&b).unwrap();
        assert_eq!(u.ones(), 5);
        assert_eq!(u.bbox(), [0, 0, 5, 1]);
        let disjoint = rect(8, 4, 6, 3, 2, 1);
        let u2 = u.union(&disjoint).unwrap();
        assert_eq!(u2.ones(), 7);
    }

    #[test]
    fn erosion_shrinks_rectangles_by_one_ring() {
        let m = rect(32, 32, 5, 6, 10, 7);
        let e = m.erode(1);
        assert_eq!(e.ones(), (10 - 2) * (7 - 2));
        assert_eq!(e.bbox(), [6, 7, 14, 12]);
        // Erosion at the image border eats blobs touching it.
        let border = rect(8, 8, 0, 0, 3, 3);
        assert_eq!(border.erode(1).ones(), 1);
        // Thin structures vanish.
        assert!(rect(16, 16, 2, 2, 12, 2).erode(1).is_empty());
    }

    #[test]
    fn connected_components_eight_way() {
        // Two diagonal pixels are one 8-connected component.
        let diag = mask_of(6, 6, &[(1, 1), (2, 2)]);
        assert_eq!(diag.connected_components(1).len(), 1);
        // Separated blobs split, ordered by first scan pixel.
        let two = mask_of(8, 4, &[(6, 0), (0, 2), (1, 2)]);
        let comps = two.connected_components(1);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].ones(), 1);
        assert_eq!(comps[1].ones(), 2);
        // min_area filters.
        assert_eq!(two.connected_components(2).len(), 1);
    }

    #[test]
    fn mask_set_text_round_trip_is_bit_exact() {
        let mut set: MaskSet<f64> = MaskSet::new(16, 9).unwrap();
        set.push(rect(16, 9, 1, 1, 5, 4), 0.875).unwrap();
        set.push(Mask::empty(16, 9).unwrap(), 0.1).unwrap();
        set.push(mask_of(16, 9, &[(15, 8)]), 1.0).unwrap();
        let text = set.to_text();
        let back: MaskSet<f64> = MaskSet::from_text(&text).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn mask_set_rejects_corruption() {
        let mut set: MaskSet<f64> = MaskSet::new(8, 8).unwrap();
        set.push(rect(8, 8, 0, 0, 2, 2), 0.5).unwrap();
        let good = set.to_text();
        assert!(MaskSet::<f64>::from_text(&good.replace("mask 0.5 0 0 2 2", "mask 0.5 0 0 3 2")).is_err());
        assert!(MaskSet::<f64>::from_text(&good.replace("masks 8 8 1", "masks 8 8 2")).is_err());
        assert!(MaskSet::<f64>::from_text(&good.replace("mask 0.5", "mask 1.5")).is_err());
    }

    #[test]
    fn degenerate_detection() {
        let mut set: MaskSet<f64> = MaskSet::new(8, 8).unwrap();
        assert!(set.is_degenerate());
        set.push(Mask::empty(8, 8).unwrap(), 1.0).unwrap();
        assert!(set.is_degenerate());
        set.push(rect(8, 8, 0, 0, 1, 1), 1.0).unwrap();
        assert!(!set.is_degenerate());
    }
}
