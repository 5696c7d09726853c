use super::{Aabb, Mask};

/// Cells of the grid spanned by every box face coordinate; each cell lies
/// entirely inside or outside the union.
struct Compressed {
    coords: Vec<Vec<f64>>,
    cells: Vec<(Aabb, bool)>,
}

impl Compressed {
    fn new(frame: &[Aabb], covered: impl Fn(&[f64]) -> bool) -> Compressed {
        let d = frame[0].dim();
        let mut coords = Vec::with_capacity(d);
        for k in 0..d {
            let mut c: Vec<f64> = frame.iter().flat_map(|b| [b.lo_k(k), b.hi_k(k)]).collect();
            c.sort_by(f64::total_cmp);
            c.dedup();
            coords.push(c);
        }
        let counts: Vec<usize> = coords.iter().map(|c| c.len() - 1).collect();
        let total: usize = counts.iter().product();
        let mut cells = Vec::with_capacity(total);
        let mut idx = vec![0usize; d];
        for f in 0..total {
            let mut r = f;
            for k in (0..d).rev() {
                idx[k] = r % counts[k];
                r /= counts[k];
            }
            let lo: Vec<f64> = (0..d).map(|k| coords[k][idx[k]]).collect();
            let hi: Vec<f64> = (0..d).map(|k| coords[k][idx[k] + 1]).collect();
            let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
            if let Ok(b) = Aabb::from_bounds(&lo, &hi) {
                cells.push((b, covered(&mid)));
            }
        }
        Compressed { coords, cells }
    }
}

/// Disjoint boxes tiling `hull(frame)`, split by the `covered` predicate
/// evaluated at cell midpoints.
pub(crate) fn tile(frame: &[Aabb], covered: impl Fn(&[f64]) -> bool) -> (Vec<Aabb>, Vec<Aabb>) {
    let c = Compressed::new(frame, covered);
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for (b, cov) in c.cells {
        if cov {
            inside.push(b);
        } else {
            outside.push(b);
        }
    }
    (inside, outside)
}

pub(crate) fn union_volume(boxes: &[Aabb]) -> f64 {
    if boxes.is_empty() {
        return 0.0;
    }
    if boxes.len() == 1 {
        return boxes[0].volume();
    }
    let c = Compressed::new(boxes, |m| boxes.iter().any(|b| b.contains(m)));
    c.cells
        .iter()
        .filter(|(_, inside)| *inside)
        .map(|(b, _)| b.volume())
        .sum()
}

pub(crate) fn union_distance(boxes: &[Aabb], x: &[f64]) -> f64 {
    let inside = boxes.iter().any(|b| b.contains(x));
    if !inside {
        return boxes
            .iter()
            .map(|b| b.distance_outside(x))
            .fold(f64::INFINITY, f64::min);
    }
    if boxes.len() == 1 {
        return boxes[0].distance_inside(x);
    }
    let hull = Aabb::hull(boxes).expect("nonempty");
    let c = Compressed::new(boxes, |m| boxes.iter().any(|b| b.contains(m)));
    debug_assert!(!c.coords.is_empty());
    c.cells
        .iter()
        .filter(|(_, covered)| !covered)
        .map(|(b, _)| b.distance_outside(x))
        .fold(hull.distance_inside(x), f64::min)
}

pub(crate) fn complement_distance(outer: &Aabb, holes: &[Aabb], x: &[f64]) -> f64 {
    let in_hole = holes.iter().any(|h| h.contains_open(x));
    if !in_hole {
        if outer.contains(x) {
            return holes
                .iter()
                .map(|h| h.distance_outside(x))
                .fold(outer.distance_inside(x), f64::min);
        }
        return outer.distance_outside(x);
    }
    let clipped: Vec<Aabb> = holes.iter().filter_map(|h| h.intersect(outer)).collect();
    let mut frame = clipped.clone();
    frame.push(outer.clone());
    let c = Compressed::new(&frame, |m| !clipped.iter().any(|h| h.contains(m)));
    c.cells
        .iter()
        .filter(|(_, free)| *free)
        .map(|(b, _)| b.distance_outside(x))
        .fold(f64::INFINITY, f64::min)
}

/// Exact squared Euclidean distance transform (in cell units) with nearest
/// seed indices, by the separable lower-envelope method. `seeds[i]` marks
/// feature cells; the grid is row-major with the last axis fastest.
pub fn edt_feature_transform(shape: &[usize], seeds: &[bool]) -> (Vec<f64>, Vec<usize>) {
    let total: usize = shape.iter().product();
    assert_eq!(total, seeds.len());
    let mut g: Vec<f64> = seeds
        .iter()
        .map(|&s| if s { 0.0 } else { f64::INFINITY })
        .collect();
    let mut feat: Vec<usize> = (0..total)
        .map(|i| if seeds[i] { i } else { usize::MAX })
        .collect();
    let d = shape.len();
    let mut strides = vec![1usize; d];
    for k in (0..d - 1).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    let mut line_g = Vec::new();
    let mut line_f = Vec::new();
    let mut out_g = Vec::new();
    let mut out_f = Vec::new();
    let mut v = Vec::new();
    let mut z = Vec::new();
    for axis in 0..d {
        let n = shape[axis];
        let stride = strides[axis];
        for start in 0..total {
            // Visit each line once, from its first cell.
            if (start / stride) % n != 0 {
                continue;
            }
            line_g.clear();
            line_f.clear();
            for i in 0..n {
                line_g.push(g[start + i * stride]);
                line_f.push(feat[start + i * stride]);
            }
            lower_envelope(&line_g, &mut v, &mut z, &mut out_g, &mut out_f, &line_f);
            for i in 0..n {
                g[start + i * stride] = out_g[i];
                feat[start + i * stride] = out_f[i];
            }
        }
    }
    (g, feat)
}

fn lower_envelope(
    f: &[f64],
    v: &mut Vec<usize>,
    z: &mut Vec<f64>,
    out: &mut Vec<f64>,
    out_feat: &mut Vec<usize>,
    feat: &[usize],
) {
    let n = f.len();
    out.clear();
    out_feat.clear();
    v.clear();
    z.clear();
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64))
                        / (2.0 * (q as f64 - p as f64));
                    if s <= *z.last().expect("z") {
                        v.pop();
                        z.pop();
                        continue;
                    }
                    v.push(q);
                    z.push(s);
                    break;
                }
            }
        }
    }
    if v.is_empty() {
        out.resize(n, f64::INFINITY);
        out_feat.resize(n, usize::MAX);
        return;
    }
    let mut k = 0;
    for q in 0..n {
        while k + 1 < v.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        out.push(dq * dq + f[p]);
        out_feat.push(feat[p]);
    }
}

/// Nearest opposite-type cell for every cell of a mask, computed on the
/// mask padded with one layer of empty cells.
#[derive(Debug, Clone)]
pub struct MaskDistance {
    padded: Vec<usize>,
    inside_feat: Vec<usize>,
    outside_feat: Vec<usize>,
    bits: Vec<bool>,
}

impl MaskDistance {
    pub fn build(m: &Mask) -> MaskDistance {
        let d = m.dim();
        let padded: Vec<usize> = m.shape.iter().map(|n| n + 2).collect();
        let total: usize = padded.iter().product();
        let mut bits = vec![false; total];
        for (f, &b) in m.bits.iter().enumerate() {
            if b {
                let idx = m.unflat(f);
                let pf = idx
                    .iter()
                    .zip(&padded)
                    .fold(0, |acc, (&i, &n)| acc * n + i + 1);
                bits[pf] = true;
            }
        }
        let _ = d;
        let not_bits: Vec<bool> = bits.iter().map(|b| !b).collect();
        // Inside cells look for the nearest outside cell and vice versa.
        let (_, inside_feat) = edt_feature_transform(&padded, &not_bits);
        let (_, outside_feat) = edt_feature_transform(&padded, &bits);
        MaskDistance {
            padded,
            inside_feat,
            outside_feat,
            bits,
        }
    }

    fn unflat(&self, mut f: usize) -> Vec<usize> {
        let d = self.padded.len();
        let mut idx = vec![0; d];
        for k in (0..d).rev() {
            idx[k] = f % self.padded[k];
            f /= self.padded[k];
        }
        idx
    }

    fn cell_box(&self, m: &Mask, f: usize) -> Aabb {
        let idx = self.unflat(f);
        let lo: Vec<f64> = idx
            .iter()
            .zip(&m.origin)
            .map(|(&i, o)| o + (i as f64 - 1.0) * m.h)
            .collect();
        let hi: Vec<f64> = lo.iter().map(|v| v + m.h).collect();
        Aabb::from_bounds(&lo, &hi).expect("cell box")
    }

    /// Distance from x to the union of cells of the opposite type, searching
    /// the feature candidates of the 3^d neighbourhood of x's cell.
    pub fn distance(&self, m: &Mask, x: &[f64]) -> f64 {
        let d = m.dim();
        let mut pidx = Vec::with_capacity(d);
        for k in 0..d {
            let f = ((x[k] - m.origin[k]) / m.h).floor() as i64 + 1;
            pidx.push(f.clamp(0, self.padded[k] as i64 - 1));
        }
        let flat = |idx: &[i64]| {
            idx.iter()
                .zip(&self.padded)
                .fold(0usize, |acc, (&i, &n)| acc * n + i as usize)
        };
        let here = flat(&pidx);
        let inside = self.bits[here];
        let feats = if inside {
            &self.inside_feat
        } else {
            &self.outside_feat
        };
        let mut best = f64::INFINITY;
        let offsets = 3usize.pow(d as u32);
        let mut nb = pidx.clone();
        for o in 0..offsets {
            let mut r = o;
            let mut ok = true;
            for k in 0..d {
                nb[k] = pidx[k] + (r % 3) as i64 - 1;
                r /= 3;
                if nb[k] < 0 || nb[k] >= self.padded[k] as i64 {
                    ok = false;
                }
            }
            if !ok {
                continue;
            }
            let f = flat(&nb);
            let cand = if self.bits[f] != inside { f } else { feats[f] };
            if cand == usize::MAX {
                continue;
            }
            best = best.min(self.cell_box(m, cand).distance_outside(x));
        }
        best
    }

    /// Distance from the centre of unpadded cell `f` to the opposite type.
    pub fn center_distance(&self, m: &Mask, f: usize) -> f64 {
        self.distance(m, &m.cell_center(&m.unflat(f)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(shape: &[usize], seeds: &[bool]) -> Vec<f64> {
        let n1 = shape[1];
        (0..seeds.len())
            .map(|i| {
                let (a, b) = ((i / n1) as f64, (i % n1) as f64);
                (0..seeds.len())
                    .filter(|&j| seeds[j])
                    .map(|j| {
                        let (c, e) = ((j / n1) as f64, (j % n1) as f64);
                        (a - c).powi(2) + (b - e).powi(2)
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn edt_matches_brute_force() {
        let shape = [9, 7];
        let seeds: Vec<bool> = (0..63).map(|i| (i * 37 + 11) % 13 == 0).collect();
        let (g, feat) = edt_feature_transform(&shape, &seeds);
        let b = brute(&shape, &seeds);
        for i in 0..63 {
            assert_eq!(g[i], b[i], "cell {i}");
            let j = feat[i];
            assert!(seeds[j]);
        }
    }
}
