//! Boundary distances between predicted and reference regions.
//!
//! A boundary pixel is a class pixel that touches the image border or has a
//! 4-neighbour of another class. Distances are pooled from both directions
//! (prediction to reference and back) before summarizing.

use crate::image::Image;

/// Boundary pixels of `class` as a row-major flag plane.
pub fn boundary(mask: &Image, class: u8) -> Vec<bool> {
    let (w, h) = (mask.width(), mask.height());
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) != class {
                continue;
            }
            let edge = x == 0 || y == 0 || x + 1 == w || y + 1 == h;
            out[y * w + x] = edge
                || mask.get(x - 1, y) != class
                || mask.get(x + 1, y) != class
                || mask.get(x, y - 1) != class
                || mask.get(x, y + 1) != class;
        }
    }
    out
}

/// Squared distance along one line to the nearest finite site, by the lower
/// envelope of parabolas. Only finite entries act as sites.
fn envelope_1d(f: &[f64], out: &mut [f64], sites: &mut Vec<usize>, starts: &mut Vec<f64>) {
    sites.clear();
    starts.clear();
    for (q, &fq) in f.iter().enumerate() {
        if !fq.is_finite() {
            continue;
        }
        let qf = q as f64;
        loop {
            match sites.last() {
                None => {
                    sites.push(q);
                    starts.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&v) => {
                    let vf = v as f64;
                    let s = ((fq + qf * qf) - (f[v] + vf * vf)) / (2.0 * (qf - vf));
                    if s <= *starts.last().expect("parallel stacks") {
                        sites.pop();
                        starts.pop();
                    } else {
                        sites.push(q);
                        starts.push(s);
                        break;
                    }
                }
            }
        }
    }
    if sites.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (x, o) in out.iter_mut().enumerate() {
        let xf = x as f64;
        while k + 1 < sites.len() && starts[k + 1] < xf {
            k += 1;
        }
        let d = xf - sites[k] as f64;
        *o = d * d + f[sites[k]];
    }
}

/// Exact Euclidean distance from every pixel to the nearest set pixel
/// (infinite when the set is empty).
pub fn distance_transform(set: &[bool], width: usize, height: usize) -> Vec<f64> {
    assert_eq!(set.len(), width * height, "set plane size");
    let mut grid: Vec<f64> = set.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let (mut sites, mut starts) = (Vec::new(), Vec::new());
    let mut col = vec![0.0; height];
    let mut col_out = vec![0.0; height];
    for x in 0..width {
        for y in 0..height {
            col[y] = grid[y * width + x];
        }
        envelope_1d(&col, &mut col_out, &mut sites, &mut starts);
        for y in 0..height {
            grid[y * width + x] = col_out[y];
        }
    }
    let mut row_out = vec![0.0; width];
    for y in 0..height {
        envelope_1d(&grid[y * width..(y + 1) * width], &mut row_out, &mut sites, &mut starts);
        grid[y * width..(y + 1) * width].copy_from_slice(&row_out);
    }
    grid.iter().map(|d| d.sqrt()).collect()
}

/// Pooled boundary distances in both directions, or `None` when either
/// region is empty.
pub fn pooled_distances(pred: &Image, gt: &Image, class: u8) -> Option<Vec<f64>> {
    assert_eq!((pred.width(), pred.height()), (gt.width(), gt.height()), "mask sizes differ");
    let (w, h) = (pred.width(), pred.height());
    let bp = boundary(pred, class);
    let bg = boundary(gt, class);
    if !bp.iter().any(|&b| b) || !bg.iter().any(|&b| b) {
        return None;
    }
    let to_gt = distance_transform(&bg, w, h);
    let to_pred = distance_transform(&bp, w, h);
    let mut d: Vec<f64> = bp
        .iter()
        .zip(&to_gt)
        .filter(|(b, _)| **b)
        .map(|(_, &d)| d)
        .collect();
    d.extend(bg.iter().zip(&to_pred).filter(|(b, _)| **b).map(|(_, &d)| d));
    Some(d)
}

/// Nearest-rank percentile (`q` in `(0, 1]`) of unsorted values.
pub fn nearest_rank(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// 95th percentile of the pooled boundary distances.
pub fn hd95(pred: &Image, gt: &Image, class: u8) -> Option<f64> {
    pooled_distances(pred, gt, class).map(|d| nearest_rank(&d, 0.95))
}

/// Mean of the pooled boundary distances.
pub fn asd(pred: &Image, gt: &Image, class: u8) -> Option<f64> {
    pooled_distances(pred, gt, class).map(|d| d.iter().sum::<f64>() / d.len() as f64)
}
