//! Binary morphology with a disk structuring element.
//!
//! [`dilate`] treats pixels outside the image as unset and [`erode`] ignores
//! them. [`morph_close`] instead works on the unbounded plane: the mask is
//! zero-padded by the radius before dilating, so nothing is created along the
//! image border. Closing is idempotent and fixes both the empty and the full
//! mask.

use crate::Grid;

/// Half-width of the disk row at vertical offset `dy`, for `dy` in `-r..=r`.
fn disk_rows(radius: usize) -> Vec<(isize, usize)> {
    let r = radius as isize;
    (-r..=r)
        .map(|dy| {
            let rem = (r * r - dy * dy) as usize;
            let mut w = (rem as f64).sqrt() as usize;
            while (w + 1) * (w + 1) <= rem {
                w += 1;
            }
            while w * w > rem {
                w -= 1;
            }
            (dy, w)
        })
        .collect()
}

/// Per-row prefix counts of set pixels: `prefix[y * (w + 1) + x]` = set pixels in `[0, x)`.
fn row_prefix(mask: &Grid<bool>) -> Vec<u32> {
    let (w, h) = mask.dims();
    let mut prefix = vec![0u32; (w + 1) * h];
    for y in 0..h {
        let row = &mut prefix[y * (w + 1)..(y + 1) * (w + 1)];
        for x in 0..w {
            row[x + 1] = row[x] + u32::from(mask[(x, y)]);
        }
    }
    prefix
}

fn sweep(mask: &Grid<bool>, radius: usize, dilate: bool) -> Grid<bool> {
    let (w, h) = mask.dims();
    if radius == 0 || w == 0 || h == 0 {
        return mask.clone();
    }
    let prefix = row_prefix(mask);
    let rows = disk_rows(radius);
    Grid::from_fn(w, h, |x, y| {
        let mut hit = !dilate;
        for &(dy, half) in &rows {
            let sy = y as isize + dy;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            let lo = x.saturating_sub(half);
            let hi = (x + half + 1).min(w);
            let base = sy as usize * (w + 1);
            let count = (prefix[base + hi] - prefix[base + lo]) as usize;
            if dilate && count > 0 {
                hit = true;
                break;
            }
            if !dilate && count < hi - lo {
                hit = false;
                break;
            }
        }
        hit
    })
}

pub fn dilate(mask: &Grid<bool>, radius: usize) -> Grid<bool> {
    sweep(mask, radius, true)
}

pub fn erode(mask: &Grid<bool>, radius: usize) -> Grid<bool> {
    sweep(mask, radius, false)
}

/// Dilation followed by erosion with the same disk. Radius 0 is the identity.
pub fn morph_close(mask: &Grid<bool>, radius: usize) -> Grid<bool> {
    let (w, h) = mask.dims();
    let r = radius;
    let padded =
        Grid::from_fn(w + 2 * r, h + 2 * r, |x, y| x >= r && y >= r && x < w + r && y < h + r && mask[(x - r, y - r)]);
    let closed = erode(&dilate(&padded, r), r);
    Grid::from_fn(w, h, |x, y| closed[(x + r, y + r)])
}
