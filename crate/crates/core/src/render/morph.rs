//! Binary morphology on row-major boolean images.

fn disc_offsets(radius: u32) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// A pixel is set when any pixel of the disc around it is set.
pub fn dilate(input: &[bool], width: usize, height: usize, radius: u32) -> Vec<bool> {
    let offsets = disc_offsets(radius);
    let mut out = vec![false; input.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = offsets.iter().any(|&(dx, dy)| {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                nx >= 0 && ny >= 0 && (nx as usize) < width && (ny as usize) < height && input[ny as usize * width + nx as usize]
            });
        }
    }
    out
}

/// A pixel stays set only when the whole disc around it is set. Pixels
/// outside the image count as unset.
pub fn erode(input: &[bool], width: usize, height: usize, radius: u32) -> Vec<bool> {
    let offsets = disc_offsets(radius);
    let mut out = vec![false; input.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = offsets.iter().all(|&(dx, dy)| {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                nx >= 0 && ny >= 0 && (nx as usize) < width && (ny as usize) < height && input[ny as usize * width + nx as usize]
            });
        }
    }
    out
}

/// Dilation followed by erosion with the same disc, evaluated as if the image
/// continued with unset pixels in every direction. The result always contains
/// the input and never grows along the image border.
pub fn close(input: &[bool], width: usize, height: usize, radius: u32) -> Vec<bool> {
    if radius == 0 {
        return input.to_vec();
    }
    let r = radius as usize;
    let (pw, ph) = (width + 2 * r, height + 2 * r);
    let mut padded = vec![false; pw * ph];
    for y in 0..height {
        padded[(y + r) * pw + r..(y + r) * pw + r + width].copy_from_slice(&input[y * width..(y + 1) * width]);
    }
    let closed = erode(&dilate(&padded, pw, ph, radius), pw, ph, radius);
    let mut out = Vec::with_capacity(input.len());
    for y in 0..height {
        out.extend_from_slice(&closed[(y + r) * pw + r..(y + r) * pw + r + width]);
    }
    out
}

/// Clears 8-connected components with fewer than `min_area` pixels.
pub fn remove_small_components(mask: &mut [bool], width: usize, height: usize, min_area: usize) {
    if min_area <= 1 {
        return;
    }
    let mut seen = vec![false; mask.len()];
    let mut stack = Vec::new();
    let mut component = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        component.clear();
        stack.push(start);
        seen[start] = true;
        while let Some(i) = stack.pop() {
            component.push(i);
            let (x, y) = ((i % width) as i64, (i / width) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx as usize >= width || ny as usize >= height {
                        continue;
                    }
                    let j = ny as usize * width + nx as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if component.len() < min_area {
            for &i in &component {
                mask[i] = false;
            }
        }
    }
}
