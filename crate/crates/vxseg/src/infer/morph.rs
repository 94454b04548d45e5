//! Morphological cleanup of a label grid: small 6-connected foreground
//! components are absorbed into their surrounding majority label, and
//! fully enclosed background cavities are filled. Passes repeat until the
//! grid stops changing, which makes the operation idempotent.

use crate::tensor::IntGrid;

const NEIGHBOR_OFFSETS: [(isize, isize, isize); 6] = [
    (-1, 0, 0),
    (1, 0, 0),
    (0, -1, 0),
    (0, 1, 0),
    (0, 0, -1),
    (0, 0, 1),
];

fn components(
    data: &[u8],
    extents: [usize; 3],
    label: u8,
) -> Vec<(Vec<usize>, bool /* touches border */)> {
    let [d, h, w] = extents;
    let mut seen = vec![false; data.len()];
    let mut out = Vec::new();
    for start in 0..data.len() {
        if seen[start] || data[start] != label {
            continue;
        }
        let mut stack = vec![start];
        seen[start] = true;
        let mut voxels = Vec::new();
        let mut touches_border = false;
        while let Some(i) = stack.pop() {
            voxels.push(i);
            let z = i / (h * w);
            let y = (i / w) % h;
            let x = i % w;
            if z == 0 || y == 0 || x == 0 || z == d - 1 || y == h - 1 || x == w - 1 {
                touches_border = true;
            }
            for (dz, dy, dx) in NEIGHBOR_OFFSETS {
                let (nz, ny, nx) = (z as isize + dz, y as isize + dy, x as isize + dx);
                if nz < 0 || ny < 0 || nx < 0 || nz >= d as isize || ny >= h as isize || nx >= w as isize
                {
                    continue;
                }
                let ni = (nz as usize * h + ny as usize) * w + nx as usize;
                if !seen[ni] && data[ni] == label {
                    seen[ni] = true;
                    stack.push(ni);
                }
            }
        }
        voxels.sort_unstable();
        out.push((voxels, touches_border));
    }
    out
}

/// Majority label among the 6-neighbors just outside a component; ties
/// break toward the smaller label. None when the component has no outside
/// neighbors (it fills the whole grid).
fn surrounding_majority(data: &[u8], extents: [usize; 3], voxels: &[usize]) -> Option<u8> {
    let [d, h, w] = extents;
    let member = |i: usize| voxels.binary_search(&i).is_ok();
    let mut counts = [0usize; 4];
    let mut any = false;
    for &i in voxels {
        let z = i / (h * w);
        let y = (i / w) % h;
        let x = i % w;
        for (dz, dy, dx) in NEIGHBOR_OFFSETS {
            let (nz, ny, nx) = (z as isize + dz, y as isize + dy, x as isize + dx);
            if nz < 0 || ny < 0 || nx < 0 || nz >= d as isize || ny >= h as isize || nx >= w as isize
            {
                continue;
            }
            let ni = (nz as usize * h + ny as usize) * w + nx as usize;
            if !member(ni) {
                counts[data[ni] as usize] += 1;
                any = true;
            }
        }
    }
    if !any {
        return None;
    }
    let mut best = 0usize;
    for c in 1..4 {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    Some(best as u8)
}

fn cleanup_pass(data: &mut [u8], extents: [usize; 3], min_component_voxels: usize) -> bool {
    let mut changed = false;
    // absorb small foreground components, classes in ascending order
    for label in 1u8..=3 {
        for (voxels, _) in components(data, extents, label) {
            if voxels.len() >= min_component_voxels {
                continue;
            }
            if let Some(target) = surrounding_majority(data, extents, &voxels) {
                if target != label {
                    for &i in &voxels {
                        data[i] = target;
                    }
                    changed = true;
                }
            }
        }
    }
    // fill background cavities enclosed by exactly one class
    for (voxels, touches_border) in components(data, extents, 0) {
        if touches_border {
            continue;
        }
        let [_d, h, w] = extents;
        let member = |i: usize| voxels.binary_search(&i).is_ok();
        let mut enclosing: Option<u8> = None;
        let mut single = true;
        'scan: for &i in &voxels {
            let z = i / (h * w);
            let y = (i / w) % h;
            let x = i % w;
            for (dz, dy, dx) in NEIGHBOR_OFFSETS {
                let (nz, ny, nx) = (z as isize + dz, y as isize + dy, x as isize + dx);
                let ni = (nz as usize * h + ny as usize) * w + nx as usize;
                if member(ni) {
                    continue;
                }
                let l = data[ni];
                match enclosing {
                    None => enclosing = Some(l),
                    Some(e) if e != l => {
                        single = false;
                        break 'scan;
                    }
                    _ => {}
                }
            }
        }
        if single {
            if let Some(fill) = enclosing {
                for &i in &voxels {
                    data[i] = fill;
                }
                changed = true;
            }
        }
    }
    changed
}

/// Iterates cleanup passes to a fixed point (bounded).
pub fn morph_cleanup(seg: &IntGrid, min_component_voxels: usize) -> IntGrid {
    let extents = seg.dims3().expect("morph_cleanup takes a [D,H,W] grid");
    let mut out = seg.clone();
    for _ in 0..64 {
        if !cleanup_pass(out.data_mut(), extents, min_component_voxels) {
            break;
        }
    }
    out
}
