//! Point sampling of voxel volumes at continuous indices.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::volume::Volume;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Catmull-Rom cubic spline, interpolating at voxel centres.
    #[default]
    Cubic,
    Linear,
}

#[inline]
fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

#[inline]
fn clamp_index(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

/// Samples `vol` at continuous index `idx`. Returns `None` outside the
/// half-voxel-padded grid; neighbours beyond the border replicate the edge.
pub fn sample(vol: &Volume<f32>, idx: &Vector3<f64>, mode: Interpolation) -> Option<f32> {
    let g = vol.grid();
    if !g.contains_index(idx) {
        return None;
    }
    Some(match mode {
        Interpolation::Cubic => sample_cubic(vol, idx),
        Interpolation::Linear => sample_linear(vol, idx),
    })
}

fn sample_cubic(vol: &Volume<f32>, idx: &Vector3<f64>) -> f32 {
    let g = vol.grid();
    let data = vol.data();
    let base = idx.map(f64::floor);
    let w = [
        catmull_rom(idx.x - base.x),
        catmull_rom(idx.y - base.y),
        catmull_rom(idx.z - base.z),
    ];
    let (bx, by, bz) = (base.x as i64, base.y as i64, base.z as i64);
    let xs: [usize; 4] = std::array::from_fn(|o| clamp_index(bx - 1 + o as i64, g.dims[0]));
    let ys: [usize; 4] = std::array::from_fn(|o| clamp_index(by - 1 + o as i64, g.dims[1]));
    let zs: [usize; 4] = std::array::from_fn(|o| clamp_index(bz - 1 + o as i64, g.dims[2]));
    let mut acc = 0.0f64;
    for (c, &z) in zs.iter().enumerate() {
        if w[2][c] == 0.0 {
            continue;
        }
        let mut plane = 0.0f64;
        for (b, &y) in ys.iter().enumerate() {
            if w[1][b] == 0.0 {
                continue;
            }
            let row = (z * g.dims[1] + y) * g.dims[0];
            let mut line = 0.0f64;
            for (a, &x) in xs.iter().enumerate() {
                line += w[0][a] * data[row + x] as f64;
            }
            plane += w[1][b] * line;
        }
        acc += w[2][c] * plane;
    }
    acc as f32
}

fn sample_linear(vol: &Volume<f32>, idx: &Vector3<f64>) -> f32 {
    let g = vol.grid();
    let base = idx.map(f64::floor);
    let t = idx - base;
    let mut acc = 0.0f64;
    for dz in 0..2 {
        let z = clamp_index(base.z as i64 + dz, g.dims[2]);
        let wz = if dz == 0 { 1.0 - t.z } else { t.z };
        for dy in 0..2 {
            let y = clamp_index(base.y as i64 + dy, g.dims[1]);
            let wy = if dy == 0 { 1.0 - t.y } else { t.y };
            for dx in 0..2 {
                let x = clamp_index(base.x as i64 + dx, g.dims[0]);
                let wx = if dx == 0 { 1.0 - t.x } else { t.x };
                acc += wx * wy * wz * vol.get(x, y, z) as f64;
            }
        }
    }
    acc as f32
}

/// Nearest voxel value, `None` outside the padded grid.
#[inline]
pub fn sample_nearest<T: Copy>(vol: &Volume<T>, idx: &Vector3<f64>) -> Option<T> {
    let g = vol.grid();
    if !g.contains_index(idx) {
        return None;
    }
    let i = clamp_index(idx.x.round() as i64, g.dims[0]);
    let j = clamp_index(idx.y.round() as i64, g.dims[1]);
    let k = clamp_index(idx.z.round() as i64, g.dims[2]);
    Some(vol.get(i, j, k))
}
