//! Brute-force reference implementations shared by the integration tests.
//! They deliberately avoid the library's geometry helpers.

#![allow(dead_code)]

use rand::Rng;
use voxdet::{Coordinate, Dims, PointSet, Volume3};

pub fn dist(a: [i64; 3], b: [i64; 3]) -> f64 {
    let s: i64 = (0..3).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum();
    (s as f64).sqrt()
}

pub fn ijk(c: &Coordinate) -> [i64; 3] {
    [c.x as i64, c.y as i64, c.z as i64]
}

fn all_voxels(d: Dims) -> impl Iterator<Item = [i64; 3]> {
    (0..d.nz as i64).flat_map(move |z| (0..d.ny as i64).flat_map(move |y| (0..d.nx as i64).map(move |x| [x, y, z])))
}

fn lin(d: Dims, v: [i64; 3]) -> usize {
    v[0] as usize + d.nx * (v[1] as usize + d.ny * v[2] as usize)
}

/// Voxel is 1 iff some point lies within `r` of it.
pub fn brute_labels(points: &PointSet, d: Dims, r: f64) -> Vec<f32> {
    all_voxels(d)
        .map(|v| {
            let hit = points.iter().any(|p| dist(v, ijk(&p.position)) <= r);
            if hit {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Mean over the in-bounds voxels of the closed ball around each voxel.
pub fn brute_ball_mean(vol: &Volume3, r: f64) -> Vec<f64> {
    let d = vol.dims();
    let data = vol.data();
    all_voxels(d)
        .map(|c| {
            let (mut s, mut n) = (0.0f64, 0usize);
            let k = r.ceil() as i64;
            let n_axis = [d.nx as i64, d.ny as i64, d.nz as i64];
            let span = |a: usize| (c[a] - k).max(0)..=(c[a] + k).min(n_axis[a] - 1);
            for z in span(2) {
                for y in span(1) {
                    for x in span(0) {
                        if dist(c, [x, y, z]) <= r {
                            s += data[lin(d, [x, y, z])] as f64;
                            n += 1;
                        }
                    }
                }
            }
            s / n as f64
        })
        .collect()
}

/// Repeated global argmax (ties to the smallest index), zeroing a ball each time.
pub fn rescan_nms(vol: &Volume3, r: f64, floor: f32) -> Vec<(Coordinate, f32)> {
    let d = vol.dims();
    let mut a = vol.data().to_vec();
    let mut out = Vec::new();
    loop {
        let mut best = 0;
        for i in 1..a.len() {
            if a[i] > a[best] {
                best = i;
            }
        }
        if a[best] <= floor {
            return out;
        }
        let c = d.coord(best);
        out.push((c, a[best]));
        for v in all_voxels(d) {
            if dist(v, ijk(&c)) <= r {
                a[lin(d, v)] = 0.0;
            }
        }
    }
}

/// Maximum one-to-one matching size under distance `r`, by exhaustive search.
pub fn optimal_tp(dets: &[Coordinate], gt: &[Coordinate], r: f64) -> usize {
    fn go(i: usize, dets: &[Coordinate], gt: &[Coordinate], r: f64, used: &mut Vec<bool>) -> usize {
        if i == dets.len() {
            return 0;
        }
        let mut best = go(i + 1, dets, gt, r, used);
        for g in 0..gt.len() {
            if !used[g] && dist(ijk(&dets[i]), ijk(&gt[g])) <= r {
                used[g] = true;
                best = best.max(1 + go(i + 1, dets, gt, r, used));
                used[g] = false;
            }
        }
        best
    }
    go(0, dets, gt, r, &mut vec![false; gt.len()])
}

pub fn random_coord(rng: &mut impl Rng, d: Dims) -> Coordinate {
    Coordinate::new(rng.gen_range(0..d.nx), rng.gen_range(0..d.ny), rng.gen_range(0..d.nz))
}

pub fn random_volume(rng: &mut impl Rng, d: Dims) -> Volume3 {
    Volume3::from_fn(d, |_| rng.gen::<f32>()).unwrap()
}

/// Compares every file under `a` with the same relative path under `b`.
pub fn diff_dirs(a: &std::path::Path, b: &std::path::Path) -> Result<usize, String> {
    let mut names: Vec<_> = std::fs::read_dir(a)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    let other = std::fs::read_dir(b).map_err(|e| e.to_string())?.count();
    if other != names.len() {
        return Err(format!("{} files vs {other}", names.len()));
    }
    for n in &names {
        let x = std::fs::read(a.join(n)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(n)).map_err(|e| format!("{n:?}: {e}"))?;
        if x != y {
            return Err(format!("{n:?} differs"));
        }
    }
    Ok(names.len())
}
