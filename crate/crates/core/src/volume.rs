//! Dense scalar volumes and lattice geometry.
//!
//! Voxels are stored x-fastest, then y, then z. Every module in the crate shares
//! this layout, so a linear index is `x + nx * (y + ny * z)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default physical edge length of one voxel.
pub const DEFAULT_VOXEL_SIZE_NM: f64 = 10.0;

/// Integer lattice position inside a volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Coordinate {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl Coordinate {
    pub const fn new(x: usize, y: usize, z: usize) -> Self {
        Self { x, y, z }
    }

    /// Squared distance in voxel units, exact in integer arithmetic.
    pub fn distance_sq(&self, other: &Coordinate) -> u64 {
        let dx = self.x.abs_diff(other.x) as u64;
        let dy = self.y.abs_diff(other.y) as u64;
        let dz = self.z.abs_diff(other.z) as u64;
        dx * dx + dy * dy + dz * dz
    }
}

impl From<[usize; 3]> for Coordinate {
    fn from(v: [usize; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl std::fmt::Display for Coordinate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Euclidean distance between two lattice positions, in voxels.
pub fn euclidean_distance(a: &Coordinate, b: &Coordinate) -> f64 {
    (a.distance_sq(b) as f64).sqrt()
}

/// `true` iff an integer offset with squared length `d2` lies within `radius`.
///
/// Every radius test in the crate goes through here so that the fast paths and
/// the per-voxel definitions agree exactly.
#[inline]
pub fn within_radius(d2: u64, radius: f64) -> bool {
    (d2 as f64).sqrt() <= radius
}

/// Volume extent `(nx, ny, nz)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    pub const fn cube(n: usize) -> Self {
        Self::new(n, n, n)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn contains(&self, c: &Coordinate) -> bool {
        c.x < self.nx && c.y < self.ny && c.z < self.nz
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn coord(&self, index: usize) -> Coordinate {
        let x = index % self.nx;
        let rest = index / self.nx;
        Coordinate::new(x, rest % self.ny, rest / self.ny)
    }

    /// Smallest distance from `c` to any face, measured in voxel steps
    /// (a voxel on a face has margin 0).
    pub fn margin(&self, c: &Coordinate) -> usize {
        [c.x, c.y, c.z, self.nx - 1 - c.x, self.ny - 1 - c.y, self.nz - 1 - c.z]
            .into_iter()
            .min()
            .unwrap_or(0)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(Error::invalid(format!(
                "volume dimensions must be positive, got {}x{}x{}",
                self.nx, self.ny, self.nz
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

/// Dense 3D grid of 32-bit values.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3 {
    dims: Dims,
    data: Vec<f32>,
    voxel_size_nm: f64,
}

impl Volume3 {
    pub fn zeros(dims: Dims) -> Result<Self> {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: Dims, value: f32) -> Result<Self> {
        dims.validate()?;
        Ok(Self {
            dims,
            data: vec![value; dims.len()],
            voxel_size_nm: DEFAULT_VOXEL_SIZE_NM,
        })
    }

    pub fn from_data(dims: Dims, data: Vec<f32>) -> Result<Self> {
        dims.validate()?;
        if data.len() != dims.len() {
            return Err(Error::DimensionMismatch {
                expected: dims.len(),
                got: data.len(),
            });
        }
        Ok(Self {
            dims,
            data,
            voxel_size_nm: DEFAULT_VOXEL_SIZE_NM,
        })
    }

    /// Builds a volume by evaluating `f` at every voxel.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(Coordinate) -> f32) -> Result<Self> {
        dims.validate()?;
        let data = (0..dims.len()).map(|i| f(dims.coord(i))).collect();
        Self::from_data(dims, data)
    }

    pub fn with_voxel_size(mut self, voxel_size_nm: f64) -> Result<Self> {
        if !(voxel_size_nm.is_finite() && voxel_size_nm > 0.0) {
            return Err(Error::invalid(format!(
                "voxel size must be positive and finite, got {voxel_size_nm}"
            )));
        }
        self.voxel_size_nm = voxel_size_nm;
        Ok(self)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn voxel_size_nm(&self) -> f64 {
        self.voxel_size_nm
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.dims.index(x, y, z)]
    }

    #[inline]
    pub fn at(&self, c: &Coordinate) -> f32 {
        self.get(c.x, c.y, c.z)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: f32) {
        let i = self.dims.index(x, y, z);
        self.data[i] = value;
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same dims and voxel size, new contents.
    pub(crate) fn like(&self, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self {
            dims: self.dims,
            data,
            voxel_size_nm: self.voxel_size_nm,
        }
    }
}

/// Block-mean downsampling by an integer factor along every axis.
///
/// Output extent is `ceil(n / factor)` per axis; blocks that hang over a face
/// average only their in-bounds voxels.
pub fn downsample_avg(volume: &Volume3, factor: usize) -> Result<Volume3> {
    if factor == 0 {
        return Err(Error::invalid("downsample factor must be at least 1"));
    }
    if factor == 1 {
        return Ok(volume.clone());
    }
    let src = volume.dims();
    let dst = Dims::new(
        src.nx.div_ceil(factor),
        src.ny.div_ceil(factor),
        src.nz.div_ceil(factor),
    );
    let mut sums = vec![0.0f64; dst.len()];
    let mut counts = vec![0u32; dst.len()];
    let data = volume.data();
    for z in 0..src.nz {
        for y in 0..src.ny {
            let row = src.index(0, y, z);
            let drow = dst.index(0, y / factor, z / factor);
            for x in 0..src.nx {
                sums[drow + x / factor] += data[row + x] as f64;
                counts[drow + x / factor] += 1;
            }
        }
    }
    let out = sums.iter().zip(&counts).map(|(&s, &c)| (s / c as f64) as f32).collect();
    Volume3::from_data(dst, out)?.with_voxel_size(volume.voxel_size_nm() * factor as f64)
}

/// Integer offsets of the closed Euclidean ball of the given radius, in
/// x-fastest scan order.
pub fn ball_offsets(radius: f64) -> Vec<[i64; 3]> {
    let r = radius.max(0.0).floor() as i64;
    let mut out = Vec::new();
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                let d2 = (dx * dx + dy * dy + dz * dz) as u64;
                if within_radius(d2, radius) {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

/// The ball decomposed into x-runs: for every `(dy, dz)` that intersects the
/// ball, the half-width `w` such that `dx ∈ [-w, w]` is inside.
pub fn ball_rows(radius: f64) -> Vec<(i64, i64, i64)> {
    let r = radius.max(0.0).floor() as i64;
    let mut rows = Vec::new();
    for dz in -r..=r {
        for dy in -r..=r {
            let base = (dy * dy + dz * dz) as u64;
            if !within_radius(base, radius) {
                continue;
            }
            let mut w = 0i64;
            while w < r && within_radius(base + ((w + 1) * (w + 1)) as u64, radius) {
                w += 1;
            }
            rows.push((dy, dz, w));
        }
    }
    rows
}

/// Clamps `[c - lo, c + hi]` to `[0, n)` in signed arithmetic.
#[inline]
pub(crate) fn clip_span(c: i64, lo: i64, hi: i64, n: usize) -> Option<(usize, usize)> {
    let a = (c - lo).max(0);
    let b = (c + hi).min(n as i64 - 1);
    (a <= b).then_some((a as usize, b as usize))
}

/// Visits every in-bounds voxel of the closed ball around `center`.
pub(crate) fn for_each_in_ball(dims: Dims, center: &Coordinate, rows: &[(i64, i64, i64)], mut f: impl FnMut(usize)) {
    let (cx, cy, cz) = (center.x as i64, center.y as i64, center.z as i64);
    for &(dy, dz, w) in rows {
        let (y, z) = (cy + dy, cz + dz);
        if y < 0 || z < 0 || y >= dims.ny as i64 || z >= dims.nz as i64 {
            continue;
        }
        if let Some((x0, x1)) = clip_span(cx, w, w, dims.nx) {
            let row = dims.index(0, y as usize, z as usize);
            for x in x0..=x1 {
                f(row + x);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distance_examples() {
        let o = Coordinate::new(0, 0, 0);
        assert_eq!(euclidean_distance(&o, &o), 0.0);
        assert_eq!(euclidean_distance(&o, &Coordinate::new(3, 4, 0)), 5.0);
        assert_eq!(
            euclidean_distance(&Coordinate::new(1, 2, 3), &Coordinate::new(4, 6, 3)),
            5.0
        );
    }

    #[test]
    fn index_roundtrip() {
        let d = Dims::new(3, 5, 7);
        for i in 0..d.len() {
            let c = d.coord(i);
            assert_eq!(d.index(c.x, c.y, c.z), i);
        }
        assert_eq!(d.index(1, 0, 0), 1);
        assert_eq!(d.index(0, 1, 0), 3);
        assert_eq!(d.index(0, 0, 1), 15);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Volume3::zeros(Dims::new(0, 2, 2)).is_err());
        assert!(matches!(
            Volume3::from_data(Dims::cube(2), vec![0.0; 7]),
            Err(Error::DimensionMismatch { expected: 8, got: 7 })
        ));
    }

    #[test]
    fn downsample_examples() {
        let v = Volume3::filled(Dims::new(5, 6, 7), 2.5).unwrap();
        let d = downsample_avg(&v, 2).unwrap();
        assert_eq!(d.dims(), Dims::new(3, 3, 4));
        assert!(d.data().iter().all(|&x| x == 2.5));

        let v = Volume3::from_data(Dims::cube(2), (0..8).map(|i| i as f32).collect()).unwrap();
        assert_eq!(downsample_avg(&v, 1).unwrap(), v);
        let d = downsample_avg(&v, 2).unwrap();
        assert_eq!(d.dims(), Dims::cube(1));
        assert_eq!(d.data(), &[3.5]);
        assert_eq!(d.voxel_size_nm(), 20.0);

        assert!(downsample_avg(&v, 0).is_err());
    }

    #[test]
    fn downsample_border_block_uses_in_bounds_voxels() {
        // 3 voxels along x, factor 2: second output cell holds only x = 2.
        let v = Volume3::from_data(Dims::new(3, 1, 1), vec![1.0, 3.0, 10.0]).unwrap();
        let d = downsample_avg(&v, 2).unwrap();
        assert_eq!(d.data(), &[2.0, 10.0]);
    }

    #[test]
    fn ball_sizes() {
        assert_eq!(ball_offsets(0.0).len(), 1);
        assert_eq!(ball_offsets(1.0).len(), 7);
        assert_eq!(ball_offsets(2.0).len(), 33);
        assert_eq!(ball_offsets(7.0).len(), 1419);
        for r in [0.5, 1.0, 2.5, 3.0, 7.0] {
            let n: i64 = ball_rows(r).iter().map(|&(_, _, w)| 2 * w + 1).sum();
            assert_eq!(n as usize, ball_offsets(r).len());
        }
    }

    fn coord() -> impl Strategy<Value = Coordinate> {
        (0usize..100, 0usize..100, 0usize..100).prop_map(|(x, y, z)| Coordinate::new(x, y, z))
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(a in coord(), b in coord(), c in coord()) {
            let ab = euclidean_distance(&a, &b);
            prop_assert_eq!(ab, euclidean_distance(&b, &a));
            prop_assert_eq!(ab == 0.0, a == b);
            prop_assert!(euclidean_distance(&a, &c) <= ab + euclidean_distance(&b, &c) + 1e-9);
        }

        #[test]
        fn downsample_preserves_mean_when_factor_divides(
            f in 1usize..4, bx in 1usize..4, by in 1usize..4, bz in 1usize..4, seed in any::<u64>()
        ) {
            use rand::{Rng, SeedableRng};
            let dims = Dims::new(bx * f, by * f, bz * f);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let v = Volume3::from_fn(dims, |_| rng.gen_range(-1.0..1.0)).unwrap();
            let d = downsample_avg(&v, f).unwrap();
            prop_assert!((d.mean() - v.mean()).abs() < 1e-6);
        }
    }
}
