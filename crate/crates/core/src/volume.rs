use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Regular voxel grid placed in world space.
///
/// Voxel `(i, j, k)` has its centre at `origin + orientation · (i·sx, j·sy, k·sz)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    /// Row-major 3×3 direction cosines; columns are the voxel axes in world space.
    pub orientation: [f64; 9],
}

const IDENTITY3: [f64; 9] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];

impl Grid {
    /// Axis-aligned grid with isotropic spacing.
    pub fn new(dims: [usize; 3], spacing: f64, origin: [f64; 3]) -> Self {
        Self {
            dims,
            spacing: [spacing; 3],
            origin,
            orientation: IDENTITY3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidGeometry(format!("empty grid {:?}", self.dims)));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidGeometry(format!(
                "spacing must be > 0, got {:?}",
                self.spacing
            )));
        }
        let r = self.direction();
        if (r.transpose() * r - Matrix3::identity()).amax() > 1e-6 {
            return Err(Error::InvalidGeometry("orientation is not orthonormal".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn direction(&self) -> Matrix3<f64> {
        Matrix3::from_row_slice(&self.orientation)
    }

    fn is_axis_aligned(&self) -> bool {
        self.orientation == IDENTITY3
    }

    #[inline]
    pub fn linear(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    #[inline]
    pub fn unlinear(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    /// World position of a (possibly fractional) voxel index.
    pub fn index_to_world(&self, idx: Vector3<f64>) -> Vector3<f64> {
        let scaled = Vector3::new(
            idx.x * self.spacing[0],
            idx.y * self.spacing[1],
            idx.z * self.spacing[2],
        );
        let rotated = if self.is_axis_aligned() {
            scaled
        } else {
            self.direction() * scaled
        };
        Vector3::from(self.origin) + rotated
    }

    /// Continuous voxel index of a world position.
    #[inline]
    pub fn world_to_index(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let d = p - Vector3::from(self.origin);
        let local = if self.is_axis_aligned() {
            d
        } else {
            self.direction().transpose() * d
        };
        Vector3::new(
            local.x / self.spacing[0],
            local.y / self.spacing[1],
            local.z / self.spacing[2],
        )
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.index_to_world(Vector3::new(i as f64, j as f64, k as f64))
    }

    /// Physical size of the grid along each voxel axis, mm (centre to centre
    /// plus one voxel).
    pub fn extent(&self) -> [f64; 3] {
        [
            self.dims[0] as f64 * self.spacing[0],
            self.dims[1] as f64 * self.spacing[1],
            self.dims[2] as f64 * self.spacing[2],
        ]
    }

    /// World-space axis `a` of the grid.
    pub fn axis(&self, a: usize) -> Vector3<f64> {
        self.direction().column(a).into_owned()
    }

    /// Length of the grid projected on a world direction.
    pub fn extent_along(&self, dir: &Vector3<f64>) -> f64 {
        let d = dir.normalize();
        let e = self.extent();
        (0..3).map(|a| self.axis(a).dot(&d).abs() * e[a]).sum()
    }

    pub fn center(&self) -> Vector3<f64> {
        self.index_to_world(Vector3::new(
            (self.dims[0] as f64 - 1.0) * 0.5,
            (self.dims[1] as f64 - 1.0) * 0.5,
            (self.dims[2] as f64 - 1.0) * 0.5,
        ))
    }

    /// True when the continuous index lies inside the voxel-centre hull
    /// extended by half a voxel on every side.
    #[inline]
    pub fn contains_index(&self, idx: &Vector3<f64>) -> bool {
        (0..3).all(|a| idx[a] >= -0.5 && idx[a] <= self.dims[a] as f64 - 0.5)
    }
}

/// Scalar field on a [`Grid`], x fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume<T> {
    grid: Grid,
    data: Vec<T>,
}

impl<T: Copy> Volume<T> {
    pub fn filled(grid: Grid, value: T) -> Self {
        Self {
            data: vec![value; grid.len()],
            grid,
        }
    }

    pub fn from_vec(grid: Grid, data: Vec<T>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} voxels", grid.len()),
                actual: format!("{} voxels", data.len()),
            });
        }
        Ok(Self { grid, data })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[self.grid.linear(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: T) {
        let idx = self.grid.linear(i, j, k);
        self.data[idx] = v;
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Volume<U> {
        Volume {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_grid<U>(&self, other: &Volume<U>) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::DimensionMismatch {
                expected: format!("{:?}", self.grid),
                actual: format!("{:?}", other.grid),
            });
        }
        Ok(())
    }
}
