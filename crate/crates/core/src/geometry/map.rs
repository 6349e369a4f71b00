//! Point-cloud maps with a coarse planar bucket index for radius queries.

use nalgebra::Vector3;

use crate::error::{data_err, Result};

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    fn tight(points: &[Vector3<f64>]) -> Aabb {
        let mut min = Vector3::repeat(f64::INFINITY);
        let mut max = Vector3::repeat(f64::NEG_INFINITY);
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        if points.is_empty() {
            min = Vector3::zeros();
            max = Vector3::zeros();
        }
        Aabb { min, max }
    }
}

const CELL: f64 = 8.0;

#[derive(Clone, Debug)]
struct BucketIndex {
    origin: (f64, f64),
    nx: usize,
    ny: usize,
    starts: Vec<usize>,
    ids: Vec<u32>,
}

impl BucketIndex {
    fn build(points: &[Vector3<f64>], extent: &Aabb) -> Self {
        let nx = (((extent.max.x - extent.min.x) / CELL).floor() as usize + 1).max(1);
        let ny = (((extent.max.y - extent.min.y) / CELL).floor() as usize + 1).max(1);
        let origin = (extent.min.x, extent.min.y);
        let cell_of = |p: &Vector3<f64>| {
            let cx = (((p.x - origin.0) / CELL) as usize).min(nx - 1);
            let cy = (((p.y - origin.1) / CELL) as usize).min(ny - 1);
            cy * nx + cx
        };
        let mut counts = vec![0usize; nx * ny + 1];
        for p in points {
            counts[cell_of(p) + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut ids = vec![0u32; points.len()];
        for (i, p) in points.iter().enumerate() {
            let c = cell_of(p);
            ids[fill[c]] = i as u32;
            fill[c] += 1;
        }
        BucketIndex { origin, nx, ny, starts, ids }
    }

    fn visit(&self, center: &Vector3<f64>, radius: f64, mut f: impl FnMut(usize)) {
        let lo = |v: f64, o: f64| ((v - radius - o) / CELL).floor().max(0.0) as usize;
        let hi = |v: f64, o: f64, n: usize| (((v + radius - o) / CELL).floor().max(0.0) as usize).min(n - 1);
        let (x0, x1) = (lo(center.x, self.origin.0), hi(center.x, self.origin.0, self.nx));
        let (y0, y1) = (lo(center.y, self.origin.1), hi(center.y, self.origin.1, self.ny));
        if x0 > x1 || y0 > y1 {
            return;
        }
        for cy in y0..=y1 {
            for cx in x0..=x1 {
                let c = cy * self.nx + cx;
                for &id in &self.ids[self.starts[c]..self.starts[c + 1]] {
                    f(id as usize);
                }
            }
        }
    }
}

/// Textureless prior map: positions plus a scalar albedo per point.
///
/// Normals are optional and only used for shading synthetic renders; they
/// are not part of the on-disk format.
#[derive(Clone, Debug)]
pub struct PointCloudMap {
    points: Vec<Vector3<f64>>,
    albedo: Vec<f64>,
    normals: Option<Vec<Vector3<f64>>>,
    extent: Aabb,
    index: BucketIndex,
}

impl PointCloudMap {
    /// Map whose extent is the tight bounding box of its points.
    pub fn new(points: Vec<Vector3<f64>>, albedo: Vec<f64>) -> Result<Self> {
        let extent = Aabb::tight(&points);
        Self::with_extent(points, albedo, extent)
    }

    pub fn with_extent(points: Vec<Vector3<f64>>, albedo: Vec<f64>, extent: Aabb) -> Result<Self> {
        if points.len() != albedo.len() {
            return data_err(format!("{} points but {} albedo values", points.len(), albedo.len()));
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return data_err(format!("non-finite coordinates at point {i}"));
        }
        if let Some(i) = albedo.iter().position(|a| !(0.0..=1.0).contains(a)) {
            return data_err(format!("albedo {} at point {i} outside [0,1]", albedo[i]));
        }
        if let Some(i) = points.iter().position(|p| !extent.contains(p)) {
            return data_err(format!("point {i} lies outside the map extent"));
        }
        let index = BucketIndex::build(&points, &extent);
        Ok(PointCloudMap {
            points,
            albedo,
            normals: None,
            extent,
            index,
        })
    }

    pub fn with_normals(mut self, normals: Vec<Vector3<f64>>) -> Result<Self> {
        if normals.len() != self.points.len() {
            return data_err("normal count differs from point count");
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn albedo(&self) -> &[f64] {
        &self.albedo
    }

    pub fn normals(&self) -> Option<&[Vector3<f64>]> {
        self.normals.as_deref()
    }

    pub fn extent(&self) -> &Aabb {
        &self.extent
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Calls `f` with the index of every point whose planar distance to
    /// `center` may be within `radius` (a superset; callers re-check range).
    pub fn visit_near(&self, center: &Vector3<f64>, radius: f64, f: impl FnMut(usize)) {
        self.index.visit(center, radius, f);
    }
}
