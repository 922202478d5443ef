//! Procedural, cell-streamed terrain.
//!
//! The world is an unbounded lattice of square cells. Each cell holds a
//! height-field mesh sampled from fractal Perlin noise plus scattered
//! foliage. [`WorldState::update_cells`] keeps only the cells around the
//! observers alive, and [`WorldState::raycast`] answers nearest-hit queries
//! against whatever is currently active.

mod bvh;
mod cell;
mod geometry;
mod noise;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::ModelError;

pub use bvh::Bvh;
pub use cell::{generate_cell, Foliage, FoliageKind, TerrainCell};
pub use geometry::{intersect_triangle, intersect_triangle_edges, Aabb, Cylinder, Ray, T_MIN};
pub(crate) use noise::hash3;
pub use noise::{perlin, terrain_height, terrain_normal};

/// Label reserved for "no hit".
pub const SKY_LABEL: u8 = 255;

/// Tolerance on the unit length of ray directions.
pub const DIRECTION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub label: u8,
    pub intensity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Materials {
    pub terrain: Material,
    pub tree: Material,
    pub grass: Material,
}

impl Default for Materials {
    fn default() -> Self {
        Self {
            terrain: Material {
                label: 1,
                intensity: 0.35,
            },
            tree: Material {
                label: 2,
                intensity: 0.6,
            },
            grass: Material {
                label: 3,
                intensity: 0.2,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerrainParams {
    pub seed: u64,
    /// Edge length of a cell, m.
    pub cell_size: f64,
    /// Vertices per cell edge.
    pub grid_resolution: u32,
    /// Per-octave amplitude falloff.
    pub roughness: f64,
    /// Height scale, m.
    pub amplitude: f64,
    /// Frequency of the first octave, 1/m.
    pub base_frequency: f64,
    pub octaves: u32,
    /// Expected foliage instances per m².
    pub forest_density: f64,
    /// m.
    pub visibility_range: f64,
    /// Share of foliage instances that are trees, the rest is grass.
    pub tree_fraction: f64,
    pub materials: Materials,
}

impl Default for TerrainParams {
    fn default() -> Self {
        Self {
            seed: 0,
            cell_size: 100.0,
            grid_resolution: 33,
            roughness: 0.5,
            amplitude: 8.0,
            base_frequency: 0.01,
            octaves: 4,
            forest_density: 0.002,
            visibility_range: 300.0,
            tree_fraction: 0.7,
            materials: Materials::default(),
        }
    }
}

impl TerrainParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let finite = |field: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(ModelError::invalid(
                    field,
                    format!("must be finite, got {v}"),
                ))
            }
        };
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(ModelError::invalid(
                "world.cell_size",
                format!("must be > 0, got {}", self.cell_size),
            ));
        }
        if !(2..=4097).contains(&self.grid_resolution) {
            return Err(ModelError::invalid(
                "world.grid_resolution",
                format!("must be in 2..=4097, got {}", self.grid_resolution),
            ));
        }
        if !(self.visibility_range > 0.0 && self.visibility_range.is_finite()) {
            return Err(ModelError::invalid(
                "world.visibility_range",
                format!("must be > 0, got {}", self.visibility_range),
            ));
        }
        if self.octaves == 0 || self.octaves > 32 {
            return Err(ModelError::invalid(
                "world.octaves",
                format!("must be in 1..=32, got {}", self.octaves),
            ));
        }
        finite("world.amplitude", self.amplitude)?;
        finite("world.base_frequency", self.base_frequency)?;
        if !(self.roughness >= 0.0 && self.roughness.is_finite()) {
            return Err(ModelError::invalid(
                "world.roughness",
                format!("must be >= 0, got {}", self.roughness),
            ));
        }
        if !(self.forest_density >= 0.0 && self.forest_density.is_finite()) {
            return Err(ModelError::invalid(
                "world.forest_density",
                format!("must be >= 0, got {}", self.forest_density),
            ));
        }
        if self.forest_density * self.cell_size * self.cell_size > 1e6 {
            return Err(ModelError::invalid(
                "world.forest_density",
                "more than 1e6 instances per cell",
            ));
        }
        if !(0.0..=1.0).contains(&self.tree_fraction) {
            return Err(ModelError::invalid(
                "world.tree_fraction",
                "must be in [0, 1]",
            ));
        }
        for (name, m) in [
            ("terrain", &self.materials.terrain),
            ("tree", &self.materials.tree),
            ("grass", &self.materials.grass),
        ] {
            if m.label == SKY_LABEL {
                return Err(ModelError::invalid(
                    format!("world.materials.{name}.label"),
                    "255 is reserved for misses",
                ));
            }
            if !(0.0..=1.0).contains(&m.intensity) {
                return Err(ModelError::invalid(
                    format!("world.materials.{name}.intensity"),
                    "must be in [0, 1]",
                ));
            }
        }
        Ok(())
    }

    /// Upper bound on `|terrain_height|`.
    pub fn height_bound(&self) -> f64 {
        let mut sum = 0.0;
        let mut w = 1.0;
        for _ in 0..self.octaves {
            sum += w;
            w *= self.roughness;
        }
        self.amplitude.abs() * sum
    }

    /// Index of the cell containing the horizontal position `(x, y)`.
    pub fn cell_at(&self, x: f64, y: f64) -> CellIndex {
        CellIndex::new(
            (x / self.cell_size).floor() as i64,
            (y / self.cell_size).floor() as i64,
        )
    }

    /// Box used by the visibility test: the cell footprint extruded over
    /// the full possible terrain height range.
    pub fn visibility_box(&self, idx: CellIndex) -> Aabb {
        let h = self.height_bound();
        let s = self.cell_size;
        Aabb {
            min: Vector3::new(idx.ix as f64 * s, idx.iy as f64 * s, -h),
            max: Vector3::new((idx.ix + 1) as f64 * s, (idx.iy + 1) as f64 * s, h),
        }
    }

    /// Euclidean distance from `p` to the nearest point of the cell's
    /// visibility box is within `visibility_range`.
    pub fn is_visible(&self, idx: CellIndex, p: &Vector3<f64>) -> bool {
        let b = self.visibility_box(idx);
        let nearest = p.sup(&b.min).inf(&b.max);
        (p - nearest).norm() <= self.visibility_range
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellIndex {
    pub ix: i64,
    pub iy: i64,
}

impl CellIndex {
    pub const fn new(ix: i64, iy: i64) -> Self {
        Self { ix, iy }
    }
}

impl std::fmt::Display for CellIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.ix, self.iy)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error(transparent)]
    InvalidParams(#[from] ModelError),
    #[error("at least one observer position is required")]
    NoObservers,
    #[error("observer position is not finite")]
    NonFiniteObserver,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RayError {
    #[error("ray direction must be unit length (norm {0})")]
    NonUnitDirection(f64),
    #[error("max range must be positive and finite, got {0}")]
    InvalidRange(f64),
    #[error("ray origin is not finite")]
    NonFiniteOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub distance: f64,
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub semantic_label: u8,
    pub material_intensity: f64,
}

/// Cells added and removed by one lifecycle update, in index order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CellDelta {
    pub added: Vec<CellIndex>,
    pub removed: Vec<CellIndex>,
}

impl CellDelta {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty()
    }
}

/// Active cells and a two-level acceleration structure: one hierarchy per
/// cell and a top-level hierarchy over the cell bounds.
#[derive(Debug, Clone)]
pub struct WorldState {
    params: TerrainParams,
    cells: BTreeMap<CellIndex, Arc<TerrainCell>>,
    ordered: Vec<Arc<TerrainCell>>,
    top: Bvh,
}

impl WorldState {
    /// A world with no active cells.
    pub fn new(params: TerrainParams) -> Result<Self, WorldError> {
        params.validate()?;
        Ok(Self {
            params,
            cells: BTreeMap::new(),
            ordered: Vec::new(),
            top: Bvh::build(&[]),
        })
    }

    /// A world with exactly the given cells active.
    pub fn with_cells(
        params: TerrainParams,
        cells: impl IntoIterator<Item = CellIndex>,
    ) -> Result<Self, WorldError> {
        let mut w = Self::new(params)?;
        let wanted: BTreeSet<CellIndex> = cells.into_iter().collect();
        w.apply(&wanted);
        Ok(w)
    }

    pub fn params(&self) -> &TerrainParams {
        &self.params
    }

    /// Cells that should be active for the given observers.
    pub fn required_cells(
        &self,
        observers: &[Vector3<f64>],
    ) -> Result<BTreeSet<CellIndex>, WorldError> {
        if observers.is_empty() {
            return Err(WorldError::NoObservers);
        }
        let mut out = BTreeSet::new();
        for p in observers {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(WorldError::NonFiniteObserver);
            }
            let c = self.params.cell_at(p.x, p.y);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let idx = CellIndex::new(c.ix + dx, c.iy + dy);
                    if self.params.is_visible(idx, p) {
                        out.insert(idx);
                    }
                }
            }
        }
        Ok(out)
    }

    /// One lifecycle pass over the UAV positions and the optional spectator.
    pub fn update_cells(
        &mut self,
        uavs: &[Vector3<f64>],
        spectator: Option<Vector3<f64>>,
    ) -> Result<CellDelta, WorldError> {
        let mut observers = uavs.to_vec();
        observers.extend(spectator);
        let wanted = self.required_cells(&observers)?;
        Ok(self.apply(&wanted))
    }

    fn apply(&mut self, wanted: &BTreeSet<CellIndex>) -> CellDelta {
        let removed: Vec<CellIndex> = self
            .cells
            .keys()
            .filter(|k| !wanted.contains(k))
            .copied()
            .collect();
        let added: Vec<CellIndex> = wanted
            .iter()
            .filter(|k| !self.cells.contains_key(k))
            .copied()
            .collect();
        if removed.is_empty() && added.is_empty() {
            return CellDelta::default();
        }
        for k in &removed {
            self.cells.remove(k);
        }
        let params = &self.params;
        let fresh: Vec<TerrainCell> = added
            .par_iter()
            .map(|&idx| generate_cell(idx, params))
            .collect();
        for cell in fresh {
            self.cells.insert(cell.index, Arc::new(cell));
        }
        self.rebuild_top();
        CellDelta { added, removed }
    }

    fn rebuild_top(&mut self) {
        self.ordered = self.cells.values().cloned().collect();
        let bounds: Vec<Aabb> = self.ordered.iter().map(|c| c.bounds()).collect();
        self.top = Bvh::build(&bounds);
    }

    /// A world over the same active set with every cell and the whole
    /// acceleration structure regenerated from scratch.
    pub fn rebuilt(&self) -> Self {
        Self::with_cells(self.params.clone(), self.cells.keys().copied())
            .expect("params already validated")
    }

    pub fn active_cells(&self) -> Vec<CellIndex> {
        self.cells.keys().copied().collect()
    }

    pub fn cell(&self, idx: CellIndex) -> Option<&TerrainCell> {
        self.cells.get(&idx).map(|c| c.as_ref())
    }

    pub fn cells(&self) -> impl Iterator<Item = &TerrainCell> {
        self.ordered.iter().map(|c| c.as_ref())
    }

    pub fn triangle_count(&self) -> usize {
        self.ordered.iter().map(|c| c.triangles.len()).sum()
    }

    /// Nearest hit within `max_range`. `Ok(None)` is a miss.
    pub fn raycast(
        &self,
        origin: Vector3<f64>,
        direction: Vector3<f64>,
        max_range: f64,
    ) -> Result<Option<RayHit>, RayError> {
        if !(origin.x.is_finite() && origin.y.is_finite() && origin.z.is_finite()) {
            return Err(RayError::NonFiniteOrigin);
        }
        let norm = direction.norm();
        if !((norm - 1.0).abs() <= DIRECTION_TOLERANCE) {
            return Err(RayError::NonUnitDirection(norm));
        }
        if !(max_range > 0.0 && max_range.is_finite()) {
            return Err(RayError::InvalidRange(max_range));
        }
        Ok(self.cast(&Ray::new(origin, direction), max_range))
    }

    /// Raycast without argument checks, for callers that construct valid
    /// rays themselves.
    pub fn cast(&self, ray: &Ray, max_range: f64) -> Option<RayHit> {
        let mut found = None;
        self.top.closest(ray, max_range, |slot, t_best| {
            let hit = self.ordered[self.top.primitive(slot) as usize].raycast(ray, t_best)?;
            found = Some(hit);
            Some(hit.distance)
        })?;
        let hit = found?;
        let m = &self.params.materials;
        let material = match hit.kind {
            None => &m.terrain,
            Some(FoliageKind::Tree) => &m.tree,
            Some(FoliageKind::Grass) => &m.grass,
        };
        Some(RayHit {
            distance: hit.distance,
            point: ray.at(hit.distance),
            normal: hit.normal,
            semantic_label: material.label,
            material_intensity: material.intensity,
        })
    }

    /// Writes the active terrain meshes as Wavefront OBJ, one object per
    /// cell. Foliage is listed as comments.
    pub fn write_obj(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(
            w,
            "# {} cells, {} triangles",
            self.ordered.len(),
            self.triangle_count()
        )?;
        let mut base = 1usize;
        for cell in self.cells() {
            writeln!(w, "o cell_{}_{}", cell.index.ix, cell.index.iy)?;
            for v in &cell.vertices {
                writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
            }
            for n in &cell.normals {
                writeln!(w, "vn {} {} {}", n.x, n.y, n.z)?;
            }
            for t in &cell.triangles {
                let [a, b, c] = t.map(|i| i as usize + base);
                writeln!(w, "f {a}//{a} {b}//{b} {c}//{c}")?;
            }
            for f in &cell.foliage {
                let kind = match f.kind {
                    FoliageKind::Tree => "tree",
                    FoliageKind::Grass => "grass",
                };
                writeln!(
                    w,
                    "# {kind} {} {} {} radius {} height {}",
                    f.position.x, f.position.y, f.position.z, f.radius, f.height
                )?;
            }
            base += cell.vertices.len();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat() -> TerrainParams {
        TerrainParams {
            amplitude: 0.0,
            grid_resolution: 5,
            forest_density: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn nine_cells_around_a_centered_observer() {
        let mut w = WorldState::new(flat()).unwrap();
        let delta = w
            .update_cells(&[Vector3::new(50.0, 50.0, 0.0)], None)
            .unwrap();
        assert_eq!(delta.added.len(), 9);
        let expect: Vec<CellIndex> = (-1..=1)
            .flat_map(|iy| (-1..=1).map(move |ix| CellIndex::new(ix, iy)))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        assert_eq!(w.active_cells(), expect);
    }

    #[test]
    fn short_range_drops_corner_cells() {
        let p = TerrainParams {
            visibility_range: 60.0,
            ..flat()
        };
        let mut w = WorldState::new(p).unwrap();
        // 60 m reaches the edge neighbors (50 m away) but not the corners (70.7 m).
        w.update_cells(&[Vector3::new(50.0, 50.0, 0.0)], None)
            .unwrap();
        assert_eq!(w.active_cells().len(), 5);
    }

    #[test]
    fn teleport_removes_old_cells() {
        let mut w = WorldState::new(flat()).unwrap();
        w.update_cells(&[Vector3::new(50.0, 50.0, 0.0)], None)
            .unwrap();
        let delta = w
            .update_cells(&[Vector3::new(250.0, 50.0, 0.0)], None)
            .unwrap();
        // Columns -1 and 0 leave, column 1 stays, columns 2 and 3 arrive.
        let column = |ix: i64| (-1..=1).map(move |iy| CellIndex::new(ix, iy));
        let removed: Vec<CellIndex> = column(-1).chain(column(0)).collect();
        let added: Vec<CellIndex> = column(2).chain(column(3)).collect();
        assert_eq!(delta.removed, removed);
        assert_eq!(delta.added, added);
        assert!(w.active_cells().iter().all(|c| (1..=3).contains(&c.ix)));
    }

    #[test]
    fn observers_are_a_set() {
        let mut a = WorldState::new(flat()).unwrap();
        let mut b = WorldState::new(flat()).unwrap();
        a.update_cells(&[Vector3::new(10.0, 10.0, 0.0)], None)
            .unwrap();
        b.update_cells(
            &[Vector3::new(20.0, 90.0, 0.0)],
            Some(Vector3::new(10.0, 10.0, 0.0)),
        )
        .unwrap();
        assert_eq!(a.active_cells(), b.active_cells());
        assert_eq!(a.update_cells(&[], None), Err(WorldError::NoObservers));
    }

    #[test]
    fn flat_world_nadir_and_zenith() {
        let w = WorldState::with_cells(flat(), [CellIndex::new(0, 0)]).unwrap();
        let hit = w
            .raycast(Vector3::new(3.0, 4.0, 100.0), -Vector3::z(), 500.0)
            .unwrap()
            .unwrap();
        assert_eq!(hit.distance, 100.0);
        assert_eq!(hit.semantic_label, 1);
        assert_eq!(hit.material_intensity, 0.35);
        assert!((hit.normal - Vector3::z()).norm() < 1e-12);
        assert!(w
            .raycast(Vector3::new(3.0, 4.0, 100.0), Vector3::z(), 500.0)
            .unwrap()
            .is_none());
        assert!(matches!(
            w.raycast(Vector3::zeros(), Vector3::new(0.0, 0.0, -2.0), 10.0),
            Err(RayError::NonUnitDirection(_))
        ));
        assert!(matches!(
            w.raycast(Vector3::zeros(), -Vector3::z(), 0.0),
            Err(RayError::InvalidRange(_))
        ));
    }

    #[test]
    fn trees_are_hit_from_the_side() {
        let p = TerrainParams {
            grid_resolution: 9,
            forest_density: 0.01,
            tree_fraction: 1.0,
            ..Default::default()
        };
        let w = WorldState::with_cells(p.clone(), [CellIndex::new(0, 0)]).unwrap();
        let tree = w.cell(CellIndex::new(0, 0)).unwrap().foliage[0];
        let origin = Vector3::new(
            tree.position.x - 5.0,
            tree.position.y,
            tree.position.z + 2.0,
        );
        let hit = w.raycast(origin, Vector3::x(), 10.0).unwrap().unwrap();
        assert_eq!(hit.semantic_label, p.materials.tree.label);
        assert!(hit.distance <= 5.0 - tree.radius + 1e-9);
    }

    #[test]
    fn invalid_params_rejected() {
        for p in [
            TerrainParams {
                cell_size: 0.0,
                ..Default::default()
            },
            TerrainParams {
                grid_resolution: 1,
                ..Default::default()
            },
            TerrainParams {
                visibility_range: -1.0,
                ..Default::default()
            },
            TerrainParams {
                octaves: 0,
                ..Default::default()
            },
        ] {
            assert!(WorldState::new(p).is_err());
        }
    }

    #[test]
    fn obj_dump_counts() {
        let w =
            WorldState::with_cells(flat(), [CellIndex::new(0, 0), CellIndex::new(1, 0)]).unwrap();
        let mut buf = Vec::new();
        w.write_obj(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 50);
        assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 64);
    }
}
