//! Generation of a single terrain cell: height-field mesh, foliage and the
//! cell-local ray acceleration structure.

use nalgebra::Vector3;

use super::bvh::Bvh;
use super::geometry::{intersect_triangle_edges, Aabb, Cylinder, Ray};
use super::noise::{hash3, terrain_height, terrain_normal, unit};
use super::{CellIndex, TerrainParams};

const FOLIAGE_SALT: u64 = 0x0f01_1a9e_5eed_0001;
/// Tree trunks start this far below the ground so grazing rays cannot slip
/// between the mesh and the proxy.
const TRUNK_SINK: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FoliageKind {
    Tree,
    Grass,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Foliage {
    /// Base point on the terrain surface.
    pub position: Vector3<f64>,
    pub kind: FoliageKind,
    pub radius: f64,
    pub height: f64,
    pub semantic_label: u8,
}

/// What a cell-local ray query hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct CellHit {
    pub distance: f64,
    pub normal: Vector3<f64>,
    pub kind: Option<FoliageKind>,
}

#[derive(Debug, Clone)]
pub struct TerrainCell {
    pub index: CellIndex,
    pub vertices: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    pub triangle_labels: Vec<u8>,
    pub foliage: Vec<Foliage>,
    /// Ray proxies, one per tree, paired with the foliage index.
    pub tree_proxies: Vec<(Cylinder, u32)>,
    bounds: Aabb,
    bvh: Bvh,
    /// Intersection data in BVH slot order.
    slots: Vec<SlotPrimitive>,
}

#[derive(Debug, Clone)]
enum SlotPrimitive {
    Triangle {
        a: Vector3<f64>,
        e1: Vector3<f64>,
        e2: Vector3<f64>,
        index: u32,
    },
    Tree(Cylinder),
}

impl PartialEq for TerrainCell {
    fn eq(&self, other: &Self) -> bool {
        self.index == other.index
            && self.vertices == other.vertices
            && self.normals == other.normals
            && self.triangles == other.triangles
            && self.triangle_labels == other.triangle_labels
            && self.foliage == other.foliage
            && self.tree_proxies == other.tree_proxies
    }
}

/// Builds the cell at `idx`. Pure in `(idx, p)`.
pub fn generate_cell(idx: CellIndex, p: &TerrainParams) -> TerrainCell {
    let n = p.grid_resolution as usize;
    let segments = (n - 1) as i64;
    let step = p.cell_size / segments as f64;

    // Coordinates come from the global integer lattice so that a border
    // vertex is computed from the same integer in both cells.
    let mut vertices = Vec::with_capacity(n * n);
    let mut normals = Vec::with_capacity(n * n);
    for j in 0..n as i64 {
        let y = (idx.iy * segments + j) as f64 * step;
        for i in 0..n as i64 {
            let x = (idx.ix * segments + i) as f64 * step;
            vertices.push(Vector3::new(x, y, terrain_height(x, y, p)));
            normals.push(terrain_normal(x, y, p));
        }
    }

    let mut triangles = Vec::with_capacity(2 * (n - 1) * (n - 1));
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let v00 = (j * n + i) as u32;
            let v10 = v00 + 1;
            let v01 = v00 + n as u32;
            let v11 = v01 + 1;
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    let triangle_labels = vec![p.materials.terrain.label; triangles.len()];

    let foliage = place_foliage(idx, p);
    let tree_proxies: Vec<(Cylinder, u32)> = foliage
        .iter()
        .enumerate()
        .filter(|(_, f)| f.kind == FoliageKind::Tree)
        .map(|(k, f)| {
            let cyl = Cylinder {
                center_x: f.position.x,
                center_y: f.position.y,
                radius: f.radius,
                z_min: f.position.z - TRUNK_SINK,
                z_max: f.position.z + f.height,
            };
            (cyl, k as u32)
        })
        .collect();

    let mut prim_bounds: Vec<Aabb> = triangles
        .iter()
        .map(|t| Aabb::from_points(t.iter().map(|&v| &vertices[v as usize])))
        .collect();
    prim_bounds.extend(tree_proxies.iter().map(|(c, _)| c.bounds()));
    let bvh = Bvh::build(&prim_bounds);
    let bounds = bvh.bounds();
    let slots = bvh
        .order()
        .iter()
        .map(|&prim| match triangles.get(prim as usize) {
            Some(&[a, b, c]) => {
                let a = vertices[a as usize];
                SlotPrimitive::Triangle {
                    a,
                    e1: vertices[b as usize] - a,
                    e2: vertices[c as usize] - a,
                    index: prim,
                }
            }
            None => SlotPrimitive::Tree(tree_proxies[prim as usize - triangles.len()].0),
        })
        .collect();

    TerrainCell {
        index: idx,
        vertices,
        normals,
        triangles,
        triangle_labels,
        foliage,
        tree_proxies,
        bounds,
        bvh,
        slots,
    }
}

/// Candidate points are drawn from a per-cell hash sequence and each one is
/// kept with probability `expected / candidates`, so the expected instance
/// count is `forest_density · cell_size²`.
fn place_foliage(idx: CellIndex, p: &TerrainParams) -> Vec<Foliage> {
    let expected = p.forest_density * p.cell_size * p.cell_size;
    if expected <= 0.0 {
        return Vec::new();
    }
    let candidates = (2.0 * expected).ceil() as u64;
    let keep = expected / candidates as f64;
    let cell_key = hash3(p.seed ^ FOLIAGE_SALT, idx.ix as u64, idx.iy as u64);
    let (x0, y0) = (idx.ix as f64 * p.cell_size, idx.iy as f64 * p.cell_size);

    let mut out = Vec::new();
    for k in 0..candidates {
        let draw = |channel: u64| unit(hash3(cell_key, k, channel));
        if draw(0) >= keep {
            continue;
        }
        let x = x0 + draw(1) * p.cell_size;
        let y = y0 + draw(2) * p.cell_size;
        let z = terrain_height(x, y, p);
        let (kind, radius, height, material) = if draw(3) < p.tree_fraction {
            (
                FoliageKind::Tree,
                0.2 + 0.3 * draw(4),
                6.0 + 12.0 * draw(5),
                &p.materials.tree,
            )
        } else {
            (
                FoliageKind::Grass,
                0.05 + 0.1 * draw(4),
                0.3 + 0.5 * draw(5),
                &p.materials.grass,
            )
        };
        out.push(Foliage {
            position: Vector3::new(x, y, z),
            kind,
            radius,
            height,
            semantic_label: material.label,
        });
    }
    out
}

impl TerrainCell {
    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    pub fn triangle_vertices(&self, t: usize) -> [Vector3<f64>; 3] {
        self.triangles[t].map(|v| self.vertices[v as usize])
    }

    pub fn primitive_count(&self) -> usize {
        self.triangles.len() + self.tree_proxies.len()
    }

    pub(crate) fn raycast(&self, ray: &Ray, t_max: f64) -> Option<CellHit> {
        let mut found = None;
        self.bvh.closest(ray, t_max, |slot, t_best| {
            match &self.slots[slot as usize] {
                SlotPrimitive::Triangle { a, e1, e2, index } => {
                    let (t, u, v) = intersect_triangle_edges(ray, a, e1, e2, t_best)?;
                    found = Some((t, Err((*index, u, v))));
                    Some(t)
                }
                SlotPrimitive::Tree(cyl) => {
                    let (t, normal) = cyl.intersect(ray, t_best)?;
                    found = Some((t, Ok(normal)));
                    Some(t)
                }
            }
        })?;
        // Shading normals only for the winner.
        let (distance, detail) = found?;
        Some(match detail {
            Ok(normal) => CellHit {
                distance,
                normal,
                kind: Some(FoliageKind::Tree),
            },
            Err((index, u, v)) => {
                let [a, b, c] = self.triangles[index as usize];
                let normal = (self.normals[a as usize] * (1.0 - u - v)
                    + self.normals[b as usize] * u
                    + self.normals[c as usize] * v)
                    .normalize();
                CellHit {
                    distance,
                    normal,
                    kind: None,
                }
            }
        })
    }
}
