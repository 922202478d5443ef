use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rotorsim_core::worldgen::{generate_cell, CellIndex, Cylinder, TerrainParams, WorldState};
use rotorsim_core::Vector3;

fn hilly() -> TerrainParams {
    TerrainParams {
        seed: 11,
        grid_resolution: 17,
        amplitude: 12.0,
        forest_density: 0.004,
        ..Default::default()
    }
}

/// Plane intersection followed by an edge-function inside test.
fn brute_triangle(o: &Vector3<f64>, d: &Vector3<f64>, tri: &[Vector3<f64>; 3]) -> Option<f64> {
    let [a, b, c] = tri;
    let n = (b - a).cross(&(c - a));
    let denom = n.dot(d);
    if denom.abs() < 1e-14 {
        return None;
    }
    let t = n.dot(&(a - o)) / denom;
    if t <= 1e-9 {
        return None;
    }
    let p = o + d * t;
    let inside = [(a, b), (b, c), (c, a)]
        .iter()
        .all(|(u, v)| (*v - *u).cross(&(p - *u)).dot(&n) >= 0.0);
    inside.then_some(t)
}

fn brute_cylinder(o: &Vector3<f64>, d: &Vector3<f64>, c: &Cylinder) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut take = |t: f64| {
        if t > 1e-9 && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    };
    let (px, py) = (o.x - c.center_x, o.y - c.center_y);
    let qa = d.x * d.x + d.y * d.y;
    let qb = 2.0 * (px * d.x + py * d.y);
    let qc = px * px + py * py - c.radius * c.radius;
    let disc = qb * qb - 4.0 * qa * qc;
    if qa > 0.0 && disc >= 0.0 {
        for t in [
            (-qb - disc.sqrt()) / (2.0 * qa),
            (-qb + disc.sqrt()) / (2.0 * qa),
        ] {
            let z = o.z + t * d.z;
            if (c.z_min..=c.z_max).contains(&z) {
                take(t);
            }
        }
    }
    for z in [c.z_min, c.z_max] {
        if d.z != 0.0 {
            let t = (z - o.z) / d.z;
            let (x, y) = (px + t * d.x, py + t * d.y);
            if x * x + y * y <= c.radius * c.radius {
                take(t);
            }
        }
    }
    best
}

fn brute_force(w: &WorldState, o: &Vector3<f64>, d: &Vector3<f64>, max_range: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    for cell in w.cells() {
        for t in 0..cell.triangles.len() {
            if let Some(h) = brute_triangle(o, d, &cell.triangle_vertices(t)) {
                best = Some(best.map_or(h, |b| b.min(h)));
            }
        }
        for (cyl, _) in &cell.tree_proxies {
            if let Some(h) = brute_cylinder(o, d, cyl) {
                best = Some(best.map_or(h, |b| b.min(h)));
            }
        }
    }
    best.filter(|&t| t <= max_range)
}

fn random_ray(
    rng: &mut ChaCha8Rng,
    lo: &Vector3<f64>,
    hi: &Vector3<f64>,
) -> (Vector3<f64>, Vector3<f64>) {
    let o = Vector3::new(
        rng.random_range(lo.x..hi.x),
        rng.random_range(lo.y..hi.y),
        rng.random_range(lo.z..hi.z),
    );
    loop {
        let d = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = d.norm();
        if n > 0.1 && n <= 1.0 {
            return (o, d / n);
        }
    }
}

#[test]
fn raycast_agrees_with_brute_force_including_trees() {
    let p = hilly();
    let w =
        WorldState::with_cells(p.clone(), [CellIndex::new(0, 0), CellIndex::new(1, 0)]).unwrap();
    assert!(w.cells().map(|c| c.tree_proxies.len()).sum::<usize>() > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (lo, hi) = (
        Vector3::new(-20.0, -20.0, -5.0),
        Vector3::new(220.0, 120.0, 40.0),
    );
    let mut hits = 0;
    for _ in 0..2000 {
        let (o, d) = random_ray(&mut rng, &lo, &hi);
        let got = w.raycast(o, d, 150.0).unwrap().map(|h| h.distance);
        let want = brute_force(&w, &o, &d, 150.0);
        match (got, want) {
            (Some(g), Some(e)) => {
                assert!((g - e).abs() <= 1e-9, "{o:?} {d:?}: {g} vs {e}");
                hits += 1;
            }
            (None, None) => {}
            other => panic!("{o:?} {d:?}: {other:?}"),
        }
    }
    assert!(hits > 300, "{hits}");
}

#[test]
fn five_by_five_patch_is_seamless() {
    let p = hilly();
    let n = p.grid_resolution as usize;
    let cells: Vec<Vec<_>> = (-2..=2)
        .map(|iy| {
            (-2..=2)
                .map(|ix| generate_cell(CellIndex::new(ix, iy), &p))
                .collect()
        })
        .collect();
    for row in &cells {
        for pair in row.windows(2) {
            for j in 0..n {
                assert_eq!(pair[0].vertices[j * n + n - 1], pair[1].vertices[j * n]);
            }
        }
    }
    for rows in cells.windows(2) {
        for (lower, upper) in rows[0].iter().zip(&rows[1]) {
            for i in 0..n {
                assert_eq!(lower.vertices[(n - 1) * n + i], upper.vertices[i]);
            }
        }
    }
}

#[test]
fn incremental_updates_match_a_fresh_build() {
    let mut w = WorldState::new(hilly()).unwrap();
    let path = [
        (10.0, 10.0),
        (90.0, 40.0),
        (180.0, 60.0),
        (260.0, -30.0),
        (-150.0, 220.0),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for &(x, y) in &path {
        w.update_cells(&[Vector3::new(x, y, 20.0)], None).unwrap();
        let fresh = w.rebuilt();
        assert_eq!(fresh.active_cells(), w.active_cells());
        let lo = Vector3::new(x - 100.0, y - 100.0, -5.0);
        let hi = Vector3::new(x + 100.0, y + 100.0, 50.0);
        for _ in 0..300 {
            let (o, d) = random_ray(&mut rng, &lo, &hi);
            assert_eq!(
                w.raycast(o, d, 300.0).unwrap(),
                fresh.raycast(o, d, 300.0).unwrap()
            );
        }
    }
}

#[test]
fn replay_reproduces_cell_sets_and_meshes() {
    let run = || {
        let mut w = WorldState::new(hilly()).unwrap();
        let mut history = Vec::new();
        for k in 0..60 {
            let t = k as f64 * 0.5;
            let uav = Vector3::new(30.0 * t, 10.0 * t.sin() * 20.0, 15.0);
            let spectator = Vector3::new(-50.0, 25.0 * t, 5.0);
            w.update_cells(&[uav], Some(spectator)).unwrap();
            history.push(w.active_cells());
        }
        let meshes: Vec<_> = w.cells().cloned().collect();
        (history, meshes)
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn active_set_is_bounded_and_order_free(
        xs in prop::collection::vec((-1000.0f64..1000.0, -1000.0f64..1000.0, -20.0f64..200.0), 1..4),
        range in 10.0f64..400.0,
    ) {
        let p = TerrainParams { visibility_range: range, grid_resolution: 2, forest_density: 0.0, ..Default::default() };
        let observers: Vec<Vector3<f64>> = xs.iter().map(|&(x, y, z)| Vector3::new(x, y, z)).collect();
        let mut a = WorldState::new(p.clone()).unwrap();
        a.update_cells(&observers, None).unwrap();
        let mut reversed = observers.clone();
        reversed.reverse();
        let mut b = WorldState::new(p.clone()).unwrap();
        b.update_cells(&reversed, None).unwrap();
        prop_assert_eq!(a.active_cells(), b.active_cells());
        prop_assert!(a.active_cells().len() <= 9 * observers.len());
        // Every active cell is within range and in some observer's neighbourhood.
        for c in a.active_cells() {
            let justified = observers.iter().any(|o| {
                let home = p.cell_at(o.x, o.y);
                (c.ix - home.ix).abs() <= 1 && (c.iy - home.iy).abs() <= 1 && p.is_visible(c, o)
            });
            prop_assert!(justified, "cell {} has no observer", c);
        }
    }
}
