//! Seeded 2D gradient noise and the fractal terrain height function.

use super::TerrainParams;

/// SplitMix64 finalizer.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
pub(crate) fn hash3(a: u64, b: u64, c: u64) -> u64 {
    mix64(
        mix64(mix64(a.wrapping_add(0x9e37_79b9_7f4a_7c15)) ^ b)
            ^ c.wrapping_mul(0xff51_afd7_ed55_8ccd),
    )
}

/// Uniform in `[0, 1)` from the top 53 bits of `h`.
#[inline]
pub(crate) fn unit(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

// Four diagonal and four axis gradients. The diagonal ones bound the noise
// magnitude by one; the axis ones never exceed them.
const GRADIENTS: [(f64, f64); 8] = [
    (1.0, 1.0),
    (-1.0, 1.0),
    (1.0, -1.0),
    (-1.0, -1.0),
    (1.0, 0.0),
    (-1.0, 0.0),
    (0.0, 1.0),
    (0.0, -1.0),
];

#[inline]
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

#[inline]
fn lerp(t: f64, a: f64, b: f64) -> f64 {
    a + t * (b - a)
}

#[inline]
fn corner(seed: u64, ix: i64, iy: i64, dx: f64, dy: f64) -> f64 {
    let (gx, gy) = GRADIENTS[(hash3(seed, ix as u64, iy as u64) & 7) as usize];
    gx * dx + gy * dy
}

/// Improved-gradient 2D Perlin noise sampled at `(x, y) · frequency`.
///
/// Values lie in `[−1, 1]`, vanish on the integer lattice of the scaled
/// coordinates and are C² continuous (quintic fade).
pub fn perlin(x: f64, y: f64, frequency: f64, seed: u64) -> f64 {
    let (px, py) = (x * frequency, y * frequency);
    let (x0, y0) = (px.floor(), py.floor());
    let (fx, fy) = (px - x0, py - y0);
    let (ix, iy) = (x0 as i64, y0 as i64);

    let n00 = corner(seed, ix, iy, fx, fy);
    let n10 = corner(seed, ix.wrapping_add(1), iy, fx - 1.0, fy);
    let n01 = corner(seed, ix, iy.wrapping_add(1), fx, fy - 1.0);
    let n11 = corner(
        seed,
        ix.wrapping_add(1),
        iy.wrapping_add(1),
        fx - 1.0,
        fy - 1.0,
    );

    let (u, v) = (fade(fx), fade(fy));
    lerp(v, lerp(u, n00, n10), lerp(u, n01, n11))
}

/// Terrain height at world coordinates `(x, y)`:
/// `amplitude · Σ roughnessᵒ · perlin(x, y, base_frequency · 2ᵒ, seed ⊕ o)`.
pub fn terrain_height(x: f64, y: f64, p: &TerrainParams) -> f64 {
    if p.amplitude == 0.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut weight = 1.0;
    let mut frequency = p.base_frequency;
    for o in 0..p.octaves {
        sum += weight * perlin(x, y, frequency, p.seed ^ o as u64);
        weight *= p.roughness;
        frequency *= 2.0;
    }
    p.amplitude * sum
}

/// Upward unit normal of the terrain surface by central differences.
pub fn terrain_normal(x: f64, y: f64, p: &TerrainParams) -> nalgebra::Vector3<f64> {
    const H: f64 = 1e-3;
    let dzdx = (terrain_height(x + H, y, p) - terrain_height(x - H, y, p)) / (2.0 * H);
    let dzdy = (terrain_height(x, y + H, p) - terrain_height(x, y - H, p)) / (2.0 * H);
    nalgebra::Vector3::new(-dzdx, -dzdy, 1.0).normalize()
}
