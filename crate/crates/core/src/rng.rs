//! Counter-based random streams: every consumer derives its generator from
//! `(seed, index)` so results never depend on scheduling.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chart::ChartPoint;
use crate::solenoid::TorusPoint;

/// Stream tags keep independent consumers of one seed apart.
pub mod tag {
    pub const ORBIT: u64 = 1;
    pub const AUDIT: u64 = 2;
    pub const CURVE: u64 = 3;
    pub const RETURN: u64 = 4;
    pub const BOOTSTRAP: u64 = 5;
    pub const CHART: u64 = 6;
    pub const BASE: u64 = 7;
}

/// Generator for substream `index` of `seed`, separated by `tag`.
pub fn substream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}

/// Uniform point in the solid torus (area-uniform on the disk).
pub fn uniform_torus<R: Rng>(rng: &mut R) -> TorusPoint {
    let t: f64 = rng.random();
    let r = rng.random::<f64>().sqrt();
    let phi = TAU * rng.random::<f64>();
    TorusPoint::new_unchecked(t, r * phi.cos(), r * phi.sin())
}

/// Uniform direction on the unit sphere.
pub fn unit_sphere<R: Rng>(rng: &mut R) -> [f64; 3] {
    let z = 2.0 * rng.random::<f64>() - 1.0;
    let phi = TAU * rng.random::<f64>();
    let rho = (1.0 - z * z).max(0.0).sqrt();
    [z, rho * phi.cos(), rho * phi.sin()]
}

/// Uniform point in the closed ball of the given radius in chart space.
pub fn uniform_ball<R: Rng>(rng: &mut R, radius: f64) -> ChartPoint {
    let d = unit_sphere(rng);
    let r = radius * rng.random::<f64>().cbrt();
    ChartPoint::new(r * d[0], r * d[1], r * d[2])
}
