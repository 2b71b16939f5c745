#![allow(dead_code)]

use occkit_core::synth::SceneRng;
use occkit_core::{GridSpec, OccupancyGrid};

pub fn random_unit(rng: &mut SceneRng) -> [f64; 3] {
    loop {
        let v = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.map(|x| x / n);
        }
    }
}

/// Random grid with edge lengths in 8..=16 and a random pitch.
pub fn random_spec(rng: &mut SceneRng) -> GridSpec {
    let dims = [rng.int(8, 16), rng.int(8, 16), rng.int(8, 16)];
    let pitch = rng.uniform(0.2, 1.0);
    let origin = [rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0), rng.uniform(-2.0, 2.0)];
    GridSpec::new(origin, pitch, dims).unwrap()
}

/// Point inside the box grown by `margin` voxels on every side.
pub fn random_point(rng: &mut SceneRng, spec: &GridSpec, margin: f64) -> [f64; 3] {
    std::array::from_fn(|a| {
        let lo = spec.origin[a] - margin * spec.voxel_size;
        let hi = spec.origin[a] + (spec.dims[a] as f64 + margin) * spec.voxel_size;
        rng.uniform(lo, hi)
    })
}

/// Grid where each voxel is occupied with probability `density`, classes 0..4.
pub fn random_occupancy(rng: &mut SceneRng, spec: GridSpec, density: f64) -> OccupancyGrid {
    let labels = (0..spec.len())
        .map(|_| if rng.unit() < density { rng.int(0, 4) as u8 } else { 16 })
        .collect();
    OccupancyGrid::new(spec, labels, 17, 16).unwrap()
}

pub fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}
