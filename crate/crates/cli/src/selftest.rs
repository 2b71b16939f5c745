//! Library-versus-oracle comparisons on seeded random inputs.

use anyhow::Result;
use occkit_core::flow_math::{bin_centers, flow_from_logits, grad_bin_centers, grad_flow_from_logits, softmax, BinConfig};
use occkit_core::metrics::{evaluate_rays, mave_lq, mave_per_voxel, mave_tp, ray_iou, MavePooling};
use occkit_core::raycast::{
    cast_first_hit, select_hard_examples, traverse_with_depth, visible_mask_v1, visible_mask_v2,
};
use occkit_core::splat_warp::{grad_warp, splat, warp_forward, warp_occupancy, warp_score, SplatSample};
use occkit_core::synth::{flip_to_free, synth_scene, SceneRng, SynthConfig};
use occkit_core::{FeatureGrid, FlowField, GridSpec, OccupancyGrid, RayBundle, RayPattern, VoxelMask};
use occkit_oracle as oracle;

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn unit_vector(rng: &mut SceneRng) -> [f64; 3] {
    loop {
        let v = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.map(|x| x / n);
        }
    }
}

fn small_spec(rng: &mut SceneRng) -> GridSpec {
    let dims = [rng.int(8, 16), rng.int(8, 16), rng.int(8, 16)];
    let origin = [rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0), rng.uniform(-2.0, 2.0)];
    GridSpec::new(origin, rng.uniform(0.2, 1.0), dims).expect("valid spec")
}

fn point_near(rng: &mut SceneRng, spec: &GridSpec, margin: f64) -> [f64; 3] {
    std::array::from_fn(|a| {
        let lo = spec.origin[a] - margin * spec.voxel_size;
        rng.uniform(lo, lo + (spec.dims[a] as f64 + 2.0 * margin) * spec.voxel_size)
    })
}

fn noisy_occupancy(rng: &mut SceneRng, spec: GridSpec, density: f64) -> OccupancyGrid {
    let labels = (0..spec.len()).map(|_| if rng.unit() < density { rng.int(0, 4) as u8 } else { 16 }).collect();
    OccupancyGrid::new(spec, labels, 17, 16).expect("valid labels")
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn traversal(rng: &mut SceneRng) -> Result<Check> {
    let mut mismatches = 0;
    let mut worst = 0.0f64;
    for _ in 0..300 {
        let spec = small_spec(rng);
        let origin = point_near(rng, &spec, 3.0);
        let dir = unit_vector(rng);
        let range = rng.uniform(0.5, 30.0) * spec.voxel_size;
        let fast = traverse_with_depth(&spec, origin, dir, range)?;
        let slow = oracle::march(&spec, origin, dir, range);
        if fast.iter().map(|c| c.0).ne(slow.iter().map(|c| c.0)) {
            mismatches += 1;
        }
        for (a, b) in fast.iter().zip(&slow) {
            worst = worst.max((a.1 - b.1).abs());
        }
    }
    Ok(check("traversal vs ray marching", mismatches == 0 && worst <= 1e-6, format!("300 rays, {mismatches} mismatched, max depth diff {worst:.1e} m")))
}

fn first_hits(rng: &mut SceneRng) -> Result<Check> {
    let mut bad = 0;
    for _ in 0..200 {
        let spec = small_spec(rng);
        let grid = noisy_occupancy(rng, spec, 0.05);
        let origin = point_near(rng, &spec, 2.0);
        let dir = unit_vector(rng);
        let hit = cast_first_hit(&grid, origin, dir, 40.0)?;
        let ok = match oracle::march_first_hit(&grid, origin, dir, 40.0) {
            Some((v, label, depth)) => hit.hit && hit.voxel == v && hit.label == label && (hit.depth - depth).abs() <= 1e-6,
            None => !hit.hit,
        };
        bad += usize::from(!ok);
    }
    Ok(check("first hit vs ray marching", bad == 0, format!("200 rays, {bad} mismatched")))
}

fn masks(rng: &mut SceneRng) -> Result<Check> {
    let pattern = RayPattern { elevations: (0..8).map(|i| -0.4 + 0.1 * i as f64).collect(), azimuth_count: 64, max_range: 30.0 };
    let mut bad = 0;
    for _ in 0..3 {
        let spec = GridSpec::new([0.0; 3], 0.5, [16, 16, 4])?;
        let mut grid = noisy_occupancy(rng, spec, 0.08);
        let mut origin = point_near(rng, &spec, 0.0);
        origin[2] = 0.75;
        if let Some(v) = spec.world_to_voxel(origin) {
            grid.set(v, grid.free_class());
        }
        let bundle = RayBundle::new(vec![origin], pattern.clone())?;
        let v1 = visible_mask_v1(&grid, &bundle);
        let v2 = visible_mask_v2(&grid, &bundle, 1.0)?;
        bad += usize::from(v1 != oracle::visible_mask(&grid, &bundle, None));
        bad += usize::from(v2 != oracle::visible_mask(&grid, &bundle, Some(1.0)));
        bad += usize::from(!v1.is_subset_of(&v2) || visible_mask_v2(&grid, &bundle, 0.0)? != v1);
    }
    Ok(check("visible masks vs oracle", bad == 0, format!("3 scenes, {bad} mismatched")))
}

fn dilation_ball() -> Result<Check> {
    let spec = GridSpec::new([0.0; 3], 0.4, [16, 16, 16])?;
    let mut grid = OccupancyGrid::empty(spec);
    grid.set([8, 8, 8], 2);
    let origin = spec.voxel_to_world([8, 8, 0])?;
    let up = RayPattern { elevations: vec![std::f64::consts::FRAC_PI_2], azimuth_count: 1, max_range: 10.0 };
    let bundle = RayBundle::new(vec![origin], up)?;
    let v1 = visible_mask_v1(&grid, &bundle);
    let v2 = visible_mask_v2(&grid, &bundle, 2.0)?;
    // the ray column below the hit lies inside the ball for its top five cells
    let column_outside = (0..8).filter(|&z| (8 - z) as f64 * 0.4 > 2.0 + 1e-9).count();
    let ball = v2.count() - column_outside;
    let expected = oracle::ball_count(&spec, [8, 8, 8], 2.0);
    Ok(check("dilation ball vs exhaustive scan", ball == expected && v1.is_subset_of(&v2), format!("r = 2.0 m, pitch 0.4 m: {ball} voxels, oracle {expected}")))
}

fn hard_examples(rng: &mut SceneRng) -> Result<Check> {
    let spec = GridSpec::new([0.0; 3], 1.0, [10, 10, 1])?;
    let mut bad = 0;
    for fraction in [0.1, 0.25, 0.5, 0.77, 1.0] {
        let unc = FeatureGrid::new(spec, 1, (0..100).map(|_| rng.int(0, 40) as f64 / 7.0).collect())?;
        let mask = VoxelMask::new(spec, (0..100).map(|_| rng.unit() < 0.7).collect())?;
        bad += usize::from(select_hard_examples(&unc, &mask, fraction)? != oracle::hard_examples(&unc, &mask, fraction));
    }
    Ok(check("hard examples vs full sort", bad == 0, format!("5 fractions, {bad} mismatched")))
}

fn metrics(rng: &mut SceneRng) -> Result<Check> {
    let spec = GridSpec::new([-4.0, -4.0, -1.0], 0.4, [20, 20, 8])?;
    let pattern = RayPattern { elevations: vec![-0.4, -0.2, 0.0, 0.2], azimuth_count: 120, max_range: 30.0 };
    let classes: Vec<u8> = (0..16).collect();
    let fg = [0, 1, 2, 3];
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let config = SynthConfig { seed: rng.next_u64(), spec, n_boxes: 8, ..SynthConfig::default() };
        let scene = synth_scene(&config)?;
        let pred = flip_to_free(&scene.current, rng.int(0, 60), rng.next_u64());
        let pred_flow = FlowField::new(
            spec,
            scene.flow.values().iter().map(|f| [f[0] + rng.uniform(-1.0, 1.0), f[1] + rng.uniform(-1.0, 1.0)]).collect(),
        )?;
        let origin = scene.trajectory.poses[1].sensor_origin();
        let bundle = RayBundle::new(vec![origin], pattern.clone())?;
        let evals = evaluate_rays(&scene.current, &pred, &scene.flow, &pred_flow, &bundle)?;
        for t in [1.0, 2.0, 4.0] {
            let (mean, _) = ray_iou(&evals, t, &classes)?;
            worst = worst.max((mean - oracle::ray_iou(&evals, t, &classes).0).abs());
        }
        worst = worst.max((mave_tp(&evals, 2.0, &fg, MavePooling::ClassMean) - oracle::mave_tp(&evals, 2.0, &fg)).abs());
        worst = worst.max((mave_lq(&evals, &fg, MavePooling::ClassMean) - oracle::mave_lq(&evals, &fg)).abs());
        let pv = mave_per_voxel(&scene.current, &pred, &scene.flow, &pred_flow, &fg, MavePooling::ClassMean)?;
        worst = worst.max((pv - oracle::mave_per_voxel(&scene.current, &pred, &scene.flow, &pred_flow, &fg)).abs());
    }
    Ok(check("RayIoU and mAVE vs set counting", worst <= 1e-9, format!("10 scene pairs, max diff {worst:.1e}")))
}

fn flow_math(rng: &mut SceneRng) -> Result<Check> {
    let mut worst_centers = 0.0f64;
    let mut worst_grad = 0.0f64;
    for _ in 0..50 {
        let n = rng.int(2, 32);
        let lo = rng.uniform(-30.0, 0.0);
        let cfg = BinConfig::new(n, lo, lo + rng.uniform(1.0, 50.0))?;
        let scene: Vec<f64> = (0..n).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let voxel: Vec<f64> = (0..n).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let b = softmax(&scene)?;
        let c = bin_centers(&b, &cfg)?;
        worst_centers = worst_centers.max(max_abs_diff(&c, &oracle::bin_centers(&b, cfg.f_min, cfg.f_max)));

        let jac = oracle::central_jacobian(|x| oracle::bin_centers(x, cfg.f_min, cfg.f_max), &b, 1e-6);
        let flat = |m: &Vec<Vec<f64>>| m.iter().flatten().copied().collect::<Vec<_>>();
        worst_grad = worst_grad.max(oracle::relative_error(&flat(&grad_bin_centers(&b, &cfg)), &flat(&jac), 1e-8));

        let (gs, gv) = grad_flow_from_logits(&scene, &voxel, &cfg)?;
        let ns = oracle::central_gradient(|x| flow_from_logits(x, &voxel, &cfg).expect("finite"), &scene, 1e-6);
        let nv = oracle::central_gradient(|x| flow_from_logits(&scene, x, &cfg).expect("finite"), &voxel, 1e-6);
        worst_grad = worst_grad.max(oracle::relative_error(&gs, &ns, 1e-8)).max(oracle::relative_error(&gv, &nv, 1e-8));
    }
    Ok(check(
        "bin centers and gradients vs differences",
        worst_centers <= 1e-9 && worst_grad <= 1e-6,
        format!("50 draws, centers diff {worst_centers:.1e}, gradient rel err {worst_grad:.1e}"),
    ))
}

fn random_features(rng: &mut SceneRng, spec: GridSpec, c: usize) -> Result<FeatureGrid> {
    Ok(FeatureGrid::new(spec, c, (0..spec.len() * c).map(|_| rng.uniform(-1.0, 1.0)).collect())?)
}

fn splat_warp(rng: &mut SceneRng) -> Result<Check> {
    let spec = GridSpec::new([-2.0, -2.0, -1.0], 0.4, [12, 10, 4])?;
    let samples: Vec<SplatSample> = (0..300)
        .map(|_| SplatSample {
            position: [rng.uniform(-1.0, 13.0), rng.uniform(-1.0, 11.0), rng.uniform(-1.0, 5.0)],
            value: vec![rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)],
        })
        .collect();
    let raw: Vec<_> = samples.iter().map(|s| (s.position, s.value.clone())).collect();
    let mut worst = max_abs_diff(splat(&samples, &spec, 2)?.values(), &oracle::splat(&spec, 2, &raw));

    let feat = random_features(rng, spec, 3)?;
    let flow = FlowField::new(spec, (0..spec.len()).map(|_| [rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)]).collect())?;
    worst = worst.max(max_abs_diff(warp_forward(&feat, &flow, 0.5)?.values(), &oracle::warp(&feat, &flow, 0.5)));
    let current = noisy_occupancy(rng, spec, 0.3);
    let future = noisy_occupancy(rng, spec, 0.3);
    let soft = warp_occupancy(&current, &flow, 0.5)?;
    let mass = oracle::warp_occupancy(&current, &flow, 0.5);
    worst = worst.max(max_abs_diff(soft.values(), &mass));
    worst = worst.max((warp_score(&soft, &future, None, 1e-6)? - oracle::warp_score(&mass, 17, &future, 1e-6)).abs());
    Ok(check("splat and warp vs sequential scatter", worst <= 1e-9, format!("max diff {worst:.1e}")))
}

fn warp_gradients(rng: &mut SceneRng) -> Result<Check> {
    let dt = 0.5;
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let spec = GridSpec::new([0.0; 3], rng.uniform(0.3, 0.6), [rng.int(3, 5), rng.int(3, 5), rng.int(1, 2)])?;
        let scale = dt / spec.voxel_size;
        let feat = random_features(rng, spec, 2)?;
        let up = random_features(rng, spec, 2)?;
        let flow_values: Vec<[f64; 2]> = (0..spec.len())
            .map(|_| {
                std::array::from_fn(|_| loop {
                    let f = rng.uniform(-2.0, 2.0);
                    let d = (f * scale).rem_euclid(1.0);
                    if d > 1e-3 && d < 1.0 - 1e-3 {
                        break f;
                    }
                })
            })
            .collect();
        let flow = FlowField::new(spec, flow_values)?;
        let objective = |f: &FeatureGrid, q: &FlowField| -> f64 {
            let w = warp_forward(f, q, dt).expect("same spec");
            w.values().iter().zip(up.values()).map(|(a, b)| a * b).sum()
        };
        let (gf, gq) = grad_warp(&feat, &flow, dt, &up)?;
        let nf = oracle::central_gradient(|x| objective(&FeatureGrid::new(spec, 2, x.to_vec()).expect("shape"), &flow), feat.values(), 1e-6);
        let flat: Vec<f64> = flow.values().iter().flatten().copied().collect();
        let nq = oracle::central_gradient(
            |x| objective(&feat, &FlowField::new(spec, x.chunks(2).map(|p| [p[0], p[1]]).collect()).expect("shape")),
            &flat,
            1e-6,
        );
        let aq: Vec<f64> = gq.values().iter().flatten().copied().collect();
        worst = worst.max(oracle::relative_error(gf.values(), &nf, 1e-8)).max(oracle::relative_error(&aq, &nq, 1e-8));
    }
    Ok(check("warp gradients vs differences", worst <= 1e-5, format!("10 cases, max rel err {worst:.1e}")))
}

/// Runs every comparison, prints one line each and reports whether all passed.
pub fn run(seed: u64) -> Result<bool> {
    let mut rng = SceneRng::new(seed);
    let checks = [
        traversal(&mut rng)?,
        first_hits(&mut rng)?,
        masks(&mut rng)?,
        dilation_ball()?,
        hard_examples(&mut rng)?,
        metrics(&mut rng)?,
        flow_math(&mut rng)?,
        splat_warp(&mut rng)?,
        warp_gradients(&mut rng)?,
    ];
    let passed = checks.iter().filter(|c| c.passed).count();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("selftest: {passed}/{} passed (seed {seed})", checks.len());
    Ok(passed == checks.len())
}
