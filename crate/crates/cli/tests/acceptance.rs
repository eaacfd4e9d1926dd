//! Acceptance suite: one PASS/FAIL line per criterion.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use layerwise_core::config::parse_config;
use layerwise_core::control::{check_theorem3, fast_cooling_ratio, homogeneous_residual, toeplitz_dl};
use layerwise_core::lift::{build_dl, build_p, build_q, lift_layer, PMode};
use layerwise_core::measurement::measurement_vector;
use layerwise_core::path::{generate_raster, register_samples};
use layerwise_core::silc::{
    convergence_margin, run_closed_loop, voxel_grid, History, PathConfig, PlantConfig, Reference, Region, SilcConfig,
};
use layerwise_core::thermal::{build_system, corner_pulse_decay, simulate_layer};
use layerwise_core::{
    BottomBoundary, LayerMask, MaskShape, MaterialParams, MeasurementKind, MeshSpec, PartGeometry, PathSchedule,
    PlantOptions, RasterParams, ResetOperator, SampleSets, ThermalState, VoxelGridSpec, VoxelId,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, t: Instant, detail: String) -> Outcome {
    let el = t.elapsed();
    if el > limit {
        return Err(format!("{detail}; took {el:.1?}, limit {limit:?}"));
    }
    Ok(format!("{detail}; {el:.1?}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("example 4/5 Q and backward P", c1_example_matrices),
        ("D_L oracle equivalence", c2_oracle_equivalence),
        ("conservation and maximum principle", c3_conservation),
        ("1-D analytic diffusion", c4_analytic_rod),
        ("fast-cooling theorem trials", c5_theorem3_trials),
        ("steel corner pulse", c6_corner_pulse),
        ("linear surrogate contraction", c7_linear_surrogate),
        ("prism closed loop", c8_prism),
        ("rotating half ellipsoid", c9_ellipsoid),
        ("determinism", c10_determinism),
    ];
    // ACCEPTANCE_ONLY=3,7 runs a subset.
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = 0;
    let mut ran = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(k + 1))) {
            continue;
        }
        ran += 1;
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(d) => println!("criterion {:2} {name}: PASS ({d})", k + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:2} {name}: FAIL ({d})", k + 1)
            }
        }
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- 1

const EX4_PATH: [(usize, usize); 11] =
    [(1, 1), (3, 1), (5, 1), (6, 3), (4, 3), (2, 3), (1, 2), (1, 5), (3, 5), (5, 5), (6, 6)];

fn ex4_q() -> DMatrix<f64> {
    let t = 1.0 / 3.0;
    let h = 0.5;
    #[rustfmt::skip]
    let q = DMatrix::from_row_slice(4, 10, &[
        t, 0.0, 0.0, 0.0, t, t, 0.0, 0.0, 0.0, 0.0,
        0.0, t, t, t, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0, h, h, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, h, h,
    ]);
    q
}

fn ex4_p_backward() -> DMatrix<f64> {
    #[rustfmt::skip]
    let pt = DMatrix::from_row_slice(4, 10, &[
        1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0,
    ]);
    pt.transpose()
}

fn c1_example_matrices() -> Outcome {
    let t = Instant::now();
    let sched = PathSchedule::from_steps(1, 6, 6, EX4_PATH.iter().map(|&p| Some(p)).collect()).unwrap();
    let vspec = VoxelGridSpec::covering((1, 1), (6, 6), (3, 3)).unwrap();
    let sets = register_samples(&sched, &vspec).unwrap();
    let q = build_q(&sets, sched.n_t()).unwrap();
    let p = build_p(&sets, sched.n_t(), PMode::Backward);
    let core_ok = q == ex4_q() && p == ex4_p_backward();

    // Same fixture through the command line.
    let dir = tempfile::tempdir().unwrap();
    let mut path = String::from("layer,n,d1,d2,on\n");
    for (n, (a, b)) in EX4_PATH.iter().enumerate() {
        path.push_str(&format!("1,{n},{a},{b},1\n"));
    }
    std::fs::write(dir.path().join("ex4_path.csv"), path).unwrap();
    std::fs::write(
        dir.path().join("ex4.cfg"),
        "n1=6\nn2=6\nwindow_layers=1\ndx=1e-4\ndy=1e-4\ndz=1e-4\ndt=1e-4\ngeometry=block\n\
         path_file=ex4_path.csv\nvoxel_size=3\nmeasurement=max_temp\noutput_dir=mats\n",
    )
    .unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_layerwise"))
        .args(["build-matrices", "ex4.cfg", "--layer", "1"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    let read = |f: &str| {
        layerwise_core::export::parse_matrix_csv(&std::fs::read_to_string(dir.path().join("mats").join(f)).unwrap())
            .unwrap()
    };
    let cli_ok = status.status.success() && read("q_layer_0001.csv") == ex4_q() && read("p_layer_0001.csv") == ex4_p_backward();
    let r = check(core_ok && cli_ok, format!("library exact: {core_ok}, CLI CSV exact: {cli_ok}"));
    r.and_then(|d| within(Duration::from_secs(1), t, d))
}

// ---------------------------------------------------------------- 2

fn c2_oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let mesh = MeshSpec::new(20, 10, 3, 50e-6, 50e-6, 50e-6, 62.5e-6).unwrap();
    let geom = PartGeometry::extruded(LayerMask::full(20, 10), 3).unwrap();
    let sys = build_system(&mesh, &MaterialParams::steel(), &geom, 3, &PlantOptions::default()).unwrap();
    let rp = RasterParams { hatch: 100e-6, speed: 0.8, sample_period: 62.5e-6, angle_deg: 90.0 };
    let sched = generate_raster(&geom, &mesh, 3, &rp).unwrap();
    let n_t = sched.n_t();
    if n_t > 200 {
        return Err(format!("N_t = {n_t} exceeds 200"));
    }
    let kind = MeasurementKind::MaxTemp;
    let mut worst_col: f64 = 0.0;
    let mut worst_dense: f64 = 0.0;
    let mut worst_rel: f64 = 0.0;
    for shape in [MaskShape::OneHot, MaskShape::three_element()] {
        let dl = build_dl(&sys, &sched, &kind, &shape).unwrap();
        let x0 = ThermalState::zeros(&mesh, 3);
        for j in 1..=n_t {
            let mut u = vec![0.0; n_t];
            u[j - 1] = 1.0;
            let (_, y) = simulate_layer(&x0, &sched, &u, &sys, &kind, &shape).unwrap();
            for i in 0..n_t {
                worst_col = worst_col.max((y[i] - dl[(i, j - 1)]).abs());
            }
        }
        // Dense oracle: d_ij = f(i)^T A^(i-j) B h(j-1) with per-sample A, B.
        let a = sys.sample_a_dense();
        let b = sys.sample_b_dense();
        let masks = sched.mask_sequence(&shape, sys.top_mask());
        for j in 1..=n_t {
            let mut h = DVector::zeros(mesh.plane_len());
            for &(k, w) in &masks[j - 1] {
                h[k] += w;
            }
            let mut x = &b * h;
            for i in j..=n_t {
                if i > j {
                    x = &a * x;
                }
                let f = measurement_vector(&kind, i, &sched, &mesh, None).unwrap();
                worst_dense = worst_dense.max((f.dot(&x) - dl[(i - 1, j - 1)]).abs());
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let u: Vec<f64> = (0..n_t).map(|_| rng.random_range(0.0..400.0)).collect();
            let (_, y) = simulate_layer(&x0, &sched, &u, &sys, &kind, &shape).unwrap();
            let lifted = &dl * DVector::from_vec(u);
            worst_rel = worst_rel.max((&lifted - &y).norm() / y.norm());
        }
    }
    let r = check(
        worst_col <= 1e-10 && worst_dense <= 1e-10 && worst_rel <= 1e-9,
        format!("N_t={n_t}, column err {worst_col:.2e}, dense-formula err {worst_dense:.2e}, random rel err {worst_rel:.2e}"),
    );
    r.and_then(|d| within(Duration::from_secs(30), t, d))
}

// ---------------------------------------------------------------- 3

fn c3_conservation() -> Outcome {
    let mesh = MeshSpec::new(12, 9, 3, 50e-6, 50e-6, 50e-6, 62.5e-6).unwrap();
    let geom = PartGeometry::prism(12, 9, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // Heat only where there is material; void elements carry no state.
    let x0 = DVector::from_fn(mesh.state_len(), |i, _| {
        let (d1, d2) = (i % 12 + 1, i / 12 % 9 + 1);
        if geom.mask(1).unwrap().contains(d1, d2) {
            rng.random_range(0.0..1000.0)
        } else {
            0.0
        }
    });

    let adiabatic = PlantOptions { bottom: BottomBoundary::Adiabatic, ..Default::default() };
    let sys = build_system(&mesh, &MaterialParams::steel(), &geom, 3, &adiabatic).unwrap();
    let s0 = x0.sum();
    let mut x = x0.as_slice().to_vec();
    let mut scratch = vec![0.0; x.len()];
    let mut drift: f64 = 0.0;
    let mut negative = false;
    for _ in 0..1000 {
        sys.step_sparse(&mut x, &mut scratch, &[]);
        drift = drift.max((x.iter().sum::<f64>() - s0).abs() / s0);
        negative |= x.iter().any(|&v| v < 0.0);
    }

    let sink = build_system(&mesh, &MaterialParams::steel(), &geom, 1, &PlantOptions::default()).unwrap();
    let mut x = x0.as_slice().to_vec();
    let mut prev_sum = s0;
    let mut prev_max = x.iter().copied().fold(0.0, f64::max);
    let mut dissipative = true;
    for _ in 0..1000 {
        sink.step_sparse(&mut x, &mut scratch, &[]);
        let s: f64 = x.iter().sum();
        let m = x.iter().copied().fold(0.0, f64::max);
        dissipative &= s < prev_sum && m <= prev_max && x.iter().all(|&v| v >= 0.0);
        prev_sum = s;
        prev_max = m;
    }
    check(
        drift <= 1e-12 && !negative && dissipative,
        format!("adiabatic sum drift {drift:.2e}, negatives {negative}, substrate monotone decay {dissipative}"),
    )
}

// ---------------------------------------------------------------- 4

fn c4_analytic_rod() -> Outcome {
    let (n, dx) = (41usize, 50e-6);
    let mat = MaterialParams::steel();
    let dt = dx * dx / (6.0 * mat.diffusivity) * 0.999;
    let mesh = MeshSpec::new(n, 1, 1, dx, 1.0, 1.0, dt).unwrap();
    let geom = PartGeometry::extruded(LayerMask::full(n, 1), 1).unwrap();
    let opts = PlantOptions { bottom: BottomBoundary::Adiabatic, ..Default::default() };
    let sys = build_system(&mesh, &mat, &geom, 1, &opts).unwrap();
    let x0 = 11;
    let mut x = vec![0.0; n];
    x[x0 - 1] = 1.0 / dx;
    let mut scratch = vec![0.0; n];
    let steps = 100;
    for _ in 0..steps {
        sys.step_sparse(&mut x, &mut scratch, &[]);
    }
    // Neumann rod of length n*dx, unit heat released at the centre of
    // element x0.
    let len = n as f64 * dx;
    let t = steps as f64 * dt;
    let xi = (x0 as f64 - 0.5) * dx;
    let series = |pos: f64| {
        let mut s = 1.0 / len;
        for k in 1..4000 {
            let kk = k as f64 * std::f64::consts::PI / len;
            let term = 2.0 / len * (kk * pos).cos() * (kk * xi).cos() * (-mat.diffusivity * kk * kk * t).exp();
            s += term;
            if (-mat.diffusivity * kk * kk * t).exp() < 1e-18 {
                break;
            }
        }
        s
    };
    let exact: Vec<f64> = (1..=n).map(|d| series((d as f64 - 0.5) * dx)).collect();
    let num: f64 = x.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den: f64 = exact.iter().map(|b| b * b).sum::<f64>().sqrt();
    let rel = num / den;
    check(rel < 0.01, format!("relative L2 error {rel:.3e} at t = 100 dt"))
}

// ---------------------------------------------------------------- 5

fn random_partition(rng: &mut ChaCha8Rng, n_t: usize, n_s: usize) -> SampleSets {
    // Every voxel gets one observable sample, the rest are spread at random.
    let mut owner: Vec<usize> = (0..=n_t).map(|_| rng.random_range(0..n_s)).collect();
    let mut order: Vec<usize> = (1..=n_t).collect();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    for (v, &n) in order.iter().take(n_s).enumerate() {
        owner[n] = v;
    }
    let sets: Vec<Vec<usize>> = (0..n_s).map(|v| (0..=n_t).filter(|&n| owner[n] == v).collect()).collect();
    SampleSets::new((1..=n_s).map(VoxelId).collect(), sets).unwrap()
}

fn random_dominant_dl(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut off = 0.0;
        for j in 0..i {
            d[(i, j)] = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.0) };
            off += d[(i, j)];
        }
        d[(i, i)] = off * rng.random_range(1.0001..1.5) + rng.random_range(1e-6..1e-3);
    }
    d
}

fn c5_theorem3_trials() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trials = 200;
    let (mut dominant, mut lemma) = (0, 0);
    for _ in 0..trials {
        let n_t = rng.random_range(2..40);
        let n_s = rng.random_range(1..=n_t.min(12));
        let sets = random_partition(&mut rng, n_t, n_s);
        let dl = random_dominant_dl(&mut rng, n_t);
        let t3 = match check_theorem3(&dl, PMode::Forward, &sets) {
            Ok(t3) => t3,
            Err(e) => return Err(format!("trial failed: {e}")),
        };
        if t3.satisfied && t3.gs_dominant {
            dominant += 1;
        }
        // Lemma: only the zero vector solves G_s z = 0.
        let g = &t3.gs;
        let ratio = homogeneous_residual(g);
        let z = g.clone().lu().solve(&DVector::zeros(g.nrows()));
        if ratio > 1e-14 && z.is_some_and(|z| z.norm() == 0.0) {
            lemma += 1;
        }
    }
    check(
        dominant == trials && lemma == trials,
        format!("G_s dominant in {dominant}/{trials}, lemma check {lemma}/{trials}"),
    )
}

// ---------------------------------------------------------------- 6

fn c6_corner_pulse() -> Outcome {
    // 2 kHz camera, samples 400 um apart along the edge of a steel block.
    let mesh = MeshSpec::new(48, 8, 4, 100e-6, 100e-6, 50e-6, 1e-4).unwrap();
    let seq = corner_pulse_decay(&MaterialParams::steel(), &mesh, 12, 5e-4, 4).unwrap();
    let dl = toeplitz_dl(&seq);
    let fc = fast_cooling_ratio(&dl);
    let n_t = seq.len();
    let mut sets = vec![vec![0, 1]];
    sets.extend((2..=n_t).map(|n| vec![n]));
    let sets = SampleSets::new((1..=sets.len()).map(VoxelId).collect(), sets).unwrap();
    let t3 = check_theorem3(&dl, PMode::Forward, &sets).map_err(|e| e.to_string())?;
    check(
        fc.worst_ratio < 0.5 && t3.satisfied && t3.gs_dominant,
        format!(
            "worst consecutive ratio {:.3e}, theorem satisfied {}, G_s dominant {}",
            fc.worst_ratio, t3.satisfied, t3.gs_dominant
        ),
    )
}

// ---------------------------------------------------------------- 7

fn c7_linear_surrogate() -> Outcome {
    let (n1, n2, window) = (12, 8, 2);
    let mesh = MeshSpec::new(n1, n2, window, 400e-6, 400e-6, 100e-6, 5e-4).unwrap();
    let geometry = PartGeometry::extruded(LayerMask::full(n1, n2), 12).unwrap();
    let plant = PlantConfig {
        mesh,
        material: MaterialParams::steel(),
        geometry,
        options: PlantOptions::default(),
        measurement: MeasurementKind::MaxTemp,
        mask: MaskShape::OneHot,
        reset: ResetOperator::Zero,
    };
    let path = PathConfig {
        hatch: 400e-6,
        speed: 0.8,
        base_angle_deg: 90.0,
        rotation_deg: 0.0,
        voxel_size: 2,
        p_mode: PMode::Backward,
        corner_lines: 2,
    };
    let silc = SilcConfig {
        gamma: 0.2,
        reference: Reference::Value(2000.0),
        saturate: false,
        start_layer: window,
        ..SilcConfig::default()
    };
    let layers = 12;
    let h = run_closed_loop(&plant, &path, &silc, layers).map_err(|e| e.to_string())?;

    let l = silc.start_layer;
    let sys = build_system(&plant.mesh, &plant.material, &plant.geometry, l, &plant.options).unwrap();
    let sched = generate_raster(&plant.geometry, &plant.mesh, l, &path.raster(&plant.mesh, 1, l)).unwrap();
    let vspec = voxel_grid(&plant.geometry, path.voxel_size).unwrap();
    let lifted = lift_layer(&sys, &sched, &plant.measurement, &plant.mask, &vspec, path.p_mode).unwrap();
    let rho = convergence_margin(&lifted.gs, silc.gamma).unwrap();
    let step = DMatrix::identity(lifted.gs.nrows(), lifted.gs.nrows()) - &lifted.gs * silc.gamma;

    let mut worst: f64 = 0.0;
    let mut monotone = true;
    let mut in_bounds = true;
    for k in l..layers {
        let (prev, next) = (&h.layers[k - 1], &h.layers[k]);
        let predicted = &step * &prev.e_s;
        worst = worst.max((&next.e_s - &predicted).norm() / predicted.norm());
        monotone &= next.e_s.norm() <= prev.e_s.norm();
        in_bounds &= next.u_s.iter().all(|&u| (silc.u_min..=silc.u_max).contains(&u));
    }
    let first = h.layers[l - 1].e_s.norm();
    let last = h.layers[layers - 1].e_s.norm();
    check(
        rho < 1.0 && worst <= 1e-9 && monotone && in_bounds,
        format!(
            "rho(I - 0.2 G_s) = {rho:.4}, recursion rel err {worst:.2e}, |e| {first:.3e} -> {last:.3e} monotone {monotone}, powers within bounds {in_bounds}"
        ),
    )
}

// ---------------------------------------------------------------- 8, 9

fn preset(name: &str) -> layerwise_core::RunConfig {
    parse_config(&format!("preset={name}\n"), Path::new(".")).unwrap()
}

fn run(cfg: &layerwise_core::RunConfig, gamma: f64) -> History {
    let silc = SilcConfig { gamma, ..cfg.silc };
    run_closed_loop(&cfg.plant, &cfg.path, &silc, cfg.layers).unwrap()
}

fn c8_prism() -> Outcome {
    let t = Instant::now();
    let cfg = preset("prism");
    let reference = match cfg.silc.reference {
        Reference::Value(v) => v,
        Reference::Auto => return Err("prism preset must fix the reference".into()),
    };
    let open = run(&cfg, 0.0);
    let closed = run(&cfg, cfg.silc.gamma);
    let start = cfg.silc.start_layer;
    let mean_ratio = |h: &History, a: Region, b: Region| {
        let r: Vec<f64> = h.layers[start - 1..]
            .iter()
            .map(|r| r.region_means(a).unwrap().0 / r.region_means(b).unwrap().0)
            .collect();
        r.iter().sum::<f64>() / r.len() as f64
    };
    let edge_over_center = mean_ratio(&open, Region::Edge, Region::Center);
    let last = &closed.layers[start + 10 - 1];
    let mut regions_ok = true;
    let mut parts = Vec::new();
    for region in [Region::Center, Region::Edge, Region::Corner] {
        let (y, u, _) = last.region_means(region).unwrap();
        let rel = y / reference;
        regions_ok &= (rel - 1.0).abs() <= 0.10;
        if region != Region::Center {
            regions_ok &= u < cfg.silc.u_nominal;
        }
        parts.push(format!("{} y/ref {rel:.3} u {u:.1} W", region.name()));
    }
    let r = check(
        edge_over_center >= 1.10 && regions_ok,
        format!("open-loop edge/center {edge_over_center:.3}; layer {}: {}", last.layer, parts.join(", ")),
    );
    r.and_then(|d| within(Duration::from_secs(300), t, d))
}

fn c9_ellipsoid() -> Outcome {
    let t = Instant::now();
    let cfg = preset("ellipsoid");
    let open = run(&cfg, 0.0);
    let closed = run(&cfg, cfg.silc.gamma);
    let edge = |h: &History| {
        let e: Vec<f64> = h.layers[14..60].iter().map(|r| r.mean_abs_edge_error().unwrap()).collect();
        e.iter().sum::<f64>() / e.len() as f64
    };
    let (o, c) = (edge(&open), edge(&closed));
    let r = check(
        c <= 0.5 * o,
        format!("mean |edge error| layers 15-60: open {o:.2}, closed {c:.2}, ratio {:.3}", c / o),
    );
    r.and_then(|d| within(Duration::from_secs(600), t, d))
}

// ---------------------------------------------------------------- 10

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("small.cfg"),
        "preset=prism\nn1=24\nn2=16\nbuild_layers=6\nstart_layer=3\nreference=auto\nvoxel_size=4\ncorner_lines=3\npulse_samples=3\n",
    )
    .unwrap();
    let subcommands: [&[&str]; 5] = [
        &["simulate-openloop", "small.cfg"],
        &["simulate-silc", "small.cfg"],
        &["build-matrices", "small.cfg", "--layer", "4"],
        &["check-controllability", "small.cfg", "--layer", "4"],
        &["pulse-decay", "small.cfg"],
    ];
    let mut compared = 0;
    for args in subcommands {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out_dir = format!("run{rep}-{}", args[0]);
            let res = Command::new(env!("CARGO_BIN_EXE_layerwise"))
                .args(args)
                .args(["--output", &out_dir])
                .current_dir(dir.path())
                .output()
                .unwrap();
            if !res.status.success() {
                return Err(format!("{} failed: {}", args[0], String::from_utf8_lossy(&res.stderr)));
            }
            let mut files: Vec<(String, Vec<u8>)> = vec![("stdout".into(), res.stdout)];
            if let Ok(rd) = std::fs::read_dir(dir.path().join(&out_dir)) {
                for e in rd {
                    let e = e.unwrap();
                    files.push((e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()));
                }
            }
            files.sort();
            outputs.push(files);
        }
        // stdout of the simulate commands names the output directory.
        let strip = |v: &Vec<(String, Vec<u8>)>| -> Vec<(String, Vec<u8>)> {
            v.iter().filter(|(n, _)| n != "stdout" || args[0].starts_with("check") || args[0].starts_with("pulse")).cloned().collect()
        };
        let (a, b) = (strip(&outputs[0]), strip(&outputs[1]));
        if a != b {
            return Err(format!("{} outputs differ between runs", args[0]));
        }
        compared += a.iter().filter(|(n, _)| n.ends_with(".csv")).count();
    }
    check(compared > 0, format!("{compared} CSV files byte-identical across reruns of all 5 subcommands"))
}
