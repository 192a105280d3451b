//! Acceptance suite: every release criterion as one test, each printing a
//! single PASS/FAIL line (visible with `cargo test -- --nocapture`).
//!
//! Tolerances are pinned in the assertions; the whole suite targets well
//! under two minutes on a commodity 4-core machine.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rbp_core::augment::{augment_a1, augment_linear, AugmentParams, AugmentRanges};
use rbp_core::bbox::{decode_pose, encode_dvpb, hypothesize_field, valid_faces};
use rbp_core::config::PriorMode;
use rbp_core::geometry::{camera_to_nocs, umeyama};
use rbp_core::losses::{
    check_consistency_gradients, check_sprv_loss_gradients, consistency_loss, sigma_stationary_point,
    sprv_loss, sprv_loss_with_grad, FaceSigmas, LossWeights, Reduction,
};
use rbp_core::metrics::{axis_aligned_iou, box_iou_3d, rotation_error, SweepGrids};
use rbp_core::pipeline::{run_pipeline, AugmentMode, CorpusSpec, PipelineSpec};
use rbp_core::synth::{generate_instance, random_rotation, InstanceParams};
use rbp_core::types::{Category, OrientedBox, Pose9D, SymmetryKind, SymmetryTag};

fn criterion(tag: &str, body: impl FnOnce() + std::panic::UnwindSafe) {
    match std::panic::catch_unwind(body) {
        Ok(()) => println!("ACCEPTANCE {tag}: PASS"),
        Err(cause) => {
            println!("ACCEPTANCE {tag}: FAIL");
            std::panic::resume_unwind(cause);
        }
    }
}

fn no_sym() -> SymmetryTag {
    SymmetryTag::new(Category::Camera, SymmetryKind::None)
}

fn exact_pipeline_spec() -> PipelineSpec {
    PipelineSpec {
        prior: PriorMode::Instance,
        rotation_noise_deg: 0.0,
        dvpb_noise_sigma: 0.0,
        augment: AugmentMode::None,
        augment_ranges: AugmentRanges::default(),
        weights: LossWeights::default(),
        iou_resolution: 50,
        sweeps: SweepGrids::default(),
        dump_fields: false,
    }
}

#[test]
fn acceptance_1_umeyama_exactness() {
    criterion("1 umeyama-exactness", || {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let start = Instant::now();
        for trial in 0..1000 {
            let n = rng.gen_range(4..60);
            let source: Vec<Vector3<f64>> = (0..n)
                .map(|_| {
                    Vector3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    )
                })
                .collect();
            let scale = rng.gen_range(0.5..3.0);
            let rot = random_rotation(&mut rng);
            let t = Vector3::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
            );
            let target: Vec<Vector3<f64>> =
                source.iter().map(|p| scale * (rot * p) + t).collect();
            let sim = umeyama(&source, &target).expect("non-degenerate input");
            assert!((sim.scale - scale).abs() < 1e-9, "trial {trial}: scale");
            assert!((sim.rotation - rot).abs().max() < 1e-9, "trial {trial}: rotation");
            assert!((sim.translation - t).norm() < 1e-9, "trial {trial}: translation");
        }
        let elapsed = start.elapsed();
        assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, budget 5 s");
    });
}

#[test]
fn acceptance_2_dvpb_roundtrip() {
    criterion("2 dvpb-roundtrip", || {
        let sym = no_sym();
        let params = InstanceParams::default(); // 1024 points per instance
        let categories = [Category::Camera, Category::Laptop, Category::Mug];
        let start = Instant::now();
        for trial in 0..500u64 {
            let category = categories[(trial % 3) as usize];
            let mut inst = generate_instance(category, &params, 3000 + trial).unwrap();
            inst.sym = sym;
            let field = encode_dvpb(&inst.observed, &inst.pose, &sym);
            let decoded = decode_pose(&field, &inst.observed, &sym).unwrap();

            let q = decoded.rotation().transpose() * inst.pose.rotation();
            let angle = (((q.trace() - 1.0) / 2.0).clamp(-1.0, 1.0)).acos();
            assert!(angle < 1e-5, "trial {trial}: rotation error {angle} rad");
            let dt = (decoded.translation() - inst.pose.translation()).norm();
            assert!(dt < 1e-7, "trial {trial}: translation error {dt} m");
            let ds = (decoded.size() - inst.pose.size()).norm();
            assert!(ds < 1e-7, "trial {trial}: size error {ds} m");
        }
        let elapsed = start.elapsed();
        assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}, budget 10 s");
    });
}

#[test]
fn acceptance_3_hypothesis_consistency() {
    criterion("3 hypothesis-consistency", || {
        let params = InstanceParams { n_points: 256, m_points: 256, ..Default::default() };
        for (trial, category) in Category::ALL.iter().cycle().take(60).enumerate() {
            let inst = generate_instance(*category, &params, 4000 + trial as u64).unwrap();
            let gt = encode_dvpb(&inst.observed, &inst.pose, &inst.sym);
            let coords: Vec<_> = inst
                .observed
                .iter()
                .map(|p| camera_to_nocs(p, &inst.pose))
                .collect();
            let model_size = inst.pose.size() / inst.pose.diagonal();
            let hyp = hypothesize_field(
                &coords,
                &model_size,
                inst.pose.diagonal(),
                inst.pose.rotation(),
                &inst.sym,
            );
            for i in 0..inst.observed.len() {
                for face in valid_faces(&inst.sym).faces() {
                    let d = (gt.vector(i, face).unwrap() - hyp.vector(i, face).unwrap()).norm();
                    assert!(d < 1e-12, "{category} entry ({i}, {face:?}) differs by {d}");
                }
            }
        }
    });
}

#[test]
fn acceptance_4_sprv_closure_and_magnitude() {
    criterion("4 sprv-closure", || {
        // Exact inputs, prior = instance: residuals vanish.
        let exact_corpus = CorpusSpec {
            seed: 41,
            instances_per_category: 5,
            categories: Category::ALL.to_vec(),
            params: InstanceParams { n_points: 256, m_points: 256, ..Default::default() },
            symmetry: BTreeMap::new(),
        };
        let report = run_pipeline(&exact_corpus, &exact_pipeline_spec(), None).unwrap();
        assert!(
            report.stats.mean_sprv_norm < 1e-9,
            "exact-prior residual norm {}",
            report.stats.mean_sprv_norm
        );

        // +-20% varied corpus with the category-mean prior: residuals stay
        // well below the raw displacement magnitudes.
        let varied_corpus = CorpusSpec {
            seed: 42,
            instances_per_category: 50,
            categories: Category::ALL.to_vec(),
            params: InstanceParams {
                n_points: 256,
                m_points: 256,
                axis_scale: [0.8, 1.2],
                ..Default::default()
            },
            symmetry: BTreeMap::new(),
        };
        let spec = PipelineSpec { prior: PriorMode::CategoryMean, ..exact_pipeline_spec() };
        let report = run_pipeline(&varied_corpus, &spec, None).unwrap();
        assert_eq!(report.stats.instances, 300);
        assert!(
            report.stats.mean_sprv_norm < report.stats.mean_dvpb_norm,
            "residual norm {} not below displacement norm {}",
            report.stats.mean_sprv_norm,
            report.stats.mean_dvpb_norm
        );
    });
}

#[test]
fn acceptance_5_loss_correctness() {
    criterion("5 loss-correctness", || {
        // Hand-evaluated fixture: one entry with |pred - gt| = 0.1 at
        // sigma = 0.5, regularizer off.
        let mut vectors = vec![Vector3::zeros(); 6];
        vectors[0] = Vector3::new(0.1, 0.0, 0.0);
        let pred = rbp_core::bbox::SprvField::from_residuals(
            1,
            rbp_core::bbox::FaceMask::all(),
            vectors,
        )
        .unwrap();
        let gt = rbp_core::bbox::SprvField::from_residuals(
            1,
            rbp_core::bbox::FaceMask::all(),
            vec![Vector3::zeros(); 6],
        )
        .unwrap();
        let mut sigma = FaceSigmas::uniform(1.0);
        sigma.0[0] = 0.5;
        let loss = sprv_loss(&pred, &gt, &sigma, &sigma, 0.0, Reduction::Sum).unwrap();
        let expected = std::f64::consts::SQRT_2 * 0.1 / 0.5 + 0.5f64.ln();
        assert!((loss - expected).abs() < 1e-9, "fixture loss {loss} vs {expected}");

        // Zero-residual, unit-sigma fixture evaluates to exactly zero.
        let zero = sprv_loss(&gt, &gt, &FaceSigmas::uniform(1.0), &FaceSigmas::uniform(1.0), 0.01, Reduction::Sum)
            .unwrap();
        assert!(zero.abs() < 1e-9, "zero fixture {zero}");

        // Analytic vs central-difference gradients away from l1 kinks.
        let mut rng = ChaCha8Rng::seed_from_u64(105);
        for reduction in [Reduction::Sum, Reduction::Mean] {
            let draw = |rng: &mut ChaCha8Rng| {
                let v: Vec<Vector3<f64>> = (0..24)
                    .map(|_| {
                        Vector3::new(
                            rng.gen_range(0.05..0.6) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
                            rng.gen_range(0.05..0.6) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
                            rng.gen_range(0.05..0.6) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
                        )
                    })
                    .collect();
                rbp_core::bbox::SprvField::from_residuals(4, rbp_core::bbox::FaceMask::all(), v)
                    .unwrap()
            };
            let pred = draw(&mut rng);
            let gt = draw(&mut rng);
            let sd = FaceSigmas([0.4, 0.7, 1.1, 0.9, 1.4, 0.6]);
            let sr = FaceSigmas([1.2, 0.5, 0.8, 1.0, 0.7, 1.3]);
            let err =
                check_sprv_loss_gradients(&pred, &gt, &sd, &sr, 0.01, reduction, 1e-6).unwrap();
            assert!(err < 1e-5, "sprv gradient rel err {err}");

            let a = pred.apply_to(&encode_dvpb(
                &vec![Vector3::zeros(); 4],
                &Pose9D::from_size(Vector3::new(1.0, 1.0, 1.0)).unwrap(),
                &no_sym(),
            ))
            .unwrap();
            let b = gt
                .apply_to(&encode_dvpb(
                    &vec![Vector3::new(0.2, 0.0, 0.0); 4],
                    &Pose9D::from_size(Vector3::new(1.0, 1.0, 1.0)).unwrap(),
                    &no_sym(),
                ))
                .unwrap();
            let err = check_consistency_gradients(&a, &b, reduction, 1e-6).unwrap();
            assert!(err < 1e-5, "consistency gradient rel err {err}");
        }

        // Stationarity: sigma* = sqrt(2) a, verified numerically.
        let a = 0.27;
        let mut vectors = vec![Vector3::zeros(); 6];
        vectors[0] = Vector3::new(a, 0.0, 0.0);
        let pred = rbp_core::bbox::SprvField::from_residuals(
            1,
            rbp_core::bbox::FaceMask::all(),
            vectors,
        )
        .unwrap();
        let eval = |sigma: f64| {
            let mut s = FaceSigmas::uniform(1.0);
            s.0[0] = sigma;
            sprv_loss(&pred, &gt, &s, &s, 0.0, Reduction::Sum).unwrap()
        };
        let (mut lo, mut hi) = (1e-3, 10.0);
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if eval(m1) < eval(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let sigma_star = 0.5 * (lo + hi);
        assert!(
            (sigma_star - sigma_stationary_point(a)).abs() < 1e-6,
            "numeric minimum {sigma_star} vs analytic {}",
            sigma_stationary_point(a)
        );
        let mut s = FaceSigmas::uniform(1.0);
        s.0[0] = sigma_stationary_point(a);
        let (_, grad) = sprv_loss_with_grad(&pred, &gt, &s, &s, 0.0, Reduction::Sum).unwrap();
        assert!(grad.d_sigma_data[0].abs() < 1e-6, "sigma gradient {}", grad.d_sigma_data[0]);
    });
}

#[test]
fn acceptance_6_consistency_closure_and_monotonicity() {
    criterion("6 consistency-closure", || {
        // Exact pipeline: the consistency term vanishes corpus-wide.
        let corpus = CorpusSpec {
            seed: 61,
            instances_per_category: 5,
            categories: Category::ALL.to_vec(),
            params: InstanceParams { n_points: 256, m_points: 256, ..Default::default() },
            symmetry: BTreeMap::new(),
        };
        let report = run_pipeline(&corpus, &exact_pipeline_spec(), None).unwrap();
        assert!(
            report.stats.max_consistency < 1e-9,
            "max consistency {}",
            report.stats.max_consistency
        );

        // A known pose perturbation produces a strictly positive loss that
        // grows monotonically with the perturbation magnitude.
        let sym = no_sym();
        let inst = generate_instance(Category::Camera, &InstanceParams::default(), 62).unwrap();
        let gt = encode_dvpb(&inst.observed, &inst.pose, &sym);
        let axis = nalgebra::Unit::new_normalize(Vector3::new(0.3, -0.8, 0.5));
        let offset = Vector3::new(0.6, 0.3, -0.7).normalize();
        let mut last = 0.0;
        for step in 1..=10 {
            let angle = (0.5 * step as f64).to_radians();
            let shift = 0.002 * step as f64;
            let perturbed = Pose9D::new(
                *Rotation3::from_axis_angle(&axis, angle).matrix() * inst.pose.rotation(),
                inst.pose.translation() + shift * offset,
                *inst.pose.size(),
            )
            .unwrap();
            let from_pose = encode_dvpb(&inst.observed, &perturbed, &sym);
            let loss = consistency_loss(
                &from_pose.to_vector_field(),
                &gt.to_vector_field(),
                Reduction::Mean,
            )
            .unwrap();
            assert!(loss > 0.0, "step {step}: loss not positive");
            assert!(loss > last, "step {step}: loss {loss} did not grow past {last}");
            last = loss;
        }
    });
}

#[test]
fn acceptance_7_augmentation() {
    criterion("7 augmentation", || {
        let ranges = AugmentRanges::default();
        // Profile endpoints are exact for every sampled parameter set.
        for seed in 0..1000 {
            let p = AugmentParams::sample(Category::Bottle, &ranges, seed);
            assert_eq!(p.gamma_min, rbp_core::augment::scale_profile(0.0, &p), "seed {seed}");
            assert_eq!(p.gamma_max, rbp_core::augment::scale_profile(0.5, &p), "seed {seed}");
            assert_eq!(p.gamma_max, rbp_core::augment::scale_profile(-0.5, &p), "seed {seed}");
        }

        // 1000-seed sweep keeps every output extent within declared bounds.
        let cloud = rbp_core::synth::canonical_shape(
            Category::Bottle,
            512,
            rbp_core::synth::DEFAULT_LAPTOP_OPENING_DEG,
        )
        .unwrap()
        .points;
        let extent = |pts: &[Vector3<f64>], c: usize| {
            let lo = pts.iter().map(|p| p[c]).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(|p| p[c]).fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        };
        let base: Vec<f64> = (0..3).map(|c| extent(&cloud, c)).collect();
        for seed in 0..1000 {
            let p = AugmentParams::sample(Category::Bottle, &ranges, seed);
            let out = augment_a1(&cloud, &p);
            for c in 0..3 {
                let ratio = extent(&out, c) / base[c];
                assert!(
                    (0.7 - 1e-12..=1.3 + 1e-12).contains(&ratio),
                    "seed {seed} axis {c}: ratio {ratio}"
                );
            }
        }

        // gamma_min = gamma_max collapses the parabola: bitwise equal to the
        // linear baseline.
        for seed in 0..200 {
            let mut p = AugmentParams::sample(Category::Bowl, &ranges, seed);
            p.gamma_min = p.gamma_max;
            let nonlinear = augment_a1(&cloud, &p);
            let linear = augment_linear(&cloud, &Vector3::new(p.gamma, p.gamma_max, p.gamma));
            assert_eq!(nonlinear, linear, "seed {seed}");
        }
    });
}

#[test]
fn acceptance_8_metrics() {
    criterion("8 metrics", || {
        // Sampled oriented IoU vs the analytic axis-aligned oracle on 100
        // random overlapping pairs at the default 50^3 resolution. The pair
        // is rotated by a common rigid transform so the sampled path runs on
        // oriented boxes while the oracle uses the aligned geometry.
        let mut rng = ChaCha8Rng::seed_from_u64(108);
        for trial in 0..100 {
            let make = |rng: &mut ChaCha8Rng, offset: f64| {
                OrientedBox::new(
                    Vector3::new(
                        rng.gen_range(-0.3..0.3) + offset,
                        rng.gen_range(-0.3..0.3),
                        rng.gen_range(-0.3..0.3),
                    ),
                    Matrix3::identity(),
                    Vector3::new(
                        rng.gen_range(0.4..1.5),
                        rng.gen_range(0.4..1.5),
                        rng.gen_range(0.4..1.5),
                    ),
                )
            };
            let a = make(&mut rng, 0.0);
            let b = make(&mut rng, 0.1);
            let exact = axis_aligned_iou(&a, &b).unwrap();
            let rot = random_rotation(&mut rng);
            let shift = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let spin =
                |x: &OrientedBox| OrientedBox::new(rot * x.center + shift, rot * x.rotation, x.extents);
            let sampled = box_iou_3d(&spin(&a), &spin(&b), 50);
            assert!(
                (sampled - exact).abs() < 0.01,
                "trial {trial}: sampled {sampled} vs exact {exact}"
            );
        }

        // Axial-y rotation error vanishes on the full symmetry orbit.
        let axial = SymmetryTag::new(Category::Can, SymmetryKind::AxialY);
        let r = random_rotation(&mut rng);
        for k in 0..36 {
            let theta = k as f64 * 10f64.to_radians();
            let spun = r * *Rotation3::from_axis_angle(&Vector3::y_axis(), theta).matrix();
            let err = rotation_error(&r, &spun, &axial);
            assert!(err < 1e-9, "angle {k}: error {err} deg");
        }

        // The noiseless decoded corpus scores a perfect 5 degree / 2 cm.
        let corpus = CorpusSpec {
            seed: 81,
            instances_per_category: 10,
            categories: Category::ALL.to_vec(),
            params: InstanceParams { n_points: 256, m_points: 256, ..Default::default() },
            symmetry: BTreeMap::new(),
        };
        let report = run_pipeline(&corpus, &exact_pipeline_spec(), None).unwrap();
        assert_eq!(report.metrics.mean.deg5_cm2, 1.0, "noiseless decode precision");
    });
}

#[test]
fn acceptance_9_cli_determinism() {
    criterion("9 cli-determinism", || {
        let tmp = tempfile::tempdir().unwrap();
        let config = tmp.path().join("config.toml");
        std::fs::write(
            &config,
            "[corpus]\nseed = 9\ninstances_per_category = 1\nn_points = 64\nm_points = 64\n",
        )
        .unwrap();
        let run = |args: &[&str]| {
            let out = std::process::Command::new(env!("CARGO_BIN_EXE_rbp"))
                .args(args)
                .output()
                .expect("binary runs");
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        };
        for side in ["a", "b"] {
            let corpus = tmp.path().join(side).join("corpus");
            let fields = tmp.path().join(side).join("fields");
            run(&[
                "gen",
                "--out",
                corpus.to_str().unwrap(),
                "--config",
                config.to_str().unwrap(),
            ]);
            run(&[
                "encode",
                "--corpus",
                corpus.to_str().unwrap(),
                "--out",
                fields.to_str().unwrap(),
                "--config",
                config.to_str().unwrap(),
            ]);
        }
        let snapshot = |side: &str| {
            let root = tmp.path().join(side);
            let mut files = Vec::new();
            let mut stack = vec![root.clone()];
            while let Some(dir) = stack.pop() {
                for entry in std::fs::read_dir(&dir).unwrap() {
                    let path = entry.unwrap().path();
                    if path.is_dir() {
                        stack.push(path);
                    } else {
                        files.push((
                            path.strip_prefix(&root).unwrap().to_path_buf(),
                            std::fs::read(&path).unwrap(),
                        ));
                    }
                }
            }
            files.sort();
            files
        };
        let a = snapshot("a");
        let b = snapshot("b");
        assert!(!a.is_empty());
        assert_eq!(a, b, "repeated runs are not byte-identical");
    });
}
