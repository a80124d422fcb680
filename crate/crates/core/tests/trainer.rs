mod common;

use common::*;
use lift3d::guidance::{two_tone_sphere, Guidance, SyntheticOracle};
use lift3d::latentfield::write_checkpoint;
use lift3d::prerender::CameraPose;
use lift3d::trainer::*;
use lift3d::{Mask, Tensor3, Vec3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ramp(c: usize, h: usize, w: usize, phase: f64) -> Tensor3 {
    let mut t = Tensor3::zeros(c, h, w);
    for (i, v) in t.data.iter_mut().enumerate() {
        *v = (i as f64 * 0.61 + phase).sin();
    }
    t
}

#[test]
fn eta_decays_and_foreground_weight_is_constant() {
    let cfg = TrainConfig::default();
    let at_tu = eta(1500.0, &cfg);
    assert!((at_tu - (-1.875f64).exp()).abs() < 1e-15);
    assert!((at_tu - 0.1534).abs() < 5e-5);
    let mut prev = eta(0.0, &cfg);
    for t in (1..5000).step_by(7) {
        let e = eta(t as f64, &cfg);
        assert!(e < prev);
        prev = e;
    }
    let z = ramp(4, 6, 6, 0.0);
    let zp = Tensor3::zeros(4, 6, 6);
    let fg = Mask::new(6, 6, true);
    let a = reliability_loss(&z, &zp, &fg, 0.0, &cfg).unwrap().0;
    let b = reliability_loss(&z, &zp, &fg, 4000.0, &cfg).unwrap().0;
    assert_eq!(a, b);
}

#[test]
fn reliability_examples() {
    let cfg = TrainConfig::default();
    let z = ramp(4, 8, 8, 0.3);
    let (l, g) = reliability_loss(&z, &z, &Mask::new(8, 8, false), 10.0, &cfg).unwrap();
    assert_eq!(l, 0.0);
    assert!(g.data.iter().all(|&v| v == 0.0));

    let zp = ramp(4, 8, 8, 1.1);
    let (l, _) = reliability_loss(&z, &zp, &Mask::new(8, 8, true), 0.0, &cfg).unwrap();
    assert!((l - 2.0 * z.mean_abs_diff(&zp)).abs() < 1e-14);

    let (l, _) = reliability_loss(&z, &zp, &Mask::new(8, 8, false), 1500.0, &cfg).unwrap();
    assert!((l - (-1.875f64).exp() * z.mean_abs_diff(&zp)).abs() < 1e-14);

    assert!(reliability_loss(&z, &ramp(4, 8, 4, 0.0), &Mask::new(8, 8, true), 0.0, &cfg).is_err());
    assert!(reliability_loss(&z, &zp, &Mask::new(4, 4, true), 0.0, &cfg).is_err());
}

#[test]
fn sparsity_examples() {
    let cfg = TrainConfig::default();
    let (l, g) = sparsity_loss(&[0.5; 100], &cfg);
    assert!((l - std::f64::consts::LN_2).abs() < 1e-9);
    assert!(g.iter().all(|&v| v == 0.0));
    let e: f64 = 1e-5;
    let (l, _) = sparsity_loss(&[e; 10], &cfg);
    let exact = -(e * e.ln() + (1.0 - e) * (1.0 - e).ln());
    assert!((l - exact).abs() < 1e-15);
    assert!((l - 1.26e-4).abs() < 1e-6);
}

#[test]
fn patches_cover_the_closed_form_fraction() {
    let expected = 1.0 - (1.0 - (16.0f64 / 128.0).powi(2)).powi(256);
    let mut total = 0.0;
    for seed in 0..32 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = add_patch(&Mask::new(128, 128, false), 256, 16, &mut rng).unwrap();
        let f = m.fraction();
        assert!((f - expected).abs() < 0.02, "seed {seed}: {f}");
        total += f;
    }
    assert!((total / 32.0 - expected).abs() < 0.005);
}

#[test]
fn no_patches_leaves_mask_unchanged() {
    let mut m = Mask::new(32, 32, false);
    m.set(3, 4, true);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(add_patch(&m, 0, 16, &mut rng).unwrap(), m);
    assert!(add_patch(&m, 3, 33, &mut rng).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn patch_audit(seed in any::<u64>(), n in 0usize..40, k in 1usize..12, side in 12usize..40, fill in 0.0f64..0.5) {
        let mut base = Mask::new(side, side, false);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55);
        for v in base.data.iter_mut() {
            *v = rand::Rng::gen::<f64>(&mut rng) < fill;
        }
        let mut a = ChaCha8Rng::seed_from_u64(seed);
        let out = add_patch(&base, n, k, &mut a).unwrap();
        let mut b = ChaCha8Rng::seed_from_u64(seed);
        let placed = patch_positions(side, side, n, &mut b);
        let inside = |y: usize, x: usize| {
            placed.iter().any(|&(py, px)| (y + side - py) % side < k && (x + side - px) % side < k)
        };
        for y in 0..side {
            for x in 0..side {
                prop_assert_eq!(out.get(y, x), base.get(y, x) || inside(y, x));
            }
        }
        let mut c = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(add_patch(&base, n, k, &mut c).unwrap(), out);
    }

    #[test]
    fn refinement_size_never_shrinks(total in 50usize..6000, f in 0.02f64..0.5) {
        let cfg = TrainConfig { f_ref: f, ..TrainConfig::default() }.with_total(total);
        let start = refinement_start(&cfg);
        let mut prev = 0;
        for i in start..=total {
            let (h, w) = dimension_refine(i, &cfg).unwrap();
            prop_assert_eq!(h, w);
            prop_assert!(h >= prev && h >= cfg.latent_side && h <= 2 * cfg.latent_side);
            prev = h;
        }
        prop_assert_eq!(prev, 2 * cfg.latent_side);
        if start > 0 {
            prop_assert!(dimension_refine(start - 1, &cfg).is_err());
        }
    }

    #[test]
    fn sparsity_gradient_matches_finite_differences(alpha in proptest::collection::vec(0.001f64..0.999, 1..20)) {
        let cfg = TrainConfig::default();
        let (_, g) = sparsity_loss(&alpha, &cfg);
        let h = 1e-7;
        for i in 0..alpha.len() {
            let mut a = alpha.clone();
            a[i] += h;
            let mut b = alpha.clone();
            b[i] -= h;
            let fd = (sparsity_loss(&a, &cfg).0 - sparsity_loss(&b, &cfg).0) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() < 1e-6 * (1.0 + g[i].abs()));
            prop_assert!((g[i] > 0.0) == (alpha[i] < 0.5) || alpha[i] == 0.5);
        }
    }
}

#[test]
fn refinement_schedule_examples() {
    let cfg = TrainConfig::default();
    assert_eq!(dimension_refine(4500, &cfg).unwrap(), (64, 64));
    assert_eq!(dimension_refine(4750, &cfg).unwrap(), (96, 96));
    assert_eq!(dimension_refine(5000, &cfg).unwrap(), (128, 128));
    assert!(dimension_refine(4000, &cfg).is_err());
}

#[test]
fn injection_converges_on_a_static_latent() {
    let cfg = TrainConfig::default();
    let oracle = SyntheticOracle::new(two_tone_sphere(Vec3::zeros(), 0.8));
    let pose = CameraPose::new(40.0, 15.0, 3.0);
    let target = oracle.target_latent(&pose, 16);
    let regen = Mask::new(16, 16, true);
    let mut z = Tensor3::zeros(4, 16, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut steps = 0;
    while z.mean_abs_diff(&target) >= 0.05 {
        let g = isds_inject(&z, &regen, "a ball", &pose, &oracle, &cfg, &mut rng).unwrap();
        for (v, d) in z.data.iter_mut().zip(&g.data) {
            *v -= 0.05 * d;
        }
        steps += 1;
        assert!(steps <= 300, "no convergence after 300 steps");
    }

    let off = TrainConfig { lambda_isds: 0.0, ..cfg };
    let g = isds_inject(&z, &regen, "a ball", &pose, &oracle, &off, &mut rng).unwrap();
    assert!(g.data.iter().all(|&v| v == 0.0));
}

#[test]
fn injection_respects_the_keep_region() {
    let cfg = TrainConfig::default();
    let oracle = SyntheticOracle::new(two_tone_sphere(Vec3::zeros(), 0.8));
    let pose = CameraPose::default();
    let mut regen = Mask::new(8, 8, false);
    for x in 0..8 {
        regen.set(2, x, true);
    }
    let z = ramp(4, 8, 8, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = isds_inject(&z, &regen, "a ball", &pose, &oracle, &cfg, &mut rng).unwrap();
    let target = oracle.target_latent(&pose, 8);
    for c in 0..4 {
        for y in 0..8 {
            for x in 0..8 {
                let want = if y == 2 { z.get(c, y, x) - target.get(c, y, x) } else { 0.0 };
                assert!((g.get(c, y, x) - want).abs() < 1e-12);
            }
        }
    }
}

fn tiny_trainer<'a>(cfg: &TrainConfig, guidance: &'a dyn Guidance) -> Trainer<'a> {
    let (rgb, depth, _) = prepare_reference(&RunInputs::text("ball"), cfg, guidance).unwrap();
    let scaffold = build_scaffold(&rgb, &depth, cfg).unwrap();
    let codec = codec_for(guidance);
    let bank = build_bank(&scaffold.mesh, cfg, codec.as_ref()).unwrap();
    let bg = background_latent(codec.as_ref()).unwrap();
    Trainer::new(cfg.clone(), bank, guidance, "ball", bg).unwrap()
}

fn tiny_oracle(cfg: &TrainConfig) -> SyntheticOracle {
    calibrate_oracle(&SyntheticOracle::new(two_tone_sphere(Vec3::zeros(), 0.6)), cfg).unwrap()
}

#[test]
fn reliability_gate_and_term_ablation() {
    let cfg = tiny_config(11);
    let oracle = tiny_oracle(&cfg);
    let variants = [
        cfg.clone(),
        TrainConfig { lambda_sp: 0.0, ..cfg.clone() },
        TrainConfig { lambda_isds: 0.0, ..cfg.clone() },
    ];
    let mut trainers: Vec<Trainer<'_>> = variants.iter().map(|c| tiny_trainer(c, &oracle)).collect();
    let (mut saw_ib, mut saw_ob) = (false, false);
    for i in 1..=cfg.t_total {
        let refine = i > refinement_start(&cfg);
        let out: Vec<_> = trainers.iter_mut().map(|t| t.compute(i, refine).unwrap()).collect();
        let (b, full) = &out[0];
        for (other, _) in &out[1..] {
            assert_eq!((other.theta, other.phi, other.side), (b.theta, b.phi, b.side));
        }
        if b.is_ib && !refine {
            saw_ib = true;
            assert!(b.l_r > 0.0);
        } else {
            assert_eq!(b.l_r, 0.0);
            assert!(full.reliability.is_zero());
            assert_eq!(full.total(), {
                let mut g = full.isds.clone();
                g.add_assign(&full.sparsity);
                g
            });
        }
        saw_ob |= !b.is_ib;

        let no_sp = &out[1].1;
        assert_eq!(no_sp.isds, full.isds);
        assert_eq!(no_sp.reliability, full.reliability);
        assert!(no_sp.sparsity.is_zero());
        let no_isds = &out[2].1;
        assert!(no_isds.isds.is_zero());
        assert_eq!(no_isds.reliability, full.reliability);
        assert_eq!(no_isds.sparsity, full.sparsity);

        let mut rest = full.isds.clone();
        rest.add_assign(&full.reliability);
        assert_eq!(no_sp.total(), rest);

        for t in trainers.iter_mut() {
            t.apply(full);
        }
    }
    assert!(saw_ib && saw_ob);
}

fn checkpoint_bytes(field: &lift3d::latentfield::LatentField, tag: &str) -> Vec<u8> {
    let path = std::env::temp_dir().join(format!("lift3d-trainer-{tag}-{}.ckpt", std::process::id()));
    write_checkpoint(&path, field, 0).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::remove_file(&path).ok();
    bytes
}

#[test]
fn runs_are_reproducible_and_retries_are_transparent() {
    let cfg = tiny_config(5);
    let oracle = tiny_oracle(&cfg);
    let plain = run(&cfg, &RunInputs::text("ball"), &oracle, &mut |_| {}).unwrap();
    let again = run(&cfg, &RunInputs::text("ball"), &oracle, &mut |_| {}).unwrap();
    assert_eq!(checkpoint_bytes(&plain.field, "a"), checkpoint_bytes(&again.field, "b"));
    assert_eq!(plain.report.records, again.report.records);

    let flaky = Recording::new(&oracle, &[3, 17]);
    let retried = run(&cfg, &RunInputs::text("ball"), &flaky, &mut |_| {}).unwrap();
    assert_eq!(checkpoint_bytes(&plain.field, "c"), checkpoint_bytes(&retried.field, "d"));

    let broken = Recording::new(&oracle, &[6, 7]);
    let err = match run(&cfg, &RunInputs::text("ball"), &broken, &mut |_| {}) {
        Err(e) => e,
        Ok(_) => panic!("two consecutive failures must abort"),
    };
    assert!(matches!(err.stage, Stage::Training { .. }));
    assert!(err.is_connectivity());
    assert!(err.to_string().contains("training"));
}

#[test]
fn text_path_requests_reference_before_geometry() {
    let cfg = tiny_config(3);
    let oracle = tiny_oracle(&cfg);
    let rec = Recording::new(&oracle, &[]);
    let mut seen = 0;
    let out = run(&cfg, &RunInputs::text("ball"), &rec, &mut |_| seen += 1).unwrap();
    let kinds = rec.kinds();
    assert_eq!(&kinds[..2], &["generate", "depth"]);
    assert!(kinds[2..].iter().all(|k| *k == "residual"));
    assert!(out.report.reference_generated);
    assert_eq!(seen, cfg.t_total);
    assert_eq!(out.frames.len(), cfg.orbit_views);
    assert_eq!(out.report.frame_count, cfg.orbit_views);
    for f in &out.frames {
        assert_eq!(f.dims(), [3, 8 * cfg.latent_side, 8 * cfg.latent_side]);
    }

    let records = &out.report.records;
    let start = refinement_start(&cfg);
    for w in records.windows(2).filter(|w| w[0].iteration > start) {
        assert!(w[1].side >= w[0].side);
    }
    assert!(records.iter().all(|r| r.is_ib || r.l_r == 0.0));
    assert_eq!(records.last().unwrap().side, 2 * cfg.latent_side);
}

#[test]
fn image_path_skips_generation() {
    let cfg = tiny_config(3);
    let oracle = tiny_oracle(&cfg);
    let (rgb, depth, _) = prepare_reference(&RunInputs::text("ball"), &cfg, &oracle).unwrap();
    let rec = Recording::new(&oracle, &[]);
    let inputs = RunInputs {
        prompt: "ball".into(),
        image: Some(rgb.clone()),
        depth: Some(depth),
    };
    let out = run(&cfg, &inputs, &rec, &mut |_| {}).unwrap();
    assert!(rec.kinds().iter().all(|k| *k == "residual"));
    assert!(!out.report.reference_generated);

    let rec = Recording::new(&oracle, &[]);
    let inputs = RunInputs {
        prompt: "ball".into(),
        image: Some(rgb),
        depth: None,
    };
    run(&cfg, &inputs, &rec, &mut |_| {}).unwrap();
    assert_eq!(rec.kinds()[0], "depth");
    assert!(!rec.kinds().contains(&"generate"));
}

#[test]
fn stage_errors_are_tagged() {
    let cfg = tiny_config(3);
    let oracle = tiny_oracle(&cfg);
    let inputs = RunInputs {
        prompt: "ball".into(),
        image: Some(Tensor3::filled(3, 64, 64, 1.0)),
        depth: Some(vec![1.0; 64 * 64]),
    };
    let err = run(&cfg, &inputs, &oracle, &mut |_| {}).err().expect("blank reference");
    assert_eq!(err.stage, Stage::Scaffold);
    assert!(!err.is_connectivity());

    let bad = TrainConfig { f_ref: 0.0, ..cfg };
    assert!(run(&bad, &RunInputs::text("ball"), &oracle, &mut |_| {}).is_err());
}
