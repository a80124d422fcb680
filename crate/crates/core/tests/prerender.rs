use lift3d::geometry::{uv_sphere, CameraIntrinsics, ScaffoldMesh};
use lift3d::prerender::{
    great_circle_deg, rasterize, sample_ib_poses, stub_decode, stub_encode, BankOptions, CameraPose,
    StubCodec, ViewBank,
};
use lift3d::viewsampler::AngleBox;
use lift3d::Vec3;
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn two_tone_sphere() -> ScaffoldMesh {
    uv_sphere(Vec3::zeros(), 1.0, 64, 128, |p| {
        if p.z < 0.0 {
            [0.9, 0.3, 0.2]
        } else {
            [0.2, 0.4, 0.9]
        }
    })
}

#[test]
fn sphere_silhouette_matches_perspective_disc() {
    let mesh = two_tone_sphere();
    let out = rasterize(&mesh, &CameraPose::new(90.0, 0.0, 3.0), &CameraIntrinsics::default_512(), 512, 512);
    let radius = 640.0 / (3.0f64.powi(2) - 1.0).sqrt();
    let analytic = std::f64::consts::PI * radius * radius;
    let area = out.mask.count() as f64;
    assert!((area / analytic - 1.0).abs() < 0.03, "area {area} vs {analytic}");

    let center_depth = out.depth[256 * 512 + 256];
    assert!((center_depth - 2.0).abs() < 0.02, "center depth {center_depth}");
    // Front hemisphere faces the reference camera.
    assert!((out.rgb.get(0, 256, 256) - 0.9).abs() < 1e-9);

    for (d, m) in out.depth.iter().zip(&out.mask.data) {
        assert_eq!(d.is_finite(), *m);
    }
}

#[test]
fn rasterization_is_bit_identical() {
    let mesh = two_tone_sphere();
    let pose = CameraPose::new(75.0, 12.0, 3.0);
    let k = CameraIntrinsics::default_512().for_resolution(512, 128);
    assert_eq!(rasterize(&mesh, &pose, &k, 128, 128), rasterize(&mesh, &pose, &k, 128, 128));
}

#[test]
fn pose_looking_away_renders_nothing() {
    let mesh = uv_sphere(Vec3::new(0.0, 0.0, -6.0), 1.0, 16, 32, |_| [0.1; 3]);
    let out = rasterize(&mesh, &CameraPose::new(90.0, 0.0, 3.0), &CameraIntrinsics::default_512(), 64, 64);
    assert_eq!(out.mask.count(), 0);
    assert!(out.rgb.data.iter().all(|&v| v == 1.0));
}

#[test]
fn stub_codec_on_rendered_view() {
    let mesh = two_tone_sphere();
    let k = CameraIntrinsics::default_512().for_resolution(512, 128);
    let out = rasterize(&mesh, &CameraPose::new(90.0, 0.0, 3.0), &k, 128, 128);
    let z = stub_encode(&out.rgb, &out.mask).unwrap();
    assert_eq!(z.dims(), [4, 16, 16]);
    // Corners are background: white and empty.
    for c in 0..3 {
        assert_eq!(z.get(c, 0, 0), 1.0);
    }
    assert_eq!(z.get(3, 0, 0), -1.0);
    assert_eq!(z.get(3, 8, 8), 1.0);
    let back = stub_decode(&z).unwrap();
    assert_eq!(back.dims(), [3, 128, 128]);
}

#[test]
fn sampled_poses_stay_in_box_and_are_uniform() {
    let bounds = AngleBox::in_boundary_default();
    let poses = sample_ib_poses(64, &bounds, 1, 3.0);
    assert_eq!(poses.len(), 64);
    assert!(poses.iter().all(|p| bounds.contains(p.theta, p.phi)));

    let n = 10_000;
    let poses = sample_ib_poses(n, &bounds, 99, 3.0);
    let mut bins = [0usize; 36];
    for p in &poses {
        let i = (((p.theta - 60.0) / 10.0) as usize).min(5);
        let j = (((p.phi + 30.0) / 10.0) as usize).min(5);
        bins[i * 6 + j] += 1;
    }
    let expected = n as f64 / 36.0;
    let chi2: f64 = bins.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    let p_value = 1.0 - ChiSquared::new(35.0).unwrap().cdf(chi2);
    assert!(p_value > 0.01, "chi2 {chi2} p {p_value}");

    assert_eq!(sample_ib_poses(8, &bounds, 5, 3.0), sample_ib_poses(8, &bounds, 5, 3.0));
}

fn small_bank(n: usize) -> ViewBank {
    let opts = BankOptions {
        latent_side: 8,
        ..Default::default()
    };
    let bounds = AngleBox::in_boundary_default();
    let poses = sample_ib_poses(n, &bounds, 4, 3.0);
    ViewBank::build(&two_tone_sphere(), &poses, bounds, &opts, &StubCodec).unwrap()
}

#[test]
fn bank_levels_and_self_lookup() {
    let bank = small_bank(6);
    for (i, v) in bank.views.iter().enumerate() {
        assert_eq!(bank.find_closest_index(v.pose.theta, v.pose.phi).unwrap(), i);
        assert_eq!(v.levels.len(), 2);
        assert_eq!(v.z_p().dims(), [4, 8, 8]);
        assert_eq!(v.levels[1].z.dims(), [4, 16, 16]);
        assert_eq!(v.rgb.dimensions(), (64, 64));
        let (z12, m12) = v.latent_at(12);
        assert_eq!(z12.dims(), [4, 12, 12]);
        assert_eq!((m12.height, m12.width), (12, 12));
        assert_eq!(v.latent_at(16).0, v.levels[1].z);
        for (d, m) in v.depth.iter().zip(&v.mask.data) {
            assert_eq!(d.is_finite(), *m);
        }
    }
}

#[test]
fn bank_rejects_poses_outside_box() {
    let poses = vec![CameraPose::new(150.0, 0.0, 3.0)];
    let r = ViewBank::build(
        &two_tone_sphere(),
        &poses,
        AngleBox::in_boundary_default(),
        &BankOptions::default(),
        &StubCodec,
    );
    assert!(r.is_err());
}

#[test]
fn bank_persistence_round_trip() {
    let bank = small_bank(3);
    let dir = std::env::temp_dir().join(format!("lift3d-bank-{}", std::process::id()));
    bank.save(&dir).unwrap();
    let loaded = ViewBank::load(&dir).unwrap();
    std::fs::remove_dir_all(&dir).ok();
    assert_eq!(loaded.len(), 3);
    assert_eq!(loaded.ib_bounds, bank.ib_bounds);
    for (a, b) in bank.views.iter().zip(&loaded.views) {
        assert_eq!(a.pose, b.pose);
        assert_eq!(a.rgb, b.rgb);
        assert_eq!(a.mask, b.mask);
        assert_eq!(a.depth, b.depth);
        for (la, lb) in a.levels.iter().zip(&b.levels) {
            assert_eq!(la.mask, lb.mask);
            assert!(la.z.mean_abs_diff(&lb.z) < 1e-6);
        }
    }
}

proptest! {
    #[test]
    fn closest_view_beats_every_other(
        poses in prop::collection::vec((60.0f64..120.0, -30.0f64..30.0), 1..20),
        query in (0.0f64..360.0, -90.0f64..90.0),
    ) {
        let bounds = AngleBox::in_boundary_default();
        let views: Vec<CameraPose> = poses.iter().map(|&(t, p)| CameraPose::new(t, p, 3.0)).collect();
        let bank = ViewBank::build(
            &uv_sphere(Vec3::zeros(), 1.0, 4, 6, |_| [0.5; 3]),
            &views,
            bounds,
            &BankOptions { latent_side: 1, cache_fine: false, ..Default::default() },
            &StubCodec,
        ).unwrap();
        let i = bank.find_closest_index(query.0, query.1).unwrap();
        let best = great_circle_deg(query, (views[i].theta, views[i].phi));
        for v in &views {
            prop_assert!(best <= great_circle_deg(query, (v.theta, v.phi)) + 1e-9);
        }
    }
}
