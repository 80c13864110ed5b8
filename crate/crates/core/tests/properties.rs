use num_complex::Complex64;
use proptest::prelude::*;
use retmap::io::{format_points, parse_points};
use retmap::prf::fit_gain_and_metrics;
use retmap::synth::ring_disk_mesh;
use retmap::{
    clamp_beltrami, compute_beltrami, count_flipped, harmonic_disk_map, linear_beltrami_solve, BeltramiField,
    CorticalMesh, Point2,
};

fn complex() -> impl Strategy<Value = Complex64> {
    (-1.5f64..1.5, -1.5f64..1.5).prop_map(|(re, im)| Complex64::new(re, im))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn clamp_bounds_and_is_idempotent(mu in prop::collection::vec(complex(), 1..50), eps in 0.01f64..0.5) {
        let field = BeltramiField::new(mu.clone());
        let once = clamp_beltrami(&field, eps);
        prop_assert!(once.max_modulus() <= 1.0 - eps + 1e-15);
        prop_assert_eq!(&clamp_beltrami(&once, eps), &once);
        for (a, b) in mu.iter().zip(&once.mu) {
            if a.norm() < 1.0 - eps {
                prop_assert_eq!(a, b);
            } else if a.norm() > 0.0 {
                // argument is preserved
                prop_assert!((a / a.norm() - b / b.norm()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn pearson_ignores_positive_affine_rescaling(
        pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 8..100),
        scale in 0.01f64..100.0,
        shift in -50.0f64..50.0,
    ) {
        let obs: Vec<f64> = pairs.iter().map(|p| p.0 + 0.3 * p.1).collect();
        let pred: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let Ok(a) = fit_gain_and_metrics(&obs, &pred) else { return Ok(()) };
        let pred2: Vec<f64> = pred.iter().map(|v| scale * v + shift).collect();
        let obs2: Vec<f64> = obs.iter().map(|v| scale * v - shift).collect();
        let b = fit_gain_and_metrics(&obs, &pred2).unwrap();
        let c = fit_gain_and_metrics(&obs2, &pred).unwrap();
        prop_assert!((a.pearson - b.pearson).abs() <= 1e-12);
        prop_assert!((a.pearson - c.pearson).abs() <= 1e-12);
        // the gain and baseline absorb rescaling of the prediction
        prop_assert!((a.rmse - b.rmse).abs() <= 1e-9 * (1.0 + a.rmse));
        prop_assert!(a.rmse >= 0.0 && a.pearson.abs() <= 1.0);
    }

    #[test]
    fn observed_in_span_has_zero_rmse(
        pred in prop::collection::vec(-3.0f64..3.0, 8..60),
        gain in 0.1f64..4.0,
        base in -2.0f64..2.0,
    ) {
        let obs: Vec<f64> = pred.iter().map(|p| gain * p + base).collect();
        if let Ok(fit) = fit_gain_and_metrics(&obs, &pred) {
            prop_assert!(fit.rmse <= 1e-10);
            prop_assert!((fit.pearson - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn points_roundtrip_exactly(pts in prop::collection::vec((any::<f64>(), any::<f64>()), 0..40)) {
        let pts: Vec<Point2> = pts.into_iter().filter(|p| p.0.is_finite() && p.1.is_finite()).map(|p| [p.0, p.1]).collect();
        let back = parse_points("p", &format_points(&pts)).unwrap();
        prop_assert_eq!(back, pts);
    }

    #[test]
    fn affine_maps_have_constant_mu(a in complex(), k in 0.0f64..0.95, phase in -3.0f64..3.0) {
        prop_assume!(a.norm() > 0.1);
        let b = a * Complex64::from_polar(k, phase);
        let (uv, faces) = ring_disk_mesh(3);
        let target: Vec<Point2> = uv.iter().map(|p| {
            let z = Complex64::new(p[0], p[1]);
            let w = a * z + b * z.conj();
            [w.re, w.im]
        }).collect();
        let mu = compute_beltrami(&faces, &uv, &target).unwrap();
        for m in &mu.mu {
            prop_assert!((m - b / a).norm() < 1e-12);
        }
        prop_assert_eq!(count_flipped(&target, &faces), 0);
    }

    #[test]
    fn lbs_inverts_compute_beltrami(seed_mu in prop::collection::vec(complex(), 6), amp in 0.0f64..0.6) {
        let (uv, faces) = ring_disk_mesh(6);
        let field = clamp_beltrami(&BeltramiField::new(faces.iter().map(|f| {
            let c = [0, 1, 2].iter().fold([0.0, 0.0], |s, &k| [s[0] + uv[f[k]][0] / 3.0, s[1] + uv[f[k]][1] / 3.0]);
            let z = Complex64::new(c[0], c[1]);
            amp * (seed_mu[0] + seed_mu[1] * z + seed_mu[2] * z.conj() + seed_mu[3] * z * z) / 4.0
        }).collect()), 0.05);
        let mesh = CorticalMesh::from_planar(&uv, faces.clone()).unwrap();
        let pins: Vec<(usize, Point2)> = mesh.boundary_loop().unwrap().iter().map(|&b| (b, uv[b])).collect();
        let f = linear_beltrami_solve(&faces, &uv, &field, &pins).unwrap();
        prop_assume!(count_flipped(&f, &faces) == 0);
        let mu = compute_beltrami(&faces, &uv, &f).unwrap();
        let g = linear_beltrami_solve(&faces, &uv, &mu, &pins).unwrap();
        let err = f.iter().zip(&g).map(|(p, q)| (p[0] - q[0]).hypot(p[1] - q[1])).fold(0.0, f64::max);
        prop_assert!(err < 1e-8, "roundtrip error {}", err);
    }

    #[test]
    fn harmonic_map_of_a_lifted_disk_is_flip_free(rings in 2usize..15, h in -5.0f64..5.0, w in 0.2f64..1.0) {
        let (p, faces) = ring_disk_mesh(rings);
        let v = p.iter().map(|q| [10.0 * q[0], 10.0 * q[1], h * (-(q[0] * q[0] + q[1] * q[1]) / (w * w)).exp()]).collect();
        let mesh = CorticalMesh::new(v, faces).unwrap();
        let param = harmonic_disk_map(&mesh).unwrap();
        prop_assert_eq!(count_flipped(&param.uv, mesh.faces()), 0);
        prop_assert!(param.boundary_radius_error() <= 1e-9);
    }
}
