use nalgebra::DMatrix;
use proptest::prelude::*;
use vidlaw::dynamics::{builtin_system, integrate_ode, Grid, TrajectorySeries};
use vidlaw::evaluate::{procrustes_align, r2_score, rmse, vps, DiagnosticReport};
use vidlaw::extract::stencil::{biharmonic, biharmonic_direct, laplacian};
use vidlaw::extract::{segment_frame, track_and_filter, TrackConfig};
use vidlaw::planner::{diagnose, validate_instruction, Mode, RunConfig, StageParams, PARAM_KEYS};
use vidlaw::regress::stlsq_matrix;
use vidlaw::render::{render_object_video, world_to_pixel, RenderConfig};

fn field(n: usize, seed: &[f64]) -> Vec<f64> {
    (0..n).map(|i| seed[i % seed.len()] * ((i * 7919) % 13) as f64 / 13.0 - 0.3).collect()
}

fn series(dim: usize, rows: &[f64]) -> TrajectorySeries {
    TrajectorySeries::uniform(0.0, 0.1, dim, rows.to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn circular_conserves_radius(x in -2.0..2.0f64, y in -2.0..2.0f64) {
        prop_assume!(x.hypot(y) > 0.1);
        let traj = integrate_ode(&builtin_system("circular").unwrap(), &[x, y], 0.01, 2000).unwrap();
        let r0 = x * x + y * y;
        for row in traj.rows() {
            prop_assert!(((row[0] * row[0] + row[1] * row[1]) - r0).abs() / r0 < 1e-8);
        }
    }

    #[test]
    fn integration_is_deterministic(x in -2.0..2.0f64, y in -2.0..2.0f64) {
        let spec = builtin_system("vdp").unwrap();
        prop_assert_eq!(integrate_ode(&spec, &[x, y], 0.01, 300).unwrap(), integrate_ode(&spec, &[x, y], 0.01, 300).unwrap());
    }

    #[test]
    fn render_is_seeded_and_clipped(x in -1.5..1.5f64, y in -1.5..1.5f64, sigma in 0.0..0.3f64, seed in 0u64..1000) {
        let traj = series(2, &[x, y, -y, x]);
        let cfg = RenderConfig { world_window: Some((-2.0, 2.0, -2.0, 2.0)), noise_sigma: sigma, seed, ..Default::default() };
        let a = render_object_video(&traj, (0, 1), &cfg).unwrap();
        let b = render_object_video(&traj, (0, 1), &cfg).unwrap();
        prop_assert_eq!(&a.frames, &b.frames);
        prop_assert!(a.frames.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn weighted_centroid_is_subpixel(x in -1.6..1.6f64, y in -1.6..1.6f64, radius in 3.0..6.0f64) {
        let traj = series(2, &[x, y, x, y]);
        let cfg = RenderConfig { world_window: Some((-2.0, 2.0, -2.0, 2.0)), ball_radius: radius, ..Default::default() };
        let seq = render_object_video(&traj, (0, 1), &cfg).unwrap();
        let blobs = segment_frame(seq.frame(0, 0), 64, 64, 0.0, 0.3, 4).unwrap();
        prop_assert_eq!(blobs.len(), 1);
        let (px, py) = world_to_pixel((-2.0, 2.0, -2.0, 2.0), 64, 64, x, y);
        prop_assert!((blobs[0].centroid.0 - px).hypot(blobs[0].centroid.1 - py) < 0.1);
    }

    #[test]
    fn tracking_round_trip(radius in 0.5..1.5f64, phase in 0.0..6.28f64, omega in 0.5..2.0f64) {
        let states: Vec<f64> = (0..120)
            .flat_map(|k| {
                let t = phase + omega * k as f64 * 0.02;
                [radius * t.cos(), radius * t.sin()]
            })
            .collect();
        let traj = TrajectorySeries::uniform(0.0, 0.02, 2, states).unwrap();
        let cfg = RenderConfig { world_window: Some((-2.0, 2.0, -2.0, 2.0)), ..Default::default() };
        let seq = render_object_video(&traj, (0, 1), &cfg).unwrap();
        let got = track_and_filter(&seq, &TrackConfig::default()).unwrap();
        let err = got.series.states().iter().zip(traj.states()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 0.05, "max error {}", err);
    }

    #[test]
    fn stencils_are_linear(a in -3.0..3.0f64, b in -3.0..3.0f64, s in prop::collection::vec(-1.0..1.0f64, 5..20)) {
        let g = Grid { height: 12, width: 10, dx: 0.4, dy: 0.3 };
        let n = g.cells();
        let u = field(n, &s);
        let v: Vec<f64> = field(n, &s).iter().rev().map(|x| x * 1.7 + 0.2).collect();
        let w: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        for op in [laplacian as fn(&[f64], &Grid, &mut [f64]), biharmonic] {
            let (mut lu, mut lv, mut lw) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            op(&u, &g, &mut lu);
            op(&v, &g, &mut lv);
            op(&w, &g, &mut lw);
            for i in 0..n {
                prop_assert!((lw[i] - (a * lu[i] + b * lv[i])).abs() < 1e-9 * (1.0 + lw[i].abs()));
            }
        }
    }

    #[test]
    fn biharmonic_forms_agree(s in prop::collection::vec(-1.0..1.0f64, 7..40), h in 0.2..1.0f64) {
        let g = Grid { height: 16, width: 14, dx: h, dy: h * 1.3 };
        let u = field(g.cells(), &s);
        let (mut a, mut b) = (vec![0.0; g.cells()], vec![0.0; g.cells()]);
        biharmonic(&u, &g, &mut a);
        biharmonic_direct(&u, &g, &mut b);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-10 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn stlsq_is_idempotent_and_monotone(coefs in prop::collection::vec(-2.0..2.0f64, 6), seed in 0u64..500) {
        let m = 80;
        let theta = DMatrix::from_fn(m, 6, |i, j| (((i * 31 + j * 17) as u64 + seed) % 97) as f64 / 48.5 - 1.0);
        let dz = &theta * DMatrix::from_column_slice(6, 1, &coefs);
        let fit = stlsq_matrix(&theta, &dz, 0.3, 10).unwrap();
        let active: Vec<usize> = (0..6).filter(|&i| fit.xi[(i, 0)] != 0.0).collect();
        let sub = theta.select_columns(&active);
        let again = stlsq_matrix(&sub, &dz, 0.3, 10).unwrap();
        for (k, &i) in active.iter().enumerate() {
            prop_assert!((again.xi[(k, 0)] - fit.xi[(i, 0)]).abs() < 1e-9);
        }
        let loose = stlsq_matrix(&theta, &dz, 0.1, 10).unwrap();
        let n_loose = (0..6).filter(|&i| loose.xi[(i, 0)] != 0.0).count();
        prop_assert!(n_loose >= active.len());
    }

    #[test]
    fn r2_shift_and_scale_invariant(v in prop::collection::vec(-5.0..5.0f64, 12), shift in -10.0..10.0f64, a in 0.1..10.0f64) {
        let x = DMatrix::from_column_slice(6, 2, &v);
        let y = x.map(|e| e * 0.9 + 0.1 * e.sin());
        let base = r2_score(&x, &y).unwrap();
        prop_assume!(base.is_finite());
        let shifted = r2_score(&x.add_scalar(shift), &y.add_scalar(shift)).unwrap();
        let scaled = r2_score(&(&x * a), &(&y * a)).unwrap();
        prop_assert!((shifted - base).abs() < 1e-9 * (1.0 + base.abs()));
        prop_assert!((scaled - base).abs() < 1e-9 * (1.0 + base.abs()));
    }

    #[test]
    fn rmse_symmetric_and_vps_monotone(v in prop::collection::vec(-3.0..3.0f64, 40), e1 in 0.01..2.0f64, e2 in 0.01..2.0f64) {
        let truth = series(2, &v);
        let pred = series(2, &v.iter().enumerate().map(|(i, x)| x + 0.01 * i as f64).collect::<Vec<_>>());
        prop_assert_eq!(rmse(&pred, &truth).unwrap().value, rmse(&truth, &pred).unwrap().value);
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        prop_assert!(vps(&pred, &truth, lo).unwrap() <= vps(&pred, &truth, hi).unwrap());
        prop_assert_eq!(vps(&pred, &truth, f64::INFINITY).unwrap(), truth.len() - 1);
    }

    #[test]
    fn procrustes_residual_is_similarity_invariant(
        v in prop::collection::vec(-3.0..3.0f64, 40), angle in -3.1..3.1f64, scale in 0.2..5.0f64, reflect: bool,
    ) {
        let reference = series(2, &v);
        let latent = series(2, &v.iter().enumerate().map(|(i, x)| x + 0.3 * ((i as f64) * 1.3).sin()).collect::<Vec<_>>());
        let (base, _) = procrustes_align(&latent, &reference).unwrap();
        let (c, s) = (angle.cos(), angle.sin());
        let sign = if reflect { -1.0 } else { 1.0 };
        let moved: Vec<f64> = latent.states().chunks(2).flat_map(|z| [scale * (c * z[0] - s * z[1]) + 2.0, scale * sign * (s * z[0] + c * z[1]) - 1.0]).collect();
        let (tr, _) = procrustes_align(&series(2, &moved), &reference).unwrap();
        prop_assert!((tr.residual - base.residual).abs() < 1e-9);
    }

    #[test]
    fn report_json_round_trips(r2 in -1e3..1.0f64, rmse in 0.0..1e3f64, vps in 0usize..1000, l0 in 0usize..40) {
        let mut r = DiagnosticReport::new(3, "object");
        r.r2 = r2;
        r.rmse = rmse;
        r.vps = vps;
        r.l0 = l0;
        r.horizon = 1000;
        let back: DiagnosticReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        prop_assert_eq!(back, r);
    }

    #[test]
    fn diagnose_emits_valid_instructions(
        r2 in -1.0..1.0f64, vps in 0usize..=1000, l0 in 0usize..30, recon in 0.0..2.0f64, rep: bool, has_model: bool,
    ) {
        let mut cfg = RunConfig::default();
        cfg.planner.mode = if rep { Mode::Representation } else { Mode::Object };
        let mut report = DiagnosticReport::new(0, cfg.planner.mode.as_str());
        report.r2 = r2;
        report.vps = vps;
        report.l0 = l0;
        report.horizon = 1000;
        if rep {
            report.recon_error = Some(recon);
            report.smoothness = Some(recon);
        }
        report.tool_params.insert("library_inputs".into(), serde_json::Value::from(2));
        let cur = StageParams::initial(&cfg);
        let ins = diagnose(&report, &cur, &[cur.clone()], has_model, &cfg);
        prop_assert!(validate_instruction(&ins, cfg.planner.mode, &cur, has_model).is_ok());
        prop_assert!(ins.params.keys().all(|k| PARAM_KEYS.contains(&k.as_str())));
    }
}
