use proptest::prelude::*;
use sfr_core::depth::{build_mask, decode_depth};
use sfr_core::fit::{fit_representation, FitConfig};
use sfr_core::losses::{loss_uv, stage_loss, LossParts, LossWeights};
use sfr_core::plane::{decode_plane, encode_heatmap, ComKernel, GaussKernel};
use sfr_core::preprocess::{downsample_repr, rotate_grid};
use sfr_core::synth::{generate_scene, SynthSpec};
use sfr_core::types::rotate_point;
use sfr_core::{DepthFrame, DepthOffsetMap, Grid, Heatmap, JointSetUvd, JointUvd};

fn grid(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Grid> {
    prop::collection::vec(lo..hi, n * n).prop_map(move |v| Grid::from_vec(n, v).unwrap())
}

fn heatmap(n: usize) -> impl Strategy<Value = Heatmap> {
    grid(n, 0.0, 1.0).prop_filter_map("nonzero mass", |g| {
        let s = g.sum();
        (s > 1e-6).then(|| Heatmap::new(Grid::from_fn(g.n(), |i, k| g.get(i, k) / s)).unwrap())
    })
}

/// Frame with roughly half its pixels on the hand.
fn frame(n: usize) -> impl Strategy<Value = DepthFrame> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.05f64..1.0], n * n)
        .prop_map(move |v| DepthFrame::from_vec(n, v).unwrap())
}

proptest! {
    #[test]
    fn plane_decoder_commutes_with_quarter_turns(h in heatmap(8), turns in 1u32..4) {
        let c = ComKernel::new(8);
        let angle = 90.0 * turns as f64;
        let (u, v) = decode_plane(&h, &c).unwrap();
        let rotated = Heatmap::new(rotate_grid(h.grid(), angle)).unwrap();
        let (ru, rv) = decode_plane(&rotated, &c).unwrap();
        let (eu, ev) = rotate_point(u, v, angle);
        prop_assert!((ru - eu).abs() < 1e-12 && (rv - ev).abs() < 1e-12);
    }

    #[test]
    fn plane_roundtrip_interior(u in 0.1f64..0.9, v in 0.1f64..0.9) {
        let g = GaussKernel::with_default_sigma(3).unwrap();
        let h = encode_heatmap(u, v, 32, &g).unwrap();
        let (du, dv) = decode_plane(&h, &ComKernel::new(32)).unwrap();
        prop_assert!((du - u).abs() < 1e-9 && (dv - v).abs() < 1e-9);
    }

    #[test]
    fn depth_decoder_is_a_convex_combination(
        h in heatmap(6), img in frame(6), d in grid(6, -0.3, 0.3)
    ) {
        let m = build_mask(&img);
        let d = DepthOffsetMap::new(d);
        if let Ok(out) = decode_depth(&d, &h, &img, &m) {
            let support: Vec<f64> = (0..6)
                .flat_map(|i| (0..6).map(move |k| (i, k)))
                .filter(|&(i, k)| m.get(i, k) && h.get(i, k) > 0.0)
                .map(|(i, k)| img.get(i, k) + d.get(i, k))
                .collect();
            let lo = support.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = support.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(out >= lo - 1e-12 && out <= hi + 1e-12);
        }
    }

    #[test]
    fn off_support_offsets_do_not_matter(
        img in frame(6), d in grid(6, -0.3, 0.3), noise in grid(6, -5.0, 5.0)
    ) {
        // heatmap supported on a single quadrant
        let h = Heatmap::new(Grid::from_fn(6, |r, c| if r < 3 && c < 3 { 1.0 / 9.0 } else { 0.0 })).unwrap();
        let m = build_mask(&img);
        let base = DepthOffsetMap::new(d.clone());
        let perturbed = DepthOffsetMap::new(Grid::from_fn(6, |r, c| {
            let on_support = h.get(r, c) > 0.0 && m.get(r, c);
            d.get(r, c) + if on_support { 0.0 } else { noise.get(r, c) }
        }));
        match (decode_depth(&base, &h, &img, &m), decode_depth(&perturbed, &h, &img, &m)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "support detection differs"),
        }
    }

    #[test]
    fn downsampling_commutes_with_masking(img in frame(8)) {
        let small = downsample_repr(&img, 4).unwrap();
        let m_small = build_mask(&small);
        let m_big = build_mask(&img);
        for i in 0..4 {
            for k in 0..4 {
                prop_assert_eq!(m_small.get(i, k), m_big.get(2 * i, 2 * k));
            }
        }
    }

    #[test]
    fn stage_loss_is_linear(parts in prop::array::uniform4(0.0f64..10.0), lh in 0.0f64..3.0, ld in 0.0f64..3.0) {
        let p = LossParts { uv: parts[0], d: parts[1], heatmap: parts[2], depthmap: parts[3] };
        let w = LossWeights::new(lh, ld).unwrap();
        let expected = parts[0] + parts[1] + lh * parts[2] + ld * parts[3];
        prop_assert!((stage_loss(&p, &w) - expected).abs() < 1e-12);
    }

    #[test]
    fn coordinate_loss_is_quadratic(u in 0.0f64..1.0, v in 0.0f64..1.0, s in 0.0f64..0.5) {
        let gt = JointSetUvd::new(vec![JointUvd::new(0.5, 0.5, 0.5)]).unwrap();
        let one = JointSetUvd::new(vec![JointUvd::new(0.5 + s * (u - 0.5), 0.5 + s * (v - 0.5), 0.5)]).unwrap();
        let two = JointSetUvd::new(vec![JointUvd::new(0.5 + 2.0 * s * (u - 0.5), 0.5 + 2.0 * s * (v - 0.5), 0.5)]).unwrap();
        let (a, b) = (loss_uv(&one, &gt).unwrap(), loss_uv(&two, &gt).unwrap());
        prop_assert!(a >= 0.0 && (b - 4.0 * a).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn full_mode_trace_settles(seed in 0u64..10_000) {
        let spec = SynthSpec { resolution: 16, n_joints: 2, blob_radius: 3.0, ..SynthSpec::default() };
        let scene = generate_scene(&spec.with_seed(seed)).unwrap();
        let g = GaussKernel::with_default_sigma(7).unwrap();
        let cfg = FitConfig { max_iters: 300, seed, ..FitConfig::default() };
        let fit = fit_representation(&scene.joints, &scene.frame, &g, &cfg, &LossWeights::default()).unwrap();
        for w in fit.trace[10..].windows(2) {
            prop_assert!(w[1].total <= w[0].total * (1.0 + 1e-9) + 1e-15);
        }
    }
}
