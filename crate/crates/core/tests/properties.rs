//! Randomized invariants across modules.

use cdfuse::cdblock::{cdblock_step_traced, dict_forward, soft_threshold, CDBlockParams, CombinedRepresentation};
use cdfuse::color::fuse_chrominance;
use cdfuse::cost::{count_block_mults, m_am, m_joint, reduction, reduction_exact};
use cdfuse::loss::{adaptive_weights, hlif_loss, scharr_magnitude};
use cdfuse::metrics::{cc, mse, nabf, psnr, ssim};
use cdfuse::network::{fuse_luminance, ModelConfig, ModelParams, UpdateMode};
use cdfuse::tensor::{conv2d, conv2d_transposed, MulCount};
use cdfuse::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_t(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn one_by_one_conv_is_matvec(cin in 1usize..6, cout in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_t(&[cin, 1, 1], -1.0, 1.0, &mut rng);
        let k = rand_t(&[cout, cin, 1, 1], -1.0, 1.0, &mut rng);
        let got = conv2d(&x, &k).unwrap();
        for o in 0..cout {
            let mut want = 0.0;
            for c in 0..cin {
                want += k.data()[o * cin + c] * x.data()[c];
            }
            prop_assert_eq!(got.data()[o], want);
        }
    }

    #[test]
    fn convolutions_are_pure(k in prop::sample::select(vec![1usize, 3, 5]), h in 1usize..10, w in 1usize..10, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_t(&[2, h, w], -1.0, 1.0, &mut rng);
        let kern = rand_t(&[3, 2, k, k], -1.0, 1.0, &mut rng);
        let (x0, k0) = (x.clone(), kern.clone());
        let a = conv2d(&x, &kern).unwrap();
        let b = conv2d_transposed(&a, &kern).unwrap();
        prop_assert_eq!(&x, &x0);
        prop_assert_eq!(&kern, &k0);
        prop_assert_eq!(a, conv2d(&x, &kern).unwrap());
        prop_assert_eq!(b, conv2d_transposed(&conv2d(&x, &kern).unwrap(), &kern).unwrap());
    }

    #[test]
    fn dictionary_blocks_do_not_leak(c in 1usize..4, h in 1usize..8, w in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = CDBlockParams::random(c, 3, 1.0, 0.1, &mut rng);
        let wt = rand_t(&[3 * c, h, w], -1.0, 1.0, &mut rng);
        let base = dict_forward(&p, &CombinedRepresentation::new(wt.clone()).unwrap()).unwrap();
        for (slab, untouched) in [(1usize, 0usize), (0, 1)] {
            let mut moved = wt.clone();
            let plane = h * w;
            for v in &mut moved.data_mut()[slab * c * plane..(slab + 1) * c * plane] {
                *v += rng.random_range(-5.0..5.0);
            }
            let out = dict_forward(&p, &CombinedRepresentation::new(moved).unwrap()).unwrap();
            prop_assert_eq!(out.channels(untouched * c, c).unwrap(), base.channels(untouched * c, c).unwrap());
        }
    }

    #[test]
    fn step_is_threshold_of_affine_map(c in 1usize..4, seed in any::<u64>(), t in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = CDBlockParams::random(c, 3, 0.5, 0.2, &mut rng);
        let (h, w) = (5, 6);
        let w1 = rand_t(&[3 * c, h, w], -1.0, 1.0, &mut rng);
        let w2 = rand_t(&[3 * c, h, w], -1.0, 1.0, &mut rng);
        let z1 = rand_t(&[2 * c, h, w], -1.0, 1.0, &mut rng);
        let z2 = rand_t(&[2 * c, h, w], -1.0, 1.0, &mut rng);
        let pre = |wv: &Tensor, zv: &Tensor| {
            cdblock_step_traced(&p, &CombinedRepresentation::new(wv.clone()).unwrap(), zv, &mut MulCount::default()).unwrap()
        };
        let mix = |a: &Tensor, b: &Tensor| a.scale(t).add(&b.scale(1.0 - t)).unwrap();
        let s1 = pre(&w1, &z1);
        let s2 = pre(&w2, &z2);
        let sm = pre(&mix(&w1, &w2), &mix(&z1, &z2));
        let expect = mix(&s1.pre_threshold, &s2.pre_threshold);
        prop_assert!(sm.pre_threshold.max_abs_diff(&expect).unwrap() <= 1e-12);
        prop_assert_eq!(sm.output.tensor(), &soft_threshold(&sm.pre_threshold, &p.thresholds()).unwrap());
    }

    #[test]
    fn fusion_preserves_extent(h in 3usize..20, w in 3usize..20, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = ModelParams::init(&ModelConfig::default(), &mut rng);
        let x = rand_t(&[1, h, w], 0.0, 1.0, &mut rng);
        let y = rand_t(&[1, h, w], 0.0, 1.0, &mut rng);
        let f = fuse_luminance(&p, &x, &y).unwrap();
        prop_assert_eq!(f.shape(), &[1, h, w]);
        prop_assert!(f.data().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(f, fuse_luminance(&p, &x, &y).unwrap());
    }

    #[test]
    fn chroma_blend_is_convex_and_symmetric(a in 0.0f64..1.0, b in 0.0f64..1.0, near in any::<bool>()) {
        let (a, b) = if near { (0.5 + (a - 0.5) * 1e-7, 0.5 + (b - 0.5) * 1e-7) } else { (a, b) };
        let ta = Tensor::filled(&[1, 1, 1], a);
        let tb = Tensor::filled(&[1, 1, 1], b);
        let ab = fuse_chrominance(&ta, &tb).unwrap().data()[0];
        prop_assert_eq!(ab, fuse_chrominance(&tb, &ta).unwrap().data()[0]);
        prop_assert!(ab >= a.min(b) && ab <= a.max(b), "{} outside [{}, {}]", ab, a.min(b), a.max(b));
    }

    #[test]
    fn adaptive_weights_partition_unity(tau in 0.01f64..1.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gx = rand_t(&[1, 6, 6], 0.0, 3.0, &mut rng);
        let gy = rand_t(&[1, 6, 6], 0.0, 3.0, &mut rng);
        let wts = adaptive_weights(&gx, &gy, tau).unwrap();
        for (a, b) in wts.zx.data().iter().zip(wts.zy.data()) {
            prop_assert_eq!(a + b, 1.0);
            prop_assert!(*a > 0.0 && *a < 1.0);
        }
        let swapped = adaptive_weights(&gy, &gx, tau).unwrap();
        prop_assert_eq!(&swapped.zx, &wts.zy);
        prop_assert_eq!(&swapped.zy, &wts.zx);
    }

    #[test]
    fn hlif_is_nonnegative_and_source_symmetric(tau in 0.02f64..0.5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = rand_t(&[1, 8, 8], 0.0, 1.0, &mut rng);
        let x = rand_t(&[1, 8, 8], 0.0, 1.0, &mut rng);
        let y = rand_t(&[1, 8, 8], 0.0, 1.0, &mut rng);
        let a = hlif_loss(&f, &x, &y, tau).unwrap();
        let b = hlif_loss(&f, &y, &x, tau).unwrap();
        prop_assert!(a.total >= 0.0 && a.hif >= 0.0 && a.lif >= 0.0);
        prop_assert!((a.total - b.total).abs() <= 1e-15 * a.total.max(1.0));
        prop_assert!(a.total > 0.0);
        prop_assert_eq!(hlif_loss(&x, &x, &x, tau).unwrap().total, 0.0);
        prop_assert!(scharr_magnitude(&f).unwrap().data().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn metrics_respect_source_swap(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = rand_t(&[1, 16, 16], 0.0, 1.0, &mut rng);
        let a = rand_t(&[1, 16, 16], 0.0, 1.0, &mut rng);
        let b = rand_t(&[1, 16, 16], 0.0, 1.0, &mut rng);
        prop_assert_eq!(mse(&f, &a, &b).unwrap(), mse(&f, &b, &a).unwrap());
        prop_assert_eq!(psnr(&f, &a, &b).unwrap(), psnr(&f, &b, &a).unwrap());
        prop_assert_eq!(ssim(&f, &a, &b).unwrap(), ssim(&f, &b, &a).unwrap());
        prop_assert_eq!(cc(&f, &a, &b).unwrap(), cc(&f, &b, &a).unwrap());
        prop_assert!((nabf(&f, &a, &b).unwrap() - nabf(&f, &b, &a).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn psnr_falls_with_noise(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_t(&[1, 32, 32], 0.2, 0.8, &mut rng);
        let b = rand_t(&[1, 32, 32], 0.2, 0.8, &mut rng);
        let f = a.add(&b).unwrap().scale(0.5);
        let unit = rand_t(&[1, 32, 32], -1.0, 1.0, &mut rng);
        let mut last = f64::INFINITY;
        for sigma in [1.0, 4.0, 16.0] {
            let noisy = f.zip_map(&unit, |v, n| v + sigma / 255.0 * 3f64.sqrt() * n).unwrap();
            let p = psnr(&noisy, &a, &b).unwrap();
            prop_assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn ssim_tolerates_common_offset(offset in 0.0f64..16.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_t(&[1, 24, 24], 0.2, 0.7, &mut rng);
        let f = a.zip_map(&rand_t(&[1, 24, 24], -0.05, 0.05, &mut rng), |u, v| u + v).unwrap();
        let base = ssim(&f, &a, &a).unwrap();
        let d = offset / 255.0;
        let shifted = ssim(&f.map(|v| v + d), &a.map(|v| v + d), &a.map(|v| v + d)).unwrap();
        prop_assert!((base - shifted).abs() <= 1e-3);
    }

    #[test]
    fn cost_ratio_depends_only_on_sources(n in 1u64..12, s in 1u64..8, c in 1u64..9, h in 1u64..300, w in 1u64..300) {
        let (am, joint) = (m_am(n, s, c, h, w), m_joint(n, s, c, h, w));
        prop_assert_eq!(am * 4, joint * u128::from(5 + n));
        let (num, den) = reduction_exact(n);
        prop_assert_eq!((num, den), (n + 1, n + 5));
        prop_assert!((reduction(n) - (1.0 - 4.0 / (n + 5) as f64)).abs() <= 1e-15);
        prop_assert!(reduction(n + 1) > reduction(n));
    }

    #[test]
    fn instrumented_counts_match_closed_form(c in 1usize..5, h in 1usize..24, w in 1usize..24) {
        let cfg = ModelConfig { blocks: 1, channels: c, kernel_size: 3 };
        let uni = count_block_mults(UpdateMode::Unified, &cfg, h, w).unwrap();
        let alt = count_block_mults(UpdateMode::Alternating, &cfg, h, w).unwrap();
        let (c, h, w) = (c as u64, h as u64, w as u64);
        prop_assert_eq!(u128::from(uni), m_joint(2, 3, c, h, w));
        prop_assert_eq!(u128::from(alt), m_am(2, 3, c, h, w));
    }
}
