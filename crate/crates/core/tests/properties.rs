use chroma_core::datagen::{
    active_channels, colorize_image, pad_to_32, BandLayout, ColorScheme, CHANNELS, PLANE,
};
use chroma_core::tensor::{conv2d, matmul, relative_error};
use chroma_core::{Rng, Tensor};
use proptest::prelude::*;

fn normal(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = Rng::new(seed);
    Tensor::from_fn(shape, |_| rng.normal() as f32)
}

proptest! {
    #[test]
    fn conv_is_linear_in_input(seed in any::<u64>(), a in -3.0f32..3.0, b in -3.0f32..3.0, c in 1usize..4, h in 1usize..6) {
        let x = normal(&[2, c, h, 5], seed);
        let y = normal(&[2, c, h, 5], seed ^ 1);
        let k = normal(&[3, c, 3, 3], seed ^ 2);
        let zero = Tensor::zeros(&[3]);
        let lhs = conv2d(&x.axpby(a, &y, b).unwrap(), &k, &zero).unwrap();
        let rhs = conv2d(&x, &k, &zero).unwrap().axpby(a, &conv2d(&y, &k, &zero).unwrap(), b).unwrap();
        prop_assert!(relative_error(&lhs, &rhs) < 1e-5);
    }

    #[test]
    fn matmul_is_associative(seed in any::<u64>(), m in 1usize..8, k in 1usize..8, l in 1usize..8, n in 1usize..8) {
        let a = normal(&[m, k], seed);
        let b = normal(&[k, l], seed ^ 1);
        let c = normal(&[l, n], seed ^ 2);
        let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        prop_assert!(relative_error(&left, &right) < 1e-5);
    }

    #[test]
    fn colorization_preserves_intensity_and_edges(
        pixels in proptest::collection::vec(any::<u8>(), 784),
        seed in any::<u64>(),
        scheme in prop::sample::select(ColorScheme::ALL.to_vec()),
        layout in prop::sample::select(vec![BandLayout::Rows, BandLayout::Columns]),
    ) {
        let padded = pad_to_32(&pixels).unwrap();
        let img = colorize_image(&pixels, scheme, layout, &mut Rng::new(seed)).unwrap();
        prop_assert_eq!(img.len(), CHANNELS * PLANE);
        for p in 0..PLANE {
            let vals = [img[p], img[PLANE + p], img[2 * PLANE + p]];
            prop_assert_eq!(vals.iter().map(|&v| v as u16).sum::<u16>(), padded[p] as u16);
            prop_assert!(vals.iter().filter(|&&v| v != 0).count() <= 1);
            prop_assert_eq!(vals.iter().any(|&v| v != 0), padded[p] != 0);
        }
        if scheme != ColorScheme::HorizontalThirds && padded.iter().any(|&v| v != 0) {
            prop_assert_eq!(active_channels(&img).iter().filter(|&&b| b).count(), 1);
        }
    }
}
