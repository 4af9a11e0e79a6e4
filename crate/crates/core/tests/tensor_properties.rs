use proptest::prelude::*;
use proptest::test_runner::RngSeed;

use msafnet_core::gradcheck::{check_gradients, random_tensor};
use msafnet_core::tensor::ConvGeometry;
use msafnet_core::{Tensor, Var};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, rng_seed: RngSeed::Fixed(17), failure_persistence: None, ..ProptestConfig::default() }
}

#[derive(Clone, Debug)]
struct ConvCase {
    n: usize,
    c: usize,
    k: usize,
    input: [usize; 3],
    geometry: ConvGeometry,
    seed: u64,
}

fn conv_case() -> impl Strategy<Value = ConvCase> {
    (
        1usize..=2,
        1usize..=3,
        1usize..=3,
        [1usize..=8, 1usize..=8, 1usize..=8],
        [1usize..=3, 1usize..=3, 1usize..=3],
        [1usize..=2, 1usize..=2, 1usize..=2],
        [0usize..=2, 0usize..=2, 0usize..=2],
    )
        .prop_map(|(n, c, k, input, kernel, stride, pad)| {
            let pad = std::array::from_fn(|a| pad[a].min(kernel[a] - 1));
            // Grow the input until every axis yields at least one output.
            let input = std::array::from_fn(|a| input[a].max(kernel[a].saturating_sub(2 * pad[a])));
            (n, c, k, input, ConvGeometry { kernel, stride, pad })
        })
        .prop_flat_map(|(n, c, k, input, geometry)| {
            any::<u64>().prop_map(move |seed| ConvCase { n, c, k, input, geometry, seed })
        })
}

/// Bias first, then taps in (channel, t, y, x) order, padding skipped.
fn naive_conv3d(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, g: ConvGeometry) -> (Vec<usize>, Vec<f64>) {
    let s = x.shape();
    let (n, c, inp) = (s[0], s[1], [s[2], s[3], s[4]]);
    let k = w.shape()[0];
    let out: [usize; 3] = std::array::from_fn(|a| g.output_len(a, inp[a]).unwrap());
    let mut y = Vec::with_capacity(n * k * out.iter().product::<usize>());
    let src = |a: usize, o: usize, tap: usize| {
        let i = (o * g.stride[a] + tap) as isize - g.pad[a] as isize;
        (i >= 0 && (i as usize) < inp[a]).then_some(i as usize)
    };
    for ni in 0..n {
        for ki in 0..k {
            for ot in 0..out[0] {
                for oy in 0..out[1] {
                    for ox in 0..out[2] {
                        let mut acc = b.data()[ki];
                        for ci in 0..c {
                            for dt in 0..g.kernel[0] {
                                for dy in 0..g.kernel[1] {
                                    for dx in 0..g.kernel[2] {
                                        let (Some(t), Some(yy), Some(xx)) =
                                            (src(0, ot, dt), src(1, oy, dy), src(2, ox, dx))
                                        else {
                                            continue;
                                        };
                                        let wi = (((ki * c + ci) * g.kernel[0] + dt) * g.kernel[1] + dy) * g.kernel[2] + dx;
                                        let xi = (((ni * c + ci) * inp[0] + t) * inp[1] + yy) * inp[2] + xx;
                                        acc += w.data()[wi] * x.data()[xi];
                                    }
                                }
                            }
                        }
                        y.push(acc);
                    }
                }
            }
        }
    }
    (vec![n, k, out[0], out[1], out[2]], y)
}

fn conv_inputs(case: &ConvCase) -> (Tensor<f64>, Tensor<f64>, Tensor<f64>) {
    let [t, h, w] = case.input;
    let [kt, kh, kw] = case.geometry.kernel;
    (
        random_tensor(&[case.n, case.c, t, h, w], case.seed, -1.0, 1.0),
        random_tensor(&[case.k, case.c, kt, kh, kw], case.seed ^ 1, -1.0, 1.0),
        random_tensor(&[case.k], case.seed ^ 2, -1.0, 1.0),
    )
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn conv3d_is_bit_identical_to_nested_loops(case in conv_case()) {
        let (x, w, b) = conv_inputs(&case);
        let y = Var::constant(x.clone())
            .conv3d(&Var::constant(w.clone()), &Var::constant(b.clone()), case.geometry)
            .unwrap();
        let (shape, want) = naive_conv3d(&x, &w, &b, case.geometry);
        prop_assert_eq!(y.shape(), shape.as_slice());
        prop_assert!(y.data().iter().zip(&want).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn conv2d_is_the_single_frame_case(
        (n, c, k, h, w, seed) in (1usize..=2, 1usize..=3, 1usize..=3, 1usize..=8, 1usize..=8, any::<u64>())
    ) {
        let x = random_tensor(&[n, c, h, w], seed, -1.0, 1.0);
        let wt = random_tensor(&[k, c, 3, 3], seed ^ 1, -1.0, 1.0);
        let b = random_tensor(&[k], seed ^ 2, -1.0, 1.0);
        let y = Var::constant(x.clone()).conv2d(&Var::constant(wt.clone()), &Var::constant(b.clone()), (1, 1)).unwrap();
        let g = ConvGeometry { kernel: [1, 3, 3], stride: [1; 3], pad: [0, 1, 1] };
        let (_, want) = naive_conv3d(
            &x.clone().reshape(vec![n, c, 1, h, w]).unwrap(),
            &wt.clone().reshape(vec![k, c, 1, 3, 3]).unwrap(),
            &b,
            g,
        );
        prop_assert_eq!(y.shape(), &[n, k, h, w]);
        prop_assert!(y.data().iter().zip(&want).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn maxpool_takes_first_maximum_of_each_window(
        (n, c, t, h2, w2, seed) in (1usize..=2, 1usize..=2, 1usize..=3, 1usize..=4, 1usize..=4, any::<u64>())
    ) {
        let (h, w) = (2 * h2, 2 * w2);
        // Few distinct levels so ties are common.
        let x = random_tensor(&[n, c, t, h, w], seed, 0.0, 4.0).map(f64::floor);
        let v = Var::leaf(x.clone(), true);
        let y = v.maxpool3d().unwrap();
        y.sum().backward().unwrap();
        let grad = v.grad().unwrap();
        let mut want_grad = vec![0.0; x.len()];
        let mut k = 0;
        for plane in 0..n * c * t {
            for oy in 0..h2 {
                for ox in 0..w2 {
                    let idx = [(0, 0), (0, 1), (1, 0), (1, 1)].map(|(dy, dx)| (plane * h + 2 * oy + dy) * w + 2 * ox + dx);
                    let mut best = idx[0];
                    for &i in &idx[1..] {
                        if x.data()[i] > x.data()[best] {
                            best = i;
                        }
                    }
                    prop_assert_eq!(y.data()[k].to_bits(), x.data()[best].to_bits());
                    want_grad[best] = 1.0;
                    k += 1;
                }
            }
        }
        prop_assert_eq!(grad.data(), want_grad.as_slice());
    }

    #[test]
    fn forward_and_backward_are_deterministic(case in conv_case()) {
        let (x, w, b) = conv_inputs(&case);
        let run = || {
            let vars = [Var::leaf(x.clone(), true), Var::leaf(w.clone(), true), Var::leaf(b.clone(), true)];
            let y = vars[0].conv3d(&vars[1], &vars[2], case.geometry).unwrap();
            let proj = Var::constant(random_tensor(y.shape(), case.seed ^ 3, -1.0, 1.0));
            y.hadamard(&proj).unwrap().tanh().sum().backward().unwrap();
            let mut out = y.data().to_vec();
            for v in &vars {
                out.extend_from_slice(v.grad().unwrap().data());
            }
            out
        };
        let (a, b) = (run(), run());
        prop_assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn elementwise_gradients_on_random_shapes(
        shape in prop::collection::vec(1usize..=4, 1..=4),
        seed in any::<u64>(),
    ) {
        let a = random_tensor(&shape, seed, -2.0, 2.0);
        let b = random_tensor(&shape, seed ^ 5, -2.0, 2.0);
        let rep = check_gradients(&[a, b], seed, |v| {
            let mixed = v[0].hadamard(&v[1])?.add(&v[0].sigmoid())?.add(&v[1].tanh())?;
            Ok(mixed.scale(0.5).scalar_add(1.0).relu())
        })
        .unwrap();
        prop_assert!(rep.max_rel < 1e-5, "{:?}", rep);
    }

    #[test]
    fn conv_gradients_on_random_geometry(case in conv_case()) {
        let (x, w, b) = conv_inputs(&case);
        let rep = check_gradients(&[x, w, b], case.seed, |v| v[0].conv3d(&v[1], &v[2], case.geometry)).unwrap();
        prop_assert!(rep.max_rel < 1e-5, "{:?}", rep);
    }
}
