//! Central finite-difference checks for every differentiable tape operation.
//!
//! The oracle is independent of the backward pass: each gradient element is
//! re-derived from two forward evaluations at x +/- h. Inputs are sampled
//! away from the non-smooth points of relu and the hinge so the difference
//! quotient is valid.

use capsfold_core::tensor::{ConvSpec, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

/// Relative error with a floor so near-zero gradients compare absolutely.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Check analytic gradients of `build` (a scalar-valued tape program over
/// `inputs`) against central finite differences, element by element.
fn check_gradients(
    name: &str,
    inputs: &[Tensor],
    build: impl Fn(&mut Tape, &[Var]) -> Var,
) {
    let eval = |xs: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = build(&mut tape, &vars);
        tape.value(out).item()
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars);
    let grads = tape.backward(out).expect("backward");

    for (i, input) in inputs.iter().enumerate() {
        let zero = Tensor::zeros(input.shape());
        let analytic = grads.wrt(vars[i]).unwrap_or(&zero);
        for j in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += H;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= H;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * H);
            let an = analytic.data()[j];
            assert!(
                rel_err(fd, an) < TOL,
                "{name}: input {i} element {j}: fd {fd} vs analytic {an}"
            );
        }
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let data = (0..shape.iter().product())
        .map(|_| rng.random_range(-2.0..2.0))
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Values bounded away from zero, for relu and norm kinks.
fn rand_tensor_off_kink(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let data = (0..shape.iter().product())
        .map(|_| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            sign * rng.random_range(0.2..2.0)
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

const SEEDS: u64 = 10;

#[test]
fn elementwise_and_reduction_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = [rng.random_range(1..5usize), rng.random_range(1..5usize)];
        let a = rand_tensor(&mut rng, &shape);
        let b = rand_tensor(&mut rng, &shape);
        let p = rand_tensor(&mut rng, &shape);
        check_gradients("add+mul+scale", &[a, b, p], |tape, vars| {
            let sum = tape.add(vars[0], vars[1]).unwrap();
            let scaled = tape.scale(sum, 1.75).unwrap();
            let prod = tape.mul(scaled, vars[2]).unwrap();
            tape.reduce_sum(prod).unwrap()
        });
    }
}

#[test]
fn relu_and_reshape_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = rand_tensor_off_kink(&mut rng, &[3, 4]);
        let p = rand_tensor(&mut rng, &[2, 6]);
        check_gradients("relu+reshape", &[x, p], |tape, vars| {
            let r = tape.relu(vars[0]).unwrap();
            let flat = tape.reshape(r, &[2, 6]).unwrap();
            let prod = tape.mul(flat, vars[1]).unwrap();
            tape.reduce_sum(prod).unwrap()
        });
    }
}

#[test]
fn softmax_gradients_all_axes() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let shape = [2usize, 3, 2];
        for axis in 0..shape.len() {
            let x = rand_tensor(&mut rng, &shape);
            let p = rand_tensor(&mut rng, &shape);
            check_gradients("softmax", &[x, p], |tape, vars| {
                let s = tape.softmax(vars[0], axis).unwrap();
                let prod = tape.mul(s, vars[1]).unwrap();
                tape.reduce_sum(prod).unwrap()
            });
        }
    }
}

#[test]
fn norm_along_axis_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let x = rand_tensor_off_kink(&mut rng, &[3, 4]);
        let p = rand_tensor(&mut rng, &[3]);
        check_gradients("norm_along_axis", &[x, p], |tape, vars| {
            let n = tape.norm_along_axis(vars[0], 1).unwrap();
            let prod = tape.mul(n, vars[1]).unwrap();
            tape.reduce_sum(prod).unwrap()
        });
    }
}

#[test]
fn conv2d_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let spec = ConvSpec::new(2, 2, 3, 2).unwrap();
        let x = rand_tensor(&mut rng, &[2, 6, 6]);
        let w = rand_tensor(&mut rng, &[2, 2, 3, 3]);
        let b = rand_tensor(&mut rng, &[2]);
        let p = rand_tensor(&mut rng, &[2, 2, 2]);
        check_gradients("conv2d", &[x, w, b, p], move |tape, vars| {
            let y = tape.conv(vars[0], vars[1], vars[2], &spec).unwrap();
            let prod = tape.mul(y, vars[3]).unwrap();
            tape.reduce_sum(prod).unwrap()
        });
    }
}

#[test]
fn conv3d_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let spec = ConvSpec::new(1, 2, 2, 2).unwrap();
        let x = rand_tensor(&mut rng, &[1, 4, 4, 4]);
        let w = rand_tensor(&mut rng, &[2, 1, 2, 2, 2]);
        let b = rand_tensor(&mut rng, &[2]);
        let p = rand_tensor(&mut rng, &[2, 2, 2, 2]);
        check_gradients("conv3d", &[x, w, b, p], move |tape, vars| {
            let y = tape.conv(vars[0], vars[1], vars[2], &spec).unwrap();
            let prod = tape.mul(y, vars[3]).unwrap();
            tape.reduce_sum(prod).unwrap()
        });
    }
}

#[test]
fn conv_zero_upstream_gives_zero_gradients() {
    // Projecting with zeros makes every upstream gradient zero; linearity
    // then forces all conv gradients to zero.
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let spec = ConvSpec::new(1, 1, 2, 1).unwrap();
    let x = rand_tensor(&mut rng, &[1, 3, 3]);
    let w = rand_tensor(&mut rng, &[1, 1, 2, 2]);
    let b = rand_tensor(&mut rng, &[1]);

    let mut tape = Tape::new();
    let xv = tape.leaf(x);
    let wv = tape.leaf(w);
    let bv = tape.leaf(b);
    let pv = tape.leaf(Tensor::zeros(&[1, 2, 2]));
    let y = tape.conv(xv, wv, bv, &spec).unwrap();
    let prod = tape.mul(y, pv).unwrap();
    let out = tape.reduce_sum(prod).unwrap();
    let grads = tape.backward(out).unwrap();
    for var in [xv, wv, bv] {
        assert!(grads.wrt(var).unwrap().data().iter().all(|&g| g == 0.0));
    }
}

#[test]
fn conv_bias_gradient_is_upstream_sum_per_filter() {
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    let spec = ConvSpec::new(1, 2, 2, 1).unwrap();
    let x = rand_tensor(&mut rng, &[1, 3, 3]);
    let w = rand_tensor(&mut rng, &[2, 1, 2, 2]);
    let b = rand_tensor(&mut rng, &[2]);
    let p = rand_tensor(&mut rng, &[2, 2, 2]);

    let mut tape = Tape::new();
    let xv = tape.leaf(x);
    let wv = tape.leaf(w);
    let bv = tape.leaf(b);
    let pv = tape.leaf(p.clone());
    let y = tape.conv(xv, wv, bv, &spec).unwrap();
    let prod = tape.mul(y, pv).unwrap();
    let out = tape.reduce_sum(prod).unwrap();
    let grads = tape.backward(out).unwrap();

    // Upstream gradient of the conv output equals the projection tensor.
    let gb = grads.wrt(bv).unwrap();
    for oc in 0..2 {
        let expected: f64 = p.data()[oc * 4..(oc + 1) * 4].iter().sum();
        assert!((gb.data()[oc] - expected).abs() < 1e-12);
    }
}

#[test]
fn capsule_transform_and_mix_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let (n, k, dout, din) = (3, 2, 3, 2);
        let u = rand_tensor(&mut rng, &[n, din]);
        let w = rand_tensor(&mut rng, &[n, k, dout, din]);
        let p = rand_tensor(&mut rng, &[k, dout]);
        let coeffs = {
            // rows of positive couplings summing to one
            let mut data = Vec::new();
            for _ in 0..n {
                let a: f64 = rng.random_range(0.05..0.95);
                data.extend([a, 1.0 - a]);
            }
            Tensor::from_vec(&[n, k], data).unwrap()
        };
        check_gradients("capsule_transform+class_mix", &[u, w, p], move |tape, vars| {
            let preds = tape.capsule_transform(vars[0], vars[1]).unwrap();
            let mixed = tape.class_mix(preds, &coeffs).unwrap();
            let prod = tape.mul(mixed, vars[2]).unwrap();
            tape.reduce_sum(prod).unwrap()
        });
    }
}

#[test]
fn capsule_reshape_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let (maps, dim) = (2usize, 3usize);
        let x = rand_tensor(&mut rng, &[maps * dim, 2, 2]);
        let p = rand_tensor(&mut rng, &[maps * 4, dim]);
        check_gradients("capsule_reshape", &[x, p], move |tape, vars| {
            let caps = tape.capsule_reshape(vars[0], maps, dim).unwrap();
            let prod = tape.mul(caps, vars[1]).unwrap();
            tape.reduce_sum(prod).unwrap()
        });
    }
}

#[test]
fn squash_rows_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let x = rand_tensor_off_kink(&mut rng, &[3, 4]);
        let p = rand_tensor(&mut rng, &[3, 4]);
        check_gradients("squash_rows", &[x, p], |tape, vars| {
            let v = tape.squash_rows(vars[0]).unwrap();
            let prod = tape.mul(v, vars[1]).unwrap();
            tape.reduce_sum(prod).unwrap()
        });
    }
}

#[test]
fn hinge_loss_gradients_off_kink() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + seed);
        // Scores spread apart so neither the max(0, .) boundary nor an
        // argmax tie sits within h of the sample.
        let k = rng.random_range(2..5usize);
        let true_class = rng.random_range(0..k);
        let mut scores: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (i, s) in scores.iter_mut().enumerate() {
            *s += i as f64 * 0.2;
        }
        let margin: f64 = 1.0 + scores
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != true_class)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max)
            - scores[true_class];
        if margin.abs() < 0.05 {
            continue;
        }
        let x = Tensor::from_vec(&[k], scores).unwrap();
        check_gradients("hinge", &[x], move |tape, vars| {
            tape.hinge_loss(vars[0], true_class).unwrap()
        });
    }
}

#[test]
fn logcosh_loss_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let k = rng.random_range(2..5usize);
        let x = rand_tensor(&mut rng, &[k]);
        let mut target = Tensor::zeros(&[k]);
        target.data_mut()[rng.random_range(0..k)] = 1.0;
        check_gradients("logcosh", &[x], move |tape, vars| {
            tape.logcosh_loss(vars[0], &target).unwrap()
        });
    }
}
