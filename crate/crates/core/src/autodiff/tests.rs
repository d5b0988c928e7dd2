use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn t2(rows: &[&[f64]]) -> Tensor {
    Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Builds `f` on fresh leaves, reduces the output with fixed random weights,
/// and compares tape gradients against central differences.
fn gradcheck<F>(inputs: &[Tensor], seed: u64, f: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let eps = 1e-5;
    let eval = |vals: &[Tensor]| -> (f64, Option<Vec<Tensor>>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|v| tape.param(v.clone())).collect();
        let out = f(&mut tape, &vars);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
        let weights = random(tape.value(out).shape(), &mut rng);
        let w = tape.constant(weights);
        let prod = tape.mul(out, w).unwrap();
        let loss = tape.sum(prod);
        let value = tape.value(loss).item();
        tape.backward(loss).unwrap();
        let grads = vars
            .iter()
            .map(|&v| {
                tape.grad(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
            })
            .collect();
        (value, Some(grads))
    };
    let (_, grads) = eval(inputs);
    let grads = grads.unwrap();
    let mut worst: f64 = 0.0;
    for (which, input) in inputs.iter().enumerate() {
        for idx in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[which].data_mut()[idx] += eps;
            let mut minus = inputs.to_vec();
            minus[which].data_mut()[idx] -= eps;
            let numeric = (eval(&plus).0 - eval(&minus).0) / (2.0 * eps);
            let analytic = grads[which].data()[idx];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-2);
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn matmul_examples() {
    let mut tape = Tape::new();
    let i2 = tape.constant(Tensor::identity(2));
    let a = tape.constant(t2(&[&[1.0, 2.0], &[3.0, 4.0]]));
    let p = tape.constant(t2(&[&[0.0, 1.0], &[1.0, 0.0]]));
    let ia = tape.matmul(i2, a).unwrap();
    assert_eq!(tape.value(ia), tape.value(a));
    let ap = tape.matmul(a, p).unwrap();
    assert_eq!(tape.value(ap), &t2(&[&[2.0, 1.0], &[4.0, 3.0]]));

    let x = tape.constant(Tensor::zeros(&[2, 3]));
    let y = tape.constant(Tensor::zeros(&[2, 3]));
    let err = tape.matmul(x, y).unwrap_err().to_string();
    assert!(err.contains("[2, 3]"), "{err}");
}

#[test]
fn sparse_matmul_examples() {
    let mut tape = Tape::new();
    let d = tape.constant(random(&[2, 3], &mut ChaCha8Rng::seed_from_u64(1)));
    let z = tape
        .sparse_matmul(Arc::new(SparseMatrix::empty(2, 2)), d)
        .unwrap();
    assert!(tape.value(z).data().iter().all(|&v| v == 0.0));

    let swap = Arc::new(SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap());
    let eye = tape.constant(Tensor::identity(2));
    let out = tape.sparse_matmul(swap, eye).unwrap();
    assert_eq!(tape.value(out), &t2(&[&[0.0, 1.0], &[1.0, 0.0]]));

    let s = Arc::new(SparseMatrix::empty(3, 2));
    let d = tape.constant(Tensor::zeros(&[3, 4]));
    assert!(matches!(tape.sparse_matmul(s, d), Err(crate::Error::Shape(_))));
}

#[test]
fn activation_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap());
    let r = tape.relu(x);
    assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);
    let rr = tape.relu(r);
    assert_eq!(tape.value(rr), tape.value(r));

    let z = tape.constant(Tensor::new(vec![1], vec![0.0]).unwrap());
    let s = tape.sigmoid(z);
    assert_eq!(tape.value(s).data(), &[0.5]);

    let logits = tape.constant(t2(&[&[2f64.ln(), 1f64.ln()]]));
    let sm = tape.softmax_rows(logits).unwrap();
    assert!((tape.value(sm).at(0, 0) - 2.0 / 3.0).abs() < 1e-12);
    assert!((tape.value(sm).at(0, 1) - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn softmax_rows_sum_to_one_and_sigmoid_in_open_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut tape = Tape::new();
    let x = tape.constant(random(&[7, 5], &mut rng).map(|v| v * 30.0));
    let sm = tape.softmax_rows(x).unwrap();
    for i in 0..7 {
        let s: f64 = tape.value(sm).row(i).iter().sum();
        assert!((s - 1.0).abs() <= 1e-9);
    }
    let sg = tape.sigmoid(x);
    assert!(tape.value(sg).data().iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn batchnorm_examples() {
    let mut tape = Tape::new();
    let mut stats = BatchNormStats::new(1);
    let x = tape.constant(t2(&[&[1.0], &[3.0]]));
    let y = tape.batchnorm(x, &mut stats, Mode::Train).unwrap();
    // mean 2, population variance 1
    assert!((tape.value(y).at(0, 0) + 1.0).abs() < 1e-5);
    assert!((tape.value(y).at(1, 0) - 1.0).abs() < 1e-5);
    assert!((stats.running_mean[0] - 0.2).abs() < 1e-12);

    let mut stats = BatchNormStats::new(2);
    let c = tape.constant(t2(&[&[4.0, 1.0], &[4.0, 2.0], &[4.0, 6.0]]));
    let y = tape.batchnorm(c, &mut stats, Mode::Train).unwrap();
    for i in 0..3 {
        assert_eq!(tape.value(y).at(i, 0), 0.0);
    }

    let one = tape.constant(t2(&[&[1.0, 2.0]]));
    assert!(matches!(
        tape.batchnorm(one, &mut stats, Mode::Train),
        Err(crate::Error::Contract(_))
    ));
    assert!(tape.batchnorm(one, &mut stats, Mode::Eval).is_ok());
}

#[test]
fn batchnorm_train_output_is_standardised() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut tape = Tape::new();
    let mut stats = BatchNormStats::new(4);
    let x = tape.constant(random(&[9, 4], &mut rng).map(|v| 3.0 * v + 2.0));
    let y = tape.batchnorm(x, &mut stats, Mode::Train).unwrap();
    let v = tape.value(y);
    for j in 0..4 {
        let col: Vec<f64> = (0..9).map(|i| v.at(i, j)).collect();
        let mean = col.iter().sum::<f64>() / 9.0;
        let var = col.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / 9.0;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-3, "eps shrinks the variance slightly: {var}");
    }
}

#[test]
fn dropout_contracts() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::full(&[100_000], 1.0));
    let same = tape.dropout(x, 0.0, Mode::Train, &mut rng).unwrap();
    assert_eq!(tape.value(same), tape.value(x));
    let eval = tape.dropout(x, 0.5, Mode::Eval, &mut rng).unwrap();
    assert_eq!(tape.value(eval), tape.value(x));
    assert!(matches!(
        tape.dropout(x, 1.0, Mode::Train, &mut rng),
        Err(crate::Error::Config(_))
    ));

    let d = tape.dropout(x, 0.5, Mode::Train, &mut rng).unwrap();
    let vals = tape.value(d).data();
    let survivors = vals.iter().filter(|&&v| v != 0.0).count() as f64 / vals.len() as f64;
    assert!((survivors - 0.5).abs() <= 0.01, "survivor fraction {survivors}");
    assert!(vals.iter().all(|&v| v == 0.0 || v == 2.0));
}

#[test]
fn conv_maxpool_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(vec![1, 4], vec![0.5, 3.0, -1.0, 2.0]).unwrap());
    let w = tape.constant(Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap());
    let b = tape.constant(Tensor::new(vec![1], vec![0.0]).unwrap());
    let out = conv1d_maxpool(&mut tape, x, &[ConvLayer { weight: w, bias: b }]).unwrap();
    assert_eq!(tape.value(out).shape(), &[1, 1]);
    assert_eq!(tape.value(out).item(), 3.0);

    let x = tape.constant(Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap());
    let w = tape.constant(Tensor::new(vec![1, 1, 2], vec![1.0, -1.0]).unwrap());
    let x3 = tape_reshape(&mut tape, x);
    let conv = tape.conv1d(x3, w, b).unwrap();
    assert_eq!(tape.value(conv).data(), &[-1.0, -1.0]);
    let out = conv1d_maxpool(&mut tape, x, &[ConvLayer { weight: w, bias: b }]).unwrap();
    assert_eq!(tape.value(out).item(), 0.0);

    let short = tape.constant(Tensor::zeros(&[1, 2]));
    let w4 = tape.constant(Tensor::zeros(&[1, 1, 4]));
    assert!(matches!(
        conv1d_maxpool(&mut tape, short, &[ConvLayer { weight: w4, bias: b }]),
        Err(crate::Error::Shape(_))
    ));
}

fn tape_reshape(tape: &mut Tape, x: Var) -> Var {
    let s = tape.value(x).shape().to_vec();
    tape.reshape(x, vec![1, s[0], s[1]]).unwrap()
}

#[test]
fn backward_examples() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::new(vec![2, 3], vec![0.3; 6]).unwrap());
    let s = tape.sum(x);
    tape.backward(s).unwrap();
    assert!(tape.grad(x).unwrap().data().iter().all(|&g| g == 1.0));

    let mut tape = Tape::new();
    let x = tape.param(Tensor::new(vec![2], vec![1.0, -2.0]).unwrap());
    let sq = tape.mul(x, x).unwrap();
    let s = tape.sum(sq);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[2.0, -4.0]);

    let mut tape = Tape::new();
    let x = tape.param(Tensor::zeros(&[2, 2]));
    let r = tape.relu(x);
    assert!(matches!(tape.backward(r), Err(crate::Error::Contract(_))));
}

#[test]
fn constants_receive_no_gradient() {
    let mut tape = Tape::new();
    let c = tape.constant(Tensor::full(&[2, 2], 1.0));
    let p = tape.param(Tensor::full(&[2, 2], 2.0));
    let m = tape.matmul(c, p).unwrap();
    let s = tape.sum(m);
    tape.backward(s).unwrap();
    assert!(tape.grad(c).is_none());
    assert!(tape.grad(p).is_some());
}

const TOL: f64 = 1e-4;
const SEEDS: u64 = 20;

#[test]
fn gradcheck_dense_ops() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(&[3, 4], &mut rng);
        let b = random(&[4, 2], &mut rng);
        let c = random(&[3, 4], &mut rng);
        let row = random(&[4], &mut rng);
        let checks = [
            gradcheck(&[a.clone(), b.clone()], seed, |t, v| t.matmul(v[0], v[1]).unwrap()),
            gradcheck(&[a.clone(), c.clone()], seed, |t, v| t.add(v[0], v[1]).unwrap()),
            gradcheck(&[a.clone(), c.clone()], seed, |t, v| t.mul(v[0], v[1]).unwrap()),
            gradcheck(&[a.clone(), row.clone()], seed, |t, v| t.add_row(v[0], v[1]).unwrap()),
            gradcheck(&[a.clone(), row.clone()], seed, |t, v| t.mul_row(v[0], v[1]).unwrap()),
            gradcheck(&[a.clone()], seed, |t, v| t.scale(v[0], -1.7)),
            gradcheck(&[a.clone()], seed, |t, v| t.transpose(v[0]).unwrap()),
            gradcheck(&[a.clone()], seed, |t, v| t.gather_rows(v[0], &[2, 0, 2]).unwrap()),
            gradcheck(&[a.clone(), c.clone()], seed, |t, v| t.concat_cols(&[v[0], v[1]]).unwrap()),
            gradcheck(&[a.clone(), c.clone()], seed, |t, v| t.concat_rows(&[v[1], v[0]]).unwrap()),
        ];
        for (i, err) in checks.iter().enumerate() {
            assert!(*err <= TOL, "seed {seed} check {i}: rel err {err}");
        }
    }
}

#[test]
fn gradcheck_activations() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let a = random(&[4, 5], &mut rng).map(|v| 2.0 * v);
        for kind in [
            Activation::Relu,
            Activation::Gelu,
            Activation::Sigmoid,
            Activation::SoftmaxRows,
        ] {
            let err = gradcheck(&[a.clone()], seed, |t, v| t.activation(v[0], kind).unwrap());
            assert!(err <= TOL, "seed {seed} {kind:?}: rel err {err}");
        }
    }
}

#[test]
fn gradcheck_sparse_batchnorm_dropout() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let triplets: Vec<_> = (0..6)
            .map(|i| ((i % 3, (i * 7 + seed as usize) % 5), rng.random_range(-1.0..1.0)))
            .collect::<std::collections::BTreeMap<_, _>>()
            .into_iter()
            .map(|((r, c), w)| (r, c, w))
            .collect();
        let triplets: Vec<(usize, usize, f64)> = triplets;
        let s = Arc::new(SparseMatrix::from_triplets(3, 5, &triplets).unwrap());
        let d = random(&[5, 2], &mut rng);
        let err = gradcheck(&[d], seed, |t, v| t.sparse_matmul(s.clone(), v[0]).unwrap());
        assert!(err <= TOL, "sparse seed {seed}: {err}");

        let x = random(&[6, 3], &mut rng);
        for mode in [Mode::Train, Mode::Eval] {
            let err = gradcheck(&[x.clone()], seed, |t, v| {
                let mut stats = BatchNormStats::new(3);
                stats.running_mean = vec![0.1, -0.2, 0.3];
                stats.running_var = vec![0.5, 1.5, 2.0];
                t.batchnorm(v[0], &mut stats, mode).unwrap()
            });
            assert!(err <= TOL, "batchnorm {mode:?} seed {seed}: {err}");
        }

        let err = gradcheck(&[x.clone()], seed, |t, v| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            t.dropout(v[0], 0.3, Mode::Train, &mut r).unwrap()
        });
        assert!(err <= TOL, "dropout seed {seed}: {err}");
    }
}

#[test]
fn gradcheck_conv_and_pool() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let x = random(&[2, 3, 9], &mut rng);
        let w1 = random(&[4, 3, 3], &mut rng);
        let b1 = random(&[4], &mut rng);
        let w2 = random(&[2, 4, 2], &mut rng);
        let b2 = random(&[2], &mut rng);
        let err = gradcheck(&[x, w1, b1, w2, b2], seed, |t, v| {
            conv1d_maxpool(
                t,
                v[0],
                &[
                    ConvLayer { weight: v[1], bias: v[2] },
                    ConvLayer { weight: v[3], bias: v[4] },
                ],
            )
            .unwrap()
        });
        assert!(err <= TOL, "conv seed {seed}: {err}");
    }
}

#[test]
fn gradcheck_losses() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let logits = random(&[4, 4], &mut rng).map(|v| 2.0 * v);
        let pos = [(0, 0), (1, 2), (3, 3)];
        let neg = [(0, 1), (2, 3)];
        let err = gradcheck(&[logits.clone()], seed, |t, v| {
            let p = t.sigmoid(v[0]);
            t.pair_bce(p, &pos, &neg).unwrap()
        });
        assert!(err <= TOL, "pair_bce seed {seed}: {err}");

        let mut target = Tensor::zeros(&[4, 4]);
        for k in 0..4 {
            target.set(k, (k + seed as usize) % 4, 0.7);
            target.set(k, (k + 1 + seed as usize) % 4, 0.3);
        }
        let err = gradcheck(&[logits], seed, |t, v| {
            let p = t.softmax_rows(v[0]).unwrap();
            t.cross_entropy_sum(p, &target).unwrap()
        });
        assert!(err <= TOL, "cross entropy seed {seed}: {err}");
    }
}

#[test]
fn gradcheck_composite_matmul_gelu_softmax_ce() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let x = random(&[5, 4], &mut rng);
        let w1 = random(&[4, 6], &mut rng);
        let w2 = random(&[6, 3], &mut rng);
        let mut target = Tensor::zeros(&[5, 3]);
        for k in 0..5 {
            target.set(k, rng.random_range(0..3), 1.0);
        }
        let err = gradcheck(&[x, w1, w2], seed, |t, v| {
            let h = t.matmul(v[0], v[1]).unwrap();
            let h = t.gelu(h);
            let o = t.matmul(h, v[2]).unwrap();
            let p = t.softmax_rows(o).unwrap();
            t.cross_entropy_sum(p, &target).unwrap()
        });
        assert!(err <= TOL, "composite seed {seed}: {err}");
    }
}

#[test]
fn pair_bce_empty_selection_is_zero() {
    let mut tape = Tape::new();
    let p = tape.param(Tensor::full(&[2, 2], 0.3));
    let l = tape.pair_bce(p, &[], &[]).unwrap();
    assert_eq!(tape.value(l).item(), 0.0);
}

#[test]
fn eval_forward_is_bit_identical() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut tape = Tape::new();
        let x = tape.constant(random(&[4, 3], &mut rng));
        let w = tape.param(random(&[3, 3], &mut rng));
        let h = tape.matmul(x, w).unwrap();
        let mut stats = BatchNormStats::new(3);
        let h = tape.batchnorm(h, &mut stats, Mode::Eval).unwrap();
        let h = tape.dropout(h, 0.4, Mode::Eval, &mut rng).unwrap();
        let h = tape.gelu(h);
        let out = tape.softmax_rows(h).unwrap();
        tape.value(out).clone()
    };
    let a = run();
    let b = run();
    assert_eq!(
        a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}
