//! Finite-difference checks of the tape and of the full model gradient.

mod common;

use l2lab::model::{init_params, ModelConfig, Mode};
use l2lab::tensor::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{micro_batch, model_grad_check, rel_err};

const H: f64 = 1e-4;

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Checks d(loss)/d(input) for a graph built by `f` from the given inputs.
fn check_op<F>(inputs: Vec<Tensor<f64>>, f: F)
where
    F: Fn(&mut Tape<'_, f64>, &[Var]) -> Var,
{
    let eval = |ins: &[Tensor<f64>]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ins.iter().map(|t| tape.param(t)).collect();
        let out = f(&mut tape, &vars);
        tape.value(out).sum()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t)).collect();
    let out = f(&mut tape, &vars);
    let loss = tape.sum(out).unwrap();
    let grads = tape.backward(loss).unwrap();

    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(inputs[i].shape()));
        for j in 0..inputs[i].len() {
            let mut plus = inputs.clone();
            plus[i].data_mut()[j] += H;
            let mut minus = inputs.clone();
            minus[i].data_mut()[j] -= H;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * H);
            let a = analytic.data()[j];
            assert!(
                rel_err(a, numeric) < 1e-6,
                "input {i} element {j}: analytic {a} vs numeric {numeric}"
            );
        }
    }
}

#[test]
fn matmul_variants() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    check_op(vec![rand_tensor(&[3, 4], &mut rng), rand_tensor(&[4, 2], &mut rng)], |t, v| {
        t.matmul(v[0], v[1]).unwrap()
    });
    check_op(vec![rand_tensor(&[3, 4], &mut rng), rand_tensor(&[5, 4], &mut rng)], |t, v| {
        t.matmul_nt(v[0], v[1]).unwrap()
    });
}

#[test]
fn elementwise_and_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = rand_tensor(&[2, 3], &mut rng);
    let b = rand_tensor(&[2, 3], &mut rng);
    let w = rand_tensor(&[2, 3], &mut rng);
    check_op(vec![a.clone(), b.clone(), w.clone()], |t, v| {
        let m = t.mul(v[0], v[1]).unwrap();
        let s = t.add(m, v[1]).unwrap();
        let s = t.scale(s, 0.7).unwrap();
        t.mul(s, v[2]).unwrap()
    });
    let bias = rand_tensor(&[3], &mut rng);
    check_op(vec![a.clone(), bias, w.clone()], |t, v| {
        let y = t.add_row(v[0], v[1]).unwrap();
        t.mul(y, v[2]).unwrap()
    });
}

#[test]
fn layer_norm_and_gelu() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_tensor(&[3, 5], &mut rng);
    let g = rand_tensor(&[5], &mut rng);
    let b = rand_tensor(&[5], &mut rng);
    let w = rand_tensor(&[3, 5], &mut rng);
    check_op(vec![x.clone(), g, b, w.clone()], |t, v| {
        let y = t.layer_norm(v[0], v[1], v[2], 1e-12).unwrap();
        t.mul(y, v[3]).unwrap()
    });
    check_op(vec![x, w], |t, v| {
        let y = t.gelu(v[0]).unwrap();
        t.mul(y, v[1]).unwrap()
    });
}

#[test]
fn softmax_and_masked_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = rand_tensor(&[2, 4], &mut rng);
    let w = rand_tensor(&[2, 4], &mut rng);
    check_op(vec![x.clone(), w.clone()], |t, v| {
        let y = t.softmax(v[0]).unwrap();
        t.mul(y, v[1]).unwrap()
    });
    check_op(vec![x, w], |t, v| {
        let y = t.masked_softmax(v[0], &[true, false, true, true]).unwrap();
        t.mul(y, v[1]).unwrap()
    });
}

#[test]
fn indexing_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let table = rand_tensor(&[6, 3], &mut rng);
    let w = rand_tensor(&[4, 3], &mut rng);
    check_op(vec![table.clone(), w.clone()], |t, v| {
        let e = t.embedding(v[0], &[1, 4, 1, 0]).unwrap();
        t.mul(e, v[1]).unwrap()
    });
    check_op(vec![table.clone(), w], |t, v| {
        let g = t.gather_rows(v[0], &[5, 2, 2, 0]).unwrap();
        t.mul(g, v[1]).unwrap()
    });
    let a = rand_tensor(&[3, 2], &mut rng);
    let c = rand_tensor(&[3, 3], &mut rng);
    let w = rand_tensor(&[3, 4], &mut rng);
    check_op(vec![a, c, w], |t, v| {
        let cat = t.concat_cols(&[v[0], v[1]]).unwrap();
        let s = t.slice_cols(cat, 1, 4).unwrap();
        t.mul(s, v[2]).unwrap()
    });
}

#[test]
fn cross_entropy_and_dropout() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    check_op(vec![rand_tensor(&[3, 5], &mut rng)], |t, v| {
        t.cross_entropy_sum(v[0], &[0, 4, 2]).unwrap()
    });
    let x = rand_tensor(&[4, 4], &mut rng);
    check_op(vec![x], |t, v| {
        let mut r = ChaCha8Rng::seed_from_u64(99);
        let y = t.dropout(v[0], 0.3, &mut r).unwrap();
        t.mul(y, v[0]).unwrap()
    });
}

#[test]
fn closed_form_matmul_gradient() {
    // y = W x, loss = sum(y): dW[i][j] = x[j] for every row i.
    let w = Tensor::from_vec(vec![2, 3], vec![0.5, -1.0, 2.0, 0.0, 1.5, -0.5]).unwrap();
    let x = Tensor::from_vec(vec![3, 1], vec![1.0, 2.0, 3.0]).unwrap();
    let mut tape = Tape::new();
    let wv = tape.param(&w);
    let xv = tape.constant(x);
    let y = tape.matmul(wv, xv).unwrap();
    let loss = tape.sum(y).unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(wv).unwrap().data(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
    assert!(g.get(xv).is_none());
}

#[test]
fn constant_loss_has_zero_gradient() {
    let w = Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap();
    let mut tape = Tape::new();
    let wv = tape.param(&w);
    let z = tape.scale(wv, 0.0).unwrap();
    let loss = tape.sum(z).unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(wv).unwrap().data(), &[0.0, 0.0]);
}

#[test]
fn non_scalar_loss_rejected() {
    let w = Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap();
    let mut tape = Tape::new();
    let wv = tape.param(&w);
    assert!(tape.backward(wv).is_err());
}

#[test]
fn micro_model_matches_finite_differences() {
    let cfg = ModelConfig {
        vocab_size: 11,
        emb_dim: 16,
        ffn_dim: 24,
        n_layers: 2,
        n_heads: 2,
        max_positions: 12,
        ..ModelConfig::default()
    };
    let params = init_params::<f64>(&cfg, 5).unwrap();
    let batch = micro_batch(&cfg, 2, 7);
    let worst = model_grad_check(&params, &batch, Mode::Train { key: 17 }, H);
    assert!(worst < 1e-4, "max relative error {worst}");
}
