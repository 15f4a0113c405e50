//! Straight-line re-implementation of the encoder with plain loops. It shares
//! nothing with the library's tape; it only reads parameters by name.

use l2lab::model::{ModelParams, Sequence};
use l2lab::tokenizer::{MASK_ID, PAD_ID};

type Mat = Vec<Vec<f64>>;

fn p<'a>(params: &'a ModelParams<f64>, name: &str) -> &'a [f64] {
    params.get(name).unwrap_or_else(|| panic!("missing {name}")).data()
}

fn rows_of(data: &[f64], cols: usize) -> Mat {
    data.chunks(cols).map(|c| c.to_vec()).collect()
}

fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let m = b[0].len();
    a.iter()
        .map(|row| {
            (0..m)
                .map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum())
                .collect()
        })
        .collect()
}

fn add_bias(a: &mut Mat, bias: &[f64]) {
    for row in a {
        for (x, b) in row.iter_mut().zip(bias) {
            *x += b;
        }
    }
}

fn norm_rows(a: &Mat, g: &[f64], b: &[f64]) -> Mat {
    a.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let sd = (var + 1e-12).sqrt();
            row.iter()
                .enumerate()
                .map(|(j, x)| (x - mean) / sd * g[j] + b[j])
                .collect()
        })
        .collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Eval-mode logits over the vocabulary at every non-pad column of `seq`.
pub fn logits(params: &ModelParams<f64>, seq: &Sequence) -> Mat {
    let cfg = &params.config;
    let d = cfg.emb_dim;
    let cols: Vec<usize> = (0..seq.ids.len()).filter(|&c| seq.ids[c] != PAD_ID).collect();
    let tok = p(params, "tok_emb");
    let pos = p(params, "pos_emb");
    let lang = p(params, "lang_emb");
    let mut x: Mat = cols
        .iter()
        .map(|&c| {
            let (t, q, l) = (seq.ids[c] as usize, seq.positions[c] as usize, seq.langs[c] as usize);
            (0..d).map(|j| tok[t * d + j] + pos[q * d + j] + lang[l * d + j]).collect()
        })
        .collect();
    x = norm_rows(&x, p(params, "emb_ln.g"), p(params, "emb_ln.b"));

    let heads = cfg.n_heads;
    let dh = d / heads;
    for l in 0..cfg.n_layers {
        let name = |s: &str| format!("layers.{l}.{s}");
        let proj = |x: &Mat, w: &str| {
            let mut y = mat_mul(x, &rows_of(p(params, &name(&format!("{w}.w"))), d));
            add_bias(&mut y, p(params, &name(&format!("{w}.b"))));
            y
        };
        let q = proj(&x, "attn.q");
        let k = proj(&x, "attn.k");
        let v = proj(&x, "attn.v");
        let n = x.len();
        let mut ctx = vec![vec![0.0; d]; n];
        for h in 0..heads {
            for i in 0..n {
                let scores: Vec<f64> = (0..n)
                    .map(|j| (0..dh).map(|e| q[i][h * dh + e] * k[j][h * dh + e]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let w = softmax(&scores);
                for e in 0..dh {
                    ctx[i][h * dh + e] = (0..n).map(|j| w[j] * v[j][h * dh + e]).sum();
                }
            }
        }
        let attn = proj(&ctx, "attn.o");
        let res: Mat = x.iter().zip(&attn).map(|(a, b)| a.iter().zip(b).map(|(u, w)| u + w).collect()).collect();
        x = norm_rows(&res, p(params, &name("ln1.g")), p(params, &name("ln1.b")));

        let mut hmid = mat_mul(&x, &rows_of(p(params, &name("ffn.w1")), cfg.ffn_dim));
        add_bias(&mut hmid, p(params, &name("ffn.b1")));
        for row in hmid.iter_mut() {
            for v in row.iter_mut() {
                *v = gelu(*v);
            }
        }
        let mut out = mat_mul(&hmid, &rows_of(p(params, &name("ffn.w2")), d));
        add_bias(&mut out, p(params, &name("ffn.b2")));
        let res: Mat = x.iter().zip(&out).map(|(a, b)| a.iter().zip(b).map(|(u, w)| u + w).collect()).collect();
        x = norm_rows(&res, p(params, &name("ln2.g")), p(params, &name("ln2.b")));
    }

    let w = if cfg.tie_output { p(params, "tok_emb") } else { p(params, "out.w") };
    let bias = p(params, "out.b");
    x.iter()
        .map(|h| {
            (0..cfg.vocab_size)
                .map(|t| (0..d).map(|j| h[j] * w[t * d + j]).sum::<f64>() + bias[t])
                .collect()
        })
        .collect()
}

/// `log p(w_t | rest)` by masking column `t` and normalizing over the full
/// vocabulary.
pub fn token_logprob(params: &ModelParams<f64>, seq: &Sequence, t: usize) -> f64 {
    let original = seq.ids[t] as usize;
    let mut masked = seq.clone();
    masked.ids[t] = MASK_ID;
    let all = logits(params, &masked);
    let col = (0..t).filter(|&c| seq.ids[c] != PAD_ID).count();
    let row = &all[col];
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
    row[original] - max - z.ln()
}

/// Pseudo-perplexity over the interior positions (everything between the
/// sentence markers), computed one position at a time.
pub fn pppl(params: &ModelParams<f64>, seq: &Sequence) -> f64 {
    let positions: Vec<usize> = (1..seq.ids.len() - 1).collect();
    let total: f64 = positions.iter().map(|&t| token_logprob(params, seq, t)).sum();
    (-total / positions.len() as f64).exp()
}
