//! Symmetric in-batch contrastive loss over cosine similarities, with an
//! analytic gradient for the two linear projections of the toy encoder.

#[derive(Debug, Clone, PartialEq)]
pub struct LossAndGrad {
    pub loss: f64,
    /// Same row-major layout as the image projection.
    pub image_grad: Vec<f64>,
    /// Same row-major layout as the text projection.
    pub text_grad: Vec<f64>,
}

fn normalize(v: &[f64]) -> (Vec<f64>, f64) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    (v.iter().map(|x| x / n).collect(), n)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Loss plus its gradient with respect to the raw (unnormalized) embeddings.
fn embedding_loss(
    images: &[Vec<f64>],
    texts: &[Vec<f64>],
    logit_scale: f64,
) -> (f64, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = images.len();
    assert_eq!(n, texts.len(), "one text per image");
    let (u, un): (Vec<_>, Vec<_>) = images.iter().map(|v| normalize(v)).unzip();
    let (v, vn): (Vec<_>, Vec<_>) = texts.iter().map(|t| normalize(t)).unzip();

    let logits: Vec<Vec<f64>> = u
        .iter()
        .map(|ui| v.iter().map(|vj| logit_scale * dot(ui, vj)).collect())
        .collect();

    // Row softmax: image -> text. Column softmax: text -> image.
    let mut loss = 0.0;
    let mut p_row = vec![vec![0.0; n]; n];
    for i in 0..n {
        let m = logits[i].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits[i].iter().map(|s| (s - m).exp()).sum();
        for j in 0..n {
            p_row[i][j] = (logits[i][j] - m).exp() / z;
        }
        loss -= logits[i][i] - m - z.ln();
    }
    let mut p_col = vec![vec![0.0; n]; n];
    for j in 0..n {
        let m = (0..n)
            .map(|i| logits[i][j])
            .fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = (0..n).map(|i| (logits[i][j] - m).exp()).sum();
        for i in 0..n {
            p_col[i][j] = (logits[i][j] - m).exp() / z;
        }
        loss -= logits[j][j] - m - z.ln();
    }
    loss /= 2.0 * n as f64;

    // dL/dlogits
    let g: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    (p_row[i][j] - delta + p_col[i][j] - delta) / (2.0 * n as f64)
                })
                .collect()
        })
        .collect();

    let dim = u.first().map_or(0, Vec::len);
    let back = |unit: &[f64], norm: f64, grad_unit: Vec<f64>| -> Vec<f64> {
        let proj = dot(unit, &grad_unit);
        grad_unit
            .iter()
            .zip(unit)
            .map(|(gu, uu)| (gu - uu * proj) / norm)
            .collect()
    };
    let d_img = (0..n)
        .map(|i| {
            let mut gu = vec![0.0; dim];
            for j in 0..n {
                for (k, x) in gu.iter_mut().enumerate() {
                    *x += logit_scale * g[i][j] * v[j][k];
                }
            }
            back(&u[i], un[i], gu)
        })
        .collect();
    let d_txt = (0..n)
        .map(|j| {
            let mut gv = vec![0.0; dim];
            for i in 0..n {
                for (k, x) in gv.iter_mut().enumerate() {
                    *x += logit_scale * g[i][j] * u[i][k];
                }
            }
            back(&v[j], vn[j], gv)
        })
        .collect();
    (loss, d_img, d_txt)
}

/// Mean of image-to-text and text-to-image cross-entropy, where pair `i`
/// of the batch is the positive for row and column `i`.
pub fn contrastive_loss(
    image_embeddings: &[Vec<f64>],
    text_embeddings: &[Vec<f64>],
    logit_scale: f64,
) -> f64 {
    embedding_loss(image_embeddings, text_embeddings, logit_scale).0
}

fn project(weights: &[f64], dim: usize, x: &[f64]) -> Vec<f64> {
    weights
        .chunks_exact(x.len())
        .take(dim)
        .map(|row| dot(row, x))
        .collect()
}

/// Loss and gradient w.r.t. both projection matrices (row-major,
/// `embed_dim` rows) for one batch of fixed features.
pub fn contrastive_loss_and_grad(
    image_projection: &[f64],
    text_projection: &[f64],
    embed_dim: usize,
    image_features: &[Vec<f64>],
    text_features: &[Vec<f64>],
    logit_scale: f64,
) -> LossAndGrad {
    let img_emb: Vec<Vec<f64>> = image_features
        .iter()
        .map(|f| project(image_projection, embed_dim, f))
        .collect();
    let txt_emb: Vec<Vec<f64>> = text_features
        .iter()
        .map(|f| project(text_projection, embed_dim, f))
        .collect();
    let (loss, d_img, d_txt) = embedding_loss(&img_emb, &txt_emb, logit_scale);

    let outer = |grads: &[Vec<f64>], feats: &[Vec<f64>], len: usize| {
        let mut out = vec![0.0; len];
        for (g, f) in grads.iter().zip(feats) {
            let cols = f.len();
            for (r, gr) in g.iter().enumerate() {
                let row = &mut out[r * cols..(r + 1) * cols];
                for (o, x) in row.iter_mut().zip(f) {
                    *o += gr * x;
                }
            }
        }
        out
    };
    LossAndGrad {
        loss,
        image_grad: outer(&d_img, image_features, image_projection.len()),
        text_grad: outer(&d_txt, text_features, text_projection.len()),
    }
}
