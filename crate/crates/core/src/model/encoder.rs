//! Self-attention encoder over a batch of node embeddings.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AutodiffError, BoundParams, Var};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Inverted dropout; identity when `rng` is `None` or `rate` is 0.
pub(crate) fn dropout<'t>(x: Var<'t>, rate: f64, rng: Option<&mut ChaCha8Rng>) -> Result<Var<'t>, AutodiffError> {
    let Some(rng) = rng else { return Ok(x) };
    if rate <= 0.0 {
        return Ok(x);
    }
    let shape = x.shape();
    let keep = 1.0 - rate;
    let n: usize = shape.iter().product();
    let mask: Vec<f64> = (0..n).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
    x.mul(x.tape().constant(Tensor::new(shape, mask)?))
}

/// Project `e` to the model width and run `layers` post-norm transformer
/// blocks. Every node in the batch attends to every other.
pub fn attention_encode<'t>(
    e: Var<'t>,
    params: &BoundParams<'t>,
    layers: usize,
    heads: usize,
    dropout_rate: f64,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Var<'t>, AutodiffError> {
    let p = |name: String| params.get(&name);
    let mut h = e.matmul(p("enc.in.w".into())?)?.add_row(p("enc.in.b".into())?)?;
    for l in 0..layers {
        let pre = format!("enc.layer{l}");
        let q = h.matmul(p(format!("{pre}.wq"))?)?;
        let k = h.matmul(p(format!("{pre}.wk"))?)?;
        let v = h.matmul(p(format!("{pre}.wv"))?)?;
        let att = Var::attention(q, k, v, heads)?
            .matmul(p(format!("{pre}.wo"))?)?
            .add_row(p(format!("{pre}.bo"))?)?;
        let att = dropout(att, dropout_rate, rng.as_deref_mut())?;
        h = h
            .add(att)?
            .layer_norm(LAYER_NORM_EPS)
            .mul_row(p(format!("{pre}.ln1.g"))?)?
            .add_row(p(format!("{pre}.ln1.b"))?)?;
        let ff = h
            .matmul(p(format!("{pre}.ff.w1"))?)?
            .add_row(p(format!("{pre}.ff.b1"))?)?
            .relu()
            .matmul(p(format!("{pre}.ff.w2"))?)?
            .add_row(p(format!("{pre}.ff.b2"))?)?;
        let ff = dropout(ff, dropout_rate, rng.as_deref_mut())?;
        h = h
            .add(ff)?
            .layer_norm(LAYER_NORM_EPS)
            .mul_row(p(format!("{pre}.ln2.g"))?)?
            .add_row(p(format!("{pre}.ln2.b"))?)?;
    }
    Ok(h)
}
