use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, NdFloat};

use super::params::ProjectionParams;
use super::SdmgError;

/// Max-shifted softmax of a vector.
pub fn softmax<F: NdFloat>(scores: ArrayView1<F>) -> Array1<F> {
    let max = scores.fold(F::neg_infinity(), |m, &x| m.max(x));
    let exp = scores.mapv(|x| (x - max).exp());
    let sum = exp.sum();
    exp / sum
}

pub fn softmax_rows<F: NdFloat>(scores: &Array2<F>) -> Array2<F> {
    let mut out = scores.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let s = softmax(row.view());
        row.assign(&s);
    }
    out
}

fn check_len(what: &str, got: usize, expected: usize) -> Result<(), SdmgError> {
    if got != expected {
        return Err(SdmgError::DimensionMismatch(format!(
            "{what} has length {got}, expected {expected}"
        )));
    }
    Ok(())
}

/// Query, key and value vectors from the visual and text CLS features.
#[derive(Debug, Clone, PartialEq)]
pub struct Qkv<F> {
    pub q: Array1<F>,
    pub k: Array1<F>,
    pub v: Array1<F>,
}

/// `Q = W_q V`, `K = W_k T`, `V_f = W_v V`.
pub fn project_qkv<F: NdFloat>(
    visual: ArrayView1<F>,
    text: ArrayView1<F>,
    params: &ProjectionParams<F>,
) -> Result<Qkv<F>, SdmgError> {
    check_len("visual feature", visual.len(), params.d_v())?;
    check_len("text feature", text.len(), params.d_t())?;
    Ok(Qkv {
        q: params.w_q.dot(&visual),
        k: params.w_k.dot(&text),
        v: params.w_v.dot(&visual),
    })
}

/// Scaled dot-product attention with a single query and a single key.
///
/// The softmax runs over one score, so its weight is exactly 1 and the result
/// is `V_f` itself whatever `Q` and `K` are.
pub fn tsa_attend_literal<F: NdFloat>(
    q: ArrayView1<F>,
    k: ArrayView1<F>,
    v: ArrayView1<F>,
) -> Result<Array1<F>, SdmgError> {
    let d = q.len();
    check_len("key", k.len(), d)?;
    check_len("value", v.len(), d)?;
    let score = q.dot(&k) / F::from(d).expect("dim fits").sqrt();
    let weights = softmax(Array1::from_elem(1, score).view());
    Ok(v.mapv(|x| weights[0] * x))
}

fn project_rows<F: NdFloat>(rows: ArrayView2<F>, w: &Array2<F>) -> Array2<F> {
    let mut out = Array2::zeros((rows.nrows(), w.nrows()));
    for (mut dst, src) in out.axis_iter_mut(Axis(0)).zip(rows.axis_iter(Axis(0))) {
        dst.assign(&w.dot(&src));
    }
    out
}

/// Pooled attention output together with its softmax weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledAttention<F> {
    pub output: Array1<F>,
    pub weights: Array1<F>,
    pub scores: Array1<F>,
    /// Projected value rows `W_v v_m`, one per visual token.
    pub values: Array2<F>,
}

/// Text-keyed attention over `M` visual tokens.
///
/// `s_m = (W_q v_m) . (W_k T) / sqrt(d)`, `a = softmax(s)`,
/// `out = sum_m a_m W_v v_m`. With `M = 1` this is the single-token form.
pub fn tsa_attend_pooled<F: NdFloat>(
    visual_tokens: ArrayView2<F>,
    text: ArrayView1<F>,
    params: &ProjectionParams<F>,
) -> Result<PooledAttention<F>, SdmgError> {
    if visual_tokens.nrows() == 0 {
        return Err(SdmgError::DimensionMismatch("no visual tokens".into()));
    }
    check_len("visual token", visual_tokens.ncols(), params.d_v())?;
    check_len("text feature", text.len(), params.d_t())?;
    let d = F::from(params.d()).expect("dim fits");
    let key = params.w_k.dot(&text);
    // Row-wise matrix-vector products, the same arithmetic as `project_qkv`, so
    // a single token reproduces the literal form bit for bit.
    let queries = project_rows(visual_tokens, &params.w_q);
    let values = project_rows(visual_tokens, &params.w_v);
    let scores = queries.dot(&key) / d.sqrt();
    let weights = softmax(scores.view());
    let mut output = Array1::zeros(params.d());
    for (m, row) in values.axis_iter(Axis(0)).enumerate() {
        output.scaled_add(weights[m], &row);
    }
    Ok(PooledAttention {
        output,
        weights,
        scores,
        values,
    })
}
