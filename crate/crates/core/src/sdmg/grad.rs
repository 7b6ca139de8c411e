//! Analytic gradients for the fusion head and a central-difference checker.

use ndarray::{Array1, Array2, ArrayD, ArrayView1, ArrayView2, Axis, IxDyn};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::attention::{project_qkv, tsa_attend_pooled, PooledAttention};
use super::encoders::ToyVisualEncoder;
use super::fusion::{fuse, project_text, FusionMode};
use super::params::{ProjectionParams, SdmgDims, SdmgParams};
use super::visual::build_visual_input;
use super::SdmgError;

fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let a2 = a.insert_axis(Axis(1));
    let b2 = b.insert_axis(Axis(0));
    a2.dot(&b2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QkvGrads {
    pub visual: Array1<f64>,
    pub text: Array1<f64>,
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
}

/// Backward of `project_qkv` given upstream gradients for Q, K and V_f.
pub fn project_qkv_backward(
    visual: ArrayView1<f64>,
    text: ArrayView1<f64>,
    params: &ProjectionParams<f64>,
    d_q: ArrayView1<f64>,
    d_k: ArrayView1<f64>,
    d_v: ArrayView1<f64>,
) -> QkvGrads {
    QkvGrads {
        visual: params.w_q.t().dot(&d_q) + params.w_v.t().dot(&d_v),
        text: params.w_k.t().dot(&d_k),
        w_q: outer(d_q, visual),
        w_k: outer(d_k, text),
        w_v: outer(d_v, visual),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledGrads {
    pub tokens: Array2<f64>,
    pub text: Array1<f64>,
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
}

/// Backward of `tsa_attend_pooled` given the forward result and `dL/d out`.
pub fn tsa_attend_pooled_backward(
    tokens: ArrayView2<f64>,
    text: ArrayView1<f64>,
    params: &ProjectionParams<f64>,
    fwd: &PooledAttention<f64>,
    d_out: ArrayView1<f64>,
) -> PooledGrads {
    let inv_sqrt_d = 1.0 / (params.d() as f64).sqrt();
    let key = params.w_k.dot(&text);
    let queries = tokens.dot(&params.w_q.t());
    let a = &fwd.weights;
    // dL/da_m = g . value_m ; softmax Jacobian gives dL/ds.
    let u = fwd.values.dot(&d_out);
    let mean_u = a.dot(&u);
    let d_s = a * &(&u - mean_u);
    // value path
    let d_values = outer(a.view(), d_out);
    let grads_w_v = d_values.t().dot(&tokens);
    // query/key path
    let d_queries = outer(d_s.view(), key.view()) * inv_sqrt_d;
    let d_key = queries.t().dot(&d_s) * inv_sqrt_d;
    let grads_w_q = d_queries.t().dot(&tokens);
    let grads_w_k = outer(d_key.view(), text);
    let d_tokens = d_queries.dot(&params.w_q) + d_values.dot(&params.w_v);
    let d_text = params.w_k.t().dot(&d_key);
    PooledGrads {
        tokens: d_tokens,
        text: d_text,
        w_q: grads_w_q,
        w_k: grads_w_k,
        w_v: grads_w_v,
    }
}

/// Splits `dL/dF` into the visual and text halves.
pub fn fuse_backward(
    mode: FusionMode,
    visual_len: usize,
    d_fused: ArrayView1<f64>,
) -> (Array1<f64>, Array1<f64>) {
    match mode {
        FusionMode::Concat => (
            d_fused.slice(ndarray::s![..visual_len]).to_owned(),
            d_fused.slice(ndarray::s![visual_len..]).to_owned(),
        ),
        FusionMode::Add => (d_fused.to_owned(), d_fused.to_owned()),
    }
}

/// What a gradient check differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradTarget {
    /// `c_q.Q + c_k.K + c_v.V_f` w.r.t. inputs and projection weights.
    ProjectQkv,
    /// `c . pooled(tokens, T)` w.r.t. tokens, T, W_q, W_k, W_v.
    TsaPooled,
    /// `c . fuse(pooled, W_t T, concat)` w.r.t. tokens, T and all weights.
    FuseConcat,
    /// Same with additive fusion.
    FuseAdd,
    /// Full chain from the prompt vector through the toy visual encoder,
    /// pooled attention and concat fusion; w.r.t. P_V and all weights.
    Prompt,
}

impl GradTarget {
    pub const ALL: [GradTarget; 5] = [
        GradTarget::ProjectQkv,
        GradTarget::TsaPooled,
        GradTarget::FuseConcat,
        GradTarget::FuseAdd,
        GradTarget::Prompt,
    ];
}

impl std::str::FromStr for GradTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "project_qkv" => Ok(Self::ProjectQkv),
            "tsa_pooled" => Ok(Self::TsaPooled),
            "fuse_concat" => Ok(Self::FuseConcat),
            "fuse_add" => Ok(Self::FuseAdd),
            "prompt" => Ok(Self::Prompt),
            other => Err(format!("unknown gradient target `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    /// Visual tokens for the attention-only targets.
    pub tokens: usize,
    pub dims: SdmgDims,
    /// Patch grid size for the prompt target.
    pub grid: usize,
    pub encoder_layers: usize,
    /// Multiplier on the text feature; large values saturate the softmax.
    pub text_scale: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            tokens: 3,
            dims: SdmgDims { d: 8, d_v: 8, d_t: 8 },
            grid: 2,
            encoder_layers: 2,
            text_scale: 1.0,
        }
    }
}

/// Error floor of the relative-error denominator, so components whose true
/// gradient is ~0 are judged by absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Attention weight above which the softmax is reported as saturated.
pub const SATURATION_WEIGHT: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorError {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    pub target: GradTarget,
    pub seed: u64,
    pub eps: f64,
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst: String,
    pub per_tensor: Vec<TensorError>,
    pub max_attention_weight: f64,
    /// True when one attention weight is within 1e-6 of 1, i.e. the softmax is
    /// saturated and gradients through the scores are ill-conditioned.
    pub saturated: bool,
}

type Vars = Vec<(&'static str, ArrayD<f64>)>;

struct Case {
    target: GradTarget,
    config: GradCheckConfig,
    text: Array1<f64>,
    patches: Array2<f64>,
    encoder: ToyVisualEncoder,
    coeff: Array1<f64>,
    coeff_k: Array1<f64>,
    coeff_v: Array1<f64>,
    /// Encoder output at the unperturbed prompt, reused while only the
    /// projections are perturbed.
    base_prompt: Array1<f64>,
    base_tokens: Array2<f64>,
}

fn uniform(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.random_range(-1.0..1.0))
}

fn vec_uniform(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_simple_fn(n, || rng.random_range(-1.0..1.0))
}

fn dyn1(a: Array1<f64>) -> ArrayD<f64> {
    a.into_dyn()
}

fn dyn2(a: Array2<f64>) -> ArrayD<f64> {
    a.into_dyn()
}

fn get1(vars: &Vars, name: &str) -> Array1<f64> {
    vars.iter()
        .find(|(n, _)| *n == name)
        .expect("var present")
        .1
        .clone()
        .into_dimensionality()
        .expect("1-d")
}

fn get2(vars: &Vars, name: &str) -> Array2<f64> {
    vars.iter()
        .find(|(n, _)| *n == name)
        .expect("var present")
        .1
        .clone()
        .into_dimensionality()
        .expect("2-d")
}

fn params_of(vars: &Vars, dims: SdmgDims) -> ProjectionParams<f64> {
    let has = |n: &str| vars.iter().any(|(v, _)| *v == n);
    ProjectionParams {
        w_q: get2(vars, "W_q"),
        w_k: get2(vars, "W_k"),
        w_v: get2(vars, "W_v"),
        w_t: if has("W_t") {
            get2(vars, "W_t")
        } else {
            Array2::zeros((dims.d, dims.d_t))
        },
    }
}

impl Case {
    fn new(target: GradTarget, config: GradCheckConfig, seed: u64) -> (Self, Vars) {
        let dims = config.dims;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let init = SdmgParams::init(dims, seed ^ 0x5eed);
        let tokens = uniform(&mut rng, (config.tokens, dims.d_v));
        let visual = vec_uniform(&mut rng, dims.d_v);
        let text = vec_uniform(&mut rng, dims.d_t) * config.text_scale;
        let patches = uniform(&mut rng, (config.grid * config.grid, dims.d_v));
        let fused_len = match target {
            GradTarget::FuseConcat | GradTarget::Prompt => 2 * dims.d,
            _ => dims.d,
        };
        let coeff = vec_uniform(&mut rng, fused_len);
        let coeff_k = vec_uniform(&mut rng, dims.d);
        let coeff_v = vec_uniform(&mut rng, dims.d);
        let p = init.projection;
        let mut vars: Vars = Vec::new();
        match target {
            GradTarget::ProjectQkv => {
                vars.push(("visual", dyn1(visual.clone())));
                vars.push(("text", dyn1(text.clone())));
            }
            GradTarget::TsaPooled | GradTarget::FuseConcat | GradTarget::FuseAdd => {
                vars.push(("tokens", dyn2(tokens.clone())));
                vars.push(("text", dyn1(text.clone())));
            }
            GradTarget::Prompt => vars.push(("P_V", dyn1(init.prompt.clone()))),
        }
        vars.push(("W_q", dyn2(p.w_q)));
        vars.push(("W_k", dyn2(p.w_k)));
        vars.push(("W_v", dyn2(p.w_v)));
        if matches!(
            target,
            GradTarget::FuseConcat | GradTarget::FuseAdd | GradTarget::Prompt
        ) {
            vars.push(("W_t", dyn2(p.w_t)));
        }
        let encoder = ToyVisualEncoder::new(seed.wrapping_add(17), dims.d_v, config.encoder_layers);
        let seq = build_visual_input(patches.view(), init.prompt.view()).expect("grid patches");
        let base_tokens = encoder
            .forward_cached(seq.to_matrix().view())
            .0
            .pop()
            .unwrap_or_else(|| seq.to_matrix());
        (
            Self {
                base_prompt: init.prompt.clone(),
                base_tokens,
                target,
                config,
                text,
                patches,
                encoder,
                coeff,
                coeff_k,
                coeff_v,
            },
            vars,
        )
    }

    fn mode(&self) -> FusionMode {
        match self.target {
            GradTarget::FuseAdd => FusionMode::Add,
            _ => FusionMode::Concat,
        }
    }

    /// Loss value, analytic gradient and the largest attention weight seen.
    fn evaluate(&self, vars: &Vars, want_grad: bool) -> Result<(f64, Option<Vars>, f64), SdmgError> {
        let dims = self.config.dims;
        let params = params_of(vars, dims);
        match self.target {
            GradTarget::ProjectQkv => {
                let visual = get1(vars, "visual");
                let text = get1(vars, "text");
                let qkv = project_qkv(visual.view(), text.view(), &params)?;
                let loss = self.coeff.dot(&qkv.q) + self.coeff_k.dot(&qkv.k) + self.coeff_v.dot(&qkv.v);
                let grads = want_grad.then(|| {
                    let g = project_qkv_backward(
                        visual.view(),
                        text.view(),
                        &params,
                        self.coeff.view(),
                        self.coeff_k.view(),
                        self.coeff_v.view(),
                    );
                    vec![
                        ("visual", dyn1(g.visual)),
                        ("text", dyn1(g.text)),
                        ("W_q", dyn2(g.w_q)),
                        ("W_k", dyn2(g.w_k)),
                        ("W_v", dyn2(g.w_v)),
                    ]
                });
                Ok((loss, grads, 0.0))
            }
            GradTarget::TsaPooled => {
                let tokens = get2(vars, "tokens");
                let text = get1(vars, "text");
                let fwd = tsa_attend_pooled(tokens.view(), text.view(), &params)?;
                let loss = self.coeff.dot(&fwd.output);
                let max_w = fwd.weights.fold(0.0f64, |m, &w| m.max(w));
                let grads = want_grad.then(|| {
                    let g = tsa_attend_pooled_backward(
                        tokens.view(),
                        text.view(),
                        &params,
                        &fwd,
                        self.coeff.view(),
                    );
                    vec![
                        ("tokens", dyn2(g.tokens)),
                        ("text", dyn1(g.text)),
                        ("W_q", dyn2(g.w_q)),
                        ("W_k", dyn2(g.w_k)),
                        ("W_v", dyn2(g.w_v)),
                    ]
                });
                Ok((loss, grads, max_w))
            }
            GradTarget::FuseConcat | GradTarget::FuseAdd => {
                let tokens = get2(vars, "tokens");
                let text = get1(vars, "text");
                let (loss, g, max_w) = self.head(tokens.view(), text.view(), &params, want_grad)?;
                let grads = g.map(|(d_tokens, d_text, p)| {
                    vec![
                        ("tokens", dyn2(d_tokens)),
                        ("text", dyn1(d_text)),
                        ("W_q", dyn2(p.w_q)),
                        ("W_k", dyn2(p.w_k)),
                        ("W_v", dyn2(p.w_v)),
                        ("W_t", dyn2(p.w_t)),
                    ]
                });
                Ok((loss, grads, max_w))
            }
            GradTarget::Prompt => {
                let prompt = get1(vars, "P_V");
                if !want_grad && prompt == self.base_prompt {
                    let (loss, _, max_w) = self.head(self.base_tokens.view(), self.text.view(), &params, false)?;
                    return Ok((loss, None, max_w));
                }
                let seq = build_visual_input(self.patches.view(), prompt.view())?;
                let (outs, caches) = self.encoder.forward_cached(seq.to_matrix().view());
                let tokens = outs.last().cloned().unwrap_or_else(|| seq.to_matrix());
                let (loss, g, max_w) = self.head(tokens.view(), self.text.view(), &params, want_grad)?;
                let grads = g.map(|(d_tokens, _d_text, p)| {
                    let d_input = self.encoder.backward_input(&caches, &d_tokens);
                    vec![
                        ("P_V", dyn1(d_input.row(1).to_owned())),
                        ("W_q", dyn2(p.w_q)),
                        ("W_k", dyn2(p.w_k)),
                        ("W_v", dyn2(p.w_v)),
                        ("W_t", dyn2(p.w_t)),
                    ]
                });
                Ok((loss, grads, max_w))
            }
        }
    }

    /// Pooled attention + text projection + fusion, scored against `coeff`.
    #[allow(clippy::type_complexity)]
    fn head(
        &self,
        tokens: ArrayView2<f64>,
        text: ArrayView1<f64>,
        params: &ProjectionParams<f64>,
        want_grad: bool,
    ) -> Result<(f64, Option<(Array2<f64>, Array1<f64>, ProjectionParams<f64>)>, f64), SdmgError> {
        let fwd = tsa_attend_pooled(tokens, text, params)?;
        let t_proj = project_text(text, params)?;
        let fused = fuse(fwd.output.view(), t_proj.view(), self.mode())?;
        let loss = self.coeff.dot(&fused.values);
        let max_w = fwd.weights.fold(0.0f64, |m, &w| m.max(w));
        if !want_grad {
            return Ok((loss, None, max_w));
        }
        let (g_vis, g_txt) = fuse_backward(self.mode(), fwd.output.len(), self.coeff.view());
        let pg = tsa_attend_pooled_backward(tokens, text, params, &fwd, g_vis.view());
        let d_text = pg.text + params.w_t.t().dot(&g_txt);
        let w_t = outer(g_txt.view(), text);
        Ok((
            loss,
            Some((
                pg.tokens,
                d_text,
                ProjectionParams {
                    w_q: pg.w_q,
                    w_k: pg.w_k,
                    w_v: pg.w_v,
                    w_t,
                },
            )),
            max_w,
        ))
    }
}

pub const EPS_RANGE: (f64, f64) = (1e-7, 1e-3);

/// Compares analytic gradients with central differences `(L(x+e) - L(x-e)) / 2e`
/// for every scalar of every differentiated tensor of `target`.
pub fn grad_check(
    target: GradTarget,
    config: GradCheckConfig,
    seed: u64,
    eps: f64,
) -> Result<GradReport, SdmgError> {
    if !(EPS_RANGE.0..=EPS_RANGE.1).contains(&eps) {
        return Err(SdmgError::InvalidEps(eps));
    }
    let (case, vars) = Case::new(target, config, seed);
    let (_, analytic, max_w) = case.evaluate(&vars, true)?;
    let analytic = analytic.expect("gradient requested");
    let mut report = GradReport {
        target,
        seed,
        eps,
        checked: 0,
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: String::new(),
        per_tensor: Vec::new(),
        max_attention_weight: max_w,
        saturated: max_w > SATURATION_WEIGHT,
    };
    for (vi, (name, value)) in vars.iter().enumerate() {
        let grad = &analytic
            .iter()
            .find(|(n, _)| n == name)
            .expect("gradient for every var")
            .1;
        let mut tensor = TensorError {
            name: name.to_string(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
        };
        // Probes are independent; they run in parallel and are folded in index
        // order so the report does not depend on scheduling.
        let probes: Vec<Result<(Vec<usize>, f64, f64), SdmgError>> = (0..value.len())
            .into_par_iter()
            .map(|flat| {
                let idx = unravel(value.shape(), flat);
                let mut probe = vars.clone();
                probe[vi].1[IxDyn(&idx)] = value[IxDyn(&idx)] + eps;
                let (plus, _, _) = case.evaluate(&probe, false)?;
                probe[vi].1[IxDyn(&idx)] = value[IxDyn(&idx)] - eps;
                let (minus, _, _) = case.evaluate(&probe, false)?;
                let numeric = (plus - minus) / (2.0 * eps);
                let a = grad[IxDyn(&idx)];
                if !a.is_finite() || !numeric.is_finite() {
                    return Err(SdmgError::NonFiniteGradient(format!("{name}{idx:?}")));
                }
                let abs = (a - numeric).abs();
                let rel = abs / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
                Ok((idx, abs, rel))
            })
            .collect();
        for probe in probes {
            let (idx, abs, rel) = probe?;
            tensor.max_abs_error = tensor.max_abs_error.max(abs);
            if rel > tensor.max_rel_error {
                tensor.max_rel_error = rel;
            }
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = format!("{name}{idx:?}");
            }
            report.max_abs_error = report.max_abs_error.max(abs);
            report.checked += 1;
        }
        report.per_tensor.push(tensor);
    }
    Ok(report)
}

fn unravel(shape: &[usize], mut flat: usize) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for (i, &n) in shape.iter().enumerate().rev() {
        idx[i] = flat % n;
        flat /= n;
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_projection_is_exact() {
        let r = grad_check(GradTarget::ProjectQkv, GradCheckConfig::default(), 1, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
        assert_eq!(r.checked, 8 + 8 + 3 * 64);
    }

    #[test]
    fn pooled_attention_matches_central_differences() {
        let r = grad_check(GradTarget::TsaPooled, GradCheckConfig::default(), 2, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
        assert!(!r.saturated);
    }

    #[test]
    fn every_target_passes_for_one_seed() {
        for t in GradTarget::ALL {
            let r = grad_check(t, GradCheckConfig::default(), 11, 1e-5).unwrap();
            assert!(r.max_rel_error < 1e-4, "{t:?}: {r:?}");
        }
    }

    #[test]
    fn saturated_softmax_is_flagged_but_finite() {
        let config = GradCheckConfig {
            text_scale: 1e4,
            ..GradCheckConfig::default()
        };
        let r = grad_check(GradTarget::TsaPooled, config, 3, 1e-5).unwrap();
        assert!(r.saturated, "{r:?}");
        assert!(r.max_abs_error.is_finite());
    }

    #[test]
    fn eps_out_of_range() {
        assert!(matches!(
            grad_check(GradTarget::TsaPooled, GradCheckConfig::default(), 1, 1e-2),
            Err(SdmgError::InvalidEps(_))
        ));
    }

    #[test]
    fn unravel_row_major() {
        assert_eq!(unravel(&[2, 3], 4), vec![1, 1]);
        assert_eq!(unravel(&[5], 3), vec![3]);
    }
}
