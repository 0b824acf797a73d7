use std::fmt;
use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::autodiff::{Backend, MaskRef};
use super::tensor::Mat;
use super::PolicyError;
use crate::env::{Position, State};
use crate::instance::Instance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Rms,
    Instance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormPlacement {
    Pre,
    Post,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FfnKind {
    Sglu,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionKind {
    Blockwise,
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_hidden: usize,
    pub norm: NormKind,
    pub placement: NormPlacement,
    pub ffn: FfnKind,
    pub attention: AttentionKind,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            embed_dim: 32,
            layers: 2,
            heads: 4,
            ffn_hidden: 128,
            norm: NormKind::Rms,
            placement: NormPlacement::Pre,
            ffn: FfnKind::Sglu,
            attention: AttentionKind::Blockwise,
        }
    }
}

impl EncoderConfig {
    /// Full-size architecture: d = 128, six layers, eight heads.
    pub fn full_scale() -> Self {
        EncoderConfig {
            embed_dim: 128,
            layers: 6,
            heads: 8,
            ffn_hidden: 512,
            ..EncoderConfig::default()
        }
    }

    /// The conventional transformer the modern encoder replaces.
    pub fn traditional() -> Self {
        EncoderConfig {
            norm: NormKind::Instance,
            placement: NormPlacement::Post,
            ffn: FfnKind::Relu,
            attention: AttentionKind::Standard,
            ..EncoderConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.embed_dim == 0 || self.heads == 0 || self.ffn_hidden == 0 {
            return Err(PolicyError::InvalidConfig("dimensions must be positive".into()));
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            return Err(PolicyError::InvalidConfig(format!(
                "embed_dim {} is not divisible by {} heads",
                self.embed_dim, self.heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub encoder: EncoderConfig,
    /// Logits are `clip · tanh(u)`.
    pub tanh_clip: f64,
    /// Stands in for an unbounded time window in the node features.
    pub window_sentinel: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            encoder: EncoderConfig::default(),
            tanh_clip: 10.0,
            window_sentinel: 4.0,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        self.encoder.validate()?;
        if !(self.tanh_clip > 0.0 && self.window_sentinel.is_finite()) {
            return Err(PolicyError::InvalidConfig(
                "tanh_clip must be positive and the sentinel finite".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct LayerIdx {
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    norm1_g: usize,
    norm1_b: Option<usize>,
    norm2_g: usize,
    norm2_b: Option<usize>,
    w1: usize,
    b1: usize,
    /// Gate branch, SGLU only.
    w2: Option<(usize, usize)>,
    w3: usize,
    b3: usize,
}

/// Positions of every tensor in the flat parameter list.
#[derive(Debug, Clone)]
struct Layout {
    embed_w: usize,
    embed_b: usize,
    depot_w: usize,
    depot_b: usize,
    layers: Vec<LayerIdx>,
    ctx_w: usize,
    ctx_b: usize,
    g_wq: usize,
    g_wk: usize,
    g_wv: usize,
    g_wo: usize,
    s_wq: usize,
    s_wk: usize,
}

#[derive(Clone, Copy)]
enum Init {
    Uniform(f64),
    Ones,
    Zeros,
}

struct Spec {
    name: String,
    rows: usize,
    cols: usize,
    init: Init,
}

struct Builder(Vec<Spec>);

impl Builder {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> usize {
        self.0.push(Spec { name, rows, cols, init });
        self.0.len() - 1
    }

    /// Weight `fan_in × out` and bias, both uniform in ±1/√fan_in.
    fn linear(&mut self, name: &str, fan_in: usize, out: usize) -> (usize, usize) {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = self.add(format!("{name}.w"), fan_in, out, Init::Uniform(bound));
        let b = self.add(format!("{name}.b"), 1, out, Init::Uniform(bound));
        (w, b)
    }

    fn weight(&mut self, name: String, fan_in: usize, out: usize) -> usize {
        self.add(name, fan_in, out, Init::Uniform(1.0 / (fan_in as f64).sqrt()))
    }
}

fn layout(cfg: &PolicyConfig, expanded: bool) -> (Layout, Vec<Spec>) {
    let e = &cfg.encoder;
    let d = e.embed_dim;
    let mut b = Builder(Vec::new());
    let (embed_w, embed_b) = b.linear("embed", 4, d);
    let (depot_w, depot_b) = b.linear("depot", 6, d);
    let mut layers = Vec::new();
    for l in 0..e.layers {
        let p = format!("layer{l}");
        let wq = b.weight(format!("{p}.attn.wq"), d, d);
        let wk = b.weight(format!("{p}.attn.wk"), d, d);
        let wv = b.weight(format!("{p}.attn.wv"), d, d);
        let wo = b.weight(format!("{p}.attn.wo"), d, d);
        let norm = |b: &mut Builder, k: usize| {
            let g = b.add(format!("{p}.norm{k}.g"), 1, d, Init::Ones);
            let bias = (e.norm == NormKind::Instance).then(|| b.add(format!("{p}.norm{k}.b"), 1, d, Init::Zeros));
            (g, bias)
        };
        let (norm1_g, norm1_b) = norm(&mut b, 1);
        let (norm2_g, norm2_b) = norm(&mut b, 2);
        let (w1, b1) = b.linear(&format!("{p}.ffn.1"), d, e.ffn_hidden);
        let w2 = (e.ffn == FfnKind::Sglu).then(|| b.linear(&format!("{p}.ffn.2"), d, e.ffn_hidden));
        let (w3, b3) = b.linear(&format!("{p}.ffn.3"), e.ffn_hidden, d);
        layers.push(LayerIdx {
            wq,
            wk,
            wv,
            wo,
            norm1_g,
            norm1_b,
            norm2_g,
            norm2_b,
            w1,
            b1,
            w2,
            w3,
            b3,
        });
    }
    let ctx_in = if expanded { d + 4 } else { d + 2 };
    let ctx_w = b.add("ctx.w".into(), ctx_in, d, Init::Uniform(1.0 / ((d + 2) as f64).sqrt()));
    let ctx_b = b.add("ctx.b".into(), 1, d, Init::Uniform(1.0 / ((d + 2) as f64).sqrt()));
    let g_wq = b.weight("glimpse.wq".into(), d, d);
    let g_wk = b.weight("glimpse.wk".into(), d, d);
    let g_wv = b.weight("glimpse.wv".into(), d, d);
    let g_wo = b.weight("glimpse.wo".into(), d, d);
    let s_wq = b.weight("score.wq".into(), d, d);
    let s_wk = b.weight("score.wk".into(), d, d);
    (
        Layout {
            embed_w,
            embed_b,
            depot_w,
            depot_b,
            layers,
            ctx_w,
            ctx_b,
            g_wq,
            g_wk,
            g_wv,
            g_wo,
            s_wq,
            s_wk,
        },
        b.0,
    )
}

/// All learnable tensors plus the configuration that shapes them.
#[derive(Debug, Clone)]
pub struct PolicyParams {
    config: PolicyConfig,
    expanded: bool,
    names: Vec<String>,
    tensors: Vec<Mat>,
    layout: Layout,
}

impl PartialEq for PolicyParams {
    fn eq(&self, o: &Self) -> bool {
        self.config == o.config && self.expanded == o.expanded && self.tensors == o.tensors
    }
}

impl PolicyParams {
    pub fn init<R: Rng + ?Sized>(config: PolicyConfig, rng: &mut R) -> Result<Self, PolicyError> {
        config.validate()?;
        let (layout, specs) = layout(&config, false);
        let tensors = specs
            .iter()
            .map(|s| match s.init {
                Init::Uniform(a) => Mat::from_vec(
                    s.rows,
                    s.cols,
                    (0..s.rows * s.cols).map(|_| rng.gen_range(-a..=a)).collect(),
                ),
                Init::Ones => Mat::filled(s.rows, s.cols, 1.0),
                Init::Zeros => Mat::zeros(s.rows, s.cols),
            })
            .collect();
        Ok(PolicyParams {
            config,
            expanded: false,
            names: specs.into_iter().map(|s| s.name).collect(),
            tensors,
            layout,
        })
    }

    /// Rebuilds from named tensors, checking names and shapes against the
    /// layout implied by `config` and `expanded`.
    pub fn from_named(config: PolicyConfig, expanded: bool, named: Vec<(String, Mat)>) -> Result<Self, PolicyError> {
        config.validate()?;
        let (layout, specs) = layout(&config, expanded);
        if named.len() != specs.len() {
            return Err(PolicyError::ShapeMismatch(format!(
                "expected {} tensors, found {}",
                specs.len(),
                named.len()
            )));
        }
        for (s, (name, m)) in specs.iter().zip(&named) {
            if &s.name != name || (s.rows, s.cols) != m.shape() || m.data.len() != s.rows * s.cols {
                return Err(PolicyError::ShapeMismatch(format!(
                    "{name} {}x{} where {} {}x{} was expected",
                    m.rows, m.cols, s.name, s.rows, s.cols
                )));
            }
        }
        let (names, tensors) = named.into_iter().unzip();
        Ok(PolicyParams {
            config,
            expanded,
            names,
            tensors,
            layout,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn is_expanded(&self) -> bool {
        self.expanded
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Mat] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Mat] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Mat> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub(crate) fn shared(&self) -> Vec<Rc<Mat>> {
        self.tensors.iter().cloned().map(Rc::new).collect()
    }

    /// Appends two zero rows to the context projection so depot coordinates
    /// can enter the context; every output is unchanged until they are
    /// trained.
    pub fn expand_for_md(&self) -> Result<PolicyParams, PolicyError> {
        if self.expanded {
            return Err(PolicyError::AlreadyExpanded);
        }
        let (layout, _) = layout(&self.config, true);
        let mut tensors = self.tensors.clone();
        let w = &mut tensors[layout.ctx_w];
        w.data.extend(std::iter::repeat_n(0.0, 2 * w.cols));
        w.rows += 2;
        Ok(PolicyParams {
            config: self.config,
            expanded: true,
            names: self.names.clone(),
            tensors,
            layout,
        })
    }
}

impl fmt::Display for PolicyParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = &self.config.encoder;
        write!(
            f,
            "policy d={} layers={} heads={} ffn={} params={}{}",
            e.embed_dim,
            e.layers,
            e.heads,
            e.ffn_hidden,
            self.count(),
            if self.expanded { " (md)" } else { "" }
        )
    }
}

/// `[x, y, c, l]` per node, with the sentinel for unbounded windows.
pub fn node_features(inst: &Instance, sentinel: f64) -> Mat {
    let net = &inst.network;
    let rows: Vec<Vec<f64>> = (0..net.len())
        .map(|i| {
            let (x, y) = net.coord(i);
            let l = inst.window(i);
            vec![x, y, net.value(i), if l.is_finite() { l } else { sentinel }]
        })
        .collect();
    Mat::from_rows(&rows)
}

/// `[x_o, y_o, p_max, Q, K, O]` per depot.
pub fn depot_features(inst: &Instance) -> Mat {
    let rows: Vec<Vec<f64>> = inst
        .depots
        .iter()
        .map(|d| {
            let (x, y) = inst.network.coord(d.node);
            vec![x, y, inst.p_max, inst.battery, inst.drones as f64, inst.attrs.o_flag()]
        })
        .collect();
    Mat::from_rows(&rows)
}

/// Initial embeddings: depot tokens first, then one row per node.
pub fn embed<B: Backend>(b: &mut B, p: &PolicyParams, inst: &Instance) -> B::V {
    let l = &p.layout;
    let nodes = b.constant(node_features(inst, p.config.window_sentinel));
    let depots = b.constant(depot_features(inst));
    let (w, bias) = (b.param(l.embed_w), b.param(l.embed_b));
    let h = b.matmul(&nodes, &w);
    let h = b.add_row(&h, &bias);
    let (wo, bo) = (b.param(l.depot_w), b.param(l.depot_b));
    let ho = b.matmul(&depots, &wo);
    let ho = b.add_row(&ho, &bo);
    b.concat_rows(&ho, &h)
}

fn norm<B: Backend>(b: &mut B, kind: NormKind, x: &B::V, g: usize, bias: Option<usize>) -> B::V {
    let g = b.param(g);
    match kind {
        NormKind::Rms => b.rms_norm(x, &g),
        NormKind::Instance => {
            let bias = b.param(bias.expect("instance norm carries a bias"));
            b.instance_norm(x, &g, &bias)
        }
    }
}

/// Multi-head attention of `queries` over `keys`; projections are
/// `[wq, wk, wv, wo]`.
#[allow(clippy::too_many_arguments)]
fn mha<B: Backend>(
    b: &mut B,
    queries: &B::V,
    k: &B::V,
    v: &B::V,
    wq: usize,
    wo: usize,
    heads: usize,
    mask: Option<MaskRef>,
    blockwise: bool,
) -> B::V {
    let wq = b.param(wq);
    let q = b.matmul(queries, &wq);
    let d = b.value(&q).cols;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let outs: Vec<B::V> = (0..heads)
        .map(|h| {
            let qh = b.slice_cols(&q, h * dh, dh);
            let kh = b.slice_cols(k, h * dh, dh);
            let vh = b.slice_cols(v, h * dh, dh);
            b.attention(&qh, &kh, &vh, mask.clone(), scale, blockwise)
        })
        .collect();
    let cat = if heads == 1 {
        outs[0].clone()
    } else {
        b.concat_cols(&outs)
    };
    let wo = b.param(wo);
    b.matmul(&cat, &wo)
}

fn self_attention<B: Backend>(b: &mut B, x: &B::V, li: &LayerIdx, e: &EncoderConfig) -> B::V {
    let (wk, wv) = (b.param(li.wk), b.param(li.wv));
    let k = b.matmul(x, &wk);
    let v = b.matmul(x, &wv);
    mha(
        b,
        x,
        &k,
        &v,
        li.wq,
        li.wo,
        e.heads,
        None,
        e.attention == AttentionKind::Blockwise,
    )
}

fn ffn<B: Backend>(b: &mut B, x: &B::V, li: &LayerIdx, kind: FfnKind) -> B::V {
    let (w1, b1) = (b.param(li.w1), b.param(li.b1));
    let a = b.matmul(x, &w1);
    let a = b.add_row(&a, &b1);
    let hidden = match (kind, li.w2) {
        (FfnKind::Sglu, Some((w2, b2))) => {
            let gate = b.swish(&a);
            let (w2, b2) = (b.param(w2), b.param(b2));
            let lin = b.matmul(x, &w2);
            let lin = b.add_row(&lin, &b2);
            b.mul(&gate, &lin)
        }
        _ => b.relu(&a),
    };
    let (w3, b3) = (b.param(li.w3), b.param(li.b3));
    let out = b.matmul(&hidden, &w3);
    b.add_row(&out, &b3)
}

/// SGLU feed-forward `Swish(xW₁+b₁) ⊙ (xW₂+b₂)` followed by the output
/// projection of layer `layer`.
pub fn sglu_ffn<B: Backend>(b: &mut B, p: &PolicyParams, layer: usize, x: &B::V) -> B::V {
    ffn(b, x, &p.layout.layers[layer], FfnKind::Sglu)
}

/// Runs the encoder stack over the embedded tokens.
pub fn encode_tokens<B: Backend>(b: &mut B, p: &PolicyParams, h0: B::V) -> Result<B::V, PolicyError> {
    let e = p.config.encoder;
    if b.value(&h0).cols != e.embed_dim {
        return Err(PolicyError::ShapeMismatch(format!(
            "embeddings have width {}, expected {}",
            b.value(&h0).cols,
            e.embed_dim
        )));
    }
    let mut h = h0;
    for (l, li) in p.layout.layers.iter().enumerate() {
        h = match e.placement {
            NormPlacement::Pre => {
                let hb = norm(b, e.norm, &h, li.norm1_g, li.norm1_b);
                let a = self_attention(b, &hb, li, &e);
                let hh = b.add(&h, &a);
                let hn = norm(b, e.norm, &hh, li.norm2_g, li.norm2_b);
                let f = ffn(b, &hn, li, e.ffn);
                b.add(&hh, &f)
            }
            NormPlacement::Post => {
                let a = self_attention(b, &h, li, &e);
                let s = b.add(&h, &a);
                let hh = norm(b, e.norm, &s, li.norm1_g, li.norm1_b);
                let f = ffn(b, &hh, li, e.ffn);
                let s = b.add(&hh, &f);
                norm(b, e.norm, &s, li.norm2_g, li.norm2_b)
            }
        };
        if !b.value(&h).is_finite() {
            return Err(PolicyError::NonFiniteActivation(format!("encoder layer {l}")));
        }
    }
    Ok(h)
}

/// Encoder outputs and the decoder's per-instance projections of them.
pub struct Encoded<V> {
    pub tokens: V,
    pub n_depots: usize,
    pub n_nodes: usize,
    glimpse_k: V,
    glimpse_v: V,
    score_k: V,
}

pub fn encode_with<B: Backend>(b: &mut B, p: &PolicyParams, inst: &Instance) -> Result<Encoded<B::V>, PolicyError> {
    let h0 = embed(b, p, inst);
    let tokens = encode_tokens(b, p, h0)?;
    let l = &p.layout;
    let (wk, wv, sk) = (b.param(l.g_wk), b.param(l.g_wv), b.param(l.s_wk));
    let glimpse_k = b.matmul(&tokens, &wk);
    let glimpse_v = b.matmul(&tokens, &wv);
    let n_depots = inst.depots.len();
    let n_nodes = inst.network.len();
    let nodes = b.slice_rows(&tokens, n_depots, n_nodes);
    let score_k = b.matmul(&nodes, &sk);
    Ok(Encoded {
        tokens,
        n_depots,
        n_nodes,
        glimpse_k,
        glimpse_v,
        score_k,
    })
}

/// Decoder inputs read off one environment state.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInput {
    /// Token mixture standing for the previous node: `(token, weight)`.
    pub context: Vec<(usize, f64)>,
    /// Clock over `p_max`.
    pub clock: f64,
    /// Drone index over `K`.
    pub drone: f64,
    /// Origin depot coordinates, zero before a depot is chosen.
    pub depot_xy: (f64, f64),
    pub mask: Vec<bool>,
}

impl StepInput {
    pub fn from_state(s: &State<'_>) -> Result<StepInput, PolicyError> {
        let inst = s.instance();
        let n_depots = inst.depots.len();
        let depot_token = |o: usize| inst.depots.iter().position(|d| d.node == o).expect("origin is a depot");
        let (context, depot_xy) = match s.position() {
            Position::Pending => {
                let w = 1.0 / n_depots as f64;
                ((0..n_depots).map(|t| (t, w)).collect(), (0.0, 0.0))
            }
            Position::At(j) => {
                let o = s.origin().unwrap_or(inst.depot());
                let tok = if s.current_route().len() <= 1 {
                    depot_token(o)
                } else {
                    n_depots + j
                };
                (vec![(tok, 1.0)], inst.network.coord(o))
            }
        };
        let mask = s.feasible_mask()?.0;
        if !mask.iter().any(|&m| m) {
            return Err(PolicyError::AllMasked);
        }
        Ok(StepInput {
            context,
            clock: s.clock() / inst.p_max,
            drone: s.drone() as f64 / inst.drones as f64,
            depot_xy,
            mask,
        })
    }
}

/// Clipped logits `C · tanh(u)` over the nodes for a batch of steps.
pub fn decode_logits<B: Backend>(
    b: &mut B,
    p: &PolicyParams,
    enc: &Encoded<B::V>,
    steps: &[StepInput],
    mask: MaskRef,
) -> B::V {
    let e = p.config.encoder;
    let d = e.embed_dim;
    let l = &p.layout;
    let s = steps.len();
    let t = enc.n_depots + enc.n_nodes;
    let mut sel = Mat::zeros(s, t);
    let width = if p.expanded { 4 } else { 2 };
    let mut feats = Mat::zeros(s, width);
    let mut glimpse_mask = vec![true; s * t];
    for (r, st) in steps.iter().enumerate() {
        for &(tok, w) in &st.context {
            sel.data[r * t + tok] += w;
        }
        let f = feats.row_mut(r);
        f[0] = st.clock;
        f[1] = st.drone;
        if p.expanded {
            f[2] = st.depot_xy.0;
            f[3] = st.depot_xy.1;
        }
        glimpse_mask[r * t + enc.n_depots..(r + 1) * t].copy_from_slice(&st.mask);
    }
    let sel = b.constant(sel);
    let prev = b.matmul(&sel, &enc.tokens);
    let feats = b.constant(feats);
    let ctx_in = b.concat_cols(&[prev, feats]);
    let (wc, bc) = (b.param(l.ctx_w), b.param(l.ctx_b));
    let hc = b.matmul(&ctx_in, &wc);
    let hc = b.add_row(&hc, &bc);
    let glimpse = mha(
        b,
        &hc,
        &enc.glimpse_k,
        &enc.glimpse_v,
        l.g_wq,
        l.g_wo,
        e.heads,
        Some(Rc::new(glimpse_mask)),
        e.attention == AttentionKind::Blockwise,
    );
    let sq = b.param(l.s_wq);
    let q = b.matmul(&glimpse, &sq);
    let u = b.matmul_nt(&q, &enc.score_k);
    let u = b.scale(&u, 1.0 / (d as f64).sqrt());
    let th = b.tanh(&u);
    debug_assert_eq!(mask.len(), s * enc.n_nodes);
    b.scale(&th, p.config.tanh_clip)
}

/// Row-major concatenation of the step masks.
pub fn stack_masks(steps: &[StepInput]) -> MaskRef {
    Rc::new(steps.iter().flat_map(|s| s.mask.iter().copied()).collect())
}
