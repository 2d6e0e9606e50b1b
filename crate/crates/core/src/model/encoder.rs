use rand::Rng;

use super::{HeadSpec, ModelConfig};
use crate::corpus::{LossLevel, TaskInstance};
use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId, ParamId, ParamStore, Scalar, Tensor};

/// Standard deviation of the uniform initializer.
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone)]
struct LayerIds {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    attn_gamma: ParamId,
    attn_beta: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    ffn_gamma: ParamId,
    ffn_beta: ParamId,
}

#[derive(Debug, Clone)]
struct HeadIds {
    dense_w: ParamId,
    dense_b: ParamId,
    /// Token heads only.
    norm: Option<(ParamId, ParamId)>,
    /// Absent when tied to the token embedding.
    out_w: Option<ParamId>,
    out_b: ParamId,
}

#[derive(Debug, Clone)]
struct Layout {
    token: ParamId,
    segment: ParamId,
    position: ParamId,
    task: ParamId,
    emb_gamma: ParamId,
    emb_beta: ParamId,
    layers: Vec<LayerIds>,
    heads: Vec<HeadIds>,
}

/// Expected `(name, shape)` of every parameter, in storage order.
pub fn parameter_shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d = config.d_model;
    let mut out = vec![
        ("emb.token".to_string(), vec![config.vocab_size, d]),
        ("emb.segment".to_string(), vec![config.max_segments, d]),
        ("emb.position".to_string(), vec![config.max_seq_len, d]),
        ("emb.task".to_string(), vec![config.task_count, d]),
        ("emb.ln.gamma".to_string(), vec![d]),
        ("emb.ln.beta".to_string(), vec![d]),
    ];
    for l in 0..config.layers {
        let p = |s: &str| format!("layer.{l}.{s}");
        for w in ["q", "k", "v", "o"] {
            out.push((p(&format!("attn.w{w}")), vec![d, d]));
            out.push((p(&format!("attn.b{w}")), vec![d]));
        }
        out.push((p("attn.ln.gamma"), vec![d]));
        out.push((p("attn.ln.beta"), vec![d]));
        out.push((p("ffn.w1"), vec![d, config.d_ff]));
        out.push((p("ffn.b1"), vec![config.d_ff]));
        out.push((p("ffn.w2"), vec![config.d_ff, d]));
        out.push((p("ffn.b2"), vec![d]));
        out.push((p("ffn.ln.gamma"), vec![d]));
        out.push((p("ffn.ln.beta"), vec![d]));
    }
    for h in &config.output_heads {
        out.extend(head_shapes(h, d));
    }
    out
}

fn head_shapes(h: &HeadSpec, d: usize) -> Vec<(String, Vec<usize>)> {
    let p = |s: &str| format!("head.{}.{s}", h.name);
    let mut out = vec![(p("dense.w"), vec![d, d]), (p("dense.b"), vec![d])];
    if h.level == LossLevel::Token {
        out.push((p("ln.gamma"), vec![d]));
        out.push((p("ln.beta"), vec![d]));
    }
    if !h.tied {
        out.push((p("out.w"), vec![d, h.arity]));
    }
    out.push((p("out.b"), vec![h.arity]));
    out
}

fn init_tensor<T: Scalar, R: Rng>(name: &str, shape: &[usize], rng: &mut R) -> Tensor<T> {
    if name.ends_with("gamma") {
        Tensor::full(shape, T::one())
    } else if shape.len() == 1 {
        Tensor::zeros(shape)
    } else {
        Tensor::uniform(shape, INIT_STD * 3f64.sqrt(), rng)
    }
}

/// Output of the encoder stack.
#[derive(Debug, Clone)]
pub struct Encoded {
    /// `[seq_len, d_model]`
    pub hidden: NodeId,
    /// Attention weights per layer per head, each `[seq_len, seq_len]`.
    pub attention: Vec<Vec<NodeId>>,
}

/// Targets for one head on one instance.
#[derive(Debug, Clone, Copy)]
pub enum HeadLabels<'a> {
    Token(&'a [Option<u32>]),
    Sentence(u32),
}

/// Transformer encoder with summed token, segment, position and task
/// embeddings, plus one output head per registered task.
#[derive(Debug, Clone)]
pub struct Model<T> {
    config: ModelConfig,
    params: ParamStore<T>,
    layout: Layout,
}

impl<T: Scalar> Model<T> {
    pub fn new<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        for (name, shape) in parameter_shapes(&config) {
            params.insert(&name, init_tensor(&name, &shape, rng))?;
        }
        Model::from_params(config, params)
    }

    /// Wraps existing tensors, checking names and shapes against `config`.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        for (name, shape) in parameter_shapes(&config) {
            let t = params
                .by_name(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::ConfigMismatch(format!(
                    "tensor `{name}` has shape {:?}, config expects {shape:?}",
                    t.shape()
                )));
            }
        }
        let layout = Layout::build(&config, &params);
        Ok(Model { config, params, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn into_parts(self) -> (ModelConfig, ParamStore<T>) {
        (self.config, self.params)
    }

    /// Adds a freshly initialized head, e.g. a fine-tuning classifier.
    pub fn add_head<R: Rng>(&mut self, head: HeadSpec, rng: &mut R) -> Result<()> {
        let mut config = self.config.clone();
        config.output_heads.push(head.clone());
        config.validate()?;
        for (name, shape) in head_shapes(&head, config.d_model) {
            self.params.insert(&name, init_tensor(&name, &shape, rng))?;
        }
        self.config = config;
        self.layout = Layout::build(&self.config, &self.params);
        Ok(())
    }

    /// Converts the parameters to another element type.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
        }
    }

    fn p(&self, g: &mut Graph<T>, id: ParamId) -> Result<NodeId> {
        g.param(id, self.params.get(id).expect("layout ids are valid"))
    }

    fn dense(&self, g: &mut Graph<T>, x: NodeId, w: ParamId, b: ParamId) -> Result<NodeId> {
        let w = self.p(g, w)?;
        let b = self.p(g, b)?;
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }

    /// Sum of the four embeddings, layer-normalized; rows past the attention
    /// length are zeroed.
    pub fn embed(&self, g: &mut Graph<T>, inst: &TaskInstance) -> Result<NodeId> {
        let c = &self.config;
        let n = inst.token_ids.len();
        if n == 0 || n > c.max_seq_len {
            return Err(Error::IndexOutOfRange {
                table: "emb.position".into(),
                index: n.saturating_sub(1),
                size: c.max_seq_len,
            });
        }
        if inst.attention_length == 0 || inst.attention_length > n {
            return Err(Error::InvalidInstance(format!(
                "attention length {} for {n} tokens",
                inst.attention_length
            )));
        }
        let tok: Vec<usize> = inst.token_ids.iter().map(|&t| t as usize).collect();
        let seg: Vec<usize> = inst.segment_ids.iter().map(|&s| s as usize).collect();
        let pos: Vec<usize> = inst.position_ids.iter().map(|&p| p as usize).collect();
        let task = vec![inst.task_id as usize; n];
        let l = &self.layout;
        let tables = [
            (l.token, &tok, "emb.token"),
            (l.segment, &seg, "emb.segment"),
            (l.position, &pos, "emb.position"),
            (l.task, &task, "emb.task"),
        ];
        let mut sum = None;
        for (id, ids, name) in tables {
            if ids.len() != n {
                return Err(Error::InvalidInstance(format!("{name} ids have wrong length")));
            }
            let table = self.p(g, id)?;
            let e = g.embedding(table, ids, name)?;
            sum = Some(match sum {
                None => e,
                Some(acc) => g.add(acc, e)?,
            });
        }
        let gamma = self.p(g, l.emb_gamma)?;
        let beta = self.p(g, l.emb_beta)?;
        let normed = g.layer_norm(sum.unwrap(), gamma, beta)?;
        g.mask_rows(normed, inst.attention_length)
    }

    /// Post-norm self-attention stack; keys past `attention_length` are masked.
    pub fn encode(&self, g: &mut Graph<T>, embedded: NodeId, attention_length: usize) -> Result<Encoded> {
        let c = &self.config;
        let hd = c.head_dim();
        let scale = T::of(1.0 / (hd as f64).sqrt());
        let mut x = embedded;
        let mut attention = Vec::with_capacity(c.layers);
        for ids in &self.layout.layers {
            let q = self.dense(g, x, ids.wq, ids.bq)?;
            let k = self.dense(g, x, ids.wk, ids.bk)?;
            let v = self.dense(g, x, ids.wv, ids.bv)?;
            let mut contexts = Vec::with_capacity(c.heads);
            let mut probs = Vec::with_capacity(c.heads);
            for h in 0..c.heads {
                let qh = g.slice_cols(q, h * hd, hd)?;
                let kh = g.slice_cols(k, h * hd, hd)?;
                let vh = g.slice_cols(v, h * hd, hd)?;
                let scores = g.matmul_bt(qh, kh)?;
                let scores = g.scale(scores, scale)?;
                let p = g.masked_softmax(scores, attention_length)?;
                contexts.push(g.matmul(p, vh)?);
                probs.push(p);
            }
            attention.push(probs);
            let ctx = if contexts.len() == 1 {
                contexts[0]
            } else {
                g.concat_cols(&contexts)?
            };
            let attn = self.dense(g, ctx, ids.wo, ids.bo)?;
            let res = g.add(x, attn)?;
            let gamma = self.p(g, ids.attn_gamma)?;
            let beta = self.p(g, ids.attn_beta)?;
            let x1 = g.layer_norm(res, gamma, beta)?;

            let h = self.dense(g, x1, ids.w1, ids.b1)?;
            let h = g.gelu(h)?;
            let f = self.dense(g, h, ids.w2, ids.b2)?;
            let res = g.add(x1, f)?;
            let gamma = self.p(g, ids.ffn_gamma)?;
            let beta = self.p(g, ids.ffn_beta)?;
            x = g.layer_norm(res, gamma, beta)?;
        }
        Ok(Encoded { hidden: x, attention })
    }

    pub fn forward(&self, g: &mut Graph<T>, inst: &TaskInstance) -> Result<Encoded> {
        let e = self.embed(g, inst)?;
        self.encode(g, e, inst.attention_length)
    }

    fn head_index(&self, name: &str) -> Result<usize> {
        self.config
            .output_heads
            .iter()
            .position(|h| h.name == name)
            .ok_or_else(|| Error::UnknownHead(name.to_string()))
    }

    /// Logits of head `name`: `[rows.len(), arity]` for token heads over the
    /// given positions, `[1, arity]` from `[CLS]` for sentence heads.
    pub fn head_logits(&self, g: &mut Graph<T>, name: &str, hidden: NodeId, rows: &[usize]) -> Result<NodeId> {
        let hi = self.head_index(name)?;
        let spec = &self.config.output_heads[hi];
        let ids = &self.layout.heads[hi];
        match spec.level {
            LossLevel::Token => {
                let x = g.gather_rows(hidden, rows)?;
                let h = self.dense(g, x, ids.dense_w, ids.dense_b)?;
                let h = g.gelu(h)?;
                let (gamma, beta) = ids.norm.expect("token heads are normalized");
                let gamma = self.p(g, gamma)?;
                let beta = self.p(g, beta)?;
                let h = g.layer_norm(h, gamma, beta)?;
                let logits = match ids.out_w {
                    Some(w) => {
                        let w = self.p(g, w)?;
                        g.matmul(h, w)?
                    }
                    None => {
                        let table = self.p(g, self.layout.token)?;
                        g.matmul_bt(h, table)?
                    }
                };
                let b = self.p(g, ids.out_b)?;
                g.add_row(logits, b)
            }
            LossLevel::Sentence => {
                let cls = g.gather_rows(hidden, &[0])?;
                let h = self.dense(g, cls, ids.dense_w, ids.dense_b)?;
                let h = g.tanh(h)?;
                let w = self.p(g, ids.out_w.expect("sentence heads are untied"))?;
                let logits = g.matmul(h, w)?;
                let b = self.p(g, ids.out_b)?;
                g.add_row(logits, b)
            }
        }
    }

    /// Mean cross-entropy of one head: over `loss_mask` positions for token
    /// heads, over the `[CLS]` logits for sentence heads.
    pub fn head_loss(
        &self,
        g: &mut Graph<T>,
        name: &str,
        hidden: NodeId,
        labels: HeadLabels<'_>,
        loss_mask: &[bool],
    ) -> Result<NodeId> {
        let spec = self.config.head(name)?;
        match (spec.level, labels) {
            (LossLevel::Token, HeadLabels::Token(labels)) => {
                let mut rows = Vec::new();
                let mut targets = Vec::new();
                for (i, &on) in loss_mask.iter().enumerate() {
                    if on {
                        let t = labels
                            .get(i)
                            .copied()
                            .flatten()
                            .ok_or_else(|| Error::MissingLabels(name.to_string()))?;
                        rows.push(i);
                        targets.push(t as usize);
                    }
                }
                if rows.is_empty() {
                    return Err(Error::EmptyLossMask(name.to_string()));
                }
                let logits = self.head_logits(g, name, hidden, &rows)?;
                g.cross_entropy(logits, &targets)
            }
            (LossLevel::Sentence, HeadLabels::Sentence(label)) => {
                let logits = self.head_logits(g, name, hidden, &[0])?;
                g.cross_entropy(logits, &[label as usize])
            }
            _ => Err(Error::MissingLabels(name.to_string())),
        }
    }

    /// Loss of the head serving the instance's own task.
    pub fn task_loss(&self, g: &mut Graph<T>, inst: &TaskInstance, hidden: NodeId) -> Result<NodeId> {
        let head = self.config.head_for_task(inst.task_id)?.name.clone();
        self.instance_head_loss(g, inst, hidden, &head)
    }

    fn instance_head_loss(&self, g: &mut Graph<T>, inst: &TaskInstance, hidden: NodeId, head: &str) -> Result<NodeId> {
        let spec = self.config.head(head)?;
        match spec.level {
            LossLevel::Token => {
                let task = spec.task_id.ok_or_else(|| Error::MissingLabels(head.to_string()))?;
                let labels = inst
                    .token_labels
                    .get(&task)
                    .ok_or_else(|| Error::MissingLabels(head.to_string()))?;
                let mask: Vec<bool> = if task == inst.task_id {
                    inst.loss_mask.clone()
                } else {
                    labels.iter().map(Option::is_some).collect()
                };
                self.head_loss(g, head, hidden, HeadLabels::Token(labels), &mask)
            }
            LossLevel::Sentence => {
                let own = spec.task_id.is_none_or(|t| t == inst.task_id);
                let label = inst
                    .sentence_label
                    .filter(|_| own)
                    .ok_or_else(|| Error::MissingLabels(head.to_string()))?;
                self.head_loss(g, head, hidden, HeadLabels::Sentence(label), &inst.loss_mask)
            }
        }
    }

    /// Weighted sum of enabled head losses per instance, averaged over the
    /// batch. At most one sentence-level head may be enabled.
    pub fn combined_loss(&self, g: &mut Graph<T>, batch: &[TaskInstance], enabled: &[(&str, f64)]) -> Result<NodeId> {
        let mut sentence: Option<&str> = None;
        for &(name, _) in enabled {
            if self.config.head(name)?.level == LossLevel::Sentence {
                if let Some(first) = sentence {
                    return Err(Error::MultipleSentenceHeads(first.to_string(), name.to_string()));
                }
                sentence = Some(name);
            }
        }
        if batch.is_empty() || enabled.is_empty() {
            return Err(Error::InvalidInstance("empty batch or no enabled heads".into()));
        }
        let mut total = None;
        for inst in batch {
            let enc = self.forward(g, inst)?;
            for &(name, weight) in enabled {
                let l = self.instance_head_loss(g, inst, enc.hidden, name)?;
                let l = if weight == 1.0 { l } else { g.scale(l, T::of(weight))? };
                total = Some(match total {
                    None => l,
                    Some(acc) => g.add(acc, l)?,
                });
            }
        }
        let total = total.unwrap();
        if batch.len() == 1 {
            Ok(total)
        } else {
            g.scale(total, T::of(1.0 / batch.len() as f64))
        }
    }

    /// Mean own-task loss over a batch.
    pub fn batch_loss(&self, g: &mut Graph<T>, batch: &[TaskInstance]) -> Result<NodeId> {
        let mut total = None;
        for inst in batch {
            let enc = self.forward(g, inst)?;
            let l = self.task_loss(g, inst, enc.hidden)?;
            total = Some(match total {
                None => l,
                Some(acc) => g.add(acc, l)?,
            });
        }
        let total = total.ok_or_else(|| Error::InvalidInstance("empty batch".into()))?;
        if batch.len() == 1 {
            Ok(total)
        } else {
            g.scale(total, T::of(1.0 / batch.len() as f64))
        }
    }

    /// Argmax predictions of `head` with the matching targets: one pair per
    /// scored position (token heads) or a single pair (sentence heads).
    pub fn predict(&self, inst: &TaskInstance, head: &str) -> Result<Vec<(usize, usize)>> {
        let spec = self.config.head(head)?.clone();
        let mut g = Graph::new();
        let enc = self.forward(&mut g, inst)?;
        let (rows, targets): (Vec<usize>, Vec<usize>) = match spec.level {
            LossLevel::Token => {
                let task = spec.task_id.ok_or_else(|| Error::MissingLabels(head.into()))?;
                let labels = inst
                    .token_labels
                    .get(&task)
                    .ok_or_else(|| Error::MissingLabels(head.into()))?;
                let mask: Vec<bool> = if task == inst.task_id {
                    inst.loss_mask.clone()
                } else {
                    labels.iter().map(Option::is_some).collect()
                };
                (0..inst.len())
                    .filter(|&i| mask[i])
                    .map(|i| {
                        labels[i]
                            .map(|t| (i, t as usize))
                            .ok_or_else(|| Error::MissingLabels(head.into()))
                    })
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .unzip()
            }
            LossLevel::Sentence => {
                let label = inst.sentence_label.ok_or_else(|| Error::MissingLabels(head.into()))?;
                (vec![0], vec![label as usize])
            }
        };
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let logits = self.head_logits(&mut g, head, enc.hidden, &rows)?;
        let v = g.value(logits);
        let (n, c) = v.dims2();
        Ok((0..n)
            .map(|r| {
                let row = &v.data()[r * c..(r + 1) * c];
                let arg = row
                    .iter()
                    .enumerate()
                    .fold(
                        (0, T::neg_infinity()),
                        |best, (j, &x)| if x > best.1 { (j, x) } else { best },
                    )
                    .0;
                (arg, targets[r])
            })
            .collect())
    }
}

impl Layout {
    fn build<T: Scalar>(config: &ModelConfig, params: &ParamStore<T>) -> Self {
        let id = |name: &str| {
            params
                .id(name)
                .unwrap_or_else(|| panic!("parameter `{name}` registered"))
        };
        let layers = (0..config.layers)
            .map(|l| {
                let p = |s: &str| id(&format!("layer.{l}.{s}"));
                LayerIds {
                    wq: p("attn.wq"),
                    bq: p("attn.bq"),
                    wk: p("attn.wk"),
                    bk: p("attn.bk"),
                    wv: p("attn.wv"),
                    bv: p("attn.bv"),
                    wo: p("attn.wo"),
                    bo: p("attn.bo"),
                    attn_gamma: p("attn.ln.gamma"),
                    attn_beta: p("attn.ln.beta"),
                    w1: p("ffn.w1"),
                    b1: p("ffn.b1"),
                    w2: p("ffn.w2"),
                    b2: p("ffn.b2"),
                    ffn_gamma: p("ffn.ln.gamma"),
                    ffn_beta: p("ffn.ln.beta"),
                }
            })
            .collect();
        let heads = config
            .output_heads
            .iter()
            .map(|h| {
                let p = |s: &str| id(&format!("head.{}.{s}", h.name));
                HeadIds {
                    dense_w: p("dense.w"),
                    dense_b: p("dense.b"),
                    norm: (h.level == LossLevel::Token).then(|| (p("ln.gamma"), p("ln.beta"))),
                    out_w: (!h.tied).then(|| p("out.w")),
                    out_b: p("out.b"),
                }
            })
            .collect();
        Layout {
            token: id("emb.token"),
            segment: id("emb.segment"),
            position: id("emb.position"),
            task: id("emb.task"),
            emb_gamma: id("emb.ln.gamma"),
            emb_beta: id("emb.ln.beta"),
            layers,
            heads,
        }
    }
}
