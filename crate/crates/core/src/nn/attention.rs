use crate::autodiff::{ParamStore, Tape, Var};
use crate::element::Element;
use crate::error::Result;
use crate::nn::linear::Linear;
use crate::nn::norm::LayerNorm;
use crate::nn::spec::LayerSpec;
use crate::rng::StreamKey;

/// Multi-head self-attention over a token sequence `[L, D]`.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub dim: usize,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Element>(store: &mut ParamStore<T>, name: &str, dim: usize, heads: usize, key: StreamKey) -> Result<Self> {
        // validates divisibility before any parameter is created
        LayerSpec::MultiHeadAttention { dim, heads }.output_dims(&[1, dim])?;
        Ok(MultiHeadAttention {
            query: Linear::new(store, &format!("{name}.query"), dim, dim, key)?,
            key: Linear::new(store, &format!("{name}.key"), dim, dim, key)?,
            value: Linear::new(store, &format!("{name}.value"), dim, dim, key)?,
            output: Linear::new(store, &format!("{name}.output"), dim, dim, key)?,
            dim,
            heads,
        })
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::MultiHeadAttention { dim: self.dim, heads: self.heads }
    }

    pub fn forward<T: Element>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        self.forward_with_weights(tape, store, x).map(|(out, _)| out)
    }

    /// Output plus the per-head attention matrices `[L, L]`.
    pub fn forward_with_weights<T: Element>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
    ) -> Result<(Var, Vec<Var>)> {
        self.spec().output_dims(tape.value(x).dims())?;
        let head_dim = self.dim / self.heads;
        let scale = T::one() / T::of_usize(head_dim).sqrt();
        let q = self.query.forward(tape, store, x)?;
        let k = self.key.forward(tape, store, x)?;
        let v = self.value.forward(tape, store, x)?;
        let mut heads = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qh, kh, vh) = if self.heads == 1 {
                (q, k, v)
            } else {
                (
                    tape.slice_cols(q, h * head_dim, head_dim)?,
                    tape.slice_cols(k, h * head_dim, head_dim)?,
                    tape.slice_cols(v, h * head_dim, head_dim)?,
                )
            };
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale);
            let attn = tape.softmax_rows(scores)?;
            heads.push(tape.matmul(attn, vh)?);
            weights.push(attn);
        }
        let merged = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads)? };
        Ok((self.output.forward(tape, store, merged)?, weights))
    }
}

/// Two-layer GELU feed-forward block.
#[derive(Debug, Clone)]
pub struct MlpBlock {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl MlpBlock {
    pub fn new<T: Element>(store: &mut ParamStore<T>, name: &str, dim: usize, hidden: usize, key: StreamKey) -> Result<Self> {
        Ok(MlpBlock {
            fc1: Linear::new(store, &format!("{name}.fc1"), dim, hidden, key)?,
            fc2: Linear::new(store, &format!("{name}.fc2"), hidden, dim, key)?,
        })
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::MlpBlock { dim: self.fc1.in_features, hidden: self.fc1.out_features }
    }

    pub fn forward<T: Element>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        self.spec().output_dims(tape.value(x).dims())?;
        let h = self.fc1.forward(tape, store, x)?;
        let h = tape.gelu(h);
        self.fc2.forward(tape, store, h)
    }
}

/// Pre-norm transformer encoder block: `x + attn(ln(x))`, then `x + mlp(ln(x))`.
#[derive(Debug, Clone)]
pub struct TransformerBlock {
    pub norm1: LayerNorm,
    pub attention: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub mlp: MlpBlock,
}

impl TransformerBlock {
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        dim: usize,
        heads: usize,
        mlp_hidden: usize,
        eps: f64,
        key: StreamKey,
    ) -> Result<Self> {
        Ok(TransformerBlock {
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), dim, eps)?,
            attention: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, heads, key)?,
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), dim, eps)?,
            mlp: MlpBlock::new(store, &format!("{name}.mlp"), dim, mlp_hidden, key)?,
        })
    }

    pub fn forward<T: Element>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let h = self.norm1.forward(tape, store, x)?;
        let h = self.attention.forward(tape, store, h)?;
        let x = tape.add(x, h)?;
        let h = self.norm2.forward(tape, store, x)?;
        let h = self.mlp.forward(tape, store, h)?;
        tape.add(x, h)
    }
}
