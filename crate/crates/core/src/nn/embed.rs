use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::element::Element;
use crate::error::{Error, Result};
use crate::nn::init;
use crate::nn::spec::LayerSpec;
use crate::rng::StreamKey;

impl<T: Element> Tape<T> {
    /// `[D, Hp, Wp]` features → `[(Hp·Wp + 1), D]` tokens: CLS first, then grid
    /// cells in row-major order, each plus its positional row.
    pub fn patchify_embed(&mut self, features: Var, pos_table: Var, cls: Var) -> Result<Var> {
        let (d, hp, wp) = match *self.value(features).dims() {
            [d, h, w] => (d, h, w),
            ref dims => return Err(Error::geometry("patchify_embed", format!("expected [D, Hp, Wp], got {dims:?}"))),
        };
        let n = hp * wp;
        if self.value(pos_table).dims() != [n + 1, d] {
            return Err(Error::geometry(
                "patchify_embed",
                format!(
                    "positional table has dims {:?}, expected [{}, {d}]",
                    self.value(pos_table).dims(),
                    n + 1
                ),
            ));
        }
        if self.value(cls).numel() != d {
            return Err(Error::geometry("patchify_embed", format!("CLS token must have {d} elements")));
        }
        let flat = self.reshape(features, &[d, n])?;
        let tokens = self.transpose(flat)?;
        let cls_row = self.reshape(cls, &[1, d])?;
        let seq = self.concat_rows(&[cls_row, tokens])?;
        self.add(seq, pos_table)
    }

    /// Patch rows of a token sequence back onto the `[D, Hp, Wp]` grid (CLS dropped).
    pub fn depatchify(&mut self, seq: Var, grid: (usize, usize)) -> Result<Var> {
        let (rows, d) = match *self.value(seq).dims() {
            [r, d] => (r, d),
            ref dims => return Err(Error::geometry("depatchify", format!("expected [N+1, D], got {dims:?}"))),
        };
        let n = grid.0 * grid.1;
        if rows != n + 1 {
            return Err(Error::geometry("depatchify", format!("{rows} rows cannot hold {n} patches plus CLS")));
        }
        let patches = self.slice_rows(seq, 1, n)?;
        let cols = self.transpose(patches)?;
        self.reshape(cols, &[d, grid.0, grid.1])
    }
}

/// Learned CLS token and positional table for a fixed patch grid.
#[derive(Debug, Clone)]
pub struct PatchEmbedding {
    pub cls: ParamId,
    pub positions: ParamId,
    pub dim: usize,
    pub grid: (usize, usize),
}

pub const EMBED_INIT_STD: f64 = 0.02;

impl PatchEmbedding {
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        dim: usize,
        grid: (usize, usize),
        key: StreamKey,
    ) -> Result<Self> {
        let rows = grid.0 * grid.1 + 1;
        let cls = store.insert(format!("{name}.cls"), init::normal(key.named(&format!("{name}.cls")), &[dim], EMBED_INIT_STD))?;
        let positions = store.insert(
            format!("{name}.positions"),
            init::normal(key.named(&format!("{name}.positions")), &[rows, dim], EMBED_INIT_STD),
        )?;
        Ok(PatchEmbedding { cls, positions, dim, grid })
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::EmbeddingTable { dim: self.dim, grid: self.grid }
    }

    pub fn forward<T: Element>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, features: Var) -> Result<Var> {
        self.spec().output_dims(tape.value(features).dims())?;
        let pos = tape.param(store, self.positions);
        let cls = tape.param(store, self.cls);
        tape.patchify_embed(features, pos, cls)
    }
}
