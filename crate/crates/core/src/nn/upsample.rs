use crate::autodiff::{Tape, Var};
use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Source index for nearest-neighbour resampling of `src` onto `dst` positions.
fn nearest(i: usize, src: usize, dst: usize) -> usize {
    ((i * src) / dst).min(src - 1)
}

impl<T: Element> Tape<T> {
    /// Nearest-neighbour resize of `[C, H, W]` to `[C, target.0, target.1]`.
    pub fn upsample_nearest(&mut self, x: Var, target: (usize, usize)) -> Result<Var> {
        let (c, h, w) = match *self.value(x).dims() {
            [c, h, w] => (c, h, w),
            ref d => return Err(Error::geometry("upsample", format!("expected [C, H, W], got {d:?}"))),
        };
        let (th, tw) = target;
        if th == 0 || tw == 0 {
            return Err(Error::geometry("upsample", format!("target {target:?} must be positive")));
        }
        if (h, w) == target {
            return Ok(x);
        }
        let index: Vec<usize> = (0..c)
            .flat_map(|ch| {
                (0..th).flat_map(move |i| (0..tw).map(move |j| (ch * h + nearest(i, h, th)) * w + nearest(j, w, tw)))
            })
            .collect();
        let src = self.value(x).data();
        let out = Tensor::from_vec(&[c, th, tw], index.iter().map(|&k| src[k]).collect())?;
        Ok(self.custom(
            &[x],
            out,
            Box::new(move |ctx| {
                let mut g = Tensor::zeros(ctx.inputs[0].dims());
                for (&k, &v) in index.iter().zip(ctx.grad.data()) {
                    g.data_mut()[k] += v;
                }
                Ok(vec![Some(g)])
            }),
        ))
    }
}
