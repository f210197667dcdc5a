use crate::error::{contract, Result};

/// Borrowed view of one named parameter tensor.
#[derive(Debug, Clone, Copy)]
pub struct TensorView<'a> {
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

/// A fixed collection of binary64 tensors that can be flattened, zeroed and
/// updated in place. Gradients use the same type as the parameters they
/// belong to.
pub trait Params: Clone {
    /// All tensors with stable names, in a fixed order.
    fn tensors(&self) -> Vec<(String, TensorView<'_>)>;

    /// Mutable access to all tensors, same order as [`Params::tensors`].
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    /// Tensors that training updates. Defaults to every tensor.
    fn trainable(&self) -> Vec<&[f64]> {
        self.tensors().into_iter().map(|(_, t)| t.data).collect()
    }

    fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        self.tensors_mut()
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn num_trainable(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    /// Trainable values concatenated in order.
    fn flatten(&self) -> Vec<f64> {
        self.trainable().concat()
    }

    fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        contract!(
            flat.len() == self.num_trainable(),
            "flat vector of {} for {} trainable values",
            flat.len(),
            self.num_trainable()
        );
        let mut off = 0;
        for t in self.trainable_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    fn add_assign(&mut self, other: &Self) {
        let src = other.tensors();
        for (dst, (_, s)) in self.tensors_mut().into_iter().zip(src) {
            for (d, v) in dst.iter_mut().zip(s.data) {
                *d += v;
            }
        }
    }

    fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v *= k;
            }
        }
    }

    /// Overwrites every tensor with uniform(−bound, bound) draws.
    fn fill_uniform<R: rand::Rng>(&mut self, bound: f64, rng: &mut R) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v = rng.gen_range(-bound..bound);
            }
        }
    }

    fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.data.iter().all(|v| v.is_finite()))
    }
}

pub(crate) fn prefixed<'a>(
    prefix: &str,
    views: Vec<(String, TensorView<'a>)>,
) -> impl Iterator<Item = (String, TensorView<'a>)> + 'a {
    let prefix = prefix.to_string();
    views
        .into_iter()
        .map(move |(n, v)| (format!("{prefix}.{n}"), v))
}

pub(crate) fn view(rows: usize, cols: usize, data: &[f64]) -> TensorView<'_> {
    TensorView { rows, cols, data }
}
