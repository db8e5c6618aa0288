//! Dense double-precision building blocks: matrices, MLPs, transformer
//! blocks with hand-written backward passes, Adam and a gradient checker.

mod adam;
mod attention;
pub mod checkpoint;
pub mod eigen;
mod gradcheck;
mod mlp;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use attention::{
    log_softmax_rows, softmax_rows, AttentionCache, Block, BlockCache, KvCache, LayerNorm, LayerNormCache,
    MultiHeadAttention,
};
pub(crate) use attention::log_softmax_in_place;
pub use gradcheck::finite_diff_check;
pub use mlp::{Activation, Layer, Mlp, MlpCache};
pub use tensor::{dot, l2_norm, sq_dist, Tensor2};

/// A bundle of trainable tensors with a stable visiting order.
///
/// Gradients of a model are represented by a value of the same type, so
/// `tensors()` of a model and of its gradient line up index by index.
pub trait Params {
    fn tensors(&self) -> Vec<&Tensor2>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor2>;
    /// Names in the same order as `tensors()`.
    fn names(&self) -> Vec<String>;
    fn zeros_like(&self) -> Self
    where
        Self: Sized;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data().len()).sum()
    }

    fn flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    fn set_flat(&mut self, values: &[f64]) {
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.data().len();
            t.data_mut().copy_from_slice(&values[off..off + n]);
            off += n;
        }
        assert_eq!(off, values.len(), "flat parameter length mismatch");
    }

    fn accumulate(&mut self, other: &Self, scale: f64)
    where
        Self: Sized,
    {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_scaled(b, scale);
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

/// Prefixes every name of `p` with `prefix.`.
pub(crate) fn prefixed<P: Params>(prefix: &str, p: &P) -> Vec<String> {
    p.names().into_iter().map(|n| format!("{prefix}.{n}")).collect()
}
