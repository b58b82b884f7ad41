use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::nn::{Network, Tensor};

type QueryFn = dyn Fn(&Tensor) -> Result<Tensor> + Send + Sync;

/// Black-box access to a classifier: a batch goes in, logits come out.
///
/// There is no accessor for weights, architecture or gradients. Every call
/// to [`TeacherOracle::query`] is counted.
pub struct TeacherOracle {
    query: Box<QueryFn>,
    input_shape: Vec<usize>,
    num_classes: usize,
    queries: AtomicU64,
}

impl std::fmt::Debug for TeacherOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TeacherOracle")
            .field("input_shape", &self.input_shape)
            .field("num_classes", &self.num_classes)
            .field("queries", &self.query_count())
            .finish_non_exhaustive()
    }
}

impl TeacherOracle {
    /// Wraps an arbitrary logit function, e.g. a fabricated oracle.
    pub fn from_fn<F>(input_shape: Vec<usize>, num_classes: usize, f: F) -> Self
    where
        F: Fn(&Tensor) -> Result<Tensor> + Send + Sync + 'static,
    {
        TeacherOracle {
            query: Box::new(f),
            input_shape,
            num_classes,
            queries: AtomicU64::new(0),
        }
    }

    pub fn query(&self, batch: &Tensor) -> Result<Tensor> {
        let n = self.queries.fetch_add(1, Ordering::Relaxed) + 1;
        let logits = (self.query)(batch).map_err(|e| Error::Oracle {
            query: n,
            reason: e.to_string(),
        })?;
        if logits.shape() != [batch.rows(), self.num_classes] {
            return Err(Error::Oracle {
                query: n,
                reason: format!(
                    "oracle returned {:?} for a batch of {}",
                    logits.shape(),
                    batch.rows()
                ),
            });
        }
        Ok(logits)
    }

    pub fn query_count(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

/// Seals a trained network behind a [`TeacherOracle`]. The network moves
/// into the oracle and cannot be recovered from it.
pub fn as_oracle(net: Network) -> TeacherOracle {
    let input_shape = net.input_shape().to_vec();
    let num_classes = net.num_classes();
    TeacherOracle::from_fn(input_shape, num_classes, move |batch| net.forward(batch))
}
