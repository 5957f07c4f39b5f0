use nalgebra::{DMatrix, DVector};

/// Structured generalized Jacobian of a Euclidean proximal map.
#[derive(Debug, Clone, PartialEq)]
pub enum ProxJacobian {
    Identity,
    Scaled(f64),
    /// Diagonal 0/1 matrix.
    Mask(Vec<bool>),
    /// Per group either the identity (`None`) or `f (I - u u^T)`.
    BallBlocks {
        group: usize,
        blocks: Vec<Option<(f64, Vec<f64>)>>,
    },
    /// `I - a a^T` for a unit vector `a`.
    Projector(DVector<f64>),
}

impl ProxJacobian {
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            ProxJacobian::Identity => v.clone(),
            ProxJacobian::Scaled(s) => v * *s,
            ProxJacobian::Mask(mask) => DVector::from_iterator(
                v.len(),
                v.iter().zip(mask).map(|(&t, &keep)| if keep { t } else { 0.0 }),
            ),
            ProxJacobian::BallBlocks { group, blocks } => {
                let mut out = v.clone();
                for (chunk, block) in out.as_mut_slice().chunks_mut(*group).zip(blocks) {
                    if let Some((f, u)) = block {
                        let dot: f64 = chunk.iter().zip(u).map(|(a, b)| a * b).sum();
                        for (c, ui) in chunk.iter_mut().zip(u) {
                            *c = f * (*c - dot * ui);
                        }
                    }
                }
                out
            }
            ProxJacobian::Projector(a) => v - a * a.dot(v),
        }
    }

    pub fn apply_columns(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for j in 0..m.ncols() {
            out.set_column(j, &self.apply(&m.column(j).into_owned()));
        }
        out
    }

    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        self.apply_columns(&DMatrix::identity(n, n))
    }
}
