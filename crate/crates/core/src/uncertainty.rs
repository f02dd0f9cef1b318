//! Precision structure over gradient-difference features.
//!
//! The full mode keeps the inverse of `V = λI + Σ φφᵀ` directly and updates it
//! with the Sherman–Morrison identity on every absorbed feature. The diagonal
//! mode keeps only `diag(V)`, for parameter counts where a dense `p × p`
//! matrix does not fit.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UncertaintyMode {
    Full,
    Diagonal,
}

impl std::str::FromStr for UncertaintyMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "diag" | "diagonal" => Ok(Self::Diagonal),
            other => Err(Error::Config(format!("unknown uncertainty mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum UncertaintyState {
    Full {
        lambda: f64,
        v_inv: Array2<f64>,
        count: usize,
    },
    Diagonal {
        lambda: f64,
        v_diag: Array1<f64>,
        count: usize,
    },
}

impl UncertaintyState {
    pub fn new(mode: UncertaintyMode, p: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Config(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(match mode {
            UncertaintyMode::Full => Self::Full {
                lambda,
                v_inv: Array2::eye(p) / lambda,
                count: 0,
            },
            UncertaintyMode::Diagonal => Self::Diagonal {
                lambda,
                v_diag: Array1::from_elem(p, lambda),
                count: 0,
            },
        })
    }

    pub fn mode(&self) -> UncertaintyMode {
        match self {
            Self::Full { .. } => UncertaintyMode::Full,
            Self::Diagonal { .. } => UncertaintyMode::Diagonal,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Full { v_inv, .. } => v_inv.nrows(),
            Self::Diagonal { v_diag, .. } => v_diag.len(),
        }
    }

    pub fn count(&self) -> usize {
        match self {
            Self::Full { count, .. } | Self::Diagonal { count, .. } => *count,
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            Self::Full { lambda, .. } | Self::Diagonal { lambda, .. } => *lambda,
        }
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                found: n,
            });
        }
        Ok(())
    }

    /// `‖g‖` in the norm induced by `V⁻¹`.
    pub fn uncertainty(&self, g: &[f64]) -> Result<f64> {
        self.check_len(g.len())?;
        let g = ArrayView1::from(g);
        let q = match self {
            Self::Full { v_inv, .. } => g.dot(&v_inv.dot(&g)),
            Self::Diagonal { v_diag, .. } => g.iter().zip(v_diag).map(|(x, v)| x * x / v).sum(),
        };
        Ok(q.max(0.0).sqrt())
    }

    /// Uncertainty of every row of `g` (`m × p`), computed with one matrix
    /// product in the full mode.
    pub fn uncertainty_rows(&self, g: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.check_len(g.ncols())?;
        let q = match self {
            Self::Full { v_inv, .. } => {
                let mut w = Array2::zeros(g.raw_dim());
                general_mat_mul(1.0, &g, v_inv, 0.0, &mut w);
                (&w * &g).sum_axis(Axis(1))
            }
            Self::Diagonal { v_diag, .. } => {
                let inv = v_diag.mapv(|v| 1.0 / v);
                (&g * &g).dot(&inv)
            }
        };
        Ok(q.mapv(|v| v.max(0.0).sqrt()))
    }

    /// Adds `φφᵀ` to `V`.
    pub fn absorb(&mut self, phi: &[f64]) -> Result<()> {
        self.check_len(phi.len())?;
        match self {
            Self::Full { v_inv, count, .. } => {
                let phi = ArrayView1::from(phi);
                let u = v_inv.dot(&phi);
                let denom = 1.0 + phi.dot(&u);
                // V⁻¹ ← V⁻¹ − (V⁻¹φ)(V⁻¹φ)ᵀ / (1 + φᵀV⁻¹φ). Each entry is
                // (u_i·u_j)·c, which is symmetric in i and j bit for bit.
                let c = 1.0 / denom;
                let u = u.as_slice().expect("contiguous");
                for (row, &ui) in v_inv.rows_mut().into_iter().zip(u) {
                    for (v, &uj) in row.into_iter().zip(u) {
                        *v -= (ui * uj) * c;
                    }
                }
                *count += 1;
            }
            Self::Diagonal { v_diag, count, .. } => {
                for (v, p) in v_diag.iter_mut().zip(phi) {
                    *v += p * p;
                }
                *count += 1;
            }
        }
        Ok(())
    }

    /// SHA-256 over the mode, λ, absorb count and every stored entry's bits.
    /// Two states share a fingerprint only if they are bit-identical.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        let (tag, lambda, count, values): (u8, f64, usize, Box<dyn Iterator<Item = &f64>>) =
            match self {
                Self::Full {
                    lambda,
                    v_inv,
                    count,
                } => (0, *lambda, *count, Box::new(v_inv.iter())),
                Self::Diagonal {
                    lambda,
                    v_diag,
                    count,
                } => (1, *lambda, *count, Box::new(v_diag.iter())),
            };
        h.update([tag]);
        h.update(lambda.to_bits().to_le_bytes());
        h.update((count as u64).to_le_bytes());
        h.update((self.dim() as u64).to_le_bytes());
        for v in values {
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Largest absolute asymmetry of the stored inverse (zero in diagonal mode).
    pub fn asymmetry(&self) -> f64 {
        match self {
            Self::Full { v_inv, .. } => {
                let mut worst: f64 = 0.0;
                for i in 0..v_inv.nrows() {
                    for j in 0..i {
                        worst = worst.max((v_inv[[i, j]] - v_inv[[j, i]]).abs());
                    }
                }
                worst
            }
            Self::Diagonal { .. } => 0.0,
        }
    }
}
