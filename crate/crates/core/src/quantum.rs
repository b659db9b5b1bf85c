//! Finite-dimensional states, observables and weak values.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Below this overlap magnitude the postselection is treated as orthogonal
/// and weak values are undefined.
pub const OVERLAP_THRESHOLD: f64 = 1e-14;

/// Entrywise tolerance for the Hermiticity check.
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;

/// A normalized pure state of the measured system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    amplitudes: DVector<Complex64>,
}

impl SystemState {
    /// Builds a state from raw amplitudes, normalizing them.
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(Error::DimensionTooSmall(amplitudes.len()));
        }
        let v = DVector::from_vec(amplitudes);
        let norm = v.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(Self {
            amplitudes: v.unscale(norm),
        })
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::new(amplitudes.iter().map(|&a| Complex64::new(a, 0.0)).collect())
    }

    /// Computational basis vector `|index⟩`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::invalid("index", format!("{index} >= dim {dim}")));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[index] = Complex64::new(1.0, 0.0);
        Self::new(amps)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        self.amplitudes.as_slice()
    }

    pub(crate) fn vector(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }
}

/// A Hermitian operator on the system.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    matrix: DMatrix<Complex64>,
}

impl Observable {
    /// Builds an observable from rows of complex entries.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.len();
        if dim < 2 {
            return Err(Error::DimensionTooSmall(dim));
        }
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
        }
        let matrix = DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
        Self::from_matrix(matrix)
    }

    pub fn from_matrix(matrix: DMatrix<Complex64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if matrix.nrows() < 2 {
            return Err(Error::DimensionTooSmall(matrix.nrows()));
        }
        let deviation = max_hermitian_deviation(&matrix);
        if !(deviation <= HERMITIAN_TOLERANCE) {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Self { matrix })
    }

    pub fn diagonal(eigenvalues: &[f64]) -> Result<Self> {
        let dim = eigenvalues.len();
        let matrix = DMatrix::from_fn(dim, dim, |i, j| {
            if i == j {
                Complex64::new(eigenvalues[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        Self::from_matrix(matrix)
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::diagonal(&vec![1.0; dim])
    }

    /// `diag(1, -1)`: eigenvalue 1 on `|↑⟩ = |0⟩`, -1 on `|↓⟩ = |1⟩`.
    pub fn pauli_z() -> Self {
        Self::diagonal(&[1.0, -1.0]).expect("diag(1,-1) is Hermitian")
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    /// Real linear combination `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Observable, b: f64) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Self::from_matrix(self.matrix.scale(a) + other.matrix.scale(b))
    }

    /// Spectral decomposition with eigenvalues in ascending order.
    pub fn eigen(&self) -> HermitianEigen {
        let decomposition = SymmetricEigen::new(self.matrix.clone());
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| decomposition.eigenvalues[a].total_cmp(&decomposition.eigenvalues[b]));
        let values = order.iter().map(|&i| decomposition.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(self.dim(), self.dim(), |r, c| {
            decomposition.eigenvectors[(r, order[c])]
        });
        HermitianEigen { values, vectors }
    }

    /// Largest eigenvalue magnitude.
    pub fn spectral_radius(&self) -> f64 {
        self.eigen().values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }
}

fn max_hermitian_deviation(matrix: &DMatrix<Complex64>) -> f64 {
    let n = matrix.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let d = (matrix[(i, j)] - matrix[(j, i)].conj()).norm();
            if d.is_nan() {
                return f64::NAN;
            }
            worst = worst.max(d);
        }
    }
    worst
}

/// Eigenvalues (ascending) and orthonormal eigenvectors stored as columns.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
}

/// One term of `⟨Φ|Ψ⟩`-weighted spectral decomposition: the eigenvalue `c`
/// and the weight `⟨Φ|c⟩⟨c|Ψ⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub eigenvalue: f64,
    pub weight: Complex64,
}

/// Pre- and postselected states, `⟨Φ| |Ψ⟩`. The postselected state is
/// stored as a ket and conjugated on use.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStateVector {
    pre: SystemState,
    post: SystemState,
}

impl TwoStateVector {
    pub fn new(pre: SystemState, post: SystemState) -> Result<Self> {
        if pre.dim() != post.dim() {
            return Err(Error::DimensionMismatch {
                expected: pre.dim(),
                found: post.dim(),
            });
        }
        Ok(Self { pre, post })
    }

    /// The two-level example with `C = diag(1,-1)`, pre ∝ `(1+iw, 1-iw)` and
    /// post ∝ `(1, 1)`, whose weak value is `iw`.
    pub fn qubit_example(w: f64) -> (Self, Observable) {
        let pre = SystemState::new(vec![Complex64::new(1.0, w), Complex64::new(1.0, -w)])
            .expect("nonzero for finite w");
        let post = SystemState::from_real(&[1.0, 1.0]).expect("nonzero");
        (
            Self::new(pre, post).expect("both two-dimensional"),
            Observable::pauli_z(),
        )
    }

    pub fn pre(&self) -> &SystemState {
        &self.pre
    }

    pub fn post(&self) -> &SystemState {
        &self.post
    }

    pub fn dim(&self) -> usize {
        self.pre.dim()
    }

    /// `⟨Φ|Ψ⟩`.
    pub fn overlap(&self) -> Complex64 {
        self.post.vector().dotc(self.pre.vector())
    }

    /// `|⟨Φ|Ψ⟩|²`, the zeroth-order postselection probability.
    pub fn overlap_probability(&self) -> f64 {
        self.overlap().norm_sqr()
    }

    fn checked_overlap(&self, obs: &Observable) -> Result<Complex64> {
        if obs.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: obs.dim(),
            });
        }
        let overlap = self.overlap();
        if overlap.norm() < OVERLAP_THRESHOLD {
            return Err(Error::DegeneratePostselection {
                overlap: overlap.norm(),
            });
        }
        Ok(overlap)
    }

    /// `C_w = ⟨Φ|C|Ψ⟩ / ⟨Φ|Ψ⟩`.
    pub fn weak_value(&self, obs: &Observable) -> Result<Complex64> {
        self.weak_value_moment(obs, 1)
    }

    /// `(Cⁿ)_w = ⟨Φ|Cⁿ|Ψ⟩ / ⟨Φ|Ψ⟩`, applying `C` to `|Ψ⟩` n times.
    pub fn weak_value_moment(&self, obs: &Observable, n: u32) -> Result<Complex64> {
        if n == 0 {
            return Err(Error::invalid("n", "moment order must be at least 1"));
        }
        let overlap = self.checked_overlap(obs)?;
        let mut v = self.pre.vector().clone();
        for _ in 0..n {
            v = obs.matrix() * v;
        }
        Ok(self.post.vector().dotc(&v) / overlap)
    }

    /// `(Cⁿ)_w − (C_w)ⁿ`, the coefficient of `(ikP)ⁿ/n!` in the remainder of
    /// the weak-value expansion of `⟨Φ|exp(-ikPC)|Ψ⟩ / ⟨Φ|Ψ⟩`.
    pub fn remainder_coefficient(&self, obs: &Observable, n: u32) -> Result<Complex64> {
        if n < 2 {
            return Err(Error::invalid("n", "remainder terms start at n = 2"));
        }
        let moment = self.weak_value_moment(obs, n)?;
        let cw = self.weak_value(obs)?;
        Ok(moment - cw.powu(n))
    }

    /// Decomposes `⟨Φ|f(C)|Ψ⟩ = Σ f(c)·weight` over the eigenbasis of `obs`.
    pub fn branches(&self, obs: &Observable) -> Result<Vec<Branch>> {
        if obs.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: obs.dim(),
            });
        }
        let eig = obs.eigen();
        Ok(eig
            .values
            .iter()
            .enumerate()
            .map(|(j, &eigenvalue)| {
                let col = eig.vectors.column(j);
                Branch {
                    eigenvalue,
                    weight: col.dotc(self.post.vector()).conj() * col.dotc(self.pre.vector()),
                }
            })
            .collect())
    }

    /// `⟨Φ|exp(-i·k·p·C)|Ψ⟩`, exact.
    pub fn transition_amplitude(&self, obs: &Observable, k: f64, p: f64) -> Result<Complex64> {
        Ok(transition_amplitude(&self.branches(obs)?, k * p))
    }
}

/// `Σ_j weight_j · exp(-i·phase·c_j)` for a pre-computed branch list.
pub fn transition_amplitude(branches: &[Branch], phase: f64) -> Complex64 {
    branches
        .iter()
        .map(|b| b.weight * Complex64::from_polar(1.0, -phase * b.eigenvalue))
        .sum()
}
