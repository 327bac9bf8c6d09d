//! Dense two-qudit gate algebra for the sorter circuit.
//!
//! Basis convention for the mass ⊗ path space: the composite state
//! `|k⟩_mass |s⟩_path` lives at flat index `N·k + s` (mass-major). The DFT
//! uses `ω = exp(+2πi/N)`.
//!
//! All gates are stored densely. `N` is small (a handful of species), so the
//! two-qudit matrices stay at most a few thousand entries.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used for unitarity and normalisation checks.
pub const UNITARY_TOL: f64 = 1e-12;

/// `ω^p` with `ω = exp(2πi/n)`, reduced mod `n` before evaluating so large
/// exponents do not lose precision.
pub fn root_of_unity(n: usize, p: usize) -> Complex64 {
    let p = p % n;
    Complex64::from_polar(1.0, 2.0 * PI * p as f64 / n as f64)
}

/// Composite index of a mass/path basis state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisIndex {
    pub mass: usize,
    pub path: usize,
}

impl BasisIndex {
    pub fn new(mass: usize, path: usize) -> Self {
        Self { mass, path }
    }

    pub fn compose(self, n: usize) -> usize {
        debug_assert!(self.mass < n && self.path < n);
        n * self.mass + self.path
    }

    pub fn decompose(flat: usize, n: usize) -> Self {
        Self {
            mass: flat / n,
            path: flat % n,
        }
    }
}

/// A dense square complex matrix, row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct GateMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl fmt::Debug for GateMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "GateMatrix({}x{})", self.dim, self.dim)?;
        for r in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|c| {
                    let z = self[(r, c)];
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl std::ops::Index<(usize, usize)> for GateMatrix {
    type Output = Complex64;

    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.entries[r * self.dim + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for GateMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.entries[r * self.dim + c]
    }
}

impl GateMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Build from row-major entries; `entries.len()` must be a perfect square.
    pub fn from_rows(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                actual: entries.len(),
            });
        }
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.dim);
        for r in 0..self.dim {
            for c in 0..self.dim {
                out[(c, r)] = self[(r, c)].conj();
            }
        }
        out
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &GateMatrix) -> Self {
        let n = self.dim * other.dim;
        let mut out = Self::zeros(n);
        for (ar, ac) in (0..self.dim).flat_map(|r| (0..self.dim).map(move |c| (r, c))) {
            let a = self[(ar, ac)];
            if a == Complex64::new(0.0, 0.0) {
                continue;
            }
            for br in 0..other.dim {
                for bc in 0..other.dim {
                    out[(ar * other.dim + br, ac * other.dim + bc)] = a * other[(br, bc)];
                }
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &GateMatrix) -> Result<Self> {
        if self.dim != rhs.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: rhs.dim,
            });
        }
        let n = self.dim;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for k in 0..n {
                let a = self[(r, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let row = &rhs.entries[k * n..(k + 1) * n];
                let dst = &mut out.entries[r * n..(r + 1) * n];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &GateMatrix) -> f64 {
        assert_eq!(self.dim, other.dim, "max_abs_diff on mismatched dims");
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `max |(G†G − I)_ij|`.
    pub fn unitarity_defect(&self) -> f64 {
        let prod = self.adjoint().matmul(self).expect("square");
        prod.max_abs_diff(&Self::identity(self.dim))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() <= tol
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        (0..self.dim)
            .flat_map(|r| (0..self.dim).map(move |c| (r, c)))
            .filter(|(r, c)| r != c)
            .all(|ix| self[ix].norm() <= tol)
    }

    /// Column `c` as a vector, i.e. the image of basis state `|c⟩`.
    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.dim).map(|r| self[(r, c)]).collect()
    }

    /// Matrix-vector product without the normalisation precondition.
    pub fn mul_vec(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        Ok(self
            .entries
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Integer power by repeated squaring.
    pub fn pow(&self, mut exp: u32) -> Self {
        let mut base = self.clone();
        let mut acc = Self::identity(self.dim);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc.matmul(&base).expect("square");
            }
            base = base.matmul(&base).expect("square");
            exp >>= 1;
        }
        acc
    }
}

impl Mul for &GateMatrix {
    type Output = GateMatrix;

    fn mul(self, rhs: &GateMatrix) -> GateMatrix {
        self.matmul(rhs).expect("gate dimensions must agree")
    }
}

fn check_dim(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidDimension(
            "qudit dimension must be >= 1".into(),
        ));
    }
    Ok(())
}

/// The discrete Fourier transform on `n` paths: entry `(j, k) = ω^{jk}/√n`.
pub fn dft_matrix(n: usize) -> Result<GateMatrix> {
    check_dim(n)?;
    let scale = 1.0 / (n as f64).sqrt();
    let mut m = GateMatrix::zeros(n);
    for j in 0..n {
        for k in 0..n {
            m[(j, k)] = root_of_unity(n, j * k) * scale;
        }
    }
    Ok(m)
}

/// `I_mass ⊗ G_path`.
pub fn on_path(n: usize, path_gate: &GateMatrix) -> GateMatrix {
    GateMatrix::identity(n).kron(path_gate)
}

/// Controlled phase gate `|k,s⟩ → ω^{ks}|k,s⟩`.
pub fn controlled_z(n: usize) -> Result<GateMatrix> {
    check_dim(n)?;
    let diag: Vec<Complex64> = (0..n * n)
        .map(|flat| {
            let BasisIndex { mass, path } = BasisIndex::decompose(flat, n);
            root_of_unity(n, mass * path)
        })
        .collect();
    Ok(GateMatrix::from_diagonal(&diag))
}

/// Conjugates a two-qudit gate by the path DFT: `(I⊗F†) G (I⊗F)`.
pub fn fourier_conjugate(n: usize, gate: &GateMatrix) -> Result<GateMatrix> {
    if gate.dim() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            actual: gate.dim(),
        });
    }
    let f = dft_matrix(n)?;
    let left = on_path(n, &f.adjoint());
    let right = on_path(n, &f);
    left.matmul(gate)?.matmul(&right)
}

/// Controlled shift `|k,s⟩ → |k, s⊕k⟩`, built through the Fourier identity
/// from [`controlled_z`].
pub fn controlled_x(n: usize) -> Result<GateMatrix> {
    check_dim(n)?;
    fourier_conjugate(n, &controlled_z(n)?)
}

/// Applies `gate` to a normalised state.
pub fn apply(gate: &GateMatrix, state: &[Complex64]) -> Result<Vec<Complex64>> {
    if state.len() != gate.dim() {
        return Err(Error::DimensionMismatch {
            expected: gate.dim(),
            actual: state.len(),
        });
    }
    let norm = norm(state);
    if (norm - 1.0).abs() > UNITARY_TOL {
        return Err(Error::NotNormalized(norm));
    }
    gate.mul_vec(state)
}

pub fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Basis state `|index⟩` in a space of dimension `dim`.
pub fn basis_state(dim: usize, index: usize) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); dim];
    v[index] = Complex64::new(1.0, 0.0);
    v
}
