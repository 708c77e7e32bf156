//! Discrete-time LTI models, simulation, observability analysis and the
//! structural matrices feeding the auxiliary representation.
//!
//! For an observable pair `(A, C)` with observability index `ell`, the
//! structural data are the stacked output map `O`, the block-Toeplitz
//! input-to-stacked-output map `T`, the input reachability block row `R`, and
//! a left inverse of `O`. They combine into the one-step output predictor
//! `Z = [Z1 Z2]` with `Z1 = C A^ell O^L` and `Z2 = C R - C A^ell O^L T`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{self, DEFAULT_RANK_TOL};

#[derive(Debug, Error)]
pub enum LtiError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("pair (A, C) is unobservable: stacked rank {rank} < state dimension {n}")]
    Unobservable { rank: usize, n: usize },
    #[error("left inverse of the stacked output map failed: |OL*O - I| = {defect:.3e}")]
    LeftInverse { defect: f64 },
}

/// A discrete-time state-space model `x+ = A x + B u`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl StateSpaceModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self, LtiError> {
        if a.nrows() != a.ncols() {
            return Err(LtiError::Dimension(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        if n == 0 || b.ncols() == 0 || c.nrows() == 0 {
            return Err(LtiError::Dimension(
                "state, input and output dimensions must all be at least 1".into(),
            ));
        }
        if b.nrows() != n {
            return Err(LtiError::Dimension(format!(
                "B has {} rows, expected {}",
                b.nrows(),
                n
            )));
        }
        if c.ncols() != n {
            return Err(LtiError::Dimension(format!(
                "C has {} columns, expected {}",
                c.ncols(),
                n
            )));
        }
        Ok(Self { a, b, c })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Output dimension.
    pub fn p(&self) -> usize {
        self.c.nrows()
    }
}

/// Stacked-window structural matrices of an observable pair.
#[derive(Debug, Clone)]
pub struct StructuralMatrices {
    pub ell: usize,
    /// `[C; CA; ...; C A^(ell-1)]`, `p*ell x n`.
    pub o: DMatrix<f64>,
    /// Block lower-triangular map from stacked inputs to stacked outputs,
    /// `p*ell x m*ell`, zero diagonal blocks.
    pub t: DMatrix<f64>,
    /// `[A^(ell-1) B, ..., A B, B]`, `n x m*ell`.
    pub r: DMatrix<f64>,
    /// Left inverse of `o` (Moore-Penrose; the exact inverse when `o` is square).
    pub o_left: DMatrix<f64>,
}

/// One-step output predictor `Z = [Z1 Z2]` acting on the stacked window of
/// the last `ell` outputs and inputs.
#[derive(Debug, Clone)]
pub struct IoParameter {
    pub z1: DMatrix<f64>,
    pub z2: DMatrix<f64>,
}

impl IoParameter {
    /// The concatenation `[Z1 Z2]`, `p x (p+m)*ell`.
    pub fn z(&self) -> DMatrix<f64> {
        let p = self.z1.nrows();
        let mut z = DMatrix::zeros(p, self.z1.ncols() + self.z2.ncols());
        z.view_mut((0, 0), (p, self.z1.ncols())).copy_from(&self.z1);
        z.view_mut((0, self.z1.ncols()), (p, self.z2.ncols()))
            .copy_from(&self.z2);
        z
    }
}

/// Simulates `x+ = A x + B u`, `y = C x` from `x0` under the given inputs.
///
/// Returns `|inputs| + 1` states and outputs; `states[0] = x0`.
pub fn simulate(
    model: &StateSpaceModel,
    x0: &DVector<f64>,
    inputs: &[DVector<f64>],
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>), LtiError> {
    if x0.len() != model.n() {
        return Err(LtiError::Dimension(format!(
            "x0 has length {}, expected {}",
            x0.len(),
            model.n()
        )));
    }
    let mut states = Vec::with_capacity(inputs.len() + 1);
    let mut outputs = Vec::with_capacity(inputs.len() + 1);
    states.push(x0.clone());
    for (k, u) in inputs.iter().enumerate() {
        if u.len() != model.m() {
            return Err(LtiError::Dimension(format!(
                "input {k} has length {}, expected {}",
                u.len(),
                model.m()
            )));
        }
        let x = states.last().expect("nonempty");
        outputs.push(model.c() * x);
        states.push(model.a() * x + model.b() * u);
    }
    outputs.push(model.c() * states.last().expect("nonempty"));
    Ok((states, outputs))
}

/// Smallest `ell` such that `[C; CA; ...; C A^(ell-1)]` has rank `n`.
///
/// `rank_tol` is the cutoff factor of the numerical-rank convention
/// (`DEFAULT_RANK_TOL` when in doubt). Fails with `Unobservable` if the rank
/// never reaches `n` for `ell <= n`.
pub fn observability_index(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    rank_tol: f64,
) -> Result<usize, LtiError> {
    if a.nrows() != a.ncols() || c.ncols() != a.nrows() {
        return Err(LtiError::Dimension(format!(
            "A is {}x{}, C is {}x{}",
            a.nrows(),
            a.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    let n = a.nrows();
    let p = c.nrows();
    let mut stacked = DMatrix::zeros(0, n);
    let mut block = c.clone();
    let mut best_rank = 0;
    for ell in 1..=n {
        let mut grown = DMatrix::zeros(ell * p, n);
        grown.view_mut((0, 0), ((ell - 1) * p, n)).copy_from(&stacked);
        grown.view_mut(((ell - 1) * p, 0), (p, n)).copy_from(&block);
        stacked = grown;
        best_rank = linalg::rank(&stacked, rank_tol);
        if best_rank == n {
            return Ok(ell);
        }
        block = &block * a;
    }
    Err(LtiError::Unobservable { rank: best_rank, n })
}

/// Builds `O`, `T`, `R` and the left inverse of `O` for the given window
/// length. Fails with `Unobservable` when `O` is rank deficient.
pub fn structural_matrices(
    model: &StateSpaceModel,
    ell: usize,
) -> Result<StructuralMatrices, LtiError> {
    assert!(ell >= 1, "window length must be at least 1");
    let (n, m, p) = (model.n(), model.m(), model.p());

    // O = [C; CA; ...; C A^(ell-1)], and powers of A for reuse below.
    let mut a_pows = Vec::with_capacity(ell + 1);
    a_pows.push(DMatrix::identity(n, n));
    for k in 1..=ell {
        a_pows.push(&a_pows[k - 1] * model.a());
    }
    let mut o = DMatrix::zeros(p * ell, n);
    for i in 0..ell {
        o.view_mut((i * p, 0), (p, n)).copy_from(&(model.c() * &a_pows[i]));
    }

    let r_o = linalg::rank(&o, DEFAULT_RANK_TOL);
    if r_o < n {
        return Err(LtiError::Unobservable { rank: r_o, n });
    }

    // T block (i, j) = C A^(i-j-1) B below the diagonal, zero elsewhere.
    let mut t = DMatrix::zeros(p * ell, m * ell);
    for i in 0..ell {
        for j in 0..i {
            let blk = model.c() * &a_pows[i - j - 1] * model.b();
            t.view_mut((i * p, j * m), (p, m)).copy_from(&blk);
        }
    }

    // R = [A^(ell-1) B, ..., A B, B].
    let mut r = DMatrix::zeros(n, m * ell);
    for j in 0..ell {
        let blk = &a_pows[ell - 1 - j] * model.b();
        r.view_mut((0, j * m), (n, m)).copy_from(&blk);
    }

    let o_left = linalg::pinv(&o, DEFAULT_RANK_TOL);
    let defect = (&o_left * &o - DMatrix::identity(n, n)).norm();
    let scale = linalg::spectral_norm(&o_left) * linalg::spectral_norm(&o);
    if defect > 1e-10 * scale.max(1.0) {
        return Err(LtiError::LeftInverse { defect });
    }

    Ok(StructuralMatrices { ell, o, t, r, o_left })
}

/// One-step output predictor `Z1 = C A^ell O^L`, `Z2 = C R - C A^ell O^L T`.
pub fn io_parameter(model: &StateSpaceModel, ell: usize) -> Result<IoParameter, LtiError> {
    let sm = structural_matrices(model, ell)?;
    let ca_ell = model.c() * linalg::mat_pow(model.a(), ell);
    let z1 = &ca_ell * &sm.o_left;
    let z2 = model.c() * &sm.r - &z1 * &sm.t;
    Ok(IoParameter { z1, z2 })
}
