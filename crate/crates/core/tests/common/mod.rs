#![allow(dead_code)] // each test target uses its own subset

//! Shared generators and independent oracles for the integration suites.
//!
//! Oracles here deliberately avoid the library's own computation paths: rank
//! checks stack powers by hand, responses step the raw recurrences, windows
//! are assembled index by index.

use nalgebra::{DMatrix, DVector};
use niosyn_core::linalg;
use niosyn_core::lti::StateSpaceModel;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn mat(rng: &mut ChaCha20Rng, r: usize, c: usize, amp: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-amp..=amp))
}

pub fn vec(rng: &mut ChaCha20Rng, len: usize, amp: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(-amp..=amp))
}

/// Random state matrix with the spectral radius capped at 1.05, so drawn
/// systems mix stable and mildly unstable dynamics without overflowing
/// multi-step recursions.
fn state_matrix(rng: &mut ChaCha20Rng, n: usize) -> DMatrix<f64> {
    let mut a = mat(rng, n, n, 1.0);
    let rho = linalg::spectral_radius(&a);
    if rho > 1.05 {
        a *= 1.05 / rho;
    }
    a
}

/// Random observable model with `n <= 6`, `m, p <= 3`, together with its
/// observability index.
pub fn random_observable(rng: &mut ChaCha20Rng) -> (StateSpaceModel, usize) {
    loop {
        let n = rng.random_range(1..=6usize);
        let m = rng.random_range(1..=3usize);
        let p = rng.random_range(1..=3usize);
        let model = StateSpaceModel::new(
            state_matrix(rng, n),
            mat(rng, n, m, 1.0),
            mat(rng, p, n, 1.0),
        )
        .unwrap();
        if let Ok(ell) = niosyn_core::lti::observability_index(model.a(), model.c(), 1e-12) {
            return (model, ell);
        }
    }
}

/// Random observable model whose window saturates the state: `p * ell == n`.
pub fn random_square_observable(rng: &mut ChaCha20Rng) -> (StateSpaceModel, usize) {
    loop {
        let p = rng.random_range(1..=3usize);
        let ell = rng.random_range(1..=3usize);
        let n = p * ell;
        if n > 6 {
            continue;
        }
        let m = rng.random_range(1..=3usize);
        let model = StateSpaceModel::new(
            state_matrix(rng, n),
            mat(rng, n, m, 1.0),
            mat(rng, p, n, 1.0),
        )
        .unwrap();
        match niosyn_core::lti::observability_index(model.a(), model.c(), 1e-12) {
            Ok(found) if found == ell => return (model, ell),
            _ => continue,
        }
    }
}

/// Whether `(A, B)` is reachable, by the raw staircase of powers.
pub fn reachable_oracle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    rank_oracle(&stack_powers_right(a, b, a.nrows())) == a.nrows()
}

/// `[B, AB, ..., A^(q-1)B]` assembled column block by column block.
pub fn stack_powers_right(a: &DMatrix<f64>, b: &DMatrix<f64>, q: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), b.ncols() * q);
    let mut blk = b.clone();
    for j in 0..q {
        out.view_mut((0, j * b.ncols()), (a.nrows(), b.ncols()))
            .copy_from(&blk);
        blk = a * &blk;
    }
    out
}

/// Numerical rank with the shared cutoff convention.
pub fn rank_oracle(m: &DMatrix<f64>) -> usize {
    linalg::rank(m, 1e-12)
}

/// Brute-force observability index: stack `C A^k` until the rank hits `n`.
pub fn obs_index_oracle(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<usize> {
    let n = a.nrows();
    let p = c.nrows();
    let mut stacked = DMatrix::<f64>::zeros(0, n);
    let mut blk = c.clone();
    for ell in 1..=n {
        let mut grown = DMatrix::zeros(ell * p, n);
        grown.view_mut((0, 0), ((ell - 1) * p, n)).copy_from(&stacked);
        grown.view_mut(((ell - 1) * p, 0), (p, n)).copy_from(&blk);
        stacked = grown;
        if rank_oracle(&stacked) == n {
            return Some(ell);
        }
        blk = &blk * a;
    }
    None
}

/// Step-by-step plant recurrence, independent of `lti::simulate`.
pub fn simulate_oracle(
    model: &StateSpaceModel,
    x0: &DVector<f64>,
    inputs: &[DVector<f64>],
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let mut xs = vec![x0.clone()];
    for u in inputs {
        let x = xs.last().unwrap();
        xs.push(model.a() * x + model.b() * u);
    }
    let ys = xs.iter().map(|x| model.c() * x).collect();
    (xs, ys)
}

/// The stacked I/O window `(y(k-ell), ..., y(k-1), u(k-ell), ..., u(k-1))`.
pub fn window_oracle(
    ys: &[DVector<f64>],
    us: &[DVector<f64>],
    k: usize,
    ell: usize,
) -> DVector<f64> {
    let p = ys[0].len();
    let m = us[0].len();
    let mut xi = DVector::zeros((p + m) * ell);
    for i in 0..ell {
        xi.rows_mut(i * p, p).copy_from(&ys[k - ell + i]);
        xi.rows_mut(p * ell + i * m, m).copy_from(&us[k - ell + i]);
    }
    xi
}

/// Closed-form forced response of the window system from the zero state:
/// top block `O * sum A^(k-1-ell-j) B v(j) + T * (last ell inputs)`, bottom
/// block the last `ell` inputs, with fictitious pre-time inputs equal to zero.
pub fn forced_response_oracle(
    model: &StateSpaceModel,
    ell: usize,
    inputs: &[DVector<f64>],
    k: usize,
) -> DVector<f64> {
    let sm = niosyn_core::lti::structural_matrices(model, ell).unwrap();
    let (n, m, p) = (model.n(), model.m(), model.p());
    let zero_input = DVector::zeros(m);
    let v = |j: isize| -> DVector<f64> {
        if j < 0 {
            zero_input.clone()
        } else {
            inputs[j as usize].clone()
        }
    };
    let mut conv = DVector::zeros(n);
    if k >= ell + 1 {
        for j in 0..=(k - 1 - ell) {
            conv += linalg::mat_pow(model.a(), k - 1 - ell - j) * model.b() * v(j as isize);
        }
    }
    let mut tail = DVector::zeros(m * ell);
    for i in 0..ell {
        tail.rows_mut(i * m, m)
            .copy_from(&v(k as isize - ell as isize + i as isize));
    }
    let top = &sm.o * conv + &sm.t * &tail;
    let mut xi = DVector::zeros((p + m) * ell);
    xi.rows_mut(0, p * ell).copy_from(&top);
    xi.rows_mut(p * ell, m * ell).copy_from(&tail);
    xi
}

pub fn rel_err_mat(got: &DMatrix<f64>, want: &DMatrix<f64>) -> f64 {
    (got - want).norm() / want.norm().max(1.0)
}

pub fn rel_err_vec(got: &DVector<f64>, want: &DVector<f64>) -> f64 {
    (got - want).norm() / want.norm().max(1.0)
}
