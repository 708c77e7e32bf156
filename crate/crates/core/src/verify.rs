//! Closed-loop assembly, Schur checks, Lyapunov certification over the
//! consistent set, and noisy-runtime simulation.

use nalgebra::{Complex, DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::auxrep::AuxShift;
use crate::consistency::ConsistentSet;
use crate::linalg;
use crate::lti::StateSpaceModel;
use crate::synthesis::DynController;

/// Spectral radii below `1 - SCHUR_MARGIN` count as Schur; anything closer to
/// the unit circle indicates numerical trouble worth failing on.
pub const SCHUR_MARGIN: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Eigenvalue report of an assembled closed loop.
#[derive(Debug, Clone)]
pub struct ClosedLoopReport {
    pub matrix: DMatrix<f64>,
    pub eigenvalues: Vec<Complex<f64>>,
    pub spectral_radius: f64,
    pub schur: bool,
}

/// Interconnection matrix of the plant and the realized controller:
/// `[[A, B*Cout], [Bin*C, Actrl]]` with the controller's output, input and
/// state maps. With an augmentation block this is the 3x3 block form over
/// `(x, xa, chi)`.
pub fn closed_loop(
    plant: &StateSpaceModel,
    ctrl: &DynController,
) -> Result<DMatrix<f64>, VerifyError> {
    if ctrl.shift.p != plant.p() || ctrl.shift.m != plant.m() {
        return Err(VerifyError::Dimension(format!(
            "controller expects p={} m={}, plant has p={} m={}",
            ctrl.shift.p,
            ctrl.shift.m,
            plant.p(),
            plant.m()
        )));
    }
    let n = plant.n();
    let nc = ctrl.state_dim();
    let a_ctrl = ctrl.state_matrix();
    let b_in = ctrl.input_matrix();
    let c_out = ctrl.output_matrix();
    let mut cl = DMatrix::zeros(n + nc, n + nc);
    cl.view_mut((0, 0), (n, n)).copy_from(plant.a());
    cl.view_mut((0, n), (n, nc)).copy_from(&(plant.b() * &c_out));
    cl.view_mut((n, 0), (nc, n)).copy_from(&(&b_in * plant.c()));
    cl.view_mut((n, n), (nc, nc)).copy_from(&a_ctrl);
    Ok(cl)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    linalg::spectral_radius(m)
}

/// Full eigenvalue report of a closed-loop matrix.
pub fn closed_loop_report(plant: &StateSpaceModel, ctrl: &DynController) -> Result<ClosedLoopReport, VerifyError> {
    let matrix = closed_loop(plant, ctrl)?;
    let eigenvalues: Vec<Complex<f64>> =
        matrix.clone().complex_eigenvalues().iter().copied().collect();
    let spectral_radius = eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max);
    Ok(ClosedLoopReport {
        matrix,
        eigenvalues,
        spectral_radius,
        schur: spectral_radius < 1.0 - SCHUR_MARGIN,
    })
}

/// Sampling certificate of the synthesis guarantee over the consistent set.
#[derive(Debug, Clone)]
pub struct CertificationReport {
    pub samples: usize,
    pub failures: usize,
    /// Largest `lambda_max(Phi P Phi^T - P)` over the samples; certified
    /// decrease means this stays below `-1e-7 |P|`.
    pub worst_lyapunov_slack: f64,
    pub worst_spectral_radius: f64,
    pub all_pass: bool,
}

/// Checks the Lyapunov decrease and the Schur property of
/// `F + L Z + Bb K` at sampled members of the set (center and boundary
/// included). `threads` caps the worker count; `0` or `1` runs serially.
pub fn certify(
    set: &ConsistentSet,
    shift: &AuxShift,
    k: &DMatrix<f64>,
    p_mat: &DMatrix<f64>,
    samples: usize,
    seed: u64,
    threads: usize,
) -> CertificationReport {
    let zs = set.sample(samples, seed);
    let p_norm = linalg::spectral_norm(p_mat);
    let slack_bound = -1e-7 * p_norm;
    let f_plus_bk = &shift.f + &shift.bb * k;

    let eval = |z: &DMatrix<f64>| -> (f64, f64) {
        let phi = &f_plus_bk + &shift.l * z;
        let decrease = &phi * p_mat * phi.transpose() - p_mat;
        (linalg::max_eig_sym(&decrease), linalg::spectral_radius(&phi))
    };

    let results: Vec<(f64, f64)> = if threads > 1 && zs.len() > 1 {
        let chunk = zs.len().div_ceil(threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = zs
                .chunks(chunk)
                .map(|part| scope.spawn(move || part.iter().map(eval).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("certification worker panicked"))
                .collect()
        })
    } else {
        zs.iter().map(eval).collect()
    };

    let mut failures = 0;
    let mut worst_slack = f64::NEG_INFINITY;
    let mut worst_rho = 0.0f64;
    for (slack, rho) in results {
        worst_slack = worst_slack.max(slack);
        worst_rho = worst_rho.max(rho);
        if slack >= slack_bound || rho >= 1.0 - SCHUR_MARGIN {
            failures += 1;
        }
    }
    CertificationReport {
        samples: zs.len(),
        failures,
        worst_lyapunov_slack: worst_slack,
        worst_spectral_radius: worst_rho,
        all_pass: failures == 0,
    }
}

/// Trajectories and tail statistics of a noisy closed-loop run.
#[derive(Debug, Clone)]
pub struct NoisyRunReport {
    /// True plant outputs `y(k)`.
    pub y_true: Vec<DVector<f64>>,
    /// Controller commands `u_m(k)`.
    pub u_cmd: Vec<DVector<f64>>,
    /// Largest `|y(k)|` over the second half of the horizon.
    pub tail_max_y: f64,
    /// Largest `|y(k)|` anywhere.
    pub max_y: f64,
    pub diverged: bool,
}

/// Runs the controller against the plant with measurement noise injected on
/// both channels: the plant receives `u_m - d_u` and the controller sees
/// `y + d_y`. Noise is i.i.d. uniform within the given amplitudes.
#[allow(clippy::too_many_arguments)]
pub fn simulate_noisy_closed_loop(
    plant: &StateSpaceModel,
    ctrl: &DynController,
    du_bar: f64,
    dy_bar: f64,
    x0: &DVector<f64>,
    horizon: usize,
    seed: u64,
) -> Result<NoisyRunReport, VerifyError> {
    if x0.len() != plant.n() {
        return Err(VerifyError::Dimension(format!(
            "x0 has length {}, expected {}",
            x0.len(),
            plant.n()
        )));
    }
    if ctrl.shift.p != plant.p() || ctrl.shift.m != plant.m() {
        return Err(VerifyError::Dimension(
            "controller and plant I/O dimensions differ".into(),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut draw = |len: usize, amp: f64| -> DVector<f64> {
        if amp == 0.0 {
            DVector::zeros(len)
        } else {
            DVector::from_fn(len, |_, _| rng.random_range(-amp..=amp))
        }
    };

    let a_ctrl = ctrl.state_matrix();
    let b_in = ctrl.input_matrix();
    let c_out = ctrl.output_matrix();

    let mut x = x0.clone();
    let mut w = DVector::zeros(ctrl.state_dim());
    let mut y_true = Vec::with_capacity(horizon + 1);
    let mut u_cmd = Vec::with_capacity(horizon + 1);
    let mut diverged = false;
    for _ in 0..=horizon {
        let y = plant.c() * &x;
        let y_m = &y + draw(plant.p(), dy_bar);
        let u_m = &c_out * &w;
        let u = &u_m - draw(plant.m(), du_bar);
        y_true.push(y);
        u_cmd.push(u_m);
        if x.norm() > 1e9 || w.norm() > 1e9 {
            diverged = true;
            break;
        }
        x = plant.a() * &x + plant.b() * &u;
        w = &a_ctrl * &w + &b_in * &y_m;
    }

    let tail_start = horizon / 2;
    let tail_max_y = y_true
        .iter()
        .skip(tail_start)
        .map(|y| y.norm())
        .fold(0.0, f64::max);
    let max_y = y_true.iter().map(|y| y.norm()).fold(0.0, f64::max);
    Ok(NoisyRunReport {
        y_true,
        u_cmd,
        tail_max_y,
        max_y,
        diverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auxrep::aux_shift;

    #[test]
    fn spectral_radius_basics() {
        assert!((spectral_radius(&DMatrix::identity(3, 3)) - 1.0).abs() < 1e-12);
        assert_eq!(spectral_radius(&DMatrix::zeros(2, 2)), 0.0);
    }

    #[test]
    fn zero_gain_closed_loop_spectrum_splits() {
        // With K = 0 the loop is block triangular up to the injection term:
        // its spectrum is eig(A) union eig(F) and F is nilpotent.
        let plant = StateSpaceModel::new(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.25]),
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap();
        let shift = aux_shift(1, 1, 2);
        let ctrl = DynController {
            shift: shift.clone(),
            k: DMatrix::zeros(1, shift.dim()),
            augmentation: None,
        };
        let report = closed_loop_report(&plant, &ctrl).unwrap();
        assert_eq!(report.matrix.nrows(), 6);
        let mut mods: Vec<f64> = report.eigenvalues.iter().map(|l| l.norm()).collect();
        mods.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Four zeros from the nilpotent shift, then 0.25 and 0.5 from A.
        assert!(mods[3] < 1e-9);
        assert!((mods[4] - 0.25).abs() < 1e-9);
        assert!((mods[5] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn hand_made_unstable_gain_fails_certification() {
        let set = ConsistentSet::from_parts(
            DMatrix::identity(2, 2),
            DMatrix::zeros(1, 2),
            DMatrix::from_element(1, 1, -0.01),
        )
        .unwrap();
        let shift = aux_shift(1, 1, 1);
        // K pushing the input slot to 3 makes F + LZ + BbK clearly unstable.
        let k = DMatrix::from_row_slice(1, 2, &[0.0, 3.0]);
        let p = DMatrix::identity(2, 2);
        let report = certify(&set, &shift, &k, &p, 20, 1, 1);
        assert!(!report.all_pass);
        assert!(report.failures > 0);
    }

    #[test]
    fn noise_free_run_of_stable_loop_settles() {
        let plant = StateSpaceModel::new(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let shift = aux_shift(1, 1, 1);
        let ctrl = DynController {
            shift,
            k: DMatrix::zeros(1, 2),
            augmentation: None,
        };
        let run =
            simulate_noisy_closed_loop(&plant, &ctrl, 0.0, 0.0, &DVector::from_element(1, 1.0), 60, 0)
                .unwrap();
        assert!(!run.diverged);
        assert!(run.tail_max_y < 1e-6);
    }
}
