//! Noisy data collection and the window data matrices.
//!
//! An experiment applies a known excitation `u_m`; the plant receives
//! `u = u_m - d_u` and the sensor reports `y_m = y + d_y`, both noises
//! amplitude-bounded and unknown. One or more experiment logs are assembled
//! into the sliding-window matrices `Psi1`, `Psi0`, `U1` (plus the truth-only
//! `Delta10`, `S0`, `N0` when the logs come from simulation), and the
//! amplitude bounds convert into the noise energy bound `Theta`.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::linalg;
use crate::lti::StateSpaceModel;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("experiment horizon too short: need at least {need} samples, got {got}")]
    HorizonTooShort { need: usize, got: usize },
}

/// Hidden ground truth of a simulated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentTruth {
    pub x0: DVector<f64>,
    /// Input noise `d_u(0..=T)`.
    pub d_u: Vec<DVector<f64>>,
    /// Output noise `d_y(0..=T)`.
    pub d_y: Vec<DVector<f64>>,
    /// Noise-free outputs `y(0..=T)`.
    pub y_true: Vec<DVector<f64>>,
    /// States `x(0..=T)`.
    pub x: Vec<DVector<f64>>,
}

/// One experiment: measured inputs and outputs for `k = 0..=T`, plus the
/// hidden truth when generated by simulation.
#[derive(Debug, Clone)]
pub struct ExperimentLog {
    pub u_meas: Vec<DVector<f64>>,
    pub y_meas: Vec<DVector<f64>>,
    pub truth: Option<ExperimentTruth>,
}

impl ExperimentLog {
    /// Last time index `T`.
    pub fn horizon(&self) -> usize {
        self.u_meas.len() - 1
    }

    /// Number of samples `T + 1`.
    pub fn samples(&self) -> usize {
        self.u_meas.len()
    }
}

/// Amplitude laws and sizes of a data-collection run. All signals are drawn
/// i.i.d. uniform within their amplitude bound.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub num_experiments: usize,
    /// Samples per experiment, `T + 1`.
    pub samples_per_experiment: usize,
    /// Excitation amplitude: `u_m ~ U[-amp, amp]` entrywise.
    pub input_amplitude: f64,
    /// Input-noise amplitude bound.
    pub du_bar: f64,
    /// Output-noise amplitude bound.
    pub dy_bar: f64,
    /// Initial-state amplitude: `x0 ~ U[-amp, amp]` entrywise.
    pub x0_amplitude: f64,
}

impl ExperimentPlan {
    pub fn new(num_experiments: usize, samples_per_experiment: usize) -> Self {
        Self {
            num_experiments,
            samples_per_experiment,
            input_amplitude: 1.0,
            du_bar: 0.0,
            dy_bar: 0.0,
            x0_amplitude: 1.0,
        }
    }

    pub fn with_input_amplitude(mut self, amp: f64) -> Self {
        self.input_amplitude = amp;
        self
    }

    pub fn with_noise(mut self, du_bar: f64, dy_bar: f64) -> Self {
        self.du_bar = du_bar;
        self.dy_bar = dy_bar;
        self
    }

    pub fn with_x0_amplitude(mut self, amp: f64) -> Self {
        self.x0_amplitude = amp;
        self
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Deterministic per-experiment seed derivation.
pub fn derived_seed(seed: u64, index: u64) -> u64 {
    let mut s = seed ^ index.wrapping_mul(0xA24BAED4963EE407);
    splitmix64(&mut s)
}

fn uniform_vector(rng: &mut ChaCha20Rng, len: usize, amp: f64) -> DVector<f64> {
    if amp == 0.0 {
        return DVector::zeros(len);
    }
    DVector::from_fn(len, |_, _| rng.random_range(-amp..=amp))
}

/// Runs the data-collection experiments on a known plant.
///
/// Each experiment draws `x0`, the excitation and both noise sequences from a
/// per-experiment stream derived from `seed`, then steps
/// `x+ = A x + B (u_m - d_u)`, `y_m = C x + d_y`. Truth fields are populated.
pub fn collect(
    model: &StateSpaceModel,
    ell: usize,
    plan: &ExperimentPlan,
    seed: u64,
) -> Result<Vec<ExperimentLog>, ExperimentError> {
    if plan.samples_per_experiment < ell + 1 {
        return Err(ExperimentError::HorizonTooShort {
            need: ell + 1,
            got: plan.samples_per_experiment,
        });
    }
    if plan.num_experiments == 0 {
        return Err(ExperimentError::Dimension("no experiments requested".into()));
    }
    let samples = plan.samples_per_experiment;
    let mut logs = Vec::with_capacity(plan.num_experiments);
    for i in 0..plan.num_experiments {
        let mut rng = ChaCha20Rng::seed_from_u64(derived_seed(seed, i as u64));
        let x0 = uniform_vector(&mut rng, model.n(), plan.x0_amplitude);
        let u_meas: Vec<_> = (0..samples)
            .map(|_| uniform_vector(&mut rng, model.m(), plan.input_amplitude))
            .collect();
        let d_u: Vec<_> = (0..samples)
            .map(|_| uniform_vector(&mut rng, model.m(), plan.du_bar))
            .collect();
        let d_y: Vec<_> = (0..samples)
            .map(|_| uniform_vector(&mut rng, model.p(), plan.dy_bar))
            .collect();

        let mut x = Vec::with_capacity(samples);
        let mut y_true = Vec::with_capacity(samples);
        let mut y_meas = Vec::with_capacity(samples);
        x.push(x0.clone());
        for k in 0..samples {
            let xk = x[k].clone();
            y_true.push(model.c() * &xk);
            y_meas.push(&y_true[k] + &d_y[k]);
            if k + 1 < samples {
                x.push(model.a() * &xk + model.b() * (&u_meas[k] - &d_u[k]));
            }
        }

        logs.push(ExperimentLog {
            u_meas,
            y_meas,
            truth: Some(ExperimentTruth { x0, d_u, d_y, y_true, x }),
        });
    }
    Ok(logs)
}

/// Sliding-window data matrices assembled from one or more logs.
///
/// Column counts add up across experiments; windows never straddle an
/// experiment boundary. Truth-only fields are present when every log carries
/// truth.
#[derive(Debug, Clone)]
pub struct DataMatrices {
    pub p: usize,
    pub m: usize,
    pub ell: usize,
    /// Windows shifted one step forward, `(p+m)*ell x n_cols`.
    pub psi1: DMatrix<f64>,
    /// Base windows, `(p+m)*ell x n_cols`.
    pub psi0: DMatrix<f64>,
    /// Inputs applied at the end of each forward window, `m x n_cols`.
    pub u1: DMatrix<f64>,
    pub n_cols: usize,
    /// Stacked noise matrix `(p + (p+m)*ell) x n_cols`: current output noise,
    /// then past output noise, then past input noise (truth only).
    pub delta10: Option<DMatrix<f64>>,
    /// Clean windows (truth only).
    pub s0: Option<DMatrix<f64>>,
    /// Noise windows, `Psi0 = S0 + N0` (truth only).
    pub n0: Option<DMatrix<f64>>,
}

/// Assembles `Psi1`, `Psi0`, `U1` (and truth-only companions) from logs.
pub fn assemble(logs: &[ExperimentLog], ell: usize) -> Result<DataMatrices, ExperimentError> {
    let first = logs
        .first()
        .ok_or_else(|| ExperimentError::Dimension("no logs given".into()))?;
    let p = first.y_meas[0].len();
    let m = first.u_meas[0].len();
    let mut n_cols = 0;
    for (i, log) in logs.iter().enumerate() {
        if log.u_meas.len() != log.y_meas.len() {
            return Err(ExperimentError::Dimension(format!(
                "log {i}: {} inputs vs {} outputs",
                log.u_meas.len(),
                log.y_meas.len()
            )));
        }
        if log.samples() < ell + 1 {
            return Err(ExperimentError::HorizonTooShort {
                need: ell + 1,
                got: log.samples(),
            });
        }
        if log.y_meas[0].len() != p || log.u_meas[0].len() != m {
            return Err(ExperimentError::Dimension(format!(
                "log {i} has inconsistent signal dimensions"
            )));
        }
        n_cols += log.horizon() - ell + 1;
    }

    let wdim = (p + m) * ell;
    let with_truth = logs.iter().all(|l| l.truth.is_some());
    let mut psi1 = DMatrix::zeros(wdim, n_cols);
    let mut psi0 = DMatrix::zeros(wdim, n_cols);
    let mut u1 = DMatrix::zeros(m, n_cols);
    let mut delta10 = with_truth.then(|| DMatrix::zeros(p + wdim, n_cols));
    let mut s0 = with_truth.then(|| DMatrix::zeros(wdim, n_cols));
    let mut n0 = with_truth.then(|| DMatrix::zeros(wdim, n_cols));

    let mut col = 0;
    for log in logs {
        for j in 0..=(log.horizon() - ell) {
            for i in 0..ell {
                psi0.view_mut((i * p, col), (p, 1)).copy_from(&log.y_meas[j + i]);
                psi0.view_mut((p * ell + i * m, col), (m, 1))
                    .copy_from(&log.u_meas[j + i]);
                psi1.view_mut((i * p, col), (p, 1))
                    .copy_from(&log.y_meas[j + i + 1]);
                psi1.view_mut((p * ell + i * m, col), (m, 1))
                    .copy_from(&log.u_meas[j + i + 1]);
            }
            u1.view_mut((0, col), (m, 1)).copy_from(&log.u_meas[j + ell]);
            if let Some(truth) = &log.truth {
                let d10 = delta10.as_mut().expect("allocated with truth");
                let s = s0.as_mut().expect("allocated with truth");
                let n = n0.as_mut().expect("allocated with truth");
                d10.view_mut((0, col), (p, 1)).copy_from(&truth.d_y[j + ell]);
                for i in 0..ell {
                    d10.view_mut((p + i * p, col), (p, 1))
                        .copy_from(&truth.d_y[j + i]);
                    d10.view_mut((p + p * ell + i * m, col), (m, 1))
                        .copy_from(&truth.d_u[j + i]);
                    s.view_mut((i * p, col), (p, 1)).copy_from(&truth.y_true[j + i]);
                    s.view_mut((p * ell + i * m, col), (m, 1))
                        .copy_from(&(&log.u_meas[j + i] - &truth.d_u[j + i]));
                    n.view_mut((i * p, col), (p, 1)).copy_from(&truth.d_y[j + i]);
                    n.view_mut((p * ell + i * m, col), (m, 1))
                        .copy_from(&truth.d_u[j + i]);
                }
            }
            col += 1;
        }
    }
    debug_assert_eq!(col, n_cols);

    Ok(DataMatrices {
        p,
        m,
        ell,
        psi1,
        psi0,
        u1,
        n_cols,
        delta10,
        s0,
        n0,
    })
}

/// Noise energy bound `Delta Delta^T <= Theta` with the standard partition
/// into the current-output block and the window block.
#[derive(Debug, Clone)]
pub struct NoiseBound {
    pub p: usize,
    pub m: usize,
    pub ell: usize,
    /// `(p + (p+m)*ell)` square, symmetric PSD.
    pub theta: DMatrix<f64>,
}

impl NoiseBound {
    pub fn from_matrix(
        theta: DMatrix<f64>,
        p: usize,
        m: usize,
        ell: usize,
    ) -> Result<Self, ExperimentError> {
        let dim = p + (p + m) * ell;
        if theta.nrows() != dim || theta.ncols() != dim {
            return Err(ExperimentError::Dimension(format!(
                "Theta is {}x{}, expected {dim}x{dim}",
                theta.nrows(),
                theta.ncols()
            )));
        }
        if (theta.clone() - theta.transpose()).norm() > 1e-9 * theta.norm().max(1.0) {
            return Err(ExperimentError::Dimension("Theta must be symmetric".into()));
        }
        if linalg::min_eig_sym(&theta) < -1e-9 * linalg::spectral_norm(&theta).max(1.0) {
            return Err(ExperimentError::Dimension("Theta must be PSD".into()));
        }
        Ok(Self { p, m, ell, theta })
    }

    /// Current-output block, `p x p`.
    pub fn theta11(&self) -> DMatrix<f64> {
        self.theta.view((0, 0), (self.p, self.p)).into_owned()
    }

    /// Cross block, `p x (p+m)*ell`.
    pub fn theta12(&self) -> DMatrix<f64> {
        let w = (self.p + self.m) * self.ell;
        self.theta.view((0, self.p), (self.p, w)).into_owned()
    }

    /// Window block, `(p+m)*ell` square.
    pub fn theta22(&self) -> DMatrix<f64> {
        let w = (self.p + self.m) * self.ell;
        self.theta.view((self.p, self.p), (w, w)).into_owned()
    }
}

/// Converts amplitude bounds into the isotropic energy bound
/// `Theta = scale * n_cols * ((ell+1) dy_bar^2 + ell du_bar^2) I`.
///
/// `n_cols` is the total window count of the dataset the bound will be used
/// with; `scale >= 1` adds headroom on top of the worst-case bound.
pub fn energy_bound(
    dy_bar: f64,
    du_bar: f64,
    ell: usize,
    n_cols: usize,
    scale: f64,
    p: usize,
    m: usize,
) -> NoiseBound {
    assert!(dy_bar >= 0.0 && du_bar >= 0.0, "noise bounds must be nonnegative");
    assert!(n_cols >= 1, "need at least one data column");
    assert!(scale > 0.0, "scale must be positive");
    let level = scale
        * n_cols as f64
        * ((ell as f64 + 1.0) * dy_bar * dy_bar + ell as f64 * du_bar * du_bar);
    let dim = p + (p + m) * ell;
    NoiseBound {
        p,
        m,
        ell,
        theta: DMatrix::identity(dim, dim) * level,
    }
}

/// Data-quality report: the richness condition `Psi0 Psi0^T > Theta22` and,
/// when truth is available, the signal-to-noise sufficient condition
/// `sigma_min(S0 S0^T) / sigma_max(Theta22) > 4`.
#[derive(Debug, Clone)]
pub struct DataDiagnostics {
    pub assumption2_ok: bool,
    /// Smallest eigenvalue of `Psi0 Psi0^T - Theta22`.
    pub assumption2_margin: f64,
    pub snr_ratio: Option<f64>,
    pub snr_ok: Option<bool>,
}

pub fn diagnostics(data: &DataMatrices, bound: &NoiseBound) -> DataDiagnostics {
    let gram = &data.psi0 * data.psi0.transpose();
    let margin = linalg::min_eig_sym(&(gram - bound.theta22()));
    let (snr_ratio, snr_ok) = match &data.s0 {
        Some(s0) => {
            let smin = linalg::min_eig_sym(&(s0 * s0.transpose()));
            let tmax = linalg::max_eig_sym(&bound.theta22());
            let ratio = if tmax > 0.0 { smin / tmax } else { f64::INFINITY };
            (Some(ratio), Some(ratio > 4.0))
        }
        None => (None, None),
    };
    DataDiagnostics {
        assumption2_ok: margin > 0.0,
        assumption2_margin: margin,
        snr_ratio,
        snr_ok,
    }
}
