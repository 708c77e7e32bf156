//! Extension to plants with `p*ell > n`: connect a designer-chosen artificial
//! system in parallel so the augmented state dimension reaches `p*ell`, then
//! run the standard pipeline on the augmented data.
//!
//! During collection the artificial state is simulated from the measured
//! input, which pushes the input noise into an extra bounded output-noise
//! term on the artificial channel; its amplitude follows from the geometric
//! series of `|Aa|` when the artificial state matrix is contractive.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::auxrep::AuxShift;
use crate::experiment::{
    collect, DataMatrices, ExperimentError, ExperimentLog, ExperimentPlan, ExperimentTruth,
    NoiseBound,
};
use crate::linalg;
use crate::lti::StateSpaceModel;
use crate::synthesis::{
    make_controller, synthesize, DynController, SynthOutcome, SynthesisError, SynthesisOptions,
    SynthesisResult,
};

#[derive(Debug, Error)]
pub enum AugmentationError {
    #[error("no augmentation needed: p*ell equals the state dimension")]
    NotNeeded,
    #[error("artificial state matrix is not contractive: |Aa| = {norm}")]
    NotContractive { norm: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// The designer-chosen artificial system `(Aa, Ba, Ca)` of dimension
/// `na = p*ell - n`.
#[derive(Debug, Clone)]
pub struct ArtificialSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl ArtificialSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
    ) -> Result<Self, AugmentationError> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(AugmentationError::Dimension(
                "Aa must be square and nonempty".into(),
            ));
        }
        if b.nrows() != a.nrows() || c.ncols() != a.nrows() {
            return Err(AugmentationError::Dimension(format!(
                "Aa is {0}x{0}, Ba has {1} rows, Ca has {2} columns",
                a.nrows(),
                b.nrows(),
                c.ncols()
            )));
        }
        Ok(Self { a, b, c })
    }

    /// Artificial state dimension.
    pub fn na(&self) -> usize {
        self.a.nrows()
    }
}

/// Selection style for the artificial system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtificialStyle {
    /// `Aa = 0`, all-ones `Ba` and `Ca`.
    PlainOnes,
    /// Uniform random entries, `Aa` rescaled to `|Aa| <= 0.5`.
    RandomContractive { seed: u64 },
}

/// Builds a default artificial system for the dimension gap `p*ell - n`.
pub fn default_artificial(
    n: usize,
    p: usize,
    m: usize,
    ell: usize,
    style: ArtificialStyle,
) -> Result<ArtificialSystem, AugmentationError> {
    if p * ell <= n {
        return Err(AugmentationError::NotNeeded);
    }
    let na = p * ell - n;
    match style {
        ArtificialStyle::PlainOnes => ArtificialSystem::new(
            DMatrix::zeros(na, na),
            DMatrix::from_element(na, m, 1.0),
            DMatrix::from_element(p, na, 1.0),
        ),
        ArtificialStyle::RandomContractive { seed } => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut a = DMatrix::from_fn(na, na, |_, _| rng.random_range(-1.0..=1.0));
            let norm = linalg::spectral_norm(&a);
            if norm > 0.5 {
                a *= 0.5 / norm;
            }
            let b = DMatrix::from_fn(na, m, |_, _| rng.random_range(-1.0..=1.0));
            let c = DMatrix::from_fn(p, na, |_, _| rng.random_range(-1.0..=1.0));
            ArtificialSystem::new(a, b, c)
        }
    }
}

/// Worst-case amplitude of the pushed input noise on the artificial output:
/// `|Ca| |Ba| du_bar / (1 - |Aa|)`. Requires `|Aa| < 1`.
pub fn artificial_noise_bound(
    art: &ArtificialSystem,
    du_bar: f64,
) -> Result<f64, AugmentationError> {
    let a_norm = linalg::spectral_norm(&art.a);
    if a_norm >= 1.0 {
        return Err(AugmentationError::NotContractive { norm: a_norm });
    }
    Ok(linalg::spectral_norm(&art.c) * linalg::spectral_norm(&art.b) * du_bar / (1.0 - a_norm))
}

/// The parallel connection as one state-space model (block-diagonal state
/// matrix, stacked input matrix, concatenated output matrix).
pub fn augmented_model(
    plant: &StateSpaceModel,
    art: &ArtificialSystem,
) -> Result<StateSpaceModel, AugmentationError> {
    if art.b.ncols() != plant.m() || art.c.nrows() != plant.p() {
        return Err(AugmentationError::Dimension(
            "artificial system I/O dimensions do not match the plant".into(),
        ));
    }
    let (n, na) = (plant.n(), art.na());
    let mut a = DMatrix::zeros(n + na, n + na);
    a.view_mut((0, 0), (n, n)).copy_from(plant.a());
    a.view_mut((n, n), (na, na)).copy_from(&art.a);
    let mut b = DMatrix::zeros(n + na, plant.m());
    b.view_mut((0, 0), (n, plant.m())).copy_from(plant.b());
    b.view_mut((n, 0), (na, plant.m())).copy_from(&art.b);
    let mut c = DMatrix::zeros(plant.p(), n + na);
    c.view_mut((0, 0), (plant.p(), n)).copy_from(plant.c());
    c.view_mut((0, n), (plant.p(), na)).copy_from(&art.c);
    StateSpaceModel::new(a, b, c).map_err(|e| AugmentationError::Dimension(e.to_string()))
}

/// Replays one plant log through the artificial system: the artificial state
/// starts at zero and is driven by the measured input, and its output adds to
/// the measured plant output.
///
/// When the log carries truth, the truth is rewritten for the augmented
/// system: the pushed artificial noise joins the output noise, and the clean
/// state/output refer to the augmented plant driven by the de-noised input.
pub fn augment_log(
    log: &ExperimentLog,
    art: &ArtificialSystem,
) -> Result<ExperimentLog, AugmentationError> {
    let samples = log.samples();
    let m = log.u_meas[0].len();
    let p = log.y_meas[0].len();
    if art.b.ncols() != m || art.c.nrows() != p {
        return Err(AugmentationError::Dimension(
            "artificial system I/O dimensions do not match the log".into(),
        ));
    }

    // Measured path: x_a driven by the measured input.
    let mut xa = DVector::zeros(art.na());
    let mut y_aug = Vec::with_capacity(samples);
    for k in 0..samples {
        y_aug.push(&log.y_meas[k] + &art.c * &xa);
        xa = &art.a * &xa + &art.b * &log.u_meas[k];
    }

    let truth = match &log.truth {
        None => None,
        Some(t) => {
            // Pushed noise d_ya(k) = Ca * w(k), w+ = Aa w + Ba d_u.
            let mut w = DVector::zeros(art.na());
            let mut d_y = Vec::with_capacity(samples);
            for k in 0..samples {
                d_y.push(&t.d_y[k] + &art.c * &w);
                w = &art.a * &w + &art.b * &t.d_u[k];
            }
            // Clean augmented state driven by the de-noised input.
            let mut xa_clean = DVector::zeros(art.na());
            let mut x = Vec::with_capacity(samples);
            let mut y_true = Vec::with_capacity(samples);
            for k in 0..samples {
                let mut stacked = DVector::zeros(t.x[k].len() + art.na());
                stacked.rows_mut(0, t.x[k].len()).copy_from(&t.x[k]);
                stacked
                    .rows_mut(t.x[k].len(), art.na())
                    .copy_from(&xa_clean);
                x.push(stacked);
                y_true.push(&y_aug[k] - &d_y[k]);
                xa_clean = &art.a * &xa_clean + &art.b * (&log.u_meas[k] - &t.d_u[k]);
            }
            let mut x0 = DVector::zeros(t.x0.len() + art.na());
            x0.rows_mut(0, t.x0.len()).copy_from(&t.x0);
            Some(ExperimentTruth {
                x0,
                d_u: t.d_u.clone(),
                d_y,
                y_true,
                x,
            })
        }
    };

    Ok(ExperimentLog {
        u_meas: log.u_meas.clone(),
        y_meas: y_aug,
        truth,
    })
}

/// Collects plant data and replays it through the artificial system.
pub fn collect_augmented(
    plant: &StateSpaceModel,
    art: &ArtificialSystem,
    ell: usize,
    plan: &ExperimentPlan,
    seed: u64,
) -> Result<Vec<ExperimentLog>, ExperimentError> {
    let logs = collect(plant, ell, plan, seed)?;
    logs.iter()
        .map(|log| {
            augment_log(log, art).map_err(|e| ExperimentError::Dimension(e.to_string()))
        })
        .collect()
}

/// Energy bound with the artificial output noise folded into the output
/// amplitude: `scale * n_cols * ((ell+1)(dy_bar + dya_bar)^2 + ell du_bar^2) I`.
#[allow(clippy::too_many_arguments)]
pub fn augmented_energy_bound(
    dy_bar: f64,
    du_bar: f64,
    dya_bar: f64,
    ell: usize,
    n_cols: usize,
    scale: f64,
    p: usize,
    m: usize,
) -> NoiseBound {
    crate::experiment::energy_bound(dy_bar + dya_bar, du_bar, ell, n_cols, scale, p, m)
}

/// Result of an augmented synthesis run.
#[derive(Debug, Clone)]
pub enum AugmentedOutcome {
    Feasible {
        result: SynthesisResult,
        controller: DynController,
    },
    Infeasible {
        best_margin: f64,
    },
}

/// Runs the standard pipeline on augmented data and attaches the artificial
/// system to the resulting controller.
pub fn synthesize_augmented(
    data: &DataMatrices,
    bound: &NoiseBound,
    shift: &AuxShift,
    art: &ArtificialSystem,
    opts: &SynthesisOptions,
) -> Result<AugmentedOutcome, SynthesisError> {
    let set = crate::consistency::build_set(data, bound, shift)?;
    match synthesize(&set, shift, opts)? {
        SynthOutcome::Infeasible { best_margin } => {
            Ok(AugmentedOutcome::Infeasible { best_margin })
        }
        SynthOutcome::Feasible(result) => {
            let controller = make_controller(&result, shift, Some(art.clone()));
            Ok(AugmentedOutcome::Feasible { result, controller })
        }
    }
}
