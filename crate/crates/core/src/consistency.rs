//! The set of predictors consistent with the measured data and the noise
//! energy bound: a bounded matrix ellipsoid
//! `{ Z : (Z - Zc) Acal (Z - Zc)^T <= Qcal }`.
//!
//! `Acal`, `Bcal`, `Cs` come straight from the data Grams and the bound
//! partition; the center `Zc` and shape `Qcal` follow by completing the
//! square. The unit-ball parametrization `Zc + Qcal^(1/2) U Acal^(-1/2)`,
//! `|U| <= 1`, drives sampling.

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::auxrep::AuxShift;
use crate::experiment::{DataMatrices, NoiseBound};
use crate::linalg;

#[derive(Debug, Error)]
pub enum ConsistencyError {
    #[error("data richness assumption violated: min eig(Psi0 Psi0^T - Theta22) = {min_eig:.6e}")]
    Assumption2Violated { min_eig: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Center/shape description of the consistent set.
#[derive(Debug, Clone)]
pub struct ConsistentSet {
    acal: DMatrix<f64>,
    bcal: DMatrix<f64>,
    ccal: DMatrix<f64>,
    zcen: DMatrix<f64>,
    qcal: DMatrix<f64>,
    acal_inv_sqrt: DMatrix<f64>,
    qcal_sqrt: DMatrix<f64>,
}

impl ConsistentSet {
    /// Builds the set from the quadratic-form matrices
    /// (`Acal` symmetric PD, `Bcal`, `Cs` symmetric).
    pub fn from_parts(
        acal: DMatrix<f64>,
        bcal: DMatrix<f64>,
        ccal: DMatrix<f64>,
    ) -> Result<Self, ConsistencyError> {
        let w = acal.nrows();
        if acal.ncols() != w {
            return Err(ConsistencyError::Dimension("Acal must be square".into()));
        }
        let p = bcal.nrows();
        if bcal.ncols() != w || ccal.nrows() != p || ccal.ncols() != p {
            return Err(ConsistencyError::Dimension(format!(
                "Bcal is {}x{}, Cs is {}x{}, expected {p}x{w} and {p}x{p}",
                bcal.nrows(),
                bcal.ncols(),
                ccal.nrows(),
                ccal.ncols()
            )));
        }
        let min_eig = linalg::min_eig_sym(&acal);
        if min_eig <= 0.0 {
            return Err(ConsistencyError::Assumption2Violated { min_eig });
        }
        let acal = linalg::symmetrize(&acal);
        let acal_inv_sqrt = linalg::pd_inv_sqrt(&acal)
            .map_err(|min_eig| ConsistencyError::Assumption2Violated { min_eig })?;
        let acal_inv = &acal_inv_sqrt * &acal_inv_sqrt;
        let zcen = -(&bcal) * &acal_inv;
        let qcal = linalg::symmetrize(&(&bcal * &acal_inv * bcal.transpose() - &ccal));
        let qcal_sqrt = linalg::psd_sqrt(&qcal);
        Ok(Self {
            acal,
            bcal,
            ccal,
            zcen,
            qcal,
            acal_inv_sqrt,
            qcal_sqrt,
        })
    }

    pub fn acal(&self) -> &DMatrix<f64> {
        &self.acal
    }

    pub fn bcal(&self) -> &DMatrix<f64> {
        &self.bcal
    }

    pub fn ccal(&self) -> &DMatrix<f64> {
        &self.ccal
    }

    /// Set center.
    pub fn zcen(&self) -> &DMatrix<f64> {
        &self.zcen
    }

    /// Set shape, symmetric PSD.
    pub fn qcal(&self) -> &DMatrix<f64> {
        &self.qcal
    }

    /// Output dimension `p`.
    pub fn p(&self) -> usize {
        self.bcal.nrows()
    }

    /// Window dimension `(p+m)*ell`.
    pub fn wdim(&self) -> usize {
        self.acal.nrows()
    }

    /// Membership via the centered form, with PSD slack `1e-9 |Qcal|`.
    pub fn contains(&self, z: &DMatrix<f64>) -> bool {
        if z.nrows() != self.p() || z.ncols() != self.wdim() {
            return false;
        }
        let dev = z - &self.zcen;
        let gap = &self.qcal - &dev * &self.acal * dev.transpose();
        linalg::min_eig_sym(&gap) >= -1e-9 * linalg::spectral_norm(&self.qcal)
    }

    /// Draws members `Zc + Qcal^(1/2) U Acal^(-1/2)` with `|U| <= 1`.
    ///
    /// The first draw is the center; at least a quarter of the draws sit on
    /// the boundary (`|U| = 1`).
    pub fn sample(&self, count: usize, seed: u64) -> Vec<DMatrix<f64>> {
        assert!(count >= 1, "need at least one sample");
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let boundary_count = count.div_ceil(4);
        let mut out = Vec::with_capacity(count);
        out.push(self.zcen.clone());
        while out.len() < count {
            let g = DMatrix::from_fn(self.p(), self.wdim(), |_, _| {
                rng.random_range(-1.0..=1.0)
            });
            let gnorm = linalg::spectral_norm(&g);
            if gnorm == 0.0 {
                continue;
            }
            // Boundary draws first, interior draws after.
            let radius = if out.len() <= boundary_count {
                1.0
            } else {
                rng.random_range(0.0..1.0)
            };
            let upsilon = g * (radius / gnorm);
            out.push(&self.zcen + &self.qcal_sqrt * upsilon * &self.acal_inv_sqrt);
        }
        out
    }

    /// Upper bound `sqrt(lmax(Qcal) / lmin(Acal))` on `|Z - Zc|` over the set.
    pub fn radius(&self) -> f64 {
        let qmax = linalg::max_eig_sym(&self.qcal).max(0.0);
        let amin = linalg::min_eig_sym(&self.acal);
        (qmax / amin).sqrt()
    }
}

/// Builds the consistent set from data and the noise bound.
///
/// Requires the data richness condition `Psi0 Psi0^T > Theta22`; fails with
/// the offending minimum eigenvalue otherwise.
pub fn build_set(
    data: &DataMatrices,
    bound: &NoiseBound,
    shift: &AuxShift,
) -> Result<ConsistentSet, ConsistencyError> {
    let w = (data.p + data.m) * data.ell;
    if shift.p != data.p || shift.m != data.m || shift.ell != data.ell {
        return Err(ConsistencyError::Dimension(
            "shift block sizes do not match the data".into(),
        ));
    }
    if bound.p != data.p || bound.m != data.m || bound.ell != data.ell {
        return Err(ConsistencyError::Dimension(
            "noise bound block sizes do not match the data".into(),
        ));
    }
    if data.psi0.nrows() != w || data.psi1.nrows() != w {
        return Err(ConsistencyError::Dimension(format!(
            "window matrices have {} rows, expected {w}",
            data.psi0.nrows()
        )));
    }
    // Block row ell of the window residual is L^T Psi1.
    let lt_psi1 = shift.l.transpose() * &data.psi1;
    let acal = &data.psi0 * data.psi0.transpose() - bound.theta22();
    let min_eig = linalg::min_eig_sym(&acal);
    if min_eig <= 0.0 {
        return Err(ConsistencyError::Assumption2Violated { min_eig });
    }
    let bcal = -(&lt_psi1) * data.psi0.transpose() + bound.theta12();
    let ccal = &lt_psi1 * lt_psi1.transpose() - bound.theta11();
    ConsistentSet::from_parts(acal, bcal, linalg::symmetrize(&ccal))
}

/// The eliminated form of the matrix elimination result: whether
/// `E E^T <= F G F^T` (PSD slack scaled to the operands).
///
/// Equivalent to the existence of a `D` with `E = F D` and `D D^T <= G`;
/// used as the oracle for the set reformulation.
pub fn eliminate_check(e: &DMatrix<f64>, f: &DMatrix<f64>, g: &DMatrix<f64>) -> bool {
    assert_eq!(e.nrows(), f.nrows(), "E and F must have equal row counts");
    assert_eq!(f.ncols(), g.nrows(), "F columns must match G");
    assert_eq!(g.nrows(), g.ncols(), "G must be square");
    let lhs = e * e.transpose();
    let rhs = f * g * f.transpose();
    let scale = linalg::spectral_norm(&rhs).max(linalg::spectral_norm(&lhs));
    linalg::min_eig_sym(&(rhs - lhs)) >= -1e-9 * scale.max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auxrep::aux_shift;
    use crate::experiment::{assemble, collect, energy_bound, ExperimentPlan};
    use crate::lti::StateSpaceModel;

    fn toy_setup(
        noise: f64,
        scale: f64,
    ) -> (StateSpaceModel, DataMatrices, NoiseBound, AuxShift) {
        let model = StateSpaceModel::new(
            DMatrix::from_row_slice(2, 2, &[0.3, 1.0, -0.2, 0.4]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.5]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let plan = ExperimentPlan::new(2, 8)
            .with_input_amplitude(2.0)
            .with_noise(noise, noise);
        let data = assemble(&collect(&model, 1, &plan, 17).unwrap(), 1).unwrap();
        let bound = energy_bound(noise, noise, 1, data.n_cols, scale, 2, 1);
        let shift = aux_shift(2, 1, 1);
        (model, data, bound, shift)
    }

    #[test]
    fn noise_free_data_pins_the_true_predictor() {
        let (model, data, bound, shift) = toy_setup(0.0, 1.0);
        let set = build_set(&data, &bound, &shift).unwrap();
        let z_true = crate::lti::io_parameter(&model, 1).unwrap().z();
        assert!((set.zcen() - &z_true).norm() < 1e-8 * z_true.norm().max(1.0));
        assert!(
            linalg::spectral_norm(set.qcal())
                < 1e-8 * linalg::spectral_norm(set.acal()).max(1.0)
        );
    }

    #[test]
    fn true_predictor_is_a_member_under_noise() {
        let (model, data, bound, shift) = toy_setup(0.05, 1.0);
        let set = build_set(&data, &bound, &shift).unwrap();
        let z_true = crate::lti::io_parameter(&model, 1).unwrap().z();
        assert!(set.contains(&z_true));
    }

    #[test]
    fn oversized_bound_violates_richness() {
        let (_, data, _, shift) = toy_setup(0.01, 1.0);
        let huge = NoiseBound::from_matrix(DMatrix::identity(5, 5) * 1e9, 2, 1, 1).unwrap();
        assert!(matches!(
            build_set(&data, &huge, &shift),
            Err(ConsistencyError::Assumption2Violated { .. })
        ));
    }

    #[test]
    fn center_is_member_and_far_points_are_not() {
        let (_, data, bound, shift) = toy_setup(0.05, 1.0);
        let set = build_set(&data, &bound, &shift).unwrap();
        assert!(set.contains(set.zcen()));
        let far = set.zcen() + DMatrix::from_element(set.p(), set.wdim(), 1e3);
        assert!(!set.contains(&far));
    }

    #[test]
    fn samples_are_members_within_the_radius() {
        let (_, data, bound, shift) = toy_setup(0.05, 1.0);
        let set = build_set(&data, &bound, &shift).unwrap();
        let r = set.radius();
        for z in set.sample(40, 5) {
            assert!(set.contains(&z));
            assert!(linalg::spectral_norm(&(z - set.zcen())) <= r * (1.0 + 1e-9));
        }
    }

    #[test]
    fn degenerate_shape_collapses_samples_to_center() {
        let set = ConsistentSet::from_parts(
            DMatrix::identity(3, 3),
            DMatrix::zeros(1, 3),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        assert_eq!(set.radius(), 0.0);
        for z in set.sample(8, 2) {
            assert_eq!(z, *set.zcen());
        }
    }

    #[test]
    fn radius_formula_on_hand_built_set() {
        // Acal = I, Qcal = 4 I -> radius 2. With Zc = 0: Cs = -Qcal.
        let set = ConsistentSet::from_parts(
            DMatrix::identity(4, 4),
            DMatrix::zeros(2, 4),
            DMatrix::identity(2, 2) * -4.0,
        )
        .unwrap();
        assert!((set.radius() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn eliminate_check_basics() {
        let f = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, 1.0, -1.0]);
        let g = DMatrix::identity(3, 3);
        // E = F D with D D^T <= G.
        let d = DMatrix::from_row_slice(3, 2, &[0.5, 0.0, 0.0, 0.5, 0.1, 0.1]);
        assert!(eliminate_check(&(&f * &d), &f, &g));
        assert!(eliminate_check(&DMatrix::zeros(2, 2), &f, &g));
        assert!(!eliminate_check(
            &DMatrix::identity(2, 2),
            &DMatrix::zeros(2, 3),
            &g
        ));
    }
}
