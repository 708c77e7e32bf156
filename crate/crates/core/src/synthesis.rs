//! Controller synthesis: assemble the robust-stabilization LMI over the
//! consistent set, solve for `(Y, P)`, extract the gain `K = Y P^{-1}` and
//! package the dynamic output-feedback controller.
//!
//! Two algebraically equivalent LMI assemblies are kept: `Eq18` works on the
//! raw quadratic-form matrices of the set, `Zqa` on its center/shape form.
//! Cross-checking them is free insurance on the set reformulation.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::augmentation::ArtificialSystem;
use crate::auxrep::AuxShift;
use crate::consistency::{ConsistencyError, ConsistentSet};
use crate::linalg;
use crate::sdp::{self, Feasibility, LmiProblem, SdpError, SolverSettings};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error(transparent)]
    Consistency(#[from] ConsistencyError),
    #[error(transparent)]
    Solver(#[from] SdpError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Which assembly of the synthesis LMI to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LmiVariant {
    /// Raw-form blocks `(Acal, Bcal, Cs)`.
    Eq18,
    /// Center/shape blocks `(Zc, Qcal, Acal)`; better scaled once the set is
    /// centered.
    #[default]
    Zqa,
}

impl LmiVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            LmiVariant::Eq18 => "eq18",
            LmiVariant::Zqa => "zqa",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SynthesisOptions {
    pub variant: LmiVariant,
    /// Margin override; `None` selects the solver default.
    pub epsilon: Option<f64>,
    pub settings: SolverSettings,
}

/// A feasible synthesis: gain, Lyapunov certificate and diagnostics.
#[derive(Debug, Clone)]
pub struct SynthesisResult {
    /// `m x (p+m)*ell` window feedback gain.
    pub k: DMatrix<f64>,
    /// Lyapunov matrix, symmetric PD.
    pub p: DMatrix<f64>,
    pub y: DMatrix<f64>,
    /// Worst `lambda_max` over the assembled constraints (negative).
    pub achieved_margin: f64,
    pub variant: LmiVariant,
    /// Condition number of `P`; values above 1e10 deserve suspicion.
    pub p_condition: f64,
    pub epsilon: f64,
}

/// Outcome of a synthesis attempt.
#[derive(Debug, Clone)]
pub enum SynthOutcome {
    Feasible(SynthesisResult),
    Infeasible { best_margin: f64 },
}

/// Builds the synthesis LMI in the requested variant.
///
/// Both variants are 3x3 block matrices in `(Y, P)` with square blocks of the
/// window dimension, plus the positive-definiteness requirement on `P`.
pub fn assemble_lmi(
    set: &ConsistentSet,
    shift: &AuxShift,
    epsilon: Option<f64>,
    variant: LmiVariant,
) -> Result<LmiProblem, SynthesisError> {
    let w = shift.dim();
    if set.wdim() != w || set.p() != shift.p {
        return Err(SynthesisError::Dimension(format!(
            "set is {}x{}, shift expects p={} w={}",
            set.p(),
            set.wdim(),
            shift.p,
            w
        )));
    }
    let m = shift.m;
    let eye_w = DMatrix::<f64>::identity(w, w);

    // The data Gram sits orders of magnitude above the noise-sized blocks.
    // Measure the third block row and column in Gram units: the congruence by
    // diag(I, I, Acal^{-1/2}) keeps feasibility intact and balances the
    // margin across blocks.
    let a_inv_sqrt = linalg::pd_inv_sqrt(set.acal()).map_err(|min_eig| {
        SynthesisError::Consistency(ConsistencyError::Assumption2Violated { min_eig })
    })?;

    let mut prob = LmiProblem::new();
    prob.epsilon = epsilon;
    let p_var = prob.add_variable("P", w, w, true, true);
    let y_var = prob.add_variable("Y", m, w, false, false);

    let mut constant = DMatrix::zeros(3 * w, 3 * w);
    match variant {
        LmiVariant::Eq18 => {
            let c00 = -(&shift.l * set.ccal() * shift.l.transpose());
            let c02 = &shift.l * set.bcal() * &a_inv_sqrt;
            constant.view_mut((0, 0), (w, w)).copy_from(&c00);
            constant.view_mut((0, 2 * w), (w, w)).copy_from(&c02);
            constant.view_mut((2 * w, 0), (w, w)).copy_from(&c02.transpose());
            constant
                .view_mut((2 * w, 2 * w), (w, w))
                .copy_from(&(-&eye_w));
            let ci = prob.add_constraint("synthesis-eq18", vec![w, w, w], constant);
            prob.add_term(ci, p_var, 0, 0, -eye_w.clone(), eye_w.clone(), false);
            prob.add_term(ci, p_var, 0, 1, shift.f.clone(), eye_w.clone(), false);
            prob.add_term(ci, y_var, 0, 1, shift.bb.clone(), eye_w.clone(), false);
            prob.add_term(ci, p_var, 1, 1, -eye_w.clone(), eye_w.clone(), false);
            prob.add_term(ci, p_var, 1, 2, -eye_w.clone(), a_inv_sqrt, false);
        }
        LmiVariant::Zqa => {
            let c00 = &shift.l * set.qcal() * shift.l.transpose();
            constant.view_mut((0, 0), (w, w)).copy_from(&c00);
            constant
                .view_mut((2 * w, 2 * w), (w, w))
                .copy_from(&(-&eye_w));
            let ci = prob.add_constraint("synthesis-zqa", vec![w, w, w], constant);
            let f_shifted = &shift.f + &shift.l * set.zcen();
            prob.add_term(ci, p_var, 0, 0, -eye_w.clone(), eye_w.clone(), false);
            prob.add_term(ci, p_var, 0, 1, f_shifted, eye_w.clone(), false);
            prob.add_term(ci, y_var, 0, 1, shift.bb.clone(), eye_w.clone(), false);
            prob.add_term(ci, p_var, 1, 1, -eye_w.clone(), eye_w.clone(), false);
            prob.add_term(ci, p_var, 1, 2, eye_w.clone(), a_inv_sqrt, false);
        }
    }
    Ok(prob)
}

/// Solves the synthesis LMI and extracts `K = Y P^{-1}`.
pub fn synthesize(
    set: &ConsistentSet,
    shift: &AuxShift,
    opts: &SynthesisOptions,
) -> Result<SynthOutcome, SynthesisError> {
    let prob = assemble_lmi(set, shift, opts.epsilon, opts.variant)?;
    match sdp::solve_feasibility_with(&prob, &opts.settings)? {
        Feasibility::Infeasible { best_margin, .. } => {
            Ok(SynthOutcome::Infeasible { best_margin })
        }
        Feasibility::Feasible(sol) => {
            let p = sol.get("P").expect("P is a problem variable").clone();
            let y = sol.get("Y").expect("Y is a problem variable").clone();
            let chol = nalgebra::Cholesky::new(p.clone()).ok_or_else(|| {
                SdpError::NumericalFailure("returned P is not positive definite".into())
            })?;
            // K = Y P^{-1} via the SPD factorization: solve P K^T = Y^T.
            let k = chol.solve(&y.transpose()).transpose();
            let eigs = linalg::sym_eigenvalues(&p);
            let p_condition = eigs.max() / eigs.min();
            let achieved_margin = sol.margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(SynthOutcome::Feasible(SynthesisResult {
                k,
                p,
                y,
                achieved_margin,
                variant: opts.variant,
                p_condition,
                epsilon: sol.epsilon,
            }))
        }
    }
}

/// The realized dynamic output-feedback controller.
///
/// Plain case: state `chi` of the window dimension,
/// `chi+ = (F + Bb K) chi + L y`, `u = K chi`. With an augmentation block the
/// state grows by the artificial dimension and the artificial system runs
/// inside the controller.
#[derive(Debug, Clone)]
pub struct DynController {
    pub shift: AuxShift,
    pub k: DMatrix<f64>,
    pub augmentation: Option<ArtificialSystem>,
}

impl DynController {
    pub fn state_dim(&self) -> usize {
        self.shift.dim() + self.augmentation.as_ref().map_or(0, |a| a.na())
    }

    /// Controller state matrix: `F + Bb K`, or the 2x2 block matrix
    /// `[[Aa, Ba K], [L Ca, F + Bb K]]` when augmented.
    pub fn state_matrix(&self) -> DMatrix<f64> {
        let w = self.shift.dim();
        let core = &self.shift.f + &self.shift.bb * &self.k;
        match &self.augmentation {
            None => core,
            Some(art) => {
                let na = art.na();
                let mut m = DMatrix::zeros(na + w, na + w);
                m.view_mut((0, 0), (na, na)).copy_from(&art.a);
                m.view_mut((0, na), (na, w)).copy_from(&(&art.b * &self.k));
                m.view_mut((na, 0), (w, na))
                    .copy_from(&(&self.shift.l * &art.c));
                m.view_mut((na, na), (w, w)).copy_from(&core);
                m
            }
        }
    }

    /// Measurement injection: `L`, or `[0; L]` when augmented.
    pub fn input_matrix(&self) -> DMatrix<f64> {
        match &self.augmentation {
            None => self.shift.l.clone(),
            Some(art) => {
                let na = art.na();
                let mut m = DMatrix::zeros(na + self.shift.dim(), self.shift.p);
                m.view_mut((na, 0), (self.shift.dim(), self.shift.p))
                    .copy_from(&self.shift.l);
                m
            }
        }
    }

    /// Control output map: `K` acting on the window part of the state.
    pub fn output_matrix(&self) -> DMatrix<f64> {
        match &self.augmentation {
            None => self.k.clone(),
            Some(art) => {
                let mut m = DMatrix::zeros(self.k.nrows(), art.na() + self.shift.dim());
                m.view_mut((0, art.na()), self.k.shape()).copy_from(&self.k);
                m
            }
        }
    }
}

/// Packages a feasible synthesis into the realized controller.
pub fn make_controller(
    result: &SynthesisResult,
    shift: &AuxShift,
    augmentation: Option<ArtificialSystem>,
) -> DynController {
    DynController {
        shift: shift.clone(),
        k: result.k.clone(),
        augmentation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auxrep::aux_shift;

    fn hand_set(zcen: &[f64], q_diag: f64, w: usize) -> ConsistentSet {
        // Acal = I, center zcen, Qcal = q_diag * I.
        let p = 1;
        let z = DMatrix::from_row_slice(p, w, zcen);
        let bcal = -z.clone();
        let ccal = &bcal * bcal.transpose() - DMatrix::identity(p, p) * q_diag;
        ConsistentSet::from_parts(DMatrix::identity(w, w), bcal, ccal).unwrap()
    }

    #[test]
    fn scalar_lmi_has_expected_shape() {
        let shift = aux_shift(1, 1, 1);
        let set = hand_set(&[0.5, 1.0], 0.01, 2);
        let prob = assemble_lmi(&set, &shift, None, LmiVariant::Zqa).unwrap();
        assert_eq!(prob.constraints[0].dim(), 6);
        assert_eq!(prob.constraints[0].block_sizes, vec![2, 2, 2]);
    }

    #[test]
    fn singleton_set_synthesis_stabilizes_known_aux() {
        // Singleton at Z = [0.5, 1.0]: stabilizable scalar plant.
        let shift = aux_shift(1, 1, 1);
        let set = hand_set(&[0.5, 1.0], 0.0, 2);
        for variant in [LmiVariant::Eq18, LmiVariant::Zqa] {
            let opts = SynthesisOptions { variant, ..Default::default() };
            let res = match synthesize(&set, &shift, &opts).unwrap() {
                SynthOutcome::Feasible(res) => res,
                SynthOutcome::Infeasible { best_margin } => {
                    panic!("{variant:?} infeasible at {best_margin}")
                }
            };
            assert!((&res.k * &res.p - &res.y).norm() <= 1e-8 * res.y.norm().max(1.0));
            let a_cl = &shift.f + &shift.l * set.zcen() + &shift.bb * &res.k;
            assert!(linalg::spectral_radius(&a_cl) < 1.0);
        }
    }

    #[test]
    fn set_containing_unstabilizable_point_is_infeasible() {
        // Huge shape: the set contains Z = [2, 0], an unstable mode no input
        // reaches, so no common gain exists.
        let shift = aux_shift(1, 1, 1);
        let set = hand_set(&[2.0, 0.0], 25.0, 2);
        assert!(set.contains(&DMatrix::from_row_slice(1, 2, &[2.0, 0.0])));
        for variant in [LmiVariant::Eq18, LmiVariant::Zqa] {
            let opts = SynthesisOptions { variant, ..Default::default() };
            match synthesize(&set, &shift, &opts).unwrap() {
                SynthOutcome::Infeasible { .. } => {}
                SynthOutcome::Feasible(_) => panic!("{variant:?} should be infeasible"),
            }
        }
    }

    #[test]
    fn zero_gain_controller_is_pure_shift() {
        let shift = aux_shift(2, 1, 2);
        let ctrl = DynController {
            shift: shift.clone(),
            k: DMatrix::zeros(1, shift.dim()),
            augmentation: None,
        };
        let a = ctrl.state_matrix();
        assert_eq!(a, shift.f);
        // The shift is nilpotent with index ell.
        assert_eq!(linalg::mat_pow(&a, 2).norm(), 0.0);
    }
}
