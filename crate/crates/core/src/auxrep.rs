//! The auxiliary shift realization: a `(p+m)*ell`-dimensional system whose
//! state is the window of the last `ell` outputs and inputs.
//!
//! Its state matrix splits into a fixed two-block upshift `F`, a fixed output
//! injection `L`, a fixed input injection `Bb`, and the plant-dependent
//! predictor row `Z`: the dynamics are `xi+ = (F + L Z) xi + Bb v`. The module
//! also provides the lifting of plant initial conditions into window states
//! and the reachability facts of the pair `(F + L Z, Bb)`.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{self, DEFAULT_RANK_TOL};
use crate::lti::{self, IoParameter, LtiError, StateSpaceModel};

/// The fixed matrices `(F, L, Bb)` of the window shift, with block sizes
/// implied by `(p, m, ell)`.
#[derive(Debug, Clone)]
pub struct AuxShift {
    pub p: usize,
    pub m: usize,
    pub ell: usize,
    /// Two-block upshift, `(p+m)*ell` square.
    pub f: DMatrix<f64>,
    /// Injection of the current output into window slot `ell`, `(p+m)*ell x p`.
    pub l: DMatrix<f64>,
    /// Injection of the current input into window slot `2*ell`, `(p+m)*ell x m`.
    pub bb: DMatrix<f64>,
}

impl AuxShift {
    /// Window state dimension `(p+m)*ell`.
    pub fn dim(&self) -> usize {
        (self.p + self.m) * self.ell
    }
}

/// The auxiliary system `xi+ = (F + L Z) xi + Bb v` for a concrete predictor.
#[derive(Debug, Clone)]
pub struct AuxSystem {
    pub shift: AuxShift,
    pub z: IoParameter,
    /// `F + L Z`.
    pub a_aux: DMatrix<f64>,
    /// Noise input channel `L [I_p  -Z]`, `(p+m)*ell x (p + (p+m)*ell)`.
    pub bd: DMatrix<f64>,
}

/// Builds the fixed shift matrices for the given block sizes.
pub fn aux_shift(p: usize, m: usize, ell: usize) -> AuxShift {
    assert!(p >= 1 && m >= 1 && ell >= 1, "p, m, ell must be positive");
    let dim = (p + m) * ell;
    let mut f = DMatrix::zeros(dim, dim);
    for i in 0..ell.saturating_sub(1) {
        f.view_mut((i * p, (i + 1) * p), (p, p))
            .copy_from(&DMatrix::identity(p, p));
        let off = p * ell;
        f.view_mut((off + i * m, off + (i + 1) * m), (m, m))
            .copy_from(&DMatrix::identity(m, m));
    }
    let mut l = DMatrix::zeros(dim, p);
    l.view_mut(((ell - 1) * p, 0), (p, p))
        .copy_from(&DMatrix::identity(p, p));
    let mut bb = DMatrix::zeros(dim, m);
    bb.view_mut((p * ell + (ell - 1) * m, 0), (m, m))
        .copy_from(&DMatrix::identity(m, m));
    AuxShift { p, m, ell, f, l, bb }
}

/// Builds the auxiliary system of an observable model at window length `ell`.
pub fn aux_system(model: &StateSpaceModel, ell: usize) -> Result<AuxSystem, LtiError> {
    let z = lti::io_parameter(model, ell)?;
    let shift = aux_shift(model.p(), model.m(), ell);
    let zc = z.z();
    let a_aux = &shift.f + &shift.l * &zc;
    let p = model.p();
    let mut noise_map = DMatrix::zeros(p, p + zc.ncols());
    noise_map
        .view_mut((0, 0), (p, p))
        .copy_from(&DMatrix::identity(p, p));
    noise_map.view_mut((0, p), (p, zc.ncols())).copy_from(&(-&zc));
    let bd = &shift.l * noise_map;
    Ok(AuxSystem { shift, z, a_aux, bd })
}

/// Window state capturing a plant run started at `x0` with the first `ell`
/// inputs given: top block `O x0 + T u_stack`, bottom block `u_stack`.
///
/// Starting the auxiliary system at this state and feeding it the remaining
/// plant inputs reproduces the stacked I/O window of the plant trajectory.
pub fn lift_initial_condition(
    model: &StateSpaceModel,
    ell: usize,
    x0: &DVector<f64>,
    first_inputs: &[DVector<f64>],
) -> Result<DVector<f64>, LtiError> {
    if x0.len() != model.n() {
        return Err(LtiError::Dimension(format!(
            "x0 has length {}, expected {}",
            x0.len(),
            model.n()
        )));
    }
    if first_inputs.len() != ell {
        return Err(LtiError::Dimension(format!(
            "expected {ell} initial inputs, got {}",
            first_inputs.len()
        )));
    }
    let sm = lti::structural_matrices(model, ell)?;
    let m = model.m();
    let mut u_stack = DVector::zeros(m * ell);
    for (j, u) in first_inputs.iter().enumerate() {
        if u.len() != m {
            return Err(LtiError::Dimension(format!(
                "initial input {j} has length {}, expected {m}",
                u.len()
            )));
        }
        u_stack.rows_mut(j * m, m).copy_from(u);
    }
    let top = &sm.o * x0 + &sm.t * &u_stack;
    let mut xi = DVector::zeros(sm.o.nrows() + u_stack.len());
    xi.rows_mut(0, top.len()).copy_from(&top);
    xi.rows_mut(top.len(), u_stack.len()).copy_from(&u_stack);
    Ok(xi)
}

/// Reachability facts of the auxiliary pair `(F + L Z, Bb)`.
#[derive(Debug, Clone)]
pub struct ReachabilityReport {
    /// `[[O, T], [0, I]]`; its column space is the reachable subspace of the
    /// auxiliary pair when the plant pair `(A, B)` is reachable.
    pub h: DMatrix<f64>,
    /// Rank of the reachability matrix of `(F + L Z, Bb)`.
    pub dim_reach_aux: usize,
    /// Whether the plant pair `(A, B)` is reachable.
    pub plant_reachable: bool,
    /// Column space of `h` equals the auxiliary reachable subspace.
    /// `None` when the plant pair is not reachable.
    pub lemma1_holds: Option<bool>,
    /// Auxiliary pair reachable iff `p*ell == n`.
    /// `None` when the plant pair is not reachable.
    pub lemma2_consistent: Option<bool>,
}

/// Computes the reachable-subspace facts of the auxiliary pair.
pub fn reachability_report(
    model: &StateSpaceModel,
    ell: usize,
) -> Result<ReachabilityReport, LtiError> {
    let sm = lti::structural_matrices(model, ell)?;
    let aux = aux_system(model, ell)?;
    let (n, m, p) = (model.n(), model.m(), model.p());

    let mut h = DMatrix::zeros((p + m) * ell, n + m * ell);
    h.view_mut((0, 0), (p * ell, n)).copy_from(&sm.o);
    h.view_mut((0, n), (p * ell, m * ell)).copy_from(&sm.t);
    h.view_mut((p * ell, n), (m * ell, m * ell))
        .copy_from(&DMatrix::identity(m * ell, m * ell));

    // Power stacks of an unstable pair span many orders of magnitude;
    // normalize columns before any rank decision.
    let reach_aux = linalg::normalize_columns(&linalg::reachability_matrix(
        &aux.a_aux,
        &aux.shift.bb,
    ));
    let dim_reach_aux = linalg::rank(&reach_aux, DEFAULT_RANK_TOL);

    let reach_plant =
        linalg::normalize_columns(&linalg::reachability_matrix(model.a(), model.b()));
    let plant_reachable = linalg::rank(&reach_plant, DEFAULT_RANK_TOL) == n;

    let (lemma1_holds, lemma2_consistent) = if plant_reachable {
        let h_scaled = linalg::normalize_columns(&h);
        let rank_h = linalg::rank(&h_scaled, DEFAULT_RANK_TOL);
        let mut joint = DMatrix::zeros(h.nrows(), h.ncols() + reach_aux.ncols());
        joint
            .view_mut((0, 0), (h.nrows(), h.ncols()))
            .copy_from(&h_scaled);
        joint
            .view_mut((0, h.ncols()), (h.nrows(), reach_aux.ncols()))
            .copy_from(&reach_aux);
        let rank_joint = linalg::rank(&joint, DEFAULT_RANK_TOL);
        let lemma1 = rank_h == dim_reach_aux && rank_joint == rank_h;
        let lemma2 = (dim_reach_aux == (p + m) * ell) == (p * ell == n);
        (Some(lemma1), Some(lemma2))
    } else {
        (None, None)
    };

    Ok(ReachabilityReport {
        h,
        dim_reach_aux,
        plant_reachable,
        lemma1_holds,
        lemma2_consistent,
    })
}

/// Runs the auxiliary recurrence from the zero window state.
///
/// Returns `|inputs| + 1` states.
pub fn forced_response_aux(aux: &AuxSystem, inputs: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut traj = Vec::with_capacity(inputs.len() + 1);
    traj.push(DVector::zeros(aux.shift.dim()));
    for v in inputs {
        assert_eq!(v.len(), aux.shift.m, "input dimension mismatch");
        let xi = traj.last().expect("nonempty");
        traj.push(&aux.a_aux * xi + &aux.shift.bb * v);
    }
    traj
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_structure_single_channel() {
        let s = aux_shift(1, 1, 2);
        let mut f = DMatrix::zeros(4, 4);
        f[(0, 1)] = 1.0;
        f[(2, 3)] = 1.0;
        assert_eq!(s.f, f);
        assert_eq!(s.l.as_slice(), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(s.bb.as_slice(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn shift_shapes_two_channels() {
        let s = aux_shift(2, 2, 2);
        assert_eq!(s.f.shape(), (8, 8));
        assert_eq!(s.l.shape(), (8, 2));
        assert_eq!(s.bb.shape(), (8, 2));
    }

    #[test]
    fn injections_are_orthonormal_and_their_rows_are_zero_in_f() {
        for (p, m, ell) in [(1, 1, 1), (2, 1, 2), (1, 3, 2), (2, 2, 3)] {
            let s = aux_shift(p, m, ell);
            assert!((s.l.transpose() * &s.l - DMatrix::identity(p, p)).norm() < 1e-15);
            assert!((s.bb.transpose() * &s.bb - DMatrix::identity(m, m)).norm() < 1e-15);
            // The rows receiving the injections are zero rows of the shift.
            assert_eq!((s.l.transpose() * &s.f).norm(), 0.0);
            assert_eq!((s.bb.transpose() * &s.f).norm(), 0.0);
        }
    }

    #[test]
    fn shift_moves_window_blocks_up() {
        // F applied to a stacked window drops the oldest block of each half
        // and shifts the rest up by one slot.
        let (p, m, ell) = (2, 1, 3);
        let s = aux_shift(p, m, ell);
        let v = DVector::from_iterator((p + m) * ell, (0..(p + m) * ell).map(|i| i as f64));
        let shifted = &s.f * &v;
        for i in 0..(ell - 1) * p {
            assert_eq!(shifted[i], v[i + p]);
        }
        for i in 0..p {
            assert_eq!(shifted[(ell - 1) * p + i], 0.0);
        }
        let off = p * ell;
        for i in 0..(ell - 1) * m {
            assert_eq!(shifted[off + i], v[off + i + m]);
        }
        assert_eq!(shifted[off + (ell - 1) * m], 0.0);
    }

    #[test]
    fn scalar_aux_system_window_one() {
        let model = StateSpaceModel::new(
            DMatrix::from_element(1, 1, 0.4),
            DMatrix::from_element(1, 1, 1.3),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let aux = aux_system(&model, 1).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.4, 1.3, 0.0, 0.0]);
        assert!((aux.a_aux - expected).norm() < 1e-14);
        assert_eq!(aux.shift.bb.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn lift_of_origin_with_zero_inputs_is_zero() {
        let model = StateSpaceModel::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -0.3, 0.2]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.5]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap();
        let xi = lift_initial_condition(
            &model,
            2,
            &DVector::zeros(2),
            &[DVector::zeros(1), DVector::zeros(1)],
        )
        .unwrap();
        assert_eq!(xi.norm(), 0.0);
    }

    #[test]
    fn scalar_lift_is_state_and_input() {
        let model = StateSpaceModel::new(
            DMatrix::from_element(1, 1, 0.8),
            DMatrix::from_element(1, 1, 2.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let xi = lift_initial_condition(
            &model,
            1,
            &DVector::from_element(1, -1.5),
            &[DVector::from_element(1, 0.7)],
        )
        .unwrap();
        assert_eq!(xi.as_slice(), &[-1.5, 0.7]);
    }

    #[test]
    fn scalar_reachable_pair_saturates_window() {
        let model = StateSpaceModel::new(
            DMatrix::from_element(1, 1, 0.4),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let rep = reachability_report(&model, 1).unwrap();
        assert!(rep.plant_reachable);
        assert_eq!(rep.dim_reach_aux, 2);
        assert_eq!(rep.lemma1_holds, Some(true));
        assert_eq!(rep.lemma2_consistent, Some(true));
    }

    #[test]
    fn zero_inputs_give_zero_forced_response() {
        let model = StateSpaceModel::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -0.4, 0.1]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let aux = aux_system(&model, 1).unwrap();
        let traj = forced_response_aux(&aux, &vec![DVector::zeros(1); 8]);
        assert!(traj.iter().all(|xi| xi.norm() == 0.0));
    }
}
