//! Benchmark plants for the demos: an unstable batch reactor (sampled at
//! 0.2 s) with `p * ell = n`, and an unstable oscillator-plus-integrator
//! plant whose dimension gap exercises the augmentation path.

use nalgebra::DMatrix;

use crate::augmentation::ArtificialSystem;
use crate::experiment::ExperimentPlan;
use crate::lti::StateSpaceModel;

/// Discretized unstable batch reactor: `n = 4`, `m = 2`, `p = 2`,
/// observability index 2.
pub fn batch_reactor() -> StateSpaceModel {
    let a = DMatrix::from_row_slice(
        4,
        4,
        &[
            1.427, 0.039, 0.854, -0.622, //
            -0.096, 0.455, -0.034, 0.109, //
            0.115, 0.538, 0.384, 0.529, //
            -0.012, 0.537, 0.122, 0.777,
        ],
    );
    let b = DMatrix::from_row_slice(
        4,
        2,
        &[
            0.034, -0.305, //
            0.787, 0.008, //
            0.571, -0.380, //
            0.570, -0.050,
        ],
    );
    let c = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 1.0, -1.0, 0.0, 1.0, 0.0, 0.0]);
    StateSpaceModel::new(a, b, c).expect("static dimensions are consistent")
}

/// Collection regime for the batch reactor: ten short experiments (the plant
/// is unstable), strong excitation, 0.01-amplitude noise on both channels.
///
/// Initial states are drawn at the excitation scale. With small initial
/// states the output windows carry almost no information beyond the input
/// windows and the data richness condition sits right at the noise level.
pub fn batch_reactor_plan() -> ExperimentPlan {
    ExperimentPlan::new(10, 4)
        .with_input_amplitude(20.0)
        .with_noise(0.01, 0.01)
        .with_x0_amplitude(20.0)
}

/// Unstable plant made of an undamped rotation and an integrator: `n = 3`,
/// `m = 2`, `p = 2`, observability index 2, so `p * ell = 4 > 3` and
/// synthesis needs the augmentation path.
pub fn oscillator_integrator() -> StateSpaceModel {
    let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
    let c = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
    StateSpaceModel::new(a, b, c).expect("static dimensions are consistent")
}

/// The one-dimensional artificial companion of the oscillator-integrator
/// plant: a delay-free accumulator tap feeding both outputs.
pub fn oscillator_integrator_artificial() -> ArtificialSystem {
    ArtificialSystem::new(
        DMatrix::zeros(1, 1),
        DMatrix::from_element(1, 2, 1.0),
        DMatrix::from_element(2, 1, 1.0),
    )
    .expect("static dimensions are consistent")
}

/// Collection regime for the oscillator-integrator plant: one experiment of
/// 32 samples, moderate excitation, 0.01-amplitude noise on both channels.
pub fn oscillator_integrator_plan() -> ExperimentPlan {
    ExperimentPlan::new(1, 32)
        .with_input_amplitude(2.0)
        .with_noise(0.01, 0.01)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DEFAULT_RANK_TOL;
    use crate::lti::observability_index;

    #[test]
    fn batch_reactor_observability_index_is_two() {
        let m = batch_reactor();
        assert_eq!(
            observability_index(m.a(), m.c(), DEFAULT_RANK_TOL).unwrap(),
            2
        );
    }

    #[test]
    fn oscillator_integrator_has_dimension_gap() {
        let m = oscillator_integrator();
        let ell = observability_index(m.a(), m.c(), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(ell, 2);
        assert!(m.p() * ell > m.n());
    }
}
