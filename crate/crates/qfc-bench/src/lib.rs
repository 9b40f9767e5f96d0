//! Shared model builders for the benchmark suite. Kept as a library so the
//! benches measure the kernels, not scenario setup.

use qfc_core::filtering::FilterModel;
use qfc_core::linalg::cr;
use qfc_core::lqg::{free_particle_model, CostSpec, LinearModel};
use qfc_core::{CMatrix, CouplingSet, DensityMatrix, RMatrix};

/// Qubit amplitude damping at unit rate, (ground, excited) basis.
pub fn qubit_decay() -> CouplingSet {
    let mut l = CMatrix::zeros(2, 2);
    l[(0, 1)] = cr(1.0);
    CouplingSet::new(CMatrix::zeros(2, 2), vec![l], None, 1.0).expect("valid coupling")
}

pub fn excited() -> DensityMatrix {
    DensityMatrix::pure(&[cr(0.0), cr(1.0)]).expect("valid ket")
}

pub fn homodyne_qubit() -> FilterModel {
    FilterModel::new(qubit_decay(), vec![0], vec![], vec![]).expect("valid roles")
}

pub fn photodetect_qubit() -> FilterModel {
    FilterModel::new(qubit_decay(), vec![], vec![0], vec![]).expect("valid roles")
}

/// Monitored and actuated free particle with every coupling switched on.
pub fn busy_free_particle() -> (LinearModel, CostSpec) {
    let (model, _) = free_particle_model(1.1, 0.7, 0.4, 0.2, 1.3, 1.0).expect("valid parameters");
    let cost =
        CostSpec::canonical(&model, RMatrix::identity(2, 2).scale(0.4)).expect("valid cost");
    (model, cost)
}
