//! GCN-WMMSE unrolled network and the unfolded projected-gradient baseline.

mod forward;
mod io;
mod params;

pub use forward::{
    downlink_gcn_layer, gcnwmmse_forward, gcnwmmse_forward_from, modrelu, pgd_forward, pgd_v_step, power_projection,
    weight_gcf, LayerState,
};
pub use io::{
    params_from_json, params_to_json, pgd_from_json, pgd_to_json, read_params, read_pgd, write_params, write_pgd,
    PARAMS_SCHEMA_VERSION,
};
pub use params::{param_count, real_dof, LayerParams, ParameterSet, PgdParameterSet};

/// Parameters that make the network reproduce classical WMMSE.
pub fn wmmse_equivalent_params<T: crate::Real>(layers: usize, features: usize, degree: usize) -> ParameterSet<T> {
    ParameterSet::wmmse_equivalent(layers, features, degree)
}
