pub mod model;
pub mod path;

pub use model::{
    adm_predict, adm_predict_s, derivative, idx, integrate_step, rk4_step, slip_angle, state_series,
    Control, Dynamics, EgoState, StateControlBounds, Vehicle, VehicleParams,
};
pub use path::{nearest_index, update_reference_index, Frame, ReferencePath, SplineOptions};
