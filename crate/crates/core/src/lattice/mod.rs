//! The perturbed lattice Σ_q δ_{q+ξ_q} and its limits: displacement laws,
//! exact normalization, radial inversion tables and the windowed sampler.

mod io;
mod law;
mod sampler;

pub use io::{
    load_configuration, read_points_csv, save_configuration, sidecar_path, write_points_csv,
    ConfigSidecar,
};
pub use law::{ball_box_volume, disk_rect_area, normalization_constant, DisplacementLaw, LawKind};
pub use sampler::{
    certified_radius, mean_intensity, radial_sampler, radial_table, sample_auto,
    sample_configuration, sample_configuration_with, truncation_tail_bound, IntensityEstimate,
    PointConfiguration, RadialTable, SamplerOptions,
};
