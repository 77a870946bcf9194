//! Data-generating worlds: synthetic hierarchical domains and colored MNIST.

pub mod io;
pub mod mnist;
pub mod synthetic;

pub use io::{read_datasets_csv, world_from_json, world_to_json, write_datasets_csv};
pub use mnist::{colorize, load_mnist_idx, Color, ColorSetting, MnistData};
pub use synthetic::{
    build_world, draw_domains, label_logical_or, or_label, sample_domain, sample_domains,
    BaseDomainSpec, RuleVariant, WorldSpec,
};
