//! Rotation-invariant place descriptors from range-like panoramas, and the
//! hardest-pair place losses.

pub mod backbone;
pub mod io;
pub mod loss;
pub mod model;
pub mod vlad;

pub use backbone::{Backbone, BackboneConfig, BackboneTape};
pub use io::{read_descriptors, write_descriptors};
pub use loss::{distance, loss_domain, loss_domain_grad, loss_view, loss_view_grad, MarginConfig, Tuple, TupleGrads};
pub use model::{
    describe, spherical_backbone, BackboneField, DescriptorConfig, DescriptorParams, HeadTape, PlaceDescriptor,
    MIN_NORM,
};
pub use vlad::{vlad_aggregate, LocalFeatureField, VladCodebook};
