//! Bundled space definitions for the builtin benchmark surfaces.
//!
//! The documents embedded here are the same files shipped under
//! `fixtures/`, so CLI runs against the files and library code against the
//! parsed statics agree exactly.

use std::sync::OnceLock;

use crate::space::ParameterSpace;

/// Raw document for the synthetic KinectFusion-style space
/// (9 parameters, 1,875,000 configurations).
pub const SYNTH_KFUSION_DOC: &str = include_str!("../../../fixtures/synth-kfusion.space");

/// Raw document for the synthetic ElasticFusion-style space
/// (3 ordinals and 5 flags, 442,368 configurations).
pub const SYNTH_ELASTICFUSION_DOC: &str =
    include_str!("../../../fixtures/synth-elasticfusion.space");

pub fn synth_kfusion() -> &'static ParameterSpace {
    static SPACE: OnceLock<ParameterSpace> = OnceLock::new();
    SPACE.get_or_init(|| ParameterSpace::parse(SYNTH_KFUSION_DOC).expect("bundled space parses"))
}

pub fn synth_elasticfusion() -> &'static ParameterSpace {
    static SPACE: OnceLock<ParameterSpace> = OnceLock::new();
    SPACE.get_or_init(|| {
        ParameterSpace::parse(SYNTH_ELASTICFUSION_DOC).expect("bundled space parses")
    })
}
