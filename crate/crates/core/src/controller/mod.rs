//! Controller filters in linear fractional form, their interconnection, and
//! the stacked parameter block used by the tuner.

mod filters;
mod lfr;
mod structure;

pub use filters::{gain_to_lfr, lead_to_lfr, mixing_to_lfr, notch_to_lfr, pi_to_lfr, primitive_lfr, FilterKind};
pub use lfr::{interconnect, Interconnect, LfrBlock};
pub use structure::{
    freeze_controller, load_structure, parse_structure, ControllerStructure, FilterFile, FilterSpec,
    FrozenController, GeneralizedController, Node, NodeFile, OneOrMany, ParamDescriptor, ParamFile, ParamSpec,
    StructureFile,
};
