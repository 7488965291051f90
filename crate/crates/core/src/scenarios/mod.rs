//! Built-in scenario generators.
//!
//! Each generator emits a model and a deployment as ordinary model-language
//! text, then parses it back, so every generated artifact round-trips
//! through the textual format by construction. Generators are deterministic
//! in their parameters and seeds.

mod capture_flag;
mod city;
mod honeybee;

pub use capture_flag::{gen_capture_flag, gen_capture_flag_with, CaptureFlagConfig};
pub use city::{gen_city, CityError, CitySpec, Protocol};
pub use honeybee::{cluster_threshold, gen_honeybee, BeeStart, GridSpec, HoneybeeError};
