//! Telegraph noise, 1/f baths and their spectra.

pub mod flicker;
pub mod psd;
pub mod rtn;
pub mod sampler;

pub use flicker::{build_flicker_bath, build_flicker_bath_from_spec, flicker_value_at, BathSpec, FlickerBath};
pub use psd::{
    estimate_psd, flicker_psd_theory, lorentzian_psd, CorrelationConvention, FlickerPsdTheory,
    PsdEstimate, PsdOptions, TraceSampling, Window,
};
pub use rtn::{sample_rtn_path, sample_switching_rate, RtnPath, RtnSource, Sign, MAX_AMPLITUDE_PHI0};
pub use sampler::{BathTraceSampler, FluxEvents};
