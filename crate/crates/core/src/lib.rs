//! Wideband sample-rate conversion: a frame-parallel CIC and halfband
//! decimation chain with bit-exact serial reference implementations.
//!
//! The chain front end accepts an `L`-lane parallel stream (80 lanes in
//! the standard configuration), decimates it by 80 in a parallel CIC and
//! two parallel halfbands, then hands a single lane to a serial CIC and
//! up to three more halfbands.
//!
//! ```
//! use wbsrc_core::{plan_factor, run_src, serial_to_parallel, NumericKind, SerialStream, SrcConfig};
//!
//! let cfg = SrcConfig::standard(160, NumericKind::Fixed).unwrap();
//! assert_eq!(plan_factor(160).unwrap().serial_hb_stages, 1);
//! let input = SerialStream::new(vec![1000i64; 160 * 50], 20e6);
//! let out = run_src(&serial_to_parallel(&input, 80).unwrap(), &cfg).unwrap();
//! assert_eq!(out.len(), 50);
//! ```

pub mod analysis;
pub mod cic;
pub mod fir;
pub mod halfband;
pub mod io;
pub mod pipeline;
pub mod sample;
pub mod stream;

pub use analysis::{
    alias_attenuation_experiment, gen_multitone, multitone_experiment, spectrum, AliasReport,
    AnalysisError, ExperimentOptions, MultitoneReport, SpectrumReport, ToneSpec, WindowKind,
};
pub use cic::{
    run_parallel_cic, run_serial_cic, AdderMatrix, CicConfig, CicError, ParallelCic, SerialCic,
};
pub use fir::{serial_fir, Arithmetic, FixedPoint, FloatPoint};
pub use halfband::{
    check_structure, design_halfband, quantize_coeffs, HalfbandCoeffs, HalfbandDecimator,
    HalfbandError, HalfbandSpec,
};
pub use io::IoError;
pub use pipeline::{
    cascade_response, plan_factor, run_src, run_src_float, run_src_reference, FactorPlan,
    ResponseGrid, ResponseReport, SrcConfig, SrcError,
};
pub use sample::{FixedScalar, NumericKind, SampleScalar};
pub use stream::{
    parallel_to_serial, serial_to_parallel, ParallelFrame, ParallelStream, SerialStream,
    StreamError,
};

/// Any error raised by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Cic(#[from] CicError),
    #[error(transparent)]
    Halfband(#[from] HalfbandError),
    #[error(transparent)]
    Src(#[from] SrcError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Io(#[from] IoError),
}
