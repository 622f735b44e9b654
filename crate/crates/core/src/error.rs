use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("non-finite input")]
    NonFinite,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point is off the unit sphere by {deviation:e}")]
    OffSphere { deviation: f64 },
    #[error("point {point:?} is outside the {chart} chart domain")]
    OutsideDomain {
        chart: &'static str,
        point: Vec<f64>,
    },
    #[error("step size underflow at t = {t:e} near {point:?}")]
    StepUnderflow { t: f64, point: Vec<f64> },
    #[error("step budget of {0} exhausted")]
    StepBudget(usize),
    #[error("g(0) = {0:e} but the radial equation needs g(0) = 0")]
    NonzeroAtOrigin(f64),
    #[error("radial tail did not converge: tail estimate {tail:e} exceeds {bound:e}")]
    TailNotConverged { tail: f64, bound: f64 },
    #[error("collocation system is underdetermined: need at least {required} points")]
    Underdetermined { required: usize },
    #[error("declared orders are not pairwise distinct (order {0} repeats)")]
    RepeatedOrder(u32),
    #[error("gauge function is negative ({value:e}) at {point:?}")]
    NegativeGauge { value: f64, point: Vec<f64> },
    #[error("trajectory is not confined to a fiber (base moved {0:e})")]
    NotFiberConfined(f64),
    #[error("charts differ: {0} vs {1}")]
    ChartMismatch(&'static str, &'static str),
}
