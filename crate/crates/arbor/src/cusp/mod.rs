//! Thom-Boardman strata of fronts and the local `Sigma^{1,0}` resolution.

mod front;
mod resolve;

use thiserror::Error;

pub use front::{
    cusp_chart_check, rank_drop, tb_stratify, ChartCheck, ChartVerdict, Degeneracy, FrontMap, JacobianFn, MapFn,
    TbPoint, TbStratification, TbType, GAP_FACTOR,
};
pub use resolve::{
    c1_closeness, local_omega, make_h, resolution_svg, resolve_sigma10, tangency_audit, unresolved_cusp, Closeness,
    CuspResolution, FoliationLocal, HFunction, ResolveParams, SheetSign, StratumKind, StratumSample, TangencyReport,
    MAX_EPSILON, WIDTH_RATIO,
};

#[derive(Debug, Error)]
pub enum CuspError {
    #[error("{0}")]
    Parameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("point is not on Sigma^1 (rank drop {rank_drop:?})")]
    NotSigma1 { rank_drop: Option<usize> },
}
