//! Conventional schemes: cooperative beamforming that minimizes transmit
//! sum-power, followed by independent per-BS energy trading.
//!
//! With every `μ_i` frozen to one common price the trading problem's
//! Lagrangian weights all BSs equally, so its beams are exactly the capped
//! sum-power beams. Both baselines therefore reuse the solvers' dual loop in
//! that mode and then trade at the real prices.

use crate::dual::{self, PriceMode, SolverOptions};
use crate::duality::WarmDownlink;
use crate::error::Result;
use crate::model::{ProblemInstance, Scheme, SolveOutcome};
use crate::zf::{zf_closed_form, NullSpaceBasis};

/// Price used while designing the beams; its value does not affect them.
const FROZEN_PRICE: f64 = 1.0;

/// Sum-power optimal beams with independent trading.
///
/// `primal_objective` holds the frozen-price bill, which is the total
/// consumption minus harvest; `cost` is priced with the real tariffs.
pub fn conventional_optimal(instance: &ProblemInstance, opts: &SolverOptions) -> Result<SolveOutcome> {
    let mut inner = WarmDownlink::new(&instance.channels, &instance.qos, opts.fixed_point);
    dual::run(
        instance,
        opts,
        PriceMode::Frozen(FROZEN_PRICE),
        Scheme::ConvOptimal,
        |noise| inner.beams(noise),
    )
}

/// Sum-power optimal ZF beams with independent trading.
pub fn conventional_zf(instance: &ProblemInstance, opts: &SolverOptions) -> Result<SolveOutcome> {
    let bases = NullSpaceBasis::compute(&instance.channels)?;
    dual::run(
        instance,
        opts,
        PriceMode::Frozen(FROZEN_PRICE),
        Scheme::ConvZf,
        |noise| zf_closed_form(&instance.channels, &instance.qos, noise, &bases),
    )
}
