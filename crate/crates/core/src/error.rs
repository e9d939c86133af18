use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Which of the two derived service rates an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    /// Base station to user.
    Delivery,
    /// Source node to base station.
    Fetch,
}

impl fmt::Display for RateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateKind::Delivery => f.write_str("delivery rate (bs_tx_power)"),
            RateKind::Fetch => f.write_str("fetch rate (source_tx_power)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside its documented domain.
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    /// The radio configuration yields a log argument `<= 1`.
    NonPositiveRate { kind: RateKind, log_argument: f64 },
    /// Offered load `>= 1`: the queue has no steady state.
    Unstable { load: f64 },
    /// The simulated queue grew beyond its cap.
    QueueDivergence {
        queue_length: usize,
        cap: usize,
        replication: Option<usize>,
    },
    /// The AoI budget is below the floor `1/mu_r + 1/mu_d`.
    InfeasibleBudget { budget: f64, minimum: f64 },
    /// Scalar root bracketing failed.
    BracketFailure { arrival_rate: f64, price: f64 },
    /// An iterative solver hit its iteration cap.
    NonConvergence { iterations: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter {
                name,
                value,
                reason,
            } => write!(f, "invalid parameter `{name}` = {value}: {reason}"),
            Error::NonPositiveRate { kind, log_argument } => {
                write!(f, "non-positive {kind}: log2 argument {log_argument} <= 1")
            }
            Error::Unstable { load } => {
                write!(f, "unstable queue: offered load {load} >= 1")
            }
            Error::QueueDivergence {
                queue_length,
                cap,
                replication,
            } => {
                write!(
                    f,
                    "queue diverged: {queue_length} pending requests exceed cap {cap}"
                )?;
                if let Some(r) = replication {
                    write!(f, " (replication {r})")?;
                }
                Ok(())
            }
            Error::InfeasibleBudget { budget, minimum } => write!(
                f,
                "infeasible AoI budget {budget} s: the smallest achievable mean AoI is {minimum} s"
            ),
            Error::BracketFailure {
                arrival_rate,
                price,
            } => write!(
                f,
                "no bracket for dual price {price} at arrival rate {arrival_rate}"
            ),
            Error::NonConvergence { iterations } => {
                write!(f, "solver did not converge within {iterations} iterations")
            }
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite and strictly positive",
        })
    }
}
