"""Information-based pricing of a defaultable digital bond with a random information flow rate."""

__version__ = "0.1.0"

from infoflow.errors import (  # noqa: E402
    BadInterval,
    ConfigError,
    DegenerateSample,
    InfoFlowError,
    InvalidModel,
    NegativeEffectiveRate,
    NoConvergence,
    NonPositiveFlowRate,
    QuadratureFailure,
    StrikeOutOfRange,
    TargetOutOfRange,
    TimeAtOrPastHorizon,
    TooFewPaths,
)
from infoflow.model import (  # noqa: E402
    MarketModel,
    MeasurabilityReport,
    SourceSpec,
    discount,
    effective_flow_rate,
    validate_measurability,
)
from infoflow.paths import (  # noqa: E402
    InfoPath,
    PathEnsemble,
    TimeGrid,
    information_path,
    make_ensemble,
    sample_bridge,
    sample_scenario,
)
from infoflow.inference import PosteriorState, bond_price, entropy, posterior, terminal_limit_check  # noqa: E402
