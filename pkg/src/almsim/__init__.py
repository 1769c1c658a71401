"""Asset-liability simulation with a trainable bond/equity allocation policy.

The package is organized along the pipeline:

- :mod:`almsim.termstructure` — yield curves, discounting, par-coupon bonds
- :mod:`almsim.balance_sheet` — liabilities, the monthly accounting cycle
- :mod:`almsim.ecb` — parameter-history ingestion
- :mod:`almsim.scenarios` — factor calibration and scenario generation
- :mod:`almsim.strategies` — policy network, benchmark, feature map
- :mod:`almsim.autodiff` / :mod:`almsim.training` — gradients and training
- :mod:`almsim.evaluation` — independent episode engine, reports, plots
- :mod:`almsim.config` / :mod:`almsim.artifacts` / :mod:`almsim.cli` — runs
"""

from .balance_sheet import (
    Action,
    BalanceSheetState,
    FrictionParams,
    beta_cdf,
    initial_state,
    liability_schedule,
    restructure,
    roll_forward,
    state_values,
)
from .config import RunConfig, config_hash, load_config
from .evaluation import ComparisonResult, EvalResult, compare, evaluate, run_episodes
from .scenarios import (
    EquityParams,
    PcaModel,
    ScenarioBatch,
    calibrate_pca,
    generate_batch,
)
from .strategies import (
    BenchmarkStrategy,
    PolicyStack,
    PolicyStrategy,
    features,
    load_policy,
    save_policy,
)
from .termstructure import (
    FACE,
    STANDARD_MATURITIES,
    BondSpec,
    SvenssonParams,
    bond_templates,
    discount,
    par_coupon,
    standard_series,
    svensson_to_curve,
)
from .training import (
    EpisodeSetup,
    ObjectiveSpec,
    OptimizerConfig,
    TrainReport,
    episode_objective,
    gradient,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "Action",
    "BalanceSheetState",
    "BenchmarkStrategy",
    "BondSpec",
    "ComparisonResult",
    "EpisodeSetup",
    "EquityParams",
    "EvalResult",
    "FACE",
    "FrictionParams",
    "ObjectiveSpec",
    "OptimizerConfig",
    "PcaModel",
    "PolicyStack",
    "PolicyStrategy",
    "RunConfig",
    "STANDARD_MATURITIES",
    "ScenarioBatch",
    "SvenssonParams",
    "TrainReport",
    "beta_cdf",
    "bond_templates",
    "calibrate_pca",
    "compare",
    "config_hash",
    "discount",
    "evaluate",
    "episode_objective",
    "features",
    "generate_batch",
    "gradient",
    "initial_state",
    "liability_schedule",
    "load_config",
    "load_policy",
    "par_coupon",
    "restructure",
    "roll_forward",
    "run_episodes",
    "save_policy",
    "standard_series",
    "state_values",
    "svensson_to_curve",
    "train",
    "__version__",
]
