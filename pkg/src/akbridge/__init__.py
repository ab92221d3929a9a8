"""Active-learning Kriging and PC-Kriging reliability analysis of a continuous beam
with uncertain intermediate support positions."""

__version__ = "0.1.0"

from .active_learning import ALConfig, SurrogateConfig, run, static_study  # noqa: E402
from .beam_sim import BeamConfig, BeamLimitState, LimitStateConfig  # noqa: E402
from .kriging import CorrelationSpec, KrigingModel, TrendSpec, fit  # noqa: E402
from .pck import PCKModel, fit_pck  # noqa: E402
from .reliability import SubsetConfig, build_reference, mc_pf, subset_pf  # noqa: E402
from .sampling import DesignSpace, lhs  # noqa: E402

__all__ = [
    "ALConfig", "SurrogateConfig", "run", "static_study", "BeamConfig", "BeamLimitState", "LimitStateConfig",
    "CorrelationSpec", "KrigingModel", "TrendSpec", "fit", "PCKModel", "fit_pck", "SubsetConfig",
    "build_reference", "mc_pf", "subset_pf", "DesignSpace", "lhs",
]
