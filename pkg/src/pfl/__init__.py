"""Counterparty exposure simulation and potential-future-loss limit metrics."""

from .collateral import (
    CSATerms,
    DeltaVector,
    IMTerms,
    ScheduleRow,
    classical_plus,
    conditional_exposure,
    im_quantile,
    im_schedule,
    load_schedule_table,
    vm_balance,
)
from .errors import ConfigurationError, InputError, NumericalError, PFLError, UnsupportedInstrumentError
from .exposure import ExposureCube, build_exposure_cube
from .instruments import (
    FlowEvent,
    FlowKind,
    ForwardSpec,
    Portfolio,
    SwapSpec,
    flows_in_window,
    frozen_value,
    par_rate,
    value,
)
from .limits import BreachReport, LimitSpec, adjust_limit, allocate_appetite, check_limit, check_paired
from .market_models import (
    GBM,
    MeasureConfig,
    PathSet,
    ShortRate1F,
    TimeGrid,
    business_days,
    conditional_value_quantile,
    generate_paths,
)
from .metrics import (
    ConstantLGD,
    CorrelatedLGD,
    CreditCurve,
    IncurredCVA,
    Profile,
    ProtectionProfile,
    TermStructureLGD,
    apfl_profile,
    empirical_quantile,
    expected_shortfall,
    forward_cva_profile,
    incurred_cva,
    papfl_profile,
    pfe_profile,
    pfl_pfe_ratio,
    pfl_profile,
    protection_profile,
)
from .scenario_config import Scenario, load_scenario, serialize

__version__ = "0.1.0"
