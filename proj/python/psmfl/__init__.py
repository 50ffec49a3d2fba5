from ._psmfl import (
    DEFAULT_CRITICAL_VALUE,
    DataError,
    TrainingError,
    advice_code_for_bmi,
    bmi_meters,
    fit_models,
    localize_trace,
    run_study,
    significance_test,
    write_demo_workload,
)

__all__ = [
    "DEFAULT_CRITICAL_VALUE",
    "DataError",
    "TrainingError",
    "advice_code_for_bmi",
    "bmi_meters",
    "fit_models",
    "localize_trace",
    "run_study",
    "significance_test",
    "write_demo_workload",
]
