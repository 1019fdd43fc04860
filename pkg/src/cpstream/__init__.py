"""Streaming change-point detection toolkit.

Offline (retrospective) and sequential CUSUM tests with simulated critical
values, multi change-point segmentation, EMA/MACD direction labelling, an
integrated train-then-monitor loop, and a grid-network attack-detection
simulator built on the sequential detector.
"""

from .critvals import (
    CritVal,
    CritValKind,
    CritValRequest,
    CritValTable,
    MonteCarloProvider,
    TableProvider,
    build_table,
    compute_critval,
    offline_critval,
    online_critval_ratio,
    online_critval_standard,
    simulate_brownian_motion,
)
from .errors import (
    CpstreamError,
    CsvFormatError,
    DetectorStoppedError,
    InsufficientTrainingError,
    NotTabulatedError,
)
from .longrun import LongRunCov, autocov, bartlett_bandwidth, bartlett_lrv
from .monitor import Action, ChangeEvent, MonitorConfig, run_monitor, select_training
from .offline import ChangePointSet, OfflineTestResult, cusum_path, offline_test, segment
from .online import (
    DetectorKind,
    OnlineDetectorState,
    Verdict,
    boundary_weight,
    run_batch,
    run_window,
    step,
    train,
)
from .timeseries import SeriesSegment, TimeSeries, load_csv, sample_mean, save_csv
from .trend import (
    Direction,
    MacdParams,
    TrendMode,
    TrendVerdict,
    ema,
    macd,
    trend_interval,
    trend_point,
    trend_series,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # data model
    "TimeSeries",
    "SeriesSegment",
    "load_csv",
    "save_csv",
    "sample_mean",
    # long-run covariance
    "LongRunCov",
    "autocov",
    "bartlett_bandwidth",
    "bartlett_lrv",
    # critical values
    "CritValKind",
    "CritValRequest",
    "CritVal",
    "CritValTable",
    "MonteCarloProvider",
    "TableProvider",
    "simulate_brownian_motion",
    "compute_critval",
    "offline_critval",
    "online_critval_standard",
    "online_critval_ratio",
    "build_table",
    # offline detection
    "OfflineTestResult",
    "ChangePointSet",
    "cusum_path",
    "offline_test",
    "segment",
    # sequential detection
    "DetectorKind",
    "OnlineDetectorState",
    "Verdict",
    "boundary_weight",
    "train",
    "step",
    "run_window",
    "run_batch",
    # trend labelling
    "MacdParams",
    "Direction",
    "TrendMode",
    "TrendVerdict",
    "ema",
    "macd",
    "trend_series",
    "trend_point",
    "trend_interval",
    # monitoring loop
    "MonitorConfig",
    "ChangeEvent",
    "Action",
    "select_training",
    "run_monitor",
    # errors
    "CpstreamError",
    "CsvFormatError",
    "NotTabulatedError",
    "InsufficientTrainingError",
    "DetectorStoppedError",
]
