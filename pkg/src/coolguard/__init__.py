"""coolguard: leak forecasting and detection for liquid-cooled GPU racks."""

__version__ = "0.1.0"

from .model import (
    AlertKind,
    AlertRecord,
    DetectionResult,
    ForecastResult,
    LeakEvent,
    SensorReading,
    SteadyState,
)

__all__ = [
    "__version__",
    "AlertKind",
    "AlertRecord",
    "DetectionResult",
    "ForecastResult",
    "LeakEvent",
    "SensorReading",
    "SteadyState",
]
