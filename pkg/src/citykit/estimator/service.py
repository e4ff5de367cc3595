"""Estimator service assembly: profiles, write-back, config file, HTTP API.

One codebase serves parking, traffic, and noise; the profile only changes
which entity type and attribute are ingested and predicted:

  parking  ->  OnStreetParking.availableSpotNumber
  traffic  ->  TrafficFlowObserved.intensity
  noise    ->  NoiseLevelObserved.LAeq

Predictions write back to the source entity as ``<attribute>Forecast`` with
the horizon recorded in metadata; a vanished entity is logged and the local
store still keeps the prediction.
"""

import logging
from pathlib import Path
from typing import Optional
from urllib.parse import unquote

from citykit.broker import NotFound
from citykit.clock import Clock, SystemClock
from citykit.estimator.ingest import (
    IngestStats,
    ingest_historical,
    ingest_snapshot,
    ingest_subscription,
)
from citykit.estimator.models import EstimatorError, Prediction, TrainingConfig
from citykit.estimator.scheduler import EstimatorScheduler
from citykit.estimator.store import TimeSeriesStore
from citykit.httpd import HttpError, JsonHttpServer
from citykit.ngsi import Attribute

logger = logging.getLogger(__name__)

PROFILES = {
    "parking": ("OnStreetParking", "availableSpotNumber"),
    "traffic": ("TrafficFlowObserved", "intensity"),
    "noise": ("NoiseLevelObserved", "LAeq"),
}


def writeback(prediction: Prediction, broker) -> bool:
    """Attach the forecast to the source entity; False when it is gone."""
    name = prediction.attributeName + "Forecast"
    attr = Attribute(
        value=prediction.value,
        valueType="Number",
        metadata={
            "horizonStart": prediction.horizonStart,
            "horizonEnd": prediction.horizonEnd,
            "issuedAt": prediction.issuedAt,
        },
    )
    try:
        if hasattr(broker, "update_attributes"):
            broker.update_attributes(prediction.entityId, {name: attr})
        else:
            broker.patch(prediction.entityId, {name: attr})
    except NotFound:
        logger.warning("writeback target %s is gone", prediction.entityId)
        return False
    except HttpError as exc:
        if exc.status == 404:
            logger.warning("writeback target %s is gone", prediction.entityId)
            return False
        raise
    return True


_CONFIG_INTS = {"lags", "period", "windowSize", "minSamples",
                "retrainPeriodSeconds", "inferencePeriodSeconds", "horizonSeconds"}
_CONFIG_FLOATS = {"ridgeLambda", "trainTestRatio"}


def parse_config_text(text: str) -> dict:
    """`key = value` lines; # starts a comment; typed fields are converted."""
    settings: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise EstimatorError("invalid-config", f"line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in _CONFIG_INTS:
            settings[key] = int(value)
        elif key in _CONFIG_FLOATS:
            settings[key] = float(value)
        else:
            settings[key] = value
    return settings


def load_config_file(path) -> tuple[TrainingConfig, dict]:
    """Returns (TrainingConfig, leftover settings like profile/broker/writeback)."""
    settings = parse_config_text(Path(path).read_text(encoding="utf-8"))
    field_names = set(TrainingConfig.__dataclass_fields__)
    config_kwargs = {k: v for k, v in settings.items() if k in field_names}
    leftovers = {k: v for k, v in settings.items() if k not in field_names}
    return TrainingConfig(**config_kwargs), leftovers


class EstimatorService:
    """Store + scheduler + ingestion for one profile, optionally writing back."""

    def __init__(self, profile: str, config: Optional[TrainingConfig] = None,
                 broker=None, clock: Optional[Clock] = None,
                 write_back: bool = False):
        if profile not in PROFILES:
            raise EstimatorError("invalid-config",
                                 f"unknown profile {profile!r}; pick from {sorted(PROFILES)}")
        self.profile = profile
        self.entityType, self.attribute = PROFILES[profile]
        self.config = config or TrainingConfig()
        self.broker = broker
        self.clock = clock or SystemClock()
        self.store = TimeSeriesStore()
        self.ingest_stats = IngestStats()
        hook = None
        if write_back:
            if broker is None:
                raise EstimatorError("invalid-config", "write_back needs a broker")
            hook = lambda p: writeback(p, broker)
        self.scheduler = EstimatorScheduler(self.store, self.config,
                                            clock=self.clock, on_prediction=hook)

    @property
    def mapping(self) -> dict:
        return {self.entityType: self.attribute}

    def snapshot(self) -> IngestStats:
        return ingest_snapshot(self.store, self.broker, self.mapping, self.clock)

    def subscribe(self) -> list[str]:
        return ingest_subscription(self.store, self.broker, self.mapping,
                                   self.clock, self.ingest_stats)

    def historical(self, source) -> IngestStats:
        return ingest_historical(self.store, source)

    def start(self, now: Optional[float] = None) -> None:
        self.scheduler.start(now)


class EstimatorServer:
    """HTTP face of the estimator.

    GET /series/{entityId}/{attr}?from=&to= lists stored samples (404 for a
    series never ingested); POST /predict/{entityId}/{attr} runs on-demand
    inference (409 until a model exists); GET /models lists model metadata.
    """

    def __init__(self, service: EstimatorService, host: str = "127.0.0.1",
                 port: int = 0):
        self.service = service
        self.server = JsonHttpServer(host=host, port=port)
        self.server.add_route("GET", r"/series/(?P<id>[^/]+)/(?P<attr>[^/]+)",
                              self._series)
        self.server.add_route("POST", r"/predict/(?P<id>[^/]+)/(?P<attr>[^/]+)",
                              self._predict)
        self.server.add_route("GET", r"/models", self._models)

    def start(self) -> str:
        self.server.start()
        return self.server.url()

    def stop(self) -> None:
        self.server.stop()

    def _series(self, match, params, body):
        entity_id = unquote(match.group("id"))
        attribute = unquote(match.group("attr"))
        store = self.service.store
        if (entity_id, attribute) not in store.keys():
            return 404, {"error": "unknown-series",
                         "detail": f"{entity_id}/{attribute} never ingested"}
        t_from = float(params["from"]) if "from" in params else None
        t_to = float(params["to"]) if "to" in params else None
        samples = store.get(entity_id, attribute, t_from, t_to)
        return 200, [{"t": s.t, "value": s.value} for s in samples]

    def _predict(self, match, params, body):
        entity_id = unquote(match.group("id"))
        attribute = unquote(match.group("attr"))
        store = self.service.store
        if (entity_id, attribute) not in store.keys():
            return 404, {"error": "unknown-series",
                         "detail": f"{entity_id}/{attribute} never ingested"}
        try:
            prediction = self.service.scheduler.predict_now(entity_id, attribute)
        except EstimatorError as exc:
            if exc.kind == "model-not-trained":
                return 409, {"error": "model-not-trained", "detail": str(exc)}
            return 400, {"error": exc.kind, "detail": str(exc)}
        return 200, prediction.to_doc()

    def _models(self, match, params, body):
        models = self.service.scheduler.models
        return 200, [models[k].to_doc() for k in sorted(models)]
