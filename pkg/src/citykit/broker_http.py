"""HTTP facade for the context broker, plus a small client for it.

Routes:
  POST   /v2/entities                  upsert (body: entity document)
  GET    /v2/entities?type=&idPattern=&q=   query; `q` is `name<op>literal;...`
  GET    /v2/entities/{id}             fetch one entity
  PATCH  /v2/entities/{id}/attrs       partial update (body: attribute map)
  POST   /v2/subscriptions             subscribe (target is a callback URL)
  DELETE /v2/subscriptions/{id}        unsubscribe

Error mapping: invalid input and malformed filters are 400, unknown ids are
404. Notifications go out as POSTs of the notification document to the
subscription's callback URL.
"""

import logging
from typing import Optional
from urllib.parse import quote, unquote, urlencode

from citykit.broker import (
    BrokerError,
    ContextBroker,
    InvalidEntity,
    MalformedPattern,
    MalformedSubscription,
    NotFound,
    TypeMismatch,
    parse_q,
)
from citykit.httpd import HttpError, JsonHttpServer, request_json
from citykit.ngsi import Attribute, NgsiEntity, NgsiError

logger = logging.getLogger(__name__)


def _error_status(exc: BrokerError) -> int:
    if isinstance(exc, NotFound):
        return 404
    if isinstance(exc, (InvalidEntity, MalformedPattern, TypeMismatch,
                        MalformedSubscription)):
        return 400
    return 500


class BrokerServer:
    """Binds a ContextBroker to the /v2 routes on a loopback HTTP server."""

    def __init__(self, broker: Optional[ContextBroker] = None,
                 host: str = "127.0.0.1", port: int = 0):
        self.broker = broker or ContextBroker()
        self.server = JsonHttpServer(host=host, port=port)
        s = self.server
        s.add_route("POST", r"/v2/entities", self._upsert)
        s.add_route("GET", r"/v2/entities", self._query)
        s.add_route("GET", r"/v2/entities/(?P<id>[^/]+)", self._get)
        s.add_route("PATCH", r"/v2/entities/(?P<id>[^/]+)/attrs", self._patch)
        s.add_route("POST", r"/v2/subscriptions", self._subscribe)
        s.add_route("DELETE", r"/v2/subscriptions/(?P<id>[^/]+)", self._unsubscribe)

    def start(self) -> str:
        self.server.start()
        return self.url

    def stop(self) -> None:
        self.server.stop()
        self.broker.close()

    @property
    def url(self) -> str:
        return self.server.url()

    # -- handlers ----------------------------------------------------------

    def _upsert(self, match, params, body):
        try:
            entity = NgsiEntity.from_wire(body)
            outcome = self.broker.upsert_entity(entity)
        except (NgsiError, BrokerError) as exc:
            return self._fail(exc)
        return (201 if outcome == "created" else 200), {"result": outcome}

    def _query(self, match, params, body):
        try:
            attr_filter = parse_q(params["q"]) if "q" in params else None
            entities = self.broker.query_entities(
                typeFilter=params.get("type"),
                idPattern=params.get("idPattern"),
                attrFilter=attr_filter,
            )
        except BrokerError as exc:
            return self._fail(exc)
        return 200, [e.to_wire() for e in entities]

    def _get(self, match, params, body):
        try:
            entity = self.broker.get_entity(unquote(match.group("id")))
        except BrokerError as exc:
            return self._fail(exc)
        return 200, entity.to_wire()

    def _patch(self, match, params, body):
        if not isinstance(body, dict):
            return 400, {"error": "invalid-entity", "detail": "body must be an attribute map"}
        try:
            patch = {name: Attribute.from_wire(doc) for name, doc in body.items()}
            entity = self.broker.update_attributes(unquote(match.group("id")), patch)
        except (NgsiError, BrokerError) as exc:
            return self._fail(exc)
        return 200, entity.to_wire()

    def _subscribe(self, match, params, body):
        if not isinstance(body, dict):
            return 400, {"error": "malformed-subscription", "detail": "body must be an object"}
        try:
            sub_id = self.broker.subscribe(body)
        except BrokerError as exc:
            return self._fail(exc)
        return 201, {"id": sub_id}

    def _unsubscribe(self, match, params, body):
        try:
            self.broker.unsubscribe(unquote(match.group("id")))
        except BrokerError as exc:
            return self._fail(exc)
        return 200, {"removed": True}

    @staticmethod
    def _fail(exc):
        if isinstance(exc, NgsiError):
            return 400, {"error": "invalid-entity", "detail": str(exc)}
        kind = type(exc).__name__
        slug = "".join("-" + c.lower() if c.isupper() else c for c in kind).lstrip("-")
        return _error_status(exc), {"error": slug, "detail": str(exc)}


class BrokerClient:
    """Convenience wrapper for talking to a BrokerServer."""

    def __init__(self, base_url: str, timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def upsert(self, entity) -> str:
        doc = entity.to_wire() if isinstance(entity, NgsiEntity) else entity
        _, payload = request_json("POST", f"{self.base_url}/v2/entities", body=doc,
                                  timeout=self.timeout)
        return payload["result"]

    def get(self, entity_id: str) -> NgsiEntity:
        _, payload = request_json(
            "GET", f"{self.base_url}/v2/entities/{quote(entity_id, safe='')}",
            timeout=self.timeout,
        )
        return NgsiEntity.from_wire(payload)

    def query(self, entity_type: Optional[str] = None,
              id_pattern: Optional[str] = None,
              q: Optional[str] = None) -> list[NgsiEntity]:
        params = {}
        if entity_type is not None:
            params["type"] = entity_type
        if id_pattern is not None:
            params["idPattern"] = id_pattern
        if q is not None:
            params["q"] = q
        url = f"{self.base_url}/v2/entities"
        if params:
            url += "?" + urlencode(params)
        _, payload = request_json("GET", url, timeout=self.timeout)
        return [NgsiEntity.from_wire(doc) for doc in payload]

    def patch(self, entity_id: str, attrs: dict) -> NgsiEntity:
        doc = {
            name: (a.to_wire() if isinstance(a, Attribute) else a)
            for name, a in attrs.items()
        }
        _, payload = request_json(
            "PATCH",
            f"{self.base_url}/v2/entities/{quote(entity_id, safe='')}/attrs",
            body=doc, timeout=self.timeout,
        )
        return NgsiEntity.from_wire(payload)

    def subscribe(self, doc: dict) -> str:
        _, payload = request_json("POST", f"{self.base_url}/v2/subscriptions",
                                  body=doc, timeout=self.timeout)
        return payload["id"]

    def unsubscribe(self, sub_id: str) -> bool:
        try:
            request_json("DELETE", f"{self.base_url}/v2/subscriptions/{sub_id}",
                         timeout=self.timeout)
        except HttpError as exc:
            if exc.status == 404:
                return False
            raise
        return True
