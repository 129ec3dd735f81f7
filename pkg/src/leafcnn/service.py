"""Single-endpoint prediction service.

``POST /predict`` with raw image bytes as the body returns a JSON
:class:`PredictionResponse`. Bodies over 10 MB are refused with 413;
empty or undecodable bodies get 400 and the server keeps running.
"""

import json
import logging
import threading
from dataclasses import dataclass
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .checkpoint import checkpoint_digest, load_checkpoint
from .datapipe import decode_image
from .errors import ImageLoadError
from .training import predict_labels

log = logging.getLogger(__name__)

MAX_BODY_BYTES = 10 * 1024 * 1024


@dataclass(frozen=True)
class PredictionResponse:
    label: str
    probabilities: dict
    model_id: str

    def to_json(self):
        return json.dumps(
            {"label": self.label, "probabilities": self.probabilities, "model_id": self.model_id},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(d["label"], d["probabilities"], d["model_id"])


class Predictor:
    """A loaded model plus its id; safe to share between threads."""

    def __init__(self, model, model_id):
        self.model = model
        self.model_id = model_id
        self._lock = threading.Lock()

    @classmethod
    def from_checkpoint(cls, path):
        return cls(load_checkpoint(path), checkpoint_digest(path))

    def predict_tensor(self, x):
        with self._lock:
            probs = self.model.forward(x[None])
            self.model.clear_caches()
        label = self.model.class_names[int(predict_labels(probs)[0])]
        values = {name: float(p) for name, p in zip(self.model.class_names, probs[0].astype(np.float64))}
        return PredictionResponse(label, values, self.model_id)

    def predict_bytes(self, data, source="<request>"):
        size = self.model.config.input_shape[0]
        return self.predict_tensor(decode_image(data, size=size, source=source))


class PredictHandler(BaseHTTPRequestHandler):
    server_version = "leafcnn"
    protocol_version = "HTTP/1.1"

    def _reply(self, status, payload):
        body = (payload if isinstance(payload, str) else json.dumps(payload)).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        self._reply(HTTPStatus.NOT_FOUND, {"error": "use POST /predict"})

    def do_POST(self):
        if self.path.rstrip("/") != "/predict":
            self.close_connection = True
            self._reply(HTTPStatus.NOT_FOUND, {"error": f"no endpoint {self.path}"})
            return
        try:
            length = int(self.headers.get("Content-Length", ""))
        except ValueError:
            self.close_connection = True
            self._reply(HTTPStatus.LENGTH_REQUIRED, {"error": "Content-Length required"})
            return
        if length > MAX_BODY_BYTES:
            self.close_connection = True
            self._reply(HTTPStatus.REQUEST_ENTITY_TOO_LARGE, {"error": f"body exceeds {MAX_BODY_BYTES} bytes"})
            return
        data = self.rfile.read(length) if length > 0 else b""
        if not data:
            self._reply(HTTPStatus.BAD_REQUEST, {"error": "empty body"})
            return
        try:
            response = self.server.predictor.predict_bytes(data)
        except ImageLoadError as exc:
            self._reply(HTTPStatus.BAD_REQUEST, {"error": str(exc)})
            return
        except Exception:
            log.exception("prediction failed")
            self._reply(HTTPStatus.INTERNAL_SERVER_ERROR, {"error": "internal error"})
            return
        self._reply(HTTPStatus.OK, response.to_json())

    def log_message(self, fmt, *args):
        log.info("%s %s", self.address_string(), fmt % args)


class PredictionServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, predictor):
        self.predictor = predictor
        super().__init__(address, PredictHandler)


def make_server(model_path, host="127.0.0.1", port=8000):
    """Load the model first, then bind; a busy port raises ``OSError``."""
    predictor = Predictor.from_checkpoint(model_path)
    return PredictionServer((host, port), predictor)
