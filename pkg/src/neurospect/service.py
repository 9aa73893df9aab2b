"""HTTP service backing the prediction dashboard.

Endpoints: GET /health, GET /model, POST /predict, GET /metrics/latest,
GET /dataset/summary, plus static dashboard files from a configurable
directory. All failures return structured JSON bodies {code, message,
details}. The served artifact is immutable; hot swap replaces the reference
atomically so in-flight requests finish against the old model.
"""

from __future__ import annotations

import json
import math
import signal
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from .dataset import SEX_VALUES, Demographics
from .montage import ELECTRODE_PAIRS, ELECTRODES, N_ELECTRODES
from .pipeline import ModelArtifact, load_artifact

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".png": "image/png",
    ".svg": "image/svg+xml",
    ".ico": "image/x-icon",
    ".map": "application/json",
}


class ServiceState:
    """Shared server state; the artifact reference swaps atomically."""

    def __init__(self, model_path=None, metrics_path=None, summary_path=None,
                 static_dir=None):
        self.model_path = Path(model_path) if model_path else None
        self.metrics_path = Path(metrics_path) if metrics_path else None
        self.summary_path = Path(summary_path) if summary_path else None
        self.static_dir = Path(static_dir) if static_dir else None
        self.artifact: ModelArtifact | None = None
        if self.model_path is not None:
            self.artifact = load_artifact(self.model_path)

    def reload_model(self) -> None:
        if self.model_path is not None:
            self.artifact = load_artifact(self.model_path)


class PredictError(Exception):
    def __init__(self, status: int, code: str, message: str, details=None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.details = details or {}


def _validate_demographics(doc) -> Demographics:
    if not isinstance(doc, dict):
        raise PredictError(400, "bad_request", "demographics must be an object")
    out = {}
    for key in ("age", "education", "iq"):
        value = doc.get(key)
        if value is None:
            out[key] = None
            continue
        if not isinstance(value, (int, float)) or not math.isfinite(value):
            raise PredictError(400, "non_finite_value", f"demographic {key!r} must be a finite number")
        out[key] = float(value)
    sex = doc.get("sex")
    if sex is not None:
        if not isinstance(sex, str) or sex.lower() not in SEX_VALUES:
            raise PredictError(400, "bad_request", f"sex must be one of {list(SEX_VALUES)}")
        sex = sex.lower()
    try:
        return Demographics(age=out["age"], sex=sex, education=out["education"], iq=out["iq"])
    except ValueError as exc:
        raise PredictError(400, "bad_request", str(exc)) from None


def _features_from_map(features: dict, artifact: ModelArtifact):
    schema = artifact.schema()
    n_bands = schema.n_bands
    psd = np.empty((n_bands, N_ELECTRODES))
    missing = []
    for b, band in enumerate(schema.bands):
        for e, elec in enumerate(ELECTRODES):
            name = f"psd.{band.name}.{elec}"
            if name not in features:
                missing.append(name)
            else:
                psd[b, e] = features[name]
    if missing:
        raise PredictError(
            400, "missing_features",
            f"{len(missing)} required PSD feature(s) missing",
            {"missing": missing[:20], "missing_count": len(missing)},
        )
    coherence = None
    ablated = True
    if schema.include_coherence and artifact.include_coherence:
        coh_names = [
            f"coh.{band.name}.{ELECTRODES[i]}.{ELECTRODES[j]}"
            for band in schema.bands for i, j in ELECTRODE_PAIRS
        ]
        present = [n for n in coh_names if n in features]
        if len(present) == len(coh_names):
            coherence = np.array([features[n] for n in coh_names]).reshape(n_bands, len(ELECTRODE_PAIRS))
            ablated = False
        elif present:
            missing_coh = [n for n in coh_names if n not in features]
            raise PredictError(
                400, "missing_features",
                "coherence features must be supplied completely or not at all",
                {"missing": missing_coh[:20], "missing_count": len(missing_coh)},
            )
    return psd, coherence, ablated


def _features_from_vector(doc, artifact: ModelArtifact):
    schema = artifact.schema()
    declared = doc.get("schema_fingerprint")
    if declared != artifact.schema_fingerprint:
        raise PredictError(
            400, "schema_mismatch",
            "vector requests must declare the model's schema fingerprint",
            {"expected": artifact.schema_fingerprint, "got": declared},
        )
    vector = doc.get("vector")
    if not isinstance(vector, list) or len(vector) != schema.n_features:
        raise PredictError(
            400, "bad_request",
            f"vector must list all {schema.n_features} features in canonical order",
        )
    values = np.asarray(vector, dtype=np.float64)
    n_bands = schema.n_bands
    psd = np.empty((n_bands, N_ELECTRODES))
    psd[schema.psd_band, schema.psd_elec] = values[schema.psd_positions]
    coherence = None
    ablated = True
    if schema.include_coherence and artifact.include_coherence:
        coherence = np.empty((n_bands, len(ELECTRODE_PAIRS)))
        coherence[schema.coh_band, schema.coh_pair] = values[schema.coh_positions]
        ablated = False
    return psd, coherence, ablated


def predict_once(artifact: ModelArtifact, doc: dict) -> dict:
    """Run one prediction request against a loaded artifact."""
    demographics = _validate_demographics(doc.get("demographics", {}))
    if "vector" in doc:
        psd, coherence, ablated = _features_from_vector(doc, artifact)
    else:
        features = doc.get("features")
        if not isinstance(features, dict):
            raise PredictError(400, "bad_request", "request needs a 'features' map or a 'vector'")
        bad = [n for n, v in features.items()
               if not isinstance(v, (int, float)) or not math.isfinite(v)]
        if bad:
            raise PredictError(400, "non_finite_value",
                               "feature values must be finite numbers",
                               {"features": bad[:20]})
        psd, coherence, ablated = _features_from_map(features, artifact)
    if not np.isfinite(psd).all() or (coherence is not None and not np.isfinite(coherence).all()):
        raise PredictError(400, "non_finite_value", "feature values must be finite numbers")

    scaler = artifact.scaler
    n_bands = psd.shape[0]
    grid = np.zeros((n_bands, N_ELECTRODES, N_ELECTRODES), dtype=np.float32)
    diag = np.arange(N_ELECTRODES)
    grid[:, diag, diag] = scaler.scale_psd(psd)
    if coherence is not None:
        i_idx = np.array([i for i, _ in ELECTRODE_PAIRS])
        j_idx = np.array([j for _, j in ELECTRODE_PAIRS])
        grid[:, i_idx, j_idx] = coherence
        grid[:, j_idx, i_idx] = coherence
    aux = scaler.scale_demographics(demographics).astype(np.float32)[None, :]
    probs = artifact.predict_proba(grid[None], aux)[0]
    top = int(probs.argmax())
    return {
        "label": artifact.labels[top],
        "probabilities": {lab: float(p) for lab, p in zip(artifact.labels, probs)},
        "model_version": artifact.version,
        "schema_fingerprint": artifact.schema_fingerprint,
        "coherence_ablated": bool(ablated),
    }


def build_handler(state: ServiceState):
    class Handler(BaseHTTPRequestHandler):
        server_version = "neurospect"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        # -- helpers -------------------------------------------------------

        def _send(self, status: int, body: bytes, content_type="application/json"):
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _send_json(self, status: int, doc) -> None:
            self._send(status, json.dumps(doc).encode("utf-8"))

        def _send_error_doc(self, status: int, code: str, message: str, details=None):
            self._send_json(status, {"code": code, "message": message,
                                     "details": details or {}})

        def _send_file(self, path: Path) -> None:
            body = path.read_bytes()
            ctype = _CONTENT_TYPES.get(path.suffix.lower(), "application/octet-stream")
            self._send(200, body, ctype)

        # -- routes --------------------------------------------------------

        def do_GET(self):
            route = self.path.split("?", 1)[0]
            if route == "/health":
                self._send_json(200, {"status": "ok",
                                      "model_loaded": state.artifact is not None})
            elif route == "/model":
                art = state.artifact
                if art is None:
                    self._send_error_doc(503, "no_model", "no model loaded")
                    return
                self._send_json(200, {
                    "model_version": art.version,
                    "created": art.created,
                    "schema_fingerprint": art.schema_fingerprint,
                    "mode": art.mode,
                    "include_coherence": art.include_coherence,
                    "labels": list(art.labels),
                    "bands": [list(b) for b in art.bands],
                    "electrodes": list(art.electrodes),
                })
            elif route == "/metrics/latest":
                self._serve_report(state.metrics_path, "no evaluation report available")
            elif route == "/dataset/summary":
                self._serve_report(state.summary_path, "no dataset summary available")
            else:
                self._serve_static(route)

        def _serve_report(self, path, message):
            if path is None or not Path(path).exists():
                self._send_error_doc(404, "not_found", message)
                return
            self._send(200, Path(path).read_bytes())

        def _serve_static(self, route: str):
            if state.static_dir is None:
                self._send_error_doc(404, "not_found", f"no route {route!r}")
                return
            rel = route.lstrip("/") or "index.html"
            target = (state.static_dir / rel).resolve()
            root = state.static_dir.resolve()
            if root not in target.parents and target != root:
                self._send_error_doc(404, "not_found", "path outside static root")
                return
            if target.is_dir():
                target = target / "index.html"
            if not target.is_file():
                self._send_error_doc(404, "not_found", f"no static file {rel!r}")
                return
            self._send_file(target)

        def do_POST(self):
            route = self.path.split("?", 1)[0]
            if route != "/predict":
                self._send_error_doc(404, "not_found", f"no route {route!r}")
                return
            artifact = state.artifact
            if artifact is None:
                self._send_error_doc(503, "no_model", "no model loaded")
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                raw = self.rfile.read(length)
                doc = json.loads(raw.decode("utf-8"))
                if not isinstance(doc, dict):
                    raise ValueError("request body must be a JSON object")
            except (ValueError, UnicodeDecodeError) as exc:
                self._send_error_doc(400, "bad_json", f"cannot parse request body: {exc}")
                return
            try:
                self._send_json(200, predict_once(artifact, doc))
            except PredictError as exc:
                self._send_error_doc(exc.status, exc.code, str(exc), exc.details)
            except Exception as exc:  # defensive: never a free-text 500
                self._send_error_doc(500, "internal_error", str(exc))

    return Handler


def make_server(state: ServiceState, host: str = "127.0.0.1", port: int = 8321,
                enable_reload: bool = False) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer((host, port), build_handler(state))
    if enable_reload:
        signal.signal(signal.SIGHUP, lambda *_: state.reload_model())
    return server
