"""HTTP scoring service.

Single-process FastAPI app exposing the protocol the generation toolkit
speaks over the wire:

* ``GET /health`` — liveness plus which models are loaded;
* ``POST /v1/score`` — ``{"triples": [{event, relation, tail}, ...]}`` to
  ``{"scores": [p, ...]}``, one acceptance probability per triple;
* ``POST /v1/nll`` — ``{"texts": [...]}`` to ``{"results": [{"total_nll",
  "n_tokens"}, ...]}`` with totals in nats.

Malformed bodies get 400; requests needing a model that is not loaded get
503. Inference runs under a lock so concurrent requests are serialized per
process and scoring stays deterministic.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from kgservice.data import EVAL_NAMES, render_triple, substitute_names
from kgservice.models import critic_probabilities, lm_total_nll, load_critic, load_lm

DEFAULT_MAX_BATCH = 256


class RequestError(ValueError):
    """Client error in a request body; maps to HTTP 400."""


def _parse_body(raw: bytes) -> dict:
    try:
        body = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise RequestError(f"request body is not valid JSON: {exc.msg}") from exc
    if not isinstance(body, dict):
        raise RequestError("request body must be a JSON object")
    return body


def _parse_triples(body: dict, max_batch: int) -> list[tuple[str, str, str]]:
    triples = body.get("triples")
    if not isinstance(triples, list):
        raise RequestError('request must carry a "triples" list')
    if len(triples) > max_batch:
        raise RequestError(f"batch too large: {len(triples)} triples (limit {max_batch})")
    parsed = []
    for index, item in enumerate(triples):
        if not isinstance(item, dict):
            raise RequestError(f"triples[{index}] must be an object")
        fields = []
        for key in ("event", "relation", "tail"):
            value = item.get(key)
            if not isinstance(value, str) or not value.strip():
                raise RequestError(
                    f"triples[{index}].{key} must be a non-empty string"
                )
            fields.append(value)
        parsed.append((fields[0], fields[1], fields[2]))
    return parsed


def _parse_texts(body: dict, max_batch: int) -> list[str]:
    texts = body.get("texts")
    if not isinstance(texts, list):
        raise RequestError('request must carry a "texts" list')
    if len(texts) > max_batch:
        raise RequestError(f"batch too large: {len(texts)} texts (limit {max_batch})")
    for index, text in enumerate(texts):
        if not isinstance(text, str):
            raise RequestError(f"texts[{index}] must be a string")
        if not text.strip():
            raise RequestError(f"texts[{index}] is empty; texts must be non-empty")
    return texts


def create_app(
    critic_dir: str | Path | None = None,
    lm_dir: str | Path | None = None,
    *,
    max_batch: int = DEFAULT_MAX_BATCH,
) -> FastAPI:
    """Build the app, eagerly loading whichever models are configured."""

    app = FastAPI(title="kgservice", docs_url=None, redoc_url=None)
    state = app.state
    state.inference_lock = threading.Lock()
    state.max_batch = max_batch

    state.critic = None
    state.critic_tokenizer = None
    state.critic_substitution = True
    if critic_dir is not None:
        model, tokenizer = load_critic(critic_dir)
        state.critic = model
        state.critic_tokenizer = tokenizer
        config = json.loads((Path(critic_dir) / "config.json").read_text(encoding="utf-8"))
        state.critic_substitution = bool(
            config.get("training", {}).get("name_substitution", True)
        )

    state.lm = None
    state.lm_tokenizer = None
    if lm_dir is not None:
        model, tokenizer, _config = load_lm(lm_dir)
        state.lm = model
        state.lm_tokenizer = tokenizer

    def _error(status: int, message: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={"detail": message})

    @app.get("/health")
    def health() -> dict:
        return {
            "status": "ok",
            "critic_loaded": state.critic is not None,
            "lm_loaded": state.lm is not None,
        }

    @app.post("/v1/score")
    async def score(request: Request):
        if state.critic is None:
            return _error(503, "critic model is not loaded")
        try:
            body = _parse_body(await request.body())
            triples = _parse_triples(body, state.max_batch)
        except RequestError as exc:
            return _error(400, str(exc))
        texts = [render_triple(event, relation, tail) for event, relation, tail in triples]
        if state.critic_substitution:
            texts = [substitute_names(text, EVAL_NAMES) for text in texts]
        with state.inference_lock:
            scores = critic_probabilities(state.critic, state.critic_tokenizer, texts)
        return {"scores": scores}

    @app.post("/v1/nll")
    async def nll(request: Request):
        if state.lm is None:
            return _error(503, "language model is not loaded")
        try:
            body = _parse_body(await request.body())
            texts = _parse_texts(body, state.max_batch)
        except RequestError as exc:
            return _error(400, str(exc))
        results = []
        with state.inference_lock:
            for text in texts:
                total, n_tokens = lm_total_nll(state.lm, state.lm_tokenizer, text)
                results.append({"total_nll": total, "n_tokens": n_tokens})
        return {"results": results}

    return app
