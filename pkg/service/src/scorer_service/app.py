"""FastAPI app exposing the wire protocol.

Endpoints:
    POST /score     -> {"scores": [...]}; arity equals the request passages
    POST /generate  -> {"text": ..., "mean_logprob": number|null}
    GET  /health    -> model identifiers

Status codes: 200 success only; 400 malformed request; 413 batch over
max_batch; 500 backend failure. Stateless across requests.
"""

import argparse
import os
from dataclasses import dataclass

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .backends import load_generate_backend, load_score_backend

DEFAULT_SCORE_MODEL = "builtin:overlap"
DEFAULT_GENERATE_MODEL = "builtin:extractive"


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8400
    score_model: str = DEFAULT_SCORE_MODEL
    generate_model: str = DEFAULT_GENERATE_MODEL
    max_batch: int = 64
    device: str = "cpu"


class ScoreRequest(BaseModel):
    query: str
    passages: list[str] = Field(min_length=1)
    model: str | None = None


class GenerateRequest(BaseModel):
    prompt: str
    max_new_tokens: int = Field(ge=1)
    temperature: float = Field(ge=0.0)
    model: str | None = None


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    # Backends load eagerly: a service with an unloadable model must not start.
    scorer = load_score_backend(config.score_model, device=config.device)
    generator = load_generate_backend(config.generate_model, device=config.device)

    app = FastAPI(title="scorer-service")

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": "malformed request", "detail": exc.errors()})

    @app.post("/score")
    def score(req: ScoreRequest):
        if len(req.passages) > config.max_batch:
            return JSONResponse(
                status_code=413,
                content={"error": f"batch of {len(req.passages)} exceeds max_batch={config.max_batch}"})
        try:
            scores = scorer.score(req.query, req.passages)
        except Exception as exc:  # noqa: BLE001 - surfaced as a 500 by contract
            return JSONResponse(status_code=500, content={"error": f"score backend failed: {exc}"})
        return {"scores": scores}

    @app.post("/generate")
    def generate(req: GenerateRequest):
        try:
            text, mean_logprob = generator.generate(req.prompt, req.max_new_tokens, req.temperature)
        except Exception as exc:  # noqa: BLE001
            return JSONResponse(status_code=500, content={"error": f"generate backend failed: {exc}"})
        return {"text": text, "mean_logprob": mean_logprob}

    @app.get("/health")
    def health():
        return {"score_model": scorer.model_id, "generate_model": generator.model_id}

    return app


def main(argv=None) -> int:
    import uvicorn

    parser = argparse.ArgumentParser(prog="scorer-service", description=__doc__)
    parser.add_argument("--host", default=os.environ.get("SCORER_HOST", "127.0.0.1"))
    parser.add_argument("--port", type=int, default=int(os.environ.get("SCORER_PORT", "8400")))
    parser.add_argument("--score-model", default=os.environ.get("SCORER_SCORE_MODEL", DEFAULT_SCORE_MODEL))
    parser.add_argument("--generate-model",
                        default=os.environ.get("SCORER_GENERATE_MODEL", DEFAULT_GENERATE_MODEL))
    parser.add_argument("--max-batch", type=int, default=64)
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args(argv)
    config = ServiceConfig(host=args.host, port=args.port, score_model=args.score_model,
                           generate_model=args.generate_model, max_batch=args.max_batch,
                           device=args.device)
    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
