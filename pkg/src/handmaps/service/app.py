"""FastAPI application exposing synthesis, loss, schedule and PCK endpoints.

Dense tensors are served either base64-wrapped in JSON (POST /synthesize)
or as raw binary bodies (POST /synthesize/tensor) in the package's tensor
format, which training-side clients can map straight into typed arrays.
"""

from __future__ import annotations

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, Response

from .. import __version__
from . import handlers, models


def create_app() -> FastAPI:
    app = FastAPI(
        title="handmaps service",
        description="Hand-structure ground-truth synthesis and PCK evaluation over HTTP.",
        version=__version__,
    )

    @app.exception_handler(ValueError)
    async def value_error_handler(request: Request, err: ValueError):
        return JSONResponse(status_code=400, content={"detail": str(err)})

    @app.get("/health", response_model=models.HealthResponse)
    def health():
        return models.HealthResponse(status="ok", version=__version__)

    @app.get("/topology", response_model=models.TopologyResponse)
    def topology():
        return handlers.topology_info()

    @app.post("/synthesize", response_model=models.SynthesisResponse)
    def synthesize(request: models.SynthesisRequest):
        return handlers.synthesize(request)

    @app.post("/synthesize/tensor")
    def synthesize_tensor(
        request: models.SynthesisRequest,
        kind: str = Query(default="structure"),
    ):
        blob = handlers.synthesize_tensor(request, kind)
        return Response(content=blob, media_type="application/octet-stream")

    @app.post("/evaluate/pck", response_model=models.PckResponse)
    def evaluate_pck(request: models.PckRequest):
        return handlers.compute_pck(request)

    @app.post("/evaluate/improvement", response_model=models.ImprovementResponse)
    def evaluate_improvement(request: models.ImprovementRequest):
        return handlers.compute_improvement(request)

    @app.post("/decode", response_model=models.DecodeResponse)
    def decode(request: models.DecodeRequest):
        return handlers.decode(request)

    @app.post("/loss/structure", response_model=models.ValueResponse)
    def loss_structure(request: models.StackLossRequest):
        return handlers.structure_loss_value(request)

    @app.post("/loss/pose", response_model=models.ValueResponse)
    def loss_pose(request: models.StackLossRequest):
        return handlers.pose_loss_value(request)

    @app.post("/loss/total", response_model=models.ValueResponse)
    def loss_total(request: models.TotalLossRequest):
        return handlers.combined_loss(request)

    @app.post("/loss/weights", response_model=models.WeightsModel)
    def loss_weights(request: models.WeightsRequest):
        return handlers.published_weights(request)

    @app.post("/schedule", response_model=models.ScheduleResponse)
    def schedule(request: models.ScheduleRequest):
        return handlers.schedule(request)

    return app


app = create_app()
