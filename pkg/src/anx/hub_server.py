"""HTTP surface for the Hub: marketplace, token authority, step routing."""

from __future__ import annotations

import os
from typing import Any

from fastapi import Body, FastAPI, Query, Request
from fastapi.responses import JSONResponse

from .errors import AnxError
from .hub import Hub
from .server import add_cors, error_response


def create_hub_app(hub: Hub) -> FastAPI:
    app = FastAPI(title="anx-hub", docs_url=None, redoc_url=None)
    add_cors(app)

    @app.exception_handler(AnxError)
    async def _anx_error(_request: Request, exc: AnxError) -> JSONResponse:
        return error_response(exc)

    @app.get("/healthz")
    def healthz() -> dict[str, str]:
        return {"status": "ok"}

    @app.post("/publish")
    def publish(body: dict[str, Any] = Body(...)) -> dict[str, str]:
        app_id = hub.publish(body.get("manifest", body))
        return {"app_id": app_id}

    @app.get("/discover")
    def discover(q: str = Query(""), k: int = Query(5, ge=1)) -> dict[str, Any]:
        return hub.discover(q, k).to_dict()

    @app.get("/manifest/{app_id}")
    def manifest(app_id: str) -> dict[str, Any]:
        return hub.get_manifest(app_id).to_dict()

    @app.post("/ui/token")
    def ui_token(body: dict[str, Any] = Body(...)) -> dict[str, Any]:
        token = hub.issue_user_token(str(body.get("session_id", "anonymous")), "human_ui")
        return token.to_dict()

    @app.post("/verify")
    def verify(body: dict[str, Any] = Body(...)) -> dict[str, Any]:
        return hub.verify_user_token(str(body.get("token", "")))

    @app.post("/runs")
    def register_run(body: dict[str, Any] = Body(...)) -> dict[str, Any]:
        run_id = str(body.get("run_id", ""))
        hub.register_run(run_id, [str(s) for s in body.get("steps", [])])
        return {"run_id": run_id}

    @app.post("/runs/{run_id}/steps/{step_uuid}/assignment")
    def assign(run_id: str, step_uuid: str, body: dict[str, Any] = Body(...)) -> dict[str, Any]:
        agent_id = str(body.get("agent_id", ""))
        status = body.get("status")
        if status in (None, "assigned"):
            return hub.assign_step(run_id, step_uuid, agent_id).to_dict()
        return hub.report_step(run_id, step_uuid, agent_id, str(status)).to_dict()

    @app.get("/runs/{run_id}/steps/{step_uuid}/assignment")
    def get_assignment(run_id: str, step_uuid: str) -> dict[str, Any]:
        assignment = hub.get_assignment(run_id, step_uuid)
        if assignment is None:
            return {"assigned": False}
        return {"assigned": True, **assignment.to_dict()}

    return app


def main() -> int:
    import uvicorn

    listen = os.environ.get("ANX_HUB_LISTEN", "127.0.0.1:7891")
    host, _, port = listen.partition(":")
    data_dir = os.environ.get("ANX_HUB_DATA_DIR") or None
    hub = Hub(data_dir=data_dir)
    app = create_hub_app(hub)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 7891), log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
