"""HTTP surface for Core: ``/agent/*`` and ``/ui/*`` prefixes.

The two prefixes ARE the channel separation: vault ingress, confirmation,
cancellation, node writes, and workflow-gate resolution exist only under
``/ui/*`` and demand a Hub-issued user token in the ``X-User-Token`` header.
Everything an agent may do lives under ``/agent/*`` and is redacted on the
way out.
"""

from __future__ import annotations

import os
from typing import Any

import httpx
from fastapi import Body, FastAPI, Header, Request
from fastapi.responses import JSONResponse, PlainTextResponse

from .core import AGENT, Core, ui_channel
from .errors import AnxError, InvalidUserToken
from .sop import ReferenceProvider, SopEngine

_STATUS_FOR = {
    "UnknownCard": 404, "UnknownApp": 404, "UnknownNode": 404, "UnknownRun": 404,
    "UnknownGate": 404, "UnknownAction": 404,
    "ChannelViolation": 403, "InvalidUserToken": 401,
    "WrongState": 409, "WrongStatus": 409, "AlreadyAssigned": 409,
}


def error_response(exc: AnxError) -> JSONResponse:
    return JSONResponse(
        status_code=_STATUS_FOR.get(exc.code, 400),
        content={"status": "error", "error": exc.to_payload()},
    )


def add_cors(app: FastAPI) -> None:
    """Browser clients (the UI bundle) call Core and Hub cross-origin; the
    allowed origins are a deployment decision (ANX_CORS_ORIGINS, default *)."""
    from fastapi.middleware.cors import CORSMiddleware

    origins = [o.strip() for o in os.environ.get("ANX_CORS_ORIGINS", "*").split(",")]
    app.add_middleware(
        CORSMiddleware,
        allow_origins=origins,
        allow_methods=["GET", "POST"],
        allow_headers=["Content-Type", "X-User-Token"],
    )


def create_core_app(core: Core, engine: SopEngine | None = None, ui_dist: str | None = None) -> FastAPI:
    app = FastAPI(title="anx-core", docs_url=None, redoc_url=None)
    add_cors(app)
    engine = engine if engine is not None else SopEngine(core)

    @app.exception_handler(AnxError)
    async def _anx_error(_request: Request, exc: AnxError) -> JSONResponse:
        return error_response(exc)

    @app.get("/healthz")
    def healthz() -> dict[str, str]:
        return {"status": "ok"}

    # ----- agent surface ------------------------------------------------------

    @app.post("/agent/register")
    def agent_register(body: dict[str, Any] = Body(...)) -> dict[str, Any]:
        card_key = core.register_card(body.get("config", body))
        return {"card_key": card_key, "state": core.get_state(card_key, AGENT)["lifecycle"]}

    @app.get("/agent/cards/{card_key}/markup")
    def agent_markup(card_key: str) -> dict[str, str]:
        return {"card_key": card_key, "markup": core.get_markup(card_key, AGENT)}

    @app.get("/agent/cards/{card_key}/state")
    def agent_state(card_key: str) -> dict[str, Any]:
        return core.get_state(card_key, AGENT)

    @app.post("/agent/execute")
    def agent_execute(body: dict[str, Any] = Body(...)) -> dict[str, Any]:
        result = core.execute(str(body.get("line", "")), AGENT)
        return result.to_dict()

    @app.get("/agent/cards/{card_key}/nodes/{node_id}")
    def agent_node(card_key: str, node_id: str) -> dict[str, Any]:
        return core.read_node(card_key, node_id, AGENT)

    @app.post("/agent/sop/load")
    def agent_sop_load(body: dict[str, Any] = Body(...)) -> dict[str, Any]:
        run = engine.start_run(body.get("config", body), provider=ReferenceProvider())
        return {"run_id": run.run_id, "card_key": run.card_key, "run": engine.run_status(run)}

    @app.get("/agent/sop/runs/{run_id}")
    def agent_sop_status(run_id: str) -> dict[str, Any]:
        return engine.run_status(engine.get_run(run_id))

    @app.get("/agent/sop/runs/{run_id}/trace")
    def agent_sop_trace(run_id: str) -> PlainTextResponse:
        return PlainTextResponse(
            engine.get_run(run_id).export_trace(), media_type="application/x-ndjson"
        )

    @app.post("/agent/sop/runs/{run_id}/complete")
    def agent_sop_complete(run_id: str, body: dict[str, Any] = Body(...)) -> dict[str, Any]:
        run = engine.get_run(run_id)
        outputs = body.get("outputs") or {}
        engine.complete_step(run, str(body.get("uuid", "")), outputs)
        return engine.run_status(run)

    # ----- UI surface -----------------------------------------------------------

    def _ui(token: str | None) -> Any:
        if not token:
            raise InvalidUserToken("missing X-User-Token header")
        return ui_channel(token)

    @app.get("/ui/cards/{card_key}/markup")
    def ui_markup(card_key: str, x_user_token: str | None = Header(default=None)) -> dict[str, str]:
        return {"card_key": card_key, "markup": core.get_markup(card_key, _ui(x_user_token))}

    @app.get("/ui/cards/{card_key}/state")
    def ui_state(card_key: str, x_user_token: str | None = Header(default=None)) -> dict[str, Any]:
        return core.get_state(card_key, _ui(x_user_token))

    @app.post("/ui/cards/{card_key}/sensitive")
    def ui_sensitive(
        card_key: str,
        body: dict[str, Any] = Body(...),
        x_user_token: str | None = Header(default=None),
    ) -> dict[str, Any]:
        refs = core.submit_sensitive(card_key, dict(body.get("fields", {})), _ui(x_user_token))
        return {"refs": refs, "state": core.get_state(card_key, _ui(x_user_token))["lifecycle"]}

    @app.post("/ui/cards/{card_key}/confirm")
    def ui_confirm(
        card_key: str,
        body: dict[str, Any] = Body(...),
        x_user_token: str | None = Header(default=None),
    ) -> dict[str, Any]:
        return core.confirm(card_key, str(body.get("gate_id", "")), _ui(x_user_token)).to_dict()

    @app.post("/ui/cards/{card_key}/cancel")
    def ui_cancel(
        card_key: str,
        body: dict[str, Any] = Body(...),
        x_user_token: str | None = Header(default=None),
    ) -> dict[str, Any]:
        return core.cancel(card_key, str(body.get("gate_id", "")), _ui(x_user_token)).to_dict()

    @app.get("/ui/cards/{card_key}/nodes/{node_id}")
    def ui_node_read(
        card_key: str, node_id: str, x_user_token: str | None = Header(default=None)
    ) -> dict[str, Any]:
        return core.read_node(card_key, node_id, _ui(x_user_token))

    @app.post("/ui/cards/{card_key}/nodes/{node_id}")
    def ui_node_write(
        card_key: str,
        node_id: str,
        body: dict[str, Any] = Body(...),
        x_user_token: str | None = Header(default=None),
    ) -> dict[str, Any]:
        core._require_ui(_ui(x_user_token))
        version = core.write_node(card_key, node_id, body.get("payload"))
        return {"node": node_id, "version": version}

    @app.post("/ui/sop/runs/{run_id}/gates/{step_uuid}")
    def ui_resolve_gate(
        run_id: str,
        step_uuid: str,
        body: dict[str, Any] = Body(...),
        x_user_token: str | None = Header(default=None),
    ) -> dict[str, Any]:
        run = engine.get_run(run_id)
        engine.resolve_human_gate(run, step_uuid, str(body.get("decision", "")), _ui(x_user_token))
        return engine.run_status(run)

    @app.get("/ui/audit/export")
    def ui_audit(x_user_token: str | None = Header(default=None)) -> PlainTextResponse:
        core._require_ui(_ui(x_user_token))
        return PlainTextResponse(core.export_audit(), media_type="application/x-ndjson")

    # ----- optional static UI bundle ---------------------------------------------

    if ui_dist and os.path.isdir(ui_dist):
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui-app", StaticFiles(directory=ui_dist, html=True), name="ui-app")

    return app


def hub_token_verifier(hub_url: str) -> Any:
    """Token verifier that asks a remote Hub over HTTP."""

    def verify(token: str) -> bool:
        try:
            resp = httpx.post(hub_url.rstrip("/") + "/verify", json={"token": token}, timeout=5.0)
            return bool(resp.json().get("valid"))
        except (httpx.HTTPError, ValueError):
            return False

    return verify


def main() -> int:
    import uvicorn

    listen = os.environ.get("ANX_CORE_LISTEN", "127.0.0.1:7890")
    host, _, port = listen.partition(":")
    hub_url = os.environ.get("ANX_HUB_URL", "")
    data_dir = os.environ.get("ANX_DATA_DIR") or None
    verifier = hub_token_verifier(hub_url) if hub_url else None
    core = Core(data_dir=data_dir, token_verifier=verifier)
    engine = SopEngine(core)
    ui_dist = os.environ.get("ANX_UI_DIST") or None
    app = create_core_app(core, engine, ui_dist=ui_dist)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 7890), log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
