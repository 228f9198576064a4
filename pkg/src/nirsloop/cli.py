"""Command-line client for the session service plus the distributed node roles.

Every session verb talks HTTP to the service API: against a remote server
when --url is given, otherwise against an in-process instance backed by the
--out workspace. `serve` starts the API server or one of the UDP node roles
(recorder, server, actuator) for running the loop across processes or hosts.
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path

import click
import httpx

from .config import load_config
from .session import FrameProcessor, training_blocks
from .subject import SubjectFrameSource


def _load_config_dict(config_path):
    if config_path is None:
        return None
    return json.loads(Path(config_path).read_text())


class ApiClient:
    """HTTP client for the service; in-process ASGI unless a URL is given."""

    def __init__(self, url: str | None, out: Path):
        self.session_id = out.name
        if url:
            self._client = httpx.Client(base_url=url.rstrip("/"), timeout=300.0)
        else:
            import warnings

            with warnings.catch_warnings():
                # starlette still runs fine on httpx 1.x; httpx2 not required
                warnings.simplefilter("ignore")
                from starlette.testclient import TestClient

                from .service import create_app

                self._client = TestClient(create_app(data_root=out.parent))

    def ensure_session(self, seed, config_dict) -> dict:
        return self.request("POST", "/sessions", json={
            "session_id": self.session_id,
            "seed": seed,
            "config": config_dict,
        })

    def request(self, method: str, path: str, **kwargs) -> dict:
        resp = self._client.request(method, path, **kwargs)
        if resp.status_code >= 400:
            try:
                detail = resp.json().get("detail", resp.text)
            except ValueError:
                detail = resp.text
            raise click.ClickException(f"{method} {path} -> {resp.status_code}: {detail}")
        return resp.json()

    def close(self) -> None:
        self._client.close()


def _common_options(fn):
    fn = click.option("--url", default=None, help="Remote service URL; default runs in-process.")(fn)
    fn = click.option("--out", type=click.Path(path_type=Path), default=Path("./session"),
                      show_default=True, help="Session workspace; its name is the session id.")(fn)
    fn = click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
                      default=None, help="JSON config overriding the defaults.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Master seed override.")(fn)
    return fn


def _verb(url, out, config_path, seed, method, path, payload=None):
    client = ApiClient(url, Path(out))
    try:
        client.ensure_session(seed, _load_config_dict(config_path))
        result = client.request(method, f"/sessions/{client.session_id}{path}",
                                **({"json": payload} if payload is not None else {}))
        click.echo(json.dumps(result, indent=2))
    finally:
        client.close()


@click.group()
def main():
    """Closed-loop stress biofeedback sessions at desk scale."""


@main.command()
@_common_options
def calibrate(url, out, config_path, seed):
    """Run the rest-state calibration and store the baseline."""
    _verb(url, out, config_path, seed, "POST", "/calibrate")


@main.command()
@_common_options
def train(url, out, config_path, seed):
    """Run the labeled training phase and fit the per-subject model."""
    _verb(url, out, config_path, seed, "POST", "/train")


@main.command()
@_common_options
@click.option("--feedback", type=click.Choice(["on", "off"]), default=None,
              help="Vibration biofeedback arm; default from config.")
@click.option("--phases", type=int, default=None, help="Number of test phases.")
def run(url, out, config_path, seed, feedback, phases):
    """Run the live test phases with the trained model."""
    payload = {}
    if feedback is not None:
        payload["feedback"] = feedback == "on"
    if phases is not None:
        payload["phases"] = phases
    _verb(url, out, config_path, seed, "POST", "/run", payload)


@main.command("detect-eval")
@_common_options
@click.option("--repetitions", type=int, default=None,
              help="Training-script repetitions (1 fit + rest scored).")
def detect_eval(url, out, config_path, seed, repetitions):
    """Score stress detection against the block script."""
    payload = {"repetitions": repetitions} if repetitions is not None else {}
    _verb(url, out, config_path, seed, "POST", "/detect-eval", payload)


@main.command()
@_common_options
def report(url, out, config_path, seed):
    """Build the phase-to-phase result table and results.csv."""
    _verb(url, out, config_path, seed, "GET", "/report")


@main.command()
@click.option("--role", type=click.Choice(["api", "recorder", "server", "actuator"]),
              required=True)
@click.option("--out", type=click.Path(path_type=Path), default=Path("./session"),
              show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              default=None)
@click.option("--seed", type=int, default=None)
@click.option("--host", default=None, help="Bind/peer host; default from config.")
@click.option("--port", type=int, default=8000, show_default=True, help="API port (role=api).")
@click.option("--speed", type=float, default=1.0, show_default=True,
              help="Real-time pacing multiplier for the recorder role.")
@click.option("--duration", type=float, default=None,
              help="Stop the node after this many seconds (default: run until interrupted).")
def serve(role, out, config_path, seed, host, port, speed, duration):
    """Run the HTTP API or one UDP node role of the distributed loop."""
    if role == "api":
        import uvicorn

        from .service import create_app

        uvicorn.run(create_app(data_root=Path(out).parent), host=host or "127.0.0.1", port=port)
        return

    cfg = load_config(config_path, seed=seed)
    peer = host or cfg.wire["host"]
    deadline = None if duration is None else time.monotonic() + duration
    if role == "recorder":
        _serve_recorder(cfg, peer, speed, deadline)
    elif role == "server":
        _serve_server(cfg, Path(out), peer, deadline)
    else:
        _serve_actuator(cfg, peer, deadline)


def _expired(deadline) -> bool:
    return deadline is not None and time.monotonic() >= deadline


def _serve_recorder(cfg, peer, speed, deadline):
    """Self-initializing recorder: calibrates, then streams the training block
    pattern on repeat at the configured rate. Accepts run/pause/stop over UDP."""
    from . import wire

    w = cfg.wire
    control = wire.UdpTransport(local=(peer, int(w["control_port"])))
    data = wire.UdpTransport(remote=(peer, int(w["data_port"])))
    source = SubjectFrameSource(cfg.subject_model(), fs=cfg.fs, params=cfg.beer_lambert())
    node = wire.RecorderNode(source, data, source.params.wavelengths, cfg.fs)
    node.handle_packet(wire.encode(wire.Init(
        channel_count=2, calib_duration_s=float(cfg.protocol["calibration_s"]))))
    node.handle_packet(wire.encode(wire.Command(action=wire.CommandAction.RUN)))
    click.echo(f"recorder: streaming to {peer}:{w['data_port']} at {cfg.fs * speed:.0f} fps")
    blocks = training_blocks(cfg.protocol)
    tick_s = 1.0 / (cfg.fs * speed)
    try:
        while node.state != node.STOPPED and not _expired(deadline):
            for block in blocks:
                source.block = block.kind
                for _ in range(int(round(block.duration_s * cfg.fs))):
                    cmd = control.recv(timeout=0.0)
                    if cmd is not None:
                        node.handle_packet(cmd)
                    node.tick()
                    time.sleep(tick_s)
                    if node.state == node.STOPPED or _expired(deadline):
                        return
    except KeyboardInterrupt:
        pass
    finally:
        control.close()
        data.close()


def _serve_server(cfg, out: Path, peer, deadline):
    """Processing node: frames in, stress levels out, using the stored model."""
    from . import wire
    from .classifier import StressClassifier

    w = cfg.wire
    model_path = out / "model.json"
    clf = StressClassifier.load(model_path) if model_path.exists() else None
    if clf is None:
        click.echo("server: no model.json in workspace; streaming features only")
    processor = FrameProcessor(cfg, clf)
    recv = wire.UdpTransport(local=(peer, int(w["data_port"])))
    send = wire.UdpTransport(remote=(peer, int(w["stress_port"])))
    server = wire.StressServer(recv, send, processor.on_frame, processor.on_calib,
                               queue_size=int(w["queue_size"]))
    click.echo(f"server: {peer}:{w['data_port']} -> {peer}:{w['stress_port']}")
    stop = threading.Event()
    if deadline is not None:
        threading.Timer(max(0.0, deadline - time.monotonic()), stop.set).start()
    try:
        server.run(stop)
    except KeyboardInterrupt:
        stop.set()
    finally:
        recv.close()
        send.close()


def _serve_actuator(cfg, peer, deadline):
    from . import wire

    w = cfg.wire
    transport = wire.UdpTransport(local=(peer, int(w["stress_port"])))
    node = wire.ActuatorNode(
        transport,
        wire.ActuatorState(debounce_m=int(w["debounce_m"])),
        on_change=lambda on: click.echo(f"vibration {'ON' if on else 'off'}"),
    )
    click.echo(f"actuator: listening on {peer}:{w['stress_port']}")
    stop = threading.Event()
    if deadline is not None:
        threading.Timer(max(0.0, deadline - time.monotonic()), stop.set).start()
    try:
        node.run(stop)
    except KeyboardInterrupt:
        stop.set()
    finally:
        transport.close()


if __name__ == "__main__":
    main()
