"""Command-line client for the fedentropy service.

The CLI only builds requests and writes the returned rows to CSV files; all
simulation happens behind the service API. By default requests are served
in-process (no sockets); pass ``--server URL`` to target a running instance
started with ``fedentropy serve``.
"""

from __future__ import annotations

import argparse
import asyncio
import sys
from pathlib import Path

import httpx

from .experiment import (
    RoundRow,
    SummaryRow,
    parse_config_text,
    write_partition_csv,
    write_round_csv,
    write_summary,
)


def post(server: str | None, endpoint: str, payload: dict) -> dict:
    """POST to a remote service, or serve the request in-process if none given."""
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            response = client.post(endpoint, json=payload)
    else:
        from .service import app

        async def call():
            transport = httpx.ASGITransport(app=app)
            async with httpx.AsyncClient(
                transport=transport, base_url="http://fedentropy", timeout=None
            ) as client:
                return await client.post(endpoint, json=payload)

        response = asyncio.run(call())

    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise RuntimeError(f"{endpoint} failed ({response.status_code}): {detail}")
    return response.json()


def collect_overrides(args) -> dict:
    overrides: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        overrides.update(parse_config_text(path.read_text()))
    if getattr(args, "seed", None) is not None:
        overrides["seeds"] = [args.seed]
    if getattr(args, "mode", None) is not None:
        overrides["modes"] = args.mode
    if getattr(args, "target_acc", None) is not None:
        overrides["target_accuracy"] = args.target_acc
    return overrides


def cmd_run(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    body = post(args.server, "/run", collect_overrides(args))

    rounds = [RoundRow(**row) for row in body["rounds"]]
    summaries = [SummaryRow(**row) for row in body["summaries"]]
    rounds_path = out_dir / "rounds.csv"
    summary_path = out_dir / "summary.csv"
    write_round_csv(rounds, rounds_path)
    write_summary(summaries, summary_path, total_rounds=body["total_rounds"])

    print(f"wrote {rounds_path} ({len(rounds)} rows) and {summary_path}")
    for s in summaries:
        if s.target is None:
            reached = "rounds_to_target=n/a"
        elif s.target_reached:
            reached = (
                f"rounds_to_target={s.rounds_to_target_mean:.2f}"
                f"+/-{s.rounds_to_target_std:.2f}"
            )
        else:
            reached = f"rounds_to_target=>{body['total_rounds']}"
        print(
            f"{s.mode}: accuracy={s.accuracy_mean:.4f}+/-{s.accuracy_std:.4f} "
            f"{reached} uplink_bytes={s.bytes_to_target_mean:.0f}"
        )
    return 0


def cmd_partition_stats(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    body = post(args.server, "/partition-stats", collect_overrides(args))

    import numpy as np

    path = out_dir / "partition_stats.csv"
    write_partition_csv(np.asarray(body["counts"], dtype=np.int64), path)
    print(f"wrote {path} ({body['devices']} devices x {body['classes']} classes)")
    return 0


def cmd_selftest(args) -> int:
    payload = {
        "judgment_trials": args.judgment_trials,
        "gradient_trials": args.gradient_trials,
        "seed": args.seed if args.seed is not None else 0,
    }
    body = post(args.server, "/selftest", payload)
    for check in body["checks"]:
        status = "PASS" if check["passed"] else "FAIL"
        print(f"[{status}] {check['name']}: {check['detail']}")
    return 0 if body["passed"] else 1


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("fedentropy.service:app", host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedentropy", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_dir=True):
        p.add_argument("--config", help="path to a key = value config file")
        p.add_argument("--seed", type=int, help="run a single seed (overrides seeds)")
        p.add_argument("--server", help="base URL of a running service; default in-process")
        if out_dir:
            p.add_argument("--out-dir", default="out", help="directory for CSV output")

    run_p = sub.add_parser("run", help="run the configured experiment, write CSVs")
    common(run_p)
    run_p.add_argument("--mode", help="comma-separated modes (overrides config)")
    run_p.add_argument("--target-acc", type=float, help="target accuracy for rounds-to-target")
    run_p.set_defaults(func=cmd_run)

    stats_p = sub.add_parser("partition-stats", help="emit the per-device class histogram CSV")
    common(stats_p)
    stats_p.set_defaults(func=cmd_partition_stats)

    self_p = sub.add_parser("selftest", help="run oracle-equivalence and gradient checks")
    common(self_p, out_dir=False)
    self_p.add_argument("--judgment-trials", type=int, default=1000)
    self_p.add_argument("--gradient-trials", type=int, default=20)
    self_p.set_defaults(func=cmd_selftest)

    serve_p = sub.add_parser("serve", help="start the HTTP service")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=8000)
    serve_p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (RuntimeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
