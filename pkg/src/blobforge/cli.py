"""Command-line entry points.

Commands that need a scene store (render, edit, sample) talk to a running
service over HTTP; serve starts one.  The offline commands (curate,
harness-check, bench) run in-process and write their reports to disk.
The service address resolves flag > $BLOBFORGE_ADDR > 127.0.0.1:8796.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

DEFAULT_ADDR = "127.0.0.1:8796"


def _resolve_addr(flag: "str | None") -> str:
    addr = flag or os.environ.get("BLOBFORGE_ADDR") or DEFAULT_ADDR
    if not addr.startswith("http"):
        addr = f"http://{addr}"
    return addr.rstrip("/")


def _client(addr: "str | None"):
    import httpx

    return httpx.Client(base_url=_resolve_addr(addr), timeout=30.0)


def _fail(detail) -> int:
    print(f"error: {detail}", file=sys.stderr)
    return 1


def _http_error(resp) -> int:
    try:
        detail = resp.json().get("detail", resp.text)
    except ValueError:
        detail = resp.text
    return _fail(f"HTTP {resp.status_code}: {detail}")


def cmd_serve(args) -> int:
    import uvicorn

    from blobforge.server import create_app

    host, _, port = _resolve_addr(args.addr).removeprefix("http://").partition(":")
    app = create_app(args.data_dir)
    uvicorn.run(app, host=host, port=int(port or 8796), log_level="info")
    return 0


def cmd_render(args) -> int:
    params = {"kind": args.kind, "format": args.format}
    if args.width is not None:
        params["w"] = args.width
    if args.height is not None:
        params["h"] = args.height
    if args.p is not None:
        params["p"] = args.p
    if args.blob is not None:
        params["blob"] = args.blob
    with _client(args.addr) as client:
        resp = client.get(f"/scenes/{args.scene}/render", params=params)
        if resp.status_code != 200:
            return _http_error(resp)
        Path(args.out).write_bytes(resp.content)
        vmax = resp.headers.get("x-field-vmax")
        note = f" (v_max {vmax})" if vmax else ""
        print(f"wrote {args.out}: {len(resp.content)} bytes{note}")
    return 0


def cmd_edit(args) -> int:
    raw = args.op
    if raw.startswith("@"):
        raw = Path(raw[1:]).read_text()
    try:
        op = json.loads(raw)
    except json.JSONDecodeError as err:
        return _fail(f"op is not valid JSON: {err}")
    body: dict = {"op": op}
    if args.revision is not None:
        body["revision"] = args.revision
    with _client(args.addr) as client:
        resp = client.post(f"/scenes/{args.scene}/edit", json=body)
        if resp.status_code != 200:
            return _http_error(resp)
        doc = resp.json()
        print(f"scene {doc['id']} at revision {doc['revision']} ({len(doc['blobs'])} blobs)")
    return 0


def cmd_sample(args) -> int:
    files = {
        "image": (Path(args.image).name, Path(args.image).read_bytes(), "image/png"),
        "mask": (Path(args.mask).name, Path(args.mask).read_bytes(), "image/png"),
    }
    data = {"seed": str(args.seed), "caption": args.caption, "confidence": str(args.confidence)}
    with _client(args.addr) as client:
        resp = client.post("/samples", files=files, data=data)
        if resp.status_code != 200:
            return _http_error(resp)
        Path(args.out).write_bytes(resp.content)
        print(f"wrote {args.out}: {len(resp.content)} bytes")
    return 0


def cmd_curate(args) -> int:
    from blobforge.blob import ConfidenceLevel
    from blobforge.curation import CurationRules, curate_directory

    rules = CurationRules(
        min_short_side=args.min_short_side,
        area_ratio_range=(args.area_lo, args.area_hi),
        min_cov_eig=args.min_eig,
    )
    summary = curate_directory(args.in_dir, args.out, rules, ConfidenceLevel(args.confidence))
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_harness_check(args) -> int:
    from blobforge.harness import run_harness_check

    report = run_harness_check(seed=args.seed, size=args.size, levels=args.levels)
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    for name, value in sorted(report["checks"].items()):
        if name == "grad_table":
            continue
        print(f"{name}: {value}")
    print("PASS" if report["passed"] else "FAIL")
    return 0 if report["passed"] else 1


def cmd_bench(args) -> int:
    from blobforge.metrics import run_bench

    report = run_bench(args.pred_masks, args.gt, args.images)
    text = json.dumps(report, indent=2, sort_keys=True, allow_nan=False)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    g = report["grounding"]
    mse = g["aggregate_mse"]
    print(
        f"grounding: {len(g['samples'])} samples, {g['missing']} missing, "
        f"aggregate mse {mse if mse is not None else 'n/a'}",
        file=sys.stderr,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blobforge")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--addr", help="host:port to bind (default 127.0.0.1:8796)")
    p.add_argument("--data-dir", help="directory for scene persistence")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("render", help="fetch a scene render from the service")
    p.add_argument("scene")
    p.add_argument("--kind", default="composed", choices=["opacity", "composed", "mask", "feature-preview"])
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--p", type=float, help="confidence level for mask renders")
    p.add_argument("--blob", help="render a single blob instead of the scene")
    p.add_argument("--format", default="png", choices=["png", "field"])
    p.add_argument("--out", required=True)
    p.add_argument("--addr")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("edit", help="apply one edit op to a scene")
    p.add_argument("scene")
    p.add_argument("--op", required=True, help="edit op as JSON, or @file")
    p.add_argument("--revision", type=int, help="expected revision (optimistic lock)")
    p.add_argument("--addr")
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("sample", help="build a training sample archive via the service")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--caption", default="")
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--out", required=True)
    p.add_argument("--addr")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("curate", help="filter and fit an image/mask directory")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True, help="manifest path (JSON lines)")
    p.add_argument("--min-short-side", type=int, default=480)
    p.add_argument("--area-lo", type=float, default=0.01)
    p.add_argument("--area-hi", type=float, default=0.9)
    p.add_argument("--min-eig", type=float, default=1e-5)
    p.add_argument("--confidence", type=float, default=0.95)
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("harness-check", help="run the training-harness invariant checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=8)
    p.add_argument("--levels", type=int, default=2)
    p.add_argument("--report", help="write the full JSON report here")
    p.set_defaults(func=cmd_harness_check)

    p = sub.add_parser("bench", help="score predicted masks and image pairs")
    p.add_argument("--pred-masks", required=True)
    p.add_argument("--gt", required=True, help="JSON map of name -> ellipse")
    p.add_argument("--images", help="directory of <stem>.ref.png / <stem>.out.png pairs")
    p.add_argument("--out", help="write the JSON report here (default: stdout)")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: "list[str] | None" = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
