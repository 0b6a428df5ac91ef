"""``gridloop`` command line: run scenarios, start components, check result folders."""
from __future__ import annotations

import argparse
import asyncio
import dataclasses
import logging
import sys
from pathlib import Path

from .report import check_acceptance, emit_report, load_result, summary_text
from .runner import ComponentCrash, ConnectTimeout, packaged_scenario, parse_address, run, run_realtime
from .scenario import Mode, Scenario, ScenarioError, load_scenario


def _scenario_path(text: str) -> Path:
    path = Path(text)
    if path.exists() or path.suffix or "/" in text:
        return path
    # bare name: a scenario shipped with the package
    return packaged_scenario(text + ".scn")


def _load(args) -> Scenario:
    s = load_scenario(_scenario_path(args.scenario))
    changes = {}
    if getattr(args, "mode", None):
        changes["mode"] = Mode(args.mode)
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "out", None):
        changes["out_dir"] = args.out
    if getattr(args, "hub", None):
        changes["hub"] = args.hub
    return dataclasses.replace(s, **changes) if changes else s


def _finish(result, out_dir: str) -> int:
    verdicts = check_acceptance(result)
    emit_report(result, out_dir)
    print(summary_text(result, verdicts), end="")
    print(f"results written to {out_dir}")
    return 0 if all(v.passed for v in verdicts) else 1


def cmd_run(args) -> int:
    s = _load(args)
    return _finish(run(s), s.out_dir)


def cmd_component(args) -> int:
    s = _load(args)
    if s.hub.endswith(":0"):
        raise ScenarioError("component runs need a hub address (--hub HOST:PORT)")
    components = {"gateway": ("gateway",), "sim": ("sim",), "agents": ("agents",)}[args.command]
    result = run_realtime(s, components)
    out = str(Path(s.out_dir) / args.command)
    emit_report(result, out)
    print(f"{args.command} finished; results written to {out}")
    return 0


def cmd_hub(args) -> int:
    from .hub.server import HubServer

    host, port = parse_address(args.listen)

    async def serve():
        server = HubServer()
        bound = await server.start(host, port)
        print(f"signal hub listening on {bound[0]}:{bound[1]}", flush=True)
        await server.serve_forever()

    try:
        asyncio.run(serve())
    except KeyboardInterrupt:
        pass
    return 0


def cmd_check(args) -> int:
    result = load_result(args.result)
    verdicts = check_acceptance(result)
    for v in verdicts:
        print(v.line())
    return 0 if all(v.passed for v in verdicts) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridloop", description="Co-simulation of a microgrid with networked secondary control.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a whole scenario and write results")
    r.add_argument("--scenario", required=True, help="scenario file, or the name of a packaged one")
    r.add_argument("--mode", choices=[m.value for m in Mode])
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)

    h = sub.add_parser("hub", help="start a standalone signal hub")
    h.add_argument("--listen", default="127.0.0.1:7000", help="HOST:PORT")
    h.set_defaults(func=cmd_hub)

    for name in ("gateway", "sim", "agents"):
        c = sub.add_parser(name, help=f"run only the {name} component against a running hub")
        c.add_argument("--scenario", required=True)
        c.add_argument("--hub", required=True, help="HOST:PORT")
        c.add_argument("--seed", type=int)
        c.add_argument("--out")
        c.set_defaults(func=cmd_component)

    k = sub.add_parser("check", help="re-evaluate acceptance checks on a result folder")
    k.add_argument("--result", required=True)
    k.set_defaults(func=cmd_check)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, ValueError, FileNotFoundError) as exc:
        print(f"gridloop: error: {exc}", file=sys.stderr)
        return 2
    except ConnectTimeout as exc:
        print(f"gridloop: {exc}", file=sys.stderr)
        return 3
    except ComponentCrash as exc:
        print(f"gridloop: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
