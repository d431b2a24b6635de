"""``decwatt-session``: run or resume a measurement campaign.

Without a real handset attached the engine drives a simulated device
(``--sim``).
"""

import argparse
import json
import logging
import sys
import urllib.request

from .assets import asset_dicts, load_assets, sequence_assets
from .metrics import VideoAsset
from .session import (
    SessionCheckpoint,
    SessionConfig,
    SessionError,
    campaign_id_for,
    measure_screen_baseline,
    run_campaign,
)
from .sim import SimConfig, SimDevice


def _device(args, context):
    sim = args.sim or context.get("sim")
    if not sim:
        raise SystemExit("decwatt-session: no device attached; pass --sim <config>")
    return SimDevice(SimConfig.load(sim)), {"sim": sim}


def _post(url, body: str) -> dict:
    req = urllib.request.Request(
        url.rstrip("/") + "/v1/submissions", data=body.encode(), headers={"Content-Type": "application/json"}
    )
    try:
        with urllib.request.urlopen(req, timeout=30) as resp:
            return json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        return json.loads(exc.read() or b"{}")


def _finish(args, submission, cp) -> int:
    text = submission.to_json()
    if args.out and args.out != "-":
        with open(args.out, "w") as f:
            f.write(text + "\n")
    else:
        print(text)
    if args.submit:
        verdict = _post(args.submit, text)
        print(f"collector: {verdict.get('verdict')}", file=sys.stderr)
    done = len(cp.completed) + len(cp.untestable)
    print(
        f"{submission.status}: {len(submission.records)}/{submission.available_pairs} pairs measured"
        + (f", suspended: {cp.suspend_reason}" if cp.suspend_reason else ""),
        file=sys.stderr,
    )
    return 0 if done == submission.available_pairs else 3


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="decwatt-session", description="Measure decoder power from battery-level transitions.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="start a campaign")
    run.add_argument("--assets", help="asset JSON file or directory (default: built-in sequences)")
    run.add_argument("--standards", default="H.264", help="standards for built-in sequences, comma separated")
    run.add_argument("--drop", type=float, default=3.0)
    run.add_argument("--checkpoint", required=True)
    run.add_argument("--sim")
    run.add_argument("--poll", type=float, default=1.0)
    run.add_argument("--out", default="-")
    run.add_argument("--submit", help="collector base URL")

    res = sub.add_parser("resume", help="continue from a checkpoint")
    res.add_argument("--checkpoint", required=True)
    res.add_argument("--sim")
    res.add_argument("--recharge", type=float, help="simulated battery level to resume from")
    res.add_argument("--out", default="-")
    res.add_argument("--submit")

    base = sub.add_parser("baseline", help="measure display-on idle drain only")
    base.add_argument("--sim")
    base.add_argument("--min-drop", type=int, default=2)

    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    try:
        if args.command == "baseline":
            device, _ = _device(args, {})
            value = measure_screen_baseline(device, args.min_drop, allow_zero=True)
            print(f"{value:.6f}")
            return 0

        if args.command == "run":
            if args.assets:
                assets = load_assets(args.assets)
            else:
                assets = [a for s in args.standards.split(",") for a in sequence_assets(s.strip())]
            device, ctx = _device(args, {})
            cp = SessionCheckpoint(campaign_id_for(device.profile(), assets))
            cp.context.update(ctx, assets=asset_dicts(assets), drop=args.drop, poll=args.poll)
            config = SessionConfig(drop_target=args.drop, poll_interval=args.poll)
            submission, cp = run_campaign(device, device, assets, cp, config, args.checkpoint)
            cp.save(args.checkpoint)
            return _finish(args, submission, cp)

        cp = SessionCheckpoint.load(args.checkpoint)
        assets = [VideoAsset(**a) for a in cp.context.get("assets", [])]
        if not assets:
            raise SystemExit("decwatt-session: checkpoint carries no asset list")
        device, _ = _device(args, cp.context)
        if args.recharge is not None:
            device.recharge(args.recharge)
        config = SessionConfig(drop_target=cp.context.get("drop", 3.0), poll_interval=cp.context.get("poll", 1.0))
        submission, cp = run_campaign(device, device, assets, cp, config, args.checkpoint)
        cp.save(args.checkpoint)
        return _finish(args, submission, cp)
    except SessionError as exc:
        print(f"decwatt-session: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
