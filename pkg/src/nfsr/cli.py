"""Command-line harness: a thin client over the FastAPI service.

By default the service app runs in-process through an ASGI transport; pass
--server to talk to a remote instance instead. Subcommands: fit-basis,
simulate, recover, dualpoly, eval. Exit codes: 0 success, 2 configuration
error, 3 solver failure, 4 rank-deficient gain system.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import httpx
import numpy as np

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_RANK = 4

_STAGE_EXIT = {"config": EXIT_CONFIG, "solver": EXIT_SOLVER, "gains": EXIT_RANK}


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    # In-process ASGI client; avoids needing a running server.
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DeprecationWarning)
        from starlette.testclient import TestClient

    from .service import app

    return TestClient(app, raise_server_exceptions=False)


def _load_config(path: str, overrides: list[str]):
    from .schemas import ExperimentConfig

    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)
    for item in overrides:
        if "=" not in item:
            print(f"config error: bad override {item!r}", file=sys.stderr)
            raise SystemExit(EXIT_CONFIG)
        key, _, value = item.partition("=")
        node = doc
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = json.loads(value)
    try:
        return ExperimentConfig.model_validate(doc)
    except Exception as exc:
        print(f"config error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _post(client: httpx.Client, url: str, payload) -> dict:
    resp = client.post(url, json=payload)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", {})
        except Exception:
            detail = {}
        stage = detail.get("stage", "unknown") if isinstance(detail, dict) else "unknown"
        msg = detail.get("detail", resp.text) if isinstance(detail, dict) else resp.text
        print(f"{stage} error: {msg}", file=sys.stderr)
        raise SystemExit(_STAGE_EXIT.get(stage, EXIT_SOLVER))
    return resp.json()


def _write_json(path: str, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


def _load_observation(path: str | None) -> dict | None:
    if path is None:
        return None
    with open(path) as fh:
        doc = json.load(fh)
    # Accept both the service schema and the simulate file format.
    if "y" in doc:
        return doc
    return {
        "y": {"re": doc["y_re"], "im": doc["y_im"]},
        "provenance": doc.get("provenance", "external"),
        "eta": doc.get("eta", 0.0),
        "config_hash": doc.get("config_hash", ""),
    }


def cmd_fit_basis(args) -> int:
    config = _load_config(args.config, args.set)
    with _client(args.server) as client:
        out = _post(client, "/fit-basis", config.array.model_dump())
    errs = np.array(out["fit_error"])
    print(f"config hash {out['config_hash']}; lifted size {out['n_u']}x{out['n_b']}")
    print(f"cache {'hit' if out['cache_hit'] else 'rebuilt'}: {out['cache_path']}")
    print(f"fit error max {errs.max():.3e} median {np.median(errs):.3e}")
    if args.out:
        _write_json(args.out, out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = _load_config(args.config, args.set)
    with _client(args.server) as client:
        out = _post(client, "/simulate", config.model_dump())
    scenario = {
        "config_hash": out["config_hash"],
        "model": config.model,
        "noise_std": config.measurement.noise_std,
        "combiner_seed": config.measurement.combiner_seed,
        "noise_seed": config.measurement.noise_seed,
        "paths": out["paths"],
    }
    _write_json(args.scenario_out, scenario)
    obs = out["observation"]
    _write_json(
        args.obs_out,
        {
            "config_hash": out["config_hash"],
            "provenance": obs["provenance"],
            "eta": obs["eta"],
            "y_re": obs["y"]["re"],
            "y_im": obs["y"]["im"],
        },
    )
    print(f"wrote {args.scenario_out} and {args.obs_out} (eta={out['eta']:.6g})")
    return EXIT_OK


def cmd_recover(args) -> int:
    config = _load_config(args.config, args.set)
    payload = {"config": config.model_dump()}
    obs = _load_observation(args.observation)
    if obs is not None:
        payload["observation"] = obs
    with _client(args.server) as client:
        out = _post(client, "/recover", payload)
    report = out["report"]
    report["files"] = {"report": args.out}
    _write_json(args.out, report)
    print(f"status {report['solver']['status']}; {len(report['estimates'])} path(s)")
    for e in report["estimates"]:
        print(
            f"  theta={e['theta_hat']:.4f} rad  r={e['r_hat_m']:.4f} m  "
            f"gain={e['gain_re']:.4f}{e['gain_im']:+.4f}j  |Q|={e['certificate']:.4f}"
        )
    return EXIT_OK


def cmd_dualpoly(args) -> int:
    config = _load_config(args.config, args.set)
    payload = {"config": config.model_dump()}
    obs = _load_observation(args.observation)
    if obs is not None:
        payload["observation"] = obs
    with _client(args.server) as client:
        out = _post(client, "/dualpoly", payload)
    cfg = config.array.to_core()
    from .invrange import InverseRangeMap
    from .localization import DualPolynomial

    coeffs = np.array(
        [[v["re"] + 1j * v["im"] for v in row] for row in out["coeffs"]]
    )
    dp = DualPolynomial(cfg, coeffs)
    rmap = InverseRangeMap.from_config(cfg)
    ug, tg, qv = dp.eval_grid(out["grid_u"], out["grid_theta"])
    with open(args.csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["u", "theta", "r_m", "re_q", "im_q", "abs_q"])
        rs = rmap.r_of_u(ug)
        for i, u in enumerate(ug):
            for j, t in enumerate(tg):
                writer.writerow(
                    [u, t, rs[i], qv[i, j].real, qv[i, j].imag, abs(qv[i, j])]
                )
    _write_json(
        args.peaks, {"config_hash": out["config_hash"], "peaks": out["peaks"]}
    )
    print(f"wrote {args.csv} and {args.peaks}")
    return EXIT_OK


def cmd_eval(args) -> int:
    with open(args.report) as fh:
        report = json.load(fh)
    with open(args.truth) as fh:
        truth = json.load(fh)
    estimates = [
        {
            "u_hat": e["u_hat"],
            "theta_hat": e["theta_hat"],
            "r_hat_m": e["r_hat_m"],
            "gain_re": e["gain_re"],
            "gain_im": e["gain_im"],
            "certificate": e["certificate"],
        }
        for e in report["estimates"]
    ]
    payload = {
        "array": report.get("config_model", {}).get("array")
        or _array_from_core_dict(report["config"]),
        "estimates": estimates,
        "truth": truth["paths"],
        "model": args.model,
    }
    with _client(args.server) as client:
        out = _post(client, "/eval", payload)
    _write_json(args.out, out)
    with open(args.csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "delta_theta", "delta_r_m", "delta_u", "delta_gain"])
        for i in range(len(out["delta_theta"])):
            writer.writerow(
                [
                    i,
                    out["delta_theta"][i],
                    out["delta_r"][i],
                    out["delta_u"][i],
                    out["delta_gain"][i],
                ]
            )
    print(
        f"misses {out['misses']}  false alarms {out['false_alarms']}  "
        f"channel NMSE {out['channel_nmse']:.3e}"
    )
    return EXIT_OK


def _array_from_core_dict(core: dict) -> dict:
    return {
        "n_antennas": core["n_antennas"],
        "f_c_hz": core["carrier_freq"],
        "spacing_m": core["spacing"],
        "r_min_m": core["r_min"],
        "r_max_m": core["r_max"],
        "i1": core["i1"],
        "i2": core["i2"],
        "k_u": core["k_u"],
        "k_loc": core["k_loc"],
        "n_panels": core["n_panels"],
        "ridge_mu": core["ridge_mu"],
    }


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="nfsr", description="Gridless near-field range-angle super-resolution"
    )
    parser.add_argument("--server", help="remote service URL (default: in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=JSON",
            help="override a config field, e.g. --set measurement.n_meas=24",
        )

    p = sub.add_parser("fit-basis", help="build/load the lifted basis, report fit quality")
    add_common(p)
    p.add_argument("--out", help="write the fit report JSON here")
    p.set_defaults(func=cmd_fit_basis)

    p = sub.add_parser("simulate", help="draw a scenario and synthesize observations")
    add_common(p)
    p.add_argument("--scenario-out", default="scenario.json")
    p.add_argument("--obs-out", default="observation.json")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("recover", help="run the full recovery pipeline")
    add_common(p)
    p.add_argument("--observation", help="observation JSON (default: simulate from config)")
    p.add_argument("--out", default="report.json")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("dualpoly", help="export the dual polynomial surface")
    add_common(p)
    p.add_argument("--observation")
    p.add_argument("--csv", default="dualpoly.csv")
    p.add_argument("--peaks", default="peaks.json")
    p.set_defaults(func=cmd_dualpoly)

    p = sub.add_parser("eval", help="compare a recovery report against ground truth")
    p.add_argument("--report", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--model", default="exact", choices=["exact", "fresnel"])
    p.add_argument("--out", default="metrics.json")
    p.add_argument("--csv", default="metrics.csv")
    p.set_defaults(func=cmd_eval)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
