"""Experiment runner CLI.

Subcommands: simulate, capacity, region, spectral, check-hn, converse.
Configs and summaries are JSON; bulk traces and curves are CSV. Every run is
reproducible from (config, seed); summaries embed both plus a content hash
of the channel file. Exit codes: 0 success, 2 validation failure, 3
numerical-invariant violation. The CQGP_OUT_DIR environment variable sets
the default output directory.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass

import numpy as np

from . import baselines, infospec, model, protocol
from .errors import NumericalInvariantError, ValidationError

OUT_DIR_ENV = "CQGP_OUT_DIR"


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated simulate-run configuration."""

    channel: str
    n_list: tuple
    gamma: float
    eps: float
    trials: int
    seed: int
    rate_R: float | None = None
    rate_r: float | None = None
    rate_RS: float | None = None
    out_dir: str = "."
    codebook_batch: int = 1

    def __post_init__(self):
        if not self.n_list:
            raise ValidationError("config: n list must be non-empty")
        if any(int(n) < 1 for n in self.n_list):
            raise ValidationError("config: every n must be >= 1")
        if int(self.trials) < 1:
            raise ValidationError("config: trials must be >= 1")
        if self.gamma <= 0:
            raise ValidationError("config: gamma must be positive")
        eps = float(self.eps)
        if not (0 < eps < 1 and eps + eps ** 0.5 + eps ** 0.25 < 1):
            raise ValidationError("config: eps must satisfy eps + sqrt(eps) + eps**0.25 < 1")
        if int(self.codebook_batch) < 1:
            raise ValidationError("config: codebook_batch must be >= 1")
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))


def _config_from_dict(doc: dict, base_dir: str = ".") -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ValidationError("config: expected a JSON object")
    unknown = set(doc) - {
        "channel", "n", "gamma", "eps", "trials", "seed",
        "rate_R", "rate_r", "rate_RS", "out_dir", "codebook_batch",
    }
    if unknown:
        raise ValidationError(f"config: unknown fields {sorted(unknown)}")
    missing = [k for k in ("channel", "n", "gamma", "eps", "trials", "seed") if k not in doc]
    if missing:
        raise ValidationError(f"config: missing fields {missing}")
    channel = doc["channel"]
    if not os.path.isabs(channel):
        channel = os.path.join(base_dir, channel)
    n_list = doc["n"] if isinstance(doc["n"], list) else [doc["n"]]
    return ExperimentConfig(
        channel=channel,
        n_list=tuple(n_list),
        gamma=float(doc["gamma"]),
        eps=float(doc["eps"]),
        trials=int(doc["trials"]),
        seed=int(doc["seed"]),
        rate_R=None if doc.get("rate_R") is None else float(doc["rate_R"]),
        rate_r=None if doc.get("rate_r") is None else float(doc["rate_r"]),
        rate_RS=None if doc.get("rate_RS") is None else float(doc["rate_RS"]),
        out_dir=str(doc.get("out_dir", _default_out_dir())),
        codebook_batch=int(doc.get("codebook_batch", 1)),
    )


def _default_out_dir() -> str:
    return os.environ.get(OUT_DIR_ENV, ".")


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        digest.update(fh.read())
    return digest.hexdigest()


def _dump_json(path: str, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run(config: ExperimentConfig) -> list:
    """Run the simulator for every n in the config and write artifacts to disk.

    Per n: summary_n{n}.json and traces_n{n}.csv; plus an aggregate
    summary.json listing the records in increasing n. Returns the records.
    """
    channel, law = model.load_system(config.channel)
    channel_hash = _sha256(config.channel)
    os.makedirs(config.out_dir, exist_ok=True)
    records = []
    for n in config.n_list:
        ext = model.ProductExtension(law, channel, n)
        params = protocol.default_params(
            ext, n, config.gamma, config.eps,
            rate_message=config.rate_R,
            rate_covering=config.rate_r,
            rate_quant=config.rate_RS,
        )
        result = protocol.simulate(
            ext, params, config.trials, config.seed,
            codebook_batch=config.codebook_batch, keep_traces=True,
        )
        record = {
            "n": n,
            "params": {
                "gamma": params.gamma,
                "eps": params.eps,
                "rate_message": params.rate_message,
                "rate_covering": params.rate_covering,
                "rate_quant": params.rate_quant,
                "bin_count": params.bin_count,
                "words_per_bin": params.words_per_bin,
                "quant_count": params.quant_count,
            },
            "result": result.summary(),
            "error_budget": protocol.error_budget(params),
            "seed": config.seed,
            "trials": config.trials,
            "channel_file": os.path.basename(config.channel),
            "channel_sha256": channel_hash,
            "config": {
                "n": list(config.n_list),
                "gamma": config.gamma,
                "eps": config.eps,
                "trials": config.trials,
                "seed": config.seed,
                "rate_R": config.rate_R,
                "rate_r": config.rate_r,
                "rate_RS": config.rate_RS,
                "codebook_batch": config.codebook_batch,
            },
        }
        _dump_json(os.path.join(config.out_dir, f"summary_n{n}.json"), record)
        _write_traces(os.path.join(config.out_dir, f"traces_n{n}.csv"), result.traces)
        records.append(record)
    _dump_json(os.path.join(config.out_dir, "summary.json"), records)
    return records


def _write_traces(path: str, traces) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "trial", "message", "state_word", "quant_index", "codeword_index",
            "input_word", "outcome", "decoded", "quantizer_failed",
            "binning_failed", "error",
        ])
        for t in traces:
            writer.writerow([
                t.trial, t.message, "-".join(map(str, t.state_word)), t.quant_index,
                t.codeword_index, "-".join(map(str, t.input_word)), t.outcome,
                -1 if t.decoded is None else t.decoded,
                int(t.quantizer_failed), int(t.binning_failed), int(t.error),
            ])


def _load_classical(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise ValidationError(f"channel file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"channel file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"channel file {path} must contain a JSON object")
    return doc


def _classical_channel(doc: dict) -> baselines.ClassicalChannel:
    for fieldname in ("p_state", "p_out_given_input_state"):
        if fieldname not in doc:
            raise ValidationError(f"classical channel file missing field {fieldname!r}")
    return baselines.ClassicalChannel(
        p_out=np.asarray(doc["p_out_given_input_state"], float),
        p_state=np.asarray(doc["p_state"], float),
    )


def _emit(payload, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)


def _cmd_simulate(args) -> int:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"config {args.config} is not valid JSON: {exc}") from exc
        config = _config_from_dict(doc, base_dir=os.path.dirname(os.path.abspath(args.config)))
        if args.out:
            config = ExperimentConfig(**{**asdict(config), "out_dir": args.out})
    else:
        if not args.channel or not args.n:
            raise ValidationError("simulate needs --config or both --channel and --n")
        config = ExperimentConfig(
            channel=args.channel,
            n_list=tuple(args.n),
            gamma=args.gamma,
            eps=args.eps,
            trials=args.trials,
            seed=args.seed,
            rate_R=args.rate_R,
            rate_r=args.rate_r,
            rate_RS=args.rate_RS,
            out_dir=args.out or _default_out_dir(),
            codebook_batch=args.codebook_batch,
        )
    records = run(config)
    for rec in records:
        res = rec["result"]
        print(
            f"n={rec['n']}: error={res['estimate']:.4f} "
            f"ci95=[{res['ci95'][0]:.4f}, {res['ci95'][1]:.4f}] "
            f"budget={rec['error_budget']:.4f} -> {config.out_dir}/summary_n{rec['n']}.json"
        )
    return 0


def _cmd_capacity(args) -> int:
    doc = _load_classical(args.channel)
    channel = _classical_channel(doc)
    cap = min(channel.n_inputs * channel.n_states, channel.n_outputs + channel.n_states - 1)
    u_size = args.u_size if args.u_size else cap
    result = baselines.gp_capacity(channel, u_size, grid_resolution=args.grid)
    payload = {
        "gp_capacity_bits": result.value,
        "u_size": u_size,
        "grid_resolution": args.grid,
        "maximizer_p_aux_given_state": result.p_aux_given_state.tolist(),
        "maximizer_assignment": result.assignment.tolist(),
    }
    if channel.n_states == 1:
        ba = baselines.blahut_arimoto(channel.p_out[:, 0, :])
        payload["blahut_arimoto_bits"] = ba.capacity
        payload["blahut_arimoto_iterations"] = ba.iterations
        payload["agreement_gap_bits"] = abs(ba.capacity - result.value)
    _emit(payload, args.out)
    return 0


def _cmd_region(args) -> int:
    doc = _load_classical(args.channel)
    channel = _classical_channel(doc)
    for fieldname in ("p_quant_given_state", "p_aux_given_quant", "p_input_given_aux_quant"):
        if fieldname not in doc:
            raise ValidationError(f"region requires law field {fieldname!r} in the channel file")
    law = model.JointLaw(
        doc["p_state"], doc["p_quant_given_state"],
        doc["p_aux_given_quant"], doc["p_input_given_aux_quant"],
    )
    r_bound, rs_bound = baselines.heegard_elgamal_rates(channel, law)
    _emit({"rate_message_bound_bits": r_bound, "rate_quant_bound_bits": rs_bound}, args.out)
    return 0


def _cmd_spectral(args) -> int:
    channel, law = model.load_system(args.channel)
    rows = []
    crossings = {}
    for n in args.n:
        ext = model.ProductExtension(law, channel, n)
        if ext.dim_block > 4096:
            raise ValidationError(f"spectral curve at n={n} needs dim {ext.dim_block} > 4096")
        probs = ext.law.p_aux
        states = [ext.rho_given_aux[u] for u in range(law.n_aux)]
        center = protocol.detection_threshold(ext)
        lo = args.a_min if args.a_min is not None else center - 0.6
        hi = args.a_max if args.a_max is not None else center + 0.4
        grid = np.arange(lo, hi + 1e-12, args.a_step)
        values = [infospec.cq_spectral_value(probs, states, n, float(a), args.gamma)
                  for a in grid]
        estimate = infospec.SpectralEstimate(
            tuple(float(a) for a in grid), tuple(values), args.gamma, n
        )
        rows.extend(estimate.rows())
        crossings[str(n)] = estimate.crossing(args.delta)
    out_path = args.out or os.path.join(_default_out_dir(), "spectral.csv")
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "a", "value"])
        writer.writerows(rows)
    print(json.dumps({"csv": out_path, "crossings": crossings}, indent=2, sort_keys=True))
    return 0


def _cmd_check_hn(args) -> int:
    report = baselines.hayashi_nagaoka_suite(
        args.count, min_dim=args.min_dim, max_dim=args.max_dim, seed=args.seed
    )
    payload = {
        "count": report["count"],
        "passes": report["passes"],
        "worst_min_eig": report["worst_min_eig"],
        "tolerance": report["tolerance"],
        "ok": report["passes"] == report["count"],
    }
    _emit(payload, args.out)
    return 0 if payload["ok"] else 3


def _cmd_converse(args) -> int:
    channel, law = model.load_system(args.channel)
    ext = model.ProductExtension(law, channel, 1)
    ensemble = [(law.p_aux[u], ext.rho_given_aux[u]) for u in range(law.n_aux)]
    if args.messages is not None:
        messages = args.messages
    elif args.rate is not None:
        messages = max(1, int(np.ceil(2.0 ** (args.n * args.rate) - 1e-9)))
    else:
        raise ValidationError("converse needs --rate or --messages")
    raw = baselines.converse_bound(ensemble, messages, args.n, args.gamma, clamp=False)
    _emit({
        "n": args.n,
        "gamma": args.gamma,
        "messages": messages,
        "rate_bits": float(np.log2(messages)) / args.n,
        "bound_raw": raw,
        "bound_clamped": max(raw, 0.0),
    }, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cqgp",
        description="Simulate and cross-check coding with rate-limited encoder side information.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the coding protocol and write summaries/traces")
    sim.add_argument("--config", help="experiment config JSON")
    sim.add_argument("--channel", help="system JSON (channel + law)")
    sim.add_argument("--n", type=int, action="append", help="block length (repeatable)")
    sim.add_argument("--gamma", type=float, default=0.1)
    sim.add_argument("--eps", type=float, default=0.01)
    sim.add_argument("--trials", type=int, default=200)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--rate-R", dest="rate_R", type=float, default=None)
    sim.add_argument("--rate-r", dest="rate_r", type=float, default=None)
    sim.add_argument("--rate-RS", dest="rate_RS", type=float, default=None)
    sim.add_argument("--codebook-batch", type=int, default=1)
    sim.add_argument("--out", default=None, help="output directory")
    sim.set_defaults(func=_cmd_simulate)

    cap = sub.add_parser("capacity", help="grid capacity oracle (plus Blahut-Arimoto when state-free)")
    cap.add_argument("--channel", required=True, help="classical channel JSON")
    cap.add_argument("--u-size", type=int, default=None)
    cap.add_argument("--grid", type=int, default=20)
    cap.add_argument("--out", default=None)
    cap.set_defaults(func=_cmd_capacity)

    reg = sub.add_parser("region", help="evaluate the coded-side-information rate bounds")
    reg.add_argument("--channel", required=True, help="classical channel+law JSON")
    reg.add_argument("--out", default=None)
    reg.set_defaults(func=_cmd_region)

    spec = sub.add_parser("spectral", help="trace-test curves for the instance ensemble")
    spec.add_argument("--channel", required=True, help="system JSON (channel + law)")
    spec.add_argument("--n", type=int, action="append", required=True)
    spec.add_argument("--gamma", type=float, default=0.05)
    spec.add_argument("--a-min", type=float, default=None)
    spec.add_argument("--a-max", type=float, default=None)
    spec.add_argument("--a-step", type=float, default=0.05)
    spec.add_argument("--delta", type=float, default=0.1)
    spec.add_argument("--out", default=None)
    spec.set_defaults(func=_cmd_spectral)

    hn = sub.add_parser("check-hn", help="random suite for the decoding operator inequality")
    hn.add_argument("--count", type=int, default=1000)
    hn.add_argument("--min-dim", type=int, default=2)
    hn.add_argument("--max-dim", type=int, default=8)
    hn.add_argument("--seed", type=int, default=0)
    hn.add_argument("--out", default=None)
    hn.set_defaults(func=_cmd_check_hn)

    con = sub.add_parser("converse", help="finite-n lower bound on the error of any code")
    con.add_argument("--channel", required=True, help="system JSON (channel + law)")
    con.add_argument("--n", type=int, required=True)
    con.add_argument("--gamma", type=float, required=True)
    con.add_argument("--rate", type=float, default=None)
    con.add_argument("--messages", type=int, default=None)
    con.add_argument("--out", default=None)
    con.set_defaults(func=_cmd_converse)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except NumericalInvariantError as exc:
        print(f"numerical invariant violation: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
