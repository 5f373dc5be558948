"""Command-line experiments.

Every command reads an optional JSON config file (``--config``); flags
given on the command line override it. Outputs land in ``output_dir`` and
each JSON output embeds the fully resolved config and a version string.

Exit codes: 0 success, 2 config error, 3 numeric guard violation,
4 calibration did not converge (the report is still written).
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .circuit_ir import bind_parameters, build_mcx, build_qft, circuit_to_dense, decompose_to_rotations
from .layout_depth import DepthModel, find_crossover
from .mpo_engine import ROUTING_MODES, bond_profile, mpo_to_dense, operator_fidelity, save_mpo, zip_up
from .noisy_sim import NoiseModel, SingularChannelError, circuit_channel, optimal_unitary_correction
from .qem_optimizer import MitigationLayer, OptimizerConfig, calibrate_method1, calibrate_method2
from .verifier_synth import build_verifier, random_product_state, product_to_vector, save_verifier, verify_batch

EXIT_OK, EXIT_CONFIG, EXIT_GUARD, EXIT_NOT_CONVERGED = 0, 2, 3, 4

DEFAULTS: dict = {
    "experiment": "run",
    "output_dir": "out",
    "seed": 0,
    "circuit": {"kind": "mcx", "n": 3, "chi": 2, "routing": "swap"},
    "noise": {
        "coherent_mean": 0.05,
        "coherent_std": 0.02,
        "coherent_mode": "systematic",
        "depolarizing": 0.0,
        "depolarizing_1q": 0.0,
        "amplitude_damping": 0.0,
        "phase_damping": 0.0,
        "seed": 7,
    },
    "optimizer": {
        "max_evals": 2000,
        "initial_step": 0.1,
        "restarts": 3,
        "batch_size": 16,
        "resample_batch": False,
        "coherent_draws": 16,
        "xatol": 1e-2,
        "fatol": 1e-5,
    },
    "mitigation": {"layers": 1, "entangle": False},
    "depth_model": {
        "d1": 0.0,
        "d2": 1.0,
        "unitary_cost": "qsd",
        "swap_cost": 3,
        "grid_cols": None,
        "verifier_routing": True,
    },
    "verifier_check": {"trials": 100},
    "depth_scan": {"chis": [2, 4, 8], "n_max": 256},
    "calibrate": {"method": 2},
}


class ConfigError(Exception):
    pass


class GuardError(Exception):
    pass


def version_string() -> str:
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{__version__}+{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


# -- config ---------------------------------------------------------------------


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key '{where}' must be an object")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def _locate(path: str, message: str) -> str:
    """Prefix ``message`` with the line of the offending key when it can be found."""
    key = message.split("'")[1].split(".")[-1] if "'" in message else None
    if key:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            if f'"{key}"' in line:
                return f"{path}:{lineno}: {message}"
    return f"{path}: {message}"


def load_config_file(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


# flag dest -> (section, key); section None means top level
_FLAG_MAP = {
    "experiment": (None, "experiment"),
    "out": (None, "output_dir"),
    "seed": (None, "seed"),
    "kind": ("circuit", "kind"),
    "n": ("circuit", "n"),
    "chi": ("circuit", "chi"),
    "routing": ("circuit", "routing"),
    "noise_mean": ("noise", "coherent_mean"),
    "noise_std": ("noise", "coherent_std"),
    "noise_mode": ("noise", "coherent_mode"),
    "noise_seed": ("noise", "seed"),
    "depolarizing": ("noise", "depolarizing"),
    "amplitude_damping": ("noise", "amplitude_damping"),
    "phase_damping": ("noise", "phase_damping"),
    "max_evals": ("optimizer", "max_evals"),
    "batch_size": ("optimizer", "batch_size"),
    "restarts": ("optimizer", "restarts"),
    "layers": ("mitigation", "layers"),
    "entangle": ("mitigation", "entangle"),
    "d1": ("depth_model", "d1"),
    "d2": ("depth_model", "d2"),
    "unitary_cost": ("depth_model", "unitary_cost"),
    "swap_cost": ("depth_model", "swap_cost"),
    "grid_cols": ("depth_model", "grid_cols"),
    "no_verifier_routing": ("depth_model", "verifier_routing"),
    "trials": ("verifier_check", "trials"),
    "chis": ("depth_scan", "chis"),
    "n_max": ("depth_scan", "n_max"),
    "method": ("calibrate", "method"),
}


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if getattr(args, "config", None):
        data = load_config_file(args.config)
        try:
            cfg = _merge(cfg, data)
        except ConfigError as exc:
            raise ConfigError(_locate(args.config, str(exc))) from exc
    for dest, (section, key) in _FLAG_MAP.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        if dest == "no_verifier_routing":
            value = not value
        target = cfg if section is None else cfg[section]
        target[key] = value
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    c = cfg["circuit"]
    if c["kind"] not in ("mcx", "qft", "identity"):
        raise ConfigError(f"circuit.kind must be mcx, qft or identity, got {c['kind']!r}")
    if not isinstance(c["n"], int) or c["n"] < 1:
        raise ConfigError("circuit.n must be a positive integer")
    if c["kind"] == "mcx" and c["n"] < 2:
        raise ConfigError("an MCX circuit needs n >= 2")
    if c["chi"] is not None and (not isinstance(c["chi"], int) or c["chi"] < 1):
        raise ConfigError("circuit.chi must be a positive integer or null")
    if c["routing"] not in ROUTING_MODES:
        raise ConfigError(f"circuit.routing must be one of {ROUTING_MODES}")
    if cfg["calibrate"]["method"] not in (1, 2):
        raise ConfigError("calibrate.method must be 1 or 2")
    try:
        noise_model(cfg)
        optimizer_config(cfg)
        depth_model(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def noise_model(cfg: dict) -> NoiseModel:
    return NoiseModel(**cfg["noise"])


def optimizer_config(cfg: dict) -> OptimizerConfig:
    return OptimizerConfig(seed=int(cfg["seed"]), **cfg["optimizer"])


def depth_model(cfg: dict) -> DepthModel:
    return DepthModel(**cfg["depth_model"])


def build_circuit(cfg: dict):
    from .circuit_ir import Circuit

    kind, n = cfg["circuit"]["kind"], cfg["circuit"]["n"]
    if kind == "mcx":
        return build_mcx(n - 1)
    if kind == "qft":
        return build_qft(n, include_bit_reversal=False)
    return Circuit(n, [])


# -- output helpers ----------------------------------------------------------------


def _out_dir(cfg: dict) -> Path:
    path = Path(cfg["output_dir"])
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, payload: dict, cfg: dict) -> None:
    doc = {"version": version_string(), "config": cfg, **payload}
    path.write_text(json.dumps(doc, indent=2, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _stem(cfg: dict, suffix: str) -> Path:
    c = cfg["circuit"]
    return _out_dir(cfg) / f"{cfg['experiment']}_{c['kind']}_n{c['n']}_chi{c['chi']}{suffix}"


# -- commands -------------------------------------------------------------------


def _build_mpo(cfg: dict):
    circ = build_circuit(cfg)
    meta = {"kind": cfg["circuit"]["kind"]}
    if cfg["circuit"]["kind"] == "qft":
        meta["output_permutation"] = list(range(circ.n_qubits - 1, -1, -1))
    mpo = zip_up(circ, cfg["circuit"]["chi"], routing=cfg["circuit"]["routing"], metadata=meta)
    return circ, mpo


def cmd_mpo_build(cfg: dict) -> int:
    circ, mpo = _build_mpo(cfg)
    header, blob = save_mpo(mpo, _stem(cfg, ""))
    dims, chi = bond_profile(mpo)
    fidelity = None
    if circ.n_qubits <= 12:
        fidelity = operator_fidelity(mpo_to_dense(mpo), circuit_to_dense(circ))
    print(f"bond dims: {dims} (max {chi})")
    print(f"discarded weight: {mpo.discarded_weight:.6e}")
    if fidelity is not None:
        print(f"fidelity {fidelity:.6f}")
    _write_json(
        _stem(cfg, ".summary.json"),
        {
            "bond_dims": dims,
            "max_bond": chi,
            "discarded_weight": mpo.discarded_weight,
            "operator_fidelity": fidelity,
            "files": [header.name, blob.name],
        },
        cfg,
    )
    return EXIT_OK


def cmd_verifier_check(cfg: dict) -> int:
    circ, mpo = _build_mpo(cfg)
    n = circ.n_qubits
    if n > 12:
        raise GuardError(f"verifier check needs a dense reference, limited to 12 qubits (got {n})")
    ideal = circuit_to_dense(circ)
    vc = build_verifier(mpo, ideal)
    save_verifier(vc, _stem(cfg, ""))
    trials = int(cfg["verifier_check"]["trials"])
    rng = np.random.default_rng(np.random.SeedSequence(cfg["seed"]))
    refs = np.stack([random_product_state(n, rng) for _ in range(trials)])
    vecs = np.stack([product_to_vector(r) for r in refs])
    mismatched = rng.normal(size=(trials, 2**n)) + 1j * rng.normal(size=(trials, 2**n))
    mismatched /= np.linalg.norm(mismatched, axis=1, keepdims=True)
    probs, matched = verify_batch(vc, refs, vecs @ ideal.T)
    _, wrong = verify_batch(vc, refs, mismatched)
    csv_path = _stem(cfg, ".verifier.csv")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "matched_fidelity", "mismatched_fidelity", "postselect_probability"])
        for k in range(trials):
            w.writerow([k, _fmt(matched[k]), _fmt(wrong[k]), _fmt(probs[k])])
    summary = {
        "gate_count": len(vc.gates),
        "gate_width": vc.gate_width,
        "source_fidelity": vc.source_fidelity,
        "matched_mean": float(matched.mean()),
        "mismatched_mean": float(wrong.mean()),
        "gap": float(matched.mean() - wrong.mean()),
    }
    print(
        f"matched mean {summary['matched_mean']:.6f}  mismatched mean "
        f"{summary['mismatched_mean']:.6f}  gate width {vc.gate_width}"
    )
    _write_json(_stem(cfg, ".verifier_summary.json"), summary, cfg)
    return EXIT_OK


def cmd_depth_scan(cfg: dict) -> int:
    model = depth_model(cfg)
    kind = cfg["circuit"]["kind"]
    if kind not in ("qft", "mcx"):
        raise ConfigError("depth-scan supports circuit kinds qft and mcx")
    out = _out_dir(cfg)
    results = {}
    for chi in cfg["depth_scan"]["chis"]:
        rep = find_crossover(kind, int(chi), model, int(cfg["depth_scan"]["n_max"]))
        (out / f"{cfg['experiment']}_{kind}_chi{chi}.depth.csv").write_text(rep.curves_csv())
        results[str(chi)] = rep.n_star
        print(f"{kind} chi={chi}: n_star = {rep.n_star if rep.found else 'absent'}")
    _write_json(out / f"{cfg['experiment']}_{kind}.crossover.json", {"kind": kind, "n_star": results}, cfg)
    return EXIT_OK


def _calibration_setup(cfg: dict):
    circ, mpo = _build_mpo(cfg)
    vc = build_verifier(mpo)
    return circ, decompose_to_rotations(circ), vc


def cmd_calibrate(cfg: dict) -> int:
    circ, rotations, vc = _calibration_setup(cfg)
    nm = noise_model(cfg)
    opt = optimizer_config(cfg)
    method = cfg["calibrate"]["method"]
    if method == 1:
        layer = MitigationLayer(circ.n_qubits, **cfg["mitigation"])
        report = calibrate_method1(rotations, nm, vc, layer, opt)
    else:
        report = calibrate_method2(rotations, nm, vc, opt)
    stem = _stem(cfg, f".method{method}")
    Path(str(stem) + ".trace.csv").write_text(report.trace_csv())
    _write_json(Path(str(stem) + ".report.json"), report.to_dict(), cfg)
    print("method  f_initial  f_final  evaluations")
    print(f"{method}       {report.f_initial:.3f}      {report.f_final:.3f}    {report.evaluations}")
    if not report.converged:
        print("calibration did not converge within the evaluation budget", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_incoherent_analysis(cfg: dict) -> int:
    circ = build_circuit(cfg)
    rot = decompose_to_rotations(circ)
    bound = bind_parameters(rot, rot.nominal_values)
    ideal = circuit_to_dense(circ)
    nm = noise_model(cfg)
    channel = circuit_channel(bound, nm)
    cond = float(np.linalg.cond(channel.superop))
    res = optimal_unitary_correction(channel, ideal)
    payload = {
        "f_before": res.f_before,
        "f_after": res.f_after,
        "gain": res.gain,
        "condition_number": cond,
    }
    print(f"f_before {res.f_before:.6f}  f_after {res.f_after:.6f}  gain {res.gain:.6f}")
    _write_json(_stem(cfg, ".incoherent.json"), payload, cfg)
    return EXIT_OK


COMMANDS = {
    "mpo-build": cmd_mpo_build,
    "verifier-check": cmd_verifier_check,
    "depth-scan": cmd_depth_scan,
    "calibrate": cmd_calibrate,
    "incoherent-analysis": cmd_incoherent_analysis,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mpoverify", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=version_string())
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run config; flags override it")
        p.add_argument("--experiment")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--kind", choices=["mcx", "qft", "identity"])
        p.add_argument("--n", type=int, help="number of qubits")
        p.add_argument("--chi", type=int, help="bond-dimension cap")
        p.add_argument("--routing", choices=list(ROUTING_MODES))
        if name in ("calibrate", "incoherent-analysis"):
            p.add_argument("--noise-mean", type=float)
            p.add_argument("--noise-std", type=float)
            p.add_argument("--noise-mode", choices=["systematic", "resampled"])
            p.add_argument("--noise-seed", type=int)
            p.add_argument("--depolarizing", type=float)
            p.add_argument("--amplitude-damping", type=float)
            p.add_argument("--phase-damping", type=float)
        if name == "calibrate":
            p.add_argument("--method", type=int, choices=[1, 2])
            p.add_argument("--max-evals", type=int)
            p.add_argument("--batch-size", type=int)
            p.add_argument("--restarts", type=int)
            p.add_argument("--layers", type=int)
            p.add_argument("--entangle", action="store_true", default=None)
        if name == "verifier-check":
            p.add_argument("--trials", type=int)
        if name == "depth-scan":
            p.add_argument("--chis", type=int, nargs="+")
            p.add_argument("--n-max", type=int)
            p.add_argument("--d1", type=float)
            p.add_argument("--d2", type=float)
            p.add_argument("--unitary-cost", choices=["qsd", "zero"])
            p.add_argument("--swap-cost", type=int)
            p.add_argument("--grid-cols", type=int)
            p.add_argument("--no-verifier-routing", action="store_true", default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GuardError, SingularChannelError, ValueError) as exc:
        print(f"numeric guard: {exc}", file=sys.stderr)
        return EXIT_GUARD


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
