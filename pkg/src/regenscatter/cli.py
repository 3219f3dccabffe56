"""Command-line front end.

Exit codes: 0 success, 1 self-test failure, 2 config or usage error,
3 runtime error, 4 calibration did not meet every anchor.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import modem
from .calibrate import (
    anchors_from_config,
    fit_models,
    nelder_mead,
    particle_swarm,
    ParamSpace,
    space_from_config,
)
from .channel import LinkGeometry, friis_received_power
from .errors import ConfigError, RegenScatterError
from .link_eval import (
    Link,
    ModelBundle,
    SweepSpec,
    default_bundle,
    eb_n0_db,
    load_model_file,
    run_sweep,
)
from .signal_core import BasebandSignal, RandomSource

SCHEMA_VERSION = 1
CSV_HEADER = "link,distance_m,bit_rate_bps,offset_hz,p_rx_dbm,eb_n0_db,n_bits,n_errors,ber,sync_failed"

EXIT_OK, EXIT_SELFTEST, EXIT_CONFIG, EXIT_RUNTIME, EXIT_NOT_CONVERGED = 0, 1, 2, 3, 4


@dataclass
class RunConfig:
    schema_version: int
    seed: int
    models: ModelBundle
    sweep: dict | None = None
    calibration: dict | None = None
    output: dict = field(default_factory=dict)


def _require(cond, path, msg):
    if not cond:
        raise ConfigError(f"{path}: {msg}")


def _num_list(d, key, path):
    v = d.get(key)
    _require(isinstance(v, list) and v, f"{path}.{key}", "must be a nonempty list of numbers")
    for i, x in enumerate(v):
        _require(
            isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x),
            f"{path}.{key}[{i}]",
            "must be a finite number",
        )
    return [float(x) for x in v]


def load_config(path) -> RunConfig:
    """Parse and validate a run configuration; raises ConfigError with the field path."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such config file") from None
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    _require(isinstance(doc, dict), "$", "top level must be an object")
    known = {"schema_version", "seed", "models", "model_file", "sweep", "calibration", "output"}
    extra = set(doc) - known
    _require(not extra, "$", f"unknown key(s) {sorted(extra)}")
    _require(doc.get("schema_version") == SCHEMA_VERSION, "schema_version", f"must be {SCHEMA_VERSION}")
    seed = doc.get("seed", 0)
    _require(isinstance(seed, int) and not isinstance(seed, bool) and 0 <= seed < 2**64, "seed", "must be an unsigned 64-bit integer")

    base = default_bundle()
    if "model_file" in doc:
        mf = Path(doc["model_file"])
        if not mf.is_absolute():
            mf = path.parent / mf
        try:
            base = load_model_file(mf)
        except FileNotFoundError:
            raise ConfigError(f"model_file: {mf} not found") from None
        except (json.JSONDecodeError, ConfigError) as exc:
            raise ConfigError(f"model_file: {exc}") from exc
    try:
        models = ModelBundle.from_dict(doc.get("models", {}), base=base)
    except (ConfigError, ValueError, TypeError) as exc:
        raise ConfigError(f"models.{exc}") from exc

    sweep = doc.get("sweep")
    if sweep is not None:
        _require(isinstance(sweep, dict), "sweep", "must be an object")
        link = sweep.get("link", "down")
        _require(link in ("down", "up"), "sweep.link", "must be 'down' or 'up'")
        bpp = sweep.get("bits_per_point", 100_000)
        _require(isinstance(bpp, int) and bpp >= 1000, "sweep.bits_per_point", "must be an integer >= 1000")
        sweep = {
            "link": link,
            "distances": _num_list(sweep, "distances_m", "sweep"),
            "bit_rates": _num_list(sweep, "bit_rates_bps", "sweep"),
            "offsets": _num_list(sweep, "offsets_hz", "sweep") if "offsets_hz" in sweep else [0.0],
            "bits_per_point": bpp,
            "noise": bool(sweep.get("noise", True)),
        }
        for i, d in enumerate(sweep["distances"]):
            _require(d > 0, f"sweep.distances_m[{i}]", "must be positive")
        for i, r in enumerate(sweep["bit_rates"]):
            _require(r > 0, f"sweep.bit_rates_bps[{i}]", "must be positive")
        for i, o in enumerate(sweep["offsets"]):
            _require(o >= 0, f"sweep.offsets_hz[{i}]", "must be non-negative")

    cal = doc.get("calibration")
    if cal is not None:
        _require(isinstance(cal, dict), "calibration", "must be an object")
        _require(isinstance(cal.get("anchors"), list), "calibration.anchors", "must be a list")
        _require(isinstance(cal.get("parameters"), list) and cal["parameters"], "calibration.parameters", "must be a nonempty list")
        anchors = anchors_from_config(cal["anchors"])
        space = space_from_config(cal["parameters"])
        for nm in space.names:
            try:
                val = models.get_param(nm)
            except ConfigError as exc:
                raise ConfigError(f"calibration.parameters: {exc}") from None
            _require(isinstance(val, (int, float)) and not isinstance(val, bool), f"calibration.parameters.{nm}", "is not a real-valued parameter")
        for i, a in enumerate(anchors):
            try:
                a.observe(models)
            except ConfigError as exc:
                raise ConfigError(f"calibration.anchors[{i}]: {exc}") from None
        cal = {
            "anchors": anchors,
            "space": space,
            "raw_anchors": cal["anchors"],
            "pso": dict(cal.get("pso", {})),
            "nelder_mead": dict(cal.get("nelder_mead", {})),
        }
    out = doc.get("output", {})
    _require(isinstance(out, dict), "output", "must be an object")
    return RunConfig(SCHEMA_VERSION, seed, models, sweep, cal, out)


def format_rows(rows) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                [
                    r.link,
                    "%.6e" % r.distance,
                    "%.6e" % r.bit_rate,
                    "%.6e" % r.offset,
                    "%.6e" % r.p_rx,
                    "%.6e" % r.eb_n0,
                    str(r.n_bits),
                    str(r.n_errors),
                    "%.6e" % r.ber,
                    "1" if r.sync_failed else "0",
                ]
            )
        )
    return "\n".join(lines) + "\n"


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if cfg.sweep is None:
        raise ConfigError("sweep: section missing")
    link = args.link or cfg.sweep["link"]
    seed = cfg.seed if args.seed is None else args.seed
    out = args.out or cfg.output.get("sweep_csv")
    if not out:
        raise ConfigError("--out not given and output.sweep_csv missing")
    spec = SweepSpec(
        link=Link(link),
        distances=cfg.sweep["distances"],
        bit_rates=cfg.sweep["bit_rates"],
        offsets=cfg.sweep["offsets"],
        bits_per_point=cfg.sweep["bits_per_point"],
        seed=seed,
        models=cfg.models,
        noise=cfg.sweep["noise"],
    )
    rows = run_sweep(spec, threads=args.threads)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_rows(rows))
    bers = [r.ber for r in rows]
    print(f"wrote {len(rows)} rows to {out}; BER min={min(bers):.6e} max={max(bers):.6e}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = load_config(args.config)
    if cfg.calibration is None:
        raise ConfigError("calibration: section missing")
    out = args.out or cfg.output.get("model_file")
    if not out:
        raise ConfigError("--out not given and output.model_file missing")
    seed = cfg.seed if args.seed is None else args.seed
    c = cfg.calibration
    try:
        cal = fit_models(c["anchors"], c["space"], RandomSource(seed, 0), cfg.models, c["pso"], c["nelder_mead"])
    except TypeError as exc:
        raise ConfigError(f"calibration optimizer options: {exc}") from exc
    doc = {
        "schema_version": SCHEMA_VERSION,
        "models": cal.models.to_dict(),
        "provenance": {
            "seed": seed,
            "loss": cal.fit.loss,
            "converged": cal.converged,
            "n_evaluations": cal.fit.n_evaluations,
            "free_parameters": list(c["space"].names),
            "anchors": c["raw_anchors"],
        },
    }
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    print(f"{'observable':34s} {'args':48s} {'target':>12s} {'value':>14s} {'resid':>8s}  ok")
    for r in cal.residuals:
        a = json.dumps(r["args"], sort_keys=True)
        print(f"{r['observable']:34s} {a:48s} {r['kind']}{r['target']:>10.4g} {r['value']:>14.6g} {r['residual']:>8.3f}  {'yes' if r['met'] else 'NO'}")
    print(f"loss={cal.fit.loss:.3e} evaluations={cal.fit.n_evaluations} converged={cal.converged}; model written to {out}")
    return EXIT_OK if cal.converged else EXIT_NOT_CONVERGED


def cmd_goertzel(args) -> int:
    samples = []
    try:
        with open(args.input, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                text = line.strip()
                if not text:
                    continue
                try:
                    v = float(text)
                except ValueError:
                    raise ConfigError(f"{args.input}:{lineno}: malformed sample {text!r}") from None
                if not math.isfinite(v):
                    raise ConfigError(f"{args.input}:{lineno}: sample is not finite")
                samples.append(v)
    except OSError as exc:
        raise ConfigError(f"{args.input}: {exc}") from exc
    n = args.n if args.n is not None else len(samples)
    if n < 1 or n > len(samples):
        raise ConfigError(f"--n {n} exceeds the {len(samples)} samples in {args.input}")
    if not args.rate > 0 or not 0 <= args.freq < args.rate / 2:
        raise ConfigError("--freq must lie in [0, rate/2) and --rate must be positive")
    mag = modem.goertzel(BasebandSignal(samples, args.rate), args.freq, n)
    print(f"{mag:.12f}")
    return EXIT_OK


def _check_goertzel():
    rng = np.random.default_rng(7)
    worst = 0.0
    for n in (8, 64, 256):
        x = rng.standard_normal((10, n))
        k = np.arange(n // 2 + 1)
        g = modem.goertzel_bins(x, k)
        jk = np.outer(np.arange(n), k) % n
        ref = np.abs(x @ np.exp(-2j * np.pi * jk / n))
        worst = max(worst, float(np.max(np.abs(g - ref) / ref)))
    return worst < 1e-9, f"max relative error {worst:.2e}"


def _check_roundtrips():
    bits = np.random.default_rng(3).integers(0, 2, 2000)
    for rate in (500.0, 20e3, 200e3):
        a = modem.AskConfig.for_rate(rate)
        f = modem.FskConfig.for_rate(rate)
        for d in (0, 5, 15):
            ra = modem.ask_demodulate(modem.ask_modulate(bits, a).delayed(d), a)
            rf = modem.fsk_demodulate(modem.fsk_modulate(bits, f).delayed(d), f)
            if not (np.array_equal(ra.bits, bits) and np.array_equal(rf.bits, bits)):
                return False, f"decode mismatch at {rate:g} bps, delay {d}"
    return True, "ASK and FSK decode their own output"


def _check_friis():
    g = LinkGeometry(10.0, 26.3e9, 20.0, 20.0)
    slope = friis_received_power(g.at(20.0)) - friis_received_power(g)
    gap = eb_n0_db(-60.0, -174.0, 20e3) - eb_n0_db(-60.0, -174.0, 60e3)
    ok = abs(slope + 20 * math.log10(2)) < 1e-9 and abs(gap - 10 * math.log10(3)) < 1e-9
    return ok, f"slope {slope:.4f} dB/doubling, rate gap {gap:.4f} dB"


def _check_optimizers():
    rosen = lambda p: (1 - p[0]) ** 2 + 100 * (p[1] - p[0] ** 2) ** 2  # noqa: E731
    nm = nelder_mead(rosen, [-1.2, 1.0], max_iter=500)
    space = ParamSpace(tuple(f"x{i}" for i in range(5)), (-5.0,) * 5, (5.0,) * 5)
    ps = particle_swarm(lambda p: float(np.sum(p * p)), space, RandomSource(1, 0), 40, 200)
    ok = nm.loss < 1e-8 and ps.loss < 1e-4
    return ok, f"Rosenbrock {nm.loss:.2e}, sphere {ps.loss:.2e}"


SELFTEST_CHECKS = [
    ("goertzel_vs_dft", _check_goertzel),
    ("modem_roundtrips", _check_roundtrips),
    ("friis_and_rate_laws", _check_friis),
    ("optimizer_benchmarks", _check_optimizers),
]


def run_selftest(corrupt_goertzel: bool = False, stream=None) -> bool:
    stream = sys.stdout if stream is None else stream
    saved = modem._COEFF_PERTURBATION
    if corrupt_goertzel:
        modem._COEFF_PERTURBATION = 1e-3
    all_ok = True
    try:
        for name, check in SELFTEST_CHECKS:
            t0 = time.perf_counter()
            try:
                ok, detail = check()
            except Exception as exc:  # a crashing check is a failed check
                ok, detail = False, f"{type(exc).__name__}: {exc}"
            all_ok &= ok
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail} ({time.perf_counter() - t0:.2f} s)", file=stream)
    finally:
        modem._COEFF_PERTURBATION = saved
    return all_ok


def cmd_selftest(args) -> int:
    return EXIT_OK if run_selftest(args.corrupt_goertzel) else EXIT_SELFTEST


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="regenscatter", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sweep", help="run a BER/Eb-N0 sweep and write CSV")
    s.add_argument("config", help="JSON run configuration")
    s.add_argument("--out", help="CSV path (default: output.sweep_csv)")
    s.add_argument("--link", choices=["down", "up"], help="override sweep.link")
    s.add_argument("--seed", type=int, help="override the config seed")
    s.add_argument("--threads", type=int, default=1, help="worker threads; output does not depend on it")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("calibrate", help="fit model parameters to anchors")
    c.add_argument("config", help="JSON run configuration")
    c.add_argument("--out", help="model file to write (default: output.model_file)")
    c.add_argument("--seed", type=int, help="override the config seed")
    c.set_defaults(func=cmd_calibrate)

    g = sub.add_parser("goertzel", help="single DFT bin magnitude of a sample file")
    g.add_argument("input", help="text file, one sample per line")
    g.add_argument("--freq", type=float, required=True, help="target frequency in Hz")
    g.add_argument("--rate", type=float, required=True, help="sample rate in Hz")
    g.add_argument("--n", type=int, help="window length (default: whole file)")
    g.set_defaults(func=cmd_goertzel)

    t = sub.add_parser("selftest", help="run the embedded invariant checks")
    t.add_argument("--corrupt-goertzel", action="store_true", help=argparse.SUPPRESS)
    t.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RegenScatterError, OSError, ValueError, ArithmeticError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
