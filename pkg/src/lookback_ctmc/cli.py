"""Command-line front end: ``price``, ``converge``, ``compare-fd`` and ``mc-check``.

Configs are UTF-8 text with one ``section.key = value`` per line (``#``
starts a comment); ``[section]`` headers followed by plain ``key = value``
lines are accepted too.  Any key can be overridden from the environment
as ``LOOKBACK__SECTION__KEY``.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import time
from dataclasses import dataclass, field, replace
from typing import Optional

from scipy.stats import norm
from scipy.stats import t as student_t

from . import oracle
from .model import CEV, CGMY, BlackScholes, Kou, ModelError, RegimeSwitchingBS, is_levy
from .oracle import FdConfig, McConfig, OracleError
from .pricer import (
    KINDS,
    LookbackContract,
    PricingConfig,
    PricingError,
    estimate_order,
    extrapolate3,
    price,
    price_levy_fastpath,
    richardson2,
)

ENV_PREFIX = "LOOKBACK__"
BENCHMARKS = ("closed_form", "fd", "mc", "self_finest", "none")
EXTRAPOLATIONS = ("none", "richardson", "three_point")
CONVERGE_HEADER = ("n", "price", "error", "extrapolated_price", "extrapolated_error", "runtime")
COMPARE_HEADER = ("method", "resolution", "runtime", "error")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config text


def parse_config(text: str) -> dict:
    """``{"section.key": "value"}`` from config text."""
    out = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if not section:
                raise ConfigError(f"line {lineno}: empty section header")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if "." not in key:
            if section is None:
                raise ConfigError(f"line {lineno}: key {key!r} has no section")
            key = f"{section}.{key}"
        sec, name = key.split(".", 1)
        out[f"{sec.lower()}.{name}"] = value
    return out


def apply_env(values: dict, environ=None) -> dict:
    """Overlay ``LOOKBACK__SECTION__KEY`` variables (section case-insensitive)."""
    environ = os.environ if environ is None else environ
    out = dict(values)
    lowered = {k.lower(): k for k in out}
    for var, value in environ.items():
        if not var.startswith(ENV_PREFIX):
            continue
        parts = var[len(ENV_PREFIX):].split("__")
        if len(parts) != 2 or not all(parts):
            continue
        key = f"{parts[0].lower()}.{parts[1]}"
        # keys such as contract.T keep their case; match an existing key if any
        out[lowered.get(key.lower(), key)] = value
    return out


class _Reader:
    def __init__(self, values: dict):
        self.values = values

    def has(self, key):
        return key in self.values

    def raw(self, key, default=None, required=False):
        if key in self.values:
            return self.values[key]
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default

    def float(self, key, default=None, required=False):
        value = self.raw(key, None, required)
        if value is None:
            return default
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"key {key!r}: expected a number, got {value!r}") from None

    def int(self, key, default=None, required=False):
        value = self.raw(key, None, required)
        if value is None:
            return default
        try:
            return int(value)
        except ValueError:
            raise ConfigError(f"key {key!r}: expected an integer, got {value!r}") from None

    def ints(self, key, default=None, required=False):
        value = self.raw(key, None, required)
        if value is None:
            return default
        try:
            return tuple(int(v) for v in value.replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"key {key!r}: expected integers, got {value!r}") from None

    def floats(self, key, sep=",", required=False):
        value = self.raw(key, None, required)
        if value is None:
            return None
        try:
            return tuple(float(v) for v in value.split(sep) if v.strip())
        except ValueError:
            raise ConfigError(f"key {key!r}: expected numbers, got {value!r}") from None

    def bool(self, key, default=False):
        value = self.raw(key)
        if value is None:
            return default
        v = value.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"key {key!r}: expected on/off, got {value!r}")

    def choice(self, key, choices, default):
        value = self.raw(key, default).strip().lower()
        if value not in choices:
            raise ConfigError(f"key {key!r}: expected one of {choices}, got {value!r}")
        return value


# ---------------------------------------------------------------------------
# run config


@dataclass(frozen=True)
class RunConfig:
    model: object
    contract: LookbackContract
    engine: PricingConfig
    ns: tuple
    extrapolation: str = "none"
    benchmark: str = "none"
    benchmark_n: Optional[int] = None
    fd: tuple = ()
    fd_Mbar: Optional[float] = None
    mc: McConfig = field(default_factory=McConfig)
    output: Optional[str] = None


def _model_from(rd: _Reader, r: float, d: float):
    kind = rd.choice("model.kind", ("bs", "cev", "rsbs", "kou", "cgmy"), "bs")
    try:
        if kind == "bs":
            return BlackScholes(rd.float("model.sigma", required=True), r, d)
        if kind == "cev":
            return CEV(rd.float("model.sigma", required=True), rd.float("model.beta", required=True), r, d)
        if kind == "rsbs":
            sigmas = rd.floats("model.sigmas", required=True)
            rows = rd.raw("model.q", required=True).split(";")
            q = tuple(tuple(float(v) for v in row.split(",")) for row in rows if row.strip())
            return RegimeSwitchingBS(sigmas, q, r, d)
        if kind == "kou":
            return Kou(rd.float("model.sigma", required=True), rd.float("model.lam", required=True),
                       rd.float("model.q_up", required=True), rd.float("model.q_down", required=True),
                       rd.float("model.eta_up", required=True), rd.float("model.eta_down", required=True),
                       r, d)
        return CGMY(rd.float("model.C", required=True), rd.float("model.G", required=True),
                    rd.float("model.M", required=True), rd.float("model.Y", required=True), r, d)
    except ModelError as exc:
        raise ConfigError(f"model: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"model.q: {exc}") from None


def build_run_config(values: dict) -> RunConfig:
    rd = _Reader(values)
    r = rd.float("contract.r", 0.0)
    d = rd.float("contract.d", 0.0)
    model = _model_from(rd, r, d)
    kind = rd.choice("contract.kind", KINDS, "floating_put")
    try:
        contract = LookbackContract(
            kind=kind,
            x=rd.float("contract.x", required=True),
            T=rd.float("contract.T", required=True),
            t=rd.float("contract.t", 0.0),
            M=rd.float("contract.M"),
            m=rd.float("contract.m"),
            K=rd.float("contract.K"),
            r=r,
            d=d,
        )
    except PricingError as exc:
        raise ConfigError(f"contract: {exc}") from None

    ns = rd.ints("engine.n", (400,))
    if not ns or any(b <= a for a, b in zip(ns, ns[1:])):
        raise ConfigError("key 'engine.n': the n-sequence must be strictly increasing")
    fast = rd.bool("engine.fast_path")
    if fast and not (is_levy(model) or isinstance(model, BlackScholes)):
        raise ConfigError("key 'engine.fast_path': the fast path needs a Levy model (bs, kou or cgmy)")
    try:
        engine = PricingConfig(
            n=ns[0],
            quad=rd.raw("engine.quad", "gauss-11"),
            A=rd.float("engine.A"),
            tol=rd.float("engine.tol", 1e-12),
            fast_path=fast,
            space=rd.choice("engine.space", ("auto", "price", "log"), "auto"),
            regime=rd.int("engine.regime", 0),
            threads=rd.int("engine.threads", 1),
        )
    except (PricingError, ValueError) as exc:
        raise ConfigError(f"engine: {exc}") from None

    benchmark = rd.choice("study.benchmark", BENCHMARKS, "none")
    if benchmark == "closed_form" and not isinstance(model, BlackScholes):
        raise ConfigError("key 'study.benchmark': closed_form needs model.kind = bs")
    benchmark_n = rd.int("study.benchmark_n")
    if benchmark == "self_finest" and benchmark_n is None:
        benchmark_n = ns[-1]

    fd_nx = rd.ints("fd.N_x", ())
    fd_nt = rd.ints("fd.N_t", fd_nx)
    if len(fd_nx) != len(fd_nt):
        raise ConfigError("keys 'fd.N_x' and 'fd.N_t' must list the same number of resolutions")

    seed = rd.int("mc.seed", 12345)
    try:
        mc = McConfig(paths=rd.int("mc.paths", 200_000), steps=rd.int("mc.steps", 2000), seed=seed,
                      antithetic=rd.bool("mc.antithetic", True), chunk=rd.int("mc.chunk", 20_000),
                      threads=rd.int("mc.threads", 1), regime=rd.int("engine.regime", 0))
    except OracleError as exc:
        raise ConfigError(f"mc: {exc}") from None

    return RunConfig(
        model=model,
        contract=contract,
        engine=engine,
        ns=ns,
        extrapolation=rd.choice("engine.extrapolation", EXTRAPOLATIONS, "none"),
        benchmark=benchmark,
        benchmark_n=benchmark_n,
        fd=tuple(zip(fd_nx, fd_nt)),
        fd_Mbar=rd.float("fd.Mbar"),
        mc=mc,
        output=rd.raw("output.path"),
    )


def load_config(path: str, environ=None) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        values = parse_config(fh.read())
    return build_run_config(apply_env(values, environ))


# ---------------------------------------------------------------------------
# engine helpers


def engine_price(run: RunConfig, n: int):
    config = replace(run.engine, n=n)
    if config.fast_path:
        return price_levy_fastpath(run.contract, run.model, config)
    return price(run.contract, run.model, config)


class _PriceCache:
    def __init__(self, run: RunConfig):
        self.run = run
        self.prices = {}
        self.times = {}

    def __call__(self, n: int) -> float:
        if n not in self.prices:
            t0 = time.perf_counter()
            self.prices[n] = engine_price(self.run, n).price
            self.times[n] = time.perf_counter() - t0
        return self.prices[n]


def _extrapolated(cache, n, mode):
    """Extrapolated value ending at ``n`` or None."""
    if mode == "richardson":
        if n % 2 or n // 2 < 2:
            return None
        return richardson2(cache(n // 2), cache(n))
    if mode == "three_point":
        if n % 4 or n // 4 < 2:
            return None
        return extrapolate3(cache(n // 4), cache(n // 2), cache(n)).value
    return cache(n)


def _fd_config(run: RunConfig, nx: int, nt: int) -> FdConfig:
    Mbar = run.fd_Mbar
    if Mbar is None:
        raise ConfigError("missing required key 'fd.Mbar'")
    return FdConfig(nx, nt, Mbar)


def resolve_benchmark(run: RunConfig, cache: _PriceCache):
    """(benchmark value or None, smallest n consumed by it)."""
    b = run.benchmark
    c, m = run.contract, run.model
    if b == "none":
        return None, None
    if b == "closed_form":
        if c.kind == "floating_put":
            return oracle.bs_closed_form_floating_put(c, m), None
        return oracle.bs_integral_price(c, m), None
    if b == "fd":
        if not run.fd:
            raise ConfigError("benchmark fd needs 'fd.N_x'")
        nx, nt = run.fd[-1]
        return oracle.fd_price_floating_put(m, c, _fd_config(run, nx, nt)), None
    if b == "mc":
        return oracle.mc_price(c, m, run.mc).price, None
    mode = run.extrapolation if run.extrapolation != "none" else "richardson"
    value = _extrapolated(cache, run.benchmark_n, mode)
    if value is None:
        raise ConfigError("key 'study.benchmark_n' is not divisible for the extrapolation mode")
    used = run.benchmark_n // (4 if mode == "three_point" else 2)
    return value, used


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, int):
        return str(v)
    return format(float(v), ".17g")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# commands


def cmd_price(run: RunConfig, timing: bool = True) -> str:
    n = run.ns[-1]
    t0 = time.perf_counter()
    res = engine_price(run, n)
    wall = time.perf_counter() - t0
    lines = [
        f"price = {_fmt(res.price)}",
        f"kind = {run.contract.kind}",
        f"method = {res.method}",
        f"grid_size = {res.grid_size}",
        f"quadrature = {run.engine.quad} ({res.nodes.size} nodes)",
        f"expm_calls = {res.expm_calls}",
        f"A = {_fmt(res.A)}",
    ]
    if res.floor is not None:
        lines.append(f"floor = {_fmt(res.floor)}")
    if timing:
        lines.append(f"wall_time = {wall:.3f} s")
    return "\n".join(lines) + "\n"


def converge_rows(run: RunConfig, timing: bool = True):
    """Rows of the convergence table and the estimated order (NaN if unavailable)."""
    cache = _PriceCache(run)
    rows = []
    for n in run.ns:
        cache(n)
    bench, used = resolve_benchmark(run, cache)
    errors = []
    for n in run.ns:
        p = cache(n)
        err = None if bench is None else p - bench
        ext = _extrapolated(cache, n, run.extrapolation) if run.extrapolation != "none" else None
        ext_err = None if (ext is None or bench is None) else ext - bench
        runtime = cache.times[n] if timing else None
        rows.append((n, p, err, ext, ext_err, runtime))
        if err is not None and (used is None or n < used):
            errors.append((n, err))
    order = math.nan
    if len(errors) >= 3:
        order = estimate_order(errors)
    rows.append(("order", order, None, None, None, None))
    return rows, order, bench


def cmd_converge(run: RunConfig, timing: bool = True) -> str:
    rows, _, _ = converge_rows(run, timing)
    return _csv_text(CONVERGE_HEADER, rows)


def compare_fd_rows(run: RunConfig, timing: bool = True):
    """Engine and FD rows plus a per-budget verdict list.

    Each engine run defines a budget, its own runtime.  The FD entry for a
    budget is the most accurate FD run that finished within it, or the
    cheapest FD run if none did.
    """
    if not isinstance(run.model, (BlackScholes, CEV)):
        raise ConfigError("compare-fd needs a diffusion model (bs or cev)")
    if not run.fd:
        raise ConfigError("compare-fd needs 'fd.N_x'")
    cache = _PriceCache(run)
    for n in run.ns:
        cache(n)
    bench, _ = resolve_benchmark(run, cache)
    if bench is None:
        raise ConfigError("compare-fd needs a benchmark ('study.benchmark')")
    engine_runs = [(n, cache.times[n], abs(cache(n) - bench)) for n in run.ns]
    fd_runs = []
    for nx, nt in run.fd:
        t0 = time.perf_counter()
        v = oracle.fd_price_floating_put(run.model, run.contract, _fd_config(run, nx, nt))
        fd_runs.append((f"{nx}x{nt}", time.perf_counter() - t0, abs(v - bench)))
    rows = [("engine", n, t if timing else None, e) for n, t, e in engine_runs]
    rows += [("fd", res, t if timing else None, e) for res, t, e in fd_runs]
    verdicts = []
    if len(engine_runs) > 1 or len(fd_runs) > 1:
        cheapest = min(fd_runs, key=lambda r: r[1])
        for n, t, e in engine_runs:
            within = [r for r in fd_runs if r[1] <= t]
            fd_best = min(within, key=lambda r: r[2]) if within else cheapest
            verdicts.append((n, t, e, fd_best[0], fd_best[2], e <= fd_best[2]))
    return rows, verdicts, bench


def cmd_compare_fd(run: RunConfig, timing: bool = True) -> str:
    rows, _, _ = compare_fd_rows(run, timing)
    return _csv_text(COMPARE_HEADER, rows)


def mc_multiplier(res, antithetic: bool) -> float:
    """Three-sigma multiplier with the estimated standard error.

    The stderr comes from the sample itself, so the two-sided three-sigma
    level is taken from Student's t with the sample's degrees of freedom;
    it is 3 to three digits from a few thousand samples on.
    """
    samples = res.paths // 2 if antithetic else res.paths
    if samples < 2:
        return math.inf
    return float(student_t.ppf(norm.cdf(3.0), samples - 1))


def mc_check(run: RunConfig):
    """(passed, engine value, MC result)."""
    if isinstance(run.model, CGMY):
        raise ConfigError("mc-check: unsupported model cgmy (no Monte Carlo oracle)")
    cache = _PriceCache(run)
    n = run.ns[-1]
    value = _extrapolated(cache, n, run.extrapolation) if run.extrapolation != "none" else cache(n)
    if value is None:
        value = cache(n)
    res = oracle.mc_price(run.contract, run.model, run.mc)
    diff = abs(value - res.price)
    k = mc_multiplier(res, run.mc.antithetic)
    return diff <= k * res.stderr + res.bias_allowance, value, res


def cmd_mc_check(run: RunConfig, timing: bool = True) -> str:
    passed, value, res = mc_check(run)
    diff = abs(value - res.price)
    k = mc_multiplier(res, run.mc.antithetic)
    lines = [
        f"{'PASS' if passed else 'FAIL'}{' (low power)' if res.low_power else ''}",
        f"engine = {_fmt(value)}",
        f"mc = {_fmt(res.price)}",
        f"stderr = {_fmt(res.stderr)}",
        f"bias_allowance = {_fmt(res.bias_allowance)}",
        f"debiased = {_fmt(res.debiased)}",
        f"debiased_stderr = {_fmt(res.debiased_stderr)}",
        f"abs_diff = {_fmt(diff)}",
        f"stderr_multiplier = {_fmt(k)}",
        f"bound = {_fmt(k * res.stderr + res.bias_allowance)}",
        f"paths = {res.paths}",
    ]
    return "\n".join(lines) + "\n"


COMMANDS = {
    "price": cmd_price,
    "converge": cmd_converge,
    "compare-fd": cmd_compare_fd,
    "mc-check": cmd_mc_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lookback-ctmc", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="config file (section.key = value lines)")
    parser.add_argument("--output", help="write the result here instead of standard output")
    parser.add_argument("--seed", type=int, help="Monte Carlo seed (overrides mc.seed)")
    parser.add_argument("--threads", type=int, help="worker threads (overrides engine/mc threads)")
    parser.add_argument("--no-timing", action="store_true",
                        help="leave runtime fields empty so repeated runs are byte-identical")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            values = parse_config(fh.read())
        values = apply_env(values)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative")
            values["mc.seed"] = str(args.seed)
        if args.threads is not None:
            values["engine.threads"] = values["mc.threads"] = str(args.threads)
        run = build_run_config(values)
        text = COMMANDS[args.command](run, timing=not args.no_timing)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, PricingError, ModelError, OracleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    output = args.output or run.output
    if output:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
