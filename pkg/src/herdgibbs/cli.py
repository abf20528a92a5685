"""Experiment harness: generate mixtures, run samplers, evaluate error curves, time samplers.

Output layout below ``output_dir``::

    config.json                   resolved configuration of the last command
    mixtures/d02_m00.json         generated target mixtures
    traces/d02_m00_kh.json|.csv   herding traces (samples + diagnostics)
    traces/d02_m00_rnd_r00.csv    random baseline sample sets
    curves/d02_m00.csv            per-mixture error curves
    curves/d02_mean.csv           curves averaged over the mixtures
    bench.csv                     per-sample computation time
"""

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ._io import read_csv, read_json, write_csv, write_json
from ._validation import ContractViolation, NumericalError
from .kernels import IsotropicGaussianKernel
from .metrics import average_curves, error_curves, write_curves_csv
from .mixtures import GaussianMixture, MixtureGenConfig, random_mixture, sample_random
from .optim import OptimConfig
from .samplers import continuous_herded_gibbs, kernel_herding, samples_csv_rows

log = logging.getLogger("herdgibbs")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3
METHODS = ("kh", "chg", "rnd")
DEFAULT_GRID = (
    list(range(1, 11)) + list(range(20, 101, 10)) + list(range(200, 1001, 100)) + [2000]
)


class ConfigError(ContractViolation):
    def __init__(self, field_name, message):
        super().__init__(f"config field '{field_name}': {message}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    seed: int = 0
    dims: list = field(default_factory=lambda: [2, 10])
    n_components: int = 5
    n_mixtures: int = 10
    sigma_k: float = 0.1
    n_samples: int = 500
    sample_grid: list = field(default_factory=lambda: list(DEFAULT_GRID))
    methods: list = field(default_factory=lambda: list(METHODS))
    rnd_repeats: int = 20
    bench_dims: list = field(default_factory=lambda: [2, 5, 10, 15, 20])
    bench_samples: int = 100
    optim: OptimConfig = field(default_factory=OptimConfig)
    mixture_gen: MixtureGenConfig = field(default_factory=MixtureGenConfig)
    output_dir: str = "results"
    jobs: int = 1
    prng: str = "PCG64"

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown field")
        for key, sub in (("optim", OptimConfig), ("mixture_gen", MixtureGenConfig)):
            if key in data and not isinstance(data[key], sub):
                value = data[key]
                if not isinstance(value, dict):
                    raise ConfigError(key, "expected an object")
                sub_known = {f.name for f in fields(sub)}
                for sub_key in value:
                    if sub_key not in sub_known:
                        raise ConfigError(f"{key}.{sub_key}", "unknown field")
                try:
                    data[key] = sub(**value)
                except (ContractViolation, TypeError) as exc:
                    raise ConfigError(key, str(exc)) from None
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def to_dict(self):
        return asdict(self)

    def validate(self):
        def int_field(name, low):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < low:
                raise ConfigError(name, f"must be an integer >= {low}, got {value!r}")

        def int_list(name, low, increasing=False):
            value = getattr(self, name)
            if not isinstance(value, list) or not value:
                raise ConfigError(name, "must be a nonempty list")
            if any(isinstance(v, bool) or not isinstance(v, int) or v < low for v in value):
                raise ConfigError(name, f"entries must be integers >= {low}")
            if increasing and any(b <= a for a, b in zip(value, value[1:])):
                raise ConfigError(name, "must be strictly increasing")

        int_field("seed", 0)
        int_list("dims", 1)
        int_field("n_components", 1)
        int_field("n_mixtures", 1)
        if not isinstance(self.sigma_k, (int, float)) or not self.sigma_k > 0 or not np.isfinite(self.sigma_k):
            raise ConfigError("sigma_k", f"must be a positive number, got {self.sigma_k!r}")
        int_field("n_samples", 1)
        int_list("sample_grid", 1, increasing=True)
        if not self.effective_grid():
            raise ConfigError("sample_grid", f"has no entry <= n_samples={self.n_samples}")
        if not isinstance(self.methods, list) or not self.methods or any(m not in METHODS for m in self.methods):
            raise ConfigError("methods", f"must be a nonempty subset of {list(METHODS)}, got {self.methods!r}")
        int_field("rnd_repeats", 1)
        int_list("bench_dims", 1)
        int_field("bench_samples", 2)
        int_field("jobs", 1)
        if self.prng != "PCG64":
            raise ConfigError("prng", "only PCG64 is supported")
        if not isinstance(self.output_dir, str) or not self.output_dir:
            raise ConfigError("output_dir", "must be a nonempty path")

    def effective_grid(self):
        return [t for t in self.sample_grid if t <= self.n_samples]

    def kernel(self, dim):
        return IsotropicGaussianKernel(self.sigma_k, dim)


def load_config(path=None, overrides=None):
    """Defaults, then the JSON file at ``path``, then ``overrides``."""
    data = {}
    if path is not None:
        raw = read_json(path)
        if not isinstance(raw, dict):
            raise ConfigError("<file>", "config file must hold a JSON object")
        data.update(raw)
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentConfig.from_dict(data)


# paths and seeds

def mixture_stem(dim, index):
    return f"d{dim:02d}_m{index:02d}"


def mixture_path(cfg, dim, index):
    return Path(cfg.output_dir) / "mixtures" / f"{mixture_stem(dim, index)}.json"


def trace_path(cfg, stem, method, suffix, rep=None):
    name = f"{stem}_{method}" if rep is None else f"{stem}_{method}_r{rep:02d}"
    return Path(cfg.output_dir) / "traces" / f"{name}.{suffix}"


def mixture_seed(cfg, dim, index):
    return [cfg.seed, dim, index]


def rnd_seed(cfg, dim, index, rep):
    return [cfg.seed, dim, index, rep, 1]


def _write_resolved(cfg):
    write_json(Path(cfg.output_dir) / "config.json", cfg.to_dict())


def _load_mixture(path):
    return GaussianMixture.from_dict(read_json(path))


def _parse_stem(path):
    """(dim, index) from a generated file name; (None, 0) for other names."""
    try:
        dim, index = Path(path).stem.split("_")[:2]
        return int(dim[1:]), int(index[1:])
    except ValueError:
        return None, 0


# commands

def cmd_generate(cfg):
    """Write ``n_mixtures`` random mixtures for every dimension in ``dims``."""
    paths = []
    for dim in cfg.dims:
        for index in range(cfg.n_mixtures):
            gm = random_mixture(mixture_seed(cfg, dim, index), dim, cfg.n_components, cfg.mixture_gen)
            path = mixture_path(cfg, dim, index)
            write_json(path, gm.to_dict())
            paths.append(path)
    _write_resolved(cfg)
    return paths


def run_sampler(gm, cfg, method, T, seed=None):
    """Run one sampler; returns a HerdingTrace (kh, chg) or a sample array (rnd)."""
    kern = cfg.kernel(gm.dim)
    if method == "kh":
        return kernel_herding(gm, kern, T, cfg.optim)
    if method == "chg":
        init = kernel_herding(gm, kern, 1, cfg.optim).samples[0]
        return continuous_herded_gibbs(gm, kern, T, init, cfg.optim)
    if method == "rnd":
        return sample_random(gm, seed, T)
    raise ConfigError("methods", f"unknown method {method!r}")


def _sample_task(args):
    cfg, path, method, T = args
    gm = _load_mixture(path)
    stem = Path(path).stem
    written = []
    if method == "rnd":
        dim, index = _parse_stem(path)
        dim = gm.dim if dim is None else dim
        for rep in range(cfg.rnd_repeats):
            X = sample_random(gm, rnd_seed(cfg, dim, index, rep), T)
            out = trace_path(cfg, stem, "rnd", "csv", rep)
            write_csv(out, *samples_csv_rows(X))
            written.append(out)
        return written
    trace = run_sampler(gm, cfg, method, T)
    out_json = trace_path(cfg, stem, method, "json")
    write_json(out_json, trace.to_dict())
    out_csv = trace_path(cfg, stem, method, "csv")
    write_csv(out_csv, *trace.csv_rows())
    return [out_json, out_csv]


def _run_tasks(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def _mixture_files(cfg):
    files = [mixture_path(cfg, dim, index) for dim in cfg.dims for index in range(cfg.n_mixtures)]
    missing = [str(p) for p in files if not p.exists()]
    if missing:
        raise FileNotFoundError(f"missing mixture files (run 'generate' first): {', '.join(missing)}")
    return files


def cmd_sample(cfg, mixture=None, method=None, T=None):
    """Sample every (mixture, method) pair, or just the given file and/or method."""
    T = cfg.n_samples if T is None else int(T)
    if method is not None and method not in METHODS:
        raise ConfigError("method", f"must be one of {list(METHODS)}")
    files = [Path(mixture)] if mixture is not None else _mixture_files(cfg)
    for f in files:
        if not f.exists():
            raise FileNotFoundError(f"mixture file not found: {f}")
    methods = [method] if method is not None else cfg.methods
    tasks = [(cfg, f, m, T) for f in files for m in methods]
    written = []
    for paths in _run_tasks(_sample_task, tasks, cfg.jobs):
        written.extend(paths)
    _write_resolved(cfg)
    return written


def _read_samples_csv(path):
    _, rows = read_csv(path)
    return np.array([[float(v) for v in row[1:]] for row in rows], dtype=float)


def _trace_sets(cfg, stem):
    """Sample sets per method for one mixture, read from trace CSV files."""
    sets, missing = {}, []
    for method in cfg.methods:
        if method == "rnd":
            keyed = [(f"{stem}/rnd/r{rep:02d}", trace_path(cfg, stem, "rnd", "csv", rep))
                     for rep in range(cfg.rnd_repeats)]
        else:
            keyed = [(f"{stem}/{method}", trace_path(cfg, stem, method, "csv"))]
        absent = [key for key, p in keyed if not p.exists()]
        if absent:
            missing.extend(absent)
            continue
        arrays = [_read_samples_csv(p) for _, p in keyed]
        sets[method] = arrays if method == "rnd" else arrays[0]
    return sets, missing


def _evaluate_task(args):
    cfg, path = args
    gm = _load_mixture(path)
    sets, _ = _trace_sets(cfg, Path(path).stem)
    grid = cfg.effective_grid()
    for method, arrays in sets.items():
        n = min(len(a) for a in arrays) if isinstance(arrays, list) else len(arrays)
        if n < grid[-1]:
            raise ContractViolation(f"trace {Path(path).stem}/{method} has {n} samples, grid needs {grid[-1]}")
    return error_curves(gm, cfg.kernel(gm.dim), sets, grid)


def cmd_evaluate(cfg):
    """Error curves per mixture and averaged per dimension, from trace files only."""
    files = _mixture_files(cfg)
    missing = []
    for f in files:
        missing.extend(_trace_sets(cfg, f.stem)[1])
    if missing:
        raise FileNotFoundError(f"missing traces: {', '.join(missing)}")
    curves = _run_tasks(_evaluate_task, [(cfg, f) for f in files], cfg.jobs)
    written = []
    curves_dir = Path(cfg.output_dir) / "curves"
    for f, c in zip(files, curves):
        out = curves_dir / f"{f.stem}.csv"
        write_curves_csv(out, c)
        written.append(out)
    for dim in cfg.dims:
        per_dim = [c for f, c in zip(files, curves) if _parse_stem(f)[0] == dim]
        out = curves_dir / f"d{dim:02d}_mean.csv"
        write_curves_csv(out, average_curves(per_dim))
        written.append(out)
    _write_resolved(cfg)
    return written


def _bench_task(args):
    cfg, dim, index, method, T = args
    gm = random_mixture(mixture_seed(cfg, dim, index), dim, cfg.n_components, cfg.mixture_gen)
    trace = run_sampler(gm, cfg, method, T)
    # the CHG initial state is copied from kernel herding, not computed
    steps = trace.per_step[1:] if method == "chg" else trace.per_step
    return float(np.mean([s.wall_time for s in steps]))


def cmd_bench(cfg, dims=None, T=None):
    """Average per-sample wall time for each herding method and dimension."""
    dims = list(cfg.bench_dims if dims is None else dims)
    T = cfg.bench_samples if T is None else int(T)
    if not dims:
        raise ConfigError("bench_dims", "must be nonempty")
    if T < 2:
        raise ConfigError("bench_samples", "must be >= 2")
    methods = [m for m in cfg.methods if m in ("kh", "chg")]
    if not methods:
        raise ConfigError("methods", "bench needs 'kh' or 'chg'")
    rows = []
    for method in methods:
        for dim in dims:
            tasks = [(cfg, dim, index, method, T) for index in range(cfg.n_mixtures)]
            times = _run_tasks(_bench_task, tasks, cfg.jobs)
            rows.append([method, str(dim), float(np.mean(times))])
            log.info("bench %s d=%d: %.4g s/sample", method, dim, rows[-1][2])
    out = Path(cfg.output_dir) / "bench.csv"
    write_csv(out, ["method", "dim", "avg_seconds_per_sample"], rows)
    _write_resolved(cfg)
    return out


def cmd_all(cfg):
    return cmd_generate(cfg) + cmd_sample(cfg) + cmd_evaluate(cfg)


# argument parsing

def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--sigma-k", type=float, dest="sigma_k")
    common.add_argument("--dims", type=_int_list, help="comma-separated dimensions")
    common.add_argument("--samples", type=int, help="samples per run")
    common.add_argument("--methods", type=_str_list, help="comma-separated subset of kh,chg,rnd")
    common.add_argument("--n-mixtures", type=int, dest="n_mixtures")
    common.add_argument("--rnd-repeats", type=int, dest="rnd_repeats")
    common.add_argument("--out", dest="output_dir", help="output directory")
    common.add_argument("--jobs", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="herdgibbs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write random target mixtures")
    p = sub.add_parser("sample", parents=[common], help="run samplers on mixture files")
    p.add_argument("--mixture", help="single mixture file (default: all generated)")
    p.add_argument("--method", help="single method (default: all configured)")
    sub.add_parser("evaluate", parents=[common], help="compute error curves from traces")
    sub.add_parser("bench", parents=[common], help="time samplers; --dims/--samples set bench dims and T")
    sub.add_parser("all", parents=[common], help="generate, sample and evaluate")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    overrides = {
        "seed": args.seed,
        "sigma_k": args.sigma_k,
        "methods": args.methods,
        "n_mixtures": args.n_mixtures,
        "rnd_repeats": args.rnd_repeats,
        "output_dir": args.output_dir,
        "jobs": args.jobs,
    }
    if args.command == "bench":
        overrides.update(bench_dims=args.dims, bench_samples=args.samples)
    else:
        overrides.update(dims=args.dims, n_samples=args.samples)
    try:
        cfg = load_config(args.config, overrides)
        t0 = time.perf_counter()
        if args.command == "generate":
            written = cmd_generate(cfg)
        elif args.command == "sample":
            written = cmd_sample(cfg, args.mixture, args.method)
        elif args.command == "evaluate":
            written = cmd_evaluate(cfg)
        elif args.command == "bench":
            written = [cmd_bench(cfg)]
        else:
            written = cmd_all(cfg)
        log.info("%s finished in %.1f s", args.command, time.perf_counter() - t0)
        for path in written:
            print(path)
    except (ContractViolation, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
