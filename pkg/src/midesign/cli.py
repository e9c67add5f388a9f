"""Configuration-driven experiment runner.

Subcommands: train | bo | posterior | reference-mi | validate | grid-search.
Config files are flat ``key = value`` text with dotted section names; unknown
keys are errors. All outputs are UTF-8 comma-separated files with LF line
endings and a mandatory header row, written atomically (temp file + rename),
plus one JSON manifest per run.

Exit codes: 0 success, 2 unknown model, 3 malformed config, 4 missing
snapshot/input file, 1 any other failure.

numpy and the numeric submodules are imported lazily so that --threads (or
the MIDESIGN_THREADS environment variable) can pin the BLAS thread count
before numpy loads.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import tempfile
import time

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNKNOWN_MODEL = 2
EXIT_BAD_CONFIG = 3
EXIT_MISSING_SNAPSHOT = 4

MODEL_NAMES = ("linear", "gaussian-linear", "pk", "oscillatory")

# key -> (type tag, default or None). Types: int, float, str, floats (comma
# list), ints (comma list), variants (whitespace-separated comma lists).
CONFIG_SCHEMA = {
    "model": ("str", None),
    "seed": ("int", 0),
    "out": ("str", "out"),
    "theta_true": ("floats", None),
    "design.dim": ("int", 1),
    "design.lower": ("float", None),
    "design.upper": ("float", None),
    "design.init": ("str_or_floats", "uniform"),
    "prior.mean": ("floats", None),
    "prior.std": ("floats", None),
    "prior.omega_min": ("float", 0.0),
    "prior.omega_max": ("float", math.pi),
    "noise.std": ("float", 1.0),
    "network.hidden": ("ints", (100,)),
    "network.seed": ("int", None),
    "train.epochs": ("int", 1000),
    "train.batch_size": ("int", 30000),
    "train.lr_psi": ("float", 1e-4),
    "train.lr_design": ("float", 1e-2),
    "train.lr_multiplier": ("float", 1.0),
    "train.lr_period": ("int", 5000),
    "train.window": ("int", 100),
    "bo.initial_probes": ("int", 5),
    "bo.budget": ("int", 25),
    "bo.restarts": ("int", 32),
    "bo.validation_sets": ("int", 3),
    "nested_mc.outer": ("int", 5000),
    "nested_mc.inner": ("int", 500),
    "nested_mc.kde_samples": ("int", 50000),
    "reference.design": ("floats", None),
    "posterior.n_samples": ("int", 10000),
    "posterior.prior_samples": ("int", 50000),
    "posterior.y_star": ("floats", None),
    "validate.n_sets": ("int", 10),
    "validate.set_size": ("int", None),
    "grid.hidden": ("variants", None),
    "grid.lr_multiplier": ("variants", None),
}


class ConfigError(Exception):
    pass


def _parse_value(key: str, raw: str):
    kind, _ = CONFIG_SCHEMA[key]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "str":
            return raw
        if kind == "floats":
            return tuple(float(v) for v in raw.split(","))
        if kind == "ints":
            return tuple(int(v) for v in raw.split(","))
        if kind == "str_or_floats":
            try:
                return tuple(float(v) for v in raw.split(","))
            except ValueError:
                return raw
        if kind == "variants":
            return tuple(tuple(float(v) if "." in v else int(v) for v in part.split(","))
                         for part in raw.split())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from exc
    raise ConfigError(f"unhandled kind {kind!r} for key {key!r}")


def parse_config_text(text: str) -> dict:
    """Parse flat key = value lines; unknown keys fail fast."""
    cfg = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in cfg:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        cfg[key] = _parse_value(key, raw)
    for key, (_, default) in CONFIG_SCHEMA.items():
        cfg.setdefault(key, default)
    return cfg


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# deterministic derived RNG streams


def rng_for(seed: int, tag: str):
    import numpy as np

    digest = hashlib.sha256(f"{seed}|{tag}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def build_model(cfg: dict):
    """Instantiate the configured simulator model."""
    from . import models

    name = cfg["model"]
    dim = cfg["design.dim"]
    domain = None
    if cfg["design.lower"] is not None or cfg["design.upper"] is not None:
        if cfg["design.lower"] is None or cfg["design.upper"] is None:
            raise ConfigError("design.lower and design.upper must be set together")
        domain = (cfg["design.lower"], cfg["design.upper"])
    if name == "linear":
        kwargs = {}
        if cfg["prior.mean"] is not None:
            kwargs["prior_mean"] = cfg["prior.mean"]
        if cfg["prior.std"] is not None:
            kwargs["prior_std"] = cfg["prior.std"]
        if domain:
            kwargs["domain"] = domain
        return models.make_linear_model(dim, **kwargs)
    if name == "gaussian-linear":
        kwargs = {"noise_std": cfg["noise.std"]}
        if cfg["prior.mean"] is not None:
            kwargs["prior_mean"] = cfg["prior.mean"]
        if cfg["prior.std"] is not None:
            kwargs["prior_std"] = cfg["prior.std"]
        if domain:
            kwargs["domain"] = domain
        return models.make_gaussian_linear_model(dim, **kwargs)
    if name == "pk":
        return models.make_pk_model(dim, domain=domain or (0.0, 24.0))
    if name == "oscillatory":
        if dim != 1:
            raise ConfigError("the oscillatory model is one-dimensional")
        return models.make_oscillatory_model(
            domain=domain or (0.0, 4.0 * math.pi),
            prior_low=cfg["prior.omega_min"],
            prior_high=cfg["prior.omega_max"],
        )
    raise ConfigError(f"unreachable model {name!r}")


def build_network_config(cfg: dict, model):
    from .nn import NetworkConfig

    seed = cfg["network.seed"]
    if seed is None:
        seed = cfg["seed"] + 1
    return NetworkConfig(
        input_dim_theta=model.theta_dim,
        input_dim_y=model.data_dim,
        hidden_layer_sizes=tuple(cfg["network.hidden"]),
        seed=seed,
    )


def build_train_config(cfg: dict):
    from .nn import LrSchedule
    from .trainer import TrainConfig

    init = cfg["design.init"]
    if isinstance(init, str):
        if init != "uniform":
            raise ConfigError(f"design.init must be 'uniform' or a comma list, got {init!r}")
        init = None
    return TrainConfig(
        epochs=cfg["train.epochs"],
        batch_size=cfg["train.batch_size"],
        lr_psi=LrSchedule(cfg["train.lr_psi"], cfg["train.lr_multiplier"], cfg["train.lr_period"]),
        lr_design=LrSchedule(cfg["train.lr_design"], cfg["train.lr_multiplier"], cfg["train.lr_period"]),
        seed=cfg["seed"],
        design_init=init,
        moving_average_window=cfg["train.window"],
    )


# ---------------------------------------------------------------------------
# file I/O


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def write_csv_atomic(path: str, header: list[str], rows) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_csv(path: str) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="utf-8", newline="\n") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if not lines:
        raise ConfigError(f"{path}: empty CSV (missing header)")
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


def read_design_csv(path: str):
    import numpy as np

    header, rows = read_csv(path)
    if len(rows) != 1 or not all(h.startswith("d_") for h in header):
        raise ConfigError(f"{path}: expected a single design row with d_* columns")
    return np.array([float(v) for v in rows[0]])


def save_network(net, path: str) -> None:
    import numpy as np

    arrays = {
        "dim_theta": np.array(net.config.input_dim_theta),
        "dim_y": np.array(net.config.input_dim_y),
        "hidden": np.array(net.config.hidden_layer_sizes),
        "seed": np.array(net.config.seed),
    }
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    os.close(fd)
    try:
        with open(tmp, "wb") as fh:
            np.savez(fh, **arrays)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_network(path: str):
    import numpy as np

    from .nn import Network, NetworkConfig

    with np.load(path) as data:
        config = NetworkConfig(
            input_dim_theta=int(data["dim_theta"]),
            input_dim_y=int(data["dim_y"]),
            hidden_layer_sizes=tuple(int(h) for h in data["hidden"]),
            seed=int(data["seed"]),
        )
        n_layers = len(config.hidden_layer_sizes) + 1
        weights = [data[f"w{i}"] for i in range(n_layers)]
        biases = [data[f"b{i}"] for i in range(n_layers)]
    return Network(weights, biases, config)


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class RunWriter:
    """Collects output files for one run and writes the manifest once."""

    def __init__(self, command: str, cfg: dict, out_dir: str, threads: int | None):
        self.command = command
        self.cfg = cfg
        self.out_dir = out_dir
        self.threads = threads
        self.files: list[str] = []
        self.start = time.monotonic()
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name: str) -> str:
        full = os.path.join(self.out_dir, name)
        self.files.append(full)
        return full

    def write_manifest(self) -> str:
        manifest = {
            "command": self.command,
            "config": {k: list(v) if isinstance(v, tuple) else v for k, v in self.cfg.items()},
            "seed": self.cfg["seed"],
            "threads": self.threads,
            "duration_sec": time.monotonic() - self.start,
            "outputs": {os.path.basename(p): _sha256(p) for p in self.files},
        }
        path = os.path.join(self.out_dir, f"manifest-{self.command}.json")
        fd, tmp = tempfile.mkstemp(dir=self.out_dir, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
        return path


def simulate_observation(model, theta_true, d, seed: int):
    """Synthetic observed data at the chosen design and true parameters."""
    import numpy as np

    theta = np.asarray(theta_true, dtype=np.float64)
    if theta.shape != (model.theta_dim,):
        raise ConfigError(f"theta_true has shape {theta.shape}, expected ({model.theta_dim},)")
    draw = model.draw_noise(rng_for(seed, "observation"), 1)
    return model.sample_path(draw, theta[None, :], np.asarray(d, dtype=np.float64))[0]


# ---------------------------------------------------------------------------
# subcommands


def _design_header(dim: int) -> list[str]:
    return [f"d_{i}" for i in range(dim)]


def cmd_train(cfg: dict, out_dir: str, threads) -> int:
    from .trainer import train_joint

    model = build_model(cfg)
    netcfg = build_network_config(cfg, model)
    traincfg = build_train_config(cfg)
    writer = RunWriter("train", cfg, out_dir, threads)
    result = train_joint(model, netcfg, traincfg)
    trace = result.trace
    write_csv_atomic(
        writer.path("trace.csv"),
        ["epoch", "mi_raw", "mi_smoothed", *_design_header(model.design_dim)],
        (
            [int(trace.epoch[i]), float(trace.bound[i]), float(trace.bound_smoothed[i]),
             *map(float, trace.designs[i])]
            for i in range(len(trace))
        ),
    )
    write_csv_atomic(
        writer.path("design.csv"),
        _design_header(model.design_dim),
        [[float(v) for v in result.design]],
    )
    save_network(result.network, writer.path("network.npz"))
    writer.write_manifest()
    logger.info(
        "train: final design %s, final smoothed bound %s, warnings %s",
        result.design.tolist(),
        float(trace.bound_smoothed[-1]) if len(trace) else math.nan,
        result.warnings,
    )
    return EXIT_OK


def cmd_bo(cfg: dict, out_dir: str, threads) -> int:
    from .bo import BoConfig, GpFitConfig, bo_optimize

    model = build_model(cfg)
    netcfg = build_network_config(cfg, model)
    traincfg = build_train_config(cfg)
    bocfg = BoConfig(
        initial_probe_count=cfg["bo.initial_probes"],
        budget=cfg["bo.budget"],
        train=traincfg,
        network=netcfg,
        acquisition_restarts=cfg["bo.restarts"],
        n_validation_sets=cfg["bo.validation_sets"],
        seed=cfg["seed"],
        gp_fit=GpFitConfig(seed=cfg["seed"]),
    )
    writer = RunWriter("bo", cfg, out_dir, threads)
    result = bo_optimize(model, bocfg)
    write_csv_atomic(
        writer.path("probes.csv"),
        ["probe", *_design_header(model.design_dim), "objective"],
        (
            [i, *map(float, result.probe_designs[i]), float(result.objectives[i])]
            for i in range(result.probe_designs.shape[0])
        ),
    )
    gp_summary = {
        "incumbent_index": result.incumbent_index,
        "incumbent_objective": result.objective,
        "signal_var": result.gp.hyper.signal_var if result.gp else None,
        "lengthscale": result.gp.hyper.lengthscale.tolist() if result.gp else None,
        "noise_var": result.gp.hyper.noise_var if result.gp else None,
        "jitter": result.gp.jitter if result.gp else None,
    }
    gp_path = writer.path("gp_summary.json")
    with open(gp_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(gp_summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_csv_atomic(
        writer.path("design.csv"),
        _design_header(model.design_dim),
        [[float(v) for v in result.design]],
    )
    best_train = result.train_results[result.incumbent_index]
    if best_train is not None:
        save_network(best_train.network, writer.path("network.npz"))
    writer.write_manifest()
    logger.info("bo: incumbent %s objective %.6g", result.design.tolist(), result.objective)
    return EXIT_OK


def _load_snapshot_and_design(cfg: dict, out_dir: str, network_path, design_path):
    network_path = network_path or os.path.join(out_dir, "network.npz")
    design_path = design_path or os.path.join(out_dir, "design.csv")
    if not os.path.exists(network_path):
        raise FileNotFoundError(network_path)
    if not os.path.exists(design_path):
        raise FileNotFoundError(design_path)
    return load_network(network_path), read_design_csv(design_path)


def cmd_posterior(cfg: dict, out_dir: str, threads, network_path=None, design_path=None) -> int:
    import numpy as np

    from .posterior import posterior_sample, summarize

    model = build_model(cfg)
    net, design = _load_snapshot_and_design(cfg, out_dir, network_path, design_path)
    if cfg["posterior.y_star"] is not None:
        y_star = np.asarray(cfg["posterior.y_star"], dtype=np.float64)
        if y_star.shape != (model.data_dim,):
            raise ConfigError(f"posterior.y_star has dim {y_star.shape[0]}, expected {model.data_dim}")
    else:
        if cfg["theta_true"] is None:
            raise ConfigError("posterior needs either posterior.y_star or theta_true")
        y_star = simulate_observation(model, cfg["theta_true"], design, cfg["seed"])
    writer = RunWriter("posterior", cfg, out_dir, threads)
    prior_samples = model.prior_sampler(rng_for(cfg["seed"], "prior"), cfg["posterior.prior_samples"])
    samples = posterior_sample(
        net, prior_samples, y_star, cfg["posterior.n_samples"], rng_for(cfg["seed"], "resample")
    )
    theta_header = [f"theta_{i}" for i in range(model.theta_dim)]
    write_csv_atomic(
        writer.path("posterior_samples.csv"),
        theta_header,
        ([float(v) for v in row] for row in samples),
    )
    stats = summarize(samples)
    write_csv_atomic(
        writer.path("posterior_summary.csv"),
        ["dimension", "mean", "std", "q16", "q84"],
        (
            [theta_header[i], float(stats.mean[i]), float(stats.std[i]),
             float(stats.q16[i]), float(stats.q84[i])]
            for i in range(model.theta_dim)
        ),
    )
    writer.write_manifest()
    return EXIT_OK


def _reference_likelihood(cfg: dict, model):
    """Per-coordinate log-likelihood for the nested MI estimate, by model."""
    import numpy as np

    from . import reference

    name = model.name
    if name == "pk":
        return lambda y, d, theta: reference.pk_likelihood(y, d, theta, log=True)
    if name == "oscillatory":
        return lambda y, d, theta: reference.oscillatory_likelihood(y, d, theta, log=True)
    if name == "gaussian-linear":
        std = cfg["noise.std"]
        log_norm = -math.log(std) - 0.5 * math.log(2.0 * math.pi)

        def gaussian_log_density(r):
            r = np.asarray(r, dtype=np.float64)
            return log_norm - 0.5 * (r / std) ** 2

        return lambda y, d, theta: reference.linear_likelihood(y, d, theta, gaussian_log_density)
    # noisy linear: KDE of the summed noise, evaluated through a fine log table
    rng = rng_for(cfg["seed"], "kde")
    n = cfg["nested_mc.kde_samples"]
    noise = rng.standard_normal(n) + rng.gamma(2.0, 2.0, size=n)
    log_density = reference.kde_fit(noise).log_tabulated()
    return lambda y, d, theta: reference.linear_likelihood(y, d, theta, log_density)


def cmd_reference(cfg: dict, out_dir: str, threads, design_path=None) -> int:
    import numpy as np

    from .reference import NestedMcConfig, nested_mc_mi

    model = build_model(cfg)
    if cfg["reference.design"] is not None:
        design = np.asarray(cfg["reference.design"], dtype=np.float64)
    else:
        design_path = design_path or os.path.join(out_dir, "design.csv")
        if not os.path.exists(design_path):
            raise FileNotFoundError(design_path)
        design = read_design_csv(design_path)
    if design.shape != (model.design_dim,):
        raise ConfigError(f"reference design has dim {design.shape[0]}, expected {model.design_dim}")
    writer = RunWriter("reference-mi", cfg, out_dir, threads)
    likelihood = _reference_likelihood(cfg, model)
    mccfg = NestedMcConfig(
        n_outer=cfg["nested_mc.outer"],
        n_inner=cfg["nested_mc.inner"],
        seed=cfg["seed"],
    )

    def simulate(theta, d, rng):
        return model.sample_path(model.draw_noise(rng, theta.shape[0]), theta, d)

    value = nested_mc_mi(likelihood, model.prior_sampler, simulate, design, mccfg, log_domain=True)
    write_csv_atomic(
        writer.path("reference_mi.csv"),
        ["value", "n_outer", "n_inner", *_design_header(model.design_dim)],
        [[value, mccfg.n_outer, mccfg.n_inner, *map(float, design)]],
    )
    writer.write_manifest()
    logger.info("reference-mi: %.6g at %s", value, design.tolist())
    return EXIT_OK


def cmd_validate(cfg: dict, out_dir: str, threads, network_path=None, design_path=None) -> int:
    from .trainer import validation_score

    model = build_model(cfg)
    net, design = _load_snapshot_and_design(cfg, out_dir, network_path, design_path)
    writer = RunWriter("validate", cfg, out_dir, threads)
    n_sets = cfg["validate.n_sets"]
    set_size = cfg["validate.set_size"] or cfg["train.batch_size"]
    mean, std = validation_score(
        net, model, design, n_sets=n_sets, set_size=set_size, rng=rng_for(cfg["seed"], "validate")
    )
    write_csv_atomic(
        writer.path("validation.csv"),
        ["mean", "std", "n_sets", "set_size"],
        [[mean, std, n_sets, set_size]],
    )
    writer.write_manifest()
    logger.info("validate: %.6g +- %.6g over %d sets", mean, std, n_sets)
    return EXIT_OK


def cmd_gridsearch(cfg: dict, out_dir: str, threads) -> int:
    from dataclasses import replace

    from .nn import LrSchedule
    from .trainer import grid_search

    model = build_model(cfg)
    netcfg = build_network_config(cfg, model)
    traincfg = build_train_config(cfg)
    hidden_variants = cfg["grid.hidden"] or (tuple(cfg["network.hidden"]),)
    mult_variants = cfg["grid.lr_multiplier"] or ((cfg["train.lr_multiplier"],),)
    candidates = []
    for hidden in hidden_variants:
        for (mult,) in (m if isinstance(m, tuple) else (m,) for m in mult_variants):
            candidates.append(
                (
                    replace(netcfg, hidden_layer_sizes=tuple(int(h) for h in hidden)),
                    replace(
                        traincfg,
                        lr_psi=LrSchedule(traincfg.lr_psi.initial_rate, float(mult), traincfg.lr_psi.period),
                        lr_design=LrSchedule(traincfg.lr_design.initial_rate, float(mult), traincfg.lr_design.period),
                    ),
                )
            )
    writer = RunWriter("grid-search", cfg, out_dir, threads)
    ranked = grid_search(candidates, model, base_seed=cfg["seed"])
    write_csv_atomic(
        writer.path("gridsearch.csv"),
        ["rank", "hidden", "lr_multiplier", "score_mean", "score_std", "error"],
        (
            [
                rank,
                ";".join(str(h) for h in r.network_config.hidden_layer_sizes),
                float(r.train_config.lr_psi.multiplier),
                math.nan if r.score_mean is None else r.score_mean,
                math.nan if r.score_std is None else r.score_std,
                r.error or "",
            ]
            for rank, r in enumerate(ranked, start=1)
        ),
    )
    writer.write_manifest()
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def _set_thread_env(threads: int | None) -> int | None:
    if threads is None:
        env = os.environ.get("MIDESIGN_THREADS")
        threads = int(env) if env else None
    if threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                    "NUMEXPR_NUM_THREADS"):
            os.environ[var] = str(threads)
    return threads


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="midesign",
        description="Experimental-design optimization via a neural MI lower bound.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "bo", "posterior", "reference-mi", "validate", "grid-search"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="flat key = value config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="BLAS thread count (default: MIDESIGN_THREADS)")
        if name in ("posterior", "validate"):
            p.add_argument("--network", default=None, help="network snapshot (.npz)")
        if name in ("posterior", "validate", "reference-mi"):
            p.add_argument("--design", default=None, help="design.csv to evaluate at")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    threads = _set_thread_env(args.threads)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.out is not None:
            cfg["out"] = args.out
        if cfg["model"] is None:
            raise ConfigError("config is missing the required 'model' key")
        if cfg["model"] not in MODEL_NAMES:
            logger.error("unknown model %r (expected one of %s)", cfg["model"], ", ".join(MODEL_NAMES))
            return EXIT_UNKNOWN_MODEL
        out_dir = cfg["out"]
        if args.command == "train":
            return cmd_train(cfg, out_dir, threads)
        if args.command == "bo":
            return cmd_bo(cfg, out_dir, threads)
        if args.command == "posterior":
            return cmd_posterior(cfg, out_dir, threads, args.network, args.design)
        if args.command == "reference-mi":
            return cmd_reference(cfg, out_dir, threads, args.design)
        if args.command == "validate":
            return cmd_validate(cfg, out_dir, threads, args.network, args.design)
        if args.command == "grid-search":
            return cmd_gridsearch(cfg, out_dir, threads)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        logger.error("config error: %s", exc)
        return EXIT_BAD_CONFIG
    except FileNotFoundError as exc:
        logger.error("missing input file: %s", exc)
        return EXIT_MISSING_SNAPSHOT
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        logger.error("%s: %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
