"""Benchmark orchestration: datasets, (mechanism x epsilon) grids, reports.

A JSON config describes the grid; ``run_experiment`` measures empirical
losses for every cell via seeded Monte Carlo, attaches the closed-form
theory columns, and writes a CSV (primary artifact), a JSON copy, and
loss-versus-epsilon figures next to it.

Seed derivation, so grids reproduce under any parallelism: the stream
for run ``r`` of mechanism ``m`` at privacy level ``eps`` is
``SeedSequence([seed, MECHANISM_IDS[m], float64_bits(eps), r])``; scheme
construction for a cell uses run index ``runs`` (one past the last run).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mechanisms import (
    WSS_CONSTRUCTION_CAP,
    ConstructionFailedError,
    MatrixMechanism,
    WssScheme,
    ocms_new,
    ss_new,
    wss_construct,
)
from .model import (
    EstimationMode,
    PrivacyBudget,
    frequency_vector,
    largest_remainder_composition,
    load_scheme,
    perturbation_matrix,
    validate_ldp,
)
from .oracle import monte_carlo_loss, run_stream
from .theory import l1_from_l2, l2_of_k, l2_star, ocms_mixture_l2, scheme_params

MECHANISM_IDS = {"ss": 0, "ocms": 1, "wss": 2, "matrix-file": 3}

CSV_COLUMNS = [
    "mechanism",
    "epsilon",
    "d",
    "n",
    "runs",
    "l1_emp",
    "l2_emp",
    "l1_theory_int",
    "l2_theory_int",
    "l1_theory_real",
    "l2_theory_real",
    "l2_std",
    "seed",
    "status",
]


@dataclass(frozen=True)
class MechanismSpec:
    """One mechanism entry of a config: a name plus optional file inputs."""

    name: str
    scheme_path: str | None = None  # wss only
    matrix_path: str | None = None  # matrix-file only

    def __post_init__(self) -> None:
        if self.name not in MECHANISM_IDS:
            raise ValueError(
                f"unknown mechanism {self.name!r}; expected one of {sorted(MECHANISM_IDS)}"
            )
        if self.name == "matrix-file" and not self.matrix_path:
            raise ValueError("matrix-file mechanism needs a 'path' to the matrix")


@dataclass(frozen=True)
class DatasetSpec:
    kind: str  # zipf | uniform | file
    exponent: float = 2.0
    path: str | None = None
    max_objects: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("zipf", "uniform", "file"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ValueError("file dataset needs a 'path'")


@dataclass(frozen=True)
class ExperimentConfig:
    mechanisms: tuple[MechanismSpec, ...]
    d: int
    epsilons: tuple[float, ...]
    n: int
    runs: int
    seed: int
    mode: EstimationMode = EstimationMode.FREQUENCY
    dataset: DatasetSpec = DatasetSpec("uniform")
    output: str = "ldpfreq_results.csv"
    figures: bool = True

    def __post_init__(self) -> None:
        if not self.mechanisms:
            raise ValueError("config lists no mechanisms")
        if not self.epsilons:
            raise ValueError("config lists no epsilon values")
        for eps in self.epsilons:
            PrivacyBudget(eps)  # range check
        if self.runs < 1 or self.n < 1:
            raise ValueError("need runs >= 1 and n >= 1")
        if self.d < 2 and self.dataset.kind != "file":
            raise ValueError("dictionary size must be >= 2")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


def _parse_mechanism(entry) -> MechanismSpec:
    if isinstance(entry, str):
        return MechanismSpec(name=entry)
    if isinstance(entry, dict):
        return MechanismSpec(
            name=entry.get("name", ""),
            scheme_path=entry.get("scheme"),
            matrix_path=entry.get("path"),
        )
    raise ValueError(f"mechanism entry must be a string or object, got {entry!r}")


def _parse_dataset(entry) -> DatasetSpec:
    if entry is None:
        return DatasetSpec("uniform")
    if isinstance(entry, str):
        return DatasetSpec(kind=entry)
    if isinstance(entry, dict):
        return DatasetSpec(
            kind=entry.get("name", ""),
            exponent=float(entry.get("exponent", 2.0)),
            path=entry.get("path"),
            max_objects=entry.get("max_objects"),
        )
    raise ValueError(f"dataset entry must be a string or object, got {entry!r}")


def config_from_dict(payload: dict) -> ExperimentConfig:
    """Build a config from the JSON schema (field names match 1:1)."""
    known = {
        "mechanisms", "d", "epsilons", "n", "runs", "seed",
        "mode", "dataset", "output", "figures",
    }
    unknown = set(payload) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    mode_name = str(payload.get("mode", "frequency")).upper()
    try:
        mode = EstimationMode[mode_name]
    except KeyError:
        raise ValueError(f"mode must be 'frequency' or 'distribution', got {mode_name!r}")
    dataset = _parse_dataset(payload.get("dataset"))
    return ExperimentConfig(
        mechanisms=tuple(_parse_mechanism(m) for m in payload.get("mechanisms", [])),
        d=int(payload.get("d", 0)),
        epsilons=tuple(float(e) for e in payload.get("epsilons", [])),
        n=int(payload.get("n", 1)),
        runs=int(payload.get("runs", 1)),
        seed=int(payload.get("seed", 0)),
        mode=mode,
        dataset=dataset,
        output=str(payload.get("output", "ldpfreq_results.csv")),
        figures=bool(payload.get("figures", True)),
    )


def config_from_file(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def zipf_distribution(d: int, exponent: float = 2.0) -> np.ndarray:
    """Power-law frequencies: value ``x`` gets weight ``1/(x+1)^exponent``."""
    if d < 1:
        raise ValueError(f"dictionary size must be >= 1, got {d}")
    w = (np.arange(1, d + 1, dtype=np.float64)) ** (-float(exponent))
    return frequency_vector(w / w.sum())


def uniform_distribution(d: int) -> np.ndarray:
    if d < 1:
        raise ValueError(f"dictionary size must be >= 1, got {d}")
    return frequency_vector(np.full(d, 1.0 / d))


def sample_dataset(
    dist, n: int, rng: np.random.Generator, mode: EstimationMode
) -> tuple[np.ndarray, np.ndarray]:
    """Draw a dataset and the truth it should be scored against.

    Distribution mode: ``n`` i.i.d. draws, truth is ``dist`` itself.
    Frequency mode: the deterministic largest-remainder composition of
    ``n * dist`` (rng unused), truth is that composition over ``n``.
    """
    dist = frequency_vector(dist)
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if mode is EstimationMode.DISTRIBUTION:
        return rng.choice(dist.size, size=n, p=dist), dist
    comp = largest_remainder_composition(dist, n)
    return np.repeat(np.arange(dist.size), comp), comp / n


def ingest_transactions(path, max_objects: int | None = None) -> tuple[np.ndarray, int]:
    """Read one object per whitespace token, compacting ids densely.

    Raw ids map to ``[0, d)`` in first-appearance order.  ``max_objects``
    truncates the object list (not the dictionary).  Returns the object
    array and the dictionary size.
    """
    ids: dict[int, int] = {}
    values: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            for token in line.split():
                try:
                    raw = int(token)
                    if raw < 0:
                        raise ValueError
                except ValueError:
                    raise ValueError(
                        f"{path}: line {line_no}: unparsable token {token!r}"
                    ) from None
                if raw not in ids:
                    ids[raw] = len(ids)
                values.append(ids[raw])
                if max_objects is not None and len(values) >= max_objects:
                    return np.asarray(values, dtype=np.int64), len(ids)
    if not values:
        raise ValueError(f"{path}: no objects found")
    return np.asarray(values, dtype=np.int64), len(ids)


def load_matrix_file(path) -> np.ndarray:
    """Read a column-stochastic matrix from delimited text (',' or spaces)."""
    with open(path, encoding="utf-8") as fh:
        head = fh.readline()
    delimiter = "," if "," in head else None
    raw = np.loadtxt(path, delimiter=delimiter, ndmin=2)
    return perturbation_matrix(raw)


@dataclass(frozen=True)
class LossRow:
    mechanism: str
    epsilon: float
    d: int
    n: int
    runs: int
    l1_emp: float | None
    l2_emp: float | None
    l1_theory_int: float
    l2_theory_int: float
    l1_theory_real: float
    l2_theory_real: float
    l2_std: float | None
    seed: int
    status: str = "ok"

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in CSV_COLUMNS}


@dataclass(frozen=True)
class LossReport:
    rows: tuple[LossRow, ...]
    csv_path: str | None = None
    json_path: str | None = None
    figure_paths: tuple[str, ...] = ()


def _float_bits(value: float) -> int:
    """Stable integer id of a float (its IEEE-754 bit pattern)."""
    return int(np.float64(value).view(np.uint64))


def _resolve_dataset(config: ExperimentConfig) -> tuple[np.ndarray, int]:
    """Truth vector and sample size implied by the configured dataset.

    File datasets override both ``d`` and ``n``: every token is one
    object and the truth is the file's empirical distribution.
    """
    ds = config.dataset
    if ds.kind == "zipf":
        return zipf_distribution(config.d, ds.exponent), config.n
    if ds.kind == "uniform":
        return uniform_distribution(config.d), config.n
    values, d = ingest_transactions(ds.path, ds.max_objects)
    if d < 2:
        raise ValueError(f"{ds.path}: needs at least 2 distinct objects, found {d}")
    counts = np.bincount(values, minlength=d)
    return frequency_vector(counts / values.size), int(values.size)


def _build_mechanism(spec: MechanismSpec, d: int, budget: PrivacyBudget, rng):
    """Instantiate one grid cell's mechanism; (mechanism, status)."""
    if spec.name == "ss":
        return ss_new(d, budget), "ok"
    if spec.name == "ocms":
        return ocms_new(d, budget), "ok"
    if spec.name == "matrix-file":
        matrix = load_matrix_file(spec.matrix_path)
        if matrix.shape[1] != d:
            return None, f"failed: matrix has {matrix.shape[1]} columns, expected {d}"
        report = validate_ldp(matrix, budget)
        if not report.valid:
            return None, (
                f"failed: matrix ratio {report.worst_ratio:.6g} exceeds "
                f"e^eps {budget.e_eps:.6g}"
            )
        return MatrixMechanism(matrix), "ok"
    # wss: prefer a scheme file whose epsilon matches this cell, else construct
    if spec.scheme_path is not None:
        scheme, k = load_scheme(spec.scheme_path)
        if scheme.d == d and math.isclose(scheme.budget.epsilon, budget.epsilon, rel_tol=1e-12):
            return WssScheme(
                scheme=scheme,
                params=scheme_params(d, scheme.budget, k),
                attempts=0,
                residual=0.0,
            ), "ok"
    if d > WSS_CONSTRUCTION_CAP:
        return None, f"failed: no matching scheme file and d={d} exceeds construction cap {WSS_CONSTRUCTION_CAP}"
    try:
        return wss_construct(d, budget, rng=rng), "ok"
    except (ConstructionFailedError, ValueError) as exc:
        return None, f"failed: {exc}"


def _theory_columns(spec: MechanismSpec, mech, d, budget, n, mode):
    """(l1_int, l2_int, l1_real, l2_real) for one row.

    The integer column is the deployable prediction: the mechanism's own
    closed-form loss at its actual configuration.  The real column is
    the unconstrained optimum (fractional support size), identical for
    all mechanisms at a given (d, eps, n, mode).
    """
    if spec.name == "ocms":
        sketch = mech if mech is not None else ocms_new(d, budget)
        l2_int = ocms_mixture_l2(d, sketch.d_prime, sketch.hash_range, budget, n, mode)
    elif spec.name in ("ss", "wss"):
        k = mech.params.k if mech is not None else None
        if k is None:
            l2_int = l2_star(d, budget, n, mode, integer_k=True)
        else:
            l2_int = l2_of_k(d, budget, n, k, mode)
    else:  # matrix-file: report the optimal bounds to compare against
        l2_int = l2_star(d, budget, n, mode, integer_k=True)
    l2_real = l2_star(d, budget, n, mode, integer_k=False)
    return l1_from_l2(l2_int, d), l2_int, l1_from_l2(l2_real, d), l2_real


def run_experiment(config: ExperimentConfig) -> LossReport:
    """Measure every (mechanism, epsilon) cell and write the reports.

    Every configured cell yields exactly one row; construction or
    validation failures are recorded in the row's status and leave the
    empirical columns empty while the theory columns stay filled.
    """
    truth, n = _resolve_dataset(config)
    d = truth.size
    rows = []
    for spec in config.mechanisms:
        mech_id = MECHANISM_IDS[spec.name]
        for eps in config.epsilons:
            budget = PrivacyBudget(eps)
            cell_seed = (config.seed, mech_id, _float_bits(eps))
            mech, status = _build_mechanism(
                spec, d, budget, run_stream(cell_seed, config.runs)
            )
            l1_int, l2_int, l1_real, l2_real = _theory_columns(
                spec, mech, d, budget, n, config.mode
            )
            if mech is None:
                rows.append(
                    LossRow(
                        mechanism=spec.name, epsilon=eps, d=d, n=n, runs=config.runs,
                        l1_emp=None, l2_emp=None,
                        l1_theory_int=l1_int, l2_theory_int=l2_int,
                        l1_theory_real=l1_real, l2_theory_real=l2_real,
                        l2_std=None, seed=config.seed, status=status,
                    )
                )
                continue
            mc = monte_carlo_loss(
                mech, truth, n, config.runs, cell_seed, config.mode
            )
            rows.append(
                LossRow(
                    mechanism=spec.name, epsilon=eps, d=d, n=n, runs=config.runs,
                    l1_emp=mc.mean_l1, l2_emp=mc.mean_l2,
                    l1_theory_int=l1_int, l2_theory_int=l2_int,
                    l1_theory_real=l1_real, l2_theory_real=l2_real,
                    l2_std=mc.std_l2, seed=config.seed, status=status,
                )
            )
    rows.sort(key=lambda r: (r.mechanism, r.epsilon))

    csv_path = Path(config.output)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(rows, csv_path)
    json_path = csv_path.with_suffix(".json")
    write_json(rows, config, json_path)
    figure_paths = ()
    if config.figures:
        from .figures import render_loss_figures

        figure_paths = tuple(render_loss_figures(rows, csv_path.with_suffix("")))
    return LossReport(
        rows=tuple(rows),
        csv_path=str(csv_path),
        json_path=str(json_path),
        figure_paths=figure_paths,
    )


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(rows, path) -> None:
    """UTF-8, LF, header row, '.' decimal; shortest-roundtrip floats."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_cell(getattr(row, name)) for name in CSV_COLUMNS])


def write_json(rows, config: ExperimentConfig, path) -> None:
    payload = {
        "config": {
            "mechanisms": [
                {k: v for k, v in (
                    ("name", s.name), ("scheme", s.scheme_path), ("path", s.matrix_path)
                ) if v is not None}
                for s in config.mechanisms
            ],
            "d": config.d,
            "epsilons": list(config.epsilons),
            "n": config.n,
            "runs": config.runs,
            "seed": config.seed,
            "mode": config.mode.name.lower(),
            "dataset": {k: v for k, v in (
                ("name", config.dataset.kind),
                ("exponent", config.dataset.exponent if config.dataset.kind == "zipf" else None),
                ("path", config.dataset.path),
                ("max_objects", config.dataset.max_objects),
            ) if v is not None},
            "output": config.output,
            "figures": config.figures,
        },
        "rows": [row.to_dict() for row in rows],
    }
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")