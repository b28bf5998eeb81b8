"""Monte-Carlo benchmark harness.

One experiment draws T2 measurement operators; for each it draws T1
(ground truth, noise) pairs, runs every configured estimator on the
identical (A, X, y) triple, and aggregates the normalized mean-square error

    NMSE = sum_trials ||Xhat - X||_F^2 / sum_trials ||X||_F^2

as a ratio of sums (the per-trial mean of ratios is reported alongside).
Randomness is derived from a single master seed through counter-based
``numpy.random.SeedSequence`` spawn keys, one per (stage, outer, inner)
cell, so results do not depend on execution order or thread count.
Gaussian variates come from ``numpy.random.Generator`` (PCG64) via
``standard_normal``; replays are bit-exact within one numpy build.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .baselines import eps_from_noise, nuclear_min, rvm_fit
from .estimator import EstimatorConfig, fit
from .linalg import NumericalError, vec
from .penalties import LogDetPenalty, SchattenPenalty

SPEC_VERSION = 1
MODES = ("reconstruction", "completion")
SWEEP_PARAMS = ("m_ratio", "smnr_db", "q")

#: a run aborts when any estimator fails on more than this fraction of trials
MAX_EXCLUSION_RATE = 0.05


class SpecError(ValueError):
    """Invalid experiment specification (file, field, or CLI argument)."""


# ---------------------------------------------------------------------------
# specification


@dataclass(frozen=True)
class ExperimentSpec:
    """One Monte-Carlo experiment definition.

    ``m`` may be given as an absolute measurement count or through
    ``m_ratio`` (fraction of p*q); exactly one must be set.
    """

    p: int
    q: int
    r: int
    smnr_db: float
    mode: str = "reconstruction"
    m: int | None = None
    m_ratio: float | None = None
    estimators: tuple = ()
    t1: int = 5
    t2: int = 5
    master_seed: int = 0
    timing: bool = False
    name: str = ""

    def __post_init__(self):
        if self.mode not in MODES:
            raise SpecError(f"mode must be one of {MODES}, got {self.mode!r}")
        if (self.m is None) == (self.m_ratio is None):
            raise SpecError("exactly one of m / m_ratio must be given")
        if not (1 <= self.r <= min(self.p, self.q)):
            raise SpecError(f"need 1 <= r <= min(p, q), got r={self.r}")
        if self.t1 < 1 or self.t2 < 1:
            raise SpecError("t1 and t2 must be >= 1")
        m = self.m_count
        if m < 1:
            raise SpecError(f"m resolves to {m}, must be >= 1")
        if self.mode == "completion" and m > self.p * self.q:
            raise SpecError(f"completion needs m <= p*q, got m={m}")
        if not self.estimators:
            raise SpecError("estimators list is empty")
        for est in self.estimators:
            if est.get("kind") not in ESTIMATOR_KINDS:
                raise SpecError(
                    f"unknown estimator kind {est.get('kind')!r} "
                    f"(known: {ESTIMATOR_KINDS})"
                )

    @property
    def m_count(self) -> int:
        if self.m is not None:
            return int(self.m)
        return int(round(self.m_ratio * self.p * self.q))

    @property
    def n_trials(self) -> int:
        return self.t1 * self.t2


def spec_from_dict(d: dict) -> ExperimentSpec:
    d = dict(d)
    version = d.pop("spec_version", SPEC_VERSION)
    if version != SPEC_VERSION:
        raise SpecError(f"unsupported spec_version {version}")
    d.pop("sweep", None)  # documentation hint, not consumed here
    try:
        spec = ExperimentSpec(
            **{**d, "estimators": tuple(dict(e) for e in d.get("estimators", ()))}
        )
    except TypeError as e:
        raise SpecError(f"bad experiment spec: {e}") from e
    for est in spec.estimators:
        build_estimator(est)  # validate eagerly
    return spec


def load_spec(path) -> ExperimentSpec:
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise SpecError(f"cannot read experiment spec {path}: {e}") from e
    return spec_from_dict(payload)


# ---------------------------------------------------------------------------
# estimator registry

ESTIMATOR_KINDS = ("rsvm", "nuclear", "rvm", "zero", "oracle")


@dataclass(frozen=True)
class TrialOutcome:
    x_hat: np.ndarray
    n_iters: int


def _build_rsvm(spec: dict):
    penalty_name = spec.get("penalty", "schatten")
    epsilon = float(spec.get("epsilon", 1e-6))
    if penalty_name in ("schatten", "sn"):
        penalty = SchattenPenalty(s=float(spec.get("s", 0.5)), epsilon=epsilon)
    elif penalty_name in ("logdet", "ld"):
        nu = spec.get("nu")
        penalty = LogDetPenalty(nu=None if nu is None else float(nu), epsilon=epsilon)
    else:
        raise SpecError(f"unknown rsvm penalty {penalty_name!r}")
    try:
        config = EstimatorConfig(
            penalty=penalty,
            sided=spec.get("sided", "two"),
            noise_rule=spec.get("noise_rule", "trace"),
            a=float(spec.get("a", 1e-6)),
            b=float(spec.get("b", 1e-6)),
            balancing=bool(spec.get("balancing", True)),
            max_iters=int(spec.get("max_iters", 200)),
            tol=float(spec.get("tol", 1e-6)),
        )
    except ValueError as e:
        raise SpecError(str(e)) from e

    def run(a, y, p, q, sigma_n, truth):
        result = fit(a, y, p, q, config)
        return TrialOutcome(result.x_hat, result.trace.n_iters)

    return run


def build_estimator(spec: dict):
    """Turn an estimator spec dict into (name, runner).

    The runner signature is run(a, y, p, q, sigma_n, truth) -> TrialOutcome.
    The true noise level sigma_n is consumed only by the nuclear baseline
    (which requires it); ``truth`` only by the oracle estimator used in
    harness self-tests.
    """
    kind = spec.get("kind")
    if kind not in ESTIMATOR_KINDS:
        raise SpecError(f"unknown estimator kind {kind!r} (known: {ESTIMATOR_KINDS})")
    name = spec.get("name", kind)

    if kind == "rsvm":
        return name, _build_rsvm(spec)
    if kind == "nuclear":
        max_it = int(spec.get("max_fista_iters", 2000))

        def run_nuclear(a, y, p, q, sigma_n, truth):
            res = nuclear_min(
                a, y, p, q, eps_from_noise(sigma_n, a.shape[0]), max_fista_iters=max_it
            )
            return TrialOutcome(res.x_hat, res.n_iters)

        return name, run_nuclear
    if kind == "rvm":

        def run_rvm(a, y, p, q, sigma_n, truth):
            state = rvm_fit(a, y)
            return TrialOutcome(state.x_hat.reshape((p, q), order="F"), state.n_iters)

        return name, run_rvm
    if kind == "zero":

        def run_zero(a, y, p, q, sigma_n, truth):
            return TrialOutcome(np.zeros((p, q)), 0)

        return name, run_zero

    def run_oracle(a, y, p, q, sigma_n, truth):
        return TrialOutcome(truth.copy(), 0)

    return name, run_oracle


# ---------------------------------------------------------------------------
# data generation

_STAGE_A, _STAGE_X, _STAGE_NOISE = 0, 1, 2


def _rng_for(master_seed: int, stage: int, outer: int, inner: int = 0):
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(stage, outer, inner))
    return np.random.Generator(np.random.PCG64(ss))


def gen_measurement(mode: str, m: int, p: int, q: int, rng) -> np.ndarray:
    """Draw the m-by-(p*q) measurement operator.

    reconstruction: iid standard normal entries, then unit-norm columns.
    completion: m distinct canonical basis rows (positions drawn uniformly
    without replacement, so the rows are linearly independent).
    """
    n = p * q
    if mode == "reconstruction":
        a = rng.standard_normal((m, n))
        a /= np.linalg.norm(a, axis=0, keepdims=True)
        return a
    if mode == "completion":
        if m > n:
            raise SpecError(f"completion needs m <= p*q = {n}, got {m}")
        positions = rng.choice(n, size=m, replace=False)
        a = np.zeros((m, n))
        a[np.arange(m), positions] = 1.0
        return a
    raise SpecError(f"unknown measurement mode {mode!r}")


def gen_lowrank(p: int, q: int, r: int, rng) -> np.ndarray:
    """Ground truth X = L R with iid standard normal factors (rank r a.s.)."""
    if not (1 <= r <= min(p, q)):
        raise SpecError(f"need 1 <= r <= min(p, q), got r={r}")
    x = rng.standard_normal((p, r)) @ rng.standard_normal((r, q))
    if r < min(p, q):
        sv = np.linalg.svd(x, compute_uv=False)
        if sv[r] > 1e-10 * sv[0]:
            raise NumericalError(f"generated matrix is not numerically rank {r}")
    return x


def add_noise(clean, smnr_db: float, r: int, p: int, q: int, m: int, rng):
    """Add white Gaussian noise at the prescribed signal-to-noise level.

    The noise variance solves SMNR = r p q / (m sigma_n^2) with SMNR given
    in dB; returns (y, sigma_n).
    """
    if not np.isfinite(smnr_db):
        raise SpecError("smnr_db must be finite")
    sigma2 = r * p * q / (m * 10.0 ** (smnr_db / 10.0))
    sigma_n = float(np.sqrt(sigma2))
    return np.asarray(clean) + sigma_n * rng.standard_normal(m), sigma_n


def _trial_hash(a, x, y) -> str:
    h = hashlib.sha256()
    for arr in (a, x, y):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# running


@dataclass(frozen=True)
class EstimatorResult:
    """Aggregated result of one estimator over all trials of an experiment."""

    name: str
    nmse: float
    nmse_trial_mean: float
    stderr: float
    trials: int
    excluded: int
    mean_iters: float
    mean_seconds: float
    sq_errors: tuple
    signal_powers: tuple


@dataclass(frozen=True)
class ExperimentResult:
    spec: ExperimentSpec
    estimators: tuple

    def by_name(self, name: str) -> EstimatorResult:
        for est in self.estimators:
            if est.name == name:
                return est
        raise KeyError(name)


def _ratio_of_sums_stderr(errors: np.ndarray, signals: np.ndarray) -> float:
    """Delta-method standard error of sum(errors)/sum(signals)."""
    n = len(errors)
    if n < 2:
        return float("nan")
    sbar = signals.mean()
    ratio = errors.sum() / signals.sum()
    centered = (errors - ratio * signals) / sbar
    return float(np.sqrt(centered.var(ddof=1) / n))


def run_experiment(spec: ExperimentSpec, threads: int = 1) -> ExperimentResult:
    """Run the full trial grid; deterministic for a given master seed.

    Trials may execute concurrently (``threads`` > 1); aggregation happens
    afterwards in a fixed (outer, inner) order so the result is identical
    for any thread count. Estimator failures exclude that estimator's trial;
    a failure rate above MAX_EXCLUSION_RATE aborts with NumericalError.
    """
    estimators = [build_estimator(e) for e in spec.estimators]
    names = [name for name, _ in estimators]
    if len(set(names)) != len(names):
        raise SpecError(f"duplicate estimator names: {names}")
    m = spec.m_count
    p, q, r = spec.p, spec.q, spec.r

    def run_cell(outer: int, inner: int):
        a = gen_measurement(
            spec.mode, m, p, q, _rng_for(spec.master_seed, _STAGE_A, outer)
        )
        x = gen_lowrank(p, q, r, _rng_for(spec.master_seed, _STAGE_X, outer, inner))
        y, sigma_n = add_noise(
            a @ vec(x), spec.smnr_db, r, p, q, m,
            _rng_for(spec.master_seed, _STAGE_NOISE, outer, inner),
        )
        reference = _trial_hash(a, x, y)
        signal = float(np.sum(x * x))
        cell = {}
        for name, runner in estimators:
            if _trial_hash(a, x, y) != reference:
                raise NumericalError(
                    f"trial data mutated before estimator {name!r} "
                    f"(outer={outer}, inner={inner})"
                )
            start = time.perf_counter()
            try:
                outcome = runner(a, y, p, q, sigma_n, x)
            except NumericalError as e:
                cell[name] = ("failed", str(e))
                continue
            elapsed = time.perf_counter() - start
            err = float(np.sum((outcome.x_hat - x) ** 2))
            cell[name] = ("ok", err, signal, outcome.n_iters, elapsed)
        return cell

    cells = {}
    grid = [(outer, inner) for outer in range(spec.t2) for inner in range(spec.t1)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for (outer, inner), cell in zip(
                grid, pool.map(lambda oi: run_cell(*oi), grid)
            ):
                cells[(outer, inner)] = cell
    else:
        for outer, inner in grid:
            cells[(outer, inner)] = run_cell(outer, inner)

    results = []
    for name in names:
        errors, signals, iters, seconds = [], [], [], []
        excluded = 0
        for outer, inner in grid:  # fixed order: deterministic float sums
            record = cells[(outer, inner)][name]
            if record[0] == "failed":
                excluded += 1
                continue
            _, err, signal, n_it, elapsed = record
            errors.append(err)
            signals.append(signal)
            iters.append(n_it)
            seconds.append(elapsed)
        if excluded > MAX_EXCLUSION_RATE * spec.n_trials:
            raise NumericalError(
                f"estimator {name!r} failed on {excluded}/{spec.n_trials} trials "
                f"(> {MAX_EXCLUSION_RATE:.0%})"
            )
        errors_arr = np.array(errors)
        signals_arr = np.array(signals)
        results.append(
            EstimatorResult(
                name=name,
                nmse=float(errors_arr.sum() / signals_arr.sum()),
                nmse_trial_mean=float((errors_arr / signals_arr).mean()),
                stderr=_ratio_of_sums_stderr(errors_arr, signals_arr),
                trials=len(errors),
                excluded=excluded,
                mean_iters=float(np.mean(iters)),
                mean_seconds=float(np.mean(seconds)) if spec.timing else 0.0,
                sq_errors=tuple(errors),
                signal_powers=tuple(signals),
            )
        )
    return ExperimentResult(spec=spec, estimators=tuple(results))


# ---------------------------------------------------------------------------
# sweeps and outputs


def derive_point_spec(base: ExperimentSpec, parameter: str, value) -> ExperimentSpec:
    """Spec for one sweep point: parameter applied, fresh derived seed.

    The point seed is a pure function of (master_seed, parameter, value), so
    sweep results are reproducible point by point:
    sweep(base, param, [v])[0] == run_experiment(derive_point_spec(base, param, v)).
    """
    if parameter not in SWEEP_PARAMS:
        raise SpecError(f"sweep parameter must be one of {SWEEP_PARAMS}")
    if parameter == "m_ratio":
        if base.m_ratio is None:
            raise SpecError("sweeping m_ratio requires the base spec to use m_ratio")
        point = replace(base, m_ratio=float(value))
    elif parameter == "smnr_db":
        point = replace(base, smnr_db=float(value))
    else:
        if base.m is not None:
            raise SpecError("sweeping q requires the base spec to use m_ratio")
        point = replace(base, q=int(value))
    digest = hashlib.sha256(
        f"{base.master_seed}:{parameter}:{float(value)!r}".encode()
    ).digest()
    seed = int.from_bytes(digest[:8], "little")
    return replace(point, master_seed=seed, name=f"{base.name or 'sweep'}:{parameter}={value}")


def sweep(
    base: ExperimentSpec, parameter: str, values, threads: int = 1
) -> list[ExperimentResult]:
    """One run_experiment per parameter value with fresh derived seeds."""
    values = list(values)
    if not values:
        raise SpecError("sweep needs at least one value")
    return [
        run_experiment(derive_point_spec(base, parameter, v), threads=threads)
        for v in values
    ]


def write_results_csv(path, results, parameter: str = "", values=None) -> None:
    """results.csv: one row per (estimator, sweep point), stable formatting."""
    if isinstance(results, ExperimentResult):
        results = [results]
    values = list(values) if values is not None else [""] * len(results)
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write(
            "estimator,parameter,value,nmse,stderr,trials,excluded,"
            "mean_iters,mean_seconds,nmse_trial_mean\n"
        )
        for value, result in zip(values, results):
            for est in result.estimators:
                f.write(
                    ",".join(
                        [
                            est.name,
                            parameter,
                            repr(float(value)) if value != "" else "",
                            repr(est.nmse),
                            repr(est.stderr),
                            str(est.trials),
                            str(est.excluded),
                            repr(est.mean_iters),
                            repr(est.mean_seconds),
                            repr(est.nmse_trial_mean),
                        ]
                    )
                    + "\n"
                )


def write_plot_svg(path, results, parameter: str, values) -> None:
    """Line plot of NMSE (log scale) against the swept parameter."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    values = list(values)
    names = [est.name for est in results[0].estimators]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name in names:
        curve = [res.by_name(name).nmse for res in results]
        ax.plot(values, curve, marker="o", label=name)
    ax.set_yscale("log")
    ax.set_xlabel(parameter)
    ax.set_ylabel("NMSE")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
