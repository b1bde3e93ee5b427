"""Grid-based numeric audit of the regularity conditions on a perturbation law.

Each check is a pure function of ``(spec, AuditConfig)`` returning a
``CheckResult``; ``audit`` composes them and retries failing checks on the
truncated law.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels as K
from .distributions import DistributionSpec, Family, Wrapper, as_spec

X_FAR = 1e8
X_CHECK = 1e7


class Verdict(str, enum.Enum):
    PASS = "Pass"
    FAIL = "Fail"
    PASS_AFTER_TRUNC = "PassAfterTruncShift"

    @property
    def mark(self) -> str:
        return {"Pass": "✓", "Fail": "✗", "PassAfterTruncShift": "✗(*)"}[self.value]


CHECKS = ("A1", "A2", "A3", "A4", "A5", "eq13")


@dataclass(frozen=True)
class AuditConfig:
    grid_points: int = 4096
    seed: int = 0
    tolerance: float = 1e-9
    mc_reps: int = 100_000
    mc_log2_k: tuple = tuple(range(1, 17))
    ak_max: int = 2**20
    # skip the Monte-Carlo block constants (verdicts do not depend on them)
    block_mc: bool = True

    def __post_init__(self):
        if self.grid_points < 16:
            raise ValueError("grid_points must be at least 16")
        if self.mc_reps < 100:
            raise ValueError("mc_reps must be at least 100")


@dataclass
class TailConstants:
    a_k: dict = field(default_factory=dict)
    S_F_at: float | None = None
    rho1_hat: float | None = None
    rho2_hat: float | None = None
    M_hat: float | None = None
    M_stderr: float | None = None
    m_hat: float | None = None
    m_stderr: float | None = None
    A_l_hat: float | None = None
    A_u_hat: float | None = None


@dataclass
class CheckResult:
    name: str
    verdict: Verdict
    witness: float | None = None
    values: dict = field(default_factory=dict)
    note: str = ""


def probe_grid(spec: DistributionSpec, points: int = 4096) -> np.ndarray:
    """Log-spaced probe points from just above the left endpoint to the far point.

    Laws supported on the whole line get the mirrored negative grid and 0 as well.
    """
    nu = spec.nu
    lo = max(nu, 1e-3) * (1 + 1e-9) if nu >= 0 else 1e-3
    pos = np.geomspace(lo, X_FAR, points)
    if nu >= 0:
        return pos
    return np.concatenate([-pos[::-1], [0.0], pos])


def _starts_at_endpoint(spec: DistributionSpec) -> bool:
    return spec.nu >= 1e-3


def _last_violation(values: np.ndarray, tol: float, relative: bool) -> int:
    """Index of the last step where ``values`` increases beyond ``tol``; -1 if none."""
    a, b = values[:-1], values[1:]
    slack = tol * np.abs(a) if relative else tol
    with np.errstate(invalid="ignore"):
        bad = np.nonzero(b > a + slack)[0]
    return int(bad[-1]) if bad.size else -1


def _first_violation(values: np.ndarray, tol: float) -> int:
    with np.errstate(invalid="ignore"):
        bad = np.nonzero(values[1:] > values[:-1] + tol)[0]
    return int(bad[0]) if bad.size else -1


# ---------------------------------------------------------------------------
# individual checks


def check_density_decreasing(spec: DistributionSpec, config: AuditConfig = AuditConfig()) -> CheckResult:
    x = probe_grid(spec, config.grid_points)
    f = np.exp(K.logpdf_arr(spec.packed, x))
    v = _last_violation(f, config.tolerance, relative=True)
    if v < 0:
        z0 = spec.nu if _starts_at_endpoint(spec) else float(x[0])
    else:
        z0 = float(x[v + 1])
    if not np.all(np.isfinite(f)):
        bad = float(x[~np.isfinite(f)][0])
        return CheckResult("A1", Verdict.FAIL, bad, {"z0_hat": None}, "density not finite")
    if z0 >= X_CHECK:
        return CheckResult("A1", Verdict.FAIL, z0, {"z0_hat": None}, "density still increasing near the far end")
    return CheckResult("A1", Verdict.PASS, None, {"z0_hat": z0})


def check_hazard_bounded(spec: DistributionSpec, config: AuditConfig = AuditConfig()) -> CheckResult:
    x = probe_grid(spec, config.grid_points)
    if spec.nu < 0:
        return CheckResult("A2", Verdict.FAIL, float(x[0]), {"rho1_hat": None},
                           "support extends below 0")
    d = spec.packed
    logh = K.logpdf_arr(d, x) - np.log(K.sf_arr(d, x))
    h = np.exp(logh)
    if not np.all(np.isfinite(h)):
        bad = float(x[~np.isfinite(h)][0])
        return CheckResult("A2", Verdict.FAIL, bad, {"rho1_hat": None}, "hazard not finite")
    last = x >= X_FAR / 10
    tail_h = h[last]
    if tail_h[-1] > tail_h[0] * (1 + 1e-6) and np.all(np.diff(tail_h) >= 0):
        return CheckResult("A2", Verdict.FAIL, X_FAR, {"rho1_hat": None}, "hazard grows over the last decade")
    if not _starts_at_endpoint(spec):
        first = x <= x[0] * 10
        xs, ls = np.log(x[first]), logh[first]
        with np.errstate(invalid="ignore"):
            slope = (ls[-1] - ls[0]) / (xs[-1] - xs[0])
        if np.isfinite(slope) and slope < -0.05:
            return CheckResult("A2", Verdict.FAIL, float(x[0]), {"rho1_hat": None, "small_end_slope": float(slope)},
                               "hazard blows up at the left endpoint")
    rho = x * h
    return CheckResult("A2", Verdict.PASS, None, {"rho1_hat": float(rho.max())})


def _ak_grid(kmax: int) -> np.ndarray:
    return np.unique(np.round(np.geomspace(2, kmax, 4000)).astype(np.int64))


def check_block_constants(spec: DistributionSpec, config: AuditConfig = AuditConfig()) -> CheckResult:
    d = spec.packed
    a = spec.tail_index
    ks = _ak_grid(config.ak_max)
    ak = K.isf_arr(d, 1.0 / ks.astype(float))
    if np.any(ak <= 0):
        k_bad = int(ks[ak <= 0][0])
        return CheckResult("A3", Verdict.FAIL, float(k_bad), {}, f"a_k <= 0 at k={k_bad}")
    tail = np.geomspace(X_CHECK, X_FAR, 64)
    s_f = np.exp(a * np.log(tail)) * K.sf_arr(d, tail)
    lo, hi = float(s_f.min()), float(s_f.max())
    drift = abs(s_f[-1] - s_f[0]) / s_f[-1] if s_f[-1] > 0 else math.inf
    if not (lo > 0 and math.isfinite(hi)) or drift > 0.01:
        return CheckResult("A3", Verdict.FAIL, X_FAR, {"S_F_liminf": lo, "S_F_limsup": hi},
                           "S_F not bounded away from 0 and infinity")
    ratio = ak / ks.astype(float) ** (1.0 / a)
    values = {"S_F_liminf": lo, "S_F_limsup": hi, "S_F_at": float(s_f[-1]),
              "A_l_hat": float(ratio.min()), "A_u_hat": float(ratio.max())}
    note = ""
    if config.block_mc:
        gen = np.random.default_rng(config.seed)
        big_m, small_m, big_se, small_se = -math.inf, -math.inf, 0.0, 0.0
        a_k = {}
        for p in config.mc_log2_k:
            k = 2**p
            a_kk = float(K.isf(d, 1.0 / k))
            a_k[k] = a_kk
            draws = K.block_max_draws(d, gen, float(k), config.mc_reps) / a_kk
            inv = 1.0 / draws
            if a > 1:
                mean = float(draws.mean())
                if mean > big_m:
                    big_m, big_se = mean, float(draws.std(ddof=1) / math.sqrt(draws.size))
            mean_inv = float(inv.mean())
            if mean_inv > small_m:
                small_m, small_se = mean_inv, float(inv.std(ddof=1) / math.sqrt(inv.size))
        values["a_k"] = a_k
        values["m_hat"], values["m_stderr"] = small_m, small_se
        if a > 1:
            values["M_hat"], values["M_stderr"] = big_m, big_se
        else:
            note = "M not applicable: tail index <= 1"
    return CheckResult("A3", Verdict.PASS, None, values, note)


def check_derivative_ratio(spec: DistributionSpec, config: AuditConfig = AuditConfig()) -> CheckResult:
    x = probe_grid(spec, config.grid_points)
    g = K.dlogpdf_arr(spec.packed, x)
    if not np.all(np.isfinite(g)):
        bad = float(x[~np.isfinite(g)][0])
        return CheckResult("A4", Verdict.FAIL, bad, {"rho2_hat": None}, "f'/f not finite")
    pos = x > 0
    r = -x[pos] * g[pos]
    limit = float(r[-1])
    a = spec.tail_index
    if abs(limit - (a + 1)) > 1e-2:
        return CheckResult("A4", Verdict.FAIL, X_FAR, {"rho2_hat": None, "limit": limit},
                           "-x f'/f does not approach alpha + 1")
    return CheckResult("A4", Verdict.PASS, None, {"rho2_hat": float(r.max()), "limit": limit})


def check_f_over_F_decreasing(spec: DistributionSpec, config: AuditConfig = AuditConfig()) -> CheckResult:
    x = probe_grid(spec, config.grid_points)
    d = spec.packed
    ratio = K.logpdf_arr(d, x) - K.logcdf_arr(d, x)
    v_first = _first_violation(ratio, config.tolerance)
    v_last = _last_violation(ratio, config.tolerance, relative=False)
    z1 = float(x[v_last + 1]) if v_last >= 0 else (spec.nu if _starts_at_endpoint(spec) else float(x[0]))
    if v_first >= 0:
        return CheckResult("A5", Verdict.FAIL, float(x[v_first + 1]), {"z1_hat": z1}, "f/F increases")
    return CheckResult("A5", Verdict.PASS, None, {"z1_hat": z1})


def check_rho_leq_alpha(spec: DistributionSpec, config: AuditConfig = AuditConfig()) -> CheckResult:
    x = probe_grid(spec, config.grid_points)
    x = x[x > max(spec.nu, 0.0)]
    d = spec.packed
    rho = x * np.exp(K.logpdf_arr(d, x) - np.log(K.sf_arr(d, x)))
    a = spec.tail_index
    sup = float(rho.max())
    if sup > a + config.tolerance:
        return CheckResult("eq13", Verdict.FAIL, float(x[np.argmax(rho)]), {"rho_sup": sup}, "rho exceeds alpha")
    s_f = np.exp(a * np.log(x)) * K.sf_arr(d, x)
    v = _first_violation(-s_f, config.tolerance * np.abs(s_f).max())
    note = "S_F nondecreasing on grid" if v < 0 else f"S_F decreases near x={x[v + 1]:.4g}"
    return CheckResult("eq13", Verdict.PASS, None, {"rho_sup": sup, "S_F_monotone": v < 0}, note)


_RUNNERS = {
    "A1": check_density_decreasing,
    "A2": check_hazard_bounded,
    "A3": check_block_constants,
    "A4": check_derivative_ratio,
    "A5": check_f_over_F_decreasing,
    "eq13": check_rho_leq_alpha,
}


# ---------------------------------------------------------------------------
# composed report


@dataclass
class AuditReport:
    spec: DistributionSpec
    verdicts: dict
    checks: dict
    constants: TailConstants
    probe_grid: dict
    tolerance: float
    notes: dict

    def row(self, names=("A1", "A2", "A3", "A4", "A5")) -> tuple:
        return tuple(self.verdicts[n] for n in names)

    def to_dict(self) -> dict:
        checks = {}
        for name, res in self.checks.items():
            checks[name] = {
                "verdict": res.verdict.value,
                "witness": res.witness,
                "values": {k: v for k, v in res.values.items() if k != "a_k"},
                "note": res.note,
            }
        consts = asdict(self.constants)
        consts["a_k"] = {str(k): v for k, v in consts["a_k"].items()}
        return {
            "spec": self.spec.to_dict(),
            "verdicts": {k: v.value for k, v in self.verdicts.items()},
            "checks": checks,
            "constants": consts,
            "probe_grid": self.probe_grid,
            "tolerance": self.tolerance,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True)


def _constants_from(results: dict) -> TailConstants:
    c = TailConstants()

    def take(name, key):
        res = results.get(name)
        if res is None or res.verdict is Verdict.FAIL:
            return None
        return res.values.get(key)

    c.rho1_hat = take("A2", "rho1_hat")
    c.rho2_hat = take("A4", "rho2_hat")
    for key in ("S_F_at", "M_hat", "M_stderr", "m_hat", "m_stderr", "A_l_hat", "A_u_hat"):
        setattr(c, key, take("A3", key))
    c.a_k = take("A3", "a_k") or {}
    return c


def audit(spec, config: AuditConfig = AuditConfig()) -> AuditReport:
    """Run every check; failing checks are retried on the truncated law."""
    spec = as_spec(spec)
    results = {name: fn(spec, config) for name, fn in _RUNNERS.items()}
    verdicts = {name: r.verdict for name, r in results.items()}
    notes = {name: r.note for name, r in results.items()}
    effective = dict(results)
    failed = [n for n, r in results.items() if r.verdict is Verdict.FAIL]
    if failed and spec.wrapper is Wrapper.NONE:
        trunc = spec.truncated()
        for name in failed:
            retry = _RUNNERS[name](trunc, config)
            if retry.verdict is Verdict.PASS:
                verdicts[name] = Verdict.PASS_AFTER_TRUNC
                witness = results[name].witness
                notes[name] = f"{results[name].note} (witness {witness:.6g}); passes after truncation"
                effective[name] = CheckResult(name, Verdict.PASS_AFTER_TRUNC, witness, retry.values, notes[name])
    grid = probe_grid(spec, config.grid_points)
    grid_info = {"points": int(grid.size), "min": float(grid.min()), "max": float(grid.max()),
                 "spacing": "log", "mirrored": bool(spec.nu < 0)}
    return AuditReport(spec, verdicts, effective, _constants_from(effective), grid_info, config.tolerance, notes)


# ---------------------------------------------------------------------------
# family-level matrix

# Each family is judged over a small parameter panel because a mark in the
# matrix is meant to hold for every parameter choice; the first entry is the
# representative parameterisation shown in the header.
TABLE2_PANELS = {
    Family.FRECHET: [{"alpha": 2.0}, {"alpha": 1.5}, {"alpha": 3.0}],
    Family.PARETO: [{"alpha": 2.0}, {"alpha": 1.5}, {"alpha": 3.0}],
    Family.GENERALIZED_PARETO: [{"alpha": 2.0, "beta": 1.0}, {"alpha": 1.5, "beta": 0.5}, {"alpha": 3.0, "beta": 2.0}],
    Family.STUDENT_T: [{"n": 3.0}, {"n": 2.0}, {"n": 5.0}],
    Family.SNEDECOR_F: [{"m": 2.0, "n": 4.0}, {"m": 1.0, "n": 4.0}, {"m": 4.0, "n": 6.0}],
}

ROW_NAMES = ("A1", "A2", "A3", "A4", "A5")


def _combine(verdicts) -> Verdict:
    vs = list(verdicts)
    if Verdict.FAIL in vs:
        return Verdict.FAIL
    if Verdict.PASS_AFTER_TRUNC in vs:
        return Verdict.PASS_AFTER_TRUNC
    return Verdict.PASS


@dataclass
class Table2:
    columns: list
    matrix: dict  # check name -> list of verdicts per column
    reports: dict  # column label -> list of AuditReport

    def marks(self) -> list:
        return [[v.mark for v in self.matrix[name]] for name in ROW_NAMES]

    def render(self) -> str:
        width = max(len(c) for c in self.columns) + 2
        head = "assumption".ljust(12) + "".join(c.ljust(width) for c in self.columns)
        lines = [head.rstrip()]
        for name, row in zip(ROW_NAMES, self.marks()):
            lines.append((name.ljust(12) + "".join(m.ljust(width) for m in row)).rstrip())
        return "\n".join(lines)


def table2(config: AuditConfig = AuditConfig(block_mc=False)) -> Table2:
    columns, reports = [], {}
    matrix = {name: [] for name in ROW_NAMES}
    for family, panel in TABLE2_PANELS.items():
        specs = [DistributionSpec(family, dict(p)) for p in panel]
        label = specs[0].label
        reps = [audit(s, config) for s in specs]
        columns.append(label)
        reports[label] = reps
        for name in ROW_NAMES:
            matrix[name].append(_combine(r.verdicts[name] for r in reps))
    return Table2(columns, matrix, reports)


# the matrix published for the five families, used by the acceptance check
EXPECTED_TABLE2 = [
    ["✓", "✓", "✓", "✓", "✓"],
    ["✓", "✓", "✓", "✗(*)", "✗(*)"],
    ["✓", "✓", "✓", "✗(*)", "✓"],
    ["✓", "✓", "✓", "✓", "✓"],
    ["✓", "✓", "✓", "✗(*)", "✓"],
]
