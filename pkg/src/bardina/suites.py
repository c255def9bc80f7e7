"""Filter verification suites driven by ``bardina filter-verify``."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import fields, filter as hf
from .config import RunConfig
from .fields import Grid


@dataclass
class SuiteResult:
    name: str
    run: int = 0
    passed: int = 0
    worst_slack: float = float("inf")
    wall_time: float = 0.0
    reports: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.run > 0 and self.passed == self.run

    def add(self, name: str, lhs: float, rhs: float, passed: bool) -> None:
        self.run += 1
        self.passed += bool(passed)
        self.worst_slack = min(self.worst_slack, rhs - lhs)
        self.reports.append({"suite": self.name, "name": name, "lhs": lhs, "rhs": rhs, "passed": bool(passed)})

    def add_report(self, rep: hf.EstimateReport) -> None:
        self.add(rep.name, rep.lhs, rep.rhs, rep.passed)

    def summary(self) -> dict:
        return {"suite": self.name, "run": self.run, "passed": self.passed,
                "worst_slack": self.worst_slack, "wall_time": self.wall_time}


def gaussian_bump(grid: Grid, width: float) -> np.ndarray:
    r2 = np.sum((grid.x - grid.L / 2) ** 2, axis=0)
    return np.exp(-r2 / (2 * width**2))


def _estimates(cfg: RunConfig, grid: Grid, res: SuiteResult) -> None:
    for i in range(cfg.verify.n_random):
        f = fields.random_field(grid, cfg.initial_data.seed + i)
        for rep in hf.check_estimates(grid, f, cfg.physics.alpha):
            res.add_report(rep)


def _convergence(cfg: RunConfig, grid: Grid, res: SuiteResult) -> None:
    bump_grid = Grid(grid.N, cfg.verify.bump_box)
    f = gaussian_bump(bump_grid, cfg.verify.bump_width)
    table = hf.check_convergence_rate(bump_grid, f, cfg.verify.alphas)
    for a, err, bound in table.rows:
        res.add(f"hausdorff_alpha={a:g}", err, bound, err <= bound * (1 + hf.DELTA_WRAP))
    slope = table.slope if table.slope is not None else float("nan")
    res.add("loglog_slope", abs(slope - 2.0), 0.1, table.slope_in())


def _pairs(cfg: RunConfig, grid: Grid, kmax=None):
    seed = cfg.initial_data.seed
    for i in range(cfg.verify.n_pairs):
        yield (fields.random_field(grid, seed + 1000 + 2 * i, kmax=kmax),
               fields.random_field(grid, seed + 1001 + 2 * i, kmax=kmax))


def _self_adjoint(cfg, grid, res):
    for f, g in _pairs(cfg, grid):
        res.add_report(hf.check_self_adjoint(grid, f, g, cfg.physics.alpha))


def _leibniz(cfg, grid, res):
    for f, g in _pairs(cfg, grid, fields.product_kmax(grid)):
        res.add_report(hf.check_leibniz(grid, f, g, cfg.physics.alpha))


def _commutation(cfg, grid, res):
    for f, _ in _pairs(cfg, grid):
        res.add_report(hf.check_commutation(grid, f, cfg.physics.alpha))


def _elliptic(cfg, grid, res):
    for i in range(cfg.verify.n_random):
        f = fields.random_field(grid, cfg.initial_data.seed + 2000 + i)
        for s in (0, 1, 2):
            res.add_report(hf.check_elliptic_gain(grid, f, cfg.physics.alpha, s, cfg.verify.C_ell))


def _agreement(cfg, grid, res):
    alpha = grid.L / hf.WRAP_RATIO
    f = gaussian_bump(grid, grid.L / 8)
    diff = fields.norm_lp(grid, hf.filter_convolution(grid, f, alpha) - hf.filter_spectral(grid, f, alpha), 2)
    res.add("spectral_vs_convolution", diff / fields.norm_lp(grid, f, 2), 1e-3, diff / fields.norm_lp(grid, f, 2) <= 1e-3)


SUITES = {
    "estimates": _estimates,
    "convergence_rate": _convergence,
    "self_adjoint": _self_adjoint,
    "leibniz": _leibniz,
    "commutation": _commutation,
    "elliptic_gain": _elliptic,
    "filter_agreement": _agreement,
}


def run_suites(cfg: RunConfig, names=None) -> list[SuiteResult]:
    grid = Grid(cfg.grid.N, cfg.grid.L)
    results = []
    for name in names or SUITES:
        res = SuiteResult(name)
        start = time.perf_counter()
        SUITES[name](cfg, grid, res)
        res.wall_time = time.perf_counter() - start
        results.append(res)
    return results
