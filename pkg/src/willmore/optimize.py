"""Constrained minimization of Willmore-type energies by a quadratic penalty method.

The penalty function is

    F(x; mu) = W(x) [+ lam * E(x)] + mu/2 * sum_c (C(x) - C0)^2

over the active constraints C in {A, V, M}. Each penalty stage minimizes F
with BFGS (inverse-Hessian form) and an Armijo backtracking line search; mu
grows by a fixed factor until the constraints hold to the requested relative
tolerance. Every step is built from the gradient with equivariant operations
only, so a symmetric start stays symmetric up to rounding.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import pl, ss
from .mesh import MeshError, TriMesh, require_valid
from .symmetry import SymmetrySpec, symmetrize, symmetry_deviation


class Representation(str, enum.Enum):
    PL = "pl"
    LOOP = "loop"


class Problem(str, enum.Enum):
    WILLMORE = "willmore"
    CANHAM = "canham"
    HELFRICH = "helfrich"


ACTIVE = {
    Problem.WILLMORE: ("A",),
    Problem.CANHAM: ("A", "V"),
    Problem.HELFRICH: ("A", "V", "M"),
}

# meshes with more faces than this use the coarse n = 2 grid by default
FINE_MESH_FACES = 200


class OptimizeError(RuntimeError):
    pass


class Rejected(ArithmeticError):
    """Trial point where the objective is undefined (line-search rejection)."""

    def __init__(self, reason: str, msg: str):
        super().__init__(msg)
        self.reason = reason


@dataclass
class ProblemSpec:
    representation: Representation = Representation.LOOP
    problem: Problem = Problem.WILLMORE
    w_variant: pl.WVariant = pl.WVariant.NORMALCUR
    m_variant: pl.MVariant = pl.MVariant.COTAN
    lam: float = 0.0
    structure: object = field(default_factory=pl.Equilateral)
    quad_n: int | None = None
    quad_depth: int = 16
    A0: float | None = None
    v0: float | None = None
    m0: float | None = None
    mu0: float = 10.0
    mu_growth: float = 10.0
    mu_max: float = 1e8
    tol_g: float = 1e-6
    tol_c: float = 1e-6
    max_iter: int = 5000
    method: str = "bfgs"
    deterministic: bool = True
    symmetrize: bool = False
    time_limit: float | None = None
    stall_window: int = 100
    stall_rtol: float = 1e-7
    carry_hessian: bool = False  # keep the BFGS inverse Hessian across mu stages
    h0_scale: str = "curvature"  # initial inverse Hessian at the first update: s'y/y'y or 1/|grad F|

    def __post_init__(self):
        self.representation = Representation(self.representation)
        self.problem = Problem(self.problem)
        self.w_variant = pl.WVariant(self.w_variant)
        self.m_variant = pl.MVariant(self.m_variant)
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.method not in ("bfgs", "gd"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.h0_scale not in ("curvature", "gradient"):
            raise ValueError(f"unknown h0_scale {self.h0_scale!r}")
        if self.problem in (Problem.CANHAM, Problem.HELFRICH):
            if self.v0 is None:
                raise ValueError(f"{self.problem.value} problem needs v0")
            if not 0 < self.v0 <= 1:
                raise ValueError("v0 must lie in (0, 1]")
        if self.problem == Problem.HELFRICH and self.m0 is None:
            raise ValueError("helfrich problem needs m0")
        if self.mu0 <= 0 or self.mu_growth <= 1 or self.mu_max < self.mu0:
            raise ValueError("need mu0 > 0, mu_growth > 1 and mu_max >= mu0")

    @property
    def active(self) -> tuple:
        return ACTIVE[self.problem]

    def echo(self) -> dict:
        d = asdict(self)
        for k in ("representation", "problem", "w_variant", "m_variant"):
            d[k] = getattr(self, k).value
        s = self.structure
        d["structure"] = ({"kind": "torus", "omega": [s.omega.real, s.omega.imag], "m": s.m, "n": s.n}
                          if isinstance(s, pl.TorusLattice) else {"kind": "equilateral"})
        return d


def reduced_quantities(A: float, V: float, M: float) -> tuple[float, float]:
    """Reduced volume and reduced total mean curvature; the unit sphere gives (1, 1)."""
    if not A > 0:
        raise ValueError(f"area must be positive, got {A}")
    r = math.sqrt(A / (4 * math.pi))
    return V / (4 * math.pi / 3 * r ** 3), M / (4 * math.pi * r)


def targets(A0: float, v0: float | None, m0: float | None) -> dict:
    r = math.sqrt(A0 / (4 * math.pi))
    t = {"A": A0}
    if v0 is not None:
        t["V"] = v0 * 4 * math.pi / 3 * r ** 3
    if m0 is not None:
        t["M"] = m0 * 4 * math.pi * r
    return t


@dataclass
class Evaluation:
    F: float
    grad: np.ndarray  # (nv, 3)
    values: dict  # W, A, V, M (and E in PL mode with lam > 0)


class Objective:
    """Penalty function of one problem on a fixed connectivity."""

    def __init__(self, mesh: TriMesh, spec: ProblemSpec):
        self.mesh0 = mesh
        self.spec = spec
        self.loop = spec.representation == Representation.LOOP
        if self.loop:
            n = spec.quad_n or (2 if mesh.n_faces > FINE_MESH_FACES else 8)
            self.tables = ss.tables_for(mesh, n, spec.quad_depth)
        base = self._values(mesh)
        A0 = spec.A0 if spec.A0 is not None else base["A"]
        if not A0 > 0:
            raise OptimizeError(f"target area must be positive, got {A0}")
        self.targets = {k: v for k, v in targets(A0, spec.v0, spec.m0).items() if k in spec.active}
        self.initial = base

    def _values(self, mesh: TriMesh) -> dict:
        if self.loop:
            return ss.ss_energy(mesh, self.tables, gradient=False).values
        vals = {"W": pl.w_value(mesh, self.spec.w_variant), "A": pl.area(mesh), "V": pl.volume(mesh),
                "M": pl.m_value(mesh, self.spec.m_variant)}
        if self.spec.lam > 0:
            vals["E"] = pl.dirichlet_energy(mesh, self.spec.structure, gradient=False)[0]
        return vals

    def _penalty_coef(self, values: dict, mu: float) -> dict:
        return {k: mu * (values[k] - c0) for k, c0 in self.targets.items()}

    def evaluate(self, x: np.ndarray, mu: float) -> Evaluation:
        mesh = self.mesh0.with_vertices(x)
        if self.loop:
            try:
                values, grad = ss.ss_combined(
                    mesh, self.tables, ss.FUNCTIONALS,
                    lambda v: {"W": 1.0, **self._penalty_coef(v, mu)})
            except ss.NotImmersed as e:
                raise Rejected("non-immersed", str(e)) from e
            F = values["W"]
        else:
            values, grad, F = self._evaluate_pl(mesh, mu)
        for k, c0 in self.targets.items():
            F += 0.5 * mu * (values[k] - c0) ** 2
        if not (math.isfinite(F) and np.all(np.isfinite(grad))):
            raise Rejected("non-immersed", "objective is not finite at this point")
        return Evaluation(F, grad, values)

    def _evaluate_pl(self, mesh: TriMesh, mu: float):
        from . import _pl_autodiff as ad

        spec = self.spec
        try:
            pl.check_nondegenerate(mesh)
            W, grad = ad.w_value_and_grad(mesh, spec.w_variant)
        except (MeshError, pl.NonSmoothPoint) as e:
            raise Rejected("non-immersed", str(e)) from e
        values = {"W": W, "A": pl.area(mesh), "V": pl.volume(mesh)}
        F = W
        if spec.lam > 0:
            E, gE = pl.dirichlet_energy(mesh, spec.structure, gradient=True)
            values["E"] = E
            F += spec.lam * E
            grad = grad + spec.lam * gE
        if "M" in self.targets:
            values["M"], gM = ad.m_value_and_grad(mesh, spec.m_variant)
        else:
            values["M"], gM = pl.m_value(mesh, spec.m_variant), None
        coef = self._penalty_coef(values, mu)
        if "A" in coef:
            grad = grad + coef["A"] * pl.grad_area(mesh)
        if "V" in coef:
            grad = grad + coef["V"] * pl.grad_volume(mesh)
        if "M" in coef:
            grad = grad + coef["M"] * gM
        return values, grad, F

    def violations(self, values: dict) -> dict:
        out = {}
        for k, c0 in self.targets.items():
            den = abs(c0) + 1.0 if k == "M" else abs(c0)
            out[k] = abs(values[k] - c0) / den
        return out


def penalty_value_grad(mesh: TriMesh, spec: ProblemSpec, mu: float, objective: Objective | None = None):
    """(F, grad F) of the penalty function at `mesh`."""
    obj = objective or Objective(mesh, spec)
    ev = obj.evaluate(mesh.vertices, mu)
    return ev.F, ev.grad


@dataclass
class OptimResult:
    mesh: TriMesh
    reason: str  # converged | max-iter | line-search-failure | non-immersed | stalled | time-limit
    feasible: bool
    values: dict
    v0: float
    m0: float
    violations: dict
    mu: float
    iterations: int
    stages: int
    history: list
    targets: dict
    symmetry_deviation: float | None
    seconds: float
    evaluations: int = 0
    restarts: int = 0

    @property
    def W(self) -> float:
        return self.values["W"]

    def summary(self) -> dict:
        return {"reason": self.reason, "feasible": self.feasible, "values": dict(self.values),
                "v0": self.v0, "m0": self.m0, "violations": dict(self.violations), "mu": self.mu,
                "iterations": self.iterations, "stages": self.stages, "targets": dict(self.targets),
                "symmetry_deviation": self.symmetry_deviation, "seconds": self.seconds,
                "evaluations": self.evaluations, "restarts": self.restarts}


class _Run:
    """State shared by the penalty stages of one minimization."""

    def __init__(self, obj: Objective, spec: ProblemSpec, sym: SymmetrySpec | None, callback):
        self.obj = obj
        self.spec = spec
        self.sym = sym
        self.callback = callback
        self.history = []
        self.iteration = 0
        self.evaluations = 0
        self.restarts = 0
        self.H = None
        self.start = time.perf_counter()
        self.scale = obj.mesh0.bbox_diagonal()

    def project(self, a: np.ndarray) -> np.ndarray:
        if self.sym is not None and self.spec.symmetrize:
            return symmetrize(a, self.sym)
        return a

    def eval(self, x, mu) -> Evaluation:
        self.evaluations += 1
        ev = self.obj.evaluate(x, mu)
        ev.grad = self.project(ev.grad)
        return ev

    def gtol(self, ev: Evaluation) -> float:
        # W is scale invariant, so its gradient scales like energy / length
        return self.spec.tol_g * (1.0 + abs(ev.F)) / self.scale

    def record(self, x, ev: Evaluation, mu: float, stage: int, step: float):
        v = ev.values
        v0, m0 = reduced_quantities(v["A"], v["V"], v["M"]) if v["A"] > 0 else (math.nan, math.nan)
        row = {"iteration": self.iteration, "stage": stage, "F": ev.F, "W": v["W"], "A": v["A"],
               "V": v["V"], "M": v["M"], "v0": v0, "m0": m0,
               "grad_inf": float(np.abs(ev.grad).max()), "mu": mu, "step": step}
        if "E" in v:
            row["E"] = v["E"]
        if self.sym is not None:
            row["symmetry_deviation"] = symmetry_deviation(self.obj.mesh0.with_vertices(x), self.sym,
                                                           check=False)
        self.history.append(row)
        if self.callback is not None:
            self.callback(row)

    def out_of_time(self) -> bool:
        t = self.spec.time_limit
        return t is not None and time.perf_counter() - self.start > t

    def line_search(self, x, ev: Evaluation, d: np.ndarray, mu: float, alpha: float):
        """Armijo backtracking; returns (alpha, x_new, ev_new) or (None, reason, None)."""
        slope = float(np.vdot(ev.grad, d))
        reasons = set()
        for _ in range(41):
            xn = self.project(x + alpha * d)
            try:
                en = self.eval(xn, mu)
            except Rejected as r:
                reasons.add(r.reason)
            else:
                if en.F <= ev.F + 1e-4 * alpha * slope:
                    return alpha, xn, en
                reasons.add("line-search-failure")
            alpha *= 0.5
        reason = "line-search-failure" if "line-search-failure" in reasons else "non-immersed"
        return None, reason, None

    def stage(self, x, ev: Evaluation, mu: float, stage: int):
        """One penalty stage, starting BFGS afresh unless carry_hessian is set."""
        spec = self.spec
        if not spec.carry_hessian:
            self.H = None
        nvar = x.size
        gd_alpha = None
        window = [ev.F]
        for _ in range(spec.max_iter):
            g = ev.grad.ravel()
            if np.abs(g).max() <= self.gtol(ev):
                return x, ev, "converged"
            if self.out_of_time():
                return x, ev, "time-limit"
            gn = float(np.linalg.norm(g))
            H = self.H
            if spec.method == "gd":
                d = -g
                alpha = gd_alpha if gd_alpha is not None else 1.0 / gn
            elif H is None:
                d, alpha = -g / gn, 1.0
            else:
                d, alpha = -(H @ g), 1.0
                if np.dot(d, g) >= 0:
                    self.restart()
                    d = -g / gn
            alpha, xn, en = self.line_search(x, ev, d.reshape(x.shape), mu, alpha)
            if alpha is None:
                if self.H is not None:
                    self.restart()  # retry from a steepest-descent direction
                    continue
                return x, ev, xn
            if spec.method == "gd":
                gd_alpha = 2 * alpha
            else:
                self.update(xn - x, en.grad - ev.grad, gn, nvar)
            x, ev = xn, en
            self.iteration += 1
            self.record(x, ev, mu, stage, alpha)
            window.append(ev.F)
            if spec.stall_window and len(window) > spec.stall_window:
                if window[0] - ev.F <= spec.stall_rtol * (1.0 + abs(ev.F)):
                    return x, ev, "stalled"
                window.pop(0)
        return x, ev, "max-iter"

    def restart(self):
        self.H = None
        self.restarts += 1

    def update(self, s, y, gn, nvar):
        """BFGS update of the inverse Hessian; restart when the curvature condition fails."""
        s, y = s.ravel(), y.ravel()
        sy = float(np.dot(s, y))
        if not sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            self.restart()
            return
        if self.H is None:
            # updates only learn curvature along the steps taken; the scale chosen here
            # stays in force in every other direction, including non-symmetric ones
            h0 = sy / float(np.dot(y, y)) if self.spec.h0_scale == "curvature" else 1.0 / gn
            self.H = np.eye(nvar) * h0
        H = self.H
        rho = 1.0 / sy
        Hy = H @ y
        H -= rho * (np.outer(Hy, s) + np.outer(s, Hy))
        H += (rho * rho * float(np.dot(y, Hy)) + rho) * np.outer(s, s)


def minimize(mesh0: TriMesh, spec: ProblemSpec, sym: SymmetrySpec | None = None,
             callback=None) -> OptimResult:
    """Penalty-method minimization; see the module docstring."""
    require_valid(mesh0)
    obj = Objective(mesh0, spec)
    run = _Run(obj, spec, sym, callback)
    x = run.project(np.array(mesh0.vertices, dtype=np.float64))
    mu = spec.mu0
    try:
        ev = run.eval(x, mu)
    except Rejected as r:
        raise OptimizeError(f"initial evaluation failed: {r}") from r
    run.record(x, ev, mu, 0, 0.0)
    stage = 0
    while True:
        x, ev, reason = run.stage(x, ev, mu, stage)
        viol = obj.violations(ev.values)
        feasible = all(v <= spec.tol_c for v in viol.values())
        if feasible or reason == "time-limit" or mu * spec.mu_growth > spec.mu_max * (1 + 1e-12):
            break
        mu *= spec.mu_growth
        stage += 1
        ev = run.eval(x, mu)
    mesh = mesh0.with_vertices(x)
    values = obj._values(mesh)
    v0, m0 = reduced_quantities(values["A"], values["V"], values["M"])
    dev = symmetry_deviation(mesh, sym, check=False) if sym is not None else None
    return OptimResult(mesh, reason, feasible, values, v0, m0, obj.violations(values), mu, run.iteration,
                       stage + 1, run.history, dict(obj.targets), dev, time.perf_counter() - run.start,
                       run.evaluations, run.restarts)
