"""Command-line runner: ``oblique-fem run | check | mesh-dump``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import checks
from .assembly import QuadratureOptions, assemble_system
from .geometry import BoundaryCurve, ObliqueField
from .mesh import dump_mesh, mesh_sequence
from .plotting import convergence_svg
from .problems import COEFFICIENTS, SOLUTIONS, ProblemSpec, check_epsilon_tilde, experiment
from .solver import run_levels
from .space import build_space


class ConfigError(ValueError):
    pass


_BUILTIN = {
    1: dict(domain="disk", coefficient="identity", oblique="rotate-normal", solution="exp1", epsilon=1.0),
    2: dict(domain="disk", coefficient="checkerboard", oblique="polar-spiral", solution="exp2", epsilon=0.6),
    3: dict(domain="disk", coefficient="checkerboard", oblique="rotate-normal", solution="exp3", epsilon=0.6),
    4: dict(domain="ellipse", coefficient="checkerboard", oblique="tangential", solution="exp4",
            epsilon=0.6, n_boundary=8),
}


@dataclass
class ExperimentConfig:
    """Run configuration; JSON files use these field names."""

    experiment: int | None = None
    domain: str = "disk"
    semi_axes: tuple[float, float] = (2.0, 1.0)
    coefficient: str = "identity"
    oblique: str = "rotate-normal"
    oblique_angle: float = 0.25 * np.pi
    solution: str = "exp1"
    epsilon: float = 1.0
    epsilon_tilde: float | None = None
    levels: tuple[int, int] = (0, 5)
    n_boundary: int = 6
    quadrature: dict = field(default_factory=dict)
    out: str = "out"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        base = dict(_BUILTIN.get(data.get("experiment"), {}))
        base.update(data)
        cfg = cls(**base)
        cfg.levels = tuple(int(v) for v in cfg.levels)
        cfg.semi_axes = tuple(float(v) for v in cfg.semi_axes)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        a, b = self.levels
        if a < 0 or b < a:
            raise ConfigError(f"bad level range {a}..{b}")
        if self.domain not in ("disk", "ellipse"):
            raise ConfigError(f"unknown domain {self.domain!r}")
        if self.coefficient not in COEFFICIENTS:
            raise ConfigError(f"unknown coefficient {self.coefficient!r}")
        if self.solution not in SOLUTIONS:
            raise ConfigError(f"unknown solution {self.solution!r}")
        if self.oblique not in ("rotate-normal", "tangential", "polar-spiral"):
            raise ConfigError(f"unknown oblique field {self.oblique!r}")
        if self.epsilon_tilde is not None:
            check_epsilon_tilde(self.epsilon, self.epsilon_tilde)

    @property
    def quad(self) -> QuadratureOptions:
        return QuadratureOptions(**self.quadrature)

    def curve(self) -> BoundaryCurve:
        if self.domain == "disk":
            return BoundaryCurve.unit_circle()
        return BoundaryCurve.ellipse(*self.semi_axes)

    def field(self) -> ObliqueField:
        if self.oblique == "tangential":
            return ObliqueField.tangential()
        if self.oblique == "polar-spiral":
            return ObliqueField.polar_spiral()
        return ObliqueField.rotate_normal(self.oblique_angle)

    def problem(self) -> ProblemSpec:
        if self.experiment is not None and self._matches_builtin():
            return experiment(self.experiment).with_epsilon_tilde(self.epsilon_tilde)
        curve, fld = self.curve(), self.field()
        u, g, h = SOLUTIONS[self.solution]()
        t = np.linspace(0.0, curve.period, 512, endpoint=False)
        dl = np.sum(g(curve.derivative(t, 0)) * fld.value(curve, t), axis=-1)
        if np.ptp(dl) > 1e-8 * max(1.0, np.abs(dl).max()):
            raise ConfigError("the chosen solution does not satisfy a constant oblique condition here")
        prob = ProblemSpec(f"custom-{self.solution}", curve, fld, COEFFICIENTS[self.coefficient],
                           self.epsilon, u=u, grad_u=g, hess_u=h, c=float(dl.mean()))
        return prob.with_epsilon_tilde(self.epsilon_tilde)

    def _matches_builtin(self) -> bool:
        ref = _BUILTIN[self.experiment]
        return all(getattr(self, k) == v for k, v in ref.items() if k != "n_boundary")


def parse_levels(text: str) -> tuple[int, int]:
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            return int(a), int(b)
        n = int(text)
        return n, n
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A..B, got {text!r}") from None


def load_config(args) -> ExperimentConfig:
    data: dict = {}
    if getattr(args, "config", None):
        data.update(json.loads(Path(args.config).read_text()))
    if getattr(args, "experiment", None) is not None:
        data["experiment"] = args.experiment
    if "experiment" not in data and not getattr(args, "config", None):
        data["experiment"] = 1
    if getattr(args, "levels", None) is not None:
        data["levels"] = args.levels
    if getattr(args, "epsilon_tilde", None) is not None:
        data["epsilon_tilde"] = args.epsilon_tilde
    if getattr(args, "out", None) is not None:
        data["out"] = args.out
    return ExperimentConfig.from_dict(data)


def cmd_run(args) -> int:
    cfg = load_config(args)
    prob = cfg.problem()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    first, last = cfg.levels
    print(f"{prob.name}: levels {first}..{last}, c = {prob.c:.6g}")

    def show(row):
        print(f"  level {row.level}: h = {row.h:.4g}  dofs = {row.n_dofs}  "
              f"H2 = {row.h2:.4e}  c_h = {row.c_h:.6f}  ({row.seconds:.1f}s)", flush=True)

    report = run_levels(prob, first, last, cfg.n_boundary, cfg.quad, on_level=show)
    (out / "report.csv").write_text(report.to_csv())
    (out / "convergence.svg").write_text(convergence_svg(report))
    summary = report.summary()
    summary["config"] = asdict(cfg)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=float) + "\n")
    if args.mesh_dump or args.matrix_market:
        mesh = list(mesh_sequence(prob.curve, cfg.n_boundary, last))[-1]
        if args.mesh_dump:
            (out / "mesh.txt").write_text(dump_mesh(mesh))
        if args.matrix_market:
            import scipy.io

            system = assemble_system(build_space(mesh, prob.oblique, constrained=True), prob, cfg.quad)
            scipy.io.mmwrite(str(out / "system.mtx"), system.matrix())
    print(report.to_csv(), end="")
    return 0


def cmd_check(args) -> int:
    suite = checks.SUITES[args.suite]
    result = suite()
    print(json.dumps(result, indent=2, default=float))
    return 0 if result["passed"] else 1


def cmd_mesh_dump(args) -> int:
    cfg = load_config(args)
    level = cfg.levels[1]
    mesh = list(mesh_sequence(cfg.curve(), cfg.n_boundary, level))[-1]
    text = dump_mesh(mesh)
    if args.file:
        Path(args.file).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oblique-fem", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--experiment", type=int, choices=(1, 2, 3, 4))
        sp.add_argument("--levels", type=parse_levels, help="refinement levels A..B")
        sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--epsilon-tilde", type=float, dest="epsilon_tilde")
        sp.add_argument("--out", help="output directory")

    r = sub.add_parser("run", help="convergence study")
    common(r)
    r.add_argument("--mesh-dump", action="store_true", help="also write mesh.txt of the finest level")
    r.add_argument("--matrix-market", action="store_true", help="also write the finest system as system.mtx")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check", help="property suites")
    c.add_argument("suite", choices=sorted(checks.SUITES))
    c.set_defaults(func=cmd_check)

    m = sub.add_parser("mesh-dump", help="print a mesh in the text format")
    common(m)
    m.add_argument("--file", help="write to a file instead of stdout")
    m.set_defaults(func=cmd_mesh_dump)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
