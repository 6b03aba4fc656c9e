"""Built-in structures and metrics with known invariant behaviour."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Callable, Mapping

from . import exprdsl
from .errors import ConfigError
from .geometry import CausalStructure
from .oracle import Metric, graph_from_metric

FLAG_NAMES = ("fubini_zero", "wsf_zero", "halfflat_plus", "halfflat_minus")
# how an expected flag is known
SOURCES = ("structural", "published", "oracle")


@dataclass(frozen=True)
class Flag:
    value: bool
    source: str
    note: str = ""

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown flag source {self.source!r}")


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    kind: str  # "structure" or "metric"
    params: Mapping[str, Any]
    flags: Mapping[str, Flag | None]
    builder: Callable[[], "CausalStructure | Metric"] = field(repr=False, compare=False)
    description: str = ""

    def build(self):
        return self.builder()

    def structure(self) -> CausalStructure:
        """The causal structure, going through the null cone for metric entries."""
        obj = self.builder()
        if isinstance(obj, Metric):
            return graph_from_metric(obj, name=self.name)
        return obj

    def expected(self, flag: str) -> bool | None:
        f = self.flags.get(flag)
        return None if f is None else f.value


# constructors -----------------------------------------------------------------

def _eps_diag(p: int, q: int) -> list[int]:
    return [1] * p + [-1] * q


def flat_quadric(p: int, q: int) -> CausalStructure:
    """F = sum eps_a (y^a)^2 with eps = diag(+1 x p, -1 x q)."""
    m = p + q
    if m < 2 or p < 0 or q < 0:
        raise ConfigError("flat_quadric needs p + q >= 2")
    terms = [("" if e > 0 else "-") + f"y{a + 1}^2" for a, e in enumerate(_eps_diag(p, q))]
    expr = " + ".join(terms).replace("+ -", "- ")
    return CausalStructure.from_expr(expr, m + 1, (p, q), name=f"flat_quadric_{p + 1}{q + 1}")


def cubic_family(c111: str, c12: str, c1: str, c2: str, c0: str, name: str = "cubic_family") -> CausalStructure:
    """F = c111 (y1)^3/3 + c12 y1 y2 + c1 y1 + c2 y2 + c0 with coefficients in x."""
    expr = f"({c111})*y1^3/3 + ({c12})*y1*y2 + ({c1})*y1 + ({c2})*y2 + ({c0})"
    return CausalStructure.from_expr(expr, 3, (1, 1), name=name)


def cayley_scroll() -> CausalStructure:
    return CausalStructure.from_expr("y1*y2 + y1^3/3", 3, (1, 1), name="cayley_scroll")


def pp_wave() -> CausalStructure:
    return cubic_family("0", "1", "0", "0", "x1^2", name="pp_wave")


def isotrivially_flat(Fy: str, n: int, signature: tuple[int, int], name: str = "isotrivial") -> CausalStructure:
    ast = exprdsl.parse_expr(Fy, n)
    if any(v.startswith("x") for v in exprdsl.variables(ast)):
        raise ConfigError("isotrivially flat defining functions may not depend on x")
    return CausalStructure.from_expr(ast, n, signature, name=name)


def metric_from_line_element(entries: Mapping[tuple[int, int], str], signature, name="",
                             constants=None) -> Metric:
    return Metric.from_exprs(entries, 4, signature, constants, name=name)


def warped_product_surfaces(K1: float, K2: float, f: str = "1", name: str = "warped") -> Metric:
    """Split-signature product (S1, g1) x (S2, -f^2 g2) of constant-curvature surfaces.

    Each surface uses the conformally flat chart e^{2 phi}(du^2 + dv^2) with
    phi = -log(1 + K (u^2 + v^2)/4).  The coordinates are A = (x3 + x0)/2,
    B = x1 on the first factor and C = (x3 - x0)/2, D = x2 on the second,
    which puts the null cone in graph form over (x0, x3).  ``f`` should depend
    on the first factor only, i.e. on x0 + x3 and x1.  The product is
    conformally flat exactly when K1 = K2/f^2 with f constant.
    """
    fast = exprdsl.parse_expr(f, 3)
    for pt in itertools.product((-0.5, 0.0, 0.5), repeat=4):
        env = {f"x{i}": v for i, v in enumerate(pt)}
        try:
            fv = exprdsl.eval_real(fast, env)
        except ArithmeticError as exc:
            raise ConfigError(f"warp factor undefined at {pt}: {exc}") from exc
        if not fv > 0:
            raise ConfigError(f"warp factor must be positive (f = {fv} at {pt})")
    A, C = "((x3+x0)/2)", "((x3-x0)/2)"
    e1 = f"(1 + K1*({A}^2 + x1^2)/4)^(-2)"
    e2 = f"(({f})^2*(1 + K2*({C}^2 + x2^2)/4)^(-2))"
    entries = {
        (0, 0): f"({e1} - {e2})/4",
        (3, 3): f"({e1} - {e2})/4",
        (0, 3): f"({e1} + {e2})/4",
        (1, 1): e1,
        (2, 2): f"-{e2}",
    }
    return Metric.from_exprs(entries, 4, (2, 2), {"K1": float(K1), "K2": float(K2)}, name=name)


# registry --------------------------------------------------------------------

def _flags(fubini=None, wsf=None, plus=None, minus=None) -> dict[str, Flag | None]:
    return dict(zip(FLAG_NAMES, (fubini, wsf, plus, minus)))


S_ = Flag(True, "structural")
_ENTRIES: dict[str, CatalogEntry] = {}
_ALIASES: dict[str, str] = {}


def _register(name, kind, params, flags, builder, description="", aliases=()):
    _ENTRIES[name] = CatalogEntry(name, kind, MappingProxyType(dict(params)),
                                  MappingProxyType(flags), builder, description)
    for a in aliases:
        _ALIASES[a] = name


for _p, _q in ((1, 1), (2, 0), (2, 1), (3, 0), (2, 2)):
    _quartet = (_p, _q) == (1, 1)
    _register(f"flat_quadric_{_p + 1}{_q + 1}", "structure", {"p": _p, "q": _q},
              _flags(S_, Flag(True, "published", "flat model"),
                     S_ if _quartet else None, S_ if _quartet else None),
              (lambda p=_p, q=_q: flat_quadric(p, q)),
              f"flat model with fiber signature ({_p},{_q})")

_register("cayley_scroll", "structure", {},
          _flags(Flag(False, "structural", "cubic term y1^3/3"),
                 Flag(True, "published", "isotrivially flat"),
                 Flag(True, "published", "ruled fibers: F+ = 0 and vanishing tidal part"),
                 Flag(False, "oracle", "F- = 1 at y1 = 0")),
          cayley_scroll, "Cayley cubic scroll y0 = y1 y2 + y1^3/3", aliases=("cayley",))

_register("pp_wave", "structure", {"c12": "1", "c0": "x1^2"},
          _flags(S_, Flag(False, "oracle", "tidal operator is nilpotent but nonzero")),
          pp_wave, "split pp-wave y0 = y1 y2 + (x1)^2")

_register("cubic_halfflat", "structure",
          {"c111": "x1", "c12": "exp(0.3*x1)*(1+x2^2)*exp(-0.2*x3)"},
          _flags(Flag(False, "structural")),
          (lambda: cubic_family("x1", "exp(0.3*x1)*(1+x2^2)*exp(-0.2*x3)", "0", "0", "0",
                                name="cubic_halfflat")),
          "exploratory member of the cubic family with product-form c12; no half-flat claim")

_register("iso_log", "structure", {"Fy": "y1*y2 + log(1 + y1^2)"},
          _flags(Flag(False, "oracle"), Flag(True, "published", "isotrivially flat")),
          (lambda: isotrivially_flat("y1*y2 + log(1 + y1^2)", 3, (1, 1), "iso_log")),
          "isotrivially flat, non-polynomial fiber")

_register("iso_exp", "structure", {"Fy": "y1*y2 + 0.5*exp(y1) + 0.2*y2^3"},
          _flags(Flag(False, "oracle"), Flag(True, "published", "isotrivially flat")),
          (lambda: isotrivially_flat("y1*y2 + 0.5*exp(y1) + 0.2*y2^3", 3, (1, 1), "iso_exp")),
          "isotrivially flat with both ruling components curved")

_register("iso_cubic_5d", "structure", {"Fy": "y1^2 + y2^2 - y3^2 + 0.3*y1*y2*y3"},
          _flags(Flag(False, "oracle"), Flag(True, "published", "isotrivially flat")),
          (lambda: isotrivially_flat("y1^2 + y2^2 - y3^2 + 0.3*y1*y2*y3", 4, (2, 1), "iso_cubic_5d")),
          "five-dimensional isotrivially flat cubic perturbation of a quadric")

_register("metric_flat_22", "metric", {"g03": "1", "g12": "-1"},
          _flags(S_, S_, S_, S_),
          (lambda: Metric.from_exprs({(0, 3): "1", (1, 2): "-1"}, 4, (2, 2), name="metric_flat_22")),
          "2 dx0 dx3 - 2 dx1 dx2")

_register("metric_conformal_flat", "metric", {"factor": "exp(2*(0.3*x0 + 0.2*x1*x2 + 0.1*x3^2))"},
          _flags(S_, Flag(True, "structural", "Weyl tensor vanishes"), S_, S_),
          (lambda: Metric.from_exprs({(0, 3): "exp(2*(0.3*x0 + 0.2*x1*x2 + 0.1*x3^2))",
                                      (1, 2): "-exp(2*(0.3*x0 + 0.2*x1*x2 + 0.1*x3^2))"},
                                     4, (2, 2), name="metric_conformal_flat")),
          "conformal rescaling of the flat split metric")

_register("metric_pp_wave", "metric", {"g03": "1", "g12": "-1", "g33": "-2*x1^2"},
          _flags(S_, Flag(False, "oracle")),
          (lambda: Metric.from_exprs({(0, 3): "1", (1, 2): "-1", (3, 3): "-2*x1^2"}, 4, (2, 2),
                                     name="metric_pp_wave")),
          "pp-wave whose null cone is the pp_wave structure")

_register("metric_pp_wave_plus", "metric", {"g03": "1", "g12": "-1", "g33": "2*x1^2"},
          _flags(S_, Flag(False, "oracle")),
          (lambda: Metric.from_exprs({(0, 3): "1", (1, 2): "-1", (3, 3): "2*x1^2"}, 4, (2, 2),
                                     name="metric_pp_wave_plus")),
          "pp-wave with the opposite profile sign, y0 = y1 y2 - (x1)^2")

_register("metric_euclidean", "metric", {},
          _flags(),
          (lambda: Metric.from_exprs({(i, i): "1" for i in range(4)}, 4, (4, 0), name="metric_euclidean")),
          "definite metric with empty null cone")

_register("warped_flat", "metric", {"K1": 0.0, "K2": 0.0, "f": "1"},
          _flags(S_, S_, S_, S_),
          (lambda: warped_product_surfaces(0.0, 0.0, "1", "warped_flat")),
          "product of two flat surfaces")

_register("warped_cf", "metric", {"K1": 0.25, "K2": 1.0, "f": "2"},
          _flags(S_, Flag(True, "published", "K1 = K2/f^2 with constant f"), Flag(True, "oracle"),
                 Flag(True, "oracle")),
          (lambda: warped_product_surfaces(0.25, 1.0, "2", "warped_cf")),
          "conformally flat product of constant-curvature surfaces")

_register("warped_generic", "metric", {"K1": 0.6, "K2": -0.4, "f": "1 + 0.2*x1^2 + 0.1*(x0 + x3)"},
          _flags(S_, Flag(False, "oracle")),
          (lambda: warped_product_surfaces(0.6, -0.4, "1 + 0.2*x1^2 + 0.1*(x0 + x3)", "warped_generic")),
          "warped product with non-constant warp factor")

REGISTRY: Mapping[str, CatalogEntry] = MappingProxyType(_ENTRIES)
ALIASES: Mapping[str, str] = MappingProxyType(_ALIASES)


def names(kind: str | None = None) -> list[str]:
    return sorted(k for k, e in REGISTRY.items() if kind is None or e.kind == kind)


def get(name: str) -> CatalogEntry:
    key = ALIASES.get(name, name)
    try:
        return REGISTRY[key]
    except KeyError:
        raise ConfigError(f"unknown catalog entry {name!r}; try 'catalog list'") from None


def structures() -> list[CatalogEntry]:
    """Entries that define a causal structure (metrics with an empty cone excluded)."""
    return [e for e in REGISTRY.values() if e.name != "metric_euclidean"]


def describe(name: str) -> dict:
    e = get(name)
    obj = e.build()
    out = {"name": e.name, "kind": e.kind, "description": e.description,
           "params": dict(e.params),
           "flags": {k: (None if f is None else {"value": f.value, "source": f.source, "note": f.note})
                     for k, f in e.flags.items()}}
    if isinstance(obj, CausalStructure):
        out.update(n=obj.n, signature=list(obj.signature),
                   F=exprdsl.pretty(obj.expr) if obj.expr is not None else None)
    else:
        out.update(dim=obj.dim, signature=list(obj.signature),
                   g={f"g{i}{j}": exprdsl.pretty(a) for (i, j), a in sorted((obj.exprs or {}).items())})
    return out
