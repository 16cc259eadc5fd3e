"""JSON problem files: parsing, validation and canonical serialization.

Parsing happens in two stages. ``parse_problem`` checks the structure of
the document (keys, types, nesting) and raises :class:`ParseError`.
``build_problem`` constructs the poset, cofunctor and losses, so order
axioms, functoriality and stochasticity violations surface there as
subclasses of ``ValueError`` (``CycleError``, ``FunctorialityError``,
``ValidationError``, ...).

Element identifiers are strings. Maps and kernels are keyed ``"a->b"``
with ``a`` the upper element; matrices are row-major nested lists.
Region keys are the sorted, comma-joined variable ids (string sort).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from regionalized.channels import KernelNetwork
from regionalized.errors import ParseError, ValidationError
from regionalized.functor import Cofunctor
from regionalized.gbp import RegionGraphProblem, region_key
from regionalized.loss import FreeEnergy, LocalLossFamily, Quadratic
from regionalized.poset import Poset, build_poset
from regionalized.solver import SolverConfig

FORMAT_VERSION = 1
KINDS = ("explicit", "marginalization", "kernels")
DEFAULT_METHOD = {"explicit": "generic", "marginalization": "gbp", "kernels": "channel"}
SOLVER_KEYS = ("method", "max_iters", "tol_message", "tol_residual", "damping", "seed", "sense", "init")


def _require(d, key, kind, where):
    if not isinstance(d, dict) or key not in d:
        raise ParseError(f"{where}: missing key {key!r}")
    v = d[key]
    if not isinstance(v, kind):
        raise ParseError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}")
    return v


def _matrix(m, where):
    try:
        a = np.array(m, dtype=np.float64)
    except (TypeError, ValueError):
        raise ParseError(f"{where}: not a numeric matrix") from None
    if a.ndim != 2:
        raise ParseError(f"{where}: expected a matrix (list of rows)")
    return a


def _vector(v, where):
    try:
        a = np.array(v, dtype=np.float64)
    except (TypeError, ValueError):
        raise ParseError(f"{where}: not a numeric vector") from None
    if a.ndim != 1:
        raise ParseError(f"{where}: expected a flat list of numbers")
    return a


def _pair_key(key, where):
    parts = key.split("->")
    if len(parts) != 2 or not all(parts):
        raise ParseError(f"{where}: pair key {key!r} must look like 'upper->lower'")
    return parts[0], parts[1]


@dataclass
class Problem:
    """Validated problem document plus the objects built from it."""

    doc: dict
    kind: str
    poset: Poset
    cofunctor: Cofunctor
    losses: LocalLossFamily
    solver: SolverConfig
    regions: RegionGraphProblem | None = None
    network: KernelNetwork | None = None
    hamiltonians: list = field(default_factory=list)

    def __eq__(self, other):
        return isinstance(other, Problem) and canonical_json(self.doc) == canonical_json(other.doc)

    @property
    def element_names(self) -> list[str]:
        if self.kind == "marginalization":
            return [region_key(r) for r in self.regions.regions]
        return [str(e) for e in self.poset.elements]

    @property
    def sha256(self) -> str:
        return hashlib.sha256(canonical_json(self.doc).encode()).hexdigest()


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def parse_problem(doc: Any) -> dict:
    """Structural checks and normalization to the canonical document."""
    if not isinstance(doc, dict):
        raise ParseError("problem document must be a JSON object")
    version = _require(doc, "format_version", int, "problem")
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported format_version {version}; expected {FORMAT_VERSION}")
    functor = _require(doc, "functor", dict, "problem")
    kind = _require(functor, "kind", str, "functor")
    if kind not in KINDS:
        raise ParseError(f"functor.kind must be one of {KINDS}, got {kind!r}")
    out: dict = {"format_version": FORMAT_VERSION}

    if "poset" in doc:
        poset = _require(doc, "poset", dict, "problem")
        elements = [str(e) for e in _require(poset, "elements", list, "poset")]
        relations = _require(poset, "relations", list, "poset")
        for r in relations:
            if not (isinstance(r, list) and len(r) == 2):
                raise ParseError(f"poset.relations: {r!r} is not a [lower, upper] pair")
        out["poset"] = {"elements": elements, "relations": [[str(a), str(b)] for a, b in relations]}
    elif kind != "marginalization":
        raise ParseError("problem: missing key 'poset'")

    if kind == "explicit":
        dims = _require(functor, "dims", dict, "functor")
        maps = _require(functor, "maps", dict, "functor")
        f = {
            "kind": kind,
            "dims": {str(k): int(v) for k, v in dims.items()},
            "maps": {k: _matrix(m, f"functor.maps[{k}]").tolist() for k, m in maps.items()},
        }
        for k in maps:
            _pair_key(k, "functor.maps")
        loss = _require(doc, "loss", dict, "problem")
        family = _require(loss, "family", str, "loss")
        if family == "free_energy":
            H = _require(loss, "hamiltonians", dict, "loss")
            out["loss"] = {
                "family": family,
                "beta": float(loss.get("beta", 1.0)),
                "hamiltonians": {str(k): _vector(v, f"loss.hamiltonians[{k}]").tolist() for k, v in H.items()},
            }
        elif family == "quadratic":
            A = _require(loss, "A", dict, "loss")
            b = _require(loss, "b", dict, "loss")
            out["loss"] = {
                "family": family,
                "A": {str(k): _matrix(v, f"loss.A[{k}]").tolist() for k, v in A.items()},
                "b": {str(k): _vector(v, f"loss.b[{k}]").tolist() for k, v in b.items()},
            }
        else:
            raise ParseError(f"loss.family must be 'free_energy' or 'quadratic', got {family!r}")
    elif kind == "marginalization":
        variables = _require(functor, "variables", dict, "functor")
        regions = _require(functor, "regions", list, "functor")
        for r in regions:
            if not isinstance(r, list):
                raise ParseError(f"functor.regions: {r!r} is not a list of variable ids")
        H = functor.get("hamiltonians", {})
        if not isinstance(H, dict):
            raise ParseError("functor.hamiltonians: expected an object keyed by region")
        f = {
            "kind": kind,
            "variables": {str(k): int(v) for k, v in variables.items()},
            "regions": [sorted(str(v) for v in r) for r in regions],
            "hamiltonians": {str(k): _vector(v, f"functor.hamiltonians[{k}]").tolist() for k, v in H.items()},
        }
    else:
        spaces = _require(functor, "state_spaces", dict, "functor")
        kernels = _require(functor, "kernels", dict, "functor")
        H = _require(functor, "hamiltonians", dict, "functor")
        for k in kernels:
            _pair_key(k, "functor.kernels")
        f = {
            "kind": kind,
            "state_spaces": {str(k): int(v) for k, v in spaces.items()},
            "kernels": {k: _matrix(m, f"functor.kernels[{k}]").tolist() for k, m in kernels.items()},
            "hamiltonians": {str(k): _vector(v, f"functor.hamiltonians[{k}]").tolist() for k, v in H.items()},
        }
    out["functor"] = f
    if kind != "explicit" and "loss" in doc:
        loss = doc["loss"]
        if not (isinstance(loss, dict) and loss.get("family", "free_energy") == "free_energy"):
            raise ParseError(f"{kind} problems imply the free_energy family")

    solver = doc.get("solver", {})
    if not isinstance(solver, dict):
        raise ParseError("solver: expected an object")
    unknown = set(solver) - set(SOLVER_KEYS)
    if unknown:
        raise ParseError(f"solver: unknown keys {sorted(unknown)}")
    out["solver"] = {"method": DEFAULT_METHOD[kind], **solver}
    try:
        SolverConfig(**out["solver"])
    except (TypeError, ValueError) as exc:
        raise ParseError(f"solver: {exc}") from None
    return out


def _lookup(table, name, where):
    if name not in table:
        raise ValidationError(f"{where}: no entry for element {name!r}", [(where, name)])
    return table[name]


def build_problem(doc: dict) -> Problem:
    """Construct the model objects; raises ``ValueError`` subclasses on invalid content."""
    kind = doc["functor"]["kind"]
    f_doc = doc["functor"]
    cfg = SolverConfig(**doc["solver"])
    poset = None
    if "poset" in doc:
        p = doc["poset"]
        poset = build_poset([tuple(r) for r in p["relations"]], p["elements"])

    if kind == "marginalization":
        var = f_doc["variables"]
        regions = [tuple(r) for r in f_doc["regions"]]
        keys = [region_key(r) for r in regions]
        for k in f_doc["hamiltonians"]:
            if k not in keys:
                raise ValidationError(f"hamiltonian given for undeclared region {k!r}", [k])
        H = {r: f_doc["hamiltonians"][k] for r, k in zip(regions, keys) if k in f_doc["hamiltonians"]}
        rp = RegionGraphProblem(var, regions, H)
        if poset is not None:
            _check_inclusion(poset, rp)
        if cfg.method not in ("gbp", "generic", "newton"):
            raise ValidationError(f"method {cfg.method!r} does not apply to marginalization problems")
        return Problem(doc, kind, rp.poset, rp.cofunctor, rp.losses, cfg, regions=rp, hamiltonians=rp.hamiltonians)

    names = list(poset.elements)
    if kind == "kernels":
        spaces = {e: _lookup(f_doc["state_spaces"], e, "state_spaces") for e in names}
        kernels = {_pair_key(k, "kernels"): np.array(m) for k, m in f_doc["kernels"].items()}
        net = KernelNetwork(poset, spaces, kernels)
        H = [np.array(_lookup(f_doc["hamiltonians"], e, "hamiltonians")) for e in names]
        L = FreeEnergy(H)
        L.check_dims(net.state_spaces)
        if cfg.method not in ("channel", "generic", "newton"):
            raise ValidationError(f"method {cfg.method!r} does not apply to kernel networks")
        return Problem(doc, kind, poset, net.cofunctor, L, cfg, network=net, hamiltonians=H)

    dims = {e: _lookup(f_doc["dims"], e, "dims") for e in names}
    maps = {_pair_key(k, "maps"): np.array(m) for k, m in f_doc["maps"].items()}
    f = Cofunctor(poset, dims, maps)
    loss = doc["loss"]
    if loss["family"] == "free_energy":
        H = [np.array(_lookup(loss["hamiltonians"], e, "loss.hamiltonians")) for e in names]
        L = FreeEnergy(H, loss["beta"])
    else:
        A = [_lookup(loss["A"], e, "loss.A") for e in names]
        b = [_lookup(loss["b"], e, "loss.b") for e in names]
        L = Quadratic(A, b)
        H = []
    L.check_dims(f.dims)
    if cfg.method not in ("generic", "newton"):
        raise ValidationError(f"method {cfg.method!r} needs a marginalization or kernel problem")
    return Problem(doc, kind, poset, f, L, cfg, hamiltonians=H)


def _check_inclusion(poset: Poset, rp: RegionGraphProblem):
    keys = [region_key(r) for r in rp.regions]
    if sorted(poset.elements) != sorted(keys):
        raise ValidationError("poset elements must be the region keys", [])
    perm = [poset.idx(k) for k in keys]
    if not np.array_equal(poset.leq[np.ix_(perm, perm)], rp.poset.leq):
        raise ValidationError("declared poset differs from region inclusion", [])


def load_problem(path) -> Problem:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None
    return build_problem(parse_problem(raw))


def serialize_problem(p: Problem) -> dict:
    """The canonical document; ``build_problem(parse_problem(.))`` reproduces ``p``."""
    return json.loads(canonical_json(p.doc))


def problem_from_regions(rp: RegionGraphProblem, solver: dict | None = None) -> dict:
    """Problem document for a region graph problem (string variable ids)."""
    return parse_problem({
        "format_version": FORMAT_VERSION,
        "functor": {
            "kind": "marginalization",
            "variables": {str(v): c for v, c in rp.variables.items()},
            "regions": [[str(v) for v in r] for r in rp.regions],
            "hamiltonians": {region_key(r): h.tolist() for r, h in zip(rp.regions, rp.hamiltonians)},
        },
        "solver": solver or {},
    })


def problem_from_cofunctor(f: Cofunctor, L: LocalLossFamily, solver: dict | None = None) -> dict:
    names = [str(e) for e in f.poset.elements]
    pairs = [(names[a], names[b]) for a, b in f.pairs]
    doc = {
        "format_version": FORMAT_VERSION,
        "poset": {"elements": names, "relations": [[lo, up] for up, lo in pairs]},
        "functor": {
            "kind": "explicit",
            "dims": {n: int(d) for n, d in zip(names, f.dims)},
            "maps": {f"{u}->{l}": f.maps[pr].tolist() for (u, l), pr in zip(pairs, f.pairs)},
        },
        "solver": solver or {},
    }
    if isinstance(L, Quadratic):
        doc["loss"] = {
            "family": "quadratic",
            "A": {n: A.tolist() for n, A in zip(names, L.A)},
            "b": {n: b.tolist() for n, b in zip(names, L.b)},
        }
    elif isinstance(L, FreeEnergy):
        doc["loss"] = {
            "family": "free_energy",
            "beta": L.beta,
            "hamiltonians": {n: h.tolist() for n, h in zip(names, L.hamiltonians)},
        }
    else:
        raise ValueError("only free_energy and quadratic losses can be written to problem files")
    return parse_problem(doc)


def problem_from_network(k: KernelNetwork, hamiltonians, solver: dict | None = None) -> dict:
    names = [str(e) for e in k.poset.elements]
    f = k.cofunctor
    pairs = [(names[a], names[b]) for a, b in f.pairs]
    return parse_problem({
        "format_version": FORMAT_VERSION,
        "poset": {"elements": names, "relations": [[lo, up] for up, lo in pairs]},
        "functor": {
            "kind": "kernels",
            "state_spaces": {n: int(d) for n, d in zip(names, f.dims)},
            "kernels": {f"{u}->{l}": f.maps[pr].tolist() for (u, l), pr in zip(pairs, f.pairs)},
            "hamiltonians": {n: np.asarray(h, dtype=float).tolist() for n, h in zip(names, hamiltonians)},
        },
        "solver": solver or {},
    })
