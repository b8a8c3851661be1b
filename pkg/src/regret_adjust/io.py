"""Text formats for instances, decision rules and solve reports.

All three are JSON documents written by one deterministic formatter: keys in
a fixed order, one matrix row per line, floats in shortest round-trip repr,
non-finite values as the strings "inf", "-inf" and "nan".  Dumping a parsed
document reproduces it byte for byte.

Instance document::

    {
      "format": "regret-adjust/instance",
      "metadata": {"name": str, "n_x": int, "n_u": int},
      "objective": {"H": matrix | {"diagonal": vector}, "c": vector, "d": float},
      "constraints": {"A": matrix, "b0": vector, "B": matrix},
      "uBox": {"lower": vector, "upper": vector},
      "xBox": {"lower": vector, "upper": vector},
      "mask": boolean matrix | "causal(kappa,P,T)" | "full" | "static",
      "N": float,
      "nominal": vector,            (optional)
      "pumpParams": {...}           (optional, checked against the matrices)
    }
"""

from __future__ import annotations

import json
import math
import re

import numpy as np

from .algorithm import (
    AddedBy,
    AlgoConfig,
    GivenScenarios,
    IterationRecord,
    NominalOnly,
    RandomExtremalFraction,
    SolveReport,
    Status,
)
from .core import (
    AdjustabilityMask,
    Box,
    ConstraintSystem,
    DecisionRule,
    Discretization,
    InstanceError,
    ProblemInstance,
    QuadraticObjective,
)
from .pump import PumpParams, build_instance

INSTANCE_FORMAT = "regret-adjust/instance"
RULE_FORMAT = "regret-adjust/rule"
REPORT_FORMAT = "regret-adjust/report"
SCENARIOS_FORMAT = "regret-adjust/scenarios"


class FormatError(ValueError):
    """Malformed document; carries the position when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line, self.column = line, column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)


# --------------------------------------------------------------------------
# formatting


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return repr(x)


def _is_scalar(v) -> bool:
    return v is None or isinstance(v, (bool, int, float, str, np.integer, np.floating, np.bool_))


def _scalar(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, str):
        return json.dumps(v, ensure_ascii=False)
    return _num(v)


def _format(v, level: int) -> str:
    pad = "  " * (level + 1)
    end = "  " * level
    if isinstance(v, np.ndarray):
        v = v.tolist()
    if _is_scalar(v):
        return _scalar(v)
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_format(val, level + 1)}" for k, val in v.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    v = list(v)
    if not v:
        return "[]"
    if all(_is_scalar(x) for x in v):
        return "[" + ", ".join(_scalar(x) for x in v) + "]"
    return "[\n" + ",\n".join(pad + _format(x, level + 1) for x in v) + "\n" + end + "]"


def dumps(doc: dict) -> str:
    return _format(doc, 0) + "\n"


def loads(text: str) -> dict:
    if not text.strip():
        raise FormatError("empty document", 1, 1)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"syntax error: {exc.msg}", exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise FormatError("top level must be an object", 1, 1)
    return doc


# --------------------------------------------------------------------------
# field decoding


def _float(v, name: str) -> float:
    if isinstance(v, str) and v in ("inf", "-inf", "nan"):
        return float(v)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise InstanceError(name, f"expected a number, got {v!r}")
    return float(v)


def _vector(v, name: str, size: int | None = None) -> np.ndarray:
    if not isinstance(v, list):
        raise InstanceError(name, "expected a list of numbers")
    out = np.array([_float(x, name) for x in v], dtype=float)
    if size is not None and out.size != size:
        raise InstanceError(name, f"expected length {size}, got {out.size}")
    return out


def _matrix(v, name: str, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    if not isinstance(v, list) or not all(isinstance(r, list) for r in v):
        raise InstanceError(name, "expected a list of rows")
    data = [_vector(r, name) for r in v]
    if rows is not None and len(data) != rows:
        raise InstanceError(name, f"expected {rows} rows, got {len(data)}")
    if not data:
        return np.zeros((0, cols or 0))
    widths = {r.size for r in data}
    if len(widths) != 1 or (cols is not None and widths != {cols}):
        raise InstanceError(name, f"rows must all have length {cols if cols is not None else widths}")
    return np.vstack(data)


def _section(doc: dict, key: str, kind=dict):
    if key not in doc:
        raise InstanceError(key, "missing section")
    v = doc[key]
    if not isinstance(v, kind):
        raise InstanceError(key, f"expected {kind.__name__}")
    return v


_CAUSAL = re.compile(r"^\s*causal\(\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*\)\s*$")


def _mask(v, n_x: int, n_u: int) -> AdjustabilityMask:
    if isinstance(v, str):
        if v == "full":
            return AdjustabilityMask.full(n_x, n_u)
        if v == "static":
            return AdjustabilityMask.static(n_x, n_u)
        m = _CAUSAL.match(v)
        if not m:
            raise InstanceError("mask", f"unknown mask shorthand {v!r}")
        kappa, P, T = map(int, m.groups())
        if P * T != n_x or T != n_u:
            raise InstanceError("mask", f"causal({kappa},{P},{T}) does not fit n_x={n_x}, n_u={n_u}")
        return AdjustabilityMask.causal(kappa, P, T)
    if not isinstance(v, list) or len(v) != n_x:
        raise InstanceError("mask", f"expected {n_x} rows of booleans")
    rows = []
    for r in v:
        if not isinstance(r, list) or len(r) != n_u or not all(isinstance(b, bool) for b in r):
            raise InstanceError("mask", f"expected rows of {n_u} booleans")
        rows.append(r)
    return AdjustabilityMask(np.array(rows, dtype=bool))


def _mask_value(instance: ProblemInstance):
    mask = instance.mask
    params = instance.extra.get("pumpParams")
    if params is not None:
        shorthand = AdjustabilityMask.causal(params.kappa, params.P, params.T)
        if shorthand == mask:
            return f"causal({params.kappa},{params.P},{params.T})"
    if mask.allowed.all():
        return "full"
    if not mask.allowed.any():
        return "static"
    return [[bool(b) for b in row] for row in mask.allowed]


# --------------------------------------------------------------------------
# instances


def instance_to_dict(instance: ProblemInstance) -> dict:
    obj = instance.objective
    H = {"diagonal": np.diag(obj.H)} if obj.is_diagonal else obj.H
    doc = {
        "format": INSTANCE_FORMAT,
        "metadata": {"name": instance.name, "n_x": instance.n_x, "n_u": instance.n_u},
        "objective": {"H": H, "c": obj.c, "d": obj.d},
        "constraints": {"A": instance.constraints.A, "b0": instance.constraints.b0, "B": instance.constraints.B},
        "uBox": {"lower": instance.uBox.lower, "upper": instance.uBox.upper},
        "xBox": {"lower": instance.xBox.lower, "upper": instance.xBox.upper},
        "mask": _mask_value(instance),
        "N": instance.N,
    }
    if instance.nominal is not None:
        doc["nominal"] = instance.nominal
    params = instance.extra.get("pumpParams")
    if params is not None:
        doc["pumpParams"] = params.to_dict()
    return doc


def instance_from_dict(doc: dict) -> ProblemInstance:
    fmt = doc.get("format", INSTANCE_FORMAT)
    if fmt != INSTANCE_FORMAT:
        raise InstanceError("format", f"expected {INSTANCE_FORMAT!r}, got {fmt!r}")
    meta = _section(doc, "metadata")
    name = meta.get("name", "")
    if not isinstance(name, str):
        raise InstanceError("metadata.name", "expected a string")
    try:
        n_x, n_u = int(meta["n_x"]), int(meta["n_u"])
    except (KeyError, TypeError, ValueError):
        raise InstanceError("metadata", "n_x and n_u must be integers") from None

    o = _section(doc, "objective")
    Hraw = o.get("H")
    if isinstance(Hraw, dict):
        H = np.diag(_vector(Hraw.get("diagonal"), "objective.H.diagonal", n_x))
    else:
        H = _matrix(Hraw, "objective.H", n_x, n_x)
    objective = QuadraticObjective(H, _vector(o.get("c"), "objective.c", n_x), _float(o.get("d", 0.0), "objective.d"))

    c = _section(doc, "constraints")
    b0 = _vector(c.get("b0"), "constraints.b0")
    A = _matrix(c.get("A"), "constraints.A", b0.size, n_x)
    B = _matrix(c.get("B"), "constraints.B", b0.size, n_u)
    constraints = ConstraintSystem(A, b0, B)

    boxes = {}
    for key, dim in (("uBox", n_u), ("xBox", n_x)):
        sec = _section(doc, key)
        lo = _vector(sec.get("lower"), f"{key}.lower", dim)
        hi = _vector(sec.get("upper"), f"{key}.upper", dim)
        try:
            boxes[key] = Box(lo, hi)
        except InstanceError as exc:
            raise InstanceError(key, str(exc)) from None
        except ValueError as exc:
            raise InstanceError(key, str(exc)) from None

    if "mask" not in doc:
        raise InstanceError("mask", "missing section")
    mask = _mask(doc["mask"], n_x, n_u)
    if "N" not in doc:
        raise InstanceError("N", "missing")
    N = _float(doc["N"], "N")
    nominal = _vector(doc["nominal"], "nominal", n_u) if doc.get("nominal") is not None else None

    extra = {}
    params = None
    if doc.get("pumpParams") is not None:
        try:
            params = PumpParams.from_dict(doc["pumpParams"])
        except TypeError as exc:
            raise InstanceError("pumpParams", str(exc)) from None
        extra["pumpParams"] = params
    inst = ProblemInstance(objective, constraints, boxes["uBox"], boxes["xBox"], mask, N, nominal, name=name, extra=extra)
    if params is not None and build_instance(params, name) != inst:
        raise InstanceError("pumpParams", "pump parameters do not reproduce the explicit matrices")
    return inst


def parse_instance(text: str) -> ProblemInstance:
    return instance_from_dict(loads(text))


def serialize_instance(instance: ProblemInstance) -> str:
    return dumps(instance_to_dict(instance))


def load_instance(path) -> ProblemInstance:
    with open(path, encoding="utf-8") as fh:
        return parse_instance(fh.read())


# --------------------------------------------------------------------------
# rules and scenarios


def rule_to_dict(rule: DecisionRule) -> dict:
    return {"format": RULE_FORMAT, "pi0": rule.pi0, "Pi": rule.Pi, "N": rule.N}


def rule_from_dict(doc: dict) -> DecisionRule:
    pi0 = _vector(doc.get("pi0"), "pi0")
    Pi = _matrix(doc.get("Pi"), "Pi", pi0.size)
    if Pi.shape[0] == 0:
        Pi = np.zeros((pi0.size, 0))
    return DecisionRule(pi0, Pi, _float(doc.get("N", "inf"), "N"))


def parse_rule(text: str) -> DecisionRule:
    doc = loads(text)
    if doc.get("format") == REPORT_FORMAT:
        doc = _section(doc, "rule")
    return rule_from_dict(doc)


def serialize_rule(rule: DecisionRule) -> str:
    return dumps(rule_to_dict(rule))


def parse_scenarios(text: str, n_u: int | None = None) -> np.ndarray:
    """A scenario list: either a bare JSON list of vectors or {"scenarios": [...]}."""
    if not text.strip():
        raise FormatError("empty document", 1, 1)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"syntax error: {exc.msg}", exc.lineno, exc.colno) from None
    if isinstance(doc, dict):
        doc = doc.get("scenarios")
    return _matrix(doc, "scenarios", cols=n_u)


def serialize_scenarios(points) -> str:
    return dumps({"format": SCENARIOS_FORMAT, "scenarios": np.asarray(points, dtype=float)})


# --------------------------------------------------------------------------
# reports


def _init_to_str(spec) -> str | None:
    if spec is None:
        return None
    if isinstance(spec, NominalOnly):
        return "nominal"
    if isinstance(spec, RandomExtremalFraction):
        return f"fraction:{spec.fraction!r}:{spec.rngSeed}"
    if isinstance(spec, GivenScenarios):
        return "given"
    raise TypeError(spec)


def report_to_dict(report: SolveReport) -> dict:
    cfg = report.config or AlgoConfig()
    history = []
    for rec in report.history:
        history.append(
            {
                "k": rec.k,
                "addedScenario": None if rec.addedScenario is None else rec.addedScenario,
                "addedBy": None if rec.addedBy is None else rec.addedBy.value,
                "rK": rec.rK,
                "maxRegretUpper": rec.maxRegretUpper,
                "violation": rec.violation,
                "masterKkt": rec.masterKkt,
                "bnbNodes": rec.bnbNodes,
                "stageTimings": {k: rec.stageTimings.get(k, 0.0) for k in ("stage1", "stage2", "stage3")},
            }
        )
    disc = [
        {"u": sc.u, "phi": sc.phi, "x_star": sc.x_star, "origin": origin.value}
        for sc, origin in zip(report.discretizationFinal, report.origins)
    ]
    config = {
        "epsilon": cfg.epsilon,
        "tolFeas": cfg.tolFeas,
        "epsBnb": cfg.eps_bnb,
        "maxOuterIterations": cfg.maxOuterIterations,
        "nodeLimit": cfg.nodeLimit,
        "probeBudget": cfg.probeBudget,
        "seed": cfg.seed,
        "initialDiscretization": _init_to_str(cfg.initialDiscretization),
        "timeBudget": cfg.timeBudget,
    }
    return {
        "format": REPORT_FORMAT,
        "status": report.status.value,
        "mode": report.mode,
        "lowerBound": report.lowerBound,
        "upperBound": report.upperBound,
        "message": report.message,
        "wallTime": report.wallTime,
        "lowerLevelSolves": report.lowerLevelSolves,
        "config": config,
        "rule": rule_to_dict(report.rule),
        "history": history,
        "discretization": disc,
    }


def _optional_vector(v, name):
    return None if v is None else _vector(v, name)


def report_from_dict(doc: dict, box: Box | None = None) -> SolveReport:
    if doc.get("format") != REPORT_FORMAT:
        raise InstanceError("format", f"expected {REPORT_FORMAT!r}")
    c = _section(doc, "config")
    init = c.get("initialDiscretization")
    spec = None
    if init == "nominal":
        spec = NominalOnly()
    elif isinstance(init, str) and init.startswith("fraction:"):
        _, frac, seed = init.split(":")
        spec = RandomExtremalFraction(float(frac), int(seed))
    pts = [(_vector(e["u"], "discretization.u"), _float(e["phi"], "discretization.phi"), _vector(e["x_star"], "discretization.x_star"), AddedBy(e["origin"])) for e in doc.get("discretization", [])]
    if box is None:
        dim = pts[0][0].size if pts else 0
        lo = np.min([p[0] for p in pts], axis=0) if pts else np.zeros(dim)
        hi = np.max([p[0] for p in pts], axis=0) if pts else np.zeros(dim)
        box = Box(lo, hi)
    disc = Discretization(box)
    origins = []
    for u, phi, x, origin in pts:
        disc.add(u, phi, x)
        origins.append(origin)
    cfg = AlgoConfig(
        epsilon=_float(c["epsilon"], "config.epsilon"),
        tolFeas=_float(c["tolFeas"], "config.tolFeas"),
        initialDiscretization=spec,
        maxOuterIterations=int(c["maxOuterIterations"]),
        epsBnb=_float(c["epsBnb"], "config.epsBnb"),
        nodeLimit=int(c["nodeLimit"]),
        probeBudget=int(c["probeBudget"]),
        seed=int(c["seed"]),
        timeBudget=None if c.get("timeBudget") is None else _float(c["timeBudget"], "config.timeBudget"),
    )
    history = []
    for h in doc.get("history", []):
        history.append(
            IterationRecord(
                k=int(h["k"]),
                addedScenario=_optional_vector(h.get("addedScenario"), "history.addedScenario"),
                addedBy=None if h.get("addedBy") is None else AddedBy(h["addedBy"]),
                rK=_float(h["rK"], "history.rK"),
                maxRegretUpper=None if h.get("maxRegretUpper") is None else _float(h["maxRegretUpper"], "history.maxRegretUpper"),
                stageTimings={k: _float(v, "history.stageTimings") for k, v in h["stageTimings"].items()},
                violation=_float(h["violation"], "history.violation"),
                masterKkt=_float(h.get("masterKkt", 0.0), "history.masterKkt"),
                bnbNodes=int(h.get("bnbNodes", 0)),
            )
        )
    return SolveReport(
        status=Status(doc["status"]),
        mode=doc["mode"],
        rule=rule_from_dict(_section(doc, "rule")),
        lowerBound=_float(doc["lowerBound"], "lowerBound"),
        upperBound=_float(doc["upperBound"], "upperBound"),
        history=history,
        discretizationFinal=disc,
        origins=origins,
        config=cfg,
        wallTime=_float(doc.get("wallTime", 0.0), "wallTime"),
        lowerLevelSolves=int(doc.get("lowerLevelSolves", 0)),
        message=doc.get("message", ""),
    )


def serialize_report(report: SolveReport) -> str:
    return dumps(report_to_dict(report))


def parse_report(text: str, box: Box | None = None) -> SolveReport:
    try:
        return report_from_dict(loads(text), box)
    except KeyError as exc:
        raise FormatError(f"report is missing field {exc.args[0]!r}") from None


# --------------------------------------------------------------------------
# shipped instance files


def data_path(name: str):
    from importlib.resources import files

    return files("regret_adjust") / "data" / f"{name}.json"


def shipped_instance_text(name: str) -> str:
    return data_path(name).read_text(encoding="utf-8")


def shipped_instance_names() -> list[str]:
    from importlib.resources import files

    return sorted(p.name[:-5] for p in (files("regret_adjust") / "data").iterdir() if p.name.endswith(".json"))


__all__ = [
    "FormatError",
    "dumps",
    "loads",
    "parse_instance",
    "serialize_instance",
    "load_instance",
    "instance_to_dict",
    "instance_from_dict",
    "parse_rule",
    "serialize_rule",
    "rule_to_dict",
    "rule_from_dict",
    "parse_scenarios",
    "serialize_scenarios",
    "parse_report",
    "serialize_report",
    "report_to_dict",
    "report_from_dict",
    "shipped_instance_text",
    "shipped_instance_names",
]
