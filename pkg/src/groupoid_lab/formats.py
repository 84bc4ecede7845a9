"""Serialisation of certificates, operators and run configurations."""

from __future__ import annotations

import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any

import numpy as np
import scipy.io

CERT_FORMAT = "gpdcert/1"
RUN_FORMAT = "gpdrun/1"
EXACT_LIMIT_CAP = 20


class ConfigError(ValueError):
    pass


def to_jsonable(obj: Any) -> Any:
    """Fractions become strings, sets become sorted lists, dataclasses become dicts."""
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (frozenset, set)):
        return sorted(to_jsonable(x) for x in obj)
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(x) for x in obj]
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def certificate_dict(cert) -> dict:
    """Plain fields of an expansion Certificate (nested level certificates included)."""
    return {
        "verdict": cert.verdict.value,
        "method": cert.method,
        "C": str(cert.C),
        "alpha_lo": None if cert.alpha_lo is None else str(cert.alpha_lo),
        "beta_hi": str(cert.beta_hi),
        "Y": to_jsonable(cert.Y),
        "witness": None if cert.witness is None else to_jsonable(cert.witness),
        "ratio": None if cert.ratio is None else str(cert.ratio),
        "worst": None if cert.worst is None else to_jsonable(cert.worst),
        "samples": cert.samples,
        "seed": cert.seed,
        "levels": [certificate_dict(c) for c in cert.levels],
        "note": cert.note,
    }


def certificate_from_dict(d: dict):
    from .expansion import Certificate, Verdict

    opt = lambda v: None if v is None else Fraction(v)
    return Certificate(
        verdict=Verdict(d["verdict"]),
        method=d["method"],
        C=Fraction(d["C"]),
        Y=frozenset(d["Y"]),
        alpha_lo=opt(d.get("alpha_lo")),
        beta_hi=Fraction(d.get("beta_hi", "1/2")),
        witness=None if d.get("witness") is None else frozenset(d["witness"]),
        ratio=opt(d.get("ratio")),
        worst=None if d.get("worst") is None else frozenset(d["worst"]),
        samples=d.get("samples", 0),
        seed=d.get("seed"),
        levels=tuple(certificate_from_dict(c) for c in d.get("levels", [])),
        note=d.get("note", ""),
    )


def matrix_block(M: np.ndarray, comment: str = "") -> str:
    """Dense matrix-market text for a real or complex matrix."""
    buf = io.BytesIO()
    scipy.io.mmwrite(buf, np.asarray(M), comment=comment)
    return buf.getvalue().decode()


def read_matrix_block(text: str) -> np.ndarray:
    return np.asarray(scipy.io.mmread(io.BytesIO(text.encode())))


def write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(data: dict) -> str:
    return json.dumps(to_jsonable(data), indent=2, sort_keys=False) + "\n"


def load_json(path: str) -> dict:
    """Read JSON, turning syntax errors into ConfigError with line and column."""
    with open(path) as fh:
        text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


@dataclass
class RunConfig:
    command: str
    instance: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    exact_limit: int = 14
    budget: int = 2000
    seed: int = 0
    out: str | None = None
    csv: str | None = None

    def __post_init__(self):
        if not 1 <= self.exact_limit <= EXACT_LIMIT_CAP:
            raise ConfigError(f"exact_limit must lie in [1, {EXACT_LIMIT_CAP}]")

    @classmethod
    def from_json(cls, data: dict, where: str = "config") -> "RunConfig":
        if data.get("format") != RUN_FORMAT:
            raise ConfigError(f"{where}: expected format {RUN_FORMAT!r}")
        budgets = data.get("budgets", {})
        try:
            return cls(
                command=data["command"],
                instance=data.get("instance", {}),
                constants=data.get("constants", {}),
                exact_limit=int(budgets.get("exact_limit", 14)),
                budget=int(budgets.get("samples", 2000)),
                seed=int(budgets.get("seed", 0)),
                out=data.get("out"),
                csv=data.get("csv"),
            )
        except KeyError as exc:
            raise ConfigError(f"{where}: missing field {exc}") from None
