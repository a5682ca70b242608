"""Report records shared by the verification operations and the suite runner."""

from __future__ import annotations

import hashlib
import math
from typing import Annotated, Any, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import AliasChoices, BaseModel, ConfigDict, Field

SCHEMA_VERSION = "1.0"


def digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        if hasattr(a, "values"):
            a = a.values
        a = np.ascontiguousarray(np.asarray(a, dtype=float))
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]


class InequalityReport(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    kind: Literal["inequality"] = "inequality"
    name: str
    lhs: float
    rhs: float
    margin: float
    tolerance: float
    passed: bool = Field(serialization_alias="pass", validation_alias=AliasChoices("pass", "passed"))
    constants: Dict[str, float] = Field(default_factory=dict)
    provenance: Dict[str, str] = Field(default_factory=dict)
    inputs_digest: str = ""
    subchecks: List["InequalityReport"] = Field(default_factory=list)
    error: Optional[str] = None

    def walk(self):
        """This report followed by every nested subcheck, depth first."""
        yield self
        for s in self.subchecks:
            yield from s.walk()


def make_report(
    name: str,
    lhs: float,
    rhs: float,
    tolerance: float = 0.0,
    constants: Optional[dict] = None,
    provenance: Optional[dict] = None,
    subchecks: Optional[list] = None,
    inputs_digest: str = "",
) -> InequalityReport:
    lhs, rhs, tolerance = float(lhs), float(rhs), float(tolerance)
    margin = rhs - lhs
    subchecks = list(subchecks or [])
    ok = (margin >= -tolerance) and all(s.passed for s in subchecks)
    constants = {k: float(v) for k, v in (constants or {}).items()}
    bad = [k for k, v in constants.items() if not math.isfinite(v)]
    if bad:
        raise ValueError(f"non-finite constants {bad} in report {name!r}")
    return InequalityReport(
        name=name,
        lhs=lhs,
        rhs=rhs,
        margin=margin,
        tolerance=tolerance,
        passed=bool(ok),
        constants=constants,
        provenance=dict(provenance or {}),
        inputs_digest=inputs_digest,
        subchecks=subchecks,
    )


def error_report(name: str, exc: BaseException) -> InequalityReport:
    code = getattr(exc, "code", type(exc).__name__)
    constants = {k: float(v) for k, v in getattr(exc, "diagnostics", {}).items() if _finite(v)}
    return InequalityReport(
        name=name,
        lhs=0.0,
        rhs=0.0,
        margin=0.0,
        tolerance=0.0,
        passed=False,
        constants=constants,
        error=f"{code}: {exc}",
    )


def _finite(v) -> bool:
    try:
        return math.isfinite(float(v))
    except (TypeError, ValueError):
        return False


class Sandwich(BaseModel):
    name: str
    lower: float
    measured: float
    upper: float
    passed: bool = Field(serialization_alias="pass", validation_alias=AliasChoices("pass", "passed"))

    model_config = ConfigDict(populate_by_name=True)


class ScalingReport(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    kind: Literal["scaling"] = "scaling"
    name: str = "scaling"
    k: float
    r: float
    tolerance: float
    sandwiches: List[Sandwich]
    coarse: List[Sandwich] = Field(default_factory=list)
    inputs_digest: str = ""
    error: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(s.passed for s in self.sandwiches + self.coarse)


Report = Annotated[Union[InequalityReport, ScalingReport], Field(discriminator="kind")]


class SuiteResult(BaseModel):
    schema_version: str = SCHEMA_VERSION
    suite: str
    reports: List[Report] = Field(default_factory=list)
    metadata: Dict[str, Any] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    @property
    def has_errors(self) -> bool:
        return any(r.error for r in self.reports)
