"""Check records and experiment reports (JSON Lines)."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"
EXIT_CODES = {PASS: 0, FAIL: 1, INCONCLUSIVE: 2}

try:
    from importlib.metadata import version as _pkg_version
    VERSION = _pkg_version("vrjplab")
except Exception:  # pragma: no cover - source checkout without install
    VERSION = "0.1.0"


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else repr(x)


def _unnum(x):
    if x is None:
        return None
    return float(x)


@dataclass
class CheckRecord:
    """One named comparison. ``kind`` fixes how the verdict follows from the numbers.

    * ``"stat"``: pass iff ``|z| < threshold``, with ``z = (lhs - rhs) / hypot(se)``.
    * ``"exact"``: pass iff ``|lhs - rhs| <= tol``.
    * ``"bound"``: ``lhs >= rhs`` up to noise; pass iff ``z > -threshold``.
    * ``"trend"``: ``lhs > rhs`` beyond noise; pass iff ``z > threshold``.
    * ``"less"``: pass iff the point estimate ``lhs < rhs``.

    ``forced`` marks a record as inconclusive regardless of the numbers (for
    example an unconverged chain).
    """

    name: str
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    kind: str = "stat"
    threshold: float = 4.0
    tol: float = 0.0
    forced: str | None = None
    note: str = ""
    z: float | None = None
    verdict: str = ""

    def __post_init__(self):
        self.z = self._z()
        self.verdict = self.derive_verdict()

    def _z(self):
        if self.kind == "exact":
            return None
        s = math.hypot(self.lhs_se or 0.0, self.rhs_se or 0.0)
        d = self.lhs - self.rhs
        if s == 0.0:
            return 0.0 if d == 0 else math.copysign(math.inf, d)
        return d / s

    def derive_verdict(self) -> str:
        if self.forced is not None:
            return self.forced
        if any(isinstance(v, float) and math.isnan(v) for v in (self.lhs, self.rhs)):
            return INCONCLUSIVE
        if self.kind == "exact":
            return PASS if abs(self.lhs - self.rhs) <= self.tol else FAIL
        if self.kind == "stat":
            return PASS if abs(self.z) < self.threshold else FAIL
        if self.kind == "bound":
            return PASS if self.z > -self.threshold else FAIL
        if self.kind == "trend":
            return PASS if self.z > self.threshold else FAIL
        if self.kind == "less":
            return PASS if self.lhs < self.rhs else FAIL
        raise ValueError(f"unknown check kind {self.kind!r}")

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("lhs", "lhs_se", "rhs", "rhs_se", "z", "tol", "threshold"):
            d[k] = _num(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CheckRecord":
        args = {k: d[k] for k in ("name", "kind", "forced", "note")}
        for k in ("lhs", "lhs_se", "rhs", "rhs_se", "tol", "threshold"):
            args[k] = _unnum(d[k])
        rec = cls(**args)
        if rec.verdict != d["verdict"]:
            raise ValueError(f"record {rec.name!r}: stored verdict {d['verdict']} does not follow from its numbers")
        return rec


def exact(name: str, value: float, expected: float, tol: float, note: str = "") -> CheckRecord:
    return CheckRecord(name, float(value), 0.0, float(expected), 0.0, kind="exact", tol=tol, note=note)


def stat(name: str, lhs, lhs_se, rhs, rhs_se=0.0, threshold: float = 4.0, forced=None, note="") -> CheckRecord:
    return CheckRecord(name, float(lhs), float(lhs_se), float(rhs), float(rhs_se), kind="stat",
                       threshold=threshold, forced=forced, note=note)


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    seed: int
    records: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    lanes: list = field(default_factory=list)
    files: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)
    version: str = VERSION
    config_hash: str = ""

    def __post_init__(self):
        if not self.config_hash:
            self.config_hash = config_hash(self.config)

    def add(self, rec: CheckRecord) -> CheckRecord:
        self.records.append(rec)
        return rec

    def extend(self, recs) -> None:
        for r in recs:
            self.add(r)

    def lane(self, module: str, case: int, replica: int, purpose: str) -> None:
        self.lanes.append({"module": module, "case": case, "replica": replica, "purpose": purpose})

    @property
    def status(self) -> str:
        verdicts = {r.verdict for r in self.records}
        if FAIL in verdicts:
            return FAIL
        if INCONCLUSIVE in verdicts:
            return INCONCLUSIVE
        return PASS

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.status]

    def failures(self):
        return [r for r in self.records if r.verdict != PASS]

    def write(self, path) -> None:
        lines = [{"type": "header", "kind": self.kind, "version": self.version, "seed": self.seed,
                  "config_hash": self.config_hash, "config": self.config, "lanes": self.lanes}]
        lines += [{"type": "check", **r.to_dict()} for r in self.records]
        lines.append({"type": "footer", "status": self.status, "timing": self.timing, "files": self.files,
                      "notes": self.notes})
        with open(path, "w") as fh:
            for obj in lines:
                fh.write(json.dumps(obj, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path) -> "ExperimentReport":
        objs = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
        if not objs or objs[0].get("type") != "header" or objs[-1].get("type") != "footer":
            raise ValueError(f"{path}: not an experiment report")
        head, foot = objs[0], objs[-1]
        rep = cls(head["kind"], head["config"], head["seed"], lanes=head["lanes"],
                  timing=foot["timing"], files=foot["files"], notes=foot.get("notes", {}), version=head["version"],
                  config_hash=head["config_hash"])
        if config_hash(rep.config) != rep.config_hash:
            raise ValueError(f"{path}: config hash does not match the stored config")
        rep.records = [CheckRecord.from_dict(o) for o in objs[1:-1]]
        if rep.status != foot["status"]:
            raise ValueError(f"{path}: stored status does not follow from the records")
        return rep

    def summary(self) -> str:
        out = [f"{self.kind}: {self.status} ({len(self.records)} checks)"]
        for r in self.records:
            z = "" if r.z is None else f" z={r.z:+.2f}"
            out.append(f"  [{r.verdict:>12}] {r.name}: {r.lhs:.10g} vs {r.rhs:.10g}{z}")
        return "\n".join(out)
