"""Experiment specification files.

A spec is a small sectioned key-value text file::

    # random dimer with lambda = 0.5
    [model]
    plus.t = 1 1
    plus.v = 0.5 0.5
    minus.t = 1 1
    minus.v = -0.5 -0.5
    p_plus = 0.5

    [experiment]
    kind = critical_scan
    e_min = -2
    e_max = 2
    seed = 1

    [output]
    csv = critical.csv

Arrays are separated by whitespace or commas.  ``dimer = 0.5`` is a
shorthand for the four polymer arrays above.  Unknown sections and keys are
rejected, with a suggestion when a known key is close.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .model import PolymerEnsemble, dimer_ensemble

KINDS = ("critical_scan", "lyapunov_sweep", "ids_sweep", "levels", "deviations",
         "transport", "transport_exponents", "identities")


def _float(s):
    return float(s)


def _int(s):
    f = float(s)
    if f != int(f):
        raise ValueError(f"{s!r} is not an integer")
    return int(f)


def _floats(s):
    parts = s.replace(",", " ").split()
    if not parts:
        raise ValueError("empty array")
    return np.array([float(p) for p in parts])


def _ints(s):
    return np.array([_int(p) for p in s.replace(",", " ").split()], dtype=np.int64)


def _str(s):
    return s


def _bool(s):
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{s!r} is not a boolean")


def _signs(s):
    out = []
    for p in s.replace(",", " ").split():
        if p in ("+", "+1", "1"):
            out.append(1)
        elif p in ("-", "-1"):
            out.append(-1)
        else:
            raise ValueError(f"{p!r} is not a polymer sign")
    if not out:
        raise ValueError("empty pattern")
    return np.array(out, dtype=np.int64)


MODEL_KEYS = {"plus.t": _floats, "plus.v": _floats, "minus.t": _floats,
              "minus.v": _floats, "p_plus": _float, "dimer": _float}

EXPERIMENT_KEYS = {
    "kind": _str, "seed": _int, "workers": _int,
    "energy": _float, "e_min": _float, "e_max": _float,
    "eps": _floats, "n_polymers": _int, "n_samples": _int, "n_theta": _int,
    "N": _ints, "alpha": _float,
    "calibration_samples": _int, "calibration_seed": _int, "quantile": _float,
    "norm_samples": _int,
    "q": _float, "T": _floats, "radius": _int, "configuration": _str,
    "pattern": _signs, "index": _int, "stationary": _bool, "method": _str,
    "fit_min": _float, "fit_max": _float, "n_instances": _int,
    "critical": _bool,
}

OUTPUT_KEYS = {"csv": _str, "svg": _str}

SECTIONS = {"model": MODEL_KEYS, "experiment": EXPERIMENT_KEYS, "output": OUTPUT_KEYS}

# keys each kind accepts besides kind/seed/workers
KIND_KEYS = {
    "critical_scan": {"e_min", "e_max"},
    "lyapunov_sweep": {"energy", "eps", "n_polymers", "n_samples", "n_theta", "critical"},
    "ids_sweep": {"energy", "eps", "N", "n_samples"},
    "levels": {"energy", "N", "alpha", "n_samples", "calibration_samples",
               "calibration_seed", "quantile"},
    "deviations": {"energy", "N", "alpha", "n_samples", "norm_samples"},
    "transport": {"q", "T", "radius", "configuration", "pattern", "index", "stationary"},
    "transport_exponents": {"q", "T", "n_samples", "method", "fit_min", "fit_max",
                            "configuration", "pattern", "stationary"},
    "identities": {"n_instances"},
}

DEFAULTS = {
    "seed": 0, "workers": 1, "e_min": -np.inf, "e_max": np.inf,
    "n_polymers": 1000, "n_samples": 100, "n_theta": 64, "alpha": 0.1,
    "calibration_samples": 200, "quantile": 0.975, "q": 2.0,
    "configuration": "random", "index": 0, "stationary": True,
    "method": "propagation", "n_instances": 1000, "critical": True,
}


@dataclass
class ExperimentSpec:
    """Validated experiment description.

    ``params`` holds the experiment section with defaults filled in and
    ``lines`` the line number of every key read from the file.
    """

    ensemble: PolymerEnsemble
    kind: str
    params: dict
    output: dict = field(default_factory=dict)
    source: str | None = None
    lines: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return int(self.params["seed"])

    def get(self, key, default=None):
        return self.params.get(key, default)


def _suggest(key, known):
    match = difflib.get_close_matches(key, list(known), n=1, cutoff=0.6)
    if not match:
        # compare against the stems of dotted keys too ("polimer" -> "plus.t")
        stems = {k.split(".")[0]: k for k in known}
        m2 = difflib.get_close_matches(key.split(".")[0], list(stems), n=1, cutoff=0.6)
        match = [stems[m2[0]]] if m2 else []
    return f"; did you mean '{match[0]}'?" if match else ""


def parse_text(text: str, source: str | None = None) -> ExperimentSpec:
    """Parse and validate spec text."""
    raw: dict[str, dict[str, tuple[str, int]]] = {s: {} for s in SECTIONS}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("["):
            if not body.endswith("]"):
                raise ParseError(f"unterminated section header {body!r}", line=lineno)
            name = body[1:-1].strip()
            if name not in SECTIONS:
                raise ParseError(f"unknown section [{name}]{_suggest(name, SECTIONS)}",
                                 key=name, line=lineno)
            section = name
            continue
        if "=" not in body:
            raise ParseError(f"expected 'key = value', got {body!r}", line=lineno)
        key, value = (p.strip() for p in body.split("=", 1))
        if section is None:
            raise ParseError("key outside of any section", key=key, line=lineno)
        known = SECTIONS[section]
        if key not in known:
            raise ParseError(f"unknown key '{key}' in [{section}]{_suggest(key, known)}",
                             key=key, line=lineno)
        if key in raw[section]:
            raise ParseError(f"duplicate key '{key}'", key=key, line=lineno)
        if value == "":
            raise ParseError("missing value", key=key, line=lineno)
        raw[section][key] = (value, lineno)

    values, lines = {}, {}
    for sec, entries in raw.items():
        values[sec] = {}
        for key, (value, lineno) in entries.items():
            try:
                values[sec][key] = SECTIONS[sec][key](value)
            except ValueError as exc:
                raise ParseError(f"bad value {value!r}: {exc}", key=key, line=lineno) from None
            lines[key] = lineno
    ensemble = _build_ensemble(values["model"], lines)
    kind, params = _validate_experiment(values["experiment"], lines)
    return ExperimentSpec(ensemble, kind, params, values["output"], source, lines)


def parse_spec(path) -> ExperimentSpec:
    """Read and validate a spec file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read spec file {path}: {exc.strerror}") from None
    return parse_text(text, str(path))


def _build_ensemble(model, lines):
    if not model:
        raise ValidationError("missing [model] section", key="model")
    p_plus = model.get("p_plus", 0.5)
    if not 0.0 < p_plus < 1.0:
        raise ValidationError(f"p_plus must lie in (0, 1), got {p_plus}",
                              key="p_plus", line=lines.get("p_plus"))
    arrays = [k for k in ("plus.t", "plus.v", "minus.t", "minus.v") if k in model]
    if "dimer" in model:
        if arrays:
            raise ValidationError("give either 'dimer' or the polymer arrays, not both",
                                  key=arrays[0], line=lines.get(arrays[0]))
        return dimer_ensemble(model["dimer"], p_plus)
    missing = [k for k in ("plus.t", "plus.v", "minus.t", "minus.v") if k not in model]
    if missing:
        raise ValidationError("missing polymer array", key=missing[0])
    try:
        return PolymerEnsemble.from_arrays(model["plus.t"], model["plus.v"],
                                           model["minus.t"], model["minus.v"], p_plus)
    except ValidationError as exc:
        raise ValidationError(str(exc), key="model") from None


def _need(params, key, lines, cond, what):
    if key in params and not cond(params[key]):
        raise ValidationError(f"{key} {what}", key=key, line=lines.get(key))


def _validate_experiment(exp, lines):
    if "kind" not in exp:
        raise ValidationError("missing experiment kind", key="kind")
    kind = exp["kind"]
    if kind not in KINDS:
        raise ValidationError(f"unknown kind {kind!r}{_suggest(kind, KINDS)}",
                              key="kind", line=lines.get("kind"))
    allowed = KIND_KEYS[kind] | {"kind", "seed", "workers"}
    for key in exp:
        if key not in allowed:
            raise ValidationError(f"key not used by kind {kind}", key=key,
                                  line=lines.get(key))
    params = {k: v for k, v in DEFAULTS.items() if k in allowed}
    params.update(exp)
    positive = lambda x: np.all(np.asarray(x) > 0)
    _need(params, "seed", lines, lambda x: x >= 0, "must be nonnegative")
    for key in ("workers", "n_polymers", "n_samples", "n_theta", "calibration_samples",
                "norm_samples", "n_instances", "radius", "N", "T", "q", "alpha"):
        _need(params, key, lines, positive, "must be positive")
    _need(params, "quantile", lines, lambda x: 0 < x < 1, "must lie in (0, 1)")
    if params.get("critical", True):
        _need(params, "eps", lines, lambda x: np.all(x != 0), "must be nonzero")
    elif "energy" not in params:
        raise ValidationError("a sweep away from a critical energy needs an energy",
                              key="energy")
    _need(params, "e_max", lines, lambda x: x > params.get("e_min", -np.inf),
          "must exceed e_min")
    _need(params, "configuration", lines, lambda x: x in ("random", "periodic", "free"),
          "must be random, periodic or free")
    _need(params, "method", lines, lambda x: x in ("propagation", "green"),
          "must be propagation or green")
    required = {"lyapunov_sweep": ("eps",), "ids_sweep": ("eps", "N"),
                "levels": ("N",), "deviations": ("N",), "transport": ("T",),
                "transport_exponents": ("T", "n_samples")}.get(kind, ())
    for key in required:
        if key not in params:
            raise ValidationError(f"kind {kind} needs this key", key=key)
    if params.get("configuration") == "periodic" and "pattern" not in params:
        raise ValidationError("periodic configuration needs a pattern", key="pattern")
    if kind == "transport_exponents" and len(params["T"]) < 5:
        raise ValidationError("need at least 5 values of T", key="T", line=lines.get("T"))
    return kind, params
