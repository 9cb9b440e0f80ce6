"""JSON model files with exact rational values.

Every numeric model quantity is a rational written as a string ("1/10",
"1.25", "2e3") or a JSON integer.  Binary floating-point literals are
rejected outright: a model file is a specification, and 0.1 as a double
is not the rational 1/10.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Union

from .model import Alarm, Model, ModelError, validate
from .numerics import format_rational

__all__ = ["load_model", "loads_model", "dump_model", "dumps_model", "model_from_dict", "model_to_dict"]

_TOP_KEYS = {"states", "rate", "transitions", "rate_costs", "impulse_costs", "alarms"}
_ALARM_KEYS = {"name", "family", "lower", "upper", "enabled", "fire", "impulses", "window", "shape"}


def _reject_float(token: str):
    raise ModelError(
        [
            f"binary float {token!r} in model file; numbers must be exact -"
            f" write it as a string such as \"{token}\""
        ]
    )


def loads_model(text: str) -> Model:
    """Parse a model from JSON text."""
    try:
        data = json.loads(text, parse_float=_reject_float)
    except ModelError:
        raise
    except json.JSONDecodeError as exc:
        raise ModelError([f"model file is not valid JSON: {exc}"]) from exc
    return model_from_dict(data)


def load_model(path: Union[str, Path]) -> Model:
    """Read a model from a JSON file."""
    return loads_model(Path(path).read_text())


def dumps_model(model: Model) -> str:
    """Serialize a model to JSON text."""
    return json.dumps(model_to_dict(model), indent=2) + "\n"


def dump_model(model: Model, path: Union[str, Path]) -> None:
    Path(path).write_text(dumps_model(model))


def model_from_dict(data: object) -> Model:
    if not isinstance(data, dict):
        raise ModelError(["model file must contain a JSON object at top level"])
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ModelError([f"unknown model keys: {', '.join(sorted(unknown))}"])
    missing = {"states", "rate", "transitions"} - set(data)
    if missing:
        raise ModelError([f"missing required model keys: {', '.join(sorted(missing))}"])

    alarms = []
    for i, entry in enumerate(data.get("alarms", [])):
        if not isinstance(entry, dict):
            raise ModelError([f"alarms[{i}] must be an object"])
        unknown = set(entry) - _ALARM_KEYS
        if unknown:
            raise ModelError([f"alarms[{i}]: unknown keys: {', '.join(sorted(unknown))}"])
        missing = {"name", "family", "lower", "upper", "enabled", "fire"} - set(entry)
        if missing:
            raise ModelError([f"alarms[{i}]: missing keys: {', '.join(sorted(missing))}"])
        alarms.append(
            Alarm(
                name=entry["name"],
                family=entry["family"],
                lower=entry["lower"],
                upper=entry["upper"],
                enabled=entry["enabled"],
                fire=entry["fire"],
                impulses=entry.get("impulses", {}),
                window=entry.get("window"),
                shape=entry.get("shape"),
            )
        )
    model = Model(
        states=data["states"],
        rate=data["rate"],
        transitions=data["transitions"],
        rate_costs=data.get("rate_costs", {}),
        impulse_costs=data.get("impulse_costs", {}),
        alarms=alarms,
    )
    validate(model)
    return model


def model_to_dict(model: Model) -> dict:
    def rational_rows(rows: dict) -> dict:
        return {
            s: {t: format_rational(v) for t, v in row.items() if v != 0}
            for s, row in rows.items()
            if any(v != 0 for v in row.values())
        }

    out = {
        "states": list(model.states),
        "rate": format_rational(model.rate),
        "transitions": rational_rows(model.transitions),
        "rate_costs": {s: format_rational(c) for s, c in model.rate_costs.items() if c != 0},
        "impulse_costs": rational_rows(model.impulse_costs),
        "alarms": [],
    }
    for alarm in model.alarms:
        entry = {
            "name": alarm.name,
            "family": alarm.family,
            "lower": format_rational(alarm.lower),
            "upper": format_rational(alarm.upper),
            "enabled": sorted(alarm.enabled),
            "fire": rational_rows(alarm.fire),
        }
        impulses = rational_rows(alarm.impulses)
        if impulses:
            entry["impulses"] = impulses
        if alarm.window is not None:
            entry["window"] = format_rational(alarm.window)
        if alarm.shape is not None:
            entry["shape"] = alarm.shape
        out["alarms"].append(entry)
    return out
