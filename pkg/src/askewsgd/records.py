"""Per-iteration run records and versioned CSV/JSON emission.

Every emitted table starts with a ``# schema=...`` comment line so that
downstream consumers can refuse inputs they do not understand.  Floats are
written with ``repr`` (shortest round-trip form), which makes re-runs of a
seeded configuration byte-identical apart from wall-time values.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, fields

RUN_SCHEMA = "askewsgd-run-v1"
SNAPSHOT_SCHEMA = "askewsgd-snap-v1"
VECTOR_FIELD_SCHEMA = "askewsgd-vf-v1"
TRAJECTORY_SCHEMA = "askewsgd-traj-v1"
EXHAUSTIVE_SCHEMA = "askewsgd-exh-v1"


class SchemaError(ValueError):
    """A table is missing its schema marker or carries the wrong one."""


@dataclass
class RunRecord:
    """One logged optimizer step (evaluation fields filled on cadence only)."""

    step: int
    episode: int
    epsilon: float
    gamma: float
    train_loss: float
    eval_loss: float | None
    eval_acc: float | None
    feasibility_gap: float
    kkt_residual: float | None
    clip_count: int
    wall_time: float


RUN_FIELDS = [f.name for f in fields(RunRecord)]


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def write_table(path, schema: str, fieldnames, rows) -> None:
    """Write dict rows as CSV behind a schema comment line."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={schema}\n")
        writer = csv.writer(fh)
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_cell(row[name]) for name in fieldnames])


def read_table(path, expected_schema: str | None = None):
    """Read a schema-tagged CSV; returns (schema, fieldnames, rows as dicts)."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("# schema="):
            raise SchemaError(f"{path}: missing schema marker")
        schema = first[len("# schema="):]
        if expected_schema is not None and schema != expected_schema:
            raise SchemaError(f"{path}: expected schema {expected_schema}, found {schema}")
        reader = csv.reader(fh)
        fieldnames = next(reader)
        rows = [dict(zip(fieldnames, r)) for r in reader]
    return schema, fieldnames, rows


def write_run_csv(path, records) -> None:
    write_table(path, RUN_SCHEMA, RUN_FIELDS,
                [{name: getattr(r, name) for name in RUN_FIELDS} for r in records])


def read_run_csv(path):
    """Parse a run CSV back into RunRecord objects."""
    _, names, rows = read_table(path, RUN_SCHEMA)
    missing = set(RUN_FIELDS) - set(names)
    if missing:
        raise SchemaError(f"{path}: missing columns {sorted(missing)}")
    out = []
    for row in rows:
        out.append(RunRecord(
            step=int(row["step"]),
            episode=int(row["episode"]),
            epsilon=float(row["epsilon"]),
            gamma=float(row["gamma"]),
            train_loss=float(row["train_loss"]),
            eval_loss=float(row["eval_loss"]) if row["eval_loss"] else None,
            eval_acc=float(row["eval_acc"]) if row["eval_acc"] else None,
            feasibility_gap=float(row["feasibility_gap"]),
            kkt_residual=float(row["kkt_residual"]) if row["kkt_residual"] else None,
            clip_count=int(row["clip_count"]),
            wall_time=float(row["wall_time"]),
        ))
    return out


def write_snapshots_csv(path, snapshots) -> None:
    """Write (step, weight vector) pairs for post-hoc re-validation."""
    if not snapshots:
        return
    dim = len(snapshots[0][1])
    names = ["step"] + [f"w{i}" for i in range(dim)]
    rows = [dict(zip(names, [step] + [float(v) for v in w])) for step, w in snapshots]
    write_table(path, SNAPSHOT_SCHEMA, names, rows)


def read_snapshots_csv(path):
    _, names, rows = read_table(path, SNAPSHOT_SCHEMA)
    wcols = names[1:]
    return [(int(r["step"]), [float(r[c]) for c in wcols]) for r in rows]


def write_run_json(path, records) -> None:
    """JSON alternative to :func:`write_run_csv` (same schema tag)."""
    payload = {"schema": RUN_SCHEMA,
               "records": [{name: getattr(r, name) for name in RUN_FIELDS}
                           for r in records]}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_config_json(path, config: dict) -> None:
    """Provenance sidecar with the fully resolved configuration."""
    with open(path, "w") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
        fh.write("\n")
