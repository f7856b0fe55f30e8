"""File formats: dataset CSV, truth/model JSON, sequence/stage tables, config text.

The dataset CSV is self-describing: first column `id`, second `label`
(control / patient / unknown), every remaining column one feature, and
an empty cell meaning "not measured". All writers emit UTF-8 with LF
newlines and format floats with repr, so writing the same objects twice
produces byte-identical files. Parse errors carry path, line, and
(where sensible) column so they can be fixed without guesswork.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .core import Dataset, EventSequence, FittedModel, Label, MixtureParams, ModelConfig
from . import backend
from .core import SoftPermutation

_LABEL_TO_TEXT = {Label.CONTROL: "control", Label.PATIENT: "patient", Label.UNLABELLED: "unknown"}
_TEXT_TO_LABEL = {v: k for k, v in _LABEL_TO_TEXT.items()}


def _fmt(v: float) -> str:
    return repr(float(v))


def default_ids(n: int) -> list[str]:
    return [f"ind{i:05d}" for i in range(n)]


def write_dataset_csv(path, d: Dataset, ids=None) -> None:
    """Write a dataset in the id,label,<features...> schema (empty cell = missing)."""
    ids = default_ids(d.n_individuals) if ids is None else list(ids)
    if len(ids) != d.n_individuals:
        raise ValueError("need exactly one id per individual")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label", *d.feature_names])
        for i in range(d.n_individuals):
            row = [ids[i], _LABEL_TO_TEXT[Label(d.labels[i])]]
            for j in range(d.n_features):
                row.append(_fmt(d.values[i, j]) if d.observed[i, j] else "")
            w.writerow(row)


def read_dataset_csv(path) -> tuple[Dataset, list[str]]:
    """Read the id,label,<features...> schema; returns (dataset, ids).

    Raises ValueError with `path:line[:column]:` context on malformed
    headers, ragged rows, unknown labels, and non-numeric cells.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}:1: file is empty") from None
        if len(header) < 3 or header[0] != "id" or header[1] != "label":
            raise ValueError(
                f"{path}:1: header must be 'id,label,<feature columns...>'; got {','.join(header[:3])}..."
            )
        feature_names = header[2:]
        n_feat = len(feature_names)
        ids, labels, rows, masks = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != n_feat + 2:
                raise ValueError(
                    f"{path}:{lineno}: expected {n_feat + 2} columns, found {len(row)}"
                )
            ids.append(row[0])
            if row[1] not in _TEXT_TO_LABEL:
                raise ValueError(
                    f"{path}:{lineno}:2: unknown label {row[1]!r} (use control/patient/unknown)"
                )
            labels.append(_TEXT_TO_LABEL[row[1]])
            vals = np.empty(n_feat)
            mask = np.empty(n_feat, dtype=bool)
            for j, cell in enumerate(row[2:]):
                if cell == "":
                    vals[j], mask[j] = np.nan, False
                    continue
                try:
                    vals[j] = float(cell)
                except ValueError:
                    raise ValueError(
                        f"{path}:{lineno}:{j + 3}: not a number: {cell!r}"
                    ) from None
                mask[j] = True
            rows.append(vals)
            masks.append(mask)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    d = Dataset(
        values=np.array(rows),
        observed=np.array(masks),
        labels=np.array(labels, dtype=np.int8),
        feature_names=feature_names,
    )
    return d, ids


def write_truth_json(path, seq: EventSequence, stages) -> None:
    payload = {
        "sequence": [int(e) for e in seq.order],
        "stages": [int(s) for s in np.asarray(stages)],
    }
    _dump_json(path, payload)


def read_sequence_json(path) -> EventSequence:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if "sequence" not in payload:
        raise ValueError(f"{path}: missing 'sequence' key")
    return EventSequence(np.asarray(payload["sequence"], dtype=np.int64))


def write_params_json(path, spec) -> None:
    payload = {
        "n_individuals": spec.n_individuals,
        "n_features": spec.n_features,
        "sigma": spec.sigma,
        "control_fraction": spec.control_fraction,
        "patient_mean_range": list(spec.patient_mean_range),
        "missing_fraction": spec.missing_fraction,
        "seed": spec.seed,
    }
    _dump_json(path, payload)


def write_model_json(path, fm: FittedModel) -> None:
    """Persist a fitted model with its full config so results are re-derivable."""
    payload = {
        "feature_names": list(fm.feature_names),
        "sequence": [int(e) for e in fm.sequence.order],
        "x_scores": fm.x_scores.tolist(),
        "mixtures": {
            "mu_c": fm.mixtures.mu_c.tolist(),
            "sigma_c": fm.mixtures.sigma_c.tolist(),
            "mu_p": fm.mixtures.mu_p.tolist(),
            "sigma_p": fm.mixtures.sigma_p.tolist(),
            "w": fm.mixtures.w.tolist(),
        },
        "config": {
            "tau": fm.config.tau,
            "tau_prior": fm.config.tau_prior,
            "n_s": fm.config.n_s,
            "n_opt": fm.config.n_opt,
            "learning_rate": fm.config.learning_rate,
            "use_gumbel_noise": fm.config.use_gumbel_noise,
            "seed": fm.config.seed,
            "x_init": fm.config.x_init,
        },
        "elbo_trace": fm.elbo_trace.tolist(),
        "inference_seconds": fm.inference_seconds,
    }
    _dump_json(path, payload)


def read_model_json(path) -> FittedModel:
    """Rebuild a FittedModel; the soft matrix is recomputed from the scores."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    for key in ("feature_names", "sequence", "x_scores", "mixtures", "config", "elbo_trace"):
        if key not in payload:
            raise ValueError(f"{path}: missing {key!r} key")
    cfg = ModelConfig(**payload["config"])
    x = np.asarray(payload["x_scores"], dtype=np.float64)
    mix = payload["mixtures"]
    log_s = backend.sinkhorn_log(x / cfg.tau, cfg.n_s)[0]
    return FittedModel(
        x_scores=x,
        soft_perm=SoftPermutation(np.exp(log_s)),
        sequence=EventSequence(np.asarray(payload["sequence"], dtype=np.int64)),
        mixtures=MixtureParams(
            mu_c=np.asarray(mix["mu_c"]),
            sigma_c=np.asarray(mix["sigma_c"]),
            mu_p=np.asarray(mix["mu_p"]),
            sigma_p=np.asarray(mix["sigma_p"]),
            w=np.asarray(mix["w"]),
        ),
        elbo_trace=np.asarray(payload["elbo_trace"], dtype=np.float64),
        config=cfg,
        feature_names=payload["feature_names"],
        inference_seconds=float(payload.get("inference_seconds", float("nan"))),
    )


def write_sequence_csv(path, fm: FittedModel) -> None:
    """One row per ordering position: position, event index, feature name."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["position", "event", "feature"])
        for pos, event in enumerate(fm.sequence.order):
            w.writerow([pos, int(event), fm.feature_names[event]])


def read_sequence_csv(path) -> EventSequence:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["position", "event"]:
            raise ValueError(f"{path}:1: header must start with 'position,event'")
        events = {}
        for lineno, row in enumerate(reader, start=2):
            try:
                events[int(row[0])] = int(row[1])
            except (IndexError, ValueError):
                raise ValueError(f"{path}:{lineno}: malformed sequence row") from None
    if sorted(events) != list(range(len(events))):
        raise ValueError(f"{path}: positions must cover 0..N-1")
    return EventSequence(np.array([events[p] for p in range(len(events))], dtype=np.int64))


def write_stages_csv(path, ids, posteriors) -> None:
    """One row per individual: id, ML stage, then the full stage posterior."""
    if not posteriors:
        raise ValueError("no posteriors to write")
    n_stages = posteriors[0].probs.size
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "ml_stage", *[f"p_{k}" for k in range(n_stages)]])
        for one_id, post in zip(ids, posteriors):
            w.writerow([one_id, post.ml_stage, *[_fmt(p) for p in post.probs]])


def write_variance_csv(path, rows) -> None:
    """Positional-variance diagram rows, with the truth flag when present."""
    with_truth = rows and len(rows[0]) == 4
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["event", "position", "frequency"]
        if with_truth:
            header.append("is_true_position")
        w.writerow(header)
        for row in rows:
            out = [row[0], row[1], _fmt(row[2])]
            if with_truth:
                out.append(int(row[3]))
            w.writerow(out)


def write_lines(path, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_config_file(path) -> dict[str, str]:
    """Flat key=value settings; blank lines and #-comments are skipped."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def _dump_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
