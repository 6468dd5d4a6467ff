"""Model and ensemble checkpoints.

A model checkpoint is a directory holding ``manifest.json`` (the model
config plus a name/shape index of every parameter), ``params.bin`` (the
parameters as little-endian float32, concatenated in manifest order),
and ``vocab.txt``.  An ensemble checkpoint is a directory of member
checkpoints plus ``ensemble.json``.  Loading rejects any shape, name, or
size mismatch.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .ensemble import VOTING_RULES, EnsembleConfig, EnsembleModel
from .errors import CheckpointError, ConfigError
from .model import ClassifierModel, ModelConfig, parameter_shapes
from .tensor import Tensor
from .tokenizer import Vocabulary

MODEL_MANIFEST = "manifest.json"
PARAMS_FILE = "params.bin"
VOCAB_FILE = "vocab.txt"
ENSEMBLE_MANIFEST = "ensemble.json"

_MODEL_FORMAT = "minibert-model-v1"
_ENSEMBLE_FORMAT = "minibert-ensemble-v1"
_PARAM_DTYPE = np.dtype("<f4")


def save_model(model: ClassifierModel, directory: str | Path, vocab: Vocabulary) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = list(parameter_shapes(model.config))
    manifest = {
        "format": _MODEL_FORMAT,
        "config": asdict(model.config),
        "params": [
            {"name": name, "shape": list(model.params[name].shape)} for name in names
        ],
        "vocab_file": VOCAB_FILE,
    }
    (directory / MODEL_MANIFEST).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    with (directory / PARAMS_FILE).open("wb") as handle:
        for name in names:
            handle.write(
                np.ascontiguousarray(model.params[name].data, dtype=_PARAM_DTYPE).tobytes()
            )
    vocab.save(directory / VOCAB_FILE)
    return directory


def load_model(directory: str | Path) -> tuple[ClassifierModel, Vocabulary]:
    directory = Path(directory)
    manifest_path = directory / MODEL_MANIFEST
    if not manifest_path.exists():
        raise CheckpointError(f"no model manifest at {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise CheckpointError(f"{manifest_path}: invalid JSON ({err})") from err
    if manifest.get("format") != _MODEL_FORMAT:
        raise CheckpointError(
            f"{manifest_path}: unsupported format {manifest.get('format')!r}"
        )
    try:
        config = ModelConfig(**manifest["config"])
    except (TypeError, ConfigError, KeyError) as err:
        raise CheckpointError(f"{manifest_path}: bad config ({err})") from err

    expected = parameter_shapes(config)
    entries = manifest.get("params", [])
    listed = [entry["name"] for entry in entries]
    if listed != list(expected):
        raise CheckpointError(
            f"{manifest_path}: parameter list does not match the config's layout"
        )
    for entry in entries:
        if tuple(entry["shape"]) != expected[entry["name"]]:
            raise CheckpointError(
                f"{manifest_path}: parameter {entry['name']} has shape "
                f"{tuple(entry['shape'])}, config requires {expected[entry['name']]}"
            )

    raw = (directory / PARAMS_FILE).read_bytes()
    total = sum(int(np.prod(entry["shape"])) for entry in entries)
    if len(raw) != total * _PARAM_DTYPE.itemsize:
        raise CheckpointError(
            f"{directory / PARAMS_FILE}: has {len(raw)} bytes, "
            f"manifest requires {total * _PARAM_DTYPE.itemsize}"
        )
    flat = np.frombuffer(raw, dtype=_PARAM_DTYPE)
    params: dict[str, Tensor] = {}
    offset = 0
    for entry in entries:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape))
        data = flat[offset : offset + count].reshape(shape).astype(np.float32)
        params[entry["name"]] = Tensor(data, requires_grad=True)
        offset += count

    vocab = Vocabulary.load(directory / manifest.get("vocab_file", VOCAB_FILE))
    if len(vocab) != config.vocab_size:
        raise CheckpointError(
            f"{directory}: vocabulary has {len(vocab)} entries, "
            f"config requires {config.vocab_size}"
        )
    return ClassifierModel(config, params), vocab


def save_ensemble(
    ensemble: EnsembleModel, directory: str | Path, vocab: Vocabulary
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    member_dirs = []
    for i, member in enumerate(ensemble.members):
        member_dir = f"member-{i:02d}"
        save_model(member, directory / member_dir, vocab)
        member_dirs.append(member_dir)
    manifest = {
        "format": _ENSEMBLE_FORMAT,
        "n_members": ensemble.config.n_members,
        "voting": ensemble.config.voting,
        "shared_init": ensemble.config.shared_init,
        "member_shuffle_seeds": list(ensemble.config.member_shuffle_seeds),
        "members": member_dirs,
    }
    (directory / ENSEMBLE_MANIFEST).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return directory


def load_ensemble(directory: str | Path) -> tuple[EnsembleModel, Vocabulary]:
    directory = Path(directory)
    manifest_path = directory / ENSEMBLE_MANIFEST
    if not manifest_path.exists():
        raise CheckpointError(f"no ensemble manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format") != _ENSEMBLE_FORMAT:
        raise CheckpointError(
            f"{manifest_path}: unsupported format {manifest.get('format')!r}"
        )
    if manifest.get("voting") not in VOTING_RULES:
        raise CheckpointError(f"{manifest_path}: unknown voting rule {manifest.get('voting')!r}")
    members = []
    vocab: Vocabulary | None = None
    for member_dir in manifest["members"]:
        member, member_vocab = load_model(directory / member_dir)
        if vocab is None:
            vocab = member_vocab
        elif vocab.id_to_token != member_vocab.id_to_token:
            raise CheckpointError(f"{directory}: members disagree on the vocabulary")
        members.append(member)
    if vocab is None:
        raise CheckpointError(f"{manifest_path}: lists no members")
    if len(members) != manifest["n_members"]:
        raise CheckpointError(
            f"{manifest_path}: n_members={manifest['n_members']} but "
            f"{len(members)} member checkpoints listed"
        )
    config = EnsembleConfig(
        member_model_config=members[0].config,
        n_members=manifest["n_members"],
        shared_init=manifest.get("shared_init", True),
        member_shuffle_seeds=list(manifest["member_shuffle_seeds"]),
        voting=manifest["voting"],
    )
    return EnsembleModel(members, config), vocab


def is_ensemble_checkpoint(directory: str | Path) -> bool:
    return (Path(directory) / ENSEMBLE_MANIFEST).exists()
