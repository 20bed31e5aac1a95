"""Declarative experiments: config schema, the four runners and state export.

A config is one JSON object. Every section is optional except ``experiment``
and ``seed``; missing keys take the defaults in :data:`DEFAULTS`, which are the
desk-scale settings used by the acceptance suite. Unknown keys are rejected.

Every file a run writes goes through :func:`atomic_write_bytes`, and nothing
in a run depends on wall-clock time, so equal (config, seed) pairs produce
byte-identical output directories.
"""

from __future__ import annotations

import copy
import csv
import dataclasses
import io
import json
import logging
import os
from pathlib import Path
from typing import Any, Callable, Mapping

import jsonschema
import numpy as np

from .data import Dataset, load_cifar10, load_mnist
from .environment import DatasetEnvironment, Environment, EnvStep, ExternalEnvironment, GridWorld
from .errors import ConfigError, DataError, DimensionError, ValidationError
from .evaluation import (
    Assignments,
    all_activity,
    assign_labels,
    confusion_matrix,
    proportion_weighting,
    train_linear_readout,
)
from .models import (
    DiehlCookConfig,
    ReservoirConfig,
    RLConfig,
    build_diehl_cook,
    build_reservoir,
    build_rl_network,
    group_assignment_labels,
    label_groups,
)
from .network import Monitor, Network
from .neurons import NeuronParams
from .pipeline import Pipeline, PipelineConfig, make_encoder
from .rng import make_rng
from .serialization import atomic_write_bytes, network_from_bytes, network_to_bytes

log = logging.getLogger("snnsim")

SCHEMA_VERSION = 1
KINDS = ("unsupervised", "supervised", "rl", "reservoir")
DATASET_DIRS = {"mnist": "mnist", "cifar10": "cifar-10-batches-bin"}
MODEL_CLASSES = {
    "unsupervised": DiehlCookConfig,
    "supervised": DiehlCookConfig,
    "rl": RLConfig,
    "reservoir": ReservoirConfig,
}

_RECORD = {"layers": None, "snapshot_every": 0}

DEFAULTS: dict[str, dict[str, Any]] = {
    "unsupervised": {
        "data": {"dataset": "mnist", "train_examples": 1000, "assign_examples": 500, "test_examples": 250},
        "model": {"theta_plus": 0.05, "inh_strength": 120.0},
        "encoder": {"kind": "poisson", "max_rate": 127.5},
        "schedule": {"time": 350.0, "dt": 1.0},
        "record": {**_RECORD, "snapshot_every": 100},
    },
    "supervised": {
        "data": {
            "dataset": "cifar10", "classes": [5, 9], "train_examples": 800, "test_examples": 200,
            "preprocess": [{"op": "grayscale"}],
        },
        "model": {"n_input": 1024, "norm": 102.4, "inh_strength": 120.0, "lr_post": 0.002},
        "encoder": {"kind": "poisson", "max_rate": 25.0},
        "schedule": {"time": 350.0, "dt": 1.0},
        "record": {**_RECORD, "snapshot_every": 100},
    },
    "rl": {
        "environment": {
            "kind": "gridworld", "width": 5, "height": 5, "max_steps": 100,
            "step_penalty": 0.01, "goal_reward": 1.0,
        },
        "model": {},
        "encoder": {"kind": "bernoulli", "max_prob": 0.5},
        "schedule": {"time": 2.0, "dt": 1.0, "episodes": 500},
        "pipeline": {"selector": "multinomial", "prime_on_reset": True, "reset_per_episode": False,
                     "history_length": 0, "delta": 1},
        "record": {**_RECORD, "snapshot_every": 50},
    },
    "reservoir": {
        "data": {"dataset": "mnist", "classes": [4, 9], "train_examples": 500, "test_examples": 200},
        "model": {},
        "encoder": {"kind": "poisson", "max_rate": 127.5},
        "schedule": {"time": 100.0, "dt": 1.0},
        "readout": {"epochs": 100, "lr": 0.1, "batch_size": 32},
        "record": dict(_RECORD),
    },
}


# ---------------------------------------------------------------- schema

def _obj(props: dict[str, Any], required: tuple[str, ...] = ()) -> dict[str, Any]:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_COUNT = {"type": "integer", "minimum": 1}
_NONNEG = {"type": "integer", "minimum": 0}


def _field_schema(type_name: str) -> dict[str, Any]:
    if type_name == "int":
        return {"type": "integer"}
    if type_name == "NeuronParams":
        return _obj({f.name: _NUM for f in dataclasses.fields(NeuronParams)})
    if "None" in type_name:
        return {"type": ["number", "null"]}
    return _NUM


def _model_schema(cls: type) -> dict[str, Any]:
    return _obj({f.name: _field_schema(str(f.type)) for f in dataclasses.fields(cls)})


_DATA = _obj({
    "dataset": {"enum": sorted(DATASET_DIRS)},
    "root": {"type": "string"},
    "manifest": {"type": "string"},
    "classes": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "uniqueItems": True},
    "train_examples": _COUNT,
    "assign_examples": _COUNT,
    "test_examples": _COUNT,
    "preprocess": {"type": "array", "items": {"type": "object", "required": ["op"]}},
}, ("dataset",))

_ENV = {
    "oneOf": [
        _obj({
            "kind": {"const": "gridworld"}, "width": _COUNT, "height": _COUNT,
            "start": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
            "goal": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
            "max_steps": _COUNT, "step_penalty": _NUM, "goal_reward": _NUM,
        }, ("kind",)),
        _obj({
            "kind": {"const": "external"},
            "command": {"type": "array", "items": {"type": "string"}, "minItems": 1},
            "n_actions": _COUNT, "observation_size": _COUNT,
        }, ("kind", "command", "n_actions", "observation_size")),
    ]
}

_ENCODER = {
    "oneOf": [
        _obj({"kind": {"const": "poisson"}, "max_rate": _POS}, ("kind",)),
        _obj({"kind": {"const": "bernoulli"}, "max_prob": {"type": "number", "minimum": 0, "maximum": 1}}, ("kind",)),
    ]
}

_SCHEDULE = _obj({"time": _POS, "dt": _POS, "episodes": _COUNT})
_PIPELINE = _obj({
    "selector": {"enum": ["multinomial", "argmax"]}, "prime_on_reset": {"type": "boolean"},
    "reset_per_episode": {"type": "boolean"}, "history_length": _NONNEG, "delta": _COUNT,
})
_READOUT = _obj({"epochs": _COUNT, "lr": _POS, "batch_size": _COUNT})
_RECORD_SCHEMA = _obj({
    "layers": {"type": ["array", "null"], "items": {"type": "string"}},
    "snapshot_every": _NONNEG,
})


def config_schema(kind: str) -> dict[str, Any]:
    """JSON schema of a config for experiment ``kind``."""
    props: dict[str, Any] = {
        "version": {"const": SCHEMA_VERSION},
        "experiment": {"const": kind},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "model": _model_schema(MODEL_CLASSES[kind]),
        "encoder": _ENCODER,
        "schedule": _SCHEDULE,
        "record": _RECORD_SCHEMA,
    }
    if kind == "rl":
        props.update(environment=_ENV, pipeline=_PIPELINE)
    else:
        props["data"] = _DATA
    if kind == "reservoir":
        props["readout"] = _READOUT
    return _obj(props, ("experiment", "seed"))


def _describe(err: jsonschema.ValidationError) -> str:
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    return f"{where}: {err.message}"


def resolve_config(raw: Mapping[str, Any], seed: int | None = None) -> dict[str, Any]:
    """Validate ``raw`` and merge it over the defaults of its experiment kind."""
    if not isinstance(raw, Mapping):
        raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    if seed is not None:
        raw["seed"] = seed
    kind = raw.get("experiment")
    if kind not in KINDS:
        raise ConfigError(f"experiment must be one of {', '.join(KINDS)}; got {kind!r}")
    validator = jsonschema.Draft202012Validator(config_schema(kind))
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError("; ".join(_describe(e) for e in errors))
    cfg = copy.deepcopy(DEFAULTS[kind])
    for key, value in raw.items():
        if isinstance(value, Mapping) and key in cfg and key not in ("environment", "encoder"):
            cfg[key].update(copy.deepcopy(value))
        else:
            cfg[key] = copy.deepcopy(value)
    cfg["version"] = SCHEMA_VERSION
    return cfg


def load_config(path, seed: int | None = None) -> dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    return resolve_config(raw, seed)


# ---------------------------------------------------------------- building blocks

def _model_config(cls: type, section: Mapping[str, Any], **overrides: Any):
    kwargs = dict(section)
    for key in ("exc", "inh"):
        if key in kwargs:
            kwargs[key] = NeuronParams(**kwargs[key])
    kwargs.update(overrides)
    try:
        return cls(**kwargs)
    except ValidationError as exc:
        raise ConfigError(f"model: {exc}") from None


def data_root(cfg: Mapping[str, Any]) -> Path:
    root = cfg["data"].get("root") or os.environ.get("SNN_DATA_DIR")
    if not root:
        raise DataError("no dataset root: set data.root in the config or the SNN_DATA_DIR variable")
    return Path(root)


def load_split(cfg: Mapping[str, Any], split: str) -> Dataset:
    data = cfg["data"]
    directory = data_root(cfg) / DATASET_DIRS[data["dataset"]]
    loader = load_mnist if data["dataset"] == "mnist" else load_cifar10
    ds = loader(directory, split, manifest=data.get("manifest"))
    if "classes" in data:
        if max(data["classes"]) >= ds.class_count:
            raise ConfigError(f"data.classes must be below {ds.class_count}")
        ds = ds.select_classes(data["classes"])
    return ds


def _require(ds: Dataset, n: int, what: str) -> Dataset:
    if len(ds) < n:
        raise DataError(f"{what} needs {n} examples, the dataset has {len(ds)}")
    return ds.head(n)


def _encoder(cfg: Mapping[str, Any]):
    params = {k: v for k, v in cfg["encoder"].items() if k != "kind"}
    return make_encoder(cfg["encoder"]["kind"], **params)


def _csv(rows, header=None) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header is not None:
        writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue().encode()


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _npy(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.save(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


class RunWriter:
    """Collects a run's artifacts under ``out_dir``, each written atomically."""

    def __init__(self, out_dir) -> None:
        self.out = Path(out_dir)
        self.written: list[str] = []

    def bytes(self, name: str, data: bytes) -> None:
        atomic_write_bytes(self.out / name, data)
        self.written.append(name)

    def csv(self, name: str, rows, header=None) -> None:
        self.bytes(name, _csv(([_fmt(v) for v in row] for row in rows), header))

    def metrics(self, metrics: Mapping[str, Any]) -> None:
        self.csv("metrics.csv", sorted(metrics.items()), ["metric", "value"])

    def config(self, cfg: Mapping[str, Any]) -> None:
        self.bytes("config.json", (json.dumps(cfg, indent=2, sort_keys=True) + "\n").encode())

    def network(self, net: Network) -> None:
        self.bytes("model.sfnet", network_to_bytes(net))

    def confusion(self, cm: np.ndarray) -> None:
        k = cm.shape[0]
        self.csv("confusion.csv", ([i, *cm[i]] for i in range(k)), ["true", *[f"pred_{j}" for j in range(k)]])


class Recorder:
    """Attaches spike/voltage monitors for one stretch of simulation."""

    def __init__(self, net: Network, layers: list[str] | None) -> None:
        names = list(net.layers) if layers is None else list(layers)
        for name in names:
            if name not in net.layers:
                raise ConfigError(f"record.layers: unknown layer {name!r}")
        self.net = net
        self.names = names

    def __enter__(self) -> "Recorder":
        for name in self.names:
            state = self.net.layers[name].state
            variables = ("s", "v") if getattr(state, "v", None) is not None else ("s",)
            self.net.add_monitor(f"record/{name}", Monitor(name, variables))
        return self

    def __exit__(self, *exc) -> None:
        self.arrays = {}
        for name in self.names:
            mon = self.net.monitors.pop(f"record/{name}")
            for var in mon.variables:
                self.arrays[f"{name}_{var}"] = mon.get(var)

    def write(self, writer: RunWriter) -> None:
        for key, arr in self.arrays.items():
            writer.bytes(f"record_{key}.npy", _npy(arr.astype(np.uint8) if key.endswith("_s") else arr))


class Snapshots:
    """Weight matrices of every plastic connection, sampled every ``every`` units of progress."""

    def __init__(self, net: Network, every: int) -> None:
        self.net = net
        self.every = every
        self.frames: dict[tuple[str, str], list[np.ndarray]] = {
            key: [] for key, conn in net.connections.items() if conn.rule is not None
        }
        self.take()

    def take(self) -> None:
        for key, frames in self.frames.items():
            frames.append(self.net.connections[key].w.copy())

    def tick(self, count: int) -> None:
        if self.every and count % self.every == 0:
            self.take()

    def write(self, writer: RunWriter) -> None:
        if not self.every:
            return
        for (src, tgt), frames in self.frames.items():
            writer.bytes(f"weights_history_{src}_{tgt}.npy", _npy(np.stack(frames)))


def _present_dataset(
    net: Network,
    ds: Dataset,
    cfg: Mapping[str, Any],
    input_layer: str,
    output_layer: str,
    clamp_fn=None,
    on_example: Callable[[int], None] | None = None,
    collect: tuple[str, ...] = (),
) -> dict[str, np.ndarray]:
    """Show every example of ``ds`` once, resetting state in between.

    Returns the per-example spike counts of the ``collect`` layers.
    """
    env = DatasetEnvironment(ds, cfg["data"].get("preprocess", ()))
    pipe = Pipeline(
        net, env, _encoder(cfg),
        PipelineConfig(input_layer=input_layer, output_layer=output_layer, time_per_obs=cfg["schedule"]["time"],
                       selector=None, reset_per_obs=True),
        clamp_fn=clamp_fn,
    )
    rows: dict[str, list[np.ndarray]] = {name: [] for name in collect}

    def on_step(result: EnvStep, p: Pipeline) -> None:
        for name in collect:
            rows[name].append(net.spike_counts[name].copy())
        if on_example is not None:
            on_example(p.step_count)

    try:
        pipe.run_episode(on_step)
    except DimensionError as exc:
        raise ConfigError(f"model does not fit the data: {exc}") from None
    return {name: np.array(r, dtype=np.int64) for name, r in rows.items()}


def _progress(what: str, total: int, every: int = 100) -> Callable[[int], None]:
    def report(i: int) -> None:
        if i % every == 0 or i == total:
            log.info("%s %d/%d", what, i, total)
    return report


def _chain(*fns):
    def call(i: int) -> None:
        for fn in fns:
            fn(i)
    return call


def _spike_count_rows(counts: np.ndarray, labels: np.ndarray, preds: np.ndarray):
    for i, row in enumerate(counts):
        yield [i, int(labels[i]), int(preds[i]), *row.tolist()]


def _dc_config(cfg: Mapping[str, Any]) -> DiehlCookConfig:
    return _model_config(DiehlCookConfig, cfg["model"], dt=cfg["schedule"].get("dt", 1.0))


def _first_test_recording(net, test, cfg, writer, input_layer, output_layer) -> None:
    with Recorder(net, cfg["record"]["layers"]) as rec:
        _present_dataset(net, test.head(1), cfg, input_layer, output_layer)
    rec.write(writer)


# ---------------------------------------------------------------- runners

def run_unsupervised(cfg: Mapping[str, Any], out_dir) -> dict[str, Any]:
    """Competitive STDP on MNIST, then label assignment and held-out evaluation."""
    data = cfg["data"]
    train = load_split(cfg, "train")
    test = _require(load_split(cfg, "test"), data["test_examples"], "test")
    n_train, n_assign = data["train_examples"], data["assign_examples"]
    train_part = _require(train, n_train, "training")
    assign_part = _require(train, n_assign, "label assignment")
    mcfg = _dc_config(cfg)
    rng = make_rng(cfg["seed"])
    net = build_diehl_cook(mcfg, rng)
    writer = RunWriter(out_dir)
    snaps = Snapshots(net, cfg["record"]["snapshot_every"])

    _present_dataset(net, train_part, cfg, "X", "Ae", on_example=_chain(snaps.tick, _progress("train", n_train)))
    net.learning_enabled = False
    assign_counts = _present_dataset(net, assign_part, cfg, "X", "Ae", collect=("Ae",))["Ae"]
    assignments = assign_labels(assign_counts, assign_part.labels, train.class_count)
    test_counts = _present_dataset(net, test, cfg, "X", "Ae", collect=("Ae",))["Ae"]
    pred_all = np.asarray(all_activity(test_counts, assignments))
    pred_prop = np.asarray(proportion_weighting(test_counts, assignments))
    metrics = {
        "accuracy_all_activity": float(np.mean(pred_all == test.labels)),
        "accuracy_proportion_weighting": float(np.mean(pred_prop == test.labels)),
        "assigned_neurons": int(np.sum(assignments.labels >= 0)),
        "train_examples": n_train,
        "test_examples": len(test),
    }
    log.info("all_activity %.3f proportion_weighting %.3f", metrics["accuracy_all_activity"],
             metrics["accuracy_proportion_weighting"])

    writer.config(cfg)
    writer.metrics(metrics)
    writer.confusion(confusion_matrix(test.labels, pred_all, train.class_count))
    writer.csv("spike_counts.csv", _spike_count_rows(test_counts, test.labels, pred_all),
               ["example", "label", "prediction", *[f"n{j}" for j in range(mcfg.n_neurons)]])
    writer.csv("assignments.csv", ([j, int(a)] for j, a in enumerate(assignments.labels)), ["neuron", "label"])
    writer.network(net)
    snaps.write(writer)
    _first_test_recording(net, test, cfg, writer, "X", "Ae")
    return metrics


def run_supervised(cfg: Mapping[str, Any], out_dir) -> dict[str, Any]:
    """Clamped training: each example forces one random neuron of its label's group to fire."""
    data = cfg["data"]
    train = _require(load_split(cfg, "train"), data["train_examples"], "training")
    test = _require(load_split(cfg, "test"), data["test_examples"], "test")
    mcfg = _dc_config(cfg)
    try:
        groups = label_groups(mcfg.n_neurons, train.class_count)
    except ValidationError as exc:
        raise ConfigError(f"model: {exc}") from None
    rng = make_rng(cfg["seed"])
    net = build_diehl_cook(mcfg, rng)
    writer = RunWriter(out_dir)
    snaps = Snapshots(net, cfg["record"]["snapshot_every"])

    def clamp(result: EnvStep, gen: np.random.Generator) -> dict[str, np.ndarray]:
        mask = np.zeros(mcfg.n_neurons, dtype=bool)
        mask[gen.choice(groups[int(result.info["label"])])] = True
        return {"Ae": mask}

    _present_dataset(net, train, cfg, "X", "Ae", clamp_fn=clamp,
                     on_example=_chain(snaps.tick, _progress("train", len(train))))
    net.learning_enabled = False
    labels = group_assignment_labels(groups, mcfg.n_neurons)
    onehot = np.eye(train.class_count)[labels]
    assignments = Assignments(labels, onehot, onehot)
    test_counts = _present_dataset(net, test, cfg, "X", "Ae", collect=("Ae",))["Ae"]
    pred = np.asarray(all_activity(test_counts, assignments))
    majority = np.bincount(test.labels, minlength=train.class_count).max() / len(test)
    metrics = {
        "accuracy": float(np.mean(pred == test.labels)),
        "chance_majority": float(majority),
        "chance_uniform": 1.0 / train.class_count,
        "train_examples": len(train),
        "test_examples": len(test),
    }
    log.info("accuracy %.3f (majority-class rate %.3f)", metrics["accuracy"], majority)

    writer.config(cfg)
    writer.metrics(metrics)
    writer.confusion(confusion_matrix(test.labels, pred, train.class_count))
    writer.csv("spike_counts.csv", _spike_count_rows(test_counts, test.labels, pred),
               ["example", "label", "prediction", *[f"n{j}" for j in range(mcfg.n_neurons)]])
    writer.csv("groups.csv", ([j, int(c)] for j, c in enumerate(labels)), ["neuron", "label"])
    writer.network(net)
    snaps.write(writer)
    _first_test_recording(net, test, cfg, writer, "X", "Ae")
    return metrics


def make_environment(section: Mapping[str, Any]) -> tuple[Environment, int]:
    """Build the configured environment and return it with its observation size."""
    params = {k: v for k, v in section.items() if k != "kind"}
    if section["kind"] == "gridworld":
        for key in ("start", "goal"):
            if key in params:
                params[key] = tuple(params[key])
        try:
            env = GridWorld(**params)
        except ValidationError as exc:
            raise ConfigError(f"environment: {exc}") from None
        return env, env.width * env.height
    env = ExternalEnvironment(params["command"], params["n_actions"])
    return env, params["observation_size"]


def run_rl(cfg: Mapping[str, Any], out_dir) -> dict[str, Any]:
    """Online reward-modulated learning in a closed loop with the environment."""
    env, obs_size = make_environment(cfg["environment"])
    try:
        model = dict(cfg["model"])
        for key, value in (("n_input", obs_size), ("n_actions", env.n_actions)):
            if model.setdefault(key, value) != value:
                raise ConfigError(f"model.{key} is {model[key]} but the environment needs {value}")
        mcfg = _model_config(RLConfig, model, dt=cfg["schedule"].get("dt", 1.0))
        rng = make_rng(cfg["seed"])
        net = build_rl_network(mcfg, rng)
        writer = RunWriter(out_dir)
        snaps = Snapshots(net, cfg["record"]["snapshot_every"])
        pcfg = cfg["pipeline"]
        pipe = Pipeline(
            net, env, _encoder(cfg),
            PipelineConfig(input_layer="X", output_layer="Y", time_per_obs=cfg["schedule"]["time"], **pcfg),
        )
        episodes = cfg["schedule"]["episodes"]
        report = _progress("episode", episodes, every=50)
        rewards = []
        for ep in range(episodes):
            if ep == episodes - 1:
                with Recorder(net, cfg["record"]["layers"]) as rec:
                    summary = pipe.run_episode()
            else:
                summary = pipe.run_episode()
            rewards.append(summary.total_reward)
            snaps.tick(ep + 1)
            report(ep + 1)
    finally:
        env.close()
    window = min(100, episodes)
    metrics = {
        "episodes": episodes,
        "mean_reward_first": float(np.mean(rewards[:window])),
        "mean_reward_last": float(np.mean(rewards[-window:])),
        "window": window,
    }
    log.info("mean reward first %d %.3f, last %d %.3f", window, metrics["mean_reward_first"], window,
             metrics["mean_reward_last"])

    writer.config(cfg)
    writer.metrics(metrics)
    writer.bytes("episodes.csv", pipe.summaries_csv().encode())
    writer.network(net)
    snaps.write(writer)
    rec.write(writer)
    return metrics


def run_reservoir(cfg: Mapping[str, Any], out_dir) -> dict[str, Any]:
    """Fixed random recurrent network as a feature extractor for a linear readout.

    The baseline readout sees the input layer's spike counts, so both readouts
    get the same examples, encoding draws and training budget.
    """
    data = cfg["data"]
    train = _require(load_split(cfg, "train"), data["train_examples"], "training")
    test = _require(load_split(cfg, "test"), data["test_examples"], "test")
    mcfg = _model_config(ReservoirConfig, cfg["model"], dt=cfg["schedule"].get("dt", 1.0))
    rng = make_rng(cfg["seed"])
    net = build_reservoir(mcfg, rng)
    writer = RunWriter(out_dir)
    layers = ("output", "input")
    f_train = _present_dataset(net, train, cfg, "input", "output", collect=layers,
                               on_example=_progress("train features", len(train)))
    f_test = _present_dataset(net, test, cfg, "input", "output", collect=layers)
    rcfg = cfg["readout"]
    fit = dict(epochs=rcfg["epochs"], lr=rcfg["lr"], batch_size=rcfg["batch_size"], seed=cfg["seed"],
               class_count=train.class_count)
    readout = train_linear_readout(f_train["output"], train.labels, **fit)
    baseline = train_linear_readout(f_train["input"], train.labels, **fit)
    pred = readout.predict(f_test["output"])
    metrics = {
        "reservoir_train_accuracy": readout.train_accuracy,
        "reservoir_test_accuracy": float(np.mean(pred == test.labels)),
        "raw_train_accuracy": baseline.train_accuracy,
        "raw_test_accuracy": baseline.accuracy(f_test["input"], test.labels),
        "feature_dim": int(f_train["output"].shape[1]),
        "train_examples": len(train),
        "test_examples": len(test),
    }
    log.info("reservoir test %.3f raw test %.3f", metrics["reservoir_test_accuracy"], metrics["raw_test_accuracy"])

    header = ["label", *[f"f{j}" for j in range(mcfg.n_reservoir)]]
    writer.config(cfg)
    writer.metrics(metrics)
    writer.confusion(confusion_matrix(test.labels, pred, train.class_count))
    writer.csv("features_train.csv", ([int(y), *row.tolist()] for y, row in zip(train.labels, f_train["output"])), header)
    writer.csv("features_test.csv", ([int(y), *row.tolist()] for y, row in zip(test.labels, f_test["output"])), header)
    writer.network(net)
    _first_test_recording(net, test, cfg, writer, "input", "output")
    return metrics


RUNNERS = {
    "unsupervised": run_unsupervised,
    "supervised": run_supervised,
    "rl": run_rl,
    "reservoir": run_reservoir,
}


def default_output_dir(cfg: Mapping[str, Any]) -> Path:
    return Path(cfg.get("output_dir") or f"runs/{cfg['experiment']}-seed{cfg['seed']}")


def run_experiment(cfg: Mapping[str, Any], out_dir=None) -> dict[str, Any]:
    out = Path(out_dir) if out_dir is not None else default_output_dir(cfg)
    return RUNNERS[cfg["experiment"]](cfg, out)


# ---------------------------------------------------------------- export

def _load_npy(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        return np.load(fh, allow_pickle=False)


def _recordings(run_dir: Path, var: str) -> dict[str, np.ndarray]:
    found = {}
    for path in sorted(run_dir.glob(f"record_*_{var}.npy")):
        found[path.name[len("record_") : -len(f"_{var}.npy")]] = _load_npy(path)
    return found


def export_states(run_dir, what: str, out_dir=None) -> list[Path]:
    """Turn a run's recorded arrays into plain files.

    ``spikes``: ``spikes_<layer>.csv`` with one ``step,neuron`` row per spike.
    ``voltages``: ``voltages_<layer>.csv``, steps by neurons.
    ``weights``: ``weights.sfnet``, one flat ``weights_<src>_<tgt>.csv`` per
    connection and ``weights_movie_<src>_<tgt>.npy`` (frames, pre, post) for
    every connection with a recorded history.
    """
    run_dir = Path(run_dir)
    out = Path(out_dir) if out_dir is not None else run_dir / "export"
    if not run_dir.is_dir():
        raise DataError(f"{run_dir} is not a run directory")
    written: list[Path] = []

    def emit(name: str, data: bytes) -> None:
        atomic_write_bytes(out / name, data)
        written.append(out / name)

    if what == "spikes":
        for layer, s in _recordings(run_dir, "s").items():
            steps, neurons = np.nonzero(s)
            emit(f"spikes_{layer}.csv", _csv(zip(steps.tolist(), neurons.tolist()), ["step", "neuron"]))
    elif what == "voltages":
        for layer, v in _recordings(run_dir, "v").items():
            emit(f"voltages_{layer}.csv", _csv(([repr(float(x)) for x in row] for row in v),
                                              [f"n{j}" for j in range(v.shape[1])]))
    elif what == "weights":
        model = run_dir / "model.sfnet"
        if not model.exists():
            raise DataError(f"{model} does not exist")
        raw = model.read_bytes()
        net = network_from_bytes(raw)
        emit("weights.sfnet", raw)
        for (src, tgt), conn in net.connections.items():
            w = conn.w.reshape(conn.w.shape[0], -1)  # conv kernels: one row per output channel
            emit(f"weights_{src}_{tgt}.csv", _csv(([repr(float(x)) for x in row] for row in w)))
        for path in sorted(run_dir.glob("weights_history_*.npy")):
            emit(path.name.replace("weights_history_", "weights_movie_"), path.read_bytes())
    else:
        raise ConfigError(f"unknown export kind {what!r}; use spikes, voltages or weights")
    if not written:
        raise DataError(f"{run_dir} holds no recorded {what}")
    return written


def read_weight_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)
