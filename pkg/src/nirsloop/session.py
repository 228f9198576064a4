"""Session protocol orchestration.

Drives the full loop over the wire module's nodes and loopback transports:
calibration, the labeled training phase, four live test phases with optional
vibration feedback into the subject, the repeated-training detection
evaluation, and the result tables. Every reported number is recomputable
from the append-only session.jsonl log.

Within one tick the chain is synchronous: the recorder emits the tick's
frames, the server converts/extracts/classifies and sends the stress packet
for the same t_index, and the actuator applies it; the updated vibration
state reaches the subject on the next tick.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import classifier as clf_mod
from .classifier import ConfusionMatrix, StressClassifier, group_majority, metrics
from .config import ConfigError, SessionConfig
from .dsp import PeakDetector
from .features import FeatureExtractor, FeatureVector
from .hemodynamics import CHANNELS, frame_to_hemo
from .subject import BlockKind, SubjectFrameSource, truth_label
from .wire import (
    ActuatorNode,
    ActuatorState,
    Command,
    CommandAction,
    DataFrame,
    Init,
    LoopbackTransport,
    RecorderNode,
    StressServer,
    baseline_from_calib_report,
    encode,
    packet_to_frame,
)


class SessionError(Exception):
    pass


class ModelMissing(SessionError):
    pass


class UndefinedBaseline(SessionError):
    pass


@dataclass(frozen=True)
class BlockSpec:
    """One protocol block: a rest span or a timed calculation task."""

    kind: BlockKind
    duration_s: float
    item_count: int = 0
    per_item_s: float = 0.0
    recording_paused_after: bool = False

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("block duration must be > 0")


def rest_block(duration_s: float = 10.0) -> BlockSpec:
    return BlockSpec(kind=BlockKind.REST, duration_s=duration_s)


def calculation_block(item_count: int, per_item_s: float, paused_after: bool,
                      kind: BlockKind = BlockKind.CALCULATION) -> BlockSpec:
    return BlockSpec(kind=kind, duration_s=item_count * per_item_s,
                     item_count=item_count, per_item_s=per_item_s,
                     recording_paused_after=paused_after)


def training_blocks(proto: dict) -> list[BlockSpec]:
    """Alternating rest and calculation blocks with the training item timing."""
    blocks = []
    for count in proto["training_counts"]:
        blocks.append(rest_block(proto["rest_s"]))
        blocks.append(calculation_block(count, proto["training_per_item_s"],
                                        proto["pause_after_calculation"]))
    return blocks


def test_phase_blocks(proto: dict, special: bool = False) -> list[BlockSpec]:
    """Test phases mirror training but speed up the first calculation blocks;
    a triggered special test replaces those fast blocks entirely."""
    blocks = []
    fast = int(proto["test_fast_blocks"])
    for i, count in enumerate(proto["training_counts"]):
        blocks.append(rest_block(proto["rest_s"]))
        if i < fast:
            if special:
                blocks.append(calculation_block(
                    int(proto["special_item_count"]), float(proto["special_per_item_s"]),
                    proto["pause_after_calculation"], kind=BlockKind.SPECIAL))
            else:
                blocks.append(calculation_block(count, proto["test_fast_per_item_s"],
                                                proto["pause_after_calculation"]))
        else:
            blocks.append(calculation_block(count, proto["training_per_item_s"],
                                            proto["pause_after_calculation"]))
    return blocks


@dataclass
class PhaseResult:
    phase_id: int
    stressed_fraction: float
    answer_accuracy: float
    groups: list = field(default_factory=list)
    truth_stressed_fraction: float = 0.0

    def to_dict(self) -> dict:
        return {
            "phase_id": self.phase_id,
            "stressed_fraction": self.stressed_fraction,
            "answer_accuracy": self.answer_accuracy,
            "groups": self.groups,
            "truth_stressed_fraction": self.truth_stressed_fraction,
        }


def score_groups(pairs) -> ConfusionMatrix:
    """(truth, pred) tick pairs -> confusion matrix at 10-sample group
    granularity; both sides use the same majority rule (ties to stress)."""
    truths: list[int] = []
    preds: list[int] = []
    buffer: list[tuple[int, int]] = []
    for t, p in pairs:
        buffer.append((int(t), int(p)))
        if len(buffer) == clf_mod.GROUP_SIZE:
            truths.append(1 if sum(t for t, _ in buffer) * 2 >= clf_mod.GROUP_SIZE else 0)
            preds.append(group_majority([p for _, p in buffer]))
            buffer.clear()
    return ConfusionMatrix.from_pairs(truths, preds)


def stress_reduction(si: float, sj: float) -> float:
    """Relative drop in stressed fraction from phase i to phase j, percent."""
    if si <= 0:
        raise UndefinedBaseline("stress reduction undefined for zero baseline")
    return (si - sj) / si * 100.0


def accuracy_enhancement(ai: float, aj: float) -> float:
    """Answer-accuracy change in percentage points."""
    return (aj - ai) * 100.0


class SessionLog:
    """Append-only JSONL audit trail."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a")

    def append(self, event: dict) -> None:
        self._fh.write(json.dumps(event) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def read_log(path) -> list[dict]:
    events = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(json.loads(line))
    return events


@dataclass
class TickRecord:
    t: int
    truth: int
    pred: int | None
    vib: bool
    vector: FeatureVector | None
    packet_t: int | None


class FrameProcessor:
    """Server-side per-frame pipeline: pair the tick's channels, invert the
    optics against the calibrated baseline, extract features and classify.

    Plugs into StressServer as on_frame/on_calib; shared by the in-process
    loop and the distributed server role.
    """

    def __init__(self, cfg: SessionConfig, classifier: StressClassifier | None = None):
        self.cfg = cfg
        self.fs = cfg.fs
        self.params = cfg.beer_lambert()
        self.classifier = classifier
        self.baseline = None
        self.extractor: FeatureExtractor | None = None
        self._pending: dict[int, dict] = {}
        self.last_vector: FeatureVector | None = None
        self.reset_extractor()

    def _make_detector(self) -> PeakDetector:
        d = self.cfg.dsp
        return PeakDetector(
            fs=self.fs,
            stats_window_n=int(round(float(d["stats_window_s"]) * self.fs)),
            threshold=d["threshold"],
            threshold_k=float(d["threshold_k"]),
            excess_k=float(d["excess_k"]),
            refractory_s=float(d["refractory_s"]),
        )

    def reset_extractor(self) -> None:
        self.extractor = FeatureExtractor(self.cfg.feature_config(), fs=self.fs,
                                          n1=int(self.cfg.dsp["n1"]),
                                          peak_detector=self._make_detector())
        self._pending.clear()

    def on_calib(self, report) -> None:
        self.baseline = baseline_from_calib_report(report, self.params.wavelengths)

    def on_frame(self, pkt: DataFrame):
        if self.baseline is None:
            return None
        frame = packet_to_frame(pkt, self.params.wavelengths)
        pending = self._pending.setdefault(pkt.t_index, {})
        pending[frame.channel] = frame
        if len(pending) < len(CHANNELS):
            return None
        frames = self._pending.pop(pkt.t_index)
        hemo = {ch: frame_to_hemo(frames[ch], self.baseline, self.params) for ch in CHANNELS}
        vec = self.extractor.push(pkt.t_index, {ch: (h.hbo, h.hhb) for ch, h in hemo.items()})
        self.last_vector = vec
        if self.classifier is not None and vec.fully_valid:
            return self.classifier.predict(vec)
        return None


class LivePipeline:
    """One subject wired recorder -> server -> actuator over loopback."""

    def __init__(self, cfg: SessionConfig, classifier: StressClassifier | None = None,
                 feedback: bool = False):
        self.cfg = cfg
        self.fs = cfg.fs
        self.processor = FrameProcessor(cfg, classifier)
        self.params = self.processor.params
        self.source = SubjectFrameSource(cfg.subject_model(), fs=cfg.fs, params=self.params)
        self.data_transport = LoopbackTransport()
        self.stress_transport = LoopbackTransport()
        self.recorder = RecorderNode(self.source, self.data_transport,
                                     self.params.wavelengths, cfg.fs)
        self.feedback = feedback
        self.actuator = ActuatorNode(self.stress_transport,
                                     ActuatorState(debounce_m=int(cfg.wire["debounce_m"])))
        self.server = StressServer(self.data_transport, self.stress_transport,
                                   self.processor.on_frame, self.processor.on_calib,
                                   queue_size=int(cfg.wire["queue_size"]))

    @property
    def classifier(self):
        return self.processor.classifier

    @classifier.setter
    def classifier(self, clf) -> None:
        self.processor.classifier = clf

    @property
    def baseline(self):
        return self.processor.baseline

    def reset_extractor(self) -> None:
        self.processor.reset_extractor()

    def initialize(self) -> None:
        """Init handshake: recorder calibrates at rest and reports the baseline."""
        self.source.block = BlockKind.REST
        self.source.vibration_on = False
        self.recorder.handle_packet(encode(Init(
            channel_count=len(CHANNELS),
            calib_duration_s=float(self.cfg.protocol["calibration_s"]),
        )))
        self.server.pump()
        self.server.process()
        if self.baseline is None:
            raise SessionError("calibration report did not reach the server")

    def command(self, action: CommandAction) -> None:
        self.recorder.handle_packet(encode(Command(action=action)))

    def tick(self, kind: BlockKind) -> TickRecord:
        """Run one recorded tick through the whole chain."""
        self.source.block = kind
        vib = self.actuator.state.vibration_on if self.feedback else False
        self.source.vibration_on = vib
        self.processor.last_vector = None
        t = self.source.clock.t_index
        self.recorder.tick()
        self.server.pump()
        packets = self.server.process()
        if self.feedback:
            self.actuator.drain()
        pred = packets[-1].level if packets else None
        packet_t = packets[-1].t_index if packets else None
        return TickRecord(t=t, truth=truth_label(self.source.model), pred=pred,
                          vib=vib, vector=self.processor.last_vector, packet_t=packet_t)

    def idle(self, seconds: float, kind: BlockKind = BlockKind.REST) -> None:
        """Recording paused: subject time passes, nothing is emitted."""
        self.source.block = kind
        self.source.vibration_on = False
        for _ in range(int(round(seconds * self.fs))):
            self.source.next_frames()


class SessionRunner:
    """Filesystem-backed orchestrator for one session workspace."""

    def __init__(self, cfg: SessionConfig, workdir):
        self.cfg = cfg
        self.workdir = Path(workdir)
        self.workdir.mkdir(parents=True, exist_ok=True)
        self.log = SessionLog(self.workdir / "session.jsonl")
        self._answer_rng = np.random.default_rng([cfg.seed, 0xA05])

    # artifact paths
    @property
    def model_path(self) -> Path:
        return self.workdir / "model.json"

    @property
    def features_path(self) -> Path:
        return self.workdir / "features.jsonl"

    @property
    def calibration_path(self) -> Path:
        return self.workdir / "calibration.json"

    @property
    def results_csv_path(self) -> Path:
        return self.workdir / "results.csv"

    def _arm_results_path(self, feedback: bool) -> Path:
        return self.workdir / f"results_feedback_{'on' if feedback else 'off'}.json"

    def _save_calibration(self, pipeline: LivePipeline) -> dict:
        b = pipeline.baseline
        summary = {
            "i0": {f"{ch}:{wl}": b.i0[(ch, wl)] for ch, wl in b.i0},
            "ambient": {f"{ch}:{wl}": b.ambient[(ch, wl)] for ch, wl in b.ambient},
        }
        self.calibration_path.write_text(json.dumps(summary, indent=2))
        self.log.append({"event": "calibration", **summary})
        return summary

    def calibrate(self) -> dict:
        pipeline = LivePipeline(self.cfg)
        pipeline.initialize()
        return self._save_calibration(pipeline)

    def _block_ticks(self, block: BlockSpec) -> int:
        return int(round(block.duration_s * self.fs))

    @property
    def fs(self) -> float:
        return self.cfg.fs

    def _run_training_blocks(self, pipeline: LivePipeline, phase_tag: str,
                             collect: list | None):
        """Tick through the training script; optionally collect labeled vectors."""
        proto = self.cfg.protocol
        pipeline.reset_extractor()
        pipeline.command(CommandAction.RUN)
        for bi, block in enumerate(training_blocks(proto)):
            label = 1 if block.kind.stressful else 0
            self.log.append({"event": "block_start", "phase": phase_tag, "block": bi,
                             "kind": block.kind.value, "duration_s": block.duration_s,
                             "t_start": pipeline.source.clock.t_index})
            for _ in range(self._block_ticks(block)):
                rec = pipeline.tick(block.kind)
                self.log.append({"event": "tick", "phase": phase_tag, "t": rec.t,
                                 "truth": rec.truth, "pred": rec.pred, "vib": rec.vib,
                                 "label": label})
                if collect is not None and rec.vector is not None and rec.vector.fully_valid:
                    collect.append((rec.vector, label))
            if block.recording_paused_after and proto["pause_s"] > 0:
                pipeline.command(CommandAction.PAUSE)
                pipeline.idle(proto["pause_s"])
                pipeline.command(CommandAction.RUN)
        pipeline.command(CommandAction.PAUSE)

    def train(self) -> dict:
        """Run calibration plus the labeled training phase and fit the models."""
        self.log.append({"event": "config", "verb": "train", "config": self.cfg.to_dict()})
        pipeline = LivePipeline(self.cfg)
        pipeline.initialize()
        self._save_calibration(pipeline)
        collected: list = []
        self._run_training_blocks(pipeline, "training", collected)

        with open(self.features_path, "w") as fh:
            for vec, label in collected:
                fh.write(json.dumps(vec.to_record(label=label)) + "\n")
        params = self.cfg.classifier
        clf = clf_mod.fit([v for v, _ in collected], [l for _, l in collected],
                          k=int(params["k"]),
                          variance_retained=float(params["variance_retained"]))
        clf.save(self.model_path)
        loo = clf_mod.leave_one_out_accuracy(clf)
        labels = np.array([l for _, l in collected])
        summary = {
            "training_samples": len(collected),
            "class_counts": {"rest": int(np.sum(labels == 0)), "stress": int(np.sum(labels == 1))},
            "pca_dimensions": clf.pca.k,
            "leave_one_out_accuracy": loo,
            "model_path": str(self.model_path),
        }
        self.log.append({"event": "training", **summary})
        return summary

    def _replay_training(self, pipeline: LivePipeline) -> None:
        """Advance the subject through the training span without recording,
        reproducing the exact post-training state of a `train` run."""
        proto = self.cfg.protocol
        for block in training_blocks(proto):
            pipeline.idle(block.duration_s, block.kind)
            if block.recording_paused_after and proto["pause_s"] > 0:
                pipeline.idle(proto["pause_s"])

    def _answer_probability(self, stressed_fraction: float) -> float:
        proto = self.cfg.protocol
        z = float(proto["answer_bias"]) - float(proto["answer_stress_weight"]) * stressed_fraction
        return 1.0 / (1.0 + math.exp(-z))

    def _run_test_phase(self, pipeline: LivePipeline, phase_id: int, arm: str,
                        special: bool) -> PhaseResult:
        proto = self.cfg.protocol
        pipeline.reset_extractor()
        pipeline.actuator.state = ActuatorState(debounce_m=int(self.cfg.wire["debounce_m"]))
        pipeline.command(CommandAction.RUN)
        pred_buffer: list[int] = []
        groups: list[dict] = []
        items_total = 0
        items_correct = 0
        truth_ticks = 0
        stressful_ticks = 0
        for bi, block in enumerate(test_phase_blocks(proto, special=special)):
            self.log.append({"event": "block_start", "phase": phase_id, "arm": arm,
                             "block": bi, "kind": block.kind.value,
                             "duration_s": block.duration_s,
                             "t_start": pipeline.source.clock.t_index})
            ticks = self._block_ticks(block)
            item_ticks = int(round(block.per_item_s * self.fs)) if block.item_count else 0
            item_truth = 0
            since_item = 0
            for _ in range(ticks):
                rec = pipeline.tick(block.kind)
                self.log.append({"event": "tick", "phase": phase_id, "arm": arm,
                                 "t": rec.t, "truth": rec.truth, "pred": rec.pred,
                                 "vib": rec.vib, "packet_t": rec.packet_t,
                                 "kind": block.kind.value})
                if block.kind.stressful:
                    stressful_ticks += 1
                    truth_ticks += rec.truth
                if rec.pred is not None:
                    pred_buffer.append(rec.pred)
                    if len(pred_buffer) == clf_mod.GROUP_SIZE:
                        glabel = group_majority(pred_buffer)
                        groups.append({"t_end": rec.t, "label": glabel,
                                       "stressful": block.kind.stressful})
                        self.log.append({"event": "group", "phase": phase_id, "arm": arm,
                                         "t_end": rec.t, "label": glabel,
                                         "stressful": block.kind.stressful})
                        pred_buffer.clear()
                if item_ticks:
                    item_truth += rec.truth
                    since_item += 1
                    if since_item == item_ticks:
                        p = self._answer_probability(item_truth / item_ticks)
                        correct = bool(self._answer_rng.uniform() < p)
                        items_total += 1
                        items_correct += int(correct)
                        self.log.append({"event": "item", "phase": phase_id, "arm": arm,
                                         "block": bi, "p_correct": p, "correct": correct})
                        item_truth = 0
                        since_item = 0
            if block.recording_paused_after and proto["pause_s"] > 0:
                pipeline.command(CommandAction.PAUSE)
                pipeline.idle(proto["pause_s"])
                pipeline.command(CommandAction.RUN)
        pipeline.command(CommandAction.PAUSE)

        stress_groups = [g for g in groups if g["stressful"]]
        stressed_fraction = (
            sum(g["label"] for g in stress_groups) / len(stress_groups) if stress_groups else 0.0
        )
        result = PhaseResult(
            phase_id=phase_id,
            stressed_fraction=stressed_fraction,
            answer_accuracy=items_correct / items_total if items_total else 0.0,
            groups=groups,
            truth_stressed_fraction=truth_ticks / stressful_ticks if stressful_ticks else 0.0,
        )
        self.log.append({"event": "phase_result", "arm": arm, **result.to_dict()})
        return result

    def run_tests(self, feedback: bool | None = None, phases: int | None = None) -> list[PhaseResult]:
        """Replay calibration+training for subject continuity, then run the
        live test phases with the persisted model."""
        if not self.model_path.exists():
            raise ModelMissing(f"no trained model at {self.model_path}; run train first")
        if feedback is None:
            feedback = self.cfg.biofeedback
        proto = self.cfg.protocol
        n_phases = int(proto["test_phases"]) if phases is None else int(phases)
        if n_phases < 1:
            raise ConfigError("at least one test phase required")
        arm = "on" if feedback else "off"
        self.log.append({"event": "config", "verb": "run", "arm": arm,
                         "config": self.cfg.to_dict()})
        clf = StressClassifier.load(self.model_path)
        pipeline = LivePipeline(self.cfg, classifier=clf, feedback=feedback)
        pipeline.initialize()
        self._replay_training(pipeline)
        pipeline.idle(proto["gap_s"])

        results = []
        special_next = False
        t0 = time.perf_counter()
        for phase in range(1, n_phases + 1):
            result = self._run_test_phase(pipeline, phase, arm,
                                          special=special_next and bool(proto["enable_special"]))
            special_next = result.answer_accuracy >= 1.0
            results.append(result)
            pipeline.idle(proto["gap_s"])
        wall = time.perf_counter() - t0
        payload = {
            "feedback": feedback,
            "phases": [r.to_dict() for r in results],
            "wall_seconds": wall,
            "sim_seconds": pipeline.source.clock.t_index / self.fs,
        }
        self._arm_results_path(feedback).write_text(json.dumps(payload, indent=2))
        return results

    def detection_eval(self, repetitions: int | None = None) -> dict:
        """Repeat the training script; fit on the first pass, score the rest
        against the block labels at group granularity."""
        proto = self.cfg.protocol
        reps = int(proto["eval_repetitions"]) if repetitions is None else int(repetitions)
        if reps < 2:
            raise ConfigError("detection eval needs >= 2 repetitions (1 fit + >=1 scored)")
        self.log.append({"event": "config", "verb": "detect-eval", "config": self.cfg.to_dict()})
        pipeline = LivePipeline(self.cfg)
        pipeline.initialize()
        self._save_calibration(pipeline)
        collected: list = []
        self._run_training_blocks(pipeline, "eval-rep1", collected)
        params = self.cfg.classifier
        clf = clf_mod.fit([v for v, _ in collected], [l for _, l in collected],
                          k=int(params["k"]),
                          variance_retained=float(params["variance_retained"]))
        clf.save(self.model_path)
        pipeline.classifier = clf

        cm = ConfusionMatrix(tp=0, fn=0, fp=0, tn=0)
        for rep in range(2, reps + 1):
            pipeline.idle(proto["gap_s"])
            pipeline.reset_extractor()
            pipeline.command(CommandAction.RUN)
            pairs: list[tuple[int, int]] = []
            for block in training_blocks(proto):
                label = 1 if block.kind.stressful else 0
                for _ in range(self._block_ticks(block)):
                    rec = pipeline.tick(block.kind)
                    if rec.pred is not None:
                        pairs.append((label, rec.pred))
                if block.recording_paused_after and proto["pause_s"] > 0:
                    pipeline.command(CommandAction.PAUSE)
                    pipeline.idle(proto["pause_s"])
                    pipeline.command(CommandAction.RUN)
            pipeline.command(CommandAction.PAUSE)
            rep_cm = score_groups(pairs)
            self.log.append({"event": "eval_rep", "rep": rep, "tp": rep_cm.tp,
                             "fn": rep_cm.fn, "fp": rep_cm.fp, "tn": rep_cm.tn})
            cm = ConfusionMatrix(tp=cm.tp + rep_cm.tp, fn=cm.fn + rep_cm.fn,
                                 fp=cm.fp + rep_cm.fp, tn=cm.tn + rep_cm.tn)
        rep_metrics = metrics(cm)
        report = {
            "repetitions": reps,
            "groups_scored": cm.total,
            "confusion_matrix": {"tp": cm.tp, "fn": cm.fn, "fp": cm.fp, "tn": cm.tn},
            "accuracy": rep_metrics.accuracy,
            "precision": rep_metrics.precision,
            "recall": rep_metrics.recall,
            "undefined": list(rep_metrics.undefined),
        }
        (self.workdir / "detection.json").write_text(json.dumps(report, indent=2))
        self.log.append({"event": "eval_result", **report})
        return report

    # --- reporting ----------------------------------------------------------

    @staticmethod
    def _table_rows(phases: list[dict]) -> list[dict]:
        """Phase-to-phase stress reduction and accuracy enhancement rows."""
        rows = []
        indexed = {p["phase_id"]: p for p in phases}
        pairs = [(i, i + 1, f"test{i + 1}-test{i}") for i in range(1, len(phases))]
        if len(phases) >= 2:
            pairs.append((1, len(phases), "total"))
        for i, j, name in pairs:
            si, sj = indexed[i]["stressed_fraction"], indexed[j]["stressed_fraction"]
            ai, aj = indexed[i]["answer_accuracy"], indexed[j]["answer_accuracy"]
            try:
                red = stress_reduction(si, sj)
            except UndefinedBaseline:
                red = None
            rows.append({"phase": name, "stress_reduction_pct": red,
                         "performance_enhancement_pp": accuracy_enhancement(ai, aj)})
        return rows

    def report(self) -> dict:
        """Build the result-summary table from the persisted arm results."""
        arms = {}
        for feedback in (True, False):
            path = self._arm_results_path(feedback)
            if path.exists():
                payload = json.loads(path.read_text())
                arms["on" if feedback else "off"] = self._table_rows(payload["phases"])
        if not arms:
            raise SessionError("no test-phase results to report; run `run` first")
        self._write_csv(arms)
        return {"arms": arms, "csv": str(self.results_csv_path)}

    def _write_csv(self, arms: dict) -> None:
        import csv

        names = [r["phase"] for r in next(iter(arms.values()))]
        with open(self.results_csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([
                "phase",
                "stress_reduction_with_feedback_pct",
                "performance_enhancement_with_feedback_pp",
                "stress_reduction_without_feedback_pct",
                "performance_enhancement_without_feedback_pp",
            ])
            for name in names:
                row = [name]
                for arm in ("on", "off"):
                    entry = next((r for r in arms.get(arm, []) if r["phase"] == name), None)
                    if entry is None:
                        row.extend(["", ""])
                    else:
                        red = entry["stress_reduction_pct"]
                        row.append("" if red is None else f"{red:.1f}")
                        row.append(f"{entry['performance_enhancement_pp']:.1f}")
                w.writerow(row)


def recompute_from_log(log_path) -> dict:
    """Rebuild per-arm phase summaries from the JSONL log alone."""
    events = read_log(log_path)
    arms: dict = {}
    for e in events:
        if e.get("event") == "group" and "arm" in e:
            d = arms.setdefault(e["arm"], {}).setdefault(e["phase"], {"groups": [], "items": []})
            d["groups"].append(e)
        elif e.get("event") == "item" and "arm" in e:
            d = arms.setdefault(e["arm"], {}).setdefault(e["phase"], {"groups": [], "items": []})
            d["items"].append(e)
    out: dict = {}
    for arm, phases in arms.items():
        out[arm] = []
        for phase_id in sorted(phases):
            d = phases[phase_id]
            stress_groups = [g for g in d["groups"] if g["stressful"]]
            frac = (sum(g["label"] for g in stress_groups) / len(stress_groups)
                    if stress_groups else 0.0)
            acc = (sum(1 for i in d["items"] if i["correct"]) / len(d["items"])
                   if d["items"] else 0.0)
            out[arm].append({"phase_id": phase_id, "stressed_fraction": frac,
                             "answer_accuracy": acc})
    return out
