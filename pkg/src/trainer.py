#!/usr/bin/env python3
"""
Trainer - MLE pre-training, preset fine-tuning, evaluation, generation and
schedule-rate sweeps, with validation-based checkpointing
"""
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

try:
    from .checkpoint import load_checkpoint, save_checkpoint
    from .config import TrainConfig
    from .corpus import (EncodedExample, SentencePair, Vocabulary, build_vocab, decode_tokens,
                         detokenize, encode, load_pairs, split, tokenize)
    from .decoding import beam_search, greedy_decode
    from .diffcore import Array
    from .errors import ConfigurationError, ContractError, ParseError
    from .lab_log import ActivityLog
    from .learner import (AlgorithmPreset, TrainDiagnostics, accumulate_gradients, apply_gradients,
                          preset_by_name, teacher_forcing_loss)
    from .metrics import MetricReport, evaluate_corpus
    from .model import ParameterStore, PointerGenerator, init_params
    from .optimizers import OptimizerState, init_optimizer_state
    from .run_store import RunRecord, RunStatus, RunStore, write_records_csv
    from .schedule import ScheduleKind, ScheduleSpec, format_number, format_schedule, parse_schedule
    from .synth import synth_corpus
except ImportError:
    # When running as a script
    from checkpoint import load_checkpoint, save_checkpoint
    from config import TrainConfig
    from corpus import (EncodedExample, SentencePair, Vocabulary, build_vocab, decode_tokens,
                        detokenize, encode, load_pairs, split, tokenize)
    from decoding import beam_search, greedy_decode
    from diffcore import Array
    from errors import ConfigurationError, ContractError, ParseError
    from lab_log import ActivityLog
    from learner import (AlgorithmPreset, TrainDiagnostics, accumulate_gradients, apply_gradients,
                         preset_by_name, teacher_forcing_loss)
    from metrics import MetricReport, evaluate_corpus
    from model import ParameterStore, PointerGenerator, init_params
    from optimizers import OptimizerState, init_optimizer_state
    from run_store import RunRecord, RunStatus, RunStore, write_records_csv
    from schedule import ScheduleKind, ScheduleSpec, format_number, format_schedule, parse_schedule
    from synth import synth_corpus

SWEEP_HEADER = "alpha,beta,k_alpha,rouge1,rouge2,bleu2,avg"
GridPoint = Tuple[ScheduleSpec, Optional[ScheduleSpec]]


@dataclass
class Dataset:
    vocab: Vocabulary
    train: List[EncodedExample]
    val: List[EncodedExample]
    test: List[EncodedExample]
    val_refs: List[Tuple[str, ...]]
    test_refs: List[Tuple[str, ...]]


def encode_all(pairs: Sequence[SentencePair], vocab: Vocabulary, max_len: int) -> List[EncodedExample]:
    return [encode(pair, vocab, max_len) for pair in pairs]


def parallel_map(fn: Callable, items: Sequence, workers: int = 1) -> List:
    """fn over items, results in input order"""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))


def evaluate_model(decoder, examples: Sequence[EncodedExample], references: Sequence[Sequence[str]],
                   vocab: Vocabulary, beam: int = 8, max_len: int = 20, workers: int = 1,
                   length_norm: bool = False) -> MetricReport:
    """Decode every example with any decoder-protocol model and score the outputs"""
    if not examples:
        raise ContractError("cannot evaluate an empty example set")

    def run(example: EncodedExample) -> List[str]:
        if beam == 1:
            ids = greedy_decode(decoder, example, max_len)
        else:
            ids = beam_search(decoder, example, beam, max_len, length_norm)
        return decode_tokens(ids, vocab, example.src_oovs)

    candidates = parallel_map(run, list(examples), workers)
    return evaluate_corpus(candidates, [list(r) for r in references])


def validation_loss(store: ParameterStore, examples: Sequence[EncodedExample], workers: int = 1) -> float:
    """Mean teacher-forcing negative log-likelihood per sentence"""
    if not examples:
        return math.nan
    losses = parallel_map(lambda ex: float(teacher_forcing_loss(store, ex, record=False)[1].value),
                          list(examples), workers)
    return sum(losses) / len(losses)


def preset_slug(name: str) -> str:
    return name.lower().replace("*", "-star")


def parse_grid(path: Union[str, Path]) -> List[GridPoint]:
    """Grid file: one `alpha=SPEC [beta=SPEC]` line per point, `#` comments"""
    points = []
    text = Path(path).read_text(encoding="utf-8")
    for line_number, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        specs: Dict[str, ScheduleSpec] = {}
        for item in line.split():
            key, _, value = item.partition("=")
            if key not in ("alpha", "beta") or not value:
                raise ParseError(f"expected alpha=SPEC [beta=SPEC], got {item!r}", line_number)
            try:
                specs[key] = parse_schedule(value)
            except ConfigurationError as e:
                raise ParseError(str(e), line_number)
        if "alpha" not in specs:
            raise ParseError("grid point needs an alpha schedule", line_number)
        points.append((specs["alpha"], specs.get("beta")))
    return points


def sweep_row(alpha: ScheduleSpec, beta: ScheduleSpec, report: MetricReport) -> str:
    k_alpha = format_number(alpha.k) if alpha.kind is not ScheduleKind.CONSTANT else ""
    return f"{format_schedule(alpha)},{format_schedule(beta)},{k_alpha},{report.csv_row()}"


class Trainer:
    """Runs the experiment phases of one TrainConfig"""

    def __init__(self, config: TrainConfig, runs: Optional[RunStore] = None,
                 log: Optional[ActivityLog] = None):
        self.config = config.validate()
        self.log = log or ActivityLog(config.log_path)
        self.runs = runs or RunStore(config.run_db)
        self.run_dir = Path(config.run_dir)
        self._pairs: Optional[Tuple[List[SentencePair], List[SentencePair], List[SentencePair]]] = None
        self.last_run_id: Optional[str] = None
        self.last_records: List[RunRecord] = []

    # --- data -------------------------------------------------------------

    def pairs(self) -> Tuple[List[SentencePair], List[SentencePair], List[SentencePair]]:
        """(train, val, test) pairs from split files, one file, or the synthetic task"""
        if self._pairs is not None:
            return self._pairs
        c = self.config
        if c.train_path:
            train = load_pairs(c.train_path)
            val = load_pairs(c.val_path) if c.val_path else []
            test = load_pairs(c.test_path) if c.test_path else []
        else:
            if c.data_path:
                pool = load_pairs(c.data_path)
            else:
                pool = synth_corpus(c.synth_task, c.synth_vocab, c.train_n + c.val_n + c.test_n,
                                    c.synth_max_len, c.seed)
            train, val, test = split(pool, c.train_n, c.val_n, c.test_n, c.seed)
        if not train:
            raise ConfigurationError("no training pairs")
        self._pairs = (train, val, test)
        return self._pairs

    def dataset(self, vocab: Optional[Vocabulary] = None) -> Dataset:
        train, val, test = self.pairs()
        vocab = vocab or build_vocab(train, self.config.vocab_cap)
        m = self.config.max_len
        return Dataset(vocab, encode_all(train, vocab, m), encode_all(val, vocab, m),
                       encode_all(test, vocab, m), [p.target for p in val], [p.target for p in test])

    def _checkpoint_path(self, default_name: str) -> Path:
        return Path(self.config.checkpoint) if self.config.checkpoint else self.run_dir / default_name

    def _pretrain_checkpoint(self) -> Path:
        return Path(self.config.pretrain_checkpoint or self.run_dir / "pretrain.ckpt")

    def _load_for_phase(self, checkpoint: Path) -> Tuple[ParameterStore, Dataset]:
        if not checkpoint.exists():
            raise ConfigurationError(f"checkpoint {checkpoint} not found; run pretrain first")
        store, vocab = load_checkpoint(checkpoint)
        data = self.dataset(vocab)
        if data.vocab.size != store.config.vocab_size:
            raise ConfigurationError(
                f"vocabulary size {data.vocab.size} does not match checkpoint {store.config.vocab_size}")
        return store, data

    # --- phases -----------------------------------------------------------

    def pretrain(self) -> Path:
        """MLE training from scratch; keeps the lowest validation loss"""
        c = replace(self.config, phase="pretrain")
        data = self.dataset()
        store = init_params(c.model_config(data.vocab.size), c.seed)
        opt_state = init_optimizer_state(c.optimizer_spec("pretrain"), store)
        checkpoint = self._checkpoint_path("pretrain.ckpt")
        return self._run_phase(c, preset_by_name("MLE", c.dataset_profile), store, opt_state, data,
                               checkpoint, select_by_metrics=False)

    def finetune(self, preset_name: Optional[str] = None) -> Path:
        """Continue from the pre-trained checkpoint with a preset; keeps the best metric average"""
        c = replace(self.config, phase="finetune")
        preset = c.algorithm_preset(preset_name)
        store, data = self._load_for_phase(self._pretrain_checkpoint())
        opt_state = init_optimizer_state(c.optimizer_spec("finetune"), store)
        checkpoint = self._checkpoint_path(f"finetune-{preset_slug(preset.name)}.ckpt")
        return self._run_phase(c, preset, store, opt_state, data, checkpoint, select_by_metrics=True)

    def _validate(self, c: TrainConfig, store: ParameterStore, data: Dataset, iteration: int,
                  train_loss: Optional[float], started: float, with_metrics: bool) -> RunRecord:
        examples = data.val[:c.val_limit]
        refs = data.val_refs[:c.val_limit]
        record = RunRecord(iteration, train_loss, validation_loss(store, examples, c.workers))
        if with_metrics and examples:
            report = evaluate_model(PointerGenerator(store), examples, refs, data.vocab, c.val_beam,
                                    c.max_len, c.workers, c.length_norm)
            record.rouge1, record.rouge2, record.bleu2, record.avg = (
                report.rouge1, report.rouge2, report.bleu2, report.avg)
        record.wall_clock = time.monotonic() - started
        return record

    def _run_phase(self, c: TrainConfig, preset: AlgorithmPreset, store: ParameterStore,
                   opt_state: OptimizerState, data: Dataset, checkpoint: Path,
                   select_by_metrics: bool) -> Path:
        run_id = self.runs.create_run(c.phase, preset.name, c.as_dict())
        self.runs.update_run(run_id, RunStatus.RUNNING)
        self.log.log(f"Run {run_id}: {c.phase} {preset.describe()}")
        self.log.activity("RUN_STARTED", f"{c.phase} {preset.name}, {len(data.train)} train pairs", run_id)

        iterations, eval_every = c.resolved_iterations, c.resolved_eval_every
        order_rng, step_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(c.seed).spawn(2))
        started = time.monotonic()
        records: List[RunRecord] = []
        best: Optional[float] = None
        window: List[float] = []

        def validate(iteration: int):
            nonlocal best
            train_loss = sum(window) / len(window) if window else None
            window.clear()
            record = self._validate(c, store, data, iteration, train_loss, started, select_by_metrics)
            records.append(record)
            self.runs.add_record(run_id, record)
            score = record.avg if select_by_metrics else record.val_loss
            self.log.activity("VALIDATION", f"iter {iteration}: val_loss={record.val_loss:.4f}"
                              + (f" avg={record.avg:.2f}" if record.avg is not None else ""), run_id)
            if score is None or math.isnan(score):
                return
            if best is None or (score > best if select_by_metrics else score < best):
                best = score
                save(iteration, score)

        def save(iteration: int, score: Optional[float]):
            save_checkpoint(checkpoint, store, data.vocab)
            self.runs.update_run(run_id, RunStatus.RUNNING, checkpoint=str(checkpoint), best_score=score)
            self.log.activity("CHECKPOINT", f"iter {iteration}: saved {checkpoint}", run_id)

        try:
            validate(0)
            order: List[int] = []
            for iteration in range(iterations):
                batch = []
                while len(batch) < c.batch_size:
                    if not order:
                        order = list(order_rng.permutation(len(data.train)))
                    batch.append(data.train[order.pop(0)])
                diagnostics = self._step(store, opt_state, batch, preset, iteration, step_rng, c.max_grad_norm)
                window.append(diagnostics.loss)
                if (iteration + 1) % eval_every == 0:
                    validate(iteration + 1)
            if iterations % eval_every != 0:
                validate(iterations)
            if best is None:
                # nothing was scored, so the final parameters are kept
                self.log.log(f"Run {run_id}: no validation score, keeping final parameters", "warning")
                save(iterations, None)
        except KeyboardInterrupt:
            self.log.log(f"Run {run_id} interrupted", "warning")
            self.log.activity("RUN_FAILED", "interrupted", run_id)
            self.runs.update_run(run_id, RunStatus.INTERRUPTED)
            raise
        except Exception as e:
            self.log.log(f"Run {run_id} failed: {e}", "error")
            self.log.activity("RUN_FAILED", str(e), run_id)
            self.runs.update_run(run_id, RunStatus.FAILED, error=str(e))
            raise
        finally:
            if records:
                write_records_csv(f"{checkpoint}.records.csv", records)

        self.runs.update_run(run_id, RunStatus.COMPLETED)
        self.log.activity("RUN_COMPLETED", f"best={best} checkpoint={checkpoint}", run_id)
        self.log.log(f"Run {run_id} completed, best checkpoint {checkpoint}")
        self.last_run_id = run_id
        self.last_records = records
        return checkpoint

    @staticmethod
    def _step(store: ParameterStore, opt_state: OptimizerState, batch: Sequence[EncodedExample],
              preset: AlgorithmPreset, iteration: int, rng: np.random.Generator,
              max_grad_norm: float) -> TrainDiagnostics:
        """One update from a batch (size 1 is the plain online step)"""
        grads: Optional[Dict[str, Array]] = None
        parts: List[TrainDiagnostics] = []
        for example in batch:
            g, diagnostics = accumulate_gradients(store, example, preset, iteration, rng)
            parts.append(diagnostics)
            grads = g if grads is None else {k: grads[k] + g[k] for k in grads}
        if len(batch) > 1:
            grads = {k: v / len(batch) for k, v in grads.items()}
            merged = replace(parts[0], loss=sum(p.loss for p in parts) / len(parts),
                             rewards=[r for p in parts for r in p.rewards],
                             update_skipped=all(p.update_skipped for p in parts))
        else:
            merged = parts[0]
        apply_gradients(store, opt_state, grads, merged, max_grad_norm)
        return merged

    # --- evaluation and generation -----------------------------------------

    def evaluate(self, checkpoint: Union[str, Path], pairs: Optional[Sequence[SentencePair]] = None,
                 beam: Optional[int] = None) -> MetricReport:
        """Beam-decode test sources and score them against their references"""
        store, data = self._load_for_phase(Path(checkpoint))
        beam = beam or self.config.test_beam
        if pairs is None:
            examples, refs = data.test, data.test_refs
        else:
            examples = encode_all(pairs, data.vocab, self.config.max_len)
            refs = [p.target for p in pairs]
        if not examples:
            raise ContractError("cannot evaluate an empty test set")
        report = evaluate_model(PointerGenerator(store), examples, refs, data.vocab, beam,
                                self.config.max_len, self.config.workers, self.config.length_norm)
        self.log.activity("EVALUATED", f"{checkpoint} beam={beam} {MetricReport.csv_header()}={report.csv_row()}")
        return report

    def generate(self, checkpoint: Union[str, Path], input_path: Union[str, Path],
                 output_path: Union[str, Path], beam: Optional[int] = None) -> int:
        """One detokenized paraphrase per input line, same order"""
        store, vocab = load_checkpoint(checkpoint)
        if vocab is None:
            vocab = self.dataset().vocab
        beam = beam or self.config.test_beam
        try:
            lines = Path(input_path).read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise OSError(f"cannot read input file {input_path}: {e}") from e

        model = PointerGenerator(store)

        def run(line: str) -> str:
            source = tokenize(line.split("\t", 1)[0])
            if not source:
                return ""
            example = encode(SentencePair(source, ()), vocab, self.config.max_len)
            if beam == 1:
                ids = greedy_decode(model, example, self.config.max_len)
            else:
                ids = beam_search(model, example, beam, self.config.max_len, self.config.length_norm)
            return detokenize(decode_tokens(ids, vocab, example.src_oovs))

        outputs = parallel_map(run, lines, self.config.workers)
        Path(output_path).write_text("".join(o + "\n" for o in outputs), encoding="utf-8")
        self.log.activity("GENERATED", f"{len(outputs)} sentences from {input_path} to {output_path}")
        return len(outputs)

    # --- sweeps -------------------------------------------------------------

    def sweep(self, preset_name: str, grid: Sequence[GridPoint],
              output: Optional[Union[str, Path]] = None) -> List[str]:
        """Fine-tune once per grid point from the same pre-trained checkpoint"""
        base = self.config.algorithm_preset(preset_name)
        lines = [SWEEP_HEADER]
        for index, (alpha, beta) in enumerate(grid):
            beta = beta or base.beta
            point = replace(self.config, alpha=format_schedule(alpha), beta=format_schedule(beta),
                            checkpoint=str(self.run_dir / f"sweep-{preset_slug(base.name)}-{index}.ckpt"))
            trainer = Trainer(point, self.runs, self.log)
            trainer._pairs = self.pairs()
            checkpoint = trainer.finetune(preset_name)
            report = trainer.evaluate(checkpoint)
            lines.append(sweep_row(alpha, beta, report))
            self.log.activity("SWEEP_POINT", f"{index}: {lines[-1]}")

        if output is not None:
            Path(output).parent.mkdir(parents=True, exist_ok=True)
            Path(output).write_text("\n".join(lines) + "\n", encoding="utf-8")
        return lines
