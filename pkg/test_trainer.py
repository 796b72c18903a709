#!/usr/bin/env python3
"""
Test the trainer phases, configuration layering, run bookkeeping and the CLI
"""
import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent / "src"))

from checkpoint import load_checkpoint
from config import TrainConfig, build_config, coerce, read_config_file
from corpus import STOP, build_vocab
from errors import ConfigurationError, ContractError, ParseError
from lab_client import main
from lab_log import MAX_ENTRIES, ActivityLog
from model import init_params
from run_store import RECORD_CSV_HEADER, RunStore
from schedule import parse_schedule
from synth import synth_corpus
from trainer import (SWEEP_HEADER, Trainer, encode_all, evaluate_model, parse_grid, preset_slug,
                     validation_loss)


def tiny_config(tmp_path, **overrides):
    values = dict(
        hidden_dim=4, emb_dim=3, max_len=8,
        synth_task="copy", synth_vocab=12, synth_max_len=4,
        train_n=20, val_n=5, test_n=5, val_limit=5,
        max_iterations=4, eval_every=2, test_beam=2,
        run_dir=str(tmp_path / "runs"),
        run_db=str(tmp_path / "runs.db"),
        log_path=str(tmp_path / "activity.log"),
    )
    values.update(overrides)
    return TrainConfig(**values)


def make_trainer(tmp_path, **overrides):
    config = tiny_config(tmp_path, **overrides)
    return Trainer(config, log=ActivityLog(config.log_path, quiet=True))


class Oracle:
    """Decoder-protocol model that emits each example's reference"""

    def begin(self, example):
        return None, 0

    def advance(self, enc, state, input_id, example):
        width = max(max(example.tgt_ext_ids), max(example.src_ext_ids)) + 1
        dist = np.zeros(max(width, 16))
        target = example.tgt_ext_ids[state] if state < len(example.tgt_ext_ids) else STOP
        dist[target] = 1.0
        return state + 1, dist


# --- phases ---

def test_pretrain_without_iterations_records_iteration_zero(tmp_path):
    trainer = make_trainer(tmp_path, max_iterations=0)
    checkpoint = trainer.pretrain()
    assert checkpoint == tmp_path / "runs" / "pretrain.ckpt"
    assert checkpoint.exists()
    assert [r.iteration for r in trainer.last_records] == [0]
    assert trainer.last_records[0].train_loss is None

    run = trainer.runs.get_run(trainer.last_run_id)
    assert run.status == "completed"
    assert run.checkpoint == str(checkpoint)

    csv_lines = Path(f"{checkpoint}.records.csv").read_text().splitlines()
    assert csv_lines[0] == RECORD_CSV_HEADER
    assert len(csv_lines) == 2


def test_validation_schedule_includes_final_iteration(tmp_path):
    trainer = make_trainer(tmp_path, max_iterations=5, eval_every=2)
    trainer.pretrain()
    assert [r.iteration for r in trainer.last_records] == [0, 2, 4, 5]
    assert all(r.train_loss is not None for r in trainer.last_records[1:])
    assert [r.iteration for r in trainer.runs.records(trainer.last_run_id)] == [0, 2, 4, 5]


def test_pretrain_is_deterministic(tmp_path):
    first = make_trainer(tmp_path / "a").pretrain()
    second = make_trainer(tmp_path / "b").pretrain()
    assert load_checkpoint(first)[0].equals(load_checkpoint(second)[0])


def test_pretrain_with_zero_learning_rate_keeps_init(tmp_path):
    trainer = make_trainer(tmp_path, pretrain_lr=0.0)
    store, _ = load_checkpoint(trainer.pretrain())
    assert store.equals(init_params(store.config, trainer.config.seed))


def test_finetune_needs_pretrained_checkpoint(tmp_path):
    with pytest.raises(ConfigurationError):
        make_trainer(tmp_path).finetune("DAGGER")


def test_finetune_writes_preset_checkpoint_with_metrics(tmp_path):
    trainer = make_trainer(tmp_path)
    trainer.pretrain()
    checkpoint = trainer.finetune("DAGGER*")
    assert checkpoint == tmp_path / "runs" / "finetune-dagger-star.ckpt"
    assert checkpoint.exists()
    assert all(r.avg is not None for r in trainer.last_records)
    assert trainer.runs.get_run(trainer.last_run_id).preset == "DAGGER*"


def test_pretrain_without_validation_keeps_final_parameters(tmp_path):
    shorter = make_trainer(tmp_path / "a", val_n=0, max_iterations=3, pretrain_lr=0.5)
    longer = make_trainer(tmp_path / "b", val_n=0, max_iterations=4, pretrain_lr=0.5)
    short_store, _ = load_checkpoint(shorter.pretrain())
    long_store, _ = load_checkpoint(longer.pretrain())

    assert not long_store.equals(init_params(long_store.config, longer.config.seed))
    assert not long_store.equals(short_store)
    assert all(math.isnan(r.val_loss) for r in longer.last_records)
    run = longer.runs.get_run(longer.last_run_id)
    assert run.status == "completed"
    assert run.best_score is None
    saves = [e for e in longer.log.entries() if "[CHECKPOINT]" in e]
    assert len(saves) == 1 and "iter 4:" in saves[0]


def test_finetune_without_validation_saves_once_at_the_end(tmp_path):
    trainer = make_trainer(tmp_path, val_n=0)
    trainer.pretrain()
    checkpoint = trainer.finetune("DAGGER")
    assert checkpoint.exists()
    assert all(r.avg is None for r in trainer.last_records)
    saves = [e for e in trainer.log.entries()
             if "[CHECKPOINT]" in e and trainer.last_run_id in e]
    assert len(saves) == 1 and "iter 4:" in saves[0]


def test_batched_steps_run(tmp_path):
    trainer = make_trainer(tmp_path, batch_size=3, max_iterations=2)
    assert trainer.pretrain().exists()


def test_interrupted_run_is_marked(tmp_path, monkeypatch):
    def interrupt(*args, **kwargs):
        raise KeyboardInterrupt

    trainer = make_trainer(tmp_path)
    monkeypatch.setattr(Trainer, "_step", staticmethod(interrupt))
    with pytest.raises(KeyboardInterrupt):
        trainer.pretrain()
    run = trainer.runs.list_runs(1)[0]
    assert run.status == "interrupted"
    assert "RUN_FAILED" in trainer.log.entries()[-1]


def test_failed_run_keeps_error(tmp_path, monkeypatch):
    def fail(*args, **kwargs):
        raise RuntimeError("gradient exploded")

    trainer = make_trainer(tmp_path)
    monkeypatch.setattr(Trainer, "_step", staticmethod(fail))
    with pytest.raises(RuntimeError):
        trainer.pretrain()
    run = trainer.runs.list_runs(1)[0]
    assert run.status == "failed"
    assert run.error == "gradient exploded"


# --- evaluation and generation ---

def test_oracle_scores_100():
    # single-token sentences have no bigrams
    pairs = [p for p in synth_corpus("copy", 12, 30, 4, seed=0) if len(p.source) >= 2]
    vocab = build_vocab(pairs)
    examples = encode_all(pairs, vocab, 20)
    refs = [p.target for p in pairs]
    for beam in (1, 2):
        report = evaluate_model(Oracle(), examples, refs, vocab, beam=beam)
        assert (report.rouge1, report.rouge2, report.bleu2) == pytest.approx((100.0, 100.0, 100.0))


def test_evaluate_model_rejects_empty():
    vocab = build_vocab(synth_corpus("copy", 12, 3, 4, seed=0))
    with pytest.raises(ContractError):
        evaluate_model(Oracle(), [], [], vocab)


def test_validation_loss_of_nothing_is_nan(tmp_path):
    assert math.isnan(validation_loss(None, []))


def test_evaluate_checkpoint(tmp_path):
    trainer = make_trainer(tmp_path)
    report = trainer.evaluate(trainer.pretrain())
    for value in (report.rouge1, report.rouge2, report.bleu2, report.avg):
        assert 0.0 <= value <= 100.0


def test_evaluate_empty_pairs(tmp_path):
    trainer = make_trainer(tmp_path)
    with pytest.raises(ContractError):
        trainer.evaluate(trainer.pretrain(), pairs=[])


def test_generate_one_line_per_input(tmp_path):
    trainer = make_trainer(tmp_path)
    checkpoint = trainer.pretrain()
    source = tmp_path / "in.txt"
    source.write_text("w1 w2 w3\n\nw4 qqq\n")
    output = tmp_path / "out.txt"
    assert trainer.generate(checkpoint, source, output, beam=2) == 3
    lines = output.read_text().splitlines()
    assert len(lines) == 3
    assert lines[1] == ""


# --- sweeps ---

def test_parse_grid(tmp_path):
    path = tmp_path / "grid.txt"
    path.write_text("# alpha sweep\nalpha=exp:0.9\nalpha=const:0.5 beta=sig:100\n\n")
    points = parse_grid(path)
    assert len(points) == 2
    assert points[0][1] is None
    assert points[1][1] is not None


def test_parse_grid_reports_line(tmp_path):
    path = tmp_path / "grid.txt"
    path.write_text("alpha=exp:0.9\nbeta=const:1\n")
    with pytest.raises(ParseError) as info:
        parse_grid(path)
    assert info.value.line_number == 2


def test_empty_sweep_is_header_only(tmp_path):
    assert make_trainer(tmp_path).sweep("DAGGER", []) == [SWEEP_HEADER]


def test_sweep_writes_one_row_per_point(tmp_path):
    trainer = make_trainer(tmp_path, max_iterations=2)
    trainer.pretrain()
    grid_file = tmp_path / "grid.txt"
    grid_file.write_text("alpha=exp:0.9\nalpha=exp:0.99\nalpha=const:0.5\nalpha=const:0.5\n")
    output = tmp_path / "sweep.csv"
    lines = trainer.sweep("DAGGER", parse_grid(grid_file), output)

    assert lines[0] == SWEEP_HEADER
    assert len(lines) == 5
    assert lines[1].startswith("exp:0.9,const:1,0.9,")
    assert lines[3].startswith("const:0.5,const:1,,")
    assert output.read_text().splitlines() == lines
    assert (tmp_path / "runs" / "sweep-dagger-3.ckpt").exists()


def test_sweep_keeps_every_digit_of_the_schedule(tmp_path):
    trainer = make_trainer(tmp_path, max_iterations=1, eval_every=1)
    trainer.pretrain()
    grid = [(parse_schedule("exp:0.9999995"), None), (parse_schedule("exp:0.99999949"), None)]
    lines = trainer.sweep("DAGGER", grid)

    assert lines[1].startswith("exp:0.9999995,const:1,0.9999995,")
    assert lines[2].startswith("exp:0.99999949,const:1,0.99999949,")
    alphas = [run.config["alpha"] for run in trainer.runs.list_runs(limit=10) if run.phase == "finetune"]
    assert sorted(alphas) == ["exp:0.99999949", "exp:0.9999995"]
    for text in alphas:
        assert parse_schedule(text).k == float(text.split(":")[1])


def test_preset_slug():
    assert preset_slug("DAGGER*") == "dagger-star"
    assert preset_slug("REINFORCE-SIO") == "reinforce-sio"


# --- configuration ---

def test_config_precedence(tmp_path):
    path = tmp_path / "lab.conf"
    path.write_text("workers = 2  # threads\nseed=11\n")
    environ = {"SEQ2SEQ_LAB_WORKERS": "3"}
    assert build_config(None, {}, environ).workers == 3
    assert build_config(path, {}, environ).workers == 2
    assert build_config(path, {"workers": 4}, environ).workers == 4
    assert build_config(path, {"workers": None}, environ).seed == 11


def test_config_file_names_bad_line(tmp_path):
    path = tmp_path / "lab.conf"
    path.write_text("seed=1\nlearning_speed=2\n")
    with pytest.raises(ConfigurationError) as info:
        read_config_file(path)
    assert "line 2" in str(info.value)


def test_coerce_types():
    assert coerce("length_norm", "yes") is True
    assert coerce("max_iterations", "none") is None
    assert coerce("finetune_lr", "1e-4") == pytest.approx(1e-4)
    with pytest.raises(ConfigurationError):
        coerce("seed", "seven")


def test_config_validation():
    with pytest.raises(ConfigurationError):
        TrainConfig(preset="PPO").validate()
    with pytest.raises(ConfigurationError):
        TrainConfig(alpha="exp:2").validate()
    assert TrainConfig(phase="finetune").resolved_eval_every == 10
    assert TrainConfig().resolved_iterations == 3000


def test_activity_log_keeps_last_entries(tmp_path):
    log = ActivityLog(tmp_path / "activity.log", quiet=True)
    for i in range(MAX_ENTRIES + 50):
        log.activity("VALIDATION", f"entry {i}", run_id="abc")
    entries = log.entries()
    assert len(entries) == MAX_ENTRIES
    assert entries[-1].endswith("entry 149")
    assert "[VALIDATION] [ID: abc]" in entries[0]


def test_run_store_round_trip(tmp_path):
    store = RunStore(tmp_path / "runs.db")
    run_id = store.create_run("pretrain", "MLE", {"seed": 7})
    assert store.get_run(run_id).status == "queued"
    assert store.get_run(run_id).config == {"seed": 7}
    assert store.get_run("missing") is None
    assert store.status_counts() == {"queued": 1}


# --- command line ---

def test_cli_synth(tmp_path):
    output = tmp_path / "pairs.tsv"
    assert main(["synth", "--task", "reverse", "--size", "5", "--output", str(output)]) == 0
    lines = output.read_text().splitlines()
    assert len(lines) == 5
    source, target = lines[0].split("\t")
    assert target.split() == source.split()[::-1]


def test_cli_curve(tmp_path):
    output = tmp_path / "curve.csv"
    assert main(["curve", "--schedule", "exp:0.5", "--iterations", "2", "--step", "1",
                 "--output", str(output)]) == 0
    assert output.read_text().splitlines() == ["iteration,rate", "0,1.000000", "1,0.500000", "2,0.250000"]


def test_cli_bad_schedule_exits_2(tmp_path):
    assert main(["curve", "--schedule", "lin:1"]) == 2


def test_cli_runs_lists_nothing(tmp_path, capsys):
    assert main(["runs", "--db", str(tmp_path / "runs.db")]) == 0
    assert capsys.readouterr().out == ""


def test_cli_finetune_without_checkpoint_exits_2(tmp_path, capsys):
    code = main(["finetune", "--preset", "DAGGER", "--run-dir", str(tmp_path / "runs"),
                 "--db", str(tmp_path / "runs.db"), "--log", str(tmp_path / "activity.log"),
                 "--hidden-dim", "4", "--emb-dim", "3"])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_cli_gradcheck_passes():
    assert main(["gradcheck", "--max-entries", "3"]) == 0


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
