"""
Training the toy models
=======================

Two synthetic tasks check that the blocks learn what they are supposed to:

* chunk-parity: a position-specific texture in one patch row, sign in each
  half sets one of 4 classes;
* frame-order: a patch jumps left or right halfway through the clip. Clips
  of the two classes are time reversals of each other, so without the
  temporal pathway the model is at chance.
"""

# %%
import pathlib
from dataclasses import replace

import numpy as np

from morphmlp import build_model
from morphmlp.config import load_config
from morphmlp.optim import AdamW, Schedule
from morphmlp.train import evaluate, tail_accuracy, train_loop

CONFIGS = pathlib.Path(__file__).resolve().parents[1] / "configs"


def run(name, steps=300):
    cfg = load_config(CONFIGS / name)
    model = build_model(cfg.model, seed=cfg.train.seed)
    opt = AdamW(model.named_parameters(), lr=cfg.train.lr, weight_decay=cfg.train.weight_decay)
    sched = Schedule(cfg.train.lr, steps, cfg.train.warmup)
    log = train_loop(model, cfg.data, opt, sched, steps, seed=cfg.train.seed)
    return log, evaluate(model, replace(cfg.data, split="val"))


# %%
for name in ("toy_image.cfg", "toy_video.cfg", "toy_video_no_temporal.cfg"):
    log, val = run(name)
    losses = [r.loss for r in log]
    print(f"{name:<28} loss {np.median(losses[:100]):.3f} -> {np.median(losses[200:]):.3f}  "
          f"train acc {tail_accuracy(log):.3f}  val acc {val:.3f}")
