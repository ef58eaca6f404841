"""Offline training loop: synthetic pair sampling, label building from the
current proposals, loss computation, and SGD with backbone freezing.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import losses
from .autograd import Tensor
from .checkpoint import save_checkpoint
from .config import to_dict
from .errors import TrainingError
from .labels import build_batch_labels
from .optim import SGD, clip_grad_norm
from .patches import normalize_patch
from .synthetic import generate_pair, random_scene


def learning_rate(schedule, epoch):
    """Log-space interpolation from lr_start at epoch 0 to lr_end at the last."""
    if schedule.total_epochs <= 1 or schedule.lr_start == schedule.lr_end:
        return schedule.lr_start
    frac = epoch / (schedule.total_epochs - 1)
    return schedule.lr_start * (schedule.lr_end / schedule.lr_start) ** frac


@dataclass
class TrainResult:
    history: list           # rows of (step, apn, cls, loc, total, lr)
    checkpoint_path: object
    initial_loss: float
    final_loss: float
    steps_run: int
    degenerate_batches: int


class Trainer:
    """Drives SGD over synthetic pairs or a fixed pair list.

    During the freeze phase only non-backbone parameters are updated.
    Labels for the refinement stage are rebuilt every step from the
    current proposal map, with gradients stopped through the proposals.
    """

    def __init__(self, network, run_cfg, pairs=None, out_dir=None):
        self.network = network
        self.cfg = run_cfg
        self.pairs = pairs
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.geom = network.grid_geometry()
        sch = run_cfg.schedule
        self.optimizer = SGD(network.named_parameters(), lr=sch.lr_start,
                             momentum=sch.momentum)
        self.rng = np.random.default_rng(sch.seed)
        self.scenes = None
        if pairs is None:
            self.scenes = [random_scene(self.rng, run_cfg.data)
                           for _ in range(run_cfg.data.num_scenes)]

    def _sample_batch(self, size):
        if self.pairs is not None:
            idx = self.rng.integers(0, len(self.pairs), size)
            return [self.pairs[k] for k in idx]
        batch = []
        data_cfg = self.cfg.data
        model_cfg = self.cfg.model
        while len(batch) < size:
            scene = self.scenes[self.rng.integers(0, len(self.scenes))]
            t = int(self.rng.integers(0, 40))
            gap = int(self.rng.integers(0, data_cfg.max_frame_gap + 1))
            batch.append(generate_pair(
                scene, frame_gap=gap, t=t,
                center_jitter=data_cfg.center_jitter,
                template_size=model_cfg.template_size,
                search_size=model_cfg.search_size,
                rng=self.rng,
            ))
        return batch

    def _step_losses(self, batch):
        templates = Tensor(normalize_patch(np.stack([p.template for p in batch])))
        searches = Tensor(normalize_patch(np.stack([p.search for p in batch])))
        out = self.network.full_forward(templates, searches)

        labels = build_batch_labels(self.geom, out.anchor_map.data,
                                    [p.gt for p in batch], self.cfg.labels)
        weights = self.cfg.loss
        l_apn, deg_a = losses.apn_loss(out.anchor_map, labels["apn_targets"],
                                       labels["quality_mask"])
        l_cls, deg_c = losses.classification_loss(
            out.cls1, out.cls2, out.cls3,
            labels["cls1"], labels["cls2"], labels["cls3"], weights)
        gt_corners = np.stack([p.gt.as_array() for p in batch])
        l_loc, deg_l = losses.regression_loss(
            out.loc, labels["anchors"], gt_corners,
            labels["refine_targets"], labels["cls1"], weights)
        total = losses.total_loss(l_apn, l_cls, l_loc, weights)
        return total, (l_apn, l_cls, l_loc), (deg_a or deg_c or deg_l)

    def _dump_failure(self, batch, step):
        if self.out_dir is None:
            return None
        self.out_dir.mkdir(parents=True, exist_ok=True)
        dump = self.out_dir / f"failed_batch_step{step}.npz"
        np.savez(dump,
                 templates=np.stack([p.template for p in batch]),
                 searches=np.stack([p.search for p in batch]),
                 gts=np.stack([p.gt.as_array() for p in batch]))
        ckpt = self.out_dir / f"failed_model_step{step}.ckpt"
        save_checkpoint(ckpt, self.network.state_dict(), to_dict(self.cfg))
        return dump

    def run(self, max_steps=None, stop_loss_ratio=None, progress=None):
        """Train per the schedule; optionally stop early on max_steps or when
        the step loss falls below stop_loss_ratio times the initial loss."""
        sch = self.cfg.schedule
        history = []
        degenerate = 0
        initial = None
        step = 0
        checkpoint_path = None
        done = False
        for epoch in range(sch.total_epochs):
            lr = learning_rate(sch, epoch)
            frozen = epoch < sch.freeze_epochs
            include = (lambda name: not name.startswith("backbone.")) if frozen else None
            for _ in range(sch.steps_per_epoch):
                batch = self._sample_batch(sch.batch_size)
                try:
                    total, parts, deg = self._step_losses(batch)
                    self.optimizer.zero_grad()
                    total.backward()
                    clip_grad_norm(self.optimizer.named_params, sch.clip_grad)
                    self.optimizer.step(lr=lr, include=include)
                except (ValueError, FloatingPointError, TrainingError) as exc:
                    dump = self._dump_failure(batch, step)
                    raise TrainingError(
                        f"training halted at step {step}: {exc}"
                        + (f" (batch dumped to {dump})" if dump else "")
                    ) from exc
                degenerate += int(deg)
                values = [p.item() for p in parts]
                history.append((step, *values, total.item(), lr))
                if initial is None:
                    initial = total.item()
                if progress is not None:
                    progress(step, total.item(), lr)
                step += 1
                if max_steps is not None and step >= max_steps:
                    done = True
                if stop_loss_ratio is not None and total.item() < stop_loss_ratio * initial:
                    done = True
                if done:
                    break
            if self.out_dir is not None and sch.checkpoint_every > 0 \
                    and (epoch + 1) % sch.checkpoint_every == 0:
                path = self.out_dir / f"model_epoch{epoch + 1}.ckpt"
                self.out_dir.mkdir(parents=True, exist_ok=True)
                save_checkpoint(path, self.network.state_dict(), to_dict(self.cfg))
            if done:
                break

        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            checkpoint_path = self.out_dir / "model.ckpt"
            save_checkpoint(checkpoint_path, self.network.state_dict(), to_dict(self.cfg))
            self.write_history(self.out_dir / "loss_history.csv", history)

        return TrainResult(
            history=history,
            checkpoint_path=checkpoint_path,
            initial_loss=initial if initial is not None else 0.0,
            final_loss=history[-1][4] if history else 0.0,
            steps_run=step,
            degenerate_batches=degenerate,
        )

    @staticmethod
    def write_history(path, history):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "loss_apn", "loss_cls", "loss_loc",
                             "loss_total", "lr"])
            for step, apn, cls, loc, total, lr in history:
                writer.writerow([step, f"{apn:.9f}", f"{cls:.9f}", f"{loc:.9f}",
                                 f"{total:.9f}", f"{lr:.12f}"])
